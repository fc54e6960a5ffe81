//! Geometry of the idealized integral-imaging light-field display: central
//! depth plane, viewpoint (subaperture) layout inside the eye pupil, and the
//! retinal shifts of elemental images rendered away from the CDP.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Display-side parameters of one simulated viewing condition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DisplayConfig {
    /// Central depth plane vergence in dioptres (> 0).
    pub z_cdp_d: f64,
    /// Viewpoint density: a k x k grid of subapertures; k = 1 is natural
    /// view through the open pupil.
    pub density: u32,
    /// Eye pupil diameter in millimetres.
    pub pupil_diameter_mm: f64,
    /// Rendered image depths relative to the CDP, in dioptres.
    pub rendered_depths_rel_d: Vec<f64>,
}

impl DisplayConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.z_cdp_d > 0.0) || !self.z_cdp_d.is_finite() {
            return Err(Error::domain(format!(
                "CDP vergence must be positive, got {} D",
                self.z_cdp_d
            )));
        }
        if self.density < 1 {
            return Err(Error::domain("viewpoint density must be >= 1"));
        }
        if !(self.pupil_diameter_mm > 0.0) || !self.pupil_diameter_mm.is_finite() {
            return Err(Error::domain(format!(
                "pupil diameter must be positive, got {} mm",
                self.pupil_diameter_mm
            )));
        }
        for &rel in &self.rendered_depths_rel_d {
            if self.z_cdp_d + rel < -1e-12 {
                return Err(Error::domain(format!(
                    "rendered depth {rel} D relative to a {} D CDP lies beyond infinity",
                    self.z_cdp_d
                )));
            }
        }
        Ok(())
    }

    /// CDP distance in metres.
    pub fn z_cdp_m(&self) -> f64 {
        1.0 / self.z_cdp_d
    }

    /// Distance in metres of a rendered depth given relative to the CDP.
    /// A relative depth that lands exactly on zero vergence is at infinity.
    pub fn rendered_depth_m(&self, rel_d: f64) -> f64 {
        let vergence = self.z_cdp_d + rel_d;
        if vergence <= 0.0 {
            f64::INFINITY
        } else {
            1.0 / vergence
        }
    }
}

/// Positions and size of the k x k circular subapertures inside the pupil.
#[derive(Debug, Clone, PartialEq)]
pub struct SubapertureLayout {
    /// Centres `(p, q)` in millimetres from the pupil centre.
    pub centers_mm: Vec<(f64, f64)>,
    /// Subaperture diameter in millimetres.
    pub diameter_mm: f64,
}

impl SubapertureLayout {
    pub fn count(&self) -> usize {
        self.centers_mm.len()
    }
}

/// Lays out k x k circles of diameter `d_p / k` tangential to each other on a
/// square grid centred on the pupil, so their union exactly spans the pupil
/// along each axis.
pub fn subaperture_layout(density: u32, pupil_diameter_mm: f64) -> Result<SubapertureLayout> {
    if density < 1 {
        return Err(Error::domain("viewpoint density must be >= 1"));
    }
    if !(pupil_diameter_mm > 0.0) {
        return Err(Error::domain("pupil diameter must be positive"));
    }
    let k = density as usize;
    let d_s = pupil_diameter_mm / density as f64;
    let mut centers = Vec::with_capacity(k * k);
    // Row-major, top row first in q: deterministic ordering for reports.
    for iq in 0..k {
        for ip in 0..k {
            let p = (ip as f64 - (k as f64 - 1.0) / 2.0) * d_s;
            let q = (iq as f64 - (k as f64 - 1.0) / 2.0) * d_s;
            centers.push((p, q));
        }
    }
    Ok(SubapertureLayout { centers_mm: centers, diameter_mm: d_s })
}

/// Positional interval of subapertures in the pupil produced by viewpoint
/// spacing `delta_uv_mm` on a screen at `z_m_m`, converged at `z_r_m`:
/// `|z_r / (z_r - z_m)|` times the screen-side interval.
pub fn subaperture_interval(
    delta_uv_mm: (f64, f64),
    z_r_m: f64,
    z_m_m: f64,
) -> Result<(f64, f64)> {
    let denom = z_r_m - z_m_m;
    if denom == 0.0 {
        return Err(Error::domain(
            "reconstruction and screen planes coincide; interval scaling is degenerate",
        ));
    }
    let factor = (z_r_m / denom).abs();
    Ok((factor * delta_uv_mm.0, factor * delta_uv_mm.1))
}

/// Retinal displacement (metres) of the elemental image seen through the
/// subaperture centred at `center_mm` when the rendered depth `z_r` departs
/// from the CDP: `z_eye * (1/z_r - 1/z_cdp) * [p, q]`.
pub fn epsf_shift(
    z_r_m: f64,
    z_cdp_m: f64,
    z_eye_m: f64,
    center_mm: (f64, f64),
) -> (f64, f64) {
    let defocus_d = 1.0 / z_r_m - 1.0 / z_cdp_m;
    let scale = z_eye_m * defocus_d * 1e-3; // centre given in mm
    (scale * center_mm.0, scale * center_mm.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn layout_matches_hand_geometry() {
        let one = subaperture_layout(1, 3.0).unwrap();
        assert_eq!(one.centers_mm, vec![(0.0, 0.0)]);
        assert_relative_eq!(one.diameter_mm, 3.0);

        let three = subaperture_layout(3, 3.0).unwrap();
        assert_eq!(three.count(), 9);
        assert_relative_eq!(three.diameter_mm, 1.0);
        for target in [
            (-1.0, -1.0),
            (0.0, -1.0),
            (1.0, -1.0),
            (-1.0, 0.0),
            (0.0, 0.0),
            (1.0, 0.0),
            (-1.0, 1.0),
            (0.0, 1.0),
            (1.0, 1.0),
        ] {
            assert!(
                three
                    .centers_mm
                    .iter()
                    .any(|c| (c.0 - target.0).abs() < 1e-12 && (c.1 - target.1).abs() < 1e-12),
                "missing centre {target:?}"
            );
        }

        let two = subaperture_layout(2, 3.0).unwrap();
        assert_relative_eq!(two.diameter_mm, 1.5);
        for c in &two.centers_mm {
            assert_relative_eq!(c.0.abs(), 0.75);
            assert_relative_eq!(c.1.abs(), 0.75);
        }
    }

    #[test]
    fn layout_is_symmetric_and_inside_pupil() {
        for k in 1..=4u32 {
            let layout = subaperture_layout(k, 3.0).unwrap();
            for &(p, q) in &layout.centers_mm {
                // point reflection and axis swap stay in the set
                assert!(layout
                    .centers_mm
                    .iter()
                    .any(|c| (c.0 + p).abs() < 1e-12 && (c.1 + q).abs() < 1e-12));
                assert!(layout
                    .centers_mm
                    .iter()
                    .any(|c| (c.0 - q).abs() < 1e-12 && (c.1 - p).abs() < 1e-12));
                // Tangent to the pupil along each axis; corner elements may
                // overhang diagonally and are clipped by the pupil indicator.
                assert!(p.abs() + layout.diameter_mm / 2.0 <= 1.5 + 1e-9);
                assert!(q.abs() + layout.diameter_mm / 2.0 <= 1.5 + 1e-9);
            }
            // tangential packing: nearest neighbour at exactly one diameter
            if k > 1 {
                for (i, a) in layout.centers_mm.iter().enumerate() {
                    let nearest = layout
                        .centers_mm
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| *j != i)
                        .map(|(_, b)| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt())
                        .fold(f64::INFINITY, f64::min);
                    assert_relative_eq!(nearest, layout.diameter_mm, epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn interval_scaling_matches_hand_values() {
        let (dp, dq) = subaperture_interval((0.5, 0.5), 0.5, 0.25).unwrap();
        assert_relative_eq!(dp, 1.0, epsilon = 1e-12);
        assert_relative_eq!(dq, 1.0, epsilon = 1e-12);
        // factor shrinks toward zero as the screen recedes
        let (far, _) = subaperture_interval((0.5, 0.5), 0.5, 1e9).unwrap();
        assert!(far < 1e-9);
        assert!(subaperture_interval((0.5, 0.5), 0.5, 0.5).is_err());
    }

    #[test]
    fn epsf_shift_matches_hand_values() {
        // 1 D of depth mismatch, 16.67-mm eye, 0.75-mm subaperture offset.
        let z_r = 1.0 / 3.0; // 3 D
        let z_cdp = 0.5; // 2 D
        let (dx, dy) = epsf_shift(z_r, z_cdp, 16.67e-3, (0.75, 0.0));
        assert_relative_eq!(dx, 12.5025e-6, epsilon = 1e-9);
        assert_relative_eq!(dy, 0.0);
        let (zx, zy) = epsf_shift(0.5, 0.5, 16.67e-3, (0.75, 0.75));
        assert_eq!((zx, zy), (0.0, 0.0));
        let (cx, cy) = epsf_shift(z_r, z_cdp, 16.67e-3, (0.0, 0.0));
        assert_eq!((cx, cy), (0.0, 0.0));
    }

    #[test]
    fn epsf_shift_is_linear() {
        let z_eye = 16.67e-3;
        let (a, _) = epsf_shift(1.0 / 3.0, 0.5, z_eye, (0.75, 0.0));
        let (b, _) = epsf_shift(1.0 / 4.0, 0.5, z_eye, (0.75, 0.0));
        assert_relative_eq!(b, 2.0 * a, epsilon = 1e-12);
        let (c, _) = epsf_shift(1.0 / 3.0, 0.5, z_eye, (1.5, 0.0));
        assert_relative_eq!(c, 2.0 * a, epsilon = 1e-12);
    }

    #[test]
    fn display_config_validation() {
        let good = DisplayConfig {
            z_cdp_d: 2.0,
            density: 2,
            pupil_diameter_mm: 3.0,
            rendered_depths_rel_d: vec![-2.0, 0.0, 2.0],
        };
        assert!(good.validate().is_ok());
        assert_relative_eq!(good.z_cdp_m(), 0.5);
        assert_relative_eq!(good.rendered_depth_m(2.0), 0.25);
        assert_eq!(good.rendered_depth_m(-2.0), f64::INFINITY);

        let bad = DisplayConfig { rendered_depths_rel_d: vec![-2.5], ..good.clone() };
        assert!(bad.validate().is_err());
    }
}

//! Image-quality metrics: the neural contrast sensitivity function (NCSF),
//! the visual Strehl ratio computed on the OTF (VSOTF), the plain Strehl
//! ratio, orientation-averaged radial MTF, and threshold cut-off frequency.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ComplexField, Plane};
use crate::wave::RetinalPSF;

/// Parameters of the neural contrast sensitivity model: a truncated
/// log-parabola over radial frequency (Watson & Ahumada family) with an
/// oblique-effect attenuation that grows linearly between two corner
/// frequencies. Treated as opaque data so alternative fits can be swapped in
/// via the JSON asset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NcsfParams {
    /// Peak contrast sensitivity (gain at `peak_frequency_cpd`).
    pub peak_gain: f64,
    /// Frequency of peak sensitivity, cycles/degree.
    pub peak_frequency_cpd: f64,
    /// Width of the log10-parabola (log10 units of frequency).
    pub log_parabola_sigma: f64,
    /// Low-frequency sensitivity floor as a fraction of the peak gain; the
    /// parabola is truncated below the peak at this plateau.
    pub low_frequency_plateau: f64,
    /// Maximum fractional attenuation at 45 degrees (0 disables the oblique
    /// effect, 1 extinguishes diagonal gratings at high frequency).
    pub oblique_max_attenuation: f64,
    /// Radial frequency where oblique attenuation starts.
    pub oblique_corner_cpd: f64,
    /// Radial frequency where oblique attenuation saturates.
    pub oblique_full_cpd: f64,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
}

impl NcsfParams {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.peak_gain > 0.0) || !self.peak_gain.is_finite() {
            problems.push(format!("peak_gain must be positive, got {}", self.peak_gain));
        }
        if !(self.peak_frequency_cpd > 0.0) || !self.peak_frequency_cpd.is_finite() {
            problems.push(format!(
                "peak_frequency_cpd must be positive, got {}",
                self.peak_frequency_cpd
            ));
        }
        if !(self.log_parabola_sigma > 0.0) || !self.log_parabola_sigma.is_finite() {
            problems.push(format!(
                "log_parabola_sigma must be positive, got {}",
                self.log_parabola_sigma
            ));
        }
        if !(0.0..=1.0).contains(&self.low_frequency_plateau) {
            problems.push(format!(
                "low_frequency_plateau must be in [0, 1], got {}",
                self.low_frequency_plateau
            ));
        }
        if !(0.0..=1.0).contains(&self.oblique_max_attenuation) {
            problems.push(format!(
                "oblique_max_attenuation must be in [0, 1], got {}",
                self.oblique_max_attenuation
            ));
        }
        if !(self.oblique_corner_cpd >= 0.0) || !(self.oblique_full_cpd > self.oblique_corner_cpd)
        {
            problems.push(format!(
                "oblique corner/full frequencies must satisfy 0 <= corner < full, got {} / {}",
                self.oblique_corner_cpd, self.oblique_full_cpd
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let params: NcsfParams = serde_json::from_str(text)?;
        params.validate()?;
        Ok(params)
    }

    /// Parameters bundled with the library.
    pub fn bundled() -> Self {
        Self::from_json_str(include_str!("../assets/ncsf_default.json"))
            .expect("bundled NCSF parameters are valid")
    }
}

/// Neural contrast sensitivity at a 2-D frequency (cycles/degree).
///
/// Radially a log-parabola peaked at `peak_frequency_cpd`, truncated to a
/// plateau below the peak; azimuthally attenuated by the oblique effect,
/// which is zero on the cardinal axes and maximal at 45 degrees.
pub fn ncsf(fx_cpd: f64, fy_cpd: f64, params: &NcsfParams) -> f64 {
    let g = params.peak_gain;
    let floor = g * params.low_frequency_plateau;
    let f = fx_cpd.hypot(fy_cpd);
    if f == 0.0 {
        return floor;
    }
    let log_ratio = (f / params.peak_frequency_cpd).log10();
    let parabola =
        g * 10.0_f64.powf(-log_ratio * log_ratio / (2.0 * params.log_parabola_sigma.powi(2)));
    let radial = if f < params.peak_frequency_cpd { parabola.max(floor) } else { parabola };

    // sin^2(2 theta): 0 on the axes, 1 on the diagonals.
    let diag = (2.0 * fx_cpd * fy_cpd / (f * f)).powi(2);
    let ramp = ((f - params.oblique_corner_cpd)
        / (params.oblique_full_cpd - params.oblique_corner_cpd))
        .clamp(0.0, 1.0);
    radial * (1.0 - params.oblique_max_attenuation * ramp * diag)
}

fn check_frequency_grids(a: &ComplexField, b: &ComplexField) -> Result<()> {
    if a.plane() != Plane::Frequency || b.plane() != Plane::Frequency {
        return Err(Error::grid("VSOTF operands must be frequency-plane fields"));
    }
    if !a.same_grid(b) {
        return Err(Error::grid(format!(
            "OTF grids differ: {} px at {} cpd vs {} px at {} cpd",
            a.n(),
            a.pitch(),
            b.n(),
            b.pitch()
        )));
    }
    Ok(())
}

/// Visual Strehl ratio on the OTF: the NCSF-weighted integral of the real
/// part of the OTF, relative to the same integral for the reference OTF.
/// Callers should pass centroid-centred OTFs; a residual displacement leaks
/// into the real part as a phase ramp and reads as contrast loss.
pub fn vsotf(otf: &ComplexField, otf_dl: &ComplexField, params: &NcsfParams) -> Result<f64> {
    check_frequency_grids(otf, otf_dl)?;
    let weights = ncsf_weight_map(otf.n(), otf.pitch(), params);
    let den = weighted_real_volume(otf_dl, &weights);
    if den == 0.0 {
        return Err(Error::domain("reference OTF has zero weighted volume"));
    }
    Ok(weighted_real_volume(otf, &weights) / den)
}

/// NCSF sampled on the centred frequency grid of an `n`-point OTF with the
/// given frequency pitch. Through-focus sweeps evaluate many OTFs on one
/// grid, so the map is computed once and reused.
pub(crate) fn ncsf_weight_map(
    n: usize,
    pitch_cpd: f64,
    params: &NcsfParams,
) -> ndarray::Array2<f64> {
    let half = (n / 2) as isize;
    ndarray::Array2::from_shape_fn((n, n), |(r, c)| {
        let fy = (r as isize - half) as f64 * pitch_cpd;
        let fx = (c as isize - half) as f64 * pitch_cpd;
        ncsf(fx, fy, params)
    })
}

/// Weighted sum of the real part of a frequency-plane field.
pub(crate) fn weighted_real_volume(otf: &ComplexField, weights: &ndarray::Array2<f64>) -> f64 {
    otf.values().iter().zip(weights.iter()).map(|(v, w)| w * v.re).sum()
}

/// Strehl ratio: peak of the PSF relative to the reference peak. Both PSFs
/// are unit-energy by construction, so no further normalization applies.
pub fn strehl(psf: &RetinalPSF, psf_dl: &RetinalPSF) -> Result<f64> {
    if !psf.field().same_grid(psf_dl.field()) {
        return Err(Error::grid(format!(
            "PSF grids differ: {} px at {} um vs {} px at {} um",
            psf.field().n(),
            psf.field().pitch(),
            psf_dl.field().n(),
            psf_dl.field().pitch()
        )));
    }
    Ok(psf.field().max_value() / psf_dl.field().max_value())
}

/// Orientation-averaged MTF: `|OTF|` accumulated into one-pixel-wide annular
/// bins out to the grid Nyquist frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialMtf {
    pub frequencies_cpd: Vec<f64>,
    pub gains: Vec<f64>,
}

impl RadialMtf {
    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }

    pub fn nyquist_cpd(&self) -> f64 {
        *self.frequencies_cpd.last().expect("radial MTF is never empty")
    }
}

/// Collapses a DC-normalized OTF to a radial gain curve by averaging `|OTF|`
/// over every annulus one frequency pixel wide. Bins are centred at integer
/// multiples of the frequency pitch; pixels beyond the Nyquist radius (grid
/// corners) are dropped.
pub fn radial_mtf(otf: &ComplexField) -> RadialMtf {
    let n = otf.n();
    let half = (n / 2) as f64;
    let bins = n / 2 + 1;
    let mut sums = vec![0.0; bins];
    let mut counts = vec![0usize; bins];
    for ((r, c), v) in otf.values().indexed_iter() {
        let dr = r as f64 - half;
        let dc = c as f64 - half;
        let radius = dr.hypot(dc);
        let bin = radius.round() as usize;
        if bin < bins {
            sums[bin] += v.norm();
            counts[bin] += 1;
        }
    }
    let gains: Vec<f64> =
        sums.iter().zip(&counts).map(|(s, &k)| if k > 0 { s / k as f64 } else { 0.0 }).collect();
    let frequencies_cpd = (0..bins).map(|k| k as f64 * otf.pitch()).collect();
    RadialMtf { frequencies_cpd, gains }
}

/// Frequency at which a radial MTF falls to `threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub frequency_cpd: f64,
    /// The curve never crossed the threshold; the reported frequency is the
    /// grid Nyquist and understates the true cut-off.
    pub saturated: bool,
}

/// Lowest frequency where the gain first drops below `threshold` and stays
/// below it for the following two bins (debouncing ripples of spurious
/// resolution), linearly interpolated between the bracketing bins. A curve
/// that never crosses saturates at the Nyquist frequency.
pub fn cutoff_frequency(curve: &RadialMtf, threshold: f64) -> Result<Cutoff> {
    if curve.is_empty() || curve.frequencies_cpd.len() != curve.gains.len() {
        return Err(Error::domain("radial MTF curve is empty or inconsistent"));
    }
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::domain(format!("threshold must be in (0, 1], got {threshold}")));
    }
    let g = &curve.gains;
    let below = |i: usize| i >= g.len() || g[i] < threshold;
    for i in 1..g.len() {
        if below(i) && below(i + 1) && below(i + 2) {
            let f0 = curve.frequencies_cpd[i - 1];
            let f1 = curve.frequencies_cpd[i];
            let t = (g[i - 1] - threshold) / (g[i - 1] - g[i]);
            return Ok(Cutoff { frequency_cpd: f0 + t * (f1 - f0), saturated: false });
        }
    }
    Ok(Cutoff { frequency_cpd: curve.nyquist_cpd(), saturated: true })
}

/// Analytic MTF of an ideal circular aperture for incoherent light, as a
/// function of frequency normalized to the cut-off `d / (lambda z)`.
pub fn analytic_circular_mtf(normalized_frequency: f64) -> f64 {
    let v = normalized_frequency.abs();
    if v >= 1.0 {
        return 0.0;
    }
    2.0 / std::f64::consts::PI * (v.acos() - v * (1.0 - v * v).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::display::DisplayConfig;
    use crate::eye::{AccommodationState, EyeInstance, SaMode, SceProfile, DEFAULT_Z_EYE_M};
    use crate::field::RealField;
    use crate::wave::{
        centered_otf, dl_reference_psf, otf, retinal_psf, retina_um_per_degree, RetinalGridSpec,
        Spectrum,
    };
    use crate::zernike::ZernikeCoefficients;
    use approx::assert_relative_eq;
    use ndarray::Array2;

    fn params() -> NcsfParams {
        NcsfParams::bundled()
    }

    fn grid_256() -> RetinalGridSpec {
        RetinalGridSpec { samples: 256, pitch_um: 1.0 }
    }

    fn open_display() -> DisplayConfig {
        DisplayConfig {
            z_cdp_d: 2.0,
            density: 1,
            pupil_diameter_mm: 3.0,
            rendered_depths_rel_d: vec![0.0],
        }
    }

    fn dl_psf_mono() -> crate::wave::RetinalPSF {
        dl_reference_psf(
            &open_display(),
            &Spectrum::single(550.0),
            &grid_256(),
            SaMode::Off,
            &SceProfile::Constant(0.0),
            DEFAULT_Z_EYE_M,
        )
        .unwrap()
    }

    #[test]
    fn ncsf_shape_and_symmetries() {
        let p = params();
        let dc = ncsf(0.0, 0.0, &p);
        assert!(dc.is_finite() && dc > 0.0 && dc <= p.peak_gain);

        // Band-pass along the cardinal axis: rises to the peak, then falls.
        let at_peak = ncsf(p.peak_frequency_cpd, 0.0, &p);
        assert_relative_eq!(at_peak, p.peak_gain, epsilon = 1e-12);
        assert!(dc < at_peak);
        assert!(ncsf(30.0, 0.0, &p) < at_peak);
        assert!(ncsf(60.0, 0.0, &p) < ncsf(30.0, 0.0, &p));

        for (fx, fy) in [(3.0, 1.0), (10.0, 25.0), (0.5, 0.2), (40.0, 0.0)] {
            let v = ncsf(fx, fy, &p);
            assert_relative_eq!(v, ncsf(-fx, fy, &p), epsilon = 1e-12);
            assert_relative_eq!(v, ncsf(fx, -fy, &p), epsilon = 1e-12);
            assert_relative_eq!(v, ncsf(fy, fx, &p), epsilon = 1e-12);
            assert!(v >= 0.0);
        }

        // Oblique effect at 30 cpd radial: diagonal below cardinal.
        let r = 30.0;
        let s = r / 2.0_f64.sqrt();
        assert!(ncsf(s, s, &p) < ncsf(r, 0.0, &p));
    }

    #[test]
    fn vsotf_identities() {
        let psf = dl_psf_mono();
        let reference = centered_otf(&psf);
        let p = params();
        assert_relative_eq!(vsotf(&reference, &reference, &p).unwrap(), 1.0, epsilon = 1e-12);

        let mut halved = reference.clone();
        for v in halved.values_mut().iter_mut() {
            *v *= 0.5;
        }
        assert_relative_eq!(vsotf(&halved, &reference, &p).unwrap(), 0.5, epsilon = 1e-12);

        let n = reference.n();
        let small = ComplexField::new(
            Array2::zeros((n / 2, n / 2)),
            reference.pitch(),
            Plane::Frequency,
            None,
        )
        .unwrap();
        assert!(vsotf(&small, &reference, &p).is_err());
    }

    #[test]
    fn vsotf_is_centring_invariant() {
        // Integer-pixel displacement of the PSF must not change VSOTF when
        // both sides go through centroid centring.
        let psf = dl_psf_mono();
        let n = psf.field().n();
        let mut moved = Array2::zeros((n, n));
        for ((r, c), &v) in psf.field().values().indexed_iter() {
            moved[[(r + 9) % n, (c + 252) % n]] = v;
        }
        let moved = RealField::new(moved, psf.field().pitch(), Plane::Retina, None).unwrap();
        let moved =
            crate::wave::RetinalPSF::from_field(moved, *psf.accommodation(), psf.z_eye_m())
                .unwrap();
        let p = params();
        let reference = centered_otf(&psf);
        let a = vsotf(&centered_otf(&psf), &reference, &p).unwrap();
        let b = vsotf(&centered_otf(&moved), &reference, &p).unwrap();
        assert!((a - b).abs() <= 1e-6, "vsotf changed under displacement: {a} vs {b}");
    }

    #[test]
    fn strehl_identities_and_defocus() {
        let sharp = dl_psf_mono();
        assert_relative_eq!(strehl(&sharp, &sharp).unwrap(), 1.0);

        let n = sharp.field().n();
        let mut moved = Array2::zeros((n, n));
        for ((r, c), &v) in sharp.field().values().indexed_iter() {
            moved[[(r + 31) % n, (c + 7) % n]] = v;
        }
        let moved = RealField::new(moved, sharp.field().pitch(), Plane::Retina, None).unwrap();
        let moved =
            crate::wave::RetinalPSF::from_field(moved, *sharp.accommodation(), sharp.z_eye_m())
                .unwrap();
        assert_relative_eq!(strehl(&moved, &sharp).unwrap(), 1.0, epsilon = 1e-12);

        // One wave of defocus at 550 nm over the 3-mm pupil: 0.55 um of
        // peak-to-valley quadratic, c20 = PV / (2 sqrt 3).
        let c20 = 0.55 / (2.0 * 3.0_f64.sqrt());
        let coeffs = ZernikeCoefficients::new(vec![0.0, 0.0, 0.0, 0.0, c20], 3.0).unwrap();
        let eye = EyeInstance::new("defocused", coeffs)
            .with_sce(SceProfile::Constant(0.0))
            .unwrap();
        let blurred = retinal_psf(
            &eye,
            &open_display(),
            0.0,
            &AccommodationState::new(0.5, 0.5).unwrap(),
            &Spectrum::single(550.0),
            &grid_256(),
            SaMode::Off,
        )
        .unwrap();
        let s = strehl(&blurred, &sharp).unwrap();
        assert!(s < 0.2, "one-wave defocus Strehl {s}");

        let small = RealField::new(Array2::zeros((128, 128)), 1.0, Plane::Retina, None).unwrap();
        let mut small = small;
        small.values_mut()[[64, 64]] = 1.0;
        let small = crate::wave::RetinalPSF::from_field(
            small,
            *sharp.accommodation(),
            sharp.z_eye_m(),
        )
        .unwrap();
        assert!(strehl(&small, &sharp).is_err());
    }

    #[test]
    fn radial_mtf_matches_the_analytic_circular_aperture() {
        let psf = dl_psf_mono();
        let o = otf(&psf);
        let curve = radial_mtf(&o);
        assert_relative_eq!(curve.gains[0], 1.0, epsilon = 1e-12);

        // Cut-off of a 3-mm pupil at 550 nm in cycles/degree.
        let f_c = 3e-3 / (550e-9 * DEFAULT_Z_EYE_M) * 1e-6 * retina_um_per_degree(DEFAULT_Z_EYE_M);
        assert_relative_eq!(f_c, 95.2, epsilon = 0.2);

        let mut sq_sum = 0.0;
        for (f, g) in curve.frequencies_cpd.iter().zip(&curve.gains) {
            let expected = analytic_circular_mtf(f / f_c);
            sq_sum += (g - expected).powi(2);
        }
        let rms = (sq_sum / curve.len() as f64).sqrt();
        assert!(rms <= 1e-3, "radial MTF deviates from the analytic curve: RMS {rms:.2e}");
    }

    #[test]
    fn radially_symmetric_otf_reduces_to_its_meridian() {
        let n = 128usize;
        let half = (n / 2) as f64;
        let sigma = 12.0;
        let values = Array2::from_shape_fn((n, n), |(r, c)| {
            let d2 = (r as f64 - half).powi(2) + (c as f64 - half).powi(2);
            num_complex::Complex64::new((-d2 / (2.0 * sigma * sigma)).exp(), 0.0)
        });
        let otf = ComplexField::new(values, 1.0, Plane::Frequency, None).unwrap();
        let curve = radial_mtf(&otf);
        // Bins at integer radii collect slightly off-radius pixels, so allow
        // the annular average to deviate by the local curvature.
        for k in 0..curve.len() {
            let expected = (-(k as f64).powi(2) / (2.0 * sigma * sigma)).exp();
            assert!(
                (curve.gains[k] - expected).abs() < 0.02,
                "bin {k}: {} vs meridian {expected}",
                curve.gains[k]
            );
        }
    }

    #[test]
    fn cutoff_interpolates_debounces_and_saturates() {
        // Synthetic analytic curve sampled like a 256-px grid.
        let f_c = 95.2;
        let pitch = retina_um_per_degree(DEFAULT_Z_EYE_M) / 256.0;
        let frequencies: Vec<f64> = (0..=128).map(|k| k as f64 * pitch).collect();
        let gains: Vec<f64> = frequencies.iter().map(|f| analytic_circular_mtf(f / f_c)).collect();
        let curve = RadialMtf { frequencies_cpd: frequencies, gains };

        // Independent oracle: bisection on the analytic MTF.
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if analytic_circular_mtf(mid) > 0.05 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let expected = 0.5 * (lo + hi) * f_c;
        let cut = cutoff_frequency(&curve, 0.05).unwrap();
        assert!(!cut.saturated);
        assert!(
            (cut.frequency_cpd - expected).abs() < 0.05,
            "cut-off {} vs analytic {expected}",
            cut.frequency_cpd
        );

        // Threshold 1.0: the curve is already at the threshold at DC.
        let cut = cutoff_frequency(&curve, 1.0).unwrap();
        assert_relative_eq!(cut.frequency_cpd, 0.0, epsilon = 1e-9);

        // A one-bin dip must be debounced; the real crossing comes later.
        let frequencies: Vec<f64> = (0..12).map(|k| k as f64).collect();
        let gains = vec![1.0, 0.8, 0.04, 0.8, 0.6, 0.5, 0.3, 0.04, 0.03, 0.02, 0.01, 0.0];
        let curve = RadialMtf { frequencies_cpd: frequencies, gains };
        let cut = cutoff_frequency(&curve, 0.05).unwrap();
        assert!(cut.frequency_cpd > 6.0, "debounce failed: {}", cut.frequency_cpd);
        assert!(!cut.saturated);

        // Never crossing: saturate at Nyquist with the flag set.
        let curve = RadialMtf {
            frequencies_cpd: (0..8).map(|k| k as f64).collect(),
            gains: vec![1.0; 8],
        };
        let cut = cutoff_frequency(&curve, 0.05).unwrap();
        assert!(cut.saturated);
        assert_relative_eq!(cut.frequency_cpd, 7.0);

        assert!(cutoff_frequency(&curve, 0.0).is_err());
        assert!(cutoff_frequency(&curve, 1.5).is_err());
    }

    #[test]
    fn vsotf_prefers_focus_over_spurious_resolution() {
        // A defocused PSF keeps |OTF| energy beyond its first zero (spurious
        // resolution) but the real part oscillates; VSOTF must fall well
        // below the in-focus value.
        let sharp = dl_psf_mono();
        let c20 = 0.55 / (2.0 * 3.0_f64.sqrt());
        let coeffs = ZernikeCoefficients::new(vec![0.0, 0.0, 0.0, 0.0, c20], 3.0).unwrap();
        let eye = EyeInstance::new("defocused", coeffs)
            .with_sce(SceProfile::Constant(0.0))
            .unwrap();
        let blurred = retinal_psf(
            &eye,
            &open_display(),
            0.0,
            &AccommodationState::new(0.5, 0.5).unwrap(),
            &Spectrum::single(550.0),
            &grid_256(),
            SaMode::Off,
        )
        .unwrap();
        let p = params();
        let reference = centered_otf(&sharp);
        let v = vsotf(&centered_otf(&blurred), &reference, &p).unwrap();
        assert!(v > 0.0 && v < 0.5, "defocused VSOTF {v}");
    }
}

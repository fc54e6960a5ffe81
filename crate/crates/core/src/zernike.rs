//! Zernike polynomials in OSA/ANSI single-index ordering with unit-RMS
//! normalization over the unit disc.
//!
//! Conventions: the single index is `j = (n(n+2) + m) / 2`; positive `m` pairs
//! with `cos(m*theta)`, negative with `sin(|m|*theta)`; the normalization
//! `sqrt(2(n+1)/(1+delta_m0))` makes every mode unit-RMS, so a coefficient in
//! micrometres is the RMS wavefront contribution of its mode. `Z(0,0) = 1`,
//! `Z(2,0) = sqrt(3)(2 rho^2 - 1)`, `Z(1,1) = 2 rho cos(theta)`.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::field::{Plane, RealField};

/// Highest radial degree supported by evaluation and rescaling quadrature.
pub const MAX_ORDER: u32 = 20;

/// OSA/ANSI single index of mode `(n, m)`.
pub fn osa_index(n: u32, m: i32) -> Result<u32> {
    validate_nm(n, m)?;
    Ok(((n * (n + 2)) as i32 + m) as u32 / 2)
}

/// Radial degree and azimuthal frequency of OSA/ANSI single index `j`.
pub fn nm_from_osa(j: u32) -> (u32, i32) {
    let mut n = 0u32;
    while n * (n + 3) / 2 < j {
        n += 1;
    }
    let m = 2 * j as i32 - (n * (n + 2)) as i32;
    (n, m)
}

fn validate_nm(n: u32, m: i32) -> Result<()> {
    if n > MAX_ORDER {
        return Err(Error::domain(format!("radial degree {n} exceeds supported maximum {MAX_ORDER}")));
    }
    if m.unsigned_abs() > n || (n as i32 - m).rem_euclid(2) != 0 {
        return Err(Error::domain(format!("invalid Zernike mode (n={n}, m={m})")));
    }
    Ok(())
}

fn factorial(k: u32) -> f64 {
    (1..=k as u64).map(|v| v as f64).product()
}

/// Radial polynomial `R_n^{|m|}(rho)`.
fn radial(n: u32, m_abs: u32, rho: f64) -> f64 {
    let half_sum = (n + m_abs) / 2;
    let half_diff = (n - m_abs) / 2;
    let mut acc = 0.0;
    for k in 0..=half_diff {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let num = factorial(n - k);
        let den = factorial(k) * factorial(half_sum - k) * factorial(half_diff - k);
        acc += sign * num / den * rho.powi((n - 2 * k) as i32);
    }
    acc
}

/// Evaluates the unit-RMS-normalized Zernike polynomial `Z_n^m(rho, theta)`.
pub fn eval_polynomial(n: u32, m: i32, rho: f64, theta: f64) -> Result<f64> {
    validate_nm(n, m)?;
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::domain(format!("rho must lie in [0, 1], got {rho}")));
    }
    let norm = if m == 0 {
        ((n + 1) as f64).sqrt()
    } else {
        (2.0 * (n + 1) as f64).sqrt()
    };
    let angular = match m.cmp(&0) {
        std::cmp::Ordering::Greater => (m as f64 * theta).cos(),
        std::cmp::Ordering::Less => ((-m) as f64 * theta).sin(),
        std::cmp::Ordering::Equal => 1.0,
    };
    Ok(norm * radial(n, m.unsigned_abs(), rho) * angular)
}

/// A set of Zernike coefficients (micrometres) defined over a pupil diameter.
///
/// Stored densely by OSA index; trailing modes default to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ZernikeCoefficients {
    pupil_diameter_mm: f64,
    values_um: Vec<f64>,
}

impl ZernikeCoefficients {
    pub fn new(values_um: Vec<f64>, pupil_diameter_mm: f64) -> Result<Self> {
        if !(pupil_diameter_mm > 0.0) || !pupil_diameter_mm.is_finite() {
            return Err(Error::domain(format!(
                "pupil diameter must be positive, got {pupil_diameter_mm} mm"
            )));
        }
        let max_modes = (MAX_ORDER * (MAX_ORDER + 3) / 2 + 1) as usize;
        if values_um.len() > max_modes {
            return Err(Error::domain(format!(
                "{} modes exceed supported maximum {max_modes}",
                values_um.len()
            )));
        }
        if values_um.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("coefficients must be finite"));
        }
        Ok(ZernikeCoefficients { pupil_diameter_mm, values_um })
    }

    pub fn zero(pupil_diameter_mm: f64) -> Result<Self> {
        Self::new(Vec::new(), pupil_diameter_mm)
    }

    pub fn pupil_diameter_mm(&self) -> f64 {
        self.pupil_diameter_mm
    }

    pub fn mode_count(&self) -> usize {
        self.values_um.len()
    }

    /// Coefficient at OSA index `j` (zero for modes never set).
    pub fn get(&self, j: u32) -> f64 {
        self.values_um.get(j as usize).copied().unwrap_or(0.0)
    }

    pub fn set(&mut self, j: u32, value_um: f64) {
        if self.values_um.len() <= j as usize {
            self.values_um.resize(j as usize + 1, 0.0);
        }
        self.values_um[j as usize] = value_um;
    }

    pub fn add_to(&mut self, j: u32, value_um: f64) {
        self.set(j, self.get(j) + value_um);
    }

    /// Nonzero `(osa_index, value_um)` terms.
    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.values_um
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(j, v)| (j as u32, *v))
    }

    /// Pointwise sum; both sets must share the pupil diameter.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if (self.pupil_diameter_mm - other.pupil_diameter_mm).abs() > 1e-9 {
            return Err(Error::domain(format!(
                "cannot add coefficient sets over different pupils ({} mm vs {} mm)",
                self.pupil_diameter_mm, other.pupil_diameter_mm
            )));
        }
        let len = self.values_um.len().max(other.values_um.len());
        let mut values = vec![0.0; len];
        for (i, v) in values.iter_mut().enumerate() {
            *v = self.get(i as u32) + other.get(i as u32);
        }
        Self::new(values, self.pupil_diameter_mm)
    }

    /// Copy with piston and tilt (OSA 0..=2) zeroed. Those modes only shift
    /// the image or the phase origin, so image-quality wavefronts drop them.
    pub fn without_piston_and_tilt(&self) -> Self {
        let mut out = self.clone();
        for j in 0..=2u32.min(out.values_um.len().saturating_sub(1) as u32) {
            if (j as usize) < out.values_um.len() {
                out.values_um[j as usize] = 0.0;
            }
        }
        out
    }

    /// RMS wavefront deviation (piston excluded), in micrometres.
    pub fn rms_um(&self) -> f64 {
        self.values_um.iter().skip(1).map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Wavefront value at pupil coordinates `(x_mm, y_mm)` from the pupil
    /// centre; zero outside the pupil.
    pub fn wavefront_at(&self, x_mm: f64, y_mm: f64) -> f64 {
        let radius = self.pupil_diameter_mm / 2.0;
        let rho = (x_mm * x_mm + y_mm * y_mm).sqrt() / radius;
        if rho > 1.0 {
            return 0.0;
        }
        let theta = y_mm.atan2(x_mm);
        let mut acc = 0.0;
        for (j, c) in self.iter() {
            let (n, m) = nm_from_osa(j);
            acc += c * eval_polynomial(n, m, rho, theta).expect("stored modes are valid");
        }
        acc
    }
}

/// Sampling description for a pupil-plane map: `samples` pixels across the
/// pupil diameter.
#[derive(Debug, Clone, Copy)]
pub struct PupilGrid {
    pub samples: usize,
    pub pupil_diameter_mm: f64,
}

impl PupilGrid {
    pub fn pitch_mm(&self) -> f64 {
        self.pupil_diameter_mm / self.samples as f64
    }
}

/// Samples the wavefront sum of `coeffs` on a square grid covering the pupil.
/// Values outside the pupil circle are zero.
pub fn wavefront_map(coeffs: &ZernikeCoefficients, grid: &PupilGrid) -> Result<RealField> {
    if !grid.samples.is_power_of_two() || grid.samples == 0 {
        return Err(Error::grid(format!(
            "pupil grid side must be a power of two, got {}",
            grid.samples
        )));
    }
    if (grid.pupil_diameter_mm - coeffs.pupil_diameter_mm).abs() > 1e-9 {
        return Err(Error::grid(format!(
            "grid pupil diameter {} mm does not match coefficients' {} mm",
            grid.pupil_diameter_mm, coeffs.pupil_diameter_mm
        )));
    }
    let n = grid.samples;
    let pitch = grid.pitch_mm();
    let half = (n / 2) as f64;
    let values = Array2::from_shape_fn((n, n), |(r, c)| {
        let y = (r as f64 - half) * pitch;
        let x = (c as f64 - half) * pitch;
        coeffs.wavefront_at(x, y)
    });
    RealField::new(values, pitch, Plane::Pupil, None)
}

/// Defocus coefficient `c20` (micrometres) equivalent to `defocus_d` dioptres
/// over a pupil of diameter `d_p` millimetres: `c = d_p^2 / (16 sqrt 3) * D`.
pub fn defocus_to_coeff(defocus_d: f64, pupil_diameter_mm: f64) -> f64 {
    pupil_diameter_mm * pupil_diameter_mm / (16.0 * 3.0_f64.sqrt()) * defocus_d
}

struct EvalTerm {
    m_abs: u32,
    sine: bool,
    /// Coefficient * normalization * radial polynomial in t = rho^2
    /// (ascending powers); the rho^|m| prefactor is applied separately.
    poly_t: Vec<f64>,
}

/// Prepared per-pixel evaluator for a fixed coefficient set. Avoids
/// per-sample trigonometry and factorials: radial polynomials are cached in
/// powers of rho^2 and the angular harmonics come from the Chebyshev
/// recurrence on (cos theta, sin theta).
pub struct WavefrontEvaluator {
    radius_mm: f64,
    terms: Vec<EvalTerm>,
    max_m: u32,
}

impl WavefrontEvaluator {
    pub fn new(coeffs: &ZernikeCoefficients) -> Self {
        let mut terms = Vec::new();
        let mut max_m = 0;
        for (j, c) in coeffs.iter() {
            let (n, m) = nm_from_osa(j);
            let m_abs = m.unsigned_abs();
            let norm = if m == 0 {
                ((n + 1) as f64).sqrt()
            } else {
                (2.0 * (n + 1) as f64).sqrt()
            };
            let half_sum = (n + m_abs) / 2;
            let half_diff = (n - m_abs) / 2;
            let mut poly_t = vec![0.0; half_diff as usize + 1];
            for k in 0..=half_diff {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                let num = factorial(n - k);
                let den = factorial(k) * factorial(half_sum - k) * factorial(half_diff - k);
                // rho^(n-2k) = rho^m * t^(half_diff - k)
                poly_t[(half_diff - k) as usize] += sign * num / den;
            }
            for p in poly_t.iter_mut() {
                *p *= c * norm;
            }
            max_m = max_m.max(m_abs);
            terms.push(EvalTerm { m_abs, sine: m < 0, poly_t });
        }
        WavefrontEvaluator { radius_mm: coeffs.pupil_diameter_mm / 2.0, terms, max_m }
    }

    /// Wavefront value at pupil coordinates in mm. Points up to 4% outside
    /// the rim evaluate at the rim (supports partially covered edge pixels);
    /// farther out returns None.
    pub fn eval(&self, x_mm: f64, y_mm: f64) -> Option<f64> {
        let ux = x_mm / self.radius_mm;
        let uy = y_mm / self.radius_mm;
        let t_raw = ux * ux + uy * uy;
        if t_raw > 1.0816 {
            return None;
        }
        let rho_raw = t_raw.sqrt();
        let t = t_raw.min(1.0);
        let rho = rho_raw.min(1.0);
        // cos(k theta), sin(k theta) by recurrence; rho^k alongside. The
        // direction comes from the unclamped point so the harmonics stay
        // unit-magnitude.
        let (c1, s1) = if rho_raw > 0.0 { (ux / rho_raw, uy / rho_raw) } else { (1.0, 0.0) };
        let mut harmonics = Vec::with_capacity(self.max_m as usize + 1);
        harmonics.push((1.0_f64, 0.0_f64, 1.0_f64)); // (cos, sin, rho^k) at k=0
        let mut ck = 1.0;
        let mut sk = 0.0;
        let mut rk = 1.0;
        for _ in 1..=self.max_m {
            let c_next = ck * c1 - sk * s1;
            let s_next = sk * c1 + ck * s1;
            ck = c_next;
            sk = s_next;
            rk *= rho;
            harmonics.push((ck, sk, rk));
        }
        let mut acc = 0.0;
        for term in &self.terms {
            let mut radial = 0.0;
            for &p in term.poly_t.iter().rev() {
                radial = radial * t + p;
            }
            let (hc, hs, hr) = harmonics[term.m_abs as usize];
            let angular = if term.sine { hs } else { hc };
            acc += radial * hr * angular;
        }
        Some(acc)
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
fn gauss_legendre(k: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(k);
    for i in 0..k {
        // Initial guess (Chebyshev-like), then Newton on P_k.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (k as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(k, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(k, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((x, w));
    }
    out
}

fn legendre_with_derivative(k: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for j in 2..=k {
        let pj = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
        p0 = p1;
        p1 = pj;
    }
    let dp = k as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Re-expresses coefficients over a concentric smaller pupil by numerically
/// re-projecting the restricted wavefront onto the Zernike basis.
///
/// The quadrature (Gauss-Legendre radially, uniform angularly) is exact for
/// polynomial wavefronts up to [`MAX_ORDER`], so rescaling composes exactly:
/// shrinking in two steps equals shrinking once. Shrinking redistributes
/// energy downward, e.g. pure `c40` at diameter `d` leaves `s^4 c40` plus an
/// induced defocus `sqrt(15) s^2 (s^2 - 1) c40` at `s*d`.
pub fn rescale_pupil(
    coeffs: &ZernikeCoefficients,
    new_diameter_mm: f64,
) -> Result<ZernikeCoefficients> {
    let old = coeffs.pupil_diameter_mm;
    if !(new_diameter_mm > 0.0) || new_diameter_mm > old * (1.0 + 1e-12) {
        return Err(Error::domain(format!(
            "new pupil diameter must lie in (0, {old}] mm, got {new_diameter_mm} mm"
        )));
    }
    let s = (new_diameter_mm / old).min(1.0);
    let max_j = coeffs
        .iter()
        .map(|(j, _)| j)
        .max()
        .unwrap_or(0);
    let (max_n, _) = nm_from_osa(max_j);

    // Quadrature sizes: radial integrands are polynomials of degree
    // <= 2 * max_n + 1 in rho, angular ones trig polynomials of degree
    // <= 2 * max_n.
    let k_radial = (max_n as usize + 2).max(4);
    let k_angular = (4 * max_n as usize + 8).next_power_of_two();
    let radial_nodes: Vec<(f64, f64)> = gauss_legendre(k_radial)
        .into_iter()
        .map(|(x, w)| ((x + 1.0) / 2.0, w / 2.0))
        .collect();

    let mode_count = coeffs.mode_count();
    let mut out = vec![0.0; mode_count];
    // W restricted: value of the original wavefront at radius s*rho.
    let restricted = |rho: f64, theta: f64| -> f64 {
        let mut acc = 0.0;
        for (j, c) in coeffs.iter() {
            let (n, m) = nm_from_osa(j);
            acc += c * eval_polynomial(n, m, s * rho, theta).expect("stored modes are valid");
        }
        acc
    };
    for (idx, slot) in out.iter_mut().enumerate() {
        let (n, m) = nm_from_osa(idx as u32);
        if n > max_n {
            break;
        }
        let mut integral = 0.0;
        for &(rho, w_r) in &radial_nodes {
            let mut angular_sum = 0.0;
            for t in 0..k_angular {
                let theta = 2.0 * std::f64::consts::PI * t as f64 / k_angular as f64;
                let z = eval_polynomial(n, m, rho, theta).expect("mode is valid");
                angular_sum += restricted(rho, theta) * z;
            }
            integral += w_r * rho * angular_sum * 2.0 * std::f64::consts::PI / k_angular as f64;
        }
        // Unit-RMS basis: <Z_j, Z_j> = pi over the unit disc.
        *slot = integral / std::f64::consts::PI;
    }
    ZernikeCoefficients::new(out, new_diameter_mm)
}

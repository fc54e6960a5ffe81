//! Statistical eye model: population sampling of Zernike coefficients,
//! chromatic and accommodation defocus, accommodation-coupled spherical
//! aberration, and the Stiles-Crawford amplitude apodisation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::field::{Plane, RealField};
use crate::zernike::{defocus_to_coeff, rescale_pupil, PupilGrid, ZernikeCoefficients};

/// Longitudinal chromatic aberration model constants: `D(lambda) =
/// LCA_A * (1/(lambda - LCA_C) - 1/(lambda_ref - LCA_C))`, wavelengths in nm.
pub const LCA_A: f64 = 633.26;
pub const LCA_C: f64 = 214.10;

/// Spherical-aberration change per dioptre of accommodation, measured over a
/// 5-mm pupil (micrometres per dioptre).
pub const SA_SLOPE_UM_PER_D: f64 = -0.0435;
pub const SA_REFERENCE_PUPIL_MM: f64 = 5.0;

/// Default Stiles-Crawford peakedness (mm^-2).
pub const DEFAULT_SCE_RHO_PER_MM2: f64 = 0.05;

/// Default pupil-to-retina distance (metres), reduced-eye convention.
pub const DEFAULT_Z_EYE_M: f64 = 16.67e-3;

/// Dioptric defocus of a wavelength relative to the reference wavelength.
/// Both wavelengths must exceed the model singularity at 214.10 nm.
pub fn lca_defocus(lambda_nm: f64, lambda_ref_nm: f64) -> Result<f64> {
    if lambda_nm <= LCA_C || lambda_ref_nm <= LCA_C {
        return Err(Error::domain(format!(
            "wavelengths must exceed {LCA_C} nm, got {lambda_nm} and {lambda_ref_nm}"
        )));
    }
    Ok(LCA_A * (1.0 / (lambda_nm - LCA_C) - 1.0 / (lambda_ref_nm - LCA_C)))
}

/// Dioptric defocus of nominal accommodation distance `z_acc` against the
/// display's central depth plane: `1/z_acc - 1/z_cdp`. Infinite distances are
/// allowed and contribute zero vergence.
pub fn accommodation_defocus(z_acc_m: f64, z_cdp_m: f64) -> f64 {
    1.0 / z_acc_m - 1.0 / z_cdp_m
}

/// How the accommodation-coupled spherical-aberration term is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SaMode {
    /// No accommodation-dependent spherical aberration.
    Off,
    /// Slope times absolute accommodation vergence, resized from the 5-mm
    /// measurement pupil by the pure-c40 law `(d/5)^4`, with the defocus the
    /// resize law induces folded into c20.
    #[default]
    Absolute,
    /// As `Absolute` but keeping only the resized c40 term.
    AbsoluteC40Only,
    /// Slope times vergence relative to the central depth plane (treats the
    /// eye's static coefficients as measured in the display viewing state),
    /// resized with the induced defocus folded in.
    CdpRelative,
    /// As `CdpRelative` but keeping only the resized c40 term.
    CdpRelativeC40Only,
    /// Slope times absolute vergence applied as c40 directly at the
    /// simulation pupil, treating the slope as pupil-independent.
    AbsoluteUnscaled,
}

/// Spherical-aberration coefficient (micrometres) induced by accommodating to
/// `z_acc_m`, expressed at `pupil_diameter_mm` via the pure-c40 resize law.
pub fn accommodation_sa_coeff(z_acc_m: f64, pupil_diameter_mm: f64) -> f64 {
    let at_reference = SA_SLOPE_UM_PER_D / z_acc_m;
    let s = pupil_diameter_mm / SA_REFERENCE_PUPIL_MM;
    at_reference * s.powi(4)
}

/// Nominal accommodation state of an eye viewing a display whose central
/// depth plane sits at a known distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccommodationState {
    z_acc_m: f64,
    defocus_d: f64,
}

impl AccommodationState {
    /// `z_acc_m` may be `f64::INFINITY` (unaccommodated); it must be positive
    /// because the eye cannot accommodate beyond infinity.
    pub fn new(z_acc_m: f64, z_cdp_m: f64) -> Result<Self> {
        if !(z_acc_m > 0.0) {
            return Err(Error::domain(format!(
                "accommodation distance must be positive, got {z_acc_m} m"
            )));
        }
        if !(z_cdp_m > 0.0) || !z_cdp_m.is_finite() {
            return Err(Error::domain(format!(
                "central depth plane distance must be positive and finite, got {z_cdp_m} m"
            )));
        }
        Ok(AccommodationState { z_acc_m, defocus_d: accommodation_defocus(z_acc_m, z_cdp_m) })
    }

    /// Builds the state for an accommodation vergence in dioptres, clamping
    /// negative requests to zero (infinity). Returns the state and whether
    /// clamping occurred.
    pub fn from_vergence_clamped(vergence_d: f64, z_cdp_m: f64) -> Result<(Self, bool)> {
        let clamped = vergence_d < 0.0;
        let v = vergence_d.max(0.0);
        let z_acc = if v == 0.0 { f64::INFINITY } else { 1.0 / v };
        Ok((Self::new(z_acc, z_cdp_m)?, clamped))
    }

    pub fn z_acc_m(&self) -> f64 {
        self.z_acc_m
    }

    /// Accommodation vergence `1/z_acc` in dioptres (zero when unaccommodated).
    pub fn vergence_d(&self) -> f64 {
        1.0 / self.z_acc_m
    }

    /// Dioptric defocus relative to the central depth plane.
    pub fn defocus_d(&self) -> f64 {
        self.defocus_d
    }
}

/// Stiles-Crawford peakedness as a function of wavelength.
#[derive(Debug, Clone)]
pub enum SceProfile {
    Constant(f64),
    /// `(lambda_nm, rho)` pairs sorted by wavelength; linear interpolation,
    /// clamped at the ends.
    Table(Vec<(f64, f64)>),
}

impl SceProfile {
    pub fn validate(&self) -> Result<()> {
        match self {
            SceProfile::Constant(rho) => {
                if *rho < 0.0 || !rho.is_finite() {
                    return Err(Error::domain(format!("SCE rho must be >= 0, got {rho}")));
                }
            }
            SceProfile::Table(rows) => {
                if rows.is_empty() {
                    return Err(Error::domain("SCE table must not be empty"));
                }
                if rows.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(Error::domain("SCE table wavelengths must strictly increase"));
                }
                if rows.iter().any(|(_, r)| *r < 0.0 || !r.is_finite()) {
                    return Err(Error::domain("SCE rho values must be >= 0"));
                }
            }
        }
        Ok(())
    }

    pub fn rho(&self, lambda_nm: f64) -> f64 {
        match self {
            SceProfile::Constant(rho) => *rho,
            SceProfile::Table(rows) => {
                if lambda_nm <= rows[0].0 {
                    return rows[0].1;
                }
                if lambda_nm >= rows[rows.len() - 1].0 {
                    return rows[rows.len() - 1].1;
                }
                let i = rows.partition_point(|(l, _)| *l <= lambda_nm);
                let (l0, r0) = rows[i - 1];
                let (l1, r1) = rows[i];
                r0 + (r1 - r0) * (lambda_nm - l0) / (l1 - l0)
            }
        }
    }
}

impl Default for SceProfile {
    fn default() -> Self {
        SceProfile::Constant(DEFAULT_SCE_RHO_PER_MM2)
    }
}

/// Stiles-Crawford amplitude apodisation `10^(-rho r^2)` sampled over a pupil
/// grid; unit amplitude at the pupil centre. The pupil boundary is not
/// applied here.
pub fn sce_apodisation(grid: &PupilGrid, rho_per_mm2: f64) -> Result<RealField> {
    if rho_per_mm2 < 0.0 || !rho_per_mm2.is_finite() {
        return Err(Error::domain(format!("SCE rho must be >= 0, got {rho_per_mm2}")));
    }
    let n = grid.samples;
    let pitch = grid.pitch_mm();
    let half = (n / 2) as f64;
    let values = ndarray::Array2::from_shape_fn((n, n), |(r, c)| {
        let y = (r as f64 - half) * pitch;
        let x = (c as f64 - half) * pitch;
        10.0_f64.powf(-rho_per_mm2 * (x * x + y * y))
    });
    RealField::new(values, pitch, Plane::Pupil, None)
}

/// A single simulated eye: static aberrations at the simulation pupil, the
/// Stiles-Crawford profile, and the pupil-to-retina distance.
#[derive(Debug, Clone)]
pub struct EyeInstance {
    label: String,
    aberrations: ZernikeCoefficients,
    sce: SceProfile,
    z_eye_m: f64,
}

impl EyeInstance {
    pub fn new(label: impl Into<String>, aberrations: ZernikeCoefficients) -> Self {
        EyeInstance {
            label: label.into(),
            aberrations,
            sce: SceProfile::default(),
            z_eye_m: DEFAULT_Z_EYE_M,
        }
    }

    pub fn with_sce(mut self, sce: SceProfile) -> Result<Self> {
        sce.validate()?;
        self.sce = sce;
        Ok(self)
    }

    pub fn with_z_eye(mut self, z_eye_m: f64) -> Result<Self> {
        if !(z_eye_m > 0.0) || !z_eye_m.is_finite() {
            return Err(Error::domain(format!("z_eye must be positive, got {z_eye_m} m")));
        }
        self.z_eye_m = z_eye_m;
        Ok(self)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Static aberration coefficients at the simulation pupil diameter.
    pub fn aberrations(&self) -> &ZernikeCoefficients {
        &self.aberrations
    }

    pub fn sce_rho(&self, lambda_nm: f64) -> f64 {
        self.sce.rho(lambda_nm)
    }

    pub fn z_eye_m(&self) -> f64 {
        self.z_eye_m
    }
}

/// Total wavefront of an eye at one wavelength and accommodation state:
/// static coefficients, plus defocus from accommodation relative to the
/// central depth plane and from longitudinal chromatic aberration, plus the
/// accommodation-coupled spherical-aberration term.
pub fn total_wavefront(
    eye: &EyeInstance,
    lambda_nm: f64,
    lambda_ref_nm: f64,
    acc: &AccommodationState,
    pupil_diameter_mm: f64,
    sa_mode: SaMode,
) -> Result<ZernikeCoefficients> {
    let d = eye.aberrations.pupil_diameter_mm();
    if (d - pupil_diameter_mm).abs() > 1e-9 {
        return Err(Error::domain(format!(
            "eye coefficients are defined over {d} mm, requested {pupil_diameter_mm} mm"
        )));
    }
    let mut out = eye.aberrations.clone();
    let defocus_d = acc.defocus_d() + lca_defocus(lambda_nm, lambda_ref_nm)?;
    out.add_to(4, defocus_to_coeff(defocus_d, pupil_diameter_mm));

    let sa_vergence = match sa_mode {
        SaMode::Off => 0.0,
        SaMode::Absolute | SaMode::AbsoluteC40Only | SaMode::AbsoluteUnscaled => acc.vergence_d(),
        SaMode::CdpRelative | SaMode::CdpRelativeC40Only => acc.defocus_d(),
    };
    let c40_at_reference = SA_SLOPE_UM_PER_D * sa_vergence;
    match sa_mode {
        SaMode::Off => {}
        SaMode::AbsoluteUnscaled => out.add_to(12, c40_at_reference),
        SaMode::Absolute | SaMode::CdpRelative => {
            let s = pupil_diameter_mm / SA_REFERENCE_PUPIL_MM;
            out.add_to(12, c40_at_reference * s.powi(4));
            // Defocus induced by resizing a pure c40 from the 5-mm
            // measurement pupil; same law rescale_pupil applies.
            out.add_to(4, 15.0_f64.sqrt() * s * s * (s * s - 1.0) * c40_at_reference);
        }
        SaMode::AbsoluteC40Only | SaMode::CdpRelativeC40Only => {
            let s = pupil_diameter_mm / SA_REFERENCE_PUPIL_MM;
            out.add_to(12, c40_at_reference * s.powi(4));
        }
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
struct PopulationFile {
    #[serde(default)]
    #[allow(dead_code)]
    description: String,
    ordering: String,
    pupil_diameter_mm: f64,
    mean_um: Vec<f64>,
    covariance_um2: Vec<Vec<f64>>,
}

/// Multivariate-Gaussian population statistics of ocular Zernike
/// coefficients over a fixed measurement pupil.
#[derive(Debug, Clone)]
pub struct PopulationModel {
    pupil_diameter_mm: f64,
    mean_um: Vec<f64>,
    covariance_um2: Vec<Vec<f64>>,
    /// Sampling factor `L = U sqrt(max(eigenvalue, 0))`, columns scaled.
    factor: Vec<Vec<f64>>,
}

impl PopulationModel {
    pub fn new(
        mean_um: Vec<f64>,
        covariance_um2: Vec<Vec<f64>>,
        pupil_diameter_mm: f64,
    ) -> Result<Self> {
        let k = mean_um.len();
        if k == 0 {
            return Err(Error::domain("population mean must not be empty"));
        }
        if covariance_um2.len() != k || covariance_um2.iter().any(|row| row.len() != k) {
            return Err(Error::domain(format!(
                "covariance must be {k}x{k} to match the mean vector"
            )));
        }
        if !(pupil_diameter_mm > 0.0) {
            return Err(Error::domain("population pupil diameter must be positive"));
        }
        let scale = covariance_um2
            .iter()
            .flatten()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
            .max(1e-30);
        for i in 0..k {
            for j in (i + 1)..k {
                if (covariance_um2[i][j] - covariance_um2[j][i]).abs() > 1e-9 * scale {
                    return Err(Error::domain(format!(
                        "covariance is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let (eigenvalues, eigenvectors) = symmetric_eigen(covariance_um2.clone());
        if let Some(bad) = eigenvalues.iter().find(|&&l| l < -1e-9 * scale) {
            return Err(Error::domain(format!(
                "covariance has a significantly negative eigenvalue ({bad}); not a covariance matrix"
            )));
        }
        // Clip small negative eigenvalues (rounding in measured covariances).
        let mut factor = vec![vec![0.0; k]; k];
        for (col, l) in eigenvalues.iter().enumerate() {
            let s = l.max(0.0).sqrt();
            for row in 0..k {
                factor[row][col] = eigenvectors[row][col] * s;
            }
        }
        Ok(PopulationModel { pupil_diameter_mm, mean_um, covariance_um2, factor })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: PopulationFile = serde_json::from_str(text)?;
        if file.ordering != "OSA" {
            return Err(Error::domain(format!(
                "population file ordering must be \"OSA\", got \"{}\"",
                file.ordering
            )));
        }
        Self::new(file.mean_um, file.covariance_um2, file.pupil_diameter_mm)
    }

    /// The population statistics bundled with the crate (15 OSA modes over a
    /// 6-mm pupil).
    pub fn bundled() -> Self {
        Self::from_json_str(include_str!("../assets/population_6mm.json"))
            .expect("bundled population asset is valid")
    }

    pub fn mode_count(&self) -> usize {
        self.mean_um.len()
    }

    pub fn pupil_diameter_mm(&self) -> f64 {
        self.pupil_diameter_mm
    }

    pub fn mean_um(&self) -> &[f64] {
        &self.mean_um
    }

    pub fn covariance_um2(&self) -> &[Vec<f64>] {
        &self.covariance_um2
    }

    /// Draws `count` coefficient vectors at the measurement pupil.
    /// Deterministic in `seed`; draw order is fixed (eye-major, mode-minor).
    pub fn sample_coefficient_sets(
        &self,
        count: usize,
        seed: u64,
    ) -> Result<Vec<ZernikeCoefficients>> {
        if count == 0 {
            return Err(Error::domain("sample count must be >= 1"));
        }
        let k = self.mode_count();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let z: Vec<f64> = (0..k).map(|_| StandardNormal.sample(&mut rng)).collect();
            let mut values = self.mean_um.clone();
            for (row, value) in values.iter_mut().enumerate() {
                for (col, zv) in z.iter().enumerate() {
                    *value += self.factor[row][col] * zv;
                }
            }
            out.push(ZernikeCoefficients::new(values, self.pupil_diameter_mm)?);
        }
        Ok(out)
    }
}

/// Samples `count` virtual eyes and rescales each to the simulation pupil.
/// Labels run `eye-01`, `eye-02`, ... Deterministic in `seed`.
pub fn sample_eyes(
    model: &PopulationModel,
    count: usize,
    seed: u64,
    sim_pupil_diameter_mm: f64,
) -> Result<Vec<EyeInstance>> {
    let sets = model.sample_coefficient_sets(count, seed)?;
    sets.into_iter()
        .enumerate()
        .map(|(i, coeffs)| {
            let rescaled = rescale_pupil(&coeffs, sim_pupil_diameter_mm)?;
            Ok(EyeInstance::new(format!("eye-{:02}", i + 1), rescaled))
        })
        .collect()
}

/// The population-mean eye at the simulation pupil, labelled `average`.
pub fn average_eye(model: &PopulationModel, sim_pupil_diameter_mm: f64) -> Result<EyeInstance> {
    let coeffs = ZernikeCoefficients::new(model.mean_um.clone(), model.pupil_diameter_mm)?;
    let rescaled = rescale_pupil(&coeffs, sim_pupil_diameter_mm)?;
    Ok(EyeInstance::new("average", rescaled))
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// `(eigenvalues, eigenvectors)` with eigenvectors as columns, so
/// `A = V diag(values) V^T`.
fn symmetric_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let k = a.len();
    let mut v = vec![vec![0.0; k]; k];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let scale = a
        .iter()
        .flatten()
        .fold(0.0_f64, |m, x| m.max(x.abs()))
        .max(1e-300);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..k {
            for j in (i + 1)..k {
                off += a[i][j] * a[i][j];
            }
        }
        if off.sqrt() <= 1e-14 * scale {
            break;
        }
        for p in 0..k {
            for q in (p + 1)..k {
                if a[p][q].abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..k {
                    let aip = a[i][p];
                    let aiq = a[i][q];
                    a[i][p] = c * aip - s * aiq;
                    a[i][q] = s * aip + c * aiq;
                }
                for j in 0..k {
                    let apj = a[p][j];
                    let aqj = a[q][j];
                    a[p][j] = c * apj - s * aqj;
                    a[q][j] = s * apj + c * aqj;
                }
                for i in 0..k {
                    let vip = v[i][p];
                    let viq = v[i][q];
                    v[i][p] = c * vip - s * viq;
                    v[i][q] = s * vip + c * viq;
                }
            }
        }
    }
    let values = (0..k).map(|i| a[i][i]).collect();
    (values, v)
}

/// CIE 2-degree luminous-efficiency table with linear interpolation.
#[derive(Debug, Clone)]
pub struct LuminosityTable {
    lambda_nm: Vec<f64>,
    value: Vec<f64>,
}

impl LuminosityTable {
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lambda_nm = Vec::new();
        let mut value = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (idx == 0 && line.starts_with("lambda")) {
                continue;
            }
            let mut parts = line.split(',');
            let (l, v) = match (parts.next(), parts.next()) {
                (Some(l), Some(v)) => (l.trim(), v.trim()),
                _ => {
                    return Err(Error::domain(format!(
                        "luminosity table line {} is not two comma-separated columns",
                        idx + 1
                    )))
                }
            };
            let l: f64 = l
                .parse()
                .map_err(|_| Error::domain(format!("bad wavelength on line {}", idx + 1)))?;
            let v: f64 = v
                .parse()
                .map_err(|_| Error::domain(format!("bad value on line {}", idx + 1)))?;
            lambda_nm.push(l);
            value.push(v);
        }
        if lambda_nm.len() < 2 {
            return Err(Error::domain("luminosity table needs at least two rows"));
        }
        if lambda_nm.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::domain("luminosity table wavelengths must strictly increase"));
        }
        if value.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(Error::domain("luminosity values must be >= 0"));
        }
        Ok(LuminosityTable { lambda_nm, value })
    }

    /// The bundled CIE 2-degree table, 400-700 nm at 10-nm steps.
    pub fn bundled() -> Self {
        Self::from_csv_str(include_str!("../assets/cie_luminosity_2deg.csv"))
            .expect("bundled luminosity asset is valid")
    }

    pub fn min_lambda_nm(&self) -> f64 {
        self.lambda_nm[0]
    }

    pub fn max_lambda_nm(&self) -> f64 {
        *self.lambda_nm.last().unwrap()
    }

    /// Linear interpolation; exact at table nodes; error outside the range.
    pub fn weight(&self, lambda_nm: f64) -> Result<f64> {
        if lambda_nm < self.min_lambda_nm() || lambda_nm > self.max_lambda_nm() {
            return Err(Error::domain(format!(
                "wavelength {lambda_nm} nm outside luminosity table range [{}, {}]",
                self.min_lambda_nm(),
                self.max_lambda_nm()
            )));
        }
        let i = self.lambda_nm.partition_point(|l| *l <= lambda_nm);
        if i == 0 {
            return Ok(self.value[0]);
        }
        if i == self.lambda_nm.len() {
            return Ok(*self.value.last().unwrap());
        }
        let (l0, v0) = (self.lambda_nm[i - 1], self.value[i - 1]);
        let (l1, v1) = (self.lambda_nm[i], self.value[i]);
        Ok(v0 + (v1 - v0) * (lambda_nm - l0) / (l1 - l0))
    }

    /// Weights for a list of wavelengths, normalized to sum to one.
    pub fn normalized_weights(&self, lambdas_nm: &[f64]) -> Result<Vec<f64>> {
        let raw: Vec<f64> = lambdas_nm
            .iter()
            .map(|&l| self.weight(l))
            .collect::<Result<_>>()?;
        let total: f64 = raw.iter().sum();
        if total <= 0.0 {
            return Err(Error::domain("luminosity weights sum to zero over the requested spectrum"));
        }
        Ok(raw.into_iter().map(|w| w / total).collect())
    }
}

/// Luminous-efficiency weight from the bundled CIE 2-degree table.
pub fn luminosity_weight(lambda_nm: f64) -> Result<f64> {
    LuminosityTable::bundled().weight(lambda_nm)
}

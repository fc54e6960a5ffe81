//! Experiment configuration: a single hierarchical JSON document describing
//! the display, the eye population, the light spectrum, the sampling grids,
//! and the sweep protocol. Every physical quantity carries a unit suffix in
//! its field name (`z_cdp_D`, `pupil_diameter_mm`, `pitch_um`, ...) so a
//! value can never silently change units.
//!
//! Loading resolves relative asset paths against the config file's directory
//! and validates every field, reporting *all* problems at once, each naming
//! the offending field.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::display::DisplayConfig;
use crate::error::{Error, Result};
use crate::eye::{
    average_eye, sample_eyes, EyeInstance, LuminosityTable, PopulationModel, SaMode, SceProfile,
    DEFAULT_Z_EYE_M,
};
use crate::metrics::NcsfParams;
use crate::through_focus::{Metric, DEFAULT_CUTOFF_THRESHOLD, DEFAULT_RANGE_REL_D, DEFAULT_STEP_D};
use crate::wave::{RetinalGridSpec, Spectrum};
use crate::zernike::{rescale_pupil, ZernikeCoefficients};

/// Display geometry shared by all densities in a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisplaySection {
    /// Vergence of the central depth plane, dioptres.
    #[serde(rename = "z_cdp_D")]
    pub z_cdp_d: f64,
    pub pupil_diameter_mm: f64,
    /// Viewpoint densities k (a k x k grid of viewpoints per pupil).
    pub densities: Vec<u32>,
    /// Rendered image depths relative to the CDP, dioptres.
    #[serde(rename = "rendered_depths_rel_D")]
    pub rendered_depths_rel_d: Vec<f64>,
}

/// Where the simulated eyes come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum EyeSection {
    /// Draw `count` eyes from the multivariate-normal population model
    /// (bundled unless `asset` points at another model file), then append
    /// the population-mean eye when `include_average` is set.
    Population {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        asset: Option<PathBuf>,
        count: usize,
        seed: u64,
        #[serde(default = "default_true")]
        include_average: bool,
    },
    /// Load explicit coefficient sets from a CSV file (the same format
    /// `sample-eyes` emits).
    File { path: PathBuf },
}

/// Sampled wavelength range, weighted by the luminosity function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSection {
    pub min_nm: f64,
    pub max_nm: f64,
    pub step_nm: f64,
    pub reference_nm: f64,
}

/// Retinal sampling grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub samples: usize,
    pub pitch_um: f64,
}

/// Through-focus sweep protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Sweep range in dioptres relative to the rendered image depth.
    #[serde(rename = "range_rel_D", default = "default_range")]
    pub range_rel_d: (f64, f64),
    #[serde(rename = "step_D", default = "default_step")]
    pub step_d: f64,
    #[serde(default)]
    pub refine_peak: bool,
    #[serde(default = "default_true")]
    pub include_boundary_peaks_in_mean: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            range_rel_d: DEFAULT_RANGE_REL_D,
            step_d: DEFAULT_STEP_D,
            refine_peak: false,
            include_boundary_peaks_in_mean: true,
        }
    }
}

/// One condition for which PSF and retinal-image PNGs are emitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageCondition {
    pub eye_id: String,
    pub density: u32,
    #[serde(rename = "rendered_rel_depth_D")]
    pub rendered_rel_depth_d: f64,
    /// Absolute accommodation vergence, dioptres. Omitted: the first
    /// configured metric's predicted accommodation for this condition.
    #[serde(rename = "accommodation_D", default, skip_serializing_if = "Option::is_none")]
    pub accommodation_d: Option<f64>,
}

fn default_true() -> bool {
    true
}
fn default_range() -> (f64, f64) {
    DEFAULT_RANGE_REL_D
}
fn default_step() -> f64 {
    DEFAULT_STEP_D
}
fn default_sce_rho() -> f64 {
    0.05
}
fn default_z_eye() -> f64 {
    DEFAULT_Z_EYE_M
}
fn default_cutoff() -> f64 {
    DEFAULT_CUTOFF_THRESHOLD
}
fn default_letter_height() -> f64 {
    60.0
}

/// Root configuration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub display: DisplaySection,
    pub eyes: EyeSection,
    pub spectrum: SpectrumSection,
    pub grid: GridSection,
    /// Metrics to sweep; the first one drives image-condition predictions.
    pub metrics: Vec<Metric>,
    #[serde(default)]
    pub sweep: SweepSection,
    /// Neural CSF parameter file; bundled parameters when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ncsf_asset: Option<PathBuf>,
    /// Accommodation-coupled spherical-aberration mode.
    #[serde(default)]
    pub sa_mode: SaMode,
    /// Stiles-Crawford peakedness (1/mm^2) at the reference wavelength.
    #[serde(default = "default_sce_rho")]
    pub sce_rho_per_mm2: f64,
    /// Pupil-to-retina distance, metres.
    #[serde(default = "default_z_eye")]
    pub z_eye_m: f64,
    /// Radial-MTF cut-off threshold (fraction of DC).
    #[serde(default = "default_cutoff")]
    pub cutoff_threshold: f64,
    /// Conditions rendered to PNG.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub images: Vec<ImageCondition>,
    /// Height of the letter-E test scene used for retinal-image renders, µm.
    #[serde(default = "default_letter_height")]
    pub letter_height_um: f64,
    pub output_dir: PathBuf,
    /// Worker threads for parallel sections; 0 = one per logical CPU.
    #[serde(default)]
    pub jobs: usize,
}

impl ExperimentConfig {
    /// Parses a config from JSON text. Use [`ExperimentConfig::from_path`]
    /// for file loading with relative-path resolution and validation.
    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Loads, resolves asset paths relative to the config's directory, and
    /// validates. Parse errors carry the file name plus line and column.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(vec![format!("{}: {e}", path.display())]))?;
        let mut config = serde_json::from_str::<Self>(&text)
            .map_err(|e| Error::Config(vec![format!("{}: {e}", path.display())]))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    /// Rebases relative asset and output paths onto `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        match &mut self.eyes {
            EyeSection::Population { asset: Some(p), .. } => rebase(p),
            EyeSection::Population { .. } => {}
            EyeSection::File { path } => rebase(path),
        }
        if let Some(p) = &mut self.ncsf_asset {
            rebase(p);
        }
        rebase(&mut self.output_dir);
    }

    /// Checks every field, collecting one message per problem; each message
    /// names the field it concerns.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let d = &self.display;
        if !(d.z_cdp_d > 0.0) || !d.z_cdp_d.is_finite() {
            problems.push(format!(
                "display.z_cdp_D: the central depth plane must have positive vergence, got {}",
                d.z_cdp_d
            ));
        }
        if !(d.pupil_diameter_mm > 0.0) || !d.pupil_diameter_mm.is_finite() {
            problems.push(format!(
                "display.pupil_diameter_mm: must be positive, got {}",
                d.pupil_diameter_mm
            ));
        }
        if d.densities.is_empty() {
            problems.push("display.densities: at least one viewpoint density required".into());
        }
        for &k in &d.densities {
            if k < 1 {
                problems.push(format!("display.densities: density must be >= 1, got {k}"));
            }
        }
        let mut sorted = d.densities.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != d.densities.len() {
            problems.push("display.densities: duplicate densities".into());
        }
        if d.rendered_depths_rel_d.is_empty() {
            problems
                .push("display.rendered_depths_rel_D: at least one rendered depth required".into());
        }
        if d.rendered_depths_rel_d.iter().any(|v| !v.is_finite()) {
            problems.push("display.rendered_depths_rel_D: depths must be finite".into());
        }

        match &self.eyes {
            EyeSection::Population { count, .. } => {
                if *count == 0 {
                    problems.push("eyes.count: must be >= 1".into());
                }
            }
            EyeSection::File { path } => {
                if path.as_os_str().is_empty() {
                    problems.push("eyes.path: must not be empty".into());
                }
            }
        }

        let s = &self.spectrum;
        let table = LuminosityTable::bundled();
        if !(s.min_nm <= s.max_nm) {
            problems.push(format!(
                "spectrum.min_nm/max_nm: need min <= max, got {} > {}",
                s.min_nm, s.max_nm
            ));
        }
        if !(s.step_nm > 0.0) || !s.step_nm.is_finite() {
            problems.push(format!("spectrum.step_nm: must be positive, got {}", s.step_nm));
        } else if s.max_nm > s.min_nm {
            let span = s.max_nm - s.min_nm;
            let steps = span / s.step_nm;
            if (steps - steps.round()).abs() > 1e-9 {
                problems.push(format!(
                    "spectrum.step_nm: step {} does not divide the range {}..{}",
                    s.step_nm, s.min_nm, s.max_nm
                ));
            }
        }
        if s.min_nm < table.min_lambda_nm() || s.max_nm > table.max_lambda_nm() {
            problems.push(format!(
                "spectrum.min_nm/max_nm: range {}..{} exceeds the luminosity table range {}..{}",
                s.min_nm,
                s.max_nm,
                table.min_lambda_nm(),
                table.max_lambda_nm()
            ));
        }
        if s.reference_nm < s.min_nm || s.reference_nm > s.max_nm {
            problems.push(format!(
                "spectrum.reference_nm: {} lies outside the sampled range {}..{}",
                s.reference_nm, s.min_nm, s.max_nm
            ));
        }

        if let Err(e) = self.grid_spec().validate() {
            problems.push(format!("grid: {e}"));
        }

        if self.metrics.is_empty() {
            problems.push("metrics: at least one metric required".into());
        }
        let mut metric_set = self.metrics.clone();
        metric_set.sort_by_key(|m| format!("{m}"));
        metric_set.dedup();
        if metric_set.len() != self.metrics.len() {
            problems.push("metrics: duplicate metrics".into());
        }

        let sw = &self.sweep;
        if !(sw.step_d > 0.0) || !sw.step_d.is_finite() {
            problems.push(format!("sweep.step_D: must be positive, got {}", sw.step_d));
        }
        if !(sw.range_rel_d.0 <= sw.range_rel_d.1) {
            problems.push(format!(
                "sweep.range_rel_D: must be ordered, got ({}, {})",
                sw.range_rel_d.0, sw.range_rel_d.1
            ));
        } else if sw.range_rel_d.0 > -1.0 || sw.range_rel_d.1 < 1.0 {
            problems.push(format!(
                "sweep.range_rel_D: must cover at least +/-1 D around the image depth, got ({}, {})",
                sw.range_rel_d.0, sw.range_rel_d.1
            ));
        }

        if self.sce_rho_per_mm2 < 0.0 || !self.sce_rho_per_mm2.is_finite() {
            problems
                .push(format!("sce_rho_per_mm2: must be >= 0, got {}", self.sce_rho_per_mm2));
        }
        if !(self.z_eye_m > 0.0) || !self.z_eye_m.is_finite() {
            problems.push(format!("z_eye_m: must be positive, got {}", self.z_eye_m));
        }
        if !(self.cutoff_threshold > 0.0 && self.cutoff_threshold <= 1.0) {
            problems.push(format!(
                "cutoff_threshold: must lie in (0, 1], got {}",
                self.cutoff_threshold
            ));
        }
        if !(self.letter_height_um > 0.0) || !self.letter_height_um.is_finite() {
            problems
                .push(format!("letter_height_um: must be positive, got {}", self.letter_height_um));
        }
        if self.output_dir.as_os_str().is_empty() {
            problems.push("output_dir: must not be empty".into());
        }

        for (i, img) in self.images.iter().enumerate() {
            if img.eye_id.is_empty() || img.eye_id.contains([',', '"', '\n']) {
                problems.push(format!(
                    "images[{i}].eye_id: must be nonempty without commas, quotes, or newlines"
                ));
            }
            if !d.densities.contains(&img.density) {
                problems.push(format!(
                    "images[{i}].density: {} is not one of display.densities",
                    img.density
                ));
            }
            if !d
                .rendered_depths_rel_d
                .iter()
                .any(|&z| (z - img.rendered_rel_depth_d).abs() < 1e-9)
            {
                problems.push(format!(
                    "images[{i}].rendered_rel_depth_D: {} is not one of display.rendered_depths_rel_D",
                    img.rendered_rel_depth_d
                ));
            }
            if let Some(v) = img.accommodation_d {
                if v < 0.0 || !v.is_finite() {
                    problems.push(format!(
                        "images[{i}].accommodation_D: must be >= 0, got {v}"
                    ));
                }
            }
        }

        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    /// The display configuration for one viewpoint density.
    pub fn display_for(&self, density: u32) -> DisplayConfig {
        DisplayConfig {
            z_cdp_d: self.display.z_cdp_d,
            density,
            pupil_diameter_mm: self.display.pupil_diameter_mm,
            rendered_depths_rel_d: self.display.rendered_depths_rel_d.clone(),
        }
    }

    pub fn grid_spec(&self) -> RetinalGridSpec {
        RetinalGridSpec { samples: self.grid.samples, pitch_um: self.grid.pitch_um }
    }

    pub fn spectrum(&self) -> Result<Spectrum> {
        let s = &self.spectrum;
        if s.min_nm == s.max_nm {
            return Ok(Spectrum::single(s.reference_nm));
        }
        Spectrum::sampled_range(
            s.min_nm,
            s.max_nm,
            s.step_nm,
            s.reference_nm,
            &LuminosityTable::bundled(),
        )
    }

    pub fn ncsf(&self) -> Result<NcsfParams> {
        match &self.ncsf_asset {
            None => Ok(NcsfParams::bundled()),
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| Error::Config(vec![format!("ncsf_asset {}: {e}", path.display())]))?;
                NcsfParams::from_json_str(&text)
            }
        }
    }

    pub fn sce(&self) -> SceProfile {
        SceProfile::Constant(self.sce_rho_per_mm2)
    }

    /// The population model configured for sampling, when eyes come from one.
    pub fn population(&self) -> Result<Option<PopulationModel>> {
        match &self.eyes {
            EyeSection::Population { asset: None, .. } => Ok(Some(PopulationModel::bundled())),
            EyeSection::Population { asset: Some(path), .. } => {
                let text = fs::read_to_string(path).map_err(|e| {
                    Error::Config(vec![format!("eyes.asset {}: {e}", path.display())])
                })?;
                Ok(Some(PopulationModel::from_json_str(&text)?))
            }
            EyeSection::File { .. } => Ok(None),
        }
    }

    /// Materializes the eye list: sampled from the population (optionally
    /// plus the population-mean eye) or loaded from a coefficient CSV, each
    /// carrying the configured Stiles-Crawford profile and axial length.
    pub fn build_eyes(&self) -> Result<Vec<EyeInstance>> {
        let pupil = self.display.pupil_diameter_mm;
        let eyes = match &self.eyes {
            EyeSection::Population { count, seed, include_average, .. } => {
                let model = self.population()?.expect("population source has a model");
                let mut eyes = sample_eyes(&model, *count, *seed, pupil)?;
                if *include_average {
                    eyes.push(average_eye(&model, pupil)?);
                }
                eyes
            }
            EyeSection::File { path } => {
                let text = fs::read_to_string(path).map_err(|e| {
                    Error::Config(vec![format!("eyes.path {}: {e}", path.display())])
                })?;
                eyes_from_csv(&text, pupil)?
            }
        };
        eyes.into_iter()
            .map(|eye| eye.with_sce(self.sce())?.with_z_eye(self.z_eye_m))
            .collect()
    }

    /// Mutable access to the sampling seed, when the eye source has one.
    pub fn seed_mut(&mut self) -> Option<&mut u64> {
        match &mut self.eyes {
            EyeSection::Population { seed, .. } => Some(seed),
            EyeSection::File { .. } => None,
        }
    }

    /// Total number of (eye, density, depth, metric) conditions a run will
    /// evaluate. For population sources this is exact without sampling.
    pub fn condition_count(&self) -> Result<usize> {
        let eye_count = match &self.eyes {
            EyeSection::Population { count, include_average, .. } => {
                count + usize::from(*include_average)
            }
            EyeSection::File { path } => {
                let text = fs::read_to_string(path).map_err(|e| {
                    Error::Config(vec![format!("eyes.path {}: {e}", path.display())])
                })?;
                eyes_from_csv(&text, self.display.pupil_diameter_mm)?.len()
            }
        };
        Ok(eye_count
            * self.display.densities.len()
            * self.display.rendered_depths_rel_d.len()
            * self.metrics.len())
    }
}

/// Serializes eyes to the coefficient-CSV interchange format:
/// `eye_id,pupil_diameter_mm,c0,c1,...` with OSA-indexed coefficients in µm.
pub fn eyes_to_csv(eyes: &[EyeInstance]) -> String {
    let modes = eyes.iter().map(|e| e.aberrations().mode_count()).max().unwrap_or(0);
    let mut out = String::from("eye_id,pupil_diameter_mm");
    for j in 0..modes {
        out.push_str(&format!(",c{j}"));
    }
    out.push('\n');
    for eye in eyes {
        out.push_str(eye.label());
        out.push_str(&format!(",{}", eye.aberrations().pupil_diameter_mm()));
        for j in 0..modes {
            out.push_str(&format!(",{}", eye.aberrations().get(j as u32)));
        }
        out.push('\n');
    }
    out
}

/// Parses the coefficient-CSV format and rescales each eye to
/// `sim_pupil_diameter_mm` (coefficient pupils must be >= the target).
pub fn eyes_from_csv(text: &str, sim_pupil_diameter_mm: f64) -> Result<Vec<EyeInstance>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Config(vec!["eye CSV is empty".into()]))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    if columns.len() < 3 || columns[0] != "eye_id" || columns[1] != "pupil_diameter_mm" {
        return Err(Error::Config(vec![format!(
            "eye CSV header must start with eye_id,pupil_diameter_mm,c0,...; got {header:?}"
        )]));
    }
    for (j, col) in columns[2..].iter().enumerate() {
        if *col != format!("c{j}") {
            return Err(Error::Config(vec![format!(
                "eye CSV column {} must be c{j}, got {col:?}",
                j + 2
            )]));
        }
    }
    let mut eyes = Vec::new();
    for (line_no, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != columns.len() {
            return Err(Error::Config(vec![format!(
                "eye CSV line {}: expected {} fields, got {}",
                line_no + 1,
                columns.len(),
                fields.len()
            )]));
        }
        let label = fields[0].to_string();
        if label.is_empty() {
            return Err(Error::Config(vec![format!(
                "eye CSV line {}: eye_id must not be empty",
                line_no + 1
            )]));
        }
        let parse = |field: &str, name: &str| -> Result<f64> {
            field.parse::<f64>().map_err(|_| {
                Error::Config(vec![format!(
                    "eye CSV line {}: {name} is not a number: {field:?}",
                    line_no + 1
                )])
            })
        };
        let pupil = parse(fields[1], "pupil_diameter_mm")?;
        let values = fields[2..]
            .iter()
            .enumerate()
            .map(|(j, f)| parse(f, &format!("c{j}")))
            .collect::<Result<Vec<f64>>>()?;
        let coeffs = ZernikeCoefficients::new(values, pupil)?;
        let rescaled = if (pupil - sim_pupil_diameter_mm).abs() > 1e-12 {
            rescale_pupil(&coeffs, sim_pupil_diameter_mm)?
        } else {
            coeffs
        };
        eyes.push(EyeInstance::new(label, rescaled));
    }
    if eyes.is_empty() {
        return Err(Error::Config(vec!["eye CSV contains no eyes".into()]));
    }
    Ok(eyes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_json() -> serde_json::Value {
        serde_json::json!({
            "display": {
                "z_cdp_D": 2.0,
                "pupil_diameter_mm": 3.0,
                "densities": [2, 3, 4],
                "rendered_depths_rel_D": [-2.0, -1.0, 0.0, 1.0, 2.0]
            },
            "eyes": { "source": "population", "count": 10, "seed": 7 },
            "spectrum": { "min_nm": 400.0, "max_nm": 700.0, "step_nm": 10.0, "reference_nm": 550.0 },
            "grid": { "samples": 256, "pitch_um": 1.0 },
            "metrics": ["vsotf", "strehl"],
            "output_dir": "out"
        })
    }

    #[test]
    fn minimal_config_parses_with_defaults() {
        let config = ExperimentConfig::from_json_str(&minimal_json().to_string()).unwrap();
        config.validate().unwrap();
        assert_eq!(config.sweep.step_d, DEFAULT_STEP_D);
        assert_eq!(config.sweep.range_rel_d, DEFAULT_RANGE_REL_D);
        assert_eq!(config.sa_mode, SaMode::default());
        assert_eq!(config.sce_rho_per_mm2, 0.05);
        assert_eq!(config.z_eye_m, DEFAULT_Z_EYE_M);
        assert!(!config.sweep.refine_peak);
        assert!(config.sweep.include_boundary_peaks_in_mean);
        assert_eq!(config.condition_count().unwrap(), 11 * 3 * 5 * 2);
        let display = config.display_for(3);
        assert_eq!(display.density, 3);
        display.validate().unwrap();
        assert_eq!(config.spectrum().unwrap().rows().len(), 31);
    }

    #[test]
    fn validation_names_every_bad_field() {
        let mut value = minimal_json();
        value["display"]["z_cdp_D"] = serde_json::json!(-1.0);
        value["display"]["densities"] = serde_json::json!([2, 2]);
        value["spectrum"]["step_nm"] = serde_json::json!(7.0);
        value["spectrum"]["reference_nm"] = serde_json::json!(900.0);
        value["grid"]["samples"] = serde_json::json!(100);
        value["metrics"] = serde_json::json!(["vsotf", "vsotf"]);
        value["sweep"] = serde_json::json!({ "range_rel_D": [-0.4, 0.4] });
        value["cutoff_threshold"] = serde_json::json!(1.5);
        let config = ExperimentConfig::from_json_str(&value.to_string()).unwrap();
        let err = config.validate().unwrap_err();
        let Error::Config(problems) = &err else { panic!("expected Config error, got {err}") };
        let text = problems.join("\n");
        for field in [
            "display.z_cdp_D",
            "display.densities",
            "spectrum.step_nm",
            "spectrum.reference_nm",
            "grid",
            "metrics",
            "sweep.range_rel_D",
            "cutoff_threshold",
        ] {
            assert!(text.contains(field), "missing complaint about {field} in:\n{text}");
        }
        // max > luminosity table? reference outside range also flagged once.
        assert!(problems.len() >= 8);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let mut value = minimal_json();
        value["pupil_mm"] = serde_json::json!(3.0);
        let err = ExperimentConfig::from_json_str(&value.to_string()).unwrap_err();
        assert!(err.to_string().contains("pupil_mm"), "unexpected error: {err}");
    }

    #[test]
    fn missing_seed_is_a_parse_error_naming_the_field() {
        let mut value = minimal_json();
        value["eyes"] = serde_json::json!({ "source": "population", "count": 10 });
        let err = ExperimentConfig::from_json_str(&value.to_string()).unwrap_err();
        assert!(err.to_string().contains("seed"), "unexpected error: {err}");
    }

    #[test]
    fn image_conditions_must_reference_configured_cells() {
        let mut value = minimal_json();
        value["images"] = serde_json::json!([
            { "eye_id": "eye-01", "density": 5, "rendered_rel_depth_D": -0.25 }
        ]);
        let config = ExperimentConfig::from_json_str(&value.to_string()).unwrap();
        let err = config.validate().unwrap_err();
        let text = err.to_string();
        assert!(text.contains("images[0].density"), "got: {text}");
        assert!(text.contains("images[0].rendered_rel_depth_D"), "got: {text}");
    }

    #[test]
    fn relative_paths_resolve_against_the_config_directory() {
        let mut config = ExperimentConfig::from_json_str(&minimal_json().to_string()).unwrap();
        config.ncsf_asset = Some(PathBuf::from("assets/ncsf.json"));
        config.resolve_paths(Path::new("/tmp/exp"));
        assert_eq!(config.ncsf_asset.as_deref(), Some(Path::new("/tmp/exp/assets/ncsf.json")));
        assert_eq!(config.output_dir, Path::new("/tmp/exp/out"));
    }

    #[test]
    fn sampled_eyes_are_deterministic_and_carry_settings() {
        let config = ExperimentConfig::from_json_str(&minimal_json().to_string()).unwrap();
        let a = config.build_eyes().unwrap();
        let b = config.build_eyes().unwrap();
        assert_eq!(a.len(), 11, "10 sampled + average");
        assert_eq!(a.last().unwrap().label(), "average");
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.label(), y.label());
            assert_eq!(
                x.aberrations().iter().collect::<Vec<_>>(),
                y.aberrations().iter().collect::<Vec<_>>()
            );
            assert_eq!(x.z_eye_m(), DEFAULT_Z_EYE_M);
        }
        let mut reseeded = config.clone();
        *reseeded.seed_mut().unwrap() = 8;
        let c = reseeded.build_eyes().unwrap();
        assert_ne!(
            a[0].aberrations().iter().collect::<Vec<_>>(),
            c[0].aberrations().iter().collect::<Vec<_>>()
        );
    }

    #[test]
    fn eye_csv_round_trips() {
        let config = ExperimentConfig::from_json_str(&minimal_json().to_string()).unwrap();
        let eyes = config.build_eyes().unwrap();
        let csv = eyes_to_csv(&eyes);
        let reloaded = eyes_from_csv(&csv, 3.0).unwrap();
        assert_eq!(reloaded.len(), eyes.len());
        for (orig, back) in eyes.iter().zip(&reloaded) {
            assert_eq!(orig.label(), back.label());
            for (j, v) in orig.aberrations().iter() {
                let rv = back.aberrations().get(j);
                assert!(
                    (v - rv).abs() <= 1e-12 * v.abs().max(1.0),
                    "{} c{j}: {v} vs {rv}",
                    orig.label()
                );
            }
        }
    }

    #[test]
    fn eye_csv_rejects_malformed_input() {
        assert!(eyes_from_csv("", 3.0).is_err());
        assert!(eyes_from_csv("eye_id,pupil_diameter_mm\n", 3.0).is_err());
        assert!(eyes_from_csv("eye_id,pupil_diameter_mm,c0\nx,3.0\n", 3.0).is_err());
        assert!(eyes_from_csv("eye_id,pupil_diameter_mm,c0\nx,3.0,abc\n", 3.0).is_err());
        assert!(eyes_from_csv("eye_id,pupil_diameter_mm,c1\nx,3.0,0.1\n", 3.0).is_err());
    }

    #[test]
    fn degenerate_spectrum_collapses_to_the_reference_line() {
        let mut value = minimal_json();
        value["spectrum"] =
            serde_json::json!({ "min_nm": 550.0, "max_nm": 550.0, "step_nm": 10.0, "reference_nm": 550.0 });
        let config = ExperimentConfig::from_json_str(&value.to_string()).unwrap();
        config.validate().unwrap();
        let spectrum = config.spectrum().unwrap();
        assert_eq!(spectrum.rows().len(), 1);
        assert_eq!(spectrum.rows()[0].0, 550.0);
    }
}

//! Experiment driver: turns a validated [`ExperimentConfig`] into the full
//! set of through-focus results — one experiment matrix per viewpoint
//! density over a shared eye population and diffraction-limited reference —
//! plus any requested PSF / retinal-image renders.
//!
//! All numerical work happens here; file emission lives in [`crate::report`].
//! Results are assembled in deterministic (density, eye, depth, metric)
//! order and are identical across worker counts and execution modes.

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::eye::{AccommodationState, EyeInstance};
use crate::field::RealField;
use crate::parallel::set_worker_threads;
use crate::through_focus::{
    experiment_matrix, DepthMeanRecord, DlReference, FocusMtfRecord, PredictionRecord,
    ThroughFocusCurve, ThroughFocusSettings,
};
use crate::wave::{letter_e_scene, retinal_psf, simulate_retinal_image, RetinalPSF};

/// One condition rendered to pixels: the retinal PSF and the retinal image
/// of a letter-E scene.
#[derive(Debug, Clone)]
pub struct RenderedCondition {
    /// File stem shared by the PNG pair and the sidecar metadata.
    pub stem: String,
    pub eye_id: String,
    pub density: u32,
    pub rendered_rel_depth_d: f64,
    /// Absolute accommodation vergence used for the render, dioptres.
    pub accommodation_d: f64,
    /// True when the accommodation came from the first configured metric's
    /// prediction rather than an explicit config value.
    pub accommodation_predicted: bool,
    pub psf: RetinalPSF,
    pub retinal_image: RealField,
}

/// Everything a run produces, before any file is written.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<PredictionRecord>,
    pub curves: Vec<ThroughFocusCurve>,
    pub mtf_at_focus: Vec<FocusMtfRecord>,
    pub depth_means: Vec<DepthMeanRecord>,
    pub eyes: Vec<EyeInstance>,
    pub images: Vec<RenderedCondition>,
    pub condition_count: usize,
}

/// Runs the full experiment described by `config` (which must already be
/// validated): builds the eye list, the diffraction-limited reference, and
/// one experiment matrix per viewpoint density, then renders any requested
/// image conditions.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutput> {
    // Pool sizing can only be set once per process; a pool that already
    // exists (tests, repeated runs) keeps its size, which only affects speed.
    let _ = set_worker_threads(config.jobs);

    let eyes = config.build_eyes()?;
    let grid = config.grid_spec();
    grid.validate()?;
    let spectrum = config.spectrum()?;
    let ncsf = config.ncsf()?;
    let sce = config.sce();

    // The reference is density-independent (open pupil), so one serves all.
    let dl = DlReference::new(
        &config.display_for(config.display.densities[0]),
        &spectrum,
        &grid,
        config.sa_mode,
        &sce,
        config.z_eye_m,
    )?;
    let mut settings = ThroughFocusSettings::new(&spectrum, &grid, config.sa_mode, &ncsf, &dl);
    settings.refine_peak = config.sweep.refine_peak;
    settings.include_boundary_peaks_in_mean = config.sweep.include_boundary_peaks_in_mean;
    settings.cutoff_threshold = config.cutoff_threshold;

    let mut output = RunOutput {
        records: Vec::new(),
        curves: Vec::new(),
        mtf_at_focus: Vec::new(),
        depth_means: Vec::new(),
        eyes,
        images: Vec::new(),
        condition_count: 0,
    };
    for &density in &config.display.densities {
        let display = config.display_for(density);
        let matrix = experiment_matrix(
            &output.eyes,
            &display,
            &config.metrics,
            config.sweep.range_rel_d,
            config.sweep.step_d,
            &settings,
        )?;
        output.condition_count += matrix.records.len();
        output.records.extend(matrix.records);
        output.curves.extend(matrix.curves);
        output.mtf_at_focus.extend(matrix.mtf_at_focus);
        output.depth_means.extend(matrix.depth_means);
    }

    render_image_conditions(config, &mut output)?;
    Ok(output)
}

/// Renders each configured image condition at its explicit accommodation or
/// at the first metric's predicted accommodation for that condition.
fn render_image_conditions(config: &ExperimentConfig, output: &mut RunOutput) -> Result<()> {
    if config.images.is_empty() {
        return Ok(());
    }
    let grid = config.grid_spec();
    let spectrum = config.spectrum()?;
    let scene = letter_e_scene(&grid, config.letter_height_um, 1.0, 0.0)?;
    let lead_metric = config.metrics[0];

    for condition in &config.images {
        let eye = output
            .eyes
            .iter()
            .find(|e| e.label() == condition.eye_id)
            .ok_or_else(|| {
                Error::domain(format!(
                    "image condition references unknown eye_id {:?}",
                    condition.eye_id
                ))
            })?;
        let (accommodation_d, predicted) = match condition.accommodation_d {
            Some(v) => (v, false),
            None => {
                let record = output
                    .records
                    .iter()
                    .find(|r| {
                        r.eye_id == condition.eye_id
                            && r.metric == lead_metric
                            && r.density == condition.density
                            && (r.rendered_rel_depth_d - condition.rendered_rel_depth_d).abs()
                                < 1e-9
                    })
                    .ok_or_else(|| {
                        Error::domain(format!(
                            "no {lead_metric} prediction found for image condition \
                             (eye {:?}, density {}, depth {} D)",
                            condition.eye_id, condition.density, condition.rendered_rel_depth_d
                        ))
                    })?;
                (record.predicted_accommodation_d, true)
            }
        };
        let display = config.display_for(condition.density);
        let (acc, clamped) =
            AccommodationState::from_vergence_clamped(accommodation_d, display.z_cdp_m())?;
        if clamped {
            return Err(Error::domain(format!(
                "image condition accommodation {accommodation_d} D is hyperopic"
            )));
        }
        let psf = retinal_psf(
            eye,
            &display,
            condition.rendered_rel_depth_d,
            &acc,
            &spectrum,
            &grid,
            config.sa_mode,
        )?;
        let retinal_image = simulate_retinal_image(&scene, &psf)?;
        let stem = format!(
            "k{}_z{:+.2}D_acc{:.2}D_{}",
            condition.density, condition.rendered_rel_depth_d, accommodation_d, condition.eye_id
        );
        output.images.push(RenderedCondition {
            stem,
            eye_id: condition.eye_id.clone(),
            density: condition.density,
            rendered_rel_depth_d: condition.rendered_rel_depth_d,
            accommodation_d,
            accommodation_predicted: predicted,
            psf,
            retinal_image,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ExperimentConfig {
        let value = serde_json::json!({
            "display": {
                "z_cdp_D": 2.0,
                "pupil_diameter_mm": 3.0,
                "densities": [1, 2],
                "rendered_depths_rel_D": [-0.4, 0.0]
            },
            "eyes": { "source": "population", "count": 2, "seed": 11, "include_average": false },
            "spectrum": { "min_nm": 550.0, "max_nm": 550.0, "step_nm": 10.0, "reference_nm": 550.0 },
            "grid": { "samples": 128, "pitch_um": 1.0 },
            "metrics": ["vsotf"],
            "sweep": { "range_rel_D": [-1.0, 1.0], "step_D": 0.2 },
            "sa_mode": "off",
            "images": [
                { "eye_id": "eye-01", "density": 2, "rendered_rel_depth_D": 0.0 },
                { "eye_id": "eye-02", "density": 2, "rendered_rel_depth_D": -0.4, "accommodation_D": 2.0 }
            ],
            "output_dir": "out"
        });
        let config = ExperimentConfig::from_json_str(&value.to_string()).unwrap();
        config.validate().unwrap();
        config
    }

    #[test]
    fn run_covers_the_configured_matrix_and_renders_images() {
        let config = tiny_config();
        let output = run_experiment(&config).unwrap();
        assert_eq!(output.eyes.len(), 2);
        assert_eq!(output.condition_count, 2 * 2 * 2, "eyes x densities x depths");
        assert_eq!(output.records.len(), config.condition_count().unwrap());
        assert_eq!(output.curves.len(), output.records.len());
        assert_eq!(output.mtf_at_focus.len(), output.records.len());
        assert_eq!(output.depth_means.len(), 2 * 2, "densities x depths");

        assert_eq!(output.images.len(), 2);
        let predicted = &output.images[0];
        assert!(predicted.accommodation_predicted);
        let matching = output
            .records
            .iter()
            .find(|r| {
                r.eye_id == "eye-01" && r.density == 2 && r.rendered_rel_depth_d == 0.0
            })
            .unwrap();
        assert_eq!(predicted.accommodation_d, matching.predicted_accommodation_d);
        let explicit = &output.images[1];
        assert!(!explicit.accommodation_predicted);
        assert_eq!(explicit.accommodation_d, 2.0);
        assert_eq!(explicit.stem, "k2_z-0.40D_acc2.00D_eye-02");
        // The render is a unit-energy PSF convolved with a binary scene, so
        // image values stay within the scene's dynamic range.
        let max = explicit.retinal_image.max_value();
        assert!(max > 0.0 && max <= 1.0 + 1e-9, "image max {max}");
    }

    #[test]
    fn runs_are_deterministic() {
        let config = tiny_config();
        let a = run_experiment(&config).unwrap();
        let b = run_experiment(&config).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.curves, b.curves);
        assert_eq!(a.depth_means, b.depth_means);
        for (x, y) in a.images.iter().zip(&b.images) {
            assert_eq!(x.stem, y.stem);
            assert_eq!(x.retinal_image.values(), y.retinal_image.values());
        }
    }

    #[test]
    fn unknown_image_eye_is_a_runtime_error() {
        let mut config = tiny_config();
        config.images[0].eye_id = "nonexistent".into();
        let err = run_experiment(&config).unwrap_err();
        assert!(err.to_string().contains("unknown eye_id"), "got: {err}");
    }
}

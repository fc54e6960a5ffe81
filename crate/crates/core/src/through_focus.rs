//! Through-focus analysis: sweep the eye's nominal accommodation across a
//! dioptre range, evaluate retinal image quality at each state, and read the
//! metric peak as the predicted accommodation response.
//!
//! The sweep grid is expressed in dioptres **relative to the rendered image
//! depth**, stepped uniformly (0.2 D by default). States that would require
//! negative absolute accommodation (focusing beyond infinity) are dropped and
//! the curve flagged `clamped`, reflecting that an eye does not accommodate
//! hyperopically. The experiment matrix evaluates every (eye, rendered depth)
//! combination for one display configuration, reusing each set of elemental
//! spectra across all rendered depths that share an accommodation state.

use std::collections::BTreeMap;
use std::fmt;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::display::{subaperture_layout, DisplayConfig, SubapertureLayout};
use crate::error::{Error, Result};
use crate::eye::{AccommodationState, EyeInstance, SaMode, SceProfile};
use crate::field::ComplexField;
use crate::metrics::{
    cutoff_frequency, ncsf_weight_map, radial_mtf, weighted_real_volume, Cutoff, NcsfParams,
    RadialMtf,
};
use crate::parallel::{map_collect, ExecMode};
use crate::wave::{
    centered_otf, dl_reference_psf, elemental_spectra, psf_from_otf, superpose_spectra,
    RetinalGridSpec, RetinalPSF, Spectrum,
};

/// Default sweep step in dioptres.
pub const DEFAULT_STEP_D: f64 = 0.2;

/// Default sweep range around the rendered image depth, in dioptres. Wide
/// enough that the CDP stays inside the range for rendered depths up to
/// +/-2 D from it.
pub const DEFAULT_RANGE_REL_D: (f64, f64) = (-2.4, 2.4);

/// Default radial-MTF cut-off threshold (fraction of the DC gain).
pub const DEFAULT_CUTOFF_THRESHOLD: f64 = 0.05;

/// Image-quality metric used to locate the accommodation peak.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// Visual Strehl ratio on the OTF (neural-weighted); the primary
    /// accommodation-response predictor.
    Vsotf,
    /// Plain Strehl ratio (PSF peak over reference peak).
    Strehl,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Vsotf => write!(f, "vsotf"),
            Metric::Strehl => write!(f, "strehl"),
        }
    }
}

/// Diffraction-limited reference for one display geometry: the open-pupil,
/// aberration-free PSF accommodated exactly at the CDP, plus its centred OTF.
/// Both metric normalizations (VSOTF denominator, Strehl peak) come from
/// here. The reference is independent of viewpoint density, so one instance
/// serves every density sharing a pupil diameter and CDP.
#[derive(Debug, Clone)]
pub struct DlReference {
    psf: RetinalPSF,
    otf: ComplexField,
}

impl DlReference {
    pub fn new(
        display: &DisplayConfig,
        spectrum: &Spectrum,
        grid: &RetinalGridSpec,
        sa_mode: SaMode,
        sce: &SceProfile,
        z_eye_m: f64,
    ) -> Result<Self> {
        let psf = dl_reference_psf(display, spectrum, grid, sa_mode, sce, z_eye_m)?;
        let otf = centered_otf(&psf);
        Ok(DlReference { psf, otf })
    }

    pub fn psf(&self) -> &RetinalPSF {
        &self.psf
    }

    /// Centred OTF of the reference PSF (frequency plane, cycles/degree).
    pub fn otf(&self) -> &ComplexField {
        &self.otf
    }
}

/// Shared inputs for through-focus evaluation.
#[derive(Debug, Clone)]
pub struct ThroughFocusSettings<'a> {
    pub spectrum: &'a Spectrum,
    pub grid: &'a RetinalGridSpec,
    pub sa_mode: SaMode,
    pub ncsf: &'a NcsfParams,
    pub dl: &'a DlReference,
    /// Fit a parabola through the discrete peak and its neighbours and report
    /// the vertex instead of the grid point. Off by default: the discrete
    /// argmax matches how through-focus peaks are conventionally read.
    pub refine_peak: bool,
    /// Whether curves whose peak sits on an open range boundary contribute to
    /// the per-depth mean predicted response. Included by default.
    pub include_boundary_peaks_in_mean: bool,
    /// Radial-MTF cut-off threshold used for the at-focus resolution table.
    pub cutoff_threshold: f64,
    pub exec: ExecMode,
}

impl<'a> ThroughFocusSettings<'a> {
    pub fn new(
        spectrum: &'a Spectrum,
        grid: &'a RetinalGridSpec,
        sa_mode: SaMode,
        ncsf: &'a NcsfParams,
        dl: &'a DlReference,
    ) -> Self {
        ThroughFocusSettings {
            spectrum,
            grid,
            sa_mode,
            ncsf,
            dl,
            refine_peak: false,
            include_boundary_peaks_in_mean: true,
            cutoff_threshold: DEFAULT_CUTOFF_THRESHOLD,
            exec: ExecMode::default(),
        }
    }
}

/// One metric-versus-accommodation curve for a single (eye, display, rendered
/// depth) condition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThroughFocusCurve {
    pub eye_id: String,
    pub density: u32,
    /// Rendered image depth relative to the CDP, dioptres.
    pub rendered_rel_depth_d: f64,
    /// Absolute vergence of the CDP, dioptres (context for absolute readout).
    pub cdp_vergence_d: f64,
    pub metric: Metric,
    /// Nominal accommodation relative to the rendered image depth, dioptres;
    /// sorted ascending with a uniform step.
    pub relative_accommodation_d: Vec<f64>,
    /// Metric value at each sampled accommodation state.
    pub values: Vec<f64>,
    /// Peak location in relative dioptres. A member of
    /// `relative_accommodation_d` unless parabolic refinement was enabled.
    pub peak_rel_d: f64,
    /// True when hyperopic (absolute vergence < 0) states were dropped from
    /// the low end of the requested range.
    pub clamped: bool,
    /// True when the peak sits on an open boundary of the sampled range (the
    /// last sample, or the first sample of an unclamped range), meaning the
    /// true peak may lie outside the sweep.
    pub boundary_peak: bool,
}

impl ThroughFocusCurve {
    /// Absolute vergence of the rendered image, dioptres.
    pub fn image_vergence_d(&self) -> f64 {
        self.cdp_vergence_d + self.rendered_rel_depth_d
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Predicted accommodation response for one condition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionRecord {
    pub eye_id: String,
    pub metric: Metric,
    pub density: u32,
    pub rendered_rel_depth_d: f64,
    /// Absolute predicted accommodation (vergence, dioptres).
    pub predicted_accommodation_d: f64,
    /// Signed error: predicted minus rendered-image vergence, dioptres.
    pub accommodation_error_d: f64,
    pub clamped: bool,
    pub boundary_peak: bool,
}

/// Radial MTF evaluated at the accommodation state the metric selected as
/// in-focus for one condition, with its threshold cut-off.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FocusMtfRecord {
    pub eye_id: String,
    pub metric: Metric,
    pub density: u32,
    pub rendered_rel_depth_d: f64,
    pub predicted_accommodation_d: f64,
    pub mtf: RadialMtf,
    pub cutoff: Cutoff,
}

/// Mean predicted response across eyes at one (metric, rendered depth).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DepthMeanRecord {
    pub metric: Metric,
    pub density: u32,
    pub rendered_rel_depth_d: f64,
    pub mean_predicted_accommodation_d: f64,
    pub mean_error_d: f64,
    /// Number of eyes contributing to the mean (boundary-peaked curves may be
    /// excluded via settings).
    pub eye_count: usize,
}

/// Full output of [`experiment_matrix`] for one display configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatrixResults {
    pub records: Vec<PredictionRecord>,
    pub curves: Vec<ThroughFocusCurve>,
    pub mtf_at_focus: Vec<FocusMtfRecord>,
    pub depth_means: Vec<DepthMeanRecord>,
}

/// The sampled relative/absolute accommodation grid for one rendered depth.
struct SweepGrid {
    rel_d: Vec<f64>,
    vergence_d: Vec<f64>,
    clamped: bool,
}

/// Builds the accommodation grid: multiples of `step_d` covering
/// `range_rel_d`, dropping states whose absolute vergence would be negative.
fn sweep_grid(image_vergence_d: f64, range_rel_d: (f64, f64), step_d: f64) -> Result<SweepGrid> {
    if !(step_d > 0.0) || !step_d.is_finite() {
        return Err(Error::domain(format!("sweep step must be positive, got {step_d}")));
    }
    if !(range_rel_d.0 <= range_rel_d.1) {
        return Err(Error::domain(format!(
            "sweep range must be ordered, got ({}, {})",
            range_rel_d.0, range_rel_d.1
        )));
    }
    let lo = (range_rel_d.0 / step_d).round() as i64;
    let hi = (range_rel_d.1 / step_d).round() as i64;
    let mut rel_d = Vec::with_capacity((hi - lo + 1).max(0) as usize);
    let mut vergence_d = Vec::with_capacity(rel_d.capacity());
    let mut clamped = false;
    for i in lo..=hi {
        let rel = i as f64 * step_d;
        let v = image_vergence_d + rel;
        if v < -1e-9 {
            clamped = true;
            continue;
        }
        rel_d.push(rel);
        vergence_d.push(v.max(0.0));
    }
    if rel_d.is_empty() {
        return Err(Error::domain(
            "through-focus range is empty after dropping hyperopic accommodation states",
        ));
    }
    Ok(SweepGrid { rel_d, vergence_d, clamped })
}

/// Index of the maximum value; ties resolve to the lowest index, i.e. toward
/// the more negative (farther) relative accommodation.
fn peak_index(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Parabolic vertex through the peak and its neighbours, clamped to half a
/// step. Falls back to the grid point at boundaries or when the three points
/// are not strictly concave.
fn refined_peak(rel_d: &[f64], values: &[f64], peak: usize) -> f64 {
    if peak == 0 || peak + 1 == values.len() {
        return rel_d[peak];
    }
    let (a, b, c) = (values[peak - 1], values[peak], values[peak + 1]);
    let curvature = a - 2.0 * b + c;
    if !(curvature < 0.0) {
        return rel_d[peak];
    }
    let step = rel_d[peak] - rel_d[peak - 1];
    let offset = 0.5 * (a - c) / curvature * step;
    rel_d[peak] + offset.clamp(-0.5 * step, 0.5 * step)
}

struct CurveContext<'a> {
    eye_id: &'a str,
    density: u32,
    rendered_rel_depth_d: f64,
    cdp_vergence_d: f64,
}

fn assemble_curve(
    ctx: &CurveContext<'_>,
    metric: Metric,
    rel_d: Vec<f64>,
    values: Vec<f64>,
    clamped: bool,
    refine: bool,
) -> ThroughFocusCurve {
    debug_assert_eq!(rel_d.len(), values.len());
    let peak = peak_index(&values);
    // A peak on the clamped (low) end is a legitimate "as far as the eye can
    // relax" answer; a peak on an open end means the true peak may have been
    // missed.
    let boundary_peak = peak + 1 == values.len() || (peak == 0 && !clamped);
    let peak_rel_d = if refine { refined_peak(&rel_d, &values, peak) } else { rel_d[peak] };
    ThroughFocusCurve {
        eye_id: ctx.eye_id.to_string(),
        density: ctx.density,
        rendered_rel_depth_d: ctx.rendered_rel_depth_d,
        cdp_vergence_d: ctx.cdp_vergence_d,
        metric,
        relative_accommodation_d: rel_d,
        values,
        peak_rel_d,
        clamped,
        boundary_peak,
    }
}

/// Both metric values plus the radial MTF for one evaluated accommodation
/// state.
#[derive(Debug, Clone)]
struct PointMetrics {
    vsotf: f64,
    strehl: f64,
    radial: RadialMtf,
}

impl Metric {
    fn value_of(self, point: &PointMetrics) -> f64 {
        match self {
            Metric::Vsotf => point.vsotf,
            Metric::Strehl => point.strehl,
        }
    }
}

/// Normalization constants shared across every evaluation in a sweep.
struct MetricBasis {
    weights: Array2<f64>,
    dl_volume: f64,
    dl_peak: f64,
}

impl MetricBasis {
    fn new(settings: &ThroughFocusSettings<'_>) -> Result<Self> {
        let dl_otf = settings.dl.otf();
        let weights = ncsf_weight_map(dl_otf.n(), dl_otf.pitch(), settings.ncsf);
        let dl_volume = weighted_real_volume(dl_otf, &weights);
        if !(dl_volume > 0.0) {
            return Err(Error::domain("reference OTF has zero weighted volume"));
        }
        let dl_peak = settings.dl.psf().field().max_value();
        Ok(MetricBasis { weights, dl_volume, dl_peak })
    }
}

/// Turns one superposed OTF into metric values via the same public pipeline a
/// caller would compose by hand (PSF reconstruction, centred OTF, weighted
/// volumes).
fn evaluate_superposition(
    otf_raw: &Array2<Complex64>,
    acc: &AccommodationState,
    z_eye_m: f64,
    grid: &RetinalGridSpec,
    basis: &MetricBasis,
) -> Result<PointMetrics> {
    let field = psf_from_otf(otf_raw, grid);
    let psf = RetinalPSF::from_field(field, *acc, z_eye_m)?;
    let strehl = psf.field().max_value() / basis.dl_peak;
    let centered = centered_otf(&psf);
    let vsotf = weighted_real_volume(&centered, &basis.weights) / basis.dl_volume;
    let radial = radial_mtf(&centered);
    Ok(PointMetrics { vsotf, strehl, radial })
}

fn check_reference_compatible(
    eye: &EyeInstance,
    display: &DisplayConfig,
    settings: &ThroughFocusSettings<'_>,
) -> Result<()> {
    let dl = settings.dl.psf();
    if (eye.z_eye_m() - dl.z_eye_m()).abs() > 1e-12 {
        return Err(Error::grid(format!(
            "eye axial length {} m does not match the reference {} m",
            eye.z_eye_m(),
            dl.z_eye_m()
        )));
    }
    if dl.field().n() != settings.grid.samples
        || (dl.field().pitch() - settings.grid.pitch_um).abs() > 1e-12
    {
        return Err(Error::grid("reference PSF grid does not match the requested grid"));
    }
    let acc_cdp = dl.accommodation().z_acc_m();
    if (acc_cdp - display.z_cdp_m()).abs() > 1e-12 {
        return Err(Error::grid(
            "reference PSF was built for a different central depth plane".to_string(),
        ));
    }
    Ok(())
}

/// Sweeps nominal accommodation for one (eye, display, rendered depth)
/// condition and returns the through-focus curve of `metric`.
///
/// `range_rel_d` and `step_d` are dioptres relative to the rendered image
/// depth ([`DEFAULT_RANGE_REL_D`], [`DEFAULT_STEP_D`] for the standard
/// protocol). States with negative absolute vergence are dropped (`clamped`);
/// an empty post-clamp range is an error.
pub fn sweep(
    eye: &EyeInstance,
    display: &DisplayConfig,
    z_r_rel_d: f64,
    metric: Metric,
    range_rel_d: (f64, f64),
    step_d: f64,
    settings: &ThroughFocusSettings<'_>,
) -> Result<ThroughFocusCurve> {
    display.validate()?;
    check_reference_compatible(eye, display, settings)?;
    let image_vergence_d = display.z_cdp_d + z_r_rel_d;
    let grid_points = sweep_grid(image_vergence_d, range_rel_d, step_d)?;
    let layout = subaperture_layout(display.density, display.pupil_diameter_mm)?;
    let basis = MetricBasis::new(settings)?;

    let points = map_collect(settings.exec, grid_points.vergence_d.clone(), |v| {
        evaluate_state(eye, display, &layout, v, &[z_r_rel_d], settings, &basis)
            .map(|mut points| points.pop().expect("one depth in, one point out"))
    });
    let mut values = Vec::with_capacity(points.len());
    for point in points {
        values.push(metric.value_of(&point?));
    }

    let ctx = CurveContext {
        eye_id: eye.label(),
        density: display.density,
        rendered_rel_depth_d: z_r_rel_d,
        cdp_vergence_d: display.z_cdp_d,
    };
    Ok(assemble_curve(
        &ctx,
        metric,
        grid_points.rel_d,
        values,
        grid_points.clamped,
        settings.refine_peak,
    ))
}

/// Computes the elemental spectra for one accommodation state once, then
/// evaluates the superposed PSF at each requested rendered depth.
fn evaluate_state(
    eye: &EyeInstance,
    display: &DisplayConfig,
    layout: &SubapertureLayout,
    vergence_d: f64,
    depths_rel_d: &[f64],
    settings: &ThroughFocusSettings<'_>,
    basis: &MetricBasis,
) -> Result<Vec<PointMetrics>> {
    let (acc, clamped) = AccommodationState::from_vergence_clamped(vergence_d, display.z_cdp_m())?;
    debug_assert!(!clamped, "negative vergence must be dropped before evaluation");
    let spectra = elemental_spectra(
        eye,
        layout,
        &acc,
        settings.spectrum,
        display,
        settings.grid,
        settings.sa_mode,
    )?;
    depths_rel_d
        .iter()
        .map(|&z_r_rel_d| {
            let otf = superpose_spectra(
                &spectra,
                layout,
                display,
                z_r_rel_d,
                eye.z_eye_m(),
                settings.grid,
            )?;
            evaluate_superposition(&otf, &acc, eye.z_eye_m(), settings.grid, basis)
        })
        .collect()
}

/// Converts a curve into its prediction record. The peak's relative position
/// *is* the signed accommodation error; the absolute prediction adds the
/// rendered-image vergence back in.
pub fn predict_accommodation(curve: &ThroughFocusCurve) -> PredictionRecord {
    let predicted = curve.image_vergence_d() + curve.peak_rel_d;
    PredictionRecord {
        eye_id: curve.eye_id.clone(),
        metric: curve.metric,
        density: curve.density,
        rendered_rel_depth_d: curve.rendered_rel_depth_d,
        predicted_accommodation_d: predicted,
        accommodation_error_d: curve.peak_rel_d,
        clamped: curve.clamped,
        boundary_peak: curve.boundary_peak,
    }
}

/// One parallel work unit: every (rendered depth, sweep slot) pair that lands
/// on the same absolute accommodation state for one eye.
#[derive(Clone)]
struct AccommodationGroup {
    vergence_d: f64,
    /// (depth index, slot index within that depth's sweep grid)
    members: Vec<(usize, usize)>,
}

/// Evaluates the full cross-product of eyes, rendered depths (taken from
/// `display.rendered_depths_rel_d`), and metrics for one display
/// configuration.
///
/// Work is grouped by distinct absolute accommodation state so each set of
/// elemental spectra is synthesized once per eye and reused across every
/// rendered depth sampling that state; groups run in parallel under
/// `settings.exec` and results are merged in deterministic (eye, state)
/// order, so the output is identical in both execution modes.
pub fn experiment_matrix(
    eyes: &[EyeInstance],
    display: &DisplayConfig,
    metrics: &[Metric],
    range_rel_d: (f64, f64),
    step_d: f64,
    settings: &ThroughFocusSettings<'_>,
) -> Result<MatrixResults> {
    display.validate()?;
    if eyes.is_empty() {
        return Err(Error::domain("experiment matrix needs at least one eye"));
    }
    if metrics.is_empty() {
        return Err(Error::domain("experiment matrix needs at least one metric"));
    }
    if display.rendered_depths_rel_d.is_empty() {
        return Err(Error::domain("experiment matrix needs at least one rendered depth"));
    }
    for eye in eyes {
        check_reference_compatible(eye, display, settings)?;
    }
    let depths = &display.rendered_depths_rel_d;
    let grids = depths
        .iter()
        .map(|&depth| sweep_grid(display.z_cdp_d + depth, range_rel_d, step_d))
        .collect::<Result<Vec<_>>>()?;

    // Group sweep slots by absolute accommodation state (1 nD resolution).
    let mut groups: BTreeMap<i64, AccommodationGroup> = BTreeMap::new();
    for (depth_idx, grid_points) in grids.iter().enumerate() {
        for (slot, &v) in grid_points.vergence_d.iter().enumerate() {
            let key = (v * 1e9).round() as i64;
            groups
                .entry(key)
                .or_insert_with(|| AccommodationGroup { vergence_d: v, members: Vec::new() })
                .members
                .push((depth_idx, slot));
        }
    }
    let groups: Vec<AccommodationGroup> = groups.into_values().collect();

    let layout = subaperture_layout(display.density, display.pupil_diameter_mm)?;
    let basis = MetricBasis::new(settings)?;

    let mut tasks = Vec::with_capacity(eyes.len() * groups.len());
    for eye_idx in 0..eyes.len() {
        for group in &groups {
            tasks.push((eye_idx, group.clone()));
        }
    }
    let outputs = map_collect(settings.exec, tasks, |(eye_idx, group)| {
        let depths_for_group: Vec<f64> =
            group.members.iter().map(|&(depth_idx, _)| depths[depth_idx]).collect();
        let points = evaluate_state(
            &eyes[eye_idx],
            display,
            &layout,
            group.vergence_d,
            &depths_for_group,
            settings,
            &basis,
        )?;
        Ok::<_, Error>((eye_idx, group, points))
    });

    // Deterministic merge: outputs arrive in task order in both exec modes.
    let mut table: Vec<Vec<Vec<Option<PointMetrics>>>> = eyes
        .iter()
        .map(|_| grids.iter().map(|g| vec![None; g.vergence_d.len()]).collect())
        .collect();
    for output in outputs {
        let (eye_idx, group, points) = output?;
        for (&(depth_idx, slot), point) in group.members.iter().zip(points) {
            table[eye_idx][depth_idx][slot] = Some(point);
        }
    }

    let mut results = MatrixResults {
        records: Vec::new(),
        curves: Vec::new(),
        mtf_at_focus: Vec::new(),
        depth_means: Vec::new(),
    };
    for (eye_idx, eye) in eyes.iter().enumerate() {
        for (depth_idx, grid_points) in grids.iter().enumerate() {
            let points: Vec<&PointMetrics> = table[eye_idx][depth_idx]
                .iter()
                .map(|p| p.as_ref().expect("every sweep slot belongs to exactly one group"))
                .collect();
            let ctx = CurveContext {
                eye_id: eye.label(),
                density: display.density,
                rendered_rel_depth_d: depths[depth_idx],
                cdp_vergence_d: display.z_cdp_d,
            };
            for &metric in metrics {
                let values: Vec<f64> = points.iter().map(|p| metric.value_of(p)).collect();
                let peak_slot = peak_index(&values);
                let curve = assemble_curve(
                    &ctx,
                    metric,
                    grid_points.rel_d.clone(),
                    values,
                    grid_points.clamped,
                    settings.refine_peak,
                );
                let record = predict_accommodation(&curve);
                let mtf = points[peak_slot].radial.clone();
                let cutoff = cutoff_frequency(&mtf, settings.cutoff_threshold)?;
                results.mtf_at_focus.push(FocusMtfRecord {
                    eye_id: record.eye_id.clone(),
                    metric,
                    density: display.density,
                    rendered_rel_depth_d: depths[depth_idx],
                    predicted_accommodation_d: record.predicted_accommodation_d,
                    mtf,
                    cutoff,
                });
                results.curves.push(curve);
                results.records.push(record);
            }
        }
    }

    for &metric in metrics {
        for (depth_idx, &depth) in depths.iter().enumerate() {
            let condition = |r: &&PredictionRecord| {
                r.metric == metric && r.rendered_rel_depth_d == depths[depth_idx]
            };
            let all: Vec<&PredictionRecord> = results.records.iter().filter(condition).collect();
            let kept: Vec<&PredictionRecord> = if settings.include_boundary_peaks_in_mean {
                all.clone()
            } else {
                let interior: Vec<&PredictionRecord> =
                    all.iter().copied().filter(|r| !r.boundary_peak).collect();
                // Fall back to the full set rather than reporting a mean of
                // nothing when every curve peaked on a boundary.
                if interior.is_empty() {
                    all.clone()
                } else {
                    interior
                }
            };
            let n = kept.len() as f64;
            results.depth_means.push(DepthMeanRecord {
                metric,
                density: display.density,
                rendered_rel_depth_d: depth,
                mean_predicted_accommodation_d: kept
                    .iter()
                    .map(|r| r.predicted_accommodation_d)
                    .sum::<f64>()
                    / n,
                mean_error_d: kept.iter().map(|r| r.accommodation_error_d).sum::<f64>() / n,
                eye_count: kept.len(),
            });
        }
    }
    Ok(results)
}

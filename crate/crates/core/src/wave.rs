//! Fourier-optics pipeline: generalized pupil functions for each display
//! subaperture, monochromatic and polychromatic elemental PSFs, superposed
//! retinal PSFs, OTFs, and simulated retinal images.
//!
//! Conventions. Pupil-plane pitches are mm, retinal pitches µm, frequency
//! pitches cycles/degree. The pupil phase is `exp(+i 2 pi W / lambda)` and
//! retinal coordinates map to pupil spatial frequencies as
//! `x = +lambda z_eye f`, so a positive wavefront slope displaces the PSF
//! toward positive coordinates (unreversed-image convention; the anatomical
//! retinal image is this pattern point-reflected, which no metric here
//! distinguishes). PSF grids store the origin at index N/2.

use ndarray::Array2;
use num_complex::Complex64;

use crate::display::{epsf_shift, subaperture_layout, DisplayConfig, SubapertureLayout};
use crate::error::{Error, Result};
use crate::eye::{AccommodationState, EyeInstance, LuminosityTable, SaMode, SceProfile};
use crate::fft::{apply_translation, fft2, fft2_pruned, fftshift, Dir};
use crate::field::{inside_disc, ComplexField, Plane, RealField, SampledField};
use crate::zernike::WavefrontEvaluator;

/// Retinal sampling: `samples` x `samples` pixels of `pitch_um`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetinalGridSpec {
    pub samples: usize,
    pub pitch_um: f64,
}

impl RetinalGridSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.samples.is_power_of_two() || self.samples < 4 {
            return Err(Error::grid(format!(
                "retinal grid side must be a power of two >= 4, got {}",
                self.samples
            )));
        }
        if !(self.pitch_um > 0.0) || !self.pitch_um.is_finite() {
            return Err(Error::grid(format!("retinal pitch must be positive, got {}", self.pitch_um)));
        }
        Ok(())
    }

    /// Half-extent of the field of view in µm.
    pub fn half_extent_um(&self) -> f64 {
        self.samples as f64 * self.pitch_um / 2.0
    }

    /// Pupil-plane pitch (mm) that makes the Fourier transform land exactly
    /// on this retinal grid at the given wavelength.
    pub fn pupil_pitch_mm(&self, lambda_nm: f64, z_eye_m: f64) -> f64 {
        lambda_nm * z_eye_m / (self.samples as f64 * self.pitch_um)
    }

    /// Frequency-plane pitch in cycles/degree.
    pub fn frequency_pitch_cpd(&self, z_eye_m: f64) -> f64 {
        retina_um_per_degree(z_eye_m) / (self.samples as f64 * self.pitch_um)
    }
}

/// Retinal extent of one degree of visual field, in µm.
pub fn retina_um_per_degree(z_eye_m: f64) -> f64 {
    z_eye_m * 1e6 * (std::f64::consts::PI / 180.0).tan()
}

/// Discrete illumination spectrum: wavelengths (nm) with luminosity weights
/// normalized to sum to one, plus the reference wavelength for chromatic
/// defocus.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    rows: Vec<(f64, f64)>,
    lambda_ref_nm: f64,
}

impl Spectrum {
    /// Uniformly sampled range weighted by the luminosity table.
    pub fn sampled_range(
        min_nm: f64,
        max_nm: f64,
        step_nm: f64,
        lambda_ref_nm: f64,
        table: &LuminosityTable,
    ) -> Result<Self> {
        if !(step_nm > 0.0) || max_nm < min_nm {
            return Err(Error::domain(format!(
                "bad spectrum range {min_nm}..{max_nm} step {step_nm}"
            )));
        }
        let count = ((max_nm - min_nm) / step_nm).round() as usize + 1;
        let lambdas: Vec<f64> = (0..count).map(|i| min_nm + step_nm * i as f64).collect();
        let weights = table.normalized_weights(&lambdas)?;
        let rows = lambdas.into_iter().zip(weights).collect();
        Ok(Spectrum { rows, lambda_ref_nm })
    }

    /// Single wavelength, also serving as its own reference (no chromatic
    /// defocus).
    pub fn single(lambda_nm: f64) -> Self {
        Spectrum { rows: vec![(lambda_nm, 1.0)], lambda_ref_nm: lambda_nm }
    }

    /// Explicit `(wavelength, weight)` rows; weights are normalized.
    pub fn from_weights(rows: Vec<(f64, f64)>, lambda_ref_nm: f64) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::domain("spectrum must not be empty"));
        }
        if rows.iter().any(|(l, w)| !(*l > 0.0) || *w < 0.0 || !w.is_finite()) {
            return Err(Error::domain("spectrum rows must have positive wavelengths and weights >= 0"));
        }
        let total: f64 = rows.iter().map(|(_, w)| w).sum();
        if total <= 0.0 {
            return Err(Error::domain("spectrum weights must not all be zero"));
        }
        let rows = rows.into_iter().map(|(l, w)| (l, w / total)).collect();
        Ok(Spectrum { rows, lambda_ref_nm })
    }

    pub fn rows(&self) -> &[(f64, f64)] {
        &self.rows
    }

    pub fn lambda_ref_nm(&self) -> f64 {
        self.lambda_ref_nm
    }
}

/// A unit-energy, nonnegative retinal point-spread function.
#[derive(Debug, Clone)]
pub struct RetinalPSF {
    field: RealField,
    accommodation: AccommodationState,
    z_eye_m: f64,
}

impl RetinalPSF {
    /// Wraps a retinal-plane field, clamping tiny negative interpolation
    /// ripples to zero and renormalizing to unit energy
    /// (`sum * pitch^2 = 1`). Significantly negative input is rejected.
    pub fn from_field(
        mut field: RealField,
        accommodation: AccommodationState,
        z_eye_m: f64,
    ) -> Result<Self> {
        if field.plane() != Plane::Retina {
            return Err(Error::grid("retinal PSF must be defined on the retina plane"));
        }
        let peak = field.max_value();
        if !(peak > 0.0) {
            return Err(Error::domain("PSF must contain positive energy"));
        }
        let floor = -2e-3 * peak;
        for v in field.values_mut().iter_mut() {
            if *v < 0.0 {
                if *v < floor {
                    return Err(Error::domain(format!(
                        "PSF value {v} is too negative to be an interpolation ripple (peak {peak})"
                    )));
                }
                *v = 0.0;
            }
        }
        let energy = field.integral();
        if !(energy > 0.0) {
            return Err(Error::domain("PSF energy vanished after clamping"));
        }
        for v in field.values_mut().iter_mut() {
            *v /= energy;
        }
        Ok(RetinalPSF { field, accommodation, z_eye_m })
    }

    pub fn field(&self) -> &RealField {
        &self.field
    }

    pub fn accommodation(&self) -> &AccommodationState {
        &self.accommodation
    }

    pub fn z_eye_m(&self) -> f64 {
        self.z_eye_m
    }
}

/// Generalized pupil function `P = A * exp(i 2 pi W / lambda)`.
/// `wavefront_um` is in micrometres; grids must match.
pub fn pupil_function(
    amplitude: &RealField,
    wavefront_um: &RealField,
    lambda_nm: f64,
) -> Result<ComplexField> {
    if !amplitude.same_grid(wavefront_um) {
        return Err(Error::grid("amplitude and wavefront grids differ"));
    }
    if amplitude.values().iter().any(|&a| a < 0.0) {
        return Err(Error::domain("pupil amplitude must be nonnegative"));
    }
    let lambda_um = lambda_nm * 1e-3;
    let values = ndarray::Zip::from(amplitude.values())
        .and(wavefront_um.values())
        .map_collect(|&a, &w| {
            let phase = 2.0 * std::f64::consts::PI * w / lambda_um;
            Complex64::from_polar(a, phase)
        });
    SampledField::new(values, amplitude.pitch(), Plane::Pupil, Some(lambda_nm))
}

/// Amplitude of subaperture `index`: pupil disc x Stiles-Crawford map x
/// subaperture indicator, sampled on the SCE map's grid as hard binary masks
/// (see [`inside_disc`] for why the edges are not anti-aliased).
pub fn aperture_amplitude(
    layout: &SubapertureLayout,
    index: usize,
    pupil_diameter_mm: f64,
    sce: &RealField,
) -> Result<RealField> {
    let Some(&(p, q)) = layout.centers_mm.get(index) else {
        return Err(Error::domain(format!(
            "subaperture index {index} out of range ({} present)",
            layout.count()
        )));
    };
    let n = sce.n();
    let pitch = sce.pitch();
    let half = (n / 2) as f64;
    let pupil_r = pupil_diameter_mm / 2.0;
    let sub_r = layout.diameter_mm / 2.0;
    let values = Array2::from_shape_fn((n, n), |(r, c)| {
        let y = (r as f64 - half) * pitch;
        let x = (c as f64 - half) * pitch;
        if inside_disc(x - p, y - q, sub_r) && inside_disc(x, y, pupil_r) {
            sce.values()[[r, c]]
        } else {
            0.0
        }
    });
    RealField::new(values, pitch, Plane::Pupil, sce.wavelength_nm())
}

/// Physical scale factor turning `|DFT(P)|^2` into a PSF whose integral over
/// the retina equals the pupil-plane energy integral (Parseval).
fn psf_energy_scale(pupil_pitch_mm: f64, lambda_nm: f64, z_eye_m: f64) -> f64 {
    let dp_m = pupil_pitch_mm * 1e-3;
    let lz = lambda_nm * 1e-9 * z_eye_m;
    (dp_m * dp_m / lz) * (dp_m * dp_m / lz)
}

/// Monochromatic elemental PSF of a sampled pupil field, evaluated on the
/// requested retinal grid via Fraunhofer propagation. The pupil is
/// bilinearly resampled onto the wavelength-dependent embedding pitch and
/// zero-padded to the grid size; output is unit-energy.
pub fn elemental_psf_mono(
    pupil: &ComplexField,
    lambda_nm: f64,
    z_eye_m: f64,
    grid: &RetinalGridSpec,
) -> Result<RealField> {
    grid.validate()?;
    if !(z_eye_m > 0.0) || !z_eye_m.is_finite() {
        return Err(Error::domain(format!("z_eye must be positive, got {z_eye_m} m")));
    }
    let n = grid.samples;
    let target_pitch = grid.pupil_pitch_mm(lambda_nm, z_eye_m);
    let source_extent = pupil.n() as f64 * pupil.pitch();
    if source_extent > n as f64 * target_pitch {
        return Err(Error::pitch_unreachable(format!(
            "pupil extent {source_extent:.3} mm exceeds the {:.3} mm embedding span at {lambda_nm} nm; \
             coarsen the retinal pitch or enlarge the grid",
            n as f64 * target_pitch
        )));
    }
    let mut embedded = resample_pupil_bilinear(pupil, n, target_pitch);
    let intensity = psf_intensity(&mut embedded, 0..n);
    let scale = psf_energy_scale(target_pitch, lambda_nm, z_eye_m);
    let mut values = intensity.mapv(|v| v * scale);
    fftshift(&mut values);
    let energy: f64 = values.iter().sum::<f64>() * grid.pitch_um * grid.pitch_um;
    if !(energy > 0.0) {
        return Err(Error::domain("pupil carries no energy"));
    }
    for v in values.iter_mut() {
        *v /= energy;
    }
    RealField::new(values, grid.pitch_um, Plane::Retina, Some(lambda_nm))
}

/// Bilinear resampling of a pupil field onto an `n`-point grid of
/// `target_pitch` (mm), both grids centred at index n/2.
fn resample_pupil_bilinear(
    pupil: &ComplexField,
    n: usize,
    target_pitch: f64,
) -> Array2<Complex64> {
    let src = pupil.values();
    let sn = pupil.n();
    let s_half = (sn / 2) as f64;
    let half = (n / 2) as f64;
    let ratio = target_pitch / pupil.pitch();
    Array2::from_shape_fn((n, n), |(r, c)| {
        let sy = (r as f64 - half) * ratio + s_half;
        let sx = (c as f64 - half) * ratio + s_half;
        if sy < 0.0 || sx < 0.0 || sy > (sn - 1) as f64 || sx > (sn - 1) as f64 {
            return Complex64::new(0.0, 0.0);
        }
        let y0 = sy.floor() as usize;
        let x0 = sx.floor() as usize;
        let y1 = (y0 + 1).min(sn - 1);
        let x1 = (x0 + 1).min(sn - 1);
        let fy = sy - y0 as f64;
        let fx = sx - x0 as f64;
        src[[y0, x0]] * ((1.0 - fy) * (1.0 - fx))
            + src[[y0, x1]] * ((1.0 - fy) * fx)
            + src[[y1, x0]] * (fy * (1.0 - fx))
            + src[[y1, x1]] * (fy * fx)
    })
}

/// In-place forward transform of the pupil field; returns `|FFT|^2` in
/// natural (unshifted) layout.
fn psf_intensity(field: &mut Array2<Complex64>, busy_rows: std::ops::Range<usize>) -> Array2<f64> {
    fft2_pruned(field, busy_rows, Dir::Forward);
    field.mapv(|v| v.norm_sqr())
}

/// Synthesizes the complex subaperture pupil field directly at `pitch_mm` on
/// an n x n grid: binary pupil and subaperture discs, SCE apodisation, and
/// the wavefront phase. Returns the field and the row range actually
/// occupied.
fn synthesize_subaperture_field(
    n: usize,
    pitch_mm: f64,
    pupil_diameter_mm: f64,
    center_mm: (f64, f64),
    sub_diameter_mm: f64,
    wavefront: &WavefrontEvaluator,
    lambda_nm: f64,
    sce_rho: f64,
) -> Result<(Array2<Complex64>, std::ops::Range<usize>)> {
    let half = (n / 2) as f64;
    let sub_r = sub_diameter_mm / 2.0;
    let pupil_r = pupil_diameter_mm / 2.0;
    let lambda_um = lambda_nm * 1e-3;
    let to_index = |coord: f64| (coord / pitch_mm + half).floor();
    let lo_r = (to_index(center_mm.1 - sub_r) as isize - 1).max(0) as usize;
    let hi_r = ((to_index(center_mm.1 + sub_r) as isize + 2).max(0) as usize).min(n);
    let lo_c = (to_index(center_mm.0 - sub_r) as isize - 1).max(0) as usize;
    let hi_c = ((to_index(center_mm.0 + sub_r) as isize + 2).max(0) as usize).min(n);
    if lo_r >= hi_r || lo_c >= hi_c {
        return Err(Error::grid(format!(
            "subaperture at ({}, {}) mm lies outside the pupil sampling window",
            center_mm.0, center_mm.1
        )));
    }
    let mut field = Array2::from_elem((n, n), Complex64::new(0.0, 0.0));
    for r in lo_r..hi_r {
        let y = (r as f64 - half) * pitch_mm;
        for c in lo_c..hi_c {
            let x = (c as f64 - half) * pitch_mm;
            if !inside_disc(x - center_mm.0, y - center_mm.1, sub_r)
                || !inside_disc(x, y, pupil_r)
            {
                continue;
            }
            let Some(w_um) = wavefront.eval(x, y) else {
                continue;
            };
            let amp = 10.0_f64.powf(-sce_rho * (x * x + y * y));
            let phase = 2.0 * std::f64::consts::PI * w_um / lambda_um;
            field[[r, c]] = Complex64::from_polar(amp, phase);
        }
    }
    Ok((field, lo_r..hi_r))
}

/// Polychromatic elemental PSF of subaperture `index`: luminosity-weighted
/// sum of per-wavelength unit-energy PSFs on the shared retinal grid,
/// renormalized to unit energy. The pupil is synthesized analytically at
/// each wavelength's embedding pitch, so no resampling error enters.
#[allow(clippy::too_many_arguments)]
pub fn elemental_psf_poly(
    eye: &EyeInstance,
    layout: &SubapertureLayout,
    index: usize,
    acc: &AccommodationState,
    spectrum: &Spectrum,
    display: &DisplayConfig,
    grid: &RetinalGridSpec,
    sa_mode: SaMode,
) -> Result<RealField> {
    let values = elemental_psf_poly_shifted_layout(
        eye, layout, index, acc, spectrum, display, grid, sa_mode,
    )?;
    RealField::new(values, grid.pitch_um, Plane::Retina, None)
}

/// As [`elemental_psf_poly`] but returning the raw array (origin at N/2).
#[allow(clippy::too_many_arguments)]
fn elemental_psf_poly_shifted_layout(
    eye: &EyeInstance,
    layout: &SubapertureLayout,
    index: usize,
    acc: &AccommodationState,
    spectrum: &Spectrum,
    display: &DisplayConfig,
    grid: &RetinalGridSpec,
    sa_mode: SaMode,
) -> Result<Array2<f64>> {
    grid.validate()?;
    display.validate()?;
    if index >= layout.count() {
        return Err(Error::domain(format!(
            "subaperture index {index} out of range ({} present)",
            layout.count()
        )));
    }
    let n = grid.samples;
    let d_p = display.pupil_diameter_mm;
    let mut acc_psf = Array2::zeros((n, n));
    for &(lambda_nm, weight) in spectrum.rows() {
        if weight == 0.0 {
            continue;
        }
        let pitch = grid.pupil_pitch_mm(lambda_nm, eye.z_eye_m());
        if d_p > n as f64 * pitch {
            return Err(Error::pitch_unreachable(format!(
                "pupil ({d_p} mm) exceeds the {:.3} mm embedding span at {lambda_nm} nm; \
                 coarsen the retinal pitch or enlarge the grid",
                n as f64 * pitch
            )));
        }
        let coeffs = crate::eye::total_wavefront(
            eye,
            lambda_nm,
            spectrum.lambda_ref_nm(),
            acc,
            d_p,
            sa_mode,
        )?
        .without_piston_and_tilt();
        let evaluator = WavefrontEvaluator::new(&coeffs);
        let (mut field, busy_rows) = synthesize_subaperture_field(
            n,
            pitch,
            d_p,
            layout.centers_mm[index],
            layout.diameter_mm,
            &evaluator,
            lambda_nm,
            eye.sce_rho(lambda_nm),
        )?;
        let intensity = psf_intensity(&mut field, busy_rows);
        let sum: f64 = intensity.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::domain(format!("subaperture {index} carries no energy")));
        }
        // Unit energy per wavelength, then luminosity weighting.
        let scale = weight / (sum * grid.pitch_um * grid.pitch_um);
        acc_psf.zip_mut_with(&intensity, |a, &i| *a += i * scale);
    }
    fftshift(&mut acc_psf);
    let energy: f64 = acc_psf.iter().sum::<f64>() * grid.pitch_um * grid.pitch_um;
    for v in acc_psf.iter_mut() {
        *v /= energy;
    }
    Ok(acc_psf)
}

/// Forward transforms of every subaperture's polychromatic elemental PSF
/// (natural layout), ready for shift-and-accumulate superposition at any
/// rendered depth. Shared by the one-shot [`retinal_psf`] and the sweep
/// runner, which reuses one set across all depths at a fixed accommodation.
pub(crate) fn elemental_spectra(
    eye: &EyeInstance,
    layout: &SubapertureLayout,
    acc: &AccommodationState,
    spectrum: &Spectrum,
    display: &DisplayConfig,
    grid: &RetinalGridSpec,
    sa_mode: SaMode,
) -> Result<Vec<Array2<Complex64>>> {
    (0..layout.count())
        .map(|index| {
            let mut psf = elemental_psf_poly_shifted_layout(
                eye, layout, index, acc, spectrum, display, grid, sa_mode,
            )?;
            fftshift(&mut psf);
            let mut complex = psf.mapv(|v| Complex64::new(v, 0.0));
            fft2(&mut complex, Dir::Forward);
            Ok(complex)
        })
        .collect()
}

/// Accumulates the elemental spectra with their depth-dependent retinal
/// shifts into one DC-normalized OTF (natural layout). Returns the OTF array.
pub(crate) fn superpose_spectra(
    spectra: &[Array2<Complex64>],
    layout: &SubapertureLayout,
    display: &DisplayConfig,
    z_r_rel_d: f64,
    z_eye_m: f64,
    grid: &RetinalGridSpec,
) -> Result<Array2<Complex64>> {
    let z_r_m = display.rendered_depth_m(z_r_rel_d);
    let n = grid.samples;
    let mut total: Array2<Complex64> = Array2::zeros((n, n));
    for (index, spectrum) in spectra.iter().enumerate() {
        let (dx_m, dy_m) = epsf_shift(
            z_r_m,
            display.z_cdp_m(),
            z_eye_m,
            layout.centers_mm[index],
        );
        // Rendering counter-shifts elemental images so they align when the
        // eye accommodates at the rendered depth.
        let tx_um = -dx_m * 1e6;
        let ty_um = -dy_m * 1e6;
        if tx_um.abs() > grid.half_extent_um() || ty_um.abs() > grid.half_extent_um() {
            return Err(Error::field_of_view(format!(
                "elemental shift ({tx_um:.1}, {ty_um:.1}) um exceeds the {:.1} um half-extent",
                grid.half_extent_um()
            )));
        }
        let mut shifted = spectrum.clone();
        apply_translation(&mut shifted, ty_um / grid.pitch_um, tx_um / grid.pitch_um);
        total.zip_mut_with(&shifted, |t, &s| *t += s);
    }
    let dc = total[[0, 0]];
    if !(dc.norm() > 0.0) {
        return Err(Error::domain("superposed OTF has zero DC"));
    }
    for v in total.iter_mut() {
        *v /= dc;
    }
    Ok(total)
}

/// Inverse-transforms a DC-normalized OTF (natural layout) into a PSF field
/// (origin at N/2). Values are the real parts; tiny imaginary residue and
/// negative ripples are left for [`RetinalPSF::from_field`] to clean.
pub(crate) fn psf_from_otf(otf: &Array2<Complex64>, grid: &RetinalGridSpec) -> RealField {
    let mut work = otf.clone();
    fft2(&mut work, Dir::Inverse);
    let mut values = work.mapv(|v| v.re);
    fftshift(&mut values);
    RealField::new(values, grid.pitch_um, Plane::Retina, None)
        .expect("OTF grid is a valid retinal grid")
}

/// Superposed retinal PSF for content rendered at `z_r_rel_d` dioptres from
/// the CDP, viewed at accommodation `acc`: each subaperture's polychromatic
/// elemental PSF is translated by the rendering counter-shift (sub-pixel
/// shifts via frequency-domain phase ramps) and the unit-energy sum is
/// returned.
pub fn retinal_psf(
    eye: &EyeInstance,
    display: &DisplayConfig,
    z_r_rel_d: f64,
    acc: &AccommodationState,
    spectrum: &Spectrum,
    grid: &RetinalGridSpec,
    sa_mode: SaMode,
) -> Result<RetinalPSF> {
    display.validate()?;
    let layout = subaperture_layout(display.density, display.pupil_diameter_mm)?;
    let spectra = elemental_spectra(eye, &layout, acc, spectrum, display, grid, sa_mode)?;
    let otf = superpose_spectra(&spectra, &layout, display, z_r_rel_d, eye.z_eye_m(), grid)?;
    let field = psf_from_otf(&otf, grid);
    RetinalPSF::from_field(field, *acc, eye.z_eye_m())
}

/// Diffraction-limited reference: open pupil, zero monochromatic
/// aberrations, accommodated exactly at the CDP, but retaining chromatic
/// defocus and the accommodation-coupled spherical-aberration term so the
/// reference sees the same wavelength mix as the aberrated eyes.
pub fn dl_reference_psf(
    display: &DisplayConfig,
    spectrum: &Spectrum,
    grid: &RetinalGridSpec,
    sa_mode: SaMode,
    sce: &SceProfile,
    z_eye_m: f64,
) -> Result<RetinalPSF> {
    let coeffs = crate::zernike::ZernikeCoefficients::zero(display.pupil_diameter_mm)?;
    let eye = EyeInstance::new("diffraction-limited", coeffs)
        .with_sce(sce.clone())?
        .with_z_eye(z_eye_m)?;
    let open = DisplayConfig { density: 1, ..display.clone() };
    let acc = AccommodationState::new(open.z_cdp_m(), open.z_cdp_m())?;
    retinal_psf(&eye, &open, 0.0, &acc, spectrum, grid, sa_mode)
}

/// Optical transfer function of a PSF: Fourier transform normalized to
/// exactly 1 at DC, on a frequency grid in cycles/degree. No recentring is
/// applied here, so a displaced PSF keeps its phase ramp.
pub fn otf(psf: &RetinalPSF) -> ComplexField {
    let mut work = psf.field().values().mapv(|v| Complex64::new(v, 0.0));
    fftshift(&mut work);
    fft2(&mut work, Dir::Forward);
    let dc = work[[0, 0]];
    for v in work.iter_mut() {
        *v /= dc;
    }
    fftshift(&mut work);
    let pitch = RetinalGridSpec { samples: psf.field().n(), pitch_um: psf.field().pitch() }
        .frequency_pitch_cpd(psf.z_eye_m());
    SampledField::new(work, pitch, Plane::Frequency, None)
        .expect("PSF grid is a valid frequency grid")
}

/// OTF of the PSF recentred at its intensity centroid (integer peak roll
/// plus fractional centroid, applied as one exact phase ramp). Metrics built
/// on the real part of the OTF need this so lateral displacement of the
/// image does not masquerade as contrast loss.
pub fn centered_otf(psf: &RetinalPSF) -> ComplexField {
    let values = psf.field().values();
    let n = psf.field().n();
    // Integer roll: put the peak at the grid centre so the centroid window
    // cannot wrap.
    let (mut pr, mut pc, mut peak) = (0usize, 0usize, f64::NEG_INFINITY);
    for ((r, c), &v) in values.indexed_iter() {
        if v > peak {
            peak = v;
            pr = r;
            pc = c;
        }
    }
    let half = n / 2;
    let roll_r = half as isize - pr as isize;
    let roll_c = half as isize - pc as isize;
    let mut sum = 0.0;
    let mut mr = 0.0;
    let mut mc = 0.0;
    for ((r, c), &v) in values.indexed_iter() {
        let rr = (r as isize + roll_r).rem_euclid(n as isize) as f64;
        let cc = (c as isize + roll_c).rem_euclid(n as isize) as f64;
        sum += v;
        mr += v * rr;
        mc += v * cc;
    }
    let centroid_r = mr / sum - half as f64;
    let centroid_c = mc / sum - half as f64;
    // Total displacement of the centroid from the grid centre, in pixels.
    let off_r = centroid_r - roll_r as f64;
    let off_c = centroid_c - roll_c as f64;
    let mut work = values.mapv(|v| Complex64::new(v, 0.0));
    fftshift(&mut work);
    fft2(&mut work, Dir::Forward);
    apply_translation(&mut work, -off_r, -off_c);
    let dc = work[[0, 0]];
    for v in work.iter_mut() {
        *v /= dc;
    }
    fftshift(&mut work);
    let pitch = RetinalGridSpec { samples: n, pitch_um: psf.field().pitch() }
        .frequency_pitch_cpd(psf.z_eye_m());
    SampledField::new(work, pitch, Plane::Frequency, None)
        .expect("PSF grid is a valid frequency grid")
}

/// Convolves a retinal-plane scene with the PSF (cyclic, energy-preserving:
/// a flat scene stays flat).
pub fn simulate_retinal_image(scene: &RealField, psf: &RetinalPSF) -> Result<RealField> {
    if !scene.same_grid(psf.field()) {
        return Err(Error::grid(format!(
            "scene grid ({} px at {} um) does not match the PSF grid ({} px at {} um)",
            scene.n(),
            scene.pitch(),
            psf.field().n(),
            psf.field().pitch()
        )));
    }
    if scene.plane() != Plane::Retina {
        return Err(Error::grid("scene must be given on the retina plane"));
    }
    let kernel_sum: f64 = psf.field().values().iter().sum();
    let mut kernel = psf.field().values().mapv(|v| Complex64::new(v / kernel_sum, 0.0));
    fftshift(&mut kernel);
    fft2(&mut kernel, Dir::Forward);
    let mut image = scene.values().mapv(|v| Complex64::new(v, 0.0));
    fft2(&mut image, Dir::Forward);
    image.zip_mut_with(&kernel, |i, &k| *i *= k);
    fft2(&mut image, Dir::Inverse);
    RealField::new(image.mapv(|v| v.re), scene.pitch(), Plane::Retina, None)
}

/// A centred Snellen-style letter E on a retinal grid: three horizontal bars
/// and the left vertical stem on a 5x5 stroke raster.
pub fn letter_e_scene(
    grid: &RetinalGridSpec,
    height_um: f64,
    foreground: f64,
    background: f64,
) -> Result<RealField> {
    grid.validate()?;
    if !(height_um > 0.0) {
        return Err(Error::domain("letter height must be positive"));
    }
    let n = grid.samples;
    let half = (n / 2) as f64;
    let values = Array2::from_shape_fn((n, n), |(r, c)| {
        let y = (r as f64 - half) * grid.pitch_um;
        let x = (c as f64 - half) * grid.pitch_um;
        // Unit square [0,5) over the letter box, y growing downward.
        let u = (x + height_um / 2.0) / height_um * 5.0;
        let v = (y + height_um / 2.0) / height_um * 5.0;
        if !(0.0..5.0).contains(&u) || !(0.0..5.0).contains(&v) {
            return background;
        }
        let stroke = v < 1.0 || (2.0..3.0).contains(&v) || v >= 4.0 || u < 1.0;
        if stroke {
            foreground
        } else {
            background
        }
    });
    RealField::new(values, grid.pitch_um, Plane::Retina, None)
}

//! Wave-optics simulation of retinal image formation for integral-imaging
//! light-field displays viewed by aberrated human eyes.
//!
//! The physical model: a light-field display synthesizes each image point as a
//! bundle of elemental beams, one per viewpoint, that pass through distinct
//! subapertures of the eye pupil. Every elemental beam diverges from the
//! display's central depth plane (CDP), so the optical defocus of each beam is
//! governed by the eye's accommodation relative to the CDP, while the rendered
//! depth only translates the elemental point-spread functions across the
//! retina. The retinal image of a point is the incoherent superposition of the
//! elemental PSFs; accommodation responses are predicted by sweeping the
//! accommodation state and maximizing a visual-quality metric of the combined
//! PSF.
//!
//! Module map:
//! - [`zernike`]: OSA/ANSI-indexed Zernike polynomials, wavefront maps,
//!   defocus conversion, and pupil rescaling.
//! - [`eye`]: population sampling of aberration coefficients, chromatic and
//!   accommodation-dependent terms, Stiles-Crawford apodisation.
//! - [`display`]: viewpoint geometry, subaperture layouts, elemental PSF
//!   shifts.
//! - [`wave`]: pupil functions, monochromatic/polychromatic elemental PSFs,
//!   retinal PSF assembly, OTFs, and scene convolution.
//! - [`metrics`]: neural contrast sensitivity, VSOTF, Strehl ratio, radial
//!   MTF, and cut-off estimation.
//! - [`through_focus`]: accommodation sweeps, peak finding, and the
//!   eye-by-display experiment matrix.
//! - [`config`] / [`experiment`] / [`report`]: run configuration, the
//!   experiment driver, and file emission used by the CLI.

pub mod config;
pub mod display;
pub mod error;
pub mod experiment;
pub mod eye;
pub mod fft;
pub mod field;
pub mod metrics;
pub mod parallel;
pub mod report;
pub mod through_focus;
pub mod wave;
pub mod zernike;

pub use error::{Error, Result};
pub use field::{ComplexField, Plane, RealField, SampledField};
pub use parallel::ExecMode;

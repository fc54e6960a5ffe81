//! 2-D FFT helpers on square power-of-two grids.
//!
//! Transforms are unnormalized in the forward direction; the inverse divides
//! by `n*n` so a forward/inverse round trip is the identity. Row/column passes
//! share plans through a global planner; plans are cheap `Arc` clones.

use std::ops::Range;
use std::sync::{Arc, Mutex};

use ndarray::Array2;
use num_complex::Complex64;
use once_cell::sync::Lazy;
use rustfft::{Fft, FftDirection, FftPlanner};

static PLANNER: Lazy<Mutex<FftPlanner<f64>>> = Lazy::new(|| Mutex::new(FftPlanner::new()));

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dir {
    Forward,
    Inverse,
}

fn plan(n: usize, dir: Dir) -> Arc<dyn Fft<f64>> {
    let mut planner = PLANNER.lock().expect("fft planner poisoned");
    match dir {
        Dir::Forward => planner.plan_fft(n, FftDirection::Forward),
        Dir::Inverse => planner.plan_fft(n, FftDirection::Inverse),
    }
}

fn fft_rows(data: &mut Array2<Complex64>, rows: Range<usize>, dir: Dir) {
    let n = data.ncols();
    let fft = plan(n, dir);
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    let slice = data.as_slice_mut().expect("field must be contiguous");
    for r in rows {
        fft.process_with_scratch(&mut slice[r * n..(r + 1) * n], &mut scratch);
    }
}

/// Blocked in-place transpose of a square array.
fn transpose_square(data: &mut Array2<Complex64>) {
    let n = data.nrows();
    let s = data.as_slice_mut().expect("field must be contiguous");
    const B: usize = 64;
    for bi in (0..n).step_by(B) {
        for bj in (bi..n).step_by(B) {
            for i in bi..(bi + B).min(n) {
                let j0 = if bi == bj { i + 1 } else { bj };
                for j in j0..(bj + B).min(n) {
                    s.swap(i * n + j, j * n + i);
                }
            }
        }
    }
}

/// Full 2-D transform, in place.
pub fn fft2(data: &mut Array2<Complex64>, dir: Dir) {
    let n = data.nrows();
    fft2_pruned(data, 0..n, dir);
}

/// 2-D transform where only `busy_rows` may contain nonzero input; all other
/// rows must be zero. Skipping their row transforms is exact and saves most of
/// the row pass when the occupied region is small (an embedded subaperture).
pub fn fft2_pruned(data: &mut Array2<Complex64>, busy_rows: Range<usize>, dir: Dir) {
    let n = data.nrows();
    debug_assert_eq!(n, data.ncols());
    fft_rows(data, busy_rows, dir);
    transpose_square(data);
    fft_rows(data, 0..n, dir);
    transpose_square(data);
    if dir == Dir::Inverse {
        let scale = 1.0 / (n * n) as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }
}

/// Swaps quadrants so the zero-frequency (or grid-centre) sample moves between
/// index 0 and index n/2. Self-inverse on even-sided grids.
pub fn fftshift<T: Copy>(data: &mut Array2<T>) {
    let n = data.nrows();
    debug_assert!(n % 2 == 0);
    let h = n / 2;
    let s = data.as_slice_mut().expect("field must be contiguous");
    for i in 0..h {
        let i2 = i + h;
        for j in 0..n {
            let j2 = (j + h) % n;
            s.swap(i * n + j, i2 * n + j2);
        }
    }
}

/// Signed frequency index of DFT bin `k` on an `n`-point axis.
pub fn freq_index(k: usize, n: usize) -> isize {
    if k < n / 2 {
        k as isize
    } else {
        k as isize - n as isize
    }
}

/// Multiplies a spectrum by the phase ramp that translates the corresponding
/// spatial field by `(shift_rows, shift_cols)` pixels (fractional shifts
/// interpolate in the band-limited sense).
pub fn apply_translation(spectrum: &mut Array2<Complex64>, shift_rows: f64, shift_cols: f64) {
    let n = spectrum.nrows();
    let ramp = |shift: f64| -> Vec<Complex64> {
        (0..n)
            .map(|k| {
                let f = freq_index(k, n) as f64 / n as f64;
                Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * f * shift)
            })
            .collect()
    };
    let row_ramp = ramp(shift_rows);
    let col_ramp = ramp(shift_cols);
    for (r, mut row) in spectrum.rows_mut().into_iter().enumerate() {
        let pr = row_ramp[r];
        for (c, v) in row.iter_mut().enumerate() {
            *v *= pr * col_ramp[c];
        }
    }
}

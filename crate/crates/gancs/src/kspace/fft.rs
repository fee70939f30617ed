//! Centered, unitary 2D FFT on row-major complex buffers.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft(len, direction))
}

/// Roll each axis so index 0 moves to `(shift_r, shift_c)`.
fn roll2(data: &mut [Complex64], h: usize, w: usize, shift_r: usize, shift_c: usize) {
    let mut out = vec![Complex64::new(0.0, 0.0); data.len()];
    for r in 0..h {
        let tr = (r + shift_r) % h;
        for c in 0..w {
            let tc = (c + shift_c) % w;
            out[tr * w + tc] = data[r * w + c];
        }
    }
    data.copy_from_slice(&out);
}

fn fftshift(data: &mut [Complex64], h: usize, w: usize) {
    roll2(data, h, w, h / 2, w / 2);
}

fn ifftshift(data: &mut [Complex64], h: usize, w: usize) {
    roll2(data, h, w, h - h / 2, w - w / 2);
}

fn fft2_raw(data: &mut [Complex64], h: usize, w: usize, direction: FftDirection) {
    let row_fft = plan(w, direction);
    let mut scratch = vec![Complex64::new(0.0, 0.0); row_fft.get_inplace_scratch_len()];
    for row in data.chunks_exact_mut(w) {
        row_fft.process_with_scratch(row, &mut scratch);
    }
    // transpose, FFT the (former) columns, transpose back
    let mut t = vec![Complex64::new(0.0, 0.0); data.len()];
    for r in 0..h {
        for c in 0..w {
            t[c * h + r] = data[r * w + c];
        }
    }
    let col_fft = plan(h, direction);
    scratch.resize(col_fft.get_inplace_scratch_len(), Complex64::new(0.0, 0.0));
    for row in t.chunks_exact_mut(h) {
        col_fft.process_with_scratch(row, &mut scratch);
    }
    for r in 0..h {
        for c in 0..w {
            data[r * w + c] = t[c * h + r];
        }
    }
}

/// In-place centered unitary 2D DFT (`inverse = false`) or its exact inverse
/// and adjoint (`inverse = true`). Both directions scale by `1/sqrt(h*w)`.
pub fn fft2_centered(data: &mut [Complex64], h: usize, w: usize, inverse: bool) {
    assert_eq!(data.len(), h * w);
    let direction = if inverse {
        FftDirection::Inverse
    } else {
        FftDirection::Forward
    };
    ifftshift(data, h, w);
    fft2_raw(data, h, w, direction);
    fftshift(data, h, w);
    let scale = 1.0 / ((h * w) as f64).sqrt();
    for v in data.iter_mut() {
        *v *= scale;
    }
}

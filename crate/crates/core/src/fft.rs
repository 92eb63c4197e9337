//! Multidimensional DFT over a cubic grid with the same length on every axis.
//!
//! The 1-D kernels come from `rustfft`, which plans mixed-radix, Rader, or
//! Bluestein transforms for any length, so no padding is ever needed. The
//! d-dimensional transform is done as d rounds of "transform the contiguous
//! axis, then rotate the axes": after d rotations the layout is back where
//! it started.

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{FftDirection, FftPlanner};

/// Lines processed per parallel task.
const LINES_PER_TASK: usize = 64;

/// In-place forward DFT (`exp(-i 2 pi k x / len)` kernel, unnormalized) of a
/// row-major array with `dims` axes of length `len` each.
pub(crate) fn forward_nd(data: &mut Vec<Complex64>, len: usize, dims: usize) {
    transform_nd(data, len, dims, FftDirection::Forward);
}

fn transform_nd(data: &mut Vec<Complex64>, len: usize, dims: usize, direction: FftDirection) {
    debug_assert_eq!(data.len(), len.pow(dims as u32));
    if dims == 0 || len <= 1 {
        return;
    }
    let fft = FftPlanner::new().plan_fft(len, direction);
    let mut scratch_buf = vec![Complex64::default(); data.len()];
    for _ in 0..dims {
        data.par_chunks_mut(len * LINES_PER_TASK).for_each_init(
            || vec![Complex64::default(); fft.get_inplace_scratch_len()],
            |scratch, chunk| fft.process_with_scratch(chunk, scratch),
        );
        if dims > 1 {
            rotate_axes(data, &mut scratch_buf, len);
            std::mem::swap(data, &mut scratch_buf);
        }
    }
}

/// Transposes the `(rows x len)` matrix in `src` into `dst` (`len x rows`),
/// which moves the contiguous axis to the front.
fn rotate_axes(src: &[Complex64], dst: &mut [Complex64], len: usize) {
    let rows = src.len() / len;
    dst.par_chunks_mut(rows).enumerate().for_each(|(col, out)| {
        for (r, o) in out.iter_mut().enumerate() {
            *o = src[r * len + col];
        }
    });
}

use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{ComplexField, OpticalSystem};
use crate::error::{DsmError, Result};

/// Normalized frequency of DFT bin `k` on an `n`-point axis, in `[-0.5, 0.5)`.
fn bin_frequency(k: usize, n: usize) -> f64 {
    if k < n.div_ceil(2) {
        k as f64 / n as f64
    } else {
        (k as f64 - n as f64) / n as f64
    }
}

/// Binary circ pupil between two 2D Fourier transforms.
///
/// Plans and the pupil mask are built once and reused for every frame. The
/// mask is stored column-major so the filtering happens between the column
/// transforms without an extra transpose.
pub struct Propagator {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
    pupil_t: Vec<bool>,
}

impl Propagator {
    pub fn new(rows: usize, cols: usize, optics: &OpticalSystem) -> Self {
        let mut planner = FftPlanner::new();
        let cutoff2 = optics.cutoff() * optics.cutoff();
        let mut pupil_t = vec![false; rows * cols];
        for c in 0..cols {
            let fx = bin_frequency(c, cols);
            for r in 0..rows {
                let fy = bin_frequency(r, rows);
                pupil_t[c * rows + r] = fx * fx + fy * fy <= cutoff2;
            }
        }
        Self {
            rows,
            cols,
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
            pupil_t,
        }
    }

    /// Fraction of the frequency plane passed by the pupil.
    pub fn pupil_fill(&self) -> f64 {
        self.pupil_t.iter().filter(|&&p| p).count() as f64 / self.pupil_t.len() as f64
    }

    /// `FT⁻¹{H · FT{field}}` in place.
    pub fn apply(&self, field: &mut ComplexField) -> Result<()> {
        if field.dim() != (self.rows, self.cols) {
            return Err(DsmError::DimensionMismatch(format!(
                "field is {:?}, propagator built for {:?}",
                field.dim(),
                (self.rows, self.cols)
            )));
        }
        if !field.is_standard_layout() {
            *field = field.as_standard_layout().to_owned();
        }
        let (rows, cols) = (self.rows, self.cols);
        let data = field.as_slice_mut().expect("standard layout");

        self.row_fwd.process(data);
        let mut t = vec![Complex64::new(0.0, 0.0); rows * cols];
        transpose(data, &mut t, rows, cols);
        self.col_fwd.process(&mut t);
        for (v, &pass) in t.iter_mut().zip(&self.pupil_t) {
            if !pass {
                *v = Complex64::new(0.0, 0.0);
            }
        }
        self.col_inv.process(&mut t);
        transpose(&t, data, cols, rows);
        self.row_inv.process(data);

        let scale = 1.0 / (rows * cols) as f64;
        data.iter_mut().for_each(|v| *v *= scale);
        Ok(())
    }
}

/// `src` is `rows × cols` row-major; `dst` receives `cols × rows`.
fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    const BLOCK: usize = 32;
    for r0 in (0..rows).step_by(BLOCK) {
        for c0 in (0..cols).step_by(BLOCK) {
            for r in r0..(r0 + BLOCK).min(rows) {
                for c in c0..(c0 + BLOCK).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

/// One-shot 4f propagation of `field` through `optics`.
pub fn propagate_4f(field: &ComplexField, optics: &OpticalSystem) -> Result<ComplexField> {
    let (rows, cols) = field.dim();
    let mut out = field.to_owned();
    Propagator::new(rows, cols, optics).apply(&mut out)?;
    Ok(out)
}

/// Sums `|U|²` over non-overlapping 2×2 blocks.
pub fn bin_intensity(field: &ComplexField) -> Result<Array2<f64>> {
    let (rows, cols) = field.dim();
    if rows % 2 != 0 || cols % 2 != 0 {
        return Err(DsmError::DimensionMismatch(format!(
            "2x2 binning needs even dimensions, got {rows}x{cols}"
        )));
    }
    Ok(Array2::from_shape_fn((rows / 2, cols / 2), |(r, c)| {
        let (r2, c2) = (2 * r, 2 * c);
        field[[r2, c2]].norm_sqr()
            + field[[r2, c2 + 1]].norm_sqr()
            + field[[r2 + 1, c2]].norm_sqr()
            + field[[r2 + 1, c2 + 1]].norm_sqr()
    }))
}

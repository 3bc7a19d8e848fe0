use ndarray::{Array3, ArrayView3};
use serde::{Deserialize, Serialize};

use crate::error::{DsmError, Result};
use crate::frames::{FrameSequence, Provenance};

/// Percentiles of the whole float stack mapped to levels 0 and 255.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stretch {
    pub low_percentile: f64,
    pub high_percentile: f64,
}

impl Stretch {
    pub const fn new(low_percentile: f64, high_percentile: f64) -> Self {
        Self {
            low_percentile,
            high_percentile,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=100.0).contains(&self.low_percentile)
            && (0.0..=100.0).contains(&self.high_percentile)
            && self.low_percentile < self.high_percentile;
        if ok {
            Ok(())
        } else {
            Err(DsmError::InvalidConfig(format!(
                "stretch percentiles must satisfy 0 <= low < high <= 100, got {} / {}",
                self.low_percentile, self.high_percentile
            )))
        }
    }
}

impl Default for Stretch {
    fn default() -> Self {
        super::DEFAULT_STRETCH
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuantizeReport {
    pub p_lo: f64,
    pub p_hi: f64,
    /// The stack had no intensity spread; every output level is 0.
    pub degenerate: bool,
}

/// Linear-interpolated percentile (the usual "linear" definition between
/// closest ranks). Reorders `values`.
pub fn percentile<T>(values: &mut [T], pct: f64) -> f64
where
    T: Copy + Into<f64> + PartialOrd,
{
    assert!(!values.is_empty());
    let h = (values.len() - 1) as f64 * pct / 100.0;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    let cmp = |a: &T, b: &T| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal);
    let (_, &mut v_lo, right) = values.select_nth_unstable_by(lo, cmp);
    let v_lo: f64 = v_lo.into();
    if frac == 0.0 || right.is_empty() {
        return v_lo;
    }
    let v_hi: f64 = right
        .iter()
        .map(|&v| v.into())
        .fold(f64::INFINITY, f64::min);
    v_lo + frac * (v_hi - v_lo)
}

/// Maps a `(frame, row, column)` float stack to 8 bits with one global linear
/// stretch, so relative temporal fluctuations are untouched. Values are
/// clamped and rounded half-up.
pub fn quantize_sequence<T>(
    stack: ArrayView3<T>,
    stretch: Stretch,
    dt: f64,
) -> Result<(FrameSequence, QuantizeReport)>
where
    T: Copy + Into<f64> + PartialOrd,
{
    stretch.validate()?;
    if stack.is_empty() {
        return Err(DsmError::InvalidConfig("cannot quantize an empty stack".into()));
    }
    let mut scratch: Vec<T> = stack.iter().copied().collect();
    let p_lo = percentile(&mut scratch, stretch.low_percentile);
    let p_hi = percentile(&mut scratch, stretch.high_percentile);
    drop(scratch);

    let degenerate = p_hi.partial_cmp(&p_lo) != Some(std::cmp::Ordering::Greater);
    let levels = if degenerate {
        log::warn!("quantization range collapsed (p_lo = p_hi = {p_lo}); emitting zeros");
        Array3::zeros(stack.dim())
    } else {
        let scale = 255.0 / (p_hi - p_lo);
        stack.mapv(|v| {
            let x: f64 = v.into();
            ((x - p_lo) * scale + 0.5).floor().clamp(0.0, 255.0) as u8
        })
    };
    let seq = FrameSequence::from_gray(levels, dt, Provenance::Synthetic)?;
    Ok((
        seq,
        QuantizeReport {
            p_lo,
            p_hi,
            degenerate,
        },
    ))
}

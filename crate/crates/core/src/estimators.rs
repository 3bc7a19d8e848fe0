//! Pointwise activity estimators and temporal correlation statistics.
//!
//! Every estimator works on one pixel's intensity series `I_1 .. I_N`:
//!
//! * `S1(m)  = 1/(N-m) Σ |I_i - I_{i+m}|` (modified structure function)
//! * `S2(m)  = 1/(N-m) Σ |I_i - I_{i+m}| / (I_i + I_{i+m} + q)`
//! * `S1'(m) = S1(m) / σ` with the population standard deviation σ
//!
//! and `ρ̂(m)` averages the normalized autocovariance over all pixels.
//! Stacks are `(frame, row, column)`; the `*_stack` variants accept any
//! sample type that widens to `f64` so float stacks can be analyzed before
//! quantization.

use ndarray::{Array2, ArrayView3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DsmError, Result};
use crate::frames::FrameSequence;

/// Pixels whose standard deviation (or variance, for `ρ̂`) falls below this
/// are treated as degenerate.
pub const DEGENERATE_EPS: f64 = 1e-12;

/// Default stabilizer for [`Estimator::S2`].
pub const DEFAULT_Q: f64 = 1.0;

pub trait Sample: Copy + Into<f64> + Send + Sync {}
impl<T: Copy + Into<f64> + Send + Sync> Sample for T {}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Estimator {
    S1,
    S2 { q: f64 },
    S1Norm,
}

impl Estimator {
    pub fn compute(&self, seq: &FrameSequence, lag: usize) -> Result<ActivityMap> {
        self.compute_stack(seq.gray()?, lag)
    }

    pub fn compute_stack<T: Sample>(&self, stack: ArrayView3<T>, lag: usize) -> Result<ActivityMap> {
        match *self {
            Estimator::S1 => msf_s1_stack(stack, lag),
            Estimator::S2 { q } => msf_s2_stack(stack, lag, q),
            Estimator::S1Norm => msf_s1_norm_stack(stack, lag),
        }
    }

    /// Short identifier used in file names.
    pub fn tag(&self) -> String {
        match self {
            Estimator::S1 => "s1".into(),
            Estimator::S2 { q } => format!("s2_q{q}"),
            Estimator::S1Norm => "s1norm".into(),
        }
    }
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Estimator::S1 => f.write_str("S1"),
            Estimator::S2 { q } => write!(f, "S2(q={q})"),
            Estimator::S1Norm => f.write_str("S1_NORM"),
        }
    }
}

impl std::str::FromStr for Estimator {
    type Err = DsmError;

    /// Accepts `s1`, `s1norm` / `s1_norm`, `s2` (q = 1) and `s2:<q>`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "s1" => Ok(Estimator::S1),
            "s1norm" | "s1_norm" | "s1'" => Ok(Estimator::S1Norm),
            "s2" => Ok(Estimator::S2 { q: DEFAULT_Q }),
            other => {
                let q = other
                    .strip_prefix("s2:")
                    .or_else(|| other.strip_prefix("s2_q"))
                    .and_then(|q| q.parse::<f64>().ok())
                    .ok_or_else(|| DsmError::InvalidConfig(format!("unknown estimator '{s}'")))?;
                if !(q >= 0.0 && q.is_finite()) {
                    return Err(DsmError::InvalidConfig(format!("S2 stabilizer q must be >= 0, got {q}")));
                }
                Ok(Estimator::S2 { q })
            }
        }
    }
}

/// A per-pixel activity estimate at lag `m`.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivityMap {
    pub values: Array2<f64>,
    pub estimator: Estimator,
    pub lag: usize,
    /// `false` where normalization was degenerate.
    pub valid: Array2<bool>,
}

impl ActivityMap {
    /// A map with every pixel valid.
    pub fn from_values(values: Array2<f64>, estimator: Estimator, lag: usize) -> Self {
        let valid = Array2::from_elem(values.dim(), true);
        Self {
            values,
            estimator,
            lag,
            valid,
        }
    }

    pub fn dim(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn valid_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values
            .iter()
            .zip(self.valid.iter())
            .filter(|(_, &ok)| ok)
            .map(|(&v, _)| v)
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&ok| ok).count()
    }

    /// `(min, max)` over valid pixels.
    pub fn valid_range(&self) -> Option<(f64, f64)> {
        self.valid_values().fold(None, |acc, v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
    }

    /// Mean and population standard deviation over valid pixels.
    pub fn valid_mean_std(&self) -> Option<(f64, f64)> {
        let n = self.valid_count();
        if n == 0 {
            return None;
        }
        let mean = self.valid_values().sum::<f64>() / n as f64;
        let var = self.valid_values().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        Some((mean, var.sqrt()))
    }
}

/// Per-pixel temporal mean and population variance.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelStats {
    pub mean: Array2<f64>,
    pub variance: Array2<f64>,
}

/// Spatially averaged normalized temporal correlation, `rho[m]` for
/// `m = 0 ..= n_tau`.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationCurve {
    pub rho: Vec<f64>,
    /// Pixels that entered the spatial average.
    pub valid_pixels: usize,
}

impl CorrelationCurve {
    pub fn n_tau(&self) -> usize {
        self.rho.len() - 1
    }

    pub fn max_abs_deviation(&self, other: &CorrelationCurve) -> f64 {
        self.rho
            .iter()
            .zip(&other.rho)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Maps computed from several sequences plus the shared display range.
#[derive(Clone, Debug)]
pub struct MapSet {
    pub maps: Vec<ActivityMap>,
    /// `(min, max)` over valid pixels of all maps; `None` for an empty set.
    pub display_range: Option<(f64, f64)>,
}

fn check_lag(n: usize, lag: usize) -> Result<()> {
    if n < 2 || lag == 0 || lag >= n {
        return Err(DsmError::LagOutOfRange {
            lag,
            max: n.saturating_sub(1),
        });
    }
    Ok(())
}

/// Applies `kernel` to every pixel series; rows are processed in parallel and
/// reassembled in order.
fn per_pixel<T, R, F>(stack: ArrayView3<T>, kernel: F) -> Vec<Vec<R>>
where
    T: Sample,
    R: Send,
    F: Fn(&[f64]) -> R + Sync,
{
    let (n, h, w) = stack.dim();
    (0..h)
        .into_par_iter()
        .map(|r| {
            let mut series = vec![0.0; n];
            (0..w)
                .map(|c| {
                    for (i, s) in series.iter_mut().enumerate() {
                        *s = stack[[i, r, c]].into();
                    }
                    kernel(&series)
                })
                .collect()
        })
        .collect()
}

fn assemble(rows: Vec<Vec<(f64, bool)>>, h: usize, w: usize) -> (Array2<f64>, Array2<bool>) {
    let mut values = Array2::zeros((h, w));
    let mut valid = Array2::from_elem((h, w), true);
    for (r, row) in rows.into_iter().enumerate() {
        for (c, (v, ok)) in row.into_iter().enumerate() {
            values[[r, c]] = v;
            valid[[r, c]] = ok;
        }
    }
    (values, valid)
}

fn series_mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

fn series_s1(x: &[f64], m: usize) -> f64 {
    let terms = x.len() - m;
    x.iter()
        .zip(&x[m..])
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / terms as f64
}

pub fn pixel_stats(seq: &FrameSequence) -> Result<PixelStats> {
    pixel_stats_stack(seq.gray()?)
}

pub fn pixel_stats_stack<T: Sample>(stack: ArrayView3<T>) -> Result<PixelStats> {
    let (n, h, w) = stack.dim();
    if n < 2 {
        return Err(DsmError::InvalidConfig(format!("pixel statistics need N >= 2, got {n}")));
    }
    let rows = per_pixel(stack, series_mean_var);
    let mut mean = Array2::zeros((h, w));
    let mut variance = Array2::zeros((h, w));
    for (r, row) in rows.into_iter().enumerate() {
        for (c, (mu, var)) in row.into_iter().enumerate() {
            mean[[r, c]] = mu;
            variance[[r, c]] = var;
        }
    }
    Ok(PixelStats { mean, variance })
}

pub fn msf_s1(seq: &FrameSequence, lag: usize) -> Result<ActivityMap> {
    msf_s1_stack(seq.gray()?, lag)
}

pub fn msf_s1_stack<T: Sample>(stack: ArrayView3<T>, lag: usize) -> Result<ActivityMap> {
    let (n, h, w) = stack.dim();
    check_lag(n, lag)?;
    let rows = per_pixel(stack, |x| (series_s1(x, lag), true));
    let (values, valid) = assemble(rows, h, w);
    Ok(ActivityMap {
        values,
        estimator: Estimator::S1,
        lag,
        valid,
    })
}

pub fn msf_s2(seq: &FrameSequence, lag: usize, q: f64) -> Result<ActivityMap> {
    msf_s2_stack(seq.gray()?, lag, q)
}

/// Terms with a zero denominator (only possible for `q = 0`) contribute 0 and
/// mark the pixel invalid.
pub fn msf_s2_stack<T: Sample>(stack: ArrayView3<T>, lag: usize, q: f64) -> Result<ActivityMap> {
    let (n, h, w) = stack.dim();
    check_lag(n, lag)?;
    if !(q >= 0.0 && q.is_finite()) {
        return Err(DsmError::InvalidConfig(format!("S2 stabilizer q must be >= 0, got {q}")));
    }
    let rows = per_pixel(stack, |x| {
        let mut ok = true;
        let sum: f64 = x
            .iter()
            .zip(&x[lag..])
            .map(|(a, b)| {
                let den = a + b + q;
                if den == 0.0 {
                    ok = false;
                    0.0
                } else {
                    (a - b).abs() / den
                }
            })
            .sum();
        (sum / (n - lag) as f64, ok)
    });
    let (values, valid) = assemble(rows, h, w);
    Ok(ActivityMap {
        values,
        estimator: Estimator::S2 { q },
        lag,
        valid,
    })
}

pub fn msf_s1_norm(seq: &FrameSequence, lag: usize) -> Result<ActivityMap> {
    msf_s1_norm_stack(seq.gray()?, lag)
}

pub fn msf_s1_norm_stack<T: Sample>(stack: ArrayView3<T>, lag: usize) -> Result<ActivityMap> {
    let (n, h, w) = stack.dim();
    check_lag(n, lag)?;
    let rows = per_pixel(stack, |x| {
        let (_, var) = series_mean_var(x);
        let sigma = var.sqrt();
        if sigma < DEGENERATE_EPS {
            (0.0, false)
        } else {
            (series_s1(x, lag) / sigma, true)
        }
    });
    let (values, valid) = assemble(rows, h, w);
    Ok(ActivityMap {
        values,
        estimator: Estimator::S1Norm,
        lag,
        valid,
    })
}

pub fn temporal_corr(seq: &FrameSequence, n_tau: usize) -> Result<CorrelationCurve> {
    temporal_corr_stack(seq.gray()?, n_tau)
}

/// Pixels with variance below [`DEGENERATE_EPS`] are left out of the spatial
/// average.
pub fn temporal_corr_stack<T: Sample>(stack: ArrayView3<T>, n_tau: usize) -> Result<CorrelationCurve> {
    let (n, _, _) = stack.dim();
    if n < 2 || n_tau >= n {
        return Err(DsmError::LagOutOfRange {
            lag: n_tau,
            max: n.saturating_sub(1),
        });
    }
    let rows = per_pixel(stack, |x| {
        let (mean, var) = series_mean_var(x);
        if var < DEGENERATE_EPS {
            return None;
        }
        let d: Vec<f64> = x.iter().map(|v| v - mean).collect();
        let c0: f64 = d.iter().map(|v| v * v).sum();
        let mut r = Vec::with_capacity(n_tau + 1);
        r.push(1.0);
        for m in 1..=n_tau {
            let cm: f64 = d.iter().zip(&d[m..]).map(|(a, b)| a * b).sum();
            r.push(n as f64 / (n - m) as f64 * cm / c0);
        }
        Some(r)
    });

    let mut sums = vec![0.0; n_tau + 1];
    let mut count = 0usize;
    for r in rows.iter().flatten().flatten() {
        count += 1;
        for (s, v) in sums.iter_mut().zip(r) {
            *s += v;
        }
    }
    if count == 0 {
        return Err(DsmError::Degenerate(
            "every pixel has zero temporal variance".into(),
        ));
    }
    Ok(CorrelationCurve {
        rho: sums.into_iter().map(|s| s / count as f64).collect(),
        valid_pixels: count,
    })
}

/// One map per sequence with a display range shared across the set.
pub fn map_set(seqs: &[FrameSequence], estimator: Estimator, lag: usize) -> Result<MapSet> {
    if let Some(first) = seqs.first() {
        if let Some((i, s)) = seqs
            .iter()
            .enumerate()
            .find(|(_, s)| s.height() != first.height() || s.width() != first.width())
        {
            return Err(DsmError::DimensionMismatch(format!(
                "sequence {i} is {}x{}, sequence 0 is {}x{}",
                s.width(),
                s.height(),
                first.width(),
                first.height()
            )));
        }
    }
    let maps = seqs
        .iter()
        .map(|s| estimator.compute(s, lag))
        .collect::<Result<Vec<_>>>()?;
    let display_range = maps
        .iter()
        .filter_map(ActivityMap::valid_range)
        .reduce(|(a, b), (c, d)| (a.min(c), b.max(d)));
    Ok(MapSet {
        maps,
        display_range,
    })
}

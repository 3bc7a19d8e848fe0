//! Map comparison: structural similarity, estimate histograms, ROI statistics.

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DsmError, Result};
use crate::estimators::ActivityMap;

pub const DEFAULT_HISTOGRAM_BINS: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SsimParams {
    /// Side of the square window; odd and at least 3.
    pub window: usize,
    pub k1: f64,
    pub k2: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 11,
            k1: 0.01,
            k2: 0.03,
        }
    }
}

impl SsimParams {
    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window.is_multiple_of(2) {
            return Err(DsmError::InvalidConfig(format!(
                "SSI window must be odd and >= 3, got {}",
                self.window
            )));
        }
        if !(self.k1 > 0.0 && self.k2 > 0.0) {
            return Err(DsmError::InvalidConfig("SSI constants k1, k2 must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SsiReport {
    pub ssi_map: Array2<f64>,
    /// Pixels whose window held at least one pixel valid in both maps.
    pub valid: Array2<bool>,
    /// Mean of `ssi_map` over valid pixels.
    pub mean_ssi: f64,
    pub params: SsimParams,
    /// Joint range `L` of the compared maps.
    pub dynamic_range: f64,
    pub c1: f64,
    pub c2: f64,
}

fn check_same_dim(a: &ActivityMap, b: &ActivityMap) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(DsmError::DimensionMismatch(format!("maps {:?} vs {:?}", a.dim(), b.dim())));
    }
    Ok(())
}

/// Local structural similarity of two maps with uniform square windows that
/// shrink at the borders. Pixels invalid in either map are left out of every
/// window.
pub fn ssi_map(a: &ActivityMap, b: &ActivityMap, params: SsimParams) -> Result<SsiReport> {
    params.validate()?;
    check_same_dim(a, b)?;
    if a.values.iter().chain(b.values.iter()).any(|v| !v.is_finite()) {
        return Err(DsmError::InvalidConfig("SSI needs finite maps".into()));
    }
    let (h, w) = a.dim();
    let joint = Array2::from_shape_fn((h, w), |ix| a.valid[ix] && b.valid[ix]);
    let range = a
        .values
        .iter()
        .chain(b.values.iter())
        .zip(joint.iter().chain(joint.iter()))
        .filter(|(_, &ok)| ok)
        .map(|(&v, _)| v)
        .fold(None, |acc: Option<(f64, f64)>, v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
        .ok_or_else(|| DsmError::Degenerate("no pixel is valid in both maps".into()))?;
    let l = range.1 - range.0;
    let c1 = (params.k1 * l).powi(2);
    let c2 = (params.k2 * l).powi(2);
    if l == 0.0 {
        let identical = a.values.iter().zip(b.values.iter()).zip(joint.iter()).all(|((x, y), &ok)| !ok || x == y);
        if !identical {
            return Err(DsmError::Degenerate("zero dynamic range with differing maps".into()));
        }
    }

    let half = params.window / 2;
    let rows: Vec<Vec<(f64, bool)>> = (0..h)
        .into_par_iter()
        .map(|r| {
            let (r0, r1) = (r.saturating_sub(half), (r + half + 1).min(h));
            (0..w)
                .map(|c| {
                    let (c0, c1w) = (c.saturating_sub(half), (c + half + 1).min(w));
                    let mut n = 0usize;
                    let (mut sa, mut sb) = (0.0, 0.0);
                    for rr in r0..r1 {
                        for cc in c0..c1w {
                            if joint[[rr, cc]] {
                                n += 1;
                                sa += a.values[[rr, cc]];
                                sb += b.values[[rr, cc]];
                            }
                        }
                    }
                    if n == 0 {
                        return (0.0, false);
                    }
                    if l == 0.0 {
                        return (1.0, true);
                    }
                    let nf = n as f64;
                    let (ma, mb) = (sa / nf, sb / nf);
                    let (mut vaa, mut vbb, mut vab) = (0.0, 0.0, 0.0);
                    for rr in r0..r1 {
                        for cc in c0..c1w {
                            if joint[[rr, cc]] {
                                let da = a.values[[rr, cc]] - ma;
                                let db = b.values[[rr, cc]] - mb;
                                vaa += da * da;
                                vbb += db * db;
                                vab += da * db;
                            }
                        }
                    }
                    let (vaa, vbb, vab) = (vaa / nf, vbb / nf, vab / nf);
                    let num = (2.0 * ma * mb + c1) * (2.0 * vab + c2);
                    let den = (ma * ma + mb * mb + c1) * (vaa + vbb + c2);
                    ((num / den).clamp(-1.0, 1.0), true)
                })
                .collect()
        })
        .collect();

    let mut ssi = Array2::zeros((h, w));
    let mut valid = Array2::from_elem((h, w), false);
    for (r, row) in rows.into_iter().enumerate() {
        for (c, (v, ok)) in row.into_iter().enumerate() {
            ssi[[r, c]] = v;
            valid[[r, c]] = ok;
        }
    }
    let count = valid.iter().filter(|&&ok| ok).count();
    let mean = ssi.iter().zip(valid.iter()).filter(|(_, &ok)| ok).map(|(v, _)| v).sum::<f64>() / count as f64;
    Ok(SsiReport {
        ssi_map: ssi,
        valid,
        mean_ssi: mean,
        params,
        dynamic_range: l,
        c1,
        c2,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.n_bins() as f64
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.bin_width()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Counts divided by `total · bin_width`, so the bars integrate to one.
    pub fn density(&self) -> Vec<f64> {
        let norm = self.total() as f64 * self.bin_width();
        self.counts
            .iter()
            .map(|&c| if norm > 0.0 { c as f64 / norm } else { 0.0 })
            .collect()
    }
}

/// Histogram of valid map values over `[min, max]` of those values.
pub fn estimate_histogram(map: &ActivityMap, n_bins: usize) -> Result<Histogram> {
    let (lo, hi) = map
        .valid_range()
        .ok_or_else(|| DsmError::Degenerate("map has no valid pixels".into()))?;
    estimate_histogram_range(map, n_bins, lo, hi)
}

/// Histogram over a fixed range, for comparing several maps on shared bins.
/// Values outside `[lo, hi]` go to the edge bins.
pub fn estimate_histogram_range(map: &ActivityMap, n_bins: usize, lo: f64, hi: f64) -> Result<Histogram> {
    if n_bins == 0 {
        return Err(DsmError::InvalidConfig("histogram needs at least one bin".into()));
    }
    if map.valid_count() == 0 {
        return Err(DsmError::Degenerate("map has no valid pixels".into()));
    }
    let mut counts = vec![0u64; n_bins];
    let width = (hi - lo) / n_bins as f64;
    for v in map.valid_values() {
        let bin = if width > 0.0 {
            (((v - lo) / width).floor().max(0.0) as usize).min(n_bins - 1)
        } else {
            0
        };
        counts[bin] += 1;
    }
    Ok(Histogram { lo, hi, counts })
}

/// Axis-aligned rectangle in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roi {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

impl Roi {
    pub fn new(x0: usize, y0: usize, width: usize, height: usize) -> Self {
        Self { x0, y0, width, height }
    }

    /// A `width × height` rectangle centered in a `(rows, cols)` map.
    pub fn centered(dim: (usize, usize), width: usize, height: usize) -> Self {
        let (rows, cols) = dim;
        Self::new(cols.saturating_sub(width) / 2, rows.saturating_sub(height) / 2, width, height)
    }

    pub fn check(&self, dim: (usize, usize)) -> Result<()> {
        let (rows, cols) = dim;
        if self.width == 0 || self.height == 0 || self.x0 + self.width > cols || self.y0 + self.height > rows {
            return Err(DsmError::InvalidConfig(format!(
                "ROI x0={} y0={} {}x{} does not fit a {}x{} map",
                self.x0, self.y0, self.width, self.height, cols, rows
            )));
        }
        Ok(())
    }
}

impl std::str::FromStr for Roi {
    type Err = DsmError;

    /// `x0,y0,width,height`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| DsmError::InvalidConfig(format!("ROI '{s}' is not x0,y0,width,height")))?;
        match parts[..] {
            [x0, y0, w, h] => Ok(Roi::new(x0, y0, w, h)),
            _ => Err(DsmError::InvalidConfig(format!("ROI '{s}' is not x0,y0,width,height"))),
        }
    }
}

/// Mean over valid pixels inside `roi`.
pub fn roi_mean(map: &ActivityMap, roi: Roi) -> Result<f64> {
    roi.check(map.dim())?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for r in roi.y0..roi.y0 + roi.height {
        for c in roi.x0..roi.x0 + roi.width {
            if map.valid[[r, c]] {
                sum += map.values[[r, c]];
                n += 1;
            }
        }
    }
    if n == 0 {
        return Err(DsmError::Degenerate("ROI contains no valid pixel".into()));
    }
    Ok(sum / n as f64)
}

/// `(set index, roi_mean)` for each map, in order.
pub fn activity_time_series(maps: &[ActivityMap], roi: Roi) -> Result<Vec<(usize, f64)>> {
    if let Some(first) = maps.first() {
        if let Some(bad) = maps.iter().position(|m| m.dim() != first.dim()) {
            return Err(DsmError::DimensionMismatch(format!(
                "map {bad} is {:?}, map 0 is {:?}",
                maps[bad].dim(),
                first.dim()
            )));
        }
    }
    maps.iter()
        .enumerate()
        .map(|(i, m)| roi_mean(m, roi).map(|v| (i, v)))
        .collect()
}

fn masked_mean(map: &ActivityMap, mask: ArrayView2<bool>, name: &str) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for ((&v, &ok), &inside) in map.values.iter().zip(map.valid.iter()).zip(mask.iter()) {
        if inside && ok {
            sum += v;
            n += 1;
        }
    }
    if n == 0 {
        return Err(DsmError::Degenerate(format!("mask {name} selects no valid pixel")));
    }
    Ok(sum / n as f64)
}

/// `mean(map | mask_a) / mean(map | mask_b)`.
pub fn region_contrast(map: &ActivityMap, mask_a: ArrayView2<bool>, mask_b: ArrayView2<bool>) -> Result<f64> {
    if mask_a.dim() != map.dim() || mask_b.dim() != map.dim() {
        return Err(DsmError::DimensionMismatch("masks must match the map".into()));
    }
    if mask_a.iter().zip(mask_b.iter()).any(|(&x, &y)| x && y) {
        return Err(DsmError::InvalidConfig("region masks overlap".into()));
    }
    let a = masked_mean(map, mask_a, "A")?;
    let b = masked_mean(map, mask_b, "B")?;
    if b == 0.0 {
        return Err(DsmError::Degenerate("reference region mean is zero".into()));
    }
    Ok(a / b)
}

/// Means of `block × block` tiles on the grid anchored at `(0, 0)` that lie
/// entirely inside `mask`.
pub fn aligned_block_means(map: &ActivityMap, mask: ArrayView2<bool>, block: usize) -> Result<Vec<f64>> {
    if mask.dim() != map.dim() {
        return Err(DsmError::DimensionMismatch("mask must match the map".into()));
    }
    let (h, w) = map.dim();
    let mut out = Vec::new();
    for r0 in (0..h.saturating_sub(block - 1)).step_by(block) {
        for c0 in (0..w.saturating_sub(block - 1)).step_by(block) {
            let tile = ndarray::s![r0..r0 + block, c0..c0 + block];
            if mask.slice(tile).iter().all(|&m| m) {
                let sub = ActivityMap {
                    values: map.values.slice(tile).to_owned(),
                    valid: map.valid.slice(tile).to_owned(),
                    estimator: map.estimator,
                    lag: map.lag,
                };
                if let Some((mean, _)) = sub.valid_mean_std() {
                    out.push(mean);
                }
            }
        }
    }
    Ok(out)
}

/// Mean of each map row, for quick profile plots.
pub fn row_profile(map: &ActivityMap) -> Vec<f64> {
    map.values.mean_axis(Axis(1)).map(|a| a.to_vec()).unwrap_or_default()
}

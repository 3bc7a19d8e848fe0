//! Synthetic dynamic speckle.
//!
//! A random phase screen on an object grid of pitch `Δ/2` (twice the camera
//! resolution in each axis) performs a Gaussian random walk whose per-frame
//! step has variance `Δt / τc`. The resulting surface field is imaged by a 4f
//! system with a circ pupil, integrated over 2×2 object samples per camera
//! pixel and quantized to 8 bits with one stretch for the whole stack. For
//! fully developed speckle the pixel intensity correlation then decays as
//! `exp(-τ / τc)`.

mod optics;
mod quantize;

use ndarray::{Array2, Array3, Axis, Zip};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use optics::{bin_intensity, propagate_4f, Propagator};
pub use quantize::{percentile, quantize_sequence, QuantizeReport, Stretch};

use crate::error::{DsmError, Result};
use crate::frames::FrameSequence;
use crate::rng::CounterRng;

pub type ComplexField = Array2<Complex64>;

/// Circ cutoff of the high-contrast preset (coarse speckle, asymmetric
/// intensity histogram).
pub const HIGH_CONTRAST_CUTOFF: f64 = 0.25;
/// Circ cutoff of the low-contrast preset (fine speckle averaged by binning,
/// nearly symmetric histogram).
pub const LOW_CONTRAST_CUTOFF: f64 = 0.5;
pub const DEFAULT_STRETCH: Stretch = Stretch::new(5.0, 95.0);
pub const DEFAULT_WAVELENGTH_NM: f64 = 532.0;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Phase screen on the object grid, `(2·ny) × (2·nx)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseField {
    pub values: Array2<f64>,
    pub frame_index: usize,
}

/// Correlation radius per camera pixel, in units of `Δt`.
#[derive(Clone, Debug, PartialEq)]
pub struct TauField {
    tau_c: Array2<f64>,
}

impl TauField {
    pub fn new(tau_c: Array2<f64>) -> Result<Self> {
        if let Some(bad) = tau_c.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return Err(DsmError::InvalidConfig(format!(
                "correlation radius must be positive and finite, found {bad}"
            )));
        }
        if tau_c.is_empty() {
            return Err(DsmError::InvalidConfig("empty correlation-radius field".into()));
        }
        Ok(Self { tau_c })
    }

    pub fn constant(nx: usize, ny: usize, tau_c: f64) -> Result<Self> {
        Self::new(Array2::from_elem((ny, nx), tau_c))
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.tau_c
    }

    /// `(rows, cols)` = `(ny, nx)`.
    pub fn dim(&self) -> (usize, usize) {
        self.tau_c.dim()
    }

    /// Nearest-neighbour upsampling to the object grid.
    pub fn upsample2(&self) -> Array2<f64> {
        let (h, w) = self.dim();
        Array2::from_shape_fn((2 * h, 2 * w), |(r, c)| self.tau_c[[r / 2, c / 2]])
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum IlluminationProfile {
    #[default]
    Uniform,
    /// `I0 = exp(-r² / Ω²)` with `r` and `omega` in camera pixels.
    Gaussian { omega: f64 },
}

impl IlluminationProfile {
    pub fn validate(&self) -> Result<()> {
        match *self {
            IlluminationProfile::Gaussian { omega } if !(omega > 0.0 && omega.is_finite()) => Err(
                DsmError::InvalidConfig(format!("gaussian beam spread must be positive, got {omega}")),
            ),
            _ => Ok(()),
        }
    }

    /// Intensity at offset `(x, y)` from the beam center, in camera pixels.
    pub fn intensity(&self, x: f64, y: f64) -> f64 {
        match *self {
            IlluminationProfile::Uniform => 1.0,
            IlluminationProfile::Gaussian { omega } => (-(x * x + y * y) / (omega * omega)).exp(),
        }
    }

    /// `sqrt(I0)` sampled on a `rows × cols` object grid of pitch `Δ/2`,
    /// centered at `(rows/2, cols/2)`.
    pub fn amplitude_grid(&self, rows: usize, cols: usize) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |(r, c)| {
            let x = (c as f64 - cols as f64 / 2.0) * 0.5;
            let y = (r as f64 - rows as f64 / 2.0) * 0.5;
            self.intensity(x, y).sqrt()
        })
    }
}

/// Diffraction-limited 4f imaging with a circ pupil.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpticalSystem {
    cutoff: f64,
    pub wavelength_nm: f64,
}

impl OpticalSystem {
    /// `cutoff` is the pupil radius as a fraction of the object-grid sampling
    /// frequency, in `(0, 0.5]`.
    pub fn new(cutoff: f64, wavelength_nm: f64) -> Result<Self> {
        if !(cutoff > 0.0 && cutoff <= 0.5) {
            return Err(DsmError::InvalidConfig(format!(
                "circ cutoff must lie in (0, 0.5], got {cutoff}"
            )));
        }
        Ok(Self {
            cutoff,
            wavelength_nm,
        })
    }

    pub fn high_contrast() -> Self {
        Self::new(HIGH_CONTRAST_CUTOFF, DEFAULT_WAVELENGTH_NM).expect("valid preset")
    }

    pub fn low_contrast() -> Self {
        Self::new(LOW_CONTRAST_CUTOFF, DEFAULT_WAVELENGTH_NM).expect("valid preset")
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthesisConfig {
    pub nx: usize,
    pub ny: usize,
    pub n_frames: usize,
    pub dt: f64,
    pub tau_field: TauField,
    pub illumination: IlluminationProfile,
    pub optics: OpticalSystem,
    pub stretch: Stretch,
    pub seed: u64,
}

impl SynthesisConfig {
    /// High-contrast optics, uniform illumination, `dt = 1`.
    pub fn new(nx: usize, ny: usize, n_frames: usize, tau_field: TauField, seed: u64) -> Self {
        Self {
            nx,
            ny,
            n_frames,
            dt: 1.0,
            tau_field,
            illumination: IlluminationProfile::Uniform,
            optics: OpticalSystem::high_contrast(),
            stretch: DEFAULT_STRETCH,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 8 || self.ny < 8 {
            return Err(DsmError::InvalidConfig(format!(
                "frames must be at least 8x8, got {}x{}",
                self.nx, self.ny
            )));
        }
        if self.n_frames < 2 {
            return Err(DsmError::InvalidConfig(format!(
                "need at least 2 frames, got {}",
                self.n_frames
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(DsmError::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if self.tau_field.dim() != (self.ny, self.nx) {
            return Err(DsmError::DimensionMismatch(format!(
                "correlation-radius field is {:?}, frames are {}x{} (rows x cols = {:?})",
                self.tau_field.dim(),
                self.nx,
                self.ny,
                (self.ny, self.nx)
            )));
        }
        self.illumination.validate()?;
        self.stretch.validate()
    }

    /// Object grid `(rows, cols)`.
    pub fn object_dim(&self) -> (usize, usize) {
        (2 * self.ny, 2 * self.nx)
    }
}

/// Frame-0 phase: independent uniform draws on `[0, 2π)`.
pub fn gen_initial_phase(config: &SynthesisConfig) -> Result<PhaseField> {
    config.validate()?;
    let rng = CounterRng::new(config.seed);
    let (rows, cols) = config.object_dim();
    let mut values = Array2::zeros((rows, cols));
    values
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(r, mut row)| {
            for (c, v) in row.iter_mut().enumerate() {
                *v = TWO_PI * rng.uniform((r * cols + c) as u64);
            }
        });
    Ok(PhaseField {
        values,
        frame_index: 0,
    })
}

/// Next phase screen: `φ_i = φ_{i-1} + sqrt(Δt/τc) · N(0, 1)`.
///
/// `tau` must already be on the object grid (see [`TauField::upsample2`]).
pub fn evolve_phase(prev: &PhaseField, tau: &Array2<f64>, dt: f64, rng: &CounterRng) -> Result<PhaseField> {
    if prev.values.dim() != tau.dim() {
        return Err(DsmError::DimensionMismatch(format!(
            "phase grid {:?} vs correlation-radius grid {:?}",
            prev.values.dim(),
            tau.dim()
        )));
    }
    let frame_index = prev.frame_index + 1;
    let (rows, cols) = tau.dim();
    let base = (frame_index * rows * cols) as u64;
    let mut values = prev.values.clone();
    values
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(tau.axis_iter(Axis(0)).into_par_iter())
        .enumerate()
        .for_each(|(r, (mut row, tau_row))| {
            let row_base = base + (r * cols) as u64;
            for (c, (v, &t)) in row.iter_mut().zip(tau_row.iter()).enumerate() {
                *v += (dt / t).sqrt() * rng.standard_normal(row_base + c as u64);
            }
        });
    Ok(PhaseField {
        values,
        frame_index,
    })
}

/// `Us = sqrt(I0) · exp(-jφ)`.
pub fn surface_amplitude(phase: &PhaseField, illumination: &IlluminationProfile) -> ComplexField {
    let (rows, cols) = phase.values.dim();
    surface_amplitude_with(phase, &illumination.amplitude_grid(rows, cols))
}

fn surface_amplitude_with(phase: &PhaseField, amplitude: &Array2<f64>) -> ComplexField {
    let mut out = ComplexField::zeros(phase.values.dim());
    Zip::from(&mut out)
        .and(&phase.values)
        .and(amplitude)
        .for_each(|u, &phi, &a| *u = Complex64::from_polar(a, -phi));
    out
}

/// Speckle contrast `σ(I) / mean(I)` of one frame.
pub fn speckle_contrast(frame: &Array2<f64>) -> f64 {
    let n = frame.len() as f64;
    let mean = frame.sum() / n;
    let var = frame.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() / mean
}

/// Binned camera intensities before quantization, `(frame, row, column)`.
pub fn synthesize_float(config: &SynthesisConfig) -> Result<Array3<f32>> {
    config.validate()?;
    let rng = CounterRng::new(config.seed);
    let (rows, cols) = config.object_dim();
    let tau = config.tau_field.upsample2();
    let amplitude = config.illumination.amplitude_grid(rows, cols);
    let propagator = Propagator::new(rows, cols, &config.optics);
    let mut out = Array3::<f32>::zeros((config.n_frames, config.ny, config.nx));

    // Phase screens are produced sequentially (each parallel over rows); the
    // optics for a batch of frames then runs frame-parallel.
    let batch = (2 * rayon::current_num_threads()).max(1);
    let mut phase = gen_initial_phase(config)?;
    let mut start = 0;
    while start < config.n_frames {
        let end = (start + batch).min(config.n_frames);
        let mut phases = Vec::with_capacity(end - start);
        for i in start..end {
            if i > 0 {
                phase = evolve_phase(&phase, &tau, config.dt, &rng)?;
            }
            phases.push(phase.clone());
        }
        let frames = phases
            .par_iter()
            .map(|p| {
                let mut field = surface_amplitude_with(p, &amplitude);
                propagator.apply(&mut field)?;
                bin_intensity(&field)
            })
            .collect::<Result<Vec<_>>>()?;
        for (i, frame) in (start..end).zip(frames) {
            out.index_axis_mut(Axis(0), i)
                .assign(&frame.mapv(|v| v as f32));
        }
        start = end;
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct SynthesisOutput {
    pub sequence: FrameSequence,
    pub quantization: QuantizeReport,
}

pub fn synthesize_detailed(config: &SynthesisConfig) -> Result<SynthesisOutput> {
    let stack = synthesize_float(config)?;
    let (sequence, quantization) = quantize_sequence(stack.view(), config.stretch, config.dt)?;
    Ok(SynthesisOutput {
        sequence,
        quantization,
    })
}

/// Full pipeline: phase screens, imaging, binning and 8-bit quantization.
pub fn synthesize(config: &SynthesisConfig) -> Result<FrameSequence> {
    Ok(synthesize_detailed(config)?.sequence)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::s;

    fn config(n: usize, tau: f64, seed: u64) -> SynthesisConfig {
        SynthesisConfig::new(n, n, 4, TauField::constant(n, n, tau).unwrap(), seed)
    }

    #[test]
    fn initial_phase_uniform_and_reproducible() {
        let cfg = config(256, 20.0, 9);
        let a = gen_initial_phase(&cfg).unwrap();
        assert_eq!(a.values.dim(), (512, 512));
        assert!(a.values.iter().all(|&v| (0.0..TWO_PI).contains(&v)));
        let n = a.values.len() as f64;
        let mean = a.values.sum() / n;
        let se = TWO_PI / 12f64.sqrt() / n.sqrt();
        assert!((mean - std::f64::consts::PI).abs() < 3.0 * se, "mean {mean}");
        assert_eq!(gen_initial_phase(&cfg).unwrap(), a);
    }

    #[test]
    fn adjacent_seeds_give_different_screens() {
        let a = gen_initial_phase(&config(64, 20.0, 100)).unwrap();
        let b = gen_initial_phase(&config(64, 20.0, 101)).unwrap();
        let equal = a.values.iter().zip(b.values.iter()).filter(|(x, y)| x == y).count();
        assert!((equal as f64) < 0.01 * a.values.len() as f64);
    }

    #[test]
    fn evolution_step_has_expected_spread() {
        let cfg = config(256, 20.0, 1);
        let rng = CounterRng::new(cfg.seed);
        let tau = cfg.tau_field.upsample2();
        let p0 = gen_initial_phase(&cfg).unwrap();
        let p1 = evolve_phase(&p0, &tau, 1.0, &rng).unwrap();
        assert_eq!(p1.frame_index, 1);
        let d: Vec<f64> = p1.values.iter().zip(p0.values.iter()).map(|(a, b)| a - b).collect();
        let n = d.len() as f64;
        let mean = d.iter().sum::<f64>() / n;
        let sd = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let expected = (1.0f64 / 20.0).sqrt();
        assert!((sd - expected).abs() / expected < 0.01, "sd {sd}");
    }

    #[test]
    fn frozen_activity_limit() {
        let cfg = config(256, 1e12, 2);
        let rng = CounterRng::new(cfg.seed);
        let p0 = gen_initial_phase(&cfg).unwrap();
        let p1 = evolve_phase(&p0, &cfg.tau_field.upsample2(), 1.0, &rng).unwrap();
        let max = p1
            .values
            .iter()
            .zip(p0.values.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max < 1e-4, "max increment {max}");
    }

    #[test]
    fn evolve_rejects_mismatched_tau() {
        let cfg = config(16, 5.0, 0);
        let p0 = gen_initial_phase(&cfg).unwrap();
        let tau = Array2::from_elem((8, 8), 5.0);
        assert!(evolve_phase(&p0, &tau, 1.0, &CounterRng::new(0)).is_err());
    }

    #[test]
    fn tau_field_validation() {
        assert!(TauField::new(Array2::from_elem((2, 2), 0.0)).is_err());
        assert!(TauField::new(Array2::from_elem((2, 2), f64::NAN)).is_err());
        let t = TauField::new(ndarray::arr2(&[[1.0, 2.0], [3.0, 4.0]])).unwrap();
        let up = t.upsample2();
        assert_eq!(up.dim(), (4, 4));
        assert_eq!(up[[1, 1]], 1.0);
        assert_eq!(up[[1, 2]], 2.0);
        assert_eq!(up[[3, 0]], 3.0);
        assert_eq!(up[[2, 3]], 4.0);
    }

    #[test]
    fn uniform_amplitude_is_unit() {
        let cfg = config(16, 5.0, 0);
        let p = gen_initial_phase(&cfg).unwrap();
        let us = surface_amplitude(&p, &IlluminationProfile::Uniform);
        for (u, phi) in us.iter().zip(p.values.iter()) {
            assert!((u.norm() - 1.0).abs() < 1e-12);
            let expected = Complex64::from_polar(1.0, -phi);
            assert!((u - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn gaussian_amplitude_profile() {
        let phase = PhaseField {
            values: Array2::zeros((512, 512)),
            frame_index: 0,
        };
        let us = surface_amplitude(&phase, &IlluminationProfile::Gaussian { omega: 400.0 });
        assert!((us[[256, 256]].norm() - 1.0).abs() < 1e-15);
        let corner = us[[0, 0]];
        let expected = (-(2.0 * 128.0f64 * 128.0) / (2.0 * 400.0f64 * 400.0)).exp();
        assert!((corner.norm() - expected).abs() < 1e-12);
        assert!((expected - 0.9026).abs() < 1e-4);
        // zero phase: real and nonnegative
        assert!(us.iter().all(|u| u.im.abs() < 1e-15 && u.re >= 0.0));
    }

    #[test]
    fn optics_and_illumination_validation() {
        assert!(OpticalSystem::new(0.0, 532.0).is_err());
        assert!(OpticalSystem::new(0.51, 532.0).is_err());
        assert!(OpticalSystem::new(0.5, 532.0).is_ok());
        assert!(IlluminationProfile::Gaussian { omega: 0.0 }.validate().is_err());
        assert_eq!(IlluminationProfile::Uniform.intensity(100.0, -3.0), 1.0);
    }

    #[test]
    fn config_validation() {
        let mut cfg = config(8, 5.0, 0);
        assert!(cfg.validate().is_ok());
        cfg.n_frames = 1;
        assert!(cfg.validate().is_err());
        let mut cfg = config(8, 5.0, 0);
        cfg.nx = 6;
        assert!(cfg.validate().is_err());
        let mut cfg = config(8, 5.0, 0);
        cfg.tau_field = TauField::constant(9, 8, 5.0).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn minimal_run() {
        let mut cfg = config(16, 5.0, 77);
        cfg.n_frames = 2;
        let seq = synthesize(&cfg).unwrap();
        assert_eq!((seq.len(), seq.height(), seq.width()), (2, 16, 16));
        assert_ne!(seq.frame(0), seq.frame(1));
        assert_eq!(synthesize(&cfg).unwrap(), seq);
    }

    /// Half-maximum crossing of the normalized intensity autocovariance
    /// along one axis, by linear interpolation between integer lags.
    fn half_width(intensity: &Array2<f64>, axis: usize) -> f64 {
        let (rows, cols) = intensity.dim();
        let n = (rows * cols) as f64;
        let mean = intensity.sum() / n;
        let cov = |lag: usize| {
            let mut s = 0.0;
            for r in 0..rows {
                for c in 0..cols {
                    let (r2, c2) = if axis == 0 { ((r + lag) % rows, c) } else { (r, (c + lag) % cols) };
                    s += (intensity[[r, c]] - mean) * (intensity[[r2, c2]] - mean);
                }
            }
            s / n
        };
        let c0 = cov(0);
        let mut prev = 1.0;
        for lag in 1..rows.min(cols) / 2 {
            let g = cov(lag) / c0;
            if g < 0.5 {
                return (lag - 1) as f64 + (prev - 0.5) / (prev - g);
            }
            prev = g;
        }
        panic!("no half-maximum crossing");
    }

    #[test]
    fn speckle_size_follows_pupil() {
        // Autocovariance of |U|² behind a circ pupil of radius f is
        // [2 J1(x) / x]² with x = 2π f r, which halves at x = 1.6163.
        let cutoff = 0.1;
        let airy_fwhm = 1.6163 / (std::f64::consts::PI * cutoff);
        assert!((airy_fwhm - 5.145).abs() < 1e-3);
        let optics = OpticalSystem::new(cutoff, 532.0).unwrap();
        let mut widths = Vec::new();
        for seed in 0..4 {
            let phase = gen_initial_phase(&config(128, 5.0, seed)).unwrap();
            let u = propagate_4f(&surface_amplitude(&phase, &IlluminationProfile::Uniform), &optics).unwrap();
            let intensity = u.mapv(|z| z.norm_sqr());
            widths.push(half_width(&intensity, 0) + half_width(&intensity, 1));
        }
        let fwhm = widths.iter().sum::<f64>() / widths.len() as f64;
        assert!((fwhm / (1.0 / (2.0 * cutoff)) - 1.0).abs() < 0.2, "fwhm {fwhm}");
        assert!((fwhm / airy_fwhm - 1.0).abs() < 0.1, "fwhm {fwhm}");
    }

    #[test]
    fn contrast_falls_with_aperture() {
        let phase = gen_initial_phase(&config(128, 5.0, 3)).unwrap();
        let us = surface_amplitude(&phase, &IlluminationProfile::Uniform);
        let contrast = |cutoff: f64| {
            let optics = OpticalSystem::new(cutoff, 532.0).unwrap();
            speckle_contrast(&bin_intensity(&propagate_4f(&us, &optics).unwrap()).unwrap())
        };
        let cs: Vec<f64> = [0.05, 0.1, 0.2, 0.3, 0.4, 0.5].iter().map(|&c| contrast(c)).collect();
        assert!(cs.windows(2).all(|w| w[1] < w[0]), "{cs:?}");
        assert!(contrast(HIGH_CONTRAST_CUTOFF) >= 0.6);
        assert!(contrast(LOW_CONTRAST_CUTOFF) <= 0.35);
    }

    #[test]
    fn gaussian_beam_shapes_mean_intensity() {
        let mut cfg = config(256, 0.5, 11);
        cfg.n_frames = 16;
        cfg.illumination = IlluminationProfile::Gaussian { omega: 400.0 };
        let stack = synthesize_float(&cfg).unwrap();
        let block_mean = |r0: usize, c0: usize| {
            stack.slice(s![.., r0..r0 + 16, c0..c0 + 16]).iter().map(|&v| v as f64).sum::<f64>() / (16.0 * 16.0 * 16.0)
        };
        let analytic = |r0: usize, c0: usize| {
            let mut s = 0.0;
            for r in r0..r0 + 16 {
                for c in c0..c0 + 16 {
                    s += cfg.illumination.intensity(c as f64 - 128.0, r as f64 - 128.0);
                }
            }
            s / 256.0
        };
        let measured = block_mean(0, 0) / block_mean(120, 120);
        let expected = analytic(0, 0) / analytic(120, 120);
        assert!(expected < 0.85);
        assert!((measured / expected - 1.0).abs() < 0.1, "measured {measured}, expected {expected}");
    }
}

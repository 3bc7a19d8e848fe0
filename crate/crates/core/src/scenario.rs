//! Scenario files: synthesis parameters, activity layout, analysis settings.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::codec::CompressionSpec;
use crate::error::{DsmError, Result};
use crate::estimators::Estimator;
use crate::glyphs;
use crate::synth::{
    IlluminationProfile, OpticalSystem, Stretch, SynthesisConfig, TauField, DEFAULT_STRETCH,
    DEFAULT_WAVELENGTH_NM, HIGH_CONTRAST_CUTOFF,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisSection {
    pub nx: usize,
    pub ny: usize,
    pub n_frames: usize,
    #[serde(default = "one")]
    pub dt: f64,
    pub seed: u64,
    #[serde(default = "default_cutoff")]
    pub cutoff: f64,
    #[serde(default = "default_wavelength")]
    pub wavelength_nm: f64,
    #[serde(default)]
    pub illumination: IlluminationProfile,
    #[serde(default = "default_stretch")]
    pub stretch: Stretch,
    /// One synthesized set per entry, with every correlation radius of the
    /// layout multiplied by the entry. Empty means a single unscaled set.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub set_tau_scale: Vec<f64>,
}

fn one() -> f64 {
    1.0
}

fn default_cutoff() -> f64 {
    HIGH_CONTRAST_CUTOFF
}

fn default_wavelength() -> f64 {
    DEFAULT_WAVELENGTH_NM
}

fn default_stretch() -> Stretch {
    DEFAULT_STRETCH
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disk {
    /// Center column and row, in pixels.
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
    pub tau_c: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskRegion {
    /// Binary image; nonzero pixels belong to the region. Relative paths are
    /// resolved against the scenario file.
    pub path: PathBuf,
    pub tau_c: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextRegion {
    pub text: String,
    pub scale: usize,
    /// Vertical position of the text center as a fraction of the height.
    pub center: f64,
    pub tau_c: f64,
}

/// Spatial distribution of the correlation radius. Later regions overwrite
/// earlier ones where they overlap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ActivityLayout {
    Constant { tau_c: f64 },
    Disks { background: f64, disks: Vec<Disk> },
    Masks { background: f64, masks: Vec<MaskRegion> },
    Text { background: f64, labels: Vec<TextRegion> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    pub estimator: Estimator,
    pub lag: usize,
    pub compression: Vec<CompressionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_tau: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub synthesis: SynthesisSection,
    pub layout: ActivityLayout,
    pub analysis: AnalysisSection,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

/// Per-pixel region membership produced together with a tau field.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionMasks {
    /// Pixels assigned by some region (disk, mask or text).
    pub foreground: Array2<bool>,
    pub background: Array2<bool>,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Version {
            schema_version: Option<u32>,
        }
        let version: Version = toml::from_str(text)
            .map_err(|e| DsmError::InvalidConfig(format!("scenario: {e}")))?;
        match version.schema_version {
            Some(SCHEMA_VERSION) => {}
            Some(v) => {
                return Err(DsmError::InvalidConfig(format!(
                    "scenario schema_version {v} is not supported (expected {SCHEMA_VERSION})"
                )))
            }
            None => return Err(DsmError::InvalidConfig("scenario lacks schema_version".into())),
        }
        let cfg: ScenarioConfig =
            toml::from_str(text).map_err(|e| DsmError::InvalidConfig(format!("scenario: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| DsmError::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| DsmError::format(path, e.to_string()))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    /// SHA-256 of the canonical serialization, as lowercase hex.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn short_hash(&self) -> String {
        self.hash()[..16].to_string()
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(DsmError::InvalidConfig(format!(
                "scenario schema_version {} is not supported",
                self.schema_version
            )));
        }
        let s = &self.synthesis;
        OpticalSystem::new(s.cutoff, s.wavelength_nm)?;
        if let Some(bad) = s.set_tau_scale.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(DsmError::InvalidConfig(format!("set_tau_scale entries must be positive, got {bad}")));
        }
        let taus: Vec<f64> = match &self.layout {
            ActivityLayout::Constant { tau_c } => vec![*tau_c],
            ActivityLayout::Disks { background, disks } => {
                if disks.iter().any(|d| d.radius.is_nan() || d.radius <= 0.0) {
                    return Err(DsmError::InvalidConfig("disk radius must be positive".into()));
                }
                std::iter::once(*background).chain(disks.iter().map(|d| d.tau_c)).collect()
            }
            ActivityLayout::Masks { background, masks } => {
                std::iter::once(*background).chain(masks.iter().map(|m| m.tau_c)).collect()
            }
            ActivityLayout::Text { background, labels } => {
                if labels.iter().any(|l| l.scale == 0) {
                    return Err(DsmError::InvalidConfig("text scale must be at least 1".into()));
                }
                std::iter::once(*background).chain(labels.iter().map(|l| l.tau_c)).collect()
            }
        };
        if let Some(bad) = taus.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return Err(DsmError::InvalidConfig(format!("correlation radius must be positive, got {bad}")));
        }
        let a = &self.analysis;
        if a.lag == 0 || a.lag >= s.n_frames {
            return Err(DsmError::LagOutOfRange {
                lag: a.lag,
                max: s.n_frames.saturating_sub(1),
            });
        }
        for spec in &a.compression {
            spec.validate()?;
        }
        self.synthesis_config(0)?.validate()
    }

    /// Number of synthesized sets.
    pub fn set_count(&self) -> usize {
        self.synthesis.set_tau_scale.len().max(1)
    }

    fn tau_scale(&self, set: usize) -> f64 {
        self.synthesis.set_tau_scale.get(set).copied().unwrap_or(1.0)
    }

    /// Unscaled correlation radius per pixel and the region masks.
    pub fn layout_fields(&self) -> Result<(Array2<f64>, RegionMasks)> {
        let (ny, nx) = (self.synthesis.ny, self.synthesis.nx);
        let mut tau = Array2::zeros((ny, nx));
        let mut fg = Array2::from_elem((ny, nx), false);
        match &self.layout {
            ActivityLayout::Constant { tau_c } => tau.fill(*tau_c),
            ActivityLayout::Disks { background, disks } => {
                tau.fill(*background);
                for d in disks {
                    for ((r, c), t) in tau.indexed_iter_mut() {
                        let (dx, dy) = (c as f64 + 0.5 - d.cx, r as f64 + 0.5 - d.cy);
                        if dx * dx + dy * dy <= d.radius * d.radius {
                            *t = d.tau_c;
                            fg[[r, c]] = true;
                        }
                    }
                }
            }
            ActivityLayout::Masks { background, masks } => {
                tau.fill(*background);
                for m in masks {
                    let path = match &self.base_dir {
                        Some(dir) if m.path.is_relative() => dir.join(&m.path),
                        _ => m.path.clone(),
                    };
                    let img = crate::codec::read_frame(&path)?;
                    if (img.dim().0, img.dim().1) != (ny, nx) {
                        return Err(DsmError::format(
                            &path,
                            format!("mask is {}x{}, frames are {nx}x{ny}", img.dim().1, img.dim().0),
                        ));
                    }
                    for r in 0..ny {
                        for c in 0..nx {
                            if img[[r, c, 0]] != 0 {
                                tau[[r, c]] = m.tau_c;
                                fg[[r, c]] = true;
                            }
                        }
                    }
                }
            }
            ActivityLayout::Text { background, labels } => {
                tau.fill(*background);
                for l in labels {
                    let mask = glyphs::text_mask(ny, nx, &l.text, l.scale, l.center);
                    for ((ix, t), &on) in tau.indexed_iter_mut().zip(mask.iter()) {
                        if on {
                            *t = l.tau_c;
                            fg[ix] = true;
                        }
                    }
                }
            }
        }
        let bg = fg.mapv(|v| !v);
        Ok((
            tau,
            RegionMasks {
                foreground: fg,
                background: bg,
            },
        ))
    }

    /// Synthesis parameters for set `set` (seed offset by the set index).
    pub fn synthesis_config(&self, set: usize) -> Result<SynthesisConfig> {
        let s = &self.synthesis;
        let (tau, _) = self.layout_fields()?;
        let scale = self.tau_scale(set);
        Ok(SynthesisConfig {
            nx: s.nx,
            ny: s.ny,
            n_frames: s.n_frames,
            dt: s.dt,
            tau_field: TauField::new(tau.mapv(|t| t * scale))?,
            illumination: s.illumination,
            optics: OpticalSystem::new(s.cutoff, s.wavelength_nm)?,
            stretch: s.stretch,
            seed: s.seed.wrapping_add(set as u64),
        })
    }

    /// Constant activity `tau_c` on a square frame.
    pub fn constant(tau_c: f64, size: usize, n_frames: usize, seed: u64) -> Self {
        ScenarioConfig {
            schema_version: SCHEMA_VERSION,
            name: "constant".into(),
            description: format!("uniform correlation radius {tau_c} dt"),
            synthesis: SynthesisSection::square(size, n_frames, seed),
            layout: ActivityLayout::Constant { tau_c },
            analysis: AnalysisSection {
                estimator: Estimator::S1,
                lag: 10.min(n_frames - 1),
                compression: standard_grid(),
                n_tau: Some(40.min(n_frames - 1)),
            },
            base_dir: None,
        }
    }

    /// Two text regions of fast activity (`tau_fast`) on a slower background.
    pub fn logos(size: usize, n_frames: usize, seed: u64) -> Self {
        let scale = (size * 9).div_ceil(256).max(1);
        ScenarioConfig {
            schema_version: SCHEMA_VERSION,
            name: "logos".into(),
            description: "text-shaped regions, tau 10 dt, on a background of tau 40 dt".into(),
            synthesis: SynthesisSection::square(size, n_frames, seed),
            layout: ActivityLayout::Text {
                background: 40.0,
                labels: vec![
                    TextRegion {
                        text: "DSM".into(),
                        scale,
                        center: 0.28,
                        tau_c: 10.0,
                    },
                    TextRegion {
                        text: "JPEG".into(),
                        scale,
                        center: 0.72,
                        tau_c: 10.0,
                    },
                ],
            },
            analysis: AnalysisSection {
                estimator: Estimator::S1,
                lag: 10.min(n_frames - 1),
                compression: standard_grid(),
                n_tau: None,
            },
            base_dir: None,
        }
    }

    /// Two disks of different activity, three sets of slowing activity.
    pub fn disks(size: usize, n_frames: usize, seed: u64) -> Self {
        let s = size as f64;
        let mut synthesis = SynthesisSection::square(size, n_frames, seed);
        synthesis.set_tau_scale = vec![1.0, 1.5, 2.5];
        ScenarioConfig {
            schema_version: SCHEMA_VERSION,
            name: "disks".into(),
            description: "large and small disk on a slow background, activity decaying across sets".into(),
            synthesis,
            layout: ActivityLayout::Disks {
                background: 50.0,
                disks: vec![
                    Disk {
                        cx: 0.33 * s,
                        cy: 0.5 * s,
                        radius: 0.22 * s,
                        tau_c: 8.0,
                    },
                    Disk {
                        cx: 0.75 * s,
                        cy: 0.5 * s,
                        radius: 0.12 * s,
                        tau_c: 14.0,
                    },
                ],
            },
            analysis: AnalysisSection {
                estimator: Estimator::S1,
                lag: 10.min(n_frames - 1),
                compression: vec![CompressionSpec::Bmp],
                n_tau: None,
            },
            base_dir: None,
        }
    }

    pub fn preset(name: &str, size: usize, n_frames: usize, seed: u64) -> Result<Self> {
        match name {
            "logos" => Ok(Self::logos(size, n_frames, seed)),
            "logos-gaussian" => {
                let mut s = Self::logos(size, n_frames, seed);
                s.name = "logos-gaussian".into();
                s.synthesis.illumination = IlluminationProfile::Gaussian { omega: 400.0 };
                s.analysis.estimator = Estimator::S2 { q: 1.0 };
                Ok(s)
            }
            "constant" => Ok(Self::constant(20.0, size, n_frames, seed)),
            "disks" => Ok(Self::disks(size, n_frames, seed)),
            other => Err(DsmError::InvalidConfig(format!(
                "unknown preset '{other}' (logos, logos-gaussian, constant, disks)"
            ))),
        }
    }
}

impl SynthesisSection {
    pub fn square(size: usize, n_frames: usize, seed: u64) -> Self {
        SynthesisSection {
            nx: size,
            ny: size,
            n_frames,
            dt: 1.0,
            seed,
            cutoff: HIGH_CONTRAST_CUTOFF,
            wavelength_nm: DEFAULT_WAVELENGTH_NM,
            illumination: IlluminationProfile::Uniform,
            stretch: DEFAULT_STRETCH,
            set_tau_scale: Vec::new(),
        }
    }
}

/// BMP plus JPEG at Q 70/30/10 and JPEG2000 at η 2/3/6.
pub fn standard_grid() -> Vec<CompressionSpec> {
    vec![
        CompressionSpec::Bmp,
        CompressionSpec::Jpeg { quality: 70 },
        CompressionSpec::Jpeg { quality: 30 },
        CompressionSpec::Jpeg { quality: 10 },
        CompressionSpec::Jpeg2000 { ratio: 2.0 },
        CompressionSpec::Jpeg2000 { ratio: 3.0 },
        CompressionSpec::Jpeg2000 { ratio: 6.0 },
    ]
}

//! On-disk frame trees and the simulate / analyze / correlate / ingest /
//! timeseries workflows built on them.
//!
//! A tree is a directory holding `tree.toml` and either variant directories
//! (`bmp/`, `jpg_q70/`, `jp2_eta6/`, ...) or `set_NNN/` directories that each
//! hold variant directories. Every variant directory contains
//! `frame_NNNNN.<ext>` files and a `sequence.toml`.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{self, CompressionSpec, SizeReport};
use crate::error::{DsmError, Result};
use crate::estimators::{self, ActivityMap, CorrelationCurve, Estimator};
use crate::export::{self, ArtifactHeader, Series};
use crate::frames::{ChannelSelect, FrameSequence, Provenance};
use crate::metrics::{self, Roi, SsiReport, SsimParams};
use crate::scenario::ScenarioConfig;
use crate::synth;

pub const TREE_MANIFEST: &str = "tree.toml";
pub const SEQUENCE_META: &str = "sequence.toml";
pub const ANALYSIS_DIR: &str = "analysis";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeManifest {
    pub schema_version: u32,
    pub name: String,
    pub scenario_hash: String,
    /// Channel used when the stored frames are color.
    pub channel: ChannelSelect,
    pub dt: f64,
    pub estimator: Estimator,
    pub lag: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_tau: Option<usize>,
    pub variants: Vec<CompressionSpec>,
    /// Set directory names in order; empty when variants sit at the root.
    #[serde(default)]
    pub sets: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub set_labels: Vec<String>,
}

impl TreeManifest {
    pub fn load(root: &Path) -> Result<Self> {
        let path = root.join(TREE_MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| DsmError::io(&path, e))?;
        toml::from_str(&text).map_err(|e| DsmError::format(&path, e.to_string()))
    }

    pub fn save(&self, root: &Path) -> Result<()> {
        let path = root.join(TREE_MANIFEST);
        let text = toml::to_string_pretty(self).map_err(|e| DsmError::format(&path, e.to_string()))?;
        write_file(&path, text.as_bytes())
    }

    /// Set directories, or the root itself for a single-set tree.
    pub fn set_dirs(&self, root: &Path) -> Vec<PathBuf> {
        if self.sets.is_empty() {
            vec![root.to_path_buf()]
        } else {
            self.sets.iter().map(|s| root.join(s)).collect()
        }
    }

    pub fn header(&self) -> ArtifactHeader {
        ArtifactHeader::new(&self.scenario_hash)
    }
}

/// Per-variant metadata stored next to the frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceMeta {
    pub n_frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: crate::frames::Channels,
    pub dt: f64,
    pub pixel_pitch: f64,
    pub compression: CompressionSpec,
    pub scenario_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub description: String,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| DsmError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| DsmError::io(path, e))
}

pub fn frame_file_name(index: usize, ext: &str) -> String {
    format!("frame_{index:05}.{ext}")
}

/// Encodes `seq` under `spec` into `dir`, returning the size report.
pub fn write_variant(dir: &Path, seq: &FrameSequence, spec: CompressionSpec, meta: &SequenceMeta) -> Result<SizeReport> {
    fs::create_dir_all(dir).map_err(|e| DsmError::io(dir, e))?;
    let encoded = codec::encode_sequence(seq, spec)?;
    encoded
        .files
        .par_iter()
        .enumerate()
        .try_for_each(|(i, bytes)| write_file(&dir.join(frame_file_name(i, spec.extension())), bytes))?;
    let meta = SequenceMeta {
        compression: spec,
        ..meta.clone()
    };
    let path = dir.join(SEQUENCE_META);
    let text = toml::to_string_pretty(&meta).map_err(|e| DsmError::format(&path, e.to_string()))?;
    write_file(&path, text.as_bytes())?;
    Ok(encoded.report)
}

/// Sorted `frame_*` files of a variant directory.
pub fn frame_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| DsmError::io(dir, e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("frame_"))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Decodes a variant directory and reduces it to one channel.
pub fn load_variant(set_dir: &Path, spec: CompressionSpec, channel: ChannelSelect, dt: f64) -> Result<FrameSequence> {
    let dir = set_dir.join(spec.label());
    if !dir.is_dir() {
        return Err(DsmError::format(&dir, "variant directory is missing"));
    }
    let files = frame_files(&dir)?;
    if files.is_empty() {
        return Err(DsmError::format(&dir, "no frame files"));
    }
    let frames = files
        .par_iter()
        .map(|p| codec::read_frame(p))
        .collect::<Result<Vec<_>>>()?;
    let provenance = if spec.is_lossless() {
        Provenance::Synthetic
    } else {
        Provenance::Decompressed(spec)
    };
    let seq = FrameSequence::from_frames(frames, dt, 1.0, provenance)
        .map_err(|e| DsmError::format(&dir, e.to_string()))?;
    Ok(seq.select_channel(channel))
}

fn write_sizes(path: &Path, header: &ArtifactHeader, reports: &[SizeReport]) -> Result<()> {
    let rows: Vec<Vec<String>> = reports
        .iter()
        .flat_map(|r| {
            r.frame_bytes.iter().zip(r.ratios()).enumerate().map(move |(i, (b, ratio))| {
                vec![
                    r.spec.label(),
                    i.to_string(),
                    b.to_string(),
                    r.reference_bytes.to_string(),
                    format!("{ratio:.6}"),
                ]
            })
        })
        .collect();
    export::write_table_csv(path, header, &["compression", "frame", "bytes", "reference_bytes", "ratio"], &rows)
}

#[derive(Clone, Debug)]
pub struct SimulateSummary {
    pub root: PathBuf,
    pub scenario_hash: String,
    /// Size reports per set, in compression-grid order.
    pub sizes: Vec<Vec<SizeReport>>,
}

fn with_bmp_first(grid: &[CompressionSpec]) -> Vec<CompressionSpec> {
    let mut out = vec![CompressionSpec::Bmp];
    out.extend(grid.iter().copied().filter(|s| !s.is_lossless()));
    out
}

/// Synthesizes every set of `scenario` and writes the BMP ground truth plus
/// one directory per compression setting.
pub fn simulate(scenario: &ScenarioConfig, out: &Path) -> Result<SimulateSummary> {
    scenario.validate()?;
    fs::create_dir_all(out).map_err(|e| DsmError::io(out, e))?;
    let hash = scenario.hash();
    let variants = with_bmp_first(&scenario.analysis.compression);
    let n_sets = scenario.set_count();
    let sets: Vec<String> = if n_sets > 1 {
        (0..n_sets).map(|i| format!("set_{i:03}")).collect()
    } else {
        Vec::new()
    };
    let manifest = TreeManifest {
        schema_version: 1,
        name: scenario.name.clone(),
        scenario_hash: hash.clone(),
        channel: ChannelSelect::default(),
        dt: scenario.synthesis.dt,
        estimator: scenario.analysis.estimator,
        lag: scenario.analysis.lag,
        n_tau: scenario.analysis.n_tau,
        variants: variants.clone(),
        set_labels: scenario.synthesis.set_tau_scale.iter().map(|s| format!("tau x{s}")).collect(),
        sets,
    };
    write_file(
        &out.join("scenario.toml"),
        format!("# scenario_hash: {hash}\n{}", scenario.to_toml_string()).as_bytes(),
    )?;

    let mut all_sizes = Vec::new();
    for (set, dir) in manifest.set_dirs(out).iter().enumerate() {
        let cfg = scenario.synthesis_config(set)?;
        log::info!("synthesizing set {set}: {} frames of {}x{}", cfg.n_frames, cfg.nx, cfg.ny);
        let run = synth::synthesize_detailed(&cfg)?;
        if run.quantization.degenerate {
            log::warn!("set {set}: quantization range collapsed");
        }
        let meta = SequenceMeta {
            n_frames: cfg.n_frames,
            height: cfg.ny,
            width: cfg.nx,
            channels: crate::frames::Channels::Gray,
            dt: cfg.dt,
            pixel_pitch: 1.0,
            compression: CompressionSpec::Bmp,
            scenario_hash: hash.clone(),
            seed: Some(cfg.seed),
            description: scenario.description.clone(),
        };
        let mut sizes = Vec::new();
        for spec in &variants {
            log::info!("writing {}", spec.label());
            sizes.push(write_variant(&dir.join(spec.label()), &run.sequence, *spec, &meta)?);
        }
        write_sizes(&dir.join("sizes.csv"), &manifest.header(), &sizes)?;
        all_sizes.push(sizes);
    }
    manifest.save(out)?;
    Ok(SimulateSummary {
        root: out.to_path_buf(),
        scenario_hash: hash,
        sizes: all_sizes,
    })
}

/// Loads all variants of one set and checks they agree on frame count and
/// geometry.
pub fn load_set(manifest: &TreeManifest, set_dir: &Path) -> Result<Vec<(CompressionSpec, FrameSequence)>> {
    if !manifest.variants.contains(&CompressionSpec::Bmp) || !set_dir.join("bmp").is_dir() {
        return Err(DsmError::format(set_dir, "ground-truth bmp sequence is missing"));
    }
    let mut out: Vec<(CompressionSpec, FrameSequence)> = Vec::new();
    for spec in &manifest.variants {
        let seq = load_variant(set_dir, *spec, manifest.channel, manifest.dt)?;
        if let Some((_, gt)) = out.first() {
            if seq.len() != gt.len() {
                return Err(DsmError::format(
                    set_dir.join(spec.label()),
                    format!("variant {} has {} frames, bmp has {}", spec.label(), seq.len(), gt.len()),
                ));
            }
            if !seq.same_layout(gt) {
                return Err(DsmError::format(
                    set_dir.join(spec.label()),
                    format!("variant {} frame geometry differs from bmp", spec.label()),
                ));
            }
        }
        out.push((*spec, seq));
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct VariantAnalysis {
    pub spec: CompressionSpec,
    pub map: ActivityMap,
    /// Comparison against the bmp map; `None` for bmp itself.
    pub ssi: Option<SsiReport>,
}

#[derive(Clone, Debug)]
pub struct SetAnalysis {
    pub set_dir: PathBuf,
    pub variants: Vec<VariantAnalysis>,
    pub display_range: Option<(f64, f64)>,
}

impl SetAnalysis {
    pub fn ground_truth(&self) -> &ActivityMap {
        &self.variants[0].map
    }
}

/// Maps for every variant of one set, SSI against the bmp map, written under
/// `analysis/`.
pub fn analyze_set(
    manifest: &TreeManifest,
    set_dir: &Path,
    estimator: Estimator,
    lag: usize,
    params: SsimParams,
) -> Result<SetAnalysis> {
    let seqs = load_set(manifest, set_dir)?;
    let specs: Vec<CompressionSpec> = seqs.iter().map(|(s, _)| *s).collect();
    let set = estimators::map_set(&seqs.into_iter().map(|(_, s)| s).collect::<Vec<_>>(), estimator, lag)?;
    let gt = set.maps[0].clone();
    let mut variants = Vec::new();
    for (spec, map) in specs.into_iter().zip(set.maps) {
        let ssi = if spec.is_lossless() {
            None
        } else {
            Some(metrics::ssi_map(&map, &gt, params)?)
        };
        variants.push(VariantAnalysis { spec, map, ssi });
    }
    let analysis = SetAnalysis {
        set_dir: set_dir.to_path_buf(),
        variants,
        display_range: set.display_range,
    };
    write_analysis(manifest, &analysis, estimator, lag)?;
    Ok(analysis)
}

fn write_analysis(manifest: &TreeManifest, a: &SetAnalysis, estimator: Estimator, lag: usize) -> Result<()> {
    let dir = a.set_dir.join(ANALYSIS_DIR);
    let range = a.display_range.unwrap_or((0.0, 1.0));
    let mut rows = Vec::new();
    for v in &a.variants {
        let header = manifest.header().with_estimator(estimator, lag).with_compression(v.spec);
        let label = v.spec.label();
        export::write_map_csv(&dir.join(format!("map_{label}.csv")), &v.map, &header)?;
        export::write_heatmap_png(&dir.join(format!("map_{label}.png")), &v.map.values, &v.map.valid, range, &header)?;
        if let Some(ssi) = &v.ssi {
            let header = header
                .with("ssi_window", ssi.params.window)
                .with("ssi_k1", ssi.params.k1)
                .with("ssi_k2", ssi.params.k2)
                .with("ssi_dynamic_range", ssi.dynamic_range)
                .with("reference", "bmp");
            let ssi_as_map = ActivityMap {
                values: ssi.ssi_map.clone(),
                valid: ssi.valid.clone(),
                estimator,
                lag,
            };
            export::write_map_csv(&dir.join(format!("ssi_{label}.csv")), &ssi_as_map, &header)?;
            export::write_heatmap_png(&dir.join(format!("ssi_{label}.png")), &ssi.ssi_map, &ssi.valid, (-1.0, 1.0), &header)?;
            rows.push(vec![label, format!("{:.6}", ssi.mean_ssi)]);
        }
    }
    let header = manifest
        .header()
        .with_estimator(estimator, lag)
        .with("display_min", range.0)
        .with("display_max", range.1);
    export::write_table_csv(&dir.join("mean_ssi.csv"), &header, &["compression", "mean_ssi"], &rows)
}

/// Runs [`analyze_set`] on every set of a tree.
pub fn analyze_tree(root: &Path, estimator: Option<Estimator>, lag: Option<usize>, params: SsimParams) -> Result<Vec<SetAnalysis>> {
    let manifest = TreeManifest::load(root)?;
    let estimator = estimator.unwrap_or(manifest.estimator);
    let lag = lag.unwrap_or(manifest.lag);
    manifest
        .set_dirs(root)
        .iter()
        .map(|d| analyze_set(&manifest, d, estimator, lag, params))
        .collect()
}

/// `ρ̂(m)` for every variant of each set, written as one CSV per set.
pub fn correlate_tree(root: &Path, n_tau: Option<usize>) -> Result<Vec<Vec<(CompressionSpec, CorrelationCurve)>>> {
    let manifest = TreeManifest::load(root)?;
    let mut out = Vec::new();
    for dir in manifest.set_dirs(root) {
        let seqs = load_set(&manifest, &dir)?;
        let n = seqs[0].1.len();
        let n_tau = n_tau.or(manifest.n_tau).unwrap_or(40.min(n - 1));
        if n_tau >= n {
            return Err(DsmError::LagOutOfRange { lag: n_tau, max: n - 1 });
        }
        let curves = seqs
            .iter()
            .map(|(spec, s)| estimators::temporal_corr(s, n_tau).map(|c| (*spec, c)))
            .collect::<Result<Vec<_>>>()?;
        let mut columns = vec!["m".to_string()];
        columns.extend(curves.iter().map(|(s, _)| s.label()));
        let rows: Vec<Vec<String>> = (0..=n_tau)
            .map(|m| {
                std::iter::once(m.to_string())
                    .chain(curves.iter().map(|(_, c)| format!("{:.12}", c.rho[m])))
                    .collect()
            })
            .collect();
        let cols: Vec<&str> = columns.iter().map(String::as_str).collect();
        let header = manifest.header().with("n_tau", n_tau);
        export::write_table_csv(&dir.join(ANALYSIS_DIR).join("correlation.csv"), &header, &cols, &rows)?;
        out.push(curves);
    }
    Ok(out)
}

/// Experimental frames to be grouped into sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestConfig {
    /// Glob matching the frame files; matches are taken in lexical order.
    pub pattern: String,
    pub channel: ChannelSelect,
    pub dt: f64,
    /// Frames per set; `None` puts all frames in one set.
    pub frames_per_set: Option<usize>,
    /// Free-text spacing between sets, e.g. "2 min".
    pub set_spacing: Option<String>,
    pub compression: Vec<CompressionSpec>,
    pub estimator: Estimator,
    pub lag: usize,
}

impl IngestConfig {
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let text = toml::to_string(self).expect("ingest config serializes");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Clone, Debug)]
pub struct IngestSummary {
    pub sets: usize,
    pub frames_per_set: usize,
    pub skipped: usize,
    pub sizes: Vec<Vec<SizeReport>>,
}

/// Groups matched frames into `set_NNN` trees. Color frames are stored and
/// compressed in color; the channel is selected when a variant is loaded.
pub fn ingest(cfg: &IngestConfig, out: &Path) -> Result<IngestSummary> {
    let paths: Vec<PathBuf> = glob::glob(&cfg.pattern)
        .map_err(|e| DsmError::InvalidConfig(format!("bad pattern '{}': {e}", cfg.pattern)))?
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| DsmError::io(e.path().to_path_buf(), std::io::Error::other(e.to_string())))?;
    let mut paths: Vec<PathBuf> = paths.into_iter().filter(|p| p.is_file()).collect();
    paths.sort();
    let per_set = cfg.frames_per_set.unwrap_or(paths.len());
    if per_set < 2 || paths.len() < 2 {
        return Err(DsmError::InvalidConfig(format!(
            "need at least 2 frames per set ({} matched '{}')",
            paths.len(),
            cfg.pattern
        )));
    }
    let n_sets = paths.len() / per_set;
    if n_sets == 0 {
        return Err(DsmError::InvalidConfig(format!(
            "{} frames cannot fill one set of {per_set}",
            paths.len()
        )));
    }
    let skipped = paths.len() - n_sets * per_set;
    if skipped > 0 {
        log::warn!("{skipped} trailing frames do not fill a set and are ignored");
    }
    let variants = with_bmp_first(&cfg.compression);
    let hash = cfg.hash();
    let sets: Vec<String> = (0..n_sets).map(|i| format!("set_{i:03}")).collect();
    let manifest = TreeManifest {
        schema_version: 1,
        name: "ingest".into(),
        scenario_hash: hash.clone(),
        channel: cfg.channel,
        dt: cfg.dt,
        estimator: cfg.estimator,
        lag: cfg.lag,
        n_tau: None,
        variants: variants.clone(),
        set_labels: cfg
            .set_spacing
            .as_ref()
            .map(|s| (0..n_sets).map(|i| format!("{i} x {s}")).collect())
            .unwrap_or_default(),
        sets: sets.clone(),
    };
    fs::create_dir_all(out).map_err(|e| DsmError::io(out, e))?;
    let mut all_sizes = Vec::new();
    for (i, name) in sets.iter().enumerate() {
        let chunk = &paths[i * per_set..(i + 1) * per_set];
        let frames = chunk.par_iter().map(|p| codec::read_frame(p)).collect::<Result<Vec<_>>>()?;
        if let Some((k, f)) = frames.iter().enumerate().find(|(_, f)| f.dim() != frames[0].dim()) {
            return Err(DsmError::format(
                &chunk[k],
                format!("frame is {:?}, first frame of the set is {:?}", f.dim(), frames[0].dim()),
            ));
        }
        let seq = FrameSequence::from_frames(frames, cfg.dt, 1.0, Provenance::Ingested)?;
        let meta = SequenceMeta {
            n_frames: seq.len(),
            height: seq.height(),
            width: seq.width(),
            channels: seq.channels(),
            dt: cfg.dt,
            pixel_pitch: 1.0,
            compression: CompressionSpec::Bmp,
            scenario_hash: hash.clone(),
            seed: None,
            description: format!("ingested from {}", cfg.pattern),
        };
        let dir = out.join(name);
        let sizes = variants
            .iter()
            .map(|spec| write_variant(&dir.join(spec.label()), &seq, *spec, &meta))
            .collect::<Result<Vec<_>>>()?;
        write_sizes(&dir.join("sizes.csv"), &manifest.header(), &sizes)?;
        all_sizes.push(sizes);
    }
    manifest.save(out)?;
    Ok(IngestSummary {
        sets: n_sets,
        frames_per_set: per_set,
        skipped,
        sizes: all_sizes,
    })
}

/// ROI mean of each set's map per variant, written as `timeseries.csv` and
/// `timeseries.png` at the tree root.
pub fn timeseries_tree(root: &Path, estimator: Option<Estimator>, lag: Option<usize>, roi: Roi) -> Result<Vec<Series>> {
    let manifest = TreeManifest::load(root)?;
    let estimator = estimator.unwrap_or(manifest.estimator);
    let lag = lag.unwrap_or(manifest.lag);
    let dirs = manifest.set_dirs(root);
    let mut per_variant: Vec<Vec<ActivityMap>> = vec![Vec::new(); manifest.variants.len()];
    for dir in &dirs {
        for (k, (_, seq)) in load_set(&manifest, dir)?.into_iter().enumerate() {
            per_variant[k].push(estimator.compute(&seq, lag)?);
        }
    }
    let series = manifest
        .variants
        .iter()
        .zip(&per_variant)
        .map(|(spec, maps)| {
            metrics::activity_time_series(maps, roi).map(|ts| Series {
                label: spec.label(),
                points: ts.into_iter().map(|(i, v)| (i as f64, v)).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_timeseries(root, &manifest, &series, estimator, lag, roi)?;
    Ok(series)
}

fn write_timeseries(
    root: &Path,
    manifest: &TreeManifest,
    series: &[Series],
    estimator: Estimator,
    lag: usize,
    roi: Roi,
) -> Result<()> {
    let n = series.first().map_or(0, |s| s.points.len());
    if series.iter().any(|s| s.points.len() != n) {
        return Err(DsmError::DimensionMismatch("variant series have different set counts".into()));
    }
    let mut columns = vec!["set".to_string(), "label".to_string()];
    columns.extend(series.iter().map(|s| s.label.clone()));
    let rows: Vec<Vec<String>> = (0..n)
        .map(|i| {
            let mut row = vec![i.to_string(), manifest.set_labels.get(i).cloned().unwrap_or_default()];
            row.extend(series.iter().map(|s| format!("{:.9}", s.points[i].1)));
            row
        })
        .collect();
    let header = manifest
        .header()
        .with_estimator(estimator, lag)
        .with("roi", format!("{},{},{},{}", roi.x0, roi.y0, roi.width, roi.height));
    let cols: Vec<&str> = columns.iter().map(String::as_str).collect();
    export::write_table_csv(&root.join("timeseries.csv"), &header, &cols, &rows)?;
    export::write_line_plot(&root.join("timeseries.png"), series, &format!("ROI MEAN {}", estimator.tag()), &header)
}

/// Checks that every variant series covers the same set indices.
pub fn align_series(series: &[Series]) -> Result<Vec<f64>> {
    let Some(first) = series.first() else {
        return Ok(Vec::new());
    };
    let xs: Vec<f64> = first.points.iter().map(|p| p.0).collect();
    for s in series {
        let other: Vec<f64> = s.points.iter().map(|p| p.0).collect();
        if other != xs {
            return Err(DsmError::DimensionMismatch(format!(
                "series '{}' covers sets {other:?}, '{}' covers {xs:?}",
                s.label, first.label
            )));
        }
    }
    Ok(xs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(seed: u64) -> ScenarioConfig {
        let mut s = ScenarioConfig::logos(32, 12, seed);
        s.analysis.lag = 3;
        s.analysis.compression = vec![CompressionSpec::Bmp, CompressionSpec::Jpeg { quality: 30 }, CompressionSpec::Jpeg2000 { ratio: 3.0 }];
        s
    }

    #[test]
    fn simulate_writes_tree() {
        let dir = tempfile::tempdir().unwrap();
        let summary = simulate(&tiny(5), dir.path()).unwrap();
        let m = TreeManifest::load(dir.path()).unwrap();
        assert_eq!(m.variants.len(), 3);
        assert!(m.sets.is_empty());
        assert_eq!(frame_files(&dir.path().join("bmp")).unwrap().len(), 12);
        assert!(dir.path().join("jpg_q30/frame_00011.jpg").is_file());
        assert!(dir.path().join("jp2_eta3/sequence.toml").is_file());
        assert!(dir.path().join("sizes.csv").is_file());
        assert_eq!(summary.sizes[0][0].frame_bytes[0], codec::bmp_file_size(32, 32, crate::frames::Channels::Gray));
    }

    #[test]
    fn bmp_tree_matches_library() {
        let dir = tempfile::tempdir().unwrap();
        let s = tiny(6);
        simulate(&s, dir.path()).unwrap();
        let seq = synth::synthesize(&s.synthesis_config(0).unwrap()).unwrap();
        let m = TreeManifest::load(dir.path()).unwrap();
        let loaded = load_variant(dir.path(), CompressionSpec::Bmp, m.channel, 1.0).unwrap();
        assert_eq!(loaded.data(), seq.data());

        let analysis = analyze_tree(dir.path(), None, None, SsimParams::default()).unwrap();
        let direct = estimators::msf_s1(&seq, 3).unwrap();
        assert_eq!(analysis[0].ground_truth().values, direct.values);
        let csv = export::read_map_csv(&dir.path().join("analysis/map_bmp.csv")).unwrap();
        assert_eq!(csv.values, direct.values);
        let (_, rows) = export::read_table_csv(&dir.path().join("analysis/mean_ssi.csv")).unwrap();
        assert_eq!(rows.iter().map(|r| r[0].as_str()).collect::<Vec<_>>(), vec!["jpg_q30", "jp2_eta3"]);
    }

    #[test]
    fn missing_ground_truth_and_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        simulate(&tiny(7), dir.path()).unwrap();
        fs::remove_file(dir.path().join("jpg_q30/frame_00004.jpg")).unwrap();
        let err = analyze_tree(dir.path(), None, None, SsimParams::default()).unwrap_err();
        assert!(err.to_string().contains("jpg_q30"), "{err}");
        fs::remove_dir_all(dir.path().join("bmp")).unwrap();
        let err = analyze_tree(dir.path(), None, None, SsimParams::default()).unwrap_err();
        assert!(err.to_string().contains("bmp"), "{err}");
    }

    #[test]
    fn correlate_bounds() {
        let dir = tempfile::tempdir().unwrap();
        simulate(&tiny(8), dir.path()).unwrap();
        let curves = correlate_tree(dir.path(), Some(0)).unwrap();
        assert!(curves[0].iter().all(|(_, c)| c.rho == vec![1.0]));
        assert!(correlate_tree(dir.path(), Some(12)).is_err());
        let (cols, rows) = export::read_table_csv(&dir.path().join("analysis/correlation.csv")).unwrap();
        assert_eq!(cols, vec!["m", "bmp", "jpg_q30", "jp2_eta3"]);
        assert_eq!(rows.len(), 1);
    }

    #[test]
    fn series_alignment() {
        let a = Series { label: "a".into(), points: vec![(0.0, 1.0), (1.0, 2.0)] };
        let b = Series { label: "b".into(), points: vec![(0.0, 1.0), (2.0, 2.0)] };
        assert!(align_series(&[a.clone(), b]).is_err());
        assert_eq!(align_series(&[a]).unwrap(), vec![0.0, 1.0]);
        assert!(align_series(&[]).unwrap().is_empty());
    }
}

//! Per-frame BMP / JPEG / JPEG2000 round trips and size bookkeeping.
//!
//! Frames are compressed as independent still images. BMP is the lossless
//! reference; compression ratios are always quoted against the BMP file size
//! of the same frame.

mod jp2;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use image::codecs::bmp::BmpEncoder;
use image::codecs::jpeg::JpegEncoder;
use image::{DynamicImage, ExtendedColorType, ImageFormat};
use ndarray::{Array3, ArrayView3, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DsmError, Result};
use crate::frames::{Channels, FrameSequence, Provenance};

/// Relative size tolerance at which JPEG2000 rate iteration stops.
const JP2_SIZE_TOLERANCE: f64 = 0.02;
const JP2_MAX_PASSES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum CompressionSpec {
    Bmp,
    Jpeg { quality: u8 },
    Jpeg2000 { ratio: f64 },
}

impl CompressionSpec {
    pub fn jpeg(quality: u8) -> Result<Self> {
        let spec = CompressionSpec::Jpeg { quality };
        spec.validate()?;
        Ok(spec)
    }

    pub fn jpeg2000(ratio: f64) -> Result<Self> {
        let spec = CompressionSpec::Jpeg2000 { ratio };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            CompressionSpec::Bmp => Ok(()),
            CompressionSpec::Jpeg { quality } if (1..=100).contains(&quality) => Ok(()),
            CompressionSpec::Jpeg { quality } => Err(DsmError::InvalidConfig(format!(
                "JPEG quality must be in 1..=100, got {quality}"
            ))),
            CompressionSpec::Jpeg2000 { ratio } if ratio >= 1.0 && ratio.is_finite() => Ok(()),
            CompressionSpec::Jpeg2000 { ratio } => Err(DsmError::InvalidConfig(format!(
                "JPEG2000 ratio must be >= 1, got {ratio}"
            ))),
        }
    }

    pub fn extension(&self) -> &'static str {
        match self {
            CompressionSpec::Bmp => "bmp",
            CompressionSpec::Jpeg { .. } => "jpg",
            CompressionSpec::Jpeg2000 { .. } => "jp2",
        }
    }

    pub fn is_lossless(&self) -> bool {
        matches!(self, CompressionSpec::Bmp)
    }

    /// Directory-safe name: `bmp`, `jpg_q70`, `jp2_eta6`.
    pub fn label(&self) -> String {
        match *self {
            CompressionSpec::Bmp => "bmp".into(),
            CompressionSpec::Jpeg { quality } => format!("jpg_q{quality}"),
            CompressionSpec::Jpeg2000 { ratio } => format!("jp2_eta{ratio}"),
        }
    }
}

impl fmt::Display for CompressionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for CompressionSpec {
    type Err = DsmError;

    /// Accepts labels (`jpg_q30`) and the short form (`jpg:30`, `jp2:6`).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let bad = || DsmError::InvalidConfig(format!("unrecognized compression spec '{s}'"));
        if s == "bmp" {
            return Ok(CompressionSpec::Bmp);
        }
        let (kind, value) = if let Some(v) = s.strip_prefix("jpg_q") {
            ("jpg", v)
        } else if let Some(v) = s.strip_prefix("jp2_eta") {
            ("jp2", v)
        } else {
            s.split_once(':').ok_or_else(bad)?
        };
        match kind {
            "jpg" | "jpeg" => CompressionSpec::jpeg(value.parse().map_err(|_| bad())?),
            "jp2" | "j2k" | "jpeg2000" => CompressionSpec::jpeg2000(value.parse().map_err(|_| bad())?),
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for CompressionSpec {
    type Error = DsmError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<CompressionSpec> for String {
    fn from(spec: CompressionSpec) -> String {
        spec.label()
    }
}

/// File size of an uncompressed BMP: 54-byte header, a 256-entry palette for
/// grayscale, rows padded to 4 bytes.
pub fn bmp_file_size(height: usize, width: usize, channels: Channels) -> usize {
    let (bytes_pp, palette) = match channels {
        Channels::Gray => (1, 1024),
        Channels::Rgb => (3, 0),
    };
    let stride = (width * bytes_pp).div_ceil(4) * 4;
    54 + palette + stride * height
}

fn color_type(channels: usize) -> Result<ExtendedColorType> {
    match channels {
        1 => Ok(ExtendedColorType::L8),
        3 => Ok(ExtendedColorType::Rgb8),
        n => Err(DsmError::ChannelLayout(format!("{n} channels"))),
    }
}

/// Encodes one `(row, column, channel)` frame.
pub fn encode_frame(frame: ArrayView3<u8>, spec: CompressionSpec) -> Result<Vec<u8>> {
    spec.validate()?;
    let (h, w, ch) = frame.dim();
    let ct = color_type(ch)?;
    let pixels: Vec<u8> = frame.iter().copied().collect();
    let encode_err = |format: &'static str| move |e: image::ImageError| DsmError::Encode {
        format,
        reason: e.to_string(),
    };
    match spec {
        CompressionSpec::Bmp => {
            let mut out = Vec::with_capacity(bmp_file_size(h, w, Channels::from_count(ch)?));
            BmpEncoder::new(&mut out)
                .encode(&pixels, w as u32, h as u32, ct)
                .map_err(encode_err("BMP"))?;
            Ok(out)
        }
        CompressionSpec::Jpeg { quality } => {
            let mut out = Vec::new();
            JpegEncoder::new_with_quality(&mut out, quality)
                .encode(&pixels, w as u32, h as u32, ct)
                .map_err(encode_err("JPEG"))?;
            Ok(out)
        }
        CompressionSpec::Jpeg2000 { ratio } => encode_jp2_ratio(frame, ratio),
    }
}

/// JPEG2000 at a file size of `bmp_size / ratio`. OpenJPEG's rate knob is
/// relative to the raw sample count and excludes container overhead, so it
/// is refined by a few secant-style passes on the achieved size.
fn encode_jp2_ratio(frame: ArrayView3<u8>, ratio: f64) -> Result<Vec<u8>> {
    let (h, w, ch) = frame.dim();
    let target = bmp_file_size(h, w, Channels::from_count(ch)?) as f64 / ratio;
    let raw = (h * w * ch) as f64;
    let mut rate = (raw / target).max(1.0);
    let mut best: Option<Vec<u8>> = None;
    let miss = |b: &Vec<u8>| (b.len() as f64 / target - 1.0).abs();
    for _ in 0..JP2_MAX_PASSES {
        let bytes = jp2::encode_with_rate(frame, rate as f32)?;
        let size = bytes.len() as f64;
        let done = (size / target - 1.0).abs() <= JP2_SIZE_TOLERANCE;
        if best.as_ref().is_none_or(|b| miss(&bytes) < miss(b)) {
            best = Some(bytes);
        }
        if done {
            break;
        }
        let next = (rate * size / target).max(1.0);
        if next == rate {
            break;
        }
        rate = next;
    }
    Ok(best.expect("at least one pass"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FileFormat {
    Bmp,
    Jpeg,
    Jpeg2000,
    Png,
}

pub fn sniff_format(bytes: &[u8]) -> Option<FileFormat> {
    const JP2_SIGNATURE: [u8; 12] = [0, 0, 0, 0x0C, b'j', b'P', b' ', b' ', 0x0D, 0x0A, 0x87, 0x0A];
    if bytes.starts_with(b"BM") {
        Some(FileFormat::Bmp)
    } else if bytes.starts_with(&[0xFF, 0xD8, 0xFF]) {
        Some(FileFormat::Jpeg)
    } else if bytes.starts_with(&JP2_SIGNATURE) || bytes.starts_with(&[0xFF, 0x4F, 0xFF, 0x51]) {
        Some(FileFormat::Jpeg2000)
    } else if bytes.starts_with(b"\x89PNG") {
        Some(FileFormat::Png)
    } else {
        None
    }
}

fn dynamic_to_array(img: DynamicImage, force_gray: bool) -> Array3<u8> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if force_gray || img.color().channel_count() <= 2 {
        let g = img.into_luma8().into_raw();
        Array3::from_shape_vec((h, w, 1), g).expect("luma buffer size")
    } else {
        let rgb = img.into_rgb8().into_raw();
        Array3::from_shape_vec((h, w, 3), rgb).expect("rgb buffer size")
    }
}

/// Palette BMPs decode as RGB; collapse them back to one channel when the
/// palette is gray.
fn bmp_is_gray(bytes: &[u8], img: &DynamicImage) -> bool {
    let bpp = bytes.get(28..30).map(|b| u16::from_le_bytes([b[0], b[1]]));
    if !matches!(bpp, Some(b) if b <= 8) {
        return false;
    }
    match img {
        DynamicImage::ImageRgb8(rgb) => rgb.pixels().all(|p| p[0] == p[1] && p[1] == p[2]),
        DynamicImage::ImageRgba8(rgba) => rgba.pixels().all(|p| p[0] == p[1] && p[1] == p[2]),
        _ => true,
    }
}

/// Decodes BMP, JPEG, JPEG2000 or PNG bytes into `(row, column, channel)`.
pub fn decode_frame(bytes: &[u8]) -> Result<Array3<u8>> {
    let format = sniff_format(bytes).ok_or_else(|| DsmError::Decode {
        format: "image",
        reason: "unrecognized file signature".into(),
    })?;
    let (image_format, name) = match format {
        FileFormat::Jpeg2000 => return jp2::decode(bytes),
        FileFormat::Bmp => (ImageFormat::Bmp, "BMP"),
        FileFormat::Jpeg => (ImageFormat::Jpeg, "JPEG"),
        FileFormat::Png => (ImageFormat::Png, "PNG"),
    };
    let img = image::load_from_memory_with_format(bytes, image_format).map_err(|e| DsmError::Decode {
        format: name,
        reason: e.to_string(),
    })?;
    let gray = format == FileFormat::Bmp && bmp_is_gray(bytes, &img);
    Ok(dynamic_to_array(img, gray))
}

pub fn read_frame(path: &Path) -> Result<Array3<u8>> {
    let bytes = std::fs::read(path).map_err(|e| DsmError::io(path, e))?;
    decode_frame(&bytes).map_err(|e| DsmError::format(path, e.to_string()))
}

/// Encoded byte counts of one sequence under one spec.
#[derive(Clone, Debug, PartialEq)]
pub struct SizeReport {
    pub spec: CompressionSpec,
    pub frame_bytes: Vec<usize>,
    /// BMP file size of one frame.
    pub reference_bytes: usize,
}

impl SizeReport {
    pub fn ratios(&self) -> Vec<f64> {
        self.frame_bytes
            .iter()
            .map(|&b| self.reference_bytes as f64 / b as f64)
            .collect()
    }

    pub fn mean_bytes(&self) -> f64 {
        self.frame_bytes.iter().sum::<usize>() as f64 / self.frame_bytes.len() as f64
    }

    /// Reference size over mean encoded size.
    pub fn mean_ratio(&self) -> f64 {
        self.reference_bytes as f64 / self.mean_bytes()
    }

    pub fn total_bytes(&self) -> usize {
        self.frame_bytes.iter().sum()
    }

    /// CSV rows `frame,bytes,reference_bytes,ratio`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let wrap = |e: csv::Error| DsmError::InvalidConfig(format!("size report csv: {e}"));
        w.write_record(["frame", "bytes", "reference_bytes", "ratio"]).map_err(wrap)?;
        for (i, (&b, r)) in self.frame_bytes.iter().zip(self.ratios()).enumerate() {
            w.write_record([
                i.to_string(),
                b.to_string(),
                self.reference_bytes.to_string(),
                format!("{r:.6}"),
            ])
            .map_err(wrap)?;
        }
        w.flush().map_err(|e| DsmError::InvalidConfig(format!("size report csv: {e}")))
    }
}

/// All frames of a sequence in one encoded format.
#[derive(Clone, Debug)]
pub struct EncodedSequence {
    pub spec: CompressionSpec,
    pub files: Vec<Vec<u8>>,
    pub report: SizeReport,
}

pub fn encode_sequence(seq: &FrameSequence, spec: CompressionSpec) -> Result<EncodedSequence> {
    spec.validate()?;
    let files = (0..seq.len())
        .into_par_iter()
        .map(|i| encode_frame(seq.frame(i), spec))
        .collect::<Result<Vec<_>>>()?;
    let report = SizeReport {
        spec,
        frame_bytes: files.iter().map(Vec::len).collect(),
        reference_bytes: bmp_file_size(seq.height(), seq.width(), seq.channels()),
    };
    Ok(EncodedSequence {
        spec,
        files,
        report,
    })
}

/// Decodes files written by [`encode_sequence`] (or any ordered frame files).
pub fn decode_sequence(
    files: &[Vec<u8>],
    dt: f64,
    pixel_pitch: f64,
    provenance: Provenance,
) -> Result<FrameSequence> {
    let frames = files
        .par_iter()
        .enumerate()
        .map(|(i, f)| {
            decode_frame(f).map_err(|e| DsmError::format(format!("frame {i}"), e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    FrameSequence::from_frames(frames, dt, pixel_pitch, provenance)
}

/// Encodes and decodes every frame independently.
pub fn roundtrip_sequence(seq: &FrameSequence, spec: CompressionSpec) -> Result<(FrameSequence, SizeReport)> {
    let encoded = encode_sequence(seq, spec)?;
    let mut out = decode_sequence(
        &encoded.files,
        seq.dt,
        seq.pixel_pitch,
        Provenance::Decompressed(spec),
    )?;
    if !out.same_layout(seq) {
        // a gray frame can only come back gray; this guards codec surprises
        out = out.select_channel(crate::frames::ChannelSelect::Luminance);
    }
    Ok((out, encoded.report))
}

/// JPEG quality whose mean encoded size over `frames` is closest to
/// `bmp_size / ratio`.
pub fn jpeg_quality_for_ratio(seq: &FrameSequence, ratio: f64, sample_frames: usize) -> Result<u8> {
    let target = bmp_file_size(seq.height(), seq.width(), seq.channels()) as f64 / ratio;
    let picks: Vec<usize> = (0..seq.len()).step_by((seq.len() / sample_frames.max(1)).max(1)).take(sample_frames.max(1)).collect();
    let mean_size = |q: u8| -> Result<f64> {
        let sizes = picks
            .par_iter()
            .map(|&i| encode_frame(seq.frame(i), CompressionSpec::Jpeg { quality: q }).map(|b| b.len()))
            .collect::<Result<Vec<_>>>()?;
        Ok(sizes.iter().sum::<usize>() as f64 / sizes.len() as f64)
    };
    // size grows with quality; find the first quality at or above target
    let (mut lo, mut hi) = (1u8, 100u8);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if mean_size(mid)? < target {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    let above = (mean_size(lo)? - target).abs();
    if lo > 1 && (mean_size(lo - 1)? - target).abs() < above {
        Ok(lo - 1)
    } else {
        Ok(lo)
    }
}

/// 256-bin intensity histograms of two sequences.
#[derive(Clone, Debug, PartialEq)]
pub struct HistogramShift {
    pub original: Vec<u64>,
    pub decompressed: Vec<u64>,
    /// `½ Σ |p − q|` of the normalized histograms.
    pub total_variation: f64,
}

pub fn intensity_histogram(seq: &FrameSequence) -> Vec<u64> {
    let mut h = vec![0u64; 256];
    for &v in seq.data().iter() {
        h[v as usize] += 1;
    }
    h
}

pub fn histogram_shift_report(original: &FrameSequence, decompressed: &FrameSequence) -> Result<HistogramShift> {
    if original.data().dim() != decompressed.data().dim() {
        return Err(DsmError::DimensionMismatch(format!(
            "original {:?} vs decompressed {:?}",
            original.data().dim(),
            decompressed.data().dim()
        )));
    }
    let a = intensity_histogram(original);
    let b = intensity_histogram(decompressed);
    let (na, nb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    let tv = 0.5
        * a.iter()
            .zip(&b)
            .map(|(&x, &y)| (x as f64 / na - y as f64 / nb).abs())
            .sum::<f64>();
    Ok(HistogramShift {
        original: a,
        decompressed: b,
        total_variation: tv,
    })
}

/// Mean absolute pixel error between two equally shaped sequences.
pub fn mean_abs_error(a: &FrameSequence, b: &FrameSequence) -> Result<f64> {
    if a.data().dim() != b.data().dim() {
        return Err(DsmError::DimensionMismatch("sequences differ in shape".into()));
    }
    let sum: u64 = a
        .data()
        .iter()
        .zip(b.data().iter())
        .map(|(&x, &y)| x.abs_diff(y) as u64)
        .sum();
    Ok(sum as f64 / a.data().len() as f64)
}

/// Strength of an 8-pixel period in the column-difference profile of a
/// grayscale frame: spectral power at frequency 1/8 over the median power of
/// the other nonzero frequencies.
pub fn block_periodicity(frame: ndarray::ArrayView2<u8>) -> f64 {
    let (h, w) = frame.dim();
    if w < 17 || h == 0 {
        return 0.0;
    }
    let profile: Vec<f64> = (0..w - 1)
        .map(|c| {
            frame
                .index_axis(Axis(1), c)
                .iter()
                .zip(frame.index_axis(Axis(1), c + 1).iter())
                .map(|(&a, &b)| (a as f64 - b as f64).abs())
                .sum::<f64>()
                / h as f64
        })
        .collect();
    let n = (profile.len() / 8) * 8;
    let mean = profile[..n].iter().sum::<f64>() / n as f64;
    let power = |k: usize| {
        let (mut re, mut im) = (0.0, 0.0);
        for (j, &v) in profile[..n].iter().enumerate() {
            let ang = -2.0 * std::f64::consts::PI * (k * j) as f64 / n as f64;
            re += (v - mean) * ang.cos();
            im += (v - mean) * ang.sin();
        }
        re * re + im * im
    };
    let k8 = n / 8;
    let mut others: Vec<f64> = (1..=n / 2).filter(|&k| k % k8 != 0).map(power).collect();
    if others.is_empty() {
        return 0.0;
    }
    others.sort_by(|a, b| a.total_cmp(b));
    let median = others[others.len() / 2].max(f64::MIN_POSITIVE);
    power(k8) / median
}

//! CSV tables, heatmap PNGs and line plots, each tagged with the scenario
//! hash, estimator, lag and compression that produced it.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use image::{GrayImage, Luma, Rgb, RgbImage};
use ndarray::Array2;
use serde::Serialize;

use crate::codec::CompressionSpec;
use crate::error::{DsmError, Result};
use crate::estimators::{ActivityMap, Estimator};
use crate::glyphs;

/// Provenance written at the top of every artifact.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ArtifactHeader {
    pub scenario_hash: String,
    pub estimator: Option<String>,
    pub lag: Option<usize>,
    pub compression: Option<String>,
    #[serde(flatten)]
    pub extra: std::collections::BTreeMap<String, String>,
}

impl ArtifactHeader {
    pub fn new(scenario_hash: impl Into<String>) -> Self {
        Self {
            scenario_hash: scenario_hash.into(),
            ..Default::default()
        }
    }

    pub fn with_estimator(mut self, estimator: Estimator, lag: usize) -> Self {
        self.estimator = Some(estimator.tag());
        self.lag = Some(lag);
        self
    }

    pub fn with_compression(mut self, spec: CompressionSpec) -> Self {
        self.compression = Some(spec.label());
        self
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.extra.insert(key.to_string(), value.to_string());
        self
    }

    pub fn lines(&self) -> Vec<(String, String)> {
        let mut out = vec![("scenario_hash".to_string(), self.scenario_hash.clone())];
        if let Some(e) = &self.estimator {
            out.push(("estimator".into(), e.clone()));
        }
        if let Some(m) = self.lag {
            out.push(("lag".into(), m.to_string()));
        }
        if let Some(c) = &self.compression {
            out.push(("compression".into(), c.clone()));
        }
        out.extend(self.extra.iter().map(|(k, v)| (k.clone(), v.clone())));
        out
    }

    fn write_comment<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        for (k, v) in self.lines() {
            writeln!(w, "# {k}: {v}")?;
        }
        Ok(())
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| DsmError::io(dir, e))?;
        }
    }
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| DsmError::io(path, e))
}

/// Map values row-major, one CSV row per map row. Invalid pixels are `NaN`.
pub fn write_map_csv(path: &Path, map: &ActivityMap, header: &ArtifactHeader) -> Result<()> {
    let io = |e| DsmError::io(path, e);
    let mut w = create(path)?;
    header.write_comment(&mut w).map_err(io)?;
    let (h, wd) = map.dim();
    writeln!(w, "# rows: {h}").map_err(io)?;
    writeln!(w, "# cols: {wd}").map_err(io)?;
    let mut line = String::new();
    for r in 0..h {
        line.clear();
        for c in 0..wd {
            if c > 0 {
                line.push(',');
            }
            if map.valid[[r, c]] {
                line.push_str(&format!("{:?}", map.values[[r, c]]));
            } else {
                line.push_str("NaN");
            }
        }
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// A map read back from CSV together with its `# key: value` header.
#[derive(Clone, Debug, PartialEq)]
pub struct MapCsv {
    pub values: Array2<f64>,
    pub valid: Array2<bool>,
    pub header: Vec<(String, String)>,
}

impl MapCsv {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.header.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn into_map(self, estimator: Estimator, lag: usize) -> ActivityMap {
        ActivityMap {
            values: self.values,
            valid: self.valid,
            estimator,
            lag,
        }
    }
}

pub fn read_map_csv(path: &Path) -> Result<MapCsv> {
    let file = fs::File::open(path).map_err(|e| DsmError::io(path, e))?;
    let mut header = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| DsmError::io(path, e))?;
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.split_once(':') {
                header.push((k.trim().to_string(), v.trim().to_string()));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| DsmError::format(path, format!("line {}: {e}", i + 1)))?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(DsmError::format(path, format!("line {} has {} columns, expected {}", i + 1, row.len(), first.len())));
            }
        }
        rows.push(row);
    }
    let h = rows.len();
    let w = rows.first().map_or(0, Vec::len);
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let values = Array2::from_shape_vec((h, w), flat).map_err(|e| DsmError::format(path, e.to_string()))?;
    let valid = values.mapv(|v: f64| !v.is_nan());
    let values = values.mapv(|v| if v.is_nan() { 0.0 } else { v });
    Ok(MapCsv { values, valid, header })
}

/// Generic table: header comment, column names, rows.
pub fn write_table_csv(path: &Path, header: &ArtifactHeader, columns: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let io = |e| DsmError::io(path, e);
    let mut w = create(path)?;
    header.write_comment(&mut w).map_err(io)?;
    let mut csv = csv::Writer::from_writer(w);
    let wrap = |e: csv::Error| DsmError::format(path, e.to_string());
    csv.write_record(columns).map_err(wrap)?;
    for row in rows {
        csv.write_record(row).map_err(wrap)?;
    }
    csv.flush().map_err(io)
}

/// Data rows of a table written by [`write_table_csv`], keyed by column.
pub fn read_table_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = fs::read_to_string(path).map_err(|e| DsmError::io(path, e))?;
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let wrap = |e: csv::Error| DsmError::format(path, e.to_string());
    let columns = r.headers().map_err(wrap)?.iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(String::from).collect()))
        .collect::<std::result::Result<_, _>>()
        .map_err(wrap)?;
    Ok((columns, rows))
}

/// Linear map of `[lo, hi]` onto 0..=255; invalid pixels are black.
pub fn heatmap_levels(values: &Array2<f64>, valid: &Array2<bool>, range: (f64, f64)) -> Array2<u8> {
    let (lo, hi) = range;
    let span = hi - lo;
    Array2::from_shape_fn(values.dim(), |ix| {
        if !valid[ix] || span <= 0.0 {
            return 0;
        }
        ((values[ix] - lo) / span * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
    })
}

/// Path of the TOML sidecar written next to an image.
pub fn sidecar_path(image: &Path) -> PathBuf {
    let mut name = image.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.toml");
    image.with_file_name(name)
}

#[derive(Serialize)]
struct HeatmapMeta<'a> {
    #[serde(flatten)]
    header: &'a ArtifactHeader,
    display_min: f64,
    display_max: f64,
    width: usize,
    height: usize,
}

/// 8-bit grayscale heatmap plus a sidecar recording the display range.
pub fn write_heatmap_png(
    path: &Path,
    values: &Array2<f64>,
    valid: &Array2<bool>,
    range: (f64, f64),
    header: &ArtifactHeader,
) -> Result<()> {
    let levels = heatmap_levels(values, valid, range);
    let (h, w) = levels.dim();
    let img = GrayImage::from_fn(w as u32, h as u32, |x, y| Luma([levels[[y as usize, x as usize]]]));
    save_png(path, &image::DynamicImage::ImageLuma8(img))?;
    let meta = HeatmapMeta {
        header,
        display_min: range.0,
        display_max: range.1,
        width: w,
        height: h,
    };
    let side = sidecar_path(path);
    let text = toml::to_string(&meta).map_err(|e| DsmError::format(&side, e.to_string()))?;
    fs::write(&side, text).map_err(|e| DsmError::io(&side, e))
}

fn save_png(path: &Path, img: &image::DynamicImage) -> Result<()> {
    let mut w = create(path)?;
    img.write_to(&mut w, image::ImageFormat::Png)
        .map_err(|e| DsmError::format(path, e.to_string()))?;
    w.flush().map_err(|e| DsmError::io(path, e))
}

/// Named series of `(x, y)` points.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [[u8; 3]; 6] = [
    [0, 0, 0],
    [214, 39, 40],
    [31, 119, 180],
    [44, 160, 44],
    [148, 103, 189],
    [255, 127, 14],
];

fn draw_line(img: &mut RgbImage, a: (f64, f64), b: (f64, f64), color: Rgb<u8>) {
    let steps = ((b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil() as usize).max(1);
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        let x = a.0 + t * (b.0 - a.0);
        let y = a.1 + t * (b.1 - a.1);
        for (dx, dy) in [(0i64, 0i64), (1, 0), (0, 1)] {
            let (px, py) = (x.round() as i64 + dx, y.round() as i64 + dy);
            if px >= 0 && py >= 0 && (px as u32) < img.width() && (py as u32) < img.height() {
                img.put_pixel(px as u32, py as u32, color);
            }
        }
    }
}

fn draw_text(img: &mut RgbImage, text: &str, x: usize, y: usize, color: Rgb<u8>) {
    let mut mask = Array2::from_elem((img.height() as usize, img.width() as usize), false);
    glyphs::stamp_text(&mut mask, text, y, x, 1);
    for ((r, c), &on) in mask.indexed_iter() {
        if on {
            img.put_pixel(c as u32, r as u32, color);
        }
    }
}

fn tick_label(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-2..1e4).contains(&a) {
        format!("{v:.2e}").to_uppercase()
    } else if a >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

/// Line plot with markers, axis ticks and a legend.
pub fn render_line_plot(series: &[Series], title: &str, width: u32, height: u32) -> RgbImage {
    let mut img = RgbImage::from_pixel(width, height, Rgb([255, 255, 255]));
    let (left, right, top, bottom) = (64.0, 16.0, 24.0, 32.0);
    let pw = width as f64 - left - right;
    let ph = height as f64 - top - bottom;
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 == x0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    let pad = if y1 > y0 { 0.05 * (y1 - y0) } else { 0.5_f64.max(y0.abs() * 0.05) };
    y0 -= pad;
    y1 += pad;
    let to_px = |x: f64, y: f64| (left + (x - x0) / (x1 - x0) * pw, top + (y1 - y) / (y1 - y0) * ph);

    let axis = Rgb([0, 0, 0]);
    draw_line(&mut img, (left, top), (left, top + ph), axis);
    draw_line(&mut img, (left, top + ph), (left + pw, top + ph), axis);
    for i in 0..=4 {
        let v = y0 + (y1 - y0) * i as f64 / 4.0;
        let (_, py) = to_px(x0, v);
        draw_line(&mut img, (left - 4.0, py), (left, py), axis);
        draw_text(&mut img, &tick_label(v), 2, (py - 3.0).max(0.0) as usize, axis);
        let u = x0 + (x1 - x0) * i as f64 / 4.0;
        let (px, _) = to_px(u, y0);
        draw_line(&mut img, (px, top + ph), (px, top + ph + 4.0), axis);
        let label = tick_label(u);
        let lx = (px as usize).saturating_sub(glyphs::text_width(&label, 1) / 2);
        draw_text(&mut img, &label, lx, (top + ph + 8.0) as usize, axis);
    }
    draw_text(&mut img, title, left as usize, 6, axis);

    for (k, s) in series.iter().enumerate() {
        let color = Rgb(PALETTE[k % PALETTE.len()]);
        for w in s.points.windows(2) {
            draw_line(&mut img, to_px(w[0].0, w[0].1), to_px(w[1].0, w[1].1), color);
        }
        for &(x, y) in &s.points {
            let (px, py) = to_px(x, y);
            draw_line(&mut img, (px - 2.0, py), (px + 2.0, py), color);
            draw_line(&mut img, (px, py - 2.0), (px, py + 2.0), color);
        }
        let ly = top as usize + 6 + 12 * k;
        let lx = (left + pw) as usize - 110;
        draw_line(&mut img, (lx as f64, ly as f64 + 3.0), (lx as f64 + 14.0, ly as f64 + 3.0), color);
        draw_text(&mut img, &s.label, lx + 18, ly, color);
    }
    img
}

/// Line plot PNG plus sidecar.
pub fn write_line_plot(path: &Path, series: &[Series], title: &str, header: &ArtifactHeader) -> Result<()> {
    let img = render_line_plot(series, title, 640, 420);
    save_png(path, &image::DynamicImage::ImageRgb8(img))?;
    let side = sidecar_path(path);
    let mut meta = toml::map::Map::new();
    for (k, v) in header.lines() {
        meta.insert(k, toml::Value::String(v));
    }
    meta.insert(
        "series".into(),
        toml::Value::Array(series.iter().map(|s| toml::Value::String(s.label.clone())).collect()),
    );
    let text = toml::to_string(&toml::Value::Table(meta)).map_err(|e| DsmError::format(&side, e.to_string()))?;
    fs::write(&side, text).map_err(|e| DsmError::io(&side, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> ArtifactHeader {
        ArtifactHeader::new("abc123")
            .with_estimator(Estimator::S1, 10)
            .with_compression(CompressionSpec::Jpeg { quality: 30 })
    }

    #[test]
    fn map_csv_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let values = Array2::from_shape_fn((3, 4), |(r, c)| (r as f64 + 0.1) / (c as f64 + 3.0));
        let mut map = ActivityMap::from_values(values, Estimator::S1, 10);
        map.valid[[1, 2]] = false;
        map.values[[1, 2]] = 0.0;
        write_map_csv(&path, &map, &header()).unwrap();
        let back = read_map_csv(&path).unwrap();
        assert_eq!(back.values, map.values);
        assert_eq!(back.valid, map.valid);
        assert_eq!(back.get("scenario_hash"), Some("abc123"));
        assert_eq!(back.get("estimator"), Some("s1"));
        assert_eq!(back.get("lag"), Some("10"));
        assert_eq!(back.get("compression"), Some("jpg_q30"));
    }

    #[test]
    fn heatmap_levels_and_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.png");
        let values = ndarray::arr2(&[[0.0, 1.0], [2.0, 5.0]]);
        let mut valid = Array2::from_elem((2, 2), true);
        valid[[1, 0]] = false;
        let levels = heatmap_levels(&values, &valid, (0.0, 4.0));
        assert_eq!(levels, ndarray::arr2(&[[0u8, 64], [0, 255]]));
        write_heatmap_png(&path, &values, &valid, (0.0, 4.0), &header()).unwrap();
        let img = image::open(&path).unwrap().into_luma8();
        assert_eq!(img.get_pixel(1, 0)[0], 64);
        let meta = fs::read_to_string(sidecar_path(&path)).unwrap();
        assert!(meta.contains("display_max = 4.0"));
        assert!(meta.contains("scenario_hash = \"abc123\""));
    }

    #[test]
    fn table_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_table_csv(&path, &header(), &["a", "b"], &[vec!["1".into(), "x".into()]]).unwrap();
        let (cols, rows) = read_table_csv(&path).unwrap();
        assert_eq!(cols, vec!["a", "b"]);
        assert_eq!(rows, vec![vec!["1".to_string(), "x".to_string()]]);
    }

    #[test]
    fn plot_draws_series() {
        let s = vec![
            Series { label: "bmp".into(), points: vec![(0.0, 3.0), (1.0, 2.0), (2.0, 1.0)] },
            Series { label: "jp2".into(), points: vec![(0.0, 3.5)] },
        ];
        let img = render_line_plot(&s, "S1", 320, 200);
        let red = img.pixels().filter(|p| p.0 == PALETTE[1]).count();
        assert!(red > 0);
        let dir = tempfile::tempdir().unwrap();
        write_line_plot(&dir.path().join("p.png"), &s, "S1", &header()).unwrap();
        assert!(sidecar_path(&dir.path().join("p.png")).exists());
    }
}

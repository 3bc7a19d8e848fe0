//! A 5×7 bitmap font for text masks and plot labels.

use ndarray::Array2;

pub const GLYPH_W: usize = 5;
pub const GLYPH_H: usize = 7;

/// Rows top to bottom; bit 4 is the leftmost column.
fn glyph(ch: char) -> [u8; 7] {
    match ch.to_ascii_uppercase() {
        'A' => [0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'B' => [0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E],
        'C' => [0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E],
        'D' => [0x1E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1E],
        'E' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F],
        'F' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10],
        'G' => [0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F],
        'H' => [0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'I' => [0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E],
        'J' => [0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C],
        'K' => [0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11],
        'L' => [0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F],
        'M' => [0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11],
        'N' => [0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11],
        'O' => [0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'P' => [0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10],
        'Q' => [0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D],
        'R' => [0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11],
        'S' => [0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E],
        'T' => [0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04],
        'U' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'V' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04],
        'W' => [0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A],
        'X' => [0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11],
        'Y' => [0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04],
        'Z' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F],
        '0' => [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E],
        '1' => [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E],
        '2' => [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F],
        '3' => [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E],
        '4' => [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02],
        '5' => [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E],
        '6' => [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E],
        '7' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
        '8' => [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E],
        '9' => [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C],
        '.' => [0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C],
        ',' => [0x00, 0x00, 0x00, 0x00, 0x0C, 0x04, 0x08],
        ':' => [0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00],
        '-' => [0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00],
        '_' => [0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F],
        '=' => [0x00, 0x00, 0x1F, 0x00, 0x1F, 0x00, 0x00],
        '+' => [0x00, 0x04, 0x04, 0x1F, 0x04, 0x04, 0x00],
        '/' => [0x00, 0x01, 0x02, 0x04, 0x08, 0x10, 0x00],
        '(' => [0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02],
        ')' => [0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08],
        '%' => [0x18, 0x19, 0x02, 0x04, 0x08, 0x13, 0x03],
        _ => [0; 7],
    }
}

/// Pixel width of `text` rendered at `scale` with one blank column between
/// glyphs.
pub fn text_width(text: &str, scale: usize) -> usize {
    let n = text.chars().count();
    if n == 0 {
        0
    } else {
        (n * (GLYPH_W + 1) - 1) * scale
    }
}

pub fn text_height(scale: usize) -> usize {
    GLYPH_H * scale
}

/// Sets `canvas` pixels covered by `text` whose top-left corner is at
/// `(row, col)`. Glyph pixels falling outside the canvas are dropped.
pub fn stamp_text(canvas: &mut Array2<bool>, text: &str, row: usize, col: usize, scale: usize) {
    let (h, w) = canvas.dim();
    for (i, ch) in text.chars().enumerate() {
        let bits = glyph(ch);
        let left = col + i * (GLYPH_W + 1) * scale;
        for (gy, bits_row) in bits.iter().enumerate() {
            for gx in 0..GLYPH_W {
                if bits_row & (0x10 >> gx) == 0 {
                    continue;
                }
                for dy in 0..scale {
                    for dx in 0..scale {
                        let (r, c) = (row + gy * scale + dy, left + gx * scale + dx);
                        if r < h && c < w {
                            canvas[[r, c]] = true;
                        }
                    }
                }
            }
        }
    }
}

/// `text` centered on a `(rows, cols)` canvas, with its center at the given
/// fraction of the canvas height.
pub fn text_mask(rows: usize, cols: usize, text: &str, scale: usize, center_frac: f64) -> Array2<bool> {
    let mut mask = Array2::from_elem((rows, cols), false);
    let tw = text_width(text, scale);
    let th = text_height(scale);
    let col = cols.saturating_sub(tw) / 2;
    let row = ((rows as f64 * center_frac) - th as f64 / 2.0).max(0.0).round() as usize;
    stamp_text(&mut mask, text, row, col, scale);
    mask
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn glyph_metrics() {
        assert_eq!(text_width("AB", 1), 11);
        assert_eq!(text_width("", 3), 0);
        assert_eq!(text_height(4), 28);
    }

    #[test]
    fn stamping_is_pixel_exact() {
        let mut c = Array2::from_elem((7, 5), false);
        stamp_text(&mut c, "T", 0, 0, 1);
        assert!(c.row(0).iter().all(|&v| v));
        assert_eq!(c.column(2).iter().filter(|&&v| v).count(), 7);
        assert_eq!(c.iter().filter(|&&v| v).count(), 11);
    }

    #[test]
    fn scaled_text_is_clipped() {
        let mut c = Array2::from_elem((10, 10), false);
        stamp_text(&mut c, "W", 5, 5, 3);
        assert!(c.iter().any(|&v| v));
    }

    #[test]
    fn every_alphanumeric_has_ink() {
        for ch in ('A'..='Z').chain('0'..='9') {
            assert!(glyph(ch).iter().any(|&r| r != 0), "{ch}");
        }
        assert!(glyph(' ').iter().all(|&r| r == 0));
    }

    #[test]
    fn mask_is_centered() {
        let m = text_mask(64, 64, "I", 2, 0.5);
        let cols: Vec<usize> = (0..64).filter(|&c| m.column(c).iter().any(|&v| v)).collect();
        let mid = (cols[0] + cols[cols.len() - 1]) as f64 / 2.0;
        assert!((mid - 31.5).abs() <= 2.0);
    }
}

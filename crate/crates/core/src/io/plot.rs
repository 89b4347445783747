//! Minimal line-plot rasterizer writing PNG files.
//!
//! Only numeric tick and legend labels are drawn, with a built-in 3x5 digit
//! font; anything fancier belongs in an external plotting tool fed by the CSV.

use std::path::Path;

use crate::error::{ensure, invalid, Error, Result};

pub type Rgb = [u8; 3];

/// Colors cycled through by successive series.
pub const PALETTE: [Rgb; 6] =
    [[31, 119, 180], [214, 39, 40], [44, 160, 44], [148, 103, 189], [255, 127, 14], [23, 190, 207]];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    /// Drawn in the legend next to the series' color swatch.
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Canvas {
    pub width: usize,
    pub height: usize,
    /// Row-major RGB triples.
    pub pixels: Vec<u8>,
}

impl Canvas {
    pub fn new(width: usize, height: usize, background: Rgb) -> Self {
        Canvas { width, height, pixels: background.repeat(width * height) }
    }

    pub fn get(&self, x: usize, y: usize) -> Rgb {
        let i = 3 * (y * self.width + x);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    fn put(&mut self, x: i64, y: i64, c: Rgb) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            let i = 3 * (y as usize * self.width + x as usize);
            self.pixels[i..i + 3].copy_from_slice(&c);
        }
    }

    pub fn fill_rect(&mut self, x0: i64, y0: i64, w: i64, h: i64, c: Rgb) {
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                self.put(x, y, c);
            }
        }
    }

    /// Bresenham line, `thickness` pixels wide.
    pub fn line(&mut self, (x0, y0): (i64, i64), (x1, y1): (i64, i64), thickness: i64, c: Rgb) {
        let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
        let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
        let (mut x, mut y, mut err) = (x0, y0, dx + dy);
        let lo = -(thickness - 1) / 2;
        loop {
            self.fill_rect(x + lo, y + lo, thickness, thickness, c);
            if x == x1 && y == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x += sx;
            }
            if e2 <= dx {
                err += dx;
                y += sy;
            }
        }
    }

    /// Draws digits, `.` and `-` at `scale` pixels per font pixel; other characters are skipped.
    pub fn text(&mut self, x: i64, y: i64, s: &str, scale: i64, c: Rgb) {
        let mut cx = x;
        for ch in s.chars() {
            if let Some(bits) = glyph(ch) {
                for row in 0..5 {
                    for col in 0..3 {
                        if bits >> (14 - (row * 3 + col)) & 1 == 1 {
                            self.fill_rect(cx + col * scale, y + row * scale, scale, scale, c);
                        }
                    }
                }
            }
            cx += 4 * scale;
        }
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        let mut enc = png::Encoder::new(file, self.width as u32, self.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let fmt = |e: png::EncodingError| Error::Format { what: "png", detail: e.to_string() };
        let mut w = enc.write_header().map_err(fmt)?;
        w.write_image_data(&self.pixels).map_err(fmt)?;
        w.finish().map_err(fmt)
    }
}

/// 3x5 bitmaps, row-major from the top-left bit.
fn glyph(c: char) -> Option<u16> {
    Some(match c {
        '0' => 0b111_101_101_101_111,
        '1' => 0b010_110_010_010_111,
        '2' => 0b111_001_111_100_111,
        '3' => 0b111_001_111_001_111,
        '4' => 0b101_101_111_001_001,
        '5' => 0b111_100_111_001_111,
        '6' => 0b111_100_111_101_111,
        '7' => 0b111_001_010_010_010,
        '8' => 0b111_101_111_101_111,
        '9' => 0b111_101_111_001_111,
        '.' => 0b000_000_000_000_010,
        '-' => 0b000_000_111_000_000,
        _ => return None,
    })
}

const MARGIN_LEFT: i64 = 70;
const MARGIN_RIGHT: i64 = 110;
const MARGIN_Y: i64 = 30;
const BLACK: Rgb = [0, 0, 0];
const GRID: Rgb = [225, 225, 225];

fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let raw = (hi - lo) / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0].iter().map(|m| m * mag).find(|&s| s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Renders each series as a polyline with square markers, with axis ticks
/// and a legend. A series with one point is drawn as a single marker.
pub fn render_line_plot(series: &[Series], width: usize, height: usize) -> Result<Canvas> {
    ensure(series.iter().any(|s| !s.points.is_empty()), || "nothing to plot".into())?;
    ensure(width as i64 > MARGIN_LEFT + MARGIN_RIGHT + 20 && height as i64 > 2 * MARGIN_Y + 20, || {
        format!("plot size {width}x{height} is too small")
    })?;
    let pts = series.iter().flat_map(|s| s.points.iter());
    if pts.clone().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(invalid("plot points must be finite"));
    }
    let (mut x0, mut x1, mut y0, mut y1) = pts
        .fold((f64::MAX, f64::MIN, f64::MAX, f64::MIN), |b, &(x, y)| (b.0.min(x), b.1.max(x), b.2.min(y), b.3.max(y)));
    let pad = |lo: &mut f64, hi: &mut f64| {
        let span = if *hi > *lo { *hi - *lo } else { lo.abs().max(1.0) };
        *lo -= 0.05 * span;
        *hi += 0.05 * span;
    };
    pad(&mut x0, &mut x1);
    pad(&mut y0, &mut y1);

    let mut c = Canvas::new(width, height, [255, 255, 255]);
    let (left, right) = (MARGIN_LEFT, width as i64 - MARGIN_RIGHT);
    let (top, bottom) = (MARGIN_Y, height as i64 - MARGIN_Y);
    let px = |x: f64| left + ((x - x0) / (x1 - x0) * (right - left) as f64).round() as i64;
    let py = |y: f64| bottom - ((y - y0) / (y1 - y0) * (bottom - top) as f64).round() as i64;

    for t in nice_ticks(x0, x1, 8) {
        c.line((px(t), top), (px(t), bottom), 1, GRID);
        c.line((px(t), bottom), (px(t), bottom + 5), 1, BLACK);
        let label = tick_label(t);
        c.text(px(t) - 4 * label.len() as i64, bottom + 9, &label, 2, BLACK);
    }
    for t in nice_ticks(y0, y1, 6) {
        c.line((left, py(t)), (right, py(t)), 1, GRID);
        c.line((left - 5, py(t)), (left, py(t)), 1, BLACK);
        let label = tick_label(t);
        c.text(left - 10 - 8 * label.len() as i64, py(t) - 5, &label, 2, BLACK);
    }
    c.line((left, top), (left, bottom), 1, BLACK);
    c.line((left, bottom), (right, bottom), 1, BLACK);

    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        for w in s.points.windows(2) {
            c.line((px(w[0].0), py(w[0].1)), (px(w[1].0), py(w[1].1)), 2, color);
        }
        for &(x, y) in &s.points {
            c.fill_rect(px(x) - 3, py(y) - 3, 7, 7, color);
        }
        let ly = top + 20 * k as i64;
        c.fill_rect(right + 15, ly, 14, 10, color);
        c.text(right + 35, ly, &s.label, 2, BLACK);
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn colored(c: &Canvas, color: Rgb) -> usize {
        (0..c.height).flat_map(|y| (0..c.width).map(move |x| (x, y))).filter(|&(x, y)| c.get(x, y) == color).count()
    }

    #[test]
    fn one_point_draws_one_marker() {
        let s = Series { label: "1.7".into(), points: vec![(0.5, 0.9)] };
        let c = render_line_plot(&[s], 400, 300).unwrap();
        // marker plus legend swatch
        assert_eq!(colored(&c, PALETTE[0]), 49 + 140);
    }

    #[test]
    fn each_series_gets_its_color() {
        let series: Vec<Series> = (0..3)
            .map(|k| Series { label: format!("{k}"), points: (0..5).map(|i| (i as f64, (i * k) as f64)).collect() })
            .collect();
        let c = render_line_plot(&series, 500, 300).unwrap();
        for color in &PALETTE[..3] {
            assert!(colored(&c, *color) > 140);
        }
        assert_eq!(colored(&c, PALETTE[3]), 0);
    }

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(render_line_plot(&[], 400, 300).is_err());
        let s = Series { label: String::new(), points: vec![(0.0, f64::NAN)] };
        assert!(render_line_plot(&[s], 400, 300).is_err());
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.png");
        let c = render_line_plot(&[Series { label: "0.35".into(), points: vec![(0.0, 0.0), (1.0, 1.0)] }], 300, 200)
            .unwrap();
        c.save_png(&path).unwrap();
        let dec = png::Decoder::new(std::io::BufReader::new(std::fs::File::open(&path).unwrap()));
        let mut reader = dec.read_info().unwrap();
        let mut buf = vec![0; reader.output_buffer_size().unwrap()];
        let info = reader.next_frame(&mut buf).unwrap();
        assert_eq!((info.width, info.height), (300, 200));
        assert_eq!(&buf[..info.buffer_size()], &c.pixels[..]);
    }

    #[test]
    fn ticks_are_round_numbers() {
        let labels: Vec<String> = nice_ticks(0.0, 1.0, 5).into_iter().map(tick_label).collect();
        assert_eq!(labels, ["0", "0.2", "0.4", "0.6", "0.8", "1"]);
        assert_eq!(tick_label(0.35), "0.35");
        assert_eq!(tick_label(2.0), "2");
    }
}

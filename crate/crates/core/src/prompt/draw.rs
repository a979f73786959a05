//! Minimal raster drawing on `RgbImage` with clipping.

use image::{Rgb, RgbImage};

pub const RED: Rgb<u8> = Rgb([255, 0, 0]);
pub const PURPLE: Rgb<u8> = Rgb([128, 0, 128]);
pub const BLUE: Rgb<u8> = Rgb([0, 64, 255]);
pub const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
pub const BLACK: Rgb<u8> = Rgb([0, 0, 0]);
pub const YELLOW: Rgb<u8> = Rgb([255, 200, 0]);
pub const GREEN: Rgb<u8> = Rgb([0, 200, 80]);

/// Converts a linear [0, 1] color to 8-bit.
pub fn to_rgb8(c: [f64; 3]) -> Rgb<u8> {
    Rgb(c.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8))
}

#[inline]
pub fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

pub fn fill_rect(img: &mut RgbImage, x0: i64, y0: i64, w: i64, h: i64, c: Rgb<u8>) {
    for y in y0..y0 + h {
        for x in x0..x0 + w {
            put(img, x, y, c);
        }
    }
}

pub fn fill_disc(img: &mut RgbImage, cx: f64, cy: f64, r: f64, c: Rgb<u8>) {
    let (x0, x1) = ((cx - r).floor() as i64, (cx + r).ceil() as i64);
    let (y0, y1) = ((cy - r).floor() as i64, (cy + r).ceil() as i64);
    for y in y0..=y1 {
        for x in x0..=x1 {
            if (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r {
                put(img, x, y, c);
            }
        }
    }
}

/// Line of the given square thickness between two pixel positions.
pub fn draw_line(img: &mut RgbImage, a: (f64, f64), b: (f64, f64), thickness: i64, c: Rgb<u8>) {
    let steps = ((b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil() as i64).max(1);
    let half = thickness / 2;
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        let x = (a.0 + (b.0 - a.0) * t).round() as i64;
        let y = (a.1 + (b.1 - a.1) * t).round() as i64;
        fill_rect(img, x - half, y - half, thickness, thickness, c);
    }
}

pub fn fill_triangle(img: &mut RgbImage, p: [(f64, f64); 3], c: Rgb<u8>) {
    let xs = p.map(|q| q.0);
    let ys = p.map(|q| q.1);
    let x0 = xs.iter().copied().fold(f64::INFINITY, f64::min).floor() as i64;
    let x1 = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max).ceil() as i64;
    let y0 = ys.iter().copied().fold(f64::INFINITY, f64::min).floor() as i64;
    let y1 = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max).ceil() as i64;
    let edge = |a: (f64, f64), b: (f64, f64), x: f64, y: f64| (b.0 - a.0) * (y - a.1) - (b.1 - a.1) * (x - a.0);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (fx, fy) = (x as f64, y as f64);
            let e0 = edge(p[0], p[1], fx, fy);
            let e1 = edge(p[1], p[2], fx, fy);
            let e2 = edge(p[2], p[0], fx, fy);
            if (e0 >= 0.0 && e1 >= 0.0 && e2 >= 0.0) || (e0 <= 0.0 && e1 <= 0.0 && e2 <= 0.0) {
                put(img, x, y, c);
            }
        }
    }
}

const DIGITS: [[u8; 5]; 10] = [
    [0b111, 0b101, 0b101, 0b101, 0b111],
    [0b010, 0b110, 0b010, 0b010, 0b111],
    [0b111, 0b001, 0b111, 0b100, 0b111],
    [0b111, 0b001, 0b111, 0b001, 0b111],
    [0b101, 0b101, 0b111, 0b001, 0b001],
    [0b111, 0b100, 0b111, 0b001, 0b111],
    [0b111, 0b100, 0b111, 0b101, 0b111],
    [0b111, 0b001, 0b001, 0b001, 0b001],
    [0b111, 0b101, 0b111, 0b101, 0b111],
    [0b111, 0b101, 0b111, 0b001, 0b111],
];

/// Pixel size of `n` drawn with [`draw_number`].
pub fn number_size(n: usize, scale: i64) -> (i64, i64) {
    let len = n.to_string().len() as i64;
    (len * 4 * scale - scale, 5 * scale)
}

/// Draws the decimal digits of `n` with a 3x5 font; `(x, y)` is the top-left.
pub fn draw_number(img: &mut RgbImage, n: usize, x: i64, y: i64, scale: i64, c: Rgb<u8>) {
    for (i, ch) in n.to_string().bytes().enumerate() {
        let glyph = DIGITS[(ch - b'0') as usize];
        let gx = x + i as i64 * 4 * scale;
        for (row, bits) in glyph.iter().enumerate() {
            for col in 0..3 {
                if bits & (0b100 >> col) != 0 {
                    fill_rect(img, gx + col * scale, y + row as i64 * scale, scale, scale, c);
                }
            }
        }
    }
}

/// Number on a filled background box with a one-scale margin.
pub fn draw_label(img: &mut RgbImage, n: usize, x: i64, y: i64, scale: i64, fg: Rgb<u8>, bg: Rgb<u8>) {
    let (w, h) = number_size(n, scale);
    fill_rect(img, x, y, w + 2 * scale, h + 2 * scale, bg);
    draw_number(img, n, x + scale, y + scale, scale, fg);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disc_is_clipped_and_round() {
        let mut img = RgbImage::new(10, 10);
        fill_disc(&mut img, 0.0, 0.0, 2.0, RED);
        let n = img.pixels().filter(|p| **p == RED).count();
        // quarter of the 13-pixel radius-2 disc, axes included
        assert_eq!(n, 6);
    }

    #[test]
    fn number_glyphs_differ() {
        let mut a = RgbImage::new(20, 10);
        let mut b = RgbImage::new(20, 10);
        draw_number(&mut a, 12, 0, 0, 1, WHITE);
        draw_number(&mut b, 17, 0, 0, 1, WHITE);
        assert_ne!(a, b);
        assert_eq!(number_size(12, 2), (14, 10));
    }

    #[test]
    fn triangle_covers_centroid() {
        let mut img = RgbImage::new(20, 20);
        fill_triangle(&mut img, [(2.0, 2.0), (17.0, 4.0), (8.0, 16.0)], PURPLE);
        assert_eq!(*img.get_pixel(9, 7), PURPLE);
        assert_eq!(*img.get_pixel(0, 19), BLACK);
    }
}

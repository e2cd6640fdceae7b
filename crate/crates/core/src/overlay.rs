//! Side-by-side match visualisation: frame A left, frame B right, one line per
//! match between patch centers, and the match count stamped top-left.

use image::{GrayImage, Rgb, RgbImage};
use imageproc::drawing::draw_line_segment_mut;

use crate::pipeline::MatchFile;

/// 5x7 digit glyphs, one row per byte, bit 4 is the leftmost column.
const DIGITS: [[u8; 7]; 10] = [
    [0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110],
    [0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110],
    [0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111],
    [0b11111, 0b00010, 0b00100, 0b00010, 0b00001, 0b10001, 0b01110],
    [0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010],
    [0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110],
    [0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110],
    [0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000],
    [0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110],
    [0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100],
];

pub const STAMP_COLOR: Rgb<u8> = Rgb([255, 255, 0]);
const STAMP_BACKDROP: Rgb<u8> = Rgb([0, 0, 0]);
const STAMP_SCALE: u32 = 3;
const STAMP_MARGIN: u32 = 4;

const LINE_COLORS: [Rgb<u8>; 6] = [
    Rgb([255, 64, 64]),
    Rgb([64, 255, 64]),
    Rgb([64, 160, 255]),
    Rgb([255, 64, 255]),
    Rgb([64, 255, 255]),
    Rgb([255, 160, 32]),
];

fn glyph_advance() -> u32 {
    6 * STAMP_SCALE
}

/// Writes `text` (digits only) in the bitmap font with a dark backdrop.
pub fn stamp_number(img: &mut RgbImage, text: &str) {
    let (x0, y0, s) = (STAMP_MARGIN, STAMP_MARGIN, STAMP_SCALE);
    let box_w = (text.len() as u32 * glyph_advance() + 2 * s).min(img.width().saturating_sub(x0 - s));
    let box_h = (9 * s).min(img.height().saturating_sub(y0 - s));
    for y in (y0 - s)..(y0 - s + box_h) {
        for x in (x0 - s)..(x0 - s + box_w) {
            img.put_pixel(x, y, STAMP_BACKDROP);
        }
    }
    for (k, ch) in text.chars().enumerate() {
        let Some(d) = ch.to_digit(10) else { continue };
        let gx = x0 + k as u32 * glyph_advance();
        for (row, bits) in DIGITS[d as usize].iter().enumerate() {
            for col in 0..5u32 {
                if bits >> (4 - col) & 1 == 0 {
                    continue;
                }
                for dy in 0..s {
                    for dx in 0..s {
                        let (x, y) = (gx + col * s + dx, y0 + row as u32 * s + dy);
                        if x < img.width() && y < img.height() {
                            img.put_pixel(x, y, STAMP_COLOR);
                        }
                    }
                }
            }
        }
    }
}

/// Reads back a number written by [`stamp_number`].
pub fn read_stamp(img: &RgbImage) -> Option<String> {
    let (x0, y0, s) = (STAMP_MARGIN, STAMP_MARGIN, STAMP_SCALE);
    let mut out = String::new();
    for k in 0.. {
        let gx = x0 + k * glyph_advance();
        if gx + 5 * s > img.width() || y0 + 7 * s > img.height() {
            break;
        }
        let cell = |row: u32, col: u32| *img.get_pixel(gx + col * s + s / 2, y0 + row * s + s / 2) == STAMP_COLOR;
        let pattern: [u8; 7] =
            std::array::from_fn(|row| (0..5).fold(0u8, |acc, col| acc << 1 | cell(row as u32, col) as u8));
        match DIGITS.iter().position(|g| *g == pattern) {
            Some(d) => out.push(char::from_digit(d as u32, 10).expect("single digit")),
            None => break,
        }
    }
    (!out.is_empty()).then_some(out)
}

/// Composes the overlay. Line endpoints are the `a_px`/`b_px` centers, with
/// B shifted right by frame A's width.
pub fn render_overlay(frame_a: &GrayImage, frame_b: &GrayImage, matches: &MatchFile) -> RgbImage {
    let (wa, ha) = frame_a.dimensions();
    let (wb, hb) = frame_b.dimensions();
    let mut img = RgbImage::new(wa + wb, ha.max(hb));
    for (x, y, p) in frame_a.enumerate_pixels() {
        img.put_pixel(x, y, Rgb([p.0[0]; 3]));
    }
    for (x, y, p) in frame_b.enumerate_pixels() {
        img.put_pixel(x + wa, y, Rgb([p.0[0]; 3]));
    }
    for (i, m) in matches.matches.iter().enumerate() {
        let start = (m.a_px[0] as f32, m.a_px[1] as f32);
        let end = (m.b_px[0] as f32 + wa as f32, m.b_px[1] as f32);
        draw_line_segment_mut(&mut img, start, end, LINE_COLORS[i % LINE_COLORS.len()]);
    }
    stamp_number(&mut img, &matches.matches.len().to_string());
    img
}

//! Deterministic synthetic digit corpus.
//!
//! A desk-scale stand-in used when no MNIST files are available: ten
//! seven-segment-style glyph classes rendered with per-sample translation,
//! scale and intensity jitter plus background noise. Generation is a pure
//! function of (seed, index), so corpora are reproducible and exportable to
//! IDX via [`super::idx`].

use rand::Rng;

use super::{DatasetKind, LabeledDataset};
use crate::error::Result;
use crate::pgm::GrayImage;
use crate::rng::{chacha, per_index_seed};

/// Segment masks per digit, bits ABCDEFG (A = bit 6 .. G = bit 0).
const DIGIT_SEGMENTS: [u8; 10] = [
    0b1111110, // 0: ABCDEF
    0b0110000, // 1: BC
    0b1101101, // 2: ABDEG
    0b1111001, // 3: ABCDG
    0b0110011, // 4: BCFG
    0b1011011, // 5: ACDFG
    0b1011111, // 6: ACDEFG
    0b1110000, // 7: ABC
    0b1111111, // 8
    0b1111011, // 9: ABCDFG
];

/// Segment endpoints in unit coordinates (x right, y down).
const SEGMENTS: [[f64; 4]; 7] = [
    [0.15, 0.08, 0.85, 0.08], // A top
    [0.85, 0.08, 0.85, 0.50], // B top-right
    [0.85, 0.50, 0.85, 0.92], // C bottom-right
    [0.15, 0.92, 0.85, 0.92], // D bottom
    [0.15, 0.50, 0.15, 0.92], // E bottom-left
    [0.15, 0.08, 0.15, 0.50], // F top-left
    [0.15, 0.50, 0.85, 0.50], // G middle
];

fn dist_to_segment(px: f64, py: f64, seg: &[f64; 4]) -> f64 {
    let (x1, y1, x2, y2) = (seg[0], seg[1], seg[2], seg[3]);
    let (dx, dy) = (x2 - x1, y2 - y1);
    let len2 = dx * dx + dy * dy;
    let t = (((px - x1) * dx + (py - y1) * dy) / len2).clamp(0.0, 1.0);
    let (cx, cy) = (x1 + t * dx, y1 + t * dy);
    ((px - cx).powi(2) + (py - cy).powi(2)).sqrt()
}

/// Render one digit glyph into a `size`x`size` boolean patch.
fn render_glyph(digit: usize, size: usize) -> Vec<bool> {
    let mask = DIGIT_SEGMENTS[digit];
    let thickness = 0.11;
    let mut out = vec![false; size * size];
    for y in 0..size {
        for x in 0..size {
            let px = (x as f64 + 0.5) / size as f64;
            let py = (y as f64 + 0.5) / size as f64;
            for (s, seg) in SEGMENTS.iter().enumerate() {
                if mask & (1 << (6 - s)) != 0 && dist_to_segment(px, py, seg) < thickness {
                    out[y * size + x] = true;
                    break;
                }
            }
        }
    }
    out
}

/// Generate `n` labeled 28x28 samples; labels cycle through the ten classes.
pub fn generate(n: usize, seed: u64) -> Result<LabeledDataset> {
    const H: usize = 28;
    const W: usize = 28;
    let mut images = vec![0u8; n * H * W];
    let mut labels = vec![0u8; n];
    for i in 0..n {
        let mut rng = chacha(per_index_seed(seed, i as u64));
        let digit = i % 10;
        labels[i] = digit as u8;
        let img = &mut images[i * H * W..(i + 1) * H * W];

        // Faint background dither; kept small so backgrounds stay near-black
        // like scanned-digit data.
        for p in img.iter_mut() {
            *p = rng.random_range(0..=6);
        }

        let size = rng.random_range(16..=22usize);
        let glyph = render_glyph(digit, size);
        let max_off_x = W - size;
        let max_off_y = H - size;
        let ox = rng.random_range(0..=max_off_x);
        let oy = rng.random_range(0..=max_off_y);
        let fg: u8 = rng.random_range(170..=255);
        for y in 0..size {
            for x in 0..size {
                if glyph[y * size + x] {
                    // Slight per-pixel intensity jitter on the stroke.
                    let jitter: i16 = rng.random_range(-20..=20);
                    let v = (i16::from(fg) + jitter).clamp(0, 255) as u8;
                    img[(oy + y) * W + ox + x] = v;
                }
            }
        }
    }
    let mut ds = LabeledDataset::new(images, labels, [1, H, W], DatasetKind::Clean)?;
    ds.build_seed = seed;
    Ok(ds)
}

/// A procedural copyright mark (ring plus diagonal bar), used as the default
/// copyright image in tests and generated fixtures.
pub fn copyright_image(size: usize) -> GrayImage {
    let mut pixels = vec![0u8; size * size];
    let c = (size as f64 - 1.0) / 2.0;
    let r_outer = 0.45 * size as f64;
    let r_inner = 0.33 * size as f64;
    for y in 0..size {
        for x in 0..size {
            let dx = x as f64 - c;
            let dy = y as f64 - c;
            let r = (dx * dx + dy * dy).sqrt();
            let on_ring = r <= r_outer && r >= r_inner;
            let on_bar = (dx + dy).abs() < 0.08 * size as f64 && r < r_outer;
            pixels[y * size + x] = if on_ring || on_bar { 230 } else { 25 };
        }
    }
    GrayImage {
        width: size,
        height: size,
        pixels,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let a = generate(50, 3).unwrap();
        let b = generate(50, 3).unwrap();
        assert_eq!(a, b);
        let c = generate(50, 4).unwrap();
        assert_ne!(a.images, c.images);
    }

    #[test]
    fn labels_cover_all_classes() {
        let ds = generate(100, 1).unwrap();
        assert_eq!(ds.num_classes(), 10);
        let mut hist = [0usize; 10];
        for &l in &ds.labels {
            hist[l as usize] += 1;
        }
        assert!(hist.iter().all(|&c| c == 10));
    }

    #[test]
    fn glyphs_are_pairwise_distinct() {
        let rendered: Vec<Vec<bool>> = (0..10).map(|d| render_glyph(d, 20)).collect();
        for i in 0..10 {
            for j in (i + 1)..10 {
                assert_ne!(rendered[i], rendered[j], "digits {i} and {j} render equal");
            }
        }
    }

    #[test]
    fn copyright_mark_has_contrast() {
        let img = copyright_image(64);
        assert!(img.pixels.iter().any(|&p| p > 200));
        assert!(img.pixels.iter().any(|&p| p < 50));
    }
}

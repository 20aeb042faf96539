//! Binary PGM (P5) images, used for the copyright image input.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{IsnnError, Result};

/// 8-bit grayscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width * height != pixels.len() {
            return Err(IsnnError::Format {
                what: "gray image",
                detail: format!("{}x{} but {} pixels", width, height, pixels.len()),
            });
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    /// Nearest-neighbor resize.
    pub fn resize_nearest(&self, width: usize, height: usize) -> GrayImage {
        let mut pixels = vec![0u8; width * height];
        for y in 0..height {
            let sy = y * self.height / height;
            for x in 0..width {
                let sx = x * self.width / width;
                pixels[y * width + x] = self.pixels[sy * self.width + sx];
            }
        }
        GrayImage {
            width,
            height,
            pixels,
        }
    }
}

fn parse_token<'a>(data: &'a [u8], pos: &mut usize, what: &'static str) -> Result<&'a [u8]> {
    // Skip whitespace and '#' comments.
    loop {
        while *pos < data.len() && data[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < data.len() && data[*pos] == b'#' {
            while *pos < data.len() && data[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            break;
        }
    }
    let start = *pos;
    while *pos < data.len() && !data[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(IsnnError::Format {
            what: "pgm",
            detail: format!("missing {what}"),
        });
    }
    Ok(&data[start..*pos])
}

fn parse_usize(data: &[u8], pos: &mut usize, what: &'static str) -> Result<usize> {
    let tok = parse_token(data, pos, what)?;
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or(IsnnError::Format {
            what: "pgm",
            detail: format!("bad {what}"),
        })
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    let data = fs::read(path).map_err(|e| IsnnError::io(path.display().to_string(), e))?;
    let mut pos = 0;
    let magic = parse_token(&data, &mut pos, "magic")?;
    if magic != b"P5" {
        return Err(IsnnError::Format {
            what: "pgm",
            detail: "not a P5 file".into(),
        });
    }
    let width = parse_usize(&data, &mut pos, "width")?;
    let height = parse_usize(&data, &mut pos, "height")?;
    let maxval = parse_usize(&data, &mut pos, "maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(IsnnError::Format {
            what: "pgm",
            detail: format!("unsupported maxval {maxval}"),
        });
    }
    pos += 1; // single whitespace after maxval
    let need = width * height;
    if data.len() < pos + need {
        return Err(IsnnError::Format {
            what: "pgm",
            detail: format!("expected {} pixel bytes, got {}", need, data.len() - pos),
        });
    }
    GrayImage::new(width, height, data[pos..pos + need].to_vec())
}

pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<()> {
    let mut out = Vec::with_capacity(img.pixels.len() + 32);
    write!(out, "P5\n{} {}\n255\n", img.width, img.height).expect("vec write");
    out.extend_from_slice(&img.pixels);
    fs::write(path, out).map_err(|e| IsnnError::io(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.pgm");
        let img = GrayImage::new(3, 2, vec![0, 64, 128, 192, 255, 7]).unwrap();
        write_pgm(&p, &img).unwrap();
        assert_eq!(read_pgm(&p).unwrap(), img);
    }

    #[test]
    fn comments_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.pgm");
        std::fs::write(&p, b"P5\n# a comment\n2 1\n255\n\x01\x02").unwrap();
        let img = read_pgm(&p).unwrap();
        assert_eq!(img.pixels, vec![1, 2]);
    }

    #[test]
    fn truncated_pixels_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.pgm");
        std::fs::write(&p, b"P5\n4 4\n255\n\x01\x02").unwrap();
        assert!(read_pgm(&p).is_err());
    }

    #[test]
    fn nearest_resize_picks_exact_source_pixels() {
        let img = GrayImage::new(2, 2, vec![10, 20, 30, 40]).unwrap();
        let up = img.resize_nearest(4, 4);
        assert_eq!(up.pixels[0], 10);
        assert_eq!(up.pixels[3], 20);
        assert_eq!(up.pixels[15], 40);
    }
}

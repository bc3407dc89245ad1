//! Binary PGM (P5) and PPM (P6) with 8-bit samples.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::tensor::{Shape, Tensor};

#[derive(Debug, Error)]
pub enum PnmError {
    #[error("{0}")]
    Io(#[from] io::Error),
    #[error("unsupported magic {0:?}; expected P5 or P6")]
    Magic(String),
    #[error("malformed header: {0}")]
    Header(String),
    #[error("maxval {0} unsupported; only 1..=255")]
    Maxval(u32),
    #[error("pixel data truncated: expected {expected} bytes, got {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("cannot write {0} channels; PNM holds 1 or 3")]
    Channels(usize),
}

struct Header<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Header<'_> {
    fn skip_space(&mut self) {
        while self.at < self.bytes.len() {
            match self.bytes[self.at] {
                b'#' => {
                    while self.at < self.bytes.len() && self.bytes[self.at] != b'\n' {
                        self.at += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.at += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self, what: &str) -> Result<&str, PnmError> {
        self.skip_space();
        let start = self.at;
        while self.at < self.bytes.len() && !self.bytes[self.at].is_ascii_whitespace() {
            self.at += 1;
        }
        if start == self.at {
            return Err(PnmError::Header(format!("missing {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.at])
            .map_err(|_| PnmError::Header(format!("non-ASCII {what}")))
    }

    fn number(&mut self, what: &str) -> Result<u32, PnmError> {
        let tok = self.token(what)?;
        tok.parse().map_err(|_| PnmError::Header(format!("bad {what} {tok:?}")))
    }
}

/// Parses a P5/P6 image into a `C x H x W` tensor scaled to `[0, 1]`.
pub fn decode_pnm(bytes: &[u8]) -> Result<Tensor, PnmError> {
    let mut h = Header { bytes, at: 0 };
    let channels = match h.token("magic")? {
        "P5" => 1,
        "P6" => 3,
        other => return Err(PnmError::Magic(other.to_string())),
    };
    let width = h.number("width")? as usize;
    let height = h.number("height")? as usize;
    let maxval = h.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(PnmError::Header(format!("empty image {width}x{height}")));
    }
    if !(1..=255).contains(&maxval) {
        return Err(PnmError::Maxval(maxval));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if h.at >= bytes.len() || !bytes[h.at].is_ascii_whitespace() {
        return Err(PnmError::Header("missing raster separator".into()));
    }
    let raster = &bytes[h.at + 1..];
    let expected = width * height * channels;
    if raster.len() < expected {
        return Err(PnmError::Truncated { expected, actual: raster.len() });
    }
    let scale = f64::from(maxval);
    let mut t = Tensor::zeros(Shape::new(channels, height, width));
    for (i, px) in raster[..expected].chunks_exact(channels).enumerate() {
        for (c, &v) in px.iter().enumerate() {
            t.set(c, i / width, i % width, f64::from(v) / scale);
        }
    }
    Ok(t)
}

/// Quantises to 8 bits (clamping to `[0, 1]`) and encodes as P5 or P6.
pub fn encode_pnm(t: &Tensor) -> Result<Vec<u8>, PnmError> {
    let Shape { channels, height, width } = t.shape();
    let magic = match channels {
        1 => "P5",
        3 => "P6",
        c => return Err(PnmError::Channels(c)),
    };
    let mut out = format!("{magic}\n{width} {height}\n255\n").into_bytes();
    out.reserve(t.len());
    for y in 0..height {
        for x in 0..width {
            for c in 0..channels {
                out.push((t.get(c, y, x).clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
    }
    Ok(out)
}

pub fn load_image(path: impl AsRef<Path>) -> Result<Tensor, PnmError> {
    decode_pnm(&fs::read(path)?)
}

pub fn save_image(path: impl AsRef<Path>, t: &Tensor) -> Result<(), PnmError> {
    fs::write(path, encode_pnm(t)?)?;
    Ok(())
}

/// Min-max normalises one plane to `[0, 1]`; a constant plane becomes mid-gray.
pub fn normalize_plane(plane: &[f64], height: usize, width: usize) -> Tensor {
    let (lo, hi) = plane.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    let data = if hi > lo {
        plane.iter().map(|v| (v - lo) / (hi - lo)).collect()
    } else {
        vec![0.5; plane.len()]
    };
    Tensor::from_vec(Shape::new(1, height, width), data).expect("plane matches its dimensions")
}

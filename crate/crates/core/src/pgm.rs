//! 16-bit binary portable graymap (`P5`) files.
//!
//! Gray maps use maxval 65535 with each value `v` stored as
//! `round(v * 65535)`; bit maps use maxval 1. Samples are big-endian `u16`
//! even when maxval fits in a byte, so every file produced here has a fixed
//! two bytes per pixel.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{BitMap, GrayMap};

const GRAY_MAX: u16 = u16::MAX;

fn encode(height: usize, width: usize, maxval: u16, samples: impl Iterator<Item = u16>) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n{maxval}\n").into_bytes();
    out.reserve(height * width * 2);
    for s in samples {
        out.extend_from_slice(&s.to_be_bytes());
    }
    out
}

pub fn encode_graymap(map: &GrayMap) -> Vec<u8> {
    encode(
        map.height(),
        map.width(),
        GRAY_MAX,
        map.values()
            .iter()
            .map(|v| (v * f64::from(GRAY_MAX)).round() as u16),
    )
}

pub fn encode_bitmap(map: &BitMap) -> Vec<u8> {
    encode(
        map.height(),
        map.width(),
        1,
        map.bits().iter().map(|&b| u16::from(b)),
    )
}

struct Raster {
    height: usize,
    width: usize,
    maxval: u16,
    samples: Vec<u16>,
}

fn header_token(data: &[u8], pos: &mut usize) -> std::result::Result<usize, String> {
    loop {
        match data.get(*pos) {
            Some(b'#') => {
                while data.get(*pos).is_some_and(|&b| b != b'\n') {
                    *pos += 1;
                }
            }
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
            None => return Err("truncated header".into()),
        }
    }
    let start = *pos;
    while data.get(*pos).is_some_and(u8::is_ascii_digit) {
        *pos += 1;
    }
    std::str::from_utf8(&data[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| format!("bad header field at byte {start}"))
}

fn decode(data: &[u8]) -> std::result::Result<Raster, String> {
    if !data.starts_with(b"P5") {
        return Err("missing P5 magic".into());
    }
    let mut pos = 2;
    let width = header_token(data, &mut pos)?;
    let height = header_token(data, &mut pos)?;
    let maxval = header_token(data, &mut pos)?;
    if width == 0 || height == 0 {
        return Err(format!("empty raster {width}x{height}"));
    }
    if maxval == 0 || maxval > usize::from(u16::MAX) {
        return Err(format!("unsupported maxval {maxval}"));
    }
    if !data.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err("missing whitespace after maxval".into());
    }
    pos += 1;
    let n = width
        .checked_mul(height)
        .ok_or_else(|| "raster too large".to_string())?;
    let body = &data[pos..];
    let bytes_per = if maxval < 256 && body.len() == n { 1 } else { 2 };
    if body.len() != n * bytes_per {
        return Err(format!(
            "expected {} bytes of samples, found {}",
            n * 2,
            body.len()
        ));
    }
    let samples: Vec<u16> = if bytes_per == 1 {
        body.iter().map(|&b| u16::from(b)).collect()
    } else {
        body.chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    };
    let maxval = maxval as u16;
    if let Some(s) = samples.iter().find(|&&s| s > maxval) {
        return Err(format!("sample {s} exceeds maxval {maxval}"));
    }
    Ok(Raster {
        height,
        width,
        maxval,
        samples,
    })
}

/// Decodes a graymap, scaling samples by `1 / maxval`.
pub fn decode_graymap(data: &[u8]) -> std::result::Result<GrayMap, String> {
    let r = decode(data)?;
    let scale = f64::from(r.maxval);
    let values = r.samples.iter().map(|&s| f64::from(s) / scale).collect();
    GrayMap::from_values(r.height, r.width, values).map_err(|e| e.to_string())
}

/// Decodes a binary map; any nonzero sample is set.
pub fn decode_bitmap(data: &[u8]) -> std::result::Result<BitMap, String> {
    let r = decode(data)?;
    let bits = r.samples.iter().map(|&s| s > 0).collect();
    BitMap::from_bits(r.height, r.width, bits).map_err(|e| e.to_string())
}

pub fn write_graymap(path: &Path, map: &GrayMap) -> Result<()> {
    fs::write(path, encode_graymap(map)).map_err(|e| Error::io(path, e))
}

pub fn write_bitmap(path: &Path, map: &BitMap) -> Result<()> {
    fs::write(path, encode_bitmap(map)).map_err(|e| Error::io(path, e))
}

pub fn read_graymap(path: &Path) -> Result<GrayMap> {
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_graymap(&data).map_err(|message| Error::Graymap {
        path: path.to_path_buf(),
        message,
    })
}

pub fn read_bitmap(path: &Path) -> Result<BitMap> {
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_bitmap(&data).map_err(|message| Error::Graymap {
        path: path.to_path_buf(),
        message,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graymap_layout() {
        let g = GrayMap::from_values(1, 2, vec![0.7, 1.0]).unwrap();
        let bytes = encode_graymap(&g);
        let header = b"P5\n2 1\n65535\n";
        assert_eq!(&bytes[..header.len()], header);
        // round(0.7 * 65535) = 45875 = 0xB333
        assert_eq!(&bytes[header.len()..], &[0xB3, 0x33, 0xFF, 0xFF]);
        let back = decode_graymap(&bytes).unwrap();
        assert!((back.get(0, 0) - 0.7).abs() < 1.0 / 65535.0);
        assert_eq!(back.get(0, 1), 1.0);
    }

    #[test]
    fn bitmap_round_trip() {
        let b = BitMap::from_points(2, 3, [(0, 1), (1, 2)]).unwrap();
        let bytes = encode_bitmap(&b);
        assert!(bytes.starts_with(b"P5\n3 2\n1\n"));
        assert_eq!(decode_bitmap(&bytes).unwrap(), b);
    }

    #[test]
    fn rejects_corrupt_files() {
        assert!(decode_graymap(b"P6\n1 1\n255\n\0").is_err());
        assert!(decode_graymap(b"P5\n2 2\n65535\n\0\0").is_err());
        assert!(decode_graymap(b"P5\n1 1\n1\n\0\x05").is_err());
        assert!(decode_graymap(b"P5\n1").is_err());
        assert!(decode_graymap(b"P5 # comment\n1 1\n255\n\x80").is_ok());
    }
}

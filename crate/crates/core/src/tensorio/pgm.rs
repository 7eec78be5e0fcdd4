//! Binary PGM (`P5`, maxval 255) for groundtruth masks and exported maps.

use std::path::Path;

use super::{ActivationMap, BinaryMask, TensorError};

/// Bytes strictly above this are foreground.
pub const FOREGROUND_CUTOFF: u8 = 127;

/// Quantizes a map value with round-half-up, so `0.5` becomes `128`.
pub fn quantize(v: f64) -> u8 {
    (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

struct Header {
    width: usize,
    height: usize,
    payload_start: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header, TensorError> {
    let bad = |msg: &str| TensorError::MalformedPgm(msg.to_string());
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(bad("missing P5 magic"));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments before each field
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while let Some(&b) = bytes.get(pos) {
                        pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                Some(_) => break,
                None => return Err(bad("header ends early")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        if start == pos {
            return Err(bad("expected a decimal number"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("number out of range"))?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(bad("missing whitespace after maxval")),
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(TensorError::MalformedPgm(format!(
            "maxval must be 255, found {maxval}"
        )));
    }
    if width == 0 || height == 0 {
        return Err(bad("zero extent"));
    }
    Ok(Header {
        width,
        height,
        payload_start: pos,
    })
}

pub fn decode_mask_pgm(bytes: &[u8]) -> Result<BinaryMask, TensorError> {
    let header = parse_header(bytes)?;
    let expected = header.width * header.height;
    let payload = &bytes[header.payload_start..];
    if payload.len() < expected {
        return Err(TensorError::TruncatedPgm {
            expected,
            found: payload.len(),
        });
    }
    let bits = payload[..expected]
        .iter()
        .map(|&b| b > FOREGROUND_CUTOFF)
        .collect();
    BinaryMask::new(header.height, header.width, bits)
}

fn encode_pgm(height: usize, width: usize, pixels: impl Iterator<Item = u8>) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(pixels);
    out
}

pub fn encode_map_pgm(m: &ActivationMap) -> Vec<u8> {
    encode_pgm(m.height(), m.width(), m.values().iter().map(|&v| quantize(v)))
}

pub fn encode_mask_pgm(m: &BinaryMask) -> Vec<u8> {
    encode_pgm(
        m.height(),
        m.width(),
        m.bits().iter().map(|&b| if b { 255 } else { 0 }),
    )
}

pub fn read_mask_pgm(path: impl AsRef<Path>) -> Result<BinaryMask, TensorError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| TensorError::io(path, e))?;
    decode_mask_pgm(&bytes).map_err(|e| e.in_file(path))
}

pub fn write_map_pgm(m: &ActivationMap, path: impl AsRef<Path>) -> Result<(), TensorError> {
    let path = path.as_ref();
    std::fs::write(path, encode_map_pgm(m)).map_err(|e| TensorError::io(path, e))
}

pub fn write_mask_pgm(m: &BinaryMask, path: impl AsRef<Path>) -> Result<(), TensorError> {
    let path = path.as_ref();
    std::fs::write(path, encode_mask_pgm(m)).map_err(|e| TensorError::io(path, e))
}

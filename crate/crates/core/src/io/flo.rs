//! Middlebury `.flo`: little-endian tag `PIEH` (202021.25 as `f32`), `i32`
//! width and height, then interleaved `f32` pairs in row-major order.

use std::path::Path;

use crate::error::{Error, Result};
use crate::field::{FlowField, ScalarField};

pub const FLO_MAGIC: f32 = 202021.25;
pub const FLO_TAG: [u8; 4] = *b"PIEH";
const HEADER_LEN: usize = 12;

/// Serializes the flow. Values are rounded to `f32`.
pub fn encode_flo(flow: &FlowField) -> Vec<u8> {
    let (w, h) = flow.dims();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * w * h);
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(w as i32).to_le_bytes());
    out.extend_from_slice(&(h as i32).to_le_bytes());
    for (a, b) in flow.u1().as_slice().iter().zip(flow.u2().as_slice()) {
        out.extend_from_slice(&(*a as f32).to_le_bytes());
        out.extend_from_slice(&(*b as f32).to_le_bytes());
    }
    out
}

/// Parses `.flo` bytes; `path` is used for error messages only.
pub fn decode_flo(bytes: &[u8], path: &Path) -> Result<FlowField> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(
            path,
            format!("short file: {} bytes", bytes.len()),
        ));
    }
    let word = |i: usize| -> [u8; 4] { bytes[i..i + 4].try_into().expect("4-byte slice") };
    let tag = word(0);
    if f32::from_le_bytes(tag) != FLO_MAGIC {
        return Err(Error::format(
            path,
            format!(
                "bad magic tag {:?} (expected \"PIEH\")",
                String::from_utf8_lossy(&tag)
            ),
        ));
    }
    let w = i32::from_le_bytes(word(4));
    let h = i32::from_le_bytes(word(8));
    if w <= 0 || h <= 0 {
        return Err(Error::format(path, format!("invalid dimensions {w}x{h}")));
    }
    let (w, h) = (w as usize, h as usize);
    let expected = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::format(path, format!("dimensions {w}x{h} overflow")))?;
    if bytes.len() < expected {
        return Err(Error::format(
            path,
            format!(
                "short file: {} bytes, {w}x{h} needs {expected}",
                bytes.len()
            ),
        ));
    }
    let mut u1 = Vec::with_capacity(w * h);
    let mut u2 = Vec::with_capacity(w * h);
    for i in 0..w * h {
        let a = f32::from_le_bytes(word(HEADER_LEN + 8 * i)) as f64;
        let b = f32::from_le_bytes(word(HEADER_LEN + 8 * i + 4)) as f64;
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::format(path, format!("non-finite flow at pixel {i}")));
        }
        u1.push(a);
        u2.push(b);
    }
    FlowField::new(ScalarField::new(w, h, u1)?, ScalarField::new(w, h, u2)?)
}

pub fn read_flo(path: impl AsRef<Path>) -> Result<FlowField> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_flo(&bytes, path)
}

pub fn write_flo(path: impl AsRef<Path>, flow: &FlowField) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_flo(flow)).map_err(|e| Error::io(path, e))
}

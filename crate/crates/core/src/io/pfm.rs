//! Grayscale PFM (`Pf`) depth maps. Rows are stored bottom-to-top as in the
//! original format; a negative scale marks little-endian samples.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Encode a row-major (top-to-bottom) map as little-endian PFM bytes.
pub fn encode_pfm(width: usize, height: usize, values: &[f64]) -> Vec<u8> {
    assert_eq!(values.len(), width * height, "pfm payload size");
    let header = format!("Pf\n{width} {height}\n-1.0\n");
    let mut out = Vec::with_capacity(header.len() + 4 * values.len());
    out.extend_from_slice(header.as_bytes());
    for row in (0..height).rev() {
        for v in &values[row * width..(row + 1) * width] {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_pfm(bytes: &[u8], path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let bad = |message: String| Error::Format {
        kind: "PFM",
        path: path.to_path_buf(),
        message,
    };
    // three whitespace-terminated header lines
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header".into()));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ASCII header".into()))?);
    }
    // exactly one whitespace byte separates the scale from the payload
    pos += 1;
    match fields[0] {
        "Pf" => {}
        "PF" => return Err(bad("colour PFM is not a depth map".into())),
        other => return Err(bad(format!("bad magic {other:?}"))),
    }
    let width: usize = fields[1].parse().map_err(|_| bad(format!("bad width {:?}", fields[1])))?;
    let height: usize = fields[2].parse().map_err(|_| bad(format!("bad height {:?}", fields[2])))?;
    let scale: f64 = fields[3].parse().map_err(|_| bad(format!("bad scale {:?}", fields[3])))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(bad("scale must be non-zero".into()));
    }
    let little = scale < 0.0;
    let n = width * height;
    let payload = bytes.get(pos..).unwrap_or(&[]);
    if payload.len() != 4 * n {
        return Err(bad(format!("expected {} payload bytes, found {}", 4 * n, payload.len())));
    }
    let mut values = vec![0.0; n];
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        let (row_from_bottom, col) = (i / width, i % width);
        values[(height - 1 - row_from_bottom) * width + col] = v as f64;
    }
    Ok((width, height, values))
}

pub fn write_pfm(path: &Path, width: usize, height: usize, values: &[f64]) -> Result<()> {
    fs::write(path, encode_pfm(width, height, values)).map_err(|e| Error::io(path, e))
}

pub fn read_pfm(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pfm(&bytes, path)
}

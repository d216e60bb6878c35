//! 8-bit grayscale intensity images as PNG or binary PGM (P5).

use std::fs;
use std::io::Cursor;
use std::path::Path;

use crate::error::{Error, Result};

/// Grayscale image with samples in [0, 1], row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

impl GrayImage {
    pub fn from_u8(width: usize, height: usize, bytes: &[u8]) -> Self {
        GrayImage {
            width,
            height,
            data: bytes.iter().map(|&b| b as f64 / 255.0).collect(),
        }
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| quantize(v)).collect()
    }
}

pub fn encode_png(width: usize, height: usize, pixels: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc
            .write_header()
            .map_err(|e| Error::Data(format!("png encode: {e}")))?;
        w.write_image_data(pixels)
            .map_err(|e| Error::Data(format!("png encode: {e}")))?;
    }
    Ok(out)
}

pub fn decode_png(bytes: &[u8], path: &Path) -> Result<GrayImage> {
    let bad = |message: String| Error::Format {
        kind: "PNG",
        path: path.to_path_buf(),
        message,
    };
    let mut dec = png::Decoder::new(Cursor::new(bytes));
    dec.set_transformations(png::Transformations::EXPAND);
    let mut reader = dec.read_info().map_err(|e| bad(e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| bad("image too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| bad(e.to_string()))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let buf = &buf[..info.buffer_size()];
    match (info.color_type, info.bit_depth) {
        (png::ColorType::Grayscale, png::BitDepth::Eight) => Ok(GrayImage::from_u8(w, h, buf)),
        (png::ColorType::Grayscale, png::BitDepth::Sixteen) => Ok(GrayImage {
            width: w,
            height: h,
            data: buf
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / 65535.0)
                .collect(),
        }),
        (ct, bd) => Err(bad(format!("unsupported PNG layout {ct:?}/{bd:?}"))),
    }
}

pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

pub fn decode_pgm(bytes: &[u8], path: &Path) -> Result<GrayImage> {
    let bad = |message: String| Error::Format {
        kind: "PGM",
        path: path.to_path_buf(),
        message,
    };
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P5" {
        return Err(bad(format!("bad magic {:?}", fields[0])));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| bad(format!("bad header field {s:?}")));
    let (w, h, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
    let payload = bytes.get(pos..).unwrap_or(&[]);
    match maxval {
        1..=255 => {
            if payload.len() != w * h {
                return Err(bad(format!("expected {} bytes, found {}", w * h, payload.len())));
            }
            Ok(GrayImage {
                width: w,
                height: h,
                data: payload.iter().map(|&b| b as f64 / maxval as f64).collect(),
            })
        }
        256..=65535 => {
            if payload.len() != 2 * w * h {
                return Err(bad(format!("expected {} bytes, found {}", 2 * w * h, payload.len())));
            }
            Ok(GrayImage {
                width: w,
                height: h,
                data: payload
                    .chunks_exact(2)
                    .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / maxval as f64)
                    .collect(),
            })
        }
        _ => Err(bad(format!("bad maxval {maxval}"))),
    }
}

fn is_pgm(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
}

/// Write an intensity image; the format follows the extension (`.pgm` or PNG otherwise).
pub fn write_intensity(path: &Path, width: usize, height: usize, intensity: &[f64]) -> Result<()> {
    let pixels: Vec<u8> = intensity.iter().map(|&v| quantize(v)).collect();
    let bytes = if is_pgm(path) {
        encode_pgm(width, height, &pixels)
    } else {
        encode_png(width, height, &pixels)?
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_intensity(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"P5") {
        decode_pgm(&bytes, path)
    } else {
        decode_png(&bytes, path)
    }
}

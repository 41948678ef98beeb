//! Portable float map (PFM) reading and writing.
//!
//! Grayscale (`Pf`) and three-channel (`PF`) maps are supported. Rows are
//! stored bottom-to-top on disk and top-to-bottom in memory. Files are
//! written little-endian (negative scale field); both byte orders are read.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::real::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct PfmImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    /// Interleaved samples, top row first.
    pub data: Vec<f32>,
}

impl PfmImage {
    pub fn from_raster<T: Real>(raster: &Raster<T>) -> Self {
        PfmImage {
            width: raster.width(),
            height: raster.height(),
            channels: 1,
            data: raster
                .as_slice()
                .iter()
                .map(|v| v.to_f32().unwrap_or(f32::NAN))
                .collect(),
        }
    }

    pub fn to_raster<T: Real>(&self) -> Result<Raster<T>> {
        if self.channels != 1 {
            return Err(Error::InvalidParameter(format!(
                "expected a single-channel PFM, got {} channels",
                self.channels
            )));
        }
        Raster::from_vec(
            self.width,
            self.height,
            self.data.iter().map(|&v| T::lit(v as f64)).collect(),
        )
    }

    pub fn encode(&self) -> Vec<u8> {
        let tag = if self.channels == 3 { "PF" } else { "Pf" };
        let mut out = format!("{tag}\n{} {}\n-1.0\n", self.width, self.height).into_bytes();
        out.reserve(self.data.len() * 4);
        let row_len = self.width * self.channels;
        for row in (0..self.height).rev() {
            for v in &self.data[row * row_len..(row + 1) * row_len] {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut pos = 0usize;
        let mut token = || -> std::result::Result<String, String> {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err("truncated header".into());
            }
            let tok = String::from_utf8_lossy(&bytes[start..pos]).into_owned();
            Ok(tok)
        };
        let channels = match token()?.as_str() {
            "Pf" => 1,
            "PF" => 3,
            other => return Err(format!("bad magic {other:?}")),
        };
        let width: usize = token()?.parse().map_err(|_| "bad width".to_string())?;
        let height: usize = token()?.parse().map_err(|_| "bad height".to_string())?;
        let scale: f32 = token()?.parse().map_err(|_| "bad scale".to_string())?;
        if scale == 0.0 || !scale.is_finite() {
            return Err("scale field must be non-zero".into());
        }
        // exactly one whitespace byte separates the header from the samples
        pos += 1;
        let n = width * height * channels;
        let body = bytes
            .get(pos..pos + 4 * n)
            .ok_or_else(|| format!("expected {} sample bytes", 4 * n))?;
        let little = scale < 0.0;
        let row_len = width * channels;
        let mut data = vec![0f32; n];
        for (i, chunk) in body.chunks_exact(4).enumerate() {
            let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
            let v = if little {
                f32::from_le_bytes(raw)
            } else {
                f32::from_be_bytes(raw)
            };
            let file_row = i / row_len;
            let col = i % row_len;
            data[(height - 1 - file_row) * row_len + col] = v;
        }
        Ok(PfmImage {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes).map_err(|reason| Error::Decode {
            path: path.to_path_buf(),
            reason,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(&self.encode()))
            .map_err(|e| Error::io(path, e))
    }
}

pub fn read_raster<T: Real>(path: &Path) -> Result<Raster<T>> {
    PfmImage::read(path)?.to_raster()
}

pub fn write_raster<T: Real>(path: &Path, raster: &Raster<T>) -> Result<()> {
    PfmImage::from_raster(raster).write(path)
}

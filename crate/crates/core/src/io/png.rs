//! Grayscale PNG input and boolean mask PNGs.

use std::path::Path;

use image::{DynamicImage, GrayImage, ImageBuffer, ImageReader, Luma};

use crate::error::{Error, Result};
use crate::raster::{Mask, Raster};
use crate::real::Real;

fn decode_err(path: &Path, reason: impl ToString) -> Error {
    Error::Decode {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

fn open(path: &Path) -> Result<DynamicImage> {
    let reader = ImageReader::open(path).map_err(|e| Error::io(path, e))?;
    let reader = reader
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    reader.decode().map_err(|e| decode_err(path, e))
}

/// Reads an 8- or 16-bit grayscale PNG as linear intensities in `[0, 1]`.
pub fn read_gray<T: Real>(path: &Path) -> Result<Raster<T>> {
    match open(path)? {
        DynamicImage::ImageLuma8(img) => {
            let (w, h) = img.dimensions();
            let scale = T::lit(255.0);
            Raster::from_vec(
                w as usize,
                h as usize,
                img.into_raw()
                    .into_iter()
                    .map(|v| T::lit(v as f64) / scale)
                    .collect(),
            )
        }
        DynamicImage::ImageLuma16(img) => {
            let (w, h) = img.dimensions();
            let scale = T::lit(65535.0);
            Raster::from_vec(
                w as usize,
                h as usize,
                img.into_raw()
                    .into_iter()
                    .map(|v| T::lit(v as f64) / scale)
                    .collect(),
            )
        }
        other => Err(decode_err(
            path,
            format!("expected 8/16-bit grayscale, got {:?}", other.color()),
        )),
    }
}

/// Writes intensities clamped to `[0, 1]` as a 16-bit grayscale PNG.
pub fn write_gray16<T: Real>(path: &Path, raster: &Raster<T>) -> Result<()> {
    let data: Vec<u16> = raster
        .as_slice()
        .iter()
        .map(|v| {
            let v = v.to_f64_lossy().clamp(0.0, 1.0);
            (v * 65535.0).round() as u16
        })
        .collect();
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(raster.width() as u32, raster.height() as u32, data)
            .expect("buffer sized from raster");
    img.save(path).map_err(|e| decode_err(path, e))
}

pub fn write_mask(path: &Path, mask: &Mask) -> Result<()> {
    let data = mask
        .as_slice()
        .iter()
        .map(|&v| if v { 255u8 } else { 0 })
        .collect();
    let img = GrayImage::from_raw(mask.width() as u32, mask.height() as u32, data)
        .expect("buffer sized from mask");
    img.save(path).map_err(|e| decode_err(path, e))
}

/// Reads a mask PNG; any non-zero sample is `true`.
pub fn read_mask(path: &Path) -> Result<Mask> {
    let img = open(path)?.into_luma16();
    let (w, h) = img.dimensions();
    Raster::from_vec(
        w as usize,
        h as usize,
        img.into_raw().into_iter().map(|v| v != 0).collect(),
    )
}

//! On-disk layout of stage artifacts.
//!
//! A height raster `stem` is stored as `stem.pfm` (NaN on invalid pixels),
//! `stem_valid.png` and `stem.json` holding the frame and pixel pitch.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io::{self, pfm, png};
use crate::polarstack::{PolarizationMap, Reflection};
use crate::raster::{DepthMap, Frame, Mask, Raster};
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthMeta {
    pub frame: Frame,
    pub pixel_pitch: Option<f64>,
}

/// Content hash of a written artifact.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Hashes `path`; the recorded path is relative to `base` when possible.
pub fn digest(path: &Path, base: &Path) -> Result<FileDigest> {
    Ok(FileDigest {
        path: path.strip_prefix(base).unwrap_or(path).to_path_buf(),
        sha256: sha256_file(path)?,
    })
}

fn masked<T: Real>(z: &Raster<T>, valid: &Mask) -> Raster<T> {
    Raster::from_fn(z.width(), z.height(), |x, y| {
        if valid.at(x, y) {
            z.at(x, y)
        } else {
            T::nan()
        }
    })
}

fn unmasked<T: Real>(z: Raster<T>, valid: &Mask) -> Raster<T> {
    Raster::from_fn(z.width(), z.height(), |x, y| {
        if valid.at(x, y) {
            z.at(x, y)
        } else {
            T::zero()
        }
    })
}

/// Writes a height raster and returns the files created.
pub fn write_depth<T: Real>(dir: &Path, stem: &str, depth: &DepthMap<T>) -> Result<Vec<PathBuf>> {
    let pfm_path = dir.join(format!("{stem}.pfm"));
    let valid_path = dir.join(format!("{stem}_valid.png"));
    let meta_path = dir.join(format!("{stem}.json"));
    pfm::write_raster(&pfm_path, &masked(&depth.z, &depth.valid))?;
    png::write_mask(&valid_path, &depth.valid)?;
    io::write_json(
        &meta_path,
        &DepthMeta {
            frame: depth.frame,
            pixel_pitch: depth.pixel_pitch.map(|p| p.to_f64_lossy()),
        },
    )?;
    Ok(vec![pfm_path, valid_path, meta_path])
}

/// Reads a height raster from `path` (`.pfm`). The mask and metadata
/// siblings are optional: without them every finite pixel is valid and
/// the frame is taken as object space.
pub fn read_depth<T: Real>(path: &Path) -> Result<DepthMap<T>> {
    let z: Raster<T> = pfm::read_raster(path)?;
    let stem = path.with_extension("");
    let valid_path = PathBuf::from(format!("{}_valid.png", stem.display()));
    let meta_path = path.with_extension("json");
    let finite = z.map(|v| v.is_finite());
    let valid = if valid_path.exists() {
        png::read_mask(&valid_path)?.and(&finite)?
    } else {
        finite
    };
    let meta = if meta_path.exists() {
        io::read_json(&meta_path)?
    } else {
        DepthMeta {
            frame: Frame::ObjectFrame,
            pixel_pitch: None,
        }
    };
    DepthMap::new(
        unmasked(z, &valid),
        valid,
        meta.pixel_pitch.map(T::lit),
        meta.frame,
    )
}

const POLMAP_RASTERS: [&str; 4] = ["i_un", "rho", "phi", "fit_residual"];
const POLMAP_MASKS: [&str; 4] = ["polar_valid", "polar_measured", "specular", "rho_clamped"];

pub fn write_polarization_map<T: Real>(dir: &Path, map: &PolarizationMap<T>) -> Result<Vec<PathBuf>> {
    let specular = map.reflection.map(|&r| r == Reflection::Specular);
    let rasters = [&map.i_un, &map.rho, &map.phi, &map.fit_residual];
    let masks = [&map.valid, &map.measured, &specular, &map.rho_clamped];
    let mut written = Vec::new();
    for (name, r) in POLMAP_RASTERS.iter().zip(rasters) {
        let p = dir.join(format!("{name}.pfm"));
        pfm::write_raster(&p, r)?;
        written.push(p);
    }
    for (name, m) in POLMAP_MASKS.iter().zip(masks) {
        let p = dir.join(format!("{name}.png"));
        png::write_mask(&p, m)?;
        written.push(p);
    }
    Ok(written)
}

pub fn read_polarization_map<T: Real>(dir: &Path) -> Result<PolarizationMap<T>> {
    let [i_un, rho, phi, fit_residual] =
        POLMAP_RASTERS.map(|name| pfm::read_raster::<T>(&dir.join(format!("{name}.pfm"))));
    let [valid, measured, specular, rho_clamped] =
        POLMAP_MASKS.map(|name| png::read_mask(&dir.join(format!("{name}.png"))));
    let (i_un, rho, phi, fit_residual) = (i_un?, rho?, phi?, fit_residual?);
    let (valid, measured, specular, rho_clamped) = (valid?, measured?, specular?, rho_clamped?);
    for r in [&rho, &phi, &fit_residual] {
        i_un.ensure_dims(r)?;
    }
    for m in [&valid, &measured, &specular, &rho_clamped] {
        i_un.ensure_dims(m)?;
    }
    Ok(PolarizationMap {
        reflection: specular.map(|&s| if s { Reflection::Specular } else { Reflection::Diffuse }),
        i_un,
        rho,
        phi,
        valid,
        measured,
        fit_residual,
        rho_clamped,
    })
}

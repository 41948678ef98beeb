use spade::{DelaunayTriangulation, FloatTriangulation, HasPosition, Point2, Triangulation};

use crate::error::{Error, Result};
use crate::raster::{DepthMap, Mask, Raster};
use crate::real::Real;

struct Sample {
    at: Point2<f64>,
    value: f64,
}

impl HasPosition for Sample {
    type Scalar = f64;

    fn position(&self) -> Point2<f64> {
        self.at
    }
}

/// Dense raster from [`fill_holes`].
#[derive(Clone, Debug)]
pub struct FilledDepth<T> {
    pub depth: DepthMap<T>,
    /// Pixels outside the convex hull of the samples, copied from the
    /// nearest sample.
    pub extrapolated: Mask,
}

/// Fills every invalid pixel by linear interpolation over the Delaunay
/// triangulation of the valid ones; observed pixels are left untouched.
pub fn fill_holes<T: Real>(sparse: &DepthMap<T>) -> Result<FilledDepth<T>> {
    let (w, h) = sparse.dims();
    let samples: Vec<Sample> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .filter(|&(x, y)| sparse.valid.at(x, y))
        .map(|(x, y)| Sample {
            at: Point2::new(x as f64, y as f64),
            value: sparse.z.at(x, y).to_f64_lossy(),
        })
        .collect();
    if samples.len() < 3 {
        return Err(Error::InsufficientSamples);
    }
    let mut extrapolated = Raster::filled(w, h, false);
    if samples.len() == w * h {
        let mut depth = sparse.clone();
        depth.valid = Raster::filled(w, h, true);
        return Ok(FilledDepth { depth, extrapolated });
    }
    let tri: DelaunayTriangulation<Sample> =
        DelaunayTriangulation::bulk_load_stable(samples).map_err(|_| Error::InsufficientSamples)?;
    if tri.num_inner_faces() == 0 {
        return Err(Error::InsufficientSamples);
    }
    let bary = tri.barycentric();
    let mut z = sparse.z.clone();
    for y in 0..h {
        for x in 0..w {
            if sparse.valid.at(x, y) {
                continue;
            }
            let at = Point2::new(x as f64, y as f64);
            let value = match bary.interpolate(|v| v.data().value, at) {
                Some(v) => v,
                None => {
                    extrapolated.set(x, y, true);
                    tri.nearest_neighbor(at)
                        .map(|v| v.data().value)
                        .ok_or(Error::InsufficientSamples)?
                }
            };
            z.set(x, y, T::lit(value));
        }
    }
    let depth = DepthMap::new(z, Raster::filled(w, h, true), sparse.pixel_pitch, sparse.frame)?;
    Ok(FilledDepth { depth, extrapolated })
}

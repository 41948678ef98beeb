//! Photogrammetric point clouds in the polarized image.
//!
//! Points are mapped with the collinearity equations
//!
//! ```text
//! x - x0 + dx = -f (r11 X' + r12 Y' + r13 Z') / (r31 X' + r32 Y' + r33 Z')
//! y - y0 + dy = -f (r21 X' + r22 Y' + r23 Z') / (r31 X' + r32 Y' + r33 Z')
//! ```
//!
//! with `(X', Y', Z')` the offset from the projection center and `(dx, dy)`
//! the radial/decentering distortion evaluated at the image point. Each pixel
//! keeps the point closest to the projection center, and empty pixels are
//! filled by linear interpolation over a Delaunay triangulation.

mod cloud;
mod fill;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{DepthMap, Frame, Raster};
use crate::real::Real;

pub use cloud::PointCloud;
pub use fill::{fill_holes, FilledDepth};

/// Interior and exterior orientation of the polarization camera.
///
/// Units: `f`, `x0`, `y0` in pixels; `X0`, `Y0`, `Z0` in object units (mm).
/// Distortion coefficients act on pixel offsets from the principal point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraModel<T> {
    pub f: T,
    pub x0: T,
    pub y0: T,
    #[serde(default)]
    pub k1: T,
    #[serde(default)]
    pub k2: T,
    #[serde(default)]
    pub k3: T,
    #[serde(default)]
    pub p1: T,
    #[serde(default)]
    pub p2: T,
    #[serde(default)]
    pub p3: T,
    #[serde(rename = "X0")]
    pub center_x: T,
    #[serde(rename = "Y0")]
    pub center_y: T,
    #[serde(rename = "Z0")]
    pub center_z: T,
    /// Rows `[r11 r12 r13]`, `[r21 r22 r23]`, `[r31 r32 r33]`.
    #[serde(rename = "R")]
    pub rotation: [[T; 3]; 3],
    pub width: usize,
    pub height: usize,
}

/// Image position of an object point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImagePoint<T> {
    pub x: T,
    pub y: T,
    /// Euclidean distance from the projection center.
    pub distance: T,
    /// False for points behind the camera.
    pub in_front: bool,
}

impl<T: Real> CameraModel<T> {
    /// Distortion-free camera with the given orientation.
    pub fn pinhole(f: T, principal: [T; 2], center: [T; 3], rotation: [[T; 3]; 3], dims: (usize, usize)) -> Result<Self> {
        let cam = CameraModel {
            f,
            x0: principal[0],
            y0: principal[1],
            k1: T::zero(),
            k2: T::zero(),
            k3: T::zero(),
            p1: T::zero(),
            p2: T::zero(),
            p3: T::zero(),
            center_x: center[0],
            center_y: center[1],
            center_z: center[2],
            rotation,
            width: dims.0,
            height: dims.1,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f > T::zero()) || !self.f.is_finite() {
            return Err(Error::InvalidParameter(format!("focal length must be positive, got {}", self.f)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidParameter("camera image size is zero".into()));
        }
        let r = &self.rotation;
        let tol = T::lit(1e-9).max(T::epsilon() * T::lit(16.0));
        for i in 0..3 {
            for j in 0..3 {
                let dot = (0..3).fold(T::zero(), |acc, k| acc + r[k][i] * r[k][j]);
                let expect = if i == j { T::one() } else { T::zero() };
                if !((dot - expect).abs() <= tol) {
                    return Err(Error::InvalidParameter("rotation matrix is not orthonormal".into()));
                }
            }
        }
        let det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
            - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
            + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
        if !((det - T::one()).abs() <= tol) {
            return Err(Error::InvalidParameter("rotation matrix must have determinant +1".into()));
        }
        Ok(())
    }

    pub fn center(&self) -> [T; 3] {
        [self.center_x, self.center_y, self.center_z]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Distortion `(dx, dy)` at offsets `(xb, yb)` from the principal point.
    pub fn distort(&self, xb: T, yb: T) -> (T, T) {
        let r2 = xb * xb + yb * yb;
        let radial = self.k1 * r2 + self.k2 * r2 * r2 + self.k3 * r2 * r2 * r2;
        let two = T::lit(2.0);
        let tangential = T::one() + self.p3 * r2;
        let dx = xb * radial + (self.p1 * (r2 + two * xb * xb) + two * self.p2 * xb * yb) * tangential;
        let dy = yb * radial + (self.p2 * (r2 + two * yb * yb) + two * self.p1 * xb * yb) * tangential;
        (dx, dy)
    }

    fn camera_frame(&self, point: [T; 3]) -> [T; 3] {
        let d = [
            point[0] - self.center_x,
            point[1] - self.center_y,
            point[2] - self.center_z,
        ];
        let r = &self.rotation;
        [
            r[0][0] * d[0] + r[0][1] * d[1] + r[0][2] * d[2],
            r[1][0] * d[0] + r[1][1] * d[1] + r[1][2] * d[2],
            r[2][0] * d[0] + r[2][1] * d[1] + r[2][2] * d[2],
        ]
    }

    /// Projects an object point. Distortion is resolved by fixed-point
    /// iteration (at most 10 steps, stopping below `1e-6` px).
    pub fn world_to_image(&self, point: [T; 3]) -> Result<ImagePoint<T>> {
        let u = self.camera_frame(point);
        let norm = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
        if !(u[2].abs() > norm * T::lit(1e-12)) {
            return Err(Error::DegenerateRay);
        }
        let xi = -self.f * u[0] / u[2];
        let eta = -self.f * u[1] / u[2];
        let (mut xb, mut yb) = (xi, eta);
        let tol = T::lit(1e-6);
        for _ in 0..10 {
            let (dx, dy) = self.distort(xb, yb);
            let (nx, ny) = (xi - dx, eta - dy);
            let step = (nx - xb).abs().max((ny - yb).abs());
            xb = nx;
            yb = ny;
            if step < tol {
                break;
            }
        }
        Ok(ImagePoint {
            x: self.x0 + xb,
            y: self.y0 + yb,
            distance: norm,
            in_front: u[2] < T::zero(),
        })
    }

    /// Unit object-space direction of the ray seen at image position `(x, y)`.
    pub fn pixel_ray(&self, x: T, y: T) -> [T; 3] {
        let (xb, yb) = (x - self.x0, y - self.y0);
        let (dx, dy) = self.distort(xb, yb);
        let u = [xb + dx, yb + dy, -self.f];
        let r = &self.rotation;
        let w = [
            r[0][0] * u[0] + r[1][0] * u[1] + r[2][0] * u[2],
            r[0][1] * u[0] + r[1][1] * u[1] + r[2][1] * u[2],
            r[0][2] * u[0] + r[1][2] * u[1] + r[2][2] * u[2],
        ];
        let n = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
        [w[0] / n, w[1] / n, w[2] / n]
    }

    /// Object point at `distance` along the ray of pixel `(x, y)`.
    pub fn back_project(&self, x: T, y: T, distance: T) -> [T; 3] {
        let d = self.pixel_ray(x, y);
        [
            self.center_x + d[0] * distance,
            self.center_y + d[1] * distance,
            self.center_z + d[2] * distance,
        ]
    }
}

/// Sparse range raster produced by [`project_cloud`].
#[derive(Clone, Debug)]
pub struct ProjectedCloud<T> {
    /// Distance to the projection center of the nearest point per pixel.
    pub depth: DepthMap<T>,
    /// Index of the point kept in each pixel.
    pub point_index: Raster<Option<usize>>,
    /// Points per pixel before visibility filtering.
    pub hits: Raster<u32>,
    pub outside: usize,
    pub behind: usize,
    /// Points hidden behind a nearer point in the same pixel.
    pub occluded: usize,
}

/// Projects every point and keeps, per pixel, the one nearest the camera.
/// Ties keep the point listed first.
pub fn project_cloud<T: Real>(camera: &CameraModel<T>, cloud: &PointCloud<T>) -> Result<ProjectedCloud<T>> {
    camera.validate()?;
    if cloud.is_empty() {
        return Err(Error::EmptyInput("point cloud"));
    }
    let (w, h) = camera.dims();
    let projected: Vec<Result<ImagePoint<T>>> = cloud
        .points
        .par_iter()
        .map(|&p| camera.world_to_image(p))
        .collect();
    let mut best: Vec<Option<(T, usize)>> = vec![None; w * h];
    let mut hits = Raster::filled(w, h, 0u32);
    let (mut outside, mut behind, mut occluded) = (0, 0, 0);
    let half = T::lit(0.5);
    let (wt, ht) = (T::from_usize_lossy(w), T::from_usize_lossy(h));
    for (i, proj) in projected.into_iter().enumerate() {
        let ip = match proj {
            Ok(ip) if ip.in_front => ip,
            Ok(_) | Err(Error::DegenerateRay) => {
                behind += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let (px, py) = ((ip.x + half).floor(), (ip.y + half).floor());
        if !(px >= T::zero() && py >= T::zero() && px < wt && py < ht) {
            outside += 1;
            continue;
        }
        let idx = py.to_usize().unwrap_or(0) * w + px.to_usize().unwrap_or(0);
        hits.as_mut_slice()[idx] += 1;
        match best[idx] {
            Some((d, _)) if d <= ip.distance => occluded += 1,
            Some(_) => {
                occluded += 1;
                best[idx] = Some((ip.distance, i));
            }
            None => best[idx] = Some((ip.distance, i)),
        }
    }
    if best.iter().all(Option::is_none) {
        return Err(Error::NoVisiblePoints);
    }
    let z = Raster::from_vec(w, h, best.iter().map(|b| b.map_or(T::zero(), |b| b.0)).collect())?;
    let valid = Raster::from_vec(w, h, best.iter().map(Option::is_some).collect())?;
    let point_index = Raster::from_vec(w, h, best.iter().map(|b| b.map(|b| b.1)).collect())?;
    Ok(ProjectedCloud {
        depth: DepthMap::new(z, valid, None, Frame::ImageFrame)?,
        point_index,
        hits,
        outside,
        behind,
        occluded,
    })
}

#[cfg(test)]
mod tests;

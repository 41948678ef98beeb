//! Grid fusion of a detailed polarization height map with a coarse but
//! metrically accurate photogrammetric one.
//!
//! Both surfaces are brought to a common height scale, their difference
//! `dz = z_mvs - z_polar` is sampled on a lattice every `g` pixels, smoothed
//! with a Gaussian over the lattice, upsampled bilinearly and added back to
//! the polarization heights.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camproj::CameraModel;
use crate::error::{Error, Result};
use crate::raster::{gaussian_smooth_masked, DepthMap, Frame, Mask, Raster};
use crate::real::Real;

/// How heights are mapped to a common scale before differencing.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Each surface mapped to `[0, 1]` by its own min/max; the result is
    /// mapped back with the photogrammetric record.
    #[default]
    MinMax01,
    /// Polarization heights taken in object units (pixel heights times the
    /// photogrammetric pixel pitch); both surfaces normalized with the
    /// photogrammetric record, so detail amplitude is preserved.
    MvsReference,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimization {
    #[default]
    None,
    /// Global offset and scale on `dz` fitted at the lattice nodes.
    OffsetRefine,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    /// Lattice spacing in pixels, at least 2.
    pub grid_spacing: usize,
    /// Gaussian standard deviation in lattice nodes.
    pub sigma: f64,
    pub normalization: Normalization,
    pub optimization: Optimization,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            grid_spacing: 4,
            sigma: 1.0,
            normalization: Normalization::default(),
            optimization: Optimization::default(),
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_spacing < 2 {
            return Err(Error::InvalidParameter(format!(
                "grid spacing must be at least 2, got {}",
                self.grid_spacing
            )));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidParameter(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        Ok(())
    }
}

/// Affine height transform `z' = (z - offset) / scale`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationRecord<T> {
    pub offset: T,
    pub scale: T,
}

impl<T: Real> NormalizationRecord<T> {
    pub fn identity() -> Self {
        NormalizationRecord {
            offset: T::zero(),
            scale: T::one(),
        }
    }

    pub fn apply(&self, depth: &DepthMap<T>) -> DepthMap<T> {
        let mut out = depth.clone();
        out.z = depth.z.map(|&v| (v - self.offset) / self.scale);
        out
    }

    pub fn invert(&self, depth: &DepthMap<T>) -> DepthMap<T> {
        let mut out = depth.clone();
        out.z = depth.z.map(|&v| v * self.scale + self.offset);
        out
    }
}

/// Maps valid heights to `[0, 1]`; the record inverts the mapping.
pub fn normalize_heights<T: Real>(depth: &DepthMap<T>) -> Result<(DepthMap<T>, NormalizationRecord<T>)> {
    let mut lo = T::infinity();
    let mut hi = T::neg_infinity();
    for v in depth.valid_values() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo > hi {
        return Err(Error::NoValidPixels("height map to normalize"));
    }
    if !(hi > lo) {
        return Err(Error::ZeroRange);
    }
    let record = NormalizationRecord {
        offset: lo,
        scale: hi - lo,
    };
    Ok((record.apply(depth), record))
}

/// Lattice of height differences. Node `(i, j)` sits on pixel `(xs[i], ys[j])`.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionGrid<T> {
    pub spacing: usize,
    pub xs: Vec<usize>,
    pub ys: Vec<usize>,
    pub dz: Raster<T>,
    /// Nodes observed in both surfaces; the others were copied from the
    /// nearest valid node.
    pub valid: Mask,
    pub sigma: f64,
}

/// Node positions `0, g, 2g, ...` plus the last pixel.
pub fn lattice_positions(n: usize, g: usize) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    let mut out: Vec<usize> = (0..n).step_by(g.max(1)).collect();
    if *out.last().expect("non-empty") != n - 1 {
        out.push(n - 1);
    }
    out
}

fn inpaint_nearest<T: Real>(values: &mut Raster<T>, valid: &Mask) -> Result<()> {
    let (w, h) = values.dims();
    let known: Vec<(usize, usize)> = (0..h)
        .flat_map(|j| (0..w).map(move |i| (i, j)))
        .filter(|&(i, j)| valid.at(i, j))
        .collect();
    if known.is_empty() {
        return Err(Error::NoValidPixels("no lattice node is valid in both surfaces"));
    }
    for j in 0..h {
        for i in 0..w {
            if valid.at(i, j) {
                continue;
            }
            let &(bi, bj) = known
                .iter()
                .min_by_key(|&&(ki, kj)| {
                    let (di, dj) = (ki.abs_diff(i), kj.abs_diff(j));
                    di * di + dj * dj
                })
                .expect("non-empty");
            let v = values.at(bi, bj);
            values.set(i, j, v);
        }
    }
    Ok(())
}

/// Samples `z_mvs - z_polar` at the lattice nodes.
pub fn compute_dz_grid<T: Real>(z_mvs: &DepthMap<T>, z_polar: &DepthMap<T>, config: &FusionConfig) -> Result<FusionGrid<T>> {
    config.validate()?;
    z_mvs.z.ensure_dims(&z_polar.z)?;
    let (w, h) = z_mvs.dims();
    let xs = lattice_positions(w, config.grid_spacing);
    let ys = lattice_positions(h, config.grid_spacing);
    let valid = Raster::from_fn(xs.len(), ys.len(), |i, j| {
        z_mvs.valid.at(xs[i], ys[j]) && z_polar.valid.at(xs[i], ys[j])
    });
    let mut dz = Raster::from_fn(xs.len(), ys.len(), |i, j| {
        if valid.at(i, j) {
            z_mvs.z.at(xs[i], ys[j]) - z_polar.z.at(xs[i], ys[j])
        } else {
            T::zero()
        }
    });
    inpaint_nearest(&mut dz, &valid)?;
    Ok(FusionGrid {
        spacing: config.grid_spacing,
        xs,
        ys,
        dz,
        valid,
        sigma: config.sigma,
    })
}

/// Gaussian smoothing over the lattice (normalized convolution, replicated
/// border); inpainted nodes carry no weight.
pub fn smooth_grid<T: Real>(grid: &FusionGrid<T>) -> FusionGrid<T> {
    let (dz, _) = gaussian_smooth_masked(&grid.dz, &grid.valid, T::lit(grid.sigma))
        .expect("grid values and mask share dimensions");
    FusionGrid {
        dz,
        ..grid.clone()
    }
}

fn cell(pos: &[usize], v: usize) -> usize {
    // index i with pos[i] <= v < pos[i + 1]; nodes map to themselves
    match pos.binary_search(&v) {
        Ok(i) => i,
        Err(i) => i - 1,
    }
}

/// Bilinear upsampling of the lattice to every pixel:
/// `a00 + a10 x + a01 y + a11 x y` with `a00 = H1`, `a10 = H2 - H1`,
/// `a01 = H3 - H1`, `a11 = H1 - H2 - H3 + H4` and cell-local `x, y` in `[0, 1]`.
pub fn interpolate_bilinear<T: Real>(grid: &FusionGrid<T>, dims: (usize, usize)) -> Result<Raster<T>> {
    let (w, h) = dims;
    if grid.xs.last() != Some(&(w.max(1) - 1)) || grid.ys.last() != Some(&(h.max(1) - 1)) || grid.xs[0] != 0 || grid.ys[0] != 0 {
        return Err(Error::InvalidParameter(format!(
            "lattice does not cover a {w}x{h} raster"
        )));
    }
    let rows: Vec<Vec<T>> = (0..h)
        .into_par_iter()
        .map(|y| {
            let j = cell(&grid.ys, y);
            let j1 = (j + 1).min(grid.ys.len() - 1);
            let fy = if j1 > j {
                T::from_usize_lossy(y - grid.ys[j]) / T::from_usize_lossy(grid.ys[j1] - grid.ys[j])
            } else {
                T::zero()
            };
            (0..w)
                .map(|x| {
                    let i = cell(&grid.xs, x);
                    let i1 = (i + 1).min(grid.xs.len() - 1);
                    let fx = if i1 > i {
                        T::from_usize_lossy(x - grid.xs[i]) / T::from_usize_lossy(grid.xs[i1] - grid.xs[i])
                    } else {
                        T::zero()
                    };
                    let h1 = grid.dz.at(i, j);
                    let h2 = grid.dz.at(i1, j);
                    let h3 = grid.dz.at(i, j1);
                    let h4 = grid.dz.at(i1, j1);
                    bilinear(h1, h2, h3, h4, fx, fy)
                })
                .collect()
        })
        .collect();
    Raster::from_vec(w, h, rows.into_iter().flatten().collect())
}

/// One cell of the bilinear patch.
pub fn bilinear<T: Real>(h1: T, h2: T, h3: T, h4: T, x: T, y: T) -> T {
    let a00 = h1;
    let a10 = h2 - h1;
    let a01 = h3 - h1;
    let a11 = h1 - h2 - h3 + h4;
    a00 + a10 * x + a01 * y + a11 * x * y
}

/// Offset and scale applied to `dz` by [`Optimization::OffsetRefine`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OffsetRefinement<T> {
    pub offset: T,
    pub scale: T,
}

fn refine_offset<T: Real>(
    z_polar: &DepthMap<T>,
    dz: &Raster<T>,
    z_mvs: &DepthMap<T>,
    grid: &FusionGrid<T>,
) -> Result<OffsetRefinement<T>> {
    // least squares for (alpha, beta) in z_mvs - z_polar = alpha + beta dz at nodes
    let (mut n, mut sd, mut sdd, mut sr, mut srd) = (T::zero(), T::zero(), T::zero(), T::zero(), T::zero());
    for &y in &grid.ys {
        for &x in &grid.xs {
            if !(z_mvs.valid.at(x, y) && z_polar.valid.at(x, y)) {
                continue;
            }
            let d = dz.at(x, y);
            let r = z_mvs.z.at(x, y) - z_polar.z.at(x, y);
            n = n + T::one();
            sd = sd + d;
            sdd = sdd + d * d;
            sr = sr + r;
            srd = srd + r * d;
        }
    }
    if n == T::zero() {
        return Err(Error::NoValidPixels("no lattice node is valid in both surfaces"));
    }
    let det = n * sdd - sd * sd;
    if det.abs() <= T::epsilon() * n * sdd.max(T::one()) {
        // dz constant at the nodes: only the offset is identifiable
        return Ok(OffsetRefinement {
            offset: (sr - sd) / n,
            scale: T::one(),
        });
    }
    Ok(OffsetRefinement {
        offset: (sdd * sr - sd * srd) / det,
        scale: (n * srd - sd * sr) / det,
    })
}

/// `z_polar + dz`, optionally after fitting an offset and scale on `dz`
/// against the anchor surface at the lattice nodes.
pub fn combine<T: Real>(
    z_polar: &DepthMap<T>,
    dz: &Raster<T>,
    anchor: Option<(&DepthMap<T>, &FusionGrid<T>)>,
    config: &FusionConfig,
) -> Result<(DepthMap<T>, Option<OffsetRefinement<T>>)> {
    z_polar.z.ensure_dims(dz)?;
    let refinement = match config.optimization {
        Optimization::None => None,
        Optimization::OffsetRefine => {
            let (z_mvs, grid) = anchor.ok_or(Error::MissingAnchor)?;
            z_polar.z.ensure_dims(&z_mvs.z)?;
            Some(refine_offset(z_polar, dz, z_mvs, grid)?)
        }
    };
    let mut out = z_polar.clone();
    for (o, &d) in out.z.as_mut_slice().iter_mut().zip(dz.as_slice()) {
        let d = match refinement {
            Some(r) => r.offset + r.scale * d,
            None => d,
        };
        if d != T::zero() {
            *o = *o + d;
        }
    }
    if let Some((z_mvs, _)) = anchor {
        out.valid = out.valid.and(&z_mvs.valid)?;
    }
    Ok((out, refinement))
}

/// Two pixels whose surface points lie a known distance apart.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnownDistance<T> {
    pub a: (usize, usize),
    pub b: (usize, usize),
    pub length: T,
}

/// Scales heights and pixel pitch uniformly so the 3D distance between the
/// two surface points equals the known length. Returns the scale factor.
pub fn rescale_to_object<T: Real>(depth: &DepthMap<T>, known: &KnownDistance<T>) -> Result<(DepthMap<T>, T)> {
    let (w, h) = depth.dims();
    let inside = |(x, y): (usize, usize)| x < w && y < h && depth.valid.at(x, y);
    if !inside(known.a) || !inside(known.b) {
        return Err(Error::InvalidParameter("reference pixels must be valid and inside the map".into()));
    }
    if !(known.length > T::zero()) || !known.length.is_finite() {
        return Err(Error::InvalidParameter("reference length must be positive".into()));
    }
    let pitch = depth.pitch_or_unit();
    let dx = (T::from_usize_lossy(known.a.0) - T::from_usize_lossy(known.b.0)) * pitch;
    let dy = (T::from_usize_lossy(known.a.1) - T::from_usize_lossy(known.b.1)) * pitch;
    let dz = depth.z.at(known.a.0, known.a.1) - depth.z.at(known.b.0, known.b.1);
    let current = (dx * dx + dy * dy + dz * dz).sqrt();
    if !(current > T::zero()) {
        return Err(Error::ZeroDistance);
    }
    let scale = known.length / current;
    let mut out = depth.clone();
    out.z = depth.z.map(|&v| v * scale);
    out.pixel_pitch = Some(pitch * scale);
    out.frame = Frame::ObjectFrame;
    Ok((out, scale))
}

/// Converts a range raster (distance to the projection center) into heights
/// along the viewing axis, positive towards the camera: `-range * cos(a)`
/// with `a` the angle between the pixel ray and the optical axis. The pixel
/// pitch is the mean axial distance over the focal length.
pub fn range_to_height<T: Real>(range: &DepthMap<T>, camera: &CameraModel<T>) -> Result<DepthMap<T>> {
    if range.dims() != camera.dims() {
        return Err(Error::DimensionMismatch {
            expected: camera.dims(),
            found: range.dims(),
        });
    }
    let (w, h) = range.dims();
    let mut sum = T::zero();
    let mut n = 0usize;
    let z = Raster::from_fn(w, h, |x, y| {
        if !range.valid.at(x, y) {
            return T::zero();
        }
        let (xb, yb) = (T::from_usize_lossy(x) - camera.x0, T::from_usize_lossy(y) - camera.y0);
        let (dx, dy) = camera.distort(xb, yb);
        let (u, v) = (xb + dx, yb + dy);
        let cos = camera.f / (u * u + v * v + camera.f * camera.f).sqrt();
        let axial = range.z.at(x, y) * cos;
        sum = sum + axial;
        n += 1;
        -axial
    });
    if n == 0 {
        return Err(Error::NoValidPixels("range map"));
    }
    let pitch = sum / T::from_usize_lossy(n) / camera.f;
    DepthMap::new(z, range.valid.clone(), Some(pitch), Frame::ObjectFrame)
}

/// Everything produced by [`fuse`].
#[derive(Clone, Debug)]
pub struct Fusion<T> {
    /// Combined heights in the units of the photogrammetric surface.
    pub combined: DepthMap<T>,
    pub polar_record: NormalizationRecord<T>,
    pub mvs_record: NormalizationRecord<T>,
    pub raw_grid: FusionGrid<T>,
    pub smoothed_grid: FusionGrid<T>,
    /// Upsampled offset in normalized units.
    pub dz: Raster<T>,
    pub refinement: Option<OffsetRefinement<T>>,
}

/// Full fusion of polarization heights with photogrammetric heights.
///
/// Polarization heights in [`Frame::PolarizationFrame`] without a pitch are
/// taken to be in pixel units and converted with the photogrammetric pitch
/// under [`Normalization::MvsReference`].
pub fn fuse<T: Real>(z_polar: &DepthMap<T>, z_mvs: &DepthMap<T>, config: &FusionConfig) -> Result<Fusion<T>> {
    config.validate()?;
    z_mvs.z.ensure_dims(&z_polar.z)?;
    let (mvs_n, mvs_record) = normalize_heights(z_mvs)?;
    let (polar_n, polar_record) = match config.normalization {
        Normalization::MinMax01 => normalize_heights(z_polar)?,
        Normalization::MvsReference => {
            let to_object = match (z_polar.frame, z_polar.pixel_pitch) {
                (Frame::PolarizationFrame, None) => z_mvs.pitch_or_unit(),
                _ => T::one(),
            };
            let record = NormalizationRecord {
                offset: mvs_record.offset / to_object,
                scale: mvs_record.scale / to_object,
            };
            (record.apply(z_polar), record)
        }
    };
    let raw_grid = compute_dz_grid(&mvs_n, &polar_n, config)?;
    let smoothed_grid = smooth_grid(&raw_grid);
    let dz = interpolate_bilinear(&smoothed_grid, z_polar.dims())?;
    let (combined_n, refinement) = combine(&polar_n, &dz, Some((&mvs_n, &raw_grid)), config)?;
    let mut combined = mvs_record.invert(&combined_n);
    combined.pixel_pitch = z_mvs.pixel_pitch;
    combined.frame = Frame::ObjectFrame;
    Ok(Fusion {
        combined,
        polar_record,
        mvs_record,
        raw_grid,
        smoothed_grid,
        dz,
        refinement,
    })
}

//! Height from polarization.
//!
//! Every measured pixel contributes two families of linear constraints on
//! the discrete height gradient `(p, q)`:
//!
//! * collinearity, `-p cos(phi) + q sin(phi) = 0`, which holds for the
//!   phase and its opposite alike, so the azimuth ambiguity never has to be
//!   resolved per pixel;
//! * shading, `-p s_x - q s_y = i_un / cos(theta) - s_z`, with the zenith
//!   angle `theta` inverted from the degree of polarization.
//!
//! The stacked system is solved by conjugate gradients on the normal
//! equations, with the height gauged to zero mean.

mod solver;
mod stencil;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fresnel::{zenith_from_dop_diffuse, Branch, Material};
use crate::polarstack::{percentile_of, PolarizationMap, Reflection};
use crate::raster::{DepthMap, Frame, Mask, Raster};
use crate::real::Real;

pub use solver::Csr;
pub use stencil::{
    build_gradient_operator, Difference, Discretization, GradientField, GradientOperator,
};

/// Direction towards a distant light, unit length, `s_z > 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LightSource<T> {
    s: [T; 3],
}

impl<T: Real> LightSource<T> {
    pub fn new(s: [T; 3]) -> Result<Self> {
        let norm = (s[0] * s[0] + s[1] * s[1] + s[2] * s[2]).sqrt();
        if !((norm - T::one()).abs() <= T::lit(1e-9).max(T::epsilon() * T::lit(8.0))) {
            return Err(Error::InvalidParameter(format!(
                "light direction must be a unit vector, norm is {norm}"
            )));
        }
        if !(s[2] > T::zero()) {
            return Err(Error::InvalidParameter(
                "light must lie in front of the surface (s_z > 0)".into(),
            ));
        }
        Ok(LightSource { s })
    }

    /// Normalizes an arbitrary direction.
    pub fn from_direction(v: [T; 3]) -> Result<Self> {
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if !(norm > T::zero()) || !norm.is_finite() {
            return Err(Error::InvalidParameter("light direction is zero".into()));
        }
        Self::new([v[0] / norm, v[1] / norm, v[2] / norm])
    }

    pub fn vector(&self) -> [T; 3] {
        self.s
    }
}

impl<T: Real> Default for LightSource<T> {
    fn default() -> Self {
        LightSource {
            s: [T::zero(), T::zero(), T::one()],
        }
    }
}

/// How the unpolarized intensity is scaled to unit albedo.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlbedoNormalization {
    /// Divide by this quantile of `i_un` over measured diffuse pixels.
    Percentile { quantile: f64 },
    /// Divide by a known albedo.
    Known { albedo: f64 },
}

impl Default for AlbedoNormalization {
    fn default() -> Self {
        AlbedoNormalization::Percentile { quantile: 0.99 }
    }
}

/// Row weight of the collinearity constraints.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollinearityWeighting {
    /// `w1` at every pixel with a defined phase.
    #[default]
    Uniform,
    /// `w1 * rho`. Leaves the directions the shading rows cannot see almost
    /// unconstrained on gently curved surfaces.
    DegreeOfPolarization,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssembleConfig {
    /// Collinearity weight.
    pub w1: f64,
    pub collinearity_weighting: CollinearityWeighting,
    /// Shading weight.
    pub w2: f64,
    pub discretization: Discretization,
    pub albedo: AlbedoNormalization,
    /// Specular inversion branch (only used for labelled specular pixels).
    pub branch: Branch,
}

impl Default for AssembleConfig {
    fn default() -> Self {
        AssembleConfig {
            w1: 1.0,
            collinearity_weighting: CollinearityWeighting::default(),
            w2: 1.0,
            discretization: Discretization::default(),
            albedo: AlbedoNormalization::default(),
            branch: Branch::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowFamily {
    Collinearity,
    Shading,
}

/// Weighted sparse least-squares problem over the heights of the measured
/// pixels. Column `j` is the height of pixel `column_pixel[j]`.
#[derive(Clone, Debug)]
pub struct SparseSystem<T> {
    pub a: Csr<T>,
    pub b: Vec<T>,
    pub weights: Vec<T>,
    pub family: Vec<RowFamily>,
    pub row_pixel: Vec<usize>,
    pub column_pixel: Vec<usize>,
    pub pixel_column: Raster<Option<usize>>,
    /// Pixels whose degree of polarization saturated the zenith inversion;
    /// they carry collinearity rows only.
    pub saturated: Mask,
}

impl<T: Real> SparseSystem<T> {
    pub fn dims(&self) -> (usize, usize) {
        self.pixel_column.dims()
    }

    pub fn rows(&self) -> usize {
        self.a.rows
    }

    pub fn cols(&self) -> usize {
        self.a.cols
    }

    /// `|W (A z - b)|` for a height raster covering at least the columns.
    pub fn weighted_residual(&self, z: &Raster<T>) -> Result<T> {
        self.pixel_column.ensure_dims(z)?;
        let x: Vec<T> = self.column_pixel.iter().map(|&p| z.as_slice()[p]).collect();
        let mut ax = vec![T::zero(); self.rows()];
        self.a.mul_into(&x, &mut ax);
        Ok(ax
            .iter()
            .zip(&self.b)
            .zip(&self.weights)
            .map(|((&v, &b), &w)| (w * (v - b)).powi(2))
            .sum::<T>()
            .sqrt())
    }

    /// `|W b|`.
    pub fn weighted_rhs_norm(&self) -> T {
        self.b
            .iter()
            .zip(&self.weights)
            .map(|(&b, &w)| (w * b).powi(2))
            .sum::<T>()
            .sqrt()
    }
}

struct RawRow<T> {
    family: RowFamily,
    pixel: usize,
    weight: T,
    rhs: T,
    entries: Vec<(usize, T)>,
}

fn row_entries<T: Real>(dx: &Difference, dy: &Difference, cx: T, cy: T) -> Vec<(usize, T)> {
    let mut out: Vec<(usize, T)> = Vec::with_capacity(4);
    let terms = dx
        .terms()
        .into_iter()
        .map(|(p, c)| (p, cx * T::lit(c)))
        .chain(dy.terms().into_iter().map(|(p, c)| (p, cy * T::lit(c))));
    for (pix, c) in terms {
        match out.iter_mut().find(|(p, _)| *p == pix) {
            Some(e) => e.1 = e.1 + c,
            None => out.push((pix, c)),
        }
    }
    out.retain(|&(_, c)| c != T::zero());
    out.sort_by_key(|&(p, _)| p);
    out
}

fn albedo_scale<T: Real>(polmap: &PolarizationMap<T>, albedo: AlbedoNormalization) -> Result<T> {
    let scale = match albedo {
        AlbedoNormalization::Known { albedo } => T::lit(albedo),
        AlbedoNormalization::Percentile { quantile } => {
            if !(0.0..=1.0).contains(&quantile) {
                return Err(Error::InvalidParameter(format!(
                    "albedo quantile {quantile} outside [0, 1]"
                )));
            }
            let mut values: Vec<T> = polmap
                .i_un
                .as_slice()
                .iter()
                .zip(polmap.measured.as_slice())
                .zip(polmap.reflection.as_slice())
                .filter(|((_, &m), &r)| m && r == Reflection::Diffuse)
                .map(|((&v, _), _)| v)
                .collect();
            if values.is_empty() {
                return Ok(T::one());
            }
            percentile_of(&mut values, quantile).unwrap_or_else(T::one)
        }
    };
    if scale > T::zero() && scale.is_finite() {
        Ok(scale)
    } else {
        Err(Error::InvalidParameter(format!(
            "albedo normalization must be positive, got {scale}"
        )))
    }
}

/// Builds the weighted constraint system for a polarization map.
pub fn assemble<T: Real>(
    polmap: &PolarizationMap<T>,
    material: &Material<T>,
    light: &LightSource<T>,
    config: &AssembleConfig,
) -> Result<SparseSystem<T>> {
    if polmap.measured.count() == 0 {
        return Err(Error::NoValidPixels("polarization map has no measured pixels"));
    }
    if !(config.w1 >= 0.0 && config.w2 >= 0.0) || config.w1 + config.w2 == 0.0 {
        return Err(Error::InvalidParameter(
            "row weights must be non-negative and not both zero".into(),
        ));
    }
    let (w, h) = polmap.dims();
    let op = build_gradient_operator(&polmap.measured)?;
    let albedo = albedo_scale(polmap, config.albedo)?;
    let eta = material.eta();
    let [sx, sy, sz] = light.vector();
    let (w1, w2) = (T::lit(config.w1), T::lit(config.w2));
    let scheme = config.discretization;

    let per_pixel: Vec<(Vec<RawRow<T>>, bool)> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let mut rows = Vec::new();
            if !polmap.measured.as_slice()[i] {
                return (rows, false);
            }
            let xs: Vec<Difference> = op.x_differences(i, scheme).collect();
            let ys: Vec<Difference> = op.y_differences(i, scheme).collect();
            if xs.is_empty() || ys.is_empty() {
                return (rows, false);
            }
            // the same weight for every pairing keeps border rows balanced
            // against their interior neighbours
            let spread = match scheme {
                Discretization::Forward => T::one(),
                Discretization::ForwardBackward => T::lit(0.5),
            };
            let rho = polmap.rho.as_slice()[i];
            let specular = polmap.reflection.as_slice()[i] == Reflection::Specular;

            let w_col = match config.collinearity_weighting {
                CollinearityWeighting::Uniform => w1,
                CollinearityWeighting::DegreeOfPolarization => w1 * rho,
            };
            if polmap.valid.as_slice()[i] && w_col > T::zero() {
                let mut phase = polmap.phi.as_slice()[i] % T::PI();
                if specular {
                    phase = phase + T::FRAC_PI_2();
                }
                let (s, c) = phase.sin_cos();
                for dx in &xs {
                    for dy in &ys {
                        let entries = row_entries(dx, dy, -c, s);
                        if !entries.is_empty() {
                            rows.push(RawRow {
                                family: RowFamily::Collinearity,
                                pixel: i,
                                weight: w_col * spread,
                                rhs: T::zero(),
                                entries,
                            });
                        }
                    }
                }
            }

            let mut saturated = false;
            if !specular && w2 > T::zero() {
                if let Ok(est) = zenith_from_dop_diffuse(rho, eta) {
                    saturated = est.saturated || est.theta >= T::FRAC_PI_2();
                    if !saturated {
                        let rhs = polmap.i_un.as_slice()[i] / albedo / est.theta.cos() - sz;
                        for dx in &xs {
                            for dy in &ys {
                                let entries = row_entries(dx, dy, -sx, -sy);
                                if !entries.is_empty() {
                                    rows.push(RawRow {
                                        family: RowFamily::Shading,
                                        pixel: i,
                                        weight: w2 * spread,
                                        rhs,
                                        entries,
                                    });
                                }
                            }
                        }
                    }
                }
            }
            (rows, saturated)
        })
        .collect();

    let saturated = Raster::from_vec(w, h, per_pixel.iter().map(|(_, s)| *s).collect())?;
    let mut touched = vec![false; w * h];
    for (rows, _) in &per_pixel {
        for row in rows {
            for &(p, _) in &row.entries {
                touched[p] = true;
            }
        }
    }
    let column_pixel: Vec<usize> = (0..w * h).filter(|&p| touched[p]).collect();
    if column_pixel.is_empty() {
        return Err(Error::ZeroSystem);
    }
    let mut lookup = vec![None; w * h];
    for (j, &p) in column_pixel.iter().enumerate() {
        lookup[p] = Some(j);
    }

    let mut row_ptr = vec![0];
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    let mut b = Vec::new();
    let mut weights = Vec::new();
    let mut family = Vec::new();
    let mut row_pixel = Vec::new();
    for row in per_pixel.into_iter().flat_map(|(rows, _)| rows) {
        for (p, c) in row.entries {
            col_idx.push(lookup[p].expect("touched pixel has a column"));
            values.push(c);
        }
        row_ptr.push(col_idx.len());
        b.push(row.rhs);
        weights.push(row.weight);
        family.push(row.family);
        row_pixel.push(row.pixel);
    }
    if b.iter().chain(&values).chain(&weights).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(
            "assembled system holds non-finite entries".into(),
        ));
    }
    Ok(SparseSystem {
        a: Csr {
            rows: b.len(),
            cols: column_pixel.len(),
            row_ptr,
            col_idx,
            values,
        },
        b,
        weights,
        family,
        row_pixel,
        column_pixel,
        pixel_column: Raster::from_vec(w, h, lookup)?,
        saturated,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Stop once the normal-equation residual has shrunk by this factor.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tolerance: 1e-8,
            max_iterations: 20_000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct HeightSolution<T> {
    /// Heights in pixel units, zero mean over each connected region.
    pub depth: DepthMap<T>,
    pub iterations: usize,
    /// False when the iteration cap was hit; `depth` is then the last iterate.
    pub converged: bool,
    /// `|W (b - A z_k)|` after every iteration, starting at `z_0 = 0`.
    pub residual_history: Vec<T>,
    pub relative_gradient: T,
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Least-squares heights for an assembled system.
pub fn solve_height<T: Real>(system: &SparseSystem<T>, config: &SolverConfig) -> Result<HeightSolution<T>> {
    let a = &system.a;
    if a.nnz() == 0 {
        return Err(Error::ZeroSystem);
    }
    if !(config.tolerance > 0.0) {
        return Err(Error::InvalidParameter("solver tolerance must be positive".into()));
    }

    // Jacobi column scaling of the weighted matrix.
    let mut col_norm = vec![T::zero(); a.cols];
    for r in 0..a.rows {
        let wr = system.weights[r];
        for (c, v) in a.row(r) {
            col_norm[c] = col_norm[c] + (wr * v).powi(2);
        }
    }
    let col_scale: Vec<T> = col_norm
        .iter()
        .map(|&n| if n > T::zero() { T::one() / n.sqrt() } else { T::zero() })
        .collect();
    let mut scaled = a.clone();
    for r in 0..a.rows {
        let wr = system.weights[r];
        for k in a.row_ptr[r]..a.row_ptr[r + 1] {
            scaled.values[k] = wr * a.values[k] * col_scale[a.col_idx[k]];
        }
    }
    if scaled.values.iter().all(|&v| v == T::zero()) {
        return Err(Error::ZeroSystem);
    }
    let scaled_t = scaled.transpose();
    let wb: Vec<T> = system.b.iter().zip(&system.weights).map(|(&b, &w)| w * b).collect();
    let out = solver::cgls(&scaled, &scaled_t, &wb, T::lit(config.tolerance), config.max_iterations);
    let mut x: Vec<T> = out.x.iter().zip(&col_scale).map(|(&y, &d)| y * d).collect();

    // zero mean on every connected group of columns
    let mut parent: Vec<usize> = (0..a.cols).collect();
    for r in 0..a.rows {
        let span = a.row_ptr[r]..a.row_ptr[r + 1];
        if let Some(&first) = a.col_idx[span.clone()].first() {
            for &c in &a.col_idx[span] {
                let (ra, rb) = (find(&mut parent, first), find(&mut parent, c));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    let roots: Vec<usize> = (0..a.cols).map(|c| find(&mut parent, c)).collect();
    let mut sums = vec![T::zero(); a.cols];
    let mut counts = vec![0usize; a.cols];
    for (c, &root) in roots.iter().enumerate() {
        sums[root] = sums[root] + x[c];
        counts[root] += 1;
    }
    for (c, &root) in roots.iter().enumerate() {
        x[c] = x[c] - sums[root] / T::from_usize_lossy(counts[root]);
    }

    let (w, h) = system.dims();
    let mut z = Raster::filled(w, h, T::zero());
    let mut valid = Raster::filled(w, h, false);
    for (&p, &v) in system.column_pixel.iter().zip(&x) {
        z.as_mut_slice()[p] = v;
        valid.as_mut_slice()[p] = true;
    }
    Ok(HeightSolution {
        depth: DepthMap::new(z, valid, None, Frame::PolarizationFrame)?,
        iterations: out.iterations,
        converged: out.converged,
        residual_history: out.residual_history,
        relative_gradient: out.relative_gradient,
    })
}

/// Gradient and unit normals `(-p, -q, 1) / sqrt(p^2 + q^2 + 1)` of a height
/// map. Central differences where both neighbours are valid, one-sided
/// otherwise; gradients are per unit of pixel pitch.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceNormals<T> {
    pub gradient: GradientField<T>,
    pub normal: Raster<[T; 3]>,
    pub valid: Mask,
}

pub fn normals_from_height<T: Real>(depth: &DepthMap<T>) -> SurfaceNormals<T> {
    let (w, h) = depth.dims();
    let pitch = depth.pitch_or_unit();
    let z = &depth.z;
    let ok = |x: usize, y: usize| depth.valid.at(x, y);
    let half = T::lit(0.5);
    let derivative = |x: usize, y: usize, horizontal: bool| -> Option<T> {
        let (prev, next) = if horizontal {
            (
                (x > 0 && ok(x - 1, y)).then(|| z.at(x - 1, y)),
                (x + 1 < w && ok(x + 1, y)).then(|| z.at(x + 1, y)),
            )
        } else {
            (
                (y > 0 && ok(x, y - 1)).then(|| z.at(x, y - 1)),
                (y + 1 < h && ok(x, y + 1)).then(|| z.at(x, y + 1)),
            )
        };
        let c = z.at(x, y);
        match (prev, next) {
            (Some(a), Some(b)) => Some((b - a) * half),
            (None, Some(b)) => Some(b - c),
            (Some(a), None) => Some(c - a),
            (None, None) => None,
        }
    };
    let mut p = Raster::filled(w, h, T::zero());
    let mut q = Raster::filled(w, h, T::zero());
    let mut pv = Raster::filled(w, h, false);
    let mut qv = Raster::filled(w, h, false);
    let mut normal = Raster::filled(w, h, [T::zero(), T::zero(), T::one()]);
    let mut valid = Raster::filled(w, h, false);
    for y in 0..h {
        for x in 0..w {
            if !ok(x, y) {
                continue;
            }
            let gp = derivative(x, y, true).map(|d| d / pitch);
            let gq = derivative(x, y, false).map(|d| d / pitch);
            if let Some(v) = gp {
                p.set(x, y, v);
                pv.set(x, y, true);
            }
            if let Some(v) = gq {
                q.set(x, y, v);
                qv.set(x, y, true);
            }
            if let (Some(a), Some(b)) = (gp, gq) {
                let n = (a * a + b * b + T::one()).sqrt();
                normal.set(x, y, [-a / n, -b / n, T::one() / n]);
                valid.set(x, y, true);
            }
        }
    }
    SurfaceNormals {
        gradient: GradientField {
            p,
            q,
            p_valid: pv,
            q_valid: qv,
        },
        normal,
        valid,
    }
}

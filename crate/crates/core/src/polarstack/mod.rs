//! Polarizer image stacks and their per-pixel sinusoid decomposition.
//!
//! Every pixel's intensity behind a linear polarizer rotated to `angle`
//! follows `I = a + b cos(2 angle) + c sin(2 angle)`. The fit yields the
//! unpolarized intensity `a`, the degree of polarization
//! `sqrt(b^2 + c^2) / a` and the phase `atan2(c, b) / 2` (defined mod pi).

mod register;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::raster::{Mask, Raster};
use crate::real::Real;

pub use register::{estimate_translation, register_stack, Registered, RegistrationTransform};

/// Two polarizer angles closer than this (mod pi) are considered equal.
const ANGLE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct PolarizerFrame<T> {
    /// Polarizer angle in radians, wrapped into `[0, pi)`.
    pub angle: T,
    pub image: Raster<T>,
}

/// Co-registered intensity frames tagged with their polarizer angles.
#[derive(Clone, Debug, PartialEq)]
pub struct PolarizerStack<T> {
    frames: Vec<PolarizerFrame<T>>,
    /// Pixels covered by every frame after registration.
    valid: Mask,
}

fn wrap_pi<T: Real>(angle: T) -> T {
    let pi = T::PI();
    let mut a = angle % pi;
    if a < T::zero() {
        a = a + pi;
    }
    if a >= pi {
        a = a - pi;
    }
    a
}

fn angles_coincide<T: Real>(a: T, b: T) -> bool {
    let d = (a - b).abs();
    let tol = T::lit(ANGLE_TOLERANCE);
    d < tol || (T::PI() - d) < tol
}

impl<T: Real> PolarizerStack<T> {
    /// Builds a stack from `(angle in radians, image)` pairs.
    pub fn new(frames: Vec<(T, Raster<T>)>) -> Result<Self> {
        let Some((_, first)) = frames.first() else {
            return Err(Error::EmptyInput("polarizer stack has no frames"));
        };
        let dims = first.dims();
        let mut out: Vec<PolarizerFrame<T>> = Vec::with_capacity(frames.len());
        for (angle, image) in frames {
            if image.dims() != dims {
                return Err(Error::DimensionMismatch {
                    expected: dims,
                    found: image.dims(),
                });
            }
            if !angle.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "polarizer angle {angle} is not finite"
                )));
            }
            let wrapped = wrap_pi(angle);
            if let Some(prev) = out.iter().find(|f| angles_coincide(f.angle, wrapped)) {
                return Err(Error::DuplicateAngle {
                    first_deg: prev.angle.to_f64_lossy().to_degrees(),
                    second_deg: angle.to_f64_lossy().to_degrees(),
                });
            }
            out.push(PolarizerFrame {
                angle: wrapped,
                image,
            });
        }
        if out.len() < 3 {
            return Err(Error::InsufficientAngles {
                distinct: out.len(),
            });
        }
        Ok(PolarizerStack {
            frames: out,
            valid: Raster::filled(dims.0, dims.1, true),
        })
    }

    pub(crate) fn with_valid(mut self, valid: Mask) -> Self {
        debug_assert_eq!(valid.dims(), self.dims());
        self.valid = valid;
        self
    }

    pub fn frames(&self) -> &[PolarizerFrame<T>] {
        &self.frames
    }

    pub fn valid(&self) -> &Mask {
        &self.valid
    }

    pub fn width(&self) -> usize {
        self.frames[0].image.width()
    }

    pub fn height(&self) -> usize {
        self.frames[0].image.height()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.frames[0].image.dims()
    }

    pub fn angles(&self) -> Vec<T> {
        self.frames.iter().map(|f| f.angle).collect()
    }
}

/// Loads frames from disk. Integer PNGs are mapped to `[0, 1]`, PFMs are
/// passed through. `angles` are in radians.
pub fn load_stack<T: Real>(paths: &[PathBuf], angles: &[T]) -> Result<PolarizerStack<T>> {
    if paths.is_empty() {
        return Err(Error::EmptyInput("no frame paths given"));
    }
    if paths.len() != angles.len() {
        return Err(Error::InvalidParameter(format!(
            "{} frame paths but {} angles",
            paths.len(),
            angles.len()
        )));
    }
    // reject degenerate angle sets before touching the files
    if paths.len() < 3 {
        return Err(Error::InsufficientAngles {
            distinct: paths.len(),
        });
    }
    let frames = paths
        .iter()
        .zip(angles)
        .map(|(p, &a)| Ok((a, io::read_image(p)?)))
        .collect::<Result<Vec<_>>>()?;
    PolarizerStack::new(frames)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestFrame {
    pub path: PathBuf,
    pub angle_deg: f64,
}

/// Stack manifest file: `[[frame]]` tables with `path` and `angle_deg`.
/// Relative paths resolve against the manifest's directory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StackManifest {
    #[serde(rename = "frame", default)]
    pub frames: Vec<ManifestFrame>,
}

impl StackManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let mut manifest: StackManifest = io::read_toml(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for f in &mut manifest.frames {
            if f.path.is_relative() {
                f.path = base.join(&f.path);
            }
        }
        Ok(manifest)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        io::write_toml(path, self)
    }

    pub fn load<T: Real>(&self) -> Result<PolarizerStack<T>> {
        let paths: Vec<PathBuf> = self.frames.iter().map(|f| f.path.clone()).collect();
        let angles: Vec<T> = self
            .frames
            .iter()
            .map(|f| T::lit(f.angle_deg.to_radians()))
            .collect();
        load_stack(&paths, &angles)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Reflection {
    Diffuse,
    Specular,
}

/// How pixels are labelled diffuse or specular after the fit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReflectionPolicy {
    #[default]
    AllDiffuse,
    /// Specular where `i_un` exceeds its `percentile` (in `[0, 1]`) over
    /// valid pixels and the degree of polarization exceeds `min_rho`.
    BrightPolarized { percentile: f64, min_rho: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecomposeConfig {
    /// Minimum unpolarized intensity for a usable fit.
    pub eps_intensity: f64,
    /// Minimum degree of polarization for a defined phase.
    pub eps_rho: f64,
    pub reflection: ReflectionPolicy,
}

impl Default for DecomposeConfig {
    fn default() -> Self {
        DecomposeConfig {
            eps_intensity: 1e-4,
            eps_rho: 1e-3,
            reflection: ReflectionPolicy::AllDiffuse,
        }
    }
}

/// Per-pixel polarization quantities.
#[derive(Clone, Debug, PartialEq)]
pub struct PolarizationMap<T> {
    pub i_un: Raster<T>,
    /// Degree of polarization, clamped to `[0, 1]`.
    pub rho: Raster<T>,
    /// Phase of the intensity maximum in `[0, pi)`. The surface azimuth is
    /// this phase or its opposite (diffuse), or a quarter turn off (specular).
    pub phi: Raster<T>,
    pub reflection: Raster<Reflection>,
    /// Fit usable and phase defined.
    pub valid: Mask,
    /// Fit usable (enough intensity, registered), phase possibly undefined
    /// because the degree of polarization is below threshold. Superset of `valid`.
    pub measured: Mask,
    /// RMS residual of the sinusoid fit over the frames.
    pub fit_residual: Raster<T>,
    /// Pixels whose fitted degree of polarization exceeded one.
    pub rho_clamped: Mask,
}

impl<T: Real> PolarizationMap<T> {
    pub fn dims(&self) -> (usize, usize) {
        self.i_un.dims()
    }

    pub fn clamp_count(&self) -> usize {
        self.rho_clamped.count()
    }

    /// Overrides the reflection labels with an explicit mask (`true` = specular).
    pub fn apply_reflection_mask(&mut self, specular: &Mask) -> Result<()> {
        self.i_un.ensure_dims(specular)?;
        self.reflection = specular.map(|&s| {
            if s {
                Reflection::Specular
            } else {
                Reflection::Diffuse
            }
        });
        Ok(())
    }

    pub fn classify(&mut self, policy: ReflectionPolicy) {
        let (w, h) = self.dims();
        match policy {
            ReflectionPolicy::AllDiffuse => {
                self.reflection = Raster::filled(w, h, Reflection::Diffuse);
            }
            ReflectionPolicy::BrightPolarized {
                percentile,
                min_rho,
            } => {
                let mut values: Vec<T> = self
                    .i_un
                    .as_slice()
                    .iter()
                    .zip(self.valid.as_slice())
                    .filter(|(_, &ok)| ok)
                    .map(|(&v, _)| v)
                    .collect();
                let Some(cut) = percentile_of(&mut values, percentile) else {
                    self.reflection = Raster::filled(w, h, Reflection::Diffuse);
                    return;
                };
                let min_rho = T::lit(min_rho);
                self.reflection = Raster::from_fn(w, h, |x, y| {
                    if self.valid.at(x, y) && self.i_un.at(x, y) > cut && self.rho.at(x, y) > min_rho
                    {
                        Reflection::Specular
                    } else {
                        Reflection::Diffuse
                    }
                });
            }
        }
    }
}

/// Nearest-rank percentile (`q` in `[0, 1]`) of a sample; sorts in place.
pub(crate) fn percentile_of<T: Real>(values: &mut [T], q: f64) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let q = q.clamp(0.0, 1.0);
    let rank = (q * (values.len() - 1) as f64).round() as usize;
    Some(values[rank.min(values.len() - 1)])
}

/// Least-squares projector `(M^T M)^-1 M^T` for the basis
/// `[1, cos 2a, sin 2a]` over the stack angles; 3 rows of length N.
fn sinusoid_projector<T: Real>(angles: &[T]) -> Result<[Vec<T>; 3]> {
    let two = T::lit(2.0);
    let rows: Vec<[T; 3]> = angles
        .iter()
        .map(|&a| [T::one(), (two * a).cos(), (two * a).sin()])
        .collect();
    let mut normal = [[T::zero(); 3]; 3];
    for r in &rows {
        for i in 0..3 {
            for j in 0..3 {
                normal[i][j] = normal[i][j] + r[i] * r[j];
            }
        }
    }
    let inv = invert3(&normal).ok_or(Error::InsufficientAngles {
        distinct: angles.len(),
    })?;
    let mut proj: [Vec<T>; 3] = [
        vec![T::zero(); rows.len()],
        vec![T::zero(); rows.len()],
        vec![T::zero(); rows.len()],
    ];
    for (k, r) in rows.iter().enumerate() {
        for i in 0..3 {
            proj[i][k] = inv[i][0] * r[0] + inv[i][1] * r[1] + inv[i][2] * r[2];
        }
    }
    Ok(proj)
}

pub(crate) fn invert3<T: Real>(m: &[[T; 3]; 3]) -> Option<[[T; 3]; 3]> {
    let c00 = m[1][1] * m[2][2] - m[1][2] * m[2][1];
    let c01 = m[1][2] * m[2][0] - m[1][0] * m[2][2];
    let c02 = m[1][0] * m[2][1] - m[1][1] * m[2][0];
    let det = m[0][0] * c00 + m[0][1] * c01 + m[0][2] * c02;
    if det.abs() <= T::epsilon() * T::lit(1e3) * m[0][0].abs().max(T::one()).powi(3) {
        return None;
    }
    let inv_det = T::one() / det;
    Some([
        [
            c00 * inv_det,
            (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * inv_det,
            (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * inv_det,
        ],
        [
            c01 * inv_det,
            (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * inv_det,
            (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * inv_det,
        ],
        [
            c02 * inv_det,
            (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * inv_det,
            (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * inv_det,
        ],
    ])
}

#[derive(Clone, Copy)]
struct PixelFit<T> {
    i_un: T,
    rho: T,
    phi: T,
    residual: T,
    valid: bool,
    measured: bool,
    clamped: bool,
}

/// Fits the polarizer sinusoid at every pixel.
pub fn decompose<T: Real>(
    stack: &PolarizerStack<T>,
    config: &DecomposeConfig,
) -> Result<PolarizationMap<T>> {
    let angles = stack.angles();
    let proj = sinusoid_projector(&angles)?;
    let two = T::lit(2.0);
    let basis: Vec<(T, T)> = angles
        .iter()
        .map(|&a| ((two * a).cos(), (two * a).sin()))
        .collect();
    let eps_int = T::lit(config.eps_intensity);
    let eps_rho = T::lit(config.eps_rho);
    let (w, h) = stack.dims();
    let n_frames = T::from_usize_lossy(angles.len());
    let frames = stack.frames();
    let stack_valid = stack.valid();

    let fits: Vec<PixelFit<T>> = (0..w * h)
        .into_par_iter()
        .map(|idx| {
            let (mut a, mut b, mut c) = (T::zero(), T::zero(), T::zero());
            for (k, f) in frames.iter().enumerate() {
                let v = f.image.as_slice()[idx];
                a = a + proj[0][k] * v;
                b = b + proj[1][k] * v;
                c = c + proj[2][k] * v;
            }
            let mut sq = T::zero();
            for (f, &(cs, sn)) in frames.iter().zip(&basis) {
                let r = f.image.as_slice()[idx] - (a + b * cs + c * sn);
                sq = sq + r * r;
            }
            let residual = (sq / n_frames).sqrt();
            let amplitude = b.hypot(c);
            let mut rho = if a > T::zero() { amplitude / a } else { T::zero() };
            let mut measured = stack_valid.as_slice()[idx] && a >= eps_int;
            let mut valid = measured && rho >= eps_rho;
            let phi = if a >= eps_int && rho >= eps_rho {
                let mut p = c.atan2(b) / two;
                if p < T::zero() {
                    p = p + T::PI();
                }
                if p >= T::PI() {
                    p = p - T::PI();
                }
                p
            } else {
                T::zero()
            };
            let clamped = rho > T::one();
            if clamped {
                rho = T::one();
            }
            if !rho.is_finite() || !a.is_finite() {
                valid = false;
                measured = false;
            }
            PixelFit {
                i_un: a,
                rho,
                phi,
                residual,
                valid,
                measured,
                clamped,
            }
        })
        .collect();

    let pick = |f: fn(&PixelFit<T>) -> T| {
        Raster::from_vec(w, h, fits.iter().map(f).collect()).expect("sized from stack")
    };
    let mut map = PolarizationMap {
        i_un: pick(|p| p.i_un),
        rho: pick(|p| p.rho),
        phi: pick(|p| p.phi),
        reflection: Raster::filled(w, h, Reflection::Diffuse),
        valid: Raster::from_vec(w, h, fits.iter().map(|p| p.valid).collect())?,
        measured: Raster::from_vec(w, h, fits.iter().map(|p| p.measured).collect())?,
        fit_residual: pick(|p| p.residual),
        rho_clamped: Raster::from_vec(w, h, fits.iter().map(|p| p.clamped).collect())?,
    };
    map.classify(config.reflection);
    Ok(map)
}

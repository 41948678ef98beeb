//! Analytic test surfaces and the forward models that turn them into
//! polarizer stacks and photogrammetry-like depth maps.
//!
//! Lateral quantities (centers, wavelengths) are in pixels, heights and
//! radii in object units (mm). Image `x` points right and `y` down; normals
//! are `(-p, -q, 1) / |.|` with `p, q` the object-space slopes. The azimuth
//! is measured from the image `y` axis towards `x`, `atan2(n_x, n_y)`; the
//! polarization phase is the azimuth modulo `pi`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camproj::{CameraModel, PointCloud};
use crate::error::{Error, Result};
use crate::fresnel::{dop_diffuse, Material};
use crate::fuse::{interpolate_bilinear, lattice_positions, FusionGrid};
use crate::heightsolve::{GradientField, LightSource};
use crate::polarstack::PolarizerStack;
use crate::raster::{gaussian_smooth_masked, DepthMap, Frame, Mask, Raster};
use crate::real::Real;

/// Surface catalog. Heights add up in [`SurfaceKind::Composite`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SurfaceKind {
    /// `z = a X + b Y + c` with `X, Y` in object units.
    Plane { a: f64, b: f64, c: f64 },
    /// Upper cap of a sphere resting on `z = 0`, centered at pixel `center`.
    SphereCap {
        radius: f64,
        center: [f64; 2],
        cap_height: f64,
    },
    /// `base` plane plus `amplitude * sin(2 pi u / wavelength)`, where `u`
    /// is the pixel coordinate along `direction` (radians from the x axis).
    SinusoidRelief {
        base: [f64; 3],
        amplitude: f64,
        wavelength: f64,
        direction: f64,
    },
    /// `amplitude * r^2 / radius^2`, `r` in pixels from `center`.
    Bowl {
        amplitude: f64,
        center: [f64; 2],
        radius: f64,
    },
    Composite { parts: Vec<SurfaceKind> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSpec {
    pub surface: SurfaceKind,
    pub width: usize,
    pub height: usize,
    /// Object units per pixel.
    pub pixel_pitch: f64,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
    }
}

impl SurfaceKind {
    pub fn validate(&self) -> Result<()> {
        match self {
            SurfaceKind::Plane { a, b, c } => {
                if [a, b, c].iter().all(|v| v.is_finite()) {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter("plane coefficients must be finite".into()))
                }
            }
            SurfaceKind::SphereCap {
                radius, cap_height, ..
            } => {
                positive("sphere radius", *radius)?;
                positive("cap height", *cap_height)?;
                if cap_height > radius {
                    return Err(Error::InvalidParameter(
                        "cap height cannot exceed the sphere radius".into(),
                    ));
                }
                Ok(())
            }
            SurfaceKind::SinusoidRelief {
                amplitude,
                wavelength,
                ..
            } => {
                positive("relief amplitude", *amplitude)?;
                positive("relief wavelength", *wavelength)
            }
            SurfaceKind::Bowl { radius, .. } => positive("bowl radius", *radius),
            SurfaceKind::Composite { parts } => parts.iter().try_for_each(SurfaceKind::validate),
        }
    }

    /// Height and object-space slopes at pixel `(x, y)`.
    fn eval<T: Real>(&self, x: T, y: T, pitch: T) -> (T, T, T) {
        let two_pi = T::lit(2.0) * T::PI();
        match self {
            SurfaceKind::Plane { a, b, c } => {
                let (a, b) = (T::lit(*a), T::lit(*b));
                (a * x * pitch + b * y * pitch + T::lit(*c), a, b)
            }
            SurfaceKind::SphereCap {
                radius,
                center,
                cap_height,
            } => {
                let r = T::lit(*radius);
                let dx = (x - T::lit(center[0])) * pitch;
                let dy = (y - T::lit(center[1])) * pitch;
                let base = r - T::lit(*cap_height);
                let s2 = r * r - dx * dx - dy * dy;
                if s2 <= base * base {
                    return (T::zero(), T::zero(), T::zero());
                }
                let s = s2.sqrt();
                (s - base, -dx / s, -dy / s)
            }
            SurfaceKind::SinusoidRelief {
                base,
                amplitude,
                wavelength,
                direction,
            } => {
                let (sd, cd) = T::lit(*direction).sin_cos();
                let k = two_pi / T::lit(*wavelength);
                let u = x * cd + y * sd;
                let (sv, cv) = (k * u).sin_cos();
                let amp = T::lit(*amplitude);
                let (a, b) = (T::lit(base[0]), T::lit(base[1]));
                let z = a * x * pitch + b * y * pitch + T::lit(base[2]) + amp * sv;
                let slope = amp * k * cv / pitch;
                (z, a + slope * cd, b + slope * sd)
            }
            SurfaceKind::Bowl {
                amplitude,
                center,
                radius,
            } => {
                let (dx, dy) = (x - T::lit(center[0]), y - T::lit(center[1]));
                let c = T::lit(*amplitude) / (T::lit(*radius) * T::lit(*radius));
                let two = T::lit(2.0);
                (c * (dx * dx + dy * dy), two * c * dx / pitch, two * c * dy / pitch)
            }
            SurfaceKind::Composite { parts } => parts.iter().fold(
                (T::zero(), T::zero(), T::zero()),
                |(z, p, q), part| {
                    let (dz, dp, dq) = part.eval(x, y, pitch);
                    (z + dz, p + dp, q + dq)
                },
            ),
        }
    }
}

impl SurfaceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width < 8 || self.height < 8 {
            return Err(Error::InvalidParameter(format!(
                "synthetic surfaces need at least 8x8 pixels, got {}x{}",
                self.width, self.height
            )));
        }
        positive("pixel pitch", self.pixel_pitch)?;
        self.surface.validate()
    }
}

/// Analytic ground truth of a surface.
#[derive(Clone, Debug)]
pub struct TruthRender<T> {
    pub depth: DepthMap<T>,
    /// Object-space slopes.
    pub gradient: GradientField<T>,
    pub normal: Raster<[T; 3]>,
    /// Angle between normal and viewing axis.
    pub zenith: Raster<T>,
    /// `atan2(n_x, n_y)` in `(-pi, pi]`.
    pub azimuth: Raster<T>,
    /// False where the normal is parallel to the viewing axis.
    pub azimuth_defined: Mask,
}

pub fn render_truth<T: Real>(spec: &SurfaceSpec) -> Result<TruthRender<T>> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let pitch = T::lit(spec.pixel_pitch);
    let samples: Vec<(T, T, T)> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            spec.surface
                .eval(T::from_usize_lossy(i % w), T::from_usize_lossy(i / w), pitch)
        })
        .collect();
    let z = Raster::from_vec(w, h, samples.iter().map(|s| s.0).collect())?;
    let p = Raster::from_vec(w, h, samples.iter().map(|s| s.1).collect())?;
    let q = Raster::from_vec(w, h, samples.iter().map(|s| s.2).collect())?;
    let normal = Raster::from_vec(
        w,
        h,
        samples
            .iter()
            .map(|&(_, p, q)| {
                let n = (p * p + q * q + T::one()).sqrt();
                [-p / n, -q / n, T::one() / n]
            })
            .collect(),
    )?;
    let zenith = normal.map(|n| n[2].min(T::one()).acos());
    let azimuth_defined = normal.map(|n| n[0] != T::zero() || n[1] != T::zero());
    let azimuth = normal.map(|n| n[0].atan2(n[1]));
    let all = Raster::filled(w, h, true);
    Ok(TruthRender {
        depth: DepthMap::new(z, all.clone(), Some(pitch), Frame::ObjectFrame)?,
        gradient: GradientField {
            p,
            q,
            p_valid: all.clone(),
            q_valid: all,
        },
        normal,
        zenith,
        azimuth,
        azimuth_defined,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    /// Additive Gaussian noise on every rendered frame.
    pub intensity_sigma: f64,
    /// Additive Gaussian noise on photogrammetric heights.
    pub depth_sigma: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if self.intensity_sigma >= 0.0 && self.depth_sigma >= 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter("noise sigmas must be non-negative".into()))
        }
    }
}

const INTENSITY_STREAM: u64 = 0;
const DEPTH_STREAM: u64 = 1 << 62;

/// Independent generator for one pixel, so results do not depend on the
/// parallel schedule.
fn pixel_rng(seed: u64, stream: u64, pixel: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream + pixel as u64);
    rng
}

/// Intensity behind a linear polarizer at `angle`:
/// `i_un (1 + rho cos(2 (angle - phi)))`.
pub fn polarizer_intensity<T: Real>(i_un: T, rho: T, phi: T, angle: T) -> T {
    i_un * (T::one() + rho * (T::lit(2.0) * (angle - phi)).cos())
}

/// Diffuse polarization of a rendered surface, per pixel.
#[derive(Clone, Debug)]
pub struct ForwardPolarization<T> {
    pub i_un: Raster<T>,
    pub rho: Raster<T>,
    pub phi: Raster<T>,
}

/// Unit-albedo Lambertian intensity `max(0, n . s)`, diffuse degree of
/// polarization and phase for each pixel.
pub fn polarization_truth<T: Real>(
    truth: &TruthRender<T>,
    material: &Material<T>,
    light: &LightSource<T>,
) -> Result<ForwardPolarization<T>> {
    let s = light.vector();
    let eta = material.eta();
    let limit = T::FRAC_PI_2() - T::lit(1e-9);
    let theta_ok = truth.zenith.as_slice().iter().all(|&t| t < limit);
    if !theta_ok {
        return Err(Error::OutOfDomain("surface has grazing normals".into()));
    }
    let i_un = truth
        .normal
        .map(|n| (n[0] * s[0] + n[1] * s[1] + n[2] * s[2]).max(T::zero()));
    let rho_vals: Result<Vec<T>> = truth
        .zenith
        .as_slice()
        .iter()
        .map(|&t| dop_diffuse(t, eta))
        .collect();
    let (w, h) = truth.zenith.dims();
    let rho = Raster::from_vec(w, h, rho_vals?)?;
    let phi = Raster::from_fn(w, h, |x, y| {
        if truth.azimuth_defined.at(x, y) {
            let a = truth.azimuth.at(x, y) % T::PI();
            if a < T::zero() {
                a + T::PI()
            } else {
                a
            }
        } else {
            T::zero()
        }
    });
    Ok(ForwardPolarization { i_un, rho, phi })
}

/// Renders a polarizer stack of a diffuse surface at the given angles.
pub fn forward_polarize<T: Real>(
    truth: &TruthRender<T>,
    material: &Material<T>,
    light: &LightSource<T>,
    angles: &[T],
    noise: &NoiseSpec,
) -> Result<PolarizerStack<T>> {
    noise.validate()?;
    let pol = polarization_truth(truth, material, light)?;
    let (w, h) = pol.i_un.dims();
    let sigma = noise.intensity_sigma;
    let normal = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let per_pixel: Vec<Vec<T>> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let (iu, r, p) = (pol.i_un.as_slice()[i], pol.rho.as_slice()[i], pol.phi.as_slice()[i]);
            let mut rng = (sigma > 0.0).then(|| pixel_rng(noise.seed, INTENSITY_STREAM, i));
            angles
                .iter()
                .map(|&a| {
                    let v = polarizer_intensity(iu, r, p, a);
                    match rng.as_mut() {
                        Some(rng) => (v + T::lit(normal.sample(rng))).max(T::zero()),
                        None => v,
                    }
                })
                .collect()
        })
        .collect();
    let frames: Result<Vec<(T, Raster<T>)>> = angles
        .iter()
        .enumerate()
        .map(|(k, &a)| Ok((a, Raster::from_vec(w, h, per_pixel.iter().map(|v| v[k]).collect())?)))
        .collect();
    PolarizerStack::new(frames?)
}

/// Parameters of the photogrammetry emulation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MvsLikeSpec {
    /// Gaussian blur in pixels applied before subsampling.
    pub blur_sigma: f64,
    /// Subsampling step in pixels, at least 1.
    pub factor: usize,
    /// Camera distance above the mean height, in object units. Defaults to
    /// ten times the larger image side.
    pub standoff: Option<f64>,
    /// Adds a second point behind every visible one, this far along the ray.
    pub hidden_offset: Option<f64>,
}

impl Default for MvsLikeSpec {
    fn default() -> Self {
        MvsLikeSpec {
            blur_sigma: 0.0,
            factor: 1,
            standoff: None,
            hidden_offset: None,
        }
    }
}

/// Emulated photogrammetric surface.
#[derive(Clone, Debug)]
pub struct MvsLike<T> {
    /// Degraded heights on the full pixel grid.
    pub depth: DepthMap<T>,
    /// Distance from the projection center to each surface point.
    pub range: DepthMap<T>,
    /// Surface points at the subsampling lattice (plus hidden ones).
    pub cloud: PointCloud<T>,
    /// Nadir camera mapping every visible cloud point onto its pixel.
    pub camera: CameraModel<T>,
}

/// Blurs, subsamples, perturbs and re-upsamples a height map, and emits the
/// lattice as a point cloud seen by a synthetic nadir camera.
pub fn make_mvs_like<T: Real>(z_true: &DepthMap<T>, spec: &MvsLikeSpec, noise: &NoiseSpec) -> Result<MvsLike<T>> {
    noise.validate()?;
    if spec.factor < 1 {
        return Err(Error::InvalidParameter("subsampling factor must be at least 1".into()));
    }
    if !(spec.blur_sigma >= 0.0) {
        return Err(Error::InvalidParameter("blur sigma must be non-negative".into()));
    }
    let (w, h) = z_true.dims();
    let pitch = z_true.pitch_or_unit();
    let (blurred, _) = gaussian_smooth_masked(&z_true.z, &z_true.valid, T::lit(spec.blur_sigma))?;
    let xs = lattice_positions(w, spec.factor);
    let ys = lattice_positions(h, spec.factor);
    let normal = Normal::new(0.0, noise.depth_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let nodes = Raster::from_fn(xs.len(), ys.len(), |i, j| {
        let v = blurred.at(xs[i], ys[j]);
        if noise.depth_sigma > 0.0 {
            let mut rng = pixel_rng(noise.seed, DEPTH_STREAM, j * xs.len() + i);
            v + T::lit(normal.sample(&mut rng))
        } else {
            v
        }
    });
    let grid = FusionGrid {
        spacing: spec.factor,
        xs: xs.clone(),
        ys: ys.clone(),
        valid: Raster::filled(xs.len(), ys.len(), true),
        dz: nodes,
        sigma: 0.0,
    };
    let z = interpolate_bilinear(&grid, (w, h))?;
    let depth = DepthMap::new(z, z_true.valid.clone(), Some(pitch), Frame::ObjectFrame)?;

    let mean = depth.valid_mean().ok_or(Error::NoValidPixels("height map"))?;
    let top = depth.valid_values().fold(T::neg_infinity(), T::max);
    let extent = T::from_usize_lossy(w.max(h)) * pitch;
    let standoff = spec.standoff.map(T::lit).unwrap_or(extent * T::lit(10.0));
    if !(mean + standoff > top) {
        return Err(Error::InvalidParameter("camera standoff leaves surface points behind the camera".into()));
    }
    let principal = [
        T::from_usize_lossy(w - 1) * T::lit(0.5),
        T::from_usize_lossy(h - 1) * T::lit(0.5),
    ];
    let identity = [
        [T::one(), T::zero(), T::zero()],
        [T::zero(), T::one(), T::zero()],
        [T::zero(), T::zero(), T::one()],
    ];
    let center = [principal[0] * pitch, principal[1] * pitch, mean + standoff];
    let camera = CameraModel::pinhole(standoff / pitch, principal, center, identity, (w, h))?;

    let surface_point = |x: usize, y: usize| -> [T; 3] {
        let zv = depth.z.at(x, y);
        let d = center[2] - zv;
        [
            center[0] + (T::from_usize_lossy(x) - principal[0]) * d / camera.f,
            center[1] + (T::from_usize_lossy(y) - principal[1]) * d / camera.f,
            zv,
        ]
    };
    let distance = |p: [T; 3]| {
        ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2) + (p[2] - center[2]).powi(2)).sqrt()
    };
    let range_z = Raster::from_fn(w, h, |x, y| distance(surface_point(x, y)));
    let range = DepthMap::new(range_z, depth.valid.clone(), None, Frame::ImageFrame)?;

    let mut points = Vec::new();
    for &y in &ys {
        for &x in &xs {
            if !depth.valid.at(x, y) {
                continue;
            }
            let p = surface_point(x, y);
            points.push(p);
            if let Some(off) = spec.hidden_offset {
                let d = distance(p);
                let t = (d + T::lit(off)) / d;
                points.push([
                    center[0] + (p[0] - center[0]) * t,
                    center[1] + (p[1] - center[1]) * t,
                    center[2] + (p[2] - center[2]) * t,
                ]);
            }
        }
    }
    Ok(MvsLike {
        depth,
        range,
        cloud: PointCloud::new(points)?,
        camera,
    })
}

//! Degree of polarization as a function of zenith angle and refractive
//! index, for diffuse and specular reflection, and its inverses.
//!
//! Diffuse reflection:
//!
//! ```text
//!            (n - 1/n)^2 sin^2 t
//! rho = -------------------------------------------------------------
//!       2 + 2n^2 - (n + 1/n)^2 sin^2 t + 4 cos t sqrt(n^2 - sin^2 t)
//! ```
//!
//! Specular reflection:
//!
//! ```text
//!           2 sin^2 t cos t sqrt(n^2 - sin^2 t)
//! rho = -----------------------------------------
//!       n^2 - sin^2 t - n^2 sin^2 t + 2 sin^4 t
//! ```
//!
//! The diffuse curve is strictly increasing on `[0, pi/2)`; the specular one
//! rises to exactly 1 at the Brewster angle `atan(n)` and falls back to 0.
//! Inverses are computed by bisection on the monotone pieces.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polarstack::{PolarizationMap, Reflection};
use crate::raster::{Mask, Raster};
use crate::real::Real;

/// Refractive index of the observed material, `1 < eta <= 3`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Material<T> {
    eta: T,
}

impl<T: Real> Material<T> {
    pub fn new(eta: T) -> Result<Self> {
        if eta > T::one() && eta <= T::lit(3.0) {
            Ok(Material { eta })
        } else {
            Err(Error::InvalidParameter(format!(
                "refractive index must lie in (1, 3], got {eta}"
            )))
        }
    }

    pub fn eta(&self) -> T {
        self.eta
    }
}

impl<T: Real> Default for Material<T> {
    fn default() -> Self {
        Material { eta: T::lit(1.5) }
    }
}

/// Which side of the Brewster angle a specular inversion returns.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    #[default]
    BelowBrewster,
    AboveBrewster,
}

/// Inverted zenith angle, flagged when the observed degree of polarization
/// exceeded the physical ceiling and the angle was saturated at `pi/2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZenithEstimate<T> {
    pub theta: T,
    pub saturated: bool,
}

fn diffuse_unchecked<T: Real>(theta: T, eta: T) -> T {
    let s2 = theta.sin().powi(2);
    let c = theta.cos();
    let inv = T::one() / eta;
    let num = (eta - inv).powi(2) * s2;
    let two = T::lit(2.0);
    let den = two + two * eta * eta - (eta + inv).powi(2) * s2
        + T::lit(4.0) * c * (eta * eta - s2).sqrt();
    num / den
}

fn specular_unchecked<T: Real>(theta: T, eta: T) -> T {
    let s = theta.sin();
    let s2 = s * s;
    let c = theta.cos();
    let e2 = eta * eta;
    let two = T::lit(2.0);
    let num = two * s2 * c * (e2 - s2).sqrt();
    let den = e2 - s2 - e2 * s2 + two * s2 * s2;
    num / den
}

fn check_eta<T: Real>(eta: T) -> Result<()> {
    if eta > T::one() && eta.is_finite() {
        Ok(())
    } else {
        Err(Error::OutOfDomain(format!("refractive index {eta} must exceed 1")))
    }
}

/// Diffuse degree of polarization for `0 <= theta < pi/2`.
pub fn dop_diffuse<T: Real>(theta: T, eta: T) -> Result<T> {
    check_eta(eta)?;
    if !(theta >= T::zero() && theta < T::FRAC_PI_2()) {
        return Err(Error::OutOfDomain(format!(
            "zenith {theta} outside [0, pi/2)"
        )));
    }
    Ok(diffuse_unchecked(theta, eta))
}

/// Specular degree of polarization for `0 <= theta < pi/2`; equals 1 at
/// the Brewster angle.
pub fn dop_specular<T: Real>(theta: T, eta: T) -> Result<T> {
    check_eta(eta)?;
    if !(theta >= T::zero() && theta < T::FRAC_PI_2()) {
        return Err(Error::OutOfDomain(format!(
            "zenith {theta} outside [0, pi/2)"
        )));
    }
    Ok(specular_unchecked(theta, eta))
}

/// Supremum of the diffuse degree of polarization, reached as the zenith
/// angle approaches `pi/2`.
pub fn rho_max_diffuse<T: Real>(eta: T) -> T {
    diffuse_unchecked(T::FRAC_PI_2(), eta)
}

pub fn brewster_angle<T: Real>(eta: T) -> T {
    eta.atan()
}

/// Bisects an increasing (`rising = true`) or decreasing function on
/// `[lo, hi]` for `f(x) = target`, down to adjacent floating point values.
fn bisect<T: Real>(f: impl Fn(T) -> T, target: T, mut lo: T, mut hi: T, rising: bool) -> T {
    let two = T::lit(2.0);
    for _ in 0..2000 {
        let mid = (lo + hi) / two;
        if mid <= lo || mid >= hi {
            break;
        }
        let below = f(mid) < target;
        if below == rising {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // return the endpoint with the smaller residual
    if (f(lo) - target).abs() <= (f(hi) - target).abs() {
        lo
    } else {
        hi
    }
}

/// Zenith angle whose diffuse degree of polarization equals `rho`.
///
/// Values above the ceiling `rho_max_diffuse(eta)` saturate to `pi/2`.
pub fn zenith_from_dop_diffuse<T: Real>(rho: T, eta: T) -> Result<ZenithEstimate<T>> {
    check_eta(eta)?;
    if !(rho >= T::zero() && rho <= T::one()) {
        return Err(Error::OutOfDomain(format!(
            "degree of polarization {rho} outside [0, 1]"
        )));
    }
    if rho == T::zero() {
        return Ok(ZenithEstimate {
            theta: T::zero(),
            saturated: false,
        });
    }
    if rho >= rho_max_diffuse(eta) {
        return Ok(ZenithEstimate {
            theta: T::FRAC_PI_2(),
            saturated: rho > rho_max_diffuse(eta),
        });
    }
    let theta = bisect(|t| diffuse_unchecked(t, eta), rho, T::zero(), T::FRAC_PI_2(), true);
    Ok(ZenithEstimate {
        theta,
        saturated: false,
    })
}

/// Closed-form `cos(theta)` for the diffuse model.
///
/// Agrees with [`zenith_from_dop_diffuse`] to better than `1e-6` rad over
/// the physical range; the bisection result stays authoritative.
pub fn cos_zenith_closed_form<T: Real>(rho: T, eta: T) -> T {
    let (r, n) = (rho, eta);
    let (r2, n2) = (r * r, n * n);
    let n3 = n2 * n;
    let n4 = n2 * n2;
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    let num = two * r + two * n2 * r - two * n2 + n4 + r2 + four * n2 * r2 - n4 * r2
        - four * n3 * r * (T::one() - r2).max(T::zero()).sqrt()
        + T::one();
    let den = n4 * r2 + two * n4 * r + n4 + T::lit(6.0) * n2 * r2 + four * n2 * r - two * n2
        + r2
        + two * r
        + T::one();
    (num / den).max(T::zero()).min(T::one()).sqrt()
}

/// Zenith angle on the requested side of the Brewster angle whose specular
/// degree of polarization equals `rho`.
pub fn zenith_from_dop_specular<T: Real>(rho: T, eta: T, branch: Branch) -> Result<T> {
    check_eta(eta)?;
    if !(rho >= T::zero()) || !rho.is_finite() {
        return Err(Error::OutOfDomain(format!(
            "degree of polarization {rho} is negative"
        )));
    }
    let brewster = brewster_angle(eta);
    let peak = specular_unchecked(brewster, eta);
    if rho > T::one() && rho > peak {
        return Err(Error::NoRoot {
            rho: rho.to_f64_lossy(),
        });
    }
    // the curve is flat at its peak: values within rounding of it are the peak
    if rho >= peak.min(T::one()) - T::lit(4.0) * T::epsilon() {
        return Ok(brewster);
    }
    let f = |t: T| specular_unchecked(t, eta);
    Ok(match branch {
        Branch::BelowBrewster => bisect(f, rho, T::zero(), brewster, true),
        Branch::AboveBrewster => bisect(f, rho, brewster, T::FRAC_PI_2(), false),
    })
}

/// Per-pixel zenith angles.
#[derive(Clone, Debug, PartialEq)]
pub struct ZenithMap<T> {
    /// Radians in `[0, pi/2]`.
    pub theta: Raster<T>,
    pub valid: Mask,
    /// Degree of polarization above the physical ceiling, angle set to `pi/2`.
    pub saturated: Mask,
}

/// Inverts every valid pixel of a polarization map, using the diffuse or
/// specular model according to its reflection label.
pub fn zenith_map<T: Real>(
    polmap: &PolarizationMap<T>,
    material: &Material<T>,
    branch: Branch,
) -> ZenithMap<T> {
    let (w, h) = polmap.dims();
    let eta = material.eta();
    let results: Vec<(T, bool, bool)> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            if !polmap.valid.as_slice()[i] {
                return (T::zero(), false, false);
            }
            let rho = polmap.rho.as_slice()[i];
            match polmap.reflection.as_slice()[i] {
                Reflection::Diffuse => match zenith_from_dop_diffuse(rho, eta) {
                    Ok(z) => (z.theta, true, z.saturated),
                    Err(_) => (T::zero(), false, false),
                },
                Reflection::Specular => match zenith_from_dop_specular(rho, eta, branch) {
                    Ok(theta) => (theta, true, false),
                    Err(_) => (T::zero(), false, false),
                },
            }
        })
        .collect();
    ZenithMap {
        theta: Raster::from_vec(w, h, results.iter().map(|r| r.0).collect()).expect("sized"),
        valid: Raster::from_vec(w, h, results.iter().map(|r| r.1).collect()).expect("sized"),
        saturated: Raster::from_vec(w, h, results.iter().map(|r| r.2).collect()).expect("sized"),
    }
}

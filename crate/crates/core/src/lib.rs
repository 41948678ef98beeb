//! Height recovery from polarizer image stacks and fusion with
//! photogrammetric depth maps.
//!
//! The crate is organized by processing stage:
//!
//! * [`polarstack`]: load, register and decompose polarizer stacks
//! * [`fresnel`]: degree of polarization versus zenith angle
//! * [`heightsolve`]: sparse least-squares height from polarization
//! * [`camproj`]: point cloud projection, visibility and hole filling
//! * [`fuse`]: grid-based combination of the two height maps
//! * [`synthoracle`]: analytic surfaces and forward rendering
//! * [`evalkit`]: plane-fit and profile metrics
//! * [`pipeline`]: file-based stage runners used by the command line tool
//!
//! All numeric code is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar type for common use.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod camproj;
pub mod error;
pub mod evalkit;
pub mod fresnel;
pub mod fuse;
pub mod heightsolve;
pub mod io;
pub mod pipeline;
pub mod polarstack;
pub mod raster;
pub mod real;
pub mod synthoracle;

pub use error::{Error, Result};
pub use raster::{DepthMap, Frame, Mask, Raster};
pub use real::Real;

pub type Raster64 = Raster<f64>;
pub type DepthMap64 = DepthMap<f64>;
pub type DepthMap32 = DepthMap<f32>;
pub type PolarizerStack64 = polarstack::PolarizerStack<f64>;
pub type PolarizerStack32 = polarstack::PolarizerStack<f32>;
pub type PolarizationMap64 = polarstack::PolarizationMap<f64>;
pub type PolarizationMap32 = polarstack::PolarizationMap<f32>;
pub type LightSource64 = heightsolve::LightSource<f64>;
pub type SparseSystem64 = heightsolve::SparseSystem<f64>;
pub type GradientField64 = heightsolve::GradientField<f64>;
pub type CameraModel64 = camproj::CameraModel<f64>;
pub type PointCloud64 = camproj::PointCloud<f64>;
pub type FusionGrid64 = fuse::FusionGrid<f64>;
pub type TruthRender64 = synthoracle::TruthRender<f64>;
pub type Profile64 = evalkit::Profile<f64>;

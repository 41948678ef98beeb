//! Row-major 2D rasters, validity masks and depth maps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// Dense row-major 2D grid. Pixel `(x, y)` has column `x` and row `y`,
/// with `y` growing downward.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

pub type Mask = Raster<bool>;

impl<T: Clone> Raster<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Raster {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T> Raster<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidParameter(format!(
                "raster buffer holds {} values, {}x{} needs {}",
                data.len(),
                width,
                height,
                width * height
            )));
        }
        Ok(Raster {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Raster {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        debug_assert!(x < self.width && y < self.height);
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[y * self.width + x]
    }

    #[inline]
    pub fn get_mut(&mut self, x: usize, y: usize) -> &mut T {
        let w = self.width;
        &mut self.data[y * w + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: T) {
        let w = self.width;
        self.data[y * w + x] = value;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Raster<U> {
        Raster {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn same_dims<U>(&self, other: &Raster<U>) -> bool {
        self.dims() == other.dims()
    }

    pub fn ensure_dims<U>(&self, other: &Raster<U>) -> Result<()> {
        if self.same_dims(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: other.dims(),
            })
        }
    }
}

impl<T: Copy> Raster<T> {
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }
}

impl Mask {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn and(&self, other: &Mask) -> Result<Mask> {
        self.ensure_dims(other)?;
        Ok(Raster {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a && b)
                .collect(),
        })
    }
}

/// Which coordinate system a height raster lives in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Frame {
    /// Integrated from polarization gradients: pixel-grid units, arbitrary gauge.
    PolarizationFrame,
    /// Range from the projection center, rasterized on the polarized image.
    ImageFrame,
    /// Metric heights in object space.
    ObjectFrame,
}

/// Height (or range) raster with a validity mask and optional pixel pitch.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap<T> {
    pub z: Raster<T>,
    pub valid: Mask,
    /// Object-space size of one pixel, when known.
    pub pixel_pitch: Option<T>,
    pub frame: Frame,
}

impl<T: Real> DepthMap<T> {
    pub fn new(z: Raster<T>, valid: Mask, pixel_pitch: Option<T>, frame: Frame) -> Result<Self> {
        z.ensure_dims(&valid)?;
        if let Some(p) = pixel_pitch {
            if !(p > T::zero()) || !p.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "pixel pitch must be positive, got {p}"
                )));
            }
        }
        for (v, ok) in z.as_slice().iter().zip(valid.as_slice()) {
            if *ok && !v.is_finite() {
                return Err(Error::InvalidParameter(
                    "depth map holds a non-finite value on a valid pixel".into(),
                ));
            }
        }
        Ok(DepthMap {
            z,
            valid,
            pixel_pitch,
            frame,
        })
    }

    /// Fully valid map.
    pub fn dense(z: Raster<T>, pixel_pitch: Option<T>, frame: Frame) -> Result<Self> {
        let valid = Raster::filled(z.width(), z.height(), true);
        Self::new(z, valid, pixel_pitch, frame)
    }

    pub fn dims(&self) -> (usize, usize) {
        self.z.dims()
    }

    pub fn width(&self) -> usize {
        self.z.width()
    }

    pub fn height(&self) -> usize {
        self.z.height()
    }

    pub fn pitch_or_unit(&self) -> T {
        self.pixel_pitch.unwrap_or_else(T::one)
    }

    /// Values of all valid pixels in row-major order.
    pub fn valid_values(&self) -> impl Iterator<Item = T> + '_ {
        self.z
            .as_slice()
            .iter()
            .zip(self.valid.as_slice())
            .filter(|(_, &ok)| ok)
            .map(|(&v, _)| v)
    }

    pub fn valid_mean(&self) -> Option<T> {
        let mut sum = T::zero();
        let mut n = 0usize;
        for v in self.valid_values() {
            sum = sum + v;
            n += 1;
        }
        (n > 0).then(|| sum / T::from_usize_lossy(n))
    }

    /// Subtracts the valid-pixel mean from every valid pixel.
    pub fn remove_mean(&mut self) {
        if let Some(mean) = self.valid_mean() {
            let valid = self.valid.as_slice().to_vec();
            for (v, ok) in self.z.as_mut_slice().iter_mut().zip(valid) {
                if ok {
                    *v = *v - mean;
                }
            }
        }
    }
}

/// Bilinear sample at a fractional position; `None` when the position falls
/// outside the raster or touches an invalid pixel.
pub fn sample_bilinear<T: Real>(z: &Raster<T>, valid: &Mask, x: T, y: T) -> Option<T> {
    let (w, h) = z.dims();
    if w == 0 || h == 0 || !x.is_finite() || !y.is_finite() {
        return None;
    }
    let max_x = T::from_usize_lossy(w - 1);
    let max_y = T::from_usize_lossy(h - 1);
    if x < T::zero() || y < T::zero() || x > max_x || y > max_y {
        return None;
    }
    let x0 = x.floor().to_usize()?.min(w.saturating_sub(2));
    let y0 = y.floor().to_usize()?.min(h.saturating_sub(2));
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - T::from_usize_lossy(x0);
    let fy = y - T::from_usize_lossy(y0);
    let corners = [(x0, y0), (x1, y0), (x0, y1), (x1, y1)];
    if corners.iter().any(|&(cx, cy)| !valid.at(cx, cy)) {
        return None;
    }
    let one = T::one();
    let top = z.at(x0, y0) * (one - fx) + z.at(x1, y0) * fx;
    let bottom = z.at(x0, y1) * (one - fx) + z.at(x1, y1) * fx;
    Some(top * (one - fy) + bottom * fy)
}

/// Normalized discrete Gaussian taps for offsets `-r..=r`, `r = ceil(3 sigma)`.
pub fn gaussian_kernel<T: Real>(sigma: T) -> Vec<T> {
    if !(sigma > T::zero()) {
        return vec![T::one()];
    }
    let radius = (sigma * T::lit(3.0)).ceil().to_usize().unwrap_or(0);
    let r = radius as isize;
    let taps: Vec<T> = (-r..=r)
        .map(|k| {
            let k = T::lit(k as f64);
            (-(k * k) / (T::lit(2.0) * sigma * sigma)).exp()
        })
        .collect();
    let sum: T = taps.iter().copied().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

fn convolve_axis<T: Real>(src: &Raster<T>, kernel: &[T], horizontal: bool) -> Raster<T> {
    let (w, h) = src.dims();
    let r = (kernel.len() / 2) as isize;
    Raster::from_fn(w, h, |x, y| {
        let mut acc = T::zero();
        for (t, &k) in kernel.iter().enumerate() {
            let off = t as isize - r;
            let (sx, sy) = if horizontal {
                ((x as isize + off).clamp(0, w as isize - 1) as usize, y)
            } else {
                (x, (y as isize + off).clamp(0, h as isize - 1) as usize)
            };
            acc = acc + k * src.at(sx, sy);
        }
        acc
    })
}

/// Separable Gaussian smoothing by normalized convolution: invalid pixels
/// carry zero weight and borders replicate. Returns the smoothed values and
/// the accumulated weight; where the weight is zero the input value is kept.
pub fn gaussian_smooth_masked<T: Real>(z: &Raster<T>, valid: &Mask, sigma: T) -> Result<(Raster<T>, Raster<T>)> {
    z.ensure_dims(valid)?;
    let weight = valid.map(|&v| if v { T::one() } else { T::zero() });
    if !(sigma > T::zero()) {
        return Ok((z.clone(), weight));
    }
    let kernel = gaussian_kernel(sigma);
    let mut num = z.clone();
    for (n, &v) in num.as_mut_slice().iter_mut().zip(valid.as_slice()) {
        if !v {
            *n = T::zero();
        }
    }
    let num = convolve_axis(&convolve_axis(&num, &kernel, true), &kernel, false);
    let den = convolve_axis(&convolve_axis(&weight, &kernel, true), &kernel, false);
    let mut out = z.clone();
    for ((o, &n), &d) in out.as_mut_slice().iter_mut().zip(num.as_slice()).zip(den.as_slice()) {
        if d > T::zero() {
            *o = n / d;
        }
    }
    Ok((out, den))
}

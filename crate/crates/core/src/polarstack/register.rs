//! Frame-to-reference alignment: affine warps with bicubic resampling and
//! translation estimation by normalized cross-correlation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{PolarizerFrame, PolarizerStack};
use crate::error::{Error, Result};
use crate::raster::{Mask, Raster};
use crate::real::Real;

/// Affine map from a frame's pixel coordinates to the reference frame:
/// `x_ref = A x + t` with `matrix = [[a11, a12, tx], [a21, a22, ty]]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegistrationTransform<T> {
    pub matrix: [[T; 3]; 2],
    pub reference_frame_index: usize,
}

impl<T: Real> RegistrationTransform<T> {
    pub fn identity() -> Self {
        Self::translation(T::zero(), T::zero())
    }

    pub fn translation(tx: T, ty: T) -> Self {
        RegistrationTransform {
            matrix: [[T::one(), T::zero(), tx], [T::zero(), T::one(), ty]],
            reference_frame_index: 0,
        }
    }

    pub fn determinant(&self) -> T {
        let m = &self.matrix;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    /// Map from reference coordinates back into the frame.
    pub fn inverse(&self) -> Result<Self> {
        let det = self.determinant();
        if det == T::zero() || !det.is_finite() {
            return Err(Error::SingularTransform);
        }
        let m = &self.matrix;
        let (a, b, c, d) = (m[1][1] / det, -m[0][1] / det, -m[1][0] / det, m[0][0] / det);
        let (tx, ty) = (m[0][2], m[1][2]);
        Ok(RegistrationTransform {
            matrix: [
                [a, b, -(a * tx + b * ty)],
                [c, d, -(c * tx + d * ty)],
            ],
            reference_frame_index: self.reference_frame_index,
        })
    }

    pub fn apply(&self, x: T, y: T) -> (T, T) {
        let m = &self.matrix;
        (
            m[0][0] * x + m[0][1] * y + m[0][2],
            m[1][0] * x + m[1][1] * y + m[1][2],
        )
    }
}

/// Keys cubic convolution kernel with `a = -0.5`.
fn keys<T: Real>(t: T) -> T {
    let a = T::lit(-0.5);
    let t = t.abs();
    let one = T::one();
    let two = T::lit(2.0);
    let three = T::lit(3.0);
    if t <= one {
        ((a + two) * t - (a + three)) * t * t + one
    } else if t < two {
        ((a * t - T::lit(5.0) * a) * t + T::lit(8.0) * a) * t - T::lit(4.0) * a
    } else {
        T::zero()
    }
}

/// Bicubic sample with edge-replicated taps; `None` outside `[0, w-1] x [0, h-1]`.
fn sample_bicubic<T: Real>(img: &Raster<T>, x: T, y: T) -> Option<T> {
    let (w, h) = img.dims();
    let max_x = T::from_usize_lossy(w - 1);
    let max_y = T::from_usize_lossy(h - 1);
    if !(x >= T::zero() && y >= T::zero() && x <= max_x && y <= max_y) {
        return None;
    }
    let fx = x.floor();
    let fy = y.floor();
    let (ix, iy) = (fx.to_i64()?, fy.to_i64()?);
    let (tx, ty) = (x - fx, y - fy);
    let wx = [keys(tx + T::one()), keys(tx), keys(T::one() - tx), keys(T::lit(2.0) - tx)];
    let wy = [keys(ty + T::one()), keys(ty), keys(T::one() - ty), keys(T::lit(2.0) - ty)];
    let clamp_x = |v: i64| v.clamp(0, w as i64 - 1) as usize;
    let clamp_y = |v: i64| v.clamp(0, h as i64 - 1) as usize;
    let mut acc = T::zero();
    for (j, &wyj) in wy.iter().enumerate() {
        let row = clamp_y(iy - 1 + j as i64);
        let mut r = T::zero();
        for (i, &wxi) in wx.iter().enumerate() {
            r = r + wxi * img.at(clamp_x(ix - 1 + i as i64), row);
        }
        acc = acc + wyj * r;
    }
    Some(acc)
}

/// Resamples `img` into the reference frame. Pixels whose preimage falls
/// outside the source are set to zero and reported invalid.
fn warp<T: Real>(img: &Raster<T>, transform: &RegistrationTransform<T>) -> Result<(Raster<T>, Mask)> {
    let inv = transform.inverse()?;
    let (w, h) = img.dims();
    let samples: Vec<Option<T>> = (0..w * h)
        .into_par_iter()
        .map(|idx| {
            let (x, y) = (idx % w, idx / w);
            let (sx, sy) = inv.apply(T::from_usize_lossy(x), T::from_usize_lossy(y));
            sample_bicubic(img, sx, sy)
        })
        .collect();
    let values = samples.iter().map(|s| s.unwrap_or_else(T::zero)).collect();
    let valid = samples.iter().map(Option::is_some).collect();
    Ok((Raster::from_vec(w, h, values)?, Raster::from_vec(w, h, valid)?))
}

fn ncc<T: Real>(reference: &Raster<T>, frame: &Raster<T>, dx: i64, dy: i64) -> f64 {
    let (w, h) = (reference.width() as i64, reference.height() as i64);
    let x_lo = 0.max(-dx);
    let x_hi = w.min(w - dx);
    let y_lo = 0.max(-dy);
    let y_hi = h.min(h - dy);
    if x_hi - x_lo < 2 || y_hi - y_lo < 2 {
        return f64::NEG_INFINITY;
    }
    let n = ((x_hi - x_lo) * (y_hi - y_lo)) as f64;
    let (mut sa, mut sb) = (0.0, 0.0);
    for y in y_lo..y_hi {
        for x in x_lo..x_hi {
            sa += reference.at(x as usize, y as usize).to_f64_lossy();
            sb += frame.at((x + dx) as usize, (y + dy) as usize).to_f64_lossy();
        }
    }
    let (ma, mb) = (sa / n, sb / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for y in y_lo..y_hi {
        for x in x_lo..x_hi {
            let a = reference.at(x as usize, y as usize).to_f64_lossy() - ma;
            let b = frame.at((x + dx) as usize, (y + dy) as usize).to_f64_lossy() - mb;
            sab += a * b;
            saa += a * a;
            sbb += b * b;
        }
    }
    let denom = (saa * sbb).sqrt();
    if denom > 0.0 {
        sab / denom
    } else {
        f64::NEG_INFINITY
    }
}

/// Integer translation aligning `frame` onto `reference`, found by
/// exhaustive normalized cross-correlation over `[-radius, radius]^2`.
///
/// Returns the frame-to-reference offset `(tx, ty)`. A best match on the
/// window boundary is reported as a registration failure for `frame_index`.
pub fn estimate_translation<T: Real>(
    reference: &Raster<T>,
    frame: &Raster<T>,
    radius: usize,
    frame_index: usize,
) -> Result<(i64, i64)> {
    reference.ensure_dims(frame)?;
    let r = radius as i64;
    let shifts: Vec<(i64, i64)> = (-r..=r).flat_map(|dy| (-r..=r).map(move |dx| (dx, dy))).collect();
    let scores: Vec<f64> = shifts
        .par_iter()
        .map(|&(dx, dy)| ncc(reference, frame, dx, dy))
        .collect();
    // first maximum in scan order keeps ties deterministic
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    let (dx, dy) = shifts[best];
    if dx.abs() == r || dy.abs() == r {
        return Err(Error::RegistrationFailed {
            frame: frame_index,
            dx,
            dy,
        });
    }
    // frame(x + d) matches reference(x), so frame coordinates map to x - d
    Ok((-dx, -dy))
}

/// Result of aligning a stack onto its first frame.
#[derive(Clone, Debug)]
pub struct Registered<T> {
    pub stack: PolarizerStack<T>,
    /// One transform per non-reference frame, in frame order.
    pub transforms: Vec<RegistrationTransform<T>>,
}

/// Warps every non-reference frame onto the first frame.
///
/// With `transforms = None`, a translation per frame is estimated over a
/// search window of `search_radius` pixels.
pub fn register_stack<T: Real>(
    stack: &PolarizerStack<T>,
    transforms: Option<&[RegistrationTransform<T>]>,
    search_radius: usize,
) -> Result<Registered<T>> {
    let frames = stack.frames();
    let reference = &frames[0].image;
    let transforms: Vec<RegistrationTransform<T>> = match transforms {
        Some(t) => {
            if t.len() != frames.len() - 1 {
                return Err(Error::InvalidParameter(format!(
                    "{} transforms given for {} non-reference frames",
                    t.len(),
                    frames.len() - 1
                )));
            }
            t.to_vec()
        }
        None => frames[1..]
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let (tx, ty) = estimate_translation(reference, &f.image, search_radius, i + 1)?;
                Ok(RegistrationTransform::translation(
                    T::lit(tx as f64),
                    T::lit(ty as f64),
                ))
            })
            .collect::<Result<_>>()?,
    };
    for t in &transforms {
        if t.determinant() == T::zero() {
            return Err(Error::SingularTransform);
        }
    }

    let mut valid = stack.valid().clone();
    let mut out = vec![frames[0].clone()];
    for (f, t) in frames[1..].iter().zip(&transforms) {
        let (image, covered) = warp(&f.image, t)?;
        valid = valid.and(&covered)?;
        out.push(PolarizerFrame {
            angle: f.angle,
            image,
        });
    }
    let stack = PolarizerStack {
        frames: out,
        valid: stack.valid().clone(),
    }
    .with_valid(valid);
    Ok(Registered { stack, transforms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polarstack::{decompose, DecomposeConfig};

    fn textured(w: usize, h: usize, shift: (i64, i64), gain: f64) -> Raster<f64> {
        Raster::from_fn(w, h, |x, y| {
            let (u, v) = (x as f64 - shift.0 as f64, y as f64 - shift.1 as f64);
            gain * (0.5 + 0.2 * (0.37 * u).sin() * (0.23 * v).cos() + 0.1 * (0.11 * u * v).sin())
        })
    }

    fn stack() -> PolarizerStack<f64> {
        PolarizerStack::new(
            (0..4)
                .map(|k| (k as f64 * 0.7, textured(24, 20, (0, 0), 1.0 + 0.1 * k as f64)))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn identity_warp_is_bitwise() {
        let s = stack();
        let ids = vec![RegistrationTransform::identity(); 3];
        let r = register_stack(&s, Some(&ids), 4).unwrap();
        assert_eq!(r.stack.frames(), s.frames());
        assert_eq!(r.stack.valid().count(), 24 * 20);
        let a = decompose(&s, &DecomposeConfig::default()).unwrap();
        let b = decompose(&r.stack, &DecomposeConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    /// Brute-force oracle: sum of squared differences after mean removal over
    /// every integer shift, independent of the NCC path.
    fn brute_force_shift(a: &Raster<f64>, b: &Raster<f64>, r: i64) -> (i64, i64) {
        let mut best = (f64::INFINITY, (0, 0));
        for dy in -r..=r {
            for dx in -r..=r {
                let mut pairs = Vec::new();
                for y in 0..a.height() as i64 {
                    for x in 0..a.width() as i64 {
                        let (u, v) = (x + dx, y + dy);
                        if u >= 0 && v >= 0 && u < a.width() as i64 && v < a.height() as i64 {
                            pairs.push((a.at(x as usize, y as usize), b.at(u as usize, v as usize)));
                        }
                    }
                }
                let n = pairs.len() as f64;
                let ma = pairs.iter().map(|p| p.0).sum::<f64>() / n;
                let mb = pairs.iter().map(|p| p.1).sum::<f64>() / n;
                let sa = pairs.iter().map(|p| (p.0 - ma).powi(2)).sum::<f64>().sqrt();
                let sb = pairs.iter().map(|p| (p.1 - mb).powi(2)).sum::<f64>().sqrt();
                let ssd: f64 = pairs
                    .iter()
                    .map(|p| ((p.0 - ma) / sa - (p.1 - mb) / sb).powi(2))
                    .sum();
                if ssd < best.0 {
                    best = (ssd, (dx, dy));
                }
            }
        }
        best.1
    }

    #[test]
    fn recovers_integer_shift() {
        let reference = textured(40, 32, (0, 0), 1.0);
        let moved = textured(40, 32, (3, -2), 1.3);
        let (tx, ty) = estimate_translation(&reference, &moved, 6, 1).unwrap();
        assert_eq!((tx, ty), (-3, 2));
        let (dx, dy) = brute_force_shift(&reference, &moved, 6);
        assert_eq!((tx, ty), (-dx, -dy));

        let s = PolarizerStack::new(vec![
            (0.0, reference.clone()),
            (0.5, moved.clone()),
            (1.0, textured(40, 32, (-1, 1), 0.8)),
        ])
        .unwrap();
        let r = register_stack(&s, None, 6).unwrap();
        assert_eq!(r.transforms[0].matrix[0][2], -3.0);
        assert_eq!(r.transforms[0].matrix[1][2], 2.0);
        // aligned interior matches the reference up to gain
        let aligned = &r.stack.frames()[1].image;
        for y in 5..25 {
            for x in 5..30 {
                assert!((aligned.at(x, y) - 1.3 * reference.at(x, y)).abs() < 1e-12);
            }
        }
        assert!(!r.stack.valid().at(39, 0));
        assert!(r.stack.valid().at(20, 16));
    }

    #[test]
    fn shift_on_window_edge_fails() {
        let reference = textured(40, 32, (0, 0), 1.0);
        let moved = textured(40, 32, (5, 0), 1.0);
        let err = estimate_translation(&reference, &moved, 3, 2).unwrap_err();
        assert!(matches!(err, Error::RegistrationFailed { frame: 2, .. }));
    }

    #[test]
    fn singular_transform_rejected() {
        let s = stack();
        let mut t = RegistrationTransform::identity();
        t.matrix = [[1.0, 2.0, 0.0], [0.5, 1.0, 0.0]];
        let err = register_stack(&s, Some(&[t, t, t]), 4).unwrap_err();
        assert!(matches!(err, Error::SingularTransform));
    }

    #[test]
    fn inverse_round_trips() {
        let t = RegistrationTransform::<f64> {
            matrix: [[1.01, 0.02, 3.5], [-0.015, 0.99, -1.25]],
            reference_frame_index: 0,
        };
        let inv = t.inverse().unwrap();
        let (x, y) = t.apply(7.0, -2.0);
        let (bx, by) = inv.apply(x, y);
        assert!((bx - 7.0).abs() < 1e-12 && (by + 2.0).abs() < 1e-12);
    }

    #[test]
    fn keys_kernel_partition_of_unity() {
        for k in 0..=10 {
            let t = k as f64 / 10.0;
            let s = keys(t + 1.0) + keys(t) + keys(1.0 - t) + keys(2.0 - t);
            assert!((s - 1.0).abs() < 1e-14);
        }
        assert_eq!(keys(1.0f64), 0.0);
        assert_eq!(keys(2.0f64), 0.0);
    }
}

use crate::error::{Error, Result};
use crate::raster::{Mask, Raster};
use crate::real::Real;

/// One finite difference `z[plus] - z[minus]`, as linear pixel indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Difference {
    pub plus: usize,
    pub minus: usize,
}

impl Difference {
    /// `(linear pixel index, coefficient)` pairs.
    pub fn terms(&self) -> [(usize, f64); 2] {
        [(self.plus, 1.0), (self.minus, -1.0)]
    }
}

/// How gradient constraints are written in terms of heights.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Discretization {
    /// Forward difference, backward where the forward neighbour is missing.
    Forward,
    /// Every available forward/backward pairing, each row at half weight.
    /// Centred on the pixel on average.
    #[default]
    ForwardBackward,
}

/// Difference stencils available at every pixel of a mask.
#[derive(Clone, Debug)]
pub struct GradientOperator {
    width: usize,
    height: usize,
    forward_x: Vec<Option<Difference>>,
    backward_x: Vec<Option<Difference>>,
    forward_y: Vec<Option<Difference>>,
    backward_y: Vec<Option<Difference>>,
}

/// Discrete surface gradient `p = dz/dx`, `q = dz/dy`.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientField<T> {
    pub p: Raster<T>,
    pub q: Raster<T>,
    pub p_valid: Mask,
    pub q_valid: Mask,
}

impl<T: Real> GradientField<T> {
    /// Pixels where both components are defined.
    pub fn valid(&self) -> Mask {
        self.p_valid.and(&self.q_valid).expect("same dims")
    }
}

/// Builds forward/backward difference stencils over the valid pixels.
///
/// Fails with `NoGradientSupport` when no two valid pixels are adjacent.
pub fn build_gradient_operator(mask: &Mask) -> Result<GradientOperator> {
    let (w, h) = mask.dims();
    let n = w * h;
    let mut op = GradientOperator {
        width: w,
        height: h,
        forward_x: vec![None; n],
        backward_x: vec![None; n],
        forward_y: vec![None; n],
        backward_y: vec![None; n],
    };
    let mut any = false;
    for y in 0..h {
        for x in 0..w {
            if !mask.at(x, y) {
                continue;
            }
            let i = mask.index(x, y);
            if x + 1 < w && mask.at(x + 1, y) {
                op.forward_x[i] = Some(Difference { plus: i + 1, minus: i });
                any = true;
            }
            if x > 0 && mask.at(x - 1, y) {
                op.backward_x[i] = Some(Difference { plus: i, minus: i - 1 });
            }
            if y + 1 < h && mask.at(x, y + 1) {
                op.forward_y[i] = Some(Difference { plus: i + w, minus: i });
                any = true;
            }
            if y > 0 && mask.at(x, y - 1) {
                op.backward_y[i] = Some(Difference { plus: i, minus: i - w });
            }
        }
    }
    if any {
        Ok(op)
    } else {
        Err(Error::NoGradientSupport)
    }
}

fn pick(
    fwd: Option<Difference>,
    bwd: Option<Difference>,
    scheme: Discretization,
) -> impl Iterator<Item = Difference> {
    let (a, b) = match scheme {
        Discretization::Forward => (fwd.or(bwd), None),
        Discretization::ForwardBackward => (fwd, bwd),
    };
    a.into_iter().chain(b)
}

impl GradientOperator {
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Differences approximating `dz/dx` at linear pixel index `i`.
    pub fn x_differences(&self, i: usize, scheme: Discretization) -> impl Iterator<Item = Difference> {
        pick(self.forward_x[i], self.backward_x[i], scheme)
    }

    pub fn y_differences(&self, i: usize, scheme: Discretization) -> impl Iterator<Item = Difference> {
        pick(self.forward_y[i], self.backward_y[i], scheme)
    }

    /// Forward-difference gradient of `z` (backward at the region boundary).
    pub fn apply<T: Real>(&self, z: &Raster<T>) -> Result<GradientField<T>> {
        if z.dims() != self.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: z.dims(),
            });
        }
        let v = z.as_slice();
        let eval = |d: Option<Difference>| d.map(|d| v[d.plus] - v[d.minus]);
        let n = self.width * self.height;
        let mut p = vec![T::zero(); n];
        let mut q = vec![T::zero(); n];
        let mut pv = vec![false; n];
        let mut qv = vec![false; n];
        for i in 0..n {
            if let Some(g) = eval(self.forward_x[i].or(self.backward_x[i])) {
                p[i] = g;
                pv[i] = true;
            }
            if let Some(g) = eval(self.forward_y[i].or(self.backward_y[i])) {
                q[i] = g;
                qv[i] = true;
            }
        }
        let (w, h) = self.dims();
        Ok(GradientField {
            p: Raster::from_vec(w, h, p)?,
            q: Raster::from_vec(w, h, q)?,
            p_valid: Raster::from_vec(w, h, pv)?,
            q_valid: Raster::from_vec(w, h, qv)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_field_is_exact() {
        let z = Raster::from_fn(8, 8, |x, y| 2.0 * x as f64 + 3.0 * y as f64);
        let op = build_gradient_operator(&Raster::filled(8, 8, true)).unwrap();
        let g = op.apply(&z).unwrap();
        assert!(g.p.as_slice().iter().all(|&v| v == 2.0));
        assert!(g.q.as_slice().iter().all(|&v| v == 3.0));
        assert_eq!(g.valid().count(), 64);
    }

    #[test]
    fn strip_uses_forward_then_backward() {
        let z = Raster::from_fn(16, 1, |x, _| (x * x) as f64);
        let op = build_gradient_operator(&Raster::filled(16, 1, true)).unwrap();
        let g = op.apply(&z).unwrap();
        for x in 0..15 {
            assert_eq!(g.p.at(x, 0), (2 * x + 1) as f64);
        }
        assert_eq!(g.p.at(15, 0), 29.0);
        assert_eq!(g.q_valid.count(), 0);
    }

    #[test]
    fn single_pixel_has_no_support() {
        let mut mask = Raster::filled(5, 5, false);
        mask.set(2, 2, true);
        assert!(matches!(
            build_gradient_operator(&mask),
            Err(Error::NoGradientSupport)
        ));
    }

    #[test]
    fn stencils_stay_inside_mask() {
        let mask = Raster::from_fn(6, 5, |x, y| (x + 2 * y) % 5 != 0);
        let op = build_gradient_operator(&mask).unwrap();
        for i in 0..30 {
            for scheme in [Discretization::Forward, Discretization::ForwardBackward] {
                for d in op.x_differences(i, scheme).chain(op.y_differences(i, scheme)) {
                    assert!(d.terms().iter().all(|&(p, _)| mask.as_slice()[p]));
                    assert_eq!(d.terms().iter().map(|t| t.1).sum::<f64>(), 0.0);
                }
            }
        }
    }
}

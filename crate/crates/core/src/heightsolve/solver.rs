use rayon::prelude::*;

use crate::real::Real;

/// Compressed sparse rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Csr<T> {
    pub rows: usize,
    pub cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<T>,
}

impl<T: Real> Csr<T> {
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn transpose(&self) -> Csr<T> {
        let mut counts = vec![0usize; self.cols + 1];
        for &c in &self.col_idx {
            counts[c + 1] += 1;
        }
        for c in 0..self.cols {
            counts[c + 1] += counts[c];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0; self.nnz()];
        let mut values = vec![T::zero(); self.nnz()];
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                let slot = next[c];
                col_idx[slot] = r;
                values[slot] = v;
                next[c] += 1;
            }
        }
        Csr {
            rows: self.cols,
            cols: self.rows,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// `out = self * x`, parallel over rows; each row sums in a fixed order.
    pub fn mul_into(&self, x: &[T], out: &mut [T]) {
        out.par_iter_mut().enumerate().for_each(|(r, o)| {
            let mut acc = T::zero();
            for (c, v) in self.row(r) {
                acc = acc + v * x[c];
            }
            *o = acc;
        });
    }
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub(crate) struct CglsOutcome<T> {
    pub x: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
    pub residual_history: Vec<T>,
    pub relative_gradient: T,
}

/// Conjugate gradients on the normal equations of `min |A x - b|`, started
/// from zero. Stops once `|A^T r| <= tol |A^T b|` or after `max_iter` steps.
pub(crate) fn cgls<T: Real>(a: &Csr<T>, at: &Csr<T>, b: &[T], tol: T, max_iter: usize) -> CglsOutcome<T> {
    let n = a.cols;
    let mut x = vec![T::zero(); n];
    let mut r = b.to_vec();
    let mut s = vec![T::zero(); n];
    at.mul_into(&r, &mut s);
    let mut p = s.clone();
    let mut q = vec![T::zero(); a.rows];
    let mut gamma = dot(&s, &s);
    let norm0 = gamma.sqrt();
    let mut history = vec![dot(&r, &r).sqrt()];
    if norm0 == T::zero() {
        return CglsOutcome {
            x,
            iterations: 0,
            converged: true,
            residual_history: history,
            relative_gradient: T::zero(),
        };
    }
    let mut rel = T::one();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        a.mul_into(&p, &mut q);
        let qq = dot(&q, &q);
        if qq == T::zero() {
            break;
        }
        let alpha = gamma / qq;
        for (xi, &pi) in x.iter_mut().zip(&p) {
            *xi = *xi + alpha * pi;
        }
        for (ri, &qi) in r.iter_mut().zip(&q) {
            *ri = *ri - alpha * qi;
        }
        iterations += 1;
        history.push(dot(&r, &r).sqrt());
        at.mul_into(&r, &mut s);
        let gamma_next = dot(&s, &s);
        rel = gamma_next.sqrt() / norm0;
        if rel < tol {
            converged = true;
            break;
        }
        let beta = gamma_next / gamma;
        gamma = gamma_next;
        for (pi, &si) in p.iter_mut().zip(&s) {
            *pi = si + beta * *pi;
        }
    }
    CglsOutcome {
        x,
        iterations,
        converged,
        residual_history: history,
        relative_gradient: rel,
    }
}

//! Small dense-tensor network stack with hand-derived gradients.
//!
//! Everything here works on `f64` row-major buffers. Layers expose their
//! parameters through [`Parameterized`], which is what the optimizer and the
//! checkpoint format walk over.

mod adam;
mod checkpoint;
mod layers;
mod loss;
mod lstm;
mod norm;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{BlockHeader, Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use layers::{DenseParams, LocalLinearParams};
pub use loss::mse_loss;
pub use lstm::{LstmParams, LstmTrace};
pub use norm::{instance_norm, instance_norm_window, NormStats, DEGENERATE_STD};

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix buffer length");
        Matrix { rows, cols, data }
    }

    pub fn uniform<R: Rng + ?Sized>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Self {
        let data = (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect();
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `out += self * x`
    pub fn mul_vec_acc(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (r, o) in out.iter_mut().enumerate() {
            *o += dot(self.row(r), x);
        }
    }

    /// `out += selfᵀ * y`
    pub fn t_mul_vec_acc(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (r, &yr) in y.iter().enumerate() {
            if yr != 0.0 {
                axpy(yr, self.row(r), out);
            }
        }
    }

    /// `self += y xᵀ`
    pub fn add_outer(&mut self, y: &[f64], x: &[f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(x.len(), self.cols);
        for (r, &yr) in y.iter().enumerate() {
            if yr != 0.0 {
                let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
                axpy(yr, x, row);
            }
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `out += alpha * x`
#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], out: &mut [f64]) {
    for (o, v) in out.iter_mut().zip(x) {
        *o += alpha * v;
    }
}

/// Something with trainable parameters, walked block by block in a fixed order.
///
/// Gradients use the same type as the parameters, so `visit` over a gradient
/// value yields blocks in the same order as over the parameters.
pub trait Parameterized {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'static str, [usize; 2], &'a [f64]));

    fn visit_mut(&mut self, f: &mut dyn FnMut(&'static str, &mut [f64]));

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, _, block| n += block.len());
        n
    }

    /// All parameters concatenated in visiting order.
    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.visit(&mut |_, _, block| out.extend_from_slice(block));
        out
    }

    fn all_finite(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |_, _, block| ok &= block.iter().all(|v| v.is_finite()));
        ok
    }

    /// Adds `delta` to the parameter at flat position `index`.
    fn nudge(&mut self, index: usize, delta: f64) {
        let mut offset = 0;
        self.visit_mut(&mut |_, block| {
            if index >= offset && index < offset + block.len() {
                block[index - offset] += delta;
            }
            offset += block.len();
        });
    }

    fn fill(&mut self, value: f64) {
        self.visit_mut(&mut |_, block| block.iter_mut().for_each(|v| *v = value));
    }

    /// `self += other`, block by block. Panics on shape mismatch.
    fn add_assign_from(&mut self, other: &Self)
    where
        Self: Sized,
    {
        let mut blocks = Vec::new();
        other.visit(&mut |_, _, b| blocks.push(b));
        let mut it = blocks.into_iter();
        self.visit_mut(&mut |_, block| {
            let src = it.next().expect("matching block count");
            assert_eq!(src.len(), block.len(), "parameter block length");
            for (d, s) in block.iter_mut().zip(src) {
                *d += s;
            }
        });
    }

    fn scale(&mut self, factor: f64) {
        self.visit_mut(&mut |_, block| block.iter_mut().for_each(|v| *v *= factor));
    }
}

/// Elementwise `max(0, x)`.
pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect()
}

/// Backward pass of [`relu`]: passes `dy` where `x > 0`, zero elsewhere
/// (including exactly at zero).
pub fn relu_backward(x: &[f64], dy: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(dy)
        .map(|(&v, &d)| if v > 0.0 { d } else { 0.0 })
        .collect()
}

#[cfg(test)]
pub(crate) mod gradcheck {
    use super::Parameterized;

    /// Central-difference check of `analytic` against `loss` over every parameter.
    /// Returns the largest relative error, using `max(|a|, |n|, 1e-7)` as denominator
    /// (absolute error for gradients that are numerically zero).
    pub fn max_rel_error<P, F>(params: &P, analytic: &P, mut loss: F, h: f64) -> f64
    where
        P: Parameterized + Clone,
        F: FnMut(&P) -> f64,
    {
        let grads = analytic.flatten();
        let mut worst: f64 = 0.0;
        for (k, &g) in grads.iter().enumerate() {
            let mut plus = params.clone();
            plus.nudge(k, h);
            let mut minus = params.clone();
            minus.nudge(k, -h);
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let denom = g.abs().max(numeric.abs()).max(1e-7);
            worst = worst.max((g - numeric).abs() / denom);
        }
        worst
    }

    pub fn max_rel_error_vec<F>(x: &[f64], analytic: &[f64], mut loss: F, h: f64) -> f64
    where
        F: FnMut(&[f64]) -> f64,
    {
        let mut worst: f64 = 0.0;
        for k in 0..x.len() {
            let mut plus = x.to_vec();
            plus[k] += h;
            let mut minus = x.to_vec();
            minus[k] -= h;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let g = analytic[k];
            let denom = g.abs().max(numeric.abs()).max(1e-7);
            worst = worst.max((g - numeric).abs() / denom);
        }
        worst
    }
}

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{axpy, dot, Matrix, Parameterized};
use crate::{Error, Result};

/// Per-timestep channel mixing: `out[t] = M_t * x[t] + b_t`.
///
/// Nothing is shared across timesteps. Every `M_t` starts as the identity and
/// every `b_t` as zero, so a fresh layer passes its input through unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalLinearParams {
    channels: usize,
    matrices: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
}

impl LocalLinearParams {
    pub fn identity(window: usize, channels: usize) -> Self {
        LocalLinearParams {
            channels,
            matrices: (0..window).map(|_| Matrix::identity(channels)).collect(),
            biases: vec![vec![0.0; channels]; window],
        }
    }

    pub fn zeros(window: usize, channels: usize) -> Self {
        LocalLinearParams {
            channels,
            matrices: (0..window).map(|_| Matrix::zeros(channels, channels)).collect(),
            biases: vec![vec![0.0; channels]; window],
        }
    }

    pub fn random<R: Rng + ?Sized>(window: usize, channels: usize, scale: f64, rng: &mut R) -> Self {
        let mut p = Self::zeros(window, channels);
        p.visit_mut(&mut |_, b| b.iter_mut().for_each(|v| *v = rng.gen_range(-scale..=scale)));
        p
    }

    pub fn window(&self) -> usize {
        self.matrices.len()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn matrix(&self, t: usize) -> &Matrix {
        &self.matrices[t]
    }

    pub fn matrix_mut(&mut self, t: usize) -> &mut Matrix {
        &mut self.matrices[t]
    }

    fn check(&self, features: &[f64]) -> Result<()> {
        let expected = self.window() * self.channels;
        if features.len() != expected {
            return Err(Error::shape(
                "local linear input (window x channels)",
                format!("{}x{}", self.window(), self.channels),
                format!("{} values", features.len()),
            ));
        }
        Ok(())
    }

    /// `features` is `window x channels`, row-major.
    pub fn forward(&self, features: &[f64]) -> Result<Vec<f64>> {
        self.check(features)?;
        let c = self.channels;
        let mut out = vec![0.0; features.len()];
        for (t, (m, b)) in self.matrices.iter().zip(&self.biases).enumerate() {
            let row = &mut out[t * c..(t + 1) * c];
            row.copy_from_slice(b);
            m.mul_vec_acc(&features[t * c..(t + 1) * c], row);
        }
        Ok(out)
    }

    /// Returns parameter gradients and the gradient w.r.t. `features`.
    pub fn backward(&self, features: &[f64], d_out: &[f64]) -> Result<(LocalLinearParams, Vec<f64>)> {
        self.check(features)?;
        self.check(d_out)?;
        let c = self.channels;
        let mut grads = Self::zeros(self.window(), c);
        let mut d_in = vec![0.0; features.len()];
        for t in 0..self.window() {
            let x = &features[t * c..(t + 1) * c];
            let dy = &d_out[t * c..(t + 1) * c];
            grads.matrices[t].add_outer(dy, x);
            axpy(1.0, dy, &mut grads.biases[t]);
            self.matrices[t].t_mul_vec_acc(dy, &mut d_in[t * c..(t + 1) * c]);
        }
        Ok((grads, d_in))
    }
}

impl Parameterized for LocalLinearParams {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'static str, [usize; 2], &'a [f64])) {
        for m in &self.matrices {
            f("local_linear.matrix", m.shape(), m.as_slice());
        }
        for b in &self.biases {
            f("local_linear.bias", [self.channels, 1], b);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&'static str, &mut [f64])) {
        for m in &mut self.matrices {
            f("local_linear.matrix", m.as_mut_slice());
        }
        for b in &mut self.biases {
            f("local_linear.bias", b);
        }
    }
}

/// Channelwise dense head: `y_c = a_c . [time_c, hist_c] + d_c`.
///
/// Channels never mix here. The weight vector of each channel is stored as a
/// time block (length `window`) and a histogram block (length `bins`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseParams {
    window: usize,
    bins: usize,
    time_weights: Vec<Vec<f64>>,
    hist_weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

impl DenseParams {
    pub fn zeros(window: usize, bins: usize, channels: usize) -> Self {
        DenseParams {
            window,
            bins,
            time_weights: vec![vec![0.0; window]; channels],
            hist_weights: vec![vec![0.0; bins]; channels],
            bias: vec![0.0; channels],
        }
    }

    /// Weights uniform in `[-1/sqrt(n), 1/sqrt(n)]` with `n = window + bins`, zero bias.
    pub fn init<R: Rng + ?Sized>(window: usize, bins: usize, channels: usize, rng: &mut R) -> Self {
        let bound = 1.0 / ((window + bins) as f64).sqrt();
        let mut p = Self::zeros(window, bins, channels);
        for c in 0..channels {
            p.time_weights[c].iter_mut().for_each(|v| *v = rng.gen_range(-bound..=bound));
            p.hist_weights[c].iter_mut().for_each(|v| *v = rng.gen_range(-bound..=bound));
        }
        p
    }

    pub fn random<R: Rng + ?Sized>(window: usize, bins: usize, channels: usize, scale: f64, rng: &mut R) -> Self {
        let mut p = Self::zeros(window, bins, channels);
        p.visit_mut(&mut |_, b| b.iter_mut().for_each(|v| *v = rng.gen_range(-scale..=scale)));
        p
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn channels(&self) -> usize {
        self.bias.len()
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn hist_weights(&self, channel: usize) -> &[f64] {
        &self.hist_weights[channel]
    }

    pub fn zero_hist_weights(&mut self) {
        self.hist_weights.iter_mut().for_each(|w| w.fill(0.0));
    }

    fn check(&self, time_features: &[f64], hist: &[Vec<f64>]) -> Result<()> {
        let c = self.channels();
        if time_features.len() != self.window * c {
            return Err(Error::shape(
                "dense time features",
                self.window * c,
                time_features.len(),
            ));
        }
        if hist.len() != c {
            return Err(Error::shape("dense histogram channels", c, hist.len()));
        }
        if let Some(h) = hist.iter().find(|h| h.len() != self.bins) {
            return Err(Error::shape("dense histogram bins", self.bins, h.len()));
        }
        Ok(())
    }

    /// `time_features` is `window x channels` row-major; `hist[c]` has `bins` entries.
    pub fn forward(&self, time_features: &[f64], hist: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.check(time_features, hist)?;
        let c = self.channels();
        Ok((0..c)
            .map(|ch| {
                let time: f64 = self.time_weights[ch]
                    .iter()
                    .enumerate()
                    .map(|(t, w)| w * time_features[t * c + ch])
                    .sum();
                time + dot(&self.hist_weights[ch], &hist[ch]) + self.bias[ch]
            })
            .collect())
    }

    /// Returns parameter gradients and the gradient w.r.t. `time_features`.
    ///
    /// With `hist_trainable == false` the histogram weight gradients are zeroed.
    pub fn backward(
        &self,
        time_features: &[f64],
        hist: &[Vec<f64>],
        d_out: &[f64],
        hist_trainable: bool,
    ) -> Result<(DenseParams, Vec<f64>)> {
        self.check(time_features, hist)?;
        let c = self.channels();
        if d_out.len() != c {
            return Err(Error::shape("dense output gradient", c, d_out.len()));
        }
        let mut grads = Self::zeros(self.window, self.bins, c);
        let mut d_time = vec![0.0; time_features.len()];
        for (ch, &dy) in d_out.iter().enumerate() {
            grads.bias[ch] = dy;
            for t in 0..self.window {
                grads.time_weights[ch][t] = dy * time_features[t * c + ch];
                d_time[t * c + ch] = dy * self.time_weights[ch][t];
            }
            if hist_trainable {
                for (g, &x) in grads.hist_weights[ch].iter_mut().zip(&hist[ch]) {
                    *g = dy * x;
                }
            }
        }
        Ok((grads, d_time))
    }
}

impl Parameterized for DenseParams {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'static str, [usize; 2], &'a [f64])) {
        for w in &self.time_weights {
            f("dense.time_weights", [1, self.window], w);
        }
        for w in &self.hist_weights {
            f("dense.hist_weights", [1, self.bins], w);
        }
        f("dense.bias", [self.bias.len(), 1], &self.bias);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&'static str, &mut [f64])) {
        for w in &mut self.time_weights {
            f("dense.time_weights", w);
        }
        for w in &mut self.hist_weights {
            f("dense.hist_weights", w);
        }
        f("dense.bias", &mut self.bias);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralnet::gradcheck::{max_rel_error, max_rel_error_vec};
    use crate::seed::{stream, Purpose};

    #[test]
    fn identity_init_passes_input_through() {
        let p = LocalLinearParams::identity(3, 2);
        let x = [0.1, -2.0, 3.5, 0.0, 1e-300, 7.25];
        assert_eq!(p.forward(&x).unwrap(), x.to_vec());
    }

    #[test]
    fn scaled_identity_doubles() {
        let mut p = LocalLinearParams::identity(2, 2);
        for t in 0..2 {
            for c in 0..2 {
                p.matrix_mut(t).set(c, c, 2.0);
            }
        }
        assert_eq!(p.forward(&[1.0, 2.0, 3.0, 4.0]).unwrap(), vec![2.0, 4.0, 6.0, 8.0]);
    }

    #[test]
    fn local_linear_shape_errors() {
        let p = LocalLinearParams::identity(3, 2);
        assert!(matches!(p.forward(&[1.0; 5]), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn local_linear_gradients() {
        let mut rng = stream(5, Purpose::ModelInit, 0);
        for _ in 0..5 {
            let p = LocalLinearParams::random(4, 3, 1.0, &mut rng);
            let x: Vec<f64> = (0..12).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let wts: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (g, dx) = p.backward(&x, &wts).unwrap();
            let err = max_rel_error(&p, &g, |q| dot(&q.forward(&x).unwrap(), &wts), 1e-5);
            assert!(err < 1e-4, "{err}");
            let err = max_rel_error_vec(&x, &dx, |x| dot(&p.forward(x).unwrap(), &wts), 1e-5);
            assert!(err < 1e-4, "{err}");
        }
    }

    #[test]
    fn dense_zero_weights_gives_bias() {
        let mut p = DenseParams::zeros(3, 2, 2);
        p.bias_mut().copy_from_slice(&[0.5, -1.0]);
        let out = p.forward(&[1.0; 6], &[vec![0.3, 0.7], vec![1.0, 0.0]]).unwrap();
        assert_eq!(out, vec![0.5, -1.0]);
    }

    #[test]
    fn dense_ignores_histogram_when_weights_zero() {
        let mut rng = stream(6, Purpose::ModelInit, 0);
        let mut p = DenseParams::random(4, 3, 2, 1.0, &mut rng);
        p.zero_hist_weights();
        let time: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a = p.forward(&time, &[vec![0.1, 0.2, 0.7], vec![0.0, 0.5, 0.5]]).unwrap();
        let b = p.forward(&time, &[vec![0.9, 0.0, 0.1], vec![1.0, 0.0, 0.0]]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dense_channels_do_not_mix() {
        let mut rng = stream(7, Purpose::ModelInit, 0);
        let p = DenseParams::random(3, 2, 2, 1.0, &mut rng);
        let hist = vec![vec![0.5, 0.5], vec![0.2, 0.8]];
        let a = p.forward(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &hist).unwrap();
        let b = p.forward(&[1.0, -9.0, 3.0, 8.0, 5.0, 0.0], &hist).unwrap();
        assert_eq!(a[0], b[0]);
        assert_ne!(a[1], b[1]);
    }

    #[test]
    fn dense_gradients_and_mask() {
        let mut rng = stream(8, Purpose::ModelInit, 0);
        for _ in 0..5 {
            let p = DenseParams::random(4, 3, 2, 1.0, &mut rng);
            let time: Vec<f64> = (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let hist: Vec<Vec<f64>> = (0..2)
                .map(|_| (0..3).map(|_| rng.gen_range(0.0..1.0)).collect())
                .collect();
            let wts = [0.7, -1.3];
            let (g, dt) = p.backward(&time, &hist, &wts, true).unwrap();
            let err = max_rel_error(&p, &g, |q| dot(&q.forward(&time, &hist).unwrap(), &wts), 1e-5);
            assert!(err < 1e-4, "{err}");
            let err = max_rel_error_vec(&time, &dt, |t| dot(&p.forward(t, &hist).unwrap(), &wts), 1e-5);
            assert!(err < 1e-4, "{err}");
            let (masked, _) = p.backward(&time, &hist, &wts, false).unwrap();
            assert!(masked.hist_weights.iter().flatten().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn dense_shape_errors() {
        let p = DenseParams::zeros(3, 2, 1);
        assert!(p.forward(&[0.0; 2], &[vec![0.0; 2]]).is_err());
        assert!(p.forward(&[0.0; 3], &[vec![0.0; 3]]).is_err());
        assert!(p.forward(&[0.0; 3], &[]).is_err());
    }
}

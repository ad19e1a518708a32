use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{axpy, dot, Matrix, Parameterized};
use crate::{Error, Result};

const GATE_INPUT: usize = 0;
const GATE_FORGET: usize = 1;
const GATE_OUTPUT: usize = 2;
const GATE_CELL: usize = 3;

const W_NAMES: [&str; 4] = ["lstm.w_input", "lstm.w_forget", "lstm.w_output", "lstm.w_cell"];
const U_NAMES: [&str; 4] = ["lstm.u_input", "lstm.u_forget", "lstm.u_output", "lstm.u_cell"];
const B_NAMES: [&str; 4] = ["lstm.b_input", "lstm.b_forget", "lstm.b_output", "lstm.b_cell"];

/// Single-layer LSTM over a scalar series, followed by a per-timestep
/// projection of the hidden state to one scalar.
///
/// Gate order in the arrays is input, forget, output, cell candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    hidden: usize,
    /// Input-to-hidden weights, `hidden x 1` each.
    w: [Matrix; 4],
    /// Hidden-to-hidden weights, `hidden x hidden` each.
    u: [Matrix; 4],
    b: [Vec<f64>; 4],
    projection: Vec<f64>,
    projection_bias: Vec<f64>,
}

impl LstmParams {
    pub fn zeros(hidden: usize) -> Self {
        let w = std::array::from_fn(|_| Matrix::zeros(hidden, 1));
        let u = std::array::from_fn(|_| Matrix::zeros(hidden, hidden));
        let b = std::array::from_fn(|_| vec![0.0; hidden]);
        LstmParams {
            hidden,
            w,
            u,
            b,
            projection: vec![0.0; hidden],
            projection_bias: vec![0.0],
        }
    }

    /// Weights uniform in `[-1/sqrt(h), 1/sqrt(h)]`, forget bias 1, other biases 0.
    pub fn init<R: Rng + ?Sized>(hidden: usize, rng: &mut R) -> Self {
        assert!(hidden > 0, "hidden size must be positive");
        let bound = 1.0 / (hidden as f64).sqrt();
        let w = std::array::from_fn(|_| Matrix::uniform(hidden, 1, bound, rng));
        let u = std::array::from_fn(|_| Matrix::uniform(hidden, hidden, bound, rng));
        let mut b: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; hidden]);
        b[GATE_FORGET].fill(1.0);
        let projection = (0..hidden).map(|_| rng.gen_range(-bound..=bound)).collect();
        LstmParams {
            hidden,
            w,
            u,
            b,
            projection,
            projection_bias: vec![0.0],
        }
    }

    /// Fully random parameters, biases included. Used for gradient checks.
    pub fn random<R: Rng + ?Sized>(hidden: usize, scale: f64, rng: &mut R) -> Self {
        let mut p = Self::zeros(hidden);
        p.visit_mut(&mut |_, block| {
            block.iter_mut().for_each(|v| *v = rng.gen_range(-scale..=scale))
        });
        p
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn projection_bias(&self) -> f64 {
        self.projection_bias[0]
    }

    /// Runs the recurrence from a zero state and projects every hidden state.
    pub fn forward(&self, series: &[f64]) -> Result<LstmTrace> {
        if series.is_empty() {
            return Err(Error::EmptyInput("lstm series"));
        }
        if let Some(t) = series.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "lstm input timestep",
                index: t,
            });
        }
        let h = self.hidden;
        let steps = series.len();
        let mut trace = LstmTrace {
            hidden: h,
            inputs: series.to_vec(),
            gates: [
                vec![0.0; steps * h],
                vec![0.0; steps * h],
                vec![0.0; steps * h],
                vec![0.0; steps * h],
            ],
            cells: vec![0.0; (steps + 1) * h],
            cell_tanh: vec![0.0; steps * h],
            states: vec![0.0; (steps + 1) * h],
            outputs: vec![0.0; steps],
        };
        let mut pre = vec![0.0; h];
        for (t, &x) in series.iter().enumerate() {
            let (prev, rest) = trace.states.split_at_mut((t + 1) * h);
            let h_prev = &prev[t * h..];
            for g in 0..4 {
                pre.copy_from_slice(&self.b[g]);
                axpy(x, self.w[g].as_slice(), &mut pre);
                self.u[g].mul_vec_acc(h_prev, &mut pre);
                let act = &mut trace.gates[g][t * h..(t + 1) * h];
                if g == GATE_CELL {
                    act.iter_mut().zip(&pre).for_each(|(a, &z)| *a = z.tanh());
                } else {
                    act.iter_mut().zip(&pre).for_each(|(a, &z)| *a = sigmoid(z));
                }
            }
            let h_next = &mut rest[..h];
            for k in 0..h {
                let i = trace.gates[GATE_INPUT][t * h + k];
                let f = trace.gates[GATE_FORGET][t * h + k];
                let o = trace.gates[GATE_OUTPUT][t * h + k];
                let g = trace.gates[GATE_CELL][t * h + k];
                let c = f * trace.cells[t * h + k] + i * g;
                trace.cells[(t + 1) * h + k] = c;
                let tc = c.tanh();
                trace.cell_tanh[t * h + k] = tc;
                h_next[k] = o * tc;
            }
            trace.outputs[t] = dot(&self.projection, h_next) + self.projection_bias[0];
        }
        Ok(trace)
    }

    /// Backpropagation through time.
    ///
    /// `d_outputs[t]` is the loss gradient w.r.t. projected output `t`.
    /// Returns parameter gradients and the gradient w.r.t. each input scalar.
    pub fn backward(&self, trace: &LstmTrace, d_outputs: &[f64]) -> Result<(LstmParams, Vec<f64>)> {
        let steps = trace.outputs.len();
        if d_outputs.len() != steps {
            return Err(Error::shape("lstm output gradient", steps, d_outputs.len()));
        }
        let h = self.hidden;
        let mut grads = LstmParams::zeros(h);
        let mut d_inputs = vec![0.0; steps];
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let mut dh = vec![0.0; h];
        let mut d_pre: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; h]);

        for t in (0..steps).rev() {
            let dy = d_outputs[t];
            let h_t = &trace.states[(t + 1) * h..(t + 2) * h];
            let h_prev = &trace.states[t * h..(t + 1) * h];
            grads.projection_bias[0] += dy;
            axpy(dy, h_t, &mut grads.projection);

            for k in 0..h {
                dh[k] = dy * self.projection[k] + dh_next[k];
            }
            for k in 0..h {
                let idx = t * h + k;
                let i = trace.gates[GATE_INPUT][idx];
                let f = trace.gates[GATE_FORGET][idx];
                let o = trace.gates[GATE_OUTPUT][idx];
                let g = trace.gates[GATE_CELL][idx];
                let tc = trace.cell_tanh[idx];
                let c_prev = trace.cells[t * h + k];

                let d_o = dh[k] * tc;
                let dc = dh[k] * o * (1.0 - tc * tc) + dc_next[k];
                let d_i = dc * g;
                let d_g = dc * i;
                let d_f = dc * c_prev;
                dc_next[k] = dc * f;

                d_pre[GATE_INPUT][k] = d_i * i * (1.0 - i);
                d_pre[GATE_FORGET][k] = d_f * f * (1.0 - f);
                d_pre[GATE_OUTPUT][k] = d_o * o * (1.0 - o);
                d_pre[GATE_CELL][k] = d_g * (1.0 - g * g);
            }
            let x = trace.inputs[t];
            dh_next.fill(0.0);
            for g in 0..4 {
                axpy(x, &d_pre[g], grads.w[g].as_mut_slice());
                grads.u[g].add_outer(&d_pre[g], h_prev);
                axpy(1.0, &d_pre[g], &mut grads.b[g]);
                self.u[g].t_mul_vec_acc(&d_pre[g], &mut dh_next);
                d_inputs[t] += dot(self.w[g].as_slice(), &d_pre[g]);
            }
        }
        Ok((grads, d_inputs))
    }
}

impl Parameterized for LstmParams {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'static str, [usize; 2], &'a [f64])) {
        for g in 0..4 {
            f(W_NAMES[g], self.w[g].shape(), self.w[g].as_slice());
        }
        for g in 0..4 {
            f(U_NAMES[g], self.u[g].shape(), self.u[g].as_slice());
        }
        for g in 0..4 {
            f(B_NAMES[g], [self.hidden, 1], &self.b[g]);
        }
        f("lstm.projection", [1, self.hidden], &self.projection);
        f("lstm.projection_bias", [1, 1], &self.projection_bias);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&'static str, &mut [f64])) {
        for g in 0..4 {
            f(W_NAMES[g], self.w[g].as_mut_slice());
        }
        for g in 0..4 {
            f(U_NAMES[g], self.u[g].as_mut_slice());
        }
        for g in 0..4 {
            f(B_NAMES[g], &mut self.b[g]);
        }
        f("lstm.projection", &mut self.projection);
        f("lstm.projection_bias", &mut self.projection_bias);
    }
}

/// Activations kept from a forward pass.
#[derive(Debug, Clone)]
pub struct LstmTrace {
    hidden: usize,
    inputs: Vec<f64>,
    gates: [Vec<f64>; 4],
    /// `c_0 .. c_T`, `c_0 = 0`.
    cells: Vec<f64>,
    cell_tanh: Vec<f64>,
    /// `h_0 .. h_T`, `h_0 = 0`.
    states: Vec<f64>,
    outputs: Vec<f64>,
}

impl LstmTrace {
    /// Projected scalar per timestep.
    pub fn outputs(&self) -> &[f64] {
        &self.outputs
    }

    /// Hidden state after timestep `t`.
    pub fn hidden_state(&self, t: usize) -> &[f64] {
        &self.states[(t + 1) * self.hidden..(t + 2) * self.hidden]
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

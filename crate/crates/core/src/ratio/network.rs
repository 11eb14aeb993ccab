//! The ratio network `w_θ`: input(2) → H (ReLU) → H (ReLU) → 1 (softplus).

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::estimators::WeightFunction;
use crate::model::QueueState;
use crate::rng::StreamRng;

/// Per-coordinate affine map `(x - shift) / scale` applied to states before
/// they reach the network. Kernels use the scale only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub shift: [f64; 2],
    pub scale: [f64; 2],
}

impl Normalization {
    pub const IDENTITY: Normalization = Normalization {
        shift: [0.0, 0.0],
        scale: [1.0, 1.0],
    };

    /// Zero mean and unit variance over `states`; a constant coordinate keeps
    /// scale 1.
    pub fn fit(states: &[QueueState]) -> Self {
        if states.is_empty() {
            return Self::IDENTITY;
        }
        let n = states.len() as f64;
        let mut mean = [0.0; 2];
        for s in states {
            let p = s.to_point();
            mean[0] += p[0];
            mean[1] += p[1];
        }
        mean = [mean[0] / n, mean[1] / n];
        let mut var = [0.0; 2];
        for s in states {
            let p = s.to_point();
            var[0] += (p[0] - mean[0]) * (p[0] - mean[0]);
            var[1] += (p[1] - mean[1]) * (p[1] - mean[1]);
        }
        let scale = var.map(|v| {
            let sd = libm::sqrt(v / n);
            if sd > 0.0 {
                sd
            } else {
                1.0
            }
        });
        Self { shift: mean, scale }
    }

    #[inline]
    pub fn apply(&self, state: QueueState) -> [f64; 2] {
        let p = state.to_point();
        [
            (p[0] - self.shift[0]) / self.scale[0],
            (p[1] - self.shift[1]) / self.scale[1],
        ]
    }

    /// `x / scale`, the coordinates the kernels see. Distances match
    /// [`Normalization::apply`]; the linear kernel keeps the empty queue at
    /// the origin.
    #[inline]
    pub fn kernel_point(&self, state: QueueState) -> [f64; 2] {
        let p = state.to_point();
        [p[0] / self.scale[0], p[1] / self.scale[1]]
    }
}

/// `log(1 + e^z)` without overflow.
#[inline]
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + libm::log1p(libm::exp(-z))
    } else {
        libm::log1p(libm::exp(z))
    }
}

/// `log softplus(z)`, accurate where softplus itself underflows.
#[inline]
pub fn log_softplus(z: f64) -> f64 {
    if z < -30.0 {
        // softplus(z) = e^z (1 - e^z/2 + ...)
        z + libm::log1p(-0.5 * libm::exp(z))
    } else {
        libm::log(softplus(z))
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

/// Four-lane dot product; fixed association order, so results are reproducible.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Offsets of each parameter block inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layout {
    width: usize,
}

impl Layout {
    fn w1(&self) -> core::ops::Range<usize> {
        0..2 * self.width
    }
    fn b1(&self) -> core::ops::Range<usize> {
        2 * self.width..3 * self.width
    }
    fn w2(&self) -> core::ops::Range<usize> {
        let start = 3 * self.width;
        start..start + self.width * self.width
    }
    fn b2(&self) -> core::ops::Range<usize> {
        let start = 3 * self.width + self.width * self.width;
        start..start + self.width
    }
    fn w3(&self) -> core::ops::Range<usize> {
        let start = 4 * self.width + self.width * self.width;
        start..start + self.width
    }
    fn b3(&self) -> usize {
        5 * self.width + self.width * self.width
    }
    fn len(&self) -> usize {
        self.b3() + 1
    }
}

/// Parameters of `w_θ` plus the frozen input normalization.
///
/// The flat parameter vector stores, in order: the first-layer weights
/// (`H×2`, row per hidden unit), first-layer biases, second-layer weights
/// (`H×H`, row per output unit), second-layer biases, output weights and the
/// output bias.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioModel {
    layout: Layout,
    params: Vec<f64>,
    normalization: Normalization,
}

/// Activations kept from a batched forward pass for backpropagation.
pub struct Activations {
    inputs: Vec<[f64; 2]>,
    hidden1: Vec<f64>,
    hidden2: Vec<f64>,
    pub pre_output: Vec<f64>,
}

impl RatioModel {
    pub fn param_count(width: usize) -> usize {
        Layout { width }.len()
    }

    /// Weights and biases drawn from `U(-1/√fan_in, 1/√fan_in)`.
    pub fn initialize(width: usize, normalization: Normalization, rng: &mut StreamRng) -> Result<Self> {
        if width == 0 {
            return Err(Error::InvalidConfig("network width must be positive"));
        }
        let layout = Layout { width };
        let mut params = vec![0.0; layout.len()];
        // He-uniform hidden weights with zero biases, a small read-out, and an
        // output bias putting the initial weight near 1
        let mut fill = |range: core::ops::Range<usize>, bound: f64, params: &mut [f64]| {
            for v in &mut params[range] {
                *v = (2.0 * rng.uniform() - 1.0) * bound;
            }
        };
        let he = |fan_in: usize| libm::sqrt(6.0 / fan_in as f64);
        fill(layout.w1(), he(2), &mut params);
        fill(layout.w2(), he(width), &mut params);
        fill(layout.w3(), 1.0 / libm::sqrt(width as f64), &mut params);
        params[layout.b3()] = libm::log(core::f64::consts::E - 1.0);
        Ok(Self {
            layout,
            params,
            normalization,
        })
    }

    pub fn from_parts(width: usize, params: Vec<f64>, normalization: Normalization) -> Result<Self> {
        let layout = Layout { width };
        if width == 0 {
            return Err(Error::InvalidConfig("network width must be positive"));
        }
        if params.len() != layout.len() {
            return Err(Error::ShapeMismatch {
                expected: layout.len(),
                got: params.len(),
            });
        }
        Ok(Self {
            layout,
            params,
            normalization,
        })
    }

    pub fn width(&self) -> usize {
        self.layout.width
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn normalization(&self) -> &Normalization {
        &self.normalization
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|v| v.is_finite())
    }

    /// Output pre-activation `z` for an already-normalized input.
    pub fn pre_output(&self, input: [f64; 2]) -> f64 {
        self.forward(&[input]).pre_output[0]
    }

    /// `w_θ(state)`, floored at the smallest positive normal double so the
    /// weight stays strictly positive where softplus underflows.
    pub fn weight_of(&self, state: QueueState) -> f64 {
        output_weight(self.pre_output(self.normalization.apply(state)))
    }

    pub fn log_weight_of(&self, state: QueueState) -> f64 {
        log_softplus(self.pre_output(self.normalization.apply(state)))
    }

    /// Weights for every element of `states`, evaluating each distinct state once.
    pub fn weights_for(&self, states: &[QueueState]) -> Vec<f64> {
        let (unique, index) = unique_states(states);
        let inputs: Vec<[f64; 2]> = unique.iter().map(|&s| self.normalization.apply(s)).collect();
        let z = self.forward(&inputs).pre_output;
        index.iter().map(|&i| output_weight(z[i])).collect()
    }

    /// Like [`weights_for`](Self::weights_for) but returning `log w_θ`.
    pub fn log_weights_for(&self, states: &[QueueState]) -> Vec<f64> {
        let (unique, index) = unique_states(states);
        let inputs: Vec<[f64; 2]> = unique.iter().map(|&s| self.normalization.apply(s)).collect();
        let z = self.forward(&inputs).pre_output;
        index.iter().map(|&i| log_softplus(z[i])).collect()
    }

    /// Batched forward pass over normalized inputs.
    pub fn forward(&self, inputs: &[[f64; 2]]) -> Activations {
        let h = self.layout.width;
        let p = &self.params;
        let w1 = &p[self.layout.w1()];
        let b1 = &p[self.layout.b1()];
        let w2 = &p[self.layout.w2()];
        let b2 = &p[self.layout.b2()];
        let w3 = &p[self.layout.w3()];
        let b3 = p[self.layout.b3()];

        let mut hidden1 = vec![0.0; inputs.len() * h];
        let mut hidden2 = vec![0.0; inputs.len() * h];
        let mut pre_output = Vec::with_capacity(inputs.len());
        for (n, x) in inputs.iter().enumerate() {
            let h1 = &mut hidden1[n * h..(n + 1) * h];
            for j in 0..h {
                let a = w1[2 * j] * x[0] + w1[2 * j + 1] * x[1] + b1[j];
                h1[j] = a.max(0.0);
            }
            let h2 = &mut hidden2[n * h..(n + 1) * h];
            for k in 0..h {
                let a = dot(&w2[k * h..(k + 1) * h], h1) + b2[k];
                h2[k] = a.max(0.0);
            }
            pre_output.push(dot(w3, h2) + b3);
        }
        Activations {
            inputs: inputs.to_vec(),
            hidden1,
            hidden2,
            pre_output,
        }
    }

    /// Accumulates `Σ_n upstream[n] · ∂w_θ(input_n)/∂θ` into `grad`.
    ///
    /// `upstream[n]` is the derivative of the loss with respect to the n-th
    /// network output.
    pub fn backward(&self, acts: &Activations, upstream: &[f64], grad: &mut [f64]) {
        assert_eq!(grad.len(), self.params.len());
        assert_eq!(upstream.len(), acts.pre_output.len());
        let h = self.layout.width;
        let l = self.layout;
        let w2 = &self.params[l.w2()];
        let w3 = &self.params[l.w3()];

        let mut d_h2 = vec![0.0; h];
        let mut d_h1 = vec![0.0; h];
        for (n, &up) in upstream.iter().enumerate() {
            if up == 0.0 {
                continue;
            }
            let dz = up * sigmoid(acts.pre_output[n]);
            let h1 = &acts.hidden1[n * h..(n + 1) * h];
            let h2 = &acts.hidden2[n * h..(n + 1) * h];

            axpy(dz, h2, &mut grad[l.w3()]);
            grad[l.b3()] += dz;

            for k in 0..h {
                d_h2[k] = if h2[k] > 0.0 { dz * w3[k] } else { 0.0 };
            }
            d_h1.iter_mut().for_each(|v| *v = 0.0);
            {
                let (gw2, _) = grad[l.w2().start..].split_at_mut(h * h);
                for k in 0..h {
                    let g = d_h2[k];
                    if g == 0.0 {
                        continue;
                    }
                    axpy(g, h1, &mut gw2[k * h..(k + 1) * h]);
                    axpy(g, &w2[k * h..(k + 1) * h], &mut d_h1);
                }
            }
            axpy(1.0, &d_h2, &mut grad[l.b2()]);

            let x = acts.inputs[n];
            let b1_start = l.b1().start;
            for j in 0..h {
                let g = if h1[j] > 0.0 { d_h1[j] } else { 0.0 };
                if g == 0.0 {
                    continue;
                }
                grad[2 * j] += g * x[0];
                grad[2 * j + 1] += g * x[1];
                grad[b1_start + j] += g;
            }
        }
    }
}

#[inline]
pub(crate) fn output_weight(z: f64) -> f64 {
    softplus(z).max(f64::MIN_POSITIVE)
}

impl WeightFunction for RatioModel {
    fn weight(&self, state: QueueState) -> f64 {
        self.weight_of(state)
    }
}

/// Distinct states in ascending order and, for each input, its index among them.
pub fn unique_states(states: &[QueueState]) -> (Vec<QueueState>, Vec<usize>) {
    let mut unique = states.to_vec();
    unique.sort_unstable();
    unique.dedup();
    let index = states
        .iter()
        .map(|s| unique.binary_search(s).expect("state is present"))
        .collect();
    (unique, index)
}

//! Kernelized residual loss for the stationary ratio.
//!
//! For transition pairs `(X_i, X_i')` sampled under Q with `r_i = P/Q`, the
//! residual is `Δ_i = w(X_i) r_i - w(X_i')` and the sample loss is
//!
//! ```text
//! L = 1/(n² b_k) Σ_{i,j} Σ_u Δ_i Δ_j k_u(X_i', X_j') + α/2 (1/n Σ_i w(X_i) - 1)²
//! ```
//!
//! with the double sum including `i = j`. Queue states live on a lattice, so
//! the double sum is evaluated by first summing `Δ` over pairs sharing the same
//! next state, and the translation-invariant kernels are tabulated once per
//! lattice offset. Both are the same sum with far fewer kernel calls.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::estimators::WeightFunction;
use crate::kernels::{KernelKind, KernelSpec};
use crate::model::{step_likelihood_ratio, QueueState, TandemParams};
use crate::ratio::network::{output_weight, unique_states, Normalization, RatioModel};

/// One observed transition of the alternative chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionPair {
    pub from: QueueState,
    pub to: QueueState,
    /// `P(to | from) / Q(to | from)`.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionBatch {
    pairs: Vec<TransitionPair>,
    compact: Compact,
}

impl TransitionBatch {
    pub fn new(pairs: Vec<TransitionPair>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::ZeroCount("batch size"));
        }
        if let Some(bad) = pairs.iter().find(|p| !(p.ratio.is_finite() && p.ratio > 0.0)) {
            return Err(Error::IllegalTransition {
                from: bad.from,
                to: bad.to,
            });
        }
        let compact = Compact::new(&pairs);
        Ok(Self { pairs, compact })
    }

    /// Pairs `(path[i], path[i+1])` for each `i` in `starts`.
    pub fn from_path(
        path: &[QueueState],
        starts: &[usize],
        p: &TandemParams,
        q: &TandemParams,
    ) -> Result<Self> {
        let pairs = starts
            .iter()
            .map(|&i| {
                let (from, to) = (path[i], path[i + 1]);
                Ok(TransitionPair {
                    from,
                    to,
                    ratio: step_likelihood_ratio(p, q, from, to)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(pairs)
    }

    /// Every consecutive pair of `path`.
    pub fn all_pairs(path: &[QueueState], p: &TandemParams, q: &TandemParams) -> Result<Self> {
        let starts: Vec<usize> = (0..path.len().saturating_sub(1)).collect();
        Self::from_path(path, &starts, p, q)
    }

    pub fn pairs(&self) -> &[TransitionPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Batch built from the pairs at `indices` (repeats allowed).
    pub fn resample(&self, indices: &[usize]) -> Result<Self> {
        Self::new(indices.iter().map(|&i| self.pairs[i]).collect())
    }
}

/// `Δ(w; x, x') = w(x) · P(x'|x)/Q(x'|x) - w(x')`.
pub fn delta_residual<W: WeightFunction + ?Sized>(
    w: &W,
    ratio_pq: f64,
    x: QueueState,
    x_next: QueueState,
) -> f64 {
    w.weight(x) * ratio_pq - w.weight(x_next)
}

/// The batch re-indexed by distinct states.
#[derive(Debug, Clone, PartialEq)]
struct Compact {
    /// Distinct states among all `from` and `to` entries.
    states: Vec<QueueState>,
    from: Vec<usize>,
    to: Vec<usize>,
    ratio: Vec<f64>,
    /// Distinct next states (indices into `states`) and their multiplicities.
    next: Vec<usize>,
    next_count: Vec<u64>,
    /// For each pair, the position of its next state in `next`.
    next_slot: Vec<usize>,
}

impl Compact {
    fn new(pairs: &[TransitionPair]) -> Self {
        let all: Vec<QueueState> = pairs
            .iter()
            .flat_map(|p| [p.from, p.to])
            .collect();
        let (states, index) = unique_states(&all);
        let from: Vec<usize> = index.iter().step_by(2).copied().collect();
        let to: Vec<usize> = index.iter().skip(1).step_by(2).copied().collect();

        let (next, next_slot) = unique_indices(&to);
        let mut next_count = vec![0u64; next.len()];
        for &s in &next_slot {
            next_count[s] += 1;
        }
        Self {
            states,
            from,
            to,
            ratio: pairs.iter().map(|p| p.ratio).collect(),
            next,
            next_count,
            next_slot,
        }
    }
}

/// Sorted distinct values and the position of each input among them.
fn unique_indices(values: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut unique = values.to_vec();
    unique.sort_unstable();
    unique.dedup();
    let slot = values
        .iter()
        .map(|v| unique.binary_search(v).expect("value is present"))
        .collect();
    (unique, slot)
}

/// Kernel specs for `kinds`, with bandwidths from the median heuristic over the
/// normalized next states of `batch`.
pub fn bandwidth_specs(
    kinds: &[KernelKind],
    batch: &TransitionBatch,
    normalization: &Normalization,
) -> Result<Vec<KernelSpec>> {
    let sigma = median_of_next(&batch.compact, normalization)?;
    kinds.iter().map(|&k| KernelSpec::new(k, sigma)).collect()
}

/// Lattice offset `(|dx1|, |dx2|)` between two next states, flattened.
struct Offsets {
    cols: usize,
    rows: usize,
}

impl Offsets {
    fn new(compact: &Compact) -> Self {
        let span = |f: fn(&QueueState) -> u32| {
            let it = compact.next.iter().map(|&s| f(&compact.states[s]));
            let (lo, hi) = it.fold((u32::MAX, 0), |(lo, hi), v| (lo.min(v), hi.max(v)));
            (hi.saturating_sub(lo)) as usize + 1
        };
        Self {
            rows: span(|s| s.x1),
            cols: span(|s| s.x2),
        }
    }

    #[inline]
    fn index(&self, a: QueueState, b: QueueState) -> usize {
        a.x1.abs_diff(b.x1) as usize * self.cols + a.x2.abs_diff(b.x2) as usize
    }

    /// Squared normalized length of each offset.
    fn squared_lengths(&self, normalization: &Normalization) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.rows * self.cols);
        for i in 0..self.rows {
            let a = i as f64 / normalization.scale[0];
            for j in 0..self.cols {
                let b = j as f64 / normalization.scale[1];
                out.push(a * a + b * b);
            }
        }
        out
    }
}

/// Median pairwise distance among the normalized next states (all index pairs
/// `i < j`, duplicates included), with the fallbacks of
/// [`crate::kernels::median_heuristic`].
fn median_of_next(compact: &Compact, normalization: &Normalization) -> Result<f64> {
    let n: u64 = compact.next_count.iter().sum();
    if n < 2 {
        return Ok(1.0);
    }
    let offsets = Offsets::new(compact);
    let mut hist = vec![0u64; offsets.rows * offsets.cols];
    for (a, (&sa, &ca)) in compact.next.iter().zip(&compact.next_count).enumerate() {
        hist[0] += ca * (ca - 1) / 2;
        for (&sb, &cb) in compact.next[a + 1..].iter().zip(&compact.next_count[a + 1..]) {
            hist[offsets.index(compact.states[sa], compact.states[sb])] += ca * cb;
        }
    }
    let mut bins: Vec<(f64, u64)> = offsets
        .squared_lengths(normalization)
        .into_iter()
        .zip(hist)
        .filter(|&(_, c)| c > 0)
        .map(|(sq, c)| (libm::sqrt(sq), c))
        .collect();
    bins.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mid = (n * (n - 1) / 2 - 1) / 2;
    let mut seen = 0u64;
    let median = bins
        .iter()
        .find(|&&(_, c)| {
            seen += c;
            seen > mid
        })
        .map_or(0.0, |&(d, _)| d);
    if median > 0.0 {
        return Ok(median);
    }
    Ok(bins.iter().map(|&(d, _)| d).find(|&d| d > 0.0).unwrap_or(1.0))
}

/// `(Σ_u K_u) D` over the distinct next states.
fn kernel_apply(
    compact: &Compact,
    delta_by_next: &[f64],
    kernels: &[KernelSpec],
    normalization: &Normalization,
) -> Vec<f64> {
    let m = compact.next.len();
    let states: Vec<QueueState> = compact.next.iter().map(|&s| compact.states[s]).collect();
    let mut kd = vec![0.0; m];

    let linear = kernels.iter().filter(|k| !k.kind.uses_bandwidth()).count();
    if linear > 0 {
        let points: Vec<[f64; 2]> = states.iter().map(|&s| normalization.kernel_point(s)).collect();
        let mut moment = [0.0; 2];
        for (p, d) in points.iter().zip(delta_by_next) {
            moment[0] += p[0] * d;
            moment[1] += p[1] * d;
        }
        for (k, p) in kd.iter_mut().zip(&points) {
            *k = linear as f64 * (p[0] * moment[0] + p[1] * moment[1]);
        }
    }

    if linear < kernels.len() {
        let offsets = Offsets::new(compact);
        let table: Vec<f64> = offsets
            .squared_lengths(normalization)
            .into_iter()
            .map(|sq| {
                kernels
                    .iter()
                    .filter(|k| k.kind.uses_bandwidth())
                    .map(|k| k.radial(sq))
                    .sum()
            })
            .collect();
        for a in 0..m {
            let mut acc = 0.0;
            for b in 0..m {
                acc += table[offsets.index(states[a], states[b])] * delta_by_next[b];
            }
            kd[a] += acc;
        }
    }
    kd
}

/// Loss components for one batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    pub kernel_term: f64,
    pub regularizer: f64,
}

impl LossValue {
    pub fn total(&self) -> f64 {
        self.kernel_term + self.regularizer
    }
}

/// Loss and, optionally, `∂L/∂w` at every distinct state.
fn loss_from_weights(
    compact: &Compact,
    weights: &[f64],
    kernels: &[KernelSpec],
    normalization: &Normalization,
    alpha_reg: f64,
    want_grad: bool,
) -> (LossValue, Option<Vec<f64>>) {
    let n = compact.from.len() as f64;
    let b_k = kernels.len() as f64;

    let mut delta_by_next = vec![0.0; compact.next.len()];
    let mut mean_w = 0.0;
    for i in 0..compact.from.len() {
        let delta = weights[compact.from[i]] * compact.ratio[i] - weights[compact.to[i]];
        delta_by_next[compact.next_slot[i]] += delta;
        mean_w += weights[compact.from[i]];
    }
    mean_w /= n;

    let kd = kernel_apply(compact, &delta_by_next, kernels, normalization);
    let quad: f64 = delta_by_next.iter().zip(&kd).map(|(d, k)| d * k).sum();
    let scale = 1.0 / (n * n * b_k);
    let value = LossValue {
        kernel_term: quad * scale,
        regularizer: 0.5 * alpha_reg * (mean_w - 1.0) * (mean_w - 1.0),
    };
    if !want_grad {
        return (value, None);
    }

    let reg_grad = alpha_reg * (mean_w - 1.0) / n;
    let mut d_w = vec![0.0; compact.states.len()];
    for i in 0..compact.from.len() {
        let d_delta = 2.0 * scale * kd[compact.next_slot[i]];
        d_w[compact.from[i]] += d_delta * compact.ratio[i] + reg_grad;
        d_w[compact.to[i]] -= d_delta;
    }
    (value, Some(d_w))
}

/// Loss of an arbitrary weight function; kernels see states through
/// [`Normalization::kernel_point`].
pub fn weighted_loss<W: WeightFunction + ?Sized>(
    w: &W,
    batch: &TransitionBatch,
    kernels: &[KernelSpec],
    normalization: &Normalization,
    alpha_reg: f64,
) -> LossValue {
    let compact = &batch.compact;
    let weights: Vec<f64> = compact.states.iter().map(|&s| w.weight(s)).collect();
    loss_from_weights(compact, &weights, kernels, normalization, alpha_reg, false).0
}

/// The sample loss `L̂(w_θ)` for the model on one batch.
pub fn empirical_loss(
    model: &RatioModel,
    batch: &TransitionBatch,
    kernels: &[KernelSpec],
    alpha_reg: f64,
) -> f64 {
    loss_and_gradient(model, batch, kernels, alpha_reg, false).0.total()
}

/// Exact gradient of [`empirical_loss`] with respect to every parameter; the
/// bandwidths and the `P/Q` ratios are constants.
pub fn loss_gradient(
    model: &RatioModel,
    batch: &TransitionBatch,
    kernels: &[KernelSpec],
    alpha_reg: f64,
) -> Vec<f64> {
    loss_and_gradient(model, batch, kernels, alpha_reg, true)
        .1
        .expect("gradient requested")
}

/// Loss and (when `want_grad`) gradient in one forward/backward pass.
pub fn loss_and_gradient(
    model: &RatioModel,
    batch: &TransitionBatch,
    kernels: &[KernelSpec],
    alpha_reg: f64,
    want_grad: bool,
) -> (LossValue, Option<Vec<f64>>) {
    let compact = &batch.compact;
    let norm = model.normalization();
    let inputs: Vec<[f64; 2]> = compact.states.iter().map(|&s| norm.apply(s)).collect();
    let acts = model.forward(&inputs);
    let weights: Vec<f64> = acts.pre_output.iter().map(|&z| output_weight(z)).collect();
    let (value, d_w) = loss_from_weights(compact, &weights, kernels, norm, alpha_reg, want_grad);
    let grad = d_w.map(|d_w| {
        let mut grad = vec![0.0; model.params().len()];
        model.backward(&acts, &d_w, &mut grad);
        grad
    });
    (value, grad)
}

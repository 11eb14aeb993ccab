//! The stochastic training loop for `w_θ`.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::kernels::KernelKind;
use crate::model::{QueueState, TandemParams};
use crate::ratio::adam::{adam_step, AdamConfig, AdamState};
use crate::ratio::loss::{bandwidth_specs, loss_and_gradient, TransitionBatch};
use crate::ratio::network::{Normalization, RatioModel};
use crate::rng::{derive_stream, RngStream};

const INIT_STREAM: u64 = 0x696e_6974;
const BATCH_STREAM: u64 = 0x6261_7463;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    /// Weight α of the `α/2 (mean w - 1)²` penalty.
    pub alpha_reg: f64,
    /// Transition pairs per iteration (b_D).
    pub batch_size: usize,
    /// Kernels drawn per iteration (b_k), without replacement from `kernels`.
    pub kernel_batch: usize,
    pub kernels: Vec<KernelKind>,
    /// Hidden layer width H.
    pub width: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 5_000,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            alpha_reg: 1.0,
            batch_size: 3_000,
            kernel_batch: 4,
            kernels: KernelKind::ALL.to_vec(),
            width: 1024,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.learning_rate) {
            return Err(Error::InvalidConfig("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidConfig("Adam decay rates must lie in [0, 1)"));
        }
        if !positive(self.adam_epsilon) {
            return Err(Error::InvalidConfig("Adam epsilon must be positive"));
        }
        if !(self.alpha_reg.is_finite() && self.alpha_reg >= 0.0) {
            return Err(Error::InvalidConfig("regularization weight must be non-negative"));
        }
        if self.batch_size == 0 || self.kernel_batch == 0 || self.width == 0 {
            return Err(Error::InvalidConfig("batch sizes and width must be positive"));
        }
        if self.kernels.is_empty() {
            return Err(Error::InvalidConfig("kernel set is empty"));
        }
        if self.kernel_batch > self.kernels.len() {
            return Err(Error::InvalidConfig("kernel batch exceeds the kernel set"));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.adam_epsilon,
        }
    }
}

/// Trains `w_θ ≈ π/π̃` on `samples = X_1..X_T`, a path of the alternative
/// chain `q`; `p` is the original chain.
///
/// Each iteration draws `min(b_D, T-1)` distinct pair indices and `b_k`
/// distinct kernels, sets the bandwidth by the median heuristic on the batch,
/// and takes one Adam step. `observer` receives `(iteration, loss)` before
/// each update. The input normalization is fitted on `samples` and frozen.
pub fn train(
    samples: &[QueueState],
    p: &TandemParams,
    q: &TandemParams,
    config: &TrainConfig,
    mut observer: impl FnMut(usize, f64),
) -> Result<RatioModel> {
    config.validate()?;
    if samples.len() < 2 {
        return Err(Error::InvalidConfig("training needs at least two samples"));
    }
    let normalization = Normalization::fit(samples);
    let mut init_rng = RngStream::new(config.seed, derive_stream(0, &[INIT_STREAM])).rng();
    let mut model = RatioModel::initialize(config.width, normalization, &mut init_rng)?;
    if config.iterations == 0 {
        return Ok(model);
    }

    let mut rng = RngStream::new(config.seed, derive_stream(0, &[BATCH_STREAM])).rng();
    let pairs = samples.len() - 1;
    let batch_size = config.batch_size.min(pairs);
    let adam = config.adam();
    let mut state = AdamState::new(model.params().len());
    let all = TransitionBatch::all_pairs(samples, p, q)?;

    for iteration in 0..config.iterations {
        let resampled;
        let batch = if batch_size == pairs {
            &all
        } else {
            resampled = all.resample(&rng.sample_distinct(pairs, batch_size))?;
            &resampled
        };
        let kinds: Vec<KernelKind> = rng
            .sample_distinct(config.kernels.len(), config.kernel_batch)
            .into_iter()
            .map(|i| config.kernels[i])
            .collect();
        let specs = bandwidth_specs(&kinds, batch, &normalization)?;
        let (value, grad) = loss_and_gradient(&model, batch, &specs, config.alpha_reg, true);
        let grad = grad.expect("gradient requested");
        let loss = value.total();
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss { iteration });
        }
        observer(iteration, loss);
        adam_step(&mut state, model.params_mut(), &grad, &adam);
    }
    Ok(model)
}

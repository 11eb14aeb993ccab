//! Adam with bias correction.

use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    pub steps: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            first: vec![0.0; len],
            second: vec![0.0; len],
            steps: 0,
        }
    }
}

/// One Adam update of `theta` in place.
pub fn adam_step(state: &mut AdamState, theta: &mut [f64], grad: &[f64], config: &AdamConfig) {
    assert_eq!(theta.len(), grad.len());
    assert_eq!(state.first.len(), grad.len());
    state.steps += 1;
    let t = state.steps as f64;
    let c1 = 1.0 - libm::pow(config.beta1, t);
    let c2 = 1.0 - libm::pow(config.beta2, t);
    for i in 0..theta.len() {
        let g = grad[i];
        let m = config.beta1 * state.first[i] + (1.0 - config.beta1) * g;
        let v = config.beta2 * state.second[i] + (1.0 - config.beta2) * g * g;
        state.first[i] = m;
        state.second[i] = v;
        theta[i] -= config.learning_rate * (m / c1) / (libm::sqrt(v / c2) + config.epsilon);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let cfg = AdamConfig::default();
        let mut state = AdamState::new(3);
        let mut theta = [1.0, -2.0, 0.5];
        for _ in 0..10 {
            adam_step(&mut state, &mut theta, &[0.0; 3], &cfg);
        }
        assert_eq!(theta, [1.0, -2.0, 0.5]);
        assert_eq!(state.steps, 10);
    }

    #[test]
    fn constant_gradient_steps_approach_learning_rate() {
        let cfg = AdamConfig::default();
        let mut state = AdamState::new(2);
        let mut theta = [0.0, 0.0];
        let grad = [3.0, -0.01];
        let mut last = theta;
        for _ in 0..2000 {
            adam_step(&mut state, &mut theta, &grad, &cfg);
            let step = [theta[0] - last[0], theta[1] - last[1]];
            last = theta;
            assert!((step[0] + cfg.learning_rate).abs() < 1e-9);
            assert!((step[1] - cfg.learning_rate).abs() < 1e-6);
        }
    }

    #[test]
    fn deterministic() {
        let cfg = AdamConfig::default();
        let mut a = AdamState::new(2);
        let mut b = a.clone();
        let (mut ta, mut tb) = ([0.3, 0.4], [0.3, 0.4]);
        adam_step(&mut a, &mut ta, &[0.1, -0.2], &cfg);
        adam_step(&mut b, &mut tb, &[0.1, -0.2], &cfg);
        assert_eq!(a, b);
        assert_eq!(ta, tb);
    }
}

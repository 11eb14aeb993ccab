//! Overflow-probability estimators and the rMSE summary.
//!
//! - Regenerative importance sampling ([`ris_estimate`]): switched cycles for
//!   the renewal-reward numerator, plain original-system cycles for the mean
//!   cycle length.
//! - Marginal importance sampling ([`marginal_estimate`]): a self-normalized
//!   weighted frequency over one alternative-system path, with weights either
//!   the exact stationary ratio (MIS), a learned ratio (MLIS) or 1 on
//!   original-system data (plain Monte Carlo).

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{log_exact_stationary_ratio, QueueState, TandemParams};
use crate::rng::RngStream;
use crate::simulate::{regenerative_cycle_length, SwitchedSampler, DEFAULT_CYCLE_CAP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Ris,
    Mis,
    Mlis,
    Mc,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Ris, Method::Mis, Method::Mlis, Method::Mc];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ris => "ris",
            Method::Mis => "mis",
            Method::Mlis => "mlis",
            Method::Mc => "mc",
        }
    }

    /// Whether the estimate is a self-normalized average and must lie in `[0, 1]`.
    pub fn is_self_normalized(self) -> bool {
        !matches!(self, Method::Ris)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = alloc::string::String;

    fn from_str(s: &str) -> core::result::Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| alloc::format!("unknown method {s:?} (expected ris, mis, mlis or mc)"))
    }
}

/// A state weight `w(x) ≥ 0`, typically an estimate of `π(x) / π̃(x)`.
pub trait WeightFunction {
    fn weight(&self, state: QueueState) -> f64;
}

impl<F: Fn(QueueState) -> f64> WeightFunction for F {
    fn weight(&self, state: QueueState) -> f64 {
        self(state)
    }
}

/// `w ≡ c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantWeight(pub f64);

impl WeightFunction for ConstantWeight {
    fn weight(&self, _: QueueState) -> f64 {
        self.0
    }
}

/// The exact product-form ratio `π / π̃`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactRatio {
    original: TandemParams,
    alternative: TandemParams,
    log_base: f64,
    log_step: [f64; 2],
}

impl ExactRatio {
    pub fn new(original: &TandemParams, alternative: &TandemParams) -> Result<Self> {
        let log_base = log_exact_stationary_ratio(original, alternative, QueueState::EMPTY)?;
        let unit = |s| log_exact_stationary_ratio(original, alternative, s).map(|v| v - log_base);
        let log_step = [unit(QueueState::new(1, 0))?, unit(QueueState::new(0, 1))?];
        Ok(Self {
            original: *original,
            alternative: *alternative,
            log_base,
            log_step,
        })
    }

    pub fn original(&self) -> &TandemParams {
        &self.original
    }

    pub fn alternative(&self) -> &TandemParams {
        &self.alternative
    }

    /// `log π(x)/π̃(x)`, linear in the coordinates.
    pub fn log_weight(&self, state: QueueState) -> f64 {
        self.log_base
            + f64::from(state.x1) * self.log_step[0]
            + f64::from(state.x2) * self.log_step[1]
    }
}

impl WeightFunction for ExactRatio {
    fn weight(&self, state: QueueState) -> f64 {
        libm::exp(self.log_weight(state))
    }
}

/// A point estimate with its cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub method: Method,
    /// Chain steps simulated to produce the estimate.
    pub steps: u64,
}

/// An [`Estimate`] with its timing and seed record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateReport {
    pub estimate: f64,
    pub method: Method,
    pub steps: u64,
    pub seconds: f64,
    pub stream: RngStream,
}

impl EstimateReport {
    pub fn new(estimate: Estimate, seconds: f64, stream: RngStream) -> Self {
        Self {
            estimate: estimate.value,
            method: estimate.method,
            steps: estimate.steps,
            seconds,
            stream,
        }
    }

    /// A regenerative estimate above 1 or a self-normalized one outside `[0, 1]`.
    pub fn is_flagged(&self) -> bool {
        !(0.0..=1.0).contains(&self.estimate) || !self.estimate.is_finite()
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    #[inline]
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// `Σ w(X_t) 1{X_t¹+X_t² ≥ γ} / Σ w(X_t)` over `samples`.
///
/// Sums are compensated, so rescaling `w` changes the result by a few ulps at
/// most regardless of the sample count.
pub fn marginal_estimate<W: WeightFunction + ?Sized>(
    samples: &[QueueState],
    w: &W,
    gamma: u64,
) -> Result<f64> {
    let mut total = CompensatedSum::default();
    let mut tail = CompensatedSum::default();
    for &s in samples {
        let v = w.weight(s);
        total.add(v);
        if s.total() >= gamma {
            tail.add(v);
        }
    }
    finish_ratio(tail.value(), total.value())
}

/// [`marginal_estimate`] for several thresholds with precomputed weights,
/// `weights[t]` belonging to `samples[t]`.
pub fn marginal_estimates(samples: &[QueueState], weights: &[f64], gammas: &[u64]) -> Result<Vec<f64>> {
    if samples.len() != weights.len() {
        return Err(Error::ShapeMismatch {
            expected: samples.len(),
            got: weights.len(),
        });
    }
    let max_total = samples.iter().map(|s| s.total()).max().unwrap_or(0) as usize;
    // weight mass per total job count, then a suffix sum
    let mut by_total = alloc::vec![CompensatedSum::default(); max_total + 1];
    let mut total = CompensatedSum::default();
    for (s, &v) in samples.iter().zip(weights) {
        by_total[s.total() as usize].add(v);
        total.add(v);
    }
    gammas
        .iter()
        .map(|&g| {
            let mut tail = CompensatedSum::default();
            for bin in by_total.iter().skip(g as usize) {
                tail.add(bin.sum);
                tail.add(bin.carry);
            }
            finish_ratio(tail.value(), total.value())
        })
        .collect()
}

fn finish_ratio(tail: f64, total: f64) -> Result<f64> {
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::DegenerateWeights(total));
    }
    Ok(tail / total)
}

/// Fraction of samples with `x1 + x2 ≥ γ`.
pub fn plain_monte_carlo(samples: &[QueueState], gamma: u64) -> Result<f64> {
    marginal_estimate(samples, &ConstantWeight(1.0), gamma)
}

/// Outcome of one regenerative importance sampling run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RisEstimate {
    pub value: f64,
    /// `m1⁻¹ Σ hits · Π P/Q` over switched cycles.
    pub numerator: f64,
    /// `m2⁻¹ Σ α` over original-system cycles.
    pub denominator: f64,
    pub m1: u64,
    pub m2: u64,
    /// `Σ α̃ + Σ α`.
    pub steps: u64,
}

impl RisEstimate {
    pub fn estimate(&self) -> Estimate {
        Estimate {
            value: self.value,
            method: Method::Ris,
            steps: self.steps,
        }
    }
}

/// How the numerator and denominator share a step budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CycleBudget {
    /// Exactly `m1` switched and `m2` original cycles.
    Counts { m1: u64, m2: u64 },
    /// Switched cycles until their steps reach `⌈split·steps⌉`, then original
    /// cycles until the combined steps reach `steps` (at least one of each).
    Steps { steps: u64, split: f64 },
}

impl CycleBudget {
    fn validate(&self) -> Result<()> {
        match *self {
            CycleBudget::Counts { m1, m2 } => {
                if m1 == 0 {
                    return Err(Error::ZeroCount("m1"));
                }
                if m2 == 0 {
                    return Err(Error::ZeroCount("m2"));
                }
            }
            CycleBudget::Steps { steps, split } => {
                if steps == 0 {
                    return Err(Error::ZeroCount("step budget"));
                }
                if !(split > 0.0 && split < 1.0) {
                    return Err(Error::InvalidSplit(split));
                }
            }
        }
        Ok(())
    }
}

/// Regenerative importance sampling with switched dynamics.
///
/// Numerator cycles draw from `stream.child(&[1])` and denominator cycles from
/// `stream.child(&[2])`, so the two halves are independent.
pub fn ris_estimate(
    original: &TandemParams,
    alternative: &TandemParams,
    gamma: u64,
    budget: CycleBudget,
    stream: RngStream,
) -> Result<RisEstimate> {
    budget.validate()?;
    let sampler = SwitchedSampler::new(original, alternative, gamma, DEFAULT_CYCLE_CAP)?;
    let mut num_rng = stream.child(&[1]).rng();
    let mut den_rng = stream.child(&[2]).rng();

    let (mut m1, mut num_steps, mut num_sum) = (0u64, 0u64, 0.0);
    let mut draw_switched = |m1: &mut u64, steps: &mut u64, sum: &mut f64| -> Result<()> {
        let c = sampler.sample(&mut num_rng)?;
        *m1 += 1;
        *steps += c.alpha_tilde;
        *sum += c.weighted_hits();
        Ok(())
    };
    let (mut m2, mut den_steps) = (0u64, 0u64);
    let mut draw_original = |m2: &mut u64, steps: &mut u64| -> Result<()> {
        *steps += regenerative_cycle_length(original, &mut den_rng, DEFAULT_CYCLE_CAP)?;
        *m2 += 1;
        Ok(())
    };

    match budget {
        CycleBudget::Counts { m1: n1, m2: n2 } => {
            while m1 < n1 {
                draw_switched(&mut m1, &mut num_steps, &mut num_sum)?;
            }
            while m2 < n2 {
                draw_original(&mut m2, &mut den_steps)?;
            }
        }
        CycleBudget::Steps { steps, split } => {
            let target = libm::ceil(split * steps as f64) as u64;
            while m1 == 0 || num_steps < target {
                draw_switched(&mut m1, &mut num_steps, &mut num_sum)?;
            }
            while m2 == 0 || num_steps + den_steps < steps {
                draw_original(&mut m2, &mut den_steps)?;
            }
        }
    }

    let numerator = num_sum / m1 as f64;
    let denominator = den_steps as f64 / m2 as f64;
    Ok(RisEstimate {
        value: numerator / denominator,
        numerator,
        denominator,
        m1,
        m2,
        steps: num_steps + den_steps,
    })
}

/// Cycle counts `(m1, m2)` realized by a step budget for the given stream.
pub fn budget_match_cycles(
    original: &TandemParams,
    alternative: &TandemParams,
    gamma: u64,
    steps: u64,
    split: f64,
    stream: RngStream,
) -> Result<(u64, u64)> {
    let r = ris_estimate(original, alternative, gamma, CycleBudget::Steps { steps, split }, stream)?;
    Ok((r.m1, r.m2))
}

/// Root mean squared error over rounds, relative to the truth.
#[derive(Debug, Clone, PartialEq)]
pub struct RmseReport {
    pub estimates: Vec<f64>,
    pub rmse: f64,
    pub truth: f64,
    pub rounds: usize,
}

impl RmseReport {
    pub fn new(estimates: Vec<f64>, truth: f64) -> Self {
        let rmse = relative_rmse(&estimates, truth);
        Self {
            rounds: estimates.len(),
            estimates,
            rmse,
            truth,
        }
    }

    pub fn mean(&self) -> f64 {
        self.estimates.iter().sum::<f64>() / self.rounds as f64
    }
}

/// `sqrt(mean((est - truth)²)) / truth`.
pub fn relative_rmse(estimates: &[f64], truth: f64) -> f64 {
    let mse = estimates
        .iter()
        .map(|e| (e - truth) * (e - truth))
        .sum::<f64>()
        / estimates.len() as f64;
    libm::sqrt(mse) / truth
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::sample_trajectory;

    fn table1() -> TandemParams {
        TandemParams::new(0.1, 0.46, 0.44).unwrap()
    }

    fn s(x1: u32, x2: u32) -> QueueState {
        QueueState::new(x1, x2)
    }

    #[test]
    fn direct_arithmetic() {
        let samples = [s(0, 0), s(1, 0), s(0, 1)];
        let w = |st: QueueState| match (st.x1, st.x2) {
            (1, 0) => 2.0,
            _ => 1.0,
        };
        assert_eq!(marginal_estimate(&samples, &w, 1).unwrap(), 0.75);
        let many = marginal_estimates(&samples, &[1.0, 2.0, 1.0], &[0, 1, 2]).unwrap();
        assert_eq!(many, alloc::vec![1.0, 0.75, 0.0]);
    }

    #[test]
    fn zero_weights_rejected() {
        let samples = [s(0, 0), s(3, 0)];
        assert!(matches!(
            marginal_estimate(&samples, &ConstantWeight(0.0), 1),
            Err(Error::DegenerateWeights(_))
        ));
        assert!(marginal_estimates(&samples, &[1.0], &[1]).is_err());
    }

    #[test]
    fn unit_weights_give_visit_frequency() {
        let p = table1();
        let t = sample_trajectory(&p, 10_000, QueueState::EMPTY, RngStream::new(4, 4)).unwrap();
        let freq = t.samples().iter().filter(|x| x.total() >= 2).count() as f64 / 10_000.0;
        assert_eq!(plain_monte_carlo(t.samples(), 2).unwrap(), freq);
    }

    #[test]
    fn exact_ratio_weight_matches_model() {
        let p = table1();
        let alt = TandemParams::new(7.0 / 23.0, 8.0 / 23.0, 8.0 / 23.0).unwrap();
        let w = ExactRatio::new(&p, &alt).unwrap();
        for x1 in 0..12 {
            for x2 in 0..12 {
                let st = s(x1, x2);
                let direct = crate::model::exact_stationary_ratio(&p, &alt, st).unwrap();
                assert!((w.weight(st) - direct).abs() <= 1e-12 * direct);
            }
        }
        assert!(ExactRatio::new(&p, &p.swapped()).is_err());
    }

    #[test]
    fn ris_zero_hits_gives_zero() {
        let p = table1();
        // γ far beyond anything a handful of cycles reaches under P itself
        let r = ris_estimate(&p, &p, 200, CycleBudget::Counts { m1: 10, m2: 10 }, RngStream::new(1, 1))
            .unwrap();
        assert_eq!(r.numerator, 0.0);
        assert_eq!(r.value, 0.0);
        assert!(r.denominator >= 1.0);
    }

    #[test]
    fn ris_budget_rules() {
        let p = table1();
        let q = p.swapped();
        let stream = RngStream::new(12, 0);
        assert!(ris_estimate(&p, &q, 5, CycleBudget::Steps { steps: 0, split: 0.5 }, stream).is_err());
        assert!(ris_estimate(&p, &q, 5, CycleBudget::Steps { steps: 10, split: 1.0 }, stream).is_err());
        assert!(ris_estimate(&p, &q, 5, CycleBudget::Counts { m1: 0, m2: 1 }, stream).is_err());
        let r = ris_estimate(&p, &q, 5, CycleBudget::Steps { steps: 20_000, split: 0.5 }, stream).unwrap();
        assert!(r.steps >= 20_000);
        let again = budget_match_cycles(&p, &q, 5, 20_000, 0.5, stream).unwrap();
        assert_eq!(again, (r.m1, r.m2));
        let fixed = ris_estimate(&p, &q, 5, CycleBudget::Counts { m1: r.m1, m2: r.m2 }, stream).unwrap();
        assert_eq!(fixed, r);
    }

    #[test]
    fn rmse_formula() {
        assert_eq!(relative_rmse(&[2.0, 2.0], 2.0), 0.0);
        assert!((relative_rmse(&[3.0], 2.0) - 0.5).abs() < 1e-15);
        let r = RmseReport::new(alloc::vec![1.0, 3.0], 2.0);
        assert_eq!(r.rounds, 2);
        assert!((r.rmse - 0.5).abs() < 1e-15);
        assert_eq!(r.mean(), 2.0);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("foo".parse::<Method>().is_err());
    }

    #[test]
    fn report_flags_out_of_range() {
        let e = Estimate { value: 1.5, method: Method::Ris, steps: 10 };
        assert!(EstimateReport::new(e, 0.0, RngStream::new(0, 0)).is_flagged());
        let e = Estimate { value: 0.2, method: Method::Mis, steps: 10 };
        assert!(!EstimateReport::new(e, 0.0, RngStream::new(0, 0)).is_flagged());
    }
}

//! Two-station tandem queue, its uniformized DTMC and closed-form stationary
//! quantities.
//!
//! Jobs arrive at rate λ, are served at station 1 (rate μ1) and then at
//! station 2 (rate μ2). Uniformizing with Λ = λ + μ1 + μ2 gives a DTMC on
//! `(x1, x2)` whose stationary law is the Jackson product form
//! `π(x1, x2) = (1-ρ1) ρ1^x1 (1-ρ2) ρ2^x2` with `ρi = λ/μi`.

use core::fmt;

use crate::error::{Error, Result};

/// Number of jobs at station 1 and station 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct QueueState {
    pub x1: u32,
    pub x2: u32,
}

impl QueueState {
    pub const EMPTY: QueueState = QueueState { x1: 0, x2: 0 };

    pub const fn new(x1: u32, x2: u32) -> Self {
        Self { x1, x2 }
    }

    /// Total number of jobs in the network.
    pub fn total(self) -> u64 {
        u64::from(self.x1) + u64::from(self.x2)
    }

    pub fn is_empty(self) -> bool {
        self == Self::EMPTY
    }

    /// Coordinates as reals, for kernels and the ratio network.
    pub fn to_point(self) -> [f64; 2] {
        [f64::from(self.x1), f64::from(self.x2)]
    }
}

impl fmt::Display for QueueState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x1, self.x2)
    }
}

impl From<(u32, u32)> for QueueState {
    fn from((x1, x2): (u32, u32)) -> Self {
        Self { x1, x2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StabilityClass {
    /// λ < μ2 < μ1.
    OriginalStable,
    /// λ < μ2 = μ1, the weaker condition admitted for alternative systems.
    AlternativeStable,
    Unstable,
}

impl StabilityClass {
    pub fn is_stable(self) -> bool {
        !matches!(self, StabilityClass::Unstable)
    }
}

/// The events of the uniformized chain, in sampling order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    Arrival,
    Transfer,
    Departure,
    SelfLoop,
}

/// Arrival and service rates of a tandem network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TandemParams {
    lambda: f64,
    mu1: f64,
    mu2: f64,
    uniformization: f64,
}

impl TandemParams {
    pub fn new(lambda: f64, mu1: f64, mu2: f64) -> Result<Self> {
        for (name, value) in [("lambda", lambda), ("mu1", mu1), ("mu2", mu2)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidRate { name, value });
            }
        }
        Ok(Self {
            lambda,
            mu1,
            mu2,
            uniformization: lambda + mu1 + mu2,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mu1(&self) -> f64 {
        self.mu1
    }

    pub fn mu2(&self) -> f64 {
        self.mu2
    }

    /// Λ = λ + μ1 + μ2.
    pub fn uniformization(&self) -> f64 {
        self.uniformization
    }

    /// `(ρ1, ρ2) = (λ/μ1, λ/μ2)`, or `None` when the network is unstable.
    pub fn load_factors(&self) -> Option<(f64, f64)> {
        self.stability()
            .is_stable()
            .then(|| self.raw_load_factors())
    }

    fn raw_load_factors(&self) -> (f64, f64) {
        (self.lambda / self.mu1, self.lambda / self.mu2)
    }

    pub fn stability(&self) -> StabilityClass {
        classify_stability(self)
    }

    /// `(μ2, μ1, λ)`: the network with arrival and second-station rates swapped.
    pub fn swapped(&self) -> Self {
        Self::new(self.mu2, self.mu1, self.lambda).expect("rates already validated")
    }

    fn require_stable(&self) -> Result<(f64, f64)> {
        self.load_factors().ok_or(Error::Unstable {
            lambda: self.lambda,
            mu1: self.mu1,
            mu2: self.mu2,
        })
    }

    /// Picks the event for a uniform draw `u ∈ [0, 1)`.
    ///
    /// Disabled services (empty station) fall through to a self-loop, which
    /// reproduces [`transition_distribution`] exactly.
    #[inline]
    pub fn event_for(&self, from: QueueState, u: f64) -> Event {
        let r = u * self.uniformization;
        if r < self.lambda {
            Event::Arrival
        } else if r < self.lambda + self.mu1 {
            if from.x1 > 0 {
                Event::Transfer
            } else {
                Event::SelfLoop
            }
        } else if from.x2 > 0 {
            Event::Departure
        } else {
            Event::SelfLoop
        }
    }
}

impl fmt::Display for TandemParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(λ={}, μ1={}, μ2={})", self.lambda, self.mu1, self.mu2)
    }
}

/// Applies an event to a state.
#[inline]
pub fn apply_event(from: QueueState, event: Event) -> QueueState {
    match event {
        Event::Arrival => QueueState::new(from.x1 + 1, from.x2),
        Event::Transfer => QueueState::new(from.x1 - 1, from.x2 + 1),
        Event::Departure => QueueState::new(from.x1, from.x2 - 1),
        Event::SelfLoop => from,
    }
}

pub fn classify_stability(params: &TandemParams) -> StabilityClass {
    let (lambda, mu1, mu2) = (params.lambda, params.mu1, params.mu2);
    if lambda < mu2 && mu2 < mu1 {
        StabilityClass::OriginalStable
    } else if lambda < mu2 && mu2 <= mu1 {
        StabilityClass::AlternativeStable
    } else {
        StabilityClass::Unstable
    }
}

/// Support of one row of the transition kernel, at most four entries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionRow {
    entries: [(QueueState, f64); 4],
    len: usize,
}

impl TransitionRow {
    pub fn iter(&self) -> impl Iterator<Item = (QueueState, f64)> + '_ {
        self.entries[..self.len].iter().copied()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn probability_of(&self, to: QueueState) -> f64 {
        self.iter()
            .find(|&(s, _)| s == to)
            .map_or(0.0, |(_, p)| p)
    }
}

/// Row `P(· | from)` of the uniformized kernel.
///
/// Entries appear in the order arrival, transfer, departure, self-loop. The
/// self-loop carries the rate of every disabled event plus nothing else, so it
/// is omitted entirely when no event is disabled.
pub fn transition_distribution(params: &TandemParams, from: QueueState) -> TransitionRow {
    let total = params.uniformization;
    let mut entries = [(from, 0.0); 4];
    let mut len = 0;
    let mut idle_rate = 0.0;

    entries[len] = (apply_event(from, Event::Arrival), params.lambda / total);
    len += 1;
    if from.x1 > 0 {
        entries[len] = (apply_event(from, Event::Transfer), params.mu1 / total);
        len += 1;
    } else {
        idle_rate += params.mu1;
    }
    if from.x2 > 0 {
        entries[len] = (apply_event(from, Event::Departure), params.mu2 / total);
        len += 1;
    } else {
        idle_rate += params.mu2;
    }
    if idle_rate > 0.0 {
        entries[len] = (from, idle_rate / total);
        len += 1;
    }
    TransitionRow { entries, len }
}

/// Point evaluation `P(to | from)`; zero for unreachable pairs.
pub fn transition_probability(params: &TandemParams, from: QueueState, to: QueueState) -> f64 {
    transition_distribution(params, from).probability_of(to)
}

/// `P(to | from) / Q(to | from)` for kernels `p` and `q`.
pub fn step_likelihood_ratio(
    p: &TandemParams,
    q: &TandemParams,
    from: QueueState,
    to: QueueState,
) -> Result<f64> {
    let num = transition_probability(p, from, to);
    let den = transition_probability(q, from, to);
    match (num > 0.0, den > 0.0) {
        (_, true) => Ok(num / den),
        (true, false) => Err(Error::SupportMismatch { from, to }),
        (false, false) => Err(Error::IllegalTransition { from, to }),
    }
}

/// Natural log of [`step_likelihood_ratio`].
pub fn step_log_likelihood_ratio(
    p: &TandemParams,
    q: &TandemParams,
    from: QueueState,
    to: QueueState,
) -> Result<f64> {
    step_likelihood_ratio(p, q, from, to).map(libm::log)
}

/// `log π(state)` under the product form.
pub fn log_stationary_probability(params: &TandemParams, state: QueueState) -> Result<f64> {
    let (rho1, rho2) = params.require_stable()?;
    Ok(libm::log1p(-rho1)
        + f64::from(state.x1) * libm::log(rho1)
        + libm::log1p(-rho2)
        + f64::from(state.x2) * libm::log(rho2))
}

pub fn stationary_probability(params: &TandemParams, state: QueueState) -> Result<f64> {
    log_stationary_probability(params, state).map(libm::exp)
}

/// `log P(X1 + X2 ≥ γ)` from the closed form
/// `((1-ρ1) ρ2^(γ+1) - (1-ρ2) ρ1^(γ+1)) / (ρ2 - ρ1)`.
///
/// The expression is symmetric in (ρ1, ρ2); it is evaluated with the larger
/// load factor factored out so that it stays finite for very large γ.
pub fn log_exact_overflow_probability(params: &TandemParams, gamma: u64) -> Result<f64> {
    let (rho1, rho2) = params.require_stable()?;
    if gamma == 0 {
        return Ok(0.0);
    }
    if rho1 == rho2 {
        return Err(Error::DegenerateLoads(rho1));
    }
    let (hi, lo) = if rho1 > rho2 { (rho1, rho2) } else { (rho2, rho1) };
    let power = gamma as f64 + 1.0;
    let log_lead = libm::log1p(-lo) + power * libm::log(hi) - libm::log(hi - lo);
    // (1-hi) lo^(γ+1) / ((1-lo) hi^(γ+1)) < 1 strictly
    let log_rel =
        libm::log1p(-hi) - libm::log1p(-lo) + power * (libm::log(lo) - libm::log(hi));
    Ok(log_lead + libm::log1p(-libm::exp(log_rel)))
}

pub fn exact_overflow_probability(params: &TandemParams, gamma: u64) -> Result<f64> {
    log_exact_overflow_probability(params, gamma).map(libm::exp)
}

/// `log(π(state) / π̃(state))`.
pub fn log_exact_stationary_ratio(
    original: &TandemParams,
    alternative: &TandemParams,
    state: QueueState,
) -> Result<f64> {
    Ok(log_stationary_probability(original, state)?
        - log_stationary_probability(alternative, state)?)
}

pub fn exact_stationary_ratio(
    original: &TandemParams,
    alternative: &TandemParams,
    state: QueueState,
) -> Result<f64> {
    log_exact_stationary_ratio(original, alternative, state).map(libm::exp)
}

/// True when `μ2(μ1+μ2) / (λ+μ1)² > 1`, the regime in which no switched
/// regenerative estimator is asymptotically efficient.
pub fn check_ris_inefficiency_condition(params: &TandemParams) -> bool {
    let lhs = params.mu2 * (params.mu1 + params.mu2);
    let rhs = (params.lambda + params.mu1) * (params.lambda + params.mu1);
    lhs > rhs
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table1() -> TandemParams {
        TandemParams::new(0.1, 0.46, 0.44).unwrap()
    }

    fn s(x1: u32, x2: u32) -> QueueState {
        QueueState::new(x1, x2)
    }

    #[test]
    fn rejects_nonpositive_rates() {
        assert!(matches!(
            TandemParams::new(0.0, 1.0, 1.0),
            Err(Error::InvalidRate { name: "lambda", .. })
        ));
        assert!(TandemParams::new(1.0, -1.0, 1.0).is_err());
        assert!(TandemParams::new(1.0, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn stability_classes() {
        assert_eq!(table1().stability(), StabilityClass::OriginalStable);
        let swapped = TandemParams::new(11.0 / 25.0, 23.0 / 50.0, 1.0 / 10.0).unwrap();
        assert_eq!(swapped.stability(), StabilityClass::Unstable);
        assert_eq!(swapped, table1().swapped());
        let equal = TandemParams::new(1.0, 1.0, 1.0).unwrap();
        assert_eq!(equal.stability(), StabilityClass::Unstable);
        let alt = TandemParams::new(7.0 / 23.0, 8.0 / 23.0, 8.0 / 23.0).unwrap();
        assert_eq!(alt.stability(), StabilityClass::AlternativeStable);
        assert!(alt.load_factors().is_some());
        assert!(equal.load_factors().is_none());
    }

    #[test]
    fn kernel_row_interior() {
        let row = transition_distribution(&table1(), s(2, 3));
        assert_eq!(row.len(), 3);
        let expected = [(s(3, 3), 0.1), (s(1, 4), 0.46), (s(2, 2), 0.44)];
        for ((state, p), (es, ep)) in row.iter().zip(expected) {
            assert_eq!(state, es);
            assert!((p - ep).abs() < 1e-15);
        }
        assert_eq!(row.probability_of(s(2, 3)), 0.0);
    }

    #[test]
    fn kernel_row_empty_state() {
        let row = transition_distribution(&table1(), QueueState::EMPTY);
        assert_eq!(row.len(), 2);
        assert!((row.probability_of(s(1, 0)) - 0.1).abs() < 1e-15);
        assert!((row.probability_of(s(0, 0)) - 0.9).abs() < 1e-15);
        assert!((transition_probability(&table1(), s(0, 0), s(0, 0)) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn point_evaluation() {
        let p = table1();
        assert!((transition_probability(&p, s(2, 3), s(1, 4)) - 0.46).abs() < 1e-15);
        assert_eq!(transition_probability(&p, s(2, 3), s(5, 5)), 0.0);
    }

    #[test]
    fn likelihood_ratios() {
        let p = table1();
        let q = p.swapped();
        assert_eq!(step_likelihood_ratio(&p, &p, s(2, 3), s(3, 3)).unwrap(), 1.0);
        let arrival = step_likelihood_ratio(&p, &q, s(2, 3), s(3, 3)).unwrap();
        assert!((arrival - 0.1 / 0.44).abs() < 1e-14);
        let transfer = step_likelihood_ratio(&p, &q, s(2, 3), s(1, 4)).unwrap();
        assert!((transfer - 1.0).abs() < 1e-15);
        assert!(matches!(
            step_likelihood_ratio(&p, &q, s(2, 3), s(5, 5)),
            Err(Error::IllegalTransition { .. })
        ));
    }

    #[test]
    fn supports_coincide_for_positive_rates() {
        // The support of a row depends only on which stations are empty, so two
        // valid parameter sets never produce a support mismatch.
        let p = table1();
        let q = p.swapped();
        for x1 in 0..4 {
            for x2 in 0..4 {
                let from = s(x1, x2);
                for (to, _) in transition_distribution(&q, from).iter() {
                    assert!(step_likelihood_ratio(&p, &q, from, to).unwrap() > 0.0);
                }
            }
        }
        assert!(matches!(
            step_likelihood_ratio(&p, &q, s(1, 1), s(1, 1)),
            Err(Error::IllegalTransition { .. })
        ));
    }

    #[test]
    fn stationary_at_origin() {
        let p = table1();
        let expected = (1.0 - 5.0 / 23.0) * (1.0 - 1.0 / 4.4);
        let got = stationary_probability(&p, QueueState::EMPTY).unwrap();
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.604_743).abs() < 1e-6);
        let unstable = p.swapped();
        assert!(stationary_probability(&unstable, QueueState::EMPTY).is_err());
    }

    #[test]
    fn stationary_geometric_structure() {
        let p = table1();
        let (rho1, rho2) = p.load_factors().unwrap();
        for x1 in 0..10 {
            for x2 in 0..10 {
                let base = stationary_probability(&p, s(x1, x2)).unwrap();
                let right = stationary_probability(&p, s(x1 + 1, x2)).unwrap();
                let up = stationary_probability(&p, s(x1, x2 + 1)).unwrap();
                assert!((right / base - rho1).abs() < 1e-12);
                assert!((up / base - rho2).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn overflow_table_values() {
        let p = table1();
        for (gamma, printed) in [(16, 4.891e-10), (18, 2.712e-11), (20, 1.489e-12)] {
            let v = exact_overflow_probability(&p, gamma).unwrap();
            assert!(((v - printed) / printed).abs() < 1e-3, "γ={gamma}: {v}");
        }
        assert_eq!(exact_overflow_probability(&p, 0).unwrap(), 1.0);
    }

    #[test]
    fn overflow_survives_huge_thresholds() {
        let p = table1();
        let log_p = log_exact_overflow_probability(&p, 2000).unwrap();
        assert!(log_p.is_finite() && log_p < -2000.0);
        let mut prev = f64::INFINITY;
        for gamma in 0..400 {
            let v = log_exact_overflow_probability(&p, gamma).unwrap();
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn overflow_degenerate_loads() {
        let p = TandemParams::new(0.1, 0.5, 0.5).unwrap();
        assert!(matches!(
            exact_overflow_probability(&p, 3),
            Err(Error::DegenerateLoads(_))
        ));
        assert_eq!(exact_overflow_probability(&p, 0).unwrap(), 1.0);
    }

    #[test]
    fn stationary_ratio_structure() {
        let p = table1();
        let alt = TandemParams::new(7.0 / 23.0, 8.0 / 23.0, 8.0 / 23.0).unwrap();
        assert!((exact_stationary_ratio(&p, &p, s(4, 9)).unwrap() - 1.0).abs() < 1e-14);
        let (r1, r2) = p.load_factors().unwrap();
        let (a1, a2) = alt.load_factors().unwrap();
        let origin = exact_stationary_ratio(&p, &alt, QueueState::EMPTY).unwrap();
        let expected = (1.0 - r1) * (1.0 - r2) / ((1.0 - a1) * (1.0 - a2));
        assert!((origin - expected).abs() < 1e-12 * expected);
        for x1 in 0..8 {
            for x2 in 0..8 {
                let r = exact_stationary_ratio(&p, &alt, s(x1, x2)).unwrap();
                let model = origin
                    * libm::pow(r1 / a1, f64::from(x1))
                    * libm::pow(r2 / a2, f64::from(x2));
                assert!(r > 0.0);
                assert!((r - model).abs() <= 1e-12 * model);
            }
        }
    }

    #[test]
    fn inefficiency_condition() {
        assert!(check_ris_inefficiency_condition(&table1()));
        let tiny = TandemParams::new(0.1, 0.46, 1e-9).unwrap();
        assert!(!check_ris_inefficiency_condition(&tiny));
        // μ2(μ1+μ2) = (λ+μ1)²: 1·(3+1) = (1+1)²
        let boundary = TandemParams::new(1.0, 3.0, 1.0).unwrap();
        assert!(!check_ris_inefficiency_condition(&boundary));
    }

    #[test]
    fn sampling_events_match_row() {
        let p = table1();
        let from = s(0, 2);
        // u·Λ below λ → arrival; in [λ, λ+μ1) → idle station 1 → self-loop.
        assert_eq!(p.event_for(from, 0.05), Event::Arrival);
        assert_eq!(p.event_for(from, 0.3), Event::SelfLoop);
        assert_eq!(p.event_for(from, 0.9), Event::Departure);
    }
}

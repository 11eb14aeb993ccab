//! Sampling of uniformized-chain paths and regenerative cycles.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{apply_event, Event, QueueState, TandemParams};
use crate::rng::{RngStream, StreamRng};

/// Default hard cap on a single regenerative cycle, in chain steps.
pub const DEFAULT_CYCLE_CAP: u64 = 10_000_000;

/// One step of the uniformized chain.
#[inline]
pub fn step(params: &TandemParams, from: QueueState, rng: &mut StreamRng) -> QueueState {
    apply_event(from, params.event_for(from, rng.uniform()))
}

/// A sampled path `X_0, X_1, ..., X_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub params: TandemParams,
    /// `T + 1` states, `states[0]` being the initial state.
    pub states: Vec<QueueState>,
    pub stream: RngStream,
}

impl Trajectory {
    /// Number of steps `T`.
    pub fn horizon(&self) -> usize {
        self.states.len() - 1
    }

    /// `X_1, ..., X_T`: the simulation data, excluding the initial state.
    pub fn samples(&self) -> &[QueueState] {
        &self.states[1..]
    }

    pub fn last(&self) -> QueueState {
        *self.states.last().expect("trajectory is never empty")
    }
}

/// Appends `steps` states to `path`, continuing from its last element.
pub fn extend_path(
    params: &TandemParams,
    path: &mut Vec<QueueState>,
    steps: usize,
    rng: &mut StreamRng,
) {
    let mut state = *path.last().expect("path needs an initial state");
    path.reserve(steps);
    for _ in 0..steps {
        state = step(params, state, rng);
        path.push(state);
    }
}

pub fn sample_trajectory(
    params: &TandemParams,
    steps: usize,
    init: QueueState,
    stream: RngStream,
) -> Result<Trajectory> {
    sample_trajectory_with_burn_in(params, steps, 0, init, stream)
}

/// Like [`sample_trajectory`], discarding `burn_in` steps first; the last
/// discarded state becomes `states[0]`.
pub fn sample_trajectory_with_burn_in(
    params: &TandemParams,
    steps: usize,
    burn_in: usize,
    init: QueueState,
    stream: RngStream,
) -> Result<Trajectory> {
    if steps == 0 {
        return Err(Error::ZeroCount("horizon"));
    }
    let mut rng = stream.rng();
    let mut start = init;
    for _ in 0..burn_in {
        start = step(params, start, &mut rng);
    }
    let mut states = Vec::with_capacity(steps + 1);
    states.push(start);
    extend_path(params, &mut states, steps, &mut rng);
    Ok(Trajectory {
        params: *params,
        states,
        stream,
    })
}

/// A path from `(0,0)` to its first return to `(0,0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegenerativeCycle {
    /// `alpha + 1` states, first and last equal to `(0,0)`.
    pub states: Vec<QueueState>,
    /// Cycle length in chain steps; a self-loop at the empty state gives 1.
    pub alpha: u64,
}

fn walk_cycle(
    params: &TandemParams,
    rng: &mut StreamRng,
    cap: u64,
    mut record: Option<&mut Vec<QueueState>>,
) -> Result<u64> {
    let mut state = QueueState::EMPTY;
    let mut alpha = 0u64;
    loop {
        if alpha == cap {
            return Err(Error::CycleCapExceeded { cap });
        }
        state = step(params, state, rng);
        alpha += 1;
        if let Some(path) = record.as_deref_mut() {
            path.push(state);
        }
        if state.is_empty() {
            return Ok(alpha);
        }
    }
}

pub fn sample_regenerative_cycle(
    params: &TandemParams,
    rng: &mut StreamRng,
    cap: u64,
) -> Result<RegenerativeCycle> {
    let mut states = Vec::new();
    states.push(QueueState::EMPTY);
    let alpha = walk_cycle(params, rng, cap, Some(&mut states))?;
    Ok(RegenerativeCycle { states, alpha })
}

/// Length of a regenerative cycle without recording its states.
pub fn regenerative_cycle_length(
    params: &TandemParams,
    rng: &mut StreamRng,
    cap: u64,
) -> Result<u64> {
    walk_cycle(params, rng, cap, None)
}

/// A cycle that follows the alternative kernel Q until the total reaches γ
/// (or the cycle ends) and the original kernel P afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchedCycle {
    pub states: Vec<QueueState>,
    pub alpha_tilde: u64,
    /// First step whose state has `x1 + x2 ≥ γ`.
    pub tau_tilde: Option<u64>,
    /// `Σ log P/Q` over the Q-governed steps `1..=min(τ̃, α̃)`.
    pub log_lr: f64,
    pub reached_gamma: bool,
    /// `Σ_{t=1}^{α̃} 1{x1 + x2 ≥ γ}`.
    pub hits: u64,
}

impl SwitchedCycle {
    /// `hits · Π P/Q`, the cycle's contribution to the regenerative numerator.
    pub fn weighted_hits(&self) -> f64 {
        weighted_hits(self.hits, self.log_lr)
    }
}

/// The same quantities as [`SwitchedCycle`] without the path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchedSummary {
    pub alpha_tilde: u64,
    pub tau_tilde: Option<u64>,
    pub log_lr: f64,
    pub hits: u64,
}

impl SwitchedSummary {
    pub fn weighted_hits(&self) -> f64 {
        weighted_hits(self.hits, self.log_lr)
    }
}

fn weighted_hits(hits: u64, log_lr: f64) -> f64 {
    if hits == 0 {
        0.0
    } else {
        hits as f64 * libm::exp(log_lr)
    }
}

/// Per-event `log P/Q`, with the self-loop entry depending on which stations
/// are empty.
#[derive(Debug, Clone, Copy)]
pub struct LogRatioTable {
    arrival: f64,
    transfer: f64,
    departure: f64,
    /// Indexed by `2·(x1 == 0) + (x2 == 0)`; index 0 is unused (no self-loop).
    self_loop: [f64; 4],
}

impl LogRatioTable {
    pub fn new(p: &TandemParams, q: &TandemParams) -> Self {
        let (lp, lq) = (p.uniformization(), q.uniformization());
        let log_ratio = |a: f64, b: f64| libm::log((a / lp) / (b / lq));
        let idle = |s1: bool, s2: bool, t: &TandemParams| {
            (if s1 { t.mu1() } else { 0.0 }) + (if s2 { t.mu2() } else { 0.0 })
        };
        let mut self_loop = [0.0; 4];
        for (idx, (s1, s2)) in [(false, true), (true, false), (true, true)].into_iter().enumerate() {
            self_loop[idx + 1] = log_ratio(idle(s1, s2, p), idle(s1, s2, q));
        }
        Self {
            arrival: log_ratio(p.lambda(), q.lambda()),
            transfer: log_ratio(p.mu1(), q.mu1()),
            departure: log_ratio(p.mu2(), q.mu2()),
            self_loop,
        }
    }

    #[inline]
    pub fn get(&self, from: QueueState, event: Event) -> f64 {
        match event {
            Event::Arrival => self.arrival,
            Event::Transfer => self.transfer,
            Event::Departure => self.departure,
            Event::SelfLoop => {
                self.self_loop[2 * usize::from(from.x1 == 0) + usize::from(from.x2 == 0)]
            }
        }
    }
}

fn walk_switched(
    original: &TandemParams,
    alternative: &TandemParams,
    table: &LogRatioTable,
    gamma: u64,
    rng: &mut StreamRng,
    cap: u64,
    mut record: Option<&mut Vec<QueueState>>,
) -> Result<SwitchedSummary> {
    let mut state = QueueState::EMPTY;
    let mut alpha = 0u64;
    let mut tau = None;
    let mut log_lr = 0.0;
    let mut hits = 0u64;
    loop {
        if alpha == cap {
            return Err(Error::CycleCapExceeded { cap });
        }
        let from = state;
        if tau.is_none() {
            let event = alternative.event_for(from, rng.uniform());
            log_lr += table.get(from, event);
            state = apply_event(from, event);
        } else {
            state = apply_event(from, original.event_for(from, rng.uniform()));
        }
        alpha += 1;
        if let Some(path) = record.as_deref_mut() {
            path.push(state);
        }
        if state.total() >= gamma {
            hits += 1;
            if tau.is_none() {
                tau = Some(alpha);
            }
        }
        if state.is_empty() {
            return Ok(SwitchedSummary {
                alpha_tilde: alpha,
                tau_tilde: tau,
                log_lr,
                hits,
            });
        }
    }
}

fn check_switched(original: &TandemParams, gamma: u64) -> Result<()> {
    if gamma == 0 {
        return Err(Error::ZeroCount("gamma"));
    }
    if !original.stability().is_stable() {
        return Err(Error::Unstable {
            lambda: original.lambda(),
            mu1: original.mu1(),
            mu2: original.mu2(),
        });
    }
    Ok(())
}

pub fn sample_switched_cycle(
    original: &TandemParams,
    alternative: &TandemParams,
    gamma: u64,
    rng: &mut StreamRng,
    cap: u64,
) -> Result<SwitchedCycle> {
    check_switched(original, gamma)?;
    let table = LogRatioTable::new(original, alternative);
    let mut states = Vec::new();
    states.push(QueueState::EMPTY);
    let s = walk_switched(original, alternative, &table, gamma, rng, cap, Some(&mut states))?;
    Ok(SwitchedCycle {
        states,
        alpha_tilde: s.alpha_tilde,
        tau_tilde: s.tau_tilde,
        log_lr: s.log_lr,
        reached_gamma: s.tau_tilde.is_some(),
        hits: s.hits,
    })
}

/// Reusable sampler for many switched cycles with fixed parameters.
#[derive(Debug, Clone, Copy)]
pub struct SwitchedSampler {
    original: TandemParams,
    alternative: TandemParams,
    table: LogRatioTable,
    gamma: u64,
    cap: u64,
}

impl SwitchedSampler {
    pub fn new(
        original: &TandemParams,
        alternative: &TandemParams,
        gamma: u64,
        cap: u64,
    ) -> Result<Self> {
        check_switched(original, gamma)?;
        Ok(Self {
            original: *original,
            alternative: *alternative,
            table: LogRatioTable::new(original, alternative),
            gamma,
            cap,
        })
    }

    pub fn sample(&self, rng: &mut StreamRng) -> Result<SwitchedSummary> {
        walk_switched(
            &self.original,
            &self.alternative,
            &self.table,
            self.gamma,
            rng,
            self.cap,
            None,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{step_log_likelihood_ratio, transition_probability};

    fn table1() -> TandemParams {
        TandemParams::new(0.1, 0.46, 0.44).unwrap()
    }

    #[test]
    fn zero_horizon_rejected() {
        let r = sample_trajectory(&table1(), 0, QueueState::EMPTY, RngStream::new(1, 0));
        assert_eq!(r.unwrap_err(), Error::ZeroCount("horizon"));
    }

    #[test]
    fn trajectory_shape_and_legality() {
        let p = table1();
        let t = sample_trajectory(&p, 5_000, QueueState::EMPTY, RngStream::new(3, 1)).unwrap();
        assert_eq!(t.states.len(), 5_001);
        assert_eq!(t.states[0], QueueState::EMPTY);
        assert_eq!(t.samples().len(), 5_000);
        for w in t.states.windows(2) {
            assert!(transition_probability(&p, w[0], w[1]) > 0.0);
        }
        let again = sample_trajectory(&p, 5_000, QueueState::EMPTY, RngStream::new(3, 1)).unwrap();
        assert_eq!(t, again);
    }

    #[test]
    fn single_step_support() {
        let p = table1();
        for stream in 0..50 {
            let t = sample_trajectory(&p, 1, QueueState::EMPTY, RngStream::new(0, stream)).unwrap();
            assert!(matches!(t.states[1], QueueState { x1: 1, x2: 0 } | QueueState { x1: 0, x2: 0 }));
        }
    }

    #[test]
    fn regenerative_cycle_ends_empty() {
        let p = table1();
        let mut rng = RngStream::new(11, 0).rng();
        for _ in 0..500 {
            let c = sample_regenerative_cycle(&p, &mut rng, DEFAULT_CYCLE_CAP).unwrap();
            assert_eq!(c.states.len() as u64, c.alpha + 1);
            assert!(c.states.first().unwrap().is_empty());
            assert!(c.states.last().unwrap().is_empty());
            assert!(c.states[1..c.states.len() - 1].iter().all(|s| !s.is_empty()));
        }
    }

    #[test]
    fn cap_stops_runaway_cycles() {
        let unstable = table1().swapped();
        let mut rng = RngStream::new(1, 1).rng();
        // Force the first step to leave (0,0): retry until a cycle of length > 1 hits the cap.
        let mut saw_cap = false;
        for _ in 0..100 {
            if let Err(e) = regenerative_cycle_length(&unstable, &mut rng, 1_000) {
                assert_eq!(e, Error::CycleCapExceeded { cap: 1_000 });
                saw_cap = true;
                break;
            }
        }
        assert!(saw_cap);
    }

    #[test]
    fn log_ratio_table_matches_kernel() {
        let p = table1();
        let q = TandemParams::new(0.3, 0.2, 0.7).unwrap();
        let table = LogRatioTable::new(&p, &q);
        for x1 in 0..3 {
            for x2 in 0..3 {
                let from = QueueState::new(x1, x2);
                for event in [Event::Arrival, Event::Transfer, Event::Departure, Event::SelfLoop] {
                    let to = apply_event_checked(from, event);
                    let Some(to) = to else { continue };
                    if transition_probability(&q, from, to) == 0.0 {
                        continue;
                    }
                    let direct = step_log_likelihood_ratio(&p, &q, from, to).unwrap();
                    assert!((table.get(from, event) - direct).abs() < 1e-14, "{from} {event:?}");
                }
            }
        }
    }

    fn apply_event_checked(from: QueueState, event: Event) -> Option<QueueState> {
        match event {
            Event::Transfer if from.x1 == 0 => None,
            Event::Departure if from.x2 == 0 => None,
            Event::SelfLoop if from.x1 > 0 && from.x2 > 0 => None,
            _ => Some(apply_event(from, event)),
        }
    }

    #[test]
    fn switched_cycle_invariants() {
        let p = table1();
        let q = p.swapped();
        let mut rng = RngStream::new(5, 5).rng();
        for _ in 0..300 {
            let c = sample_switched_cycle(&p, &q, 6, &mut rng, DEFAULT_CYCLE_CAP).unwrap();
            assert_eq!(c.states.len() as u64, c.alpha_tilde + 1);
            assert!(c.states.last().unwrap().is_empty());
            assert_eq!(c.reached_gamma, c.tau_tilde.is_some());
            let expected_hits = c.states[1..].iter().filter(|s| s.total() >= 6).count() as u64;
            assert_eq!(c.hits, expected_hits);
            let governed = c.tau_tilde.unwrap_or(c.alpha_tilde) as usize;
            if let Some(tau) = c.tau_tilde {
                let tau = tau as usize;
                assert!(c.states[tau].total() >= 6);
                assert!(c.states[..tau].iter().all(|s| s.total() < 6));
            }
            let mut log_lr = 0.0;
            for w in c.states[..=governed].windows(2) {
                log_lr += step_log_likelihood_ratio(&p, &q, w[0], w[1]).unwrap();
            }
            assert!((log_lr - c.log_lr).abs() < 1e-9 * (1.0 + log_lr.abs()));
        }
    }

    #[test]
    fn gamma_one_always_reached() {
        let p = table1();
        let q = p.swapped();
        let mut rng = RngStream::new(8, 0).rng();
        for _ in 0..200 {
            let c = sample_switched_cycle(&p, &q, 1, &mut rng, DEFAULT_CYCLE_CAP).unwrap();
            if c.alpha_tilde == 1 {
                // self-loop at the empty state never leaves it
                assert!(!c.reached_gamma);
                continue;
            }
            assert!(c.reached_gamma);
            let tau = c.tau_tilde.unwrap() as usize;
            assert_eq!(c.states[tau], QueueState::new(1, 0));
            assert!(c.states[1..tau].iter().all(|s| s.is_empty()));
        }
    }

    #[test]
    fn identical_kernels_give_zero_log_lr() {
        let p = table1();
        let mut rng = RngStream::new(9, 0).rng();
        for _ in 0..200 {
            let c = sample_switched_cycle(&p, &p, 2, &mut rng, DEFAULT_CYCLE_CAP).unwrap();
            assert_eq!(c.log_lr, 0.0);
        }
    }

    #[test]
    fn sampler_matches_recording_walk() {
        let p = table1();
        let q = p.swapped();
        let sampler = SwitchedSampler::new(&p, &q, 5, DEFAULT_CYCLE_CAP).unwrap();
        let mut a = RngStream::new(1, 2).rng();
        let mut b = RngStream::new(1, 2).rng();
        for _ in 0..100 {
            let s = sampler.sample(&mut a).unwrap();
            let c = sample_switched_cycle(&p, &q, 5, &mut b, DEFAULT_CYCLE_CAP).unwrap();
            assert_eq!(s.alpha_tilde, c.alpha_tilde);
            assert_eq!(s.hits, c.hits);
            assert_eq!(s.log_lr, c.log_lr);
        }
    }

    #[test]
    fn switched_rejects_bad_inputs() {
        let p = table1();
        let mut rng = RngStream::new(0, 0).rng();
        assert!(sample_switched_cycle(&p, &p, 0, &mut rng, 10).is_err());
        assert!(sample_switched_cycle(&p.swapped(), &p, 3, &mut rng, 10).is_err());
    }
}

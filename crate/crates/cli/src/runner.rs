//! Benchmark execution: independent per-round jobs on a worker pool, folded
//! into rMSE cells in a fixed order.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rayon::prelude::*;
use tandem_core::estimators::{marginal_estimates, relative_rmse, ris_estimate, CycleBudget, ExactRatio};
use tandem_core::kernels::{kernel_set_name, KernelKind};
use tandem_core::model::exact_overflow_probability;
use tandem_core::ratio::{train, RatioModel};
use tandem_core::simulate::sample_trajectory;
use tandem_core::{QueueState, TandemParams};

use crate::config::{ExperimentConfig, MethodName, Rates};
use crate::error::{CliError, Result};
use crate::seeds;

/// A cell aborts when more than this fraction of its rounds fail.
pub const MAX_FAILED_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct CellKey {
    pub method: MethodName,
    /// The system the estimator samples from: the alternative for MIS, MLIS
    /// and RIS, the original itself for plain Monte Carlo.
    pub sampled: Rates,
    pub kernels: Option<String>,
    pub gamma: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellStatus {
    Ok,
    Aborted,
}

impl CellStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CellStatus::Ok => "ok",
            CellStatus::Aborted => "aborted",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub key: CellKey,
    pub horizon: usize,
    pub rounds: usize,
    pub failed_rounds: usize,
    pub truth: f64,
    /// Successful rounds only, in round order.
    pub estimates: Vec<f64>,
    pub mean_estimate: f64,
    pub rmse: f64,
    /// Mean over rounds of the Pearson correlation between learned and exact
    /// log weights (MLIS only).
    pub log_weight_corr: Option<f64>,
    pub status: CellStatus,
    /// First failure message, if any round failed.
    pub first_error: Option<String>,
    pub simulation_seconds: f64,
    pub training_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub estimate: std::result::Result<f64, String>,
    pub log_weight_corr: Option<f64>,
    pub simulation_seconds: f64,
    pub training_seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Job {
    Trajectory { alt: usize, round: u64 },
    MonteCarlo { round: u64 },
    Ris { gamma: usize, round: u64 },
}

/// A validated configuration with everything a round needs precomputed.
pub struct Plan {
    pub config: ExperimentConfig,
    original: TandemParams,
    alternatives: Vec<TandemParams>,
    ris_alternative: TandemParams,
    kernel_sets: Vec<Vec<KernelKind>>,
    kernel_names: Vec<String>,
    truths: Vec<f64>,
    pub cells: Vec<CellKey>,
    /// Used instead of training when set (the `estimate --model` path).
    pub model_override: Option<RatioModel>,
}

impl Plan {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let original = config.original_params()?;
        let alternatives = config
            .alternatives
            .iter()
            .map(Rates::params)
            .collect::<Result<Vec<_>>>()?;
        let ris_alternative = config.ris_alternative_rates().params()?;
        let kernel_sets = if config.has(MethodName::Mlis) {
            config.kernel_sets()?
        } else {
            Vec::new()
        };
        let kernel_names = kernel_sets.iter().map(|k| kernel_set_name(k)).collect();
        let truths = config
            .gammas
            .iter()
            .map(|&g| exact_overflow_probability(&original, g))
            .collect::<tandem_core::Result<Vec<_>>>()?;
        let mut plan = Self {
            config,
            original,
            alternatives,
            ris_alternative,
            kernel_sets,
            kernel_names,
            truths,
            cells: Vec::new(),
            model_override: None,
        };
        plan.cells = plan.enumerate_cells();
        Ok(plan)
    }

    fn enumerate_cells(&self) -> Vec<CellKey> {
        let c = &self.config;
        let mut cells = Vec::new();
        for &method in &c.methods {
            let systems: Vec<Rates> = match method {
                MethodName::Mc => vec![c.original],
                MethodName::Ris => vec![c.ris_alternative_rates()],
                MethodName::Mis | MethodName::Mlis => c.alternatives.clone(),
            };
            let kernels: Vec<Option<String>> = if method == MethodName::Mlis {
                self.kernel_names.iter().cloned().map(Some).collect()
            } else {
                vec![None]
            };
            for sampled in systems {
                for k in &kernels {
                    for &gamma in &c.gammas {
                        cells.push(CellKey {
                            method,
                            sampled,
                            kernels: k.clone(),
                            gamma,
                        });
                    }
                }
            }
        }
        cells
    }

    fn cell_index(&self, method: MethodName, sampled: &Rates, kernels: Option<&str>, gamma: u64) -> usize {
        self.cells
            .iter()
            .position(|k| {
                k.method == method && k.sampled == *sampled && k.kernels.as_deref() == kernels && k.gamma == gamma
            })
            .expect("cell exists for every job output")
    }

    fn jobs(&self, rounds: std::ops::Range<u64>) -> Vec<Job> {
        let c = &self.config;
        let mut jobs = Vec::new();
        for round in rounds {
            if c.has(MethodName::Mis) || c.has(MethodName::Mlis) {
                for alt in 0..self.alternatives.len() {
                    jobs.push(Job::Trajectory { alt, round });
                }
            }
            if c.has(MethodName::Mc) {
                jobs.push(Job::MonteCarlo { round });
            }
            if c.has(MethodName::Ris) {
                for gamma in 0..c.gammas.len() {
                    jobs.push(Job::Ris { gamma, round });
                }
            }
        }
        jobs
    }

    fn run_job(&self, job: Job) -> Vec<(usize, RoundOutcome)> {
        match job {
            Job::Trajectory { alt, round } => self.run_trajectory(alt, round),
            Job::MonteCarlo { round } => self.run_monte_carlo(round),
            Job::Ris { gamma, round } => self.run_ris(gamma, round),
        }
    }

    fn failed_all(&self, cells: impl Iterator<Item = usize>, message: &str, seconds: f64) -> Vec<(usize, RoundOutcome)> {
        cells
            .map(|i| {
                (
                    i,
                    RoundOutcome {
                        estimate: Err(message.to_string()),
                        log_weight_corr: None,
                        simulation_seconds: seconds,
                        training_seconds: 0.0,
                    },
                )
            })
            .collect()
    }

    fn run_trajectory(&self, alt: usize, round: u64) -> Vec<(usize, RoundOutcome)> {
        let c = &self.config;
        let rates = c.alternatives[alt];
        let q = self.alternatives[alt];
        let mut out = Vec::new();
        let gammas = &c.gammas;

        let start = Instant::now();
        let trajectory = sample_trajectory(&q, c.horizon, QueueState::EMPTY, seeds::trajectory(c.seed, &rates, round));
        let sim = start.elapsed().as_secs_f64();
        let trajectory = match trajectory {
            Ok(t) => t,
            Err(e) => {
                let affected: Vec<usize> = self
                    .cells
                    .iter()
                    .enumerate()
                    .filter(|(_, k)| matches!(k.method, MethodName::Mis | MethodName::Mlis) && k.sampled == rates)
                    .map(|(i, _)| i)
                    .collect();
                return self.failed_all(affected.into_iter(), &e.to_string(), sim);
            }
        };
        let exact = ExactRatio::new(&self.original, &q).expect("validated");
        let samples = trajectory.samples();

        if c.has(MethodName::Mis) {
            let start = Instant::now();
            let weights: Vec<f64> = samples.iter().map(|&s| exact.log_weight(s).exp()).collect();
            let estimates = marginal_estimates(samples, &weights, gammas);
            let seconds = sim + start.elapsed().as_secs_f64();
            for (g, &gamma) in gammas.iter().enumerate() {
                let estimate = match &estimates {
                    Ok(v) => Ok(v[g]),
                    Err(e) => Err(e.to_string()),
                };
                out.push((
                    self.cell_index(MethodName::Mis, &rates, None, gamma),
                    RoundOutcome {
                        estimate,
                        log_weight_corr: None,
                        simulation_seconds: seconds,
                        training_seconds: 0.0,
                    },
                ));
            }
        }

        if c.has(MethodName::Mlis) {
            for (set, kinds) in self.kernel_sets.iter().enumerate() {
                let name = &self.kernel_names[set];
                let start = Instant::now();
                let model = match &self.model_override {
                    Some(m) => Ok(m.clone()),
                    None => {
                        let cfg = c.train_config(kinds, seeds::training(c.seed, &rates, name, round));
                        train(samples, &self.original, &q, &cfg, |_, _| {})
                    }
                };
                let train_secs = start.elapsed().as_secs_f64();
                let start = Instant::now();
                let evaluated = model.map_err(|e| e.to_string()).and_then(|model| {
                    let fresh;
                    let eval: &[QueueState] = if c.fresh_evaluation {
                        fresh = sample_trajectory(&q, c.horizon, QueueState::EMPTY, seeds::evaluation(c.seed, &rates, round))
                            .map_err(|e| e.to_string())?;
                        fresh.samples()
                    } else {
                        samples
                    };
                    let weights = model.weights_for(eval);
                    let estimates = marginal_estimates(eval, &weights, gammas).map_err(|e| e.to_string())?;
                    let corr = log_weight_correlation(&model, &exact, eval);
                    Ok((estimates, corr))
                });
                let seconds = sim + start.elapsed().as_secs_f64();
                for (g, &gamma) in gammas.iter().enumerate() {
                    let (estimate, corr) = match &evaluated {
                        Ok((v, corr)) => (Ok(v[g]), Some(*corr)),
                        Err(e) => (Err(e.clone()), None),
                    };
                    out.push((
                        self.cell_index(MethodName::Mlis, &rates, Some(name), gamma),
                        RoundOutcome {
                            estimate,
                            log_weight_corr: corr,
                            simulation_seconds: seconds,
                            training_seconds: train_secs,
                        },
                    ));
                }
            }
        }
        out
    }

    fn run_monte_carlo(&self, round: u64) -> Vec<(usize, RoundOutcome)> {
        let c = &self.config;
        let start = Instant::now();
        let result = sample_trajectory(&self.original, c.horizon, QueueState::EMPTY, seeds::monte_carlo(c.seed, &c.original, round))
            .and_then(|t| {
                let ones = vec![1.0; t.samples().len()];
                marginal_estimates(t.samples(), &ones, &c.gammas)
            });
        let seconds = start.elapsed().as_secs_f64();
        c.gammas
            .iter()
            .enumerate()
            .map(|(g, &gamma)| {
                (
                    self.cell_index(MethodName::Mc, &c.original, None, gamma),
                    RoundOutcome {
                        estimate: result.as_ref().map(|v| v[g]).map_err(|e| e.to_string()),
                        log_weight_corr: None,
                        simulation_seconds: seconds,
                        training_seconds: 0.0,
                    },
                )
            })
            .collect()
    }

    fn run_ris(&self, g: usize, round: u64) -> Vec<(usize, RoundOutcome)> {
        let c = &self.config;
        let gamma = c.gammas[g];
        let rates = c.ris_alternative_rates();
        let start = Instant::now();
        let budget = CycleBudget::Steps {
            steps: c.horizon as u64,
            split: c.ris_split,
        };
        let result = ris_estimate(&self.original, &self.ris_alternative, gamma, budget, seeds::ris(c.seed, &rates, gamma, round));
        vec![(
            self.cell_index(MethodName::Ris, &rates, None, gamma),
            RoundOutcome {
                estimate: result.map(|r| r.value).map_err(|e| e.to_string()),
                log_weight_corr: None,
                simulation_seconds: start.elapsed().as_secs_f64(),
                training_seconds: 0.0,
            },
        )]
    }

    /// All configured rounds on `threads` workers; results do not depend on
    /// `threads`.
    pub fn run(&self, threads: usize, progress: bool) -> Result<Vec<CellResult>> {
        self.run_rounds(0..self.config.rounds as u64, threads, progress)
    }

    pub fn run_rounds(&self, rounds: std::ops::Range<u64>, threads: usize, progress: bool) -> Result<Vec<CellResult>> {
        let jobs = self.jobs(rounds);
        let total = jobs.len();
        let done = AtomicUsize::new(0);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| CliError::config(format!("cannot start {threads} worker threads: {e}")))?;
        let outputs: Vec<Vec<(usize, RoundOutcome)>> = pool.install(|| {
            jobs.par_iter()
                .map(|&job| {
                    let out = self.run_job(job);
                    let n = done.fetch_add(1, Ordering::Relaxed) + 1;
                    if progress {
                        eprintln!("benchmark: {n}/{total} jobs");
                    }
                    out
                })
                .collect()
        });

        // fold in job order, which is round-major, so each cell sees its
        // rounds in increasing order
        let mut per_cell: Vec<Vec<RoundOutcome>> = vec![Vec::new(); self.cells.len()];
        for (i, outcome) in outputs.into_iter().flatten() {
            per_cell[i].push(outcome);
        }
        Ok(self
            .cells
            .iter()
            .zip(per_cell)
            .map(|(key, outcomes)| self.summarize(key, &outcomes))
            .collect())
    }

    fn summarize(&self, key: &CellKey, outcomes: &[RoundOutcome]) -> CellResult {
        let g = self.config.gammas.iter().position(|&g| g == key.gamma).expect("γ in config");
        let truth = self.truths[g];
        let estimates: Vec<f64> = outcomes.iter().filter_map(|o| o.estimate.as_ref().ok().copied()).collect();
        let failed = outcomes.len() - estimates.len();
        let first_error = outcomes.iter().find_map(|o| o.estimate.as_ref().err().cloned());
        let aborted = estimates.is_empty() || failed as f64 > MAX_FAILED_FRACTION * outcomes.len() as f64;
        let corrs: Vec<f64> = outcomes.iter().filter_map(|o| o.log_weight_corr).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        CellResult {
            key: key.clone(),
            horizon: self.config.horizon,
            rounds: outcomes.len(),
            failed_rounds: failed,
            truth,
            mean_estimate: if estimates.is_empty() { f64::NAN } else { mean(&estimates) },
            rmse: if aborted { f64::NAN } else { relative_rmse(&estimates, truth) },
            estimates,
            log_weight_corr: (!corrs.is_empty()).then(|| mean(&corrs)),
            status: if aborted { CellStatus::Aborted } else { CellStatus::Ok },
            first_error,
            simulation_seconds: outcomes.iter().map(|o| o.simulation_seconds).sum(),
            training_seconds: outcomes.iter().map(|o| o.training_seconds).sum(),
        }
    }
}

/// Pearson correlation between `log w_θ` and the exact log ratio over `samples`.
pub fn log_weight_correlation(model: &RatioModel, exact: &ExactRatio, samples: &[QueueState]) -> f64 {
    let learned = model.log_weights_for(samples);
    let truth: Vec<f64> = samples.iter().map(|&s| exact.log_weight(s)).collect();
    let n = samples.len() as f64;
    let ma = learned.iter().sum::<f64>() / n;
    let mb = truth.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (a, b) in learned.iter().zip(&truth) {
        sab += (a - ma) * (b - mb);
        saa += (a - ma) * (a - ma);
        sbb += (b - mb) * (b - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

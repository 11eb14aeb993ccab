//! Experiment configuration: presets, TOML overlay, validation, fingerprint.
//!
//! Precedence, lowest first: the preset (`desk` unless `--preset` says
//! otherwise), then fields present in the `--config` file, then command-line
//! flags.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tandem_core::estimators::{ExactRatio, Method};
use tandem_core::kernels::{parse_kernel_set, KernelKind};
use tandem_core::ratio::TrainConfig;
use tandem_core::TandemParams;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rates {
    pub lambda: f64,
    pub mu1: f64,
    pub mu2: f64,
}

impl Rates {
    pub const fn new(lambda: f64, mu1: f64, mu2: f64) -> Self {
        Self { lambda, mu1, mu2 }
    }

    pub fn params(&self) -> Result<TandemParams> {
        TandemParams::new(self.lambda, self.mu1, self.mu2).map_err(|e| CliError::config(e.to_string()))
    }

    pub fn bits(&self) -> [u64; 3] {
        [self.lambda.to_bits(), self.mu1.to_bits(), self.mu2.to_bits()]
    }
}

impl From<TandemParams> for Rates {
    fn from(p: TandemParams) -> Self {
        Self::new(p.lambda(), p.mu1(), p.mu2())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodName {
    Ris,
    Mis,
    Mlis,
    Mc,
}

impl MethodName {
    pub fn method(self) -> Method {
        match self {
            MethodName::Ris => Method::Ris,
            MethodName::Mis => Method::Mis,
            MethodName::Mlis => Method::Mlis,
            MethodName::Mc => Method::Mc,
        }
    }
}

/// Optimizer and network settings shared by every MLIS cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub iterations: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub alpha_reg: f64,
    pub batch_size: usize,
    /// Kernels per iteration; omitted means the whole kernel set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_batch: Option<usize>,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub original: Rates,
    /// Alternative systems for MIS and MLIS.
    pub alternatives: Vec<Rates>,
    /// Alternative for RIS's switched cycles; omitted means `(μ2, μ1, λ)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ris_alternative: Option<Rates>,
    pub gammas: Vec<u64>,
    /// Steps per round `T`.
    pub horizon: usize,
    pub rounds: usize,
    pub methods: Vec<MethodName>,
    /// Fraction of RIS's step budget spent on numerator cycles.
    pub ris_split: f64,
    /// Kernel sets such as `"ln,gs,lp,im"`; each gives its own MLIS cells.
    pub kernel_sets: Vec<String>,
    pub train: TrainSection,
    /// Evaluate MLIS on a fresh trajectory instead of the training one.
    pub fresh_evaluation: bool,
    pub seed: u64,
    pub out_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

pub const PRESETS: [&str; 2] = ["desk", "paper"];

impl ExperimentConfig {
    fn base(horizon: usize, rounds: usize, iterations: usize, width: usize) -> Self {
        Self {
            original: Rates::new(0.1, 0.46, 0.44),
            alternatives: vec![
                Rates::new(3.0 / 11.0, 4.0 / 11.0, 4.0 / 11.0),
                Rates::new(5.0 / 17.0, 6.0 / 17.0, 6.0 / 17.0),
                Rates::new(7.0 / 23.0, 8.0 / 23.0, 8.0 / 23.0),
            ],
            ris_alternative: None,
            gammas: vec![16, 18, 20],
            horizon,
            rounds,
            methods: vec![MethodName::Ris, MethodName::Mis, MethodName::Mlis],
            ris_split: 0.5,
            kernel_sets: vec!["ln,gs,lp,im".to_string()],
            train: TrainSection {
                iterations,
                learning_rate: 1e-3,
                beta1: 0.9,
                beta2: 0.999,
                adam_epsilon: 1e-8,
                alpha_reg: 1.0,
                batch_size: 3_000,
                kernel_batch: None,
                width,
            },
            fresh_evaluation: false,
            seed: 0,
            out_dir: PathBuf::from("results"),
            threads: None,
        }
    }

    /// H = 64, T = 5·10⁴, 50 rounds, 2000 iterations.
    pub fn desk() -> Self {
        Self::base(50_000, 50, 2_000, 64)
    }

    /// H = 1024, T = 10⁵, 500 rounds, 5000 iterations.
    pub fn paper() -> Self {
        Self::base(100_000, 500, 5_000, 1024)
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "paper" => Ok(Self::paper()),
            other => Err(CliError::config(format!(
                "unknown preset {other:?} (expected one of {PRESETS:?})"
            ))),
        }
    }

    /// The preset overlaid with whatever fields `text` (TOML) sets.
    pub fn from_toml_over(base: &Self, text: &str, origin: &Path) -> Result<Self> {
        let parse_err = |message: String| CliError::Parse {
            path: origin.to_path_buf(),
            message,
        };
        let overlay: toml::Table = toml::from_str(text).map_err(|e| parse_err(e.to_string()))?;
        let mut merged = toml::Table::try_from(base).map_err(|e| parse_err(e.to_string()))?;
        merge(&mut merged, overlay);
        toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| parse_err(e.to_string()))
    }

    pub fn load(preset: Option<&str>, path: Option<&Path>) -> Result<Self> {
        let base = Self::preset(preset.unwrap_or("desk"))?;
        match path {
            None => Ok(base),
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                Self::from_toml_over(&base, &text, path)
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is representable in TOML")
    }

    pub fn original_params(&self) -> Result<TandemParams> {
        self.original.params()
    }

    pub fn ris_alternative_rates(&self) -> Rates {
        self.ris_alternative.unwrap_or(Rates::new(
            self.original.mu2,
            self.original.mu1,
            self.original.lambda,
        ))
    }

    pub fn kernel_sets(&self) -> Result<Vec<Vec<KernelKind>>> {
        self.kernel_sets
            .iter()
            .map(|s| parse_kernel_set(s).map_err(|e| CliError::config(format!("kernel set {s:?}: {e}"))))
            .collect()
    }

    pub fn has(&self, method: MethodName) -> bool {
        self.methods.contains(&method)
    }

    /// Training settings for one kernel set and seed.
    pub fn train_config(&self, kernels: &[KernelKind], seed: u64) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            iterations: t.iterations,
            learning_rate: t.learning_rate,
            beta1: t.beta1,
            beta2: t.beta2,
            adam_epsilon: t.adam_epsilon,
            alpha_reg: t.alpha_reg,
            batch_size: t.batch_size,
            kernel_batch: t.kernel_batch.unwrap_or(kernels.len()),
            kernels: kernels.to_vec(),
            width: t.width,
            seed,
        }
    }

    /// Checks everything a run needs before any simulation starts.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(CliError::config(m));
        if self.methods.is_empty() {
            return fail("no methods selected".into());
        }
        if self.gammas.is_empty() {
            return fail("no thresholds (gammas) given".into());
        }
        if self.horizon < 2 {
            return fail("horizon must be at least 2".into());
        }
        if self.rounds == 0 {
            return fail("rounds must be positive".into());
        }
        if self.threads == Some(0) {
            return fail("threads must be positive".into());
        }
        let original = self.original_params()?;
        if !original.stability().is_stable() {
            return fail(format!("original system {original} is unstable"));
        }
        for &g in &self.gammas {
            tandem_core::model::exact_overflow_probability(&original, g)
                .map_err(|e| CliError::config(format!("no closed form for γ={g}: {e}")))?;
        }
        if self.has(MethodName::Mis) || self.has(MethodName::Mlis) {
            if self.alternatives.is_empty() {
                return fail("MIS/MLIS need at least one alternative system".into());
            }
            for alt in &self.alternatives {
                ExactRatio::new(&original, &alt.params()?).map_err(|e| {
                    CliError::config(format!("alternative {:?} has no stationary ratio: {e}", alt))
                })?;
            }
        }
        if self.has(MethodName::Ris) {
            if !(self.ris_split > 0.0 && self.ris_split < 1.0) {
                return fail(format!("ris_split {} must lie in (0, 1)", self.ris_split));
            }
            if self.gammas.contains(&0) {
                return fail("RIS needs γ ≥ 1".into());
            }
            self.ris_alternative_rates().params()?;
        }
        if self.has(MethodName::Mlis) {
            let sets = self.kernel_sets()?;
            if sets.is_empty() {
                return fail("MLIS needs at least one kernel set".into());
            }
            for set in &sets {
                self.train_config(set, 0)
                    .validate()
                    .map_err(|e| CliError::config(format!("training settings: {e}")))?;
            }
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form, without `out_dir` and `threads`
    /// (neither changes any result).
    pub fn fingerprint(&self) -> String {
        let mut value = serde_json::to_value(self).expect("configuration serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("out_dir");
            map.remove("threads");
        }
        let canonical = serde_json::to_vec(&value).expect("configuration serializes");
        hex::encode(Sha256::digest(&canonical))
    }

    pub fn fingerprint_bytes(&self) -> [u8; 32] {
        let mut out = [0u8; 32];
        hex::decode_to_slice(self.fingerprint(), &mut out).expect("fingerprint is hex");
        out
    }
}

fn merge(base: &mut toml::Table, overlay: toml::Table) {
    for (key, value) in overlay {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}

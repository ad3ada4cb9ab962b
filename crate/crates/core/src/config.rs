//! Run configuration: a flat, typed `key = value` text format with strict
//! parsing, spec'd defaults, and a lossless effective-config echo.
//!
//! The format is deliberately rigid so hyperparameter typos cannot pass
//! silently: unknown keys are fatal, duplicate keys are fatal, and every
//! value must parse as its declared type. `#` starts a comment, blank lines
//! are ignored. After parsing, all defaults are materialized and the result
//! can be echoed back as a complete document that parses to the same
//! configuration — every emitted artifact is reproducible from its echo.
//!
//! Two defaults are context-sensitive: `step_size` falls back to 0.05 for
//! the plain optimizer and 0.01 for adaptive moments, and `eps_high` falls
//! back to 0.28 for the raised-ceiling clip baseline (`grpo_ch`) and 0.2
//! otherwise.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dual::{DualMode, DualState};
use crate::env::{make_rare_token_bandit, TaskSpec};
use crate::error::{Error, Result};
use crate::objective::Aggregation;
use crate::policy::PolicyParams;
use crate::trainer::{Algorithm, OptimizerKind, TrainConfig};

/// Which environment the run trains on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    SequenceSum,
    RareTokenBandit,
}

/// A fully materialized run configuration: task, policy shape, training
/// hyperparameters, dual controller, and reporting knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub task: TaskKind,
    pub vocab_size: usize,
    pub seq_len: usize,
    pub num_prompts: usize,
    /// Sequence-sum targets: prompt `i` gets `target_low + i mod span`.
    pub target_low: usize,
    pub target_high: usize,
    /// Rare-token-bandit: which token carries the reward, and how far its
    /// initial logit sits below the rest.
    pub eureka_index: usize,
    pub logit_gap: f64,
    pub num_buckets: usize,

    pub algorithm: Algorithm,
    pub group_size: usize,
    pub prompts_per_iteration: usize,
    pub iterations: usize,
    pub step_size: f64,
    pub optimizer: OptimizerKind,
    pub utd_ratio: usize,
    pub buffer_capacity: usize,
    pub eps_low: f64,
    pub eps_high: f64,
    pub seed: u64,
    pub aggregation: Aggregation,
    pub stability_delta: f64,

    pub lambda: f64,
    pub eta_lambda: f64,
    pub trust_delta: f64,
    pub dual_mode: DualMode,
    pub ema_beta: f64,

    /// Mean-reward level used by comparison reports.
    pub reward_threshold: f64,
}

fn config_error(message: String) -> Error {
    Error::Config(message)
}

struct RawConfig {
    entries: Vec<(String, String)>,
}

impl RawConfig {
    fn parse(text: &str) -> Result<Self> {
        let mut entries: Vec<(String, String)> = Vec::new();
        let mut seen = BTreeSet::new();
        for (line_no, raw_line) in text.lines().enumerate() {
            let line = match raw_line.find('#') {
                Some(pos) => &raw_line[..pos],
                None => raw_line,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                config_error(format!(
                    "line {}: expected `key = value`, got {raw_line:?}",
                    line_no + 1
                ))
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() || value.is_empty() {
                return Err(config_error(format!(
                    "line {}: empty key or value in {raw_line:?}",
                    line_no + 1
                )));
            }
            if !seen.insert(key.clone()) {
                return Err(config_error(format!(
                    "duplicate config key \"{key}\" (line {})",
                    line_no + 1
                )));
            }
            entries.push((key, value));
        }
        Ok(Self { entries })
    }

    /// Apply `--set key=value` overrides: replace an existing entry or
    /// append a new one (overrides may intentionally repeat file keys).
    fn apply_overrides(&mut self, overrides: &[(String, String)]) {
        for (key, value) in overrides {
            match self.entries.iter_mut().find(|(k, _)| k == key) {
                Some(slot) => slot.1 = value.clone(),
                None => self.entries.push((key.clone(), value.clone())),
            }
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str, want: &str) -> Result<T> {
    value.parse().map_err(|_| {
        config_error(format!(
            "config key \"{key}\": cannot parse {value:?} as {want}"
        ))
    })
}

const KNOWN_KEYS: &[&str] = &[
    "task",
    "vocab_size",
    "seq_len",
    "num_prompts",
    "target_low",
    "target_high",
    "eureka_index",
    "logit_gap",
    "num_buckets",
    "algorithm",
    "group_size",
    "prompts_per_iteration",
    "iterations",
    "step_size",
    "optimizer",
    "utd_ratio",
    "buffer_capacity",
    "eps_low",
    "eps_high",
    "seed",
    "aggregation",
    "stability_delta",
    "lambda",
    "eta_lambda",
    "trust_delta",
    "dual_mode",
    "ema_beta",
    "reward_threshold",
];

impl RunConfig {
    /// Parse a config document plus `--set` overrides into a materialized
    /// configuration. Unknown keys, duplicates, and malformed values are
    /// all fatal.
    pub fn from_text(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut raw = RawConfig::parse(text)?;
        raw.apply_overrides(overrides);

        for (key, _) in &raw.entries {
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(config_error(format!("unknown config key \"{key}\"")));
            }
        }
        let lookup = |key: &str| -> Option<&str> {
            raw.entries
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
        };

        let task = match lookup("task") {
            None => return Err(config_error("missing required config key \"task\"".to_string())),
            Some("sequence_sum") => TaskKind::SequenceSum,
            Some("rare_token_bandit") => TaskKind::RareTokenBandit,
            Some(other) => {
                return Err(config_error(format!(
                    "config key \"task\": expected sequence_sum or rare_token_bandit, \
                     got {other:?}"
                )))
            }
        };

        let algorithm = match lookup("algorithm") {
            None => Algorithm::R2vpoOff,
            Some("grpo") => Algorithm::Grpo,
            Some("grpo_ch") => Algorithm::GrpoCh,
            Some("r2vpo_on") => Algorithm::R2vpoOn,
            Some("r2vpo_off") => Algorithm::R2vpoOff,
            Some(other) => {
                return Err(config_error(format!(
                    "config key \"algorithm\": expected grpo, grpo_ch, r2vpo_on, or \
                     r2vpo_off, got {other:?}"
                )))
            }
        };

        let optimizer = match lookup("optimizer") {
            None => OptimizerKind::PlainGradient,
            Some("plain_gradient") => OptimizerKind::PlainGradient,
            Some("adaptive_moments") => OptimizerKind::AdaptiveMoments,
            Some(other) => {
                return Err(config_error(format!(
                    "config key \"optimizer\": expected plain_gradient or \
                     adaptive_moments, got {other:?}"
                )))
            }
        };

        let dual_mode = match lookup("dual_mode") {
            None => DualMode::Fixed,
            Some("fixed") => DualMode::Fixed,
            Some("dynamic") => DualMode::Dynamic,
            Some(other) => {
                return Err(config_error(format!(
                    "config key \"dual_mode\": expected fixed or dynamic, got {other:?}"
                )))
            }
        };

        let aggregation = match lookup("aggregation") {
            None => Aggregation::TokenMean,
            Some("token_mean") => Aggregation::TokenMean,
            Some("sequence_mean") => Aggregation::SequenceMean,
            Some(other) => {
                return Err(config_error(format!(
                    "config key \"aggregation\": expected token_mean or sequence_mean, \
                     got {other:?}"
                )))
            }
        };

        let vocab_size = match lookup("vocab_size") {
            Some(v) => parse_value("vocab_size", v, "a positive integer")?,
            None => match task {
                TaskKind::SequenceSum => 10,
                TaskKind::RareTokenBandit => 16,
            },
        };
        let seq_len = match lookup("seq_len") {
            Some(v) => parse_value("seq_len", v, "a positive integer")?,
            None => match task {
                TaskKind::SequenceSum => 3,
                TaskKind::RareTokenBandit => 1,
            },
        };
        let num_prompts = match lookup("num_prompts") {
            Some(v) => parse_value("num_prompts", v, "a positive integer")?,
            None => 1,
        };
        let target_low = match lookup("target_low") {
            Some(v) => parse_value("target_low", v, "a non-negative integer")?,
            None => 12,
        };
        let target_high = match lookup("target_high") {
            Some(v) => parse_value("target_high", v, "a non-negative integer")?,
            None => target_low,
        };
        let eureka_index = match lookup("eureka_index") {
            Some(v) => parse_value("eureka_index", v, "a token index")?,
            None => vocab_size - 1,
        };
        let logit_gap = match lookup("logit_gap") {
            Some(v) => parse_value("logit_gap", v, "a real number")?,
            None => 5.0,
        };
        let num_buckets = match lookup("num_buckets") {
            Some(v) => parse_value("num_buckets", v, "a positive integer")?,
            None => 64,
        };

        let step_size = match lookup("step_size") {
            Some(v) => parse_value("step_size", v, "a positive real")?,
            None => match optimizer {
                OptimizerKind::PlainGradient => 0.05,
                OptimizerKind::AdaptiveMoments => 0.01,
            },
        };
        let eps_high = match lookup("eps_high") {
            Some(v) => parse_value("eps_high", v, "a positive real")?,
            None => match algorithm {
                Algorithm::GrpoCh => 0.28,
                _ => 0.2,
            },
        };

        let config = RunConfig {
            task,
            vocab_size,
            seq_len,
            num_prompts,
            target_low,
            target_high,
            eureka_index,
            logit_gap,
            num_buckets,
            algorithm,
            group_size: match lookup("group_size") {
                Some(v) => parse_value("group_size", v, "an integer >= 2")?,
                None => 8,
            },
            prompts_per_iteration: match lookup("prompts_per_iteration") {
                Some(v) => parse_value("prompts_per_iteration", v, "a positive integer")?,
                None => 16,
            },
            iterations: match lookup("iterations") {
                Some(v) => parse_value("iterations", v, "a non-negative integer")?,
                None => 500,
            },
            step_size,
            optimizer,
            utd_ratio: match lookup("utd_ratio") {
                Some(v) => parse_value("utd_ratio", v, "a positive integer")?,
                None => 2,
            },
            buffer_capacity: match lookup("buffer_capacity") {
                Some(v) => parse_value("buffer_capacity", v, "a positive integer")?,
                None => 4,
            },
            eps_low: match lookup("eps_low") {
                Some(v) => parse_value("eps_low", v, "a real in (0, 1)")?,
                None => 0.2,
            },
            eps_high,
            seed: match lookup("seed") {
                Some(v) => parse_value("seed", v, "a non-negative integer")?,
                None => 0,
            },
            aggregation,
            stability_delta: match lookup("stability_delta") {
                Some(v) => parse_value("stability_delta", v, "a positive real")?,
                None => 1e-6,
            },
            lambda: match lookup("lambda") {
                Some(v) => parse_value("lambda", v, "a non-negative real")?,
                None => 0.04,
            },
            eta_lambda: match lookup("eta_lambda") {
                Some(v) => parse_value("eta_lambda", v, "a positive real")?,
                None => 1e-3,
            },
            trust_delta: match lookup("trust_delta") {
                Some(v) => parse_value("trust_delta", v, "a positive real")?,
                None => 0.01,
            },
            dual_mode,
            ema_beta: match lookup("ema_beta") {
                Some(v) => parse_value("ema_beta", v, "a real in [0, 1)")?,
                None => 0.0,
            },
            reward_threshold: match lookup("reward_threshold") {
                Some(v) => parse_value("reward_threshold", v, "a real number")?,
                None => 0.8,
            },
        };
        // Surface invalid combinations now, not at run start.
        config.train_config()?;
        config.build_task()?;
        Ok(config)
    }

    pub fn from_file(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text, overrides)
    }

    /// The trainer-facing slice of this configuration.
    pub fn train_config(&self) -> Result<TrainConfig> {
        let dual = DualState::new(
            self.lambda,
            self.eta_lambda,
            self.trust_delta,
            self.dual_mode,
            self.ema_beta,
        )
        .map_err(|e| config_error(format!("dual controller: {e}")))?;
        let config = TrainConfig {
            algorithm: self.algorithm,
            group_size: self.group_size,
            prompts_per_iteration: self.prompts_per_iteration,
            iterations: self.iterations,
            step_size: self.step_size,
            optimizer: self.optimizer,
            utd_ratio: self.utd_ratio,
            buffer_capacity: self.buffer_capacity,
            dual,
            eps_low: self.eps_low,
            eps_high: self.eps_high,
            seed: self.seed,
            aggregation: self.aggregation,
            stability_delta: self.stability_delta,
        };
        config.validate()?;
        Ok(config)
    }

    /// Materialize the task and its freshly initialized policy table.
    pub fn build_task(&self) -> Result<(TaskSpec, PolicyParams)> {
        match self.task {
            TaskKind::RareTokenBandit => make_rare_token_bandit(
                self.vocab_size,
                self.eureka_index,
                self.logit_gap,
                self.num_prompts,
                self.num_buckets,
            )
            .map_err(|e| config_error(format!("rare_token_bandit: {e}"))),
            TaskKind::SequenceSum => {
                if self.target_low > self.target_high {
                    return Err(config_error(format!(
                        "target_low {} exceeds target_high {}",
                        self.target_low, self.target_high
                    )));
                }
                let span = self.target_high - self.target_low + 1;
                let targets: Vec<usize> = (0..self.num_prompts)
                    .map(|i| self.target_low + i % span)
                    .collect();
                let task = TaskSpec::sequence_sum(self.vocab_size, self.seq_len, targets)
                    .map_err(|e| config_error(format!("sequence_sum: {e}")))?;
                let shape = task
                    .policy_shape(self.num_buckets)
                    .map_err(|e| config_error(format!("policy shape: {e}")))?;
                Ok((task, PolicyParams::uniform(shape)))
            }
        }
    }

    /// Echo the complete configuration in the same flat format it was
    /// parsed from. Parsing the echo reproduces this configuration exactly.
    pub fn effective_text(&self) -> String {
        let mut out = String::new();
        let task = match self.task {
            TaskKind::SequenceSum => "sequence_sum",
            TaskKind::RareTokenBandit => "rare_token_bandit",
        };
        let optimizer = match self.optimizer {
            OptimizerKind::PlainGradient => "plain_gradient",
            OptimizerKind::AdaptiveMoments => "adaptive_moments",
        };
        let dual_mode = match self.dual_mode {
            DualMode::Fixed => "fixed",
            DualMode::Dynamic => "dynamic",
        };
        let aggregation = match self.aggregation {
            Aggregation::TokenMean => "token_mean",
            Aggregation::SequenceMean => "sequence_mean",
        };
        let _ = writeln!(out, "task = {task}");
        let _ = writeln!(out, "vocab_size = {}", self.vocab_size);
        let _ = writeln!(out, "seq_len = {}", self.seq_len);
        let _ = writeln!(out, "num_prompts = {}", self.num_prompts);
        let _ = writeln!(out, "target_low = {}", self.target_low);
        let _ = writeln!(out, "target_high = {}", self.target_high);
        let _ = writeln!(out, "eureka_index = {}", self.eureka_index);
        let _ = writeln!(out, "logit_gap = {}", self.logit_gap);
        let _ = writeln!(out, "num_buckets = {}", self.num_buckets);
        let _ = writeln!(out, "algorithm = {}", self.algorithm.name());
        let _ = writeln!(out, "group_size = {}", self.group_size);
        let _ = writeln!(out, "prompts_per_iteration = {}", self.prompts_per_iteration);
        let _ = writeln!(out, "iterations = {}", self.iterations);
        let _ = writeln!(out, "step_size = {}", self.step_size);
        let _ = writeln!(out, "optimizer = {optimizer}");
        let _ = writeln!(out, "utd_ratio = {}", self.utd_ratio);
        let _ = writeln!(out, "buffer_capacity = {}", self.buffer_capacity);
        let _ = writeln!(out, "eps_low = {}", self.eps_low);
        let _ = writeln!(out, "eps_high = {}", self.eps_high);
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "aggregation = {aggregation}");
        let _ = writeln!(out, "stability_delta = {}", self.stability_delta);
        let _ = writeln!(out, "lambda = {}", self.lambda);
        let _ = writeln!(out, "eta_lambda = {}", self.eta_lambda);
        let _ = writeln!(out, "trust_delta = {}", self.trust_delta);
        let _ = writeln!(out, "dual_mode = {dual_mode}");
        let _ = writeln!(out, "ema_beta = {}", self.ema_beta);
        let _ = writeln!(out, "reward_threshold = {}", self.reward_threshold);
        out
    }

    /// Whether two runs train the same task from the same initial policy
    /// and seed — the precondition for comparison reports.
    pub fn comparable_basis(&self, other: &RunConfig) -> bool {
        self.task == other.task
            && self.vocab_size == other.vocab_size
            && self.seq_len == other.seq_len
            && self.num_prompts == other.num_prompts
            && self.target_low == other.target_low
            && self.target_high == other.target_high
            && self.eureka_index == other.eureka_index
            && self.logit_gap == other.logit_gap
            && self.num_buckets == other.num_buckets
            && self.seed == other.seed
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_materializes_all_defaults() {
        let config = RunConfig::from_text("task = sequence_sum\n", &[]).unwrap();
        assert_eq!(config.vocab_size, 10);
        assert_eq!(config.seq_len, 3);
        assert_eq!(config.group_size, 8);
        assert_eq!(config.prompts_per_iteration, 16);
        assert_eq!(config.iterations, 500);
        assert!((config.step_size - 0.05).abs() < 1e-15);
        assert_eq!(config.utd_ratio, 2);
        assert_eq!(config.buffer_capacity, 4);
        assert!((config.lambda - 0.04).abs() < 1e-15);
        assert!((config.eta_lambda - 1e-3).abs() < 1e-18);
        assert!((config.trust_delta - 0.01).abs() < 1e-15);
        assert!((config.eps_low - 0.2).abs() < 1e-15);
        assert!((config.eps_high - 0.2).abs() < 1e-15);
        assert_eq!(config.num_buckets, 64);
        assert_eq!(config.seed, 0);
        assert!((config.stability_delta - 1e-6).abs() < 1e-20);
        assert_eq!(config.algorithm, Algorithm::R2vpoOff);
        assert_eq!(config.dual_mode, DualMode::Fixed);
    }

    #[test]
    fn bandit_defaults_differ_where_the_task_does() {
        let config = RunConfig::from_text("task = rare_token_bandit\n", &[]).unwrap();
        assert_eq!(config.vocab_size, 16);
        assert_eq!(config.seq_len, 1);
        assert_eq!(config.eureka_index, 15);
        assert!((config.logit_gap - 5.0).abs() < 1e-15);
        let (task, params) = config.build_task().unwrap();
        assert_eq!(task.eureka_index(), Some(15));
        assert_eq!(params.shape().vocab_size, 16);
    }

    #[test]
    fn adaptive_optimizer_lowers_the_default_step() {
        let config =
            RunConfig::from_text("task = sequence_sum\noptimizer = adaptive_moments\n", &[])
                .unwrap();
        assert!((config.step_size - 0.01).abs() < 1e-15);
    }

    #[test]
    fn raised_ceiling_baseline_defaults_eps_high() {
        let config =
            RunConfig::from_text("task = sequence_sum\nalgorithm = grpo_ch\n", &[]).unwrap();
        assert!((config.eps_high - 0.28).abs() < 1e-15);
        assert!((config.eps_low - 0.2).abs() < 1e-15);
        let explicit = RunConfig::from_text(
            "task = sequence_sum\nalgorithm = grpo_ch\neps_high = 0.4\n",
            &[],
        )
        .unwrap();
        assert!((explicit.eps_high - 0.4).abs() < 1e-15);
    }

    #[test]
    fn unknown_keys_are_fatal_and_named() {
        let err = RunConfig::from_text("task = sequence_sum\nstep_sise = 0.1\n", &[])
            .unwrap_err();
        let message = err.to_string();
        assert!(message.contains("step_sise"), "message was: {message}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn duplicate_keys_are_fatal() {
        let err = RunConfig::from_text("task = sequence_sum\nseed = 1\nseed = 2\n", &[])
            .unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = "\n# a comment\ntask = sequence_sum  # trailing comment\n\nseed = 9\n";
        let config = RunConfig::from_text(text, &[]).unwrap();
        assert_eq!(config.seed, 9);
    }

    #[test]
    fn overrides_replace_file_values_and_add_new_keys() {
        let overrides = vec![
            ("seed".to_string(), "123".to_string()),
            ("iterations".to_string(), "7".to_string()),
        ];
        let config =
            RunConfig::from_text("task = sequence_sum\nseed = 1\n", &overrides).unwrap();
        assert_eq!(config.seed, 123);
        assert_eq!(config.iterations, 7);
    }

    #[test]
    fn override_with_unknown_key_is_fatal() {
        let overrides = vec![("bogus".to_string(), "1".to_string())];
        let err = RunConfig::from_text("task = sequence_sum\n", &overrides).unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn missing_task_is_fatal() {
        let err = RunConfig::from_text("seed = 1\n", &[]).unwrap_err();
        assert!(err.to_string().contains("task"));
    }

    #[test]
    fn malformed_values_name_the_key() {
        let err =
            RunConfig::from_text("task = sequence_sum\nstep_size = fast\n", &[]).unwrap_err();
        assert!(err.to_string().contains("step_size"));
    }

    #[test]
    fn malformed_lines_are_rejected() {
        assert!(RunConfig::from_text("task sequence_sum\n", &[]).is_err());
        assert!(RunConfig::from_text("= 3\n", &[]).is_err());
        assert!(RunConfig::from_text("task =\n", &[]).is_err());
    }

    #[test]
    fn effective_echo_round_trips_exactly() {
        let text = "task = sequence_sum\nseed = 5\nstep_size = 0.125\n\
                    algorithm = grpo_ch\nnum_prompts = 3\ntarget_low = 9\ntarget_high = 15\n";
        let config = RunConfig::from_text(text, &[]).unwrap();
        let echoed = config.effective_text();
        let back = RunConfig::from_text(&echoed, &[]).unwrap();
        assert_eq!(back, config);
        // And the echo of the echo is byte-identical.
        assert_eq!(back.effective_text(), echoed);
    }

    #[test]
    fn sequence_sum_targets_cycle_over_prompts() {
        let text = "task = sequence_sum\nnum_prompts = 5\ntarget_low = 10\ntarget_high = 12\n";
        let config = RunConfig::from_text(text, &[]).unwrap();
        let (task, _) = config.build_task().unwrap();
        match task {
            TaskSpec::SequenceSum { targets, .. } => {
                assert_eq!(targets, vec![10, 11, 12, 10, 11]);
            }
            other => panic!("expected sequence_sum, got {other:?}"),
        }
    }

    #[test]
    fn invalid_task_combinations_surface_as_config_errors() {
        // Eureka prior above the rarity bound.
        let err = RunConfig::from_text("task = rare_token_bandit\nlogit_gap = 0\n", &[])
            .unwrap_err();
        assert_eq!(err.exit_code(), 2);
        // Unreachable sequence-sum target.
        let err = RunConfig::from_text(
            "task = sequence_sum\nvocab_size = 4\nseq_len = 2\ntarget_low = 9\n",
            &[],
        )
        .unwrap_err();
        assert_eq!(err.exit_code(), 2);
        // Trainer-level invariant violations also map to config errors.
        let err = RunConfig::from_text("task = sequence_sum\ngroup_size = 1\n", &[])
            .unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn comparable_basis_requires_matching_task_and_seed() {
        let a = RunConfig::from_text("task = sequence_sum\nseed = 3\n", &[]).unwrap();
        let mut b = a.clone();
        b.algorithm = Algorithm::Grpo;
        assert!(a.comparable_basis(&b));
        b.seed = 4;
        assert!(!a.comparable_basis(&b));
        let mut c = a.clone();
        c.vocab_size = 12;
        assert!(!a.comparable_basis(&c));
    }
}

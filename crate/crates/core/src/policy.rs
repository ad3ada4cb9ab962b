//! Tabular softmax policies over synthetic token sequences.
//!
//! A policy is a dense table of logits with one row per decision state and
//! one column per vocabulary entry. States are keyed by
//! `(prompt_id, position, context_hash)`, where the context hash buckets the
//! prefix of previously emitted tokens into a fixed number of slots. Rows are
//! materialized eagerly, so a parameter vector is just `rows * vocab_size`
//! floats and every probability, log probability, and score-function gradient
//! is exact. That exactness is what lets the rest of the crate cross-check
//! surrogate-loss gradients against central finite differences instead of
//! trusting any single derivation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probabilities below this threshold are reported as exactly zero.
pub const PROB_FLOOR: f64 = 1e-300;

/// Log probability assigned to actions whose probability underflows
/// [`PROB_FLOOR`]; keeps downstream arithmetic finite.
pub const LOG_PROB_FLOOR: f64 = -745.0;

/// Coordinates of one decision state in the policy table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StateFeatures {
    pub prompt_id: usize,
    /// Emission position, `0 <= position < max_len`.
    pub position: usize,
    /// Bucket of the emitted-token prefix, `0 <= context_hash < num_buckets`.
    pub context_hash: usize,
}

/// Dimensions of a policy table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyShape {
    pub vocab_size: usize,
    pub num_prompts: usize,
    pub max_len: usize,
    pub num_buckets: usize,
}

impl PolicyShape {
    pub fn new(
        vocab_size: usize,
        num_prompts: usize,
        max_len: usize,
        num_buckets: usize,
    ) -> Result<Self> {
        if vocab_size < 2 {
            return Err(Error::InvalidArgument(format!(
                "vocab_size must be at least 2, got {vocab_size}"
            )));
        }
        if num_prompts == 0 || max_len == 0 || num_buckets == 0 {
            return Err(Error::InvalidArgument(format!(
                "policy shape dimensions must be positive, got \
                 num_prompts={num_prompts} max_len={max_len} num_buckets={num_buckets}"
            )));
        }
        Ok(Self {
            vocab_size,
            num_prompts,
            max_len,
            num_buckets,
        })
    }

    /// Number of decision-state rows in the table.
    pub fn rows(&self) -> usize {
        self.num_prompts * self.max_len * self.num_buckets
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.rows() * self.vocab_size
    }

    /// Row index for a state, with bounds checks on every coordinate.
    pub fn row_index(&self, state: &StateFeatures) -> Result<usize> {
        if state.prompt_id >= self.num_prompts {
            return Err(Error::IndexOutOfRange(format!(
                "prompt_id {} >= num_prompts {}",
                state.prompt_id, self.num_prompts
            )));
        }
        if state.position >= self.max_len {
            return Err(Error::IndexOutOfRange(format!(
                "position {} >= max_len {}",
                state.position, self.max_len
            )));
        }
        if state.context_hash >= self.num_buckets {
            return Err(Error::IndexOutOfRange(format!(
                "context_hash {} >= num_buckets {}",
                state.context_hash, self.num_buckets
            )));
        }
        Ok((state.prompt_id * self.max_len + state.position) * self.num_buckets
            + state.context_hash)
    }

    fn check_action(&self, action: usize) -> Result<()> {
        if action >= self.vocab_size {
            return Err(Error::IndexOutOfRange(format!(
                "action {} >= vocab_size {}",
                action, self.vocab_size
            )));
        }
        Ok(())
    }
}

/// Bucket for a token prefix: FNV-1a over the token stream, reduced modulo
/// the bucket count. The empty prefix maps to a fixed bucket, and prefixes
/// differing in any position land in different buckets with high probability.
pub fn context_bucket(tokens: &[usize], num_buckets: usize) -> usize {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for &t in tokens {
        h ^= t as u64 + 1;
        h = h.wrapping_mul(PRIME);
    }
    (h % num_buckets as u64) as usize
}

/// Exact categorical distribution over the vocabulary at one state.
///
/// `probs` sums to one within 1e-12; `log_probs` is computed directly from
/// the logits (never via `ln(probs)`) so that underflowed entries carry the
/// documented floor instead of `-inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalDist {
    pub probs: Vec<f64>,
    pub log_probs: Vec<f64>,
}

impl CategoricalDist {
    /// Inverse-CDF sample. Deterministic given the generator state.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, &p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        // Rounding can leave acc marginally below 1; fall back to the last
        // action that carries mass.
        self.probs
            .iter()
            .rposition(|&p| p > 0.0)
            .unwrap_or(self.probs.len() - 1)
    }
}

/// One row of a parameter gradient. Score-function gradients of a tabular
/// softmax touch exactly one row, so they are returned sparse.
#[derive(Debug, Clone, PartialEq)]
pub struct RowGrad {
    pub row: usize,
    pub values: Vec<f64>,
}

/// Dense logit table plus its shape. Row-major: the row for a state is
/// `logits[row * vocab_size .. (row + 1) * vocab_size]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    shape: PolicyShape,
    logits: Vec<f64>,
}

impl PolicyParams {
    /// All-zero logits: the uniform policy at every state.
    pub fn uniform(shape: PolicyShape) -> Self {
        let n = shape.param_count();
        Self {
            shape,
            logits: vec![0.0; n],
        }
    }

    pub fn from_logits(shape: PolicyShape, logits: Vec<f64>) -> Result<Self> {
        if logits.len() != shape.param_count() {
            return Err(Error::InvalidArgument(format!(
                "logit table has {} entries, shape requires {}",
                logits.len(),
                shape.param_count()
            )));
        }
        if let Some(bad) = logits.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "policy logits".to_string(),
                value: *bad,
            });
        }
        Ok(Self { shape, logits })
    }

    pub fn shape(&self) -> &PolicyShape {
        &self.shape
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn logits_mut(&mut self) -> &mut [f64] {
        &mut self.logits
    }

    fn row_slice(&self, row: usize) -> &[f64] {
        let k = self.shape.vocab_size;
        &self.logits[row * k..(row + 1) * k]
    }

    /// Softmax distribution at a state, computed with max subtraction.
    pub fn dist(&self, state: &StateFeatures) -> Result<CategoricalDist> {
        let row = self.shape.row_index(state)?;
        let logits = self.row_slice(row);
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let shifted: Vec<f64> = logits.iter().map(|l| l - max).collect();
        let sum: f64 = shifted.iter().map(|s| s.exp()).sum();
        let log_sum = sum.ln();
        let mut probs = Vec::with_capacity(logits.len());
        let mut log_probs = Vec::with_capacity(logits.len());
        for &s in &shifted {
            let p = s.exp() / sum;
            if p < PROB_FLOOR {
                probs.push(0.0);
                log_probs.push(LOG_PROB_FLOOR);
            } else {
                probs.push(p);
                log_probs.push(s - log_sum);
            }
        }
        debug_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        Ok(CategoricalDist { probs, log_probs })
    }

    /// Log probability of `action` at `state`, floored at [`LOG_PROB_FLOOR`].
    pub fn log_prob(&self, state: &StateFeatures, action: usize) -> Result<f64> {
        self.shape.check_action(action)?;
        Ok(self.dist(state)?.log_probs[action])
    }

    /// Gradient of `log_prob(state, action)` with respect to the state's
    /// logit row: one-hot of the action minus the softmax probabilities.
    /// Rows sum to zero up to rounding. All other rows have zero gradient.
    pub fn grad_log_prob(&self, state: &StateFeatures, action: usize) -> Result<RowGrad> {
        self.shape.check_action(action)?;
        let row = self.shape.row_index(state)?;
        let dist = self.dist(state)?;
        let values = dist
            .probs
            .iter()
            .enumerate()
            .map(|(j, &p)| if j == action { 1.0 - p } else { -p })
            .collect();
        Ok(RowGrad { row, values })
    }

    /// Central-difference estimate of [`Self::grad_log_prob`], used as an
    /// independent oracle in tests. Only the active row is probed; the log
    /// probability does not depend on any other row.
    pub fn finite_diff_grad(
        &self,
        state: &StateFeatures,
        action: usize,
        h: f64,
    ) -> Result<RowGrad> {
        if h.is_nan() || h <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "finite-difference step must be positive, got {h}"
            )));
        }
        self.shape.check_action(action)?;
        let row = self.shape.row_index(state)?;
        let k = self.shape.vocab_size;
        let mut scratch = self.clone();
        let mut values = Vec::with_capacity(k);
        for j in 0..k {
            let idx = row * k + j;
            let original = scratch.logits[idx];
            scratch.logits[idx] = original + h;
            let plus = scratch.log_prob(state, action)?;
            scratch.logits[idx] = original - h;
            let minus = scratch.log_prob(state, action)?;
            scratch.logits[idx] = original;
            values.push((plus - minus) / (2.0 * h));
        }
        Ok(RowGrad { row, values })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let params: PolicyParams = serde_json::from_str(text)?;
        if params.logits.len() != params.shape.param_count() {
            return Err(Error::InvalidArgument(format!(
                "deserialized logit table has {} entries, shape requires {}",
                params.logits.len(),
                params.shape.param_count()
            )));
        }
        Ok(params)
    }
}

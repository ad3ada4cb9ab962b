//! Surrogate objectives over token batches, and their exact gradients.
//!
//! Both losses act on the per-token importance ratio
//! `rho = exp(logp_theta - logp_off)` weighted by the token's group-relative
//! advantage:
//!
//! - **Hard clip**: `min(rho * adv, clamp(rho, 1-eps_low, 1+eps_high) * adv)`.
//!   Once the clipped branch binds, the token's gradient is exactly zero —
//!   the "dead zone" that discards rare-token updates.
//! - **Ratio variance**: `rho * adv - lambda * ((rho - 1)^2 - trust_delta)`.
//!   The penalty is quadratic and always differentiable; its gradient scales
//!   the advantage instead of zeroing it, giving each token the coefficient
//!   `(adv - 2 * lambda * (rho - 1)) * rho`.
//!
//! Gradients are assembled from exact per-token score functions, so central
//! finite differences of the scalar loss reproduce them to rounding error —
//! the tests lean on that as an independent oracle. Log-ratio differences are
//! clamped to ±[`RATIO_CLAMP`] before exponentiation purely to keep the
//! arithmetic finite; every clamp is counted and surfaced.

use serde::{Deserialize, Serialize};

use crate::advantage::GroupRollout;
use crate::error::{Error, Result};
use crate::policy::{context_bucket, PolicyParams, StateFeatures};

/// Bound on the log-ratio before exponentiation.
pub const RATIO_CLAMP: f64 = 20.0;

/// Importance ratio for one token, with a flag reporting whether the
/// log-ratio hit the ±[`RATIO_CLAMP`] guard.
pub fn ratio(logp_theta: f64, logp_off: f64) -> (f64, bool) {
    let log_ratio = logp_theta - logp_off;
    let clamped = log_ratio.clamp(-RATIO_CLAMP, RATIO_CLAMP);
    (clamped.exp(), clamped != log_ratio)
}

/// How per-token objectives are reduced to the scalar loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Mean over every token in the batch.
    TokenMean,
    /// Mean over episodes of the per-episode token mean.
    SequenceMean,
}

/// Which surrogate to evaluate, with its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    HardClip { eps_low: f64, eps_high: f64 },
    RatioVariance { lambda: f64, trust_delta: f64 },
}

/// A flattened batch of tokens ready for loss evaluation.
///
/// `logp_off` is frozen at collection time; `logp_theta` must be refreshed
/// against the parameters the loss will be differentiated at — the gradient
/// trusts it to match. `episode_spans` records `(start, len)` per episode so
/// sequence-mean aggregation can reweight ragged batches.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenBatch {
    pub states: Vec<StateFeatures>,
    pub actions: Vec<usize>,
    pub logp_off: Vec<f64>,
    pub logp_theta: Vec<f64>,
    pub advantages: Vec<f64>,
    pub episode_spans: Vec<(usize, usize)>,
}

impl TokenBatch {
    pub fn new(
        states: Vec<StateFeatures>,
        actions: Vec<usize>,
        logp_off: Vec<f64>,
        logp_theta: Vec<f64>,
        advantages: Vec<f64>,
        episode_spans: Vec<(usize, usize)>,
    ) -> Result<Self> {
        let n = states.len();
        if n == 0 {
            return Err(Error::InvalidArgument("empty token batch".to_string()));
        }
        if actions.len() != n
            || logp_off.len() != n
            || logp_theta.len() != n
            || advantages.len() != n
        {
            return Err(Error::InvalidArgument(format!(
                "token batch arrays disagree on length: states {n}, actions {}, \
                 logp_off {}, logp_theta {}, advantages {}",
                actions.len(),
                logp_off.len(),
                logp_theta.len(),
                advantages.len()
            )));
        }
        let covered: usize = episode_spans.iter().map(|(_, len)| len).sum();
        if covered != n || episode_spans.iter().any(|&(_, len)| len == 0) {
            return Err(Error::InvalidArgument(
                "episode spans must partition the batch into non-empty runs".to_string(),
            ));
        }
        Ok(Self {
            states,
            actions,
            logp_off,
            logp_theta,
            advantages,
            episode_spans,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Flatten rollout groups into a batch. Behavior log-probs come from the
    /// episodes; `logp_theta` is recomputed under `params`.
    pub fn from_groups(params: &PolicyParams, groups: &[GroupRollout]) -> Result<Self> {
        let num_buckets = params.shape().num_buckets;
        let mut states = Vec::new();
        let mut actions = Vec::new();
        let mut logp_off = Vec::new();
        let mut logp_theta = Vec::new();
        let mut advantages = Vec::new();
        let mut episode_spans = Vec::new();
        for group in groups {
            for (episode, &adv) in group.episodes.iter().zip(&group.advantages) {
                let start = states.len();
                for (t, (&token, &logp)) in
                    episode.tokens.iter().zip(&episode.per_token_logp).enumerate()
                {
                    let state = StateFeatures {
                        prompt_id: episode.prompt_id,
                        position: t,
                        context_hash: context_bucket(&episode.tokens[..t], num_buckets),
                    };
                    logp_theta.push(params.log_prob(&state, token)?);
                    states.push(state);
                    actions.push(token);
                    logp_off.push(logp);
                    advantages.push(adv);
                }
                episode_spans.push((start, states.len() - start));
            }
        }
        Self::new(states, actions, logp_off, logp_theta, advantages, episode_spans)
    }

    /// Recompute `logp_theta` under `params`; call after every parameter
    /// update before reusing the batch.
    pub fn refresh_logp_theta(&mut self, params: &PolicyParams) -> Result<()> {
        for ((state, &action), slot) in self
            .states
            .iter()
            .zip(&self.actions)
            .zip(self.logp_theta.iter_mut())
        {
            *slot = params.log_prob(state, action)?;
        }
        Ok(())
    }

    /// Aggregation weight of each token: uniform for token mean, episode-
    /// normalized for sequence mean. Weights sum to 1 in both schemes.
    fn weights(&self, aggregation: Aggregation) -> Vec<f64> {
        match aggregation {
            Aggregation::TokenMean => vec![1.0 / self.len() as f64; self.len()],
            Aggregation::SequenceMean => {
                let mut w = vec![0.0; self.len()];
                let num_eps = self.episode_spans.len() as f64;
                for &(start, len) in &self.episode_spans {
                    let per_token = 1.0 / (num_eps * len as f64);
                    for slot in &mut w[start..start + len] {
                        *slot = per_token;
                    }
                }
                w
            }
        }
    }
}

/// Scalar loss plus everything needed to reconstruct its gradient and
/// diagnose how the surrogate treated each token.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub loss_value: f64,
    /// Per-token multiplier of the score function: the parameter gradient is
    /// the weighted sum of `grad_coefficients[t] * grad_log_prob(state_t)`.
    pub grad_coefficients: Vec<f64>,
    /// Fraction of tokens where the clipped branch was active and binding.
    /// Identically zero for the ratio-variance loss, which never clips.
    pub clipped_fraction: f64,
    /// Batch mean of `(rho - 1)^2`; feeds the dual controller.
    pub ratio_variance_estimate: f64,
    /// Number of tokens whose log-ratio hit the ±[`RATIO_CLAMP`] guard.
    pub clamp_events: u64,
    /// Fraction of nonzero-advantage tokens whose gradient coefficient has
    /// the opposite sign from their advantage. The quadratic penalty can
    /// overpower a weak advantage at large displacement; this measures how
    /// often it actually does.
    pub sign_flip_fraction: f64,
}

/// Unweighted per-token quantities shared by the loss and its gradient.
struct TokenTerms {
    objectives: Vec<f64>,
    coefficients: Vec<f64>,
    clipped_fraction: f64,
    clamp_events: u64,
    ratio_variance: f64,
    sign_flip_fraction: f64,
}

fn per_token_terms(batch: &TokenBatch, kind: LossKind) -> Result<TokenTerms> {
    if let LossKind::RatioVariance { lambda, .. } = kind {
        if lambda.is_nan() || lambda < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "penalty multiplier must be non-negative, got {lambda}"
            )));
        }
    }
    if let LossKind::HardClip { eps_low, eps_high } = kind {
        if !(eps_low > 0.0 && eps_low < 1.0 && eps_high > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "clip widths must satisfy 0 < eps_low < 1 and eps_high > 0, \
                 got eps_low={eps_low} eps_high={eps_high}"
            )));
        }
    }
    let n = batch.len();
    let mut objectives = Vec::with_capacity(n);
    let mut coefficients = Vec::with_capacity(n);
    let mut clipped = 0usize;
    let mut clamp_events = 0u64;
    let mut variance_sum = 0.0;
    let mut flippable = 0usize;
    let mut flipped = 0usize;
    for t in 0..n {
        let (rho, was_clamped) = ratio(batch.logp_theta[t], batch.logp_off[t]);
        if was_clamped {
            clamp_events += 1;
        }
        let adv = batch.advantages[t];
        variance_sum += (rho - 1.0) * (rho - 1.0);
        let (objective, coefficient) = match kind {
            LossKind::HardClip { eps_low, eps_high } => {
                let clipped_rho = rho.clamp(1.0 - eps_low, 1.0 + eps_high);
                let objective = (rho * adv).min(clipped_rho * adv);
                let dead = (adv > 0.0 && rho >= 1.0 + eps_high)
                    || (adv < 0.0 && rho <= 1.0 - eps_low);
                if dead {
                    clipped += 1;
                }
                (objective, if dead { 0.0 } else { adv * rho })
            }
            LossKind::RatioVariance { lambda, trust_delta } => {
                let displacement = rho - 1.0;
                let objective = rho * adv - lambda * (displacement * displacement - trust_delta);
                let coefficient = (adv - 2.0 * lambda * displacement) * rho;
                (objective, coefficient)
            }
        };
        if adv != 0.0 {
            flippable += 1;
            if coefficient * adv < 0.0 {
                flipped += 1;
            }
        }
        objectives.push(objective);
        coefficients.push(coefficient);
    }
    let clipped_fraction = clipped as f64 / n as f64;
    let variance = variance_sum / n as f64;
    let sign_flip_fraction = if flippable == 0 {
        0.0
    } else {
        flipped as f64 / flippable as f64
    };
    Ok(TokenTerms {
        objectives,
        coefficients,
        clipped_fraction,
        clamp_events,
        ratio_variance: variance,
        sign_flip_fraction,
    })
}

fn assemble_report(
    batch: &TokenBatch,
    kind: LossKind,
    aggregation: Aggregation,
) -> Result<LossReport> {
    let terms = per_token_terms(batch, kind)?;
    let weights = batch.weights(aggregation);
    let loss_value: f64 = terms
        .objectives
        .iter()
        .zip(&weights)
        .map(|(o, w)| o * w)
        .sum();
    if !loss_value.is_finite() {
        return Err(Error::NonFinite {
            context: "surrogate loss".to_string(),
            value: loss_value,
        });
    }
    if let Some(&bad) = terms.coefficients.iter().find(|c| !c.is_finite()) {
        return Err(Error::NonFinite {
            context: "gradient coefficient".to_string(),
            value: bad,
        });
    }
    Ok(LossReport {
        loss_value,
        grad_coefficients: terms.coefficients,
        clipped_fraction: terms.clipped_fraction,
        ratio_variance_estimate: terms.ratio_variance,
        clamp_events: terms.clamp_events,
        sign_flip_fraction: terms.sign_flip_fraction,
    })
}

/// Hard-clipped surrogate over the batch.
pub fn grpo_clip_loss(
    batch: &TokenBatch,
    eps_low: f64,
    eps_high: f64,
    aggregation: Aggregation,
) -> Result<LossReport> {
    assemble_report(batch, LossKind::HardClip { eps_low, eps_high }, aggregation)
}

/// Ratio-variance-penalized surrogate over the batch. The `trust_delta`
/// offset enters the loss value only; it is constant in the parameters.
pub fn r2vpo_loss(
    batch: &TokenBatch,
    lambda: f64,
    trust_delta: f64,
    aggregation: Aggregation,
) -> Result<LossReport> {
    assemble_report(batch, LossKind::RatioVariance { lambda, trust_delta }, aggregation)
}

/// Exact ascent gradient of the aggregated surrogate with respect to every
/// policy parameter, assembled as `sum_t weight_t * coefficient_t *
/// grad_log_prob(state_t, action_t)`.
pub fn loss_gradient(
    batch: &TokenBatch,
    params: &PolicyParams,
    kind: LossKind,
    aggregation: Aggregation,
) -> Result<Vec<f64>> {
    let report = assemble_report(batch, kind, aggregation)?;
    gradient_from_coefficients(batch, params, &report.grad_coefficients, aggregation)
}

/// Gradient assembly from precomputed per-token coefficients; shared by
/// [`loss_gradient`] and callers that already hold a [`LossReport`].
pub fn gradient_from_coefficients(
    batch: &TokenBatch,
    params: &PolicyParams,
    coefficients: &[f64],
    aggregation: Aggregation,
) -> Result<Vec<f64>> {
    if coefficients.len() != batch.len() {
        return Err(Error::InvalidArgument(format!(
            "coefficient count {} does not match batch size {}",
            coefficients.len(),
            batch.len()
        )));
    }
    let k = params.shape().vocab_size;
    let weights = batch.weights(aggregation);
    let mut grad = vec![0.0; params.shape().param_count()];
    for t in 0..batch.len() {
        let scale = weights[t] * coefficients[t];
        if scale == 0.0 {
            continue;
        }
        let row_grad = params.grad_log_prob(&batch.states[t], batch.actions[t])?;
        let base = row_grad.row * k;
        for (j, &g) in row_grad.values.iter().enumerate() {
            grad[base + j] += scale * g;
        }
    }
    if let Some(&bad) = grad.iter().find(|g| !g.is_finite()) {
        return Err(Error::NonFinite {
            context: "loss gradient".to_string(),
            value: bad,
        });
    }
    Ok(grad)
}

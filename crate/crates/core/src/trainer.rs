//! The two training loops — on-policy, and off-policy with a replay buffer
//! and an update-to-data ratio — plus the first-order optimizers they share.
//!
//! Both loops alternate an inference phase (collect `prompts_per_iteration`
//! groups of `group_size` rollouts from the current policy, normalize
//! rewards within each group) with a training phase:
//!
//! - **On-policy**: one gradient step on the configured surrogate, with the
//!   importance ratio computed against the very policy that generated the
//!   data — so every ratio is exactly 1 at step time — then the data is
//!   discarded. This is how the hard-clip baselines always run.
//! - **Off-policy**: fresh tuples are pushed into a FIFO replay buffer
//!   first, then `utd_ratio` gradient steps run per iteration. The first
//!   step sweeps the fresh bucket in push order; the remaining steps draw
//!   uniformly (with replacement) from the whole buffer, so stale tuples
//!   re-enter with ratios that reflect how far the policy has moved. With
//!   `buffer_capacity = 1` and `utd_ratio = 1` this loop reproduces the
//!   on-policy trajectory bit for bit — a structural identity the tests
//!   pin down.
//!
//! Randomness is split into independent streams of one seeded generator:
//! rollouts consume stream 0 and replay sampling consumes stream 1, so the
//! two loops draw identical episode sequences until their parameters
//! diverge. The reference path is single-threaded and bit-deterministic
//! given `(config, seed)`; any non-finite loss, gradient, or parameter
//! aborts the run instead of propagating.
//!
//! Per-iteration metrics record the fresh-batch mean reward, the loss-time
//! ratio-variance estimate of the iteration's last gradient step, the
//! post-step multiplier, and two ratio diagnostics. `clipped_fraction` is
//! measured *after* the iteration's last update, by recomputing ratios on
//! that step's batch against the new parameters and counting tokens outside
//! `[1 - eps_low, 1 + eps_high]`: at step time fresh data sits at ratio 1
//! where clipping can never bind, so the interesting quantity is how far a
//! single step pushes tokens out of the trust band — exactly the signal the
//! hard-clip losses would discard on the next pass. For penalty runs the
//! band is purely diagnostic.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::advantage::GroupRollout;
use crate::dual::DualState;
use crate::env::{rollout, TaskSpec};
use crate::error::{Error, Result};
use crate::objective::{
    gradient_from_coefficients, grpo_clip_loss, r2vpo_loss, ratio, Aggregation, LossReport,
    TokenBatch,
};
use crate::policy::{context_bucket, PolicyParams, StateFeatures};
use crate::replay::{ExperienceTuple, ReplayBuffer};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// Which surrogate drives the updates and whether data is replayed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Hard-clip surrogate, symmetric band, on-policy.
    Grpo,
    /// Hard-clip surrogate with a raised upper edge, on-policy.
    GrpoCh,
    /// Ratio-variance penalty, on-policy.
    R2vpoOn,
    /// Ratio-variance penalty with replay buffer and UTD.
    R2vpoOff,
}

impl Algorithm {
    pub fn is_off_policy(self) -> bool {
        matches!(self, Algorithm::R2vpoOff)
    }

    /// Whether the loss carries the quadratic penalty (and hence the dual
    /// controller runs).
    pub fn uses_penalty(self) -> bool {
        matches!(self, Algorithm::R2vpoOn | Algorithm::R2vpoOff)
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Grpo => "grpo",
            Algorithm::GrpoCh => "grpo_ch",
            Algorithm::R2vpoOn => "r2vpo_on",
            Algorithm::R2vpoOff => "r2vpo_off",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    /// `theta += step_size * gradient` (ascent).
    PlainGradient,
    /// First- and second-moment scaling with bias correction.
    AdaptiveMoments,
}

/// Everything a training run needs besides the task and initial parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub group_size: usize,
    pub prompts_per_iteration: usize,
    pub iterations: usize,
    pub step_size: f64,
    pub optimizer: OptimizerKind,
    pub utd_ratio: usize,
    pub buffer_capacity: usize,
    /// Initial dual-controller state (multiplier, step, tolerance, mode).
    pub dual: DualState,
    pub eps_low: f64,
    pub eps_high: f64,
    pub seed: u64,
    pub aggregation: Aggregation,
    /// Stabilizer added to the group reward std in advantage normalization.
    pub stability_delta: f64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.group_size < 2 {
            return Err(Error::Config(format!(
                "group_size must be at least 2, got {}",
                self.group_size
            )));
        }
        if self.prompts_per_iteration == 0 {
            return Err(Error::Config("prompts_per_iteration must be positive".to_string()));
        }
        if self.utd_ratio == 0 {
            return Err(Error::Config("utd_ratio must be at least 1".to_string()));
        }
        if self.buffer_capacity == 0 {
            return Err(Error::Config("buffer_capacity must be at least 1".to_string()));
        }
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(Error::Config(format!(
                "step_size must be positive, got {}",
                self.step_size
            )));
        }
        if !(self.eps_low > 0.0 && self.eps_low < 1.0) {
            return Err(Error::Config(format!(
                "eps_low must lie in (0, 1), got {}",
                self.eps_low
            )));
        }
        if !(self.eps_high.is_finite() && self.eps_high > 0.0) {
            return Err(Error::Config(format!(
                "eps_high must be positive, got {}",
                self.eps_high
            )));
        }
        if !(self.stability_delta.is_finite() && self.stability_delta > 0.0) {
            return Err(Error::Config(format!(
                "stability_delta must be positive, got {}",
                self.stability_delta
            )));
        }
        Ok(())
    }
}

/// One iteration's worth of logged quantities.
#[derive(Debug, Clone)]
pub struct MetricsRow {
    pub iteration: u64,
    pub cumulative_rollouts: u64,
    /// Mean reward of this iteration's fresh rollouts.
    pub mean_reward: f64,
    /// Loss-time `mean((rho - 1)^2)` of the iteration's last gradient step.
    pub ratio_variance: f64,
    /// Multiplier after this iteration's dual updates.
    pub lambda: f64,
    /// Post-update fraction of the last step's tokens whose recomputed
    /// ratio falls outside `[1 - eps_low, 1 + eps_high]`.
    pub clipped_fraction: f64,
    /// Log-ratio clamp events summed over the iteration's gradient steps.
    pub clamp_events: u64,
    /// Post-update probability of the task's rare token, when it has one;
    /// NaN otherwise.
    pub eureka_prob: f64,
    /// Always 0 in the reference path: metrics files are bit-reproducible,
    /// so wall time is reported out of band, never in the row.
    pub wall_ms: u64,
}

/// Captured generator state, restorable bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

/// Optimizer accumulators; `Plain` keeps none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OptimizerState {
    Plain,
    Adaptive {
        first_moment: Vec<f64>,
        second_moment: Vec<f64>,
        step_count: u64,
    },
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, param_count: usize) -> Self {
        match kind {
            OptimizerKind::PlainGradient => OptimizerState::Plain,
            OptimizerKind::AdaptiveMoments => OptimizerState::Adaptive {
                first_moment: vec![0.0; param_count],
                second_moment: vec![0.0; param_count],
                step_count: 0,
            },
        }
    }
}

/// One ascent step in place. Rejects mismatched shapes and refuses to write
/// non-finite parameters.
pub fn optimizer_step(
    params: &mut PolicyParams,
    gradient: &[f64],
    step_size: f64,
    state: &mut OptimizerState,
) -> Result<()> {
    let n = params.shape().param_count();
    if gradient.len() != n {
        return Err(Error::InvalidArgument(format!(
            "gradient length {} does not match parameter count {n}",
            gradient.len()
        )));
    }
    if let Some(&bad) = gradient.iter().find(|g| !g.is_finite()) {
        return Err(Error::NonFinite {
            context: "optimizer gradient".to_string(),
            value: bad,
        });
    }
    match state {
        OptimizerState::Plain => {
            for (theta, g) in params.logits_mut().iter_mut().zip(gradient) {
                *theta += step_size * g;
            }
        }
        OptimizerState::Adaptive {
            first_moment,
            second_moment,
            step_count,
        } => {
            if first_moment.len() != n {
                return Err(Error::InvalidArgument(format!(
                    "optimizer state tracks {} parameters, step got {n}",
                    first_moment.len()
                )));
            }
            *step_count += 1;
            let t = *step_count as i32;
            let first_correction = 1.0 - ADAM_BETA1.powi(t);
            let second_correction = 1.0 - ADAM_BETA2.powi(t);
            for (i, theta) in params.logits_mut().iter_mut().enumerate() {
                let g = gradient[i];
                first_moment[i] = ADAM_BETA1 * first_moment[i] + (1.0 - ADAM_BETA1) * g;
                second_moment[i] = ADAM_BETA2 * second_moment[i] + (1.0 - ADAM_BETA2) * g * g;
                let m_hat = first_moment[i] / first_correction;
                let v_hat = second_moment[i] / second_correction;
                *theta += step_size * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
            }
        }
    }
    if let Some(&bad) = params.logits().iter().find(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            context: "updated parameters".to_string(),
            value: bad,
        });
    }
    Ok(())
}

/// Full training state, serializable for checkpoint/resume; restoring one
/// continues the run bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub task: TaskSpec,
    pub params: PolicyParams,
    pub dual: DualState,
    pub optimizer: OptimizerState,
    pub buffer: ReplayBuffer,
    pub rollout_rng: RngState,
    pub replay_rng: RngState,
    pub next_iteration: u64,
    pub cumulative_rollouts: u64,
    pub gradient_steps: u64,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Flatten stored tuples into a loss-ready batch, recomputing `logp_theta`
/// under the given parameters. States are rebuilt by replaying each tuple's
/// tokens through the context bucketing, so a tuple round-trips to exactly
/// the states its rollout visited.
pub fn batch_from_tuples(
    params: &PolicyParams,
    tuples: &[&ExperienceTuple],
) -> Result<TokenBatch> {
    let num_buckets = params.shape().num_buckets;
    let mut states = Vec::new();
    let mut actions = Vec::new();
    let mut logp_off = Vec::new();
    let mut logp_theta = Vec::new();
    let mut advantages = Vec::new();
    let mut episode_spans = Vec::new();
    for tuple in tuples {
        let start = states.len();
        for (t, (&token, &logp)) in tuple
            .tokens
            .iter()
            .zip(&tuple.per_token_logp_off)
            .enumerate()
        {
            let state = StateFeatures {
                prompt_id: tuple.prompt_id,
                position: t,
                context_hash: context_bucket(&tuple.tokens[..t], num_buckets),
            };
            logp_theta.push(params.log_prob(&state, token)?);
            states.push(state);
            actions.push(token);
            logp_off.push(logp);
            advantages.push(tuple.advantage);
        }
        episode_spans.push((start, states.len() - start));
    }
    TokenBatch::new(states, actions, logp_off, logp_theta, advantages, episode_spans)
}

fn groups_to_tuples(groups: &[GroupRollout], iteration_tag: u64) -> Result<Vec<ExperienceTuple>> {
    let mut tuples = Vec::new();
    for group in groups {
        for (episode, &advantage) in group.episodes.iter().zip(&group.advantages) {
            tuples.push(ExperienceTuple::from_episode(episode, advantage, iteration_tag)?);
        }
    }
    Ok(tuples)
}

/// The engine behind [`run_on_policy`] and [`run_off_policy`]: owns every
/// piece of mutable training state and advances one iteration at a time.
#[derive(Debug, Clone)]
pub struct Trainer {
    config: TrainConfig,
    task: TaskSpec,
    params: PolicyParams,
    dual: DualState,
    optimizer: OptimizerState,
    buffer: ReplayBuffer,
    rollout_rng: ChaCha8Rng,
    replay_rng: ChaCha8Rng,
    next_iteration: u64,
    cumulative_rollouts: u64,
    gradient_steps: u64,
    eureka_state: Option<(StateFeatures, usize)>,
}

impl Trainer {
    pub fn new(config: TrainConfig, task: TaskSpec, params: PolicyParams) -> Result<Self> {
        config.validate()?;
        let expected = task.policy_shape(params.shape().num_buckets)?;
        if expected != *params.shape() {
            return Err(Error::InvalidArgument(format!(
                "parameter table {:?} does not match the task's required shape {expected:?}",
                params.shape()
            )));
        }
        let mut rollout_rng = ChaCha8Rng::seed_from_u64(config.seed);
        rollout_rng.set_stream(0);
        let mut replay_rng = ChaCha8Rng::seed_from_u64(config.seed);
        replay_rng.set_stream(1);
        let eureka_state = task.eureka_index().map(|index| {
            (
                StateFeatures {
                    prompt_id: 0,
                    position: 0,
                    context_hash: context_bucket(&[], params.shape().num_buckets),
                },
                index,
            )
        });
        Ok(Self {
            buffer: ReplayBuffer::new(config.buffer_capacity)?,
            optimizer: OptimizerState::new(config.optimizer, params.shape().param_count()),
            dual: config.dual.clone(),
            config,
            task,
            params,
            rollout_rng,
            replay_rng,
            next_iteration: 0,
            cumulative_rollouts: 0,
            gradient_steps: 0,
            eureka_state,
        })
    }

    /// Rebuild a trainer mid-run; continues exactly where the checkpoint
    /// left off.
    pub fn from_checkpoint(checkpoint: Checkpoint) -> Result<Self> {
        checkpoint.config.validate()?;
        let eureka_state = checkpoint.task.eureka_index().map(|index| {
            (
                StateFeatures {
                    prompt_id: 0,
                    position: 0,
                    context_hash: context_bucket(&[], checkpoint.params.shape().num_buckets),
                },
                index,
            )
        });
        Ok(Self {
            rollout_rng: checkpoint.rollout_rng.restore(),
            replay_rng: checkpoint.replay_rng.restore(),
            config: checkpoint.config,
            task: checkpoint.task,
            params: checkpoint.params,
            dual: checkpoint.dual,
            optimizer: checkpoint.optimizer,
            buffer: checkpoint.buffer,
            next_iteration: checkpoint.next_iteration,
            cumulative_rollouts: checkpoint.cumulative_rollouts,
            gradient_steps: checkpoint.gradient_steps,
            eureka_state,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            task: self.task.clone(),
            params: self.params.clone(),
            dual: self.dual.clone(),
            optimizer: self.optimizer.clone(),
            buffer: self.buffer.clone(),
            rollout_rng: RngState::capture(&self.rollout_rng),
            replay_rng: RngState::capture(&self.replay_rng),
            next_iteration: self.next_iteration,
            cumulative_rollouts: self.cumulative_rollouts,
            gradient_steps: self.gradient_steps,
        }
    }

    pub fn params(&self) -> &PolicyParams {
        &self.params
    }

    pub fn dual(&self) -> &DualState {
        &self.dual
    }

    pub fn gradient_steps(&self) -> u64 {
        self.gradient_steps
    }

    pub fn cumulative_rollouts(&self) -> u64 {
        self.cumulative_rollouts
    }

    /// Advance `iterations` iterations, returning one metrics row per
    /// iteration.
    pub fn run(&mut self, iterations: usize) -> Result<Vec<MetricsRow>> {
        let mut rows = Vec::with_capacity(iterations);
        for _ in 0..iterations {
            rows.push(self.train_iteration()?);
        }
        Ok(rows)
    }

    fn collect_groups(&mut self) -> Result<Vec<GroupRollout>> {
        let ppi = self.config.prompts_per_iteration;
        let num_prompts = self.task.num_prompts();
        let mut groups = Vec::with_capacity(ppi);
        for j in 0..ppi {
            let prompt_id = (self.next_iteration as usize * ppi + j) % num_prompts;
            let mut episodes = Vec::with_capacity(self.config.group_size);
            for _ in 0..self.config.group_size {
                episodes.push(rollout(
                    &self.params,
                    &self.task,
                    prompt_id,
                    &mut self.rollout_rng,
                )?);
            }
            groups.push(GroupRollout::from_episodes(
                episodes,
                self.config.stability_delta,
            )?);
        }
        self.cumulative_rollouts += (ppi * self.config.group_size) as u64;
        Ok(groups)
    }

    fn loss_report(&self, batch: &TokenBatch) -> Result<LossReport> {
        match self.config.algorithm {
            Algorithm::Grpo | Algorithm::GrpoCh => grpo_clip_loss(
                batch,
                self.config.eps_low,
                self.config.eps_high,
                self.config.aggregation,
            ),
            Algorithm::R2vpoOn | Algorithm::R2vpoOff => r2vpo_loss(
                batch,
                self.dual.lambda,
                self.dual.trust_delta,
                self.config.aggregation,
            ),
        }
    }

    /// One loss evaluation, one optimizer step, one dual update (penalty
    /// algorithms only — the measured variance is the loss-time estimate).
    fn gradient_step_on_batch(&mut self, batch: &TokenBatch) -> Result<LossReport> {
        let report = self.loss_report(batch)?;
        let gradient = gradient_from_coefficients(
            batch,
            &self.params,
            &report.grad_coefficients,
            self.config.aggregation,
        )?;
        optimizer_step(
            &mut self.params,
            &gradient,
            self.config.step_size,
            &mut self.optimizer,
        )?;
        self.gradient_steps += 1;
        if self.config.algorithm.uses_penalty() {
            self.dual = self.dual.updated(report.ratio_variance_estimate)?;
        }
        Ok(report)
    }

    /// Fraction of the batch's tokens whose ratio against the *current*
    /// parameters falls outside the trust band.
    fn post_update_band_exits(&self, batch: &mut TokenBatch) -> Result<f64> {
        batch.refresh_logp_theta(&self.params)?;
        let mut outside = 0usize;
        for t in 0..batch.len() {
            let (rho, _) = ratio(batch.logp_theta[t], batch.logp_off[t]);
            if rho > 1.0 + self.config.eps_high || rho < 1.0 - self.config.eps_low {
                outside += 1;
            }
        }
        Ok(outside as f64 / batch.len() as f64)
    }

    fn eureka_probability(&self) -> Result<f64> {
        match &self.eureka_state {
            None => Ok(f64::NAN),
            Some((state, index)) => Ok(self.params.dist(state)?.probs[*index]),
        }
    }

    fn train_iteration(&mut self) -> Result<MetricsRow> {
        let iteration = self.next_iteration;
        let groups = self.collect_groups()?;
        let episode_count: usize = groups.iter().map(|g| g.episodes.len()).sum();
        let mean_reward = groups
            .iter()
            .flat_map(|g| g.episodes.iter().map(|e| e.reward))
            .sum::<f64>()
            / episode_count as f64;
        let tag = iteration + 1;
        let tuples = groups_to_tuples(&groups, tag)?;

        let mut clamp_events = 0u64;
        let (mut last_batch, last_report) = if self.config.algorithm.is_off_policy() {
            self.buffer.push_iteration(tag, tuples)?;
            let batch_episodes = episode_count;
            let mut last: Option<(TokenBatch, LossReport)> = None;
            for step in 0..self.config.utd_ratio {
                let batch = if step == 0 {
                    let fresh: Vec<&ExperienceTuple> = self
                        .buffer
                        .latest_bucket()
                        .expect("bucket was just pushed")
                        .iter()
                        .collect();
                    batch_from_tuples(&self.params, &fresh)?
                } else {
                    let sampled = self
                        .buffer
                        .sample_uniform(batch_episodes, &mut self.replay_rng)?;
                    batch_from_tuples(&self.params, &sampled)?
                };
                let report = self.gradient_step_on_batch(&batch)?;
                clamp_events += report.clamp_events;
                last = Some((batch, report));
            }
            last.expect("utd_ratio >= 1 guarantees at least one step")
        } else {
            let refs: Vec<&ExperienceTuple> = tuples.iter().collect();
            let batch = batch_from_tuples(&self.params, &refs)?;
            let report = self.gradient_step_on_batch(&batch)?;
            clamp_events += report.clamp_events;
            (batch, report)
        };

        let clipped_fraction = self.post_update_band_exits(&mut last_batch)?;
        let eureka_prob = self.eureka_probability()?;
        self.next_iteration += 1;
        Ok(MetricsRow {
            iteration,
            cumulative_rollouts: self.cumulative_rollouts,
            mean_reward,
            ratio_variance: last_report.ratio_variance_estimate,
            lambda: self.dual.lambda,
            clipped_fraction,
            clamp_events,
            eureka_prob,
            wall_ms: 0,
        })
    }
}

/// Everything a finished run hands back: the per-iteration metrics and the
/// final state (parameters live inside the checkpoint).
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub metrics: Vec<MetricsRow>,
    pub checkpoint: Checkpoint,
}

impl RunOutcome {
    pub fn params(&self) -> &PolicyParams {
        &self.checkpoint.params
    }
}

/// On-policy loop: hard-clip baselines and the on-policy penalty variant.
pub fn run_on_policy(
    config: &TrainConfig,
    task: &TaskSpec,
    params: PolicyParams,
) -> Result<RunOutcome> {
    if config.algorithm.is_off_policy() {
        return Err(Error::Config(format!(
            "the on-policy loop cannot run algorithm {}",
            config.algorithm.name()
        )));
    }
    run_loop(config, task, params)
}

/// Off-policy loop: replay buffer plus UTD gradient steps.
pub fn run_off_policy(
    config: &TrainConfig,
    task: &TaskSpec,
    params: PolicyParams,
) -> Result<RunOutcome> {
    if !config.algorithm.is_off_policy() {
        return Err(Error::Config(format!(
            "the off-policy loop requires algorithm r2vpo_off, got {}",
            config.algorithm.name()
        )));
    }
    run_loop(config, task, params)
}

/// Dispatch on the configured algorithm.
pub fn run_training(
    config: &TrainConfig,
    task: &TaskSpec,
    params: PolicyParams,
) -> Result<RunOutcome> {
    run_loop(config, task, params)
}

fn run_loop(config: &TrainConfig, task: &TaskSpec, params: PolicyParams) -> Result<RunOutcome> {
    let mut trainer = Trainer::new(config.clone(), task.clone(), params)?;
    let metrics = trainer.run(config.iterations)?;
    Ok(RunOutcome {
        metrics,
        checkpoint: trainer.checkpoint(),
    })
}

//! Synthetic verifiable tasks with binary rewards.
//!
//! Two environments, both deliberately tiny:
//!
//! - `rare_token_bandit`: a single-step task whose only rewarded action (the
//!   "eureka" token) starts with its logit depressed, so the initial policy
//!   almost never emits it. Constructed via [`make_rare_token_bandit`], which
//!   refuses starting probabilities above 2% so the exploration problem is
//!   genuinely rare-event.
//! - `sequence_sum`: emit a fixed-length digit string whose sum must equal a
//!   per-prompt target. Rewards are verifiable by exhaustive enumeration,
//!   which the tests use as an oracle.
//!
//! Episodes are undiscounted and fixed-length; the reward is the verifier
//! output, nothing else.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{context_bucket, PolicyParams, PolicyShape, StateFeatures};

/// Task definition: vocabulary, episode length, and the per-prompt goal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskSpec {
    /// One emission; reward 1 iff it is the eureka token.
    RareTokenBandit {
        vocab_size: usize,
        eureka_index: usize,
        num_prompts: usize,
    },
    /// `seq_len` digit emissions; reward 1 iff their sum hits the prompt's
    /// target. `targets[i]` is the goal for prompt `i`.
    SequenceSum {
        vocab_size: usize,
        seq_len: usize,
        targets: Vec<usize>,
    },
}

impl TaskSpec {
    pub fn sequence_sum(vocab_size: usize, seq_len: usize, targets: Vec<usize>) -> Result<Self> {
        if vocab_size < 2 {
            return Err(Error::InvalidArgument(format!(
                "sequence_sum needs at least 2 digits, got vocab_size {vocab_size}"
            )));
        }
        if seq_len == 0 || targets.is_empty() {
            return Err(Error::InvalidArgument(
                "sequence_sum needs a positive length and at least one prompt".to_string(),
            ));
        }
        let max_sum = (vocab_size - 1) * seq_len;
        for (i, &t) in targets.iter().enumerate() {
            if t > max_sum {
                return Err(Error::InvalidArgument(format!(
                    "prompt {i} target {t} exceeds the maximum achievable sum {max_sum}"
                )));
            }
        }
        Ok(TaskSpec::SequenceSum {
            vocab_size,
            seq_len,
            targets,
        })
    }

    pub fn vocab_size(&self) -> usize {
        match self {
            TaskSpec::RareTokenBandit { vocab_size, .. } => *vocab_size,
            TaskSpec::SequenceSum { vocab_size, .. } => *vocab_size,
        }
    }

    /// Episode length; every rollout runs to exactly this many tokens.
    pub fn max_len(&self) -> usize {
        match self {
            TaskSpec::RareTokenBandit { .. } => 1,
            TaskSpec::SequenceSum { seq_len, .. } => *seq_len,
        }
    }

    pub fn num_prompts(&self) -> usize {
        match self {
            TaskSpec::RareTokenBandit { num_prompts, .. } => *num_prompts,
            TaskSpec::SequenceSum { targets, .. } => targets.len(),
        }
    }

    pub fn eureka_index(&self) -> Option<usize> {
        match self {
            TaskSpec::RareTokenBandit { eureka_index, .. } => Some(*eureka_index),
            TaskSpec::SequenceSum { .. } => None,
        }
    }

    fn check_tokens(&self, tokens: &[usize]) -> Result<()> {
        if tokens.len() != self.max_len() {
            return Err(Error::InvalidArgument(format!(
                "expected exactly {} tokens, got {}",
                self.max_len(),
                tokens.len()
            )));
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t >= self.vocab_size()) {
            return Err(Error::IndexOutOfRange(format!(
                "token {bad} outside vocabulary of size {}",
                self.vocab_size()
            )));
        }
        Ok(())
    }

    /// Binary verifier. Returns 1.0 exactly when the sequence satisfies the
    /// prompt's goal, 0.0 otherwise.
    pub fn verify(&self, prompt_id: usize, tokens: &[usize]) -> Result<f64> {
        if prompt_id >= self.num_prompts() {
            return Err(Error::IndexOutOfRange(format!(
                "prompt_id {prompt_id} >= num_prompts {}",
                self.num_prompts()
            )));
        }
        self.check_tokens(tokens)?;
        let hit = match self {
            TaskSpec::RareTokenBandit { eureka_index, .. } => tokens[0] == *eureka_index,
            TaskSpec::SequenceSum { targets, .. } => {
                tokens.iter().sum::<usize>() == targets[prompt_id]
            }
        };
        Ok(if hit { 1.0 } else { 0.0 })
    }

    /// Policy shape matching this task's state space.
    pub fn policy_shape(&self, num_buckets: usize) -> Result<PolicyShape> {
        PolicyShape::new(
            self.vocab_size(),
            self.num_prompts(),
            self.max_len(),
            num_buckets,
        )
    }
}

/// One completed trajectory: the sampled tokens, their log probabilities
/// under the policy that generated them, and the verifier reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub prompt_id: usize,
    pub tokens: Vec<usize>,
    pub per_token_logp: Vec<f64>,
    pub reward: f64,
}

/// Sample one episode autoregressively from `params`. The context hash fed
/// to each step is the bucket of the tokens emitted so far, so replaying the
/// stored tokens through [`context_bucket`] recovers the exact states.
pub fn rollout<R: Rng + ?Sized>(
    params: &PolicyParams,
    task: &TaskSpec,
    prompt_id: usize,
    rng: &mut R,
) -> Result<Episode> {
    if prompt_id >= task.num_prompts() {
        return Err(Error::IndexOutOfRange(format!(
            "prompt_id {prompt_id} >= num_prompts {}",
            task.num_prompts()
        )));
    }
    let shape = params.shape();
    if shape.vocab_size != task.vocab_size() || shape.max_len != task.max_len() {
        return Err(Error::InvalidArgument(format!(
            "policy shape (vocab {}, max_len {}) does not match task (vocab {}, max_len {})",
            shape.vocab_size,
            shape.max_len,
            task.vocab_size(),
            task.max_len()
        )));
    }
    let mut tokens = Vec::with_capacity(task.max_len());
    let mut per_token_logp = Vec::with_capacity(task.max_len());
    for position in 0..task.max_len() {
        let state = StateFeatures {
            prompt_id,
            position,
            context_hash: context_bucket(&tokens, shape.num_buckets),
        };
        let dist = params.dist(&state)?;
        let action = dist.sample(rng);
        per_token_logp.push(dist.log_probs[action]);
        tokens.push(action);
    }
    let reward = task.verify(prompt_id, &tokens)?;
    Ok(Episode {
        prompt_id,
        tokens,
        per_token_logp,
        reward,
    })
}

/// Build the rare-token bandit and its starting policy: all logits zero
/// except the eureka token's, which sits `logit_gap` below the rest in every
/// row. Rejects configurations whose initial eureka probability exceeds 2%,
/// since the task is only interesting when the rewarded token starts rare.
pub fn make_rare_token_bandit(
    vocab_size: usize,
    eureka_index: usize,
    logit_gap: f64,
    num_prompts: usize,
    num_buckets: usize,
) -> Result<(TaskSpec, PolicyParams)> {
    if vocab_size < 2 {
        return Err(Error::InvalidArgument(format!(
            "rare_token_bandit needs at least 2 tokens, got {vocab_size}"
        )));
    }
    if eureka_index >= vocab_size {
        return Err(Error::IndexOutOfRange(format!(
            "eureka_index {eureka_index} >= vocab_size {vocab_size}"
        )));
    }
    if !logit_gap.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "logit_gap must be finite, got {logit_gap}"
        )));
    }
    let p_eureka = (-logit_gap).exp() / ((vocab_size - 1) as f64 + (-logit_gap).exp());
    if p_eureka > 0.02 {
        return Err(Error::InvalidArgument(format!(
            "initial eureka probability {p_eureka:.6} exceeds 0.02; increase logit_gap"
        )));
    }
    let task = TaskSpec::RareTokenBandit {
        vocab_size,
        eureka_index,
        num_prompts,
    };
    let shape = task.policy_shape(num_buckets)?;
    let mut params = PolicyParams::uniform(shape);
    {
        let k = vocab_size;
        let logits = params.logits_mut();
        for row in 0..shape.rows() {
            logits[row * k + eureka_index] = -logit_gap;
        }
    }
    Ok((task, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn empty_context_state(prompt_id: usize, num_buckets: usize) -> StateFeatures {
        StateFeatures {
            prompt_id,
            position: 0,
            context_hash: context_bucket(&[], num_buckets),
        }
    }

    #[test]
    fn bandit_initial_eureka_probability_matches_closed_form() {
        let (task, params) = make_rare_token_bandit(16, 3, 5.0, 1, 64).unwrap();
        let dist = params.dist(&empty_context_state(0, 64)).unwrap();
        let expected = (-5.0f64).exp() / (15.0 + (-5.0f64).exp());
        assert!((dist.probs[3] - expected).abs() < 1e-15);
        assert!((expected - 4.4899e-4).abs() < 1e-7);
        assert_eq!(task.eureka_index(), Some(3));
    }

    #[test]
    fn bandit_with_two_tokens_and_gap_four_is_accepted() {
        let (_, params) = make_rare_token_bandit(2, 1, 4.0, 1, 8).unwrap();
        let dist = params.dist(&empty_context_state(0, 8)).unwrap();
        let expected = 1.0 / (1.0 + 4.0f64.exp());
        assert!((dist.probs[1] - expected).abs() < 1e-15);
        assert!((expected - 0.0179862).abs() < 1e-7);
    }

    #[test]
    fn bandit_with_zero_gap_is_rejected() {
        // Uniform start would give the eureka token probability 1/16 ≈ 0.0625.
        let err = make_rare_token_bandit(16, 3, 0.0, 1, 64).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn bandit_verifier_checks_length_and_vocabulary() {
        let (task, _) = make_rare_token_bandit(16, 3, 5.0, 1, 64).unwrap();
        assert_eq!(task.verify(0, &[3]).unwrap(), 1.0);
        assert_eq!(task.verify(0, &[4]).unwrap(), 0.0);
        assert!(task.verify(0, &[]).is_err());
        assert!(task.verify(0, &[3, 3]).is_err());
        assert!(task.verify(0, &[16]).is_err());
        assert!(task.verify(1, &[3]).is_err());
    }

    #[test]
    fn sequence_sum_target_27_has_unique_solution() {
        let task = TaskSpec::sequence_sum(10, 3, vec![27]).unwrap();
        let mut rewarded = Vec::new();
        for a in 0..10 {
            for b in 0..10 {
                for c in 0..10 {
                    if task.verify(0, &[a, b, c]).unwrap() == 1.0 {
                        rewarded.push([a, b, c]);
                    }
                }
            }
        }
        assert_eq!(rewarded, vec![[9, 9, 9]]);
    }

    #[test]
    fn sequence_sum_target_zero_rewards_only_zeros() {
        let task = TaskSpec::sequence_sum(10, 3, vec![0]).unwrap();
        assert_eq!(task.verify(0, &[0, 0, 0]).unwrap(), 1.0);
        assert_eq!(task.verify(0, &[0, 1, 0]).unwrap(), 0.0);
    }

    #[test]
    fn sequence_sum_verifier_agrees_with_exhaustive_enumeration() {
        let task = TaskSpec::sequence_sum(10, 3, vec![12, 5]).unwrap();
        for prompt in 0..2 {
            let target = [12, 5][prompt];
            for a in 0..10 {
                for b in 0..10 {
                    for c in 0..10 {
                        let expected = if a + b + c == target { 1.0 } else { 0.0 };
                        assert_eq!(task.verify(prompt, &[a, b, c]).unwrap(), expected);
                    }
                }
            }
        }
    }

    #[test]
    fn unreachable_target_is_rejected() {
        assert!(TaskSpec::sequence_sum(10, 3, vec![28]).is_err());
        assert!(TaskSpec::sequence_sum(10, 3, vec![]).is_err());
    }

    #[test]
    fn rollout_is_deterministic_and_reward_matches_verifier() {
        let task = TaskSpec::sequence_sum(10, 3, vec![12, 5, 20]).unwrap();
        let shape = task.policy_shape(16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let logits = (0..shape.param_count())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let params = PolicyParams::from_logits(shape, logits).unwrap();

        let mut rng_a = ChaCha8Rng::seed_from_u64(77);
        let mut rng_b = ChaCha8Rng::seed_from_u64(77);
        for prompt in 0..3 {
            let ep_a = rollout(&params, &task, prompt, &mut rng_a).unwrap();
            let ep_b = rollout(&params, &task, prompt, &mut rng_b).unwrap();
            assert_eq!(ep_a, ep_b);
            assert_eq!(ep_a.tokens.len(), 3);
            assert_eq!(ep_a.reward, task.verify(prompt, &ep_a.tokens).unwrap());
        }
    }

    #[test]
    fn rollout_log_probs_match_recomputation() {
        let task = TaskSpec::sequence_sum(6, 4, vec![9]).unwrap();
        let shape = task.policy_shape(8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let logits = (0..shape.param_count())
            .map(|_| rng.gen_range(-2.0..2.0))
            .collect();
        let params = PolicyParams::from_logits(shape, logits).unwrap();
        let ep = rollout(&params, &task, 0, &mut rng).unwrap();
        for (t, (&token, &logp)) in ep.tokens.iter().zip(&ep.per_token_logp).enumerate() {
            let state = StateFeatures {
                prompt_id: 0,
                position: t,
                context_hash: context_bucket(&ep.tokens[..t], 8),
            };
            assert_eq!(params.log_prob(&state, token).unwrap(), logp);
        }
    }

    #[test]
    fn rollout_rejects_mismatched_policy_shape() {
        let task = TaskSpec::sequence_sum(10, 3, vec![12]).unwrap();
        let wrong_shape = PolicyShape::new(10, 1, 2, 16).unwrap();
        let params = PolicyParams::uniform(wrong_shape);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(rollout(&params, &task, 0, &mut rng).is_err());
    }
}

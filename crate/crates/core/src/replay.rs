//! FIFO replay buffer of iteration-tagged experience for off-policy
//! training.
//!
//! Experience is stored in whole-iteration buckets: pushing iteration `k`'s
//! tuples appends one bucket, and when the bucket count exceeds the capacity
//! the oldest bucket is evicted atomically. This keeps the staleness of
//! every stored tuple bounded by the capacity. Sampling is uniform with
//! replacement over all stored tuples — the update-to-data regime draws more
//! gradient batches than fresh data, so replacement is required for
//! arbitrary ratios.
//!
//! Advantages are frozen at generation time and stored in the tuple; they
//! are never recomputed against the current policy. Only the importance
//! ratio, rebuilt from the stored behavior log-probs, reflects how far the
//! policy has moved since the data was collected.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::Episode;
use crate::error::{Error, Result};

/// One stored trajectory with everything the off-policy loss needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperienceTuple {
    pub prompt_id: usize,
    pub tokens: Vec<usize>,
    /// Log-probability of each token under the policy that generated it.
    pub per_token_logp_off: Vec<f64>,
    pub reward: f64,
    /// Group-normalized advantage frozen at generation time.
    pub advantage: f64,
    /// Iteration whose inference phase produced this tuple.
    pub iteration_tag: u64,
}

impl ExperienceTuple {
    pub fn new(
        prompt_id: usize,
        tokens: Vec<usize>,
        per_token_logp_off: Vec<f64>,
        reward: f64,
        advantage: f64,
        iteration_tag: u64,
    ) -> Result<Self> {
        if tokens.is_empty() || per_token_logp_off.len() != tokens.len() {
            return Err(Error::InvalidArgument(format!(
                "tuple needs one behavior log-prob per token: {} tokens, {} log-probs",
                tokens.len(),
                per_token_logp_off.len()
            )));
        }
        Ok(Self {
            prompt_id,
            tokens,
            per_token_logp_off,
            reward,
            advantage,
            iteration_tag,
        })
    }

    /// Package a finished episode with its frozen advantage.
    pub fn from_episode(episode: &Episode, advantage: f64, iteration_tag: u64) -> Result<Self> {
        Self::new(
            episode.prompt_id,
            episode.tokens.clone(),
            episode.per_token_logp.clone(),
            episode.reward,
            advantage,
            iteration_tag,
        )
    }

    /// Iterations elapsed since this tuple was generated. Callers must pass
    /// a current iteration at or after the tuple's tag; earlier values
    /// saturate to zero rather than wrapping.
    pub fn staleness(&self, current_iteration: u64) -> u64 {
        current_iteration.saturating_sub(self.iteration_tag)
    }
}

/// FIFO of iteration buckets with whole-bucket eviction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity_iterations: usize,
    buckets: VecDeque<Vec<ExperienceTuple>>,
}

impl ReplayBuffer {
    pub fn new(capacity_iterations: usize) -> Result<Self> {
        if capacity_iterations == 0 {
            return Err(Error::InvalidArgument(
                "buffer capacity must be at least one iteration".to_string(),
            ));
        }
        Ok(Self {
            capacity_iterations,
            buckets: VecDeque::new(),
        })
    }

    pub fn capacity_iterations(&self) -> usize {
        self.capacity_iterations
    }

    /// Total stored tuples across all buckets.
    pub fn len(&self) -> usize {
        self.buckets.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.buckets.is_empty()
    }

    pub fn num_buckets(&self) -> usize {
        self.buckets.len()
    }

    pub fn oldest_tag(&self) -> Option<u64> {
        self.buckets.front().map(|b| b[0].iteration_tag)
    }

    pub fn newest_tag(&self) -> Option<u64> {
        self.buckets.back().map(|b| b[0].iteration_tag)
    }

    /// The most recently pushed bucket, in push order.
    pub fn latest_bucket(&self) -> Option<&[ExperienceTuple]> {
        self.buckets.back().map(Vec::as_slice)
    }

    /// Append one iteration's tuples as a new bucket, evicting the oldest
    /// bucket if the capacity is exceeded. Tags must be strictly increasing
    /// across pushes, and every tuple must carry the pushed tag.
    pub fn push_iteration(
        &mut self,
        iteration_tag: u64,
        tuples: Vec<ExperienceTuple>,
    ) -> Result<()> {
        if tuples.is_empty() {
            return Err(Error::InvalidArgument(
                "cannot push an empty iteration bucket".to_string(),
            ));
        }
        if let Some(bad) = tuples.iter().find(|t| t.iteration_tag != iteration_tag) {
            return Err(Error::InvalidArgument(format!(
                "bucket tagged {iteration_tag} contains a tuple tagged {}",
                bad.iteration_tag
            )));
        }
        if let Some(newest) = self.newest_tag() {
            if iteration_tag <= newest {
                return Err(Error::InvalidArgument(format!(
                    "iteration tags must be strictly increasing: \
                     got {iteration_tag} after {newest}"
                )));
            }
        }
        self.buckets.push_back(tuples);
        if self.buckets.len() > self.capacity_iterations {
            self.buckets.pop_front();
        }
        Ok(())
    }

    /// Draw `batch_size` tuples uniformly with replacement over everything
    /// stored.
    pub fn sample_uniform<R: Rng + ?Sized>(
        &self,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Vec<&ExperienceTuple>> {
        let total = self.len();
        if total == 0 {
            return Err(Error::InvalidState(
                "cannot sample from an empty replay buffer".to_string(),
            ));
        }
        let mut out = Vec::with_capacity(batch_size);
        for _ in 0..batch_size {
            let mut index = rng.gen_range(0..total);
            for bucket in &self.buckets {
                if index < bucket.len() {
                    out.push(&bucket[index]);
                    break;
                }
                index -= bucket.len();
            }
        }
        Ok(out)
    }

    /// All stored tags, oldest first.
    pub fn tags(&self) -> Vec<u64> {
        self.buckets.iter().map(|b| b[0].iteration_tag).collect()
    }

    /// The live buckets, oldest first.
    pub fn iter_buckets(&self) -> impl Iterator<Item = &[ExperienceTuple]> {
        self.buckets.iter().map(Vec::as_slice)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tuple(tag: u64, marker: usize) -> ExperienceTuple {
        ExperienceTuple::new(marker, vec![marker % 7], vec![-0.5], 1.0, 0.3, tag).unwrap()
    }

    #[test]
    fn fifo_eviction_keeps_the_newest_capacity_buckets() {
        let mut buffer = ReplayBuffer::new(4).unwrap();
        for tag in 1..=5 {
            buffer.push_iteration(tag, vec![tuple(tag, 0)]).unwrap();
        }
        assert_eq!(buffer.tags(), vec![2, 3, 4, 5]);
        assert_eq!(buffer.len(), 4);
        assert_eq!(buffer.oldest_tag(), Some(2));
        assert_eq!(buffer.newest_tag(), Some(5));
    }

    #[test]
    fn under_capacity_all_buckets_survive() {
        let mut buffer = ReplayBuffer::new(4).unwrap();
        for tag in 1..=4 {
            let tuples: Vec<_> = (0..3).map(|i| tuple(tag, i)).collect();
            buffer.push_iteration(tag, tuples).unwrap();
        }
        assert_eq!(buffer.tags(), vec![1, 2, 3, 4]);
        assert_eq!(buffer.len(), 12);
        assert_eq!(buffer.num_buckets(), 4);
    }

    #[test]
    fn non_monotone_or_duplicate_tags_are_rejected() {
        let mut buffer = ReplayBuffer::new(4).unwrap();
        buffer.push_iteration(3, vec![tuple(3, 0)]).unwrap();
        assert!(buffer.push_iteration(3, vec![tuple(3, 0)]).is_err());
        assert!(buffer.push_iteration(2, vec![tuple(2, 0)]).is_err());
        // Mis-tagged tuple inside the bucket.
        assert!(buffer.push_iteration(4, vec![tuple(5, 0)]).is_err());
        // Empty bucket.
        assert!(buffer.push_iteration(4, vec![]).is_err());
    }

    #[test]
    fn zero_capacity_is_rejected() {
        assert!(ReplayBuffer::new(0).is_err());
    }

    #[test]
    fn single_tuple_buffer_always_returns_it() {
        let mut buffer = ReplayBuffer::new(4).unwrap();
        buffer.push_iteration(1, vec![tuple(1, 42)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let draws = buffer.sample_uniform(50, &mut rng).unwrap();
        assert_eq!(draws.len(), 50);
        assert!(draws.iter().all(|t| t.prompt_id == 42));
    }

    #[test]
    fn sampling_from_empty_buffer_is_a_state_error() {
        let buffer = ReplayBuffer::new(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        match buffer.sample_uniform(1, &mut rng) {
            Err(Error::InvalidState(_)) => {}
            other => panic!("expected state error, got {other:?}"),
        }
    }

    #[test]
    fn sampling_is_uniform_across_buckets() {
        let mut buffer = ReplayBuffer::new(4).unwrap();
        for tag in [1u64, 2] {
            let tuples: Vec<_> = (0..100).map(|i| tuple(tag, i)).collect();
            buffer.push_iteration(tag, tuples).unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let draws = buffer.sample_uniform(40_000, &mut rng).unwrap();
        let from_first = draws.iter().filter(|t| t.iteration_tag == 1).count();
        let frequency = from_first as f64 / 40_000.0;
        assert!(
            (frequency - 0.5).abs() < 0.01,
            "bucket frequency {frequency} strays from 0.5"
        );
        // Per-tuple frequencies proportional to 1/200 within loose bounds.
        let mut counts = vec![0usize; 200];
        for t in &draws {
            counts[(t.iteration_tag as usize - 1) * 100 + t.prompt_id] += 1;
        }
        let expected = 200.0;
        for &c in &counts {
            assert!(
                (c as f64 - expected).abs() < 5.0 * expected.sqrt() + 10.0,
                "tuple count {c} strays from {expected}"
            );
        }
    }

    #[test]
    fn sampling_is_deterministic_under_a_fixed_seed() {
        let mut buffer = ReplayBuffer::new(4).unwrap();
        for tag in [1u64, 2] {
            let tuples: Vec<_> = (0..10).map(|i| tuple(tag, i)).collect();
            buffer.push_iteration(tag, tuples).unwrap();
        }
        let draw = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            buffer
                .sample_uniform(64, &mut rng)
                .unwrap()
                .into_iter()
                .map(|t| (t.iteration_tag, t.prompt_id))
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(7), draw(7));
        assert_ne!(draw(7), draw(8));
    }

    #[test]
    fn staleness_counts_iterations_since_generation() {
        let t = tuple(2, 0);
        assert_eq!(t.staleness(2), 0);
        assert_eq!(t.staleness(6), 4);
        assert_eq!(t.staleness(1), 0);
    }

    #[test]
    fn staleness_of_stored_tuples_is_bounded_by_capacity() {
        let mut buffer = ReplayBuffer::new(4).unwrap();
        for tag in 1..=20u64 {
            buffer.push_iteration(tag, vec![tuple(tag, 0)]).unwrap();
            let current = tag;
            let max_staleness = buffer
                .tags()
                .iter()
                .map(|&t| current - t)
                .max()
                .unwrap();
            assert!(max_staleness < buffer.capacity_iterations() as u64);
        }
    }

    #[test]
    fn mismatched_logp_length_is_rejected() {
        assert!(ExperienceTuple::new(0, vec![1, 2], vec![-0.5], 1.0, 0.0, 1).is_err());
        assert!(ExperienceTuple::new(0, vec![], vec![], 1.0, 0.0, 1).is_err());
    }

    #[test]
    fn buffer_round_trips_through_json() {
        let mut buffer = ReplayBuffer::new(3).unwrap();
        for tag in 1..=4u64 {
            let tuples: Vec<_> = (0..2).map(|i| tuple(tag, i)).collect();
            buffer.push_iteration(tag, tuples).unwrap();
        }
        let text = serde_json::to_string(&buffer).unwrap();
        let back: ReplayBuffer = serde_json::from_str(&text).unwrap();
        assert_eq!(back, buffer);
        assert_eq!(back.tags(), vec![2, 3, 4]);
    }
}

//! Group-relative advantage normalization.
//!
//! A group is the set of rollouts sampled for one prompt in one iteration.
//! Each member's advantage is its reward centered by the group mean and
//! scaled by the population standard deviation plus a small stability offset:
//!
//! ```text
//! adv_i = (r_i - mean(r)) / (pop_std(r) + stability_delta)
//! ```
//!
//! The population (divide-by-G) standard deviation is used, not the sample
//! one. Groups where every reward is identical carry no signal and come out
//! as all-zero advantages; the stability offset only matters in that
//! degenerate neighborhood.

use serde::{Deserialize, Serialize};

use crate::env::Episode;
use crate::error::{Error, Result};

/// Centered, std-normalized advantages for one group of rewards.
pub fn group_advantage(rewards: &[f64], stability_delta: f64) -> Result<Vec<f64>> {
    if rewards.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "advantage normalization needs a group of at least 2 rewards, got {}",
            rewards.len()
        )));
    }
    if stability_delta.is_nan() || stability_delta <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "stability_delta must be positive, got {stability_delta}"
        )));
    }
    if let Some(bad) = rewards.iter().find(|r| !r.is_finite()) {
        return Err(Error::NonFinite {
            context: "group rewards".to_string(),
            value: *bad,
        });
    }
    let g = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / g;
    let variance = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / g;
    let scale = variance.sqrt() + stability_delta;
    Ok(rewards.iter().map(|r| (r - mean) / scale).collect())
}

/// Per-token advantages for one episode: the sequence-level advantage is
/// shared by every token the episode emitted.
pub fn broadcast(advantage: f64, token_count: usize) -> Result<Vec<f64>> {
    if token_count == 0 {
        return Err(Error::InvalidArgument(
            "cannot broadcast an advantage over an empty episode".to_string(),
        ));
    }
    Ok(vec![advantage; token_count])
}

/// A prompt's rollout group together with its normalized advantages;
/// `advantages[i]` belongs to `episodes[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRollout {
    pub prompt_id: usize,
    pub episodes: Vec<Episode>,
    pub advantages: Vec<f64>,
}

impl GroupRollout {
    pub fn from_episodes(episodes: Vec<Episode>, stability_delta: f64) -> Result<Self> {
        let prompt_id = episodes
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty rollout group".to_string()))?
            .prompt_id;
        if episodes.iter().any(|e| e.prompt_id != prompt_id) {
            return Err(Error::InvalidArgument(
                "rollout group mixes episodes from different prompts".to_string(),
            ));
        }
        let rewards: Vec<f64> = episodes.iter().map(|e| e.reward).collect();
        let advantages = group_advantage(&rewards, stability_delta)?;
        Ok(Self {
            prompt_id,
            episodes,
            advantages,
        })
    }
}

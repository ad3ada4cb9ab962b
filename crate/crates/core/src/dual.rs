//! The penalty-strength controller: a projected dual-gradient step on the
//! Lagrange multiplier of the ratio-variance constraint.
//!
//! Given a measured batch estimate `v` of `E[(rho - 1)^2]` and a tolerance
//! `trust_delta`, the dynamic mode moves the multiplier against the
//! constraint violation and projects onto the non-negative half-line:
//!
//! ```text
//! lambda' = max(0, lambda - eta_lambda * (trust_delta - v))
//! ```
//!
//! Ratios wandering past the tolerance tighten the penalty; ratios well
//! inside it relax the penalty toward zero. The fixed mode keeps the
//! multiplier constant, treating it as an ordinary hyperparameter. Because
//! per-batch variance estimates are noisy at small batch sizes, the state
//! can optionally smooth them with an exponential moving average before the
//! step (`ema_beta = 0` disables smoothing).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether the multiplier adapts to measured ratio variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DualMode {
    Fixed,
    Dynamic,
}

/// Multiplier plus the controller hyperparameters and smoothing state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub lambda: f64,
    pub eta_lambda: f64,
    pub trust_delta: f64,
    pub mode: DualMode,
    /// EMA coefficient on the previous smoothed value; `0.0` feeds raw
    /// measurements straight to the update.
    pub ema_beta: f64,
    /// Last smoothed variance estimate; `None` until the first update.
    pub ema_value: Option<f64>,
}

impl DualState {
    pub fn new(
        lambda: f64,
        eta_lambda: f64,
        trust_delta: f64,
        mode: DualMode,
        ema_beta: f64,
    ) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "initial multiplier must be finite and non-negative, got {lambda}"
            )));
        }
        if !(eta_lambda.is_finite() && eta_lambda > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "dual step size must be positive, got {eta_lambda}"
            )));
        }
        if !(trust_delta.is_finite() && trust_delta > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "trust tolerance must be positive, got {trust_delta}"
            )));
        }
        if !(ema_beta.is_finite() && (0.0..1.0).contains(&ema_beta)) {
            return Err(Error::InvalidArgument(format!(
                "smoothing coefficient must lie in [0, 1), got {ema_beta}"
            )));
        }
        Ok(Self {
            lambda,
            eta_lambda,
            trust_delta,
            mode,
            ema_beta,
            ema_value: None,
        })
    }

    /// One controller step against a fresh variance measurement. Fixed mode
    /// returns the state unchanged; dynamic mode applies the projected dual
    /// update using the raw or EMA-smoothed measurement.
    pub fn updated(&self, measured_variance: f64) -> Result<DualState> {
        if !(measured_variance.is_finite() && measured_variance >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "measured ratio variance must be finite and non-negative, \
                 got {measured_variance}"
            )));
        }
        if self.mode == DualMode::Fixed {
            return Ok(self.clone());
        }
        let smoothed = if self.ema_beta > 0.0 {
            match self.ema_value {
                None => measured_variance,
                Some(prev) => self.ema_beta * prev + (1.0 - self.ema_beta) * measured_variance,
            }
        } else {
            measured_variance
        };
        let lambda = (self.lambda - self.eta_lambda * (self.trust_delta - smoothed)).max(0.0);
        Ok(DualState {
            lambda,
            ema_value: Some(smoothed),
            ..self.clone()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dynamic(lambda: f64, eta: f64, delta: f64) -> DualState {
        DualState::new(lambda, eta, delta, DualMode::Dynamic, 0.0).unwrap()
    }

    #[test]
    fn update_matches_hand_computed_value() {
        let state = dynamic(0.04, 1e-3, 0.01);
        let next = state.updated(0.05).unwrap();
        assert!((next.lambda - 0.04004).abs() < 1e-15);
    }

    #[test]
    fn measurement_at_tolerance_leaves_lambda_unchanged() {
        let state = dynamic(0.04, 1e-3, 0.01);
        let next = state.updated(0.01).unwrap();
        assert_eq!(next.lambda, 0.04);
    }

    #[test]
    fn projection_floors_at_zero() {
        let state = dynamic(0.0001, 1e-3, 1.0);
        let next = state.updated(0.0).unwrap();
        assert_eq!(next.lambda, 0.0);
        // And stays there while the constraint is slack.
        let again = next.updated(0.0).unwrap();
        assert_eq!(again.lambda, 0.0);
    }

    #[test]
    fn fixed_mode_is_the_identity() {
        let state = DualState::new(0.04, 1e-3, 0.01, DualMode::Fixed, 0.0).unwrap();
        let next = state.updated(123.0).unwrap();
        assert_eq!(next, state);
    }

    #[test]
    fn negative_or_non_finite_measurements_are_rejected() {
        let state = dynamic(0.04, 1e-3, 0.01);
        assert!(state.updated(-1e-9).is_err());
        assert!(state.updated(f64::NAN).is_err());
        assert!(state.updated(f64::INFINITY).is_err());
    }

    #[test]
    fn invalid_hyperparameters_are_rejected() {
        assert!(DualState::new(-0.01, 1e-3, 0.01, DualMode::Dynamic, 0.0).is_err());
        assert!(DualState::new(0.04, 0.0, 0.01, DualMode::Dynamic, 0.0).is_err());
        assert!(DualState::new(0.04, 1e-3, 0.0, DualMode::Dynamic, 0.0).is_err());
        assert!(DualState::new(0.04, 1e-3, 0.01, DualMode::Dynamic, 1.0).is_err());
        assert!(DualState::new(0.04, 1e-3, 0.01, DualMode::Dynamic, -0.1).is_err());
    }

    #[test]
    fn update_is_monotone_in_the_measurement_and_never_negative() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..2000 {
            let state = dynamic(
                rng.gen_range(0.0..0.5),
                rng.gen_range(1e-5..1e-1),
                rng.gen_range(1e-4..0.5),
            );
            let v1: f64 = rng.gen_range(0.0..2.0);
            let v2: f64 = rng.gen_range(0.0..2.0);
            let (lo, hi) = if v1 <= v2 { (v1, v2) } else { (v2, v1) };
            let next_lo = state.updated(lo).unwrap().lambda;
            let next_hi = state.updated(hi).unwrap().lambda;
            assert!(next_lo <= next_hi + 1e-18);
            assert!(next_lo >= 0.0 && next_hi >= 0.0);
            // Direction of movement follows the violation sign.
            if lo > state.trust_delta {
                assert!(next_lo >= state.lambda);
            }
            if hi < state.trust_delta {
                assert!(next_hi <= state.lambda);
            }
        }
    }

    #[test]
    fn constant_violation_grows_lambda_linearly() {
        let mut state = dynamic(0.04, 1e-3, 0.01);
        let v = 0.05;
        for k in 1..=100 {
            state = state.updated(v).unwrap();
            let expected = 0.04 + k as f64 * 1e-3 * (v - 0.01);
            assert!((state.lambda - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn smoothing_follows_the_exponential_recurrence() {
        let mut state = DualState::new(0.04, 1e-3, 0.01, DualMode::Dynamic, 0.9).unwrap();
        // First measurement seeds the average directly.
        state = state.updated(0.05).unwrap();
        assert!((state.ema_value.unwrap() - 0.05).abs() < 1e-15);
        assert!((state.lambda - 0.04004).abs() < 1e-15);
        // Second measurement blends: 0.9*0.05 + 0.1*0.15 = 0.06.
        state = state.updated(0.15).unwrap();
        assert!((state.ema_value.unwrap() - 0.06).abs() < 1e-15);
        assert!((state.lambda - (0.04004 + 1e-3 * (0.06 - 0.01))).abs() < 1e-15);
    }

    #[test]
    fn state_round_trips_through_json() {
        let mut state = DualState::new(0.04, 1e-3, 0.01, DualMode::Dynamic, 0.9).unwrap();
        state = state.updated(0.02).unwrap();
        let text = serde_json::to_string(&state).unwrap();
        let back: DualState = serde_json::from_str(&text).unwrap();
        assert_eq!(back, state);
    }
}

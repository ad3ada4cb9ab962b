//! Desk-scale policy optimization on exactly representable tabular policies.
//!
//! This crate trains categorical sequence policies with group-relative
//! advantages under two families of surrogate objectives:
//!
//! - hard ratio clipping (`grpo` / `grpo_ch`), where tokens whose importance
//!   ratio leaves the trust band stop contributing gradient, and
//! - a quadratic ratio-variance penalty (`r2vpo`), where the clip is replaced
//!   by a Lagrangian term `lambda * ((rho - 1)^2 - delta)` whose multiplier
//!   can be held fixed or adapted by a dual ascent controller.
//!
//! Everything is sized so that probabilities, divergences, and gradients are
//! computable in closed form: policies are softmax tables indexed by
//! `(prompt, position, context bucket)`, tasks are synthetic verifiable
//! environments with binary rewards, and the replay buffer holds whole
//! iterations of experience. The point is to make the knobs of
//! clipped-vs-penalized off-policy training observable without any estimation
//! noise beyond the rollout sampling itself.

pub mod advantage;
pub mod config;
pub mod divergence;
pub mod dual;
pub mod env;
pub mod error;
pub mod metrics;
pub mod objective;
pub mod plot;
pub mod policy;
pub mod replay;
pub mod report;
pub mod trainer;

pub use error::{Error, Result};

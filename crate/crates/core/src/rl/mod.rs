//! Off-policy agents (TD3, SAC) over small dense networks, a concurrent
//! replay buffer, checkpointing, a cheap surrogate environment, and the
//! training orchestration across parallel rollout workers.

pub mod buffer;
pub mod checkpoint;
pub mod mlp;
pub mod sac;
pub mod td3;
pub mod toy;
pub mod train;

use crate::error::{Error, Result};

/// Outcome of one environment step, in the shape the trainer consumes.
#[derive(Debug, Clone)]
pub struct EnvStep {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
}

/// Common surface over the flow-control environment and cheap surrogates.
pub trait Environment {
    fn obs_dim(&self) -> usize;
    fn bounds(&self) -> ActionBounds;
    fn reset(&mut self) -> Result<Vec<f64>>;
    fn step(&mut self, action: [f64; 4]) -> Result<EnvStep>;
}

/// One experience tuple (s, a, r, s').
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: [f64; 4],
    pub r: f64,
    pub s_next: Vec<f64>,
    pub terminated: bool,
}

impl Transition {
    pub fn validate(&self, obs_dim: usize) -> Result<()> {
        if self.s.len() != obs_dim || self.s_next.len() != obs_dim {
            return Err(Error::Config(format!(
                "transition observation length {} / {} does not match env config {obs_dim}",
                self.s.len(),
                self.s_next.len()
            )));
        }
        let finite = self.s.iter().chain(&self.s_next).all(|v| v.is_finite())
            && self.a.iter().all(|v| v.is_finite())
            && self.r.is_finite();
        if !finite {
            return Err(Error::Config("transition contains non-finite entries".into()));
        }
        Ok(())
    }
}

/// Per-dimension action bounds the squashed actor maps into.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionBounds {
    pub lo: [f64; 4],
    pub hi: [f64; 4],
}

impl ActionBounds {
    pub fn from_limits(limits: &crate::inlet::ActuatorLimits) -> Self {
        ActionBounds {
            lo: [0.0, 0.0, 0.0, limits.beta_min],
            hi: [limits.lambda_max, limits.lambda_max, limits.lambda_max, limits.beta_max],
        }
    }

    pub fn center(&self) -> [f64; 4] {
        std::array::from_fn(|i| 0.5 * (self.lo[i] + self.hi[i]))
    }

    pub fn half_span(&self) -> [f64; 4] {
        std::array::from_fn(|i| 0.5 * (self.hi[i] - self.lo[i]))
    }

    pub fn clamp(&self, a: [f64; 4]) -> [f64; 4] {
        std::array::from_fn(|i| a[i].clamp(self.lo[i], self.hi[i]))
    }

    pub fn contains(&self, a: &[f64; 4]) -> bool {
        (0..4).all(|i| a[i] >= self.lo[i] - 1e-12 && a[i] <= self.hi[i] + 1e-12)
    }
}

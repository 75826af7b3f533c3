//! Cheap 1-D surrogate of the shock-position control problem.
//!
//! A scalar shock position drifts downstream-to-upstream under a constant
//! forcing and linear damping; the 4-component jet command maps to a single
//! control authority that pushes the shock back. Observations are a row of
//! saturating "pressure sensors" straddling the shock, so the interface (and
//! the action space) matches the full environment while one step costs
//! nanoseconds. A myopic scripted controller provides the performance
//! reference.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{ActionBounds, EnvStep, Environment};
use crate::error::{Error, Result};
use crate::inlet::ActuatorLimits;

#[derive(Debug, Clone, PartialEq)]
pub struct ToyConfig {
    pub n_obs: usize,
    /// Constant upstream forcing per step.
    pub drift: f64,
    /// Multiplicative damping per step (|decay| < 1 is stable).
    pub decay: f64,
    /// Control authority scale.
    pub gain: f64,
    /// Blowing angle of maximum effectiveness, radians.
    pub beta_star: f64,
    /// Quadratic actuation-cost weight.
    pub w_u: f64,
    pub horizon: usize,
    pub x0: f64,
    /// Relative observation noise in percent, as in the full environment.
    pub obs_noise_pct: f64,
    pub seed: u64,
    pub limits: ActuatorLimits,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            n_obs: 8,
            drift: 0.2,
            decay: 0.9,
            gain: 1.0,
            beta_star: 20f64.to_radians(),
            w_u: 0.01,
            horizon: 100,
            x0: 1.0,
            obs_noise_pct: 0.0,
            seed: 0,
            limits: ActuatorLimits::default(),
        }
    }
}

impl ToyConfig {
    /// Largest authority reachable within the actuator bounds.
    pub fn u_max(&self) -> f64 {
        let best_cos = if self.beta_star >= self.limits.beta_min
            && self.beta_star <= self.limits.beta_max
        {
            1.0
        } else {
            (self.limits.beta_min - self.beta_star)
                .abs()
                .min((self.limits.beta_max - self.beta_star).abs())
                .cos()
        };
        self.limits.lambda_max * best_cos
    }
}

/// Authority of one jet command: blowing scaled by angle alignment and by
/// how much suction backs it up.
pub fn control_authority(a: &[f64; 4], beta_star: f64) -> f64 {
    let suction_support = 0.5 + 0.5 * (a[1] + a[2]).min(1.0);
    a[0] * (a[3] - beta_star).cos().max(0.0) * suction_support
}

pub struct ToyEnv {
    pub config: ToyConfig,
    sensor_centers: Vec<f64>,
    x: f64,
    step_idx: usize,
    rng: ChaCha8Rng,
    started: bool,
}

impl ToyEnv {
    pub fn new(config: ToyConfig) -> Self {
        // Sensors straddle the operating range of the shock position.
        let n = config.n_obs.max(1);
        let centers = (0..n)
            .map(|i| -1.0 + 3.0 * i as f64 / (n - 1).max(1) as f64)
            .collect();
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        ToyEnv {
            config,
            sensor_centers: centers,
            x: 0.0,
            step_idx: 0,
            rng,
            started: false,
        }
    }

    fn observe(&mut self) -> Vec<f64> {
        let delta = self.config.obs_noise_pct;
        let x = self.x;
        self.sensor_centers
            .iter()
            .map(|c| {
                let clean = (x - c).tanh();
                if delta == 0.0 {
                    clean
                } else {
                    let z: f64 = StandardNormal.sample(&mut self.rng);
                    clean * (1.0 + delta / 100.0 * z)
                }
            })
            .collect()
    }

    fn dynamics(&self, x: f64, u: f64) -> f64 {
        self.config.drift + self.config.decay * x - self.config.gain * u
    }

    /// Myopic optimal authority for the current position: minimizes
    /// x_next^2 + w_u u^2 subject to the actuator range.
    pub fn scripted_authority(config: &ToyConfig, x: f64) -> f64 {
        let free = config.decay.mul_add(x, config.drift) * config.gain
            / (config.gain * config.gain + config.w_u);
        free.clamp(0.0, config.u_max())
    }

    /// Jet command realizing a given authority at the optimal angle.
    pub fn scripted_action(config: &ToyConfig, u: f64) -> [f64; 4] {
        let beta = config
            .beta_star
            .clamp(config.limits.beta_min, config.limits.beta_max);
        let lm = config.limits.lambda_max;
        // Full suction support makes the authority scale exactly lambda_b.
        let cos = (beta - config.beta_star).cos();
        [(u / cos).clamp(0.0, lm), lm.min(1.0), lm.min(1.0), beta]
    }

    /// Return of the myopic scripted controller over one episode.
    pub fn scripted_return(config: &ToyConfig) -> f64 {
        let mut x = config.x0;
        let mut total = 0.0;
        let dummy = ToyEnv::new(config.clone());
        for _ in 0..config.horizon {
            let u = Self::scripted_authority(config, x);
            x = dummy.dynamics(x, u);
            total += -(x * x) - config.w_u * u * u;
        }
        total
    }

    /// Return of uniformly random actions, for score normalization.
    pub fn random_return(config: &ToyConfig, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = config.x0;
        let mut total = 0.0;
        let dummy = ToyEnv::new(config.clone());
        let lim = &config.limits;
        for _ in 0..config.horizon {
            let a = [
                rng.gen_range(0.0..lim.lambda_max),
                rng.gen_range(0.0..lim.lambda_max),
                rng.gen_range(0.0..lim.lambda_max),
                rng.gen_range(lim.beta_min..lim.beta_max),
            ];
            let u = control_authority(&a, config.beta_star);
            x = dummy.dynamics(x, u);
            total += -(x * x) - config.w_u * u * u;
        }
        total
    }

    pub fn position(&self) -> f64 {
        self.x
    }
}

impl Environment for ToyEnv {
    fn obs_dim(&self) -> usize {
        self.sensor_centers.len()
    }

    fn bounds(&self) -> ActionBounds {
        ActionBounds::from_limits(&self.config.limits)
    }

    fn reset(&mut self) -> Result<Vec<f64>> {
        self.x = self.config.x0;
        self.step_idx = 0;
        self.started = true;
        self.rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        Ok(self.observe())
    }

    fn step(&mut self, action: [f64; 4]) -> Result<EnvStep> {
        if !self.started {
            return Err(Error::Protocol("step called before reset".into()));
        }
        if self.step_idx >= self.config.horizon {
            return Err(Error::Protocol("step called on a finished episode".into()));
        }
        let a = self.bounds().clamp(action);
        let u = control_authority(&a, self.config.beta_star);
        self.x = self.dynamics(self.x, u);
        self.step_idx += 1;
        let reward = -(self.x * self.x) - self.config.w_u * u * u;
        Ok(EnvStep {
            observation: self.observe(),
            reward,
            // Hitting the horizon is a time limit, not a terminal state.
            terminated: false,
            truncated: self.step_idx >= self.config.horizon,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scripted_controller_stabilizes_the_shock() {
        let config = ToyConfig::default();
        let mut env = ToyEnv::new(config.clone());
        env.reset().unwrap();
        for _ in 0..config.horizon {
            let u = ToyEnv::scripted_authority(&config, env.position());
            let a = ToyEnv::scripted_action(&config, u);
            // the action must actually realize the requested authority
            assert!((control_authority(&a, config.beta_star) - u).abs() < 1e-12);
            env.step(a).unwrap();
        }
        assert!(env.position().abs() < 0.05, "x = {}", env.position());
    }

    #[test]
    fn uncontrolled_drifts_to_fixed_point() {
        let config = ToyConfig::default();
        let mut env = ToyEnv::new(config.clone());
        env.reset().unwrap();
        for _ in 0..config.horizon {
            env.step([0.0, 0.0, 0.0, 0.0]).unwrap();
        }
        let fixed_point = config.drift / (1.0 - config.decay);
        assert!((env.position() - fixed_point).abs() < 1e-3);
    }

    #[test]
    fn scripted_beats_random_by_a_wide_margin() {
        let config = ToyConfig::default();
        let scripted = ToyEnv::scripted_return(&config);
        let random = ToyEnv::random_return(&config, 1);
        assert!(scripted > -1.0, "scripted return {scripted}");
        assert!(random < 10.0 * scripted, "random {random} vs scripted {scripted}");
    }

    #[test]
    fn protocol_and_horizon_rules() {
        let mut env = ToyEnv::new(ToyConfig {
            horizon: 2,
            ..ToyConfig::default()
        });
        assert!(matches!(env.step([0.0; 4]), Err(Error::Protocol(_))));
        env.reset().unwrap();
        let s1 = env.step([0.0; 4]).unwrap();
        assert!(!s1.truncated);
        let s2 = env.step([0.0; 4]).unwrap();
        assert!(s2.truncated && !s2.terminated);
        assert!(matches!(env.step([0.0; 4]), Err(Error::Protocol(_))));
    }

    #[test]
    fn observation_noise_is_seeded_and_optional() {
        let mut clean = ToyEnv::new(ToyConfig::default());
        let o1 = clean.reset().unwrap();
        let o2 = clean.reset().unwrap();
        assert_eq!(o1, o2);

        let noisy_config = ToyConfig {
            obs_noise_pct: 5.0,
            seed: 3,
            ..ToyConfig::default()
        };
        let mut a = ToyEnv::new(noisy_config.clone());
        let mut b = ToyEnv::new(noisy_config);
        assert_eq!(a.reset().unwrap(), b.reset().unwrap());
        assert_ne!(a.reset().unwrap(), o1);
    }

    #[test]
    fn observations_order_by_shock_position() {
        let mut env = ToyEnv::new(ToyConfig::default());
        let obs = env.reset().unwrap();
        // Sensors upstream of the shock read high, downstream read low.
        assert!(obs.first().unwrap() > obs.last().unwrap());
    }
}

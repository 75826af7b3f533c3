//! Twin-delayed deep deterministic policy gradient.
//!
//! Both critics regress to a shared clipped double-Q target built from a
//! smoothed target-policy action; the actor and all three target networks
//! update only every `policy_update_interval` critic steps.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::mlp::{Activation, Adam, Mlp, MlpSpec};
use super::{ActionBounds, Transition};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Td3Config {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub gamma: f64,
    pub tau: f64,
    /// Exploration noise std, as a fraction of each action's half-span.
    pub sigma: f64,
    /// Target-policy smoothing noise std, same scaling.
    pub sigma_target: f64,
    /// Smoothing-noise clip, as a fraction of each action's half-span.
    pub noise_clip: f64,
    pub policy_update_interval: u64,
    pub batch: usize,
}

impl Default for Td3Config {
    fn default() -> Self {
        Td3Config {
            hidden: vec![256, 256],
            lr: 3e-4,
            gamma: 0.99,
            tau: 0.005,
            sigma: 0.1,
            sigma_target: 0.2,
            noise_clip: 0.5,
            policy_update_interval: 2,
            batch: 256,
        }
    }
}

/// Clipped double-Q backup; terminal transitions drop the bootstrap.
pub fn td3_target(r: f64, gamma: f64, q1: f64, q2: f64, terminated: bool) -> f64 {
    if terminated {
        r
    } else {
        r + gamma * q1.min(q2)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Td3Losses {
    pub critic: f64,
    pub actor: Option<f64>,
}

pub struct Td3Agent {
    pub config: Td3Config,
    pub bounds: ActionBounds,
    pub obs_dim: usize,
    pub actor: Mlp,
    pub actor_target: Mlp,
    pub q1: Mlp,
    pub q2: Mlp,
    pub q1_target: Mlp,
    pub q2_target: Mlp,
    pub opt_actor: Adam,
    pub opt_q1: Adam,
    pub opt_q2: Adam,
    pub updates: u64,
}

impl Td3Agent {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        bounds: ActionBounds,
        config: Td3Config,
        rng: &mut R,
    ) -> Self {
        let mut actor_sizes = vec![obs_dim];
        actor_sizes.extend(&config.hidden);
        actor_sizes.push(4);
        let actor_spec = MlpSpec {
            sizes: actor_sizes,
            hidden: Activation::Tanh,
            output: Activation::Tanh,
        };
        let mut critic_sizes = vec![obs_dim + 4];
        critic_sizes.extend(&config.hidden);
        critic_sizes.push(1);
        let critic_spec = MlpSpec::new(critic_sizes);

        let actor = Mlp::init(actor_spec, rng);
        let q1 = Mlp::init(critic_spec.clone(), rng);
        let q2 = Mlp::init(critic_spec, rng);
        let (actor_target, q1_target, q2_target) = (actor.clone(), q1.clone(), q2.clone());
        let (pa, p1, p2) = (actor.param_count(), q1.param_count(), q2.param_count());
        Td3Agent {
            opt_actor: Adam::new(config.lr, pa),
            opt_q1: Adam::new(config.lr, p1),
            opt_q2: Adam::new(config.lr, p2),
            config,
            bounds,
            obs_dim,
            actor,
            actor_target,
            q1,
            q2,
            q1_target,
            q2_target,
            updates: 0,
        }
    }

    fn map_to_bounds(&self, squashed: &[f64]) -> [f64; 4] {
        let c = self.bounds.center();
        let h = self.bounds.half_span();
        std::array::from_fn(|i| c[i] + h[i] * squashed[i])
    }

    /// Deterministic policy action (the `sigma = 0` inference path).
    pub fn policy(&self, s: &[f64]) -> [f64; 4] {
        self.map_to_bounds(&self.actor.forward_vec(s))
    }

    /// Exploration action: policy plus clamped Gaussian noise.
    pub fn act<R: Rng + ?Sized>(&self, s: &[f64], sigma: f64, rng: &mut R) -> [f64; 4] {
        let mut a = self.policy(s);
        if sigma > 0.0 {
            let h = self.bounds.half_span();
            for i in 0..4 {
                let z: f64 = StandardNormal.sample(rng);
                a[i] += sigma * h[i] * z;
            }
        }
        self.bounds.clamp(a)
    }

    /// Target-policy action with clipped smoothing noise, clamped to bounds.
    pub fn smoothed_target_action<R: Rng + ?Sized>(&self, s_next: &[f64], rng: &mut R) -> [f64; 4] {
        let base = {
            let y = self.actor_target.forward_vec(s_next);
            self.map_to_bounds(&y)
        };
        let h = self.bounds.half_span();
        let mut a = base;
        for i in 0..4 {
            let z: f64 = StandardNormal.sample(rng);
            let eps = (self.config.sigma_target * h[i] * z)
                .clamp(-self.config.noise_clip * h[i], self.config.noise_clip * h[i]);
            a[i] += eps;
        }
        self.bounds.clamp(a)
    }

    fn critic_input(&self, batch: &[Transition], actions: &[[f64; 4]], next: bool) -> DMatrix<f64> {
        let dim = self.obs_dim + 4;
        DMatrix::from_fn(dim, batch.len(), |i, b| {
            if i < self.obs_dim {
                if next {
                    batch[b].s_next[i]
                } else {
                    batch[b].s[i]
                }
            } else {
                actions[b][i - self.obs_dim]
            }
        })
    }

    /// Regression targets for a batch; exposed so tests can freeze them.
    pub fn batch_targets<R: Rng + ?Sized>(&self, batch: &[Transition], rng: &mut R) -> Vec<f64> {
        let actions: Vec<[f64; 4]> = batch
            .iter()
            .map(|t| self.smoothed_target_action(&t.s_next, rng))
            .collect();
        let x = self.critic_input(batch, &actions, true);
        let q1 = self.q1_target.forward(&x);
        let q2 = self.q2_target.forward(&x);
        batch
            .iter()
            .enumerate()
            .map(|(b, t)| td3_target(t.r, self.config.gamma, q1[(0, b)], q2[(0, b)], t.terminated))
            .collect()
    }

    /// Mean-squared critic loss and its parameter gradients for fixed targets.
    fn critic_step(&mut self, x: &DMatrix<f64>, y: &[f64], which: usize) -> f64 {
        let (net, opt) = if which == 0 {
            (&self.q1, &mut self.opt_q1)
        } else {
            (&self.q2, &mut self.opt_q2)
        };
        let n = y.len() as f64;
        let cache = net.forward_cached(x);
        let out = cache.output();
        let mut loss = 0.0;
        let d_out = DMatrix::from_fn(1, y.len(), |_, b| {
            let err = out[(0, b)] - y[b];
            loss += err * err / n;
            2.0 * err / n
        });
        let grads = net.backward(&cache, &d_out);
        if which == 0 {
            opt.step(&mut self.q1, &grads);
        } else {
            opt.step(&mut self.q2, &grads);
        }
        loss
    }

    /// Deterministic policy-gradient step: minimizes -mean Q1(s, pi(s)).
    fn actor_step(&mut self, batch: &[Transition]) -> f64 {
        let n = batch.len() as f64;
        let s = DMatrix::from_fn(self.obs_dim, batch.len(), |i, b| batch[b].s[i]);
        let actor_cache = self.actor.forward_cached(&s);
        let squashed = actor_cache.output().clone();

        let c = self.bounds.center();
        let h = self.bounds.half_span();
        let x = DMatrix::from_fn(self.obs_dim + 4, batch.len(), |i, b| {
            if i < self.obs_dim {
                batch[b].s[i]
            } else {
                c[i - self.obs_dim] + h[i - self.obs_dim] * squashed[(i - self.obs_dim, b)]
            }
        });
        let q_cache = self.q1.forward_cached(&x);
        let loss = -q_cache.output().sum() / n;

        let d_q_out = DMatrix::from_element(1, batch.len(), -1.0 / n);
        let q_grads = self.q1.backward(&q_cache, &d_q_out);
        // dL/d(squashed action): take the action rows of the critic's input
        // gradient, scaled by the bounds half-span.
        let d_squashed = DMatrix::from_fn(4, batch.len(), |i, b| {
            q_grads.d_input[(self.obs_dim + i, b)] * h[i]
        });
        let actor_grads = self.actor.backward(&actor_cache, &d_squashed);
        self.opt_actor.step(&mut self.actor, &actor_grads);
        loss
    }

    pub fn update<R: Rng + ?Sized>(
        &mut self,
        batch: &[Transition],
        rng: &mut R,
    ) -> Result<Td3Losses> {
        for t in batch {
            t.validate(self.obs_dim)?;
        }
        let y = self.batch_targets(batch, rng);
        let actions: Vec<[f64; 4]> = batch.iter().map(|t| t.a).collect();
        let x = self.critic_input(batch, &actions, false);
        let loss1 = self.critic_step(&x, &y, 0);
        let loss2 = self.critic_step(&x, &y, 1);
        let critic = 0.5 * (loss1 + loss2);

        self.updates += 1;
        let actor = if self.updates % self.config.policy_update_interval == 0 {
            let loss = self.actor_step(batch);
            self.actor_target.soft_update_from(&self.actor, self.config.tau);
            self.q1_target.soft_update_from(&self.q1, self.config.tau);
            self.q2_target.soft_update_from(&self.q2, self.config.tau);
            Some(loss)
        } else {
            None
        };

        if !critic.is_finite() || actor.map_or(false, |l| !l.is_finite()) {
            return Err(Error::TrainingDivergence {
                step: self.updates,
                detail: format!("non-finite loss: critic {critic}, actor {actor:?}"),
            });
        }
        Ok(Td3Losses { critic, actor })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bounds() -> ActionBounds {
        ActionBounds::from_limits(&crate::inlet::ActuatorLimits::default())
    }

    fn tiny_agent(seed: u64) -> Td3Agent {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let config = Td3Config {
            hidden: vec![6, 5],
            batch: 4,
            ..Td3Config::default()
        };
        Td3Agent::new(3, bounds(), config, &mut rng)
    }

    fn tiny_batch(seed: u64, n: usize) -> Vec<Transition> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| Transition {
                s: (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                a: std::array::from_fn(|_| rng.gen_range(0.0..0.5)),
                r: rng.gen_range(-1.0..1.0),
                s_next: (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                terminated: i % 5 == 4,
            })
            .collect()
    }

    #[test]
    fn target_formula_examples() {
        let y = td3_target(1.0, 0.99, 2.0, 3.0, false);
        assert!((y - 2.98).abs() < 1e-15);
        // terminal transitions drop the bootstrap entirely
        assert_eq!(td3_target(1.0, 0.99, 2.0, 3.0, true), 1.0);
        assert_eq!(td3_target(-0.5, 0.5, -4.0, 7.0, false), -0.5 + 0.5 * -4.0);
    }

    #[test]
    fn smoothed_action_stays_in_bounds_and_is_noiseless_at_zero_sigma() {
        let mut agent = tiny_agent(1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = vec![0.3, -0.8, 0.1];
        for _ in 0..200 {
            let a = agent.smoothed_target_action(&s, &mut rng);
            assert!(agent.bounds.contains(&a), "{a:?}");
        }
        agent.config.sigma_target = 0.0;
        let a = agent.smoothed_target_action(&s, &mut rng);
        let clean = agent.map_to_bounds(&agent.actor_target.forward_vec(&s));
        assert_eq!(a, agent.bounds.clamp(clean));
    }

    #[test]
    fn exploration_action_in_bounds_deterministic_at_zero_sigma() {
        let agent = tiny_agent(3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = vec![0.1, 0.2, -0.4];
        for _ in 0..100 {
            assert!(agent.bounds.contains(&agent.act(&s, 0.3, &mut rng)));
        }
        let a = agent.act(&s, 0.0, &mut rng);
        assert_eq!(a, agent.policy(&s));
    }

    #[test]
    fn critic_gradient_matches_finite_differences() {
        let agent = tiny_agent(5);
        let batch = tiny_batch(6, 4);
        // Freeze targets so the loss is a pure function of critic parameters.
        let y = agent.batch_targets(&batch, &mut ChaCha8Rng::seed_from_u64(7));
        let actions: Vec<[f64; 4]> = batch.iter().map(|t| t.a).collect();
        let x = agent.critic_input(&batch, &actions, false);

        let loss_of = |net: &Mlp| -> f64 {
            let out = net.forward(&x);
            (0..y.len())
                .map(|b| (out[(0, b)] - y[b]).powi(2))
                .sum::<f64>()
                / y.len() as f64
        };
        let cache = agent.q1.forward_cached(&x);
        let out = cache.output();
        let d_out = DMatrix::from_fn(1, y.len(), |_, b| 2.0 * (out[(0, b)] - y[b]) / y.len() as f64);
        let analytic = agent.q1.backward(&cache, &d_out).flatten();

        let base = agent.q1.flatten_params();
        let h = 1e-6;
        let mut probe = agent.q1.clone();
        for idx in (0..base.len()).step_by(11) {
            let mut p = base.clone();
            p[idx] += h;
            probe.load_params(&p);
            let plus = loss_of(&probe);
            p[idx] -= 2.0 * h;
            probe.load_params(&p);
            let minus = loss_of(&probe);
            let fd = (plus - minus) / (2.0 * h);
            let denom = fd.abs().max(analytic[idx].abs()).max(1e-8);
            assert!(
                (fd - analytic[idx]).abs() / denom < 1e-4,
                "critic param {idx}: fd {fd} vs {}",
                analytic[idx]
            );
        }
    }

    #[test]
    fn actor_gradient_matches_finite_differences() {
        let agent = tiny_agent(8);
        let batch = tiny_batch(9, 4);
        let n = batch.len() as f64;
        let c = agent.bounds.center();
        let hs = agent.bounds.half_span();

        let loss_of = |actor: &Mlp| -> f64 {
            let mut total = 0.0;
            for t in &batch {
                let y = actor.forward_vec(&t.s);
                let mut x: Vec<f64> = t.s.clone();
                for i in 0..4 {
                    x.push(c[i] + hs[i] * y[i]);
                }
                total += agent.q1.forward_vec(&x)[0];
            }
            -total / n
        };

        // Analytic gradient via the same path actor_step takes.
        let s = DMatrix::from_fn(3, batch.len(), |i, b| batch[b].s[i]);
        let actor_cache = agent.actor.forward_cached(&s);
        let squashed = actor_cache.output().clone();
        let x = DMatrix::from_fn(3 + 4, batch.len(), |i, b| {
            if i < 3 {
                batch[b].s[i]
            } else {
                c[i - 3] + hs[i - 3] * squashed[(i - 3, b)]
            }
        });
        let q_cache = agent.q1.forward_cached(&x);
        let d_q_out = DMatrix::from_element(1, batch.len(), -1.0 / n);
        let q_grads = agent.q1.backward(&q_cache, &d_q_out);
        let d_squashed = DMatrix::from_fn(4, batch.len(), |i, b| q_grads.d_input[(3 + i, b)] * hs[i]);
        let analytic = agent.actor.backward(&actor_cache, &d_squashed).flatten();

        let base = agent.actor.flatten_params();
        let h = 1e-6;
        let mut probe = agent.actor.clone();
        for idx in (0..base.len()).step_by(7) {
            let mut p = base.clone();
            p[idx] += h;
            probe.load_params(&p);
            let plus = loss_of(&probe);
            p[idx] -= 2.0 * h;
            probe.load_params(&p);
            let minus = loss_of(&probe);
            let fd = (plus - minus) / (2.0 * h);
            let denom = fd.abs().max(analytic[idx].abs()).max(1e-8);
            assert!(
                (fd - analytic[idx]).abs() / denom < 1e-4,
                "actor param {idx}: fd {fd} vs {}",
                analytic[idx]
            );
        }
    }

    #[test]
    fn delayed_policy_and_target_updates() {
        let mut agent = tiny_agent(10);
        let batch = tiny_batch(11, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(12);

        let actor_before = agent.actor.flatten_params();
        let target_before = agent.q1_target.flatten_params();
        let l1 = agent.update(&batch, &mut rng).unwrap();
        assert!(l1.actor.is_none());
        assert_eq!(agent.actor.flatten_params(), actor_before);
        assert_eq!(agent.q1_target.flatten_params(), target_before);

        let l2 = agent.update(&batch, &mut rng).unwrap();
        assert!(l2.actor.is_some());
        assert_ne!(agent.actor.flatten_params(), actor_before);
        assert_ne!(agent.q1_target.flatten_params(), target_before);
    }

    #[test]
    fn updates_reduce_critic_loss_on_fixed_batch() {
        let mut agent = tiny_agent(13);
        let batch = tiny_batch(14, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let first = agent.update(&batch, &mut rng).unwrap().critic;
        let mut last = first;
        for _ in 0..200 {
            last = agent.update(&batch, &mut rng).unwrap().critic;
        }
        assert!(last < first, "critic loss {first} -> {last}");
    }
}

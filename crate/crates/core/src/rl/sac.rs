//! Soft actor-critic with a squashed-Gaussian policy and automatic
//! temperature tuning.
//!
//! The actor head emits a mean and a raw log-std per action dimension; the
//! log-std is squashed into a fixed range so gradients stay smooth. Sampled
//! pre-squash values go through tanh and an affine map onto the actuator
//! bounds, with the matching change-of-variables correction in the log
//! probability.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::mlp::{Activation, Adam, Mlp, MlpGradients, MlpSpec};
use super::{ActionBounds, Transition};
use crate::error::{Error, Result};

const LOG_STD_LO: f64 = -5.0;
const LOG_STD_HI: f64 = 2.0;
const LN_2PI: f64 = 1.8378770664093453;

#[derive(Debug, Clone, PartialEq)]
pub struct SacConfig {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub gamma: f64,
    pub tau: f64,
    pub batch: usize,
    pub init_alpha: f64,
    /// Entropy floor; defaults to -dim(action) = -4.
    pub target_entropy: f64,
    pub adapt_alpha: bool,
}

impl Default for SacConfig {
    fn default() -> Self {
        SacConfig {
            hidden: vec![256, 256],
            lr: 3e-4,
            gamma: 0.99,
            tau: 0.005,
            batch: 256,
            init_alpha: 0.1,
            target_entropy: -4.0,
            adapt_alpha: true,
        }
    }
}

/// Entropy-regularized backup; terminal transitions drop the bootstrap.
pub fn sac_target(
    r: f64,
    gamma: f64,
    min_q: f64,
    alpha: f64,
    log_pi: f64,
    terminated: bool,
) -> f64 {
    if terminated {
        r
    } else {
        r + gamma * (min_q - alpha * log_pi)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// log(1 - tanh(u)^2), evaluated without cancellation.
fn log_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

fn squash_log_std(raw: f64) -> f64 {
    LOG_STD_LO + 0.5 * (LOG_STD_HI - LOG_STD_LO) * (raw.tanh() + 1.0)
}

fn squash_log_std_derivative(raw: f64) -> f64 {
    let t = raw.tanh();
    0.5 * (LOG_STD_HI - LOG_STD_LO) * (1.0 - t * t)
}

/// Log density of the bounded action `a = center + half * tanh(u)` with
/// `u ~ N(mean, exp(log_std)^2)`, for one dimension.
pub fn tanh_gaussian_log_prob(mean: f64, log_std: f64, half: f64, u: f64) -> f64 {
    let sigma = log_std.exp();
    let z = (u - mean) / sigma;
    -0.5 * z * z - 0.5 * LN_2PI - log_std - log_one_minus_tanh_sq(u) - half.ln()
}

#[derive(Debug, Clone, Copy)]
pub struct SacLosses {
    pub critic: f64,
    pub actor: f64,
    pub alpha: f64,
}

pub struct SacAgent {
    pub config: SacConfig,
    pub bounds: ActionBounds,
    pub obs_dim: usize,
    pub actor: Mlp,
    pub q1: Mlp,
    pub q2: Mlp,
    pub q1_target: Mlp,
    pub q2_target: Mlp,
    pub log_alpha: f64,
    pub opt_actor: Adam,
    pub opt_q1: Adam,
    pub opt_q2: Adam,
    alpha_m: f64,
    alpha_v: f64,
    alpha_t: u64,
    pub updates: u64,
}

/// Per-batch intermediates of one reparameterized policy sample.
struct PolicySample {
    /// tanh(u), 4 x B.
    t: DMatrix<f64>,
    /// Bounded actions, 4 x B.
    a: DMatrix<f64>,
    /// Per-sample total log probability.
    log_pi: Vec<f64>,
    /// Squashed log-std, 4 x B.
    log_std: DMatrix<f64>,
    /// Standard-normal draws used, 4 x B.
    eps: DMatrix<f64>,
}

impl SacAgent {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        bounds: ActionBounds,
        config: SacConfig,
        rng: &mut R,
    ) -> Self {
        let mut actor_sizes = vec![obs_dim];
        actor_sizes.extend(&config.hidden);
        actor_sizes.push(8);
        let actor_spec = MlpSpec {
            sizes: actor_sizes,
            hidden: Activation::Tanh,
            output: Activation::Identity,
        };
        let mut critic_sizes = vec![obs_dim + 4];
        critic_sizes.extend(&config.hidden);
        critic_sizes.push(1);
        let critic_spec = MlpSpec::new(critic_sizes);

        let actor = Mlp::init(actor_spec, rng);
        let q1 = Mlp::init(critic_spec.clone(), rng);
        let q2 = Mlp::init(critic_spec, rng);
        let (q1_target, q2_target) = (q1.clone(), q2.clone());
        let (pa, p1, p2) = (actor.param_count(), q1.param_count(), q2.param_count());
        SacAgent {
            log_alpha: config.init_alpha.ln(),
            opt_actor: Adam::new(config.lr, pa),
            opt_q1: Adam::new(config.lr, p1),
            opt_q2: Adam::new(config.lr, p2),
            config,
            bounds,
            obs_dim,
            actor,
            q1,
            q2,
            q1_target,
            q2_target,
            alpha_m: 0.0,
            alpha_v: 0.0,
            alpha_t: 0,
            updates: 0,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    fn sample_policy(&self, s: &DMatrix<f64>, eps: DMatrix<f64>) -> (super::mlp::ForwardCache, PolicySample) {
        let cache = self.actor.forward_cached(s);
        let raw = cache.output();
        let n = s.ncols();
        let half = self.bounds.half_span();
        let center = self.bounds.center();

        let mut t = DMatrix::zeros(4, n);
        let mut a = DMatrix::zeros(4, n);
        let mut log_std = DMatrix::zeros(4, n);
        let mut log_pi = vec![0.0; n];
        for b in 0..n {
            for i in 0..4 {
                let mean = raw[(i, b)];
                let ls = squash_log_std(raw[(4 + i, b)]);
                let ui = mean + ls.exp() * eps[(i, b)];
                let ti = ui.tanh();
                t[(i, b)] = ti;
                a[(i, b)] = center[i] + half[i] * ti;
                log_std[(i, b)] = ls;
                log_pi[b] += tanh_gaussian_log_prob(mean, ls, half[i], ui);
            }
        }
        (cache, PolicySample { t, a, log_pi, log_std, eps })
    }

    fn draw_eps<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
        DMatrix::from_fn(4, n, |_, _| StandardNormal.sample(rng))
    }

    /// One stochastic action plus its log probability (exploration path).
    pub fn act<R: Rng + ?Sized>(&self, s: &[f64], rng: &mut R) -> ([f64; 4], f64) {
        let batch = DMatrix::from_column_slice(self.obs_dim, 1, s);
        let eps = Self::draw_eps(1, rng);
        let (_, sample) = self.sample_policy(&batch, eps);
        (std::array::from_fn(|i| sample.a[(i, 0)]), sample.log_pi[0])
    }

    /// Deterministic action: the squashed mean (inference path).
    pub fn policy_mean(&self, s: &[f64]) -> [f64; 4] {
        let raw = self.actor.forward_vec(s);
        let half = self.bounds.half_span();
        let center = self.bounds.center();
        std::array::from_fn(|i| center[i] + half[i] * raw[i].tanh())
    }

    fn critic_input(&self, s_cols: &DMatrix<f64>, a: &DMatrix<f64>) -> DMatrix<f64> {
        let n = s_cols.ncols();
        DMatrix::from_fn(self.obs_dim + 4, n, |i, b| {
            if i < self.obs_dim {
                s_cols[(i, b)]
            } else {
                a[(i - self.obs_dim, b)]
            }
        })
    }

    fn obs_matrix(&self, batch: &[Transition], next: bool) -> DMatrix<f64> {
        DMatrix::from_fn(self.obs_dim, batch.len(), |i, b| {
            if next {
                batch[b].s_next[i]
            } else {
                batch[b].s[i]
            }
        })
    }

    /// Regression targets for a batch; exposed so tests can freeze them.
    pub fn batch_targets<R: Rng + ?Sized>(&self, batch: &[Transition], rng: &mut R) -> Vec<f64> {
        let s_next = self.obs_matrix(batch, true);
        let eps = Self::draw_eps(batch.len(), rng);
        let (_, sample) = self.sample_policy(&s_next, eps);
        let x = self.critic_input(&s_next, &sample.a);
        let q1 = self.q1_target.forward(&x);
        let q2 = self.q2_target.forward(&x);
        let alpha = self.alpha();
        batch
            .iter()
            .enumerate()
            .map(|(b, t)| {
                sac_target(
                    t.r,
                    self.config.gamma,
                    q1[(0, b)].min(q2[(0, b)]),
                    alpha,
                    sample.log_pi[b],
                    t.terminated,
                )
            })
            .collect()
    }

    fn critic_step(&mut self, x: &DMatrix<f64>, y: &[f64], which: usize) -> f64 {
        let net = if which == 0 { &self.q1 } else { &self.q2 };
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
            self.opt_q1.step(&mut self.q1, &grads);
        } else {
            self.opt_q2.step(&mut self.q2, &grads);
        }
        loss
    }

    /// Actor loss mean(alpha*log_pi - min_q) and its parameter gradients for
    /// a fixed noise draw; also returns the per-sample log probabilities.
    fn actor_loss_grads(
        &self,
        s: &DMatrix<f64>,
        eps: DMatrix<f64>,
    ) -> (f64, MlpGradients, Vec<f64>) {
        let n = s.ncols();
        let nf = n as f64;
        let alpha = self.alpha();
        let half = self.bounds.half_span();
        let (actor_cache, sample) = self.sample_policy(s, eps);

        let x = self.critic_input(s, &sample.a);
        let c1 = self.q1.forward_cached(&x);
        let c2 = self.q2.forward_cached(&x);
        let (q1, q2) = (c1.output().clone(), c2.output().clone());

        let mut loss = 0.0;
        // dL/d(min q) = -1/B flows only through the critic achieving the min.
        let mut d1 = DMatrix::zeros(1, n);
        let mut d2 = DMatrix::zeros(1, n);
        for b in 0..n {
            let min_q = q1[(0, b)].min(q2[(0, b)]);
            loss += (alpha * sample.log_pi[b] - min_q) / nf;
            if q1[(0, b)] <= q2[(0, b)] {
                d1[(0, b)] = -1.0 / nf;
            } else {
                d2[(0, b)] = -1.0 / nf;
            }
        }
        let g1 = self.q1.backward(&c1, &d1);
        let g2 = self.q2.backward(&c2, &d2);

        // Chain into the actor's raw outputs (mean rows 0..4, raw log-std
        // rows 4..8), holding eps fixed.
        let raw = actor_cache.output();
        let mut d_raw = DMatrix::zeros(8, n);
        for b in 0..n {
            for i in 0..4 {
                // dL/da_i, combined from whichever critic was active.
                let g_a =
                    g1.d_input[(self.obs_dim + i, b)] + g2.d_input[(self.obs_dim + i, b)];
                let t = sample.t[(i, b)];
                let sig_eps = sample.log_std[(i, b)].exp() * sample.eps[(i, b)];
                let da_du = half[i] * (1.0 - t * t);
                // d log_pi / du = 2 tanh(u); the eps and log_std terms are
                // independent of u for a fixed draw.
                let dlogpi_du = 2.0 * t;
                let d_mean = alpha / nf * dlogpi_du + g_a * da_du;
                let dlogpi_dls = -1.0 + dlogpi_du * sig_eps;
                let d_ls = alpha / nf * dlogpi_dls + g_a * da_du * sig_eps;
                d_raw[(i, b)] = d_mean;
                d_raw[(4 + i, b)] = d_ls * squash_log_std_derivative(raw[(4 + i, b)]);
            }
        }
        let grads = self.actor.backward(&actor_cache, &d_raw);
        (loss, grads, sample.log_pi)
    }

    fn alpha_step(&mut self, log_pis: &[f64]) -> f64 {
        let mean_excess = log_pis.iter().sum::<f64>() / log_pis.len() as f64
            + self.config.target_entropy;
        let alpha = self.alpha();
        let loss = -alpha * mean_excess;
        if !self.config.adapt_alpha {
            return loss;
        }
        let grad = -alpha * mean_excess;
        self.alpha_t += 1;
        self.alpha_m = 0.9 * self.alpha_m + 0.1 * grad;
        self.alpha_v = 0.999 * self.alpha_v + 0.001 * grad * grad;
        let m_hat = self.alpha_m / (1.0 - 0.9f64.powi(self.alpha_t as i32));
        let v_hat = self.alpha_v / (1.0 - 0.999f64.powi(self.alpha_t as i32));
        self.log_alpha -= self.config.lr * m_hat / (v_hat.sqrt() + 1e-8);
        loss
    }

    pub fn update<R: Rng + ?Sized>(
        &mut self,
        batch: &[Transition],
        rng: &mut R,
    ) -> Result<SacLosses> {
        for t in batch {
            t.validate(self.obs_dim)?;
        }
        let y = self.batch_targets(batch, rng);
        let s = self.obs_matrix(batch, false);
        let a = DMatrix::from_fn(4, batch.len(), |i, b| batch[b].a[i]);
        let x = self.critic_input(&s, &a);
        let critic = 0.5 * (self.critic_step(&x, &y, 0) + self.critic_step(&x, &y, 1));

        let eps = Self::draw_eps(batch.len(), rng);
        let (actor_loss, actor_grads, log_pis) = self.actor_loss_grads(&s, eps);
        self.opt_actor.step(&mut self.actor, &actor_grads);
        let alpha_loss = self.alpha_step(&log_pis);

        self.q1_target.soft_update_from(&self.q1, self.config.tau);
        self.q2_target.soft_update_from(&self.q2, self.config.tau);
        self.updates += 1;

        if !(critic.is_finite() && actor_loss.is_finite() && alpha_loss.is_finite()) {
            return Err(Error::TrainingDivergence {
                step: self.updates,
                detail: format!(
                    "non-finite loss: critic {critic}, actor {actor_loss}, alpha {alpha_loss}"
                ),
            });
        }
        Ok(SacLosses {
            critic,
            actor: actor_loss,
            alpha: alpha_loss,
        })
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

    fn tiny_agent(seed: u64) -> SacAgent {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let config = SacConfig {
            hidden: vec![6, 5],
            batch: 4,
            ..SacConfig::default()
        };
        SacAgent::new(3, bounds(), config, &mut rng)
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
        let y = sac_target(0.0, 1.0, 1.0, 0.2, -1.0, false);
        assert!((y - 1.2).abs() < 1e-15);
        assert_eq!(sac_target(0.7, 0.99, 5.0, 0.3, -2.0, true), 0.7);
        let y = sac_target(0.5, 0.9, 2.0, 0.1, 0.4, false);
        assert!((y - (0.5 + 0.9 * (2.0 - 0.1 * 0.4))).abs() < 1e-15);
    }

    #[test]
    fn squashed_density_integrates_to_one() {
        // 1-D slice: numerically integrate the bounded-action density.
        let (mean, log_std) = (0.2, -0.7);
        let (center, half) = (0.5, 0.5);
        let n = 400_001;
        let mut integral = 0.0;
        let margin = 1e-7;
        let lo = center - half + margin;
        let hi = center + half - margin;
        let da = (hi - lo) / (n - 1) as f64;
        for k in 0..n {
            let a: f64 = lo + k as f64 * da;
            let u = ((a - center) / half).atanh();
            let p = tanh_gaussian_log_prob(mean, log_std, half, u).exp();
            let w = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
            integral += w * p * da;
        }
        assert!((integral - 1.0).abs() < 1e-3, "integral = {integral}");
    }

    #[test]
    fn sampled_log_prob_matches_direct_evaluation() {
        let agent = tiny_agent(1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = vec![0.3, -0.2, 0.9];
        let (a, log_pi) = agent.act(&s, &mut rng);
        assert!(agent.bounds.contains(&a));

        // Recompute from the action itself via atanh.
        let raw = agent.actor.forward_vec(&s);
        let half = agent.bounds.half_span();
        let center = agent.bounds.center();
        let mut direct = 0.0;
        for i in 0..4 {
            let u = ((a[i] - center[i]) / half[i]).atanh();
            direct += tanh_gaussian_log_prob(raw[i], squash_log_std(raw[4 + i]), half[i], u);
        }
        assert!((log_pi - direct).abs() < 1e-9, "{log_pi} vs {direct}");
    }

    #[test]
    fn actor_gradient_matches_finite_differences() {
        let agent = tiny_agent(3);
        let batch = tiny_batch(4, 4);
        let s = agent.obs_matrix(&batch, false);
        let eps = SacAgent::draw_eps(batch.len(), &mut ChaCha8Rng::seed_from_u64(5));

        let (_, grads, _) = agent.actor_loss_grads(&s, eps.clone());
        let analytic = grads.flatten();

        let loss_of = |actor: &Mlp| -> f64 {
            let mut probe_agent = agent_clone(&agent);
            probe_agent.actor = actor.clone();
            let (loss, _, _) = probe_agent.actor_loss_grads(&s, eps.clone());
            loss
        };

        let base = agent.actor.flatten_params();
        let h = 1e-6;
        let mut probe = agent.actor.clone();
        for idx in (0..base.len()).step_by(9) {
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

    // Manual partial clone for tests (optimizer state is irrelevant there).
    fn agent_clone(a: &SacAgent) -> SacAgent {
        SacAgent {
            config: a.config.clone(),
            bounds: a.bounds,
            obs_dim: a.obs_dim,
            actor: a.actor.clone(),
            q1: a.q1.clone(),
            q2: a.q2.clone(),
            q1_target: a.q1_target.clone(),
            q2_target: a.q2_target.clone(),
            log_alpha: a.log_alpha,
            opt_actor: a.opt_actor.clone(),
            opt_q1: a.opt_q1.clone(),
            opt_q2: a.opt_q2.clone(),
            alpha_m: a.alpha_m,
            alpha_v: a.alpha_v,
            alpha_t: a.alpha_t,
            updates: a.updates,
        }
    }

    #[test]
    fn temperature_moves_against_entropy_excess() {
        // log_pi above the target (entropy too low) must raise alpha, and
        // vice versa.
        let mut agent = tiny_agent(6);
        let before = agent.log_alpha;
        agent.alpha_step(&[5.0, 6.0, 4.5]); // mean log_pi above -H_bar: entropy deficit
        assert!(agent.log_alpha > before, "alpha should increase");

        let mut agent = tiny_agent(6);
        let before = agent.log_alpha;
        agent.alpha_step(&[-9.0, -8.0, -10.0]); // plenty of entropy
        assert!(agent.log_alpha < before, "alpha should decrease");

        let mut agent = tiny_agent(6);
        agent.config.adapt_alpha = false;
        let before = agent.log_alpha;
        agent.alpha_step(&[5.0, 6.0, 4.5]);
        assert_eq!(agent.log_alpha, before);
    }

    #[test]
    fn updates_reduce_critic_loss_on_fixed_batch() {
        let mut agent = tiny_agent(7);
        let batch = tiny_batch(8, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let first = agent.update(&batch, &mut rng).unwrap().critic;
        let mut last = first;
        for _ in 0..200 {
            last = agent.update(&batch, &mut rng).unwrap().critic;
        }
        assert!(last < first, "critic loss {first} -> {last}");
    }

    #[test]
    fn deterministic_mean_inside_bounds() {
        let agent = tiny_agent(10);
        let a = agent.policy_mean(&[0.0, 0.5, -0.5]);
        assert!(agent.bounds.contains(&a));
    }
}

//! Training loop: rollout workers feeding a shared replay buffer, one
//! learner, periodic evaluation and checkpoints.
//!
//! Workers are stepped round-robin from the driver thread so that a single
//! seeded rng governs the whole schedule; with `n_envs = 1` and a fixed seed
//! every run is bit-identical. A worker whose environment errors out is
//! logged and restarted from its factory, losing only the current episode.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::buffer::ReplayBuffer;
use super::checkpoint::{Algo, Checkpoint};
use super::sac::{SacAgent, SacConfig};
use super::td3::{Td3Agent, Td3Config};
use super::{ActionBounds, Environment, Transition};
use crate::error::{Error, Result};

pub const TRAIN_LOG_HEADER: &str = "env_step,episode_return,critic_loss,actor_loss,alpha\n";

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub algo: Algo,
    pub td3: Td3Config,
    pub sac: SacConfig,
    pub total_steps: usize,
    /// Uniform-random action steps before learning starts.
    pub warmup_steps: usize,
    pub updates_per_step: usize,
    pub n_envs: usize,
    pub buffer_capacity: usize,
    pub seed: u64,
    pub eval_every: Option<usize>,
    pub eval_episodes: usize,
    /// Early-stop threshold on the mean deterministic evaluation return.
    pub target_return: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            algo: Algo::Td3,
            td3: Td3Config::default(),
            sac: SacConfig::default(),
            total_steps: 50_000,
            warmup_steps: 1_000,
            updates_per_step: 1,
            n_envs: 1,
            buffer_capacity: 1_000_000,
            seed: 0,
            eval_every: Some(1_000),
            eval_episodes: 1,
            target_return: None,
        }
    }
}

/// Either agent behind one update/act surface.
pub enum AgentKind {
    Td3(Td3Agent),
    Sac(SacAgent),
}

impl AgentKind {
    pub fn new<R: Rng + ?Sized>(
        config: &TrainConfig,
        obs_dim: usize,
        bounds: ActionBounds,
        rng: &mut R,
    ) -> Self {
        match config.algo {
            Algo::Td3 => AgentKind::Td3(Td3Agent::new(obs_dim, bounds, config.td3.clone(), rng)),
            Algo::Sac => AgentKind::Sac(SacAgent::new(obs_dim, bounds, config.sac.clone(), rng)),
        }
    }

    pub fn algo(&self) -> Algo {
        match self {
            AgentKind::Td3(_) => Algo::Td3,
            AgentKind::Sac(_) => Algo::Sac,
        }
    }

    pub fn obs_dim(&self) -> usize {
        match self {
            AgentKind::Td3(a) => a.obs_dim,
            AgentKind::Sac(a) => a.obs_dim,
        }
    }

    /// Exploration action.
    pub fn act<R: Rng + ?Sized>(&self, s: &[f64], rng: &mut R) -> [f64; 4] {
        match self {
            AgentKind::Td3(a) => a.act(s, a.config.sigma, rng),
            AgentKind::Sac(a) => a.act(s, rng).0,
        }
    }

    /// Deterministic action: TD3 with zero noise, SAC's squashed mean.
    pub fn act_deterministic(&self, s: &[f64]) -> [f64; 4] {
        match self {
            AgentKind::Td3(a) => a.policy(s),
            AgentKind::Sac(a) => a.policy_mean(s),
        }
    }

    /// One gradient step; returns (critic loss, actor loss, alpha).
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        batch: &[Transition],
        rng: &mut R,
    ) -> Result<(f64, Option<f64>, f64)> {
        match self {
            AgentKind::Td3(a) => {
                let l = a.update(batch, rng)?;
                Ok((l.critic, l.actor, 0.0))
            }
            AgentKind::Sac(a) => {
                let l = a.update(batch, rng)?;
                Ok((l.critic, Some(l.actor), a.alpha()))
            }
        }
    }

    pub fn batch_size(&self) -> usize {
        match self {
            AgentKind::Td3(a) => a.config.batch,
            AgentKind::Sac(a) => a.config.batch,
        }
    }

    pub fn checkpoint(
        &self,
        rng: &ChaCha8Rng,
        env_steps: u64,
        buffer: &ReplayBuffer,
    ) -> Checkpoint {
        match self {
            AgentKind::Td3(a) => {
                Checkpoint::from_td3(a, rng, env_steps, buffer.len() as u64, buffer.inserted())
            }
            AgentKind::Sac(a) => {
                Checkpoint::from_sac(a, rng, env_steps, buffer.len() as u64, buffer.inserted())
            }
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint, config: &TrainConfig) -> Result<Self> {
        match ckpt.algo {
            Algo::Td3 => Ok(AgentKind::Td3(ckpt.into_td3(config.td3.clone())?)),
            Algo::Sac => Ok(AgentKind::Sac(ckpt.into_sac(config.sac.clone())?)),
        }
    }
}

pub struct TrainResult {
    pub log: String,
    pub env_steps: u64,
    pub episodes: u64,
    pub evals: Vec<(u64, f64)>,
    pub checkpoint: Checkpoint,
    pub stopped_early: bool,
}

fn random_action<R: Rng + ?Sized>(bounds: &ActionBounds, rng: &mut R) -> [f64; 4] {
    std::array::from_fn(|i| {
        if bounds.hi[i] > bounds.lo[i] {
            rng.gen_range(bounds.lo[i]..bounds.hi[i])
        } else {
            bounds.lo[i]
        }
    })
}

/// Mean return of deterministic episodes.
pub fn evaluate(agent: &AgentKind, env: &mut dyn Environment, episodes: usize) -> Result<f64> {
    let mut total = 0.0;
    for _ in 0..episodes.max(1) {
        let mut obs = env.reset()?;
        let mut ep_ret = 0.0;
        loop {
            let step = env.step(agent.act_deterministic(&obs))?;
            ep_ret += step.reward;
            obs = step.observation;
            if step.terminated || step.truncated {
                break;
            }
        }
        total += ep_ret;
    }
    Ok(total / episodes.max(1) as f64)
}

/// One deterministic (or stochastic) episode, returning the total reward and
/// a CSV trace of actions and rewards.
pub fn run_episode<R: Rng + ?Sized>(
    agent: &AgentKind,
    env: &mut dyn Environment,
    deterministic: bool,
    rng: &mut R,
) -> Result<(f64, String)> {
    let mut csv = String::from("step,lambda_b,lambda_s1,lambda_s2,beta,reward\n");
    let mut obs = env.reset()?;
    let mut total = 0.0;
    let mut k = 0usize;
    loop {
        let a = if deterministic {
            agent.act_deterministic(&obs)
        } else {
            agent.act(&obs, rng)
        };
        let step = env.step(a)?;
        total += step.reward;
        csv.push_str(&format!(
            "{k},{},{},{},{},{}\n",
            a[0], a[1], a[2], a[3], step.reward
        ));
        obs = step.observation;
        k += 1;
        if step.terminated || step.truncated {
            break;
        }
    }
    Ok((total, csv))
}

struct Worker {
    env: Box<dyn Environment>,
    obs: Vec<f64>,
    episode_return: f64,
    alive: bool,
}

pub fn train<F>(config: &TrainConfig, make_env: F) -> Result<TrainResult>
where
    F: Fn(usize) -> Result<Box<dyn Environment>>,
{
    if config.n_envs == 0 || config.total_steps == 0 {
        return Err(Error::Config("training needs n_envs >= 1 and total_steps >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut workers = Vec::with_capacity(config.n_envs);
    for i in 0..config.n_envs {
        let mut env = make_env(i)?;
        let obs = env.reset()?;
        workers.push(Worker {
            env,
            obs,
            episode_return: 0.0,
            alive: true,
        });
    }
    let obs_dim = workers[0].env.obs_dim();
    let bounds = workers[0].env.bounds();
    let buffer = Arc::new(ReplayBuffer::new(config.buffer_capacity, obs_dim));
    let mut agent = AgentKind::new(config, obs_dim, bounds, &mut rng);

    let mut log = String::from(TRAIN_LOG_HEADER);
    let mut evals = Vec::new();
    let mut env_steps = 0u64;
    let mut episodes = 0u64;
    let mut last_losses = (f64::NAN, f64::NAN, 0.0);
    let mut stopped_early = false;

    'driver: while (env_steps as usize) < config.total_steps {
        for i in 0..config.n_envs {
            if (env_steps as usize) >= config.total_steps {
                break;
            }
            if !workers[i].alive {
                // Restart a failed worker from its factory.
                match make_env(i).and_then(|mut env| env.reset().map(|obs| (env, obs))) {
                    Ok((env, obs)) => {
                        workers[i] = Worker {
                            env,
                            obs,
                            episode_return: 0.0,
                            alive: true,
                        };
                    }
                    Err(e) => {
                        log.push_str(&format!("# worker {i} restart failed: {e}\n"));
                        continue;
                    }
                }
            }
            let action = if (env_steps as usize) < config.warmup_steps {
                random_action(&bounds, &mut rng)
            } else {
                agent.act(&workers[i].obs, &mut rng)
            };
            let outcome = workers[i].env.step(action);
            env_steps += 1;
            match outcome {
                Ok(step) => {
                    buffer.push(Transition {
                        s: workers[i].obs.clone(),
                        a: action,
                        r: step.reward,
                        s_next: step.observation.clone(),
                        terminated: step.terminated,
                    })?;
                    workers[i].episode_return += step.reward;
                    workers[i].obs = step.observation;
                    if step.terminated || step.truncated {
                        episodes += 1;
                        log.push_str(&format!(
                            "{env_steps},{},{},{},{}\n",
                            workers[i].episode_return,
                            last_losses.0,
                            last_losses.1,
                            last_losses.2
                        ));
                        workers[i].episode_return = 0.0;
                        workers[i].obs = workers[i].env.reset()?;
                    }
                }
                Err(e) => {
                    log.push_str(&format!("# worker {i} failed at step {env_steps}: {e}; restarting\n"));
                    workers[i].alive = false;
                }
            }

            if (env_steps as usize) >= config.warmup_steps {
                for _ in 0..config.updates_per_step {
                    if let Some(batch) = buffer.sample(agent.batch_size(), &mut rng) {
                        let (c, a_loss, alpha) = agent.update(&batch, &mut rng)?;
                        last_losses = (c, a_loss.unwrap_or(last_losses.1), alpha);
                    }
                }
            }

            if let Some(every) = config.eval_every {
                if env_steps % every as u64 == 0 {
                    let mut eval_env = make_env(config.n_envs)?;
                    let score = evaluate(&agent, eval_env.as_mut(), config.eval_episodes)?;
                    evals.push((env_steps, score));
                    log.push_str(&format!("# eval at {env_steps}: {score}\n"));
                    if config.target_return.map_or(false, |t| score >= t) {
                        stopped_early = true;
                        break 'driver;
                    }
                }
            }
        }
    }

    let checkpoint = agent.checkpoint(&rng, env_steps, &buffer);
    Ok(TrainResult {
        log,
        env_steps,
        episodes,
        evals,
        checkpoint,
        stopped_early,
    })
}

//! Versioned binary agent checkpoints.
//!
//! Layout (little-endian): magic, version, endianness sentinel, algorithm
//! tag, dimensions, counters, rng state, actuator bounds, temperature, buffer
//! metadata, then each network with its name, architecture, parameters and
//! optional optimizer moments. Everything needed for a bit-identical learner
//! resume is here; replay contents are not (only their metadata).

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::mlp::{Activation, Adam, Mlp, MlpSpec};
use super::sac::{SacAgent, SacConfig};
use super::td3::{Td3Agent, Td3Config};
use super::ActionBounds;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"INLETCKP";
const VERSION: u32 = 1;
const ENDIAN_SENTINEL: u32 = 0x0102_0304;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algo {
    Td3,
    Sac,
}

impl Algo {
    fn tag(self) -> u32 {
        match self {
            Algo::Td3 => 1,
            Algo::Sac => 2,
        }
    }

    fn from_tag(tag: u32) -> Result<Self> {
        match tag {
            1 => Ok(Algo::Td3),
            2 => Ok(Algo::Sac),
            other => Err(Error::Incompatible(format!(
                "unknown algorithm tag {other} in checkpoint"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Algo::Td3 => "td3",
            Algo::Sac => "sac",
        }
    }
}

#[derive(Debug, Clone)]
pub struct NetRecord {
    pub name: String,
    pub spec: MlpSpec,
    pub params: Vec<f64>,
    /// (step count, first moments, second moments), when the net is trained.
    pub adam: Option<(u64, Vec<f64>, Vec<f64>)>,
}

impl NetRecord {
    fn capture(name: &str, net: &Mlp, opt: Option<&Adam>) -> Self {
        NetRecord {
            name: name.into(),
            spec: net.spec.clone(),
            params: net.flatten_params(),
            adam: opt.map(|o| {
                let (t, m, v) = o.state();
                (t, m.to_vec(), v.to_vec())
            }),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub algo: Algo,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub bounds: ActionBounds,
    pub log_alpha: f64,
    pub updates: u64,
    pub env_steps: u64,
    pub rng_seed: [u8; 32],
    pub rng_word_pos: u128,
    pub buffer_len: u64,
    pub buffer_inserted: u64,
    pub nets: Vec<NetRecord>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Parse {
                line: self.pos,
                detail: format!("checkpoint truncated: wanted {n} bytes at offset {}", self.pos),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.take(16)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64_vec(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(8 * n)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

fn push_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn activation_tag(a: Activation) -> u32 {
    match a {
        Activation::Tanh => 0,
        Activation::Identity => 1,
    }
}

fn activation_from_tag(tag: u32) -> Result<Activation> {
    match tag {
        0 => Ok(Activation::Tanh),
        1 => Ok(Activation::Identity),
        other => Err(Error::Incompatible(format!(
            "unknown activation tag {other} in checkpoint"
        ))),
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&ENDIAN_SENTINEL.to_le_bytes());
        out.extend_from_slice(&self.algo.tag().to_le_bytes());
        out.extend_from_slice(&(self.obs_dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.act_dim as u32).to_le_bytes());
        out.extend_from_slice(&self.updates.to_le_bytes());
        out.extend_from_slice(&self.env_steps.to_le_bytes());
        out.extend_from_slice(&self.rng_seed);
        out.extend_from_slice(&self.rng_word_pos.to_le_bytes());
        push_f64s(&mut out, &self.bounds.lo);
        push_f64s(&mut out, &self.bounds.hi);
        out.extend_from_slice(&self.log_alpha.to_le_bytes());
        out.extend_from_slice(&self.buffer_len.to_le_bytes());
        out.extend_from_slice(&self.buffer_inserted.to_le_bytes());

        out.extend_from_slice(&(self.nets.len() as u32).to_le_bytes());
        for net in &self.nets {
            let name = net.name.as_bytes();
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name);
            out.extend_from_slice(&activation_tag(net.spec.hidden).to_le_bytes());
            out.extend_from_slice(&activation_tag(net.spec.output).to_le_bytes());
            out.extend_from_slice(&(net.spec.sizes.len() as u32).to_le_bytes());
            for s in &net.spec.sizes {
                out.extend_from_slice(&(*s as u32).to_le_bytes());
            }
            out.extend_from_slice(&(net.params.len() as u64).to_le_bytes());
            push_f64s(&mut out, &net.params);
            match &net.adam {
                Some((t, m, v)) => {
                    out.push(1);
                    out.extend_from_slice(&t.to_le_bytes());
                    push_f64s(&mut out, m);
                    push_f64s(&mut out, v);
                }
                None => out.push(0),
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Incompatible(
                "not an agent checkpoint (bad magic header)".into(),
            ));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Incompatible(format!(
                "checkpoint format version {version}, this build reads {VERSION}"
            )));
        }
        let sentinel = r.u32()?;
        if sentinel != ENDIAN_SENTINEL {
            return Err(Error::Incompatible(format!(
                "checkpoint endianness sentinel {sentinel:#x} does not match {ENDIAN_SENTINEL:#x}"
            )));
        }
        let algo = Algo::from_tag(r.u32()?)?;
        let obs_dim = r.u32()? as usize;
        let act_dim = r.u32()? as usize;
        let updates = r.u64()?;
        let env_steps = r.u64()?;
        let rng_seed: [u8; 32] = r.take(32)?.try_into().unwrap();
        let rng_word_pos = r.u128()?;
        let lo: [f64; 4] = r.f64_vec(4)?.try_into().unwrap();
        let hi: [f64; 4] = r.f64_vec(4)?.try_into().unwrap();
        let log_alpha = r.f64()?;
        let buffer_len = r.u64()?;
        let buffer_inserted = r.u64()?;

        let n_nets = r.u32()? as usize;
        let mut nets = Vec::with_capacity(n_nets);
        for _ in 0..n_nets {
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec()).map_err(|_| {
                Error::Parse {
                    line: r.pos,
                    detail: "network name is not valid UTF-8".into(),
                }
            })?;
            let hidden = activation_from_tag(r.u32()?)?;
            let output = activation_from_tag(r.u32()?)?;
            let n_sizes = r.u32()? as usize;
            let mut sizes = Vec::with_capacity(n_sizes);
            for _ in 0..n_sizes {
                sizes.push(r.u32()? as usize);
            }
            let n_params = r.u64()? as usize;
            let params = r.f64_vec(n_params)?;
            let has_adam = r.take(1)?[0];
            let adam = if has_adam == 1 {
                let t = r.u64()?;
                let m = r.f64_vec(n_params)?;
                let v = r.f64_vec(n_params)?;
                Some((t, m, v))
            } else {
                None
            };
            nets.push(NetRecord {
                name,
                spec: MlpSpec { sizes, hidden, output },
                params,
                adam,
            });
        }
        Ok(Checkpoint {
            algo,
            obs_dim,
            act_dim,
            bounds: ActionBounds { lo, hi },
            log_alpha,
            updates,
            env_steps,
            rng_seed,
            rng_word_pos,
            buffer_len,
            buffer_inserted,
            nets,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Rejects use against an environment with a different observation size.
    pub fn check_observation_dim(&self, env_obs_dim: usize) -> Result<()> {
        if self.obs_dim != env_obs_dim {
            return Err(Error::Incompatible(format!(
                "checkpoint policy expects {}-dimensional observations but the \
                 environment provides {env_obs_dim}",
                self.obs_dim
            )));
        }
        Ok(())
    }

    fn find(&self, name: &str) -> Result<&NetRecord> {
        self.nets
            .iter()
            .find(|n| n.name == name)
            .ok_or_else(|| Error::Incompatible(format!("checkpoint is missing network '{name}'")))
    }

    fn rebuild(&self, name: &str) -> Result<(Mlp, Option<Adam>)> {
        let rec = self.find(name)?;
        let mut seed_rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = Mlp::init(rec.spec.clone(), &mut seed_rng);
        if net.param_count() != rec.params.len() {
            return Err(Error::Incompatible(format!(
                "network '{name}': architecture and parameter count disagree"
            )));
        }
        net.load_params(&rec.params);
        let opt = match &rec.adam {
            Some((t, m, v)) => {
                let mut adam = Adam::new(3e-4, net.param_count());
                adam.restore(*t, m.clone(), v.clone());
                Some(adam)
            }
            None => None,
        };
        Ok((net, opt))
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.rng_seed);
        rng.set_word_pos(self.rng_word_pos);
        rng
    }

    pub fn from_td3(agent: &Td3Agent, rng: &ChaCha8Rng, env_steps: u64, buffer_len: u64, buffer_inserted: u64) -> Self {
        Checkpoint {
            algo: Algo::Td3,
            obs_dim: agent.obs_dim,
            act_dim: 4,
            bounds: agent.bounds,
            log_alpha: 0.0,
            updates: agent.updates,
            env_steps,
            rng_seed: rng.get_seed(),
            rng_word_pos: rng.get_word_pos(),
            buffer_len,
            buffer_inserted,
            nets: vec![
                NetRecord::capture("actor", &agent.actor, Some(&agent.opt_actor)),
                NetRecord::capture("actor_target", &agent.actor_target, None),
                NetRecord::capture("q1", &agent.q1, Some(&agent.opt_q1)),
                NetRecord::capture("q2", &agent.q2, Some(&agent.opt_q2)),
                NetRecord::capture("q1_target", &agent.q1_target, None),
                NetRecord::capture("q2_target", &agent.q2_target, None),
            ],
        }
    }

    pub fn from_sac(agent: &SacAgent, rng: &ChaCha8Rng, env_steps: u64, buffer_len: u64, buffer_inserted: u64) -> Self {
        Checkpoint {
            algo: Algo::Sac,
            obs_dim: agent.obs_dim,
            act_dim: 4,
            bounds: agent.bounds,
            log_alpha: agent.log_alpha,
            updates: agent.updates,
            env_steps,
            rng_seed: rng.get_seed(),
            rng_word_pos: rng.get_word_pos(),
            buffer_len,
            buffer_inserted,
            nets: vec![
                NetRecord::capture("actor", &agent.actor, Some(&agent.opt_actor)),
                NetRecord::capture("q1", &agent.q1, Some(&agent.opt_q1)),
                NetRecord::capture("q2", &agent.q2, Some(&agent.opt_q2)),
                NetRecord::capture("q1_target", &agent.q1_target, None),
                NetRecord::capture("q2_target", &agent.q2_target, None),
            ],
        }
    }

    pub fn into_td3(&self, config: Td3Config) -> Result<Td3Agent> {
        if self.algo != Algo::Td3 {
            return Err(Error::Incompatible(format!(
                "checkpoint holds a {} agent, expected td3",
                self.algo.name()
            )));
        }
        let mut init_rng = ChaCha8Rng::seed_from_u64(0);
        let mut agent = Td3Agent::new(self.obs_dim, self.bounds, config, &mut init_rng);
        let (actor, opt_actor) = self.rebuild("actor")?;
        let (actor_target, _) = self.rebuild("actor_target")?;
        let (q1, opt_q1) = self.rebuild("q1")?;
        let (q2, opt_q2) = self.rebuild("q2")?;
        let (q1_target, _) = self.rebuild("q1_target")?;
        let (q2_target, _) = self.rebuild("q2_target")?;
        if actor.spec != agent.actor.spec || q1.spec != agent.q1.spec {
            return Err(Error::Incompatible(
                "checkpoint network architecture does not match the requested config".into(),
            ));
        }
        agent.actor = actor;
        agent.actor_target = actor_target;
        agent.q1 = q1;
        agent.q2 = q2;
        agent.q1_target = q1_target;
        agent.q2_target = q2_target;
        if let Some(o) = opt_actor {
            agent.opt_actor = o;
        }
        if let Some(o) = opt_q1 {
            agent.opt_q1 = o;
        }
        if let Some(o) = opt_q2 {
            agent.opt_q2 = o;
        }
        agent.updates = self.updates;
        Ok(agent)
    }

    pub fn into_sac(&self, config: SacConfig) -> Result<SacAgent> {
        if self.algo != Algo::Sac {
            return Err(Error::Incompatible(format!(
                "checkpoint holds a {} agent, expected sac",
                self.algo.name()
            )));
        }
        let mut init_rng = ChaCha8Rng::seed_from_u64(0);
        let mut agent = SacAgent::new(self.obs_dim, self.bounds, config, &mut init_rng);
        let (actor, opt_actor) = self.rebuild("actor")?;
        let (q1, opt_q1) = self.rebuild("q1")?;
        let (q2, opt_q2) = self.rebuild("q2")?;
        let (q1_target, _) = self.rebuild("q1_target")?;
        let (q2_target, _) = self.rebuild("q2_target")?;
        if actor.spec != agent.actor.spec || q1.spec != agent.q1.spec {
            return Err(Error::Incompatible(
                "checkpoint network architecture does not match the requested config".into(),
            ));
        }
        agent.actor = actor;
        agent.q1 = q1;
        agent.q2 = q2;
        agent.q1_target = q1_target;
        agent.q2_target = q2_target;
        if let Some(o) = opt_actor {
            agent.opt_actor = o;
        }
        if let Some(o) = opt_q1 {
            agent.opt_q1 = o;
        }
        if let Some(o) = opt_q2 {
            agent.opt_q2 = o;
        }
        agent.log_alpha = self.log_alpha;
        agent.updates = self.updates;
        Ok(agent)
    }
}

//! MDP wrapper around the inlet case: one action per control interval,
//! normalized (optionally noisy) wall-pressure observations, and the
//! negative-definite reward penalizing pressure deviation, jet power, and
//! actuation rate.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::inlet::{
    build_inlet_case, exit_mass_flow, inlet_grid, sample_wall_pressures, ActuatorLimits,
    Freestream, InletCase, InletGeometry, JetCommand, ProbeSet, MM,
};
use crate::mesh::{ElemKey, ForestMesh};
use crate::solver::{Simulation, SolverOptions};

/// The action is the jet command (velocity factors + blowing angle).
pub type ActionVector = JetCommand;

/// Environment configuration; the baseline vector is the time-averaged
/// no-throttling sensor pressure profile the reward pulls toward.
#[derive(Debug, Clone)]
pub struct EnvConfig {
    /// Physical seconds advanced per action.
    pub control_interval: f64,
    pub episode_duration: f64,
    /// Throttling ratio of the controlled case, percent.
    pub tr: f64,
    /// Sensor noise intensity delta, percent.
    pub noise_pct: f64,
    pub w_p: f64,
    pub w_r: f64,
    /// Discount factor (consumed by agents, carried with the env config).
    pub gamma: f64,
    /// Reward substituted when the solver aborts mid-step.
    pub failure_penalty: f64,
    pub limits: ActuatorLimits,
    pub seed: u64,
    pub n_sensors: usize,
    pub solver: SolverOptions,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            control_interval: 20e-6,
            episode_duration: 2e-3,
            tr: 34.0,
            noise_pct: 0.0,
            w_p: 0.005,
            w_r: 0.05,
            gamma: 0.99,
            failure_penalty: -1e4,
            limits: ActuatorLimits::default(),
            seed: 0,
            n_sensors: 100,
            solver: SolverOptions::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self, baseline_len: usize) -> Result<()> {
        if !(self.control_interval > 0.0) {
            return Err(Error::Config("control_interval must be positive".into()));
        }
        if !(self.noise_pct >= 0.0) {
            return Err(Error::Config("noise_pct must be >= 0".into()));
        }
        if !(self.w_p >= 0.0 && self.w_r >= 0.0) {
            return Err(Error::Config("reward weights must be >= 0".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!("gamma = {} outside (0, 1]", self.gamma)));
        }
        if baseline_len != self.n_sensors {
            return Err(Error::Config(format!(
                "baseline length {baseline_len} does not match sensor count {}",
                self.n_sensors
            )));
        }
        Ok(())
    }
}

/// Normalized pressures p / p_inf at the sensors.
pub type Observation = Vec<f64>;

#[derive(Debug, Clone, Copy)]
pub struct StepDiagnostics {
    pub exit_mass_flow: f64,
    /// Jet kinetic power P of Eq. (8).
    pub jet_power: f64,
    /// Total prescribed jet mass flux Q.
    pub total_flux: f64,
    /// Probe pressures normalized by p_inf.
    pub p1: f64,
    pub p2: f64,
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    /// Episode duration reached.
    pub terminated: bool,
    /// Solver failure; reward is the configured failure penalty.
    pub truncated: bool,
    pub diagnostics: StepDiagnostics,
}

/// Reward normalizers derived from the actuator bounds at maximum lambda.
#[derive(Debug, Clone, Copy)]
pub struct RewardScales {
    pub p_max: f64,
    pub q_max: f64,
}

impl RewardScales {
    pub fn from_bounds(geom: &InletGeometry, fs: &Freestream, limits: &ActuatorLimits) -> Self {
        let area = (geom.area_blowing() + geom.area_suction_floor() + geom.area_suction_cowl()) * MM;
        let v_max = limits.lambda_max * fs.speed();
        let rho = fs.density();
        RewardScales {
            p_max: 0.5 * rho * area * v_max.powi(3),
            q_max: rho * area * v_max,
        }
    }
}

/// The three penalty terms of the reward: [pressure deviation, power,
/// actuation rate]; reward = -(sum).
pub fn reward_components(
    p: &[f64],
    baseline: &[f64],
    power: f64,
    flux_change: f64,
    dt: f64,
    scales: &RewardScales,
    w_p: f64,
    w_r: f64,
) -> Result<[f64; 3]> {
    if p.len() != baseline.len() {
        return Err(Error::Config(format!(
            "pressure/baseline length mismatch: {} vs {}",
            p.len(),
            baseline.len()
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::Config("reward dt must be positive".into()));
    }
    let mut dev = 0.0;
    for (pi, bi) in p.iter().zip(baseline) {
        if *bi == 0.0 {
            return Err(Error::Config("baseline pressure entry is zero".into()));
        }
        // (p/p_inf - b/p_inf)/(b/p_inf) = (p - b)/b: p_inf cancels
        let e = (pi - bi) / bi;
        dev += e * e;
    }
    Ok([
        dev,
        w_p * (power / scales.p_max).powi(2),
        w_r * flux_change.abs() / (scales.q_max * dt),
    ])
}

/// Reward of Eq. (7); always <= 0.
pub fn reward(
    p: &[f64],
    baseline: &[f64],
    power: f64,
    flux_change: f64,
    dt: f64,
    scales: &RewardScales,
    w_p: f64,
    w_r: f64,
) -> Result<f64> {
    let c = reward_components(p, baseline, power, flux_change, dt, scales, w_p, w_r)?;
    Ok(-(c[0] + c[1] + c[2]))
}

/// Multiplicative sensor noise p * (1 + (delta/100) z), z iid N(0, 1).
pub fn inject_noise(p: &[f64], delta_pct: f64, rng: &mut impl Rng) -> Vec<f64> {
    if delta_pct == 0.0 {
        return p.to_vec();
    }
    p.iter()
        .map(|&v| {
            let z: f64 = rng.sample(StandardNormal);
            v * (1.0 + delta_pct / 100.0 * z)
        })
        .collect()
}

const SNAPSHOT_MAGIC: &[u8; 8] = b"INLETWRM";
const SNAPSHOT_VERSION: u32 = 1;
const ENDIAN_SENTINEL: u32 = 0x0102_0304;

/// Throttled-but-uncontrolled flow state the episode restarts from, at the
/// jet-activation time.
#[derive(Debug, Clone)]
pub struct WarmStart {
    pub t: f64,
    pub order: usize,
    pub leaves: Vec<ElemKey>,
    /// data[elem][node][comp] matching the leaf ordering.
    pub data: Vec<Vec<[f64; 4]>>,
}

impl WarmStart {
    /// Captures the case's current initial condition at t = 0.
    pub fn from_case(case: &InletCase) -> Self {
        WarmStart {
            t: 0.0,
            order: case.mesh.order(),
            leaves: case.mesh.elements.iter().map(|e| e.key).collect(),
            data: case.field.data.clone(),
        }
    }

    pub fn from_simulation(sim: &Simulation) -> Self {
        WarmStart {
            t: sim.t,
            order: sim.mesh.order(),
            leaves: sim.mesh.elements.iter().map(|e| e.key).collect(),
            data: sim.field.data.clone(),
        }
    }

    /// Little-endian binary snapshot with magic header and version.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(SNAPSHOT_MAGIC);
        out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
        out.extend_from_slice(&ENDIAN_SENTINEL.to_le_bytes());
        out.extend_from_slice(&(self.order as u32).to_le_bytes());
        out.extend_from_slice(&(self.leaves.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.t.to_le_bytes());
        for (key, elem) in self.leaves.iter().zip(&self.data) {
            out.extend_from_slice(&key.tree.to_le_bytes());
            out.extend_from_slice(&(key.level as u32).to_le_bytes());
            out.extend_from_slice(&key.ix.to_le_bytes());
            out.extend_from_slice(&key.iy.to_le_bytes());
            for node in elem {
                for c in node {
                    out.extend_from_slice(&c.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
            if *pos + n > bytes.len() {
                return Err(Error::Parse {
                    line: *pos,
                    detail: "warm-start snapshot truncated".into(),
                });
            }
            let s = &bytes[*pos..*pos + n];
            *pos += n;
            Ok(s)
        };
        let u32_at = |pos: &mut usize| -> Result<u32> {
            Ok(u32::from_le_bytes(take(pos, 4)?.try_into().unwrap()))
        };
        let f64_at = |pos: &mut usize| -> Result<f64> {
            Ok(f64::from_le_bytes(take(pos, 8)?.try_into().unwrap()))
        };
        if take(&mut pos, 8)? != SNAPSHOT_MAGIC {
            return Err(Error::Incompatible("not a warm-start snapshot".into()));
        }
        let version = u32_at(&mut pos)?;
        if version != SNAPSHOT_VERSION {
            return Err(Error::Incompatible(format!(
                "warm-start snapshot version {version}, expected {SNAPSHOT_VERSION}"
            )));
        }
        if u32_at(&mut pos)? != ENDIAN_SENTINEL {
            return Err(Error::Incompatible("warm-start snapshot endianness mismatch".into()));
        }
        let order = u32_at(&mut pos)? as usize;
        let n_elems = u32_at(&mut pos)? as usize;
        let t = f64_at(&mut pos)?;
        let nodes = (order + 1) * (order + 1);
        let mut leaves = Vec::with_capacity(n_elems);
        let mut data = Vec::with_capacity(n_elems);
        for _ in 0..n_elems {
            let tree = u32_at(&mut pos)?;
            let level = u32_at(&mut pos)? as u8;
            let ix = u32_at(&mut pos)?;
            let iy = u32_at(&mut pos)?;
            leaves.push(ElemKey { tree, level, ix, iy });
            let mut elem = Vec::with_capacity(nodes);
            for _ in 0..nodes {
                let mut v = [0.0; 4];
                for c in &mut v {
                    *c = f64_at(&mut pos)?;
                }
                elem.push(v);
            }
            data.push(elem);
        }
        Ok(WarmStart { t, order, leaves, data })
    }
}

/// Single-threaded environment instance; run several in separate workers
/// for parallel rollouts.
pub struct ControlEnv {
    pub config: EnvConfig,
    pub case: InletCase,
    pub probes: ProbeSet,
    pub baseline: Vec<f64>,
    pub scales: RewardScales,
    warm_start: WarmStart,
    sim: Option<Simulation>,
    rng: ChaCha8Rng,
    episode_start: f64,
    prev_flux: f64,
    terminated: bool,
    log: String,
}

const LOG_HEADER: &str =
    "time,lambda_b,lambda_s1,lambda_s2,beta,reward,r_pressure,r_power,r_rate,p1_norm,p2_norm,exit_mass_flow\n";

impl ControlEnv {
    /// Builds the throttled case at `config.tr` and wires in the baseline
    /// sensor profile and the warm-start snapshot.
    pub fn new(
        config: EnvConfig,
        geometry: &InletGeometry,
        freestream: &Freestream,
        order: usize,
        base_level: u8,
        baseline: Vec<f64>,
        warm_start: Option<WarmStart>,
    ) -> Result<Self> {
        config.validate(baseline.len())?;
        let geom = InletGeometry {
            throttle_ratio: config.tr,
            ..geometry.clone()
        };
        let case = build_inlet_case(&geom, freestream, order, base_level)?;
        let warm_start = warm_start
            .ok_or_else(|| Error::Config("missing warm-start snapshot".into()))?;
        if warm_start.order != order {
            return Err(Error::Incompatible(format!(
                "warm-start order {} does not match case order {order}",
                warm_start.order
            )));
        }
        let probes = ProbeSet::for_geometry(&geom, config.n_sensors);
        probes.validate(&case.mesh)?;
        let scales = RewardScales::from_bounds(&geom, freestream, &config.limits);
        let seed = config.seed;
        Ok(ControlEnv {
            config,
            case,
            probes,
            baseline,
            scales,
            warm_start,
            sim: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
            episode_start: 0.0,
            prev_flux: 0.0,
            terminated: false,
            log: String::new(),
        })
    }

    fn restore_warm_start(&self) -> Result<(ForestMesh, Field)> {
        let geom = &self.case.geometry;
        let (grid, rules) = inlet_grid(geom, 3, 30.0)?;
        let leaves: BTreeSet<ElemKey> = self.warm_start.leaves.iter().copied().collect();
        let mesh = ForestMesh::from_leaves(grid, self.warm_start.order, rules, &leaves)?;
        if mesh.n_elements() != self.warm_start.data.len() {
            return Err(Error::Incompatible(
                "warm-start snapshot does not match the case mesh".into(),
            ));
        }
        let mut field = Field::zeros(&mesh);
        // from_leaves iterates the ordered leaf set; restore in that order
        for (e, elem) in mesh.elements.iter().enumerate() {
            let src = self
                .warm_start
                .leaves
                .iter()
                .position(|k| *k == elem.key)
                .ok_or_else(|| Error::Incompatible("warm-start leaf set mismatch".into()))?;
            field.data[e] = self.warm_start.data[src].clone();
        }
        Ok((mesh, field))
    }

    /// Restores the warm-start state and returns the first observation.
    pub fn reset(&mut self) -> Result<Observation> {
        let (mesh, field) = self.restore_warm_start()?;
        let ctx = self.case.unactuated_context();
        let mut sim = Simulation::new(mesh, field, self.case.gas, ctx, self.config.solver.clone());
        sim.t = self.warm_start.t;
        self.episode_start = sim.t;
        self.sim = Some(sim);
        self.rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        self.prev_flux = 0.0;
        self.terminated = false;
        self.log.clear();
        self.log.push_str(LOG_HEADER);
        self.observe()
    }

    fn observe(&mut self) -> Result<Observation> {
        let sim = self.sim.as_ref().unwrap();
        let p = sample_wall_pressures(&sim.field, &sim.mesh, &sim.gas, &self.probes)?;
        let p_inf = self.case.freestream.pressure;
        let normalized: Vec<f64> = p.iter().map(|v| v / p_inf).collect();
        Ok(inject_noise(&normalized, self.config.noise_pct, &mut self.rng))
    }

    /// Applies the (clamped) action, advances by exactly one control
    /// interval, and scores the resulting wall pressures.
    pub fn step(&mut self, action: &ActionVector) -> Result<StepResult> {
        if self.terminated {
            return Err(Error::Protocol(
                "step() called on a terminated episode; call reset()".into(),
            ));
        }
        let Some(sim) = self.sim.as_mut() else {
            return Err(Error::Protocol("step() called before reset()".into()));
        };
        let mut cmd = action.clamped(&self.config.limits);
        // the mass balance needs blowing and suction together; a one-sided
        // command degenerates to jets-off rather than failing the episode
        if cmd.lambda_b == 0.0 || (cmd.lambda_s1 == 0.0 && cmd.lambda_s2 == 0.0) {
            cmd = JetCommand { beta: cmd.beta, ..JetCommand::zero() };
        }
        let ctx = self.case.jet_context(&sim.field, &sim.mesh, &cmd)?;
        let (q, power) = self.case.actuation_quantities(&sim.field, &sim.mesh, &cmd)?;
        let total_flux = q.iter().sum::<f64>();
        sim.ctx = ctx;
        let target = sim.t + self.config.control_interval;
        let dt = self.config.control_interval;
        let p_inf = self.case.freestream.pressure;
        match sim.advance_to(target) {
            Ok(_) => {}
            Err(e) => {
                self.terminated = true;
                let sim = self.sim.as_ref().unwrap();
                let diagnostics = StepDiagnostics {
                    exit_mass_flow: f64::NAN,
                    jet_power: power,
                    total_flux,
                    p1: f64::NAN,
                    p2: f64::NAN,
                };
                let _ = writeln!(
                    self.log,
                    "{},{},{},{},{},{},,,,,,{}",
                    sim.t, cmd.lambda_b, cmd.lambda_s1, cmd.lambda_s2, cmd.beta,
                    self.config.failure_penalty, e
                );
                return Ok(StepResult {
                    observation: vec![f64::NAN; self.config.n_sensors],
                    reward: self.config.failure_penalty,
                    terminated: true,
                    truncated: true,
                    diagnostics,
                });
            }
        }
        let pressures = {
            let sim = self.sim.as_ref().unwrap();
            sample_wall_pressures(&sim.field, &sim.mesh, &sim.gas, &self.probes)?
        };
        let flux_change = total_flux - self.prev_flux;
        self.prev_flux = total_flux;
        let comps = reward_components(
            &pressures,
            &self.baseline,
            power,
            flux_change,
            dt,
            &self.scales,
            self.config.w_p,
            self.config.w_r,
        )?;
        let r = -(comps[0] + comps[1] + comps[2]);
        let sim = self.sim.as_ref().unwrap();
        let p_at = |pt: [f64; 2]| {
            sim.field
                .pressure_at(&sim.mesh, &sim.gas, pt[0], pt[1])
                .ok_or(Error::ProbeOutsideMesh { x: pt[0], y: pt[1] })
        };
        let diagnostics = StepDiagnostics {
            exit_mass_flow: exit_mass_flow(&sim.field, &sim.mesh, &self.case.geometry),
            jet_power: power,
            total_flux,
            p1: p_at(self.probes.p1)? / p_inf,
            p2: p_at(self.probes.p2)? / p_inf,
        };
        let elapsed = sim.t - self.episode_start;
        self.terminated = elapsed >= self.config.episode_duration * (1.0 - 1e-12);
        let time = sim.t;
        let normalized: Vec<f64> = pressures.iter().map(|v| v / p_inf).collect();
        let observation = inject_noise(&normalized, self.config.noise_pct, &mut self.rng);
        let _ = writeln!(
            self.log,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            time, cmd.lambda_b, cmd.lambda_s1, cmd.lambda_s2, cmd.beta, r,
            comps[0], comps[1], comps[2], diagnostics.p1, diagnostics.p2,
            diagnostics.exit_mass_flow
        );
        Ok(StepResult {
            observation,
            reward: r,
            terminated: self.terminated,
            truncated: false,
            diagnostics,
        })
    }

    /// Physical time of the running simulation.
    pub fn time(&self) -> Option<f64> {
        self.sim.as_ref().map(|s| s.t)
    }

    /// One CSV row per control step of the current episode.
    pub fn episode_log(&self) -> &str {
        &self.log
    }

    pub fn observation_len(&self) -> usize {
        self.config.n_sensors
    }
}

impl crate::rl::Environment for ControlEnv {
    fn obs_dim(&self) -> usize {
        self.observation_len()
    }

    fn bounds(&self) -> crate::rl::ActionBounds {
        crate::rl::ActionBounds::from_limits(&self.config.limits)
    }

    fn reset(&mut self) -> Result<Observation> {
        ControlEnv::reset(self)
    }

    fn step(&mut self, action: [f64; 4]) -> Result<crate::rl::EnvStep> {
        let cmd = JetCommand {
            lambda_b: action[0],
            lambda_s1: action[1],
            lambda_s2: action[2],
            beta: action[3],
        };
        let r = ControlEnv::step(self, &cmd)?;
        Ok(crate::rl::EnvStep {
            observation: r.observation,
            reward: r.reward,
            terminated: r.terminated,
            truncated: r.truncated,
        })
    }
}

/// Runs the throttled, uncontrolled transient for `duration` seconds and
/// snapshots the end state as the episode warm start.
pub fn make_warm_start(case: &InletCase, duration: f64, solver: SolverOptions) -> Result<WarmStart> {
    let ctx = case.unactuated_context();
    let mut sim = Simulation::new(case.mesh.clone(), case.field.clone(), case.gas, ctx, solver);
    sim.advance_to(duration).map_err(|e| Error::SolverAbort {
        time: sim.t,
        detail: e.to_string(),
    })?;
    Ok(WarmStart::from_simulation(&sim))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::residual::BcContext;
    use crate::timestepping::CflSettings;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    fn scales_unit() -> RewardScales {
        RewardScales { p_max: 1.0, q_max: 1.0 }
    }

    #[test]
    fn reward_examples() {
        let b = vec![900.0; 100];
        let r = reward(&b, &b, 0.0, 0.0, 1.0, &scales_unit(), 0.005, 0.05).unwrap();
        assert_eq!(r, 0.0);
        let p: Vec<f64> = b.iter().map(|v| 2.0 * v).collect();
        let r = reward(&p, &b, 0.0, 0.0, 1.0, &scales_unit(), 0.005, 0.05).unwrap();
        assert_relative_eq!(r, -100.0, max_relative = 1e-12);
    }

    #[test]
    fn reward_is_nonpositive_and_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let n = 10;
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(100.0..2000.0)).collect();
            let p: Vec<f64> = (0..n).map(|_| rng.gen_range(100.0..5000.0)).collect();
            let power = rng.gen_range(0.0..10.0);
            let dq = rng.gen_range(-5.0..5.0);
            let dt = rng.gen_range(1e-6..1e-3);
            let r = reward(&p, &b, power, dq, dt, &scales_unit(), 0.005, 0.05).unwrap();
            assert!(r <= 0.0, "reward {r}");
            // simultaneous positive rescaling of p and baseline (and p_inf,
            // which cancels identically) leaves the reward unchanged
            let c = rng.gen_range(0.1..10.0);
            let pc: Vec<f64> = p.iter().map(|v| c * v).collect();
            let bc: Vec<f64> = b.iter().map(|v| c * v).collect();
            let rc = reward(&pc, &bc, power, dq, dt, &scales_unit(), 0.005, 0.05).unwrap();
            assert_relative_eq!(r, rc, max_relative = 1e-12);
        }
    }

    #[test]
    fn reward_rejects_zero_baseline_and_mismatch() {
        let b = vec![900.0, 0.0];
        let p = vec![900.0, 900.0];
        assert!(matches!(
            reward(&p, &b, 0.0, 0.0, 1.0, &scales_unit(), 0.005, 0.05),
            Err(Error::Config(_))
        ));
        assert!(reward(&p, &b[..1], 0.0, 0.0, 1.0, &scales_unit(), 0.005, 0.05).is_err());
    }

    #[test]
    fn jet_power_arithmetic() {
        // single jet rho = 1, A = 1, v = 2: Q = 2, P = 1/2 * 2^3 / 1 = 4
        let (q, v, rho, a) = (2.0f64, 2.0f64, 1.0f64, 1.0f64);
        let power = 0.5 * rho * a * v.powi(3);
        assert_relative_eq!(power, 0.5 * q.powi(3) / (rho * rho * a * a));
        assert_relative_eq!(power, 4.0);
    }

    #[test]
    fn noise_identity_and_formula() {
        let p = vec![900.0, 1000.0];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert_eq!(inject_noise(&p, 0.0, &mut rng), p);
        // delta = 10 with the draw pinned by the seed
        let mut r1 = ChaCha8Rng::seed_from_u64(7);
        let z: f64 = r1.sample(StandardNormal);
        let mut r2 = ChaCha8Rng::seed_from_u64(7);
        let noisy = inject_noise(&p[..1], 10.0, &mut r2);
        assert_relative_eq!(noisy[0], 900.0 * (1.0 + 0.1 * z), max_relative = 1e-15);
    }

    #[test]
    fn noise_monte_carlo_std() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = [1000.0];
        let n = 100_000;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for _ in 0..n {
            let rel = inject_noise(&p, 5.0, &mut rng)[0] / p[0] - 1.0;
            sum += rel;
            sum2 += rel * rel;
        }
        let mean = sum / n as f64;
        let std = (sum2 / n as f64 - mean * mean).sqrt();
        assert!((std - 0.05).abs() < 0.002, "std {std}");
    }

    #[test]
    fn snapshot_round_trip_and_corruption() {
        let ws = WarmStart {
            t: 1.5e-3,
            order: 2,
            leaves: vec![
                ElemKey { tree: 3, level: 1, ix: 0, iy: 1 },
                ElemKey { tree: 4, level: 0, ix: 0, iy: 0 },
            ],
            data: vec![vec![[1.0, 2.0, 3.0, 4.0]; 9], vec![[5.0, 6.0, 7.0, 8.0]; 9]],
        };
        let bytes = ws.to_bytes();
        let back = WarmStart::from_bytes(&bytes).unwrap();
        assert_eq!(back.t, ws.t);
        assert_eq!(back.order, 2);
        assert_eq!(back.leaves, ws.leaves);
        assert_eq!(back.data, ws.data);

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(WarmStart::from_bytes(&bad), Err(Error::Incompatible(_))));
        assert!(matches!(
            WarmStart::from_bytes(&bytes[..bytes.len() - 3]),
            Err(Error::Parse { .. })
        ));
        let mut wrong_version = bytes.clone();
        wrong_version[8] = 99;
        assert!(matches!(
            WarmStart::from_bytes(&wrong_version),
            Err(Error::Incompatible(_))
        ));
    }

    fn test_config(noise: f64, seed: u64) -> EnvConfig {
        EnvConfig {
            control_interval: 4e-6,
            episode_duration: 8e-6,
            tr: 0.0,
            noise_pct: noise,
            seed,
            n_sensors: 8,
            solver: SolverOptions {
                cfl: CflSettings { safety: 0.9, c_conv: 0.8, c_diff: 0.5 },
                ..SolverOptions::default()
            },
            ..EnvConfig::default()
        }
    }

    fn test_env(noise: f64, seed: u64) -> ControlEnv {
        let geom = InletGeometry::default();
        let fs = Freestream::default();
        let case = build_inlet_case(&geom, &fs, 2, 0).unwrap();
        let ws = WarmStart::from_case(&case);
        ControlEnv::new(test_config(noise, seed), &geom, &fs, 2, 0, vec![900.0; 8], Some(ws))
            .unwrap()
    }

    #[test]
    fn reset_protocol_and_observation() {
        let mut env = test_env(0.0, 1);
        assert!(matches!(env.step(&JetCommand::zero()), Err(Error::Protocol(_))));
        let obs = env.reset().unwrap();
        assert_eq!(obs.len(), 8);
        // delta = 0: observation equals p / p_inf exactly; warm start is the
        // uniform freestream so all entries are 1
        for v in &obs {
            assert_relative_eq!(*v, 1.0, max_relative = 1e-10);
        }
        let obs2 = env.reset().unwrap();
        assert_eq!(obs, obs2);
    }

    #[test]
    fn noisy_resets_are_seed_deterministic() {
        let mut a = test_env(5.0, 42);
        let mut b = test_env(5.0, 42);
        assert_eq!(a.reset().unwrap(), b.reset().unwrap());
        let mut c = test_env(5.0, 43);
        assert_ne!(a.reset().unwrap(), c.reset().unwrap());
    }

    #[test]
    fn zero_action_reproduces_uncontrolled_trajectory() {
        let mut env = test_env(0.0, 1);
        env.reset().unwrap();
        let r1 = env.step(&JetCommand::zero()).unwrap();
        let r2 = env.step(&JetCommand::zero()).unwrap();
        assert!(r2.terminated); // 2 steps x 4 us = episode duration

        // agent-free reference with the same substep schedule
        let geom = InletGeometry::default();
        let fs = Freestream::default();
        let case = build_inlet_case(&geom, &fs, 2, 0).unwrap();
        let ctx = BcContext {
            freestream: fs.state(&case.gas),
            ..case.unactuated_context()
        };
        let mut sim = Simulation::new(
            case.mesh.clone(),
            case.field.clone(),
            case.gas,
            ctx,
            test_config(0.0, 1).solver,
        );
        sim.advance_to(4e-6).unwrap();
        let probes = ProbeSet::for_geometry(&geom, 8);
        let p = sample_wall_pressures(&sim.field, &sim.mesh, &sim.gas, &probes).unwrap();
        let obs_ref: Vec<f64> = p.iter().map(|v| v / fs.pressure).collect();
        assert_eq!(r1.observation, obs_ref, "bit-compatible probe traces");
        sim.advance_to(8e-6).unwrap();
        let p = sample_wall_pressures(&sim.field, &sim.mesh, &sim.gas, &probes).unwrap();
        let obs_ref: Vec<f64> = p.iter().map(|v| v / fs.pressure).collect();
        assert_eq!(r2.observation, obs_ref);
    }

    #[test]
    fn elapsed_time_tracks_control_interval_exactly() {
        let mut env = test_env(0.0, 1);
        env.reset().unwrap();
        env.step(&JetCommand::zero()).unwrap();
        assert_relative_eq!(env.time().unwrap(), 4e-6, max_relative = 1e-12);
        let res = env.step(&JetCommand::zero()).unwrap();
        assert_relative_eq!(env.time().unwrap(), 8e-6, max_relative = 1e-12);
        assert!(res.terminated);
        assert!(matches!(env.step(&JetCommand::zero()), Err(Error::Protocol(_))));
    }

    #[test]
    fn noise_is_sensor_side_only() {
        let mut clean = test_env(0.0, 9);
        let mut noisy = test_env(10.0, 9);
        clean.reset().unwrap();
        noisy.reset().unwrap();
        let act = JetCommand { lambda_b: 0.1, lambda_s1: 0.05, lambda_s2: 0.05, beta: 0.1 };
        let a = clean.step(&act).unwrap();
        let b = noisy.step(&act).unwrap();
        // solver evolution identical; only the observation differs
        assert_eq!(a.diagnostics.exit_mass_flow, b.diagnostics.exit_mass_flow);
        assert_eq!(a.diagnostics.p1, b.diagnostics.p1);
        assert_eq!(a.reward, b.reward);
        assert_ne!(a.observation, b.observation);
    }

    #[test]
    fn identical_seeds_give_identical_trajectories() {
        let actions = [
            JetCommand { lambda_b: 0.2, lambda_s1: 0.1, lambda_s2: 0.05, beta: 0.2 },
            JetCommand { lambda_b: 0.05, lambda_s1: 0.15, lambda_s2: 0.0, beta: 0.1 },
        ];
        let mut a = test_env(5.0, 21);
        let mut b = test_env(5.0, 21);
        a.reset().unwrap();
        b.reset().unwrap();
        for act in &actions {
            let ra = a.step(act).unwrap();
            let rb = b.step(act).unwrap();
            assert_eq!(ra.observation, rb.observation);
            assert_eq!(ra.reward, rb.reward);
        }
    }

    #[test]
    fn one_sided_commands_degenerate_to_jets_off() {
        let mut env = test_env(0.0, 5);
        env.reset().unwrap();
        // suction only: would be balance-infeasible, must not fail the episode
        let res = env
            .step(&JetCommand { lambda_b: 0.0, lambda_s1: 0.2, lambda_s2: 0.1, beta: 0.0 })
            .unwrap();
        assert!(!res.truncated);
        assert_eq!(res.diagnostics.total_flux, 0.0);
        // blowing only: same
        let res = env
            .step(&JetCommand { lambda_b: 0.2, lambda_s1: 0.0, lambda_s2: 0.0, beta: 0.0 })
            .unwrap();
        assert_eq!(res.diagnostics.jet_power, 0.0);
    }

    #[test]
    fn episode_log_has_one_row_per_step() {
        let mut env = test_env(0.0, 2);
        env.reset().unwrap();
        env.step(&JetCommand::zero()).unwrap();
        env.step(&JetCommand::zero()).unwrap();
        let log = env.episode_log();
        assert_eq!(log.lines().count(), 3); // header + 2 steps
        assert!(log.starts_with("time,lambda_b"));
    }

    #[test]
    fn missing_warm_start_is_a_config_error() {
        let geom = InletGeometry::default();
        let fs = Freestream::default();
        let res = ControlEnv::new(test_config(0.0, 0), &geom, &fs, 2, 0, vec![900.0; 8], None);
        assert!(matches!(res, Err(Error::Config(_))));
        // baseline length mismatch
        let case = build_inlet_case(&geom, &fs, 2, 0).unwrap();
        let ws = WarmStart::from_case(&case);
        let res = ControlEnv::new(test_config(0.0, 0), &geom, &fs, 2, 0, vec![900.0; 5], Some(ws));
        assert!(matches!(res, Err(Error::Config(_))));
    }
}

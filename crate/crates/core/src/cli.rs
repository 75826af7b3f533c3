//! Command-line front end: argument parsing, config/flag precedence, and the
//! six subcommands wiring cases, environments, agents, and sensor selection
//! into reproducible file-producing runs.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::config::{sha256_hex, RunConfig, RunManifest};
use crate::env::{make_warm_start, ControlEnv, EnvConfig, WarmStart};
use crate::error::{Error, Result};
use crate::inlet::{
    build_inlet_case, exit_mass_flow, mach_field, export_point_cloud, run_baseline,
    BaselineOptions, BaselineResult, Freestream, InletGeometry, ProbeSet,
};
use crate::rl::checkpoint::{Algo, Checkpoint};
use crate::rl::sac::SacConfig;
use crate::rl::td3::Td3Config;
use crate::rl::toy::{ToyConfig, ToyEnv};
use crate::rl::train::{run_episode, train, AgentKind, TrainConfig};
use crate::rl::Environment;
use crate::sensors::{select_sensors, SnapshotMatrix};
use crate::solver::{Simulation, SolverOptions};
use crate::timestepping::CflSettings;
use crate::verification::vortex_convergence;

#[derive(Parser, Debug)]
#[command(name = "inletctl", version, about = "Hypersonic-inlet flow control toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the uncontrolled throttled case and record probe traces.
    Simulate(CommonArgs),
    /// Run the no-throttling case and persist the averaged sensor baseline.
    Baseline(CommonArgs),
    /// Train a control agent (CFD environment or built-in surrogate).
    Train(CommonArgs),
    /// Zero-shot deploy a checkpoint for one episode.
    Infer(CommonArgs),
    /// Sparse sensor selection from a snapshot matrix.
    Sensors(CommonArgs),
    /// Grid-convergence study (vortex table or inlet probe overlay).
    Convergence(CommonArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct CommonArgs {
    /// TOML run configuration; flags override config keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Throttling ratio, percent.
    #[arg(long)]
    pub tr: Option<f64>,
    /// Sensor noise intensity delta, percent.
    #[arg(long = "noise-pct")]
    pub noise_pct: Option<f64>,
    /// Unit Reynolds number; rescales viscosity only.
    #[arg(long = "re-unit")]
    pub re_unit: Option<f64>,
    /// Training algorithm: td3 | sac.
    #[arg(long)]
    pub algo: Option<String>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long = "out-dir")]
    pub out_dir: Option<PathBuf>,
    /// Use the built-in surrogate environment instead of the CFD case.
    #[arg(long = "toy-env")]
    pub toy_env: bool,
    /// Snapshot CSV for sensor selection.
    #[arg(long)]
    pub snapshots: Option<PathBuf>,
    /// Coordinate sidecar CSV for sensor selection.
    #[arg(long)]
    pub coordinates: Option<PathBuf>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Baseline(_) => "baseline",
            Command::Train(_) => "train",
            Command::Infer(_) => "infer",
            Command::Sensors(_) => "sensors",
            Command::Convergence(_) => "convergence",
        }
    }

    fn args(&self) -> &CommonArgs {
        match self {
            Command::Simulate(a)
            | Command::Baseline(a)
            | Command::Train(a)
            | Command::Infer(a)
            | Command::Sensors(a)
            | Command::Convergence(a) => a,
        }
    }
}

fn apply_overrides(config: &mut RunConfig, args: &CommonArgs) -> Result<()> {
    if let Some(seed) = args.seed {
        config.env.seed = seed;
    }
    if let Some(tr) = args.tr {
        config.case.tr = tr;
    }
    if let Some(noise) = args.noise_pct {
        config.env.noise_pct = noise;
    }
    if let Some(re) = args.re_unit {
        config.case.re_unit = re;
    }
    if let Some(algo) = &args.algo {
        config.train.algo = algo.clone();
    }
    if args.toy_env {
        config.train.toy_env = true;
    }
    if let Some(p) = &args.snapshots {
        config.sensors.snapshots = Some(p.clone());
    }
    if let Some(p) = &args.coordinates {
        config.sensors.coordinates = Some(p.clone());
    }
    parse_algo(&config.train.algo)?;
    Ok(())
}

fn parse_algo(name: &str) -> Result<Algo> {
    match name {
        "td3" => Ok(Algo::Td3),
        "sac" => Ok(Algo::Sac),
        other => Err(Error::Config(format!("unknown algorithm '{other}', expected td3 or sac"))),
    }
}

/// Parses config + flags, writes the manifest first, runs the command, and
/// finalizes the manifest whether or not the command succeeded.
pub fn execute(cli: &Cli) -> Result<()> {
    let args = cli.command.args();
    let (mut config, config_bytes) = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => {
            let c = RunConfig::default();
            let bytes = c.to_toml().into_bytes();
            (c, bytes)
        }
    };
    apply_overrides(&mut config, args)?;
    let out_dir = args
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("out").join(cli.command.name()));
    std::fs::create_dir_all(&out_dir)?;

    let mut manifest = RunManifest::start(
        cli.command.name(),
        args.config.as_deref(),
        &config_bytes,
        config.env.seed,
        &out_dir,
    );
    manifest.write(&out_dir)?;

    let result = match &cli.command {
        Command::Simulate(_) => cmd_simulate(&config, &out_dir),
        Command::Baseline(_) => cmd_baseline(&config, &out_dir),
        Command::Train(_) => cmd_train(&config, &out_dir),
        Command::Infer(a) => cmd_infer(&config, a, &out_dir),
        Command::Sensors(_) => cmd_sensors(&config, &out_dir),
        Command::Convergence(_) => cmd_convergence(&config, &out_dir),
    };
    manifest.finish(&result);
    manifest.write(&out_dir)?;
    result
}

fn freestream_of(config: &RunConfig) -> Freestream {
    Freestream {
        re_unit: config.case.re_unit,
        ..Freestream::default()
    }
}

fn geometry_of(config: &RunConfig) -> InletGeometry {
    InletGeometry {
        throttle_ratio: config.case.tr,
        ..config.case.geometry.clone().unwrap_or_default()
    }
}

fn solver_of(config: &RunConfig) -> SolverOptions {
    SolverOptions {
        cfl: CflSettings {
            safety: 0.9,
            c_conv: config.case.cfl,
            c_diff: 0.5,
        },
        ..SolverOptions::default()
    }
}

pub const PROBE_CSV_HEADER: &str = "t_s,p1_over_pinf,p2_over_pinf,q_exit_kg_per_s_m\n";

fn cmd_simulate(config: &RunConfig, out_dir: &Path) -> Result<()> {
    let fs = freestream_of(config);
    let geom = geometry_of(config);
    let case = build_inlet_case(&geom, &fs, config.case.order, config.case.base_level)?;
    let probes = ProbeSet::for_geometry(&geom, config.env.n_sensors);
    probes.validate(&case.mesh)?;
    let p_inf = fs.pressure;
    let ctx = case.unactuated_context();
    let mut sim = Simulation::new(
        case.mesh.clone(),
        case.field.clone(),
        case.gas,
        ctx,
        solver_of(config),
    );

    let mut csv = String::from(PROBE_CSV_HEADER);
    let mut samples = 0usize;
    let record = |sim: &Simulation, csv: &mut String, samples: &mut usize| -> Result<()> {
        let p = |pt: [f64; 2]| {
            sim.field
                .pressure_at(&sim.mesh, &sim.gas, pt[0], pt[1])
                .ok_or(Error::ProbeOutsideMesh { x: pt[0], y: pt[1] })
        };
        let q = exit_mass_flow(&sim.field, &sim.mesh, &case.geometry);
        csv.push_str(&format!(
            "{},{},{},{}\n",
            sim.t,
            p(probes.p1)? / p_inf,
            p(probes.p2)? / p_inf,
            q
        ));
        *samples += 1;
        if config.case.field_export_every > 0 && *samples % config.case.field_export_every == 0 {
            let mach = mach_field(&sim.field, &sim.mesh, &sim.gas);
            let cloud = export_point_cloud(&sim.mesh, &mach, "mach");
            std::fs::write(out_dir.join(format!("mach_{:05}.txt", *samples)), cloud)?;
        }
        Ok(())
    };

    record(&sim, &mut csv, &mut samples)?;
    let duration = config.case.duration;
    let mut steps = 0usize;
    let outcome = loop {
        if sim.t >= duration * (1.0 - 1e-14) {
            break Ok(());
        }
        match sim.step(Some(duration - sim.t)) {
            Ok(_) => {}
            Err(e) => {
                break Err(Error::SolverAbort {
                    time: sim.t,
                    detail: e.to_string(),
                })
            }
        }
        steps += 1;
        if steps % config.case.sample_every == 0 || sim.t >= duration * (1.0 - 1e-14) {
            record(&sim, &mut csv, &mut samples)?;
        }
    };
    // partial outputs are still written on a solver abort
    std::fs::write(out_dir.join("probes.csv"), csv)?;
    outcome
}

/// Baseline vector file: the averaged sensors plus a hash of the sensor
/// layout they were recorded at.
#[derive(Debug, Serialize, Deserialize)]
pub struct BaselineFile {
    pub n_sensors: usize,
    pub sensor_hash: String,
    pub result: BaselineResult,
}

fn sensor_hash(probes: &ProbeSet) -> String {
    let mut bytes = Vec::new();
    for &[x, y] in &probes.sensors {
        bytes.extend_from_slice(&x.to_le_bytes());
        bytes.extend_from_slice(&y.to_le_bytes());
    }
    sha256_hex(&bytes)
}

fn cmd_baseline(config: &RunConfig, out_dir: &Path) -> Result<()> {
    let fs = freestream_of(config);
    // baseline is always the no-throttling case
    let geom = InletGeometry {
        throttle_ratio: 0.0,
        ..geometry_of(config)
    };
    let case = build_inlet_case(&geom, &fs, config.case.order, config.case.base_level)?;
    let probes = ProbeSet::for_geometry(&geom, config.env.n_sensors);
    let opts = BaselineOptions {
        duration: config.case.duration,
        sample_every: config.case.sample_every,
        solver: solver_of(config),
        ..BaselineOptions::default()
    };
    let result = run_baseline(&case, &probes, &opts)?;
    let file = BaselineFile {
        n_sensors: probes.sensors.len(),
        sensor_hash: sensor_hash(&probes),
        result,
    };
    std::fs::write(
        out_dir.join("baseline.json"),
        serde_json::to_string_pretty(&file).expect("baseline serializes"),
    )?;
    Ok(())
}

fn toy_config(config: &RunConfig) -> ToyConfig {
    ToyConfig {
        n_obs: config.toy.n_obs,
        horizon: config.toy.horizon,
        obs_noise_pct: config.toy.noise_pct,
        drift: config.toy.drift,
        decay: config.toy.decay,
        gain: config.toy.gain,
        seed: config.env.seed,
        ..ToyConfig::default()
    }
}

fn train_config(config: &RunConfig) -> Result<TrainConfig> {
    let t = &config.train;
    Ok(TrainConfig {
        algo: parse_algo(&t.algo)?,
        td3: Td3Config {
            hidden: t.hidden.clone(),
            batch: t.batch,
            lr: t.lr,
            gamma: config.env.gamma,
            ..Td3Config::default()
        },
        sac: SacConfig {
            hidden: t.hidden.clone(),
            batch: t.batch,
            lr: t.lr,
            gamma: config.env.gamma,
            ..SacConfig::default()
        },
        total_steps: t.total_steps,
        warmup_steps: t.warmup_steps,
        updates_per_step: t.updates_per_step,
        n_envs: t.n_envs,
        buffer_capacity: t.buffer_capacity,
        seed: config.env.seed,
        eval_every: t.eval_every,
        eval_episodes: t.eval_episodes,
        target_return: t.target_return,
    })
}

fn env_config(config: &RunConfig, seed: u64) -> EnvConfig {
    EnvConfig {
        control_interval: config.env.control_interval,
        episode_duration: config.env.episode_duration,
        tr: config.case.tr,
        noise_pct: config.env.noise_pct,
        w_p: config.env.w_p,
        w_r: config.env.w_r,
        gamma: config.env.gamma,
        failure_penalty: config.env.failure_penalty,
        seed,
        n_sensors: config.env.n_sensors,
        solver: solver_of(config),
        ..EnvConfig::default()
    }
}

fn load_baseline(config: &RunConfig) -> Result<BaselineFile> {
    let path = config.env.baseline_path.as_ref().ok_or_else(|| {
        Error::Config("env.baseline_path is not set; run `baseline` first and point to its baseline.json".into())
    })?;
    let text = std::fs::read_to_string(path)?;
    let file: BaselineFile = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    if file.n_sensors != config.env.n_sensors {
        return Err(Error::Incompatible(format!(
            "baseline has {} sensors but the run is configured for {}",
            file.n_sensors, config.env.n_sensors
        )));
    }
    Ok(file)
}

fn obtain_warm_start(config: &RunConfig, out_dir: &Path) -> Result<WarmStart> {
    if let Some(path) = &config.env.warm_start_path {
        return WarmStart::from_bytes(&std::fs::read(path)?);
    }
    let fs = freestream_of(config);
    let geom = geometry_of(config);
    let case = build_inlet_case(&geom, &fs, config.case.order, config.case.base_level)?;
    let warm = make_warm_start(&case, config.env.warm_start_duration, solver_of(config))?;
    std::fs::write(out_dir.join("warmstart.bin"), warm.to_bytes())?;
    Ok(warm)
}

fn build_control_env(config: &RunConfig, seed: u64, warm: &WarmStart, baseline: &BaselineFile) -> Result<ControlEnv> {
    let fs = freestream_of(config);
    let geom = geometry_of(config);
    let baseline_vec = baseline.result.sensor_pressures.clone();
    ControlEnv::new(
        env_config(config, seed),
        &geom,
        &fs,
        config.case.order,
        config.case.base_level,
        baseline_vec,
        Some(warm.clone()),
    )
}

fn cmd_train(config: &RunConfig, out_dir: &Path) -> Result<()> {
    let tc = train_config(config)?;
    let result = if config.train.toy_env {
        let toy = toy_config(config);
        train(&tc, move |i| {
            let mut c = toy.clone();
            c.seed = toy.seed + i as u64;
            Ok(Box::new(ToyEnv::new(c)) as Box<dyn Environment>)
        })?
    } else {
        let baseline = load_baseline(config)?;
        let warm = obtain_warm_start(config, out_dir)?;
        let cfg = config.clone();
        train(&tc, move |i| {
            let env = build_control_env(&cfg, cfg.env.seed + i as u64, &warm, &baseline)?;
            Ok(Box::new(env) as Box<dyn Environment>)
        })?
    };
    std::fs::write(out_dir.join("train.log"), &result.log)?;
    result.checkpoint.save(&out_dir.join("checkpoint.bin"))?;
    let mut evals = String::from("env_step,eval_return\n");
    for (step, score) in &result.evals {
        evals.push_str(&format!("{step},{score}\n"));
    }
    std::fs::write(out_dir.join("evals.csv"), evals)?;
    Ok(())
}

pub const EPISODE_CSV_HEADER: &str = "step,lambda_b,lambda_s1,lambda_s2,beta,reward\n";

fn cmd_infer(config: &RunConfig, args: &CommonArgs, out_dir: &Path) -> Result<()> {
    let ckpt_path = args.checkpoint.as_ref().ok_or_else(|| {
        Error::Config("infer requires --checkpoint".into())
    })?;
    let ckpt = Checkpoint::load(ckpt_path)?;
    let mut tc = train_config(config)?;
    tc.algo = ckpt.algo;
    tc.td3.hidden = hidden_of(&ckpt);
    tc.sac.hidden = hidden_of(&ckpt);
    let agent = AgentKind::from_checkpoint(&ckpt, &tc)?;

    if !config.train.toy_env && config.env.episode_duration == 0.0 {
        // zero-length episode: header-only trace
        std::fs::write(out_dir.join("episode.csv"), EPISODE_CSV_HEADER)?;
        return Ok(());
    }

    let mut rng =
        <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(config.env.seed);
    if config.train.toy_env {
        let mut env = ToyEnv::new(toy_config(config));
        ckpt.check_observation_dim(env.obs_dim())?;
        let (ret, csv) = run_episode(&agent, &mut env, true, &mut rng)?;
        std::fs::write(out_dir.join("episode.csv"), csv)?;
        std::fs::write(out_dir.join("return.txt"), format!("{ret}\n"))?;
    } else {
        let baseline = load_baseline(config)?;
        let warm = obtain_warm_start(config, out_dir)?;
        let mut env = build_control_env(config, config.env.seed, &warm, &baseline)?;
        ckpt.check_observation_dim(Environment::obs_dim(&env))?;
        let (ret, csv) = run_episode(&agent, &mut env, true, &mut rng)?;
        // the environment's own log carries times and reward components
        std::fs::write(out_dir.join("episode.csv"), env.episode_log())?;
        std::fs::write(out_dir.join("actions.csv"), csv)?;
        std::fs::write(out_dir.join("return.txt"), format!("{ret}\n"))?;
    }
    Ok(())
}

fn hidden_of(ckpt: &Checkpoint) -> Vec<usize> {
    ckpt.nets
        .first()
        .map(|n| n.spec.sizes[1..n.spec.sizes.len() - 1].to_vec())
        .unwrap_or_default()
}

fn cmd_sensors(config: &RunConfig, out_dir: &Path) -> Result<()> {
    let snapshots = config.sensors.snapshots.as_ref().ok_or_else(|| {
        Error::Config("sensors requires --snapshots (locations x times CSV)".into())
    })?;
    let coordinates = config.sensors.coordinates.as_ref().ok_or_else(|| {
        Error::Config("sensors requires --coordinates (x,y sidecar CSV)".into())
    })?;
    let x = SnapshotMatrix::from_csv(
        &std::fs::read_to_string(snapshots)?,
        &std::fs::read_to_string(coordinates)?,
    )?;
    let mut summary = String::from("r,reconstruction_rms\n");
    for &r in &config.sensors.r_list {
        let sel = select_sensors(&x, r, config.sensors.center)?;
        summary.push_str(&format!("{r},{}\n", sel.reconstruction_rms));
        std::fs::write(out_dir.join(format!("selection_r{r}.json")), sel.to_json())?;
    }
    std::fs::write(out_dir.join("summary.csv"), summary)?;
    Ok(())
}

fn cmd_convergence(config: &RunConfig, out_dir: &Path) -> Result<()> {
    match config.convergence.mode.as_str() {
        "vortex" => {
            let mut csv = String::from("order,cells,h,l2_error,fitted_order\n");
            for &order in &config.convergence.orders {
                let series =
                    vortex_convergence(order, &config.convergence.cells, config.convergence.t_end)?;
                for row in &series.rows {
                    csv.push_str(&format!(
                        "{order},{},{},{},{}\n",
                        row.n, row.h, row.error, series.fitted_order
                    ));
                }
            }
            std::fs::write(out_dir.join("convergence.csv"), csv)?;
            Ok(())
        }
        "inlet" => {
            let fs = freestream_of(config);
            let geom = geometry_of(config);
            for &order in &config.convergence.orders {
                let case = build_inlet_case(&geom, &fs, order, config.case.base_level)?;
                let probes = ProbeSet::for_geometry(&geom, config.env.n_sensors);
                probes.validate(&case.mesh)?;
                let mut sim = Simulation::new(
                    case.mesh.clone(),
                    case.field.clone(),
                    case.gas,
                    case.unactuated_context(),
                    solver_of(config),
                );
                let mut csv = String::from("t_s,p2_over_pinf\n");
                let duration = config.convergence.inlet_duration;
                let mut steps = 0usize;
                while sim.t < duration * (1.0 - 1e-14) {
                    sim.step(Some(duration - sim.t)).map_err(|e| Error::SolverAbort {
                        time: sim.t,
                        detail: e.to_string(),
                    })?;
                    steps += 1;
                    if steps % config.case.sample_every == 0 || sim.t >= duration * (1.0 - 1e-14) {
                        let p2 = sim
                            .field
                            .pressure_at(&sim.mesh, &sim.gas, probes.p2[0], probes.p2[1])
                            .ok_or(Error::ProbeOutsideMesh { x: probes.p2[0], y: probes.p2[1] })?;
                        csv.push_str(&format!("{},{}\n", sim.t, p2 / fs.pressure));
                    }
                }
                std::fs::write(out_dir.join(format!("probes_p{order}.csv")), csv)?;
            }
            Ok(())
        }
        other => Err(Error::Config(format!(
            "unknown convergence mode '{other}', expected vortex or inlet"
        ))),
    }
}

//! Python bindings over the core crate: the surrogate environment, both
//! agents (train/load/act), sensor selection, and the scalar oracles.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use inletctl::rl::checkpoint::{Algo, Checkpoint};
use inletctl::rl::sac::SacConfig;
use inletctl::rl::td3::Td3Config;
use inletctl::rl::toy::{ToyConfig, ToyEnv};
use inletctl::rl::train::{self, AgentKind, TrainConfig};
use inletctl::rl::Environment;
use inletctl::sensors::{select_sensors, SnapshotMatrix};
use inletctl::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(_) => PyIOError::new_err(e.to_string()),
        Error::Config(_) | Error::Incompatible(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn action4(a: Vec<f64>) -> PyResult<[f64; 4]> {
    a.try_into()
        .map_err(|_| PyValueError::new_err("action must have exactly 4 entries"))
}

/// The 1-D damped shock-position surrogate with the 4-D jet action
/// interface (lambda_b, lambda_s1, lambda_s2, beta).
#[pyclass(name = "ToyEnv")]
struct PyToyEnv {
    env: ToyEnv,
    config: ToyConfig,
}

#[pymethods]
impl PyToyEnv {
    #[new]
    #[pyo3(signature = (n_obs=8, horizon=100, obs_noise_pct=0.0, seed=0, drift=0.2, decay=0.9, gain=1.0))]
    fn new(
        n_obs: usize,
        horizon: usize,
        obs_noise_pct: f64,
        seed: u64,
        drift: f64,
        decay: f64,
        gain: f64,
    ) -> Self {
        let config = ToyConfig {
            n_obs,
            horizon,
            obs_noise_pct,
            seed,
            drift,
            decay,
            gain,
            ..ToyConfig::default()
        };
        PyToyEnv {
            env: ToyEnv::new(config.clone()),
            config,
        }
    }

    #[getter]
    fn obs_dim(&self) -> usize {
        self.env.obs_dim()
    }

    /// (lo, hi) per action dimension.
    #[getter]
    fn action_bounds(&self) -> ([f64; 4], [f64; 4]) {
        let b = self.env.bounds();
        (b.lo, b.hi)
    }

    fn reset(&mut self) -> PyResult<Vec<f64>> {
        self.env.reset().map_err(to_py)
    }

    /// Returns (observation, reward, terminated, truncated).
    fn step(&mut self, action: Vec<f64>) -> PyResult<(Vec<f64>, f64, bool, bool)> {
        let s = self.env.step(action4(action)?).map_err(to_py)?;
        Ok((s.observation, s.reward, s.terminated, s.truncated))
    }

    /// Return of the myopic scripted controller, for score normalization.
    fn scripted_return(&self) -> f64 {
        ToyEnv::scripted_return(&self.config)
    }

    /// Return of uniformly random actions under the given seed.
    fn random_return(&self, seed: u64) -> f64 {
        ToyEnv::random_return(&self.config, seed)
    }
}

fn train_config(algo: &str, hidden: Vec<usize>, seed: u64) -> PyResult<TrainConfig> {
    let algo = match algo {
        "td3" => Algo::Td3,
        "sac" => Algo::Sac,
        other => return Err(PyValueError::new_err(format!("unknown algo '{other}'"))),
    };
    Ok(TrainConfig {
        algo,
        td3: Td3Config {
            hidden: hidden.clone(),
            ..Td3Config::default()
        },
        sac: SacConfig {
            hidden,
            ..SacConfig::default()
        },
        seed,
        ..TrainConfig::default()
    })
}

/// A trained policy restored from a checkpoint.
#[pyclass(name = "Agent")]
struct PyAgent {
    agent: AgentKind,
    obs_dim: usize,
}

#[pymethods]
impl PyAgent {
    /// Loads a checkpoint file written by training.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let ckpt = Checkpoint::load(std::path::Path::new(path)).map_err(to_py)?;
        PyAgent::from_ckpt(&ckpt)
    }

    #[getter]
    fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    #[getter]
    fn algo(&self) -> &'static str {
        self.agent.algo().name()
    }

    /// Deterministic action for an observation.
    fn act(&self, observation: Vec<f64>) -> PyResult<[f64; 4]> {
        if observation.len() != self.obs_dim {
            return Err(PyValueError::new_err(format!(
                "observation has {} entries, policy expects {}",
                observation.len(),
                self.obs_dim
            )));
        }
        Ok(self.agent.act_deterministic(&observation))
    }
}

impl PyAgent {
    fn from_ckpt(ckpt: &Checkpoint) -> PyResult<Self> {
        let hidden: Vec<usize> = ckpt
            .nets
            .first()
            .map(|n| n.spec.sizes[1..n.spec.sizes.len() - 1].to_vec())
            .unwrap_or_default();
        let config = train_config(ckpt.algo.name(), hidden, 0)?;
        let agent = AgentKind::from_checkpoint(ckpt, &config).map_err(to_py)?;
        Ok(PyAgent {
            obs_dim: ckpt.obs_dim,
            agent,
        })
    }
}

/// Trains an agent on the surrogate environment and writes a checkpoint.
/// Returns (env_steps, final_eval_return, stopped_early).
#[pyfunction]
#[pyo3(signature = (checkpoint_path, algo="td3", total_steps=5000, warmup_steps=500,
                    hidden=vec![32, 32], seed=0, n_obs=8, target_return=None))]
#[allow(clippy::too_many_arguments)]
fn train_toy(
    checkpoint_path: &str,
    algo: &str,
    total_steps: usize,
    warmup_steps: usize,
    hidden: Vec<usize>,
    seed: u64,
    n_obs: usize,
    target_return: Option<f64>,
) -> PyResult<(u64, f64, bool)> {
    let config = TrainConfig {
        total_steps,
        warmup_steps,
        eval_every: Some((total_steps / 10).max(1)),
        target_return,
        ..train_config(algo, hidden, seed)?
    };
    let toy = ToyConfig {
        n_obs,
        ..ToyConfig::default()
    };
    let result = train::train(&config, move |_| {
        Ok(Box::new(ToyEnv::new(toy.clone())) as Box<dyn Environment>)
    })
    .map_err(to_py)?;
    result
        .checkpoint
        .save(std::path::Path::new(checkpoint_path))
        .map_err(to_py)?;
    let last_eval = result.evals.last().map(|&(_, r)| r).unwrap_or(f64::NAN);
    Ok((result.env_steps, last_eval, result.stopped_early))
}

/// Sparse sensor placement: SVD modes + pivoted QR on a snapshot matrix
/// (rows = locations, columns = snapshots). Returns (indices, error).
#[pyfunction]
#[pyo3(signature = (snapshots, r, center=false))]
fn optimal_sensors(snapshots: Vec<Vec<f64>>, r: usize, center: bool) -> PyResult<(Vec<usize>, f64)> {
    let n = snapshots.len();
    let m = snapshots.first().map_or(0, |row| row.len());
    if n == 0 || m == 0 || snapshots.iter().any(|row| row.len() != m) {
        return Err(PyValueError::new_err("snapshots must be a non-empty rectangular matrix"));
    }
    let data = nalgebra::DMatrix::from_fn(n, m, |i, j| snapshots[i][j]);
    let coords = (0..n).map(|i| [i as f64, 0.0]).collect();
    let x = SnapshotMatrix::new(data, coords, (0..m).map(|j| j as f64).collect()).map_err(to_py)?;
    let sel = select_sensors(&x, r, center).map_err(to_py)?;
    Ok((sel.indices, sel.reconstruction_rms))
}

/// Clipped double-Q TD3 backup.
#[pyfunction]
fn td3_target(r: f64, gamma: f64, q1: f64, q2: f64, terminated: bool) -> f64 {
    inletctl::rl::td3::td3_target(r, gamma, q1, q2, terminated)
}

/// Entropy-regularized SAC backup.
#[pyfunction]
fn sac_target(r: f64, gamma: f64, min_q: f64, alpha: f64, log_pi: f64, terminated: bool) -> f64 {
    inletctl::rl::sac::sac_target(r, gamma, min_q, alpha, log_pi, terminated)
}

/// Isentropic-vortex L2 density error of the DG solver, for quick solver
/// verification from Python.
#[pyfunction]
fn vortex_l2_error(order: usize, n: usize, t_end: f64) -> PyResult<f64> {
    inletctl::verification::vortex_l2_error(order, n, t_end).map_err(to_py)
}

#[pymodule]
fn inletctl_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyToyEnv>()?;
    m.add_class::<PyAgent>()?;
    m.add_function(wrap_pyfunction!(train_toy, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_sensors, m)?)?;
    m.add_function(wrap_pyfunction!(td3_target, m)?)?;
    m.add_function(wrap_pyfunction!(sac_target, m)?)?;
    m.add_function(wrap_pyfunction!(vortex_l2_error, m)?)?;
    Ok(())
}

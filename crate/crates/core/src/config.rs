//! Run configuration (TOML) and the per-run manifest.
//!
//! One config file describes a run; CLI flags override individual keys
//! (flag > config > default). Every command writes `manifest.json` into its
//! output directory before doing any work, then rewrites it with the final
//! status, so a crash still leaves a record of what was attempted.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize, Default, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub case: CaseSection,
    pub env: EnvSection,
    pub train: TrainSection,
    pub toy: ToySection,
    pub sensors: SensorsSection,
    pub convergence: ConvergenceSection,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct CaseSection {
    /// Throttling ratio, percent of the isolator exit blocked.
    pub tr: f64,
    pub order: usize,
    pub base_level: u8,
    pub re_unit: f64,
    /// Convective CFL constant.
    pub cfl: f64,
    /// Simulated duration for `simulate`/`baseline` [s].
    pub duration: f64,
    /// Probe sampling cadence, steps.
    pub sample_every: usize,
    /// Field point-cloud export cadence in samples; 0 disables.
    pub field_export_every: usize,
    /// p2 jump factor over the pre-jump median that counts as unstart.
    pub unstart_threshold: f64,
    /// Full geometry override (polyline, jets, cowl); `tr` still wins for
    /// the throttle ratio.
    pub geometry: Option<crate::inlet::InletGeometry>,
}

impl Default for CaseSection {
    fn default() -> Self {
        CaseSection {
            tr: 34.0,
            order: 4,
            base_level: 0,
            re_unit: 5e6,
            cfl: 0.8,
            duration: 2e-3,
            sample_every: 10,
            field_export_every: 0,
            unstart_threshold: 5.0,
            geometry: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSection {
    pub control_interval: f64,
    pub episode_duration: f64,
    /// Sensor noise intensity delta, percent.
    pub noise_pct: f64,
    pub n_sensors: usize,
    pub seed: u64,
    pub w_p: f64,
    pub w_r: f64,
    pub gamma: f64,
    pub failure_penalty: f64,
    /// Uncontrolled transient simulated before episodes start [s].
    pub warm_start_duration: f64,
    /// Baseline JSON produced by `baseline`; defaults to out-dir lookup.
    pub baseline_path: Option<PathBuf>,
    /// Warm-start snapshot; regenerated when absent.
    pub warm_start_path: Option<PathBuf>,
}

impl Default for EnvSection {
    fn default() -> Self {
        EnvSection {
            control_interval: 20e-6,
            episode_duration: 2e-3,
            noise_pct: 0.0,
            n_sensors: 100,
            seed: 0,
            w_p: 0.005,
            w_r: 0.05,
            gamma: 0.99,
            failure_penalty: -1e4,
            warm_start_duration: 2e-4,
            baseline_path: None,
            warm_start_path: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    /// "td3" or "sac".
    pub algo: String,
    pub total_steps: usize,
    pub warmup_steps: usize,
    pub updates_per_step: usize,
    pub n_envs: usize,
    pub batch: usize,
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub buffer_capacity: usize,
    pub eval_every: Option<usize>,
    pub eval_episodes: usize,
    /// Early-stop evaluation return.
    pub target_return: Option<f64>,
    /// Use the built-in surrogate instead of the CFD environment.
    pub toy_env: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            algo: "td3".into(),
            total_steps: 50_000,
            warmup_steps: 1_000,
            updates_per_step: 1,
            n_envs: 1,
            batch: 256,
            hidden: vec![256, 256],
            lr: 3e-4,
            buffer_capacity: 1_000_000,
            eval_every: Some(1_000),
            eval_episodes: 1,
            target_return: None,
            toy_env: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ToySection {
    pub n_obs: usize,
    pub horizon: usize,
    pub noise_pct: f64,
    pub drift: f64,
    pub decay: f64,
    pub gain: f64,
}

impl Default for ToySection {
    fn default() -> Self {
        ToySection {
            n_obs: 8,
            horizon: 100,
            noise_pct: 0.0,
            drift: 0.2,
            decay: 0.9,
            gain: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SensorsSection {
    pub snapshots: Option<PathBuf>,
    pub coordinates: Option<PathBuf>,
    pub r_list: Vec<usize>,
    pub center: bool,
}

impl Default for SensorsSection {
    fn default() -> Self {
        SensorsSection {
            snapshots: None,
            coordinates: None,
            r_list: vec![10, 15, 20, 50],
            center: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceSection {
    /// "vortex" or "inlet".
    pub mode: String,
    pub orders: Vec<usize>,
    /// Vortex mesh sizes (elements per side).
    pub cells: Vec<usize>,
    pub t_end: f64,
    /// Inlet-mode probe run duration [s].
    pub inlet_duration: f64,
}

impl Default for ConvergenceSection {
    fn default() -> Self {
        ConvergenceSection {
            mode: "vortex".into(),
            orders: vec![3, 4, 5],
            cells: vec![32, 64, 128],
            t_end: 0.02,
            inlet_duration: 5e-5,
        }
    }
}

impl RunConfig {
    /// Reads and parses a TOML config, returning the exact bytes hashed into
    /// the manifest alongside the parsed structure.
    pub fn load(path: &Path) -> Result<(Self, Vec<u8>)> {
        let bytes = std::fs::read(path)?;
        let text = std::str::from_utf8(&bytes)
            .map_err(|_| Error::Config(format!("{}: not valid UTF-8", path.display())))?;
        let config: RunConfig = toml::from_str(text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok((config, bytes))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Written as `manifest.json` before a run starts and finalized when it ends.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<String>,
    /// SHA-256 of the exact config bytes used (serialized defaults when no
    /// file was given).
    pub config_sha256: String,
    pub seed: u64,
    pub code_version: String,
    pub out_dir: String,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
    /// "running", "ok", or "failed".
    pub status: String,
    pub error: Option<String>,
}

impl RunManifest {
    pub fn start(
        command: &str,
        config_path: Option<&Path>,
        config_bytes: &[u8],
        seed: u64,
        out_dir: &Path,
    ) -> Self {
        RunManifest {
            command: command.into(),
            config_path: config_path.map(|p| p.display().to_string()),
            config_sha256: sha256_hex(config_bytes),
            seed,
            code_version: env!("CARGO_PKG_VERSION").into(),
            out_dir: out_dir.display().to_string(),
            started_unix: unix_now(),
            finished_unix: None,
            status: "running".into(),
            error: None,
        }
    }

    pub fn write(&self, out_dir: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(out_dir.join("manifest.json"), json)?;
        Ok(())
    }

    pub fn finish(&mut self, outcome: &Result<()>) {
        self.finished_unix = Some(unix_now());
        match outcome {
            Ok(()) => self.status = "ok".into(),
            Err(e) => {
                self.status = "failed".into();
                self.error = Some(e.to_string());
            }
        }
    }
}

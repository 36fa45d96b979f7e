//! `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored. Unknown keys are errors so a
//! typo cannot silently fall back to a default.

use std::fmt::Write as _;
use std::path::Path;

use lunar_descent_core::extremal::{DatasetConfig, SamplingIntervals};
use lunar_descent_core::guidance::SimConfig;
use lunar_descent_core::mlp::{Optimizer, TrainConfig};
use lunar_descent_core::shooting::HomotopySchedule;
use lunar_descent_core::PhysicalParams;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Row cap for Levenberg–Marquardt training unless configured otherwise.
pub const DEFAULT_MAX_SAMPLES: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub physical: PhysicalParams,
    pub intervals: SamplingIntervals,
    pub grid_step: f64,
    pub tau_max: f64,
    pub stop_radius: f64,
    pub alpha: f64,
    pub homotopy: HomotopySchedule,
    pub max_epochs: usize,
    pub loss_goal: f64,
    pub patience: usize,
    pub split: [f64; 3],
    /// Zero means no cap.
    pub max_samples: usize,
    pub optimizer: String,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub command_period: f64,
    pub stop_altitude: f64,
    pub success_vf: f64,
    pub deadband: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let d = DatasetConfig::default();
        let t = TrainConfig::default();
        let s = SimConfig::default();
        Self {
            physical: PhysicalParams::default(),
            intervals: d.intervals,
            grid_step: d.grid_step,
            tau_max: d.tau_max,
            stop_radius: d.stop_radius,
            alpha: d.alpha,
            homotopy: HomotopySchedule::default(),
            max_epochs: t.max_epochs,
            loss_goal: t.loss_goal,
            patience: t.early_stop_patience,
            split: t.split,
            max_samples: DEFAULT_MAX_SAMPLES,
            optimizer: "lm".into(),
            learning_rate: 1e-3,
            batch_size: 256,
            command_period: s.command_period_s,
            stop_altitude: s.stop_altitude_m,
            success_vf: s.success_vf_mps,
            deadband: 0.0,
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64, CliError> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| CliError::Config(format!("`{key}`: expected a number, got `{v}`")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize, CliError> {
    v.parse::<usize>()
        .map_err(|_| CliError::Config(format!("`{key}`: expected a non-negative integer, got `{v}`")))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut c = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            c.set(key.trim(), value.trim())?;
        }
        c.validate()?;
        Ok(c)
    }

    /// Load from `path`; a missing file yields the defaults and a warning.
    pub fn load(path: Option<&Path>) -> Result<(Self, Option<String>), CliError> {
        let Some(path) = path else {
            return Ok((Self::default(), None));
        };
        match std::fs::read_to_string(path) {
            Ok(text) => Ok((Self::parse(&text)?, None)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok((
                Self::default(),
                Some(format!("config file {} not found; using defaults", path.display())),
            )),
            Err(e) => Err(CliError::Io(format!("reading {}: {e}", path.display()))),
        }
    }

    fn set(&mut self, key: &str, v: &str) -> Result<(), CliError> {
        let f = || parse_f64(key, v);
        match key {
            "R0" => self.physical.r0 = f()?,
            "mu" => self.physical.mu = f()?,
            "Isp" => self.physical.isp = f()?,
            "ge" => self.physical.ge = f()?,
            "Tm" => self.physical.thrust_max = f()?,
            "m0" => self.physical.m0 = f()?,
            "m_dry" => self.physical.m_dry = f()?,
            "p_r.min" => self.intervals.p_r.0 = f()?,
            "p_r.max" => self.intervals.p_r.1 = f()?,
            "p_v.min" => self.intervals.p_v.0 = f()?,
            "p_v.max" => self.intervals.p_v.1 = f()?,
            "p_theta.min" => self.intervals.p_theta.0 = f()?,
            "p_theta.max" => self.intervals.p_theta.1 = f()?,
            "p_omega.min" => self.intervals.p_omega.0 = f()?,
            "p_omega.max" => self.intervals.p_omega.1 = f()?,
            "grid_step" => self.grid_step = f()?,
            "tau_max" => self.tau_max = f()?,
            "stop_radius" => self.stop_radius = f()?,
            "alpha" => self.alpha = f()?,
            "delta.start" => self.homotopy.start = f()?,
            "delta.end" => self.homotopy.end = f()?,
            "delta.factor" => self.homotopy.factor = f()?,
            "train.max_epochs" => self.max_epochs = parse_usize(key, v)?,
            "train.loss_goal" => self.loss_goal = f()?,
            "train.patience" => self.patience = parse_usize(key, v)?,
            "train.split" => {
                let parts: Vec<f64> = v.split(',').map(|p| parse_f64(key, p.trim())).collect::<Result<_, _>>()?;
                self.split = parts
                    .try_into()
                    .map_err(|_| CliError::Config("`train.split`: expected three fractions".into()))?;
            }
            "train.max_samples" => self.max_samples = parse_usize(key, v)?,
            "train.optimizer" => self.optimizer = v.to_string(),
            "train.learning_rate" => self.learning_rate = f()?,
            "train.batch_size" => self.batch_size = parse_usize(key, v)?,
            "sim.command_period" => self.command_period = f()?,
            "sim.stop_altitude" => self.stop_altitude = f()?,
            "sim.success_vf" => self.success_vf = f()?,
            "sim.deadband" => self.deadband = f()?,
            _ => return Err(CliError::Config(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.physical.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.intervals.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.homotopy.deltas().map_err(|e| CliError::Config(e.to_string()))?;
        self.train_config(0).validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.sim_config(None).validate().map_err(|e| CliError::Config(e.to_string()))?;
        if !(self.grid_step > 0.0 && self.tau_max > 0.0 && self.stop_radius > 1.0 && self.alpha > 0.0) {
            return Err(CliError::Config("grid_step, tau_max, alpha must be positive and stop_radius above 1".into()));
        }
        if self.deadband < 0.0 {
            return Err(CliError::Config("sim.deadband must be non-negative".into()));
        }
        Ok(())
    }

    pub fn dataset_config(&self) -> DatasetConfig {
        DatasetConfig {
            intervals: self.intervals,
            grid_step: self.grid_step,
            tau_max: self.tau_max,
            stop_radius: self.stop_radius,
            alpha: self.alpha,
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let optimizer = if self.optimizer == "adam" {
            Optimizer::Adam {
                learning_rate: self.learning_rate,
                batch_size: self.batch_size,
            }
        } else {
            Optimizer::default()
        };
        TrainConfig {
            max_epochs: self.max_epochs,
            loss_goal: self.loss_goal,
            split: self.split,
            early_stop_patience: self.patience,
            seed,
            optimizer,
            max_samples: (self.max_samples > 0).then_some(self.max_samples),
        }
    }

    pub fn sim_config(&self, horizon_s: Option<f64>) -> SimConfig {
        SimConfig {
            command_period_s: self.command_period,
            stop_altitude_m: self.stop_altitude,
            success_vf_mps: self.success_vf,
            horizon_s,
            ..SimConfig::default()
        }
    }

    /// Canonical `key = value` rendering; parses back to the same values.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let p = &self.physical;
        let iv = &self.intervals;
        let pairs: [(&str, String); 32] = [
            ("R0", p.r0.to_string()),
            ("mu", p.mu.to_string()),
            ("Isp", p.isp.to_string()),
            ("ge", p.ge.to_string()),
            ("Tm", p.thrust_max.to_string()),
            ("m0", p.m0.to_string()),
            ("m_dry", p.m_dry.to_string()),
            ("p_r.min", iv.p_r.0.to_string()),
            ("p_r.max", iv.p_r.1.to_string()),
            ("p_v.min", iv.p_v.0.to_string()),
            ("p_v.max", iv.p_v.1.to_string()),
            ("p_theta.min", iv.p_theta.0.to_string()),
            ("p_theta.max", iv.p_theta.1.to_string()),
            ("p_omega.min", iv.p_omega.0.to_string()),
            ("p_omega.max", iv.p_omega.1.to_string()),
            ("grid_step", self.grid_step.to_string()),
            ("tau_max", self.tau_max.to_string()),
            ("stop_radius", self.stop_radius.to_string()),
            ("alpha", self.alpha.to_string()),
            ("delta.start", self.homotopy.start.to_string()),
            ("delta.end", self.homotopy.end.to_string()),
            ("delta.factor", self.homotopy.factor.to_string()),
            ("train.max_epochs", self.max_epochs.to_string()),
            ("train.loss_goal", self.loss_goal.to_string()),
            ("train.patience", self.patience.to_string()),
            ("train.split", format!("{},{},{}", self.split[0], self.split[1], self.split[2])),
            ("train.max_samples", self.max_samples.to_string()),
            ("train.optimizer", self.optimizer.clone()),
            ("train.learning_rate", self.learning_rate.to_string()),
            ("train.batch_size", self.batch_size.to_string()),
            ("sim.command_period", self.command_period.to_string()),
            ("sim.stop_altitude", self.stop_altitude.to_string()),
        ];
        for (k, v) in pairs {
            let _ = writeln!(s, "{k} = {v}");
        }
        let _ = writeln!(s, "sim.success_vf = {}", self.success_vf);
        let _ = writeln!(s, "sim.deadband = {}", self.deadband);
        s
    }
}

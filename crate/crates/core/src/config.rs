//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown or repeated
//! keys are errors. [`RunConfig::to_text`] prints every key in a fixed order,
//! so parsing and printing round-trips.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::bench::BenchOptions;
use crate::degradation::{KernelSpec, NoiseSpec, Scenario};
use crate::denoiser::TrainOptions;
use crate::error::{Error, Result};
use crate::solver::{BracketRule, InitMode, SolverOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub solver: SolverOptions,
    pub noise: NoiseSpec,
    pub kernel: KernelSpec,
    /// Strength of the baseline denoiser.
    pub strength: f64,
    pub train: TrainOptions,
    pub bench: BenchOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            noise: NoiseSpec {
                sigma: Scenario::A.sigma(),
                seed: 0,
            },
            kernel: Scenario::A.kernel_spec(),
            strength: 1.0,
            train: TrainOptions::default(),
            bench: BenchOptions::default(),
        }
    }
}

const KEYS: &[&str] = &[
    "bracket_a",
    "bracket_b",
    "epsilon",
    "zeta",
    "max_iters",
    "init",
    "bracket_rule",
    "kernel",
    "sigma",
    "seed",
    "strength",
    "learning_rate",
    "batch_size",
    "epochs",
    "steps_per_epoch",
    "patch_bands",
    "patch_size",
    "noise_min",
    "noise_max",
    "train_seed",
    "channels",
    "blocks",
    "threads",
    "scenarios",
    "bands",
    "rows",
    "cols",
    "trials",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for '{key}'")))
}

fn init_name(m: InitMode) -> &'static str {
    match m {
        InitMode::Observation => "observation",
        InitMode::Adjoint => "adjoint",
        InitMode::Zeros => "zeros",
    }
}

fn rule_name(r: BracketRule) -> &'static str {
    match r {
        BracketRule::Minimizing => "minimizing",
        BracketRule::Printed => "printed",
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "bracket_a" => self.solver.bracket_a = parse(key, value)?,
            "bracket_b" => self.solver.bracket_b = parse(key, value)?,
            "epsilon" => self.solver.epsilon = parse(key, value)?,
            "zeta" => self.solver.zeta = parse(key, value)?,
            "max_iters" => self.solver.max_iters = parse(key, value)?,
            "init" => {
                self.solver.init = match value {
                    "observation" => InitMode::Observation,
                    "adjoint" => InitMode::Adjoint,
                    "zeros" => InitMode::Zeros,
                    _ => return Err(Error::Config(format!("invalid init mode '{value}'"))),
                }
            }
            "bracket_rule" => {
                self.solver.bracket_rule = match value {
                    "minimizing" => BracketRule::Minimizing,
                    "printed" => BracketRule::Printed,
                    _ => return Err(Error::Config(format!("invalid bracket rule '{value}'"))),
                }
            }
            "kernel" => {
                self.kernel = value
                    .parse()
                    .map_err(|e: Error| Error::Config(e.to_string()))?
            }
            "sigma" => self.noise.sigma = parse(key, value)?,
            "seed" => self.noise.seed = parse(key, value)?,
            "strength" => self.strength = parse(key, value)?,
            "learning_rate" => self.train.learning_rate = parse(key, value)?,
            "batch_size" => self.train.batch_size = parse(key, value)?,
            "epochs" => self.train.epochs = parse(key, value)?,
            "steps_per_epoch" => self.train.steps_per_epoch = parse(key, value)?,
            "patch_bands" => self.train.patch_bands = parse(key, value)?,
            "patch_size" => self.train.patch_size = parse(key, value)?,
            "noise_min" => self.train.noise_range.0 = parse(key, value)?,
            "noise_max" => self.train.noise_range.1 = parse(key, value)?,
            "train_seed" => self.train.seed = parse(key, value)?,
            "channels" => self.train.channels = parse(key, value)?,
            "blocks" => self.train.num_blocks = parse(key, value)?,
            "threads" => self.train.threads = parse(key, value)?,
            "scenarios" => {
                self.bench.scenarios = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(Scenario::from_str)
                    .collect::<Result<_>>()
                    .map_err(|e| Error::Config(e.to_string()))?
            }
            "bands" => self.bench.bands = parse(key, value)?,
            "rows" => self.bench.rows = parse(key, value)?,
            "cols" => self.bench.cols = parse(key, value)?,
            "trials" => self.bench.trials = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(Error::Config(format!(
                    "line {}: unknown key '{key}'",
                    n + 1
                )));
            }
            if seen.contains(&key) {
                return Err(Error::Config(format!(
                    "line {}: duplicate key '{key}'",
                    n + 1
                )));
            }
            seen.push(key);
            cfg.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let s = &self.solver;
        let t = &self.train;
        let b = &self.bench;
        let scenarios: Vec<String> = b.scenarios.iter().map(|s| s.to_string()).collect();
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("bracket_a", s.bracket_a.to_string());
        kv("bracket_b", s.bracket_b.to_string());
        kv("epsilon", s.epsilon.to_string());
        kv("zeta", s.zeta.to_string());
        kv("max_iters", s.max_iters.to_string());
        kv("init", init_name(s.init).into());
        kv("bracket_rule", rule_name(s.bracket_rule).into());
        kv("kernel", self.kernel.to_string());
        kv("sigma", self.noise.sigma.to_string());
        kv("seed", self.noise.seed.to_string());
        kv("strength", self.strength.to_string());
        kv("learning_rate", t.learning_rate.to_string());
        kv("batch_size", t.batch_size.to_string());
        kv("epochs", t.epochs.to_string());
        kv("steps_per_epoch", t.steps_per_epoch.to_string());
        kv("patch_bands", t.patch_bands.to_string());
        kv("patch_size", t.patch_size.to_string());
        kv("noise_min", t.noise_range.0.to_string());
        kv("noise_max", t.noise_range.1.to_string());
        kv("train_seed", t.seed.to_string());
        kv("channels", t.channels.to_string());
        kv("blocks", t.num_blocks.to_string());
        kv("threads", t.threads.to_string());
        kv("scenarios", scenarios.join(","));
        kv("bands", b.bands.to_string());
        kv("rows", b.rows.to_string());
        kv("cols", b.cols.to_string());
        kv("trials", b.trials.to_string());
        out
    }
}

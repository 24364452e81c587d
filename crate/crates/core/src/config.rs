//! `key=value` run configuration.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::DataNorm;
use crate::prior::GridParams;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("config line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("invalid value for `{key}`: {msg}")]
    Value { key: String, msg: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("cannot read config {path}: {msg}")]
    Io { path: String, msg: String },
}

/// Where the normal histograms are collected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorMode {
    /// Lattice of cubes of side `cell_size`.
    #[default]
    Local,
    /// One histogram pair per class for the whole mesh.
    Global,
}

impl FromStr for PriorMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "local" => Ok(PriorMode::Local),
            "global" => Ok(PriorMode::Global),
            other => Err(format!("unknown prior `{other}` (local|global)")),
        }
    }
}

impl std::fmt::Display for PriorMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PriorMode::Local => "local",
            PriorMode::Global => "global",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Weight of the normal prior.
    pub mu1: f64,
    /// Weight of the normal-discontinuity term.
    pub mu2: f64,
    /// Weight of the Potts smoothness term.
    pub mu3: f64,
    /// Potts weight of the coarse stage; `None` follows `mu3`.
    pub coarse_smoothing: Option<f64>,
    pub cell_size: f64,
    pub bins_azim: usize,
    pub bins_incl: usize,
    pub data_norm: DataNorm,
    pub area_weighted: bool,
    pub prior: PriorMode,
    pub classes: Vec<String>,
    pub seed: u64,
    /// Worker threads; 0 = all cores, 1 = sequential.
    pub jobs: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            mu1: 0.2,
            mu2: 0.2,
            mu3: 1.0,
            coarse_smoothing: None,
            cell_size: 1.0,
            bins_azim: 16,
            bins_incl: 8,
            data_norm: DataNorm::Normalized,
            area_weighted: false,
            prior: PriorMode::Local,
            classes: vec!["ground".into(), "wall".into()],
            seed: 0,
            jobs: 0,
        }
    }
}

pub const KEYS: &[&str] = &[
    "mu1",
    "mu2",
    "mu3",
    "coarse_smoothing",
    "cell_size",
    "bins_azim",
    "bins_incl",
    "data_norm",
    "area_weighted",
    "prior",
    "classes",
    "seed",
    "jobs",
];

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse().map_err(|_| ConfigError::Value {
        key: key.into(),
        msg: format!("cannot parse `{v}`"),
    })
}

impl PipelineConfig {
    pub fn coarse_weight(&self) -> f64 {
        self.coarse_smoothing.unwrap_or(self.mu3)
    }

    pub fn grid_params(&self) -> GridParams {
        GridParams {
            cell_size: self.cell_size,
            bins_azim: self.bins_azim,
            bins_incl: self.bins_incl,
            area_weighted: self.area_weighted,
        }
    }

    /// Without the normal prior the two-stage scheme reduces to a single
    /// solve of the remaining terms.
    pub fn is_baseline(&self) -> bool {
        self.mu1 == 0.0
    }

    /// Sets one key; the value is validated.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        let bad = |msg: &str| ConfigError::Value {
            key: key.into(),
            msg: msg.into(),
        };
        match key {
            "mu1" | "mu2" | "mu3" | "coarse_smoothing" => {
                let v: f64 = parse_num(key, value)?;
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(bad("weights must be finite and non-negative"));
                }
                match key {
                    "mu1" => self.mu1 = v,
                    "mu2" => self.mu2 = v,
                    "mu3" => self.mu3 = v,
                    _ => self.coarse_smoothing = Some(v),
                }
            }
            "cell_size" => {
                let v: f64 = parse_num(key, value)?;
                if !(v > 0.0 && v.is_finite()) {
                    return Err(bad("cell size must be positive"));
                }
                self.cell_size = v;
            }
            "bins_azim" | "bins_incl" => {
                let v: usize = parse_num(key, value)?;
                if v == 0 || v >= 1000 {
                    return Err(bad("bin count must be in 1..1000"));
                }
                if key == "bins_azim" {
                    self.bins_azim = v;
                } else {
                    self.bins_incl = v;
                }
            }
            "data_norm" => self.data_norm = value.parse().map_err(|m: String| bad(&m))?,
            "area_weighted" => self.area_weighted = parse_num(key, value)?,
            "prior" => self.prior = value.parse().map_err(|m: String| bad(&m))?,
            "classes" => {
                let names: Vec<String> = value.split(',').map(|s| s.trim().to_string()).collect();
                crate::mesh::ClassSet::new(names.clone()).map_err(|e| bad(&e.to_string()))?;
                self.classes = names;
            }
            "seed" => self.seed = parse_num(key, value)?,
            "jobs" => self.jobs = parse_num(key, value)?,
            other => return Err(ConfigError::UnknownKey(other.into())),
        }
        Ok(())
    }

    /// Applies `key=value` lines on top of `self`. `#` starts a comment.
    pub fn apply_str(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Line {
                line: i + 1,
                msg: format!("expected key=value, got `{line}`"),
            })?;
            self.set(k.trim(), v).map_err(|e| ConfigError::Line {
                line: i + 1,
                msg: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = PipelineConfig::default();
        cfg.apply_str(text)?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        Self::parse(&text)
    }

    /// Every key with its resolved value; parses back to an equal config.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mu1={}", self.mu1);
        let _ = writeln!(s, "mu2={}", self.mu2);
        let _ = writeln!(s, "mu3={}", self.mu3);
        if let Some(c) = self.coarse_smoothing {
            let _ = writeln!(s, "coarse_smoothing={c}");
        }
        let _ = writeln!(s, "cell_size={}", self.cell_size);
        let _ = writeln!(s, "bins_azim={}", self.bins_azim);
        let _ = writeln!(s, "bins_incl={}", self.bins_incl);
        let _ = writeln!(s, "data_norm={}", self.data_norm);
        let _ = writeln!(s, "area_weighted={}", self.area_weighted);
        let _ = writeln!(s, "prior={}", self.prior);
        let _ = writeln!(s, "classes={}", self.classes.join(","));
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "jobs={}", self.jobs);
        s
    }
}

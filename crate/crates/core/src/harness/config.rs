//! Experiment configuration.
//!
//! The file format is flat `key = value` text grouped under `[section]`
//! headers, read with the `rust-ini` crate. Every key is optional. Keys are
//! addressed as `section.key` once flattened; [`ExperimentConfig::to_pairs`]
//! produces that flattened view in a fixed order, and it is what every
//! output CSV carries as `#` header lines.
//!
//! ```text
//! [data]
//! k = 4
//! dim = 2
//! n_train = 2000
//! n_test = 1000
//! separation = 4
//! sigma = 1
//! seed = 0
//!
//! [noise]
//! # none | symmetric | circular | instance | open_set
//! kind = symmetric
//! rate = 0.4
//!
//! [aux]
//! # open_ring | open_uniform | closed_same_mixture | mix(0.5)
//! kind = open_ring
//! size = 10000
//! mode = dynamic_per_iteration
//!
//! [train]
//! regularizer = odnl
//! eta = 1
//!
//! [run]
//! seeds = 0,1,2,3,4
//! out_dir = runs
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::Ini;

use super::data::{BlobSpec, OpenSetKind};
use crate::error::{LabError, Result};
use crate::training::{AuxLabelMode, Regularizer, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct DataSpec {
    pub blobs: BlobSpec,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    /// Use these datasets instead of generating blobs.
    pub train_file: Option<PathBuf>,
    pub test_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    None,
    Symmetric,
    Circular,
    InstanceDependent,
    OpenSet,
}

impl NoiseKind {
    const ALL: [NoiseKind; 5] = [
        NoiseKind::None,
        NoiseKind::Symmetric,
        NoiseKind::Circular,
        NoiseKind::InstanceDependent,
        NoiseKind::OpenSet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::None => "none",
            NoiseKind::Symmetric => "symmetric",
            NoiseKind::Circular => "circular",
            NoiseKind::InstanceDependent => "instance",
            NoiseKind::OpenSet => "open_set",
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseKind {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|n| n.name() == s)
            .ok_or_else(|| LabError::Parse(format!("unknown noise kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub rate: f64,
    /// Epochs of clean training for the weak model behind instance noise.
    pub weak_epochs: usize,
}

/// Where auxiliary instances come from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AuxKind {
    Open(OpenSetKind),
    ClosedSameMixture,
    /// Convex mix of the ring pool with closed-set partners.
    Mix(f64),
}

impl fmt::Display for AuxKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AuxKind::Open(OpenSetKind::Ring) => f.write_str("open_ring"),
            AuxKind::Open(OpenSetKind::Uniform) => f.write_str("open_uniform"),
            AuxKind::ClosedSameMixture => f.write_str("closed_same_mixture"),
            AuxKind::Mix(alpha) => write!(f, "mix({alpha})"),
        }
    }
}

impl FromStr for AuxKind {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        if s == "closed_same_mixture" || s == "closed" {
            return Ok(AuxKind::ClosedSameMixture);
        }
        if let Some(inner) = s.strip_prefix("mix(").and_then(|r| r.strip_suffix(')')) {
            let alpha: f64 = parse_value("aux.kind", inner.trim())?;
            if !(0.0..=1.0).contains(&alpha) {
                return Err(LabError::config(format!("mix α = {alpha} outside [0, 1]")));
            }
            return Ok(AuxKind::Mix(alpha));
        }
        s.parse::<OpenSetKind>()
            .map(AuxKind::Open)
            .map_err(|_| LabError::Parse(format!("unknown auxiliary kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuxSpec {
    pub kind: AuxKind,
    pub size: usize,
    pub mode: AuxLabelMode,
    /// Load the pool from CSV instead of generating it.
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OodSpec {
    pub pools: Vec<OpenSetKind>,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandscapeSpec {
    pub enabled: bool,
    pub resolution: usize,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataSpec,
    pub noise: NoiseSpec,
    pub aux: AuxSpec,
    /// `seed` and `aux_label_mode` are overwritten per replicate from
    /// `seeds` and `aux.mode`.
    pub train: TrainConfig,
    pub ood: OodSpec,
    pub landscape: LandscapeSpec,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: DataSpec {
                blobs: BlobSpec {
                    k: 4,
                    dim: 2,
                    separation: 4.0,
                    sigma: 1.0,
                },
                n_train: 2000,
                n_test: 1000,
                seed: 0,
                train_file: None,
                test_file: None,
            },
            noise: NoiseSpec {
                kind: NoiseKind::Symmetric,
                rate: 0.4,
                weak_epochs: 5,
            },
            aux: AuxSpec {
                kind: AuxKind::Open(OpenSetKind::Ring),
                size: 10000,
                mode: AuxLabelMode::DynamicPerIteration,
                file: None,
            },
            train: TrainConfig::default(),
            ood: OodSpec {
                pools: vec![OpenSetKind::Ring, OpenSetKind::Uniform],
                size: 1000,
            },
            landscape: LandscapeSpec {
                enabled: false,
                resolution: 21,
                radius: 1.0,
            },
            seeds: vec![0, 1, 2, 3, 4],
            out_dir: PathBuf::from("runs"),
        }
    }
}

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| LabError::Parse(format!("{key}: cannot parse {raw:?}")))
}

fn parse_list<T: FromStr>(key: &str, raw: &str) -> Result<Vec<T>> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

fn join<T: ToString>(values: &[T]) -> String {
    values
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

fn optional_path(raw: &str) -> Option<PathBuf> {
    (!raw.is_empty()).then(|| PathBuf::from(raw))
}

fn path_text(p: &Option<PathBuf>) -> String {
    p.as_ref()
        .map(|p| p.display().to_string())
        .unwrap_or_default()
}

impl ExperimentConfig {
    /// Parses config text; unknown keys are errors so typos do not silently
    /// fall back to defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let ini = Ini::load_from_str_noescape(text)
            .map_err(|e| LabError::Parse(format!("config: {e}")))?;
        let mut config = Self::default();
        for (section, props) in &ini {
            for (key, value) in props.iter() {
                let full = match section {
                    Some(s) => format!("{s}.{key}"),
                    None => key.to_string(),
                };
                config.set(&full, value.trim())?;
            }
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Sets one flattened key.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let t = &mut self.train;
        match key {
            "data.k" => self.data.blobs.k = parse_value(key, raw)?,
            "data.dim" => self.data.blobs.dim = parse_value(key, raw)?,
            "data.separation" => self.data.blobs.separation = parse_value(key, raw)?,
            "data.sigma" => self.data.blobs.sigma = parse_value(key, raw)?,
            "data.n_train" => self.data.n_train = parse_value(key, raw)?,
            "data.n_test" => self.data.n_test = parse_value(key, raw)?,
            "data.seed" => self.data.seed = parse_value(key, raw)?,
            "data.train_file" => self.data.train_file = optional_path(raw),
            "data.test_file" => self.data.test_file = optional_path(raw),
            "noise.kind" => self.noise.kind = raw.parse()?,
            "noise.rate" => self.noise.rate = parse_value(key, raw)?,
            "noise.weak_epochs" => self.noise.weak_epochs = parse_value(key, raw)?,
            "aux.kind" => self.aux.kind = raw.parse()?,
            "aux.size" => self.aux.size = parse_value(key, raw)?,
            "aux.mode" => self.aux.mode = raw.parse()?,
            "aux.file" => self.aux.file = optional_path(raw),
            "train.hidden" => t.hidden = parse_list(key, raw)?,
            "train.regularizer" => t.regularizer = raw.parse::<Regularizer>()?,
            "train.compose_odnl" => t.compose_odnl = parse_value(key, raw)?,
            "train.eta" => t.eta = parse_value(key, raw)?,
            "train.lambda_oe" => t.lambda_oe = parse_value(key, raw)?,
            "train.sigma_sln" => t.sigma_sln = parse_value(key, raw)?,
            "train.label_smoothing" => t.label_smoothing = parse_value(key, raw)?,
            "train.epochs" => t.epochs = parse_value(key, raw)?,
            "train.train_batch" => t.train_batch = parse_value(key, raw)?,
            "train.aux_batch" => t.aux_batch = parse_value(key, raw)?,
            "train.lr" => t.lr.initial = parse_value(key, raw)?,
            "train.lr_decay_epochs" => t.lr.decay_epochs = parse_list(key, raw)?,
            "train.lr_decay_factor" => t.lr.factor = parse_value(key, raw)?,
            "train.momentum" => t.momentum = parse_value(key, raw)?,
            "train.weight_decay" => t.weight_decay = parse_value(key, raw)?,
            "train.forget_rate" => t.coteach_forget_rate = parse_value(key, raw)?,
            "train.warmup" => t.coteach_warmup = parse_value(key, raw)?,
            "ood.pools" => {
                self.ood.pools = raw
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty() && *s != "none")
                    .map(str::parse)
                    .collect::<Result<_>>()?
            }
            "ood.size" => self.ood.size = parse_value(key, raw)?,
            "landscape.enabled" => self.landscape.enabled = parse_value(key, raw)?,
            "landscape.resolution" => self.landscape.resolution = parse_value(key, raw)?,
            "landscape.radius" => self.landscape.radius = parse_value(key, raw)?,
            "run.seeds" => self.seeds = parse_list(key, raw)?,
            "run.out_dir" => self.out_dir = PathBuf::from(raw),
            _ => return Err(LabError::config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Fully resolved, flattened configuration in a stable order.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let t = &self.train;
        let b = &self.data.blobs;
        let ood: Vec<String> = self
            .ood
            .pools
            .iter()
            .map(|p| AuxKind::Open(*p).to_string())
            .collect();
        let pairs: Vec<(&str, String)> = vec![
            ("data.k", b.k.to_string()),
            ("data.dim", b.dim.to_string()),
            ("data.separation", b.separation.to_string()),
            ("data.sigma", b.sigma.to_string()),
            ("data.n_train", self.data.n_train.to_string()),
            ("data.n_test", self.data.n_test.to_string()),
            ("data.seed", self.data.seed.to_string()),
            ("data.train_file", path_text(&self.data.train_file)),
            ("data.test_file", path_text(&self.data.test_file)),
            ("noise.kind", self.noise.kind.to_string()),
            ("noise.rate", self.noise.rate.to_string()),
            ("noise.weak_epochs", self.noise.weak_epochs.to_string()),
            ("aux.kind", self.aux.kind.to_string()),
            ("aux.size", self.aux.size.to_string()),
            ("aux.mode", self.aux.mode.to_string()),
            ("aux.file", path_text(&self.aux.file)),
            ("train.hidden", join(&t.hidden)),
            ("train.regularizer", t.regularizer.to_string()),
            ("train.compose_odnl", t.compose_odnl.to_string()),
            ("train.eta", t.eta.to_string()),
            ("train.lambda_oe", t.lambda_oe.to_string()),
            ("train.sigma_sln", t.sigma_sln.to_string()),
            ("train.label_smoothing", t.label_smoothing.to_string()),
            ("train.epochs", t.epochs.to_string()),
            ("train.train_batch", t.train_batch.to_string()),
            ("train.aux_batch", t.aux_batch.to_string()),
            ("train.lr", t.lr.initial.to_string()),
            ("train.lr_decay_epochs", join(&t.lr.decay_epochs)),
            ("train.lr_decay_factor", t.lr.factor.to_string()),
            ("train.momentum", t.momentum.to_string()),
            ("train.weight_decay", t.weight_decay.to_string()),
            ("train.forget_rate", t.coteach_forget_rate.to_string()),
            ("train.warmup", t.coteach_warmup.to_string()),
            ("ood.pools", ood.join(",")),
            ("ood.size", self.ood.size.to_string()),
            ("landscape.enabled", self.landscape.enabled.to_string()),
            (
                "landscape.resolution",
                self.landscape.resolution.to_string(),
            ),
            ("landscape.radius", self.landscape.radius.to_string()),
            ("run.seeds", join(&self.seeds)),
            ("run.out_dir", self.out_dir.display().to_string()),
        ];
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    /// Config file text that parses back to `self`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut current = String::new();
        for (key, value) in self.to_pairs() {
            let (section, name) = key.split_once('.').expect("keys are sectioned");
            if section != current {
                if !current.is_empty() {
                    out.push('\n');
                }
                out.push_str(&format!("[{section}]\n"));
                current = section.to_string();
            }
            out.push_str(&format!("{name} = {value}\n"));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(LabError::config("at least one replicate seed is required"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(LabError::config("replicate seeds must be distinct"));
        }
        for path in [&self.data.train_file, &self.data.test_file, &self.aux.file]
            .into_iter()
            .flatten()
        {
            if !path.exists() {
                return Err(LabError::config(format!(
                    "referenced file {} does not exist",
                    path.display()
                )));
            }
        }
        if self.data.train_file.is_none() {
            self.data.blobs.validate()?;
        }
        if !(0.0..=1.0).contains(&self.noise.rate) {
            return Err(LabError::config("noise rate must lie in [0, 1]"));
        }
        if self.aux.size == 0 && self.aux.file.is_none() {
            return Err(LabError::config("aux.size must be positive"));
        }
        if !self.ood.pools.is_empty() && self.ood.size == 0 {
            return Err(LabError::config("ood.size must be positive"));
        }
        Ok(())
    }
}

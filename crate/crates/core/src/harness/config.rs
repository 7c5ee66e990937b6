//! Flat `key = value` experiment configuration.
//!
//! Lines starting with `#` or `;` are comments. Keys are dotted names; an
//! unknown or repeated key is an error. A `preset` line (anywhere in the file)
//! selects the base values, then `phantom.size` rescales the phantom, then the
//! remaining keys override individually.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::denoiser::TrainConfig;
use crate::editing::Method;
use crate::error::{Error, Result};
use crate::phantom::PhantomParams;
use crate::schedule::{NoiseSchedule, SigmaMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// 32x32 phantoms, T = 200.
    Desk200,
    /// 128x128 phantoms, T = 1000 and the published operating points.
    Paper1000,
}

impl Preset {
    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Desk200 => "desk-200",
            Preset::Paper1000 => "paper-1000",
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk-200" => Ok(Preset::Desk200),
            "paper-1000" => Ok(Preset::Paper1000),
            _ => Err(Error::Config(format!(
                "unknown preset `{s}` (expected desk-200 or paper-1000)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DenoiserChoice {
    Analytic,
    Trained(PathBuf),
}

impl FromStr for DenoiserChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "analytic" {
            return Ok(DenoiserChoice::Analytic);
        }
        match s.strip_prefix("trained:") {
            Some(p) if !p.is_empty() => Ok(DenoiserChoice::Trained(PathBuf::from(p))),
            _ => Err(Error::Config(format!(
                "denoiser must be `analytic` or `trained:<path>`, got `{s}`"
            ))),
        }
    }
}

impl std::fmt::Display for DenoiserChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DenoiserChoice::Analytic => f.write_str("analytic"),
            DenoiserChoice::Trained(p) => write!(f, "trained:{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    K,
    U,
    EncodingRatio,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::K => "k",
            SweepAxis::U => "U",
            SweepAxis::EncodingRatio => "encoding_ratio",
        }
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "k" => Ok(SweepAxis::K),
            "U" | "u" => Ok(SweepAxis::U),
            "encoding_ratio" => Ok(SweepAxis::EncodingRatio),
            _ => Err(Error::Config(format!(
                "sweep axis must be k, U or encoding_ratio, got `{s}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub sigma_mode: SigmaMode,
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::linear(self.steps, self.beta_start, self.beta_end, self.sigma_mode)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub schedule: ScheduleConfig,
    pub phantom: PhantomParams,
    pub denoiser: DenoiserChoice,
    pub palette_denoiser: DenoiserChoice,
    pub methods: Vec<Method>,
    pub mededit_k: usize,
    pub mededit_resample: usize,
    pub naive_resample: usize,
    pub sdedit_ratio: f64,
    pub palette_k: usize,
    pub triplets: usize,
    pub gallery: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub healthy_size: usize,
    /// Read the dataset from here instead of generating it in memory.
    pub dataset_dir: Option<PathBuf>,
    pub seeds: Vec<u64>,
    pub train: TrainConfig,
    pub hidden: usize,
    pub embed_dim: usize,
    pub train_palette: bool,
    pub sweep_axis: SweepAxis,
    pub sweep_values: Vec<f64>,
    pub feature_dim: usize,
    pub feature_seed: u64,
    /// Worker cap; 0 uses every available core.
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::preset(Preset::Desk200)
    }
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        let desk = Self {
            preset,
            schedule: ScheduleConfig {
                steps: 200,
                beta_start: 5e-4,
                beta_end: 0.1,
                sigma_mode: SigmaMode::Ddpm,
            },
            phantom: PhantomParams::default(),
            denoiser: DenoiserChoice::Analytic,
            palette_denoiser: DenoiserChoice::Analytic,
            methods: Method::ALL.to_vec(),
            mededit_k: 7,
            mededit_resample: 4,
            naive_resample: 3,
            sdedit_ratio: 0.2,
            palette_k: 7,
            triplets: 200,
            gallery: 4,
            train_size: 400,
            test_size: 50,
            healthy_size: 200,
            dataset_dir: None,
            seeds: vec![0],
            train: TrainConfig::default(),
            hidden: 8,
            embed_dim: 16,
            train_palette: false,
            sweep_axis: SweepAxis::K,
            sweep_values: vec![1.0, 3.0, 7.0, 11.0],
            feature_dim: 64,
            feature_seed: 1234,
            threads: 0,
        };
        match preset {
            Preset::Desk200 => desk,
            Preset::Paper1000 => Self {
                schedule: ScheduleConfig {
                    steps: 1000,
                    beta_start: 1e-4,
                    beta_end: 0.02,
                    sigma_mode: SigmaMode::Ddpm,
                },
                phantom: PhantomParams::scaled(128),
                mededit_k: 25,
                palette_k: 25,
                train_size: 389,
                test_size: 54,
                triplets: 54,
                healthy_size: 200,
                train: TrainConfig {
                    epochs: 1500,
                    ..TrainConfig::default()
                },
                sweep_values: vec![1.0, 9.0, 25.0, 41.0],
                ..desk
            },
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs: Vec<(usize, String, String)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`, got `{line}`", i + 1))
            })?;
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if pairs.iter().any(|(_, seen, _)| *seen == k) {
                return Err(Error::Config(format!("line {}: duplicate key `{k}`", i + 1)));
            }
            pairs.push((i + 1, k, v));
        }
        let preset = match pairs.iter().find(|(_, k, _)| k == "preset") {
            Some((_, _, v)) => v.parse()?,
            None => Preset::Desk200,
        };
        let mut config = Self::preset(preset);
        if let Some((line, _, v)) = pairs.iter().find(|(_, k, _)| k == "phantom.size") {
            let size: usize = parse_value("phantom.size", v).map_err(|e| at_line(*line, e))?;
            config.phantom = PhantomParams::scaled(size);
        }
        for (line, k, v) in &pairs {
            if k == "preset" || k == "phantom.size" {
                continue;
            }
            config.set(k, v).map_err(|e| at_line(*line, e))?;
        }
        config.validate()?;
        Ok(config)
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let p = &mut self.phantom;
        match key {
            "schedule.steps" => self.schedule.steps = parse_value(key, v)?,
            "schedule.beta_start" => self.schedule.beta_start = parse_value(key, v)?,
            "schedule.beta_end" => self.schedule.beta_end = parse_value(key, v)?,
            "schedule.sigma" => {
                self.schedule.sigma_mode = match v {
                    "ddpm" => SigmaMode::Ddpm,
                    "ddim" => SigmaMode::Ddim,
                    _ => return Err(Error::Config(format!("schedule.sigma must be ddpm or ddim, got `{v}`"))),
                }
            }
            "phantom.brain_axis_x" => p.brain_axes.0 = parse_value(key, v)?,
            "phantom.brain_axis_y" => p.brain_axes.1 = parse_value(key, v)?,
            "phantom.brain_jitter" => p.brain_jitter = parse_value(key, v)?,
            "phantom.ventricle_offset" => p.ventricle_offset = parse_value(key, v)?,
            "phantom.ventricle_radius" => p.ventricle_radius = parse_value(key, v)?,
            "phantom.gain" => p.gain = parse_value(key, v)?,
            "phantom.level.background" => p.background_level = parse_value(key, v)?,
            "phantom.level.ventricle" => p.ventricle_level = parse_value(key, v)?,
            "phantom.level.lesion" => p.lesion_level = parse_value(key, v)?,
            "phantom.level.tissue" => p.tissue_level = parse_value(key, v)?,
            "phantom.noise.background" => p.background_noise = parse_value(key, v)?,
            "phantom.noise.tissue" => p.tissue_noise = parse_value(key, v)?,
            "phantom.lesion_disks_min" => p.lesion_disks.0 = parse_value(key, v)?,
            "phantom.lesion_disks_max" => p.lesion_disks.1 = parse_value(key, v)?,
            "phantom.lesion_radius_min" => p.lesion_disk_radius.0 = parse_value(key, v)?,
            "phantom.lesion_radius_max" => p.lesion_disk_radius.1 = parse_value(key, v)?,
            "phantom.lesion_distance_min" => p.lesion_distance.0 = parse_value(key, v)?,
            "phantom.lesion_distance_max" => p.lesion_distance.1 = parse_value(key, v)?,
            "phantom.lesion_area_min" => p.lesion_area.0 = parse_value(key, v)?,
            "phantom.lesion_area_max" => p.lesion_area.1 = parse_value(key, v)?,
            "phantom.max_retries" => p.max_retries = parse_value(key, v)?,
            "denoiser" => self.denoiser = v.parse()?,
            "palette.denoiser" => self.palette_denoiser = v.parse()?,
            "methods" => {
                self.methods = split_list(v)
                    .map(Method::from_str)
                    .collect::<Result<Vec<_>>>()?;
                let mut seen = self.methods.clone();
                seen.sort();
                seen.dedup();
                if seen.len() != self.methods.len() {
                    return Err(Error::Config("methods lists a method twice".into()));
                }
            }
            "mededit.k" => self.mededit_k = parse_value(key, v)?,
            "mededit.resample" => self.mededit_resample = parse_value(key, v)?,
            "naive_repaint.resample" => self.naive_resample = parse_value(key, v)?,
            "sdedit.encoding_ratio" => self.sdedit_ratio = parse_value(key, v)?,
            "palette.k" => self.palette_k = parse_value(key, v)?,
            "eval.triplets" => self.triplets = parse_value(key, v)?,
            "eval.gallery" => self.gallery = parse_value(key, v)?,
            "dataset.train" => self.train_size = parse_value(key, v)?,
            "dataset.test" => self.test_size = parse_value(key, v)?,
            "dataset.healthy" => self.healthy_size = parse_value(key, v)?,
            "dataset.dir" => {
                self.dataset_dir = (!v.is_empty()).then(|| PathBuf::from(v));
            }
            "seeds" => {
                self.seeds = split_list(v)
                    .map(|s| parse_value(key, s))
                    .collect::<Result<Vec<_>>>()?
            }
            "train.epochs" => self.train.epochs = parse_value(key, v)?,
            "train.learning_rate" => self.train.learning_rate = parse_value(key, v)?,
            "train.momentum" => self.train.momentum = parse_value(key, v)?,
            "train.batch_size" => self.train.batch_size = parse_value(key, v)?,
            "train.hidden" => self.hidden = parse_value(key, v)?,
            "train.embed_dim" => self.embed_dim = parse_value(key, v)?,
            "train.palette" => self.train_palette = parse_value(key, v)?,
            "sweep.axis" => self.sweep_axis = v.parse()?,
            "sweep.values" => {
                self.sweep_values = split_list(v)
                    .map(|s| parse_value(key, s))
                    .collect::<Result<Vec<_>>>()?
            }
            "features.dim" => self.feature_dim = parse_value(key, v)?,
            "features.seed" => self.feature_seed = parse_value(key, v)?,
            "threads" => self.threads = parse_value(key, v)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.schedule.build().map_err(as_config)?;
        self.phantom.validate()?;
        if self.phantom.height != self.phantom.width {
            return bad("phantoms must be square".into());
        }
        for (name, k) in [("mededit.k", self.mededit_k), ("palette.k", self.palette_k)] {
            if k == 0 || k % 2 == 0 {
                return bad(format!("{name} must be odd and >= 1, got {k}"));
            }
        }
        if self.mededit_resample == 0 || self.naive_resample == 0 {
            return bad("resample counts must be >= 1".into());
        }
        if !(self.sdedit_ratio > 0.0 && self.sdedit_ratio <= 1.0) {
            return bad(format!("sdedit.encoding_ratio must lie in (0, 1], got {}", self.sdedit_ratio));
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.triplets > 0 && (self.test_size == 0 || self.healthy_size == 0) {
            return bad("evaluation needs nonempty test and healthy sets".into());
        }
        if self.triplets > self.healthy_size {
            return bad(format!(
                "{} triplets need as many healthy priors (pairing is without replacement), have {}",
                self.triplets, self.healthy_size
            ));
        }
        if self.gallery > self.triplets {
            return bad("eval.gallery exceeds eval.triplets".into());
        }
        if self.feature_dim == 0 {
            return bad("features.dim must be >= 1".into());
        }
        if self.hidden == 0 || self.embed_dim == 0 {
            return bad("train.hidden and train.embed_dim must be >= 1".into());
        }
        self.train.validate()?;
        Ok(())
    }

    /// Checks `sweep.values` against `axis`.
    pub fn validate_sweep(&self, axis: SweepAxis) -> Result<()> {
        if self.sweep_values.is_empty() {
            return Err(Error::Config("sweep.values is empty".into()));
        }
        for &v in &self.sweep_values {
            let ok = match axis {
                SweepAxis::K => v >= 1.0 && v.fract() == 0.0 && v as usize % 2 == 1,
                SweepAxis::U => v >= 1.0 && v.fract() == 0.0,
                SweepAxis::EncodingRatio => v > 0.0 && v <= 1.0,
            };
            if !ok {
                return Err(Error::Config(format!(
                    "sweep value {v} is invalid for axis {}",
                    axis.as_str()
                )));
            }
        }
        Ok(())
    }

    /// Every key with its value, in a fixed order. Parsing this text yields
    /// the same configuration.
    pub fn to_text(&self) -> String {
        let p = &self.phantom;
        let list = |v: Vec<String>| v.join(",");
        let pairs: Vec<(&str, String)> = vec![
            ("preset", self.preset.as_str().into()),
            ("phantom.size", p.width.to_string()),
            ("schedule.steps", self.schedule.steps.to_string()),
            ("schedule.beta_start", fmt_f(self.schedule.beta_start)),
            ("schedule.beta_end", fmt_f(self.schedule.beta_end)),
            (
                "schedule.sigma",
                match self.schedule.sigma_mode {
                    SigmaMode::Ddpm => "ddpm",
                    SigmaMode::Ddim => "ddim",
                }
                .into(),
            ),
            ("phantom.brain_axis_x", fmt_f(p.brain_axes.0)),
            ("phantom.brain_axis_y", fmt_f(p.brain_axes.1)),
            ("phantom.brain_jitter", fmt_f(p.brain_jitter)),
            ("phantom.ventricle_offset", fmt_f(p.ventricle_offset)),
            ("phantom.ventricle_radius", fmt_f(p.ventricle_radius)),
            ("phantom.gain", fmt_f(p.gain)),
            ("phantom.level.background", fmt_f(p.background_level)),
            ("phantom.level.ventricle", fmt_f(p.ventricle_level)),
            ("phantom.level.lesion", fmt_f(p.lesion_level)),
            ("phantom.level.tissue", fmt_f(p.tissue_level)),
            ("phantom.noise.background", fmt_f(p.background_noise)),
            ("phantom.noise.tissue", fmt_f(p.tissue_noise)),
            ("phantom.lesion_disks_min", p.lesion_disks.0.to_string()),
            ("phantom.lesion_disks_max", p.lesion_disks.1.to_string()),
            ("phantom.lesion_radius_min", fmt_f(p.lesion_disk_radius.0)),
            ("phantom.lesion_radius_max", fmt_f(p.lesion_disk_radius.1)),
            ("phantom.lesion_distance_min", fmt_f(p.lesion_distance.0)),
            ("phantom.lesion_distance_max", fmt_f(p.lesion_distance.1)),
            ("phantom.lesion_area_min", p.lesion_area.0.to_string()),
            ("phantom.lesion_area_max", p.lesion_area.1.to_string()),
            ("phantom.max_retries", p.max_retries.to_string()),
            ("denoiser", self.denoiser.to_string()),
            ("palette.denoiser", self.palette_denoiser.to_string()),
            ("methods", list(self.methods.iter().map(|m| m.to_string()).collect())),
            ("mededit.k", self.mededit_k.to_string()),
            ("mededit.resample", self.mededit_resample.to_string()),
            ("naive_repaint.resample", self.naive_resample.to_string()),
            ("sdedit.encoding_ratio", fmt_f(self.sdedit_ratio)),
            ("palette.k", self.palette_k.to_string()),
            ("eval.triplets", self.triplets.to_string()),
            ("eval.gallery", self.gallery.to_string()),
            ("dataset.train", self.train_size.to_string()),
            ("dataset.test", self.test_size.to_string()),
            ("dataset.healthy", self.healthy_size.to_string()),
            (
                "dataset.dir",
                self.dataset_dir.as_ref().map(|d| d.display().to_string()).unwrap_or_default(),
            ),
            ("seeds", list(self.seeds.iter().map(|s| s.to_string()).collect())),
            ("train.epochs", self.train.epochs.to_string()),
            ("train.learning_rate", fmt_f(self.train.learning_rate)),
            ("train.momentum", fmt_f(self.train.momentum)),
            ("train.batch_size", self.train.batch_size.to_string()),
            ("train.hidden", self.hidden.to_string()),
            ("train.embed_dim", self.embed_dim.to_string()),
            ("train.palette", self.train_palette.to_string()),
            ("sweep.axis", self.sweep_axis.as_str().into()),
            ("sweep.values", list(self.sweep_values.iter().map(|v| fmt_f(*v)).collect())),
            ("features.dim", self.feature_dim.to_string()),
            ("features.seed", self.feature_seed.to_string()),
        ];
        let mut out = String::new();
        for (k, v) in pairs {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        self.schedule.build()
    }
}

/// Shortest text that parses back to the same `f64`.
fn fmt_f(v: f64) -> String {
    format!("{v:?}")
}

fn split_list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("invalid value `{v}` for `{key}`")))
}

fn at_line(line: usize, e: Error) -> Error {
    match e {
        Error::Config(m) => Error::Config(format!("line {line}: {m}")),
        other => other,
    }
}

fn as_config(e: Error) -> Error {
    match e {
        Error::Parameter(m) => Error::Config(m),
        other => other,
    }
}

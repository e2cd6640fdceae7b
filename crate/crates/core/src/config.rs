//! Run configuration as a flat `key=value` text file.
//!
//! Blank lines and lines starting with `#` are ignored. Keys not listed in
//! [`KEYS`] are rejected. Real-valued keys accept decimals or fractions such as
//! `1/6`. Every key left out of the file keeps its default, and the loader
//! reports which ones those were.

use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::matcher::{HierarchyPlan, MatchParams};
use crate::motion_state::{LevelSpec, Thresholds};
use crate::refine::RefineParams;

/// Frames per video the default state cap is sized for.
pub const DEFAULT_FRAME_BUDGET: usize = 3000;

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub thresholds: Thresholds,
    pub matching: MatchParams,
    pub refine: RefineParams,
    /// Whether random search and propagation run between levels.
    pub refine_enabled: bool,
    pub plan: HierarchyPlan,
    pub max_states: Option<usize>,
    pub rng_seed: u64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            thresholds: Thresholds::default(),
            matching: MatchParams::default(),
            refine: RefineParams::default(),
            refine_enabled: true,
            plan: HierarchyPlan::default(),
            max_states: Some((DEFAULT_FRAME_BUDGET - 1) / 2),
            rng_seed: 0,
        }
    }
}

pub const KEYS: [&str; 18] = [
    "t1",
    "t2_frac",
    "t3_frac",
    "seg_len",
    "min_motion_frac",
    "lambda",
    "max_bad_segments",
    "one_to_many",
    "refine",
    "iterations",
    "alpha",
    "w0",
    "trials_per_level",
    "levels",
    "strides",
    "branching",
    "max_states",
    "rng_seed",
];

fn bad(key: &str, value: &str, why: impl std::fmt::Display) -> Error {
    Error::Parse { what: "config", detail: format!("{key}={value}: {why}") }
}

/// A decimal number or a `p/q` fraction.
pub fn parse_real(s: &str) -> std::result::Result<f64, String> {
    let s = s.trim();
    let v = match s.split_once('/') {
        Some((p, q)) => {
            let p: f64 = p.trim().parse().map_err(|e| format!("{e}"))?;
            let q: f64 = q.trim().parse().map_err(|e| format!("{e}"))?;
            if q == 0.0 {
                return Err("zero denominator".into());
            }
            p / q
        }
        None => s.parse().map_err(|e| format!("{e}"))?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err("not a finite number".into())
    }
}

fn parse_int<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| bad(key, value, e))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(bad(key, value, "expected true or false")),
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value.split(',').map(|v| parse_int(key, v.trim())).collect()
}

fn join(v: impl IntoIterator<Item = usize>) -> String {
    v.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Parsed configuration plus the keys that fell back to defaults.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedConfig {
    pub config: Config,
    pub defaulted: Vec<&'static str>,
}

impl Config {
    pub fn parse(text: &str) -> Result<LoadedConfig> {
        let mut config = Config::default();
        let mut seen = BTreeSet::new();
        let (mut levels, mut strides): (Option<Vec<usize>>, Option<Vec<usize>>) = (None, None);
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse { what: "config", detail: format!("line {}: expected key=value", n + 1) })?;
            let (key, value) = (key.trim(), value.trim());
            let Some(&known) = KEYS.iter().find(|k| **k == key) else {
                return Err(Error::Parse { what: "config", detail: format!("line {}: unknown key {key:?}", n + 1) });
            };
            if !seen.insert(known) {
                return Err(Error::Parse { what: "config", detail: format!("line {}: duplicate key {key:?}", n + 1) });
            }
            let real = || parse_real(value).map_err(|e| bad(key, value, e));
            match known {
                "t1" => config.thresholds.t1 = parse_int(key, value)?,
                "t2_frac" => config.thresholds.t2_frac = real()?,
                "t3_frac" => config.thresholds.t3_frac = real()?,
                "seg_len" => config.thresholds.seg_len = parse_int(key, value)?,
                "min_motion_frac" => {
                    let f = real()?;
                    config.thresholds.min_motion_frac = f;
                    config.matching.min_motion_frac = f;
                }
                "lambda" => config.matching.lambda = real()?,
                "max_bad_segments" => config.matching.max_bad_segments = parse_int(key, value)?,
                "one_to_many" => config.matching.keep_one_to_many = parse_bool(key, value)?,
                "refine" => config.refine_enabled = parse_bool(key, value)?,
                "iterations" => config.refine.iterations = parse_int(key, value)?,
                "alpha" => config.refine.alpha = real()?,
                "w0" => config.refine.w0 = if value == "auto" { None } else { Some(real()?) },
                "trials_per_level" => config.refine.trials_per_level = parse_int(key, value)?,
                "levels" => levels = Some(parse_list(key, value)?),
                "strides" => strides = Some(parse_list(key, value)?),
                "branching" => config.plan.branching = parse_int(key, value)?,
                "max_states" => config.max_states = if value == "all" { None } else { Some(parse_int(key, value)?) },
                "rng_seed" => config.rng_seed = parse_int(key, value)?,
                _ => unreachable!("every key in KEYS is handled"),
            }
        }
        let patches = levels.unwrap_or_else(|| config.plan.levels.iter().map(|l| l.patch_size).collect());
        let strides = strides.unwrap_or_else(|| patches.clone());
        if strides.len() != patches.len() {
            return Err(bad("strides", &join(strides.iter().copied()), "needs one stride per level"));
        }
        config.plan.levels = patches.iter().zip(&strides).map(|(&p, &s)| LevelSpec::new(p, s)).collect();
        config.validate()?;
        let defaulted = KEYS.iter().copied().filter(|k| !seen.contains(k)).collect();
        Ok(LoadedConfig { config, defaulted })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<LoadedConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Config::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.thresholds.validate()?;
        self.matching.validate()?;
        self.refine.validate()?;
        self.plan.validate()?;
        if self.max_states == Some(0) {
            return Err(Error::InvalidParameter("max_states must be positive".into()));
        }
        Ok(())
    }

    /// Effective value of every key, in [`KEYS`] order, in the file syntax.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        KEYS.iter()
            .map(|&k| {
                let v = match k {
                    "t1" => self.thresholds.t1.to_string(),
                    "t2_frac" => format!("{:?}", self.thresholds.t2_frac),
                    "t3_frac" => format!("{:?}", self.thresholds.t3_frac),
                    "seg_len" => self.thresholds.seg_len.to_string(),
                    "min_motion_frac" => format!("{:?}", self.matching.min_motion_frac),
                    "lambda" => format!("{:?}", self.matching.lambda),
                    "max_bad_segments" => self.matching.max_bad_segments.to_string(),
                    "one_to_many" => self.matching.keep_one_to_many.to_string(),
                    "refine" => self.refine_enabled.to_string(),
                    "iterations" => self.refine.iterations.to_string(),
                    "alpha" => format!("{:?}", self.refine.alpha),
                    "w0" => self.refine.w0.map_or("auto".into(), |w| format!("{w:?}")),
                    "trials_per_level" => self.refine.trials_per_level.to_string(),
                    "levels" => join(self.plan.levels.iter().map(|l| l.patch_size)),
                    "strides" => join(self.plan.levels.iter().map(|l| l.stride)),
                    "branching" => self.plan.branching.to_string(),
                    "max_states" => self.max_states.map_or("all".into(), |m| m.to_string()),
                    "rng_seed" => self.rng_seed.to_string(),
                    _ => unreachable!("every key in KEYS is rendered"),
                };
                (k, v)
            })
            .collect()
    }

    /// The configuration as a file [`Config::parse`] reads back unchanged.
    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

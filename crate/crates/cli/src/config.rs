//! Run configuration: a plain `key = value` file overridden by flags.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use swapsim_core::protocol::{EvePolicy, Ordering};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(CliError::usage(format!("unknown format `{other}` (csv or json)"))),
        }
    }
}

impl Format {
    /// Guesses from a file extension, defaulting to CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Csv,
        }
    }
}

/// Settings shared by the simulate commands.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Trials per setting pair (quantum) or rows (classical).
    pub trials: u64,
    pub master_seed: u64,
    pub ordering: Ordering,
    pub eve_policy: EvePolicy,
    pub alice_angles: Vec<f64>,
    pub bob_angles: Vec<f64>,
    pub output_path: Option<PathBuf>,
    pub format: Format,
    /// Number of independent views for classical generation.
    pub views: usize,
    /// Per-row probability that a classical view reads E2–E3 as a coincidence.
    pub coincidence_q: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            trials: 1000,
            master_seed: 0,
            ordering: Ordering::EveLast,
            eve_policy: EvePolicy::Fixed(swapsim_core::contexts::ContextName::Bell),
            alice_angles: vec![0.0],
            bob_angles: vec![0.0],
            output_path: None,
            format: Format::Csv,
            views: 3,
            coincidence_q: 0.5,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        self.eve_policy
            .validate()
            .map_err(|e| CliError::usage(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.coincidence_q) {
            return Err(CliError::usage(format!(
                "coincidence probability {} outside [0, 1]",
                self.coincidence_q
            )));
        }
        if self.alice_angles.is_empty() || self.bob_angles.is_empty() {
            return Err(CliError::usage("at least one angle per side is required"));
        }
        if self
            .alice_angles
            .iter()
            .chain(&self.bob_angles)
            .any(|a| !a.is_finite())
        {
            return Err(CliError::usage("angles must be finite"));
        }
        Ok(())
    }

    /// All (alice, bob) pairs, Alice's angle varying slowest.
    pub fn setting_pairs(&self) -> Vec<(f64, f64)> {
        self.alice_angles
            .iter()
            .flat_map(|&a| self.bob_angles.iter().map(move |&b| (a, b)))
            .collect()
    }

    /// Applies `key = value` pairs on top of `self`.
    pub fn apply(&mut self, entries: &BTreeMap<String, String>) -> Result<(), CliError> {
        for (key, value) in entries {
            match key.as_str() {
                "trials" => self.trials = parse_num(key, value)?,
                "seed" | "master_seed" => self.master_seed = parse_num(key, value)?,
                "ordering" => {
                    self.ordering = value.parse().map_err(|e: swapsim_core::protocol::ProtocolError| {
                        CliError::usage(e.to_string())
                    })?
                }
                "eve_policy" | "policy" => {
                    self.eve_policy = value.parse().map_err(|e: swapsim_core::protocol::ProtocolError| {
                        CliError::usage(e.to_string())
                    })?
                }
                "alice_angles" => self.alice_angles = parse_angle_list(value)?,
                "bob_angles" => self.bob_angles = parse_angle_list(value)?,
                "output" | "output_path" => self.output_path = Some(PathBuf::from(value)),
                "format" => self.format = value.parse()?,
                "views" => self.views = parse_num(key, value)?,
                "coincidence_q" | "q" => self.coincidence_q = parse_num(key, value)?,
                // keys consumed by other commands
                "input" | "key" | "settings" | "sigma" | "fixture" => {}
                other => return Err(CliError::usage(format!("unknown config key `{other}`"))),
            }
        }
        Ok(())
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .trim()
        .parse()
        .map_err(|_| CliError::usage(format!("invalid value `{value}` for `{key}`")))
}

/// Reads `key = value` lines; `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("config line {}: expected `key = value`", n + 1)))?;
        out.insert(k.trim().replace('-', "_"), v.trim().to_string());
    }
    Ok(out)
}

pub fn load_config_file(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
    parse_config_text(&text)
}

/// Parses `0.5`, `pi`, `-pi/4`, `3pi/4`, `0.5*pi`.
pub fn parse_angle(text: &str) -> Result<f64, CliError> {
    let bad = || CliError::usage(format!("invalid angle `{text}`"));
    let s = text.trim().to_ascii_lowercase().replace(' ', "");
    if s.is_empty() {
        return Err(bad());
    }
    let value = if let Some(pos) = s.find("pi") {
        let coef = s[..pos].trim_end_matches('*');
        let coef = match coef {
            "" | "+" => 1.0,
            "-" => -1.0,
            c => c.parse::<f64>().map_err(|_| bad())?,
        };
        let rest = &s[pos + 2..];
        let den = match rest.strip_prefix('/') {
            Some(d) => d.parse::<f64>().map_err(|_| bad())?,
            None if rest.is_empty() => 1.0,
            None => return Err(bad()),
        };
        coef * PI / den
    } else {
        s.parse::<f64>().map_err(|_| bad())?
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(bad())
    }
}

pub fn parse_angle_list(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',').map(parse_angle).collect()
}

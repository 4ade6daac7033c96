//! Flat `key = value` run configuration.
//!
//! Every key has a default listed in [`KEYS`]; anything else is rejected.
//! Sources are layered: config file, then the `LFERMI_OUTPUT_DIR`
//! environment variable, then command-line flags.

use std::collections::BTreeMap;
use std::fmt;

/// Environment variable that overrides `output_dir` from a config file.
pub const OUTPUT_DIR_ENV: &str = "LFERMI_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Float,
    UInt,
    Bool,
    FloatList,
    /// Free text, validated by the command that reads it.
    Text,
    Choice(&'static [&'static str]),
}

#[derive(Debug, Clone, Copy)]
pub struct KeySpec {
    pub name: &'static str,
    pub kind: Kind,
    /// Empty means "chosen by the command or preset".
    pub default: &'static str,
    pub doc: &'static str,
}

const fn key(name: &'static str, kind: Kind, default: &'static str, doc: &'static str) -> KeySpec {
    KeySpec { name, kind, default, doc }
}

pub const PRESETS: &[&str] = &["band-i", "band-iii", "umbilic", "near-threshold"];

pub const KEYS: &[KeySpec] = &[
    key("preset", Kind::Choice(PRESETS), "", "named energy: band-i (2), band-iii (5), umbilic (6), near-threshold (3.95)"),
    key("lambda", Kind::Float, "", "energy in [0, 12]; default from the preset, else 2 (6 for taylor/newton)"),
    key("at", Kind::Text, "auto", "expansion point: auto, umbilic, special-axis, generic, locus:<i> or x1,x2,x3"),
    key("seed", Kind::UInt, "0", "seed for random points, weights and restarts"),
    key("budget", Kind::UInt, "0", "numerical cap, 0 = command default (decay: grid intervals 4096; resolvent-scan: time panels 200000)"),
    key("points", Kind::UInt, "1000", "curvature-scan: random surface points"),
    key("grid", Kind::UInt, "256", "degenerate-locus: slices of the locus solver"),
    key("degree", Kind::UInt, "5", "taylor/newton: expansion degree (2..=6)"),
    key("rotate", Kind::Choice(&["auto", "true", "false"]), "auto", "taylor/newton: eigen-rotated coordinates; auto rotates except at umbilics"),
    key("directions", Kind::UInt, "64", "decay: Fibonacci-sphere directions (the normal is always added)"),
    key("r_min", Kind::Float, "16", "decay: smallest radius"),
    key("r_max", Kind::Float, "4096", "decay: largest radius"),
    key("cutoff_radius", Kind::Float, "0.08", "decay: bump radius, clipped to the chart radius"),
    key("mode", Kind::Choice(&["threshold", "uniformity"]), "threshold", "resolvent-scan: near-threshold or uniformity scan"),
    key("p", Kind::Float, "1.25", "resolvent-scan: Lebesgue exponent in [1, 2]"),
    key("r", Kind::Float, "3.3333333333333335", "resolvent-scan: weight exponent"),
    key("eps", Kind::FloatList, "1,0.5,0.25,0.125", "resolvent-scan: threshold offsets, strictly decreasing"),
    key("seeds", Kind::UInt, "2", "resolvent-scan: random weight pairs per z"),
    key("section_radius", Kind::UInt, "8", "resolvent-scan: finite-section radius (uniformity: the smaller one)"),
    key("box_radius", Kind::UInt, "16", "resolvent-scan: kernel table radius"),
    key("grid_n", Kind::UInt, "256", "resolvent-scan: torus grid for the FFT kernel"),
    key("thresholds", Kind::FloatList, "0,1,2,3", "resolvent-scan: threshold indices k (z near 4k)"),
    key("restarts", Kind::UInt, "5", "norm estimation restarts"),
    key("max_iterations", Kind::UInt, "300", "norm estimation iteration cap"),
    key("tol.norm", Kind::Float, "1e-8", "relative stopping tolerance of norm iterations"),
    key("tol.curvature", Kind::Float, "1e-9", "curvature-scan: relative agreement required of the two formulas"),
    key("tol.holder", Kind::Float, "1e-6", "holder-test: allowed excess of c_weighted over c_direct"),
    key("tol.recovery", Kind::Float, "1e-3", "holder-test: allowed shortfall of c_weighted below c_direct"),
    key("matrices", Kind::UInt, "50", "holder-test: random matrices"),
    key("max_dim", Kind::UInt, "8", "holder-test: largest row/column count"),
    key("p_list", Kind::FloatList, "1,1.2,1.25,2", "holder-test: exponents"),
    key("trials", Kind::UInt, "20", "holder-test: random starts per optimisation"),
    key("output", Kind::Choice(&["json", "csv"]), "json", "report format"),
    key("output_dir", Kind::Text, "", "directory for the report file; empty writes to stdout only"),
    key("threads", Kind::UInt, "0", "worker threads, 0 = all cores"),
    key("strict", Kind::Bool, "false", "exit 1 when a reported check fails"),
];

pub fn spec(name: &str) -> Option<&'static KeySpec> {
    KEYS.iter().find(|k| k.name == name)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    /// 1-based line of the config file, 0 for flags and environment.
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line > 0 {
            write!(f, "line {}: {}", self.line, self.message)
        } else {
            f.write_str(&self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

fn err(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError { line, message: message.into() }
}

pub fn parse_f64(v: &str) -> Option<f64> {
    v.trim().parse::<f64>().ok().filter(|x| x.is_finite())
}

pub fn parse_list(v: &str) -> Option<Vec<f64>> {
    v.split(',').map(parse_f64).collect::<Option<Vec<_>>>().filter(|l| !l.is_empty())
}

fn check_value(spec: &KeySpec, value: &str) -> Result<(), String> {
    let ok = match spec.kind {
        Kind::Float => parse_f64(value).is_some(),
        Kind::UInt => value.parse::<u64>().is_ok(),
        Kind::Bool => matches!(value, "true" | "false"),
        Kind::FloatList => parse_list(value).is_some(),
        Kind::Text => !value.contains('\n'),
        Kind::Choice(opts) => opts.contains(&value),
    };
    if ok {
        Ok(())
    } else {
        let expected = match spec.kind {
            Kind::Float => "a finite number".to_string(),
            Kind::UInt => "a non-negative integer".to_string(),
            Kind::Bool => "true or false".to_string(),
            Kind::FloatList => "a comma-separated list of numbers".to_string(),
            Kind::Text => "a single line".to_string(),
            Kind::Choice(opts) => format!("one of {}", opts.join(", ")),
        };
        Err(format!("`{}` expects {expected}, got `{value}`", spec.name))
    }
}

/// Explicitly set keys; everything else falls back to [`KEYS`] defaults.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    /// Parses a config file. Blank lines and lines starting with `#` are
    /// skipped; a key may appear only once.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Config::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| err(i + 1, format!("expected `key = value`, got `{line}`")))?;
            let (k, v) = (k.trim(), v.trim());
            if cfg.values.contains_key(k) {
                return Err(err(i + 1, format!("`{k}` set twice")));
            }
            cfg.set(k, v).map_err(|e| err(i + 1, e.message))?;
        }
        Ok(cfg)
    }

    /// Sets one key, replacing any earlier value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let spec = spec(key).ok_or_else(|| err(0, format!("unknown key `{key}`")))?;
        check_value(spec, value).map_err(|m| err(0, m))?;
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// `key=value` from the command line.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), ConfigError> {
        let (k, v) = pair.split_once('=').ok_or_else(|| err(0, format!("expected key=value, got `{pair}`")))?;
        self.set(k.trim(), v.trim())
    }

    /// Layers `other` on top of `self`.
    pub fn merge(&mut self, other: &Config) {
        for (k, v) in &other.values {
            self.values.insert(k.clone(), v.clone());
        }
    }

    pub fn is_set(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    /// Value or default; empty when neither exists.
    pub fn raw(&self, key: &str) -> &str {
        match self.values.get(key) {
            Some(v) => v,
            None => spec(key).map_or("", |s| s.default),
        }
    }

    pub fn f64(&self, key: &str) -> Option<f64> {
        parse_f64(self.raw(key))
    }

    pub fn usize(&self, key: &str) -> usize {
        self.raw(key).parse().unwrap_or(0)
    }

    pub fn u64(&self, key: &str) -> u64 {
        self.raw(key).parse().unwrap_or(0)
    }

    pub fn flag(&self, key: &str) -> bool {
        self.raw(key) == "true"
    }

    pub fn list(&self, key: &str) -> Vec<f64> {
        parse_list(self.raw(key)).unwrap_or_default()
    }

    /// Every key with its effective value, for embedding in reports.
    pub fn effective(&self) -> BTreeMap<String, String> {
        KEYS.iter().map(|k| (k.name.to_string(), self.raw(k.name).to_string())).collect()
    }

    /// Config text that parses back to the same effective values.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }
}

//! Experiment configuration: an INI file with `[data]`, `[run]` and
//! `[output]` sections, overridable key by key from the command line.
//!
//! ```ini
//! [data]
//! dataset = synthetic:n=1000,dim=20,seed=1,sorted
//! lambda = default
//!
//! [run]
//! nodes = 4
//! regime = heterogeneous
//! gradient_mode = stochastic
//! batch = 1
//! gamma = 0.05/L
//! schedule = 1, 4, 16, one-shot
//! T = 5000
//! seeds = 0..20
//!
//! [output]
//! dir = out
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::Ini;
use localsgd::dataio::{Regime, SyntheticSpec};
use localsgd::objective::Batch;
use localsgd::simulator::GradientMode;
use localsgd::theory::{GammaRule, HRule};

use crate::{CliError, CliResult};

/// Every accepted key, with the section it belongs to.
pub const KEYS: &[(&str, &str)] = &[
    ("data", "dataset"),
    ("data", "data_dir"),
    ("data", "lambda"),
    ("run", "nodes"),
    ("run", "regime"),
    ("run", "gradient_mode"),
    ("run", "batch"),
    ("run", "gamma"),
    ("run", "schedule"),
    ("run", "T"),
    ("run", "seeds"),
    ("run", "record_every"),
    ("output", "dir"),
];

const DEFAULTS: &[(&str, &str)] = &[
    ("dataset", "synthetic:n=1000,dim=20,seed=0"),
    ("data_dir", "data"),
    ("lambda", "default"),
    ("nodes", "4"),
    ("regime", "identical"),
    ("gradient_mode", "stochastic"),
    ("batch", "1"),
    ("gamma", "0.05/L"),
    ("schedule", "1,4,16"),
    ("T", "1000"),
    ("seeds", "0..8"),
    ("record_every", "auto"),
    ("dir", "out"),
];

#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSpec {
    Synthetic(SyntheticSpec),
    /// An entry of `<data_dir>/MANIFEST`.
    Named(String),
    /// A LIBSVM file read without manifest checks.
    File(PathBuf),
}

impl FromStr for DatasetSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("synthetic") {
            let rest = rest.strip_prefix(':').unwrap_or(rest);
            return parse_synthetic(rest).map(DatasetSpec::Synthetic);
        }
        if let Some(path) = s.strip_prefix("file:") {
            return Ok(DatasetSpec::File(PathBuf::from(path)));
        }
        if s.is_empty() {
            return Err("empty dataset".into());
        }
        Ok(DatasetSpec::Named(s.to_string()))
    }
}

impl fmt::Display for DatasetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetSpec::Synthetic(s) => f.write_str(&s.tag()),
            DatasetSpec::Named(n) => f.write_str(n),
            DatasetSpec::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

/// `n=…,dim=…,seed=…,noise=…,density=…,sorted`, every field optional.
fn parse_synthetic(s: &str) -> Result<SyntheticSpec, String> {
    let mut spec = SyntheticSpec::default();
    for item in s.split(',').map(str::trim).filter(|i| !i.is_empty()) {
        if item == "sorted" {
            spec.sort_by_label = true;
            continue;
        }
        let (k, v) = item.split_once('=').ok_or_else(|| format!("synthetic option {item:?} needs key=value"))?;
        let bad = |_| format!("bad value for synthetic option {k}: {v:?}");
        match k.trim() {
            "n" => spec.n = v.trim().parse().map_err(bad)?,
            "dim" | "d" => spec.dim = v.trim().parse().map_err(bad)?,
            "seed" => spec.seed = v.trim().parse().map_err(bad)?,
            "noise" => spec.label_noise = v.trim().parse().map_err(|_| format!("bad noise {v:?}"))?,
            "density" => spec.density = v.trim().parse().map_err(|_| format!("bad density {v:?}"))?,
            "sorted" => spec.sort_by_label = v.trim().parse().map_err(|_| format!("bad sorted {v:?}"))?,
            other => return Err(format!("unknown synthetic option {other:?}")),
        }
    }
    Ok(spec)
}

#[derive(Clone, Debug, PartialEq)]
pub enum GammaSpec {
    Absolute(f64),
    /// `c/L` with the global smoothness constant.
    OverL(f64),
    /// A planned stepsize, chosen per schedule.
    Planner(GammaRule),
}

impl FromStr for GammaSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if let Some(c) = s.strip_suffix("/L") {
            let c: f64 = c.trim().parse().map_err(|_| format!("bad stepsize multiple {s:?}"))?;
            if !(c > 0.0) || !c.is_finite() {
                return Err(format!("stepsize multiple must be positive, got {s:?}"));
            }
            return Ok(GammaSpec::OverL(c));
        }
        if let Ok(v) = s.parse::<f64>() {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(format!("stepsize must be finite and >= 0, got {s:?}"));
            }
            return Ok(GammaSpec::Absolute(v));
        }
        s.parse::<GammaRule>().map(GammaSpec::Planner).map_err(|e| e.to_string())
    }
}

impl fmt::Display for GammaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GammaSpec::Absolute(v) => write!(f, "{v}"),
            GammaSpec::OverL(c) => write!(f, "{c}/L"),
            GammaSpec::Planner(r) => write!(f, "{r}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ScheduleSpec {
    Uniform(usize),
    OneShot,
    Explicit(Vec<usize>),
    /// `H` from a planner rule, resolved against `T` and `M`.
    Planned(HRule),
}

impl FromStr for ScheduleSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s == "one-shot" {
            return Ok(ScheduleSpec::OneShot);
        }
        if let Some(rest) = s.strip_prefix("explicit:") {
            let steps = rest
                .split_whitespace()
                .map(|v| v.parse::<usize>().map_err(|_| format!("bad sync step {v:?}")))
                .collect::<Result<Vec<_>, _>>()?;
            return Ok(ScheduleSpec::Explicit(steps));
        }
        if let Some(rule) = s.strip_prefix("plan:") {
            return rule.parse::<HRule>().map(ScheduleSpec::Planned).map_err(|e| e.to_string());
        }
        match s.strip_prefix("H=").unwrap_or(s).parse::<usize>() {
            Ok(h) if h >= 1 => Ok(ScheduleSpec::Uniform(h)),
            _ => Err(format!("schedule must be H >= 1, one-shot, explicit:<steps> or plan:<rule>, got {s:?}")),
        }
    }
}

impl fmt::Display for ScheduleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScheduleSpec::Uniform(h) => write!(f, "{h}"),
            ScheduleSpec::OneShot => f.write_str("one-shot"),
            ScheduleSpec::Explicit(steps) => {
                let s: Vec<String> = steps.iter().map(|v| v.to_string()).collect();
                write!(f, "explicit:{}", s.join(" "))
            }
            ScheduleSpec::Planned(r) => write!(f, "plan:{r}"),
        }
    }
}

/// `a..b` (half-open) or a comma list.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| format!("bad seed range {s:?}"))?;
        let b: u64 = b.trim().parse().map_err(|_| format!("bad seed range {s:?}"))?;
        if b <= a {
            return Err(format!("empty seed range {s:?}"));
        }
        return Ok((a..b).collect());
    }
    parse_list(s)
}

fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>, String>
where
    T::Err: fmt::Display,
{
    let items: Vec<T> = s
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| v.parse::<T>().map_err(|e| format!("{v:?}: {e}")))
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err(format!("empty list {s:?}"));
    }
    Ok(items)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub data_dir: PathBuf,
    /// `None` means `1/n`.
    pub lambda: Option<f64>,
    pub nodes: Vec<usize>,
    pub regime: Regime,
    pub gradient_mode: GradientMode,
    pub batches: Vec<Batch>,
    pub gamma: GammaSpec,
    pub schedules: Vec<ScheduleSpec>,
    pub t: usize,
    pub seeds: Vec<u64>,
    /// `None` records about 1000 evenly spaced steps.
    pub record_every: Option<usize>,
    pub out_dir: PathBuf,
    /// The raw key-value pairs the config was built from.
    pub raw: BTreeMap<String, String>,
}

impl ExperimentConfig {
    /// Reads `path` (if any), applies `overrides` on top, and parses.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> CliResult<Self> {
        let mut pairs = BTreeMap::new();
        if let Some(p) = path {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            pairs = flatten_ini(&text)?;
        }
        for (k, v) in overrides {
            check_key(None, k)?;
            pairs.insert(k.clone(), v.clone());
        }
        Self::from_pairs(pairs)
    }

    pub fn from_pairs(mut pairs: BTreeMap<String, String>) -> CliResult<Self> {
        for (k, v) in DEFAULTS {
            pairs.entry(k.to_string()).or_insert_with(|| v.to_string());
        }
        let get = |k: &str| pairs[k].as_str();
        let err = |k: &str, e: String| CliError::Config(format!("{k}: {e}"));
        let lambda = match get("lambda").trim() {
            "default" | "1/n" => None,
            v => {
                let l: f64 = v.parse().map_err(|_| err("lambda", format!("not a number: {v:?}")))?;
                if !(l >= 0.0) || !l.is_finite() {
                    return Err(err("lambda", format!("must be finite and >= 0, got {v}")));
                }
                Some(l)
            }
        };
        let record_every = match get("record_every").trim() {
            "auto" => None,
            v => match v.parse::<usize>() {
                Ok(k) if k >= 1 => Some(k),
                _ => return Err(err("record_every", format!("must be a positive integer or auto, got {v:?}"))),
            },
        };
        let t: usize = get("T").trim().parse().map_err(|_| err("T", format!("not an integer: {:?}", get("T"))))?;
        if t == 0 {
            return Err(err("T", "must be positive".into()));
        }
        let nodes: Vec<usize> = parse_list(get("nodes")).map_err(|e| err("nodes", e))?;
        if nodes.contains(&0) {
            return Err(err("nodes", "must be positive".into()));
        }
        Ok(Self {
            dataset: get("dataset").parse().map_err(|e| err("dataset", e))?,
            data_dir: PathBuf::from(get("data_dir").trim()),
            lambda,
            nodes,
            regime: get("regime").parse().map_err(|e| err("regime", e))?,
            gradient_mode: get("gradient_mode").parse().map_err(|e| err("gradient_mode", e))?,
            batches: parse_list(get("batch")).map_err(|e| err("batch", e))?,
            gamma: get("gamma").parse().map_err(|e| err("gamma", e))?,
            schedules: parse_list(get("schedule")).map_err(|e| err("schedule", e))?,
            t,
            seeds: parse_seeds(get("seeds")).map_err(|e| err("seeds", e))?,
            record_every,
            out_dir: PathBuf::from(get("dir").trim()),
            raw: pairs,
        })
    }

    /// The single `M` a run needs.
    pub fn single_nodes(&self) -> CliResult<usize> {
        match self.nodes.as_slice() {
            [m] => Ok(*m),
            _ => Err(CliError::Config(format!("run takes a single node count, got {:?}", self.nodes))),
        }
    }

    pub fn single_batch(&self) -> CliResult<Batch> {
        match self.batches.as_slice() {
            [b] => Ok(*b),
            _ => Err(CliError::Config("run takes a single batch size".into())),
        }
    }

    /// Key-value lines of the effective configuration.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        for (section, key) in KEYS {
            out.push_str(&format!("{section}.{key}={}\n", self.raw[*key].trim()));
        }
        out
    }
}

fn check_key(section: Option<&str>, key: &str) -> CliResult<()> {
    let known = KEYS.iter().any(|(s, k)| *k == key && section.is_none_or(|sec| sec == *s));
    if known {
        Ok(())
    } else {
        Err(CliError::Config(match section {
            Some(s) => format!("unknown key [{s}] {key}"),
            None => format!("unknown key {key}"),
        }))
    }
}

/// Section-checked INI parse into a flat key map.
pub fn flatten_ini(text: &str) -> CliResult<BTreeMap<String, String>> {
    let ini = Ini::load_from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    let mut pairs = BTreeMap::new();
    for (section, props) in ini.iter() {
        for (k, v) in props.iter() {
            let Some(sec) = section else {
                return Err(CliError::Config(format!("key {k} outside a section")));
            };
            check_key(Some(sec), k)?;
            pairs.insert(k.to_string(), v.to_string());
        }
    }
    Ok(pairs)
}

//! Run configuration from a flat `key = value` file and command-line flags.
//!
//! Flags override file values. Unset model parameters fall back to
//! N = 10, mu1 = 3.0, mu2 = 2.5, p_fb = 0 and an infinite first buffer. The
//! arrival rate has no default and must be given unless it is swept or
//! varied as a series.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use tandem_core::SimConfig;
use thiserror::Error;

/// Where a configuration value came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Location {
    Line(usize),
    Flag(String),
    Default,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Line(n) => write!(f, "line {n}"),
            Location::Flag(name) => write!(f, "flag --{name}"),
            Location::Default => write!(f, "defaults"),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{at}: {msg}")]
    Parse { at: Location, msg: String },
    #[error("{at}: unknown key `{key}`")]
    UnknownKey { key: String, at: Location },
}

fn parse_err(at: &Location, msg: impl Into<String>) -> ConfigError {
    ConfigError::Parse { at: at.clone(), msg: msg.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MethodKind {
    Exact,
    Geometric,
    Hybrid,
    Oracle,
    Sim,
}

impl MethodKind {
    pub const ALL: [MethodKind; 5] =
        [MethodKind::Exact, MethodKind::Geometric, MethodKind::Hybrid, MethodKind::Oracle, MethodKind::Sim];

    pub fn name(self) -> &'static str {
        match self {
            MethodKind::Exact => "exact",
            MethodKind::Geometric => "geometric",
            MethodKind::Hybrid => "hybrid",
            MethodKind::Oracle => "oracle",
            MethodKind::Sim => "sim",
        }
    }
}

impl FromStr for MethodKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MethodKind::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method `{s}` (expected exact, geometric, hybrid, oracle, sim or all)"))
    }
}

/// Parses `exact,oracle` or `all` into a list without duplicates, in the
/// order given.
pub fn parse_methods(s: &str) -> Result<Vec<MethodKind>, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let add: Vec<MethodKind> = if part == "all" { MethodKind::ALL.to_vec() } else { vec![part.parse()?] };
        for m in add {
            if !out.contains(&m) {
                out.push(m);
            }
        }
    }
    if out.is_empty() {
        return Err("no method given".into());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Sigma,
    PFb,
    NThreshold,
    KCapacity,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Sigma => "sigma",
            SweepParam::PFb => "p_fb",
            SweepParam::NThreshold => "n_threshold",
            SweepParam::KCapacity => "k_capacity",
        }
    }

    pub fn is_integer(self) -> bool {
        matches!(self, SweepParam::NThreshold | SweepParam::KCapacity)
    }
}

impl FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sigma" => Ok(SweepParam::Sigma),
            "p_fb" | "p-fb" => Ok(SweepParam::PFb),
            "n" | "n_threshold" => Ok(SweepParam::NThreshold),
            "k" | "k_capacity" => Ok(SweepParam::KCapacity),
            _ => Err(format!("cannot sweep `{s}` (expected sigma, p_fb, n_threshold or k_capacity)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub from: f64,
    pub to: f64,
    pub steps: usize,
}

impl SweepSpec {
    /// Evenly spaced grid including both ends.
    pub fn grid(&self) -> Vec<f64> {
        let span = self.to - self.from;
        (0..self.steps)
            .map(|k| {
                let x = self.from + span * k as f64 / (self.steps - 1) as f64;
                if self.param.is_integer() {
                    x.round()
                } else {
                    x
                }
            })
            .collect()
    }
}

/// A parameter held at several values, one output series per value.
/// `None` stands for an infinite first buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesSpec {
    pub param: SweepParam,
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelValues {
    pub sigma: Option<f64>,
    pub mu1: f64,
    pub mu2: f64,
    pub p_fb: f64,
    pub n_threshold: usize,
    pub k_capacity: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelValues,
    pub methods: Vec<MethodKind>,
    /// Truncation level of the infinite-buffer oracle.
    pub j_max: usize,
    /// Explicit boundary levels of the hybrid method.
    pub m_boundary: usize,
    pub sim: SimConfig,
    pub sweep: Option<SweepSpec>,
    pub series: Option<SeriesSpec>,
    pub out: Option<PathBuf>,
}

/// One `key = value` assignment with its origin.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub at: Location,
}

impl Entry {
    pub fn flag(key: &str, value: impl Into<String>) -> Self {
        Entry { key: key.replace('-', "_"), value: value.into(), at: Location::Flag(key.to_string()) }
    }
}

const KEYS: &[&str] = &[
    "sigma",
    "mu1",
    "mu2",
    "p_fb",
    "n",
    "n_threshold",
    "k",
    "k_capacity",
    "method",
    "methods",
    "j_max",
    "m_boundary",
    "seed",
    "events",
    "warmup",
    "batches",
    "sweep_param",
    "from",
    "to",
    "steps",
    "series_param",
    "series_values",
    "out",
];

fn canonical_key(key: &str) -> &str {
    match key {
        "n" => "n_threshold",
        "k" => "k_capacity",
        "methods" => "method",
        "p-fb" => "p_fb",
        other => other,
    }
}

/// Splits configuration text into entries. Blank lines and `#` comments are
/// skipped; everything else must be `key = value`.
pub fn parse_entries(text: &str) -> Result<Vec<Entry>, ConfigError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let at = Location::Line(idx + 1);
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) =
            line.split_once('=').ok_or_else(|| parse_err(&at, format!("expected `key = value`, got `{line}`")))?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() {
            return Err(parse_err(&at, "missing key"));
        }
        if value.is_empty() {
            return Err(parse_err(&at, format!("missing value for `{key}`")));
        }
        out.push(Entry { key: key.to_string(), value: value.to_string(), at });
    }
    Ok(out)
}

pub fn read_entries(path: &Path) -> Result<Vec<Entry>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse_entries(&text)
}

/// Reads the optional file and applies the flag entries on top of it.
pub fn parse_config(file: Option<&Path>, flags: &[Entry]) -> Result<RunConfig, ConfigError> {
    let mut entries = match file {
        Some(p) => read_entries(p)?,
        None => Vec::new(),
    };
    entries.extend(flags.iter().cloned());
    build_config(&entries)
}

fn value<T: FromStr>(e: &Entry) -> Result<T, ConfigError> {
    e.value.parse().map_err(|_| parse_err(&e.at, format!("invalid value `{}` for `{}`", e.value, e.key)))
}

fn capacity(e: &Entry) -> Result<Option<usize>, ConfigError> {
    match e.value.as_str() {
        "inf" | "infinite" | "none" => Ok(None),
        _ => value::<usize>(e).map(Some),
    }
}

/// Resolves entries in order, later ones overriding earlier ones.
pub fn build_config(entries: &[Entry]) -> Result<RunConfig, ConfigError> {
    let mut latest: Vec<(&str, &Entry)> = Vec::new();
    for e in entries {
        if !KEYS.contains(&e.key.as_str()) {
            return Err(ConfigError::UnknownKey { key: e.key.clone(), at: e.at.clone() });
        }
        let key = canonical_key(&e.key);
        latest.retain(|(k, _)| *k != key);
        latest.push((key, e));
    }
    let get = |k: &str| latest.iter().find(|(key, _)| *key == k).map(|(_, e)| *e);

    let mut model = ModelValues { sigma: None, mu1: 3.0, mu2: 2.5, p_fb: 0.0, n_threshold: 10, k_capacity: None };
    let mut sim = SimConfig::default();
    let mut cfg_methods = vec![MethodKind::Exact];
    let mut j_max = 400;
    let mut m_boundary = 1;
    let mut out = None;

    if let Some(e) = get("sigma") {
        model.sigma = Some(value(e)?);
    }
    if let Some(e) = get("mu1") {
        model.mu1 = value(e)?;
    }
    if let Some(e) = get("mu2") {
        model.mu2 = value(e)?;
    }
    if let Some(e) = get("p_fb") {
        model.p_fb = value(e)?;
    }
    if let Some(e) = get("n_threshold") {
        model.n_threshold = value(e)?;
    }
    if let Some(e) = get("k_capacity") {
        model.k_capacity = capacity(e)?;
    }
    if let Some(e) = get("method") {
        cfg_methods = parse_methods(&e.value).map_err(|m| parse_err(&e.at, m))?;
    }
    if let Some(e) = get("j_max") {
        j_max = value(e)?;
        if j_max < 2 {
            return Err(parse_err(&e.at, "j_max must be at least 2"));
        }
    }
    if let Some(e) = get("m_boundary") {
        m_boundary = value(e)?;
        if m_boundary < 1 {
            return Err(parse_err(&e.at, "m_boundary must be at least 1"));
        }
    }
    if let Some(e) = get("seed") {
        sim.seed = value(e)?;
    }
    if let Some(e) = get("events") {
        sim.total_events = value(e)?;
    }
    if let Some(e) = get("warmup") {
        sim.warmup_events = value(e)?;
    }
    if let Some(e) = get("batches") {
        sim.n_batches = value(e)?;
    }
    if let Err(err) = sim.validate() {
        let at = ["events", "warmup", "batches"]
            .iter()
            .find_map(|k| get(k))
            .map(|e| e.at.clone())
            .unwrap_or(Location::Default);
        return Err(parse_err(&at, err.to_string()));
    }
    if let Some(e) = get("out") {
        out = Some(PathBuf::from(&e.value));
    }

    let sweep = match get("sweep_param") {
        None => {
            if let Some(e) = get("from").or(get("to")).or(get("steps")) {
                return Err(parse_err(&e.at, format!("`{}` needs `sweep_param`", e.key)));
            }
            None
        }
        Some(pe) => {
            let param: SweepParam = pe.value.parse().map_err(|m: String| parse_err(&pe.at, m))?;
            let need = |k: &str| get(k).ok_or_else(|| parse_err(&pe.at, format!("sweep needs `{k}`")));
            let (fe, te, se) = (need("from")?, need("to")?, need("steps")?);
            let from: f64 = value(fe)?;
            let to: f64 = value(te)?;
            let steps: usize = value(se)?;
            if !(from < to) {
                return Err(parse_err(&te.at, format!("sweep range must satisfy from < to, got {from} .. {to}")));
            }
            if steps < 2 {
                return Err(parse_err(&se.at, "a sweep needs at least 2 steps"));
            }
            let spec = SweepSpec { param, from, to, steps };
            if param.is_integer() {
                let exact = (0..steps).all(|k| {
                    let x = from + (to - from) * k as f64 / (steps - 1) as f64;
                    (x - x.round()).abs() < 1e-9 && x.round() >= 1.0
                });
                if !exact {
                    return Err(parse_err(&se.at, format!("{} needs an integer grid of values >= 1", param.name())));
                }
            }
            Some(spec)
        }
    };

    let series = match get("series_param") {
        None => {
            if let Some(e) = get("series_values") {
                return Err(parse_err(&e.at, "`series_values` needs `series_param`"));
            }
            None
        }
        Some(pe) => {
            let param: SweepParam = pe.value.parse().map_err(|m: String| parse_err(&pe.at, m))?;
            let ve = get("series_values").ok_or_else(|| parse_err(&pe.at, "series needs `series_values`"))?;
            let mut values = Vec::new();
            for part in ve.value.split(',').map(str::trim) {
                let v = match part {
                    "inf" | "infinite" if param == SweepParam::KCapacity => None,
                    _ => {
                        let x: f64 =
                            part.parse().map_err(|_| parse_err(&ve.at, format!("invalid series value `{part}`")))?;
                        if param.is_integer() && (x.fract() != 0.0 || x < 1.0) {
                            return Err(parse_err(
                                &ve.at,
                                format!("{} series values must be integers >= 1", param.name()),
                            ));
                        }
                        Some(x)
                    }
                };
                values.push(v);
            }
            if sweep.as_ref().is_some_and(|s| s.param == param) {
                return Err(parse_err(&pe.at, "series and sweep vary the same parameter"));
            }
            Some(SeriesSpec { param, values })
        }
    };

    let sigma_varied = sweep.as_ref().is_some_and(|s| s.param == SweepParam::Sigma)
        || series.as_ref().is_some_and(|s| s.param == SweepParam::Sigma);
    if model.sigma.is_none() && !sigma_varied {
        return Err(parse_err(&Location::Default, "the arrival rate `sigma` is required unless it is swept"));
    }

    Ok(RunConfig { model, methods: cfg_methods, j_max, m_boundary, sim, sweep, series, out })
}

/// Built-in sweeps, returned as entries so that files and flags still
/// override them.
pub fn preset(name: &str) -> Option<Vec<Entry>> {
    let text = match name {
        // mql1 against arrival rate for several first-buffer sizes
        "capacity" => "sweep_param = sigma\nfrom = 0.2\nto = 2.2\nsteps = 11\nseries_param = k_capacity\nseries_values = 5,10,inf\nmethod = oracle\n",
        // mql1 against feedback probability for several arrival rates
        "feedback" => "sweep_param = p_fb\nfrom = 0\nto = 0.6\nsteps = 13\nseries_param = sigma\nseries_values = 0.5,0.75,1.0\n",
        // mql1 against the blocking threshold
        "threshold" => "sigma = 1.5\nsweep_param = n_threshold\nfrom = 1\nto = 20\nsteps = 20\n",
        // mql1 against arrival rate
        "load" => "sweep_param = sigma\nfrom = 0.2\nto = 2.2\nsteps = 11\n",
        // mql1 against the blocking threshold for several arrival rates
        "threshold-load" => "sweep_param = n_threshold\nfrom = 1\nto = 20\nsteps = 20\nseries_param = sigma\nseries_values = 0.5,1.0,1.5\n",
        _ => return None,
    };
    let entries = parse_entries(text).expect("preset text is well formed");
    Some(entries.into_iter().map(|e| Entry { at: Location::Default, ..e }).collect())
}

pub const PRESETS: [&str; 5] = ["capacity", "feedback", "threshold", "load", "threshold-load"];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_and_blank_lines() {
        let e = parse_entries("# model\n\nsigma = 1.0  # arrivals\nmu1=3\n").unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!(e[0].value, "1.0");
        assert_eq!(e[1].at, Location::Line(4));
    }

    #[test]
    fn malformed_line_reports_its_number() {
        match parse_entries("sigma = 1\nmu1 3\n") {
            Err(ConfigError::Parse { at: Location::Line(2), .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn defaults_fill_in() {
        let c = build_config(&[Entry::flag("sigma", "1.5")]).unwrap();
        assert_eq!(
            c.model,
            ModelValues { sigma: Some(1.5), mu1: 3.0, mu2: 2.5, p_fb: 0.0, n_threshold: 10, k_capacity: None }
        );
        assert_eq!(c.methods, vec![MethodKind::Exact]);
        assert_eq!(c.j_max, 400);
    }

    #[test]
    fn methods_all_expands() {
        assert_eq!(parse_methods("all").unwrap(), MethodKind::ALL.to_vec());
        assert_eq!(parse_methods("oracle, exact,oracle").unwrap(), vec![MethodKind::Oracle, MethodKind::Exact]);
        assert!(parse_methods("spectral").is_err());
    }

    #[test]
    fn integer_sweeps_need_integer_grids() {
        let base = [Entry::flag("sigma", "1"), Entry::flag("sweep_param", "n_threshold"), Entry::flag("from", "1")];
        let mut ok = base.to_vec();
        ok.extend([Entry::flag("to", "20"), Entry::flag("steps", "20")]);
        assert_eq!(build_config(&ok).unwrap().sweep.unwrap().grid()[19], 20.0);
        let mut bad = base.to_vec();
        bad.extend([Entry::flag("to", "20"), Entry::flag("steps", "7")]);
        assert!(matches!(build_config(&bad), Err(ConfigError::Parse { at: Location::Flag(f), .. }) if f == "steps"));
    }

    #[test]
    fn presets_parse() {
        for p in PRESETS {
            let c = build_config(&preset(p).unwrap()).unwrap();
            assert!(c.sweep.is_some(), "{p}");
        }
        assert!(preset("fig9").is_none());
    }

    #[test]
    fn infinite_capacity_spelling() {
        let c = build_config(&[Entry::flag("sigma", "1"), Entry::flag("k", "inf")]).unwrap();
        assert_eq!(c.model.k_capacity, None);
        let c = build_config(&[Entry::flag("sigma", "1"), Entry::flag("k", "5")]).unwrap();
        assert_eq!(c.model.k_capacity, Some(5));
    }
}

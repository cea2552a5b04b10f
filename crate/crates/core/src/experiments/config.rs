//! Scenario configuration: a sectioned `key = value` file.
//!
//! ```text
//! [scenario]
//! name = selection
//! seed = 42
//!
//! [drift]
//! name = sign_sqrt
//! kappa = 1
//!
//! [initial]
//! name = gaussian
//! sigma = 0.5
//!
//! [numerics]
//! L = 5
//! T = 0.5
//! dt = 0.000244140625
//! dx = 0.00390625
//! eps = 0.5, 0.25, 0.125, 0.0625, 0.03125
//! n_paths = 1
//!
//! [tolerances]
//! distance_factor = 1.5
//!
//! [params]
//! control = true
//! ```
//!
//! `[tolerances]` and `[params]` keys are checked by each scenario.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use ini::Ini;

use crate::drift::{catalog, Drift, DriftField, DriftSpec};
use crate::error::{Error, Result};
use crate::spde::{initial_catalog, InitialDatum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Scenario {
    Simulate,
    LemmaSweep,
    Commutator,
    Selection,
    Stability,
    NegativeExample,
    HypothesisCheck,
}

impl Scenario {
    pub const ALL: [Scenario; 7] = [
        Scenario::Simulate,
        Scenario::LemmaSweep,
        Scenario::Commutator,
        Scenario::Selection,
        Scenario::Stability,
        Scenario::NegativeExample,
        Scenario::HypothesisCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Simulate => "simulate",
            Scenario::LemmaSweep => "lemma-sweep",
            Scenario::Commutator => "commutator",
            Scenario::Selection => "selection",
            Scenario::Stability => "stability",
            Scenario::NegativeExample => "negative-example",
            Scenario::HypothesisCheck => "hypothesis-check",
        }
    }

    /// File-name friendly form of [`Scenario::name`].
    pub fn slug(self) -> String {
        self.name().replace('-', "_")
    }

    /// Built-in configuration used when no file is given.
    pub fn default_config_text(self) -> &'static str {
        match self {
            Scenario::Simulate => include_str!("../../configs/simulate.ini"),
            Scenario::LemmaSweep => include_str!("../../configs/lemma-sweep.ini"),
            Scenario::Commutator => include_str!("../../configs/commutator.ini"),
            Scenario::Selection => include_str!("../../configs/selection.ini"),
            Scenario::Stability => include_str!("../../configs/stability.ini"),
            Scenario::NegativeExample => include_str!("../../configs/negative-example.ini"),
            Scenario::HypothesisCheck => include_str!("../../configs/hypothesis-check.ini"),
        }
    }

    pub fn default_config(self) -> ExperimentConfig {
        ExperimentConfig::parse(self.default_config_text())
            .expect("built-in configuration is valid")
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s || sc.slug() == s)
            .ok_or_else(|| Error::Config(format!("unknown scenario '{s}'")))
    }
}

/// Catalog name plus numeric parameters of the initial datum.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InitialSpec {
    pub name: String,
    pub params: BTreeMap<String, f64>,
}

impl InitialSpec {
    pub fn build(&self) -> Result<InitialDatum> {
        initial_catalog(&self.name, &self.params)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub seed: u64,
    pub drift: DriftSpec,
    pub initial: InitialSpec,
    /// Half-width `L` of the spatial domain `[-L, L]`.
    pub domain: f64,
    pub t_end: f64,
    pub dt: f64,
    pub dx: f64,
    pub eps: Vec<f64>,
    pub n_paths: usize,
    pub tolerances: BTreeMap<String, f64>,
    pub params: BTreeMap<String, String>,
    /// Output directory; not part of the echo.
    pub out_dir: Option<PathBuf>,
}

const SECTIONS: [&str; 6] = ["scenario", "drift", "initial", "numerics", "tolerances", "params"];

fn parse_f64(section: &str, key: &str, v: &str) -> Result<f64> {
    let x: f64 = v
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("[{section}] {key}: '{v}' is not a number")))?;
    if !x.is_finite() {
        return Err(Error::Config(format!("[{section}] {key}: '{v}' is not finite")));
    }
    Ok(x)
}

fn parse_list(section: &str, key: &str, v: &str) -> Result<Vec<f64>> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|p| parse_f64(section, key, p)).collect()
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let ini = Ini::load_from_str_noescape(text)
            .map_err(|e| Error::Config(format!("line {}: {}", e.line, e.msg)))?;
        let mut seen = Vec::new();
        let mut raw: BTreeMap<&str, Vec<(String, String)>> = BTreeMap::new();
        for (section, props) in ini.iter() {
            let Some(section) = section else {
                if props.iter().next().is_some() {
                    return Err(Error::Config("keys before the first section".into()));
                }
                continue;
            };
            let Some(&known) = SECTIONS.iter().find(|s| **s == section) else {
                return Err(Error::Config(format!("unknown section [{section}]")));
            };
            if seen.contains(&known) {
                return Err(Error::Config(format!("section [{section}] appears twice")));
            }
            seen.push(known);
            let mut entries: Vec<(String, String)> = Vec::new();
            for (k, v) in props.iter() {
                if entries.iter().any(|(e, _)| e == k) {
                    return Err(Error::Config(format!("[{section}] {k} is set twice")));
                }
                entries.push((k.to_string(), v.trim().to_string()));
            }
            raw.insert(known, entries);
        }
        let section = |name: &str| raw.get(name).cloned().unwrap_or_default();

        let mut scenario = None;
        let mut seed = 0u64;
        let mut out_dir = None;
        for (k, v) in section("scenario") {
            match k.as_str() {
                "name" => scenario = Some(v.parse::<Scenario>()?),
                "seed" => {
                    seed = v
                        .parse()
                        .map_err(|_| Error::Config(format!("[scenario] seed: '{v}' is not a u64")))?
                }
                "out" => out_dir = Some(PathBuf::from(v)),
                _ => return Err(Error::Config(format!("[scenario] has no key '{k}'"))),
            }
        }
        let scenario = scenario.ok_or_else(|| Error::Config("[scenario] name is required".into()))?;

        let mut drift = DriftSpec::new("zero");
        let mut drift_name = None;
        for (k, v) in section("drift") {
            match k.as_str() {
                "name" => drift_name = Some(v),
                "base" => drift.base = Some(v),
                _ => {
                    let x = parse_f64("drift", &k, &v)?;
                    drift.params.insert(k, x);
                }
            }
        }
        drift.name = drift_name.ok_or_else(|| Error::Config("[drift] name is required".into()))?;

        let mut initial = InitialSpec::default();
        let mut initial_name = None;
        for (k, v) in section("initial") {
            if k == "name" {
                initial_name = Some(v);
            } else {
                let x = parse_f64("initial", &k, &v)?;
                initial.params.insert(k, x);
            }
        }
        initial.name = initial_name.ok_or_else(|| Error::Config("[initial] name is required".into()))?;

        let mut num: BTreeMap<String, String> = section("numerics").into_iter().collect();
        let mut take = |key: &str| {
            num.remove(key)
                .ok_or_else(|| Error::Config(format!("[numerics] {key} is required")))
        };
        let domain = parse_f64("numerics", "L", &take("L")?)?;
        let t_end = parse_f64("numerics", "T", &take("T")?)?;
        let dt = parse_f64("numerics", "dt", &take("dt")?)?;
        let dx = parse_f64("numerics", "dx", &take("dx")?)?;
        let eps = parse_list("numerics", "eps", &take("eps").unwrap_or_default())?;
        let n_paths_text = take("n_paths")?;
        let n_paths = n_paths_text
            .parse()
            .map_err(|_| Error::Config(format!("[numerics] n_paths: '{n_paths_text}' is not a count")))?;
        if let Some(k) = num.keys().next() {
            return Err(Error::Config(format!("[numerics] has no key '{k}'")));
        }

        let mut tolerances = BTreeMap::new();
        for (k, v) in section("tolerances") {
            let x = parse_f64("tolerances", &k, &v)?;
            tolerances.insert(k, x);
        }
        let params = section("params").into_iter().collect();

        let cfg = ExperimentConfig {
            scenario,
            seed,
            drift,
            initial,
            domain,
            t_end,
            dt,
            dx,
            eps,
            n_paths,
            tolerances,
            params,
            out_dir,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Check the invariants shared by every scenario.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("L", self.domain), ("T", self.t_end), ("dt", self.dt), ("dx", self.dx)] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("[numerics] {name} must be > 0, got {v}")));
            }
        }
        if self.dt > self.t_end {
            return Err(Error::Config(format!("dt = {} exceeds T = {}", self.dt, self.t_end)));
        }
        if self.n_paths == 0 {
            return Err(Error::Config("[numerics] n_paths must be >= 1".into()));
        }
        if let Some(e) = self.eps.iter().find(|e| !(**e > 0.0)) {
            return Err(Error::Config(format!("[numerics] eps entries must be > 0, got {e}")));
        }
        let drift = self.drift_field()?;
        self.initial.build()?;
        if let Some(min_eps) = self.min_eps() {
            if self.dx > min_eps / 8.0 * (1.0 + 1e-12) {
                return Err(Error::Config(format!(
                    "dx = {} exceeds min(eps)/8 = {}",
                    self.dx,
                    min_eps / 8.0
                )));
            }
            if !Drift::is_smooth(&drift) && self.dt > min_eps * min_eps / 4.0 * (1.0 + 1e-12) {
                return Err(Error::Config(format!(
                    "dt = {} exceeds min(eps)^2/4 = {} for a mollified rough drift",
                    self.dt,
                    min_eps * min_eps / 4.0
                )));
            }
        }
        Ok(())
    }

    pub fn drift_field(&self) -> Result<DriftField> {
        catalog(&self.drift)
    }

    pub fn min_eps(&self) -> Option<f64> {
        self.eps.iter().copied().reduce(f64::min)
    }

    /// Tolerance `key`, or `default` when unset.
    pub fn tolerance(&self, key: &str, default: f64) -> f64 {
        self.tolerances.get(key).copied().unwrap_or(default)
    }

    /// Reject tolerance and parameter keys the scenario does not know.
    pub fn check_keys(&self, tolerances: &[&str], params: &[&str]) -> Result<()> {
        if let Some(k) = self.tolerances.keys().find(|k| !tolerances.contains(&k.as_str())) {
            return Err(Error::Config(format!("{} has no tolerance '{k}'", self.scenario)));
        }
        if let Some(k) = self.params.keys().find(|k| !params.contains(&k.as_str())) {
            return Err(Error::Config(format!("{} has no parameter '{k}'", self.scenario)));
        }
        Ok(())
    }

    pub fn param_f64(&self, key: &str, default: f64) -> Result<f64> {
        self.params
            .get(key)
            .map_or(Ok(default), |v| parse_f64("params", key, v))
    }

    pub fn param_usize(&self, key: &str, default: usize) -> Result<usize> {
        self.params.get(key).map_or(Ok(default), |v| {
            v.parse()
                .map_err(|_| Error::Config(format!("[params] {key}: '{v}' is not a count")))
        })
    }

    pub fn param_bool(&self, key: &str, default: bool) -> Result<bool> {
        self.params.get(key).map_or(Ok(default), |v| match v.as_str() {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => Err(Error::Config(format!("[params] {key}: '{v}' is not true/false"))),
        })
    }

    pub fn param_list(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        self.params
            .get(key)
            .map_or(Ok(default.to_vec()), |v| parse_list("params", key, v))
    }

    pub fn param_str<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.params.get(key).map_or(default, |v| v.as_str())
    }

    /// Canonical text form: fixed section order, sorted keys, shortest
    /// round-trip floats. Parsing the echo gives back an equal config
    /// (apart from the output directory).
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
        let _ = writeln!(s, "[scenario]\nname = {}\nseed = {}\n", self.scenario, self.seed);
        let _ = writeln!(s, "[drift]\nname = {}", self.drift.name);
        if let Some(b) = &self.drift.base {
            let _ = writeln!(s, "base = {b}");
        }
        for (k, v) in &self.drift.params {
            let _ = writeln!(s, "{k} = {v:?}");
        }
        let _ = writeln!(s, "\n[initial]\nname = {}", self.initial.name);
        for (k, v) in &self.initial.params {
            let _ = writeln!(s, "{k} = {v:?}");
        }
        let _ = writeln!(
            s,
            "\n[numerics]\nL = {:?}\nT = {:?}\ndt = {:?}\ndx = {:?}\neps = {}\nn_paths = {}",
            self.domain,
            self.t_end,
            self.dt,
            self.dx,
            list(&self.eps),
            self.n_paths
        );
        if !self.tolerances.is_empty() {
            let _ = writeln!(s, "\n[tolerances]");
            for (k, v) in &self.tolerances {
                let _ = writeln!(s, "{k} = {v:?}");
            }
        }
        if !self.params.is_empty() {
            let _ = writeln!(s, "\n[params]");
            for (k, v) in &self.params {
                let _ = writeln!(s, "{k} = {v}");
            }
        }
        s
    }
}

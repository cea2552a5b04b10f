//! Rough and random drift fields `b(t, x, ω)`, their semimartingale parts,
//! mollification, spatial primitives, and the hypothesis-norm checker.

mod hypothesis;
mod mollifier;
mod primitive;
mod profile;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

pub use hypothesis::{check_hypothesis, HypothesisCaps, HypothesisReport};
pub use mollifier::{
    cutoff, mollify, rho, rho_with_derivative, MollifiedDrift, Mollifier, DEFAULT_CELLS_PER_EPS,
    MIN_CELLS_PER_EPS,
};
pub use primitive::{primitive, PrimitiveTable, PrimitiveTriple};
pub use profile::Profile;

use crate::brownian::BrownianPath;
use crate::error::{Error, Result};

/// A velocity field that can be evaluated along a Brownian path.
pub trait Drift: Send + Sync {
    fn value(&self, t: f64, x: f64, path: &BrownianPath) -> f64;

    /// `∂_x b`, when known in closed form.
    fn derivative(&self, t: f64, x: f64, path: &BrownianPath) -> Option<f64>;

    fn value_and_derivative(&self, t: f64, x: f64, path: &BrownianPath) -> (f64, Option<f64>) {
        (self.value(t, x, path), self.derivative(t, x, path))
    }

    fn has_derivative(&self) -> bool;

    fn is_smooth(&self) -> bool;

    fn is_time_dependent(&self) -> bool;

    /// `(f, g)` with `db = f dt + g dB` (Itô), when available.
    fn semimartingale(&self, t: f64, x: f64, path: &BrownianPath) -> Option<(f64, f64)>;
}

type FieldFn = Arc<dyn Fn(f64, f64, &BrownianPath) -> f64 + Send + Sync>;

/// User-supplied drift given by closures.
#[derive(Clone)]
pub struct CustomDrift {
    pub eval: FieldFn,
    pub deriv: Option<FieldFn>,
    pub f: Option<FieldFn>,
    pub g: Option<FieldFn>,
    pub smooth: bool,
    pub time_dependent: bool,
}

impl fmt::Debug for CustomDrift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomDrift")
            .field("has_deriv", &self.deriv.is_some())
            .field("has_f", &self.f.is_some())
            .field("has_g", &self.g.is_some())
            .field("smooth", &self.smooth)
            .field("time_dependent", &self.time_dependent)
            .finish()
    }
}

#[derive(Debug, Clone)]
enum DriftKind {
    Static(Profile),
    /// `b(t, x) = b0(x - B_t)`.
    Shifted(Profile),
    Custom(CustomDrift),
}

/// A drift field `b(t, x, ω)`.
#[derive(Debug, Clone)]
pub struct DriftField {
    kind: DriftKind,
}

impl DriftField {
    /// Deterministic, time-independent drift (`f = g = 0`).
    pub fn profile(p: Profile) -> Self {
        DriftField {
            kind: DriftKind::Static(p),
        }
    }

    /// Random drift `b0(x - B_t)`. By Itô's formula
    /// `db = -b0'(x - B_t) dB + ½ b0''(x - B_t) dt`, so `g = -b0'` and `f = ½ b0''`.
    pub fn shifted(b0: Profile) -> Self {
        DriftField {
            kind: DriftKind::Shifted(b0),
        }
    }

    pub fn custom(c: CustomDrift) -> Self {
        DriftField {
            kind: DriftKind::Custom(c),
        }
    }

    pub fn as_profile(&self) -> Option<&Profile> {
        match &self.kind {
            DriftKind::Static(p) => Some(p),
            _ => None,
        }
    }

    /// Base profile `b0` of a shifted drift.
    pub fn shifted_base(&self) -> Option<&Profile> {
        match &self.kind {
            DriftKind::Shifted(p) => Some(p),
            _ => None,
        }
    }

    /// Bound on `|x|` outside which the field vanishes for every `(t, ω)`, if known.
    pub fn support_bound(&self) -> Option<f64> {
        match &self.kind {
            DriftKind::Static(p) => p.support().map(|(a, b)| a.abs().max(b.abs())),
            _ => None,
        }
    }
}

impl Drift for DriftField {
    fn value(&self, t: f64, x: f64, path: &BrownianPath) -> f64 {
        match &self.kind {
            DriftKind::Static(p) => p.value(x),
            DriftKind::Shifted(p) => p.value(x - path.at(t)),
            DriftKind::Custom(c) => (c.eval)(t, x, path),
        }
    }

    fn derivative(&self, t: f64, x: f64, path: &BrownianPath) -> Option<f64> {
        match &self.kind {
            DriftKind::Static(p) => p.d1(x),
            DriftKind::Shifted(p) => p.d1(x - path.at(t)),
            DriftKind::Custom(c) => c.deriv.as_ref().map(|d| d(t, x, path)),
        }
    }

    fn has_derivative(&self) -> bool {
        match &self.kind {
            DriftKind::Static(p) | DriftKind::Shifted(p) => p.is_smooth(),
            DriftKind::Custom(c) => c.deriv.is_some(),
        }
    }

    fn is_smooth(&self) -> bool {
        match &self.kind {
            DriftKind::Static(p) | DriftKind::Shifted(p) => p.is_smooth(),
            DriftKind::Custom(c) => c.smooth,
        }
    }

    fn is_time_dependent(&self) -> bool {
        match &self.kind {
            DriftKind::Static(_) => false,
            DriftKind::Shifted(p) => !matches!(p, Profile::Zero | Profile::Constant { .. }),
            DriftKind::Custom(c) => c.time_dependent,
        }
    }

    fn semimartingale(&self, t: f64, x: f64, path: &BrownianPath) -> Option<(f64, f64)> {
        match &self.kind {
            DriftKind::Static(_) => Some((0.0, 0.0)),
            DriftKind::Shifted(p) => {
                let z = x - path.at(t);
                Some((0.5 * p.d2(z)?, -p.d1(z)?))
            }
            DriftKind::Custom(c) => match (&c.f, &c.g) {
                (Some(f), Some(g)) => Some((f(t, x, path), g(t, x, path))),
                _ => None,
            },
        }
    }
}

/// Catalog entry name plus numeric parameters, as read from a config file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DriftSpec {
    pub name: String,
    /// Base profile for `shifted`.
    pub base: Option<String>,
    pub params: BTreeMap<String, f64>,
}

impl DriftSpec {
    pub fn new(name: &str) -> Self {
        DriftSpec {
            name: name.to_string(),
            ..Default::default()
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn with_base(mut self, base: &str) -> Self {
        self.base = Some(base.to_string());
        self
    }
}

/// Names accepted by [`catalog`].
pub const CATALOG_NAMES: &[&str] = &[
    "zero",
    "constant",
    "linear",
    "bump",
    "sign_sqrt",
    "box",
    "lorentzian",
    "sign",
    "shifted",
];

struct Params<'a> {
    name: &'a str,
    map: &'a BTreeMap<String, f64>,
    allowed: &'a [&'a str],
}

impl Params<'_> {
    fn get(&self, key: &str, default: f64) -> f64 {
        self.map.get(key).copied().unwrap_or(default)
    }

    fn check(&self) -> Result<()> {
        for k in self.map.keys() {
            if !self.allowed.contains(&k.as_str()) {
                return Err(Error::Config(format!(
                    "drift '{}' has no parameter '{k}'",
                    self.name
                )));
            }
        }
        for (k, v) in self.map {
            if !v.is_finite() {
                return Err(Error::Config(format!("drift parameter '{k}' is not finite")));
            }
        }
        Ok(())
    }
}

fn build_profile(name: &str, params: &BTreeMap<String, f64>) -> Result<Profile> {
    let allowed: &[&str] = match name {
        "zero" | "sign" => &[],
        "constant" => &["c"],
        "linear" => &["lambda"],
        "bump" => &["amplitude", "center", "radius"],
        "sign_sqrt" => &["kappa", "radius"],
        "box" => &["lo", "hi", "height"],
        "lorentzian" => &["amplitude"],
        other => return Err(Error::UnknownDrift(other.to_string())),
    };
    let p = Params {
        name,
        map: params,
        allowed,
    };
    p.check()?;
    let profile = match name {
        "zero" => Profile::Zero,
        "sign" => Profile::Sign,
        "constant" => Profile::Constant { c: p.get("c", 1.0) },
        "linear" => Profile::Linear {
            lambda: p.get("lambda", 1.0),
        },
        "bump" => Profile::Bump {
            amplitude: p.get("amplitude", 0.5),
            center: p.get("center", 0.0),
            radius: p.get("radius", 1.0),
        },
        "sign_sqrt" => Profile::SignSqrt {
            kappa: p.get("kappa", 1.0),
            radius: p.get("radius", 2.0),
        },
        "box" => Profile::Box {
            lo: p.get("lo", 0.0),
            hi: p.get("hi", 1.0),
            height: p.get("height", 1.0),
        },
        "lorentzian" => Profile::Lorentzian {
            amplitude: p.get("amplitude", 1.0),
        },
        _ => unreachable!(),
    };
    match profile {
        Profile::Bump { radius, .. } | Profile::SignSqrt { radius, .. } if radius <= 0.0 => {
            Err(Error::Config(format!("drift '{name}' needs radius > 0")))
        }
        Profile::Box { lo, hi, .. } if lo >= hi => {
            Err(Error::Config("box drift needs lo < hi".into()))
        }
        p => Ok(p),
    }
}

/// Build a drift from the named catalog entry.
///
/// `linear` (`b = -λx`) is outside the integrable class and serves only as a
/// flow-level oracle. `shifted` wraps a smooth base profile as `b0(x - B_t)`
/// and carries the semimartingale parts from Itô's formula.
pub fn catalog(spec: &DriftSpec) -> Result<DriftField> {
    if spec.name == "shifted" {
        let base = spec.base.as_deref().unwrap_or("bump");
        if base == "shifted" {
            return Err(Error::Config("shifted drift cannot wrap itself".into()));
        }
        return Ok(DriftField::shifted(build_profile(base, &spec.params)?));
    }
    if spec.base.is_some() {
        return Err(Error::Config(format!(
            "drift '{}' does not take a base profile",
            spec.name
        )));
    }
    Ok(DriftField::profile(build_profile(&spec.name, &spec.params)?))
}

//! Standard symmetric mollifier, the large-scale cutoff, and the mollified drift
//! `b^ε(x) = η(εx) · (b * ρ_ε)(x)`.
//!
//! Convolutions use a fixed cell-centred lattice `y_k = (k + ½)h`, `h = ε/M`,
//! so that `b` is sampled at points that do not move with the evaluation
//! point and `b^ε` is an exact finite sum of smooth kernel translates. The
//! weights are renormalized pointwise to unit mass.

use std::sync::OnceLock;

use crate::brownian::BrownianPath;
use crate::error::{Error, Result};

use super::{Drift, DriftField};

/// Minimum lattice cells per mollifier radius.
pub const MIN_CELLS_PER_EPS: usize = 8;
/// Default lattice cells per mollifier radius.
pub const DEFAULT_CELLS_PER_EPS: usize = 16;

fn normalization() -> f64 {
    static Z: OnceLock<f64> = OnceLock::new();
    *Z.get_or_init(|| {
        let n = 200_000;
        let h = 2.0 / n as f64;
        (1..n).map(|i| bump_raw(-1.0 + i as f64 * h)).sum::<f64>() * h
    })
}

fn bump_raw(x: f64) -> f64 {
    let q = 1.0 - x * x;
    if q <= 0.0 {
        0.0
    } else {
        (-1.0 / q).exp()
    }
}

/// Unit-mass bump `ρ(x) = exp(-1/(1 - x²)) / Z` on `(-1, 1)`.
pub fn rho(x: f64) -> f64 {
    bump_raw(x) / normalization()
}

/// `(ρ(x), ρ'(x))`.
pub fn rho_with_derivative(x: f64) -> (f64, f64) {
    let q = 1.0 - x * x;
    if q <= 0.0 {
        return (0.0, 0.0);
    }
    let r = (-1.0 / q).exp() / normalization();
    (r, r * (-2.0 * x / (q * q)))
}

/// C² cutoff: 1 on `[-1, 1]`, 0 outside `[-2, 2]`, quintic smoothstep between.
/// Returns `(η(r), η'(r))`.
pub fn cutoff(r: f64) -> (f64, f64) {
    let a = r.abs();
    if a <= 1.0 {
        (1.0, 0.0)
    } else if a >= 2.0 {
        (0.0, 0.0)
    } else {
        let s = a - 1.0;
        let smooth = s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);
        let ds = 30.0 * s * s * (1.0 - s) * (1.0 - s);
        (1.0 - smooth, -r.signum() * ds)
    }
}

/// `ρ_ε` sampled against a fixed lattice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mollifier {
    eps: f64,
    cells: usize,
}

impl Mollifier {
    pub fn new(eps: f64) -> Result<Self> {
        Mollifier::with_resolution(eps, DEFAULT_CELLS_PER_EPS)
    }

    /// `cells` lattice cells per radius `ε`; the spacing must satisfy `h <= ε/8`.
    pub fn with_resolution(eps: f64, cells: usize) -> Result<Self> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::InvalidArgument(format!("epsilon must be > 0, got {eps}")));
        }
        if cells < MIN_CELLS_PER_EPS {
            return Err(Error::UnderResolved {
                dz: eps / cells.max(1) as f64,
                eps,
            });
        }
        Ok(Mollifier { eps, cells })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn spacing(&self) -> f64 {
        self.eps / self.cells as f64
    }

    /// `((f * ρ_ε)(x), (f * ρ_ε)'(x))`.
    pub fn convolve(&self, f: impl Fn(f64) -> f64, x: f64) -> (f64, f64) {
        let h = self.spacing();
        let k_lo = ((x - self.eps) / h - 0.5).ceil() as i64;
        let k_hi = ((x + self.eps) / h - 0.5).floor() as i64;
        let (mut s0, mut s1, mut n0, mut n1) = (0.0, 0.0, 0.0, 0.0);
        for k in k_lo..=k_hi {
            let y = (k as f64 + 0.5) * h;
            let (r, dr) = rho_with_derivative((x - y) / self.eps);
            if r == 0.0 {
                continue;
            }
            let v = f(y);
            s0 += r * v;
            n0 += r;
            s1 += dr * v;
            n1 += dr;
        }
        // ρ_ε' carries an extra 1/ε relative to ρ_ε.
        let s1 = s1 / self.eps;
        let n1 = n1 / self.eps;
        let value = s0 / n0;
        (value, (s1 * n0 - s0 * n1) / (n0 * n0))
    }

    /// `η(εx) (f * ρ_ε)(x)` and its derivative.
    pub fn mollify_with_cutoff(&self, f: impl Fn(f64) -> f64, x: f64) -> (f64, f64) {
        let (eta, deta) = cutoff(self.eps * x);
        if eta == 0.0 {
            return (0.0, 0.0);
        }
        let (c, dc) = self.convolve(f, x);
        (eta * c, self.eps * deta * c + eta * dc)
    }
}

/// `b^ε = η_ε · (b * ρ_ε)` for a fixed base drift; smooth, with exact derivative.
#[derive(Debug, Clone)]
pub struct MollifiedDrift {
    base: DriftField,
    mollifier: Mollifier,
}

impl MollifiedDrift {
    pub fn new(base: DriftField, mollifier: Mollifier) -> Self {
        MollifiedDrift { base, mollifier }
    }

    pub fn base(&self) -> &DriftField {
        &self.base
    }

    pub fn eps(&self) -> f64 {
        self.mollifier.eps()
    }

    pub fn mollifier(&self) -> &Mollifier {
        &self.mollifier
    }
}

/// Mollify `drift` at scale `eps` with the default lattice resolution.
pub fn mollify(drift: &DriftField, eps: f64) -> Result<MollifiedDrift> {
    Ok(MollifiedDrift::new(drift.clone(), Mollifier::new(eps)?))
}

impl Drift for MollifiedDrift {
    fn value(&self, t: f64, x: f64, path: &BrownianPath) -> f64 {
        self.value_and_derivative(t, x, path).0
    }

    fn derivative(&self, t: f64, x: f64, path: &BrownianPath) -> Option<f64> {
        Some(self.value_and_derivative(t, x, path).1.unwrap_or(0.0))
    }

    fn value_and_derivative(&self, t: f64, x: f64, path: &BrownianPath) -> (f64, Option<f64>) {
        let (v, d) = self
            .mollifier
            .mollify_with_cutoff(|y| self.base.value(t, y, path), x);
        (v, Some(d))
    }

    fn has_derivative(&self) -> bool {
        true
    }

    fn is_smooth(&self) -> bool {
        true
    }

    fn is_time_dependent(&self) -> bool {
        self.base.is_time_dependent()
    }

    fn semimartingale(&self, _t: f64, _x: f64, _path: &BrownianPath) -> Option<(f64, f64)> {
        None
    }
}

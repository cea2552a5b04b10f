//! Sample-based estimates of the norms entering the integrability hypothesis
//! on the drift: `‖b‖_{L∞(Ω×[0,T], L¹)}`, `‖b‖_{L∞}`, `‖f‖_{L∞(Ω, L¹([0,T]×ℝ))}`,
//! `‖g‖_{L∞(Ω, L¹([0,T], L∞))}` and `‖g‖_{L∞(Ω×[0,T], L¹)}`.
//!
//! Spatial integrals use cell midpoints of the supplied grid, time integrals
//! the trapezoid rule on each path's grid, and `L∞(Ω)` is the maximum over
//! the supplied paths.

use crate::brownian::BrownianPath;
use crate::error::{Error, Result};
use crate::par::{try_map_indexed, Execution};
use crate::quadrature::{trapezoid, SpatialGrid};

use super::Drift;

/// Optional upper bounds; a missing cap is not checked.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HypothesisCaps {
    pub b_l1: Option<f64>,
    pub b_sup: Option<f64>,
    pub f_l1: Option<f64>,
    pub g_l1_sup: Option<f64>,
    pub g_sup_l1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisReport {
    pub b_l1: f64,
    pub b_sup: f64,
    pub f_l1: Option<f64>,
    pub g_l1_sup: Option<f64>,
    pub g_sup_l1: Option<f64>,
    pub passed: bool,
    pub failures: Vec<String>,
}

impl HypothesisReport {
    /// The five norms in a fixed order, `NaN` for the ones not computed.
    pub fn components(&self) -> [f64; 5] {
        [
            self.b_l1,
            self.b_sup,
            self.f_l1.unwrap_or(f64::NAN),
            self.g_l1_sup.unwrap_or(f64::NAN),
            self.g_sup_l1.unwrap_or(f64::NAN),
        ]
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct PathNorms {
    b_l1: f64,
    b_sup: f64,
    f_l1: f64,
    g_l1_sup: f64,
    g_sup_l1: f64,
}

fn path_norms(
    drift: &dyn Drift,
    path: &BrownianPath,
    grid: &SpatialGrid,
    with_fg: bool,
) -> Result<PathNorms> {
    let dx = grid.dx();
    let mids: Vec<f64> = (0..grid.n_cells())
        .map(|j| grid.node(j) + 0.5 * dx)
        .collect();
    let tg = path.grid();
    let mut out = PathNorms::default();
    let mut f_space = Vec::with_capacity(tg.n_steps() + 1);
    let mut g_sup_t = Vec::with_capacity(tg.n_steps() + 1);
    for t in tg.times() {
        let (mut b1, mut f1, mut g1, mut gsup) = (0.0, 0.0, 0.0, 0.0f64);
        for &x in &mids {
            let b = drift.value(t, x, path);
            if !b.is_finite() {
                return Err(Error::NonFinite(format!("b({t}, {x})")));
            }
            b1 += b.abs() * dx;
            out.b_sup = out.b_sup.max(b.abs());
            if with_fg {
                let (f, g) = drift
                    .semimartingale(t, x, path)
                    .ok_or(Error::MissingSemimartingale)?;
                f1 += f.abs() * dx;
                g1 += g.abs() * dx;
                gsup = gsup.max(g.abs());
            }
        }
        out.b_l1 = out.b_l1.max(b1);
        out.g_sup_l1 = out.g_sup_l1.max(g1);
        f_space.push(f1);
        g_sup_t.push(gsup);
    }
    out.f_l1 = trapezoid(&f_space, tg.dt());
    out.g_l1_sup = trapezoid(&g_sup_t, tg.dt());
    Ok(out)
}

/// Estimate the hypothesis norms over `paths` and compare against `caps`.
/// With `with_semimartingale` the drift must provide `f` and `g`.
pub fn check_hypothesis(
    drift: &dyn Drift,
    paths: &[BrownianPath],
    grid: &SpatialGrid,
    caps: &HypothesisCaps,
    with_semimartingale: bool,
    exec: Execution,
) -> Result<HypothesisReport> {
    if paths.is_empty() {
        return Err(Error::InvalidArgument("no sample paths".into()));
    }
    let per_path = try_map_indexed(exec, paths.len(), |i| {
        path_norms(drift, &paths[i], grid, with_semimartingale)
    })?;
    let max = |f: fn(&PathNorms) -> f64| per_path.iter().map(f).fold(0.0, f64::max);
    let fg = |v: f64| with_semimartingale.then_some(v);
    let mut report = HypothesisReport {
        b_l1: max(|n| n.b_l1),
        b_sup: max(|n| n.b_sup),
        f_l1: fg(max(|n| n.f_l1)),
        g_l1_sup: fg(max(|n| n.g_l1_sup)),
        g_sup_l1: fg(max(|n| n.g_sup_l1)),
        passed: true,
        failures: Vec::new(),
    };
    let checks = [
        ("b_l1", Some(report.b_l1), caps.b_l1),
        ("b_sup", Some(report.b_sup), caps.b_sup),
        ("f_l1", report.f_l1, caps.f_l1),
        ("g_l1_sup", report.g_l1_sup, caps.g_l1_sup),
        ("g_sup_l1", report.g_sup_l1, caps.g_sup_l1),
    ];
    for (name, value, cap) in checks {
        match (value, cap) {
            (Some(v), Some(c)) if v > c => {
                report.failures.push(format!("{name} = {v} exceeds cap {c}"))
            }
            (None, Some(_)) => return Err(Error::MissingSemimartingale),
            _ => {}
        }
    }
    report.passed = report.failures.is_empty();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brownian::TimeGrid;
    use crate::drift::{CustomDrift, DriftField, Profile};
    use std::sync::Arc;

    fn paths(n: usize) -> Vec<BrownianPath> {
        let g = TimeGrid::new(0.0, 1.0, 20).unwrap();
        (0..n).map(|s| BrownianPath::sample(g, s as u64)).collect()
    }

    #[test]
    fn zero_drift_passes_with_zero_norms() {
        let g = SpatialGrid::new(-5.0, 5.0, 100).unwrap();
        let caps = HypothesisCaps {
            b_l1: Some(0.0),
            b_sup: Some(0.0),
            f_l1: Some(0.0),
            g_l1_sup: Some(0.0),
            g_sup_l1: Some(0.0),
        };
        let r = check_hypothesis(
            &DriftField::profile(Profile::Zero),
            &paths(3),
            &g,
            &caps,
            true,
            Execution::Sequential,
        )
        .unwrap();
        assert!(r.passed);
        assert_eq!(r.components(), [0.0; 5]);
    }

    #[test]
    fn box_norms_are_exact() {
        let g = SpatialGrid::new(-4.0, 4.0, 80).unwrap();
        let d = DriftField::profile(Profile::Box {
            lo: 0.0,
            hi: 1.0,
            height: 1.0,
        });
        let r = check_hypothesis(&d, &paths(2), &g, &HypothesisCaps::default(), true, Execution::Parallel)
            .unwrap();
        assert!((r.b_l1 - 1.0).abs() < 1e-12);
        assert_eq!(r.b_sup, 1.0);
        assert_eq!(r.f_l1, Some(0.0));
    }

    #[test]
    fn lorentzian_l1_norm_is_pi() {
        let g = SpatialGrid::new(-1e5, 1e5, 4_000_000).unwrap();
        let one = vec![BrownianPath::zero(TimeGrid::new(0.0, 1.0, 1).unwrap())];
        let d = DriftField::profile(Profile::Lorentzian { amplitude: 1.0 });
        let r = check_hypothesis(&d, &one, &g, &HypothesisCaps::default(), false, Execution::Sequential)
            .unwrap();
        // Tail beyond |x| = 1e5 carries 2e-5.
        assert!((r.b_l1 - std::f64::consts::PI).abs() < 3e-5, "{}", r.b_l1);
        assert_eq!(r.f_l1, None);
    }

    #[test]
    fn caps_and_missing_parts() {
        let g = SpatialGrid::new(-4.0, 4.0, 80).unwrap();
        let d = DriftField::profile(Profile::Box {
            lo: 0.0,
            hi: 2.0,
            height: 1.5,
        });
        let caps = HypothesisCaps {
            b_l1: Some(1.0),
            ..Default::default()
        };
        let r = check_hypothesis(&d, &paths(1), &g, &caps, false, Execution::Sequential).unwrap();
        assert!(!r.passed);
        assert_eq!(r.failures.len(), 1);

        let custom = DriftField::custom(CustomDrift {
            eval: Arc::new(|_, _, _| 0.0),
            deriv: None,
            f: None,
            g: None,
            smooth: true,
            time_dependent: true,
        });
        assert!(matches!(
            check_hypothesis(&custom, &paths(1), &g, &HypothesisCaps::default(), true, Execution::Sequential),
            Err(Error::MissingSemimartingale)
        ));
    }

    #[test]
    fn shifted_bump_norms_grow_as_it_narrows() {
        let g = SpatialGrid::new(-8.0, 8.0, 3200).unwrap();
        let ps = paths(2);
        let f_norms: Vec<f64> = [1.0, 0.5, 0.25]
            .iter()
            .map(|&r| {
                let d = DriftField::shifted(Profile::Bump {
                    amplitude: 1.0,
                    center: 0.0,
                    radius: r,
                });
                check_hypothesis(&d, &ps, &g, &HypothesisCaps::default(), true, Execution::Parallel)
                    .unwrap()
                    .f_l1
                    .unwrap()
            })
            .collect();
        assert!(f_norms[1] > 1.8 * f_norms[0] && f_norms[2] > 1.8 * f_norms[1], "{f_norms:?}");
    }
}

//! Monte Carlo estimates: the inverse-Jacobian moment `E[1/∂_x X_{s,t}(x)]`,
//! Lagrangian L² norms of mollified solutions, and commutators
//! `R_ε = b_ε ∂_x V_ε - (b ∂_x V)_ε`.
//!
//! Per-sample results are collected in sample order and reduced sequentially,
//! so parallel and sequential runs agree bit for bit.

use std::io::Write;

use crate::brownian::{BrownianPath, TimeGrid};
use crate::drift::{check_hypothesis, mollify, rho, Drift, DriftField, HypothesisCaps};
use crate::error::{Error, Result};
use crate::flow::{integrate_forward, FlowOptions};
use crate::par::{try_map_indexed, Execution};
use crate::quadrature::{fmt17, linear_fit, mean_and_std_error, mix_seed, trapezoid, SpatialGrid};
use crate::spde::{mollify_initial, DensityField};

/// Smallest sample count accepted by the moment estimator.
pub const MIN_SAMPLES: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_samples: usize,
    /// Hypothesis norms of the drift, in the order of
    /// [`HypothesisReport::components`](crate::drift::HypothesisReport::components).
    pub bound_components: Option<[f64; 5]>,
    /// Smallest Jacobian seen over all samples.
    pub min_jacobian: f64,
    /// Largest Jacobian seen over all samples.
    pub max_jacobian: f64,
    /// Set when some sample had `J <= 0` or a non-finite Jacobian.
    pub flagged: bool,
}

#[derive(Debug, Clone)]
pub struct MomentConfig {
    pub s: f64,
    pub t: f64,
    pub x: f64,
    pub n_samples: usize,
    pub dt: f64,
    pub seed: u64,
    /// Pair every path with its reflection `-B`.
    pub antithetic: bool,
    /// Spatial grid for the hypothesis norms; `None` skips them.
    pub norm_grid: Option<SpatialGrid>,
    pub exec: Execution,
}

impl MomentConfig {
    pub fn new(s: f64, t: f64, x: f64, n_samples: usize, dt: f64, seed: u64) -> Self {
        MomentConfig {
            s,
            t,
            x,
            n_samples,
            dt,
            seed,
            antithetic: false,
            norm_grid: None,
            exec: Execution::Parallel,
        }
    }
}

/// `1/J(s, t, x)` along one path, with `J` from the variational equation.
fn inverse_jacobian(drift: &dyn Drift, path: &BrownianPath, s: f64, x: f64) -> Result<f64> {
    let opts = FlowOptions {
        record_every: usize::MAX,
        track_jacobian: true,
        exec: Execution::Sequential,
        ..FlowOptions::default()
    };
    let mut last = f64::NAN;
    integrate_forward(drift, path, s, &[x], &opts, &mut |_, _, js| {
        last = js.map_or(f64::NAN, |j| j[0]);
        Ok(())
    })?;
    Ok(1.0 / last)
}

/// Estimate `E[|∂_x X_{s,t}(x)|^{-1}]` over independent paths on `[0, t]`.
///
/// Sample `i` uses the path seeded by `mix_seed(seed, i)`.
pub fn estimate_inverse_jacobian_moment(drift: &dyn Drift, cfg: &MomentConfig) -> Result<MomentEstimate> {
    if cfg.n_samples < MIN_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_SAMPLES} samples, got {}",
            cfg.n_samples
        )));
    }
    if !(cfg.t > cfg.s) || cfg.s < 0.0 {
        return Err(Error::InvalidArgument(format!("need 0 <= s < t, got s = {}, t = {}", cfg.s, cfg.t)));
    }
    let grid = TimeGrid::with_max_step(cfg.t, cfg.dt)?;
    if grid.index_of(cfg.s).is_none() {
        return Err(Error::InvalidArgument(format!("s = {} is not a multiple of dt", cfg.s)));
    }
    let samples = try_map_indexed(cfg.exec, cfg.n_samples, |i| {
        let path = BrownianPath::sample(grid, mix_seed(cfg.seed, i as u64));
        let a = inverse_jacobian(drift, &path, cfg.s, cfg.x)?;
        if !cfg.antithetic {
            return Ok::<_, Error>((a, a, a));
        }
        let mirrored: Vec<f64> = path.values().iter().map(|v| -v).collect();
        let mirrored = BrownianPath::from_values(grid, mirrored, path.seed())?;
        let b = inverse_jacobian(drift, &mirrored, cfg.s, cfg.x)?;
        Ok((0.5 * (a + b), a, b))
    })?;
    let values: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let (mean, std_error) = mean_and_std_error(&values);
    let inverses = samples.iter().flat_map(|s| [s.1, s.2]);
    let flagged = inverses.clone().any(|v| !(v > 0.0) || !v.is_finite());
    let min_jacobian = inverses.clone().map(|v| 1.0 / v).fold(f64::INFINITY, f64::min);
    let max_jacobian = inverses.map(|v| 1.0 / v).fold(f64::NEG_INFINITY, f64::max);

    let bound_components = match &cfg.norm_grid {
        Some(g) => Some(bound_components(drift, g, cfg.t, cfg.seed, cfg.exec)?),
        None => None,
    };
    Ok(MomentEstimate {
        mean,
        std_error,
        n_samples: cfg.n_samples,
        bound_components,
        min_jacobian,
        max_jacobian,
        flagged,
    })
}

/// Hypothesis norms over [0, t] on a few coarse paths.
fn bound_components(drift: &dyn Drift, grid: &SpatialGrid, t: f64, seed: u64, exec: Execution) -> Result<[f64; 5]> {
    let tg = TimeGrid::new(0.0, t, 32)?;
    let paths: Vec<BrownianPath> = (0..4)
        .map(|i| BrownianPath::sample(tg, mix_seed(seed ^ 0x5EED, i)))
        .collect();
    let with_fg = drift.semimartingale(0.0, 0.0, &paths[0]).is_some();
    let report = check_hypothesis(drift, &paths, grid, &HypothesisCaps::default(), with_fg, exec)?;
    Ok(report.components())
}

/// Weighted least-squares slope of `ln m` against `ln ε` and its standard error,
/// with per-point variances `(se/m)²`. Falls back to ordinary least squares
/// with zero error when every standard error vanishes.
pub fn log_slope_with_error(eps: &[f64], means: &[f64], std_errors: &[f64]) -> (f64, f64) {
    let x: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let y: Vec<f64> = means.iter().map(|m| m.ln()).collect();
    let sig: Vec<f64> = std_errors.iter().zip(means).map(|(s, m)| s / m).collect();
    if sig.iter().any(|s| !(*s > 0.0)) {
        return (linear_fit(&x, &y).0, 0.0);
    }
    let w: Vec<f64> = sig.iter().map(|s| 1.0 / (s * s)).collect();
    let sw: f64 = w.iter().sum();
    let mx = w.iter().zip(&x).map(|(w, x)| w * x).sum::<f64>() / sw;
    let my = w.iter().zip(&y).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = w.iter().zip(&x).map(|(w, x)| w * (x - mx) * (x - mx)).sum();
    let sxy: f64 = w.iter().zip(&x).zip(&y).map(|((w, x), y)| w * (x - mx) * (y - my)).sum();
    (sxy / sxx, (1.0 / sxx).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct L2Row {
    pub eps: f64,
    pub t: f64,
    /// Sample mean of `∫ |u^ε(t, x)|² dx`.
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
    /// `∫ |u0^ε|² dx`.
    pub initial: f64,
    /// `mean / initial`; `None` when the initial datum vanishes.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct L2Config {
    pub eps_list: Vec<f64>,
    pub t_end: f64,
    pub dt: f64,
    pub grid: SpatialGrid,
    pub n_paths: usize,
    pub seed: u64,
    pub record_every: usize,
    pub exec: Execution,
}

#[derive(Debug, Clone)]
pub struct L2Table {
    pub rows: Vec<L2Row>,
}

impl L2Table {
    /// Largest ratio over the sweep, which serves as the reported constant.
    pub fn max_ratio(&self) -> Option<f64> {
        self.rows.iter().filter_map(|r| r.ratio).reduce(f64::max)
    }
}

/// `E ∫ |u^ε(t)|² dx` for the mollified problem at each `ε`, computed in
/// Lagrangian form `∫ u0^ε(y)² / J(t, y) dy` on common paths.
pub fn l2_bound_check(
    base: &DriftField,
    u0: &(dyn Fn(f64) -> f64 + Sync),
    cfg: &L2Config,
) -> Result<L2Table> {
    if cfg.n_paths == 0 || cfg.eps_list.is_empty() {
        return Err(Error::InvalidArgument("need at least one path and one epsilon".into()));
    }
    let tg = TimeGrid::with_max_step(cfg.t_end, cfg.dt)?;
    let paths: Vec<BrownianPath> = (0..cfg.n_paths)
        .map(|i| BrownianPath::sample(tg, mix_seed(cfg.seed, i as u64)))
        .collect();
    let nodes = cfg.grid.nodes();
    let dx = cfg.grid.dx();
    let mut rows = Vec::new();
    for &eps in &cfg.eps_list {
        let drift = mollify(base, eps)?;
        let u0e = mollify_initial(u0, eps, &cfg.grid)?;
        let sq: Vec<f64> = u0e.iter().map(|v| v * v).collect();
        let initial = trapezoid(&sq, dx);
        let per_path = try_map_indexed(cfg.exec, paths.len(), |i| {
            let opts = FlowOptions {
                record_every: cfg.record_every,
                track_jacobian: true,
                exec: Execution::Sequential,
                ..FlowOptions::default()
            };
            let mut out = Vec::new();
            integrate_forward(&drift, &paths[i], 0.0, &nodes, &opts, &mut |k, _, js| {
                let js = js.ok_or(Error::MissingDerivative)?;
                let f: Vec<f64> = sq.iter().zip(js).map(|(s, j)| s / j).collect();
                out.push((k, trapezoid(&f, dx)));
                Ok(())
            })?;
            Ok::<_, Error>(out)
        })?;
        for r in 0..per_path[0].len() {
            let vals: Vec<f64> = per_path.iter().map(|p| p[r].1).collect();
            let (mean, se) = mean_and_std_error(&vals);
            rows.push(L2Row {
                eps,
                t: tg.time(per_path[0][r].0),
                mean,
                std_error: se,
                n: vals.len(),
                initial,
                ratio: (initial > 0.0).then(|| mean / initial),
            });
        }
    }
    Ok(L2Table { rows })
}

/// `(f * ρ_ε)(x_i)` on a uniform grid with weights `ρ_ε(k dx)` normalized to
/// unit sum; values beyond the grid count as zero.
pub fn grid_convolve(values: &[f64], dx: f64, eps: f64) -> Result<Vec<f64>> {
    let weights = grid_weights(dx, eps)?;
    let r = weights.len() / 2;
    let n = values.len();
    Ok((0..n)
        .map(|i| {
            let lo = i.saturating_sub(r);
            let hi = (i + r).min(n - 1);
            (lo..=hi).map(|j| weights[j + r - i] * values[j]).sum()
        })
        .collect())
}

fn grid_weights(dx: f64, eps: f64) -> Result<Vec<f64>> {
    if !(eps > 0.0) || !(dx > 0.0) {
        return Err(Error::InvalidArgument(format!("spacing {dx}, epsilon {eps}")));
    }
    if dx > eps / 8.0 * (1.0 + 1e-12) {
        return Err(Error::UnderResolved { dz: dx, eps });
    }
    let r = (eps / dx).ceil() as usize;
    let mut w: Vec<f64> = (0..=2 * r)
        .map(|k| rho((k as f64 - r as f64) * dx / eps))
        .collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    Ok(w)
}

/// `R_ε = (b * ρ_ε)(u * ρ_ε) - (b u) * ρ_ε` on the grid.
pub fn commutator_field(u: &[f64], b: &[f64], dx: f64, eps: f64) -> Result<Vec<f64>> {
    if u.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: u.len(),
            found: b.len(),
        });
    }
    let be = grid_convolve(b, dx, eps)?;
    let ue = grid_convolve(u, dx, eps)?;
    let bu: Vec<f64> = b.iter().zip(u).map(|(b, u)| b * u).collect();
    let bue = grid_convolve(&bu, dx, eps)?;
    Ok(be.iter().zip(&ue).zip(&bue).map(|((b, u), c)| b * u - c).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommutatorRecord {
    pub eps: f64,
    /// `(mean over samples of ∫∫ R_ε² dx dt)^{1/2}`; the time integral is
    /// dropped when a sample has a single record.
    pub l2_norm: f64,
}

/// Commutator norm for samples of `∂_x V = u` and the unmollified drift.
pub fn commutator(samples: &[DensityField], drift: &dyn Drift, eps: f64, exec: Execution) -> Result<CommutatorRecord> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no solution samples".into()));
    }
    let per_sample = try_map_indexed(exec, samples.len(), |i| {
        let u = &samples[i];
        let grid = u.grid();
        let nodes = grid.nodes();
        let times = u.times();
        let mut per_time = Vec::with_capacity(times.len());
        for (r, &t) in times.iter().enumerate() {
            let b: Vec<f64> = nodes.iter().map(|&x| drift.value(t, x, u.path())).collect();
            let rf = commutator_field(u.row(r), &b, grid.dx(), eps)?;
            let sq: Vec<f64> = rf.iter().map(|v| v * v).collect();
            per_time.push(trapezoid(&sq, grid.dx()));
        }
        if per_time.len() == 1 {
            return Ok::<_, Error>(per_time[0]);
        }
        let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
        Ok(trapezoid(&per_time, dt))
    })?;
    let mean = per_sample.iter().sum::<f64>() / per_sample.len() as f64;
    Ok(CommutatorRecord {
        eps,
        l2_norm: mean.sqrt(),
    })
}

#[derive(Debug, Clone)]
pub struct CommutatorStudy {
    pub records: Vec<CommutatorRecord>,
}

impl CommutatorStudy {
    /// Norms decrease strictly as `ε` decreases along the list.
    pub fn strictly_decreasing(&self) -> bool {
        self.records.windows(2).all(|w| w[1].l2_norm < w[0].l2_norm)
    }

    /// Last norm over first norm.
    pub fn final_ratio(&self) -> f64 {
        self.records.last().unwrap().l2_norm / self.records[0].l2_norm
    }

    /// Log-log slope of the norm against `ε`.
    pub fn rate(&self) -> f64 {
        let e: Vec<f64> = self.records.iter().map(|r| r.eps).collect();
        let n: Vec<f64> = self.records.iter().map(|r| r.l2_norm).collect();
        crate::quadrature::loglog_slope(&e, &n)
    }
}

/// [`commutator`] over a list of `ε` on the same solution samples.
pub fn commutator_decay_study(
    drift: &dyn Drift,
    samples: &[DensityField],
    eps_list: &[f64],
    exec: Execution,
) -> Result<CommutatorStudy> {
    let records = eps_list
        .iter()
        .map(|&e| commutator(samples, drift, e, exec))
        .collect::<Result<Vec<_>>>()?;
    Ok(CommutatorStudy { records })
}

/// One line of an estimate table.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRow {
    pub quantity: String,
    pub eps: Option<f64>,
    pub t: Option<f64>,
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

/// Header of [`write_estimates_csv`].
pub const ESTIMATE_COLUMNS: [&str; 6] = ["quantity", "eps", "t", "mean", "std_error", "n"];

/// CSV with columns `quantity,eps,t,mean,std_error,n`; missing `eps`/`t` are empty.
pub fn write_estimates_csv<W: Write>(rows: &[EstimateRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ESTIMATE_COLUMNS)?;
    let opt = |v: Option<f64>| v.map(fmt17).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.quantity.clone(),
            opt(r.eps),
            opt(r.t),
            fmt17(r.mean),
            fmt17(r.std_error),
            r.n.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

//! Stochastic flows `X_{s,t}(x)` of `dX = b(t, X) dt + dB` and their inverses,
//! Jacobians computed two independent ways, and exponential martingales.
//!
//! The noise is additive with unit coefficient, so Itô and Stratonovich
//! readings of the characteristics coincide and explicit Euler–Maruyama is
//! strong order one for smooth drifts.

use std::io::Write;

use crate::brownian::{ito_integral, BrownianPath};
use crate::drift::{Drift, PrimitiveTriple};
use crate::error::{Error, Result};
use crate::par::{for_each_indexed_mut, Execution};
use crate::quadrature::{fmt17, rms, trapezoid, SpatialGrid};

/// Points per chunk below which a step is integrated sequentially.
const MIN_PARALLEL_CHUNK: usize = 512;

/// How the unit noise coefficient is coupled to the increment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseCoupling {
    #[default]
    Ito,
    /// Average of the coefficient at both ends of the step.
    Stratonovich,
}

impl NoiseCoupling {
    fn increment(self, db: f64) -> f64 {
        let sigma = |_x: f64| 1.0;
        match self {
            NoiseCoupling::Ito => sigma(0.0) * db,
            NoiseCoupling::Stratonovich => 0.5 * (sigma(0.0) + sigma(0.0)) * db,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FlowOptions {
    /// Keep every `record_every`-th time step (the final step is always kept).
    pub record_every: usize,
    /// Accumulate `log J = ∫ b'(X) du` (trapezoid) while integrating.
    pub track_jacobian: bool,
    /// Stop at this time instead of the end of the path grid.
    pub t_end: Option<f64>,
    pub coupling: NoiseCoupling,
    pub exec: Execution,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            record_every: 1,
            track_jacobian: true,
            t_end: None,
            coupling: NoiseCoupling::Ito,
            exec: Execution::Parallel,
        }
    }
}

/// Forward trajectories on a set of initial points.
#[derive(Debug, Clone)]
pub struct FlowSolution {
    s: f64,
    grid_x: Vec<f64>,
    step_indices: Vec<usize>,
    trajectories: Vec<Vec<f64>>,
    jacobians: Option<Vec<Vec<f64>>>,
    path: BrownianPath,
    record_every: usize,
}

impl FlowSolution {
    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn grid_x(&self) -> &[f64] {
        &self.grid_x
    }

    pub fn path(&self) -> &BrownianPath {
        &self.path
    }

    /// Path-grid indices of the recorded times.
    pub fn step_indices(&self) -> &[usize] {
        &self.step_indices
    }

    pub fn times(&self) -> Vec<f64> {
        self.step_indices
            .iter()
            .map(|&i| self.path.grid().time(i))
            .collect()
    }

    pub fn n_records(&self) -> usize {
        self.step_indices.len()
    }

    /// `X(s, t_r, ·)` at record `r`.
    pub fn positions(&self, r: usize) -> &[f64] {
        &self.trajectories[r]
    }

    pub fn final_positions(&self) -> &[f64] {
        self.trajectories.last().unwrap()
    }

    /// Streaming `J = ∂_x X` at record `r`, when tracked.
    pub fn jacobian(&self, r: usize) -> Option<&[f64]> {
        self.jacobians.as_ref().map(|j| j[r].as_slice())
    }

    pub fn has_full_resolution(&self) -> bool {
        self.record_every == 1
    }

    /// Trajectory of point `j` across the recorded times.
    pub fn trajectory(&self, j: usize) -> Vec<f64> {
        self.trajectories.iter().map(|row| row[j]).collect()
    }

    /// CSV rows `(s, t, x, X, J)`; `J` is `NaN` when not tracked.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["s", "t", "x", "X", "J"])?;
        let times = self.times();
        for (r, t) in times.iter().enumerate() {
            for (j, x) in self.grid_x.iter().enumerate() {
                let jac = self.jacobian(r).map_or(f64::NAN, |v| v[j]);
                w.write_record([
                    fmt17(self.s),
                    fmt17(*t),
                    fmt17(*x),
                    fmt17(self.trajectories[r][j]),
                    fmt17(jac),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn check_increasing(xs: &[f64], step: usize) -> Result<()> {
    for (j, w) in xs.windows(2).enumerate() {
        if !(w[1] > w[0]) {
            if !(w[0].is_finite() && w[1].is_finite()) {
                let index = if w[0].is_finite() { j + 1 } else { j };
                return Err(Error::NonFiniteState { step, index });
            }
            return Err(Error::MonotonicityViolation { step, index: j });
        }
    }
    if let Some(j) = xs.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteState { step, index: j });
    }
    Ok(())
}

fn node_index(path: &BrownianPath, t: f64, what: &str) -> Result<usize> {
    path.grid()
        .index_of(t)
        .ok_or_else(|| Error::InvalidArgument(format!("{what} = {t} is not a node of the path grid")))
}

#[derive(Debug, Clone, Copy)]
struct PointState {
    x: f64,
    log_j: f64,
    d_prev: f64,
}

/// Euler–Maruyama flow from time `s` on initial points `grid_x`, recording
/// every step and tracking the Jacobian when the drift has a derivative.
pub fn solve_forward(
    drift: &dyn Drift,
    path: &BrownianPath,
    s: f64,
    grid_x: &[f64],
) -> Result<FlowSolution> {
    let opts = FlowOptions {
        track_jacobian: drift.has_derivative(),
        ..FlowOptions::default()
    };
    solve_forward_with(drift, path, s, grid_x, &opts)
}

pub fn solve_forward_with(
    drift: &dyn Drift,
    path: &BrownianPath,
    s: f64,
    grid_x: &[f64],
    opts: &FlowOptions,
) -> Result<FlowSolution> {
    let mut step_indices = Vec::new();
    let mut trajectories = Vec::new();
    let mut jacobians = opts.track_jacobian.then(Vec::new);
    integrate_forward(drift, path, s, grid_x, opts, &mut |k, xs, js| {
        step_indices.push(k);
        trajectories.push(xs.to_vec());
        if let (Some(all), Some(js)) = (jacobians.as_mut(), js) {
            all.push(js.to_vec());
        }
        Ok(())
    })?;
    Ok(FlowSolution {
        s,
        grid_x: grid_x.to_vec(),
        step_indices,
        trajectories,
        jacobians,
        path: path.clone(),
        record_every: opts.record_every,
    })
}

/// Receives `(path-grid index, X(s, t_k, ·), J(s, t_k, ·))` at each recorded step.
pub type FlowObserver<'a> = dyn FnMut(usize, &[f64], Option<&[f64]>) -> Result<()> + 'a;

/// Integrate the flow, handing each recorded step to `observer` instead of
/// storing trajectories.
pub fn integrate_forward(
    drift: &dyn Drift,
    path: &BrownianPath,
    s: f64,
    grid_x: &[f64],
    opts: &FlowOptions,
    observer: &mut FlowObserver<'_>,
) -> Result<()> {
    if grid_x.is_empty() {
        return Err(Error::InvalidArgument("no initial points".into()));
    }
    check_increasing(grid_x, 0)?;
    if opts.record_every == 0 {
        return Err(Error::InvalidArgument("record_every must be >= 1".into()));
    }
    if opts.track_jacobian && !drift.has_derivative() {
        return Err(Error::MissingDerivative);
    }
    let start = node_index(path, s, "start time")?;
    let end = match opts.t_end {
        Some(t) => node_index(path, t, "end time")?,
        None => path.grid().n_steps(),
    };
    if end < start {
        return Err(Error::InvalidArgument("end time before start time".into()));
    }
    let grid = path.grid();
    let dt = grid.dt();
    let track = opts.track_jacobian;

    let mut state: Vec<PointState> = grid_x
        .iter()
        .map(|&x| PointState {
            x,
            log_j: 0.0,
            d_prev: 0.0,
        })
        .collect();
    let mut positions = grid_x.to_vec();
    let mut jac = vec![1.0; grid_x.len()];

    for k in start..=end {
        let t = grid.time(k);
        let advance = k < end;
        let db = if advance {
            opts.coupling.increment(path.increment(k))
        } else {
            0.0
        };
        let first = k == start;
        let record = first || k == end || (k - start) % opts.record_every == 0;
        if !advance && !track {
            observer(k, &positions, None)?;
            break;
        }
        for_each_indexed_mut(opts.exec, &mut state, MIN_PARALLEL_CHUNK, |_, p| {
            let (v, d) = if advance {
                drift.value_and_derivative(t, p.x, path)
            } else {
                (0.0, drift.derivative(t, p.x, path))
            };
            if track {
                let d = d.unwrap_or(f64::NAN);
                if !first {
                    p.log_j += 0.5 * dt * (p.d_prev + d);
                }
                p.d_prev = d;
            }
            if advance {
                p.x += v * dt + db;
            }
        });
        if record {
            if track {
                for (dst, p) in jac.iter_mut().zip(&state) {
                    *dst = p.log_j.exp();
                }
            }
            observer(k, &positions, track.then_some(jac.as_slice()))?;
        }
        if advance {
            for (dst, p) in positions.iter_mut().zip(&state) {
                *dst = p.x;
            }
            check_increasing(&positions, k + 1 - start)?;
        }
    }
    Ok(())
}

/// Inverse flow `Y_{s,t}(y)` for `s` running from `t` back to the grid start.
#[derive(Debug, Clone)]
pub struct BackwardFlow {
    t: f64,
    grid_y: Vec<f64>,
    /// Ascending path-grid indices of `s`.
    step_indices: Vec<usize>,
    trajectories: Vec<Vec<f64>>,
}

impl BackwardFlow {
    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn grid_y(&self) -> &[f64] {
        &self.grid_y
    }

    pub fn step_indices(&self) -> &[usize] {
        &self.step_indices
    }

    /// `Y_{s,t}(·)` for the `r`-th recorded `s` (ascending in `s`).
    pub fn positions(&self, r: usize) -> &[f64] {
        &self.trajectories[r]
    }

    /// `Y_{s,t}` at the earliest recorded `s`.
    pub fn initial_positions(&self) -> &[f64] {
        &self.trajectories[0]
    }
}

/// Time-reversed Euler scheme for `Y_{s,t} = y - ∫_s^t b(u, Y_{u,t}) du - (B_t - B_s)`.
pub fn solve_backward(
    drift: &dyn Drift,
    path: &BrownianPath,
    t: f64,
    grid_y: &[f64],
) -> Result<BackwardFlow> {
    if grid_y.is_empty() {
        return Err(Error::InvalidArgument("no terminal points".into()));
    }
    check_increasing(grid_y, 0)?;
    let end = node_index(path, t, "terminal time")?;
    let grid = path.grid();
    let dt = grid.dt();
    let mut y = grid_y.to_vec();
    let mut trajectories = vec![y.clone()];
    for k in (1..=end).rev() {
        let s = grid.time(k);
        let db = path.increment(k - 1);
        for_each_indexed_mut(Execution::Parallel, &mut y, MIN_PARALLEL_CHUNK, |_, v| {
            *v -= drift.value(s, *v, path) * dt + db;
        });
        check_increasing(&y, end - k + 1)?;
        trajectories.push(y.clone());
    }
    trajectories.reverse();
    Ok(BackwardFlow {
        t,
        grid_y: grid_y.to_vec(),
        step_indices: (0..=end).collect(),
        trajectories,
    })
}

/// `J(s, t, x_j) = exp(∫_s^t b'(u, X(s, u, x_j)) du)` by the trapezoid rule,
/// for every recorded time of a full-resolution solution.
pub fn jacobian_variational(solution: &FlowSolution, drift: &dyn Drift) -> Result<Vec<Vec<f64>>> {
    if !drift.has_derivative() {
        return Err(Error::MissingDerivative);
    }
    if !solution.has_full_resolution() {
        return Err(Error::InvalidArgument(
            "variational Jacobian needs every time step recorded".into(),
        ));
    }
    let grid = solution.path.grid();
    let dt = grid.dt();
    let n = solution.grid_x.len();
    let mut log_j = vec![0.0; n];
    let mut d_prev: Vec<f64> = Vec::new();
    let mut out = Vec::with_capacity(solution.n_records());
    for (r, &k) in solution.step_indices.iter().enumerate() {
        let t = grid.time(k);
        let d: Vec<f64> = solution.trajectories[r]
            .iter()
            .map(|&x| drift.derivative(t, x, &solution.path).unwrap_or(f64::NAN))
            .collect();
        if r > 0 {
            for j in 0..n {
                log_j[j] += 0.5 * dt * (d_prev[j] + d[j]);
            }
        }
        out.push(log_j.iter().map(|l| l.exp()).collect());
        d_prev = d;
    }
    Ok(out)
}

/// Jacobians obtained from the Itô–Wentzell–Kunita expansion of the primitive
/// `b̃` along the flow:
///
/// ```text
/// ∫_s^t b'(X_u) du = 2 [ b̃(t, X_t) - b̃(s, x) - ∫ f̃ du - ∫ g̃ dB - ∫ b² du - ∫ g du - ∫ b dB ]
/// ```
#[derive(Debug, Clone)]
pub struct IwkJacobians {
    /// Per recorded time, per point.
    pub jacobians: Vec<Vec<f64>>,
    /// Variational Jacobians on the same solution.
    pub variational: Vec<Vec<f64>>,
    /// `|J_iwk - J_var| / J_var` at the final time, per point.
    pub relative_residual: Vec<f64>,
}

impl IwkJacobians {
    pub fn rms_relative_residual(&self) -> f64 {
        rms(&self.relative_residual)
    }
}

/// Evaluate the Itô–Wentzell–Kunita representation of `J` with primitives
/// tabulated on `primitive_grid`, which must cover the trajectories. `du`
/// integrals use the trapezoid rule and `dB` integrals left-point sums.
pub fn jacobian_iwk(
    solution: &FlowSolution,
    drift: &dyn Drift,
    primitive_grid: &SpatialGrid,
) -> Result<IwkJacobians> {
    if !solution.has_full_resolution() {
        return Err(Error::InvalidArgument(
            "Itô–Wentzell–Kunita Jacobian needs every time step recorded".into(),
        ));
    }
    let path = &solution.path;
    let grid = path.grid();
    let dt = grid.dt();
    let n = solution.grid_x.len();
    let time_dependent = drift.is_time_dependent();

    let t0 = grid.time(solution.step_indices[0]);
    let mut triple = PrimitiveTriple::build(drift, t0, path, primitive_grid)?;
    let b_tilde_start: Vec<f64> = solution.grid_x.iter().map(|&x| triple.b.eval(x)).collect();

    // Running integrals per point.
    let mut int_du = vec![0.0; n]; // ∫ (f̃ + b² + g) du
    let mut int_db = vec![0.0; n]; // ∫ (g̃ + b) dB
    let mut prev_du: Vec<f64> = Vec::new();
    let mut out = Vec::with_capacity(solution.n_records());

    for (r, &k) in solution.step_indices.iter().enumerate() {
        let t = grid.time(k);
        if r > 0 && time_dependent {
            triple = PrimitiveTriple::build(drift, t, path, primitive_grid)?;
        }
        let xs = &solution.trajectories[r];
        let mut du = Vec::with_capacity(n);
        let mut db_integrand = Vec::with_capacity(n);
        for &x in xs {
            let b = drift.value(t, x, path);
            let (_, g) = drift
                .semimartingale(t, x, path)
                .ok_or(Error::MissingSemimartingale)?;
            du.push(triple.f.eval(x) + b * b + g);
            db_integrand.push(triple.g.eval(x) + b);
        }
        if r > 0 {
            for j in 0..n {
                int_du[j] += 0.5 * dt * (prev_du[j] + du[j]);
            }
        }
        let row: Vec<f64> = (0..n)
            .map(|j| {
                let log_j = 2.0 * (triple.b.eval(xs[j]) - b_tilde_start[j] - int_du[j] - int_db[j]);
                log_j.exp()
            })
            .collect();
        out.push(row);
        if k < grid.n_steps() && r + 1 < solution.n_records() {
            let inc = path.increment(k);
            for j in 0..n {
                int_db[j] += db_integrand[j] * inc;
            }
        }
        prev_du = du;
    }

    let variational = jacobian_variational(solution, drift)?;
    let last = out.len() - 1;
    let relative_residual = (0..n)
        .map(|j| (out[last][j] - variational[last][j]).abs() / variational[last][j])
        .collect();
    Ok(IwkJacobians {
        jacobians: out,
        variational,
        relative_residual,
    })
}

/// Inverse `ψ_t` of `x ↦ X(s, t, x)` as a monotone piecewise-linear interpolant.
#[derive(Debug, Clone)]
pub struct InverseFlow {
    images: Vec<f64>,
    preimages: Vec<f64>,
    jacobians: Option<Vec<f64>>,
}

impl InverseFlow {
    /// Inverse of the monotone table `preimages[j] ↦ images[j]`.
    pub fn from_table(
        images: Vec<f64>,
        preimages: Vec<f64>,
        jacobians: Option<Vec<f64>>,
    ) -> Result<Self> {
        if images.len() != preimages.len() || images.is_empty() {
            return Err(Error::LengthMismatch {
                expected: preimages.len(),
                found: images.len(),
            });
        }
        check_increasing(&images, 0)?;
        Ok(InverseFlow {
            images,
            preimages,
            jacobians,
        })
    }

    pub fn range(&self) -> (f64, f64) {
        (self.images[0], *self.images.last().unwrap())
    }

    /// Bracketing cell `k` and weight `θ ∈ [0, 1]` with
    /// `x = X_k + θ (X_{k+1} - X_k)`.
    pub fn locate(&self, x: f64) -> Result<(usize, f64)> {
        let (lo, hi) = self.range();
        if !(x >= lo && x <= hi) {
            return Err(Error::QueryOutsideRange { x, lo, hi });
        }
        let n = self.images.len();
        if n == 1 {
            return Ok((0, 0.0));
        }
        let k = self.images.partition_point(|&v| v <= x).saturating_sub(1).min(n - 2);
        let theta = (x - self.images[k]) / (self.images[k + 1] - self.images[k]);
        Ok((k, theta))
    }

    /// `ψ_t(x)`.
    pub fn eval(&self, x: f64) -> Result<f64> {
        let (k, theta) = self.locate(x)?;
        if theta == 0.0 {
            return Ok(self.preimages[k]);
        }
        Ok(self.preimages[k] + theta * (self.preimages[k + 1] - self.preimages[k]))
    }

    /// `J(ψ_t(x))`, interpolated with the same weights as `ψ_t`.
    pub fn forward_jacobian_at(&self, x: f64) -> Result<f64> {
        let js = self.jacobians.as_ref().ok_or(Error::MissingDerivative)?;
        let (k, theta) = self.locate(x)?;
        if theta == 0.0 {
            return Ok(js[k]);
        }
        Ok(js[k] + theta * (js[k + 1] - js[k]))
    }

    pub fn images(&self) -> &[f64] {
        &self.images
    }

    pub fn preimages(&self) -> &[f64] {
        &self.preimages
    }

    pub fn jacobians(&self) -> Option<&[f64]> {
        self.jacobians.as_deref()
    }
}

/// Invert the flow at record `r`.
pub fn invert_flow(solution: &FlowSolution, r: usize) -> Result<InverseFlow> {
    if r >= solution.n_records() {
        return Err(Error::InvalidArgument(format!("no record {r}")));
    }
    let images = solution.trajectories[r].clone();
    check_increasing(&images, solution.step_indices[r])?;
    Ok(InverseFlow {
        images,
        preimages: solution.grid_x.clone(),
        jacobians: solution.jacobian(r).map(|j| j.to_vec()),
    })
}

/// `exp(∫ h dB - ½ ∫ h² du)` with a left-point Itô sum and trapezoid time quadrature.
pub fn exponential_martingale(integrand: &[f64], path: &BrownianPath) -> Result<f64> {
    let stochastic = ito_integral(integrand, path)?;
    let squares: Vec<f64> = integrand.iter().map(|h| h * h).collect();
    Ok((stochastic - 0.5 * trapezoid(&squares, path.grid().dt())).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brownian::TimeGrid;
    use crate::drift::{DriftField, Profile};
    use crate::par::map_indexed;
    use crate::quadrature::{loglog_slope, mean_and_std_error};

    fn bump() -> DriftField {
        DriftField::profile(Profile::Bump {
            amplitude: 0.5,
            center: 0.0,
            radius: 1.0,
        })
    }

    fn points(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|j| lo + (hi - lo) * j as f64 / (n - 1) as f64)
            .collect()
    }

    #[test]
    fn zero_drift_translates_by_noise() {
        let path = BrownianPath::sample(TimeGrid::new(0.0, 1.0, 200).unwrap(), 4);
        let xs = points(-1.0, 1.0, 11);
        let sol = solve_forward(&DriftField::profile(Profile::Zero), &path, 0.25, &xs).unwrap();
        let b = path.values();
        for (r, &k) in sol.step_indices().iter().enumerate() {
            for (j, &x) in xs.iter().enumerate() {
                assert!((sol.positions(r)[j] - (x + b[k] - b[50])).abs() < 1e-12);
                assert_eq!(sol.jacobian(r).unwrap()[j], 1.0);
            }
        }
        assert_eq!(sol.step_indices()[0], 50);
    }

    #[test]
    fn constant_drift_is_exact() {
        let path = BrownianPath::sample(TimeGrid::new(0.0, 1.0, 100).unwrap(), 5);
        let xs = points(-1.0, 1.0, 5);
        let c = -0.7;
        let sol = solve_forward(&DriftField::profile(Profile::Constant { c }), &path, 0.0, &xs).unwrap();
        let bt = *path.values().last().unwrap();
        for (j, &x) in xs.iter().enumerate() {
            assert!((sol.final_positions()[j] - (x + c + bt)).abs() < 1e-12);
        }
        let back = solve_backward(&DriftField::profile(Profile::Constant { c }), &path, 1.0, &xs).unwrap();
        for (j, &y) in xs.iter().enumerate() {
            assert!((back.initial_positions()[j] - (y - c - bt)).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_zero_drift_is_exact() {
        let path = BrownianPath::sample(TimeGrid::new(0.0, 1.0, 64).unwrap(), 6);
        let ys = points(-2.0, 2.0, 9);
        let back = solve_backward(&DriftField::profile(Profile::Zero), &path, 0.5, &ys).unwrap();
        let b = path.values();
        for (r, &k) in back.step_indices().iter().enumerate() {
            for (j, &y) in ys.iter().enumerate() {
                assert!((back.positions(r)[j] - (y - (b[32] - b[k]))).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ornstein_uhlenbeck_mean_and_jacobian() {
        let lambda = 1.0;
        let ou = DriftField::profile(Profile::Linear { lambda });
        let grid = TimeGrid::new(0.0, 1.0, 1000).unwrap();
        let x0 = 1.0;
        let finals: Vec<(f64, f64)> = map_indexed(Execution::Parallel, 10_000, |i| {
            let path = BrownianPath::sample(grid, 10_000 + i as u64);
            let opts = FlowOptions {
                record_every: 1000,
                exec: Execution::Sequential,
                ..FlowOptions::default()
            };
            let sol = solve_forward_with(&ou, &path, 0.0, &[x0], &opts).unwrap();
            (sol.final_positions()[0], sol.jacobian(sol.n_records() - 1).unwrap()[0])
        });
        let xs: Vec<f64> = finals.iter().map(|v| v.0).collect();
        let (mean, se) = mean_and_std_error(&xs);
        let exact = (-lambda).exp() * x0;
        assert!((mean - exact).abs() < 3.0 * se + 1e-3, "{mean} vs {exact} (se {se})");
        for (_, j) in finals {
            assert!((j - (-lambda).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let path = BrownianPath::sample(TimeGrid::new(0.0, 1.0, 2000).unwrap(), 8);
        let dx = 1e-3;
        let xs = points(-1.5, 1.5, 3001);
        let sol = solve_forward(&bump(), &path, 0.0, &xs).unwrap();
        let last = sol.n_records() - 1;
        let x = sol.final_positions();
        let j = sol.jacobian(last).unwrap();
        let mut worst = 0.0f64;
        for i in 1..xs.len() - 1 {
            let fd = (x[i + 1] - x[i - 1]) / (2.0 * dx);
            worst = worst.max((fd - j[i]).abs() / j[i]);
        }
        // O(dt) gap between the Euler map's derivative and the trapezoid exponent.
        assert!(worst < 2e-3, "worst relative gap {worst}");
    }

    #[test]
    fn streaming_jacobian_equals_variational() {
        let path = BrownianPath::sample(TimeGrid::new(0.0, 1.0, 300).unwrap(), 9);
        let xs = points(-1.0, 1.0, 21);
        let sol = solve_forward(&bump(), &path, 0.0, &xs).unwrap();
        let var = jacobian_variational(&sol, &bump()).unwrap();
        for r in 0..sol.n_records() {
            assert_eq!(sol.jacobian(r).unwrap(), var[r].as_slice());
        }
        let coarse = solve_forward_with(
            &bump(),
            &path,
            0.0,
            &xs,
            &FlowOptions {
                record_every: 7,
                ..FlowOptions::default()
            },
        )
        .unwrap();
        assert_eq!(*coarse.step_indices().last().unwrap(), 300);
        for (r, &k) in coarse.step_indices().iter().enumerate() {
            assert_eq!(coarse.positions(r), sol.positions(k));
            assert_eq!(coarse.jacobian(r).unwrap(), var[k].as_slice());
        }
        assert!(jacobian_variational(&coarse, &bump()).is_err());
    }

    #[test]
    fn stratonovich_coupling_changes_nothing() {
        let path = BrownianPath::sample(TimeGrid::new(0.0, 1.0, 100).unwrap(), 10);
        let xs = points(-1.0, 1.0, 7);
        let ito = solve_forward(&bump(), &path, 0.0, &xs).unwrap();
        let strat = solve_forward_with(
            &bump(),
            &path,
            0.0,
            &xs,
            &FlowOptions {
                coupling: NoiseCoupling::Stratonovich,
                ..FlowOptions::default()
            },
        )
        .unwrap();
        for r in 0..ito.n_records() {
            assert_eq!(ito.positions(r), strat.positions(r));
            assert_eq!(ito.jacobian(r), strat.jacobian(r));
        }
    }

    #[test]
    fn crossing_trajectories_are_rejected() {
        let path = BrownianPath::sample(TimeGrid::new(0.0, 1.0, 100).unwrap(), 11);
        let stiff = DriftField::profile(Profile::Linear { lambda: 300.0 });
        let err = solve_forward(&stiff, &path, 0.0, &[0.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::MonotonicityViolation { step: 1, index: 0 }));
        assert!(solve_forward(&bump(), &path, 0.0, &[1.0, 0.0]).is_err());
        assert!(solve_forward(&bump(), &path, 0.013, &[0.0]).is_err());
    }

    #[test]
    fn rough_drift_has_no_jacobian() {
        let path = BrownianPath::sample(TimeGrid::new(0.0, 1.0, 10).unwrap(), 12);
        let rough = DriftField::profile(Profile::Box {
            lo: 0.0,
            hi: 1.0,
            height: 1.0,
        });
        let sol = solve_forward(&rough, &path, 0.0, &[0.0, 0.5]).unwrap();
        assert!(sol.jacobian(0).is_none());
        assert!(matches!(
            jacobian_variational(&sol, &rough),
            Err(Error::MissingDerivative)
        ));
        let forced = FlowOptions::default();
        assert!(solve_forward_with(&rough, &path, 0.0, &[0.0], &forced).is_err());
    }

    #[test]
    fn forward_after_backward_returns_to_start() {
        let base = BrownianPath::sample(TimeGrid::new(0.0, 1.0, 10).unwrap(), 13);
        let ys = points(-1.0, 1.0, 9);
        let mut dts = Vec::new();
        let mut errs = Vec::new();
        for factor in [4, 16, 64, 256] {
            let path = base.refine(factor).unwrap();
            let back = solve_backward(&bump(), &path, 1.0, &ys).unwrap();
            let fwd = solve_forward(&bump(), &path, 0.0, back.initial_positions()).unwrap();
            let err = fwd
                .final_positions()
                .iter()
                .zip(&ys)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            dts.push(path.grid().dt());
            errs.push(err);
        }
        let slope = loglog_slope(&dts, &errs);
        assert!(slope >= 0.5, "slope {slope}, errors {errs:?}");
    }

    #[test]
    fn strong_convergence_order_one() {
        let drift = bump();
        let xs = [-0.5, 0.0, 0.4];
        let coarse_steps = [16usize, 32, 64];
        let mut errs = vec![Vec::new(); coarse_steps.len()];
        for seed in 0..64 {
            let base = BrownianPath::sample(TimeGrid::new(0.0, 1.0, 16).unwrap(), 300 + seed);
            let reference_path = base.refine(64 * 16).unwrap();
            let reference = solve_forward(&drift, &reference_path, 0.0, &xs).unwrap();
            for (c, &n) in coarse_steps.iter().enumerate() {
                let p = reference_path.restrict(1024 / (n / 16)).unwrap();
                assert_eq!(p.grid().n_steps(), n);
                let sol = solve_forward(&drift, &p, 0.0, &xs).unwrap();
                for j in 0..xs.len() {
                    errs[c].push(sol.final_positions()[j] - reference.final_positions()[j]);
                }
            }
        }
        let dts: Vec<f64> = coarse_steps.iter().map(|&n| 1.0 / n as f64).collect();
        let rms_err: Vec<f64> = errs.iter().map(|e| rms(e)).collect();
        let slope = loglog_slope(&dts, &rms_err);
        assert!(slope >= 0.9, "order {slope}, errors {rms_err:?}");
    }

    #[test]
    fn iwk_trivial_cases() {
        let path = BrownianPath::sample(TimeGrid::new(0.0, 1.0, 200).unwrap(), 14);
        let xs = points(-1.0, 1.0, 5);
        let pg = SpatialGrid::new(-10.0, 10.0, 2000).unwrap();
        let zero = DriftField::profile(Profile::Zero);
        let sol = solve_forward(&zero, &path, 0.0, &xs).unwrap();
        let r = jacobian_iwk(&sol, &zero, &pg).unwrap();
        assert!(r.jacobians.iter().flatten().all(|&j| j == 1.0));

        let c = DriftField::profile(Profile::Constant { c: 0.8 });
        let sol = solve_forward(&c, &path, 0.0, &xs).unwrap();
        let r = jacobian_iwk(&sol, &c, &pg).unwrap();
        for &j in r.jacobians.iter().flatten() {
            assert!((j - 1.0).abs() < 1e-9, "{j}");
        }
    }

    #[test]
    fn iwk_agrees_with_variational_under_refinement() {
        let xs = points(-1.0, 1.0, 9);
        let pg = SpatialGrid::new(-8.0, 8.0, 3200).unwrap();
        for drift in [bump(), DriftField::shifted(Profile::Bump { amplitude: 0.5, center: 0.0, radius: 1.0 })] {
            let mut errs = Vec::new();
            let mut dts = Vec::new();
            for factor in [1usize, 4, 16] {
                let per_seed: Vec<f64> = map_indexed(Execution::Parallel, 32, |s| {
                    let path = BrownianPath::sample(TimeGrid::new(0.0, 1.0, 50).unwrap(), 700 + s as u64);
                    let path = if factor > 1 { path.refine(factor).unwrap() } else { path };
                    let sol = solve_forward(&drift, &path, 0.0, &xs).unwrap();
                    jacobian_iwk(&sol, &drift, &pg).unwrap().rms_relative_residual()
                });
                errs.push(rms(&per_seed));
                dts.push(1.0 / (50 * factor) as f64);
            }
            let slope = loglog_slope(&dts, &errs);
            assert!(slope >= 0.4, "slope {slope}, errors {errs:?}");
        }
    }

    #[test]
    fn inverse_flow_round_trip() {
        let path = BrownianPath::sample(TimeGrid::new(0.0, 1.0, 100).unwrap(), 15);
        let xs = points(-2.0, 2.0, 41);
        let zero = DriftField::profile(Profile::Zero);
        let sol = solve_forward(&zero, &path, 0.0, &xs).unwrap();
        let last = sol.n_records() - 1;
        let inv = invert_flow(&sol, last).unwrap();
        let bt = *path.values().last().unwrap();
        for (j, &x) in xs.iter().enumerate() {
            assert_eq!(inv.eval(sol.final_positions()[j]).unwrap(), x);
            let y = x + bt;
            assert!((inv.eval(y).unwrap() - (y - bt)).abs() < 1e-12);
        }
        let (lo, hi) = inv.range();
        assert!(matches!(inv.eval(hi + 0.1), Err(Error::QueryOutsideRange { .. })));
        assert!(inv.eval(lo - 1e-9).is_err());
    }

    #[test]
    fn inverse_flow_is_second_order_between_nodes() {
        let path = BrownianPath::sample(TimeGrid::new(0.0, 1.0, 400).unwrap(), 16);
        let dense = points(-1.5, 1.5, 6001);
        let reference = solve_forward(&bump(), &path, 0.0, &dense).unwrap();
        let mut errs = Vec::new();
        let mut hs = Vec::new();
        for n in [31usize, 61, 121] {
            let xs = points(-1.5, 1.5, n);
            let sol = solve_forward(&bump(), &path, 0.0, &xs).unwrap();
            let inv = invert_flow(&sol, sol.n_records() - 1).unwrap();
            let err = (1000..5000)
                .step_by(7)
                .map(|i| (inv.eval(reference.final_positions()[i]).unwrap() - dense[i]).abs())
                .fold(0.0, f64::max);
            errs.push(err);
            hs.push(3.0 / (n - 1) as f64);
        }
        let slope = loglog_slope(&hs, &errs);
        assert!(slope > 1.8, "slope {slope}, errors {errs:?}");
    }

    #[test]
    fn exponential_martingale_closed_forms() {
        let path = BrownianPath::sample(TimeGrid::new(0.0, 1.0, 100).unwrap(), 17);
        assert_eq!(exponential_martingale(&vec![0.0; 101], &path).unwrap(), 1.0);
        let c = 1.3;
        let v = exponential_martingale(&vec![c; 101], &path).unwrap();
        let bt = *path.values().last().unwrap();
        assert!((v - (c * bt - 0.5 * c * c).exp()).abs() < 1e-12 * v);
        assert!(exponential_martingale(&[1.0; 3], &path).is_err());
    }

    #[test]
    fn flow_csv_layout() {
        let path = BrownianPath::sample(TimeGrid::new(0.0, 1.0, 4).unwrap(), 18);
        let sol = solve_forward(&bump(), &path, 0.0, &[0.0, 0.5]).unwrap();
        let mut buf = Vec::new();
        sol.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("s,t,x,X,J"));
        assert_eq!(text.lines().count(), 1 + 5 * 2);
    }
}

//! Solutions of the stochastic continuity equation by characteristics,
//! an independent particle solver, their primitives, and the weak-form check.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::brownian::BrownianPath;
use crate::drift::{Drift, Mollifier, Profile};
use crate::error::{Error, Result};
use crate::flow::{integrate_forward, FlowOptions, InverseFlow};
use crate::par::{map_indexed, Execution};
use crate::quadrature::{cumulative_trapezoid, fmt17, trapezoid, SpatialGrid};

/// Closed-form initial densities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialDatum {
    Zero,
    Gaussian { mean: f64, sigma: f64, mass: f64 },
    /// `height` on `[lo, hi)`.
    Box { lo: f64, hi: f64, height: f64 },
    /// Smooth compactly supported bump with peak `amplitude`.
    Bump {
        amplitude: f64,
        center: f64,
        radius: f64,
    },
}

impl InitialDatum {
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            InitialDatum::Zero => 0.0,
            InitialDatum::Gaussian { mean, sigma, mass } => {
                let z = (x - mean) / sigma;
                mass * (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
            }
            InitialDatum::Box { lo, hi, height } => {
                if x >= lo && x < hi {
                    height
                } else {
                    0.0
                }
            }
            InitialDatum::Bump {
                amplitude,
                center,
                radius,
            } => Profile::Bump {
                amplitude,
                center,
                radius,
            }
            .value(x),
        }
    }

    pub fn is_smooth(&self) -> bool {
        !matches!(self, InitialDatum::Box { .. })
    }
}

/// Names accepted by [`initial_catalog`].
pub const INITIAL_NAMES: &[&str] = &["zero", "gaussian", "box", "bump"];

/// Build an initial datum from a catalog name and parameters.
pub fn initial_catalog(name: &str, params: &BTreeMap<String, f64>) -> Result<InitialDatum> {
    let allowed: &[&str] = match name {
        "zero" => &[],
        "gaussian" => &["mean", "sigma", "mass"],
        "box" => &["lo", "hi", "height"],
        "bump" => &["amplitude", "center", "radius"],
        other => return Err(Error::UnknownInitial(other.to_string())),
    };
    for (k, v) in params {
        if !allowed.contains(&k.as_str()) {
            return Err(Error::Config(format!("initial datum '{name}' has no parameter '{k}'")));
        }
        if !v.is_finite() {
            return Err(Error::Config(format!("initial parameter '{k}' is not finite")));
        }
    }
    let get = |k: &str, d: f64| params.get(k).copied().unwrap_or(d);
    let datum = match name {
        "zero" => InitialDatum::Zero,
        "gaussian" => InitialDatum::Gaussian {
            mean: get("mean", 0.0),
            sigma: get("sigma", 0.5),
            mass: get("mass", 1.0),
        },
        "box" => InitialDatum::Box {
            lo: get("lo", -1.0),
            hi: get("hi", 1.0),
            height: get("height", 1.0),
        },
        _ => InitialDatum::Bump {
            amplitude: get("amplitude", 1.0),
            center: get("center", 0.0),
            radius: get("radius", 1.0),
        },
    };
    match datum {
        InitialDatum::Gaussian { sigma, .. } if sigma <= 0.0 => {
            Err(Error::Config("gaussian initial datum needs sigma > 0".into()))
        }
        InitialDatum::Bump { radius, .. } if radius <= 0.0 => {
            Err(Error::Config("bump initial datum needs radius > 0".into()))
        }
        InitialDatum::Box { lo, hi, .. } if lo >= hi => {
            Err(Error::Config("box initial datum needs lo < hi".into()))
        }
        d => Ok(d),
    }
}

/// `u0^ε = η(ε·) (u0 * ρ_ε)` sampled on `grid`.
pub fn mollify_initial(
    u0: impl Fn(f64) -> f64 + Sync,
    eps: f64,
    grid: &SpatialGrid,
) -> Result<Vec<f64>> {
    let m = Mollifier::new(eps)?;
    let values = map_indexed(Execution::Parallel, grid.len(), |j| {
        m.mollify_with_cutoff(&u0, grid.node(j)).0
    });
    if let Some(j) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("mollified initial datum at x = {}", grid.node(j))));
    }
    Ok(values)
}

/// Density `u(t_i, x_j)` on a fixed grid at recorded path-grid steps.
#[derive(Debug, Clone)]
pub struct DensityField {
    grid: SpatialGrid,
    path: BrownianPath,
    step_indices: Vec<usize>,
    values: Vec<Vec<f64>>,
    mass: Vec<f64>,
    /// Largest relative mass drift seen at any integrated step, recorded or not.
    step_mass_drift: f64,
    epsilon: Option<f64>,
}

const BINARY_MAGIC: &[u8; 4] = b"RNL1";
const BINARY_VERSION: u16 = 1;

impl DensityField {
    /// Assemble a field from rows already on `grid`.
    pub fn from_rows(
        grid: SpatialGrid,
        path: BrownianPath,
        step_indices: Vec<usize>,
        values: Vec<Vec<f64>>,
        epsilon: Option<f64>,
    ) -> Result<Self> {
        if step_indices.len() != values.len() || values.is_empty() {
            return Err(Error::LengthMismatch {
                expected: step_indices.len(),
                found: values.len(),
            });
        }
        for row in &values {
            if row.len() != grid.len() {
                return Err(Error::LengthMismatch {
                    expected: grid.len(),
                    found: row.len(),
                });
            }
        }
        if step_indices.iter().any(|&k| k > path.grid().n_steps())
            || step_indices.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::InvalidArgument("record steps must increase within the path".into()));
        }
        let dx = grid.dx();
        let mass = values.iter().map(|r| trapezoid(r, dx)).collect();
        Ok(DensityField {
            grid,
            path,
            step_indices,
            values,
            mass,
            step_mass_drift: 0.0,
            epsilon,
        })
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn path(&self) -> &BrownianPath {
        &self.path
    }

    pub fn step_indices(&self) -> &[usize] {
        &self.step_indices
    }

    pub fn times(&self) -> Vec<f64> {
        self.step_indices.iter().map(|&k| self.path.grid().time(k)).collect()
    }

    pub fn n_records(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn last_row(&self) -> &[f64] {
        self.values.last().unwrap()
    }

    /// `∫ u(t_i, x) dx` per record.
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// `max_i |mass_i - mass_0| / |mass_0|` (absolute when the initial mass is 0).
    ///
    /// When the solver checked mass at every step, unrecorded steps count too.
    pub fn max_relative_mass_drift(&self) -> f64 {
        let m0 = self.mass[0];
        let scale = if m0 != 0.0 { m0.abs() } else { 1.0 };
        self.mass
            .iter()
            .map(|m| (m - m0).abs() / scale)
            .fold(self.step_mass_drift, f64::max)
    }

    pub fn epsilon(&self) -> Option<f64> {
        self.epsilon
    }

    /// Record index whose time is `t`, if recorded.
    pub fn record_at(&self, t: f64) -> Option<usize> {
        let k = self.path.grid().index_of(t)?;
        self.step_indices.binary_search(&k).ok()
    }

    /// `∫ u(t_r, x) φ(x) dx`.
    pub fn pair(&self, r: usize, phi: &TestFunction) -> f64 {
        let prod: Vec<f64> = self
            .grid
            .nodes()
            .iter()
            .zip(&self.values[r])
            .map(|(&x, &u)| u * phi.value(x))
            .collect();
        trapezoid(&prod, self.grid.dx())
    }

    /// Long-format CSV with columns `t,x,u`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "x", "u"])?;
        let xs = self.grid.nodes();
        for (t, row) in self.times().into_iter().zip(&self.values) {
            let t = fmt17(t);
            for (x, u) in xs.iter().zip(row) {
                w.write_record([t.as_str(), &fmt17(*x), &fmt17(*u)])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Binary table: `b"RNL1"`, version `u16`, rows `u64`, cols `u64`, then
    /// `rows * cols` little-endian `f64` in row-major order.
    ///
    /// Row 0 holds `NaN` followed by the grid nodes; row `1 + i` holds `t_i`
    /// followed by `u(t_i, ·)`.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        let cols = self.grid.len() + 1;
        let rows = self.values.len() + 1;
        out.write_all(BINARY_MAGIC)?;
        out.write_all(&BINARY_VERSION.to_le_bytes())?;
        out.write_all(&(rows as u64).to_le_bytes())?;
        out.write_all(&(cols as u64).to_le_bytes())?;
        out.write_all(&f64::NAN.to_le_bytes())?;
        for x in self.grid.nodes() {
            out.write_all(&x.to_le_bytes())?;
        }
        for (t, row) in self.times().into_iter().zip(&self.values) {
            out.write_all(&t.to_le_bytes())?;
            for u in row {
                out.write_all(&u.to_le_bytes())?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Contents of a binary table written by [`DensityField::write_binary`].
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryTable {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl BinaryTable {
    pub fn read<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != BINARY_MAGIC {
            return Err(Error::InvalidArgument("not an RNL1 table".into()));
        }
        let mut v = [0u8; 2];
        input.read_exact(&mut v)?;
        let version = u16::from_le_bytes(v);
        if version != BINARY_VERSION {
            return Err(Error::InvalidArgument(format!("unsupported table version {version}")));
        }
        let mut dim = [0u8; 8];
        input.read_exact(&mut dim)?;
        let rows = u64::from_le_bytes(dim) as usize;
        input.read_exact(&mut dim)?;
        let cols = u64::from_le_bytes(dim) as usize;
        let mut data = Vec::with_capacity(rows * cols);
        let mut buf = [0u8; 8];
        for _ in 0..rows * cols {
            input.read_exact(&mut buf)?;
            data.push(f64::from_le_bytes(buf));
        }
        Ok(BinaryTable { rows, cols, data })
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CharacteristicsOptions {
    pub record_every: usize,
    /// Relative tolerance on `|mass(t) - mass(0)|`; `None` disables the check.
    pub mass_tolerance: Option<f64>,
    /// Mollification level to attach to the output.
    pub epsilon: Option<f64>,
    pub exec: Execution,
}

impl Default for CharacteristicsOptions {
    fn default() -> Self {
        CharacteristicsOptions {
            record_every: 1,
            mass_tolerance: None,
            epsilon: None,
            exec: Execution::Parallel,
        }
    }
}

/// `u(t, x) = u0(ψ_t(x)) / J(ψ_t(x))`, zero outside the image of the grid.
///
/// The flow starts from the nodes of `grid`, which also carries the output.
pub fn solve_by_characteristics(
    drift: &dyn Drift,
    u0: &[f64],
    grid: &SpatialGrid,
    path: &BrownianPath,
    opts: &CharacteristicsOptions,
) -> Result<DensityField> {
    if u0.len() != grid.len() {
        return Err(Error::LengthMismatch {
            expected: grid.len(),
            found: u0.len(),
        });
    }
    let nodes = grid.nodes();
    if opts.record_every == 0 {
        return Err(Error::InvalidArgument("record_every must be >= 1".into()));
    }
    // With a mass tolerance every step is pulled back and checked.
    let check_every = opts.mass_tolerance.is_some();
    let flow_opts = FlowOptions {
        record_every: if check_every { 1 } else { opts.record_every },
        track_jacobian: true,
        t_end: None,
        exec: opts.exec,
        ..FlowOptions::default()
    };
    let dx = grid.dx();
    let mass0 = trapezoid(u0, dx);
    let scale = if mass0 != 0.0 { mass0.abs() } else { 1.0 };
    let last = path.grid().n_steps();
    let mut step_indices = Vec::new();
    let mut values = Vec::new();
    let mut step_mass_drift = 0.0f64;
    integrate_forward(drift, path, 0.0, &nodes, &flow_opts, &mut |k, xs, js| {
        let js = js.ok_or(Error::MissingDerivative)?;
        let row = pull_back(xs, js, u0, &nodes);
        if let Some(tol) = opts.mass_tolerance {
            let drift = (trapezoid(&row, dx) - mass0).abs() / scale;
            step_mass_drift = step_mass_drift.max(drift);
            if drift > tol {
                return Err(Error::MassDriftExceeded {
                    time: path.grid().time(k),
                    drift,
                    tolerance: tol,
                });
            }
        }
        if !check_every || k % opts.record_every == 0 || k == last {
            step_indices.push(k);
            values.push(row);
        }
        Ok(())
    })?;
    let mut field = DensityField::from_rows(grid.clone(), path.clone(), step_indices, values, opts.epsilon)?;
    field.step_mass_drift = step_mass_drift;
    Ok(field)
}

/// Evaluate `u0(ψ)/J(ψ)` at sorted `nodes`, with `images[j] = X(nodes[j])`.
fn pull_back(images: &[f64], jac: &[f64], u0: &[f64], nodes: &[f64]) -> Vec<f64> {
    let n = images.len();
    let (lo, hi) = (images[0], images[n - 1]);
    let mut out = vec![0.0; nodes.len()];
    let mut k = 0;
    for (dst, &x) in out.iter_mut().zip(nodes) {
        if x < lo || x > hi {
            continue;
        }
        while k + 2 < n && images[k + 1] <= x {
            k += 1;
        }
        if n == 1 {
            *dst = u0[0] / jac[0];
            continue;
        }
        let theta = (x - images[k]) / (images[k + 1] - images[k]);
        let u = u0[k] + theta * (u0[k + 1] - u0[k]);
        let j = jac[k] + theta * (jac[k + 1] - jac[k]);
        *dst = u / j;
    }
    out
}

/// Inverse flow built from one recorded step, for callers that need `ψ_t` itself.
pub fn inverse_from_record(images: &[f64], preimages: &[f64], jac: Option<&[f64]>) -> Result<InverseFlow> {
    InverseFlow::from_table(images.to_vec(), preimages.to_vec(), jac.map(|j| j.to_vec()))
}

/// Particle pushforward: positions per record and the kernel-density estimate.
#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    pub positions: Vec<Vec<f64>>,
    pub density: DensityField,
    /// Bandwidth used at each record.
    pub bandwidths: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct ParticleOptions {
    pub n_particles: usize,
    /// Fixed Gaussian kernel width; `None` uses `n^{-1/5}` times the sample std.
    pub bandwidth: Option<f64>,
    pub record_every: usize,
    pub seed: u64,
    pub exec: Execution,
}

/// Sample particles from `u0 / mass` by inverting the piecewise-linear CDF,
/// advect them along the flow and estimate the density by Gaussian KDE.
pub fn pushforward_particles(
    drift: &dyn Drift,
    u0: &[f64],
    grid: &SpatialGrid,
    path: &BrownianPath,
    opts: &ParticleOptions,
) -> Result<ParticleEnsemble> {
    if u0.len() != grid.len() {
        return Err(Error::LengthMismatch {
            expected: grid.len(),
            found: u0.len(),
        });
    }
    if u0.iter().any(|&v| !(v >= 0.0)) {
        return Err(Error::InvalidArgument("initial density must be nonnegative".into()));
    }
    let cdf = cumulative_trapezoid(u0, grid.dx());
    let mass = *cdf.last().unwrap();
    if !(mass > 0.0) || !mass.is_finite() {
        return Err(Error::NonNormalizable(mass));
    }
    if opts.n_particles == 0 {
        return Err(Error::InvalidArgument("need at least one particle".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut uniforms: Vec<f64> = (0..opts.n_particles).map(|_| rng.random::<f64>() * mass).collect();
    uniforms.sort_by(f64::total_cmp);
    let mut particles: Vec<f64> = uniforms
        .iter()
        .map(|&q| {
            let k = cdf.partition_point(|&c| c <= q).clamp(1, cdf.len() - 1) - 1;
            let w = cdf[k + 1] - cdf[k];
            let theta = if w > 0.0 { (q - cdf[k]) / w } else { 0.0 };
            grid.node(k) + theta * grid.dx()
        })
        .collect();
    particles.dedup();
    pushforward_points(drift, &particles, mass, grid, path, opts)
}

/// Advect the given sorted particles, each carrying `mass / n`.
pub fn pushforward_points(
    drift: &dyn Drift,
    particles: &[f64],
    mass: f64,
    grid: &SpatialGrid,
    path: &BrownianPath,
    opts: &ParticleOptions,
) -> Result<ParticleEnsemble> {
    let flow_opts = FlowOptions {
        record_every: opts.record_every,
        track_jacobian: false,
        t_end: None,
        exec: opts.exec,
        ..FlowOptions::default()
    };
    let nodes = grid.nodes();
    let mut step_indices = Vec::new();
    let mut positions = Vec::new();
    let mut values = Vec::new();
    let mut bandwidths = Vec::new();
    integrate_forward(drift, path, 0.0, particles, &flow_opts, &mut |k, xs, _| {
        let h = match opts.bandwidth {
            Some(h) => h,
            None => default_bandwidth(xs).max(grid.dx()),
        };
        if !(h > 0.0) {
            return Err(Error::InvalidArgument(format!("kernel bandwidth {h}")));
        }
        values.push(kde(xs, mass, h, &nodes));
        bandwidths.push(h);
        positions.push(xs.to_vec());
        step_indices.push(k);
        Ok(())
    })?;
    let density = DensityField::from_rows(grid.clone(), path.clone(), step_indices, values, None)?;
    Ok(ParticleEnsemble {
        positions,
        density,
        bandwidths,
    })
}

fn default_bandwidth(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    var.sqrt() * n.powf(-0.2)
}

/// Gaussian KDE of sorted `xs` at sorted `nodes`, truncated at 8 bandwidths.
fn kde(xs: &[f64], mass: f64, h: f64, nodes: &[f64]) -> Vec<f64> {
    let norm = mass / (xs.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let reach = 8.0 * h;
    let mut lo = 0;
    nodes
        .iter()
        .map(|&x| {
            while lo < xs.len() && xs[lo] < x - reach {
                lo += 1;
            }
            let mut s = 0.0;
            for &p in xs[lo..].iter().take_while(|&&p| p <= x + reach) {
                let z = (x - p) / h;
                s += (-0.5 * z * z).exp();
            }
            norm * s
        })
        .collect()
}

/// Smooth bump `a · exp(1 - 1/(1 - s²))`, `s = (x - center)/radius`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestFunction {
    pub center: f64,
    pub radius: f64,
    pub amplitude: f64,
}

impl TestFunction {
    pub fn new(center: f64, radius: f64) -> Self {
        TestFunction {
            center,
            radius,
            amplitude: 1.0,
        }
    }

    fn profile(&self) -> Profile {
        Profile::Bump {
            amplitude: self.amplitude,
            center: self.center,
            radius: self.radius,
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.profile().value(x)
    }

    pub fn d1(&self, x: f64) -> f64 {
        self.profile().d1(x).unwrap()
    }

    pub fn d2(&self, x: f64) -> f64 {
        self.profile().d2(x).unwrap()
    }

    pub fn support(&self) -> (f64, f64) {
        (self.center - self.radius, self.center + self.radius)
    }

    /// `max |φ'|` over 2001 samples of the support.
    pub fn max_abs_d1(&self) -> f64 {
        let n = 2000;
        let (a, b) = self.support();
        (0..=n)
            .map(|i| self.d1(a + (b - a) * i as f64 / n as f64).abs())
            .fold(0.0, f64::max)
    }

    /// `θ(x) = ∫_{lo}^{x} φ` on `grid`.
    pub fn theta(&self, grid: &SpatialGrid) -> Vec<f64> {
        cumulative_trapezoid(&grid.sample(|x| self.value(x)), grid.dx())
    }
}

/// Residual of the Itô-form weak identity along the recorded times.
#[derive(Debug, Clone)]
pub struct WeakResidual {
    pub times: Vec<f64>,
    pub residual: Vec<f64>,
    /// `∫|u0| · max|φ'|`.
    pub normalizer: f64,
}

impl WeakResidual {
    pub fn max_abs(&self) -> f64 {
        self.residual.iter().map(|r| r.abs()).fold(0.0, f64::max)
    }

    /// `max |residual| / normalizer`, or the raw maximum when the normalizer is 0.
    pub fn relative_max(&self) -> f64 {
        if self.normalizer > 0.0 {
            self.max_abs() / self.normalizer
        } else {
            self.max_abs()
        }
    }
}

/// `∫uφ(t) - ∫u0φ - ∫∫ u b φ' ds - ∫∫ u φ' dB - ½ ∫∫ u φ'' ds`, with space
/// integrals by trapezoid, `ds` by trapezoid and `dB` by left-point sums.
pub fn weak_residual(u: &DensityField, drift: &dyn Drift, phi: &TestFunction) -> Result<WeakResidual> {
    let grid = u.grid();
    let (lo, hi) = phi.support();
    if lo < grid.lo() || hi > grid.hi() {
        return Err(Error::SupportViolation {
            lo,
            hi,
            domain_lo: grid.lo(),
            domain_hi: grid.hi(),
        });
    }
    let steps = u.step_indices();
    if steps[0] != 0 || steps.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(Error::InvalidArgument(
            "weak residual needs every time step recorded from t = 0".into(),
        ));
    }
    let path = u.path();
    let dt = path.grid().dt();
    let dx = grid.dx();
    // Only nodes where φ or its derivatives can be nonzero contribute.
    let j_lo = (((lo - grid.lo()) / dx).floor().max(0.0)) as usize;
    let j_hi = ((((hi - grid.lo()) / dx).ceil()) as usize).min(grid.n_cells());
    let xs: Vec<f64> = (j_lo..=j_hi).map(|j| grid.node(j)).collect();
    let p0: Vec<f64> = xs.iter().map(|&x| phi.value(x)).collect();
    let p1: Vec<f64> = xs.iter().map(|&x| phi.d1(x)).collect();
    let p2: Vec<f64> = xs.iter().map(|&x| phi.d2(x)).collect();

    let per_record = map_indexed(Execution::Parallel, u.n_records(), |r| {
        let t = path.grid().time(steps[r]);
        let row = &u.row(r)[j_lo..=j_hi];
        let pair = |w: &dyn Fn(usize) -> f64| {
            let v: Vec<f64> = (0..xs.len()).map(|i| row[i] * w(i)).collect();
            trapezoid(&v, dx)
        };
        let a = pair(&|i| p0[i]);
        let transport = pair(&|i| {
            if p1[i] == 0.0 {
                0.0
            } else {
                drift.value(t, xs[i], path) * p1[i]
            }
        });
        let noise = pair(&|i| p1[i]);
        let diffusion = pair(&|i| p2[i]);
        [a, transport, noise, diffusion]
    });

    let a0 = per_record[0][0];
    let mut acc = 0.0;
    let mut residual = Vec::with_capacity(per_record.len());
    residual.push(0.0);
    for r in 1..per_record.len() {
        let (prev, cur) = (&per_record[r - 1], &per_record[r]);
        acc += 0.5 * dt * (prev[1] + cur[1])
            + prev[2] * path.increment(steps[r - 1])
            + 0.25 * dt * (prev[3] + cur[3]);
        residual.push(cur[0] - a0 - acc);
    }
    let abs0: Vec<f64> = u.row(0).iter().map(|v| v.abs()).collect();
    Ok(WeakResidual {
        times: u.times(),
        residual,
        normalizer: trapezoid(&abs0, dx) * phi.max_abs_d1(),
    })
}

/// `V(t_i, x_j) = ∫_{lo}^{x_j} u(t_i, y) dy` by cumulative trapezoid.
#[derive(Debug, Clone)]
pub struct PrimitiveField {
    grid: SpatialGrid,
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl PrimitiveField {
    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r]
    }

    pub fn n_records(&self) -> usize {
        self.values.len()
    }
}

pub fn primitive_field(u: &DensityField) -> PrimitiveField {
    let dx = u.grid().dx();
    PrimitiveField {
        grid: u.grid().clone(),
        times: u.times(),
        values: u.rows().iter().map(|r| cumulative_trapezoid(r, dx)).collect(),
    }
}

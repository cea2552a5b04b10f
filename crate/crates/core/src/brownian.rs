//! Discretized Brownian paths on uniform time grids, Brownian-bridge
//! refinement, and the partition sums that define the Itô and Stratonovich
//! integrals and the quadratic covariation.

use std::io::Write;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::quadrature::{fmt17, mix_seed};

/// Uniform partition of `[t_start, t_end]` into `n_steps` intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_start: f64,
    t_end: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_start: f64, t_end: f64, n_steps: usize) -> Result<Self> {
        if !(t_start.is_finite() && t_end.is_finite()) || t_start >= t_end || n_steps == 0 {
            return Err(Error::InvalidGrid(format!(
                "[{t_start}, {t_end}] with {n_steps} steps"
            )));
        }
        Ok(TimeGrid {
            t_start,
            t_end,
            n_steps,
        })
    }

    /// Grid on `[0, t_end]` whose step does not exceed `dt`.
    pub fn with_max_step(t_end: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidGrid(format!("time step {dt}")));
        }
        let n = (t_end / dt - 1e-9).ceil().max(1.0) as usize;
        TimeGrid::new(0.0, t_end, n)
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        (self.t_end - self.t_start) / self.n_steps as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        if i == self.n_steps {
            self.t_end
        } else {
            self.t_start + i as f64 * self.dt()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|i| self.time(i)).collect()
    }

    /// Index of the grid node at `t`, if `t` is a node (relative tolerance 1e-9 of a step).
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let s = (t - self.t_start) / self.dt();
        let k = s.round();
        if (s - k).abs() <= 1e-9 && k >= 0.0 && k <= self.n_steps as f64 {
            Some(k as usize)
        } else {
            None
        }
    }

    /// Grid with every interval split into `factor` equal pieces.
    pub fn refined(&self, factor: usize) -> TimeGrid {
        TimeGrid {
            n_steps: self.n_steps * factor,
            ..*self
        }
    }
}

/// One realization `B` sampled on a [`TimeGrid`], with `B(t_start) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    grid: TimeGrid,
    values: Arc<[f64]>,
    seed: u64,
}

impl BrownianPath {
    /// Path with independent N(0, dt) increments, determined by `seed`.
    pub fn sample(grid: TimeGrid, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sd = grid.dt().sqrt();
        let mut values = Vec::with_capacity(grid.n_steps + 1);
        let mut b = 0.0;
        values.push(b);
        for _ in 0..grid.n_steps {
            let z: f64 = StandardNormal.sample(&mut rng);
            b += sd * z;
            values.push(b);
        }
        BrownianPath {
            grid,
            values: values.into(),
            seed,
        }
    }

    /// The identically zero path (noise switched off).
    pub fn zero(grid: TimeGrid) -> Self {
        BrownianPath {
            grid,
            values: vec![0.0; grid.n_steps + 1].into(),
            seed: 0,
        }
    }

    pub fn from_values(grid: TimeGrid, values: Vec<f64>, seed: u64) -> Result<Self> {
        if values.len() != grid.n_steps + 1 {
            return Err(Error::LengthMismatch {
                expected: grid.n_steps + 1,
                found: values.len(),
            });
        }
        if values[0] != 0.0 {
            return Err(Error::InvalidArgument("path must start at 0".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("path value".into()));
        }
        Ok(BrownianPath {
            grid,
            values: values.into(),
            seed,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `B(t_{i+1}) - B(t_i)`.
    pub fn increment(&self, i: usize) -> f64 {
        self.values[i + 1] - self.values[i]
    }

    /// `B(t)`: the stored value at grid nodes, linear interpolation between
    /// them, clamped to the grid's time span.
    pub fn at(&self, t: f64) -> f64 {
        if let Some(i) = self.grid.index_of(t) {
            return self.values[i];
        }
        let s = ((t - self.grid.t_start) / self.grid.dt()).clamp(0.0, self.grid.n_steps as f64);
        let k = (s.floor() as usize).min(self.grid.n_steps - 1);
        let theta = s - k as f64;
        self.values[k] + theta * (self.values[k + 1] - self.values[k])
    }

    /// Fill each interval with `factor - 1` Brownian-bridge points. The
    /// samples in interval `i` depend only on `(seed, factor, i)`, and every
    /// original node is kept unchanged.
    pub fn refine(&self, factor: usize) -> Result<Self> {
        if factor < 2 {
            return Err(Error::InvalidArgument(format!(
                "refinement factor must be >= 2, got {factor}"
            )));
        }
        let child_seed = mix_seed(self.seed, factor as u64);
        let fine = self.grid.refined(factor);
        let h = fine.dt();
        let mut values = Vec::with_capacity(fine.n_steps + 1);
        values.push(self.values[0]);
        for i in 0..self.grid.n_steps {
            let (a, b) = (self.values[i], self.values[i + 1]);
            let mut rng = ChaCha8Rng::seed_from_u64(child_seed);
            rng.set_stream(i as u64);
            let mut v = a;
            for j in 1..factor {
                let remaining = (factor - j + 1) as f64 * h;
                let mean = v + (b - v) * h / remaining;
                let var = h * (remaining - h) / remaining;
                let z: f64 = StandardNormal.sample(&mut rng);
                v = mean + var.sqrt() * z;
                values.push(v);
            }
            values.push(b);
        }
        Ok(BrownianPath {
            grid: fine,
            values: values.into(),
            seed: child_seed,
        })
    }

    /// Every `factor`-th node; inverse of [`refine`](Self::refine).
    pub fn restrict(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.grid.n_steps.is_multiple_of(factor) {
            return Err(Error::InvalidArgument(format!(
                "cannot restrict {} steps by {factor}",
                self.grid.n_steps
            )));
        }
        let grid = TimeGrid::new(
            self.grid.t_start,
            self.grid.t_end,
            self.grid.n_steps / factor,
        )?;
        let values: Vec<f64> = self.values.iter().step_by(factor).copied().collect();
        Ok(BrownianPath {
            grid,
            values: values.into(),
            seed: self.seed,
        })
    }

    /// CSV with header `t,B_t` and 17 significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "B_t"])?;
        for (i, v) in self.values.iter().enumerate() {
            w.write_record([fmt17(self.grid.time(i)), fmt17(*v)])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_len(samples: &[f64], path: &BrownianPath) -> Result<()> {
    if samples.len() != path.len() {
        return Err(Error::LengthMismatch {
            expected: path.len(),
            found: samples.len(),
        });
    }
    Ok(())
}

/// Left-point sum `Σ X(t_i) (B(t_{i+1}) - B(t_i))`.
pub fn ito_integral(integrand: &[f64], path: &BrownianPath) -> Result<f64> {
    check_len(integrand, path)?;
    Ok(ito_sum(integrand, path.values()))
}

/// Midpoint-average sum `Σ ½(X(t_i) + X(t_{i+1})) (B(t_{i+1}) - B(t_i))`.
pub fn stratonovich_integral(integrand: &[f64], path: &BrownianPath) -> Result<f64> {
    check_len(integrand, path)?;
    Ok(integrand
        .windows(2)
        .zip(path.values().windows(2))
        .map(|(x, b)| 0.5 * (x[0] + x[1]) * (b[1] - b[0]))
        .sum())
}

/// `Σ (ΔX)(ΔY)` over the common grid.
pub fn quadratic_covariation(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    Ok(x.windows(2)
        .zip(y.windows(2))
        .map(|(a, b)| (a[1] - a[0]) * (b[1] - b[0]))
        .sum())
}

/// Left-point sum on raw slices; `integrand` may be one longer than needed.
pub(crate) fn ito_sum(integrand: &[f64], b: &[f64]) -> f64 {
    b.windows(2)
        .zip(integrand)
        .map(|(w, x)| x * (w[1] - w[0]))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::mean_and_std_error;

    fn unit_grid(n: usize) -> TimeGrid {
        TimeGrid::new(0.0, 1.0, n).unwrap()
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(TimeGrid::new(1.0, 1.0, 4).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 0).is_err());
        assert!(TimeGrid::new(0.0, f64::NAN, 3).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let g = unit_grid(50);
        assert_eq!(BrownianPath::sample(g, 7), BrownianPath::sample(g, 7));
        assert_ne!(BrownianPath::sample(g, 7), BrownianPath::sample(g, 8));
        assert_eq!(BrownianPath::sample(g, 7).values()[0], 0.0);
    }

    #[test]
    fn one_step_endpoint_is_standard_normal() {
        let g = unit_grid(1);
        let z: Vec<f64> = (0..100_000)
            .map(|s| BrownianPath::sample(g, s).values()[1])
            .collect();
        let (mean, _) = mean_and_std_error(&z);
        let var = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (z.len() - 1) as f64;
        assert!(mean.abs() < 3e-2, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "variance {var}");
    }

    #[test]
    fn refine_then_restrict_is_identity() {
        let p = BrownianPath::sample(unit_grid(37), 11);
        for k in [2, 3, 5, 16] {
            let r = p.refine(k).unwrap();
            assert_eq!(r.grid().n_steps(), 37 * k);
            assert_eq!(r.restrict(k).unwrap().values(), p.values());
        }
        assert!(p.refine(1).is_err());
    }

    #[test]
    fn bridge_midpoint_statistics() {
        let g = unit_grid(1);
        let n = 100_000;
        let mids: Vec<f64> = (0..n)
            .map(|s| {
                let p = BrownianPath::from_values(g, vec![0.0, 0.0], s).unwrap();
                p.refine(2).unwrap().values()[1]
            })
            .collect();
        let (mean, se) = mean_and_std_error(&mids);
        let var = mids.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 3.0 * se, "mean {mean} se {se}");
        assert!((var - 0.25).abs() < 0.25 * 0.02, "variance {var}");
    }

    #[test]
    fn integral_identities() {
        let p = BrownianPath::sample(unit_grid(1000), 3);
        let b = p.values();
        let bt = *b.last().unwrap();
        let ones = vec![1.0; p.len()];
        assert!((ito_integral(&ones, &p).unwrap() - bt).abs() < 1e-12);
        assert!((stratonovich_integral(&ones, &p).unwrap() - bt).abs() < 1e-12);
        assert_eq!(ito_integral(&vec![0.0; p.len()], &p).unwrap(), 0.0);

        let qv = quadratic_covariation(b, b).unwrap();
        let ito = ito_integral(b, &p).unwrap();
        let strat = stratonovich_integral(b, &p).unwrap();
        assert!((ito - 0.5 * (bt * bt - qv)).abs() < 1e-12);
        assert!((strat - 0.5 * bt * bt).abs() < 1e-12);
        assert!((strat - ito - 0.5 * qv).abs() < 1e-12);
    }

    #[test]
    fn covariation_properties() {
        let p = BrownianPath::sample(unit_grid(100), 5);
        let q = BrownianPath::sample(unit_grid(100), 6);
        let c = vec![2.5; 101];
        assert_eq!(quadratic_covariation(&c, p.values()).unwrap(), 0.0);
        assert_eq!(
            quadratic_covariation(p.values(), q.values()).unwrap(),
            quadratic_covariation(q.values(), p.values()).unwrap()
        );
        assert!(quadratic_covariation(&c[..5], p.values()).is_err());
        assert!(ito_integral(&c[..5], &p).is_err());
    }

    #[test]
    fn quadratic_variation_of_brownian_motion_is_t() {
        let g = unit_grid(10_000);
        let qv: Vec<f64> = (0..100)
            .map(|s| {
                let p = BrownianPath::sample(g, 1000 + s);
                quadratic_covariation(p.values(), p.values()).unwrap()
            })
            .collect();
        let (mean, _) = mean_and_std_error(&qv);
        assert!((mean - 1.0).abs() < 0.02, "[B,B]_1 = {mean}");
    }

    #[test]
    fn ito_integral_has_mean_zero() {
        let g = unit_grid(64);
        let vals: Vec<f64> = (0..10_000)
            .map(|s| {
                let p = BrownianPath::sample(g, s);
                let integrand: Vec<f64> = p.values().iter().map(|b| b.sin() + b * b).collect();
                ito_integral(&integrand, &p).unwrap()
            })
            .collect();
        let (mean, se) = mean_and_std_error(&vals);
        assert!(mean.abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn ito_minus_stratonovich_vanishes_for_smooth_integrands() {
        // h(t) = cos(3t): the gap is ½ Σ Δh ΔB, of RMS order dt.
        let base = BrownianPath::sample(unit_grid(16), 99);
        let mut errs = Vec::new();
        let mut dts = Vec::new();
        let mut p = base;
        for _ in 0..4 {
            p = p.refine(4).unwrap();
            let h: Vec<f64> = p.grid().times().iter().map(|t| (3.0 * t).cos()).collect();
            let gap: Vec<f64> = (0..200)
                .map(|s| {
                    let q = BrownianPath::sample(*p.grid(), s);
                    ito_integral(&h, &q).unwrap() - stratonovich_integral(&h, &q).unwrap()
                })
                .collect();
            errs.push(crate::quadrature::rms(&gap));
            dts.push(p.grid().dt());
        }
        let slope = crate::quadrature::loglog_slope(&dts, &errs);
        assert!(slope >= 0.5, "slope {slope}");
    }

    #[test]
    fn csv_export_has_header_and_full_precision() {
        let p = BrownianPath::sample(unit_grid(4), 1);
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,B_t"));
        let rows: Vec<f64> = lines
            .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
            .collect();
        assert_eq!(rows, p.values());
    }

    #[test]
    fn at_reads_nodes_and_interpolates() {
        let p = BrownianPath::sample(unit_grid(10), 4);
        assert_eq!(p.at(0.3), p.values()[3]);
        let mid = p.at(0.35);
        assert!((mid - 0.5 * (p.values()[3] + p.values()[4])).abs() < 1e-12);
    }
}

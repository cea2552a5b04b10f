//! Uniform spatial grids and the trapezoid-rule helpers shared by every module.

use crate::error::{Error, Result};

/// Uniform grid `lo = x_0 < x_1 < ... < x_n = hi`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid {
    lo: f64,
    hi: f64,
    n_cells: usize,
}

impl SpatialGrid {
    pub fn new(lo: f64, hi: f64, n_cells: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo >= hi || n_cells == 0 {
            return Err(Error::InvalidGrid(format!(
                "spatial grid [{lo}, {hi}] with {n_cells} cells"
            )));
        }
        Ok(SpatialGrid { lo, hi, n_cells })
    }

    /// Symmetric grid on `[-half_width, half_width]` with spacing as close to
    /// `dx` as the integer cell count allows (never coarser).
    pub fn symmetric(half_width: f64, dx: f64) -> Result<Self> {
        if !(dx > 0.0) || !(half_width > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "half width {half_width}, spacing {dx}"
            )));
        }
        let n = (2.0 * half_width / dx - 1e-9).ceil().max(1.0) as usize;
        SpatialGrid::new(-half_width, half_width, n)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn len(&self) -> usize {
        self.n_cells + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        (self.hi - self.lo) / self.n_cells as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        if j == self.n_cells {
            self.hi
        } else {
            self.lo + j as f64 * self.dx()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.node(j)).collect()
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..self.len()).map(|j| f(self.node(j))).collect()
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    /// Linear interpolation of grid samples; zero outside the grid.
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        if !self.contains(x) {
            return 0.0;
        }
        let s = (x - self.lo) / self.dx();
        let k = (s.floor() as usize).min(self.n_cells - 1);
        let theta = s - k as f64;
        values[k] + theta * (values[k + 1] - values[k])
    }
}

/// Trapezoid rule for samples with uniform spacing `h`.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => {
            let inner: f64 = values[1..n - 1].iter().sum();
            h * (inner + 0.5 * (values[0] + values[n - 1]))
        }
    }
}

/// Running trapezoid integral starting at zero in the first node.
pub fn cumulative_trapezoid(values: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    if let Some(&first) = values.first() {
        out.push(0.0);
        let mut prev = first;
        for &v in &values[1..] {
            acc += 0.5 * h * (prev + v);
            out.push(acc);
            prev = v;
        }
    }
    out
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_fit(&lx, &ly).0
}

/// Ordinary least-squares fit `y = a x + b`, returning `(a, b)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Sample mean and standard error of the mean.
pub fn mean_and_std_error(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    if samples.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Root mean square.
pub fn rms(values: &[f64]) -> f64 {
    (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt()
}

/// Decimal text with 17 significant digits; round-trips every finite f64.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// SplitMix64 finalizer, used to derive independent child seeds.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trapezoid_exact_for_linear() {
        let g = SpatialGrid::new(0.0, 2.0, 10).unwrap();
        let v = g.sample(|x| 3.0 * x + 1.0);
        assert!((trapezoid(&v, g.dx()) - 8.0).abs() < 1e-14);
        let c = cumulative_trapezoid(&v, g.dx());
        assert_eq!(c[0], 0.0);
        assert!((c[10] - 8.0).abs() < 1e-14);
    }

    #[test]
    fn interpolation_hits_nodes() {
        let g = SpatialGrid::new(-1.0, 1.0, 8).unwrap();
        let v = g.sample(|x| x * x);
        for j in 0..g.len() {
            assert_eq!(g.interpolate(&v, g.node(j)), v[j]);
        }
        assert_eq!(g.interpolate(&v, 1.5), 0.0);
    }

    #[test]
    fn fmt17_round_trips() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(fmt17(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-1.5)).collect();
        assert!((loglog_slope(&x, &y) + 1.5).abs() < 1e-12);
    }
}

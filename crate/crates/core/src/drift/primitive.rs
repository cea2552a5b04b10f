use crate::brownian::BrownianPath;
use crate::error::{Error, Result};
use crate::quadrature::SpatialGrid;

use super::Drift;

/// Cumulative integral `∫_{lo}^{z} field(y) dy` tabulated on a grid, with the
/// left end of the grid standing in for `-∞`.
///
/// Each cell contributes `dx · field(midpoint)`, so the table is exact for
/// piecewise-constant fields whose breakpoints sit on grid nodes; between
/// nodes the table is interpolated linearly.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimitiveTable {
    grid: SpatialGrid,
    cumulative: Vec<f64>,
}

impl PrimitiveTable {
    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.cumulative
    }

    /// Primitive at `z`: 0 left of the grid, total mass right of it.
    pub fn eval(&self, z: f64) -> f64 {
        if z <= self.grid.lo() {
            0.0
        } else if z >= self.grid.hi() {
            *self.cumulative.last().unwrap()
        } else {
            self.grid.interpolate(&self.cumulative, z)
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.cumulative.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Tabulate the primitive of `field` on `grid`.
pub fn primitive(field: impl Fn(f64) -> f64, grid: &SpatialGrid) -> Result<PrimitiveTable> {
    let dx = grid.dx();
    let mut cumulative = Vec::with_capacity(grid.len());
    let mut acc = 0.0;
    cumulative.push(acc);
    for j in 0..grid.n_cells() {
        let v = field(grid.node(j) + 0.5 * dx);
        if !v.is_finite() {
            return Err(Error::NonFinite(format!(
                "field at {}",
                grid.node(j) + 0.5 * dx
            )));
        }
        acc += dx * v;
        cumulative.push(acc);
    }
    Ok(PrimitiveTable {
        grid: grid.clone(),
        cumulative,
    })
}

/// Spatial primitives `(b̃, f̃, g̃)` of a drift and its semimartingale parts at
/// one `(t, ω)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimitiveTriple {
    pub b: PrimitiveTable,
    pub f: PrimitiveTable,
    pub g: PrimitiveTable,
}

impl PrimitiveTriple {
    pub fn build(
        drift: &dyn Drift,
        t: f64,
        path: &BrownianPath,
        grid: &SpatialGrid,
    ) -> Result<Self> {
        // Probe once so a missing decomposition is reported as such.
        drift
            .semimartingale(t, grid.lo(), path)
            .ok_or(Error::MissingSemimartingale)?;
        let fg = |x: f64| drift.semimartingale(t, x, path).unwrap_or((f64::NAN, f64::NAN));
        Ok(PrimitiveTriple {
            b: primitive(|x| drift.value(t, x, path), grid)?,
            f: primitive(|x| fg(x).0, grid)?,
            g: primitive(|x| fg(x).1, grid)?,
        })
    }
}

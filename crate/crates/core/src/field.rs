use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::grid::Grid;

/// One real value per interior cell of a grid.
#[derive(Debug, Clone)]
pub struct ScalarField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Data(format!(
                "field has {} values for {} cells",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { cell: i, time: f64::NAN });
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.len();
        Self { grid, values: vec![0.0; n] }
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(Point) -> f64) -> Self {
        let values = grid.coords().iter().map(|&p| f(p)).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ensure_same_grid(&self, other: &ScalarField) -> Result<()> {
        if self.grid.same_layout(&other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Midpoint-rule integral over the masked cells.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `max |self - other|`.
    pub fn sup_distance(&self, other: &ScalarField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.ensure_same_grid(other)?;
        Ok(Self {
            grid: self.grid.clone(),
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// Cells whose value exceeds `1e-12 * max`, the numeric support.
    pub fn support_mask(&self) -> Vec<bool> {
        let eps = SUPPORT_EPS * self.max().max(0.0);
        self.values.iter().map(|&v| v > eps && v > 0.0).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Discrete gradient at `cell`: central differences where both axis
    /// neighbours exist, one-sided where only one does, zero otherwise.
    pub fn gradient(&self, cell: usize) -> Point {
        let g = &self.grid;
        let h = g.h();
        let mut out = [0.0; 2];
        for (axis, slot) in out.iter_mut().enumerate().take(g.dimension()) {
            let (di, dj) = if axis == 0 { (1, 0) } else { (0, 1) };
            let fwd = g.neighbor(cell, di, dj).map(|c| self.values[c]);
            let bwd = g.neighbor(cell, -di, -dj).map(|c| self.values[c]);
            let u = self.values[cell];
            *slot = match (fwd, bwd) {
                (Some(a), Some(b)) => (a - b) / (2.0 * h),
                (Some(a), None) => (a - u) / h,
                (None, Some(b)) => (u - b) / h,
                (None, None) => 0.0,
            };
        }
        out
    }

    /// Multilinear interpolation at `p` from the surrounding masked cells;
    /// missing corners are dropped and the weights renormalized.
    pub fn interpolate(&self, p: Point) -> Option<f64> {
        let g = &self.grid;
        let h = g.h();
        let o = g.origin();
        let fx = (p[0] - o[0]) / h;
        let i0 = fx.floor();
        let tx = fx - i0;
        let (j0, ty) = if g.dimension() == 2 {
            let fy = (p[1] - o[1]) / h;
            let j0 = fy.floor();
            (j0, fy - j0)
        } else {
            (0.0, 0.0)
        };
        let mut acc = 0.0;
        let mut wsum = 0.0;
        let corners: &[(isize, isize)] = if g.dimension() == 2 {
            &[(0, 0), (1, 0), (0, 1), (1, 1)]
        } else {
            &[(0, 0), (1, 0)]
        };
        for &(di, dj) in corners {
            let w = (if di == 0 { 1.0 - tx } else { tx }) * (if dj == 0 { 1.0 - ty } else { ty });
            if w <= 0.0 {
                continue;
            }
            if let Some(c) = g.cell_at(i0 as isize + di, j0 as isize + dj) {
                acc += w * self.values[c];
                wsum += w;
            }
        }
        (wsum > 0.0).then(|| acc / wsum)
    }
}

/// Relative threshold below which source values count as zero.
pub const SUPPORT_EPS: f64 = 1e-12;

//! Uniform age grid and cell-average densities.
//!
//! Cell `j` covers `[j dx, (j + 1) dx)`; the last cell is open to the right and
//! carries the whole truncated tail, so the mass of a density is
//! `dx * sum(values)` with nothing lost beyond `x_max`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::RateModel;

/// Threshold on `e^{-r0 x_max}` used when the grid length is chosen automatically.
pub const TAIL_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dx: f64,
    n_cells: usize,
}

impl Grid {
    pub fn new(dx: f64, n_cells: usize) -> Result<Self> {
        if !(dx > 0.0 && dx.is_finite()) {
            return Err(Error::param("dx", "must be positive and finite"));
        }
        if n_cells < 2 {
            return Err(Error::param("n_cells", "need at least 2 cells"));
        }
        Ok(Grid { dx, n_cells })
    }

    /// Smallest grid reaching `x_max`.
    pub fn with_x_max(dx: f64, x_max: f64) -> Result<Self> {
        if !(x_max > 0.0 && x_max.is_finite()) {
            return Err(Error::param("x_max", "must be positive and finite"));
        }
        if !(dx > 0.0) {
            return Err(Error::param("dx", "must be positive and finite"));
        }
        let cells = (x_max / dx - 1e-9).ceil().max(2.0);
        Grid::new(dx, cells as usize)
    }

    /// Smallest multiple of `dx` with `e^{-r0 x_max} <= TAIL_EPS`.
    pub fn auto(model: &RateModel, dx: f64) -> Result<Self> {
        if !model.is_strictly_excitable() {
            return Err(Error::param("x_max", "automatic length needs r0 > 0; give x_max explicitly"));
        }
        Grid::with_x_max(dx, -TAIL_EPS.ln() / model.r0())
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Time step, tied to the age step.
    pub fn dt(&self) -> f64 {
        self.dx
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn x_max(&self) -> f64 {
        self.n_cells as f64 * self.dx
    }

    pub fn edge(&self, j: usize) -> f64 {
        j as f64 * self.dx
    }

    pub fn center(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.dx
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        self.n_cells == other.n_cells && self.dx == other.dx
    }
}

const GAUSS3: [(f64, f64); 3] = [
    (-0.774_596_669_241_483_4, 5.0 / 9.0),
    (0.0, 8.0 / 9.0),
    (0.774_596_669_241_483_4, 5.0 / 9.0),
];

#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    grid: Grid,
    values: Vec<f64>,
}

impl Density {
    pub fn zeros(grid: Grid) -> Self {
        Density {
            grid,
            values: vec![0.0; grid.n_cells],
        }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_cells {
            return Err(Error::param("density", format!("expected {} cells, got {}", grid.n_cells, values.len())));
        }
        if let Some((cell, &value)) = values.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidDensity { cell, value });
        }
        Ok(Density { grid, values })
    }

    /// Cell averages of `f` by 3-point Gauss quadrature, without normalization.
    pub fn project(grid: Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let h = 0.5 * grid.dx;
        let values = (0..grid.n_cells)
            .map(|j| {
                let c = grid.center(j);
                GAUSS3.iter().map(|(t, w)| w * f(c + t * h)).sum::<f64>() * 0.5
            })
            .collect();
        Density::from_values(grid, values)
    }

    /// Projection followed by normalization to unit mass.
    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let mut d = Density::project(grid, f)?;
        d.normalize()?;
        Ok(d)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn mass(&self) -> f64 {
        self.grid.dx * self.values.iter().sum::<f64>()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let m = self.mass();
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::param("density", "cannot normalize a density with zero mass"));
        }
        self.scale(1.0 / m);
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn l1_distance(&self, other: &Density) -> Result<f64> {
        if !self.grid.same_as(&other.grid) {
            return Err(Error::GridMismatch);
        }
        Ok(self.grid.dx * self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).sum::<f64>())
    }

    /// `(center, value)` pairs for output.
    pub fn samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.values.iter().enumerate().map(|(j, &v)| (self.grid.center(j), v))
    }
}

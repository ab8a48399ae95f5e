//! Contraction functionals and decay-rate estimates.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Density;
use crate::kinetics::cell_quantities;
use crate::model::RateModel;
use crate::solver::Autonomous;

/// Sign with `sg(0) = 0`.
pub fn sg(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn l1_distance(a: &Density, b: &Density) -> Result<f64> {
    a.l1_distance(b)
}

/// Mean rate over each cell at a frozen activity.
pub fn cell_rates(model: &RateModel, grid: &crate::grid::Grid, activity: f64) -> Vec<f64> {
    let dx = grid.dx();
    let shape = model.step_shape(activity);
    (0..grid.n_cells())
        .map(|j| match shape {
            Some(s) if grid.edge(j + 1) <= s.sigma => s.low,
            Some(s) if grid.edge(j) >= s.sigma => s.high,
            _ => cell_quantities(model, grid, j, activity).0 / dx,
        })
        .collect()
}

/// `int [r1 |n1 - n2| + |r1 - r2| n2] [1 - sg(n1 - n2) sg(I1 - I2)] dx`.
pub fn g_functional(model: &RateModel, n1: &Density, n2: &Density, i1: f64, i2: f64) -> Result<f64> {
    if !n1.grid().same_as(n2.grid()) {
        return Err(Error::GridMismatch);
    }
    let grid = n1.grid();
    let r1 = cell_rates(model, grid, i1);
    let r2 = if i1 == i2 { r1.clone() } else { cell_rates(model, grid, i2) };
    Ok(g_from_rates(&r1, &r2, n1.values(), n2.values(), i1, i2) * grid.dx())
}

pub(crate) fn g_from_rates(r1: &[f64], r2: &[f64], v1: &[f64], v2: &[f64], i1: f64, i2: f64) -> f64 {
    let s_i = sg(i1 - i2);
    r1.iter()
        .zip(r2)
        .zip(v1.iter().zip(v2))
        .map(|((a, b), (p, q))| (a * (p - q).abs() + (a - b).abs() * q) * (1.0 - sg(p - q) * s_i))
        .sum()
}

#[derive(Debug, Clone, Serialize)]
pub struct ContractionReport {
    pub times: Vec<f64>,
    pub distances: Vec<f64>,
    pub g_values: Vec<f64>,
    /// Forward difference of the distance plus `G` at the left end of each step.
    pub defects: Vec<f64>,
    /// Largest per-step increase of the distance.
    pub max_violation: f64,
    /// Steps whose increase exceeds `1e-6 + 2 dx`.
    pub violations: usize,
}

impl ContractionReport {
    pub fn max_abs_defect(&self) -> f64 {
        self.defects.iter().fold(0.0, |m, d| m.max(d.abs()))
    }
}

/// Runs two autonomous solutions on one clock and records the contraction identity.
pub fn contraction_test(model: &RateModel, n0_a: Density, n0_b: Density, t_end: f64) -> Result<ContractionReport> {
    if !n0_a.grid().same_as(n0_b.grid()) {
        return Err(Error::GridMismatch);
    }
    let dt = n0_a.grid().dt();
    let steps = crate::solver::RunOptions::new(t_end).steps(dt)?;
    let mut a = Autonomous::new(model, n0_a)?;
    let mut b = Autonomous::new(model, n0_b)?;
    let slack = 1e-6 + 2.0 * dt;
    let mut report = ContractionReport {
        times: Vec::with_capacity(steps + 1),
        distances: Vec::with_capacity(steps + 1),
        g_values: Vec::with_capacity(steps),
        defects: Vec::with_capacity(steps),
        max_violation: 0.0,
        violations: 0,
    };
    let mut dist = a.density().l1_distance(b.density())?;
    report.times.push(0.0);
    report.distances.push(dist);
    for k in 0..steps {
        let (ia, ib) = (a.activity(), b.activity());
        let g = g_functional(model, a.density(), b.density(), ia, ib)?;
        a.advance();
        b.advance();
        let next = a.density().l1_distance(b.density())?;
        let increase = next - dist;
        report.max_violation = report.max_violation.max(increase);
        if increase > slack {
            report.violations += 1;
        }
        report.g_values.push(g);
        report.defects.push(increase / dt + g);
        report.times.push((k + 1) as f64 * dt);
        report.distances.push(next);
        dist = next;
    }
    Ok(report)
}

/// Exponential decay rate of a positive trace: minus the least-squares slope
/// of `ln v` over the samples in `[1e-10, 0.5 v_0]`.
pub fn decay_rate(times: &[f64], values: &[f64]) -> Result<f64> {
    if times.len() != values.len() {
        return Err(Error::param("trace", "times and values differ in length"));
    }
    let usable = values.iter().filter(|&&v| v > 1e-13).count();
    if usable < 10 {
        return Err(Error::TooFewSamples { needed: 10, got: usable });
    }
    let initial = values[0];
    let select = |lo: f64, hi: f64| -> Vec<(f64, f64)> {
        times
            .iter()
            .zip(values)
            .filter(|(_, &v)| v >= lo && v <= hi)
            .map(|(&t, &v)| (t, v.ln()))
            .collect()
    };
    let mut window = select(1e-10, 0.5 * initial);
    if window.len() < 2 {
        window = select(1e-10, f64::INFINITY);
    }
    if window.len() < 2 {
        return Err(Error::NoDecayRegime);
    }
    let n = window.len() as f64;
    let (mt, my) = window.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + t / n, b + y / n));
    let (sxy, sxx) = window
        .iter()
        .fold((0.0, 0.0), |(a, b), (t, y)| (a + (t - mt) * (y - my), b + (t - mt) * (t - mt)));
    if sxx <= 0.0 {
        return Err(Error::NoDecayRegime);
    }
    Ok(-sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::model::Threshold;

    #[test]
    fn decay_rate_of_exact_exponential() {
        let t: Vec<f64> = (0..200).map(|k| k as f64 * 0.1).collect();
        let v: Vec<f64> = t.iter().map(|t| (-t).exp()).collect();
        assert!((decay_rate(&t, &v).unwrap() - 1.0).abs() < 1e-6);
        let flat = vec![0.3; t.len()];
        assert!(decay_rate(&t, &flat).unwrap().abs() < 1e-15);
        assert!(matches!(decay_rate(&t[..5], &v[..5]), Err(Error::TooFewSamples { .. })));
    }

    #[test]
    fn distance_of_two_exponentials() {
        let g = Grid::with_x_max(0.001, 40.0).unwrap();
        let a = Density::from_fn(g, |x| 2.0 * (-2.0 * x).exp()).unwrap();
        let b = Density::from_fn(g, |x| (-x).exp()).unwrap();
        // the profiles cross at ln 2: 2 (e^{-ln2} - e^{-2 ln2}) = 0.5
        assert!((l1_distance(&a, &b).unwrap() - 0.5).abs() < 1e-3);
        assert_eq!(l1_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn g_vanishes_on_equal_states_and_reduces_for_constant_rate() {
        let m = RateModel::constant(1.3).unwrap();
        let g = Grid::with_x_max(0.01, 30.0).unwrap();
        let a = Density::from_fn(g, |x| (-x).exp()).unwrap();
        let b = Density::from_fn(g, |x| x * (-x).exp()).unwrap();
        assert_eq!(g_functional(&m, &a, &a, 1.3, 1.3).unwrap(), 0.0);
        let value = g_functional(&m, &a, &b, 1.3, 1.3).unwrap();
        assert!((value - 1.3 * l1_distance(&a, &b).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn g_is_symmetric_for_inhibitory_models() {
        let m = RateModel::step(0.5, Threshold::Affine { offset: 1.0, slope: 1.0 }).unwrap();
        let g = Grid::with_x_max(0.01, 30.0).unwrap();
        let a = Density::from_fn(g, |x| (-x).exp()).unwrap();
        let b = Density::from_fn(g, |x| x * x * (-x).exp()).unwrap();
        let ab = g_functional(&m, &a, &b, 0.4, 0.9).unwrap();
        let ba = g_functional(&m, &b, &a, 0.9, 0.4).unwrap();
        assert!(ab >= 0.0);
        assert!((ab - ba).abs() < 1e-12);
    }
}

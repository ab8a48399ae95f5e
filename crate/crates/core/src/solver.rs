//! Time stepping of the autonomous and the input-driven equations.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Density;
use crate::kinetics::{explicit_activity_of, implicit_activity_of, Transition};
use crate::model::RateModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRecord {
    pub t: f64,
    #[serde(rename = "I")]
    pub activity: f64,
    pub mass: f64,
    pub dist_l1: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub t_end: f64,
    /// Record every `stride`-th step (the final state is always recorded).
    pub stride: usize,
    pub renormalize: bool,
}

impl RunOptions {
    pub fn new(t_end: f64) -> Self {
        RunOptions {
            t_end,
            stride: 1,
            renormalize: false,
        }
    }

    pub fn stride(mut self, stride: usize) -> Self {
        self.stride = stride.max(1);
        self
    }

    pub fn renormalize(mut self, on: bool) -> Self {
        self.renormalize = on;
        self
    }

    pub(crate) fn steps(&self, dt: f64) -> Result<usize> {
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::param("t_end", "must be non-negative and finite"));
        }
        Ok((self.t_end / dt).round() as usize)
    }
}

/// Root of the implicit activity equation for an inhibitory model.
pub fn solve_activity(model: &RateModel, n: &Density) -> Result<f64> {
    if !model.is_inhibitory() {
        return Err(Error::NotInhibitory("implicit activity"));
    }
    Ok(implicit_activity_of(model, n).0)
}

/// Activity produced by `n` when the rate is frozen at input `j`.
pub fn explicit_activity(model: &RateModel, n: &Density, j: f64) -> f64 {
    explicit_activity_of(model, n, model.clamp_activity(j)).0
}

/// One transport step with boundary value `i_boundary` and rate argument `i_rate_arg`.
pub fn step(model: &RateModel, n: &Density, i_boundary: f64, i_rate_arg: f64) -> Density {
    let tr = Transition::new(model, n.grid(), model.clamp_activity(i_rate_arg));
    let mut out = n.clone();
    let inflow = i_boundary.max(0.0) * tr.w0 / n.grid().dx();
    tr.advance(out.values_mut(), Some(inflow));
    out
}

/// `|| d_x n0 + r(., I(0)) n0 ||_1` with `I(0)` from the implicit equation.
pub fn k_ini(model: &RateModel, n0: &Density) -> Result<f64> {
    let i0 = solve_activity(model, n0)?;
    Ok(k_ini_at(model, n0, i0))
}

/// As [`k_ini`] with a given rate argument; the jump at the boundary is not counted.
pub fn k_ini_at(model: &RateModel, n0: &Density, activity: f64) -> f64 {
    let g = n0.grid();
    let v = n0.values();
    let dx = g.dx();
    (1..v.len() - 1)
        .map(|j| {
            let x = g.edge(j);
            ((v[j] - v[j - 1]) / dx + model.rate(x, activity) * 0.5 * (v[j] + v[j - 1])).abs()
        })
        .sum::<f64>()
        * dx
}

/// Stepper for the autonomous equation with implicit activity.
#[derive(Debug, Clone)]
pub struct Autonomous<'a> {
    model: &'a RateModel,
    density: Density,
    time: f64,
    renormalize: bool,
}

impl<'a> Autonomous<'a> {
    pub fn new(model: &'a RateModel, n0: Density) -> Result<Self> {
        if !model.is_inhibitory() {
            return Err(Error::NotInhibitory("autonomous run"));
        }
        Ok(Autonomous {
            model,
            density: n0,
            time: 0.0,
            renormalize: false,
        })
    }

    pub fn with_renormalize(mut self, on: bool) -> Self {
        self.renormalize = on;
        self
    }

    pub fn density(&self) -> &Density {
        &self.density
    }

    pub fn into_density(self) -> Density {
        self.density
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Activity of the current state.
    pub fn activity(&self) -> f64 {
        implicit_activity_of(self.model, &self.density).0
    }

    /// Advances one step and returns the activity used over it.
    pub fn advance(&mut self) -> f64 {
        let (i, tr) = implicit_activity_of(self.model, &self.density);
        tr.advance(self.density.values_mut(), None);
        if self.renormalize {
            let _ = self.density.normalize();
        }
        self.time += self.density.grid().dt();
        i
    }
}

fn record(t: f64, activity: f64, n: &Density, reference: Option<&Density>) -> Result<TraceRecord> {
    Ok(TraceRecord {
        t,
        activity,
        mass: n.mass(),
        dist_l1: reference.map(|r| n.l1_distance(r)).transpose()?,
    })
}

/// Runs the autonomous equation; `reference` adds the L1 distance column.
pub fn run_autonomous(
    model: &RateModel,
    n0: Density,
    options: &RunOptions,
    reference: Option<&Density>,
) -> Result<(Density, Vec<TraceRecord>)> {
    let steps = options.steps(n0.grid().dt())?;
    let dt = n0.grid().dt();
    let mut run = Autonomous::new(model, n0)?.with_renormalize(options.renormalize);
    let mut trace = Vec::with_capacity(steps / options.stride + 2);
    for k in 0..steps {
        let i = if k % options.stride == 0 {
            let (i, tr) = implicit_activity_of(model, &run.density);
            trace.push(record(k as f64 * dt, i, &run.density, reference)?);
            tr.advance(run.density.values_mut(), None);
            if run.renormalize {
                run.density.normalize()?;
            }
            run.time += dt;
            i
        } else {
            run.advance()
        };
        if !(0.0..=model.r_max() * (1.0 + 1e-9) * run.density.mass().max(1.0)).contains(&i) {
            return Err(Error::OutOfRange {
                value: i,
                range: format!("[0, {}]", model.r_max()),
            });
        }
    }
    let last = run.activity();
    trace.push(record(steps as f64 * dt, last, &run.density, reference)?);
    Ok((run.into_density(), trace))
}

/// Runs the linear equation driven by the input `input(t)`.
pub fn run_linear(
    model: &RateModel,
    n0: Density,
    input: &dyn Fn(f64) -> f64,
    options: &RunOptions,
    reference: Option<&Density>,
) -> Result<(Density, Vec<TraceRecord>)> {
    let dt = n0.grid().dt();
    let steps = options.steps(dt)?;
    let mut n = n0;
    let mut trace = Vec::with_capacity(steps / options.stride + 2);
    for k in 0..=steps {
        let t = k as f64 * dt;
        let (i, tr) = explicit_activity_of(model, &n, model.clamp_activity(input(t)));
        if k % options.stride == 0 || k == steps {
            trace.push(record(t, i, &n, reference)?);
        }
        if k == steps {
            break;
        }
        tr.advance(n.values_mut(), None);
        if options.renormalize {
            n.normalize()?;
        }
    }
    Ok((n, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::model::Threshold;
    use crate::steadystate::fixed_point_phi;

    #[test]
    fn constant_rate_activity_is_level_times_mass() {
        let m = RateModel::constant(1.7).unwrap();
        let g = Grid::auto(&m, 0.01).unwrap();
        let n = Density::from_fn(g, |x| (x - 1.0).powi(2) * (-x).exp()).unwrap();
        assert!((solve_activity(&m, &n).unwrap() - 1.7).abs() < 1e-12);
        let mut half = n.clone();
        half.scale(0.5);
        assert!((explicit_activity(&m, &half, 0.3) - 0.85).abs() < 1e-12);
    }

    #[test]
    fn explicit_activity_of_uniform_block() {
        let m = RateModel::step(0.5, Threshold::Constant(1.0)).unwrap();
        let g = Grid::auto(&m, 0.001).unwrap();
        let n = Density::from_fn(g, |x| if x < 2.0 { 0.5 } else { 0.0 }).unwrap();
        assert!((explicit_activity(&m, &n, 0.4) - 1.0).abs() < 2e-3);
    }

    #[test]
    fn zero_density_stays_zero() {
        let m = RateModel::constant(1.0).unwrap();
        let g = Grid::new(0.1, 10).unwrap();
        let out = step(&m, &Density::zeros(g), 0.0, 0.0);
        assert!(out.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_cell_moves_with_decay() {
        let m = RateModel::constant(2.0).unwrap();
        let g = Grid::new(0.1, 10).unwrap();
        let mut v = vec![0.0; 10];
        v[3] = 1.0;
        let out = step(&m, &Density::from_values(g, v).unwrap(), 0.0, 0.0);
        assert!((out.values()[4] - (-0.2f64).exp()).abs() < 1e-15);
        assert_eq!(out.values()[3], 0.0);
    }

    #[test]
    fn stationary_state_is_a_discrete_fixed_point() {
        let m = RateModel::step(0.5, Threshold::Affine { offset: 0.5, slope: 1.0 }).unwrap();
        let g = Grid::auto(&m, 0.01).unwrap();
        let ss = fixed_point_phi(&m, &g).unwrap();
        let (end, trace) = run_autonomous(&m, ss.density.clone(), &RunOptions::new(40.0), Some(&ss.density)).unwrap();
        assert!(trace.iter().all(|r| (r.activity - ss.i_bar).abs() < 1e-10));
        assert!(end.l1_distance(&ss.density).unwrap() < 1e-10);
    }

    #[test]
    fn k_ini_of_shifted_exponential() {
        let m = RateModel::constant(1.0).unwrap();
        let g = Grid::auto(&m, 0.001).unwrap();
        let n = Density::from_fn(g, |x| 2.0 * (-2.0 * x).exp()).unwrap();
        assert!((k_ini(&m, &n).unwrap() - 1.0).abs() < 1e-2);
        let mut doubled = n.clone();
        doubled.scale(2.0);
        assert!((k_ini_at(&m, &doubled, 1.0) - 2.0 * k_ini_at(&m, &n, 1.0)).abs() < 1e-12);
    }
}

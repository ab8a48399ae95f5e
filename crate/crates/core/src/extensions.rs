//! Distributed-birth equation and the two-population cross-coupled system.
//!
//! Neurons fire as in the renewal equation, but instead of re-entering at
//! age zero they are redistributed according to a birth kernel `B`. The
//! activity is defined by the same implicit relation as in the renewal case,
//! so a kernel concentrated on the first cell reproduces the renewal run.

use std::path::Path;

use crate::diagnostics::{g_functional, ContractionReport};
use crate::error::{Error, Result};
use crate::grid::{Density, Grid};
use crate::kinetics::implicit_activity_of;
use crate::model::RateModel;
use crate::solver::{RunOptions, TraceRecord};

/// Probability density of re-entry ages, stored as cell averages.
#[derive(Debug, Clone, PartialEq)]
pub struct BirthKernel {
    grid: Grid,
    values: Vec<f64>,
}

impl BirthKernel {
    /// Normalizes `values` to unit mass.
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        let mut d = Density::from_values(grid, values)?;
        d.normalize().map_err(|_| Error::param("kernel", "birth kernel must have positive mass"))?;
        Ok(BirthKernel {
            grid,
            values: d.values().to_vec(),
        })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let d = Density::project(grid, f)?;
        BirthKernel::new(grid, d.values().to_vec())
    }

    /// Unit mass in the first cell.
    pub fn delta0(grid: Grid) -> Self {
        let mut values = vec![0.0; grid.n_cells()];
        values[0] = 1.0 / grid.dx();
        BirthKernel { grid, values }
    }

    /// Reads `(x, B)` rows and interpolates linearly at cell centres.
    pub fn from_csv(path: &Path, grid: Grid) -> Result<Self> {
        let (xs, bs) = crate::io::read_two_columns(path)?;
        BirthKernel::new(grid, (0..grid.n_cells()).map(|j| interp(&xs, &bs, grid.center(j))).collect())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn deposit(&self, values: &mut [f64], mass: f64) {
        for (v, b) in values.iter_mut().zip(&self.values) {
            *v += b * mass;
        }
    }
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if xs.is_empty() || x < xs[0] || x > xs[xs.len() - 1] {
        return 0.0;
    }
    let k = xs.partition_point(|&v| v <= x).clamp(1, xs.len() - 1);
    let (x0, x1) = (xs[k - 1], xs[k]);
    if x1 == x0 {
        return ys[k];
    }
    ys[k - 1] + (x - x0) / (x1 - x0) * (ys[k] - ys[k - 1])
}

/// Transports `n` with zero inflow and returns `(activity, fired mass)`.
fn fire(model: &RateModel, n: &mut Density) -> (f64, f64) {
    let (i, tr) = implicit_activity_of(model, n);
    let dx = n.grid().dx();
    let fired = tr.advance(n.values_mut(), Some(0.0)) * dx;
    (i, fired)
}

/// One step of the distributed-birth equation; returns the activity used.
pub fn step_distributed(model: &RateModel, kernel: &BirthKernel, n: &mut Density) -> Result<f64> {
    if !model.is_inhibitory() {
        return Err(Error::NotInhibitory("distributed birth"));
    }
    if !kernel.grid.same_as(n.grid()) {
        return Err(Error::GridMismatch);
    }
    let (i, fired) = fire(model, n);
    kernel.deposit(n.values_mut(), fired);
    Ok(i)
}

pub fn run_distributed(
    model: &RateModel,
    kernel: &BirthKernel,
    n0: Density,
    options: &RunOptions,
    reference: Option<&Density>,
) -> Result<(Density, Vec<TraceRecord>)> {
    let dt = n0.grid().dt();
    let steps = options.steps(dt)?;
    let mut n = n0;
    let mut trace = Vec::with_capacity(steps / options.stride + 2);
    for k in 0..=steps {
        let t = k as f64 * dt;
        if k == steps {
            trace.push(TraceRecord {
                t,
                activity: implicit_activity_of(model, &n).0,
                mass: n.mass(),
                dist_l1: reference.map(|r| n.l1_distance(r)).transpose()?,
            });
            break;
        }
        let before = (n.mass(), reference.map(|r| n.l1_distance(r)).transpose()?);
        let i = step_distributed(model, kernel, &mut n)?;
        if options.renormalize {
            n.normalize()?;
        }
        if k % options.stride == 0 {
            trace.push(TraceRecord {
                t,
                activity: i,
                mass: before.0,
                dist_l1: before.1,
            });
        }
    }
    Ok((n, trace))
}

/// Stationary solution of `n' + r(., I) n = B I`, `n(0) = 0`, with unit mass,
/// integrated cell by cell with the exact survival of the scheme.
pub fn distributed_stationary(model: &RateModel, kernel: &BirthKernel) -> Result<(f64, Density)> {
    if !model.is_inhibitory() {
        return Err(Error::NotInhibitory("distributed stationary state"));
    }
    let h = |i: f64| -> Result<(f64, Density)> {
        let n = stationary_response(model, kernel, i)?;
        Ok((implicit_activity_of(model, &n).0 - i, n))
    };
    let (mut lo, mut hi) = (0.0, model.r_max());
    let (h_lo, n_lo) = h(lo)?;
    if h_lo <= 0.0 {
        return Ok((lo, n_lo));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if h(mid)?.0 > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (_, n) = h(hi)?;
    Ok((hi, n))
}

fn stationary_response(model: &RateModel, kernel: &BirthKernel, activity: f64) -> Result<Density> {
    let grid = *kernel.grid();
    let tr = crate::kinetics::Transition::new(model, &grid, activity);
    let nc = grid.n_cells();
    let b = kernel.values();
    let mut v = vec![0.0; nc];
    // v_j = S_{j-1} v_{j-1} + b_j F, solved with F = 1 then rescaled
    let mut carry = 0.0;
    for j in 0..nc - 1 {
        v[j] = carry + b[j];
        carry = v[j] * tr.survival(j);
    }
    let s_tail = tr.survival(nc - 1);
    v[nc - 1] = (carry + b[nc - 1]) / (1.0 - s_tail).max(f64::MIN_POSITIVE);
    let mut d = Density::from_values(grid, v)?;
    d.normalize()?;
    Ok(d)
}

/// Non-expansion record for two distributed-birth runs.
pub fn nonexpansion_defect_distributed(
    model: &RateModel,
    kernel: &BirthKernel,
    n0_a: Density,
    n0_b: Density,
    t_end: f64,
) -> Result<ContractionReport> {
    if !n0_a.grid().same_as(n0_b.grid()) || !kernel.grid.same_as(n0_a.grid()) {
        return Err(Error::GridMismatch);
    }
    paired_report(&mut [(n0_a, n0_b)], t_end, |pairs| {
        let (a, b) = &mut pairs[0];
        let ia = implicit_activity_of(model, a).0;
        let ib = implicit_activity_of(model, b).0;
        let g = g_functional(model, a, b, ia, ib)?;
        step_distributed(model, kernel, a)?;
        step_distributed(model, kernel, b)?;
        Ok(g)
    })
}

fn paired_report<const K: usize>(
    pairs: &mut [(Density, Density); K],
    t_end: f64,
    mut advance: impl FnMut(&mut [(Density, Density); K]) -> Result<f64>,
) -> Result<ContractionReport> {
    let dt = pairs[0].0.grid().dt();
    let steps = RunOptions::new(t_end).steps(dt)?;
    let slack = 1e-6 + 2.0 * dt;
    let distance = |pairs: &[(Density, Density); K]| -> Result<f64> {
        pairs.iter().map(|(a, b)| a.l1_distance(b)).sum()
    };
    let mut report = ContractionReport {
        times: vec![0.0],
        distances: vec![distance(pairs)?],
        g_values: Vec::with_capacity(steps),
        defects: Vec::with_capacity(steps),
        max_violation: 0.0,
        violations: 0,
    };
    for k in 0..steps {
        let dist = report.distances[k];
        let g = advance(pairs)?;
        let next = distance(pairs)?;
        let increase = next - dist;
        report.max_violation = report.max_violation.max(increase);
        if increase > slack {
            report.violations += 1;
        }
        report.g_values.push(g);
        report.defects.push(increase / dt + g);
        report.times.push((k + 1) as f64 * dt);
        report.distances.push(next);
    }
    Ok(report)
}

/// One population of the coupled system.
#[derive(Debug, Clone)]
pub struct Population {
    pub model: RateModel,
    pub kernel: BirthKernel,
    pub density: Density,
}

/// Two populations whose births are driven by each other's firing.
#[derive(Debug, Clone)]
pub struct SystemState {
    pub populations: [Population; 2],
    /// Activities used over the last step.
    pub activities: [f64; 2],
    pub time: f64,
}

impl SystemState {
    pub fn new(first: Population, second: Population) -> Result<Self> {
        for p in [&first, &second] {
            if !p.model.is_inhibitory() {
                return Err(Error::NotInhibitory("two-population system"));
            }
            if !p.kernel.grid.same_as(p.density.grid()) {
                return Err(Error::GridMismatch);
            }
        }
        if !first.density.grid().same_as(second.density.grid()) {
            return Err(Error::GridMismatch);
        }
        let activities = [
            implicit_activity_of(&first.model, &first.density).0,
            implicit_activity_of(&second.model, &second.density).0,
        ];
        Ok(SystemState {
            populations: [first, second],
            activities,
            time: 0.0,
        })
    }

    /// Current activities `(I_1, I_2)`.
    pub fn current_activities(&self) -> [f64; 2] {
        [0, 1].map(|k| implicit_activity_of(&self.populations[k].model, &self.populations[k].density).0)
    }

    pub fn masses(&self) -> [f64; 2] {
        [0, 1].map(|k| self.populations[k].density.mass())
    }
}

/// Advances both populations; births of population `i` are `B_i` times the fired mass of the other.
pub fn step_system(state: &mut SystemState) {
    let [p, q] = &mut state.populations;
    let (i1, f1) = fire(&p.model, &mut p.density);
    let (i2, f2) = fire(&q.model, &mut q.density);
    p.kernel.deposit(p.density.values_mut(), f2);
    q.kernel.deposit(q.density.values_mut(), f1);
    state.activities = [i1, i2];
    state.time += p.density.grid().dt();
}

/// Summed non-expansion record for two solutions of the system.
pub fn nonexpansion_defect_system(a: SystemState, b: SystemState, t_end: f64) -> Result<ContractionReport> {
    for k in 0..2 {
        if !a.populations[k].density.grid().same_as(b.populations[k].density.grid()) {
            return Err(Error::GridMismatch);
        }
    }
    let mut a = a;
    let mut b = b;
    let mut pairs = [0, 1].map(|k| (a.populations[k].density.clone(), b.populations[k].density.clone()));
    paired_report(&mut pairs, t_end, |pairs| {
        let ia = a.current_activities();
        let ib = b.current_activities();
        let mut g = 0.0;
        for k in 0..2 {
            g += g_functional(&a.populations[k].model, &a.populations[k].density, &b.populations[k].density, ia[k], ib[k])?;
        }
        step_system(&mut a);
        step_system(&mut b);
        for k in 0..2 {
            pairs[k] = (a.populations[k].density.clone(), b.populations[k].density.clone());
        }
        Ok(g)
    })
}

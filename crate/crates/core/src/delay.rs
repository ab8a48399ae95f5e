//! Delayed activity feedback, large-delay limit profiles and Cesàro errors.

use std::collections::VecDeque;

use log::warn;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Density, Grid};
use crate::kinetics::explicit_activity_of;
use crate::model::RateModel;
use crate::steadystate::{phi, stationary_density};

/// Past activities over one delay window, oldest first.
#[derive(Debug, Clone)]
pub struct ActivityHistory {
    buffer: VecDeque<f64>,
    delay: f64,
}

impl ActivityHistory {
    /// Snaps `delay` to the nearest positive multiple of `dt` and fills the window with `i_ini`.
    pub fn new(delay: f64, dt: f64, i_ini: f64) -> Result<Self> {
        if !(delay > 0.0 && delay.is_finite()) {
            return Err(Error::param("delay", "must be positive and finite"));
        }
        let steps = (delay / dt).round().max(1.0) as usize;
        let snapped = steps as f64 * dt;
        if ((snapped - delay) / delay).abs() > 1e-6 {
            warn!("delay {delay} snapped to {snapped} (multiple of dt = {dt})");
        }
        Ok(ActivityHistory {
            buffer: std::iter::repeat_n(i_ini, steps).collect(),
            delay: snapped,
        })
    }

    pub fn delay(&self) -> f64 {
        self.delay
    }

    pub fn steps_per_delay(&self) -> usize {
        self.buffer.len()
    }

    /// `I(t - d)`.
    pub fn lookup(&self) -> f64 {
        *self.buffer.front().expect("non-empty window")
    }

    pub fn push(&mut self, activity: f64) {
        self.buffer.pop_front();
        self.buffer.push_back(activity);
    }
}

/// Piecewise-constant limit of the rescaled solution as the delay grows.
#[derive(Debug, Clone)]
pub struct LimitProfile {
    /// `Phi^0(I_ini), ..., Phi^N(I_ini)`.
    pub iterates: Vec<f64>,
    /// `n_bar(., Phi^{k-1})` on `[k - 1, k)`, for `k = 1..=N`.
    pub densities: Vec<Density>,
}

impl LimitProfile {
    pub fn intervals(&self) -> usize {
        self.densities.len()
    }

    fn interval(&self, tau: f64) -> usize {
        (tau.max(0.0).floor() as usize).min(self.intervals() - 1)
    }

    /// `I_inf(tau) = Phi^{k}(I_ini)` on `[k - 1, k)`.
    pub fn activity_at(&self, tau: f64) -> f64 {
        self.iterates[self.interval(tau) + 1]
    }

    pub fn density_at(&self, tau: f64) -> &Density {
        &self.densities[self.interval(tau)]
    }
}

pub fn limit_profile(model: &RateModel, grid: &Grid, i_ini: f64, intervals: usize) -> Result<LimitProfile> {
    if intervals == 0 {
        return Err(Error::param("intervals", "need at least one interval"));
    }
    let mut iterates = vec![model.clamp_activity(i_ini)];
    let mut densities = Vec::with_capacity(intervals);
    for k in 0..intervals {
        let prev = iterates[k];
        densities.push(stationary_density(model, grid, prev)?);
        iterates.push(phi(model, grid, prev)?.value);
    }
    Ok(LimitProfile { iterates, densities })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DelayRecord {
    pub t: f64,
    pub tau: f64,
    #[serde(rename = "I")]
    pub activity: f64,
    /// `I(t - d)`.
    pub input: f64,
    pub mass: f64,
    pub dist_ref: Option<f64>,
    pub profile_activity: Option<f64>,
    pub dist_profile: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct DelayOptions<'a> {
    pub t_end: f64,
    pub stride: usize,
    pub reference: Option<&'a Density>,
    pub profile: Option<&'a LimitProfile>,
}

impl<'a> DelayOptions<'a> {
    pub fn new(t_end: f64) -> Self {
        DelayOptions {
            t_end,
            stride: 1,
            reference: None,
            profile: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DelayedRun {
    pub density: Density,
    pub trace: Vec<DelayRecord>,
    /// Delay after snapping to the time grid.
    pub delay: f64,
}

/// Runs the equation with activity feedback delayed by `delay`.
pub fn run_delayed(model: &RateModel, n0: Density, i_ini: f64, delay: f64, options: &DelayOptions) -> Result<DelayedRun> {
    let dt = n0.grid().dt();
    let i_ini = model.clamp_activity(i_ini);
    let mut history = ActivityHistory::new(delay, dt, i_ini)?;
    let d = history.delay();
    let steps = crate::solver::RunOptions::new(options.t_end).steps(dt)?;
    let stride = options.stride.max(1);
    let mut n = n0;
    let mut trace = Vec::with_capacity(steps / stride + 2);
    for k in 0..=steps {
        let t = k as f64 * dt;
        let input = history.lookup();
        let (i, tr) = explicit_activity_of(model, &n, input);
        if k % stride == 0 || k == steps {
            let tau = t / d;
            trace.push(DelayRecord {
                t,
                tau,
                activity: i,
                input,
                mass: n.mass(),
                dist_ref: options.reference.map(|r| n.l1_distance(r)).transpose()?,
                profile_activity: options.profile.map(|p| p.activity_at(tau)),
                dist_profile: options.profile.map(|p| n.l1_distance(p.density_at(tau))).transpose()?,
            });
        }
        if k == steps {
            break;
        }
        tr.advance(n.values_mut(), None);
        history.push(i);
    }
    Ok(DelayedRun { density: n, trace, delay: d })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CesaroError {
    /// `int_0^N |I_d(tau) - I_inf(tau)| dtau`.
    pub activity: f64,
    /// `int_0^N ||n_d(tau) - n_inf(tau)||_1 dtau`, when recorded.
    pub density: Option<f64>,
}

/// Left-endpoint sums over the rescaled trace up to `tau = intervals`.
pub fn cesaro_error(trace: &[DelayRecord], profile: &LimitProfile, delay: f64, intervals: usize) -> Result<CesaroError> {
    let horizon = intervals as f64;
    let covered = trace.last().map(|r| r.tau).unwrap_or(0.0);
    if covered < horizon * (1.0 - 1e-9) {
        return Err(Error::TraceTooShort {
            covered: covered * delay,
            needed: horizon * delay,
        });
    }
    let mut activity = 0.0;
    let mut density = Some(0.0);
    for pair in trace.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if a.tau >= horizon {
            break;
        }
        let width = b.tau.min(horizon) - a.tau;
        activity += (a.activity - profile.activity_at(a.tau)).abs() * width;
        density = match (density, a.dist_profile) {
            (Some(acc), Some(dist)) => Some(acc + dist * width),
            _ => None,
        };
    }
    Ok(CesaroError { activity, density })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterateBounds {
    /// `C_1, ..., C_N`.
    pub c: Vec<f64>,
    /// `D_1, ..., D_N`.
    pub d: Vec<f64>,
}

impl IterateBounds {
    /// `(1 / (d alpha)) sum_k C_{k+1}`.
    pub fn cesaro_bound(&self, delay: f64, alpha: f64) -> f64 {
        self.c.iter().sum::<f64>() / (delay * alpha)
    }
}

/// `C_0 = 0`, `C_{k+1} = 2 rM + g (2 rM / |r0 - alpha| + 1) C_k`, `D_{k+1} = 2 + 2 g C_k / |r0 - alpha|`.
pub fn iterate_error_bound(gamma_bar: f64, r_max: f64, r0: f64, alpha: f64, intervals: usize) -> Result<IterateBounds> {
    if !(alpha > 0.0 && alpha < r0) {
        return Err(Error::param("alpha", "need 0 < alpha < r0"));
    }
    let gap = (r0 - alpha).abs();
    let mut c_prev = 0.0;
    let mut c = Vec::with_capacity(intervals);
    let mut d = Vec::with_capacity(intervals);
    for _ in 0..intervals {
        d.push(2.0 + 2.0 * gamma_bar * c_prev / gap);
        let next = 2.0 * r_max + gamma_bar * (2.0 * r_max / gap + 1.0) * c_prev;
        c.push(next);
        c_prev = next;
    }
    Ok(IterateBounds { c, d })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeakNonlinearity {
    pub omega: f64,
    pub converges: bool,
    /// `(1/r0) ln(r0 / (g rM))`; absent when `g = 0`.
    pub x0: Option<f64>,
}

impl WeakNonlinearity {
    /// Guaranteed rate `|ln omega| / (d + x0)`.
    pub fn rate(&self, delay: f64) -> Option<f64> {
        match (self.converges, self.x0) {
            (true, Some(x0)) => Some(self.omega.ln().abs() / (delay + x0)),
            _ => None,
        }
    }
}

/// `omega = g (3 rM / r0 + 1)`.
pub fn weak_nl_check(model: &RateModel) -> Result<WeakNonlinearity> {
    if !model.is_strictly_excitable() {
        return Err(Error::param("r0", "weak-nonlinearity check needs r0 > 0"));
    }
    let (g, r0, rm) = (model.gamma_bar(), model.r0(), model.r_max());
    let omega = g * (3.0 * rm / r0 + 1.0);
    Ok(WeakNonlinearity {
        omega,
        converges: omega < 1.0,
        x0: (g > 0.0).then(|| (r0 / (g * rm)).ln() / r0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DelayInequalities {
    /// Largest `f(t) - (g(t) + gamma f(t - d))(1 + slack)`.
    pub first_excess: f64,
    /// Largest excess of `g(t)` over its integral bound started at `s = 0`.
    pub second_excess: f64,
}

impl DelayInequalities {
    pub fn holds(&self, tolerance: f64) -> bool {
        self.first_excess <= tolerance && self.second_excess <= tolerance
    }
}

/// Checks the paired inequalities for `f = |I - I_bar| / rM` and `g = ||n - n_bar||_1`
/// along a delayed run recorded with `stride = 1` and a reference density.
pub fn delay_inequalities(model: &RateModel, run: &DelayedRun, i_bar: f64, slack: f64) -> Result<DelayInequalities> {
    let trace = &run.trace;
    let (g_bar, r0, rm) = (model.gamma_bar(), model.r0(), model.r_max());
    let f_of = |i: f64| (i - i_bar).abs() / rm;
    let mut first: f64 = f64::NEG_INFINITY;
    let mut second: f64 = f64::NEG_INFINITY;
    let g0 = trace
        .first()
        .and_then(|r| r.dist_ref)
        .ok_or_else(|| Error::param("trace", "needs the distance to the stationary density"))?;
    // int_0^t e^{r0 tau} f(tau - d) dtau, left endpoint
    let mut integral = 0.0;
    for (k, rec) in trace.iter().enumerate() {
        let g = rec.dist_ref.ok_or_else(|| Error::param("trace", "missing distance"))?;
        let f_delayed = f_of(rec.input);
        first = first.max(f_of(rec.activity) - (g + g_bar * f_delayed) * (1.0 + slack));
        let bound = g0 * (-r0 * rec.t).exp() + 2.0 * g_bar * rm * (-r0 * rec.t).exp() * integral;
        second = second.max(g - bound * (1.0 + slack));
        if let Some(next) = trace.get(k + 1) {
            integral += (r0 * rec.t).exp() * f_delayed * (next.t - rec.t);
        }
    }
    Ok(DelayInequalities {
        first_excess: first,
        second_excess: second,
    })
}

//! One-step transport kernel shared by every solver.
//!
//! Inside each cell the density is assumed to follow the local survival
//! profile `e^{-(R(x) - R(x_j))}`. Shifting by one cell over `dt = dx` then
//! gives per-cell survival factors `S_j` and a boundary weight `w_0`, and the
//! renewal inflow `I w_0` equals the fired mass exactly. For step-shaped rates
//! only the handful of cells near the threshold need the generic formula.

use crate::grid::{Density, Grid};
use crate::model::RateModel;

/// `(1 - e^{-z}) / z`.
pub(crate) fn phi1(z: f64) -> f64 {
    if z.abs() < 1e-8 {
        1.0 - 0.5 * z + z * z / 6.0
    } else {
        -(-z).exp_m1() / z
    }
}

/// `(int r, int e^{-(R(x) - R(x_j))} dx)` over cell `j`.
pub(crate) fn cell_quantities(model: &RateModel, grid: &Grid, j: usize, activity: f64) -> (f64, f64) {
    let (a, b) = (grid.edge(j), grid.edge(j + 1));
    let mut dr = 0.0_f64;
    let mut e = 0.0;
    model.for_each_piece(a, b, activity, |lo, hi| {
        let len = if lo == a && hi == b { grid.dx() } else { hi - lo };
        if len <= 0.0 {
            return;
        }
        let rp = len * model.rate(0.5 * (lo + hi), activity);
        e += (-dr).exp() * len * phi1(rp);
        dr += rp;
    });
    (dr, e)
}

/// Survival factors and boundary weight at one frozen activity argument.
#[derive(Debug, Clone)]
pub(crate) struct Transition {
    n: usize,
    lo_end: usize,
    hi_start: usize,
    s_lo: f64,
    s_hi: f64,
    mid: Vec<f64>,
    tail: f64,
    /// `int_0^dx e^{-R}`: newborn mass per unit activity.
    pub w0: f64,
}

impl Transition {
    pub fn new(model: &RateModel, grid: &Grid, activity: f64) -> Self {
        let n = grid.n_cells();
        let dx = grid.dx();
        let (lo_end, hi_start, s_lo, s_hi) = match model.step_shape(activity) {
            Some(shape) => {
                let ratio = shape.sigma / dx;
                let (lo_end, hi_start) = if ratio.is_finite() && ratio < (n + 4) as f64 {
                    let lo = (ratio.floor() - 2.0).max(0.0) as usize;
                    let hi = (ratio.ceil() + 1.0).max(0.0) as usize;
                    (lo.min(n - 1), hi.min(n - 1))
                } else {
                    (n - 1, n - 1)
                };
                (lo_end, hi_start, (-shape.low * dx).exp(), (-shape.high * dx).exp())
            }
            None => (0, n - 1, 0.0, 0.0),
        };
        let mut mid = Vec::with_capacity(hi_start - lo_end);
        let mut next = if lo_end < hi_start {
            Some(cell_quantities(model, grid, lo_end, activity))
        } else {
            None
        };
        for j in lo_end..hi_start {
            let (dr, e) = next.expect("cell computed");
            let following = cell_quantities(model, grid, j + 1, activity);
            mid.push((-dr).exp() * following.1 / e);
            next = Some(following);
        }
        let (dr_tail, e_tail) = match next {
            Some(q) if hi_start == n - 1 => q,
            _ => cell_quantities(model, grid, n - 1, activity),
        };
        let tail = tail_survival(model, grid, activity, dr_tail, e_tail);
        let w0 = cell_quantities(model, grid, 0, activity).1;
        Transition {
            n,
            lo_end,
            hi_start,
            s_lo,
            s_hi,
            mid,
            tail,
            w0,
        }
    }

    #[inline]
    pub fn survival(&self, j: usize) -> f64 {
        if j < self.lo_end {
            self.s_lo
        } else if j < self.hi_start {
            self.mid[j - self.lo_end]
        } else if j + 1 < self.n {
            self.s_hi
        } else {
            self.tail
        }
    }

    /// Fired mass `sum m_j (1 - S_j)` in units of `dx`, using `prefix[k] = sum_{j<k} v_j`.
    pub fn fired_cells(&self, values: &[f64], prefix: &[f64]) -> f64 {
        let n = self.n;
        let mut total = (1.0 - self.s_lo) * prefix[self.lo_end] + (1.0 - self.s_hi) * (prefix[n - 1] - prefix[self.hi_start]);
        for (k, s) in self.mid.iter().enumerate() {
            total += values[self.lo_end + k] * (1.0 - s);
        }
        total + values[n - 1] * (1.0 - self.tail)
    }

    /// Shifts `values` one cell to the right with survival and writes
    /// `inflow` (a cell value) into cell 0. Returns the fired mass in units of `dx`.
    pub fn advance(&self, values: &mut [f64], inflow: Option<f64>) -> f64 {
        let n = self.n;
        let mut before = Compensated::default();
        values.iter().for_each(|&v| before.add(v));
        let tail = values[n - 1] * self.tail + values[n - 2] * self.survival(n - 2);
        let mut kept = Compensated::default();
        kept.add(tail);
        for j in (1..n - 1).rev() {
            let v = values[j - 1] * self.survival(j - 1);
            values[j] = v;
            kept.add(v);
        }
        values[n - 1] = tail;
        let fired = (before.sum - kept.sum + (before.carry - kept.carry)).max(0.0);
        values[0] = inflow.unwrap_or(fired);
        fired
    }
}

/// Neumaier summation.
#[derive(Default)]
struct Compensated {
    sum: f64,
    carry: f64,
}

impl Compensated {
    #[inline]
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }
}

fn tail_survival(model: &RateModel, grid: &Grid, activity: f64, dr: f64, e: f64) -> f64 {
    let r_tail = model.rate(grid.x_max(), activity);
    if r_tail <= 0.0 {
        return 1.0;
    }
    let beyond = (-dr).exp() / r_tail;
    beyond / (e + beyond)
}

/// Per-cell weights `W_j = e^{-R(x_j)} w_j` whose sum is `int_0^inf e^{-R}`
/// under the constant-rate tail closure.
pub(crate) fn stationary_weights(model: &RateModel, grid: &Grid, activity: f64) -> Vec<f64> {
    let n = grid.n_cells();
    let mut out = Vec::with_capacity(n);
    let mut r_acc = 0.0_f64;
    for j in 0..n {
        let (dr, e) = cell_quantities(model, grid, j, activity);
        let mut w = e;
        if j + 1 == n {
            let r_tail = model.rate(grid.x_max(), activity);
            w += if r_tail > 0.0 { (-dr).exp() / r_tail } else { f64::INFINITY };
        }
        out.push((-r_acc).exp() * w);
        r_acc += dr;
    }
    out
}

pub(crate) fn prefix_sums(values: &[f64]) -> Vec<f64> {
    let mut prefix = Vec::with_capacity(values.len() + 1);
    let mut acc = 0.0;
    prefix.push(0.0);
    for v in values {
        acc += v;
        prefix.push(acc);
    }
    prefix
}

/// Consistent activity `I = F(J) / w_0(J)` produced by the density under a
/// frozen rate argument `J`.
pub(crate) fn explicit_activity_of(model: &RateModel, n: &Density, rate_arg: f64) -> (f64, Transition) {
    let tr = Transition::new(model, n.grid(), rate_arg);
    let prefix = prefix_sums(n.values());
    let fired = tr.fired_cells(n.values(), &prefix) * n.grid().dx();
    (fired / tr.w0, tr)
}

/// Root of `I w_0(I) = F(I)` on `[0, r_max * mass]`, bisected to full precision.
pub(crate) fn implicit_activity_of(model: &RateModel, n: &Density) -> (f64, Transition) {
    let dx = n.grid().dx();
    let prefix = prefix_sums(n.values());
    let mass = prefix[prefix.len() - 1] * dx;
    let residual = |i: f64| {
        let tr = Transition::new(model, n.grid(), i);
        let g = i * tr.w0 - tr.fired_cells(n.values(), &prefix) * dx;
        (g, tr)
    };
    let mut lo = 0.0;
    let mut hi = model.r_max() * mass;
    if hi <= 0.0 {
        return (0.0, Transition::new(model, n.grid(), 0.0));
    }
    let (g_lo, tr_lo) = residual(lo);
    if g_lo >= 0.0 {
        return (lo, tr_lo);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if residual(mid).0 < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let i = 0.5 * (lo + hi);
    (i, Transition::new(model, n.grid(), i))
}

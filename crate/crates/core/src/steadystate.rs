//! Survival exponent, activity map `Phi`, stationary densities and the
//! unique fixed point of `Phi` for inhibitory models.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Density, Grid};
use crate::kinetics::stationary_weights;
use crate::model::{RateKind, RateModel};

/// Largest admissible `Phi^2 * tail bracket width`.
pub const TAIL_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhiValue {
    pub value: f64,
    /// Bound on the error caused by closing the tail beyond `x_max`.
    pub tail_bound: f64,
}

/// `R(x, I)`, computed exactly piece by piece.
pub fn cumulative_rate(model: &RateModel, x: f64, activity: f64) -> f64 {
    model.cumulative(x, activity)
}

/// True when the rate is known to be constant in age beyond `x_max`.
fn tail_is_exact(model: &RateModel, grid: &Grid, activity: f64) -> bool {
    match model.kind() {
        RateKind::Tabulated(table) => grid.x_max() >= *table.ages().last().expect("non-empty axis"),
        _ => model
            .step_shape(activity)
            .map(|s| s.sigma <= grid.x_max() || s.sigma.is_infinite())
            .unwrap_or(false),
    }
}

/// `Phi(I) = (int_0^inf e^{-R(x, I)} dx)^{-1}` with the rate frozen at `r(x_max, I)` beyond the grid.
pub fn phi(model: &RateModel, grid: &Grid, activity: f64) -> Result<PhiValue> {
    let i = model.clamp_activity(activity);
    let x_max = grid.x_max();
    let r_tail = model.rate(x_max, i);
    let inverse = match model.step_shape(i) {
        Some(shape) => {
            let s = shape.sigma.min(x_max);
            let head = if shape.low > 0.0 {
                -(-shape.low * s).exp_m1() / shape.low
            } else {
                s
            };
            if r_tail > 0.0 {
                head + (-shape.low * s - shape.high * (x_max - s).max(0.0)).exp() / r_tail
                    + closed_middle(shape.high, (x_max - s).max(0.0)) * (-shape.low * s).exp()
            } else {
                f64::INFINITY
            }
        }
        None => stationary_weights(model, grid, i).iter().sum(),
    };
    let value = 1.0 / inverse;
    let tail_bound = if tail_is_exact(model, grid, i) {
        0.0
    } else {
        let decay = (-model.cumulative(x_max, i)).exp();
        let width = if model.r0() > 0.0 {
            decay * (1.0 / model.r0() - 1.0 / model.r_max())
        } else {
            f64::INFINITY
        };
        value * value * width
    };
    if !(tail_bound <= TAIL_TOLERANCE) || !(value > 0.0) {
        return Err(Error::TailTooWide {
            width: tail_bound,
            tolerance: TAIL_TOLERANCE,
        });
    }
    Ok(PhiValue { value, tail_bound })
}

/// `int_0^len e^{-high y} dy`.
fn closed_middle(high: f64, len: f64) -> f64 {
    if len <= 0.0 {
        0.0
    } else {
        len * crate::kinetics::phi1(high * len)
    }
}

/// Mass-one density `Phi(I) e^{-R(x, I)}` as cell averages.
pub fn stationary_density(model: &RateModel, grid: &Grid, activity: f64) -> Result<Density> {
    let i = model.clamp_activity(activity);
    let p = phi(model, grid, i)?;
    let dx = grid.dx();
    let weights = stationary_weights(model, grid, i);
    Density::from_values(*grid, weights.into_iter().map(|w| p.value * w / dx).collect())
}

#[derive(Debug, Clone)]
pub struct SteadyState {
    pub i_bar: f64,
    pub density: Density,
    pub residual: f64,
    pub phi: PhiValue,
    model: RateModel,
}

impl SteadyState {
    /// Pointwise stationary profile `I_bar e^{-R(x, I_bar)}`.
    pub fn node_value(&self, x: f64) -> f64 {
        self.i_bar * (-self.model.cumulative(x, self.i_bar)).exp()
    }
}

/// Unique root of `Phi(I) = I`, bisected on `[0, r_max]`.
pub fn fixed_point_phi(model: &RateModel, grid: &Grid) -> Result<SteadyState> {
    if !model.is_inhibitory() {
        return Err(Error::NotInhibitory("fixed_point_phi"));
    }
    let h = |i: f64| phi(model, grid, i).map(|p| p.value - i);
    let (mut lo, mut hi) = (0.0, model.r_max());
    let h_lo = h(lo)?;
    let h_hi = h(hi)?;
    if h_lo < 0.0 || h_hi > 0.0 {
        return Err(Error::Bracket(format!("Phi(0) - 0 = {h_lo}, Phi(rM) - rM = {h_hi}")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if h(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let i_bar = if h(hi)?.abs() < h(lo)?.abs() { hi } else { lo };
    let p = phi(model, grid, i_bar)?;
    Ok(SteadyState {
        i_bar,
        density: stationary_density(model, grid, i_bar)?,
        residual: (p.value - i_bar).abs(),
        phi: p,
        model: model.clone(),
    })
}

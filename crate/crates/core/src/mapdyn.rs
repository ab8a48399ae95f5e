//! Dynamics of the activity map `Phi` and its second iterate.

use log::warn;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::RateModel;
use crate::steadystate::{fixed_point_phi, phi};

fn phi_of(model: &RateModel, grid: &Grid, i: f64) -> Result<f64> {
    Ok(phi(model, grid, i)?.value)
}

/// `I0, Phi(I0), ..., Phi^k(I0)`.
pub fn iterate_phi(model: &RateModel, grid: &Grid, i0: f64, k: usize) -> Result<Vec<f64>> {
    let mut orbit = Vec::with_capacity(k + 1);
    orbit.push(model.clamp_activity(i0));
    for step in 0..k {
        orbit.push(phi_of(model, grid, orbit[step])?);
    }
    Ok(orbit)
}

/// Central difference of `Phi` with step `h`.
pub fn phi_prime_single(model: &RateModel, grid: &Grid, i: f64, h: f64) -> Result<f64> {
    Ok((phi_of(model, grid, i + h)? - phi_of(model, grid, i - h)?) / (2.0 * h))
}

/// Richardson-extrapolated central difference with `h = 1e-5 rM`; one-sided near the ends.
pub fn phi_prime(model: &RateModel, grid: &Grid, i: f64) -> Result<f64> {
    let h = 1e-5 * model.r_max();
    if i - h < 0.0 || i + h > model.r_max() {
        warn!("phi_prime at I = {i}: too close to the boundary, using a one-sided difference");
        let s = if i - h < 0.0 { 1.0 } else { -1.0 };
        let f0 = phi_of(model, grid, i)?;
        let f1 = phi_of(model, grid, i + s * h)?;
        let f2 = phi_of(model, grid, i + 2.0 * s * h)?;
        return Ok(s * (-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * h));
    }
    let coarse = phi_prime_single(model, grid, i, h)?;
    let fine = phi_prime_single(model, grid, i, 0.5 * h)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

/// Lowest fixed point `I_-` of `Phi o Phi` below `i_bar`, paired with `Phi(I_-)`.
/// Returns `None` unless `Phi'(I_bar) < -1`.
pub fn period2_points(model: &RateModel, grid: &Grid, i_bar: f64) -> Result<Option<(f64, f64)>> {
    if !model.is_inhibitory() {
        return Err(Error::NotInhibitory("period2_points"));
    }
    if phi_prime(model, grid, i_bar)? >= -1.0 {
        return Ok(None);
    }
    let h = |i: f64| -> Result<f64> { Ok(phi_of(model, grid, phi_of(model, grid, i)?)? - i) };
    let mut eps = 1e-3 * model.r_max();
    for _ in 0..=10 {
        let top = i_bar - eps;
        if top > 0.0 {
            if let Some((mut lo, mut hi)) = first_sign_change(&h, top, 1000)? {
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
                let i_minus = if h(hi)?.abs() < h(lo)?.abs() { hi } else { lo };
                return Ok(Some((i_minus, phi_of(model, grid, i_minus)?)));
            }
        }
        eps *= 0.5;
    }
    Err(Error::NoPeriodTwoBracket(format!(
        "Phi o Phi - I keeps its sign on [0, I_bar - eps] down to eps = {eps:e}"
    )))
}

fn first_sign_change(h: &dyn Fn(f64) -> Result<f64>, top: f64, points: usize) -> Result<Option<(f64, f64)>> {
    let mut prev_x = 0.0;
    if h(0.0)? <= 0.0 {
        return Ok(Some((0.0, 0.0)));
    }
    for k in 1..=points {
        let x = top * k as f64 / points as f64;
        let v = h(x)?;
        if v <= 0.0 {
            return Ok(Some((prev_x, x)));
        }
        prev_x = x;
    }
    Ok(None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Converging,
    Period2,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapAnalysis {
    pub i_bar: f64,
    pub phi_prime_at_fp: f64,
    pub period2: Option<(f64, f64)>,
    pub classification: Classification,
}

pub fn classify(model: &RateModel, grid: &Grid) -> Result<MapAnalysis> {
    let ss = fixed_point_phi(model, grid)?;
    let slope = phi_prime(model, grid, ss.i_bar)?;
    let period2 = period2_points(model, grid, ss.i_bar)?;
    let classification = if slope < -1.0 && period2.is_some() {
        Classification::Period2
    } else {
        Classification::Converging
    };
    Ok(MapAnalysis {
        i_bar: ss.i_bar,
        phi_prime_at_fp: slope,
        period2,
        classification,
    })
}

/// `(I, Phi(I), Phi(Phi(I)))` on `points` equally spaced activities in `[0, rM]`.
pub fn sample_map(model: &RateModel, grid: &Grid, points: usize) -> Result<Vec<(f64, f64, f64)>> {
    let points = points.max(2);
    (0..points)
        .map(|k| {
            let i = model.r_max() * k as f64 / (points - 1) as f64;
            let p = phi_of(model, grid, i)?;
            Ok((i, p, phi_of(model, grid, p)?))
        })
        .collect()
}

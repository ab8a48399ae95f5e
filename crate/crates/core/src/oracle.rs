//! Mean-field particle simulation of the age-dependent hazard process.
//!
//! Each particle carries its age. Over a step the activity argument is frozen
//! and every particle follows the exact hazard clock: a unit exponential
//! budget is spent against `R(age + s) - R(age)`, and a particle that fires
//! restarts at age zero for the rest of the step (and may fire again).
//! Random numbers come from per-(seed, step, chunk) ChaCha streams, so results
//! do not depend on the number of worker threads.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::delay::ActivityHistory;
use crate::error::{Error, Result};
use crate::grid::{Density, Grid};
use crate::model::{RateModel, StepShape};

const CHUNK: usize = 4096;

/// Particle ages kept in ascending order.
#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    ages: Vec<f64>,
    seed: u64,
    steps_taken: u64,
}

impl ParticleEnsemble {
    pub fn new(mut ages: Vec<f64>, seed: u64) -> Result<Self> {
        if ages.is_empty() {
            return Err(Error::param("particles", "need at least one particle"));
        }
        if ages.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(Error::param("particles", "ages must be finite and non-negative"));
        }
        ages.sort_by(f64::total_cmp);
        Ok(ParticleEnsemble {
            ages,
            seed,
            steps_taken: 0,
        })
    }

    /// Draws `count` ages from the cell masses of `density`, uniformly inside each cell.
    pub fn sample(density: &Density, count: usize, seed: u64) -> Result<Self> {
        if count == 0 {
            return Err(Error::param("particles", "need at least one particle"));
        }
        let grid = density.grid();
        let mut cdf = Vec::with_capacity(grid.n_cells());
        let mut acc = 0.0;
        for v in density.values() {
            acc += v;
            cdf.push(acc);
        }
        if !(acc > 0.0) {
            return Err(Error::param("density", "cannot sample from zero mass"));
        }
        let mut rng = stream(seed, u64::MAX, 0);
        let ages = (0..count)
            .map(|_| {
                let u = rng.gen::<f64>() * acc;
                let j = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
                grid.edge(j) + rng.gen::<f64>() * grid.dx()
            })
            .collect();
        ParticleEnsemble::new(ages, seed)
    }

    pub fn len(&self) -> usize {
        self.ages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ages.is_empty()
    }

    pub fn ages(&self) -> &[f64] {
        &self.ages
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Empirical age density on `grid`; ages beyond `x_max` land in the last cell.
    pub fn histogram(&self, grid: &Grid) -> Density {
        let mut counts = vec![0.0; grid.n_cells()];
        self.accumulate(grid, &mut counts, 1.0);
        Density::from_values(*grid, counts).expect("non-negative counts")
    }

    fn accumulate(&self, grid: &Grid, counts: &mut [f64], weight: f64) {
        let scale = weight / (self.ages.len() as f64 * grid.dx());
        let last = grid.n_cells() - 1;
        for &a in &self.ages {
            let j = ((a / grid.dx()) as usize).min(last);
            counts[j] += scale;
        }
    }

    /// `(1/N) sum r(age_i, I)`.
    pub fn mean_rate(&self, model: &RateModel, activity: f64) -> f64 {
        match model.step_shape(activity) {
            Some(shape) => {
                let below = self.ages.partition_point(|&a| a < shape.sigma) as f64;
                let n = self.ages.len() as f64;
                (shape.low * below + shape.high * (n - below)) / n
            }
            None => self.ages.iter().map(|&a| model.rate(a, activity)).sum::<f64>() / self.ages.len() as f64,
        }
    }
}

fn stream(seed: u64, step: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step);
    rng.set_word_pos((chunk as u128) << 40);
    rng
}

enum Hazard<'a> {
    Shape(StepShape),
    Generic(&'a RateModel, f64),
}

impl Hazard<'_> {
    fn new(model: &RateModel, activity: f64) -> Hazard<'_> {
        match model.step_shape(activity) {
            Some(shape) => Hazard::Shape(shape),
            None => Hazard::Generic(model, activity),
        }
    }

    /// `R(a + len) - R(a)`.
    fn integral(&self, a: f64, len: f64) -> f64 {
        match self {
            Hazard::Shape(s) => s.cumulative(a + len) - s.cumulative(a),
            Hazard::Generic(m, i) => len * m.rate(a + 0.5 * len, *i),
        }
    }

    /// Time `s` with `R(a + s) - R(a) = budget`.
    fn time_to(&self, a: f64, len: f64, budget: f64) -> f64 {
        match self {
            Hazard::Shape(s) => {
                if a >= s.sigma {
                    return budget / s.high;
                }
                let cap = s.low * (s.sigma - a);
                if budget < cap {
                    budget / s.low
                } else {
                    (s.sigma - a) + (budget - cap) / s.high
                }
            }
            Hazard::Generic(m, i) => {
                let r = m.rate(a + 0.5 * len, *i);
                if r > 0.0 {
                    budget / r
                } else {
                    f64::INFINITY
                }
            }
        }
    }
}

/// Advances one step with the rate frozen at `i_rate_arg`; returns fired count / (N dt).
pub fn mc_step(model: &RateModel, ensemble: &mut ParticleEnsemble, i_rate_arg: f64, dt: f64) -> f64 {
    let hazard = Hazard::new(model, model.clamp_activity(i_rate_arg));
    let step = ensemble.steps_taken;
    let seed = ensemble.seed;
    let results: Vec<(Vec<f64>, Vec<f64>, u64)> = ensemble
        .ages
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut rng = stream(seed, step, c as u64);
            let mut survivors = Vec::with_capacity(chunk.len());
            let mut reborn = Vec::new();
            let mut fired = 0u64;
            for &a in chunk {
                let u: f64 = rng.gen();
                let p = -(-hazard.integral(a, dt)).exp_m1();
                if u >= p {
                    survivors.push(a + dt);
                    continue;
                }
                // fires at least once inside the step
                let mut budget = -(-u).ln_1p();
                let mut age = a;
                let mut remaining = dt;
                let mut count = 0;
                loop {
                    let s = hazard.time_to(age, remaining, budget);
                    if s >= remaining {
                        break;
                    }
                    count += 1;
                    remaining -= s;
                    age = 0.0;
                    budget = -(1.0 - rng.gen::<f64>()).ln();
                }
                fired += count;
                if count == 0 {
                    survivors.push(a + dt);
                } else {
                    reborn.push(remaining);
                }
            }
            (survivors, reborn, fired)
        })
        .collect();
    let n = ensemble.ages.len();
    let mut reborn: Vec<f64> = results.iter().flat_map(|r| r.1.iter().copied()).collect();
    reborn.sort_by(f64::total_cmp);
    let fired: u64 = results.iter().map(|r| r.2).sum();
    let mut ages = reborn;
    ages.reserve(n);
    for (survivors, _, _) in &results {
        ages.extend_from_slice(survivors);
    }
    ensemble.ages = ages;
    ensemble.steps_taken += 1;
    fired as f64 / (n as f64 * dt)
}

/// Root of `I = (1/N) sum r(age_i, I)` for an inhibitory model.
pub fn empirical_activity(model: &RateModel, ensemble: &ParticleEnsemble) -> Result<f64> {
    if !model.is_inhibitory() {
        return Err(Error::NotInhibitory("empirical implicit activity"));
    }
    let (mut lo, mut hi) = (0.0, model.r_max());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if mid - ensemble.mean_rate(model, mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum McMode {
    Autonomous,
    Delayed { delay: f64, i_ini: f64 },
}

#[derive(Debug, Clone)]
pub struct McOptions {
    pub particles: usize,
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
    pub mode: McMode,
    /// Time-averaged histograms start here.
    pub burn_in: f64,
    /// Record every `stride`-th step.
    pub stride: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McRecord {
    pub t: f64,
    /// Closure activity `(1/N) sum r(age_i, J)`.
    #[serde(rename = "I")]
    pub activity: f64,
    pub fired_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct McRun {
    pub trace: Vec<McRecord>,
    pub histogram: Density,
    /// Histogram averaged over every step after `burn_in`.
    pub mean_histogram: Density,
    pub ensemble: ParticleEnsemble,
}

impl McRun {
    /// Batch-means estimate of the mean closure activity after `burn_in`.
    pub fn activity_stats(&self, burn_in: f64, batches: usize) -> Result<(f64, f64)> {
        let values: Vec<f64> = self.trace.iter().filter(|r| r.t >= burn_in).map(|r| r.activity).collect();
        batch_means(&values, batches)
    }
}

/// `(mean, standard error)` from `batches` contiguous batch means.
pub fn batch_means(values: &[f64], batches: usize) -> Result<(f64, f64)> {
    if batches < 2 || values.len() < 2 * batches {
        return Err(Error::TooFewSamples {
            needed: 2 * batches.max(2),
            got: values.len(),
        });
    }
    let size = values.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| values[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let mean = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
    Ok((mean, (var / batches as f64).sqrt()))
}

/// Simulates `options.particles` particles started from `initial`, recording on `grid`.
pub fn mc_run(model: &RateModel, initial: &Density, grid: &Grid, options: &McOptions) -> Result<McRun> {
    if !(options.dt > 0.0 && options.dt.is_finite()) {
        return Err(Error::param("dt", "must be positive and finite"));
    }
    if model.r_max() * options.dt > 0.2 {
        warn!("rM * dt = {} exceeds 0.2", model.r_max() * options.dt);
    }
    if matches!(options.mode, McMode::Autonomous) && !model.is_inhibitory() {
        return Err(Error::NotInhibitory("autonomous particle run"));
    }
    let mut ensemble = ParticleEnsemble::sample(initial, options.particles, options.seed)?;
    let steps = (options.t_end / options.dt).round() as usize;
    let mut history = match options.mode {
        McMode::Delayed { delay, i_ini } => Some(ActivityHistory::new(delay, options.dt, model.clamp_activity(i_ini))?),
        McMode::Autonomous => None,
    };
    let stride = options.stride.max(1);
    let mut trace = Vec::with_capacity(steps / stride + 1);
    let mut mean_counts = vec![0.0; grid.n_cells()];
    let mut averaged = 0usize;
    for k in 0..steps {
        let t = k as f64 * options.dt;
        let (activity, rate_arg) = match history.as_ref() {
            Some(h) => {
                let j = h.lookup();
                (ensemble.mean_rate(model, j), j)
            }
            None => {
                let i = empirical_activity(model, &ensemble)?;
                (i, i)
            }
        };
        if t >= options.burn_in {
            ensemble.accumulate(grid, &mut mean_counts, 1.0);
            averaged += 1;
        }
        let fired_fraction = mc_step(model, &mut ensemble, rate_arg, options.dt);
        if let Some(h) = history.as_mut() {
            h.push(activity);
        }
        if k % stride == 0 {
            trace.push(McRecord {
                t,
                activity,
                fired_fraction,
            });
        }
    }
    if averaged > 0 {
        mean_counts.iter_mut().for_each(|c| *c /= averaged as f64);
    }
    Ok(McRun {
        trace,
        histogram: ensemble.histogram(grid),
        mean_histogram: Density::from_values(*grid, mean_counts)?,
        ensemble,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Threshold;

    #[test]
    fn zero_rate_only_ages() {
        let m = RateModel::step(0.0, Threshold::Constant(1e9)).unwrap();
        let mut e = ParticleEnsemble::new(vec![0.0, 0.5, 2.0], 1).unwrap();
        let f = mc_step(&m, &mut e, 0.0, 0.1);
        assert_eq!(f, 0.0);
        assert_eq!(e.ages(), &[0.1, 0.6, 2.1]);
    }

    #[test]
    fn constant_rate_firing_statistics() {
        let m = RateModel::constant(1.0).unwrap();
        let g = Grid::with_x_max(0.1, 30.0).unwrap();
        let init = Density::from_fn(g, |x| (-x).exp()).unwrap();
        let mut e = ParticleEnsemble::sample(&init, 20_000, 3).unwrap();
        let steps = 200;
        let mean: f64 = (0..steps).map(|_| mc_step(&m, &mut e, 0.0, 0.05)).sum::<f64>() / steps as f64;
        let band = 4.0 / ((20_000 * steps) as f64 * 0.05).sqrt();
        assert!((mean - 1.0).abs() < band, "{mean} vs band {band}");
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let m = RateModel::step(0.5, Threshold::Affine { offset: 1.0, slope: 0.5 }).unwrap();
        let g = Grid::with_x_max(0.1, 30.0).unwrap();
        let init = Density::from_fn(g, |x| (-x).exp()).unwrap();
        let opts = McOptions {
            particles: 10_000,
            dt: 0.05,
            t_end: 2.0,
            seed: 11,
            mode: McMode::Autonomous,
            burn_in: 0.0,
            stride: 1,
        };
        let a = mc_run(&m, &init, &g, &opts).unwrap();
        let b = mc_run(&m, &init, &g, &opts).unwrap();
        assert_eq!(a.ensemble.ages(), b.ensemble.ages());
        assert_eq!(a.trace, b.trace);
        assert!(a.ensemble.ages().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn batch_means_of_constant() {
        let (m, se) = batch_means(&[2.0; 100], 10).unwrap();
        assert_eq!(m, 2.0);
        assert_eq!(se, 0.0);
        assert!(batch_means(&[1.0; 5], 10).is_err());
    }
}

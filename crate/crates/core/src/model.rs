//! Discharge-rate families `r(x, I)`.
//!
//! A [`RateModel`] bundles one of four families with its structural bounds
//! `r0 <= r <= r_max`, a Lipschitz bound `gamma_bar` on the activity
//! dependence, and the inhibitory / strictly-excitable flags the solvers
//! rely on. The activity argument is always clamped into `[0, r_max]`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Closed-form activity map of the step family for a fixed threshold `sigma`:
/// `((1 - e^{-r0 sigma}) / r0 + e^{-r0 sigma} / (1 + r0))^{-1}`.
pub fn phi_step(sigma: f64, r0: f64) -> f64 {
    if sigma <= 0.0 {
        return r0 + 1.0;
    }
    if sigma.is_infinite() {
        return r0;
    }
    let decay = (-r0 * sigma).exp();
    let lower = if r0 > 0.0 {
        -(-r0 * sigma).exp_m1() / r0
    } else {
        sigma
    };
    1.0 / (lower + decay / (1.0 + r0))
}

/// Inverts [`phi_step`]: the threshold age whose step rate produces the
/// stationary activity `phi_value`.
pub fn sigma_from_phi(phi_value: f64, r0: f64) -> Result<f64> {
    if !(r0 > 0.0 && r0.is_finite()) {
        return Err(Error::param("r0", "must be positive and finite"));
    }
    let upper = r0 + 1.0;
    if !phi_value.is_finite() || phi_value <= r0 || phi_value > upper * (1.0 + 1e-15) {
        return Err(Error::OutOfRange {
            value: phi_value,
            range: format!("({r0}, {upper}]"),
        });
    }
    // u = r0 (1 + r0) (1/r0 - 1/phi)
    let u = (1.0 + r0) * (phi_value - r0) / phi_value;
    if u >= 1.0 {
        return Ok(0.0);
    }
    Ok(-u.ln() / r0)
}

/// Threshold age `sigma(I)` of the step family.
#[derive(Debug, Clone, PartialEq)]
pub enum Threshold {
    Constant(f64),
    Affine { offset: f64, slope: f64 },
    /// Piecewise-linear through `(activity[k], sigma[k])`, flat outside.
    Table { activity: Vec<f64>, sigma: Vec<f64> },
}

impl Threshold {
    pub fn eval(&self, activity: f64) -> f64 {
        match self {
            Threshold::Constant(s) => *s,
            Threshold::Affine { offset, slope } => offset + slope * activity,
            Threshold::Table { activity: a, sigma } => interp1(a, sigma, activity),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Threshold::Constant(s) if !s.is_finite() => Err(Error::param("sigma", "non-finite")),
            Threshold::Affine { offset, slope } if !(offset.is_finite() && slope.is_finite()) => {
                Err(Error::param("sigma", "non-finite affine coefficients"))
            }
            Threshold::Table { activity, sigma } => {
                if activity.len() != sigma.len() || activity.len() < 2 {
                    return Err(Error::param("sigma", "table needs >= 2 matching knots"));
                }
                if activity.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::param("sigma", "activity knots must increase"));
                }
                if activity.iter().chain(sigma).any(|v| !v.is_finite()) {
                    return Err(Error::param("sigma", "non-finite table entry"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn lipschitz(&self) -> f64 {
        match self {
            Threshold::Constant(_) => 0.0,
            Threshold::Affine { slope, .. } => slope.abs(),
            Threshold::Table { activity, sigma } => activity
                .windows(2)
                .zip(sigma.windows(2))
                .map(|(a, s)| ((s[1] - s[0]) / (a[1] - a[0])).abs())
                .fold(0.0, f64::max),
        }
    }

    fn is_non_decreasing(&self) -> bool {
        match self {
            Threshold::Constant(_) => true,
            Threshold::Affine { slope, .. } => *slope >= 0.0,
            Threshold::Table { sigma, .. } => sigma.windows(2).all(|w| w[1] >= w[0]),
        }
    }
}

fn interp1(knots: &[f64], values: &[f64], at: f64) -> f64 {
    if at <= knots[0] {
        return values[0];
    }
    let last = knots.len() - 1;
    if at >= knots[last] {
        return values[last];
    }
    let k = knots.partition_point(|&v| v <= at) - 1;
    let w = (at - knots[k]) / (knots[k + 1] - knots[k]);
    values[k] + w * (values[k + 1] - values[k])
}

/// Rate values on a tensor grid of ages and activities, bilinearly
/// interpolated and held constant outside the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    ages: Vec<f64>,
    activities: Vec<f64>,
    /// Row-major: `values[a * activities.len() + i]`.
    values: Vec<f64>,
}

impl RateTable {
    pub fn new(ages: Vec<f64>, activities: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if ages.len() < 2 || activities.len() < 2 {
            return Err(Error::param("table", "need at least 2 ages and 2 activities"));
        }
        if ages.windows(2).any(|w| w[1] <= w[0]) || activities.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param("table", "grid axes must be strictly increasing"));
        }
        if ages[0] < 0.0 {
            return Err(Error::param("table", "ages must be non-negative"));
        }
        if values.len() != ages.len() * activities.len() {
            return Err(Error::param("table", "value matrix has the wrong size"));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::param("table", "rates must be finite and non-negative"));
        }
        Ok(RateTable {
            ages,
            activities,
            values,
        })
    }

    /// Samples `f(x, I)` on the given axes.
    pub fn from_fn(ages: Vec<f64>, activities: Vec<f64>, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(ages.len() * activities.len());
        for &x in &ages {
            for &i in &activities {
                values.push(f(x, i));
            }
        }
        RateTable::new(ages, activities, values)
    }

    /// Reads the CSV layout `x\I, I_0, I_1, ...` followed by one row per age.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
        let header = reader.headers()?.clone();
        let activities = header
            .iter()
            .skip(1)
            .map(|s| parse_f64(s.trim(), "table header"))
            .collect::<Result<Vec<_>>>()?;
        let mut ages = Vec::new();
        let mut values = Vec::new();
        for record in reader.records() {
            let record = record?;
            let mut fields = record.iter();
            let age = fields
                .next()
                .ok_or_else(|| Error::param("table", "empty row"))?;
            ages.push(parse_f64(age.trim(), "table age")?);
            let row = fields
                .map(|s| parse_f64(s.trim(), "table value"))
                .collect::<Result<Vec<_>>>()?;
            if row.len() != activities.len() {
                return Err(Error::param("table", "ragged row"));
            }
            values.extend(row);
        }
        RateTable::new(ages, activities, values)
    }

    pub fn ages(&self) -> &[f64] {
        &self.ages
    }

    pub fn activities(&self) -> &[f64] {
        &self.activities
    }

    fn at(&self, a: usize, i: usize) -> f64 {
        self.values[a * self.activities.len() + i]
    }

    fn locate(axis: &[f64], v: f64) -> (usize, f64) {
        let last = axis.len() - 1;
        if v <= axis[0] {
            return (0, 0.0);
        }
        if v >= axis[last] {
            return (last - 1, 1.0);
        }
        let k = axis.partition_point(|&a| a <= v) - 1;
        (k, (v - axis[k]) / (axis[k + 1] - axis[k]))
    }

    fn eval(&self, x: f64, activity: f64) -> f64 {
        let (a, wa) = Self::locate(&self.ages, x);
        let (i, wi) = Self::locate(&self.activities, activity);
        let lo = self.at(a, i) * (1.0 - wi) + self.at(a, i + 1) * wi;
        let hi = self.at(a + 1, i) * (1.0 - wi) + self.at(a + 1, i + 1) * wi;
        lo * (1.0 - wa) + hi * wa
    }

    fn d_activity(&self, x: f64, activity: f64) -> f64 {
        let last = self.activities.len() - 1;
        if activity < self.activities[0] || activity > self.activities[last] {
            return 0.0;
        }
        let (a, wa) = Self::locate(&self.ages, x);
        let (i, _) = Self::locate(&self.activities, activity);
        let span = self.activities[i + 1] - self.activities[i];
        let lo = (self.at(a, i + 1) - self.at(a, i)) / span;
        let hi = (self.at(a + 1, i + 1) - self.at(a + 1, i)) / span;
        lo * (1.0 - wa) + hi * wa
    }

    fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    fn max_abs_d_activity(&self) -> f64 {
        let mut best: f64 = 0.0;
        for a in 0..self.ages.len() {
            for i in 0..self.activities.len() - 1 {
                let d = (self.at(a, i + 1) - self.at(a, i)) / (self.activities[i + 1] - self.activities[i]);
                best = best.max(d.abs());
            }
        }
        best
    }

    fn non_increasing_in_activity(&self) -> bool {
        (0..self.ages.len())
            .all(|a| (0..self.activities.len() - 1).all(|i| self.at(a, i + 1) <= self.at(a, i)))
    }
}

fn parse_f64(s: &str, what: &'static str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::param(what, format!("cannot parse `{s}` as a number")))
}

#[derive(Debug, Clone, PartialEq)]
pub enum RateKind {
    Constant { level: f64 },
    Step { sigma: Threshold },
    /// Step family whose threshold is reconstructed from the prescribed map
    /// `Phi(I) = |1-r0|/2 tanh(2 gamma/|1-r0| (Ibar - I)) + Ibar`, `Ibar = (1+r0)/2`.
    TanhPhi { gamma: f64 },
    Tabulated(RateTable),
}

impl RateKind {
    pub fn name(&self) -> &'static str {
        match self {
            RateKind::Constant { .. } => "constant",
            RateKind::Step { .. } => "step",
            RateKind::TanhPhi { .. } => "tanh_phi",
            RateKind::Tabulated(_) => "tabulated",
        }
    }
}

/// Rate that is `low` below the threshold age `sigma` and `high` from it on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepShape {
    pub low: f64,
    pub high: f64,
    pub sigma: f64,
}

impl StepShape {
    pub fn rate(&self, x: f64) -> f64 {
        if x >= self.sigma {
            self.high
        } else {
            self.low
        }
    }

    pub fn cumulative(&self, x: f64) -> f64 {
        self.low * x + (self.high - self.low) * (x - self.sigma).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateModel {
    kind: RateKind,
    r0: f64,
    r_max: f64,
    gamma_bar: f64,
    inhibitory: bool,
    /// Age at which `I -> r(x, I)` is asserted strictly decreasing.
    strict_point: Option<f64>,
}

impl RateModel {
    pub fn constant(level: f64) -> Result<Self> {
        if !(level > 0.0 && level.is_finite()) {
            return Err(Error::param("level", "must be positive and finite"));
        }
        Ok(RateModel {
            kind: RateKind::Constant { level },
            r0: level,
            r_max: level,
            gamma_bar: 0.0,
            inhibitory: true,
            strict_point: None,
        })
    }

    /// `r(x, I) = r0 + 1{x >= sigma(I)}`.
    pub fn step(r0: f64, sigma: Threshold) -> Result<Self> {
        if !(r0 >= 0.0 && r0.is_finite()) {
            return Err(Error::param("r0", "must be non-negative and finite"));
        }
        sigma.validate()?;
        let gamma_bar = sigma.lipschitz();
        let inhibitory = sigma.is_non_decreasing();
        Ok(RateModel {
            kind: RateKind::Step { sigma },
            r0,
            r_max: r0 + 1.0,
            gamma_bar,
            inhibitory,
            strict_point: None,
        })
    }

    pub fn tanh_phi(r0: f64, gamma: f64) -> Result<Self> {
        if !(r0 > 0.0 && r0 < 1.0) {
            return Err(Error::param("r0", "tanh family needs 0 < r0 < 1"));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::param("gamma", "must be positive and finite"));
        }
        Ok(RateModel {
            kind: RateKind::TanhPhi { gamma },
            r0,
            r_max: r0 + 1.0,
            gamma_bar: gamma,
            inhibitory: true,
            strict_point: None,
        })
    }

    /// Bounds, Lipschitz constant and inhibitory flag are read off the table.
    pub fn tabulated(table: RateTable) -> Result<Self> {
        let r_max = table.max_value();
        if r_max <= 0.0 {
            return Err(Error::param("table", "rate vanishes identically"));
        }
        Ok(RateModel {
            r0: table.min_value(),
            r_max,
            gamma_bar: table.max_abs_d_activity(),
            inhibitory: table.non_increasing_in_activity(),
            kind: RateKind::Tabulated(table),
            strict_point: None,
        })
    }

    /// Overrides the stored bound on `|d r / d I|`.
    pub fn with_gamma_bar(mut self, gamma_bar: f64) -> Result<Self> {
        if !(gamma_bar >= 0.0 && gamma_bar.is_finite()) {
            return Err(Error::param("gamma_bar", "must be non-negative and finite"));
        }
        self.gamma_bar = gamma_bar;
        Ok(self)
    }

    /// Records the user's assertion that `I -> r(x_star, I)` is strictly decreasing.
    pub fn with_strict_point(mut self, x_star: f64) -> Self {
        self.strict_point = Some(x_star);
        self
    }

    pub fn kind(&self) -> &RateKind {
        &self.kind
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn gamma_bar(&self) -> f64 {
        self.gamma_bar
    }

    pub fn is_inhibitory(&self) -> bool {
        self.inhibitory
    }

    pub fn is_strictly_excitable(&self) -> bool {
        self.r0 > 0.0
    }

    pub fn strict_point(&self) -> Option<f64> {
        self.strict_point
    }

    pub fn clamp_activity(&self, activity: f64) -> f64 {
        if activity.is_nan() {
            return 0.0;
        }
        activity.clamp(0.0, self.r_max)
    }

    /// The prescribed activity map of the tanh family.
    pub fn prescribed_phi(&self, activity: f64) -> Option<f64> {
        match self.kind {
            RateKind::TanhPhi { gamma } => {
                let i = self.clamp_activity(activity);
                let half_width = (1.0 - self.r0).abs() / 2.0;
                let i_bar = (1.0 + self.r0) / 2.0;
                Some(half_width * (gamma / half_width * (i_bar - i)).tanh() + i_bar)
            }
            _ => None,
        }
    }

    /// Threshold age of the step-like families.
    pub fn threshold(&self, activity: f64) -> Option<f64> {
        let i = self.clamp_activity(activity);
        match &self.kind {
            RateKind::Step { sigma } => Some(sigma.eval(i)),
            RateKind::TanhPhi { .. } => {
                let phi = self.prescribed_phi(i).expect("tanh family");
                // saturated tanh: the rate never reaches the upper level
                Some(sigma_from_phi(phi, self.r0).unwrap_or(f64::INFINITY))
            }
            _ => None,
        }
    }

    /// Piecewise-constant-in-age description, when the family has one.
    pub fn step_shape(&self, activity: f64) -> Option<StepShape> {
        match &self.kind {
            RateKind::Constant { level } => Some(StepShape {
                low: *level,
                high: *level,
                sigma: f64::INFINITY,
            }),
            RateKind::Step { .. } | RateKind::TanhPhi { .. } => Some(StepShape {
                low: self.r0,
                high: self.r0 + 1.0,
                sigma: self.threshold(activity)?,
            }),
            RateKind::Tabulated(_) => None,
        }
    }

    pub fn rate(&self, x: f64, activity: f64) -> f64 {
        let x = x.max(0.0);
        match &self.kind {
            RateKind::Tabulated(table) => table.eval(x, self.clamp_activity(activity)),
            _ => self.step_shape(activity).expect("step-like").rate(x),
        }
    }

    pub fn d_rate_d_activity(&self, x: f64, activity: f64) -> Result<f64> {
        match &self.kind {
            RateKind::Constant { .. } => Ok(0.0),
            RateKind::Tabulated(table) => {
                if activity < 0.0 || activity > self.r_max {
                    return Ok(0.0);
                }
                Ok(table.d_activity(x.max(0.0), activity))
            }
            kind => Err(Error::NonDifferentiable(kind.name())),
        }
    }

    /// Calls `f(lo, hi)` for consecutive sub-intervals of `[a, b]` on which
    /// the rate is smooth in age.
    pub(crate) fn for_each_piece(&self, a: f64, b: f64, activity: f64, mut f: impl FnMut(f64, f64)) {
        match &self.kind {
            RateKind::Tabulated(table) => {
                let ages = table.ages();
                let mut lo = a;
                let start = ages.partition_point(|&v| v <= a);
                for &knot in ages[start..].iter().take_while(|&&v| v < b) {
                    f(lo, knot);
                    lo = knot;
                }
                f(lo, b);
            }
            _ => {
                let sigma = self.threshold(activity).unwrap_or(f64::INFINITY);
                if sigma > a && sigma < b {
                    f(a, sigma);
                    f(sigma, b);
                } else {
                    f(a, b);
                }
            }
        }
    }

    /// `int_a^b r(y, I) dy`, exact for all four families (midpoint rule on
    /// pieces where the rate is affine in age).
    pub fn segment_integral(&self, a: f64, b: f64, activity: f64) -> f64 {
        if let Some(shape) = self.step_shape(activity) {
            return shape.cumulative(b) - shape.cumulative(a);
        }
        let mut total = 0.0;
        self.for_each_piece(a, b, activity, |lo, hi| {
            total += (hi - lo) * self.rate(0.5 * (lo + hi), activity);
        });
        total
    }

    /// Survival exponent `R(x, I) = int_0^x r(y, I) dy`.
    pub fn cumulative(&self, x: f64, activity: f64) -> f64 {
        self.segment_integral(0.0, x.max(0.0), activity)
    }

    /// Checks the structural bounds and flags on random `(x, I)` samples.
    pub fn check_by_sampling(&self, samples: usize, x_max: f64, seed: u64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = 1e-6 * self.r_max;
        for _ in 0..samples {
            let x = rng.gen::<f64>() * x_max;
            let i = rng.gen::<f64>() * self.r_max;
            let r = self.rate(x, i);
            if !(0.0..=self.r_max * (1.0 + 1e-12)).contains(&r) {
                return Err(Error::OutOfRange {
                    value: r,
                    range: format!("[0, {}] at x={x}, I={i}", self.r_max),
                });
            }
            if r < self.r0 * (1.0 - 1e-12) {
                return Err(Error::OutOfRange {
                    value: r,
                    range: format!("[{}, {}] at x={x}, I={i}", self.r0, self.r_max),
                });
            }
            if let Ok(d) = self.d_rate_d_activity(x, i) {
                if d.abs() > self.gamma_bar * (1.0 + 1e-9) + 1e-12 {
                    return Err(Error::param(
                        "gamma_bar",
                        format!("|dr/dI| = {} exceeds {} at x={x}, I={i}", d.abs(), self.gamma_bar),
                    ));
                }
            }
            if self.inhibitory && i + h <= self.r_max && self.rate(x, i + h) > r + 1e-12 {
                return Err(Error::param("inhibitory", format!("rate increases in I at x={x}, I={i}")));
            }
        }
        Ok(())
    }
}

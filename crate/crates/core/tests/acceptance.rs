//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Numeric arguments select criteria.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use temlab::delay::{cesaro_error, iterate_error_bound, limit_profile, run_delayed, weak_nl_check, DelayOptions};
use temlab::diagnostics::{contraction_test, decay_rate};
use temlab::extensions::{
    nonexpansion_defect_distributed, nonexpansion_defect_system, step_distributed, BirthKernel, Population, SystemState,
};
use temlab::mapdyn::{period2_points, phi_prime};
use temlab::model::RateTable;
use temlab::oracle::{mc_run, McMode, McOptions};
use temlab::solver::{run_autonomous, run_linear, Autonomous, RunOptions};
use temlab::steadystate::{fixed_point_phi, phi};
use temlab::{Density, Grid, RateModel, Result, Threshold};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn step_model() -> RateModel {
    RateModel::step(0.5, Threshold::Affine { offset: 1.0, slope: 1.0 }).unwrap()
}

/// `0.5 + (1 - kappa I) (1 - e^{-(x - 1)})_+` on a table: r0 = 0.5, rM = 1.5, gamma_bar = kappa.
fn ramp_model(kappa: f64) -> RateModel {
    let ages: Vec<f64> = (0..=300).map(|k| k as f64 * 0.1).collect();
    let acts: Vec<f64> = (0..=15).map(|k| k as f64 * 0.1).collect();
    let table = RateTable::from_fn(ages, acts, |x, i| {
        0.5 + (1.0 - kappa * i) * if x > 1.0 { -(1.0 - x).exp_m1() } else { 0.0 }
    })
    .unwrap();
    RateModel::tabulated(table).unwrap()
}

/// Mixture of gamma bumps, optionally with a jump, normalized on `grid`.
fn random_density(grid: Grid, rng: &mut ChaCha8Rng) -> Density {
    let k = rng.gen_range(1..=3);
    let bumps: Vec<(f64, f64, f64)> = (0..k)
        .map(|_| (rng.gen_range(0.5..4.0), rng.gen_range(0.5..3.0), rng.gen_range(0.2..1.0)))
        .collect();
    let jump = rng.gen::<bool>().then(|| rng.gen_range(0.5..6.0));
    Density::from_fn(grid, move |x| {
        let s: f64 = bumps.iter().map(|&(a, b, w)| w * (b * x).powf(a - 1.0) * (-b * x).exp()).sum();
        match jump {
            Some(j) if x < j => s + 0.3,
            _ => s,
        }
    })
    .unwrap()
}

fn steady_closed_forms() -> Result<Outcome> {
    let dx = 1e-3;
    let m = RateModel::constant(1.0)?;
    let g = Grid::with_x_max(dx, 40.0)?;
    let ss = fixed_point_phi(&m, &g)?;
    // cell averages of e^{-x}
    let node_err = ss
        .density
        .values()
        .iter()
        .enumerate()
        .take(g.n_cells() - 1)
        .map(|(j, v)| (v - ((-g.edge(j)).exp() - (-g.edge(j + 1)).exp()) / dx).abs())
        .fold(0.0, f64::max);
    let point_err = (0..g.n_cells())
        .map(|j| (ss.node_value(g.edge(j)) - (-g.edge(j)).exp()).abs())
        .fold(0.0, f64::max);
    let ibar_err = (ss.i_bar - 1.0).abs();

    let r0 = 0.5;
    let step = RateModel::step(r0, Threshold::Constant(1.0))?;
    let gs = Grid::auto(&step, dx)?;
    let sigma = 1.0;
    let exact = 1.0 / ((1.0 - (-r0 * sigma).exp()) / r0 + (-r0 * sigma).exp() / (1.0 + r0));
    let phi_err = [0.0, 0.3, 0.9, 1.5]
        .iter()
        .map(|&i| phi(&step, &gs, i).map(|p| (p.value - exact).abs()))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let mass_err = (fixed_point_phi(&step, &gs)?.density.mass() - 1.0).abs();
    let pass = ibar_err <= 1e-8 && node_err <= 1e-8 && point_err <= 1e-8 && phi_err <= 1e-8 && mass_err <= 1e-8;
    outcome(
        pass,
        format!(
            "|I-1| = {ibar_err:.1e}, cell err = {node_err:.1e}, node err = {point_err:.1e}, step Phi err = {phi_err:.1e} (tol 1e-8)"
        ),
    )
}

fn contraction() -> Result<Outcome> {
    let m = step_model();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let seeds: Vec<u64> = (0..20).map(|_| rng.gen()).collect();
    let run = |seed: u64, dx: f64| -> Result<(usize, f64, f64)> {
        let g = Grid::with_x_max(dx, 30.0)?;
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let a = random_density(g, &mut r);
        let b = random_density(g, &mut r);
        let rep = contraction_test(&m, a, b, 10.0)?;
        Ok((rep.violations, rep.max_violation, rep.max_abs_defect()))
    };
    let dx = 0.01;
    let coarse: Vec<(usize, f64, f64)> = seeds.par_iter().map(|&s| run(s, dx)).collect::<Result<_>>()?;
    let fine: Vec<(usize, f64, f64)> = seeds[..4].par_iter().map(|&s| run(s, 0.5 * dx)).collect::<Result<_>>()?;
    let violations: usize = coarse.iter().map(|c| c.0).sum();
    let worst_increase = coarse.iter().map(|c| c.1).fold(0.0, f64::max);
    let worst_defect = coarse.iter().map(|c| c.2).fold(0.0, f64::max);
    let shrinks = coarse.iter().zip(&fine).all(|(c, f)| f.1 <= c.1);
    let fine_increase = fine.iter().map(|f| f.1).fold(0.0, f64::max);
    let fine_defect = fine.iter().map(|f| f.2).fold(0.0, f64::max);
    outcome(
        violations == 0 && worst_defect <= 5.0 * dx && shrinks,
        format!(
            "{} pairs, violations = {violations}, max increase = {worst_increase:.1e}, max |defect| = {worst_defect:.2e} <= {:.0e}, after halving dx: max increase {fine_increase:.1e}, max |defect| {fine_defect:.2e}",
            coarse.len(),
            5.0 * dx
        ),
    )
}

fn exponential_convergence() -> Result<Outcome> {
    let m = step_model();
    let r0 = m.r0();
    let g = Grid::with_x_max(1e-3, 40.0)?;
    let ss = fixed_point_phi(&m, &g)?;
    let n0 = Density::from_fn(g, |x| x * x * (-1.5 * x).exp())?;
    let (_, trace) = run_autonomous(&m, n0, &RunOptions::new(20.0 / r0).stride(100), Some(&ss.density))?;
    let t: Vec<f64> = trace.iter().map(|r| r.t).collect();
    let d: Vec<f64> = trace.iter().map(|r| r.dist_l1.unwrap()).collect();
    let rate = decay_rate(&t, &d)?;
    let worst = t
        .iter()
        .zip(&d)
        .map(|(t, v)| v / (1.05 * (-r0 * t).exp() * d[0]))
        .fold(0.0, f64::max);
    outcome(
        rate >= 0.95 * r0 && worst <= 1.0,
        format!("decay rate {rate:.6} >= {:.6}, max dist / bound = {worst:.3}", 0.95 * r0),
    )
}

fn linear_theorem() -> Result<Outcome> {
    let m = ramp_model(0.5 / 1.5);
    let g = Grid::auto(&m, 0.01)?;
    let ss = fixed_point_phi(&m, &g)?;
    let (r0, rm, gb) = (m.r0(), m.r_max(), m.gamma_bar());
    let alpha = 0.5 * r0;
    let beta = alpha.min(r0);
    let mut ratios = Vec::new();
    for c in [0.1 * rm, -0.1 * rm] {
        let i_bar = ss.i_bar;
        let j = move |t: f64| i_bar + c * (-alpha * t).exp();
        let n0 = Density::from_fn(g, |x| x * x * (-x).exp())?;
        let (_, trace) = run_linear(&m, n0, &j, &RunOptions::new(20.0 / r0), Some(&ss.density))?;
        let cr = gb * c.abs();
        let k = 1.0 + cr / (r0 - alpha).abs();
        let (mut dist_ratio, mut act_ratio) = (0.0_f64, 0.0_f64);
        for r in &trace {
            let e = (-beta * r.t).exp();
            dist_ratio = dist_ratio.max(r.dist_l1.unwrap() / (1.1 * 2.0 * k * e));
            act_ratio = act_ratio.max((r.activity - i_bar).abs() / (1.1 * (2.0 * rm * k + cr) * e));
        }
        ratios.push((c, dist_ratio, act_ratio));
    }
    let pass = ratios.iter().all(|&(_, a, b)| a <= 1.0 && b <= 1.0);
    let detail = ratios
        .iter()
        .map(|(c, a, b)| format!("c = {c:+.2}: dist/bound {a:.3}, |I - Phi|/bound {b:.3}"))
        .collect::<Vec<_>>()
        .join("; ");
    outcome(pass, detail)
}

fn weak_nonlinearity() -> Result<Outcome> {
    let m = ramp_model(0.05);
    let wn = weak_nl_check(&m)?;
    let g = Grid::auto(&m, 0.02)?;
    let ss = fixed_point_phi(&m, &g)?;
    let errors: Vec<(f64, f64)> = [0.5, 2.0, 8.0]
        .par_iter()
        .map(|&d_units| {
            let delay = d_units / m.r0();
            let lambda = wn.rate(delay).expect("omega < 1");
            let n0 = Density::from_fn(g, |x| if x < 2.0 { 1.0 } else { 0.0 })?;
            let mut opts = DelayOptions::new(40.0 / lambda);
            opts.stride = 1000;
            let run = run_delayed(&m, n0, 1.2, delay, &opts)?;
            Ok((d_units, (run.trace.last().unwrap().activity - ss.i_bar).abs()))
        })
        .collect::<Result<_>>()?;
    let pass = (wn.omega - 0.5).abs() < 1e-9 && errors.iter().all(|e| e.1 <= 1e-4);
    let detail = errors
        .iter()
        .map(|(d, e)| format!("d = {d}/r0: {e:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(pass, format!("omega = {:.6}, |I(T) - I_bar|: {detail} (tol 1e-4)", wn.omega))
}

fn period_two() -> Result<Outcome> {
    let m = RateModel::tanh_phi(0.5, 1.5)?;
    let g = Grid::auto(&m, 0.01)?;
    let ss = fixed_point_phi(&m, &g)?;
    let slope = phi_prime(&m, &g, ss.i_bar)?;
    let (lo, hi) = period2_points(&m, &g, ss.i_bar)?.ok_or_else(|| temlab::Error::NoPeriodTwoBracket("none".into()))?;
    // bisection of Psi(I) - I on the closed-form map
    let p = |i: f64| m.prescribed_phi(i).unwrap();
    let h = |i: f64| p(p(i)) - i;
    let (mut a, mut b) = (0.5 * ss.i_bar, ss.i_bar - 1e-3);
    assert!(h(a) > 0.0 && h(b) < 0.0, "oracle bracket");
    while b - a > 1e-15 {
        let mid = 0.5 * (a + b);
        if h(mid) > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    let oracle = 0.5 * (a + b);
    let pass = (ss.i_bar - 0.75).abs() <= 1e-10
        && (slope + 1.5).abs() <= 1e-4
        && (lo + hi - 1.5).abs() <= 1e-8
        && (lo - oracle).abs() <= 1e-10
        && (hi - p(oracle)).abs() <= 1e-10;
    outcome(
        pass,
        format!(
            "I_bar = {:.12}, Phi'(I_bar) = {slope:.6}, I- = {lo:.10}, I+ = {hi:.10}, |sum - 1.5| = {:.1e}, |I- - oracle| = {:.1e}",
            ss.i_bar,
            (lo + hi - 1.5).abs(),
            (lo - oracle).abs()
        ),
    )
}

fn cesaro() -> Result<Outcome> {
    let m = RateModel::tanh_phi(0.5, 1.5)?;
    let g = Grid::auto(&m, 0.01)?;
    let ss = fixed_point_phi(&m, &g)?;
    let (i_minus, _) = period2_points(&m, &g, ss.i_bar)?.unwrap();
    let intervals = 6;
    let profile = limit_profile(&m, &g, i_minus, intervals)?;
    let alpha = 0.5 * m.r0();
    let bounds = iterate_error_bound(m.gamma_bar(), m.r_max(), m.r0(), alpha, intervals)?;
    let runs: Vec<(f64, f64, f64)> = [10.0, 20.0, 40.0]
        .par_iter()
        .map(|&d_units| {
            let delay = d_units / m.r0();
            let mut opts = DelayOptions::new(intervals as f64 * delay);
            opts.profile = Some(&profile);
            let run = run_delayed(&m, ss.density.clone(), i_minus, delay, &opts)?;
            let err = cesaro_error(&run.trace, &profile, run.delay, intervals)?.activity;
            Ok((d_units, err, bounds.cesaro_bound(run.delay, alpha)))
        })
        .collect::<Result<_>>()?;
    let decreasing = runs.windows(2).all(|w| w[1].1 < w[0].1);
    let scaled: Vec<f64> = runs.iter().map(|r| r.0 * r.1).collect();
    let spread = scaled.iter().cloned().fold(0.0, f64::max) / scaled.iter().cloned().fold(f64::INFINITY, f64::min);
    let below = runs.iter().all(|r| r.1 <= r.2);
    let detail = runs
        .iter()
        .map(|(d, e, b)| format!("d = {d}/r0: {e:.4e} (bound {b:.2e})"))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(decreasing && spread <= 3.0 && below, format!("{detail}; d*error spread {spread:.3}"))
}

fn monte_carlo() -> Result<Outcome> {
    let m = step_model();
    let g = Grid::with_x_max(0.1, 60.0)?;
    let ss = fixed_point_phi(&m, &g)?;
    let initial = Density::from_fn(g, |x| (-x).exp())?;
    let run = |particles: usize| {
        let opts = McOptions {
            particles,
            dt: 0.05,
            t_end: 60.0,
            seed: 20240917,
            mode: McMode::Autonomous,
            burn_in: 20.0,
            stride: 1,
        };
        mc_run(&m, &initial, &g, &opts)
    };
    let base = run(100_000)?;
    let (mean, se) = base.activity_stats(20.0, 20)?;
    let l1 = base.mean_histogram.l1_distance(&ss.density)?;
    let l1_double = run(200_000)?.mean_histogram.l1_distance(&ss.density)?;
    let z = (mean - ss.i_bar).abs() / se;
    outcome(
        z <= 3.0 && l1 <= 0.02 && l1_double < l1,
        format!(
            "mean I = {mean:.6} vs I_bar = {:.6} ({z:.2} SE), histogram L1 = {l1:.2e}, doubled N: {l1_double:.2e}",
            ss.i_bar
        ),
    )
}

fn extensions() -> Result<Outcome> {
    let m = step_model();
    let dx = 0.01;
    let g = Grid::with_x_max(dx, 30.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let n0 = random_density(g, &mut rng);

    // delta0 kernel against the renewal run
    let kernel = BirthKernel::delta0(g);
    let mut renewal = Autonomous::new(&m, n0.clone())?;
    let mut distributed = n0.clone();
    let steps = (20.0 / dx) as usize;
    let mut gap_rate = 0.0_f64;
    for k in 1..=steps {
        renewal.advance();
        step_distributed(&m, &kernel, &mut distributed)?;
        let gap = renewal.density().l1_distance(&distributed)?;
        gap_rate = gap_rate.max(gap / (k as f64 * dx));
    }

    let spread = BirthKernel::from_fn(g, |x| x * (-4.0 * x).exp())?;
    let a = random_density(g, &mut rng);
    let b = random_density(g, &mut rng);
    let distr = nonexpansion_defect_distributed(&m, &spread, a.clone(), b.clone(), 10.0)?;
    let pop = |d: Density| Population {
        model: m.clone(),
        kernel: spread.clone(),
        density: d,
    };
    let c = random_density(g, &mut rng);
    let d = random_density(g, &mut rng);
    let system = nonexpansion_defect_system(
        SystemState::new(pop(a), pop(c))?,
        SystemState::new(pop(b), pop(d))?,
        10.0,
    )?;
    let max_defect = |r: &temlab::diagnostics::ContractionReport| r.defects.iter().cloned().fold(f64::MIN, f64::max);
    let pass = gap_rate <= 5.0 * dx
        && distr.violations == 0
        && system.violations == 0
        && max_defect(&distr) <= 5.0 * dx
        && max_defect(&system) <= 5.0 * dx;
    outcome(
        pass,
        format!(
            "delta0 gap per unit time {gap_rate:.1e}, distr: violations {} max defect {:.2e}, system: violations {} max defect {:.2e} (slack {:.0e})",
            distr.violations,
            max_defect(&distr),
            system.violations,
            max_defect(&system),
            5.0 * dx
        ),
    )
}

fn determinism() -> Result<Outcome> {
    let bin = env!("CARGO_BIN_EXE_temlab");
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let root = tempfile::tempdir()?;
    let mut compared = 0;
    let mut differing = Vec::new();
    for (cmd, name) in [("oracle", "oracle_step"), ("simulate", "simulate_step"), ("delay", "delay_period2")] {
        let mut dirs = Vec::new();
        for rep in 0..2 {
            let out = root.path().join(format!("{name}-{rep}"));
            let status = Command::new(bin)
                .args([cmd, "--config"])
                .arg(configs.join(format!("{name}.json")))
                .arg("--out")
                .arg(&out)
                .output()?
                .status;
            if !status.success() {
                return outcome(false, format!("{cmd} {name} exited with {status}"));
            }
            dirs.push(out);
        }
        for entry in std::fs::read_dir(&dirs[0])? {
            let file = entry?.file_name();
            if !file.to_string_lossy().ends_with(".csv") {
                continue;
            }
            compared += 1;
            if std::fs::read(dirs[0].join(&file))? != std::fs::read(dirs[1].join(&file))? {
                differing.push(format!("{name}/{}", file.to_string_lossy()));
            }
        }
    }
    outcome(
        compared > 0 && differing.is_empty(),
        format!("{compared} CSV files compared, {} differ {:?}", differing.len(), differing),
    )
}

type Criterion = (u32, &'static str, fn() -> Result<Outcome>);

const CRITERIA: [Criterion; 10] = [
    (1, "steady-state closed forms", steady_closed_forms),
    (2, "L1 contraction", contraction),
    (3, "exponential convergence", exponential_convergence),
    (4, "linear input-driven bounds", linear_theorem),
    (5, "weak nonlinearity with delay", weak_nonlinearity),
    (6, "period-2 pair", period_two),
    (7, "large-delay Cesaro convergence", cesaro),
    (8, "Monte Carlo oracle", monte_carlo),
    (9, "distributed birth and two populations", extensions),
    (10, "determinism", determinism),
];

fn main() {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failures = 0;
    for (id, name, check) in CRITERIA {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = match check() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failures += 1;
        }
        println!(
            "criterion {id:>2} {} {name}: {detail} [{:.1}s]",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}

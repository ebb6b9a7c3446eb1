//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Run with `cargo test -p tradepost-core --test acceptance`.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tradepost_core::analysis::{
    convergence_metrics, detect_cycle, lambda_structure, price_log_ratio, ASYMPTOTIC_CYCLE_TOL,
    DEFAULT_MAX_PERIOD, EXACT_CYCLE_TOL,
};
use tradepost_core::dynamics::{run, tft_step, RecordPolicy, RunOptions, Snapshot, TftState};
use tradepost_core::equilibrium::{
    cross_pair_check, price_ray_check, solve_equilibrium, solve_equilibrium_with, PriceRay,
    SolveOptions,
};
use tradepost_core::instance::{
    generate, preset, GeneratorSpec, Instance, Topology, TFT3_A, TFT3_Y0,
};
use tradepost_core::lyapunov::kl_decomposition_residual;
use tradepost_core::{
    Allocation, Economy, EquilibriumCertificate, MarketState, Matrix, Mode, Trajectory,
};

const SUITE_SIZE: u64 = 50;
const CERT_TOL: f64 = 1e-12;
const LONG_RUN: usize = 100_000;

/// `y(1)` of the three-player tit-for-tat example, indexed (good, player).
const TFT3_Y1: [[f64; 3]; 3] = [
    [0.0, 0.4552048517736218, 0.5447951482263783],
    [0.1553967077250424, 0.0, 0.8446032922749576],
    [0.5978029457196989, 0.402197054280301, 0.0],
];

struct Case {
    seed: u64,
    inst: Instance,
    lazy: Economy,
    lazy_s0: MarketState,
    cert: EquilibriumCertificate,
}

fn suite_spec(seed: u64) -> GeneratorSpec {
    let n = 2 + (seed % 9) as usize;
    let topology = if seed % 2 == 0 {
        Topology::Dense
    } else {
        Topology::CyclicComponents((2 + ((seed / 2) % 2) as usize).min(n))
    };
    GeneratorSpec { n, topology, seed }
}

fn build_case(seed: u64) -> Case {
    let inst = generate(&suite_spec(seed)).unwrap();
    let n = inst.economy.n();
    let lazy_inst = inst.clone().with_alpha(vec![0.5; n]).unwrap();
    let lazy_s0 = lazy_inst.initial_with_matching_bank().unwrap();
    let cert = solve_equilibrium(&inst.economy, CERT_TOL, 1_000_000).unwrap();
    Case {
        seed,
        lazy: lazy_inst.economy,
        lazy_s0,
        inst,
        cert,
    }
}

fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = items.iter().map(|it| scope.spawn(|| f(it))).collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    })
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn market(traj: &Trajectory, k: usize) -> &MarketState {
    traj.records[k].state.as_market().unwrap()
}

// 1
fn fixed_point_stability() -> Outcome {
    let start = Instant::now();
    let e = Economy::from_rows(&[[0.0, 1.0], [1.0, 0.0]])
        .unwrap()
        .with_uniform_alpha(0.5)
        .unwrap();
    let s0 = MarketState::new(
        Matrix::from_rows(&[[0.0, 0.5], [0.5, 0.0]]).unwrap(),
        vec![0.5, 0.5],
    )
    .unwrap();
    let traj = run(&e, Snapshot::Market(s0), &RunOptions::new(Mode::Lazy, 1000)).unwrap();
    let worst = traj
        .records
        .windows(2)
        .map(|w| w[1].bids().unwrap().max_abs_diff(w[0].bids().unwrap()))
        .fold(0.0, f64::max);
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-10 && elapsed < Duration::from_secs(1),
        format!("max per-step bid move {worst:e} over 1000 steps in {elapsed:.2?}"),
    )
}

// 2 and 3
fn lyapunov_suite(cases: &[Case]) -> (Outcome, Outcome) {
    let start = Instant::now();
    let per_case = par_map(cases, |c| {
        let mut worst_residual: f64 = 0.0;
        let mut worst_rise = f64::NEG_INFINITY;
        let mut worst_g = f64::NEG_INFINITY;
        let mut worst_h = f64::NEG_INFINITY;
        let runs = [
            (Mode::Pr, &c.inst.economy, &c.inst.initial),
            (Mode::Lazy, &c.lazy, &c.lazy_s0),
        ];
        for (mode, e, s0) in runs {
            let opts = RunOptions::new(mode, 2000).lyapunov(&c.cert);
            let traj = run(e, Snapshot::Market(s0.clone()), &opts).unwrap();
            let ly: Vec<_> = traj.records.iter().map(|r| r.lyapunov.unwrap()).collect();
            for (k, l) in ly.iter().enumerate() {
                if k < 2000 {
                    worst_residual = worst_residual.max(l.identity_residual.unwrap());
                }
                if k > 0 {
                    worst_rise = worst_rise.max(l.log_f - ly[k - 1].log_f);
                }
                worst_g = worst_g.max(l.log_g);
                worst_h = worst_h.max(l.log_h);
            }
        }
        (worst_residual, worst_rise, worst_g, worst_h)
    });
    let residual = per_case.iter().map(|r| r.0).fold(0.0, f64::max);
    let rise = per_case
        .iter()
        .map(|r| r.1)
        .fold(f64::NEG_INFINITY, f64::max);
    let g = per_case
        .iter()
        .map(|r| r.2)
        .fold(f64::NEG_INFINITY, f64::max);
    let h = per_case
        .iter()
        .map(|r| r.3)
        .fold(f64::NEG_INFINITY, f64::max);
    let elapsed = start.elapsed();
    (
        outcome(
            residual <= 1e-9 && elapsed < Duration::from_secs(30),
            format!(
                "max identity residual {residual:e} over {} instances x 2 modes x 2000 steps in {elapsed:.2?}",
                cases.len()
            ),
        ),
        outcome(
            rise <= 1e-10 && g <= 1e-12 && h <= 1e-12,
            format!("max log_f rise {rise:e}, max log_g {g:e}, max log_h {h:e}"),
        ),
    )
}

struct LongRun {
    pr_utility: f64,
    pr_allocation: f64,
    lazy_utility: f64,
    lazy_price: f64,
    lazy_period: Option<usize>,
}

fn long_runs(cases: &[Case]) -> Vec<LongRun> {
    par_map(cases, |c| {
        let pr = run(
            &c.inst.economy,
            Snapshot::Market(c.inst.initial.clone()),
            &RunOptions::new(Mode::Pr, LONG_RUN).record(RecordPolicy::Tail(3000)),
        )
        .unwrap();
        let pr_m = convergence_metrics(&pr, &c.cert);
        let lazy = run(
            &c.lazy,
            Snapshot::Market(c.lazy_s0.clone()),
            &RunOptions::new(Mode::Lazy, LONG_RUN)
                .record(RecordPolicy::Tail(3 * DEFAULT_MAX_PERIOD)),
        )
        .unwrap();
        let lazy_m = convergence_metrics(&lazy, &c.cert);
        LongRun {
            pr_utility: pr_m.final_utility_distance().unwrap(),
            pr_allocation: pr_m.final_allocation_distance().unwrap(),
            lazy_utility: lazy_m.final_utility_distance().unwrap(),
            lazy_price: lazy_m.final_price_distance().unwrap(),
            lazy_period: detect_cycle(&lazy, DEFAULT_MAX_PERIOD, EXACT_CYCLE_TOL).period,
        }
    })
}

// 4
fn utility_convergence(runs: &[LongRun]) -> Outcome {
    let pr = runs.iter().map(|r| r.pr_utility).fold(0.0, f64::max);
    let lazy = runs.iter().map(|r| r.lazy_utility).fold(0.0, f64::max);
    outcome(
        pr <= 1e-6 && lazy <= 1e-6,
        format!("max utility distance at t = {LONG_RUN}: pr {pr:e}, lazy {lazy:e}"),
    )
}

// 5
fn allocation_convergence(runs: &[LongRun]) -> Outcome {
    let worst = runs.iter().map(|r| r.pr_allocation).fold(0.0, f64::max);
    outcome(
        worst <= 1e-4,
        format!("max final pr allocation distance {worst:e}"),
    )
}

// 6
fn lazy_convergence(cases: &[Case], runs: &[LongRun]) -> Outcome {
    let worst = runs.iter().map(|r| r.lazy_price).fold(0.0, f64::max);
    let not_fixed: Vec<u64> = cases
        .iter()
        .zip(runs)
        .filter(|(_, r)| r.lazy_period != Some(1))
        .map(|(c, _)| c.seed)
        .collect();
    outcome(
        worst <= 1e-6 && not_fixed.is_empty(),
        format!("max lazy price distance {worst:e}; seeds without period 1: {not_fixed:?}"),
    )
}

// 7
fn bid_cycling() -> Outcome {
    let inst = preset("bipartite2").unwrap();
    let c = EquilibriumCertificate::from_parts(
        &inst.economy,
        Allocation(Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap()),
        vec![0.5, 0.5].into(),
        0.0,
    )
    .unwrap();
    let traj = run(
        &inst.economy,
        Snapshot::Market(inst.initial.clone()),
        &RunOptions::new(Mode::Pr, 1000).lyapunov(&c),
    )
    .unwrap();
    let (s0, s1) = (market(&traj, 0), market(&traj, 1));
    let mut dev: f64 = 0.0;
    let mut util: f64 = 0.0;
    let mut lf: f64 = 0.0;
    let target = 0.5 * (9.0f64 / 8.0).ln();
    for (k, r) in traj.records.iter().enumerate() {
        let (s, p) = if k % 2 == 0 {
            (s0, &traj.records[0].prices)
        } else {
            (s1, &traj.records[1].prices)
        };
        let m = market(&traj, k);
        dev = dev
            .max(m.bids.max_abs_diff(&s.bids))
            .max(max_diff(&m.budget, &s.budget))
            .max(max_diff(&r.prices, p));
        util = util.max(max_diff(&r.utilities, &[1.0, 1.0]));
        lf = lf.max((r.lyapunov.unwrap().log_f - target).abs());
    }
    let period = detect_cycle(&traj, DEFAULT_MAX_PERIOD, EXACT_CYCLE_TOL).period;
    outcome(
        dev <= 1e-12 && util == 0.0 && lf <= 1e-12 && period == Some(2),
        format!(
            "period {period:?}, max deviation from period 2 {dev:e}, utility deviation {util:e}, \
             max |log_f - log(9/8)/2| {lf:e}"
        ),
    )
}

// 8
fn dense_two_player() -> Outcome {
    let inst = preset("fig3").unwrap();
    let traj = run(
        &inst.economy,
        Snapshot::Market(inst.initial.clone()),
        &RunOptions::new(Mode::Pr, 500).record(RecordPolicy::Last),
    )
    .unwrap();
    let r = traj.last().unwrap();
    let (x12, x21) = (r.allocation[(0, 1)], r.allocation[(1, 0)]);
    let du = max_diff(&r.utilities, &[51.0, 79.0]);
    outcome(
        x12 >= 0.99 && x21 >= 0.99 && du <= 1e-2,
        format!("x_1_2 = {x12:.6}, x_2_1 = {x21:.6}, utility distance to (51, 79) {du:e}"),
    )
}

// 9
fn kl_decomposition() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=8);
        let b = Matrix::from_fn(n, |_, _| {
            if rng.gen_bool(0.2) {
                0.0
            } else {
                rng.gen_range(0.01..1.0)
            }
        });
        let b2 = Matrix::from_fn(n, |_, _| rng.gen_range(0.01..1.0));
        worst = worst.max(kl_decomposition_residual(&b, &b2).unwrap());
    }
    outcome(
        worst <= 1e-12,
        format!("max residual {worst:e} over 1000 pairs"),
    )
}

// 10
fn limit_cycle_structure() -> Outcome {
    let mut seeds = Vec::new();
    let mut seed = 1000u64;
    while seeds.len() < 40 {
        let n = 4 + (seed % 7) as usize;
        let k = 2 + (seed % 2) as usize;
        if n % k != 0 {
            seeds.push((seed, n, k));
        }
        seed += 1;
    }
    let results = par_map(&seeds, |&(seed, n, k)| {
        let inst = generate(&GeneratorSpec {
            n,
            topology: Topology::CyclicComponents(k),
            seed,
        })
        .unwrap();
        let traj = run(
            &inst.economy,
            Snapshot::Market(inst.initial.clone()),
            &RunOptions::new(Mode::Pr, LONG_RUN).record(RecordPolicy::Tail(3 * DEFAULT_MAX_PERIOD)),
        )
        .unwrap();
        let cycle = detect_cycle(&traj, DEFAULT_MAX_PERIOD, ASYMPTOTIC_CYCLE_TOL);
        let period = cycle.period.filter(|&p| p >= 2)?;
        let cert = solve_equilibrium(&inst.economy, CERT_TOL, 1_000_000).unwrap();
        let cs = lambda_structure(&traj, &cert, 100, 1e-3);
        let last = &traj.records[traj.len() - period..];
        let logs: Vec<f64> = last
            .iter()
            .map(|r| price_log_ratio(&r.prices, &cert.p_star).unwrap())
            .collect();
        let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some((seed, period, cs.map(|c| c.max_within_class_spread), hi - lo))
    });
    let cycling: Vec<_> = results.into_iter().flatten().take(20).collect();
    let mut spread: f64 = 0.0;
    let mut drift: f64 = 0.0;
    let mut failed = Vec::new();
    for (seed, _, cs, d) in &cycling {
        match cs {
            Ok(s) => spread = spread.max(*s),
            Err(_) => failed.push(*seed),
        }
        drift = drift.max(*d);
    }
    let periods: Vec<usize> = cycling.iter().map(|c| c.1).collect();
    outcome(
        cycling.len() == 20 && failed.is_empty() && spread <= 1e-3 && drift <= 1e-8,
        format!(
            "{} cycling instances (periods {periods:?}), max within-class spread {spread:e}, \
             not settled {failed:?}, max price log-ratio variation over a cycle {drift:e}",
            cycling.len()
        ),
    )
}

// 11
fn tit_for_tat() -> Outcome {
    let e = Economy::from_rows(&TFT3_A).unwrap();
    let y0 = TftState::new(Matrix::from_rows(&TFT3_Y0).unwrap()).unwrap();
    let y1 = tft_step(&e, &y0).unwrap();
    let y2 = tft_step(&e, &y1).unwrap();
    let d1 = y1.y.max_abs_diff(&Matrix::from_rows(&TFT3_Y1).unwrap());
    let d2 = y2.y.max_abs_diff(&y0.y);
    outcome(
        d1 <= 1e-9 && d2 <= 1e-9,
        format!("|y(1) - printed| = {d1:e}, |y(2) - y(0)| = {d2:e}"),
    )
}

/// Looks through 3x3 valuation matrices with entries in {0, 1} for one whose
/// oracle certificate has two players tied between the same two goods, and
/// shifts money between them along that swap to get a second allocation.
fn multi_equilibrium_instance() -> Option<(Economy, EquilibriumCertificate, Allocation)> {
    for mask in 0u32..512 {
        let a = Matrix::from_fn(3, |i, j| f64::from((mask >> (3 * i + j)) & 1));
        let Ok(e) = Economy::non_lazy(a) else {
            continue;
        };
        let Ok(c) = solve_equilibrium(&e, 1e-12, 100_000) else {
            continue;
        };
        let p = &c.p_star;
        let tied = |i: usize, j: usize| {
            let a = e.valuation(i, j);
            a > 0.0 && (a / p[j] - c.u_star[i] / p[i]).abs() <= 1e-9 * c.u_star[i] / p[i]
        };
        for (i, k) in [(0, 1), (0, 2), (1, 2)] {
            for (j, l) in [(0, 1), (0, 2), (1, 2)] {
                if !(tied(i, j) && tied(i, l) && tied(k, j) && tied(k, l)) {
                    continue;
                }
                let b = &c.b_star;
                let up = b[(i, l)].min(b[(k, j)]);
                let down = b[(i, j)].min(b[(k, l)]);
                let d = if up >= down { 0.5 * up } else { -0.5 * down };
                if d == 0.0 {
                    continue;
                }
                let mut bids = b.clone();
                bids[(i, j)] += d;
                bids[(i, l)] -= d;
                bids[(k, j)] -= d;
                bids[(k, l)] += d;
                let x = Allocation(Matrix::from_fn(3, |r, s| bids[(r, s)] / p[s]));
                return Some((e, c, x));
            }
        }
    }
    None
}

// 12
fn appendix_checks(cases: &[Case]) -> Outcome {
    let Some((e, c, x)) = multi_equilibrium_instance() else {
        return outcome(false, "no multi-equilibrium instance found");
    };
    let moved = x.max_abs_diff(&c.x_star);
    let pair = cross_pair_check(&e, &x, &c, 1e-8).map(|r| r.max());
    let cross_ok = matches!(pair, Ok(r) if r <= 1e-8) && moved > 0.1;

    let dense: Vec<&Case> = cases.iter().filter(|c| c.seed % 2 == 0).collect();
    let rays = par_map(&dense, |c| {
        let opts = |seed| SolveOptions {
            tol: 1e-10,
            max_iters: 1_000_000,
            seed: Some(seed),
        };
        let c1 = solve_equilibrium_with(&c.inst.economy, &opts(1)).unwrap();
        let c2 = solve_equilibrium_with(&c.inst.economy, &opts(2)).unwrap();
        price_ray_check(&c.inst.economy, &c1, &c2, 1e-6).unwrap()
    });
    let parallel = rays.iter().filter(|r| **r == PriceRay::Parallel).count();
    let not_parallel = rays.iter().filter(|r| **r == PriceRay::NotParallel).count();

    let block = {
        let a = Matrix::from_fn(6, |i, j| {
            if (i < 3) == (j < 3) {
                1.0 + ((7 * i + 3 * j) % 5) as f64
            } else {
                0.0
            }
        });
        let e = Economy::non_lazy(a).unwrap();
        let c1 = solve_equilibrium(&e, 1e-10, 1_000_000).unwrap();
        price_ray_check(&e, &c1, &c1, 1e-6).unwrap()
    };
    outcome(
        cross_ok && parallel > 0 && not_parallel == 0 && block == PriceRay::Inapplicable,
        format!(
            "cross pairing moved x by {moved:.3}, residual {pair:?}; price rays on {} dense \
             instances: {parallel} parallel, {not_parallel} not parallel, {} inapplicable; \
             block-diagonal: {block:?}",
            rays.len(),
            rays.len() - parallel - not_parallel
        ),
    )
}

// 13
fn utility_uniqueness(cases: &[Case]) -> Outcome {
    let spreads = par_map(cases, |c| {
        let us: Vec<Vec<f64>> = (0..5u64)
            .map(|seed| {
                let opts = SolveOptions {
                    tol: 1e-10,
                    max_iters: 1_000_000,
                    seed: Some(100 + seed),
                };
                solve_equilibrium_with(&c.inst.economy, &opts)
                    .unwrap()
                    .u_star
                    .0
            })
            .collect();
        us.iter().map(|u| max_diff(u, &us[0])).fold(0.0, f64::max)
    });
    let worst = spreads.iter().copied().fold(0.0, f64::max);
    outcome(
        worst <= 1e-6,
        format!(
            "max utility disagreement across 5 seeds on {} instances {worst:e}",
            cases.len()
        ),
    )
}

fn main() {
    let start = Instant::now();
    let seeds: Vec<u64> = (0..SUITE_SIZE).collect();
    let cases = par_map(&seeds, |&s| build_case(s));
    println!(
        "suite: {} instances, certificates in {:.2?}",
        cases.len(),
        start.elapsed()
    );

    let mut results: Vec<(u32, &str, Outcome, Duration)> = Vec::new();
    let mut timed = |id: u32, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = f();
        let line = (id, name, o, t.elapsed());
        println!(
            "criterion {:>2} {} {}: {} ({:.2?})",
            line.0,
            if line.2.pass { "PASS" } else { "FAIL" },
            line.1,
            line.2.detail,
            line.3
        );
        results.push(line);
    };

    timed(1, "fixed-point stability", &mut fixed_point_stability);
    let (c2, c3) = lyapunov_suite(&cases);
    let mut c2 = Some(c2);
    let mut c3 = Some(c3);
    timed(2, "step identity", &mut || c2.take().unwrap());
    timed(3, "monotonicity and signs", &mut || c3.take().unwrap());
    let t = Instant::now();
    let runs = long_runs(&cases);
    println!("long runs: {:.2?}", t.elapsed());
    timed(4, "utility convergence", &mut || utility_convergence(&runs));
    timed(5, "allocation convergence", &mut || {
        allocation_convergence(&runs)
    });
    timed(6, "lazy convergence", &mut || {
        lazy_convergence(&cases, &runs)
    });
    timed(7, "bid cycling", &mut bid_cycling);
    timed(8, "dense two-player limit", &mut dense_two_player);
    timed(9, "KL decomposition", &mut kl_decomposition);
    timed(10, "limit-cycle structure", &mut limit_cycle_structure);
    timed(11, "tit-for-tat cycle", &mut tit_for_tat);
    timed(12, "allocation pairing and price rays", &mut || {
        appendix_checks(&cases)
    });
    timed(13, "equilibrium utility uniqueness", &mut || {
        utility_uniqueness(&cases)
    });

    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} criteria passed in {:.2?}",
        results.len() - failed.len(),
        results.len(),
        start.elapsed()
    );
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}

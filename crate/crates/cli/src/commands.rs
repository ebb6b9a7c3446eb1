use std::collections::VecDeque;
use std::fmt::Display;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use rayon::prelude::*;
use serde::Serialize;
use tradepost_core::analysis::{
    self, convergence_metrics, detect_cycle, lambda_structure, ClassStructure, CycleReport,
};
use tradepost_core::dynamics::{RecordPolicy, Simulation, Snapshot, StepRecord};
use tradepost_core::equilibrium::{
    solve_equilibrium_with, verify_equilibrium, ResidualReport, SolveOptions, DEFAULT_MAX_ITERS,
};
use tradepost_core::instance::{generate, GeneratorSpec, Instance};
use tradepost_core::{Economy, EquilibriumCertificate, Error, Mode, Trajectory};

use crate::csv::{read_trajectory, CsvWriter};
use crate::source::{parse_alpha, InstanceArgs};

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_record(s: &str) -> Result<RecordPolicy, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Args, Debug, Clone)]
pub struct OracleArgs {
    /// Equilibrium oracle tolerance.
    #[arg(long, default_value = "1e-8")]
    pub tol: f64,
    /// Equilibrium oracle iteration budget.
    #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
    pub max_iters: usize,
}

#[derive(Args, Debug, Clone)]
pub struct AnalysisArgs {
    /// Longest cycle period searched for, in records.
    #[arg(long, default_value_t = analysis::DEFAULT_MAX_PERIOD)]
    pub max_period: usize,
    /// Cycle detection tolerance; 1e-4 suits cycles only reached in the limit.
    #[arg(long, default_value = "1e-8")]
    pub cycle_tol: f64,
    /// Trailing records used for the equivalence-class analysis.
    #[arg(long, default_value_t = 100)]
    pub window: usize,
    /// Largest accepted spread of price ratios within a class.
    #[arg(long, default_value = "1e-3")]
    pub lambda_tol: f64,
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    #[command(flatten)]
    pub source: InstanceArgs,
    /// Dynamic: pr, lazy or tft.
    #[arg(long, default_value = "pr", value_parser = parse_mode)]
    pub mode: Mode,
    /// Savings fractions: one value for every player or a comma-separated list.
    #[arg(long, value_name = "F")]
    pub alpha: Option<String>,
    /// Start lazy players with (1 - alpha) / alpha times their budget in the bank.
    #[arg(long)]
    pub match_bank: bool,
    /// Rounds to simulate.
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    /// Rows written: all, every:K, last or tail:K.
    #[arg(long, default_value = "all", value_parser = parse_record)]
    pub record: RecordPolicy,
    /// Add log_f, log_g, log_h and identity_residual columns.
    #[arg(long)]
    pub with_lyapunov: bool,
    /// Use this certificate instead of running the oracle.
    #[arg(long, value_name = "PATH")]
    pub certificate: Option<PathBuf>,
    #[command(flatten)]
    pub oracle: OracleArgs,
    #[command(flatten)]
    pub analysis: AnalysisArgs,
    /// Trailing records kept in memory for the summary.
    #[arg(long, default_value_t = 600)]
    pub tail: usize,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Run this many consecutive generator seeds, each into OUT/seed-S.
    #[arg(long, value_name = "N")]
    pub sweep: Option<usize>,
    /// Worker threads for --sweep.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Args, Debug, Clone)]
pub struct EqArgs {
    #[command(flatten)]
    pub source: InstanceArgs,
    #[command(flatten)]
    pub oracle: OracleArgs,
    /// Start the oracle from random bids drawn with this seed.
    #[arg(long)]
    pub start_seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct AnalyzeArgs {
    /// trajectory.csv written by `run`.
    #[arg(long, value_name = "PATH")]
    pub trajectory: PathBuf,
    #[command(flatten)]
    pub source: InstanceArgs,
    /// Use this certificate instead of running the oracle.
    #[arg(long, value_name = "PATH")]
    pub certificate: Option<PathBuf>,
    #[command(flatten)]
    pub oracle: OracleArgs,
    #[command(flatten)]
    pub analysis: AnalysisArgs,
    /// Also write the summary as JSON to this file.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct CompareArgs {
    #[command(flatten)]
    pub source: InstanceArgs,
    /// Rounds to simulate for each dynamic.
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    /// Rows written: all, every:K, last or tail:K.
    #[arg(long, default_value = "all", value_parser = parse_record)]
    pub record: RecordPolicy,
    #[command(flatten)]
    pub oracle: OracleArgs,
    #[command(flatten)]
    pub analysis: AnalysisArgs,
    /// Trailing records kept in memory for the summary.
    #[arg(long, default_value_t = 600)]
    pub tail: usize,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct GenArgs {
    #[command(flatten)]
    pub source: InstanceArgs,
    /// Savings fractions stored in the file.
    #[arg(long, value_name = "F")]
    pub alpha: Option<String>,
    /// Instance file to write.
    #[arg(long, default_value = "instance.json")]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
pub struct FinalState {
    pub t: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub prices: Vec<f64>,
    pub utilities: Vec<f64>,
    pub allocation: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize)]
pub struct FinalMetrics {
    pub utility_distance: f64,
    pub allocation_distance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub price_distance: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct LyapunovSummary {
    pub first_log_f: f64,
    pub last_log_f: f64,
    pub max_log_f_increase: f64,
    pub max_log_g: f64,
    pub max_log_h: f64,
    pub max_identity_residual: f64,
}

#[derive(Default)]
struct LyapunovAcc {
    first: Option<f64>,
    prev: Option<f64>,
    rise: f64,
    g: f64,
    h: f64,
    residual: f64,
}

impl LyapunovAcc {
    fn push(&mut self, rec: &StepRecord) {
        let Some(l) = &rec.lyapunov else { return };
        if self.first.is_none() {
            self.first = Some(l.log_f);
            self.rise = f64::NEG_INFINITY;
            self.g = f64::NEG_INFINITY;
            self.h = f64::NEG_INFINITY;
        }
        if let Some(prev) = self.prev {
            self.rise = self.rise.max(l.log_f - prev);
        }
        self.prev = Some(l.log_f);
        self.g = self.g.max(l.log_g);
        self.h = self.h.max(l.log_h);
        if let Some(r) = l.identity_residual {
            self.residual = self.residual.max(r);
        }
    }

    fn finish(self) -> Option<LyapunovSummary> {
        Some(LyapunovSummary {
            first_log_f: self.first?,
            last_log_f: self.prev?,
            max_log_f_increase: self.rise,
            max_log_g: self.g,
            max_log_h: self.h,
            max_identity_residual: self.residual,
        })
    }
}

#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub mode: Mode,
    pub n: usize,
    pub steps: usize,
    pub rows: usize,
    pub clamped: bool,
    #[serde(rename = "final")]
    pub last: FinalState,
    pub equilibrium_residuals: Option<ResidualReport>,
    pub metrics: Option<FinalMetrics>,
    pub cycle: CycleReport,
    pub classes: Option<ClassStructure>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classes_note: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lyapunov: Option<LyapunovSummary>,
}

fn summarize(
    traj: &Trajectory,
    rows: usize,
    cert: Option<&EquilibriumCertificate>,
    a: &AnalysisArgs,
    lyapunov: Option<LyapunovSummary>,
) -> Result<RunSummary> {
    let last = traj
        .last()
        .ok_or_else(|| anyhow!("trajectory has no records"))?;
    let cycle = detect_cycle(traj, a.max_period, a.cycle_tol);
    let metrics = cert.map(|c| {
        let m = convergence_metrics(traj, c);
        FinalMetrics {
            utility_distance: m.final_utility_distance().unwrap_or(f64::NAN),
            allocation_distance: m.final_allocation_distance().unwrap_or(f64::NAN),
            price_distance: m.final_price_distance(),
        }
    });
    let (classes, classes_note) = match cert {
        None => (None, Some("no equilibrium certificate".to_string())),
        Some(c) => match lambda_structure(traj, c, a.window, a.lambda_tol) {
            Ok(cs) => (Some(cs), None),
            Err(e @ (Error::NotApplicable(_) | Error::Shape(_))) => (None, Some(e.to_string())),
            Err(e) => return Err(e.into()),
        },
    };
    Ok(RunSummary {
        mode: traj.mode,
        n: last.allocation.n(),
        steps: traj.steps,
        rows,
        clamped: traj.clamped,
        last: FinalState {
            t: last.t,
            prices: last.prices.0.clone(),
            utilities: last.utilities.0.clone(),
            allocation: last.allocation.to_rows(),
        },
        equilibrium_residuals: cert.and_then(|c| c.residuals),
        metrics,
        cycle,
        classes,
        classes_note,
        lyapunov,
    })
}

struct Plan<'a> {
    economy: &'a Economy,
    mode: Mode,
    start: Snapshot,
    steps: usize,
    record: RecordPolicy,
    certificate: Option<&'a EquilibriumCertificate>,
    lyapunov: bool,
    analysis: &'a AnalysisArgs,
    tail: usize,
    csv: PathBuf,
}

/// Steps the dynamic, streaming kept rows to the CSV and holding only a
/// bounded tail of records for the summary.
fn execute(plan: Plan<'_>) -> Result<RunSummary> {
    let mut sim = Simulation::new(plan.economy, plan.mode, plan.start)?;
    if plan.lyapunov {
        let c = plan
            .certificate
            .ok_or_else(|| anyhow!("--with-lyapunov needs an equilibrium certificate"))?;
        sim = sim.with_lyapunov(c)?;
    }
    let deferred = match plan.record {
        RecordPolicy::Tail(k) => Some(k),
        _ => None,
    };
    let cap = plan
        .tail
        .max(3 * plan.analysis.max_period)
        .max(plan.analysis.window)
        .max(deferred.unwrap_or(0))
        .max(1);
    let mut writer = CsvWriter::create(&plan.csv, plan.mode, plan.economy.n(), plan.lyapunov)?;
    let mut kept: VecDeque<StepRecord> = VecDeque::new();
    let mut ly = LyapunovAcc::default();
    for step in 0..=plan.steps {
        let rec = if step < plan.steps {
            sim.step()?
        } else {
            sim.current()?.clone()
        };
        ly.push(&rec);
        if plan.record.keeps(rec.t, step == plan.steps) {
            if deferred.is_none() {
                writer.write(&rec)?;
            }
            kept.push_back(rec);
            if kept.len() > cap {
                kept.pop_front();
            }
        }
    }
    if let Some(k) = deferred {
        for rec in kept.iter().skip(kept.len().saturating_sub(k)) {
            writer.write(rec)?;
        }
    }
    let rows = writer.finish()?;
    let traj = Trajectory {
        mode: plan.mode,
        steps: plan.steps,
        stride: plan.record.stride(),
        records: kept.into(),
        clamped: sim.clamped(),
    };
    summarize(&traj, rows, plan.certificate, plan.analysis, ly.finish())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn load_certificate(economy: &Economy, path: &Path) -> Result<EquilibriumCertificate> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut c = EquilibriumCertificate::from_json(&text)?;
    let r = verify_equilibrium(economy, &c, c.tol)?;
    if !r.accepted(c.tol) {
        return Err(Error::Unverified(format!(
            "{}: residual {:.3e} above its tolerance {:.3e}",
            path.display(),
            r.max(),
            c.tol
        ))
        .into());
    }
    c.residuals = Some(r);
    Ok(c)
}

/// Loads or computes a certificate. When it is not `required`, an oracle
/// that fails to converge only produces a warning.
fn certificate_for(
    economy: &Economy,
    path: Option<&Path>,
    oracle: &OracleArgs,
    required: bool,
) -> Result<Option<EquilibriumCertificate>> {
    if let Some(path) = path {
        return load_certificate(economy, path).map(Some);
    }
    let opts = SolveOptions {
        tol: oracle.tol,
        max_iters: oracle.max_iters,
        seed: None,
    };
    match solve_equilibrium_with(economy, &opts) {
        Ok(c) => Ok(Some(c)),
        Err(e @ Error::NonConvergence(_)) if !required => {
            eprintln!("warning: {e}; continuing without equilibrium metrics");
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

fn start_for(inst: &Instance, mode: Mode, match_bank: bool) -> Result<Snapshot> {
    Ok(match mode {
        Mode::Tft => Snapshot::Tft(inst.initial_tft()?),
        Mode::Lazy if match_bank => Snapshot::Market(inst.initial_with_matching_bank()?),
        _ => Snapshot::Market(inst.initial.clone()),
    })
}

fn field(name: &str, value: impl Display) {
    println!("  {name:<24}{value}");
}

fn fmt_classes(classes: &[Vec<usize>]) -> String {
    classes
        .iter()
        .map(|c| {
            let members: Vec<String> = c.iter().map(|i| (i + 1).to_string()).collect();
            format!("{{{}}}", members.join(","))
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn print_summary(title: &str, s: &RunSummary) {
    println!("{title}");
    field("mode", s.mode);
    field("players", s.n);
    field("steps", s.steps);
    field("rows written", s.rows);
    if s.clamped {
        field("underflow", "some bids were flushed to zero");
    }
    let cycle = &s.cycle;
    match cycle.period {
        Some(1) => field(
            "cycle",
            format!("fixed point (deviation {:.3e})", cycle.max_deviation),
        ),
        Some(p) => field(
            "cycle",
            format!(
                "period {p} from t = {} (deviation {:.3e})",
                cycle.anchor_t.unwrap_or(0),
                cycle.max_deviation
            ),
        ),
        None => field(
            "cycle",
            format!("none detected (closest {:.3e})", cycle.max_deviation),
        ),
    }
    if let Some(m) = &s.metrics {
        field("utility distance", format!("{:.3e}", m.utility_distance));
        field(
            "allocation distance",
            format!("{:.3e}", m.allocation_distance),
        );
        if let Some(p) = m.price_distance {
            field("price distance", format!("{p:.3e}"));
        }
    }
    match (&s.classes, &s.classes_note) {
        (Some(cs), _) => {
            field("classes", fmt_classes(&cs.classes));
            field(
                "lambda spread",
                format!(
                    "{:.3e} ({})",
                    cs.max_within_class_spread,
                    if cs.valid { "valid" } else { "not valid" }
                ),
            );
            field("classes form one cycle", cs.is_single_cycle);
        }
        (None, Some(note)) => field("classes", format!("n/a: {note}")),
        (None, None) => {}
    }
    if let Some(l) = &s.lyapunov {
        field(
            "log f first / last",
            format!("{:.3e} / {:.3e}", l.first_log_f, l.last_log_f),
        );
        field(
            "max identity residual",
            format!("{:.3e}", l.max_identity_residual),
        );
        field(
            "max log f increase",
            format!("{:.3e}", l.max_log_f_increase),
        );
    }
    field(
        "final utilities",
        s.last
            .utilities
            .iter()
            .map(|u| format!("{u:.6}"))
            .collect::<Vec<_>>()
            .join(" "),
    );
}

fn run_one(args: &RunArgs, inst: Instance, out: &Path, quiet: bool) -> Result<RunSummary> {
    let n = inst.economy.n();
    let inst = match &args.alpha {
        Some(a) => inst.with_alpha(parse_alpha(a, n)?)?,
        None => inst,
    };
    let start = start_for(&inst, args.mode, args.match_bank)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let cert = certificate_for(
        &inst.economy,
        args.certificate.as_deref(),
        &args.oracle,
        args.with_lyapunov,
    )?;
    if let Some(c) = &cert {
        write_json(&out.join("certificate.json"), c)?;
    }
    let summary = execute(Plan {
        economy: &inst.economy,
        mode: args.mode,
        start,
        steps: args.steps,
        record: args.record,
        certificate: cert.as_ref(),
        lyapunov: args.with_lyapunov,
        analysis: &args.analysis,
        tail: args.tail,
        csv: out.join("trajectory.csv"),
    })?;
    write_json(&out.join("summary.json"), &summary)?;
    if !quiet {
        print_summary(&format!("run -> {}", out.display()), &summary);
    }
    Ok(summary)
}

#[derive(Serialize)]
struct SweepEntry {
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    summary: Option<RunSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

pub fn run(args: &RunArgs) -> Result<()> {
    let Some(count) = args.sweep else {
        let inst = args.source.load()?;
        run_one(args, inst, &args.out, false)?;
        return Ok(());
    };
    let spec = args
        .source
        .generator()?
        .ok_or_else(|| anyhow!("--sweep needs generator flags (--n, --topology, --seed)"))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.max(1))
        .build()?;
    let results: Vec<(u64, Result<RunSummary>)> = pool.install(|| {
        (0..count as u64)
            .into_par_iter()
            .map(|k| {
                let seed = spec.seed + k;
                let result = generate(&GeneratorSpec { seed, ..spec })
                    .map_err(anyhow::Error::from)
                    .and_then(|inst| {
                        run_one(args, inst, &args.out.join(format!("seed-{seed}")), true)
                    });
                (seed, result)
            })
            .collect()
    });
    std::fs::create_dir_all(&args.out)?;
    println!(
        "{:>8}  {:>8}  {:>14}  {:>14}",
        "seed", "period", "utility dist", "price dist"
    );
    let mut first_error = None;
    let mut entries = Vec::new();
    for (seed, result) in results {
        match result {
            Ok(s) => {
                let (u, p) = s
                    .metrics
                    .as_ref()
                    .map_or((f64::NAN, None), |m| (m.utility_distance, m.price_distance));
                let period = s.cycle.period.map_or("-".to_string(), |p| p.to_string());
                println!(
                    "{seed:>8}  {period:>8}  {u:>14.3e}  {:>14.3e}",
                    p.unwrap_or(f64::NAN)
                );
                entries.push(SweepEntry {
                    seed,
                    summary: Some(s),
                    error: None,
                });
            }
            Err(e) => {
                println!("{seed:>8}  error: {e:#}");
                entries.push(SweepEntry {
                    seed,
                    summary: None,
                    error: Some(format!("{e:#}")),
                });
                first_error.get_or_insert(e);
            }
        }
    }
    write_json(&args.out.join("sweep.json"), &entries)?;
    match first_error {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

pub fn eq(args: &EqArgs) -> Result<()> {
    let inst = args.source.load()?;
    std::fs::create_dir_all(&args.out)?;
    let opts = SolveOptions {
        tol: args.oracle.tol,
        max_iters: args.oracle.max_iters,
        seed: args.start_seed,
    };
    match solve_equilibrium_with(&inst.economy, &opts) {
        Ok(c) => {
            let path = args.out.join("certificate.json");
            write_json(&path, &c)?;
            println!("equilibrium -> {}", path.display());
            let fmt = |v: &[f64]| {
                v.iter()
                    .map(|x| format!("{x:.9}"))
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            field("prices", fmt(&c.p_star));
            field("utilities", fmt(&c.u_star));
            if let Some(r) = c.residuals {
                field("max residual", format!("{:.3e}", r.max()));
            }
            Ok(())
        }
        Err(Error::NonConvergence(nc)) => {
            let path = args.out.join("certificate.best.json");
            write_json(&path, &nc.best)?;
            eprintln!("best iterate written to {}", path.display());
            Err(Error::NonConvergence(nc).into())
        }
        Err(e) => Err(e.into()),
    }
}

pub fn analyze(args: &AnalyzeArgs) -> Result<()> {
    let inst = args.source.load()?;
    let traj = read_trajectory(&args.trajectory)?;
    let n = traj.records.first().map_or(0, |r| r.allocation.n());
    if n != inst.economy.n() {
        bail!(
            "trajectory has {n} players but the instance has {}",
            inst.economy.n()
        );
    }
    let cert = certificate_for(
        &inst.economy,
        args.certificate.as_deref(),
        &args.oracle,
        false,
    )?;
    let mut ly = LyapunovAcc::default();
    for r in &traj.records {
        ly.push(r);
    }
    let summary = summarize(
        &traj,
        traj.len(),
        cert.as_ref(),
        &args.analysis,
        ly.finish(),
    )?;
    print_summary(
        &format!("analysis of {}", args.trajectory.display()),
        &summary,
    );
    if let Some(path) = &args.out {
        write_json(path, &summary)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct CompareSummary {
    n: usize,
    steps: usize,
    /// `y_ji(0) = b_ij(0) / p_j(0)`, indexed (good, player).
    initial_fractions: Vec<Vec<f64>>,
    /// The same fractions indexed (player, good), i.e. `x_ij(0)`.
    initial_fractions_by_player: Vec<Vec<f64>>,
    /// First step at which the pr and tit-for-tat allocations differ.
    first_allocation_divergence: Option<usize>,
    pr: RunSummary,
    lazy: RunSummary,
    tft: RunSummary,
}

fn first_divergence(economy: &Economy, inst: &Instance, steps: usize) -> Result<Option<usize>> {
    let mut pr = Simulation::new(economy, Mode::Pr, Snapshot::Market(inst.initial.clone()))?;
    let mut tft = Simulation::new(economy, Mode::Tft, Snapshot::Tft(inst.initial_tft()?))?;
    for _ in 0..=steps {
        let (a, b) = (pr.current()?.clone(), tft.current()?.clone());
        if a.allocation.max_abs_diff(&b.allocation) > 1e-12 {
            return Ok(Some(a.t));
        }
        if a.t == steps {
            break;
        }
        pr.step()?;
        tft.step()?;
    }
    Ok(None)
}

pub fn compare_tft(args: &CompareArgs) -> Result<()> {
    let inst = args.source.load()?;
    let n = inst.economy.n();
    std::fs::create_dir_all(&args.out)?;
    let cert = certificate_for(&inst.economy, None, &args.oracle, false)?;
    if let Some(c) = &cert {
        write_json(&args.out.join("certificate.json"), c)?;
    }
    let lazy = inst.clone().with_alpha(vec![0.5; n])?;
    let plan = |economy, mode, start, name: &str| Plan {
        economy,
        mode,
        start,
        steps: args.steps,
        record: args.record,
        certificate: cert.as_ref(),
        lyapunov: false,
        analysis: &args.analysis,
        tail: args.tail,
        csv: args.out.join(format!("{name}.csv")),
    };
    let tft0 = inst.initial_tft()?;
    let pr = execute(plan(
        &inst.economy,
        Mode::Pr,
        Snapshot::Market(inst.initial.clone()),
        "pr",
    ))?;
    let lz = execute(plan(
        &lazy.economy,
        Mode::Lazy,
        Snapshot::Market(lazy.initial_with_matching_bank()?),
        "lazy",
    ))?;
    let tft = execute(plan(
        &inst.economy,
        Mode::Tft,
        Snapshot::Tft(tft0.clone()),
        "tft",
    ))?;
    let summary = CompareSummary {
        n,
        steps: args.steps,
        initial_fractions: tft0.y.to_rows(),
        initial_fractions_by_player: tft0.y.transpose().to_rows(),
        first_allocation_divergence: first_divergence(&inst.economy, &inst, args.steps)?,
        pr,
        lazy: lz,
        tft,
    };
    write_json(&args.out.join("summary.json"), &summary)?;
    print_summary("pr", &summary.pr);
    print_summary("lazy (alpha = 1/2, matching bank)", &summary.lazy);
    print_summary("tft", &summary.tft);
    match summary.first_allocation_divergence {
        Some(t) => println!("pr and tft allocations first differ at t = {t}"),
        None => println!("pr and tft allocations agree for all {} steps", args.steps),
    }
    Ok(())
}

pub fn gen(args: &GenArgs) -> Result<()> {
    let inst = args.source.load()?;
    let inst = match &args.alpha {
        Some(a) => {
            let n = inst.economy.n();
            inst.with_alpha(parse_alpha(a, n)?)?
        }
        None => inst,
    };
    inst.save(&args.out)?;
    println!(
        "instance with {} players -> {}",
        inst.economy.n(),
        args.out.display()
    );
    Ok(())
}

//! Experiment runner. Every subcommand prints one report (CSV for tables,
//! JSON elsewhere) and exits 0 only when the assertions it checks hold.
//! Randomized subcommands take an explicit --seed; identical flags and seed
//! give byte-identical output.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use batchrl::adversary::{defeat, doe_design, DefeatCertificate, DesignKind};
use batchrl::baseline::{lstd_evaluate, lsvi_identify};
use batchrl::error::Error;
use batchrl::finite_horizon::{canonical_design, solve_backward, FiniteHorizonEnv, FiniteHorizonMdp};
use batchrl::geometry::{ball_volume, bounds_check, in_sector, sector_volume, SphericalCap};
use batchrl::instances::{
    verify_realizability, ActionMode, ClassSpec, Family, MdpInstance, RealizabilityReport,
};
use batchrl::online::{solve_online, EnvHandle};
use batchrl::protocol::{evaluation_error, identification_gap, Task};
use batchrl::{sampling, Vector};

const SCHEMA: u32 = 1;

#[derive(Parser)]
#[command(
    name = "batchrl",
    version,
    about = "Hard batch RL instances: bound tables, defeat certificates, online solvers"
)]
struct Cli {
    /// Write the report to this file instead of stdout.
    #[arg(long, global = true, value_name = "FILE")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate cap-count thresholds and their closed-form envelopes (CSV).
    Nquery(NqueryArgs),
    /// Check closed-form parameters against sampled Bellman residuals.
    Verify(VerifyArgs),
    /// Build a batch design, hide a direction it never visits, emit the certificate.
    Adversary(AdversaryArgs),
    /// Defeat a batch design, then solve the same class online in d + 1 queries.
    Separation(SeparationArgs),
    /// Compare the analytic sector fraction with Monte Carlo over the ball.
    Volume(VolumeArgs),
    /// Recover every per-step parameter of a random finite-horizon instance.
    FiniteHorizon(FiniteHorizonArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FamilyArg {
    /// Evaluation over the unit ball.
    #[value(alias = "opef")]
    Ope,
    /// Identification on the positive orthant with a branch state.
    #[value(alias = "bpig")]
    Bpi,
    /// Satellite states with one legal action each; data is policy independent.
    #[value(alias = "pfh")]
    PolicyFree,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Ope => Family::OpeBall,
            FamilyArg::Bpi => Family::BpiOrthant,
            FamilyArg::PolicyFree => Family::PolicyFree,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Continuous,
    SmallE,
}

impl From<ModeArg> for ActionMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Continuous => ActionMode::Continuous,
            ModeArg::SmallE => ActionMode::SmallE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TaskArg {
    Evaluate,
    Identify,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Evaluate => Task::Evaluate,
            TaskArg::Identify => Task::Identify,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DesignArg {
    Canonical,
    Orthonormal,
    #[value(alias = "random-ball")]
    Random,
}

impl From<DesignArg> for DesignKind {
    fn from(k: DesignArg) -> Self {
        match k {
            DesignArg::Canonical => DesignKind::Canonical,
            DesignArg::Orthonormal => DesignKind::Orthonormal,
            DesignArg::Random => DesignKind::RandomBall,
        }
    }
}

/// The task each family is hard for, unless the caller overrides it.
fn default_task(family: Family, mode: ActionMode) -> Task {
    match (family, mode) {
        (Family::BpiOrthant, _) => Task::Identify,
        (Family::PolicyFree, ActionMode::SmallE) => Task::Identify,
        _ => Task::Evaluate,
    }
}

/// Least-squares answer for the task: value estimation gets the target
/// policy, identification iterates greedy backups. Both see one dataset.
fn batch_answer(
    class: &ClassSpec,
    task: Task,
    data: &batchrl::protocol::Dataset,
    pi: Option<&batchrl::mdp::Policy>,
) -> batchrl::error::Result<Vector> {
    match task {
        Task::Evaluate => {
            let pi = pi.ok_or_else(|| {
                Error::MissingProbe("evaluation needs the target policy".into())
            })?;
            lstd_evaluate(class, &data.rows, pi)
        }
        Task::Identify => lsvi_identify(class, &data.rows),
    }
}

#[derive(Args)]
struct NqueryArgs {
    /// Comma separated discount factors in (0, 1).
    #[arg(long = "gamma-list", value_delimiter = ',', required = true)]
    gamma_list: Vec<f64>,
    /// Comma separated dimensions (d >= 2).
    #[arg(long = "d-list", value_delimiter = ',', required = true)]
    d_list: Vec<usize>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn fmt_opt_bool(v: Option<bool>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn run_nquery(args: &NqueryArgs) -> Result<(String, bool)> {
    let mut csv = String::from(
        "gamma,d,i_value,nquery,sector_count,scaled_nquery,\
         upper_bound,upper_holds,lower_bound,lower_holds,\
         scaled_bound,scaled_holds,all_hold\n",
    );
    let mut all = true;
    for &gamma in &args.gamma_list {
        for &d in &args.d_list {
            let r = bounds_check(gamma, d)
                .with_context(|| format!("bounds at gamma {gamma}, d {d}"))?;
            let scaled = (-(d as f64)).exp2() * r.threshold;
            writeln!(
                csv,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.gamma,
                r.d,
                r.i_value,
                r.threshold,
                2.0 * r.threshold,
                scaled,
                fmt_opt(r.upper.map(|b| b.bound)),
                fmt_opt_bool(r.upper.map(|b| b.holds)),
                fmt_opt(r.lower_full.map(|b| b.bound)),
                fmt_opt_bool(r.lower_full.map(|b| b.holds)),
                fmt_opt(r.lower_scaled.map(|b| b.bound)),
                fmt_opt_bool(r.lower_scaled.map(|b| b.holds)),
                r.all_hold
            )?;
            all &= r.all_hold;
        }
    }
    Ok((csv, all))
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_enum)]
    family: FamilyArg,
    /// Number of random instances to check.
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Fix the discount; omitted, trials cycle through 0.5, 0.9, 0.95, 0.99.
    #[arg(long)]
    gamma: Option<f64>,
    /// Fix the dimension; omitted, trials cycle through 2..=8.
    #[arg(long)]
    d: Option<usize>,
    #[arg(long, value_enum, default_value_t = ModeArg::Continuous)]
    mode: ModeArg,
    /// Stratified Bellman samples per instance.
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long)]
    seed: u64,
}

#[derive(Serialize)]
struct VerifyReport {
    schema: u32,
    command: &'static str,
    family: Family,
    trials: usize,
    samples: usize,
    tol: f64,
    max_residual: f64,
    all_pass: bool,
    reports: Vec<RealizabilityReport>,
}

fn run_verify(args: &VerifyArgs) -> Result<(String, bool)> {
    const GAMMAS: [f64; 4] = [0.5, 0.9, 0.95, 0.99];
    let family = Family::from(args.family);
    let mode = ActionMode::from(args.mode);
    let mut rng = sampling::rng_from_seed(args.seed);
    let mut reports = Vec::with_capacity(args.trials);
    for k in 0..args.trials {
        let gamma = args.gamma.unwrap_or(GAMMAS[k % GAMMAS.len()]);
        let d = args.d.unwrap_or(2 + k % 7);
        let inst = MdpInstance::sample_random(family, gamma, d, mode, &mut rng)
            .with_context(|| format!("trial {k}: gamma {gamma}, d {d}"))?;
        reports.push(verify_realizability(
            &inst,
            args.samples,
            args.seed.wrapping_add(1 + k as u64),
            args.tol,
        ));
    }
    let max_residual = reports.iter().map(|r| r.max_residual).fold(0.0, f64::max);
    let all_pass = reports.iter().all(|r| r.pass);
    let report = VerifyReport {
        schema: SCHEMA,
        command: "verify",
        family,
        trials: args.trials,
        samples: args.samples,
        tol: args.tol,
        max_residual,
        all_pass,
        reports,
    };
    Ok((to_json(&report)?, all_pass))
}

#[derive(Args)]
struct AdversaryArgs {
    #[arg(long, value_enum)]
    family: FamilyArg,
    #[arg(long)]
    gamma: f64,
    #[arg(long)]
    d: usize,
    #[arg(long, value_enum)]
    design: DesignArg,
    /// Requested design size; the random design shrinks it below the defeat
    /// threshold.
    #[arg(long, default_value_t = 200)]
    n: usize,
    /// Defaults to the task the family is hard for.
    #[arg(long, value_enum)]
    task: Option<TaskArg>,
    #[arg(long, value_enum, default_value_t = ModeArg::Continuous)]
    mode: ModeArg,
    #[arg(long)]
    seed: u64,
}

#[derive(Serialize)]
struct AdversaryReport {
    schema: u32,
    command: &'static str,
    requested_rows: usize,
    found: bool,
    certificate: Option<DefeatCertificate>,
}

fn run_adversary(args: &AdversaryArgs) -> Result<(String, bool)> {
    let class = ClassSpec::with_mode(
        args.family.into(),
        args.gamma,
        args.d,
        args.mode.into(),
    )?;
    let task = args
        .task
        .map(Task::from)
        .unwrap_or_else(|| default_task(class.family, class.action_mode));
    let queries = doe_design(&class, args.design.into(), args.n, args.seed)?;
    let cert = defeat(&class, task, &queries, |data, pi| {
        batch_answer(&class, task, data, pi)
    })?;
    let ok = cert
        .as_ref()
        .is_some_and(|c| c.datasets_identical && c.bound_met);
    let report = AdversaryReport {
        schema: SCHEMA,
        command: "adversary",
        requested_rows: args.n,
        found: cert.is_some(),
        certificate: cert,
    };
    Ok((to_json(&report)?, ok))
}

#[derive(Args)]
struct SeparationArgs {
    #[arg(long, value_enum)]
    family: FamilyArg,
    #[arg(long)]
    gamma: f64,
    #[arg(long)]
    d: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Continuous)]
    mode: ModeArg,
    /// Batch design size before threshold clamping.
    #[arg(long, default_value_t = 200)]
    n: usize,
    /// Defaults to the task the family is hard for.
    #[arg(long, value_enum)]
    task: Option<TaskArg>,
    #[arg(long)]
    seed: u64,
}

#[derive(Serialize)]
struct OnlineReport {
    queries: usize,
    budget: usize,
    parameter_error: f64,
    suboptimality_gap: f64,
}

#[derive(Serialize)]
struct SeparationReport {
    schema: u32,
    command: &'static str,
    class: ClassSpec,
    task: Task,
    batch_forced_error: Option<f64>,
    batch_bound: f64,
    online: OnlineReport,
    certificate: Option<DefeatCertificate>,
    separated: bool,
}

fn run_separation(args: &SeparationArgs) -> Result<(String, bool)> {
    let class = ClassSpec::with_mode(
        args.family.into(),
        args.gamma,
        args.d,
        args.mode.into(),
    )?;
    let task = args
        .task
        .map(Task::from)
        .unwrap_or_else(|| default_task(class.family, class.action_mode));

    // Batch side: a random design clamped under the defeat threshold, so a
    // hiding direction always exists, answered by least squares.
    let queries = doe_design(&class, DesignKind::RandomBall, args.n, args.seed)?;
    let cert = defeat(&class, task, &queries, |data, pi| {
        batch_answer(&class, task, data, pi)
    })?;
    let batch_ok = cert
        .as_ref()
        .is_some_and(|c| c.datasets_identical && c.bound_met);
    let bound = cert.as_ref().map(|c| c.bound).unwrap_or(f64::NAN);

    // Online side: a fresh random instance of the same class, budget d + 1.
    let budget = args.d + 1;
    let mut rng = sampling::rng_from_seed(args.seed.wrapping_add(1));
    let inst = MdpInstance::sample_random(
        class.family,
        class.gamma,
        class.d,
        class.action_mode,
        &mut rng,
    )?;
    let mut env = EnvHandle::with_budget(inst.clone(), budget);
    let sol = solve_online(&mut env)?;
    let parameter_error = evaluation_error(&inst, &sol.theta)?;
    let suboptimality_gap = identification_gap(&inst, &sol.theta)?;
    let online_ok =
        sol.queries == budget && parameter_error <= 1e-8 && suboptimality_gap <= 1e-9;

    let separated = batch_ok && online_ok;
    let report = SeparationReport {
        schema: SCHEMA,
        command: "separation",
        class,
        task,
        batch_forced_error: cert.as_ref().map(|c| c.forced_error),
        batch_bound: bound,
        online: OnlineReport {
            queries: sol.queries,
            budget,
            parameter_error,
            suboptimality_gap,
        },
        certificate: cert,
        separated,
    };
    Ok((to_json(&report)?, separated))
}

#[derive(Args)]
struct VolumeArgs {
    #[arg(long)]
    d: usize,
    /// Cap height in (0, 1); the sector keeps x with x . w >= b ||x||.
    #[arg(long)]
    b: f64,
    #[arg(long = "mc-samples", default_value_t = 1_000_000)]
    mc_samples: usize,
    #[arg(long)]
    seed: u64,
}

#[derive(Serialize)]
struct VolumeReport {
    schema: u32,
    command: &'static str,
    d: usize,
    height: f64,
    samples: usize,
    analytic_fraction: f64,
    sampled_fraction: f64,
    sigma: f64,
    deviation_sigmas: f64,
    within_four_sigma: bool,
}

fn run_volume(args: &VolumeArgs) -> Result<(String, bool)> {
    let p = sector_volume(args.b, args.d)? / ball_volume(args.d);
    let mut w = Vector::zeros(args.d);
    w[0] = 1.0;
    let cap = SphericalCap::new(w, args.b)?;
    let mut rng = sampling::rng_from_seed(args.seed);
    let mut hits = 0usize;
    for _ in 0..args.mc_samples {
        let x = sampling::unit_ball(args.d, &mut rng);
        if in_sector(&x, &cap)? {
            hits += 1;
        }
    }
    let p_hat = hits as f64 / args.mc_samples as f64;
    let sigma = (p * (1.0 - p) / args.mc_samples as f64).sqrt();
    let deviation = (p_hat - p).abs() / sigma;
    let ok = deviation <= 4.0;
    let report = VolumeReport {
        schema: SCHEMA,
        command: "volume",
        d: args.d,
        height: args.b,
        samples: args.mc_samples,
        analytic_fraction: p,
        sampled_fraction: p_hat,
        sigma,
        deviation_sigmas: deviation,
        within_four_sigma: ok,
    };
    Ok((to_json(&report)?, ok))
}

#[derive(Args)]
struct FiniteHorizonArgs {
    #[arg(long)]
    d: usize,
    #[arg(long, short = 'H', visible_alias = "H")]
    horizon: usize,
    /// Discount in (0, 1]; 1 means undiscounted.
    #[arg(long, default_value_t = 0.9)]
    gamma: f64,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long)]
    seed: u64,
}

#[derive(Serialize)]
struct HorizonTrial {
    queries: usize,
    max_parameter_error: f64,
}

#[derive(Serialize)]
struct FiniteHorizonReport {
    schema: u32,
    command: &'static str,
    d: usize,
    horizon: usize,
    gamma: f64,
    queries_expected: usize,
    max_parameter_error: f64,
    all_exact: bool,
    trials: Vec<HorizonTrial>,
}

fn run_finite_horizon(args: &FiniteHorizonArgs) -> Result<(String, bool)> {
    let expected = args.d * args.horizon;
    let design = canonical_design(args.d);
    let mut rng = sampling::rng_from_seed(args.seed);
    let mut trials = Vec::with_capacity(args.trials);
    for k in 0..args.trials {
        let mdp = FiniteHorizonMdp::sample_random(args.d, args.horizon, args.gamma, &mut rng);
        let truth = mdp.thetas();
        let mut env = FiniteHorizonEnv::new(mdp);
        let sol = solve_backward(&mut env, &design).with_context(|| format!("trial {k}"))?;
        let max_err = sol
            .thetas
            .iter()
            .zip(&truth)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        trials.push(HorizonTrial {
            queries: sol.queries,
            max_parameter_error: max_err,
        });
    }
    let max_err = trials
        .iter()
        .map(|t| t.max_parameter_error)
        .fold(0.0, f64::max);
    let all_exact = trials
        .iter()
        .all(|t| t.queries == expected && t.max_parameter_error <= 1e-10);
    let report = FiniteHorizonReport {
        schema: SCHEMA,
        command: "finite-horizon",
        d: args.d,
        horizon: args.horizon,
        gamma: args.gamma,
        queries_expected: expected,
        max_parameter_error: max_err,
        all_exact,
        trials,
    };
    Ok((to_json(&report)?, all_exact))
}

fn to_json<T: Serialize>(report: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

fn run(cli: &Cli) -> Result<(String, bool)> {
    match &cli.command {
        Command::Nquery(args) => run_nquery(args),
        Command::Verify(args) => run_verify(args),
        Command::Adversary(args) => run_adversary(args),
        Command::Separation(args) => run_separation(args),
        Command::Volume(args) => run_volume(args),
        Command::FiniteHorizon(args) => run_finite_horizon(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok((report, ok)) => {
            let emitted = match &cli.out {
                Some(path) => std::fs::write(path, &report)
                    .with_context(|| format!("writing {}", path.display())),
                None => {
                    print!("{report}");
                    Ok(())
                }
            };
            if let Err(e) = emitted {
                eprintln!("error: {e:#}");
                return ExitCode::from(2);
            }
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

//! Command-line batch driver emitting newline-delimited JSON reports.
//!
//! Every subcommand runs a batch of independent items, writes one JSON
//! record per line, and ends with a summary record. Batch items draw
//! from counter-derived seed streams and are reduced in index order, so
//! a report depends only on the flags and the seed, never on the thread
//! schedule. `ADHM_KIT_THREADS` bounds the worker pool.
//!
//! Exit status: 0 when every record is clean, 1 when any record is
//! marked as a violation (a guaranteed property failed to hold, or an
//! item errored), 2 for invalid configuration.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::adhm_s4::{
    check_c1_s4, check_c2_s4, integrability_residual_s4, level_residual_s4, stabilizer_dim_s4,
    AdhmDatumS4, LevelS4,
};
use crate::check::Verdict;
use crate::error::{Error, Result};
use crate::field_recon::{
    action_density, asd_residual, charge_integral, gauge_field_at, reference_instanton,
    ChargeReport,
};
use crate::flow::{
    boundedness_trace, derive_seed, df_surjectivity_check, gaussian_matrix, kempf_ness_flow_p2,
    kempf_ness_flow_s4, random_integrable_p2, random_integrable_s4, resolution_project,
    sample_solution_p2, sample_solution_s4, tangent_dimension_p2, tangent_dimension_s4,
    BoundednessTrace, FlowConfig, FlowReport,
};
use crate::linalg::Tolerance;
use crate::monad_p2::{
    check_c1p, check_c2p, combined_identity_residual, integrability_residual_p2,
    level_residual_p2, max_rank_margins, stabilizer_dim_p2, MonadDatumP2, LevelP2,
};
use crate::stab_limit::{verify_null_homotopy_p2, verify_null_homotopy_s4, SplitParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum GeometryArg {
    /// Quadruple data `(a1, a2, b, c)`.
    S4,
    /// Quintuple data `(a1, a2, d, b, c)`.
    P2,
}

#[derive(Parser)]
#[command(
    name = "adhm-kit",
    version,
    about = "Matrix-model toolkit for framed instanton moduli: samplers, regularity \
             checks, moment flows, null-homotopy verification, and gauge-field \
             reconstruction. Reports are newline-delimited JSON with a trailing summary."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw random integrable data and emit them as records.
    Sample(CommonOpts),
    /// Flow fresh samples to the level (or re-read emitted records) and
    /// run the regularity checks on them.
    Check(CheckOpts),
    /// Flow samples onto the moment level set and report convergence.
    Flow(CommonOpts),
    /// Walk the rank-stabilization paths on sampled solutions and
    /// verify level preservation, endpoint constancy, and regularity.
    HomotopyVerify(CommonOpts),
    /// Tangent-space dimension and derivative-surjectivity on solutions.
    Dimension(CommonOpts),
    /// Project solutions down to the unperturbed level, tracking the
    /// collapse map and boundary flags.
    Resolve(CommonOpts),
    /// Reconstruct the gauge field of the rank-2k reference datum and
    /// integrate its topological charge.
    Field(CommonOpts),
    /// Evaluate the combined moment identity on random data and the
    /// norm trace identities on sampled solutions.
    Identities(CommonOpts),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Sample(_) => "sample",
            Command::Check(_) => "check",
            Command::Flow(_) => "flow",
            Command::HomotopyVerify(_) => "homotopy-verify",
            Command::Dimension(_) => "dimension",
            Command::Resolve(_) => "resolve",
            Command::Field(_) => "field",
            Command::Identities(_) => "identities",
        }
    }

    fn opts(&self) -> &CommonOpts {
        match self {
            Command::Sample(o)
            | Command::Flow(o)
            | Command::HomotopyVerify(o)
            | Command::Dimension(o)
            | Command::Resolve(o)
            | Command::Field(o)
            | Command::Identities(o) => o,
            Command::Check(o) => &o.common,
        }
    }
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Moduli problem to work in.
    #[arg(long, value_enum, default_value_t = GeometryArg::S4)]
    geometry: GeometryArg,
    /// Dimension of the auxiliary space W.
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Framing rank.
    #[arg(long, default_value_t = 2)]
    r: usize,
    /// Level parameter; defaults to 0.5 (field requires and defaults to 0).
    #[arg(long, allow_hyphen_values = true)]
    zeta: Option<f64>,
    /// Base seed; per-item streams are derived by counter.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Tolerance override. Defaults: rank cutoff 1e-9 for checks, level
    /// residual 1e-8 for flows, residual bound 1e-10 for homotopy-verify,
    /// and Jacobian rank cutoff 1e-3 for dimension (finite-difference
    /// noise sits far above 1e-9).
    #[arg(long)]
    tol: Option<f64>,
    /// Report file (newline-delimited JSON); stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Batch size; defaults to 8 items (field: 20000 Monte Carlo points).
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Args, Clone)]
struct CheckOpts {
    #[command(flatten)]
    common: CommonOpts,
    /// Re-read sample or flow records from this report instead of
    /// drawing fresh data, revalidating every record after parsing.
    #[arg(long)]
    input: Option<PathBuf>,
}

/// Resolved run parameters shared by all subcommands.
struct Ctx {
    geometry: GeometryArg,
    k: usize,
    r: usize,
    zeta: f64,
    seed: u64,
    samples: usize,
    tol: Option<f64>,
}

impl Ctx {
    fn resolve(command: &Command) -> Result<Ctx> {
        let o = command.opts();
        let is_field = matches!(command, Command::Field(_));
        let ctx = Ctx {
            geometry: o.geometry,
            k: o.k,
            r: o.r,
            zeta: o.zeta.unwrap_or(if is_field { 0.0 } else { 0.5 }),
            seed: o.seed,
            samples: o.samples.unwrap_or(if is_field { 20_000 } else { 8 }),
            tol: o.tol,
        };
        if ctx.k < 1 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if ctx.r < 1 {
            return Err(Error::Config("r must be at least 1".into()));
        }
        if ctx.samples < 1 {
            return Err(Error::Config("samples must be at least 1".into()));
        }
        if !ctx.zeta.is_finite() {
            return Err(Error::Config("zeta must be finite".into()));
        }
        if let Some(t) = ctx.tol {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::Config(format!("tol must be positive, got {t}")));
            }
        }
        match ctx.geometry {
            GeometryArg::S4 => {
                if ctx.r < ctx.k && !is_field {
                    return Err(Error::Config(format!(
                        "sampling quadruples requires r >= k, got k={}, r={}",
                        ctx.k, ctx.r
                    )));
                }
            }
            GeometryArg::P2 => {
                if ctx.zeta.abs() >= 1.0 {
                    return Err(Error::Config(format!(
                        "quintuple runs require |zeta| < 1, got {}",
                        ctx.zeta
                    )));
                }
            }
        }
        match command {
            Command::Field(_) => {
                if ctx.geometry != GeometryArg::S4 {
                    return Err(Error::Config(
                        "field reconstruction is defined for --geometry s4 only".into(),
                    ));
                }
                if ctx.zeta != 0.0 {
                    return Err(Error::Config(
                        "field reconstruction requires zeta = 0".into(),
                    ));
                }
                if ctx.r != 2 * ctx.k {
                    return Err(Error::Config(format!(
                        "the reference datum has framing rank 2k; pass --r {}",
                        2 * ctx.k
                    )));
                }
            }
            Command::Resolve(_) | Command::Identities(_) => {
                if ctx.geometry != GeometryArg::P2 {
                    return Err(Error::Config(format!(
                        "{} works on --geometry p2 only",
                        command.name()
                    )));
                }
            }
            Command::HomotopyVerify(_)
                if ctx.geometry == GeometryArg::P2 && !(ctx.zeta > 0.0 && ctx.zeta < 1.0) =>
            {
                return Err(Error::Config(format!(
                    "quintuple homotopies require 0 < zeta < 1, got {}",
                    ctx.zeta
                )));
            }
            _ => {}
        }
        Ok(ctx)
    }

    fn rank_tol(&self) -> Result<Tolerance> {
        Tolerance::new(self.tol.unwrap_or(1e-9), 0.0)
    }

    fn flow_config(&self) -> Result<FlowConfig> {
        let cfg = FlowConfig {
            tol: self.tol.unwrap_or(1e-8),
            ..FlowConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Flow attempts per batch item before giving up on a solution.
const SOLUTION_ATTEMPTS: usize = 16;

// Per-line record payloads. Each line carries a `record` discriminator
// so reports stream through line-oriented tools.

#[derive(Serialize)]
struct ErrorRecord {
    record: &'static str,
    index: usize,
    message: String,
    violation: bool,
}

#[derive(Serialize)]
struct SampleRecord<D: Serialize> {
    record: &'static str,
    index: usize,
    geometry: GeometryArg,
    zeta: f64,
    datum: D,
    integrability_residual: f64,
    norm: f64,
}

#[derive(Serialize)]
struct FlowRecord<D: Serialize> {
    record: &'static str,
    index: usize,
    geometry: GeometryArg,
    zeta: f64,
    datum: D,
    report: FlowReport,
    level_residual: f64,
    integrability_residual: f64,
    violation: bool,
}

#[derive(Serialize)]
struct CheckRecord {
    record: &'static str,
    index: usize,
    converged: bool,
    level_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    c1: Option<Verdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    c2: Option<Verdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    c1p: Option<Verdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    c2p: Option<Verdict>,
    stabilizer_dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    margins: Option<(f64, f64)>,
    violation: bool,
}

#[derive(Serialize)]
struct HomotopyRecord {
    record: &'static str,
    index: usize,
    report: crate::stab_limit::HomotopyReport,
    residual_bound: f64,
    violation: bool,
}

#[derive(Serialize)]
struct DimensionRecord {
    record: &'static str,
    index: usize,
    tangent_dimension: usize,
    expected: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    df: Option<Verdict>,
    violation: bool,
}

#[derive(Serialize)]
struct ResolveRecord {
    record: &'static str,
    index: usize,
    report: FlowReport,
    boundary_flag: bool,
    p_growth_monotone: bool,
    collapsed_norm: f64,
    c1p_preserved: bool,
    c2p_preserved: bool,
    violation: bool,
}

#[derive(Serialize)]
struct FieldPointRecord {
    record: &'static str,
    x: [f64; 4],
    asd_residual: f64,
    action_density: f64,
    violation: bool,
}

#[derive(Serialize)]
struct ChargeRecord {
    record: &'static str,
    report: ChargeReport,
    expected: f64,
    violation: bool,
}

#[derive(Serialize)]
struct IdentityRecord {
    record: &'static str,
    index: usize,
    residual: f64,
    bound: f64,
    violation: bool,
}

#[derive(Serialize)]
struct TraceRecord {
    record: &'static str,
    index: usize,
    converged: bool,
    trace: BoundednessTrace,
    sum_residual: f64,
    collapse_residual: f64,
    violation: bool,
}

#[derive(Serialize)]
struct Summary {
    record: &'static str,
    command: &'static str,
    geometry: GeometryArg,
    k: usize,
    r: usize,
    zeta: f64,
    seed: u64,
    samples: usize,
    violations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    converged: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    c1_fails: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    c2_fails: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    c1p_fails: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    c2p_fails: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    unknown_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_level_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_integrability_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dimension_matches: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    boundary_flags: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    charge: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_residual: Option<f64>,
}

impl Summary {
    fn new(command: &Command, ctx: &Ctx, violations: usize) -> Summary {
        Summary {
            record: "summary",
            command: command.name(),
            geometry: ctx.geometry,
            k: ctx.k,
            r: ctx.r,
            zeta: ctx.zeta,
            seed: ctx.seed,
            samples: ctx.samples,
            violations,
            converged: None,
            c1_fails: None,
            c2_fails: None,
            c1p_fails: None,
            c2p_fails: None,
            unknown_rate: None,
            max_level_residual: None,
            max_integrability_residual: None,
            dimension_matches: None,
            boundary_flags: None,
            charge: None,
            max_residual: None,
        }
    }
}

fn to_line<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("report records serialize")
}

fn error_line(index: usize, err: &Error) -> String {
    to_line(&ErrorRecord {
        record: "error",
        index,
        message: err.to_string(),
        violation: true,
    })
}

/// Entry point: parse, run, and map the outcome to an exit status.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    if let Ok(threads) = std::env::var("ADHM_KIT_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
    match execute(&cli.command) {
        Ok((lines, violations)) => {
            if let Err(e) = write_lines(&cli.command.opts().out, &lines) {
                eprintln!("error: {e}");
                return 2;
            }
            if violations > 0 {
                1
            } else {
                0
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn write_lines(out: &Option<PathBuf>, lines: &[String]) -> Result<()> {
    match out {
        Some(path) => {
            let mut file = File::create(path)?;
            for line in lines {
                writeln!(file, "{line}")?;
            }
            Ok(())
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            for line in lines {
                writeln!(lock, "{line}")?;
            }
            Ok(())
        }
    }
}

fn execute(command: &Command) -> Result<(Vec<String>, usize)> {
    let ctx = Ctx::resolve(command)?;
    match command {
        Command::Sample(_) => cmd_sample(command, &ctx),
        Command::Check(opts) => match &opts.input {
            Some(path) => cmd_check_input(command, &ctx, path),
            None => cmd_check(command, &ctx),
        },
        Command::Flow(_) => cmd_flow(command, &ctx),
        Command::HomotopyVerify(_) => cmd_homotopy(command, &ctx),
        Command::Dimension(_) => cmd_dimension(command, &ctx),
        Command::Resolve(_) => cmd_resolve(command, &ctx),
        Command::Field(_) => cmd_field(command, &ctx),
        Command::Identities(_) => cmd_identities(command, &ctx),
    }
}

/// Runs `item` over the batch in parallel, then reduces in index order.
fn batch<F>(samples: usize, item: F) -> Vec<(String, bool)>
where
    F: Fn(usize) -> (String, bool) + Send + Sync,
{
    (0..samples).into_par_iter().map(item).collect()
}

fn finish(
    command: &Command,
    ctx: &Ctx,
    items: Vec<(String, bool)>,
    decorate: impl FnOnce(&mut Summary),
) -> Result<(Vec<String>, usize)> {
    let violations = items.iter().filter(|(_, bad)| *bad).count();
    let mut lines: Vec<String> = items.into_iter().map(|(line, _)| line).collect();
    let mut summary = Summary::new(command, ctx, violations);
    decorate(&mut summary);
    lines.push(to_line(&summary));
    Ok((lines, violations))
}

fn cmd_sample(command: &Command, ctx: &Ctx) -> Result<(Vec<String>, usize)> {
    let items = batch(ctx.samples, |i| {
        let seed = derive_seed(ctx.seed, i as u64);
        match ctx.geometry {
            GeometryArg::S4 => match random_integrable_s4(ctx.k, ctx.r, seed, 1.0) {
                Ok(m) => (
                    to_line(&SampleRecord {
                        record: "sample",
                        index: i,
                        geometry: ctx.geometry,
                        zeta: ctx.zeta,
                        integrability_residual: integrability_residual_s4(&m),
                        norm: m.norm(),
                        datum: m,
                    }),
                    false,
                ),
                Err(e) => (error_line(i, &e), true),
            },
            GeometryArg::P2 => match random_integrable_p2(ctx.k, ctx.r, seed, 1.0) {
                Ok(m) => (
                    to_line(&SampleRecord {
                        record: "sample",
                        index: i,
                        geometry: ctx.geometry,
                        zeta: ctx.zeta,
                        integrability_residual: integrability_residual_p2(&m),
                        norm: m.norm(),
                        datum: m,
                    }),
                    false,
                ),
                Err(e) => (error_line(i, &e), true),
            },
        }
    });
    finish(command, ctx, items, |_| {})
}

/// Lemma-backed violation rules for verdicts on a converged solution.
fn p2_solution_violation(zeta: f64, c1p: Verdict, c2p: Verdict, stabilizer: usize) -> bool {
    (zeta > 0.0 && c1p == Verdict::Fails)
        || (zeta < 0.0 && c2p == Verdict::Fails)
        || (zeta != 0.0 && stabilizer > 0)
}

struct CheckCounts {
    converged: usize,
    c1_fails: usize,
    c2_fails: usize,
    unknown: usize,
    checks: usize,
}

fn tally_checks(lines: &[(String, bool)]) -> CheckCounts {
    // Recover counts from the serialized records so the summary cannot
    // drift from what was written.
    let mut counts = CheckCounts {
        converged: 0,
        c1_fails: 0,
        c2_fails: 0,
        unknown: 0,
        checks: 0,
    };
    for (line, _) in lines {
        let Ok(v) = serde_json::from_str::<serde_json::Value>(line) else {
            continue;
        };
        if v["record"] != "check" {
            continue;
        }
        // Verdict tallies cover solutions only: the lemma statements the
        // summary is read against say nothing about off-level data.
        if v["converged"] != true {
            continue;
        }
        counts.checks += 1;
        counts.converged += 1;
        for key in ["c1", "c1p"] {
            if v[key] == "Fails" {
                counts.c1_fails += 1;
            }
            if v[key] == "Unknown" {
                counts.unknown += 1;
            }
        }
        for key in ["c2", "c2p"] {
            if v[key] == "Fails" {
                counts.c2_fails += 1;
            }
            if v[key] == "Unknown" {
                counts.unknown += 1;
            }
        }
    }
    counts
}

fn check_summary(ctx: &Ctx, counts: &CheckCounts, summary: &mut Summary) {
    summary.converged = Some(counts.converged);
    match ctx.geometry {
        GeometryArg::S4 => {
            summary.c1_fails = Some(counts.c1_fails);
            summary.c2_fails = Some(counts.c2_fails);
        }
        GeometryArg::P2 => {
            summary.c1p_fails = Some(counts.c1_fails);
            summary.c2p_fails = Some(counts.c2_fails);
        }
    }
    summary.unknown_rate = Some(if counts.checks == 0 {
        0.0
    } else {
        counts.unknown as f64 / (2 * counts.checks) as f64
    });
}

fn check_record_s4(
    index: usize,
    converged: bool,
    level_residual: Option<f64>,
    lemma_regime: bool,
    zeta: f64,
    m: &AdhmDatumS4,
    tol: Tolerance,
) -> (String, bool) {
    let c1 = check_c1_s4(m, tol).verdict;
    let c2 = check_c2_s4(m, tol).verdict;
    let stabilizer = stabilizer_dim_s4(m, tol);
    let violation = lemma_regime && converged && zeta != 0.0 && stabilizer > 0;
    (
        to_line(&CheckRecord {
            record: "check",
            index,
            converged,
            level_residual,
            c1: Some(c1),
            c2: Some(c2),
            c1p: None,
            c2p: None,
            stabilizer_dim: stabilizer,
            margins: None,
            violation,
        }),
        violation,
    )
}

fn check_record_p2(
    index: usize,
    converged: bool,
    level_residual: Option<f64>,
    lemma_regime: bool,
    zeta: f64,
    m: &MonadDatumP2,
    tol: Tolerance,
) -> (String, bool) {
    let c1p = check_c1p(m, tol).verdict;
    let c2p = check_c2p(m, tol).verdict;
    let stabilizer = stabilizer_dim_p2(m, tol);
    let violation =
        lemma_regime && converged && p2_solution_violation(zeta, c1p, c2p, stabilizer);
    (
        to_line(&CheckRecord {
            record: "check",
            index,
            converged,
            level_residual,
            c1: None,
            c2: None,
            c1p: Some(c1p),
            c2p: Some(c2p),
            stabilizer_dim: stabilizer,
            margins: Some(max_rank_margins(m)),
            violation,
        }),
        violation,
    )
}

fn cmd_check(command: &Command, ctx: &Ctx) -> Result<(Vec<String>, usize)> {
    let tol = ctx.rank_tol()?;
    let cfg = ctx.flow_config()?;
    let items = batch(ctx.samples, |i| {
        let seed = derive_seed(ctx.seed, i as u64);
        match ctx.geometry {
            GeometryArg::S4 => {
                let run = || -> Result<(String, bool)> {
                    let level = LevelS4::new(ctx.zeta)?;
                    let start = random_integrable_s4(ctx.k, ctx.r, seed, 1.0)?;
                    let (m, report) = kempf_ness_flow_s4(&start, &level, &cfg)?;
                    Ok(check_record_s4(
                        i,
                        report.converged,
                        Some(level_residual_s4(&m, &level)),
                        true,
                        ctx.zeta,
                        &m,
                        tol,
                    ))
                };
                run().unwrap_or_else(|e| (error_line(i, &e), true))
            }
            GeometryArg::P2 => {
                let run = || -> Result<(String, bool)> {
                    let level = LevelP2::new(ctx.zeta)?;
                    let start = random_integrable_p2(ctx.k, ctx.r, seed, 1.0)?;
                    let (m, report) = kempf_ness_flow_p2(&start, &level, &cfg)?;
                    Ok(check_record_p2(
                        i,
                        report.converged,
                        Some(level_residual_p2(&m, &level)),
                        true,
                        ctx.zeta,
                        &m,
                        tol,
                    ))
                };
                run().unwrap_or_else(|e| (error_line(i, &e), true))
            }
        }
    });
    let counts = tally_checks(&items);
    finish(command, ctx, items, |s| check_summary(ctx, &counts, s))
}

/// Round-trip mode: re-read records and revalidate their contracts.
///
/// `sample` records are checked as raw integrable data (no lemma rules:
/// they are not on any level); `flow` records are checked as solutions
/// at the zeta they were flowed to, after recomputing their residuals.
/// Records declare their own geometry, so a mixed file revalidates
/// correctly; `--geometry` only covers records missing the field.
fn cmd_check_input(command: &Command, ctx: &Ctx, path: &PathBuf) -> Result<(Vec<String>, usize)> {
    let tol = ctx.rank_tol()?;
    let reader = BufReader::new(File::open(path)?);
    let mut items: Vec<(String, bool)> = Vec::new();
    let mut index = 0usize;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = match serde_json::from_str(&line) {
            Ok(v) => v,
            Err(e) => {
                items.push((error_line(index, &Error::Json(e)), true));
                index += 1;
                continue;
            }
        };
        let kind = value["record"].as_str().unwrap_or_default().to_string();
        if kind != "sample" && kind != "flow" {
            continue;
        }
        let is_solution = kind == "flow";
        let converged = value["report"]["converged"].as_bool().unwrap_or(false);
        let zeta = value["zeta"].as_f64().unwrap_or(0.0);
        let geometry = match value["geometry"].as_str() {
            Some("s4") => GeometryArg::S4,
            Some("p2") => GeometryArg::P2,
            _ => ctx.geometry,
        };
        let item = (|| -> Result<(String, bool)> {
            match geometry {
                GeometryArg::S4 => {
                    let m: AdhmDatumS4 = serde_json::from_value(value["datum"].clone())?;
                    let scale = 1.0 + m.norm().powi(2);
                    if integrability_residual_s4(&m) > 1e-8 * scale {
                        return Err(Error::Precondition(format!(
                            "record {index} fails its integrability contract"
                        )));
                    }
                    let level_residual = if is_solution {
                        let level = LevelS4::new(zeta)?;
                        let res = level_residual_s4(&m, &level);
                        if converged && res > 1e-6 * scale {
                            return Err(Error::Precondition(format!(
                                "record {index} is not on its recorded level"
                            )));
                        }
                        Some(res)
                    } else {
                        None
                    };
                    Ok(check_record_s4(
                        index,
                        is_solution && converged,
                        level_residual,
                        is_solution,
                        zeta,
                        &m,
                        tol,
                    ))
                }
                GeometryArg::P2 => {
                    let m: MonadDatumP2 = serde_json::from_value(value["datum"].clone())?;
                    let scale = 1.0 + m.norm().powi(2);
                    if integrability_residual_p2(&m) > 1e-8 * scale {
                        return Err(Error::Precondition(format!(
                            "record {index} fails its integrability contract"
                        )));
                    }
                    let level_residual = if is_solution {
                        let level = LevelP2::new(zeta)?;
                        let res = level_residual_p2(&m, &level);
                        if converged && res > 1e-6 * scale {
                            return Err(Error::Precondition(format!(
                                "record {index} is not on its recorded level"
                            )));
                        }
                        Some(res)
                    } else {
                        None
                    };
                    Ok(check_record_p2(
                        index,
                        is_solution && converged,
                        level_residual,
                        is_solution,
                        zeta,
                        &m,
                        tol,
                    ))
                }
            }
        })();
        items.push(item.unwrap_or_else(|e| (error_line(index, &e), true)));
        index += 1;
    }
    let counts = tally_checks(&items);
    let rechecked = items.len();
    finish(command, ctx, items, |s| {
        s.samples = rechecked;
        check_summary(ctx, &counts, s)
    })
}

fn cmd_flow(command: &Command, ctx: &Ctx) -> Result<(Vec<String>, usize)> {
    let cfg = ctx.flow_config()?;
    let items = batch(ctx.samples, |i| {
        let seed = derive_seed(ctx.seed, i as u64);
        let run = || -> Result<(String, bool)> {
            match ctx.geometry {
                GeometryArg::S4 => {
                    let level = LevelS4::new(ctx.zeta)?;
                    let start = random_integrable_s4(ctx.k, ctx.r, seed, 1.0)?;
                    let (m, report) = kempf_ness_flow_s4(&start, &level, &cfg)?;
                    Ok((
                        to_line(&FlowRecord {
                            record: "flow",
                            index: i,
                            geometry: ctx.geometry,
                            zeta: ctx.zeta,
                            report,
                            level_residual: level_residual_s4(&m, &level),
                            integrability_residual: integrability_residual_s4(&m),
                            datum: m,
                            violation: false,
                        }),
                        false,
                    ))
                }
                GeometryArg::P2 => {
                    let level = LevelP2::new(ctx.zeta)?;
                    let start = random_integrable_p2(ctx.k, ctx.r, seed, 1.0)?;
                    let (m, report) = kempf_ness_flow_p2(&start, &level, &cfg)?;
                    Ok((
                        to_line(&FlowRecord {
                            record: "flow",
                            index: i,
                            geometry: ctx.geometry,
                            zeta: ctx.zeta,
                            report,
                            level_residual: level_residual_p2(&m, &level),
                            integrability_residual: integrability_residual_p2(&m),
                            datum: m,
                            violation: false,
                        }),
                        false,
                    ))
                }
            }
        };
        run().unwrap_or_else(|e| (error_line(i, &e), true))
    });
    let converged = items
        .iter()
        .filter(|(line, _)| line.contains("\"converged\":true"))
        .count();
    finish(command, ctx, items, |s| s.converged = Some(converged))
}

fn cmd_homotopy(command: &Command, ctx: &Ctx) -> Result<(Vec<String>, usize)> {
    // The paths preserve the level ray exactly, so the reported residual
    // is the solution's own: flow well below the default bound.
    let cfg = FlowConfig {
        tol: 1e-12,
        ..FlowConfig::default()
    };
    let bound_tol = ctx.tol.unwrap_or(1e-10);
    let grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    let items = batch(ctx.samples, |i| {
        let seed = derive_seed(ctx.seed, i as u64);
        let run = || -> Result<(String, bool)> {
            let (report, norm) = match ctx.geometry {
                GeometryArg::S4 => {
                    let level = LevelS4::new(ctx.zeta)?;
                    let (m, _) =
                        sample_solution_s4(ctx.k, ctx.r, &level, &cfg, seed, SOLUTION_ATTEMPTS)?;
                    let split = SplitParams::for_level(&level);
                    (
                        verify_null_homotopy_s4(&m, &level, &grid, &split)?,
                        m.norm(),
                    )
                }
                GeometryArg::P2 => {
                    let level = LevelP2::new(ctx.zeta)?;
                    let (m, _) =
                        sample_solution_p2(ctx.k, ctx.r, &level, &cfg, seed, SOLUTION_ATTEMPTS)?;
                    (verify_null_homotopy_p2(&m, &level, &grid)?, m.norm())
                }
            };
            let bound = bound_tol * (1.0 + norm.powi(2));
            let violation = report.max_level_residual > bound
                || report.max_integrability_residual > bound
                || !report.endpoint_constancy
                || report.regularity_failures > 0;
            Ok((
                to_line(&HomotopyRecord {
                    record: "homotopy",
                    index: i,
                    report,
                    residual_bound: bound,
                    violation,
                }),
                violation,
            ))
        };
        run().unwrap_or_else(|e| (error_line(i, &e), true))
    });
    let mut max_level = 0f64;
    let mut max_integ = 0f64;
    for (line, _) in &items {
        if let Ok(v) = serde_json::from_str::<serde_json::Value>(line) {
            max_level = max_level.max(v["report"]["max_level_residual"].as_f64().unwrap_or(0.0));
            max_integ = max_integ.max(
                v["report"]["max_integrability_residual"]
                    .as_f64()
                    .unwrap_or(0.0),
            );
        }
    }
    finish(command, ctx, items, |s| {
        s.max_level_residual = Some(max_level);
        s.max_integrability_residual = Some(max_integ);
    })
}

fn cmd_dimension(command: &Command, ctx: &Ctx) -> Result<(Vec<String>, usize)> {
    let cfg = FlowConfig::default();
    let jac_tol = Tolerance::new(ctx.tol.unwrap_or(1e-3), 0.0)?;
    let expected = 4 * ctx.k * ctx.r;
    let items = batch(ctx.samples, |i| {
        let seed = derive_seed(ctx.seed, i as u64);
        let run = || -> Result<(String, bool)> {
            let (dim, df) = match ctx.geometry {
                GeometryArg::S4 => {
                    let level = LevelS4::new(ctx.zeta)?;
                    let (m, _) =
                        sample_solution_s4(ctx.k, ctx.r, &level, &cfg, seed, SOLUTION_ATTEMPTS)?;
                    (tangent_dimension_s4(&m, &level, jac_tol)?, None)
                }
                GeometryArg::P2 => {
                    let level = LevelP2::new(ctx.zeta)?;
                    let (m, _) =
                        sample_solution_p2(ctx.k, ctx.r, &level, &cfg, seed, SOLUTION_ATTEMPTS)?;
                    (
                        tangent_dimension_p2(&m, &level, jac_tol)?,
                        Some(df_surjectivity_check(&m, Tolerance::default()).verdict),
                    )
                }
            };
            let violation = dim != expected || df.is_some_and(|v| v != Verdict::Holds);
            Ok((
                to_line(&DimensionRecord {
                    record: "dimension",
                    index: i,
                    tangent_dimension: dim,
                    expected,
                    df,
                    violation,
                }),
                violation,
            ))
        };
        run().unwrap_or_else(|e| (error_line(i, &e), true))
    });
    let matches = items
        .iter()
        .filter(|(line, bad)| !bad && line.contains("\"record\":\"dimension\""))
        .count();
    finish(command, ctx, items, |s| {
        s.dimension_matches = Some(matches)
    })
}

fn cmd_resolve(command: &Command, ctx: &Ctx) -> Result<(Vec<String>, usize)> {
    let cfg = FlowConfig::default();
    let tol = ctx.rank_tol()?;
    let items = batch(ctx.samples, |i| {
        let seed = derive_seed(ctx.seed, i as u64);
        let run = || -> Result<(String, bool)> {
            let level = LevelP2::new(ctx.zeta)?;
            let (m, _) = sample_solution_p2(ctx.k, ctx.r, &level, &cfg, seed, SOLUTION_ATTEMPTS)?;
            let before = (check_c1p(&m, tol).verdict, check_c2p(&m, tol).verdict);
            let outcome = resolution_project(&m, &level, &cfg)?;
            let after = (
                check_c1p(&outcome.output, tol).verdict,
                check_c2p(&outcome.output, tol).verdict,
            );
            let c1p_preserved = before.0 == after.0;
            let c2p_preserved = before.1 == after.1;
            let violation = !(c1p_preserved && c2p_preserved);
            Ok((
                to_line(&ResolveRecord {
                    record: "resolve",
                    index: i,
                    report: outcome.report,
                    boundary_flag: outcome.boundary_flag,
                    p_growth_monotone: outcome.p_growth_monotone,
                    collapsed_norm: outcome.collapsed.norm(),
                    c1p_preserved,
                    c2p_preserved,
                    violation,
                }),
                violation,
            ))
        };
        run().unwrap_or_else(|e| (error_line(i, &e), true))
    });
    let flags = items
        .iter()
        .filter(|(line, _)| line.contains("\"boundary_flag\":true"))
        .count();
    finish(command, ctx, items, |s| s.boundary_flags = Some(flags))
}

fn cmd_field(command: &Command, ctx: &Ctx) -> Result<(Vec<String>, usize)> {
    let m = reference_instanton(ctx.k)?;
    let probes = [
        [0.0, 0.0, 0.0, 0.0],
        [0.5, -0.3, 0.4, 0.2],
        [1.2, 0.0, -0.8, 0.0],
    ];
    let mut items: Vec<(String, bool)> = Vec::new();
    for (i, x) in probes.into_iter().enumerate() {
        let item = (|| -> Result<(String, bool)> {
            let fp = gauge_field_at(&m, x, 1e-3)?;
            let res = asd_residual(&fp);
            let violation = res > 1e-3;
            Ok((
                to_line(&FieldPointRecord {
                    record: "field-point",
                    x,
                    asd_residual: res,
                    action_density: action_density(&fp),
                    violation,
                }),
                violation,
            ))
        })();
        items.push(item.unwrap_or_else(|e| (error_line(i, &e), true)));
    }
    let mut charge = None;
    let item = (|| -> Result<(String, bool)> {
        let report = charge_integral(&m, 6.0, ctx.samples, ctx.seed)?;
        let expected = ctx.k as f64;
        let violation = (report.charge - expected).abs() > 3.0 * report.stderr + 0.02 * expected
            || report.asd_max > 1e-3;
        charge = Some(report.charge);
        Ok((
            to_line(&ChargeRecord {
                record: "charge",
                report,
                expected,
                violation,
            }),
            violation,
        ))
    })();
    items.push(item.unwrap_or_else(|e| (error_line(probes.len(), &e), true)));
    finish(command, ctx, items, |s| s.charge = charge)
}

fn cmd_identities(command: &Command, ctx: &Ctx) -> Result<(Vec<String>, usize)> {
    // The trace identities are read at 1e-8, so solutions must sit on
    // the level well below that; the default flow tolerance does.
    let cfg = FlowConfig::default();
    let identity_bound = ctx.tol.unwrap_or(1e-11);

    // Part one: the combined moment identity on raw random data, which
    // holds without any integrability or level assumption.
    let raw = batch(ctx.samples, |i| {
        let run = || -> Result<(String, bool)> {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(ctx.seed, i as u64));
            let m = MonadDatumP2::new(
                gaussian_matrix(&mut rng, ctx.k, ctx.k, 1.0),
                gaussian_matrix(&mut rng, ctx.k, ctx.k, 1.0),
                gaussian_matrix(&mut rng, ctx.k, ctx.k, 1.0),
                gaussian_matrix(&mut rng, ctx.k, ctx.r, 1.0),
                gaussian_matrix(&mut rng, ctx.r, ctx.k, 1.0),
            )?;
            let residual = combined_identity_residual(&m);
            let bound = identity_bound * (1.0 + m.norm().powi(4));
            let violation = residual > bound;
            Ok((
                to_line(&IdentityRecord {
                    record: "identity",
                    index: i,
                    residual,
                    bound,
                    violation,
                }),
                violation,
            ))
        };
        run().unwrap_or_else(|e| (error_line(i, &e), true))
    });

    // Part two: the norm trace identities on sampled solutions.
    let traces = batch(ctx.samples, |i| {
        let seed = derive_seed(ctx.seed, (ctx.samples + i) as u64);
        let run = || -> Result<(String, bool)> {
            let level = LevelP2::new(ctx.zeta)?;
            let (m, flow) = sample_solution_p2(ctx.k, ctx.r, &level, &cfg, seed, SOLUTION_ATTEMPTS)?;
            let trace = boundedness_trace(&m, &level)?;
            let k = ctx.k as f64;
            let sum_residual =
                (trace.a1_norm_sq + trace.a2_norm_sq + trace.b_norm_sq - k).abs();
            let collapse_residual = (trace.collapse_combination
                - (k * (1.0 - ctx.zeta) - trace.a1_norm_sq - trace.a2_norm_sq))
                .abs();
            let violation = sum_residual > 1e-8 || collapse_residual > 1e-8;
            Ok((
                to_line(&TraceRecord {
                    record: "trace",
                    index: i,
                    converged: flow.converged,
                    trace,
                    sum_residual,
                    collapse_residual,
                    violation,
                }),
                violation,
            ))
        };
        run().unwrap_or_else(|e| (error_line(i, &e), true))
    });

    let mut max_residual = 0f64;
    for (line, _) in &raw {
        if let Ok(v) = serde_json::from_str::<serde_json::Value>(line) {
            max_residual = max_residual.max(v["residual"].as_f64().unwrap_or(0.0));
        }
    }
    let mut items = raw;
    items.extend(traces);
    finish(command, ctx, items, |s| {
        s.max_residual = Some(max_residual)
    })
}

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate_dict::dictionary::{CrateDict, Dictionary, SetMode};
use crate_dict::harness::{self, DiffOptions, Workload};
use crate_dict::hashing::{Mode, Overrides, Params, Seed};

/// Experiment driver. Every subcommand writes one JSON record per line.
#[derive(Parser)]
#[command(name = "crate-dict", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Replay a random workload against the dictionary and an exact oracle.
    DiffTest(DiffArgs),
    /// Measure the false-positive rate of the filter.
    FpRate(FpArgs),
    /// Check allocated sizes against their closed forms.
    SpaceAudit(SpaceArgs),
    /// Per-operation access counts over a random workload.
    AccessTrace(AccessArgs),
    /// Build a retrieval structure and verify every label.
    Retrieval(RetrievalArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Set,
    Multiset,
}

#[derive(Args)]
struct ParamArgs {
    /// Pin a derived parameter, e.g. `--param f_tilde=512`.
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
}

impl ParamArgs {
    fn overrides(&self) -> Result<Overrides, String> {
        let mut o = Overrides::default();
        for kv in &self.params {
            let (k, v) = kv.split_once('=').ok_or_else(|| format!("expected KEY=VALUE, got {kv}"))?;
            o.set(k, v).map_err(|e| e.to_string())?;
        }
        Ok(o)
    }
}

#[derive(Args)]
struct DiffArgs {
    #[arg(long, default_value_t = 1_000_000)]
    ops: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value = "multiset")]
    mode: ModeArg,
    /// Dense reference configuration (n = 2^16, rho = 2^10, w = 1024).
    #[arg(long, conflicts_with = "sparse")]
    dense: bool,
    /// Sparse reference configuration (n = 2^12, rho = 2^70, w = 64).
    #[arg(long)]
    sparse: bool,
    #[arg(long)]
    n: Option<u64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    w_eff: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    dup_rate: f64,
    /// Full audit every this many operations (0 = only at the end).
    #[arg(long, default_value_t = 0)]
    audit_every: u64,
    #[command(flatten)]
    p: ParamArgs,
}

#[derive(Args)]
struct FpArgs {
    #[arg(long, default_value_t = 1 << 14)]
    n: u64,
    #[arg(long, default_value_t = 1.0 / 64.0)]
    epsilon: f64,
    #[arg(long, default_value_t = 100_000)]
    queries: u64,
    /// Number of seeds, run as 0..seeds.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[arg(long, default_value_t = 64)]
    w_eff: usize,
}

#[derive(Args)]
struct SpaceArgs {
    #[arg(long, default_value_t = 1 << 16)]
    n: u64,
    #[arg(long, default_value_t = 1024.0)]
    rho: f64,
    #[arg(long, default_value_t = 1024)]
    w_eff: usize,
    /// Load before auditing, as a fraction of n.
    #[arg(long, default_value_t = 1.0)]
    fill: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    p: ParamArgs,
}

#[derive(Args)]
struct AccessArgs {
    #[arg(long, default_value_t = 1 << 14)]
    n: u64,
    #[arg(long, default_value_t = 1024.0)]
    rho: f64,
    #[arg(long, default_value_t = 100_000)]
    ops: u64,
    #[arg(long, default_value_t = 64)]
    w_eff: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    p: ParamArgs,
}

#[derive(Args)]
struct RetrievalArgs {
    #[arg(long, default_value_t = 1 << 15)]
    n: u64,
    #[arg(long, default_value_t = 8)]
    k: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 64)]
    w_eff: usize,
}

fn emit(v: &impl serde::Serialize) {
    println!("{}", serde_json::to_string(v).expect("records serialize"));
}

fn dict(n: u64, rho: f64, w: usize, o: &Overrides, mode: SetMode, seed: u64) -> Result<CrateDict, String> {
    CrateDict::with_config(n, rho, w, o, mode, Seed::from_u64(seed)).map_err(|e| e.to_string())
}

fn diff_test(a: &DiffArgs) -> Result<bool, String> {
    let (n, rho, w) = if a.sparse { (1 << 12, 2f64.powi(70), 64) } else { (1 << 16, 1024.0, 1024) };
    let (n, rho, w) = (a.n.unwrap_or(n), a.rho.unwrap_or(rho), a.w_eff.unwrap_or(w));
    let mut o = a.p.overrides()?;
    if a.dense || a.sparse {
        o.mode = Some(if a.sparse { Mode::Sparse } else { Mode::Dense });
    }
    let mode = match a.mode {
        ModeArg::Set => SetMode::Set,
        ModeArg::Multiset => SetMode::Multiset,
    };
    let mut d = dict(n, rho, w, &o, mode, a.seed)?;
    let mut wl = Workload::new(a.seed, mode, n, a.ops, d.params().universe_size);
    wl.dup_rate = if mode == SetMode::Multiset { a.dup_rate } else { 0.0 };
    let opts = DiffOptions {
        audit_every: a.audit_every,
        exact_counts: true,
        ..Default::default()
    };
    let r = harness::run_differential(&wl, &mut d, &opts);
    emit(&json!({"record": "diff-test", "n": n, "rho": rho, "w_eff": w, "seed": a.seed, "report": r}));
    Ok(r.passed())
}

fn fp_rate(a: &FpArgs) -> Result<bool, String> {
    let seeds: Vec<u64> = (0..a.seeds).collect();
    let r = harness::measure_fp(a.n, a.epsilon, a.queries, &seeds, a.w_eff).map_err(|e| e.to_string())?;
    emit(&json!({"record": "fp-rate", "report": r}));
    Ok(r.passed())
}

fn space_audit(a: &SpaceArgs) -> Result<bool, String> {
    let p = Params::derive(a.n, a.rho, a.w_eff, &a.p.overrides()?).map_err(|e| e.to_string())?;
    let r = harness::space_audit(&p, a.fill, a.seed).map_err(|e| e.to_string())?;
    for c in &r.components {
        emit(&json!({"record": "component", "check": c}));
    }
    emit(&json!({"record": "space-audit", "report": r}));
    Ok(r.passed())
}

fn access_trace(a: &AccessArgs) -> Result<bool, String> {
    let mut d = dict(a.n, a.rho, a.w_eff, &a.p.overrides()?, SetMode::Multiset, a.seed)?;
    let wl = Workload::new(a.seed, SetMode::Multiset, a.n, a.ops, d.params().universe_size);
    let r = harness::run_differential(&wl, &mut d, &DiffOptions::default());
    emit(&json!({
        "record": "access-trace",
        "n": a.n,
        "rho": a.rho,
        "w_eff": a.w_eff,
        "regime": r.regime,
        "access": r.access,
        "mismatches": r.mismatches,
        "overflows": r.overflows,
    }));
    Ok(r.passed())
}

fn retrieval(a: &RetrievalArgs) -> Result<bool, String> {
    let r = harness::run_retrieval(a.n, a.k, a.w_eff, a.seed).map_err(|e| e.to_string())?;
    emit(&json!({"record": "retrieval", "report": r}));
    Ok(r.mismatches == 0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = match &cli.cmd {
        Cmd::DiffTest(a) => diff_test(a),
        Cmd::FpRate(a) => fp_rate(a),
        Cmd::SpaceAudit(a) => space_audit(a),
        Cmd::AccessTrace(a) => access_trace(a),
        Cmd::Retrieval(a) => retrieval(a),
    };
    match out {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            emit(&json!({"record": "error", "message": e}));
            ExitCode::from(2)
        }
    }
}

//! Acceptance suite: one line per criterion, then a nonzero exit if any
//! criterion failed. Runs as a plain binary so the lines always show.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate_dict::adaptive::{apply_insert, compute_group_remainders, plan_insert};
use crate_dict::bits::BitStr;
use crate_dict::harness::{
    component_checks, measure_fp, run_differential, run_retrieval, space_audit, DiffOptions, DiffReport,
    MinimalPrefixOracle, Workload,
};
use crate_dict::hashing::{Overrides, Params, Seed};
use crate_dict::{CrateDict, Dictionary, SetMode};

const DENSE: (u64, f64, usize) = (1 << 16, 1024.0, 1024);
const SPARSE: (u64, f64, usize) = (1 << 12, 1180591620717411303424.0, 64);

/// Largest sparse delete cost beyond `4 ceil(ell / w)` seen over the
/// calibration sweep (seeds 101..=105, n = 2^12..2^18, crate size 2^12).
const DELETE_SLACK: u64 = 137;

const FP_EPSILON: f64 = 1.0 / 64.0;
const FP_N: u64 = 1 << 14;
const FP_QUERIES: u64 = 100_000;
const FP_SEEDS: u64 = 10;
const FP_SIGMAS: f64 = 5.0;
const FULL_BIN_SLACK: f64 = 3.0;
const RETRIEVAL_RATIO: f64 = 2.5;
const RETRIEVAL_REPEATS: u64 = 7;

struct Line {
    id: u32,
    title: &'static str,
    pass: bool,
    detail: String,
    secs: f64,
    budget: f64,
}

fn dict(cfg: (u64, f64, usize), o: &Overrides, mode: SetMode, seed: u64) -> CrateDict {
    CrateDict::with_config(cfg.0, cfg.1, cfg.2, o, mode, Seed::from_u64(seed)).expect("valid configuration")
}

fn workload(d: &CrateDict, mode: SetMode, ops: u64, seed: u64) -> Workload {
    let mut w = Workload::new(seed, mode, d.params().n, ops, d.params().universe_size);
    if mode == SetMode::Multiset {
        w.dup_rate = 0.02;
    }
    w
}

fn exact_sizes() -> (bool, String) {
    let mut detail = Vec::new();
    let mut ok = true;
    for (name, cfg) in [("dense", DENSE), ("sparse", SPARSE)] {
        let d = dict(cfg, &Overrides::default(), SetMode::Multiset, 1);
        for c in component_checks(&d) {
            ok &= c.ok;
            detail.push(format!("{name} {} {}{}{}", c.component, c.bits, c.relation, c.formula));
        }
        let a = d.audit();
        ok &= a.allocated_bits == a.formula_bits && a.is_clean();
    }
    (ok, detail.join("; "))
}

fn differential(reports: &mut Vec<DiffReport>) -> (bool, String) {
    let mut detail = Vec::new();
    let mut ok = true;
    for (name, cfg) in [("dense", DENSE), ("sparse", SPARSE)] {
        for mode in [SetMode::Multiset, SetMode::Set] {
            let mut d = dict(cfg, &Overrides::default(), mode, 7);
            let w = workload(&d, mode, 1_000_000, 7);
            let opts = DiffOptions { exact_counts: true, ..Default::default() };
            let r = run_differential(&w, &mut d, &opts);
            ok &= r.passed() && r.mismatches == 0 && r.ops >= 1_000_000;
            detail.push(format!("{name}/{mode:?}: {} ops, {} mismatches, {} overflows", r.ops, r.mismatches, r.overflows));
            reports.push(r);
        }
    }
    (ok, detail.join("; "))
}

fn false_positives(fns: &mut u64) -> (bool, String) {
    let seeds: Vec<u64> = (0..FP_SEEDS).collect();
    let r = measure_fp(FP_N, FP_EPSILON, FP_QUERIES, &seeds, 64).expect("filter builds");
    *fns += r.false_negatives;
    let bound = FP_EPSILON + FP_SIGMAS * (FP_EPSILON / FP_QUERIES as f64).sqrt();
    let ok = r.mean_rate <= bound && r.overflows == 0;
    (ok, format!("mean rate {:.5} <= {bound:.5} (95% CI {:.5}..{:.5})", r.mean_rate, r.ci95.0, r.ci95.1))
}

fn access_sweep(cfg: (u64, f64, usize), n: u64) -> (u64, u64, u64, bool) {
    let o = Overrides { crate_size: Some(1 << 12), ..Default::default() };
    let mut d = dict((n, cfg.1, cfg.2), &o, SetMode::Multiset, 1);
    // Independent uniform insertions, as the access bound assumes.
    let w = Workload::new(1, SetMode::Multiset, n, 100_000, d.params().universe_size);
    let r = run_differential(&w, &mut d, &DiffOptions::default());
    (r.access.insert.max, r.access.delete.max, r.access.query.max, r.passed())
}

fn constant_accesses() -> (bool, String) {
    let ns = [1u64 << 12, 1 << 14, 1 << 16, 1 << 18];
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, cfg) in [("dense w=64", (0, 1024.0, 64)), ("sparse", SPARSE)] {
        let rows: Vec<_> = ns.iter().map(|n| access_sweep(cfg, *n)).collect();
        let same = rows.iter().all(|r| (r.0, r.1, r.2) == (rows[0].0, rows[0].1, rows[0].2));
        ok &= same && rows.iter().all(|r| r.3);
        let shown: Vec<String> = rows.iter().map(|r| format!("{}/{}/{}", r.0, r.1, r.2)).collect();
        detail.push(format!("{name} max insert/delete/query over n=2^12..2^18: {}", shown.join(" ")));
        if name == "sparse" {
            let ell = Params::derive(SPARSE.0, SPARSE.1, SPARSE.2, &Overrides::default()).unwrap().ell;
            let budget = 4 * ell.div_ceil(SPARSE.2) as u64 + DELETE_SLACK;
            let worst = rows.iter().map(|r| r.1).max().unwrap();
            ok &= worst <= budget;
            detail.push(format!("sparse max delete {worst} <= 4*ceil(ell/w)+K = {budget}"));
        }
    }
    (ok, detail.join("; "))
}

fn invariants_every_op() -> (bool, String) {
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, rho) in [("dense", 1024.0), ("sparse", SPARSE.1)] {
        let mut d = dict((1 << 8, rho, 64), &Overrides::default(), SetMode::Multiset, 3);
        let mut w = workload(&d, SetMode::Multiset, 100_000, 3);
        w.dup_rate = 0.1;
        let opts = DiffOptions { audit_every: 1, prefix_oracle: true, exact_counts: true };
        let r = run_differential(&w, &mut d, &opts);
        ok &= r.passed() && r.audits >= r.ops;
        detail.push(format!(
            "{name}: {} audits, invariant1 {}, sync {}, minimality {}, prefix oracle {}/{} groups bad, audit failures {}",
            r.audits, r.invariant1_violations, r.sync_violations, r.minimality_violations, r.prefix_violations,
            r.prefix_groups_checked, r.audit_failures
        ));
    }
    (ok, detail.join("; "))
}

fn overflow_budget() -> (bool, String) {
    let mut total = 0;
    let mut ops = 0;
    let mut clean = true;
    for seed in 1..=5 {
        let mut d = dict(DENSE, &Overrides::default(), SetMode::Multiset, seed);
        let w = workload(&d, SetMode::Multiset, 10_000_000, seed);
        let r = run_differential(&w, &mut d, &DiffOptions::default());
        total += r.overflows + d.overflowed() as u64;
        ops += r.ops;
        clean &= r.passed();
    }
    (total == 0 && clean, format!("{ops} ops over 5 seeds, {total} overflows"))
}

fn space_trend() -> (bool, String) {
    let mut prev = f64::INFINITY;
    let mut ok = true;
    let mut shown = Vec::new();
    for w in [256, 1024, 4096] {
        let p = Params::derive(1 << 16, 1024.0, w, &Overrides::default()).unwrap();
        let r = space_audit(&p, 1.0, 1).unwrap();
        ok &= r.passed() && r.bin_overhead < prev && r.bin_overhead > 2.0;
        prev = r.bin_overhead;
        shown.push(format!("w={w}: {:.3}", r.bin_overhead));
    }
    (ok, format!("bin bits/element - ell: {}", shown.join(", ")))
}

fn full_bins() -> (bool, String) {
    let p = Params::derive(DENSE.0, DENSE.1, DENSE.2, &Overrides::default()).unwrap();
    let mut sum = 0.0;
    for seed in 0..20 {
        let mut d = CrateDict::new(p.clone(), SetMode::Multiset, Seed::from_u64(seed)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        while d.len() < p.n {
            d.insert(rng.gen_range(0..p.universe_size)).unwrap();
        }
        sum += d.audit().full_fraction();
    }
    let mean = sum / 20.0;
    let bound = 6.0 * (-(p.m as f64) * p.mu * p.mu / 3.0).exp();
    (mean <= FULL_BIN_SLACK * bound, format!("mean full fraction {mean:.5} <= 3 x {bound:.4}"))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}

fn retrieval() -> (bool, String) {
    let r = match run_retrieval(1 << 15, 8, 64, 1) {
        Ok(r) => r,
        Err(e) => return (false, format!("build failed: {e}")),
    };
    let mut ok = r.mismatches == 0 && r.attempts <= 16;
    // Each repeat times all three sizes back to back, so background load
    // hits them alike; the median is taken over per-repeat ratios.
    let (mut lo, mut hi) = (Vec::new(), Vec::new());
    for s in 0..RETRIEVAL_REPEATS {
        let t: Vec<f64> = [1u64 << 14, 1 << 15, 1 << 16]
            .iter()
            .map(|n| run_retrieval(*n, 8, 64, 100 + s).map(|r| r.build_secs).unwrap_or(f64::INFINITY))
            .collect();
        lo.push(t[1] / t[0]);
        hi.push(t[2] / t[1]);
    }
    let ratios = [median(lo), median(hi)];
    ok &= ratios.iter().all(|r| *r <= RETRIEVAL_RATIO);
    (
        ok,
        format!(
            "{} attempts, {} mismatches, {:.1} bits/key, time ratios {:.2} {:.2}",
            r.attempts, r.mismatches, r.bits_per_key, ratios[0], ratios[1]
        ),
    )
}

fn greedy_minimality() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut bad = 0;
    for _ in 0..10_000 {
        let len = rng.gen_range(1..=12);
        let size = rng.gen_range(1..=8);
        let mut rs: Vec<BitStr> = (0..size).map(|_| BitStr::new(rng.gen_range(0..1u128 << len), len)).collect();
        let mut alphas = Vec::new();
        let mut full: Vec<BitStr> = Vec::new();
        for r in &rs {
            let plan = plan_insert(&alphas, r, |j| full[j]);
            full.insert(plan.rank, *r);
            apply_insert(&mut alphas, &plan);
        }
        rs.sort_by(|a, b| a.lex_cmp(b));
        let best = MinimalPrefixOracle::min_total(&rs);
        let batch: u64 = compute_group_remainders(&rs).iter().map(|a| a.len() as u64).sum();
        let incremental: u64 = alphas.iter().map(|a| a.len() as u64).sum();
        bad += (batch != best || incremental != best) as u32;
    }
    (bad == 0, format!("10000 groups, {bad} disagreements"))
}

fn main() {
    // Optional numeric arguments select a subset of criteria.
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut lines = Vec::new();
    let mut run = |id: u32, title: &'static str, budget: f64, f: &mut dyn FnMut() -> (bool, String)| {
        if !only.is_empty() && !only.contains(&id) {
            return;
        }
        let t = Instant::now();
        let (pass, detail) = f();
        let secs = t.elapsed().as_secs_f64();
        let line = Line { id, title, pass: pass && secs < budget, detail, secs, budget };
        println!(
            "criterion {:>2} {} {} ({:.1}s of {:.0}s): {}",
            line.id,
            if line.pass { "PASS" } else { "FAIL" },
            line.title,
            line.secs,
            line.budget,
            line.detail
        );
        lines.push(line);
    };
    let mut reports = Vec::new();
    let mut fp_negatives = 0;
    run(1, "exact size formulas", 1.0, &mut exact_sizes);
    run(2, "differential correctness", 300.0, &mut || differential(&mut reports));
    run(3, "false-positive bound", 120.0, &mut || false_positives(&mut fp_negatives));
    let fns: u64 = reports.iter().map(|r| r.false_negatives).sum::<u64>() + fp_negatives;
    run(4, "no false negatives", 1.0, &mut || (fns == 0, format!("{fns} false negatives across criteria 2 and 3")));
    run(5, "constant accesses", 600.0, &mut constant_accesses);
    run(6, "invariants after every operation", 600.0, &mut invariants_every_op);
    run(7, "overflow budget", 900.0, &mut overflow_budget);
    run(8, "space trend", 120.0, &mut space_trend);
    run(9, "full-bin statistic", 300.0, &mut full_bins);
    run(10, "retrieval", 300.0, &mut retrieval);
    run(11, "greedy prefixes are minimal", 120.0, &mut greedy_minimality);
    let failed: Vec<u32> = lines.iter().filter(|l| !l.pass).map(|l| l.id).collect();
    println!("acceptance: {} of {} criteria passed", lines.len() - failed.len(), lines.len());
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}

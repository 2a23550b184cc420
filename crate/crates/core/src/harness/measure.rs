//! Differential runs and the measurements built on them.

use std::collections::{HashSet, VecDeque};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::oracle::{MinimalPrefixOracle, OracleMultiset};
use super::workload::{Op, Workload};
use crate::bits::BitStr;
use crate::dictionary::{AuditReport, CrateDict, Dictionary};
use crate::error::{Error, Result};
use crate::filter::CrateFilter;
use crate::hashing::{bits_for, Mode, Overrides, Params, Seed};
use crate::retrieval::Retrieval;

/// Accesses charged to one kind of operation.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct OpStats {
    pub count: u64,
    pub max: u64,
    pub mean: f64,
    #[serde(skip)]
    total: u64,
}

impl OpStats {
    fn add(&mut self, used: u64) {
        self.count += 1;
        self.total += used;
        self.max = self.max.max(used);
        self.mean = self.total as f64 / self.count as f64;
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct AccessStats {
    pub insert: OpStats,
    pub delete: OpStats,
    pub query: OpStats,
}

impl AccessStats {
    pub fn max(&self) -> u64 {
        self.insert.max.max(self.delete.max).max(self.query.max)
    }
}

#[derive(Clone, Debug, Default)]
pub struct DiffOptions {
    /// Full structural audit every this many operations; 0 disables.
    pub audit_every: u64,
    /// Check the groups touched by each update against the brute-force
    /// prefix oracle (sparse regime only).
    pub prefix_oracle: bool,
    /// Compare exact multiplicities of every touched element.
    pub exact_counts: bool,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct DiffReport {
    pub regime: String,
    pub ops: u64,
    pub mismatches: u64,
    pub false_negatives: u64,
    pub false_positives: u64,
    pub count_mismatches: u64,
    pub overflows: u64,
    pub first_mismatch: Option<String>,
    pub access: AccessStats,
    pub audits: u64,
    pub audit_failures: u64,
    pub invariant1_violations: u64,
    pub sync_violations: u64,
    pub minimality_violations: u64,
    pub first_audit_failure: Option<String>,
    pub prefix_groups_checked: u64,
    pub prefix_violations: u64,
    pub final_len: u64,
    pub max_sid_load: usize,
}

impl DiffReport {
    pub fn passed(&self) -> bool {
        self.mismatches == 0
            && self.count_mismatches == 0
            && self.audit_failures == 0
            && self.prefix_violations == 0
    }
}

struct Runner<'a> {
    dict: &'a mut CrateDict,
    oracle: OracleMultiset,
    opts: DiffOptions,
    report: DiffReport,
    recent: VecDeque<String>,
}

impl<'a> Runner<'a> {
    fn new(dict: &'a mut CrateDict, opts: &DiffOptions) -> Self {
        let regime = match dict.params().mode {
            Mode::Dense => "dense",
            Mode::Sparse => "sparse",
        };
        let mode = match dict {
            CrateDict::Dense(d) => d.set_mode(),
            CrateDict::Sparse(d) => d.set_mode(),
        };
        Runner {
            dict,
            oracle: OracleMultiset::new(mode),
            opts: opts.clone(),
            report: DiffReport {
                regime: regime.into(),
                ..DiffReport::default()
            },
            recent: VecDeque::new(),
        }
    }

    fn mismatch(&mut self, what: String) {
        self.report.mismatches += 1;
        if self.report.first_mismatch.is_none() {
            let trail: Vec<String> = self.recent.iter().cloned().collect();
            self.report.first_mismatch = Some(format!("{what}; preceding: [{}]", trail.join(", ")));
        }
    }

    fn step(&mut self, op: Op) -> Result<()> {
        if let Op::Delete(x) = op {
            if !self.oracle.contains(x) {
                return Err(Error::Precondition(format!("workload deletes absent element {x}")));
            }
        }
        let i = self.report.ops;
        self.report.ops += 1;
        if self.recent.len() == 8 {
            self.recent.pop_front();
        }
        self.recent.push_back(format!("#{i} {op:?}"));
        let before = self.dict.meter().total();
        match op {
            Op::Insert(x) => {
                let res = self.dict.insert(x);
                self.report.access.insert.add(self.dict.meter().total() - before);
                match res {
                    Ok(()) => {
                        self.oracle.insert(x);
                    }
                    Err(Error::Overflow(_)) => self.report.overflows += 1,
                    Err(e) => self.mismatch(format!("#{i} insert {x} failed: {e}")),
                }
            }
            Op::Delete(x) => {
                let res = self.dict.delete(x);
                self.report.access.delete.add(self.dict.meter().total() - before);
                match res {
                    Ok(()) => self.oracle.delete(x)?,
                    Err(Error::Overflow(_)) => self.report.overflows += 1,
                    Err(e) => self.mismatch(format!("#{i} delete {x} failed: {e}")),
                }
            }
            Op::Query(x) => {
                let got = self.dict.query(x);
                self.report.access.query.add(self.dict.meter().total() - before);
                let want = self.oracle.contains(x);
                if got != want {
                    if want {
                        self.report.false_negatives += 1;
                    } else {
                        self.report.false_positives += 1;
                    }
                    self.mismatch(format!("#{i} query {x}: structure {got}, oracle {want}"));
                }
            }
        }
        if self.oracle.len() != self.dict.len() {
            self.mismatch(format!("#{i}: length {} vs oracle {}", self.dict.len(), self.oracle.len()));
        }
        let updated = !matches!(op, Op::Query(_));
        if updated && self.opts.exact_counts {
            let x = op.element();
            let (got, want) = (self.dict.multiplicity(x), self.oracle.count(x));
            if got != want {
                self.report.count_mismatches += 1;
                self.mismatch(format!("#{i} multiplicity of {x}: {got} vs {want}"));
            }
        }
        if updated && self.opts.prefix_oracle {
            self.check_prefixes(op.element());
        }
        if self.opts.audit_every > 0 && self.report.ops % self.opts.audit_every == 0 {
            self.audit(i);
        }
        Ok(())
    }

    fn check_prefixes(&mut self, x: u128) {
        let CrateDict::Sparse(d) = &*self.dict else {
            return;
        };
        let Ok(groups) = d.groups_of(x) else {
            self.report.prefix_violations += 1;
            return;
        };
        for g in groups.iter().filter(|g| !g.is_empty()) {
            self.report.prefix_groups_checked += 1;
            if !prefix_free(g) {
                self.report.prefix_violations += 1;
                continue;
            }
            let rs: Vec<BitStr> = g.iter().map(|(_, r)| *r).collect();
            let total: u64 = g.iter().map(|(a, _)| a.len() as u64).sum();
            if total != MinimalPrefixOracle::min_total(&rs) {
                self.report.prefix_violations += 1;
            }
        }
    }

    fn audit(&mut self, at: u64) {
        let a = self.dict.audit();
        self.report.audits += 1;
        self.report.invariant1_violations += a.invariant1_violations as u64;
        self.report.sync_violations += a.sync_violations as u64;
        self.report.minimality_violations += a.minimality_violations as u64;
        self.report.max_sid_load = self.report.max_sid_load.max(a.max_sid_load);
        if !a.is_clean() || a.elements != self.oracle.len() {
            self.report.audit_failures += 1;
            if self.report.first_audit_failure.is_none() {
                self.report.first_audit_failure = Some(format!("after op #{at}: {}", describe(&a)));
            }
        }
    }

    fn finish(mut self) -> DiffReport {
        self.audit(self.report.ops);
        let stale: Vec<(u128, usize)> = self
            .oracle
            .elements()
            .filter(|(x, c)| self.dict.multiplicity(*x) != *c)
            .collect();
        for (x, c) in stale {
            self.report.count_mismatches += 1;
            self.mismatch(format!("final multiplicity of {x}: {} vs {c}", self.dict.multiplicity(x)));
        }
        self.report.final_len = self.dict.len();
        self.report
    }
}

/// Adaptive remainders of distinct fingerprints are not prefixes of each
/// other and copies share one.
fn prefix_free(g: &[(BitStr, BitStr)]) -> bool {
    g.iter().enumerate().all(|(i, (a, r))| {
        g[i + 1..].iter().all(|(b, s)| {
            if r == s {
                a == b
            } else {
                !a.is_prefix_of(b) && !b.is_prefix_of(a)
            }
        })
    })
}

fn describe(a: &AuditReport) -> String {
    format!(
        "invariant1 {}, sync {}, minimality {}, bits {} vs {}, elements {} = {} + {}, errors {:?}",
        a.invariant1_violations,
        a.sync_violations,
        a.minimality_violations,
        a.allocated_bits,
        a.formula_bits,
        a.elements,
        a.pd_elements,
        a.sid_elements,
        a.structural_errors.iter().take(3).collect::<Vec<_>>()
    )
}

/// Replays a generated workload against `dict` and an exact oracle in
/// lockstep.
pub fn run_differential(w: &Workload, dict: &mut CrateDict, opts: &DiffOptions) -> DiffReport {
    let mut run = Runner::new(dict, opts);
    let mut gen = w.generator();
    while let Some(op) = gen.next(&run.oracle) {
        run.step(op).expect("generated workloads honor preconditions");
    }
    run.finish()
}

/// Replays a fixed operation list, rejecting it at the first deletion of an
/// element that is not present.
pub fn replay(ops: &[Op], dict: &mut CrateDict, opts: &DiffOptions) -> Result<DiffReport> {
    let mut run = Runner::new(dict, opts);
    for op in ops {
        run.step(*op)?;
    }
    Ok(run.finish())
}

/// Per-operation access counts over a workload.
pub fn measure_access(w: &Workload, dict: &mut CrateDict) -> AccessStats {
    run_differential(w, dict, &DiffOptions::default()).access
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct FpTrial {
    pub inserted: u64,
    pub queries: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub overflows: u64,
}

impl FpTrial {
    pub fn rate(&self) -> f64 {
        if self.queries == 0 {
            0.0
        } else {
            self.false_positives as f64 / self.queries as f64
        }
    }
}

/// Inserts `inserts` random keys, checks each is reported, then queries
/// `queries` fresh keys.
pub fn fp_trial(filter: &mut CrateFilter, inserts: u64, queries: u64, rng: &mut ChaCha8Rng) -> FpTrial {
    let mut t = FpTrial::default();
    let mut keys = HashSet::new();
    let mut stored = Vec::new();
    while (keys.len() as u64) < inserts {
        let x = rng.gen::<u64>() as u128;
        if !keys.insert(x) {
            continue;
        }
        match filter.insert(x) {
            Ok(()) => stored.push(x),
            Err(_) => t.overflows += 1,
        }
    }
    t.inserted = stored.len() as u64;
    t.false_negatives = stored.iter().filter(|x| !filter.query(**x)).count() as u64;
    while t.queries < queries {
        let x = rng.gen::<u64>() as u128;
        if keys.contains(&x) {
            continue;
        }
        t.queries += 1;
        t.false_positives += filter.query(x) as u64;
    }
    t
}

#[derive(Clone, Debug, Serialize)]
pub struct FpReport {
    pub n: u64,
    pub epsilon: f64,
    pub queries: u64,
    pub seeds: Vec<u64>,
    pub rates: Vec<f64>,
    pub mean_rate: f64,
    /// Normal-approximation 95% interval on the pooled rate.
    pub ci95: (f64, f64),
    /// `epsilon + 5 sqrt(epsilon / queries)`.
    pub bound: f64,
    pub false_negatives: u64,
    pub overflows: u64,
}

impl FpReport {
    pub fn passed(&self) -> bool {
        self.mean_rate <= self.bound && self.false_negatives == 0 && self.overflows == 0
    }
}

pub fn measure_fp(n: u64, epsilon: f64, queries: u64, seeds: &[u64], w_eff: usize) -> Result<FpReport> {
    let mut rates = Vec::new();
    let (mut fps, mut fns, mut ovf) = (0u64, 0u64, 0u64);
    for &s in seeds {
        let mut f = CrateFilter::new(n, epsilon, w_eff, &Overrides::default(), Seed::from_u64(s))?;
        let mut rng = ChaCha8Rng::seed_from_u64(s ^ 0x5eed);
        let t = fp_trial(&mut f, n, queries, &mut rng);
        rates.push(t.rate());
        fps += t.false_positives;
        fns += t.false_negatives;
        ovf += t.overflows;
    }
    let total = queries * seeds.len() as u64;
    let pooled = if total == 0 { 0.0 } else { fps as f64 / total as f64 };
    let half = 1.96 * (pooled * (1.0 - pooled) / total.max(1) as f64).sqrt();
    Ok(FpReport {
        n,
        epsilon,
        queries,
        seeds: seeds.to_vec(),
        mean_rate: rates.iter().sum::<f64>() / rates.len().max(1) as f64,
        rates,
        ci95: ((pooled - half).max(0.0), pooled + half),
        bound: epsilon + 5.0 * (epsilon / queries.max(1) as f64).sqrt(),
        false_negatives: fns,
        overflows: ovf,
    })
}

/// One component class checked against its closed-form size.
#[derive(Clone, Debug, Serialize)]
pub struct ComponentCheck {
    pub component: String,
    pub count: usize,
    /// Largest allocation seen in this class.
    pub bits: usize,
    pub formula: usize,
    /// `"="` for exact sizes, `"<="` for upper bounds.
    pub relation: String,
    pub ok: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpaceReport {
    pub n: u64,
    pub rho: f64,
    pub w_eff: usize,
    pub regime: String,
    pub ell: usize,
    pub elements: u64,
    pub components: Vec<ComponentCheck>,
    pub allocated_bits: u64,
    pub formula_bits: u64,
    /// Allocated bits over the capacity `n`.
    pub bits_per_element: f64,
    /// Bits of all pocket dictionaries over `n`.
    pub bin_bits_per_element: f64,
    /// `bin_bits_per_element - ell`.
    pub bin_overhead: f64,
    pub audit_clean: bool,
}

impl SpaceReport {
    pub fn passed(&self) -> bool {
        self.audit_clean && self.allocated_bits == self.formula_bits && self.components.iter().all(|c| c.ok)
    }
}

fn check(out: &mut Vec<ComponentCheck>, name: &str, sizes: impl Iterator<Item = usize>, formula: usize, exact: bool) {
    let sizes: Vec<usize> = sizes.collect();
    let ok = sizes.iter().all(|b| if exact { *b == formula } else { *b <= formula });
    out.push(ComponentCheck {
        component: name.into(),
        count: sizes.len(),
        bits: sizes.iter().copied().max().unwrap_or(0),
        formula,
        relation: if exact { "=" } else { "<=" }.into(),
        ok,
    });
}

/// Closed-form sizes recomputed from the primitive parameters.
pub fn component_checks(d: &CrateDict) -> Vec<ComponentCheck> {
    let p = d.params();
    let mut out = Vec::new();
    let ell_hat = p.hb_bits + p.q_bits + p.value_bits + 2 * p.link_bits;
    let csd = p.f_hat * (ell_hat + bits_for(p.c_hat as u128) + 1);
    let motel = |k: usize| k * (1 + p.ell) + bits_for(k as u128);
    match d {
        CrateDict::Dense(d) => {
            check(&mut out, "pocket dictionary", d.pds().iter().map(|x| x.total_bits()), p.m + p.f * (1 + p.ell), true);
            let sids = d.sids();
            check(&mut out, "counting set dictionary", sids.iter().flat_map(|s| (0..s.csd_count()).map(|i| s.csd(i).total_bits())), csd, true);
            check(&mut out, "list heads", sids.iter().map(|s| s.images().heads.bit_capacity()), p.pds_per_crate * p.link_bits, true);
        }
        CrateDict::Sparse(d) => {
            check(&mut out, "pocket dictionary", d.pds().iter().map(|x| x.total_bits()), p.m + p.f * (1 + bits_for(p.f as u128).max(1)), true);
            check(&mut out, "bin motel", d.motels().iter().map(|x| x.total_bits()), motel(p.f), true);
            let vpd = p.super_interval * p.m + 3 * p.var_f + 2 * p.var_l;
            check(&mut out, "variable-length bin", d.varpds().iter().map(|x| x.total_bits()), vpd, false);
            let sids = d.sids();
            check(&mut out, "counting set dictionary", sids.iter().flat_map(|s| (0..s.csd_count()).map(|i| s.csd(i).total_bits())), csd, true);
            check(&mut out, "list heads", sids.iter().map(|s| s.images().heads.bit_capacity()), p.pds_per_crate * p.link_bits, true);
            check(&mut out, "spare motel", sids.iter().flat_map(|s| (0..s.csd_count()).map(|i| s.motel(i).total_bits())), motel(p.f_hat), true);
            let vcsd = 2 * (p.vcsd_f + p.vcsd_l + ell_hat.div_ceil(p.c));
            check(&mut out, "variable-length spare", sids.iter().flat_map(|s| s.vcsds().iter().map(|v| v.total_bits())), vcsd, false);
        }
    }
    out
}

/// Fills a fresh dictionary to `fill * n` random elements and accounts for
/// every allocated bit.
pub fn space_audit(p: &Params, fill: f64, seed: u64) -> Result<SpaceReport> {
    let mut d = CrateDict::new(p.clone(), crate::dictionary::SetMode::Multiset, Seed::from_u64(seed))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = (fill * p.n as f64) as u64;
    while d.len() < target {
        let x = rng.gen_range(0..p.universe_size);
        if let Err(e) = d.insert(x) {
            if !matches!(e, Error::Overflow(_)) {
                return Err(e);
            }
        }
    }
    let a = d.audit();
    let pd_bits = (p.crates * p.pds_per_crate * p.pd_bits()) as f64;
    let bin = pd_bits / p.n as f64;
    Ok(SpaceReport {
        n: p.n,
        rho: p.rho,
        w_eff: p.w_eff,
        regime: format!("{:?}", p.mode).to_lowercase(),
        ell: p.ell,
        elements: d.len(),
        components: component_checks(&d),
        allocated_bits: a.allocated_bits,
        formula_bits: a.formula_bits,
        bits_per_element: a.allocated_bits as f64 / p.n as f64,
        bin_bits_per_element: bin,
        bin_overhead: bin - p.ell as f64,
        audit_clean: a.is_clean(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct RetrievalReport {
    pub n: u64,
    pub k: usize,
    pub seed: u64,
    pub variant: String,
    pub attempts: u32,
    pub build_secs: f64,
    pub mismatches: u64,
    pub max_query_accesses: u64,
    pub allocated_bits: usize,
    pub bits_per_key: f64,
}

/// Random distinct keys with random `k`-bit labels.
pub fn retrieval_instance(n: u64, k: usize, seed: u64) -> (Vec<u128>, Vec<u128>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut keys = Vec::with_capacity(n as usize);
    while (keys.len() as u64) < n {
        let x = rng.gen::<u64>() as u128;
        if seen.insert(x) {
            keys.push(x);
        }
    }
    let mask = if k >= 128 { u128::MAX } else { (1u128 << k) - 1 };
    let labels = keys.iter().map(|_| rng.gen::<u128>() & mask).collect();
    (keys, labels)
}

/// Builds a retrieval structure and verifies every label.
pub fn run_retrieval(n: u64, k: usize, w_eff: usize, seed: u64) -> Result<RetrievalReport> {
    let (keys, labels) = retrieval_instance(n, k, seed);
    let start = Instant::now();
    let r = Retrieval::build(&keys, &labels, k, w_eff, &Overrides::default(), Seed::from_u64(seed))?;
    let build_secs = start.elapsed().as_secs_f64();
    let mut max_q = 0;
    let mut mismatches = 0;
    for (x, l) in keys.iter().zip(&labels) {
        let before = r.meter().total();
        mismatches += (r.query(*x) != *l) as u64;
        max_q = max_q.max(r.meter().total() - before);
    }
    Ok(RetrievalReport {
        n,
        k,
        seed,
        variant: format!("{:?}", r.variant()).to_lowercase(),
        attempts: r.attempts(),
        build_secs,
        mismatches,
        max_query_accesses: max_q,
        allocated_bits: r.allocated_bits(),
        bits_per_key: r.allocated_bits() as f64 / n as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::SetMode;

    fn dense(n: u64) -> CrateDict {
        CrateDict::with_config(n, 1024.0, 64, &Overrides::default(), SetMode::Multiset, Seed::from_u64(1)).unwrap()
    }

    #[test]
    fn small_dense_differential() {
        let mut d = dense(1 << 10);
        let mut w = Workload::new(2, SetMode::Multiset, 1 << 10, 20_000, d.params().universe_size);
        w.dup_rate = 0.05;
        let opts = DiffOptions { audit_every: 1000, exact_counts: true, ..Default::default() };
        let r = run_differential(&w, &mut d, &opts);
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.overflows, 0);
    }

    #[test]
    fn rejects_absent_delete() {
        let mut d = dense(64);
        let ops = [Op::Insert(3), Op::Delete(3), Op::Delete(3)];
        assert!(matches!(replay(&ops, &mut d, &DiffOptions::default()), Err(Error::Precondition(_))));
    }

    #[test]
    fn empty_workload_has_zero_accesses() {
        let mut d = dense(64);
        let mut w = Workload::new(0, SetMode::Multiset, 64, 0, 1);
        w.fill = 0.0;
        assert_eq!(measure_access(&w, &mut d), AccessStats::default());
    }

    #[test]
    fn empty_filter_has_no_false_positives() {
        let mut f = CrateFilter::new(1 << 10, 1.0 / 64.0, 64, &Overrides::default(), Seed::from_u64(3)).unwrap();
        let t = fp_trial(&mut f, 0, 10_000, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(t.rate(), 0.0);
    }

    #[test]
    fn loose_fp_bound_at_one_half() {
        let r = measure_fp(1 << 10, 0.5, 20_000, &[1], 64).unwrap();
        assert!(r.mean_rate <= 0.52 && r.false_negatives == 0, "{r:?}");
    }

    #[test]
    fn empty_space_matches_formula() {
        let p = Params::derive(1 << 10, 1024.0, 64, &Overrides::default()).unwrap();
        let r = space_audit(&p, 0.0, 1).unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.allocated_bits, p.total_bits() as u64);
    }
}

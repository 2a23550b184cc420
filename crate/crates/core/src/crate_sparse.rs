//! Sparse-regime crate dictionary. Bins and spare records hold pointers into
//! pocket motels, which store full remainders; the adaptive remainders in
//! the variable-length bins and spare frames locate the right pointer so
//! that a lookup reads at most one full remainder per side.
//!
//! Within every group (one quotient of one bin, or one `(bin, quotient)` of
//! one CSD) the pointer at rank `j` and the adaptive remainder at rank `j`
//! belong to the same element, and ranks follow remainder order.

use crate::adaptive::{compute_group_remainders, match_range, plan_insert, shrink_group_remainders};
use crate::bits::{AccessMeter, BitStr};
use crate::crate_dense::Keying;
use crate::dictionary::{AuditReport, Dictionary, SetMode};
use crate::error::{Component, Error, Result};
use crate::hashing::{Decomposition, Mode, Params, Seed};
use crate::pocket_dict::{PocketDict, VarPocketDict};
use crate::pocket_motel::PocketMotel;
use crate::sid::Sid;

/// Where a full match was found: range start and the matching ranks.
#[derive(Clone, Copy, Debug)]
struct Hit {
    start: usize,
    j0: usize,
    j1: usize,
}

#[derive(Clone, Debug)]
pub struct SparseCrateDict {
    pub(crate) params: Params,
    pub(crate) seed: Seed,
    pub(crate) set_mode: SetMode,
    keying: Keying,
    pub(crate) pds: Vec<PocketDict>,
    pub(crate) motels: Vec<PocketMotel>,
    pub(crate) varpds: Vec<VarPocketDict>,
    pub(crate) sids: Vec<Sid>,
    meter: AccessMeter,
    pub(crate) len: u64,
    pub(crate) overflowed: bool,
}

impl SparseCrateDict {
    pub fn new(params: Params, set_mode: SetMode, seed: Seed) -> Result<Self> {
        if params.mode != Mode::Sparse {
            return Err(Error::Config("parameters select the dense regime".into()));
        }
        let p = &params;
        let bins = p.crates * p.pds_per_crate;
        Ok(SparseCrateDict {
            keying: Keying::new(p, set_mode, &seed),
            meter: AccessMeter::new(p.w_eff),
            pds: vec![PocketDict::new(p.m, p.f, p.slot_bits); bins],
            motels: vec![PocketMotel::new(p.f, p.ell); bins],
            varpds: vec![VarPocketDict::new(p.m, p.var_m, p.var_f, p.var_l); p.crates * p.varpds_per_crate],
            sids: vec![Sid::new(p); p.crates],
            params,
            seed,
            set_mode,
            len: 0,
            overflowed: false,
        })
    }

    pub(crate) fn from_parts(
        params: Params,
        set_mode: SetMode,
        seed: Seed,
        pds: Vec<PocketDict>,
        motels: Vec<PocketMotel>,
        varpds: Vec<VarPocketDict>,
        sids: Vec<Sid>,
        overflowed: bool,
    ) -> Result<Self> {
        let mut d = SparseCrateDict::new(params, set_mode, seed)?;
        if pds.len() != d.pds.len() || motels.len() != d.motels.len() || varpds.len() != d.varpds.len() || sids.len() != d.sids.len() {
            return Err(Error::Format("component count mismatch".into()));
        }
        d.len = pds.iter().map(|p| p.occupancy() as u64).sum::<u64>()
            + sids.iter().map(|s| s.cardinality() as u64).sum::<u64>();
        d.pds = pds;
        d.motels = motels;
        d.varpds = varpds;
        d.sids = sids;
        d.overflowed = overflowed;
        let rep = d.audit();
        if !rep.is_clean() {
            return Err(Error::Format(format!("inconsistent image: {:?}", rep.structural_errors)));
        }
        Ok(d)
    }

    pub fn set_mode(&self) -> SetMode {
        self.set_mode
    }

    pub fn seed(&self) -> &Seed {
        &self.seed
    }

    pub fn pds(&self) -> &[PocketDict] {
        &self.pds
    }

    pub fn motels(&self) -> &[PocketMotel] {
        &self.motels
    }

    pub fn varpds(&self) -> &[VarPocketDict] {
        &self.varpds
    }

    pub fn sids(&self) -> &[Sid] {
        &self.sids
    }

    /// `(adaptive remainder, full remainder)` pairs of the two groups `x`
    /// maps to: its bin group and its spare group. Unmetered.
    pub fn groups_of(&self, x: u128) -> Result<[Vec<(BitStr, BitStr)>; 2]> {
        let (_, d, csd) = self.keying.locate(x, &self.params)?;
        let m = AccessMeter::new(self.params.w_eff);
        let (b, v, qsi) = self.coords(d.hc, d.hb);
        let (s, e) = self.pds[b].range(d.q, &m);
        let alphas = self.varpds[v].read_group(qsi, d.q, &m);
        let bin = (s..e)
            .zip(alphas)
            .map(|(i, a)| {
                let r = self.motels[b].read(self.pds[b].slot(i) as usize, &m);
                Ok((a, self.rem(r?)))
            })
            .collect::<Result<Vec<_>>>()?;
        let sid = &self.sids[d.hc];
        let (s, e) = sid.group_range(csd, d.hb, d.q, &m);
        let frame = sid.frame(csd, &m);
        let spare = (s..e)
            .map(|k| {
                let ptr = sid.split(sid.csd(csd).record(k).key).2 as usize;
                Ok((frame[k], self.rem(sid.motel(csd).read(ptr, &m)?)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok([bin, spare])
    }

    fn rem(&self, r: u128) -> BitStr {
        BitStr::new(r, self.params.ell)
    }

    /// Bin index, its variable-length bin, and position in that bin.
    fn coords(&self, hc: usize, hb: usize) -> (usize, usize, usize) {
        let p = &self.params;
        (
            hc * p.pds_per_crate + hb,
            hc * p.varpds_per_crate + hb / p.super_interval,
            hb % p.super_interval,
        )
    }

    fn track<T>(&mut self, r: Result<T>) -> Result<T> {
        if matches!(r, Err(Error::Overflow(_))) {
            self.overflowed = true;
        }
        r
    }

    //--- bin side ----------------------------------------------------------

    fn pd_find(&self, hc: usize, hb: usize, q: usize, r: &BitStr) -> Option<Hit> {
        let m = &self.meter;
        let (b, v, qsi) = self.coords(hc, hb);
        let (s, e) = self.pds[b].range(q, m);
        let alphas = self.varpds[v].read_group(qsi, q, m);
        debug_assert_eq!(alphas.len(), e - s);
        let (j0, j1) = match_range(&alphas, r)?;
        let ptr = self.pds[b].read_slots(s + j0, s + j0 + 1, m)[0] as usize;
        let full = self.motels[b].read(ptr, m).ok()?;
        (full == r.value()).then_some(Hit { start: s, j0, j1 })
    }

    fn pd_insert(&mut self, hc: usize, hb: usize, q: usize, r: &BitStr) -> Result<()> {
        let (b, v, qsi) = self.coords(hc, hb);
        let m = &self.meter;
        let (s, e) = self.pds[b].range(q, m);
        let ptrs = self.pds[b].read_slots(s, e, m);
        let alphas = self.varpds[v].read_group(qsi, q, m);
        let motel = &self.motels[b];
        let ell = self.params.ell;
        let plan = plan_insert(&alphas, r, |j| {
            BitStr::new(motel.read(ptrs[j] as usize, m).expect("bin pointer"), ell)
        });
        let var = &self.varpds[v];
        if var.occupancy() + 1 > self.params.var_f || var.payload_bits() + plan.added_bits(&alphas) > self.params.var_l {
            return Err(Error::Overflow(Component::VarPocketDict));
        }
        for (j, a) in &plan.extend {
            self.varpds[v].replace(qsi, q, *j, a, m)?;
        }
        self.varpds[v].insert(qsi, q, &plan.alpha, plan.rank, m)?;
        let ptr = self.motels[b].insert(r.value(), m)?;
        self.pds[b].insert_at(q, s + plan.rank, ptr as u128, m)
    }

    /// Removes the entry at rank `j` of group `q` of bin `hb`.
    fn pd_remove(&mut self, hc: usize, hb: usize, q: usize, start: usize, j: usize) -> Result<()> {
        let (b, v, qsi) = self.coords(hc, hb);
        let m = &self.meter;
        let ptr = self.pds[b].remove_at(q, start + j, m)? as usize;
        self.motels[b].delete(ptr, m)?;
        self.varpds[v].delete(qsi, q, j, m)?;
        let alphas = self.varpds[v].read_group(qsi, q, m);
        for (k, a) in shrink_group_remainders(&alphas) {
            self.varpds[v].replace(qsi, q, k, &a, m)?;
        }
        Ok(())
    }

    //--- spare side --------------------------------------------------------

    fn csd_alphas(&self, hc: usize, csd: usize, s: usize, e: usize) -> Vec<BitStr> {
        self.sids[hc].frame(csd, &self.meter)[s..e].to_vec()
    }

    fn csd_find(&self, hc: usize, csd: usize, hb: usize, q: usize, r: &BitStr) -> Option<Hit> {
        let m = &self.meter;
        let sid = &self.sids[hc];
        let (s, e) = sid.group_range(csd, hb, q, m);
        let alphas = self.csd_alphas(hc, csd, s, e);
        let (j0, j1) = match_range(&alphas, r)?;
        let ptr = sid.split(sid.csd(csd).record(s + j0).key).2 as usize;
        let full = sid.motel(csd).read(ptr, m).ok()?;
        (full == r.value()).then_some(Hit { start: s, j0, j1 })
    }

    fn csd_insert(&mut self, hc: usize, csd: usize, hb: usize, q: usize, r: &BitStr) -> Result<()> {
        let m = &self.meter;
        let p = &self.params;
        let sid = &self.sids[hc];
        if sid.cardinality() >= p.f_tilde {
            return Err(Error::Overflow(Component::Sid));
        }
        if sid.csd(csd).is_full() {
            return Err(Error::Overflow(Component::Csd));
        }
        let (s, e) = sid.group_range(csd, hb, q, m);
        let frame = sid.frame(csd, m);
        let alphas = frame[s..e].to_vec();
        let ptrs: Vec<usize> = (s..e).map(|i| sid.split(sid.csd(csd).record(i).key).2 as usize).collect();
        let plan = plan_insert(&alphas, r, |j| {
            BitStr::new(sid.motel(csd).read(ptrs[j], m).expect("spare pointer"), p.ell)
        });
        let vcsd = &sid.vcsds()[csd / p.vcsd_frames];
        if vcsd.element_count() + 1 > p.vcsd_f || vcsd.payload_bits() + plan.added_bits(&alphas) > p.vcsd_l {
            return Err(Error::Overflow(Component::VarCsd));
        }
        let sid = &mut self.sids[hc];
        for (j, a) in &plan.extend {
            sid.frame_replace(csd, s + j, a, m)?;
        }
        sid.frame_insert(csd, s + plan.rank, &plan.alpha, m)?;
        let ptr = sid.motel_mut(csd).insert(r.value(), m)?;
        sid.insert_record_at(csd, s + plan.rank, hb, q, ptr as u128, m)
    }

    /// Removes record `at` of a CSD with its motel entry and prefix, and
    /// returns its quotient and full remainder.
    fn csd_remove(&mut self, hc: usize, csd: usize, at: usize) -> Result<(usize, BitStr)> {
        let m = &self.meter;
        let ell = self.params.ell;
        let sid = &mut self.sids[hc];
        let (hb, q, ptr) = sid.split(sid.csd(csd).record(at).key);
        let r = BitStr::new(sid.motel(csd).read(ptr as usize, m)?, ell);
        sid.frame_delete(csd, at, m)?;
        sid.motel_mut(csd).delete(ptr as usize, m)?;
        sid.remove_record_at(csd, at, m)?;
        let (s, e) = sid.group_range(csd, hb, q, m);
        let alphas = sid.frame(csd, m)[s..e].to_vec();
        for (k, a) in shrink_group_remainders(&alphas) {
            sid.frame_replace(csd, s + k, &a, m)?;
        }
        Ok((q, r))
    }

    //--- operations --------------------------------------------------------

    fn count_at(&self, d: &Decomposition, csd: usize) -> usize {
        let r = self.rem(d.r);
        let (b, _, _) = self.coords(d.hc, d.hb);
        let here = self.pd_find(d.hc, d.hb, d.q, &r).map_or(0, |h| h.j1 - h.j0);
        if self.pds[b].is_full() {
            here + self.csd_find(d.hc, csd, d.hb, d.q, &r).map_or(0, |h| h.j1 - h.j0)
        } else {
            here
        }
    }

    fn do_insert(&mut self, x: u128) -> Result<()> {
        if self.len >= self.params.n {
            return Err(Error::CapacityExceeded(self.params.n));
        }
        let (_, d, csd) = self.keying.locate(x, &self.params)?;
        if self.set_mode == SetMode::Set && self.count_at(&d, csd) > 0 {
            return Ok(());
        }
        let r = self.rem(d.r);
        let (b, _, _) = self.coords(d.hc, d.hb);
        let res = if self.pds[b].load_header(&self.meter) < self.params.f {
            self.pd_insert(d.hc, d.hb, d.q, &r)
        } else {
            self.csd_insert(d.hc, csd, d.hb, d.q, &r)
        };
        self.track(res)?;
        self.len += 1;
        Ok(())
    }

    fn do_delete(&mut self, x: u128) -> Result<()> {
        let (_, d, csd) = self.keying.locate(x, &self.params)?;
        let r = self.rem(d.r);
        let (b, _, _) = self.coords(d.hc, d.hb);
        let full = self.pds[b].load_header(&self.meter) == self.params.f;
        if let Some(h) = self.pd_find(d.hc, d.hb, d.q, &r) {
            self.pd_remove(d.hc, d.hb, d.q, h.start, h.j1 - 1)?;
            if full {
                if let Some((c, at)) = self.sids[d.hc].pop_target(d.hb, &self.meter) {
                    let (q, r2) = self.csd_remove(d.hc, c, at)?;
                    let res = self.pd_insert(d.hc, d.hb, q, &r2);
                    self.track(res)?;
                }
            }
        } else if full {
            let h = self
                .csd_find(d.hc, csd, d.hb, d.q, &r)
                .ok_or(Error::NotFound)?;
            self.csd_remove(d.hc, csd, h.start + h.j1 - 1)?;
        } else {
            return Err(Error::NotFound);
        }
        self.len -= 1;
        Ok(())
    }

    /// Checks one group: pointer order, prefix-of relation, and minimality.
    fn audit_group(rep: &mut AuditReport, what: &str, alphas: &[BitStr], rs: &[BitStr]) {
        if alphas.len() != rs.len() {
            rep.sync_violations += 1;
            rep.structural_errors.push(format!("{what}: {} prefixes for {} entries", alphas.len(), rs.len()));
            return;
        }
        rep.alpha_bits += alphas.iter().map(|a| a.len() as u64).sum::<u64>();
        let ordered = rs.windows(2).all(|w| w[0].lex_cmp(&w[1]).is_le());
        let synced = alphas.iter().zip(rs).all(|(a, r)| a.is_prefix_of(r));
        if !ordered || !synced {
            rep.sync_violations += 1;
        }
        if compute_group_remainders(rs) != alphas {
            rep.minimality_violations += 1;
        }
    }
}

impl Dictionary for SparseCrateDict {
    fn insert(&mut self, x: u128) -> Result<()> {
        self.meter.begin_op();
        let r = self.do_insert(x);
        self.meter.end_op();
        r
    }

    fn delete(&mut self, x: u128) -> Result<()> {
        self.meter.begin_op();
        let r = self.do_delete(x);
        self.meter.end_op();
        r
    }

    fn query(&self, x: u128) -> bool {
        let Ok((_, d, csd)) = self.keying.locate(x, &self.params) else {
            return false;
        };
        self.meter.begin_op();
        let r = self.rem(d.r);
        let (b, _, _) = self.coords(d.hc, d.hb);
        let found = self.pd_find(d.hc, d.hb, d.q, &r).is_some()
            || (self.pds[b].load_header(&self.meter) == self.params.f
                && self.csd_find(d.hc, csd, d.hb, d.q, &r).is_some());
        self.meter.end_op();
        found
    }

    fn multiplicity(&self, x: u128) -> usize {
        match self.keying.locate(x, &self.params) {
            Ok((_, d, csd)) => self.count_at(&d, csd),
            Err(_) => 0,
        }
    }

    fn len(&self) -> u64 {
        self.len
    }

    fn meter(&self) -> &AccessMeter {
        &self.meter
    }

    fn params(&self) -> &Params {
        &self.params
    }

    fn overflowed(&self) -> bool {
        self.overflowed
    }

    fn audit(&self) -> AuditReport {
        let p = &self.params;
        let ell = p.ell;
        let m = AccessMeter::new(p.w_eff);
        let mut rep = AuditReport {
            elements: self.len,
            pds: self.pds.len(),
            formula_bits: p.total_bits() as u64,
            ..AuditReport::default()
        };
        let mut bits = 0u64;
        for v in &self.varpds {
            bits += v.total_bits() as u64;
            if let Err(e) = v.check() {
                rep.structural_errors.push(format!("variable bin: {e}"));
            }
        }
        for hc in 0..p.crates {
            for hb in 0..p.pds_per_crate {
                let (b, v, qsi) = self.coords(hc, hb);
                let pd = &self.pds[b];
                let motel = &self.motels[b];
                bits += (pd.total_bits() + motel.total_bits()) as u64;
                if let Err(e) = pd.check().and_then(|_| motel.check()) {
                    rep.structural_errors.push(format!("bin {b}: {e}"));
                    continue;
                }
                let occ = pd.occupancy();
                rep.pd_elements += occ as u64;
                rep.full_pds += (occ == p.f) as usize;
                if motel.occupancy() != occ {
                    rep.structural_errors.push(format!("bin {b}: motel holds {} of {occ}", motel.occupancy()));
                }
                for q in 0..p.m {
                    let (s, e) = pd.range(q, &m);
                    let mut rs = Vec::with_capacity(e - s);
                    for i in s..e {
                        match motel.read(pd.slot(i) as usize, &m) {
                            Ok(r) => rs.push(BitStr::new(r, ell)),
                            Err(_) => rep.structural_errors.push(format!("bin {b}: dangling pointer")),
                        }
                    }
                    let alphas = self.varpds[v].read_group(qsi, q, &m);
                    Self::audit_group(&mut rep, &format!("bin {b} quotient {q}"), &alphas, &rs);
                }
            }
            let sid = &self.sids[hc];
            bits += sid.allocated_bits() as u64;
            if let Err(e) = sid.audit() {
                rep.structural_errors.push(format!("spare {hc}: {e}"));
                continue;
            }
            rep.sid_elements += sid.cardinality() as u64;
            rep.max_sid_load = rep.max_sid_load.max(sid.cardinality());
            let mut bins_seen = Vec::new();
            for csd in 0..sid.csd_count() {
                let c = sid.csd(csd);
                let frame = sid.frame(csd, &m);
                let mut i = 0;
                while i < c.support() {
                    let (hb, q, _) = sid.split(c.record(i).key);
                    bins_seen.push(hb);
                    let (s, e) = sid.group_range(csd, hb, q, &m);
                    let rs: Vec<BitStr> = (s..e)
                        .map(|k| {
                            let ptr = sid.split(c.record(k).key).2 as usize;
                            BitStr::new(sid.motel(csd).read(ptr, &m).unwrap_or(0), ell)
                        })
                        .collect();
                    Self::audit_group(&mut rep, &format!("spare {hc} CSD {csd}"), &frame[s..e], &rs);
                    i = e;
                }
            }
            bins_seen.sort_unstable();
            bins_seen.dedup();
            for hb in bins_seen {
                if !self.pds[hc * p.pds_per_crate + hb].is_full() {
                    rep.invariant1_violations += 1;
                }
            }
        }
        rep.allocated_bits = bits;
        rep
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hashing::{recompose, Overrides};

    fn params() -> Params {
        Params::derive(1 << 12, 2f64.powi(70), 64, &Overrides::default()).unwrap()
    }

    fn dict() -> SparseCrateDict {
        SparseCrateDict::new(params(), SetMode::Multiset, Seed::from_u64(3)).unwrap()
    }

    fn elem(d: &SparseCrateDict, hb: usize, q: usize, r: u128) -> u128 {
        recompose(&Decomposition { hc: 0, hb, q, r }, &d.params)
    }

    #[test]
    fn shape() {
        let p = params();
        assert_eq!(p.mode, Mode::Sparse);
        assert_eq!(p.ell, 70);
        assert_eq!(p.m, 10);
        assert_eq!(p.f, 17);
    }

    #[test]
    fn colliding_prefixes() {
        let mut d = dict();
        let r1 = 0b0010u128 << 66;
        let r2 = 0b0011u128 << 66;
        let x1 = elem(&d, 4, 2, r1);
        let x2 = elem(&d, 4, 2, r2);
        let x3 = elem(&d, 4, 2, 1u128 << 69);
        d.insert(x1).unwrap();
        assert_eq!(d.varpds[0].read_group(4, 2, &d.meter), vec![BitStr::EMPTY]);
        d.insert(x2).unwrap();
        d.insert(x3).unwrap();
        assert_eq!(
            d.varpds[0].read_group(4, 2, &d.meter),
            vec![BitStr::parse("0010"), BitStr::parse("0011"), BitStr::parse("1")]
        );
        assert!(d.query(x1) && d.query(x2) && d.query(x3));
        // a near miss matches a prefix but fails the full comparison
        let near = elem(&d, 4, 2, r1 | 1);
        assert!(!d.query(near));
        d.delete(x3).unwrap();
        assert_eq!(
            d.varpds[0].read_group(4, 2, &d.meter),
            vec![BitStr::parse("0010"), BitStr::parse("0011")]
        );
        d.delete(x2).unwrap();
        assert_eq!(d.varpds[0].read_group(4, 2, &d.meter), vec![BitStr::EMPTY]);
        assert!(d.audit().is_clean());
    }

    #[test]
    fn absent_query_reads_no_motel() {
        let mut d = dict();
        let x = elem(&d, 1, 0, 1u128 << 69);
        d.insert(x).unwrap();
        d.insert(elem(&d, 1, 0, 0)).unwrap();
        let before = d.meter.reads();
        assert!(!d.query(elem(&d, 1, 1, 5)));
        let cost_empty_group = d.meter.reads() - before;
        let before = d.meter.reads();
        assert!(d.query(x));
        assert!(d.meter.reads() - before > cost_empty_group);
    }

    #[test]
    fn duplicates_share_prefix() {
        let mut d = dict();
        let x = elem(&d, 0, 3, 12345);
        let y = elem(&d, 0, 3, 1u128 << 69);
        d.insert(x).unwrap();
        d.insert(y).unwrap();
        d.insert(x).unwrap();
        assert_eq!(d.motels[0].occupancy(), 3);
        let g = d.varpds[0].read_group(0, 3, &d.meter);
        assert_eq!(g, vec![BitStr::parse("0"), BitStr::parse("0"), BitStr::parse("1")]);
        assert_eq!(d.multiplicity(x), 2);
        d.delete(x).unwrap();
        assert!(d.query(x));
        d.delete(x).unwrap();
        assert!(!d.query(x));
        assert!(d.audit().is_clean());
    }

    #[test]
    fn spare_backlog_refills_bin() {
        let mut d = dict();
        let f = d.params.f;
        let xs: Vec<u128> = (0..f + 2)
            .map(|i| elem(&d, 5, i % d.params.m, ((i as u128) * 0x9e37_79b9_7f4a_7c15) % (1u128 << 70)))
            .collect();
        for &x in &xs {
            d.insert(x).unwrap();
        }
        assert!(d.pds[5].is_full());
        assert_eq!(d.sids[0].cardinality(), 2);
        assert!(xs.iter().all(|x| d.query(*x)));
        assert!(d.audit().is_clean());
        d.delete(xs[0]).unwrap();
        assert_eq!(d.sids[0].cardinality(), 1);
        assert!(d.pds[5].is_full());
        let a = d.audit();
        assert!(a.is_clean(), "{a:?}");
        // whichever of the last two stayed behind, the spare ends up empty
        d.delete(xs[f + 1]).unwrap();
        assert_eq!(d.sids[0].cardinality(), 0);
        assert!(d.audit().is_clean());
    }
}

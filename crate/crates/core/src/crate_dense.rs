//! Dense-regime crate dictionary: each crate is an interval of pocket
//! dictionaries plus one spare. An element lives in the spare only while its
//! bin is full.

use crate::bits::AccessMeter;
use crate::dictionary::{AuditReport, Dictionary, SetMode};
use crate::error::{Error, Result};
use crate::hashing::{decompose, sid_hasher, Decomposition, Mode, Params, Permutation, RangeHash, Seed};
use crate::pocket_dict::PocketDict;
use crate::sid::Sid;

/// Input mapping shared by both regimes: the set-mode permutation and the
/// spare's CSD selector.
#[derive(Clone, Debug)]
pub(crate) struct Keying {
    pub perm: Option<Permutation>,
    pub sid_hash: RangeHash,
}

impl Keying {
    pub fn new(p: &Params, mode: SetMode, seed: &Seed) -> Self {
        Keying {
            perm: (mode == SetMode::Set).then(|| Permutation::new(p.universe_size, seed)),
            sid_hash: sid_hasher(p, seed),
        }
    }

    /// Permuted element, its coordinates, and its CSD index.
    pub fn locate(&self, x: u128, p: &Params) -> Result<(u128, Decomposition, usize)> {
        if x >= p.universe_size {
            return Err(Error::OutOfUniverse(x));
        }
        let y = self.perm.as_ref().map_or(x, |pm| pm.permute(x));
        let d = decompose(y, p)?;
        Ok((y, d, self.sid_hash.hash(y) as usize))
    }
}

#[derive(Clone, Debug)]
pub struct DenseCrateDict {
    pub(crate) params: Params,
    pub(crate) seed: Seed,
    pub(crate) set_mode: SetMode,
    keying: Keying,
    pub(crate) pds: Vec<PocketDict>,
    pub(crate) sids: Vec<Sid>,
    meter: AccessMeter,
    pub(crate) len: u64,
    pub(crate) overflowed: bool,
}

impl DenseCrateDict {
    pub fn new(params: Params, set_mode: SetMode, seed: Seed) -> Result<Self> {
        if params.mode != Mode::Dense {
            return Err(Error::Config("parameters select the sparse regime".into()));
        }
        let bins = params.crates * params.pds_per_crate;
        let pds = vec![PocketDict::new(params.m, params.f, params.slot_bits); bins];
        let sids = vec![Sid::new(&params); params.crates];
        Ok(DenseCrateDict {
            keying: Keying::new(&params, set_mode, &seed),
            meter: AccessMeter::new(params.w_eff),
            params,
            seed,
            set_mode,
            pds,
            sids,
            len: 0,
            overflowed: false,
        })
    }

    /// Reassembles a dictionary from validated components.
    pub(crate) fn from_parts(
        params: Params,
        set_mode: SetMode,
        seed: Seed,
        pds: Vec<PocketDict>,
        sids: Vec<Sid>,
        overflowed: bool,
    ) -> Result<Self> {
        let mut d = DenseCrateDict::new(params, set_mode, seed)?;
        if pds.len() != d.pds.len() || sids.len() != d.sids.len() {
            return Err(Error::Format("component count mismatch".into()));
        }
        d.len = pds.iter().map(|p| p.occupancy() as u64).sum::<u64>()
            + sids.iter().map(|s| s.cardinality() as u64).sum::<u64>();
        d.pds = pds;
        d.sids = sids;
        d.overflowed = overflowed;
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

    pub fn sids(&self) -> &[Sid] {
        &self.sids
    }

    fn bin(&self, d: &Decomposition) -> usize {
        d.hc * self.params.pds_per_crate + d.hb
    }

    fn do_insert(&mut self, x: u128) -> Result<()> {
        if self.len >= self.params.n {
            return Err(Error::CapacityExceeded(self.params.n));
        }
        let (_, d, csd) = self.keying.locate(x, &self.params)?;
        if self.set_mode == SetMode::Set && self.multiplicity_at(&d, csd) > 0 {
            return Ok(());
        }
        let b = self.bin(&d);
        let m = &self.meter;
        if self.pds[b].load_header(m) < self.params.f {
            self.pds[b].insert(d.q, d.r, m)?;
        } else if let Err(e) = self.sids[d.hc].insert(csd, d.hb, d.q, d.r, m) {
            if matches!(e, Error::Overflow(_)) {
                self.overflowed = true;
            }
            return Err(e);
        }
        self.len += 1;
        Ok(())
    }

    fn do_delete(&mut self, x: u128) -> Result<()> {
        let (_, d, csd) = self.keying.locate(x, &self.params)?;
        let b = self.bin(&d);
        let m = &self.meter;
        let pd = &mut self.pds[b];
        let full = pd.load_header(m) == self.params.f;
        match pd.delete(d.q, d.r, m) {
            Ok(()) => {
                if full {
                    if let Some((q, r)) = self.sids[d.hc].pop(d.hb, m)? {
                        self.pds[b].insert(q, r, m)?;
                    }
                }
            }
            Err(Error::NotFound) if full => self.sids[d.hc].delete(csd, d.hb, d.q, d.r, m)?,
            Err(e) => return Err(e),
        }
        self.len -= 1;
        Ok(())
    }

    fn multiplicity_at(&self, d: &Decomposition, csd: usize) -> usize {
        let m = &self.meter;
        let pd = &self.pds[self.bin(d)];
        let here = pd.query(d.q, d.r, m);
        if pd.is_full() {
            here + self.sids[d.hc].query(csd, d.hb, d.q, d.r, m)
        } else {
            here
        }
    }
}

impl Dictionary for DenseCrateDict {
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
        let m = &self.meter;
        let pd = &self.pds[self.bin(&d)];
        let found = pd.query(d.q, d.r, m) > 0
            || (pd.load_header(m) == self.params.f && self.sids[d.hc].query(csd, d.hb, d.q, d.r, m) > 0);
        self.meter.end_op();
        found
    }

    fn multiplicity(&self, x: u128) -> usize {
        match self.keying.locate(x, &self.params) {
            Ok((_, d, csd)) => self.multiplicity_at(&d, csd),
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
        let mut rep = AuditReport {
            elements: self.len,
            pds: self.pds.len(),
            formula_bits: p.total_bits() as u64,
            ..AuditReport::default()
        };
        let mut bits = 0u64;
        for (i, pd) in self.pds.iter().enumerate() {
            bits += pd.total_bits() as u64;
            if let Err(e) = pd.check() {
                rep.structural_errors.push(format!("bin {i}: {e}"));
            }
            let occ = pd.occupancy();
            rep.pd_elements += occ as u64;
            if occ == p.f {
                rep.full_pds += 1;
            }
        }
        for (c, sid) in self.sids.iter().enumerate() {
            bits += sid.allocated_bits() as u64;
            if let Err(e) = sid.audit() {
                rep.structural_errors.push(format!("spare {c}: {e}"));
            }
            rep.sid_elements += sid.cardinality() as u64;
            rep.max_sid_load = rep.max_sid_load.max(sid.cardinality());
            let mut bins: Vec<usize> = sid.records().iter().map(|(_, r)| sid.split(r.key).0).collect();
            bins.sort_unstable();
            bins.dedup();
            for hb in bins {
                if !self.pds[c * p.pds_per_crate + hb].is_full() {
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

    fn small(mode: SetMode) -> DenseCrateDict {
        let p = Params::derive(1 << 12, 1024.0, 64, &Overrides::default()).unwrap();
        DenseCrateDict::new(p, mode, Seed::from_u64(1)).unwrap()
    }

    /// Elements of one bin with distinct remainders.
    fn bin_elements(d: &DenseCrateDict, hb: usize, count: usize) -> Vec<u128> {
        (0..count)
            .map(|i| {
                let dec = Decomposition {
                    hc: 0,
                    hb,
                    q: i % d.params.m,
                    r: (i / d.params.m) as u128 + 3,
                };
                recompose(&dec, &d.params)
            })
            .collect()
    }

    #[test]
    fn roundtrip_and_duplicates() {
        let mut d = small(SetMode::Multiset);
        assert!(!d.query(77));
        d.insert(77).unwrap();
        assert!(d.query(77));
        d.insert(77).unwrap();
        d.delete(77).unwrap();
        assert!(d.query(77));
        d.delete(77).unwrap();
        assert!(!d.query(77));
        assert_eq!(d.delete(77), Err(Error::NotFound));
        d.insert(77).unwrap();
        assert!(d.query(77));
    }

    #[test]
    fn full_bin_overflows_into_spare_and_refills() {
        let mut d = small(SetMode::Multiset);
        let f = d.params.f;
        let xs = bin_elements(&d, 2, f + 1);
        for &x in &xs {
            d.insert(x).unwrap();
        }
        assert!(d.pds[2].is_full());
        assert_eq!(d.sids[0].cardinality(), 1);
        let last = xs[f];
        assert!(d.query(last));
        assert!(d.audit().is_clean());
        // delete a bin resident: the spare element migrates back
        d.delete(xs[0]).unwrap();
        assert_eq!(d.sids[0].cardinality(), 0);
        assert!(d.pds[2].is_full());
        assert!(d.query(last));
        // delete from a non-full bin: simple removal
        d.delete(xs[1]).unwrap();
        assert_eq!(d.pds[2].occupancy(), f - 1);
        // a spare-only element is removed from the spare
        d.insert(xs[1]).unwrap();
        d.insert(xs[0]).unwrap();
        assert_eq!(d.sids[0].cardinality(), 1);
        d.delete(xs[0]).unwrap();
        assert_eq!(d.sids[0].cardinality(), 0);
        assert!(d.audit().is_clean());
    }

    #[test]
    fn set_mode_is_idempotent() {
        let mut d = small(SetMode::Set);
        d.insert(5).unwrap();
        d.insert(5).unwrap();
        assert_eq!(d.len(), 1);
        d.delete(5).unwrap();
        assert!(!d.query(5));
    }

    #[test]
    fn capacity_and_universe() {
        let p = Params::derive(4, 1024.0, 64, &Overrides::default()).unwrap();
        let mut d = DenseCrateDict::new(p, SetMode::Multiset, Seed::from_u64(2)).unwrap();
        for x in 0..4 {
            d.insert(x).unwrap();
        }
        assert_eq!(d.insert(9), Err(Error::CapacityExceeded(4)));
        assert_eq!(d.delete(1 << 20), Err(Error::OutOfUniverse(1 << 20)));
    }

    #[test]
    fn empty_audit_matches_formula() {
        let d = small(SetMode::Multiset);
        let a = d.audit();
        assert!(a.is_clean());
        assert_eq!(a.full_pds, 0);
        let p = &d.params;
        let pd_part = p.crates * p.pds_per_crate * (p.m + p.f * (1 + p.ell));
        assert_eq!(a.allocated_bits as usize, pd_part + p.crates * p.sid_bits());
    }
}

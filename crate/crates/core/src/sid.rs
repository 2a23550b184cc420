//! The per-crate spare: `f_tilde` CSDs addressed by a hash, with one
//! doubly-linked list per bin threaded through the CSD records.
//!
//! List `b` visits every CSD holding at least one record whose leading key
//! field is `b`. All records of one group in one CSD carry the same links.
//! The null link is `f_tilde`. In sparse mode each CSD also owns a pocket
//! motel of full remainders, and groups of consecutive CSDs share a VarCSD
//! whose frames hold the records' adaptive remainders.

use std::collections::{BTreeMap, BTreeSet};

use crate::bits::{AccessMeter, BitBuffer, BitStr};
use crate::csd::{CountingSetDict, Record, VarCountingSetDict};
use crate::error::{Component, Error, Result};
use crate::hashing::{Mode, Params};
use crate::pocket_motel::PocketMotel;

#[derive(Clone, Debug, PartialEq)]
pub struct Sid {
    f_tilde: usize,
    bins: usize,
    hb_bits: usize,
    q_bits: usize,
    value_bits: usize,
    link_bits: usize,
    frames: usize,
    csds: Vec<CountingSetDict>,
    heads: BitBuffer,
    motels: Vec<PocketMotel>,
    vcsds: Vec<VarCountingSetDict>,
    card: usize,
}

/// Image of one SID, in the order it is serialized.
pub struct SidImages<'a> {
    pub csds: Vec<&'a BitBuffer>,
    pub heads: &'a BitBuffer,
    pub motels: Vec<&'a BitBuffer>,
    pub vcsds: Vec<&'a BitBuffer>,
}

impl Sid {
    pub fn new(p: &Params) -> Self {
        let f_tilde = p.f_tilde;
        let key_bits = p.ell_tilde;
        let csds = (0..f_tilde)
            .map(|_| CountingSetDict::new(p.f_hat, key_bits, p.link_bits, p.c_hat))
            .collect();
        let mut heads = BitBuffer::new(p.heads_bits());
        for b in 0..p.pds_per_crate {
            heads
                .write_bits(b * p.link_bits, p.link_bits, f_tilde as u128)
                .unwrap();
        }
        let (motels, vcsds) = match p.mode {
            Mode::Dense => (Vec::new(), Vec::new()),
            Mode::Sparse => (
                (0..f_tilde).map(|_| PocketMotel::new(p.f_hat, p.ell)).collect(),
                (0..p.vcsds_per_crate)
                    .map(|_| VarCountingSetDict::new(p.vcsd_frames, p.vcsd_f, p.vcsd_l))
                    .collect(),
            ),
        };
        Sid {
            f_tilde,
            bins: p.pds_per_crate,
            hb_bits: p.hb_bits,
            q_bits: p.q_bits,
            value_bits: p.value_bits,
            link_bits: p.link_bits,
            frames: p.vcsd_frames,
            csds,
            heads,
            motels,
            vcsds,
            card: 0,
        }
    }

    /// Rebuilds a SID from images produced by [`Sid::images`].
    pub fn from_images(
        p: &Params,
        csds: Vec<BitBuffer>,
        heads: BitBuffer,
        motels: Vec<BitBuffer>,
        vcsds: Vec<BitBuffer>,
    ) -> Result<Self> {
        let mut s = Sid::new(p);
        if csds.len() != s.csds.len() || motels.len() != s.motels.len() || vcsds.len() != s.vcsds.len() {
            return Err(Error::Format("SID component count mismatch".into()));
        }
        if heads.bit_capacity() != s.heads.bit_capacity() {
            return Err(Error::Format("SID heads image has the wrong size".into()));
        }
        s.csds = csds
            .into_iter()
            .map(|b| CountingSetDict::from_image(p.f_hat, p.ell_tilde, p.link_bits, p.c_hat, b))
            .collect::<Result<_>>()?;
        s.motels = motels
            .into_iter()
            .map(|b| PocketMotel::from_image(p.f_hat, p.ell, b))
            .collect::<Result<_>>()?;
        s.vcsds = vcsds
            .into_iter()
            .map(|b| VarCountingSetDict::from_image(p.vcsd_frames, p.vcsd_f, p.vcsd_l, b))
            .collect::<Result<_>>()?;
        s.heads = heads;
        s.card = s
            .csds
            .iter()
            .map(|c| (0..c.support()).map(|i| c.record(i).count).sum::<usize>())
            .sum();
        s.audit().map_err(Error::Format)?;
        Ok(s)
    }

    pub fn images(&self) -> SidImages<'_> {
        SidImages {
            csds: self.csds.iter().map(|c| c.image()).collect(),
            heads: &self.heads,
            motels: self.motels.iter().map(|m| m.image()).collect(),
            vcsds: self.vcsds.iter().map(|v| v.image()).collect(),
        }
    }

    pub fn csd_count(&self) -> usize {
        self.f_tilde
    }

    pub fn csd(&self, i: usize) -> &CountingSetDict {
        &self.csds[i]
    }

    pub fn motel(&self, i: usize) -> &PocketMotel {
        &self.motels[i]
    }

    pub fn motel_mut(&mut self, i: usize) -> &mut PocketMotel {
        &mut self.motels[i]
    }

    pub fn vcsds(&self) -> &[VarCountingSetDict] {
        &self.vcsds
    }

    /// Multiset cardinality currently held.
    pub fn cardinality(&self) -> usize {
        self.card
    }

    /// Closed-form allocated bits of every component.
    pub fn allocated_bits(&self) -> usize {
        self.csds.iter().map(|c| c.total_bits()).sum::<usize>()
            + self.heads.bit_capacity()
            + self.motels.iter().map(|m| m.total_bits()).sum::<usize>()
            + self.vcsds.iter().map(|v| v.total_bits()).sum::<usize>()
    }

    fn null(&self) -> usize {
        self.f_tilde
    }

    pub fn key(&self, hb: usize, q: usize, value: u128) -> u128 {
        ((hb as u128) << (self.q_bits + self.value_bits)) | ((q as u128) << self.value_bits) | value
    }

    /// Splits a record key into `(hb, q, value)`.
    pub fn split(&self, key: u128) -> (usize, usize, u128) {
        let vmask = if self.value_bits == 128 { u128::MAX } else { (1u128 << self.value_bits) - 1 };
        let value = key & vmask;
        let rest = if self.value_bits >= 128 { 0 } else { key >> self.value_bits };
        let q = (rest & ((1u128 << self.q_bits) - 1)) as usize;
        (((rest >> self.q_bits) as usize), q, value)
    }

    fn head(&self, hb: usize, meter: &AccessMeter) -> usize {
        meter.charge_read(hb * self.link_bits, self.link_bits);
        self.heads.read_bits(hb * self.link_bits, self.link_bits).unwrap() as usize
    }

    fn set_head(&mut self, hb: usize, v: usize, meter: &AccessMeter) {
        meter.charge_write(hb * self.link_bits, self.link_bits);
        self.heads
            .write_bits(hb * self.link_bits, self.link_bits, v as u128)
            .unwrap();
    }

    /// Head of list `hb`, if the list is nonempty.
    pub fn list_head(&self, hb: usize, meter: &AccessMeter) -> Option<usize> {
        let h = self.head(hb, meter);
        (h != self.null()).then_some(h)
    }

    /// Records of CSD `csd` with leading field `hb`.
    fn bin_range(&self, csd: usize, hb: usize, meter: &AccessMeter) -> (usize, usize) {
        self.csds[csd].prefix_range(self.hb_bits, hb as u128, meter)
    }

    /// Records of CSD `csd` with leading fields `(hb, q)`.
    pub fn group_range(&self, csd: usize, hb: usize, q: usize, meter: &AccessMeter) -> (usize, usize) {
        let prefix = ((hb as u128) << self.q_bits) | q as u128;
        self.csds[csd].prefix_range(self.hb_bits + self.q_bits, prefix, meter)
    }

    fn relink(&mut self, csd: usize, hb: usize, next: Option<usize>, prev: Option<usize>, meter: &AccessMeter) -> Result<()> {
        let (s, e) = self.bin_range(csd, hb, meter);
        if s == e {
            return Err(Error::Precondition(format!("CSD {csd} is on list {hb} without records")));
        }
        let r = self.csds[csd].record(s);
        self.csds[csd].set_links(s, e, next.unwrap_or(r.next), prev.unwrap_or(r.prev), meter)
    }

    /// Inserts a new record with multiplicity one at position `at` of CSD
    /// `csd`, linking the CSD into list `hb` when the bin is new there.
    pub fn insert_record_at(&mut self, csd: usize, at: usize, hb: usize, q: usize, value: u128, meter: &AccessMeter) -> Result<()> {
        if self.card >= self.f_tilde {
            return Err(Error::Overflow(Component::Sid));
        }
        let (s, e) = self.bin_range(csd, hb, meter);
        let fresh = s == e;
        let old_head = if fresh { self.head(hb, meter) } else { self.null() };
        let (next, prev) = if fresh {
            (old_head, self.null())
        } else {
            let r = self.csds[csd].record(s);
            (r.next, r.prev)
        };
        let key = self.key(hb, q, value);
        self.csds[csd].insert_at(at, Record { key, next, prev, count: 1 }, meter)?;
        if fresh {
            if old_head != self.null() {
                self.relink(old_head, hb, None, Some(csd), meter)?;
            }
            self.set_head(hb, csd, meter);
        }
        self.card += 1;
        Ok(())
    }

    /// Removes record `at` of CSD `csd` entirely, unlinking the CSD from its
    /// bin's list when it held the last such record.
    pub fn remove_record_at(&mut self, csd: usize, at: usize, meter: &AccessMeter) -> Result<Record> {
        let rec = self.csds[csd].remove_at(at, meter)?;
        let (hb, _, _) = self.split(rec.key);
        let (s, e) = self.bin_range(csd, hb, meter);
        if s == e {
            if rec.prev == self.null() {
                self.set_head(hb, rec.next, meter);
            } else {
                self.relink(rec.prev, hb, Some(rec.next), None, meter)?;
            }
            if rec.next != self.null() {
                self.relink(rec.next, hb, None, Some(rec.prev), meter)?;
            }
        }
        self.card -= rec.count;
        Ok(rec)
    }

    /// Counts `(hb, q, value)` into CSD `csd`.
    pub fn insert(&mut self, csd: usize, hb: usize, q: usize, value: u128, meter: &AccessMeter) -> Result<()> {
        if self.card >= self.f_tilde {
            return Err(Error::Overflow(Component::Sid));
        }
        let key = self.key(hb, q, value);
        let recs = self.csds[csd].load(meter);
        if let Some(i) = recs.iter().position(|r| r.key == key) {
            self.csds[csd].increment(i, meter)?;
            self.card += 1;
            return Ok(());
        }
        let at = recs.iter().take_while(|r| r.key < key).count();
        self.insert_record_at(csd, at, hb, q, value, meter)
    }

    pub fn query(&self, csd: usize, hb: usize, q: usize, value: u128, meter: &AccessMeter) -> usize {
        self.csds[csd].query(self.key(hb, q, value), meter)
    }

    /// Removes one copy of record `at` of CSD `csd`.
    fn take_one(&mut self, csd: usize, at: usize, meter: &AccessMeter) -> Result<Record> {
        let rec = self.csds[csd].record(at);
        if rec.count > 1 {
            self.csds[csd].decrement(at, meter)?;
            self.card -= 1;
            Ok(Record { count: 1, ..rec })
        } else {
            self.remove_record_at(csd, at, meter)
        }
    }

    pub fn delete(&mut self, csd: usize, hb: usize, q: usize, value: u128, meter: &AccessMeter) -> Result<()> {
        let i = self.csds[csd]
            .find(self.key(hb, q, value), meter)
            .ok_or(Error::NotFound)?;
        self.take_one(csd, i, meter).map(|_| ())
    }

    /// Location `(csd, record)` of the element a pop on bin `hb` would take.
    pub fn pop_target(&self, hb: usize, meter: &AccessMeter) -> Option<(usize, usize)> {
        let h = self.list_head(hb, meter)?;
        let (s, e) = self.bin_range(h, hb, meter);
        debug_assert!(s < e, "list head without records");
        Some((h, s))
    }

    /// Removes one element of bin `hb` and returns its `(q, value)`.
    pub fn pop(&mut self, hb: usize, meter: &AccessMeter) -> Result<Option<(usize, u128)>> {
        let Some((csd, at)) = self.pop_target(hb, meter) else {
            return Ok(None);
        };
        let rec = self.take_one(csd, at, meter)?;
        let (_, q, value) = self.split(rec.key);
        Ok(Some((q, value)))
    }

    /// Number of stored elements (with multiplicity) of bin `hb`.
    pub fn bin_count(&self, hb: usize) -> usize {
        let m = AccessMeter::new(64);
        let mut total = 0;
        let mut cur = self.head(hb, &m);
        while cur != self.null() {
            let (s, e) = self.bin_range(cur, hb, &m);
            total += (s..e).map(|i| self.csds[cur].record(i).count).sum::<usize>();
            cur = self.csds[cur].record(s).next;
        }
        total
    }

    /// Every stored record as `(csd, record)`.
    pub fn records(&self) -> Vec<(usize, Record)> {
        let mut out = Vec::new();
        for (i, c) in self.csds.iter().enumerate() {
            for j in 0..c.support() {
                out.push((i, c.record(j)));
            }
        }
        out
    }

    fn frame_of(&self, csd: usize) -> (usize, usize) {
        (csd / self.frames, csd % self.frames)
    }

    /// Adaptive remainders of CSD `csd`, in record order.
    pub fn frame(&self, csd: usize, meter: &AccessMeter) -> Vec<BitStr> {
        let (v, f) = self.frame_of(csd);
        self.vcsds[v].read_frame(f, meter)
    }

    pub fn frame_insert(&mut self, csd: usize, rank: usize, alpha: &BitStr, meter: &AccessMeter) -> Result<()> {
        let (v, f) = self.frame_of(csd);
        self.vcsds[v].insert(f, rank, alpha, meter)
    }

    pub fn frame_replace(&mut self, csd: usize, rank: usize, alpha: &BitStr, meter: &AccessMeter) -> Result<()> {
        let (v, f) = self.frame_of(csd);
        self.vcsds[v].replace(f, rank, alpha, meter)
    }

    pub fn frame_delete(&mut self, csd: usize, rank: usize, meter: &AccessMeter) -> Result<BitStr> {
        let (v, f) = self.frame_of(csd);
        self.vcsds[v].delete(f, rank, meter)
    }

    /// Structural audit: list reachability, mirrored prev links, shared
    /// links within a bin, head range, and the cardinality counter.
    pub fn audit(&self) -> std::result::Result<(), String> {
        let null = self.null();
        let mut holders: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        let mut links: BTreeMap<(usize, usize), (usize, usize)> = BTreeMap::new();
        let mut card = 0;
        for (i, c) in self.csds.iter().enumerate() {
            c.check()?;
            let mut last = None;
            for j in 0..c.support() {
                let r = c.record(j);
                card += r.count;
                if last.is_some_and(|k| k > r.key) {
                    return Err(format!("CSD {i} records out of order"));
                }
                last = Some(r.key);
                let (hb, _, _) = self.split(r.key);
                if hb >= self.bins {
                    return Err(format!("CSD {i} record for bin {hb} out of range"));
                }
                holders.entry(hb).or_default().insert(i);
                let l = (r.next, r.prev);
                if let Some(prev) = links.insert((hb, i), l) {
                    if prev != l {
                        return Err(format!("CSD {i} bin {hb} records disagree on links"));
                    }
                }
            }
        }
        if card != self.card {
            return Err(format!("cardinality counter {} but {card} stored", self.card));
        }
        if card > self.f_tilde {
            return Err(format!("cardinality {card} above {}", self.f_tilde));
        }
        let m = AccessMeter::new(64);
        for hb in 0..self.bins {
            let mut seen = BTreeSet::new();
            let mut prev = null;
            let mut cur = self.head(hb, &m);
            while cur != null {
                if cur > null {
                    return Err(format!("list {hb} link {cur} out of range"));
                }
                if !seen.insert(cur) {
                    return Err(format!("list {hb} revisits CSD {cur}"));
                }
                let Some(&(next, p)) = links.get(&(hb, cur)) else {
                    return Err(format!("list {hb} reaches CSD {cur} without bin records"));
                };
                if p != prev {
                    return Err(format!("list {hb} prev link of CSD {cur} is {p}, expected {prev}"));
                }
                prev = cur;
                cur = next;
            }
            let expected = holders.remove(&hb).unwrap_or_default();
            if seen != expected {
                return Err(format!("list {hb} visits {seen:?}, holders are {expected:?}"));
            }
        }
        for (i, mo) in self.motels.iter().enumerate() {
            mo.check()?;
            if mo.occupancy() != self.csds[i].support() {
                return Err(format!("motel {i} occupancy differs from CSD support"));
            }
        }
        for (i, v) in self.vcsds.iter().enumerate() {
            v.check()?;
            let mut total = 0;
            for f in 0..self.frames {
                let csd = i * self.frames + f;
                let len = v.read_frame(f, &m).len();
                let support = if csd < self.f_tilde { self.csds[csd].support() } else { 0 };
                if len != support {
                    return Err(format!("frame of CSD {csd} holds {len} strings for {support} records"));
                }
                total += len;
            }
            debug_assert_eq!(total, v.element_count());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hashing::Overrides;

    fn params() -> Params {
        let o = Overrides {
            f_tilde: Some(64),
            ..Overrides::default()
        };
        Params::derive(1 << 10, 16.0, 64, &o).unwrap()
    }

    #[test]
    fn insert_links_and_counts() {
        let p = params();
        let m = AccessMeter::new(64);
        let mut s = Sid::new(&p);
        assert_eq!(s.list_head(3, &m), None);
        s.insert(5, 3, 1, 7, &m).unwrap();
        assert_eq!(s.list_head(3, &m), Some(5));
        assert_eq!(s.query(5, 3, 1, 7, &m), 1);
        s.insert(5, 3, 1, 7, &m).unwrap();
        assert_eq!(s.query(5, 3, 1, 7, &m), 2);
        assert_eq!(s.list_head(3, &m), Some(5));
        s.insert(9, 3, 0, 2, &m).unwrap();
        assert_eq!(s.list_head(3, &m), Some(9));
        assert_eq!(s.csd(9).record(0).next, 5);
        assert_eq!(s.csd(5).record(0).prev, 9);
        assert_eq!(s.bin_count(3), 3);
        s.audit().unwrap();
    }

    #[test]
    fn delete_splices() {
        let p = params();
        let m = AccessMeter::new(64);
        let mut s = Sid::new(&p);
        for csd in [1, 2, 3] {
            s.insert(csd, 4, 0, csd as u128, &m).unwrap();
        }
        // list 4 is 3 -> 2 -> 1
        s.delete(2, 4, 0, 2, &m).unwrap();
        s.audit().unwrap();
        assert_eq!(s.csd(3).record(0).next, 1);
        assert_eq!(s.csd(1).record(0).prev, 3);
        s.insert(1, 4, 0, 1, &m).unwrap();
        s.delete(1, 4, 0, 1, &m).unwrap();
        assert_eq!(s.csd(3).record(0).next, 1);
        assert_eq!(s.delete(1, 4, 0, 9, &m), Err(Error::NotFound));
        s.delete(3, 4, 0, 3, &m).unwrap();
        assert_eq!(s.list_head(4, &m), Some(1));
        s.audit().unwrap();
    }

    #[test]
    fn pop_semantics() {
        let p = params();
        let m = AccessMeter::new(64);
        let mut s = Sid::new(&p);
        assert_eq!(s.pop(3, &m).unwrap(), None);
        s.insert(0, 3, 1, 11, &m).unwrap();
        assert_eq!(s.pop(3, &m).unwrap(), Some((1, 11)));
        assert_eq!(s.query(0, 3, 1, 11, &m), 0);
        s.insert(0, 3, 1, 11, &m).unwrap();
        s.insert(0, 3, 1, 11, &m).unwrap();
        assert_eq!(s.pop(3, &m).unwrap(), Some((1, 11)));
        assert_eq!(s.query(0, 3, 1, 11, &m), 1);
        assert_eq!(s.pop(2, &m).unwrap(), None);
        s.audit().unwrap();
    }

    #[test]
    fn cardinality_cap() {
        let o = Overrides {
            f_tilde: Some(4),
            ..Overrides::default()
        };
        let p = Params::derive(1 << 8, 16.0, 64, &o).unwrap();
        let m = AccessMeter::new(64);
        let mut s = Sid::new(&p);
        for v in 0..4 {
            s.insert(v as usize % 4, 0, 0, v, &m).unwrap();
        }
        assert_eq!(s.insert(0, 0, 0, 9, &m), Err(Error::Overflow(Component::Sid)));
        s.audit().unwrap();
    }
}

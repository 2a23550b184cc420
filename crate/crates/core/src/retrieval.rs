//! Static retrieval: stores a `k`-bit label per key and answers member
//! lookups exactly, without storing the keys.
//!
//! Keys are hashed into `[n * 2^64]` and laid out like a sparse crate
//! dictionary, except that only adaptive remainders are kept: a member is
//! found as the unique stored prefix of its hashed remainder. Prefixes are
//! made prefix-free across each bin quotient together with every spare
//! record of the same bin and quotient, so a member matches exactly once.
//! Short labels sit in the pointer slots; longer ones in pocket motels.

use std::collections::HashSet;

use crate::adaptive::{compute_group_remainders, match_range};
use crate::bits::{AccessMeter, BitStr};
use crate::csd::{CountingSetDict, Record, VarCountingSetDict};
use crate::error::{Error, Result};
use crate::hashing::{bits_for, decompose, domain, sid_hasher, Mode, Overrides, Params, RangeHash, Seed};
use crate::pocket_dict::{PocketDict, VarPocketDict};
use crate::pocket_motel::PocketMotel;

pub const MAX_ATTEMPTS: u32 = 16;

/// Where labels live.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Variant {
    Inline,
    Moteled,
}

/// Largest label width stored inline for `n` keys: `2 ceil(log2 log2 n)`.
pub fn inline_threshold(n: u64) -> usize {
    let ll = (n.max(2) as f64).log2().log2();
    2 * ll.ceil().max(1.0) as usize
}

#[derive(Clone, Debug)]
pub struct Retrieval {
    pub(crate) params: Params,
    pub(crate) k: usize,
    pub(crate) variant: Variant,
    pub(crate) seed: Seed,
    pub(crate) attempts: u32,
    key_hash: RangeHash,
    sid_hash: RangeHash,
    pub(crate) pds: Vec<PocketDict>,
    pub(crate) varpds: Vec<VarPocketDict>,
    pub(crate) motels: Vec<PocketMotel>,
    pub(crate) csds: Vec<CountingSetDict>,
    pub(crate) vcsds: Vec<VarCountingSetDict>,
    pub(crate) csd_motels: Vec<PocketMotel>,
    meter: AccessMeter,
}

/// Placement of one key during a build.
struct Placed {
    hc: usize,
    hb: usize,
    q: usize,
    r: BitStr,
    /// CSD index within the crate, when spilled to the spare.
    csd: Option<usize>,
    label: u128,
}

enum Failure {
    Retry,
    Fatal(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Overflow(_) => Failure::Retry,
            e => Failure::Fatal(e),
        }
    }
}

impl Retrieval {
    /// Parameters for `n` keys: relative sparseness `2^64`, sparse layout.
    pub fn params_for(n: u64, w_eff: usize, o: &Overrides) -> Result<Params> {
        let o = Overrides {
            mode: Some(Mode::Sparse),
            ..o.clone()
        };
        Params::derive(n.max(1), 2f64.powi(64), w_eff, &o)
    }

    /// Builds the structure, reseeding on hash collisions and component
    /// overflows up to [`MAX_ATTEMPTS`] times.
    pub fn build(keys: &[u128], labels: &[u128], k: usize, w_eff: usize, o: &Overrides, seed: Seed) -> Result<Self> {
        if keys.len() != labels.len() {
            return Err(Error::Precondition("keys and labels differ in length".into()));
        }
        if !(1..=128).contains(&k) {
            return Err(Error::Precondition(format!("label width {k} outside 1..=128")));
        }
        if k < 128 && labels.iter().any(|v| v >> k != 0) {
            return Err(Error::ValueOverflow { len: k });
        }
        let mut seen = HashSet::with_capacity(keys.len());
        if !keys.iter().all(|x| seen.insert(*x)) {
            return Err(Error::Precondition("duplicate keys".into()));
        }
        let params = Self::params_for(keys.len() as u64, w_eff, o)?;
        let wide = bits_for(params.f.max(params.f_hat) as u128);
        let variant = if k <= inline_threshold(params.n) || k < wide {
            Variant::Inline
        } else {
            Variant::Moteled
        };
        for attempt in 0..MAX_ATTEMPTS {
            let s = if attempt == 0 { seed } else { seed.derive(attempt as u64) };
            match Self::try_build(&params, keys, labels, k, variant, s) {
                Ok(mut r) => {
                    r.attempts = attempt + 1;
                    return Ok(r);
                }
                Err(Failure::Retry) => continue,
                Err(Failure::Fatal(e)) => return Err(e),
            }
        }
        Err(Error::ConstructionFailed(MAX_ATTEMPTS))
    }

    fn empty(params: &Params, k: usize, variant: Variant, seed: Seed) -> Self {
        let p = params;
        let bins = p.crates * p.pds_per_crate;
        let (pd_value, csd_value) = match variant {
            Variant::Inline => (k, k),
            Variant::Moteled => (bits_for(p.f as u128), bits_for(p.f_hat as u128)),
        };
        let key_bits = p.hb_bits + p.q_bits + csd_value;
        let moteled = variant == Variant::Moteled;
        Retrieval {
            params: p.clone(),
            k,
            variant,
            seed,
            attempts: 0,
            key_hash: RangeHash::new(&seed, domain::RETRIEVAL_KEY, p.universe_size),
            sid_hash: sid_hasher(p, &seed),
            pds: vec![PocketDict::new(p.m, p.f, pd_value); bins],
            varpds: vec![VarPocketDict::new(p.m, p.var_m, p.var_f, p.var_l); p.crates * p.varpds_per_crate],
            motels: if moteled { vec![PocketMotel::new(p.f, k); bins] } else { Vec::new() },
            csds: vec![CountingSetDict::new(p.f_hat, key_bits, 0, 1); p.crates * p.f_tilde],
            vcsds: vec![VarCountingSetDict::new(p.vcsd_frames, p.vcsd_f, p.vcsd_l); p.crates * p.vcsds_per_crate],
            csd_motels: if moteled { vec![PocketMotel::new(p.f_hat, k); p.crates * p.f_tilde] } else { Vec::new() },
            meter: AccessMeter::new(p.w_eff),
        }
    }

    fn try_build(p: &Params, keys: &[u128], labels: &[u128], k: usize, variant: Variant, seed: Seed) -> std::result::Result<Self, Failure> {
        let mut out = Self::empty(p, k, variant, seed);
        let mut hashed = HashSet::with_capacity(keys.len());
        let mut bin_load = vec![0usize; p.crates * p.pds_per_crate];
        let mut spare_load = vec![0usize; p.crates];
        let mut csd_load = vec![0usize; p.crates * p.f_tilde];
        let mut placed = Vec::with_capacity(keys.len());
        for (x, label) in keys.iter().zip(labels) {
            let h = out.key_hash.hash(*x);
            if !hashed.insert(h) {
                return Err(Failure::Retry);
            }
            let d = decompose(h, p).map_err(Failure::Fatal)?;
            let b = d.hc * p.pds_per_crate + d.hb;
            let csd = if bin_load[b] < p.f {
                bin_load[b] += 1;
                None
            } else {
                let c = out.sid_hash.hash(h) as usize;
                spare_load[d.hc] += 1;
                csd_load[d.hc * p.f_tilde + c] += 1;
                if spare_load[d.hc] > p.f_tilde || csd_load[d.hc * p.f_tilde + c] > p.f_hat {
                    return Err(Failure::Retry);
                }
                Some(c)
            };
            placed.push(Placed {
                hc: d.hc,
                hb: d.hb,
                q: d.q,
                r: BitStr::new(d.r, p.ell),
                csd,
                label: *label,
            });
        }

        // Sorting by (crate, bin, quotient, remainder) makes each group a
        // contiguous run and keeps the bin pass sequential in memory.
        placed.sort_unstable_by(|a, b| (a.hc, a.hb, a.q).cmp(&(b.hc, b.hb, b.q)).then_with(|| a.r.lex_cmp(&b.r)));
        let mut alpha = Vec::with_capacity(placed.len());
        for run in placed.chunk_by(|a, b| (a.hc, a.hb, a.q) == (b.hc, b.hb, b.q)) {
            let rs: Vec<BitStr> = run.iter().map(|e| e.r).collect();
            alpha.extend(compute_group_remainders(&rs));
        }

        // Bins: append each quotient's members in remainder order.
        let m = AccessMeter::new(p.w_eff);
        let mut spilled: Vec<Vec<usize>> = vec![Vec::new(); p.crates * p.f_tilde];
        let mut rank = 0;
        for (i, e) in placed.iter().enumerate() {
            if i == 0 || (e.hc, e.hb, e.q) != (placed[i - 1].hc, placed[i - 1].hb, placed[i - 1].q) {
                rank = 0;
            }
            let (hc, hb, q) = (e.hc, e.hb, e.q);
            let b = hc * p.pds_per_crate + hb;
            let v = hc * p.varpds_per_crate + hb / p.super_interval;
            let qsi = hb % p.super_interval;
            if let Some(c) = e.csd {
                spilled[hc * p.f_tilde + c].push(i);
                continue;
            }
            let value = match variant {
                Variant::Inline => e.label,
                Variant::Moteled => out.motels[b].insert(e.label, &m)? as u128,
            };
            let (_, end) = out.pds[b].range(q, &m);
            out.pds[b].insert_at(q, end, value, &m)?;
            let var = &mut out.varpds[v];
            if var.occupancy() + 1 > p.var_f || var.payload_bits() + alpha[i].len() > p.var_l {
                return Err(Failure::Retry);
            }
            var.insert(qsi, q, &alpha[i], rank, &m)?;
            rank += 1;
        }

        // Spare: records sorted by (bin, quotient, remainder); each frame
        // lists prefixes in record order.
        let csd_value = out.csds[0].payload_bits() - p.hb_bits - p.q_bits;
        for (ci, members) in spilled.iter().enumerate() {
            let frame_csd = ci % p.f_tilde;
            let hc = ci / p.f_tilde;
            let v = hc * p.vcsds_per_crate + frame_csd / p.vcsd_frames;
            let frame = frame_csd % p.vcsd_frames;
            for (pos, &i) in members.iter().enumerate() {
                let e = &placed[i];
                let value = match variant {
                    Variant::Inline => e.label,
                    Variant::Moteled => out.csd_motels[ci].insert(e.label, &m)? as u128,
                };
                let key = (((e.hb << p.q_bits) | e.q) as u128) << csd_value | value;
                out.csds[ci].insert_at(pos, Record { key, next: 0, prev: 0, count: 1 }, &m)?;
                let vc = &mut out.vcsds[v];
                if vc.element_count() + 1 > p.vcsd_f || vc.payload_bits() + alpha[i].len() > p.vcsd_l {
                    return Err(Failure::Retry);
                }
                vc.insert(frame, pos, &alpha[i], &m)?;
            }
        }
        Ok(out)
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn label_bits(&self) -> usize {
        self.k
    }

    /// Number of seeds tried, including the successful one.
    pub fn attempts(&self) -> u32 {
        self.attempts
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn meter(&self) -> &AccessMeter {
        &self.meter
    }

    pub fn seed(&self) -> &Seed {
        &self.seed
    }

    /// Allocated bits of every component.
    pub fn allocated_bits(&self) -> usize {
        self.pds.iter().map(|c| c.total_bits()).sum::<usize>()
            + self.varpds.iter().map(|c| c.total_bits()).sum::<usize>()
            + self.motels.iter().map(|c| c.total_bits()).sum::<usize>()
            + self.csds.iter().map(|c| c.total_bits()).sum::<usize>()
            + self.vcsds.iter().map(|c| c.total_bits()).sum::<usize>()
            + self.csd_motels.iter().map(|c| c.total_bits()).sum::<usize>()
    }

    fn csd_value_bits(&self) -> usize {
        self.csds[0].payload_bits() - self.params.hb_bits - self.params.q_bits
    }

    /// Location of the stored label matching `x`.
    fn locate(&self, x: u128) -> Option<Slot> {
        let p = &self.params;
        let m = &self.meter;
        let h = self.key_hash.hash(x);
        let d = decompose(h, p).ok()?;
        let r = BitStr::new(d.r, p.ell);
        let b = d.hc * p.pds_per_crate + d.hb;
        let (s, _) = self.pds[b].range(d.q, m);
        let v = d.hc * p.varpds_per_crate + d.hb / p.super_interval;
        let alphas = self.varpds[v].read_group(d.hb % p.super_interval, d.q, m);
        if let Some((j, _)) = match_range(&alphas, &r) {
            return Some(Slot::Bin(b, s + j));
        }
        if self.pds[b].load_header(m) < p.f {
            return None;
        }
        let c = self.sid_hash.hash(h) as usize;
        let ci = d.hc * p.f_tilde + c;
        let prefix = ((d.hb << p.q_bits) | d.q) as u128;
        let (s, e) = self.csds[ci].prefix_range(p.hb_bits + p.q_bits, prefix, m);
        let vc = &self.vcsds[d.hc * p.vcsds_per_crate + c / p.vcsd_frames];
        let frame = vc.read_frame(c % p.vcsd_frames, m);
        match_range(&frame[s..e], &r).map(|(j, _)| Slot::Spare(ci, s + j))
    }

    /// The label of `x` for members; an arbitrary `k`-bit value otherwise.
    pub fn query(&self, x: u128) -> u128 {
        self.meter.begin_op();
        let m = &self.meter;
        let out = match self.locate(x) {
            None => 0,
            Some(Slot::Bin(b, i)) => {
                let v = self.pds[b].read_slots(i, i + 1, m)[0];
                match self.variant {
                    Variant::Inline => v,
                    Variant::Moteled => self.motels[b].read(v as usize, m).unwrap_or(0),
                }
            }
            Some(Slot::Spare(ci, i)) => {
                let v = self.csd_value(ci, i);
                match self.variant {
                    Variant::Inline => v,
                    Variant::Moteled => self.csd_motels[ci].read(v as usize, m).unwrap_or(0),
                }
            }
        };
        self.meter.end_op();
        out
    }

    fn csd_value(&self, ci: usize, i: usize) -> u128 {
        let key = self.csds[ci].record(i).key;
        let vb = self.csd_value_bits();
        key & if vb == 128 { u128::MAX } else { (1u128 << vb) - 1 }
    }

    /// Overwrites the label of member `x` in place.
    pub fn update(&mut self, x: u128, label: u128) -> Result<()> {
        if self.k < 128 && label >> self.k != 0 {
            return Err(Error::ValueOverflow { len: self.k });
        }
        self.meter.begin_op();
        let res = self.update_inner(x, label);
        self.meter.end_op();
        res
    }

    fn update_inner(&mut self, x: u128, label: u128) -> Result<()> {
        let m = &self.meter;
        match self.locate(x).ok_or(Error::NotFound)? {
            Slot::Bin(b, i) => match self.variant {
                Variant::Inline => self.pds[b].set_slot(i, label, m),
                Variant::Moteled => {
                    let ptr = self.pds[b].slot(i) as usize;
                    self.motels[b].write(ptr, label, m)
                }
            },
            Slot::Spare(ci, i) => match self.variant {
                Variant::Inline => {
                    let vb = self.csd_value_bits();
                    let key = (self.csds[ci].record(i).key >> vb) << vb | label;
                    self.csds[ci].set_key(i, key, m)
                }
                Variant::Moteled => {
                    let ptr = self.csd_value(ci, i) as usize;
                    self.csd_motels[ci].write(ptr, label, m)
                }
            },
        }
    }

    /// Structural checks of every component.
    pub fn check(&self) -> std::result::Result<(), String> {
        for pd in &self.pds {
            pd.check()?;
        }
        for v in &self.varpds {
            v.check()?;
        }
        for c in &self.csds {
            c.check()?;
        }
        for v in &self.vcsds {
            v.check()?;
        }
        for mo in self.motels.iter().chain(&self.csd_motels) {
            mo.check()?;
        }
        Ok(())
    }

    pub(crate) fn from_parts(
        params: Params,
        k: usize,
        variant: Variant,
        seed: Seed,
        parts: RetrievalParts,
    ) -> Result<Self> {
        let mut r = Self::empty(&params, k, variant, seed);
        let same = parts.pds.len() == r.pds.len()
            && parts.varpds.len() == r.varpds.len()
            && parts.motels.len() == r.motels.len()
            && parts.csds.len() == r.csds.len()
            && parts.vcsds.len() == r.vcsds.len()
            && parts.csd_motels.len() == r.csd_motels.len();
        if !same {
            return Err(Error::Format("component count mismatch".into()));
        }
        r.pds = parts.pds;
        r.varpds = parts.varpds;
        r.motels = parts.motels;
        r.csds = parts.csds;
        r.vcsds = parts.vcsds;
        r.csd_motels = parts.csd_motels;
        r.attempts = 1;
        r.check().map_err(Error::Format)?;
        Ok(r)
    }
}

pub(crate) struct RetrievalParts {
    pub pds: Vec<PocketDict>,
    pub varpds: Vec<VarPocketDict>,
    pub motels: Vec<PocketMotel>,
    pub csds: Vec<CountingSetDict>,
    pub vcsds: Vec<VarCountingSetDict>,
    pub csd_motels: Vec<PocketMotel>,
}

#[derive(Clone, Copy, Debug)]
enum Slot {
    Bin(usize, usize),
    Spare(usize, usize),
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_keys(n: usize, k: usize, seed: u64) -> (Vec<u128>, Vec<u128>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut set = HashSet::new();
        while set.len() < n {
            set.insert(rng.gen::<u128>());
        }
        let keys: Vec<u128> = set.into_iter().collect();
        let labels = keys.iter().map(|_| rng.gen::<u128>() & ((1u128 << k) - 1)).collect();
        (keys, labels)
    }

    #[test]
    fn single_key() {
        let r = Retrieval::build(&[42], &[5], 8, 64, &Overrides::default(), Seed::from_u64(1)).unwrap();
        assert_eq!(r.query(42), 5);
    }

    #[test]
    fn duplicates_rejected() {
        let e = Retrieval::build(&[1, 1], &[0, 1], 8, 64, &Overrides::default(), Seed::from_u64(1));
        assert!(matches!(e, Err(Error::Precondition(_))));
    }

    #[test]
    fn exhaustive_small() {
        for (k, variant) in [(8, Variant::Inline), (24, Variant::Moteled)] {
            let (keys, labels) = random_keys(1 << 10, k, 7);
            let mut r = Retrieval::build(&keys, &labels, k, 64, &Overrides::default(), Seed::from_u64(2)).unwrap();
            assert_eq!(r.variant(), variant);
            r.check().unwrap();
            for (x, l) in keys.iter().zip(&labels) {
                assert_eq!(r.query(*x), *l);
            }
            r.update(keys[3], 1).unwrap();
            assert_eq!(r.query(keys[3]), 1);
            for (i, (x, l)) in keys.iter().zip(&labels).enumerate() {
                if i != 3 {
                    assert_eq!(r.query(*x), *l);
                }
            }
            let _ = r.query(u128::MAX);
            let miss = (0u128..).map(|i| i * 0x9e37_79b9 + 1).find(|x| !keys.contains(x) && r.locate(*x).is_none());
            assert_eq!(r.update(miss.unwrap(), 0), Err(Error::NotFound));
        }
    }
}

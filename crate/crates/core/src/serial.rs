//! Binary envelope for dictionaries, filters and retrieval structures.
//!
//! Layout: magic `CR8D`, format version, kind tag, length-prefixed JSON
//! parameter block, seed, flags, kind-specific fields, then raw component
//! images as `(bit length, words)` pairs. Loading re-derives the parameters
//! from their pinned inputs and checks every image against its size formula.

use crate::bits::BitBuffer;
use crate::crate_dense::DenseCrateDict;
use crate::crate_sparse::SparseCrateDict;
use crate::csd::{CountingSetDict, VarCountingSetDict};
use crate::dictionary::{CrateDict, SetMode};
use crate::error::{Error, Result};
use crate::filter::CrateFilter;
use crate::hashing::{bits_for, Overrides, Params, Seed};
use crate::pocket_dict::{PocketDict, VarPocketDict};
use crate::pocket_motel::PocketMotel;
use crate::retrieval::{Retrieval, RetrievalParts, Variant};
use crate::sid::Sid;

pub const MAGIC: &[u8; 4] = b"CR8D";
pub const VERSION: u16 = 1;

const KIND_DENSE: u8 = 1;
const KIND_SPARSE: u8 = 2;
const KIND_FILTER: u8 = 3;
const KIND_RETRIEVAL: u8 = 4;

#[derive(Default)]
struct Writer {
    out: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.out.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.out.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.out.extend_from_slice(&v.to_le_bytes());
    }
    fn bytes(&mut self, b: &[u8]) {
        self.u64(b.len() as u64);
        self.out.extend_from_slice(b);
    }
    fn image(&mut self, b: &BitBuffer) {
        self.u64(b.bit_capacity() as u64);
        for w in b.words() {
            self.u64(*w);
        }
    }
    fn images<'a>(&mut self, it: impl ExactSizeIterator<Item = &'a BitBuffer>) {
        self.u64(it.len() as u64);
        for b in it {
            self.image(b);
        }
    }
    fn header(&mut self, kind: u8, p: &Params, seed: &Seed) {
        self.out.extend_from_slice(MAGIC);
        self.u16(VERSION);
        self.u8(kind);
        self.bytes(&serde_json::to_vec(p).expect("parameters serialize"));
        self.out.extend_from_slice(&seed.0);
    }
}

struct Reader<'a> {
    data: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|e| *e <= self.data.len());
        let end = end.ok_or_else(|| Error::Format("truncated input".into()))?;
        let s = &self.data[self.at..end];
        self.at = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.u64()? as usize;
        self.take(n)
    }
    fn image(&mut self) -> Result<BitBuffer> {
        let bits = self.u64()? as usize;
        let words = bits.div_ceil(64);
        if words > (self.data.len() - self.at) / 8 {
            return Err(Error::Format("truncated image".into()));
        }
        let w = (0..words).map(|_| self.u64()).collect::<Result<Vec<_>>>()?;
        BitBuffer::from_words(w, bits)
    }
    fn images(&mut self, expected: usize) -> Result<Vec<BitBuffer>> {
        let n = self.u64()? as usize;
        if n != expected {
            return Err(Error::Format(format!("expected {expected} images, found {n}")));
        }
        (0..n).map(|_| self.image()).collect()
    }
    fn flag(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(Error::Format(format!("bad flag byte {v}"))),
        }
    }
    /// Magic, version, and kind; returns the validated parameters and seed.
    fn header(&mut self, kind: u8) -> Result<(Params, Seed)> {
        if self.take(4)? != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let v = self.u16()?;
        if v != VERSION {
            return Err(Error::Format(format!("unsupported version {v}")));
        }
        let k = self.u8()?;
        if k != kind {
            return Err(Error::Format(format!("kind {k} where {kind} was expected")));
        }
        let p: Params = serde_json::from_slice(self.bytes()?)
            .map_err(|e| Error::Format(format!("parameter block: {e}")))?;
        validate_params(&p)?;
        let seed = Seed(self.take(32)?.try_into().unwrap());
        Ok((p, seed))
    }
    fn finish(&self) -> Result<()> {
        if self.at != self.data.len() {
            return Err(Error::Format("trailing bytes".into()));
        }
        Ok(())
    }
}

/// Every derived size must follow from the pinned inputs.
fn validate_params(p: &Params) -> Result<()> {
    let o = Overrides {
        mode: Some(p.mode),
        mu: Some(p.mu),
        m: Some(p.m),
        f: Some(p.f),
        delta: Some(p.delta),
        crate_size: Some(p.crate_size),
        f_tilde: Some(p.f_tilde),
        c: Some(p.c),
        f_hat: Some(p.f_hat),
        super_interval: Some(p.super_interval),
        var_f: Some(p.var_f),
        var_l: Some(p.var_l),
        vcsd_f: Some(p.vcsd_f),
        vcsd_l: Some(p.vcsd_l),
    };
    let again = Params::derive(p.n, p.rho, p.w_eff, &o)?;
    if again != *p {
        return Err(Error::Format("parameter block is not self-consistent".into()));
    }
    Ok(())
}

fn set_mode_byte(m: SetMode) -> u8 {
    match m {
        SetMode::Set => 0,
        SetMode::Multiset => 1,
    }
}

fn set_mode_from(b: u8) -> Result<SetMode> {
    match b {
        0 => Ok(SetMode::Set),
        1 => Ok(SetMode::Multiset),
        _ => Err(Error::Format(format!("bad set mode {b}"))),
    }
}

fn write_sid(w: &mut Writer, s: &Sid) {
    let im = s.images();
    w.images(im.csds.into_iter());
    w.image(im.heads);
    w.images(im.motels.into_iter());
    w.images(im.vcsds.into_iter());
}

fn read_sid(r: &mut Reader, p: &Params, sparse: bool) -> Result<Sid> {
    let csds = r.images(p.f_tilde)?;
    let heads = r.image()?;
    let motels = r.images(if sparse { p.f_tilde } else { 0 })?;
    let vcsds = r.images(if sparse { p.vcsds_per_crate } else { 0 })?;
    Sid::from_images(p, csds, heads, motels, vcsds)
}

fn pds_from(p: &Params, slot_bits: usize, images: Vec<BitBuffer>) -> Result<Vec<PocketDict>> {
    images
        .into_iter()
        .map(|b| PocketDict::from_image(p.m, p.f, slot_bits, b))
        .collect()
}

fn varpds_from(p: &Params, images: Vec<BitBuffer>) -> Result<Vec<VarPocketDict>> {
    images
        .into_iter()
        .map(|b| VarPocketDict::from_image(p.m, p.var_m, p.var_f, p.var_l, b))
        .collect()
}

fn motels_from(k: usize, entry: usize, images: Vec<BitBuffer>) -> Result<Vec<PocketMotel>> {
    images
        .into_iter()
        .map(|b| PocketMotel::from_image(k, entry, b))
        .collect()
}

fn write_dict(w: &mut Writer, d: &CrateDict) {
    match d {
        CrateDict::Dense(d) => {
            w.u8(set_mode_byte(d.set_mode));
            w.u8(d.overflowed as u8);
            w.images(d.pds.iter().map(|p| p.image()));
            for s in &d.sids {
                write_sid(w, s);
            }
        }
        CrateDict::Sparse(d) => {
            w.u8(set_mode_byte(d.set_mode));
            w.u8(d.overflowed as u8);
            w.images(d.pds.iter().map(|p| p.image()));
            w.images(d.motels.iter().map(|p| p.image()));
            w.images(d.varpds.iter().map(|p| p.image()));
            for s in &d.sids {
                write_sid(w, s);
            }
        }
    }
}

fn read_dict(r: &mut Reader, p: Params, seed: Seed, sparse: bool) -> Result<CrateDict> {
    let set_mode = set_mode_from(r.u8()?)?;
    let overflowed = r.flag()?;
    let bins = p.crates * p.pds_per_crate;
    let pds = pds_from(&p, p.slot_bits, r.images(bins)?)?;
    if !sparse {
        let sids = (0..p.crates).map(|_| read_sid(r, &p, false)).collect::<Result<_>>()?;
        return Ok(CrateDict::Dense(DenseCrateDict::from_parts(p, set_mode, seed, pds, sids, overflowed)?));
    }
    let motels = motels_from(p.f, p.ell, r.images(bins)?)?;
    let varpds = varpds_from(&p, r.images(p.crates * p.varpds_per_crate)?)?;
    let sids = (0..p.crates).map(|_| read_sid(r, &p, true)).collect::<Result<_>>()?;
    Ok(CrateDict::Sparse(SparseCrateDict::from_parts(
        p, set_mode, seed, pds, motels, varpds, sids, overflowed,
    )?))
}

fn dict_seed_params(d: &CrateDict) -> (&Params, &Seed, u8) {
    match d {
        CrateDict::Dense(x) => (&x.params, &x.seed, KIND_DENSE),
        CrateDict::Sparse(x) => (&x.params, &x.seed, KIND_SPARSE),
    }
}

impl CrateDict {
    pub fn to_bytes(&self) -> Vec<u8> {
        let (p, seed, kind) = dict_seed_params(self);
        let mut w = Writer::default();
        w.header(kind, p, seed);
        write_dict(&mut w, self);
        w.out
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let kind = *data.get(6).ok_or_else(|| Error::Format("truncated input".into()))?;
        if kind != KIND_DENSE && kind != KIND_SPARSE {
            return Err(Error::Format(format!("kind {kind} is not a dictionary")));
        }
        let mut r = Reader { data, at: 0 };
        let (p, seed) = r.header(kind)?;
        let d = read_dict(&mut r, p, seed, kind == KIND_SPARSE)?;
        r.finish()?;
        Ok(d)
    }
}

impl CrateFilter {
    pub fn to_bytes(&self) -> Vec<u8> {
        let (p, seed, kind) = dict_seed_params(self.dict());
        let mut w = Writer::default();
        w.header(KIND_FILTER, p, seed);
        w.u64(self.epsilon().to_bits());
        w.u8(kind);
        write_dict(&mut w, self.dict());
        w.out
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = Reader { data, at: 0 };
        let (p, seed) = r.header(KIND_FILTER)?;
        let epsilon = f64::from_bits(r.u64()?);
        let kind = r.u8()?;
        if kind != KIND_DENSE && kind != KIND_SPARSE {
            return Err(Error::Format(format!("kind {kind} is not a dictionary")));
        }
        if (1.0 / epsilon) != p.rho {
            return Err(Error::Format("epsilon disagrees with the parameter block".into()));
        }
        let d = read_dict(&mut r, p, seed, kind == KIND_SPARSE)?;
        r.finish()?;
        CrateFilter::from_dict(d, epsilon)
    }
}

impl Retrieval {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.header(KIND_RETRIEVAL, &self.params, &self.seed);
        w.u64(self.k as u64);
        w.u8(match self.variant {
            Variant::Inline => 0,
            Variant::Moteled => 1,
        });
        w.images(self.pds.iter().map(|c| c.image()));
        w.images(self.varpds.iter().map(|c| c.image()));
        w.images(self.motels.iter().map(|c| c.image()));
        w.images(self.csds.iter().map(|c| c.image()));
        w.images(self.vcsds.iter().map(|c| c.image()));
        w.images(self.csd_motels.iter().map(|c| c.image()));
        w.out
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = Reader { data, at: 0 };
        let (p, seed) = r.header(KIND_RETRIEVAL)?;
        let k = r.u64()? as usize;
        if !(1..=128).contains(&k) {
            return Err(Error::Format(format!("label width {k}")));
        }
        let variant = match r.u8()? {
            0 => Variant::Inline,
            1 => Variant::Moteled,
            v => return Err(Error::Format(format!("bad variant {v}"))),
        };
        let (pd_value, csd_value) = match variant {
            Variant::Inline => (k, k),
            Variant::Moteled => (bits_for(p.f as u128), bits_for(p.f_hat as u128)),
        };
        let moteled = variant == Variant::Moteled;
        let bins = p.crates * p.pds_per_crate;
        let spares = p.crates * p.f_tilde;
        let pds = pds_from(&p, pd_value, r.images(bins)?)?;
        let varpds = varpds_from(&p, r.images(p.crates * p.varpds_per_crate)?)?;
        let motels = motels_from(p.f, k, r.images(if moteled { bins } else { 0 })?)?;
        let key_bits = p.hb_bits + p.q_bits + csd_value;
        let csds = r
            .images(spares)?
            .into_iter()
            .map(|b| CountingSetDict::from_image(p.f_hat, key_bits, 0, 1, b))
            .collect::<Result<_>>()?;
        let vcsds = r
            .images(p.crates * p.vcsds_per_crate)?
            .into_iter()
            .map(|b| VarCountingSetDict::from_image(p.vcsd_frames, p.vcsd_f, p.vcsd_l, b))
            .collect::<Result<_>>()?;
        let csd_motels = motels_from(p.f_hat, k, r.images(if moteled { spares } else { 0 })?)?;
        r.finish()?;
        Retrieval::from_parts(
            p,
            k,
            variant,
            seed,
            RetrievalParts {
                pds,
                varpds,
                motels,
                csds,
                vcsds,
                csd_motels,
            },
        )
    }
}

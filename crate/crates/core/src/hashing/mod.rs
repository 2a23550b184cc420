//! Keyed hashing: the pseudorandom function behind every hash, element
//! decomposition into (crate, bin, quotient, remainder), fingerprints, the
//! spare's CSD selector, and the invertible permutation used for sets.

mod params;

pub use params::{bits_for, Mode, Overrides, Params, MAX_COMPONENT_BLOCKS, MU_MAX, M_MIN};

use siphasher::sip128::SipHasher13;

use crate::error::{Error, Result};

/// A 32-byte seed.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Seed(pub [u8; 32]);

impl Seed {
    /// Expands a small integer into a full seed with splitmix64.
    pub fn from_u64(v: u64) -> Seed {
        let mut state = v;
        let mut out = [0u8; 32];
        for chunk in out.chunks_mut(8) {
            state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
            z ^= z >> 31;
            chunk.copy_from_slice(&z.to_le_bytes());
        }
        Seed(out)
    }

    /// A new seed derived from this one and a tag, e.g. for reseeding.
    pub fn derive(&self, tag: u64) -> Seed {
        let p = Prf::new(self, tag);
        let a = p.hash(0).to_le_bytes();
        let b = p.hash(1).to_le_bytes();
        let mut out = [0u8; 32];
        out[..16].copy_from_slice(&a);
        out[16..].copy_from_slice(&b);
        Seed(out)
    }
}

/// Keyed pseudorandom function `u128 -> u128` (SipHash-1-3, 128-bit output).
///
/// The `domain` separates unrelated uses of one seed.
#[derive(Clone, Debug)]
pub struct Prf {
    hasher: SipHasher13,
}

impl Prf {
    pub fn new(seed: &Seed, domain: u64) -> Prf {
        let s = &seed.0;
        let k = |i: usize| u64::from_le_bytes(s[i..i + 8].try_into().unwrap());
        let outer = SipHasher13::new_with_keys(k(0), k(8));
        let mut msg = [0u8; 24];
        msg[..8].copy_from_slice(&domain.to_le_bytes());
        msg[8..].copy_from_slice(&s[16..32]);
        let key = outer.hash(&msg).as_u128();
        Prf {
            hasher: SipHasher13::new_with_keys(key as u64, (key >> 64) as u64),
        }
    }

    #[inline]
    pub fn hash(&self, x: u128) -> u128 {
        self.hasher.hash(&x.to_le_bytes()).as_u128()
    }

    #[inline]
    pub fn hash2(&self, a: u64, x: u128) -> u128 {
        let mut msg = [0u8; 24];
        msg[..8].copy_from_slice(&a.to_le_bytes());
        msg[8..].copy_from_slice(&x.to_le_bytes());
        self.hasher.hash(&msg).as_u128()
    }
}

/// Domain tags for the independent hash functions.
pub mod domain {
    pub const PERMUTATION: u64 = 1;
    pub const SID: u64 = 2;
    pub const FINGERPRINT: u64 = 3;
    pub const RETRIEVAL_KEY: u64 = 4;
}

//---------------------------------------------------------------------------

/// Position of an element: crate, bin within the crate, quotient, remainder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Decomposition {
    pub hc: usize,
    pub hb: usize,
    pub q: usize,
    pub r: u128,
}

/// Splits `x` into its four coordinates.
pub fn decompose(x: u128, p: &Params) -> Result<Decomposition> {
    if x >= p.universe_size {
        return Err(Error::OutOfUniverse(x));
    }
    let hc = x / p.ceil_rho_c;
    let in_crate = x % p.ceil_rho_c;
    let hb = in_crate / p.ceil_rho_m;
    let in_bin = in_crate % p.ceil_rho_m;
    let q = in_bin / p.ceil_rho;
    let r = in_bin % p.ceil_rho;
    Ok(Decomposition {
        hc: hc as usize,
        hb: hb as usize,
        q: q as usize,
        r,
    })
}

/// Inverse of [`decompose`].
pub fn recompose(d: &Decomposition, p: &Params) -> u128 {
    d.hc as u128 * p.ceil_rho_c + d.hb as u128 * p.ceil_rho_m + d.q as u128 * p.ceil_rho + d.r
}

//---------------------------------------------------------------------------

/// Keyed bijection on `[0, domain)`: a balanced Feistel network over the
/// next even power of two, cycle-walked back into the domain.
#[derive(Clone, Debug)]
pub struct Permutation {
    domain: u128,
    half_bits: u32,
    prf: Prf,
}

const FEISTEL_ROUNDS: u64 = 8;

impl Permutation {
    pub fn new(domain: u128, seed: &Seed) -> Permutation {
        assert!(domain >= 1);
        let bits = (128 - (domain - 1).leading_zeros()).max(2);
        Permutation {
            domain,
            half_bits: bits.div_ceil(2),
            prf: Prf::new(seed, domain::PERMUTATION),
        }
    }

    #[inline]
    fn mask(&self) -> u128 {
        if self.half_bits >= 64 {
            u64::MAX as u128
        } else {
            (1u128 << self.half_bits) - 1
        }
    }

    #[inline]
    fn round(&self, i: u64, v: u128) -> u128 {
        self.prf.hash2(i, v) & self.mask()
    }

    fn forward(&self, x: u128) -> u128 {
        let mask = self.mask();
        let (mut l, mut r) = (x >> self.half_bits, x & mask);
        for i in 0..FEISTEL_ROUNDS {
            let t = l ^ self.round(i, r);
            l = r;
            r = t;
        }
        (l << self.half_bits) | r
    }

    fn backward(&self, y: u128) -> u128 {
        let mask = self.mask();
        let (mut l, mut r) = (y >> self.half_bits, y & mask);
        for i in (0..FEISTEL_ROUNDS).rev() {
            let t = r ^ self.round(i, l);
            r = l;
            l = t;
        }
        (l << self.half_bits) | r
    }

    pub fn domain(&self) -> u128 {
        self.domain
    }

    pub fn permute(&self, x: u128) -> u128 {
        debug_assert!(x < self.domain);
        let mut y = self.forward(x);
        while y >= self.domain {
            y = self.forward(y);
        }
        y
    }

    pub fn unpermute(&self, y: u128) -> u128 {
        debug_assert!(y < self.domain);
        let mut x = self.backward(y);
        while x >= self.domain {
            x = self.backward(x);
        }
        x
    }
}

//---------------------------------------------------------------------------

/// Maps arbitrary keys into `[0, range)`.
#[derive(Clone, Debug)]
pub struct RangeHash {
    prf: Prf,
    range: u128,
}

impl RangeHash {
    pub fn new(seed: &Seed, domain: u64, range: u128) -> RangeHash {
        assert!(range >= 1);
        RangeHash {
            prf: Prf::new(seed, domain),
            range,
        }
    }

    #[inline]
    pub fn hash(&self, x: u128) -> u128 {
        self.prf.hash(x) % self.range
    }

    pub fn range(&self) -> u128 {
        self.range
    }
}

/// Size of the fingerprint range `[ceil(n/ε)]`.
pub fn fingerprint_range(n: u64, epsilon: f64) -> u128 {
    (n as f64 / epsilon).ceil() as u128
}

/// The filter's fingerprint `h(x)` in `[ceil(n/ε)]`.
pub fn fingerprint(x: u128, n: u64, epsilon: f64, seed: &Seed) -> u128 {
    RangeHash::new(seed, domain::FINGERPRINT, fingerprint_range(n, epsilon)).hash(x)
}

/// The spare's CSD selector in `[f_tilde]`.
pub fn sid_hasher(p: &Params, seed: &Seed) -> RangeHash {
    RangeHash::new(seed, domain::SID, p.f_tilde as u128)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn toy_params() -> Params {
        let o = Overrides {
            crate_size: Some(4),
            m: Some(2),
            mode: Some(Mode::Dense),
            ..Default::default()
        };
        Params::derive(16, 4.0, 64, &o).unwrap()
    }

    #[test]
    fn decompose_examples() {
        let p = toy_params();
        let d = decompose(23, &p).unwrap();
        assert_eq!((d.hc, d.hb, d.q, d.r), (1, 0, 1, 3));
        let d = decompose(5, &p).unwrap();
        assert_eq!((d.hc, d.hb, d.q, d.r), (0, 0, 1, 1));
        let d = decompose(0, &p).unwrap();
        assert_eq!((d.hc, d.hb, d.q, d.r), (0, 0, 0, 0));
        assert!(decompose(64, &p).is_err());
    }

    #[test]
    fn decompose_roundtrip_exhaustive() {
        let p = Params::derive(1 << 8, 256.0, 64, &Overrides::default()).unwrap();
        assert_eq!(p.universe_size, 1 << 16);
        for x in 0..p.universe_size {
            let d = decompose(x, &p).unwrap();
            assert!(d.hc < p.crates && d.hb < p.pds_per_crate && d.q < p.m);
            assert!(d.r < p.ceil_rho);
            assert_eq!(recompose(&d, &p), x);
        }
    }

    #[test]
    fn decompose_non_integer_rho() {
        let o = Overrides {
            crate_size: Some(40),
            ..Default::default()
        };
        let p = Params::derive(200, 2.5, 64, &o).unwrap();
        for x in 0..p.universe_size {
            let d = decompose(x, &p).unwrap();
            assert!(d.hc < p.crates && d.hb < p.pds_per_crate && d.q < p.m);
            assert_eq!(recompose(&d, &p), x);
        }
    }

    #[test]
    fn permutation_is_bijective_on_small_domain() {
        let perm = Permutation::new(4096, &Seed::from_u64(7));
        let images: HashSet<u128> = (0..4096).map(|x| perm.permute(x)).collect();
        assert_eq!(images.len(), 4096);
        assert!(images.iter().all(|y| *y < 4096));
        for x in 0..4096 {
            assert_eq!(perm.unpermute(perm.permute(x)), x);
        }
    }

    #[test]
    fn permutation_roundtrip_large_domain() {
        let domain = (1u128 << 82) - 12345;
        let perm = Permutation::new(domain, &Seed::from_u64(3));
        let mut x = 1u128;
        for _ in 0..10_000 {
            x = (x.wrapping_mul(0x2545_f491_4f6c_dd1d) + 17) % domain;
            let y = perm.permute(x);
            assert!(y < domain);
            assert_eq!(perm.unpermute(y), x);
        }
    }

    #[test]
    fn permutation_depends_on_key() {
        let a = Permutation::new(1 << 20, &Seed::from_u64(1));
        let b = Permutation::new(1 << 20, &Seed::from_u64(2));
        let differ = (0..10_000u128)
            .filter(|x| a.permute(*x) != b.permute(*x))
            .count();
        assert!(differ >= 9_900, "{differ}");
    }

    #[test]
    fn fingerprint_range_and_determinism() {
        let s = Seed::from_u64(11);
        for x in 0..1000u128 {
            let h = fingerprint(x, 1 << 10, 1.0 / 64.0, &s);
            assert!(h < 1 << 16);
            assert_eq!(h, fingerprint(x, 1 << 10, 1.0 / 64.0, &s));
        }
    }

    #[test]
    fn sid_hash_range() {
        let p = Params::derive(1 << 12, 1024.0, 64, &Overrides::default()).unwrap();
        let h = sid_hasher(&p, &Seed::from_u64(5));
        for x in 0..10_000u128 {
            assert!(h.hash(x) < p.f_tilde as u128);
        }
    }

    #[test]
    fn seeds_derive_distinct() {
        let s = Seed::from_u64(1);
        assert_ne!(s.derive(0), s.derive(1));
        assert_eq!(s.derive(4), s.derive(4));
    }
}

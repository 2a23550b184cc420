//! Dynamic filter: a multiset crate dictionary over fingerprints in
//! `[ceil(n / epsilon)]`. Answers have one-sided error as long as deletions
//! only target elements that are in the set.

use crate::dictionary::{CrateDict, Dictionary, SetMode};
use crate::error::{Error, Result};
use crate::hashing::{domain, Overrides, Params, RangeHash, Seed};

#[derive(Clone, Debug)]
pub struct CrateFilter {
    dict: CrateDict,
    epsilon: f64,
    fp: RangeHash,
}

impl CrateFilter {
    /// A filter for up to `n` elements with false-positive rate `epsilon`.
    /// The regime follows from the fingerprint remainder `log2(1/epsilon)`
    /// against the word size.
    pub fn new(n: u64, epsilon: f64, w_eff: usize, o: &Overrides, seed: Seed) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 0.5) {
            return Err(Error::Config(format!("epsilon = {epsilon} must lie in (0, 1/2]")));
        }
        let params = Params::derive(n, 1.0 / epsilon, w_eff, o)?;
        Self::from_dict(CrateDict::new(params, SetMode::Multiset, seed)?, epsilon)
    }

    pub(crate) fn from_dict(dict: CrateDict, epsilon: f64) -> Result<Self> {
        let seed = match &dict {
            CrateDict::Dense(d) => *d.seed(),
            CrateDict::Sparse(d) => *d.seed(),
        };
        let range = dict.params().universe_size;
        Ok(CrateFilter {
            fp: RangeHash::new(&seed, domain::FINGERPRINT, range),
            dict,
            epsilon,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn dict(&self) -> &CrateDict {
        &self.dict
    }

    pub fn fingerprint(&self, x: u128) -> u128 {
        self.fp.hash(x)
    }

    pub fn insert(&mut self, x: u128) -> Result<()> {
        let h = self.fingerprint(x);
        self.dict.insert(h)
    }

    /// Removes one copy of `x`'s fingerprint; `x` must be in the set.
    pub fn delete(&mut self, x: u128) -> Result<()> {
        let h = self.fingerprint(x);
        self.dict.delete(h)
    }

    pub fn query(&self, x: u128) -> bool {
        self.dict.query(self.fingerprint(x))
    }

    pub fn len(&self) -> u64 {
        self.dict.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dict.is_empty()
    }
}

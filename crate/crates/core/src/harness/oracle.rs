//! Reference models the structures are checked against.

use std::collections::HashMap;

use rand::Rng;

use crate::bits::BitStr;
use crate::dictionary::SetMode;
use crate::error::{Error, Result};

/// Exact multiset with a log of surviving insertions.
///
/// Every live copy of an element corresponds to one log entry stamped with
/// the time it was inserted, so deletions can target "the element inserted
/// at time t" uniformly over the survivors.
#[derive(Clone, Debug)]
pub struct OracleMultiset {
    mode: SetMode,
    counts: HashMap<u128, usize>,
    log: Vec<(u64, u128)>,
    /// Log positions holding each element.
    slots: HashMap<u128, Vec<usize>>,
    clock: u64,
}

impl OracleMultiset {
    pub fn new(mode: SetMode) -> Self {
        OracleMultiset {
            mode,
            counts: HashMap::new(),
            log: Vec::new(),
            slots: HashMap::new(),
            clock: 0,
        }
    }

    pub fn mode(&self) -> SetMode {
        self.mode
    }

    /// Records an insertion; in set mode a present element is left alone.
    /// Returns whether a new copy was added.
    pub fn insert(&mut self, x: u128) -> bool {
        self.clock += 1;
        if self.mode == SetMode::Set && self.contains(x) {
            return false;
        }
        *self.counts.entry(x).or_insert(0) += 1;
        self.slots.entry(x).or_default().push(self.log.len());
        self.log.push((self.clock, x));
        true
    }

    /// Removes one copy of `x`, which must be present.
    pub fn delete(&mut self, x: u128) -> Result<()> {
        let Some(idx) = self.slots.get(&x).and_then(|v| v.last().copied()) else {
            return Err(Error::Precondition(format!("delete of absent element {x}")));
        };
        self.clock += 1;
        self.remove_entry(idx);
        Ok(())
    }

    fn remove_entry(&mut self, idx: usize) -> u128 {
        let (_, x) = self.log.swap_remove(idx);
        let v = self.slots.get_mut(&x).unwrap();
        v.retain(|i| *i != idx);
        if v.is_empty() {
            self.slots.remove(&x);
        }
        if let Some(&(_, moved)) = self.log.get(idx) {
            let old = self.log.len();
            for i in self.slots.get_mut(&moved).unwrap() {
                if *i == old {
                    *i = idx;
                }
            }
        }
        let c = self.counts.get_mut(&x).unwrap();
        *c -= 1;
        if *c == 0 {
            self.counts.remove(&x);
        }
        x
    }

    /// A surviving insertion chosen uniformly, with its timestamp.
    pub fn pick_survivor(&self, rng: &mut impl Rng) -> Option<(u64, u128)> {
        if self.log.is_empty() {
            None
        } else {
            Some(self.log[rng.gen_range(0..self.log.len())])
        }
    }

    pub fn contains(&self, x: u128) -> bool {
        self.counts.contains_key(&x)
    }

    pub fn count(&self, x: u128) -> usize {
        self.counts.get(&x).copied().unwrap_or(0)
    }

    /// Total number of copies.
    pub fn len(&self) -> u64 {
        self.log.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.log.is_empty()
    }

    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    pub fn elements(&self) -> impl Iterator<Item = (u128, usize)> + '_ {
        self.counts.iter().map(|(x, c)| (*x, *c))
    }

    /// Internal consistency of counts, log, and positions.
    pub fn check(&self) -> std::result::Result<(), String> {
        let total: usize = self.counts.values().sum();
        if total != self.log.len() || self.counts.values().any(|c| *c == 0) {
            return Err("counts disagree with the log".into());
        }
        for (x, pos) in &self.slots {
            if pos.len() != self.count(*x) || pos.iter().any(|i| self.log[*i].1 != *x) {
                return Err(format!("positions of {x} are stale"));
            }
        }
        Ok(())
    }
}

/// Exhaustive search for the shortest prefix-free choice of prefixes.
pub struct MinimalPrefixOracle;

impl MinimalPrefixOracle {
    /// Minimum of the summed prefix lengths over all assignments where every
    /// element gets a prefix of its string, copies of one string share a
    /// prefix, and prefixes of distinct strings are not prefixes of each
    /// other. Strings must be distinct from each other or exact copies.
    pub fn min_total(rs: &[BitStr]) -> u64 {
        let mut distinct: Vec<(BitStr, u64)> = Vec::new();
        for r in rs {
            match distinct.iter_mut().find(|(d, _)| d == r) {
                Some((_, c)) => *c += 1,
                None => distinct.push((*r, 1)),
            }
        }
        let mut chosen = Vec::with_capacity(distinct.len());
        let mut best = u64::MAX;
        Self::search(&distinct, &mut chosen, 0, &mut best);
        best
    }

    fn search(items: &[(BitStr, u64)], chosen: &mut Vec<BitStr>, cost: u64, best: &mut u64) {
        if cost >= *best {
            return;
        }
        let i = chosen.len();
        if i == items.len() {
            *best = cost;
            return;
        }
        let (r, copies) = items[i];
        for len in 0..=r.len() {
            if cost + copies * len as u64 >= *best {
                break;
            }
            let a = r.prefix(len);
            let clash = chosen
                .iter()
                .any(|b| a.is_prefix_of(b) || b.is_prefix_of(&a));
            if clash {
                continue;
            }
            chosen.push(a);
            Self::search(items, chosen, cost + copies * len as u64, best);
            chosen.pop();
        }
    }
}

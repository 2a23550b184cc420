//! Operation streams that respect the dictionary's preconditions: deletions
//! only target surviving elements and the cardinality never exceeds `n`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::oracle::OracleMultiset;
use crate::dictionary::SetMode;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Op {
    Insert(u128),
    Delete(u128),
    Query(u128),
}

impl Op {
    pub fn element(&self) -> u128 {
        match *self {
            Op::Insert(x) | Op::Delete(x) | Op::Query(x) => x,
        }
    }
}

/// Relative weights of the three operation kinds after the fill phase.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpMix {
    pub insert: f64,
    pub delete: f64,
    pub query: f64,
}

impl Default for OpMix {
    fn default() -> Self {
        OpMix {
            insert: 0.35,
            delete: 0.35,
            query: 0.30,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Workload {
    pub seed: u64,
    pub mix: OpMix,
    pub mode: SetMode,
    /// Cardinality cap.
    pub n: u64,
    /// Operations after the fill phase.
    pub ops: u64,
    /// Elements are drawn from `[0, universe)`.
    pub universe: u128,
    /// Load reached by the fill phase, as a fraction of `n`.
    pub fill: f64,
    /// Chance that an insertion repeats a surviving element.
    pub dup_rate: f64,
    /// Chance that a query targets a surviving element.
    pub hit_rate: f64,
}

impl Workload {
    /// Random multiset or set workload at full load.
    pub fn new(seed: u64, mode: SetMode, n: u64, ops: u64, universe: u128) -> Self {
        Workload {
            seed,
            mix: OpMix::default(),
            mode,
            n,
            ops,
            universe,
            fill: 1.0,
            dup_rate: 0.0,
            hit_rate: 0.5,
        }
    }

    pub fn fill_ops(&self) -> u64 {
        (self.fill * self.n as f64).floor() as u64
    }

    pub fn total_ops(&self) -> u64 {
        self.fill_ops() + self.ops
    }

    pub fn generator(&self) -> OpGen {
        OpGen {
            w: self.clone(),
            rng: ChaCha8Rng::seed_from_u64(self.seed),
            emitted: 0,
            cursor: 0,
        }
    }
}

/// Draws the next operation given the current contents.
pub struct OpGen {
    w: Workload,
    rng: ChaCha8Rng,
    emitted: u64,
    /// Next fresh key in set mode.
    cursor: u128,
}

impl OpGen {
    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// `None` once the workload is exhausted.
    pub fn next(&mut self, oracle: &OracleMultiset) -> Option<Op> {
        if self.emitted >= self.w.total_ops() {
            return None;
        }
        let filling = self.emitted < self.w.fill_ops();
        self.emitted += 1;
        if filling {
            return Some(self.insert_or_delete(oracle, true));
        }
        let mix = self.w.mix;
        let u = self.rng.gen::<f64>() * (mix.insert + mix.delete + mix.query);
        Some(if u < mix.insert + mix.delete {
            self.insert_or_delete(oracle, u < mix.insert)
        } else {
            self.query(oracle)
        })
    }

    fn insert_or_delete(&mut self, oracle: &OracleMultiset, want_insert: bool) -> Op {
        let full = oracle.len() >= self.w.n;
        if (want_insert && !full) || oracle.is_empty() {
            Op::Insert(self.fresh_or_dup(oracle))
        } else {
            Op::Delete(oracle.pick_survivor(&mut self.rng).unwrap().1)
        }
    }

    fn fresh_or_dup(&mut self, oracle: &OracleMultiset) -> u128 {
        if !oracle.is_empty() && self.rng.gen_bool(self.w.dup_rate) {
            return oracle.pick_survivor(&mut self.rng).unwrap().1;
        }
        match self.w.mode {
            SetMode::Multiset => self.rng.gen_range(0..self.w.universe),
            // Structured keys: short runs of consecutive integers, the
            // pattern a hash-free layout would handle worst.
            SetMode::Set => {
                if self.rng.gen_bool(0.1) {
                    self.cursor = self.rng.gen_range(0..self.w.universe);
                }
                let x = self.cursor % self.w.universe;
                self.cursor = self.cursor.wrapping_add(1);
                x
            }
        }
    }

    fn query(&mut self, oracle: &OracleMultiset) -> Op {
        if !oracle.is_empty() && self.rng.gen_bool(self.w.hit_rate) {
            Op::Query(oracle.pick_survivor(&mut self.rng).unwrap().1)
        } else {
            Op::Query(self.rng.gen_range(0..self.w.universe))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn replay(w: &Workload) -> (OracleMultiset, u64) {
        let mut o = OracleMultiset::new(w.mode);
        let mut g = w.generator();
        let mut count = 0;
        while let Some(op) = g.next(&o) {
            count += 1;
            match op {
                Op::Insert(x) => {
                    o.insert(x);
                }
                Op::Delete(x) => o.delete(x).expect("delete targets a survivor"),
                Op::Query(_) => {}
            }
            assert!(o.len() <= w.n);
        }
        (o, count)
    }

    #[test]
    fn honors_cap_and_survivors() {
        for mode in [SetMode::Set, SetMode::Multiset] {
            let mut w = Workload::new(3, mode, 200, 5000, 1 << 20);
            w.dup_rate = 0.2;
            let (o, count) = replay(&w);
            assert_eq!(count, 5200);
            o.check().unwrap();
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let w = Workload::new(8, SetMode::Multiset, 50, 500, 1 << 30);
        let ops = |w: &Workload| {
            let mut g = w.generator();
            let mut o = OracleMultiset::new(w.mode);
            let mut v = Vec::new();
            while let Some(op) = g.next(&o) {
                if let Op::Insert(x) = op {
                    o.insert(x);
                } else if let Op::Delete(x) = op {
                    o.delete(x).unwrap();
                }
                v.push(op);
            }
            v
        };
        assert_eq!(ops(&w), ops(&w));
    }
}

//! The common dictionary interface and the audit report shared by both
//! regimes.

use serde::{Deserialize, Serialize};

use crate::bits::AccessMeter;
use crate::crate_dense::DenseCrateDict;
use crate::crate_sparse::SparseCrateDict;
use crate::error::Result;
use crate::hashing::{Mode, Overrides, Params, Seed};

/// Whether duplicates are counted or collapsed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SetMode {
    /// Sets of arbitrary elements: inputs are permuted first and repeated
    /// inserts are no-ops.
    Set,
    /// Random multisets: inputs are stored as given, with multiplicity.
    Multiset,
}

/// Result of a full read-only scan.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct AuditReport {
    pub elements: u64,
    pub pds: usize,
    pub full_pds: usize,
    pub pd_elements: u64,
    pub sid_elements: u64,
    pub max_sid_load: usize,
    pub allocated_bits: u64,
    pub formula_bits: u64,
    /// Bins with spare residents while not full.
    pub invariant1_violations: usize,
    /// Groups whose pointer order disagrees with remainder order.
    pub sync_violations: usize,
    /// Groups whose adaptive remainders are not the minimal prefix-free set.
    pub minimality_violations: usize,
    /// Total adaptive remainder bits (sparse mode).
    pub alpha_bits: u64,
    pub structural_errors: Vec<String>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.invariant1_violations == 0
            && self.sync_violations == 0
            && self.minimality_violations == 0
            && self.structural_errors.is_empty()
            && self.allocated_bits == self.formula_bits
            && self.elements == self.pd_elements + self.sid_elements
    }

    pub fn full_fraction(&self) -> f64 {
        self.full_pds as f64 / self.pds.max(1) as f64
    }
}

/// Operations every crate dictionary supports.
pub trait Dictionary {
    fn insert(&mut self, x: u128) -> Result<()>;
    fn delete(&mut self, x: u128) -> Result<()>;
    fn query(&self, x: u128) -> bool;
    /// Exact stored multiplicity, for tests.
    fn multiplicity(&self, x: u128) -> usize;
    fn len(&self) -> u64;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn meter(&self) -> &AccessMeter;
    fn params(&self) -> &Params;
    /// Sticky flag set by the first component overflow.
    fn overflowed(&self) -> bool;
    fn audit(&self) -> AuditReport;
}

/// A crate dictionary in whichever regime its parameters select.
#[derive(Clone, Debug)]
pub enum CrateDict {
    Dense(DenseCrateDict),
    Sparse(SparseCrateDict),
}

impl CrateDict {
    pub fn new(params: Params, set_mode: SetMode, seed: Seed) -> Result<Self> {
        Ok(match params.mode {
            Mode::Dense => CrateDict::Dense(DenseCrateDict::new(params, set_mode, seed)?),
            Mode::Sparse => CrateDict::Sparse(SparseCrateDict::new(params, set_mode, seed)?),
        })
    }

    /// Derives parameters for `(n, rho, w_eff)` and builds an empty dictionary.
    pub fn with_config(n: u64, rho: f64, w_eff: usize, o: &Overrides, set_mode: SetMode, seed: Seed) -> Result<Self> {
        CrateDict::new(Params::derive(n, rho, w_eff, o)?, set_mode, seed)
    }

    fn inner(&self) -> &dyn Dictionary {
        match self {
            CrateDict::Dense(d) => d,
            CrateDict::Sparse(d) => d,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn Dictionary {
        match self {
            CrateDict::Dense(d) => d,
            CrateDict::Sparse(d) => d,
        }
    }
}

impl Dictionary for CrateDict {
    fn insert(&mut self, x: u128) -> Result<()> {
        self.inner_mut().insert(x)
    }
    fn delete(&mut self, x: u128) -> Result<()> {
        self.inner_mut().delete(x)
    }
    fn query(&self, x: u128) -> bool {
        self.inner().query(x)
    }
    fn multiplicity(&self, x: u128) -> usize {
        self.inner().multiplicity(x)
    }
    fn len(&self) -> u64 {
        self.inner().len()
    }
    fn meter(&self) -> &AccessMeter {
        self.inner().meter()
    }
    fn params(&self) -> &Params {
        self.inner().params()
    }
    fn overflowed(&self) -> bool {
        self.inner().overflowed()
    }
    fn audit(&self) -> AuditReport {
        self.inner().audit()
    }
}

pub mod adaptive;
pub mod bits;
pub mod crate_dense;
pub mod crate_sparse;
pub mod csd;
pub mod dictionary;
pub mod error;
pub mod filter;
pub mod harness;
pub mod hashing;
pub mod pocket_dict;
pub mod pocket_motel;
pub mod retrieval;
pub mod serial;
pub mod sid;
pub mod symbols;

pub use crate_dense::DenseCrateDict;
pub use crate_sparse::SparseCrateDict;
pub use dictionary::{AuditReport, CrateDict, Dictionary, SetMode};
pub use filter::CrateFilter;
pub use retrieval::Retrieval;
pub use error::{Component, Error, Result};

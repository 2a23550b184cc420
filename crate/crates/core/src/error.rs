use thiserror::Error;

/// Which component ran out of pre-allocated room.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    PocketDict,
    VarPocketDict,
    Csd,
    VarCsd,
    Motel,
    Sid,
}

impl std::fmt::Display for Component {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Component::PocketDict => "pocket dictionary",
            Component::VarPocketDict => "variable-length pocket dictionary",
            Component::Csd => "counting set dictionary",
            Component::VarCsd => "variable-length counting set dictionary",
            Component::Motel => "pocket motel",
            Component::Sid => "spare",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("bit range {offset}+{len} exceeds capacity {capacity}")]
    OutOfBounds {
        offset: usize,
        len: usize,
        capacity: usize,
    },
    #[error("value does not fit in {len} bits")]
    ValueOverflow { len: usize },
    #[error("window holds fewer than {wanted} zeros")]
    SelectNotFound { wanted: usize },
    #[error("shift would push non-zero bits out of the region")]
    RegionFull,
    #[error("element not found")]
    NotFound,
    #[error("{0} overflow")]
    Overflow(Component),
    #[error("cardinality limit {0} reached")]
    CapacityExceeded(u64),
    #[error("element {0} outside the universe")]
    OutOfUniverse(u128),
    #[error("slot {0} is vacant")]
    InvalidPointer(usize),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("malformed serialized state: {0}")]
    Format(String),
    #[error("construction failed after {0} attempts")]
    ConstructionFailed(u32),
}

pub type Result<T> = std::result::Result<T, Error>;

//! Adaptive remainders: for a group of remainders, the shortest prefixes that
//! keep distinct remainders prefix-free.
//!
//! Two prefixes `r_i[..a]` and `r_j[..b]` of distinct remainders are
//! prefix-free exactly when `min(a, b) > lcp(r_i, r_j)`, so the unique
//! minimal assignment gives each remainder `1 + max_j lcp(r_i, r_j)` bits and
//! a lone remainder none. Updates after one insertion or deletion touch at
//! most one other distinct element.

use crate::bits::BitStr;

/// Minimal prefix-free prefixes of `rs`; copies share their prefix.
pub fn compute_group_remainders(rs: &[BitStr]) -> Vec<BitStr> {
    rs.iter()
        .map(|ri| {
            rs.iter()
                .filter(|rj| *rj != ri)
                .map(|rj| ri.lcp(rj))
                .max()
                .map_or(BitStr::EMPTY, |k| ri.prefix(k + 1))
        })
        .collect()
}

/// Ranks `[j0, j1)` of the stored element whose prefix matches `r`.
///
/// Prefix-freeness leaves at most one distinct match, and its copies are
/// adjacent.
pub fn match_range(alphas: &[BitStr], r: &BitStr) -> Option<(usize, usize)> {
    let j0 = alphas.iter().position(|a| a.is_prefix_of(r))?;
    let j1 = j0 + alphas[j0..].iter().take_while(|a| **a == alphas[j0]).count();
    Some((j0, j1))
}

/// How to add one remainder to a group.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InsertPlan {
    /// Rank of the new entry in the group after insertion.
    pub rank: usize,
    pub alpha: BitStr,
    /// Entries (by rank before insertion) whose prefix must be replaced.
    pub extend: Vec<(usize, BitStr)>,
    pub duplicate: bool,
}

impl InsertPlan {
    /// Growth of the group's total prefix length.
    pub fn added_bits(&self, alphas: &[BitStr]) -> usize {
        self.alpha.len()
            + self
                .extend
                .iter()
                .map(|(j, a)| a.len() - alphas[*j].len())
                .sum::<usize>()
    }
}

/// Plans the insertion of `r` into a group with prefixes `alphas` in rank
/// order. `full` reads the complete remainder stored at a rank; it is called
/// at most once, and only when some prefix matches `r`.
pub fn plan_insert(alphas: &[BitStr], r: &BitStr, mut full: impl FnMut(usize) -> BitStr) -> InsertPlan {
    if let Some((j0, j1)) = match_range(alphas, r) {
        let ry = full(j0);
        if ry == *r {
            return InsertPlan {
                rank: j1,
                alpha: alphas[j0],
                extend: Vec::new(),
                duplicate: true,
            };
        }
        let l = r.lcp(&ry);
        let ay = ry.prefix(l + 1);
        return InsertPlan {
            rank: if r.lex_cmp(&ry).is_lt() { j0 } else { j1 },
            alpha: r.prefix(l + 1),
            extend: (j0..j1).map(|j| (j, ay)).collect(),
            duplicate: false,
        };
    }
    let Some(k) = alphas.iter().map(|a| r.lcp(a)).max() else {
        return InsertPlan {
            rank: 0,
            alpha: BitStr::EMPTY,
            extend: Vec::new(),
            duplicate: false,
        };
    };
    let alpha = r.prefix(k + 1);
    InsertPlan {
        rank: alphas.iter().filter(|a| a.lex_cmp(&alpha).is_lt()).count(),
        alpha,
        extend: Vec::new(),
        duplicate: false,
    }
}

/// Prefixes to shorten after a removal, as `(rank, new prefix)`.
///
/// For prefix-free prefixes of distinct remainders, `lcp` of the prefixes
/// equals `lcp` of the remainders, so no full remainder is needed.
pub fn shrink_group_remainders(alphas: &[BitStr]) -> Vec<(usize, BitStr)> {
    compute_group_remainders(alphas)
        .into_iter()
        .enumerate()
        .filter(|(j, a)| a.len() < alphas[*j].len())
        .collect()
}

/// Applies a plan to a plain list, for oracles and tests.
pub fn apply_insert(alphas: &mut Vec<BitStr>, plan: &InsertPlan) {
    for (j, a) in &plan.extend {
        alphas[*j] = *a;
    }
    alphas.insert(plan.rank, plan.alpha);
}

use std::collections::{BTreeMap, HashMap};

use proptest::prelude::*;

use crate_dict::adaptive::{apply_insert, compute_group_remainders, plan_insert};
use crate_dict::bits::{AccessMeter, BitBuffer, BitStr};
use crate_dict::csd::CountingSetDict;
use crate_dict::harness::{replay, DiffOptions, MinimalPrefixOracle, Op};
use crate_dict::hashing::{Overrides, Permutation, Seed};
use crate_dict::pocket_dict::PocketDict;
use crate_dict::pocket_motel::PocketMotel;
use crate_dict::{CrateDict, Dictionary, Error, SetMode};

fn meter() -> AccessMeter {
    AccessMeter::new(64)
}

fn bits_of(b: &BitBuffer) -> Vec<bool> {
    (0..b.bit_capacity()).map(|i| b.get_bit(i)).collect()
}

fn group() -> impl Strategy<Value = Vec<BitStr>> {
    (1usize..=12).prop_flat_map(|len| {
        prop::collection::vec(0u128..(1 << len), 1..=8)
            .prop_map(move |v| v.into_iter().map(|x| BitStr::new(x, len)).collect())
    })
}

proptest! {
    #[test]
    fn field_writes_match_bit_vector(
        cap in 1usize..400,
        writes in prop::collection::vec((0usize..400, 0usize..=128, any::<u128>()), 1..30),
    ) {
        let mut b = BitBuffer::new(cap);
        let mut v = vec![false; cap];
        for (off, len, val) in writes {
            if off + len > cap {
                prop_assert!(b.write_bits(off, len, 0).is_err());
                continue;
            }
            let val = if len == 128 { val } else { val & ((1u128 << len) - 1) };
            b.write_bits(off, len, val).unwrap();
            for i in 0..len {
                v[off + i] = (val >> (len - 1 - i)) & 1 == 1;
            }
            prop_assert_eq!(b.read_bits(off, len).unwrap(), val);
        }
        prop_assert_eq!(bits_of(&b), v);
    }

    #[test]
    fn shifts_match_vector_splicing(
        cap in 8usize..300,
        ops in prop::collection::vec((any::<bool>(), 0usize..300, 1usize..20, any::<u64>()), 1..20),
    ) {
        let mut b = BitBuffer::new(cap);
        let mut v = vec![false; cap];
        for (ins, off, len, val) in ops {
            if off + len > cap {
                continue;
            }
            let val = val as u128 & ((1u128 << len) - 1);
            if ins {
                let tail_free = v[cap - len..].iter().all(|x| !x);
                match b.shift_insert(0, cap, off, len, val) {
                    Ok(()) => {
                        prop_assert!(tail_free);
                        v.truncate(cap - len);
                        let bits: Vec<bool> = (0..len).map(|i| (val >> (len - 1 - i)) & 1 == 1).collect();
                        v.splice(off..off, bits);
                    }
                    Err(Error::RegionFull) => prop_assert!(!tail_free),
                    Err(e) => return Err(TestCaseError::fail(e.to_string())),
                }
            } else {
                b.shift_delete(0, cap, off, len).unwrap();
                v.drain(off..off + len);
                v.extend(std::iter::repeat(false).take(len));
            }
            prop_assert_eq!(bits_of(&b), v.clone());
        }
    }

    #[test]
    fn meter_charges_touched_blocks(offset in 0usize..1000, len in 1usize..300, block in prop::sample::select(vec![64usize, 256, 1024])) {
        let m = AccessMeter::new(block);
        m.charge_read(offset, len);
        let touched = (offset..offset + len).map(|i| i / block).collect::<std::collections::BTreeSet<_>>().len() as u64;
        prop_assert_eq!(m.total(), touched);
        let lo = len.div_ceil(block) as u64;
        prop_assert!(touched >= lo && touched <= lo + 1);
    }

    #[test]
    fn permutation_is_a_bijection(domain in 1u128..600, seed in any::<u64>()) {
        let p = Permutation::new(domain, &Seed::from_u64(seed));
        let mut seen = vec![false; domain as usize];
        for x in 0..domain {
            let y = p.permute(x);
            prop_assert!(y < domain);
            prop_assert!(!seen[y as usize]);
            seen[y as usize] = true;
            prop_assert_eq!(p.unpermute(y), x);
        }
    }

    #[test]
    fn greedy_prefixes_are_minimal(rs in group()) {
        let mut sorted = rs.clone();
        sorted.sort_by(|a, b| a.lex_cmp(b));
        let alphas = compute_group_remainders(&sorted);
        let total: u64 = alphas.iter().map(|a| a.len() as u64).sum();
        prop_assert_eq!(total, MinimalPrefixOracle::min_total(&sorted));
        for (i, (a, r)) in alphas.iter().zip(&sorted).enumerate() {
            prop_assert!(a.is_prefix_of(r));
            for (b, s) in alphas.iter().zip(&sorted).skip(i + 1) {
                if r == s {
                    prop_assert_eq!(a, b);
                } else {
                    prop_assert!(!a.is_prefix_of(b) && !b.is_prefix_of(a));
                }
            }
        }
    }

    #[test]
    fn incremental_prefixes_match_batch(rs in group()) {
        let mut alphas: Vec<BitStr> = Vec::new();
        let mut full: Vec<BitStr> = Vec::new();
        for r in &rs {
            let plan = plan_insert(&alphas, r, |j| full[j]);
            full.insert(plan.rank, *r);
            apply_insert(&mut alphas, &plan);
            prop_assert_eq!(&alphas, &compute_group_remainders(&full));
        }
    }

    #[test]
    fn pocket_dict_matches_multiset(ops in prop::collection::vec((any::<bool>(), 0usize..6, 0u128..8), 1..80)) {
        let m = meter();
        let mut pd = PocketDict::new(6, 9, 3);
        let mut model: BTreeMap<(usize, u128), usize> = BTreeMap::new();
        for (ins, q, r) in ops {
            let total: usize = model.values().sum();
            if ins {
                let res = pd.insert(q, r, &m);
                if total == 9 {
                    prop_assert!(res.is_err());
                } else {
                    res.unwrap();
                    *model.entry((q, r)).or_default() += 1;
                }
            } else {
                let have = model.get(&(q, r)).copied().unwrap_or(0);
                prop_assert_eq!(pd.delete(q, r, &m).is_ok(), have > 0);
                if have == 1 {
                    model.remove(&(q, r));
                } else if have > 1 {
                    *model.get_mut(&(q, r)).unwrap() -= 1;
                }
            }
            pd.check().unwrap();
            prop_assert_eq!(pd.occupancy(), model.values().sum::<usize>());
            for q in 0..6 {
                for r in 0..8 {
                    prop_assert_eq!(pd.query(q, r, &m), model.get(&(q, r)).copied().unwrap_or(0));
                }
            }
        }
    }

    #[test]
    fn csd_matches_counting_map(ops in prop::collection::vec((any::<bool>(), 0u128..12), 1..120)) {
        let m = meter();
        let mut c = CountingSetDict::new(5, 8, 0, 4);
        let mut model: BTreeMap<u128, usize> = BTreeMap::new();
        for (ins, k) in ops {
            if ins {
                let before = c.image().clone();
                match c.insert(k, 0, 0, &m) {
                    Ok(_) => *model.entry(k).or_default() += 1,
                    Err(_) => {
                        let full = model.len() == 5 && !model.contains_key(&k);
                        let capped = model.get(&k) == Some(&4);
                        prop_assert!(full || capped);
                        prop_assert_eq!(c.image(), &before);
                    }
                }
            } else {
                let have = model.get(&k).copied().unwrap_or(0);
                prop_assert_eq!(c.delete(k, &m).is_ok(), have > 0);
                match have {
                    0 => {}
                    1 => { model.remove(&k); }
                    _ => *model.get_mut(&k).unwrap() -= 1,
                }
            }
            c.check().unwrap();
            prop_assert_eq!(c.support(), model.len());
            for k in 0..12 {
                prop_assert_eq!(c.query(k, &m), model.get(&k).copied().unwrap_or(0));
            }
        }
    }

    #[test]
    fn motel_pointers_are_stable(ops in prop::collection::vec((any::<bool>(), any::<u16>()), 1..80)) {
        let m = meter();
        let mut motel = PocketMotel::new(7, 16);
        let mut live: HashMap<usize, u128> = HashMap::new();
        for (ins, v) in ops {
            if ins {
                match motel.insert(v as u128, &m) {
                    Ok(p) => prop_assert!(live.insert(p, v as u128).is_none()),
                    Err(_) => prop_assert_eq!(live.len(), 7),
                }
            } else if let Some(&p) = live.keys().min() {
                motel.delete(p, &m).unwrap();
                live.remove(&p);
                prop_assert!(motel.read(p, &m).is_err());
            }
            motel.check().unwrap();
            for (p, v) in &live {
                prop_assert_eq!(motel.read(*p, &m).unwrap(), *v);
            }
        }
    }
}

fn small_ops(universe: u128) -> impl Strategy<Value = Vec<(u8, u128)>> {
    prop::collection::vec((0u8..3, 0..universe), 1..300)
}

/// Turns raw draws into a valid workload: deletions pick a present element.
fn legalize(raw: &[(u8, u128)], cap: usize) -> Vec<Op> {
    let mut live: Vec<u128> = Vec::new();
    let mut ops = Vec::new();
    for &(kind, x) in raw {
        match kind {
            0 if live.len() < cap => {
                live.push(x);
                ops.push(Op::Insert(x));
            }
            1 | 0 if !live.is_empty() => {
                let y = live.swap_remove((x % live.len() as u128) as usize);
                ops.push(Op::Delete(y));
            }
            _ => ops.push(Op::Query(x)),
        }
    }
    ops
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dense_dict_matches_oracle(raw in small_ops(1 << 11), seed in any::<u64>()) {
        let mut d = CrateDict::with_config(64, 32.0, 64, &Overrides { f_tilde: Some(24), ..Default::default() }, SetMode::Multiset, Seed::from_u64(seed)).unwrap();
        let ops = legalize(&raw, 64);
        let opts = DiffOptions { audit_every: 1, exact_counts: true, prefix_oracle: false };
        let r = replay(&ops, &mut d, &opts).unwrap();
        prop_assert!(r.passed() && r.overflows == 0, "{:?}", r);
    }

    #[test]
    fn sparse_dict_matches_oracle(raw in small_ops(1u128 << 76), seed in any::<u64>()) {
        let mut d = CrateDict::with_config(64, 2f64.powi(70), 64, &Overrides::default(), SetMode::Multiset, Seed::from_u64(seed)).unwrap();
        // Dense draws from a narrow window force shared quotients and prefixes.
        let raw: Vec<(u8, u128)> = raw.iter().map(|(k, x)| (*k, (x >> 60) << 60 | (x & 0xff))).collect();
        let ops = legalize(&raw, 64);
        let opts = DiffOptions { audit_every: 1, exact_counts: true, prefix_oracle: true };
        let r = replay(&ops, &mut d, &opts).unwrap();
        prop_assert!(r.passed(), "{:?}", r);
    }

    #[test]
    fn serialized_dicts_round_trip(raw in small_ops(1 << 16), sparse in any::<bool>(), seed in any::<u64>()) {
        let rho = if sparse { 2f64.powi(70) } else { 1024.0 };
        let mut d = CrateDict::with_config(64, rho, 64, &Overrides::default(), SetMode::Multiset, Seed::from_u64(seed)).unwrap();
        for op in legalize(&raw, 64) {
            match op {
                Op::Insert(x) => { let _ = d.insert(x); }
                Op::Delete(x) => { let _ = d.delete(x); }
                Op::Query(_) => {}
            }
        }
        let bytes = d.to_bytes();
        let back = CrateDict::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes(), bytes);
        for &(_, x) in &raw {
            prop_assert_eq!(back.multiplicity(x), d.multiplicity(x));
        }
    }
}

mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::rng;
use mixmatch_core::catalog::{ncore_filter, InteractionPair};
use mixmatch_core::Error;
use rand::Rng;

fn random_pairs(r: &mut rand_chacha::ChaCha8Rng) -> Vec<InteractionPair> {
    let queries = r.random_range(1..15);
    let items = r.random_range(1..15);
    let n = r.random_range(0..60);
    let mut set = BTreeSet::new();
    for _ in 0..n {
        set.insert((r.random_range(0..queries), r.random_range(0..items)));
    }
    set.into_iter()
        .map(|(q, i)| InteractionPair::new(format!("q{q}"), format!("i{i}")))
        .collect()
}

/// Direct restatement: count each endpoint, keep a pair when both counts
/// are inside the bounds.
fn oracle(pairs: &[InteractionPair], min: usize, max: usize) -> (Vec<InteractionPair>, BTreeSet<String>) {
    let mut q: BTreeMap<&str, usize> = BTreeMap::new();
    let mut i: BTreeMap<&str, usize> = BTreeMap::new();
    for p in pairs {
        *q.entry(&p.query_id).or_insert(0) += 1;
        *i.entry(&p.item_id).or_insert(0) += 1;
    }
    let ok = |c: usize| c >= min && c <= max;
    let kept = pairs
        .iter()
        .filter(|p| ok(q[p.query_id.as_str()]) && ok(i[p.item_id.as_str()]))
        .cloned()
        .collect();
    let ids = q
        .iter()
        .chain(i.iter())
        .filter(|(_, c)| ok(**c))
        .map(|(id, _)| id.to_string())
        .collect();
    (kept, ids)
}

#[test]
fn matches_oracle_on_random_sets() {
    let mut r = rng(2024);
    for _ in 0..1000 {
        let pairs = random_pairs(&mut r);
        let min = r.random_range(1..5);
        let max = min + r.random_range(0..6);
        let got = ncore_filter(&pairs, min, max).unwrap();
        let (kept, ids) = oracle(&pairs, min, max);
        assert_eq!(got.kept_pairs, kept);
        assert_eq!(got.kept_items, ids);
    }
}

#[test]
fn widening_bounds_never_drops_pairs() {
    let mut r = rng(99);
    for _ in 0..1000 {
        let pairs = random_pairs(&mut r);
        let min = r.random_range(2..5);
        let max = min + r.random_range(0..4);
        let narrow: BTreeSet<_> = ncore_filter(&pairs, min, max).unwrap().kept_pairs.into_iter().collect();
        let wide: BTreeSet<_> = ncore_filter(&pairs, min - 1, max + 1).unwrap().kept_pairs.into_iter().collect();
        assert!(narrow.is_subset(&wide));
    }
}

#[test]
fn bounds_validation() {
    assert!(matches!(ncore_filter(&[], 0, 3), Err(Error::InvalidBounds { .. })));
    assert!(matches!(ncore_filter(&[], 4, 3), Err(Error::InvalidBounds { .. })));
    let out = ncore_filter(&[], 1, 1).unwrap();
    assert!(out.kept_pairs.is_empty() && out.kept_items.is_empty());
}

mod common;

use std::cmp::Ordering;

use common::{random_params, rng, uniform};
use mixmatch_core::catalog::{EmbeddingStore, ItemRecord, QueryRecord, Role};
use mixmatch_core::retrieval::{item_key, top_k, CatalogScorer, QuerySide, ScoredItem};

fn top_id(i: usize) -> String {
    format!("t{:04}", (i * 7919) % 1000)
}

/// 1000 tops plus some bottoms; every tenth top duplicates its neighbour
/// so exact score ties occur.
fn catalog(r: &mut rand_chacha::ChaCha8Rng) -> EmbeddingStore {
    let mut items = Vec::new();
    let mut prev: Option<(Vec<f32>, Vec<f32>)> = None;
    for i in 0..1000 {
        let (f, s) = match (&prev, i % 10) {
            (Some(p), 0) => p.clone(),
            _ => (uniform(r, 6, 1.0), uniform(r, 3, 1.0)),
        };
        prev = Some((f.clone(), s.clone()));
        items.push(ItemRecord::new(top_id(i), Role::Top, f, s));
    }
    for i in 0..50 {
        items.push(ItemRecord::new(format!("b{i}"), Role::Bottom, uniform(r, 6, 1.0), uniform(r, 3, 1.0)));
    }
    let query = QueryRecord {
        id: "q".into(),
        feature: uniform(r, 6, 1.0),
        shown_bottom: None,
        ground_truth_top: None,
    };
    EmbeddingStore::from_parts(6, 3, items, vec![query], Vec::new()).unwrap()
}

fn oracle(store: &EmbeddingStore, side: &QuerySide, params: &mixmatch_core::retrieval::MatchModelParams, k: usize) -> Vec<ScoredItem> {
    let mut all: Vec<ScoredItem> = store
        .items()
        .filter(|i| i.role == Role::Top)
        .map(|i| ScoredItem {
            item_id: i.id.clone(),
            score: side.score_against(params, i).unwrap(),
        })
        .collect();
    all.sort_by(|a, b| match b.score.partial_cmp(&a.score).unwrap() {
        Ordering::Equal => a.item_id.cmp(&b.item_id),
        o => o,
    });
    all.truncate(k);
    all
}

#[test]
fn equals_full_sort() {
    for seed in 0..20 {
        let mut r = rng(seed);
        let store = catalog(&mut r);
        let mut params = random_params(&mut r, &store, 4, 1.0);
        // Duplicated rows also share id parameters, so their scores tie exactly.
        for i in (10..1000).step_by(10) {
            let e = params.entities[&item_key(&top_id(i - 1))].clone();
            params.entities.insert(item_key(&top_id(i)), e);
        }
        let scores: Vec<f32> = store
            .items_with_role(Role::Top)
            .map(|i| QuerySide::known(store.query("q").unwrap(), &params).unwrap().score_against(&params, i).unwrap())
            .collect();
        let distinct: std::collections::HashSet<u32> = scores.iter().map(|s| s.to_bits()).collect();
        assert!(distinct.len() < scores.len());
        let side = QuerySide::known(store.query("q").unwrap(), &params).unwrap();
        let scorer = CatalogScorer::new(&store, &params).unwrap();
        for k in [1, 5, 50] {
            let expected = oracle(&store, &side, &params, k);
            assert_eq!(top_k(&side, store.items(), k, &params).unwrap(), expected, "seed {seed} k {k}");
            assert_eq!(scorer.top_k(&side, k), expected, "seed {seed} k {k} cached");
        }
    }
}

#[test]
fn k_larger_than_catalog_and_zero() {
    let mut r = rng(1);
    let store = catalog(&mut r);
    let params = random_params(&mut r, &store, 2, 1.0);
    let side = QuerySide::cold(&store.query("q").unwrap().feature, &params).unwrap();
    assert_eq!(top_k(&side, store.items(), 5000, &params).unwrap().len(), 1000);
    assert!(top_k(&side, store.items(), 0, &params).unwrap().is_empty());
}

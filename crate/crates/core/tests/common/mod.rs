#![allow(dead_code)]

use mixmatch_core::catalog::{EmbeddingStore, InteractionPair, ItemRecord, QueryRecord, Role};
use mixmatch_core::retrieval::MatchModelParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, scale: f32) -> Vec<f32> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

#[derive(Clone, Debug)]
pub struct StoreShape {
    pub d_raw: usize,
    pub d_sem: usize,
    pub tops: usize,
    pub bottoms: usize,
    pub queries: usize,
    pub pairs_per_query: usize,
}

/// Random valid store. Ids mix ASCII and multi-byte characters.
pub fn random_store(rng: &mut ChaCha8Rng, shape: &StoreShape) -> EmbeddingStore {
    let mut items = Vec::new();
    for (role, n, prefix) in [(Role::Top, shape.tops, "top"), (Role::Bottom, shape.bottoms, "bøttom")] {
        for i in 0..n {
            let mut item = ItemRecord::new(
                format!("{prefix}-{i}"),
                role,
                uniform(rng, shape.d_raw, 1.0),
                uniform(rng, shape.d_sem, 1.0),
            );
            item.aligned = role == Role::Bottom && rng.random_bool(0.5);
            items.push(item);
        }
    }
    let mut queries = Vec::new();
    let mut pairs = Vec::new();
    for i in 0..shape.queries {
        let id = format!("q-{i}-☂");
        let shown = (shape.bottoms > 0 && rng.random_bool(0.7))
            .then(|| format!("bøttom-{}", rng.random_range(0..shape.bottoms)));
        let truth = (shape.tops > 0 && rng.random_bool(0.5)).then(|| format!("top-{}", rng.random_range(0..shape.tops)));
        if shape.tops > 0 {
            let mut chosen: Vec<usize> = (0..shape.pairs_per_query.min(shape.tops))
                .map(|_| rng.random_range(0..shape.tops))
                .collect();
            chosen.sort_unstable();
            chosen.dedup();
            for t in chosen {
                pairs.push(InteractionPair::new(id.clone(), format!("top-{t}")));
            }
        }
        queries.push(QueryRecord {
            id,
            feature: uniform(rng, shape.d_raw, 1.0),
            shown_bottom: shown,
            ground_truth_top: truth,
        });
    }
    EmbeddingStore::from_parts(shape.d_raw, shape.d_sem, items, queries, pairs).unwrap()
}

/// Initialised parameters with every value redrawn at unit scale.
pub fn random_params(rng: &mut ChaCha8Rng, store: &EmbeddingStore, d: usize, scale: f32) -> MatchModelParams {
    let mut params = MatchModelParams::init(store, d, rng.random()).unwrap();
    params.alpha = rng.random_range(-scale..scale);
    params.w1 = uniform(rng, params.w1.len(), scale);
    for entity in params.entities.values_mut() {
        entity.beta = rng.random_range(-scale..scale);
        entity.emb = uniform(rng, d, scale);
    }
    params
}

//! Seeded two-cluster catalogs for training and fusion checks.
//!
//! Raw features are split into four blocks. Queries and bottoms of cluster
//! `c` sit on block `c`, tops of cluster `c` on block `2 + c`, so a top and
//! its compatible query share no feature support and the match has to be
//! learned. Semantic embeddings carry the cluster sign directly.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::candidates::l2_normalize;
use crate::catalog::{EmbeddingStore, InteractionPair, ItemRecord, QueryRecord, Role};
use crate::error::{Error, Result};
use crate::retrieval::{MatchModelParams, QuerySide};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub tops: usize,
    pub bottoms: usize,
    pub queries: usize,
    pub positives_per_query: usize,
    pub heldout_per_query: usize,
    pub d_raw: usize,
    pub d_sem: usize,
    pub noise: f32,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            tops: 200,
            bottoms: 200,
            queries: 200,
            positives_per_query: 2,
            heldout_per_query: 1,
            d_raw: 8,
            d_sem: 8,
            noise: 0.3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticData {
    pub store: EmbeddingStore,
    /// Compatible pairs withheld from the store.
    pub heldout: Vec<InteractionPair>,
    /// Cluster of every item and query id.
    pub cluster: BTreeMap<String, usize>,
}

fn sample(rng: &mut ChaCha8Rng, sign: f32, dim: usize, noise: &Normal<f32>) -> Vec<f32> {
    (0..dim).map(|_| sign + noise.sample(rng)).collect()
}

fn block_feature(rng: &mut ChaCha8Rng, block: usize, dim: usize, noise: &Normal<f32>) -> Vec<f32> {
    let width = dim / 4;
    (0..dim)
        .map(|i| {
            let center = if i / width == block { 1.0 } else { 0.0 };
            center + noise.sample(rng)
        })
        .collect()
}

fn sign(cluster: usize) -> f32 {
    if cluster == 0 {
        1.0
    } else {
        -1.0
    }
}

pub fn two_cluster(config: &SyntheticConfig) -> Result<SyntheticData> {
    let per_query = config.positives_per_query + config.heldout_per_query;
    if config.tops < 4 || config.bottoms < 2 || config.d_raw < 4 || config.d_sem == 0 {
        return Err(Error::InvalidConfig("two_cluster needs >= 4 tops, >= 2 bottoms, d_raw >= 4, d_sem >= 1".into()));
    }
    if per_query > config.tops / 2 {
        return Err(Error::InvalidConfig(format!(
            "{per_query} tops per query exceeds cluster size {}",
            config.tops / 2
        )));
    }
    let noise = Normal::new(0.0, config.noise)
        .map_err(|e| Error::InvalidConfig(format!("noise {}: {e}", config.noise)))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut cluster = BTreeMap::new();

    let mut items = Vec::with_capacity(config.tops + config.bottoms);
    let mut tops_by_cluster: [Vec<String>; 2] = [Vec::new(), Vec::new()];
    let mut bottoms_by_cluster: [Vec<String>; 2] = [Vec::new(), Vec::new()];
    for (role, count, prefix) in [(Role::Top, config.tops, "t"), (Role::Bottom, config.bottoms, "b")] {
        for i in 0..count {
            let c = i % 2;
            let id = format!("{prefix}{i:04}");
            let block = if role == Role::Top { 2 + c } else { c };
            let feature = block_feature(&mut rng, block, config.d_raw, &noise);
            let mut sem = sample(&mut rng, sign(c), config.d_sem, &noise);
            l2_normalize(&mut sem)?;
            items.push(ItemRecord::new(id.clone(), role, feature, sem));
            match role {
                Role::Top => tops_by_cluster[c].push(id.clone()),
                Role::Bottom => bottoms_by_cluster[c].push(id.clone()),
            }
            cluster.insert(id, c);
        }
    }

    let mut queries = Vec::with_capacity(config.queries);
    let mut pairs = Vec::new();
    let mut heldout = Vec::new();
    for i in 0..config.queries {
        let c = i % 2;
        let id = format!("q{i:04}");
        let shown = &bottoms_by_cluster[c][rng.random_range(0..bottoms_by_cluster[c].len())];
        let chosen: Vec<&String> = tops_by_cluster[c].choose_multiple(&mut rng, per_query).collect();
        for (n, top) in chosen.iter().enumerate() {
            let pair = InteractionPair::new(id.clone(), (*top).clone());
            if n < config.positives_per_query {
                pairs.push(pair);
            } else {
                heldout.push(pair);
            }
        }
        queries.push(QueryRecord {
            id: id.clone(),
            feature: block_feature(&mut rng, c, config.d_raw, &noise),
            shown_bottom: Some(shown.clone()),
            ground_truth_top: chosen.first().map(|t| (*t).clone()),
        });
        cluster.insert(id, c);
    }

    let store = EmbeddingStore::from_parts(config.d_raw, config.d_sem, items, queries, pairs)?;
    Ok(SyntheticData { store, heldout, cluster })
}

/// Mean AUC of each held-out positive against the tops of the other
/// cluster. Tops already paired with the query are not used as negatives.
pub fn heldout_auc(data: &SyntheticData, params: &MatchModelParams) -> Result<f32> {
    let mut trained: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for p in data.store.pairs() {
        trained.entry(&p.query_id).or_default().insert(&p.item_id);
    }
    let mut total = 0.0f64;
    let mut count = 0usize;
    for pair in &data.heldout {
        let query = data
            .store
            .query(&pair.query_id)
            .ok_or_else(|| Error::UnknownEntity(pair.query_id.clone()))?;
        let side = QuerySide::known_or_cold(query, params)?;
        let qc = data.cluster[&pair.query_id];
        let positive = data
            .store
            .item(&pair.item_id)
            .ok_or_else(|| Error::UnknownEntity(pair.item_id.clone()))?;
        let pos_score = side.score_against(params, positive)?;
        let mut negatives = Vec::new();
        for item in data.store.items_with_role(Role::Top) {
            let skip = data.cluster[&item.id] == qc
                || trained.get(pair.query_id.as_str()).is_some_and(|s| s.contains(item.id.as_str()));
            if !skip {
                negatives.push(side.score_against(params, item)?);
            }
        }
        if let Some(auc) = crate::retrieval::pairwise_auc(pos_score, &negatives) {
            total += f64::from(auc);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptyList);
    }
    Ok((total / count as f64) as f32)
}

//! Retrieval-based matching: a visual BPR model over precomputed item
//! features.
//!
//! The matching score of query `q` against item `j` is
//!
//! ```text
//! score(q, j) = alpha + beta_q + beta_j + <e_q, e_j> + <v_q, v_j>,   v = f · W1
//! ```
//!
//! where `f` is the stored backbone feature and `W1` a shared `d_raw × d`
//! projection. Training minimises the pairwise ranking loss
//! `Σ -ln σ(score(q, j) - score(q, k))` over (query, positive, negative)
//! triples with plain SGD.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{EmbeddingStore, ItemRecord, QueryRecord, Role};
use crate::error::{dim_mismatch, Error, Result};
use crate::wire::{check_finite, Reader, Writer};

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"VBPR1";

/// Latent dimension used when none is configured.
pub const DEFAULT_LATENT_DIM: usize = 64;

const INIT_SCALE: f32 = 0.01;

/// Parameter-map key of a query.
pub fn query_key(id: &str) -> String {
    format!("q:{id}")
}

/// Parameter-map key of a catalog item.
pub fn item_key(id: &str) -> String {
    format!("i:{id}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct EntityParams {
    pub beta: f32,
    pub emb: Vec<f32>,
}

/// Full parameter set of the matching model.
///
/// Queries and items share one entity map; keys are namespaced with
/// [`query_key`] / [`item_key`] so ids may overlap across the two sides.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchModelParams {
    pub d_raw: usize,
    pub d: usize,
    pub seed: u64,
    pub alpha: f32,
    /// Row-major `d_raw × d`.
    pub w1: Vec<f32>,
    pub entities: BTreeMap<String, EntityParams>,
}

impl MatchModelParams {
    /// Seeded initialisation: `W1` and id embeddings uniform in ±0.01,
    /// biases zero. Entities are visited in sorted key order so the draw
    /// sequence does not depend on storage layout.
    pub fn init(store: &EmbeddingStore, d: usize, seed: u64) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidConfig("latent dimension must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d_raw = store.d_raw();
        let w1 = (0..d_raw * d).map(|_| rng.random_range(-INIT_SCALE..INIT_SCALE)).collect();
        let mut keys: Vec<String> = store
            .queries()
            .map(|q| query_key(&q.id))
            .chain(store.items().map(|i| item_key(&i.id)))
            .collect();
        keys.sort();
        let entities = keys
            .into_iter()
            .map(|key| {
                let emb = (0..d).map(|_| rng.random_range(-INIT_SCALE..INIT_SCALE)).collect();
                (key, EntityParams { beta: 0.0, emb })
            })
            .collect();
        Ok(Self {
            d_raw,
            d,
            seed,
            alpha: 0.0,
            w1,
            entities,
        })
    }

    /// All-zero parameters over the given entity keys.
    pub fn zeros(d_raw: usize, d: usize, keys: impl IntoIterator<Item = String>) -> Self {
        Self {
            d_raw,
            d,
            seed: 0,
            alpha: 0.0,
            w1: vec![0.0; d_raw * d],
            entities: keys
                .into_iter()
                .map(|k| (k, EntityParams { beta: 0.0, emb: vec![0.0; d] }))
                .collect(),
        }
    }

    pub fn entity(&self, key: &str) -> Result<&EntityParams> {
        self.entities.get(key).ok_or_else(|| Error::UnknownEntity(key.to_string()))
    }

    fn entity_mut(&mut self, key: &str) -> Result<&mut EntityParams> {
        self.entities.get_mut(key).ok_or_else(|| Error::UnknownEntity(key.to_string()))
    }

    /// Sum of squares over the regularised tensors (`W1` and id embeddings).
    pub fn regularized_norm_sq(&self) -> f32 {
        let w: f32 = self.w1.iter().map(|x| x * x).sum();
        let e: f32 = self.entities.values().flat_map(|p| p.emb.iter()).map(|x| x * x).sum();
        w + e
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer::new();
        w.bytes(CHECKPOINT_MAGIC);
        w.count(self.d_raw, "d_raw")?;
        w.count(self.d, "d")?;
        w.u64(self.seed);
        w.f32(self.alpha);
        w.count(self.entities.len(), "entity")?;
        for (key, p) in &self.entities {
            w.str(key)?;
            w.f32(p.beta);
            w.f32s(&p.emb);
        }
        w.f32s(&self.w1);
        Ok(w.into_inner())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(CHECKPOINT_MAGIC)?;
        let d_raw = r.u32()? as usize;
        let d = r.u32()? as usize;
        let seed = r.u64()?;
        let alpha = r.f32()?;
        let count = r.u32()? as usize;
        let mut entities = BTreeMap::new();
        for _ in 0..count {
            let key = r.str()?;
            let beta = r.f32()?;
            let emb = r.f32s(d)?;
            check_finite(&emb, || format!("embedding of {key}"))?;
            if !beta.is_finite() {
                return Err(Error::NonFiniteValue(format!("bias of {key}")));
            }
            if entities.insert(key.clone(), EntityParams { beta, emb }).is_some() {
                return Err(Error::DuplicateId(key));
            }
        }
        let w1 = r.f32s(d_raw * d)?;
        r.finish()?;
        check_finite(&w1, || "W1".into())?;
        if !alpha.is_finite() {
            return Err(Error::NonFiniteValue("alpha".into()));
        }
        Ok(Self {
            d_raw,
            d,
            seed,
            alpha,
            w1,
            entities,
        })
    }
}

pub fn save_checkpoint(params: &MatchModelParams, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, params.to_bytes()?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<MatchModelParams> {
    MatchModelParams::from_bytes(&fs::read(path)?)
}

fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Applies the shared linear projection: `featureᵀ · W1`.
pub fn project(feature: &[f32], params: &MatchModelParams) -> Result<Vec<f32>> {
    if feature.len() != params.d_raw {
        return Err(dim_mismatch("projected feature", params.d_raw, feature.len()));
    }
    let mut out = vec![0.0f32; params.d];
    for (row, &x) in params.w1.chunks_exact(params.d).zip(feature) {
        if x == 0.0 {
            continue;
        }
        for (o, &w) in out.iter_mut().zip(row) {
            *o += x * w;
        }
    }
    Ok(out)
}

/// The query-dependent half of the score, computed once per query.
#[derive(Clone, Debug, PartialEq)]
pub struct QuerySide {
    pub projected: Vec<f32>,
    pub emb: Vec<f32>,
    pub beta: f32,
}

impl QuerySide {
    /// Looks the query up in the parameter set.
    pub fn known(query: &QueryRecord, params: &MatchModelParams) -> Result<Self> {
        let entity = params.entity(&query_key(&query.id))?;
        Ok(Self {
            projected: project(&query.feature, params)?,
            emb: entity.emb.clone(),
            beta: entity.beta,
        })
    }

    /// Query never seen in training: zero id embedding and bias, so only the
    /// visual term and the item side contribute.
    pub fn cold(feature: &[f32], params: &MatchModelParams) -> Result<Self> {
        Ok(Self {
            projected: project(feature, params)?,
            emb: vec![0.0; params.d],
            beta: 0.0,
        })
    }

    /// Uses the trained parameters when present, otherwise the cold-start form.
    pub fn known_or_cold(query: &QueryRecord, params: &MatchModelParams) -> Result<Self> {
        match Self::known(query, params) {
            Err(Error::UnknownEntity(_)) => Self::cold(&query.feature, params),
            other => other,
        }
    }

    pub fn score_against(&self, params: &MatchModelParams, item: &ItemRecord) -> Result<f32> {
        let entity = params.entity(&item_key(&item.id))?;
        let v_j = project(&item.feature, params)?;
        Ok(params.alpha + self.beta + entity.beta + dot(&self.emb, &entity.emb) + dot(&self.projected, &v_j))
    }
}

pub fn match_score(query: &QueryRecord, item: &ItemRecord, params: &MatchModelParams) -> Result<f32> {
    QuerySide::known(query, params)?.score_against(params, item)
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TrainingTriple {
    pub query: String,
    pub positive: String,
    pub negative: String,
}

impl TrainingTriple {
    pub fn new(query: impl Into<String>, positive: impl Into<String>, negative: impl Into<String>) -> Self {
        Self {
            query: query.into(),
            positive: positive.into(),
            negative: negative.into(),
        }
    }
}

/// `-ln σ(x)` without overflow.
pub(crate) fn neg_log_sigmoid(x: f32) -> f32 {
    if x >= 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

fn sigmoid(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BprLoss {
    /// `Σ -ln σ(x̂_qj - x̂_qk)` over the triples.
    pub ranking: f32,
    /// `l2_reg · ‖params‖²` over `W1` and id embeddings.
    pub regularization: f32,
    pub total: f32,
}

struct ResolvedTriple<'a> {
    query: &'a QueryRecord,
    positive: &'a ItemRecord,
    negative: &'a ItemRecord,
}

fn resolve<'a>(triple: &TrainingTriple, store: &'a EmbeddingStore) -> Result<ResolvedTriple<'a>> {
    let query = store
        .query(&triple.query)
        .ok_or_else(|| Error::UnknownEntity(query_key(&triple.query)))?;
    let positive = store
        .item(&triple.positive)
        .ok_or_else(|| Error::UnknownEntity(item_key(&triple.positive)))?;
    let negative = store
        .item(&triple.negative)
        .ok_or_else(|| Error::UnknownEntity(item_key(&triple.negative)))?;
    Ok(ResolvedTriple {
        query,
        positive,
        negative,
    })
}

fn score_difference(t: &ResolvedTriple<'_>, params: &MatchModelParams) -> Result<f32> {
    let side = QuerySide::known(t.query, params)?;
    Ok(side.score_against(params, t.positive)? - side.score_against(params, t.negative)?)
}

pub fn bpr_loss(
    triples: &[TrainingTriple],
    store: &EmbeddingStore,
    params: &MatchModelParams,
    l2_reg: f32,
) -> Result<BprLoss> {
    let mut ranking = 0.0f32;
    for t in triples {
        ranking += neg_log_sigmoid(score_difference(&resolve(t, store)?, params)?);
    }
    let regularization = if l2_reg > 0.0 {
        l2_reg * params.regularized_norm_sq()
    } else {
        0.0
    };
    Ok(BprLoss {
        ranking,
        regularization,
        total: ranking + regularization,
    })
}

/// Gradient of the single-triple ranking loss (no regularisation).
#[derive(Clone, Debug, PartialEq)]
pub struct TripleGradient {
    /// Row-major `d_raw × d`.
    pub d_w1: Vec<f32>,
    /// Always zero: the global bias cancels in the score difference.
    pub d_alpha: f32,
    /// Always zero: the query bias cancels in the score difference.
    pub d_beta_q: f32,
    pub d_beta_j: f32,
    pub d_beta_k: f32,
    pub d_emb_q: Vec<f32>,
    pub d_emb_j: Vec<f32>,
    pub d_emb_k: Vec<f32>,
    /// Loss value at the current parameters.
    pub loss: f32,
}

pub fn bpr_gradients(triple: &TrainingTriple, store: &EmbeddingStore, params: &MatchModelParams) -> Result<TripleGradient> {
    let t = resolve(triple, store)?;
    let e_q = &params.entity(&query_key(&t.query.id))?.emb;
    let pos = params.entity(&item_key(&t.positive.id))?;
    let neg = params.entity(&item_key(&t.negative.id))?;

    let v_q = project(&t.query.feature, params)?;
    let v_j = project(&t.positive.feature, params)?;
    let v_k = project(&t.negative.feature, params)?;
    let v_diff: Vec<f32> = v_j.iter().zip(&v_k).map(|(a, b)| a - b).collect();
    let e_diff: Vec<f32> = pos.emb.iter().zip(&neg.emb).map(|(a, b)| a - b).collect();

    let x = pos.beta - neg.beta + dot(e_q, &e_diff) + dot(&v_q, &v_diff);
    // d(-ln σ(x))/dx
    let g = -sigmoid(-x);

    let f_diff: Vec<f32> = t
        .positive
        .feature
        .iter()
        .zip(&t.negative.feature)
        .map(|(a, b)| a - b)
        .collect();
    // <v_q, v_j - v_k> = f_qᵀ W Wᵀ Δf, so dW[a][b] = f_q[a]·(ΔfᵀW)[b] + Δf[a]·v_q[b].
    let d = params.d;
    let mut d_w1 = vec![0.0f32; params.d_raw * d];
    for ((row, &fq), &df) in d_w1.chunks_exact_mut(d).zip(&t.query.feature).zip(&f_diff) {
        for ((out, &vd), &vq) in row.iter_mut().zip(&v_diff).zip(&v_q) {
            *out = g * (fq * vd + df * vq);
        }
    }

    Ok(TripleGradient {
        d_w1,
        d_alpha: 0.0,
        d_beta_q: 0.0,
        d_beta_j: g,
        d_beta_k: -g,
        d_emb_q: e_diff.iter().map(|v| g * v).collect(),
        d_emb_j: e_q.iter().map(|v| g * v).collect(),
        d_emb_k: e_q.iter().map(|v| -g * v).collect(),
        loss: neg_log_sigmoid(x),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f32,
    /// L2 weight on `W1` and id embeddings; 0 trains the pure ranking loss.
    pub l2_reg: f32,
    pub epochs: usize,
    pub negatives_per_positive: usize,
    pub latent_dim: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            l2_reg: 1e-4,
            epochs: 100,
            negatives_per_positive: 1,
            latent_dim: DEFAULT_LATENT_DIM,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning_rate must be > 0, got {}", self.learning_rate)));
        }
        if !(self.l2_reg >= 0.0 && self.l2_reg.is_finite()) {
            return Err(Error::InvalidConfig(format!("l2_reg must be >= 0, got {}", self.l2_reg)));
        }
        if self.latent_dim == 0 {
            return Err(Error::InvalidConfig("latent_dim must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub params: MatchModelParams,
    /// Summed ranking loss of the triples seen in each epoch.
    pub epoch_losses: Vec<f32>,
}

impl TrainOutcome {
    pub fn final_loss(&self) -> Option<f32> {
        self.epoch_losses.last().copied()
    }
}

fn sgd_step(params: &mut MatchModelParams, t: &TrainingTriple, grad: &TripleGradient, lr: f32, l2: f32) -> Result<()> {
    let decay = 2.0 * l2;
    let step = |value: &mut f32, g: f32| *value -= lr * (g + decay * *value);
    for (w, &g) in params.w1.iter_mut().zip(&grad.d_w1) {
        step(w, g);
    }
    for (key, d_emb, d_beta) in [
        (query_key(&t.query), &grad.d_emb_q, grad.d_beta_q),
        (item_key(&t.positive), &grad.d_emb_j, grad.d_beta_j),
        (item_key(&t.negative), &grad.d_emb_k, grad.d_beta_k),
    ] {
        let entity = params.entity_mut(&key)?;
        for (e, &g) in entity.emb.iter_mut().zip(d_emb) {
            step(e, g);
        }
        entity.beta -= lr * d_beta;
    }
    params.alpha -= lr * grad.d_alpha;
    Ok(())
}

/// Trains the matching model with SGD over the store's positive pairs.
///
/// Deterministic for a given seed. Negatives are drawn uniformly from the
/// items sharing the positive's role, excluding the query's positives.
pub fn train(store: &EmbeddingStore, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if store.pairs().is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let mut params = MatchModelParams::init(store, config.latent_dim, config.seed)?;
    // Separate stream so changing the init scheme does not reshuffle sampling.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);

    let mut positives: HashMap<&str, HashSet<&str>> = HashMap::new();
    for p in store.pairs() {
        positives.entry(&p.query_id).or_default().insert(&p.item_id);
    }
    let tops: Vec<&str> = store.items_with_role(Role::Top).map(|i| i.id.as_str()).collect();
    let bottoms: Vec<&str> = store.items_with_role(Role::Bottom).map(|i| i.id.as_str()).collect();

    let mut order: Vec<usize> = (0..store.pairs().len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0f32;
        for &idx in &order {
            let pair = &store.pairs()[idx];
            let role = store.item(&pair.item_id).map(|i| i.role).unwrap_or(Role::Top);
            let pool = if role == Role::Top { &tops } else { &bottoms };
            let excluded = &positives[pair.query_id.as_str()];
            if pool.iter().all(|id| excluded.contains(id)) {
                continue;
            }
            for _ in 0..config.negatives_per_positive {
                let negative = loop {
                    let cand = pool[rng.random_range(0..pool.len())];
                    if !excluded.contains(cand) {
                        break cand;
                    }
                };
                let triple = TrainingTriple::new(&pair.query_id, &pair.item_id, negative);
                let grad = bpr_gradients(&triple, store, &params)?;
                epoch_loss += grad.loss;
                sgd_step(&mut params, &triple, &grad, config.learning_rate, config.l2_reg)?;
            }
        }
        log::debug!("epoch {epoch}: ranking loss {epoch_loss}");
        epoch_losses.push(epoch_loss);
    }
    check_finite(&params.w1, || "W1 after training (diverged?)".into())?;
    Ok(TrainOutcome { params, epoch_losses })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredItem {
    pub item_id: String,
    pub score: f32,
}

/// Descending score, then ascending id.
pub fn ranking_order(a: &ScoredItem, b: &ScoredItem) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.item_id.cmp(&b.item_id))
}

// Heap entry ordered so that the *worst* retained item sits on top.
struct Worst(ScoredItem);

impl PartialEq for Worst {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Worst {}
impl PartialOrd for Worst {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Worst {
    fn cmp(&self, other: &Self) -> Ordering {
        ranking_order(&self.0, &other.0)
    }
}

/// Selects the `k` best of an arbitrary score stream.
pub fn select_top_k(scored: impl IntoIterator<Item = ScoredItem>, k: usize) -> Vec<ScoredItem> {
    if k == 0 {
        return Vec::new();
    }
    let mut heap: BinaryHeap<Worst> = BinaryHeap::with_capacity(k + 1);
    for s in scored {
        if heap.len() < k {
            heap.push(Worst(s));
        } else if let Some(mut worst) = heap.peek_mut() {
            if ranking_order(&s, &worst.0) == Ordering::Less {
                *worst = Worst(s);
            }
        }
    }
    let mut out: Vec<ScoredItem> = heap.into_iter().map(|w| w.0).collect();
    out.sort_by(ranking_order);
    out
}

/// Ranks Top-role candidates for a query and returns the best `k`.
/// Candidates of any other role are skipped.
pub fn top_k<'a>(
    query: &QuerySide,
    candidates: impl IntoIterator<Item = &'a ItemRecord>,
    k: usize,
    params: &MatchModelParams,
) -> Result<Vec<ScoredItem>> {
    let mut scored = Vec::new();
    for item in candidates.into_iter().filter(|i| i.role == Role::Top) {
        scored.push(ScoredItem {
            item_id: item.id.clone(),
            score: query.score_against(params, item)?,
        });
    }
    Ok(select_top_k(scored, k))
}

/// Scores against a fixed catalog with item-side terms cached; used for
/// serving where the same catalog is ranked repeatedly.
#[derive(Clone, Debug)]
pub struct CatalogScorer {
    // (item id, beta, id embedding, projected feature) for Top items.
    rows: Vec<(String, f32, Vec<f32>, Vec<f32>)>,
    alpha: f32,
}

impl CatalogScorer {
    pub fn new(store: &EmbeddingStore, params: &MatchModelParams) -> Result<Self> {
        let rows = store
            .items_with_role(Role::Top)
            .map(|item| {
                let entity = params.entity(&item_key(&item.id))?;
                Ok((item.id.clone(), entity.beta, entity.emb.clone(), project(&item.feature, params)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            rows,
            alpha: params.alpha,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn top_k(&self, query: &QuerySide, k: usize) -> Vec<ScoredItem> {
        let scored = self.rows.iter().map(|(id, beta, emb, v)| ScoredItem {
            item_id: id.clone(),
            score: self.alpha + query.beta + beta + dot(&query.emb, emb) + dot(&query.projected, v),
        });
        select_top_k(scored, k)
    }
}

/// Fraction of negatives ranked strictly below the positive; ties count half.
pub fn pairwise_auc(positive: f32, negatives: &[f32]) -> Option<f32> {
    if negatives.is_empty() {
        return None;
    }
    let wins: f32 = negatives
        .iter()
        .map(|&n| match positive.partial_cmp(&n) {
            Some(Ordering::Greater) => 1.0,
            Some(Ordering::Equal) => 0.5,
            _ => 0.0,
        })
        .sum();
    Some(wins / negatives.len() as f32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::InteractionPair;

    fn tiny_store() -> EmbeddingStore {
        let items = vec![
            ItemRecord::new("t1", Role::Top, vec![1.0, 0.0], vec![1.0]),
            ItemRecord::new("t2", Role::Top, vec![0.0, 1.0], vec![1.0]),
            ItemRecord::new("b1", Role::Bottom, vec![0.5, 0.5], vec![1.0]),
        ];
        let queries = vec![QueryRecord {
            id: "q1".into(),
            feature: vec![1.0, 2.0],
            shown_bottom: Some("b1".into()),
            ground_truth_top: Some("t1".into()),
        }];
        EmbeddingStore::from_parts(2, 1, items, queries, vec![InteractionPair::new("q1", "t1")]).unwrap()
    }

    #[test]
    fn project_zero_and_identity() {
        let mut p = MatchModelParams::zeros(2, 2, []);
        p.w1 = vec![1.0, 0.0, 0.0, 1.0];
        assert_eq!(project(&[3.0, -1.0], &p).unwrap(), vec![3.0, -1.0]);
        assert_eq!(project(&[0.0, 0.0], &p).unwrap(), vec![0.0, 0.0]);
        assert!(matches!(project(&[1.0], &p), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn bias_only_score() {
        let store = tiny_store();
        let mut p = MatchModelParams::zeros(2, 3, [query_key("q1"), item_key("t1")]);
        assert_eq!(match_score(store.query("q1").unwrap(), store.item("t1").unwrap(), &p).unwrap(), 0.0);
        p.alpha = 1.0;
        p.entities.get_mut(&query_key("q1")).unwrap().beta = 0.5;
        p.entities.get_mut(&item_key("t1")).unwrap().beta = 0.25;
        assert_eq!(match_score(store.query("q1").unwrap(), store.item("t1").unwrap(), &p).unwrap(), 1.75);
        let err = match_score(store.query("q1").unwrap(), store.item("t2").unwrap(), &p).unwrap_err();
        assert!(matches!(err, Error::UnknownEntity(_)));
    }

    #[test]
    fn equal_scores_give_ln2_and_half_gradients() {
        let store = tiny_store();
        let p = MatchModelParams::zeros(2, 2, [query_key("q1"), item_key("t1"), item_key("t2")]);
        let t = TrainingTriple::new("q1", "t1", "t2");
        let loss = bpr_loss(std::slice::from_ref(&t), &store, &p, 0.0).unwrap();
        assert!((loss.ranking - std::f32::consts::LN_2).abs() < 1e-6);
        assert_eq!(loss.regularization, 0.0);
        let g = bpr_gradients(&t, &store, &p).unwrap();
        assert_eq!(g.d_beta_j, -0.5);
        assert_eq!(g.d_beta_k, 0.5);
        assert_eq!(g.d_alpha, 0.0);
        assert_eq!(g.d_beta_q, 0.0);
    }

    #[test]
    fn saturated_loss() {
        assert!((neg_log_sigmoid(20.0) - 2.061_153_6e-9).abs() < 1e-12);
        assert!(neg_log_sigmoid(20.0) > 0.0);
        assert!((neg_log_sigmoid(-20.0) - 20.0).abs() < 1e-5);
    }

    #[test]
    fn regularization_reported_separately() {
        let store = tiny_store();
        let mut p = MatchModelParams::zeros(2, 1, [query_key("q1"), item_key("t1"), item_key("t2")]);
        p.w1 = vec![1.0, 1.0];
        let t = TrainingTriple::new("q1", "t1", "t2");
        let loss = bpr_loss(&[t], &store, &p, 0.5).unwrap();
        assert_eq!(loss.regularization, 1.0);
        assert_eq!(loss.total, loss.ranking + 1.0);
    }

    #[test]
    fn zero_epochs_equals_init() {
        let store = tiny_store();
        let config = TrainConfig {
            epochs: 0,
            latent_dim: 4,
            seed: 9,
            ..TrainConfig::default()
        };
        let out = train(&store, &config).unwrap();
        assert_eq!(out.params, MatchModelParams::init(&store, 4, 9).unwrap());
        assert!(out.epoch_losses.is_empty());
    }

    #[test]
    fn empty_training_set() {
        let store = EmbeddingStore::empty(2, 2).unwrap();
        assert!(matches!(train(&store, &TrainConfig::default()), Err(Error::EmptyTrainingSet)));
    }

    #[test]
    fn bad_config_rejected() {
        let c = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(matches!(c.validate(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn top_k_edges_and_ties() {
        let store = tiny_store();
        let p = MatchModelParams::zeros(2, 2, store.items().map(|i| item_key(&i.id)));
        let q = QuerySide::cold(&[1.0, 1.0], &p).unwrap();
        assert!(top_k(&q, std::iter::empty(), 3, &p).unwrap().is_empty());
        // All scores tie at 0: ascending id, Bottom item skipped.
        let out = top_k(&q, store.items(), 10, &p).unwrap();
        let ids: Vec<&str> = out.iter().map(|s| s.item_id.as_str()).collect();
        assert_eq!(ids, ["t1", "t2"]);
        let cached = CatalogScorer::new(&store, &p).unwrap();
        assert_eq!(cached.top_k(&q, 10), out);
    }

    #[test]
    fn checkpoint_rejects_bad_magic() {
        assert!(matches!(MatchModelParams::from_bytes(b"VBPR2...."), Err(Error::MalformedFile(_))));
    }

    #[test]
    fn auc_counts_ties_half() {
        assert_eq!(pairwise_auc(1.0, &[0.0, 1.0, 2.0, 0.5]), Some(0.625));
        assert_eq!(pairwise_auc(1.0, &[]), None);
    }
}

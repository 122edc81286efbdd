//! Adaptive fusion: grounds generated candidates back onto retrieved catalog
//! items when their joint-embedding cosine similarity exceeds a threshold.

use std::collections::HashSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::candidates::GeneratedCandidate;
use crate::catalog::EmbeddingStore;
use crate::error::{dim_mismatch, Error, Result};
use crate::retrieval::ScoredItem;

/// Where a hybrid-list slot comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EntrySource {
    Retrieved { item_id: String, grounding_similarity: f32 },
    Generated { gen_id: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HybridEntry {
    pub slot: usize,
    #[serde(flatten)]
    pub source: EntrySource,
}

impl HybridEntry {
    pub fn is_retrieved(&self) -> bool {
        matches!(self.source, EntrySource::Retrieved { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    /// Cosine threshold; a candidate is replaced only when its best match is
    /// strictly above it.
    pub threshold_p: f32,
    /// Maximum number of generated candidates considered.
    pub k: usize,
    /// Drop later entries grounded to an item already in the list.
    #[serde(default)]
    pub dedup: bool,
}

impl FusionConfig {
    pub fn new(threshold_p: f32, k: usize) -> Self {
        Self {
            threshold_p,
            k,
            dedup: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(-1.0..=1.0).contains(&self.threshold_p) {
            return Err(Error::OutOfRange(format!("threshold {} not in [-1, 1]", self.threshold_p)));
        }
        Ok(())
    }
}

/// Cosine similarity clamped to `[-1, 1]`.
pub fn cosine(a: &[f32], b: &[f32]) -> Result<f32> {
    if a.len() != b.len() {
        return Err(dim_mismatch("cosine operands", a.len(), b.len()));
    }
    let (mut ab, mut aa, mut bb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (f64::from(x), f64::from(y));
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok(((ab / (aa.sqrt() * bb.sqrt())) as f32).clamp(-1.0, 1.0))
}

/// Best retrieved match for one embedding; ties go to the smaller item id.
fn best_match<'a>(emb: &[f32], retrieved: &[(&'a str, &'a [f32])]) -> Result<(&'a str, f32)> {
    let mut best: Option<(&str, f32)> = None;
    for &(id, other) in retrieved {
        let s = cosine(emb, other)?;
        best = match best {
            Some((bid, bs)) if bs > s || (bs == s && bid <= id) => Some((bid, bs)),
            _ => Some((id, s)),
        };
    }
    best.ok_or(Error::EmptyRetrievalList)
}

/// Replaces each generated candidate with its most similar retrieved item
/// when that similarity is strictly greater than `threshold_p`.
///
/// One entry per considered candidate, in input order (unless `dedup`).
pub fn ground(
    generated: &[GeneratedCandidate],
    retrieved: &[ScoredItem],
    store: &EmbeddingStore,
    config: &FusionConfig,
) -> Result<Vec<HybridEntry>> {
    config.validate()?;
    let generated = &generated[..generated.len().min(config.k)];
    if generated.is_empty() {
        return Ok(Vec::new());
    }
    if retrieved.is_empty() {
        return Err(Error::EmptyRetrievalList);
    }
    let targets = retrieved
        .iter()
        .map(|s| {
            store
                .item(&s.item_id)
                .map(|i| (i.id.as_str(), i.semantic_embedding.as_slice()))
                .ok_or_else(|| Error::UnknownEntity(s.item_id.clone()))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut entries = Vec::with_capacity(generated.len());
    let mut used: HashSet<&str> = HashSet::new();
    for cand in generated {
        if cand.semantic_embedding.len() != store.d_sem() {
            return Err(dim_mismatch(
                format!("embedding of candidate {}", cand.gen_id),
                store.d_sem(),
                cand.semantic_embedding.len(),
            ));
        }
        let (item_id, sim) = best_match(&cand.semantic_embedding, &targets)?;
        let source = if sim > config.threshold_p {
            if config.dedup && !used.insert(item_id) {
                continue;
            }
            EntrySource::Retrieved {
                item_id: item_id.to_string(),
                grounding_similarity: sim,
            }
        } else {
            EntrySource::Generated {
                gen_id: cand.gen_id.clone(),
            }
        };
        entries.push(HybridEntry {
            slot: entries.len(),
            source,
        });
    }
    Ok(entries)
}

pub fn retrieved_fraction(entries: &[HybridEntry]) -> Result<f32> {
    if entries.is_empty() {
        return Err(Error::EmptyList);
    }
    let n = entries.iter().filter(|e| e.is_retrieved()).count();
    Ok(n as f32 / entries.len() as f32)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub p: f32,
    pub retrieved_fraction: f32,
    pub score: Option<f32>,
}

/// Threshold sweep over an ascending grid.
pub fn sweep(
    generated: &[GeneratedCandidate],
    retrieved: &[ScoredItem],
    store: &EmbeddingStore,
    p_grid: &[f32],
) -> Result<Vec<SweepRow>> {
    if p_grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidConfig("threshold grid must be ascending".into()));
    }
    p_grid
        .iter()
        .map(|&p| {
            let entries = ground(generated, retrieved, store, &FusionConfig::new(p, generated.len()))?;
            Ok(SweepRow {
                p,
                retrieved_fraction: retrieved_fraction(&entries)?,
                score: None,
            })
        })
        .collect()
}

/// Averages per-query sweeps point by point (each query weighted equally).
pub fn mean_sweep(per_query: &[Vec<SweepRow>]) -> Result<Vec<SweepRow>> {
    let first = per_query.first().ok_or(Error::EmptyList)?;
    let n = per_query.len() as f32;
    first
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut total = 0.0;
            for rows in per_query {
                let r = rows
                    .get(i)
                    .filter(|r| r.p == row.p)
                    .ok_or_else(|| Error::InvalidConfig("sweeps over different grids".into()))?;
                total += r.retrieved_fraction;
            }
            Ok(SweepRow {
                p: row.p,
                retrieved_fraction: total / n,
                score: None,
            })
        })
        .collect()
}

/// Inclusive grid `lo, lo+step, ..., hi`, clamped to `[-1, 1]`.
pub fn threshold_grid(lo: f32, hi: f32, step: f32) -> Result<Vec<f32>> {
    if step.is_nan() || step <= 0.0 || !lo.is_finite() || !hi.is_finite() || hi < lo {
        return Err(Error::InvalidConfig(format!("bad grid {lo}:{hi}:{step}")));
    }
    let n = ((f64::from(hi) - f64::from(lo)) / f64::from(step) + 1e-6).floor() as usize + 1;
    Ok((0..n)
        .map(|i| (f64::from(lo) + i as f64 * f64::from(step)).clamp(-1.0, 1.0) as f32)
        .collect())
}

/// Parses `lo:hi:step`.
pub fn parse_grid(spec: &str) -> Result<Vec<f32>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [lo, hi, step] = parts.as_slice() else {
        return Err(Error::InvalidConfig(format!("grid must be lo:hi:step, got {spec}")));
    };
    let parse = |s: &str| {
        s.trim()
            .parse::<f32>()
            .map_err(|_| Error::InvalidConfig(format!("bad number {s:?} in grid")))
    };
    threshold_grid(parse(lo)?, parse(hi)?, parse(step)?)
}

/// CSV with header `p,retrieved_fraction,score`, six decimals, empty score
/// when no evaluator is attached.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("p,retrieved_fraction,score\n");
    for r in rows {
        let score = r.score.map(|s| format!("{s:.6}")).unwrap_or_default();
        let _ = writeln!(out, "{:.6},{:.6},{score}", r.p, r.retrieved_fraction);
    }
    out
}

//! Generated candidates: ingestion of externally produced embeddings (GEN1)
//! and a seeded pseudo-generator standing in for the diffusion pipeline.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::catalog::{EmbeddingStore, Role};
use crate::error::{dim_mismatch, Error, Result};
use crate::wire::{check_finite, Reader, Writer};

pub const GEN_MAGIC: &[u8; 4] = b"GEN1";

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedCandidate {
    pub gen_id: String,
    pub semantic_embedding: Vec<f32>,
    pub source_query: String,
    /// Generation round that produced this candidate.
    pub round: u32,
    /// Catalog item the candidate was derived from, when known. Only the
    /// pseudo-generator sets it; GEN1 does not carry it.
    pub anchor_item: Option<String>,
}

/// Candidates grouped by source query, each list in file / round order.
pub type CandidateMap = BTreeMap<String, Vec<GeneratedCandidate>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PseudoGenConfig {
    pub anchor_noise_sigma: f32,
    pub per_query_count: usize,
    pub seed: u64,
}

impl Default for PseudoGenConfig {
    fn default() -> Self {
        Self {
            anchor_noise_sigma: 0.1,
            per_query_count: 5,
            seed: 0,
        }
    }
}

pub fn candidates_to_bytes(d_sem: usize, candidates: &CandidateMap) -> Result<Vec<u8>> {
    let mut w = Writer::new();
    w.bytes(GEN_MAGIC);
    w.count(d_sem, "d_sem")?;
    w.count(candidates.values().map(Vec::len).sum(), "candidate")?;
    for c in candidates.values().flatten() {
        if c.semantic_embedding.len() != d_sem {
            return Err(dim_mismatch(
                format!("embedding of candidate {}", c.gen_id),
                d_sem,
                c.semantic_embedding.len(),
            ));
        }
        check_finite(&c.semantic_embedding, || format!("embedding of candidate {}", c.gen_id))?;
        w.str(&c.gen_id)?;
        w.str(&c.source_query)?;
        w.u32(c.round);
        w.f32s(&c.semantic_embedding);
    }
    Ok(w.into_inner())
}

/// Parses a GEN1 buffer. When `expected_d_sem` is given, a header that
/// disagrees with it is a `DimensionMismatch`.
pub fn candidates_from_bytes(bytes: &[u8], expected_d_sem: Option<usize>) -> Result<(usize, CandidateMap)> {
    let mut r = Reader::new(bytes);
    r.magic(GEN_MAGIC)?;
    let d_sem = r.u32()? as usize;
    if let Some(expected) = expected_d_sem {
        if expected != d_sem {
            return Err(dim_mismatch("GEN1 embedding width", expected, d_sem));
        }
    }
    let count = r.u32()? as usize;
    let mut out = CandidateMap::new();
    for _ in 0..count {
        let gen_id = r.str()?;
        let source_query = r.str()?;
        let round = r.u32()?;
        let semantic_embedding = r.f32s(d_sem)?;
        check_finite(&semantic_embedding, || format!("embedding of candidate {gen_id}"))?;
        out.entry(source_query.clone()).or_default().push(GeneratedCandidate {
            gen_id,
            semantic_embedding,
            source_query,
            round,
            anchor_item: None,
        });
    }
    r.finish()?;
    Ok((d_sem, out))
}

pub fn load_candidates(path: impl AsRef<Path>, expected_d_sem: Option<usize>) -> Result<CandidateMap> {
    Ok(candidates_from_bytes(&fs::read(path)?, expected_d_sem)?.1)
}

pub fn save_candidates(path: impl AsRef<Path>, d_sem: usize, candidates: &CandidateMap) -> Result<()> {
    fs::write(path, candidates_to_bytes(d_sem, candidates)?)?;
    Ok(())
}

pub(crate) fn l2_normalize(v: &mut [f32]) -> Result<()> {
    let norm = v.iter().map(|x| f64::from(*x) * f64::from(*x)).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::ZeroVector);
    }
    for x in v.iter_mut() {
        *x = (f64::from(*x) / norm) as f32;
    }
    Ok(())
}

/// For every query, draws `per_query_count` candidates around randomly
/// chosen Top anchors: `normalize(anchor + sigma * N(0, I))`.
pub fn pseudo_generate(store: &EmbeddingStore, config: &PseudoGenConfig) -> Result<CandidateMap> {
    if !(config.anchor_noise_sigma >= 0.0 && config.anchor_noise_sigma.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "anchor_noise_sigma must be >= 0, got {}",
            config.anchor_noise_sigma
        )));
    }
    let anchors: Vec<_> = store.items_with_role(Role::Top).collect();
    if anchors.is_empty() {
        return Err(Error::EmptyList);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut out = CandidateMap::new();
    for query in store.queries() {
        let list = (0..config.per_query_count)
            .map(|n| {
                let anchor = anchors[rng.random_range(0..anchors.len())];
                let mut emb: Vec<f32> = anchor
                    .semantic_embedding
                    .iter()
                    .map(|&a| {
                        let z: f32 = rng.sample(StandardNormal);
                        a + config.anchor_noise_sigma * z
                    })
                    .collect();
                l2_normalize(&mut emb)?;
                Ok(GeneratedCandidate {
                    gen_id: format!("{}#g{n}", query.id),
                    semantic_embedding: emb,
                    source_query: query.id.clone(),
                    round: n as u32,
                    anchor_item: Some(anchor.id.clone()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.insert(query.id.clone(), list);
    }
    Ok(out)
}

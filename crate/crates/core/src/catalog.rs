//! Item and query data model, the EMB1 embedding-store format, n-core
//! interaction filtering and bottom-alignment provenance.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{dim_mismatch, Error, Result};
use crate::wire::{check_finite, Reader, Writer};

pub const STORE_MAGIC: &[u8; 4] = b"EMB1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Top,
    Bottom,
}

impl Role {
    fn to_byte(self) -> u8 {
        match self {
            Role::Top => 0,
            Role::Bottom => 1,
        }
    }

    fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(Role::Top),
            1 => Ok(Role::Bottom),
            other => Err(Error::MalformedFile(format!("unknown role byte {other}"))),
        }
    }
}

/// Placement of a bottom garment on the fixed canvas used before feature
/// extraction. The pixel work happens in the offline extractor; the engine
/// only records what was applied.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentDescriptor {
    pub canvas_height: u32,
    pub canvas_width: u32,
    /// Scale applied to the product image before placement.
    pub scale: f32,
    /// Vertical position of the garment's top edge as a fraction of canvas height.
    pub top_offset: f32,
}

impl Default for AlignmentDescriptor {
    fn default() -> Self {
        Self {
            canvas_height: 256,
            canvas_width: 192,
            scale: 0.5,
            top_offset: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ItemRecord {
    pub id: String,
    pub role: Role,
    pub feature: Vec<f32>,
    pub semantic_embedding: Vec<f32>,
    pub aligned: bool,
    /// Not serialized in EMB1; items loaded from disk carry `None`.
    pub alignment: Option<AlignmentDescriptor>,
}

impl ItemRecord {
    pub fn new(id: impl Into<String>, role: Role, feature: Vec<f32>, semantic_embedding: Vec<f32>) -> Self {
        Self {
            id: id.into(),
            role,
            feature,
            semantic_embedding,
            aligned: false,
            alignment: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryRecord {
    pub id: String,
    /// Feature of the partially-masked query image.
    pub feature: Vec<f32>,
    pub shown_bottom: Option<String>,
    pub ground_truth_top: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct InteractionPair {
    pub query_id: String,
    pub item_id: String,
}

impl InteractionPair {
    pub fn new(query_id: impl Into<String>, item_id: impl Into<String>) -> Self {
        Self {
            query_id: query_id.into(),
            item_id: item_id.into(),
        }
    }
}

/// A validated catalog. Immutable once built: mutation means building a new
/// store through [`EmbeddingStore::from_parts`].
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingStore {
    d_raw: usize,
    d_sem: usize,
    items: BTreeMap<String, ItemRecord>,
    queries: BTreeMap<String, QueryRecord>,
    pairs: Vec<InteractionPair>,
}

impl EmbeddingStore {
    pub fn empty(d_raw: usize, d_sem: usize) -> Result<Self> {
        Self::from_parts(d_raw, d_sem, Vec::new(), Vec::new(), Vec::new())
    }

    /// Builds a store and checks every invariant: uniform dimensions, finite
    /// values, unique ids, and resolvable references.
    pub fn from_parts(
        d_raw: usize,
        d_sem: usize,
        items: Vec<ItemRecord>,
        queries: Vec<QueryRecord>,
        pairs: Vec<InteractionPair>,
    ) -> Result<Self> {
        if d_raw == 0 || d_sem == 0 {
            return Err(Error::InvalidConfig("store dimensions must be positive".into()));
        }
        let mut item_map = BTreeMap::new();
        for item in items {
            if item.feature.len() != d_raw {
                return Err(dim_mismatch(format!("feature of item {}", item.id), d_raw, item.feature.len()));
            }
            if item.semantic_embedding.len() != d_sem {
                return Err(dim_mismatch(
                    format!("semantic embedding of item {}", item.id),
                    d_sem,
                    item.semantic_embedding.len(),
                ));
            }
            check_finite(&item.feature, || format!("feature of item {}", item.id))?;
            check_finite(&item.semantic_embedding, || format!("semantic embedding of item {}", item.id))?;
            if item.id.is_empty() {
                return Err(Error::InvalidConfig("empty item id".into()));
            }
            if let Some(prev) = item_map.insert(item.id.clone(), item) {
                return Err(Error::DuplicateId(prev.id));
            }
        }

        let mut query_map = BTreeMap::new();
        for query in queries {
            if query.feature.len() != d_raw {
                return Err(dim_mismatch(format!("feature of query {}", query.id), d_raw, query.feature.len()));
            }
            check_finite(&query.feature, || format!("feature of query {}", query.id))?;
            if query.id.is_empty() {
                return Err(Error::InvalidConfig("empty query id".into()));
            }
            for (reference, role) in [(&query.shown_bottom, Role::Bottom), (&query.ground_truth_top, Role::Top)] {
                if let Some(rid) = reference {
                    let target: &ItemRecord = item_map.get(rid).ok_or_else(|| {
                        Error::DanglingReference(format!("query {} references missing item {rid}", query.id))
                    })?;
                    if target.role != role {
                        return Err(Error::WrongRole(rid.clone()));
                    }
                }
            }
            if let Some(prev) = query_map.insert(query.id.clone(), query) {
                return Err(Error::DuplicateId(prev.id));
            }
        }

        let mut seen = HashSet::with_capacity(pairs.len());
        for pair in &pairs {
            if !query_map.contains_key(&pair.query_id) {
                return Err(Error::DanglingReference(format!("pair references missing query {}", pair.query_id)));
            }
            if !item_map.contains_key(&pair.item_id) {
                return Err(Error::DanglingReference(format!("pair references missing item {}", pair.item_id)));
            }
            if !seen.insert((pair.query_id.as_str(), pair.item_id.as_str())) {
                return Err(Error::DuplicateId(format!("pair ({}, {})", pair.query_id, pair.item_id)));
            }
        }

        Ok(Self {
            d_raw,
            d_sem,
            items: item_map,
            queries: query_map,
            pairs,
        })
    }

    pub fn d_raw(&self) -> usize {
        self.d_raw
    }

    pub fn d_sem(&self) -> usize {
        self.d_sem
    }

    pub fn item(&self, id: &str) -> Option<&ItemRecord> {
        self.items.get(id)
    }

    pub fn query(&self, id: &str) -> Option<&QueryRecord> {
        self.queries.get(id)
    }

    /// Items in ascending id order.
    pub fn items(&self) -> impl Iterator<Item = &ItemRecord> {
        self.items.values()
    }

    pub fn items_with_role(&self, role: Role) -> impl Iterator<Item = &ItemRecord> {
        self.items.values().filter(move |i| i.role == role)
    }

    /// Queries in ascending id order.
    pub fn queries(&self) -> impl Iterator<Item = &QueryRecord> {
        self.queries.values()
    }

    pub fn pairs(&self) -> &[InteractionPair] {
        &self.pairs
    }

    pub fn item_count(&self) -> usize {
        self.items.len()
    }

    pub fn query_count(&self) -> usize {
        self.queries.len()
    }

    /// Decomposes the store, e.g. to rebuild a modified copy.
    pub fn into_parts(self) -> (usize, usize, Vec<ItemRecord>, Vec<QueryRecord>, Vec<InteractionPair>) {
        (
            self.d_raw,
            self.d_sem,
            self.items.into_values().collect(),
            self.queries.into_values().collect(),
            self.pairs,
        )
    }

    /// Encodes the store in canonical EMB1 layout.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer::new();
        w.bytes(STORE_MAGIC);
        w.count(self.d_raw, "d_raw")?;
        w.count(self.d_sem, "d_sem")?;
        w.count(self.items.len(), "item")?;
        w.count(self.queries.len(), "query")?;
        for item in self.items.values() {
            w.str(&item.id)?;
            w.u8(item.role.to_byte());
            w.u8(u8::from(item.aligned));
            w.f32s(&item.feature);
            w.f32s(&item.semantic_embedding);
        }
        for q in self.queries.values() {
            w.str(&q.id)?;
            w.opt_str(q.shown_bottom.as_deref())?;
            w.opt_str(q.ground_truth_top.as_deref())?;
            w.f32s(&q.feature);
        }
        w.count(self.pairs.len(), "pair")?;
        for p in &self.pairs {
            w.str(&p.query_id)?;
            w.str(&p.item_id)?;
        }
        Ok(w.into_inner())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(STORE_MAGIC)?;
        let d_raw = r.u32()? as usize;
        let d_sem = r.u32()? as usize;
        let item_count = r.u32()? as usize;
        let query_count = r.u32()? as usize;

        let mut items = Vec::with_capacity(item_count.min(1 << 16));
        for _ in 0..item_count {
            let id = r.str()?;
            let role = Role::from_byte(r.u8()?)?;
            let aligned = match r.u8()? {
                0 => false,
                1 => true,
                other => return Err(Error::MalformedFile(format!("aligned flag {other} for item {id}"))),
            };
            let feature = r.f32s(d_raw)?;
            let semantic_embedding = r.f32s(d_sem)?;
            items.push(ItemRecord {
                id,
                role,
                feature,
                semantic_embedding,
                aligned,
                alignment: None,
            });
        }

        let mut queries = Vec::with_capacity(query_count.min(1 << 16));
        for _ in 0..query_count {
            let id = r.str()?;
            let shown_bottom = r.opt_str()?;
            let ground_truth_top = r.opt_str()?;
            let feature = r.f32s(d_raw)?;
            queries.push(QueryRecord {
                id,
                feature,
                shown_bottom,
                ground_truth_top,
            });
        }

        let pair_count = r.u32()? as usize;
        let mut pairs = Vec::with_capacity(pair_count.min(1 << 16));
        for _ in 0..pair_count {
            let query_id = r.str()?;
            let item_id = r.str()?;
            pairs.push(InteractionPair { query_id, item_id });
        }
        r.finish()?;

        Self::from_parts(d_raw, d_sem, items, queries, pairs)
    }
}

pub fn load_store(path: impl AsRef<Path>) -> Result<EmbeddingStore> {
    let bytes = fs::read(path)?;
    EmbeddingStore::from_bytes(&bytes)
}

pub fn save_store(store: &EmbeddingStore, path: impl AsRef<Path>) -> Result<()> {
    let bytes = store.to_bytes()?;
    fs::write(path, bytes)?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NcoreOutcome {
    /// Surviving endpoint ids of both sides of the interaction relation.
    pub kept_items: BTreeSet<String>,
    pub kept_pairs: Vec<InteractionPair>,
}

/// Keeps entities whose interaction count lies in `[min_count, max_count]`.
///
/// Counts are taken once on the input pairs (no re-count after removal) and
/// the same bounds apply to both endpoint sides.
pub fn ncore_filter(pairs: &[InteractionPair], min_count: usize, max_count: usize) -> Result<NcoreOutcome> {
    if min_count < 1 || max_count < min_count {
        return Err(Error::InvalidBounds {
            min: min_count,
            max: max_count,
        });
    }
    let mut left: HashMap<&str, usize> = HashMap::new();
    let mut right: HashMap<&str, usize> = HashMap::new();
    for p in pairs {
        *left.entry(&p.query_id).or_default() += 1;
        *right.entry(&p.item_id).or_default() += 1;
    }
    let in_bounds = |c: &usize| (min_count..=max_count).contains(c);
    let keep_left: HashSet<&str> = left.iter().filter(|(_, c)| in_bounds(c)).map(|(id, _)| *id).collect();
    let keep_right: HashSet<&str> = right.iter().filter(|(_, c)| in_bounds(c)).map(|(id, _)| *id).collect();

    let kept_pairs: Vec<InteractionPair> = pairs
        .iter()
        .filter(|p| keep_left.contains(p.query_id.as_str()) && keep_right.contains(p.item_id.as_str()))
        .cloned()
        .collect();
    let kept_items = keep_left.iter().chain(keep_right.iter()).map(|s| s.to_string()).collect();
    Ok(NcoreOutcome { kept_items, kept_pairs })
}

/// Applies [`ncore_filter`] to a store and drops entities that did not
/// survive. Bottoms shown by a surviving query are retained; ground-truth
/// links to dropped tops are cleared.
pub fn restrict_to_ncore(store: &EmbeddingStore, min_count: usize, max_count: usize) -> Result<EmbeddingStore> {
    let outcome = ncore_filter(store.pairs(), min_count, max_count)?;
    let kept_queries: HashSet<&str> = outcome.kept_pairs.iter().map(|p| p.query_id.as_str()).collect();
    let kept_targets: HashSet<&str> = outcome.kept_pairs.iter().map(|p| p.item_id.as_str()).collect();

    let queries: Vec<QueryRecord> = store
        .queries()
        .filter(|q| kept_queries.contains(q.id.as_str()))
        .cloned()
        .collect();
    let shown: HashSet<&str> = queries.iter().filter_map(|q| q.shown_bottom.as_deref()).collect();
    let items: Vec<ItemRecord> = store
        .items()
        .filter(|i| kept_targets.contains(i.id.as_str()) || shown.contains(i.id.as_str()))
        .cloned()
        .collect();
    let item_ids: HashSet<&str> = items.iter().map(|i| i.id.as_str()).collect();
    let queries = queries
        .into_iter()
        .map(|mut q| {
            if q.ground_truth_top.as_deref().is_some_and(|t| !item_ids.contains(t)) {
                q.ground_truth_top = None;
            }
            q
        })
        .collect();
    EmbeddingStore::from_parts(store.d_raw(), store.d_sem(), items, queries, outcome.kept_pairs)
}

/// Records that a bottom item went through alignment preprocessing.
pub fn mark_aligned(item: &ItemRecord, descriptor: &AlignmentDescriptor) -> Result<ItemRecord> {
    if item.role != Role::Bottom {
        return Err(Error::WrongRole(item.id.clone()));
    }
    Ok(ItemRecord {
        aligned: true,
        alignment: Some(descriptor.clone()),
        ..item.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(id: &str, role: Role, d_raw: usize, d_sem: usize) -> ItemRecord {
        ItemRecord::new(id, role, vec![0.5; d_raw], vec![0.25; d_sem])
    }

    #[test]
    fn empty_store_is_header_only() {
        let store = EmbeddingStore::empty(4, 4).unwrap();
        let bytes = store.to_bytes().unwrap();
        // magic + 4 u32 header fields + u32 pair count
        assert_eq!(&bytes[..4], b"EMB1");
        assert_eq!(bytes.len(), 4 + 16 + 4);
        let back = EmbeddingStore::from_bytes(&bytes).unwrap();
        assert_eq!(back.item_count(), 0);
        assert_eq!(back.query_count(), 0);
        assert_eq!(back.d_raw(), 4);
    }

    #[test]
    fn wrong_feature_length_is_rejected() {
        let err = EmbeddingStore::from_parts(4, 4, vec![item("a", Role::Top, 3, 4)], vec![], vec![]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 4, found: 3, .. }));
    }

    #[test]
    fn wrong_feature_length_in_file_is_rejected() {
        // Hand-build a file whose item vector is one float short: the parser
        // then reads into the next record and the file ends early.
        let mut w = Writer::new();
        w.bytes(STORE_MAGIC);
        for v in [4u32, 4, 1, 0] {
            w.u32(v);
        }
        w.str("a").unwrap();
        w.u8(0);
        w.u8(0);
        w.f32s(&[0.0; 7]);
        w.u32(0);
        let err = EmbeddingStore::from_bytes(&w.into_inner()).unwrap_err();
        assert!(matches!(err, Error::MalformedFile(_)), "{err}");
    }

    #[test]
    fn bad_magic_and_truncation() {
        assert!(matches!(EmbeddingStore::from_bytes(b"EMB2aaaaaaaaaaaaaaaa"), Err(Error::MalformedFile(_))));
        let bytes = EmbeddingStore::empty(2, 2).unwrap().to_bytes().unwrap();
        assert!(matches!(
            EmbeddingStore::from_bytes(&bytes[..bytes.len() - 1]),
            Err(Error::MalformedFile(_))
        ));
    }

    #[test]
    fn non_finite_feature_rejected() {
        let mut bad = item("a", Role::Top, 2, 2);
        bad.feature[1] = f32::NAN;
        let err = EmbeddingStore::from_parts(2, 2, vec![bad], vec![], vec![]).unwrap_err();
        assert!(matches!(err, Error::NonFiniteValue(_)));
    }

    #[test]
    fn dangling_references_rejected() {
        let q = QueryRecord {
            id: "q".into(),
            feature: vec![0.0; 2],
            shown_bottom: Some("missing".into()),
            ground_truth_top: None,
        };
        let err = EmbeddingStore::from_parts(2, 2, vec![], vec![q], vec![]).unwrap_err();
        assert!(matches!(err, Error::DanglingReference(_)));

        let err = EmbeddingStore::from_parts(
            2,
            2,
            vec![item("t", Role::Top, 2, 2)],
            vec![],
            vec![InteractionPair::new("nobody", "t")],
        )
        .unwrap_err();
        assert!(matches!(err, Error::DanglingReference(_)));
    }

    #[test]
    fn shown_bottom_must_be_a_bottom() {
        let q = QueryRecord {
            id: "q".into(),
            feature: vec![0.0; 2],
            shown_bottom: Some("t".into()),
            ground_truth_top: None,
        };
        let err = EmbeddingStore::from_parts(2, 2, vec![item("t", Role::Top, 2, 2)], vec![q], vec![]).unwrap_err();
        assert!(matches!(err, Error::WrongRole(_)));
    }

    #[test]
    fn ncore_empty_and_bounds() {
        let out = ncore_filter(&[], 5, 100).unwrap();
        assert!(out.kept_items.is_empty());
        assert!(out.kept_pairs.is_empty());
        assert!(matches!(ncore_filter(&[], 0, 3), Err(Error::InvalidBounds { .. })));
        assert!(matches!(ncore_filter(&[], 4, 3), Err(Error::InvalidBounds { .. })));
    }

    #[test]
    fn ncore_bounds_are_inclusive() {
        // b1 appears 3 times, b2 once; t1 and t2 twice each.
        let pairs = vec![
            InteractionPair::new("b1", "t1"),
            InteractionPair::new("b1", "t2"),
            InteractionPair::new("b1", "t3"),
            InteractionPair::new("b2", "t1"),
            InteractionPair::new("b3", "t2"),
        ];
        let out = ncore_filter(&pairs, 1, 2).unwrap();
        assert!(!out.kept_items.contains("b1"));
        assert!(out.kept_items.contains("t1"));
        assert_eq!(
            out.kept_pairs,
            vec![InteractionPair::new("b2", "t1"), InteractionPair::new("b3", "t2")]
        );
    }

    #[test]
    fn mark_aligned_roles_and_idempotence() {
        let b = item("b", Role::Bottom, 2, 2);
        let d = AlignmentDescriptor::default();
        let once = mark_aligned(&b, &d).unwrap();
        assert!(once.aligned);
        assert_eq!(once.feature, b.feature);
        assert_eq!(mark_aligned(&once, &d).unwrap(), once);
        assert!(matches!(mark_aligned(&item("t", Role::Top, 2, 2), &d), Err(Error::WrongRole(_))));
    }

    #[test]
    fn restrict_keeps_shown_bottoms() {
        let items = vec![
            item("b1", Role::Bottom, 1, 1),
            item("t1", Role::Top, 1, 1),
            item("t2", Role::Top, 1, 1),
        ];
        let queries = vec![QueryRecord {
            id: "q1".into(),
            feature: vec![0.0],
            shown_bottom: Some("b1".into()),
            ground_truth_top: Some("t2".into()),
        }];
        let pairs = vec![InteractionPair::new("q1", "t1")];
        let store = EmbeddingStore::from_parts(1, 1, items, queries, pairs).unwrap();
        let out = restrict_to_ncore(&store, 1, 1).unwrap();
        assert!(out.item("b1").is_some());
        assert!(out.item("t2").is_none());
        assert_eq!(out.query("q1").unwrap().ground_truth_top, None);
    }
}

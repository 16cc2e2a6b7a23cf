//! TF-IDF entity representations and nearest-neighbor fact retrieval.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};

use compact_str::CompactString;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::ClassifiedGroup;
use crate::ingest::{IngestError, PopularityTable};
use crate::model::{EntityId, GroupKey, Label, Triple};
use crate::preprocess::PreprocessedSnapshot;

pub const DEFAULT_K: usize = 10;
pub const DEFAULT_N: usize = 500;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum NeighborError {
    #[error("entity {0} is in neither snapshot")]
    UnknownEntity(EntityId),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FeatureToken {
    Entity(CompactString),
    Pair(CompactString, CompactString),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureDoc {
    pub entity: EntityId,
    pub tokens: Vec<FeatureToken>,
}

fn tokens_from(entity: &EntityId, snapshot: &PreprocessedSnapshot) -> Vec<FeatureToken> {
    let mut objects = Vec::new();
    let mut pairs = Vec::new();
    for (key, triples) in snapshot.groups_of(entity) {
        for t in triples {
            if let Some(o) = t.object.as_entity() {
                objects.push(FeatureToken::Entity(o.id.clone()));
                pairs.push(FeatureToken::Pair(key.relation.id.clone(), o.id.clone()));
            }
        }
    }
    let mut tokens = Vec::with_capacity(1 + objects.len() * 2);
    tokens.push(FeatureToken::Entity(entity.id.clone()));
    tokens.append(&mut objects);
    tokens.append(&mut pairs);
    tokens
}

/// `[s] ++ [o ...] ++ [(r, o) ...]` over the entity-valued triples of `s` in
/// the old snapshot, or in the new one when the old has none.
pub fn build_feature_doc(
    entity: &EntityId,
    old: &PreprocessedSnapshot,
    new: &PreprocessedSnapshot,
) -> Result<FeatureDoc, NeighborError> {
    let known = |s: &PreprocessedSnapshot| s.has_subject(entity) || s.relevant_entities.contains(entity);
    if !known(old) && !known(new) {
        return Err(NeighborError::UnknownEntity(entity.clone()));
    }
    let mut tokens = tokens_from(entity, old);
    if tokens.len() == 1 {
        tokens = tokens_from(entity, new);
    }
    Ok(FeatureDoc { entity: entity.clone(), tokens })
}

/// Sparse vector as `(column, weight)` pairs sorted by column.
pub type SparseVector = Vec<(u32, f64)>;

#[derive(Debug, Clone, Default)]
pub struct TfidfIndex {
    /// Tokens in column order (sorted).
    pub vocabulary: Vec<FeatureToken>,
    pub idf: Vec<f64>,
    /// Entities in row order (sorted by id).
    pub entities: Vec<EntityId>,
    pub vectors: Vec<SparseVector>,
    rows: HashMap<EntityId, u32>,
    postings: Vec<Vec<(u32, f64)>>,
}

/// Dot product accumulated in ascending column order.
pub fn sparse_dot(a: &SparseVector, b: &SparseVector) -> f64 {
    let (mut i, mut j, mut acc) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                acc += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    acc
}

impl TfidfIndex {
    /// Raw term frequency, `idf = ln(N / df)`, rows L2-normalised. Zero
    /// weights are not stored.
    pub fn build(mut docs: Vec<FeatureDoc>) -> Self {
        docs.sort_by(|a, b| a.entity.cmp(&b.entity));
        docs.dedup_by(|a, b| a.entity == b.entity);
        let n_docs = docs.len() as f64;

        let counted: Vec<BTreeMap<&FeatureToken, u32>> = docs
            .par_iter()
            .map(|d| {
                let mut tf = BTreeMap::new();
                for t in &d.tokens {
                    *tf.entry(t).or_insert(0) += 1;
                }
                tf
            })
            .collect();

        let mut df: BTreeMap<&FeatureToken, u32> = BTreeMap::new();
        for tf in &counted {
            for t in tf.keys() {
                *df.entry(t).or_insert(0) += 1;
            }
        }
        let vocabulary: Vec<FeatureToken> = df.keys().map(|t| (*t).clone()).collect();
        let column: HashMap<&FeatureToken, u32> = df.keys().enumerate().map(|(i, t)| (*t, i as u32)).collect();
        let idf: Vec<f64> = df.values().map(|&d| (n_docs / d as f64).ln()).collect();

        let vectors: Vec<SparseVector> = counted
            .par_iter()
            .map(|tf| {
                // BTreeMap iteration is in token order, which is column order.
                let raw: SparseVector = tf
                    .iter()
                    .map(|(t, &c)| {
                        let col = column[t];
                        (col, c as f64 * idf[col as usize])
                    })
                    .filter(|(_, w)| *w != 0.0)
                    .collect();
                let norm = raw.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
                if norm == 0.0 {
                    Vec::new()
                } else {
                    raw.into_iter().map(|(c, w)| (c, w / norm)).collect()
                }
            })
            .collect();

        let mut postings = vec![Vec::new(); vocabulary.len()];
        for (row, v) in vectors.iter().enumerate() {
            for &(col, w) in v {
                postings[col as usize].push((row as u32, w));
            }
        }
        let entities: Vec<EntityId> = docs.into_iter().map(|d| d.entity).collect();
        let rows = entities.iter().enumerate().map(|(i, e)| (e.clone(), i as u32)).collect();
        TfidfIndex { vocabulary, idf, entities, vectors, rows, postings }
    }

    /// Index over every subject of either snapshot.
    pub fn from_snapshots(old: &PreprocessedSnapshot, new: &PreprocessedSnapshot) -> Self {
        let subjects: BTreeSet<&EntityId> = old.subjects().chain(new.subjects()).collect();
        let subjects: Vec<&EntityId> = subjects.into_iter().collect();
        let docs = subjects
            .par_iter()
            .filter_map(|e| build_feature_doc(e, old, new).ok())
            .collect();
        Self::build(docs)
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn vector(&self, entity: &EntityId) -> Option<&SparseVector> {
        self.rows.get(entity).map(|&r| &self.vectors[r as usize])
    }

    pub fn cosine(&self, a: &EntityId, b: &EntityId) -> Option<f64> {
        Some(sparse_dot(self.vector(a)?, self.vector(b)?))
    }

    /// Entities with positive cosine to `entity`, most similar first (ties by
    /// id), excluding `entity` itself, at most `n` of them.
    pub fn most_similar(&self, entity: &EntityId, n: usize) -> Vec<(EntityId, f64)> {
        let Some(&row) = self.rows.get(entity) else {
            return Vec::new();
        };
        let mut acc: HashMap<u32, f64> = HashMap::new();
        for &(col, qw) in &self.vectors[row as usize] {
            for &(other, w) in &self.postings[col as usize] {
                *acc.entry(other).or_insert(0.0) += qw * w;
            }
        }
        let mut hits: Vec<(u32, f64)> = acc.into_iter().filter(|&(r, s)| r != row && s > 0.0).collect();
        // Rows are in id order, so comparing rows breaks ties by id.
        hits.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        hits.truncate(n);
        hits.into_iter().map(|(r, s)| (self.entities[r as usize].clone(), s)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborFact {
    pub triple: Triple,
    pub similarity: f64,
    pub subject_popularity: u64,
}

/// Rounds to 1e-9 so serialised similarities do not depend on the last bits
/// of floating-point summation.
fn stable(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

/// Up to `k` facts `(s', r, o')` from the old snapshot, one per neighbor `s'`,
/// taken from the `n` entities most similar to the query's subject.
pub fn k_nearest_triples(
    query: &Triple,
    index: &TfidfIndex,
    old: &PreprocessedSnapshot,
    popularity: &PopularityTable,
    k: usize,
    n: usize,
) -> Vec<NeighborFact> {
    let mut out = Vec::new();
    for (entity, similarity) in index.most_similar(&query.subject, n) {
        if out.len() >= k {
            break;
        }
        let key = GroupKey { subject: entity, relation: query.relation.clone() };
        if let Some(t) = old.group(&key).and_then(|g| g.first()) {
            out.push(NeighborFact {
                subject_popularity: popularity.get(&t.subject),
                triple: t.clone(),
                similarity: stable(similarity),
            });
        }
    }
    out
}

/// The triple whose neighbors stand for the whole group: its first new
/// triple, or its first triple when none is new.
pub fn query_triple(group: &ClassifiedGroup) -> Option<&Triple> {
    group
        .triples
        .iter()
        .find(|t| t.label == Label::New)
        .or_else(|| group.triples.first())
        .map(|t| &t.triple)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupNeighbors {
    pub key: GroupKey,
    pub query: Triple,
    pub neighbors: Vec<NeighborFact>,
}

pub fn neighbors_for_groups(
    groups: &[ClassifiedGroup],
    index: &TfidfIndex,
    old: &PreprocessedSnapshot,
    popularity: &PopularityTable,
    k: usize,
    n: usize,
) -> Vec<GroupNeighbors> {
    groups
        .par_iter()
        .filter_map(|g| {
            let query = query_triple(g)?;
            Some(GroupNeighbors {
                key: g.key.clone(),
                neighbors: k_nearest_triples(query, index, old, popularity, k, n),
                query: query.clone(),
            })
        })
        .collect()
}

pub fn write_neighbors_jsonl<W: Write>(items: &[GroupNeighbors], w: W) -> std::io::Result<()> {
    crate::jsonl::write(items, w)
}

pub fn read_neighbors_jsonl<R: BufRead>(r: R) -> Result<Vec<GroupNeighbors>, IngestError> {
    crate::jsonl::read(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ObjectValue, Rank, TimeInterval};
    use std::collections::HashSet;

    fn t(s: &str, r: &str, o: ObjectValue) -> Triple {
        Triple { subject: s.into(), relation: r.into(), object: o, interval: TimeInterval::UNBOUNDED, rank: Rank::Normal }
    }

    fn snap(triples: Vec<Triple>) -> PreprocessedSnapshot {
        let mut s = PreprocessedSnapshot { groups: BTreeMap::new(), relevant_entities: HashSet::new() };
        for t in triples {
            s.relevant_entities.insert(t.subject.clone());
            s.groups.entry(t.group_key()).or_default().push(t);
        }
        s
    }

    fn e(id: &str) -> FeatureToken {
        FeatureToken::Entity(id.into())
    }

    fn p(r: &str, o: &str) -> FeatureToken {
        FeatureToken::Pair(r.into(), o.into())
    }

    #[test]
    fn feature_doc_formula() {
        let old = snap(vec![
            t("Q1", "P1", ObjectValue::entity("Q5")),
            t("Q1", "P2", ObjectValue::entity("Q9")),
            t("Q1", "P3", ObjectValue::Text { text: "x".into() }),
        ]);
        let doc = build_feature_doc(&"Q1".into(), &old, &PreprocessedSnapshot::default()).unwrap();
        assert_eq!(doc.tokens, vec![e("Q1"), e("Q5"), e("Q9"), p("P1", "Q5"), p("P2", "Q9")]);
    }

    #[test]
    fn feature_doc_fallback_and_errors() {
        let old = snap(vec![t("Q1", "P3", ObjectValue::Text { text: "x".into() })]);
        let new = snap(vec![t("Q7", "P1", ObjectValue::entity("Q5"))]);
        assert_eq!(build_feature_doc(&"Q1".into(), &old, &new).unwrap().tokens, vec![e("Q1")]);
        assert_eq!(build_feature_doc(&"Q7".into(), &old, &new).unwrap().tokens, vec![e("Q7"), e("Q5"), p("P1", "Q5")]);
        assert_eq!(
            build_feature_doc(&"Q404".into(), &old, &new),
            Err(NeighborError::UnknownEntity("Q404".into()))
        );
    }

    #[test]
    fn ubiquitous_token_has_zero_idf() {
        let docs = vec![
            FeatureDoc { entity: "Q1".into(), tokens: vec![e("X"), e("A")] },
            FeatureDoc { entity: "Q2".into(), tokens: vec![e("X"), e("B")] },
        ];
        let idx = TfidfIndex::build(docs);
        let col = idx.vocabulary.iter().position(|t| *t == e("X")).unwrap();
        assert_eq!(idx.idf[col], 0.0);
        assert_eq!(idx.cosine(&"Q1".into(), &"Q2".into()), Some(0.0));
        assert!(idx.most_similar(&"Q1".into(), 10).is_empty());
    }

    #[test]
    fn identical_docs_have_unit_cosine() {
        let docs = vec![
            FeatureDoc { entity: "Q1".into(), tokens: vec![e("A"), e("B")] },
            FeatureDoc { entity: "Q2".into(), tokens: vec![e("A"), e("B")] },
            FeatureDoc { entity: "Q3".into(), tokens: vec![e("C")] },
        ];
        let idx = TfidfIndex::build(docs);
        assert!((idx.cosine(&"Q1".into(), &"Q2".into()).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn neighbors_share_relation_and_exclude_self() {
        let old = snap(vec![
            t("Q1", "P1082", ObjectValue::Text { text: "1".into() }),
            t("Q1", "P17", ObjectValue::entity("Q100")),
            t("Q2", "P1082", ObjectValue::Text { text: "2".into() }),
            t("Q2", "P17", ObjectValue::entity("Q100")),
            t("Q3", "P17", ObjectValue::entity("Q100")),
            t("Q4", "P17", ObjectValue::entity("Q200")),
        ]);
        let idx = TfidfIndex::from_snapshots(&old, &PreprocessedSnapshot::default());
        let query = t("Q1", "P1082", ObjectValue::Text { text: "3".into() });
        let found = k_nearest_triples(&query, &idx, &old, &PopularityTable::new(), 10, 500);
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].triple.subject, EntityId::new("Q2"));
        let none = k_nearest_triples(&t("Q1", "P999", ObjectValue::entity("Q1")), &idx, &old, &PopularityTable::new(), 10, 500);
        assert!(none.is_empty());
    }
}

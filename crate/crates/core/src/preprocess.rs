//! Filter cascade turning a raw snapshot into reliable, interval-annotated triples.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};

use compact_str::CompactString;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ingest::{DocKind, EntityDoc, IngestError, PageKind, RelationMetaTable, SchemaError};
use crate::model::{
    interval_from_qualifiers, Bound, EntityId, GroupKey, ObjectValue, Qualifiers, Rank, RelationId, Statement,
    TimeInterval, Triple,
};
use crate::wikidata;

/// Documents are filtered in parallel batches of this size.
const BATCH: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    RestrictiveQualifier,
    Deprecated,
    MetaRelation,
    UrlOrExternalId,
    GlobeCoordinate,
    SomeOrNoValue,
    MalformedTemporalQualifier,
    IrrelevantObject,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedStatement {
    pub subject: EntityId,
    pub relation: RelationId,
    pub reason: RejectReason,
}

/// True for items that have a dedicated article (or article section).
pub fn is_relevant_entity(doc: &EntityDoc) -> bool {
    doc.kind == DocKind::Item
        && doc.sitelink.exists
        && matches!(doc.sitelink.page_kind, None | Some(PageKind::Article | PageKind::ArticleSection))
}

/// Applies the per-statement filters, in order, and builds the triple.
pub fn filter_statement(
    subject: &EntityId,
    stmt: &Statement,
    meta: &RelationMetaTable,
) -> Result<Triple, RejectReason> {
    let restrictive = stmt.qualifiers.keys().any(|q| {
        !wikidata::TEMPORAL_QUALIFIERS.contains(&q.as_str()) && meta.is_restrictive_qualifier(q)
    });
    if restrictive {
        return Err(RejectReason::RestrictiveQualifier);
    }
    if stmt.rank == Rank::Deprecated {
        return Err(RejectReason::Deprecated);
    }
    if meta.is_meta(&stmt.relation) {
        return Err(RejectReason::MetaRelation);
    }
    match stmt.object {
        ObjectValue::Url { .. } | ObjectValue::ExternalId { .. } => return Err(RejectReason::UrlOrExternalId),
        ObjectValue::GlobeCoordinate { .. } => return Err(RejectReason::GlobeCoordinate),
        ObjectValue::SomeValue | ObjectValue::NoValue => return Err(RejectReason::SomeOrNoValue),
        _ => {}
    }
    let interval =
        interval_from_qualifiers(&stmt.qualifiers).map_err(|_| RejectReason::MalformedTemporalQualifier)?;
    Ok(Triple {
        subject: subject.clone(),
        relation: stmt.relation.clone(),
        object: stmt.object.clone(),
        interval,
        rank: stmt.rank,
    })
}

/// Keeps only the most up-to-date values of a temporal-functional group.
///
/// If every triple is dated by a point in time, the latest one survives (ties
/// go to the smallest serialised object). Otherwise the preferred-rank
/// triples survive when there are any, and the group is left as is when
/// there are none.
pub fn dedup_temporal_functional(group: Vec<Triple>, meta: &RelationMetaTable) -> Vec<Triple> {
    if group.len() < 2 || !meta.is_temporal_functional(&group[0].relation) {
        return group;
    }
    if group.iter().all(|t| t.interval.point().is_some()) {
        let best = group
            .into_iter()
            .map(|t| (t.interval.point().map(|d| d.as_day()), t.object.sort_key(), t))
            .min_by(|(da, ka, _), (db, kb, _)| db.cmp(da).then_with(|| ka.cmp(kb)))
            .map(|(_, _, t)| t);
        return best.into_iter().collect();
    }
    if group.iter().any(|t| t.rank == Rank::Preferred) {
        return group.into_iter().filter(|t| t.rank == Rank::Preferred).collect();
    }
    group
}

/// Per-entity facts gathered in a first pass over a snapshot.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub id: CompactString,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub relevant: bool,
}

/// Labels, descriptions and relevance of every item in a snapshot.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    entries: HashMap<CompactString, CatalogEntry>,
}

impl Catalog {
    /// First pass: records every item and absorbs property documents into
    /// `meta`.
    pub fn scan<I>(docs: I, meta: &mut RelationMetaTable) -> Result<Self, IngestError>
    where
        I: IntoIterator<Item = Result<EntityDoc, IngestError>>,
    {
        let mut catalog = Catalog::default();
        for doc in docs {
            let doc = doc?;
            match doc.kind {
                DocKind::Property => meta.absorb_doc(&doc),
                DocKind::Item => catalog.insert(CatalogEntry {
                    relevant: is_relevant_entity(&doc),
                    id: doc.id.id,
                    label: doc.id.label,
                    description: doc.description,
                }),
            }
        }
        Ok(catalog)
    }

    pub fn insert(&mut self, entry: CatalogEntry) {
        self.entries.insert(entry.id.clone(), entry);
    }

    /// Adds every entry of `other`, replacing entries with the same id.
    pub fn merge(&mut self, other: Catalog) {
        self.entries.extend(other.entries);
    }

    pub fn get(&self, id: &str) -> Option<&CatalogEntry> {
        self.entries.get(id)
    }

    pub fn label(&self, id: &EntityId) -> Option<&str> {
        self.entries.get(id.as_str()).and_then(|e| e.label.as_deref())
    }

    pub fn description(&self, id: &EntityId) -> Option<&str> {
        self.entries.get(id.as_str()).and_then(|e| e.description.as_deref())
    }

    pub fn relevant_set(&self) -> HashSet<EntityId> {
        self.entries
            .values()
            .filter(|e| e.relevant)
            .map(|e| EntityId { id: e.id.clone(), label: e.label.clone() })
            .collect()
    }

    /// Copy of `id` carrying its label when the catalog knows it.
    pub fn labelled(&self, id: &EntityId) -> EntityId {
        EntityId { id: id.id.clone(), label: self.label(id).map(str::to_string).or_else(|| id.label.clone()) }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut ids: Vec<&CompactString> = self.entries.keys().collect();
        ids.sort();
        for id in ids {
            serde_json::to_writer(&mut w, &self.entries[id.as_str()])?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, IngestError> {
        let mut catalog = Catalog::default();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: CatalogEntry = serde_json::from_str(&line)
                .map_err(|e| SchemaError { line: i + 1, reason: e.to_string() })?;
            catalog.insert(entry);
        }
        Ok(catalog)
    }
}

/// Output of the filter cascade for one snapshot.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PreprocessedSnapshot {
    /// Triples per (s, r)-group, each list sorted and free of exact duplicates.
    pub groups: BTreeMap<GroupKey, Vec<Triple>>,
    pub relevant_entities: HashSet<EntityId>,
}

#[derive(Serialize, Deserialize)]
struct GroupLine {
    subject: EntityId,
    relation: RelationId,
    triples: Vec<TripleBody>,
}

#[derive(Serialize, Deserialize)]
struct TripleBody {
    object: ObjectValue,
    interval: TimeInterval,
    rank: Rank,
}

impl PreprocessedSnapshot {
    pub fn triple_count(&self) -> usize {
        self.groups.values().map(Vec::len).sum()
    }

    pub fn triples(&self) -> impl Iterator<Item = &Triple> {
        self.groups.values().flatten()
    }

    pub fn group(&self, key: &GroupKey) -> Option<&[Triple]> {
        self.groups.get(key).map(Vec::as_slice)
    }

    /// All groups whose subject is `subject`, in relation order.
    pub fn groups_of<'a>(&'a self, subject: &EntityId) -> impl Iterator<Item = (&'a GroupKey, &'a Vec<Triple>)> {
        let start = GroupKey { subject: subject.clone(), relation: RelationId::new("") };
        let subject = subject.clone();
        self.groups.range(start..).take_while(move |(k, _)| k.subject == subject)
    }

    pub fn has_subject(&self, subject: &EntityId) -> bool {
        self.groups_of(subject).next().is_some()
    }

    pub fn contains(&self, triple: &Triple) -> bool {
        self.groups.get(&triple.group_key()).is_some_and(|g| g.iter().any(|t| t.object == triple.object))
    }

    pub fn subjects(&self) -> impl Iterator<Item = &EntityId> {
        let mut last: Option<&EntityId> = None;
        self.groups.keys().filter_map(move |k| {
            if last == Some(&k.subject) {
                None
            } else {
                last = Some(&k.subject);
                Some(&k.subject)
            }
        })
    }

    fn insert_group(&mut self, key: GroupKey, mut triples: Vec<Triple>) {
        let slot = self.groups.entry(key).or_default();
        slot.append(&mut triples);
        normalize_group(slot);
        slot.shrink_to_fit();
    }

    /// Re-encodes the snapshot as entity documents whose qualifiers reproduce
    /// each triple's interval. Useful for re-running the cascade.
    pub fn to_entity_docs(&self) -> Vec<EntityDoc> {
        let mut docs: BTreeMap<EntityId, EntityDoc> = BTreeMap::new();
        for triple in self.triples() {
            let doc = docs.entry(triple.subject.clone()).or_insert_with(|| EntityDoc {
                id: triple.subject.clone(),
                kind: DocKind::Item,
                description: None,
                sitelink: crate::ingest::Sitelink { exists: true, page_kind: Some(PageKind::Article) },
                claims: BTreeMap::new(),
                property_meta: None,
            });
            doc.claims.entry(triple.relation.clone()).or_default().push(Statement {
                relation: triple.relation.clone(),
                object: triple.object.clone(),
                rank: triple.rank,
                qualifiers: interval_qualifiers(&triple.interval),
            });
        }
        docs.into_values().collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (key, triples) in &self.groups {
            let line = GroupLine {
                subject: key.subject.clone(),
                relation: key.relation.clone(),
                triples: triples
                    .iter()
                    .map(|t| TripleBody { object: t.object.clone(), interval: t.interval, rank: t.rank })
                    .collect(),
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R, relevant_entities: HashSet<EntityId>) -> Result<Self, IngestError> {
        let mut snapshot = PreprocessedSnapshot { relevant_entities, ..Default::default() };
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let g: GroupLine =
                serde_json::from_str(&line).map_err(|e| SchemaError { line: i + 1, reason: e.to_string() })?;
            let triples = g
                .triples
                .into_iter()
                .map(|b| Triple {
                    subject: g.subject.clone(),
                    relation: g.relation.clone(),
                    object: b.object,
                    interval: b.interval,
                    rank: b.rank,
                })
                .collect();
            snapshot.insert_group(GroupKey { subject: g.subject, relation: g.relation }, triples);
        }
        Ok(snapshot)
    }
}

fn interval_qualifiers(iv: &TimeInterval) -> Qualifiers {
    let mut q = Qualifiers::new();
    let mut put = |pid: &str, b: Bound| {
        if let Bound::At(d) = b {
            q.insert(RelationId::new(pid), vec![ObjectValue::Time { time: d }]);
        }
    };
    if iv.point_in_time {
        put(wikidata::POINT_IN_TIME, iv.start);
    } else {
        put(wikidata::START_TIME, iv.start);
        put(wikidata::END_TIME, iv.end);
    }
    q
}

fn normalize_group(triples: &mut Vec<Triple>) {
    triples.sort_by(|a, b| {
        a.object
            .cmp(&b.object)
            .then_with(|| a.interval.cmp(&b.interval))
            .then_with(|| a.rank.cmp(&b.rank))
    });
    triples.dedup();
}

type DocOutput = (Vec<(GroupKey, Vec<Triple>)>, Vec<RejectedStatement>);

fn process_doc(doc: &EntityDoc, meta: &RelationMetaTable, relevant: &HashSet<EntityId>) -> DocOutput {
    let mut groups = Vec::new();
    let mut rejected = Vec::new();
    if doc.kind != DocKind::Item || !relevant.contains(&doc.id) {
        return (groups, rejected);
    }
    // Labels live in the catalog; triples carry bare ids.
    let subject = EntityId::new(doc.id.id.clone());
    for (relation, statements) in &doc.claims {
        let mut kept = Vec::new();
        for stmt in statements {
            let outcome = filter_statement(&subject, stmt, meta).and_then(|t| match t.object.as_entity() {
                Some(o) if !relevant.contains(o) => Err(RejectReason::IrrelevantObject),
                _ => Ok(t),
            });
            match outcome {
                Ok(t) => kept.push(t),
                Err(reason) => {
                    rejected.push(RejectedStatement { subject: subject.clone(), relation: relation.clone(), reason })
                }
            }
        }
        if kept.is_empty() {
            continue;
        }
        normalize_group(&mut kept);
        let mut kept = dedup_temporal_functional(kept, meta);
        // Most groups hold one triple; growth capacity would dominate memory.
        kept.shrink_to_fit();
        groups.push((GroupKey { subject: subject.clone(), relation: relation.clone() }, kept));
    }
    (groups, rejected)
}

/// Runs the whole cascade over a document stream.
pub fn preprocess_snapshot<I>(
    docs: I,
    meta: &RelationMetaTable,
    relevant: &HashSet<EntityId>,
) -> Result<PreprocessedSnapshot, IngestError>
where
    I: IntoIterator<Item = Result<EntityDoc, IngestError>>,
{
    preprocess_snapshot_with(docs, meta, relevant, |_| {})
}

/// Same as [`preprocess_snapshot`], reporting every rejected statement (in
/// document order) to `on_reject`.
pub fn preprocess_snapshot_with<I, F>(
    docs: I,
    meta: &RelationMetaTable,
    relevant: &HashSet<EntityId>,
    mut on_reject: F,
) -> Result<PreprocessedSnapshot, IngestError>
where
    I: IntoIterator<Item = Result<EntityDoc, IngestError>>,
    F: FnMut(&RejectedStatement),
{
    let mut snapshot = PreprocessedSnapshot { relevant_entities: relevant.clone(), ..Default::default() };
    let mut batch = Vec::with_capacity(BATCH);
    let mut flush = |batch: &mut Vec<EntityDoc>, snapshot: &mut PreprocessedSnapshot| {
        let outputs: Vec<DocOutput> = batch.par_iter().map(|d| process_doc(d, meta, relevant)).collect();
        for (groups, rejected) in outputs {
            rejected.iter().for_each(&mut on_reject);
            for (key, triples) in groups {
                if snapshot.groups.contains_key(&key) {
                    // Duplicate subject documents: merge and re-apply the dedup.
                    let mut merged = snapshot.groups.remove(&key).unwrap_or_default();
                    merged.extend(triples);
                    normalize_group(&mut merged);
                    let mut merged = dedup_temporal_functional(merged, meta);
                    merged.shrink_to_fit();
                    snapshot.groups.insert(key, merged);
                } else {
                    snapshot.groups.insert(key, triples);
                }
            }
        }
        batch.clear();
    };
    for doc in docs {
        batch.push(doc?);
        if batch.len() == BATCH {
            flush(&mut batch, &mut snapshot);
        }
    }
    flush(&mut batch, &mut snapshot);
    Ok(snapshot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{ConstraintKind, PropertyConstraint, PropertyMeta, RelationMeta, Sitelink};
    use crate::model::Date;

    fn item(id: &str, sitelink: Sitelink) -> EntityDoc {
        EntityDoc {
            id: EntityId::new(id),
            kind: DocKind::Item,
            description: None,
            sitelink,
            claims: BTreeMap::new(),
            property_meta: None,
        }
    }

    fn article() -> Sitelink {
        Sitelink { exists: true, page_kind: Some(PageKind::Article) }
    }

    fn time(s: &str) -> ObjectValue {
        ObjectValue::Time { time: s.parse().unwrap() }
    }

    fn stmt(rel: &str, object: ObjectValue) -> Statement {
        Statement { relation: RelationId::new(rel), object, rank: Rank::Normal, qualifiers: Qualifiers::new() }
    }

    fn with_qual(mut s: Statement, q: &str, v: ObjectValue) -> Statement {
        s.qualifiers.entry(RelationId::new(q)).or_default().push(v);
        s
    }

    fn meta() -> RelationMetaTable {
        let mut t = RelationMetaTable::new();
        let mut m = RelationMeta::plain(RelationId::new("P447"));
        m.is_restrictive_qualifier = true; // "review score by"
        t.insert(m);
        let mut m = RelationMeta::plain(RelationId::new("P1343"));
        m.is_meta = true;
        t.insert(m);
        let property = EntityDoc {
            id: EntityId::new(wikidata::POPULATION),
            kind: DocKind::Property,
            description: None,
            sitelink: Sitelink::default(),
            claims: BTreeMap::new(),
            property_meta: Some(PropertyMeta {
                constraints: vec![PropertyConstraint {
                    kind: ConstraintKind::SingleBestValue,
                    separators: vec![RelationId::new(wikidata::POINT_IN_TIME)],
                }],
                ..Default::default()
            }),
        };
        t.absorb_doc(&property);
        t
    }

    #[test]
    fn relevance() {
        assert!(is_relevant_entity(&item("Q1", article())));
        let disamb = Sitelink { exists: true, page_kind: Some(PageKind::Disambiguation) };
        assert!(!is_relevant_entity(&item("Q1", disamb)));
        assert!(!is_relevant_entity(&item("Q1", Sitelink { exists: false, page_kind: None })));
        let section = Sitelink { exists: true, page_kind: Some(PageKind::ArticleSection) };
        assert!(is_relevant_entity(&item("Q1", section)));
        for kind in [PageKind::List, PageKind::Category, PageKind::Template] {
            assert!(!is_relevant_entity(&item("Q1", Sitelink { exists: true, page_kind: Some(kind) })));
        }
    }

    #[test]
    fn restrictive_qualifier_rejected() {
        // (Se7en, review score, 83%) qualified by "reviewed by"
        let s = with_qual(
            stmt("P444", ObjectValue::Text { text: "83%".into() }),
            "P447",
            ObjectValue::entity("Q105584"),
        );
        assert_eq!(filter_statement(&"Q190908".into(), &s, &meta()), Err(RejectReason::RestrictiveQualifier));
    }

    #[test]
    fn deprecated_rejected() {
        let mut s = stmt("P36", ObjectValue::entity("Q90"));
        s.rank = Rank::Deprecated;
        assert_eq!(filter_statement(&"Q142".into(), &s, &meta()), Err(RejectReason::Deprecated));
    }

    #[test]
    fn clean_statement_becomes_unbounded_triple() {
        let t = filter_statement(&"Q142".into(), &stmt("P36", ObjectValue::entity("Q90")), &meta()).unwrap();
        assert_eq!(t.interval, TimeInterval::UNBOUNDED);
        assert_eq!(t.object, ObjectValue::entity("Q90"));
    }

    #[test]
    fn rejection_order() {
        // restrictive qualifier beats deprecated rank
        let mut s = with_qual(stmt("P1343", ObjectValue::Url { url: "x".into() }), "P447", ObjectValue::entity("Q1"));
        s.rank = Rank::Deprecated;
        let m = meta();
        assert_eq!(filter_statement(&"Q1".into(), &s, &m), Err(RejectReason::RestrictiveQualifier));
        s.qualifiers.clear();
        assert_eq!(filter_statement(&"Q1".into(), &s, &m), Err(RejectReason::Deprecated));
        s.rank = Rank::Normal;
        assert_eq!(filter_statement(&"Q1".into(), &s, &m), Err(RejectReason::MetaRelation));
        s.relation = RelationId::new("P856");
        assert_eq!(filter_statement(&"Q1".into(), &s, &m), Err(RejectReason::UrlOrExternalId));
    }

    #[test]
    fn temporal_qualifier_even_if_flagged_restrictive_is_allowed() {
        let mut m = meta();
        let mut st = RelationMeta::plain(RelationId::new(wikidata::START_TIME));
        st.is_restrictive_qualifier = true;
        m.insert(st);
        let s = with_qual(stmt("P6", ObjectValue::entity("Q6279")), wikidata::START_TIME, time("2021-01-20"));
        assert!(filter_statement(&"Q30".into(), &s, &m).is_ok());
    }

    fn pop(value: &str, when: Option<&str>, rank: Rank) -> Triple {
        Triple {
            subject: "Q17".into(),
            relation: wikidata::POPULATION.into(),
            object: ObjectValue::Quantity { amount: value.parse().unwrap(), unit: None },
            interval: when.map_or(TimeInterval::UNBOUNDED, |w| TimeInterval::from_point(w.parse().unwrap())),
            rank,
        }
    }

    #[test]
    fn dedup_keeps_latest_point_in_time() {
        let group = vec![
            pop("126000000", Some("2019-10-01"), Rank::Normal),
            pop("125440000", Some("2022-10-01"), Rank::Normal),
            pop("125700000", Some("2021-10-01"), Rank::Normal),
        ];
        let kept = dedup_temporal_functional(group, &meta());
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].interval.point(), Some(Date::ymd(2022, 10, 1).unwrap()));
    }

    #[test]
    fn dedup_tie_goes_to_smallest_serialised_object() {
        let group =
            vec![pop("2", Some("2022-10-01"), Rank::Normal), pop("1", Some("2022-10-01"), Rank::Normal)];
        let kept = dedup_temporal_functional(group, &meta());
        assert_eq!(kept, vec![pop("1", Some("2022-10-01"), Rank::Normal)]);
    }

    #[test]
    fn dedup_single_triple_untouched() {
        let group = vec![pop("1", None, Rank::Normal)];
        assert_eq!(dedup_temporal_functional(group.clone(), &meta()), group);
    }

    #[test]
    fn dedup_undated_prefers_preferred_rank() {
        let group = vec![pop("1", None, Rank::Normal), pop("2", None, Rank::Preferred)];
        assert_eq!(dedup_temporal_functional(group, &meta()), vec![pop("2", None, Rank::Preferred)]);
    }

    #[test]
    fn dedup_mixed_without_preferred_keeps_all() {
        let group = vec![pop("1", None, Rank::Normal), pop("2", Some("2020-01-01"), Rank::Normal)];
        assert_eq!(dedup_temporal_functional(group.clone(), &meta()).len(), 2);
    }

    #[test]
    fn dedup_ignores_non_temporal_relations() {
        let mut group = vec![pop("1", Some("2019-01-01"), Rank::Normal), pop("2", Some("2020-01-01"), Rank::Normal)];
        for t in &mut group {
            t.relation = "P1000".into();
        }
        assert_eq!(dedup_temporal_functional(group.clone(), &meta()), group);
    }

    #[test]
    fn empty_snapshot() {
        let s = preprocess_snapshot(Vec::new(), &meta(), &HashSet::new()).unwrap();
        assert!(s.groups.is_empty());
    }

    #[test]
    fn irrelevant_object_dropped() {
        let mut doc = item("Q142", article());
        doc.claims.insert("P36".into(), vec![stmt("P36", ObjectValue::entity("Q90"))]);
        doc.claims.insert("P30".into(), vec![stmt("P30", ObjectValue::entity("Q46"))]);
        let relevant: HashSet<EntityId> = ["Q142", "Q46"].into_iter().map(EntityId::new).collect();
        let mut rejected = Vec::new();
        let s = preprocess_snapshot_with(vec![Ok(doc)], &meta(), &relevant, |r| rejected.push(r.clone())).unwrap();
        assert_eq!(s.triple_count(), 1);
        assert!(s.group(&GroupKey::new("Q142", "P30")).is_some());
        assert_eq!(rejected.len(), 1);
        assert_eq!(rejected[0].reason, RejectReason::IrrelevantObject);
    }

    #[test]
    fn jsonl_round_trip() {
        let mut doc = item("Q17", article());
        doc.claims.insert(
            wikidata::POPULATION.into(),
            vec![with_qual(
                stmt(wikidata::POPULATION, ObjectValue::Quantity { amount: "125440000".parse().unwrap(), unit: None }),
                wikidata::POINT_IN_TIME,
                time("2022-10-01"),
            )],
        );
        let relevant: HashSet<EntityId> = [EntityId::new("Q17")].into();
        let s = preprocess_snapshot(vec![Ok(doc)], &meta(), &relevant).unwrap();
        let mut buf = Vec::new();
        s.write_jsonl(&mut buf).unwrap();
        let back = PreprocessedSnapshot::read_jsonl(&buf[..], relevant).unwrap();
        assert_eq!(back, s);
    }
}

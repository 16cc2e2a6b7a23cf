//! Three-way partition of triples between two preprocessed snapshots.
//!
//! Triples are matched on `(subject, relation, object)`. A snapshot may hold
//! the same key more than once with different intervals (a player who joined
//! the same club twice), so each side keeps a list of occurrences.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::iter::Peekable;

use serde::{Deserialize, Serialize};

use crate::ingest::{IngestError, SchemaError};
use crate::model::{EntityId, GroupKey, ObjectValue, Rank, TimeInterval, Triple};
use crate::preprocess::PreprocessedSnapshot;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Membership {
    /// F⁻: only in the old snapshot.
    OldOnly,
    /// F⁰: in both snapshots.
    Both,
    /// F⁺: only in the new snapshot.
    NewOnly,
}

impl Membership {
    fn index(self) -> usize {
        match self {
            Membership::OldOnly => 0,
            Membership::Both => 1,
            Membership::NewOnly => 2,
        }
    }

    pub fn mirrored(self) -> Self {
        match self {
            Membership::OldOnly => Membership::NewOnly,
            Membership::Both => Membership::Both,
            Membership::NewOnly => Membership::OldOnly,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Occurrence {
    pub interval: TimeInterval,
    pub rank: Rank,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffEntry {
    pub object: ObjectValue,
    pub membership: Membership,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub old: Vec<Occurrence>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub new: Vec<Occurrence>,
}

impl DiffEntry {
    pub fn old_interval(&self) -> Option<TimeInterval> {
        self.old.first().map(|o| o.interval)
    }

    pub fn new_interval(&self) -> Option<TimeInterval> {
        self.new.first().map(|o| o.interval)
    }

    /// Occurrences classification works on: the new snapshot's whenever the
    /// key exists there, the old one's otherwise.
    pub fn current(&self) -> &[Occurrence] {
        if self.new.is_empty() {
            &self.old
        } else {
            &self.new
        }
    }

    fn mirrored(&self) -> Self {
        DiffEntry {
            object: self.object.clone(),
            membership: self.membership.mirrored(),
            old: self.new.clone(),
            new: self.old.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffGroup {
    pub key: GroupKey,
    /// Sorted by object.
    pub entries: Vec<DiffEntry>,
}

impl DiffGroup {
    pub fn stats(&self) -> GroupStats {
        group_stats(&self.entries)
    }

    pub fn is_unchanged(&self) -> bool {
        self.entries.iter().all(|e| e.membership == Membership::Both)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupStats {
    pub n_minus: usize,
    pub n_zero: usize,
    pub n_plus: usize,
    pub n: usize,
}

pub fn group_stats(entries: &[DiffEntry]) -> GroupStats {
    let mut s = GroupStats::default();
    for e in entries {
        match e.membership {
            Membership::OldOnly => s.n_minus += 1,
            Membership::Both => s.n_zero += 1,
            Membership::NewOnly => s.n_plus += 1,
        }
    }
    s.n = s.n_minus + s.n_zero + s.n_plus;
    s
}

fn merge_group(key: GroupKey, old: &[Triple], new: &[Triple]) -> DiffGroup {
    let mut by_object: BTreeMap<&ObjectValue, (Vec<Occurrence>, Vec<Occurrence>)> = BTreeMap::new();
    for t in old {
        by_object.entry(&t.object).or_default().0.push(Occurrence { interval: t.interval, rank: t.rank });
    }
    for t in new {
        by_object.entry(&t.object).or_default().1.push(Occurrence { interval: t.interval, rank: t.rank });
    }
    let entries = by_object
        .into_iter()
        .map(|(object, (old, new))| {
            let membership = match (old.is_empty(), new.is_empty()) {
                (false, true) => Membership::OldOnly,
                (true, false) => Membership::NewOnly,
                _ => Membership::Both,
            };
            DiffEntry { object: object.clone(), membership, old, new }
        })
        .collect();
    DiffGroup { key, entries }
}

/// Lazy sorted merge of two snapshots' group indexes, one group at a time.
pub struct DiffStream<'a, I: Iterator> {
    old: Peekable<I>,
    new: Peekable<I>,
    _snapshots: std::marker::PhantomData<&'a ()>,
}

type GroupIter<'a> = std::collections::btree_map::Iter<'a, GroupKey, Vec<Triple>>;

impl<'a> Iterator for DiffStream<'a, GroupIter<'a>> {
    type Item = DiffGroup;

    fn next(&mut self) -> Option<DiffGroup> {
        let order = match (self.old.peek(), self.new.peek()) {
            (None, None) => return None,
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (Some((a, _)), Some((b, _))) => a.cmp(b),
        };
        Some(match order {
            std::cmp::Ordering::Less => {
                let (k, t) = self.old.next()?;
                merge_group(k.clone(), t, &[])
            }
            std::cmp::Ordering::Greater => {
                let (k, t) = self.new.next()?;
                merge_group(k.clone(), &[], t)
            }
            std::cmp::Ordering::Equal => {
                let (k, old) = self.old.next()?;
                let (_, new) = self.new.next()?;
                merge_group(k.clone(), old, new)
            }
        })
    }
}

/// Streams the diff group by group in `GroupKey` order.
pub fn diff_groups<'a>(old: &'a PreprocessedSnapshot, new: &'a PreprocessedSnapshot) -> DiffStream<'a, GroupIter<'a>> {
    DiffStream {
        old: old.groups.iter().peekable(),
        new: new.groups.iter().peekable(),
        _snapshots: std::marker::PhantomData,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DiffResult {
    pub groups: BTreeMap<GroupKey, Vec<DiffEntry>>,
}

pub fn diff_snapshots(old: &PreprocessedSnapshot, new: &PreprocessedSnapshot) -> DiffResult {
    DiffResult { groups: diff_groups(old, new).map(|g| (g.key, g.entries)).collect() }
}

impl DiffResult {
    pub fn iter_groups(&self) -> impl Iterator<Item = (&GroupKey, &Vec<DiffEntry>)> {
        self.groups.iter()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&GroupKey, &DiffEntry)> {
        self.groups.iter().flat_map(|(k, es)| es.iter().map(move |e| (k, e)))
    }

    pub fn get(&self, key: &GroupKey, object: &ObjectValue) -> Option<&DiffEntry> {
        self.groups.get(key)?.iter().find(|e| &e.object == object)
    }

    /// Number of distinct `(s, r, o)` keys per membership: `[F⁻, F⁰, F⁺]`.
    pub fn partition_sizes(&self) -> [usize; 3] {
        let mut sizes = [0; 3];
        for (_, e) in self.entries() {
            sizes[e.membership.index()] += 1;
        }
        sizes
    }

    pub fn key_count(&self) -> usize {
        self.partition_sizes().iter().sum()
    }

    /// The diff with the roles of the two snapshots exchanged.
    pub fn mirrored(&self) -> Self {
        DiffResult {
            groups: self
                .groups
                .iter()
                .map(|(k, es)| (k.clone(), es.iter().map(DiffEntry::mirrored).collect()))
                .collect(),
        }
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (key, entries) in &self.groups {
            let g = DiffGroup { key: key.clone(), entries: entries.clone() };
            serde_json::to_writer(&mut w, &g)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, IngestError> {
        let mut diff = DiffResult::default();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let g: DiffGroup =
                serde_json::from_str(&line).map_err(|e| SchemaError { line: i + 1, reason: e.to_string() })?;
            diff.groups.insert(g.key, g.entries);
        }
        Ok(diff)
    }
}

/// Whether `entity` appears as subject or entity object of any entry with the
/// given membership. Linear scan; see [`OccurrenceIndex`] for bulk queries.
pub fn entity_occurs_in(entity: &EntityId, part: Membership, diff: &DiffResult) -> bool {
    diff.entries().any(|(k, e)| {
        e.membership == part && (&k.subject == entity || e.object.as_entity() == Some(entity))
    })
}

/// Precomputed [`entity_occurs_in`] for every entity of a diff.
#[derive(Debug, Clone, Default)]
pub struct OccurrenceIndex {
    parts: HashMap<EntityId, [bool; 3]>,
}

impl OccurrenceIndex {
    pub fn build(diff: &DiffResult) -> Self {
        let mut parts: HashMap<EntityId, [bool; 3]> = HashMap::new();
        for (k, e) in diff.entries() {
            let i = e.membership.index();
            parts.entry(k.subject.clone()).or_default()[i] = true;
            if let Some(o) = e.object.as_entity() {
                parts.entry(o.clone()).or_default()[i] = true;
            }
        }
        Self { parts }
    }

    pub fn occurs_in(&self, entity: &EntityId, part: Membership) -> bool {
        self.parts.get(entity).is_some_and(|p| p[part.index()])
    }

    /// Entities occurring in F⁺ and nowhere else.
    pub fn only_new(&self) -> impl Iterator<Item = &EntityId> {
        self.parts.iter().filter(|(_, p)| p[2] && !p[0] && !p[1]).map(|(e, _)| e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Bound, RelationId};
    use std::collections::HashSet;

    fn triple(s: &str, r: &str, o: &str) -> Triple {
        Triple {
            subject: s.into(),
            relation: r.into(),
            object: ObjectValue::entity(o),
            interval: TimeInterval::UNBOUNDED,
            rank: Rank::Normal,
        }
    }

    fn snapshot(triples: &[Triple]) -> PreprocessedSnapshot {
        let mut s = PreprocessedSnapshot { groups: BTreeMap::new(), relevant_entities: HashSet::new() };
        for t in triples {
            s.groups.entry(t.group_key()).or_default().push(t.clone());
        }
        s
    }

    fn entry(m: Membership) -> DiffEntry {
        DiffEntry { object: ObjectValue::NoValue, membership: m, old: vec![], new: vec![] }
    }

    #[test]
    fn identity_diff_is_all_both() {
        let s = snapshot(&[triple("Q1", "P1", "Q2"), triple("Q1", "P1", "Q3"), triple("Q2", "P2", "Q1")]);
        let d = diff_snapshots(&s, &s);
        assert_eq!(d.partition_sizes(), [0, 3, 0]);
    }

    #[test]
    fn diff_against_empty_is_all_old() {
        let s = snapshot(&[triple("Q1", "P1", "Q2"), triple("Q2", "P2", "Q1")]);
        let d = diff_snapshots(&s, &PreprocessedSnapshot::default());
        assert_eq!(d.partition_sizes(), [2, 0, 0]);
    }

    #[test]
    fn head_of_government_replacement() {
        let old = snapshot(&[triple("Q30", "P6", "Q22686")]);
        let new = snapshot(&[triple("Q30", "P6", "Q6279")]);
        let d = diff_snapshots(&old, &new);
        let key = GroupKey::new("Q30", "P6");
        assert_eq!(d.groups.len(), 1);
        assert_eq!(d.get(&key, &ObjectValue::entity("Q22686")).unwrap().membership, Membership::OldOnly);
        assert_eq!(d.get(&key, &ObjectValue::entity("Q6279")).unwrap().membership, Membership::NewOnly);
        assert!(entity_occurs_in(&"Q6279".into(), Membership::NewOnly, &d));
        assert!(!entity_occurs_in(&"Q6279".into(), Membership::OldOnly, &d));
    }

    #[test]
    fn interval_change_is_both_with_both_intervals() {
        let old = snapshot(&[triple("Q30", "P6", "Q22686")]);
        let mut changed = triple("Q30", "P6", "Q22686");
        changed.interval.end = Bound::At("2021-01-20".parse().unwrap());
        let new = snapshot(&[changed.clone()]);
        let d = diff_snapshots(&old, &new);
        let e = d.get(&changed.group_key(), &changed.object).unwrap();
        assert_eq!(e.membership, Membership::Both);
        assert_eq!(e.old_interval(), Some(TimeInterval::UNBOUNDED));
        assert_eq!(e.new_interval(), Some(changed.interval));
        assert_eq!(e.current()[0].interval, changed.interval);
    }

    #[test]
    fn stats() {
        assert_eq!(
            group_stats(&[entry(Membership::OldOnly), entry(Membership::NewOnly)]),
            GroupStats { n_minus: 1, n_zero: 0, n_plus: 1, n: 2 }
        );
        assert_eq!(group_stats(&[]), GroupStats::default());
        assert_eq!(
            group_stats(&[entry(Membership::Both), entry(Membership::Both), entry(Membership::NewOnly)]),
            GroupStats { n_minus: 0, n_zero: 2, n_plus: 1, n: 3 }
        );
    }

    #[test]
    fn occurrence_counts_subject_only() {
        let old = snapshot(&[triple("Q1", "P1", "Q2")]);
        let d = diff_snapshots(&old, &PreprocessedSnapshot::default());
        assert!(entity_occurs_in(&"Q1".into(), Membership::OldOnly, &d));
        assert!(entity_occurs_in(&"Q2".into(), Membership::OldOnly, &d));
        let idx = OccurrenceIndex::build(&d);
        assert!(idx.occurs_in(&"Q1".into(), Membership::OldOnly));
        for m in [Membership::OldOnly, Membership::Both, Membership::NewOnly] {
            assert!(!entity_occurs_in(&"Q9".into(), m, &d));
            assert!(!idx.occurs_in(&"Q9".into(), m));
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let old = snapshot(&[triple("Q1", "P1", "Q2"), triple("Q3", "P1", "Q2")]);
        let new = snapshot(&[triple("Q1", "P1", "Q4"), triple("Q3", "P1", "Q2")]);
        let d = diff_snapshots(&old, &new);
        let mut buf = Vec::new();
        d.write_jsonl(&mut buf).unwrap();
        assert_eq!(String::from_utf8_lossy(&buf).lines().count(), 2);
        assert_eq!(DiffResult::read_jsonl(&buf[..]).unwrap(), d);
        let _ = RelationId::new("P1");
    }
}

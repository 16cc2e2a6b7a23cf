//! Final dataset records: classified groups with verbalizations and neighbors.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::classify::{ClassifiedGroup, NewEntitySet};
use crate::diff::Membership;
use crate::ingest::{IngestError, RelationMetaTable};
use crate::model::{EntityId, GroupKey, Label, ObjectValue, RelationId, Scenario, TimeInterval};
use crate::neighbors::GroupNeighbors;
use crate::preprocess::Catalog;
use crate::verbalize::template::RenderError;
use crate::verbalize::{object_words, subject_words, TemplateStore, VerbalizationSet};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectInfo {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub popularity: u64,
    pub is_new: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationInfo {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripleRecord {
    pub object: ObjectValue,
    /// The object as it appears in sentences.
    pub text: String,
    pub label: Label,
    pub membership: Membership,
    pub interval: TimeInterval,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verbalization: Option<VerbalizationSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborRecord {
    pub subject: EntityId,
    pub relation: RelationId,
    pub object: ObjectValue,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cloze: Option<String>,
    pub similarity: f64,
    pub popularity: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub subject: SubjectInfo,
    pub relation: RelationInfo,
    pub scenario: Scenario,
    pub triples: Vec<TripleRecord>,
    /// Verbalization of the group's update (its first new triple, else its
    /// first triple).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verbalization: Option<VerbalizationSet>,
    pub neighbors: Vec<NeighborRecord>,
}

impl DatasetRecord {
    pub fn key(&self) -> GroupKey {
        GroupKey::new(self.subject.id.as_str(), self.relation.id.as_str())
    }

    pub fn with_label(&self, label: Label) -> impl Iterator<Item = &TripleRecord> {
        self.triples.iter().filter(move |t| t.label == label)
    }
}

pub struct DatasetContext<'a> {
    pub catalog: &'a Catalog,
    pub meta: &'a RelationMetaTable,
    pub templates: &'a TemplateStore,
    pub new_entities: &'a NewEntitySet,
}

impl DatasetContext<'_> {
    fn labelled_object(&self, o: &ObjectValue) -> ObjectValue {
        match o {
            ObjectValue::Entity(e) => ObjectValue::Entity(self.catalog.labelled(e)),
            ObjectValue::Quantity { amount, unit } => {
                ObjectValue::Quantity { amount: amount.clone(), unit: unit.as_ref().map(|u| self.catalog.labelled(u)) }
            }
            other => other.clone(),
        }
    }

    fn labelled_relation(&self, r: &RelationId) -> RelationId {
        RelationId { id: r.id.clone(), label: self.meta.label(r).map(str::to_string).or_else(|| r.label.clone()) }
    }

    /// One dataset record per group, in the groups' order.
    pub fn build(
        &self,
        groups: &[ClassifiedGroup],
        neighbors: &[GroupNeighbors],
    ) -> Result<Vec<DatasetRecord>, RenderError> {
        let by_key: HashMap<&GroupKey, &GroupNeighbors> = neighbors.iter().map(|n| (&n.key, n)).collect();
        groups.iter().map(|g| self.record(g, by_key.get(&g.key).copied())).collect()
    }

    pub fn record(&self, g: &ClassifiedGroup, neighbors: Option<&GroupNeighbors>) -> Result<DatasetRecord, RenderError> {
        let subject = subject_words(&g.key.subject, self.catalog);
        let mut triples = Vec::with_capacity(g.triples.len());
        for t in &g.triples {
            let text = object_words(&t.triple.object, self.catalog);
            let verbalization = match t.label {
                Label::New | Label::Obsolete => self.templates.verbalize(&g.key.relation, &subject, &text)?,
                _ => None,
            };
            triples.push(TripleRecord {
                object: self.labelled_object(&t.triple.object),
                text,
                label: t.label,
                membership: t.membership,
                interval: t.triple.interval,
                verbalization,
            });
        }
        let main = triples.iter().find(|t| t.label == Label::New).or(triples.first());
        let verbalization = match main {
            Some(t) if t.verbalization.is_some() => t.verbalization.clone(),
            Some(t) => self.templates.verbalize(&g.key.relation, &subject, &t.text)?,
            None => None,
        };
        let neighbors = neighbors
            .map(|n| {
                n.neighbors
                    .iter()
                    .map(|f| NeighborRecord {
                        subject: self.catalog.labelled(&f.triple.subject),
                        relation: self.labelled_relation(&f.triple.relation),
                        object: self.labelled_object(&f.triple.object),
                        text: object_words(&f.triple.object, self.catalog),
                        cloze: self.templates.cloze(&f.triple.relation, &subject_words(&f.triple.subject, self.catalog)),
                        similarity: f.similarity,
                        popularity: f.subject_popularity,
                    })
                    .collect()
            })
            .unwrap_or_default();
        Ok(DatasetRecord {
            subject: SubjectInfo {
                id: g.key.subject.id.to_string(),
                label: self.catalog.label(&g.key.subject).map(str::to_string),
                popularity: g.subject_popularity,
                is_new: self.new_entities.contains(&g.key.subject),
            },
            relation: RelationInfo {
                id: g.key.relation.id.to_string(),
                label: self.meta.label(&g.key.relation).map(str::to_string),
            },
            scenario: g.scenario,
            triples,
            verbalization,
            neighbors,
        })
    }
}

/// Descending subject popularity, then key.
pub fn sort_records(records: &mut [DatasetRecord]) {
    records.sort_by(|a, b| {
        b.subject
            .popularity
            .cmp(&a.subject.popularity)
            .then_with(|| a.subject.id.cmp(&b.subject.id))
            .then_with(|| a.relation.id.cmp(&b.relation.id))
    });
}

pub fn write_records_jsonl<W: Write>(records: &[DatasetRecord], w: W) -> std::io::Result<()> {
    crate::jsonl::write(records, w)
}

pub fn read_records_jsonl<R: BufRead>(r: R) -> Result<Vec<DatasetRecord>, IngestError> {
    crate::jsonl::read(r)
}

//! Streaming reader for snapshot dumps and side-channel metadata files.
//!
//! Snapshots are JSON-lines files holding one entity document per line. The
//! reader holds a single line in memory at a time, so arbitrarily large dumps
//! can be processed. Lines `[` / `]` and trailing commas are tolerated so
//! that a raw Wikidata JSON array dump can be streamed after field mapping.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::model::{Date, Decimal, EntityId, ObjectValue, Qualifiers, Rank, RelationId, Statement, ValueKind};
use crate::wikidata;

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[error("line {line}: {reason}")]
pub struct SchemaError {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("schema error at {0}")]
    Schema(#[from] SchemaError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ErrorPolicy {
    /// Log the bad line, remember it and keep going.
    #[default]
    Skip,
    /// Yield the error and stop.
    Abort,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocKind {
    Item,
    Property,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PageKind {
    Article,
    List,
    Category,
    Template,
    Disambiguation,
    ArticleSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Sitelink {
    pub exists: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub page_kind: Option<PageKind>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    SingleValue,
    SingleBestValue,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertyConstraint {
    pub kind: ConstraintKind,
    #[serde(default)]
    pub separators: Vec<RelationId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PropertyMeta {
    pub is_meta: bool,
    pub is_restrictive_qualifier: bool,
    pub datatype: Option<ValueKind>,
    pub constraints: Vec<PropertyConstraint>,
}

/// One parsed entity document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityDoc {
    /// Carries the entity's label, if the dump has one.
    pub id: EntityId,
    pub kind: DocKind,
    pub description: Option<String>,
    pub sitelink: Sitelink,
    pub claims: BTreeMap<RelationId, Vec<Statement>>,
    pub property_meta: Option<PropertyMeta>,
}

impl EntityDoc {
    pub fn statements(&self) -> impl Iterator<Item = &Statement> {
        self.claims.values().flatten()
    }

    /// Serialises back to the snapshot line schema.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&RawDoc::from(self)).expect("entity documents always serialise")
    }

    pub fn from_json_line(line: &str) -> Result<Self, String> {
        let raw: RawDoc = serde_json::from_str(line).map_err(|e| e.to_string())?;
        raw.into_doc()
    }
}

// ---------------------------------------------------------------------------
// Wire schema
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct RawDoc {
    id: String,
    kind: DocKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    description: Option<String>,
    #[serde(default)]
    sitelink: Sitelink,
    #[serde(default)]
    claims: BTreeMap<String, Vec<RawStatement>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    property_meta: Option<RawPropertyMeta>,
}

#[derive(Serialize, Deserialize)]
struct RawPropertyMeta {
    #[serde(default)]
    is_meta: bool,
    #[serde(default)]
    is_restrictive_qualifier: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    datatype: Option<String>,
    #[serde(default)]
    constraints: Vec<PropertyConstraint>,
}

#[derive(Serialize, Deserialize)]
struct RawStatement {
    #[serde(default = "normal_rank")]
    rank: Rank,
    #[serde(flatten)]
    snak: RawSnak,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    qualifiers: BTreeMap<String, Vec<RawSnak>>,
}

fn normal_rank() -> Rank {
    Rank::Normal
}

#[derive(Serialize, Deserialize)]
struct RawSnak {
    #[serde(default = "value_snaktype")]
    snaktype: String,
    #[serde(default)]
    datatype: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value: Option<Value>,
}

fn value_snaktype() -> String {
    "value".to_string()
}

fn datatype_kind(datatype: &str) -> Option<ValueKind> {
    Some(match datatype {
        "wikibase-item" | "wikibase-property" | "wikibase-lexeme" | "wikibase-form" | "wikibase-sense" => {
            ValueKind::Entity
        }
        "quantity" => ValueKind::Quantity,
        "time" => ValueKind::Time,
        "string" | "math" | "musical-notation" => ValueKind::Text,
        "monolingualtext" => ValueKind::MonolingualText,
        "url" | "commonsMedia" | "geo-shape" | "tabular-data" => ValueKind::Url,
        "external-id" => ValueKind::ExternalId,
        "globe-coordinate" => ValueKind::GlobeCoordinate,
        _ => return None,
    })
}

fn kind_datatype(kind: ValueKind) -> &'static str {
    match kind {
        ValueKind::Entity => "wikibase-item",
        ValueKind::Quantity => "quantity",
        ValueKind::Time => "time",
        ValueKind::Text => "string",
        ValueKind::MonolingualText => "monolingualtext",
        ValueKind::Url => "url",
        ValueKind::ExternalId => "external-id",
        ValueKind::GlobeCoordinate => "globe-coordinate",
        ValueKind::SomeValue | ValueKind::NoValue => "",
    }
}

/// Strips a concept URI down to its id; `"1"` (dimensionless) becomes `None`.
fn unit_id(raw: &str) -> Option<EntityId> {
    let id = raw.rsplit('/').next().unwrap_or(raw);
    (id != "1" && !id.is_empty()).then(|| EntityId::new(id))
}

fn json_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

impl RawSnak {
    fn to_value(&self) -> Result<ObjectValue, String> {
        match self.snaktype.as_str() {
            "somevalue" => return Ok(ObjectValue::SomeValue),
            "novalue" => return Ok(ObjectValue::NoValue),
            "value" => {}
            other => return Err(format!("unknown snaktype {other:?}")),
        }
        let kind = datatype_kind(&self.datatype).ok_or_else(|| format!("unknown datatype {:?}", self.datatype))?;
        let value = self.value.as_ref().ok_or("value snak without value")?;
        let missing = |what: &str| format!("{} value lacks {what}", self.datatype);
        let field = |name: &str| value.get(name).and_then(json_text).ok_or_else(|| missing(name));
        Ok(match kind {
            ValueKind::Entity => {
                let id = match value {
                    Value::String(s) => s.clone(),
                    _ => field("id")?,
                };
                ObjectValue::Entity(EntityId::new(id))
            }
            ValueKind::Quantity => {
                let (amount, unit) = match value {
                    Value::Object(_) => (field("amount")?, value.get("unit").and_then(json_text)),
                    other => (json_text(other).ok_or_else(|| missing("amount"))?, None),
                };
                ObjectValue::Quantity {
                    amount: amount.parse::<Decimal>().map_err(|e| e.to_string())?,
                    unit: unit.as_deref().and_then(unit_id),
                }
            }
            ValueKind::Time => {
                let (text, precision) = match value {
                    Value::Object(_) => (field("time")?, value.get("precision").and_then(Value::as_u64)),
                    other => (json_text(other).ok_or_else(|| missing("time"))?, None),
                };
                let mut time: Date = text.parse().map_err(|e: crate::model::ModelError| e.to_string())?;
                match precision {
                    Some(p) if p <= 9 => time = Date::year_only(time.year()),
                    Some(10) => {
                        time = Date::year_month(time.year(), time.month()).map_err(|e| e.to_string())?
                    }
                    _ => {}
                }
                ObjectValue::Time { time }
            }
            ValueKind::Text => ObjectValue::Text { text: json_text(value).ok_or_else(|| missing("text"))? },
            ValueKind::MonolingualText => {
                ObjectValue::MonolingualText { text: field("text")?, language: field("language")? }
            }
            ValueKind::Url => ObjectValue::Url { url: json_text(value).ok_or_else(|| missing("url"))? },
            ValueKind::ExternalId => {
                ObjectValue::ExternalId { value: json_text(value).ok_or_else(|| missing("id"))? }
            }
            ValueKind::GlobeCoordinate => ObjectValue::GlobeCoordinate {
                latitude: field("latitude")?.parse().map_err(|e: crate::model::ModelError| e.to_string())?,
                longitude: field("longitude")?.parse().map_err(|e: crate::model::ModelError| e.to_string())?,
            },
            ValueKind::SomeValue | ValueKind::NoValue => unreachable!("handled by snaktype"),
        })
    }

    fn from_value(v: &ObjectValue) -> Self {
        let snaktype = match v {
            ObjectValue::SomeValue => "somevalue",
            ObjectValue::NoValue => "novalue",
            _ => "value",
        };
        let value = match v {
            ObjectValue::Entity(e) => Some(Value::String(e.id.to_string())),
            ObjectValue::Quantity { amount, unit } => {
                let mut m = serde_json::Map::new();
                m.insert("amount".into(), Value::String(amount.to_string()));
                if let Some(u) = unit {
                    m.insert("unit".into(), Value::String(u.id.to_string()));
                }
                Some(Value::Object(m))
            }
            ObjectValue::Time { time } => Some(Value::String(time.to_string())),
            ObjectValue::Text { text } => Some(Value::String(text.clone())),
            ObjectValue::MonolingualText { text, language } => {
                Some(serde_json::json!({"text": text, "language": language}))
            }
            ObjectValue::Url { url } => Some(Value::String(url.clone())),
            ObjectValue::ExternalId { value } => Some(Value::String(value.clone())),
            ObjectValue::GlobeCoordinate { latitude, longitude } => {
                Some(serde_json::json!({"latitude": latitude.as_str(), "longitude": longitude.as_str()}))
            }
            ObjectValue::SomeValue | ObjectValue::NoValue => None,
        };
        RawSnak { snaktype: snaktype.to_string(), datatype: kind_datatype(v.kind()).to_string(), value }
    }
}

impl RawDoc {
    fn into_doc(self) -> Result<EntityDoc, String> {
        if self.id.is_empty() {
            return Err("empty entity id".into());
        }
        let mut claims = BTreeMap::new();
        for (pid, raw_statements) in self.claims {
            if pid.is_empty() {
                return Err("empty relation id".into());
            }
            let relation = RelationId::new(pid.as_str());
            let mut statements = Vec::with_capacity(raw_statements.len());
            for raw in raw_statements {
                let object = raw.snak.to_value().map_err(|e| format!("{pid}: {e}"))?;
                let mut qualifiers = Qualifiers::new();
                for (qid, snaks) in raw.qualifiers {
                    let values = snaks
                        .iter()
                        .map(RawSnak::to_value)
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|e| format!("{pid} qualifier {qid}: {e}"))?;
                    qualifiers.insert(RelationId::new(qid), values);
                }
                statements.push(Statement { relation: relation.clone(), object, rank: raw.rank, qualifiers });
            }
            claims.insert(relation, statements);
        }
        let property_meta = self
            .property_meta
            .map(|m| -> Result<PropertyMeta, String> {
                let datatype = match m.datatype.as_deref() {
                    None => None,
                    Some(dt) => Some(datatype_kind(dt).ok_or_else(|| format!("unknown datatype {dt:?}"))?),
                };
                Ok(PropertyMeta {
                    is_meta: m.is_meta,
                    is_restrictive_qualifier: m.is_restrictive_qualifier,
                    datatype,
                    constraints: m.constraints,
                })
            })
            .transpose()?;
        Ok(EntityDoc {
            id: EntityId { id: self.id.into(), label: self.label },
            kind: self.kind,
            description: self.description,
            sitelink: self.sitelink,
            claims,
            property_meta,
        })
    }
}

impl From<&EntityDoc> for RawDoc {
    fn from(doc: &EntityDoc) -> Self {
        let claims = doc
            .claims
            .iter()
            .map(|(pid, statements)| {
                let raw = statements
                    .iter()
                    .map(|s| RawStatement {
                        rank: s.rank,
                        snak: RawSnak::from_value(&s.object),
                        qualifiers: s
                            .qualifiers
                            .iter()
                            .map(|(q, vs)| (q.id.to_string(), vs.iter().map(RawSnak::from_value).collect()))
                            .collect(),
                    })
                    .collect();
                (pid.id.to_string(), raw)
            })
            .collect();
        RawDoc {
            id: doc.id.id.to_string(),
            kind: doc.kind,
            label: doc.id.label.clone(),
            description: doc.description.clone(),
            sitelink: doc.sitelink,
            claims,
            property_meta: doc.property_meta.as_ref().map(|m| RawPropertyMeta {
                is_meta: m.is_meta,
                is_restrictive_qualifier: m.is_restrictive_qualifier,
                datatype: m.datatype.map(|k| kind_datatype(k).to_string()),
                constraints: m.constraints.clone(),
            }),
        }
    }
}

// ---------------------------------------------------------------------------
// Streaming
// ---------------------------------------------------------------------------

/// Lazy iterator over the documents of a snapshot stream.
pub struct SnapshotReader<R> {
    reader: R,
    policy: ErrorPolicy,
    line_no: usize,
    buf: String,
    skipped: Vec<SchemaError>,
    done: bool,
}

impl<R: BufRead> SnapshotReader<R> {
    pub fn new(reader: R, policy: ErrorPolicy) -> Self {
        Self { reader, policy, line_no: 0, buf: String::new(), skipped: Vec::new(), done: false }
    }

    /// Lines rejected under [`ErrorPolicy::Skip`] so far.
    pub fn skipped(&self) -> &[SchemaError] {
        &self.skipped
    }

    pub fn into_skipped(self) -> Vec<SchemaError> {
        self.skipped
    }
}

impl<R: BufRead> Iterator for SnapshotReader<R> {
    type Item = Result<EntityDoc, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        while !self.done {
            self.buf.clear();
            match self.reader.read_line(&mut self.buf) {
                Ok(0) => self.done = true,
                Ok(_) => {
                    self.line_no += 1;
                    let line = self.buf.trim();
                    let line = line.strip_suffix(',').unwrap_or(line);
                    if line.is_empty() || line == "[" || line == "]" {
                        continue;
                    }
                    match EntityDoc::from_json_line(line) {
                        Ok(doc) => return Some(Ok(doc)),
                        Err(reason) => {
                            let err = SchemaError { line: self.line_no, reason };
                            match self.policy {
                                ErrorPolicy::Skip => {
                                    log::warn!("skipping malformed snapshot {err}");
                                    self.skipped.push(err);
                                }
                                ErrorPolicy::Abort => {
                                    self.done = true;
                                    return Some(Err(err.into()));
                                }
                            }
                        }
                    }
                }
                Err(e) => {
                    self.done = true;
                    return Some(Err(e.into()));
                }
            }
        }
        None
    }
}

pub fn read_snapshot<R: BufRead>(reader: R, policy: ErrorPolicy) -> SnapshotReader<R> {
    SnapshotReader::new(reader, policy)
}

/// Opens a plain or gzip-compressed file (detected from its magic bytes).
pub fn open_maybe_gzip(path: &Path) -> io::Result<Box<dyn BufRead + Send>> {
    let mut file = File::open(path)?;
    let mut magic = [0u8; 2];
    let n = file.read(&mut magic)?;
    let head = io::Cursor::new(magic[..n].to_vec());
    let chained = head.chain(file);
    if n == 2 && magic == [0x1f, 0x8b] {
        Ok(Box::new(BufReader::with_capacity(1 << 20, MultiGzDecoder::new(chained))))
    } else {
        Ok(Box::new(BufReader::with_capacity(1 << 20, chained)))
    }
}

pub fn open_snapshot(path: &Path, policy: ErrorPolicy) -> io::Result<SnapshotReader<Box<dyn BufRead + Send>>> {
    Ok(read_snapshot(open_maybe_gzip(path)?, policy))
}

// ---------------------------------------------------------------------------
// Relation metadata
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationMeta {
    pub id: RelationId,
    pub is_meta: bool,
    pub is_functional: bool,
    pub is_temporal_functional: bool,
    pub is_restrictive_qualifier: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub datatype: Option<ValueKind>,
}

impl RelationMeta {
    /// Metadata assumed for relations absent from every metadata source.
    pub fn plain(id: RelationId) -> Self {
        Self {
            id,
            is_meta: false,
            is_functional: false,
            is_temporal_functional: false,
            is_restrictive_qualifier: false,
            datatype: None,
        }
    }

    pub fn from_property_doc(doc: &EntityDoc) -> Self {
        let (is_functional, is_temporal_functional) = temporal_functional(doc);
        let meta = doc.property_meta.clone().unwrap_or_default();
        Self {
            id: RelationId { id: doc.id.id.clone(), label: doc.id.label.clone() },
            is_meta: meta.is_meta,
            is_functional,
            is_temporal_functional,
            is_restrictive_qualifier: meta.is_restrictive_qualifier,
            datatype: meta.datatype,
        }
    }
}

/// Functional / temporal-functional test on a property's constraints.
///
/// A single-value or single-best-value constraint makes the relation
/// functional; if that same constraint lists a temporal qualifier among its
/// separators, the relation is also temporal functional.
pub fn temporal_functional(doc: &EntityDoc) -> (bool, bool) {
    let Some(meta) = &doc.property_meta else {
        return (false, false);
    };
    let mut functional = false;
    let mut temporal = false;
    for c in &meta.constraints {
        if matches!(c.kind, ConstraintKind::SingleValue | ConstraintKind::SingleBestValue) {
            functional = true;
            if c.separators.iter().any(|s| wikidata::TEMPORAL_QUALIFIERS.contains(&s.as_str())) {
                temporal = true;
            }
        }
    }
    (functional, temporal)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RelationMetaTable {
    relations: HashMap<RelationId, RelationMeta>,
}

impl RelationMetaTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, meta: RelationMeta) {
        self.relations.insert(meta.id.clone(), meta);
    }

    pub fn absorb_doc(&mut self, doc: &EntityDoc) {
        if doc.kind == DocKind::Property {
            self.insert(RelationMeta::from_property_doc(doc));
        }
    }

    /// Reads every property document of a metadata file (snapshot schema).
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, IngestError> {
        let mut table = Self::new();
        for doc in read_snapshot(reader, ErrorPolicy::Abort) {
            table.absorb_doc(&doc?);
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self, IngestError> {
        Self::from_reader(open_maybe_gzip(path)?)
    }

    pub fn get(&self, id: &RelationId) -> Option<&RelationMeta> {
        self.relations.get(id)
    }

    pub fn is_temporal_functional(&self, id: &RelationId) -> bool {
        self.get(id).is_some_and(|m| m.is_temporal_functional)
    }

    pub fn is_meta(&self, id: &RelationId) -> bool {
        self.get(id).is_some_and(|m| m.is_meta)
    }

    pub fn is_restrictive_qualifier(&self, id: &RelationId) -> bool {
        self.get(id).is_some_and(|m| m.is_restrictive_qualifier)
    }

    pub fn label(&self, id: &RelationId) -> Option<&str> {
        self.get(id).and_then(|m| m.id.label.as_deref())
    }

    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &RelationMeta> {
        self.relations.values()
    }

    /// One `RelationMeta` per line, sorted by id.
    pub fn write_jsonl<W: Write>(&self, w: W) -> io::Result<()> {
        let mut all: Vec<&RelationMeta> = self.relations.values().collect();
        all.sort_by(|a, b| a.id.cmp(&b.id));
        crate::jsonl::write(all, w)
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, IngestError> {
        let mut table = Self::new();
        for m in crate::jsonl::read::<RelationMeta, _>(r)? {
            table.insert(m);
        }
        Ok(table)
    }
}

// ---------------------------------------------------------------------------
// Popularity
// ---------------------------------------------------------------------------

/// Page-view counts per entity; absent entities count 0.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PopularityTable {
    counts: HashMap<String, u64>,
}

impl PopularityTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, entity: &str, count: u64) {
        self.counts.insert(entity.to_string(), count);
    }

    pub fn get(&self, entity: &EntityId) -> u64 {
        self.counts.get(entity.as_str()).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Parses `<entity-id>\t<count>` lines; later duplicates overwrite earlier
    /// ones. Malformed lines are returned alongside the table.
    pub fn from_reader<R: BufRead>(reader: R) -> Result<(Self, Vec<SchemaError>), IngestError> {
        let mut table = Self::new();
        let mut errors = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim_end_matches(['\r', '\n']);
            if trimmed.trim().is_empty() {
                continue;
            }
            let parsed = trimmed
                .split_once('\t')
                .filter(|(id, _)| !id.is_empty())
                .and_then(|(id, count)| count.trim().parse::<u64>().ok().map(|c| (id, c)));
            match parsed {
                Some((id, count)) => table.set(id, count),
                None => errors.push(SchemaError {
                    line: idx + 1,
                    reason: format!("expected <entity-id>\\t<count>, got {trimmed:?}"),
                }),
            }
        }
        Ok((table, errors))
    }
}

pub fn load_popularity(path: &Path) -> Result<(PopularityTable, Vec<SchemaError>), IngestError> {
    PopularityTable::from_reader(open_maybe_gzip(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    const USA: &str = r#"{"id":"Q30","kind":"item","sitelink":{"exists":true,"page_kind":"article"},"claims":{"P6":[{"rank":"normal","snaktype":"value","datatype":"wikibase-item","value":"Q6279","qualifiers":{"P580":[{"datatype":"time","value":"2021-01-20"}]}}]}}"#;

    fn property(constraints: &str) -> EntityDoc {
        let line = format!(
            r#"{{"id":"P35","kind":"property","label":"head of state","property_meta":{{"is_meta":false,"constraints":{constraints}}}}}"#
        );
        EntityDoc::from_json_line(&line).unwrap()
    }

    #[test]
    fn parses_schema_example() {
        let doc = EntityDoc::from_json_line(USA).unwrap();
        assert_eq!(doc.id, EntityId::new("Q30"));
        assert_eq!(doc.kind, DocKind::Item);
        assert!(doc.sitelink.exists);
        let stmt = &doc.claims[&RelationId::new("P6")][0];
        assert_eq!(stmt.object, ObjectValue::entity("Q6279"));
        assert_eq!(stmt.rank, Rank::Normal);
        assert_eq!(
            stmt.qualifiers[&RelationId::new("P580")],
            vec![ObjectValue::Time { time: "2021-01-20".parse().unwrap() }]
        );
    }

    #[test]
    fn empty_input_yields_nothing() {
        let mut r = read_snapshot(Cursor::new(""), ErrorPolicy::Abort);
        assert!(r.next().is_none());
    }

    #[test]
    fn preserves_order() {
        let text = (1..=3).map(|i| USA.replace("Q30", &format!("Q{i}"))).collect::<Vec<_>>().join("\n");
        let ids: Vec<String> = read_snapshot(Cursor::new(text), ErrorPolicy::Abort)
            .map(|d| d.unwrap().id.id.to_string())
            .collect();
        assert_eq!(ids, ["Q1", "Q2", "Q3"]);
    }

    #[test]
    fn skip_policy_collects_bad_lines() {
        let truncated = &USA[..USA.len() / 2];
        let text = format!("{USA}\n{truncated}\n");
        let mut reader = read_snapshot(Cursor::new(text), ErrorPolicy::Skip);
        let docs: Vec<_> = reader.by_ref().collect::<Result<_, _>>().unwrap();
        assert_eq!(docs.len(), 1);
        assert_eq!(reader.skipped().len(), 1);
        assert_eq!(reader.skipped()[0].line, 2);
    }

    #[test]
    fn abort_policy_stops_at_first_error() {
        let text = format!("{USA}\nnot json\n{USA}\n");
        let items: Vec<_> = read_snapshot(Cursor::new(text), ErrorPolicy::Abort).collect();
        assert_eq!(items.len(), 2);
        assert!(items[0].is_ok());
        match &items[1] {
            Err(IngestError::Schema(e)) => assert_eq!(e.line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn tolerates_array_framing() {
        let text = format!("[\n{USA},\n{USA}\n]\n");
        assert_eq!(read_snapshot(Cursor::new(text), ErrorPolicy::Abort).count(), 2);
    }

    #[test]
    fn value_variants() {
        let line = r#"{"id":"Q1","kind":"item","claims":{
            "P1082":[{"datatype":"quantity","value":{"amount":"+125440000","unit":"1"}}],
            "P2048":[{"datatype":"quantity","value":{"amount":"1.5","unit":"http://www.wikidata.org/entity/Q11573"}}],
            "P571":[{"datatype":"time","value":{"time":"+2022-11-30T00:00:00Z","precision":9}}],
            "P1448":[{"datatype":"monolingualtext","value":{"text":"Roma","language":"it"}}],
            "P856":[{"datatype":"url","value":"https://example.org"}],
            "P18":[{"datatype":"commonsMedia","value":"x.jpg"}],
            "P214":[{"datatype":"external-id","value":"113230702"}],
            "P625":[{"datatype":"globe-coordinate","value":{"latitude":41.9,"longitude":12.5}}],
            "P40":[{"snaktype":"novalue","datatype":"wikibase-item"}],
            "P22":[{"snaktype":"somevalue","datatype":"wikibase-item"}]
        }}"#
        .replace('\n', "");
        let doc = EntityDoc::from_json_line(&line).unwrap();
        let get = |p: &str| doc.claims[&RelationId::new(p)][0].object.clone();
        assert_eq!(get("P1082"), ObjectValue::Quantity { amount: "125440000".parse().unwrap(), unit: None });
        assert_eq!(
            get("P2048"),
            ObjectValue::Quantity { amount: "1.5".parse().unwrap(), unit: Some(EntityId::new("Q11573")) }
        );
        assert_eq!(get("P571"), ObjectValue::Time { time: Date::year_only(2022) });
        assert_eq!(get("P1448").kind(), ValueKind::MonolingualText);
        assert_eq!(get("P856").kind(), ValueKind::Url);
        assert_eq!(get("P18").kind(), ValueKind::Url);
        assert_eq!(get("P214").kind(), ValueKind::ExternalId);
        assert_eq!(get("P625").kind(), ValueKind::GlobeCoordinate);
        assert_eq!(get("P40"), ObjectValue::NoValue);
        assert_eq!(get("P22"), ObjectValue::SomeValue);
        let again = EntityDoc::from_json_line(&doc.to_json_line()).unwrap();
        assert_eq!(again, doc);
    }

    #[test]
    fn rejects_unknown_datatype() {
        let line = r#"{"id":"Q1","kind":"item","claims":{"P1":[{"datatype":"hologram","value":"x"}]}}"#;
        assert!(EntityDoc::from_json_line(line).unwrap_err().contains("hologram"));
    }

    #[test]
    fn temporal_functional_head_of_state() {
        let doc = property(r#"[{"kind":"single_best_value","separators":["P580"]}]"#);
        assert_eq!(temporal_functional(&doc), (true, true));
    }

    #[test]
    fn temporal_functional_without_constraints() {
        assert_eq!(temporal_functional(&property("[]")), (false, false));
    }

    #[test]
    fn functional_with_non_temporal_separator() {
        // P518 = "applies to part"
        let doc = property(r#"[{"kind":"single_value","separators":["P518"]}]"#);
        assert_eq!(temporal_functional(&doc), (true, false));
    }

    #[test]
    fn temporal_separator_on_other_constraint_is_ignored() {
        let doc = property(r#"[{"kind":"other","separators":["P585"]},{"kind":"single_value"}]"#);
        assert_eq!(temporal_functional(&doc), (true, false));
    }

    #[test]
    fn relation_meta_table() {
        let mut t = RelationMetaTable::new();
        t.absorb_doc(&property(r#"[{"kind":"single_best_value","separators":["P580"]}]"#));
        assert!(t.is_temporal_functional(&RelationId::new("P35")));
        assert_eq!(t.label(&RelationId::new("P35")), Some("head of state"));
        assert!(!t.is_meta(&RelationId::new("P999")));
    }

    #[test]
    fn popularity_parsing() {
        let (t, errs) = PopularityTable::from_reader(Cursor::new("Q42\t120000\n")).unwrap();
        assert_eq!(t.get(&EntityId::new("Q42")), 120000);
        assert!(errs.is_empty());

        let (t, _) = PopularityTable::from_reader(Cursor::new("Q1\t5\nQ1\t9\n")).unwrap();
        assert_eq!(t.get(&EntityId::new("Q1")), 9);
        assert_eq!(t.get(&EntityId::new("Q99")), 0);

        let (t, errs) = PopularityTable::from_reader(Cursor::new("Q1\tmany\n\nQ2 7\nQ3\t3\n")).unwrap();
        assert_eq!(errs.iter().map(|e| e.line).collect::<Vec<_>>(), [1, 3]);
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn reads_gzip() {
        use flate2::write::GzEncoder;
        use std::io::Write;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dump.jsonl.gz");
        let mut enc = GzEncoder::new(File::create(&path).unwrap(), flate2::Compression::fast());
        writeln!(enc, "{USA}\n{USA}").unwrap();
        enc.finish().unwrap();
        assert_eq!(open_snapshot(&path, ErrorPolicy::Abort).unwrap().count(), 2);
    }
}

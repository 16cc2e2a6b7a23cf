//! Domain types shared by every stage of the pipeline.

mod time;
mod value;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::hash::{Hash, Hasher};

use compact_str::CompactString;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use time::{Bound, Date, Precision, TimeInterval};
pub use value::{Decimal, ObjectValue, ValueKind};

use crate::wikidata;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("invalid date {0:?}")]
    InvalidDate(String),
    #[error("invalid decimal {0:?}")]
    InvalidDecimal(String),
    #[error("qualifier {qualifier} does not hold a time value")]
    BadTemporalQualifier { qualifier: String },
}

macro_rules! labelled_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Serialize)]
        pub struct $name {
            /// Ids are short and copied into every triple; kept inline.
            pub id: CompactString,
            #[serde(default, skip_serializing_if = "Option::is_none")]
            pub label: Option<String>,
        }

        impl $name {
            pub fn new(id: impl Into<CompactString>) -> Self {
                Self { id: id.into(), label: None }
            }

            pub fn labelled(id: impl Into<CompactString>, label: impl Into<String>) -> Self {
                Self { id: id.into(), label: Some(label.into()) }
            }

            pub fn as_str(&self) -> &str {
                &self.id
            }

            /// The label when known, the id otherwise.
            pub fn display_name(&self) -> &str {
                self.label.as_deref().unwrap_or(&self.id)
            }
        }

        // Accepts a bare id string as well as the `{id, label}` object.
        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                #[derive(Deserialize)]
                #[serde(untagged)]
                enum Repr {
                    Bare(CompactString),
                    Full {
                        id: CompactString,
                        #[serde(default)]
                        label: Option<String>,
                    },
                }
                Ok(match Repr::deserialize(deserializer)? {
                    Repr::Bare(id) => Self { id, label: None },
                    Repr::Full { id, label } => Self { id, label },
                })
            }
        }

        impl PartialEq for $name {
            fn eq(&self, other: &Self) -> bool {
                self.id == other.id
            }
        }

        impl Eq for $name {}

        impl Hash for $name {
            fn hash<H: Hasher>(&self, state: &mut H) {
                self.id.hash(state);
            }
        }

        impl PartialOrd for $name {
            fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
                Some(self.cmp(other))
            }
        }

        impl Ord for $name {
            fn cmp(&self, other: &Self) -> Ordering {
                self.id.cmp(&other.id)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.id)
            }
        }

        impl From<&str> for $name {
            fn from(id: &str) -> Self {
                Self::new(id)
            }
        }
    };
}

labelled_id!(
    /// Identifier of an item such as `Q42`. Equality and hashing use the id only.
    EntityId
);
labelled_id!(
    /// Identifier of a property such as `P35`. Equality and hashing use the id only.
    RelationId
);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rank {
    Preferred,
    Normal,
    Deprecated,
}

pub type Qualifiers = BTreeMap<RelationId, Vec<ObjectValue>>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Statement {
    pub relation: RelationId,
    pub object: ObjectValue,
    pub rank: Rank,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub qualifiers: Qualifiers,
}

/// A fact with its validity interval. Diffing identifies a triple by
/// `(subject, relation, object)`; interval and rank are payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triple {
    pub subject: EntityId,
    pub relation: RelationId,
    pub object: ObjectValue,
    #[serde(default)]
    pub interval: TimeInterval,
    pub rank: Rank,
}

impl Triple {
    pub fn key(&self) -> TripleKey {
        TripleKey {
            subject: self.subject.clone(),
            relation: self.relation.clone(),
            object: self.object.clone(),
        }
    }

    pub fn group_key(&self) -> GroupKey {
        GroupKey { subject: self.subject.clone(), relation: self.relation.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TripleKey {
    pub subject: EntityId,
    pub relation: RelationId,
    pub object: ObjectValue,
}

/// Key of an (s, r)-group.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupKey {
    pub subject: EntityId,
    pub relation: RelationId,
}

impl GroupKey {
    pub fn new(subject: impl Into<EntityId>, relation: impl Into<RelationId>) -> Self {
        Self { subject: subject.into(), relation: relation.into() }
    }
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.subject, self.relation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    New,
    Obsolete,
    Static,
    Ignore,
    Unknown,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::New => "new",
            Label::Obsolete => "obsolete",
            Label::Static => "static",
            Label::Ignore => "ignore",
            Label::Unknown => "unknown",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scenario {
    ReplaceObject,
    Archive,
    AddObject,
    AddRelation,
    AddEntity,
    Other,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Builds the validity interval of a statement from its temporal qualifiers.
///
/// Start/end qualifiers take precedence over point-in-time. When a qualifier
/// carries several values, the first one is used.
pub fn interval_from_qualifiers(qualifiers: &Qualifiers) -> Result<TimeInterval, ModelError> {
    let first_date = |pid: &str| -> Result<Option<Date>, ModelError> {
        match qualifiers.get(&RelationId::new(pid)).and_then(|v| v.first()) {
            None => Ok(None),
            Some(ObjectValue::Time { time }) => Ok(Some(*time)),
            Some(_) => Err(ModelError::BadTemporalQualifier { qualifier: pid.to_string() }),
        }
    };
    let start = first_date(wikidata::START_TIME)?;
    let end = first_date(wikidata::END_TIME)?;
    if start.is_some() || end.is_some() {
        return Ok(TimeInterval::new(
            start.map_or(Bound::NegInf, Bound::At),
            end.map_or(Bound::PosInf, Bound::At),
        ));
    }
    Ok(match first_date(wikidata::POINT_IN_TIME)? {
        Some(t) => TimeInterval::from_point(t),
        None => TimeInterval::UNBOUNDED,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn time(s: &str) -> ObjectValue {
        ObjectValue::Time { time: s.parse().unwrap() }
    }

    fn quals(entries: &[(&str, ObjectValue)]) -> Qualifiers {
        let mut q = Qualifiers::new();
        for (pid, v) in entries {
            q.entry(RelationId::new(*pid)).or_default().push(v.clone());
        }
        q
    }

    fn at(s: &str) -> Bound {
        Bound::At(s.parse().unwrap())
    }

    #[test]
    fn start_and_end() {
        let q = quals(&[
            (wikidata::START_TIME, time("1952-02-06")),
            (wikidata::END_TIME, time("2022-09-08")),
        ]);
        let iv = interval_from_qualifiers(&q).unwrap();
        assert_eq!(iv, TimeInterval::new(at("1952-02-06"), at("2022-09-08")));
    }

    #[test]
    fn no_qualifiers_is_unbounded() {
        let iv = interval_from_qualifiers(&Qualifiers::new()).unwrap();
        assert_eq!((iv.start, iv.end), (Bound::NegInf, Bound::PosInf));
    }

    #[test]
    fn point_in_time_opens_to_infinity() {
        let q = quals(&[(wikidata::POINT_IN_TIME, time("2021-07-01"))]);
        let iv = interval_from_qualifiers(&q).unwrap();
        assert_eq!((iv.start, iv.end), (at("2021-07-01"), Bound::PosInf));
        assert_eq!(iv.point(), Some("2021-07-01".parse().unwrap()));
    }

    #[test]
    fn start_end_win_over_point_in_time() {
        let q = quals(&[
            (wikidata::POINT_IN_TIME, time("2021-07-01")),
            (wikidata::END_TIME, time("2022-01-01")),
        ]);
        let iv = interval_from_qualifiers(&q).unwrap();
        assert_eq!(iv, TimeInterval::new(Bound::NegInf, at("2022-01-01")));
        assert!(!iv.point_in_time);
    }

    #[test]
    fn malformed_time_names_qualifier() {
        let q = quals(&[(wikidata::START_TIME, ObjectValue::Text { text: "soon".into() })]);
        assert_eq!(
            interval_from_qualifiers(&q),
            Err(ModelError::BadTemporalQualifier { qualifier: "P580".into() })
        );
    }

    #[test]
    fn ids_compare_by_id_only() {
        assert_eq!(EntityId::labelled("Q42", "Douglas Adams"), EntityId::new("Q42"));
        let a = Triple {
            subject: "Q1".into(),
            relation: "P1".into(),
            object: time("2020-01-01"),
            interval: TimeInterval::UNBOUNDED,
            rank: Rank::Normal,
        };
        let mut b = a.clone();
        b.interval = TimeInterval::from_point("2021-01-01".parse().unwrap());
        b.rank = Rank::Preferred;
        assert_ne!(a, b);
        assert_eq!(a.key(), b.key());
    }
}

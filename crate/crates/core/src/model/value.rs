use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{Date, EntityId, ModelError};

/// Exact decimal number kept in canonical textual form.
///
/// Canonicalisation drops a leading `+`, leading integer zeros and trailing
/// fractional zeros, so `+1.50` and `1.5` are equal while no floating-point
/// rounding is ever involved.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Decimal(String);

impl Decimal {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl FromStr for Decimal {
    type Err = ModelError;

    fn from_str(raw: &str) -> Result<Self, Self::Err> {
        let bad = || ModelError::InvalidDecimal(raw.to_string());
        let s = raw.trim();
        let (negative, body) = match s.as_bytes().first() {
            Some(b'-') => (true, &s[1..]),
            Some(b'+') => (false, &s[1..]),
            _ => (false, s),
        };
        let (int_part, frac_part) = match body.split_once('.') {
            Some((i, f)) => (i, f),
            None => (body, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(bad());
        }
        if !int_part.bytes().chain(frac_part.bytes()).all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let int_part = int_part.trim_start_matches('0');
        let frac_part = frac_part.trim_end_matches('0');
        let mut out = String::with_capacity(s.len());
        let zero = int_part.is_empty() && frac_part.is_empty();
        if negative && !zero {
            out.push('-');
        }
        out.push_str(if int_part.is_empty() { "0" } else { int_part });
        if !frac_part.is_empty() {
            out.push('.');
            out.push_str(frac_part);
        }
        Ok(Decimal(out))
    }
}

impl fmt::Display for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Serialize for Decimal {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Decimal {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Object of a statement.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ObjectValue {
    Entity(EntityId),
    Quantity {
        amount: Decimal,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        unit: Option<EntityId>,
    },
    Time {
        time: Date,
    },
    Text {
        text: String,
    },
    MonolingualText {
        text: String,
        language: String,
    },
    Url {
        url: String,
    },
    ExternalId {
        value: String,
    },
    GlobeCoordinate {
        latitude: Decimal,
        longitude: Decimal,
    },
    SomeValue,
    NoValue,
}

/// Variant tag of an [`ObjectValue`], used as a relation's declared datatype.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Entity,
    Quantity,
    Time,
    Text,
    MonolingualText,
    Url,
    ExternalId,
    GlobeCoordinate,
    SomeValue,
    NoValue,
}

impl ObjectValue {
    pub fn entity(id: &str) -> Self {
        ObjectValue::Entity(EntityId::new(id))
    }

    pub fn kind(&self) -> ValueKind {
        match self {
            ObjectValue::Entity(_) => ValueKind::Entity,
            ObjectValue::Quantity { .. } => ValueKind::Quantity,
            ObjectValue::Time { .. } => ValueKind::Time,
            ObjectValue::Text { .. } => ValueKind::Text,
            ObjectValue::MonolingualText { .. } => ValueKind::MonolingualText,
            ObjectValue::Url { .. } => ValueKind::Url,
            ObjectValue::ExternalId { .. } => ValueKind::ExternalId,
            ObjectValue::GlobeCoordinate { .. } => ValueKind::GlobeCoordinate,
            ObjectValue::SomeValue => ValueKind::SomeValue,
            ObjectValue::NoValue => ValueKind::NoValue,
        }
    }

    pub fn as_entity(&self) -> Option<&EntityId> {
        match self {
            ObjectValue::Entity(e) => Some(e),
            _ => None,
        }
    }

    pub fn as_date(&self) -> Option<Date> {
        match self {
            ObjectValue::Time { time } => Some(*time),
            _ => None,
        }
    }

    /// Canonical JSON text, used for deterministic tie-breaking.
    pub fn sort_key(&self) -> String {
        serde_json::to_string(&ObjectValue::strip_labels(self)).unwrap_or_default()
    }

    fn strip_labels(v: &ObjectValue) -> ObjectValue {
        match v {
            ObjectValue::Entity(e) => ObjectValue::Entity(EntityId::new(e.id.clone())),
            ObjectValue::Quantity { amount, unit } => ObjectValue::Quantity {
                amount: amount.clone(),
                unit: unit.as_ref().map(|u| EntityId::new(u.id.clone())),
            },
            other => other.clone(),
        }
    }

    /// Natural-language rendering used in update sentences and clozes.
    pub fn to_words(&self) -> String {
        match self {
            ObjectValue::Entity(e) => e.display_name().to_string(),
            ObjectValue::Quantity { amount, unit } => match unit {
                Some(u) if u.label.is_some() => format!("{amount} {}", u.display_name()),
                _ => amount.to_string(),
            },
            ObjectValue::Time { time } => time.to_words(),
            ObjectValue::Text { text } | ObjectValue::MonolingualText { text, .. } => text.clone(),
            ObjectValue::Url { url } => url.clone(),
            ObjectValue::ExternalId { value } => value.clone(),
            ObjectValue::GlobeCoordinate { latitude, longitude } => format!("{latitude}, {longitude}"),
            ObjectValue::SomeValue => "some value".to_string(),
            ObjectValue::NoValue => "no value".to_string(),
        }
    }
}

//! Relation templates with a subject slot and a final object slot.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::ingest::{IngestError, SchemaError};
use crate::model::RelationId;

pub const SUBJ: &str = "SUBJ";
pub const OBJ: &str = "OBJ";
pub const MAX_TEMPLATES: usize = 5;

const TERMINAL_PUNCTUATION: &[char] = &['.', '!', '?', ';', ':', ','];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Template {
    pub relation: RelationId,
    #[serde(rename = "template")]
    pub text: String,
    pub frequency: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum Rejection {
    #[error("empty label")]
    EmptyLabel,
    #[error("sentence does not end with the object")]
    ObjectNotFinal,
    #[error("subject does not occur before the object")]
    SubjectMissing,
    #[error("sentence already contains a slot marker")]
    SlotCollision,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RenderError {
    #[error("missing {0} label")]
    MissingLabel(&'static str),
    #[error("malformed template {0:?}")]
    Malformed(String),
}

/// Collapses runs of whitespace and strips trailing punctuation.
pub fn normalize(text: &str) -> String {
    let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed.trim_end_matches(|c: char| TERMINAL_PUNCTUATION.contains(&c) || c.is_whitespace()).to_string()
}

/// Turns a verbalization of `(s, r, o)` into a template: the sentence must end
/// with the object label and mention the subject label before it. Matching is
/// exact and case-sensitive; the first subject occurrence becomes the slot.
pub fn extract_template(sentence: &str, subject: &str, object: &str) -> Result<String, Rejection> {
    let (subject, object) = (subject.trim(), object.trim());
    if subject.is_empty() || object.is_empty() {
        return Err(Rejection::EmptyLabel);
    }
    let s = normalize(sentence);
    let object = normalize(object);
    let object = object.as_str();
    if s.contains(SUBJ) || s.contains(OBJ) {
        return Err(Rejection::SlotCollision);
    }
    let prefix = s.strip_suffix(object).ok_or(Rejection::ObjectNotFinal)?;
    let at = prefix.find(subject).ok_or(Rejection::SubjectMissing)?;
    let mut text = String::with_capacity(prefix.len() + 8);
    text.push_str(&prefix[..at]);
    text.push_str(SUBJ);
    text.push_str(&prefix[at + subject.len()..]);
    text.push_str(OBJ);
    Ok(text)
}

/// Exactly one subject slot, and the object slot last.
pub fn is_valid_template(text: &str) -> bool {
    let t = normalize(text);
    t.matches(SUBJ).count() == 1 && t.matches(OBJ).count() == 1 && t.ends_with(OBJ)
}

/// Counts identical normalised templates and keeps the most frequent ones,
/// ties broken by text.
pub fn select_templates(relation: &RelationId, candidates: &[String]) -> Vec<Template> {
    let mut counts: HashMap<String, u64> = HashMap::new();
    for c in candidates {
        *counts.entry(normalize(c)).or_default() += 1;
    }
    top_templates(
        counts.into_iter().map(|(text, frequency)| Template { relation: relation.clone(), text, frequency }).collect(),
    )
}

/// The `MAX_TEMPLATES` best of already-counted templates of one relation.
pub fn top_templates(mut templates: Vec<Template>) -> Vec<Template> {
    templates.retain(|t| is_valid_template(&t.text));
    templates.sort_by(|a, b| b.frequency.cmp(&a.frequency).then_with(|| a.text.cmp(&b.text)));
    templates.truncate(MAX_TEMPLATES);
    templates
}

/// Fills the template. With an object this is the update sentence; without
/// one it is the cloze, cut just before the object slot (one space dropped).
pub fn render(template: &str, subject: &str, object: Option<&str>) -> Result<String, RenderError> {
    if subject.trim().is_empty() {
        return Err(RenderError::MissingLabel("subject"));
    }
    let t = normalize(template);
    let prefix = t.strip_suffix(OBJ).ok_or_else(|| RenderError::Malformed(template.to_string()))?;
    if prefix.matches(SUBJ).count() != 1 {
        return Err(RenderError::Malformed(template.to_string()));
    }
    let filled = prefix.replacen(SUBJ, subject.trim(), 1);
    match object {
        Some(o) if o.trim().is_empty() => Err(RenderError::MissingLabel("object")),
        Some(o) => Ok(format!("{filled}{}", o.trim())),
        None => Ok(filled.strip_suffix(' ').map(str::to_string).unwrap_or(filled)),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerbalizationSet {
    pub update_sentence: String,
    pub cloze: String,
    pub alt_clozes: Vec<String>,
}

/// Selected templates per relation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TemplateStore {
    by_relation: BTreeMap<RelationId, Vec<Template>>,
}

impl TemplateStore {
    /// Groups by relation and keeps each relation's top templates. Repeated
    /// lines for the same text add up.
    pub fn from_templates(templates: impl IntoIterator<Item = Template>) -> Self {
        let mut merged: BTreeMap<RelationId, BTreeMap<String, u64>> = BTreeMap::new();
        for t in templates {
            *merged.entry(t.relation).or_default().entry(normalize(&t.text)).or_default() += t.frequency;
        }
        let by_relation = merged
            .into_iter()
            .map(|(r, texts)| {
                let ts = texts.into_iter().map(|(text, frequency)| Template { relation: r.clone(), text, frequency });
                let top = top_templates(ts.collect());
                (r, top)
            })
            .filter(|(_, ts)| !ts.is_empty())
            .collect();
        Self { by_relation }
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, IngestError> {
        let mut all = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            all.push(serde_json::from_str::<Template>(&line).map_err(|e| SchemaError { line: i + 1, reason: e.to_string() })?);
        }
        Ok(Self::from_templates(all))
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for t in self.by_relation.values().flatten() {
            serde_json::to_writer(&mut w, t)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn templates(&self, relation: &RelationId) -> &[Template] {
        self.by_relation.get(relation).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.by_relation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_relation.is_empty()
    }

    /// Update sentence and cloze from the most frequent template, the other
    /// templates' clozes as alternatives. `None` when the relation has no
    /// template.
    pub fn verbalize(
        &self,
        relation: &RelationId,
        subject: &str,
        object: &str,
    ) -> Result<Option<VerbalizationSet>, RenderError> {
        let Some((primary, rest)) = self.templates(relation).split_first() else {
            return Ok(None);
        };
        Ok(Some(VerbalizationSet {
            update_sentence: render(&primary.text, subject, Some(object))?,
            cloze: render(&primary.text, subject, None)?,
            alt_clozes: rest.iter().map(|t| render(&t.text, subject, None)).collect::<Result<_, _>>()?,
        }))
    }

    /// Cloze of the most frequent template.
    pub fn cloze(&self, relation: &RelationId, subject: &str) -> Option<String> {
        let t = self.templates(relation).first()?;
        render(&t.text, subject, None).ok()
    }
}

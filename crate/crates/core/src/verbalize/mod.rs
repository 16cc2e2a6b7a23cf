//! Natural-language rendering of triples: templates, clozes and their source.

pub mod llm;
pub mod sampling;
pub mod template;

pub use llm::{ChatClient, HttpChatClient, LlmError, PromptInputs, TemplateRequest};
pub use sampling::sample_triples_for_templates;
pub use template::{extract_template, render, select_templates, Template, TemplateStore, VerbalizationSet};

use std::collections::HashMap;

use crate::ingest::RelationMetaTable;
use crate::model::{EntityId, ObjectValue, RelationId, Triple};
use crate::preprocess::Catalog;

/// Subject label, falling back to the id.
pub fn subject_words(subject: &EntityId, catalog: &Catalog) -> String {
    catalog.label(subject).unwrap_or(subject.as_str()).to_string()
}

/// Object in words, entity objects (and units) labelled from the catalog.
pub fn object_words(object: &ObjectValue, catalog: &Catalog) -> String {
    match object {
        ObjectValue::Entity(e) => subject_words(e, catalog),
        ObjectValue::Quantity { amount, unit: Some(u) } => {
            ObjectValue::Quantity { amount: amount.clone(), unit: Some(catalog.labelled(u)) }.to_words()
        }
        other => other.to_words(),
    }
}

pub fn relation_words(relation: &RelationId, meta: &RelationMetaTable) -> String {
    meta.label(relation).unwrap_or(relation.as_str()).to_string()
}

/// Prompt inputs for each sampled triple. The example triple of a relation
/// is another sample of the same relation when there is one.
pub fn build_template_requests(samples: &[Triple], catalog: &Catalog, meta: &RelationMetaTable) -> Vec<TemplateRequest> {
    let describe = |o: &ObjectValue| match o {
        ObjectValue::Entity(e) => catalog.description(e).unwrap_or_default().to_string(),
        _ => String::new(),
    };
    // First two samples of each relation; one of them has another subject.
    let mut firsts: HashMap<&RelationId, Vec<&Triple>> = HashMap::new();
    for t in samples {
        let v = firsts.entry(&t.relation).or_default();
        if v.len() < 2 && v.iter().all(|x| x.subject != t.subject) {
            v.push(t);
        }
    }
    samples
        .iter()
        .map(|t| {
            let example = firsts[&t.relation].iter().find(|x| x.subject != t.subject).copied().unwrap_or(t);
            let relation = relation_words(&t.relation, meta);
            TemplateRequest {
                relation: t.relation.clone(),
                inputs: PromptInputs {
                    subject: subject_words(&t.subject, catalog),
                    object: object_words(&t.object, catalog),
                    subject_def: catalog.description(&t.subject).unwrap_or_default().to_string(),
                    relation_def: relation.clone(),
                    object_def: describe(&t.object),
                    example_subject: subject_words(&example.subject, catalog),
                    example_object: object_words(&example.object, catalog),
                    relation,
                },
            }
        })
        .collect()
}

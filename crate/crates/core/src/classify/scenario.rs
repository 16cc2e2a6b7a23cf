//! Update scenarios of classified groups and the replacement-only subset.

use super::{ClassifiedGroup, PipelineConfig};
use crate::hashing::digest_fields;
use crate::model::{GroupKey, Label, Scenario};

/// Scenario of a filtered group. Checked in a fixed order so that mixed
/// groups fall through to `Other`.
pub fn type_scenario(labels: &[Label], subject_in_e_plus: bool) -> Scenario {
    let count = |l: Label| labels.iter().filter(|x| **x == l).count();
    let (new, obsolete, stat) = (count(Label::New), count(Label::Obsolete), count(Label::Static));
    if subject_in_e_plus {
        Scenario::AddEntity
    } else if labels.len() == 2 && new == 1 && obsolete == 1 {
        Scenario::ReplaceObject
    } else if !labels.is_empty() && obsolete == labels.len() {
        Scenario::Archive
    } else if !labels.is_empty() && new == labels.len() {
        Scenario::AddRelation
    } else if new >= 1 && stat >= 1 && obsolete == 0 {
        Scenario::AddObject
    } else {
        Scenario::Other
    }
}

fn sample_rank(key: &GroupKey, seed: u64) -> [u8; 32] {
    digest_fields([&seed.to_le_bytes()[..], key.subject.as_str().as_bytes(), key.relation.as_str().as_bytes()])
}

/// Keeps the replacement groups, undersampling population updates.
///
/// Population groups are ranked by a seeded hash of their key and the
/// `ceil(m / factor)` lowest survive, so the kept set depends only on the
/// population groups themselves. The result is sorted by descending subject
/// popularity, then by key.
pub fn extract_replacement_subset(groups: &[ClassifiedGroup], cfg: &PipelineConfig) -> Vec<ClassifiedGroup> {
    let replacements: Vec<&ClassifiedGroup> =
        groups.iter().filter(|g| g.scenario == Scenario::ReplaceObject).collect();
    let (mut population, mut kept): (Vec<&ClassifiedGroup>, Vec<&ClassifiedGroup>) =
        replacements.into_iter().partition(|g| g.key.relation == cfg.population_relation);

    let factor = cfg.population_undersample_factor.max(1) as usize;
    let quota = population.len().div_ceil(factor);
    population.sort_by_cached_key(|g| (sample_rank(&g.key, cfg.random_seed), g.key.clone()));
    kept.extend(population.into_iter().take(quota));

    let mut out: Vec<ClassifiedGroup> = kept.into_iter().cloned().collect();
    out.sort_by(|a, b| b.subject_popularity.cmp(&a.subject_popularity).then_with(|| a.key.cmp(&b.key)));
    out
}

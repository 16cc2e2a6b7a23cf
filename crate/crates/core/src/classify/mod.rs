//! New-entity detection, triple labelling and group filtering.

mod rules;
mod scenario;

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use rules::{classify_triple, first_matching_rule, lint_rules, LintReport, Rule, TripleContext, RULES};
pub use scenario::{extract_replacement_subset, type_scenario};

use crate::diff::{group_stats, DiffEntry, DiffResult, GroupStats, Membership, OccurrenceIndex};
use crate::ingest::{IngestError, PopularityTable, RelationMetaTable};
use crate::model::{Bound, Date, EntityId, GroupKey, Label, RelationId, Scenario, Triple};
use crate::wikidata;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("t_old ({t_old}) must be earlier than t_new ({t_new})")]
    WindowOrder { t_old: Date, t_new: Date },
    #[error("population_undersample_factor must be positive")]
    ZeroFactor,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub t_old: Date,
    pub t_new: Date,
    pub creation_relations: BTreeSet<RelationId>,
    pub death_relations: BTreeSet<RelationId>,
    pub population_relation: RelationId,
    pub population_undersample_factor: u32,
    pub random_seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            t_old: Date::ymd(2021, 1, 4).expect("valid date"),
            t_new: Date::ymd(2023, 2, 27).expect("valid date"),
            creation_relations: wikidata::CREATION_RELATIONS.iter().map(|r| RelationId::new(*r)).collect(),
            death_relations: wikidata::DEATH_RELATIONS.iter().map(|r| RelationId::new(*r)).collect(),
            population_relation: RelationId::new(wikidata::POPULATION),
            population_undersample_factor: 14,
            random_seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !Bound::At(self.t_old).lt_date(self.t_new) {
            return Err(ConfigError::WindowOrder { t_old: self.t_old, t_new: self.t_new });
        }
        if self.population_undersample_factor == 0 {
            return Err(ConfigError::ZeroFactor);
        }
        Ok(())
    }
}

/// Entities created between the two snapshots.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewEntitySet {
    pub members: BTreeSet<EntityId>,
}

impl NewEntitySet {
    pub fn contains(&self, e: &EntityId) -> bool {
        self.members.contains(e)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// An entity is new when it only shows up in F⁺ and has a creation date
/// (inception, birth, ...) after `t_old`.
pub fn detect_new_entities(diff: &DiffResult, cfg: &PipelineConfig) -> NewEntitySet {
    detect_with_index(diff, &OccurrenceIndex::build(diff), cfg)
}

fn detect_with_index(diff: &DiffResult, idx: &OccurrenceIndex, cfg: &PipelineConfig) -> NewEntitySet {
    let only_new = |e: &EntityId| {
        idx.occurs_in(e, Membership::NewOnly)
            && !idx.occurs_in(e, Membership::OldOnly)
            && !idx.occurs_in(e, Membership::Both)
    };
    let members = diff
        .entries()
        .filter(|(k, _)| cfg.creation_relations.contains(&k.relation))
        .filter(|(_, e)| e.object.as_date().is_some_and(|d| Bound::At(d).gt_date(cfg.t_old)))
        .filter(|(k, _)| only_new(&k.subject))
        .map(|(k, _)| k.subject.clone())
        .collect();
    NewEntitySet { members }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledTriple {
    pub triple: Triple,
    pub membership: Membership,
    pub label: Label,
    /// Rule that decided the label; absent when no rule fired or the
    /// post-pass relabelled the triple.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<u8>,
}

/// A labelled (s, r)-group before filtering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledGroup {
    pub key: GroupKey,
    pub stats: GroupStats,
    pub temporal_functional: bool,
    pub subject_in_e_plus: bool,
    pub triples: Vec<LabeledTriple>,
}

impl LabeledGroup {
    pub fn labels(&self) -> Vec<Label> {
        self.triples.iter().map(|t| t.label).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifiedGroup {
    pub key: GroupKey,
    pub triples: Vec<LabeledTriple>,
    pub scenario: Scenario,
    pub subject_popularity: u64,
}

impl ClassifiedGroup {
    pub fn labels(&self) -> Vec<Label> {
        self.triples.iter().map(|t| t.label).collect()
    }

    pub fn with_label(&self, label: Label) -> impl Iterator<Item = &LabeledTriple> {
        self.triples.iter().filter(move |t| t.label == label)
    }
}

/// Read-only inputs shared by every group.
pub struct Classifier<'a> {
    pub cfg: &'a PipelineConfig,
    pub meta: &'a RelationMetaTable,
    pub e_plus: &'a NewEntitySet,
    pub occurrences: &'a OccurrenceIndex,
}

impl Classifier<'_> {
    /// Labels every occurrence of every entry. Entries present in the new
    /// snapshot are judged on their new-side interval.
    pub fn label_group(&self, key: &GroupKey, entries: &[DiffEntry]) -> LabeledGroup {
        let stats = group_stats(entries);
        let temporal_functional = self.meta.is_temporal_functional(&key.relation);
        let subject_in_e_plus = self.e_plus.contains(&key.subject);
        let subject_in_f_minus = self.occurrences.occurs_in(&key.subject, Membership::OldOnly);
        let relation_is_death = self.cfg.death_relations.contains(&key.relation);
        let mut triples = Vec::with_capacity(entries.len());
        for e in entries {
            let object_in_e_plus = e.object.as_entity().is_some_and(|o| self.e_plus.contains(o));
            for occ in e.current() {
                let ctx = TripleContext {
                    object: e.object.clone(),
                    interval: occ.interval,
                    membership: e.membership,
                    stats,
                    subject_in_e_plus,
                    subject_in_f_minus,
                    relation_is_death,
                    relation_is_temporal_functional: temporal_functional,
                    object_in_e_plus,
                };
                let rule = first_matching_rule(&ctx, self.cfg);
                let label = rule.map_or(Label::Unknown, |n| RULES[n as usize - 1].label);
                triples.push(LabeledTriple {
                    triple: Triple {
                        subject: key.subject.clone(),
                        relation: key.relation.clone(),
                        object: e.object.clone(),
                        interval: occ.interval,
                        rank: occ.rank,
                    },
                    membership: e.membership,
                    label,
                    rule,
                });
            }
        }
        LabeledGroup { key: key.clone(), stats, temporal_functional, subject_in_e_plus, triples }
    }
}

/// In a two-triple temporal-functional group where one triple is new, the
/// other one, if it only exists in the old snapshot, is obsolete.
pub fn post_pass_obsolete(group: &mut LabeledGroup) {
    if !group.temporal_functional || group.stats.n != 2 || group.triples.len() != 2 {
        return;
    }
    for (a, b) in [(0, 1), (1, 0)] {
        if group.triples[a].label == Label::New && group.triples[b].membership == Membership::OldOnly {
            let t = &mut group.triples[b];
            if t.label != Label::Obsolete {
                t.label = Label::Obsolete;
                t.rule = None;
            }
            return;
        }
    }
}

/// Collapses objects that appear more than once in a group. Returns `None`
/// when the labels of some repeated object cannot be reconciled.
pub fn resolve_anomalies(mut group: LabeledGroup) -> Option<LabeledGroup> {
    let mut positions: BTreeMap<&crate::model::ObjectValue, Vec<usize>> = BTreeMap::new();
    for (i, t) in group.triples.iter().enumerate() {
        positions.entry(&t.triple.object).or_default().push(i);
    }
    let mut drop = vec![false; group.triples.len()];
    for idxs in positions.values().filter(|v| v.len() > 1) {
        let labels: Vec<Label> = idxs.iter().map(|&i| group.triples[i].label).collect();
        let keep = if labels.iter().all(|l| *l == Label::Obsolete) {
            idxs[0]
        } else if labels.iter().all(|l| matches!(l, Label::New | Label::Static)) {
            let pos = labels.iter().position(|l| *l == Label::Static).unwrap_or(0);
            idxs[pos]
        } else {
            return None;
        };
        for &i in idxs {
            drop[i] = i != keep;
        }
    }
    let mut i = 0;
    group.triples.retain(|_| {
        i += 1;
        !drop[i - 1]
    });
    Some(group)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterOutcome {
    Kept,
    DroppedUnknown,
    DroppedNoChange,
}

/// Drops groups with an unknown triple, removes ignored triples, then drops
/// groups left without a new or obsolete triple.
pub fn filter_group(group: &mut LabeledGroup) -> FilterOutcome {
    if group.triples.iter().any(|t| t.label == Label::Unknown) {
        return FilterOutcome::DroppedUnknown;
    }
    group.triples.retain(|t| t.label != Label::Ignore);
    if group.triples.iter().any(|t| matches!(t.label, Label::New | Label::Obsolete)) {
        FilterOutcome::Kept
    } else {
        FilterOutcome::DroppedNoChange
    }
}

pub fn filter_groups(groups: Vec<LabeledGroup>) -> Vec<LabeledGroup> {
    groups
        .into_iter()
        .filter_map(|mut g| (filter_group(&mut g) == FilterOutcome::Kept).then_some(g))
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifyStats {
    pub groups: u64,
    pub new_entities: u64,
    pub labels: BTreeMap<Label, u64>,
    /// Triples decided by each rule; key 0 counts triples no rule fired on.
    pub rule_hits: BTreeMap<u8, u64>,
    pub deleted_anomalies: u64,
    pub dropped_unknown: u64,
    pub dropped_no_change: u64,
    pub kept: u64,
    pub scenarios: BTreeMap<Scenario, u64>,
}

#[derive(Debug, Clone, Default)]
pub struct ClassifyOutput {
    pub groups: Vec<ClassifiedGroup>,
    pub new_entities: NewEntitySet,
    pub stats: ClassifyStats,
}

enum Fate {
    Kept(ClassifiedGroup),
    Anomaly,
    Filtered(FilterOutcome),
}

/// Runs detection, labelling, post-pass, anomaly resolution, filtering and
/// scenario typing over a whole diff. Output follows the diff's key order.
pub fn classify_diff(
    diff: &DiffResult,
    meta: &RelationMetaTable,
    popularity: &PopularityTable,
    cfg: &PipelineConfig,
) -> ClassifyOutput {
    let occurrences = OccurrenceIndex::build(diff);
    let e_plus = detect_with_index(diff, &occurrences, cfg);
    let classifier = Classifier { cfg, meta, e_plus: &e_plus, occurrences: &occurrences };

    let groups: Vec<(&GroupKey, &Vec<DiffEntry>)> = diff.groups.iter().collect();
    let results: Vec<(LabeledGroup, Fate)> = groups
        .par_iter()
        .map(|(key, entries)| {
            let mut labeled = classifier.label_group(key, entries);
            post_pass_obsolete(&mut labeled);
            let snapshot = labeled.clone();
            let fate = match resolve_anomalies(labeled) {
                None => Fate::Anomaly,
                Some(mut g) => match filter_group(&mut g) {
                    FilterOutcome::Kept => {
                        let labels = g.labels();
                        Fate::Kept(ClassifiedGroup {
                            scenario: type_scenario(&labels, g.subject_in_e_plus),
                            subject_popularity: popularity.get(&g.key.subject),
                            key: g.key,
                            triples: g.triples,
                        })
                    }
                    other => Fate::Filtered(other),
                },
            };
            (snapshot, fate)
        })
        .collect();

    let mut stats = ClassifyStats { new_entities: e_plus.len() as u64, ..Default::default() };
    let mut kept = Vec::new();
    for (labeled, fate) in results {
        stats.groups += 1;
        for t in &labeled.triples {
            *stats.labels.entry(t.label).or_default() += 1;
            *stats.rule_hits.entry(t.rule.unwrap_or(0)).or_default() += 1;
        }
        match fate {
            Fate::Kept(g) => {
                stats.kept += 1;
                *stats.scenarios.entry(g.scenario).or_default() += 1;
                kept.push(g);
            }
            Fate::Anomaly => stats.deleted_anomalies += 1,
            Fate::Filtered(FilterOutcome::DroppedUnknown) => stats.dropped_unknown += 1,
            Fate::Filtered(_) => stats.dropped_no_change += 1,
        }
    }
    ClassifyOutput { groups: kept, new_entities: e_plus, stats }
}

pub fn write_groups_jsonl<W: Write>(groups: &[ClassifiedGroup], w: W) -> std::io::Result<()> {
    crate::jsonl::write(groups, w)
}

pub fn read_groups_jsonl<R: BufRead>(r: R) -> Result<Vec<ClassifiedGroup>, IngestError> {
    crate::jsonl::read(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ObjectValue, Rank, TimeInterval};

    fn lt(object: &str, membership: Membership, label: Label) -> LabeledTriple {
        LabeledTriple {
            triple: Triple {
                subject: "Q1".into(),
                relation: "P1".into(),
                object: ObjectValue::entity(object),
                interval: TimeInterval::UNBOUNDED,
                rank: Rank::Normal,
            },
            membership,
            label,
            rule: None,
        }
    }

    fn group(triples: Vec<LabeledTriple>, tf: bool) -> LabeledGroup {
        let mut stats = GroupStats::default();
        let mut seen = BTreeSet::new();
        for t in &triples {
            if seen.insert(t.triple.object.clone()) {
                match t.membership {
                    Membership::OldOnly => stats.n_minus += 1,
                    Membership::Both => stats.n_zero += 1,
                    Membership::NewOnly => stats.n_plus += 1,
                }
            }
        }
        stats.n = stats.n_minus + stats.n_zero + stats.n_plus;
        LabeledGroup { key: GroupKey::new("Q1", "P1"), stats, temporal_functional: tf, subject_in_e_plus: false, triples }
    }

    #[test]
    fn post_pass_turns_old_partner_obsolete() {
        let mut g = group(
            vec![lt("Q2", Membership::OldOnly, Label::Unknown), lt("Q3", Membership::NewOnly, Label::New)],
            true,
        );
        post_pass_obsolete(&mut g);
        assert_eq!(g.labels(), vec![Label::Obsolete, Label::New]);
    }

    #[test]
    fn post_pass_needs_two_triples_new_label_and_temporal_relation() {
        let three = vec![
            lt("Q2", Membership::OldOnly, Label::Static),
            lt("Q3", Membership::NewOnly, Label::New),
            lt("Q4", Membership::NewOnly, Label::New),
        ];
        let mut g = group(three, true);
        let before = g.clone();
        post_pass_obsolete(&mut g);
        assert_eq!(g, before);

        let mut g =
            group(vec![lt("Q2", Membership::OldOnly, Label::Static), lt("Q3", Membership::NewOnly, Label::Static)], true);
        let before = g.clone();
        post_pass_obsolete(&mut g);
        assert_eq!(g, before);

        let mut g =
            group(vec![lt("Q2", Membership::OldOnly, Label::Static), lt("Q3", Membership::NewOnly, Label::New)], false);
        let before = g.clone();
        post_pass_obsolete(&mut g);
        assert_eq!(g, before);
    }

    #[test]
    fn anomalies() {
        let g = group(vec![lt("Q2", Membership::Both, Label::Obsolete), lt("Q2", Membership::Both, Label::Obsolete)], false);
        assert_eq!(resolve_anomalies(g).unwrap().labels(), vec![Label::Obsolete]);

        let g = group(
            vec![
                lt("Q2", Membership::Both, Label::New),
                lt("Q2", Membership::Both, Label::Static),
                lt("Q3", Membership::NewOnly, Label::New),
            ],
            false,
        );
        assert_eq!(resolve_anomalies(g).unwrap().labels(), vec![Label::Static, Label::New]);

        let g = group(vec![lt("Q2", Membership::Both, Label::Obsolete), lt("Q2", Membership::Both, Label::Static)], false);
        assert!(resolve_anomalies(g).is_none());

        let g = group(vec![lt("Q2", Membership::Both, Label::New), lt("Q3", Membership::Both, Label::Static)], false);
        let before = g.clone();
        assert_eq!(resolve_anomalies(g).unwrap(), before);
    }

    #[test]
    fn filtering() {
        let mut g = group(vec![lt("Q2", Membership::NewOnly, Label::New), lt("Q3", Membership::OldOnly, Label::Unknown)], false);
        assert_eq!(filter_group(&mut g), FilterOutcome::DroppedUnknown);

        let mut g = group(
            vec![
                lt("Q2", Membership::Both, Label::Static),
                lt("Q3", Membership::NewOnly, Label::Ignore),
                lt("Q4", Membership::NewOnly, Label::New),
            ],
            false,
        );
        assert_eq!(filter_group(&mut g), FilterOutcome::Kept);
        assert_eq!(g.labels(), vec![Label::Static, Label::New]);

        let mut g = group(vec![lt("Q2", Membership::Both, Label::Static), lt("Q3", Membership::Both, Label::Static)], false);
        assert_eq!(filter_group(&mut g), FilterOutcome::DroppedNoChange);
    }

    #[test]
    fn config_validation() {
        assert!(PipelineConfig::default().validate().is_ok());
        let cfg = PipelineConfig { t_new: Date::ymd(2020, 1, 1).unwrap(), ..Default::default() };
        assert!(matches!(cfg.validate(), Err(ConfigError::WindowOrder { .. })));
        let cfg = PipelineConfig { population_undersample_factor: 0, ..Default::default() };
        assert!(matches!(cfg.validate(), Err(ConfigError::ZeroFactor)));
    }

    #[test]
    fn config_from_toml() {
        let cfg: PipelineConfig = toml::from_str("t_old = \"2021-01-04\"\nt_new = \"2023-02-27\"\nrandom_seed = 7\n").unwrap();
        assert_eq!(cfg.random_seed, 7);
        assert_eq!(cfg.population_undersample_factor, 14);
        assert!(cfg.creation_relations.contains(&RelationId::new("P571")));
    }
}

//! Synthetic inputs for the benchmarks.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use factdiff_core::preprocess::PreprocessedSnapshot;
use factdiff_core::{Bound, Date, EntityId, GroupKey, ObjectValue, Rank, RelationId, TimeInterval, Triple};

fn bound(rng: &mut impl Rng, open: Bound) -> Bound {
    if rng.gen_bool(0.4) {
        open
    } else {
        Bound::At(Date::ymd(rng.gen_range(2010..2025), rng.gen_range(1..=12), rng.gen_range(1..=28)).unwrap())
    }
}

/// About `subjects * 4` triples over 12 relations, mostly entity-valued.
pub fn snapshot(seed: u64, subjects: u32) -> PreprocessedSnapshot {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut groups: BTreeMap<GroupKey, Vec<Triple>> = BTreeMap::new();
    for s in 0..subjects {
        for _ in 0..4 {
            let object = if rng.gen_bool(0.8) {
                ObjectValue::entity(&format!("Q{}", rng.gen_range(0..subjects)))
            } else {
                ObjectValue::Text { text: rng.gen_range(0..1000).to_string() }
            };
            let t = Triple {
                subject: EntityId::new(format!("Q{s}")),
                relation: RelationId::new(format!("P{}", rng.gen_range(1..=12))),
                object,
                interval: TimeInterval::new(bound(&mut rng, Bound::NegInf), bound(&mut rng, Bound::PosInf)),
                rank: Rank::Normal,
            };
            groups.entry(t.group_key()).or_default().push(t);
        }
    }
    for g in groups.values_mut() {
        g.sort_by(|a, b| a.object.cmp(&b.object).then(a.interval.cmp(&b.interval)));
        g.dedup();
    }
    PreprocessedSnapshot { groups, ..Default::default() }
}

/// `old` with about a fifth of its triples dropped or re-dated and some added.
pub fn evolve(old: &PreprocessedSnapshot, seed: u64) -> PreprocessedSnapshot {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let subjects = old.subjects().count() as u32;
    let mut groups: BTreeMap<GroupKey, Vec<Triple>> = BTreeMap::new();
    for t in old.triples() {
        let mut t = t.clone();
        match rng.gen_range(0..10) {
            0 => continue,
            1 => t.interval = TimeInterval::new(t.interval.start, bound(&mut rng, Bound::PosInf)),
            _ => {}
        }
        groups.entry(t.group_key()).or_default().push(t);
    }
    for s in (0..subjects).step_by(7) {
        let t = Triple {
            subject: EntityId::new(format!("Q{s}")),
            relation: RelationId::new("P1"),
            object: ObjectValue::entity(&format!("Q{}", rng.gen_range(0..subjects))),
            interval: TimeInterval::new(Bound::At(Date::ymd(2022, 3, 1).unwrap()), Bound::PosInf),
            rank: Rank::Normal,
        };
        groups.entry(t.group_key()).or_default().push(t);
    }
    for g in groups.values_mut() {
        g.sort_by(|a, b| a.object.cmp(&b.object).then(a.interval.cmp(&b.interval)));
        g.dedup();
    }
    PreprocessedSnapshot { groups, ..Default::default() }
}

/// A generation-like text of `n` tokens over a small vocabulary.
pub fn text(seed: u64, n: usize) -> String {
    const WORDS: [&str; 12] = ["the", "city", "of", "river", "is", "a", "new", "old", "in", "capital", "and", "north"];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| WORDS[rng.gen_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
}

//! Choice of the triples sent out for template generation.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ingest::PopularityTable;
use crate::model::{EntityId, RelationId, Triple};
use crate::preprocess::PreprocessedSnapshot;

pub const TOP_ENTITIES: usize = 100_000;
pub const PER_RELATION: usize = 100;

/// Shuffles the `top` most popular subjects with a seeded RNG and takes the
/// first triple of each of their groups until a relation has `per_relation`
/// samples.
pub fn sample_triples_for_templates(
    old: &PreprocessedSnapshot,
    popularity: &PopularityTable,
    seed: u64,
    top: usize,
    per_relation: usize,
) -> Vec<Triple> {
    let mut subjects: Vec<&EntityId> = old.subjects().collect();
    subjects.sort_by(|a, b| popularity.get(b).cmp(&popularity.get(a)).then_with(|| a.cmp(b)));
    subjects.truncate(top);
    subjects.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut taken: HashMap<&RelationId, usize> = HashMap::new();
    let mut out = Vec::new();
    for s in subjects {
        for (key, triples) in old.groups_of(s) {
            let count = taken.entry(&key.relation).or_default();
            if *count >= per_relation {
                continue;
            }
            if let Some(t) = triples.first() {
                *count += 1;
                out.push(t.clone());
            }
        }
    }
    out
}

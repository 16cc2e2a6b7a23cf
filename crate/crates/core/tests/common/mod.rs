#![allow(dead_code)]

use std::collections::BTreeMap;
use std::io::{self, Read};
use std::path::{Path, PathBuf};

use rand::Rng;

use factdiff_core::pipeline::RunConfig;
use factdiff_core::preprocess::PreprocessedSnapshot;
use factdiff_core::{Bound, Date, EntityId, GroupKey, ObjectValue, Rank, RelationId, TimeInterval, Triple};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

/// The small knowledge-base fixture's run configuration, writing to `out`.
pub fn kb_config(out: &Path) -> RunConfig {
    let mut cfg = RunConfig::load(&fixtures().join("kb/run.toml")).expect("fixture config");
    cfg.out_dir = out.to_path_buf();
    cfg
}

pub fn date(s: &str) -> Date {
    s.parse().expect("valid date")
}

pub fn at(s: &str) -> Bound {
    Bound::At(date(s))
}

pub fn triple(s: &str, r: &str, object: ObjectValue, interval: TimeInterval) -> Triple {
    Triple { subject: EntityId::new(s), relation: RelationId::new(r), object, interval, rank: Rank::Normal }
}

/// Groups triples the way preprocessing leaves them: sorted, no exact duplicates.
pub fn snapshot(triples: impl IntoIterator<Item = Triple>) -> PreprocessedSnapshot {
    let mut groups: BTreeMap<GroupKey, Vec<Triple>> = BTreeMap::new();
    for t in triples {
        groups.entry(t.group_key()).or_default().push(t);
    }
    for g in groups.values_mut() {
        g.sort_by(|a, b| a.object.cmp(&b.object).then(a.interval.cmp(&b.interval)).then(a.rank.cmp(&b.rank)));
        g.dedup();
    }
    PreprocessedSnapshot { groups, ..Default::default() }
}

fn random_bound(rng: &mut impl Rng, open: Bound) -> Bound {
    if rng.gen_bool(0.3) {
        open
    } else {
        Bound::At(Date::ymd(rng.gen_range(2015..2025), rng.gen_range(1..=12), rng.gen_range(1..=28)).unwrap())
    }
}

/// A random triple over small id spaces, so that keys collide across
/// snapshots and sometimes within one.
pub fn random_triple(rng: &mut impl Rng, subjects: u32, relations: u32, objects: u32) -> Triple {
    let object = match rng.gen_range(0..4) {
        0 => ObjectValue::Text { text: format!("t{}", rng.gen_range(0..objects)) },
        1 => ObjectValue::Time { time: Date::ymd(rng.gen_range(1990..2025), 1, 1).unwrap() },
        _ => ObjectValue::entity(&format!("Q{}", 1000 + rng.gen_range(0..objects))),
    };
    let start = random_bound(rng, Bound::NegInf);
    let end = random_bound(rng, Bound::PosInf);
    Triple {
        subject: EntityId::new(format!("Q{}", rng.gen_range(0..subjects))),
        relation: RelationId::new(format!("P{}", rng.gen_range(1..=relations))),
        object,
        interval: TimeInterval::new(start, end),
        rank: if rng.gen_bool(0.1) { Rank::Preferred } else { Rank::Normal },
    }
}

pub fn random_snapshot(rng: &mut impl Rng, n: usize) -> PreprocessedSnapshot {
    snapshot((0..n).map(|_| random_triple(rng, 120, 6, 40)))
}

/// One snapshot line of the synthetic streaming corpus.
pub fn synthetic_line(i: u64, total: u64) -> String {
    let country = (i * 7919) % total;
    let year = 2000 + i % 20;
    format!(
        concat!(
            r#"{{"id":"Q{i}","kind":"item","label":"entity {i}","description":"synthetic item","#,
            r#""sitelink":{{"exists":true,"page_kind":"article"}},"claims":{{"#,
            r#""P31":[{{"datatype":"wikibase-item","rank":"normal","value":"Q{class}"}}],"#,
            r#""P17":[{{"datatype":"wikibase-item","rank":"normal","value":"Q{country}"}}],"#,
            r#""P1082":[{{"datatype":"quantity","rank":"normal","value":{{"amount":"+{pop}"}},"#,
            r#""qualifiers":{{"P585":[{{"datatype":"time","value":{{"precision":11,"time":"+{year}-01-01T00:00:00Z"}}}}]}}}}],"#,
            r#""P856":[{{"datatype":"url","rank":"normal","value":"https://example.org/{i}"}}],"#,
            r#""P214":[{{"datatype":"external-id","rank":"normal","value":"viaf-{i}"}}]}}}}"#,
            "\n"
        ),
        i = i,
        class = i % 97,
        country = country,
        pop = 1000 + i,
        year = year,
    )
}

/// Streams `total` synthetic snapshot lines without materialising them.
pub struct SyntheticSnapshot {
    next: u64,
    total: u64,
    buf: Vec<u8>,
    pos: usize,
}

impl SyntheticSnapshot {
    pub fn new(total: u64) -> Self {
        Self { next: 0, total, buf: Vec::new(), pos: 0 }
    }
}

impl Read for SyntheticSnapshot {
    fn read(&mut self, out: &mut [u8]) -> io::Result<usize> {
        while self.pos == self.buf.len() {
            if self.next == self.total {
                return Ok(0);
            }
            self.buf.clear();
            self.pos = 0;
            for _ in 0..256 {
                if self.next == self.total {
                    break;
                }
                self.buf.extend_from_slice(synthetic_line(self.next, self.total).as_bytes());
                self.next += 1;
            }
        }
        let n = out.len().min(self.buf.len() - self.pos);
        out[..n].copy_from_slice(&self.buf[self.pos..self.pos + n]);
        self.pos += n;
        Ok(n)
    }
}

/// Peak resident set size of this process, in bytes (Linux only).
pub fn peak_rss_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

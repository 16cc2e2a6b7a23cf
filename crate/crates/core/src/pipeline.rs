//! Stage orchestration. Every stage reads the previous stages' files from the
//! output directory, writes its own, and records a manifest of input and
//! output hashes so an unchanged stage is skipped on the next run.

use std::collections::{BTreeMap, HashSet};
use std::error::Error as StdError;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classify::{classify_diff, extract_replacement_subset, read_groups_jsonl, write_groups_jsonl, NewEntitySet, PipelineConfig};
use crate::dataset::{read_records_jsonl, sort_records, write_records_jsonl, DatasetContext, DatasetRecord};
use crate::diff::{diff_snapshots, DiffResult};
use crate::hashing::{sha256_file, sha256_reader};
use crate::ingest::{load_popularity, open_snapshot, ErrorPolicy, PopularityTable, RelationMetaTable};
use crate::model::Label;
use crate::neighbors::{neighbors_for_groups, read_neighbors_jsonl, write_neighbors_jsonl, TfidfIndex, DEFAULT_K, DEFAULT_N};
use crate::preprocess::{preprocess_snapshot_with, Catalog, PreprocessedSnapshot};
use crate::probe::ProbeParams;
use crate::verbalize::llm::generate_templates;
use crate::verbalize::sampling::{PER_RELATION, TOP_ENTITIES};
use crate::verbalize::{build_template_requests, sample_triples_for_templates, HttpChatClient, TemplateStore};

pub type BoxError = Box<dyn StdError + Send + Sync>;

pub const STAGES: [&str; 7] = ["ingest", "preprocess", "diff", "classify", "neighbors", "verbalize", "dataset"];

pub const DATASET_FILE: &str = "dataset.jsonl";
pub const REPLACEMENT_FILE: &str = "dataset_repl.jsonl";

#[derive(Debug, thiserror::Error)]
#[error("stage {stage} failed: {source}")]
pub struct StageError {
    pub stage: &'static str,
    #[source]
    pub source: BoxError,
}

#[derive(Debug, thiserror::Error)]
pub enum RunConfigError {
    #[error("reading {0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error("config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Invalid(#[from] crate::classify::ConfigError),
    #[error("unknown stage {0:?}")]
    UnknownStage(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputPaths {
    pub old_snapshot: PathBuf,
    pub new_snapshot: PathBuf,
    /// Property documents in snapshot format; property documents found in
    /// the snapshots themselves are merged in.
    pub relations: Option<PathBuf>,
    pub popularity: Option<PathBuf>,
    /// Ready-made templates. When absent the `llm` section is used.
    pub templates: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token.
    pub token_env: Option<String>,
    pub in_flight: usize,
    pub top_entities: usize,
    pub per_relation: usize,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            model: String::new(),
            token_env: None,
            in_flight: 4,
            top_entities: TOP_ENTITIES,
            per_relation: PER_RELATION,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NeighborParams {
    pub k: usize,
    pub n: usize,
}

impl Default for NeighborParams {
    fn default() -> Self {
        Self { k: DEFAULT_K, n: DEFAULT_N }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Overrides the seeds of the `pipeline` and `probe` sections.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub inputs: InputPaths,
    pub llm: Option<LlmConfig>,
    pub pipeline: PipelineConfig,
    pub neighbors: NeighborParams,
    pub probe: ProbeParams,
}

impl RunConfig {
    /// Parses TOML; relative paths are taken relative to `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, RunConfigError> {
        let mut cfg: RunConfig = toml::from_str(text)?;
        cfg.rebase(base);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, RunConfigError> {
        let text = fs::read_to_string(path).map_err(|e| RunConfigError::Io(path.to_path_buf(), e))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if !p.as_os_str().is_empty() && p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out_dir);
        fix(&mut self.inputs.old_snapshot);
        fix(&mut self.inputs.new_snapshot);
        for p in [&mut self.inputs.relations, &mut self.inputs.popularity, &mut self.inputs.templates].into_iter().flatten() {
            fix(p);
        }
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig { random_seed: self.seed, ..self.pipeline.clone() }
    }

    pub fn probe_params(&self) -> ProbeParams {
        ProbeParams { seed: self.seed, ..self.probe.clone() }
    }

    pub fn validate(&self) -> Result<(), RunConfigError> {
        Ok(self.pipeline.validate()?)
    }

    pub fn stage_dir(&self, stage: &str) -> PathBuf {
        self.out_dir.join(stage)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    /// Version of the code that wrote the outputs; a different version reruns the stage.
    #[serde(default)]
    pub version: String,
    pub seed: u64,
    pub params: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub counts: BTreeMap<String, u64>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Option<Self> {
        let text = fs::read_to_string(dir.join("manifest.json")).ok()?;
        serde_json::from_str(&text).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageReport {
    pub stage: &'static str,
    pub skipped: bool,
    pub counts: BTreeMap<String, u64>,
}

type Counts = BTreeMap<String, u64>;

fn hash_inputs(inputs: &[(&str, &Path)]) -> Result<BTreeMap<String, String>, BoxError> {
    inputs
        .iter()
        .map(|(name, path)| {
            let h = sha256_file(path).map_err(|e| format!("input {}: {e}", path.display()))?;
            Ok((name.to_string(), h))
        })
        .collect()
}

fn outputs_match(dir: &Path, outputs: &BTreeMap<String, String>) -> bool {
    outputs.iter().all(|(name, h)| sha256_file(&dir.join(name)).is_ok_and(|x| &x == h))
}

/// Writes through a temporary file so a crash never leaves a truncated output
/// behind under the final name.
pub fn write_file<F>(path: &Path, body: F) -> Result<(), BoxError>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let tmp = path.with_extension("tmp");
    let mut w = BufWriter::new(File::create(&tmp)?);
    body(&mut w)?;
    w.flush()?;
    drop(w);
    fs::rename(&tmp, path)?;
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<File>, BoxError> {
    File::open(path).map(BufReader::new).map_err(|e| format!("{}: {e}", path.display()).into())
}

pub struct Pipeline {
    pub cfg: RunConfig,
}

impl Pipeline {
    pub fn new(cfg: RunConfig) -> Result<Self, RunConfigError> {
        cfg.validate()?;
        Ok(Self { cfg })
    }

    fn path(&self, stage: &str, file: &str) -> PathBuf {
        self.cfg.stage_dir(stage).join(file)
    }

    fn run_stage<P, F>(
        &self,
        stage: &'static str,
        inputs: &[(&str, &Path)],
        params: &P,
        outputs: &[&str],
        body: F,
    ) -> Result<StageReport, StageError>
    where
        P: Serialize,
        F: FnOnce(&Path) -> Result<Counts, BoxError>,
    {
        let fail = |source: BoxError| StageError { stage, source };
        let dir = self.cfg.stage_dir(stage);
        fs::create_dir_all(&dir).map_err(|e| fail(e.into()))?;
        let input_hashes = hash_inputs(inputs).map_err(fail)?;
        let params = sha256_reader(&serde_json::to_vec(params).map_err(|e| fail(e.into()))?[..]).map_err(|e| fail(e.into()))?;
        if let Some(m) = Manifest::read(&dir) {
            let same = m.stage == stage
                && m.version == env!("CARGO_PKG_VERSION")
                && m.seed == self.cfg.seed
                && m.params == params
                && m.inputs == input_hashes
                && outputs.iter().all(|o| m.outputs.contains_key(*o))
                && outputs_match(&dir, &m.outputs);
            if same {
                log::info!("{stage}: up to date");
                return Ok(StageReport { stage, skipped: true, counts: m.counts });
            }
        }
        log::info!("{stage}: running");
        let counts = body(&dir).map_err(fail)?;
        let mut out_hashes = BTreeMap::new();
        for o in outputs {
            let h = sha256_file(&dir.join(o)).map_err(|e| fail(format!("output {o}: {e}").into()))?;
            out_hashes.insert(o.to_string(), h);
        }
        let manifest = Manifest {
            stage: stage.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.cfg.seed,
            params,
            inputs: input_hashes,
            outputs: out_hashes,
            counts: counts.clone(),
        };
        write_file(&dir.join("manifest.json"), |w| {
            serde_json::to_writer_pretty(&mut *w, &manifest)?;
            w.write_all(b"\n")
        })
        .map_err(fail)?;
        Ok(StageReport { stage, skipped: false, counts })
    }

    /// Runs every stage up to and including `last`.
    pub fn run_through(&self, last: &str) -> Result<Vec<StageReport>, BoxError> {
        let end = STAGES.iter().position(|s| *s == last).ok_or_else(|| RunConfigError::UnknownStage(last.to_string()))?;
        let mut reports = Vec::new();
        for stage in &STAGES[..=end] {
            let r = match *stage {
                "ingest" => self.ingest(),
                "preprocess" => self.preprocess(),
                "diff" => self.diff(),
                "classify" => self.classify(),
                "neighbors" => self.neighbors(),
                "verbalize" => self.verbalize(),
                _ => self.dataset(),
            }?;
            reports.push(r);
        }
        Ok(reports)
    }

    pub fn run(&self) -> Result<Vec<StageReport>, BoxError> {
        self.run_through("dataset")
    }

    fn relations_input(&self) -> Vec<(&str, &Path)> {
        self.cfg.inputs.relations.as_deref().map(|p| ("relations", p)).into_iter().collect()
    }

    pub fn ingest(&self) -> Result<StageReport, StageError> {
        let i = &self.cfg.inputs;
        let mut inputs = vec![("old_snapshot", i.old_snapshot.as_path()), ("new_snapshot", i.new_snapshot.as_path())];
        inputs.extend(self.relations_input());
        self.run_stage("ingest", &inputs, &(), &["catalog_old.jsonl", "catalog_new.jsonl", "relations.jsonl"], |dir| {
            let mut meta = match &i.relations {
                Some(p) => RelationMetaTable::load(p)?,
                None => RelationMetaTable::new(),
            };
            let mut counts = Counts::new();
            for (side, path) in [("old", &i.old_snapshot), ("new", &i.new_snapshot)] {
                let mut reader = open_snapshot(path, ErrorPolicy::Skip).map_err(|e| format!("{}: {e}", path.display()))?;
                let catalog = Catalog::scan(&mut reader, &mut meta)?;
                counts.insert(format!("items_{side}"), catalog.len() as u64);
                counts.insert(format!("relevant_{side}"), catalog.relevant_set().len() as u64);
                counts.insert(format!("skipped_lines_{side}"), reader.skipped().len() as u64);
                write_file(&dir.join(format!("catalog_{side}.jsonl")), |w| catalog.write_jsonl(w))?;
            }
            counts.insert("relations".into(), meta.len() as u64);
            write_file(&dir.join("relations.jsonl"), |w| meta.write_jsonl(w))?;
            Ok(counts)
        })
    }

    fn load_meta(&self) -> Result<RelationMetaTable, BoxError> {
        Ok(RelationMetaTable::read_jsonl(open(&self.path("ingest", "relations.jsonl"))?)?)
    }

    fn load_catalog(&self, side: &str) -> Result<Catalog, BoxError> {
        Ok(Catalog::read_jsonl(open(&self.path("ingest", &format!("catalog_{side}.jsonl")))?)?)
    }

    /// Old entries overridden by new ones.
    fn load_merged_catalog(&self) -> Result<Catalog, BoxError> {
        let mut c = self.load_catalog("old")?;
        c.merge(self.load_catalog("new")?);
        Ok(c)
    }

    fn load_popularity(&self) -> Result<PopularityTable, BoxError> {
        match &self.cfg.inputs.popularity {
            None => Ok(PopularityTable::new()),
            Some(p) => {
                let (table, errors) = load_popularity(p)?;
                for e in errors.iter().take(10) {
                    log::warn!("{}: {e}", p.display());
                }
                Ok(table)
            }
        }
    }

    fn load_preprocessed(&self, side: &str) -> Result<PreprocessedSnapshot, BoxError> {
        let relevant = self.load_catalog(side)?.relevant_set();
        Ok(PreprocessedSnapshot::read_jsonl(open(&self.path("preprocess", &format!("{side}.jsonl")))?, relevant)?)
    }

    pub fn preprocess(&self) -> Result<StageReport, StageError> {
        let i = &self.cfg.inputs;
        let (c_old, c_new, rel) =
            (self.path("ingest", "catalog_old.jsonl"), self.path("ingest", "catalog_new.jsonl"), self.path("ingest", "relations.jsonl"));
        let inputs = [
            ("old_snapshot", i.old_snapshot.as_path()),
            ("new_snapshot", i.new_snapshot.as_path()),
            ("catalog_old", c_old.as_path()),
            ("catalog_new", c_new.as_path()),
            ("relations", rel.as_path()),
        ];
        self.run_stage("preprocess", &inputs, &(), &["old.jsonl", "new.jsonl"], |dir| {
            let meta = self.load_meta()?;
            let mut counts = Counts::new();
            for (side, path) in [("old", &i.old_snapshot), ("new", &i.new_snapshot)] {
                let relevant: HashSet<_> = self.load_catalog(side)?.relevant_set();
                let reader = open_snapshot(path, ErrorPolicy::Skip).map_err(|e| format!("{}: {e}", path.display()))?;
                let mut rejected: BTreeMap<String, u64> = BTreeMap::new();
                let snap = preprocess_snapshot_with(reader, &meta, &relevant, |r| {
                    let reason = serde_json::to_value(r.reason).ok().and_then(|v| v.as_str().map(str::to_string));
                    *rejected.entry(reason.unwrap_or_default()).or_default() += 1;
                })?;
                counts.insert(format!("groups_{side}"), snap.groups.len() as u64);
                counts.insert(format!("triples_{side}"), snap.triple_count() as u64);
                for (reason, n) in rejected {
                    counts.insert(format!("rejected_{side}_{reason}"), n);
                }
                write_file(&dir.join(format!("{side}.jsonl")), |w| snap.write_jsonl(w))?;
            }
            Ok(counts)
        })
    }

    pub fn diff(&self) -> Result<StageReport, StageError> {
        let (old, new) = (self.path("preprocess", "old.jsonl"), self.path("preprocess", "new.jsonl"));
        self.run_stage("diff", &[("old", &old), ("new", &new)], &(), &["diff.jsonl"], |dir| {
            let read = |p: &Path| -> Result<PreprocessedSnapshot, BoxError> {
                Ok(PreprocessedSnapshot::read_jsonl(open(p)?, HashSet::new())?)
            };
            let diff = diff_snapshots(&read(&old)?, &read(&new)?);
            let [minus, zero, plus] = diff.partition_sizes();
            write_file(&dir.join("diff.jsonl"), |w| diff.write_jsonl(w))?;
            Ok(Counts::from([
                ("f_minus".into(), minus as u64),
                ("f_zero".into(), zero as u64),
                ("f_plus".into(), plus as u64),
                ("groups".into(), diff.groups.len() as u64),
            ]))
        })
    }

    fn popularity_input(&self) -> Vec<(&str, &Path)> {
        self.cfg.inputs.popularity.as_deref().map(|p| ("popularity", p)).into_iter().collect()
    }

    pub fn classify(&self) -> Result<StageReport, StageError> {
        let (diff, rel) = (self.path("diff", "diff.jsonl"), self.path("ingest", "relations.jsonl"));
        let mut inputs = vec![("diff", diff.as_path()), ("relations", rel.as_path())];
        inputs.extend(self.popularity_input());
        let cfg = self.cfg.pipeline_config();
        let outputs = ["classified.jsonl", "new_entities.json", "stats.json"];
        self.run_stage("classify", &inputs, &cfg, &outputs, |dir| {
            let diff = DiffResult::read_jsonl(open(&diff)?)?;
            let out = classify_diff(&diff, &self.load_meta()?, &self.load_popularity()?, &cfg);
            write_file(&dir.join("classified.jsonl"), |w| write_groups_jsonl(&out.groups, w))?;
            write_file(&dir.join("new_entities.json"), |w| {
                serde_json::to_writer_pretty(&mut *w, &out.new_entities)?;
                w.write_all(b"\n")
            })?;
            write_file(&dir.join("stats.json"), |w| {
                serde_json::to_writer_pretty(&mut *w, &out.stats)?;
                w.write_all(b"\n")
            })?;
            Ok(Counts::from([
                ("groups".into(), out.groups.len() as u64),
                ("new_entities".into(), out.new_entities.len() as u64),
                ("deleted_anomalies".into(), out.stats.deleted_anomalies),
            ]))
        })
    }

    pub fn neighbors(&self) -> Result<StageReport, StageError> {
        let paths = [
            self.path("preprocess", "old.jsonl"),
            self.path("preprocess", "new.jsonl"),
            self.path("classify", "classified.jsonl"),
        ];
        let mut inputs = vec![("old", paths[0].as_path()), ("new", paths[1].as_path()), ("classified", paths[2].as_path())];
        inputs.extend(self.popularity_input());
        let p = self.cfg.neighbors;
        self.run_stage("neighbors", &inputs, &p, &["neighbors.jsonl"], |dir| {
            let old = self.load_preprocessed("old")?;
            let new = self.load_preprocessed("new")?;
            let groups = read_groups_jsonl(open(&paths[2])?)?;
            let index = TfidfIndex::from_snapshots(&old, &new);
            drop(new);
            let found = neighbors_for_groups(&groups, &index, &old, &self.load_popularity()?, p.k, p.n);
            write_file(&dir.join("neighbors.jsonl"), |w| write_neighbors_jsonl(&found, w))?;
            Ok(Counts::from([
                ("groups".into(), found.len() as u64),
                ("facts".into(), found.iter().map(|g| g.neighbors.len() as u64).sum()),
                ("vocabulary".into(), index.vocabulary.len() as u64),
            ]))
        })
    }

    pub fn verbalize(&self) -> Result<StageReport, StageError> {
        if let Some(src) = &self.cfg.inputs.templates {
            return self.run_stage("verbalize", &[("templates", src)], &(), &["templates.jsonl"], |dir| {
                let store = TemplateStore::read_jsonl(open(src)?)?;
                write_file(&dir.join("templates.jsonl"), |w| store.write_jsonl(w))?;
                Ok(Counts::from([("templates".into(), store.len() as u64)]))
            });
        }
        let fail = |m: &str| StageError { stage: "verbalize", source: m.into() };
        let llm = self.cfg.llm.clone().ok_or_else(|| fail("neither inputs.templates nor an llm section is configured"))?;
        if llm.endpoint.is_empty() {
            return Err(fail("llm.endpoint is empty"));
        }
        let paths = [
            self.path("preprocess", "old.jsonl"),
            self.path("ingest", "catalog_old.jsonl"),
            self.path("ingest", "catalog_new.jsonl"),
            self.path("ingest", "relations.jsonl"),
        ];
        let mut inputs: Vec<(&str, &Path)> =
            vec![("old", &paths[0]), ("catalog_old", &paths[1]), ("catalog_new", &paths[2]), ("relations", &paths[3])];
        inputs.extend(self.popularity_input());
        let params = (&llm.endpoint, &llm.model, llm.top_entities, llm.per_relation);
        self.run_stage("verbalize", &inputs, &params, &["templates.jsonl"], |dir| {
            let old = self.load_preprocessed("old")?;
            let samples =
                sample_triples_for_templates(&old, &self.load_popularity()?, self.cfg.seed, llm.top_entities, llm.per_relation);
            let requests = build_template_requests(&samples, &self.load_merged_catalog()?, &self.load_meta()?);
            let token = llm.token_env.as_deref().and_then(|v| std::env::var(v).ok());
            let client = HttpChatClient::new(&llm.endpoint, &llm.model, token)?;
            let store = TemplateStore::from_templates(generate_templates(&requests, &client, llm.in_flight));
            write_file(&dir.join("templates.jsonl"), |w| store.write_jsonl(w))?;
            Ok(Counts::from([("samples".into(), samples.len() as u64), ("templates".into(), store.len() as u64)]))
        })
    }

    pub fn dataset(&self) -> Result<StageReport, StageError> {
        let paths = [
            self.path("classify", "classified.jsonl"),
            self.path("classify", "new_entities.json"),
            self.path("neighbors", "neighbors.jsonl"),
            self.path("verbalize", "templates.jsonl"),
            self.path("ingest", "catalog_old.jsonl"),
            self.path("ingest", "catalog_new.jsonl"),
            self.path("ingest", "relations.jsonl"),
        ];
        let names = ["classified", "new_entities", "neighbors", "templates", "catalog_old", "catalog_new", "relations"];
        let inputs: Vec<(&str, &Path)> = names.iter().copied().zip(paths.iter().map(PathBuf::as_path)).collect();
        let cfg = self.cfg.pipeline_config();
        self.run_stage("dataset", &inputs, &cfg, &[DATASET_FILE, REPLACEMENT_FILE], |dir| {
            let groups = read_groups_jsonl(open(&paths[0])?)?;
            let new_entities: NewEntitySet = serde_json::from_reader(open(&paths[1])?)?;
            let neighbors = read_neighbors_jsonl(open(&paths[2])?)?;
            let templates = TemplateStore::read_jsonl(open(&paths[3])?)?;
            let catalog = self.load_merged_catalog()?;
            let meta = self.load_meta()?;
            let ctx = DatasetContext { catalog: &catalog, meta: &meta, templates: &templates, new_entities: &new_entities };

            let mut records = ctx.build(&groups, &neighbors)?;
            sort_records(&mut records);
            write_file(&dir.join(DATASET_FILE), |w| write_records_jsonl(&records, w))?;

            let subset = extract_replacement_subset(&groups, &cfg);
            let mut repl: Vec<DatasetRecord> = ctx.build(&subset, &neighbors)?;
            let before = repl.len();
            repl.retain(|r| r.with_label(Label::New).all(|t| t.verbalization.is_some()));
            sort_records(&mut repl);
            write_file(&dir.join(REPLACEMENT_FILE), |w| write_records_jsonl(&repl, w))?;
            Ok(Counts::from([
                ("records".into(), records.len() as u64),
                ("replacement".into(), repl.len() as u64),
                ("replacement_unverbalizable".into(), (before - repl.len()) as u64),
            ]))
        })
    }
}

pub fn read_dataset(path: &Path) -> Result<Vec<DatasetRecord>, BoxError> {
    Ok(read_records_jsonl(open(path)?)?)
}

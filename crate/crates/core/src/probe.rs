//! Probe wire files: turning replacement records into scoring/generation
//! requests and joining a backend's answers back into per-update metrics.
//!
//! Pre and post runs send the same requests; only the model answering them
//! differs. Case ids never include the prompt-baseline prefix, so responses
//! from any mode join against the same plan.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetRecord, NeighborRecord};
use crate::hashing::{digest_fields, hex_fields};
use crate::ingest::IngestError;
use crate::metrics::{
    bleedover, compare, fluency, sample_random_neighbors, sequence_probability_from_logprobs, MetricsError,
    NeighborBleedover, SequenceMode, UpdateCaseResult,
};
use crate::model::{GroupKey, Label, Scenario};
use crate::verbalize::VerbalizationSet;

#[derive(Debug, thiserror::Error)]
pub enum ProbeError {
    #[error("replacement record {0} has no verbalization")]
    MissingVerbalization(String),
    #[error("unanswered requests: {}", .0.join(", "))]
    UnansweredRequest(Vec<String>),
    #[error("requests answered more than once: {}", .0.join(", "))]
    DuplicateResponse(Vec<String>),
    #[error("response {case_id}: {reason}")]
    MalformedResponse { case_id: String, reason: String },
    #[error("case {case}: {source}")]
    Metrics { case: String, source: MetricsError },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestKind {
    Score,
    Generate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeRequest {
    pub case_id: String,
    pub kind: RequestKind,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub continuations: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_new_tokens: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResponse {
    pub case_id: String,
    /// Per continuation, per token natural-log probabilities.
    #[serde(default)]
    pub logprobs: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generation: Option<String>,
    /// Wall-clock seconds the backend spent on the update, when it reports it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seconds: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeMode {
    Pre,
    Post,
    PromptBaseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeParams {
    pub max_alt_clozes: usize,
    pub generation_tokens: u32,
    pub random_neighbors: usize,
    pub seed: u64,
    pub sequence_mode: SequenceMode,
}

impl Default for ProbeParams {
    fn default() -> Self {
        Self { max_alt_clozes: 4, generation_tokens: 100, random_neighbors: 10, seed: 0, sequence_mode: SequenceMode::default() }
    }
}

/// What a request measures within its case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Update,
    Alt(usize),
    Neighbor(usize),
    RandomNeighbor(usize),
    Generate(usize),
}

impl Role {
    fn tag(&self) -> String {
        match self {
            Role::Update => "update".into(),
            Role::Alt(i) => format!("alt{i}"),
            Role::Neighbor(i) => format!("knn{i}"),
            Role::RandomNeighbor(i) => format!("rand{i}"),
            Role::Generate(i) => format!("gen{i}"),
        }
    }
}

/// A neighbor fact as it is probed: its cloze and its correct object.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborProbe {
    pub owner: GroupKey,
    pub cloze: String,
    pub object: String,
    pub similarity: f64,
    pub popularity: u64,
}

/// One replacement update to evaluate.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalCase {
    pub key: GroupKey,
    pub new_object: String,
    pub old_object: String,
    pub verbalization: VerbalizationSet,
    /// The generalization clozes C; falls back to the update cloze.
    pub clozes: Vec<String>,
    pub neighbors: Vec<NeighborProbe>,
    pub random: Vec<NeighborProbe>,
}

pub fn case_id(key: &GroupKey, role: Role, prompt: &str, continuations: &[String]) -> String {
    let tag = role.tag();
    let mut fields: Vec<&[u8]> =
        vec![key.subject.as_str().as_bytes(), key.relation.as_str().as_bytes(), tag.as_bytes(), prompt.as_bytes()];
    fields.extend(continuations.iter().map(|c| c.as_bytes()));
    hex_fields(fields)
}

fn neighbor_probe(owner: &GroupKey, n: &NeighborRecord) -> Option<NeighborProbe> {
    Some(NeighborProbe {
        owner: owner.clone(),
        cloze: n.cloze.clone()?,
        object: n.text.clone(),
        similarity: n.similarity,
        popularity: n.popularity,
    })
}

/// Replacement records that can be evaluated, with their random neighbors
/// drawn from everyone else's neighbor facts. Records without any probeable
/// neighbor are skipped with a warning.
pub fn plan_cases(dataset: &[DatasetRecord], params: &ProbeParams) -> Result<Vec<EvalCase>, ProbeError> {
    let mut cases = Vec::new();
    for rec in dataset.iter().filter(|r| r.scenario == Scenario::ReplaceObject) {
        let key = rec.key();
        let (Some(new), Some(old)) = (rec.with_label(Label::New).next(), rec.with_label(Label::Obsolete).next()) else {
            continue;
        };
        let verbalization = new
            .verbalization
            .clone()
            .or_else(|| rec.verbalization.clone())
            .ok_or_else(|| ProbeError::MissingVerbalization(key.to_string()))?;
        let neighbors: Vec<NeighborProbe> = rec.neighbors.iter().filter_map(|n| neighbor_probe(&key, n)).collect();
        if neighbors.is_empty() {
            log::warn!("{key}: no neighbor with a cloze, not evaluated");
            continue;
        }
        let mut clozes: Vec<String> = verbalization.alt_clozes.iter().take(params.max_alt_clozes).cloned().collect();
        if clozes.is_empty() {
            clozes.push(verbalization.cloze.clone());
        }
        cases.push(EvalCase {
            key,
            new_object: new.text.clone(),
            old_object: old.text.clone(),
            verbalization,
            clozes,
            neighbors,
            random: Vec::new(),
        });
    }
    let union: Vec<NeighborProbe> = cases.iter().flat_map(|c| c.neighbors.iter().cloned()).collect();
    for case in &mut cases {
        let digest = digest_fields([
            &params.seed.to_le_bytes()[..],
            case.key.subject.as_str().as_bytes(),
            case.key.relation.as_str().as_bytes(),
        ]);
        let seed = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
        case.random = sample_random_neighbors(&union, |n| n.owner == case.key, params.random_neighbors, seed);
    }
    Ok(cases)
}

/// Every request of one case, in a fixed order, without any prefix.
pub fn case_requests(case: &EvalCase, params: &ProbeParams) -> Vec<(Role, ProbeRequest)> {
    let score = |role: Role, prompt: &str, continuations: Vec<String>| {
        let req = ProbeRequest {
            case_id: case_id(&case.key, role, prompt, &continuations),
            kind: RequestKind::Score,
            prompt: prompt.to_string(),
            continuations,
            max_new_tokens: None,
        };
        (role, req)
    };
    let pair = vec![case.new_object.clone(), case.old_object.clone()];
    let mut out = vec![score(Role::Update, &case.verbalization.cloze, pair.clone())];
    for (i, c) in case.clozes.iter().enumerate() {
        out.push(score(Role::Alt(i), c, pair.clone()));
    }
    for (i, n) in case.neighbors.iter().enumerate() {
        out.push(score(Role::Neighbor(i), &n.cloze, vec![n.object.clone()]));
    }
    for (i, n) in case.random.iter().enumerate() {
        out.push(score(Role::RandomNeighbor(i), &n.cloze, vec![n.object.clone()]));
    }
    for (i, c) in case.clozes.iter().enumerate() {
        let role = Role::Generate(i);
        out.push((
            role,
            ProbeRequest {
                case_id: case_id(&case.key, role, c, &[]),
                kind: RequestKind::Generate,
                prompt: c.clone(),
                continuations: Vec::new(),
                max_new_tokens: Some(params.generation_tokens),
            },
        ));
    }
    out
}

/// Request file contents for one run. The prompt baseline prefixes every
/// prompt of a case, neighbor clozes included, with that case's update
/// sentence.
pub fn emit_probe_requests(cases: &[EvalCase], mode: ProbeMode, params: &ProbeParams) -> Vec<ProbeRequest> {
    let mut out = Vec::new();
    for case in cases {
        for (_, mut req) in case_requests(case, params) {
            if mode == ProbeMode::PromptBaseline {
                req.prompt = format!("{}. {}", case.verbalization.update_sentence, req.prompt);
            }
            out.push(req);
        }
    }
    out
}

pub fn write_requests_jsonl<W: Write>(requests: &[ProbeRequest], w: W) -> std::io::Result<()> {
    crate::jsonl::write(requests, w)
}

pub fn read_requests_jsonl<R: BufRead>(r: R) -> Result<Vec<ProbeRequest>, IngestError> {
    crate::jsonl::read(r)
}

pub fn write_responses_jsonl<W: Write>(responses: &[ProbeResponse], w: W) -> std::io::Result<()> {
    crate::jsonl::write(responses, w)
}

pub fn read_responses_jsonl<R: BufRead>(r: R) -> Result<Vec<ProbeResponse>, IngestError> {
    crate::jsonl::read(r)
}

/// Indexes responses by case id, checking that every expected id is
/// answered exactly once.
fn index_responses<'a>(
    expected: &[String],
    responses: &'a [ProbeResponse],
) -> Result<HashMap<&'a str, &'a ProbeResponse>, ProbeError> {
    let mut by_id: HashMap<&str, &ProbeResponse> = HashMap::with_capacity(responses.len());
    let mut dup = Vec::new();
    for r in responses {
        if by_id.insert(r.case_id.as_str(), r).is_some() {
            dup.push(r.case_id.clone());
        }
    }
    if !dup.is_empty() {
        dup.sort();
        dup.dedup();
        return Err(ProbeError::DuplicateResponse(dup));
    }
    let missing: Vec<String> = expected.iter().filter(|id| !by_id.contains_key(id.as_str())).cloned().collect();
    if !missing.is_empty() {
        return Err(ProbeError::UnansweredRequest(missing));
    }
    let unknown = by_id.len().saturating_sub(expected.len());
    if unknown > 0 {
        log::warn!("{unknown} responses match no request and are ignored");
    }
    Ok(by_id)
}

fn probabilities(resp: &ProbeResponse, req: &ProbeRequest, mode: SequenceMode) -> Result<Vec<f64>, ProbeError> {
    if resp.logprobs.len() != req.continuations.len() {
        return Err(ProbeError::MalformedResponse {
            case_id: req.case_id.clone(),
            reason: format!("{} logprob lists for {} continuations", resp.logprobs.len(), req.continuations.len()),
        });
    }
    resp.logprobs
        .iter()
        .map(|lp| {
            if lp.iter().any(|x| x.is_nan() || *x > 0.0) {
                return Err(ProbeError::MalformedResponse {
                    case_id: req.case_id.clone(),
                    reason: "log-probability above 0 or not a number".into(),
                });
            }
            sequence_probability_from_logprobs(lp, mode).map_err(|source| ProbeError::Metrics { case: req.case_id.clone(), source })
        })
        .collect()
}

/// Per-update results plus the per-neighbor k-NN bleedover used for the
/// popularity/similarity breakdown.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoredRun {
    pub results: Vec<UpdateCaseResult>,
    pub neighbors: Vec<NeighborBleedover>,
}

pub fn score_run(
    cases: &[EvalCase],
    params: &ProbeParams,
    algorithm: &str,
    pre: &[ProbeResponse],
    post: &[ProbeResponse],
) -> Result<ScoredRun, ProbeError> {
    let plans: Vec<Vec<(Role, ProbeRequest)>> = cases.iter().map(|c| case_requests(c, params)).collect();
    let expected: Vec<String> = plans.iter().flatten().map(|(_, r)| r.case_id.clone()).collect();
    let pre = index_responses(&expected, pre)?;
    let post = index_responses(&expected, post)?;
    let mode = params.sequence_mode;

    let mut run = ScoredRun::default();
    for (case, plan) in cases.iter().zip(&plans) {
        let name = case.key.to_string();
        let merr = |source: MetricsError| ProbeError::Metrics { case: name.clone(), source };
        let mut update = (0.0, 0.0);
        let mut seconds = None;
        let mut alt = Vec::new();
        let mut knn = Vec::new();
        let mut random = Vec::new();
        let mut generations = Vec::new();
        for (role, req) in plan {
            let after = post[req.case_id.as_str()];
            match role {
                Role::Update => {
                    let p = probabilities(after, req, mode)?;
                    update = compare(p[0], p[1]);
                    seconds = after.seconds;
                }
                Role::Alt(_) => {
                    let p = probabilities(after, req, mode)?;
                    alt.push(compare(p[0], p[1]));
                }
                Role::Neighbor(i) => {
                    let before = probabilities(pre[req.case_id.as_str()], req, mode)?[0];
                    let now = probabilities(after, req, mode)?[0];
                    let n = &case.neighbors[*i];
                    run.neighbors.push(NeighborBleedover {
                        algorithm: algorithm.to_string(),
                        bleedover: bleedover(&[(before, now)]).map_err(merr)?,
                        popularity: n.popularity,
                        similarity: n.similarity,
                    });
                    knn.push((before, now));
                }
                Role::RandomNeighbor(_) => {
                    let before = probabilities(pre[req.case_id.as_str()], req, mode)?[0];
                    random.push((before, probabilities(after, req, mode)?[0]));
                }
                Role::Generate(_) => {
                    let g = after.generation.clone().ok_or_else(|| ProbeError::MalformedResponse {
                        case_id: req.case_id.clone(),
                        reason: "generation request answered without a generation".into(),
                    })?;
                    generations.push(g);
                }
            }
        }
        let mean = |xs: &[(f64, f64)], f: fn(&(f64, f64)) -> f64| xs.iter().map(f).sum::<f64>() / xs.len() as f64;
        if alt.is_empty() {
            return Err(merr(MetricsError::EmptySet));
        }
        run.results.push(UpdateCaseResult {
            case: name.clone(),
            efficacy_diff: update.0,
            efficacy_success: update.1,
            gen_diff: mean(&alt, |x| x.0),
            gen_success: mean(&alt, |x| x.1),
            // With no other update's neighbors to draw from there is nothing
            // to disturb.
            bleedover_random: if random.is_empty() { 0.0 } else { bleedover(&random).map_err(merr)? },
            bleedover_knn: bleedover(&knn).map_err(merr)?,
            fluency: fluency(&generations).map_err(merr)?,
            seconds,
        });
    }
    Ok(run)
}

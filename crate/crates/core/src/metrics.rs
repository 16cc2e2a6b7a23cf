//! Per-update evaluation metrics, their aggregation, and the bleedover
//! popularity/similarity breakdown.

use std::collections::{BTreeMap, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("continuation has no tokens")]
    EmptyContinuation,
    #[error("probability {0} outside (0, 1]")]
    InvalidProbability(f64),
    #[error("no probability for candidate {0:?}")]
    MissingCandidate(String),
    #[error("empty set")]
    EmptySet,
    #[error("{metric}: need at least 2 samples, got {n}")]
    TooFewSamples { metric: String, n: usize },
}

/// How a multi-token continuation's probability is formed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceMode {
    /// Per-token geometric mean.
    #[default]
    GeometricMean,
    /// Product of token probabilities.
    FullSequence,
}

/// Geometric mean of per-token probabilities.
pub fn sequence_probability(token_probs: &[f64]) -> Result<f64, MetricsError> {
    if let Some(p) = token_probs.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
        return Err(MetricsError::InvalidProbability(*p));
    }
    let logs: Vec<f64> = token_probs.iter().map(|p| p.ln()).collect();
    sequence_probability_from_logprobs(&logs, SequenceMode::GeometricMean)
}

pub fn sequence_probability_from_logprobs(logprobs: &[f64], mode: SequenceMode) -> Result<f64, MetricsError> {
    if logprobs.is_empty() {
        return Err(MetricsError::EmptyContinuation);
    }
    let sum: f64 = logprobs.iter().sum();
    Ok(match mode {
        SequenceMode::GeometricMean => (sum / logprobs.len() as f64).exp(),
        SequenceMode::FullSequence => sum.exp(),
    })
}

/// Candidate probabilities observed on one prompt.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub case_id: String,
    pub prompt: String,
    pub probabilities: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generation: Option<String>,
}

impl ProbeRecord {
    pub fn probability(&self, candidate: &str) -> Result<f64, MetricsError> {
        self.probabilities.get(candidate).copied().ok_or_else(|| MetricsError::MissingCandidate(candidate.to_string()))
    }
}

/// `(P[new] - P[old], 1 if P[new] > P[old] else 0)`.
pub fn compare(p_new: f64, p_old: f64) -> (f64, f64) {
    (p_new - p_old, if p_new > p_old { 1.0 } else { 0.0 })
}

pub fn efficacy(record: &ProbeRecord, new_object: &str, old_object: &str) -> Result<(f64, f64), MetricsError> {
    Ok(compare(record.probability(new_object)?, record.probability(old_object)?))
}

/// Efficacy averaged over the alternative clozes.
pub fn generalization(records: &[ProbeRecord], new_object: &str, old_object: &str) -> Result<(f64, f64), MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptySet);
    }
    let pairs = records.iter().map(|r| efficacy(r, new_object, old_object)).collect::<Result<Vec<_>, _>>()?;
    let n = pairs.len() as f64;
    Ok((pairs.iter().map(|p| p.0).sum::<f64>() / n, pairs.iter().map(|p| p.1).sum::<f64>() / n))
}

/// Mean probability drop of the neighbors' correct objects; gains count as 0.
/// Takes `(before, after)` pairs.
pub fn bleedover(pairs: &[(f64, f64)]) -> Result<f64, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptySet);
    }
    let total: f64 = pairs.iter().map(|(before, after)| (after - before).min(0.0)).sum();
    Ok(-total / pairs.len() as f64 + 0.0)
}

/// Shannon entropy in bits of the whitespace-token n-gram distribution;
/// 0 when the text has fewer than `n` tokens.
pub fn ngram_entropy(text: &str, n: usize) -> f64 {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if n == 0 || tokens.len() < n {
        return 0.0;
    }
    let mut counts: HashMap<&[&str], usize> = HashMap::new();
    for w in tokens.windows(n) {
        *counts.entry(w).or_default() += 1;
    }
    let total = (tokens.len() - n + 1) as f64;
    let mut freqs: Vec<usize> = counts.into_values().collect();
    // Fixed summation order keeps the result independent of hash order.
    freqs.sort_unstable();
    let h: f64 = freqs
        .into_iter()
        .map(|c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum();
    h.max(0.0)
}

/// Mean over generations of `(2/3) H2 + (4/3) H3`.
pub fn fluency<S: AsRef<str>>(generations: &[S]) -> Result<f64, MetricsError> {
    if generations.is_empty() {
        return Err(MetricsError::EmptySet);
    }
    let total: f64 = generations
        .iter()
        .map(|g| 2.0 / 3.0 * ngram_entropy(g.as_ref(), 2) + 4.0 / 3.0 * ngram_entropy(g.as_ref(), 3))
        .sum();
    Ok(total / generations.len() as f64)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateCaseResult {
    pub case: String,
    pub efficacy_diff: f64,
    pub efficacy_success: f64,
    pub gen_diff: f64,
    pub gen_success: f64,
    pub bleedover_random: f64,
    pub bleedover_knn: f64,
    pub fluency: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seconds: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub half_width: f64,
    pub n: usize,
}

/// Mean with a normal-approximation 95% interval half-width.
pub fn summarize(metric: &str, values: &[f64]) -> Result<Summary, MetricsError> {
    let n = values.len();
    if n < 2 {
        return Err(MetricsError::TooFewSamples { metric: metric.to_string(), n });
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok(Summary { mean, half_width: 1.96 * var.sqrt() / (n as f64).sqrt(), n })
}

/// Report columns, in order.
pub const COLUMNS: [&str; 8] =
    ["Efficacy-D", "Efficacy-S", "Gen.-D", "Gen.-S", "Bleedover-Random", "Bleedover-KNN", "Fluency", "seconds/update"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub algorithm: String,
    /// Keyed by column name. Differences, successes and bleedover are in
    /// percentage points. `seconds/update` is absent when no timings were given.
    pub metrics: BTreeMap<String, Summary>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub rows: Vec<AggregateRow>,
}

pub fn aggregate(algorithm: &str, results: &[UpdateCaseResult]) -> Result<AggregateRow, MetricsError> {
    let col = |f: fn(&UpdateCaseResult) -> f64, scale: f64| results.iter().map(|r| f(r) * scale).collect::<Vec<_>>();
    let series: [(&str, Vec<f64>); 7] = [
        (COLUMNS[0], col(|r| r.efficacy_diff, 100.0)),
        (COLUMNS[1], col(|r| r.efficacy_success, 100.0)),
        (COLUMNS[2], col(|r| r.gen_diff, 100.0)),
        (COLUMNS[3], col(|r| r.gen_success, 100.0)),
        (COLUMNS[4], col(|r| r.bleedover_random, 100.0)),
        (COLUMNS[5], col(|r| r.bleedover_knn, 100.0)),
        (COLUMNS[6], col(|r| r.fluency, 1.0)),
    ];
    let mut metrics = BTreeMap::new();
    for (name, values) in series {
        metrics.insert(name.to_string(), summarize(name, &values)?);
    }
    let seconds: Vec<f64> = results.iter().filter_map(|r| r.seconds).collect();
    if seconds.len() >= 2 {
        metrics.insert(COLUMNS[7].to_string(), summarize(COLUMNS[7], &seconds)?);
    }
    Ok(AggregateRow { algorithm: algorithm.to_string(), metrics })
}

impl AggregateReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("algorithm");
        for c in COLUMNS {
            out.push('\t');
            out.push_str(c);
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.algorithm);
            for c in COLUMNS {
                out.push('\t');
                if let Some(s) = row.metrics.get(c) {
                    out.push_str(&format!("{:.1} ± {:.1}", s.mean, s.half_width));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Bleedover of a single neighbor fact under one algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborBleedover {
    pub algorithm: String,
    pub bleedover: f64,
    pub popularity: u64,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleedoverMatrix {
    pub algorithm: String,
    /// Lower edges of bins 1.. (bin 0 is everything below the first edge).
    pub popularity_edges: Vec<f64>,
    pub similarity_edges: Vec<f64>,
    /// `cells[popularity_bin][similarity_bin]`; `None` for empty cells.
    pub cells: Vec<Vec<Option<f64>>>,
}

fn quantile_edges(mut values: Vec<f64>, bins: usize) -> Vec<f64> {
    values.sort_by(f64::total_cmp);
    (1..bins).map(|j| values[j * values.len() / bins]).collect()
}

fn bin_of(x: f64, edges: &[f64]) -> usize {
    edges.iter().take_while(|e| **e <= x).count()
}

/// Z-scores bleedover within each algorithm, then averages it per
/// (popularity quantile, similarity quantile) cell. Quantile edges are
/// shared by all algorithms.
pub fn bleedover_bins(records: &[NeighborBleedover], bins: usize) -> Vec<BleedoverMatrix> {
    if records.is_empty() || bins == 0 {
        return Vec::new();
    }
    let pop_edges = quantile_edges(records.iter().map(|r| r.popularity as f64).collect(), bins);
    let sim_edges = quantile_edges(records.iter().map(|r| r.similarity).collect(), bins);

    let mut by_algo: BTreeMap<&str, Vec<&NeighborBleedover>> = BTreeMap::new();
    for r in records {
        by_algo.entry(&r.algorithm).or_default().push(r);
    }
    by_algo
        .into_iter()
        .map(|(algorithm, rs)| {
            let n = rs.len() as f64;
            let mean = rs.iter().map(|r| r.bleedover).sum::<f64>() / n;
            let constant = rs.iter().all(|r| r.bleedover == rs[0].bleedover);
            let sd = if constant { 0.0 } else { (rs.iter().map(|r| (r.bleedover - mean).powi(2)).sum::<f64>() / n).sqrt() };
            let mut sums = vec![vec![(0.0f64, 0usize); bins]; bins];
            for r in &rs {
                let z = if sd > 0.0 { (r.bleedover - mean) / sd } else { 0.0 };
                let cell = &mut sums[bin_of(r.popularity as f64, &pop_edges)][bin_of(r.similarity, &sim_edges)];
                cell.0 += z;
                cell.1 += 1;
            }
            BleedoverMatrix {
                algorithm: algorithm.to_string(),
                popularity_edges: pop_edges.clone(),
                similarity_edges: sim_edges.clone(),
                cells: sums
                    .into_iter()
                    .map(|row| row.into_iter().map(|(s, c)| (c > 0).then(|| s / c as f64)).collect())
                    .collect(),
            }
        })
        .collect()
}

/// Seeded uniform sample without replacement of `min(m, eligible)` items,
/// skipping those `exclude` rejects.
pub fn sample_random_neighbors<T: Clone>(union: &[T], exclude: impl Fn(&T) -> bool, m: usize, seed: u64) -> Vec<T> {
    let eligible: Vec<&T> = union.iter().filter(|t| !exclude(t)).collect();
    let amount = m.min(eligible.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rand::seq::index::sample(&mut rng, eligible.len(), amount).into_iter().map(|i| eligible[i].clone()).collect()
}

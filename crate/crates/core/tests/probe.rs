mod common;

use std::collections::BTreeSet;

use common::*;
use factdiff_core::pipeline::read_dataset;
use factdiff_core::probe::{
    case_requests, emit_probe_requests, plan_cases, read_requests_jsonl, read_responses_jsonl, score_run,
    write_requests_jsonl, write_responses_jsonl, EvalCase, ProbeError, ProbeMode, ProbeParams, ProbeRequest,
    ProbeResponse, RequestKind,
};

fn fixture_cases(params: &ProbeParams) -> Vec<EvalCase> {
    let records = read_dataset(&fixtures().join("golden/dataset_repl.jsonl")).unwrap();
    plan_cases(&records, params).unwrap()
}

/// A model that answers every request with the same probabilities.
fn answer(requests: &[ProbeRequest], lp: f64) -> Vec<ProbeResponse> {
    requests
        .iter()
        .map(|r| ProbeResponse {
            case_id: r.case_id.clone(),
            logprobs: r.continuations.iter().map(|_| vec![lp]).collect(),
            generation: (r.kind == RequestKind::Generate).then(|| "a b c a b".to_string()),
            seconds: None,
        })
        .collect()
}

#[test]
fn fixture_dataset_plans_cases() {
    let params = ProbeParams::default();
    let cases = fixture_cases(&params);
    assert!(!cases.is_empty());
    for c in &cases {
        assert!(!c.neighbors.is_empty());
        assert!(c.random.iter().all(|n| n.owner != c.key));
        assert!(c.random.len() <= params.random_neighbors);
        assert!(!c.clozes.is_empty() && c.clozes.len() <= params.max_alt_clozes);
    }
    assert_eq!(fixture_cases(&params), cases);
}

#[test]
fn case_ids_do_not_depend_on_mode() {
    let params = ProbeParams::default();
    let cases = fixture_cases(&params);
    let ids = |mode| emit_probe_requests(&cases, mode, &params).into_iter().map(|r| r.case_id).collect::<Vec<_>>();
    let pre = ids(ProbeMode::Pre);
    assert_eq!(pre, ids(ProbeMode::Post));
    assert_eq!(pre, ids(ProbeMode::PromptBaseline));
    assert_eq!(pre.iter().collect::<BTreeSet<_>>().len(), pre.len(), "case ids collide");
}

#[test]
fn prompt_baseline_prefixes_every_prompt() {
    let params = ProbeParams::default();
    let cases = fixture_cases(&params);
    let plain = emit_probe_requests(&cases, ProbeMode::Pre, &params);
    let prefixed = emit_probe_requests(&cases, ProbeMode::PromptBaseline, &params);
    let mut i = 0;
    for case in &cases {
        for _ in case_requests(case, &params) {
            let want = format!("{}. {}", case.verbalization.update_sentence, plain[i].prompt);
            assert_eq!(prefixed[i].prompt, want);
            assert_eq!(prefixed[i].continuations, plain[i].continuations);
            i += 1;
        }
    }
    assert_eq!(i, prefixed.len());
}

#[test]
fn empty_dataset_emits_nothing() {
    let params = ProbeParams::default();
    let cases = plan_cases(&[], &params).unwrap();
    assert!(cases.is_empty());
    assert!(emit_probe_requests(&cases, ProbeMode::Pre, &params).is_empty());
    assert!(score_run(&cases, &params, "none", &[], &[]).unwrap().results.is_empty());
}

#[test]
fn request_and_response_files_round_trip() {
    let params = ProbeParams::default();
    let requests = emit_probe_requests(&fixture_cases(&params), ProbeMode::Post, &params);
    let mut buf = Vec::new();
    write_requests_jsonl(&requests, &mut buf).unwrap();
    assert_eq!(read_requests_jsonl(&buf[..]).unwrap(), requests);
    let responses = answer(&requests, -0.5);
    let mut buf = Vec::new();
    write_responses_jsonl(&responses, &mut buf).unwrap();
    assert_eq!(read_responses_jsonl(&buf[..]).unwrap(), responses);
}

#[test]
fn unchanged_model_scores_zero() {
    let params = ProbeParams::default();
    let cases = fixture_cases(&params);
    let requests = emit_probe_requests(&cases, ProbeMode::Pre, &params);
    let responses = answer(&requests, -0.7);
    let run = score_run(&cases, &params, "noop", &responses, &responses).unwrap();
    assert_eq!(run.results.len(), cases.len());
    for r in &run.results {
        assert_eq!(r.efficacy_diff, 0.0);
        assert_eq!(r.efficacy_success, 0.0);
        assert_eq!(r.bleedover_knn, 0.0);
        assert_eq!(r.bleedover_random, 0.0);
    }
    assert!(run.neighbors.iter().all(|n| n.algorithm == "noop" && n.bleedover == 0.0));
}

#[test]
fn missing_response_is_reported() {
    let params = ProbeParams::default();
    let cases = fixture_cases(&params);
    let requests = emit_probe_requests(&cases, ProbeMode::Pre, &params);
    let full = answer(&requests, -0.7);
    let mut short = full.clone();
    let dropped = short.remove(3).case_id;
    match score_run(&cases, &params, "x", &full, &short) {
        Err(ProbeError::UnansweredRequest(ids)) => assert_eq!(ids, vec![dropped]),
        other => panic!("expected an unanswered request, got {other:?}"),
    }
}

#[test]
fn duplicate_response_is_reported() {
    let params = ProbeParams::default();
    let cases = fixture_cases(&params);
    let requests = emit_probe_requests(&cases, ProbeMode::Pre, &params);
    let mut responses = answer(&requests, -0.7);
    responses.push(responses[0].clone());
    match score_run(&cases, &params, "x", &responses, &answer(&requests, -0.7)) {
        Err(ProbeError::DuplicateResponse(ids)) => assert_eq!(ids, vec![requests[0].case_id.clone()]),
        other => panic!("expected a duplicate, got {other:?}"),
    }
}

#[test]
fn malformed_response_is_reported() {
    let params = ProbeParams::default();
    let cases = fixture_cases(&params);
    let requests = emit_probe_requests(&cases, ProbeMode::Pre, &params);
    let pre = answer(&requests, -0.7);
    let mut post = pre.clone();
    post[0].logprobs = vec![vec![0.3]];
    assert!(matches!(score_run(&cases, &params, "x", &pre, &post), Err(ProbeError::MalformedResponse { .. })));
}

//! Exercises the scorer-process protocol against small python3 responders.

use std::time::Duration;

use inferbias::{generate_pairs, score_external, ExternalSpec, GenerateOptions, ProbeKind, ScoreError, ScoredPair, TemplatePair, WordLists};

const PRELUDE: &str = r#"
import json, sys
def batches():
    batch = []
    for line in sys.stdin:
        line = line.strip()
        if not line:
            yield batch
            batch = []
        else:
            batch.append(json.loads(line))
    if batch:
        yield batch
def send(obj):
    print(json.dumps(obj), flush=True)
"#;

fn responder(body: &str, batch_size: usize) -> ExternalSpec {
    ExternalSpec {
        program: "python3".into(),
        args: vec!["-c".into(), format!("{PRELUDE}\n{body}")],
        batch_size,
        timeout: Some(Duration::from_secs(20)),
    }
}

fn pairs(n: usize) -> Vec<TemplatePair> {
    let opts = GenerateOptions {
        limit_premise: Some(2),
        limit_verbs: Some(2),
        ..Default::default()
    };
    generate_pairs(ProbeKind::Gender, &WordLists::bundled(), &opts).take(n).collect()
}

fn run(spec: &ExternalSpec, input: Vec<TemplatePair>) -> Result<Vec<ScoredPair>, ScoreError> {
    let mut out = Vec::new();
    score_external(input, spec, |s| {
        out.push(s);
        Ok(())
    })?;
    Ok(out)
}

const NEUTRAL: &str = r#"
send({"ready": True})
for batch in batches():
    for r in batch:
        send({"id": r["id"], "e": 0.0, "n": 1.0, "c": 0.0})
"#;

#[test]
fn constant_responder_scores_everything_neutral() {
    let input = pairs(150);
    let out = run(&responder(NEUTRAL, 64), input.clone()).unwrap();
    assert_eq!(out.len(), 150);
    for (s, p) in out.iter().zip(&input) {
        assert_eq!(s.pair_id, p.id);
        assert_eq!((s.triple.e, s.triple.n, s.triple.c), (0.0, 1.0, 0.0));
        assert_eq!(s.scorer_id, "external:python3");
    }
}

#[test]
fn reordered_responses_come_back_in_input_order() {
    let body = r#"
import hashlib
send({"ready": True})
for batch in batches():
    for r in reversed(batch):
        h = int(hashlib.sha256(r["id"].encode()).hexdigest()[:8], 16) / 0xffffffff
        send({"id": r["id"], "e": h / 2, "n": 1 - h, "c": h / 2})
"#;
    let input = pairs(100);
    let first = run(&responder(body, 7), input.clone()).unwrap();
    let ids: Vec<&str> = first.iter().map(|s| s.pair_id.as_str()).collect();
    let want: Vec<&str> = input.iter().map(|p| p.id.as_str()).collect();
    assert_eq!(ids, want);
    // Deterministic responders give byte-identical prediction lines.
    let second = run(&responder(body, 13), input).unwrap();
    let lines = |v: &[ScoredPair]| v.iter().map(|s| serde_json::to_string(s).unwrap()).collect::<Vec<_>>();
    assert_eq!(lines(&first), lines(&second));
}

#[test]
fn omitted_id_is_a_transport_error() {
    let body = r#"
send({"ready": True})
for batch in batches():
    for r in batch[1:]:
        send({"id": r["id"], "e": 0.2, "n": 0.6, "c": 0.2})
"#;
    match run(&responder(body, 64), pairs(10)) {
        Err(ScoreError::Transport { unscored, .. }) => assert_eq!(unscored, 1),
        other => panic!("expected transport error, got {other:?}"),
    }
}

#[test]
fn early_exit_counts_every_unscored_pair() {
    let body = r#"
send({"ready": True})
for batch in batches():
    for r in batch:
        send({"id": r["id"], "e": 0.2, "n": 0.6, "c": 0.2})
    break
"#;
    match run(&responder(body, 4), pairs(10)) {
        Err(ScoreError::Transport { unscored, .. }) => assert_eq!(unscored, 6),
        other => panic!("expected transport error, got {other:?}"),
    }
}

#[test]
fn sum_violation_is_a_validation_error() {
    let body = r#"
send({"ready": True})
for batch in batches():
    for r in batch:
        send({"id": r["id"], "e": 0.4, "n": 0.4, "c": 0.4})
"#;
    assert!(matches!(run(&responder(body, 64), pairs(3)), Err(ScoreError::Validation { .. })));
}

#[test]
fn small_drift_is_renormalized() {
    let body = r#"
send({"ready": True})
for batch in batches():
    for r in batch:
        send({"id": r["id"], "e": 0.33333, "n": 0.33333, "c": 0.33333})
"#;
    let out = run(&responder(body, 64), pairs(3)).unwrap();
    for s in out {
        assert!((s.triple.e + s.triple.n + s.triple.c - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn malformed_line_is_a_protocol_error_citing_it() {
    let body = r#"
send({"ready": True})
for batch in batches():
    print("not json", flush=True)
"#;
    match run(&responder(body, 64), pairs(3)) {
        Err(ScoreError::Protocol { line, content, .. }) => {
            assert_eq!(line, 2);
            assert_eq!(content, "not json");
        }
        other => panic!("expected protocol error, got {other:?}"),
    }
}

#[test]
fn unknown_and_duplicate_ids_are_protocol_errors() {
    let unknown = r#"
send({"ready": True})
for batch in batches():
    send({"id": "nobody", "e": 0.2, "n": 0.6, "c": 0.2})
"#;
    assert!(matches!(run(&responder(unknown, 64), pairs(3)), Err(ScoreError::Protocol { .. })));
    let duplicate = r#"
send({"ready": True})
for batch in batches():
    send({"id": batch[0]["id"], "e": 0.2, "n": 0.6, "c": 0.2})
    send({"id": batch[0]["id"], "e": 0.2, "n": 0.6, "c": 0.2})
"#;
    assert!(matches!(run(&responder(duplicate, 64), pairs(3)), Err(ScoreError::Protocol { .. })));
}

#[test]
fn missing_handshake_is_reported() {
    let silent = "import sys\nsys.exit(0)\n";
    assert!(matches!(run(&responder(silent, 64), pairs(3)), Err(ScoreError::Transport { unscored: 3, .. })));
    let chatty = "print('hello', flush=True)\nimport sys\nsys.stdin.read()\n";
    assert!(matches!(run(&responder(chatty, 64), pairs(3)), Err(ScoreError::Protocol { line: 1, .. })));
}

#[test]
fn stalled_responder_times_out() {
    let body = "import time\nsend({'ready': True})\ntime.sleep(30)\n";
    let mut spec = responder(body, 64);
    spec.timeout = Some(Duration::from_millis(300));
    assert!(matches!(run(&spec, pairs(3)), Err(ScoreError::Timeout(_))));
}

#[test]
fn missing_program_fails_to_spawn() {
    let spec = ExternalSpec::from_command_line("/nonexistent/scorer").unwrap();
    assert!(matches!(run(&spec, pairs(1)), Err(ScoreError::Spawn { .. })));
}

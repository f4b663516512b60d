//! Entailment scorers.
//!
//! Every scorer maps a premise/hypothesis pair to a [`PredictionTriple`].
//! Three are provided:
//!
//! * [`score_builtin`], a deterministic cosine heuristic over an embedding
//!   table. It is plumbing for end-to-end runs, not an NLI model.
//! * [`score_mock`], hash-seeded triples for exercising the metrics.
//! * [`score_external`], a client for a child process that hosts a real
//!   model and speaks line-delimited JSON on stdin/stdout:
//!
//! ```text
//! child  -> {"ready": true}
//! parent -> {"id": "...", "premise": "...", "hypothesis": "..."}   (x batch)
//! parent -> <blank line>
//! child  -> {"id": "...", "e": 0.1, "n": 0.8, "c": 0.1}            (x batch, any order)
//! ```

use std::collections::HashMap;
use std::io::{self, BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::embedding::EmbeddingSet;
use crate::numeric::{dot, norm};
use crate::templates::TemplatePair;

/// Tolerance on `e + n + c = 1` for stored triples.
pub const TRIPLE_SUM_TOLERANCE: f64 = 1e-6;
/// Tolerance on `e + n + c = 1` for triples received from other programs.
pub const WIRE_SUM_TOLERANCE: f64 = 1e-4;
pub const DEFAULT_BATCH_SIZE: usize = 64;

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("invalid triple: {0}")]
    InvalidTriple(String),
    #[error("scorer process ended early ({reason}); {unscored} pairs left unscored")]
    Transport { unscored: usize, reason: String },
    #[error("protocol error at response line {line}: {reason}: {content:?}")]
    Protocol {
        line: usize,
        content: String,
        reason: String,
    },
    #[error("response for {id:?} failed validation: {reason}")]
    Validation { id: String, reason: String },
    #[error("no response within {0:?}")]
    Timeout(Duration),
    #[error("could not start scorer {program:?}: {source}")]
    Spawn {
        program: String,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Entail,
    Neutral,
    Contradict,
}

impl std::str::FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "entail" | "entailment" | "e" => Ok(Label::Entail),
            "neutral" | "n" => Ok(Label::Neutral),
            "contradict" | "contradiction" | "c" => Ok(Label::Contradict),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

/// Probabilities of entail, neutral and contradict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTriple")]
pub struct PredictionTriple {
    pub e: f64,
    pub n: f64,
    pub c: f64,
}

#[derive(Deserialize)]
struct RawTriple {
    e: f64,
    n: f64,
    c: f64,
}

impl TryFrom<RawTriple> for PredictionTriple {
    type Error = ScoreError;

    fn try_from(raw: RawTriple) -> Result<Self, Self::Error> {
        PredictionTriple::from_probabilities(raw.e, raw.n, raw.c, WIRE_SUM_TOLERANCE)
    }
}

impl PredictionTriple {
    /// A triple that already satisfies the invariants within
    /// [`TRIPLE_SUM_TOLERANCE`].
    pub fn new(e: f64, n: f64, c: f64) -> Result<Self, ScoreError> {
        let t = Self { e, n, c };
        t.check(TRIPLE_SUM_TOLERANCE)?;
        Ok(t)
    }

    /// Accepts probabilities summing to 1 within `tolerance` and renormalizes them.
    pub fn from_probabilities(e: f64, n: f64, c: f64, tolerance: f64) -> Result<Self, ScoreError> {
        let raw = Self { e, n, c };
        raw.check(tolerance)?;
        let sum = e + n + c;
        Ok(Self {
            e: e / sum,
            n: n / sum,
            c: c / sum,
        })
    }

    /// Normalizes non-negative weights.
    pub(crate) fn from_weights(e: f64, n: f64, c: f64) -> Self {
        let sum = e + n + c;
        Self {
            e: e / sum,
            n: n / sum,
            c: c / sum,
        }
    }

    fn check(&self, tolerance: f64) -> Result<(), ScoreError> {
        for (name, v) in [("e", self.e), ("n", self.n), ("c", self.c)] {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(ScoreError::InvalidTriple(format!("{name} = {v} is outside [0, 1]")));
            }
        }
        let sum = self.e + self.n + self.c;
        if (sum - 1.0).abs() > tolerance {
            return Err(ScoreError::InvalidTriple(format!(
                "e + n + c = {sum}, expected 1 within {tolerance:e}"
            )));
        }
        Ok(())
    }

    pub fn get(&self, label: Label) -> f64 {
        match label {
            Label::Entail => self.e,
            Label::Neutral => self.n,
            Label::Contradict => self.c,
        }
    }
}

/// One scored pair; serialized as a prediction line `{id, e, n, c, scorer}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    #[serde(rename = "id")]
    pub pair_id: String,
    #[serde(flatten)]
    pub triple: PredictionTriple,
    #[serde(rename = "scorer", default = "unknown_scorer")]
    pub scorer_id: String,
}

fn unknown_scorer() -> String {
    "unknown".to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuiltinParams {
    /// Sharpness of the logistic response to cosine.
    pub a: f64,
    /// Cosine at which entail and contradict are equally likely.
    pub t: f64,
    /// Unnormalized neutral weight. With the default of 1 the neutral
    /// probability never exceeds 1/3.
    pub neutral_weight: f64,
}

impl Default for BuiltinParams {
    fn default() -> Self {
        Self {
            a: 5.0,
            t: 0.5,
            neutral_weight: 1.0,
        }
    }
}

pub const BUILTIN_SCORER_ID: &str = "builtin";

const STOPWORDS: [&str; 3] = ["the", "a", "an"];

/// Lowercased tokens of a template sentence without articles or punctuation.
pub fn content_tokens(sentence: &str) -> Vec<String> {
    sentence
        .split_whitespace()
        .map(|t| t.trim_matches(|c: char| c == '.' || c == ',' || c == '!' || c == '?'))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .filter(|t| !STOPWORDS.contains(&t.as_str()))
        .collect()
}

fn mean_vector(set: &EmbeddingSet, sentence: &str) -> Vec<f64> {
    let mut mean = vec![0.0; set.dimension()];
    let tokens = content_tokens(sentence);
    if tokens.is_empty() {
        return mean;
    }
    for t in &tokens {
        if let Some(v) = set.get(t) {
            mean.iter_mut().zip(v).for_each(|(m, x)| *m += x);
        }
    }
    let n = tokens.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

/// Cosine between the mean token vectors of two sentences, 0 when either is zero.
pub fn sentence_cosine(set: &EmbeddingSet, premise: &str, hypothesis: &str) -> f64 {
    let p = mean_vector(set, premise);
    let h = mean_vector(set, hypothesis);
    let (np, nh) = (norm(&p), norm(&h));
    if np == 0.0 || nh == 0.0 {
        return 0.0;
    }
    (dot(&p, &h) / (np * nh)).clamp(-1.0, 1.0)
}

/// Triple from a cosine: weights `(exp(a(c-t)), neutral_weight, exp(-a(c-t)))`, normalized.
pub fn triple_from_cosine(cosine: f64, params: &BuiltinParams) -> PredictionTriple {
    let x = params.a * (cosine - params.t);
    let m = x.abs();
    PredictionTriple::from_weights(
        (x - m).exp(),
        params.neutral_weight * (-m).exp(),
        (-x - m).exp(),
    )
}

pub fn score_builtin(pair: &TemplatePair, set: &EmbeddingSet, params: &BuiltinParams) -> PredictionTriple {
    triple_from_cosine(sentence_cosine(set, &pair.premise, &pair.hypothesis), params)
}

/// Deterministic pseudo-random triple keyed by `(pair_id, seed)`.
pub fn score_mock(pair_id: &str, seed: u64) -> PredictionTriple {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(pair_id.as_bytes());
    let digest = hasher.finalize();
    // Exponential draws normalize to a flat Dirichlet sample.
    let weights: Vec<f64> = digest[..24]
        .chunks_exact(8)
        .map(|chunk| {
            let bits = u64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
            let u = ((bits >> 11) as f64 + 0.5) / (1u64 << 53) as f64;
            -u.ln()
        })
        .collect();
    PredictionTriple::from_weights(weights[0], weights[1], weights[2])
}

pub fn mock_scorer_id(seed: u64) -> String {
    format!("mock:{seed}")
}

/// How to launch an external scorer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalSpec {
    pub program: String,
    #[serde(default)]
    pub args: Vec<String>,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    /// Longest wait for any single response line; `None` waits forever.
    #[serde(default)]
    pub timeout: Option<Duration>,
}

fn default_batch_size() -> usize {
    DEFAULT_BATCH_SIZE
}

impl ExternalSpec {
    /// Splits a command line on whitespace; the first word is the program.
    pub fn from_command_line(command: &str) -> Option<Self> {
        let mut words = command.split_whitespace().map(str::to_string);
        let program = words.next()?;
        Some(Self {
            program,
            args: words.collect(),
            batch_size: DEFAULT_BATCH_SIZE,
            timeout: None,
        })
    }

    pub fn scorer_id(&self) -> String {
        format!("external:{}", self.program)
    }
}

#[derive(Serialize)]
struct Request<'a> {
    id: &'a str,
    premise: &'a str,
    hypothesis: &'a str,
}

#[derive(Deserialize)]
struct Response {
    id: String,
    e: f64,
    n: f64,
    c: f64,
}

struct ChildGuard {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<(usize, io::Result<String>)>,
    timeout: Option<Duration>,
}

impl ChildGuard {
    fn spawn(spec: &ExternalSpec) -> Result<Self, ScoreError> {
        let mut child = Command::new(&spec.program)
            .args(&spec.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|source| ScoreError::Spawn {
                program: spec.program.clone(),
                source,
            })?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for (i, line) in BufReader::new(stdout).lines().enumerate() {
                let failed = line.is_err();
                if tx.send((i + 1, line)).is_err() || failed {
                    break;
                }
            }
        });
        Ok(Self {
            child,
            stdin,
            lines: rx,
            timeout: spec.timeout,
        })
    }

    /// Next response line, or `None` once the child closed its stdout.
    fn next_line(&self) -> Result<Option<(usize, String)>, ScoreError> {
        let received = match self.timeout {
            Some(t) => match self.lines.recv_timeout(t) {
                Ok(v) => Some(v),
                Err(RecvTimeoutError::Disconnected) => None,
                Err(RecvTimeoutError::Timeout) => return Err(ScoreError::Timeout(t)),
            },
            None => self.lines.recv().ok(),
        };
        match received {
            Some((n, Ok(line))) => Ok(Some((n, line))),
            Some((_, Err(e))) => Err(ScoreError::Io(e)),
            None => Ok(None),
        }
    }

    fn close_input(&mut self) {
        self.stdin.take();
    }
}

impl Drop for ChildGuard {
    fn drop(&mut self) {
        self.close_input();
        let deadline = Instant::now() + Duration::from_secs(2);
        while Instant::now() < deadline {
            match self.child.try_wait() {
                Ok(Some(_)) | Err(_) => return,
                Ok(None) => thread::sleep(Duration::from_millis(10)),
            }
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Scores `pairs` with an external process, calling `sink` for each pair in
/// input order. Returns the number of pairs scored.
pub fn score_external<I, F>(pairs: I, spec: &ExternalSpec, mut sink: F) -> Result<usize, ScoreError>
where
    I: IntoIterator<Item = TemplatePair>,
    F: FnMut(ScoredPair) -> io::Result<()>,
{
    assert!(spec.batch_size > 0, "batch size must be positive");
    let scorer_id = spec.scorer_id();
    let mut pairs = pairs.into_iter().peekable();
    let mut child = ChildGuard::spawn(spec)?;

    loop {
        match child.next_line()? {
            None => {
                return Err(ScoreError::Transport {
                    unscored: pairs.count(),
                    reason: "exited before signalling ready".into(),
                })
            }
            Some((_, line)) if line.trim().is_empty() => continue,
            Some((n, line)) => {
                let ready = serde_json::from_str::<serde_json::Value>(&line)
                    .ok()
                    .and_then(|v| v.get("ready").and_then(serde_json::Value::as_bool));
                if ready != Some(true) {
                    return Err(ScoreError::Protocol {
                        line: n,
                        content: line,
                        reason: "expected {\"ready\": true}".into(),
                    });
                }
                break;
            }
        }
    }

    let mut scored = 0usize;
    let mut batch: Vec<TemplatePair> = Vec::with_capacity(spec.batch_size);
    let mut payload = Vec::new();
    loop {
        batch.clear();
        batch.extend(pairs.by_ref().take(spec.batch_size));
        if batch.is_empty() {
            break;
        }
        payload.clear();
        for p in &batch {
            serde_json::to_writer(
                &mut payload,
                &Request {
                    id: &p.id,
                    premise: &p.premise,
                    hypothesis: &p.hypothesis,
                },
            )
            .map_err(io::Error::other)?;
            payload.push(b'\n');
        }
        payload.push(b'\n');
        let written = match child.stdin.as_mut() {
            Some(stdin) => stdin.write_all(&payload).and_then(|_| stdin.flush()),
            None => Err(io::Error::from(io::ErrorKind::BrokenPipe)),
        };
        if pairs.peek().is_none() {
            child.close_input();
        }
        if let Err(e) = written {
            if e.kind() != io::ErrorKind::BrokenPipe {
                return Err(e.into());
            }
            // The child is gone; its stdout tells whether anything was answered.
        }

        let slots: HashMap<&str, usize> = batch.iter().enumerate().map(|(i, p)| (p.id.as_str(), i)).collect();
        let mut answers: Vec<Option<PredictionTriple>> = vec![None; batch.len()];
        let mut answered = 0;
        while answered < batch.len() {
            let Some((n, line)) = child.next_line()? else {
                return Err(ScoreError::Transport {
                    unscored: batch.len() - answered + pairs.count(),
                    reason: "exited before answering every request".into(),
                });
            };
            if line.trim().is_empty() {
                continue;
            }
            let response: Response = serde_json::from_str(&line).map_err(|e| ScoreError::Protocol {
                line: n,
                content: line.clone(),
                reason: format!("malformed response: {e}"),
            })?;
            let Some(&slot) = slots.get(response.id.as_str()) else {
                return Err(ScoreError::Protocol {
                    line: n,
                    content: line,
                    reason: "unknown id".into(),
                });
            };
            if answers[slot].is_some() {
                return Err(ScoreError::Protocol {
                    line: n,
                    content: line,
                    reason: "duplicate response id".into(),
                });
            }
            let triple = PredictionTriple::from_probabilities(
                response.e,
                response.n,
                response.c,
                WIRE_SUM_TOLERANCE,
            )
            .map_err(|e| ScoreError::Validation {
                id: response.id.clone(),
                reason: e.to_string(),
            })?;
            answers[slot] = Some(triple);
            answered += 1;
        }
        for (pair, triple) in batch.iter().zip(answers) {
            sink(ScoredPair {
                pair_id: pair.id.clone(),
                triple: triple.expect("every slot answered"),
                scorer_id: scorer_id.clone(),
            })?;
            scored += 1;
        }
    }
    Ok(scored)
}

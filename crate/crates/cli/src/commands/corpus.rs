use std::cell::RefCell;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::Context as _;
use clap::ValueEnum;
use inferbias::scoring::{mock_scorer_id, BUILTIN_SCORER_ID};
use inferbias::templates::ProbePlan;
use inferbias::{
    score_builtin, score_external, score_mock, BuiltinParams, EmbeddingSet, ExternalSpec, GenerateOptions, ObjectScope,
    ProbeKind, ScoredPair, TemplatePair,
};
use rayon::prelude::*;

use crate::config::{pick, Config};
use crate::exit::{EmptyInput, Usage};
use crate::{io, Context};

/// Which probe to expand and how.
#[derive(Debug, Clone, clap::Args)]
pub struct CorpusArgs {
    /// gender, nationality or religion.
    #[arg(long)]
    pub probe: Option<ProbeKind>,
    /// Gender objects: `full` pairs every verb with all 184 objects; `restricted`
    /// pairs person objects only with interaction verbs.
    #[arg(long)]
    pub scope: Option<ObjectScope>,
    /// Drop repeated polarity terms (changes the counts).
    #[arg(long)]
    pub dedupe_polarity: bool,
    /// Keep the first N premise subjects.
    #[arg(long)]
    pub limit_premise: Option<usize>,
    /// Keep the first N verbs.
    #[arg(long)]
    pub limit_verbs: Option<usize>,
    /// Keep the first N objects.
    #[arg(long)]
    pub limit_objects: Option<usize>,
}

impl CorpusArgs {
    pub fn resolve(&self, config: &Config) -> anyhow::Result<(ProbeKind, GenerateOptions)> {
        let probe = self
            .probe
            .or(config.probe)
            .ok_or_else(|| Usage("--probe is required (gender, nationality or religion)".into()))?;
        let options = GenerateOptions {
            object_scope: pick(self.scope, config.object_scope, ObjectScope::Full),
            dedupe_polarity: self.dedupe_polarity || config.dedupe_polarity.unwrap_or(false),
            limit_premise: self.limit_premise.or(config.limit_premise),
            limit_verbs: self.limit_verbs.or(config.limit_verbs),
            limit_objects: self.limit_objects.or(config.limit_objects),
        };
        Ok((probe, options))
    }
}

/// Builtin scorer parameters.
#[derive(Debug, Clone, clap::Args)]
pub struct BuiltinArgs {
    /// Logistic sharpness.
    #[arg(long)]
    pub a: Option<f64>,
    /// Cosine at which entail and contradict balance.
    #[arg(long)]
    pub t: Option<f64>,
    /// Unnormalized neutral weight (1 keeps neutral at or below 1/3).
    #[arg(long)]
    pub neutral_weight: Option<f64>,
}

impl BuiltinArgs {
    pub fn resolve(&self, config: &Config) -> anyhow::Result<BuiltinParams> {
        let d = BuiltinParams::default();
        let p = BuiltinParams {
            a: pick(self.a, config.builtin_a, d.a),
            t: pick(self.t, config.builtin_t, d.t),
            neutral_weight: pick(self.neutral_weight, config.builtin_neutral_weight, d.neutral_weight),
        };
        if !(p.a.is_finite() && p.t.is_finite() && p.neutral_weight.is_finite() && p.neutral_weight > 0.0) {
            return Err(Usage("builtin parameters must be finite with a positive neutral weight".into()).into());
        }
        Ok(p)
    }
}

pub fn plan(ctx: &Context, corpus: &CorpusArgs, rec: Option<&mut crate::manifest::Recorder>) -> anyhow::Result<Arc<ProbePlan>> {
    let (probe, options) = corpus.resolve(&ctx.config)?;
    let lists = ctx.word_lists(rec)?;
    Ok(Arc::new(ProbePlan::new(probe, &lists, &options)))
}

/// Runs `per_premise` over premise partitions in parallel waves and hands the
/// results to `sink` in premise order.
pub fn in_waves<T: Send>(
    plan: &Arc<ProbePlan>,
    per_premise: impl Fn(usize) -> T + Sync + Send,
    mut sink: impl FnMut(T) -> anyhow::Result<()>,
) -> anyhow::Result<()> {
    let wave = rayon::current_num_threads().max(1) * 2;
    let mut start = 0;
    while start < plan.premise_count() {
        let end = (start + wave).min(plan.premise_count());
        let results: Vec<T> = (start..end).into_par_iter().map(&per_premise).collect();
        for r in results {
            sink(r)?;
        }
        start = end;
    }
    Ok(())
}

/// Scores every pair of `plan` with the builtin scorer, in stream order.
pub fn score_plan_builtin(
    plan: &Arc<ProbePlan>,
    table: &EmbeddingSet,
    params: &BuiltinParams,
    mut sink: impl FnMut(Vec<ScoredPair>) -> anyhow::Result<()>,
) -> anyhow::Result<()> {
    in_waves(
        plan,
        |p| {
            plan.stream_premise(p)
                .map(|pair| ScoredPair {
                    triple: score_builtin(&pair, table, params),
                    pair_id: pair.id,
                    scorer_id: BUILTIN_SCORER_ID.to_string(),
                })
                .collect::<Vec<_>>()
        },
        &mut sink,
    )
}

#[derive(Debug, clap::Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// JSON-lines file to write.
    #[arg(long)]
    out: PathBuf,
}

pub fn generate(ctx: &Context, a: GenerateArgs) -> anyhow::Result<()> {
    let mut rec = ctx.recorder("generate");
    let plan = plan(ctx, &a.corpus, Some(&mut rec))?;
    let mut out = io::create(&a.out)?;
    in_waves(
        &plan,
        |p| {
            let mut buf = Vec::new();
            for pair in plan.stream_premise(p) {
                serde_json::to_writer(&mut buf, &pair).expect("pairs serialize");
                buf.push(b'\n');
            }
            buf
        },
        |buf| Ok(out.write_all(&buf)?),
    )?;
    out.flush()?;
    drop(out);
    rec.output(&a.out);
    rec.write(None)?;
    eprintln!("wrote {} {} pairs to {}", plan.count(), plan.probe(), a.out.display());
    Ok(())
}

#[derive(Debug, clap::Args)]
pub struct CountArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
}

pub fn count(ctx: &Context, a: CountArgs) -> anyhow::Result<()> {
    println!("{}", plan(ctx, &a.corpus, None)?.count());
    Ok(())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScorerKind {
    /// Cosine heuristic over an embedding table.
    Builtin,
    /// Hash-seeded pseudo-random triples.
    Mock,
    /// A child process speaking the JSON-lines scorer protocol.
    External,
}

#[derive(Debug, clap::Args)]
pub struct ScoreArgs {
    /// Pairs written by `generate`.
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long, value_enum)]
    scorer: ScorerKind,
    /// Embedding table for the builtin scorer.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[command(flatten)]
    builtin: BuiltinArgs,
    /// Seed for the mock scorer.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Command line of the external scorer, e.g. "python3 bridge.py".
    #[arg(long)]
    command: Option<String>,
    /// Pairs per external request batch.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Longest wait for one external response line, in seconds.
    #[arg(long)]
    timeout_secs: Option<f64>,
    /// Prediction JSON-lines file to write.
    #[arg(long)]
    out: PathBuf,
}

const SCORE_BLOCK: usize = 16_384;

fn score_in_blocks(
    pairs: &Path,
    out: &mut impl Write,
    score: impl Fn(TemplatePair) -> ScoredPair + Sync + Send,
) -> anyhow::Result<usize> {
    let mut block: Vec<(usize, String)> = Vec::with_capacity(SCORE_BLOCK);
    let mut total = 0;
    let mut flush = |block: &mut Vec<(usize, String)>, out: &mut dyn Write| -> anyhow::Result<()> {
        let lines: Vec<String> = block
            .par_iter()
            .map(|(n, line)| {
                let pair: TemplatePair = io::parse_line(pairs, *n, line)?;
                Ok(serde_json::to_string(&score(pair))?)
            })
            .collect::<anyhow::Result<_>>()?;
        for l in lines {
            out.write_all(l.as_bytes())?;
            out.write_all(b"\n")?;
        }
        total += block.len();
        block.clear();
        Ok(())
    };
    io::for_each_line(pairs, |n, line| {
        block.push((n, line));
        if block.len() == SCORE_BLOCK {
            flush(&mut block, out)?;
        }
        Ok(())
    })?;
    flush(&mut block, out)?;
    Ok(total)
}

/// Lazily parsed pairs; the first parse error ends the stream and is kept.
fn pair_stream<'a>(
    path: &'a Path,
    reader: Box<dyn BufRead>,
    error: &'a RefCell<Option<anyhow::Error>>,
) -> impl Iterator<Item = TemplatePair> + 'a {
    reader.lines().enumerate().map_while(move |(i, line)| {
        let parsed = line
            .with_context(|| format!("reading {}", path.display()))
            .and_then(|l| if l.trim().is_empty() { Ok(None) } else { io::parse_line(path, i + 1, &l).map(Some) });
        match parsed {
            Ok(p) => Some(p),
            Err(e) => {
                *error.borrow_mut() = Some(e);
                None
            }
        }
    })
    .flatten()
}

pub fn score(ctx: &Context, a: ScoreArgs) -> anyhow::Result<()> {
    let mut rec = ctx.recorder("score");
    rec.input(&a.pairs);
    let mut out = io::create(&a.out)?;
    let scored = match a.scorer {
        ScorerKind::Builtin => {
            let path = a
                .embeddings
                .as_ref()
                .ok_or_else(|| Usage("the builtin scorer needs --embeddings".into()))?;
            rec.input(path);
            let table = io::read_embeddings(path, None)?;
            let params = a.builtin.resolve(&ctx.config)?;
            score_in_blocks(&a.pairs, &mut out, |pair| ScoredPair {
                triple: score_builtin(&pair, &table, &params),
                pair_id: pair.id,
                scorer_id: BUILTIN_SCORER_ID.to_string(),
            })?
        }
        ScorerKind::Mock => {
            rec.seed(a.seed);
            let id = mock_scorer_id(a.seed);
            score_in_blocks(&a.pairs, &mut out, |pair| ScoredPair {
                triple: score_mock(&pair.id, a.seed),
                pair_id: pair.id,
                scorer_id: id.clone(),
            })?
        }
        ScorerKind::External => {
            let command = a
                .command
                .as_deref()
                .ok_or_else(|| Usage("the external scorer needs --command".into()))?;
            let mut spec =
                ExternalSpec::from_command_line(command).ok_or_else(|| Usage("--command is empty".into()))?;
            spec.batch_size = pick(a.batch_size, ctx.config.batch_size, spec.batch_size);
            if spec.batch_size == 0 {
                return Err(Usage("--batch-size must be positive".into()).into());
            }
            spec.timeout = a.timeout_secs.or(ctx.config.timeout_secs).map(Duration::from_secs_f64);
            let error = RefCell::new(None);
            let pairs = pair_stream(&a.pairs, io::open_text(&a.pairs)?, &error);
            let n = score_external(pairs, &spec, |s| {
                serde_json::to_writer(&mut out, &s)?;
                out.write_all(b"\n")
            })?;
            if let Some(e) = error.into_inner() {
                return Err(e);
            }
            n
        }
    };
    out.flush()?;
    drop(out);
    if scored == 0 {
        return Err(EmptyInput(a.pairs.display().to_string()).into());
    }
    rec.output(&a.out);
    rec.write(None)?;
    eprintln!("scored {scored} pairs into {}", a.out.display());
    Ok(())
}

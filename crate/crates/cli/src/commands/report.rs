use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::Arc;

use inferbias::metrics::{
    average_reports, format_percent, render_table, Evaluation, ExtremeRow, PairIndex, StreamEvaluator,
};
use inferbias::templates::{parse_pair_id, ProbePlan};
use inferbias::{
    compare_reports, debias_all, random_direction, BuiltinParams, EmbeddingSet, EvaluateOptions, Label,
    NeutralityReport, ProbeKind, ReportDiff, ScoredPair, SlotFilter, TemplatePair,
};

use super::corpus::{plan, score_plan_builtin, BuiltinArgs, CorpusArgs};
use crate::config::pick;
use crate::exit::{EmptyInput, Usage};
use crate::{io, Context};

/// Threshold and tie-rule settings.
#[derive(Debug, Clone, clap::Args)]
pub struct MetricArgs {
    /// Neutral-probability thresholds for T:τ (default 0.5,0.7).
    #[arg(long = "tau", value_delimiter = ',')]
    taus: Vec<f64>,
    /// Count ties against neutral when computing FN.
    #[arg(long)]
    strict_fraction: bool,
}

impl MetricArgs {
    fn resolve(&self, ctx: &Context) -> EvaluateOptions {
        let d = EvaluateOptions::default();
        EvaluateOptions {
            taus: if self.taus.is_empty() { ctx.config.taus.clone().unwrap_or(d.taus) } else { self.taus.clone() },
            strict_fraction: self.strict_fraction || ctx.config.strict_fraction.unwrap_or(false),
        }
    }
}

#[derive(Debug, clap::Args)]
pub struct EvaluateArgs {
    /// Prediction JSON lines written by `score`.
    #[arg(long)]
    predictions: PathBuf,
    /// Probe of the predictions (default: read from the pair ids).
    #[arg(long)]
    probe: Option<ProbeKind>,
    #[command(flatten)]
    metrics: MetricArgs,
    /// Subgroup mean, `FILTER[@LABEL]`, e.g. `premise=rude,hypothesis=iraqi@entail`.
    #[arg(long = "group")]
    groups: Vec<String>,
    /// Also list the K pairs with the largest entail and contradict probabilities.
    #[arg(long)]
    top_k: Option<usize>,
    /// Pairs file to take slot fillers from instead of the pair ids.
    #[arg(long)]
    pairs: Option<PathBuf>,
    /// Row label in the printed table (default: the scorer id).
    #[arg(long)]
    label: Option<String>,
    /// Report JSON to write.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Markdown tables to write.
    #[arg(long)]
    markdown: Option<PathBuf>,
}

fn parse_group(spec: &str) -> anyhow::Result<(SlotFilter, Label)> {
    let (filter, label) = match spec.rsplit_once('@') {
        Some((f, l)) => (f, l.parse::<Label>().map_err(Usage)?),
        None => (spec, Label::Entail),
    };
    Ok((filter.parse()?, label))
}

fn extremes_table(title: &str, rows: &[ExtremeRow]) -> String {
    let mut s = format!("\n{title}\n\n| premise | hypothesis | verb | object | E | C |\n|---|---|---|---|---|---|\n");
    for r in rows {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {:.3} | {:.3} |",
            r.slots.subject_premise, r.slots.subject_hypothesis, r.slots.verb, r.slots.object, r.e, r.c
        );
    }
    s
}

fn render_evaluation(label: &str, ev: &Evaluation) -> String {
    let mut s = render_table(&[(label, &ev.report)]);
    if !ev.groups.is_empty() {
        s.push_str("\n| group | label | mean | pairs |\n|---|---|---|---|\n");
        for g in &ev.groups {
            let label = serde_json::to_value(g.label).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
            let _ = writeln!(s, "| {} | {label} | {:.1} | {} |", g.filter, 100.0 * g.mean, g.count);
        }
    }
    if !ev.top_entail.is_empty() {
        s.push_str(&extremes_table("Largest entailment", &ev.top_entail));
        s.push_str(&extremes_table("Largest contradiction", &ev.top_contradict));
    }
    s
}

pub fn evaluate(ctx: &Context, a: EvaluateArgs) -> anyhow::Result<()> {
    let mut rec = ctx.recorder("evaluate");
    rec.input(&a.predictions);
    let options = a.metrics.resolve(ctx);
    let groups = a.groups.iter().map(|g| parse_group(g)).collect::<anyhow::Result<Vec<_>>>()?;
    let top_k = a.top_k.or(ctx.config.top_k);
    let index = match &a.pairs {
        Some(p) => {
            rec.input(p);
            let pairs: Vec<TemplatePair> = io::read_jsonl(p)?;
            PairIndex::from_pairs(&pairs)
        }
        None => PairIndex::from_ids(),
    };
    let mut evaluator: Option<StreamEvaluator> = None;
    io::for_each_line(&a.predictions, |n, line| {
        let scored: ScoredPair = io::parse_line(&a.predictions, n, &line)?;
        if evaluator.is_none() {
            let probe = match a.probe.or(ctx.config.probe) {
                Some(p) => p,
                None => parse_pair_id(&scored.pair_id)
                    .map(|(p, _)| p)
                    .ok_or_else(|| Usage(format!("cannot infer the probe from id {:?}; pass --probe", scored.pair_id)))?,
            };
            evaluator = Some(StreamEvaluator::new(probe, options.clone(), &index, groups.clone(), top_k)?);
        }
        evaluator.as_mut().expect("initialized above").push(scored)?;
        Ok(())
    })?;
    let evaluation = evaluator
        .ok_or_else(|| EmptyInput(a.predictions.display().to_string()))?
        .finish()?;
    let label = a.label.clone().unwrap_or_else(|| evaluation.report.scorer_id.clone());
    let text = render_evaluation(&label, &evaluation);
    print!("{text}");
    if let Some(out) = &a.out {
        io::write_json(out, &evaluation)?;
        rec.output(out);
    }
    if let Some(md) = &a.markdown {
        io::write_text(md, &text)?;
        rec.output(md);
    }
    rec.write(None)?;
    Ok(())
}

#[derive(Debug, clap::Args)]
pub struct CompareArgs {
    /// Report before the intervention.
    #[arg(long)]
    before: PathBuf,
    /// Report after the intervention.
    #[arg(long)]
    after: PathBuf,
    /// Diff JSON to write.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Markdown table to write.
    #[arg(long)]
    markdown: Option<PathBuf>,
}

pub fn compare(ctx: &Context, a: CompareArgs) -> anyhow::Result<()> {
    let mut rec = ctx.recorder("compare");
    rec.input(&a.before);
    rec.input(&a.after);
    let before: NeutralityReport = io::read_json(&a.before)?;
    let after: NeutralityReport = io::read_json(&a.after)?;
    let diff = compare_reports(&before, &after)?;
    let text = diff.to_markdown();
    print!("{text}");
    if let Some(out) = &a.out {
        io::write_json(out, &diff)?;
        rec.output(out);
    }
    if let Some(md) = &a.markdown {
        io::write_text(md, &text)?;
        rec.output(md);
    }
    rec.write(None)?;
    Ok(())
}

#[derive(Debug, clap::Args)]
pub struct ControlArgs {
    /// Embedding table scored by the builtin scorer.
    #[arg(long)]
    embeddings: PathBuf,
    /// Number of random directions (default 8).
    #[arg(long)]
    seeds: Option<usize>,
    /// First seed; seeds run from here upward (default 0).
    #[arg(long)]
    seed_base: Option<u64>,
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    builtin: BuiltinArgs,
    #[command(flatten)]
    metrics: MetricArgs,
    /// Directory for the baseline, per-seed and mean reports.
    #[arg(long)]
    out_dir: PathBuf,
}

/// Neutrality report of `plan` scored by the builtin scorer over `table`.
pub fn builtin_report(
    plan: &Arc<ProbePlan>,
    table: &EmbeddingSet,
    params: &BuiltinParams,
    options: &EvaluateOptions,
) -> anyhow::Result<NeutralityReport> {
    let index = PairIndex::from_ids();
    let mut ev = StreamEvaluator::new(plan.probe(), options.clone(), &index, Vec::new(), None)?;
    score_plan_builtin(plan, table, params, |batch| {
        for s in batch {
            ev.push(s)?;
        }
        Ok(())
    })?;
    Ok(ev.finish()?.report)
}

pub fn control(ctx: &Context, a: ControlArgs) -> anyhow::Result<()> {
    let mut rec = ctx.recorder("control");
    rec.input(&a.embeddings);
    let table = io::read_embeddings(&a.embeddings, None)?;
    let plan = plan(ctx, &a.corpus, Some(&mut rec))?;
    let params = a.builtin.resolve(&ctx.config)?;
    let options = a.metrics.resolve(ctx);
    let seeds = pick(a.seeds, ctx.config.seeds, 8);
    let base = pick(a.seed_base, ctx.config.seed_base, 0);
    if seeds == 0 {
        return Err(Usage("--seeds must be at least 1".into()).into());
    }

    let baseline = builtin_report(&plan, &table, &params, &options)?;
    let baseline_path = a.out_dir.join("baseline.json");
    io::write_json(&baseline_path, &baseline)?;
    rec.output(&baseline_path);

    let mut reports = Vec::with_capacity(seeds);
    for seed in (0..seeds as u64).map(|i| base + i) {
        rec.seed(seed);
        let direction = random_direction(table.dimension(), seed);
        let (debiased, _) = debias_all(&table, &direction)?;
        let report = builtin_report(&plan, &debiased, &params, &options)?;
        let path = a.out_dir.join(format!("seed-{seed}.json"));
        io::write_json(&path, &report)?;
        rec.output(&path);
        reports.push((seed, report));
    }
    let only: Vec<NeutralityReport> = reports.iter().map(|(_, r)| r.clone()).collect();
    let mean = average_reports(&only)?;
    let mean_path = a.out_dir.join("mean.json");
    io::write_json(&mean_path, &mean)?;
    rec.output(&mean_path);

    let labels: Vec<String> = reports.iter().map(|(s, _)| format!("seed {s}")).collect();
    let mut rows: Vec<(&str, &NeutralityReport)> = vec![("baseline", &baseline)];
    rows.extend(labels.iter().map(String::as_str).zip(reports.iter().map(|(_, r)| r)));
    rows.push(("mean", &mean));
    let mut text = render_table(&rows);
    let diff: ReportDiff = compare_reports(&baseline, &mean)?;
    text.push_str("\nmean change from baseline:");
    for (name, v) in &diff.changes {
        let _ = write!(text, " {name} {}", format_percent(*v));
    }
    text.push('\n');
    let diff_path = a.out_dir.join("compare.json");
    io::write_json(&diff_path, &diff)?;
    rec.output(&diff_path);
    let md_path = a.out_dir.join("control.md");
    io::write_text(&md_path, &text)?;
    rec.output(&md_path);
    print!("{text}");
    rec.write(Some(&a.out_dir.join("manifest.json")))?;
    Ok(())
}

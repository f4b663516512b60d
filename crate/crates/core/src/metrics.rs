//! Neutrality measures over scored probe pairs.
//!
//! * Net Neutral (NN): mean neutral probability.
//! * Fraction Neutral (FN): share of pairs whose neutral probability is the
//!   largest of the three; ties count as neutral unless the strict rule is asked for.
//! * Threshold T:τ: share of pairs with neutral probability strictly above τ.
//!
//! Aggregation runs over fixed-size chunks that are reduced in parallel and
//! merged in stream order, so results do not depend on the worker count.

use std::borrow::Cow;
use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::numeric::CompensatedSum;
use crate::scoring::{PredictionTriple, ScoredPair};
use crate::templates::{parse_pair_id, ProbeKind, Slots, TemplatePair};

pub use crate::scoring::Label;

/// Pairs per aggregation chunk.
pub const CHUNK: usize = 4096;
pub const DEFAULT_TAUS: [f64; 2] = [0.5, 0.7];

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no scored pairs")]
    Empty,
    #[error("threshold {0} is outside (0, 1)")]
    TauOutOfRange(f64),
    #[error("reports cover different probes: {before} vs {after}")]
    ProbeMismatch { before: ProbeKind, after: ProbeKind },
    #[error("reports use different thresholds or tie rules")]
    SettingsMismatch,
    #[error("baseline {metric} is zero; percentage change is undefined")]
    ZeroBaseline { metric: String },
    #[error("filter {0} matches no pairs")]
    NoMatch(String),
    #[error("pair {0:?} is not in the pair index")]
    UnknownPair(String),
    #[error("invalid slot filter: {0}")]
    InvalidFilter(String),
    #[error("k must be at least 1")]
    ZeroK,
}

fn is_neutral_max(t: &PredictionTriple, strict: bool) -> bool {
    if strict {
        t.n > t.e && t.n > t.c
    } else {
        t.n >= t.e && t.n >= t.c
    }
}

/// Mergeable partial state behind a [`NeutralityReport`].
#[derive(Debug, Clone)]
pub struct NeutralityAccumulator {
    taus: Vec<f64>,
    strict_fraction: bool,
    count: u64,
    neutral: CompensatedSum,
    neutral_max: u64,
    above: Vec<u64>,
}

impl NeutralityAccumulator {
    pub fn new(taus: &[f64], strict_fraction: bool) -> Result<Self, MetricsError> {
        if let Some(&tau) = taus.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return Err(MetricsError::TauOutOfRange(tau));
        }
        Ok(Self {
            taus: taus.to_vec(),
            strict_fraction,
            count: 0,
            neutral: CompensatedSum::default(),
            neutral_max: 0,
            above: vec![0; taus.len()],
        })
    }

    pub fn add(&mut self, t: &PredictionTriple) {
        self.count += 1;
        self.neutral.add(t.n);
        self.neutral_max += u64::from(is_neutral_max(t, self.strict_fraction));
        for (count, tau) in self.above.iter_mut().zip(&self.taus) {
            *count += u64::from(t.n > *tau);
        }
    }

    pub fn merge(&mut self, other: &Self) {
        self.count += other.count;
        self.neutral.merge(&other.neutral);
        self.neutral_max += other.neutral_max;
        self.above.iter_mut().zip(&other.above).for_each(|(a, b)| *a += b);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn finish(&self, probe: ProbeKind, scorer_id: &str) -> Result<NeutralityReport, MetricsError> {
        if self.count == 0 {
            return Err(MetricsError::Empty);
        }
        let m = self.count as f64;
        Ok(NeutralityReport {
            probe,
            scorer_id: scorer_id.to_string(),
            pairs: self.count,
            net_neutral: self.neutral.value() / m,
            fraction_neutral: self.neutral_max as f64 / m,
            strict_fraction: self.strict_fraction,
            thresholds: self
                .taus
                .iter()
                .zip(&self.above)
                .map(|(&tau, &n)| ThresholdValue { tau, value: n as f64 / m })
                .collect(),
        })
    }
}

/// Reduces `items` chunk by chunk in parallel and merges the partials in order.
fn reduce_chunks<'a, T, R>(
    items: &'a [T],
    map: impl Fn(&'a [T]) -> R + Sync + Send,
    mut merge: impl FnMut(&mut R, R),
) -> Option<R>
where
    T: Sync,
    R: Send,
{
    let partials: Vec<R> = items.par_chunks(CHUNK).map(map).collect();
    let mut it = partials.into_iter();
    let mut acc = it.next()?;
    for p in it {
        merge(&mut acc, p);
    }
    Some(acc)
}

fn accumulate(scored: &[ScoredPair], taus: &[f64], strict: bool) -> Result<NeutralityAccumulator, MetricsError> {
    let empty = NeutralityAccumulator::new(taus, strict)?;
    Ok(reduce_chunks(
        scored,
        |chunk| {
            let mut acc = empty.clone();
            chunk.iter().for_each(|s| acc.add(&s.triple));
            acc
        },
        |a, b| a.merge(&b),
    )
    .unwrap_or(empty))
}

fn nonempty(scored: &[ScoredPair]) -> Result<(), MetricsError> {
    if scored.is_empty() {
        Err(MetricsError::Empty)
    } else {
        Ok(())
    }
}

/// Mean neutral probability.
pub fn net_neutral(scored: &[ScoredPair]) -> Result<f64, MetricsError> {
    nonempty(scored)?;
    let acc = accumulate(scored, &[], false)?;
    Ok(acc.neutral.value() / acc.count as f64)
}

/// Share of pairs whose neutral probability is maximal, ties counting as neutral.
pub fn fraction_neutral(scored: &[ScoredPair]) -> Result<f64, MetricsError> {
    fraction_neutral_with(scored, false)
}

/// Share of pairs whose neutral probability is strictly larger than both others.
pub fn fraction_neutral_strict(scored: &[ScoredPair]) -> Result<f64, MetricsError> {
    fraction_neutral_with(scored, true)
}

fn fraction_neutral_with(scored: &[ScoredPair], strict: bool) -> Result<f64, MetricsError> {
    nonempty(scored)?;
    let acc = accumulate(scored, &[], strict)?;
    Ok(acc.neutral_max as f64 / acc.count as f64)
}

/// Share of pairs with neutral probability strictly above `tau`.
pub fn threshold_neutral(scored: &[ScoredPair], tau: f64) -> Result<f64, MetricsError> {
    let acc = accumulate(scored, &[tau], false)?;
    nonempty(scored)?;
    Ok(acc.above[0] as f64 / acc.count as f64)
}

fn round6<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64((x * 1e6).round() / 1e6)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdValue {
    pub tau: f64,
    #[serde(serialize_with = "round6")]
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeutralityReport {
    pub probe: ProbeKind,
    #[serde(rename = "scorer")]
    pub scorer_id: String,
    pub pairs: u64,
    #[serde(serialize_with = "round6")]
    pub net_neutral: f64,
    #[serde(serialize_with = "round6")]
    pub fraction_neutral: f64,
    #[serde(default)]
    pub strict_fraction: bool,
    pub thresholds: Vec<ThresholdValue>,
}

impl NeutralityReport {
    pub fn threshold(&self, tau: f64) -> Option<f64> {
        self.thresholds.iter().find(|t| t.tau == tau).map(|t| t.value)
    }

    /// Column names and values in table order.
    pub fn columns(&self) -> Vec<(String, f64)> {
        let mut cols = vec![
            ("NN".to_string(), self.net_neutral),
            ("FN".to_string(), self.fraction_neutral),
        ];
        cols.extend(self.thresholds.iter().map(|t| (format!("T:{}", t.tau), t.value)));
        cols
    }

    fn same_settings(&self, other: &Self) -> Result<(), MetricsError> {
        if self.probe != other.probe {
            return Err(MetricsError::ProbeMismatch {
                before: self.probe,
                after: other.probe,
            });
        }
        let taus = |r: &Self| r.thresholds.iter().map(|t| t.tau).collect::<Vec<_>>();
        if taus(self) != taus(other) || self.strict_fraction != other.strict_fraction {
            return Err(MetricsError::SettingsMismatch);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateOptions {
    pub taus: Vec<f64>,
    pub strict_fraction: bool,
}

impl Default for EvaluateOptions {
    fn default() -> Self {
        Self {
            taus: DEFAULT_TAUS.to_vec(),
            strict_fraction: false,
        }
    }
}

/// The scorer id shared by all pairs, or `"mixed"`.
fn common_scorer(scored: &[ScoredPair]) -> String {
    match scored.first() {
        Some(first) if scored.iter().all(|s| s.scorer_id == first.scorer_id) => first.scorer_id.clone(),
        Some(_) => "mixed".to_string(),
        None => String::new(),
    }
}

pub fn evaluate(
    scored: &[ScoredPair],
    probe: ProbeKind,
    options: &EvaluateOptions,
) -> Result<NeutralityReport, MetricsError> {
    accumulate(scored, &options.taus, options.strict_fraction)?.finish(probe, &common_scorer(scored))
}

/// Mean of several reports over the same probe and settings.
pub fn average_reports(reports: &[NeutralityReport]) -> Result<NeutralityReport, MetricsError> {
    let first = reports.first().ok_or(MetricsError::Empty)?;
    for r in &reports[1..] {
        first.same_settings(r)?;
    }
    let k = reports.len() as f64;
    let mean = |f: &dyn Fn(&NeutralityReport) -> f64| reports.iter().map(f).sum::<f64>() / k;
    let scorer_id = if reports.iter().all(|r| r.scorer_id == first.scorer_id) {
        first.scorer_id.clone()
    } else {
        "mixed".to_string()
    };
    Ok(NeutralityReport {
        probe: first.probe,
        scorer_id,
        pairs: first.pairs,
        net_neutral: mean(&|r| r.net_neutral),
        fraction_neutral: mean(&|r| r.fraction_neutral),
        strict_fraction: first.strict_fraction,
        thresholds: first
            .thresholds
            .iter()
            .enumerate()
            .map(|(i, t)| ThresholdValue {
                tau: t.tau,
                value: mean(&|r| r.thresholds[i].value),
            })
            .collect(),
    })
}

/// Percentage changes between two reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDiff {
    pub before: NeutralityReport,
    pub after: NeutralityReport,
    /// `(column, 100 * (after - before) / before)` in table order.
    pub changes: Vec<(String, f64)>,
}

pub fn compare_reports(before: &NeutralityReport, after: &NeutralityReport) -> Result<ReportDiff, MetricsError> {
    before.same_settings(after)?;
    let changes = before
        .columns()
        .into_iter()
        .zip(after.columns())
        .map(|((name, b), (_, a))| {
            if b == 0.0 {
                Err(MetricsError::ZeroBaseline { metric: name })
            } else {
                Ok((name, 100.0 * (a - b) / b))
            }
        })
        .collect::<Result<_, _>>()?;
    Ok(ReportDiff {
        before: before.clone(),
        after: after.clone(),
        changes,
    })
}

/// `+24.0%` style; changes that round to zero print as `+0.0%`.
pub fn format_percent(change: f64) -> String {
    let s = format!("{change:.1}");
    match s.strip_prefix('-') {
        Some("0.0") => "+0.0%".to_string(),
        Some(_) => format!("{s}%"),
        None => format!("+{s}%"),
    }
}

impl ReportDiff {
    pub fn change(&self, column: &str) -> Option<f64> {
        self.changes.iter().find(|(c, _)| c == column).map(|(_, v)| *v)
    }

    pub fn to_markdown(&self) -> String {
        let mut out = render_table(&[("before", &self.before), ("after", &self.after)]);
        out.push_str("| diff |");
        for (_, v) in &self.changes {
            out.push_str(&format!(" {} |", format_percent(*v)));
        }
        out.push('\n');
        out
    }
}

/// Markdown table with one row per report; values rounded to 3 places.
pub fn render_table(rows: &[(&str, &NeutralityReport)]) -> String {
    let Some((_, first)) = rows.first() else {
        return String::new();
    };
    let names: Vec<String> = first.columns().into_iter().map(|c| c.0).collect();
    let mut out = String::from("| |");
    for n in &names {
        out.push_str(&format!(" {n} |"));
    }
    out.push_str("\n|---|");
    out.push_str(&"---|".repeat(names.len()));
    out.push('\n');
    for (label, report) in rows {
        out.push_str(&format!("| {label} |"));
        for (_, v) in report.columns() {
            out.push_str(&format!(" {v:.3} |"));
        }
        out.push('\n');
    }
    out
}

/// Slot fillers by pair id.
#[derive(Debug, Clone, Default)]
pub struct PairIndex {
    slots: HashMap<String, Slots>,
    parse_ids: bool,
}

impl PairIndex {
    /// An index that reads slots back out of generated pair ids.
    pub fn from_ids() -> Self {
        Self {
            slots: HashMap::new(),
            parse_ids: true,
        }
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = &'a TemplatePair>) -> Self {
        Self {
            slots: pairs.into_iter().map(|p| (p.id.clone(), p.slots.clone())).collect(),
            parse_ids: false,
        }
    }

    pub fn insert(&mut self, id: String, slots: Slots) {
        self.slots.insert(id, slots);
    }

    pub fn get(&self, id: &str) -> Option<Cow<'_, Slots>> {
        if let Some(s) = self.slots.get(id) {
            return Some(Cow::Borrowed(s));
        }
        if self.parse_ids {
            return parse_pair_id(id).map(|(_, s)| Cow::Owned(s));
        }
        None
    }

    fn require(&self, id: &str) -> Result<Cow<'_, Slots>, MetricsError> {
        self.get(id).ok_or_else(|| MetricsError::UnknownPair(id.to_string()))
    }
}

/// Conjunction of case-insensitive slot equalities, e.g. `premise=rude,hypothesis=iraqi`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotFilter {
    pub premise: Option<String>,
    pub hypothesis: Option<String>,
    pub verb: Option<String>,
    pub object: Option<String>,
}

impl SlotFilter {
    pub fn matches(&self, slots: &Slots) -> bool {
        let eq = |want: &Option<String>, have: &str| want.as_ref().is_none_or(|w| w.to_lowercase() == have.to_lowercase());
        eq(&self.premise, &slots.subject_premise)
            && eq(&self.hypothesis, &slots.subject_hypothesis)
            && eq(&self.verb, &slots.verb)
            && eq(&self.object, &slots.object)
    }
}

impl FromStr for SlotFilter {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut filter = SlotFilter::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| MetricsError::InvalidFilter(format!("{part:?} is not key=value")))?;
            let value = value.trim().to_string();
            let slot = match key.trim().to_lowercase().as_str() {
                "premise" => &mut filter.premise,
                "hypothesis" => &mut filter.hypothesis,
                "verb" => &mut filter.verb,
                "object" => &mut filter.object,
                other => return Err(MetricsError::InvalidFilter(format!("unknown slot {other:?}"))),
            };
            if slot.replace(value).is_some() {
                return Err(MetricsError::InvalidFilter(format!("slot {key:?} given twice")));
            }
        }
        Ok(filter)
    }
}

impl fmt::Display for SlotFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = [
            ("premise", &self.premise),
            ("hypothesis", &self.hypothesis),
            ("verb", &self.verb),
            ("object", &self.object),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.as_ref().map(|v| format!("{k}={v}")))
        .collect();
        if parts.is_empty() {
            f.write_str("all")
        } else {
            f.write_str(&parts.join(","))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStat {
    pub filter: String,
    pub label: Label,
    #[serde(serialize_with = "round6")]
    pub mean: f64,
    pub count: u64,
}

#[derive(Debug, Clone, Default)]
struct GroupPartial {
    sum: CompensatedSum,
    count: u64,
}

impl GroupPartial {
    fn merge(&mut self, other: &Self) {
        self.sum.merge(&other.sum);
        self.count += other.count;
    }
}

fn group_chunk(
    chunk: &[ScoredPair],
    index: &PairIndex,
    filter: &SlotFilter,
    label: Label,
) -> Result<GroupPartial, MetricsError> {
    let mut p = GroupPartial::default();
    for s in chunk {
        if filter.matches(&*index.require(&s.pair_id)?) {
            p.sum.add(s.triple.get(label));
            p.count += 1;
        }
    }
    Ok(p)
}

/// Mean probability of `label` over the pairs whose slots match `filter`.
pub fn group_mean(
    scored: &[ScoredPair],
    index: &PairIndex,
    filter: &SlotFilter,
    label: Label,
) -> Result<GroupStat, MetricsError> {
    let total = reduce_chunks(
        scored,
        |chunk| group_chunk(chunk, index, filter, label),
        |a, b| match (a.as_mut(), b) {
            (Ok(a), Ok(b)) => a.merge(&b),
            (Ok(_), Err(e)) => *a = Err(e),
            (Err(_), _) => {}
        },
    )
    .unwrap_or_else(|| Ok(GroupPartial::default()))?;
    finish_group(filter, label, &total)
}

fn finish_group(filter: &SlotFilter, label: Label, p: &GroupPartial) -> Result<GroupStat, MetricsError> {
    if p.count == 0 {
        return Err(MetricsError::NoMatch(filter.to_string()));
    }
    Ok(GroupStat {
        filter: filter.to_string(),
        label,
        mean: p.sum.value() / p.count as f64,
        count: p.count,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremeRow {
    pub id: String,
    #[serde(flatten)]
    pub slots: Slots,
    #[serde(serialize_with = "round6")]
    pub e: f64,
    #[serde(serialize_with = "round6")]
    pub c: f64,
}

/// Descending by the chosen probability, then ascending by id.
fn rank(a: &(f64, &ScoredPair), b: &(f64, &ScoredPair)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.pair_id.cmp(&b.1.pair_id))
}

fn top_k<'a>(mut candidates: Vec<(f64, &'a ScoredPair)>, k: usize) -> Vec<(f64, &'a ScoredPair)> {
    if candidates.len() > k {
        candidates.select_nth_unstable_by(k - 1, rank);
        candidates.truncate(k);
    }
    candidates.sort_by(rank);
    candidates
}

/// The `k` pairs with the largest probability of `by`.
pub fn extremes(
    scored: &[ScoredPair],
    index: &PairIndex,
    k: usize,
    by: Label,
) -> Result<Vec<ExtremeRow>, MetricsError> {
    if k == 0 {
        return Err(MetricsError::ZeroK);
    }
    let best = reduce_chunks(
        scored,
        |chunk| top_k(chunk.iter().map(|s| (s.triple.get(by), s)).collect(), k),
        |a, b| {
            a.extend(b);
            *a = top_k(std::mem::take(a), k);
        },
    )
    .unwrap_or_default();
    best.into_iter()
        .map(|(_, s)| {
            Ok(ExtremeRow {
                id: s.pair_id.clone(),
                slots: index.require(&s.pair_id)?.into_owned(),
                e: s.triple.e,
                c: s.triple.c,
            })
        })
        .collect()
}

/// Everything `evaluate` reports for one prediction stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    #[serde(flatten)]
    pub report: NeutralityReport,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub groups: Vec<GroupStat>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub top_entail: Vec<ExtremeRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub top_contradict: Vec<ExtremeRow>,
}

#[derive(Debug, Clone, Default)]
struct Partial {
    neutrality: Option<NeutralityAccumulator>,
    groups: Vec<GroupPartial>,
    top_entail: Vec<(f64, ScoredPair)>,
    top_contradict: Vec<(f64, ScoredPair)>,
}

fn rank_owned(a: &(f64, ScoredPair), b: &(f64, ScoredPair)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.pair_id.cmp(&b.1.pair_id))
}

fn keep_top(mut rows: Vec<(f64, ScoredPair)>, k: usize) -> Vec<(f64, ScoredPair)> {
    if rows.len() > k {
        rows.select_nth_unstable_by(k - 1, rank_owned);
        rows.truncate(k);
    }
    rows.sort_by(rank_owned);
    rows
}

/// Incremental form of [`evaluate`], [`group_mean`] and [`extremes`].
///
/// Pairs are buffered and reduced in the same fixed chunks as the slice
/// functions, so the results are bit-identical to theirs.
#[derive(Debug)]
pub struct StreamEvaluator<'a> {
    probe: ProbeKind,
    options: EvaluateOptions,
    index: &'a PairIndex,
    groups: Vec<(SlotFilter, Label)>,
    top_k: Option<usize>,
    scorer: Option<String>,
    pending: Vec<ScoredPair>,
    total: Option<Partial>,
}

impl<'a> StreamEvaluator<'a> {
    pub fn new(
        probe: ProbeKind,
        options: EvaluateOptions,
        index: &'a PairIndex,
        groups: Vec<(SlotFilter, Label)>,
        top_k: Option<usize>,
    ) -> Result<Self, MetricsError> {
        NeutralityAccumulator::new(&options.taus, options.strict_fraction)?;
        if top_k == Some(0) {
            return Err(MetricsError::ZeroK);
        }
        Ok(Self {
            probe,
            options,
            index,
            groups,
            top_k,
            scorer: None,
            pending: Vec::new(),
            total: None,
        })
    }

    pub fn push(&mut self, pair: ScoredPair) -> Result<(), MetricsError> {
        match &self.scorer {
            None => self.scorer = Some(pair.scorer_id.clone()),
            Some(s) if *s != pair.scorer_id && s != "mixed" => self.scorer = Some("mixed".into()),
            Some(_) => {}
        }
        self.pending.push(pair);
        if self.pending.len() >= CHUNK * 64 {
            self.drain(false)?;
        }
        Ok(())
    }

    fn chunk(&self, chunk: &[ScoredPair]) -> Result<Partial, MetricsError> {
        let mut acc = NeutralityAccumulator::new(&self.options.taus, self.options.strict_fraction)?;
        chunk.iter().for_each(|s| acc.add(&s.triple));
        let groups = self
            .groups
            .iter()
            .map(|(f, l)| group_chunk(chunk, self.index, f, *l))
            .collect::<Result<_, _>>()?;
        let top = |by: Label| -> Result<Vec<(f64, ScoredPair)>, MetricsError> {
            let Some(k) = self.top_k else { return Ok(Vec::new()) };
            let refs = top_k(chunk.iter().map(|s| (s.triple.get(by), s)).collect(), k);
            Ok(refs.into_iter().map(|(v, s)| (v, s.clone())).collect())
        };
        Ok(Partial {
            neutrality: Some(acc),
            groups,
            top_entail: top(Label::Entail)?,
            top_contradict: top(Label::Contradict)?,
        })
    }

    fn merge(&mut self, p: Partial) {
        let Some(total) = self.total.as_mut() else {
            self.total = Some(p);
            return;
        };
        if let (Some(a), Some(b)) = (total.neutrality.as_mut(), p.neutrality.as_ref()) {
            a.merge(b);
        }
        total.groups.iter_mut().zip(&p.groups).for_each(|(a, b)| a.merge(b));
        if let Some(k) = self.top_k {
            total.top_entail.extend(p.top_entail);
            total.top_entail = keep_top(std::mem::take(&mut total.top_entail), k);
            total.top_contradict.extend(p.top_contradict);
            total.top_contradict = keep_top(std::mem::take(&mut total.top_contradict), k);
        }
    }

    fn drain(&mut self, all: bool) -> Result<(), MetricsError> {
        let full = if all { self.pending.len() } else { self.pending.len() / CHUNK * CHUNK };
        let rest = self.pending.split_off(full);
        let ready = std::mem::replace(&mut self.pending, rest);
        let partials: Vec<Result<Partial, MetricsError>> = ready.par_chunks(CHUNK).map(|c| self.chunk(c)).collect();
        for p in partials {
            self.merge(p?);
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<Evaluation, MetricsError> {
        self.drain(true)?;
        let total = self.total.take().ok_or(MetricsError::Empty)?;
        let report = total
            .neutrality
            .as_ref()
            .ok_or(MetricsError::Empty)?
            .finish(self.probe, self.scorer.as_deref().unwrap_or(""))?;
        let groups = self
            .groups
            .iter()
            .zip(&total.groups)
            .map(|((f, l), p)| finish_group(f, *l, p))
            .collect::<Result<_, _>>()?;
        let rows = |v: Vec<(f64, ScoredPair)>| -> Result<Vec<ExtremeRow>, MetricsError> {
            v.into_iter()
                .map(|(_, s)| {
                    Ok(ExtremeRow {
                        slots: self.index.require(&s.pair_id)?.into_owned(),
                        id: s.pair_id,
                        e: s.triple.e,
                        c: s.triple.c,
                    })
                })
                .collect()
        };
        Ok(Evaluation {
            report,
            groups,
            top_entail: rows(total.top_entail)?,
            top_contradict: rows(total.top_contradict)?,
        })
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::score_mock;

    fn pair(id: &str, e: f64, n: f64, c: f64) -> ScoredPair {
        ScoredPair {
            pair_id: id.to_string(),
            triple: PredictionTriple::new(e, n, c).unwrap(),
            scorer_id: "test".into(),
        }
    }

    fn neutrals(ns: &[f64]) -> Vec<ScoredPair> {
        ns.iter()
            .enumerate()
            .map(|(i, &n)| pair(&format!("p{i}"), (1.0 - n) / 2.0, n, (1.0 - n) / 2.0))
            .collect()
    }

    fn mock(n: usize) -> Vec<ScoredPair> {
        (0..n)
            .map(|i| {
                let id = format!("gender/occ{}|man|ate|obj{}", i % 37, i / 37);
                ScoredPair {
                    triple: score_mock(&id, 3),
                    pair_id: id,
                    scorer_id: "mock:3".into(),
                }
            })
            .collect()
    }

    #[test]
    fn net_neutral_examples() {
        assert!((net_neutral(&neutrals(&[0.5, 0.3])).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(net_neutral(&neutrals(&[1.0, 1.0, 1.0])).unwrap(), 1.0);
        assert_eq!(net_neutral(&[]), Err(MetricsError::Empty));
    }

    #[test]
    fn fraction_neutral_examples() {
        let s = vec![pair("a", 0.2, 0.5, 0.3), pair("b", 0.6, 0.3, 0.1)];
        assert_eq!(fraction_neutral(&s).unwrap(), 0.5);
        let third = 1.0 / 3.0;
        let tie = vec![pair("t", third, third, third)];
        assert_eq!(fraction_neutral(&tie).unwrap(), 1.0);
        assert_eq!(fraction_neutral_strict(&tie).unwrap(), 0.0);
        assert_eq!(fraction_neutral(&[]), Err(MetricsError::Empty));
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(threshold_neutral(&neutrals(&[0.69, 0.71]), 0.7).unwrap(), 0.5);
        assert_eq!(threshold_neutral(&neutrals(&[1.0, 1.0]), 0.5).unwrap(), 1.0);
        assert_eq!(threshold_neutral(&neutrals(&[0.5]), 0.5).unwrap(), 0.0);
        assert_eq!(threshold_neutral(&neutrals(&[0.5]), 1.0), Err(MetricsError::TauOutOfRange(1.0)));
        assert_eq!(threshold_neutral(&neutrals(&[0.5]), 0.0), Err(MetricsError::TauOutOfRange(0.0)));
        assert_eq!(threshold_neutral(&[], 0.5), Err(MetricsError::Empty));
    }

    #[test]
    fn mock_metrics_match_direct_oracles() {
        let s = mock(1000);
        let mean: f64 = s.iter().map(|p| p.triple.n).sum::<f64>() / 1000.0;
        assert!((net_neutral(&s).unwrap() - mean).abs() <= 1e-12);
        let count = s.iter().filter(|p| p.triple.n >= p.triple.e && p.triple.n >= p.triple.c).count();
        assert_eq!(fraction_neutral(&s).unwrap(), count as f64 / 1000.0);
    }

    #[test]
    fn compare_uses_displayed_values() {
        let report = |nn: f64| NeutralityReport {
            probe: ProbeKind::Gender,
            scorer_id: "x".into(),
            pairs: 10,
            net_neutral: nn,
            fraction_neutral: 0.4,
            strict_fraction: false,
            thresholds: vec![ThresholdValue { tau: 0.5, value: 0.2 }],
        };
        let diff = compare_reports(&report(0.387), &report(0.480)).unwrap();
        assert_eq!(format_percent(diff.change("NN").unwrap()), "+24.0%");
        assert_eq!(format_percent(diff.change("FN").unwrap()), "+0.0%");

        let same = compare_reports(&report(0.3), &report(0.3)).unwrap();
        assert!(same.changes.iter().all(|(_, v)| format_percent(*v) == "+0.0%"));

        assert_eq!(
            compare_reports(&report(0.0), &report(0.3)),
            Err(MetricsError::ZeroBaseline { metric: "NN".into() })
        );
        let mut other = report(0.3);
        other.probe = ProbeKind::Religion;
        assert!(matches!(compare_reports(&report(0.3), &other), Err(MetricsError::ProbeMismatch { .. })));
        other = report(0.3);
        other.thresholds[0].tau = 0.7;
        assert_eq!(compare_reports(&report(0.3), &other), Err(MetricsError::SettingsMismatch));
    }

    #[test]
    fn percent_formatting() {
        assert_eq!(format_percent(-0.04), "+0.0%");
        assert_eq!(format_percent(-3.26), "-3.3%");
        assert_eq!(format_percent(24.03), "+24.0%");
        assert_eq!(format_percent(0.0), "+0.0%");
    }

    #[test]
    fn report_serializes_at_six_places() {
        let report = NeutralityReport {
            probe: ProbeKind::Nationality,
            scorer_id: "mock:1".into(),
            pairs: 3,
            net_neutral: 1.0 / 3.0,
            fraction_neutral: 2.0 / 3.0,
            strict_fraction: false,
            thresholds: vec![ThresholdValue { tau: 0.5, value: 1.0 / 3.0 }],
        };
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"net_neutral\":0.333333"), "{json}");
        assert!(json.contains("\"fraction_neutral\":0.666667"), "{json}");
        let back: NeutralityReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.pairs, 3);
    }

    #[test]
    fn table_layout() {
        let s = neutrals(&[0.8, 0.2]);
        let report = evaluate(&s, ProbeKind::Gender, &EvaluateOptions::default()).unwrap();
        let table = render_table(&[("GloVe", &report)]);
        assert_eq!(
            table,
            "| | NN | FN | T:0.5 | T:0.7 |\n|---|---|---|---|---|\n| GloVe | 0.500 | 0.500 | 0.500 | 0.500 |\n"
        );
    }

    #[test]
    fn filters_parse_and_match() {
        let f: SlotFilter = "premise=Rude, hypothesis=iraqi".parse().unwrap();
        assert_eq!(f.to_string(), "premise=Rude,hypothesis=iraqi");
        let slots = Slots {
            subject_premise: "rude".into(),
            subject_hypothesis: "Iraqi".into(),
            verb: "owns".into(),
            object: "car".into(),
        };
        assert!(f.matches(&slots));
        assert!(SlotFilter::default().matches(&slots));
        assert_eq!(SlotFilter::default().to_string(), "all");
        assert!("colour=red".parse::<SlotFilter>().is_err());
        assert!("premise".parse::<SlotFilter>().is_err());
        assert!("verb=a,verb=b".parse::<SlotFilter>().is_err());
    }

    #[test]
    fn group_mean_examples() {
        let s = mock(500);
        let index = PairIndex::from_ids();
        let all = group_mean(&s, &index, &SlotFilter::default(), Label::Neutral).unwrap();
        assert!((all.mean - net_neutral(&s).unwrap()).abs() <= 1e-12);
        assert_eq!(all.count, 500);

        let one: SlotFilter = "premise=occ5,object=obj0".parse().unwrap();
        let stat = group_mean(&s, &index, &one, Label::Entail).unwrap();
        assert_eq!(stat.count, 1);
        assert_eq!(stat.mean, s[5].triple.e);

        let none: SlotFilter = "verb=sold".parse().unwrap();
        assert!(matches!(group_mean(&s, &index, &none, Label::Entail), Err(MetricsError::NoMatch(_))));
        assert!(matches!(
            group_mean(&s, &PairIndex::default(), &none, Label::Entail),
            Err(MetricsError::UnknownPair(_))
        ));
    }

    #[test]
    fn extremes_order_and_ties() {
        let s = vec![
            pair("gender/b|x|v|o", 0.5, 0.25, 0.25),
            pair("gender/a|x|v|o", 0.5, 0.25, 0.25),
            pair("gender/c|x|v|o", 0.9, 0.05, 0.05),
        ];
        let rows = extremes(&s, &PairIndex::from_ids(), 10, Label::Entail).unwrap();
        let ids: Vec<&str> = rows.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["gender/c|x|v|o", "gender/a|x|v|o", "gender/b|x|v|o"]);
        assert_eq!(rows[0].slots.subject_premise, "c");
        assert_eq!(extremes(&s, &PairIndex::from_ids(), 0, Label::Entail), Err(MetricsError::ZeroK));
    }

    #[test]
    fn extremes_match_full_sort() {
        let s = mock(10_000);
        let rows = extremes(&s, &PairIndex::from_ids(), 3, Label::Contradict).unwrap();
        let mut sorted: Vec<&ScoredPair> = s.iter().collect();
        sorted.sort_by(|a, b| b.triple.c.total_cmp(&a.triple.c).then(a.pair_id.cmp(&b.pair_id)));
        let want: Vec<&str> = sorted[..3].iter().map(|p| p.pair_id.as_str()).collect();
        let got: Vec<&str> = rows.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn streaming_matches_slice_functions() {
        let s = mock(30_000);
        let index = PairIndex::from_ids();
        let filter: SlotFilter = "premise=occ3".parse().unwrap();
        let mut ev = StreamEvaluator::new(
            ProbeKind::Gender,
            EvaluateOptions::default(),
            &index,
            vec![(filter.clone(), Label::Entail)],
            Some(4),
        )
        .unwrap();
        for p in &s {
            ev.push(p.clone()).unwrap();
        }
        let out = ev.finish().unwrap();
        let report = evaluate(&s, ProbeKind::Gender, &EvaluateOptions::default()).unwrap();
        assert_eq!(out.report, report);
        assert_eq!(out.report.net_neutral.to_bits(), report.net_neutral.to_bits());
        assert_eq!(out.groups[0], group_mean(&s, &index, &filter, Label::Entail).unwrap());
        assert_eq!(out.top_entail, extremes(&s, &index, 4, Label::Entail).unwrap());
        assert_eq!(out.top_contradict, extremes(&s, &index, 4, Label::Contradict).unwrap());

        let empty = StreamEvaluator::new(ProbeKind::Gender, EvaluateOptions::default(), &index, vec![], None).unwrap();
        assert_eq!(empty.finish(), Err(MetricsError::Empty));
    }

    #[test]
    fn averages_reports() {
        let s1 = neutrals(&[0.8, 0.2]);
        let s2 = neutrals(&[0.4, 0.4]);
        let o = EvaluateOptions::default();
        let r1 = evaluate(&s1, ProbeKind::Gender, &o).unwrap();
        let r2 = evaluate(&s2, ProbeKind::Gender, &o).unwrap();
        let mean = average_reports(&[r1, r2]).unwrap();
        assert!((mean.net_neutral - 0.45).abs() < 1e-15);
        assert_eq!(mean.fraction_neutral, 0.75);
        assert_eq!(average_reports(&[]), Err(MetricsError::Empty));
    }
}

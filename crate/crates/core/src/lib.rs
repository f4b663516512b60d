//! Probing and attenuating biased inferences in word embeddings.
//!
//! The crate is organized around the pipeline it supports:
//!
//! * [`embedding`] loads, saves and aggregates static embedding tables.
//! * [`subspace`] learns bias directions from word pairs or word sets.
//! * [`debias`] projects those directions out of vectors and tables.
//! * [`templates`] expands sentence templates into premise/hypothesis probes.
//! * [`scoring`] turns probes into entail/neutral/contradict triples.
//! * [`metrics`] aggregates triples into neutrality measures.

pub mod debias;
pub mod embedding;
pub mod metrics;
pub mod scoring;
pub mod subspace;
pub mod templates;

mod numeric;

pub use debias::{debias_all, debias_selected, project_out, DebiasError, DebiasRun};
pub use embedding::{
    aggregate_type_embeddings, load_embeddings, save_embeddings, EmbeddingError, EmbeddingSet,
    TokenRecord,
};
pub use metrics::{
    compare_reports, evaluate, extremes, fraction_neutral, group_mean, net_neutral,
    threshold_neutral, EvaluateOptions, ExtremeRow, GroupStat, Label, MetricsError,
    NeutralityReport, ReportDiff, SlotFilter,
};
pub use scoring::{
    score_builtin, score_external, score_mock, BuiltinParams, ExternalSpec, PredictionTriple,
    ScoreError, ScoredPair,
};
pub use subspace::{
    direction_from_pair, principal_subspace, random_direction, spectrum, subspace_alignment,
    BiasSubspace, Method, Provenance, SpectrumReport, SubspaceError,
};
pub use templates::{
    count_pairs, generate_pairs, render_sentence, GenerateOptions, ObjectScope, ProbeKind, Slots,
    TemplatePair, TemplateError, WordLists,
};

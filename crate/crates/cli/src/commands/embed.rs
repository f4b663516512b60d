use std::path::PathBuf;

use clap::ValueEnum;
use inferbias::{
    debias_all, debias_selected, direction_from_pair, principal_subspace, random_direction, save_embeddings, spectrum as spectrum_of,
    BiasSubspace,
};

use super::WordArgs;
use crate::config::pick;
use crate::exit::Usage;
use crate::{io, Context};

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LearnMethod {
    /// Normalized difference of two words.
    Pair,
    /// Top principal directions of a word set.
    Pca,
    /// A seeded uniformly random unit direction.
    Random,
}

#[derive(Debug, clap::Args)]
pub struct LearnArgs {
    #[arg(long, value_enum)]
    method: LearnMethod,
    /// Embedding table (GloVe text format, optionally gzipped).
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[command(flatten)]
    words: WordArgs,
    /// Number of principal directions.
    #[arg(long, default_value_t = 1)]
    rank: usize,
    /// Dimension for `random` when no table is given.
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Subspace JSON to write.
    #[arg(long)]
    out: PathBuf,
}

pub fn learn(ctx: &Context, a: LearnArgs) -> anyhow::Result<()> {
    let mut rec = ctx.recorder("learn-subspace");
    let table = match &a.embeddings {
        Some(p) => {
            rec.input(p);
            Some(io::read_embeddings(p, None)?)
        }
        None => None,
    };
    let need_table = || table.as_ref().ok_or_else(|| Usage("--embeddings is required for this method".into()));
    let subspace: BiasSubspace = match a.method {
        LearnMethod::Pair => {
            let words = a.words.resolve(ctx, &mut rec)?;
            let [w1, w2] = words.as_slice() else {
                return Err(Usage(format!("pair needs exactly two words, got {}", words.len())).into());
            };
            direction_from_pair(need_table()?, w1, w2)?
        }
        LearnMethod::Pca => {
            let words = a.words.resolve(ctx, &mut rec)?;
            principal_subspace(need_table()?, &words, a.rank)?
        }
        LearnMethod::Random => {
            let dim = match (a.dim, &table) {
                (Some(d), _) => d,
                (None, Some(t)) => t.dimension(),
                (None, None) => return Err(Usage("random needs --dim or --embeddings".into()).into()),
            };
            if dim == 0 {
                return Err(Usage("--dim must be positive".into()).into());
            }
            rec.seed(a.seed);
            random_direction(dim, a.seed)
        }
    };
    io::write_json(&a.out, &subspace)?;
    rec.output(&a.out);
    rec.write(None)?;
    eprintln!("wrote rank-{} subspace to {}", subspace.rank(), a.out.display());
    Ok(())
}

#[derive(Debug, clap::Args)]
pub struct SpectrumArgs {
    #[arg(long)]
    embeddings: PathBuf,
    #[command(flatten)]
    words: WordArgs,
    /// Number of singular values (default: up to 10).
    #[arg(long)]
    m: Option<usize>,
    /// Subspace whose top direction is compared with the first component.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Report JSON to write.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn spectrum(ctx: &Context, a: SpectrumArgs) -> anyhow::Result<()> {
    let mut rec = ctx.recorder("spectrum");
    rec.input(&a.embeddings);
    let table = io::read_embeddings(&a.embeddings, None)?;
    let words = a.words.resolve(ctx, &mut rec)?;
    let reference: Option<BiasSubspace> = match &a.reference {
        Some(p) => {
            rec.input(p);
            Some(io::read_json(p)?)
        }
        None => None,
    };
    let m = a
        .m
        .unwrap_or_else(|| 10.min(words.len().saturating_sub(1)).min(table.dimension()).max(1));
    let report = spectrum_of(&table, &words, m, reference.as_ref())?;
    println!("| x | σ_x | σ_x/σ_1 |\n|---|---|---|");
    for (i, s) in report.singular_values.iter().enumerate() {
        let ratio = if i == 0 { 1.0 } else { report.ratios[i - 1] };
        println!("| {} | {s:.4} | {ratio:.3} |", i + 1);
    }
    if let Some(c) = report.top_alignment {
        println!("\ncosine with reference: {c:.3}");
    }
    if let Some(out) = &a.out {
        io::write_json(out, &report)?;
        rec.output(out);
        rec.write(None)?;
    }
    Ok(())
}

#[derive(Debug, clap::Args)]
pub struct DebiasArgs {
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    subspace: PathBuf,
    /// Only project these words; all other rows are copied unchanged.
    #[command(flatten)]
    words: WordArgs,
    /// Fractional digits in the written table.
    #[arg(long)]
    decimals: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

pub fn debias(ctx: &Context, a: DebiasArgs) -> anyhow::Result<()> {
    let mut rec = ctx.recorder("debias");
    rec.input(&a.embeddings);
    rec.input(&a.subspace);
    let table = io::read_embeddings(&a.embeddings, None)?;
    let subspace: BiasSubspace = io::read_json(&a.subspace)?;
    let (out, run) = if a.words.is_empty() {
        debias_all(&table, &subspace)?
    } else {
        let words = a.words.resolve(ctx, &mut rec)?;
        debias_selected(&table, &subspace, &words)?
    };
    let decimals = pick(a.decimals, ctx.config.decimals, 6);
    let mut sink = io::create(&a.out)?;
    save_embeddings(&out, &mut sink, decimals)?;
    drop(sink);
    rec.output(&a.out);
    rec.write(None)?;
    eprintln!(
        "projected {} of {} words (max residual {:.1e}) into {}",
        run.words_modified,
        out.len(),
        run.max_residual,
        a.out.display()
    );
    Ok(())
}

//! `inferbias`: learn bias subspaces, debias embeddings, generate NLI probes,
//! score them and report neutrality.

mod commands;
mod config;
mod exit;
mod io;
mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context as _;
use clap::{Parser, Subcommand};
use inferbias::WordLists;

use crate::config::Config;
use crate::manifest::Recorder;

const EXIT_CODES: &str = "Exit codes: 0 success, 1 I/O or other failure, 2 usage, 3 parse error, \
4 scorer process or protocol failure, 5 validation failure, 6 empty input.";

#[derive(Debug, Parser)]
#[command(name = "inferbias", version, about, after_help = EXIT_CODES)]
pub struct Cli {
    /// Worker threads (default: available parallelism). Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory with word-list files (default: the bundled lists).
    #[arg(long, global = true, env = "INFERBIAS_DATA_DIR")]
    data_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Learn a bias subspace from a word pair, a word set (PCA) or a seed.
    LearnSubspace(commands::embed::LearnArgs),
    /// Report singular-value ratios of a word set.
    Spectrum(commands::embed::SpectrumArgs),
    /// Project a subspace out of all or selected embeddings.
    Debias(commands::embed::DebiasArgs),
    /// Write the premise/hypothesis pairs of a probe as JSON lines.
    Generate(commands::corpus::GenerateArgs),
    /// Print the number of pairs a probe expands to.
    Count(commands::corpus::CountArgs),
    /// Score pairs with the builtin, mock or an external scorer.
    Score(commands::corpus::ScoreArgs),
    /// Aggregate predictions into neutrality metrics.
    Evaluate(commands::report::EvaluateArgs),
    /// Percentage change between two reports.
    Compare(commands::report::CompareArgs),
    /// Random-direction control: debias along N seeded directions and average.
    Control(commands::report::ControlArgs),
    /// Re-run a command from its manifest and check the outputs match.
    Replay(ReplayArgs),
}

#[derive(Debug, clap::Args)]
struct ReplayArgs {
    /// A `*.manifest.json` written by an earlier run.
    #[arg(long)]
    manifest: PathBuf,
}

/// Settings shared by every command.
pub struct Context {
    pub config: Config,
    config_path: Option<PathBuf>,
    config_value: Option<serde_json::Value>,
    data_dir: Option<PathBuf>,
    pub workers: usize,
    args: Vec<String>,
}

impl Context {
    pub fn recorder(&self, command: &str) -> Recorder {
        let mut r = Recorder::new(command, self.args.clone(), self.config_value.clone(), self.workers);
        if let Some(p) = &self.config_path {
            r.input(p);
        }
        r
    }

    pub fn word_lists(&self, recorder: Option<&mut Recorder>) -> anyhow::Result<WordLists> {
        match &self.data_dir {
            None => Ok(WordLists::bundled()),
            Some(dir) => {
                if let Some(r) = recorder {
                    for name in WordLists::file_names() {
                        r.input(&dir.join(name));
                    }
                }
                Ok(WordLists::from_dir(dir)?)
            }
        }
    }
}

fn run(args: Vec<OsString>) -> anyhow::Result<()> {
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            e.print()?;
            std::process::exit(code);
        }
    };
    let (config, config_value) = match &cli.config {
        Some(p) => {
            let c = Config::load(p)?;
            let v = serde_json::to_value(&c)?;
            (c, Some(v))
        }
        None => (Config::default(), None),
    };
    let workers = cli
        .workers
        .or(config.workers)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        return Err(exit::Usage("--workers must be at least 1".into()).into());
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
    let ctx = Context {
        data_dir: cli.data_dir.clone().or_else(|| config.data_dir.clone()),
        config,
        config_path: cli.config.clone(),
        config_value,
        workers,
        args: args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect(),
    };
    pool.install(|| match cli.command {
        Command::LearnSubspace(a) => commands::embed::learn(&ctx, a),
        Command::Spectrum(a) => commands::embed::spectrum(&ctx, a),
        Command::Debias(a) => commands::embed::debias(&ctx, a),
        Command::Generate(a) => commands::corpus::generate(&ctx, a),
        Command::Count(a) => commands::corpus::count(&ctx, a),
        Command::Score(a) => commands::corpus::score(&ctx, a),
        Command::Evaluate(a) => commands::report::evaluate(&ctx, a),
        Command::Compare(a) => commands::report::compare(&ctx, a),
        Command::Control(a) => commands::report::control(&ctx, a),
        Command::Replay(a) => replay(a),
    })
}

fn replay(args: ReplayArgs) -> anyhow::Result<()> {
    let m = manifest::RunManifest::load(&args.manifest)?;
    if m.command == "replay" {
        return Err(exit::Usage("cannot replay a replay".into()).into());
    }
    std::env::set_current_dir(&m.cwd).with_context(|| format!("entering {}", m.cwd))?;
    for input in &m.inputs {
        let now = manifest::FileDigest::of(input.path.as_ref()).with_context(|| format!("hashing {}", input.path))?;
        if now.sha256 != input.sha256 {
            return Err(exit::Validation(format!("input {} changed since the recorded run", input.path)).into());
        }
    }
    let mut argv: Vec<OsString> = vec!["inferbias".into()];
    argv.extend(m.args.iter().map(OsString::from));
    run(argv)?;
    let mut mismatched = Vec::new();
    for output in &m.outputs {
        let now = manifest::FileDigest::of(output.path.as_ref()).with_context(|| format!("hashing {}", output.path))?;
        let ok = now.sha256 == output.sha256;
        println!("{} {}", if ok { "ok      " } else { "MISMATCH" }, output.path);
        if !ok {
            mismatched.push(output.path.clone());
        }
    }
    if mismatched.is_empty() {
        Ok(())
    } else {
        Err(exit::Validation(format!("{} outputs differ from the recorded run", mismatched.len())).into())
    }
}

fn main() -> ExitCode {
    match run(std::env::args_os().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::classify(&e))
        }
    }
}

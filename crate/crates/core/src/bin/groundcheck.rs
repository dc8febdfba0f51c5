use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use groundcheck::report::{cmd_credibility, cmd_ground, cmd_ingest, cmd_report};
use groundcheck::{CliError, RunConfig};

/// Evaluate chat assistant transcripts for source credibility and groundedness.
#[derive(Parser, Debug)]
#[command(name = "groundcheck", version)]
struct Cli {
    /// Directory that relative paths resolve against.
    #[arg(long, global = true, default_value = ".")]
    workdir: PathBuf,
    /// Run configuration, JSON or TOML.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Log more (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Normalize raw archived conversations into canonical transcripts.
    Ingest(IngestArgs),
    /// Credibility and non-credibility rates, citation statistics, factuality distribution.
    Credibility(RunArgs),
    /// Groundedness scores, hallucination scores and the verdict audit log.
    Ground(GroundArgs),
    /// Merge the tables in the output directory into report.json.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct IngestArgs {
    /// Directory of raw archive JSON files.
    #[arg(long)]
    raw: Option<PathBuf>,
    /// JSON file with provider profiles.
    #[arg(long)]
    profiles: Option<PathBuf>,
    /// Profile for archives that do not name one.
    #[arg(long)]
    profile: Option<String>,
    /// Claim file used to fill in topics.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Output directory for canonical transcripts.
    #[arg(long)]
    transcripts: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    transcripts: Option<PathBuf>,
    #[arg(long)]
    ratings: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Grouping such as "assistant,topic"; repeat for several tables.
    #[arg(long = "group-by")]
    group_by: Vec<String>,
    #[arg(long)]
    confidence: Option<f64>,
}

#[derive(Args, Debug)]
struct GroundArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Mock backend script; no model endpoint or web access is used.
    #[arg(long)]
    mock: Option<PathBuf>,
    /// Use cached documents only.
    #[arg(long)]
    offline: bool,
    /// Directory with extract.txt, decontextualize.txt and judge.txt.
    #[arg(long)]
    prompts: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    chunk_size: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long)]
    out: Option<PathBuf>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl RunArgs {
    fn apply(self, c: &mut RunConfig) {
        set(&mut c.transcripts, self.transcripts);
        set(&mut c.ratings, self.ratings);
        set(&mut c.output, self.out);
        set(&mut c.confidence, self.confidence);
        if self.corpus.is_some() {
            c.corpus = self.corpus;
        }
        if !self.group_by.is_empty() {
            c.group_by = self.group_by;
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = match &cli.config {
        Some(path) => {
            let path = if path.is_relative() { cli.workdir.join(path) } else { path.clone() };
            RunConfig::load(&path)?
        }
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Ingest(a) => {
            set(&mut config.raw, a.raw);
            set(&mut config.profile, a.profile);
            set(&mut config.transcripts, a.transcripts);
            if a.profiles.is_some() {
                config.profiles = a.profiles;
            }
            if a.corpus.is_some() {
                config.corpus = a.corpus;
            }
            let summary = cmd_ingest(&config.rooted(&cli.workdir))?;
            print!("{}", summary.render());
        }
        Command::Credibility(a) => {
            a.apply(&mut config);
            let config = config.rooted(&cli.workdir);
            let s = cmd_credibility(&config)?;
            println!(
                "{} transcripts, {} rows ({} undefined) written to {}",
                s.transcripts,
                s.rows,
                s.undefined_rows,
                config.output.display()
            );
        }
        Command::Ground(a) => {
            a.run.apply(&mut config);
            set(&mut config.cache, a.cache);
            set(&mut config.k, a.k);
            set(&mut config.chunk_size, a.chunk_size);
            set(&mut config.alpha, a.alpha);
            if a.mock.is_some() {
                config.mock = a.mock;
            }
            if a.prompts.is_some() {
                config.prompts = a.prompts;
            }
            config.offline |= a.offline;
            let config = config.rooted(&cli.workdir);
            let s = cmd_ground(&config)?;
            println!(
                "{} transcripts ({} refused, {} failed), {} units ({} verifiable), {} chunks from {} documents",
                s.transcripts,
                s.refused,
                s.failed.len(),
                s.units,
                s.verifiable_units,
                s.chunks_indexed,
                s.documents
            );
            for f in &s.failed {
                println!("  failed {f}");
            }
        }
        Command::Report(a) => {
            set(&mut config.output, a.out);
            let report = cmd_report(&config.rooted(&cli.workdir))?;
            print!("{}", report.summary());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("groundcheck: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

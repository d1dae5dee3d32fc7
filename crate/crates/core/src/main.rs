use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use switchbench::commands::{self, FACTOR_FILE, MATRIX_FILE, REPLAY_FILE};
use switchbench::config::{Overrides, RunConfig};
use switchbench::digest::sha256_hex;
use switchbench::report::{render_registry, write_report, Format, ReportBundle};
use switchbench::runner::{RunSummary, RESULTS_FILE};
use switchbench::stats::BootstrapConfig;
use switchbench::Task;

#[derive(Parser)]
#[command(
    name = "switchbench",
    version,
    about = "Prefix-suffix switch matrices for multi-turn chat evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run (or resume) the full switch matrix described by a config file.
    Run(ConfigArgs),
    /// Aggregate a results file into means, switch effects and intervals.
    Stats(StatsArgs),
    /// Fit the additive prefix/suffix model to a matrix or a delta table.
    Factor(FactorArgs),
    /// Correlate fitted factors between two factor files.
    Correlate(CorrelateArgs),
    /// Replay cached prefixes through a candidate suffix model.
    Replay(ReplayArgs),
    /// Render tables as markdown, CSV or LaTeX.
    Report(ReportArgs),
    /// List the supported instruction verifiers.
    Verifiers,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    overrides: OverrideArgs,
}

#[derive(Args, Default)]
struct OverrideArgs {
    #[arg(long, value_parser = parse_task)]
    task: Option<Task>,
    /// Comma-separated subset (and order) of configured model names.
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<String>>,
    #[arg(long)]
    sample_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    cache_root: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    resamples: Option<usize>,
    /// Risk threshold on |delta| for replay.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Regenerate unreadable cache entries instead of failing.
    #[arg(long)]
    regenerate_corrupt: bool,
}

#[derive(Args)]
struct StatsArgs {
    /// Results file; defaults to results.jsonl in --output-dir.
    #[arg(long)]
    results: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Where to write the matrix; defaults to matrix.json next to the results.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<String>>,
    #[arg(long, default_value_t = 1000)]
    resamples: usize,
    /// Bootstrap seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct FactorArgs {
    /// A matrix file (.json) or a delta table (.csv).
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 10)]
    top_k: usize,
    /// Defaults to factors.json next to the input.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CorrelateArgs {
    first: PathBuf,
    second: PathBuf,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    config: PathBuf,
    /// Model whose cached prefixes are replayed.
    #[arg(long)]
    prefix: String,
    /// Candidate suffix model.
    #[arg(long)]
    candidate: String,
    #[command(flatten)]
    overrides: OverrideArgs,
}

#[derive(Args)]
struct ReportArgs {
    /// Matrix file written by `stats`.
    #[arg(long, conflicts_with = "delta_table")]
    matrix: Option<PathBuf>,
    /// Delta table CSV, used when no matrix is available.
    #[arg(long)]
    delta_table: Option<PathBuf>,
    /// Factor file written by `factor`.
    #[arg(long)]
    factors: Option<PathBuf>,
    /// Run summary to list alongside the tables.
    #[arg(long)]
    summary: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Markdown)]
    format: Format,
    #[arg(long, default_value = "report")]
    output_dir: PathBuf,
}

fn parse_task(s: &str) -> Result<Task, String> {
    s.parse()
}

impl OverrideArgs {
    fn to_overrides(&self) -> Overrides {
        Overrides {
            task: self.task,
            models: self.models.clone(),
            sample_size: self.sample_size,
            seed: self.seed,
            cache_root: self.cache_root.clone(),
            output_dir: self.output_dir.clone(),
            resamples: self.resamples,
            threshold: self.threshold,
            workers: self.workers,
            regenerate_corrupt: self.regenerate_corrupt,
        }
    }
}

fn load_config(path: &Path, overrides: &OverrideArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    let errors = cfg.apply(&overrides.to_overrides());
    if !errors.is_empty() {
        bail!("invalid overrides:\n  {}", errors.join("\n  "));
    }
    eprintln!("# effective config\n{}", cfg.effective_toml());
    Ok(cfg)
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    path.parent().unwrap_or(Path::new(".")).join(name)
}

fn file_name(path: &Path) -> String {
    path.file_name().map_or_else(
        || path.display().to_string(),
        |n| n.to_string_lossy().into_owned(),
    )
}

fn rate(r: Option<f64>) -> String {
    r.map_or_else(|| "n/a".to_string(), |v| format!("{v:.3}"))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let cfg = load_config(&args.config, &args.overrides)?;
            let summary = commands::cmd_run(&cfg)?;
            eprintln!(
                "planned {}, skipped {}, completed {}, failed {}; cache hit rate {}",
                summary.planned,
                summary.skipped,
                summary.completed,
                summary.failed,
                rate(summary.cache_hit_rate)
            );
            print_json(&summary)
        }
        Command::Stats(args) => {
            let results = match (&args.results, &args.output_dir) {
                (Some(r), _) => r.clone(),
                (None, Some(dir)) => dir.join(RESULTS_FILE),
                (None, None) => bail!("pass --results or --output-dir"),
            };
            let out = args
                .output
                .clone()
                .unwrap_or_else(|| sibling(&results, MATRIX_FILE));
            let bootstrap = BootstrapConfig {
                resamples: args.resamples,
                seed: args.seed,
                ..BootstrapConfig::default()
            };
            let matrix = commands::cmd_stats(&results, &bootstrap, args.models, Some(&out))?;
            eprintln!("wrote {}", out.display());
            print!(
                "{}",
                switchbench::report::render_markdown(&ReportBundle::from_matrix(
                    &matrix,
                    &file_name(&results),
                    &matrix.input_digest,
                ))
            );
            Ok(())
        }
        Command::Factor(args) => {
            let out = args
                .output
                .clone()
                .unwrap_or_else(|| sibling(&args.input, FACTOR_FILE));
            let report = commands::cmd_factor(&args.input, args.top_k, Some(&out))?;
            eprintln!("wrote {}", out.display());
            let m = &report.model;
            let fmt =
                |x: Option<f64>| x.map_or_else(|| "undefined".to_string(), |v| format!("{v:.3}"));
            println!(
                "mu {:.3}  R2 {}  LOO R2 {}",
                m.mu,
                fmt(m.r2_in_sample),
                fmt(m.r2_loo)
            );
            for (i, name) in m.models.iter().enumerate() {
                println!(
                    "{name:<28} alpha {:+.3}  beta {:+.3}",
                    m.alpha[i], m.beta[i]
                );
            }
            for r in &report.top_residuals {
                println!(
                    "{} -> {}: observed {:+.3} predicted {:+.3} residual {:+.3}",
                    r.prefix, r.suffix, r.observed, r.predicted, r.epsilon
                );
            }
            Ok(())
        }
        Command::Correlate(args) => {
            for c in commands::cmd_correlate(&args.first, &args.second)? {
                println!(
                    "{:?} {:?}: rho {:.3} over {} models",
                    c.kind,
                    c.method,
                    c.rho,
                    c.models.len()
                );
            }
            Ok(())
        }
        Command::Replay(args) => {
            let cfg = load_config(&args.config, &args.overrides)?;
            let report = commands::cmd_replay(&cfg, &args.prefix, &args.candidate)?;
            eprintln!("wrote {}", cfg.output_dir.join(REPLAY_FILE).display());
            println!(
                "{} -> {}: delta {:+.3} [{:.3}, {:.3}] n={} {}",
                report.prefix_model,
                report.candidate,
                report.delta,
                report.ci.lo,
                report.ci.hi,
                report.n,
                if report.flagged { "FLAGGED" } else { "ok" }
            );
            Ok(())
        }
        Command::Report(args) => {
            let mut bundle = match (&args.matrix, &args.delta_table) {
                (Some(path), _) => {
                    let (m, digest) = commands::load_matrix(path)?;
                    ReportBundle::from_matrix(&m, &file_name(path), &digest)
                }
                (None, Some(path)) => {
                    let bytes = std::fs::read(path)
                        .with_context(|| format!("reading {}", path.display()))?;
                    let table = switchbench::stats::matrix::parse_delta_table(
                        std::str::from_utf8(&bytes).context("delta table is not UTF-8")?,
                    )?;
                    ReportBundle::from_delta_table(table, &file_name(path), &sha256_hex(&bytes))
                }
                (None, None) => ReportBundle::default(),
            };
            if let Some(path) = &args.factors {
                let (f, digest) = commands::load_factor_report(path)?;
                bundle = bundle.with_factor(f, &file_name(path), &digest);
            }
            if let Some(path) = &args.summary {
                let bytes =
                    std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
                let s: RunSummary = serde_json::from_slice(&bytes)
                    .with_context(|| format!("parsing {}", path.display()))?;
                bundle.inputs.push((file_name(path), sha256_hex(&bytes)));
                bundle.notes.push(format!(
                    "run: {} planned, {} completed, {} failed, cache hit rate {}",
                    s.planned,
                    s.completed,
                    s.failed,
                    rate(s.cache_hit_rate)
                ));
            }
            if bundle.deltas.is_none() && bundle.factor.is_none() {
                bail!("nothing to report: pass --matrix, --delta-table or --factors");
            }
            for path in write_report(&bundle, args.format, &args.output_dir)? {
                println!("{}", path.display());
            }
            Ok(())
        }
        Command::Verifiers => {
            print!("{}", render_registry());
            Ok(())
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

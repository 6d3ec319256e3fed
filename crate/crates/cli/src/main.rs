use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hetfair::commands::{cmd_evaluate, cmd_generate, cmd_homophily, cmd_train, EvaluateOptions};
use hetfair::config::{self, GenerateOverrides, TrainOverrides};
use hetfair::ingest::{ingest, IngestOptions};
use hetfair::sweep::{run_sweep, SweepKind, SweepOverrides};
use hetfair::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "hetfair", version, about = "Local homophily and GNN group fairness experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic attributed graph bundle.
    Generate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: GenerateOverrides,
    },
    /// Global and local homophily of a graph bundle.
    Homophily {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,2")]
        k: Vec<usize>,
        #[arg(long, default_value_t = 0.2)]
        bin_width: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model on a graph bundle.
    Train {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: TrainOverrides,
    },
    /// Stratified fairness report for a predictions file.
    Evaluate {
        #[arg(long)]
        preds: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value_t = 1)]
        k: usize,
        /// Evaluate every node rather than the test split.
        #[arg(long)]
        all_nodes: bool,
        #[arg(long, default_value_t = 0.6)]
        hs_threshold: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grid over class homophily, sensitive homophily and feature bias.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        opts: SweepOverrides,
    },
    /// Feature-bias sweep at high sensitive homophily.
    BiasSweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        opts: SweepOverrides,
    },
    /// Convert an edge list and attribute table into a graph bundle.
    Ingest {
        #[arg(long)]
        edges: PathBuf,
        #[arg(long)]
        nodes: PathBuf,
        #[arg(long, default_value = "user_id")]
        id_col: String,
        #[arg(long)]
        class_col: String,
        #[arg(long)]
        sens_col: String,
        #[arg(long, value_delimiter = ',')]
        feature_cols: Vec<String>,
        /// Binarize the class column as value > threshold.
        #[arg(long)]
        class_threshold: Option<f64>,
        #[arg(long)]
        sens_threshold: Option<f64>,
        #[arg(long)]
        edges_header: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

fn sweep(config: Option<&Path>, opts: SweepOverrides, kind: SweepKind) -> CliResult<()> {
    let file: SweepOverrides = config::load(config)?;
    let spec = opts.merged(&file).resolve(kind)?;
    eprintln!("{} -> {} ({} runs)", spec.sweep_id, spec.root().display(), spec.total_runs());
    let outcome = run_sweep(&spec)?;
    eprintln!(
        "done: {} cells run, {} resumed, {} records, {} failures",
        outcome.cells_run,
        outcome.cells_skipped,
        outcome.records.len(),
        outcome.failures.len()
    );
    for f in &outcome.failures {
        eprintln!("  failed {} graph {} {:?} run {:?}: {}", f.cell_id, f.graph, f.model, f.run, f.error);
    }
    if outcome.failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::RunsFailed(outcome.failures.len()))
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Generate { config, out, opts } => {
            let file: GenerateOverrides = config::load(config.as_deref())?;
            let cfg = opts.merged(&file).resolve()?;
            let b = cmd_generate(&cfg, &out)?;
            eprintln!("{} nodes, {} edges -> {}", b.meta.n_nodes, b.meta.n_edges, out.display());
            Ok(())
        }
        Command::Homophily { graph, k, bin_width, out } => cmd_homophily(&graph, &k, bin_width, &out),
        Command::Train { graph, config, out, opts } => {
            let file: TrainOverrides = config::load(config.as_deref())?;
            cmd_train(&graph, &opts.merged(&file), &out)
        }
        Command::Evaluate {
            preds,
            graph,
            k,
            all_nodes,
            hs_threshold,
            out,
        } => cmd_evaluate(
            &preds,
            &graph,
            &EvaluateOptions {
                k,
                all_nodes,
                hs_threshold,
            },
            &out,
        ),
        Command::Sweep { config, opts } => sweep(config.as_deref(), opts, SweepKind::Sweep),
        Command::BiasSweep { config, opts } => sweep(config.as_deref(), opts, SweepKind::BiasSweep),
        Command::Ingest {
            edges,
            nodes,
            id_col,
            class_col,
            sens_col,
            feature_cols,
            class_threshold,
            sens_threshold,
            edges_header,
            out,
        } => {
            let opts = IngestOptions {
                id_col,
                class_col,
                sens_col,
                feature_cols,
                class_threshold,
                sens_threshold,
                edges_header,
            };
            let res = ingest(&edges, &nodes, &opts).map_err(anyhow::Error::from)?;
            res.write(&out)?;
            eprintln!(
                "{} nodes, {} edges ({} self-loops dropped, {} duplicate lines) -> {}",
                res.bundle.meta.n_nodes,
                res.bundle.meta.n_edges,
                res.self_loops_dropped,
                res.duplicate_edges,
                out.display()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedgrl_core::bundle_io::{save_bundle, save_bundle_with_meta};
use fedgrl_core::config::{ExperimentConfig, Preset};
use fedgrl_core::experiment::run_baseline_matrix;
use fedgrl_core::report::{merge_records, write_report};
use fedgrl_core::synth::{generate_synthetic, SyntheticSpec};
use fedgrl_core::twitch::convert_twitch;
use fedgrl_core::Error;

#[derive(Parser)]
#[command(name = "fedgrl", version, about = "Federated graph representation learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert raw MUSAE Twitch files into one bundle per region.
    ConvertTwitch {
        /// Directory holding `<REGION>/musae_<REGION>_*` files.
        #[arg(long)]
        raw: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Width of the multi-hot feature vectors (default: largest index + 1).
        #[arg(long)]
        feature_dim: Option<usize>,
    },
    /// Write the synthetic desk clients as bundles.
    GenSynth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the baseline matrix.
    Run {
        /// TOML config; without it the preset alone is used.
        #[arg(long)]
        config: Option<PathBuf>,
        /// `desk` or `full`; overrides the `preset` key of the config.
        #[arg(long)]
        preset: Option<String>,
        /// Output directory (overrides `experiment.out`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Merge result CSVs and rebuild the summary tables.
    Report {
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        results: Vec<PathBuf>,
    },
}

enum Failure {
    Config(String),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Config(e.to_string()),
            _ => Failure::Run(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Run(msg)) => {
            log::error!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            log::error!("config error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::ConvertTwitch { raw, out, feature_dim } => convert(&raw, &out, feature_dim),
        Command::GenSynth { out, seed } => {
            for b in generate_synthetic(&SyntheticSpec::desk(), seed)? {
                let dir = out.join(&b.name);
                save_bundle(&b, &dir)?;
                println!("{}: {} nodes, {} edges -> {}", b.name, b.num_nodes(), b.edges().len(), dir.display());
            }
            Ok(())
        }
        Command::Run { config, preset, out } => run(config.as_deref(), preset.as_deref(), out),
        Command::Report { out, results } => {
            let paths: Vec<&Path> = results.iter().map(PathBuf::as_path).collect();
            let records = merge_records(&paths)?;
            let summary = write_report(&out, &records, &[])?;
            print!("{}", summary.to_markdown());
            Ok(())
        }
    }
}

fn convert(raw: &Path, out: &Path, feature_dim: Option<usize>) -> Result<(), Failure> {
    let regions = convert_twitch(raw, feature_dim)?;
    println!("| bundle | nodes | expected | undirected edges | raw rows | expected edges |");
    println!("|---|---|---|---|---|---|");
    for r in &regions {
        save_bundle_with_meta(&r.bundle, &r.meta, &out.join(&r.bundle.name))?;
        let s = &r.stats;
        println!(
            "| {} | {} | {} | {} | {} | {} |",
            s.name, s.nodes, s.expected_nodes, s.undirected_edges, s.raw_edges, s.expected_edges
        );
        if !s.nodes_match() {
            log::warn!("{}: {} nodes, expected {}", s.name, s.nodes, s.expected_nodes);
        }
        if s.undirected_edges != s.expected_edges && s.raw_edges != s.expected_edges {
            log::warn!(
                "{}: edge count matches neither convention ({} undirected, {} raw, expected {})",
                s.name,
                s.undirected_edges,
                s.raw_edges,
                s.expected_edges
            );
        }
    }
    Ok(())
}

fn run(config: Option<&Path>, preset: Option<&str>, out: Option<PathBuf>) -> Result<(), Failure> {
    let preset = preset.map(Preset::parse).transpose()?;
    let mut cfg = match config {
        Some(path) => ExperimentConfig::load(path, preset).map_err(|e| Failure::Config(e.to_string()))?,
        None => ExperimentConfig::preset(preset.unwrap_or(Preset::Desk)),
    };
    if let Some(out) = out {
        cfg.out_dir = out;
    }
    cfg.validate()?;
    let outcome = run_baseline_matrix(&cfg)?;
    print!("{}", outcome.summary.to_markdown());
    println!();
    print!("{}", outcome.summary.gains_markdown());
    println!("results in {}", cfg.out_dir.join("results").display());
    if outcome.failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Run(format!("{} cells failed", outcome.failures.len())))
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dcornet::cli::{cmd_centrality, cmd_ingest, cmd_network, stderr_progress, Format, RunConfig};
use dcornet::{CentralityScores, Result};

#[derive(Parser)]
#[command(
    name = "dcornet",
    version,
    about = "Partial distance correlation dependence networks"
)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, env = "DCORNET_CONFIG")]
    config: Option<PathBuf>,
    /// Grouping to build the network for.
    #[arg(long, global = true, env = "DCORNET_GROUPING")]
    grouping: Option<String>,
    /// Largest conditioning set considered per edge.
    #[arg(long, global = true, env = "DCORNET_MAX_COND_SIZE")]
    max_cond_size: Option<usize>,
    /// Search all conditioning subsets regardless of node count.
    #[arg(long, global = true)]
    exhaustive: bool,
    /// Edges at or below this weight are pruned.
    #[arg(long, global = true, env = "DCORNET_THRESHOLD")]
    threshold: Option<f64>,
    /// Permutations per edge test (0 disables testing).
    #[arg(long, global = true, env = "DCORNET_PERMUTATIONS")]
    permutations: Option<usize>,
    #[arg(long, global = true, env = "DCORNET_SEED")]
    seed: Option<u64>,
    #[arg(long, global = true, env = "DCORNET_THREADS")]
    threads: Option<usize>,
    /// Output formats; may be repeated or comma separated.
    #[arg(long = "format", global = true, value_enum, value_delimiter = ',')]
    formats: Vec<Format>,
    /// Output directory.
    #[arg(long, global = true, env = "DCORNET_OUT")]
    out: Option<PathBuf>,
    /// Number of central nodes printed.
    #[arg(long, global = true)]
    top: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Load, impute and standardize the panel.
    Ingest,
    /// Build the dependence network from the ingested panel.
    Network,
    /// Rank nodes of the stored network by eigenvector centrality.
    Centrality,
    /// Ingest, network and centrality in sequence.
    RunAll,
}

impl Cli {
    fn config(&self) -> Result<RunConfig> {
        let path = self
            .config
            .as_ref()
            .ok_or_else(|| dcornet::Error::Config("--config is required".into()))?;
        let mut cfg = RunConfig::load(path)?;
        if let Some(g) = &self.grouping {
            cfg.grouping = g.clone();
        }
        if let Some(m) = self.max_cond_size {
            cfg.network.max_cond_size = Some(m);
        }
        if self.exhaustive {
            cfg.network.exhaustive = true;
        }
        if let Some(t) = self.threshold {
            cfg.network.threshold = t;
        }
        if let Some(p) = self.permutations {
            cfg.network.permutations = p;
        }
        if let Some(s) = self.seed {
            cfg.network.seed = s;
        }
        if let Some(t) = self.threads {
            cfg.threads = Some(t);
        }
        if !self.formats.is_empty() {
            cfg.formats = self.formats.clone();
        }
        if let Some(o) = &self.out {
            // Command-line paths are relative to the working directory.
            cfg.out = std::env::current_dir()
                .map(|d| d.join(o))
                .unwrap_or_else(|_| o.clone());
        }
        if let Some(k) = self.top {
            cfg.centrality.top = k;
        }
        Ok(cfg)
    }
}

fn print_top(scores: &CentralityScores, k: usize) {
    println!("rank\tnode\tscore");
    for r in scores.ranked().into_iter().take(k) {
        println!("{}\t{}\t{:.6}", r.rank, r.node, r.score);
    }
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = cli.config()?;
    let progress = stderr_progress(100_000);
    let ingest = |cfg: &RunConfig| -> Result<()> {
        let report = cmd_ingest(cfg)?;
        println!("imputed cells: {}", report.imputed_total);
        for (a, b) in &report.uniform_fallback_pairs {
            eprintln!("warning: {a} and {b} share no observed cells; uniform weights used");
        }
        Ok(())
    };
    let network = |cfg: &RunConfig| -> Result<()> {
        let m = cmd_network(cfg, Some(&progress))?;
        println!(
            "network: {} nodes, {} subsets evaluated in {:.2}s on {} threads",
            m.nodes, m.total_subsets, m.wall_time_secs, m.threads
        );
        Ok(())
    };
    let centrality = |cfg: &RunConfig| -> Result<()> {
        let scores = cmd_centrality(cfg)?;
        print_top(&scores, cfg.centrality.top);
        Ok(())
    };
    match cli.command {
        Command::Ingest => ingest(&cfg),
        Command::Network => network(&cfg),
        Command::Centrality => centrality(&cfg),
        Command::RunAll => {
            ingest(&cfg)?;
            network(&cfg)?;
            centrality(&cfg)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

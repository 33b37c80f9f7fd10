use std::path::PathBuf;

use clap::{Parser, Subcommand};
use holodense::{cmd_labyrinth, cmd_plot, cmd_run, cmd_verify, LabyrinthArgs, Overrides, EXIT_CONFIG};

#[derive(Parser)]
#[command(name = "holodense", version, about = "Certified finite-stage runs of dense complete embeddings")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the number of stages.
    #[arg(long, global = true)]
    stages: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build and certify the stages, then write the run directory.
    Run,
    /// Re-derive every stored margin of a run directory.
    Verify,
    /// Generate one labyrinth and compare its ledger with a roadmap path.
    Labyrinth {
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        inner: f64,
        #[arg(long, default_value_t = 2.0)]
        outer: f64,
        #[arg(long, default_value_t = 5.0)]
        target: f64,
        /// Roadmap nodes.
        #[arg(long, default_value_t = 3000)]
        budget: usize,
        #[arg(long, default_value_t = 0.1)]
        gap_fraction: f64,
    },
    /// Redraw the SVG plots of a run directory.
    Plot,
}

fn main() {
    let cli = Cli::parse();
    let need = |p: &Option<PathBuf>, flag: &str| -> PathBuf {
        p.clone().unwrap_or_else(|| {
            eprintln!("error: --{flag} is required");
            std::process::exit(EXIT_CONFIG)
        })
    };
    let code = match cli.cmd {
        Cmd::Run => {
            let ov = Overrides { seed: cli.seed, stages: cli.stages };
            cmd_run(&need(&cli.config, "config"), &need(&cli.out, "out"), &ov)
        }
        Cmd::Verify => cmd_verify(&need(&cli.out, "out")),
        Cmd::Plot => cmd_plot(&need(&cli.out, "out")),
        Cmd::Labyrinth { n, inner, outer, target, budget, gap_fraction } => {
            let args = LabyrinthArgs { n, inner, outer, target, seed: cli.seed.unwrap_or(0), budget, gap_fraction };
            cmd_labyrinth(&need(&cli.out, "out"), &args)
        }
    };
    std::process::exit(code);
}

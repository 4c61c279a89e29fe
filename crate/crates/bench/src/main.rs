use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fdi_bench::{emit_plot_data, run_verb, BenchError, ScenarioConfig, Verb};

#[derive(Parser)]
#[command(name = "fdi-bench", version, about = "False data injection attack and detection scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Scenario TOML.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Learn load archetypes and write synthetic bus profiles.
    GenLoads(Common),
    /// Simulate the noisy PMU stream.
    Simulate(Common),
    /// Design the attack and evaluate the overflow it causes.
    Attack(Common),
    /// Estimate states on the attacked stream and run the detectors.
    Detect(Common),
    /// Full pipeline.
    Run(Common),
    /// Assemble plot-ready CSV bundles from a completed run.
    PlotData(Common),
}

fn load(c: &Common) -> Result<(ScenarioConfig, PathBuf), BenchError> {
    let mut cfg = ScenarioConfig::load(&c.config)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    let out = c.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    Ok((cfg, out))
}

fn run(cli: Cli) -> Result<(), BenchError> {
    let (verb, common) = match &cli.command {
        Command::GenLoads(c) => (Some(Verb::GenLoads), c),
        Command::Simulate(c) => (Some(Verb::Simulate), c),
        Command::Attack(c) => (Some(Verb::Attack), c),
        Command::Detect(c) => (Some(Verb::Detect), c),
        Command::Run(c) => (Some(Verb::Run), c),
        Command::PlotData(c) => (None, c),
    };
    let (cfg, out) = load(common)?;
    match verb {
        Some(v) => {
            let m = run_verb(v, &cfg, &out)?;
            for f in &m.outputs {
                println!("{}  {}", f.sha256, out.join(&f.file).display());
            }
        }
        None => {
            for f in emit_plot_data(&cfg, &out)? {
                println!("{}", out.join(f).display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

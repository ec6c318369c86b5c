use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use bvsim_core::config::{self, RunConfig};
use bvsim_core::{plots, sweep};

#[derive(Parser)]
#[command(
    name = "bvsim",
    version,
    about = "Rotating-disc benchmark for event, difference, and frame sensors"
)]
struct Cli {
    /// Run configuration, TOML. Falls back to <out>/config.toml when one
    /// was saved there by an earlier run.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; overrides output.dir from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; 0 means all cores.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    /// Downgrade unknown config keys to warnings.
    #[arg(long, global = true)]
    lenient: bool,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate every (sensor, rpm, lux) cell and persist the streams.
    Simulate,
    /// Analyze previously persisted cells into report.csv.
    Evaluate,
    /// Simulate, analyze, report, and plot in one go.
    Sweep,
    /// Re-draw the plots from an existing report.
    Plot {
        /// Report path; defaults to <out>/report.csv.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Simulate => {
            let (cfg, out) = load(&cli)?;
            let n = sweep::run_simulate(&cfg, &out, cli.jobs)?;
            println!("wrote {n} cells under {}", out.join("cells").display());
        }
        Cmd::Evaluate => {
            let (cfg, out) = load(&cli)?;
            report_outcome(sweep::run_evaluate(&cfg, &out, cli.jobs)?);
        }
        Cmd::Sweep => {
            let (cfg, out) = load(&cli)?;
            report_outcome(sweep::run_sweep(&cfg, &out, cli.jobs)?);
        }
        Cmd::Plot { ref report } => {
            let out = out_dir(&cli);
            let report = report.clone().unwrap_or_else(|| out.join("report.csv"));
            let paths = plots::emit_plots(&report, &out.join("plots"))
                .with_context(|| format!("plotting {}", report.display()))?;
            if paths.is_empty() {
                eprintln!("warning: {} has no plottable rows", report.display());
            }
            for p in paths {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from("out"))
}

fn load(cli: &Cli) -> Result<(RunConfig, PathBuf)> {
    let path = match &cli.config {
        Some(p) => p.clone(),
        None => {
            let fallback = out_dir(cli).join("config.toml");
            if !fallback.exists() {
                bail!("pass --config <path>; no {} to fall back to", fallback.display());
            }
            fallback
        }
    };
    let overrides = config::env_overrides();
    let (mut cfg, warnings) = config::load_config(&path, cli.lenient, &overrides)
        .with_context(|| format!("loading {}", path.display()))?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.display().to_string();
    }
    let out = PathBuf::from(&cfg.output.dir);
    Ok((cfg, out))
}

fn report_outcome(outcome: sweep::SweepOutcome) {
    println!(
        "report: {} ({} rows, {} failed)",
        outcome.report_path.display(),
        outcome.rows.len(),
        outcome.n_failed
    );
    for p in outcome.plot_paths {
        println!("plot: {}", p.display());
    }
}

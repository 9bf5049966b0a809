use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use dpd_forge::cli::{self, RunConfig};
use dpd_forge::models::Family;

#[derive(Parser)]
#[command(
    name = "dpd-forge",
    version,
    about = "End-to-end DPD learning on synthetic wideband PAs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// JSON run configuration; absent sections use defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seeds both the stimulus draw and training.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    pa_ckpt: Option<PathBuf>,
    #[arg(long)]
    dpd_ckpt: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an OFDM stimulus, run it through the synthetic PA and split it.
    Datagen(Common),
    /// Train a PA behavioral model.
    TrainPa(Common),
    /// Train a DPD through a frozen PA model.
    TrainDpd(Common),
    /// SIM-ACPR, SIM-EVM and friends on the test partition.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Evaluate the PA model alone.
        #[arg(long)]
        no_dpd: bool,
    },
    /// Train one DPD per family and parameter budget.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Ascending comma-separated parameter budgets.
        #[arg(long, default_value = "100,200,400")]
        budgets: String,
        #[arg(long, default_value = "dgru,gru,lstm,gmp")]
        families: String,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Write spectrum, constellation and learning-curve tables for a DPD run.
    ExportPlots { run_dir: PathBuf },
}

fn config(c: &Common) -> dpd_forge::Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.set_seed(s);
    }
    let paths = &mut cfg.paths;
    for (slot, flag) in [
        (&mut paths.out, &c.out),
        (&mut paths.data, &c.data),
        (&mut paths.pa_ckpt, &c.pa_ckpt),
        (&mut paths.dpd_ckpt, &c.dpd_ckpt),
    ] {
        if flag.is_some() {
            slot.clone_from(flag);
        }
    }
    Ok(cfg)
}

fn deterministic() -> bool {
    std::env::var("DPD_FORGE_DETERMINISTIC").is_ok_and(|v| v == "1")
}

fn run(cmd: Command) -> dpd_forge::Result<serde_json::Value> {
    match cmd {
        Command::Datagen(c) => cli::datagen(&config(&c)?),
        Command::TrainPa(c) => cli::train_pa(&config(&c)?),
        Command::TrainDpd(c) => cli::train_dpd(&config(&c)?),
        Command::Eval { common, no_dpd } => cli::eval(&config(&common)?, no_dpd),
        Command::Sweep {
            common,
            budgets,
            families,
            jobs,
        } => {
            let cfg = config(&common)?;
            let budgets = cli::parse_budgets(&budgets)?;
            let families: Vec<Family> = cli::parse_families(&families)?;
            let jobs = if deterministic() { 1 } else { jobs.max(1) };
            cli::sweep(&cfg, &families, &budgets, jobs)
        }
        Command::ExportPlots { run_dir } => cli::export_plots(&run_dir),
    }
}

fn main() -> ExitCode {
    let args = Cli::parse();
    match run(args.command) {
        Ok(v) => match serde_json::to_string(&v).context("encoding result") {
            Ok(s) => {
                println!("{s}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::from(1)
            }
        },
        Err(e) => {
            // library errors already render their sources
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use kpo::config::{Experiment, RunConfig};
use kpo::sweep::{self, PointStatus};

#[derive(Parser)]
#[command(name = "kpo", version, about = "Floquet vs effective-Hamiltonian sweeps for the driven Kerr oscillator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Effective spectrum with tracked, rescaled quasienergies
    Spectrum(RunArgs),
    /// Floquet, transformed Floquet and effective Wigner grids
    Wigner(RunArgs),
    /// Below-well average IPR over a (g3, g4) grid
    IprMap(RunArgs),
    /// Trace distance of U_S from the identity over a (g3, g4) grid
    UsdistMap(RunArgs),
    /// Average IPR against g3 at several expansion orders
    OrderScan(RunArgs),
    /// Floquet ground branch from zero drive
    Track(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_parser = ["2", "4", "6"])]
    order: Option<String>,
    /// Keep finished points from an existing manifest
    #[arg(long)]
    resume: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (exp, args) = match cli.command {
        Command::Spectrum(a) => (Experiment::Spectrum, a),
        Command::Wigner(a) => (Experiment::Wigner, a),
        Command::IprMap(a) => (Experiment::IprMap, a),
        Command::UsdistMap(a) => (Experiment::UsdistMap, a),
        Command::OrderScan(a) => (Experiment::OrderScan, a),
        Command::Track(a) => (Experiment::Track, a),
    };
    match run(exp, args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(exp: Experiment, args: RunArgs) -> kpo::Result<ExitCode> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(e) = cfg.experiment {
        if e != exp {
            return Err(kpo::Error::Config(format!(
                "config is for '{}' but '{}' was requested",
                e.name(),
                exp.name()
            )));
        }
    }
    cfg.experiment = Some(exp);
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    if let Some(o) = args.order {
        cfg.effective.order = o.parse().expect("validated by clap");
    }
    let out = sweep::output_dir(&cfg, args.out);
    log::info!("{} -> {}", exp.name(), out.display());
    let manifest = sweep::run(&cfg, &out, args.resume)?;
    for p in manifest.points.iter().filter(|p| p.status != PointStatus::Ok) {
        log::warn!("{}: {} {}", p.key, p.status.as_str(), p.message.as_deref().unwrap_or(""));
    }
    println!(
        "{}: {} points, {} ok, {} truncation-flag, {} branch-break, {} error, {:.1}s",
        exp.name(),
        manifest.points.len(),
        manifest.count(PointStatus::Ok),
        manifest.count(PointStatus::TruncationFlag),
        manifest.count(PointStatus::BranchBreak),
        manifest.count(PointStatus::Error),
        manifest.wall_time_s
    );
    Ok(if manifest.all_ok() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

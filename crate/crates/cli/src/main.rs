use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context as _, Result};
use clap::{Parser, Subcommand, ValueEnum};
use quddpm_cli::commands::{run, Command, Context};
use quddpm_core::config::RunConfig;
use quddpm_core::duddpm::Variant;

#[derive(Parser)]
#[command(name = "quddpm", version, about = "Quantum denoising diffusion experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Clone)]
enum Cmd {
    /// Forward diffusion and its distance to the Haar ensemble per step.
    Diffuse(Args),
    /// Full backward training plus a generation run.
    Train(Args),
    /// Mean training gradient over the first cycles across register sizes.
    SweepBp(Args),
    /// Monte-Carlo checks of the gradient mean/variance and small-angle bounds.
    CheckTheorems(Args),
    /// Bisection of the final diffusion scale.
    Calibrate(Args),
}

#[derive(clap::Args, Clone)]
struct Args {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "QUDDPM_OUT_DIR")]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    /// 10-qubit grid with the long schedule (hours of runtime).
    #[arg(long)]
    full: bool,
}

#[derive(ValueEnum, Clone, Copy)]
enum VariantArg {
    Original,
    Improved,
}

fn main() -> ExitCode {
    match real_main() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<bool> {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::Diffuse(a) => (Command::Diffuse, a),
        Cmd::Train(a) => (Command::Train, a),
        Cmd::SweepBp(a) => (Command::SweepBp, a),
        Cmd::CheckTheorems(a) => (Command::CheckTheorems, a),
        Cmd::Calibrate(a) => (Command::Calibrate, a),
    };
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            RunConfig::from_json(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if args.full {
        eprintln!("warning: --full runs the 10-qubit configuration and can take hours");
    }
    let out_dir = args
        .out
        .or_else(|| config.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let variant = args.variant.map(|v| match v {
        VariantArg::Original => Variant::Original,
        VariantArg::Improved => Variant::Improved,
    });
    let ctx = Context::new(config, variant, args.full, out_dir)?;
    let report = run(command, &ctx)?;
    let mut stdout = std::io::stdout().lock();
    for c in &report.checks {
        let tag = if c.pass { "PASS" } else if c.hard { "FAIL" } else { "WARN" };
        let _ = writeln!(stdout, "{tag} {} {}", c.name, c.detail);
    }
    for f in &report.files {
        let _ = writeln!(stdout, "wrote {}", f.display());
    }
    Ok(report.passed())
}

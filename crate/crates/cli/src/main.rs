use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ctl_cli::{run, CliError, CliResult, ExperimentConfig};

#[derive(Parser)]
#[command(name = "ctl", version, about = "Concentrating symmetric minimizers of trace-exponent quotients")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Families solved concurrently.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,

    /// Replaces the configured seed list with this single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Minimize one branch at a single lambda.
    Solve {
        /// Rotation order (default: the first configured one).
        #[arg(long)]
        k: Option<usize>,
        /// Default: the last scheduled lambda.
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Sweep lambda for every configured k and seed and report non-equivalent solutions.
    Sweep,
    /// Estimate K(n, p) and compare with the closed form when p = 2.
    TraceConstant,
    /// Re-render CSV, JSON and plots from checkpoints.
    Report,
    /// Check the configuration without computing anything.
    Validate,
}

fn load(cli: &Cli) -> CliResult<ExperimentConfig> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config <path> is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seeds = vec![seed];
    }
    Ok(cfg)
}

fn print_json<T: serde::Serialize>(v: &T) -> CliResult<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn execute(cli: &Cli) -> CliResult<()> {
    let cfg = load(cli)?;
    match &cli.command {
        Command::Validate => {
            let report = cfg.validate()?;
            for w in &report.warnings {
                log::warn!("{w}");
            }
            print_json(&report)
        }
        Command::TraceConstant => {
            let rows = run::trace_constant_table(&cfg)?;
            println!("method,n,p,q,K,relative_difference");
            for r in rows {
                println!(
                    "{},{},{},{},{:.6},{:.4}",
                    serde_json::to_value(r.method)?.as_str().unwrap_or_default(),
                    r.n,
                    r.p,
                    r.q,
                    r.k,
                    r.relative_difference
                );
            }
            Ok(())
        }
        Command::Solve { k, lambda } => {
            if let Some(k) = *k {
                ExperimentConfig { ks: vec![k], ..cfg.clone() }.validate()?;
            }
            let rec = run::solve(&cfg, *k, *lambda)?;
            print_json(&ctl_cli::report::branch_row(&rec))
        }
        Command::Sweep => {
            let summary = run::sweep(&cfg, cli.workers)?;
            print_json(&serde_json::json!({
                "lambda": summary.lambda,
                "nonequivalent_count": summary.nonequivalent_count,
                "output_dir": cfg.output_dir,
            }))
        }
        Command::Report => {
            let summary = run::rerender(&cfg)?;
            print_json(&serde_json::json!({
                "lambda": summary.lambda,
                "nonequivalent_count": summary.nonequivalent_count,
            }))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CTL_LOG", "info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::Config(e.to_string());
            println!("{}", serde_json::to_string(&err.document()).expect("error document serializes"));
            return ExitCode::from(2);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            println!("{}", serde_json::to_string(&e.document()).expect("error document serializes"));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

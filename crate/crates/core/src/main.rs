use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::LevelFilter;

use mgdeform_core::cli::{self, CliError, ConfigError};

#[derive(Parser)]
#[command(name = "mgdeform", version, about = "Curvature-preserving G-deformations of surfaces with boundary")]
struct Args {
    /// Run config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides output.dir of the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, default_value = "info")]
    log_level: LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the config and the surface hypotheses, then run the flow and write the exports.
    Run,
    /// Solve a boundary-value problem file and write solution.json.
    Bvp { problem: PathBuf },
    /// Check the config and the surface hypotheses without running.
    Validate,
}

fn config(args: &Args) -> Result<cli::RunConfig, CliError> {
    let path = args
        .config
        .as_ref()
        .ok_or_else(|| ConfigError::Invalid(vec!["--config is required for this subcommand".into()]))?;
    cli::read_config(path)
}

fn execute(args: &Args) -> Result<bool, CliError> {
    match &args.command {
        Command::Run => {
            let cfg = config(args)?;
            let out = args.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
            let s = cli::run(&cfg, &out)?;
            println!(
                "{} steps to t = {}: max dK/K {:.3e} (rebuild {}), G residual {:.3e}, boundary residual {:.3e}, |z(x0)| {:.3e}, projected dimension {}",
                s.flow.steps,
                s.flow.t,
                s.flow.max_dk_rel,
                s.flow.max_dk_rel_oracle.map_or("-".into(), |v| format!("{v:.3e}")),
                s.flow.max_g_residual,
                s.flow.max_boundary_residual,
                s.flow.max_fixed_point,
                s.flow.projected_dimension.map_or("-".into(), |d| d.to_string()),
            );
            Ok(true)
        }
        Command::Bvp { problem } => {
            let out = args.out.clone().unwrap_or_else(|| PathBuf::from(".")).join("solution.json");
            let sol = cli::bvp(problem, &out)?;
            println!(
                "index {}, dimension {}, {} iterations, boundary residual {:.3e}{}",
                sol.index,
                sol.dimension,
                sol.iterations,
                sol.boundary_residual,
                sol.recovery_error.map_or(String::new(), |e| format!(", recovery error {e:.3e}"))
            );
            Ok(true)
        }
        Command::Validate => {
            let report = cli::validate(&config(args)?)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report is serializable"));
            Ok(report.passed())
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    env_logger::Builder::new().filter_level(args.log_level).format_timestamp(None).init();
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("{}", serde_json::json!({ "error": "threads", "message": e.to_string() }));
            return ExitCode::from(2);
        }
    }
    match execute(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("{}", e.report());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

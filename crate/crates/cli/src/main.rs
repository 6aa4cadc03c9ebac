use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use luna_core::experiment::{
    emit_outputs, ingest_weekly_sales_file, parse_config_file, run_experiment, slope_estimate, ExperimentSpec, SCENARIOS,
};
use luna_core::Error;

/// Output directories in configs are resolved against this variable when relative.
const OUTPUT_ROOT_VAR: &str = "LUNA_OUTPUT_ROOT";

#[derive(Parser)]
#[command(name = "luna", version, about = "Supplier pricing against learning retailers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every policy of an experiment and write its result files.
    Run { config: PathBuf },
    /// Print the scenario catalog.
    ListScenarios,
    /// Parse a config and print it with all defaults filled in.
    Validate { config: PathBuf },
    /// Summarize the monthly pools derived from a weekly sales CSV.
    Ingest { csv: PathBuf },
}

fn output_dir(experiment: &ExperimentSpec) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_VAR) {
        Some(root) if experiment.output.dir.is_relative() => Path::new(&root).join(&experiment.output.dir),
        _ => experiment.output.dir.clone(),
    }
}

fn run(command: Command) -> luna_core::Result<()> {
    match command {
        Command::ListScenarios => {
            for s in &SCENARIOS {
                println!("{:<18} {}", s.name, s.description);
                println!("{:<18} retailer={} demand={} policies={}", "", s.retailer, s.demand, s.policies.join(","));
            }
        }
        Command::Validate { config } => {
            let experiment = parse_config_file(&config)?;
            print!("{}", experiment.to_config_text());
        }
        Command::Ingest { csv } => {
            let data = ingest_weekly_sales_file(&csv)?;
            println!("rows={} skipped={}", data.rows.len(), data.skipped);
            for (m, pool) in data.pools.pools.iter().enumerate() {
                let mean = pool.iter().sum::<f64>() / pool.len() as f64;
                let max = pool.iter().copied().fold(0.0, f64::max);
                println!("month {:>2}: samples={:<4} mean={mean:.3} max={max}", m + 1, pool.len());
            }
        }
        Command::Run { config } => {
            let experiment = parse_config_file(&config)?;
            let results = run_experiment(&experiment)?;
            let dir = output_dir(&experiment);
            for path in emit_outputs(&results, &experiment, &dir)? {
                log::info!("wrote {}", path.display());
            }
            for r in &results {
                let a = &r.aggregate;
                let last = a.mean_cum_regret.len() - 1;
                let slope = slope_estimate(&a.mean_cum_regret, experiment.output.window)
                    .map(|s| format!("{s:.3}"))
                    .unwrap_or_else(|_| "n/a".into());
                println!(
                    "{:<16} final regret {:.4} ± {:.4}  slope {slope}",
                    r.policy, a.mean_cum_regret[last], a.std_cum_regret[last]
                );
            }
            println!("results in {}", dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config(_)) => {
            eprintln!("{e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

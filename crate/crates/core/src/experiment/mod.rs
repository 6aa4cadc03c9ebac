//! Experiment configuration, the scenario catalog, dataset ingestion, slope
//! analysis and result files.

mod analysis;
mod catalog;
mod config;
mod dataset;
mod output;

pub use analysis::{loglog_slope, slope_estimate, DEFAULT_WINDOW};
pub use catalog::{scenario, scenario_names, sinusoid_variation, Scenario, SCENARIOS};
pub use config::{parse_config, parse_config_file, ConfigError, DemandSpec, ExperimentSpec, OutputSpec, SupplierSpec};
pub use dataset::{ingest_weekly_sales, ingest_weekly_sales_file, WeeklySalesDataset};
pub use output::{emit_outputs, git_blob_hash, svg_plot, PolicyResult};

pub use crate::sim::sinusoidal_p;

use crate::error::Result;
use crate::sim::run_replications;

/// Runs every policy of the experiment in catalog order.
pub fn run_experiment(experiment: &ExperimentSpec) -> Result<Vec<PolicyResult>> {
    experiment.episodes()?
        .into_iter()
        .map(|(name, cfg)| {
            log::info!("running {name}: T={} R={}", cfg.t_horizon, cfg.replications);
            Ok(PolicyResult {
                policy: name,
                aggregate: run_replications(&cfg)?,
            })
        })
        .collect()
}

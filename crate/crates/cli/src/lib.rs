//! Experiment driver: parses configurations, runs the named experiments and writes reports.

pub mod config;
pub mod experiments;
pub mod report;

use anyhow::Result;

pub use config::{parse_config, ConfigError, Experiment, ExperimentConfig};
pub use report::{CheckResult, ReportDocument};

/// Command-line overrides applied on top of a configuration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub seed: Option<u64>,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

/// Runs `config` with `opts`, on a dedicated pool when a thread count is given.
pub fn run(mut config: ExperimentConfig, opts: RunOptions) -> Result<ReportDocument> {
    if let Some(seed) = opts.seed {
        config.seed = Some(seed);
    }
    match opts.threads {
        Some(0) => Err(ConfigError::new("threads", "must be at least 1").into()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build()?;
            pool.install(|| experiments::run_experiment(config, n))
        }
        None => experiments::run_experiment(config, rayon::current_num_threads()),
    }
}

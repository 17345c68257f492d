//! Config-driven sweeps, named presets, and the sample-path check battery.

pub mod config;
pub mod presets;
pub mod record;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub use config::{ExperimentConfig, OutputFormat};
pub use presets::{run_preset, Preset, PresetOutcome};
pub use record::SweepRecord;

use crate::error::{Error, Result};
use crate::optimizer::{evaluate, feasible_batches, SimOptions};
use crate::service::ServiceModel;
use crate::simulator::{check_max_subadditivity, check_min_superadditivity, Grouping};

/// Evaluates every expanded policy with every requested estimator.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<SweepRecord>> {
    let spec = config.spec();
    let sim: SimOptions = config.sim.into();
    let mut records = Vec::new();
    for policy in config.expand()? {
        for &estimator in &config.estimators {
            let estimate = evaluate(&spec, &policy, &config.model, estimator, &sim)?;
            records.push(SweepRecord::new(
                &config.scenario_id,
                &spec,
                &policy,
                &config.model,
                &estimate,
                sim.seed,
            ));
        }
    }
    Ok(records)
}

/// Loads a config file, runs it, and writes the configured output atomically.
pub fn run_config(path: &Path) -> Result<Vec<SweepRecord>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let config = ExperimentConfig::from_json(&text)?;
    let records = run_experiment(&config)?;
    if let Some(out) = &config.output {
        let target = if out.path.is_relative() {
            path.parent().unwrap_or(Path::new(".")).join(&out.path)
        } else {
            out.path.clone()
        };
        record::write_atomic(&target, &record::render(&records, out.format)?)?;
    }
    Ok(records)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PathBattery {
    pub matrices: usize,
    pub groupings: usize,
    pub min_violations: usize,
    pub max_violations: usize,
}

impl PathBattery {
    pub fn passed(&self) -> bool {
        self.min_violations == 0 && self.max_violations == 0
    }
}

/// Random contiguous partition of `columns` columns.
fn random_partition(rng: &mut ChaCha8Rng, columns: usize) -> Grouping {
    let mut blocks = Vec::new();
    let mut start = 0;
    while start < columns {
        let end = rng.random_range(start + 1..=columns);
        blocks.push(start..end);
        start = end;
    }
    Grouping::new(blocks, columns).expect("partition covers all columns")
}

/// Checks both sample-path inequalities on `matrices` seeded random CU-time
/// matrices (up to 8 workers by 12 CUs), alternating uniform and
/// shifted-exponential entries, over every divisor grouping plus one random
/// contiguous partition each.
pub fn run_path_battery(matrices: usize, seed: u64) -> Result<PathBattery> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = PathBattery {
        matrices,
        groupings: 0,
        min_violations: 0,
        max_violations: 0,
    };
    for i in 0..matrices {
        let n = rng.random_range(1..=8usize);
        let s = rng.random_range(1..=12usize);
        let model = if i % 2 == 0 {
            None
        } else {
            let delta = rng.random_range(0.0..2.0);
            let w = rng.random_range(0.1..3.0);
            Some(ServiceModel::shifted_exponential(delta, w)?)
        };
        let matrix: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..s)
                    .map(|_| match &model {
                        None => rng.random::<f64>(),
                        Some(m) => m.sample_cu(&mut rng),
                    })
                    .collect()
            })
            .collect();
        let mut groupings: Vec<Grouping> = feasible_batches(s as u64)
            .into_iter()
            .map(|b| Grouping::uniform(s, b as usize))
            .collect::<Result<_>>()?;
        groupings.push(random_partition(&mut rng, s));
        for g in &groupings {
            report.groupings += 1;
            if !check_min_superadditivity(&matrix, g)?.holds {
                report.min_violations += 1;
            }
            if !check_max_subadditivity(&matrix, g)?.holds {
                report.max_violations += 1;
            }
        }
    }
    Ok(report)
}

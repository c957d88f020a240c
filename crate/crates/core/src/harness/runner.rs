use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Method};
use super::metrics::{grouping_accuracy, nmse};
use crate::baselines::{genie_ls, individual_sbl, joint_omp, OmpBudgets};
use crate::channel::{draw_scenario, simulate_observations, synthesize_channels, ChannelRealization, GroupScenario, ObservationSet};
use crate::error::Result;
use crate::linalg::CVec;
use crate::steering::{build_dictionary, AngleGrid, ArrayGeometry, GridOffsets};
use crate::vbi::{run_inference, Hyperparams, Mode};

/// One method on one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub method: Method,
    pub value: f64,
    pub trial: usize,
    pub seed: u64,
    pub nmse: Option<f64>,
    /// Only for methods that group users.
    pub accuracy: Option<f64>,
    pub iterations: Option<usize>,
    pub groups: Option<usize>,
    /// Digest of the observations the method saw.
    pub checksum: u64,
    pub error: Option<String>,
    #[serde(skip)]
    pub wall_time: f64,
}

impl ExperimentRecord {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `splitmix64(splitmix64(splitmix64(base) ⊕ bits(value)) ⊕ trial)`.
pub fn trial_seed(base_seed: u64, value: f64, trial: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(base_seed) ^ value.to_bits()) ^ trial as u64)
}

/// Ground truth and observations shared by every method in a trial.
pub struct TrialData {
    pub geometry: ArrayGeometry,
    pub realization: ChannelRealization,
    pub channels: Vec<CVec>,
    pub obs: ObservationSet,
}

pub fn generate_trial(cfg: &ExperimentConfig, seed: u64) -> Result<TrialData> {
    let geometry = cfg.geometry.build()?;
    let scenario = GroupScenario {
        seed,
        ..cfg.scenario.clone()
    };
    let realization = draw_scenario(&scenario, &geometry)?;
    let channels = synthesize_channels(&realization, &geometry);
    let obs = simulate_observations(&channels, cfg.n_pilots, cfg.snr_db, cfg.power, splitmix64(seed))?;
    Ok(TrialData {
        geometry,
        realization,
        channels,
        obs,
    })
}

/// Budgets used when none are configured: the number of grid cells one
/// cluster's angular spread covers, times the cluster counts, capped at `T`.
pub fn default_omp_budgets(scenario: &GroupScenario, grid: &AngleGrid, n_pilots: usize) -> OmpBudgets {
    let width = ((scenario.angular_spread_deg.to_radians() / grid.interval).ceil() as usize).max(1);
    let common = (scenario.shared_clusters * width).min(n_pilots);
    let individual = (scenario.individual_clusters * width).min(n_pilots - common);
    OmpBudgets { common, individual }
}

struct Outcome {
    estimates: Vec<CVec>,
    assignments: Option<Vec<usize>>,
    iterations: Option<usize>,
}

fn run_method(method: Method, cfg: &ExperimentConfig, data: &TrialData, seed: u64) -> Result<Outcome> {
    let engine = |mode: Mode| -> Result<Outcome> {
        let hyper = Hyperparams {
            mode,
            init_seed: splitmix64(seed ^ 0x5eed),
            ..cfg.hyper.clone()
        };
        let out = run_inference(&hyper, &data.obs, &data.geometry)?;
        Ok(Outcome {
            estimates: out.summary.channels,
            assignments: Some(out.summary.assignments),
            iterations: Some(out.summary.iterations),
        })
    };
    let on_grid = || -> Result<_> {
        let grid = AngleGrid::uniform(&data.geometry, cfg.hyper.grid_points.unwrap_or(data.geometry.n_antennas()))?;
        let dictionary = build_dictionary(&data.geometry, &grid, &GridOffsets::zeros(grid.len()));
        let phi = &data.obs.pilots * &dictionary;
        Ok((grid, dictionary, phi))
    };
    match method {
        Method::Proposed => engine(Mode::General),
        Method::GroupOnly => engine(Mode::GroupOnly),
        Method::Common => engine(Mode::Common),
        Method::IndividualSbl => {
            let (_, dictionary, phi) = on_grid()?;
            let hyper = Hyperparams {
                offgrid: None,
                ..cfg.hyper.clone()
            };
            let mut estimates = Vec::with_capacity(data.obs.n_users());
            let mut iterations = 0;
            for y in &data.obs.received {
                let est = individual_sbl(y, &phi, &dictionary, &hyper)?;
                iterations = iterations.max(est.iterations);
                estimates.push(est.channel);
            }
            Ok(Outcome {
                estimates,
                assignments: None,
                iterations: Some(iterations),
            })
        }
        Method::JointOmp => {
            let (grid, dictionary, phi) = on_grid()?;
            let budgets = cfg
                .omp
                .unwrap_or_else(|| default_omp_budgets(&cfg.scenario, &grid, cfg.n_pilots));
            let est = joint_omp(&data.obs.received, &phi, &dictionary, budgets)?;
            Ok(Outcome {
                estimates: est.into_iter().map(|e| e.channel).collect(),
                assignments: None,
                iterations: None,
            })
        }
        Method::Genie => {
            let estimates = data
                .realization
                .users
                .iter()
                .zip(&data.obs.received)
                .map(|(u, y)| genie_ls(y, &data.obs.pilots, &data.geometry, &u.paths))
                .collect::<Result<Vec<_>>>()?;
            Ok(Outcome {
                estimates,
                assignments: None,
                iterations: None,
            })
        }
    }
}

fn run_trial(cfg: &ExperimentConfig, value: f64, trial: usize) -> Vec<ExperimentRecord> {
    let at = cfg.at(value);
    let seed = trial_seed(cfg.base_seed, value, trial);
    let blank = |method: Method| ExperimentRecord {
        method,
        value,
        trial,
        seed,
        nmse: None,
        accuracy: None,
        iterations: None,
        groups: None,
        checksum: 0,
        error: None,
        wall_time: 0.0,
    };
    let data = match generate_trial(&at, seed) {
        Ok(d) => d,
        Err(e) => {
            log::warn!("trial {trial} at {value}: {e}");
            return cfg
                .methods
                .iter()
                .map(|&m| ExperimentRecord {
                    error: Some(e.to_string()),
                    ..blank(m)
                })
                .collect();
        }
    };
    let checksum = data.obs.checksum();
    let labels = data.realization.group_labels();
    cfg.methods
        .iter()
        .map(|&method| {
            let start = Instant::now();
            let result = run_method(method, &at, &data, seed).and_then(|o| {
                let n = nmse(&o.estimates, &data.channels)?;
                Ok((n, o))
            });
            let mut rec = ExperimentRecord {
                checksum,
                wall_time: start.elapsed().as_secs_f64(),
                ..blank(method)
            };
            match result {
                Ok((n, o)) => {
                    rec.nmse = Some(n);
                    rec.iterations = o.iterations;
                    if let Some(a) = &o.assignments {
                        rec.accuracy = Some(grouping_accuracy(a, &labels));
                        let mut distinct = a.clone();
                        distinct.sort_unstable();
                        distinct.dedup();
                        rec.groups = Some(distinct.len());
                    }
                }
                Err(e) => {
                    log::warn!("{method} failed on trial {trial} at {value}: {e}");
                    rec.error = Some(e.to_string());
                }
            }
            rec
        })
        .collect()
}

/// Every requested method on every sweep value and trial, ordered by value,
/// trial and then method regardless of how the work was scheduled.
pub fn run_monte_carlo(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRecord>> {
    cfg.validate()?;
    let jobs: Vec<(f64, usize)> = cfg
        .values
        .iter()
        .flat_map(|&v| (0..cfg.n_trials).map(move |t| (v, t)))
        .collect();
    let nested: Vec<Vec<ExperimentRecord>> = jobs.par_iter().map(|&(v, t)| run_trial(cfg, v, t)).collect();
    Ok(nested.into_iter().flatten().collect())
}

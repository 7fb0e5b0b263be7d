//! Flat-file outputs: a per-iteration CSV of mean trajectories and a summary
//! JSON with convergence, profitability, and oracle-distance statistics.
//! Both files are byte-stable for a fixed seed (no timestamps, fixed float
//! formatting, fixed row order).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::config::Mode;
use crate::experiment::{ExperimentError, ExperimentResult};
use crate::nash::NashPoint;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot serialize summary: {0}")]
    Serialize(#[from] serde_json::Error),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
}

#[derive(Debug, Serialize)]
pub struct SetSummary {
    pub lambda: f64,
    pub oracle: NashPoint,
}

#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub set: usize,
    pub run: usize,
    pub seed: u64,
    pub final_bid_x: f64,
    pub final_bid_y: f64,
    pub ne_distance: f64,
    pub within_5_percent: bool,
    pub convergence_x: Option<usize>,
    pub convergence_y: Option<usize>,
    pub first_profit_x: Option<usize>,
    pub first_profit_y: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct ModeSummary {
    pub mean_ne_distance: f64,
    pub fraction_within_5_percent: f64,
    /// Median of the per-(set, agent) convergence iterations of the per-set
    /// mean action trajectories; null when the median trajectory never
    /// converges.
    pub median_convergence_iteration: Option<f64>,
    pub set_mean_convergence_iterations: Vec<Option<usize>>,
    /// First profitable iteration of the combined (both agents) mean
    /// cumulative-reward trajectory.
    pub first_profit_iteration: Option<usize>,
    pub first_profit_by_agent: [Option<usize>; 2],
    pub mean_final_bids: [f64; 2],
    pub runs: Vec<RunSummary>,
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub seed: u64,
    pub mode: String,
    pub n_param_sets: usize,
    pub n_runs_per_set: usize,
    pub n_iterations: usize,
    pub parameter_sets: Vec<SetSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub traditional: Option<ModeSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dichotomy: Option<ModeSummary>,
}

fn mode_summary(result: &ExperimentResult, mode: Mode) -> Result<ModeSummary, ExperimentError> {
    let runs: Vec<RunSummary> = result
        .runs_of(mode)
        .map(|r| RunSummary {
            set: r.set_index,
            run: r.run_index,
            seed: r.seed,
            final_bid_x: r.final_bids[0],
            final_bid_y: r.final_bids[1],
            ne_distance: r.ne_distance,
            within_5_percent: r.within_tolerance,
            convergence_x: r.convergence[0],
            convergence_y: r.convergence[1],
            first_profit_x: r.first_profit[0],
            first_profit_y: r.first_profit[1],
        })
        .collect();
    let n = runs.len().max(1) as f64;
    let mean_final_bids = [
        result.runs_of(mode).map(|r| r.final_bids[0]).sum::<f64>() / n,
        result.runs_of(mode).map(|r| r.final_bids[1]).sum::<f64>() / n,
    ];
    Ok(ModeSummary {
        mean_ne_distance: result.mean_ne_distance(mode),
        fraction_within_5_percent: result.fraction_within_tolerance(mode),
        median_convergence_iteration: result.median_convergence(mode)?,
        set_mean_convergence_iterations: result.set_mean_convergences(mode)?,
        first_profit_iteration: result.mode_first_profit(mode),
        first_profit_by_agent: [
            crate::experiment::first_profit_iteration(&result.mean_cumulative(mode, 0)),
            crate::experiment::first_profit_iteration(&result.mean_cumulative(mode, 1)),
        ],
        mean_final_bids,
        runs,
    })
}

impl Summary {
    pub fn from_result(result: &ExperimentResult) -> Result<Self, ExperimentError> {
        let mode = result.config.mode;
        Ok(Summary {
            seed: result.config.seed,
            mode: mode.to_string(),
            n_param_sets: result.config.n_param_sets,
            n_runs_per_set: result.config.n_runs_per_set,
            n_iterations: result.config.n_iterations,
            parameter_sets: result
                .sets
                .iter()
                .map(|s| SetSummary {
                    lambda: s.market.lambda,
                    oracle: s.ne,
                })
                .collect(),
            traditional: if mode.includes_traditional() {
                Some(mode_summary(result, Mode::Traditional)?)
            } else {
                None
            },
            dichotomy: if mode.includes_dichotomy() {
                Some(mode_summary(result, Mode::Dichotomy)?)
            } else {
                None
            },
        })
    }
}

/// Render the per-iteration CSV: one row per (iteration, mode, agent) in
/// that sort order, with fixed six-decimal formatting.
pub fn metrics_csv(result: &ExperimentResult) -> String {
    let mut active_modes: Vec<Mode> = Vec::new();
    if result.config.mode.includes_dichotomy() {
        active_modes.push(Mode::Dichotomy);
    }
    if result.config.mode.includes_traditional() {
        active_modes.push(Mode::Traditional);
    }
    // "dichotomy" < "traditional" keeps the row order lexicographic.

    struct ModeSeries {
        name: &'static str,
        actions: [Vec<f64>; 2],
        rewards: [Vec<f64>; 2],
        cumulative: [Vec<f64>; 2],
        round: Vec<f64>,
    }
    let series: Vec<ModeSeries> = active_modes
        .iter()
        .map(|&mode| ModeSeries {
            name: match mode {
                Mode::Dichotomy => "dichotomy",
                _ => "traditional",
            },
            actions: [result.mean_actions(mode, 0), result.mean_actions(mode, 1)],
            rewards: [result.mean_rewards(mode, 0), result.mean_rewards(mode, 1)],
            cumulative: [
                result.mean_cumulative(mode, 0),
                result.mean_cumulative(mode, 1),
            ],
            round: result.mean_round(mode),
        })
        .collect();

    let mut out = String::new();
    out.push_str("iteration,mode,agent,mean_action,mean_reward,mean_cum_reward,mean_round\n");
    for t in 0..result.config.n_iterations {
        for s in &series {
            for (agent, name) in [(0usize, "x"), (1usize, "y")] {
                let _ = writeln!(
                    out,
                    "{t},{},{name},{:.6},{:.6},{:.6},{:.6}",
                    s.name, s.actions[agent][t], s.rewards[agent][t], s.cumulative[agent][t],
                    s.round[t],
                );
            }
        }
    }
    out
}

/// Write `metrics.csv` and `summary.json` under `dir`, creating it first.
pub fn write_outputs(
    result: &ExperimentResult,
    dir: &Path,
) -> Result<(PathBuf, PathBuf), OutputError> {
    std::fs::create_dir_all(dir).map_err(|source| OutputError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let metrics_path = dir.join("metrics.csv");
    std::fs::write(&metrics_path, metrics_csv(result)).map_err(|source| OutputError::Io {
        path: metrics_path.clone(),
        source,
    })?;
    let summary_path = dir.join("summary.json");
    let summary = Summary::from_result(result)?;
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    std::fs::write(&summary_path, text).map_err(|source| OutputError::Io {
        path: summary_path.clone(),
        source,
    })?;
    Ok((metrics_path, summary_path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;
    use crate::experiment::run_experiment;

    fn tiny_config() -> ExperimentConfig {
        let mut config = ExperimentConfig::reference();
        config.n_param_sets = 1;
        config.n_runs_per_set = 1;
        config.n_iterations = 40;
        config
    }

    #[test]
    fn csv_has_header_plus_one_row_per_iteration_mode_agent() {
        let mut config = tiny_config();
        config.n_iterations = 1;
        config.mode = Mode::Traditional;
        let result = run_experiment(&config).unwrap();
        let csv = metrics_csv(&result);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 1 + 2); // header + 2 agents x 1 iteration
        assert!(lines[0].starts_with("iteration,mode,agent"));
        assert!(lines[1].starts_with("0,traditional,x,"));
        assert!(lines[2].starts_with("0,traditional,y,"));
    }

    #[test]
    fn csv_interleaves_modes_in_stable_order() {
        let result = run_experiment(&tiny_config()).unwrap();
        let csv = metrics_csv(&result);
        let lines: Vec<&str> = csv.lines().skip(1).collect();
        assert_eq!(lines.len(), 40 * 2 * 2);
        for (i, chunk) in lines.chunks(4).enumerate() {
            assert!(chunk[0].starts_with(&format!("{i},dichotomy,x,")));
            assert!(chunk[1].starts_with(&format!("{i},dichotomy,y,")));
            assert!(chunk[2].starts_with(&format!("{i},traditional,x,")));
            assert!(chunk[3].starts_with(&format!("{i},traditional,y,")));
        }
    }

    #[test]
    fn rerun_with_same_seed_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config();
        let first = run_experiment(&config).unwrap();
        let (m1, s1) = write_outputs(&first, &dir.path().join("a")).unwrap();
        let second = run_experiment(&config).unwrap();
        let (m2, s2) = write_outputs(&second, &dir.path().join("b")).unwrap();
        assert_eq!(std::fs::read(m1).unwrap(), std::fs::read(m2).unwrap());
        assert_eq!(std::fs::read(s1).unwrap(), std::fs::read(s2).unwrap());
    }

    #[test]
    fn summary_carries_oracle_and_mode_sections() {
        let result = run_experiment(&tiny_config()).unwrap();
        let summary = Summary::from_result(&result).unwrap();
        assert_eq!(summary.parameter_sets.len(), 1);
        assert!(summary.traditional.is_some());
        assert!(summary.dichotomy.is_some());
        let t = summary.traditional.unwrap();
        assert_eq!(t.runs.len(), 1);
        assert!(t.mean_ne_distance.is_finite());
    }

    #[test]
    fn io_errors_carry_the_path() {
        let result = run_experiment(&tiny_config()).unwrap();
        let err = write_outputs(&result, Path::new("/proc/no/such/dir")).unwrap_err();
        assert!(err.to_string().contains("/proc/no/such/dir"), "{err}");
    }
}

//! Seeded experiment harness: runs both learner families over perturbed
//! parameter sets and replicated seeds, keeps per-iteration series on one
//! shared iteration axis, and derives convergence and profitability metrics.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::baseline::{build_action_grid, BaselineAgent};
use crate::config::{ConfigError, ExperimentConfig, Mode};
use crate::dichotomy::{run_search, DichotomyAgent, DichotomyError, SearchRange};
use crate::market::{pair_profits, perturb_lambda, GenCoParams, MarketError, MarketParams};
use crate::nash::{analytic_ne, NashError, NashPoint};

/// Window length used by convergence detection throughout the harness.
pub const CONVERGENCE_WINDOW: usize = 50;
/// Spread tolerance (fraction of the series' global spread) for convergence.
pub const CONVERGENCE_TOL: f64 = 0.05;
/// Per-coordinate tolerance, as a fraction of the equilibrium quantity, for
/// counting a run's final bids as on target.
pub const NE_PROXIMITY_FRACTION: f64 = 0.05;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Dichotomy(#[from] DichotomyError),
    #[error(transparent)]
    Nash(#[from] NashError),
    #[error("metric input: {0}")]
    Metric(String),
}

/// Smallest `t` such that the window `[t, t+window)` has spread at most
/// `tol` times the series' global spread; `None` when no window qualifies.
pub fn convergence_iteration(
    series: &[f64],
    window: usize,
    tol: f64,
) -> Result<Option<usize>, ExperimentError> {
    if series.is_empty() {
        return Err(ExperimentError::Metric("empty series".into()));
    }
    if window < 2 {
        return Err(ExperimentError::Metric(format!(
            "window must be >= 2, got {window}"
        )));
    }
    let global_min = series.iter().copied().fold(f64::INFINITY, f64::min);
    let global_max = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let global_spread = global_max - global_min;
    if global_spread == 0.0 {
        return Ok(Some(0));
    }
    if series.len() < window {
        return Ok(None);
    }
    let allowed = tol * global_spread;
    for t in 0..=series.len() - window {
        let w = &series[t..t + window];
        let lo = w.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo <= allowed {
            return Ok(Some(t));
        }
    }
    Ok(None)
}

/// First index whose cumulative value is strictly positive.
pub fn first_profit_iteration(cumulative: &[f64]) -> Option<usize> {
    cumulative.iter().position(|&v| v > 0.0)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Replication seed as a pure function of (master seed, set, run, stream tag).
pub fn child_seed(master: u64, set: usize, run: usize, tag: u64) -> u64 {
    let mut s = splitmix64(master ^ tag);
    s = splitmix64(s ^ (set as u64).wrapping_mul(0xA0761D6478BD642F));
    splitmix64(s ^ (run as u64).wrapping_mul(0xE7037ED1A0B428DB))
}

const TAG_SET: u64 = 0x5345545f4c414d42; // lambda draw stream
const TAG_TRADITIONAL: u64 = 0x5452414449544e4c;
const TAG_DICHOTOMY: u64 = 0x444943484f544f4d;

/// One replication of one mode: per-iteration series for both agents plus
/// run-level summaries. Agent index 0 is x, 1 is y.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub mode: Mode,
    pub set_index: usize,
    pub run_index: usize,
    pub seed: u64,
    pub actions: [Vec<f64>; 2],
    pub rewards: [Vec<f64>; 2],
    pub cumulative: [Vec<f64>; 2],
    /// 1-based dichotomy round index per iteration (0 for the traditional mode).
    pub round_index: Vec<usize>,
    pub final_bids: [f64; 2],
    pub ne_distance: f64,
    pub within_tolerance: bool,
    pub convergence: [Option<usize>; 2],
    pub first_profit: [Option<usize>; 2],
}

/// One perturbed parameter set and its oracle equilibrium.
#[derive(Debug, Clone, Copy)]
pub struct SetInfo {
    pub market: MarketParams,
    pub ne: NashPoint,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub sets: Vec<SetInfo>,
    pub runs: Vec<RunRecord>,
}

fn prefix_sums(rewards: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    rewards.iter().map(|r| {
        acc += r;
        acc
    }).collect()
}

fn simulate_traditional(
    market: &MarketParams,
    gx: &GenCoParams,
    gy: &GenCoParams,
    config: &ExperimentConfig,
    rng: &mut ChaCha12Rng,
) -> Result<([Vec<f64>; 2], [Vec<f64>; 2], [f64; 2]), ExperimentError> {
    let grid_x = build_action_grid(0.0, gx.p_max, config.traditional.action_step)?;
    let grid_y = build_action_grid(0.0, gy.p_max, config.traditional.action_step)?;
    let mut agent_x = BaselineAgent::new(*gx, grid_x, grid_y.clone(), config.learning)?;
    let mut agent_y = BaselineAgent::new(
        *gy,
        grid_y,
        agent_x.action_grid().to_vec(),
        config.learning,
    )?;
    let n = config.n_iterations;
    let mut actions = [Vec::with_capacity(n), Vec::with_capacity(n)];
    let mut rewards = [Vec::with_capacity(n), Vec::with_capacity(n)];
    for _ in 0..n {
        let bid_x = agent_x.act(rng).quantity;
        let bid_y = agent_y.act(rng).quantity;
        let (profit_x, profit_y) = pair_profits(market, gx, gy, bid_x, bid_y)?;
        agent_x.observe(bid_x, bid_y, profit_x);
        agent_y.observe(bid_y, bid_x, profit_y);
        actions[0].push(bid_x);
        actions[1].push(bid_y);
        rewards[0].push(profit_x);
        rewards[1].push(profit_y);
    }
    let final_bids = [*actions[0].last().unwrap(), *actions[1].last().unwrap()];
    Ok((actions, rewards, final_bids))
}

#[allow(clippy::type_complexity)]
fn simulate_dichotomy(
    market: &MarketParams,
    gx: &GenCoParams,
    gy: &GenCoParams,
    config: &ExperimentConfig,
    rng: &mut ChaCha12Rng,
) -> Result<([Vec<f64>; 2], [Vec<f64>; 2], Vec<usize>, [f64; 2]), ExperimentError> {
    let range_x = SearchRange::new(0.0, gx.p_max)?;
    let range_y = SearchRange::new(0.0, gy.p_max)?;
    let mut agent_x = DichotomyAgent::new(*gx, range_x, range_y, config.learning)?;
    let mut agent_y = DichotomyAgent::new(*gy, range_y, range_x, config.learning)?;
    let outcome = run_search(
        &mut agent_x,
        &mut agent_y,
        market,
        config.dichotomy.stop_width,
        config.dichotomy.max_rounds,
        config.dichotomy.threshold,
        config.dichotomy.max_inner_iterations,
        rng,
    )?;

    // Concatenate the inner iterations of every round onto the shared axis,
    // then hold the final bids for the rest of the horizon.
    let n = config.n_iterations;
    let mut actions = [Vec::with_capacity(n), Vec::with_capacity(n)];
    let mut rewards = [Vec::with_capacity(n), Vec::with_capacity(n)];
    let mut round_index = Vec::with_capacity(n);
    'fill: for record in &outcome.rounds {
        for step in &record.steps {
            actions[0].push(step.bid_x);
            actions[1].push(step.bid_y);
            rewards[0].push(step.profit_x);
            rewards[1].push(step.profit_y);
            round_index.push(record.round);
            if round_index.len() == n {
                break 'fill;
            }
        }
    }
    let tail_round = outcome.rounds.len();
    let (tail_profit_x, tail_profit_y) =
        pair_profits(market, gx, gy, outcome.final_bid_x, outcome.final_bid_y)?;
    while round_index.len() < n {
        actions[0].push(outcome.final_bid_x);
        actions[1].push(outcome.final_bid_y);
        rewards[0].push(tail_profit_x);
        rewards[1].push(tail_profit_y);
        round_index.push(tail_round);
    }
    Ok((
        actions,
        rewards,
        round_index,
        [outcome.final_bid_x, outcome.final_bid_y],
    ))
}

fn finish_record(
    mode: Mode,
    set_index: usize,
    run_index: usize,
    seed: u64,
    actions: [Vec<f64>; 2],
    rewards: [Vec<f64>; 2],
    round_index: Vec<usize>,
    final_bids: [f64; 2],
    ne: &NashPoint,
) -> Result<RunRecord, ExperimentError> {
    let cumulative = [prefix_sums(&rewards[0]), prefix_sums(&rewards[1])];
    let convergence = [
        convergence_iteration(&actions[0], CONVERGENCE_WINDOW, CONVERGENCE_TOL)?,
        convergence_iteration(&actions[1], CONVERGENCE_WINDOW, CONVERGENCE_TOL)?,
    ];
    let first_profit = [
        first_profit_iteration(&cumulative[0]),
        first_profit_iteration(&cumulative[1]),
    ];
    let dx = final_bids[0] - ne.q_x;
    let dy = final_bids[1] - ne.q_y;
    let within_tolerance = dx.abs() <= NE_PROXIMITY_FRACTION * ne.q_x
        && dy.abs() <= NE_PROXIMITY_FRACTION * ne.q_y;
    Ok(RunRecord {
        mode,
        set_index,
        run_index,
        seed,
        actions,
        rewards,
        cumulative,
        round_index,
        final_bids,
        ne_distance: dx.hypot(dy),
        within_tolerance,
        convergence,
        first_profit,
    })
}

/// Run the full grid: `n_param_sets` perturbed markets x `n_runs_per_set`
/// seeded replications x the selected modes. Aggregations are arithmetic
/// means across all (set, run) pairs, per iteration, per mode.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult, ExperimentError> {
    config.validate()?;
    let base_market = config.market_params();
    let gx = config.genco_params(0);
    let gy = config.genco_params(1);

    let mut sets = Vec::with_capacity(config.n_param_sets);
    let mut runs = Vec::new();
    for set_index in 0..config.n_param_sets {
        let mut set_rng =
            ChaCha12Rng::seed_from_u64(child_seed(config.seed, set_index, 0, TAG_SET));
        let market = perturb_lambda(&base_market, config.market.lambda_spread, &mut set_rng)?;
        let ne = analytic_ne(&market, &gx, &gy)?;
        sets.push(SetInfo { market, ne });

        for run_index in 0..config.n_runs_per_set {
            if config.mode.includes_traditional() {
                let seed = child_seed(config.seed, set_index, run_index, TAG_TRADITIONAL);
                let mut rng = ChaCha12Rng::seed_from_u64(seed);
                let (actions, rewards, final_bids) =
                    simulate_traditional(&market, &gx, &gy, config, &mut rng)?;
                let round_index = vec![0; config.n_iterations];
                runs.push(finish_record(
                    Mode::Traditional,
                    set_index,
                    run_index,
                    seed,
                    actions,
                    rewards,
                    round_index,
                    final_bids,
                    &ne,
                )?);
            }
            if config.mode.includes_dichotomy() {
                let seed = child_seed(config.seed, set_index, run_index, TAG_DICHOTOMY);
                let mut rng = ChaCha12Rng::seed_from_u64(seed);
                let (actions, rewards, round_index, final_bids) =
                    simulate_dichotomy(&market, &gx, &gy, config, &mut rng)?;
                runs.push(finish_record(
                    Mode::Dichotomy,
                    set_index,
                    run_index,
                    seed,
                    actions,
                    rewards,
                    round_index,
                    final_bids,
                    &ne,
                )?);
            }
        }
    }
    Ok(ExperimentResult {
        config: config.clone(),
        sets,
        runs,
    })
}

impl ExperimentResult {
    pub fn runs_of(&self, mode: Mode) -> impl Iterator<Item = &RunRecord> {
        self.runs.iter().filter(move |r| r.mode == mode)
    }

    fn mean_of<F>(&self, mode: Mode, extract: F) -> Vec<f64>
    where
        F: Fn(&RunRecord) -> &[f64],
    {
        let mut sum = vec![0.0; self.config.n_iterations];
        let mut count = 0usize;
        for run in self.runs_of(mode) {
            for (acc, v) in sum.iter_mut().zip(extract(run)) {
                *acc += v;
            }
            count += 1;
        }
        if count > 0 {
            for v in &mut sum {
                *v /= count as f64;
            }
        }
        sum
    }

    /// Mean action trajectory of one agent across every (set, run) pair.
    pub fn mean_actions(&self, mode: Mode, agent: usize) -> Vec<f64> {
        self.mean_of(mode, |r| &r.actions[agent])
    }

    pub fn mean_rewards(&self, mode: Mode, agent: usize) -> Vec<f64> {
        self.mean_of(mode, |r| &r.rewards[agent])
    }

    pub fn mean_cumulative(&self, mode: Mode, agent: usize) -> Vec<f64> {
        self.mean_of(mode, |r| &r.cumulative[agent])
    }

    /// Mean cumulative reward across runs and both agents: the mode-level
    /// profitability trajectory.
    pub fn mean_cumulative_combined(&self, mode: Mode) -> Vec<f64> {
        let x = self.mean_cumulative(mode, 0);
        let y = self.mean_cumulative(mode, 1);
        x.iter().zip(&y).map(|(a, b)| (a + b) / 2.0).collect()
    }

    /// Mean 1-based round index per iteration (0 for the traditional mode).
    pub fn mean_round(&self, mode: Mode) -> Vec<f64> {
        let mut sum = vec![0.0; self.config.n_iterations];
        let mut count = 0usize;
        for run in self.runs_of(mode) {
            for (acc, v) in sum.iter_mut().zip(&run.round_index) {
                *acc += *v as f64;
            }
            count += 1;
        }
        if count > 0 {
            for v in &mut sum {
                *v /= count as f64;
            }
        }
        sum
    }

    /// Mean action trajectory of one agent within one parameter set.
    pub fn set_mean_actions(&self, mode: Mode, set_index: usize, agent: usize) -> Vec<f64> {
        let mut sum = vec![0.0; self.config.n_iterations];
        let mut count = 0usize;
        for run in self.runs_of(mode).filter(|r| r.set_index == set_index) {
            for (acc, v) in sum.iter_mut().zip(&run.actions[agent]) {
                *acc += v;
            }
            count += 1;
        }
        if count > 0 {
            for v in &mut sum {
                *v /= count as f64;
            }
        }
        sum
    }

    /// Convergence iteration of every per-set mean action trajectory:
    /// one entry per (set, agent).
    pub fn set_mean_convergences(&self, mode: Mode) -> Result<Vec<Option<usize>>, ExperimentError> {
        let mut out = Vec::with_capacity(self.sets.len() * 2);
        for set_index in 0..self.sets.len() {
            for agent in 0..2 {
                let series = self.set_mean_actions(mode, set_index, agent);
                out.push(convergence_iteration(
                    &series,
                    CONVERGENCE_WINDOW,
                    CONVERGENCE_TOL,
                )?);
            }
        }
        Ok(out)
    }

    /// Median of the per-(set, agent) convergence iterations; non-converged
    /// trajectories count as +infinity, and a +infinity median reports `None`.
    pub fn median_convergence(&self, mode: Mode) -> Result<Option<f64>, ExperimentError> {
        let mut values: Vec<f64> = self
            .set_mean_convergences(mode)?
            .iter()
            .map(|c| c.map_or(f64::INFINITY, |v| v as f64))
            .collect();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if values.is_empty() {
            return Ok(None);
        }
        let mid = values.len() / 2;
        let median = if values.len() % 2 == 1 {
            values[mid]
        } else {
            (values[mid - 1] + values[mid]) / 2.0
        };
        Ok(if median.is_finite() { Some(median) } else { None })
    }

    pub fn mean_ne_distance(&self, mode: Mode) -> f64 {
        let (sum, count) = self
            .runs_of(mode)
            .fold((0.0, 0usize), |(s, c), r| (s + r.ne_distance, c + 1));
        if count == 0 {
            f64::NAN
        } else {
            sum / count as f64
        }
    }

    pub fn fraction_within_tolerance(&self, mode: Mode) -> f64 {
        let (hits, count) = self.runs_of(mode).fold((0usize, 0usize), |(h, c), r| {
            (h + usize::from(r.within_tolerance), c + 1)
        });
        if count == 0 {
            f64::NAN
        } else {
            hits as f64 / count as f64
        }
    }

    /// First strictly-positive iteration of the mode's combined mean
    /// cumulative-reward trajectory.
    pub fn mode_first_profit(&self, mode: Mode) -> Option<usize> {
        first_profit_iteration(&self.mean_cumulative_combined(mode))
    }
}

//! Simulation library for a two-GenCo repeated Cournot electricity market.
//!
//! Two generation companies repeatedly bid supply quantities into an
//! inverse-demand market and learn from their profits. The crate provides
//! the market model, tabular Q-learning machinery, two learner variants (a
//! traditional fixed-grid bidder and a range-contracting bidder that halves
//! its search interval round by round), a Nash-equilibrium oracle for
//! verification, and a seeded experiment harness with CSV/JSON outputs.

pub mod baseline;
pub mod config;
pub mod dichotomy;
pub mod experiment;
pub mod market;
pub mod nash;
pub mod output;
pub mod qlearn;

pub use baseline::{build_action_grid, BaselineAgent};
pub use config::{ExperimentConfig, Mode};
pub use dichotomy::{
    candidate_actions, contract_range, run_round, run_search, select_quadrant, DichotomyAgent,
    Half, Quadrant, SearchRange,
};
pub use experiment::{
    convergence_iteration, first_profit_iteration, run_experiment, ExperimentResult,
};
pub use market::{clear_price, gen_cost, pair_profits, perturb_lambda, profit, Bid, GenCoParams,
    MarketParams};
pub use nash::{analytic_ne, brute_force_ne, NashPoint};
pub use qlearn::{
    epsilon_greedy_probabilities, sample_action, simplified_update, softmax_probabilities,
    td_update, LearningParams, NormalizationState, QTable,
};

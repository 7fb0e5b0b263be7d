//! The traditional Q-learning bidder: a fixed discretized action grid, the
//! opponent's last quantity as the estimated state, softmax selection, and
//! discount-free Q updates on normalized profits.

use rand::Rng;

use crate::market::{Bid, GenCoParams, MarketError};
use crate::qlearn::{
    nearest_index, sample_action, simplified_update, softmax_probabilities, LearningParams,
    NormalizationState, QTable,
};

/// Evenly spaced grid `lo, lo+step, ..., hi` (inclusive).
pub fn build_action_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>, MarketError> {
    if !(lo < hi) || !(step > 0.0) {
        return Err(MarketError::InvalidParams(format!(
            "grid needs lo < hi and step > 0, got lo={lo} hi={hi} step={step}"
        )));
    }
    let span = hi - lo;
    let n = (span / step).round();
    if (n * step - span).abs() > 1e-9 * span.max(1.0) {
        return Err(MarketError::InvalidParams(format!(
            "grid span {span} is not divisible by step {step}"
        )));
    }
    Ok((0..=n as usize).map(|i| lo + i as f64 * step).collect())
}

/// One grid-based learner. States index the opponent's grid, actions its own,
/// so paired agents hold tables of shapes (n, m) and (m, n).
#[derive(Debug, Clone)]
pub struct BaselineAgent {
    pub genco: GenCoParams,
    action_grid: Vec<f64>,
    q: QTable,
    norm: NormalizationState,
    learning: LearningParams,
    temperature: f64,
    last_own_action: Option<f64>,
    estimated_opponent_action: f64,
}

impl BaselineAgent {
    /// `opponent_grid` supplies the state labels; the initial opponent
    /// estimate is the midpoint of the opponent's quantity range.
    pub fn new(
        genco: GenCoParams,
        action_grid: Vec<f64>,
        opponent_grid: Vec<f64>,
        learning: LearningParams,
    ) -> Result<Self, MarketError> {
        if action_grid.is_empty() || opponent_grid.is_empty() {
            return Err(MarketError::InvalidParams("empty action grid".into()));
        }
        if action_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(MarketError::InvalidParams(
                "action grid must be strictly increasing".into(),
            ));
        }
        let (lo, hi) = (action_grid[0], *action_grid.last().unwrap());
        if lo < 0.0 || hi > genco.p_max {
            return Err(MarketError::InvalidParams(format!(
                "action grid [{lo}, {hi}] leaves [0, {}]",
                genco.p_max
            )));
        }
        let estimated_opponent_action =
            (opponent_grid[0] + opponent_grid.last().unwrap()) / 2.0;
        let q = QTable::zeros(opponent_grid, action_grid.clone());
        Ok(Self {
            genco,
            action_grid,
            q,
            norm: NormalizationState::new(),
            temperature: learning.temperature,
            learning,
            last_own_action: None,
            estimated_opponent_action,
        })
    }

    pub fn q_table(&self) -> &QTable {
        &self.q
    }

    pub fn action_grid(&self) -> &[f64] {
        &self.action_grid
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn estimated_opponent_action(&self) -> f64 {
        self.estimated_opponent_action
    }

    pub fn last_own_action(&self) -> Option<f64> {
        self.last_own_action
    }

    /// Softmax-select a bid from the Q row indexed by the current opponent
    /// estimate (nearest grid state, ties toward the lower label).
    pub fn act<R: Rng>(&mut self, rng: &mut R) -> Bid {
        let state = self.q.nearest_state(self.estimated_opponent_action);
        let probs = softmax_probabilities(self.q.row(state).unwrap(), self.temperature)
            .expect("valid temperature");
        let idx = sample_action(&probs, rng).expect("softmax output is a distribution");
        let quantity = self.action_grid[idx];
        self.last_own_action = Some(quantity);
        Bid::new(quantity, &self.genco).expect("grid actions respect the cap")
    }

    /// Fold one market outcome into the table: normalize the profit, update
    /// the cell addressed by the pre-round opponent estimate and the executed
    /// action, then adopt the opponent's realized quantity as the next
    /// estimate and anneal the temperature.
    pub fn observe(&mut self, own_q: f64, opponent_q: f64, raw_profit: f64) {
        let reward = self.norm.normalize_reward(raw_profit);
        let state = self.q.nearest_state(self.estimated_opponent_action);
        let action = nearest_index(&self.action_grid, own_q);
        simplified_update(&mut self.q, state, action, reward, &self.learning)
            .expect("indices from grids are in range");
        self.estimated_opponent_action = opponent_q;
        self.temperature =
            (self.temperature * self.learning.temperature_decay).max(self.learning.temperature_floor);
    }
}

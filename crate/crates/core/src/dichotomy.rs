//! The range-contracting Q-learner: each agent keeps a 2x2 Q table over the
//! two candidate quantities at the quarter points of its current bidding
//! range. A round of coupled learning ends once a paired cell pattern clears
//! the decision threshold (or on the iteration cap), both ranges halve toward
//! the winning quadrant, and fresh tables start the next round.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::{pair_profits, Bid, GenCoParams, MarketError, MarketParams};
use crate::qlearn::{
    nearest_index, sample_action, simplified_update, softmax_probabilities, LearningParams,
    NormalizationState, QTable,
};

#[derive(Debug, Error)]
pub enum DichotomyError {
    #[error("quadrant selection needs 2x2 tables, got {x_states}x{x_actions} and {y_states}x{y_actions}")]
    TableShape {
        x_states: usize,
        x_actions: usize,
        y_states: usize,
        y_actions: usize,
    },
    #[error("threshold must be in (0, 1), got {0}")]
    BadThreshold(f64),
    #[error("invalid search range: {0}")]
    InvalidRange(String),
    #[error(transparent)]
    Market(#[from] MarketError),
}

/// Closed interval of bidding quantities, halved round by round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchRange {
    pub lo: f64,
    pub hi: f64,
}

impl SearchRange {
    pub fn new(lo: f64, hi: f64) -> Result<Self, DichotomyError> {
        if !(lo >= 0.0 && lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(DichotomyError::InvalidRange(format!(
                "need 0 <= lo < hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        (self.lo + self.hi) / 2.0
    }

    pub fn contains(&self, q: f64) -> bool {
        (self.lo..=self.hi).contains(&q)
    }
}

/// Which half of a range survives a contraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Half {
    Low,
    High,
}

/// Joint contraction decision; variants are ordered (x half, y half) and the
/// discriminant order is the tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrant {
    LowLow,
    HighLow,
    LowHigh,
    HighHigh,
}

impl Quadrant {
    pub const ALL: [Quadrant; 4] = [
        Quadrant::LowLow,
        Quadrant::HighLow,
        Quadrant::LowHigh,
        Quadrant::HighHigh,
    ];

    pub fn x_half(&self) -> Half {
        match self {
            Quadrant::LowLow | Quadrant::LowHigh => Half::Low,
            Quadrant::HighLow | Quadrant::HighHigh => Half::High,
        }
    }

    pub fn y_half(&self) -> Half {
        match self {
            Quadrant::LowLow | Quadrant::HighLow => Half::Low,
            Quadrant::LowHigh | Quadrant::HighHigh => Half::High,
        }
    }

    /// The paired Q cells that decide this quadrant, as
    /// ((x state, x action), (y state, y action)) indices with 0 = low.
    /// Each pair is the self-consistent pattern for steady joint play of this
    /// quadrant's candidate quantities.
    fn cells(&self) -> ((usize, usize), (usize, usize)) {
        match self {
            Quadrant::LowLow => ((0, 0), (0, 0)),
            Quadrant::HighLow => ((0, 1), (1, 0)),
            Quadrant::LowHigh => ((1, 0), (0, 1)),
            Quadrant::HighHigh => ((1, 1), (1, 1)),
        }
    }
}

/// Candidate quantities of a range: the centers of its two halves,
/// `(lo + w/4, lo + 3w/4)`.
pub fn candidate_actions(range: &SearchRange) -> (f64, f64) {
    let w = range.width();
    (range.lo + w / 4.0, range.lo + 3.0 * w / 4.0)
}

/// Keep one half of the range: low -> `[lo, mid]`, high -> `[mid, hi]`.
pub fn contract_range(range: &SearchRange, half: Half) -> SearchRange {
    let mid = range.midpoint();
    match half {
        Half::Low => SearchRange { lo: range.lo, hi: mid },
        Half::High => SearchRange { lo: mid, hi: range.hi },
    }
}

fn paired_sum(q_x: &QTable, q_y: &QTable, quadrant: Quadrant) -> f64 {
    let ((xs, xa), (ys, ya)) = quadrant.cells();
    q_x.get(xs, xa).unwrap() + q_y.get(ys, ya).unwrap()
}

fn check_shapes(q_x: &QTable, q_y: &QTable) -> Result<(), DichotomyError> {
    if q_x.n_states() != 2 || q_x.n_actions() != 2 || q_y.n_states() != 2 || q_y.n_actions() != 2 {
        return Err(DichotomyError::TableShape {
            x_states: q_x.n_states(),
            x_actions: q_x.n_actions(),
            y_states: q_y.n_states(),
            y_actions: q_y.n_actions(),
        });
    }
    Ok(())
}

/// Apply the four paired-cell rules: a quadrant is eligible when both of its
/// cells exceed `threshold`; among eligible quadrants the largest paired sum
/// wins, ties to the lowest variant. `None` when no rule fires.
pub fn select_quadrant(
    q_x: &QTable,
    q_y: &QTable,
    threshold: f64,
) -> Result<Option<Quadrant>, DichotomyError> {
    check_shapes(q_x, q_y)?;
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(DichotomyError::BadThreshold(threshold));
    }
    let mut best: Option<(Quadrant, f64)> = None;
    for quadrant in Quadrant::ALL {
        let ((xs, xa), (ys, ya)) = quadrant.cells();
        let vx = q_x.get(xs, xa).unwrap();
        let vy = q_y.get(ys, ya).unwrap();
        if vx > threshold && vy > threshold {
            let sum = vx + vy;
            if best.map_or(true, |(_, s)| sum > s) {
                best = Some((quadrant, sum));
            }
        }
    }
    Ok(best.map(|(q, _)| q))
}

/// Quadrant with the largest paired Q-sum, ties to the lowest variant.
/// The round decision when the threshold never fires.
pub fn fallback_quadrant(q_x: &QTable, q_y: &QTable) -> Result<Quadrant, DichotomyError> {
    check_shapes(q_x, q_y)?;
    let mut best = Quadrant::LowLow;
    let mut best_sum = paired_sum(q_x, q_y, best);
    for quadrant in [Quadrant::HighLow, Quadrant::LowHigh, Quadrant::HighHigh] {
        let sum = paired_sum(q_x, q_y, quadrant);
        if sum > best_sum {
            best = quadrant;
            best_sum = sum;
        }
    }
    Ok(best)
}

/// One bidder in the contraction scheme. Holds its own range plus the 2x2
/// table for the current round (states: opponent candidates, actions: own).
#[derive(Debug, Clone)]
pub struct DichotomyAgent {
    pub genco: GenCoParams,
    range: SearchRange,
    q: QTable,
    norm: NormalizationState,
    learning: LearningParams,
    temperature: f64,
    round_index: usize,
    estimated_opponent_action: f64,
}

impl DichotomyAgent {
    pub fn new(
        genco: GenCoParams,
        range: SearchRange,
        opponent_range: SearchRange,
        learning: LearningParams,
    ) -> Result<Self, DichotomyError> {
        if range.hi > genco.p_max {
            return Err(DichotomyError::InvalidRange(format!(
                "range [{}, {}] exceeds the generation cap {}",
                range.lo, range.hi, genco.p_max
            )));
        }
        let mut agent = Self {
            genco,
            range,
            q: QTable::zeros(vec![0.0, 1.0], vec![0.0, 1.0]),
            norm: NormalizationState::new(),
            learning,
            temperature: learning.temperature,
            round_index: 0,
            estimated_opponent_action: opponent_range.midpoint(),
        };
        agent.install_round(range, opponent_range);
        Ok(agent)
    }

    pub fn range(&self) -> SearchRange {
        self.range
    }

    pub fn q_table(&self) -> &QTable {
        &self.q
    }

    pub fn round_index(&self) -> usize {
        self.round_index
    }

    pub fn estimated_opponent_action(&self) -> f64 {
        self.estimated_opponent_action
    }

    /// Fresh round state: zero 2x2 table labeled with the quarter-point
    /// candidates of both ranges, reset normalization, reset temperature.
    /// The opponent estimate carries over as a raw quantity.
    pub fn install_round(&mut self, own: SearchRange, opponent: SearchRange) {
        let (own_lo, own_hi) = candidate_actions(&own);
        let (opp_lo, opp_hi) = candidate_actions(&opponent);
        self.range = own;
        self.q = QTable::zeros(vec![opp_lo, opp_hi], vec![own_lo, own_hi]);
        self.norm = NormalizationState::new();
        self.temperature = self.learning.temperature;
        self.round_index += 1;
    }

    /// Softmax-pick one of the two candidate bids given the estimated state.
    pub fn act<R: Rng>(&mut self, rng: &mut R) -> Bid {
        let state = self.q.nearest_state(self.estimated_opponent_action);
        let probs = softmax_probabilities(self.q.row(state).unwrap(), self.temperature)
            .expect("valid temperature");
        let idx = sample_action(&probs, rng).expect("softmax output is a distribution");
        Bid::new(self.q.action_labels()[idx], &self.genco).expect("candidates respect the cap")
    }

    /// Normalize the profit, update the cell at (pre-round estimate, own
    /// action), adopt the opponent's realized quantity, anneal temperature.
    pub fn observe(&mut self, own_q: f64, opponent_q: f64, raw_profit: f64) {
        let reward = self.norm.normalize_reward(raw_profit);
        let state = self.q.nearest_state(self.estimated_opponent_action);
        let action = nearest_index(self.q.action_labels(), own_q);
        simplified_update(&mut self.q, state, action, reward, &self.learning)
            .expect("2x2 indices are in range");
        self.estimated_opponent_action = opponent_q;
        self.temperature =
            (self.temperature * self.learning.temperature_decay).max(self.learning.temperature_floor);
    }
}

/// Everything observed during one inner iteration of a round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointStep {
    pub bid_x: f64,
    pub bid_y: f64,
    pub profit_x: f64,
    pub profit_y: f64,
}

/// A finished round: the ranges it started from, what it decided, and how.
#[derive(Debug, Clone)]
pub struct RoundRecord {
    pub round: usize,
    pub range_x: SearchRange,
    pub range_y: SearchRange,
    pub decision: Quadrant,
    pub by_threshold: bool,
    pub iterations: usize,
    pub steps: Vec<JointStep>,
}

/// Run one learning round: both agents repeatedly pick candidates, rewards
/// flow through normalization into the tables, and the round ends as soon as
/// a paired rule clears `threshold` — or at `max_inner_iterations`, where the
/// largest paired Q-sum decides. Both agents are then contracted to the
/// winning quadrant and given fresh tables.
///
/// `rewards(bid_x, bid_y)` returns both raw profits; production callers pass
/// the market profit pair, tests may inject arbitrary reward schedules.
pub fn run_round<R, F>(
    agent_x: &mut DichotomyAgent,
    agent_y: &mut DichotomyAgent,
    mut rewards: F,
    threshold: f64,
    max_inner_iterations: usize,
    rng: &mut R,
) -> Result<RoundRecord, DichotomyError>
where
    R: Rng,
    F: FnMut(f64, f64) -> Result<(f64, f64), MarketError>,
{
    let round = agent_x.round_index;
    let range_x = agent_x.range;
    let range_y = agent_y.range;
    let mut steps = Vec::new();
    let mut decision = None;
    let mut by_threshold = false;

    for _ in 0..max_inner_iterations {
        let bid_x = agent_x.act(rng).quantity;
        let bid_y = agent_y.act(rng).quantity;
        let (profit_x, profit_y) = rewards(bid_x, bid_y)?;
        agent_x.observe(bid_x, bid_y, profit_x);
        agent_y.observe(bid_y, bid_x, profit_y);
        steps.push(JointStep {
            bid_x,
            bid_y,
            profit_x,
            profit_y,
        });
        if let Some(q) = select_quadrant(&agent_x.q, &agent_y.q, threshold)? {
            decision = Some(q);
            by_threshold = true;
            break;
        }
    }
    let decision = match decision {
        Some(q) => q,
        None => fallback_quadrant(&agent_x.q, &agent_y.q)?,
    };

    let next_x = contract_range(&range_x, decision.x_half());
    let next_y = contract_range(&range_y, decision.y_half());
    agent_x.install_round(next_x, next_y);
    agent_y.install_round(next_y, next_x);

    Ok(RoundRecord {
        round,
        range_x,
        range_y,
        decision,
        by_threshold,
        iterations: steps.len(),
        steps,
    })
}

/// Output of a full contraction search.
#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub final_bid_x: f64,
    pub final_bid_y: f64,
    pub final_range_x: SearchRange,
    pub final_range_y: SearchRange,
    pub rounds: Vec<RoundRecord>,
}

/// Run rounds until both range widths are at most `stop_width` or
/// `max_rounds` have been played; the final bids are the midpoints of the
/// final ranges.
pub fn run_search<R: Rng>(
    agent_x: &mut DichotomyAgent,
    agent_y: &mut DichotomyAgent,
    market: &MarketParams,
    stop_width: f64,
    max_rounds: usize,
    threshold: f64,
    max_inner_iterations: usize,
    rng: &mut R,
) -> Result<SearchOutcome, DichotomyError> {
    if !(stop_width > 0.0) {
        return Err(DichotomyError::InvalidRange(format!(
            "stop_width must be > 0, got {stop_width}"
        )));
    }
    let gx = agent_x.genco;
    let gy = agent_y.genco;
    let market = *market;
    let mut rounds = Vec::new();
    while (agent_x.range.width() > stop_width || agent_y.range.width() > stop_width)
        && rounds.len() < max_rounds
    {
        let record = run_round(
            agent_x,
            agent_y,
            |bx, by| pair_profits(&market, &gx, &gy, bx, by),
            threshold,
            max_inner_iterations,
            rng,
        )?;
        rounds.push(record);
    }
    Ok(SearchOutcome {
        final_bid_x: agent_x.range.midpoint(),
        final_bid_y: agent_y.range.midpoint(),
        final_range_x: agent_x.range,
        final_range_y: agent_y.range,
        rounds,
    })
}

//! Tabular Q-value machinery shared by both bidder agents: the Q-table, the
//! temporal-difference update and its discount-free simplification, Boltzmann
//! (softmax) action selection with an epsilon-greedy alternative, and the
//! running-max reward normalization that keeps every Q value in [0, 1].

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum QError {
    #[error("state index {index} out of range (table has {len} states)")]
    StateIndex { index: usize, len: usize },
    #[error("action index {index} out of range (table has {len} actions)")]
    ActionIndex { index: usize, len: usize },
    #[error("softmax temperature must be > 0, got {0}")]
    NonPositiveTemperature(f64),
    #[error("probabilities must be a distribution summing to 1, got sum {0}")]
    MalformedDistribution(f64),
    #[error("empty Q row")]
    EmptyRow,
    #[error("invalid learning parameters: {0}")]
    InvalidParams(String),
}

/// Learning-rate, discount, and exploration-temperature settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearningParams {
    /// Step size of the Q update, in (0, 1].
    pub learning_rate: f64,
    /// Discount factor, in [0, 1]. Zero for the simplified update.
    pub discount: f64,
    /// Initial softmax temperature, > 0.
    pub temperature: f64,
    /// Multiplicative per-iteration temperature decay, in (0, 1].
    pub temperature_decay: f64,
    /// Temperature never decays below this floor.
    pub temperature_floor: f64,
}

impl LearningParams {
    pub fn validate(&self) -> Result<(), QError> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(QError::InvalidParams(format!(
                "learning_rate must be in (0, 1], got {}",
                self.learning_rate
            )));
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return Err(QError::InvalidParams(format!(
                "discount must be in [0, 1], got {}",
                self.discount
            )));
        }
        if !(self.temperature > 0.0) {
            return Err(QError::InvalidParams(format!(
                "temperature must be > 0, got {}",
                self.temperature
            )));
        }
        if !(self.temperature_decay > 0.0 && self.temperature_decay <= 1.0) {
            return Err(QError::InvalidParams(format!(
                "temperature_decay must be in (0, 1], got {}",
                self.temperature_decay
            )));
        }
        if !(self.temperature_floor > 0.0 && self.temperature_floor <= self.temperature) {
            return Err(QError::InvalidParams(format!(
                "temperature_floor must be in (0, temperature], got {}",
                self.temperature_floor
            )));
        }
        Ok(())
    }
}

impl Default for LearningParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            discount: 0.0,
            temperature: 0.5,
            temperature_decay: 0.95,
            temperature_floor: 0.01,
        }
    }
}

/// Dense state-by-action value table with labeled coordinates.
///
/// States are the opponent's quantity options, actions the agent's own.
/// All cells start at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    state_labels: Vec<f64>,
    action_labels: Vec<f64>,
    values: Vec<f64>, // row-major, one row per state
}

impl QTable {
    pub fn zeros(state_labels: Vec<f64>, action_labels: Vec<f64>) -> Self {
        let values = vec![0.0; state_labels.len() * action_labels.len()];
        Self {
            state_labels,
            action_labels,
            values,
        }
    }

    pub fn n_states(&self) -> usize {
        self.state_labels.len()
    }

    pub fn n_actions(&self) -> usize {
        self.action_labels.len()
    }

    pub fn state_labels(&self) -> &[f64] {
        &self.state_labels
    }

    pub fn action_labels(&self) -> &[f64] {
        &self.action_labels
    }

    pub fn get(&self, state: usize, action: usize) -> Result<f64, QError> {
        self.check(state, action)?;
        Ok(self.values[state * self.n_actions() + action])
    }

    pub fn set(&mut self, state: usize, action: usize, value: f64) -> Result<(), QError> {
        self.check(state, action)?;
        let n = self.n_actions();
        self.values[state * n + action] = value;
        Ok(())
    }

    pub fn row(&self, state: usize) -> Result<&[f64], QError> {
        if state >= self.n_states() {
            return Err(QError::StateIndex {
                index: state,
                len: self.n_states(),
            });
        }
        let n = self.n_actions();
        Ok(&self.values[state * n..(state + 1) * n])
    }

    pub fn max_in_row(&self, state: usize) -> Result<f64, QError> {
        let row = self.row(state)?;
        row.iter().copied().reduce(f64::max).ok_or(QError::EmptyRow)
    }

    /// Index of the state label nearest to `label`; ties break toward the
    /// lower label.
    pub fn nearest_state(&self, label: f64) -> usize {
        nearest_index(&self.state_labels, label)
    }

    fn check(&self, state: usize, action: usize) -> Result<(), QError> {
        if state >= self.n_states() {
            return Err(QError::StateIndex {
                index: state,
                len: self.n_states(),
            });
        }
        if action >= self.n_actions() {
            return Err(QError::ActionIndex {
                index: action,
                len: self.n_actions(),
            });
        }
        Ok(())
    }
}

/// Index of the entry of `labels` (assumed sorted ascending) nearest to
/// `value`; ties break toward the lower label.
pub fn nearest_index(labels: &[f64], value: f64) -> usize {
    assert!(!labels.is_empty(), "no labels");
    let mut best = 0;
    let mut best_dist = (labels[0] - value).abs();
    for (i, &l) in labels.iter().enumerate().skip(1) {
        let d = (l - value).abs();
        if d < best_dist {
            best = i;
            best_dist = d;
        }
    }
    best
}

/// Temporal-difference update
/// `Q(x,a) <- Q(x,a) + lr * (r + discount * max_a' Q(x',a') - Q(x,a))`.
pub fn td_update(
    q: &mut QTable,
    state: usize,
    action: usize,
    reward: f64,
    next_state: usize,
    params: &LearningParams,
) -> Result<(), QError> {
    let current = q.get(state, action)?;
    let best_next = q.max_in_row(next_state)?;
    let target = reward + params.discount * best_next;
    q.set(state, action, current + params.learning_rate * (target - current))
}

/// Discount-free update `Q(x,a) <- Q(x,a) + lr * (r - Q(x,a))`; identical to
/// [`td_update`] with a zero discount.
pub fn simplified_update(
    q: &mut QTable,
    est_state: usize,
    action: usize,
    reward: f64,
    params: &LearningParams,
) -> Result<(), QError> {
    let current = q.get(est_state, action)?;
    q.set(
        est_state,
        action,
        current + params.learning_rate * (reward - current),
    )
}

/// Boltzmann distribution `p_i = exp(Q_i / tau) / sum_j exp(Q_j / tau)`,
/// computed with max subtraction so large Q values cannot overflow.
pub fn softmax_probabilities(q_row: &[f64], temperature: f64) -> Result<Vec<f64>, QError> {
    if !(temperature > 0.0) {
        return Err(QError::NonPositiveTemperature(temperature));
    }
    if q_row.is_empty() {
        return Err(QError::EmptyRow);
    }
    let max = q_row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = q_row.iter().map(|&q| ((q - max) / temperature).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Epsilon-greedy distribution: the greedy action gets `1 - eps + eps/n`,
/// every other action `eps/n`. Ties go to the first maximal entry.
///
/// Provided as the alternative policy behind the same sampling interface;
/// the agents default to softmax.
pub fn epsilon_greedy_probabilities(q_row: &[f64], epsilon: f64) -> Result<Vec<f64>, QError> {
    if q_row.is_empty() {
        return Err(QError::EmptyRow);
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(QError::InvalidParams(format!(
            "epsilon must be in [0, 1], got {epsilon}"
        )));
    }
    let greedy = q_row
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
        .map(|(i, _)| i)
        .unwrap();
    let n = q_row.len() as f64;
    let mut probs = vec![epsilon / n; q_row.len()];
    probs[greedy] += 1.0 - epsilon;
    Ok(probs)
}

/// Draw an index from an explicit probability vector (inverse CDF on a single
/// uniform draw, so the result is a pure function of the RNG stream).
pub fn sample_action<R: Rng>(probabilities: &[f64], rng: &mut R) -> Result<usize, QError> {
    let sum: f64 = probabilities.iter().sum();
    if probabilities.is_empty()
        || probabilities.iter().any(|p| !(0.0..=1.0 + 1e-9).contains(p))
        || (sum - 1.0).abs() > 1e-9
    {
        return Err(QError::MalformedDistribution(sum));
    }
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probabilities.iter().enumerate() {
        acc += p;
        if u < acc {
            return Ok(i);
        }
    }
    Ok(probabilities.len() - 1)
}

/// Running maximum of the raw profits seen in the current learning episode;
/// the denominator of reward normalization.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NormalizationState {
    pub max_observed_profit: f64,
}

impl NormalizationState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fold `raw_profit` into the running maximum and return the reward
    /// normalized onto [0, 1]: `clamp(raw / max_observed, 0, 1)`, or 0 while
    /// the maximum is still non-positive.
    pub fn normalize_reward(&mut self, raw_profit: f64) -> f64 {
        self.max_observed_profit = self.max_observed_profit.max(raw_profit);
        if self.max_observed_profit <= 0.0 {
            0.0
        } else {
            (raw_profit / self.max_observed_profit).clamp(0.0, 1.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn params(lr: f64, discount: f64) -> LearningParams {
        LearningParams {
            learning_rate: lr,
            discount,
            ..LearningParams::default()
        }
    }

    #[test]
    fn td_update_direct_substitution() {
        let mut q = QTable::zeros(vec![0.0, 1.0], vec![0.0, 1.0]);
        q.set(1, 1, 1.0).unwrap(); // max of next-state row is 1
        td_update(&mut q, 0, 0, 1.0, 1, &params(0.5, 0.9)).unwrap();
        assert_abs_diff_eq!(q.get(0, 0).unwrap(), 0.95, epsilon = 1e-12);
    }

    #[test]
    fn td_update_fixed_point() {
        let mut q = QTable::zeros(vec![0.0], vec![0.0]);
        q.set(0, 0, 0.42).unwrap();
        td_update(&mut q, 0, 0, 0.42, 0, &params(0.7, 0.0)).unwrap();
        assert_eq!(q.get(0, 0).unwrap(), 0.42);
    }

    #[test]
    fn td_update_full_replacement_at_unit_rate() {
        let mut q = QTable::zeros(vec![0.0], vec![0.0]);
        q.set(0, 0, 0.9).unwrap();
        td_update(&mut q, 0, 0, 0.3, 0, &params(1.0, 0.0)).unwrap();
        assert_abs_diff_eq!(q.get(0, 0).unwrap(), 0.3, epsilon = 1e-12);
    }

    #[test]
    fn td_update_only_touches_one_cell() {
        let mut q = QTable::zeros(vec![0.0, 1.0], vec![0.0, 1.0, 2.0]);
        td_update(&mut q, 1, 2, 1.0, 0, &params(0.5, 0.5)).unwrap();
        for s in 0..2 {
            for a in 0..3 {
                if (s, a) != (1, 2) {
                    assert_eq!(q.get(s, a).unwrap(), 0.0);
                }
            }
        }
    }

    #[test]
    fn td_update_rejects_unknown_indices() {
        let mut q = QTable::zeros(vec![0.0], vec![0.0]);
        assert!(matches!(
            td_update(&mut q, 1, 0, 0.0, 0, &params(0.5, 0.0)),
            Err(QError::StateIndex { .. })
        ));
        assert!(matches!(
            td_update(&mut q, 0, 3, 0.0, 0, &params(0.5, 0.0)),
            Err(QError::ActionIndex { .. })
        ));
    }

    #[test]
    fn simplified_update_direct_substitution() {
        let mut q = QTable::zeros(vec![0.0], vec![0.0]);
        simplified_update(&mut q, 0, 0, 1.0, &params(0.1, 0.0)).unwrap();
        assert_abs_diff_eq!(q.get(0, 0).unwrap(), 0.1, epsilon = 1e-12);
    }

    #[test]
    fn simplified_update_fixed_point() {
        let mut q = QTable::zeros(vec![0.0], vec![0.0]);
        q.set(0, 0, 0.5).unwrap();
        simplified_update(&mut q, 0, 0, 0.5, &params(0.7, 0.0)).unwrap();
        assert_eq!(q.get(0, 0).unwrap(), 0.5);
    }

    #[test]
    fn simplified_update_converges_geometrically() {
        // |Q_t - r| = (1 - lr)^t * |Q_0 - r|
        let mut q = QTable::zeros(vec![0.0], vec![0.0]);
        let lr = 0.3;
        let r = 0.8;
        for t in 1..=20 {
            simplified_update(&mut q, 0, 0, r, &params(lr, 0.0)).unwrap();
            let expected = r - (1.0 - lr).powi(t) * r;
            assert_abs_diff_eq!(q.get(0, 0).unwrap(), expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn softmax_uniform_on_equal_values() {
        for tau in [0.01, 0.2, 5.0] {
            let p = softmax_probabilities(&[0.3, 0.3, 0.3, 0.3], tau).unwrap();
            for &pi in &p {
                assert_abs_diff_eq!(pi, 0.25, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn softmax_analytic_two_action_value() {
        let p = softmax_probabilities(&[1.0, 0.0], 1.0).unwrap();
        let e = std::f64::consts::E;
        assert_abs_diff_eq!(p[0], e / (e + 1.0), epsilon = 1e-12);
        assert_abs_diff_eq!(p[1], 1.0 / (e + 1.0), epsilon = 1e-12);
    }

    #[test]
    fn softmax_approaches_argmax_as_temperature_vanishes() {
        let p = softmax_probabilities(&[1.0, 0.0], 1e-3).unwrap();
        assert!(p[0] > 1.0 - 1e-9);
    }

    #[test]
    fn softmax_rejects_bad_temperature() {
        assert!(matches!(
            softmax_probabilities(&[1.0], 0.0),
            Err(QError::NonPositiveTemperature(_))
        ));
        assert!(matches!(
            softmax_probabilities(&[1.0], -1.0),
            Err(QError::NonPositiveTemperature(_))
        ));
    }

    #[test]
    fn softmax_survives_huge_values() {
        let p = softmax_probabilities(&[1e308, 0.0], 1.0).unwrap();
        assert!(p.iter().all(|x| x.is_finite()));
        assert_abs_diff_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn epsilon_greedy_distributes_mass() {
        let p = epsilon_greedy_probabilities(&[0.1, 0.9, 0.3], 0.3).unwrap();
        assert_abs_diff_eq!(p[1], 0.7 + 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(p[0], 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn sample_degenerate_distribution_always_hits_it() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..100 {
            assert_eq!(sample_action(&[1.0, 0.0, 0.0], &mut rng).unwrap(), 0);
        }
    }

    #[test]
    fn sample_frequency_matches_distribution() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let n = 100_000;
        let mut hits = 0usize;
        for _ in 0..n {
            if sample_action(&[0.5, 0.5], &mut rng).unwrap() == 0 {
                hits += 1;
            }
        }
        let freq = hits as f64 / n as f64;
        assert!((freq - 0.5).abs() < 0.01, "freq {freq}");
    }

    #[test]
    fn sample_is_seed_deterministic() {
        let draw = |seed| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            (0..32)
                .map(|_| sample_action(&[0.25, 0.25, 0.5], &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(42), draw(42));
    }

    #[test]
    fn sample_rejects_malformed_distribution() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        assert!(sample_action(&[0.7, 0.7], &mut rng).is_err());
        assert!(sample_action(&[], &mut rng).is_err());
        assert!(sample_action(&[1.5, -0.5], &mut rng).is_err());
    }

    #[test]
    fn normalize_ratio_rule() {
        let mut n = NormalizationState::new();
        assert_eq!(n.normalize_reward(100.0), 1.0);
        assert_eq!(n.normalize_reward(90.0), 0.9);
    }

    #[test]
    fn normalize_clamps_negative_profit_to_zero() {
        let mut n = NormalizationState::new();
        n.normalize_reward(100.0);
        assert_eq!(n.normalize_reward(-500.0), 0.0);
        assert_eq!(n.max_observed_profit, 100.0);
    }

    #[test]
    fn normalize_running_max_scores_one() {
        let mut n = NormalizationState::new();
        n.normalize_reward(10.0);
        assert_eq!(n.normalize_reward(25.0), 1.0);
        assert_eq!(n.max_observed_profit, 25.0);
    }

    #[test]
    fn normalize_all_negative_episode_returns_zero() {
        let mut n = NormalizationState::new();
        assert_eq!(n.normalize_reward(-5.0), 0.0);
        assert_eq!(n.normalize_reward(-1.0), 0.0);
    }

    #[test]
    fn nearest_index_ties_break_low() {
        let grid = [0.0, 50.0, 100.0];
        assert_eq!(nearest_index(&grid, 25.0), 0);
        assert_eq!(nearest_index(&grid, 26.0), 1);
        assert_eq!(nearest_index(&grid, 75.0), 1);
        assert_eq!(nearest_index(&grid, 1000.0), 2);
    }

    #[test]
    fn learning_params_ranges_are_enforced() {
        assert!(LearningParams::default().validate().is_ok());
        for bad in [
            LearningParams { learning_rate: 0.0, ..Default::default() },
            LearningParams { learning_rate: 1.5, ..Default::default() },
            LearningParams { discount: -0.1, ..Default::default() },
            LearningParams { temperature: 0.0, ..Default::default() },
            LearningParams { temperature_decay: 0.0, ..Default::default() },
            LearningParams { temperature_floor: 0.0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?} should be invalid");
        }
    }

    proptest! {
        // Convex combination of values in [0,1] stays in [0,1].
        #[test]
        fn simplified_update_keeps_cells_bounded(
            lr in 0.01f64..=1.0,
            seed in any::<u64>(),
            steps in 1usize..200,
        ) {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let mut q = QTable::zeros(vec![0.0, 1.0, 2.0], vec![0.0, 1.0]);
            let p = params(lr, 0.0);
            for _ in 0..steps {
                let s = rng.gen_range(0..3);
                let a = rng.gen_range(0..2);
                let r: f64 = rng.gen();
                simplified_update(&mut q, s, a, r, &p).unwrap();
            }
            for s in 0..3 {
                for a in 0..2 {
                    let v = q.get(s, a).unwrap();
                    prop_assert!((0.0..=1.0).contains(&v));
                }
            }
        }

        // With a zero discount the two update rules are bit-identical.
        #[test]
        fn zero_discount_td_equals_simplified(
            lr in 0.01f64..=1.0,
            seed in any::<u64>(),
            steps in 1usize..100,
        ) {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let mut a_table = QTable::zeros(vec![0.0, 1.0], vec![0.0, 1.0]);
            let mut b_table = a_table.clone();
            let p = params(lr, 0.0);
            for _ in 0..steps {
                let s = rng.gen_range(0..2);
                let a = rng.gen_range(0..2);
                let next = rng.gen_range(0..2);
                let r: f64 = rng.gen_range(-2.0..2.0);
                td_update(&mut a_table, s, a, r, next, &p).unwrap();
                simplified_update(&mut b_table, s, a, r, &p).unwrap();
            }
            prop_assert_eq!(a_table, b_table);
        }

        #[test]
        fn softmax_is_a_shift_invariant_distribution(
            row in proptest::collection::vec(-5.0f64..5.0, 1..8),
            tau in 0.05f64..5.0,
            shift in -10.0f64..10.0,
        ) {
            let p = softmax_probabilities(&row, tau).unwrap();
            prop_assert!(p.iter().all(|&x| x > 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            let shifted: Vec<f64> = row.iter().map(|q| q + shift).collect();
            let p2 = softmax_probabilities(&shifted, tau).unwrap();
            for (a, b) in p.iter().zip(&p2) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }

        // Raising one Q value raises its probability and lowers the others.
        // Temperatures are kept moderate so no probability saturates to an
        // exact 0.0 or 1.0, where the strict inequality is unobservable.
        #[test]
        fn softmax_is_monotone_in_each_value(
            row in proptest::collection::vec(-2.0f64..2.0, 2..6),
            tau in 0.5f64..5.0,
            idx_seed in any::<u32>(),
            bump in 0.01f64..1.0,
        ) {
            let i = idx_seed as usize % row.len();
            let p = softmax_probabilities(&row, tau).unwrap();
            let mut bumped = row.clone();
            bumped[i] += bump;
            let p2 = softmax_probabilities(&bumped, tau).unwrap();
            prop_assert!(p2[i] > p[i]);
            for j in 0..row.len() {
                if j != i {
                    prop_assert!(p2[j] < p[j]);
                }
            }
        }
    }
}

//! Ground-truth Nash equilibrium of the two-player quantity game, by two
//! independent routes: a closed-form solve of the first-order conditions
//! (with cap clamping), and a grid-based best-response iteration that scans
//! profits exhaustively. The second route exists to check the first.

use serde::Serialize;
use thiserror::Error;

use crate::market::{clear_price, profit, GenCoParams, MarketError, MarketParams};

#[derive(Debug, Error)]
pub enum NashError {
    #[error("degenerate market: first-order-condition system is singular (det = {0})")]
    DegenerateMarket(f64),
    #[error("best-response iteration cycles: last {last:?}, previous {previous:?}")]
    Cycle {
        last: (f64, f64),
        previous: (f64, f64),
    },
    #[error("grid step must be > 0, got {0}")]
    InvalidStep(f64),
    #[error(transparent)]
    Market(#[from] MarketError),
}

/// An equilibrium point with its market outcome. `interior` is true iff
/// neither the caps nor the zero floor bind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NashPoint {
    pub q_x: f64,
    pub q_y: f64,
    pub price: f64,
    pub profit_x: f64,
    pub profit_y: f64,
    pub interior: bool,
}

fn point_from_quantities(
    market: &MarketParams,
    gx: &GenCoParams,
    gy: &GenCoParams,
    q_x: f64,
    q_y: f64,
    interior: bool,
) -> Result<NashPoint, NashError> {
    Ok(NashPoint {
        q_x,
        q_y,
        price: clear_price(market, q_x, q_y)?,
        profit_x: profit(gx, market, q_x, q_y)?,
        profit_y: profit(gy, market, q_y, q_x)?,
        interior,
    })
}

/// Unconstrained best reply `(lambda - b - alpha * q_other) / (2 (alpha + a))`
/// clamped to `[0, p_max]`.
fn clamped_best_response(market: &MarketParams, g: &GenCoParams, q_other: f64) -> f64 {
    let unconstrained =
        (market.lambda - g.b - market.alpha * q_other) / (2.0 * (market.alpha + g.a));
    unconstrained.clamp(0.0, g.p_max)
}

/// Closed-form equilibrium from the first-order conditions
///
/// ```text
/// 2 (alpha + a_x) q_x + alpha q_y = lambda - b_x
/// alpha q_x + 2 (alpha + a_y) q_y = lambda - b_y
/// ```
///
/// An out-of-bounds solution is clamped to the violated boundary and the
/// other player's best response is re-solved against it, repeating until
/// stable.
pub fn analytic_ne(
    market: &MarketParams,
    gx: &GenCoParams,
    gy: &GenCoParams,
) -> Result<NashPoint, NashError> {
    let a11 = 2.0 * (market.alpha + gx.a);
    let a12 = market.alpha;
    let a21 = market.alpha;
    let a22 = 2.0 * (market.alpha + gy.a);
    let r1 = market.lambda - gx.b;
    let r2 = market.lambda - gy.b;
    let det = a11 * a22 - a12 * a21;
    if det.abs() < 1e-12 {
        return Err(NashError::DegenerateMarket(det));
    }
    let q_x = (r1 * a22 - a12 * r2) / det;
    let q_y = (a11 * r2 - a21 * r1) / det;

    if (0.0..=gx.p_max).contains(&q_x) && (0.0..=gy.p_max).contains(&q_y) {
        return point_from_quantities(market, gx, gy, q_x, q_y, true);
    }

    // A bound binds: alternate clamped best responses until stable. The
    // best-response map is a contraction for alpha > 0, a >= 0.
    let mut q_x = q_x.clamp(0.0, gx.p_max);
    let mut q_y = q_y.clamp(0.0, gy.p_max);
    for _ in 0..512 {
        let next_x = clamped_best_response(market, gx, q_y);
        let next_y = clamped_best_response(market, gy, next_x);
        let stable = (next_x - q_x).abs() <= 1e-12 && (next_y - q_y).abs() <= 1e-12;
        q_x = next_x;
        q_y = next_y;
        if stable {
            break;
        }
    }
    point_from_quantities(market, gx, gy, q_x, q_y, false)
}

fn grid(p_max: f64, step: f64) -> Vec<f64> {
    let n = (p_max / step).floor() as usize;
    (0..=n).map(|i| i as f64 * step).collect()
}

/// Profit differences below this are treated as exact ties. Adjacent grid
/// points at any step of interest differ by far more, while float rounding
/// of a true tie sits orders of magnitude below.
const GRID_TIE_EPS: f64 = 1e-9;

/// Exhaustive-scan argmax of own profit against a fixed opponent quantity;
/// ties (including floating-point ties) resolve toward the lower quantity.
fn grid_argmax(
    market: &MarketParams,
    g: &GenCoParams,
    own_grid: &[f64],
    q_other: f64,
) -> Result<f64, NashError> {
    let mut best_q = own_grid[0];
    let mut best_profit = f64::NEG_INFINITY;
    for &q in own_grid {
        let r = profit(g, market, q, q_other)?;
        if r > best_profit + GRID_TIE_EPS {
            best_profit = r;
            best_q = q;
        }
    }
    Ok(best_q)
}

/// Best-response iteration on the grids `{0, step, ..., p_max}`: alternately
/// move each player to its grid-argmax profit against the other's current
/// quantity until a full sweep changes nothing. Errors with the last two
/// iterates if `max_sweeps` is exhausted.
pub fn brute_force_ne(
    market: &MarketParams,
    gx: &GenCoParams,
    gy: &GenCoParams,
    step: f64,
    max_sweeps: usize,
) -> Result<NashPoint, NashError> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(NashError::InvalidStep(step));
    }
    let grid_x = grid(gx.p_max, step);
    let grid_y = grid(gy.p_max, step);
    let mut q_x = grid_x[grid_x.len() / 2];
    let mut q_y = grid_y[grid_y.len() / 2];
    let mut previous = (q_x, q_y);
    for _ in 0..max_sweeps {
        let next_x = grid_argmax(market, gx, &grid_x, q_y)?;
        let next_y = grid_argmax(market, gy, &grid_y, next_x)?;
        if next_x == q_x && next_y == q_y {
            let interior =
                q_x > 0.0 && q_y > 0.0 && q_x < *grid_x.last().unwrap() && q_y < *grid_y.last().unwrap();
            return point_from_quantities(market, gx, gy, q_x, q_y, interior);
        }
        previous = (q_x, q_y);
        q_x = next_x;
        q_y = next_y;
    }
    Err(NashError::Cycle {
        last: (q_x, q_y),
        previous,
    })
}

/// Largest profit gain either player can realize by unilaterally deviating
/// from `point` onto a `scan_step` grid, relative to its profit there
/// (gain / max(|profit|, 1)). The numerical no-deviation certificate.
pub fn max_deviation_gain(
    market: &MarketParams,
    gx: &GenCoParams,
    gy: &GenCoParams,
    point: &NashPoint,
    scan_step: f64,
) -> Result<f64, NashError> {
    let mut worst: f64 = 0.0;
    for &q in &grid(gx.p_max, scan_step) {
        let r = profit(gx, market, q, point.q_y)?;
        worst = worst.max((r - point.profit_x) / point.profit_x.abs().max(1.0));
    }
    for &q in &grid(gy.p_max, scan_step) {
        let r = profit(gy, market, q, point.q_x)?;
        worst = worst.max((r - point.profit_y) / point.profit_y.abs().max(1.0));
    }
    Ok(worst)
}

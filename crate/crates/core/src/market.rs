//! Two-player Cournot market: inverse-demand clearing price, quadratic
//! producer costs, per-round profits, and the parameter perturbation used to
//! generate experiment parameter sets.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MarketError {
    #[error("quantity {quantity} is negative")]
    NegativeQuantity { quantity: f64 },
    #[error("quantity {quantity} outside [0, {p_max}]")]
    QuantityOutOfRange { quantity: f64, p_max: f64 },
    #[error("invalid market parameters: {0}")]
    InvalidParams(String),
}

/// Inverse-demand curve `price = lambda - alpha * (q1 + q2)`.
///
/// `lambda` is the price intercept (the price at zero total supply) and
/// `alpha` the demand slope. Both must be positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    pub lambda: f64,
    pub alpha: f64,
}

impl MarketParams {
    pub fn new(lambda: f64, alpha: f64) -> Result<Self, MarketError> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(MarketError::InvalidParams(format!(
                "lambda must be positive and finite, got {lambda}"
            )));
        }
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(MarketError::InvalidParams(format!(
                "alpha must be positive and finite, got {alpha}"
            )));
        }
        Ok(Self { lambda, alpha })
    }
}

/// One producer's quadratic cost curve `a*q^2 + b*q + c` and generation cap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenCoParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub p_max: f64,
}

impl GenCoParams {
    pub fn new(a: f64, b: f64, c: f64, p_max: f64) -> Result<Self, MarketError> {
        if !(a >= 0.0) || !a.is_finite() {
            return Err(MarketError::InvalidParams(format!(
                "quadratic cost coefficient must be >= 0 and finite, got {a}"
            )));
        }
        if !(p_max > 0.0) || !p_max.is_finite() {
            return Err(MarketError::InvalidParams(format!(
                "generation cap must be positive and finite, got {p_max}"
            )));
        }
        if !b.is_finite() || !c.is_finite() {
            return Err(MarketError::InvalidParams(
                "cost coefficients must be finite".to_string(),
            ));
        }
        Ok(Self { a, b, c, p_max })
    }
}

/// A supply-quantity bid, validated against the owner's cap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bid {
    pub quantity: f64,
}

impl Bid {
    pub fn new(quantity: f64, owner: &GenCoParams) -> Result<Self, MarketError> {
        if !(0.0..=owner.p_max).contains(&quantity) {
            return Err(MarketError::QuantityOutOfRange {
                quantity,
                p_max: owner.p_max,
            });
        }
        Ok(Self { quantity })
    }
}

/// Market-clearing price `lambda - alpha * (q1 + q2)`.
///
/// No clamping: oversupply can push the price negative.
pub fn clear_price(market: &MarketParams, q1: f64, q2: f64) -> Result<f64, MarketError> {
    for q in [q1, q2] {
        if !(q >= 0.0) {
            return Err(MarketError::NegativeQuantity { quantity: q });
        }
    }
    Ok(market.lambda - market.alpha * (q1 + q2))
}

/// Production cost `a*q^2 + b*q + c` for an output `q` within `[0, p_max]`.
pub fn gen_cost(genco: &GenCoParams, q: f64) -> Result<f64, MarketError> {
    if !(0.0..=genco.p_max).contains(&q) {
        return Err(MarketError::QuantityOutOfRange {
            quantity: q,
            p_max: genco.p_max,
        });
    }
    Ok(genco.a * q * q + genco.b * q + genco.c)
}

/// Profit after clearing: `q_own * clear_price - gen_cost(q_own)`.
pub fn profit(
    genco: &GenCoParams,
    market: &MarketParams,
    q_own: f64,
    q_other: f64,
) -> Result<f64, MarketError> {
    let price = clear_price(market, q_own, q_other)?;
    let cost = gen_cost(genco, q_own)?;
    Ok(q_own * price - cost)
}

/// Both players' profits for a joint bid pair, as one closure-friendly call.
pub fn pair_profits(
    market: &MarketParams,
    genco_x: &GenCoParams,
    genco_y: &GenCoParams,
    q_x: f64,
    q_y: f64,
) -> Result<(f64, f64), MarketError> {
    Ok((
        profit(genco_x, market, q_x, q_y)?,
        profit(genco_y, market, q_y, q_x)?,
    ))
}

/// Copy of `base` with `lambda` redrawn uniformly from
/// `[lambda - spread, lambda + spread]`; `alpha` unchanged.
pub fn perturb_lambda<R: Rng>(
    base: &MarketParams,
    spread: f64,
    rng: &mut R,
) -> Result<MarketParams, MarketError> {
    if !(spread >= 0.0) || !spread.is_finite() {
        return Err(MarketError::InvalidParams(format!(
            "lambda spread must be >= 0 and finite, got {spread}"
        )));
    }
    let lambda = if spread == 0.0 {
        base.lambda
    } else {
        rng.gen_range(base.lambda - spread..=base.lambda + spread)
    };
    Ok(MarketParams {
        lambda,
        alpha: base.alpha,
    })
}

#[cfg(test)]
pub(crate) fn reference_params() -> (MarketParams, GenCoParams, GenCoParams) {
    (
        MarketParams::new(102.0, 0.04).unwrap(),
        GenCoParams::new(0.001, 2.0, 10000.0, 2000.0).unwrap(),
        GenCoParams::new(0.002, 3.0, 11000.0, 1800.0).unwrap(),
    )
}

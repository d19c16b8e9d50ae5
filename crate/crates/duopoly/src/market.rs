//! Closed-form economics of a differentiated-goods Bertrand duopoly.
//!
//! Two firms sell substitutable goods with linear inverse demand
//! `p_i = a - beta*q_i - d*q_j`. Inverting the system gives each firm's
//! demand, from which static equilibrium prices (competitive and fully
//! collusive) and best responses follow in closed form. All operations
//! here are pure functions; the simulation engine and the detectors both
//! consume them as oracles.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors produced by market construction and equilibrium queries.
#[derive(Debug, Error, PartialEq)]
pub enum MarketError {
    #[error("invalid market parameters: {0}")]
    InvalidParams(String),
    /// Homogeneous goods with unequal costs have no pure-strategy
    /// equilibrium price pair in this model.
    #[error("Bertrand equilibrium undefined: homogeneous goods with unequal costs")]
    UndefinedEquilibrium,
    /// The cartel formula divides by `beta - d`.
    #[error("cartel prices undefined when d = beta")]
    UndefinedCartel,
    /// Best responses are discontinuous under homogeneous goods.
    #[error("best response unsupported for homogeneous goods")]
    UnsupportedMode,
}

/// Raw market parameters: intercept, own/cross inverse-demand slopes,
/// and the two marginal costs.
///
/// `d / beta` controls substitutability: 0 means independent monopolies,
/// 1 means perfect substitutes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    pub a: f64,
    pub beta: f64,
    pub d: f64,
    pub c1: f64,
    pub c2: f64,
}

impl MarketParams {
    pub fn cost(&self, firm: usize) -> f64 {
        debug_assert!(firm < 2);
        if firm == 0 {
            self.c1
        } else {
            self.c2
        }
    }
}

/// Whether the direct demand system is invertible (`d < beta`) or the
/// goods are perfect substitutes (`d = beta`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MarketMode {
    Differentiated,
    Homogeneous,
}

/// Market with the derived direct-demand coefficients
/// `b = beta^2 - d^2` and `alpha = a*beta - a*d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedMarket {
    pub params: MarketParams,
    pub b: f64,
    pub alpha: f64,
    pub mode: MarketMode,
}

/// Static reference price pairs: the competitive (Bertrand) equilibrium
/// and, when defined, the joint-profit-maximizing cartel prices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferencePrices {
    pub bertrand: (f64, f64),
    pub cartel: Option<(f64, f64)>,
}

impl ReferencePrices {
    pub fn bertrand_for(&self, firm: usize) -> f64 {
        debug_assert!(firm < 2);
        if firm == 0 {
            self.bertrand.0
        } else {
            self.bertrand.1
        }
    }

    pub fn cartel_for(&self, firm: usize) -> Option<f64> {
        debug_assert!(firm < 2);
        self.cartel.map(|c| if firm == 0 { c.0 } else { c.1 })
    }
}

/// Realized quantities and profits for one price pair.
///
/// Quantities are clamped at zero; profits may be negative when a firm
/// prices below its cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketOutcome {
    pub q1: f64,
    pub q2: f64,
    pub pi1: f64,
    pub pi2: f64,
}

impl MarketOutcome {
    pub fn quantity(&self, firm: usize) -> f64 {
        if firm == 0 {
            self.q1
        } else {
            self.q2
        }
    }

    pub fn profit(&self, firm: usize) -> f64 {
        if firm == 0 {
            self.pi1
        } else {
            self.pi2
        }
    }
}

/// Prices are accepted on a continuous scale but recorded at two decimal
/// places; callers quantize through this before logging.
pub fn round_to_cents(price: f64) -> f64 {
    (price * 100.0).round() / 100.0
}

/// Validate parameters and compute the direct-demand coefficients.
pub fn derive_market(params: MarketParams) -> Result<DerivedMarket, MarketError> {
    let invalid = |msg: &str| Err(MarketError::InvalidParams(msg.to_string()));
    if ![params.a, params.beta, params.d, params.c1, params.c2]
        .iter()
        .all(|v| v.is_finite())
    {
        return invalid("all parameters must be finite");
    }
    if params.beta <= 0.0 {
        return invalid("beta must be positive");
    }
    if params.d < 0.0 || params.d > params.beta {
        return invalid("d must satisfy 0 <= d <= beta");
    }
    if params.c1 < 0.0 || params.c2 < 0.0 {
        return invalid("costs must be non-negative");
    }
    if params.a <= params.c1.max(params.c2) {
        return invalid("a must exceed both marginal costs");
    }
    let mode = if params.d == params.beta {
        MarketMode::Homogeneous
    } else {
        MarketMode::Differentiated
    };
    Ok(DerivedMarket {
        params,
        b: params.beta * params.beta - params.d * params.d,
        alpha: params.a * params.beta - params.a * params.d,
        mode,
    })
}

/// Quantities demanded at a price pair.
///
/// Differentiated goods: `q_i = max(0, (alpha - beta*p_i + d*p_j) / b)`.
/// Homogeneous goods: the cheaper firm serves the whole market at
/// `q = (a - p) / beta`; an exact tie splits demand symmetrically at
/// `q = (a - p) / (beta + d)` each.
pub fn demand(market: &DerivedMarket, p1: f64, p2: f64) -> (f64, f64) {
    debug_assert!(p1.is_finite() && p1 >= 0.0, "p1 must be finite and >= 0");
    debug_assert!(p2.is_finite() && p2 >= 0.0, "p2 must be finite and >= 0");
    let p = market.params;
    match market.mode {
        MarketMode::Differentiated => {
            let q1 = (market.alpha - p.beta * p1 + p.d * p2) / market.b;
            let q2 = (market.alpha - p.beta * p2 + p.d * p1) / market.b;
            (q1.max(0.0), q2.max(0.0))
        }
        MarketMode::Homogeneous => {
            if p1 < p2 {
                (((p.a - p1) / p.beta).max(0.0), 0.0)
            } else if p2 < p1 {
                (0.0, ((p.a - p2) / p.beta).max(0.0))
            } else {
                let q = ((p.a - p1) / (p.beta + p.d)).max(0.0);
                (q, q)
            }
        }
    }
}

/// Quantities and profits at a price pair, `pi_i = (p_i - c_i) * q_i`.
pub fn profit(market: &DerivedMarket, p1: f64, p2: f64) -> MarketOutcome {
    let (q1, q2) = demand(market, p1, p2);
    MarketOutcome {
        q1,
        q2,
        pi1: (p1 - market.params.c1) * q1,
        pi2: (p2 - market.params.c2) * q2,
    }
}

/// Competitive (mutual best response) equilibrium prices.
///
/// Numerators and the shared denominator are evaluated separately so the
/// reference parameterizations land on their exact values.
pub fn bertrand_prices(market: &DerivedMarket) -> Result<(f64, f64), MarketError> {
    let p = market.params;
    match market.mode {
        MarketMode::Differentiated => {
            let den = 4.0 * p.beta * p.beta - p.d * p.d;
            let num1 =
                p.d * market.alpha + p.beta * p.d * p.c2 + 2.0 * p.beta * market.alpha
                    + 2.0 * p.beta * p.beta * p.c1;
            let num2 =
                p.d * market.alpha + p.beta * p.d * p.c1 + 2.0 * p.beta * market.alpha
                    + 2.0 * p.beta * p.beta * p.c2;
            Ok((num1 / den, num2 / den))
        }
        MarketMode::Homogeneous => {
            if p.c1 == p.c2 {
                Ok((p.c1, p.c2))
            } else {
                Err(MarketError::UndefinedEquilibrium)
            }
        }
    }
}

/// Joint-profit-maximizing prices `p_i = alpha / (2*(beta - d)) + c_i / 2`.
pub fn cartel_prices(market: &DerivedMarket) -> Result<(f64, f64), MarketError> {
    let p = market.params;
    if market.mode == MarketMode::Homogeneous {
        return Err(MarketError::UndefinedCartel);
    }
    let common = market.alpha / (2.0 * (p.beta - p.d));
    Ok((common + p.c1 / 2.0, common + p.c2 / 2.0))
}

/// Unique profit-maximizing reply to a rival price:
/// `p_i* = (alpha + d*p_j + beta*c_i) / (2*beta)`.
///
/// Returns the raw first-order-condition value without flooring at cost.
pub fn best_response(
    market: &DerivedMarket,
    firm: usize,
    rival_price: f64,
) -> Result<f64, MarketError> {
    debug_assert!(firm < 2);
    debug_assert!(rival_price.is_finite() && rival_price >= 0.0);
    if market.mode == MarketMode::Homogeneous {
        return Err(MarketError::UnsupportedMode);
    }
    let p = market.params;
    let num = market.alpha + p.d * rival_price + p.beta * p.cost(firm);
    Ok(num / (2.0 * p.beta))
}

/// Both reference price pairs. The cartel pair is absent for homogeneous
/// goods, where the formula is undefined.
pub fn reference_prices(market: &DerivedMarket) -> Result<ReferencePrices, MarketError> {
    Ok(ReferencePrices {
        bertrand: bertrand_prices(market)?,
        cartel: cartel_prices(market).ok(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn base_params() -> MarketParams {
        MarketParams {
            a: 14.0,
            beta: 1.0 / 150.0,
            d: 1.0 / 300.0,
            c1: 2.0,
            c2: 2.0,
        }
    }

    fn base_market() -> DerivedMarket {
        derive_market(base_params()).unwrap()
    }

    fn homogeneous_market() -> DerivedMarket {
        derive_market(MarketParams {
            a: 14.0,
            beta: 1.0 / 300.0,
            d: 1.0 / 300.0,
            c1: 2.0,
            c2: 2.0,
        })
        .unwrap()
    }

    #[test]
    fn derives_base_coefficients() {
        let m = base_market();
        assert!((m.b - 1.0 / 30000.0).abs() < 1e-18);
        assert!((m.alpha - 7.0 / 150.0).abs() < 1e-15);
        assert_eq!(m.mode, MarketMode::Differentiated);
    }

    #[test]
    fn derives_zero_cross_slope() {
        let m = derive_market(MarketParams {
            d: 0.0,
            ..base_params()
        })
        .unwrap();
        assert!((m.b - 1.0 / 22500.0).abs() < 1e-18);
        assert!((m.alpha - 14.0 / 150.0).abs() < 1e-15);
        assert_eq!(m.mode, MarketMode::Differentiated);
    }

    #[test]
    fn equal_slopes_are_homogeneous() {
        let m = homogeneous_market();
        assert_eq!(m.mode, MarketMode::Homogeneous);
        assert_eq!(m.b, 0.0);
    }

    #[test]
    fn rejects_invalid_params() {
        let bad = [
            MarketParams {
                beta: 0.0,
                ..base_params()
            },
            MarketParams {
                d: -0.001,
                ..base_params()
            },
            MarketParams {
                d: 1.0 / 100.0,
                ..base_params()
            },
            MarketParams {
                c1: -1.0,
                ..base_params()
            },
            MarketParams {
                a: 2.0,
                ..base_params()
            },
        ];
        for params in bad {
            assert!(matches!(
                derive_market(params),
                Err(MarketError::InvalidParams(_))
            ));
        }
    }

    #[test]
    fn demand_matches_hand_evaluation() {
        let m = base_market();
        let (q1, q2) = demand(&m, 6.0, 6.0);
        assert!((q1 - 800.0).abs() < 1e-9);
        assert!((q2 - 800.0).abs() < 1e-9);
    }

    #[test]
    fn demand_dies_at_intercept() {
        let m = base_market();
        let (q1, q2) = demand(&m, 14.0, 14.0);
        assert_eq!(q1, 0.0);
        assert_eq!(q2, 0.0);
    }

    #[test]
    fn homogeneous_winner_takes_all() {
        let m = homogeneous_market();
        let (q1, q2) = demand(&m, 3.0, 4.0);
        assert!((q1 - 3300.0).abs() < 1e-9);
        assert_eq!(q2, 0.0);
    }

    #[test]
    fn homogeneous_tie_splits_symmetrically() {
        let m = homogeneous_market();
        let (q1, q2) = demand(&m, 5.0, 5.0);
        assert_eq!(q1, q2);
        assert!((q1 - (14.0 - 5.0) / (2.0 / 300.0)).abs() < 1e-9);
    }

    #[test]
    fn demand_clamps_negative_quantities() {
        let m = base_market();
        let (q1, _) = demand(&m, 14.0, 0.0);
        assert_eq!(q1, 0.0);
    }

    #[test]
    fn profit_at_competitive_point() {
        let m = base_market();
        let out = profit(&m, 6.0, 6.0);
        assert!((out.pi1 - 3200.0).abs() < 1e-9);
        assert!((out.pi2 - 3200.0).abs() < 1e-9);
    }

    #[test]
    fn profit_at_collusive_point() {
        let m = base_market();
        let out = profit(&m, 8.0, 8.0);
        assert!((out.q1 - 600.0).abs() < 1e-9);
        assert!((out.pi1 - 3600.0).abs() < 1e-9);
        assert!((out.pi2 - 3600.0).abs() < 1e-9);
    }

    #[test]
    fn zero_margin_means_zero_profit() {
        let m = base_market();
        let out = profit(&m, 2.0, 6.0);
        assert_eq!(out.pi1, 0.0);
    }

    #[test]
    fn bertrand_base_is_six() {
        let m = base_market();
        let (p1, p2) = bertrand_prices(&m).unwrap();
        assert!((p1 - 6.0).abs() < 1e-12);
        assert!((p2 - 6.0).abs() < 1e-12);
    }

    #[test]
    fn bertrand_asymmetric_costs() {
        let m = derive_market(MarketParams {
            c2: 5.0,
            ..base_params()
        })
        .unwrap();
        let (p1, p2) = bertrand_prices(&m).unwrap();
        assert!((p1 - 6.4).abs() < 1e-12);
        assert!((p2 - 7.6).abs() < 1e-12);
    }

    #[test]
    fn bertrand_homogeneous_reduces_to_cost() {
        let (p1, p2) = bertrand_prices(&homogeneous_market()).unwrap();
        assert_eq!((p1, p2), (2.0, 2.0));
    }

    #[test]
    fn bertrand_homogeneous_asymmetric_is_undefined() {
        let m = derive_market(MarketParams {
            beta: 1.0 / 300.0,
            d: 1.0 / 300.0,
            c2: 5.0,
            ..base_params()
        })
        .unwrap();
        assert_eq!(bertrand_prices(&m), Err(MarketError::UndefinedEquilibrium));
    }

    #[test]
    fn cartel_base_is_eight() {
        let (p1, p2) = cartel_prices(&base_market()).unwrap();
        assert!((p1 - 8.0).abs() < 1e-12);
        assert!((p2 - 8.0).abs() < 1e-12);
    }

    #[test]
    fn cartel_asymmetric_costs() {
        let m = derive_market(MarketParams {
            c2: 5.0,
            ..base_params()
        })
        .unwrap();
        let (p1, p2) = cartel_prices(&m).unwrap();
        assert!((p1 - 8.0).abs() < 1e-12);
        assert!((p2 - 9.5).abs() < 1e-12);
    }

    #[test]
    fn cartel_with_independent_products() {
        let m = derive_market(MarketParams {
            d: 0.0,
            ..base_params()
        })
        .unwrap();
        let (p1, p2) = cartel_prices(&m).unwrap();
        assert!((p1 - 8.0).abs() < 1e-12);
        assert!((p2 - 8.0).abs() < 1e-12);
        // With d = 0 the competitive and collusive prices coincide.
        let (b1, b2) = bertrand_prices(&m).unwrap();
        assert!((b1 - p1).abs() < 1e-12);
        assert!((b2 - p2).abs() < 1e-12);
    }

    #[test]
    fn cartel_undefined_for_homogeneous() {
        assert_eq!(
            cartel_prices(&homogeneous_market()),
            Err(MarketError::UndefinedCartel)
        );
    }

    #[test]
    fn best_response_examples() {
        let m = base_market();
        assert!((best_response(&m, 0, 6.0).unwrap() - 6.0).abs() < 1e-12);
        assert!((best_response(&m, 0, 8.0).unwrap() - 6.5).abs() < 1e-12);
        assert!((best_response(&m, 0, 2.0).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn best_response_unsupported_for_homogeneous() {
        assert_eq!(
            best_response(&homogeneous_market(), 0, 6.0),
            Err(MarketError::UnsupportedMode)
        );
    }

    #[test]
    fn reference_prices_compose() {
        let refs = reference_prices(&base_market()).unwrap();
        assert!((refs.bertrand.0 - 6.0).abs() < 1e-12);
        assert_eq!(refs.cartel.map(|c| c.0), Some(8.0));
        let refs = reference_prices(&homogeneous_market()).unwrap();
        assert_eq!(refs.cartel, None);
    }

    #[test]
    fn rounding_to_cents() {
        assert_eq!(round_to_cents(6.494999), 6.49);
        assert_eq!(round_to_cents(6.495001), 6.5);
        assert_eq!(round_to_cents(8.0), 8.0);
    }
}

//! Property tests pitting the closed-form market operations against
//! independent numerical oracles.

use duopoly::market::{
    best_response, bertrand_prices, cartel_prices, demand, derive_market, profit, DerivedMarket,
    MarketParams,
};
use proptest::prelude::*;

fn differentiated_params() -> impl Strategy<Value = MarketParams> {
    (
        5.0..20.0f64,
        0.001..0.1f64,
        0.0..0.95f64,
        0.0..0.5f64,
        0.0..0.5f64,
    )
        .prop_map(|(a, beta, ratio, c1_frac, c2_frac)| MarketParams {
            a,
            beta,
            d: beta * ratio,
            c1: a * c1_frac,
            c2: a * c2_frac,
        })
}

fn homogeneous_params() -> impl Strategy<Value = MarketParams> {
    (5.0..20.0f64, 0.001..0.1f64, 0.0..0.5f64).prop_map(|(a, beta, c_frac)| MarketParams {
        a,
        beta,
        d: beta,
        c1: a * c_frac,
        c2: a * c_frac,
    })
}

/// Quantities of the raw linear system, without the simulator's
/// clamp-at-zero. The equilibrium and cartel formulas solve this
/// unconstrained problem, so the oracles must scan the same objective.
fn raw_quantities(market: &DerivedMarket, p1: f64, p2: f64) -> (f64, f64) {
    let p = market.params;
    (
        (market.alpha - p.beta * p1 + p.d * p2) / market.b,
        (market.alpha - p.beta * p2 + p.d * p1) / market.b,
    )
}

/// Exhaustive joint-profit maximization on a fixed grid; independent of
/// the closed-form cartel expression.
fn joint_profit_grid_search(market: &DerivedMarket, step: f64) -> (f64, f64) {
    let a = market.params.a;
    let steps = (a / step).ceil() as usize;
    let mut best = (0.0, 0.0);
    let mut best_profit = f64::NEG_INFINITY;
    for i in 0..=steps {
        let p1 = i as f64 * step;
        for j in 0..=steps {
            let p2 = j as f64 * step;
            let (q1, q2) = raw_quantities(market, p1, p2);
            let total = (p1 - market.params.c1) * q1 + (p2 - market.params.c2) * q2;
            if total > best_profit {
                best_profit = total;
                best = (p1, p2);
            }
        }
    }
    best
}

/// One-dimensional profit maximization by grid scan.
fn best_response_grid_search(market: &DerivedMarket, firm: usize, rival: f64, step: f64) -> f64 {
    let a = market.params.a;
    let steps = (a / step).ceil() as usize;
    let mut best = 0.0;
    let mut best_profit = f64::NEG_INFINITY;
    for i in 0..=steps {
        let p = i as f64 * step;
        let (q1, q2) = if firm == 0 {
            raw_quantities(market, p, rival)
        } else {
            raw_quantities(market, rival, p)
        };
        let q = if firm == 0 { q1 } else { q2 };
        let pi = (p - market.params.cost(firm)) * q;
        if pi > best_profit {
            best_profit = pi;
            best = p;
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn bertrand_prices_are_mutual_best_responses(params in differentiated_params()) {
        let market = derive_market(params).unwrap();
        let (p1, p2) = bertrand_prices(&market).unwrap();
        prop_assert!((best_response(&market, 0, p2).unwrap() - p1).abs() < 1e-9);
        prop_assert!((best_response(&market, 1, p1).unwrap() - p2).abs() < 1e-9);
    }

    #[test]
    fn iterated_best_responses_contract_to_equilibrium(
        params in differentiated_params(),
        start1_frac in 0.0..1.0f64,
        start2_frac in 0.0..1.0f64,
    ) {
        let market = derive_market(params).unwrap();
        let (b1, b2) = bertrand_prices(&market).unwrap();
        let mut p1 = params.a * start1_frac;
        let mut p2 = params.a * start2_frac;
        for _ in 0..200 {
            let next1 = best_response(&market, 0, p2).unwrap();
            let next2 = best_response(&market, 1, p1).unwrap();
            p1 = next1;
            p2 = next2;
        }
        prop_assert!((p1 - b1).abs() < 1e-6, "p1 = {p1}, equilibrium = {b1}");
        prop_assert!((p2 - b2).abs() < 1e-6, "p2 = {p2}, equilibrium = {b2}");
    }

    #[test]
    fn reference_price_ordering(params in differentiated_params()) {
        let market = derive_market(params).unwrap();
        let (b1, b2) = bertrand_prices(&market).unwrap();
        let (m1, m2) = cartel_prices(&market).unwrap();
        if params.d > 0.0 {
            prop_assert!(b1 < m1);
            prop_assert!(b2 < m2);
        } else {
            prop_assert!((b1 - m1).abs() < 1e-9);
            prop_assert!((b2 - m2).abs() < 1e-9);
        }
    }

    #[test]
    fn demand_slopes_match_finite_differences(params in differentiated_params()) {
        let market = derive_market(params).unwrap();
        let (b1, b2) = bertrand_prices(&market).unwrap();
        let h = 1e-5;
        // Interior point with strictly positive quantities.
        let (q0, _) = demand(&market, b1, b2);
        prop_assume!(q0 > 1e-6);
        let own = (demand(&market, b1 + h, b2).0 - demand(&market, b1 - h, b2).0) / (2.0 * h);
        let cross = (demand(&market, b1, b2 + h).0 - demand(&market, b1, b2 - h).0) / (2.0 * h);
        let own_expected = -params.beta / market.b;
        let cross_expected = params.d / market.b;
        prop_assert!((own - own_expected).abs() <= 1e-4 * own_expected.abs());
        prop_assert!(own < 0.0);
        if params.d > 0.0 {
            prop_assert!((cross - cross_expected).abs() <= 1e-4 * cross_expected.abs().max(1.0));
            prop_assert!(cross > 0.0);
        }
    }

    #[test]
    fn homogeneous_tie_splits_equally(params in homogeneous_params(), price_frac in 0.0..1.0f64) {
        let market = derive_market(params).unwrap();
        let p = params.a * price_frac;
        let (q1, q2) = demand(&market, p, p);
        prop_assert_eq!(q1, q2);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn cartel_prices_agree_with_joint_profit_grid_search(params in differentiated_params()) {
        prop_assume!(params.d < params.beta);
        let market = derive_market(params).unwrap();
        let (m1, m2) = cartel_prices(&market).unwrap();
        let step = 0.01;
        let (g1, g2) = joint_profit_grid_search(&market, step);
        prop_assert!((g1 - m1).abs() <= step + 1e-9, "grid {g1} vs closed form {m1}");
        prop_assert!((g2 - m2).abs() <= step + 1e-9, "grid {g2} vs closed form {m2}");
    }

    #[test]
    fn best_response_agrees_with_grid_search(params in differentiated_params(), rival_frac in 0.0..1.0f64) {
        let market = derive_market(params).unwrap();
        let rival = params.a * rival_frac;
        let closed = best_response(&market, 0, rival).unwrap();
        prop_assume!((0.0..=params.a).contains(&closed));
        // The reply must carry positive demand for the reply problem to
        // have an interior optimum.
        prop_assume!(raw_quantities(&market, closed, rival).0 > 0.0);
        let step = 0.001;
        let grid = best_response_grid_search(&market, 0, rival, step);
        prop_assert!((grid - closed).abs() <= step + 1e-9, "grid {grid} vs closed form {closed}");
    }
}

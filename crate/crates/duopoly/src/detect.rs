//! Stationarity and collusion detectors over per-firm price series.
//!
//! A run is considered stationary when each firm's prices either converge
//! (all but a small fraction of a trailing window sit within a tolerance
//! of a center price) or oscillate within a bounded band. A stable
//! collusion is detected from the first 100-round stretch of steady,
//! in-range pricing. All detectors are pure functions of their inputs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::ReferencePrices;

/// Rounds after which a run is cut off even without stationarity.
pub const HARD_STOP_ROUND: u32 = 2000;

/// Trailing-window length for the collusion-formation conditions.
pub const COLLUSION_WINDOW: usize = 100;

/// Mean absolute successive price change below which pricing counts as
/// steady for collusion formation.
pub const COLLUSION_MEAN_CHANGE: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum DetectError {
    #[error("insufficient history: need {needed} rounds, have {got}")]
    InsufficientHistory { needed: usize, got: usize },
    #[error("collusion range undefined: cartel prices are absent")]
    UndefinedRange,
}

/// Convergence test: at most a `theta` fraction of the trailing `window`
/// prices may deviate from the center by more than `epsilon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceParams {
    pub epsilon: f64,
    pub theta: f64,
    pub window: usize,
}

impl ConvergenceParams {
    /// Default tolerances derived from the gap between the collusive and
    /// competitive reference prices: `epsilon = 0.05 * (pM - pB)`,
    /// `theta = 0.01`, over a 400-round window.
    pub fn from_reference_gap(bertrand: f64, cartel: f64) -> Self {
        ConvergenceParams {
            epsilon: 0.05 * (cartel - bertrand),
            theta: 0.01,
            window: 400,
        }
    }
}

/// Bounded-oscillation test: the trailing `window` spread
/// (max - min) must not exceed `bound`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillationParams {
    pub bound: f64,
    pub window: usize,
}

impl OscillationParams {
    /// Default band equal to the reference price gap over 800 rounds.
    pub fn from_reference_gap(bertrand: f64, cartel: f64) -> Self {
        OscillationParams {
            bound: cartel - bertrand,
            window: 800,
        }
    }
}

/// Outcome of the stationarity tests for one firm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VerdictKind {
    Converged { center: f64 },
    BoundedOscillation { lo: f64, hi: f64 },
    NotStationary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationarityVerdict {
    #[serde(flatten)]
    pub kind: VerdictKind,
    pub evaluated_at: u32,
}

/// First round at which a stable collusion is in place, if any.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollusionFormation {
    pub formed_at: Option<u32>,
}

/// Per-round decision of the stopping rule.
#[derive(Debug, Clone, PartialEq)]
pub enum StopDecision {
    /// Both firms are stationary; verdicts are per firm.
    Stop([StationarityVerdict; 2]),
    Continue,
    /// The hard round cap was reached without stationarity.
    HardStop,
}

/// Per-firm detector parameters plus the hard round cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppingPolicy {
    pub convergence: [ConvergenceParams; 2],
    pub oscillation: [OscillationParams; 2],
    pub hard_cap: u32,
}

impl StoppingPolicy {
    /// Derive per-firm defaults from reference prices. `cartel_fallback`
    /// supplies the collusive reference when the cartel pair is undefined
    /// (homogeneous goods).
    pub fn from_refs(refs: &ReferencePrices, cartel_fallback: (f64, f64)) -> Self {
        let cartel = refs.cartel.unwrap_or(cartel_fallback);
        StoppingPolicy {
            convergence: [
                ConvergenceParams::from_reference_gap(refs.bertrand.0, cartel.0),
                ConvergenceParams::from_reference_gap(refs.bertrand.1, cartel.1),
            ],
            oscillation: [
                OscillationParams::from_reference_gap(refs.bertrand.0, cartel.0),
                OscillationParams::from_reference_gap(refs.bertrand.1, cartel.1),
            ],
            hard_cap: HARD_STOP_ROUND,
        }
    }
}

fn trailing<'a>(series: &'a [f64], window: usize) -> Result<&'a [f64], DetectError> {
    if series.len() < window {
        return Err(DetectError::InsufficientHistory {
            needed: window,
            got: series.len(),
        });
    }
    Ok(&series[series.len() - window..])
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Test the trailing window for convergence; returns the center price
/// when it passes. The center is the trailing-window median, which any
/// qualifying center can differ from by at most `epsilon` while
/// `theta < 0.5`.
pub fn check_convergence(
    series: &[f64],
    params: &ConvergenceParams,
) -> Result<Option<f64>, DetectError> {
    let window = trailing(series, params.window)?;
    let center = median(window);
    let outliers = window
        .iter()
        .filter(|p| (**p - center).abs() > params.epsilon)
        .count();
    if outliers as f64 / window.len() as f64 <= params.theta {
        Ok(Some(center))
    } else {
        Ok(None)
    }
}

/// Test the trailing window for bounded oscillation; returns the
/// realized (min, max) band when the spread stays within the bound.
pub fn check_bounded_oscillation(
    series: &[f64],
    params: &OscillationParams,
) -> Result<Option<(f64, f64)>, DetectError> {
    let window = trailing(series, params.window)?;
    let lo = window.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = window.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= params.bound {
        Ok(Some((lo, hi)))
    } else {
        Ok(None)
    }
}

fn steady_and_in_range(window: &[f64], lo: f64, hi: f64) -> bool {
    if window.iter().any(|p| *p < lo || *p > hi) {
        return false;
    }
    let total: f64 = window.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    total / ((window.len() - 1) as f64) < COLLUSION_MEAN_CHANGE
}

/// Scan both series for the first round at which a stable collusion has
/// formed: over the trailing 100 rounds, each firm's mean absolute
/// successive price change is below 0.5 and every price lies inside that
/// firm's [Bertrand, cartel] range (endpoints included).
pub fn detect_collusion_formation(
    series1: &[f64],
    series2: &[f64],
    refs: &ReferencePrices,
) -> Result<CollusionFormation, DetectError> {
    debug_assert_eq!(series1.len(), series2.len());
    let cartel = refs.cartel.ok_or(DetectError::UndefinedRange)?;
    let ranges = [(refs.bertrand.0, cartel.0), (refs.bertrand.1, cartel.1)];
    let n = series1.len().min(series2.len());
    for end in COLLUSION_WINDOW..=n {
        let start = end - COLLUSION_WINDOW;
        let ok = [series1, series2].iter().zip(ranges).all(|(series, (lo, hi))| {
            steady_and_in_range(&series[start..end], lo, hi)
        });
        if ok {
            return Ok(CollusionFormation {
                formed_at: Some(end as u32),
            });
        }
    }
    Ok(CollusionFormation { formed_at: None })
}

fn firm_verdict(
    series: &[f64],
    convergence: &ConvergenceParams,
    oscillation: &OscillationParams,
    round: u32,
) -> StationarityVerdict {
    let kind = match check_convergence(series, convergence) {
        Ok(Some(center)) => VerdictKind::Converged { center },
        _ => match check_bounded_oscillation(series, oscillation) {
            Ok(Some((lo, hi))) => VerdictKind::BoundedOscillation { lo, hi },
            _ => VerdictKind::NotStationary,
        },
    };
    StationarityVerdict {
        kind,
        evaluated_at: round,
    }
}

/// Evaluate both stationarity tests for both firms at the end of a run
/// or at the hard cap.
pub fn final_verdicts(
    series1: &[f64],
    series2: &[f64],
    policy: &StoppingPolicy,
    round: u32,
) -> [StationarityVerdict; 2] {
    [
        firm_verdict(series1, &policy.convergence[0], &policy.oscillation[0], round),
        firm_verdict(series2, &policy.convergence[1], &policy.oscillation[1], round),
    ]
}

/// The per-round stopping rule: stop when both firms converge or both
/// oscillate within bounds; hard-stop at the round cap; otherwise
/// continue. Histories shorter than a test's window simply fail that
/// test.
pub fn stopping_check(
    series1: &[f64],
    series2: &[f64],
    policy: &StoppingPolicy,
    round: u32,
) -> StopDecision {
    let series = [series1, series2];
    let centers: Vec<Option<f64>> = series
        .iter()
        .zip(&policy.convergence)
        .map(|(s, p)| check_convergence(s, p).unwrap_or(None))
        .collect();
    if let (Some(c1), Some(c2)) = (centers[0], centers[1]) {
        return StopDecision::Stop([
            StationarityVerdict {
                kind: VerdictKind::Converged { center: c1 },
                evaluated_at: round,
            },
            StationarityVerdict {
                kind: VerdictKind::Converged { center: c2 },
                evaluated_at: round,
            },
        ]);
    }
    let bands: Vec<Option<(f64, f64)>> = series
        .iter()
        .zip(&policy.oscillation)
        .map(|(s, p)| check_bounded_oscillation(s, p).unwrap_or(None))
        .collect();
    if let (Some(b1), Some(b2)) = (bands[0], bands[1]) {
        return StopDecision::Stop([
            StationarityVerdict {
                kind: VerdictKind::BoundedOscillation { lo: b1.0, hi: b1.1 },
                evaluated_at: round,
            },
            StationarityVerdict {
                kind: VerdictKind::BoundedOscillation { lo: b2.0, hi: b2.1 },
                evaluated_at: round,
            },
        ]);
    }
    if round >= policy.hard_cap {
        StopDecision::HardStop
    } else {
        StopDecision::Continue
    }
}

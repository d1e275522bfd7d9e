//! The linear-fractional functional `I(Ψ)` over finite-support product
//! strategies.
//!
//! Two independent routes evaluate it:
//!
//! * **Multilinear expansion**: the ratio of exact finite sums
//!   `Σ_combo Π_i w_i(combo) · A(combo)` over the product support, with `A`
//!   and `B` from [`crate::testfn`]. No quadrature or sampling error — the
//!   integrals over discrete measures *are* these sums.
//! * **Averaged kernel**: average the characteristics per state under the
//!   strategy, then take the stationary reward/time ratio of the averaged
//!   chain.
//!
//! Their agreement on random strategies is the executable content of the
//! closed-form representation theorem, and is enforced by the `eval`
//! command and the acceptance suite.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{MixedStrategy, ModelError, PureStrategy, SmdpModel, StrategyError, SupportPoint};
use crate::oracle;
use crate::testfn::{self, TestFnError};

/// Cap on the number of support combinations the multilinear route expands.
pub const TERM_BOUND: usize = 1_000_000;

/// Which route produced a functional value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FunctionalRoute {
    #[serde(rename = "multilinear")]
    Multilinear,
    #[serde(rename = "averaged-kernel")]
    AveragedKernel,
}

/// A value of the functional together with its numerator and denominator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalValue {
    #[serde(rename = "I")]
    pub value: f64,
    pub numerator: f64,
    pub denominator: f64,
    pub route: FunctionalRoute,
}

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    TestFn(#[from] TestFnError),
    #[error(transparent)]
    Oracle(#[from] oracle::OracleError),
    #[error("support expansion needs {terms} terms, bound is {bound}")]
    TermBound { terms: usize, bound: usize },
    #[error("functional denominator magnitude {value} is below 1e-14")]
    VanishingDenominator { value: f64 },
    #[error("averaged chain has no unique stationary distribution (condition 4 violation)")]
    NonUniqueStationary,
}

/// The degenerate (deterministic) strategy concentrated at `s`.
pub fn degenerate(s: &PureStrategy) -> MixedStrategy {
    MixedStrategy {
        per_state: s
            .values
            .iter()
            .map(|&u| vec![SupportPoint { point: u, weight: 1.0 }])
            .collect(),
    }
}

/// Evaluate `I(Ψ)` by expanding the product measure over its full support.
pub fn functional_value_multilinear(
    model: &SmdpModel,
    strategy: &MixedStrategy,
) -> Result<FunctionalValue, MeasureError> {
    model.validate_mixed(strategy)?;
    let n = model.state_count();
    let sizes: Vec<usize> = strategy.per_state.iter().map(Vec::len).collect();
    let mut terms: usize = 1;
    for &k in &sizes {
        terms = terms.saturating_mul(k);
        if terms > TERM_BOUND {
            return Err(MeasureError::TermBound {
                terms,
                bound: TERM_BOUND,
            });
        }
    }

    let mut numerator = 0.0;
    let mut denominator = 0.0;
    let mut combo = vec![0usize; n];
    let mut point = PureStrategy::new(vec![0.0; n]);
    loop {
        let mut weight = 1.0;
        for i in 0..n {
            let sp = strategy.per_state[i][combo[i]];
            weight *= sp.weight;
            point.values[i] = sp.point;
        }
        if weight != 0.0 {
            let eval = testfn::integrands(model, &point)?;
            numerator += weight * eval.a;
            denominator += weight * eval.b;
        }
        // Odometer increment over the support sizes.
        let mut axis = 0;
        loop {
            if axis == n {
                break;
            }
            combo[axis] += 1;
            if combo[axis] < sizes[axis] {
                break;
            }
            combo[axis] = 0;
            axis += 1;
        }
        if axis == n {
            break;
        }
    }

    if denominator.abs() < 1e-14 {
        return Err(MeasureError::VanishingDenominator { value: denominator });
    }
    Ok(FunctionalValue {
        value: numerator / denominator,
        numerator,
        denominator,
        route: FunctionalRoute::Multilinear,
    })
}

/// Evaluate `I(Ψ)` through the averaged kernel: `Σ d̄_i π̄_i / Σ T̄_i π̄_i`
/// with `π̄` the stationary distribution of the averaged chain.
pub fn functional_value_averaged(
    model: &SmdpModel,
    strategy: &MixedStrategy,
) -> Result<FunctionalValue, MeasureError> {
    let kernel = model.mixed_characteristics(strategy)?;
    let sd = oracle::stationary_distribution(&kernel.p)?;
    if !sd.uniqueness_ok {
        return Err(MeasureError::NonUniqueStationary);
    }
    let numerator: f64 = sd
        .pi
        .iter()
        .enumerate()
        .map(|(i, &pi)| kernel.reward[i] * pi)
        .sum();
    let denominator: f64 = sd
        .pi
        .iter()
        .enumerate()
        .map(|(i, &pi)| kernel.sojourn[i] * pi)
        .sum();
    if denominator.abs() < 1e-14 {
        return Err(MeasureError::VanishingDenominator { value: denominator });
    }
    Ok(FunctionalValue {
        value: numerator / denominator,
        numerator,
        denominator,
        route: FunctionalRoute::AveragedKernel,
    })
}

//! The closed-form test function `C(u) = A(u) / B(u)`.
//!
//! At a pure strategy `u = (u_1, …, u_N)` the integrands are weighted sums
//! over states,
//!
//! ```text
//! A(u) = Σ_i d_i(u_i) · w_i(u)        B(u) = Σ_i T_i(u_i) · w_i(u)
//! ```
//!
//! where the weight `w_i` attached to state `i` does not depend on `u_i`
//! itself. Two routes compute the weights:
//!
//! * **Determinant route** (canonical): `w_i` is the principal minor of
//!   `I − P(u)` with row and column `i` removed, computed by LU
//!   factorization with partial pivoting. These minors are nonnegative and
//!   proportional to the stationary distribution of the embedded chain
//!   whenever it is unique, so `C` equals the stationary reward/time ratio.
//! * **Permutation route** (cross-check): the literal alternating sum over
//!   all `(N−1)!` permutations with the `(−1)^(N+i+2)` prefactor and
//!   inversion-count signs. Kept for auditability at small `N`; its
//!   component signs alternate in `i` relative to the determinant route
//!   (the magnitudes agree), so the determinant route is authoritative for
//!   assembling `A` and `B`.
//!
//! The empty determinant (`N = 1`) is 1 by convention, matching the empty
//! product of the permutation route.

use itertools::Itertools;
use nalgebra::DMatrix;
use thiserror::Error;

use crate::model::{Kernel, ModelError, PureStrategy, SmdpModel};

/// Weights (and the denominator `B`) below this are treated as vanished.
pub const WEIGHT_FLOOR: f64 = 1e-14;

/// Largest state count accepted by the factorial-cost permutation route.
pub const PERMUTATION_MAX_STATES: usize = 9;

// Minors smaller in magnitude than this are rounding noise and clamp to 0.
const MINOR_NOISE: f64 = 1e-9;

/// Which algorithm produced a weight vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightRoute {
    Determinant,
    Permutation,
}

/// Sign convention carried by a weight vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignNormalization {
    /// Principal minors of `I − P`: all components nonnegative.
    NonnegativeMinors,
    /// The literal `(−1)^(N+i+2)` prefactor: components alternate in sign.
    LiteralPrefactor,
}

/// The per-state weight vector `w` inside the integrands.
#[derive(Debug, Clone, PartialEq)]
pub struct CofactorWeights {
    pub w: Vec<f64>,
    pub route: WeightRoute,
    pub normalization: SignNormalization,
}

/// One evaluation of the integrands and the test function at a pure strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunctionEval {
    /// Numerator integrand `A`: weight-combined expected reward increments.
    pub a: f64,
    /// Denominator integrand `B`: weight-combined mean sojourn times.
    pub b: f64,
    /// The test function `C = A / B`.
    pub c: f64,
    pub weights: CofactorWeights,
    /// States whose weight vanished at this point (0-based). Nonempty means
    /// those states are transient under `P(u)`; the single-ergodic-class
    /// condition is the modeler's obligation and only flagged here.
    pub zero_weight_states: Vec<usize>,
}

#[derive(Debug, Error)]
pub enum TestFnError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("embedded chain violates condition 4 at this decision point: all cofactor weights vanish")]
    Condition4Violation,
    #[error("denominator vanished at this point: the chain has no single recurrent class or a state is instantaneous")]
    VanishingDenominator,
    #[error("permutation route refused: {states} states exceeds the bound of {max}")]
    PermutationBound { states: usize, max: usize },
}

// ── Operations ──────────────────────────────────────────────────────────────

/// `P(u) − I`: every row sums to zero for a stochastic `P`.
pub fn shifted_matrix(model: &SmdpModel, s: &PureStrategy) -> Result<DMatrix<f64>, TestFnError> {
    let kernel = model.kernel_at(s)?;
    let n = kernel.p.nrows();
    let mut m = kernel.p;
    for i in 0..n {
        m[(i, i)] -= 1.0;
    }
    Ok(m)
}

/// Determinant-route weights at a pure strategy.
pub fn cofactor_weights_det(
    model: &SmdpModel,
    s: &PureStrategy,
) -> Result<CofactorWeights, TestFnError> {
    let kernel = model.kernel_at(s)?;
    minor_weights(&kernel.p)
}

/// Determinant-route weights of a raw transition matrix: `w_i` is the
/// principal minor of `I − P` with row and column `i` removed.
pub fn minor_weights(p: &DMatrix<f64>) -> Result<CofactorWeights, TestFnError> {
    let n = p.nrows();
    let mut shifted = -p.clone();
    for i in 0..n {
        shifted[(i, i)] += 1.0;
    }
    let mut w = Vec::with_capacity(n);
    for i in 0..n {
        let minor = shifted.clone().remove_row(i).remove_column(i);
        let det = if minor.nrows() == 0 {
            1.0
        } else {
            nalgebra::linalg::LU::new(minor).determinant()
        };
        // The minor is a sum of spanning-tree weights, hence >= 0 in exact
        // arithmetic; small negatives are factorization noise.
        w.push(if det < 0.0 && det > -MINOR_NOISE { 0.0 } else { det });
    }
    if w.iter().all(|&x| x <= WEIGHT_FLOOR) {
        return Err(TestFnError::Condition4Violation);
    }
    Ok(CofactorWeights {
        w,
        route: WeightRoute::Determinant,
        normalization: SignNormalization::NonnegativeMinors,
    })
}

/// Permutation-route weights at a pure strategy (literal text, `N ≤ 9`).
pub fn cofactor_weights_perm(
    model: &SmdpModel,
    s: &PureStrategy,
) -> Result<CofactorWeights, TestFnError> {
    let kernel = model.kernel_at(s)?;
    permutation_weights(&kernel.p)
}

/// Permutation-route weights of a raw transition matrix:
/// `w_i = (−1)^(N+i+2) Σ_α (−1)^δ(α) Π_{k≠i} p̃_{k,α_k}` with
/// `p̃_{k,j} = p_kj − [k=j]`, the sum running over all permutations `α` of
/// the remaining states and `δ` counting inversions of the value sequence.
pub fn permutation_weights(p: &DMatrix<f64>) -> Result<CofactorWeights, TestFnError> {
    let n = p.nrows();
    if n > PERMUTATION_MAX_STATES {
        return Err(TestFnError::PermutationBound {
            states: n,
            max: PERMUTATION_MAX_STATES,
        });
    }
    let mut w = Vec::with_capacity(n);
    for i in 0..n {
        let others: Vec<usize> = (0..n).filter(|&k| k != i).collect();
        let mut sum = 0.0;
        for alpha in others.iter().copied().permutations(others.len()) {
            let mut product = 1.0;
            for (pos, &col) in alpha.iter().enumerate() {
                let row = others[pos];
                let entry = if col == row { p[(row, col)] - 1.0 } else { p[(row, col)] };
                product *= entry;
            }
            sum += sign_from_inversions(&alpha) * product;
        }
        // Prefactor (−1)^(N+i+2) with 1-based i.
        let prefactor = if (n + i + 3) % 2 == 0 { 1.0 } else { -1.0 };
        w.push(prefactor * sum);
    }
    Ok(CofactorWeights {
        w,
        route: WeightRoute::Permutation,
        normalization: SignNormalization::LiteralPrefactor,
    })
}

// (−1)^(number of inversions of the value sequence).
fn sign_from_inversions(seq: &[usize]) -> f64 {
    let mut inversions = 0usize;
    for a in 0..seq.len() {
        for b in (a + 1)..seq.len() {
            if seq[a] > seq[b] {
                inversions += 1;
            }
        }
    }
    if inversions % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Evaluate `A`, `B`, and `C = A/B` at a pure strategy, using the
/// determinant-route weights.
pub fn integrands(model: &SmdpModel, s: &PureStrategy) -> Result<TestFunctionEval, TestFnError> {
    let kernel = model.kernel_at(s)?;
    let weights = minor_weights(&kernel.p)?;
    integrands_with_weights(&kernel, weights)
}

/// Combine already-computed weights with a kernel's reward and sojourn
/// vectors. Exposed so the scale invariance of `C` in the weights can be
/// exercised directly.
pub fn integrands_with_weights(
    kernel: &Kernel,
    weights: CofactorWeights,
) -> Result<TestFunctionEval, TestFnError> {
    let mut a = 0.0;
    let mut b = 0.0;
    for (i, &wi) in weights.w.iter().enumerate() {
        a += kernel.reward[i] * wi;
        b += kernel.sojourn[i] * wi;
    }
    if b <= WEIGHT_FLOOR {
        return Err(TestFnError::VanishingDenominator);
    }
    let zero_weight_states = weights
        .w
        .iter()
        .enumerate()
        .filter(|(_, &wi)| wi.abs() <= WEIGHT_FLOOR)
        .map(|(i, _)| i)
        .collect();
    Ok(TestFunctionEval {
        a,
        b,
        c: a / b,
        weights,
        zero_weight_states,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::load_model;
    use crate::oracle;
    use approx::assert_relative_eq;
    use serde_json::json;

    fn fixture_2state() -> SmdpModel {
        load_model(
            &json!({
                "states": 2,
                "decision_spaces": [
                    {"type": "finite", "points": [{"label": "a", "value": 0.0}]},
                    {"type": "finite", "points": [{"label": "b", "value": 0.0}]}
                ],
                "p": [{"a": [0.3, 0.7]}, {"b": [0.6, 0.4]}],
                "T": [{"a": 2.0}, {"b": 1.0}],
                "d": [{"a": 5.0}, {"b": 1.0}]
            })
            .to_string(),
        )
        .unwrap()
    }

    fn origin(n: usize) -> PureStrategy {
        PureStrategy::new(vec![0.0; n])
    }

    #[test]
    fn shifted_matrix_definition() {
        let m = load_model(
            &json!({
                "states": 1,
                "decision_spaces": [{"type": "finite", "points": [{"label": "a", "value": 0.0}]}],
                "p": [{"a": [1.0]}],
                "T": [{"a": 1.0}],
                "d": [{"a": 0.0}]
            })
            .to_string(),
        )
        .unwrap();
        let sm = shifted_matrix(&m, &origin(1)).unwrap();
        assert_eq!(sm[(0, 0)], 0.0);

        let sm = shifted_matrix(&fixture_2state(), &origin(2)).unwrap();
        assert_eq!(sm[(0, 0)], -0.7);
        assert_eq!(sm[(0, 1)], 0.7);
        assert_eq!(sm[(1, 0)], 0.6);
        assert_eq!(sm[(1, 1)], -0.6);
        for i in 0..2 {
            assert!(sm.row(i).sum().abs() < 1e-12);
        }
    }

    #[test]
    fn single_state_weight_is_one() {
        let p = DMatrix::from_row_slice(1, 1, &[1.0]);
        assert_eq!(minor_weights(&p).unwrap().w, vec![1.0]);
        assert_eq!(permutation_weights(&p).unwrap().w, vec![1.0]);
    }

    #[test]
    fn det_weights_match_hand_minors() {
        let p = DMatrix::from_row_slice(2, 2, &[0.3, 0.7, 0.6, 0.4]);
        let w = minor_weights(&p).unwrap().w;
        assert_relative_eq!(w[0], 0.6, max_relative = 1e-14);
        assert_relative_eq!(w[1], 0.7, max_relative = 1e-14);

        // Proportional to the stationary distribution (6/13, 7/13).
        let pi = oracle::stationary_distribution(&p).unwrap();
        assert!(pi.uniqueness_ok);
        let total: f64 = w.iter().sum();
        assert_relative_eq!(w[0] / total, pi.pi[0], max_relative = 1e-12);
        assert_relative_eq!(w[1] / total, pi.pi[1], max_relative = 1e-12);
    }

    #[test]
    fn det_weights_symmetric_swap_chain() {
        let p = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let w = minor_weights(&p).unwrap().w;
        assert_eq!(w, vec![1.0, 1.0]);
    }

    #[test]
    fn perm_weights_literal_signs_for_two_states() {
        let p = DMatrix::from_row_slice(2, 2, &[0.3, 0.7, 0.6, 0.4]);
        let w = permutation_weights(&p).unwrap().w;
        // i=1: (−1)^5 · (p_22 − 1) = 0.6;  i=2: (−1)^6 · (p_11 − 1) = −0.7.
        assert_relative_eq!(w[0], 0.6, max_relative = 1e-14);
        assert_relative_eq!(w[1], -0.7, max_relative = 1e-14);
    }

    #[test]
    fn perm_magnitudes_match_det_route() {
        let mut seed = 0x5eed_u64;
        let mut next = move || {
            // xorshift, just to decorrelate the fixture entries
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            (seed >> 11) as f64 / (1u64 << 53) as f64
        };
        for n in 2..=5 {
            for _ in 0..20 {
                let mut p = DMatrix::zeros(n, n);
                for i in 0..n {
                    let row: Vec<f64> = (0..n).map(|_| next() + 0.05).collect();
                    let sum: f64 = row.iter().sum();
                    for j in 0..n {
                        p[(i, j)] = row[j] / sum;
                    }
                }
                let det = minor_weights(&p).unwrap().w;
                let perm = permutation_weights(&p).unwrap().w;
                for i in 0..n {
                    assert_relative_eq!(det[i].abs(), perm[i].abs(), max_relative = 1e-12);
                    // Relative sign (−1)^i against the nonnegative minors.
                    let expected_sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                    assert!(perm[i] * expected_sign >= 0.0, "sign pattern broke at i={i}");
                }
            }
        }
    }

    #[test]
    fn condition4_violation_detected() {
        // Two isolated absorbing states: every minor vanishes.
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert!(matches!(
            minor_weights(&p),
            Err(TestFnError::Condition4Violation)
        ));
    }

    #[test]
    fn permutation_bound_enforced() {
        let n = 10;
        let p = DMatrix::from_element(n, n, 1.0 / n as f64);
        assert!(matches!(
            permutation_weights(&p),
            Err(TestFnError::PermutationBound { states: 10, max: 9 })
        ));
    }

    #[test]
    fn integrands_single_state() {
        let m = load_model(
            &json!({
                "states": 1,
                "decision_spaces": [{"type": "interval", "low": 0.0, "high": 5.0,
                                     "low_open": false, "high_open": false}],
                "p": [["1"]],
                "T": ["2"],
                "d": ["u"]
            })
            .to_string(),
        )
        .unwrap();
        let eval = integrands(&m, &PureStrategy::new(vec![3.0])).unwrap();
        assert_eq!(eval.a, 3.0);
        assert_eq!(eval.b, 2.0);
        assert_eq!(eval.c, 1.5);
    }

    #[test]
    fn integrands_worked_fixture() {
        let eval = integrands(&fixture_2state(), &origin(2)).unwrap();
        assert_relative_eq!(eval.a, 3.7, max_relative = 1e-14);
        assert_relative_eq!(eval.b, 1.9, max_relative = 1e-14);
        assert_relative_eq!(eval.c, 37.0 / 19.0, max_relative = 1e-14);
        assert!(eval.zero_weight_states.is_empty());
    }

    #[test]
    fn test_function_matches_stationary_ratio() {
        let eval = integrands(&fixture_2state(), &origin(2)).unwrap();
        let oracle_value = {
            let pi = [6.0 / 13.0, 7.0 / 13.0];
            (5.0 * pi[0] + 1.0 * pi[1]) / (2.0 * pi[0] + 1.0 * pi[1])
        };
        assert_relative_eq!(eval.c, oracle_value, max_relative = 1e-12);
    }

    #[test]
    fn c_is_scale_invariant_in_the_weights() {
        let m = fixture_2state();
        let kernel = m.kernel_at(&origin(2)).unwrap();
        let weights = minor_weights(&kernel.p).unwrap();
        let base = integrands_with_weights(&kernel, weights.clone()).unwrap();
        for lambda in [1e-6, 0.5, 3.0, 1e9] {
            let scaled = CofactorWeights {
                w: weights.w.iter().map(|&x| x * lambda).collect(),
                ..weights.clone()
            };
            let eval = integrands_with_weights(&kernel, scaled).unwrap();
            assert_relative_eq!(eval.c, base.c, max_relative = 1e-12);
        }
    }

    #[test]
    fn vanishing_denominator_reported() {
        let kernel = Kernel {
            p: DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]),
            sojourn: nalgebra::DVector::from_vec(vec![1.0, 1.0]),
            reward: nalgebra::DVector::from_vec(vec![1.0, 1.0]),
        };
        let zero = CofactorWeights {
            w: vec![0.0, 0.0],
            route: WeightRoute::Determinant,
            normalization: SignNormalization::NonnegativeMinors,
        };
        assert!(matches!(
            integrands_with_weights(&kernel, zero),
            Err(TestFnError::VanishingDenominator)
        ));
    }

    // Recurrent states of a unichain, by brute-force reachability.
    fn recurrent_states(p: &DMatrix<f64>) -> Vec<bool> {
        let n = p.nrows();
        let mut reach = vec![vec![false; n]; n];
        for i in 0..n {
            reach[i][i] = true;
        }
        for _ in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if p[(i, j)] > 0.0 && !reach[i][j] {
                        reach[i][j] = true;
                    }
                    for k in 0..n {
                        if reach[i][k] && reach[k][j] {
                            reach[i][j] = true;
                        }
                    }
                }
            }
        }
        // A state is recurrent iff every state it reaches reaches it back.
        (0..n)
            .map(|i| (0..n).all(|j| !reach[i][j] || reach[j][i]))
            .collect()
    }

    #[test]
    fn weights_positive_exactly_on_the_recurrent_class() {
        // Structured chains with transient states feeding a single class.
        let cases: Vec<DMatrix<f64>> = vec![
            // 3-state: state 2 transient into the {0,1} cycle.
            DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.5, 0.5, 0.0]),
            // 4-state: chain of transients into an absorbing state.
            DMatrix::from_row_slice(
                4,
                4,
                &[
                    1.0, 0.0, 0.0, 0.0, //
                    0.7, 0.3, 0.0, 0.0, //
                    0.0, 0.6, 0.4, 0.0, //
                    0.0, 0.0, 0.9, 0.1,
                ],
            ),
            // Fully mixing 3-state: everything recurrent.
            DMatrix::from_row_slice(3, 3, &[0.2, 0.3, 0.5, 0.4, 0.4, 0.2, 0.25, 0.25, 0.5]),
        ];
        for p in cases {
            let w = minor_weights(&p).unwrap().w;
            let recurrent = recurrent_states(&p);
            for (i, &is_recurrent) in recurrent.iter().enumerate() {
                if is_recurrent {
                    assert!(w[i] > WEIGHT_FLOOR, "state {i} recurrent but w = {}", w[i]);
                } else {
                    assert!(w[i].abs() <= WEIGHT_FLOOR, "state {i} transient but w = {}", w[i]);
                }
                assert!(w[i] >= 0.0);
            }
        }
    }

    #[test]
    fn denominator_strictly_positive_on_random_models() {
        let mut rng = crate::modelgen::seeded_rng(0xb001);
        for _ in 0..50 {
            let model = crate::modelgen::random_finite_model(&mut rng, 4, 3);
            let point = crate::modelgen::random_pure_strategy(&mut rng, &model);
            let eval = integrands(&model, &point).unwrap();
            assert!(eval.b > 0.0);
        }
    }

    #[test]
    fn transient_states_are_flagged_not_fatal() {
        // State 2 is transient: it feeds state 1 and is never re-entered.
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]);
        let w = minor_weights(&p).unwrap();
        assert_relative_eq!(w.w[0], 1.0, max_relative = 1e-14);
        assert!(w.w[1].abs() <= WEIGHT_FLOOR);
        let kernel = Kernel {
            p,
            sojourn: nalgebra::DVector::from_vec(vec![2.0, 1.0]),
            reward: nalgebra::DVector::from_vec(vec![3.0, 1.0]),
        };
        let eval = integrands_with_weights(&kernel, w).unwrap();
        assert_eq!(eval.zero_weight_states, vec![1]);
        assert_relative_eq!(eval.c, 1.5, max_relative = 1e-14);
    }
}

//! Solver library for optimal control of finite-state semi-Markov decision
//! processes with the stationary average reward criterion.
//!
//! The long-run reward rate of such a process under a randomized stationary
//! strategy is a linear-fractional functional of the per-state decision
//! measures. Its extremum over all strategies is attained (when attained at
//! all) on deterministic strategies, at the global extremum of the
//! closed-form test function `C(u) = A(u)/B(u)` built from cofactor weights
//! of the embedded chain. This crate provides:
//!
//! * [`model`] — model/strategy types, JSON documents, validation;
//! * [`exprlang`] — the expression language for interval decision spaces;
//! * [`testfn`] — the integrands `A`, `B` and the test function `C`, by the
//!   determinant route and the literal permutation expansion;
//! * [`measures`] — the functional `I(Ψ)` by multilinear expansion and by
//!   the averaged-kernel route;
//! * [`optimize`] — global optimization of `C` with the three-way outcome
//!   (attained / ε-optimal / unbounded);
//! * [`oracle`] — independent verifiers: stationary distributions, the
//!   ergodic ratio, strategy sampling, Monte-Carlo simulation;
//! * [`modelgen`] — reproducible random models for verification suites.

pub mod exprlang;
pub mod measures;
pub mod model;
pub mod modelgen;
pub mod optimize;
pub mod oracle;
pub mod testfn;

pub use model::{
    load_model, load_strategy, DecisionSpace, Kernel, MixedStrategy, ModelError, PureStrategy,
    SmdpModel, Strategy, StrategyError,
};

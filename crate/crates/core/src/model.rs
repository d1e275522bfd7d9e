//! The semi-Markov decision model and strategy objects.
//!
//! A model has `N` states. Attached to each state `i` are a decision space
//! `U_i` and three characteristics of the process under a decision `u`:
//!
//! * `p_i·(u)` — the transition-probability row of the embedded chain,
//! * `T_i(u)` — the mean sojourn time in state `i` (strictly positive),
//! * `d_i(u)` — the expected reward accumulated during one sojourn.
//!
//! Decision spaces are either finite labeled point sets (characteristics
//! tabulated per point) or real intervals (characteristics given as
//! expressions in `u`, see [`crate::exprlang`]). Strategies are either pure
//! (one decision per state) or mixed (a finite-support probability measure
//! per state); a pure strategy is exactly the tuple of concentration points
//! of a degenerate mixed strategy.
//!
//! Models are immutable after loading and safe to share across threads.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exprlang::{self, EvalError, Expr, ParseError};

/// Row sums may deviate from 1 by at most this much.
pub const ROW_SUM_TOL: f64 = 1e-9;
/// Probabilities in `[-NEG_PROB_TOL, 0)` are clamped to 0; anything lower is an error.
pub const NEG_PROB_TOL: f64 = 1e-12;
/// Per-state mixed-strategy weights must sum to 1 within this tolerance.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;
/// Interior sample count used to spot-check expression-backed invariants.
pub const VALIDATION_SAMPLES: usize = 1024;

// Tolerance for matching a numeric decision value to a tabulated point.
const POINT_MATCH_TOL: f64 = 1e-9;

// ── Domain types ────────────────────────────────────────────────────────────

/// A labeled decision point of a finite decision space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPoint {
    pub label: String,
    pub value: f64,
}

/// The set of admissible decisions in one state.
#[derive(Debug, Clone, PartialEq)]
pub enum DecisionSpace {
    /// Labeled points in strictly ascending value order.
    Finite(Vec<LabeledPoint>),
    /// A real interval; open endpoints are excluded from the space.
    Interval {
        low: f64,
        high: f64,
        low_open: bool,
        high_open: bool,
    },
}

impl DecisionSpace {
    /// Whether `u` belongs to the space (finite points matched within a
    /// small absolute/relative tolerance).
    pub fn contains(&self, u: f64) -> bool {
        match self {
            DecisionSpace::Finite(points) => points
                .iter()
                .any(|p| (u - p.value).abs() <= POINT_MATCH_TOL * p.value.abs().max(1.0)),
            DecisionSpace::Interval {
                low,
                high,
                low_open,
                high_open,
            } => {
                let above = if *low_open { u > *low } else { u >= *low };
                let below = if *high_open { u < *high } else { u <= *high };
                above && below
            }
        }
    }
}

/// A deterministic strategy: one decision value per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PureStrategy {
    pub values: Vec<f64>,
}

impl PureStrategy {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }
}

/// One weighted support point of a mixed strategy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportPoint {
    pub point: f64,
    pub weight: f64,
}

/// A randomized strategy: per state, a finite discrete probability measure
/// over decision points. Support is kept sorted by point value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedStrategy {
    pub per_state: Vec<Vec<SupportPoint>>,
}

/// Characteristics of the embedded process at a fixed (or averaged) decision:
/// the transition matrix, mean sojourn times, and mean reward increments.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub p: DMatrix<f64>,
    pub sojourn: DVector<f64>,
    pub reward: DVector<f64>,
}

// Per-state characteristics as stored in a validated model. Table entries are
// index-aligned with the space's points.
#[derive(Debug, Clone, PartialEq)]
enum StateChars {
    Table {
        rows: Vec<Vec<f64>>,
        sojourn: Vec<f64>,
        reward: Vec<f64>,
    },
    Expr {
        rows: Vec<Expr>,
        sojourn: Expr,
        reward: Expr,
    },
}

/// A validated semi-Markov decision model.
#[derive(Debug, Clone, PartialEq)]
pub struct SmdpModel {
    spaces: Vec<DecisionSpace>,
    chars: Vec<StateChars>,
    optimizer_settings: Option<OptimizerSettingsDoc>,
}

// ── Errors ──────────────────────────────────────────────────────────────────

/// Model loading/validation and characteristic-evaluation failures.
/// State numbers in messages are 1-based.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("document is not valid JSON for the model schema: {0}")]
    Json(#[from] serde_json::Error),
    #[error("schema violation: {message}")]
    Schema { message: String },
    #[error("decision space of state {state}: {message}")]
    Space { state: usize, message: String },
    #[error("expression for {field} of state {state}: {source}")]
    ExprParse {
        state: usize,
        field: String,
        source: ParseError,
    },
    #[error("row sum {sum} != 1 at state {state}, decision {decision}")]
    RowSum {
        state: usize,
        decision: String,
        sum: f64,
    },
    #[error(
        "negative transition probability p[{state}][{target}] = {value} at decision {decision}"
    )]
    NegativeProbability {
        state: usize,
        target: usize,
        decision: String,
        value: f64,
    },
    #[error("nonpositive mean sojourn T = {value} at state {state}, decision {decision}")]
    NonpositiveSojourn {
        state: usize,
        decision: String,
        value: f64,
    },
    #[error("characteristic of state {state} failed to evaluate at decision {decision}: {source}")]
    CharacteristicEval {
        state: usize,
        decision: String,
        source: EvalError,
    },
    #[error(transparent)]
    Strategy(#[from] StrategyError),
}

impl ModelError {
    /// Schema-level problems (malformed document) as opposed to violated
    /// model invariants; the CLI maps these to different exit codes.
    pub fn is_schema(&self) -> bool {
        matches!(self, ModelError::Json(_) | ModelError::Schema { .. })
    }
}

/// Strategy validation failures. State numbers in messages are 1-based.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum StrategyError {
    #[error("strategy has {got} components, model has {expected} states")]
    Length { expected: usize, got: usize },
    #[error("decision value outside its space: state {state}, decision {decision}")]
    OutsideSpace { state: usize, decision: String },
    #[error("unknown decision label {label:?} at state {state}")]
    UnknownLabel { state: usize, label: String },
    #[error("empty support at state {state}")]
    EmptySupport { state: usize },
    #[error("negative weight {weight} at state {state}")]
    NegativeWeight { state: usize, weight: f64 },
    #[error("weights sum to {sum} != 1 at state {state}")]
    WeightSum { state: usize, sum: f64 },
    #[error("duplicate support point {point} at state {state}")]
    DuplicateSupport { state: usize, point: f64 },
}

// ── Document schema ─────────────────────────────────────────────────────────

/// On-disk model document (JSON). See the repository README for the format.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub states: usize,
    pub decision_spaces: Vec<SpaceDoc>,
    pub p: Vec<RowsDoc>,
    #[serde(rename = "T")]
    pub sojourn: Vec<ScalarDoc>,
    pub d: Vec<ScalarDoc>,
    /// Optional optimizer configuration; overridden by CLI flags.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub optimize: Option<OptimizerSettingsDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum SpaceDoc {
    Finite { points: Vec<LabeledPoint> },
    Interval {
        low: f64,
        high: f64,
        #[serde(default)]
        low_open: bool,
        #[serde(default)]
        high_open: bool,
    },
}

/// Transition rows of one state: a label-keyed table (finite spaces) or
/// one expression string per target state (interval spaces).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RowsDoc {
    Table(BTreeMap<String, Vec<f64>>),
    Exprs(Vec<String>),
}

/// Mean sojourn/reward of one state: label-keyed numbers or one expression.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarDoc {
    Table(BTreeMap<String, f64>),
    Expr(String),
}

/// Optimizer settings embedded in a model document. All fields optional;
/// they override [`crate::optimize::GridConfig`] defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSettingsDoc {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refinement_rounds: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shrink: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub multistart: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub point_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub divergence_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

/// On-disk strategy document: `{"pure": [...]}` or `{"mixed": [...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub enum StrategyDocument {
    #[serde(rename = "pure")]
    Pure(Vec<PointRef>),
    #[serde(rename = "mixed")]
    Mixed(Vec<Vec<SupportRef>>),
}

/// A decision referenced by numeric value or by label.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PointRef {
    Value(f64),
    Label(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupportRef {
    pub point: PointRef,
    pub weight: f64,
}

/// A strategy resolved and validated against a model.
#[derive(Debug, Clone, PartialEq)]
pub enum Strategy {
    Pure(PureStrategy),
    Mixed(MixedStrategy),
}

// ── Loading and validation ──────────────────────────────────────────────────

/// Load a model from its JSON document text, checking every invariant.
pub fn load_model(text: &str) -> Result<SmdpModel, ModelError> {
    let doc: ModelDocument = serde_json::from_str(text)?;
    SmdpModel::from_document(doc)
}

fn schema(message: impl Into<String>) -> ModelError {
    ModelError::Schema {
        message: message.into(),
    }
}

impl SmdpModel {
    pub fn from_document(doc: ModelDocument) -> Result<Self, ModelError> {
        let n = doc.states;
        if n == 0 {
            return Err(schema("states must be at least 1"));
        }
        for (name, len) in [
            ("decision_spaces", doc.decision_spaces.len()),
            ("p", doc.p.len()),
            ("T", doc.sojourn.len()),
            ("d", doc.d.len()),
        ] {
            if len != n {
                return Err(schema(format!(
                    "{name} has {len} entries, expected one per state ({n})"
                )));
            }
        }

        let mut spaces = Vec::with_capacity(n);
        for (i, sd) in doc.decision_spaces.iter().enumerate() {
            spaces.push(space_from_doc(i, sd)?);
        }

        let mut chars = Vec::with_capacity(n);
        for i in 0..n {
            let state_chars = match &spaces[i] {
                DecisionSpace::Finite(points) => {
                    load_table_state(i, n, points, &doc.p[i], &doc.sojourn[i], &doc.d[i])?
                }
                DecisionSpace::Interval { .. } => {
                    load_expr_state(i, n, &doc.p[i], &doc.sojourn[i], &doc.d[i])?
                }
            };
            chars.push(state_chars);
        }

        let model = SmdpModel {
            spaces,
            chars,
            optimizer_settings: doc.optimize,
        };
        model.validate_characteristics()?;
        Ok(model)
    }

    /// Re-emit the document form; loading it back yields an equal model.
    pub fn to_document(&self) -> ModelDocument {
        let spaces = self
            .spaces
            .iter()
            .map(|s| match s {
                DecisionSpace::Finite(points) => SpaceDoc::Finite {
                    points: points.clone(),
                },
                DecisionSpace::Interval {
                    low,
                    high,
                    low_open,
                    high_open,
                } => SpaceDoc::Interval {
                    low: *low,
                    high: *high,
                    low_open: *low_open,
                    high_open: *high_open,
                },
            })
            .collect();
        let mut p = Vec::new();
        let mut sojourn = Vec::new();
        let mut reward = Vec::new();
        for (i, chars) in self.chars.iter().enumerate() {
            match chars {
                StateChars::Table {
                    rows,
                    sojourn: t,
                    reward: d,
                } => {
                    let points = match &self.spaces[i] {
                        DecisionSpace::Finite(points) => points,
                        DecisionSpace::Interval { .. } => unreachable!("table state, interval space"),
                    };
                    let row_table: BTreeMap<String, Vec<f64>> = points
                        .iter()
                        .enumerate()
                        .map(|(k, pt)| (pt.label.clone(), rows[k].clone()))
                        .collect();
                    let t_table: BTreeMap<String, f64> = points
                        .iter()
                        .enumerate()
                        .map(|(k, pt)| (pt.label.clone(), t[k]))
                        .collect();
                    let d_table: BTreeMap<String, f64> = points
                        .iter()
                        .enumerate()
                        .map(|(k, pt)| (pt.label.clone(), d[k]))
                        .collect();
                    p.push(RowsDoc::Table(row_table));
                    sojourn.push(ScalarDoc::Table(t_table));
                    reward.push(ScalarDoc::Table(d_table));
                }
                StateChars::Expr {
                    rows,
                    sojourn: t,
                    reward: d,
                } => {
                    p.push(RowsDoc::Exprs(rows.iter().map(|e| e.to_string()).collect()));
                    sojourn.push(ScalarDoc::Expr(t.to_string()));
                    reward.push(ScalarDoc::Expr(d.to_string()));
                }
            }
        }
        ModelDocument {
            states: self.state_count(),
            decision_spaces: spaces,
            p,
            sojourn,
            d: reward,
            optimize: self.optimizer_settings.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("document serialization")
    }

    pub fn state_count(&self) -> usize {
        self.spaces.len()
    }

    pub fn spaces(&self) -> &[DecisionSpace] {
        &self.spaces
    }

    pub fn optimizer_settings(&self) -> Option<&OptimizerSettingsDoc> {
        self.optimizer_settings.as_ref()
    }

    /// True when every decision space is finite.
    pub fn is_finite(&self) -> bool {
        self.spaces
            .iter()
            .all(|s| matches!(s, DecisionSpace::Finite(_)))
    }

    // Spot-check invariants that cannot be verified symbolically: row sums,
    // probability signs, sojourn positivity, and reward finiteness at every
    // tabulated point, and on a sampled grid for interval states. The
    // sampling check is a check, not a proof.
    fn validate_characteristics(&self) -> Result<(), ModelError> {
        for i in 0..self.state_count() {
            match &self.spaces[i] {
                DecisionSpace::Finite(points) => {
                    for pt in points {
                        self.check_state_at(i, pt.value, &pt.label)?;
                    }
                }
                DecisionSpace::Interval {
                    low,
                    high,
                    low_open,
                    high_open,
                } => {
                    let span = high - low;
                    for k in 0..VALIDATION_SAMPLES {
                        let u = low + (k as f64 + 0.5) * span / VALIDATION_SAMPLES as f64;
                        self.check_state_at(i, u, &format!("u={u}"))?;
                    }
                    if !low_open {
                        self.check_state_at(i, *low, &format!("u={low}"))?;
                    }
                    if !high_open {
                        self.check_state_at(i, *high, &format!("u={high}"))?;
                    }
                }
            }
        }
        Ok(())
    }

    fn check_state_at(&self, i: usize, u: f64, decision: &str) -> Result<(), ModelError> {
        let (row, t, _) = self.raw_state_at(i, u, decision)?;
        self.validate_row(i, decision, &row, t)
    }

    fn validate_row(&self, i: usize, decision: &str, row: &[f64], t: f64) -> Result<(), ModelError> {
        let mut sum = 0.0;
        for (j, &pij) in row.iter().enumerate() {
            if pij < -NEG_PROB_TOL {
                return Err(ModelError::NegativeProbability {
                    state: i + 1,
                    target: j + 1,
                    decision: decision.to_string(),
                    value: pij,
                });
            }
            sum += pij.max(0.0);
        }
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(ModelError::RowSum {
                state: i + 1,
                decision: decision.to_string(),
                sum,
            });
        }
        if t <= 0.0 {
            return Err(ModelError::NonpositiveSojourn {
                state: i + 1,
                decision: decision.to_string(),
                value: t,
            });
        }
        Ok(())
    }

    // Evaluate the raw (unclamped) characteristics of state `i` at `u`.
    fn raw_state_at(&self, i: usize, u: f64, decision: &str) -> Result<(Vec<f64>, f64, f64), ModelError> {
        match &self.chars[i] {
            StateChars::Table {
                rows,
                sojourn,
                reward,
            } => {
                let k = self.point_index(i, u).ok_or(StrategyError::OutsideSpace {
                    state: i + 1,
                    decision: decision.to_string(),
                })?;
                Ok((rows[k].clone(), sojourn[k], reward[k]))
            }
            StateChars::Expr {
                rows,
                sojourn,
                reward,
            } => {
                let eval = |e: &Expr| -> Result<f64, ModelError> {
                    e.eval(u).map_err(|source| ModelError::CharacteristicEval {
                        state: i + 1,
                        decision: decision.to_string(),
                        source,
                    })
                };
                let row: Vec<f64> = rows.iter().map(&eval).collect::<Result<_, _>>()?;
                Ok((row, eval(sojourn)?, eval(reward)?))
            }
        }
    }

    // Index of the tabulated point matching value `u`, if any.
    fn point_index(&self, i: usize, u: f64) -> Option<usize> {
        match &self.spaces[i] {
            DecisionSpace::Finite(points) => {
                let mut best: Option<(usize, f64)> = None;
                for (k, pt) in points.iter().enumerate() {
                    let dist = (u - pt.value).abs();
                    if best.map_or(true, |(_, d)| dist < d) {
                        best = Some((k, dist));
                    }
                }
                best.and_then(|(k, dist)| {
                    let scale = points[k].value.abs().max(1.0);
                    (dist <= POINT_MATCH_TOL * scale).then_some(k)
                })
            }
            DecisionSpace::Interval { .. } => None,
        }
    }

    // ── Strategy validation and resolution ──────────────────────────────────

    pub fn validate_pure(&self, s: &PureStrategy) -> Result<(), StrategyError> {
        if s.values.len() != self.state_count() {
            return Err(StrategyError::Length {
                expected: self.state_count(),
                got: s.values.len(),
            });
        }
        for (i, &u) in s.values.iter().enumerate() {
            if !self.spaces[i].contains(u) {
                return Err(StrategyError::OutsideSpace {
                    state: i + 1,
                    decision: format!("{u}"),
                });
            }
        }
        Ok(())
    }

    pub fn validate_mixed(&self, m: &MixedStrategy) -> Result<(), StrategyError> {
        if m.per_state.len() != self.state_count() {
            return Err(StrategyError::Length {
                expected: self.state_count(),
                got: m.per_state.len(),
            });
        }
        for (i, support) in m.per_state.iter().enumerate() {
            if support.is_empty() {
                return Err(StrategyError::EmptySupport { state: i + 1 });
            }
            let mut sum = 0.0;
            for sp in support {
                if sp.weight < 0.0 {
                    return Err(StrategyError::NegativeWeight {
                        state: i + 1,
                        weight: sp.weight,
                    });
                }
                if !self.spaces[i].contains(sp.point) {
                    return Err(StrategyError::OutsideSpace {
                        state: i + 1,
                        decision: format!("{}", sp.point),
                    });
                }
                sum += sp.weight;
            }
            if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
                return Err(StrategyError::WeightSum {
                    state: i + 1,
                    sum,
                });
            }
            for pair in support.windows(2) {
                if self.same_decision(i, pair[0].point, pair[1].point) {
                    return Err(StrategyError::DuplicateSupport {
                        state: i + 1,
                        point: pair[1].point,
                    });
                }
            }
        }
        Ok(())
    }

    // Two support values denote the same decision if they resolve to one
    // tabulated point (finite spaces) or are exactly equal (intervals).
    fn same_decision(&self, i: usize, a: f64, b: f64) -> bool {
        match self.point_index(i, a) {
            Some(ka) => self.point_index(i, b) == Some(ka),
            None => a == b,
        }
    }

    /// Resolve a strategy document against this model, validating it.
    pub fn strategy_from_document(&self, doc: &StrategyDocument) -> Result<Strategy, StrategyError> {
        match doc {
            StrategyDocument::Pure(refs) => {
                if refs.len() != self.state_count() {
                    return Err(StrategyError::Length {
                        expected: self.state_count(),
                        got: refs.len(),
                    });
                }
                let values = refs
                    .iter()
                    .enumerate()
                    .map(|(i, r)| self.resolve_point(i, r))
                    .collect::<Result<Vec<_>, _>>()?;
                let s = PureStrategy::new(values);
                self.validate_pure(&s)?;
                Ok(Strategy::Pure(s))
            }
            StrategyDocument::Mixed(states) => {
                if states.len() != self.state_count() {
                    return Err(StrategyError::Length {
                        expected: self.state_count(),
                        got: states.len(),
                    });
                }
                let mut per_state = Vec::with_capacity(states.len());
                for (i, support) in states.iter().enumerate() {
                    let mut resolved: Vec<SupportPoint> = support
                        .iter()
                        .map(|sr| {
                            Ok(SupportPoint {
                                point: self.resolve_point(i, &sr.point)?,
                                weight: sr.weight,
                            })
                        })
                        .collect::<Result<_, StrategyError>>()?;
                    resolved.sort_by(|a, b| a.point.total_cmp(&b.point));
                    per_state.push(resolved);
                }
                let m = MixedStrategy { per_state };
                self.validate_mixed(&m)?;
                Ok(Strategy::Mixed(m))
            }
        }
    }

    fn resolve_point(&self, i: usize, r: &PointRef) -> Result<f64, StrategyError> {
        match r {
            PointRef::Value(v) => Ok(*v),
            PointRef::Label(label) => match &self.spaces[i] {
                DecisionSpace::Finite(points) => points
                    .iter()
                    .find(|p| p.label == *label)
                    .map(|p| p.value)
                    .ok_or_else(|| StrategyError::UnknownLabel {
                        state: i + 1,
                        label: label.clone(),
                    }),
                DecisionSpace::Interval { .. } => Err(StrategyError::UnknownLabel {
                    state: i + 1,
                    label: label.clone(),
                }),
            },
        }
    }

    // ── Characteristics ──────────────────────────────────────────────────────

    /// Evaluate `(P, T, d)` at a pure strategy. Tiny negative probabilities
    /// are clamped to zero; the row-sum and sojourn-sign invariants are
    /// re-checked at the evaluated point.
    pub fn kernel_at(&self, s: &PureStrategy) -> Result<Kernel, ModelError> {
        self.validate_pure(s)?;
        let n = self.state_count();
        let mut p = DMatrix::zeros(n, n);
        let mut sojourn = DVector::zeros(n);
        let mut reward = DVector::zeros(n);
        for i in 0..n {
            let u = s.values[i];
            let decision = self.decision_name(i, u);
            let (row, t, d) = self.raw_state_at(i, u, &decision)?;
            self.validate_row(i, &decision, &row, t)?;
            for j in 0..n {
                p[(i, j)] = row[j].max(0.0);
            }
            sojourn[i] = t;
            reward[i] = d;
        }
        Ok(Kernel { p, sojourn, reward })
    }

    /// Strategy-averaged characteristics `(P̄, T̄, d̄)`: per-state weighted
    /// sums of the pointwise characteristics over the mixed support.
    pub fn mixed_characteristics(&self, m: &MixedStrategy) -> Result<Kernel, ModelError> {
        self.validate_mixed(m)?;
        let n = self.state_count();
        let mut p = DMatrix::zeros(n, n);
        let mut sojourn = DVector::zeros(n);
        let mut reward = DVector::zeros(n);
        for i in 0..n {
            for sp in &m.per_state[i] {
                let decision = self.decision_name(i, sp.point);
                let (row, t, d) = self.raw_state_at(i, sp.point, &decision)?;
                self.validate_row(i, &decision, &row, t)?;
                for j in 0..n {
                    p[(i, j)] += sp.weight * row[j].max(0.0);
                }
                sojourn[i] += sp.weight * t;
                reward[i] += sp.weight * d;
            }
            let sum: f64 = p.row(i).sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(ModelError::RowSum {
                    state: i + 1,
                    decision: "averaged".to_string(),
                    sum,
                });
            }
        }
        Ok(Kernel { p, sojourn, reward })
    }

    /// Validated characteristics of one state at one decision: the clamped
    /// transition row, mean sojourn, and mean reward increment.
    pub fn characteristics_at(&self, i: usize, u: f64) -> Result<(Vec<f64>, f64, f64), ModelError> {
        let decision = self.decision_name(i, u);
        let (mut row, t, d) = self.raw_state_at(i, u, &decision)?;
        self.validate_row(i, &decision, &row, t)?;
        for x in &mut row {
            *x = x.max(0.0);
        }
        Ok((row, t, d))
    }

    /// Human-readable name for a decision value in state `i` (its label for
    /// tabulated points, otherwise the numeric value).
    pub fn decision_name(&self, i: usize, u: f64) -> String {
        match (&self.spaces[i], self.point_index(i, u)) {
            (DecisionSpace::Finite(points), Some(k)) => points[k].label.clone(),
            _ => format!("u={u}"),
        }
    }
}

fn space_from_doc(i: usize, sd: &SpaceDoc) -> Result<DecisionSpace, ModelError> {
    match sd {
        SpaceDoc::Finite { points } => {
            if points.is_empty() {
                return Err(ModelError::Space {
                    state: i + 1,
                    message: "finite space needs at least one point".to_string(),
                });
            }
            for pair in points.windows(2) {
                if pair[1].value <= pair[0].value {
                    return Err(ModelError::Space {
                        state: i + 1,
                        message: format!(
                            "points not in strictly ascending order: {} then {}",
                            pair[0].value, pair[1].value
                        ),
                    });
                }
            }
            let mut labels: Vec<&str> = points.iter().map(|p| p.label.as_str()).collect();
            labels.sort_unstable();
            if labels.windows(2).any(|w| w[0] == w[1]) {
                return Err(ModelError::Space {
                    state: i + 1,
                    message: "duplicate point labels".to_string(),
                });
            }
            Ok(DecisionSpace::Finite(points.clone()))
        }
        SpaceDoc::Interval {
            low,
            high,
            low_open,
            high_open,
        } => {
            if !(low < high) || !low.is_finite() || !high.is_finite() {
                return Err(ModelError::Space {
                    state: i + 1,
                    message: format!("interval requires finite low < high, got [{low}, {high}]"),
                });
            }
            Ok(DecisionSpace::Interval {
                low: *low,
                high: *high,
                low_open: *low_open,
                high_open: *high_open,
            })
        }
    }
}

fn load_table_state(
    i: usize,
    n: usize,
    points: &[LabeledPoint],
    p: &RowsDoc,
    t: &ScalarDoc,
    d: &ScalarDoc,
) -> Result<StateChars, ModelError> {
    let row_table = match p {
        RowsDoc::Table(tbl) => tbl,
        RowsDoc::Exprs(_) => {
            return Err(schema(format!(
                "state {} has a finite space; p must be a label-keyed table",
                i + 1
            )))
        }
    };
    let t_table = scalar_table(i, "T", t)?;
    let d_table = scalar_table(i, "d", d)?;

    let mut rows = Vec::with_capacity(points.len());
    let mut sojourn = Vec::with_capacity(points.len());
    let mut reward = Vec::with_capacity(points.len());
    for pt in points {
        let row = row_table.get(&pt.label).ok_or_else(|| {
            schema(format!(
                "p table of state {} is missing decision {:?}",
                i + 1,
                pt.label
            ))
        })?;
        if row.len() != n {
            return Err(schema(format!(
                "p row of state {}, decision {:?} has {} entries, expected {}",
                i + 1,
                pt.label,
                row.len(),
                n
            )));
        }
        // Clamp tiny negatives at load so tables round-trip as stored.
        let clamped: Vec<f64> = row
            .iter()
            .map(|&x| if x < 0.0 && x >= -NEG_PROB_TOL { 0.0 } else { x })
            .collect();
        rows.push(clamped);
        sojourn.push(*lookup(t_table, i, "T", &pt.label)?);
        reward.push(*lookup(d_table, i, "d", &pt.label)?);
    }
    for (name, table) in [("p", row_table.len()), ("T", t_table.len()), ("d", d_table.len())] {
        if table != points.len() {
            return Err(schema(format!(
                "{name} table of state {} has {} entries, expected {}",
                i + 1,
                table,
                points.len()
            )));
        }
    }
    Ok(StateChars::Table {
        rows,
        sojourn,
        reward,
    })
}

fn scalar_table<'a>(
    i: usize,
    field: &str,
    doc: &'a ScalarDoc,
) -> Result<&'a BTreeMap<String, f64>, ModelError> {
    match doc {
        ScalarDoc::Table(t) => Ok(t),
        ScalarDoc::Expr(_) => Err(schema(format!(
            "state {} has a finite space; {field} must be a label-keyed table",
            i + 1
        ))),
    }
}

fn lookup<'a>(
    table: &'a BTreeMap<String, f64>,
    i: usize,
    field: &str,
    label: &str,
) -> Result<&'a f64, ModelError> {
    table.get(label).ok_or_else(|| {
        schema(format!(
            "{field} table of state {} is missing decision {:?}",
            i + 1,
            label
        ))
    })
}

fn load_expr_state(
    i: usize,
    n: usize,
    p: &RowsDoc,
    t: &ScalarDoc,
    d: &ScalarDoc,
) -> Result<StateChars, ModelError> {
    let row_texts = match p {
        RowsDoc::Exprs(texts) => texts,
        RowsDoc::Table(_) => {
            return Err(schema(format!(
                "state {} has an interval space; p must be a list of expression strings",
                i + 1
            )))
        }
    };
    if row_texts.len() != n {
        return Err(schema(format!(
            "p expressions of state {} have {} entries, expected {}",
            i + 1,
            row_texts.len(),
            n
        )));
    }
    let parse = |field: String, text: &str| -> Result<Expr, ModelError> {
        exprlang::parse(text).map_err(|source| ModelError::ExprParse {
            state: i + 1,
            field,
            source,
        })
    };
    let rows = row_texts
        .iter()
        .enumerate()
        .map(|(j, text)| parse(format!("p[{}]", j + 1), text))
        .collect::<Result<Vec<_>, _>>()?;
    let sojourn = match t {
        ScalarDoc::Expr(text) => parse("T".to_string(), text)?,
        ScalarDoc::Table(_) => {
            return Err(schema(format!(
                "state {} has an interval space; T must be an expression string",
                i + 1
            )))
        }
    };
    let reward = match d {
        ScalarDoc::Expr(text) => parse("d".to_string(), text)?,
        ScalarDoc::Table(_) => {
            return Err(schema(format!(
                "state {} has an interval space; d must be an expression string",
                i + 1
            )))
        }
    };
    Ok(StateChars::Expr {
        rows,
        sojourn,
        reward,
    })
}

/// Parse a strategy document from JSON text.
pub fn load_strategy(text: &str) -> Result<StrategyDocument, serde_json::Error> {
    serde_json::from_str(text)
}

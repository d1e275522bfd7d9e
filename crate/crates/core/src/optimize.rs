//! Global optimization of the test function `C` over the product decision
//! space, with the three-way outcome classification: extremum attained,
//! ε-optimal (supremum approached but not attained), or unbounded.
//!
//! Finite models are enumerated exhaustively, so their result is exact.
//! Interval axes go through a coarse grid scan, multistart, and a per-axis
//! shrinking pattern search; that pipeline is a robust derivative-free
//! heuristic, not a global guarantee, and interval results are marked with
//! `heuristic_global`. Open endpoints get special treatment: when the
//! incumbent's distance to an open endpoint keeps shrinking by the grid
//! shrink factor, the search switches to a geometric approach along that
//! axis and either certifies an ε-optimal point against the extrapolated
//! supremum (Aitken Δ² over the last three values) or reports divergence
//! with a strictly monotone witness sequence once the divergence threshold
//! is crossed.
//!
//! Everything is deterministic: grid evaluation uses a fixed-order parallel
//! reduction, ties break toward the lexicographically smallest point, and
//! repeated runs with the same inputs yield identical outcomes regardless
//! of worker count.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde_json::json;
use thiserror::Error;

use crate::measures;
use crate::model::{DecisionSpace, MixedStrategy, OptimizerSettingsDoc, PureStrategy, SmdpModel};
use crate::testfn;

/// Hard cap on full product enumeration for finite models.
pub const ENUMERATION_BOUND: u128 = 100_000_000;
/// Hard cap on the coarse grid size; interval axes are thinned to fit.
pub const COARSE_CAP: u128 = 1_000_000;

const MAX_SWEEPS_PER_ROUND: usize = 32;
const MAX_EXTENSION_STEPS: usize = 600;
const CHUNK: usize = 8192;

/// Direction of optimization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

impl Sense {
    fn better(self, a: f64, b: f64) -> bool {
        match self {
            Sense::Maximize => a > b,
            Sense::Minimize => a < b,
        }
    }

    fn worst(self) -> f64 {
        match self {
            Sense::Maximize => f64::NEG_INFINITY,
            Sense::Minimize => f64::INFINITY,
        }
    }
}

/// Search configuration. Defaults follow the artifact conventions; model
/// documents and CLI flags may override individual fields.
#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    /// Initial grid points per interval dimension.
    pub initial_points: usize,
    /// Number of step-shrinking refinement rounds.
    pub refinement_rounds: usize,
    /// Per-round step shrink factor, in (0, 1).
    pub shrink: f64,
    /// How many of the best coarse points seed local searches.
    pub multistart: usize,
    /// Stop refining an axis once its step is below this.
    pub point_tol: f64,
    /// |C| beyond this with monotone growth classifies as unbounded.
    pub divergence_threshold: f64,
    /// ε for ε-optimality certificates.
    pub epsilon: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            initial_points: 64,
            refinement_rounds: 6,
            shrink: 0.25,
            multistart: 8,
            point_tol: 1e-10,
            divergence_threshold: 1e12,
            epsilon: 1e-6,
        }
    }
}

impl GridConfig {
    /// Overlay the optional settings from a model document.
    pub fn with_overrides(mut self, doc: &OptimizerSettingsDoc) -> Self {
        if let Some(v) = doc.initial_points {
            self.initial_points = v;
        }
        if let Some(v) = doc.refinement_rounds {
            self.refinement_rounds = v;
        }
        if let Some(v) = doc.shrink {
            self.shrink = v;
        }
        if let Some(v) = doc.multistart {
            self.multistart = v;
        }
        if let Some(v) = doc.point_tol {
            self.point_tol = v;
        }
        if let Some(v) = doc.divergence_threshold {
            self.divergence_threshold = v;
        }
        if let Some(v) = doc.epsilon {
            self.epsilon = v;
        }
        self
    }

    pub fn validate(&self) -> Result<(), OptimizeError> {
        let positive = [
            ("initial_points", self.initial_points as f64),
            ("refinement_rounds", self.refinement_rounds as f64),
            ("multistart", self.multistart as f64),
            ("point_tol", self.point_tol),
            ("divergence_threshold", self.divergence_threshold),
            ("epsilon", self.epsilon),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(OptimizeError::BadConfig {
                    message: format!("{name} must be positive, got {v}"),
                });
            }
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(OptimizeError::BadConfig {
                message: format!("shrink must lie in (0, 1), got {}", self.shrink),
            });
        }
        Ok(())
    }
}

/// The three-way classification of an optimization run.
#[derive(Debug, Clone, PartialEq)]
pub enum OptimizationOutcome {
    /// The extremum is attained at `point`; `value` is `C(point)` exactly and
    /// `strategy` the degenerate strategy concentrated there.
    Attained {
        point: PureStrategy,
        value: f64,
        strategy: MixedStrategy,
    },
    /// The extremum is approached but not attained; `point` satisfies the
    /// strict double inequality `sup − ε < C(point) < sup` (mirrored for
    /// minimization) against the extrapolated bound `sup_estimate`.
    EpsOptimal {
        point: PureStrategy,
        value: f64,
        sup_estimate: f64,
        epsilon: f64,
    },
    /// `C` is unbounded in the optimization direction; `witness` is a
    /// strictly monotone sequence of evaluations crossing the divergence
    /// threshold.
    Unbounded { witness: Vec<(PureStrategy, f64)> },
}

/// An outcome plus run metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationReport {
    pub outcome: OptimizationOutcome,
    pub sense: Sense,
    /// Total test-function evaluations performed.
    pub evaluations: u64,
    pub wall_time: Duration,
    /// True when any axis is an interval: global optimality is then
    /// heuristic, not exhaustive.
    pub heuristic_global: bool,
    /// Winning start's incumbent value at the end of each refinement round.
    pub round_values: Vec<f64>,
}

impl OptimizationReport {
    pub fn kind(&self) -> &'static str {
        match self.outcome {
            OptimizationOutcome::Attained { .. } => "attained",
            OptimizationOutcome::EpsOptimal { .. } => "eps_optimal",
            OptimizationOutcome::Unbounded { .. } => "unbounded",
        }
    }

    /// The stable JSON artifact (wall time deliberately excluded so equal
    /// inputs produce byte-identical output).
    pub fn to_json_value(&self) -> serde_json::Value {
        let mut obj = json!({
            "kind": self.kind(),
            "evaluations": self.evaluations,
            "heuristic_global": self.heuristic_global,
        });
        let map = obj.as_object_mut().expect("object literal");
        match &self.outcome {
            OptimizationOutcome::Attained { point, value, .. } => {
                map.insert("point".into(), json!(point.values));
                map.insert("value".into(), json!(value));
            }
            OptimizationOutcome::EpsOptimal {
                point,
                value,
                sup_estimate,
                epsilon,
            } => {
                map.insert("point".into(), json!(point.values));
                map.insert("value".into(), json!(value));
                map.insert("sup_estimate".into(), json!(sup_estimate));
                map.insert("epsilon".into(), json!(epsilon));
            }
            OptimizationOutcome::Unbounded { witness } => {
                let (last_point, last_value) = witness.last().expect("nonempty witness");
                map.insert("point".into(), json!(last_point.values));
                map.insert("value".into(), json!(last_value));
                let entries: Vec<serde_json::Value> = witness
                    .iter()
                    .map(|(p, v)| json!({"point": p.values, "value": v}))
                    .collect();
                map.insert("witness".into(), json!(entries));
            }
        }
        obj
    }
}

#[derive(Debug, Error)]
pub enum OptimizeError {
    #[error("optimize_finite requires finite decision spaces; state {state} has an interval")]
    NotFinite { state: usize },
    #[error("product enumeration needs {points} evaluations, bound is {bound}")]
    EnumerationBound { points: u128, bound: u128 },
    #[error("{failed} of {total} grid evaluations failed (more than half); first failure: {sample}")]
    TooManyFailures {
        failed: usize,
        total: usize,
        sample: String,
    },
    #[error("invalid configuration: {message}")]
    BadConfig { message: String },
}

// ── Shared evaluation plumbing ──────────────────────────────────────────────

struct Evaluator<'a> {
    model: &'a SmdpModel,
    count: AtomicU64,
    first_failure: std::sync::Mutex<Option<String>>,
}

impl<'a> Evaluator<'a> {
    fn new(model: &'a SmdpModel) -> Self {
        Evaluator {
            model,
            count: AtomicU64::new(0),
            first_failure: std::sync::Mutex::new(None),
        }
    }

    fn eval(&self, values: &[f64]) -> Option<f64> {
        self.count.fetch_add(1, Ordering::Relaxed);
        match testfn::integrands(self.model, &PureStrategy::new(values.to_vec())) {
            Ok(eval) => Some(eval.c),
            Err(e) => {
                let mut slot = self.first_failure.lock().expect("failure slot");
                if slot.is_none() {
                    *slot = Some(e.to_string());
                }
                None
            }
        }
    }

    fn failure_sample(&self) -> String {
        self.first_failure
            .lock()
            .expect("failure slot")
            .clone()
            .unwrap_or_else(|| "none recorded".to_string())
    }
}

// Lexicographic comparison of candidate points; finite-axis values are
// ascending in the point index, so value order equals index order.
fn lex_smaller(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Less => return true,
            std::cmp::Ordering::Greater => return false,
            std::cmp::Ordering::Equal => {}
        }
    }
    false
}

// Strict improvement, with lexicographic tie-breaking on equal values.
fn improves(sense: Sense, value: f64, point: &[f64], best: f64, best_point: &[f64]) -> bool {
    if sense.better(value, best) {
        return true;
    }
    value == best && lex_smaller(point, best_point)
}

// ── optimize_finite ─────────────────────────────────────────────────────────

/// Exact global optimization over a fully finite decision space by complete
/// enumeration. Ties break toward the lexicographically smallest index
/// vector (enumeration order is lexicographic, so the first strict optimum
/// wins).
pub fn optimize_finite(model: &SmdpModel, sense: Sense) -> Result<OptimizationReport, OptimizeError> {
    let started = Instant::now();
    let mut axis_values: Vec<Vec<f64>> = Vec::new();
    for (i, space) in model.spaces().iter().enumerate() {
        match space {
            DecisionSpace::Finite(points) => {
                axis_values.push(points.iter().map(|p| p.value).collect());
            }
            DecisionSpace::Interval { .. } => {
                return Err(OptimizeError::NotFinite { state: i + 1 })
            }
        }
    }
    let total: u128 = axis_values.iter().map(|v| v.len() as u128).product();
    if total > ENUMERATION_BOUND {
        return Err(OptimizeError::EnumerationBound {
            points: total,
            bound: ENUMERATION_BOUND,
        });
    }

    let evaluator = Evaluator::new(model);
    let sizes: Vec<usize> = axis_values.iter().map(Vec::len).collect();
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut failed = 0usize;
    let mut combo = vec![0usize; sizes.len()];
    let mut values = vec![0.0f64; sizes.len()];
    'outer: loop {
        for (axis, &k) in combo.iter().enumerate() {
            values[axis] = axis_values[axis][k];
        }
        match evaluator.eval(&values) {
            Some(c) => {
                let take = match &best {
                    None => true,
                    Some((_, bc)) => sense.better(c, *bc),
                };
                if take {
                    best = Some((values.clone(), c));
                }
            }
            None => failed += 1,
        }
        // Lexicographic odometer: last axis fastest.
        let mut axis = sizes.len();
        loop {
            if axis == 0 {
                break 'outer;
            }
            axis -= 1;
            combo[axis] += 1;
            if combo[axis] < sizes[axis] {
                break;
            }
            combo[axis] = 0;
        }
    }

    let total = total as usize;
    if failed * 2 > total || best.is_none() {
        return Err(OptimizeError::TooManyFailures {
            failed,
            total,
            sample: evaluator.failure_sample(),
        });
    }
    let (point_values, value) = best.expect("checked above");
    let point = PureStrategy::new(point_values);
    let strategy = measures::degenerate(&point);
    Ok(OptimizationReport {
        outcome: OptimizationOutcome::Attained {
            point,
            value,
            strategy,
        },
        sense,
        evaluations: evaluator.count.load(Ordering::Relaxed),
        wall_time: started.elapsed(),
        heuristic_global: false,
        round_values: vec![value],
    })
}

// ── optimize_box ────────────────────────────────────────────────────────────

#[derive(Debug, Clone)]
enum Axis {
    Finite(Vec<f64>),
    Interval {
        low: f64,
        high: f64,
        low_open: bool,
        high_open: bool,
    },
}

impl Axis {
    fn contains(&self, u: f64) -> bool {
        match self {
            Axis::Finite(values) => values.iter().any(|&v| v == u),
            Axis::Interval {
                low,
                high,
                low_open,
                high_open,
            } => {
                (if *low_open { u > *low } else { u >= *low })
                    && (if *high_open { u < *high } else { u <= *high })
            }
        }
    }
}

/// Global optimization over mixed finite/interval spaces: coarse grid scan,
/// multistart shrinking pattern search, and outcome classification.
pub fn optimize_box(
    model: &SmdpModel,
    sense: Sense,
    cfg: &GridConfig,
) -> Result<OptimizationReport, OptimizeError> {
    cfg.validate()?;
    let started = Instant::now();

    let axes: Vec<Axis> = model
        .spaces()
        .iter()
        .map(|space| match space {
            DecisionSpace::Finite(points) => Axis::Finite(points.iter().map(|p| p.value).collect()),
            DecisionSpace::Interval {
                low,
                high,
                low_open,
                high_open,
            } => Axis::Interval {
                low: *low,
                high: *high,
                low_open: *low_open,
                high_open: *high_open,
            },
        })
        .collect();
    let heuristic_global = axes.iter().any(|a| matches!(a, Axis::Interval { .. }));

    let candidates = coarse_candidates(&axes, cfg)?;
    let evaluator = Evaluator::new(model);

    let scan = coarse_scan(&evaluator, &candidates, sense, cfg.multistart.max(1))?;

    // Local refinement from each start, sequential and in rank order.
    let base_steps: Vec<f64> = axes
        .iter()
        .zip(&candidates)
        .map(|(axis, cands)| match axis {
            Axis::Finite(_) => 0.0,
            Axis::Interval { low, high, .. } => (high - low) / cands.len() as f64,
        })
        .collect();

    let mut winner: Option<SearchResult> = None;
    for start in &scan.starts {
        let result = pattern_search(&evaluator, &axes, &base_steps, start.clone(), sense, cfg);
        let take = match &winner {
            None => true,
            Some(w) => improves(sense, result.value, &result.point, w.value, &w.point),
        };
        if take {
            winner = Some(result);
        }
    }
    let winner = winner.expect("at least one start exists");

    let outcome = classify(&evaluator, &axes, winner.clone(), sense, cfg);
    Ok(OptimizationReport {
        outcome,
        sense,
        evaluations: evaluator.count.load(Ordering::Relaxed),
        wall_time: started.elapsed(),
        heuristic_global,
        round_values: winner.round_values,
    })
}

fn coarse_candidates(axes: &[Axis], cfg: &GridConfig) -> Result<Vec<Vec<f64>>, OptimizeError> {
    let mut per_axis: Vec<usize> = axes
        .iter()
        .map(|a| match a {
            Axis::Finite(values) => values.len(),
            Axis::Interval { .. } => cfg.initial_points.max(1),
        })
        .collect();

    // Thin interval axes until the product fits the cap.
    loop {
        let total: u128 = per_axis.iter().map(|&m| m as u128).product();
        if total <= COARSE_CAP {
            break;
        }
        let mut reducible: Option<usize> = None;
        for (i, axis) in axes.iter().enumerate() {
            if matches!(axis, Axis::Interval { .. }) && per_axis[i] > 3 {
                let is_bigger = reducible.map_or(true, |r| per_axis[i] > per_axis[r]);
                if is_bigger {
                    reducible = Some(i);
                }
            }
        }
        match reducible {
            Some(i) => per_axis[i] = (per_axis[i] / 2).max(3),
            None => {
                return Err(OptimizeError::EnumerationBound {
                    points: per_axis.iter().map(|&m| m as u128).product(),
                    bound: COARSE_CAP,
                })
            }
        }
    }

    Ok(axes
        .iter()
        .zip(&per_axis)
        .map(|(axis, &m)| match axis {
            Axis::Finite(values) => values.clone(),
            Axis::Interval {
                low,
                high,
                low_open,
                high_open,
            } => interval_grid(*low, *high, *low_open, *high_open, m),
        })
        .collect())
}

// Uniform grid over an interval: inclusive linspace when both endpoints are
// closed, otherwise midpoints plus any closed endpoint.
fn interval_grid(low: f64, high: f64, low_open: bool, high_open: bool, m: usize) -> Vec<f64> {
    let mut grid = Vec::with_capacity(m + 2);
    if !low_open && !high_open && m >= 2 {
        for k in 0..m {
            grid.push(low + (high - low) * k as f64 / (m - 1) as f64);
        }
    } else {
        if !low_open {
            grid.push(low);
        }
        for k in 0..m {
            grid.push(low + (high - low) * (k as f64 + 0.5) / m as f64);
        }
        if !high_open {
            grid.push(high);
        }
    }
    grid
}

struct CoarseScan {
    /// Top starts in rank order: best first, ties lexicographically.
    starts: Vec<SearchState>,
}

#[derive(Debug, Clone)]
struct SearchState {
    point: Vec<f64>,
    value: f64,
}

type SearchStart = SearchState;

fn coarse_scan(
    evaluator: &Evaluator,
    candidates: &[Vec<f64>],
    sense: Sense,
    top_k: usize,
) -> Result<CoarseScan, OptimizeError> {
    let sizes: Vec<usize> = candidates.iter().map(Vec::len).collect();
    let total: usize = sizes.iter().product();

    // Each chunk reports its own top-k (by flat order, so ties resolve to
    // the lexicographically smallest); chunks merge in fixed order, making
    // the result independent of worker count.
    let chunk_results: Vec<(Vec<(usize, f64)>, usize)> = (0..total.div_ceil(CHUNK))
        .into_par_iter()
        .map(|chunk_idx| {
            let lo = chunk_idx * CHUNK;
            let hi = (lo + CHUNK).min(total);
            let mut top: Vec<(usize, f64)> = Vec::with_capacity(top_k + 1);
            let mut failed = 0usize;
            let mut values = vec![0.0f64; sizes.len()];
            for flat in lo..hi {
                decode_flat(flat, &sizes, candidates, &mut values);
                match evaluator.eval(&values) {
                    Some(c) => {
                        let pos = top.partition_point(|&(_, v)| !sense.better(c, v));
                        if pos < top_k {
                            top.insert(pos, (flat, c));
                            top.truncate(top_k);
                        }
                    }
                    None => failed += 1,
                }
            }
            (top, failed)
        })
        .collect();

    let mut merged: Vec<(usize, f64)> = Vec::new();
    let mut failed = 0usize;
    for (top, chunk_failed) in chunk_results {
        failed += chunk_failed;
        for (flat, c) in top {
            let pos = merged.partition_point(|&(_, v)| !sense.better(c, v));
            if pos < top_k {
                merged.insert(pos, (flat, c));
                merged.truncate(top_k);
            }
        }
    }

    if failed * 2 > total || merged.is_empty() {
        return Err(OptimizeError::TooManyFailures {
            failed,
            total,
            sample: evaluator.failure_sample(),
        });
    }

    let starts = merged
        .into_iter()
        .map(|(flat, value)| {
            let mut point = vec![0.0f64; sizes.len()];
            decode_flat(flat, &sizes, candidates, &mut point);
            SearchState { point, value }
        })
        .collect();
    Ok(CoarseScan { starts })
}

// Row-major decode: last axis fastest, so flat order is lexicographic.
fn decode_flat(flat: usize, sizes: &[usize], candidates: &[Vec<f64>], out: &mut [f64]) {
    let mut rem = flat;
    for axis in (0..sizes.len()).rev() {
        out[axis] = candidates[axis][rem % sizes[axis]];
        rem /= sizes[axis];
    }
}

#[derive(Debug, Clone)]
struct SearchResult {
    point: Vec<f64>,
    value: f64,
    /// Incumbent (point, value) at the end of each refinement round.
    rounds: Vec<(Vec<f64>, f64)>,
    round_values: Vec<f64>,
}

fn pattern_search(
    evaluator: &Evaluator,
    axes: &[Axis],
    base_steps: &[f64],
    start: SearchStart,
    sense: Sense,
    cfg: &GridConfig,
) -> SearchResult {
    let n = axes.len();
    let mut x = start.point;
    let mut v = start.value;
    let mut rounds: Vec<(Vec<f64>, f64)> = Vec::with_capacity(cfg.refinement_rounds);

    for round in 0..cfg.refinement_rounds {
        let shrink_pow = cfg.shrink.powi(round as i32);
        let mut geometric_used = vec![false; n];
        for _sweep in 0..MAX_SWEEPS_PER_ROUND {
            let mut improved = false;
            for axis_idx in 0..n {
                let mut cands: Vec<f64> = Vec::new();
                match &axes[axis_idx] {
                    Axis::Finite(values) => {
                        cands.extend(values.iter().copied());
                    }
                    Axis::Interval {
                        low,
                        high,
                        low_open,
                        high_open,
                    } => {
                        let step = base_steps[axis_idx] * shrink_pow;
                        if step < cfg.point_tol {
                            continue;
                        }
                        let cur = x[axis_idx];
                        cands.push(cur - step);
                        cands.push(cur + step);
                        if !low_open {
                            cands.push(*low);
                        }
                        if !high_open {
                            cands.push(*high);
                        }
                        // One geometric move toward each open endpoint per
                        // round: the remaining distance shrinks by exactly
                        // the shrink factor, which is what the endpoint
                        // approach detector looks for.
                        if !geometric_used[axis_idx] {
                            if *low_open && cur > *low {
                                cands.push(*low + (cur - *low) * cfg.shrink);
                            }
                            if *high_open && cur < *high {
                                cands.push(*high - (*high - cur) * cfg.shrink);
                            }
                        }
                    }
                }
                let mut best_move: Option<(f64, f64)> = None;
                for cand in cands {
                    if cand == x[axis_idx] || !axes[axis_idx].contains(cand) {
                        continue;
                    }
                    let mut trial = x.clone();
                    trial[axis_idx] = cand;
                    if let Some(c) = evaluator.eval(&trial) {
                        if !sense.better(c, v) {
                            continue;
                        }
                        let take = match best_move {
                            None => true,
                            Some((bcand, bc)) => sense.better(c, bc) || (c == bc && cand < bcand),
                        };
                        if take {
                            best_move = Some((cand, c));
                        }
                    }
                }
                if let Some((cand, c)) = best_move {
                    // Mark the geometric move as spent when it won.
                    if let Axis::Interval {
                        low,
                        high,
                        low_open,
                        high_open,
                    } = &axes[axis_idx]
                    {
                        let cur = x[axis_idx];
                        let geo_low = *low + (cur - *low) * cfg.shrink;
                        let geo_high = *high - (*high - cur) * cfg.shrink;
                        if (*low_open && cand == geo_low) || (*high_open && cand == geo_high) {
                            geometric_used[axis_idx] = true;
                        }
                    }
                    x[axis_idx] = cand;
                    v = c;
                    improved = true;
                }
            }
            if !improved {
                break;
            }
        }
        rounds.push((x.clone(), v));
    }

    let round_values = rounds.iter().map(|(_, v)| *v).collect();
    SearchResult {
        point: x,
        value: v,
        rounds,
        round_values,
    }
}

// Aitken Δ² extrapolation of a geometrically converging sequence.
fn aitken(a: f64, b: f64, c: f64) -> Option<f64> {
    let d1 = b - a;
    let d2 = c - b;
    let denom = d2 - d1;
    if denom == 0.0 {
        return None;
    }
    let limit = c - d2 * d2 / denom;
    limit.is_finite().then_some(limit)
}

// Strict double inequality of the ε-certificate.
fn certifies(sense: Sense, value: f64, bound: f64, epsilon: f64) -> bool {
    match sense {
        Sense::Maximize => bound - epsilon < value && value < bound,
        Sense::Minimize => bound < value && value < bound + epsilon,
    }
}

fn beyond_threshold(sense: Sense, value: f64, threshold: f64) -> bool {
    match sense {
        Sense::Maximize => value > threshold,
        Sense::Minimize => value < -threshold,
    }
}

fn classify(
    evaluator: &Evaluator,
    axes: &[Axis],
    winner: SearchResult,
    sense: Sense,
    cfg: &GridConfig,
) -> OptimizationOutcome {
    let attained = |point: Vec<f64>, value: f64| {
        let point = PureStrategy::new(point);
        let strategy = measures::degenerate(&point);
        OptimizationOutcome::Attained {
            point,
            value,
            strategy,
        }
    };

    // Divergence already visible across the refinement rounds.
    if let Some(witness) = monotone_witness(&winner.rounds, sense, cfg.divergence_threshold) {
        return OptimizationOutcome::Unbounded { witness };
    }

    // Open-endpoint approach: the distance to an open endpoint shrank by
    // roughly the shrink factor over the last three rounds.
    let approaching = approaching_axes(axes, &winner.rounds, cfg.shrink);
    if approaching.is_empty() {
        return attained(winner.point, winner.value);
    }

    let mut x = winner.point.clone();
    let mut trail: Vec<(Vec<f64>, f64)> = winner.rounds.clone();
    let mut value = winner.value;
    for _ in 0..MAX_EXTENSION_STEPS {
        let mut moved = false;
        for &(axis_idx, endpoint) in &approaching {
            let cand = endpoint + (x[axis_idx] - endpoint) * cfg.shrink;
            if cand != x[axis_idx] && cand != endpoint && axes[axis_idx].contains(cand) {
                x[axis_idx] = cand;
                moved = true;
            }
        }
        if !moved {
            // Machine precision exhausted before either certificate fired;
            // the best representable point is an attained optimum of the
            // discretized problem.
            return attained(x, value);
        }
        let Some(c) = evaluator.eval(&x) else {
            return attained(trail.last().expect("trail nonempty").0.clone(), value);
        };
        if !sense.better(c, value) {
            // The approach rule misfired: the function stopped improving, so
            // the best point seen so far stands.
            return attained(trail.last().expect("trail nonempty").0.clone(), value);
        }
        trail.push((x.clone(), c));
        value = c;

        if let Some(witness) = monotone_witness(&trail, sense, cfg.divergence_threshold) {
            return OptimizationOutcome::Unbounded { witness };
        }
        let k = trail.len();
        if k >= 3 {
            let (a, b, c3) = (trail[k - 3].1, trail[k - 2].1, trail[k - 1].1);
            if let Some(bound) = aitken(a, b, c3) {
                if certifies(sense, value, bound, cfg.epsilon) {
                    return OptimizationOutcome::EpsOptimal {
                        point: PureStrategy::new(x),
                        value,
                        sup_estimate: bound,
                        epsilon: cfg.epsilon,
                    };
                }
            }
        }
    }
    attained(x, value)
}

// The strictly monotone tail of the evaluation trail, provided its final
// value crosses the divergence threshold and at least three entries grow.
fn monotone_witness(
    trail: &[(Vec<f64>, f64)],
    sense: Sense,
    threshold: f64,
) -> Option<Vec<(PureStrategy, f64)>> {
    let last = trail.last()?;
    if !beyond_threshold(sense, last.1, threshold) {
        return None;
    }
    let mut tail: Vec<(PureStrategy, f64)> = Vec::new();
    let mut floor = sense.worst();
    for (point, value) in trail {
        if sense.better(*value, floor) {
            tail.push((PureStrategy::new(point.clone()), *value));
            floor = *value;
        }
    }
    (tail.len() >= 3).then_some(tail)
}

// Axes whose open-endpoint distance shrank by ~the shrink factor over the
// last three rounds. Returns (axis index, endpoint value) pairs.
fn approaching_axes(axes: &[Axis], rounds: &[(Vec<f64>, f64)], shrink: f64) -> Vec<(usize, f64)> {
    let mut result = Vec::new();
    if rounds.len() < 4 {
        return result;
    }
    let window = &rounds[rounds.len() - 4..];
    for (axis_idx, axis) in axes.iter().enumerate() {
        let Axis::Interval {
            low,
            high,
            low_open,
            high_open,
        } = axis
        else {
            continue;
        };
        let mut endpoints = Vec::new();
        if *low_open {
            endpoints.push(*low);
        }
        if *high_open {
            endpoints.push(*high);
        }
        for endpoint in endpoints {
            let distances: Vec<f64> = window
                .iter()
                .map(|(p, _)| (p[axis_idx] - endpoint).abs())
                .collect();
            let ok = distances.windows(2).all(|w| {
                w[1] > 0.0 && w[1] < w[0] && w[1] / w[0] <= shrink * 1.5
            });
            if ok {
                result.push((axis_idx, endpoint));
            }
        }
    }
    result
}

// ── Certification ───────────────────────────────────────────────────────────

/// Check the strict ε-optimality double inequality at a point:
/// `sup_estimate − ε < C(point) < sup_estimate` for maximization, mirrored
/// (`inf < C < inf + ε`) for minimization. Points where `C` fails to
/// evaluate never certify.
pub fn certify_epsilon(
    model: &SmdpModel,
    point: &PureStrategy,
    epsilon: f64,
    sup_estimate: f64,
    sense: Sense,
) -> bool {
    match testfn::integrands(model, point) {
        Ok(eval) => certifies(sense, eval.c, sup_estimate, epsilon),
        Err(_) => false,
    }
}

/// Run `f` on a dedicated pool of `workers` threads (0 = the global pool).
/// Results are worker-count independent by construction; this only controls
/// resource usage.
pub fn run_with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    if workers == 0 {
        f()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("thread pool")
            .install(f)
    }
}

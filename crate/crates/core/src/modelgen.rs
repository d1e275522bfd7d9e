//! Reproducible random model generation for verification suites.
//!
//! Rows are strictly positive (so the embedded chain is irreducible at every
//! decision combination), sojourn means lie in `[0.1, 10]`, and rewards in
//! `[-10, 10]` — the desk-scale family the cross-route and dominance checks
//! run on.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::model::{load_model, DecisionSpace, PureStrategy, SmdpModel};

/// A random finite model with `n_states` states and 1..=`max_points`
/// decision points per state.
pub fn random_finite_model(rng: &mut ChaCha8Rng, n_states: usize, max_points: usize) -> SmdpModel {
    let point_counts: Vec<usize> = (0..n_states)
        .map(|_| rng.random_range(1..=max_points.max(1)))
        .collect();

    let mut spaces = Vec::with_capacity(n_states);
    let mut p = Vec::with_capacity(n_states);
    let mut t = Vec::with_capacity(n_states);
    let mut d = Vec::with_capacity(n_states);
    for &points in &point_counts {
        let labels: Vec<String> = (0..points).map(|k| format!("u{k}")).collect();
        spaces.push(json!({
            "type": "finite",
            "points": (0..points)
                .map(|k| json!({"label": labels[k], "value": k as f64}))
                .collect::<Vec<_>>()
        }));
        let mut p_tbl = serde_json::Map::new();
        let mut t_tbl = serde_json::Map::new();
        let mut d_tbl = serde_json::Map::new();
        for label in &labels {
            let raw: Vec<f64> = (0..n_states).map(|_| rng.random::<f64>() + 0.05).collect();
            let sum: f64 = raw.iter().sum();
            let row: Vec<f64> = raw.iter().map(|x| x / sum).collect();
            p_tbl.insert(label.clone(), json!(row));
            t_tbl.insert(label.clone(), json!(0.1 + 9.9 * rng.random::<f64>()));
            d_tbl.insert(label.clone(), json!(-10.0 + 20.0 * rng.random::<f64>()));
        }
        p.push(json!(p_tbl));
        t.push(json!(t_tbl));
        d.push(json!(d_tbl));
    }

    let doc = json!({
        "states": n_states,
        "decision_spaces": spaces,
        "p": p,
        "T": t,
        "d": d,
    });
    load_model(&doc.to_string()).expect("generated model is valid by construction")
}

/// A uniformly random pure strategy for `model`.
pub fn random_pure_strategy(rng: &mut ChaCha8Rng, model: &SmdpModel) -> PureStrategy {
    let values = model
        .spaces()
        .iter()
        .map(|space| match space {
            DecisionSpace::Finite(points) => points[rng.random_range(0..points.len())].value,
            DecisionSpace::Interval { low, high, .. } => {
                low + rng.random::<f64>() * (high - low)
            }
        })
        .collect();
    PureStrategy::new(values)
}

/// Convenience seeding used by the verification tooling.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

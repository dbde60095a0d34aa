//! JSON renderings of the core reports.

use serde_json::{json, Map, Value};
use walsh_core::assumptions::AssumptionReport;
use walsh_core::network::NodeIndex;
use walsh_core::solver::{ComparisonReport, SolveReport, StaticSolution};
use walsh_core::spider::EstimatorReport;
use walsh_core::testfn::{StudyRow, TestFunction};

fn node(n: &NodeIndex) -> Value {
    json!({ "ray": n.ray + 1, "level": n.level, "node": n.node })
}

pub fn estimator(r: &EstimatorReport) -> Value {
    let params: Map<String, Value> = r
        .params
        .iter()
        .map(|(k, v)| (k.clone(), json!(v)))
        .collect();
    json!({ "estimate": r.estimate, "std_error": r.std_error, "paths": r.paths, "params": params })
}

pub fn assumptions(r: &AssumptionReport, monotonicity_violations: usize) -> Value {
    let coefficients: Vec<Value> = r
        .coefficients
        .iter()
        .map(|c| json!({ "name": c.name, "min": c.min, "max": c.max, "sup_abs": c.sup_abs, "lip_x": c.lip_x, "lip_l": c.lip_l }))
        .collect();
    json!({
        "all_pass": r.all_pass(),
        "spin_lower_bound": { "pass": r.pass_s, "zeta_lower": r.zeta_lower, "zeta_upper": r.zeta_upper },
        "ellipticity": { "pass": r.pass_e, "sigma_lower": r.sigma_lower, "sigma_upper": r.sigma_upper },
        "regularity": { "pass": r.pass_r, "drift_bound": r.b_bound, "cost_bound": r.h_bound },
        "sample_count": r.sample_count,
        "monotonicity_violations": monotonicity_violations,
        "coefficients": coefficients,
    })
}

pub fn solve(r: &SolveReport) -> Value {
    json!({
        "nx": r.solution.grid().nx(),
        "nl": r.solution.grid().nl(),
        "dl": r.dl,
        "policy_iterations": r.iterations.iter().sum::<usize>(),
        "max_substeps": r.substeps.iter().copied().max().unwrap_or(0),
        "max_interior_residual": r.max_interior_residual,
        "max_kirchhoff_residual": r.max_kirchhoff_residual,
        "vertex_value_at_l0": r.solution.vertex(0),
        "wall_clock_secs": r.wall_clock_secs,
    })
}

pub fn comparison(r: &ComparisonReport) -> Value {
    let trials: Vec<Value> = r
        .trials
        .iter()
        .map(|t| {
            json!({
                "trial": t.trial,
                "slope": t.slope,
                "cost_shift": t.cost_shift,
                "vertex_cost_shift": t.vertex_cost_shift,
                "super_minus_base_min": t.super_vs_base.min_diff,
                "super_minus_base_at": node(&t.super_vs_base.argmin),
                "base_minus_sub_min": t.base_vs_sub.min_diff,
                "base_minus_sub_at": node(&t.base_vs_sub.argmin),
                "shifted_min_residual": t.shifted_min_residual,
                "violated": t.violated,
            })
        })
        .collect();
    json!({ "passed": r.passed(), "failures": r.failures, "worst_margin": r.worst_margin, "worst_location": node(&r.worst_location), "trials": trials })
}

pub fn statics(s: &StaticSolution) -> Value {
    json!({
        "eps": s.eps,
        "windows": s.windows,
        "gaps": s.gaps,
        "l_variation": s.l_variation,
        "vertex_values": s.slices.iter().map(|sl| sl.vertex()).collect::<Vec<_>>(),
        "extrapolated_vertex_value": s.extrapolated.vertex(),
    })
}

/// Certification summary of a solved test function.
pub fn test_function(tf: &TestFunction, checks: &Map<String, Value>) -> Value {
    let mut m = Map::new();
    m.insert("slope".into(), json!(tf.spec.slope));
    m.insert("max_residual".into(), json!(tf.max_residual));
    m.insert("max_abs_psi".into(), json!(tf.max_abs()));
    m.insert("max_abs_derivative".into(), json!(tf.max_abs_derivative()));
    m.insert(
        "flux_identity_defect".into(),
        json!(tf.flux_identity_defect()),
    );
    m.insert(
        "vanishing_deviation".into(),
        json!(tf.vanishing_deviation()),
    );
    m.extend(checks.clone());
    Value::Object(m)
}

pub fn study(rows: &[StudyRow]) -> Value {
    Value::Array(
        rows.iter()
            .map(|r| json!({ "eps": r.eps, "kappa": r.kappa, "eta": r.eta, "gamma": r.gamma, "slope": r.slope, "deviation": r.deviation, "max_residual": r.max_residual }))
            .collect(),
    )
}

//! Complete-information benchmark, Risk of Deception and Value of
//! Information.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::analysis::TypeCost;
use crate::environment::{GoalId, Scenario};

/// Cost of type `g` when the Defender knows the goal: shortest distance plus
/// the initial allocation. `None` when the goal is unreachable.
pub fn complete_info_value(s: &Scenario, g: GoalId) -> Option<f64> {
    let d = s.distance_to_goal(s.start(), g);
    d.is_finite().then(|| d + s.allocation(g))
}

/// Minimum complete-information value over reachable goals.
pub fn overall_complete_info_value(s: &Scenario) -> Option<f64> {
    s.goals()
        .filter_map(|g| {
            let v = complete_info_value(s, g);
            if v.is_none() {
                warn!("goal {} unreachable from the start", s.goal_name(g));
            }
            v
        })
        .reduce(f64::min)
}

/// `(benchmark - value) / benchmark`, with zero for a zero benchmark.
pub fn relative_gain(benchmark: f64, value: f64) -> f64 {
    if benchmark == 0.0 {
        0.0
    } else {
        snap((benchmark - value) / benchmark)
    }
}

// rounding residue of differences that are exactly zero in exact arithmetic
fn snap(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        0.0
    } else {
        x
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeMetrics {
    pub goal: String,
    pub supported: bool,
    pub complete_info_value: Option<f64>,
    /// Expected edge weight walked plus the initial allocation.
    pub expected_traversal: Option<f64>,
    pub rod: Option<f64>,
    pub voi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub complete_info_value: Option<f64>,
    pub rod: f64,
    pub voi: f64,
    pub support: Vec<String>,
    pub per_type: Vec<TypeMetrics>,
}

impl MetricsReport {
    pub fn support_size(&self) -> usize {
        self.support.len()
    }
}

/// Metrics of an equilibrium with type prior `gamma`, per-type costs `costs`
/// and overall cost `value`. Types with prior at most `zero_tol` are
/// unsupported and get no RoD/VoI.
pub fn compute_metrics(s: &Scenario, gamma: &[f64], costs: &[TypeCost], value: f64, zero_tol: f64) -> MetricsReport {
    let overall = overall_complete_info_value(s);
    let mut rod = 0.0;
    let mut support = Vec::new();
    let per_type = s
        .goals()
        .map(|g| {
            let supported = gamma[g.0] > zero_tol;
            let ci = complete_info_value(s, g);
            let traversal = supported.then_some(costs[g.0].traversal);
            let (r, v) = match (supported, ci) {
                (true, Some(ci)) => {
                    let r = snap(costs[g.0].traversal - ci);
                    rod += gamma[g.0] * r;
                    (Some(r), Some(relative_gain(ci, costs[g.0].cost)))
                }
                _ => (None, None),
            };
            if supported {
                support.push(s.goal_name(g).to_string());
            }
            TypeMetrics {
                goal: s.goal_name(g).to_string(),
                supported,
                complete_info_value: ci,
                expected_traversal: traversal,
                rod: r,
                voi: v,
            }
        })
        .collect();
    MetricsReport {
        complete_info_value: overall,
        rod: snap(rod),
        voi: overall.map_or(0.0, |u| relative_gain(u, value)),
        support,
        per_type,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::ScenarioDoc;

    fn y_graph(rb: f64) -> Scenario {
        let mut doc: ScenarioDoc = serde_json::from_str(
            r#"{"nodes":["A","B","C"],"edges":[{"from":"A","to":"B","w":1},{"from":"A","to":"C","w":1}],
                "goals":["B","C"],"start":"A"}"#,
        )
        .unwrap();
        doc.initial_allocation.insert("B".into(), rb);
        Scenario::from_doc(&doc).unwrap()
    }

    fn cost(cost: f64, traversal: f64) -> TypeCost {
        TypeCost {
            cost,
            traversal,
            escaped: 0.0,
        }
    }

    #[test]
    fn complete_information_values() {
        let s = y_graph(2.0);
        assert_eq!(complete_info_value(&s, GoalId(0)), Some(3.0));
        assert_eq!(complete_info_value(&s, GoalId(1)), Some(1.0));
        assert_eq!(overall_complete_info_value(&s), Some(1.0));
    }

    #[test]
    fn matching_pennies_metrics() {
        let s = y_graph(0.0);
        let m = compute_metrics(&s, &[0.5, 0.5], &[cost(0.5, 1.0), cost(0.5, 1.0)], 0.5, 1e-9);
        assert_eq!(m.voi, 0.5);
        assert_eq!(m.rod, 0.0);
        assert_eq!(m.support, vec!["B", "C"]);
        assert_eq!(m.per_type[0].voi, Some(0.5));
    }

    #[test]
    fn unsupported_type_is_null_and_detour_counts() {
        let s = y_graph(0.0);
        let m = compute_metrics(&s, &[1.0, 0.0], &[cost(3.0, 3.0), cost(0.0, 0.0)], 3.0, 1e-9);
        assert_eq!(m.per_type[0].rod, Some(2.0));
        assert_eq!(m.per_type[1].rod, None);
        assert_eq!(m.per_type[1].voi, None);
        assert_eq!(m.rod, 2.0);
        assert_eq!(m.support_size(), 1);
    }

    #[test]
    fn zero_benchmark_gives_zero_voi() {
        assert_eq!(relative_gain(0.0, 0.0), 0.0);
        assert_eq!(relative_gain(4.0, 3.0), 0.25);
    }
}

//! Behaviour outside the restricted game.
//!
//! The Defender's default allocates to the goal nearest the Attacker's
//! current node (lowest goal index on exact ties). Each Attacker type's
//! default is a deterministic best response to that rule, found by value
//! iteration; its value at a node is the continuation cost charged at
//! frontier histories ending there.

use crate::environment::{GoalId, NodeId, Scenario};
use crate::exec::Execution;

/// Goal allocated by the default Defender when the Attacker stands at `at`.
pub fn defender_default(s: &Scenario, at: NodeId) -> GoalId {
    let mut best = GoalId(0);
    let mut best_d = s.distance_to_goal(at, best);
    for g in s.goals().skip(1) {
        let d = s.distance_to_goal(at, g);
        if d < best_d {
            best = g;
            best_d = d;
        }
    }
    best
}

/// Default continuation data for a single Attacker type.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalContinuation {
    /// Best-response cost-to-go against the default Defender; infinite when
    /// the goal cannot be reached.
    pub value: Vec<f64>,
    /// Edges needed by the default Attacker policy to arrive.
    pub hops: Vec<usize>,
    /// Next node of the default Attacker policy.
    pub next: Vec<Option<NodeId>>,
}

/// Per-type continuation values and default policies.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationTable {
    pub goals: Vec<GoalContinuation>,
    pub defender: Vec<GoalId>,
    pub delta: Option<f64>,
}

/// Traversal cost for type `goal` on edge `(from, _)` of weight `w` under the
/// default Defender, optionally with a small additive `delta` on
/// unpenalised edges.
fn default_edge_cost(defender: &[GoalId], goal: GoalId, from: NodeId, w: f64, delta: Option<f64>) -> f64 {
    if defender[from.0] == goal {
        w
    } else {
        delta.unwrap_or(0.0)
    }
}

/// Value iteration for type `goal` against the default Defender.
///
/// Values are compared lexicographically on `(cost, hops)`, so among
/// cost-equal continuations the policy takes the one with fewer edges.
pub fn build_continuation(s: &Scenario, goal: GoalId, delta: Option<f64>) -> GoalContinuation {
    let defender: Vec<GoalId> = s.nodes().map(|v| defender_default(s, v)).collect();
    build_with(s, &defender, goal, delta)
}

fn build_with(s: &Scenario, defender: &[GoalId], goal: GoalId, delta: Option<f64>) -> GoalContinuation {
    let n = s.node_count();
    let target = s.goal_node(goal);
    let mut value = vec![f64::INFINITY; n];
    let mut hops = vec![usize::MAX; n];
    let mut next = vec![None; n];
    value[target.0] = 0.0;
    hops[target.0] = 0;

    for _sweep in 0..=n {
        let mut changed = false;
        for v in s.nodes() {
            if v == target {
                continue;
            }
            let mut best = (f64::INFINITY, usize::MAX, None);
            for &(u, w) in s.out_edges(v) {
                if !value[u.0].is_finite() {
                    continue;
                }
                let cost = default_edge_cost(defender, goal, v, w, delta) + value[u.0];
                let h = hops[u.0] + 1;
                if cost < best.0 || (cost == best.0 && h < best.1) {
                    best = (cost, h, Some(u));
                }
            }
            if best.2.is_some() && (best.0, best.1, best.2) != (value[v.0], hops[v.0], next[v.0]) {
                value[v.0] = best.0;
                hops[v.0] = best.1;
                next[v.0] = best.2;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    GoalContinuation { value, hops, next }
}

impl ContinuationTable {
    pub fn build(s: &Scenario, delta: Option<f64>, exec: Execution) -> Self {
        let defender: Vec<GoalId> = s.nodes().map(|v| defender_default(s, v)).collect();
        let goals: Vec<GoalId> = s.goals().collect();
        let per_goal = exec.map(&goals, |&g| build_with(s, &defender, g, delta));
        ContinuationTable {
            goals: per_goal,
            defender,
            delta,
        }
    }

    /// `V(at)` for type `goal`; infinite when the goal is unreachable.
    pub fn value(&self, goal: GoalId, at: NodeId) -> f64 {
        self.goals[goal.0].value[at.0]
    }

    pub fn defender_at(&self, at: NodeId) -> GoalId {
        self.defender[at.0]
    }

    pub fn next(&self, goal: GoalId, at: NodeId) -> Option<NodeId> {
        self.goals[goal.0].next[at.0]
    }

    /// Whether type `goal` can still reach its goal from `at`.
    pub fn viable(&self, goal: GoalId, at: NodeId) -> bool {
        self.goals[goal.0].value[at.0].is_finite()
    }

    /// Cost of the default Attacker walk from `at` under the default Defender,
    /// computed by following the policy.
    pub fn default_walk_cost(&self, s: &Scenario, goal: GoalId, at: NodeId) -> Option<f64> {
        let target = s.goal_node(goal);
        let mut v = at;
        let mut total = 0.0;
        for _ in 0..=s.node_count() {
            if v == target {
                return Some(total);
            }
            let u = self.next(goal, v)?;
            let w = s.weight(v, u)?;
            total += default_edge_cost(&self.defender, goal, v, w, self.delta);
            v = u;
        }
        None
    }

    /// JSON dump keyed by goal then node name.
    pub fn to_json(&self, s: &Scenario) -> serde_json::Value {
        let mut out = serde_json::Map::new();
        for g in s.goals() {
            let mut per_node = serde_json::Map::new();
            for v in s.nodes() {
                let val = self.value(g, v);
                per_node.insert(
                    s.name(v).to_string(),
                    serde_json::json!({
                        "value": if val.is_finite() { serde_json::json!(val) } else { serde_json::Value::Null },
                        "next": self.next(g, v).map(|u| s.name(u).to_string()),
                        "defender": s.goal_name(self.defender_at(v)),
                    }),
                );
            }
            out.insert(s.goal_name(g).to_string(), serde_json::Value::Object(per_node));
        }
        serde_json::Value::Object(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{generate_grid, ScenarioDoc};

    fn scenario(json: &str) -> Scenario {
        let doc: ScenarioDoc = serde_json::from_str(json).unwrap();
        Scenario::from_doc(&doc).unwrap()
    }

    fn y_graph() -> Scenario {
        scenario(
            r#"{"nodes":["A","B","C"],
                "edges":[{"from":"A","to":"B","w":1.0},{"from":"A","to":"C","w":1.0},
                         {"from":"C","to":"A","w":1.0}],
                "goals":["B","C"],"start":"A"}"#,
        )
    }

    #[test]
    fn nearest_goal_with_index_ties() {
        let s = y_graph();
        assert_eq!(defender_default(&s, NodeId(0)), GoalId(0));
        assert_eq!(defender_default(&s, NodeId(2)), GoalId(1));

        // s0 - v - g1 with g2 hanging off s0
        let s = scenario(
            r#"{"nodes":["s0","v","g1","g2"],
                "edges":[{"from":"s0","to":"v","w":1.0},{"from":"v","to":"g1","w":1.0},
                         {"from":"s0","to":"g2","w":1.0}],
                "undirected":true,"goals":["g1","g2"],"start":"s0"}"#,
        );
        assert_eq!(defender_default(&s, NodeId(1)), GoalId(0));
    }

    #[test]
    fn y_graph_values() {
        let s = y_graph();
        let t = ContinuationTable::build(&s, None, Execution::Sequential);
        let (a, b, c) = (NodeId(0), NodeId(1), NodeId(2));
        assert_eq!(t.value(GoalId(1), a), 0.0);
        assert_eq!(t.value(GoalId(0), a), 1.0);
        assert_eq!(t.value(GoalId(0), b), 0.0);
        // C -> A is free (default allocates C at C), then A -> B costs 1
        assert_eq!(t.value(GoalId(0), c), 1.0);
        assert_eq!(t.next(GoalId(0), c), Some(a));
        assert!(t.viable(GoalId(0), c));
    }

    #[test]
    fn unreachable_goal_is_infinite() {
        let s = scenario(
            r#"{"nodes":["A","B","C"],
                "edges":[{"from":"A","to":"B","w":1.0},{"from":"A","to":"C","w":1.0}],
                "goals":["B","C"],"start":"A"}"#,
        );
        let t = ContinuationTable::build(&s, None, Execution::Sequential);
        assert!(!t.viable(GoalId(0), NodeId(2)));
        assert_eq!(t.next(GoalId(0), NodeId(2)), None);
    }

    #[test]
    fn bellman_fixed_point_and_bounds_on_grid() {
        let s = generate_grid(4, 5, &[(0, 0), (3, 4), (0, 4)], (2, 2), 1.5).unwrap();
        let t = ContinuationTable::build(&s, None, Execution::Parallel);
        for g in s.goals() {
            for v in s.nodes() {
                let val = t.value(g, v);
                if v == s.goal_node(g) {
                    assert_eq!(val, 0.0);
                    continue;
                }
                let backup = s
                    .out_edges(v)
                    .iter()
                    .map(|&(u, w)| {
                        let c = if t.defender_at(v) == g { w } else { 0.0 };
                        c + t.value(g, u)
                    })
                    .fold(f64::INFINITY, f64::min);
                assert_eq!(val, backup);
                assert!(val <= s.distance_to_goal(v, g));
                assert_eq!(t.default_walk_cost(&s, g, v), Some(val));
                assert!(t.goals[g.0].hops[v.0] <= s.node_count());
            }
        }
    }

    #[test]
    fn delta_mode_charges_free_edges() {
        let s = y_graph();
        let t = ContinuationTable::build(&s, Some(1e-6), Execution::Sequential);
        assert!((t.value(GoalId(1), NodeId(0)) - 1e-6).abs() < 1e-18);
        assert!((t.value(GoalId(0), NodeId(2)) - (1.0 + 1e-6)).abs() < 1e-15);
    }
}

//! Graph scenarios: nodes, weighted directed edges, candidate goals, initial
//! allocations and the start node.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, VecDeque};
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index of a node in declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

/// Index of a goal (an Attacker type) in the order the goals were listed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GoalId(pub usize);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("malformed scenario document: {0}")]
    Malformed(String),
    #[error("edge {from}->{to} has nonpositive weight {weight}")]
    NonPositiveWeight { from: String, to: String, weight: f64 },
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("duplicate node `{0}`")]
    DuplicateNode(String),
    #[error("duplicate goal `{0}`")]
    DuplicateGoal(String),
    #[error("duplicate edge {0}->{1}")]
    DuplicateEdge(String, String),
    #[error("goal `{0}` is unreachable from the start node")]
    GoalUnreachable(String),
    #[error("the goal set is empty")]
    EmptyGoals,
    #[error("initial allocation for `{0}` must be a finite nonnegative number")]
    BadAllocation(String),
    #[error("`{to}` is unreachable from `{from}`")]
    Unreachable { from: String, to: String },
    #[error("cell ({0}, {1}) is outside the grid")]
    OutOfRange(usize, usize),
}

/// One edge of a scenario document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeDoc {
    pub from: String,
    pub to: String,
    pub w: f64,
}

/// The on-disk JSON form of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub nodes: Vec<String>,
    pub edges: Vec<EdgeDoc>,
    #[serde(default)]
    pub undirected: bool,
    pub goals: Vec<String>,
    #[serde(default)]
    pub initial_allocation: IndexMap<String, f64>,
    pub start: String,
}

/// A validated, immutable game scenario.
///
/// Out-neighbour lists are sorted by node index so that every traversal of
/// the graph visits successors in declaration order.
#[derive(Debug, Clone)]
pub struct Scenario {
    names: Vec<String>,
    index: HashMap<String, NodeId>,
    out: Vec<Vec<(NodeId, f64)>>,
    goals: Vec<NodeId>,
    goal_of: Vec<Option<GoalId>>,
    allocation: Vec<f64>,
    start: NodeId,
    // dist_to_goal[g][v] = d(v, goal g)
    dist_to_goal: Vec<Vec<f64>>,
}

impl PartialEq for Scenario {
    fn eq(&self, other: &Self) -> bool {
        self.names == other.names
            && self.out == other.out
            && self.goals == other.goals
            && self.allocation == other.allocation
            && self.start == other.start
    }
}

impl Scenario {
    /// Builds and validates a scenario from its document form.
    pub fn from_doc(doc: &ScenarioDoc) -> Result<Self, ScenarioError> {
        let mut index = HashMap::with_capacity(doc.nodes.len());
        for (i, name) in doc.nodes.iter().enumerate() {
            if index.insert(name.clone(), NodeId(i)).is_some() {
                return Err(ScenarioError::DuplicateNode(name.clone()));
            }
        }
        let lookup = |name: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| ScenarioError::UnknownNode(name.to_string()))
        };

        let n = doc.nodes.len();
        let mut out: Vec<Vec<(NodeId, f64)>> = vec![Vec::new(); n];
        let mut add_edge = |from: NodeId, to: NodeId, w: f64| -> Result<(), ScenarioError> {
            if out[from.0].iter().any(|&(t, _)| t == to) {
                return Err(ScenarioError::DuplicateEdge(
                    doc.nodes[from.0].clone(),
                    doc.nodes[to.0].clone(),
                ));
            }
            out[from.0].push((to, w));
            Ok(())
        };
        for e in &doc.edges {
            let from = lookup(&e.from)?;
            let to = lookup(&e.to)?;
            if !(e.w > 0.0) || !e.w.is_finite() {
                return Err(ScenarioError::NonPositiveWeight {
                    from: e.from.clone(),
                    to: e.to.clone(),
                    weight: e.w,
                });
            }
            add_edge(from, to, e.w)?;
            if doc.undirected && from != to {
                add_edge(to, from, e.w)?;
            }
        }
        for list in &mut out {
            list.sort_by_key(|&(t, _)| t);
        }

        if doc.goals.is_empty() {
            return Err(ScenarioError::EmptyGoals);
        }
        let mut goals = Vec::with_capacity(doc.goals.len());
        let mut goal_of = vec![None; n];
        for (gi, name) in doc.goals.iter().enumerate() {
            let v = lookup(name)?;
            if goal_of[v.0].is_some() {
                return Err(ScenarioError::DuplicateGoal(name.clone()));
            }
            goal_of[v.0] = Some(GoalId(gi));
            goals.push(v);
        }
        for name in doc.initial_allocation.keys() {
            let v = lookup(name)?;
            if goal_of[v.0].is_none() {
                return Err(ScenarioError::Malformed(format!(
                    "initial allocation given for non-goal node `{name}`"
                )));
            }
        }
        let allocation = doc
            .goals
            .iter()
            .map(|g| {
                let r = doc.initial_allocation.get(g).copied().unwrap_or(0.0);
                if r.is_finite() && r >= 0.0 {
                    Ok(r)
                } else {
                    Err(ScenarioError::BadAllocation(g.clone()))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        let start = lookup(&doc.start)?;

        let mut scenario = Scenario {
            names: doc.nodes.clone(),
            index,
            out,
            goals,
            goal_of,
            allocation,
            start,
            dist_to_goal: Vec::new(),
        };
        scenario.dist_to_goal = scenario
            .goals
            .iter()
            .map(|&g| scenario.distances_to(g))
            .collect();
        for (gi, &g) in scenario.goals.iter().enumerate() {
            if !scenario.dist_to_goal[gi][start.0].is_finite() {
                return Err(ScenarioError::GoalUnreachable(scenario.names[g.0].clone()));
            }
        }
        Ok(scenario)
    }

    /// Parses a JSON scenario document.
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let doc: ScenarioDoc =
            serde_json::from_str(text).map_err(|e| ScenarioError::Malformed(e.to_string()))?;
        Self::from_doc(&doc)
    }

    /// Directed document form; parsing it yields an equal scenario.
    pub fn to_doc(&self) -> ScenarioDoc {
        let edges = self
            .out
            .iter()
            .enumerate()
            .flat_map(|(u, list)| {
                list.iter().map(move |&(v, w)| EdgeDoc {
                    from: self.names[u].clone(),
                    to: self.names[v.0].clone(),
                    w,
                })
            })
            .collect();
        ScenarioDoc {
            nodes: self.names.clone(),
            edges,
            undirected: false,
            goals: self.goals.iter().map(|g| self.names[g.0].clone()).collect(),
            initial_allocation: self
                .goals
                .iter()
                .zip(&self.allocation)
                .map(|(g, &r)| (self.names[g.0].clone(), r))
                .collect(),
            start: self.names[self.start.0].clone(),
        }
    }

    /// Same scenario with a different start node.
    pub fn with_start(&self, start: NodeId) -> Result<Self, ScenarioError> {
        for (gi, &g) in self.goals.iter().enumerate() {
            if !self.dist_to_goal[gi][start.0].is_finite() {
                return Err(ScenarioError::GoalUnreachable(self.names[g.0].clone()));
            }
        }
        Ok(Scenario {
            start,
            ..self.clone()
        })
    }

    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    pub fn edge_count(&self) -> usize {
        self.out.iter().map(Vec::len).sum()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.names.len()).map(NodeId)
    }

    pub fn name(&self, v: NodeId) -> &str {
        &self.names[v.0]
    }

    pub fn node(&self, name: &str) -> Option<NodeId> {
        self.index.get(name).copied()
    }

    pub fn start(&self) -> NodeId {
        self.start
    }

    pub fn goal_count(&self) -> usize {
        self.goals.len()
    }

    pub fn goals(&self) -> impl Iterator<Item = GoalId> {
        (0..self.goals.len()).map(GoalId)
    }

    pub fn goal_node(&self, g: GoalId) -> NodeId {
        self.goals[g.0]
    }

    pub fn goal_name(&self, g: GoalId) -> &str {
        self.name(self.goals[g.0])
    }

    /// The goal located at `v`, if any.
    pub fn goal_at(&self, v: NodeId) -> Option<GoalId> {
        self.goal_of[v.0]
    }

    pub fn allocation(&self, g: GoalId) -> f64 {
        self.allocation[g.0]
    }

    /// Out-neighbours with edge weights, in node order.
    pub fn out_edges(&self, v: NodeId) -> &[(NodeId, f64)] {
        &self.out[v.0]
    }

    pub fn weight(&self, from: NodeId, to: NodeId) -> Option<f64> {
        self.out[from.0]
            .iter()
            .find(|&&(t, _)| t == to)
            .map(|&(_, w)| w)
    }

    pub fn min_weight(&self) -> f64 {
        self.out
            .iter()
            .flatten()
            .map(|&(_, w)| w)
            .fold(f64::INFINITY, f64::min)
    }

    /// Cached d(v, goal); infinite when the goal cannot be reached from `v`.
    pub fn distance_to_goal(&self, v: NodeId, g: GoalId) -> f64 {
        self.dist_to_goal[g.0][v.0]
    }

    /// Weighted shortest-path length from `from` to `to`.
    pub fn shortest_distance(&self, from: NodeId, to: NodeId) -> Result<f64, ScenarioError> {
        let d = match self.goal_of[to.0] {
            Some(g) => self.dist_to_goal[g.0][from.0],
            None => self.distances_to(to)[from.0],
        };
        if d.is_finite() {
            Ok(d)
        } else {
            Err(ScenarioError::Unreachable {
                from: self.names[from.0].clone(),
                to: self.names[to.0].clone(),
            })
        }
    }

    /// Successors available to an Attacker of type `goal` standing at `at`.
    pub fn action_set(&self, goal: GoalId, at: NodeId) -> Vec<NodeId> {
        if self.goals[goal.0] == at {
            vec![at]
        } else {
            self.out[at.0].iter().map(|&(v, _)| v).collect()
        }
    }

    /// Minimum number of edges from `from` to any goal (0 if `from` is a goal).
    pub fn hops_to_nearest_goal(&self, from: NodeId) -> Option<usize> {
        let mut seen = vec![false; self.names.len()];
        let mut queue = VecDeque::from([(from, 0usize)]);
        seen[from.0] = true;
        while let Some((v, d)) = queue.pop_front() {
            if self.goal_of[v.0].is_some() {
                return Some(d);
            }
            for &(u, _) in &self.out[v.0] {
                if !seen[u.0] {
                    seen[u.0] = true;
                    queue.push_back((u, d + 1));
                }
            }
        }
        None
    }

    // Dijkstra on the reversed graph: result[v] = d(v, target).
    fn distances_to(&self, target: NodeId) -> Vec<f64> {
        let n = self.names.len();
        let mut rev: Vec<Vec<(NodeId, f64)>> = vec![Vec::new(); n];
        for (u, list) in self.out.iter().enumerate() {
            for &(v, w) in list {
                rev[v.0].push((NodeId(u), w));
            }
        }
        let mut dist = vec![f64::INFINITY; n];
        let mut heap = BinaryHeap::new();
        dist[target.0] = 0.0;
        heap.push(HeapItem(0.0, target));
        while let Some(HeapItem(d, v)) = heap.pop() {
            if d > dist[v.0] {
                continue;
            }
            for &(u, w) in &rev[v.0] {
                let nd = d + w;
                if nd < dist[u.0] {
                    dist[u.0] = nd;
                    heap.push(HeapItem(nd, u));
                }
            }
        }
        dist
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(PartialEq)]
struct HeapItem(f64, NodeId);

impl Eq for HeapItem {}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapItem {
    // min-heap on distance, ties on node index
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .total_cmp(&self.0)
            .then_with(|| other.1.cmp(&self.1))
    }
}

/// Name of the grid cell at `(row, col)`.
pub fn grid_cell_name(row: usize, col: usize) -> String {
    format!("r{row}c{col}")
}

/// A 4-connected `rows` x `cols` grid with uniform bidirectional weights.
pub fn generate_grid(
    rows: usize,
    cols: usize,
    goals: &[(usize, usize)],
    start: (usize, usize),
    weight: f64,
) -> Result<Scenario, ScenarioError> {
    let in_range = |&(r, c): &(usize, usize)| {
        if r < rows && c < cols {
            Ok(())
        } else {
            Err(ScenarioError::OutOfRange(r, c))
        }
    };
    in_range(&start)?;
    for g in goals {
        in_range(g)?;
    }
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                edges.push(EdgeDoc {
                    from: grid_cell_name(r, c),
                    to: grid_cell_name(r, c + 1),
                    w: weight,
                });
            }
            if r + 1 < rows {
                edges.push(EdgeDoc {
                    from: grid_cell_name(r, c),
                    to: grid_cell_name(r + 1, c),
                    w: weight,
                });
            }
        }
    }
    let doc = ScenarioDoc {
        nodes: (0..rows)
            .flat_map(|r| (0..cols).map(move |c| grid_cell_name(r, c)))
            .collect(),
        edges,
        undirected: true,
        goals: goals.iter().map(|&(r, c)| grid_cell_name(r, c)).collect(),
        initial_allocation: IndexMap::new(),
        start: grid_cell_name(start.0, start.1),
    };
    Scenario::from_doc(&doc)
}

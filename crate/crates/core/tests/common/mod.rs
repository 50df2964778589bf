//! Test-only oracles, deliberately independent of the library's LP code.
#![allow(dead_code)]

use dpp_core::analysis::{path_cost, type_reach};
use dpp_core::document::SolutionDocument;
use dpp_core::double_oracle::EquilibriumSolution;
use dpp_core::environment::{GoalId, NodeId, Scenario, ScenarioDoc};
use rand::Rng;

/// Row relation for [`dense_min`].
#[derive(Clone, Copy, PartialEq, Debug)]
pub enum Rel {
    Le,
    Eq,
}

/// Minimises `c·x` over `x ≥ 0` subject to rows `a_i·x (≤|=) b_i` with
/// `b ≥ 0`, using a dense two-phase tableau and Bland's rule. Returns the
/// optimal value and point, or `None` if infeasible or unbounded.
pub fn dense_min(c: &[f64], rows: &[(Vec<f64>, Rel, f64)]) -> Option<(f64, Vec<f64>)> {
    const EPS: f64 = 1e-11;
    let n = c.len();
    let m = rows.len();
    let slacks: Vec<usize> = (0..m).filter(|&i| rows[i].1 == Rel::Le).collect();
    let ns = slacks.len();
    // columns: x (n), slacks (ns), artificials (m), rhs
    let width = n + ns + m + 1;
    let mut t = vec![vec![0.0; width]; m];
    let mut basis = vec![0; m];
    for (i, (a, rel, b)) in rows.iter().enumerate() {
        assert!(*b >= 0.0);
        t[i][..n].copy_from_slice(a);
        if *rel == Rel::Le {
            let k = slacks.iter().position(|&s| s == i).unwrap();
            t[i][n + k] = 1.0;
        }
        t[i][n + ns + i] = 1.0;
        t[i][width - 1] = *b;
        basis[i] = n + ns + i;
    }

    let pivot = |t: &mut Vec<Vec<f64>>, basis: &mut Vec<usize>, r: usize, col: usize| {
        let p = t[r][col];
        t[r].iter_mut().for_each(|x| *x /= p);
        let pivot_row = t[r].clone();
        for (i, row) in t.iter_mut().enumerate() {
            if i != r && row[col].abs() > 0.0 {
                let f = row[col];
                row.iter_mut().zip(&pivot_row).for_each(|(x, y)| *x -= f * y);
            }
        }
        basis[r] = col;
    };

    // returns false when unbounded
    let run = |t: &mut Vec<Vec<f64>>, basis: &mut Vec<usize>, cost: &[f64], allowed: usize| -> bool {
        loop {
            let reduced = |j: usize| -> f64 {
                cost[j] - (0..m).map(|i| cost[basis[i]] * t[i][j]).sum::<f64>()
            };
            let Some(enter) = (0..allowed).find(|&j| !basis.contains(&j) && reduced(j) < -EPS) else {
                return true;
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..m {
                if t[i][enter] > EPS {
                    let ratio = t[i][width - 1] / t[i][enter];
                    match leave {
                        Some((l, best)) if ratio > best + EPS || (ratio > best - EPS && basis[i] > basis[l]) => {}
                        _ => leave = Some((i, ratio)),
                    }
                }
            }
            let Some((r, _)) = leave else { return false };
            pivot(t, basis, r, enter);
        }
    };

    let mut phase1 = vec![0.0; width - 1];
    phase1[n + ns..].iter_mut().for_each(|x| *x = 1.0);
    run(&mut t, &mut basis, &phase1, width - 1);
    let infeas: f64 = (0..m).filter(|&i| basis[i] >= n + ns).map(|i| t[i][width - 1]).sum();
    if infeas > 1e-9 {
        return None;
    }
    // drive remaining (zero-level) artificials out where possible
    for i in 0..m {
        if basis[i] >= n + ns {
            if let Some(col) = (0..n + ns).find(|&j| t[i][j].abs() > 1e-9) {
                pivot(&mut t, &mut basis, i, col);
            }
        }
    }
    let mut phase2 = vec![0.0; width - 1];
    phase2[..n].copy_from_slice(c);
    if !run(&mut t, &mut basis, &phase2, n + ns) {
        return None;
    }
    let mut x = vec![0.0; n];
    for i in 0..m {
        if basis[i] < n {
            x[basis[i]] = t[i][width - 1];
        }
    }
    let value = c.iter().zip(&x).map(|(a, b)| a * b).sum();
    Some((value, x))
}

/// An Attacker pure strategy: a type and a walk from the start to the
/// type's first arrival at its goal.
#[derive(Clone, Debug)]
pub struct Walk {
    pub goal: GoalId,
    pub nodes: Vec<NodeId>,
}

/// All pure strategies whose walks take at most `max_len` moves.
pub fn enumerate_walks(s: &Scenario, max_len: usize) -> Vec<Walk> {
    let mut out = Vec::new();
    for g in s.goals() {
        let target = s.goal_node(g);
        let mut stack = vec![vec![s.start()]];
        while let Some(path) = stack.pop() {
            let at = *path.last().unwrap();
            if at == target {
                out.push(Walk { goal: g, nodes: path });
                continue;
            }
            if path.len() > max_len {
                continue;
            }
            for &(v, _) in s.out_edges(at) {
                let mut next = path.clone();
                next.push(v);
                stack.push(next);
            }
        }
    }
    out
}

/// Value of the game when the Attacker is limited to walks of at most
/// `max_len` moves, by explicit enumeration. The Defender's pure strategies
/// are allocations per observed history; since allocations never steer the
/// walk, its best reply decomposes history by history, which the LP encodes
/// with one epigraph variable per history.
pub fn brute_force_value(s: &Scenario, max_len: usize) -> f64 {
    let walks = enumerate_walks(s, max_len);
    let mut histories: Vec<Vec<NodeId>> = Vec::new();
    for w in &walks {
        for t in 0..w.nodes.len().saturating_sub(1) {
            let h = w.nodes[..=t].to_vec();
            if !histories.contains(&h) {
                histories.push(h);
            }
        }
    }
    let k = walks.len();
    let nh = histories.len();
    // variables: x_k (k), v_h (nh)
    let mut c: Vec<f64> = walks.iter().map(|w| s.allocation(w.goal)).collect();
    c.extend(std::iter::repeat(1.0).take(nh));
    let mut rows = Vec::new();
    for (hi, h) in histories.iter().enumerate() {
        for a in s.goals() {
            let mut row = vec![0.0; k + nh];
            for (wi, w) in walks.iter().enumerate() {
                if w.goal == a && w.nodes.len() > h.len() && w.nodes[..h.len()] == h[..] {
                    row[wi] = s.weight(h[h.len() - 1], w.nodes[h.len()]).unwrap();
                }
            }
            row[k + hi] = -1.0;
            rows.push((row, Rel::Le, 0.0));
        }
    }
    let mut simplex = vec![0.0; k + nh];
    simplex[..k].iter_mut().for_each(|x| *x = 1.0);
    rows.push((simplex, Rel::Eq, 1.0));
    dense_min(&c, &rows).expect("brute-force LP solvable").0
}

/// Weighted shortest distance and one shortest path, by Bellman-Ford
/// relaxation.
pub fn shortest_path(s: &Scenario, from: NodeId, to: NodeId) -> (f64, Vec<NodeId>) {
    let mut d = vec![f64::INFINITY; s.node_count()];
    let mut pred = vec![None; s.node_count()];
    d[from.0] = 0.0;
    for _ in 0..s.node_count() {
        for v in s.nodes() {
            for &(u, w) in s.out_edges(v) {
                if d[v.0] + w < d[u.0] {
                    d[u.0] = d[v.0] + w;
                    pred[u.0] = Some(v);
                }
            }
        }
    }
    let mut path = vec![to];
    while let Some(p) = pred[path.last().unwrap().0] {
        path.push(p);
    }
    path.reverse();
    (d[to.0], path)
}

pub fn shortest(s: &Scenario, from: NodeId, to: NodeId) -> f64 {
    shortest_path(s, from, to).0
}

/// Deepest history any supported type reaches with positive probability.
pub fn support_depth(sol: &EquilibriumSolution) -> usize {
    let rg = &sol.game;
    let s = rg.scenario();
    s.goals()
        .filter(|g| sol.attacker.gamma_type[g.0] > 1e-9)
        .flat_map(|g| {
            let reach = type_reach(rg, &sol.attacker, g).reach;
            rg.ids().filter(move |h| reach[h.0] > 1e-9).map(|h| rg.depth(h))
        })
        .max()
        .unwrap_or(0)
}

/// Every structural and equilibrium invariant of a solved instance; returns
/// the violated ones.
pub fn invariant_violations(sol: &EquilibriumSolution, doc: &SolutionDocument) -> Vec<String> {
    const TOL: f64 = 1e-9;
    let rg = &sol.game;
    let s = rg.scenario();
    let a = &sol.attacker;
    let mut out = Vec::new();
    if !rg.check_prefix_closed() {
        out.push("restricted game is not prefix-closed".into());
    }
    for g in s.goals() {
        for h in rg.ids() {
            let Some(z) = &a.realization[g.0][h.0] else { continue };
            let inflow = match rg.parent(h) {
                None => a.gamma_type[g.0],
                Some(p) => {
                    let pol = a.policy(g, p).expect("active parent has a policy");
                    let col = pol.columns.iter().position(|&c| c == rg.last(h)).unwrap();
                    a.realization[g.0][p.0].as_ref().unwrap()[col]
                }
            };
            let outflow: f64 = z.iter().sum();
            if (outflow - inflow).abs() > TOL {
                out.push(format!("flow of {} broken at {}", s.goal_name(g), rg.key(h)));
            }
        }
    }
    for (key, b) in &doc.beliefs {
        let total: f64 = b.values().sum();
        if (total - 1.0).abs() > TOL {
            out.push(format!("belief at {key} sums to {total}"));
        }
    }
    out.extend(doc.verification.report.indifference.violations.iter().cloned());
    let m = &doc.metrics;
    for t in &m.per_type {
        if t.rod.is_some_and(|r| r < -TOL) {
            out.push(format!("negative RoD for {}", t.goal));
        }
    }
    if !(-TOL..=1.0 + TOL).contains(&m.voi) {
        out.push(format!("VoI {} outside [0, 1]", m.voi));
    }
    // walking a shortest path against the Defender costs at most the
    // complete-information value, and at least the equilibrium value
    for g in s.goals() {
        let (d, path) = shortest_path(s, s.start(), s.goal_node(g));
        let c = path_cost(rg, &sol.defender, g, &path).unwrap();
        if c > d + s.allocation(g) + TOL || c < sol.value - TOL {
            out.push(format!("shortest path of {} costs {c}", s.goal_name(g)));
        }
    }
    out
}

/// Random connected scenario: a spanning path plus extra edges, all goals
/// reachable from the start.
pub fn random_scenario<R: Rng>(rng: &mut R, nodes: usize, goals: usize, weights: &[f64], allocation: bool) -> Scenario {
    loop {
        let names: Vec<String> = (0..nodes).map(|i| format!("n{i}")).collect();
        let undirected = rng.gen_bool(0.5);
        let mut edges = Vec::new();
        let mut seen = std::collections::HashSet::new();
        let mut add = |a: usize, b: usize, edges: &mut Vec<serde_json::Value>, rng: &mut R| {
            let key = if undirected { (a.min(b), a.max(b)) } else { (a, b) };
            if a != b && seen.insert(key) {
                let w = weights[rng.gen_range(0..weights.len())];
                edges.push(serde_json::json!({"from": names[a], "to": names[b], "w": w}));
            }
        };
        let mut order: Vec<usize> = (0..nodes).collect();
        for i in (1..nodes).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        for pair in order.windows(2) {
            add(pair[0], pair[1], &mut edges, rng);
        }
        for _ in 0..rng.gen_range(0..=nodes) {
            let (a, b) = (rng.gen_range(0..nodes), rng.gen_range(0..nodes));
            add(a, b, &mut edges, rng);
        }
        let mut picks: Vec<usize> = (0..nodes).collect();
        for i in (1..nodes).rev() {
            picks.swap(i, rng.gen_range(0..=i));
        }
        let goal_names: Vec<String> = picks[..goals].iter().map(|&i| names[i].clone()).collect();
        // off the goals whenever there is room
        let start = names[picks[rng.gen_range(goals.min(nodes - 1)..nodes)]].clone();
        let mut doc = serde_json::json!({
            "nodes": names, "edges": edges, "undirected": undirected,
            "goals": goal_names, "start": start,
        });
        if allocation {
            let alloc: serde_json::Map<String, serde_json::Value> = goal_names
                .iter()
                .map(|g| (g.clone(), serde_json::json!(f64::from(rng.gen_range(0..3u8)) * 0.5)))
                .collect();
            doc["initial_allocation"] = serde_json::Value::Object(alloc);
        }
        let doc: ScenarioDoc = serde_json::from_value(doc).unwrap();
        let Ok(s) = Scenario::from_doc(&doc) else { continue };
        if s.goals().all(|g| shortest(&s, s.start(), s.goal_node(g)).is_finite()) {
            return s;
        }
    }
}

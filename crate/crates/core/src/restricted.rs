//! Sequence-form LPs of a restricted game and behavioural-strategy
//! extraction.
//!
//! The Attacker's LP (minimise) has one realisation variable per type, active
//! history and stage-matrix column, an upper bound `v_h` on the Defender's
//! stage payoff at each history, and the type distribution. The Defender's LP
//! (maximise) is its explicit dual.

use thiserror::Error;

use crate::environment::{GoalId, NodeId};
use crate::game_tree::{GameError, HistId, RestrictedGame, StageMatrix};
use crate::lp::{BasisEntry, LpError, LpModel, LpSolution, LpSolver, LpStatus, Relation, Sense, Tolerances, VarBound, VarId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("the {which} LP is {status:?}")]
    NotOptimal { which: &'static str, status: LpStatus },
}

/// Realisation variables of one type at one history.
#[derive(Debug, Clone)]
pub struct HistVars {
    pub columns: Vec<NodeId>,
    pub vars: Vec<VarId>,
}

/// Index of the Attacker's LP.
#[derive(Debug, Clone)]
pub struct PrimalIndex {
    pub gamma: Vec<VarId>,
    /// `z[goal][hist]`, present where the type carries variables.
    pub z: Vec<Vec<Option<HistVars>>>,
    pub v: Vec<VarId>,
}

/// Index of the Defender's LP.
#[derive(Debug, Clone)]
pub struct DualIndex {
    /// `pi[hist][goal]`.
    pub pi: Vec<Vec<VarId>>,
    /// `q[goal][hist]`, present where the type carries variables.
    pub q: Vec<Vec<Option<VarId>>>,
    pub u: VarId,
}

fn stage_matrices(rg: &RestrictedGame) -> Result<Vec<Vec<Option<StageMatrix>>>, SolveError> {
    let s = rg.scenario();
    let mut out = Vec::with_capacity(s.goal_count());
    for g in s.goals() {
        let mut per_hist = vec![None; rg.len()];
        for h in rg.ids() {
            if !rg.has_vars(h, g) {
                continue;
            }
            if rg.children(h).is_empty() && !rg.is_goal_terminal(h, g) {
                rg.continuation_cost(g, h)?;
            }
            per_hist[h.0] = Some(rg.stage_matrix(g, h));
        }
        out.push(per_hist);
    }
    Ok(out)
}

pub fn build_primal(rg: &RestrictedGame) -> Result<(LpModel, PrimalIndex), SolveError> {
    let s = rg.scenario();
    let mats = stage_matrices(rg)?;
    let mut lp = LpModel::new(Sense::Minimize);

    let gamma: Vec<VarId> = s
        .goals()
        .map(|g| lp.add_var(format!("gt_{}", g.0), VarBound::NonNegative, 0.0))
        .collect();
    let mut z: Vec<Vec<Option<HistVars>>> = vec![vec![None; rg.len()]; s.goal_count()];
    for g in s.goals() {
        for h in rg.ids() {
            if let Some(m) = &mats[g.0][h.0] {
                let vars = m
                    .columns
                    .iter()
                    .map(|c| lp.add_var(format!("z_{}_{}_{}", g.0, h.0, c.0), VarBound::NonNegative, 0.0))
                    .collect();
                z[g.0][h.0] = Some(HistVars {
                    columns: m.columns.clone(),
                    vars,
                });
            }
        }
    }
    let v: Vec<VarId> = rg
        .ids()
        .map(|h| lp.add_var(format!("v_{}", h.0), VarBound::Free, 1.0))
        .collect();

    for h in rg.ids() {
        for a in s.goals() {
            let mut coeffs = Vec::new();
            for g in s.goals() {
                if let (Some(m), Some(hv)) = (&mats[g.0][h.0], &z[g.0][h.0]) {
                    for (c, &var) in hv.vars.iter().enumerate() {
                        let l = m.get(a, c);
                        if l != 0.0 {
                            coeffs.push((var, l));
                        }
                    }
                }
            }
            coeffs.push((v[h.0], -1.0));
            lp.add_row(format!("stage_{}_{}", h.0, a.0), coeffs, Relation::Le, 0.0);
        }
    }

    for g in s.goals() {
        for h in rg.ids() {
            let Some(hv) = &z[g.0][h.0] else { continue };
            let mut coeffs: Vec<(VarId, f64)> = hv.vars.iter().map(|&x| (x, 1.0)).collect();
            match rg.parent(h) {
                None => coeffs.push((gamma[g.0], -1.0)),
                Some(p) => {
                    let pv = z[g.0][p.0].as_ref().expect("parents of variable histories carry variables");
                    let col = pv
                        .columns
                        .iter()
                        .position(|&c| c == rg.last(h))
                        .expect("child reached through a column");
                    coeffs.push((pv.vars[col], -1.0));
                }
            }
            lp.add_row(format!("flow_{}_{}", g.0, h.0), coeffs, Relation::Eq, 0.0);
        }
    }
    lp.add_row("types", gamma.iter().map(|&x| (x, 1.0)).collect(), Relation::Eq, 1.0);

    Ok((lp, PrimalIndex { gamma, z, v }))
}

pub fn build_dual(rg: &RestrictedGame) -> Result<(LpModel, DualIndex), SolveError> {
    let s = rg.scenario();
    let mats = stage_matrices(rg)?;
    let mut lp = LpModel::new(Sense::Maximize);

    let pi: Vec<Vec<VarId>> = rg
        .ids()
        .map(|h| {
            s.goals()
                .map(|a| lp.add_var(format!("pi_{}_{}", h.0, a.0), VarBound::NonNegative, 0.0))
                .collect()
        })
        .collect();
    let mut q = vec![vec![None; rg.len()]; s.goal_count()];
    for g in s.goals() {
        for h in rg.ids() {
            if mats[g.0][h.0].is_some() {
                q[g.0][h.0] = Some(lp.add_var(format!("q_{}_{}", g.0, h.0), VarBound::Free, 0.0));
            }
        }
    }
    let u = lp.add_var("U", VarBound::Free, 1.0);

    for h in rg.ids() {
        lp.add_row(
            format!("dist_{}", h.0),
            pi[h.0].iter().map(|&x| (x, 1.0)).collect(),
            Relation::Eq,
            1.0,
        );
    }
    for g in s.goals() {
        let root_q = q[g.0][rg.root().0].expect("every goal is reachable from the start");
        lp.add_row(format!("root_{}", g.0), vec![(root_q, 1.0), (u, -1.0)], Relation::Ge, 0.0);
        for h in rg.ids() {
            let Some(m) = &mats[g.0][h.0] else { continue };
            let qh = q[g.0][h.0].expect("q exists where the stage matrix does");
            for (c, &next) in m.columns.iter().enumerate() {
                let mut coeffs: Vec<(VarId, f64)> = s
                    .goals()
                    .filter_map(|a| {
                        let l = m.get(a, c);
                        (l != 0.0).then_some((pi[h.0][a.0], l))
                    })
                    .collect();
                if let Some(child) = rg.child(h, next) {
                    if let Some(qc) = q[g.0][child.0] {
                        coeffs.push((qc, 1.0));
                    }
                }
                coeffs.push((qh, -1.0));
                lp.add_row(format!("br_{}_{}_{}", g.0, h.0, c), coeffs, Relation::Ge, 0.0);
            }
        }
    }
    Ok((lp, DualIndex { pi, q, u }))
}

/// Realisation variables at frontier histories of the restricted game.
pub fn frontier_vars(rg: &RestrictedGame, idx: &PrimalIndex) -> Vec<VarId> {
    let s = rg.scenario();
    let mut out = Vec::new();
    for g in s.goals() {
        for h in rg.active_frontier(g) {
            if let Some(hv) = &idx.z[g.0][h.0] {
                out.extend_from_slice(&hv.vars);
            }
        }
    }
    out
}

/// Moves an optimal solution of `model` to one, on the same optimal face,
/// with the least total value on `targets`.
///
/// The face is cut out by complementary slackness with the given duals:
/// variables with positive reduced cost are removed and rows with a nonzero
/// shadow price become equalities. Returns `None` if the secondary solve
/// fails, in which case the original solution stands.
pub fn least_mass_on_face(
    model: &LpModel,
    sol: &LpSolution,
    targets: &[VarId],
    solver: &dyn LpSolver,
    tol: Tolerances,
) -> Option<LpSolution> {
    if sol.status != LpStatus::Optimal || model.sense != Sense::Minimize {
        return None;
    }
    let rc_tol = tol.opt.max(1e-12) * 10.0;
    let d = model.reduced_costs(&sol.dual);
    let keep: Vec<bool> = model
        .vars
        .iter()
        .zip(&d)
        .map(|(v, &dj)| v.bound == VarBound::Free || dj <= rc_tol)
        .collect();
    let (mut face, map) = model.restrict(&keep);
    for v in &mut face.vars {
        v.cost = 0.0;
    }
    for &t in targets {
        if let Some(nv) = map[t.0] {
            face.vars[nv.0].cost = 1.0;
        }
    }
    for (row, &y) in face.rows.iter_mut().zip(&sol.dual) {
        if y.abs() > rc_tol {
            row.relation = Relation::Eq;
        }
    }
    let hint: Vec<BasisEntry> = sol
        .basis
        .iter()
        .filter_map(|&e| match e {
            BasisEntry::Var(v) => map[v.0].map(BasisEntry::Var),
            row => Some(row),
        })
        .collect();
    let fsol = solver.solve_from(&face, tol, &hint).ok()?;
    if fsol.status != LpStatus::Optimal {
        return None;
    }
    let primal: Vec<f64> = map
        .iter()
        .map(|m| m.map_or(0.0, |nv| fsol.primal[nv.0]))
        .collect();
    let objective = model.vars.iter().zip(&primal).map(|(v, x)| v.cost * x).sum();
    let mut old_of = vec![VarId(0); face.vars.len()];
    for (old, m) in map.iter().enumerate() {
        if let Some(nv) = m {
            old_of[nv.0] = VarId(old);
        }
    }
    let basis = fsol
        .basis
        .iter()
        .map(|&e| match e {
            BasisEntry::Var(v) => BasisEntry::Var(old_of[v.0]),
            row => row,
        })
        .collect();
    let residual = model.primal_residual(&primal);
    if residual > tol.feas * 1e3 {
        return None;
    }
    Some(LpSolution {
        status: LpStatus::Optimal,
        primal,
        dual: sol.dual.clone(),
        objective,
        dual_objective: sol.dual_objective,
        primal_residual: residual,
        iterations: sol.iterations + fsol.iterations,
        basis,
    })
}

fn require_optimal(sol: &LpSolution, which: &'static str) -> Result<(), SolveError> {
    if sol.status == LpStatus::Optimal {
        Ok(())
    } else {
        Err(SolveError::NotOptimal {
            which,
            status: sol.status,
        })
    }
}

/// Behavioural policy of one type at one history.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalPolicy {
    pub columns: Vec<NodeId>,
    pub probs: Vec<f64>,
}

impl LocalPolicy {
    pub fn prob(&self, next: NodeId) -> f64 {
        self.columns
            .iter()
            .position(|&c| c == next)
            .map_or(0.0, |i| self.probs[i])
    }

    pub fn uniform(columns: Vec<NodeId>) -> Self {
        let p = 1.0 / columns.len() as f64;
        LocalPolicy {
            probs: vec![p; columns.len()],
            columns,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackerStrategy {
    pub gamma_type: Vec<f64>,
    /// `policies[goal][hist]` at histories where the type moves.
    pub policies: Vec<Vec<Option<LocalPolicy>>>,
    /// Realisation plan `z[goal][hist]`, aligned with the policy columns.
    pub realization: Vec<Vec<Option<Vec<f64>>>>,
}

impl AttackerStrategy {
    /// Joint probability of type `g` reaching `h` and choosing a move there.
    pub fn mass(&self, g: GoalId, h: HistId) -> f64 {
        self.realization[g.0][h.0]
            .as_ref()
            .map_or(0.0, |z| z.iter().sum())
    }

    pub fn policy(&self, g: GoalId, h: HistId) -> Option<&LocalPolicy> {
        self.policies[g.0][h.0].as_ref()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DefenderStrategy {
    /// `pi[hist][goal]` on the restricted game; the default rule applies
    /// elsewhere.
    pub pi: Vec<Vec<f64>>,
}

/// Clamps solver noise below zero and renormalises.
pub(crate) fn clean_distribution(p: &mut [f64]) {
    for x in p.iter_mut() {
        // also normalises -0.0
        if !(*x > 0.0) {
            *x = 0.0;
        }
    }
    let total: f64 = p.iter().sum();
    if total > 0.0 {
        for x in p.iter_mut() {
            *x /= total;
        }
    } else {
        let u = 1.0 / p.len() as f64;
        p.iter_mut().for_each(|x| *x = u);
    }
}

pub fn extract_attacker(
    rg: &RestrictedGame,
    idx: &PrimalIndex,
    sol: &LpSolution,
    zero_tol: f64,
) -> Result<AttackerStrategy, SolveError> {
    require_optimal(sol, "primal")?;
    let s = rg.scenario();
    let mut gamma_type: Vec<f64> = idx.gamma.iter().map(|&x| sol.value(x)).collect();
    clean_distribution(&mut gamma_type);
    let mut policies = vec![vec![None; rg.len()]; s.goal_count()];
    let mut realization = vec![vec![None; rg.len()]; s.goal_count()];
    for g in s.goals() {
        for h in rg.ids() {
            let Some(hv) = &idx.z[g.0][h.0] else { continue };
            let z: Vec<f64> = hv.vars.iter().map(|&x| sol.value(x).max(0.0)).collect();
            let total: f64 = z.iter().sum();
            let policy = if total > zero_tol {
                LocalPolicy {
                    columns: hv.columns.clone(),
                    probs: z.iter().map(|x| x / total).collect(),
                }
            } else {
                LocalPolicy::uniform(hv.columns.clone())
            };
            if !rg.is_goal_terminal(h, g) {
                policies[g.0][h.0] = Some(policy);
            }
            realization[g.0][h.0] = Some(z);
        }
    }
    Ok(AttackerStrategy {
        gamma_type,
        policies,
        realization,
    })
}

pub fn extract_defender(idx: &DualIndex, sol: &LpSolution) -> Result<DefenderStrategy, SolveError> {
    require_optimal(sol, "dual")?;
    let pi = idx
        .pi
        .iter()
        .map(|row| {
            let mut p: Vec<f64> = row.iter().map(|&x| sol.value(x)).collect();
            clean_distribution(&mut p);
            p
        })
        .collect();
    Ok(DefenderStrategy { pi })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::defaults::ContinuationTable;
    use crate::environment::{Scenario, ScenarioDoc};
    use crate::exec::Execution;
    use crate::lp::RevisedSimplex;

    fn scenario(json: &str) -> Scenario {
        let doc: ScenarioDoc = serde_json::from_str(json).unwrap();
        Scenario::from_doc(&doc).unwrap()
    }

    fn y(wb: f64, wc: f64) -> Scenario {
        scenario(&format!(
            r#"{{"nodes":["A","B","C"],
                "edges":[{{"from":"A","to":"B","w":{wb}}},{{"from":"A","to":"C","w":{wc}}}],
                "goals":["B","C"],"start":"A"}}"#
        ))
    }

    fn solve_both(s: &Scenario, tau: usize) -> (f64, f64, AttackerStrategy, DefenderStrategy) {
        let t = ContinuationTable::build(s, None, Execution::Sequential);
        let rg = RestrictedGame::init(s, t, tau);
        let tol = Tolerances::default();
        let (p, pidx) = build_primal(&rg).unwrap();
        let psol = RevisedSimplex::default().solve(&p, tol).unwrap();
        let (d, didx) = build_dual(&rg).unwrap();
        let dsol = RevisedSimplex::default().solve(&d, tol).unwrap();
        let a = extract_attacker(&rg, &pidx, &psol, 1e-9).unwrap();
        let def = extract_defender(&didx, &dsol).unwrap();
        (psol.objective, dsol.objective, a, def)
    }

    #[test]
    fn matching_pennies() {
        let s = y(1.0, 1.0);
        let (pv, dv, a, d) = solve_both(&s, 1);
        assert!((pv - 0.5).abs() < 1e-12);
        assert!((dv - 0.5).abs() < 1e-12);
        assert!((a.gamma_type[0] - 0.5).abs() < 1e-12);
        assert!((d.pi[0][0] - 0.5).abs() < 1e-12);
        assert_eq!(a.policy(GoalId(0), HistId(0)).unwrap().prob(NodeId(1)), 1.0);
    }

    #[test]
    fn asymmetric_weights_equalise() {
        let s = y(1.0, 3.0);
        let (pv, dv, a, d) = solve_both(&s, 1);
        assert!((pv - 0.75).abs() < 1e-12);
        assert!((dv - 0.75).abs() < 1e-12);
        assert!((a.gamma_type[0] - 0.75).abs() < 1e-12);
        assert!((d.pi[0][0] - 0.75).abs() < 1e-12);
        assert!((d.pi[0][1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn single_goal_collapses_to_shortest_path() {
        let s = scenario(
            r#"{"nodes":["s","a","b","g"],
                "edges":[{"from":"s","to":"a","w":1},{"from":"a","to":"b","w":1},{"from":"b","to":"g","w":1}],
                "undirected":true,"goals":["g"],"initial_allocation":{"g":2},"start":"s"}"#,
        );
        let (pv, dv, a, d) = solve_both(&s, 3);
        assert!((pv - 5.0).abs() < 1e-12);
        assert!((dv - 5.0).abs() < 1e-12);
        assert_eq!(a.gamma_type, vec![1.0]);
        assert_eq!(d.pi[0], vec![1.0]);
    }

    #[test]
    fn start_at_goal_costs_allocation() {
        let s = scenario(
            r#"{"nodes":["A","B"],"edges":[{"from":"A","to":"B","w":1}],
                "goals":["A"],"initial_allocation":{"A":1.5},"start":"A"}"#,
        );
        let (pv, dv, _, _) = solve_both(&s, 1);
        assert!((pv - 1.5).abs() < 1e-12);
        assert!((dv - 1.5).abs() < 1e-12);
    }

    #[test]
    fn zero_mass_histories_fall_back_to_uniform() {
        // A -> B is expensive for type B; the detour through D is free for
        // it at equilibrium, leaving some histories unvisited.
        let s = scenario(
            r#"{"nodes":["A","B","C","D"],
                "edges":[{"from":"A","to":"B","w":1},{"from":"A","to":"C","w":1},
                         {"from":"C","to":"A","w":1},{"from":"C","to":"D","w":1},{"from":"D","to":"C","w":1}],
                "goals":["B","C"],"start":"A"}"#,
        );
        let t = ContinuationTable::build(&s, None, Execution::Sequential);
        let rg = RestrictedGame::init(&s, t.clone(), 2);
        let (p, pidx) = build_primal(&rg).unwrap();
        let mut sol = RevisedSimplex::default().solve(&p, Tolerances::default()).unwrap();
        for hv in pidx.z.iter().flatten().flatten() {
            for &x in &hv.vars {
                sol.primal[x.0] = 0.0;
            }
        }
        let a = extract_attacker(&rg, &pidx, &sol, 1e-9).unwrap();
        let pol = a.policy(GoalId(0), rg.root()).unwrap();
        assert_eq!(pol.probs, vec![0.5, 0.5]);
    }

    #[test]
    fn models_have_expected_shape() {
        let s = y(1.0, 1.0);
        let t = ContinuationTable::build(&s, None, Execution::Sequential);
        let rg = RestrictedGame::init(&s, t.clone(), 1);
        let (p, _) = build_primal(&rg).unwrap();
        // 2 type vars, one z per type at the root (dead-end columns pruned), 3 v
        assert_eq!(p.var_count(), 2 + 2 + 3);
        let (d, _) = build_dual(&rg).unwrap();
        assert_eq!(d.var_count(), 3 * 2 + 2 + 1);
    }
}

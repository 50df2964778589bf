//! The double-oracle loop: solve the restricted game, grow it below every
//! frontier history the Attacker reaches with positive probability, repeat
//! until no such history remains.

use std::sync::Arc;
use std::time::Instant;

use log::{debug, info};
use thiserror::Error;

use crate::defaults::ContinuationTable;
use crate::environment::Scenario;
use crate::exec::Execution;
use crate::game_tree::{HistId, RestrictedGame};
use crate::lp::{LpModel, LpSolver, RevisedSimplex, Tolerances};
use crate::restricted::{
    build_dual, build_primal, extract_attacker, extract_defender, frontier_vars, least_mass_on_face, AttackerStrategy,
    DefenderStrategy, SolveError,
};

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Initial horizon; defaults to the hop count of the goal nearest the
    /// start.
    pub tau0: Option<usize>,
    /// LP tolerances, reach-probability threshold and certification bound.
    pub tol: f64,
    /// Cap on LP rounds; defaults to ten times the node count.
    pub max_iter: Option<usize>,
    /// Additive charge on free default-continuation edges.
    pub delta: Option<f64>,
    /// Keep the final primal and dual models in the solution.
    pub keep_models: bool,
    /// Scheduling of the per-goal continuation tables.
    pub exec: Execution,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tau0: None,
            tol: 1e-9,
            max_iter: None,
            delta: None,
            keep_models: false,
            exec: Execution::Sequential,
        }
    }
}

impl SolveOptions {
    pub fn initial_horizon(&self, s: &Scenario) -> usize {
        self.tau0
            .unwrap_or_else(|| s.hops_to_nearest_goal(s.start()).unwrap_or(1))
            .max(1)
    }

    pub fn iteration_cap(&self, s: &Scenario) -> usize {
        self.max_iter.unwrap_or(10 * s.node_count())
    }
}

/// Final primal/dual models of a solve, kept on request.
#[derive(Debug, Clone)]
pub struct SolvedModels {
    pub primal: LpModel,
    pub dual: LpModel,
}

#[derive(Debug, Clone)]
pub struct EquilibriumSolution<'a> {
    pub game: RestrictedGame<'a>,
    pub attacker: AttackerStrategy,
    pub defender: DefenderStrategy,
    /// Optimal value of the Attacker's LP.
    pub value: f64,
    /// Optimal value of the Defender's LP.
    pub dual_value: f64,
    pub iterations: usize,
    pub models: Option<SolvedModels>,
}

impl EquilibriumSolution<'_> {
    pub fn duality_gap(&self) -> f64 {
        (self.value - self.dual_value).abs()
    }
}

/// Last restricted game and Attacker strategy when the loop gives up.
#[derive(Debug, Clone)]
pub struct LastIterate<'a> {
    pub game: RestrictedGame<'a>,
    pub attacker: AttackerStrategy,
    pub value: f64,
    pub frontier: Vec<HistId>,
}

#[derive(Debug, Error)]
pub enum DoubleOracleError<'a> {
    #[error("no convergence after {iterations} rounds")]
    NonConvergence {
        iterations: usize,
        last: Option<Box<LastIterate<'a>>>,
    },
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// Frontier histories some type reaches with mass above `zero_tol`.
pub fn reachable_frontier(rg: &RestrictedGame, a: &AttackerStrategy, zero_tol: f64) -> Vec<HistId> {
    let s = rg.scenario();
    let mut out: Vec<HistId> = s
        .goals()
        .flat_map(|g| rg.active_frontier(g).filter(move |&h| a.mass(g, h) > zero_tol))
        .collect();
    out.sort();
    out.dedup();
    out
}

pub fn solve_game<'a>(s: &'a Scenario, opts: &SolveOptions) -> Result<EquilibriumSolution<'a>, DoubleOracleError<'a>> {
    let table = ContinuationTable::build(s, opts.delta, opts.exec);
    solve_with_table(s, Arc::new(table), opts)
}

/// [`solve_game`] with a prebuilt continuation table.
pub fn solve_with_table<'a>(
    s: &'a Scenario,
    table: Arc<ContinuationTable>,
    opts: &SolveOptions,
) -> Result<EquilibriumSolution<'a>, DoubleOracleError<'a>> {
    let tol = Tolerances {
        feas: opts.tol,
        opt: opts.tol,
    };
    let solver = RevisedSimplex::default();
    let cap = opts.iteration_cap(s);
    let mut rg = RestrictedGame::init(s, table, opts.initial_horizon(s));
    let mut last = None;
    let mut warm: Vec<(bool, String)> = Vec::new();

    for iter in 1..=cap {
        let t0 = Instant::now();
        let (primal, pidx) = build_primal(&rg)?;
        let hint = primal.basis_from_names(&warm);
        let mut psol = solver.solve_from(&primal, tol, &hint).map_err(SolveError::from)?;
        let mut attacker = extract_attacker(&rg, &pidx, &psol, opts.tol)?;
        let mut frontier = reachable_frontier(&rg, &attacker, opts.tol);
        if !frontier.is_empty() {
            // the restricted game may have optimal strategies that stay
            // inside it; prefer those over ones that walk off the frontier
            let targets = frontier_vars(&rg, &pidx);
            if let Some(refined) = least_mass_on_face(&primal, &psol, &targets, &solver, tol) {
                let a = extract_attacker(&rg, &pidx, &refined, opts.tol)?;
                let f = reachable_frontier(&rg, &a, opts.tol);
                debug!("face refinement: {} -> {} frontier histories", frontier.len(), f.len());
                if f.len() <= frontier.len() {
                    psol = refined;
                    attacker = a;
                    frontier = f;
                }
            }
        }
        info!(
            "round {iter}: {} histories, {} rows, value {:.12}, {} reachable frontier, {} pivots, {:.1} ms",
            rg.len(),
            primal.row_count(),
            psol.objective,
            frontier.len(),
            psol.iterations,
            t0.elapsed().as_secs_f64() * 1e3
        );
        if frontier.is_empty() {
            let (dual, didx) = build_dual(&rg)?;
            let dsol = solver.solve(&dual, tol).map_err(SolveError::from)?;
            let defender = extract_defender(&didx, &dsol)?;
            debug!("dual value {:.12}", dsol.objective);
            return Ok(EquilibriumSolution {
                game: rg,
                attacker,
                defender,
                value: psol.objective,
                dual_value: dsol.objective,
                iterations: iter,
                models: opts.keep_models.then_some(SolvedModels { primal, dual }),
            });
        }
        if iter == cap {
            last = Some(Box::new(LastIterate {
                game: rg,
                attacker,
                value: psol.objective,
                frontier,
            }));
            break;
        }
        for &h in &frontier {
            debug!("expanding {}", rg.key(h));
        }
        warm = primal.basis_names(&psol.basis);
        rg.expand(&frontier);
    }
    Err(DoubleOracleError::NonConvergence { iterations: cap, last })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{generate_grid, GoalId, ScenarioDoc};

    fn scenario(json: &str) -> Scenario {
        let doc: ScenarioDoc = serde_json::from_str(json).unwrap();
        Scenario::from_doc(&doc).unwrap()
    }

    #[test]
    fn y_graph_converges_in_one_round() {
        let s = scenario(
            r#"{"nodes":["A","B","C"],"edges":[{"from":"A","to":"B","w":1},{"from":"A","to":"C","w":1}],
                "goals":["B","C"],"start":"A"}"#,
        );
        let sol = solve_game(&s, &SolveOptions::default()).unwrap();
        assert_eq!(sol.iterations, 1);
        assert!((sol.value - 0.5).abs() < 1e-12);
        assert!(sol.duality_gap() < 1e-12);
        assert!(reachable_frontier(&sol.game, &sol.attacker, 1e-9).is_empty());
    }

    #[test]
    fn line_with_goals_at_both_ends() {
        let s = generate_grid(1, 3, &[(0, 0), (0, 2)], (0, 1), 1.0).unwrap();
        let sol = solve_game(&s, &SolveOptions::default()).unwrap();
        assert_eq!(sol.iterations, 1);
        assert!((sol.value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn long_route_needs_expansion() {
        // g1 is one expensive hop away, g2 three cheap hops; the first round
        // stops at depth one while type g2 is still travelling
        let s = scenario(
            r#"{"nodes":["s","g1","x","y","g2"],
                "edges":[{"from":"s","to":"g1","w":3},{"from":"s","to":"x","w":1},
                         {"from":"x","to":"y","w":1},{"from":"y","to":"g2","w":1}],
                "undirected":true,"goals":["g1","g2"],"start":"s"}"#,
        );
        let sol = solve_game(&s, &SolveOptions::default()).unwrap();
        assert!(sol.iterations > 1);
        assert!(sol.duality_gap() < 1e-9);
        let g2 = GoalId(1);
        assert!(sol.attacker.gamma_type[1] > 0.0);
        assert!(sol.game.ids().any(|h| sol.game.depth(h) >= 3 && sol.game.is_goal_terminal(h, g2)));
    }

    #[test]
    fn zero_cap_reports_nonconvergence() {
        let s = generate_grid(1, 3, &[(0, 0), (0, 2)], (0, 1), 1.0).unwrap();
        let opts = SolveOptions {
            max_iter: Some(0),
            ..Default::default()
        };
        assert!(matches!(
            solve_game(&s, &opts),
            Err(DoubleOracleError::NonConvergence { iterations: 0, last: None })
        ));
    }
}

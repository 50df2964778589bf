//! Beliefs, exact expected costs, best-response oracles and equilibrium
//! certification.
//!
//! Everything here works from behavioural strategies only (type prior,
//! per-history move distributions, per-history allocations), so a solution
//! read back from disk is checked exactly like a fresh one.

use serde::{Deserialize, Serialize};

use crate::environment::{GoalId, NodeId};
use crate::game_tree::{HistId, RestrictedGame};
use crate::restricted::{AttackerStrategy, DefenderStrategy};

/// Probability that the Defender allocates to `g` at `h`.
pub fn allocation(d: &DefenderStrategy, h: HistId, g: GoalId) -> f64 {
    d.pi[h.0][g.0]
}

/// Reach probabilities of one type, conditioned on that type.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeReach {
    /// `P(h | θ)` for every history of the restricted game.
    pub reach: Vec<f64>,
    /// Probability of the walk leaving the restricted game.
    pub escaped: f64,
}

/// Forward pass of type `g`'s behavioural policy over the restricted game.
/// Arrived types stop: histories below an arrival get zero mass.
pub fn type_reach(rg: &RestrictedGame, a: &AttackerStrategy, g: GoalId) -> TypeReach {
    let mut reach = vec![0.0; rg.len()];
    let mut escaped = 0.0;
    reach[rg.root().0] = 1.0;
    for h in rg.ids() {
        let m = reach[h.0];
        if m == 0.0 || rg.is_goal_terminal(h, g) {
            continue;
        }
        // a reached history without a policy loses its mass
        let Some(policy) = a.policy(g, h) else {
            escaped += m;
            continue;
        };
        for (&next, &p) in policy.columns.iter().zip(&policy.probs) {
            if p == 0.0 {
                continue;
            }
            match rg.child(h, next) {
                Some(c) => reach[c.0] += m * p,
                None => escaped += m * p,
            }
        }
    }
    TypeReach { reach, escaped }
}

/// Posterior over types at each history; `None` where no type arrives with
/// positive probability.
pub fn propagate_beliefs(rg: &RestrictedGame, a: &AttackerStrategy) -> Vec<Option<Vec<f64>>> {
    let goals = rg.scenario().goal_count();
    let joint: Vec<Vec<f64>> = (0..goals)
        .map(|g| {
            let prior = a.gamma_type[g];
            type_reach(rg, a, GoalId(g)).reach.into_iter().map(|r| r * prior).collect()
        })
        .collect();
    rg.ids()
        .map(|h| {
            let masses: Vec<f64> = joint.iter().map(|row| row[h.0]).collect();
            let total: f64 = masses.iter().sum();
            (total > 0.0).then(|| masses.iter().map(|m| m / total).collect())
        })
        .collect()
}

/// Expected cost of type `g` under both strategies, with the default
/// continuation charged on moves that leave the restricted game.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TypeCost {
    pub cost: f64,
    /// Expected sum of edge weights plus the initial allocation.
    pub traversal: f64,
    pub escaped: f64,
}

pub fn expected_cost(rg: &RestrictedGame, d: &DefenderStrategy, a: &AttackerStrategy, g: GoalId) -> TypeCost {
    let s = rg.scenario();
    let r = s.allocation(g);
    let TypeReach { reach, escaped } = type_reach(rg, a, g);
    let mut cost = r;
    let mut traversal = r;
    for h in rg.ids() {
        let m = reach[h.0];
        if m == 0.0 || rg.is_goal_terminal(h, g) {
            continue;
        }
        let Some(policy) = a.policy(g, h) else { continue };
        let at = rg.last(h);
        let pi = allocation(d, h, g);
        for (&next, &p) in policy.columns.iter().zip(&policy.probs) {
            if p == 0.0 {
                continue;
            }
            let w = s.weight(at, next).unwrap_or(0.0);
            let tail = if rg.child(h, next).is_none() {
                rg.defaults().value(g, next)
            } else {
                0.0
            };
            cost += m * p * (w * pi + tail);
            traversal += m * p * w;
        }
    }
    TypeCost {
        cost,
        traversal,
        escaped,
    }
}

/// Overall expected Attacker cost `Σ_θ γ(θ) J^θ`.
pub fn total_cost(costs: &[TypeCost], gamma: &[f64]) -> f64 {
    costs.iter().zip(gamma).map(|(c, g)| g * c.cost).sum()
}

/// Cost of walking a fixed node sequence (starting at the start node) against
/// `d`, switching to the default Defender once the walk leaves the restricted
/// game. `None` when the walk uses a missing edge.
pub fn path_cost(rg: &RestrictedGame, d: &DefenderStrategy, g: GoalId, path: &[NodeId]) -> Option<f64> {
    let s = rg.scenario();
    let mut cost = s.allocation(g);
    let mut h = Some(rg.root());
    for pair in path.windows(2) {
        let (at, next) = (pair[0], pair[1]);
        if at == s.goal_node(g) {
            break;
        }
        let w = s.weight(at, next)?;
        let pi = match h {
            Some(h) => allocation(d, h, g),
            None => f64::from(u8::from(rg.defaults().defender_at(at) == g)),
        };
        cost += w * pi;
        h = h.and_then(|h| rg.child(h, next));
    }
    Some(cost)
}

/// Best-response values of every type against `d` (the default Defender
/// outside the restricted game), and their minimum.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackerResponse {
    pub per_type: Vec<f64>,
    pub value: f64,
}

pub fn attacker_best_response(rg: &RestrictedGame, d: &DefenderStrategy) -> AttackerResponse {
    let s = rg.scenario();
    let per_type: Vec<f64> = s
        .goals()
        .map(|g| {
            let mut br = vec![0.0; rg.len()];
            for h in rg.ids().rev() {
                let at = rg.last(h);
                if at == s.goal_node(g) {
                    continue;
                }
                let pi = allocation(d, h, g);
                br[h.0] = s
                    .action_set(g, at)
                    .into_iter()
                    .map(|next| {
                        let w = s.weight(at, next).unwrap_or(0.0);
                        let tail = match rg.child(h, next) {
                            Some(c) => br[c.0],
                            None => rg.defaults().value(g, next),
                        };
                        w * pi + tail
                    })
                    .fold(f64::INFINITY, f64::min);
            }
            br[rg.root().0] + s.allocation(g)
        })
        .collect();
    let value = per_type.iter().copied().fold(f64::INFINITY, f64::min);
    AttackerResponse { per_type, value }
}

/// Myopic best response of the Defender: Defender actions never affect the
/// walk, so each history is optimised on its own.
#[derive(Debug, Clone, PartialEq)]
pub struct DefenderResponse {
    pub strategy: DefenderStrategy,
    pub value: f64,
}

pub fn defender_best_response(rg: &RestrictedGame, a: &AttackerStrategy) -> DefenderResponse {
    let s = rg.scenario();
    let goals = s.goal_count();
    let reach: Vec<TypeReach> = s.goals().map(|g| type_reach(rg, a, g)).collect();
    let mut value: f64 = s.goals().map(|g| a.gamma_type[g.0] * s.allocation(g)).sum();
    let mut pi = Vec::with_capacity(rg.len());
    for h in rg.ids() {
        let at = rg.last(h);
        let mut gain = vec![0.0; goals];
        for g in s.goals() {
            let m = a.gamma_type[g.0] * reach[g.0].reach[h.0];
            if m == 0.0 || rg.is_goal_terminal(h, g) {
                continue;
            }
            let Some(policy) = a.policy(g, h) else { continue };
            for (&next, &p) in policy.columns.iter().zip(&policy.probs) {
                let w = s.weight(at, next).unwrap_or(0.0);
                gain[g.0] += m * p * w;
                if rg.child(h, next).is_none() {
                    value += m * p * rg.defaults().value(g, next);
                }
            }
        }
        let mut best = 0;
        for (i, &x) in gain.iter().enumerate() {
            if x > gain[best] {
                best = i;
            }
        }
        value += gain[best];
        let mut row = vec![0.0; goals];
        row[best] = 1.0;
        pi.push(row);
    }
    DefenderResponse {
        strategy: DefenderStrategy { pi },
        value,
    }
}

/// Spread of costs across supported types and across each type's arrival
/// histories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndifferenceReport {
    pub type_spread: f64,
    /// Per type; zero for unsupported types.
    pub trajectory_spread: Vec<f64>,
    pub violations: Vec<String>,
}

pub fn check_indifference(
    rg: &RestrictedGame,
    d: &DefenderStrategy,
    a: &AttackerStrategy,
    costs: &[TypeCost],
    zero_tol: f64,
    tol: f64,
) -> IndifferenceReport {
    let s = rg.scenario();
    let mut violations = Vec::new();
    let supported: Vec<GoalId> = s.goals().filter(|g| a.gamma_type[g.0] > zero_tol).collect();
    let spread = |xs: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
        if lo <= hi { hi - lo } else { 0.0 }
    };
    let type_spread = spread(&mut supported.iter().map(|g| costs[g.0].cost));
    if type_spread > tol {
        violations.push(format!("supported types differ in cost by {type_spread:.3e}"));
    }

    let mut trajectory_spread = vec![0.0; s.goal_count()];
    for &g in &supported {
        let reach = type_reach(rg, a, g).reach;
        // cost accumulated along each history's own path
        let mut along = vec![0.0; rg.len()];
        along[rg.root().0] = s.allocation(g);
        let mut arrivals = Vec::new();
        for h in rg.ids() {
            if let Some(p) = rg.parent(h) {
                if rg.is_goal_terminal(p, g) {
                    continue;
                }
                let w = s.weight(rg.last(p), rg.last(h)).unwrap_or(0.0);
                along[h.0] = along[p.0] + w * allocation(d, p, g);
            }
            if rg.last(h) == s.goal_node(g) && reach[h.0] > zero_tol {
                arrivals.push(h);
            }
        }
        let sp = spread(&mut arrivals.iter().map(|h| along[h.0]));
        if sp > tol {
            violations.push(format!(
                "type {} has on-path arrival costs differing by {sp:.3e}",
                s.goal_name(g)
            ));
        }
        trajectory_spread[g.0] = sp;
    }
    IndifferenceReport {
        type_spread,
        trajectory_spread,
        violations,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeVerification {
    pub goal: String,
    pub gamma: f64,
    pub cost: f64,
    pub best_response: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub certified: bool,
    /// `J(π*, γ*) − min_θ BR^θ(π*)`.
    pub attacker_gap: f64,
    /// `BR(γ*) − J(π*, γ*)`.
    pub defender_gap: f64,
    pub expected_cost: f64,
    pub attacker_best_response: f64,
    pub defender_best_response: f64,
    pub escaped_mass: f64,
    pub per_type: Vec<TypeVerification>,
    pub indifference: IndifferenceReport,
}

/// Checks both Nash inequalities with independent best responses. Gaps are
/// compared against `tol · max(1, |J|)`.
pub fn verify_equilibrium(
    rg: &RestrictedGame,
    d: &DefenderStrategy,
    a: &AttackerStrategy,
    tol: f64,
) -> VerificationReport {
    let s = rg.scenario();
    let costs: Vec<TypeCost> = s.goals().map(|g| expected_cost(rg, d, a, g)).collect();
    let j = total_cost(&costs, &a.gamma_type);
    let abr = attacker_best_response(rg, d);
    let dbr = defender_best_response(rg, a);
    let attacker_gap = j - abr.value;
    let defender_gap = dbr.value - j;
    let escaped_mass: f64 = costs.iter().zip(&a.gamma_type).map(|(c, g)| g * c.escaped).sum();
    let bound = tol * j.abs().max(1.0);
    let indifference = check_indifference(rg, d, a, &costs, tol, bound);
    let per_type = s
        .goals()
        .map(|g| TypeVerification {
            goal: s.goal_name(g).to_string(),
            gamma: a.gamma_type[g.0],
            cost: costs[g.0].cost,
            best_response: abr.per_type[g.0].is_finite().then_some(abr.per_type[g.0]),
        })
        .collect();
    VerificationReport {
        certified: attacker_gap <= bound && defender_gap <= bound && escaped_mass <= tol,
        attacker_gap,
        defender_gap,
        expected_cost: j,
        attacker_best_response: abr.value,
        defender_best_response: dbr.value,
        escaped_mass,
        per_type,
        indifference,
    }
}

//! The solution document: a self-contained JSON record of an equilibrium
//! that can be re-verified without the LP solver.

use std::sync::Arc;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{expected_cost, propagate_beliefs, type_reach, verify_equilibrium, TypeCost, VerificationReport};
use crate::defaults::ContinuationTable;
use crate::double_oracle::{EquilibriumSolution, SolveOptions};
use crate::environment::{GoalId, Scenario};
use crate::exec::Execution;
use crate::game_tree::{GameError, History, RestrictedGame};
use crate::metrics::{compute_metrics, MetricsReport};
use crate::restricted::{AttackerStrategy, DefenderStrategy, LocalPolicy};

/// Significant digits of every real number written out.
pub const SIGNIFICANT_DIGITS: usize = 12;

/// Distribution keyed by node or goal name.
pub type Distribution = IndexMap<String, f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationSection {
    #[serde(flatten)]
    pub report: VerificationReport,
    pub lp_value: f64,
    pub dual_value: f64,
    pub duality_gap: f64,
    pub iterations: usize,
    pub tol: f64,
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionDocument {
    pub value: f64,
    pub gamma_type: Distribution,
    /// Type → history → move distribution, on histories the type reaches.
    pub attacker_policies: IndexMap<String, IndexMap<String, Distribution>>,
    /// History → allocation distribution over the whole restricted game.
    pub defender_policy: IndexMap<String, Distribution>,
    /// History → posterior over types, on histories reached by some type.
    pub beliefs: IndexMap<String, Distribution>,
    pub verification: VerificationSection,
    pub metrics: MetricsReport,
    pub restricted_histories: Vec<String>,
}

#[derive(Debug, Error)]
pub enum DocumentError {
    #[error("invalid solution JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown goal {0} in the solution")]
    UnknownGoal(String),
    #[error("the solution has no entry for goal {0}")]
    MissingGoal(String),
    #[error("history {0} does not fit the scenario")]
    BadHistory(String),
    #[error("history {history} has no move to {node}")]
    BadMove { history: String, node: String },
    #[error("no defender allocation at history {0}")]
    MissingAllocation(String),
    #[error(transparent)]
    Game(#[from] GameError),
}

pub fn round_significant(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        // also turns -0.0 into 0.0
        return if x == 0.0 { 0.0 } else { x };
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x).parse().unwrap_or(x)
}

fn round_value(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Number(n) if n.is_f64() => {
            if let Some(r) = n.as_f64().map(round_significant).and_then(serde_json::Number::from_f64) {
                *n = r;
            }
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(round_value),
        serde_json::Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

impl SolutionDocument {
    /// Pretty JSON with every real rounded to [`SIGNIFICANT_DIGITS`].
    pub fn to_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("solution document serialises");
        round_value(&mut v);
        let mut out = serde_json::to_string_pretty(&v).expect("JSON value serialises");
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<Self, DocumentError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn certified(&self) -> bool {
        self.verification.report.certified
    }
}

fn named(s: &Scenario, values: &[f64]) -> Distribution {
    s.goals().map(|g| (s.goal_name(g).to_string(), values[g.0])).collect()
}

/// Verification and metrics of a strategy pair on a restricted game.
pub fn evaluate(
    rg: &RestrictedGame,
    d: &DefenderStrategy,
    a: &AttackerStrategy,
    value: f64,
    tol: f64,
) -> (VerificationReport, MetricsReport) {
    let s = rg.scenario();
    let report = verify_equilibrium(rg, d, a, tol);
    let costs: Vec<TypeCost> = s.goals().map(|g| expected_cost(rg, d, a, g)).collect();
    let metrics = compute_metrics(s, &a.gamma_type, &costs, value, tol);
    (report, metrics)
}

/// Builds the document of a solved game and certifies it. Besides the two
/// best-response gaps, certification requires strong duality and agreement
/// between the LP value and the exact expected cost.
pub fn build_document(sol: &EquilibriumSolution, opts: &SolveOptions) -> SolutionDocument {
    let rg = &sol.game;
    let s = rg.scenario();
    let tol = opts.tol;
    let (mut report, metrics) = evaluate(rg, &sol.defender, &sol.attacker, sol.value, tol);
    let bound = tol * sol.value.abs().max(1.0);
    report.certified &= sol.duality_gap() <= bound && (report.expected_cost - sol.value).abs() <= bound;

    let mut attacker_policies = IndexMap::new();
    for g in s.goals() {
        let reach = type_reach(rg, &sol.attacker, g).reach;
        let mut per_hist = IndexMap::new();
        for h in rg.ids() {
            if reach[h.0] == 0.0 {
                continue;
            }
            if let Some(p) = sol.attacker.policy(g, h) {
                let dist = p
                    .columns
                    .iter()
                    .zip(&p.probs)
                    .map(|(&v, &q)| (s.name(v).to_string(), q))
                    .collect();
                per_hist.insert(rg.key(h), dist);
            }
        }
        attacker_policies.insert(s.goal_name(g).to_string(), per_hist);
    }
    let defender_policy = rg.ids().map(|h| (rg.key(h), named(s, &sol.defender.pi[h.0]))).collect();
    let beliefs = propagate_beliefs(rg, &sol.attacker)
        .into_iter()
        .zip(rg.ids())
        .filter_map(|(b, h)| b.map(|b| (rg.key(h), named(s, &b))))
        .collect();

    SolutionDocument {
        value: sol.value,
        gamma_type: named(s, &sol.attacker.gamma_type),
        attacker_policies,
        defender_policy,
        beliefs,
        verification: VerificationSection {
            report,
            lp_value: sol.value,
            dual_value: sol.dual_value,
            duality_gap: sol.duality_gap(),
            iterations: sol.iterations,
            tol,
            delta: rg.defaults().delta,
        },
        metrics,
        restricted_histories: rg.ids().map(|h| rg.key(h)).collect(),
    }
}

fn goal_index(s: &Scenario, name: &str) -> Result<GoalId, DocumentError> {
    s.goals()
        .find(|&g| s.goal_name(g) == name)
        .ok_or_else(|| DocumentError::UnknownGoal(name.to_string()))
}

fn by_goal(s: &Scenario, dist: &Distribution) -> Result<Vec<f64>, DocumentError> {
    let mut out = vec![None; s.goal_count()];
    for (name, &p) in dist {
        out[goal_index(s, name)?.0] = Some(p);
    }
    out.into_iter()
        .zip(s.goals())
        .map(|(p, g)| p.ok_or_else(|| DocumentError::MissingGoal(s.goal_name(g).to_string())))
        .collect()
}

/// Strategies and restricted game recovered from a document.
pub struct Recovered<'a> {
    pub game: RestrictedGame<'a>,
    pub attacker: AttackerStrategy,
    pub defender: DefenderStrategy,
}

pub fn recover<'a>(s: &'a Scenario, doc: &SolutionDocument) -> Result<Recovered<'a>, DocumentError> {
    let histories = doc
        .restricted_histories
        .iter()
        .map(|k| History::parse(k, s).ok_or_else(|| DocumentError::BadHistory(k.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    let table = ContinuationTable::build(s, doc.verification.delta, Execution::Sequential);
    let rg = RestrictedGame::from_histories(s, Arc::new(table), &histories)?;
    let find = |key: &str| {
        History::parse(key, s)
            .and_then(|h| rg.find(&h))
            .ok_or_else(|| DocumentError::BadHistory(key.to_string()))
    };

    let gamma_type = by_goal(s, &doc.gamma_type)?;
    let mut policies = vec![vec![None; rg.len()]; s.goal_count()];
    for (goal, per_hist) in &doc.attacker_policies {
        let g = goal_index(s, goal)?;
        for (key, dist) in per_hist {
            let h = find(key)?;
            let mut columns = Vec::with_capacity(dist.len());
            for node in dist.keys() {
                let v = s.node(node).ok_or_else(|| DocumentError::BadMove {
                    history: key.clone(),
                    node: node.clone(),
                })?;
                if !s.action_set(g, rg.last(h)).contains(&v) {
                    return Err(DocumentError::BadMove {
                        history: key.clone(),
                        node: node.clone(),
                    });
                }
                columns.push(v);
            }
            policies[g.0][h.0] = Some(LocalPolicy {
                columns,
                probs: dist.values().copied().collect(),
            });
        }
    }
    let mut pi = vec![None; rg.len()];
    for (key, dist) in &doc.defender_policy {
        pi[find(key)?.0] = Some(by_goal(s, dist)?);
    }
    let pi = pi
        .into_iter()
        .zip(rg.ids())
        .map(|(p, h)| p.ok_or_else(|| DocumentError::MissingAllocation(rg.key(h))))
        .collect::<Result<Vec<_>, _>>()?;

    Ok(Recovered {
        attacker: AttackerStrategy {
            gamma_type,
            realization: vec![vec![None; rg.len()]; s.goal_count()],
            policies,
        },
        defender: DefenderStrategy { pi },
        game: rg,
    })
}

/// Re-checks a document against its scenario from the written strategies
/// alone.
pub fn verify_document(s: &Scenario, doc: &SolutionDocument) -> Result<VerificationReport, DocumentError> {
    let r = recover(s, doc)?;
    Ok(verify_equilibrium(&r.game, &r.defender, &r.attacker, doc.verification.tol))
}

//! One independent solve per start node.

use std::sync::Arc;
use std::time::Instant;

use log::warn;

use crate::defaults::ContinuationTable;
use crate::document::build_document;
use crate::double_oracle::{solve_with_table, SolveOptions};
use crate::environment::{NodeId, Scenario};
use crate::exec::Execution;

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub value: f64,
    pub voi: f64,
    pub rod: f64,
    /// Goal names with positive prior.
    pub support: Vec<String>,
    pub iterations: usize,
    pub certified: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub start: String,
    pub outcome: Result<CellResult, String>,
    pub millis: f64,
}

/// Solves `s` from a given start node.
pub fn solve_cell(s: &Scenario, table: &Arc<ContinuationTable>, start: NodeId, opts: &SolveOptions) -> Result<CellResult, String> {
    let cell = s.with_start(start).map_err(|e| e.to_string())?;
    let sol = solve_with_table(&cell, Arc::clone(table), opts).map_err(|e| e.to_string())?;
    let doc = build_document(&sol, opts);
    Ok(CellResult {
        value: sol.value,
        voi: doc.metrics.voi,
        rod: doc.metrics.rod,
        support: doc.metrics.support,
        iterations: sol.iterations,
        certified: doc.verification.report.certified,
    })
}

/// Solves every start in `starts`; failures are kept in their row. Rows come
/// back in the order of `starts` whatever the scheduling.
pub fn sweep(s: &Scenario, starts: &[NodeId], opts: &SolveOptions, exec: Execution, jobs: Option<usize>) -> Vec<SweepRow> {
    // continuation values do not depend on the start
    let table = Arc::new(ContinuationTable::build(s, opts.delta, opts.exec));
    exec.map_with_jobs(jobs, starts, |&v| {
        let t0 = Instant::now();
        let outcome = solve_cell(s, &table, v, opts);
        match &outcome {
            Err(e) => warn!("start {}: {e}", s.name(v)),
            Ok(c) if !c.certified => warn!("start {}: equilibrium not certified", s.name(v)),
            Ok(_) => {}
        }
        SweepRow {
            start: s.name(v).to_string(),
            outcome,
            millis: t0.elapsed().as_secs_f64() * 1e3,
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::generate_grid;

    #[test]
    fn three_by_three_rows_in_order_and_mode_independent() {
        let s = generate_grid(3, 3, &[(0, 0), (2, 2)], (1, 1), 1.0).unwrap();
        let starts: Vec<NodeId> = s.nodes().collect();
        let opts = SolveOptions::default();
        let seq = sweep(&s, &starts, &opts, Execution::Sequential, None);
        let par = sweep(&s, &starts, &opts, Execution::Parallel, Some(2));
        assert_eq!(seq.len(), 9);
        for (a, b) in seq.iter().zip(&par) {
            assert_eq!(a.start, b.start);
            assert_eq!(a.outcome, b.outcome);
        }
        let centre = seq.iter().find(|r| r.start == s.name(s.start())).unwrap();
        let c = centre.outcome.as_ref().unwrap();
        assert_eq!(c.support.len(), 2);
        assert!(c.voi > 0.0);
        assert!(seq.iter().all(|r| r.outcome.as_ref().is_ok_and(|c| c.certified)));
    }
}

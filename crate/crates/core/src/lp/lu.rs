//! Sparse LU factorisation of the simplex basis with product-form updates.
//!
//! Columns are factored left-looking in a fixed order (unit columns first,
//! then by increasing length). Each step `k` pivots on row `prow[k]` and
//! stores the multipliers below the pivot (`L_k`) and the entries above it
//! (`U_k`, indexed by earlier steps). Basis changes between refactorisations
//! are kept as eta columns.

const NONE: usize = usize::MAX;

/// Column view used while factoring: `(row, value)` pairs.
pub(crate) type SparseCol = Vec<(usize, f64)>;

#[derive(Debug, Default)]
pub(crate) struct LuFactors {
    m: usize,
    prow: Vec<usize>,
    slot: Vec<usize>,
    diag: Vec<f64>,
    step_of_row: Vec<usize>,
    l_start: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<f64>,
    u_start: Vec<usize>,
    u_idx: Vec<usize>,
    u_val: Vec<f64>,
    etas: Vec<Eta>,
}

#[derive(Debug)]
struct Eta {
    slot: usize,
    pivot: f64,
    entries: Vec<(usize, f64)>,
}

/// Slots whose columns were linearly dependent, paired with the rows left
/// without a pivot. The caller swaps in the logical column of each row.
#[derive(Debug)]
pub(crate) struct Singular {
    pub replacements: Vec<(usize, usize)>,
}

impl LuFactors {
    /// Factors the basis whose slot `r` holds `cols[r]`.
    pub fn factor(m: usize, cols: &[SparseCol]) -> Result<Self, Singular> {
        debug_assert_eq!(cols.len(), m);
        let mut lu = LuFactors {
            m,
            prow: Vec::with_capacity(m),
            slot: Vec::with_capacity(m),
            diag: Vec::with_capacity(m),
            step_of_row: vec![NONE; m],
            l_start: vec![0],
            u_start: vec![0],
            ..Default::default()
        };

        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by_key(|&r| (cols[r].len() != 1, cols[r].len(), r));

        let mut x = vec![0.0; m];
        let mut in_nz = vec![false; m];
        let mut nz: Vec<usize> = Vec::new();
        let mut visited = vec![false; m];
        let mut reach: Vec<usize> = Vec::new();
        let mut stack: Vec<(usize, usize)> = Vec::new();
        let mut failed = Vec::new();

        for &r in &order {
            nz.clear();
            for &(i, a) in &cols[r] {
                if !in_nz[i] {
                    in_nz[i] = true;
                    nz.push(i);
                }
                x[i] += a;
            }

            // steps reachable through L from the pivoted rows of the column
            reach.clear();
            for &i in &nz {
                let k = lu.step_of_row[i];
                if k != NONE && !visited[k] {
                    visited[k] = true;
                    stack.push((k, lu.l_start[k]));
                    while let Some(&mut (kk, ref mut p)) = stack.last_mut() {
                        let end = lu.l_start[kk + 1];
                        let mut pushed = None;
                        while *p < end {
                            let row = lu.l_idx[*p];
                            *p += 1;
                            let k2 = lu.step_of_row[row];
                            if k2 != NONE && !visited[k2] {
                                visited[k2] = true;
                                pushed = Some(k2);
                                break;
                            }
                        }
                        match pushed {
                            Some(k2) => stack.push((k2, lu.l_start[k2])),
                            None => {
                                reach.push(kk);
                                stack.pop();
                            }
                        }
                    }
                }
            }
            reach.sort_unstable();

            for &k in &reach {
                visited[k] = false;
                let xk = x[lu.prow[k]];
                if xk == 0.0 {
                    continue;
                }
                for p in lu.l_start[k]..lu.l_start[k + 1] {
                    let i = lu.l_idx[p];
                    if !in_nz[i] {
                        in_nz[i] = true;
                        nz.push(i);
                    }
                    x[i] -= lu.l_val[p] * xk;
                }
            }

            let mut best = NONE;
            let mut best_abs = 0.0;
            for &i in &nz {
                if lu.step_of_row[i] == NONE {
                    let a = x[i].abs();
                    if a > best_abs || (a == best_abs && a > 0.0 && i < best) {
                        best_abs = a;
                        best = i;
                    }
                }
            }

            if best == NONE || best_abs < 1e-11 {
                failed.push(r);
            } else {
                let k = lu.prow.len();
                let piv = x[best];
                for &step in &reach {
                    let u = x[lu.prow[step]];
                    if u != 0.0 {
                        lu.u_idx.push(step);
                        lu.u_val.push(u);
                    }
                }
                for &i in &nz {
                    if lu.step_of_row[i] == NONE && i != best && x[i] != 0.0 {
                        lu.l_idx.push(i);
                        lu.l_val.push(x[i] / piv);
                    }
                }
                lu.prow.push(best);
                lu.slot.push(r);
                lu.diag.push(piv);
                lu.step_of_row[best] = k;
                lu.l_start.push(lu.l_idx.len());
                lu.u_start.push(lu.u_idx.len());
            }

            for &i in &nz {
                x[i] = 0.0;
                in_nz[i] = false;
            }
        }

        if failed.is_empty() {
            Ok(lu)
        } else {
            let free_rows = (0..m).filter(|&i| lu.step_of_row[i] == NONE);
            Err(Singular {
                replacements: failed.into_iter().zip(free_rows).collect(),
            })
        }
    }

    pub fn eta_count(&self) -> usize {
        self.etas.len()
    }

    /// Solves `B d = v` in place; `v` is indexed by row on entry and by basis
    /// slot on exit.
    pub fn ftran(&self, v: &mut [f64], work: &mut [f64]) {
        let m = self.m;
        // L y = v, y indexed by step (stored in work)
        for k in 0..m {
            let yk = v[self.prow[k]];
            work[k] = yk;
            if yk != 0.0 {
                for p in self.l_start[k]..self.l_start[k + 1] {
                    v[self.l_idx[p]] -= self.l_val[p] * yk;
                }
            }
        }
        // U w = y
        for k in (0..m).rev() {
            let wk = work[k] / self.diag[k];
            work[k] = wk;
            if wk != 0.0 {
                for p in self.u_start[k]..self.u_start[k + 1] {
                    work[self.u_idx[p]] -= self.u_val[p] * wk;
                }
            }
        }
        for k in 0..m {
            v[self.slot[k]] = work[k];
        }
        for eta in &self.etas {
            let xr = v[eta.slot] / eta.pivot;
            v[eta.slot] = xr;
            if xr != 0.0 {
                for &(i, a) in &eta.entries {
                    v[i] -= a * xr;
                }
            }
        }
    }

    /// Solves `B^T y = c` in place; `c` is indexed by basis slot on entry and
    /// by row on exit.
    pub fn btran(&self, c: &mut [f64], work: &mut [f64]) {
        let m = self.m;
        for eta in self.etas.iter().rev() {
            let mut s = c[eta.slot];
            for &(i, a) in &eta.entries {
                s -= a * c[i];
            }
            c[eta.slot] = s / eta.pivot;
        }
        // U^T v = P c
        for k in 0..m {
            let mut s = c[self.slot[k]];
            for p in self.u_start[k]..self.u_start[k + 1] {
                s -= self.u_val[p] * work[self.u_idx[p]];
            }
            work[k] = s / self.diag[k];
        }
        // L^T y = v
        for k in (0..m).rev() {
            let mut s = work[k];
            for p in self.l_start[k]..self.l_start[k + 1] {
                s -= self.l_val[p] * c[self.l_idx[p]];
            }
            c[self.prow[k]] = s;
        }
    }

    /// Records that slot `slot` now holds the column whose FTRAN image is `d`.
    pub fn push_eta(&mut self, slot: usize, d: &[f64]) {
        let entries = d
            .iter()
            .enumerate()
            .filter(|&(i, &a)| i != slot && a != 0.0)
            .map(|(i, &a)| (i, a))
            .collect();
        self.etas.push(Eta {
            slot,
            pivot: d[slot],
            entries,
        });
    }
}

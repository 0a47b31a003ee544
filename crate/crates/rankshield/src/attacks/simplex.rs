//! Dense two-phase simplex for the small linear programs the trust-region
//! attack builds. All variables are non-negative; constraints may be <=, >=,
//! or ==. Bland's rule guarantees termination; a pivot magnitude below 1e-9
//! is treated as zero.

use crate::error::{Error, Result};

pub const PIVOT_TOL: f64 = 1e-9;
const MAX_PIVOTS: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rel {
    Le,
    Ge,
    Eq,
}

/// `minimize objective . x` subject to the rows, with `x >= 0`.
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub rows: Vec<(Vec<f64>, Rel, f64)>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub objective_value: f64,
    pub x: Vec<f64>,
}

/// Outcome of a solve attempt; `Infeasible` is a normal result for
/// feasibility probes, while malformed input is an error.
#[derive(Debug, Clone)]
pub enum LpOutcome {
    Optimal(LpSolution),
    Infeasible,
    Unbounded,
}

struct Tableau {
    /// `rows x (cols + 1)`; last column is the RHS.
    t: Vec<Vec<f64>>,
    /// Reduced-cost row for the active phase, last entry is -objective.
    obj: Vec<f64>,
    basis: Vec<usize>,
    cols: usize,
}

impl Tableau {
    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.t[row][col];
        let inv = 1.0 / p;
        for v in self.t[row].iter_mut() {
            *v *= inv;
        }
        let pivot_row = self.t[row].clone();
        for (r, tr) in self.t.iter_mut().enumerate() {
            if r == row {
                continue;
            }
            let factor = tr[col];
            if factor != 0.0 {
                for (v, pv) in tr.iter_mut().zip(&pivot_row) {
                    *v -= factor * pv;
                }
            }
        }
        let factor = self.obj[col];
        if factor != 0.0 {
            for (v, pv) in self.obj.iter_mut().zip(&pivot_row) {
                *v -= factor * pv;
            }
        }
        self.basis[row] = col;
    }

    /// Bland's rule: entering = lowest-index column with a negative reduced
    /// cost; leaving = minimum ratio, ties to the lowest basis variable.
    fn run(&mut self, allowed_cols: usize) -> Result<bool> {
        for _ in 0..MAX_PIVOTS {
            let mut entering = None;
            for j in 0..allowed_cols {
                if self.obj[j] < -PIVOT_TOL {
                    entering = Some(j);
                    break;
                }
            }
            let Some(col) = entering else {
                return Ok(true); // optimal
            };
            let mut leaving: Option<(usize, f64)> = None;
            for r in 0..self.t.len() {
                let a = self.t[r][col];
                if a > PIVOT_TOL {
                    let ratio = self.t[r][self.cols] / a;
                    let better = match leaving {
                        None => true,
                        Some((lr, lratio)) => {
                            ratio < lratio - PIVOT_TOL
                                || (ratio < lratio + PIVOT_TOL
                                    && self.basis[r] < self.basis[lr])
                        }
                    };
                    if better {
                        leaving = Some((r, ratio));
                    }
                }
            }
            let Some((row, _)) = leaving else {
                return Ok(false); // unbounded in this column
            };
            self.pivot(row, col);
        }
        Err(Error::Numeric(
            "simplex exceeded the pivot budget".into(),
        ))
    }
}

/// Solves the LP; structural failures (pivot budget) are errors, while
/// infeasibility and unboundedness are reported as outcomes.
pub fn solve(problem: &LpProblem) -> Result<LpOutcome> {
    let n = problem.objective.len();
    for (i, (coeffs, _, _)) in problem.rows.iter().enumerate() {
        if coeffs.len() != n {
            return Err(Error::Shape(format!(
                "LP row {i} has {} coefficients, expected {n}",
                coeffs.len()
            )));
        }
    }
    if problem
        .objective
        .iter()
        .chain(problem.rows.iter().flat_map(|(c, _, b)| {
            c.iter().chain(std::iter::once(b))
        }))
        .any(|v| !v.is_finite())
    {
        return Err(Error::NonFinite("LP coefficients".into()));
    }

    let m = problem.rows.len();
    // Normalize to non-negative RHS.
    let mut rows: Vec<(Vec<f64>, Rel, f64)> = problem.rows.clone();
    for (coeffs, rel, b) in rows.iter_mut() {
        if *b < 0.0 {
            for v in coeffs.iter_mut() {
                *v = -*v;
            }
            *b = -*b;
            *rel = match *rel {
                Rel::Le => Rel::Ge,
                Rel::Ge => Rel::Le,
                Rel::Eq => Rel::Eq,
            };
        }
    }

    // Column layout: structural | slack/surplus | artificial.
    let n_slack = rows
        .iter()
        .filter(|(_, rel, _)| *rel != Rel::Eq)
        .count();
    let n_art = rows
        .iter()
        .filter(|(_, rel, _)| *rel != Rel::Le)
        .count();
    let cols = n + n_slack + n_art;

    let mut t = vec![vec![0.0; cols + 1]; m];
    let mut basis = vec![0usize; m];
    let mut art_cols = Vec::with_capacity(n_art);
    let mut slack_idx = n;
    let mut art_idx = n + n_slack;
    for (r, (coeffs, rel, b)) in rows.iter().enumerate() {
        t[r][..n].copy_from_slice(coeffs);
        t[r][cols] = *b;
        match rel {
            Rel::Le => {
                t[r][slack_idx] = 1.0;
                basis[r] = slack_idx;
                slack_idx += 1;
            }
            Rel::Ge => {
                t[r][slack_idx] = -1.0;
                slack_idx += 1;
                t[r][art_idx] = 1.0;
                basis[r] = art_idx;
                art_cols.push(art_idx);
                art_idx += 1;
            }
            Rel::Eq => {
                t[r][art_idx] = 1.0;
                basis[r] = art_idx;
                art_cols.push(art_idx);
                art_idx += 1;
            }
        }
    }

    let mut tab = Tableau {
        t,
        obj: vec![0.0; cols + 1],
        basis,
        cols,
    };

    // Phase 1: minimize the sum of artificials. Reduced costs start as
    // c_j - sum over basic artificial rows.
    if n_art > 0 {
        for &c in &art_cols {
            tab.obj[c] = 1.0;
        }
        for r in 0..m {
            if art_cols.contains(&tab.basis[r]) {
                let row = tab.t[r].clone();
                for (v, rv) in tab.obj.iter_mut().zip(&row) {
                    *v -= rv;
                }
            }
        }
        let optimal = tab.run(cols)?;
        if !optimal {
            return Err(Error::Internal(
                "phase-1 objective is bounded by construction".into(),
            ));
        }
        let phase1 = -tab.obj[cols];
        if phase1 > 1e-7 {
            return Ok(LpOutcome::Infeasible);
        }
        // Pivot lingering artificials out of the basis where possible.
        for r in 0..m {
            if art_cols.contains(&tab.basis[r]) {
                let mut pivoted = false;
                for j in 0..(n + n_slack) {
                    if tab.t[r][j].abs() > PIVOT_TOL {
                        tab.pivot(r, j);
                        pivoted = true;
                        break;
                    }
                }
                // A row with no structural pivot is redundant; its basic
                // artificial stays at zero and is harmless.
                let _ = pivoted;
            }
        }
    }

    // Phase 2: real objective, artificial columns frozen out.
    tab.obj = vec![0.0; cols + 1];
    tab.obj[..n].copy_from_slice(&problem.objective);
    for r in 0..m {
        let b = tab.basis[r];
        let cost = if b < n { problem.objective[b] } else { 0.0 };
        if cost != 0.0 {
            let row = tab.t[r].clone();
            for (v, rv) in tab.obj.iter_mut().zip(&row) {
                *v -= cost * rv;
            }
        }
    }
    let optimal = tab.run(n + n_slack)?;
    if !optimal {
        return Ok(LpOutcome::Unbounded);
    }

    let mut x = vec![0.0; n];
    for r in 0..m {
        if tab.basis[r] < n {
            x[tab.basis[r]] = tab.t[r][cols];
        }
    }
    Ok(LpOutcome::Optimal(LpSolution {
        objective_value: -tab.obj[cols],
        x,
    }))
}

/// Solve, treating infeasibility as an internal error. For LPs that are
/// feasible by construction.
pub fn solve_expect_feasible(problem: &LpProblem) -> Result<LpSolution> {
    match solve(problem)? {
        LpOutcome::Optimal(s) => Ok(s),
        LpOutcome::Infeasible => Err(Error::Internal(
            "LP infeasible but feasible by construction".into(),
        )),
        LpOutcome::Unbounded => Err(Error::Numeric("LP unbounded".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn optimal(p: &LpProblem) -> LpSolution {
        match solve(p).unwrap() {
            LpOutcome::Optimal(s) => s,
            other => panic!("expected optimal, got {other:?}"),
        }
    }

    #[test]
    fn simple_box_problem() {
        // min -x - y  s.t. x + y <= 1 -> optimum -1 at any vertex of the face.
        let p = LpProblem {
            objective: vec![-1.0, -1.0],
            rows: vec![(vec![1.0, 1.0], Rel::Le, 1.0)],
        };
        let s = optimal(&p);
        assert!((s.objective_value + 1.0).abs() < 1e-9);
        assert!((s.x[0] + s.x[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn two_constraint_vertex() {
        // min -3x - 5y  s.t. x <= 4, 2y <= 12, 3x + 2y <= 18 -> x=2, y=6, obj -36.
        let p = LpProblem {
            objective: vec![-3.0, -5.0],
            rows: vec![
                (vec![1.0, 0.0], Rel::Le, 4.0),
                (vec![0.0, 2.0], Rel::Le, 12.0),
                (vec![3.0, 2.0], Rel::Le, 18.0),
            ],
        };
        let s = optimal(&p);
        assert!((s.objective_value + 36.0).abs() < 1e-9);
        assert!((s.x[0] - 2.0).abs() < 1e-9);
        assert!((s.x[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn ge_and_eq_constraints() {
        // min x + y  s.t. x + 2y >= 4, x == 1 -> y = 1.5, obj 2.5.
        let p = LpProblem {
            objective: vec![1.0, 1.0],
            rows: vec![
                (vec![1.0, 2.0], Rel::Ge, 4.0),
                (vec![1.0, 0.0], Rel::Eq, 1.0),
            ],
        };
        let s = optimal(&p);
        assert!((s.objective_value - 2.5).abs() < 1e-9);
        assert!((s.x[1] - 1.5).abs() < 1e-9);
    }

    #[test]
    fn negative_rhs_is_normalized() {
        // x - y <= -2 with min x: x = 0, y >= 2 feasible -> obj 0.
        let p = LpProblem {
            objective: vec![1.0, 0.0],
            rows: vec![(vec![1.0, -1.0], Rel::Le, -2.0)],
        };
        let s = optimal(&p);
        assert!(s.objective_value.abs() < 1e-9);
        assert!(s.x[1] >= 2.0 - 1e-9);
    }

    #[test]
    fn detects_infeasible() {
        let p = LpProblem {
            objective: vec![0.0],
            rows: vec![
                (vec![1.0], Rel::Ge, 2.0),
                (vec![1.0], Rel::Le, 1.0),
            ],
        };
        assert!(matches!(solve(&p).unwrap(), LpOutcome::Infeasible));
        assert!(solve_expect_feasible(&p).is_err());
    }

    #[test]
    fn detects_unbounded() {
        let p = LpProblem {
            objective: vec![-1.0],
            rows: vec![(vec![-1.0], Rel::Le, 1.0)],
        };
        assert!(matches!(solve(&p).unwrap(), LpOutcome::Unbounded));
    }

    #[test]
    fn degenerate_vertex_terminates() {
        // Redundant constraints forcing degenerate pivots.
        let p = LpProblem {
            objective: vec![-1.0, -1.0],
            rows: vec![
                (vec![1.0, 0.0], Rel::Le, 1.0),
                (vec![1.0, 0.0], Rel::Le, 1.0),
                (vec![1.0, 1.0], Rel::Le, 1.0),
                (vec![0.0, 1.0], Rel::Le, 1.0),
            ],
        };
        let s = optimal(&p);
        assert!((s.objective_value + 1.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_malformed_input() {
        let ragged = LpProblem {
            objective: vec![1.0, 2.0],
            rows: vec![(vec![1.0], Rel::Le, 1.0)],
        };
        assert!(solve(&ragged).is_err());
        let nan = LpProblem {
            objective: vec![f64::NAN],
            rows: vec![],
        };
        assert!(solve(&nan).is_err());
    }

    #[test]
    fn equality_only_system() {
        // min 2x + 3y s.t. x + y == 4, x - y == 0 -> x = y = 2, obj 10.
        let p = LpProblem {
            objective: vec![2.0, 3.0],
            rows: vec![
                (vec![1.0, 1.0], Rel::Eq, 4.0),
                (vec![1.0, -1.0], Rel::Eq, 0.0),
            ],
        };
        let s = optimal(&p);
        assert!((s.objective_value - 10.0).abs() < 1e-9);
        assert!((s.x[0] - 2.0).abs() < 1e-9);
        assert!((s.x[1] - 2.0).abs() < 1e-9);
    }
}

//! Dense linear programming with a deterministic two-phase simplex.
//!
//! Maximizes `c · x` subject to equality rows `A x = b`, inequality rows
//! `G x >= h`, and `x >= 0`. Pivoting follows Bland's rule (lowest-index
//! entering column; leaving row by minimum ratio with ties broken by the
//! lowest basic-variable index), so the solved vertex is reproducible and
//! cycling is impossible. Sized for desk-scale instances: everything is a
//! dense `Vec<Vec<f64>>`.

use crate::error::{Error, Result};

/// A dense LP in the form `maximize c·x  s.t.  A x = b, G x >= h, x >= 0`.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    /// Objective coefficients `c`, one per variable; maximized.
    pub objective: Vec<f64>,
    /// Equality constraint rows `A`.
    pub eq: Vec<Vec<f64>>,
    pub eq_rhs: Vec<f64>,
    /// Inequality constraint rows `G` (each `G[r] · x >= ge_rhs[r]`).
    pub ge: Vec<Vec<f64>>,
    pub ge_rhs: Vec<f64>,
}

impl LinearProgram {
    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_vars();
        if self.eq.len() != self.eq_rhs.len() || self.ge.len() != self.ge_rhs.len() {
            return Err(Error::Precondition(
                "constraint matrix and right-hand side lengths differ".into(),
            ));
        }
        let finite = |v: &f64| v.is_finite();
        if !self.objective.iter().all(finite) {
            return Err(Error::Precondition("non-finite objective coefficient".into()));
        }
        for (rows, rhs, label) in [
            (&self.eq, &self.eq_rhs, "equality"),
            (&self.ge, &self.ge_rhs, "inequality"),
        ] {
            for (i, row) in rows.iter().enumerate() {
                if row.len() != n {
                    return Err(Error::Precondition(format!(
                        "{label} row {i} has {} coefficients, expected {n}",
                        row.len()
                    )));
                }
                if !row.iter().all(finite) || !rhs[i].is_finite() {
                    return Err(Error::Precondition(format!(
                        "non-finite coefficient in {label} row {i}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Plain-text tableau for offline inspection: objective row, then one
    /// line per constraint with its relation and right-hand side.
    pub fn tableau_dump(&self) -> String {
        let mut out = String::new();
        let fmt_row = |row: &[f64]| {
            row.iter()
                .map(|v| format!("{v:>12.6}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        out.push_str(&format!(
            "max  {}\nsubject to ({} equality, {} inequality rows, {} vars, x >= 0)\n",
            fmt_row(&self.objective),
            self.eq.len(),
            self.ge.len(),
            self.n_vars()
        ));
        for (row, rhs) in self.eq.iter().zip(&self.eq_rhs) {
            out.push_str(&format!("  {}  = {rhs:>12.6}\n", fmt_row(row)));
        }
        for (row, rhs) in self.ge.iter().zip(&self.ge_rhs) {
            out.push_str(&format!("  {} >= {rhs:>12.6}\n", fmt_row(row)));
        }
        out
    }
}

/// Result of a solve: an optimal vertex, or primal infeasibility with the
/// residual infeasibility mass left after phase 1.
#[derive(Debug, Clone)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible { residual: f64 },
}

/// Full-tableau simplex state over structural + surplus columns, with one
/// artificial column per row during phase 1.
struct Tableau {
    /// `rows[r]` has `width` coefficient entries followed by the rhs.
    rows: Vec<Vec<f64>>,
    /// Basic variable (column index) per row.
    basis: Vec<usize>,
    /// Number of non-artificial columns.
    width: usize,
    /// Total columns including artificials.
    total: usize,
}

impl Tableau {
    fn rhs(&self, r: usize) -> f64 {
        self.rows[r][self.total]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let scale = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= scale;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let factor = row[c];
            if factor != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= factor * pv;
                }
            }
        }
        self.basis[r] = c;
    }

    /// One simplex phase maximizing `obj` (length `total`) over the current
    /// basis with Bland's rule. Returns the objective value, or an error
    /// when a column can increase without bound.
    fn run(&mut self, obj: &[f64], tol: f64, allow: impl Fn(usize) -> bool) -> Result<f64> {
        loop {
            // Reduced costs z_j - c_j via the dual prices of the basis.
            let duals: Vec<f64> = self.basis.iter().map(|&b| obj[b]).collect();
            let mut entering = None;
            for c in 0..self.total {
                if !allow(c) || self.basis.contains(&c) {
                    continue;
                }
                let mut z = 0.0;
                for (r, row) in self.rows.iter().enumerate() {
                    z += duals[r] * row[c];
                }
                if obj[c] - z > tol {
                    entering = Some(c);
                    break; // Bland: lowest improving index.
                }
            }
            let Some(c) = entering else {
                let mut value = 0.0;
                for (r, &b) in self.basis.iter().enumerate() {
                    value += obj[b] * self.rhs(r);
                }
                return Ok(value);
            };
            let mut leaving: Option<(usize, f64)> = None;
            for r in 0..self.rows.len() {
                let a = self.rows[r][c];
                if a <= tol {
                    continue;
                }
                let ratio = self.rhs(r) / a;
                let better = match leaving {
                    None => true,
                    Some((r0, ratio0)) => {
                        ratio < ratio0 - tol
                            || (ratio <= ratio0 + tol && self.basis[r] < self.basis[r0])
                    }
                };
                if better {
                    leaving = Some((r, ratio));
                }
            }
            let Some((r, _)) = leaving else {
                return Err(Error::Precondition(
                    "unbounded linear program: a column can increase without bound".into(),
                ));
            };
            self.pivot(r, c);
        }
    }
}

/// Solves the program with a deterministic two-phase simplex. `tol` is the
/// pivot/zero threshold (the returned vertex is exact arithmetic on the
/// chosen basis up to elimination round-off).
pub fn solve_lp(lp: &LinearProgram, tol: f64) -> Result<LpOutcome> {
    lp.validate()?;
    let n = lp.n_vars();
    let n_ge = lp.ge.len();
    let width = n + n_ge; // structural + surplus columns
    let m = lp.eq.len() + n_ge;
    let total = width + m; // + artificial columns

    let mut rows = Vec::with_capacity(m);
    let push_row = |coeffs: &[f64], surplus: Option<usize>, rhs: f64, rows: &mut Vec<Vec<f64>>| {
        let mut row = vec![0.0; total + 1];
        row[..n].copy_from_slice(coeffs);
        if let Some(s) = surplus {
            row[n + s] = -1.0;
        }
        row[total] = rhs;
        let r = rows.len();
        if rhs < 0.0 {
            for v in row.iter_mut() {
                *v = -*v;
            }
        }
        row[width + r] = 1.0; // artificial
        rows.push(row);
    };
    for (row, &rhs) in lp.eq.iter().zip(&lp.eq_rhs) {
        push_row(row, None, rhs, &mut rows);
    }
    for (i, (row, &rhs)) in lp.ge.iter().zip(&lp.ge_rhs).enumerate() {
        push_row(row, Some(i), rhs, &mut rows);
    }

    let basis: Vec<usize> = (0..m).map(|r| width + r).collect();
    let mut tab = Tableau {
        rows,
        basis,
        width,
        total,
    };

    // Phase 1: drive out infeasibility by maximizing minus the artificial mass.
    let mut phase1 = vec![0.0; total];
    for c in width..total {
        phase1[c] = -1.0;
    }
    let infeasibility = -tab.run(&phase1, tol, |_| true)?;
    if infeasibility > tol.max(1e-7) {
        return Ok(LpOutcome::Infeasible {
            residual: infeasibility,
        });
    }
    // Pivot any artificial still basic (at zero) onto a structural column;
    // rows with no eligible column are redundant and stay inert.
    for r in 0..m {
        if tab.basis[r] >= width {
            if let Some(c) = (0..width).find(|&c| tab.rows[r][c].abs() > tol) {
                tab.pivot(r, c);
            }
        }
    }

    // Phase 2 over structural and surplus columns only.
    let mut phase2 = vec![0.0; total];
    phase2[..n].copy_from_slice(&lp.objective);
    let w = tab.width;
    let objective = tab.run(&phase2, tol, |c| c < w)?;

    let mut x = vec![0.0; n];
    for (r, &b) in tab.basis.iter().enumerate() {
        if b < n {
            x[b] = tab.rhs(r).max(0.0);
        }
    }
    Ok(LpOutcome::Optimal { x, objective })
}

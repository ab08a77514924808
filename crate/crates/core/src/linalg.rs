//! Dense linear solves for the small systems that appear throughout:
//! discounted state-value evaluations and occupancy flow equations,
//! all of size |G| (or a small multiple of it).

use crate::error::{Error, Result};

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
/// `a` is row-major `n x n` and is consumed; `b` has length `n`.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    debug_assert!(a.len() == n && a.iter().all(|row| row.len() == n));
    for col in 0..n {
        // Pivot on the largest remaining entry in this column.
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col].abs() < 1e-12 {
            return Err(Error::NonConvergence {
                what: "linear solve (singular matrix)".into(),
                iterations: col,
                residual: a[pivot][col].abs(),
            });
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        let inv = 1.0 / a[col][col];
        for row in col + 1..n {
            let f = a[row][col] * inv;
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    // Back substitution.
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

/// Solves the discounted evaluation system `v = r + gamma * P v`
/// for a row-stochastic `P` (row-major `n x n`), i.e.
/// `(I - gamma P) v = r`.
pub fn discounted_value(p: &[f64], r: &[f64], gamma: f64) -> Result<Vec<f64>> {
    let n = r.len();
    debug_assert_eq!(p.len(), n * n);
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            a[i][j] = if i == j { 1.0 } else { 0.0 } - gamma * p[i * n + j];
        }
    }
    solve(a, r.to_vec())
}

/// Solves the discounted flow system `nu = d + gamma * P^T nu`,
/// whose solution is the discounted expected visit count of each
/// state under kernel `P` (row-major, rows = current state) started
/// from `d`. The total mass of the solution is `sum(d) / (1-gamma)`.
pub fn discounted_flow(p: &[f64], d: &[f64], gamma: f64) -> Result<Vec<f64>> {
    let n = d.len();
    debug_assert_eq!(p.len(), n * n);
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            // (I - gamma P^T)[i][j] = delta_ij - gamma P[j][i]
            a[i][j] = if i == j { 1.0 } else { 0.0 } - gamma * p[j * n + i];
        }
    }
    solve(a, d.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let a = vec![vec![2.0, 1.0], vec![1.0, 3.0]];
        let b = vec![3.0, 5.0];
        let x = solve(a, b).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-12);
        assert!((x[1] - 1.4).abs() < 1e-12);
    }

    #[test]
    fn rejects_singular() {
        let a = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        assert!(solve(a, vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn two_state_swap_chain_value() {
        // Deterministic swap between two states, reward 1 in state 0.
        let p = [0.0, 1.0, 1.0, 0.0];
        let r = [1.0, 0.0];
        let gamma = 0.9;
        let v = discounted_value(&p, &r, gamma).unwrap();
        assert!((v[0] - 1.0 / (1.0 - gamma * gamma)).abs() < 1e-12);
        assert!((v[1] - gamma / (1.0 - gamma * gamma)).abs() < 1e-12);
    }

    #[test]
    fn flow_mass_is_geometric() {
        let p = [0.25, 0.75, 0.5, 0.5];
        let d = [0.3, 0.7];
        let gamma = 0.8;
        let nu = discounted_flow(&p, &d, gamma).unwrap();
        let mass: f64 = nu.iter().sum();
        assert!((mass - 1.0 / (1.0 - gamma)).abs() < 1e-10);
    }
}

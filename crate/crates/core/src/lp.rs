//! Dense tableau simplex, phase one only: decides whether `A x = b, x >= 0`
//! has a solution. Bland's rule keeps it from cycling on degenerate pivots.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-11;
/// Largest sum of artificial variables still counted as feasible.
pub const FEAS_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseOne {
    pub feasible: bool,
    /// A basic solution; only meaningful when `feasible`.
    pub x: Vec<f64>,
    /// Optimal sum of artificial variables.
    pub infeasibility: f64,
    pub iterations: usize,
    /// `max |A x - b|` of the returned point.
    pub residual: f64,
}

pub fn phase_one(a: &DMatrix<f64>, b: &[f64]) -> Result<PhaseOne> {
    let (m, n) = a.shape();
    if b.len() != m {
        return Err(Error::DimensionMismatch(format!("{} right-hand sides for {m} rows", b.len())));
    }
    let width = n + m + 1;
    let rhs = n + m;
    let mut t = vec![0.0; m * width];
    for i in 0..m {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i * width + j] = sign * a[(i, j)];
        }
        t[i * width + n + i] = 1.0;
        t[i * width + rhs] = sign * b[i];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    // reduced costs of "minimize sum of artificials"
    let mut obj = vec![0.0; width];
    for i in 0..m {
        for j in 0..n {
            obj[j] -= t[i * width + j];
        }
        obj[rhs] -= t[i * width + rhs];
    }

    let max_iter = 10_000 + 50 * (n + m);
    let mut iterations = 0;
    loop {
        let Some(enter) = (0..n + m).find(|&j| obj[j] < -PIVOT_TOL) else { break };
        let mut leave: Option<usize> = None;
        let mut best = f64::INFINITY;
        for i in 0..m {
            let piv = t[i * width + enter];
            if piv > PIVOT_TOL {
                let ratio = t[i * width + rhs] / piv;
                let better = match leave {
                    None => true,
                    Some(l) => ratio < best - 1e-14 || (ratio <= best + 1e-14 && basis[i] < basis[l]),
                };
                if better {
                    best = ratio;
                    leave = Some(i);
                }
            }
        }
        // Unbounded directions cannot occur: the objective is bounded below by 0.
        let r = leave.ok_or_else(|| Error::SolverFailure("phase one reported unbounded".into()))?;
        pivot(&mut t, &mut obj, width, m, r, enter);
        basis[r] = enter;
        iterations += 1;
        if iterations > max_iter {
            return Err(Error::SolverFailure(format!("no convergence after {iterations} pivots")));
        }
    }

    let mut x = vec![0.0; n];
    for (i, &j) in basis.iter().enumerate() {
        if j < n {
            x[j] = t[i * width + rhs].max(0.0);
        }
    }
    let infeasibility = (-obj[rhs]).max(0.0);
    let residual = (0..m)
        .map(|i| ((0..n).map(|j| a[(i, j)] * x[j]).sum::<f64>() - b[i]).abs())
        .fold(0.0, f64::max);
    let feasible = infeasibility <= FEAS_TOL;
    if feasible && residual > 1e-8 {
        return Err(Error::SolverFailure(format!(
            "feasible basis with residual {residual:e} (artificial sum {infeasibility:e})"
        )));
    }
    Ok(PhaseOne { feasible, x, infeasibility, iterations, residual })
}

fn pivot(t: &mut [f64], obj: &mut [f64], width: usize, m: usize, r: usize, c: usize) {
    let p = t[r * width + c];
    for v in &mut t[r * width..(r + 1) * width] {
        *v /= p;
    }
    let row: Vec<f64> = t[r * width..(r + 1) * width].to_vec();
    for i in 0..m {
        if i != r {
            let f = t[i * width + c];
            if f != 0.0 {
                for (v, rv) in t[i * width..(i + 1) * width].iter_mut().zip(&row) {
                    *v -= f * rv;
                }
            }
        }
    }
    let f = obj[c];
    if f != 0.0 {
        for (v, rv) in obj.iter_mut().zip(&row) {
            *v -= f * rv;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_feasible_system() {
        // x + y = 1, x - y = 0.5
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0]);
        let r = phase_one(&a, &[1.0, 0.5]).unwrap();
        assert!(r.feasible);
        assert!((r.x[0] - 0.75).abs() < 1e-14 && (r.x[1] - 0.25).abs() < 1e-14);
    }

    #[test]
    fn negative_solution_is_infeasible() {
        // x + y = 1, x - y = 3 forces y = -1
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0]);
        let r = phase_one(&a, &[1.0, 3.0]).unwrap();
        assert!(!r.feasible);
        assert!(r.infeasibility > 0.1);
    }

    #[test]
    fn redundant_rows_and_negative_rhs() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 1.0, 2.0, 2.0, 2.0, -1.0, 0.0, 0.0]);
        let r = phase_one(&a, &[1.0, 2.0, -0.2]).unwrap();
        assert!(r.feasible);
        assert!(r.residual < 1e-14);
        assert!((r.x[0] - 0.2).abs() < 1e-14);
    }

    #[test]
    fn degenerate_assignment_polytope() {
        // doubly stochastic 3x3 with all-equal marginals: heavily degenerate
        let n = 3;
        let mut a = DMatrix::zeros(2 * n, n * n);
        for i in 0..n {
            for j in 0..n {
                a[(i, i * n + j)] = 1.0;
                a[(n + j, i * n + j)] = 1.0;
            }
        }
        let r = phase_one(&a, &[1.0; 6]).unwrap();
        assert!(r.feasible);
        assert!(r.x.iter().all(|&v| v >= 0.0));
    }
}

//! Dense tableau simplex with Bland's anti-cycling rule.
//!
//! Only problems whose origin is feasible are handled, which covers every
//! LP in this crate: `max c'y s.t. Ay <= b, y >= 0` with `b >= 0`, and by
//! duality `min c'z s.t. Gz >= h, z >= 0` with `c >= 0`.

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct SimplexSolution {
    pub objective: f64,
    /// Optimal primal point of the maximization.
    pub primal: Vec<f64>,
    /// Optimal multipliers of the `<=` rows, read from the slack columns.
    pub dual: Vec<f64>,
    pub pivots: usize,
}

/// Maximize `c'y` subject to `Ay <= b`, `y >= 0`, with `b >= 0`.
///
/// `a` is row-major with `b.len()` rows and `c.len()` columns.
pub fn maximize(c: &[f64], a: &[f64], b: &[f64]) -> Result<SimplexSolution> {
    let (m, n) = (b.len(), c.len());
    if a.len() != m * n {
        return Err(Error::Solver(format!("constraint matrix has {} entries, expected {m}x{n}", a.len())));
    }
    if let Some(v) = b.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::Solver(format!("right-hand side {v} makes the origin infeasible")));
    }
    if c.iter().chain(a).any(|v| !v.is_finite()) {
        return Err(Error::Solver("non-finite coefficient".into()));
    }

    // columns: n structural, m slack, 1 rhs
    let width = n + m + 1;
    let mut t = vec![0.0; (m + 1) * width];
    for i in 0..m {
        let row = &mut t[i * width..(i + 1) * width];
        row[..n].copy_from_slice(&a[i * n..(i + 1) * n]);
        row[n + i] = 1.0;
        row[width - 1] = b[i];
    }
    {
        let obj = &mut t[m * width..];
        for j in 0..n {
            obj[j] = -c[j];
        }
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    let scale = c.iter().map(|v| v.abs()).fold(1.0, f64::max);
    let entering_tol = 1e-11 * scale;

    let max_pivots = 200_000 + 50 * (m + n);
    let mut pivots = 0;
    loop {
        // Bland: lowest-index improving column
        let obj = &t[m * width..];
        let Some(enter) = (0..n + m).find(|&j| obj[j] < -entering_tol) else {
            break;
        };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            let coef = t[i * width + enter];
            if coef > PIVOT_TOL {
                let ratio = t[i * width + width - 1] / coef;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((r, best)) => {
                        if ratio < best - 1e-12 * best.abs().max(1.0)
                            || (ratio <= best + 1e-12 * best.abs().max(1.0) && basis[i] < basis[r])
                        {
                            Some((i, ratio))
                        } else {
                            Some((r, best))
                        }
                    }
                };
            }
        }
        let Some((prow, _)) = leave else {
            return Err(Error::Solver(format!("objective unbounded along column {enter}")));
        };
        pivot(&mut t, width, m, prow, enter);
        basis[prow] = enter;
        pivots += 1;
        if pivots > max_pivots {
            return Err(Error::Solver(format!("no optimum after {max_pivots} pivots ({m} rows, {n} columns)")));
        }
    }

    let mut primal = vec![0.0; n];
    for (i, &var) in basis.iter().enumerate() {
        if var < n {
            primal[var] = t[i * width + width - 1].max(0.0);
        }
    }
    let obj = &t[m * width..];
    let dual = (0..m).map(|i| obj[n + i].max(0.0)).collect();
    Ok(SimplexSolution { objective: obj[width - 1], primal, dual, pivots })
}

fn pivot(t: &mut [f64], width: usize, m: usize, prow: usize, pcol: usize) {
    let p = t[prow * width + pcol];
    for v in &mut t[prow * width..(prow + 1) * width] {
        *v /= p;
    }
    let (before, rest) = t.split_at_mut(prow * width);
    let (pivot_row, after) = rest.split_at_mut(width);
    let eliminate = |row: &mut [f64]| {
        let f = row[pcol];
        if f != 0.0 {
            for (x, y) in row.iter_mut().zip(pivot_row.iter()) {
                *x -= f * y;
            }
            row[pcol] = 0.0;
        }
    };
    before.chunks_mut(width).for_each(eliminate);
    after.chunks_mut(width).take(m - prow).for_each(eliminate);
}

/// Minimize `c'z` subject to `Gz >= h`, `z >= 0`, with `c >= 0`.
///
/// Solved through the dual `max h'y s.t. G'y <= c`, whose origin is
/// feasible; the primal optimum is read off the dual's slack columns.
/// Returns `(objective, z)`.
pub fn minimize_covering(c: &[f64], g: &[f64], h: &[f64]) -> Result<(f64, Vec<f64>)> {
    let (m, n) = (h.len(), c.len());
    if g.len() != m * n {
        return Err(Error::Solver(format!("constraint matrix has {} entries, expected {m}x{n}", g.len())));
    }
    let mut gt = vec![0.0; n * m];
    for i in 0..m {
        for j in 0..n {
            gt[j * m + i] = g[i * n + j];
        }
    }
    let sol = maximize(h, &gt, c)?;
    Ok((sol.objective, sol.dual))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_maximization() {
        // max 3x + 5y; x <= 4; 2y <= 12; 3x + 2y <= 18 -> (2, 6), 36
        let sol = maximize(&[3.0, 5.0], &[1.0, 0.0, 0.0, 2.0, 3.0, 2.0], &[4.0, 12.0, 18.0]).unwrap();
        assert!((sol.objective - 36.0).abs() < 1e-9);
        assert!((sol.primal[0] - 2.0).abs() < 1e-9 && (sol.primal[1] - 6.0).abs() < 1e-9);
        // shadow prices of the same problem
        assert!((sol.dual[0]).abs() < 1e-9);
        assert!((sol.dual[1] - 1.5).abs() < 1e-9);
        assert!((sol.dual[2] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn unbounded_and_infeasible_start_are_errors() {
        assert!(maximize(&[1.0], &[-1.0], &[1.0]).is_err());
        assert!(maximize(&[1.0], &[1.0], &[-1.0]).is_err());
    }

    #[test]
    fn covering_through_duality() {
        // min x + y s.t. x + y >= 2, x >= 0.5 -> 2
        let (obj, z) = minimize_covering(&[1.0, 1.0], &[1.0, 1.0, 1.0, 0.0], &[2.0, 0.5]).unwrap();
        assert!((obj - 2.0).abs() < 1e-9);
        assert!(z[0] >= 0.5 - 1e-9 && (z[0] + z[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_problem_terminates() {
        // Beale-style cycling example; Bland's rule must terminate.
        let c = [0.75, -20.0, 0.5, -6.0];
        let a = [0.25, -8.0, -1.0, 9.0, 0.5, -12.0, -0.5, 3.0, 0.0, 0.0, 1.0, 0.0];
        let sol = maximize(&c, &a, &[0.0, 0.0, 1.0]).unwrap();
        assert!((sol.objective - 1.25).abs() < 1e-9);
    }
}

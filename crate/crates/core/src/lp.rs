//! Dense Phase-I simplex for feasibility of `A x = b, x >= 0`.

use crate::matrix::Matrix;

const PIVOT_EPS: f64 = 1e-11;
const MAX_PIVOTS: usize = 200_000;

/// Returns a feasible point of `{x >= 0 : A x = b}` when the Phase-I optimum
/// (sum of artificial variables) is at most `tol`.
///
/// Pivoting follows Bland's rule, so the method terminates on degenerate
/// problems.
pub fn phase_one(a: &Matrix, b: &[f64], tol: f64) -> Option<Vec<f64>> {
    let (m, nv) = (a.rows(), a.cols());
    assert_eq!(b.len(), m, "right-hand side length must match row count");
    let width = nv + m + 1;
    let mut t = Matrix::zeros(m + 1, width);
    for i in 0..m {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..nv {
            t[(i, j)] = sign * a[(i, j)];
        }
        t[(i, nv + i)] = 1.0;
        t[(i, width - 1)] = sign * b[i];
    }
    // Objective row holds reduced costs of `min sum(artificials)`.
    for j in 0..width {
        if j >= nv && j < nv + m {
            continue;
        }
        let s: f64 = (0..m).map(|i| t[(i, j)]).sum();
        t[(m, j)] = -s;
    }
    let mut basis: Vec<usize> = (nv..nv + m).collect();

    for _ in 0..MAX_PIVOTS {
        let Some(enter) = (0..nv + m).find(|&j| t[(m, j)] < -PIVOT_EPS) else {
            break;
        };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            let aij = t[(i, enter)];
            if aij > PIVOT_EPS {
                let ratio = t[(i, width - 1)] / aij;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((r, best)) => {
                        if ratio < best - 1e-15 || (ratio <= best + 1e-15 && basis[i] < basis[r]) {
                            Some((i, ratio))
                        } else {
                            Some((r, best))
                        }
                    }
                };
            }
        }
        // Phase I is bounded below by zero, so an entering column always has
        // a positive entry; guard anyway.
        let Some((r, _)) = leave else { break };
        pivot(&mut t, r, enter);
        basis[r] = enter;
    }

    let infeasibility = -t[(m, width - 1)];
    if infeasibility > tol {
        return None;
    }
    let mut x = vec![0.0; nv];
    for (i, &j) in basis.iter().enumerate() {
        if j < nv {
            x[j] = t[(i, width - 1)].max(0.0);
        }
    }
    Some(x)
}

fn pivot(t: &mut Matrix, r: usize, c: usize) {
    let width = t.cols();
    let p = t[(r, c)];
    t.row_mut(r).iter_mut().for_each(|v| *v /= p);
    let pivot_row = t.row(r).to_vec();
    for i in 0..t.rows() {
        if i == r {
            continue;
        }
        let f = t[(i, c)];
        if f == 0.0 {
            continue;
        }
        let row = t.row_mut(i);
        for j in 0..width {
            row[j] -= f * pivot_row[j];
        }
        row[c] = 0.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_feasible_system() {
        // x + y = 1, x - y = 0.5
        let a = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, -1.0]]).unwrap();
        let x = phase_one(&a, &[1.0, 0.5], 1e-9).unwrap();
        assert!((x[0] - 0.75).abs() < 1e-12 && (x[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn infeasible_by_sign() {
        // x + y = -1 has no non-negative solution.
        let a = Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
        assert!(phase_one(&a, &[-1.0], 1e-9).is_none());
    }

    #[test]
    fn redundant_rows_are_harmless() {
        let a = Matrix::from_rows(&[
            vec![1.0, 1.0, 1.0],
            vec![2.0, 2.0, 2.0],
            vec![1.0, 0.0, -1.0],
        ])
        .unwrap();
        let x = phase_one(&a, &[1.0, 2.0, 0.0], 1e-9).unwrap();
        assert!((x.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((x[0] - x[2]).abs() < 1e-12);
    }
}

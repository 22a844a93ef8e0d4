//! Small dense linear-algebra kernels: cyclic Jacobi for symmetric
//! eigenproblems and a Cholesky solver for the Newton steps of logistic
//! regression. Matrices here are at most a few dozen rows, so nothing is
//! blocked or vectorised.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};

/// Relative off-diagonal Frobenius norm at which Jacobi sweeps stop.
pub const JACOBI_TOL: f64 = 1e-12;
pub const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigen-decomposition of a symmetric matrix, eigenvalues in descending order.
/// Column `k` of `vectors` belongs to `values[k]`.
#[derive(Clone, Debug)]
pub struct SymmetricEigen {
    pub values: Array1<f64>,
    pub vectors: Array2<f64>,
    pub sweeps: usize,
}

fn off_diagonal_norm(a: &Array2<f64>) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[[i, j]] * a[[i, j]];
            }
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi eigen-solver.
///
/// The input is symmetrised as `(A + Aᵀ)/2` first. Sweeps stop once the
/// off-diagonal Frobenius norm falls below `JACOBI_TOL` times the Frobenius
/// norm of the input (or is exactly zero), or after `JACOBI_MAX_SWEEPS`.
/// Ties in eigenvalue keep the original diagonal order (stable sort).
pub fn symmetric_eigen(a: ArrayView2<'_, f64>) -> Result<SymmetricEigen> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Dimension {
            what: "symmetric_eigen (square matrix)",
            expected: n,
            got: a.ncols(),
        });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("matrix has non-finite entries"));
    }
    let mut m = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            m[[i, j]] = 0.5 * (a[[i, j]] + a[[j, i]]);
        }
    }
    let scale = m.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut v = Array2::<f64>::eye(n);
    let mut sweeps = 0;

    while sweeps < JACOBI_MAX_SWEEPS {
        let off = off_diagonal_norm(&m);
        if off == 0.0 || off < JACOBI_TOL * scale {
            break;
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // A <- A J
                for k in 0..n {
                    let akp = m[[k, p]];
                    let akq = m[[k, q]];
                    m[[k, p]] = c * akp - s * akq;
                    m[[k, q]] = s * akp + c * akq;
                }
                // A <- Jᵀ A
                for k in 0..n {
                    let apk = m[[p, k]];
                    let aqk = m[[q, k]];
                    m[[p, k]] = c * apk - s * aqk;
                    m[[q, k]] = s * apk + c * aqk;
                }
                m[[p, q]] = 0.0;
                m[[q, p]] = 0.0;
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    // stable: equal eigenvalues keep index order
    order.sort_by(|&i, &j| m[[j, j]].total_cmp(&m[[i, i]]));
    let values = Array1::from_iter(order.iter().map(|&i| m[[i, i]]));
    let mut vectors = Array2::<f64>::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        vectors.column_mut(dst).assign(&v.column(src));
    }
    Ok(SymmetricEigen {
        values,
        vectors,
        sweeps,
    })
}

/// Solve `A x = b` for symmetric positive-definite `A` by Cholesky.
pub fn cholesky_solve(a: &Array2<f64>, b: &Array1<f64>) -> Result<Array1<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::Dimension {
            what: "cholesky_solve",
            expected: n,
            got: b.len(),
        });
    }
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return Err(Error::Singular(format!("Cholesky pivot {s:e} at row {i}")));
                }
                l[[i, i]] = s.sqrt();
            } else {
                l[[i, j]] = s / l[[j, j]];
            }
        }
    }
    let mut y = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[[i, k]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    let mut x = Array1::<f64>::zeros(n);
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn jacobi_two_by_two() {
        let a = array![[2.0, 1.0], [1.0, 2.0]];
        let e = symmetric_eigen(a.view()).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-14);
        assert!((e.values[1] - 1.0).abs() < 1e-14);
        let w = e.vectors.column(0);
        assert!((w[0].abs() - 0.5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn jacobi_residual_and_orthogonality() {
        let a = array![
            [4.0, 1.0, -2.0, 0.5],
            [1.0, 3.0, 0.0, 0.1],
            [-2.0, 0.0, 5.0, 1.0],
            [0.5, 0.1, 1.0, 1.0]
        ];
        let e = symmetric_eigen(a.view()).unwrap();
        for k in 0..4 {
            let w = e.vectors.column(k);
            let r = a.dot(&w) - &w * e.values[k];
            assert!(r.iter().map(|v| v.abs()).fold(0.0, f64::max) < 1e-12);
        }
        let vtv = e.vectors.t().dot(&e.vectors);
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((vtv[[i, j]] - want).abs() < 1e-12);
            }
        }
        assert!(e.values.windows(2).into_iter().all(|w| w[0] >= w[1]));
    }

    #[test]
    fn jacobi_zero_matrix() {
        let e = symmetric_eigen(Array2::<f64>::zeros((3, 3)).view()).unwrap();
        assert_eq!(e.sweeps, 0);
        assert!(e.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cholesky_matches_known_solution() {
        let a = array![[4.0, 2.0], [2.0, 3.0]];
        let x = cholesky_solve(&a, &array![2.0, 1.0]).unwrap();
        // 4x + 2y = 2, 2x + 3y = 1 -> x = 0.5, y = 0
        assert!((x[0] - 0.5).abs() < 1e-15 && x[1].abs() < 1e-15);
        assert!(cholesky_solve(&array![[1.0, 2.0], [2.0, 1.0]], &array![1.0, 1.0]).is_err());
    }
}

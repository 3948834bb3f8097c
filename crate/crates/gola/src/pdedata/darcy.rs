//! `−∇·(a∇u) = 1` on the unit square with `u = 0` on the boundary.

use super::GenError;

pub const A_HIGH: f64 = 12.0;
pub const A_LOW: f64 = 3.0;
pub const CG_TOL: f64 = 1e-8;

/// Piecewise-constant coefficient from a thresholded field.
pub fn threshold_coefficient(field: &[f64]) -> Vec<f64> {
    field.iter().map(|&g| if g >= 0.0 { A_HIGH } else { A_LOW }).collect()
}

/// Five-point finite-difference operator over the interior nodes of an
/// `n × n` node grid with spacing `1/(n−1)`; face coefficients are
/// arithmetic means of the node values.
pub struct DarcyOperator<'a> {
    n: usize,
    coeff: &'a [f64],
    inv_h2: f64,
}

impl<'a> DarcyOperator<'a> {
    pub fn new(coeff: &'a [f64], n: usize) -> Self {
        let h = 1.0 / (n - 1) as f64;
        DarcyOperator {
            n,
            coeff,
            inv_h2: 1.0 / (h * h),
        }
    }

    /// Number of interior unknowns.
    pub fn dim(&self) -> usize {
        (self.n - 2) * (self.n - 2)
    }

    /// `y = A x` for interior vectors (`(n−2)²`, row-major).
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.n;
        let m = n - 2;
        let a = self.coeff;
        let at = |i: usize, j: usize| -> f64 {
            if i == 0 || j == 0 || i == n - 1 || j == n - 1 {
                0.0
            } else {
                x[(i - 1) * m + (j - 1)]
            }
        };
        for i in 1..n - 1 {
            for j in 1..n - 1 {
                let c = a[i * n + j];
                let aw = 0.5 * (c + a[(i - 1) * n + j]);
                let ae = 0.5 * (c + a[(i + 1) * n + j]);
                let an = 0.5 * (c + a[i * n + j - 1]);
                let as_ = 0.5 * (c + a[i * n + j + 1]);
                let u = at(i, j);
                let v = (aw + ae + an + as_) * u
                    - aw * at(i - 1, j)
                    - ae * at(i + 1, j)
                    - an * at(i, j - 1)
                    - as_ * at(i, j + 1);
                y[(i - 1) * m + (j - 1)] = v * self.inv_h2;
            }
        }
    }

    /// `‖A x − b‖ / ‖b‖`.
    pub fn relative_residual(&self, x: &[f64], b: &[f64]) -> f64 {
        let mut ax = vec![0.0; self.dim()];
        self.apply(x, &mut ax);
        let r: f64 = ax.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
        let nb: f64 = b.iter().map(|v| v * v).sum();
        (r / nb).sqrt()
    }
}

/// Conjugate gradients to `‖r‖/‖b‖ < tol`, at most `max_iter` iterations.
pub fn conjugate_gradient(
    op: &DarcyOperator<'_>,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>, GenError> {
    let dim = op.dim();
    let mut x = vec![0.0; dim];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; dim];
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut rr: f64 = r.iter().map(|v| v * v).sum();
    for _ in 0..max_iter {
        if rr.sqrt() <= tol * nb {
            return Ok(x);
        }
        op.apply(&p, &mut ap);
        let alpha = rr / p.iter().zip(&ap).map(|(a, b)| a * b).sum::<f64>();
        for k in 0..dim {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        let rr_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rr_new / rr;
        rr = rr_new;
        for k in 0..dim {
            p[k] = r[k] + beta * p[k];
        }
    }
    if rr.sqrt() <= tol * nb {
        return Ok(x);
    }
    Err(GenError::Solver(format!(
        "CG did not converge in {max_iter} iterations, relative residual {:.3e}",
        rr.sqrt() / nb
    )))
}

/// Solution on the full grid (zero boundary) and the interior relative residual.
pub fn solve(coeff: &[f64], n: usize) -> Result<(Vec<f64>, f64), GenError> {
    if n < 3 || coeff.len() != n * n {
        return Err(GenError::InvalidSpec(format!("Darcy grid {n} too small")));
    }
    let op = DarcyOperator::new(coeff, n);
    let b = vec![1.0; op.dim()];
    let x = conjugate_gradient(&op, &b, CG_TOL, 10 * n * n)?;
    let residual = op.relative_residual(&x, &b);
    let mut u = vec![0.0; n * n];
    let m = n - 2;
    for i in 1..n - 1 {
        for j in 1..n - 1 {
            u[i * n + j] = x[(i - 1) * m + (j - 1)];
        }
    }
    Ok((u, residual))
}

/// Interior values of a full-grid field.
pub fn interior(u: &[f64], n: usize) -> Vec<f64> {
    let mut x = Vec::with_capacity((n - 2) * (n - 2));
    for i in 1..n - 1 {
        x.extend_from_slice(&u[i * n + 1..i * n + n - 1]);
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Dense Gaussian elimination with partial pivoting.
    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for c in 0..n {
            let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
            a.swap(c, p);
            b.swap(c, p);
            for r in c + 1..n {
                let f = a[r][c] / a[c][c];
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
        let mut x = vec![0.0; n];
        for r in (0..n).rev() {
            let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
            x[r] = (b[r] - s) / a[r][r];
        }
        x
    }

    #[test]
    fn constant_coefficient_matches_dense_solve() {
        let n = 17;
        let coeff = vec![1.0; n * n];
        let (u, res) = solve(&coeff, n).unwrap();
        assert!(res < 1e-8);
        // assemble the same operator column by column
        let op = DarcyOperator::new(&coeff, n);
        let dim = op.dim();
        let mut a = vec![vec![0.0; dim]; dim];
        let mut e = vec![0.0; dim];
        let mut col = vec![0.0; dim];
        for k in 0..dim {
            e.fill(0.0);
            e[k] = 1.0;
            op.apply(&e, &mut col);
            for r in 0..dim {
                a[r][k] = col[r];
            }
        }
        let x = dense_solve(a, vec![1.0; dim]);
        let got = interior(&u, n);
        let err = got.iter().zip(&x).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        let scale = x.iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(err / scale < 1e-8, "{err}");
    }

    #[test]
    fn boundary_is_zero_and_residual_small() {
        let n = 20;
        let coeff: Vec<f64> = (0..n * n).map(|k| if (k / 7) % 2 == 0 { A_HIGH } else { A_LOW }).collect();
        let (u, res) = solve(&coeff, n).unwrap();
        assert!(res < 1e-6);
        for k in 0..n {
            assert_eq!(u[k], 0.0);
            assert_eq!(u[(n - 1) * n + k], 0.0);
            assert_eq!(u[k * n], 0.0);
            assert_eq!(u[k * n + n - 1], 0.0);
        }
        assert!(u.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn cg_reports_non_convergence() {
        let n = 20;
        let coeff = vec![1.0; n * n];
        let op = DarcyOperator::new(&coeff, n);
        let b = vec![1.0; op.dim()];
        let err = conjugate_gradient(&op, &b, 1e-12, 2).unwrap_err();
        assert!(format!("{err}").contains("residual"));
    }
}

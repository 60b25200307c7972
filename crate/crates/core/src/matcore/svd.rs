//! Full SVD of a square matrix by one-sided (Hestenes) Jacobi rotations.
//!
//! Column pairs of a working copy of `A` are rotated until every pair is
//! orthogonal to working precision; the accumulated rotations form `V`, the
//! column norms are the singular values and the normalized columns form `U`.
//! Jacobi is slower than bidiagonalization but is fully deterministic and
//! gives singular values to high relative accuracy, which the rank tests
//! downstream rely on.

use super::{dot, DenseMatrix};
use crate::error::Result;

const MAX_SWEEPS: usize = 80;

/// Factors `A = U diag(singular_values) V^T`.
///
/// Singular values are sorted nonincreasing; the first entry of each left
/// singular vector with magnitude above `1e-12` is nonnegative.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DenseMatrix,
    pub singular_values: Vec<f64>,
    pub v: DenseMatrix,
}

impl Svd {
    /// `U diag(s) V^T` for an arbitrary replacement spectrum `s`.
    pub fn compose(&self, s: &[f64]) -> DenseMatrix {
        let m = self.u.rows();
        let mut out = DenseMatrix::zeros(m, m);
        for (k, &sk) in s.iter().enumerate() {
            if sk == 0.0 {
                continue;
            }
            for i in 0..m {
                let uik = self.u[(i, k)] * sk;
                if uik == 0.0 {
                    continue;
                }
                for j in 0..m {
                    out[(i, j)] += uik * self.v[(j, k)];
                }
            }
        }
        out
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        self.compose(&self.singular_values)
    }

    /// Number of singular values above `rel_tol * sigma_1`.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let top = self.singular_values.first().copied().unwrap_or(0.0);
        if top == 0.0 {
            return 0;
        }
        self.singular_values
            .iter()
            .filter(|&&s| s > rel_tol * top)
            .count()
    }
}

/// Full SVD of a square, finite matrix.
pub fn svd(a: &DenseMatrix) -> Result<Svd> {
    let m = a.require_square("svd")?;
    a.require_finite()?;

    // Column-major working copies so rotations touch contiguous memory.
    let mut w: Vec<Vec<f64>> = (0..m).map(|j| a.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..m)
        .map(|j| {
            let mut e = vec![0.0; m];
            e[j] = 1.0;
            e
        })
        .collect();

    let tol = f64::EPSILON * m as f64;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..m {
            for q in p + 1..m {
                let alpha = dot(&w[p], &w[p]);
                let beta = dot(&w[q], &w[q]);
                let gamma = dot(&w[p], &w[q]);
                if alpha == 0.0 || beta == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = w.iter().map(|col| dot(col, col).sqrt()).collect();
    let mut order: Vec<usize> = (0..m).collect();
    // Stable: ties keep the order the rotations produced.
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));

    let sigma_max = norms[order[0]];
    let negligible = sigma_max * tol;
    let mut u_cols: Vec<Option<Vec<f64>>> = Vec::with_capacity(m);
    let mut v_cols: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut singular_values = Vec::with_capacity(m);
    for &k in &order {
        let sigma = norms[k];
        singular_values.push(sigma);
        v_cols.push(v[k].clone());
        if sigma > negligible && sigma > 0.0 {
            u_cols.push(Some(w[k].iter().map(|x| x / sigma).collect()));
        } else {
            u_cols.push(None);
        }
    }
    let mut u_cols = complete_basis(u_cols, m);

    for (u, v) in u_cols.iter_mut().zip(v_cols.iter_mut()) {
        if let Some(first) = u.iter().find(|x| x.abs() > 1e-12) {
            if *first < 0.0 {
                u.iter_mut().for_each(|x| *x = -*x);
                v.iter_mut().for_each(|x| *x = -*x);
            }
        }
    }

    Ok(Svd {
        u: from_columns(&u_cols, m),
        singular_values,
        v: from_columns(&v_cols, m),
    })
}

/// Singular values only, nonincreasing.
pub fn singular_values(a: &DenseMatrix) -> Result<Vec<f64>> {
    Ok(svd(a)?.singular_values)
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(q);
    let (cp, cq) = (&mut left[p], &mut right[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Fills the missing columns with the canonical vector whose component
/// orthogonal to the current basis is largest (two Gram-Schmidt passes).
fn complete_basis(cols: Vec<Option<Vec<f64>>>, m: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = cols.iter().flatten().cloned().collect();
    let mut out = Vec::with_capacity(m);
    for col in cols {
        match col {
            Some(c) => out.push(c),
            None => {
                let mut best: Option<(f64, Vec<f64>)> = None;
                for i in 0..m {
                    let mut e = vec![0.0; m];
                    e[i] = 1.0;
                    for _ in 0..2 {
                        for b in &basis {
                            let proj = dot(&e, b);
                            e.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
                        }
                    }
                    let norm = dot(&e, &e).sqrt();
                    if best.as_ref().is_none_or(|(n, _)| norm > *n) {
                        best = Some((norm, e));
                    }
                }
                // Fewer than m vectors never span R^m, so the best residual
                // has norm at least 1/sqrt(m).
                let (norm, mut e) = best.expect("m >= 1");
                e.iter_mut().for_each(|x| *x /= norm);
                basis.push(e.clone());
                out.push(e);
            }
        }
    }
    out
}

fn from_columns(cols: &[Vec<f64>], m: usize) -> DenseMatrix {
    DenseMatrix::from_fn(m, m, |i, j| cols[j][i])
}

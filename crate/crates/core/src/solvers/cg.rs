use crate::matcore::DenseMatrix;

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub solution: DenseMatrix,
    pub iterations: usize,
    pub converged: bool,
    /// True residual `||M(x) - rhs|| / ||rhs||` at the returned point.
    pub relative_residual: f64,
}

/// Conjugate gradient for a symmetric positive definite operator on
/// matrices. Convergence is judged on the true residual: when the recurred
/// residual claims convergence the residual is recomputed and CG restarted if
/// the two have drifted apart.
pub fn conjugate_gradient(
    op: impl Fn(&DenseMatrix) -> DenseMatrix,
    rhs: &DenseMatrix,
    x0: DenseMatrix,
    tolerance: f64,
    max_iterations: usize,
) -> CgOutcome {
    let rhs_norm = rhs.frobenius_norm();
    if rhs_norm == 0.0 {
        return CgOutcome {
            solution: DenseMatrix::zeros(rhs.rows(), rhs.cols()),
            iterations: 0,
            converged: true,
            relative_residual: 0.0,
        };
    }
    let target = tolerance * rhs_norm;
    let mut x = x0;
    let mut iterations = 0;
    loop {
        let mut r = rhs - &op(&x);
        let true_norm = r.frobenius_norm();
        if true_norm <= target || iterations >= max_iterations {
            return CgOutcome {
                solution: x,
                iterations,
                converged: true_norm <= target,
                relative_residual: true_norm / rhs_norm,
            };
        }
        let mut p = r.clone();
        let mut rr = r.inner(&r);
        while iterations < max_iterations {
            let ap = op(&p);
            let pap = p.inner(&ap);
            if !(pap > 0.0) {
                break;
            }
            let alpha = rr / pap;
            x.axpy(alpha, &p);
            r.axpy(-alpha, &ap);
            iterations += 1;
            let rr_next = r.inner(&r);
            // Aim a little below the target so the true residual clears it.
            if rr_next.sqrt() <= 0.5 * target {
                break;
            }
            let beta = rr_next / rr;
            rr = rr_next;
            let mut next_p = r.clone();
            next_p.axpy(beta, &p);
            p = next_p;
        }
        if iterations >= max_iterations {
            let r = rhs - &op(&x);
            let norm = r.frobenius_norm();
            return CgOutcome {
                solution: x,
                iterations,
                converged: norm <= target,
                relative_residual: norm / rhs_norm,
            };
        }
    }
}

use rayon::prelude::*;

use super::MeasurementEnsemble;
use crate::matcore::{dot, DenseMatrix};

const GRAM_ROW_BLOCK: usize = 16;

/// The normal operator `A -> X*(X(A))` of an ensemble.
///
/// When `n >= m^2` the `m^2 x m^2` Gram matrix `sum_j vec(X_j) vec(X_j)^T` is
/// cheaper to apply than a pass over the ensemble, so it is formed once;
/// otherwise every application streams over the measurements.
pub enum NormalOperator<'a> {
    Gram { m: usize, gram: Vec<f64> },
    MatrixFree(&'a MeasurementEnsemble),
}

impl<'a> NormalOperator<'a> {
    pub fn new(ensemble: &'a MeasurementEnsemble) -> Self {
        let m = ensemble.m();
        if ensemble.n() >= m * m {
            NormalOperator::Gram {
                m,
                gram: gram_matrix(ensemble),
            }
        } else {
            NormalOperator::MatrixFree(ensemble)
        }
    }

    pub fn apply(&self, a: &DenseMatrix) -> DenseMatrix {
        match self {
            NormalOperator::Gram { m, gram } => {
                let d = m * m;
                let x = a.as_slice();
                let out = gram.par_chunks(d).map(|row| dot(row, x)).collect();
                DenseMatrix::from_vec_unchecked(*m, *m, out)
            }
            NormalOperator::MatrixFree(e) => e.adjoint_unchecked(&e.forward_unchecked(a)),
        }
    }

    /// `||X(A)||_2^2`.
    pub fn energy(&self, a: &DenseMatrix) -> f64 {
        match self {
            NormalOperator::Gram { .. } => a.inner(&self.apply(a)),
            NormalOperator::MatrixFree(e) => {
                let y = e.forward_unchecked(a);
                dot(&y, &y)
            }
        }
    }
}

fn gram_matrix(ensemble: &MeasurementEnsemble) -> Vec<f64> {
    let m = ensemble.m();
    let d = m * m;
    let mut gram = vec![0.0; d * d];
    gram.par_chunks_mut(GRAM_ROW_BLOCK * d)
        .enumerate()
        .for_each(|(block, rows)| {
            let first = block * GRAM_ROW_BLOCK;
            for x in ensemble.matrices() {
                let xs = x.as_slice();
                for (offset, row) in rows.chunks_mut(d).enumerate() {
                    let xa = xs[first + offset];
                    if xa == 0.0 {
                        continue;
                    }
                    for (g, &xb) in row.iter_mut().zip(xs) {
                        *g += xa * xb;
                    }
                }
            }
        });
    gram
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian_matrix, stream};
    use crate::sensing::{sample_ensemble, EnsembleKind, EnsembleSpec};

    #[test]
    fn gram_and_matrix_free_agree() {
        let spec = EnsembleSpec {
            kind: EnsembleKind::Gaussian,
            m: 4,
            n: 40,
            seed: 3,
        };
        let e = sample_ensemble(spec).unwrap();
        let op = NormalOperator::new(&e);
        assert!(matches!(op, NormalOperator::Gram { .. }));
        let free = NormalOperator::MatrixFree(&e);
        let a = gaussian_matrix(4, 4, &mut stream(2, &[]));
        let diff = (&op.apply(&a) - &free.apply(&a)).max_abs();
        assert!(diff < 1e-10 * free.apply(&a).max_abs());
        assert!((op.energy(&a) - free.energy(&a)).abs() < 1e-10 * free.energy(&a));
    }
}

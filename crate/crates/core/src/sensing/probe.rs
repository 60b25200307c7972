//! Empirical probes of the restricted isometry constant and of the spectral
//! norm of the noise matrix `W = sum_j xi_j X_j`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{draw_noise, tags, MeasurementEnsemble, NoiseKind, NormalOperator};
use crate::error::{domain, Result};
use crate::matcore::{dot, orthonormalize_columns, rank_truncate, spectral_norm, DenseMatrix};
use crate::rng::{gaussian_matrix, stream};

/// Above this side length spectral norms use power iteration instead of a
/// full SVD.
pub const POWER_ITERATION_THRESHOLD: usize = 64;

/// Lower-bound estimate of `delta_r`: the largest observed
/// `|(1/n)||X(A)||^2 - 1|` over unit-Frobenius probes of rank at most `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RipEstimate {
    pub r: usize,
    pub delta_hat: f64,
    /// Largest deviation reached by the probes of each exact rank `1..=r`.
    pub per_rank: Vec<f64>,
    pub n_samples: usize,
    pub ascent_steps: usize,
    pub seed: u64,
}

/// Random unit-Frobenius matrix `U diag(s) V^T` of rank `r`.
///
/// `U`, `V` are orthonormalized Gaussian `m x r` factors and `s` is uniform on
/// the probability simplex, rescaled to unit Euclidean norm, which mixes flat
/// and spiked spectra.
pub fn random_low_rank(m: usize, r: usize, rng: &mut ChaCha8Rng) -> Result<DenseMatrix> {
    if r == 0 || r > m {
        return Err(domain(format!("probe rank {r} outside 1..={m}")));
    }
    let u = orthonormalize_columns(&gaussian_matrix(m, r, rng))?;
    let v = orthonormalize_columns(&gaussian_matrix(m, r, rng))?;
    let mut s: Vec<f64> = (0..r).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let norm = dot(&s, &s).sqrt();
    s.iter_mut().for_each(|x| *x /= norm);
    let mut a = DenseMatrix::zeros(m, m);
    for k in 0..r {
        for i in 0..m {
            let uik = u[(i, k)] * s[k];
            for j in 0..m {
                a[(i, j)] += uik * v[(j, k)];
            }
        }
    }
    Ok(a)
}

/// Estimates `delta_r` from below.
///
/// For every rank `k = 1..=r`, `n_samples` random rank-`k` probes are drawn on
/// the stream `(seed, k, i)` and each is pushed by `ascent_steps` steps of
/// projected gradient ascent on `|(1/n)||X(A)||^2 - 1|` (step `0.1/sqrt(n)`,
/// then rank-`k` truncation and renormalization). Because the rank-`k` probe
/// family does not depend on `r`, the probe set for `r` contains the one for
/// `r - 1` and the estimate is monotone in `r`.
pub fn rip_probe(
    ensemble: &MeasurementEnsemble,
    r: usize,
    n_samples: usize,
    ascent_steps: usize,
    seed: u64,
) -> Result<RipEstimate> {
    let m = ensemble.m();
    if r == 0 || r > m {
        return Err(domain(format!("rank {r} outside 1..={m}")));
    }
    if n_samples == 0 {
        return Err(domain("rip_probe needs at least one sample"));
    }
    if ensemble.n() == 0 {
        return Err(domain("rip_probe needs a nonempty ensemble"));
    }
    let n = ensemble.n() as f64;
    let op = NormalOperator::new(ensemble);
    let step = 0.1 / n.sqrt();

    let mut per_rank = Vec::with_capacity(r);
    for k in 1..=r {
        let deviations: Vec<f64> = (0..n_samples)
            .into_par_iter()
            .map(|i| -> Result<f64> {
                let mut rng = stream(seed, &[tags::RIP, k as u64, i as u64]);
                let mut a = random_low_rank(m, k, &mut rng)?;
                let mut best = 0.0_f64;
                for step_idx in 0..=ascent_steps {
                    let deviation = op.energy(&a) / n - 1.0;
                    best = best.max(deviation.abs());
                    if step_idx == ascent_steps {
                        break;
                    }
                    let grad = op.apply(&a);
                    a.axpy(deviation.signum() * step * 2.0 / n, &grad);
                    let (head, _) = rank_truncate(&a, k)?;
                    let norm = head.frobenius_norm();
                    if norm == 0.0 {
                        break;
                    }
                    a = head.scaled(1.0 / norm);
                }
                Ok(best)
            })
            .collect::<Result<_>>()?;
        per_rank.push(deviations.into_iter().fold(0.0, f64::max));
    }
    let delta_hat = per_rank.iter().copied().fold(0.0, f64::max);
    Ok(RipEstimate {
        r,
        delta_hat,
        per_rank,
        n_samples,
        ascent_steps,
        seed,
    })
}

/// Spectral norm by power iteration on `W^T W`.
pub fn spectral_norm_power(w: &DenseMatrix, max_iterations: usize, tolerance: f64) -> f64 {
    let m = w.cols();
    let mut rng = stream(0, &[m as u64]);
    let mut v = gaussian_matrix(m, 1, &mut rng).into_vec();
    let mut estimate = 0.0;
    for _ in 0..max_iterations {
        let norm = dot(&v, &v).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        let wv: Vec<f64> = (0..w.rows())
            .map(|i| (0..m).map(|j| w[(i, j)] * v[j]).sum())
            .collect();
        let next = dot(&wv, &wv).sqrt();
        v = (0..m)
            .map(|j| (0..w.rows()).map(|i| w[(i, j)] * wv[i]).sum())
            .collect();
        let converged = (next - estimate).abs() <= tolerance * next;
        estimate = next;
        if converged {
            break;
        }
    }
    estimate
}

/// Spectral norm: full SVD up to [`POWER_ITERATION_THRESHOLD`], power iteration above.
pub fn operator_norm(w: &DenseMatrix) -> Result<f64> {
    if w.rows() <= POWER_ITERATION_THRESHOLD {
        spectral_norm(w)
    } else {
        Ok(spectral_norm_power(w, 200, 1e-10))
    }
}

/// `||(1/n) sum_j xi_j X_j||_inf` for `trials` independent Gaussian noise
/// draws of level `sigma_xi`.
pub fn noise_norm_probe(
    ensemble: &MeasurementEnsemble,
    sigma_xi: f64,
    trials: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if trials == 0 {
        return Err(domain("noise_norm_probe needs at least one trial"));
    }
    if !(sigma_xi >= 0.0) {
        return Err(domain(format!("noise level must be >= 0, got {sigma_xi}")));
    }
    let n = ensemble.n();
    if n == 0 {
        return Err(domain("noise_norm_probe needs a nonempty ensemble"));
    }
    (0..trials)
        .map(|t| {
            let xi = draw_noise(
                n,
                sigma_xi,
                NoiseKind::Gaussian,
                seed,
                &[tags::NOISE_PROBE, t as u64],
            );
            let w = ensemble.adjoint_unchecked(&xi).scaled(1.0 / n as f64);
            operator_norm(&w)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensing::{sample_ensemble, EnsembleKind, EnsembleSpec};

    #[test]
    fn probes_have_unit_norm_and_rank() {
        let mut rng = stream(1, &[]);
        let a = random_low_rank(7, 3, &mut rng).unwrap();
        assert!((a.frobenius_norm() - 1.0).abs() < 1e-12);
        assert_eq!(crate::matcore::svd(&a).unwrap().rank(1e-9), 3);
    }

    #[test]
    fn rip_contract_errors() {
        let e = sample_ensemble(EnsembleSpec {
            kind: EnsembleKind::Gaussian,
            m: 3,
            n: 5,
            seed: 1,
        })
        .unwrap();
        assert!(rip_probe(&e, 0, 1, 0, 0).is_err());
        assert!(rip_probe(&e, 4, 1, 0, 0).is_err());
        assert!(rip_probe(&e, 1, 0, 0, 0).is_err());
    }

    #[test]
    fn single_probe_matches_hand_arithmetic() {
        let e = sample_ensemble(EnsembleSpec {
            kind: EnsembleKind::Gaussian,
            m: 2,
            n: 3,
            seed: 4,
        })
        .unwrap();
        let est = rip_probe(&e, 1, 1, 0, 21).unwrap();
        let mut rng = stream(21, &[tags::RIP, 1, 0]);
        let a = random_low_rank(2, 1, &mut rng).unwrap();
        let mut sq = 0.0;
        for x in e.matrices() {
            let mut ip = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    ip += a[(i, j)] * x[(i, j)];
                }
            }
            sq += ip * ip;
        }
        let expected = (sq / 3.0 - 1.0).abs();
        assert!((est.delta_hat - expected).abs() < 1e-12);
    }

    #[test]
    fn noise_probe_trivial_cases() {
        let e = sample_ensemble(EnsembleSpec {
            kind: EnsembleKind::Gaussian,
            m: 4,
            n: 10,
            seed: 1,
        })
        .unwrap();
        assert_eq!(noise_norm_probe(&e, 0.0, 3, 1).unwrap(), vec![0.0; 3]);
        assert!(noise_norm_probe(&e, 1.0, 0, 1).is_err());

        // n = 1, X_1 = I: the probe reports |xi_1|.
        let id = MeasurementEnsemble::from_matrices(3, vec![DenseMatrix::identity(3)]).unwrap();
        let got = noise_norm_probe(&id, 0.7, 2, 9).unwrap();
        for (t, g) in got.iter().enumerate() {
            let xi = draw_noise(
                1,
                0.7,
                NoiseKind::Gaussian,
                9,
                &[tags::NOISE_PROBE, t as u64],
            );
            assert!((g - xi[0].abs()).abs() < 1e-14);
        }
    }

    #[test]
    fn power_iteration_matches_svd() {
        let w = gaussian_matrix(30, 30, &mut stream(2, &[]));
        let exact = spectral_norm(&w).unwrap();
        let approx = spectral_norm_power(&w, 2000, 1e-13);
        assert!((exact - approx).abs() < 1e-6 * exact, "{exact} vs {approx}");
    }
}

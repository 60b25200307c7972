//! Measurement ensembles, the sampling operator and its adjoint, and
//! trace-regression datasets `Y_j = <A0, X_j> + xi_j`.

mod container;
mod normal;
mod probe;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{dimension, domain, Result};
use crate::matcore::DenseMatrix;
use crate::rng::{gaussian, stream};

pub use container::{
    read_dataset, read_ensemble, read_matrices, write_dataset, write_ensemble, write_matrices,
    DATASET_MAGIC, ENSEMBLE_MAGIC,
};
pub use normal::NormalOperator;
pub use probe::{
    noise_norm_probe, operator_norm, random_low_rank, rip_probe, spectral_norm_power, RipEstimate,
    POWER_ITERATION_THRESHOLD,
};

/// Stream tags keep draws for different purposes on disjoint seeds.
pub(crate) mod tags {
    pub const ENSEMBLE: u64 = 0x454E_5345;
    pub const NOISE: u64 = 0x4E4F_4953;
    pub const RIP: u64 = 0x5249_5050;
    pub const NOISE_PROBE: u64 = 0x4E50_5242;
}

/// Entry distribution of the measurement matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    /// i.i.d. standard normal entries.
    Gaussian,
    /// i.i.d. equiprobable `+-1` entries.
    Rademacher,
    /// Matrices supplied by the caller.
    Custom,
}

impl EnsembleKind {
    pub fn code(self) -> u64 {
        match self {
            EnsembleKind::Gaussian => 0,
            EnsembleKind::Rademacher => 1,
            EnsembleKind::Custom => 2,
        }
    }

    pub fn from_code(code: u64) -> Option<Self> {
        match code {
            0 => Some(EnsembleKind::Gaussian),
            1 => Some(EnsembleKind::Rademacher),
            2 => Some(EnsembleKind::Custom),
            _ => None,
        }
    }

    /// Both random kinds satisfy `E<A, X>^2 = ||A||_2^2`.
    pub fn is_isotropic(self) -> bool {
        !matches!(self, EnsembleKind::Custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub kind: EnsembleKind,
    pub m: usize,
    pub n: usize,
    pub seed: u64,
}

/// `n` measurement matrices of size `m x m`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementEnsemble {
    spec: EnsembleSpec,
    matrices: Vec<DenseMatrix>,
}

/// Draws the ensemble described by `spec`. Matrix `j` comes from its own
/// stream, so the result does not depend on the thread count.
pub fn sample_ensemble(spec: EnsembleSpec) -> Result<MeasurementEnsemble> {
    if spec.m == 0 || spec.n == 0 {
        return Err(domain(format!(
            "ensemble needs m, n >= 1, got m={} n={}",
            spec.m, spec.n
        )));
    }
    if spec.kind == EnsembleKind::Custom {
        return Err(domain(
            "custom ensembles are built with MeasurementEnsemble::from_matrices",
        ));
    }
    let m = spec.m;
    let kind = spec.kind;
    let matrices = (0..spec.n)
        .into_par_iter()
        .map(|j| {
            let mut rng = stream(
                spec.seed,
                &[tags::ENSEMBLE, kind.code(), m as u64, j as u64],
            );
            let data = match kind {
                EnsembleKind::Gaussian => (0..m * m).map(|_| gaussian(&mut rng)).collect(),
                EnsembleKind::Rademacher => (0..m * m)
                    .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                    .collect(),
                EnsembleKind::Custom => unreachable!(),
            };
            DenseMatrix::from_vec_unchecked(m, m, data)
        })
        .collect::<Vec<_>>();
    Ok(MeasurementEnsemble { spec, matrices })
}

/// Chunk length of the fixed-order reduction in [`MeasurementEnsemble::adjoint`].
const REDUCTION_CHUNK: usize = 64;

impl MeasurementEnsemble {
    /// Wraps caller-supplied matrices (possibly none) as a custom ensemble.
    pub fn from_matrices(m: usize, matrices: Vec<DenseMatrix>) -> Result<Self> {
        if m == 0 {
            return Err(domain("ensemble needs m >= 1"));
        }
        for (j, x) in matrices.iter().enumerate() {
            if x.shape() != (m, m) {
                return Err(dimension(format!(
                    "matrix {j} is {}x{}, expected {m}x{m}",
                    x.rows(),
                    x.cols()
                )));
            }
        }
        let spec = EnsembleSpec {
            kind: EnsembleKind::Custom,
            m,
            n: matrices.len(),
            seed: 0,
        };
        Ok(Self { spec, matrices })
    }

    pub(crate) fn from_parts(spec: EnsembleSpec, matrices: Vec<DenseMatrix>) -> Self {
        Self { spec, matrices }
    }

    pub fn spec(&self) -> &EnsembleSpec {
        &self.spec
    }

    pub fn m(&self) -> usize {
        self.spec.m
    }

    pub fn n(&self) -> usize {
        self.matrices.len()
    }

    pub fn matrices(&self) -> &[DenseMatrix] {
        &self.matrices
    }

    fn check_matrix(&self, a: &DenseMatrix) -> Result<()> {
        let m = self.m();
        if a.shape() != (m, m) {
            return Err(dimension(format!(
                "operand is {}x{}, ensemble expects {m}x{m}",
                a.rows(),
                a.cols()
            )));
        }
        Ok(())
    }

    /// `X(A) = (<A, X_1>, ..., <A, X_n>)`.
    pub fn forward(&self, a: &DenseMatrix) -> Result<Vec<f64>> {
        self.check_matrix(a)?;
        Ok(self.forward_unchecked(a))
    }

    pub(crate) fn forward_unchecked(&self, a: &DenseMatrix) -> Vec<f64> {
        self.matrices.par_iter().map(|x| x.inner(a)).collect()
    }

    /// `X*(u) = sum_j u_j X_j`.
    pub fn adjoint(&self, u: &[f64]) -> Result<DenseMatrix> {
        if u.len() != self.n() {
            return Err(dimension(format!(
                "adjoint needs {} coefficients, got {}",
                self.n(),
                u.len()
            )));
        }
        Ok(self.adjoint_unchecked(u))
    }

    pub(crate) fn adjoint_unchecked(&self, u: &[f64]) -> DenseMatrix {
        let m = self.m();
        // Chunks are summed sequentially and then folded left to right, so
        // the rounding is identical for every thread count.
        let partials: Vec<Vec<f64>> = self
            .matrices
            .par_chunks(REDUCTION_CHUNK)
            .zip(u.par_chunks(REDUCTION_CHUNK))
            .map(|(xs, us)| {
                let mut acc = vec![0.0; m * m];
                for (x, &uj) in xs.iter().zip(us) {
                    if uj == 0.0 {
                        continue;
                    }
                    for (a, &v) in acc.iter_mut().zip(x.as_slice()) {
                        *a += uj * v;
                    }
                }
                acc
            })
            .collect();
        let mut total = vec![0.0; m * m];
        for p in partials {
            for (t, v) in total.iter_mut().zip(p) {
                *t += v;
            }
        }
        DenseMatrix::from_vec_unchecked(m, m, total)
    }

    /// `X*(X(A))`.
    pub fn normal(&self, a: &DenseMatrix) -> Result<DenseMatrix> {
        self.check_matrix(a)?;
        Ok(self.adjoint_unchecked(&self.forward_unchecked(a)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// `xi_j ~ N(0, sigma^2)`.
    Gaussian,
    /// `xi_j = +-sigma` with equal probability.
    RademacherScaled,
}

impl NoiseKind {
    pub fn code(self) -> u64 {
        match self {
            NoiseKind::Gaussian => 0,
            NoiseKind::RademacherScaled => 1,
        }
    }

    pub fn from_code(code: u64) -> Option<Self> {
        match code {
            0 => Some(NoiseKind::Gaussian),
            1 => Some(NoiseKind::RademacherScaled),
            _ => None,
        }
    }
}

/// Draws `n` noise values from the stream `(seed, tag)`.
pub fn draw_noise(n: usize, sigma_xi: f64, kind: NoiseKind, seed: u64, tag: &[u64]) -> Vec<f64> {
    let mut words = vec![tags::NOISE, kind.code()];
    words.extend_from_slice(tag);
    let mut rng = stream(seed, &words);
    (0..n)
        .map(|_| match kind {
            NoiseKind::Gaussian => sigma_xi * gaussian(&mut rng),
            NoiseKind::RademacherScaled => {
                if rng.random::<bool>() {
                    sigma_xi
                } else {
                    -sigma_xi
                }
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct TraceRegressionDataset {
    pub ensemble: MeasurementEnsemble,
    pub a0: DenseMatrix,
    pub sigma_xi: f64,
    pub noise: Vec<f64>,
    pub responses: Vec<f64>,
    pub noise_kind: NoiseKind,
}

impl TraceRegressionDataset {
    pub fn m(&self) -> usize {
        self.ensemble.m()
    }

    pub fn n(&self) -> usize {
        self.ensemble.n()
    }

    /// `W = sum_j xi_j X_j`.
    pub fn noise_matrix(&self) -> DenseMatrix {
        self.ensemble.adjoint_unchecked(&self.noise)
    }
}

/// Simulates `Y_j = <A0, X_j> + xi_j`.
pub fn generate_dataset(
    a0: DenseMatrix,
    ensemble: MeasurementEnsemble,
    sigma_xi: f64,
    noise_kind: NoiseKind,
    noise_seed: u64,
) -> Result<TraceRegressionDataset> {
    if !(sigma_xi >= 0.0) || !sigma_xi.is_finite() {
        return Err(domain(format!(
            "noise level must be finite and >= 0, got {sigma_xi}"
        )));
    }
    a0.require_finite()?;
    let clean = ensemble.forward(&a0)?;
    let noise = draw_noise(ensemble.n(), sigma_xi, noise_kind, noise_seed, &[]);
    let responses = clean.iter().zip(&noise).map(|(c, e)| c + e).collect();
    Ok(TraceRegressionDataset {
        ensemble,
        a0,
        sigma_xi,
        noise,
        responses,
        noise_kind,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::gaussian_matrix;

    fn spec(kind: EnsembleKind, m: usize, n: usize, seed: u64) -> EnsembleSpec {
        EnsembleSpec { kind, m, n, seed }
    }

    #[test]
    fn sampling_is_deterministic() {
        let s = spec(EnsembleKind::Gaussian, 4, 10, 99);
        assert_eq!(sample_ensemble(s).unwrap(), sample_ensemble(s).unwrap());
        let other = sample_ensemble(spec(EnsembleKind::Gaussian, 4, 10, 100)).unwrap();
        assert_ne!(sample_ensemble(s).unwrap(), other);
    }

    #[test]
    fn rademacher_entries_are_signs() {
        let e = sample_ensemble(spec(EnsembleKind::Rademacher, 5, 30, 1)).unwrap();
        assert!(e
            .matrices()
            .iter()
            .flat_map(|x| x.as_slice())
            .all(|&v| v == 1.0 || v == -1.0));
    }

    #[test]
    fn zero_dimensions_rejected() {
        assert!(sample_ensemble(spec(EnsembleKind::Gaussian, 0, 3, 1)).is_err());
        assert!(sample_ensemble(spec(EnsembleKind::Gaussian, 3, 0, 1)).is_err());
    }

    #[test]
    fn forward_and_adjoint_examples() {
        let e = sample_ensemble(spec(EnsembleKind::Gaussian, 3, 7, 2)).unwrap();
        assert_eq!(e.forward(&DenseMatrix::zeros(3, 3)).unwrap(), vec![0.0; 7]);
        let mut e1 = vec![0.0; 7];
        e1[0] = 1.0;
        assert_eq!(e.adjoint(&e1).unwrap(), e.matrices()[0]);
        assert_eq!(e.adjoint(&[0.0; 7]).unwrap(), DenseMatrix::zeros(3, 3));
        assert!(e.forward(&DenseMatrix::zeros(2, 2)).is_err());
        assert!(e.adjoint(&[1.0; 6]).is_err());

        let id = MeasurementEnsemble::from_matrices(2, vec![DenseMatrix::identity(2)]).unwrap();
        assert_eq!(
            id.forward(&DenseMatrix::from_diag(&[1.0, 2.0])).unwrap(),
            vec![3.0]
        );
    }

    #[test]
    fn adjointness_oracle() {
        for kind in [EnsembleKind::Gaussian, EnsembleKind::Rademacher] {
            let e = sample_ensemble(spec(kind, 5, 150, 3)).unwrap();
            let mut rng = stream(17, &[]);
            for _ in 0..100 {
                let a = gaussian_matrix(5, 5, &mut rng);
                let u: Vec<f64> = (0..150).map(|_| gaussian(&mut rng)).collect();
                let lhs: f64 = e
                    .forward(&a)
                    .unwrap()
                    .iter()
                    .zip(&u)
                    .map(|(x, y)| x * y)
                    .sum();
                let rhs = a.inner(&e.adjoint(&u).unwrap());
                assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(rhs.abs()).max(1.0));
            }
        }
    }

    #[test]
    fn dataset_examples() {
        let e = sample_ensemble(spec(EnsembleKind::Gaussian, 4, 20, 5)).unwrap();
        let a0 = gaussian_matrix(4, 4, &mut stream(6, &[]));
        let clean = e.forward(&a0).unwrap();
        let d = generate_dataset(a0.clone(), e.clone(), 0.0, NoiseKind::Gaussian, 1).unwrap();
        assert_eq!(d.responses, clean);

        let d = generate_dataset(
            DenseMatrix::zeros(4, 4),
            e.clone(),
            1.0,
            NoiseKind::Gaussian,
            1,
        )
        .unwrap();
        assert_eq!(d.responses, d.noise);

        let d = generate_dataset(a0, e, 0.3, NoiseKind::RademacherScaled, 1).unwrap();
        assert!(d.noise.iter().all(|&v| v == 0.3 || v == -0.3));
        assert!(generate_dataset(
            DenseMatrix::zeros(3, 3),
            d.ensemble.clone(),
            0.1,
            NoiseKind::Gaussian,
            1
        )
        .is_err());
    }

    #[test]
    fn noise_level_oracle() {
        let e = sample_ensemble(spec(EnsembleKind::Gaussian, 10, 5000, 8)).unwrap();
        let a0 = gaussian_matrix(10, 10, &mut stream(1, &[]));
        let d = generate_dataset(a0.clone(), e, 0.01, NoiseKind::Gaussian, 4).unwrap();
        let clean = d.ensemble.forward(&a0).unwrap();
        let resid: Vec<f64> = d.responses.iter().zip(&clean).map(|(y, c)| y - c).collect();
        let mean = resid.iter().sum::<f64>() / resid.len() as f64;
        let var = resid.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (resid.len() - 1) as f64;
        let sd = var.sqrt();
        assert!((0.009..=0.011).contains(&sd), "sd {sd}");
    }
}

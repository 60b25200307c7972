//! Minimax lower-bound instances: random rank-`k` projections, greedy
//! packings of the Grassmann manifold under `tau_q(E, F) = ||P_E - P_F||_q`,
//! scaled projection families and their pairwise KL divergences.

use serde::Serialize;

use crate::error::{dimension, domain, Result};
use crate::matcore::{orthonormalize_columns, schatten_norm, DenseMatrix, NormOrder};
use crate::rng::{gaussian_matrix, mix64, stream};

const GRASSMANN_TAG: u64 = 0x4752_4153;

/// Separation constant of the packing behind [`build_minimax_instance`].
pub const INSTANCE_EPSILON: f64 = 0.5;

/// Orthogonal projection `Q Q^T` onto the span of an `m x k` Gaussian
/// matrix.
pub fn grassmann_sample(m: usize, k: usize, seed: u64) -> Result<DenseMatrix> {
    if k == 0 || k > m {
        return Err(domain(format!("subspace dimension {k} outside 1..={m}")));
    }
    let mut rng = stream(seed, &[GRASSMANN_TAG, m as u64, k as u64]);
    let q = orthonormalize_columns(&gaussian_matrix(m, k, &mut rng))?;
    // Entry (i, j) and (j, i) sum identical products in identical order, so
    // the result is exactly symmetric.
    Ok(DenseMatrix::from_fn(m, m, |i, j| {
        (0..k).map(|l| q[(i, l)] * q[(j, l)]).sum()
    }))
}

/// `||P - Q||_q`.
pub fn tau_q(p: &DenseMatrix, q: &DenseMatrix, order: NormOrder) -> Result<f64> {
    if p.shape() != q.shape() {
        return Err(dimension(format!(
            "projections are {}x{} and {}x{}",
            p.rows(),
            p.cols(),
            q.rows(),
            q.cols()
        )));
    }
    let diff = p - q;
    match order.validate()? {
        NormOrder::Finite(2.0) => Ok(diff.frobenius_norm()),
        other => schatten_norm(&diff, other),
    }
}

#[derive(Debug, Clone)]
pub struct GrassmannPacking {
    pub m: usize,
    pub k: usize,
    pub q: NormOrder,
    pub epsilon: f64,
    pub projections: Vec<DenseMatrix>,
    /// Smallest pairwise `tau_q`; `+inf` for a single projection.
    pub min_pairwise_distance: f64,
    pub seed: u64,
    /// Candidates drawn.
    pub attempts: usize,
}

impl GrassmannPacking {
    /// Required pairwise separation `epsilon k^(1/q)`.
    pub fn separation(&self) -> f64 {
        self.epsilon * (self.k as f64).powf(self.q.reciprocal())
    }

    pub fn cardinality(&self) -> usize {
        self.projections.len()
    }
}

/// Keeps each random projection whose `tau_q` distance to every kept one is
/// at least `epsilon k^(1/q)`, until `max_cardinality` keeps or
/// `max_attempts` draws. Candidate `i` is `grassmann_sample(m, k, mix64(seed, [i]))`.
pub fn greedy_packing(
    m: usize,
    k: usize,
    q: NormOrder,
    epsilon: f64,
    max_cardinality: usize,
    max_attempts: usize,
    seed: u64,
) -> Result<GrassmannPacking> {
    let q = q.validate()?;
    if k == 0 || 2 * k > m {
        return Err(domain(format!(
            "packing needs 1 <= k <= m - k, got k={k}, m={m}"
        )));
    }
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(domain(format!("epsilon must be positive, got {epsilon}")));
    }
    let separation = epsilon * (k as f64).powf(q.reciprocal());
    let mut projections: Vec<DenseMatrix> = Vec::new();
    let mut attempts = 0;
    while attempts < max_attempts && projections.len() < max_cardinality {
        let candidate = grassmann_sample(m, k, mix64(seed, &[attempts as u64]))?;
        attempts += 1;
        let mut far = true;
        for kept in &projections {
            if tau_q(&candidate, kept, q)? < separation {
                far = false;
                break;
            }
        }
        if far {
            projections.push(candidate);
        }
    }
    if projections.is_empty() {
        return Err(domain(format!(
            "no projection kept after {attempts} attempts; epsilon {epsilon} too large or budget zero"
        )));
    }
    let min_pairwise_distance = min_pairwise(&projections, q)?;
    Ok(GrassmannPacking {
        m,
        k,
        q,
        epsilon,
        projections,
        min_pairwise_distance,
        seed,
        attempts,
    })
}

fn min_pairwise(items: &[DenseMatrix], q: NormOrder) -> Result<f64> {
    let mut best = f64::INFINITY;
    for (i, a) in items.iter().enumerate() {
        for b in &items[i + 1..] {
            best = best.min(tau_q(a, b, q)?);
        }
    }
    Ok(best)
}

/// `K(P_A || P_B) = n ||A - B||_2^2 / (2 sigma^2)` for isotropic designs.
pub fn kl_divergence(a: &DenseMatrix, b: &DenseMatrix, n: usize, sigma_xi: f64) -> Result<f64> {
    if !(sigma_xi > 0.0) {
        return Err(domain(format!(
            "KL divergence needs sigma_xi > 0, got {sigma_xi}"
        )));
    }
    if a.shape() != b.shape() {
        return Err(dimension("KL divergence of mismatched shapes"));
    }
    let d = a - b;
    Ok(n as f64 * d.inner(&d) / (2.0 * sigma_xi * sigma_xi))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PackingBudget {
    pub epsilon: f64,
    pub max_cardinality: usize,
    pub max_attempts: usize,
}

impl Default for PackingBudget {
    fn default() -> Self {
        PackingBudget {
            epsilon: INSTANCE_EPSILON,
            max_cardinality: 64,
            max_attempts: 4096,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MinimaxInstance {
    pub packing: GrassmannPacking,
    /// `c' sigma sqrt(m / n)`.
    pub kappa: f64,
    /// `kappa P` for every packed projection `P`.
    pub matrices: Vec<DenseMatrix>,
    pub n: usize,
    pub sigma_xi: f64,
    pub c_prime: f64,
    pub max_pairwise_kl: f64,
    pub log_cardinality: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MinimaxSidecar {
    pub m: usize,
    pub r: usize,
    pub n: usize,
    pub sigma_xi: f64,
    pub c_prime: f64,
    pub kappa: f64,
    pub cardinality: usize,
    pub max_pairwise_kl: f64,
    pub log_cardinality: f64,
}

impl MinimaxInstance {
    pub fn kl_condition_met(&self) -> bool {
        self.max_pairwise_kl <= self.log_cardinality
    }

    pub fn sidecar(&self) -> MinimaxSidecar {
        MinimaxSidecar {
            m: self.packing.m,
            r: self.packing.k,
            n: self.n,
            sigma_xi: self.sigma_xi,
            c_prime: self.c_prime,
            kappa: self.kappa,
            cardinality: self.packing.cardinality(),
            max_pairwise_kl: self.max_pairwise_kl,
            log_cardinality: self.log_cardinality,
        }
    }
}

pub fn build_minimax_instance(
    m: usize,
    r: usize,
    n: usize,
    sigma_xi: f64,
    c_prime: f64,
    q: NormOrder,
    seed: u64,
) -> Result<MinimaxInstance> {
    build_minimax_instance_with(
        m,
        r,
        n,
        sigma_xi,
        c_prime,
        q,
        seed,
        PackingBudget::default(),
    )
}

/// Packs rank-`r` projections at separation `budget.epsilon r^(1/q)`,
/// scales them by `kappa = c' sigma sqrt(m/n)` and compares the largest
/// pairwise KL divergence with `ln(cardinality)`.
#[allow(clippy::too_many_arguments)]
pub fn build_minimax_instance_with(
    m: usize,
    r: usize,
    n: usize,
    sigma_xi: f64,
    c_prime: f64,
    q: NormOrder,
    seed: u64,
    budget: PackingBudget,
) -> Result<MinimaxInstance> {
    if r == 0 || 2 * r > m {
        return Err(domain(format!(
            "minimax instance needs 1 <= r and 2r <= m, got r={r}, m={m}"
        )));
    }
    if n == 0 {
        return Err(domain("minimax instance needs n >= 1"));
    }
    if !(c_prime > 0.0) {
        return Err(domain(format!("c' must be positive, got {c_prime}")));
    }
    if !(sigma_xi > 0.0) {
        return Err(domain(format!("sigma_xi must be positive, got {sigma_xi}")));
    }
    let packing = greedy_packing(
        m,
        r,
        q,
        budget.epsilon,
        budget.max_cardinality,
        budget.max_attempts,
        seed,
    )?;
    let kappa = c_prime * sigma_xi * (m as f64 / n as f64).sqrt();
    let matrices: Vec<DenseMatrix> = packing
        .projections
        .iter()
        .map(|p| p.scaled(kappa))
        .collect();
    let mut max_pairwise_kl = 0.0_f64;
    for (i, a) in matrices.iter().enumerate() {
        for b in &matrices[i + 1..] {
            max_pairwise_kl = max_pairwise_kl.max(kl_divergence(a, b, n, sigma_xi)?);
        }
    }
    let log_cardinality = (matrices.len() as f64).ln();
    Ok(MinimaxInstance {
        packing,
        kappa,
        matrices,
        n,
        sigma_xi,
        c_prime,
        max_pairwise_kl,
        log_cardinality,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::{singular_values, svd};

    const Q2: NormOrder = NormOrder::Finite(2.0);

    #[test]
    fn full_dimension_sample_is_identity() {
        let p = grassmann_sample(5, 5, 3).unwrap();
        assert!((&p - &DenseMatrix::identity(5)).max_abs() < 1e-12);
        assert!(grassmann_sample(5, 6, 3).is_err());
        assert!(grassmann_sample(5, 0, 3).is_err());
    }

    #[test]
    fn projection_laws() {
        for seed in 0..10 {
            let p = grassmann_sample(9, 3, seed).unwrap();
            assert_eq!(p, p.transpose());
            let p2 = p.matmul(&p).unwrap();
            assert!((&p2 - &p).max_abs() < 1e-9);
            let trace: f64 = (0..9).map(|i| p[(i, i)]).sum();
            assert!((trace - 3.0).abs() < 1e-9);
            // P is symmetric PSD, so its singular values are its eigenvalues.
            let eig = singular_values(&p).unwrap();
            assert!(eig
                .iter()
                .all(|&e| e.abs() < 1e-8 || (e - 1.0).abs() < 1e-8));
        }
        assert_eq!(
            grassmann_sample(6, 2, 4).unwrap(),
            grassmann_sample(6, 2, 4).unwrap()
        );
    }

    #[test]
    fn tau_examples() {
        let p = grassmann_sample(6, 2, 1).unwrap();
        assert_eq!(tau_q(&p, &p, Q2).unwrap(), 0.0);
        let e1 = DenseMatrix::from_diag(&[1.0, 0.0]);
        let e2 = DenseMatrix::from_diag(&[0.0, 1.0]);
        assert!((tau_q(&e1, &e2, Q2).unwrap() - 2.0_f64.sqrt()).abs() < 1e-15);
        assert!(tau_q(&e1, &DenseMatrix::identity(3), Q2).is_err());
    }

    #[test]
    fn tau_two_matches_basis_overlap() {
        // tau_2^2 = 2k - 2 ||U_E^T U_F||_F^2 with orthonormal bases U_E, U_F.
        for seed in 0..20 {
            let (m, k) = (8, 3);
            let p = grassmann_sample(m, k, seed).unwrap();
            let q = grassmann_sample(m, k, seed + 100).unwrap();
            let basis = |proj: &DenseMatrix| {
                let f = svd(proj).unwrap();
                DenseMatrix::from_fn(m, k, |i, j| f.u[(i, j)])
            };
            let overlap = basis(&p).transpose().matmul(&basis(&q)).unwrap();
            let expected = 2.0 * k as f64 - 2.0 * overlap.inner(&overlap);
            let got = tau_q(&p, &q, Q2).unwrap().powi(2);
            assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
        }
    }

    #[test]
    fn tiny_epsilon_keeps_everything() {
        let p = greedy_packing(8, 2, Q2, 1e-6, 10, 100, 5).unwrap();
        assert_eq!(p.cardinality(), 10);
        assert_eq!(p.attempts, 10);
    }

    #[test]
    fn huge_epsilon_keeps_one() {
        let p = greedy_packing(8, 2, NormOrder::Infinity, 2.0, 50, 200, 5).unwrap();
        assert_eq!(p.cardinality(), 1);
        assert_eq!(p.min_pairwise_distance, f64::INFINITY);
    }

    #[test]
    fn packing_contract_errors() {
        assert!(greedy_packing(8, 5, Q2, 0.1, 10, 10, 1).is_err());
        assert!(greedy_packing(8, 2, Q2, 0.0, 10, 10, 1).is_err());
        assert!(greedy_packing(8, 2, Q2, 0.1, 10, 0, 1).is_err());
    }

    #[test]
    fn kl_examples() {
        let a = DenseMatrix::from_diag(&[1.0, 0.0]);
        let z = DenseMatrix::zeros(2, 2);
        assert_eq!(kl_divergence(&a, &a, 5, 1.0).unwrap(), 0.0);
        assert_eq!(kl_divergence(&a, &z, 2, 1.0).unwrap(), 1.0);
        assert!(kl_divergence(&a, &z, 2, 0.0).is_err());
        let p = grassmann_sample(5, 2, 1).unwrap();
        let q = grassmann_sample(5, 2, 2).unwrap();
        assert_eq!(
            kl_divergence(&p, &q, 7, 0.3).unwrap(),
            kl_divergence(&q, &p, 7, 0.3).unwrap()
        );
    }

    #[test]
    fn instance_rejects_bad_rank() {
        assert!(build_minimax_instance(10, 6, 100, 1.0, 0.05, Q2, 1).is_err());
        assert!(build_minimax_instance(10, 2, 100, 1.0, 0.0, Q2, 1).is_err());
    }
}

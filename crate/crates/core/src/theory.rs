//! Theoretical constants, multi-norm error reports, the bound chain for the
//! spectral, nuclear and Ky-Fan errors, and an empirical probe of the
//! restricted strong convexity constant.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{dimension, domain, Result};
use crate::matcore::{
    kyfan_from_singular_values, orthonormalize_columns, rank_truncate,
    schatten_from_singular_values, svd, DenseMatrix, NormOrder,
};
use crate::rng::{gaussian_matrix, stream};
use crate::sensing::{MeasurementEnsemble, NormalOperator};
use crate::solvers::RANK_TOLERANCE;

const RSC_TAG: u64 = 0x5253_4350;

/// Schatten orders reported by [`error_report`].
pub const SCHATTEN_GRID: [NormOrder; 6] = [
    NormOrder::Finite(1.0),
    NormOrder::Finite(1.5),
    NormOrder::Finite(2.0),
    NormOrder::Finite(3.0),
    NormOrder::Finite(4.0),
    NormOrder::Infinity,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    pub alpha: f64,
    /// Cone aperture: 1 for the Dantzig selector, 3 for the LASSO.
    pub c0: f64,
    /// `sqrt(1 - 1/alpha)`.
    pub c1: f64,
    /// Spectral-norm constant.
    pub c_d: f64,
    /// Nuclear-norm constant.
    pub c_d_prime: f64,
}

/// `c1 = sqrt(1 - 1/alpha)`,
/// `c_d = 3/2 + 3 (1 + c0)^2 / (2 alpha (1 + 2 c0) c1^2)`,
/// `c_d' = 3 (1 + c0)^2 / (2 c1^2)`.
pub fn theory_constants(alpha: f64, c0: f64) -> Result<TheoryConstants> {
    if !(alpha > 1.0) || !alpha.is_finite() {
        return Err(domain(format!("alpha must exceed 1, got {alpha}")));
    }
    if !(c0 > 0.0) || !c0.is_finite() {
        return Err(domain(format!("c0 must be positive, got {c0}")));
    }
    let c1_sq = 1.0 - 1.0 / alpha;
    let spread = 3.0 * (1.0 + c0).powi(2);
    Ok(TheoryConstants {
        alpha,
        c0,
        c1: c1_sq.sqrt(),
        c_d: 1.5 + spread / (2.0 * alpha * (1.0 + 2.0 * c0) * c1_sq),
        c_d_prime: spread / (2.0 * c1_sq),
    })
}

/// Norms of the estimation error `A_hat - A0`, all from one SVD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub spectral: f64,
    pub frobenius: f64,
    pub nuclear: f64,
    /// `(q, ||A_hat - A0||_q)` over [`SCHATTEN_GRID`].
    pub schatten: Vec<(NormOrder, f64)>,
    /// Entry `k - 1` is the Ky-Fan-`k` norm, for `k = 1..=min(m, 2r + 2)`.
    pub kyfan: Vec<f64>,
    /// `spectral / (sigma_xi sqrt(m / n))`; `None` when `sigma_xi = 0`.
    pub ratio_spectral: Option<f64>,
    /// Numerical rank of `A0` (at least 1).
    pub rank: usize,
    pub singular_values: Vec<f64>,
}

impl ErrorReport {
    pub fn schatten(&self, q: NormOrder) -> Option<f64> {
        self.schatten
            .iter()
            .find(|(order, _)| *order == q)
            .map(|(_, v)| *v)
    }
}

pub fn error_report(
    a_hat: &DenseMatrix,
    a0: &DenseMatrix,
    n: usize,
    sigma_xi: f64,
) -> Result<ErrorReport> {
    if a_hat.shape() != a0.shape() {
        return Err(dimension(format!(
            "estimate is {}x{} but truth is {}x{}",
            a_hat.rows(),
            a_hat.cols(),
            a0.rows(),
            a0.cols()
        )));
    }
    let m = a0.require_square("error_report")?;
    let rank = svd(a0)?.rank(RANK_TOLERANCE).max(1);
    let s = svd(&(a_hat - a0))?.singular_values;
    let schatten = SCHATTEN_GRID
        .iter()
        .map(|&q| schatten_from_singular_values(&s, q).map(|v| (q, v)))
        .collect::<Result<Vec<_>>>()?;
    let kyfan = (1..=m.min(2 * rank + 2))
        .map(|k| kyfan_from_singular_values(&s, k))
        .collect::<Result<Vec<_>>>()?;
    let spectral = s[0];
    let ratio_spectral =
        (sigma_xi > 0.0 && n > 0).then(|| spectral / (sigma_xi * (m as f64 / n as f64).sqrt()));
    Ok(ErrorReport {
        spectral,
        frobenius: schatten_from_singular_values(&s, NormOrder::FROBENIUS)?,
        nuclear: s.iter().sum(),
        schatten,
        kyfan,
        ratio_spectral,
        rank,
        singular_values: s,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub spectral_bound: f64,
    pub spectral_ok: bool,
    pub nuclear_bound: f64,
    pub nuclear_ok: bool,
    /// `(k, bound, ok)` for every Ky-Fan index in the report.
    pub kyfan: Vec<(usize, f64, bool)>,
}

impl BoundCheck {
    pub fn all_ok(&self) -> bool {
        self.spectral_ok && self.nuclear_ok && self.kyfan.iter().all(|&(_, _, ok)| ok)
    }

    pub fn to_map(&self) -> BTreeMap<String, bool> {
        let mut out = BTreeMap::new();
        out.insert("spectral_ok".to_string(), self.spectral_ok);
        out.insert("nuclear_ok".to_string(), self.nuclear_ok);
        for &(k, _, ok) in &self.kyfan {
            out.insert(format!("kyfan_ok_k{k}"), ok);
        }
        out
    }
}

/// Inclusive checks of `spectral <= c_d lambda/n`,
/// `nuclear <= c_d' r lambda/n` and
/// `kyfan_k <= c_d (1 + c0) min(k, r) lambda/n`.
pub fn bound_check(
    report: &ErrorReport,
    constants: &TheoryConstants,
    lambda: f64,
    n: usize,
    r: usize,
) -> Result<BoundCheck> {
    if r == 0 {
        return Err(domain("bound_check needs r >= 1"));
    }
    if n == 0 {
        return Err(domain("bound_check needs n >= 1"));
    }
    let unit = lambda / n as f64;
    let spectral_bound = constants.c_d * unit;
    let nuclear_bound = constants.c_d_prime * r as f64 * unit;
    let kyfan = report
        .kyfan
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let k = i + 1;
            let bound = constants.c_d * (1.0 + constants.c0) * k.min(r) as f64 * unit;
            (k, bound, v <= bound)
        })
        .collect();
    Ok(BoundCheck {
        spectral_bound,
        spectral_ok: report.spectral <= spectral_bound,
        nuclear_bound,
        nuclear_ok: report.nuclear <= nuclear_bound,
        kyfan,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RscEstimate {
    /// Smallest observed `||X(Delta)|| / (sqrt(n) ||Delta_max(r)||_2)`: an
    /// upper bound on the restricted strong convexity constant.
    pub kappa_hat: f64,
    /// Set when `r >= m` left no room for a tail and every probe was
    /// rank-`r` only.
    pub tail_suppressed: bool,
    pub n_samples: usize,
}

/// `||X(Delta)|| / (sqrt(n) ||Delta_max(r)||_2)`; zero-head matrices give
/// `+inf` (they are outside every cone).
pub fn rsc_ratio(ensemble: &MeasurementEnsemble, delta: &DenseMatrix, r: usize) -> Result<f64> {
    let op = NormalOperator::MatrixFree(ensemble);
    rsc_ratio_with(&op, ensemble.n(), delta, r)
}

fn rsc_ratio_with(op: &NormalOperator<'_>, n: usize, delta: &DenseMatrix, r: usize) -> Result<f64> {
    let (head, _) = rank_truncate(delta, r)?;
    let denom = (n as f64).sqrt() * head.frobenius_norm();
    if denom == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(op.energy(delta).max(0.0).sqrt() / denom)
}

/// Probes the cone boundary: each `Delta = U diag(s) V^T` has full random
/// orthogonal factors, a random unit head spectrum on the first `r` slots and
/// a uniform random tail spectrum rescaled so `||tail||_1 = c0 ||head||_1`.
pub fn rsc_probe(
    ensemble: &MeasurementEnsemble,
    r: usize,
    c0: f64,
    n_samples: usize,
    seed: u64,
) -> Result<RscEstimate> {
    let m = ensemble.m();
    if r == 0 {
        return Err(domain("rsc_probe needs r >= 1"));
    }
    if !(c0 > 0.0) {
        return Err(domain(format!("c0 must be positive, got {c0}")));
    }
    if n_samples == 0 {
        return Err(domain("rsc_probe needs at least one sample"));
    }
    if ensemble.n() == 0 {
        return Err(domain("rsc_probe needs a nonempty ensemble"));
    }
    let tail_suppressed = r >= m;
    let r = r.min(m);
    let op = NormalOperator::new(ensemble);
    let ratios: Vec<f64> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, &[RSC_TAG, r as u64, i as u64]);
            let delta = cone_boundary_sample(m, r, c0, &mut rng)?;
            rsc_ratio_with(&op, ensemble.n(), &delta, r)
        })
        .collect::<Result<_>>()?;
    Ok(RscEstimate {
        kappa_hat: ratios.into_iter().fold(f64::INFINITY, f64::min),
        tail_suppressed,
        n_samples,
    })
}

fn cone_boundary_sample(
    m: usize,
    r: usize,
    c0: f64,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<DenseMatrix> {
    let u = orthonormalize_columns(&gaussian_matrix(m, m, rng))?;
    let v = orthonormalize_columns(&gaussian_matrix(m, m, rng))?;
    let mut s = vec![0.0; m];
    for x in s.iter_mut().take(r) {
        *x = -(1.0 - rng.random::<f64>()).ln();
    }
    let head_l2 = s[..r].iter().map(|x| x * x).sum::<f64>().sqrt();
    s[..r].iter_mut().for_each(|x| *x /= head_l2);
    if r < m {
        let head_l1: f64 = s[..r].iter().sum();
        for x in s[r..].iter_mut() {
            *x = rng.random::<f64>() + f64::EPSILON;
        }
        let tail_l1: f64 = s[r..].iter().sum();
        s[r..].iter_mut().for_each(|x| *x *= c0 * head_l1 / tail_l1);
    }
    let mut delta = DenseMatrix::zeros(m, m);
    for (k, &sk) in s.iter().enumerate() {
        for i in 0..m {
            let uik = u[(i, k)] * sk;
            for j in 0..m {
                delta[(i, j)] += uik * v[(j, k)];
            }
        }
    }
    Ok(delta)
}

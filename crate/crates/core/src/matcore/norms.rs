use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{dot, svd, DenseMatrix};
use crate::error::{dimension, domain, Error, Result};

/// Order `q` of a Schatten norm; `Infinity` is the spectral norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum NormOrder {
    Finite(f64),
    Infinity,
}

impl NormOrder {
    pub const NUCLEAR: NormOrder = NormOrder::Finite(1.0);
    pub const FROBENIUS: NormOrder = NormOrder::Finite(2.0);
    pub const SPECTRAL: NormOrder = NormOrder::Infinity;

    pub fn validate(self) -> Result<Self> {
        match self {
            NormOrder::Finite(q) if !(q >= 1.0) || !q.is_finite() => {
                Err(domain(format!("Schatten order must be >= 1, got {q}")))
            }
            other => Ok(other),
        }
    }

    /// `1/q`, zero for the spectral norm.
    pub fn reciprocal(self) -> f64 {
        match self {
            NormOrder::Finite(q) => 1.0 / q,
            NormOrder::Infinity => 0.0,
        }
    }

    fn less_than(self, other: NormOrder) -> bool {
        self.reciprocal() > other.reciprocal()
    }
}

impl fmt::Display for NormOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NormOrder::Finite(q) => write!(f, "{q}"),
            NormOrder::Infinity => write!(f, "inf"),
        }
    }
}

impl FromStr for NormOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "Inf" | "infinity" | "∞" => Ok(NormOrder::Infinity),
            other => other
                .parse::<f64>()
                .map_err(|_| domain(format!("cannot parse Schatten order {other:?}")))
                .and_then(|q| NormOrder::Finite(q).validate()),
        }
    }
}

impl From<NormOrder> for String {
    fn from(q: NormOrder) -> String {
        q.to_string()
    }
}

impl TryFrom<String> for NormOrder {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Schatten norm of a nonincreasing singular-value vector.
pub fn schatten_from_singular_values(s: &[f64], q: NormOrder) -> Result<f64> {
    let top = s.iter().fold(0.0_f64, |acc, &v| acc.max(v));
    match q.validate()? {
        NormOrder::Infinity => Ok(top),
        NormOrder::Finite(1.0) => Ok(s.iter().sum()),
        NormOrder::Finite(2.0) => Ok(dot(s, s).sqrt()),
        NormOrder::Finite(q) => {
            if top == 0.0 {
                return Ok(0.0);
            }
            let sum: f64 = s.iter().map(|v| (v / top).powf(q)).sum();
            Ok(top * sum.powf(1.0 / q))
        }
    }
}

pub fn schatten_norm(a: &DenseMatrix, q: NormOrder) -> Result<f64> {
    q.validate()?;
    schatten_from_singular_values(&svd::singular_values(a)?, q)
}

pub fn spectral_norm(a: &DenseMatrix) -> Result<f64> {
    schatten_norm(a, NormOrder::Infinity)
}

/// Sum of the `k` largest entries of a nonincreasing singular-value vector.
pub fn kyfan_from_singular_values(s: &[f64], k: usize) -> Result<f64> {
    if k == 0 || k > s.len() {
        return Err(domain(format!("Ky-Fan index {k} outside 1..={}", s.len())));
    }
    Ok(s[..k].iter().sum())
}

pub fn kyfan_norm(a: &DenseMatrix, k: usize) -> Result<f64> {
    let m = a.require_square("kyfan_norm")?;
    if k == 0 || k > m {
        return Err(domain(format!("Ky-Fan index {k} outside 1..={m}")));
    }
    kyfan_from_singular_values(&svd::singular_values(a)?, k)
}

/// Best rank-`r` approximation `head` and the remainder `tail = A - head`.
///
/// With repeated singular values at the cut the head is the one selected by
/// the SVD's output order; any such choice is a best rank-`r` approximation.
pub fn rank_truncate(a: &DenseMatrix, r: usize) -> Result<(DenseMatrix, DenseMatrix)> {
    let m = a.require_square("rank_truncate")?;
    if r > m {
        return Err(domain(format!("truncation rank {r} exceeds {m}")));
    }
    if r == 0 {
        return Ok((DenseMatrix::zeros(m, m), a.clone()));
    }
    let f = svd::svd(a)?;
    let kept: Vec<f64> = f
        .singular_values
        .iter()
        .enumerate()
        .map(|(j, &s)| if j < r { s } else { 0.0 })
        .collect();
    let head = f.compose(&kept);
    let tail = a - &head;
    Ok((head, tail))
}

/// Singular value soft-thresholding `U diag(max(s - tau, 0)) V^T`, the
/// proximal map of `tau * ||.||_1`.
pub fn svt(a: &DenseMatrix, tau: f64) -> Result<DenseMatrix> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(domain(format!(
            "threshold must be finite and >= 0, got {tau}"
        )));
    }
    if tau == 0.0 {
        a.require_square("svt")?;
        return Ok(a.clone());
    }
    let f = svd::svd(a)?;
    let shrunk: Vec<f64> = f
        .singular_values
        .iter()
        .map(|s| (s - tau).max(0.0))
        .collect();
    Ok(f.compose(&shrunk))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeMembership {
    pub is_member: bool,
    /// `||tail||_1 / ||head||_1`; 0 for the zero matrix, `+inf` when only
    /// the head vanishes.
    pub ratio: f64,
}

/// Tests `||Delta_{-max(r)}||_1 <= beta * ||Delta_{max(r)}||_1`.
///
/// Singular values below `m * eps * sigma_1` are treated as exact zeros so a
/// matrix of rank `r` reports ratio 0 rather than rounding noise.
pub fn cone_membership(delta: &DenseMatrix, r: usize, beta: f64) -> Result<ConeMembership> {
    let m = delta.require_square("cone_membership")?;
    if r == 0 || r > m {
        return Err(domain(format!("cone rank {r} outside 1..={m}")));
    }
    if !(beta > 0.0) {
        return Err(domain(format!("cone aperture must be > 0, got {beta}")));
    }
    let s = svd::singular_values(delta)?;
    let floor = s[0] * f64::EPSILON * m as f64;
    let clean = |v: &f64| if *v <= floor { 0.0 } else { *v };
    let head: f64 = s[..r].iter().map(clean).sum();
    let tail: f64 = s[r..].iter().map(clean).sum();
    let ratio = match (head == 0.0, tail == 0.0) {
        (true, true) => 0.0,
        (true, false) => f64::INFINITY,
        _ => tail / head,
    };
    Ok(ConeMembership {
        is_member: ratio <= beta,
        ratio,
    })
}

/// `||A||_p^theta ||A||_r^(1-theta) - ||A||_q` for `p < q < r`, where
/// `theta / p + (1 - theta) / r = 1 / q`. Nonnegative up to rounding.
pub fn interpolation_slack(
    a: &DenseMatrix,
    p: NormOrder,
    q: NormOrder,
    r: NormOrder,
) -> Result<f64> {
    let (p, q, r) = (p.validate()?, q.validate()?, r.validate()?);
    if !(p.less_than(q) && q.less_than(r)) {
        return Err(domain(format!("need p < q < r, got ({p}, {q}, {r})")));
    }
    let theta = (q.reciprocal() - r.reciprocal()) / (p.reciprocal() - r.reciprocal());
    let s = svd::singular_values(a)?;
    let np = schatten_from_singular_values(&s, p)?;
    let nq = schatten_from_singular_values(&s, q)?;
    let nr = schatten_from_singular_values(&s, r)?;
    Ok(np.powf(theta) * nr.powf(1.0 - theta) - nq)
}

/// Orthonormal basis for the column span of a full-column-rank `m x k`
/// matrix (modified Gram-Schmidt with one reorthogonalization pass).
pub fn orthonormalize_columns(g: &DenseMatrix) -> Result<DenseMatrix> {
    let (m, k) = g.shape();
    if k > m {
        return Err(dimension(format!(
            "cannot orthonormalize {k} columns in R^{m}"
        )));
    }
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(k);
    for j in 0..k {
        let mut c = g.column(j);
        let original = dot(&c, &c).sqrt();
        for _ in 0..2 {
            for b in &cols {
                let proj = dot(&c, b);
                c.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
            }
        }
        let norm = dot(&c, &c).sqrt();
        if !(norm > 1e-12 * original.max(f64::MIN_POSITIVE)) {
            return Err(domain(format!("column {j} is linearly dependent")));
        }
        c.iter_mut().for_each(|x| *x /= norm);
        cols.push(c);
    }
    Ok(DenseMatrix::from_fn(m, k, |i, j| cols[j][i]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian_matrix, stream};

    const INF: NormOrder = NormOrder::Infinity;

    fn q(v: f64) -> NormOrder {
        NormOrder::Finite(v)
    }

    #[test]
    fn schatten_examples() {
        assert_eq!(
            schatten_norm(&DenseMatrix::identity(4), q(2.0)).unwrap(),
            2.0
        );
        let d = DenseMatrix::from_diag(&[3.0, 1.0]);
        assert_eq!(schatten_norm(&d, q(1.0)).unwrap(), 4.0);
        assert_eq!(schatten_norm(&d, INF).unwrap(), 3.0);
        assert!(matches!(schatten_norm(&d, q(0.5)), Err(Error::Domain(_))));
    }

    #[test]
    fn frobenius_matches_entrywise() {
        let a = gaussian_matrix(6, 6, &mut stream(3, &[]));
        let entrywise: f64 = a.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((schatten_norm(&a, q(2.0)).unwrap() - entrywise).abs() < 1e-10);
    }

    #[test]
    fn kyfan_examples() {
        let d = DenseMatrix::from_diag(&[3.0, 2.0, 1.0]);
        assert_eq!(kyfan_norm(&d, 2).unwrap(), 5.0);
        assert!(kyfan_norm(&d, 0).is_err());
        assert!(kyfan_norm(&d, 4).is_err());
        let a = gaussian_matrix(5, 5, &mut stream(4, &[]));
        assert_eq!(kyfan_norm(&a, 1).unwrap(), schatten_norm(&a, INF).unwrap());
        assert_eq!(
            kyfan_norm(&a, 5).unwrap(),
            schatten_norm(&a, q(1.0)).unwrap()
        );
    }

    #[test]
    fn truncation_examples() {
        let d = DenseMatrix::from_diag(&[3.0, 2.0, 1.0]);
        let (h, t) = rank_truncate(&d, 1).unwrap();
        assert_eq!(h, DenseMatrix::from_diag(&[3.0, 0.0, 0.0]));
        assert_eq!(t, DenseMatrix::from_diag(&[0.0, 2.0, 1.0]));
        let (h, t) = rank_truncate(&d, 3).unwrap();
        assert_eq!(h, d);
        assert_eq!(t, DenseMatrix::zeros(3, 3));
        let (h, t) = rank_truncate(&d, 0).unwrap();
        assert_eq!(h, DenseMatrix::zeros(3, 3));
        assert_eq!(t, d);
        assert!(rank_truncate(&d, 4).is_err());
    }

    #[test]
    fn truncation_is_orthogonal_split() {
        let a = gaussian_matrix(7, 7, &mut stream(8, &[]));
        let spec2 = spectral_norm(&a).unwrap().powi(2);
        for r in 0..=7 {
            let (h, t) = rank_truncate(&a, r).unwrap();
            assert!(h.inner(&t).abs() <= 1e-9 * spec2);
            let hs = svd::singular_values(&h).unwrap();
            let as_ = svd::singular_values(&a).unwrap();
            for j in 0..r {
                assert!((hs[j] - as_[j]).abs() < 1e-9 * as_[0]);
            }
            assert!(hs[r..].iter().all(|&s| s < 1e-9 * as_[0]));
        }
    }

    #[test]
    fn svt_examples() {
        let d = DenseMatrix::from_diag(&[3.0, 1.0]);
        assert_eq!(svt(&d, 2.0).unwrap(), DenseMatrix::from_diag(&[1.0, 0.0]));
        assert_eq!(svt(&d, 0.0).unwrap(), d);
        assert!(matches!(svt(&d, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn cone_examples() {
        let mut rng = stream(12, &[]);
        let g1 = gaussian_matrix(6, 2, &mut rng);
        let g2 = gaussian_matrix(2, 6, &mut rng);
        let low = g1.matmul(&g2).unwrap();
        let c = cone_membership(&low, 2, 0.1).unwrap();
        assert!(c.is_member);
        assert_eq!(c.ratio, 0.0);

        let c = cone_membership(&DenseMatrix::identity(4), 1, 1.0).unwrap();
        assert!(!c.is_member);
        assert!((c.ratio - 3.0).abs() < 1e-12);

        let c = cone_membership(&DenseMatrix::from_diag(&[2.0, 1.0, 1.0]), 1, 1.0).unwrap();
        assert!(c.is_member);
        assert!((c.ratio - 1.0).abs() < 1e-12);

        let z = cone_membership(&DenseMatrix::zeros(3, 3), 1, 1.0).unwrap();
        assert_eq!((z.is_member, z.ratio), (true, 0.0));
    }

    #[test]
    fn interpolation_examples() {
        let mut e = DenseMatrix::zeros(5, 5);
        e[(0, 0)] = 1.0;
        for (p, qq, r) in [
            (q(1.0), q(2.0), INF),
            (q(1.0), q(3.0), q(4.0)),
            (q(2.0), q(4.0), INF),
        ] {
            assert!(interpolation_slack(&e, p, qq, r).unwrap().abs() < 1e-12);
        }
        let s = interpolation_slack(&DenseMatrix::identity(4), q(1.0), q(2.0), INF).unwrap();
        assert!(s.abs() < 1e-12);
        assert!(interpolation_slack(&e, q(2.0), q(1.0), INF).is_err());
        assert!(interpolation_slack(&e, q(1.0), INF, INF).is_err());
    }

    #[test]
    fn norm_order_parsing() {
        assert_eq!("inf".parse::<NormOrder>().unwrap(), INF);
        assert_eq!("1.5".parse::<NormOrder>().unwrap(), q(1.5));
        assert!("0.5".parse::<NormOrder>().is_err());
        let json = serde_json::to_string(&q(1.5)).unwrap();
        assert_eq!(json, "\"1.5\"");
    }

    #[test]
    fn orthonormal_columns() {
        let g = gaussian_matrix(9, 4, &mut stream(1, &[]));
        let qm = orthonormalize_columns(&g).unwrap();
        let qtq = qm.transpose().matmul(&qm).unwrap();
        assert!((&qtq - &DenseMatrix::identity(4)).max_abs() < 1e-13);
        let dup = DenseMatrix::from_fn(3, 2, |i, _| i as f64 + 1.0);
        assert!(orthonormalize_columns(&dup).is_err());
    }
}

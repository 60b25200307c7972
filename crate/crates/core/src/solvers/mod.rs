//! The matrix LASSO `min_A sum_j (<A, X_j> - Y_j)^2 + lambda ||A||_1`,
//! solved by ADMM on the split `A = B`, plus Dantzig-selector certificates.

mod cg;

use serde::{Deserialize, Serialize};

use crate::error::{dimension, domain, Result};
use crate::matcore::{cone_membership, singular_values, svd, DenseMatrix};
use crate::rng::{gaussian_matrix, stream};
use crate::sensing::{NormalOperator, TraceRegressionDataset};

pub use cg::{conjugate_gradient, CgOutcome};

const INIT_TAG: u64 = 0x4144_4D4D;

/// Default `rho / n`. Larger values stall the null-space directions of an
/// underdetermined design, which move by only `lambda / rho` per iteration.
pub const DEFAULT_RHO_PER_MEASUREMENT: f64 = 0.07;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmmConfig {
    pub lambda: f64,
    pub rho: f64,
    pub max_iterations: usize,
    /// Stop once `||A - B||_2^2` falls to this value.
    pub tolerance: f64,
    pub cg_tolerance: f64,
    pub cg_max_iterations: usize,
}

impl AdmmConfig {
    /// Defaults for an `m x m` problem with `n` measurements: `rho = 0.07 n`,
    /// `tolerance = 1e-9 m^2`, 500 outer and 400 inner iterations, inner
    /// relative tolerance `1e-8`.
    pub fn for_problem(lambda: f64, m: usize, n: usize) -> Self {
        AdmmConfig {
            lambda,
            rho: DEFAULT_RHO_PER_MEASUREMENT * n.max(1) as f64,
            max_iterations: 500,
            tolerance: 1e-9 * (m * m) as f64,
            cg_tolerance: 1e-8,
            cg_max_iterations: 400,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(domain(format!(
                    "{name} must be positive and finite, got {v}"
                )))
            }
        };
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(domain(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        positive("rho", self.rho)?;
        positive("tolerance", self.tolerance)?;
        positive("cg_tolerance", self.cg_tolerance)?;
        if self.max_iterations == 0 || self.cg_max_iterations == 0 {
            return Err(domain("iteration caps must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    /// Final `B` iterate (exactly soft-thresholded spectrum).
    pub estimate: DenseMatrix,
    pub iterations_used: usize,
    pub converged: bool,
    pub primal_gap_trace: Vec<f64>,
    /// `||B^(k) - B^(k-1)||_2^2` per iteration.
    pub dual_change_trace: Vec<f64>,
    /// LASSO objective at each `B` iterate.
    pub objective_trace: Vec<f64>,
    pub dual_variable: DenseMatrix,
    pub lambda: f64,
    pub rho: f64,
    pub cg_iterations: usize,
    /// Number of A-updates whose CG solve hit its iteration cap.
    pub cg_failures: usize,
}

impl SolveResult {
    /// `{converged, iterations, lambda, rho, primal_gap_trace, dual_change_trace,
    /// objective_trace}`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "converged": self.converged,
            "iterations": self.iterations_used,
            "lambda": self.lambda,
            "rho": self.rho,
            "primal_gap_trace": self.primal_gap_trace,
            "dual_change_trace": self.dual_change_trace,
            "objective_trace": self.objective_trace,
        })
    }
}

fn check_operand(dataset: &TraceRegressionDataset, a: &DenseMatrix, what: &str) -> Result<()> {
    let m = dataset.m();
    if a.shape() != (m, m) {
        return Err(dimension(format!(
            "{what} is {}x{}, dataset expects {m}x{m}",
            a.rows(),
            a.cols()
        )));
    }
    Ok(())
}

fn residual_sum_of_squares(dataset: &TraceRegressionDataset, a: &DenseMatrix) -> f64 {
    dataset
        .ensemble
        .forward_unchecked(a)
        .iter()
        .zip(&dataset.responses)
        .map(|(f, y)| (f - y) * (f - y))
        .sum()
}

/// `sum_j (<A, X_j> - Y_j)^2 + lambda ||A||_1`.
pub fn lasso_objective(
    dataset: &TraceRegressionDataset,
    a: &DenseMatrix,
    lambda: f64,
) -> Result<f64> {
    check_operand(dataset, a, "estimate")?;
    let nuclear: f64 = singular_values(a)?.iter().sum();
    Ok(residual_sum_of_squares(dataset, a) + lambda * nuclear)
}

/// Data shared by every A-update of one solve.
struct Normal<'a> {
    op: NormalOperator<'a>,
    /// `2 X*(Y)`.
    data_term: DenseMatrix,
}

impl<'a> Normal<'a> {
    fn new(dataset: &'a TraceRegressionDataset) -> Self {
        let op = NormalOperator::new(&dataset.ensemble);
        let data_term = dataset
            .ensemble
            .adjoint_unchecked(&dataset.responses)
            .scaled(2.0);
        Normal { op, data_term }
    }

    fn solve(
        &self,
        b: &DenseMatrix,
        z: &DenseMatrix,
        rho: f64,
        cg_tolerance: f64,
        cg_max_iterations: usize,
        warm_start: DenseMatrix,
    ) -> CgOutcome {
        let mut rhs = self.data_term.clone();
        rhs.axpy(-1.0, z);
        rhs.axpy(rho, b);
        let apply = |x: &DenseMatrix| {
            let mut out = self.op.apply(x).scaled(2.0);
            out.axpy(rho, x);
            out
        };
        conjugate_gradient(apply, &rhs, warm_start, cg_tolerance, cg_max_iterations)
    }
}

/// A-update of the ADMM iteration: solves
/// `(2 X*X + rho I) A = 2 X*(Y) - Z + rho B` by conjugate gradient started at
/// `warm_start`. A capped solve is reported through `converged = false`.
pub fn a_update(
    dataset: &TraceRegressionDataset,
    b: &DenseMatrix,
    z: &DenseMatrix,
    rho: f64,
    cg_tolerance: f64,
    cg_max_iterations: usize,
    warm_start: DenseMatrix,
) -> Result<CgOutcome> {
    check_operand(dataset, b, "B")?;
    check_operand(dataset, z, "Z")?;
    check_operand(dataset, &warm_start, "warm start")?;
    if !(rho > 0.0) {
        return Err(domain(format!("rho must be positive, got {rho}")));
    }
    Ok(Normal::new(dataset).solve(b, z, rho, cg_tolerance, cg_max_iterations, warm_start))
}

/// Soft-thresholds `c` at `tau`, returning the result and its nuclear norm.
fn shrink(c: &DenseMatrix, tau: f64) -> Result<(DenseMatrix, f64)> {
    let f = svd(c)?;
    let s: Vec<f64> = f
        .singular_values
        .iter()
        .map(|v| (v - tau).max(0.0))
        .collect();
    let nuclear = s.iter().sum();
    Ok((f.compose(&s), nuclear))
}

/// ADMM for the matrix LASSO.
///
/// Starts from Gaussian `A`, `B` with entries scaled by `1/m` (stream
/// `init_seed`) and `Z = 0`, then repeats the A-update, the B-update
/// `B = svt(A + Z/rho, lambda/rho)` and the dual step `Z += rho (A - B)` until
/// both `||A - B||_2^2` and `||B - B_prev||_2^2` are at most `tolerance`, or
/// the iteration cap. Returns the last `B`.
///
/// The primal gap alone is not a stopping signal: with `Z = 0` and
/// `lambda / rho` near zero the first B-update already reproduces `A`.
pub fn admm_lasso(
    dataset: &TraceRegressionDataset,
    config: &AdmmConfig,
    init_seed: u64,
) -> Result<SolveResult> {
    config.validate()?;
    let m = dataset.m();
    let rho = config.rho;
    let mut rng = stream(init_seed, &[INIT_TAG, m as u64]);
    let mut a = gaussian_matrix(m, m, &mut rng).scaled(1.0 / m as f64);
    let mut b = gaussian_matrix(m, m, &mut rng).scaled(1.0 / m as f64);
    let mut z = DenseMatrix::zeros(m, m);
    let normal = Normal::new(dataset);

    let mut primal_gap_trace = Vec::new();
    let mut dual_change_trace = Vec::new();
    let mut objective_trace = Vec::new();
    let mut converged = false;
    let mut cg_iterations = 0;
    let mut cg_failures = 0;
    for _ in 0..config.max_iterations {
        let outcome = normal.solve(
            &b,
            &z,
            rho,
            config.cg_tolerance,
            config.cg_max_iterations,
            a,
        );
        cg_iterations += outcome.iterations;
        if !outcome.converged {
            cg_failures += 1;
        }
        a = outcome.solution;

        let mut shifted = a.clone();
        shifted.axpy(1.0 / rho, &z);
        let (next_b, nuclear) = shrink(&shifted, config.lambda / rho)?;
        let step = &next_b - &b;
        let change = step.inner(&step);
        b = next_b;

        let diff = &a - &b;
        z.axpy(rho, &diff);
        let gap = diff.inner(&diff);
        primal_gap_trace.push(gap);
        dual_change_trace.push(change);
        objective_trace.push(residual_sum_of_squares(dataset, &b) + config.lambda * nuclear);
        if gap <= config.tolerance && change <= config.tolerance {
            converged = true;
            break;
        }
    }

    Ok(SolveResult {
        estimate: b,
        iterations_used: primal_gap_trace.len(),
        converged,
        primal_gap_trace,
        dual_change_trace,
        objective_trace,
        dual_variable: z,
        lambda: config.lambda,
        rho,
        cg_iterations,
        cg_failures,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DantzigCertificate {
    /// `||X*(X(A_hat) - Y)||_inf`.
    pub residual_norm: f64,
    /// `residual_norm <= lambda`: `A_hat` is feasible for the Dantzig program.
    pub feasible: bool,
    /// `||X*X(A_hat - A0)||_inf`.
    pub gram_error_norm: f64,
    /// `gram_error_norm <= 3 lambda / 2`.
    pub gram_ok: bool,
    /// Numerical rank of `A0` used for the cone test (at least 1).
    pub rank: usize,
    pub cone_ratio: f64,
    /// `A_hat - A0` lies in the cone `C(rank, 3)`.
    pub cone_ok: bool,
}

/// Relative cutoff for the numerical rank of the ground truth.
pub const RANK_TOLERANCE: f64 = 1e-9;

/// Feasibility and cone certificates of an estimate.
pub fn dantzig_certificate(
    dataset: &TraceRegressionDataset,
    a_hat: &DenseMatrix,
    lambda: f64,
) -> Result<DantzigCertificate> {
    check_operand(dataset, a_hat, "estimate")?;
    let e = &dataset.ensemble;
    let fitted = e.forward_unchecked(a_hat);
    let resid: Vec<f64> = fitted
        .iter()
        .zip(&dataset.responses)
        .map(|(f, y)| f - y)
        .collect();
    let residual_norm = crate::sensing::operator_norm(&e.adjoint_unchecked(&resid))?;

    let error = a_hat - &dataset.a0;
    let gram_error_norm =
        crate::sensing::operator_norm(&e.adjoint_unchecked(&e.forward_unchecked(&error)))?;

    let rank = svd(&dataset.a0)?.rank(RANK_TOLERANCE).max(1);
    let cone = cone_membership(&error, rank, 3.0)?;
    Ok(DantzigCertificate {
        residual_norm,
        feasible: residual_norm <= lambda,
        gram_error_norm,
        gram_ok: gram_error_norm <= 1.5 * lambda,
        rank,
        cone_ratio: cone.ratio,
        cone_ok: cone.is_member,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaVariant {
    /// `C2 sigma sqrt(m n ln m)`.
    Theorem,
    /// `7 sigma sqrt(m n)`.
    Experiment,
}

pub fn lambda_rule(
    m: usize,
    n: usize,
    sigma_xi: f64,
    variant: LambdaVariant,
    c2: f64,
) -> Result<f64> {
    if n == 0 || m == 0 {
        return Err(domain("lambda rule needs m, n >= 1"));
    }
    if !(sigma_xi >= 0.0) {
        return Err(domain(format!("noise level must be >= 0, got {sigma_xi}")));
    }
    let (m, n) = (m as f64, n as f64);
    match variant {
        LambdaVariant::Experiment => Ok(7.0 * sigma_xi * (m * n).sqrt()),
        LambdaVariant::Theorem => {
            if m < 2.0 {
                return Err(domain("theorem rule needs m >= 2 so that ln m > 0"));
            }
            Ok(c2 * sigma_xi * (m * n * m.ln()).sqrt())
        }
    }
}

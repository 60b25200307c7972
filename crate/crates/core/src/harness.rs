//! Seeded experiment grids: ground-truth generation, per-trial solves,
//! CSV emission and per-rank plot series.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::matcore::{cone_membership, kyfan_from_singular_values, svd, DenseMatrix, NormOrder};
use crate::rng::{gaussian_matrix, mix64, stream};
use crate::sensing::{
    generate_dataset, operator_norm, read_ensemble, sample_ensemble, write_ensemble, EnsembleKind,
    EnsembleSpec, MeasurementEnsemble, NoiseKind,
};
use crate::solvers::{admm_lasso, lambda_rule, AdmmConfig, LambdaVariant, RANK_TOLERANCE};
use crate::theory::{bound_check, error_report, theory_constants, BoundCheck, SCHATTEN_GRID};

const GROUND_TRUTH_TAG: u64 = 0x4130;

/// Sub-stream words appended to a trial seed.
pub mod substreams {
    pub const GROUND_TRUTH: u64 = 1;
    pub const ENSEMBLE: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const INIT: u64 = 4;
}

/// Cone aperture used for the per-trial `cone_ok` flag.
pub const CONE_BETA: f64 = 3.01;

pub const CSV_FILE: &str = "trials.csv";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NRule {
    /// `n = 5 m r`.
    FiveMR,
    /// One sample size per entry of `m_values`.
    Explicit(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementKind {
    Gaussian,
    Rademacher,
}

impl From<MeasurementKind> for EnsembleKind {
    fn from(k: MeasurementKind) -> Self {
        match k {
            MeasurementKind::Gaussian => EnsembleKind::Gaussian,
            MeasurementKind::Rademacher => EnsembleKind::Rademacher,
        }
    }
}

/// Partial [`AdmmConfig`]; absent fields keep [`AdmmConfig::for_problem`]
/// defaults. `rho_per_measurement` sets `rho = value * n` and loses to `rho`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdmmOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_per_measurement: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cg_tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cg_max_iterations: Option<usize>,
}

impl AdmmOverrides {
    pub fn apply(&self, lambda: f64, m: usize, n: usize) -> AdmmConfig {
        let mut c = AdmmConfig::for_problem(lambda, m, n);
        if let Some(v) = self.rho_per_measurement {
            c.rho = v * n as f64;
        }
        if let Some(v) = self.rho {
            c.rho = v;
        }
        if let Some(v) = self.max_iterations {
            c.max_iterations = v;
        }
        if let Some(v) = self.tolerance {
            c.tolerance = v;
        }
        if let Some(v) = self.cg_tolerance {
            c.cg_tolerance = v;
        }
        if let Some(v) = self.cg_max_iterations {
            c.cg_max_iterations = v;
        }
        c
    }
}

fn default_alpha() -> f64 {
    2.0
}

fn default_c0() -> f64 {
    3.0
}

fn default_c2() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub m_values: Vec<usize>,
    pub r_values: Vec<usize>,
    pub n_rule: NRule,
    pub trials: usize,
    pub sigma_xi: f64,
    pub ensemble_kind: MeasurementKind,
    pub lambda_variant: LambdaVariant,
    #[serde(rename = "C2", alias = "c2", default = "default_c2")]
    pub c2: f64,
    #[serde(default)]
    pub admm: AdmmOverrides,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    /// Constants of the bound check.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_c0")]
    pub c0: f64,
    /// Writes measured wall times; otherwise the column is 0 and reruns are
    /// byte-identical.
    #[serde(default)]
    pub record_wall_time: bool,
    /// Caches sampled ensembles under `output_dir/cache`.
    #[serde(default)]
    pub cache_ensembles: bool,
}

impl ExperimentConfig {
    /// `m = 40`, `r in {3, 5, 7}`, 3 Gaussian trials, `sigma = 0.01`.
    pub fn desk(output_dir: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            m_values: vec![40],
            r_values: vec![3, 5, 7],
            n_rule: NRule::FiveMR,
            trials: 3,
            sigma_xi: 0.01,
            ensemble_kind: MeasurementKind::Gaussian,
            lambda_variant: LambdaVariant::Experiment,
            c2: default_c2(),
            admm: AdmmOverrides::default(),
            master_seed: 2016,
            output_dir: output_dir.into(),
            alpha: default_alpha(),
            c0: default_c0(),
            record_wall_time: false,
            cache_ensembles: false,
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.m_values.is_empty() || self.r_values.is_empty() {
            return bad("m_values and r_values must be nonempty".into());
        }
        if self.trials == 0 {
            return bad("trials must be >= 1".into());
        }
        if let Some(&m) = self.m_values.iter().find(|&&m| m < 2) {
            return bad(format!("every m must be >= 2, got {m}"));
        }
        let m_min = *self.m_values.iter().min().unwrap_or(&0);
        if let Some(&r) = self.r_values.iter().find(|&&r| r == 0 || r > m_min) {
            return bad(format!("every r must lie in 1..={m_min}, got {r}"));
        }
        if let NRule::Explicit(ns) = &self.n_rule {
            if ns.len() != self.m_values.len() {
                return bad(format!(
                    "explicit n_rule needs one n per m value ({} given, {} expected)",
                    ns.len(),
                    self.m_values.len()
                ));
            }
            if ns.contains(&0) {
                return bad("explicit sample sizes must be >= 1".into());
            }
        }
        if !(self.sigma_xi >= 0.0 && self.sigma_xi.is_finite()) {
            return bad(format!(
                "sigma_xi must be finite and >= 0, got {}",
                self.sigma_xi
            ));
        }
        if !(self.alpha > 1.0) || !(self.c0 > 0.0) {
            return bad(format!(
                "need alpha > 1 and c0 > 0, got {} and {}",
                self.alpha, self.c0
            ));
        }
        Ok(())
    }

    pub fn sample_size(&self, m_index: usize, r: usize) -> usize {
        let m = self.m_values[m_index];
        match &self.n_rule {
            NRule::FiveMR => 5 * m * r,
            NRule::Explicit(ns) => ns[m_index],
        }
    }

    /// `(m_index, m, r)` cells in row order.
    fn cells(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for (i, &m) in self.m_values.iter().enumerate() {
            for &r in &self.r_values {
                if r <= m {
                    out.push((i, m, r));
                }
            }
        }
        out
    }

    /// Largest Ky-Fan index reported in the CSV.
    fn kyfan_columns(&self) -> usize {
        let m_min = *self.m_values.iter().min().unwrap_or(&1);
        let r_max = *self.r_values.iter().max().unwrap_or(&1);
        m_min.min(2 * r_max + 2)
    }
}

/// `mix64(master_seed, [m, r, trial])`.
pub fn trial_seed(master_seed: u64, m: usize, r: usize, trial: usize) -> u64 {
    mix64(master_seed, &[m as u64, r as u64, trial as u64])
}

/// `G1 G2` with independent standard Gaussian `m x r` and `r x m` factors.
pub fn ground_truth(m: usize, r: usize, seed: u64) -> Result<DenseMatrix> {
    if r == 0 || r > m {
        return Err(domain(format!("rank {r} outside 1..={m}")));
    }
    let mut rng = stream(seed, &[GROUND_TRUTH_TAG, m as u64, r as u64]);
    let g1 = gaussian_matrix(m, r, &mut rng);
    let g2 = gaussian_matrix(r, m, &mut rng);
    low_rank_product(&g1, &g2)
}

/// `G1 G2`, failing unless the product has numerical rank exactly
/// `G1.cols()`.
pub fn low_rank_product(g1: &DenseMatrix, g2: &DenseMatrix) -> Result<DenseMatrix> {
    let r = g1.cols();
    let a0 = g1.matmul(g2)?;
    let s = svd(&a0)?.singular_values;
    let top = s[0];
    let head_ok = top > 0.0 && s[r - 1] > RANK_TOLERANCE * top;
    let tail_ok = s.get(r).is_none_or(|&v| v < RANK_TOLERANCE * top);
    if !(head_ok && tail_ok) {
        return Err(domain(format!(
            "factor product does not have numerical rank {r}"
        )));
    }
    Ok(a0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub m: usize,
    pub r: usize,
    pub n: usize,
    pub trial_index: usize,
    pub seed: u64,
    pub lambda: f64,
    pub rho: f64,
    pub iterations: usize,
    pub converged: bool,
    pub spectral_error: f64,
    pub frobenius_error: f64,
    pub nuclear_error: f64,
    /// `spectral_error / (sigma sqrt(m/n))`; NaN when `sigma = 0`.
    pub ratio_spectral: f64,
    /// `(k, ||A_hat - A0||_(k))` for `k = 1..=K`.
    pub kyfan_errors: Vec<(usize, f64)>,
    pub schatten_errors: Vec<(NormOrder, f64)>,
    /// `||W||_inf` of the noise matrix `W = sum_j xi_j X_j`.
    pub noise_norm: f64,
    pub lambda_ge_2w: bool,
    pub cone_ratio: f64,
    pub cone_ok: bool,
    pub bounds: BoundCheck,
    pub wall_time_ms: u64,
}

fn csv_header(kyfan_k: usize) -> String {
    let mut h = String::from(
        "m,r,n,trial,seed,lambda,rho,iterations,converged,spectral_error,frobenius_error,\
         nuclear_error,ratio_spectral,lambda_ge_2W,cone_ok,wall_time_ms",
    );
    for k in 1..=kyfan_k {
        h.push_str(&format!(",kyfan_k{k}"));
    }
    for q in SCHATTEN_GRID {
        h.push_str(&format!(",schatten_q{q}"));
    }
    h
}

fn csv_row(t: &TrialRecord) -> String {
    let mut row = format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        t.m,
        t.r,
        t.n,
        t.trial_index,
        t.seed,
        t.lambda,
        t.rho,
        t.iterations,
        t.converged,
        t.spectral_error,
        t.frobenius_error,
        t.nuclear_error,
        t.ratio_spectral,
        t.lambda_ge_2w,
        t.cone_ok,
        t.wall_time_ms
    );
    for (_, v) in &t.kyfan_errors {
        row.push_str(&format!(",{v}"));
    }
    for (_, v) in &t.schatten_errors {
        row.push_str(&format!(",{v}"));
    }
    row
}

struct Cell {
    m_index: usize,
    m: usize,
    r: usize,
    trial: usize,
}

fn obtain_ensemble(config: &ExperimentConfig, spec: EnsembleSpec) -> Result<MeasurementEnsemble> {
    if !config.cache_ensembles {
        return sample_ensemble(spec);
    }
    let dir = config.output_dir.join("cache");
    fs::create_dir_all(&dir)?;
    let path = dir.join(format!(
        "ensemble_k{}_m{}_n{}_{:016x}.bin",
        spec.kind.code(),
        spec.m,
        spec.n,
        spec.seed
    ));
    if path.exists() {
        let cached = read_ensemble(&path)?;
        if *cached.spec() == spec {
            return Ok(cached);
        }
    }
    let e = sample_ensemble(spec)?;
    write_ensemble(&path, &e)?;
    Ok(e)
}

fn run_trial(config: &ExperimentConfig, cell: &Cell, kyfan_k: usize) -> Result<TrialRecord> {
    let started = Instant::now();
    let Cell {
        m_index,
        m,
        r,
        trial,
    } = *cell;
    let n = config.sample_size(m_index, r);
    let seed = trial_seed(config.master_seed, m, r, trial);
    let a0 = ground_truth(m, r, mix64(seed, &[substreams::GROUND_TRUTH]))?;
    let ensemble = obtain_ensemble(
        config,
        EnsembleSpec {
            kind: config.ensemble_kind.into(),
            m,
            n,
            seed: mix64(seed, &[substreams::ENSEMBLE]),
        },
    )?;
    let dataset = generate_dataset(
        a0,
        ensemble,
        config.sigma_xi,
        NoiseKind::Gaussian,
        mix64(seed, &[substreams::NOISE]),
    )?;
    let lambda = lambda_rule(m, n, config.sigma_xi, config.lambda_variant, config.c2)?;
    let admm = config.admm.apply(lambda, m, n);
    let solved = admm_lasso(&dataset, &admm, mix64(seed, &[substreams::INIT]))?;

    let report = error_report(&solved.estimate, &dataset.a0, n, config.sigma_xi)?;
    let constants = theory_constants(config.alpha, config.c0)?;
    let bounds = bound_check(&report, &constants, lambda, n, r)?;
    let error = &solved.estimate - &dataset.a0;
    let cone = cone_membership(&error, r, CONE_BETA)?;
    let noise_norm = operator_norm(&dataset.noise_matrix())?;
    let kyfan_errors = (1..=kyfan_k)
        .map(|k| kyfan_from_singular_values(&report.singular_values, k).map(|v| (k, v)))
        .collect::<Result<Vec<_>>>()?;
    let wall_time_ms = if config.record_wall_time {
        started.elapsed().as_millis() as u64
    } else {
        0
    };
    Ok(TrialRecord {
        m,
        r,
        n,
        trial_index: trial,
        seed,
        lambda,
        rho: solved.rho,
        iterations: solved.iterations_used,
        converged: solved.converged,
        spectral_error: report.spectral,
        frobenius_error: report.frobenius,
        nuclear_error: report.nuclear,
        ratio_spectral: report.ratio_spectral.unwrap_or(f64::NAN),
        kyfan_errors,
        schatten_errors: report.schatten.clone(),
        noise_norm,
        lambda_ge_2w: lambda >= 2.0 * noise_norm,
        cone_ratio: cone.ratio,
        cone_ok: cone.is_member,
        bounds,
        wall_time_ms,
    })
}

/// Runs every `(m, r, trial)` cell and streams rows to
/// `output_dir/trials.csv` in `(m, r, trial)` order. Trials of one `(m, r)`
/// group run in parallel; each cell draws only from its own seeds.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<TrialRecord>> {
    config.validate()?;
    fs::create_dir_all(&config.output_dir)?;
    let kyfan_k = config.kyfan_columns();
    let mut out = BufWriter::new(File::create(config.output_dir.join(CSV_FILE))?);
    writeln!(out, "{}", csv_header(kyfan_k))?;
    out.flush()?;

    let mut records = Vec::new();
    for (m_index, m, r) in config.cells() {
        let group: Vec<TrialRecord> = (0..config.trials)
            .into_par_iter()
            .map(|trial| {
                run_trial(
                    config,
                    &Cell {
                        m_index,
                        m,
                        r,
                        trial,
                    },
                    kyfan_k,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        for record in group {
            writeln!(out, "{}", csv_row(&record))?;
            records.push(record);
        }
        out.flush()?;
    }
    Ok(records)
}

type Column = fn(&TrialRecord) -> f64;

/// Mean and sample standard deviation (0 for a single value).
fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Writes `fig1_accuracy_m{M}.dat` (`r`, mean and std of the spectral
/// error) and `fig1_ratio_m{M}.dat` (`r`, mean and std of the ratio) for
/// every `m`. Returns the written paths.
pub fn emit_plot_data(records: &[TrialRecord], output_dir: &Path) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return Err(domain("no trial records to aggregate"));
    }
    let mut grouped: BTreeMap<usize, BTreeMap<usize, Vec<&TrialRecord>>> = BTreeMap::new();
    for t in records {
        grouped
            .entry(t.m)
            .or_default()
            .entry(t.r)
            .or_default()
            .push(t);
    }
    fs::create_dir_all(output_dir)?;
    let mut written = Vec::new();
    for (m, by_rank) in grouped {
        let series: [(&str, Column); 2] = [
            ("accuracy", |t| t.spectral_error),
            ("ratio", |t| t.ratio_spectral),
        ];
        for (name, field) in series {
            let path = output_dir.join(format!("fig1_{name}_m{m}.dat"));
            let mut f = BufWriter::new(File::create(&path)?);
            for (r, group) in &by_rank {
                let values: Vec<f64> = group.iter().map(|t| field(t)).collect();
                let (mean, std) = mean_std(&values);
                writeln!(f, "{r} {mean:e} {std:e}")?;
            }
            f.flush()?;
            written.push(path);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::orthonormalize_columns;

    #[test]
    fn ground_truth_rank_and_determinism() {
        let a = ground_truth(40, 5, 11).unwrap();
        assert_eq!(svd(&a).unwrap().rank(1e-9), 5);
        assert_eq!(a, ground_truth(40, 5, 11).unwrap());
        assert_ne!(a, ground_truth(40, 5, 12).unwrap());
        assert!(ground_truth(4, 0, 1).is_err());
        assert!(ground_truth(4, 5, 1).is_err());
    }

    #[test]
    fn orthogonal_factors_give_full_rank() {
        let mut rng = stream(3, &[]);
        let q1 = orthonormalize_columns(&gaussian_matrix(6, 6, &mut rng)).unwrap();
        let q2 = orthonormalize_columns(&gaussian_matrix(6, 6, &mut rng)).unwrap();
        let a = low_rank_product(&q1, &q2.transpose()).unwrap();
        assert_eq!(svd(&a).unwrap().rank(1e-9), 6);
    }

    #[test]
    fn config_rejects_unknown_keys_and_bad_ranges() {
        let good = serde_json::to_string(&ExperimentConfig::desk("out")).unwrap();
        assert!(ExperimentConfig::from_json_str(&good).is_ok());
        let mut v: serde_json::Value = serde_json::from_str(&good).unwrap();
        v["surprise"] = serde_json::json!(1);
        assert!(ExperimentConfig::from_json_str(&v.to_string()).is_err());

        let mut c = ExperimentConfig::desk("out");
        c.r_values = vec![3, 41];
        assert!(c.validate().is_err());
        c = ExperimentConfig::desk("out");
        c.trials = 0;
        assert!(c.validate().is_err());
        c = ExperimentConfig::desk("out");
        c.m_values = vec![1];
        c.r_values = vec![1];
        assert!(c.validate().is_err());
        c = ExperimentConfig::desk("out");
        c.n_rule = NRule::Explicit(vec![100, 200]);
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_json_shapes() {
        let text = r#"{
            "m_values": [6], "r_values": [1, 2], "n_rule": {"explicit": [50]},
            "trials": 2, "sigma_xi": 0.1, "ensemble_kind": "rademacher",
            "lambda_variant": "theorem", "C2": 2.5,
            "admm": {"rho_per_measurement": 0.5, "max_iterations": 30},
            "master_seed": 9, "output_dir": "x"
        }"#;
        let c = ExperimentConfig::from_json_str(text).unwrap();
        assert_eq!(c.n_rule, NRule::Explicit(vec![50]));
        assert_eq!(c.c2, 2.5);
        assert_eq!(c.sample_size(0, 2), 50);
        let admm = c.admm.apply(1.0, 6, 50);
        assert_eq!((admm.rho, admm.max_iterations), (25.0, 30));
        assert!(!c.record_wall_time);
    }

    #[test]
    fn trial_seeds_are_distinct_per_cell() {
        let a = trial_seed(1, 40, 3, 0);
        assert_ne!(a, trial_seed(1, 40, 3, 1));
        assert_ne!(a, trial_seed(1, 40, 5, 0));
        assert_ne!(a, trial_seed(2, 40, 3, 0));
        assert_eq!(a, trial_seed(1, 40, 3, 0));
    }

    #[test]
    fn header_columns() {
        let h = csv_header(3);
        assert!(h.starts_with("m,r,n,trial,seed,lambda,rho,iterations,converged,"));
        assert!(h.ends_with(
            "kyfan_k1,kyfan_k2,kyfan_k3,schatten_q1,schatten_q1.5,schatten_q2,schatten_q3,schatten_q4,schatten_qinf"
        ));
    }

    #[test]
    fn mean_std_examples() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn empty_records_write_nothing() {
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_plot_data(&[], dir.path()).is_err());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }
}

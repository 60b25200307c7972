use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use lrsense_core::harness::{emit_plot_data, run_experiment, ExperimentConfig, CSV_FILE};
use lrsense_core::matcore::NormOrder;
use lrsense_core::minimax::{build_minimax_instance, greedy_packing};
use lrsense_core::sensing::{
    generate_dataset, noise_norm_probe, read_dataset, rip_probe, sample_ensemble, write_dataset,
    EnsembleKind, EnsembleSpec, NoiseKind,
};
use lrsense_core::solvers::{admm_lasso, AdmmConfig};
use lrsense_core::theory::error_report;
use lrsense_core::Error;

#[derive(Parser)]
#[command(
    name = "lrsense",
    version,
    about = "Low-rank matrix sensing laboratory"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Gaussian,
    Rademacher,
}

impl From<Kind> for EnsembleKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Gaussian => EnsembleKind::Gaussian,
            Kind::Rademacher => EnsembleKind::Rademacher,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment grid from a JSON config; writes trials.csv and plot data.
    Experiment {
        #[arg(long)]
        config: PathBuf,
    },
    /// Empirical RIP constant of a sampled ensemble.
    RipProbe {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        r: usize,
        #[arg(long)]
        samples: usize,
        #[arg(long, default_value_t = 50)]
        ascent_steps: usize,
        #[arg(long)]
        seed: u64,
    },
    /// Spectral norm of the averaged noise matrix over repeated draws.
    NoiseProbe {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        sigma: f64,
        #[arg(long)]
        trials: usize,
        #[arg(long)]
        seed: u64,
    },
    /// Greedy packing of rank-k projections.
    Packing {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value = "2")]
        q: NormOrder,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        max_card: usize,
        #[arg(long, default_value_t = 10_000)]
        max_attempts: usize,
        #[arg(long)]
        seed: u64,
    },
    /// Scaled-projection family and its KL condition.
    Minimax {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        r: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        sigma: f64,
        #[arg(long)]
        cprime: f64,
        #[arg(long, default_value = "2")]
        q: NormOrder,
        #[arg(long)]
        seed: u64,
    },
    /// Sample a rank-r trace-regression dataset into a binary container.
    Simulate {
        #[arg(long, value_enum, default_value = "gaussian")]
        kind: Kind,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        r: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        sigma: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the matrix LASSO on a cached dataset container.
    Solve {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long)]
        max_iterations: Option<usize>,
        #[arg(long)]
        tolerance: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

fn print(value: serde_json::Value) {
    println!(
        "{}",
        serde_json::to_string_pretty(&value).unwrap_or_default()
    );
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

fn run(command: Command) -> std::result::Result<(), Failure> {
    match command {
        Command::Experiment { config } => {
            let config =
                ExperimentConfig::load(&config).map_err(|e| Failure::Usage(e.to_string()))?;
            let records = run_experiment(&config)?;
            let plots = emit_plot_data(&records, &config.output_dir)?;
            let converged = records.iter().filter(|t| t.converged).count();
            print(json!({
                "rows": records.len(),
                "converged": converged,
                "csv": config.output_dir.join(CSV_FILE),
                "plot_files": plots,
            }));
        }
        Command::RipProbe {
            kind,
            m,
            n,
            r,
            samples,
            ascent_steps,
            seed,
        } => {
            let e = sample_ensemble(EnsembleSpec {
                kind: kind.into(),
                m,
                n,
                seed,
            })?;
            let est = rip_probe(&e, r, samples, ascent_steps, seed)?;
            print(json!({
                "r": est.r,
                "delta_hat": est.delta_hat,
                "per_rank": est.per_rank,
                "samples": est.n_samples,
                "ascent_steps": est.ascent_steps,
                "seed": est.seed,
            }));
        }
        Command::NoiseProbe {
            kind,
            m,
            n,
            sigma,
            trials,
            seed,
        } => {
            let e = sample_ensemble(EnsembleSpec {
                kind: kind.into(),
                m,
                n,
                seed,
            })?;
            let norms = noise_norm_probe(&e, sigma, trials, seed)?;
            let med = median(&norms);
            let scale = sigma * (m as f64 / n as f64).sqrt();
            print(json!({
                "norms": norms,
                "median": med,
                "median_over_scale": if scale > 0.0 { json!(med / scale) } else { json!(null) },
            }));
        }
        Command::Packing {
            m,
            k,
            q,
            epsilon,
            max_card,
            max_attempts,
            seed,
        } => {
            let p = greedy_packing(m, k, q, epsilon, max_card, max_attempts, seed)?;
            print(json!({
                "m": m,
                "k": k,
                "q": q.to_string(),
                "epsilon": epsilon,
                "separation": p.separation(),
                "cardinality": p.cardinality(),
                "attempts": p.attempts,
                "min_pairwise_distance": if p.min_pairwise_distance.is_finite() {
                    json!(p.min_pairwise_distance)
                } else {
                    json!(null)
                },
            }));
        }
        Command::Minimax {
            m,
            r,
            n,
            sigma,
            cprime,
            q,
            seed,
        } => {
            let inst = build_minimax_instance(m, r, n, sigma, cprime, q, seed)?;
            let mut value = serde_json::to_value(inst.sidecar()).map_err(Error::from)?;
            value["kl_condition_met"] = json!(inst.kl_condition_met());
            print(value);
        }
        Command::Simulate {
            kind,
            m,
            r,
            n,
            sigma,
            seed,
            out,
        } => {
            let a0 = lrsense_core::harness::ground_truth(m, r, seed)?;
            let e = sample_ensemble(EnsembleSpec {
                kind: kind.into(),
                m,
                n,
                seed,
            })?;
            let d = generate_dataset(a0, e, sigma, NoiseKind::Gaussian, seed)?;
            write_dataset(&out, &d)?;
            print(json!({ "dataset": out, "m": m, "r": r, "n": n, "sigma_xi": sigma }));
        }
        Command::Solve {
            dataset,
            lambda,
            rho,
            max_iterations,
            tolerance,
            seed,
        } => {
            let d = read_dataset(&dataset)?;
            let mut config = AdmmConfig::for_problem(lambda, d.m(), d.n());
            if let Some(v) = rho {
                config.rho = v;
            }
            if let Some(v) = max_iterations {
                config.max_iterations = v;
            }
            if let Some(v) = tolerance {
                config.tolerance = v;
            }
            config
                .validate()
                .map_err(|e| Failure::Usage(e.to_string()))?;
            let solved = admm_lasso(&d, &config, seed)?;
            let report = error_report(&solved.estimate, &d.a0, d.n(), d.sigma_xi)?;
            print(json!({
                "converged": solved.converged,
                "iterations": solved.iterations_used,
                "lambda": solved.lambda,
                "rho": solved.rho,
                "final_primal_gap": solved.primal_gap_trace.last(),
                "final_objective": solved.objective_trace.last(),
                "spectral_error": report.spectral,
                "frobenius_error": report.frobenius,
                "nuclear_error": report.nuclear,
            }));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use betanmf_core::verify::DEFAULT_BETAS;
use betanmf_core::{
    fit, load_matrix, low_rank_data, run_all, run_bench, save_factors, save_trace, Algorithm, BenchConfig, DataMatrix,
    FormatKind, MatrixFormat, SolverConfig, SyntheticSpec, Termination, VerifyOptions,
};

/// Beta-divergence NMF with classic and joint majorization-minimization updates.
#[derive(Parser)]
#[command(name = "betanmf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one factorization and write W.csv, H.csv and trace.csv.
    Fit {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare algorithms over several seeds with identical initializations.
    Bench {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, default_value_t = 25, value_parser = clap::value_parser!(u64).range(1..))]
        seeds: u64,
        /// Comma-separated algorithms to run.
        #[arg(long, default_value = "bmm,jmm", value_delimiter = ',')]
        algos: Vec<Algorithm>,
        /// Write the full report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Worker threads; 1 keeps timing sequential.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Run the randomized property suites and print a pass/fail table.
    Verify {
        /// Comma-separated betas.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        beta_grid: Option<Vec<f64>>,
        #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

#[derive(Args)]
struct InputArgs {
    /// Data matrix file.
    #[arg(long, required_unless_present = "synthetic", conflicts_with = "synthetic")]
    input: Option<PathBuf>,
    /// csv or mtx.
    #[arg(long, default_value = "csv")]
    format: FormatKind,
    /// Generate data instead: F,N,K,noise.
    #[arg(long, value_parser = SyntheticSpec::parse)]
    synthetic: Option<SyntheticSpec>,
    /// Seed for the synthetic generator.
    #[arg(long, default_value_t = 0)]
    data_seed: u64,
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long, allow_hyphen_values = true)]
    beta: f64,
    #[arg(long)]
    rank: usize,
    #[arg(long, default_value = "jmm")]
    algo: Algorithm,
    #[arg(long, default_value_t = 1)]
    sub_iters: usize,
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    /// Shift added to the data. Required for beta < 1 when the data has zeros.
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5000)]
    max_iters: usize,
    #[arg(long)]
    heuristic_gamma_one: bool,
}

impl InputArgs {
    fn load(&self) -> Result<DataMatrix> {
        match (&self.input, self.synthetic) {
            (Some(path), _) => {
                load_matrix(path, MatrixFormat::new(self.format)).with_context(|| format!("loading {}", path.display()))
            }
            (None, Some(spec)) => Ok(low_rank_data(spec, self.data_seed).0),
            (None, None) => bail!("either --input or --synthetic is required"),
        }
    }
}

impl SolverArgs {
    fn config(&self, data: &DataMatrix) -> Result<SolverConfig> {
        if self.beta < 1.0 && self.kappa.is_none() && data.has_zeros() {
            bail!(
                "the data contains zeros and beta = {} < 1 makes the divergence undefined there; \
                 pass --kappa <shift> (for example --kappa 1e-9)",
                self.beta
            );
        }
        let mut config = SolverConfig::new(self.beta, self.rank, self.algo).with_sub_iters(self.sub_iters);
        config.tol = self.tol;
        config.kappa = self.kappa;
        config.seed = self.seed;
        config.max_outer_iters = self.max_iters;
        config.heuristic_gamma_one = self.heuristic_gamma_one;
        config.validate()?;
        Ok(config)
    }
}

fn cmd_fit(input: &InputArgs, solver: &SolverArgs, out: &PathBuf) -> Result<ExitCode> {
    let data = input.load()?;
    let config = solver.config(&data)?;
    let result = fit(&data, &config)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    save_factors(&result, out)?;
    save_trace(&result, out.join("trace.csv"))?;
    let (f, n) = data.shape();
    println!("algorithm      {}", config.algorithm);
    println!("termination    {:?} after {} iterations", result.termination, result.iterations);
    println!(
        "objective      {:.10e} ({:.10e} per entry)",
        result.final_objective,
        result.final_objective / (f * n) as f64
    );
    println!("kkt residuals  w {:.3e}  h {:.3e}", result.final_kkt.res_w, result.final_kkt.res_h);
    println!("solver time    {:.3} s", result.seconds);
    Ok(match result.termination {
        Termination::Converged => ExitCode::SUCCESS,
        Termination::MaxIters => ExitCode::from(2),
    })
}

fn cmd_bench(
    input: &InputArgs,
    solver: &SolverArgs,
    seeds: u64,
    algos: &[Algorithm],
    report_path: Option<&PathBuf>,
    jobs: usize,
) -> Result<ExitCode> {
    let data = input.load()?;
    let config =
        BenchConfig { base: solver.config(&data)?, seeds: (0..seeds).collect(), algorithms: algos.to_vec(), jobs };
    let report = run_bench(&data, &config)?;
    println!(
        "beta {}  rank {}  data {}x{}  kappa {:e}",
        report.beta, report.rank, report.rows, report.cols, report.kappa
    );
    println!(
        "{:<5} {:>12} {:>12} {:>25} {:>14} {:>10} {:>10}",
        "algo", "mean s", "std s", "95% CI", "objective/FN", "kkt w", "kkt h"
    );
    for a in &report.algorithms {
        println!(
            "{:<5} {:>12.4e} {:>12.4e} [{:>11.4e}, {:>11.4e}] {:>14.6e} {:>10.2e} {:>10.2e}",
            a.algorithm.to_string(),
            a.time.mean,
            a.time.std,
            a.time.ci_low,
            a.time.ci_high,
            a.mean_normalized_objective,
            a.mean_kkt.res_w,
            a.mean_kkt.res_h
        );
    }
    if let Some(accel) = report.acceleration_percent {
        println!("acceleration {accel:+.1}%");
    }
    if !report.agreement.is_empty() {
        let worst = report.agreement.iter().map(|a| a.mismatch).fold(0.0, f64::max);
        println!("largest column mismatch across seeds {worst:.3e}");
    }
    if let Some(path) = report_path {
        report.write_json(path).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(beta_grid: Option<Vec<f64>>, trials: u64, seed: u64, inject_fault: bool) -> Result<ExitCode> {
    let options = VerifyOptions {
        betas: beta_grid.unwrap_or_else(|| DEFAULT_BETAS.to_vec()),
        trials: trials as usize,
        seed,
        inject_fault,
        ..VerifyOptions::default()
    };
    let report = run_all(&options)?;
    println!("{:<22} {:>6} {:>7} {:>9} {:>10}", "suite", "beta", "trials", "failures", "worst");
    for o in &report.outcomes {
        let status = if o.failures == 0 { "ok" } else { "FAIL" };
        println!("{:<22} {:>6} {:>7} {:>9} {:>10.3e} {status}", o.suite.name(), o.beta, o.trials, o.failures, o.worst);
    }
    match report.first_failure() {
        None => Ok(ExitCode::SUCCESS),
        Some(cx) => {
            eprintln!("first failure in {} (trial {}): {}", cx.suite.name(), cx.trial, cx.detail);
            println!("{}", serde_json::to_string(cx)?);
            Ok(ExitCode::FAILURE)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Fit { input, solver, out } => cmd_fit(input, solver, out),
        Command::Bench { input, solver, seeds, algos, report, jobs } => {
            cmd_bench(input, solver, *seeds, algos, report.as_ref(), *jobs)
        }
        Command::Verify { beta_grid, trials, seed, inject_fault } => {
            cmd_verify(beta_grid.clone(), *trials, *seed, *inject_fault)
        }
    };
    outcome.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::FAILURE
    })
}

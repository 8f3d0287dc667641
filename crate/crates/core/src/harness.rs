//! Multi-seed BMM-vs-JMM comparison with timing statistics.
//!
//! Every seed feeds the same `init_factors` output to each algorithm, so
//! differences in time and solution come from the updates alone.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::diagnostics::{match_columns, KktResiduals};
use crate::error::{NmfError, Result};
use crate::solver::{fit_from, init_factors, FitResult, SolverConfig, Termination};
use crate::updates::Algorithm;

/// Sample statistics with a normal-approximation 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (`n - 1` denominator), 0 for one sample.
    pub std: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(NmfError::Empty("no samples to summarize"));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std =
        if n > 1 { (values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() } else { 0.0 };
    let half = 1.96 * std / (n as f64).sqrt();
    Ok(Summary { n, mean, std, ci_low: mean - half, ci_high: mean + half })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    /// Shared solver settings; `algorithm` and `seed` are overridden per run.
    pub base: SolverConfig,
    pub seeds: Vec<u64>,
    pub algorithms: Vec<Algorithm>,
    /// Worker threads. 1 runs everything sequentially on the caller's thread.
    pub jobs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRow {
    pub seed: u64,
    pub seconds: f64,
    pub seconds_per_iteration: f64,
    pub iterations: usize,
    pub final_objective: f64,
    /// `final_objective / (F N)`.
    pub normalized_objective: f64,
    pub kkt: KktResiduals,
    pub termination: Termination,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmReport {
    pub algorithm: Algorithm,
    pub time: Summary,
    pub time_per_iteration: Summary,
    pub mean_objective: f64,
    pub mean_normalized_objective: f64,
    pub mean_kkt: KktResiduals,
    pub rows: Vec<SeedRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedAgreement {
    pub seed: u64,
    /// Largest relative column difference of `W` after optimal matching.
    pub mismatch: f64,
    /// `|obj_bmm - obj_jmm| / obj_bmm`.
    pub objective_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub beta: f64,
    pub rank: usize,
    pub rows: usize,
    pub cols: usize,
    pub kappa: f64,
    pub algorithms: Vec<AlgorithmReport>,
    /// `100 (mean_bmm - mean_jmm) / mean_bmm` on total time, when both ran.
    pub acceleration_percent: Option<f64>,
    pub agreement: Vec<SeedAgreement>,
}

impl BenchReport {
    pub fn algorithm(&self, algorithm: Algorithm) -> Option<&AlgorithmReport> {
        self.algorithms.iter().find(|a| a.algorithm == algorithm)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }
}

impl BenchConfig {
    fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.seeds.is_empty() {
            return Err(NmfError::Config("at least one seed is required".into()));
        }
        if self.algorithms.is_empty() {
            return Err(NmfError::Config("at least one algorithm is required".into()));
        }
        let mut seen = self.algorithms.clone();
        seen.sort_by_key(|a| a.name());
        seen.dedup();
        if seen.len() != self.algorithms.len() {
            return Err(NmfError::Config("algorithms must be distinct".into()));
        }
        if self.jobs == 0 {
            return Err(NmfError::Config("jobs must be positive".into()));
        }
        Ok(())
    }
}

struct RunOutput {
    result: FitResult,
    w: Array2<f64>,
}

fn run_one(data: &DataMatrix, config: &BenchConfig, algorithm: Algorithm, seed: u64) -> Result<RunOutput> {
    let (f, n) = data.shape();
    let init = init_factors(f, n, config.base.rank, seed)?;
    let run_config = SolverConfig { algorithm, seed, ..config.base.clone() };
    let result = fit_from(data, &run_config, init)?;
    let w = result.factors.w().clone();
    Ok(RunOutput { result, w })
}

/// Runs every (seed, algorithm) pair and assembles the report.
pub fn run_bench(data: &DataMatrix, config: &BenchConfig) -> Result<BenchReport> {
    config.validate()?;
    let tasks: Vec<(usize, usize)> =
        (0..config.seeds.len()).flat_map(|s| (0..config.algorithms.len()).map(move |a| (s, a))).collect();
    let outputs: Vec<Mutex<Option<Result<RunOutput>>>> = tasks.iter().map(|_| Mutex::new(None)).collect();
    let execute = |t: usize| {
        let (s, a) = tasks[t];
        let out = run_one(data, config, config.algorithms[a], config.seeds[s]);
        *outputs[t].lock().expect("no panics while holding the slot") = Some(out);
    };
    if config.jobs == 1 {
        (0..tasks.len()).for_each(execute);
    } else {
        let next = AtomicUsize::new(0);
        std::thread::scope(|scope| {
            for _ in 0..config.jobs.min(tasks.len()) {
                scope.spawn(|| loop {
                    let t = next.fetch_add(1, Ordering::Relaxed);
                    if t >= tasks.len() {
                        break;
                    }
                    execute(t);
                });
            }
        });
    }
    let outputs: Vec<RunOutput> = outputs
        .into_iter()
        .map(|slot| slot.into_inner().expect("worker finished").expect("every task ran"))
        .collect::<Result<_>>()?;

    let (f, n) = data.shape();
    let fn_size = (f * n) as f64;
    let n_algos = config.algorithms.len();
    let mut reports = Vec::with_capacity(n_algos);
    for (a, &algorithm) in config.algorithms.iter().enumerate() {
        let rows: Vec<SeedRow> = config
            .seeds
            .iter()
            .enumerate()
            .map(|(s, &seed)| {
                let r = &outputs[s * n_algos + a].result;
                SeedRow {
                    seed,
                    seconds: r.seconds,
                    seconds_per_iteration: r.seconds / r.iterations as f64,
                    iterations: r.iterations,
                    final_objective: r.final_objective,
                    normalized_objective: r.final_objective / fn_size,
                    kkt: r.final_kkt,
                    termination: r.termination,
                }
            })
            .collect();
        let collect = |get: fn(&SeedRow) -> f64| rows.iter().map(get).collect::<Vec<_>>();
        let mean = |get: fn(&SeedRow) -> f64| collect(get).iter().sum::<f64>() / rows.len() as f64;
        reports.push(AlgorithmReport {
            algorithm,
            time: summarize(&collect(|r| r.seconds))?,
            time_per_iteration: summarize(&collect(|r| r.seconds_per_iteration))?,
            mean_objective: mean(|r| r.final_objective),
            mean_normalized_objective: mean(|r| r.normalized_objective),
            mean_kkt: KktResiduals { res_w: mean(|r| r.kkt.res_w), res_h: mean(|r| r.kkt.res_h) },
            rows,
        });
    }

    let bmm = config.algorithms.iter().position(|&a| a == Algorithm::Bmm);
    let jmm = config.algorithms.iter().position(|&a| a == Algorithm::Jmm);
    let (acceleration_percent, agreement) = match (bmm, jmm) {
        (Some(b), Some(j)) => {
            let acceleration = 100.0 * (reports[b].time.mean - reports[j].time.mean) / reports[b].time.mean;
            let mut agreement = Vec::with_capacity(config.seeds.len());
            for (s, &seed) in config.seeds.iter().enumerate() {
                let (ob, oj) = (&outputs[s * n_algos + b], &outputs[s * n_algos + j]);
                let m = match_columns(&ob.w, &oj.w)?;
                let (fb, fj) = (ob.result.final_objective, oj.result.final_objective);
                agreement.push(SeedAgreement { seed, mismatch: m.mismatch, objective_gap: (fb - fj).abs() / fb });
            }
            (Some(acceleration), agreement)
        }
        _ => (None, Vec::new()),
    };
    let kappa = outputs.first().map(|o| o.result.kappa).unwrap_or(0.0);

    Ok(BenchReport {
        beta: config.base.beta,
        rank: config.base.rank,
        rows: f,
        cols: n,
        kappa,
        algorithms: reports,
        acceleration_percent,
        agreement,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{low_rank_data, SyntheticSpec};
    use approx::assert_relative_eq;

    #[test]
    fn summarize_examples() {
        let s = summarize(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((s.n, s.mean, s.std), (3, 2.0, 1.0));
        assert_relative_eq!(s.ci_low, 2.0 - 1.96 / 3f64.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(s.ci_high, 2.0 + 1.96 / 3f64.sqrt(), max_relative = 1e-15);
        assert!((s.ci_low - 0.868).abs() < 1e-3 && (s.ci_high - 3.132).abs() < 1e-3);

        let s = summarize(&[5.0]).unwrap();
        assert_eq!((s.mean, s.std, s.ci_low, s.ci_high), (5.0, 0.0, 5.0, 5.0));
        let s = summarize(&[2.0; 4]).unwrap();
        assert_eq!((s.mean, s.std, s.ci_low, s.ci_high), (2.0, 0.0, 2.0, 2.0));
        assert!(summarize(&[]).is_err());
    }

    fn small_bench(jobs: usize) -> (DataMatrix, BenchConfig) {
        let (data, _) = low_rank_data(SyntheticSpec { rows: 15, cols: 12, rank: 2, noise: 0.01 }, 1);
        let mut base = SolverConfig::new(1.0, 2, Algorithm::Jmm);
        base.max_outer_iters = 400;
        let config = BenchConfig { base, seeds: vec![0, 1, 2], algorithms: vec![Algorithm::Bmm, Algorithm::Jmm], jobs };
        (data, config)
    }

    #[test]
    fn report_is_complete_and_paired() {
        let (data, config) = small_bench(1);
        let report = run_bench(&data, &config).unwrap();
        assert_eq!(report.algorithms.len(), 2);
        for a in &report.algorithms {
            assert_eq!(a.rows.len(), 3);
            assert_eq!(a.rows.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![0, 1, 2]);
            for r in &a.rows {
                assert!(r.iterations > 0 && r.final_objective.is_finite());
                assert_relative_eq!(r.normalized_objective * 180.0, r.final_objective, max_relative = 1e-15);
            }
        }
        assert!(report.acceleration_percent.is_some());
        assert_eq!(report.agreement.len(), 3);

        let only = BenchConfig { algorithms: vec![Algorithm::Jmm], ..config };
        let report = run_bench(&data, &only).unwrap();
        assert!(report.acceleration_percent.is_none() && report.agreement.is_empty());
    }

    #[test]
    fn parallel_matches_sequential_except_timing() {
        let (data, seq) = small_bench(1);
        let (_, par) = small_bench(3);
        let a = run_bench(&data, &seq).unwrap();
        let b = run_bench(&data, &par).unwrap();
        for (x, y) in a.algorithms.iter().zip(&b.algorithms) {
            for (r, s) in x.rows.iter().zip(&y.rows) {
                assert_eq!((r.iterations, r.final_objective, r.kkt), (s.iterations, s.final_objective, s.kkt));
            }
        }
        assert_eq!(a.agreement, b.agreement);
    }

    #[test]
    fn rejects_bad_config() {
        let (data, config) = small_bench(1);
        assert!(run_bench(&data, &BenchConfig { seeds: vec![], ..config.clone() }).is_err());
        assert!(run_bench(&data, &BenchConfig { jobs: 0, ..config.clone() }).is_err());
        assert!(run_bench(&data, &BenchConfig { algorithms: vec![Algorithm::Bmm, Algorithm::Bmm], ..config }).is_err());
    }
}

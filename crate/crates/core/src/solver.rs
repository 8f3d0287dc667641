//! Outer loops for BMM and JMM with initialization, normalization, the
//! relative-decrease stopping rule and trace recording.
//!
//! Each outer iteration runs the factor updates, forms `WH + kappa` once to
//! evaluate the objective and then rescales the factors. That product is
//! reused: JMM takes it as the next anchor product and BMM as the product
//! for its next `W` update, since normalization leaves `WH` unchanged.

use std::time::{Duration, Instant};

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{DataMatrix, FactorPair};
use crate::diagnostics::{kkt_from_product, KktResiduals};
use crate::divergence::objective_from_product;
use crate::error::{check_shape, NmfError, Result};
use crate::kernels::{model_product, Side, DEFAULT_FLOOR};
use crate::majorizer::MajorizerAnchor;
use crate::synthetic::{half_normal_matrix, rng_from_seed};
use crate::updates::{bmm_step, Algorithm, JmmStep, KernelOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub beta: f64,
    pub rank: usize,
    pub algorithm: Algorithm,
    /// JMM sub-iterations per outer iteration.
    pub sub_iters: usize,
    /// BMM sub-iterations on `W` and on `H`.
    pub sub_iters_w: usize,
    pub sub_iters_h: usize,
    pub tol: f64,
    /// Shift applied to data and model. `None` keeps the data's own shift
    /// if positive and otherwise uses [`DataMatrix::default_kappa`].
    pub kappa: Option<f64>,
    pub max_outer_iters: usize,
    pub seed: u64,
    pub heuristic_gamma_one: bool,
    pub denominator_floor: f64,
    pub use_fast_path: bool,
    /// Record KKT residuals for every trace row (untimed). The final
    /// residuals are always computed.
    pub trace_kkt: bool,
}

impl SolverConfig {
    pub fn new(beta: f64, rank: usize, algorithm: Algorithm) -> Self {
        Self {
            beta,
            rank,
            algorithm,
            sub_iters: 1,
            sub_iters_w: 1,
            sub_iters_h: 1,
            tol: 1e-5,
            kappa: None,
            max_outer_iters: 5000,
            seed: 0,
            heuristic_gamma_one: false,
            denominator_floor: DEFAULT_FLOOR,
            use_fast_path: true,
            trace_kkt: true,
        }
    }

    /// Sets `L`, `L_W` and `L_H` together.
    pub fn with_sub_iters(mut self, l: usize) -> Self {
        self.sub_iters = l;
        self.sub_iters_w = l;
        self.sub_iters_h = l;
        self
    }

    pub fn kernel_options(&self) -> KernelOptions {
        KernelOptions {
            use_fast_path: self.use_fast_path,
            heuristic_gamma_one: self.heuristic_gamma_one,
            floor: self.denominator_floor,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(NmfError::Config(msg));
        if !self.beta.is_finite() {
            return fail(format!("beta must be finite, got {}", self.beta));
        }
        if self.rank == 0 {
            return fail("rank must be positive".into());
        }
        if self.sub_iters == 0 || self.sub_iters_w == 0 || self.sub_iters_h == 0 {
            return fail("sub-iteration counts must be positive".into());
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return fail(format!("tol must be positive, got {}", self.tol));
        }
        if let Some(k) = self.kappa {
            if !(k >= 0.0 && k.is_finite()) {
                return fail(format!("kappa must be finite and >= 0, got {k}"));
            }
        }
        if self.max_outer_iters == 0 {
            return fail("max_outer_iters must be positive".into());
        }
        if !(self.denominator_floor > 0.0 && self.denominator_floor.is_finite()) {
            return fail(format!("denominator floor must be positive, got {}", self.denominator_floor));
        }
        Ok(())
    }

    /// Data with the configured (or default) shift applied.
    pub fn prepare_data(&self, data: &DataMatrix) -> Result<DataMatrix> {
        let kappa = match self.kappa {
            Some(k) => k,
            None if data.kappa() > 0.0 => data.kappa(),
            None => data.default_kappa(self.beta),
        };
        let shifted = if kappa == data.kappa() { data.clone() } else { data.clone().with_kappa(kappa)? };
        shifted.check_beta_domain(self.beta)?;
        Ok(shifted)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub objective: f64,
    /// Cumulative solver time at the end of this iteration.
    pub seconds: f64,
    pub kkt: Option<KktResiduals>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Converged,
    MaxIters,
}

/// Instrumentation counters for one fit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounts {
    /// `WH` products formed, including the initial one.
    pub products: usize,
    /// JMM anchors built.
    pub anchors: usize,
    pub w_updates: usize,
    pub h_updates: usize,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub factors: FactorPair,
    pub trace: Vec<TraceRow>,
    pub termination: Termination,
    pub iterations: usize,
    pub final_objective: f64,
    pub final_kkt: KktResiduals,
    pub kappa: f64,
    pub seconds: f64,
    pub counts: OpCounts,
}

/// Half-normal `W` (F x K) then `H` (K x N) from `ChaCha8Rng::seed_from_u64(seed)`.
pub fn init_factors(f: usize, n: usize, k: usize, seed: u64) -> Result<FactorPair> {
    if f == 0 || n == 0 || k == 0 {
        return Err(NmfError::Config(format!("dimensions must be positive, got F={f}, N={n}, K={k}")));
    }
    let mut rng = rng_from_seed(seed);
    let w = half_normal_matrix(&mut rng, f, k);
    let h = half_normal_matrix(&mut rng, k, n);
    Ok(FactorPair::from_parts(w, h))
}

/// Unit l2 columns for `W`, rows of `H` scaled so `WH` is unchanged.
pub fn normalize(factors: &FactorPair) -> Result<FactorPair> {
    let (mut w, mut h) = (factors.w().clone(), factors.h().clone());
    normalize_in_place(&mut w, &mut h)?;
    Ok(FactorPair::from_parts(w, h))
}

pub(crate) fn normalize_in_place(w: &mut Array2<f64>, h: &mut Array2<f64>) -> Result<()> {
    let norms: Vec<f64> = w.columns().into_iter().map(|c| c.dot(&c).sqrt()).collect();
    if let Some(column) = norms.iter().position(|&n| !(n > 0.0 && n.is_finite())) {
        return Err(NmfError::ZeroColumn { column });
    }
    for (mut col, &n) in w.columns_mut().into_iter().zip(&norms) {
        col.mapv_inplace(|x| x / n);
    }
    for (mut row, &n) in h.axis_iter_mut(Axis(0)).zip(&norms) {
        row.mapv_inplace(|x| x * n);
    }
    Ok(())
}

/// Relative decrease `(prev - curr) / curr <= tol`, written without the
/// division so a zero objective stops as well.
pub fn should_stop(prev_obj: f64, curr_obj: f64, tol: f64) -> bool {
    prev_obj - curr_obj <= tol * curr_obj
}

/// Fit from `init_factors(F, N, K, config.seed)`.
pub fn fit(data: &DataMatrix, config: &SolverConfig) -> Result<FitResult> {
    config.validate()?;
    let (f, n) = data.shape();
    fit_from(data, config, init_factors(f, n, config.rank, config.seed)?)
}

/// Fit from the given initial factors.
pub fn fit_from(data: &DataMatrix, config: &SolverConfig, init: FactorPair) -> Result<FitResult> {
    config.validate()?;
    check_shape("initial factors", data.shape(), (init.w().nrows(), init.h().ncols()))?;
    if init.rank() != config.rank {
        return Err(NmfError::Config(format!(
            "initial factors have rank {}, config says {}",
            init.rank(),
            config.rank
        )));
    }
    crate::data::check_positive("W", init.w())?;
    crate::data::check_positive("H", init.h())?;
    let data = config.prepare_data(data)?;
    let (w, h) = init.into_parts();
    Solver::new(&data, config).run(w, h)
}

/// Classic block-MM fit with `config.sub_iters_w` / `config.sub_iters_h` sub-iterations.
pub fn run_bmm(data: &DataMatrix, config: &SolverConfig) -> Result<FitResult> {
    expect_algorithm(config, Algorithm::Bmm)?;
    fit(data, config)
}

/// Joint-MM fit; one anchor per outer iteration.
pub fn run_jmm(data: &DataMatrix, config: &SolverConfig) -> Result<FitResult> {
    expect_algorithm(config, Algorithm::Jmm)?;
    fit(data, config)
}

fn expect_algorithm(config: &SolverConfig, algorithm: Algorithm) -> Result<()> {
    if config.algorithm != algorithm {
        return Err(NmfError::Config(format!("config selects {}, expected {algorithm}", config.algorithm)));
    }
    Ok(())
}

struct Solver<'a> {
    target: ArrayView2<'a, f64>,
    kappa: f64,
    config: &'a SolverConfig,
    opts: KernelOptions,
    counts: OpCounts,
}

impl<'a> Solver<'a> {
    fn new(data: &'a DataMatrix, config: &'a SolverConfig) -> Self {
        Self {
            target: data.target(),
            kappa: data.kappa(),
            config,
            opts: config.kernel_options(),
            counts: OpCounts::default(),
        }
    }

    fn product(&mut self, w: &Array2<f64>, h: &Array2<f64>) -> Array2<f64> {
        self.counts.products += 1;
        model_product(w, h, self.kappa)
    }

    /// One outer iteration; `product` is `WH + kappa` of the incoming
    /// factors on entry and of the updated ones on exit.
    fn step(&mut self, w: Array2<f64>, h: Array2<f64>, product: &mut Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let beta = self.config.beta;
        match self.config.algorithm {
            Algorithm::Bmm => {
                let (mut w, mut h) = (w, h);
                for l in 0..self.config.sub_iters_w {
                    if l > 0 {
                        *product = self.product(&w, &h);
                    }
                    w = bmm_step(Side::W, self.target, product, w.view(), h.view(), beta, &self.opts);
                    self.counts.w_updates += 1;
                }
                for _ in 0..self.config.sub_iters_h {
                    *product = self.product(&w, &h);
                    h = bmm_step(Side::H, self.target, product, h.view(), w.view(), beta, &self.opts);
                    self.counts.h_updates += 1;
                }
                *product = self.product(&w, &h);
                (w, h)
            }
            Algorithm::Jmm => {
                let v = std::mem::take(product);
                let anchor = MajorizerAnchor::with_product(w, h, v, self.kappa);
                self.counts.anchors += 1;
                let step = JmmStep::prepare(self.target, &anchor, beta, &self.opts);
                let mut h_cur = anchor.h().clone();
                let mut w_cur = anchor.w().clone();
                for _ in 0..self.config.sub_iters {
                    w_cur = step.update_w(h_cur.view());
                    h_cur = step.update_h(w_cur.view());
                }
                self.counts.w_updates += self.config.sub_iters;
                self.counts.h_updates += self.config.sub_iters;
                drop(step);
                *product = self.product(&w_cur, &h_cur);
                (w_cur, h_cur)
            }
        }
    }

    fn run(mut self, mut w: Array2<f64>, mut h: Array2<f64>) -> Result<FitResult> {
        let config = self.config;
        let mut elapsed = Duration::ZERO;
        let mut trace = Vec::new();
        let mut termination = Termination::MaxIters;

        let started = Instant::now();
        let mut product = self.product(&w, &h);
        elapsed += started.elapsed();

        let mut prev = f64::INFINITY;
        let mut objective = f64::NAN;
        for iter in 1..=config.max_outer_iters {
            let started = Instant::now();
            (w, h) = self.step(w, h, &mut product);
            objective = objective_from_product(self.target, product.view(), config.beta)?;
            let stop = iter > 1 && should_stop(prev, objective, config.tol);
            // Underflowed columns only arise from degenerate data; keep the
            // unnormalized factors rather than aborting the fit.
            let _ = normalize_in_place(&mut w, &mut h);
            elapsed += started.elapsed();

            let kkt = config.trace_kkt.then(|| kkt_from_product(self.target, &product, &w, &h, config.beta));
            trace.push(TraceRow { iter, objective, seconds: elapsed.as_secs_f64(), kkt });
            prev = objective;
            if stop {
                termination = Termination::Converged;
                break;
            }
        }

        let final_kkt = match trace.last().and_then(|r| r.kkt) {
            Some(k) => k,
            None => kkt_from_product(self.target, &product, &w, &h, config.beta),
        };
        Ok(FitResult {
            iterations: trace.len(),
            factors: FactorPair::from_parts(w, h),
            trace,
            termination,
            final_objective: objective,
            final_kkt,
            kappa: self.kappa,
            seconds: elapsed.as_secs_f64(),
            counts: self.counts,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::kkt_residuals;
    use crate::divergence::objective;
    use crate::synthetic::{low_rank_data, SyntheticSpec};
    use approx::assert_relative_eq;
    use ndarray::array;

    fn monotone(trace: &[TraceRow]) -> bool {
        trace.windows(2).all(|p| p[1].objective <= p[0].objective * (1.0 + 1e-10))
    }

    #[test]
    fn init_examples() {
        let a = init_factors(3, 2, 2, 7).unwrap();
        assert_eq!(a.w().dim(), (3, 2));
        assert_eq!(a.h().dim(), (2, 2));
        assert!(a.w().iter().chain(a.h()).all(|&x| x > 0.0));
        assert_eq!(a, init_factors(3, 2, 2, 7).unwrap());
        assert_ne!(a, init_factors(3, 2, 2, 8).unwrap());
        assert!(init_factors(0, 2, 2, 7).is_err());
    }

    #[test]
    fn normalize_examples() {
        let f = FactorPair::new(array![[3.0], [4.0]], array![[1.0, 1.0]]).unwrap();
        let n = normalize(&f).unwrap();
        assert_relative_eq!(n.w()[[0, 0]], 0.6, max_relative = 1e-15);
        assert_relative_eq!(n.w()[[1, 0]], 0.8, max_relative = 1e-15);
        assert_eq!(n.h(), &array![[5.0, 5.0]]);

        let again = normalize(&n).unwrap();
        for (a, b) in again.w().iter().chain(again.h()).zip(n.w().iter().chain(n.h())) {
            assert!((a - b).abs() <= 1e-15 * b.abs());
        }

        let f = init_factors(6, 5, 4, 1).unwrap();
        let n = normalize(&f).unwrap();
        for (a, b) in n.w().dot(n.h()).iter().zip(f.w().dot(f.h()).iter()) {
            assert_relative_eq!(*a, *b, max_relative = 1e-12);
        }
        for c in n.w().columns() {
            assert_relative_eq!(c.dot(&c), 1.0, max_relative = 1e-14);
        }

        let mut w = array![[0.0, 1.0], [0.0, 2.0]];
        let mut h = array![[1.0], [1.0]];
        assert!(matches!(normalize_in_place(&mut w, &mut h), Err(NmfError::ZeroColumn { column: 0 })));
    }

    #[test]
    fn stopping_examples() {
        assert!(should_stop(1.0, 0.999999, 1e-5));
        assert!(!should_stop(1.0, 0.9, 1e-5));
        assert!(should_stop(1.0, 1.0, 1e-5));
        assert!(should_stop(0.0, 0.0, 1e-5));
    }

    #[test]
    fn exact_fit_converges_at_second_iteration() {
        let init = init_factors(8, 6, 3, 11).unwrap();
        let data = DataMatrix::new(init.w().dot(init.h())).unwrap();
        for algorithm in [Algorithm::Bmm, Algorithm::Jmm] {
            for beta in [0.0, 1.0, 1.5, 2.0] {
                let mut config = SolverConfig::new(beta, 3, algorithm);
                config.seed = 11;
                let r = fit(&data, &config).unwrap();
                assert_eq!(r.termination, Termination::Converged, "{algorithm} beta={beta}");
                assert_eq!(r.iterations, 2, "{algorithm} beta={beta}");
            }
        }
    }

    #[test]
    fn bmm_random_instance() {
        let mut rng = rng_from_seed(5);
        let data = DataMatrix::new(half_normal_matrix(&mut rng, 20, 15)).unwrap();
        let mut config = SolverConfig::new(1.0, 4, Algorithm::Bmm);
        config.seed = 3;
        let r = run_bmm(&data, &config).unwrap();
        assert!(monotone(&r.trace));
        assert!(r.final_kkt.res_w <= 1e-1 && r.final_kkt.res_h <= 1e-1, "{:?}", r.final_kkt);

        config.max_outer_iters = 60;
        config.tol = 1e-300;
        let one = run_bmm(&data, &config).unwrap();
        let ten = run_bmm(&data, &config.clone().with_sub_iters(10)).unwrap();
        assert_eq!(one.iterations, ten.iterations);
        assert!(ten.final_objective <= one.final_objective * (1.0 + 1e-6));
    }

    #[test]
    fn algorithm_mismatch_is_rejected() {
        let data = DataMatrix::new(array![[1.0, 2.0]]).unwrap();
        assert!(run_bmm(&data, &SolverConfig::new(1.0, 1, Algorithm::Jmm)).is_err());
        assert!(run_jmm(&data, &SolverConfig::new(1.0, 1, Algorithm::Bmm)).is_err());
    }

    #[test]
    fn descent_and_reproducibility() {
        let spec = SyntheticSpec { rows: 12, cols: 10, rank: 3, noise: 0.1 };
        let (data, _) = low_rank_data(spec, 2);
        for algorithm in [Algorithm::Bmm, Algorithm::Jmm] {
            for beta in [-0.5, 0.0, 0.5, 1.0, 1.5, 2.0, 3.0] {
                let mut config = SolverConfig::new(beta, 3, algorithm);
                config.max_outer_iters = 100;
                let a = fit(&data, &config).unwrap();
                let b = fit(&data, &config).unwrap();
                assert!(monotone(&a.trace), "{algorithm} beta={beta}");
                assert_eq!(a.factors, b.factors);
                let prepared = config.prepare_data(&data).unwrap();
                let direct = objective(&prepared, &a.factors, beta).unwrap();
                assert_relative_eq!(direct, a.final_objective, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn counters_follow_sub_iterations() {
        let spec = SyntheticSpec { rows: 9, cols: 7, rank: 2, noise: 0.1 };
        let (data, _) = low_rank_data(spec, 6);
        let mut config = SolverConfig::new(1.5, 2, Algorithm::Jmm).with_sub_iters(4);
        config.max_outer_iters = 5;
        config.tol = 1e-300;
        let r = fit(&data, &config).unwrap();
        assert_eq!(r.iterations, 5);
        assert_eq!(r.counts, OpCounts { products: 6, anchors: 5, w_updates: 20, h_updates: 20 });

        config.algorithm = Algorithm::Bmm;
        config.sub_iters_w = 2;
        config.sub_iters_h = 3;
        let r = fit(&data, &config).unwrap();
        assert_eq!(r.counts, OpCounts { products: 1 + 5 * 5, anchors: 0, w_updates: 10, h_updates: 15 });
    }

    #[test]
    fn kappa_resolution() {
        let data = DataMatrix::new(array![[0.0, 2.0], [1.0, 3.0]]).unwrap();
        let config = SolverConfig::new(0.0, 1, Algorithm::Jmm);
        assert_relative_eq!(config.prepare_data(&data).unwrap().kappa(), 1.5e-9, max_relative = 1e-15);
        let mut explicit = config.clone();
        explicit.kappa = Some(0.0);
        assert!(explicit.prepare_data(&data).is_err());
        explicit.kappa = Some(0.25);
        let r = fit(&data, &explicit).unwrap();
        assert_eq!(r.kappa, 0.25);
    }

    #[test]
    fn final_kkt_matches_direct_evaluation() {
        let spec = SyntheticSpec { rows: 10, cols: 8, rank: 2, noise: 0.05 };
        let (data, _) = low_rank_data(spec, 1);
        let mut config = SolverConfig::new(1.0, 2, Algorithm::Jmm);
        config.trace_kkt = false;
        let r = fit(&data, &config).unwrap();
        assert!(r.trace.iter().all(|row| row.kkt.is_none()));
        let direct = kkt_residuals(&data, &r.factors, 1.0).unwrap();
        assert_relative_eq!(direct.res_w, r.final_kkt.res_w, max_relative = 1e-6, epsilon = 1e-14);
        assert_relative_eq!(direct.res_h, r.final_kkt.res_h, max_relative = 1e-6, epsilon = 1e-14);
    }
}

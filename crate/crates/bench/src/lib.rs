//! Fixtures shared by the criterion benches.

use betanmf_core::{
    bmm_update_h, bmm_update_w, init_factors, low_rank_data, Algorithm, DataMatrix, FactorPair, JmmStep, KernelOptions,
    MajorizerAnchor, Result, SyntheticSpec,
};
use ndarray::Array2;

/// Synthetic data plus a random starting point of matching rank.
pub struct Fixture {
    pub data: DataMatrix,
    pub start: FactorPair,
}

impl Fixture {
    pub fn new(rows: usize, cols: usize, rank: usize, seed: u64) -> Self {
        let (data, _) = low_rank_data(SyntheticSpec { rows, cols, rank, noise: 0.1 }, seed);
        let start = init_factors(rows, cols, rank, seed.wrapping_add(1)).expect("positive dimensions");
        Self { data, start }
    }

    pub fn anchor(&self) -> MajorizerAnchor {
        MajorizerAnchor::new(&self.start, self.data.kappa()).expect("positive factors")
    }
}

/// One outer iteration (W then H, one sub-iteration each) from `factors`,
/// without normalization or objective evaluation.
pub fn outer_iteration(
    data: &DataMatrix,
    factors: &FactorPair,
    algorithm: Algorithm,
    beta: f64,
    opts: &KernelOptions,
) -> Result<(Array2<f64>, Array2<f64>)> {
    match algorithm {
        Algorithm::Bmm => {
            let w = bmm_update_w(data, factors, beta, opts)?;
            let h = bmm_update_h(data, &FactorPair::new(w.clone(), factors.h().clone())?, beta, opts)?;
            Ok((w, h))
        }
        Algorithm::Jmm => {
            let anchor = MajorizerAnchor::new(factors, data.kappa())?;
            let step = JmmStep::new(data, &anchor, beta, opts)?;
            let w = step.update_w(factors.h().view());
            let h = step.update_h(w.view());
            Ok((w, h))
        }
    }
}

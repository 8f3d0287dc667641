//! Seeded random matrices.
//!
//! All generators draw from `ChaCha8Rng::seed_from_u64(seed)` and fill
//! matrices in row-major order, so a seed pins every value on every
//! platform.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{DataMatrix, FactorPair};
use crate::error::{NmfError, Result};

pub type NmfRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> NmfRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `|z|` with `z` standard normal; exact zeros are redrawn.
pub fn half_normal(rng: &mut NmfRng) -> f64 {
    loop {
        let z: f64 = StandardNormal.sample(rng);
        if z != 0.0 {
            return z.abs();
        }
    }
}

pub fn half_normal_matrix(rng: &mut NmfRng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || half_normal(rng))
}

/// Shape and noise of a synthetic low-rank problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub rows: usize,
    pub cols: usize,
    pub rank: usize,
    pub noise: f64,
}

impl SyntheticSpec {
    /// Parses `F,N,K,noise`.
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.split(',').map(str::trim).collect();
        let bad = || NmfError::Config(format!("expected F,N,K,noise, got {text:?}"));
        if parts.len() != 4 {
            return Err(bad());
        }
        let dim = |s: &str| s.parse::<usize>().ok().filter(|&d| d > 0).ok_or_else(bad);
        let noise = parts[3].parse::<f64>().ok().filter(|x| x.is_finite() && *x >= 0.0).ok_or_else(bad)?;
        Ok(Self { rows: dim(parts[0])?, cols: dim(parts[1])?, rank: dim(parts[2])?, noise })
    }
}

/// `V = W* H* + noise * |Z|` with half-normal `W*`, `H*` and standard
/// normal `Z`. Returns the data and the generating factors.
pub fn low_rank_data(spec: SyntheticSpec, seed: u64) -> (DataMatrix, FactorPair) {
    let mut rng = rng_from_seed(seed);
    let w = half_normal_matrix(&mut rng, spec.rows, spec.rank);
    let h = half_normal_matrix(&mut rng, spec.rank, spec.cols);
    let mut v = w.dot(&h);
    if spec.noise > 0.0 {
        v.iter_mut().for_each(|x| *x += spec.noise * half_normal(&mut rng));
    }
    let data = DataMatrix::new(v).expect("half-normal data is finite and nonnegative");
    (data, FactorPair::from_parts(w, h))
}

//! The beta-divergence family and the objective it induces on a factorization.
//!
//! `d_beta(x | y)` covers Itakura-Saito (`beta = 0`), Kullback-Leibler
//! (`beta = 1`) and half the squared Euclidean distance (`beta = 2`). The
//! objective sums it entrywise between the (shifted) data and the (shifted)
//! model `WH + kappa`.

use ndarray::{ArrayView2, Zip};

use crate::data::{DataMatrix, FactorPair};
use crate::error::{check_shape, NmfError, Result};
use crate::kernels::model_product;

/// A divergence parameter together with its update exponent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaParam {
    pub beta: f64,
    pub gamma: f64,
}

impl BetaParam {
    pub fn new(beta: f64) -> Self {
        Self { beta, gamma: gamma_exponent(beta) }
    }

    /// `beta` is exactly one of the values with simplified update rules.
    pub fn has_fast_path(&self) -> bool {
        self.beta == 0.0 || self.beta == 1.0 || self.beta == 2.0
    }
}

/// Exponent applied to the multiplicative update ratio.
///
/// `1/(2-beta)` below 1, `1` on `[1, 2]`, `1/(beta-1)` above 2. Always in
/// `(0, 1]` and continuous at both breakpoints.
pub fn gamma_exponent(beta: f64) -> f64 {
    if beta < 1.0 {
        1.0 / (2.0 - beta)
    } else if beta <= 2.0 {
        1.0
    } else {
        1.0 / (beta - 1.0)
    }
}

/// Scalar beta-divergence `d_beta(x | y)`.
///
/// Requires `y > 0` and `x >= 0`, with `x > 0` when `beta <= 0`. For
/// `beta = 1` and `x = 0` the convention `0 log 0 = 0` applies.
pub fn beta_divergence(x: f64, y: f64, beta: f64) -> Result<f64> {
    check_pair(x, y, beta)?;
    Ok(beta_divergence_unchecked(x, y, beta))
}

fn check_pair(x: f64, y: f64, beta: f64) -> Result<()> {
    if !y.is_finite() || y <= 0.0 {
        return Err(NmfError::Domain(format!("d_beta(x | y) needs y > 0, got y = {y}")));
    }
    if !x.is_finite() || x < 0.0 {
        return Err(NmfError::Domain(format!("d_beta(x | y) needs finite x >= 0, got x = {x}")));
    }
    if beta <= 0.0 && x == 0.0 {
        return Err(NmfError::Domain(format!("d_beta(0 | y) is undefined for beta = {beta}; apply a kappa shift")));
    }
    if beta.is_nan() {
        return Err(NmfError::Domain("beta is NaN".into()));
    }
    Ok(())
}

#[inline(always)]
fn kullback_leibler(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        y
    } else {
        x * (x / y).ln() - x + y
    }
}

#[inline(always)]
fn itakura_saito(x: f64, y: f64) -> f64 {
    let r = x / y;
    r - r.ln() - 1.0
}

#[inline(always)]
fn half_squared(x: f64, y: f64) -> f64 {
    0.5 * (x - y) * (x - y)
}

#[inline(always)]
fn general_beta(x: f64, y: f64, beta: f64) -> f64 {
    let y_pow = y.powf(beta - 1.0);
    x.powf(beta) / (beta * (beta - 1.0)) + y * y_pow / beta - x * y_pow / (beta - 1.0)
}

/// Exact zero on the diagonal; cancellation can otherwise leave a tiny
/// negative value when `x` is close to `y`.
#[inline(always)]
fn settle(x: f64, y: f64, d: f64) -> f64 {
    if x == y {
        0.0
    } else {
        d.max(0.0)
    }
}

#[inline]
pub(crate) fn beta_divergence_unchecked(x: f64, y: f64, beta: f64) -> f64 {
    let d = if beta == 1.0 {
        kullback_leibler(x, y)
    } else if beta == 0.0 {
        itakura_saito(x, y)
    } else if beta == 2.0 {
        half_squared(x, y)
    } else {
        general_beta(x, y, beta)
    };
    settle(x, y, d)
}

/// `D_beta(V + kappa | WH + kappa)`.
pub fn objective(data: &DataMatrix, factors: &FactorPair, beta: f64) -> Result<f64> {
    check_shape("objective", data.shape(), (factors.w().nrows(), factors.h().ncols()))?;
    let product = model_product(factors.w(), factors.h(), data.kappa());
    objective_from_product(data.target(), product.view(), beta)
}

fn sum_entries(target: ArrayView2<'_, f64>, product: ArrayView2<'_, f64>, d: impl Fn(f64, f64) -> f64) -> f64 {
    Zip::from(&target).and(&product).fold(0.0, |acc, &x, &y| acc + settle(x, y, d(x, y)))
}

/// Sum of entrywise divergences between `target` and an already shifted
/// model `product`, accumulated in a fixed order so the value is bitwise
/// reproducible.
pub fn objective_from_product(target: ArrayView2<'_, f64>, product: ArrayView2<'_, f64>, beta: f64) -> Result<f64> {
    check_shape("objective", target.dim(), product.dim())?;
    if beta.is_nan() {
        return Err(NmfError::Domain("beta is NaN".into()));
    }
    let strict_x = beta <= 0.0;
    let in_domain =
        |x: f64, y: f64| y > 0.0 && y < f64::INFINITY && (0.0..f64::INFINITY).contains(&x) && !(strict_x && x == 0.0);
    if !Zip::from(&target).and(&product).all(|&x, &y| in_domain(x, y)) {
        if let Some((&x, &y)) = target.iter().zip(product.iter()).find(|(&x, &y)| !in_domain(x, y)) {
            check_pair(x, y, beta)?;
        }
    }
    Ok(if beta == 1.0 {
        sum_entries(target, product, kullback_leibler)
    } else if beta == 0.0 {
        sum_entries(target, product, itakura_saito)
    } else if beta == 2.0 {
        sum_entries(target, product, half_squared)
    } else {
        sum_entries(target, product, |x, y| general_beta(x, y, beta))
    })
}

//! Multiplicative update kernels.
//!
//! Block MM (BMM) updates one factor against the current product `WH`:
//!
//! ```text
//! W <- W .* ( ((WH)^(b-2) .* V) H^T / ((WH)^(b-1)) H^T ) ^ gamma(b)
//! ```
//!
//! Joint MM (JMM) updates both factors against a frozen anchor
//! `(W~, H~, V~ = W~H~)`, so the F x N intermediates `V .* V~^(b-2)` and
//! `V~^(b-1)` are computed once per anchor and reused by every sub-update:
//!
//! ```text
//! W <- W~ .* ( (V .* V~^(b-2)) chi1(H, H~)^T / V~^(b-1) chi2(H, H~)^T ) ^ gamma(b)
//! ```
//!
//! with `chi1(M, M~) = M~^(2-b) / M^(1-b)` for `b <= 2` (else `M`) and
//! `chi2(M, M~) = M^b / M~^(b-1)` for `b >= 1` (else `M`). Both are
//! evaluated as `M~ .* R` and `M .* R` with the single power
//! `R = (M / M~)^(b-1)`, which is exact when `M == M~`.
//!
//! For `b` in `{0, 1, 2}` dedicated kernels skip the degenerate powers.
//! With a shift `kappa`, `V` means `V + kappa` and every product carries the
//! `+ kappa` as well.

use std::cell::OnceCell;

use ndarray::{Array2, ArrayView2, CowArray, Ix2, Zip};
use serde::{Deserialize, Serialize};

use crate::data::{check_positive, DataMatrix, FactorPair};
use crate::divergence::{gamma_exponent, BetaParam};
use crate::error::{check_shape, NmfError, Result};
use crate::kernels::{
    model_product, multiplicative_step, pow_entrywise, side_ones_product, side_product, Side, DEFAULT_FLOOR,
};
use crate::majorizer::MajorizerAnchor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Bmm,
    Jmm,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Bmm => "bmm",
            Algorithm::Jmm => "jmm",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = NmfError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bmm" => Ok(Algorithm::Bmm),
            "jmm" => Ok(Algorithm::Jmm),
            other => Err(NmfError::Config(format!("unknown algorithm {other:?} (expected bmm or jmm)"))),
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Knobs shared by every kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelOptions {
    /// Use the dedicated kernels when `beta` is exactly 0, 1 or 2.
    pub use_fast_path: bool,
    /// Replace `gamma(beta)` by 1. Faster for BMM in practice; with JMM it
    /// still descended in experiments but settled on worse solutions, and
    /// neither case carries a descent guarantee.
    pub heuristic_gamma_one: bool,
    /// Lower bound on update denominators.
    pub floor: f64,
}

impl Default for KernelOptions {
    fn default() -> Self {
        Self { use_fast_path: true, heuristic_gamma_one: false, floor: DEFAULT_FLOOR }
    }
}

impl KernelOptions {
    pub fn general() -> Self {
        Self { use_fast_path: false, ..Self::default() }
    }

    fn gamma(&self, beta: f64) -> f64 {
        if self.heuristic_gamma_one {
            1.0
        } else {
            gamma_exponent(beta)
        }
    }

    fn fast(&self, beta: f64) -> bool {
        self.use_fast_path && BetaParam::new(beta).has_fast_path()
    }
}

/// `(M / M~)^(beta - 1)`, or `None` at `beta = 1` where it is all ones.
fn ratio_power(m: ArrayView2<'_, f64>, m_tilde: ArrayView2<'_, f64>, beta: f64) -> Option<Array2<f64>> {
    if beta == 1.0 {
        return None;
    }
    let ratio = Zip::from(&m).and(&m_tilde).map_collect(|&a, &b| a / b);
    Some(pow_entrywise(ratio.view(), beta - 1.0))
}

type Cow2<'a> = CowArray<'a, f64, Ix2>;

/// `(chi1(M, M~), chi2(M, M~))`.
fn chi_pair<'a>(m: ArrayView2<'a, f64>, m_tilde: ArrayView2<'a, f64>, beta: f64) -> (Cow2<'a>, Cow2<'a>) {
    let ratio = ratio_power(m, m_tilde, beta);
    let scaled = |base: ArrayView2<'a, f64>| -> Cow2<'a> {
        match &ratio {
            Some(r) => CowArray::from(&base * r),
            None => CowArray::from(base),
        }
    };
    let chi1 = if beta <= 2.0 { scaled(m_tilde) } else { CowArray::from(m) };
    let chi2 = if beta < 1.0 { CowArray::from(m) } else { scaled(m) };
    (chi1, chi2)
}

/// `M~^(2-beta) / M^(1-beta)` for `beta <= 2`, `M` otherwise.
pub fn chi1(m: &Array2<f64>, m_tilde: &Array2<f64>, beta: f64) -> Result<Array2<f64>> {
    check_shape("chi1", m.dim(), m_tilde.dim())?;
    Ok(chi_pair(m.view(), m_tilde.view(), beta).0.into_owned())
}

/// `M` for `beta < 1`, `M^beta / M~^(beta-1)` otherwise.
pub fn chi2(m: &Array2<f64>, m_tilde: &Array2<f64>, beta: f64) -> Result<Array2<f64>> {
    check_shape("chi2", m.dim(), m_tilde.dim())?;
    Ok(chi_pair(m.view(), m_tilde.view(), beta).1.into_owned())
}

// ---------------------------------------------------------------------------
// BMM

/// One BMM update of the factor on `side`, given the shifted product
/// `product = WH + kappa` of the current factors.
pub(crate) fn bmm_step(
    side: Side,
    target: ArrayView2<'_, f64>,
    product: &Array2<f64>,
    factor: ArrayView2<'_, f64>,
    other: ArrayView2<'_, f64>,
    beta: f64,
    opts: &KernelOptions,
) -> Array2<f64> {
    let gamma = opts.gamma(beta);
    let (num, den) = if opts.fast(beta) {
        if beta == 0.0 {
            let inv = product.mapv(f64::recip);
            let weighted = Zip::from(&target).and(&inv).map_collect(|&v, &r| v * r * r);
            (side_product(side, weighted.view(), other), side_product(side, inv.view(), other))
        } else if beta == 1.0 {
            let ratio = Zip::from(&target).and(product).map_collect(|&v, &p| v / p);
            let fixed = if side == Side::W { factor.nrows() } else { factor.ncols() };
            (side_product(side, ratio.view(), other), side_ones_product(side, other, fixed))
        } else {
            (side_product(side, target, other), side_product(side, product.view(), other))
        }
    } else {
        let pw = pow_entrywise(product.view(), beta - 2.0);
        let weighted = &target * &pw;
        let model = pw * product;
        (side_product(side, weighted.view(), other), side_product(side, model.view(), other))
    };
    multiplicative_step(factor, &num, &den, gamma, opts.floor)
}

fn check_bmm(data: &DataMatrix, factors: &FactorPair) -> Result<()> {
    check_shape("bmm update", data.shape(), (factors.w().nrows(), factors.h().ncols()))?;
    check_positive("W", factors.w())?;
    check_positive("H", factors.h())
}

/// Classic block-MM update of `W` holding `H` fixed.
pub fn bmm_update_w(data: &DataMatrix, factors: &FactorPair, beta: f64, opts: &KernelOptions) -> Result<Array2<f64>> {
    check_bmm(data, factors)?;
    let product = model_product(factors.w(), factors.h(), data.kappa());
    Ok(bmm_step(Side::W, data.target(), &product, factors.w().view(), factors.h().view(), beta, opts))
}

/// Classic block-MM update of `H` holding `W` fixed.
pub fn bmm_update_h(data: &DataMatrix, factors: &FactorPair, beta: f64, opts: &KernelOptions) -> Result<Array2<f64>> {
    check_bmm(data, factors)?;
    let product = model_product(factors.w(), factors.h(), data.kappa());
    Ok(bmm_step(Side::H, data.target(), &product, factors.h().view(), factors.w().view(), beta, opts))
}

// ---------------------------------------------------------------------------
// JMM

/// Per-anchor state of the JMM updates.
///
/// Holds the F x N intermediates that stay constant while the anchor is
/// frozen; each sub-update then costs two contractions with the other
/// factor (one at `beta = 1`).
pub struct JmmStep<'a> {
    anchor: &'a MajorizerAnchor,
    beta: f64,
    opts: KernelOptions,
    fast: bool,
    /// `V .* V~^(beta-2)`
    weighted: Cow2<'a>,
    /// `V~^(beta-1)`; unused on the `beta = 1` fast path.
    model: Cow2<'a>,
    numerator_w: OnceCell<Array2<f64>>,
    numerator_h: OnceCell<Array2<f64>>,
}

impl<'a> JmmStep<'a> {
    pub fn new(data: &'a DataMatrix, anchor: &'a MajorizerAnchor, beta: f64, opts: &KernelOptions) -> Result<Self> {
        check_shape("jmm anchor", data.shape(), anchor.v().dim())?;
        if data.kappa() != anchor.kappa() {
            return Err(NmfError::Config(format!(
                "anchor built with kappa = {} but data uses kappa = {}",
                anchor.kappa(),
                data.kappa()
            )));
        }
        Ok(Self::prepare(data.target(), anchor, beta, opts))
    }

    pub(crate) fn prepare(
        target: ArrayView2<'a, f64>,
        anchor: &'a MajorizerAnchor,
        beta: f64,
        opts: &KernelOptions,
    ) -> Self {
        let fast = opts.fast(beta);
        let vt = anchor.v();
        let (weighted, model): (Cow2<'a>, Cow2<'a>) = if fast {
            if beta == 0.0 {
                let inv = vt.mapv(f64::recip);
                let weighted = Zip::from(&target).and(&inv).map_collect(|&v, &r| v * r * r);
                (weighted.into(), inv.into())
            } else if beta == 1.0 {
                let ratio = Zip::from(&target).and(vt).map_collect(|&v, &p| v / p);
                (ratio.into(), vt.view().into())
            } else {
                (target.into(), vt.view().into())
            }
        } else {
            let pw = pow_entrywise(vt.view(), beta - 2.0);
            let weighted = &target * &pw;
            let model = pw * vt;
            (weighted.into(), model.into())
        };
        Self {
            anchor,
            beta,
            opts: *opts,
            fast,
            weighted,
            model,
            numerator_w: OnceCell::new(),
            numerator_h: OnceCell::new(),
        }
    }

    pub fn anchor(&self) -> &MajorizerAnchor {
        self.anchor
    }

    /// New `W` given the current `H`.
    pub fn update_w(&self, h_current: ArrayView2<'_, f64>) -> Array2<f64> {
        self.update(Side::W, h_current)
    }

    /// New `H` given the current `W`.
    pub fn update_h(&self, w_current: ArrayView2<'_, f64>) -> Array2<f64> {
        self.update(Side::H, w_current)
    }

    fn update(&self, side: Side, current: ArrayView2<'_, f64>) -> Array2<f64> {
        let (base, other_tilde) = match side {
            Side::W => (self.anchor.w().view(), self.anchor.h().view()),
            Side::H => (self.anchor.h().view(), self.anchor.w().view()),
        };
        let beta = self.beta;
        let (num, den) = if self.fast && beta == 1.0 {
            let cell = if side == Side::W { &self.numerator_w } else { &self.numerator_h };
            let num = cell.get_or_init(|| side_product(side, self.weighted.view(), other_tilde));
            let fixed = if side == Side::W { base.nrows() } else { base.ncols() };
            return multiplicative_step(
                base,
                num,
                &side_ones_product(side, current, fixed),
                self.opts.gamma(beta),
                self.opts.floor,
            );
        } else if self.fast && beta == 0.0 {
            let chi1 = Zip::from(&other_tilde).and(&current).map_collect(|&t, &c| t * (t / c));
            (side_product(side, self.weighted.view(), chi1.view()), side_product(side, self.model.view(), current))
        } else if self.fast && beta == 2.0 {
            let chi2 = Zip::from(&current).and(&other_tilde).map_collect(|&c, &t| c * (c / t));
            (side_product(side, self.weighted.view(), current), side_product(side, self.model.view(), chi2.view()))
        } else {
            let (chi1, chi2) = chi_pair(current, other_tilde, beta);
            (side_product(side, self.weighted.view(), chi1.view()), side_product(side, self.model.view(), chi2.view()))
        };
        multiplicative_step(base, &num, &den, self.opts.gamma(beta), self.opts.floor)
    }
}

/// Joint-MM update of `W` around `anchor` given the current `H`.
pub fn jmm_update_w(
    data: &DataMatrix,
    anchor: &MajorizerAnchor,
    h_current: &Array2<f64>,
    beta: f64,
    opts: &KernelOptions,
) -> Result<Array2<f64>> {
    check_shape("jmm current H", anchor.h().dim(), h_current.dim())?;
    check_positive("H", h_current)?;
    Ok(JmmStep::new(data, anchor, beta, opts)?.update_w(h_current.view()))
}

/// Joint-MM update of `H` around `anchor` given the current `W`.
pub fn jmm_update_h(
    data: &DataMatrix,
    anchor: &MajorizerAnchor,
    w_current: &Array2<f64>,
    beta: f64,
    opts: &KernelOptions,
) -> Result<Array2<f64>> {
    check_shape("jmm current W", anchor.w().dim(), w_current.dim())?;
    check_positive("W", w_current)?;
    Ok(JmmStep::new(data, anchor, beta, opts)?.update_h(w_current.view()))
}

/// Inputs of a simplified `H` update.
pub enum UpdateBasis<'a> {
    /// BMM: the current factors.
    Bmm(&'a FactorPair),
    /// JMM: the anchor and the current `W`.
    Jmm { anchor: &'a MajorizerAnchor, w_current: &'a Array2<f64> },
}

/// Simplified `H` update for `beta` exactly 0, 1 or 2.
pub fn fast_path_update_h(
    data: &DataMatrix,
    basis: UpdateBasis<'_>,
    beta: f64,
    opts: &KernelOptions,
) -> Result<Array2<f64>> {
    if !BetaParam::new(beta).has_fast_path() {
        return Err(NmfError::Config(format!("no simplified update for beta = {beta}; expected 0, 1 or 2")));
    }
    let opts = KernelOptions { use_fast_path: true, ..*opts };
    match basis {
        UpdateBasis::Bmm(factors) => bmm_update_h(data, factors, beta, &opts),
        UpdateBasis::Jmm { anchor, w_current } => jmm_update_h(data, anchor, w_current, beta, &opts),
    }
}

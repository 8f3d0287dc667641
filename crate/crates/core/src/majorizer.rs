//! The joint auxiliary function `G(W, H | W~, H~)`.
//!
//! Each summand `d_beta(v | [WH]_fn)` is split into convex, concave and
//! constant parts in its second argument. The convex part is bounded with
//! Jensen's inequality over the weights `lambda_fnk = w~_fk h~_kn / v~_fn`
//! and the concave part by its tangent at `v~_fn`. A positive shift `kappa`
//! acts as one more frozen component with weight `kappa / v~_fn`.
//!
//! Everything here is a dense triple loop meant for audits and property
//! checks; the solvers use the closed-form minimizers in [`crate::updates`].

use ndarray::Array2;

use crate::data::{check_positive, DataMatrix, FactorPair};
use crate::divergence::beta_divergence;
use crate::error::{check_shape, Result};
use crate::kernels::model_product;

/// Frozen iterates around which `G` is built, with the cached shifted
/// product `v~ = W~H~ + kappa`.
#[derive(Debug, Clone)]
pub struct MajorizerAnchor {
    w: Array2<f64>,
    h: Array2<f64>,
    v: Array2<f64>,
    kappa: f64,
}

impl MajorizerAnchor {
    pub fn new(factors: &FactorPair, kappa: f64) -> Result<Self> {
        check_positive("anchor W", factors.w())?;
        check_positive("anchor H", factors.h())?;
        let v = model_product(factors.w(), factors.h(), kappa);
        Ok(Self { w: factors.w().clone(), h: factors.h().clone(), v, kappa })
    }

    /// Builds an anchor from a product the caller already holds.
    pub(crate) fn with_product(w: Array2<f64>, h: Array2<f64>, v: Array2<f64>, kappa: f64) -> Self {
        debug_assert_eq!(v.dim(), (w.nrows(), h.ncols()));
        Self { w, h, v, kappa }
    }

    pub fn w(&self) -> &Array2<f64> {
        &self.w
    }

    pub fn h(&self) -> &Array2<f64> {
        &self.h
    }

    /// `W~H~ + kappa`.
    pub fn v(&self) -> &Array2<f64> {
        &self.v
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn factors(&self) -> FactorPair {
        FactorPair::from_parts(self.w.clone(), self.h.clone())
    }
}

/// Convex, concave and constant parts of `d_beta(x | y)` as a function of `y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceSplit {
    pub convex: f64,
    pub concave: f64,
    pub constant: f64,
}

impl DivergenceSplit {
    pub fn total(&self) -> f64 {
        self.convex + self.concave + self.constant
    }
}

pub fn split_divergence(x: f64, y: f64, beta: f64) -> Result<DivergenceSplit> {
    // Same domain as the divergence itself.
    beta_divergence(x, y, beta)?;
    Ok(split_unchecked(x, y, beta))
}

fn split_unchecked(x: f64, y: f64, beta: f64) -> DivergenceSplit {
    let (convex, concave, constant) = if beta == 0.0 {
        (x / y, y.ln(), -(x.ln() + 1.0))
    } else if (1.0..=2.0).contains(&beta) {
        (crate::divergence::beta_divergence_unchecked(x, y, beta), 0.0, 0.0)
    } else {
        let pow_term = -x * y.powf(beta - 1.0) / (beta - 1.0);
        let y_term = y.powf(beta) / beta;
        let constant = x.powf(beta) / (beta * (beta - 1.0));
        if beta < 1.0 {
            (pow_term, y_term, constant)
        } else {
            (y_term, pow_term, constant)
        }
    };
    DivergenceSplit { convex, concave, constant }
}

/// Derivative in `y` of the concave part.
fn concave_slope(x: f64, y: f64, beta: f64) -> f64 {
    if (1.0..=2.0).contains(&beta) {
        0.0
    } else if beta < 1.0 {
        // y^beta / beta (or log y at beta = 0)
        y.powf(beta - 1.0)
    } else {
        -x * y.powf(beta - 2.0)
    }
}

fn convex_part(x: f64, y: f64, beta: f64) -> f64 {
    split_unchecked(x, y, beta).convex
}

/// Value of the joint auxiliary function at `candidate`.
pub fn aux_value(data: &DataMatrix, candidate: &FactorPair, anchor: &MajorizerAnchor, beta: f64) -> Result<f64> {
    check_compatible(data, candidate, anchor)?;
    check_positive("candidate W", candidate.w())?;
    check_positive("candidate H", candidate.h())?;
    let target = data.target();
    let kappa = anchor.kappa;
    let (f_dim, n_dim) = data.shape();
    let k_dim = candidate.rank();
    let (w, h) = (candidate.w(), candidate.h());

    let mut total = 0.0;
    for f in 0..f_dim {
        for n in 0..n_dim {
            let x = target[[f, n]];
            let vt = anchor.v[[f, n]];
            // Validates x and v~ against the domain once per entry.
            let split = split_divergence(x, vt, beta)?;

            let mut jensen = 0.0;
            let mut model = kappa;
            for k in 0..k_dim {
                let wh = w[[f, k]] * h[[k, n]];
                model += wh;
                let lambda = anchor.w[[f, k]] * anchor.h[[k, n]] / vt;
                jensen += lambda * convex_part(x, wh / lambda, beta);
            }
            if kappa > 0.0 {
                jensen += (kappa / vt) * split.convex;
            }
            let tangent = split.concave + concave_slope(x, vt, beta) * (model - vt);
            total += jensen + tangent + split.constant;
        }
    }
    Ok(total)
}

fn check_compatible(data: &DataMatrix, candidate: &FactorPair, anchor: &MajorizerAnchor) -> Result<()> {
    check_shape("candidate W", anchor.w.dim(), candidate.w().dim())?;
    check_shape("candidate H", anchor.h.dim(), candidate.h().dim())?;
    check_shape("anchor product", data.shape(), anchor.v.dim())
}

/// Default relative step for [`aux_partial_gradient_fd`].
pub const FD_STEP: f64 = 1e-6;

/// Central finite-difference estimate of `(dG/dW, dG/dH)` at `candidate`.
///
/// Entry `x` is perturbed by `step * max(1, |x|)`.
pub fn aux_partial_gradient_fd(
    data: &DataMatrix,
    candidate: &FactorPair,
    anchor: &MajorizerAnchor,
    beta: f64,
    step: f64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    check_compatible(data, candidate, anchor)?;
    let (w0, h0) = (candidate.w(), candidate.h());

    let mut grad_w = Array2::zeros(w0.raw_dim());
    for idx in ndarray::indices(w0.dim()) {
        let x = w0[idx];
        let delta = step * x.abs().max(1.0);
        let eval = |value: f64| -> Result<f64> {
            let mut w = w0.clone();
            w[idx] = value;
            aux_value(data, &FactorPair::from_parts(w, h0.clone()), anchor, beta)
        };
        grad_w[idx] = (eval(x + delta)? - eval(x - delta)?) / (2.0 * delta);
    }

    let mut grad_h = Array2::zeros(h0.raw_dim());
    for idx in ndarray::indices(h0.dim()) {
        let x = h0[idx];
        let delta = step * x.abs().max(1.0);
        let eval = |value: f64| -> Result<f64> {
            let mut h = h0.clone();
            h[idx] = value;
            aux_value(data, &FactorPair::from_parts(w0.clone(), h), anchor, beta)
        };
        grad_h[idx] = (eval(x + delta)? - eval(x - delta)?) / (2.0 * delta);
    }
    Ok((grad_w, grad_h))
}

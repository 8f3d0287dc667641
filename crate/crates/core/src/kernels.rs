//! Guarded elementwise kernels shared by the update rules.

use ndarray::{Array2, ArrayView2, Axis, Zip};

use crate::error::{check_shape, Result};

/// Default lower bound applied to update denominators.
pub const DEFAULT_FLOOR: f64 = 1e-300;

/// Entrywise `numerator / max(denominator, floor)`, saturating at `f64::MAX`.
pub fn guarded_divide(
    numerator: ArrayView2<'_, f64>,
    denominator: ArrayView2<'_, f64>,
    floor: f64,
) -> Result<Array2<f64>> {
    check_shape("guarded_divide", numerator.dim(), denominator.dim())?;
    Ok(Zip::from(&numerator).and(&denominator).map_collect(|&n, &d| (n / d.max(floor)).min(f64::MAX)))
}

/// `WH + kappa`.
pub fn model_product(w: &Array2<f64>, h: &Array2<f64>, kappa: f64) -> Array2<f64> {
    let mut p = w.dot(h);
    if kappa != 0.0 {
        p.mapv_inplace(|x| x + kappa);
    }
    p
}

/// Entrywise power with the exponents that appear for `beta` in `{0, 1, 2}`
/// evaluated without `powf`.
pub(crate) fn pow_entrywise(m: ArrayView2<'_, f64>, exponent: f64) -> Array2<f64> {
    if exponent == 0.0 {
        Array2::ones(m.raw_dim())
    } else if exponent == 1.0 {
        m.to_owned()
    } else if exponent == -1.0 {
        m.mapv(f64::recip)
    } else if exponent == 2.0 {
        m.mapv(|x| x * x)
    } else if exponent == -2.0 {
        m.mapv(|x| (x * x).recip())
    } else {
        m.mapv(|x| x.powf(exponent))
    }
}

/// Which factor an update produces. Both are driven by the same F x N
/// intermediates; only the final contraction with the other factor differs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Side {
    W,
    H,
}

/// `M other^T` for a `W` update, `other^T M` for an `H` update.
pub(crate) fn side_product(side: Side, m: ArrayView2<'_, f64>, other: ArrayView2<'_, f64>) -> Array2<f64> {
    match side {
        Side::W => m.dot(&other.t()),
        Side::H => other.t().dot(&m),
    }
}

/// `1 other^T` (W update) or `other^T 1` (H update) without forming the
/// all-ones matrix: row sums of `H` or column sums of `W`, broadcast to the
/// shape of the updated factor.
pub(crate) fn side_ones_product(side: Side, other: ArrayView2<'_, f64>, n_fixed: usize) -> Array2<f64> {
    match side {
        Side::W => {
            let sums = other.sum_axis(Axis(1));
            let mut out = Array2::zeros((n_fixed, sums.len()));
            out.rows_mut().into_iter().for_each(|mut r| r.assign(&sums));
            out
        }
        Side::H => {
            let sums = other.sum_axis(Axis(0));
            let mut out = Array2::zeros((sums.len(), n_fixed));
            for (mut r, &s) in out.rows_mut().into_iter().zip(sums.iter()) {
                r.fill(s);
            }
            out
        }
    }
}

/// `base * (num / max(den, floor)) ^ gamma`.
pub(crate) fn multiplicative_step(
    base: ArrayView2<'_, f64>,
    num: &Array2<f64>,
    den: &Array2<f64>,
    gamma: f64,
    floor: f64,
) -> Array2<f64> {
    let zip = Zip::from(&base).and(num).and(den);
    if gamma == 1.0 {
        zip.map_collect(|&b, &n, &d| b * (n / d.max(floor)))
    } else if gamma == 0.5 {
        zip.map_collect(|&b, &n, &d| b * (n / d.max(floor)).sqrt())
    } else {
        zip.map_collect(|&b, &n, &d| b * (n / d.max(floor)).powf(gamma))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn guarded_divide_examples() {
        let f = DEFAULT_FLOOR;
        assert_eq!(guarded_divide(array![[4.0]].view(), array![[2.0]].view(), f).unwrap(), array![[2.0]]);
        let floored = guarded_divide(array![[1.0]].view(), array![[0.0]].view(), f).unwrap()[[0, 0]];
        assert!((floored - 1e300).abs() <= 1e300 * f64::EPSILON, "{floored}");
        assert_eq!(guarded_divide(array![[0.0]].view(), array![[0.0]].view(), f).unwrap(), array![[0.0]]);
        assert!(guarded_divide(array![[0.0]].view(), array![[0.0, 1.0]].view(), f).is_err());
    }

    #[test]
    fn guarded_divide_is_finite_on_extremes() {
        let num = array![[0.0, 1e308, f64::MIN_POSITIVE, 3.0]];
        let den = array![[0.0, 0.0, 1e-320, f64::MAX]];
        let out = guarded_divide(num.view(), den.view(), DEFAULT_FLOOR).unwrap();
        assert!(out.iter().all(|x| x.is_finite()), "{out:?}");
    }

    #[test]
    fn power_shortcuts_agree_with_powf() {
        let m = array![[0.3, 2.0], [5.0, 1.7]];
        for e in [0.0, 1.0, -1.0, 2.0, -2.0, 0.5, -0.7] {
            let fast = pow_entrywise(m.view(), e);
            let slow = m.mapv(|x| x.powf(e));
            for (a, b) in fast.iter().zip(slow.iter()) {
                assert!((a - b).abs() <= 1e-15 * b.abs(), "e={e}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn ones_product_matches_dense() {
        let w = array![[1.0, 2.0], [3.0, 4.0], [0.5, 0.25]];
        let h = array![[1.0, 2.0, 3.0, 4.0], [0.1, 0.2, 0.3, 0.4]];
        let ones = Array2::<f64>::ones((3, 4));
        assert_eq!(side_ones_product(Side::W, h.view(), 3), side_product(Side::W, ones.view(), h.view()));
        assert_eq!(side_ones_product(Side::H, w.view(), 4), side_product(Side::H, ones.view(), w.view()));
    }
}

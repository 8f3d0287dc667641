//! First-order optimality residuals, column matching between solutions and
//! the per-iteration operation-count model of JMM versus BMM.

use ndarray::{Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::data::{DataMatrix, FactorPair};
use crate::error::{check_shape, NmfError, Result};
use crate::kernels::{model_product, pow_entrywise};

/// Mean absolute violation of the KKT conditions for `W` and `H`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    pub res_w: f64,
    pub res_h: f64,
}

/// `res(W) = |min(W, grad_W)|_1 / (FK)` and `res(H) = |min(H, grad_H)|_1 / (KN)`
/// with the gradients of `D_beta(V + kappa | WH + kappa)`.
pub fn kkt_residuals(data: &DataMatrix, factors: &FactorPair, beta: f64) -> Result<KktResiduals> {
    check_shape("kkt", data.shape(), (factors.w().nrows(), factors.h().ncols()))?;
    let product = model_product(factors.w(), factors.h(), data.kappa());
    Ok(kkt_from_product(data.target(), &product, factors.w(), factors.h(), beta))
}

pub(crate) fn kkt_from_product(
    target: ArrayView2<'_, f64>,
    product: &Array2<f64>,
    w: &Array2<f64>,
    h: &Array2<f64>,
    beta: f64,
) -> KktResiduals {
    // (WH)^(beta-2) .* (WH - V); the shift cancels in the difference.
    let mut residual = pow_entrywise(product.view(), beta - 2.0);
    Zip::from(&mut residual).and(product).and(&target).for_each(|r, &p, &v| *r *= p - v);
    let grad_w = residual.dot(&h.t());
    let grad_h = w.t().dot(&residual);
    let violation = |x: &Array2<f64>, g: &Array2<f64>| -> f64 {
        Zip::from(x).and(g).fold(0.0, |acc, &a, &b| acc + a.min(b).abs()) / x.len() as f64
    };
    KktResiduals { res_w: violation(w, &grad_w), res_h: violation(h, &grad_h) }
}

/// Optimal pairing of the columns of two dictionaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMatch {
    /// Column `permutation[i]` of `b` is matched to column `i` of `a`.
    pub permutation: Vec<usize>,
    /// Largest relative l2 difference over matched pairs.
    pub mismatch: f64,
}

/// Largest rank solved by exhaustive search over permutations.
pub const EXHAUSTIVE_MATCH_LIMIT: usize = 8;

/// Matches columns of `b` to columns of `a` maximizing total cosine
/// similarity. Exhaustive for `K <= 8`, Hungarian algorithm beyond.
pub fn match_columns(a: &Array2<f64>, b: &Array2<f64>) -> Result<ColumnMatch> {
    check_shape("match_columns", a.dim(), b.dim())?;
    let k = a.ncols();
    if k == 0 {
        return Err(NmfError::Empty("no columns to match"));
    }
    let norms_a: Vec<f64> = a.columns().into_iter().map(|c| c.dot(&c).sqrt()).collect();
    let norms_b: Vec<f64> = b.columns().into_iter().map(|c| c.dot(&c).sqrt()).collect();
    if let Some(column) = norms_a.iter().chain(&norms_b).position(|&n| n == 0.0) {
        return Err(NmfError::ZeroColumn { column: column % k });
    }
    let similarity = Array2::from_shape_fn((k, k), |(i, j)| a.column(i).dot(&b.column(j)) / (norms_a[i] * norms_b[j]));
    let permutation = if k <= EXHAUSTIVE_MATCH_LIMIT {
        best_permutation_exhaustive(&similarity)
    } else {
        let cost = similarity.mapv(|s| -s);
        hungarian_min_cost(&cost)
    };
    let mismatch = permutation
        .iter()
        .enumerate()
        .map(|(i, &j)| {
            let diff = &a.column(i) - &b.column(j);
            diff.dot(&diff).sqrt() / norms_a[i]
        })
        .fold(0.0, f64::max);
    Ok(ColumnMatch { permutation, mismatch })
}

pub(crate) fn best_permutation_exhaustive(score: &Array2<f64>) -> Vec<usize> {
    let k = score.nrows();
    let mut current: Vec<usize> = (0..k).collect();
    let mut best = current.clone();
    let mut best_score = f64::NEG_INFINITY;
    permute(&mut current, 0, &mut |perm| {
        let s: f64 = perm.iter().enumerate().map(|(i, &j)| score[[i, j]]).sum();
        if s > best_score {
            best_score = s;
            best.copy_from_slice(perm);
        }
    });
    best
}

fn permute(items: &mut [usize], start: usize, visit: &mut impl FnMut(&[usize])) {
    if start == items.len() {
        visit(items);
        return;
    }
    for i in start..items.len() {
        items.swap(start, i);
        permute(items, start + 1, visit);
        items.swap(start, i);
    }
}

/// Minimum-cost perfect assignment on a square cost matrix (shortest
/// augmenting path formulation, O(K^3)). Returns `assignment[row] = col`.
pub(crate) fn hungarian_min_cost(cost: &Array2<f64>) -> Vec<usize> {
    let n = cost.nrows();
    // 1-based potentials; index 0 is the virtual source column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0;
        let mut min_to = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r0 = owner[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0;
            for col in 1..=n {
                if used[col] {
                    continue;
                }
                let reduced = cost[[r0 - 1, col - 1]] - u[r0] - v[col];
                if reduced < min_to[col] {
                    min_to[col] = reduced;
                    way[col] = col0;
                }
                if min_to[col] < delta {
                    delta = min_to[col];
                    col1 = col;
                }
            }
            for col in 0..=n {
                if used[col] {
                    u[owner[col]] += delta;
                    v[col] -= delta;
                } else {
                    min_to[col] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            owner[col0] = owner[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for col in 1..=n {
        assignment[owner[col] - 1] = col - 1;
    }
    assignment
}

/// Operation-count differences (BMM minus JMM, so positive means JMM does
/// less work) for one outer iteration with `L_W = L_H = L` sub-iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SavingsReport {
    pub mult_diff: i64,
    pub div_diff: i64,
    pub add_diff: i64,
}

/// Evaluates the savings model for the row matching `beta`: exact rows for
/// 0, 1 and 2, interval rows for `]1, 2[`, `> 2` and `< 1`.
///
/// The `< 1` division entry carries a factor `K` on `L (FK + KN)` that the
/// neighbouring rows lack. It is reproduced as published.
pub fn predicted_savings(f: usize, n: usize, k: usize, l: usize, beta: f64) -> SavingsReport {
    let (f, n, k, l) = (f as i64, n as i64, k as i64, l as i64);
    let fnk = f * n * k;
    let fk_kn = f * k + k * n;
    let shared_adds = (2 * l - 1) * f * n * (k - 1);
    let (mult_diff, div_diff, add_diff) = if beta == 0.0 {
        ((2 * l - 1) * fnk + 2 * l * f * n, 2 * (l - 1) * f * n - l * fk_kn, shared_adds)
    } else if beta == 1.0 {
        ((4 * l - 3) * fnk, (2 * l - 1) * f * n, (4 * l - 3) * fnk - (l - 1) * (f * n + fk_kn))
    } else if beta == 2.0 {
        ((2 * l - 1) * fnk, -l * fk_kn, shared_adds)
    } else if beta > 1.0 && beta < 2.0 {
        ((2 * l - 1) * fnk - l * fk_kn, -l * (2 * f * n - fk_kn), shared_adds)
    } else if beta > 2.0 {
        ((2 * l - 1) * (fnk + f * n), -l * fk_kn, shared_adds)
    } else {
        ((2 * l - 1) * fnk, -l * k * fk_kn - f * n, shared_adds)
    };
    SavingsReport { mult_diff, div_diff, add_diff }
}

use ndarray::{Array2, ArrayView2};

use crate::error::{NmfError, Result};

/// Nonnegative observation matrix `V` (F x N) with an optional shift `kappa`.
///
/// Solvers work on `V + kappa` against the model `WH + kappa`; the shifted
/// copy is materialized once when `kappa > 0`.
#[derive(Debug, Clone)]
pub struct DataMatrix {
    values: Array2<f64>,
    kappa: f64,
    shifted: Option<Array2<f64>>,
}

impl DataMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(NmfError::Empty("data matrix has no entries"));
        }
        for ((row, column), &value) in values.indexed_iter() {
            if !value.is_finite() {
                return Err(NmfError::NonFinite { row, column });
            }
            if value < 0.0 {
                return Err(NmfError::Negative { row, column, value });
            }
        }
        Ok(Self { values, kappa: 0.0, shifted: None })
    }

    pub fn with_kappa(mut self, kappa: f64) -> Result<Self> {
        if !kappa.is_finite() || kappa < 0.0 {
            return Err(NmfError::Config(format!("kappa must be finite and >= 0, got {kappa}")));
        }
        self.kappa = kappa;
        self.shifted = (kappa > 0.0).then(|| self.values.mapv(|v| v + kappa));
        Ok(self)
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// `V + kappa`, the matrix every update and objective actually sees.
    pub fn target(&self) -> ArrayView2<'_, f64> {
        self.shifted.as_ref().unwrap_or(&self.values).view()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn has_zeros(&self) -> bool {
        self.values.iter().any(|&v| v == 0.0)
    }

    pub fn mean(&self) -> f64 {
        self.values.mean().unwrap_or(0.0)
    }

    /// Shift used when none is configured: none for `beta` in `[1, 2]` on
    /// zero-free data, `1e-9 * mean(V)` otherwise.
    pub fn default_kappa(&self, beta: f64) -> f64 {
        if (1.0..=2.0).contains(&beta) && !self.has_zeros() {
            0.0
        } else {
            let mean = self.mean();
            if mean > 0.0 {
                1e-9 * mean
            } else {
                1e-9
            }
        }
    }

    /// Divergences with `beta < 1` are undefined on zero data unless shifted.
    pub fn check_beta_domain(&self, beta: f64) -> Result<()> {
        if beta < 1.0 && self.kappa == 0.0 && self.has_zeros() {
            return Err(NmfError::Domain(format!(
                "data contains zeros and beta = {beta} < 1; a positive kappa shift is required"
            )));
        }
        Ok(())
    }
}

/// Factors `W` (F x K) and `H` (K x N), all entries strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPair {
    w: Array2<f64>,
    h: Array2<f64>,
}

impl FactorPair {
    pub fn new(w: Array2<f64>, h: Array2<f64>) -> Result<Self> {
        if w.ncols() != h.nrows() {
            return Err(NmfError::Shape {
                context: "factor pair rank",
                expected: (w.ncols(), h.ncols()),
                got: h.dim(),
            });
        }
        if w.is_empty() || h.is_empty() {
            return Err(NmfError::Empty("factor with no entries"));
        }
        check_positive("W", &w)?;
        check_positive("H", &h)?;
        Ok(Self { w, h })
    }

    /// Skips validation; used by solver internals whose updates preserve
    /// positivity by construction.
    pub(crate) fn from_parts(w: Array2<f64>, h: Array2<f64>) -> Self {
        debug_assert_eq!(w.ncols(), h.nrows());
        Self { w, h }
    }

    pub fn w(&self) -> &Array2<f64> {
        &self.w
    }

    pub fn h(&self) -> &Array2<f64> {
        &self.h
    }

    pub fn rank(&self) -> usize {
        self.w.ncols()
    }

    pub fn into_parts(self) -> (Array2<f64>, Array2<f64>) {
        (self.w, self.h)
    }
}

pub(crate) fn check_positive(name: &str, m: &Array2<f64>) -> Result<()> {
    match m.indexed_iter().find(|(_, &x)| !(x > 0.0 && x.is_finite())) {
        Some(((r, c), &x)) => {
            Err(NmfError::Domain(format!("{name}[{r}, {c}] = {x}; factors must be strictly positive and finite")))
        }
        None => Ok(()),
    }
}

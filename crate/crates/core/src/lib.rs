//! Beta-divergence nonnegative matrix factorization with block (BMM) and
//! joint (JMM) majorization-minimization multiplicative updates.
//!
//! ```
//! use betanmf_core::{fit, low_rank_data, Algorithm, SolverConfig, SyntheticSpec};
//!
//! let (data, _) = low_rank_data(SyntheticSpec { rows: 30, cols: 20, rank: 3, noise: 0.05 }, 1);
//! let result = fit(&data, &SolverConfig::new(1.0, 3, Algorithm::Jmm)).unwrap();
//! assert!(result.final_objective < result.trace[0].objective);
//! ```

pub mod data;
pub mod diagnostics;
pub mod divergence;
pub mod error;
pub mod harness;
pub mod io;
pub mod kernels;
pub mod majorizer;
pub mod solver;
pub mod synthetic;
pub mod updates;
pub mod verify;

pub use data::{DataMatrix, FactorPair};
pub use diagnostics::{kkt_residuals, match_columns, predicted_savings, ColumnMatch, KktResiduals, SavingsReport};
pub use divergence::{beta_divergence, gamma_exponent, objective, BetaParam};
pub use error::{NmfError, Result};
pub use harness::{run_bench, summarize, BenchConfig, BenchReport, Summary};
pub use io::{load_matrix, save_factors, save_trace, FormatKind, MatrixFormat};
pub use kernels::{guarded_divide, model_product};
pub use majorizer::{aux_value, split_divergence, DivergenceSplit, MajorizerAnchor};
pub use solver::{
    fit, fit_from, init_factors, normalize, run_bmm, run_jmm, should_stop, FitResult, OpCounts, SolverConfig,
    Termination, TraceRow,
};
pub use synthetic::{low_rank_data, SyntheticSpec};
pub use updates::{
    bmm_update_h, bmm_update_w, chi1, chi2, fast_path_update_h, jmm_update_h, jmm_update_w, Algorithm, JmmStep,
    KernelOptions, UpdateBasis,
};
pub use verify::{run_all, Suite, VerifyOptions, VerifyReport};

"""Sparse multitask linear regression with correlated-noise estimation.

The central estimator fits row-sparse coefficients jointly with the noise
co-standard-deviation matrix from repeated measurements of the same signal,
by block coordinate descent with duality-gap certificates.  Companion
solvers (averaged-observation concomitant, plain multitask lasso, smoothed
maximum-likelihood variants, and a graphical-lasso-regularized variant)
share the same engine for benchmarking, and a synthetic-data harness sweeps
regularization grids into ROC/AUC support-recovery tables.
"""

from .exceptions import (ClarError, DegenerateDesign, InternalError,
                         InvalidInput, NumericalFailure)
from .model import (Coefficients, CoStdMatrix, DesignMatrix,
                    RepeatedObservations, SolverConfig, default_sigma_min,
                    l21_norm, objective_clar, preprocess_rescale,
                    residual_gram, snr)
from .spectral import (SingularDecomposition, SmoothingReport,
                       SpectralDecomposition, cl, proj_schatten_1_ball,
                       proj_schatten_2_ball, proj_schatten_inf_ball,
                       smoothed_schatten1, smoothed_schatten2,
                       smoothed_schatten_inf, smoothed_trace_reg,
                       smoothing_report_schatten1,
                       smoothing_report_trace_reg, spcl, svd, sym_eig)
from .duality import (DualPoint, check_feasible, dual_from_residuals,
                      dual_objective, duality_gap, mtl_dual_objective,
                      mtl_dual_point)
from .solvers import (ESTIMATOR_NAMES, EstimatorKind, SolveResult, bst,
                      glasso, lambda_max_clar, lambda_max_for, solve,
                      solve_clar, solve_mle, solve_mler, solve_mrcer,
                      solve_mtl, solve_sgcl, update_beta_row_clar,
                      update_s_clar)
from .simulate import (SimConfig, SimInstance, covariance_study, generate,
                       toeplitz_corr)
from .bench import (EstimatorReport, GridSpec, RocCurve, compare_estimators,
                    lambda_grid, median_auc_over_seeds, roc_sweep,
                    support_metrics)
from .io import (MatrixFile, RunManifest, read_manifest, read_matrix,
                 read_observations, write_manifest, write_matrix,
                 write_observations)

__version__ = "0.1.0"

__all__ = [
    "ClarError", "DegenerateDesign", "InternalError", "InvalidInput",
    "NumericalFailure",
    "Coefficients", "CoStdMatrix", "DesignMatrix", "RepeatedObservations",
    "SolverConfig", "default_sigma_min", "l21_norm", "objective_clar",
    "preprocess_rescale", "residual_gram", "snr",
    "SingularDecomposition", "SmoothingReport", "SpectralDecomposition",
    "cl", "proj_schatten_1_ball", "proj_schatten_2_ball",
    "proj_schatten_inf_ball", "smoothed_schatten1", "smoothed_schatten2",
    "smoothed_schatten_inf", "smoothed_trace_reg",
    "smoothing_report_schatten1", "smoothing_report_trace_reg", "spcl",
    "svd", "sym_eig",
    "DualPoint", "check_feasible", "dual_from_residuals", "dual_objective",
    "duality_gap", "mtl_dual_objective", "mtl_dual_point",
    "ESTIMATOR_NAMES", "EstimatorKind", "SolveResult", "bst", "glasso",
    "lambda_max_clar", "lambda_max_for", "solve", "solve_clar", "solve_mle",
    "solve_mler", "solve_mrcer", "solve_mtl", "solve_sgcl",
    "update_beta_row_clar", "update_s_clar",
    "SimConfig", "SimInstance", "covariance_study", "generate",
    "toeplitz_corr",
    "EstimatorReport", "GridSpec", "RocCurve", "compare_estimators",
    "lambda_grid", "median_auc_over_seeds", "roc_sweep", "support_metrics",
    "MatrixFile", "RunManifest", "read_manifest", "read_matrix",
    "read_observations", "write_manifest", "write_matrix",
    "write_observations",
    "__version__",
]

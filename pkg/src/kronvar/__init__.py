"""Online learning of Kronecker-sum structured product graphs.

Streams of ``N x F`` observations are modelled by a first-order vector
autoregression whose coefficient matrix is the sum of a diagonal part, a
feature graph acting on every node and a node graph acting on every feature,
optionally on top of a periodic trend.
"""

from .basis import (BasisClass, BasisIndex, GraphDims, StructuredCoef, apply_structured,
                    assemble, basis_index, basis_inner, basis_inner_all, basis_norm_sq,
                    ivec, project, svec, unsvec, vec)
from .covariance import CovState, residual_cov, update_augmented, update_stationary
from .homotopy import (ActiveSetState, BigGram, HomotopyAbort, ResponseTile,
                       build_big_gram, data_path, init_state, lambda_step, online_step,
                       reg_path, warm_start)
from .lasso_batch import BatchProblem, SolverReport, kkt_residual, objective, solve_batch
from .model import TrueModel, random_true_model, simulate
from .ols_wald import (WaldEstimate, chi2_quantile, projected_ols, sparsify, wald_sigma,
                       wald_statistic)

__version__ = "0.1.0"

import numpy as np
import pytest

from kronvar.basis import GraphDims
from kronvar.model import random_true_model, simulate


def random_stream(N, F, M=1, t=100, seed=0, **kw):
    """True model and a simulated stream ``x_0 .. x_t``."""
    dims = GraphDims(N, F, M)
    model = random_true_model(dims, seed=[seed, 0], **kw)
    X = simulate(model, t, seed=[seed, 1])
    return model, X


def random_structured_matrix(dims, rng):
    """Dense matrix of a random element of the structured family."""
    from kronvar.basis import StructuredCoef, assemble, unsvec
    S = StructuredCoef(rng.standard_normal((dims.n_nodes, dims.n_features)),
                       unsvec(rng.standard_normal(dims.n_feature_pairs), dims.n_features),
                       unsvec(rng.standard_normal(dims.n_node_pairs), dims.n_nodes))
    return S, assemble(S)


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


def online_run(N, F, M, steps, seed=0, lam0=0.03, t0=20, eta=5e-6, **model_kw):
    """Yield ``(state, gram, cov, info)`` after every online step of a fresh run."""
    from kronvar.covariance import CovState
    from kronvar.homotopy import online_step, warm_start
    dims = GraphDims(N, F, M)
    model = random_true_model(dims, seed=[seed, 0], **model_kw)
    X = simulate(model, t0 + steps, seed=[seed, 1])
    cov = CovState.from_stream(X[:t0 + 1], dims, "augmented" if M > 1 else "stationary")
    state, gram = warm_start(cov, lam0)
    for s in range(t0 + 1, t0 + steps + 1):
        info = online_step(state, gram, cov, X[s], eta)
        yield state, gram, cov, info


def compare_with_batch(state, cov, tol=1e-10):
    """Relative Frobenius error, support agreement and batch report at the state's level."""
    from kronvar.basis import assemble
    from kronvar.lasso_batch import BatchProblem, solve_batch
    S, rep = solve_batch(BatchProblem.from_cov(cov, state.lam), tol=tol)
    est = state.estimate()
    A, B = assemble(est), assemble(S)
    rel = np.linalg.norm(A - B) / max(np.linalg.norm(B), 1e-300)
    return rel, bool(np.array_equal(est.a_n != 0, S.a_n != 0)), rep

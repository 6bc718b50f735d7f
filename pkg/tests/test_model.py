import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import solve_discrete_lyapunov

from kronvar.basis import GraphDims, StructuredCoef, assemble
from kronvar.model import TrueModel, default_burn_in, phase_of, random_true_model, simulate


def _model(dims, A_coef, trend=None, noise=0.0):
    nf = dims.nf
    trend = np.zeros((dims.period, nf)) if trend is None else trend
    return TrueModel(dims, A_coef, trend, noise * np.eye(nf) if noise else 1e-300 * np.eye(nf))


def test_target_norm_exact():
    for seed in range(5):
        m = random_true_model(GraphDims(6, 3, 4), target_norm=0.7, seed=seed)
        assert abs(np.linalg.svd(m.matrix, compute_uv=False)[0] - 0.7) < 1e-10


def test_full_density_has_no_structural_zeros():
    m = random_true_model(GraphDims(6, 2), edge_density=1.0, seed=3)
    off = m.coef.a_n[np.triu_indices(6, 1)]
    assert np.all(off != 0)


def test_deterministic_for_fixed_seed():
    a = random_true_model(GraphDims(5, 3, 6), seed=11)
    b = random_true_model(GraphDims(5, 3, 6), seed=11)
    assert np.array_equal(a.matrix, b.matrix) and np.array_equal(a.trend, b.trend)
    assert np.array_equal(simulate(a, 50, seed=1), simulate(b, 50, seed=1))


def test_invalid_arguments():
    with pytest.raises(ValueError):
        random_true_model(GraphDims(3, 2), target_norm=1.0)
    with pytest.raises(ValueError):
        random_true_model(GraphDims(3, 2), target_norm=0.0)


def test_zero_model_stays_at_zero():
    dims = GraphDims(3, 2)
    X = simulate(_model(dims, StructuredCoef.zeros(dims)), 30, seed=0)
    assert np.max(np.abs(X)) < 1e-140


def test_pure_trend_is_reproduced_exactly():
    dims = GraphDims(3, 2, 5)
    trend = np.random.default_rng(0).standard_normal((5, 6))
    X = simulate(_model(dims, StructuredCoef.zeros(dims), trend), 23, seed=0)
    assert np.max(np.abs(X - trend[np.arange(24) % 5])) < 1e-140
    assert np.max(np.abs(X[:-5] - X[5:])) < 1e-140


def test_stationary_covariance_matches_lyapunov():
    dims = GraphDims(3, 2)
    m = random_true_model(dims, target_norm=0.5, noise_scale=1.0, seed=4)
    X = simulate(m, 50_000, seed=5, burn_in=500)
    A = m.matrix
    G0 = solve_discrete_lyapunov(A, m.noise_cov)
    emp = X.T @ X / len(X)
    assert np.linalg.norm(emp - G0) / np.linalg.norm(G0) < 0.05


def test_lag_ratio_converges_to_coefficient():
    dims = GraphDims(10, 4)
    t = 20 * dims.nf ** 2
    errs = []
    for seed in range(3):
        m = random_true_model(dims, seed=[8, seed])
        X = simulate(m, t, seed=[9, seed])
        A_hat = (X[1:].T @ X[:-1]) @ np.linalg.inv(X[:-1].T @ X[:-1])
        errs.append(np.linalg.norm(A_hat - m.matrix) / np.linalg.norm(m.matrix))
    assert np.mean(errs) < 0.1


def test_uniform_noise_and_burn_in():
    m = random_true_model(GraphDims(3, 2), seed=1)
    assert default_burn_in(m) == int(np.ceil(10 / (1 - m.spectral_norm)))
    X = simulate(m, 40, seed=2, noise="uniform")
    assert X.shape == (41, 6) and np.all(np.isfinite(X))
    with pytest.raises(ValueError):
        simulate(m, 10, noise="cauchy")


def test_json_round_trip():
    m = random_true_model(GraphDims(3, 2, 4), seed=2)
    r = TrueModel.from_json(m.to_json())
    assert np.array_equal(r.matrix, m.matrix) and np.array_equal(r.trend, m.trend)


def test_phase_of_negative_times():
    assert phase_of(-1, 12) == 11
    assert phase_of(-13, 12) == 11
    assert phase_of(25, 12) == 1


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 5), st.integers(1, 4), st.integers(1, 6), st.floats(0.1, 0.95),
       st.integers(0, 10_000))
def test_model_invariants(N, F, M, norm, seed):
    m = random_true_model(GraphDims(N, F, M), target_norm=norm, seed=seed)
    assert abs(m.spectral_norm - norm) < 1e-10
    assert np.allclose(m.noise_cov, m.noise_cov.T)
    assert np.all(np.linalg.eigvalsh(m.noise_cov) > 0)
    assert m.trend.shape == (M, N * F)
    assert np.array_equal(assemble(m.coef), m.matrix)

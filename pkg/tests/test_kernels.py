import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kronvar import _kernels
from kronvar.basis import GraphDims, basis_pattern

pytestmark = pytest.mark.skipif(_kernels.numba_impl is None, reason="numba unavailable")

IMPLS = (_kernels.numpy_impl, _kernels.numba_impl)


def both(name, *args):
    out = []
    for impl in IMPLS:
        copied = [a.copy() if isinstance(a, np.ndarray) and a.flags.writeable else a
                  for a in args]
        res = getattr(impl, name)(*copied)
        out.append(copied if res is None else res)
    return out


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 6), st.integers(1, 5), st.integers(0, 10_000))
def test_pattern_kernels_agree(N, F, seed):
    rng = np.random.default_rng(seed)
    pat = basis_pattern(GraphDims(N, F))
    nf, K = N * F, pat.n_basis
    B = rng.standard_normal((nf, nf))
    G = B @ B.T
    a, b = both("inner_all", B, pat.pk, pat.pj, pat.pv, K)
    assert np.allclose(a, b, atol=1e-13)
    a_s = rng.standard_normal(K)
    a, b = both("assemble", a_s, pat.pk, pat.pj, pat.pv)
    assert np.allclose(a, b, atol=1e-13)
    x = rng.standard_normal(nf)
    a, b = both("tile", x, pat.pk, pat.pj, pat.pv, K)
    assert np.allclose(a, b, atol=1e-13)
    a, b = both("big_gram", G, pat.pk, pat.pj, pat.pv, K)
    assert np.allclose(a, b, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 6), st.integers(1, 4), st.integers(0, 10_000))
def test_wald_kernel_agrees(N, F, seed):
    rng = np.random.default_rng(seed)
    nf = N * F
    A, B = rng.standard_normal((2, nf, nf))
    S, Gi = A @ A.T, B @ B.T
    r, c = np.triu_indices(N, 1)
    sel = rng.permutation(len(r))[:max(1, len(r) // 2)]
    n1, n2 = r[sel].astype(np.int64), c[sel].astype(np.int64)
    a, b = both("wald_sigma", S, Gi, n1, n2, N, F)
    assert np.allclose(a, b, atol=1e-12)


def test_update_kernels_agree(rng):
    pat = basis_pattern(GraphDims(4, 3))
    K = pat.n_basis
    M = rng.standard_normal((K, K))
    u = rng.standard_normal(K)
    (a, *_), (b, *_) = both("sym_rank1", M, u, 0.3)
    assert np.allclose(a, b, atol=1e-13)
    assert np.allclose(a, M - 0.3 * np.outer(u, u), atol=1e-13)
    q0, g1 = rng.standard_normal((K, K)), rng.standard_normal(K)
    kk, vals = pat.pk[5].astype(np.int64), pat.pv[5] * 1.7
    (qa, ga, *_), (qb, gb, *_) = both("fold_column", q0, g1, kk, vals, 0.4, 0.25)
    assert np.allclose(qa, qb, atol=1e-13) and np.allclose(ga, gb, atol=1e-13)


def test_env_flag_selects_numpy():
    code = "from kronvar import _kernels; print(_kernels.impl.name)"
    env = dict(os.environ, KRONVAR_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                         text=True, check=True)
    assert out.stdout.strip() == "numpy"
    env["KRONVAR_DISABLE_NUMBA"] = "0"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                         text=True, check=True)
    assert out.stdout.strip() == "numba"


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 5), st.integers(1, 3), st.integers(0, 10_000), st.sampled_from([0.0, 0.02]))
def test_path_column_kernel_agrees(N, F, seed, lam):
    rng = np.random.default_rng(seed)
    dims = GraphDims(N, F)
    pat = basis_pattern(dims)
    K, k0 = pat.n_basis, dims.node_offset
    B = rng.standard_normal((K, K + 3))
    q0, g1 = B @ B.T / K, rng.standard_normal(K) * 0.1
    nodes = k0 + np.flatnonzero(rng.random(K - k0) < 0.5)
    act = np.concatenate([np.arange(k0), nodes]).astype(np.int64)
    inact = np.setdiff1d(np.arange(k0, K), nodes).astype(np.int64)
    signs = np.concatenate([np.zeros(k0), rng.choice([-1.0, 1.0], len(nodes))])
    hinv = np.linalg.inv(q0[np.ix_(act, act)])
    xcol = np.zeros(K)
    xcol[pat.pk[0]] = pat.pv[0] * rng.standard_normal()
    args = (q0, g1, hinv, act, signs, inact, xcol, float(rng.standard_normal()), lam, k0,
            0.0, 0.05, -1, np.nan)
    a, b = both("path_column", *args)
    assert a[0] == b[0] and a[2:4] == b[2:4]
    assert abs(a[1] - b[1]) <= 1e-12 * max(abs(a[1]), 1.0)
    assert abs(a[4] - b[4]) <= 1e-12 * max(abs(a[4]), 1.0)
    assert np.allclose(a[5], b[5], atol=1e-12)

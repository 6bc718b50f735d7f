"""Time the numba kernels against the numpy fallback.

Run with ``python3 benchmarks/bench_kernels.py [N F]``.  Each kernel is
called once to trigger compilation, then timed over repeated calls; the
end-to-end online update is timed with each implementation selected.
"""
import sys
import time

import numpy as np

from kronvar import _kernels
from kronvar.basis import GraphDims, basis_pattern
from kronvar.covariance import CovState
from kronvar.homotopy import ResponseTile, online_step, warm_start
from kronvar.model import random_true_model, simulate


def best_of(fn, repeat=5, number=20):
    fn()
    best = np.inf
    for _ in range(repeat):
        tic = time.perf_counter()
        for _ in range(number):
            fn()
        best = min(best, (time.perf_counter() - tic) / number)
    return best


def kernel_cases(dims, cov, state, gram):
    pat = basis_pattern(dims)
    K = pat.n_basis
    G = cov.gamma0
    x = cov.x_last
    tl = ResponseTile(x, x, None)
    kk, vv = tl.columns(dims)
    xcol = np.zeros(K)
    xcol[kk[0]] = vv[0]
    n1, n2 = np.triu_indices(dims.n_nodes, 1)
    n1, n2 = n1[:20].astype(np.int64), n2[:20].astype(np.int64)
    H = state.hinv.copy()
    u = np.ones(H.shape[0]) * 1e-3
    q0, g1 = gram.q0.copy(), gram.g1.copy()
    return {
        "inner_all": lambda k: k.inner_all(G, pat.pk, pat.pj, pat.pv, K),
        "tile": lambda k: k.tile(x, pat.pk, pat.pj, pat.pv, K),
        "big_gram": lambda k: k.big_gram(G, pat.pk, pat.pj, pat.pv, K),
        "wald_sigma": lambda k: k.wald_sigma(G, cov.gamma0_inv, n1, n2,
                                             dims.n_nodes, dims.n_features),
        "sym_rank1": lambda k: k.sym_rank1(H, u, 0.0),
        "fold_column": lambda k: k.fold_column(q0, g1, kk[0], vv[0], 0.0, 0.0),
        "path_column": lambda k: k.path_column(
            gram.q0, gram.g1, state.hinv, state.active, state.signs, state.inactive(),
            xcol, 1.0, state.lam, dims.n_unpenalized, 0.0, 1.0 / cov.t, -1, np.nan),
    }


def online_rate(impl, dims, X, t0, steps):
    _kernels.impl = impl
    cov = CovState.from_stream(X[:t0 + 1], dims, "stationary")
    state, gram = warm_start(cov, 0.03)
    online_step(state, gram, cov, X[t0 + 1], 5e-6)
    walls = [online_step(state, gram, cov, X[s], 5e-6)["wall_time"]
             for s in range(t0 + 2, t0 + steps)]
    return float(np.median(walls))


def main(argv):
    N, F = (int(argv[0]), int(argv[1])) if len(argv) >= 2 else (20, 5)
    if _kernels.numba_impl is None:
        print("numba is not available; nothing to compare")
        return 1
    dims = GraphDims(N, F)
    t0, steps = 3 * dims.nf, 30
    X = simulate(random_true_model(dims, seed=1), t0 + steps, seed=2)
    cov = CovState.from_stream(X[:t0 + 1], dims, "stationary")
    state, gram = warm_start(cov, 0.03)
    print(f"N={N} F={F} |K|={dims.graph_param_count()} active={len(state.active)}")
    print(f"{'kernel':<14}{'numpy [us]':>12}{'numba [us]':>12}{'speedup':>10}")
    for name, call in kernel_cases(dims, cov, state, gram).items():
        a = best_of(lambda: call(_kernels.numpy_impl)) * 1e6
        b = best_of(lambda: call(_kernels.numba_impl)) * 1e6
        print(f"{name:<14}{a:12.1f}{b:12.1f}{a / b:10.1f}")
    saved = _kernels.impl
    try:
        a = online_rate(_kernels.numpy_impl, dims, X, t0, steps) * 1e3
        b = online_rate(_kernels.numba_impl, dims, X, t0, steps) * 1e3
    finally:
        _kernels.impl = saved
    print(f"{'online_step':<14}{a * 1e3:12.1f}{b * 1e3:12.1f}{a / b:10.1f}   (median)")
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))

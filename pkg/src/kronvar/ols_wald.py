"""Projected least squares with Wald-test sparsification of the node graph.

The unconstrained least-squares coefficient ``G1 G0^{-1}`` is projected onto
the structured family.  Node-graph entries are then tested for being zero in
groups: the ``p`` smallest-magnitude entries are tested jointly with a Wald
statistic, and the largest group that is not rejected is set to zero.  The
group size is found by bisection over ``p``.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from . import _kernels
from .basis import BasisIndex, StructuredCoef, project, svec, unsvec
from .covariance import residual_cov


def ols_estimate(cov):
    """Unconstrained least-squares coefficient ``G1 G0^{-1}``."""
    if not cov.ready:
        raise ValueError("gamma0 is not invertible yet")
    return cov.gamma1 @ cov.gamma0_inv


def projected_ols(cov):
    """Projection of the least-squares coefficient onto the structured family."""
    return project(ols_estimate(cov), cov.dims)


def chi2_quantile(dof, prob):
    """``prob`` quantile of the chi-squared distribution with ``dof`` degrees."""
    if dof <= 0 or not 0 < prob < 1:
        raise ValueError("need dof > 0 and 0 < prob < 1")
    return 2.0 * float(special.gammaincinv(dof / 2.0, prob))


def f_quantile(dfn, dfd, prob):
    """``prob`` quantile of the F distribution with ``(dfn, dfd)`` degrees."""
    if dfn <= 0 or dfd <= 0 or not 0 < prob < 1:
        raise ValueError("need positive degrees of freedom and 0 < prob < 1")
    return float(special.fdtri(dfn, dfd, prob))


def _node_pairs(dims, entries):
    n1 = np.empty(len(entries), dtype=np.int64)
    n2 = np.empty(len(entries), dtype=np.int64)
    r, c = np.triu_indices(dims.n_nodes, 1)
    for a, e in enumerate(entries):
        k = e.index if isinstance(e, BasisIndex) else int(e)
        p = k - dims.node_offset
        if not 0 <= p < dims.n_node_pairs:
            raise ValueError(f"basis index {k} is not a node-graph entry")
        n1[a], n2[a] = r[p], c[p]
    return n1, n2


def wald_sigma(cov, entries, sigma=None):
    """Asymptotic covariance of the selected node-graph entries.

    ``entries`` are node basis indices (ints or :class:`BasisIndex`).  The
    result is ``vec(U_k)^T (G0^{-1} (x) S) vec(U_k')`` for the innovation
    covariance ``S``, evaluated by index contraction.
    """
    if sigma is None:
        sigma = residual_cov(cov)
    n1, n2 = _node_pairs(cov.dims, entries)
    Sw = _kernels.impl.wald_sigma(np.ascontiguousarray(sigma),
                                  np.ascontiguousarray(cov.gamma0_inv),
                                  n1, n2, cov.dims.n_nodes, cov.dims.n_features)
    # symmetric in exact arithmetic; remove the rounding asymmetry
    return 0.5 * (Sw + Sw.T)


def _solve_psd(S, v):
    """Solve ``S z = v``; falls back to a small ridge when ``S`` is singular."""
    try:
        L = np.linalg.cholesky(S)
        if np.min(np.diag(L)) ** 2 > 1e-14 * np.max(np.diag(S)):
            z = np.linalg.solve(L.T, np.linalg.solve(L, v))
            return z, False
    except np.linalg.LinAlgError:
        pass
    scale = max(np.trace(S) / S.shape[0], 1e-300)
    return np.linalg.solve(S + 1e-10 * scale * np.eye(S.shape[0]), v), True


def wald_statistic(cov, entries, projected=None, sigma=None):
    """Wald statistic ``t a^T S_W^{-1} a`` for the selected node entries.

    Returns ``(statistic, ridge_used)``.
    """
    if projected is None:
        projected = projected_ols(cov)
    dims = cov.dims
    vals = svec(projected.a_n)
    idx = np.array([(e.index if isinstance(e, BasisIndex) else int(e)) for e in entries])
    a = vals[idx - dims.node_offset]
    Sw = wald_sigma(cov, entries, sigma)
    z, ridge = _solve_psd(Sw, a)
    return float(cov.t * (a @ z)), ridge


@dataclass(frozen=True, eq=False)
class WaldEstimate:
    """Result of :func:`sparsify`.

    Attributes
    ----------
    projected : StructuredCoef
        Projected least-squares estimate.
    estimate : StructuredCoef
        ``projected`` with the ``n_zeroed`` smallest node entries set to zero.
    n_zeroed : int
        Size of the largest accepted group.
    order : ndarray
        Node basis indices sorted by increasing magnitude.
    n_tests : int
        Number of Wald tests evaluated.
    ridge_used : bool
        Whether any test needed the ridge fallback.
    """

    projected: StructuredCoef
    estimate: StructuredCoef
    n_zeroed: int
    order: np.ndarray
    n_tests: int
    ridge_used: bool


def sparsify(cov, significance=0.1, use_f=False, projected=None):
    """Zero the largest group of small node entries not rejected by a Wald test.

    Parameters
    ----------
    cov : CovState
        State with an invertible ``gamma0``.
    significance : float
        Test level; a group is accepted when its statistic is at most the
        ``1 - significance`` quantile.
    use_f : bool
        Compare ``statistic / p`` with the F distribution with
        ``(p, t - NF - 1)`` degrees instead of the chi-squared law.
    """
    if not 0 < significance < 1:
        raise ValueError("significance must be in (0, 1)")
    dims = cov.dims
    if projected is None:
        projected = projected_ols(cov)
    n_pairs = dims.n_node_pairs
    vals = svec(projected.a_n)
    idx = np.arange(n_pairs) + dims.node_offset
    order = idx[np.lexsort((idx, np.abs(vals)))]
    if n_pairs == 0:
        return WaldEstimate(projected, projected, 0, order, 0, False)
    sigma = residual_cov(cov)
    dfd = cov.t - dims.nf - 1
    state = {"tests": 0, "ridge": False}

    def accepted(p):
        stat, ridge = wald_statistic(cov, order[:p], projected, sigma)
        state["tests"] += 1
        state["ridge"] |= ridge
        if use_f and dfd > 0:
            return stat / p <= f_quantile(p, dfd, 1 - significance)
        return stat <= chi2_quantile(p, 1 - significance)

    if not accepted(1):
        p0 = 0
    elif accepted(n_pairs):
        p0 = n_pairs
    else:
        lo, hi = 1, n_pairs
        while lo + 1 < hi:
            mid = (lo + hi) // 2
            if accepted(mid):
                lo = mid
            else:
                hi = mid
        p0 = lo
    new_vals = vals.copy()
    new_vals[order[:p0] - dims.node_offset] = 0.0
    estimate = StructuredCoef(projected.diag, projected.a_f, unsvec(new_vals, dims.n_nodes))
    return WaldEstimate(projected, estimate, p0, order, state["tests"], state["ridge"])


def n_bisection_tests(n_pairs):
    """Upper bound on the number of tests run by :func:`sparsify`."""
    return 2 + max(0, math.ceil(math.log2(max(n_pairs, 1))))

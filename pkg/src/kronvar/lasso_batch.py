"""Batch solver for the node-graph Lasso over the structured family.

The problem at a fixed time is

    min_A  1/2 <A G0, A> - <G1, A> + lam * F * ||A_N||_1

over structured ``A``, where ``||A_N||_1`` sums the absolute values of all
entries of the symmetric node graph.  In scaled basis coordinates ``a_s``
this is ``1/2 a_s^T Q a_s - g^T a_s + lam * sum_{node k} |a_s[k]|`` with
``Q[k, k'] = <U_k, U_k' G0>`` and ``g[k] = <U_k, G1>``.

The solver runs a monotone accelerated proximal gradient method whose step
is measured in the Frobenius metric of the dense matrices, which makes the
proximal map a soft-threshold of the node entries at ``step * lam``.  Once
the support has settled, the stationarity equations are solved exactly on
that support and the result is accepted if it satisfies the optimality
conditions to the requested tolerance.

All basis operations here go through a sparse operator built from Kronecker
products, independently of the index kernels used by the streaming code.
"""

import time
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .basis import GraphDims, StructuredCoef, assemble


@lru_cache(maxsize=32)
def _operator(N, F):
    """Sparse ``|K| x (NF)^2`` matrix whose row ``k`` is ``U_k`` flattened."""
    nf = N * F
    rows = [sp.csr_matrix(([1.0], ([0], [d * nf + d])), shape=(1, nf * nf))
            for d in range(nf)]
    eye_n, eye_f = sp.identity(N, format="csr"), sp.identity(F, format="csr")
    for f1, f2 in zip(*np.triu_indices(F, 1)):
        E = sp.csr_matrix(([1.0, 1.0], ([f1, f2], [f2, f1])), shape=(F, F))
        rows.append(sp.kron(E, eye_n, format="csr").reshape(1, nf * nf) / (2 * N))
    for n1, n2 in zip(*np.triu_indices(N, 1)):
        E = sp.csr_matrix(([1.0, 1.0], ([n1, n2], [n2, n1])), shape=(N, N))
        rows.append(sp.kron(eye_f, E, format="csr").reshape(1, nf * nf) / (2 * F))
    T = sp.vstack(rows, format="csr")
    norm_sq = np.asarray(T.multiply(T).sum(axis=1)).ravel()
    return T, norm_sq


def structured_gram(gamma0, dims):
    """``Q[k, k'] = <U_k, U_k' G0>`` computed with sparse Kronecker operators."""
    T, _ = _operator(dims.n_nodes, dims.n_features)
    nf, K = dims.nf, T.shape[0]
    stack = T.reshape(K * nf, nf)
    W = (stack @ sp.csr_matrix(gamma0)).reshape(K, nf * nf)
    Q = (W @ T.T).toarray()
    return 0.5 * (Q + Q.T)


def structured_inner(B, dims):
    """``<U_k, B>`` for all ``k`` via the sparse operator."""
    T, _ = _operator(dims.n_nodes, dims.n_features)
    return T @ np.asarray(B, dtype=float).ravel()


@dataclass(eq=False)
class BatchProblem:
    """Autocovariances and penalty level of one Lasso instance."""

    gamma0: np.ndarray
    gamma1: np.ndarray
    lam: float
    dims: GraphDims

    def __post_init__(self):
        nf = self.dims.nf
        self.gamma0 = np.asarray(self.gamma0, dtype=float)
        self.gamma1 = np.asarray(self.gamma1, dtype=float)
        if self.gamma0.shape != (nf, nf) or self.gamma1.shape != (nf, nf):
            raise ValueError(f"autocovariances must be {nf}x{nf}")
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ValueError("lam must be finite and non-negative")

    @property
    def scale_F(self):
        return self.dims.n_features

    @classmethod
    def from_cov(cls, cov, lam):
        return cls(cov.gamma0, cov.gamma1, lam, cov.dims)


@dataclass
class SolverReport:
    """Outcome of :func:`solve_batch`; ``history`` holds the objective of the
    retained iterate after every iteration."""

    iterations: int
    kkt_residual: float
    objective: float
    converged: bool
    polished: bool
    wall_time: float
    message: str = ""
    history: list = None


def _quadratic(p):
    Q = structured_gram(p.gamma0, p.dims)
    g = structured_inner(p.gamma1, p.dims)
    return Q, g


def objective(p, S, const=0.0):
    """``1/2 (<A G0, A> - 2 <G1, A> + const) + lam F ||A_N||_1``."""
    A = assemble(S)
    smooth = 0.5 * (np.sum((A @ p.gamma0) * A) - 2 * np.sum(p.gamma1 * A) + const)
    return float(smooth + p.lam * p.scale_F * np.abs(S.a_n).sum())


def kkt_residual_scaled(Q, g, a_s, lam, dims):
    """Optimality residual for scaled coefficients.

    Maximum over the stationarity error on diagonal, feature and non-zero
    node coordinates and the excess ``max(0, |g - Q a| - lam)`` on zero node
    coordinates.
    """
    r = g - Q @ a_s
    k0 = dims.node_offset
    out = np.abs(r[:k0]).max(initial=0.0)
    an = a_s[k0:]
    rn = r[k0:]
    act = an != 0
    if act.any():
        out = max(out, np.abs(rn[act] - lam * np.sign(an[act])).max())
    if (~act).any():
        out = max(out, np.maximum(np.abs(rn[~act]) - lam, 0.0).max())
    return float(out)


def kkt_residual(p, S, gram=None):
    """Optimality residual of ``S`` for problem ``p`` (see :func:`kkt_residual_scaled`)."""
    Q, g = gram if gram is not None else _quadratic(p)
    return kkt_residual_scaled(Q, g, S.to_scaled(), p.lam, p.dims)


def _polish(Q, g, z, lam, dims):
    """Solve the stationarity equations on the support and sign pattern of ``z``."""
    k0 = dims.node_offset
    support = np.concatenate([np.arange(k0), k0 + np.flatnonzero(z[k0:])])
    w = np.zeros(len(support))
    w[k0:] = np.sign(z[support[k0:]])
    try:
        a1 = np.linalg.solve(Q[np.ix_(support, support)], g[support] - lam * w)
    except np.linalg.LinAlgError:
        return None
    if np.any(np.sign(a1[k0:]) != w[k0:]):
        return None
    a = np.zeros_like(z)
    a[support] = a1
    return a


def solve_batch(p, tol=1e-10, max_iter=20000, init=None, polish=True):
    """Solve the Lasso instance ``p``.

    Parameters
    ----------
    p : BatchProblem
    tol : float
        Target for the optimality residual.
    max_iter : int
        Iteration cap of the proximal gradient loop.
    init : StructuredCoef, optional
        Starting point; zero by default.
    polish : bool
        Try the exact support solve when the iterates stall or every 25
        iterations.

    Returns
    -------
    StructuredCoef, SolverReport
    """
    t0 = time.perf_counter()
    dims = p.dims
    Q, g = _quadratic(p)
    _, D = _operator(dims.n_nodes, dims.n_features)
    k0 = dims.node_offset
    lam = p.lam
    tr = float(np.trace(p.gamma0))
    step = 1.0 / tr if tr > 0 else 1.0

    def smooth(a):
        return 0.5 * a @ (Q @ a) - g @ a

    def full(a):
        return smooth(a) + lam * np.abs(a[k0:]).sum()

    def prox(v, eta):
        out = v.copy()
        thr = eta * lam / D[k0:]
        out[k0:] = np.sign(v[k0:]) * np.maximum(np.abs(v[k0:]) - thr, 0.0)
        return out

    x = np.zeros(len(g)) if init is None else init.to_scaled()
    y = x.copy()
    fx = full(x)
    tk = 1.0
    it = 0
    polished = False
    history = [fx]
    res = kkt_residual_scaled(Q, g, x, lam, dims)
    converged = res <= tol
    while not converged and it < max_iter:
        it += 1
        grad = Q @ y - g
        fy = smooth(y)
        while True:
            z = prox(y - step * grad / D, step)
            d = z - y
            if smooth(z) <= fy + grad @ d + (d * D) @ d / (2 * step) + 1e-12 * abs(fy):
                break
            step *= 0.5
        fz = full(z)
        t_next = 0.5 * (1 + np.sqrt(1 + 4 * tk * tk))
        x_prev = x
        if fz <= fx:
            x, fx = z, fz
        y = x + (tk / t_next) * (z - x) + ((tk - 1) / t_next) * (x - x_prev)
        tk = t_next
        history.append(fx)
        stalled = (len(history) > 10
                   and abs(history[-11] - fx) <= tol * max(abs(fx), 1e-300))
        if it % 10 == 0 or stalled:
            res = kkt_residual_scaled(Q, g, x, lam, dims)
            if res <= tol:
                converged = True
                break
        if polish and (it % 25 == 0 or stalled):
            a = _polish(Q, g, x, lam, dims)
            if a is not None:
                r = kkt_residual_scaled(Q, g, a, lam, dims)
                if r <= tol:
                    x, res, converged, polished = a, r, True, True
                    break
        if stalled:
            res = kkt_residual_scaled(Q, g, x, lam, dims)
            break
    if not converged:
        res = kkt_residual_scaled(Q, g, x, lam, dims)
        converged = res <= tol
    S = StructuredCoef.from_scaled(x, dims)
    msg = "converged" if converged else ("stalled" if it < max_iter else "iteration cap")
    rep = SolverReport(it, res, float(full(x)), converged, polished,
                       time.perf_counter() - t0, msg, history)
    return S, rep

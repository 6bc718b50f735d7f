"""Synthetic ground-truth models and streams.

A stream follows ``x_s = b_{s mod M} + x'_s`` with the stable first-order
recursion ``x'_s = A x'_{s-1} + e_s``.  ``A`` is a random structured
coefficient matrix with a sparse node graph, rescaled to a target spectral
norm, and ``b`` is a per-phase trend built from one sinusoid plus an offset
for every (node, feature) series.
"""

import math
from dataclasses import dataclass

import numpy as np

from .basis import GraphDims, StructuredCoef, assemble, unsvec


@dataclass(frozen=True, eq=False)
class TrueModel:
    """Ground truth of a synthetic stream.

    Attributes
    ----------
    dims : GraphDims
    coef : StructuredCoef
        Structured coefficient matrix ``A``.
    trend : ndarray, shape (M, NF)
        Trend value of each phase (zero rows when ``M == 1`` and no trend).
    noise_cov : ndarray, shape (NF, NF)
        Innovation covariance.
    """

    dims: GraphDims
    coef: StructuredCoef
    trend: np.ndarray
    noise_cov: np.ndarray

    @property
    def matrix(self):
        return assemble(self.coef)

    @property
    def spectral_norm(self):
        return float(np.linalg.norm(self.matrix, 2))

    def to_json(self):
        return {"N": self.dims.n_nodes, "F": self.dims.n_features, "M": self.dims.period,
                "coef": self.coef.to_json(), "trend": self.trend.tolist(),
                "noise_cov": self.noise_cov.tolist()}

    @classmethod
    def from_json(cls, obj):
        dims = GraphDims(int(obj["N"]), int(obj["F"]), int(obj["M"]))
        return cls(dims, StructuredCoef.from_json(obj["coef"]),
                   np.asarray(obj["trend"], dtype=float),
                   np.asarray(obj["noise_cov"], dtype=float))


def random_true_model(dims, edge_density=0.2, value_scale=1.0, target_norm=0.8,
                      noise_scale=0.4, trend_scale=2.0, zero_node_graph=False,
                      seed=None):
    """Draw a random structured model.

    Parameters
    ----------
    dims : GraphDims
    edge_density : float
        Probability that a node pair carries an edge.
    value_scale : float
        Entries are drawn uniformly from ``[-value_scale, value_scale]``
        before rescaling.
    target_norm : float
        Spectral norm of ``A`` after rescaling; must be in ``(0, 1)``.
    noise_scale : float
        Innovation standard deviation (isotropic).
    trend_scale : float
        Scale of the sinusoid amplitudes and offsets; ignored when ``M == 1``.
    zero_node_graph : bool
        Force the node graph to zero.
    seed : int or Generator, optional
    """
    if not 0 < target_norm < 1:
        raise ValueError("target_norm must lie in (0, 1) for a stable model")
    if not 0 <= edge_density <= 1:
        raise ValueError("edge_density must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    N, F = dims.n_nodes, dims.n_features
    diag = rng.uniform(-value_scale, value_scale, (N, F))
    a_f = unsvec(rng.uniform(-value_scale, value_scale, dims.n_feature_pairs), F)
    vals = rng.uniform(-value_scale, value_scale, dims.n_node_pairs)
    vals[rng.random(dims.n_node_pairs) >= edge_density] = 0.0
    if zero_node_graph:
        vals[:] = 0.0
    a_n = unsvec(vals, N)
    coef = StructuredCoef(diag, a_f, a_n)
    norm = np.linalg.norm(assemble(coef), 2)
    if norm == 0:
        raise ValueError("drew an all-zero coefficient matrix")
    s = target_norm / norm
    coef = StructuredCoef(diag * s, a_f * s, a_n * s)
    M = dims.period
    if M > 1:
        amp = trend_scale * rng.uniform(0.5, 1.0, dims.nf)
        phase = rng.uniform(0, 2 * np.pi, dims.nf)
        offset = trend_scale * rng.uniform(-1.0, 1.0, dims.nf)
        m = np.arange(M)[:, None]
        trend = amp * np.sin(2 * np.pi * m / M + phase) + offset
    else:
        trend = np.zeros((1, dims.nf))
    noise_cov = noise_scale ** 2 * np.eye(dims.nf)
    return TrueModel(dims, coef, trend, noise_cov)


def default_burn_in(model):
    """``ceil(10 / (1 - ||A||_2))`` transient steps."""
    return int(math.ceil(10.0 / (1.0 - model.spectral_norm)))


def simulate(model, t_total, seed=None, burn_in=None, noise="gaussian"):
    """Simulate ``x_0 .. x_{t_total}`` (rows of the returned array).

    ``noise`` is ``"gaussian"`` or ``"uniform"``; uniform noise has the same
    covariance as the Gaussian one.
    """
    if t_total < 0:
        raise ValueError("t_total must be non-negative")
    rng = np.random.default_rng(seed)
    dims = model.dims
    A = model.matrix
    L = np.linalg.cholesky(model.noise_cov)
    if burn_in is None:
        burn_in = default_burn_in(model)
    n = burn_in + t_total + 1
    if noise == "gaussian":
        z = rng.standard_normal((n, dims.nf))
    elif noise == "uniform":
        z = rng.uniform(-math.sqrt(3.0), math.sqrt(3.0), (n, dims.nf))
    else:
        raise ValueError(f"unknown noise law {noise!r}")
    eps = z @ L.T
    xs = np.zeros(dims.nf)
    out = np.empty((t_total + 1, dims.nf))
    for s in range(n):
        xs = A @ xs + eps[s]
        if s >= burn_in:
            out[s - burn_in] = xs
    M = model.trend.shape[0]
    phases = np.arange(t_total + 1) % M
    return out + model.trend[phases]


def phase_of(t, M):
    """Phase of time index ``t``; non-negative for negative ``t`` too."""
    return ((t % M) + M) % M

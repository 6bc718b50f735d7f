"""Structured coefficient space of Kronecker-sum product graphs.

A coefficient matrix for ``N`` nodes and ``F`` features is an ``NF x NF``
matrix acting on ``vec(X)`` where ``X`` is the ``N x F`` observation and
``vec`` stacks columns, so ``vec(X)[f * N + n] == X[n, f]``.  The structured
family is

    A = diag(vec(D)) + A_F (x) I_N + I_F (x) A_N

with ``A_F`` (``F x F``) and ``A_N`` (``N x N``) symmetric and hollow.  It is
spanned by the orthogonal basis ``U_k`` ordered as

* diagonal elements ``E_{dd}`` in vec order,
* feature pairs ``(f1, f2)``, ``f1 < f2`` row-major, scaled by ``1/(2N)``,
* node pairs ``(n1, n2)``, ``n1 < n2`` row-major, scaled by ``1/(2F)``.

Two coordinate systems are used throughout.  :class:`StructuredCoef` holds
the entry values ``(D, A_F, A_N)``; the *scaled* vector ``a_s`` holds the
coefficients of ``A = sum_k a_s[k] U_k``, i.e. ``D`` entries, ``2N * A_F``
pair entries and ``2F * A_N`` pair entries.
"""

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from . import _kernels


class BasisClass(str, Enum):
    DIAG = "diag"
    FEATURE = "feature"
    NODE = "node"


@dataclass(frozen=True)
class GraphDims:
    """Graph dimensions.

    Parameters
    ----------
    n_nodes : int
        Number of nodes ``N``.
    n_features : int
        Number of features per node ``F``.
    period : int
        Trend period ``M``; ``1`` means no periodic trend is modelled.
    """

    n_nodes: int
    n_features: int
    period: int = 1

    def __post_init__(self):
        for name in ("n_nodes", "n_features", "period"):
            val = getattr(self, name)
            if not isinstance(val, (int, np.integer)) or val < 1:
                raise ValueError(f"{name} must be a positive integer, got {val!r}")

    @property
    def nf(self):
        return self.n_nodes * self.n_features

    @property
    def n_feature_pairs(self):
        return self.n_features * (self.n_features - 1) // 2

    @property
    def n_node_pairs(self):
        return self.n_nodes * (self.n_nodes - 1) // 2

    @property
    def feature_offset(self):
        return self.nf

    @property
    def node_offset(self):
        return self.nf + self.n_feature_pairs

    @property
    def n_unpenalized(self):
        """Number of diagonal plus feature basis elements."""
        return self.node_offset

    def graph_param_count(self):
        return self.nf + self.n_feature_pairs + self.n_node_pairs

    def total_param_count(self):
        """Graph parameters plus ``N * F * M`` trend values when ``M > 1``."""
        trend = self.nf * self.period if self.period > 1 else 0
        return self.graph_param_count() + trend

    def node_slice(self):
        return slice(self.node_offset, self.graph_param_count())


@dataclass(frozen=True)
class BasisIndex:
    """Position of one basis element.

    ``index`` is the 0-based linear position.  ``locator`` is ``(node,
    feature)`` for diagonal elements and the ordered pair ``(i, j)``, ``i < j``
    for feature and node elements.
    """

    index: int
    kind: BasisClass
    locator: tuple


def pair_index(i, j, n):
    """Row-major position of the pair ``(min, max)`` among ``n*(n-1)/2``."""
    a, b = (i, j) if i < j else (j, i)
    if a == b or a < 0 or b >= n:
        raise ValueError(f"invalid pair ({i}, {j}) for size {n}")
    return a * n - a * (a + 1) // 2 + (b - a - 1)


def basis_index(dims, k):
    """Return the :class:`BasisIndex` of linear position ``k``."""
    K = dims.graph_param_count()
    if not 0 <= k < K:
        raise IndexError(f"basis index {k} out of range [0, {K})")
    N, F = dims.n_nodes, dims.n_features
    if k < dims.nf:
        return BasisIndex(k, BasisClass.DIAG, (k % N, k // N))
    if k < dims.node_offset:
        r, c = np.triu_indices(F, 1)
        p = k - dims.feature_offset
        return BasisIndex(k, BasisClass.FEATURE, (int(r[p]), int(c[p])))
    r, c = np.triu_indices(N, 1)
    p = k - dims.node_offset
    return BasisIndex(k, BasisClass.NODE, (int(r[p]), int(c[p])))


def basis_indices(dims):
    return [basis_index(dims, k) for k in range(dims.graph_param_count())]


def node_basis_index(dims, n1, n2):
    return dims.node_offset + pair_index(n1, n2, dims.n_nodes)


def feature_basis_index(dims, f1, f2):
    return dims.feature_offset + pair_index(f1, f2, dims.n_features)


@dataclass(frozen=True, eq=False)
class BasisPattern:
    """Row-wise sparsity pattern of the whole basis for one ``(N, F)``."""

    dims: GraphDims
    pk: np.ndarray
    pj: np.ndarray
    pv: np.ndarray
    norm_sq: np.ndarray

    @property
    def n_basis(self):
        return self.norm_sq.shape[0]


@lru_cache(maxsize=64)
def _pattern(N, F):
    dims = GraphDims(N, F)
    nf = N * F
    R = N + F - 1
    pk = np.empty((nf, R), dtype=np.int64)
    pj = np.empty((nf, R), dtype=np.int64)
    pv = np.empty((nf, R))
    for i in range(nf):
        n, f = i % N, i // N
        pk[i, 0], pj[i, 0], pv[i, 0] = i, i, 1.0
        r = 1
        for g in range(F):
            if g == f:
                continue
            pk[i, r] = dims.feature_offset + pair_index(f, g, F)
            pj[i, r] = g * N + n
            pv[i, r] = 1.0 / (2 * N)
            r += 1
        for m in range(N):
            if m == n:
                continue
            pk[i, r] = dims.node_offset + pair_index(n, m, N)
            pj[i, r] = f * N + m
            pv[i, r] = 1.0 / (2 * F)
            r += 1
    norm_sq = np.concatenate([
        np.ones(nf),
        np.full(dims.n_feature_pairs, 1.0 / (2 * N)),
        np.full(dims.n_node_pairs, 1.0 / (2 * F)),
    ])
    for a in (pk, pj, pv, norm_sq):
        a.setflags(write=False)
    return BasisPattern(dims, pk, pj, pv, norm_sq)


def basis_pattern(dims):
    """Cached :class:`BasisPattern` for ``dims`` (the period is ignored)."""
    return _pattern(dims.n_nodes, dims.n_features)


# ---------------------------------------------------------------------------
# vec helpers

def vec(X):
    """Column-stacking vectorisation of an ``N x F`` array."""
    return np.asarray(X, dtype=float).reshape(-1, order="F")


def ivec(x, dims):
    """Inverse of :func:`vec`."""
    x = np.asarray(x, dtype=float)
    if x.shape != (dims.nf,):
        raise ValueError(f"expected vector of length {dims.nf}, got {x.shape}")
    return x.reshape(dims.n_nodes, dims.n_features, order="F")


def svec(S):
    """Strict upper triangle of a square matrix, row-major."""
    S = np.asarray(S)
    return S[np.triu_indices(S.shape[0], 1)]


def unsvec(v, n):
    """Symmetric hollow ``n x n`` matrix from its :func:`svec`."""
    v = np.asarray(v, dtype=float)
    if v.shape != (n * (n - 1) // 2,):
        raise ValueError(f"expected {n * (n - 1) // 2} pair values, got {v.shape}")
    S = np.zeros((n, n))
    r, c = np.triu_indices(n, 1)
    S[r, c] = v
    S[c, r] = v
    return S


# ---------------------------------------------------------------------------
# structured coefficients

@dataclass(frozen=True, eq=False)
class StructuredCoef:
    """Entry values of a structured coefficient matrix.

    Attributes
    ----------
    diag : ndarray, shape (N, F)
        Diagonal self-loop weights, ``diag[n, f]`` acts on ``X[n, f]``.
    a_f : ndarray, shape (F, F)
        Symmetric hollow feature graph.
    a_n : ndarray, shape (N, N)
        Symmetric hollow node graph.
    """

    diag: np.ndarray
    a_f: np.ndarray
    a_n: np.ndarray

    def __post_init__(self):
        diag = np.array(self.diag, dtype=float, ndmin=2)
        a_f = np.array(self.a_f, dtype=float, ndmin=2)
        a_n = np.array(self.a_n, dtype=float, ndmin=2)
        N, F = diag.shape
        if a_f.shape != (F, F) or a_n.shape != (N, N):
            raise ValueError("shapes of diag, a_f, a_n are inconsistent")
        for name, S in (("a_f", a_f), ("a_n", a_n)):
            if not np.array_equal(S, S.T):
                raise ValueError(f"{name} must be symmetric")
            if np.any(np.diag(S) != 0):
                raise ValueError(f"{name} must have a zero diagonal")
        object.__setattr__(self, "diag", diag)
        object.__setattr__(self, "a_f", a_f)
        object.__setattr__(self, "a_n", a_n)

    @property
    def n_nodes(self):
        return self.diag.shape[0]

    @property
    def n_features(self):
        return self.diag.shape[1]

    @property
    def dims(self):
        return GraphDims(self.n_nodes, self.n_features)

    @classmethod
    def zeros(cls, dims):
        return cls(np.zeros((dims.n_nodes, dims.n_features)),
                   np.zeros((dims.n_features,) * 2), np.zeros((dims.n_nodes,) * 2))

    def to_scaled(self):
        """Scaled basis coefficients ``a_s`` with ``A = sum_k a_s[k] U_k``."""
        N, F = self.n_nodes, self.n_features
        return np.concatenate([vec(self.diag), 2 * N * svec(self.a_f),
                               2 * F * svec(self.a_n)])

    @classmethod
    def from_scaled(cls, a_s, dims):
        a_s = np.asarray(a_s, dtype=float)
        if a_s.shape != (dims.graph_param_count(),):
            raise ValueError(f"expected {dims.graph_param_count()} coefficients, "
                             f"got {a_s.shape}")
        N, F = dims.n_nodes, dims.n_features
        return cls(ivec(a_s[:dims.nf], dims),
                   unsvec(a_s[dims.feature_offset:dims.node_offset] / (2 * N), F),
                   unsvec(a_s[dims.node_offset:] / (2 * F), N))

    def to_json(self):
        return {"N": self.n_nodes, "F": self.n_features,
                "diag": self.diag.tolist(), "a_f": svec(self.a_f).tolist(),
                "a_n": svec(self.a_n).tolist()}

    @classmethod
    def from_json(cls, obj):
        N, F = int(obj["N"]), int(obj["F"])
        diag = np.asarray(obj["diag"], dtype=float).reshape(N, F)
        return cls(diag, unsvec(obj["a_f"], F), unsvec(obj["a_n"], N))


def basis_norm_sq(dims, k):
    return float(basis_pattern(dims).norm_sq[k])


def basis_inner_all(B, dims):
    """All inner products ``<U_k, B>`` for a square ``NF x NF`` matrix."""
    B = np.ascontiguousarray(B, dtype=float)
    if B.shape != (dims.nf, dims.nf):
        raise ValueError(f"expected {dims.nf}x{dims.nf} matrix, got {B.shape}")
    pat = basis_pattern(dims)
    return _kernels.impl.inner_all(B, pat.pk, pat.pj, pat.pv, pat.n_basis)


def basis_inner(B, dims, k):
    """Inner product ``<U_k, B>``; ``k`` is an int or :class:`BasisIndex`."""
    B = np.asarray(B, dtype=float)
    if isinstance(k, BasisIndex):
        k = k.index
    bi = basis_index(dims, k)
    N, F = dims.n_nodes, dims.n_features
    if bi.kind is BasisClass.DIAG:
        return float(B[k, k])
    if bi.kind is BasisClass.FEATURE:
        f1, f2 = bi.locator
        n = np.arange(N)
        return float((B[f1 * N + n, f2 * N + n].sum()
                      + B[f2 * N + n, f1 * N + n].sum()) / (2 * N))
    n1, n2 = bi.locator
    f = np.arange(F) * N
    return float((B[f + n1, f + n2].sum() + B[f + n2, f + n1].sum()) / (2 * F))


def project(B, dims):
    """Orthogonal projection of ``B`` onto the structured family.

    Entry values of the projection equal the inner products ``<U_k, B>``.
    """
    inner = basis_inner_all(B, dims)
    return StructuredCoef.from_scaled(inner / basis_pattern(dims).norm_sq, dims)


def assemble_scaled(a_s, dims):
    pat = basis_pattern(dims)
    a_s = np.ascontiguousarray(a_s, dtype=float)
    if a_s.shape != (pat.n_basis,):
        raise ValueError(f"expected {pat.n_basis} coefficients, got {a_s.shape}")
    return _kernels.impl.assemble(a_s, pat.pk, pat.pj, pat.pv)


def assemble(S):
    """Dense ``NF x NF`` matrix of a :class:`StructuredCoef`."""
    return assemble_scaled(S.to_scaled(), S.dims)


def apply_structured(S, X):
    """``D * X + A_N X + X A_F^T``, equal to ``ivec(assemble(S) @ vec(X))``."""
    X = np.asarray(X, dtype=float)
    if X.shape != S.diag.shape:
        raise ValueError(f"expected {S.diag.shape} observation, got {X.shape}")
    return S.diag * X + S.a_n @ X + X @ S.a_f.T


def tile(x, dims):
    """Response tile ``T`` with ``T[k, i] = (U_k x)[i]`` (shape ``|K| x NF``).

    For a scaled coefficient vector ``a_s``, ``T.T @ a_s`` is the prediction
    ``A x`` and ``T @ r`` equals ``<U_k, r x^T>`` for every ``k``.
    """
    pat = basis_pattern(dims)
    x = np.ascontiguousarray(x, dtype=float)
    return _kernels.impl.tile(x, pat.pk, pat.pj, pat.pv, pat.n_basis)


def materialize_basis(dims):
    """Dense stack of all basis matrices, shape ``(|K|, NF, NF)``.

    Intended for small debug and oracle computations only.
    """
    pat = basis_pattern(dims)
    nf = dims.nf
    U = np.zeros((pat.n_basis, nf, nf))
    rows = np.broadcast_to(np.arange(nf)[:, None], pat.pk.shape)
    U[pat.pk, rows, pat.pj] = pat.pv
    return U

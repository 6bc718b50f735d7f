"""Streaming lag-0 / lag-1 autocovariances and their inverse.

Two modes are supported.

``stationary``
    ``G0 = (1/t) sum x_{s-1} x_{s-1}^T`` and ``G1 = (1/t) sum x_s x_{s-1}^T``
    over ``s = 1..t``.
``augmented``
    Samples are grouped by the phase ``m = s mod M`` of the response index.
    Each group is centred on its own means before entering the sums, which
    profiles out one intercept per phase (the periodic trend).

The inverse of ``G0`` is maintained with Sherman-Morrison updates once the
matrix is safely invertible, and refactored periodically or when a cheap
probe detects drift.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .basis import GraphDims

COND_LIMIT = 1e10
REFACTOR_EVERY = 512
DRIFT_TOL = 1e-6


@dataclass(eq=False)
class CovState:
    """Autocovariance estimates after ``t`` transitions.

    Attributes
    ----------
    gamma0, gamma1 : ndarray, shape (NF, NF)
        Lag-0 and lag-1 estimates.
    gamma0_inv : ndarray or None
        Maintained inverse of ``gamma0``; ``None`` until invertible.
    x_last : ndarray or None
        Most recent observation ``x_t``.
    counts : ndarray, shape (M,)
        ``counts[m]`` is the number of responses of phase ``m`` seen so far.
    pred_means : ndarray, shape (M, NF)
        ``pred_means[m]`` is the mean of predecessors ``x_{s-1}`` of phase
        ``m + 1`` responses, i.e. the mean of the phase ``m`` observations.
    resp_means : ndarray, shape (M, NF)
        ``resp_means[m]`` is the mean of the phase ``m`` responses.
    """

    dims: GraphDims
    mode: str = "stationary"
    t: int = 0
    gamma0: np.ndarray = None
    gamma1: np.ndarray = None
    gamma0_inv: np.ndarray = None
    x_last: np.ndarray = None
    counts: np.ndarray = None
    pred_means: np.ndarray = None
    resp_means: np.ndarray = None
    since_refactor: int = 0
    refactor_count: int = 0
    _probe: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.mode not in ("stationary", "augmented"):
            raise ValueError(f"unknown mode {self.mode!r}")
        nf, M = self.dims.nf, self.dims.period
        if self.gamma0 is None:
            self.gamma0 = np.zeros((nf, nf))
        if self.gamma1 is None:
            self.gamma1 = np.zeros((nf, nf))
        if self.counts is None:
            self.counts = np.zeros(M, dtype=np.int64)
        if self.pred_means is None:
            self.pred_means = np.zeros((M, nf))
        if self.resp_means is None:
            self.resp_means = np.zeros((M, nf))
        if self._probe is None:
            rng = np.random.default_rng(12345)
            v = rng.standard_normal(nf)
            self._probe = v / np.linalg.norm(v)

    @property
    def ready(self):
        """Whether the inverse of ``gamma0`` is available."""
        return self.gamma0_inv is not None

    def copy(self):
        arrays = {k: (None if getattr(self, k) is None else getattr(self, k).copy())
                  for k in ("gamma0", "gamma1", "gamma0_inv", "x_last", "counts",
                            "pred_means", "resp_means")}
        return replace(self, **arrays)

    def phase(self, s):
        """Phase of time index ``s`` (non-negative for any integer ``s``)."""
        M = self.dims.period
        return ((s % M) + M) % M

    def push(self, x):
        """Feed the next observation; the first call only stores ``x_0``."""
        x = _check_vec(x, self.dims.nf)
        if self.x_last is None:
            self.x_last = x.copy()
            return self
        if self.mode == "stationary":
            return update_stationary(self, x, self.x_last)
        return update_augmented(self, x, self.x_last)

    def trend(self):
        """Per-phase trend estimate, shape ``(M, NF)``.

        Row ``m`` is the mean of the observations of phase ``m``; zero in
        stationary mode.  Raises ``ValueError`` while some phase has no
        observation yet.
        """
        if self.mode == "stationary":
            return np.zeros((self.dims.period, self.dims.nf))
        if np.any(self.counts == 0):
            missing = [int(self.phase(m - 1)) for m in np.flatnonzero(self.counts == 0)]
            raise ValueError(f"no observation of phase(s) {sorted(missing)} yet")
        return self.pred_means.copy()

    def centering(self, x_cur):
        """Centred predecessor and the response mean for the next transition.

        Returns ``(x_cur - u, ybar, p)`` where ``u`` is the predecessor mean
        and ``ybar`` the response mean for phase ``(t+1) mod M`` and ``p`` the
        number of earlier responses in that phase.  In stationary mode the
        means are zero and ``p`` is ``None``.
        """
        if self.mode == "stationary":
            return x_cur, np.zeros_like(x_cur), None
        m = self.phase(self.t + 1)
        mp = self.phase(m - 1)
        return x_cur - self.pred_means[mp], self.resp_means[m], int(self.counts[m])

    def intercept(self, A, phase):
        """Intercept ``b_m = ybar_m - A u_{m-1}`` implied by ``A`` for ``phase``."""
        if self.mode == "stationary":
            return np.zeros(self.dims.nf)
        m = self.phase(phase)
        if self.counts[m] == 0:
            return np.zeros(self.dims.nf)
        return self.resp_means[m] - A @ self.pred_means[self.phase(m - 1)]

    @classmethod
    def from_stream(cls, X, dims, mode="stationary"):
        """Batch estimates from rows ``X[0..t]`` (``t`` transitions).

        Computed directly from the centred sums rather than by replaying the
        recursion.
        """
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != dims.nf:
            raise ValueError(f"expected (t+1, {dims.nf}) array, got {X.shape}")
        if X.shape[0] == 0:
            raise ValueError("need at least one observation")
        t = X.shape[0] - 1
        st = cls(dims, mode)
        st.x_last = X[-1].copy()
        if t < 1:
            return st
        prev, resp = X[:-1], X[1:]
        M = dims.period
        if mode == "stationary":
            st.gamma0 = prev.T @ prev / t
            st.gamma1 = resp.T @ prev / t
        else:
            phases = np.arange(1, t + 1) % M
            g0 = np.zeros((dims.nf, dims.nf))
            g1 = np.zeros((dims.nf, dims.nf))
            for m in range(M):
                sel = phases == m
                p = int(sel.sum())
                st.counts[m] = p
                if p == 0:
                    continue
                u = prev[sel].mean(axis=0)
                ybar = resp[sel].mean(axis=0)
                st.pred_means[(m - 1) % M] = u
                st.resp_means[m] = ybar
                dp = prev[sel] - u
                g0 += dp.T @ dp
                g1 += (resp[sel] - ybar).T @ dp
            st.gamma0 = g0 / t
            st.gamma1 = g1 / t
        st.t = t
        _maybe_factor(st)
        return st


def _check_vec(x, n):
    x = np.asarray(x, dtype=float)
    if x.shape != (n,):
        raise ValueError(f"expected observation of length {n}, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("observation contains non-finite values")
    return x


def _maybe_factor(state):
    nf = state.dims.nf
    if state.t < nf:
        return
    if np.linalg.cond(state.gamma0) >= COND_LIMIT:
        return
    refactor(state)


def refactor(state):
    """Recompute the inverse of ``gamma0`` directly."""
    state.gamma0_inv = np.linalg.inv(state.gamma0)
    state.gamma0_inv = 0.5 * (state.gamma0_inv + state.gamma0_inv.T)
    state.since_refactor = 0
    state.refactor_count += 1
    return state


def _rank1(state, w, dx, dy):
    """``G <- t/(t+1) G + w/(t+1) dx dx^T`` (and lag 1), inverse included."""
    t = state.t
    state.gamma0 *= t / (t + 1)
    state.gamma0 += (w / (t + 1)) * np.outer(dx, dx)
    state.gamma1 *= t / (t + 1)
    state.gamma1 += (w / (t + 1)) * np.outer(dy, dx)
    state.t = t + 1
    if state.gamma0_inv is None:
        _maybe_factor(state)
        return
    Gi = state.gamma0_inv
    if w > 0:
        u = Gi @ dx
        Gi -= np.outer(u, u) / (t / w + dx @ u)
    Gi *= (t + 1) / t
    state.since_refactor += 1
    if state.since_refactor >= REFACTOR_EVERY:
        refactor(state)
        return
    z = state._probe
    if np.max(np.abs(state.gamma0 @ (Gi @ z) - z)) > DRIFT_TOL:
        refactor(state)


def update_stationary(state, x_new, x_prev):
    """Fold the transition ``x_prev -> x_new`` into a stationary state.

    The state is updated in place and returned.
    """
    if state.mode != "stationary":
        raise ValueError("update_stationary needs a stationary CovState")
    nf = state.dims.nf
    x_new = _check_vec(x_new, nf)
    x_prev = _check_vec(x_prev, nf)
    _rank1(state, 1.0, x_prev, x_new)
    state.x_last = x_new.copy()
    return state


def update_augmented(state, x_new, x_prev):
    """Fold the transition ``x_prev -> x_new`` into an augmented state.

    The new response has phase ``m = (t+1) mod M``.  With ``p`` earlier
    responses in that phase the centred outer products enter with weight
    ``p / (p + 1)``; afterwards the phase means and count are updated.  The
    state is updated in place and returned.
    """
    if state.mode != "augmented":
        raise ValueError("update_augmented needs an augmented CovState")
    nf = state.dims.nf
    x_new = _check_vec(x_new, nf)
    x_prev = _check_vec(x_prev, nf)
    m = state.phase(state.t + 1)
    mp = state.phase(m - 1)
    p = int(state.counts[m])
    dx = x_prev - state.pred_means[mp]
    dy = x_new - state.resp_means[m]
    _rank1(state, p / (p + 1.0), dx, dy)
    state.pred_means[mp] += dx / (p + 1)
    state.resp_means[m] += dy / (p + 1)
    state.counts[m] = p + 1
    state.x_last = x_new.copy()
    return state


def residual_cov(state):
    """Innovation covariance ``G0 - G1 G0^{-1} G1^T`` (symmetrised)."""
    if state.gamma0_inv is None:
        raise ValueError("gamma0 is not invertible yet")
    S = state.gamma0 - state.gamma1 @ state.gamma0_inv @ state.gamma1.T
    return 0.5 * (S + S.T)

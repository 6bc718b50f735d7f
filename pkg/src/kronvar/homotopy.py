"""Online Lasso via homotopy on the penalty level and on the data.

The optimum of the structured Lasso is piecewise linear in the penalty and
piecewise rational in the weight of a new observation.  Between breakpoints
the active set (diagonal and feature coefficients plus the non-zero node
coefficients) is fixed and the solution follows from one linear system whose
inverse is maintained with bordering and rank-one updates.

Coordinates are scaled basis coefficients ``a_s`` (see :mod:`kronvar.basis`).
For the quadratic ``Q = gram.q0`` and linear term ``g = gram.g1`` the
optimality conditions read

    Q_11 a_1 - g_1 + lam w_1 = 0,      |g_0 - Q_01 a_1| <= lam,

where ``1`` marks the active set, ``0`` the zero node coordinates and ``w``
the signs (zero on unpenalized coordinates).

One streaming step (:func:`online_step`) performs

1. a gradient step on ``lam`` using the one-step-ahead prediction loss,
2. a penalty path to the rescaled level ``(1 + 1/t) lam``,
3. a data path that adds the next observation one coordinate at a time.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .basis import StructuredCoef, basis_pattern, tile
from .lasso_batch import BatchProblem, kkt_residual_scaled, solve_batch

REFACTOR_EVERY = 512
DRIFT_TOL = 1e-6
_REL_EPS = 1e-12


class HomotopyAbort(RuntimeError):
    """Raised when a path cannot be followed reliably."""


@dataclass(eq=False)
class BigGram:
    """Quadratic ``q0[k, k'] = <U_k, U_k' G0>`` and linear ``g1[k] = <U_k, G1>``."""

    dims: object
    q0: np.ndarray
    g1: np.ndarray

    def copy(self):
        return BigGram(self.dims, self.q0.copy(), self.g1.copy())


def build_big_gram(cov):
    """Lift the autocovariances of ``cov`` to basis coordinates."""
    pat = basis_pattern(cov.dims)
    k = _kernels.impl
    q0 = k.big_gram(np.ascontiguousarray(cov.gamma0), pat.pk, pat.pj, pat.pv, pat.n_basis)
    g1 = k.inner_all(np.ascontiguousarray(cov.gamma1), pat.pk, pat.pj, pat.pv, pat.n_basis)
    return BigGram(cov.dims, q0, g1)


@dataclass(eq=False)
class ActiveSetState:
    """Active set, signs, maintained inverse and solution at level ``lam``.

    Attributes
    ----------
    lam : float
        Penalty level at which ``coef`` is optimal for the current gram.
    active : ndarray of int
        Active basis indices; all unpenalized ones first, then node indices
        in order of activation.
    signs : ndarray
        Sign of each active coordinate, zero for unpenalized ones.
    hinv : ndarray
        Inverse of ``q0[active][:, active]``.
    coef : ndarray
        Active coefficients.
    """

    dims: object
    lam: float
    active: np.ndarray
    signs: np.ndarray
    hinv: np.ndarray
    coef: np.ndarray
    n_events: int = 0
    steps: int = 0
    diagnostics: dict = field(default_factory=dict)

    def copy(self):
        return ActiveSetState(self.dims, self.lam, self.active.copy(), self.signs.copy(),
                              self.hinv.copy(), self.coef.copy(), self.n_events,
                              self.steps, dict(self.diagnostics))

    @property
    def n_active_edges(self):
        return len(self.active) - self.dims.n_unpenalized

    def scaled(self):
        out = np.zeros(self.dims.graph_param_count())
        out[self.active] = self.coef
        return out

    def estimate(self):
        return StructuredCoef.from_scaled(self.scaled(), self.dims)

    def inactive(self):
        mask = np.ones(self.dims.graph_param_count(), dtype=bool)
        mask[self.active] = False
        mask[:self.dims.n_unpenalized] = False
        return np.flatnonzero(mask)


def kkt_residual(state, gram):
    """Optimality residual of the state's solution for ``gram``."""
    return kkt_residual_scaled(gram.q0, gram.g1, state.scaled(), state.lam, state.dims)


def init_state(gram, coef, lam):
    """Active-set state from a (batch) solution ``coef`` at level ``lam``.

    The support and signs of the node entries of ``coef`` define the active
    set; the coefficients are then recomputed exactly on that support.
    """
    dims = gram.dims
    a_s = coef.to_scaled() if isinstance(coef, StructuredCoef) else np.asarray(coef, float)
    k0 = dims.n_unpenalized
    nodes = k0 + np.flatnonzero(a_s[k0:])
    active = np.concatenate([np.arange(k0), nodes]).astype(np.int64)
    signs = np.concatenate([np.zeros(k0), np.sign(a_s[nodes])])
    H = gram.q0[np.ix_(active, active)]
    try:
        hinv = np.linalg.inv(H)
    except np.linalg.LinAlgError as exc:
        raise HomotopyAbort("active Gram block is singular") from exc
    st = ActiveSetState(dims, float(lam), active, signs, hinv, np.zeros(len(active)))
    st.coef = hinv @ (gram.g1[active] - lam * signs)
    if np.any(np.sign(st.coef[k0:]) != signs[k0:]):
        raise HomotopyAbort("warm-start support is not sign consistent")
    return st


def _refactor(state, gram):
    H = gram.q0[np.ix_(state.active, state.active)]
    state.hinv = np.linalg.inv(H)
    state.diagnostics["refactor_count"] = state.diagnostics.get("refactor_count", 0) + 1


def _add(state, gram, k, sign):
    act = state.active
    g = gram.q0[act, k]
    h = gram.q0[k, k]
    v = state.hinv @ g
    s = h - g @ v
    if not s > 1e-13 * max(abs(h), 1e-300):
        raise HomotopyAbort(f"adding basis index {k} makes the active block singular")
    n = len(act)
    H = np.empty((n + 1, n + 1))
    H[:n, :n] = state.hinv + np.outer(v, v) / s
    H[:n, n] = -v / s
    H[n, :n] = -v / s
    H[n, n] = 1.0 / s
    state.hinv = H
    state.active = np.append(act, k)
    state.signs = np.append(state.signs, sign)
    state.coef = np.append(state.coef, 0.0)


def _remove(state, pos):
    Hi = state.hinv
    keep = np.ones(len(state.active), dtype=bool)
    keep[pos] = False
    c = Hi[keep, pos]
    state.hinv = Hi[np.ix_(keep, keep)] - np.outer(c, c) / Hi[pos, pos]
    state.active = state.active[keep]
    state.signs = state.signs[keep]
    state.coef = state.coef[keep]


def _apply(state, gram, k, kind):
    """``kind`` 0 removes ``k``; +1/-1 activates ``k`` with that sign."""
    if kind == 0:
        _remove(state, int(np.flatnonzero(state.active == k)[0]))
    else:
        _add(state, gram, k, float(kind))
    state.n_events += 1


def _activate_all(state, gram):
    """At level zero the problem is plain least squares: activate every node."""
    for k in state.inactive():
        _add(state, gram, int(k), 1.0)
        state.n_events += 1
    _resign(state, gram)


def _resign(state, gram):
    """Recompute the coefficients and take the signs from them."""
    k0 = state.dims.n_unpenalized
    state.coef = state.hinv @ (gram.g1[state.active] - state.lam * state.signs)
    sg = np.sign(state.coef[k0:])
    sg[sg == 0] = 1.0
    state.signs[k0:] = sg


def _pick(values, ks, kinds, nearest_low):
    """Index of the nearest candidate; ties go to the smallest basis index."""
    best = values.min() if nearest_low else values.max()
    tie = np.flatnonzero(np.abs(values - best) <= 1e-15 * max(abs(best), 1e-300))
    j = tie[np.argmin(ks[tie])]
    return j


def reg_path(state, gram, lam_target):
    """Move the solution along the penalty path to ``lam_target``.

    The state is updated in place and returned.
    """
    if not np.isfinite(lam_target) or lam_target < 0:
        raise ValueError("lam_target must be finite and non-negative")
    dims = state.dims
    k0 = dims.n_unpenalized
    max_events = 10 * max(dims.n_node_pairs, 1)
    lam = state.lam
    if lam == 0 and lam_target > 0:
        _resign(state, gram)
    events = 0
    last = (-1, np.nan)
    while True:
        act = state.active
        p = state.hinv @ gram.g1[act]
        q = state.hinv @ state.signs
        if lam == lam_target:
            break
        down = lam_target < lam
        eps = _REL_EPS * max(1.0, abs(lam))
        vals, ks, kinds = [], [], []
        qa, pa = q[k0:], p[k0:]
        nz = qa != 0
        if nz.any():
            vals.append(pa[nz] / qa[nz])
            ks.append(act[k0:][nz])
            kinds.append(np.zeros(nz.sum(), dtype=np.int64))
        inact = state.inactive()
        if len(inact):
            Q01 = gram.q0[np.ix_(inact, act)]
            c0 = gram.g1[inact] - Q01 @ p
            dd = Q01 @ q
            with np.errstate(divide="ignore", invalid="ignore"):
                vals += [c0 / (1 - dd), c0 / (-1 - dd)]
            ks += [inact, inact]
            kinds += [np.ones(len(inact), dtype=np.int64), -np.ones(len(inact), dtype=np.int64)]
        if vals:
            vals = np.concatenate(vals)
            ks = np.concatenate(ks)
            kinds = np.concatenate(kinds)
            ok = np.isfinite(vals) & (vals >= 0)
            if down:
                ok &= (vals < lam - eps) & (vals > lam_target)
            else:
                ok &= (vals > lam + eps) & (vals < lam_target)
            ok &= ~((ks == last[0]) & (np.abs(vals - last[1]) <= 1e-9 * max(1.0, abs(lam))))
        else:
            ok = np.zeros(0, dtype=bool)
        if not ok.any():
            lam = lam_target
            continue
        vals, ks, kinds = vals[ok], ks[ok], kinds[ok]
        j = _pick(vals, ks, kinds, nearest_low=not down)
        lam = float(vals[j])
        _apply(state, gram, int(ks[j]), int(kinds[j]))
        last = (int(ks[j]), lam)
        events += 1
        if events > max_events:
            raise HomotopyAbort("penalty path exceeded the event budget")
    state.lam = float(lam_target)
    state.coef = p - lam_target * q
    if lam_target == 0:
        _activate_all(state, gram)
    return state


@dataclass(eq=False)
class ResponseTile:
    """New transition ``x_pred -> y`` in basis coordinates.

    ``phase_count`` is ``None`` for stationary data.  For trend-augmented
    data both vectors are centred on their phase means and ``phase_count``
    is the number of earlier responses in the phase, which fixes the weight
    ``p / (p + mu)`` of the new sample.
    """

    x_pred: np.ndarray
    y: np.ndarray
    phase_count: int = None

    def columns(self, dims):
        """Basis indices and values of every column of the tile, ``(NF, R)``."""
        pat = basis_pattern(dims)
        return pat.pk, pat.pv * self.x_pred[pat.pj]


def _weight(mu, t, p):
    if p is None:
        return mu / t
    return mu * p / (t * (p + mu))


def data_path(state, gram, tile_, t):
    """Add one transition to a state optimal for ``t`` transitions.

    On entry the state must solve the ``t``-sample problem at level
    ``state.lam`` (usually ``(1 + 1/t)`` times the target level).  Each
    coordinate of the new response is blended in with weight ``mu`` going
    from 0 to 1.  On exit the gram and the state describe ``t + 1``
    transitions at level ``state.lam * t / (t + 1)``.  Updated in place.
    """
    if t < 1:
        raise ValueError("t must be at least 1")
    dims = state.dims
    k0 = dims.n_unpenalized
    K = dims.graph_param_count()
    lam = state.lam
    p = tile_.phase_count
    kk_all, vals_all = tile_.columns(dims)
    max_events = 10 * max(dims.n_node_pairs, 1)
    kern = _kernels.impl
    if lam == 0:
        _activate_all(state, gram)
    xcol = np.zeros(K)
    inact = state.inactive()
    for i in range(dims.nf):
        c_end = _weight(1.0, t, p)
        if c_end == 0:
            continue
        kk, vv, y = kk_all[i], vals_all[i], float(tile_.y[i])
        xcol[:] = 0.0
        xcol[kk] = vv
        c_cur = 0.0
        last_k, last_c = -1, np.nan
        events = 0
        while True:
            found, c, k, kind, alpha, u = kern.path_column(
                gram.q0, gram.g1, state.hinv, state.active, state.signs, inact,
                xcol, y, lam, k0, c_cur, c_end, last_k, last_c)
            if not found:
                break
            c_cur = c
            _apply(state, gram, k, kind)
            inact = state.inactive()
            last_k, last_c = k, c
            events += 1
            if events > max_events:
                raise HomotopyAbort("data path exceeded the event budget")
        kern.fold_column(gram.q0, gram.g1, kk, vv, y, c_end)
        kern.sym_rank1(state.hinv, u, c_end / (1.0 + c_end * alpha))
    scale = t / (t + 1.0)
    gram.q0 *= scale
    gram.g1 *= scale
    state.hinv /= scale
    state.lam = lam * scale
    if lam == 0:
        _resign(state, gram)
    else:
        state.coef = state.hinv @ (gram.g1[state.active] - state.lam * state.signs)
    return state


def at_breakpoint(state, gram, tol=1e-12):
    """Whether the state's level is within ``tol`` of a breakpoint."""
    k0 = state.dims.n_unpenalized
    if np.any(np.abs(state.coef[k0:]) <= tol):
        return True
    inact = state.inactive()
    if len(inact) and state.lam > 0:
        r = gram.g1[inact] - gram.q0[np.ix_(inact, state.active)] @ state.coef
        return bool(np.any(np.abs(r) >= state.lam * (1 - tol)))
    return False


def lambda_gradient(state, x_pred, y):
    """Derivative in ``lam`` of ``1/2 ||y - A(lam) x_pred||^2`` at the state."""
    T = tile(x_pred, state.dims)
    act = state.active
    r = T[act].T @ state.coef - y
    aG = T[act] @ r
    return float(-aG @ (state.hinv @ state.signs))


def lambda_step(state, x_pred, y, eta, gram=None):
    """Gradient step ``max(lam - eta * d, 0)`` on the one-step prediction loss.

    ``x_pred`` and ``y`` are the (centred) predecessor and response of the
    next transition.  When ``gram`` is given, a state sitting on a
    breakpoint is flagged in ``state.diagnostics['at_breakpoint']``.
    """
    if gram is not None:
        state.diagnostics["at_breakpoint"] = at_breakpoint(state, gram)
    d = lambda_gradient(state, x_pred, y)
    state.diagnostics["lambda_gradient"] = d
    return max(state.lam - eta * d, 0.0)


def warm_start(cov, lam, tol=1e-10):
    """Batch solve at ``(cov.t, lam)`` and build the streaming state from it."""
    S, rep = solve_batch(BatchProblem.from_cov(cov, lam), tol=tol)
    gram = build_big_gram(cov)
    state = init_state(gram, S, lam)
    state.diagnostics["batch_report"] = rep
    return state, gram


def _drift(state, gram):
    z = np.linspace(-1.0, 1.0, len(state.active))
    H = gram.q0[np.ix_(state.active, state.active)]
    return float(np.max(np.abs(H @ (state.hinv @ z) - z)))


def online_step(state, gram, cov, x_next, eta, tol=1e-10):
    """Advance the estimator by one observation.

    ``state`` and ``gram`` must describe ``cov`` (``cov.t`` transitions);
    all three are updated in place.  Returns a dict with the new level,
    the lambda gradient, the number of path events and whether the batch
    fallback was used.
    """
    tic = time.perf_counter()
    t = cov.t
    x_next = np.asarray(x_next, dtype=float)
    xc, ybar, p = cov.centering(cov.x_last)
    yc = x_next - ybar
    if p == 0:
        lam_new = state.lam
        state.diagnostics["lambda_gradient"] = 0.0
    else:
        lam_new = lambda_step(state, xc, yc, eta)
    events0 = state.n_events
    fallback = False
    try:
        reg_path(state, gram, (1.0 + 1.0 / t) * lam_new)
        data_path(state, gram, ResponseTile(xc, yc, p), t)
        state.lam = lam_new
        state.coef = state.hinv @ (gram.g1[state.active] - lam_new * state.signs)
        cov.push(x_next)
        state.steps += 1
        if state.steps % REFACTOR_EVERY == 0 or _drift(state, gram) > DRIFT_TOL:
            _refactor(state, gram)
            state.coef = state.hinv @ (gram.g1[state.active] - state.lam * state.signs)
    except HomotopyAbort as exc:
        if cov.t == t:
            cov.push(x_next)
        new_state, new_gram = warm_start(cov, lam_new, tol=tol)
        new_state.steps = state.steps + 1
        state.__dict__.update(new_state.__dict__)
        state.diagnostics["abort"] = str(exc)
        gram.q0, gram.g1 = new_gram.q0, new_gram.g1
        fallback = True
    return {"lambda": state.lam, "lambda_gradient": state.diagnostics.get("lambda_gradient", 0.0),
            "events": state.n_events - events0, "fallback": fallback,
            "wall_time": time.perf_counter() - tic}

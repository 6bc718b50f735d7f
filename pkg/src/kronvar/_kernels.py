"""Index-arithmetic kernels shared by the estimators.

Every kernel exists twice: a numba ``@njit`` loop and a vectorised numpy
version.  The numba versions are used when numba imports cleanly and the
environment variable ``KRONVAR_DISABLE_NUMBA`` is unset (or ``0``).  Both
namespaces stay importable as :data:`numpy_impl` and :data:`numba_impl` so
tests and benchmarks can compare them directly.

All kernels work on the row pattern of the structured basis.  Row ``i`` of
the ``NF x NF`` coefficient space touches ``R = N + F - 1`` basis elements;
``pk[i, r]`` is the basis index, ``pj[i, r]`` the column and ``pv[i, r]``
the entry value of that basis element in row ``i``.
"""

import os
from types import SimpleNamespace

import numpy as np

try:
    from numba import njit
    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

USE_NUMBA = _HAVE_NUMBA and os.environ.get("KRONVAR_DISABLE_NUMBA", "0") in ("", "0")


# ---------------------------------------------------------------------------
# numpy versions

def _inner_all_np(B, pk, pj, pv, n_basis):
    rows = np.arange(pk.shape[0])[:, None]
    vals = pv * B[rows, pj]
    out = np.zeros(n_basis)
    np.add.at(out, pk, vals)
    return out


def _assemble_np(a_s, pk, pj, pv):
    nf = pk.shape[0]
    out = np.zeros((nf, nf))
    rows = np.broadcast_to(np.arange(nf)[:, None], pk.shape)
    np.add.at(out, (rows, pj), a_s[pk] * pv)
    return out


def _tile_np(x, pk, pj, pv, n_basis):
    nf = pk.shape[0]
    out = np.zeros((n_basis, nf))
    cols = np.broadcast_to(np.arange(nf)[:, None], pk.shape)
    np.add.at(out, (pk, cols), pv * x[pj])
    return out


def _big_gram_np(G, pk, pj, pv, n_basis):
    out = np.zeros((n_basis, n_basis))
    w = pv[:, :, None] * pv[:, None, :] * G[pj[:, :, None], pj[:, None, :]]
    np.add.at(out, (pk[:, :, None], pk[:, None, :]), w)
    return out


def _wald_sigma_np(S, Ginv, n1, n2, n_nodes, n_features):
    f = np.arange(n_features) * n_nodes
    I = n1[:, None] + f[None, :]
    J = n2[:, None] + f[None, :]

    def block(A, rows, B, cols):
        # sum_{f,f'} A[rows_a f, rows_b f'] * B[cols_a f, cols_b f']
        a = A[rows[:, None, :, None], rows[None, :, None, :]]
        b = B[cols[:, None, :, None], cols[None, :, None, :]]
        return (a * b).sum(axis=(2, 3))

    def cross(A, ra, rb, B, ca, cb):
        a = A[ra[:, None, :, None], rb[None, :, None, :]]
        b = B[ca[:, None, :, None], cb[None, :, None, :]]
        return (a * b).sum(axis=(2, 3))

    out = (block(S, I, Ginv, J) + block(S, J, Ginv, I)
           + cross(S, I, J, Ginv, J, I) + cross(S, J, I, Ginv, I, J))
    return out / (2.0 * n_features) ** 2


def _sym_rank1_np(M, u, scale):
    M -= scale * np.outer(u, u)


def _fold_column_np(gram0, gamma1, kk, vals, y, scale):
    gram0[np.ix_(kk, kk)] += scale * np.outer(vals, vals)
    gamma1[kk] += scale * y * vals


def _path_column_np(q0, g1, hinv, act, signs, inact, xcol, y, lam, k0, c_cur, c_end,
                    last_k, last_c):
    x1 = xcol[act]
    a0 = hinv @ (g1[act] - lam * signs)
    u = hinv @ x1
    alpha = float(x1 @ u)
    e = y - float(x1 @ a0)
    if e == 0:
        return False, 0.0, -1, 0, alpha, u
    s, ks, kinds = [], [], []
    ua = u[k0:]
    nz = (ua != 0) & (lam > 0)
    if nz.any():
        s.append(-a0[k0:][nz] / ua[nz])
        ks.append(act[k0:][nz])
        kinds.append(np.zeros(nz.sum(), dtype=np.int64))
    if len(inact):
        Q01 = q0[np.ix_(inact, act)]
        b0 = Q01 @ a0 - g1[inact]
        v = Q01 @ u - xcol[inact]
        with np.errstate(divide="ignore", invalid="ignore"):
            s += [-(b0 + lam) / v, -(b0 - lam) / v]
        ks += [inact, inact]
        kinds += [np.ones(len(inact), dtype=np.int64), -np.ones(len(inact), dtype=np.int64)]
    if not s:
        return False, 0.0, -1, 0, alpha, u
    s = np.concatenate(s)
    ks = np.concatenate(ks)
    kinds = np.concatenate(kinds)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = s / (e - s * alpha)
    ok = np.isfinite(c) & (c > c_cur + 1e-12 * c_end) & (c < c_end)
    ok &= ~((ks == last_k) & (np.abs(c - last_c) <= 1e-9 * c_end))
    if not ok.any():
        return False, 0.0, -1, 0, alpha, u
    c, ks, kinds = c[ok], ks[ok], kinds[ok]
    best = c.min()
    tie = np.flatnonzero(np.abs(c - best) <= 1e-15 * max(abs(best), 1e-300))
    j = tie[np.argmin(ks[tie])]
    return True, float(c[j]), int(ks[j]), int(kinds[j]), alpha, u


numpy_impl = SimpleNamespace(
    inner_all=_inner_all_np,
    assemble=_assemble_np,
    tile=_tile_np,
    big_gram=_big_gram_np,
    wald_sigma=_wald_sigma_np,
    sym_rank1=_sym_rank1_np,
    fold_column=_fold_column_np,
    path_column=_path_column_np,
    name="numpy",
)


# ---------------------------------------------------------------------------
# numba versions

if _HAVE_NUMBA:

    @njit(cache=True)
    def _inner_all_nb(B, pk, pj, pv, n_basis):
        out = np.zeros(n_basis)
        nf, R = pk.shape
        for i in range(nf):
            for r in range(R):
                out[pk[i, r]] += pv[i, r] * B[i, pj[i, r]]
        return out

    @njit(cache=True)
    def _assemble_nb(a_s, pk, pj, pv):
        nf, R = pk.shape
        out = np.zeros((nf, nf))
        for i in range(nf):
            for r in range(R):
                out[i, pj[i, r]] += a_s[pk[i, r]] * pv[i, r]
        return out

    @njit(cache=True)
    def _tile_nb(x, pk, pj, pv, n_basis):
        nf, R = pk.shape
        out = np.zeros((n_basis, nf))
        for i in range(nf):
            for r in range(R):
                out[pk[i, r], i] += pv[i, r] * x[pj[i, r]]
        return out

    @njit(cache=True)
    def _big_gram_nb(G, pk, pj, pv, n_basis):
        nf, R = pk.shape
        out = np.zeros((n_basis, n_basis))
        for i in range(nf):
            for r in range(R):
                kr = pk[i, r]
                jr = pj[i, r]
                vr = pv[i, r]
                for s in range(R):
                    out[kr, pk[i, s]] += vr * pv[i, s] * G[jr, pj[i, s]]
        return out

    @njit(cache=True)
    def _wald_sigma_nb(S, Ginv, n1, n2, n_nodes, n_features):
        P = n1.shape[0]
        out = np.zeros((P, P))
        for a in range(P):
            for b in range(a, P):
                acc = 0.0
                for f in range(n_features):
                    ia = n1[a] + f * n_nodes
                    ja = n2[a] + f * n_nodes
                    for g in range(n_features):
                        ib = n1[b] + g * n_nodes
                        jb = n2[b] + g * n_nodes
                        acc += (S[ia, ib] * Ginv[ja, jb] + S[ja, jb] * Ginv[ia, ib]
                                + S[ia, jb] * Ginv[ja, ib] + S[ja, ib] * Ginv[ia, jb])
                acc /= (2.0 * n_features) ** 2
                out[a, b] = acc
                out[b, a] = acc
        return out

    @njit(cache=True)
    def _sym_rank1_nb(M, u, scale):
        n = u.shape[0]
        for i in range(n):
            su = scale * u[i]
            for j in range(n):
                M[i, j] -= su * u[j]

    @njit(cache=True)
    def _fold_column_nb(gram0, gamma1, kk, vals, y, scale):
        R = kk.shape[0]
        for r in range(R):
            sv = scale * vals[r]
            for s in range(R):
                gram0[kk[r], kk[s]] += sv * vals[s]
            gamma1[kk[r]] += sv * y

    @njit(cache=True)
    def _path_column_nb(q0, g1, hinv, act, signs, inact, xcol, y, lam, k0, c_cur, c_end,
                        last_k, last_c):
        n = act.shape[0]
        x1 = np.empty(n)
        rhs = np.empty(n)
        for j in range(n):
            x1[j] = xcol[act[j]]
            rhs[j] = g1[act[j]] - lam * signs[j]
        a0 = hinv @ rhs
        u = hinv @ x1
        alpha = 0.0
        pred = 0.0
        for j in range(n):
            alpha += x1[j] * u[j]
            pred += x1[j] * a0[j]
        e = y - pred
        if e == 0.0:
            return False, 0.0, -1, 0, alpha, u
        m = inact.shape[0]
        cs = np.empty(n + 2 * m)
        ks = np.empty(n + 2 * m, dtype=np.int64)
        kinds = np.empty(n + 2 * m, dtype=np.int64)
        cnt = 0
        lo = c_cur + 1e-12 * c_end
        tol_last = 1e-9 * c_end
        if lam > 0:
            for j in range(k0, n):
                if u[j] != 0.0:
                    sv = -a0[j] / u[j]
                    den = e - sv * alpha
                    if den != 0.0:
                        c = sv / den
                        if (np.isfinite(c) and c > lo and c < c_end
                                and not (act[j] == last_k and abs(c - last_c) <= tol_last)):
                            cs[cnt] = c
                            ks[cnt] = act[j]
                            kinds[cnt] = 0
                            cnt += 1
        # q0 is symmetric: accumulate whole rows, which vectorizes
        K = q0.shape[0]
        bf = np.zeros(K)
        vf = np.zeros(K)
        for j in range(n):
            row = q0[act[j]]
            aj = a0[j]
            uj = u[j]
            for l in range(K):
                bf[l] += aj * row[l]
                vf[l] += uj * row[l]
        for r in range(m):
            i = inact[r]
            b0 = bf[i] - g1[i]
            v = vf[i] - xcol[i]
            if v == 0.0:
                continue
            for kind in (1, -1):
                sv = -(b0 + kind * lam) / v
                den = e - sv * alpha
                if den == 0.0:
                    continue
                c = sv / den
                if (np.isfinite(c) and c > lo and c < c_end
                        and not (i == last_k and abs(c - last_c) <= tol_last)):
                    cs[cnt] = c
                    ks[cnt] = i
                    kinds[cnt] = kind
                    cnt += 1
        if cnt == 0:
            return False, 0.0, -1, 0, alpha, u
        best = cs[0]
        for j in range(1, cnt):
            if cs[j] < best:
                best = cs[j]
        tol = 1e-15 * max(abs(best), 1e-300)
        pick = -1
        for j in range(cnt):
            if abs(cs[j] - best) <= tol and (pick < 0 or ks[j] < ks[pick]):
                pick = j
        return True, cs[pick], ks[pick], kinds[pick], alpha, u

    numba_impl = SimpleNamespace(
        inner_all=_inner_all_nb,
        assemble=_assemble_nb,
        tile=_tile_nb,
        big_gram=_big_gram_nb,
        wald_sigma=_wald_sigma_nb,
        sym_rank1=_sym_rank1_nb,
        fold_column=_fold_column_nb,
        path_column=_path_column_nb,
        name="numba",
    )
else:  # pragma: no cover
    numba_impl = None


impl = numba_impl if USE_NUMBA else numpy_impl

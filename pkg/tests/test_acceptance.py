"""End-to-end acceptance checks; each prints one PASS/FAIL line."""
import time

import numpy as np
import pytest

from kronvar import homotopy
from kronvar.basis import (GraphDims, assemble, basis_inner_all, materialize_basis,
                           node_basis_index, project)
from kronvar.covariance import CovState
from kronvar.harness import RunConfig, rmsd, run_experiment
from kronvar.homotopy import (build_big_gram, kkt_residual, lambda_gradient, online_step,
                              reg_path, warm_start)
from kronvar.lasso_batch import BatchProblem, solve_batch
from kronvar.model import random_true_model, simulate
from kronvar.ols_wald import chi2_quantile, projected_ols, wald_statistic

from conftest import compare_with_batch, online_run, random_stream


@pytest.fixture
def verdict(capsys):
    def show(n, ok, detail):
        with capsys.disabled():
            print(f"\n[acceptance {n:2d}] {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail
    return show


def test_01_parameter_counts(verdict):
    got = [GraphDims(N, F, 12).total_param_count() for N, F in ((10, 4), (20, 5), (27, 4))]
    verdict(1, got == [571, 1500, 1761], f"total parameter counts {got}")


def test_02_basis_suite(verdict):
    tic = time.perf_counter()
    rng = np.random.default_rng(2)
    worst = 0.0
    for N in range(1, 7):
        for F in range(1, 7):
            dims = GraphDims(N, F)
            nf = N * F
            U = materialize_basis(dims).reshape(-1, nf * nf)
            norms = np.concatenate([np.ones(nf), np.full(dims.n_feature_pairs, 1 / (2 * N)),
                                    np.full(dims.n_node_pairs, 1 / (2 * F))])
            worst = max(worst, np.abs(U @ U.T - np.diag(norms)).max())
            B = rng.standard_normal((nf, nf))
            S = project(B, dims)
            P = assemble(S)
            worst = max(worst, np.abs(assemble(project(P, dims)) - P).max())
            worst = max(worst, np.abs(basis_inner_all(B - P, dims)).max())
            # least-squares fit over the materialized basis (vec is column-major)
            coef, *_ = np.linalg.lstsq(U.T, B.ravel(), rcond=None)
            worst = max(worst, np.abs((U.T @ coef).reshape(nf, nf) - P).max())
            dec = (np.diag(S.diag.ravel(order="F")) + np.kron(S.a_f, np.eye(N))
                   + np.kron(np.eye(F), S.a_n))
            worst = max(worst, np.abs(dec - P).max())
    elapsed = time.perf_counter() - tic
    verdict(2, worst <= 1e-10 and elapsed < 5.0,
            f"max deviation {worst:.1e} over N, F <= 6 in {elapsed:.2f} s")


@pytest.mark.parametrize("M", [1, 4])
def test_03_homotopy_matches_batch(verdict, M):
    tic = time.perf_counter()
    worst, all_same, all_conv, lams = 0.0, True, True, []
    for state, gram, cov, info in online_run(5, 3, M, 100, seed=30 + M, eta=1e-3):
        rel, same, rep = compare_with_batch(state, cov, tol=1e-10)
        worst = max(worst, rel)
        all_same &= same
        all_conv &= rep.converged
        lams.append(state.lam)
    elapsed = time.perf_counter() - tic
    ok = worst <= 1e-5 and all_same and all_conv and elapsed < 120
    verdict(3, ok, f"M={M}: max rel {worst:.1e}, supports equal {all_same}, "
                   f"lambda {lams[0]:.4f} -> {lams[-1]:.4f}, {elapsed:.1f} s")


def test_04_kkt_after_every_path_call(verdict, monkeypatch):
    worst, calls = [0.0], [0]

    def checked(fn):
        def wrapper(state, gram, *args, **kw):
            out = fn(state, gram, *args, **kw)
            worst[0] = max(worst[0], kkt_residual(state, gram))
            calls[0] += 1
            return out
        return wrapper

    monkeypatch.setattr(homotopy, "reg_path", checked(homotopy.reg_path))
    monkeypatch.setattr(homotopy, "data_path", checked(homotopy.data_path))
    streams = [(5, 3, 1, 0), (5, 3, 4, 1), (4, 2, 3, 2), (6, 2, 1, 3), (3, 3, 12, 4)]
    for N, F, M, seed in streams:
        for _ in online_run(N, F, M, 80, seed=seed, eta=1e-3):
            pass
    verdict(4, worst[0] <= 1e-7, f"max KKT residual {worst[0]:.1e} over {calls[0]} path calls")


def test_05_inverse_maintenance(verdict):
    dims = GraphDims(5, 3, 4)
    model = random_true_model(dims, seed=[50, 0])
    X = simulate(model, 1020, seed=[50, 1])
    cov = CovState.from_stream(X[:21], dims, "augmented")
    state, gram = warm_start(cov, 0.02)
    for s in range(21, 1021):
        online_step(state, gram, cov, X[s], 1e-3)
    direct = np.linalg.inv(cov.gamma0)
    e_cov = np.linalg.norm(cov.gamma0_inv - direct) / np.linalg.norm(direct)
    H = build_big_gram(cov).q0[np.ix_(state.active, state.active)]
    Hi = np.linalg.inv(H)
    e_h = np.linalg.norm(state.hinv - Hi) / np.linalg.norm(Hi)
    verdict(5, max(e_cov, e_h) <= 1e-8,
            f"after 1000 updates: covariance inverse {e_cov:.1e}, active gram inverse {e_h:.1e}")


@pytest.mark.parametrize("P", [1, 3])
def test_06_wald_calibration(verdict, P):
    dims = GraphDims(4, 3)
    entries = [node_basis_index(dims, 0, 1), node_basis_index(dims, 1, 2),
               node_basis_index(dims, 0, 3)][:P]
    crit = chi2_quantile(P, 0.9)
    reps, rejected = 300, 0
    for rep in range(reps):
        m = random_true_model(dims, zero_node_graph=True, seed=[60 + P, rep])
        cov = CovState.from_stream(simulate(m, 2000, seed=[61 + P, rep]), dims)
        rejected += wald_statistic(cov, entries)[0] > crit
    rate = rejected / reps
    verdict(6, 0.05 <= rate <= 0.15, f"P={P}: rejection rate {rate:.3f} over {reps} replications")


def test_07_qualitative_reproduction(verdict):
    tic = time.perf_counter()
    cfg = RunConfig(n_nodes=10, n_features=4, period=12, t_total=600, lam0=0.03, eta=5e-6,
                    replications=30, seed=7)
    runs = run_experiment(cfg)
    mean_rmsd = {}
    for name in ("lowdim", "highdim"):
        for t in (182, 591):
            mean_rmsd[name, t] = np.mean([r["rmsd"] for _, res in runs for r in res.records
                                          if r["estimator"] == name and r["t"] == t])
    lam = np.mean([[r["lambda"] for r in res.records if r["estimator"] == "highdim"]
                   for _, res in runs], axis=0)
    increases = int(np.sum(np.diff(lam) > 0))
    trend = max(res.trend_error for _, res in runs)
    elapsed = time.perf_counter() - tic
    ok = (all(mean_rmsd[n, 591] < mean_rmsd[n, 182] for n in ("lowdim", "highdim"))
          and increases == 0 and trend <= 0.1 and elapsed < 900)
    detail = ", ".join(f"{n} rmsd {mean_rmsd[n, 182]:.3f} -> {mean_rmsd[n, 591]:.3f}"
                       for n in ("lowdim", "highdim"))
    verdict(7, ok, f"{detail}; mean lambda {lam[0]:.4f} -> {lam[-1]:.4f} with {increases} "
                   f"increases; worst trend error {trend:.3f}; {elapsed:.0f} s")


def test_08_homotopy_faster_than_batch(verdict):
    dims = GraphDims(20, 5, 12)
    model = random_true_model(dims, seed=[80, 0])
    t0, steps = 300, 40
    X = simulate(model, t0 + steps, seed=[80, 1])
    cov = CovState.from_stream(X[:t0 + 1], dims, "augmented")
    state, gram = warm_start(cov, 0.03)
    online_step(state, gram, cov, X[t0 + 1], 5e-6)
    fast, slow = [], []
    for s in range(t0 + 2, t0 + steps + 1):
        fast.append(online_step(state, gram, cov, X[s], 5e-6)["wall_time"])
        if s % 4 == 0:
            tic = time.perf_counter()
            solve_batch(BatchProblem.from_cov(cov, state.lam))
            slow.append(time.perf_counter() - tic)
    ratio = np.median(slow) / np.median(fast)
    verdict(8, ratio >= 5.0, f"median online update {1e3 * np.median(fast):.2f} ms, cold batch "
                             f"{1e3 * np.median(slow):.2f} ms, ratio {ratio:.1f}")


def _loss_after(state, gram, lam, x, y):
    s = state.copy()
    reg_path(s, gram, lam)
    r = y - assemble(s.estimate()) @ x
    return 0.5 * r @ r


def test_09_lambda_derivative(verdict):
    rng = np.random.default_rng(90)
    worst, checked, seed = 0.0, 0, 0
    while checked < 50 and seed < 400:
        seed += 1
        N, F = rng.integers(3, 6), rng.integers(1, 4)
        model, X = random_stream(N, F, t=int(rng.integers(60, 200)), seed=900 + seed)
        cov = CovState.from_stream(X, GraphDims(N, F))
        state, gram = warm_start(cov, float(rng.uniform(0.002, 0.02)))
        if state.n_active_edges == 0 or homotopy.at_breakpoint(state, gram, 1e-6):
            continue
        x = X[-1]
        y = model.matrix @ x + rng.standard_normal(N * F) * 0.5
        d = lambda_gradient(state, x, y)
        h = 1e-6
        fd = (_loss_after(state, gram, state.lam + h, x, y)
              - _loss_after(state, gram, state.lam - h, x, y)) / (2 * h)
        worst = max(worst, abs(d - fd) / max(abs(fd), 1e-12))
        checked += 1
    verdict(9, checked == 50 and worst <= 1e-4,
            f"{checked} states, max relative gap {worst:.1e}")


def test_10_augmented_beats_stationary(verdict):
    dims = GraphDims(10, 4, 12)
    errs = []
    for rep in range(3):
        model = random_true_model(dims, seed=[100, rep])
        X = simulate(model, 5000, seed=[101, rep])
        e = {mode: rmsd(projected_ols(CovState.from_stream(X, dims, mode)), model.coef)
             for mode in ("stationary", "augmented")}
        errs.append((e["augmented"], e["stationary"]))
    ok = all(a <= s / 3 for a, s in errs)
    verdict(10, ok, "augmented vs stationary rmsd at t=5000: "
                    + ", ".join(f"{a:.3f} vs {s:.3f}" for a, s in errs))

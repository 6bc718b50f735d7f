"""Experiment runner, metrics and stream I/O.

Two estimators can be run side by side on one stream:

``lowdim``
    projected least squares with Wald sparsification, available once the
    lag-0 autocovariance is invertible;
``highdim``
    the online Lasso, warm-started by a batch solve at ``t0``.

Every step emits one record per running estimator with the time index,
the accumulated relative one-step prediction error, the relative
coefficient error against the truth (when known), the penalty level (online
Lasso only) and the wall time of the update.
"""

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .basis import GraphDims, StructuredCoef, assemble
from .covariance import CovState
from .homotopy import HomotopyAbort, kkt_residual, online_step, warm_start
from .model import TrueModel, random_true_model, simulate
from .ols_wald import ols_estimate, sparsify


class SchemaError(ValueError):
    """Malformed input stream or configuration."""


class SolverAbort(RuntimeError):
    """The online solver and its batch fallback both failed."""


def rmsd(est, truth):
    """``||A_est - A_true||_F / ||A_true||_F`` on the dense matrices."""
    A = assemble(truth) if isinstance(truth, StructuredCoef) else np.asarray(truth)
    B = assemble(est) if isinstance(est, StructuredCoef) else np.asarray(est)
    den = np.linalg.norm(A)
    if den == 0:
        raise ValueError("relative error undefined for an all-zero truth")
    return float(np.linalg.norm(B - A) / den)


def trend_error(est, truth):
    """Largest relative error ``max_m ||b_hat_m - b_m|| / ||b_m||`` over phases."""
    est, truth = np.asarray(est), np.asarray(truth)
    num = np.linalg.norm(est - truth, axis=1)
    den = np.linalg.norm(truth, axis=1)
    if np.any(den == 0):
        raise ValueError("relative trend error undefined for a zero phase")
    return float(np.max(num / den))


@dataclass
class PredErrAccumulator:
    """Running mean of ``||x_next - pred|| / ||x_next||``.

    Transitions with ``x_next == 0`` are skipped and counted in ``skipped``.
    ``value`` is ``None`` until the first prediction has been scored.
    """

    total: float = 0.0
    count: int = 0
    skipped: int = 0

    def add(self, x_next, pred):
        den = float(np.linalg.norm(x_next))
        if den == 0:
            self.skipped += 1
            return self.value
        self.total += float(np.linalg.norm(x_next - pred)) / den
        self.count += 1
        return self.value

    @property
    def value(self):
        return self.total / self.count if self.count else None


@dataclass
class RunConfig:
    """Configuration of one experiment (all replications share it)."""

    n_nodes: int = 10
    n_features: int = 4
    period: int = 12
    t_total: int = 600
    estimators: str = "both"
    mode: str = None
    significance: float = 0.1
    use_f: bool = False
    lam0: float = 0.03
    t0: int = 20
    eta: float = 5e-6
    replications: int = 1
    seed: int = 0
    edge_density: float = 0.2
    value_scale: float = 1.0
    target_norm: float = 0.8
    noise_scale: float = 0.4
    trend_scale: float = 2.0
    noise: str = "gaussian"
    checkpoints: list = field(default_factory=list)
    diagnostics: bool = False

    def __post_init__(self):
        if self.mode is None:
            self.mode = "augmented" if self.period > 1 else "stationary"
        self.validate()

    @property
    def dims(self):
        return GraphDims(self.n_nodes, self.n_features, self.period)

    def validate(self):
        try:
            self.dims
        except ValueError as exc:
            raise SchemaError(str(exc)) from exc
        if self.estimators not in ("lowdim", "highdim", "both"):
            raise SchemaError("estimators must be lowdim, highdim or both")
        if self.mode not in ("stationary", "augmented"):
            raise SchemaError("mode must be stationary or augmented")
        if not 0 < self.significance < 1:
            raise SchemaError("significance must lie in (0, 1)")
        if self.lam0 < 0 or self.eta < 0:
            raise SchemaError("lam0 and eta must be non-negative")
        if self.t0 < 1 or self.t_total < 1 or self.replications < 1:
            raise SchemaError("t0, t_total and replications must be positive")

    @classmethod
    def from_dict(cls, obj):
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise SchemaError(f"unknown configuration keys: {sorted(unknown)}")
        return cls(**obj)

    def to_dict(self):
        return asdict(self)


@dataclass
class RunResult:
    records: list
    snapshots: dict
    trend_error: float = None
    final: dict = field(default_factory=dict)


def _lowdim_estimate(cov, cfg):
    w = sparsify(cov, cfg.significance, use_f=cfg.use_f)
    A_ols = ols_estimate(cov)
    return w.estimate, A_ols


def run_stream(X, cfg, truth=None, emit=None):
    """Run the configured estimators over the rows of ``X``.

    Parameters
    ----------
    X : ndarray, shape (T + 1, NF)
        Observations ``x_0 .. x_T``.
    cfg : RunConfig
    truth : TrueModel, optional
        Enables the coefficient and trend errors.
    emit : callable, optional
        Called with every record as it is produced.
    """
    dims = cfg.dims
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != dims.nf:
        raise SchemaError(f"stream must have {dims.nf} columns, got {X.shape}")
    T = X.shape[0] - 1
    want_low = cfg.estimators in ("lowdim", "both")
    want_high = cfg.estimators in ("highdim", "both")
    A_true = truth.matrix if truth is not None else None
    cov = CovState(dims, cfg.mode)
    cov.push(X[0])
    acc = {"lowdim": PredErrAccumulator(), "highdim": PredErrAccumulator()}
    low = None    # (estimate, dense estimate, intercept source)
    high = None   # (state, gram)
    records, snapshots = [], {}
    checkpoints = set(cfg.checkpoints)

    def record(name, t, est_dense, wall, extra):
        rec = {"t": t, "estimator": name, "pred_err": acc[name].value,
               "wall_ms": 1e3 * wall}
        if A_true is not None:
            rec["rmsd"] = float(np.linalg.norm(est_dense - A_true) / np.linalg.norm(A_true))
        rec.update(extra)
        records.append(rec)
        if emit is not None:
            emit(rec)

    for s in range(1, T + 1):
        x_cur, x_next = X[s - 1], X[s]
        t = s - 1
        if low is not None:
            A_hat, A_ols = low
            b = cov.intercept(A_ols, t + 1)
            acc["lowdim"].add(x_next, b + A_hat @ x_cur)
        if high is not None:
            A_hat = assemble(high[0].estimate())
            b = cov.intercept(A_hat, t + 1)
            acc["highdim"].add(x_next, b + A_hat @ x_cur)

        tic = time.perf_counter()
        if high is not None:
            try:
                info = online_step(high[0], high[1], cov, x_next, cfg.eta)
            except HomotopyAbort as exc:
                raise SolverAbort(f"online solver failed at t={s}: {exc}") from exc
            wall_high = info["wall_time"]
            wall_cov = 0.0
        else:
            cov.push(x_next)
            wall_cov = time.perf_counter() - tic

        if want_high and high is None and cov.t >= cfg.t0:
            tic = time.perf_counter()
            try:
                state, gram = warm_start(cov, cfg.lam0)
            except HomotopyAbort as exc:
                raise SolverAbort(f"warm start failed at t={s}: {exc}") from exc
            high = (state, gram)
            wall_high = time.perf_counter() - tic + wall_cov

        if want_low and cov.ready:
            tic = time.perf_counter()
            est, A_ols = _lowdim_estimate(cov, cfg)
            A_hat = assemble(est)
            low = (A_hat, A_ols)
            record("lowdim", s, A_hat, time.perf_counter() - tic + wall_cov, {})
            if s in checkpoints:
                snapshots[("lowdim", s)] = est
        if high is not None:
            state = high[0]
            est = state.estimate()
            extra = {"lambda": state.lam, "active_count": state.n_active_edges}
            if cfg.diagnostics:
                extra["kkt_residual"] = kkt_residual(state, high[1])
            record("highdim", s, assemble(est), wall_high, extra)
            if s in checkpoints:
                snapshots[("highdim", s)] = est

    res = RunResult(records, snapshots)
    if (truth is not None and cfg.mode == "augmented" and dims.period > 1
            and np.all(cov.counts > 0)):
        res.trend_error = trend_error(cov.trend(), truth.trend)
    for name in ("lowdim", "highdim"):
        last = [r for r in records if r["estimator"] == name]
        if last:
            res.final[name] = last[-1]
    return res


def make_truth(cfg, rep):
    return random_true_model(cfg.dims, edge_density=cfg.edge_density,
                             value_scale=cfg.value_scale, target_norm=cfg.target_norm,
                             noise_scale=cfg.noise_scale, trend_scale=cfg.trend_scale,
                             seed=[cfg.seed, rep, 0])


def run_experiment(cfg, emit=None):
    """Draw ``cfg.replications`` models and streams and run each of them.

    Returns a list of ``(TrueModel, RunResult)``.
    """
    out = []
    for rep in range(cfg.replications):
        truth = make_truth(cfg, rep)
        X = simulate(truth, cfg.t_total, seed=[cfg.seed, rep, 1], noise=cfg.noise)

        def tagged(rec, rep=rep):
            if emit is not None:
                emit({"replication": rep, **rec})

        out.append((truth, run_stream(X, cfg, truth, emit=tagged)))
    return out


def summarize(records, key):
    """Mean and standard deviation of ``key`` per ``(estimator, t)``."""
    groups = {}
    for r in records:
        if key in r and r[key] is not None and not (isinstance(r[key], float)
                                                    and math.isnan(r[key])):
            groups.setdefault((r["estimator"], r["t"]), []).append(r[key])
    rows = []
    for (name, t), vals in sorted(groups.items()):
        v = np.asarray(vals, dtype=float)
        rows.append({"estimator": name, "t": t, "mean": float(v.mean()),
                     "std": float(v.std()), "n": len(v)})
    return rows


# ---------------------------------------------------------------------------
# stream files

def write_csv(path, X, dims, layout="long"):
    """Write ``x_0 .. x_T`` as ``t,node,feature,value`` rows or one wide row per t."""
    X = np.asarray(X, dtype=float)
    N, F = dims.n_nodes, dims.n_features
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if layout == "long":
            w.writerow(["t", "node", "feature", "value"])
            for t, x in enumerate(X):
                for f in range(F):
                    for n in range(N):
                        w.writerow([t, n, f, repr(float(x[f * N + n]))])
        elif layout == "wide":
            w.writerow(["t"] + [f"x_{n}_{f}" for f in range(F) for n in range(N)])
            for t, x in enumerate(X):
                w.writerow([t] + [repr(float(v)) for v in x])
        else:
            raise ValueError(f"unknown layout {layout!r}")


def read_csv(path, n_nodes=None, n_features=None):
    """Read a stream written by :func:`write_csv` (either layout).

    Returns ``(X, (N, F))``.  Missing, duplicated or non-finite cells raise
    :class:`SchemaError` naming the offending ``(t, node, feature)``.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SchemaError("empty stream file")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if r and any(c.strip() for c in r)]
    if header == ["t", "node", "feature", "value"]:
        return _read_long(body, n_nodes, n_features)
    if header and header[0] == "t" and all(h.startswith("x_") for h in header[1:]):
        return _read_wide(header, body, n_nodes, n_features)
    raise SchemaError("unrecognised header; expected t,node,feature,value or t,x_<node>_<feature>...")


def _as_number(text, what, cast=float):
    try:
        return cast(text)
    except ValueError as exc:
        raise SchemaError(f"cannot parse {what}: {text!r}") from exc


def _read_long(body, n_nodes, n_features):
    cells = {}
    t_prev = 0
    for line, r in enumerate(body, start=2):
        if len(r) != 4:
            raise SchemaError(f"line {line}: expected 4 fields, got {len(r)}")
        t = _as_number(r[0], f"t on line {line}", int)
        if t < t_prev:
            raise SchemaError(f"line {line}: t={t} after t={t_prev}; rows must be ordered by t")
        t_prev = t
        n = _as_number(r[1], f"node on line {line}", int)
        f = _as_number(r[2], f"feature on line {line}", int)
        v = _as_number(r[3], f"value on line {line}")
        if t < 0 or n < 0 or f < 0:
            raise SchemaError(f"line {line}: negative index")
        if (t, n, f) in cells:
            raise SchemaError(f"duplicate cell (t={t}, node={n}, feature={f})")
        if not math.isfinite(v):
            raise SchemaError(f"non-finite value at (t={t}, node={n}, feature={f})")
        cells[(t, n, f)] = v
    if not cells:
        raise SchemaError("stream has no data rows")
    N = n_nodes or 1 + max(k[1] for k in cells)
    F = n_features or 1 + max(k[2] for k in cells)
    T = max(k[0] for k in cells)
    X = np.empty((T + 1, N * F))
    for t in range(T + 1):
        for f in range(F):
            for n in range(N):
                try:
                    X[t, f * N + n] = cells.pop((t, n, f))
                except KeyError:
                    raise SchemaError(f"missing cell (t={t}, node={n}, feature={f})") from None
    if cells:
        t, n, f = next(iter(cells))
        raise SchemaError(f"cell (t={t}, node={n}, feature={f}) is outside the declared dimensions")
    return X, (N, F)


def _read_wide(header, body, n_nodes, n_features):
    pos = []
    for h in header[1:]:
        parts = h.split("_")
        if len(parts) != 3:
            raise SchemaError(f"bad column name {h!r}")
        pos.append((_as_number(parts[1], "node", int), _as_number(parts[2], "feature", int)))
    N = n_nodes or 1 + max(p[0] for p in pos)
    F = n_features or 1 + max(p[1] for p in pos)
    col = {}
    for c, (n, f) in enumerate(pos):
        if (n, f) in col:
            raise SchemaError(f"duplicate column for node={n}, feature={f}")
        col[(n, f)] = c + 1
    X = np.empty((len(body), N * F))
    for line, r in enumerate(body, start=2):
        t = _as_number(r[0], f"t on line {line}", int)
        if t != line - 2:
            raise SchemaError(f"line {line}: expected t={line - 2}, got {t}")
        for f in range(F):
            for n in range(N):
                c = col.get((n, f))
                if c is None or c >= len(r) or not r[c].strip():
                    raise SchemaError(f"missing cell (t={t}, node={n}, feature={f})")
                v = _as_number(r[c], f"value at (t={t}, node={n}, feature={f})")
                if not math.isfinite(v):
                    raise SchemaError(f"non-finite value at (t={t}, node={n}, feature={f})")
                X[t, f * N + n] = v
    if not len(X):
        raise SchemaError("stream has no data rows")
    return X, (N, F)


def write_jsonl(path, records):
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r) + "\n")


def read_jsonl(path):
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


def save_model(path, model):
    with open(path, "w") as fh:
        json.dump(model.to_json(), fh)


def load_model(path):
    with open(path) as fh:
        return TrueModel.from_json(json.load(fh))

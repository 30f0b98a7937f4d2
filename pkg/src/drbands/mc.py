"""Monte Carlo harness: synthetic designs, rejection experiments, comparators.

Two data-generating designs drive the size studies. In both, the scalar
response has conditional law P(y <= t | x) = Lambda(x' theta_t) for an affine
or power transform of a logistic disturbance, so every threshold regression
is correctly specified with a known coefficient vector:

* design 1: y = x' b0 + e, x1 == 1, the rest AR(1)-correlated standard
  normals; theta_t = t e1 - b0 over thresholds t in [1, 2.5].
* design 2: y = ((x' b0 + e) / (x' v0))^3 with x = |w|, w AR(1) normal and
  v0 equal to 1/8 on the first and last four coordinates; theta_t =
  cbrt(t) v0 - b0 over thresholds t in [-0.5, 0.5].

Coefficient variant "i" decays as 2/j^2; variant "ii" has a -10 leading
coefficient and two large correlated mid coefficients, the configuration
under which post-selection refits without orthogonalization break down.

Each replication r of an experiment derives its data and bootstrap streams
from (master seed, r) alone, so serial and partitioned runs agree bit for
bit; rejection indicators are logged per replication for audit.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, replace
from concurrent.futures import ProcessPoolExecutor

import numpy as np
from numpy.random import Generator, Philox, SeedSequence
from scipy.stats import norm

from .bootstrap import BootstrapConfig, critical_value
from .data import Dataset, IndexGrid, ResponseThresholds
from .errors import DegenerateDesignError, EstimationError, InvalidArgumentError
from .inference import InferencePlan, naive_post_selection_fit, panel_bundle

__all__ = [
    "DesignSpec",
    "TruthInfo",
    "ReportRow",
    "RejectionReport",
    "MC_METHODS",
    "gen_design1",
    "gen_design2",
    "generate_dataset",
    "bonferroni_critical",
    "run_rejection_experiment",
    "naive_post_selection_fit",
]

MC_METHODS = ("proposed-OS", "proposed-DS", "naive-MB", "naive-BF")

_DESIGN_RANGE = {1: (1.0, 2.5), 2: (-0.5, 0.5)}


@dataclass(frozen=True)
class DesignSpec:
    """One synthetic configuration: design, coefficient variant, sizes,
    raw-scale threshold set, original target coordinates, and seed."""

    design: int
    variant: str
    n: int
    p: int
    u_set: tuple[float, ...]
    j_set: tuple[int, ...]
    rho: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.design not in (1, 2):
            raise InvalidArgumentError("design must be 1 or 2")
        if self.variant not in ("i", "ii"):
            raise InvalidArgumentError("variant must be 'i' or 'ii'")
        if self.n < 2:
            raise InvalidArgumentError("n must be at least 2")
        if self.p < 1 or (self.design == 2 and self.p < 8):
            raise InvalidArgumentError("p too small for the requested design")
        if not -1.0 < self.rho < 1.0:
            raise InvalidArgumentError("rho must lie in (-1, 1)")
        if self.seed < 0:
            raise InvalidArgumentError("seed must be non-negative")
        u = tuple(float(v) for v in self.u_set)
        lo, hi = _DESIGN_RANGE[self.design]
        if not u or any(b <= a for a, b in zip(u, u[1:])):
            raise InvalidArgumentError("u_set must be non-empty and strictly increasing")
        if any(not lo <= v <= hi for v in u):
            raise InvalidArgumentError(f"u_set must lie within [{lo}, {hi}] for design {self.design}")
        j = tuple(int(v) for v in self.j_set)
        if not j or len(set(j)) != len(j) or any(not 1 <= v <= self.p for v in j):
            raise InvalidArgumentError("j_set must be distinct coordinates in 1..p")
        object.__setattr__(self, "u_set", u)
        object.__setattr__(self, "j_set", tuple(sorted(j)))


def _beta0_vector(variant: str, p: int) -> np.ndarray:
    j = np.arange(1, p + 1, dtype=np.float64)
    if variant == "i":
        return 2.0 / (j * j)
    beta = 0.5 / ((j - 3.5) * (j - 3.5))
    beta[0] = -10.0
    return beta


def _vartheta0(p: int) -> np.ndarray:
    v = np.zeros(p)
    v[:4] = 0.125
    v[-4:] = 0.125
    return v


@dataclass(frozen=True)
class TruthInfo:
    """True coefficient law of a generated dataset."""

    design: int
    variant: str
    p: int
    beta0: np.ndarray
    vartheta0: np.ndarray | None
    thresholds: ResponseThresholds
    j_original: tuple[int, ...]
    resampled_rows: int = 0

    def theta(self, u_raw: float) -> np.ndarray:
        """Full p-vector of true threshold-regression coefficients at the raw
        threshold u_raw."""
        if self.design == 1:
            vec = -self.beta0.copy()
            vec[0] += u_raw
            return vec
        return math.copysign(abs(u_raw) ** (1.0 / 3.0), u_raw) * self.vartheta0 - self.beta0

    def unit_u(self, u_raw: float) -> float:
        lo, hi = self.thresholds.y_lo, self.thresholds.y_hi
        return (u_raw - lo) / (hi - lo)

    def theta_target(self, u_raw: float, position: int) -> float:
        """Truth for the D column at 1-based ``position``."""
        return float(self.theta(u_raw)[self.j_original[position - 1] - 1])


def _ar1_columns(rng: Generator, n: int, k: int, rho: float) -> np.ndarray:
    """Unit-variance AR(1) columns: corr(col_a, col_b) = rho^{|a-b|} exactly."""
    z = rng.standard_normal((n, k))
    if k == 0:
        return z
    out = np.empty((n, k))
    out[:, 0] = z[:, 0]
    s = math.sqrt(1.0 - rho * rho)
    for m in range(1, k):
        out[:, m] = rho * out[:, m - 1] + s * z[:, m]
    return out


def _split_dataset(x_full: np.ndarray, y: np.ndarray, j_set: tuple[int, ...]) -> Dataset:
    p = x_full.shape[1]
    targets = [j - 1 for j in j_set]
    others = [k for k in range(p) if k + 1 not in j_set]
    return Dataset(
        d=x_full[:, targets],
        x=x_full[:, others],
        y=y,
        d_names=tuple(f"x{j}" for j in j_set),
        x_names=tuple(f"x{k + 1}" for k in others),
    )


def _default_rng(seed: int) -> Generator:
    return Generator(Philox(SeedSequence(int(seed))))


def gen_design1(spec: DesignSpec, rng: Generator | None = None):
    """Affine design: y = x' b0 + logistic noise, intercept first column.

    Returns (Dataset, TruthInfo)."""
    if spec.design != 1:
        raise InvalidArgumentError("spec.design must be 1")
    rng = rng if rng is not None else _default_rng(spec.seed)
    x = np.empty((spec.n, spec.p))
    x[:, 0] = 1.0
    x[:, 1:] = _ar1_columns(rng, spec.n, spec.p - 1, spec.rho)
    noise = rng.logistic(0.0, 1.0, spec.n)
    beta0 = _beta0_vector(spec.variant, spec.p)
    y = x @ beta0 + noise
    lo, hi = _DESIGN_RANGE[1]
    truth = TruthInfo(
        design=1,
        variant=spec.variant,
        p=spec.p,
        beta0=beta0,
        vartheta0=None,
        thresholds=ResponseThresholds(lo, hi),
        j_original=spec.j_set,
    )
    return _split_dataset(x, y, spec.j_set), truth


def gen_design2(spec: DesignSpec, rng: Generator | None = None):
    """Power-transform design: y = ((x' b0 + e) / (x' v0))^3 with x = |w|.

    Rows with x' v0 below 1e-12 are redrawn and counted. Returns
    (Dataset, TruthInfo)."""
    if spec.design != 2:
        raise InvalidArgumentError("spec.design must be 2")
    rng = rng if rng is not None else _default_rng(spec.seed)
    vt = _vartheta0(spec.p)
    x = np.abs(_ar1_columns(rng, spec.n, spec.p, spec.rho))
    resampled = 0
    for _ in range(100):
        bad = np.flatnonzero(x @ vt < 1e-12)
        if bad.size == 0:
            break
        resampled += int(bad.size)
        x[bad] = np.abs(_ar1_columns(rng, bad.size, spec.p, spec.rho))
    else:
        raise DegenerateDesignError("could not draw rows with positive scale index")
    noise = rng.logistic(0.0, 1.0, spec.n)
    beta0 = _beta0_vector(spec.variant, spec.p)
    y = ((x @ beta0 + noise) / (x @ vt)) ** 3
    lo, hi = _DESIGN_RANGE[2]
    truth = TruthInfo(
        design=2,
        variant=spec.variant,
        p=spec.p,
        beta0=beta0,
        vartheta0=vt,
        thresholds=ResponseThresholds(lo, hi),
        j_original=spec.j_set,
        resampled_rows=resampled,
    )
    return _split_dataset(x, y, spec.j_set), truth


def generate_dataset(spec: DesignSpec, rng: Generator | None = None):
    return (gen_design1 if spec.design == 1 else gen_design2)(spec, rng)


def bonferroni_critical(alpha: float, grid_size: int) -> float:
    """Normal quantile at 1 - alpha / (2 * grid_size)."""
    if not 0.0 < alpha < 1.0:
        raise InvalidArgumentError("alpha must lie in (0, 1)")
    if grid_size < 1:
        raise InvalidArgumentError("grid_size must be positive")
    return float(norm.isf(alpha / (2.0 * grid_size)))


@dataclass(frozen=True)
class ReportRow:
    method: str
    scope: str  # "uniform" or "pointwise"
    u: float | None
    j: int | None
    frequency: float
    rejections: int
    replications: int
    mc_se: float


@dataclass(frozen=True)
class RejectionReport:
    """Rejection frequencies per method and scope, with a full audit trail."""

    rows: tuple[ReportRow, ...]
    methods: tuple[str, ...]
    reps: int
    failures: int
    seed: int
    alpha: float
    b: int
    spec: DesignSpec
    audit: tuple[dict, ...]

    def row(self, method: str, scope: str, u: float | None = None, j: int | None = None) -> ReportRow:
        for r in self.rows:
            if r.method == method and r.scope == scope and r.u == u and r.j == j:
                return r
        raise KeyError((method, scope, u, j))

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(
                ["method", "scope", "u", "j", "frequency", "rejections", "replications", "mc_se"]
            )
            for r in self.rows:
                writer.writerow([
                    r.method,
                    r.scope,
                    "" if r.u is None else repr(float(r.u)),
                    "" if r.j is None else r.j,
                    repr(float(r.frequency)),
                    r.rejections,
                    r.replications,
                    repr(float(r.mc_se)),
                ])

    def to_json(self, path) -> None:
        payload = {
            "spec": asdict(self.spec),
            "methods": list(self.methods),
            "reps": self.reps,
            "failures": self.failures,
            "seed": self.seed,
            "alpha": self.alpha,
            "b": self.b,
            "rows": [asdict(r) for r in self.rows],
            "audit": list(self.audit),
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=1, sort_keys=True)
            fh.write("\n")


_PANEL_FOR_METHOD = {
    "proposed-OS": "orthogonal-score",
    "proposed-DS": "double-selection",
    "proposed-1S": "one-step",
    "naive-MB": "naive",
    "naive-BF": "naive",
}


def _replication_worker(task) -> dict:
    spec, plan, boot, methods, master_seed, r = task
    rng = Generator(Philox(SeedSequence(entropy=(master_seed, r, 0))))
    try:
        ds, truth = generate_dataset(spec, rng)
        grid = IndexGrid(
            u_values=tuple(truth.unit_u(u) for u in spec.u_set),
            j_values=tuple(range(1, len(spec.j_set) + 1)),
        )
        plan = replace(plan, thresholds=truth.thresholds)
        boot_seed = int(SeedSequence(entropy=(master_seed, r, 1)).generate_state(1, np.uint64)[0])
        bcfg = replace(boot, seed=boot_seed)
        panel_methods = tuple(dict.fromkeys(_PANEL_FOR_METHOD[m] for m in methods))
        panels = panel_bundle(ds, grid, plan, panel_methods)
        truth_vals = np.array([
            truth.theta_target(u_raw, pos)
            for u_raw in spec.u_set
            for pos in grid.j_values
        ])
        z_point = float(norm.ppf(1.0 - bcfg.alpha / 2.0))
        bf = bonferroni_critical(bcfg.alpha, grid.size)
        out = {"replication": r, "ok": True, "resampled_rows": truth.resampled_rows, "methods": {}}
        crit_cache: dict[str, float] = {}
        for method in methods:
            panel = panels[_PANEL_FOR_METHOD[method]]
            theta = np.array([c.theta_check for c in panel.cells])
            sig = np.array([c.sigma_hat for c in panel.cells])
            scaled = np.abs(theta - truth_vals) / (sig / math.sqrt(ds.n))
            if method == "naive-BF":
                crit = bf
            else:
                key = _PANEL_FOR_METHOD[method]
                if key not in crit_cache:
                    crit_cache[key] = critical_value(panel, bcfg)
                crit = crit_cache[key]
            flagged = sum(
                1 for c in panel.cells
                if c.flags.get("pilot_capped") or c.flags.get("refit_capped")
                or c.flags.get("boundary_solution")
            )
            out["methods"][method] = {
                "critical": crit,
                "theta": theta.tolist(),
                "sigma": sig.tolist(),
                "uniform": bool(np.any(scaled > crit)),
                "simultaneous_violations": (scaled > crit).tolist(),
                "pointwise": (scaled > z_point).tolist(),
                "flagged_cells": flagged,
            }
        return out
    except (EstimationError, np.linalg.LinAlgError) as exc:
        return {"replication": r, "ok": False, "error": f"{type(exc).__name__}: {exc}"}


def run_rejection_experiment(
    spec: DesignSpec,
    region: IndexGrid | None = None,
    methods: tuple[str, ...] = ("proposed-OS",),
    reps: int = 200,
    bootstrap: BootstrapConfig | None = None,
    plan: InferencePlan | None = None,
    threads: int = 1,
) -> RejectionReport:
    """Rejection frequencies of nominal-level bands over synthetic draws.

    ``region`` defaults to the spec's full u_set x j_set grid (given
    explicitly, it must use unit-scale u and 1-based D positions). Exceeding
    a 5% replication failure rate aborts. Replication r is driven entirely
    by (spec.seed, r), so the thread count never changes the result.
    """
    for m in methods:
        if m not in _PANEL_FOR_METHOD:
            raise InvalidArgumentError(f"unknown method {m!r}; known: {sorted(_PANEL_FOR_METHOD)}")
    if reps < 1:
        raise InvalidArgumentError("reps must be positive")
    if threads < 1:
        raise InvalidArgumentError("threads must be positive")
    bootstrap = bootstrap if bootstrap is not None else BootstrapConfig(b=1000)
    lo, hi = _DESIGN_RANGE[spec.design]
    if plan is None:
        plan = InferencePlan(thresholds=ResponseThresholds(lo, hi))
    if region is not None:
        u_raw = tuple(lo + u * (hi - lo) for u in region.u_values)
        positions = region.j_values
        if any(pos > len(spec.j_set) for pos in positions):
            raise InvalidArgumentError("region j positions exceed the target count")
        spec = replace(spec, u_set=u_raw)
    methods = tuple(methods)
    tasks = [(spec, plan, bootstrap, methods, spec.seed, r) for r in range(reps)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            audit = list(pool.map(_replication_worker, tasks, chunksize=1))
    else:
        audit = [_replication_worker(t) for t in tasks]
    failures = sum(1 for a in audit if not a["ok"])
    if failures > 0.05 * reps:
        raise DegenerateDesignError(
            f"{failures} of {reps} replications failed (limit is 5%)"
        )
    good = [a for a in audit if a["ok"]]
    if not good:
        raise DegenerateDesignError("no successful replications")
    total = len(good)

    def _freq(count: int) -> tuple[float, float]:
        f = count / total
        return f, math.sqrt(f * (1.0 - f) / total)

    rows = []
    cell_labels = [(u_raw, orig_j) for u_raw in spec.u_set for orig_j in spec.j_set]
    for method in methods:
        count = sum(1 for a in good if a["methods"][method]["uniform"])
        f, se = _freq(count)
        rows.append(ReportRow(method, "uniform", None, None, f, count, total, se))
        for idx, (u_raw, orig_j) in enumerate(cell_labels):
            count = sum(1 for a in good if a["methods"][method]["pointwise"][idx])
            f, se = _freq(count)
            rows.append(ReportRow(method, "pointwise", u_raw, orig_j, f, count, total, se))
    return RejectionReport(
        rows=tuple(rows),
        methods=methods,
        reps=reps,
        failures=failures,
        seed=spec.seed,
        alpha=bootstrap.alpha,
        b=bootstrap.b,
        spec=spec,
        audit=tuple(audit),
    )

"""Command-line front end.

Two subcommands, both driven by a JSON config file with optional flag
overrides:

* ``drbands fit --config cfg.json`` ingests a CSV, estimates bands over the
  configured (u, j) grid, and writes bands.csv, series.csv, summary.json.
* ``drbands mc --config cfg.json`` runs a rejection experiment on a
  synthetic design and writes report.csv, report.json.

The summary's "config" block is the fully resolved configuration: feeding it
back in reproduces every output byte for byte. All randomness flows from the
single top-level seed. Exit codes: 0 success, 2 validation failure,
3 numerical failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .bootstrap import BandTable, BootstrapConfig, build_bands, critical_value
from .data import ColumnRoles, IndexGrid, ResponseThresholds, load_csv_dataset
from .errors import ConfigurationError, EstimationError, InvalidArgumentError
from .inference import METHODS, InferencePlan, build_score_panel
from .logistic import PenaltyConfig
from .mc import MC_METHODS, DesignSpec, run_rejection_experiment

__all__ = ["main", "cmd_fit", "cmd_mc"]

_METHOD_SHORT = {
    "os": "orthogonal-score",
    "ds": "double-selection",
    "onestep": "one-step",
    "naive": "naive",
}
_MC_METHOD_SHORT = {
    "os": "proposed-OS",
    "ds": "proposed-DS",
    "onestep": "proposed-1S",
    "naive": "naive-MB",
}

_PLAN_KEYS = ("theta_tol", "box_scale", "sigma_at_theta_check", "sigma_alt_inverse",
              "ds_step3_x_only")


def _fmt(v: float) -> str:
    return repr(float(v))


def _require(cfg: dict, key: str):
    if key not in cfg:
        raise ConfigurationError(f"config is missing required key {key!r}")
    return cfg.pop(key)


def _reject_leftovers(cfg: dict, where: str) -> None:
    if cfg:
        raise ConfigurationError(f"unknown {where} config keys: {sorted(cfg)}")


def _resolve_method(raw: str) -> str:
    name = _METHOD_SHORT.get(raw, raw)
    if name not in METHODS:
        raise ConfigurationError(f"unknown method {raw!r}")
    return name


def _penalty_from(cfg: dict) -> PenaltyConfig:
    sub = dict(cfg.pop("penalty", {}))
    known = set(PenaltyConfig.__dataclass_fields__)
    bad = set(sub) - known
    if bad:
        raise ConfigurationError(f"unknown penalty config keys: {sorted(bad)}")
    return PenaltyConfig(**sub)


def _plan_switches(cfg: dict) -> dict:
    sub = dict(cfg.pop("plan", {}))
    bad = set(sub) - set(_PLAN_KEYS)
    if bad:
        raise ConfigurationError(f"unknown plan config keys: {sorted(bad)}")
    return sub


def _bootstrap_from(cfg: dict, seed: int) -> BootstrapConfig:
    sub = dict(cfg.pop("bootstrap", {}))
    bad = set(sub) - {"b", "alpha"}
    if bad:
        # the seed lives at the top level so there is exactly one of it
        raise ConfigurationError(f"unknown bootstrap config keys: {sorted(bad)}")
    return BootstrapConfig(b=int(sub.get("b", 5000)), alpha=float(sub.get("alpha", 0.05)),
                           seed=seed)


def _u_values(cfg: dict) -> tuple[float, ...]:
    spec = _require(cfg, "u")
    if not isinstance(spec, dict):
        raise ConfigurationError("'u' must be an object")
    spec = dict(spec)
    if "values" in spec:
        values = tuple(float(v) for v in spec.pop("values"))
        _reject_leftovers(spec, "'u'")
        return values
    try:
        count = int(spec.pop("count"))
        lo = float(spec.pop("min"))
        hi = float(spec.pop("max"))
    except KeyError as exc:
        raise ConfigurationError("'u' needs either 'values' or count/min/max") from exc
    _reject_leftovers(spec, "'u'")
    if count < 1:
        raise ConfigurationError("'u' count must be positive")
    if count == 1:
        if lo != hi:
            raise ConfigurationError("a 1-point u grid needs min == max")
        return (lo,)
    return tuple(float(v) for v in np.linspace(lo, hi, count))


def _thresholds_from(cfg: dict, y: np.ndarray) -> ResponseThresholds:
    spec = cfg.pop("thresholds", None)
    if spec is None:
        return ResponseThresholds.from_quantiles(y)
    spec = dict(spec)
    if set(spec) == {"y_lo", "y_hi"}:
        return ResponseThresholds(float(spec["y_lo"]), float(spec["y_hi"]))
    if set(spec) == {"quantiles"}:
        lo, hi = spec["quantiles"]
        return ResponseThresholds.from_quantiles(y, float(lo), float(hi))
    raise ConfigurationError("'thresholds' needs y_lo/y_hi or quantiles")


def _write_bands_csv(path: Path, table: BandTable) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("u,j,name,theta_check,sigma_hat,lo_point,hi_point,lo_simul,hi_simul,flags\n")
        for i in range(table.size):
            fh.write(",".join([
                _fmt(table.u[i]),
                str(int(table.j[i])),
                table.names[i],
                _fmt(table.theta[i]),
                _fmt(table.sigma[i]),
                _fmt(table.lo_pointwise[i]),
                _fmt(table.hi_pointwise[i]),
                _fmt(table.lo_simultaneous[i]),
                _fmt(table.hi_simultaneous[i]),
                table.flags[i],
            ]) + "\n")


def _write_series_csv(path: Path, table: BandTable) -> None:
    """Plot-ready long format: one curve block per j, rows ordered by u."""
    order = sorted(range(table.size), key=lambda i: (int(table.j[i]), float(table.u[i])))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("j,name,u,theta_check,lo_point,hi_point,lo_simul,hi_simul\n")
        for i in order:
            fh.write(",".join([
                str(int(table.j[i])),
                table.names[i],
                _fmt(table.u[i]),
                _fmt(table.theta[i]),
                _fmt(table.lo_pointwise[i]),
                _fmt(table.hi_pointwise[i]),
                _fmt(table.lo_simultaneous[i]),
                _fmt(table.hi_simultaneous[i]),
            ]) + "\n")


def cmd_fit(config: dict, out_dir: Path) -> int:
    t0 = time.perf_counter()
    cfg = dict(config)
    data_path = str(_require(cfg, "data"))
    roles = ColumnRoles(
        response=str(_require(cfg, "response")),
        d_columns=tuple(str(c) for c in _require(cfg, "d_columns")),
        x_columns=(None if cfg.get("x_columns") is None
                   else tuple(str(c) for c in cfg["x_columns"])),
    )
    cfg.pop("x_columns", None)
    ds = load_csv_dataset(data_path, roles)
    t_ingest = time.perf_counter()

    u_values = _u_values(cfg)
    j_values = tuple(int(v) for v in cfg.pop("j", range(1, ds.p_tilde + 1)))
    grid = IndexGrid(u_values=u_values, j_values=j_values)
    thresholds = _thresholds_from(cfg, ds.y)
    penalty = _penalty_from(cfg)
    switches = _plan_switches(cfg)
    plan = InferencePlan(thresholds=thresholds, penalty=penalty, **switches)
    method = _resolve_method(str(cfg.pop("method", "os")))
    seed = int(cfg.pop("seed", 0))
    threads = int(cfg.pop("threads", 1))
    boot = _bootstrap_from(cfg, seed)
    _reject_leftovers(cfg, "fit")

    panel = build_score_panel(ds, grid, plan, method=method, threads=threads)
    t_panel = time.perf_counter()
    c_alpha = critical_value(panel, boot)
    t_boot = time.perf_counter()
    names = tuple(ds.d_names[c.j - 1] for c in panel.cells)
    table = build_bands(panel.cells, c_alpha, ds.n, boot.alpha, b=boot.b, names=names)

    _write_bands_csv(out_dir / "bands.csv", table)
    _write_series_csv(out_dir / "series.csv", table)
    echo = {
        "data": data_path,
        "response": roles.response,
        "d_columns": list(roles.d_columns),
        "x_columns": None if roles.x_columns is None else list(roles.x_columns),
        "u": {"values": [float(v) for v in grid.u_values]},
        "j": list(grid.j_values),
        "thresholds": {"y_lo": thresholds.y_lo, "y_hi": thresholds.y_hi},
        "penalty": asdict(penalty),
        "plan": {k: getattr(plan, k) for k in _PLAN_KEYS},
        "bootstrap": {"b": boot.b, "alpha": boot.alpha},
        "method": method,
        "seed": seed,
        "threads": threads,
    }
    flag_counts: dict[str, int] = {}
    for f in table.flags:
        for token in filter(None, f.split(";")):
            flag_counts[token] = flag_counts.get(token, 0) + 1
    summary = {
        "command": "fit",
        "n": ds.n,
        "p_tilde": ds.p_tilde,
        "p": ds.p,
        "grid_size": grid.size,
        "c_alpha": c_alpha,
        "z_pointwise": table.z_pointwise,
        "alpha": boot.alpha,
        "b": boot.b,
        "config": echo,
        "diagnostics": {
            "flag_counts": flag_counts,
            "sigma_min": float(np.min(table.sigma)),
            "sigma_max": float(np.max(table.sigma)),
        },
        "timings": {
            "ingest_s": t_ingest - t0,
            "panel_s": t_panel - t_ingest,
            "bootstrap_s": t_boot - t_panel,
            "total_s": time.perf_counter() - t0,
        },
    }
    with open(out_dir / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return 0


def cmd_mc(config: dict, out_dir: Path) -> int:
    cfg = dict(config)
    spec = DesignSpec(
        design=int(_require(cfg, "design")),
        variant=str(_require(cfg, "variant")),
        n=int(_require(cfg, "n")),
        p=int(_require(cfg, "p")),
        u_set=tuple(float(v) for v in _require(cfg, "u")),
        j_set=tuple(int(v) for v in _require(cfg, "j")),
        rho=float(cfg.pop("rho", 0.5)),
        seed=int(cfg.pop("seed", 0)),
    )
    methods = tuple(str(m) for m in cfg.pop("methods", ["proposed-OS"]))
    reps = int(cfg.pop("reps", 200))
    threads = int(cfg.pop("threads", 1))
    penalty = _penalty_from(cfg)
    switches = _plan_switches(cfg)
    boot = _bootstrap_from(cfg, seed=0)
    _reject_leftovers(cfg, "mc")
    plan = InferencePlan(thresholds=ResponseThresholds(0.0, 1.0), penalty=penalty, **switches)
    report = run_rejection_experiment(
        spec,
        methods=methods,
        reps=reps,
        bootstrap=boot,
        plan=plan,
        threads=threads,
    )
    report.to_csv(out_dir / "report.csv")
    report.to_json(out_dir / "report.json")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drbands",
        description="Simultaneous confidence bands for threshold-regression coefficients.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("fit", "estimate bands on a CSV dataset"),
        ("mc", "run a synthetic rejection experiment"),
    ):
        sp = sub.add_parser(name, help=text)
        sp.add_argument("--config", required=True, help="JSON config file")
        sp.add_argument("--seed", type=int, help="override the master seed")
        sp.add_argument("--threads", type=int, help="worker process count")
        sp.add_argument("--alpha", type=float, help="override the band level")
        sp.add_argument("--bootstrap", type=int, metavar="B",
                        help="override the multiplier draw count")
        sp.add_argument("--method", choices=sorted(_METHOD_SHORT),
                        help="override the estimation method")
        sp.add_argument("--out", help="output directory (default: current)")
    return parser


def _apply_overrides(cfg: dict, args: argparse.Namespace) -> None:
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.threads is not None:
        cfg["threads"] = args.threads
    if args.alpha is not None or args.bootstrap is not None:
        sub = dict(cfg.get("bootstrap", {}))
        if args.alpha is not None:
            sub["alpha"] = args.alpha
        if args.bootstrap is not None:
            sub["b"] = args.bootstrap
        cfg["bootstrap"] = sub
    if args.method is not None:
        if args.command == "mc":
            cfg["methods"] = [_MC_METHOD_SHORT[args.method]]
        else:
            cfg["method"] = args.method


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigurationError("config must be a JSON object")
        _apply_overrides(cfg, args)
        out_dir = Path(args.out if args.out is not None else cfg.pop("out", "."))
        cfg.pop("out", None)
        out_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "fit":
            return cmd_fit(cfg, out_dir)
        return cmd_mc(cfg, out_dir)
    except (ConfigurationError, InvalidArgumentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (EstimationError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())

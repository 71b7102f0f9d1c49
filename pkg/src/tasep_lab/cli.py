"""``tasep-lab`` experiment runner.

    tasep-lab <subcommand> --config <path> [--seed N] [--threads N] [--out DIR]

The config is one JSON object. Every run writes ``<subcommand>.csv``,
``<subcommand>.config.json`` (the resolved config) and
``<subcommand>.manifest.json``. A manifest can be passed back as ``--config``
to repeat the run.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import platform
import sys
import time
from dataclasses import dataclass
from importlib import metadata
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .core import InvalidParamsError, ModelParams, check_rates, concrete_mechanism
from .coupling import check_attractivity, sandwich
from .estimators import (
    DEFAULT_WINDOW,
    default_threads,
    density_profile,
    estimate_current,
    estimate_first_order,
    estimate_survival,
    replica_seed,
)
from .multiclass import projection_report
from .oracle import FiniteModelSpec, exact_entry_current, solve

SUBCOMMANDS = ("current", "survival", "first-order", "sandwich", "profile", "oracle-check", "projection-check")
COLUMNS = ("quantity", "estimate", "std_error", "replicas", "seed", "reference", "status")
EXIT_INVALID = 2
MANIFEST_VERSION = 1


class ConfigError(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Field:
    kind: str  # number | int | list | sites | intlist | numlist
    required: bool = False
    default: Any = None
    check: Callable[[Any], bool] | None = None
    rule: str = ""


def _positive(v):
    return v > 0


def _nonneg(v):
    return v >= 0


def _prob(v):
    return 0.0 <= v <= 1.0


def _lam(v):
    return 0.0 <= v < 0.5


_COMMON = {
    "seed": Field("int", False, 0, lambda v: 0 <= v < 2**64, "0 <= seed < 2**64"),
    "threads": Field("int", False, None, lambda v: v >= 1, ">= 1"),
}

SCHEMAS: dict[str, dict[str, Field]] = {
    "current": {
        "lambda": Field("number", True, None, _lam, "0 <= lambda < 1/2"),
        "epsilon": Field("number", False, 0.0, _nonneg, ">= 0"),
        "burn_in": Field("number", True, None, _nonneg, ">= 0"),
        "horizon": Field("number", True, None, _positive, "> 0"),
        "replicas": Field("int", True, None, lambda v: v >= 2, ">= 2"),
        "L": Field("int", False, DEFAULT_WINDOW, lambda v: v >= 2, ">= 2"),
        "reservoir_density": Field("number", False, 0.0, _prob, "in [0, 1]"),
    },
    "survival": {
        "lambda": Field("number", True, None, lambda v: 0.0 <= v <= 0.5, "0 <= lambda <= 1/2"),
        "epsilon_probe": Field("number", False, 0.0, _nonneg, ">= 0"),
        "x_far": Field("int", False, 200, lambda v: v >= 10, ">= 10"),
        "t_max": Field("number", False, None, _positive, "> 0"),
        "replicas": Field("int", False, 200, lambda v: v >= 2, ">= 2"),
    },
    "first-order": {
        "lambda": Field("number", True, None, _lam, "0 <= lambda < 1/2"),
        "eps_grid": Field("numlist", True, None, lambda v: len(v) >= 3, "at least 3 values"),
        "burn_in": Field("number", True, None, _nonneg, ">= 0"),
        "horizon": Field("number", True, None, _positive, "> 0"),
        "replicas": Field("int", True, None, lambda v: v >= 2, ">= 2"),
        "L": Field("int", False, DEFAULT_WINDOW, lambda v: v >= 2, ">= 2"),
    },
    "sandwich": {
        "lambda": Field("number", True, None, _lam, "0 <= lambda < 1/2"),
        "epsilon": Field("number", True, None, _nonneg, ">= 0"),
        "horizon": Field("number", True, None, _positive, "> 0"),
        "replicas": Field("int", False, 100, lambda v: v >= 1, ">= 1"),
    },
    "profile": {
        "lambda": Field("number", True, None, _lam, "0 <= lambda < 1/2"),
        "epsilon": Field("number", False, 0.0, _nonneg, ">= 0"),
        "burn_in": Field("number", True, None, _nonneg, ">= 0"),
        "horizon": Field("number", True, None, _positive, "> 0"),
        "replicas": Field("int", True, None, lambda v: v >= 2, ">= 2"),
        "sites": Field("sites", True, None, None, "[first, last] with 1 <= first <= last"),
        "L": Field("int", False, DEFAULT_WINDOW, lambda v: v >= 2, ">= 2"),
    },
    "oracle-check": {
        "L": Field("intlist", True, None, lambda v: all(1 <= x <= 12 for x in v), "sizes in 1..12"),
        "lambda": Field("numlist", True, None, lambda v: all(_lam(x) for x in v), "values in [0, 1/2)"),
        "epsilon": Field("numlist", False, [0.0], lambda v: all(x >= 0 for x in v), "values >= 0"),
        "burn_in": Field("number", False, 1000.0, _nonneg, ">= 0"),
        "horizon": Field("number", False, 2e4, _positive, "> 0"),
        "replicas": Field("int", False, 20, lambda v: v >= 2, ">= 2"),
        "reservoir_density": Field("number", False, 0.0, _prob, "in [0, 1]"),
    },
    "projection-check": {
        "lambda": Field("number", True, None, _lam, "0 <= lambda < 1/2"),
        "epsilon": Field("number", True, None, _nonneg, ">= 0"),
        "K": Field("int", False, 3, lambda v: v >= 2, ">= 2"),
        "horizon": Field("number", True, None, _positive, "> 0"),
        "replicas": Field("int", False, 100, lambda v: v >= 1, ">= 1"),
    },
}


def _coerce(name: str, f: Field, v: Any) -> Any:
    def num(x):
        if isinstance(x, bool) or not isinstance(x, (int, float)) or not np.isfinite(x):
            raise ConfigError(name, f"expected a finite number, got {x!r}")
        return float(x)

    def integer(x):
        if isinstance(x, bool) or not isinstance(x, int):
            if isinstance(x, float) and x.is_integer():
                return int(x)
            raise ConfigError(name, f"expected an integer, got {x!r}")
        return x

    if f.kind == "number":
        return num(v)
    if f.kind == "int":
        return integer(v)
    if f.kind in ("numlist", "intlist"):
        items = v if isinstance(v, list) else [v]
        conv = num if f.kind == "numlist" else integer
        return [conv(x) for x in items]
    if f.kind == "sites":
        if not (isinstance(v, list) and len(v) == 2):
            raise ConfigError(name, f"expected [first, last], got {v!r}")
        a, b = integer(v[0]), integer(v[1])
        if not 1 <= a <= b:
            raise ConfigError(name, f"need 1 <= first <= last, got {v!r}")
        return [a, b]
    raise AssertionError(f.kind)


def validate_config(subcommand: str, doc: dict) -> dict:
    """Resolved config with defaults filled in; raises :class:`ConfigError`."""
    if subcommand not in SCHEMAS:
        raise ConfigError("subcommand", f"unknown subcommand {subcommand!r}")
    if not isinstance(doc, dict):
        raise ConfigError("config", "the config must be a JSON object")
    if "subcommand" in doc and doc["subcommand"] != subcommand:
        raise ConfigError("subcommand", f"config is for {doc['subcommand']!r}, not {subcommand!r}")
    schema = {**SCHEMAS[subcommand], **_COMMON}
    unknown = sorted(set(doc) - set(schema) - {"subcommand"})
    if unknown:
        raise ConfigError(unknown[0], "unknown field")
    out: dict[str, Any] = {"subcommand": subcommand}
    for name, f in schema.items():
        if name not in doc or doc[name] is None:
            if f.required:
                raise ConfigError(name, "missing required field")
            out[name] = f.default
            continue
        v = _coerce(name, f, doc[name])
        if f.check is not None and not f.check(v):
            raise ConfigError(name, f"must satisfy {f.rule}, got {v!r}")
        out[name] = v
    _cross_check(subcommand, out)
    return out


def _cross_check(sub: str, c: dict) -> None:
    def rates(lam_field, lam, eps_field, eps):
        try:
            check_rates(lam, eps)
        except InvalidParamsError as exc:
            raise ConfigError(eps_field, str(exc)) from None

    if sub in ("current", "profile", "sandwich", "projection-check"):
        rates("lambda", c["lambda"], "epsilon", c["epsilon"])
    if sub == "first-order":
        for e in c["eps_grid"]:
            if not 0.0 < e < 0.5 - c["lambda"]:
                raise ConfigError("eps_grid", f"values must lie in (0, 1/2 - lambda), got {e!r}")
    if sub == "profile" and c["sites"][1] > c["L"]:
        raise ConfigError("sites", f"last site {c['sites'][1]} exceeds L={c['L']}")
    if sub == "oracle-check":
        for lam in c["lambda"]:
            for eps in c["epsilon"]:
                rates("lambda", lam, "epsilon", eps)
        if any(L < 2 for L in c["L"]):
            raise ConfigError("L", "the model has range 2, so L >= 2")


# ---------------------------------------------------------------------------
# experiments


def _fmt(v: Any) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if v is None:
        return ""
    return str(v)


def _row(quantity, estimate, std_error, replicas, seed, reference=None, status="ok") -> dict:
    return dict(
        quantity=quantity,
        estimate=estimate,
        std_error=std_error,
        replicas=replicas,
        seed=seed,
        reference=reference,
        status=status,
    )


def run_current(c, seed, threads):
    p = ModelParams(c["lambda"], c["epsilon"], reservoir_density=c["reservoir_density"])
    e = estimate_current(p, c["burn_in"], c["horizon"], c["replicas"], seed, threads, window=c["L"])
    ref = c["lambda"] * (1 - c["lambda"]) if c["epsilon"] == 0 else None
    return [_row("entry_current", e.point, e.std_error, e.replicas, seed, ref)], None, c["replicas"]


def run_survival(c, seed, threads):
    e = estimate_survival(
        c["lambda"], c["epsilon_probe"], c["x_far"], c["t_max"], c["replicas"], seed, threads
    )
    status = "warning" if e.warning else "ok"
    rows = [
        _row("survival_probability", e.point, e.std_error, e.replicas, seed, None, status),
        _row("survived", float(e.survived), 0.0, e.replicas, seed),
        _row("died", float(e.died), 0.0, e.replicas, seed),
        _row("censored", float(e.censored), 0.0, e.replicas, seed, None, status),
    ]
    if e.speed is not None:
        rows.append(_row("survivor_speed", e.speed.point, e.speed.std_error, e.speed.replicas, seed, 1 - 2 * c["lambda"]))
    return rows, e.warning, c["replicas"]


def run_first_order(c, seed, threads):
    r = estimate_first_order(
        c["lambda"], c["eps_grid"], c["burn_in"], c["horizon"], c["replicas"], seed, threads, window=c["L"]
    )
    rows = [_row("first_order_slope", r.slope.point, r.slope.std_error, r.slope.replicas, seed)]
    for eps, y, cur in zip(r.eps_grid, r.per_eps, r.currents):
        rows.append(_row(f"difference_quotient[eps={eps!r}]", y.point, y.std_error, y.replicas, seed))
        rows.append(_row(f"entry_current[eps={eps!r}]", cur.point, cur.std_error, cur.replicas, seed))
    return rows, None, len(r.eps_grid) * c["replicas"]


def run_sandwich(c, seed, threads):
    lam, eps = c["lambda"], c["epsilon"]
    ens = sandwich(lam, eps, seed)
    rep = check_attractivity(ens, c["horizon"], c["replicas"])
    status = "ok" if rep.ok else "fail"
    rows = [_row("order_violations", float(rep.violations), 0.0, c["replicas"], seed, 0.0, status)]
    warning = None if rep.ok else f"first violation: {rep.first_violation}"
    return rows, warning, c["replicas"]


def run_profile(c, seed, threads):
    p = ModelParams(c["lambda"], c["epsilon"])
    first, last = c["sites"]
    prof = density_profile(p, c["burn_in"], c["horizon"], range(first, last + 1), c["replicas"], seed, threads, window=c["L"])
    rows = [
        _row(f"density[site={int(x)}]", float(v), float(s), c["replicas"], seed)
        for x, v, s in zip(prof.sites, prof.point, prof.std_error)
    ]
    return rows, None, c["replicas"]


def run_oracle_check(c, seed, threads):
    rows, failures = [], 0
    rho = c["reservoir_density"]
    for L in c["L"]:
        for lam in c["lambda"]:
            for eps in c["epsilon"]:
                mech = concrete_mechanism(lam, eps)
                exact = exact_entry_current(solve(FiniteModelSpec(L, mech, rho)), mech, rho)
                p = ModelParams(lam, eps, reservoir_density=rho)
                est = estimate_current(p, c["burn_in"], c["horizon"], c["replicas"], seed, threads, window=L)
                ok = abs(est.point - exact) <= 3 * est.std_error or (est.std_error == 0 and est.point == exact)
                failures += not ok
                name = f"L={L},lambda={lam!r},epsilon={eps!r}"
                print(f"{'PASS' if ok else 'FAIL'} {name} simulated={est.point:.6f}+-{est.std_error:.6f} exact={exact:.6f}")
                rows.append(_row(name, est.point, est.std_error, est.replicas, seed, exact, "ok" if ok else "fail"))
    warning = f"{failures} grid point(s) outside 3 SE" if failures else None
    return rows, warning, c["replicas"]


def run_projection_check(c, seed, threads):
    seeds = [replica_seed(seed, i) for i in range(c["replicas"])]
    fails = 0
    for s in seeds:
        rep = projection_report(c["lambda"], c["epsilon"], c["K"], c["horizon"], s)
        fails += not rep.holds
    status = "ok" if fails == 0 else "fail"
    rows = [_row("projection_failures", float(fails), 0.0, c["replicas"], seed, 0.0, status)]
    return rows, (f"{fails} seed(s) violated the identity" if fails else None), c["replicas"]


RUNNERS = {
    "current": run_current,
    "survival": run_survival,
    "first-order": run_first_order,
    "sandwich": run_sandwich,
    "profile": run_profile,
    "oracle-check": run_oracle_check,
    "projection-check": run_projection_check,
}


def build_id() -> str:
    try:
        version = metadata.version("artifact")
    except metadata.PackageNotFoundError:  # pragma: no cover
        version = "unknown"
    import numba
    import scipy

    return (
        f"artifact-{version} python-{platform.python_version()} numpy-{np.__version__} "
        f"numba-{numba.__version__} scipy-{scipy.__version__} {platform.machine()}"
    )


def load_config(path: str | Path) -> dict:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if isinstance(doc, dict) and "manifest_version" in doc and "config" in doc:
        doc = dict(doc["config"])
    return doc


def run(subcommand: str, config: dict, seed: int | None = None, threads: int | None = None, out: str | Path = ".") -> int:
    """Validate, execute and write outputs. Returns the process exit status."""
    try:
        doc = dict(config)
        if seed is not None:
            doc["seed"] = seed
        c = validate_config(subcommand, doc)
        if threads is not None and threads < 1:
            raise ConfigError("threads", "must be >= 1")
    except ConfigError as exc:
        _error_record(exc.field, exc.message)
        return EXIT_INVALID
    n_threads = threads or c.get("threads") or default_threads()
    c_echo = {k: v for k, v in c.items() if k != "threads"}
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    rows, warning, n_seeds = RUNNERS[subcommand](c, c["seed"], n_threads)
    wall = time.perf_counter() - t0

    stem = subcommand
    with open(out / f"{stem}.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in rows:
            w.writerow([_fmt(r[k]) for k in COLUMNS])
    with open(out / f"{stem}.config.json", "w", encoding="utf-8") as fh:
        json.dump(c_echo, fh, indent=2, sort_keys=True)
        fh.write("\n")
    manifest = {
        "manifest_version": MANIFEST_VERSION,
        "subcommand": subcommand,
        "config": c_echo,
        "seed": c["seed"],
        "replica_seeds": [replica_seed(c["seed"], i) for i in range(n_seeds)],
        "threads": n_threads,
        "build": build_id(),
        "wall_time_seconds": wall,
        "warning": warning,
        "outputs": [f"{stem}.csv", f"{stem}.config.json"],
    }
    with open(out / f"{stem}.manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    if warning:
        print(f"warning: {warning}", file=sys.stderr)
    return 0


def _error_record(field: str, message: str) -> None:
    print(json.dumps({"error": "invalid-config", "field": field, "message": message}), file=sys.stderr)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tasep-lab", description="Boundary-driven TASEP experiments.")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", required=True, help="JSON config (or a manifest of an earlier run)")
    p.add_argument("--seed", type=int, default=None, help="master seed, overrides the config")
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: $TASEP_LAB_THREADS or all cores)")
    p.add_argument("--out", default=".", help="output directory")
    return p


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        doc = load_config(args.config)
    except (OSError, json.JSONDecodeError) as exc:
        _error_record("config", str(exc))
        return EXIT_INVALID
    if args.threads is None and os.environ.get("TASEP_LAB_THREADS"):
        try:
            args.threads = int(os.environ["TASEP_LAB_THREADS"])
        except ValueError:
            _error_record("threads", "TASEP_LAB_THREADS is not an integer")
            return EXIT_INVALID
    return run(args.subcommand, doc, args.seed, args.threads, args.out)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

"""Batch front-end: ``ruelle-lab --config experiment.toml --out reports/``.

A config holds one ``[system]`` table and exactly one ``[task.<name>]``
table.  Every parameter is validated before any computation starts, and
reports are written only once the task has finished, so a failed run leaves
no partial output.

Exit codes: 0 ok, 2 config error, 3 numerical error, 4 resource cap.
"""
from __future__ import annotations

import argparse
import copy
import json
import math
import os
import sys
from pathlib import Path
from typing import Any, Callable

import numpy as np
import tomli

from . import __version__
from .errors import ConfigError, InputError, LabError, ModelError, NumericalError, ResourceCapError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_CAP = 0, 2, 3, 4

INTERVAL, TORUS = "interval", "torus"

# task -> (system family, {param: (type, default)})
TASKS: dict[str, tuple[str, dict[str, tuple[type, Any]]]] = {
    "pressure": (INTERVAL, {"N": (int, 4096), "potential": (object, "zero")}),
    "scan": (
        INTERVAL,
        {"N": (int, 4096), "a": (list, [-0.01, 0.0, 0.01]), "b": (list, [10.0, 20.0, 50.0, 100.0, 200.0]), "m": (int, 30)},
    ),
    "cylinders": (INTERVAL, {"depth": (int, 4)}),
    "lemma41": (INTERVAL, {"m_max": (int, 12)}),
    "theorem42": (INTERVAL, {"m_max": (int, 10)}),
    "orbits": (INTERVAL, {"lambda_max": (float, 6.0)}),
    "zeta": (INTERVAL, {"lambda_max": (float, 12.0), "s_real": (float, 1.0), "s_imag": (float, 0.0), "N": (int, 4096)}),
    "pi-vs-li": (
        INTERVAL,
        {"lambda_max": (float, 12.0), "start": (float, 6.0), "step": (float, 0.25), "window": (float, 1.0), "N": (int, 4096)},
    ),
    "ladder": (TORUS, {"lambdas": (list, None), "N": (int, 2000)}),
    "lyapunov": (TORUS, {"x": (list, None), "N": (int, 500)}),
    "bowen": (TORUS, {"basepoints": (int, 20), "delta1": (float, 0.002), "delta2": (float, 0.01), "n": (int, 30)}),
    "linearization": (TORUS, {"count": (int, 100), "p_max": (int, 20), "target": (float, 1e-4)}),
}

BUILTINS = [
    {"name": "doubling", "family": INTERVAL, "params": {"roof": "constant or cosine"},
     "tasks": ["pressure", "scan", "cylinders", "lemma41", "theorem42", "orbits", "zeta", "pi-vs-li"],
     "note": "sigma(x) = 2x mod 1 on [0,1/2] u [1/2,1]; exact dyadic cylinders"},
    {"name": "perturbed-doubling", "family": INTERVAL, "params": {"eps": "[0, 0.9)", "roof": "constant or cosine"},
     "tasks": ["cylinders", "lemma41", "theorem42", "pressure", "scan"],
     "note": "sigma(x) = 2x + (eps/2pi) sin(2pi x) mod 1; nonlinear full-branch map"},
    {"name": "golden-mean", "family": INTERVAL, "params": {"roof": "constant or cosine"},
     "tasks": ["pressure", "cylinders", "lemma41", "theorem42", "orbits"],
     "note": "linear Markov map for A = [[1,1],[1,0]]; not full-branch"},
    {"name": "three-five", "family": INTERVAL, "params": {"roof": "constant or cosine"},
     "tasks": ["cylinders", "theorem42", "lemma41"],
     "note": "full 2-shift repeller on [0,1] u [2,3] with slopes 3 and 5"},
    {"name": "cat2d", "family": TORUS, "params": {"eps": "[0, 0.05]"},
     "tasks": ["lyapunov", "ladder", "bowen", "linearization"],
     "note": "A = [[2,1],[1,1]] composed with a volume-preserving shear"},
    {"name": "block4d", "family": TORUS, "params": {"eps": "[0, 0.05]"},
     "tasks": ["lyapunov", "ladder", "linearization"],
     "note": "diag([[2,1],[1,1]], [[3,1],[2,1]]); two distinct expanding exponents"},
]

TORUS_NAMES = {"cat2d", "block4d"}


def _fail(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit_code": code}, sort_keys=True) + "\n")
    return code


def _coerce(name: str, value: Any, typ: type) -> Any:
    if typ is object:
        return value
    if typ is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if typ is int and isinstance(value, int) and not isinstance(value, bool):
        return value
    if typ is list and isinstance(value, list):
        return value
    raise ConfigError(f"parameter {name!r} must be {typ.__name__}, got {value!r}")


def resolve_config(raw: dict) -> dict:
    """Validate a parsed config and fill defaults.  Raises ConfigError."""
    allowed_top = {"system", "task", "seed", "threads", "output"}
    extra = set(raw) - allowed_top
    if extra:
        raise ConfigError(f"unknown top-level keys: {sorted(extra)}")
    tasks = raw.get("task")
    if not isinstance(tasks, dict) or len(tasks) != 1:
        found = sorted(tasks) if isinstance(tasks, dict) else tasks
        raise ConfigError(f"config needs exactly one [task.<name>] table, found {found!r}")
    (name, params), = tasks.items()
    if name not in TASKS:
        raise ConfigError(f"unknown task {name!r}; known: {sorted(TASKS)}")
    params = params or {}
    if not isinstance(params, dict):
        raise ConfigError(f"[task.{name}] must be a table")
    family, schema = TASKS[name]
    unknown = set(params) - set(schema)
    if unknown:
        raise ConfigError(f"unknown parameters for task {name!r}: {sorted(unknown)}")
    resolved_params = {}
    for key, (typ, default) in schema.items():
        if key in params:
            resolved_params[key] = _coerce(key, params[key], typ)
        elif default is not None:
            resolved_params[key] = copy.deepcopy(default)
    system = raw.get("system")
    if not isinstance(system, dict):
        raise ConfigError("config needs a [system] table")
    sys_family = TORUS if (system.get("builtin") in TORUS_NAMES or system.get("kind") == "torus") else INTERVAL
    if sys_family != family:
        raise ConfigError(f"task {name!r} needs a {family} system, got a {sys_family} system")
    seed = raw.get("seed", 0)
    threads = raw.get("threads", os.cpu_count() or 1)
    for key, val in (("seed", seed), ("threads", threads)):
        if not isinstance(val, int) or isinstance(val, bool) or val < 0:
            raise ConfigError(f"{key} must be a non-negative integer")
    if seed >= 2**64:
        raise ConfigError("seed must fit in an unsigned 64-bit integer")
    return {
        "system": copy.deepcopy(system),
        "task": {name: resolved_params},
        "seed": seed,
        "threads": max(1, threads),
        "output": copy.deepcopy(raw.get("output", {})),
    }


def build_system(cfg: dict):
    from .anosov import torus_system_from_config
    from .markov import markov_system_from_config

    system = cfg["system"]
    try:
        if system.get("builtin") in TORUS_NAMES or system.get("kind") == "torus":
            return torus_system_from_config(system)
        return markov_system_from_config(system)
    except (ModelError, InputError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid system: {exc}") from exc


def _potential(sys_, choice, N):
    from .transfer import GridFunction, grid_for, log_derivative_potential

    if choice in (None, "zero"):
        return None
    if choice == "minus-log-derivative":
        return log_derivative_potential(sys_, N)
    if isinstance(choice, list):
        if len(choice) != sys_.k:
            raise ConfigError(f"per-symbol potential needs {sys_.k} values")
        return GridFunction.per_symbol(grid_for(sys_, N), [float(v) for v in choice])
    raise ConfigError(f"unknown potential {choice!r}")


def _csv_rows(header: list[str], rows: list[list]) -> str:
    out = [",".join(header)]
    for r in rows:
        out.append(",".join(repr(v) if isinstance(v, float) else str(v) for v in r))
    return "\n".join(out) + "\n"


# each runner returns (summary dict, optional csv text)

def _run_pressure(sys_, p, cfg):
    from .transfer import leading_eigen

    g = _potential(sys_, p["potential"], p["N"])
    res = leading_eigen(sys_, g, N=p["N"])
    return {"lambda": res.lam, "pressure": math.log(res.lam), "residual": res.residual, "iterations": res.iterations}, None


def _run_scan(sys_, p, cfg):
    from .transfer import spectral_scan

    rep = spectral_scan(sys_, None, [float(a) for a in p["a"]], [float(b) for b in p["b"]], p["m"], N=p["N"], threads=cfg["threads"])
    summary = rep.summary()
    summary["dominates"] = rep.dominates()
    summary["cell_table"] = [{"a": c.a, "b": c.b, "m": c.m, "rhoHat": c.rho_hat, "checksum": c.checksum} for c in rep.cells]
    return summary, rep.to_csv()


def _run_cylinders(sys_, p, cfg):
    from .markov import cylinder_tables

    tables = cylinder_tables(sys_, p["depth"])
    rows = []
    for m, t in enumerate(tables):
        for w, lo, hi in zip(t.words, t.lo, t.hi):
            rows.append([m, "-".join(str(int(s)) for s in w), float(lo), float(hi), float(hi - lo)])
    summary = {"depths": len(tables), "cylinders": len(rows),
               "min_diam_by_depth": [float(t.diam.min()) for t in tables],
               "max_diam_by_depth": [float(t.diam.max()) for t in tables]}
    return summary, _csv_rows(["depth", "word", "lo", "hi", "diam"], rows)


def _run_lemma41(sys_, p, cfg):
    from dataclasses import asdict

    from .markov import fit_lemma41

    fit = fit_lemma41(sys_, p["m_max"])
    return {**asdict(fit), "holds": fit.holds}, None


def _run_theorem42(sys_, p, cfg):
    from .markov import check_theorem42

    rep = check_theorem42(sys_, p["m_max"])
    rows = [[m, lo, hi] for m, (lo, hi) in enumerate(zip(rep.depth_min, rep.depth_max))]
    return rep.to_dict(), _csv_rows(["depth", "minRatio", "maxRatio"], rows)


def _run_orbits(sys_, p, cfg):
    from .orbits import census

    c = census(sys_, p["lambda_max"])
    return {"count": len(c.entries), "depth": c.depth, "lattice": c.lattice, "lambda_max": c.lambda_max}, c.to_csv()


def _run_zeta(sys_, p, cfg):
    from .orbits import census, entropy, zeta_partial

    c = census(sys_, p["lambda_max"])
    h = entropy(sys_, N=p["N"])
    z = zeta_partial(c, complex(p["s_real"], p["s_imag"]), hT=h)
    return {"real": z.value.real, "imag": z.value.imag, "log_real": z.log_value.real, "log_imag": z.log_value.imag,
            "tail_bound": z.tail_bound, "orbits": z.orbits, "hT": h}, None


def _run_pi_vs_li(sys_, p, cfg):
    from .orbits import census, entropy, pi_vs_li

    c = census(sys_, p["lambda_max"])
    h = entropy(sys_, N=p["N"])
    n = int(math.floor((p["lambda_max"] - p["start"]) / p["step"] + 1e-9))
    grid = [p["start"] + i * p["step"] for i in range(n + 1)]
    tab = pi_vs_li(c, h, grid, p["window"])
    return {**tab.summary(), "hT": h, "rows": tab.rows}, tab.to_csv()


def _rng_point(cfg, d):
    return np.random.default_rng(cfg["seed"]).random(d)


def _run_ladder(sys_, p, cfg):
    from .anosov import build_ladder, exponentials, lyapunov_exponents

    lambdas = p.get("lambdas")
    if lambdas is None:
        lambdas = exponentials(lyapunov_exponents(sys_, _rng_point(cfg, sys_.d), p["N"])).tolist()
    lad = build_ladder([float(v) for v in lambdas])
    return {**lad.to_dict(), "violations": lad.violations()}, None


def _run_lyapunov(sys_, p, cfg):
    from .anosov import lyapunov_exponents

    x = np.array(p["x"], dtype=float) if p.get("x") is not None else _rng_point(cfg, sys_.d)
    if x.shape != (sys_.d,):
        raise ConfigError(f"x must have {sys_.d} coordinates")
    ex = lyapunov_exponents(sys_, x, p["N"])
    return {"x": x.tolist(), "exponents": ex.tolist(), "sum": float(ex.sum())}, None


def _run_bowen(sys_, p, cfg):
    from .anosov import stable_ball_sweep

    rows = stable_ball_sweep(sys_, p["basepoints"], p["delta1"], p["delta2"], p["n"], seed=cfg["seed"], threads=cfg["threads"])
    ratios = np.array([r["ratio"] for r in rows])
    summary = {"max_ratio": float(ratios.max()), "baseline": p["delta2"] / p["delta1"], "rows": len(rows)}
    return summary, _csv_rows(["basepoint", "m", "ratio"], [[r["basepoint"], r["m"], r["ratio"]] for r in rows])


def _run_linearization(sys_, p, cfg):
    from .anosov import linearization_sweep

    rows = linearization_sweep(sys_, p["count"], p["p_max"], p["target"], seed=cfg["seed"])
    ok = [r for r in rows if r["in_bounds"]]
    summary = {"cells": len(rows), "in_bounds": len(ok),
               "min_ratio": min(r["ratio"] for r in rows), "max_ratio": max(r["ratio"] for r in rows)}
    return summary, _csv_rows(["cell", "p", "ratio", "inBounds"], [[r["cell"], r["p"], r["ratio"], r["in_bounds"]] for r in rows])


RUNNERS: dict[str, Callable] = {
    "pressure": _run_pressure,
    "scan": _run_scan,
    "cylinders": _run_cylinders,
    "lemma41": _run_lemma41,
    "theorem42": _run_theorem42,
    "orbits": _run_orbits,
    "zeta": _run_zeta,
    "pi-vs-li": _run_pi_vs_li,
    "ladder": _run_ladder,
    "lyapunov": _run_lyapunov,
    "bowen": _run_bowen,
    "linearization": _run_linearization,
}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def run(cfg: dict, out_dir: Path, fmt: str = "csv") -> list[Path]:
    """Execute a resolved config and write its reports; returns the written paths."""
    (task, params), = cfg["task"].items()
    system = build_system(cfg)
    summary, table = RUNNERS[task](system, params, cfg)
    # thread count never changes results; echoing it would break byte identity across thread counts
    echoed = {k: v for k, v in cfg.items() if k != "threads"}
    header = {"version": __version__, "task": task, "config": echoed}
    out_dir.mkdir(parents=True, exist_ok=True)
    prefix = cfg["output"].get("prefix", task)
    written = []
    doc = {**header, "result": summary}
    if table is not None and fmt == "json":
        doc["table"] = table.splitlines()
    json_path = out_dir / f"{prefix}.json"
    json_path.write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")
    written.append(json_path)
    if table is not None and fmt == "csv":
        csv_path = out_dir / f"{prefix}.csv"
        meta = json.dumps(_jsonable(header), sort_keys=True)
        csv_path.write_text(f"# {meta}\n" + table)
        written.append(csv_path)
    return written


def list_builtins(fmt: str = "text") -> str:
    if fmt == "json":
        return json.dumps(BUILTINS, indent=2, sort_keys=True) + "\n"
    lines = []
    for b in BUILTINS:
        params = ", ".join(f"{k} in {v}" for k, v in b["params"].items())
        lines.append(f"{b['name']:<20} {b['family']:<9} {params}")
        lines.append(f"{'':<20} {b['note']}; tasks: {', '.join(b['tasks'])}")
    return "\n".join(lines) + "\n"


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ruelle-lab", description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path, help="experiment TOML file")
    ap.add_argument("--out", type=Path, default=Path("reports"), help="report directory")
    ap.add_argument("--seed", type=int, help="overrides the config seed")
    ap.add_argument("--threads", type=int, help="overrides the config thread count")
    ap.add_argument("--format", choices=["json", "csv"], default=None, help="table format (default csv)")
    ap.add_argument("--list-builtins", action="store_true", help="print the builtin systems and exit")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.list_builtins:
        sys.stdout.write(list_builtins("json" if args.format == "json" else "text"))
        return EXIT_OK
    if args.config is None:
        return _fail("config", "--config is required unless --list-builtins is given", EXIT_CONFIG)
    try:
        raw = tomli.loads(args.config.read_text())
    except (OSError, tomli.TOMLDecodeError) as exc:
        return _fail("config", f"cannot read config: {exc}", EXIT_CONFIG)
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.threads is not None:
        raw["threads"] = args.threads
    try:
        cfg = resolve_config(raw)
        build_system(cfg)
        written = run(cfg, args.out, args.format or "csv")
    except ConfigError as exc:
        return _fail("config", str(exc), EXIT_CONFIG)
    except ResourceCapError as exc:
        return _fail("resource-cap", str(exc), EXIT_CAP)
    except NumericalError as exc:
        return _fail("numerical", str(exc), EXIT_NUMERICAL)
    except (InputError, ModelError) as exc:
        return _fail("config", str(exc), EXIT_CONFIG)
    except LabError as exc:
        return _fail("numerical", str(exc), EXIT_NUMERICAL)
    for path in written:
        sys.stdout.write(f"{path}\n")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

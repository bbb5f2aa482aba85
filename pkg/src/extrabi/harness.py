"""Run configurations, sweep orchestration, smoothing and file output.

Every runner takes a resolved configuration dictionary and an output
directory and returns the number of grid points that failed. Output files
carry no timestamps so identical configs give identical bytes.
"""
from __future__ import annotations

import copy
import csv
import json
import math
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, dynamics, phasespace, semiclassics, spectrum
from .model import ModelParams, ParameterError, build_basis, build_hamiltonian, validate_params


class ConfigError(ValueError):
    """Invalid or incomplete run configuration."""


DEFAULTS = {
    "params": {"omega": 1.0, "R": 100.0, "N": 1, "lambda": 0.75, "delta": 0.5,
               "mu": 0.0, "gamma": 0.0, "n_max": None},
    "workers": 1,
    "seed": 0,
    "window": 0.05,
    "kernel_width": 0.02,
    "m_prime": None,
    "convention": "standard",
    "n_points": 201,
}

SUBCOMMAND_DEFAULTS = {
    "spectrum": {"lambdas": {"start": 0.0, "stop": 1.5, "num": 31},
                 "eps": {"start": -1.0, "stop": 0.5, "num": 151}, "quantum": False},
    "phases": {"lambdas": {"start": 0.0, "stop": 1.5, "num": 151},
               "deltas": {"start": -1.0, "stop": 1.0, "num": 41}},
    "quench": {"lambdas": "triple", "times": {"start": 0.0, "stop": 100.0, "num": 1001},
               "wigner": False},
    "sweep": {"lambdas": {"start": 0.0, "stop": 1.5, "num": 31}, "deltas": None},
    "wigner": {"times": None},
    "scaling": {"lambdas": [0.75, 1.5], "R_list": [10, 30, 100, 300]},
}


# -- configuration -----------------------------------------------------------


def grid(spec, name: str = "grid") -> np.ndarray:
    """Grid from a list, a number, ``{start, stop, num}`` or ``{log_start, log_stop, num}``.

    Strings ``"a:b:n"`` (linear grid), ``"a,b,c"`` or a JSON list also work.
    """
    if spec is None:
        raise ConfigError(f"{name}: empty grid")
    if isinstance(spec, str) and spec.strip().startswith("["):
        try:
            spec = json.loads(spec)
        except json.JSONDecodeError:
            raise ConfigError(f"{name}: bad list {spec!r}") from None
    elif isinstance(spec, str) and "," in spec:
        spec = [float(v) for v in spec.split(",")]
    elif isinstance(spec, str) and ":" not in spec:
        spec = [float(spec)]
    if isinstance(spec, str):
        parts = spec.split(":")
        if len(parts) != 3:
            raise ConfigError(f"{name}: expected 'start:stop:num', got {spec!r}")
        spec = {"start": float(parts[0]), "stop": float(parts[1]), "num": int(parts[2])}
    if isinstance(spec, dict):
        try:
            if "log_start" in spec:
                g = np.logspace(spec["log_start"], spec["log_stop"], int(spec["num"]))
            else:
                g = np.linspace(spec["start"], spec["stop"], int(spec["num"]))
        except KeyError as exc:
            raise ConfigError(f"{name}: missing key {exc}") from None
    else:
        g = np.atleast_1d(np.asarray(spec, dtype=float))
    if g.size == 0:
        raise ConfigError("empty grid")
    return g


def resolve_config(sub: str, user: dict | None = None) -> dict:
    """Merge defaults, subcommand defaults and user settings."""
    if sub not in SUBCOMMAND_DEFAULTS:
        raise ConfigError(f"unknown subcommand {sub!r}")
    cfg = copy.deepcopy(DEFAULTS)
    cfg.update(copy.deepcopy(SUBCOMMAND_DEFAULTS[sub]))
    user = copy.deepcopy(user or {})
    params = user.pop("params", {})
    unknown = set(params) - set(cfg["params"])
    if unknown:
        raise ConfigError(f"unknown model parameter(s): {sorted(unknown)}")
    cfg["params"].update(params)
    extra = set(user) - set(cfg) - {"out"}
    if extra:
        raise ConfigError(f"unknown config key(s): {sorted(extra)}")
    cfg.update(user)
    cfg["subcommand"] = sub
    cfg["version"] = __version__
    try:
        validate_params(ModelParams.from_dict(cfg["params"]))
    except ParameterError as exc:
        raise ConfigError(str(exc)) from None
    if int(cfg["workers"]) < 1:
        raise ConfigError("workers must be >= 1")
    return cfg


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None


def params_of(cfg: dict, **override) -> ModelParams:
    d = dict(cfg["params"])
    d.update(override)
    return validate_params(ModelParams.from_dict(d))


# -- smoothing and scheduling ------------------------------------------------


def moving_average(x, y, window: float) -> np.ndarray:
    """Centered moving average over ``|x' - x| <= w/2``, ``w = window * range(x)``.

    Near the ends the window shrinks symmetrically so it stays centered.
    ``window = 0`` returns ``y`` unchanged.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if window <= 0 or x.size < 2:
        return y.copy()
    half = 0.5 * window * (x.max() - x.min())
    out = np.empty_like(y)
    for i, xi in enumerate(x):
        h = min(half, xi - x.min(), x.max() - xi)
        sel = np.abs(x - xi) <= h + 1e-12 * max(1.0, abs(xi))
        vals = y[sel]
        vals = vals[np.isfinite(vals)]
        out[i] = vals.mean() if vals.size else np.nan
    return out


def _blocks(n: int, k: int) -> list[range]:
    """Static contiguous partition of ``range(n)`` into ``k`` blocks."""
    k = max(1, min(k, n))
    edges = [round(i * n / k) for i in range(k + 1)]
    return [range(edges[i], edges[i + 1]) for i in range(k)]


def _run_block(func, items):
    out = []
    for item in items:
        try:
            out.append((True, func(item)))
        except Exception as exc:  # recorded per point, run continues
            out.append((False, f"{type(exc).__name__}: {exc}"))
    return out


def parallel_map(func, items: list, workers: int = 1) -> list[tuple[bool, object]]:
    """Apply ``func`` to every item; results in input order as ``(ok, value)``."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return _run_block(func, items)
    blocks = _blocks(len(items), workers)
    with ProcessPoolExecutor(max_workers=len(blocks)) as ex:
        futures = [ex.submit(_run_block, func, [items[i] for i in b]) for b in blocks]
        results = []
        for f in futures:
            results.extend(f.result())
    return results


# -- output helpers ----------------------------------------------------------


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return "" if v is None else str(v)


def write_csv(path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _finish(out: Path, cfg: dict, failures: list) -> int:
    write_json(out / "config.json", cfg)
    write_json(out / "status.json", {"failures": failures, "n_failed": len(failures)})
    return len(failures)


# -- point workers (top level so they pickle) -------------------------------


def _spectrum_point(args):
    cfg, lam = args
    p = params_of(cfg, **{"lambda": lam})
    eps = grid(cfg["eps"], "eps")
    rho = semiclassics.semiclassical_level_density(p, cfg["m_prime"], eps)
    lines = semiclassics.esqpt_critical_lines(p, [lam], cfg["m_prime"])
    quantum = None
    if cfg.get("quantum"):
        nm = p.n_max or spectrum.cutoff_for_energy(p, float(eps.max()) + 0.25)
        eigs = spectrum.diagonalize(build_hamiltonian(p, build_basis(p.j, nm)))
        quantum = spectrum.smoothed_level_density(eigs, p, cfg["kernel_width"])(eps)
    return rho, lines, quantum


def _phase_point(args):
    cfg, lam, delta = args
    p = params_of(cfg, **{"lambda": lam, "delta": delta})
    ph = semiclassics.classify_vacuum_phase(p)
    return ph.det_hessian, ph.label, ph.lambda_c_prime


def _average_point(args):
    cfg, lam, delta = args
    p = params_of(cfg, **{"lambda": lam, "delta": delta})
    eigs, sf = spectrum.solve_quench_spectrum(p)
    avg = dynamics.infinite_time_averages(sf, eigs)
    return avg, eigs.basis.n_max, eigs.meta.get("tail_bound"), eigs.residual


def _scaling_point(args):
    cfg, lam, R = args
    p = params_of(cfg, **{"lambda": lam, "R": R, "n_max": None})
    eigs, sf = spectrum.solve_quench_spectrum(p)
    avg = dynamics.infinite_time_averages(sf, eigs, obs={})
    return avg["P"], avg["Pq"], eigs.basis.n_max


# -- runners -----------------------------------------------------------------


def run_spectrum(cfg: dict, out: Path) -> int:
    lams = grid(cfg["lambdas"], "lambdas")
    eps = grid(cfg["eps"], "eps")
    res = parallel_map(_spectrum_point, [(cfg, float(l)) for l in lams], int(cfg["workers"]))
    rows, lines, failures = [], [], []
    quantum = bool(cfg.get("quantum"))
    for lam, (ok, val) in zip(lams, res):
        if not ok:
            failures.append({"lambda": float(lam), "error": val})
            continue
        rho, ln, q = val
        for k, e in enumerate(eps):
            rows.append([lam, e, rho[k]] + ([q[k]] if quantum else []))
        lines.extend(ln)
    header = ["lambda", "eps", "rho_semiclassical"] + (["rho_quantum"] if quantum else [])
    write_csv(out / "density.csv", header, rows)
    write_csv(out / "esqpt_lines.csv", ["lambda", "eps_c", "type"], lines)
    return _finish(out, cfg, failures)


def run_phase_diagram(cfg: dict, out: Path) -> int:
    lams = grid(cfg["lambdas"], "lambdas")
    deltas = grid(cfg["deltas"], "deltas")
    p = params_of(cfg)
    if not (p.mu == 0 or p.gamma == 1):
        raise ConfigError("phase diagram needs mu = 0 or gamma = 1")
    pts = [(cfg, float(l), float(d)) for d in deltas for l in lams]
    res = parallel_map(_phase_point, pts, int(cfg["workers"]))
    rows, failures = [], []
    for (_, l, d), (ok, val) in zip(pts, res):
        if ok:
            rows.append([l, d, val[0], val[1], val[2]])
        else:
            failures.append({"lambda": l, "delta": d, "error": val})
    write_csv(out / "phases.csv", ["lambda", "delta", "det_hessian", "phase", "lambda_c_prime"], rows)
    return _finish(out, cfg, failures)


def default_lambdas(p: ModelParams) -> list[float]:
    """``0.8 lambda_c``, ``(lambda_c + lambda_0)/2`` and ``1.5 lambda_0``."""
    lc, l0 = p.lambda_c, p.lambda_0
    if not math.isfinite(l0):
        raise ConfigError("default lambda triple needs delta != 0")
    return [0.8 * lc, 0.5 * (lc + l0), 1.5 * l0]


def _lams(cfg):
    if cfg["lambdas"] == "triple":
        return np.array(default_lambdas(params_of(cfg)))
    return grid(cfg["lambdas"], "lambdas")


def run_quench(cfg: dict, out: Path) -> int:
    lams = _lams(cfg)
    times = grid(cfg["times"], "times")
    failures, summary = [], []
    for k, lam in enumerate(lams):
        try:
            p = params_of(cfg, **{"lambda": float(lam)})
            eigs, sf = spectrum.solve_quench_spectrum(p)
            rec = dynamics.run_quench(p, times, eigs=eigs, sf=sf)
            stem = f"quench_{k:03d}"
            rec.to_csv(out / f"{stem}.csv")
            write_json(out / f"{stem}.json", rec.sidecar())
            summary.append({"index": k, "lambda": float(lam), **rec.averages, "n_max": eigs.basis.n_max})
            if cfg.get("wigner"):
                grids = phasespace.wigner_snapshots(p, convention=cfg["convention"],
                                                    n_points=int(cfg["n_points"]), eigs=eigs, sf=sf)
                for s, g in enumerate(grids):
                    g.to_files(out / f"{stem}_wigner_{s}.csv", out / f"{stem}_wigner_{s}.json")
        except Exception as exc:
            failures.append({"lambda": float(lam), "error": f"{type(exc).__name__}: {exc}",
                             "trace": traceback.format_exc(limit=3)})
    write_json(out / "summary.json", summary)
    return _finish(out, cfg, failures)


AVG_COLUMNS = ("P", "Pq", "Pb", "Jx", "Jy", "Jz", "n", "q", "p")


def run_sweep(cfg: dict, out: Path) -> int:
    lams = grid(cfg["lambdas"], "lambdas")
    deltas = [cfg["params"]["delta"]] if cfg.get("deltas") is None else list(grid(cfg["deltas"], "deltas"))
    pts = [(cfg, float(l), float(d)) for d in deltas for l in lams]
    res = parallel_map(_average_point, pts, int(cfg["workers"]))
    failures, rows = [], []
    window = float(cfg["window"])
    for d in deltas:
        block = [(l, r) for (_, l, dd), r in zip(pts, res) if dd == float(d)]
        raw = {c: np.array([r[1][0][c] if r[0] else np.nan for _, r in block]) for c in AVG_COLUMNS}
        xs = np.array([l for l, _ in block])
        smooth = {c: moving_average(xs, raw[c], window) for c in AVG_COLUMNS}
        for i, (l, (ok, val)) in enumerate(block):
            if not ok:
                failures.append({"lambda": l, "delta": float(d), "error": val})
                meta = [None, None, None]
            else:
                meta = list(val[1:])
            rows.append([l, d] + meta + [raw[c][i] for c in AVG_COLUMNS] + [smooth[c][i] for c in AVG_COLUMNS])
    header = (["lambda", "delta", "n_max", "tail_bound", "residual"] + list(AVG_COLUMNS)
              + [f"{c}_smooth" for c in AVG_COLUMNS])
    write_csv(out / "sweep.csv", header, rows)
    return _finish(out, cfg, failures)


def run_wigner(cfg: dict, out: Path) -> int:
    p = params_of(cfg)
    times = None if cfg.get("times") is None else list(grid(cfg["times"], "times"))
    failures = []
    try:
        grids = phasespace.wigner_snapshots(p, times, convention=cfg["convention"],
                                            n_points=int(cfg["n_points"]))
        index = []
        for s, g in enumerate(grids):
            g.to_files(out / f"wigner_{s}.csv", out / f"wigner_{s}.json")
            index.append({"index": s, "t": g.meta["t"], "integral": g.integral(),
                          "W_origin": g.at(0.0, 0.0), "purity": g.purity()})
        write_json(out / "snapshots.json", index)
    except Exception as exc:
        failures.append({"error": f"{type(exc).__name__}: {exc}"})
    return _finish(out, cfg, failures)


def run_scaling(cfg: dict, out: Path) -> int:
    lams = grid(cfg["lambdas"], "lambdas")
    Rs = grid(cfg["R_list"], "R_list")
    if np.any(np.diff(Rs) <= 0):
        raise ConfigError("R_list must be ascending")
    pts = [(cfg, float(l), float(R)) for l in lams for R in Rs]
    res = parallel_map(_scaling_point, pts, int(cfg["workers"]))
    rows, failures = [], []
    for (_, l, R), (ok, val) in zip(pts, res):
        if ok:
            rows.append([l, R, val[0], val[1], 1.0 - val[1], val[2]])
        else:
            failures.append({"lambda": l, "R": R, "error": val})
    write_csv(out / "scaling.csv", ["lambda", "R", "P_bar", "Pq_bar", "one_minus_Pq_bar", "n_max"], rows)
    return _finish(out, cfg, failures)


RUNNERS = {
    "spectrum": run_spectrum,
    "phases": run_phase_diagram,
    "quench": run_quench,
    "sweep": run_sweep,
    "wigner": run_wigner,
    "scaling": run_scaling,
}


def execute(sub: str, user_cfg: dict, out) -> int:
    """Resolve, run and return an exit code (0 ok, 1 partial failure, 2 config error)."""
    try:
        cfg = resolve_config(sub, user_cfg)
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        n_failed = RUNNERS[sub](cfg, out)
    except (ConfigError, ParameterError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return 1 if n_failed else 0

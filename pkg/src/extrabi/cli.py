"""Command-line entry point: ``extrabi <subcommand> [options]``."""
from __future__ import annotations

import argparse
import sys

from .harness import RUNNERS, ConfigError, execute, load_config

PARAM_FLAGS = {
    "omega": float,
    "R": float,
    "N": int,
    "lambda": float,
    "delta": float,
    "mu": float,
    "gamma": float,
    "n_max": int,
}

HELP = {
    "spectrum": "semiclassical (and optional quantum) level densities plus ESQPT lines",
    "phases": "vacuum phase diagram over a (lambda, delta) grid",
    "quench": "time series and infinite-time averages of quenches",
    "sweep": "infinite-time averages over lambda (and delta) grids with smoothing",
    "wigner": "field Wigner snapshots of one quench",
    "scaling": "averaged survival probabilities versus R",
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="extrabi", description=__doc__)
    subs = ap.add_subparsers(dest="subcommand", required=True)
    for name in RUNNERS:
        sp = subs.add_parser(name, help=HELP[name])
        sp.add_argument("--config", help="JSON config file; flags override its values")
        sp.add_argument("--out", default=f"out-{name}", help="output directory")
        sp.add_argument("--workers", type=int, help="worker processes (static partition)")
        for flag, typ in PARAM_FLAGS.items():
            sp.add_argument(f"--{flag.replace('_', '-')}", dest=f"param_{flag}", type=typ)
        sp.add_argument("--lambdas", help="lambda grid 'start:stop:num' (quench: 'triple')")
        if name in ("phases", "sweep"):
            sp.add_argument("--deltas", help="delta grid 'start:stop:num'")
        if name == "spectrum":
            sp.add_argument("--eps", help="scaled-energy grid 'start:stop:num'")
            sp.add_argument("--quantum", action="store_true", help="add quantum smoothed densities")
            sp.add_argument("--kernel-width", type=float)
        if name in ("quench", "wigner"):
            sp.add_argument("--times", help="time grid 'start:stop:num'")
            sp.add_argument("--convention", choices=["standard", "scaled"])
            sp.add_argument("--n-points", type=int)
        if name == "quench":
            sp.add_argument("--wigner", action="store_true", help="also write Wigner snapshots")
        if name == "sweep":
            sp.add_argument("--window", type=float, help="smoothing window, fraction of the lambda range")
        if name == "scaling":
            sp.add_argument("--R-list", dest="R_list", help="comma separated sizes")
    return ap


def config_from_args(args) -> dict:
    cfg = load_config(args.config) if args.config else {}
    params = dict(cfg.get("params", {}))
    for flag in PARAM_FLAGS:
        v = getattr(args, f"param_{flag}")
        if v is not None:
            params[flag] = v
    if params:
        cfg["params"] = params
    for key in ("workers", "lambdas", "deltas", "eps", "kernel_width", "times", "convention",
                "n_points", "window"):
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = v
    for key in ("quantum", "wigner"):
        if getattr(args, key, False):
            cfg[key] = True
    if getattr(args, "R_list", None):
        try:
            cfg["R_list"] = [float(x) for x in args.R_list.split(",")]
        except ValueError:
            raise ConfigError(f"bad --R-list {args.R_list!r}") from None
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return execute(args.subcommand, cfg, args.out)


if __name__ == "__main__":
    raise SystemExit(main())

"""Command line entry point: `pdcouple <experiment> [flags]`."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields

from . import primes as pr
from .experiments import EXPERIMENTS, ExperimentConfig, run


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v]


def _grid(text: str) -> list[float]:
    """Either a comma list or start:stop:step (inclusive stop)."""
    if ":" not in text:
        return _floats(text)
    start, stop, step = (float(v) for v in text.split(":"))
    if step <= 0:
        raise argparse.ArgumentTypeError("grid step must be positive")
    n = int(round((stop - start) / step))
    return [round(start + i * step, 10) for i in range(n + 1)]


def _x_grid(text: str) -> list:
    return [int(float(v)) if float(v).is_integer() else float(v) for v in text.split(",") if v]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pdcouple", description="Poisson-Dirichlet coupling experiments.")
    sub = p.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON file with default values for any flag")
        s.add_argument("--x", type=_x_grid, help="comma-separated ascending x values")
        s.add_argument("--samples", type=int)
        s.add_argument("--mu-samples", type=int)
        s.add_argument("--seed", type=int)
        s.add_argument("--workers", type=int)
        s.add_argument("--out", help=f"output directory (default ${'{'}PDCOUPLE_OUT{'}'} or ./results)")
        s.add_argument("--k", type=int)
        s.add_argument("--family", choices=["uniform", "recursive", "multinomial"])
        s.add_argument("--alpha", type=_floats)
        s.add_argument("--grid", type=_grid)
        s.add_argument("--j", type=_ints)
        s.add_argument("--mgf-alpha", type=float)
        s.add_argument("--eps", type=float)
        s.add_argument("--w-max", type=float)
        s.add_argument("--factor-samples", type=int)
        s.add_argument("--mc-budget", type=int)
    return p


def config_from_args(ns: argparse.Namespace) -> ExperimentConfig:
    values: dict = {}
    if ns.config:
        with open(ns.config) as fh:
            values.update(json.load(fh))
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(values) - known
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
    for name in known - {"experiment"}:
        v = getattr(ns, name, None)
        if v is not None:
            values[name] = v
    values["experiment"] = ns.experiment
    if values.get("seed") is None:
        raise ValueError("--seed is required (no clock-based default)")
    return ExperimentConfig(**values)


def main(argv: list[str] | None = None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(ns)
        res = run(cfg)
    except (ValueError, pr.CapacityError, OSError) as e:
        print(f"pdcouple: error: {e}", file=sys.stderr)
        return 2
    for name, ok in res.hard_checks.items():
        print(f"{name}: {'ok' if ok else 'FAILED'}")
    return 0 if res.hard_ok else 1


if __name__ == "__main__":
    sys.exit(main())

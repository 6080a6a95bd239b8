"""``critbubble`` command line entry point."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig, load_config
from .constants import RegimeError
from .experiments import RecordStore, resolve_cache_dir, run


def _global_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--config", help="key=value experiment config file")
    g.add_argument("--out", help="output file (default: stdout)")
    g.add_argument("--seed", type=int, default=0, help="seed recorded with the run")
    g.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    g.add_argument("--cache-dir", help="run record store (overridden by $CRITBUBBLE_CACHE_DIR)")
    g.add_argument("--verbose", "-v", action="count", default=0)
    return p


def _model_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("weight overrides (take precedence over --config)")
    g.add_argument("--n", type=int, help="dimension")
    g.add_argument("--k", type=float, help="weight exponent")
    g.add_argument("--beta", type=float, help="weight coefficient beta_k")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = [_global_flags(), _model_flags()]
    parser = argparse.ArgumentParser(
        prog="critbubble",
        description="Numerical experiments for -div(p grad u) = u^(q-1) + lambda u.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        return sub.add_parser(name, parents=common, help=help_text)

    p = add("constants", "Sobolev constants and thresholds")
    p.add_argument("--diam", type=float)

    p = add("expansion", "bubble quotient versus eps (CSV)")
    p.add_argument("--lambda", dest="lam", type=float, default=0.0)
    p.add_argument("--eps-min", type=float)
    p.add_argument("--eps-max", type=float)
    p.add_argument("--points", type=int)

    p = add("family", "translated bubble functionals E, Gamma, F")
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--sigma-axis", type=int, default=0)
    p.add_argument("--scale", type=int, default=64)
    p.add_argument("--r0", type=float)
    p.add_argument("--R0", type=float)

    p = add("minimize", "estimate S_lambda(p) and the attainment verdict")
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--grid-M", type=int)
    p.add_argument("--refine", action="store_true", help="two-grid attainment verdict")

    p = add("eigen", "first eigenvalue of -div(p grad u)")
    p.add_argument("--grid-M", type=int)

    p = add("annulus", "radial solution on an annulus and the energy window")
    p.add_argument("--hole", type=float, required=True)
    p.add_argument("--grid-M", type=int)

    p = add("curve", "S_lambda over a lambda range (CSV)")
    p.add_argument("--lambda-from", type=float, required=True)
    p.add_argument("--lambda-to", type=float, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--grid-M", type=int)

    p = add("pohozaev", "Pohozaev identity residual of a solution")
    p.add_argument("--solution", required=True, help="JSON with 'r' and 'u' (or a minimize output)")
    p.add_argument("--lambda", dest="lam", type=float, required=True)

    p = add("certify", "nonexistence certificate")
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    return parser


def _config_for(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    changes = {}
    for key in ("n", "k", "beta"):
        value = getattr(args, key, None)
        if value is not None:
            changes[key] = value
    return cfg.replace(**changes) if changes else cfg


def _params_for(args) -> dict:
    skip = {"command", "config", "out", "seed", "jobs", "cache_dir", "verbose"}
    params = {k: v for k, v in vars(args).items() if k not in skip and v is not None}
    if "lam" in params:
        params["lambda"] = params.pop("lam")
    if args.command == "pohozaev":
        params["solution"] = str(Path(params["solution"]).resolve())
    if args.command == "minimize":
        params["refine"] = bool(params.get("refine"))
    return params


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config_for(args)
        cache = resolve_cache_dir(args.cache_dir)
        store = RecordStore(cache) if cache else None
        record = run(cfg, args.command, _params_for(args), store=store, jobs=args.jobs, seed=args.seed)
    except (ConfigError, RegimeError, ValueError, OSError) as exc:
        print(f"critbubble: error: {exc}", file=sys.stderr)
        return 2
    if args.out:
        Path(args.out).write_text(record.output)
    else:
        sys.stdout.write(record.output)
    return 0


if __name__ == "__main__":
    sys.exit(main())

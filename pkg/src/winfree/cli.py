"""Command line entry point: ``winfree <subcommand> [flags]``.

Each invocation writes one CSV (``#`` metadata lines, then the body) and a
``<out>.meta.json`` sidecar. ``lock`` writes a JSON report instead. A JSON
config file given with ``--config`` supplies defaults; explicit flags win.
"""

from __future__ import annotations

import argparse
import ast
import json
import logging
import math
import operator
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from . import experiments as ex
from .csvio import _jsonable, write_csv
from .locking import LockingError
from .model import ModelSpec
from .theory import SyncHypothesisError, kappa_star

log = logging.getLogger("winfree")

_OPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
    ast.USub: operator.neg,
    ast.UAdd: operator.pos,
}


def parse_number(text) -> float:
    """Float from a literal or a small arithmetic expression in ``pi``,
    e.g. ``pi/2-0.5`` or ``3e4``."""
    if isinstance(text, (int, float)):
        return float(text)

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.operand))
        raise ValueError(f"unsupported expression {text!r}")

    try:
        value = ev(ast.parse(str(text).strip(), mode="eval"))
    except SyntaxError as exc:
        raise argparse.ArgumentTypeError(f"cannot parse number {text!r}") from exc
    if not math.isfinite(value):
        raise argparse.ArgumentTypeError(f"non-finite value {text!r}")
    return value


def parse_grid(text) -> list[float]:
    """``start:stop:num`` (inclusive linspace), ``start:stop:num:log``
    (inclusive geometric spacing) or a comma-separated list."""
    if isinstance(text, (list, tuple)):
        values = [parse_number(v) for v in text]
    elif ":" in str(text):
        parts = str(text).split(":")
        if len(parts) not in (3, 4) or (len(parts) == 4 and parts[3] != "log"):
            raise argparse.ArgumentTypeError(f"grid {text!r} is not start:stop:num[:log]")
        start, stop = parse_number(parts[0]), parse_number(parts[1])
        num = int(parts[2])
        if num < 1:
            raise argparse.ArgumentTypeError(f"grid {text!r} has no points")
        if len(parts) == 4:
            if not (start > 0 and stop > 0):
                raise argparse.ArgumentTypeError(f"log grid {text!r} needs positive ends")
            values = np.geomspace(start, stop, num).tolist()
        else:
            values = np.linspace(start, stop, num).tolist()
    else:
        values = [parse_number(v) for v in str(text).split(",") if v.strip()]
    if not values:
        raise argparse.ArgumentTypeError("grid is empty")
    return values


def _add_sim_flags(p, t_end, ic):
    p.add_argument("--n", type=int, default=100, help="number of oscillators")
    p.add_argument("--t-end", type=parse_number, default=t_end, help="integration horizon T")
    p.add_argument("--step", type=parse_number, default=1e-2, help="RK4 step h")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threshold", type=parse_number, default=3 * math.pi,
                   help="synchronized iff d_X(T) < threshold")
    p.add_argument("--ic-low", type=parse_number, default=ic[0])
    p.add_argument("--ic-high", type=parse_number, default=ic[1])
    p.add_argument("--freq-scheme", choices=["equidistant", "seeded-uniform"],
                   default="equidistant")


def _add_scan_flags(p):
    p.add_argument("--gamma-resolution", type=parse_number, default=1e-3)
    p.add_argument("--bisections", type=int, default=10)
    p.add_argument("--majority-seeds", type=parse_grid, default=None,
                   help="comma list of seeds for a majority verdict")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="winfree", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="JSON file with flag defaults")
    common.add_argument("--out", default=None, help="output path (default stdout)")
    common.add_argument("--workers", type=int, default=1)

    sub = parser.add_subparsers(dest="command", required=True)
    half_pi = (-math.pi / 2, math.pi / 2)

    p = sub.add_parser("kappa-star", parents=[common], help="locking threshold versus beta")
    p.add_argument("--grid-beta", type=parse_grid, default=parse_grid("0:pi:181"))

    p = sub.add_parser("h-map", parents=[common], help="sign map of the stability integral")
    p.add_argument("--grid-beta", type=parse_grid, default=parse_grid("0:pi:91"))
    p.add_argument("--grid-kappa", type=parse_grid, default=parse_grid("0:4:81"))

    p = sub.add_parser("sync-domain", parents=[common], help="largest synchronized gamma per kappa")
    p.add_argument("--beta", type=parse_number, default=0.0)
    p.add_argument("--grid-kappa", type=parse_grid, default=parse_grid("0.05:0.75:15"))
    _add_sim_flags(p, 1500.0, half_pi)
    _add_scan_flags(p)

    p = sub.add_parser("desync-curve", parents=[common], help="largest synchronized gamma per beta")
    p.add_argument("--kappa", type=parse_number, default=0.6)
    p.add_argument("--grid-beta", type=parse_grid, default=parse_grid("0:pi:25"))
    _add_sim_flags(p, 3e4, half_pi)
    _add_scan_flags(p)

    p = sub.add_parser("order-scan", parents=[common], help="r_X(T) versus beta")
    p.add_argument("--kappa", type=parse_number, default=0.6)
    p.add_argument("--grid-beta", type=parse_grid, default=parse_grid("0:pi:61"))
    p.add_argument("--grid-gamma", type=parse_grid, default=parse_grid("0,0.011,0.0412"))
    _add_sim_flags(p, 3000.0, half_pi)

    p = sub.add_parser("timeseries", parents=[common], help="d_X(t) and mean along one run")
    p.add_argument("--beta", type=parse_number, default=0.0)
    p.add_argument("--gamma", type=parse_number, default=0.0412)
    p.add_argument("--kappa", type=parse_number, default=0.6)
    p.add_argument("--record-every", type=int, default=100)
    _add_sim_flags(p, 3e4, (-math.pi, math.pi))

    p = sub.add_parser("certify", parents=[common], help="certified domain on a (gamma, kappa) grid")
    p.add_argument("--beta", type=parse_number, default=0.0)
    p.add_argument("--grid-gamma", type=parse_grid, default=parse_grid("1e-11:1e-4:22:log"))
    p.add_argument("--grid-kappa", type=parse_grid, default=parse_grid("0.035:0.735:21"))

    p = sub.add_parser("lock", parents=[common], help="locked solution at a certified point")
    p.add_argument("--beta", type=parse_number, default=0.0)
    p.add_argument("--gamma", type=parse_number, default=1e-5)
    p.add_argument("--kappa", type=parse_number, default=0.3)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--step", type=parse_number, default=1e-2)
    p.add_argument("--freq-scheme", choices=["equidistant", "seeded-uniform"],
                   default="equidistant")
    p.add_argument("--accelerate", action="store_true", help="Anderson mixing of iterates")
    p.add_argument("--max-iters", type=int, default=5000)
    p.add_argument("--psi", action="store_true", help="include sampled deviations")
    return parser


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        subparser = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in subparser._actions}
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
        unknown = sorted(set(cfg) - known)
        if unknown:
            parser.error(f"unknown config keys: {', '.join(unknown)}")
        typed = {}
        for action in subparser._actions:
            if action.dest in cfg:
                value = cfg[action.dest]
                if action.type is not None and value is not None and not isinstance(value, bool):
                    value = action.type(value)
                typed[action.dest] = value
        subparser.set_defaults(**typed)
        args = parser.parse_args(argv)
    return args


def _setup(args) -> ex.SimSetup:
    if args.n < 1 or not args.t_end > 0 or not args.step > 0:
        raise ValueError("need n >= 1, t-end > 0 and step > 0")
    return ex.SimSetup(N=args.n, t_end=args.t_end, h=args.step, seed=args.seed,
                       ic_low=args.ic_low, ic_high=args.ic_high, scheme=args.freq_scheme,
                       threshold=args.threshold)


def _seeds(args):
    return None if not args.majority_seeds else [int(s) for s in args.majority_seeds]


def _config_dict(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("verbose",)}


SWEEP_COLUMNS = ["beta", "gamma", "kappa", "N", "seed", "T", "d_X", "r_X", "verdict"]


def run(args) -> int:
    started = time.perf_counter()
    meta = {"tool": "winfree", "version": __version__, "command": args.command,
            "config": _config_dict(args)}
    if getattr(args, "step", 1e-2) > 1e-2:
        meta["coarse_step"] = True
    cmd = args.command
    status = 0

    if cmd == "kappa-star":
        rows = ex.kappa_star_curve(args.grid_beta)
        columns = ["beta", "kappa_star"]
    elif cmd == "h-map":
        rows = ex.h_map(args.grid_beta, args.grid_kappa, args.workers)
        columns = ["beta", "kappa", "kappa_star", "valid", "H", "sign"]
    elif cmd == "sync-domain":
        ks = kappa_star(ModelSpec.simplified(args.beta))
        bad = [k for k in args.grid_kappa if not 0 < k < ks]
        if bad:
            raise ValueError(f"kappa values {bad} outside (0, kappa*={ks})")
        seeds = _seeds(args)
        meta["majority_mode"] = seeds is not None
        rows = ex.sync_domain(args.beta, args.grid_kappa, _setup(args), args.gamma_resolution,
                              args.bisections, seeds, args.workers)
        columns = ["beta", "kappa", "gamma_max", "gamma_fail", "runs"]
    elif cmd == "desync-curve":
        low = min(kappa_star(ModelSpec.simplified(b)) for b in args.grid_beta)
        if not args.kappa < low:
            raise ValueError(f"kappa={args.kappa} not below min kappa* over the grid ({low})")
        seeds = _seeds(args)
        meta["majority_mode"] = seeds is not None
        rows = ex.desync_curve(args.kappa, args.grid_beta, _setup(args), args.gamma_resolution,
                               args.bisections, seeds, args.workers)
        columns = ["beta", "kappa", "gamma_max", "gamma_fail", "runs"]
    elif cmd == "order-scan":
        rows = ex.order_scan(args.grid_beta, args.grid_gamma, args.kappa, _setup(args),
                             args.workers)
        meta["cell_runtime_s"] = sum(r["runtime"] for r in rows)
        columns = SWEEP_COLUMNS
    elif cmd == "timeseries":
        result = ex.timeseries(args.beta, args.gamma, args.kappa, _setup(args),
                               args.record_every)
        rows = result["rows"]
        meta["snapshot"] = result["snapshot"]
        meta["status"] = result["status"]
        if result["status"] != "ok":
            meta["partial"] = True
            status = 1
        columns = ["t", "d_X", "mu"]
    elif cmd == "certify":
        rows = ex.certify_grid(args.beta, args.grid_gamma, args.grid_kappa, args.workers)
        columns = ["gamma", "kappa", "in_U", "D", "L", "max_delta", "mean_increasing", "status"]
    elif cmd == "lock":
        report = ex.lock_report(args.beta, args.gamma, args.kappa, args.n, args.seed,
                                args.step, args.freq_scheme, args.accelerate, args.max_iters,
                                include_psi=args.psi)
        meta["wall_clock_s"] = time.perf_counter() - started
        text = json.dumps(_jsonable({"meta": meta, "report": report}), indent=2, sort_keys=True)
        if args.out in (None, "-"):
            sys.stdout.write(text + "\n")
        else:
            Path(args.out).parent.mkdir(parents=True, exist_ok=True)
            Path(args.out).write_text(text + "\n", encoding="utf-8")
        return 0
    else:  # pragma: no cover - argparse guards the choices
        raise ValueError(cmd)

    meta["wall_clock_s"] = time.perf_counter() - started
    write_csv(args.out, columns, rows, meta)
    return status


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except (ValueError, SyncHypothesisError, LockingError) as exc:
        print(f"winfree {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

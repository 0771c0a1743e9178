#!/usr/bin/env python3
"""Command-line entry point.

    python app.py run scenarios/default.env --out out/d2oc
    python app.py run scenarios/default.env --method lm --seed 3
    python app.py compare scenarios/desk.env
    python app.py validate scenarios/default.env
"""
import argparse
import logging
import math
import os
import sys

from dotenv import load_dotenv

from density import GridSpec, describe
from errors import ConfigError, D2ocError
from export import export_run
from runner import run_scenario, trajectory_wasserstein
from scenario import METHODS, load_scenario

load_dotenv()

EXIT_OK = 0
EXIT_IO = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
DECENTRALIZED_RANGE = 10.0  # m, used by `compare` when the scenario is centralized


def _env_seed():
    raw = os.getenv("D2OC_SEED", "").strip()
    if not raw:
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"D2OC_SEED must be an integer, got {raw!r}") from None


def _scenario(args):
    cfg = load_scenario(args.config)
    seed = getattr(args, "seed", None)
    if seed is None:
        seed = _env_seed()
    return cfg.with_overrides(seed=seed, method=getattr(args, "method", None))


def cmd_validate(args):
    cfg = _scenario(args)
    print(f"[validate] {args.config}: OK")
    for key, value in cfg.items():
        print(f"  {key} = {value}")
    stats = describe(cfg.field, GridSpec.for_domain(cfg.domain, cfg.cell_size))
    x, y = stats.peak_position
    print(f"  peak weed density at ({x:.2f}, {y:.2f}), {stats.mass_in_domain:.4f} of the mixture on the farm")
    return EXIT_OK


def cmd_run(args):
    cfg = _scenario(args)
    out = args.out or os.getenv("D2OC_OUT_DIR", "out")
    result = run_scenario(cfg)
    export_run(result, out)
    for key, value in result.metrics().items():
        print(f"[run] {key}: {value:.6g}")
    print(f"[run] outputs in {out}")
    return EXIT_OK


def _compare_runs(cfg):
    d_comm = cfg.d_comm if not math.isinf(cfg.d_comm) else DECENTRALIZED_RANGE
    return [
        ("LM", cfg.with_overrides(method="lm")),
        ("SMC", cfg.with_overrides(method="smc")),
        ("D2OC centralized", cfg.with_overrides(method="d2oc", d_comm=math.inf)),
        (f"D2OC d_comm={d_comm:g} m", cfg.with_overrides(method="d2oc", d_comm=d_comm)),
    ]


def cmd_compare(args):
    cfg = _scenario(args)
    rows = []
    for label, variant in _compare_runs(cfg):
        result = run_scenario(variant)
        w2 = trajectory_wasserstein(result, result.cloud, stride=args.stride) if result.steps else float("nan")
        rows.append((label, result.total_dosage, result.reduction_rate, result.max_survival, w2))

    print(f"\n{cfg.operation_time:g} s, {cfg.n_agents} drones, seed {cfg.seed}")
    print(f"{'Method':<22}{'Dosage (g ai)':>15}{'Reduction (%)':>15}{'Max survival':>14}{'W2^2':>12}")
    for label, dosage, reduction, survival, w2 in rows:
        print(f"{label:<22}{dosage:>15.3f}{reduction:>15.2f}{survival:>14.3f}{w2:>12.3f}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="app.py", description="Multi-drone spraying coverage simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario and write CSV/SVG outputs")
    run.add_argument("config")
    run.add_argument("--out", help="output directory (default $D2OC_OUT_DIR or ./out)")
    run.add_argument("--method", choices=METHODS)
    run.add_argument("--seed", type=int)
    run.set_defaults(func=cmd_run)

    compare = sub.add_parser("compare", help="LM, SMC and D2OC on the same scenario")
    compare.add_argument("config")
    compare.add_argument("--seed", type=int)
    compare.add_argument("--stride", type=int, default=1, help="merge agent-points for the W2 column")
    compare.set_defaults(func=cmd_compare)

    validate = sub.add_parser("validate", help="parse and check a scenario file")
    validate.add_argument("config")
    validate.set_defaults(func=cmd_validate)
    return parser


def main(argv=None):
    logging.basicConfig(
        level=os.getenv("D2OC_LOG_LEVEL", "INFO").upper(),
        format="%(asctime)s [%(levelname)s] %(name)s %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"[config] {e}", file=sys.stderr)
        return EXIT_CONFIG
    except D2ocError as e:
        print(f"[error] {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as e:
        print(f"[io] {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    raise SystemExit(main())

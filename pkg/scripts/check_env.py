#!/usr/bin/env python3
"""
Smoke-check the install: dependency versions, D2OC_* variables from .env,
scenario validation and a short desk-scale episode per method.
"""
from __future__ import annotations

import os
import sys
from importlib import metadata
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT))
os.chdir(ROOT)

from dotenv import load_dotenv

load_dotenv(ROOT / ".env")

PACKAGES = ["numpy", "scipy", "POT", "osqp", "python-dotenv"]
ENV_VARS = {"D2OC_OUT_DIR": "out", "D2OC_LOG_LEVEL": "INFO", "D2OC_SEED": "(scenario seed)"}
SCENARIOS = ["scenarios/default.env", "scenarios/desk.env"]
SMOKE_SECONDS = 2.0


def check_package(name: str) -> tuple[bool, str]:
    try:
        return True, metadata.version(name)
    except metadata.PackageNotFoundError:
        return False, "not installed"


def main() -> int:
    exit_code = 0
    print("=== dependencies ===\n")
    for name in PACKAGES:
        ok, msg = check_package(name)
        if not ok:
            exit_code = 1
        print(f"{'OK ' if ok else 'FAIL'} {name}: {msg}")

    print("\n=== environment ===\n")
    for name, default in ENV_VARS.items():
        value = os.getenv(name, "").strip()
        print(f"INFO {name}: {value or default}{'' if value else ' (default)'}")

    if exit_code:
        print("\nSKIP scenario checks (missing dependencies)")
        return exit_code

    from errors import D2ocError
    from runner import run_scenario
    from scenario import load_scenario

    print("\n=== scenarios ===\n")
    for path in SCENARIOS:
        try:
            cfg = load_scenario(path)
            print(f"OK  {path}: {cfg.method}, {cfg.n_agents} agents, {cfg.steps} steps")
        except (OSError, D2ocError) as e:
            exit_code = 1
            print(f"FAIL {path}: {e}")

    print(f"\n=== {SMOKE_SECONDS:g} s desk episodes ===\n")
    try:
        desk = load_scenario("scenarios/desk.env").with_overrides(operation_time=SMOKE_SECONDS)
    except (OSError, D2ocError) as e:
        print(f"FAIL desk scenario: {e}")
        return 1
    for method in ("d2oc", "lm", "smc"):
        try:
            result = run_scenario(desk.with_overrides(method=method))
            print(f"OK  {method}: reduction {result.reduction_rate:.2f} %, dosage {result.total_dosage:.4f} g")
        except D2ocError as e:
            exit_code = 1
            print(f"FAIL {method}: {e}")

    return exit_code


if __name__ == "__main__":
    raise SystemExit(main())

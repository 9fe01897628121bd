"""CLI entry point: cerm <subcommand> --config path.json [--seed N] [--out dir]."""

from __future__ import annotations

import argparse
import json
import os
import sys
import traceback

from .experiments import (
    ExperimentConfig,
    run_constraint_suite,
    run_contour_fit,
    run_dwt_roundtrip,
    run_grad_check,
    run_qmf_find,
    run_sphere_demo,
)

RUNNERS = {
    "sphere-demo": run_sphere_demo,
    "qmf-find": run_qmf_find,
    "dwt-roundtrip": run_dwt_roundtrip,
    "grad-check": run_grad_check,
    "contour-fit": run_contour_fit,
    "constraint-suite": run_constraint_suite,
}


def load_config(path: str | None, seed: int | None, out: str | None, subcommand: str) -> ExperimentConfig:
    payload = {}
    if path is not None:
        with open(path) as fh:
            payload = json.load(fh)
    cfg = ExperimentConfig.from_dict(payload)
    if seed is not None:
        cfg.seed = seed
    if out is not None:
        cfg.out_dir = out
    elif path is None and "out_dir" not in payload:
        cfg.out_dir = f"out-{subcommand}"
    return cfg


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="cerm",
        description="Constrained-training experiments: exact-constraint SGD, QMF filters, curve fitting.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in RUNNERS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON config; missing keys use defaults")
        p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        p.add_argument("--out", default=None, help="output directory")
    args = parser.parse_args(argv)

    cfg = load_config(args.config, args.seed, args.out, args.subcommand)
    try:
        metrics = RUNNERS[args.subcommand](cfg)
    except Exception as exc:  # noqa: BLE001 - failure record must always be written
        os.makedirs(cfg.out_dir, exist_ok=True)
        record = {
            "status": "failed",
            "subcommand": args.subcommand,
            "error": f"{type(exc).__name__}: {exc}",
            "traceback": traceback.format_exc(),
        }
        with open(os.path.join(cfg.out_dir, "metrics.json"), "w") as fh:
            json.dump(record, fh, indent=2)
        print(json.dumps({k: v for k, v in record.items() if k != "traceback"}, indent=2))
        return 1

    print(json.dumps(metrics, indent=2, default=float))
    return 0 if metrics.get("passed", False) else 1


if __name__ == "__main__":
    sys.exit(main())

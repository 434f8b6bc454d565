"""Command-line driver: ``kernel-bpm {bounds,compare,sample,verify,data}``.

Exit codes: 0 on success, 1 when a verification check fails, 2 on a
configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import data, experiment, verify
from .experiment import ConfigError, ExperimentConfig

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.replace(",", " ").split()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}") from exc


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config; flags override it")
    common.add_argument("--seed", type=int)
    common.add_argument("--out-dir")
    common.add_argument("--n-grid", type=_int_list, help="e.g. 100,200,500")
    common.add_argument("--delta", type=float)
    common.add_argument("--depth", type=int, help="arccosine kernel depth L")
    common.add_argument("--ensemble", type=int, help="posterior draws m")
    common.add_argument("--ycom-cap", type=int, help="largest n for centre-of-mass work")
    common.add_argument("--test-count", type=int)
    common.add_argument("--dataset", choices=["mnist_even_odd", "synthetic_gaussians", "synthetic_xor"])
    common.add_argument("--posterior", choices=["iso", "gp"])
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="kernel-bpm", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("bounds", parents=[common], help="risk bounds over the n-grid")
    sub.add_parser("compare", parents=[common], help="Gibbs / Bayes / BPM test errors over the n-grid")
    sp = sub.add_parser("sample", parents=[common], help="persist posterior samples for one n")
    sp.add_argument("--n", type=int, help="training size (default: first grid entry)")
    vp = sub.add_parser("verify", parents=[common], help="run the self-check suites")
    vp.add_argument("--corrupt-tolerances", action="store_true", help=argparse.SUPPRESS)
    dp = sub.add_parser("data", parents=[common], help="prepare or inspect the dataset")
    dp.add_argument("--export", action="store_true", help="write X and Y matrices to the output directory")
    return p


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = experiment.load_config(args.config) if args.config else ExperimentConfig()
    overrides = {
        "seed": args.seed,
        "out_dir": args.out_dir,
        "n_grid": args.n_grid,
        "delta": args.delta,
        "ensemble": args.ensemble,
        "ycom_cap": args.ycom_cap,
        "test_count": args.test_count,
        "posterior": args.posterior,
    }
    for k, v in overrides.items():
        if v is not None:
            setattr(cfg, k, v)
    if args.depth is not None:
        cfg.kernel.depth = args.depth
    if args.dataset is not None:
        cfg.dataset.source = args.dataset
    return cfg.validate()


def cmd_bounds(cfg: ExperimentConfig) -> int:
    rows = experiment.run_bounds(cfg)
    for r in rows:
        if r["record"] == "error":
            print(f"n={r['n']}: error: {r['message']}")
        else:
            print(
                f"n={r['n']}: A={r['kl_iso']:.4g} gibbs={r['gibbs_bound']:.4f} "
                f"bpm={r['bpm_bound_centroid']:.4f} rademacher={r['rademacher_bound']:.4f}"
            )
    print(f"wrote {Path(cfg.out_dir) / 'bounds.csv'}")
    return EXIT_OK


def cmd_compare(cfg: ExperimentConfig) -> int:
    rows = experiment.run_compare(cfg)
    for r in rows:
        if r["record"] == "error":
            print(f"n={r['n']}: error: {r['message']}")
        else:
            print(
                f"n={r['n']}: gibbs={r['eps_gibbs']:.4f} bayes={r['eps_bayes']:.4f} "
                f"bpm={r['eps_bpm']:.4f} delta={r['delta_approx']:.4f}"
            )
    print(f"wrote {Path(cfg.out_dir) / 'compare.csv'}")
    return EXIT_OK


def cmd_sample(cfg: ExperimentConfig, n: Optional[int] = None) -> int:
    path = experiment.run_sample(cfg, n)
    print(f"wrote {path} and {path.with_suffix('.json')}")
    return EXIT_OK


def cmd_verify(seed: int = 0, corrupt: bool = False) -> int:
    results = verify.run_all(seed, corrupt=corrupt)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}")
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_FAILED


def cmd_data(cfg: ExperimentConfig, export: bool = False) -> int:
    test, pool = experiment.load_dataset(cfg)
    for name, ds in (("test", test), ("train pool", pool)):
        pos = int(np.count_nonzero(ds.Y > 0))
        print(f"{name}: {ds.n} points, d0={ds.d0}, {pos} positive / {ds.n - pos} negative ({ds.source})")
    if export:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, ds in (("test", test), ("train", pool)):
            data.save_matrix(out / f"{name}_X.bpmmat", ds.X)
            data.save_matrix(out / f"{name}_Y.bpmmat", ds.Y[:, None])
        print(f"exported matrices to {out}")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.command == "verify":
        return cmd_verify(args.seed or 0, corrupt=args.corrupt_tolerances)
    try:
        cfg = build_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "bounds":
            return cmd_bounds(cfg)
        if args.command == "compare":
            return cmd_compare(cfg)
        if args.command == "sample":
            return cmd_sample(cfg, args.n)
        return cmd_data(cfg, export=args.export)
    except (data.DataError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: train, sweep, plot, drift, gradcheck."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..errors import ConfigError, NumericalError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3
GRADCHECK_TOL = 1e-4


def _seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"bad seed list {text!r}") from None


def _cmd_train(args) -> int:
    from .config import load_config
    from .training import run_training
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.seeds[0]
    path = run_training(cfg, seed, args.out or cfg.out_dir)
    print(f"metrics\t{path}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    from .config import load_config
    from .sweep import sweep
    cfg = load_config(args.config)
    seeds = _seeds(args.seeds) if args.seeds else cfg.seeds
    result = sweep(cfg, seeds, args.out or cfg.out_dir, workers=args.workers)
    for seed, path in result.paths.items():
        print(f"ok\t{seed}\t{path}")
    for seed, err in result.failures.items():
        print(f"failed\t{seed}\t{err}")
    if result.summary is not None:
        print(f"summary\t{result.summary}")
        print(f"figure\t{result.figure}")
    if not result.failures:
        return EXIT_OK
    return EXIT_NUMERICAL if all(e.startswith("numerical") for e in result.failures.values()) else 1


def _cmd_plot(args) -> int:
    from .plotting import emit_plot
    src = Path(args.inp)
    files = sorted(src.glob("*.jsonl")) if src.is_dir() else [src]
    if not files:
        raise ConfigError(f"no metrics files under {src}")
    print(f"figure\t{emit_plot(files, args.out, metric=args.metric)}")
    return EXIT_OK


def _cmd_drift(args) -> int:
    from .config import RunConfig, load_config
    from .report import drift_report
    cfg = load_config(args.config) if args.config else RunConfig()
    paths = drift_report(cfg, args.out)
    sys.stdout.write(paths["summary"].read_text())
    for kind, path in paths.items():
        print(f"{kind}\t{path}")
    return EXIT_OK


def _cmd_gradcheck(args) -> int:
    from ..verify import gradcheck_suite
    results = gradcheck_suite(range(args.seeds))
    worst = 0.0
    for name, err in results.items():
        print(f"{name}\t{err:.3e}\t{'pass' if err < GRADCHECK_TOL else 'FAIL'}")
        worst = max(worst, err)
    return EXIT_OK if worst < GRADCHECK_TOL else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="omdpg", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one seed")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("--out")
    t.set_defaults(fn=_cmd_train)

    s = sub.add_parser("sweep", help="train several seeds and aggregate")
    s.add_argument("--config", required=True)
    s.add_argument("--seeds", help="comma-separated, e.g. 0,1,2")
    s.add_argument("--out")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(fn=_cmd_sweep)

    pl = sub.add_parser("plot", help="learning curves from metrics files")
    pl.add_argument("--in", dest="inp", required=True, help="metrics file or directory")
    pl.add_argument("--out", required=True)
    pl.add_argument("--metric", default="eval_return")
    pl.set_defaults(fn=_cmd_plot)

    d = sub.add_parser("drift", help="exact sequential-ratio drift report")
    d.add_argument("--config")
    d.add_argument("--out", required=True)
    d.set_defaults(fn=_cmd_drift)

    g = sub.add_parser("gradcheck", help="finite-difference check of all gradients")
    g.add_argument("--seeds", type=int, default=20)
    g.set_defaults(fn=_cmd_gradcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        for k, v in sorted(exc.diagnostics.items()):
            print(f"  {k}: {v}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())

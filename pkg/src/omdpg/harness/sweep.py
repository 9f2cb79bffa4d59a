"""Multi-seed sweeps: independent runs, optional process pool, aggregate summary."""
from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import NumericalError
from .config import RunConfig, from_dict
from .plotting import curves, emit_plot
from .training import read_metrics, run_training

log = logging.getLogger(__name__)


@dataclass
class SweepResult:
    paths: dict = field(default_factory=dict)       # seed -> metrics path
    failures: dict = field(default_factory=dict)    # seed -> error message
    summary: Path | None = None
    figure: Path | None = None

    @property
    def ok(self) -> bool:
        return not self.failures


def _run_one(cfg_dict: dict, seed: int, out_dir: str):
    try:
        return seed, str(run_training(from_dict(cfg_dict), seed, out_dir)), None
    except NumericalError as exc:
        return seed, None, f"numerical abort: {exc}"
    except Exception as exc:  # report and keep the sweep going
        return seed, None, f"{type(exc).__name__}: {exc}"


def aggregate(files, metric: str = "eval_return") -> list[dict]:
    """Per (label, step): mean and population std of ``metric`` across runs."""
    rows = []
    for label, (steps, mean, std) in curves(files, metric).items():
        for s, m, sd in zip(steps, mean, std):
            rows.append({"label": label, "step": int(s), "metric": metric, "mean": float(m), "std": float(sd)})
    return rows


def write_summary(files, out_dir, metric: str = "eval_return") -> Path:
    rows = aggregate(files, metric)
    out_dir = Path(out_dir)
    path = out_dir / "summary.csv"
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, ["label", "step", "metric", "mean", "std"], lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    (out_dir / "summary.json").write_text(json.dumps(rows, indent=1, sort_keys=True))
    return path


def final_returns(files, metric: str = "eval_return") -> np.ndarray:
    """Last recorded ``metric`` of each file, in sorted path order."""
    vals = []
    for f in sorted(map(Path, files)):
        _, recs = read_metrics(f)
        vals.append(recs[-1][metric] if recs else np.nan)
    return np.array(vals, dtype=np.float64)


def sweep(cfg: RunConfig, seeds, out_dir, workers: int = 1, metric: str | None = None) -> SweepResult:
    """Run every seed; failures are collected per seed and the rest continue."""
    seeds = [int(s) for s in seeds]
    if len(set(seeds)) != len(seeds):
        raise ValueError("seeds must be distinct")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = SweepResult()
    data = cfg.to_dict()
    if workers > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_one, [data] * len(seeds), seeds, [str(out_dir)] * len(seeds)))
    else:
        outcomes = [_run_one(data, s, str(out_dir)) for s in seeds]
    for seed, path, err in sorted(outcomes):
        if err is None:
            result.paths[seed] = Path(path)
        else:
            log.error("seed %d failed: %s", seed, err)
            result.failures[seed] = err
    if result.paths:
        metric = metric or ("success" if cfg.env == "signal_lever" else "eval_return")
        files = list(result.paths.values())
        result.summary = write_summary(files, out_dir, metric)
        result.figure = emit_plot(files, out_dir / "summary.svg", metric)
    return result

"""Learning-curve figures from metrics files."""
from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .training import read_metrics  # noqa: E402

# fixed hash salt and no timestamp keep SVG output byte-stable
STYLE = {"svg.hashsalt": "omdpg", "svg.fonttype": "none", "figure.figsize": (6.0, 4.0),
         "axes.grid": True, "grid.alpha": 0.3, "font.size": 9}


def curves(files, metric: str = "eval_return") -> dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """label -> (steps, mean, std) over files, using the steps all files share."""
    by_label = defaultdict(list)
    for f in sorted(map(Path, files)):
        header, recs = read_metrics(f)
        by_label[header["label"]].append({r["step"]: r[metric] for r in recs if r.get(metric) is not None})
    out = {}
    for label, runs in sorted(by_label.items()):
        steps = sorted(set.intersection(*(set(r) for r in runs)))
        vals = np.array([[r[s] for s in steps] for r in runs], dtype=np.float64).reshape(len(runs), len(steps))
        out[label] = (np.array(steps), vals.mean(axis=0), vals.std(axis=0))
    return out


def emit_plot(files, out, metric: str = "eval_return", title: str | None = None) -> Path:
    """Mean curve with a shaded one-std band per label, saved as SVG."""
    files = list(files)
    if not files:
        raise ValueError("emit_plot needs at least one metrics file")
    data = curves(files, metric)
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for label, (steps, mean, std) in data.items():
            line, = ax.plot(steps, mean, label=label)
            ax.fill_between(steps, mean - std, mean + std, color=line.get_color(), alpha=0.2, linewidth=0)
        ax.set_xlabel("environment steps")
        ax.set_ylabel(metric.replace("_", " "))
        if title:
            ax.set_title(title)
        ax.legend(loc="best")
        fig.tight_layout()
        fig.savefig(out, format="svg", metadata={"Date": None})
        plt.close(fig)
    return out

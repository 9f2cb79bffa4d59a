"""Sequential-ratio drift report: CSV, text summary and a bar chart."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..envs.signal_lever import SignalLever  # noqa: E402
from ..errors import ConfigError  # noqa: E402
from ..oracle import SCHEMES, RatioReport, ratio_diagnostic  # noqa: E402
from .config import RunConfig  # noqa: E402
from .plotting import STYLE  # noqa: E402


def drift_figure(report: RatioReport, out) -> Path:
    n = len(report.order)
    x = np.arange(n)
    width = 0.8 / len(SCHEMES)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for k, scheme in enumerate(SCHEMES):
            vals = [np.log(report.ratios[scheme][agent]) for agent in report.order]
            ax.bar(x + (k - 1) * width, vals, width, label=scheme)
        ax.set_xticks(x, [f"agent {a}\n(group {report.groups[a]})" for a in report.order])
        ax.axhline(0.0, color="black", linewidth=0.6)
        ax.set_ylabel("log F")
        ax.set_title(f"sequential ratio per update position, lr={report.lr}")
        ax.legend(loc="best")
        fig.tight_layout()
        fig.savefig(out, format="svg", metadata={"Date": None})
        plt.close(fig)
    return Path(out)


def drift_report(cfg: RunConfig, out_dir) -> dict[str, Path]:
    """Run the exact ratio diagnostic for ``cfg``'s game and write report files."""
    env = cfg.make_env()
    if not isinstance(env, SignalLever):
        raise ConfigError("drift report needs an enumerable game (env 'signal_lever')")
    game = env.game
    if env.groups != game.groups:
        game = type(game)(game.payoff, env.groups, game.horizon)
    report = ratio_diagnostic(game, lr=cfg.drift_lr)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {"csv": out_dir / "drift.csv", "summary": out_dir / "drift.txt", "figure": out_dir / "drift.svg"}
    paths["csv"].write_text(report.to_csv())
    paths["summary"].write_text(report.summary())
    drift_figure(report, paths["figure"])
    return paths

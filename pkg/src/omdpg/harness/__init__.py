"""Training orchestration, sweeps, figures and the command line."""
from .config import RunConfig, from_dict, load_config
from .plotting import emit_plot
from .report import drift_report
from .sweep import sweep
from .training import read_metrics, run_training

__all__ = ["RunConfig", "drift_report", "emit_plot", "from_dict", "load_config", "read_metrics",
           "run_training", "sweep"]

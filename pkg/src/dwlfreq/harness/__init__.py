"""Case studies, Monte Carlo runs, metrics and CSV export."""

from .config import ALGORITHMS, ConfigError, RunConfig, config_from_mapping, load_config
from .export import export_csv, export_metrics_csv, write_outputs
from .metrics import (
    Metrics,
    compare_variances,
    compute_metrics,
    ensemble_variance,
    segment_windows,
    trial_bias,
    window_indices,
)
from .runner import RunResult, case_study, case_study_config, run, sweep_snr

__all__ = [
    "ALGORITHMS", "ConfigError", "Metrics", "RunConfig", "RunResult", "case_study", "case_study_config",
    "compare_variances", "compute_metrics", "config_from_mapping", "ensemble_variance", "export_csv",
    "export_metrics_csv", "load_config", "run", "segment_windows", "sweep_snr", "trial_bias",
    "window_indices", "write_outputs",
]

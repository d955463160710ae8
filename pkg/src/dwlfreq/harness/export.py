"""CSV export of trajectories and aggregates.

Floats are written with ``repr`` so files round-trip exactly and are
byte-identical across runs. Node ids are 1-based, trial ids 0-based. Every
row carries the hash of the configuration that produced it.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable

from .runner import RunResult

TRAJECTORY_HEADER = ("time_s", "trial", "node", "algorithm", "f_hat_hz", "f_true_hz", "config_hash")
SWEEP_HEADER = ("snr_db", "node", "algorithm", "bias_hz", "variance_hz2", "trials", "config_hash")


def _f(x) -> str:
    return repr(float(x))


def _open(path: str | Path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path.open("w", encoding="utf-8", newline="")


def export_csv(result: RunResult, path: str | Path, max_trials: int | None = None) -> Path:
    """Write trajectories in (trial, node, algorithm, step) order.

    Only the first ``max_trials`` trials are written (all by default).
    """
    names = list(result.trajectories)
    trials = result.trials if names else 0
    if max_trials is not None:
        trials = min(trials, max_trials)
    times = [_f(t) for t in result.times]
    truth = [_f(f) for f in result.f_true]
    h = result.config_hash
    with _open(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_HEADER)
        for t in range(trials):
            for node in range(result.config.scenario.node_count):
                for name in names:
                    col = result.trajectories[name][:, node, t]
                    w.writerows((times[n], t, node + 1, name, repr(float(col[n])), truth[n], h)
                                for n in range(col.shape[0]))
    return Path(path)


def export_metrics_csv(results: Iterable[RunResult], path: str | Path) -> Path:
    """Write per-node bias and variance of each result (sweep schema)."""
    with _open(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        for res in results:
            for node in range(res.config.scenario.node_count):
                for name in res.trajectories:
                    m = res.metrics(name)
                    w.writerow((_f(res.snr_db), node + 1, name, _f(m.bias[node]), _f(m.variance[node]),
                                res.trials, res.config_hash))
    return Path(path)


def write_outputs(result: RunResult, out: str | Path) -> list[Path]:
    """Trajectories (first ``export_trials`` trials) and metrics of one run."""
    out = Path(out)
    return [
        export_csv(result, out / "trajectories.csv", result.config.export_trials),
        export_metrics_csv([result], out / "metrics.csv"),
    ]

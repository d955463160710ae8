"""Run configuration: scenario files, algorithm sets and the config hash.

Scenario files are YAML mappings of flat keys plus an ordered ``events``
list; ``configs/example.yaml`` in the repository documents every key.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

import yaml

from ..network import NetworkTopology, load_topology
from ..powergrid import SAGS, GridEvent, GridScenario, NodeNoise

KALMAN = ("CEKF", "ACEKF", "D-CEKF", "D-ACEKF")
LINEAR = ("D-CKF", "D-ACKF", "D-ACKF-INFO")
HILBERT = ("HILBERT", "D-HILBERT")
ALGORITHMS = KALMAN + LINEAR + HILBERT
PHASES = {"a": 0, "b": 1, "c": 2}

SCENARIO_KEYS = {
    "f_nominal", "sampling_rate_hz", "duration_s", "phase_rad", "nodes", "snr_db", "noise_ratio",
    "spike_prob", "spike_amp", "spike_nodes", "noise_nodes", "rho", "events",
}
RUN_KEYS = {
    "topology", "rule", "algorithms", "trials", "seed", "f_init", "window_s", "hilbert_phase",
    "export_trials", "chunk", "label",
}


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce one run bit for bit.

    ``window`` is the steady-state averaging window in seconds, half open;
    ``None`` means the last 20% of the final constant-condition segment.
    Trials are processed in chunks of ``chunk`` so results do not depend on
    how the work is spread over processes.
    """

    scenario: GridScenario
    topology: NetworkTopology = field(default_factory=NetworkTopology.default)
    algorithms: tuple[str, ...] = KALMAN
    trials: int = 1
    rule: str = "uniform"
    f_init: float = 50.5
    window: tuple[float, float] | None = None
    hilbert_phase: str = "a"
    export_trials: int = 10
    chunk: int = 100
    label: str = ""

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trial count must be at least 1")
        if not self.algorithms:
            raise ConfigError("algorithm set is empty")
        unknown = [a for a in self.algorithms if a not in ALGORITHMS]
        if unknown:
            raise ConfigError(f"unknown algorithms {unknown}; choose from {', '.join(ALGORITHMS)}")
        if len(set(self.algorithms)) != len(self.algorithms):
            raise ConfigError("algorithms listed twice")
        if self.topology.node_count != self.scenario.node_count:
            raise ConfigError(f"topology has {self.topology.node_count} nodes, scenario {self.scenario.node_count}")
        if self.rule not in ("uniform", "metropolis"):
            raise ConfigError(f"unknown combination rule {self.rule!r}")
        if self.hilbert_phase not in PHASES:
            raise ConfigError("hilbert_phase must be one of a, b, c")
        if self.chunk < 1 or self.export_trials < 0:
            raise ConfigError("chunk must be positive and export_trials nonnegative")
        if self.window is not None:
            start, stop = self.window
            end = self.scenario.duration * self.scenario.T
            if not 0 <= start < stop <= end + 1e-12:
                raise ConfigError(f"window {self.window} not inside [0, {end}] s")

    @property
    def seed(self) -> int:
        return self.scenario.seed

    def with_overrides(self, *, seed=None, trials=None, algorithms=None, snr_db=None) -> "RunConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, scenario=replace(cfg.scenario, seed=int(seed)))
        if snr_db is not None:
            cfg = replace(cfg, scenario=cfg.scenario.with_noise(snr_db=float(snr_db)))
        if trials is not None:
            cfg = replace(cfg, trials=int(trials))
        if algorithms is not None:
            cfg = replace(cfg, algorithms=tuple(algorithms))
        return cfg

    def to_dict(self) -> dict[str, Any]:
        s = self.scenario
        return {
            "scenario": {
                "f_nominal": s.f_nominal, "T": s.T, "phase": s.phase, "duration": s.duration,
                "nodes": s.node_count, "rho": s.rho, "seed": s.seed,
                "noise": [[_num(n.snr_db), n.ratio, n.spike_prob, n.spike_amp] for n in s.noise],
                "events": [[e.time_s, e.amplitudes, e.deltas, e.frequency, e.label] for e in s.events],
            },
            "edges": [list(e) for e in self.topology.edges],
            "algorithms": list(self.algorithms),
            "trials": self.trials,
            "rule": self.rule,
            "f_init": self.f_init,
            "window": list(self.window) if self.window else None,
            "hilbert_phase": self.hilbert_phase,
            "chunk": self.chunk,
        }

    @property
    def config_hash(self) -> str:
        """Short SHA-256 over the canonical JSON form of the configuration."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _num(x: float):
    return repr(x) if math.isinf(x) else x


def _event(raw: Mapping[str, Any], index: int) -> GridEvent:
    allowed = {"time_s", "sag", "amplitudes", "deltas_deg", "frequency", "label"}
    extra = set(raw) - allowed
    if extra:
        raise ConfigError(f"event {index}: unknown keys {sorted(extra)}")
    if "time_s" not in raw:
        raise ConfigError(f"event {index}: time_s is required")
    amps = deltas = None
    label = raw.get("label", "")
    if "sag" in raw:
        if raw["sag"] not in SAGS:
            raise ConfigError(f"event {index}: sag must be one of {sorted(SAGS)}")
        preset = SAGS[raw["sag"]]
        amps, deltas = preset["amplitudes"], preset["deltas"]
        label = label or f"sag {raw['sag']}"
    if "amplitudes" in raw:
        amps = tuple(float(a) for a in raw["amplitudes"])
        if len(amps) != 3:
            raise ConfigError(f"event {index}: amplitudes needs three values")
    if "deltas_deg" in raw:
        d = [float(a) for a in raw["deltas_deg"]]
        if len(d) != 2:
            raise ConfigError(f"event {index}: deltas_deg needs two values")
        deltas = tuple(math.radians(a) for a in d)
    freq = raw.get("frequency")
    return GridEvent(float(raw["time_s"]), amps, deltas, None if freq is None else float(freq), label)


def _snr(value) -> float:
    if value is None:
        return math.inf
    if isinstance(value, str) and value.lower() in ("inf", "none", "noiseless"):
        return math.inf
    return float(value)


def scenario_from_mapping(raw: Mapping[str, Any]) -> GridScenario:
    fs = float(raw.get("sampling_rate_hz", 5000.0))
    if fs <= 0:
        raise ConfigError("sampling_rate_hz must be positive")
    T = 1.0 / fs
    nodes = int(raw.get("nodes", 5))
    steps = int(round(float(raw.get("duration_s", 0.5)) * fs))
    base = NodeNoise(_snr(raw.get("snr_db")), float(raw.get("noise_ratio", 1.0)))
    noisy = raw.get("noise_nodes")
    spiky = raw.get("spike_nodes")
    spike = dict(spike_prob=float(raw.get("spike_prob", 0.0)), spike_amp=float(raw.get("spike_amp", 0.2)))
    per_node = []
    for i in range(1, nodes + 1):
        nz = base if noisy is None or i in noisy else NodeNoise()
        if spike["spike_prob"] and (spiky is None or i in spiky):
            nz = replace(nz, **spike)
        per_node.append(nz)
    events = tuple(_event(e, k) for k, e in enumerate(raw.get("events") or ()))
    try:
        return GridScenario(
            f_nominal=float(raw.get("f_nominal", 50.0)), T=T, phase=float(raw.get("phase_rad", 0.0)),
            duration=steps, node_count=nodes, events=events, noise=tuple(per_node),
            rho=float(raw.get("rho", 0.0)), seed=int(raw.get("seed", 0)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _topology(value, nodes: int, base: Path | None) -> NetworkTopology:
    if value in (None, "default"):
        if nodes != 5:
            raise ConfigError("the default topology has 5 nodes; give a topology file")
        return NetworkTopology.default()
    if value == "fully_connected":
        return NetworkTopology.fully_connected(nodes)
    if value == "isolated":
        return NetworkTopology.isolated(nodes)
    path = Path(value)
    if base is not None and not path.is_absolute():
        path = base / path
    try:
        return load_topology(path, nodes)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read topology {path}: {exc}") from exc


def config_from_mapping(raw: Mapping[str, Any], base: Path | None = None) -> RunConfig:
    if not isinstance(raw, Mapping):
        raise ConfigError("configuration must be a mapping")
    extra = set(raw) - SCENARIO_KEYS - RUN_KEYS
    if extra:
        raise ConfigError(f"unknown configuration keys {sorted(extra)}")
    scen = scenario_from_mapping({**raw, "seed": raw.get("seed", 0)})
    algos = raw.get("algorithms", list(KALMAN))
    if isinstance(algos, str):
        algos = [a.strip() for a in algos.split(",") if a.strip()]
    window = raw.get("window_s")
    try:
        return RunConfig(
            scenario=scen,
            topology=_topology(raw.get("topology"), scen.node_count, base),
            algorithms=tuple(algos),
            trials=int(raw.get("trials", 1)),
            rule=str(raw.get("rule", "uniform")),
            f_init=float(raw.get("f_init", 50.5)),
            window=None if window is None else (float(window[0]), float(window[1])),
            hilbert_phase=str(raw.get("hilbert_phase", "a")),
            export_trials=int(raw.get("export_trials", 10)),
            chunk=int(raw.get("chunk", 100)),
            label=str(raw.get("label", "")),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path} is not valid YAML: {exc}") from exc
    return config_from_mapping(raw or {}, path.parent)

"""Synthetic three-phase voltages, Clarke transform and noncircularity diagnostics.

Voltages are in per unit, with a balanced nominal amplitude of 1 p.u. The
Clarke voltage of the balanced nominal system therefore has power 1.5, and
all SNR values are measured against that power.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Sequence

import numpy as np

from .network import NoiseCorrelationSpec

SQRT23 = math.sqrt(2.0 / 3.0)
CLARKE = SQRT23 * np.array([[1.0, -0.5, -0.5], [0.0, math.sqrt(3) / 2, -math.sqrt(3) / 2]])
NOMINAL_POWER = 1.5
NOISELESS_R = 1e-8

BALANCED = {"amplitudes": (1.0, 1.0, 1.0), "deltas": (0.0, 0.0)}
# 20% drop and 10 degree offsets on phases b and c
TYPE_C = {"amplitudes": (1.0, 0.8, 0.8), "deltas": (math.radians(10.0), math.radians(-10.0))}
# 20% drop on phase a, 10% drops and 5 degree offsets on b and c
TYPE_D = {"amplitudes": (0.8, 0.9, 0.9), "deltas": (math.radians(5.0), math.radians(-5.0))}
SAGS = {"balanced": BALANCED, "C": TYPE_C, "D": TYPE_D}


@dataclass(frozen=True)
class GridEvent:
    """Condition change from ``time_s`` onward; ``None`` fields keep their value."""

    time_s: float
    amplitudes: tuple[float, float, float] | None = None
    deltas: tuple[float, float] | None = None
    frequency: float | None = None
    label: str = ""

    @classmethod
    def sag(cls, time_s: float, kind: str) -> "GridEvent":
        preset = SAGS[kind]
        return cls(time_s, preset["amplitudes"], preset["deltas"], label=f"sag {kind}" if kind != "balanced" else "balanced")


@dataclass(frozen=True)
class NodeNoise:
    """Noise at one node.

    ``ratio`` is the alpha/beta power ratio of the Clarke-domain noise; 1
    means circular. ``spike_prob`` is the per-sample probability of a spike
    of ``spike_amp`` p.u. on one randomly chosen phase.
    """

    snr_db: float = math.inf
    ratio: float = 1.0
    spike_prob: float = 0.0
    spike_amp: float = 0.2

    @property
    def circular(self) -> bool:
        return self.ratio == 1.0

    @property
    def power(self) -> float:
        """Complex Clarke-domain noise power ``E|z|^2``."""
        return 0.0 if math.isinf(self.snr_db) else NOMINAL_POWER * 10.0 ** (-self.snr_db / 10.0)

    def clarke_std(self) -> tuple[float, float]:
        p = self.power
        return math.sqrt(p * self.ratio / (1 + self.ratio)), math.sqrt(p / (1 + self.ratio))


@dataclass(frozen=True)
class GridScenario:
    f_nominal: float = 50.0
    T: float = 2e-4
    phase: float = 0.0
    duration: int = 2500
    node_count: int = 5
    events: tuple[GridEvent, ...] = ()
    noise: tuple[NodeNoise, ...] = (NodeNoise(),)
    rho: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError("sampling interval must be positive")
        if self.duration < 1:
            raise ValueError("duration must be at least one sample")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError("cross-nodal correlation must lie in [0, 1)")
        if len(self.noise) not in (1, self.node_count):
            raise ValueError("give one noise spec or one per node")
        for nz in self.noise:
            if math.isnan(nz.snr_db) or nz.ratio <= 0 or not 0 <= nz.spike_prob <= 1:
                raise ValueError(f"invalid noise spec {nz}")
        end = self.duration * self.T
        events = tuple(sorted(self.events, key=lambda e: e.time_s))
        for ev in events:
            if not 0 <= ev.time_s < end:
                raise ValueError(f"event at {ev.time_s} s lies outside the {end} s scenario")
            if ev.amplitudes is not None and min(ev.amplitudes) < 0:
                raise ValueError("amplitudes must be nonnegative")
        object.__setattr__(self, "events", events)

    def node_noise(self, node: int) -> NodeNoise:
        return self.noise[0] if len(self.noise) == 1 else self.noise[node]

    def with_noise(self, **changes) -> "GridScenario":
        return replace(self, noise=tuple(replace(nz, **changes) for nz in self.noise))

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.duration) * self.T

    def event_index(self, ev: GridEvent) -> int:
        return int(round(ev.time_s / self.T))

    def segments(self) -> list[tuple[int, int]]:
        """Half-open sample ranges of constant conditions."""
        cuts = sorted({0, *(self.event_index(e) for e in self.events), self.duration})
        return [(a, b) for a, b in zip(cuts[:-1], cuts[1:]) if b > a]


@dataclass(frozen=True)
class Profile:
    amplitudes: np.ndarray  # (steps, 3)
    deltas: np.ndarray  # (steps, 2)
    frequency: np.ndarray  # (steps,)
    theta: np.ndarray  # (steps,)


def profile(s: GridScenario) -> Profile:
    """Per-sample amplitudes, phase distortions, frequency and accumulated phase."""
    n = s.duration
    amps = np.tile(np.array(BALANCED["amplitudes"]), (n, 1))
    deltas = np.zeros((n, 2))
    freq = np.full(n, float(s.f_nominal))
    for ev in s.events:
        k = s.event_index(ev)
        if ev.amplitudes is not None:
            amps[k:] = ev.amplitudes
        if ev.deltas is not None:
            deltas[k:] = ev.deltas
        if ev.frequency is not None:
            freq[k:] = ev.frequency
    # accumulated phase keeps the waveform continuous across frequency steps
    incr = 2 * np.pi * freq * s.T
    theta = s.phase + np.concatenate([[0.0], np.cumsum(incr[1:])])
    return Profile(amps, deltas, freq, theta)


def clean_phases(s: GridScenario) -> np.ndarray:
    """Noise-free phase voltages, shape ``(steps, 3)``."""
    p = profile(s)
    th = p.theta
    return np.stack([
        p.amplitudes[:, 0] * np.cos(th),
        p.amplitudes[:, 1] * np.cos(th - 2 * np.pi / 3 + p.deltas[:, 0]),
        p.amplitudes[:, 2] * np.cos(th + 2 * np.pi / 3 + p.deltas[:, 1]),
    ], axis=-1)


def clarke(sample) -> complex | np.ndarray:
    """Clarke voltage ``v_alpha + j v_beta`` of phase voltages on the last axis."""
    sample = np.asarray(sample, dtype=float)
    ab = sample @ CLARKE.T
    out = ab[..., 0] + 1j * ab[..., 1]
    return complex(out) if out.ndim == 0 else out


def inverse_clarke(v) -> np.ndarray:
    """Zero-sequence free phase voltages whose Clarke voltage is ``v``."""
    v = np.asarray(v, dtype=complex)
    return np.stack([v.real, v.imag], axis=-1) @ CLARKE


def ab_coefficients(Va: float, Vb: float, Vc: float, delta_b: float, delta_c: float) -> tuple[complex, complex]:
    """Coefficients of ``v_n = A exp(j theta_n) + B exp(-j theta_n)``."""
    if min(Va, Vb, Vc) < 0:
        raise ValueError("amplitudes must be nonnegative")
    k = math.sqrt(6) / 6
    A = k * (Va + Vb * np.exp(1j * delta_b) + Vc * np.exp(1j * delta_c))
    B = k * (Va + Vb * np.exp(-1j * (delta_b + 2 * np.pi / 3)) + Vc * np.exp(-1j * (delta_c - 2 * np.pi / 3)))
    return complex(A), complex(B)


# ---------------------------------------------------------------------------
# noise

def stream(seed: int, trial: int, source: int, kind: int) -> np.random.Generator:
    """Independent generator for one (trial, source, kind); source 0 is the shared component."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(trial, source, kind)))


def _gaussian(spec: NodeNoise, rng: np.random.Generator, steps: int) -> np.ndarray:
    if spec.power == 0.0:
        return np.zeros((steps, 3))
    if spec.circular:
        # i.i.d. phases: each Clarke component then has half the complex power
        return math.sqrt(spec.power / 2) * rng.standard_normal((steps, 3))
    sa, sb = spec.clarke_std()
    ab = rng.standard_normal((steps, 2)) * np.array([sa, sb])
    return ab @ CLARKE


def make_noise(spec: NodeNoise, private: np.random.Generator, shared: np.ndarray | None, steps: int,
               rho: float = 0.0, spikes: np.random.Generator | None = None) -> np.ndarray:
    """Per-phase noise of one node, shape ``(steps, 3)``.

    ``shared`` is a unit-power common component (same shape) mixed in with
    weight ``sqrt(rho)``; it is scaled to this node's noise statistics.
    """
    z = _gaussian(spec, private, steps)
    if rho and shared is not None and spec.power:
        z = math.sqrt(1 - rho) * z + math.sqrt(rho) * _scale_shared(spec, shared)
    if spec.spike_prob > 0 and spikes is not None:
        hit = spikes.random(steps) < spec.spike_prob
        phase = spikes.integers(0, 3, steps)
        sign = np.where(spikes.random(steps) < 0.5, -1.0, 1.0)
        idx = np.flatnonzero(hit)
        z[idx, phase[idx]] += sign[idx] * spec.spike_amp
    return z


def unit_shared(rng: np.random.Generator, steps: int) -> np.ndarray:
    return rng.standard_normal((steps, 3))


def _scale_shared(spec: NodeNoise, shared: np.ndarray) -> np.ndarray:
    if spec.circular:
        return math.sqrt(spec.power / 2) * shared
    sa, sb = spec.clarke_std()
    ab = (shared @ CLARKE.T) * np.array([sa, sb])
    return ab @ CLARKE


def noise_statistics(s: GridScenario, floor: float = NOISELESS_R) -> NoiseCorrelationSpec:
    """Clarke-domain noise (pseudo)covariances of every node, including cross terms.

    Spikes are not part of the model. A noiseless node gets ``floor`` as its
    observation noise variance so the filters stay well posed.
    """
    stds = [s.node_noise(i).clarke_std() for i in range(s.node_count)]
    R, U = [], []
    for sa, sb in stds:
        r = sa * sa + sb * sb
        R.append(np.array([[max(r, floor)]], dtype=complex))
        U.append(np.array([[sa * sa - sb * sb]], dtype=complex))
    cross_R, cross_U = {}, {}
    if s.rho:
        for a in range(s.node_count):
            for b in range(a + 1, s.node_count):
                (aa, ab_), (ba, bb) = stds[a], stds[b]
                cross_R[(a, b)] = np.array([[s.rho * (aa * ba + ab_ * bb)]], dtype=complex)
                cross_U[(a, b)] = np.array([[s.rho * (aa * ba - ab_ * bb)]], dtype=complex)
    return NoiseCorrelationSpec(tuple(R), tuple(U), cross_R, cross_U)


# ---------------------------------------------------------------------------
# signals

def simulate(s: GridScenario, trial: int = 0) -> np.ndarray:
    """Noisy phase voltages of every node, shape ``(nodes, steps, 3)``."""
    return _simulate_cached(s, trial).copy()


@lru_cache(maxsize=8)
def _simulate_cached(s: GridScenario, trial: int) -> np.ndarray:
    clean = clean_phases(s)
    shared = unit_shared(stream(s.seed, trial, 0, 0), s.duration) if s.rho else None
    out = np.empty((s.node_count,) + clean.shape)
    for i in range(s.node_count):
        z = make_noise(s.node_noise(i), stream(s.seed, trial, i + 1, 0), shared, s.duration, s.rho,
                       stream(s.seed, trial, i + 1, 1))
        out[i] = clean + z
    return out


def generate(s: GridScenario, node: int, n: int, trial: int = 0) -> tuple[float, float, float]:
    """Phase voltages ``(v_a, v_b, v_c)`` of ``node`` at sample ``n``."""
    if not 0 <= n < s.duration:
        raise IndexError(f"sample {n} outside scenario of {s.duration} samples")
    va, vb, vc = _simulate_cached(s, trial)[node, n]
    return float(va), float(vb), float(vc)


def clarke_voltages(s: GridScenario, trials: Sequence[int] = (0,)) -> np.ndarray:
    """Clarke voltages for a batch of trials, shape ``(nodes, len(trials), steps)``."""
    return np.stack([clarke(_simulate_cached(s, t)) for t in trials], axis=1)


def single_phase(s: GridScenario, trials: Sequence[int] = (0,), phase: int = 0) -> np.ndarray:
    """One phase voltage for a batch of trials, shape ``(nodes, len(trials), steps)``."""
    return np.stack([_simulate_cached(s, t)[..., phase] for t in trials], axis=1)


def noncircularity(v, theta=None) -> float:
    """Degree of noncircularity of a Clarke voltage sequence, in ``[0, 1]``.

    Without ``theta`` this is the sample circularity quotient
    ``|sum v^2| / sum |v|^2``. With the known phase ``theta`` the
    positive and negative sequence phasors ``(A, B)`` are fitted by least
    squares and ``2|A B| / (|A|^2 + |B|^2)`` is returned, which is exact on
    windows that do not span whole cycles.
    """
    v = np.asarray(v, dtype=complex)
    if v.size < 100:
        raise ValueError("need at least 100 samples")
    if theta is None:
        return float(np.abs(np.sum(v * v)) / np.sum(np.abs(v) ** 2))
    theta = np.asarray(theta, dtype=float)
    basis = np.stack([np.exp(1j * theta), np.exp(-1j * theta)], axis=-1)
    (A, B), *_ = np.linalg.lstsq(basis, v, rcond=None)
    denom = abs(A) ** 2 + abs(B) ** 2
    return 0.0 if denom == 0 else float(2 * abs(A * B) / denom)

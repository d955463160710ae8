"""Frequency tracking state spaces, frequency extraction and the Hilbert baseline.

Two nonlinear state spaces model the Clarke voltage ``v_n``:

* strictly linear, state ``(x, u)`` with ``x ~ exp(j w T)`` and
  ``u_n = u_{n-1} x`` (circular trajectories only);
* widely linear, state ``(h, g, u)`` with ``u_n = h u_{n-1} + g u*_{n-1}``,
  which also covers the elliptical trajectories of unbalanced grids.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import uniform_filter1d
from scipy.signal import hilbert

from .filters import DACEKF, DCEKF, DiffusionNetwork, NodeFilterState, run_filter
from .linalg import augment_vector
from .models import NonlinearModel
from .network import NetworkTopology, NoiseCorrelationSpec

G_EPS = 1e-12
HILBERT_WINDOW = 50

# state noise variances per state variable, (x, u) and (h, g, u) respectively
SL_STATE_NOISE = (3e-11, 1e-9)
WL_STATE_NOISE = (3e-11, 3e-11, 1e-9)


def _state_cov(q, dim):
    q = np.asarray(q, dtype=complex)
    if q.ndim == 0:
        return q * np.eye(dim)
    if q.ndim == 1:
        return np.diag(q)
    return q


def build_sl_model(noise: NoiseCorrelationSpec, q=SL_STATE_NOISE) -> NonlinearModel:
    """Strictly linear tracker: ``f[(x, u)] = (x, u x)``, ``h_i[(x, u)] = u``."""

    def f(s):
        x, u = s[..., 0], s[..., 1]
        return np.stack([x, u * x], axis=-1)

    def f_jac(s):
        x, u = s[..., 0], s[..., 1]
        one, zero = np.ones_like(x), np.zeros_like(x)
        F = np.stack([np.stack([one, zero], -1), np.stack([u, x], -1)], -2)
        return F, np.zeros_like(F)

    def h(i, s):
        return s[..., 1:2]

    def h_jac(i, s):
        H = np.zeros(s.shape[:-1] + (1, 2), dtype=complex)
        H[..., 0, 1] = 1.0
        return H, np.zeros_like(H)

    return NonlinearModel(2, f, f_jac, h, h_jac, _state_cov(q, 2), noise, name="StSp-SL")


def build_wl_model(noise: NoiseCorrelationSpec, q=WL_STATE_NOISE) -> NonlinearModel:
    """Widely linear tracker: ``f[(h, g, u)] = (h, g, u h + u* g)``, ``h_i = u``."""

    def f(s):
        hh, g, u = s[..., 0], s[..., 1], s[..., 2]
        return np.stack([hh, g, u * hh + np.conj(u) * g], axis=-1)

    def f_jac(s):
        hh, g, u = s[..., 0], s[..., 1], s[..., 2]
        one, zero = np.ones_like(hh), np.zeros_like(hh)
        F = np.stack([
            np.stack([one, zero, zero], -1),
            np.stack([zero, one, zero], -1),
            np.stack([u, np.conj(u), hh], -1),
        ], -2)
        A = np.zeros_like(F)
        A[..., 2, 2] = g
        return F, A

    def h(i, s):
        return s[..., 2:3]

    def h_jac(i, s):
        H = np.zeros(s.shape[:-1] + (1, 3), dtype=complex)
        H[..., 0, 2] = 1.0
        return H, np.zeros_like(H)

    return NonlinearModel(3, f, f_jac, h, h_jac, _state_cov(q, 3), noise, name="StSp-WL")


def freq_from_sl(x, T: float):
    """Frequency in Hz from the rotation state ``x ~ exp(j 2 pi f T)``."""
    if T <= 0:
        raise ValueError("sampling interval must be positive")
    return np.arcsin(np.clip(np.imag(x), -1.0, 1.0)) / (2 * np.pi * T)


def _wl_radicand(h, g):
    return np.imag(h) ** 2 - np.abs(g) ** 2


def freq_from_wl(h, g, T: float):
    """Frequency in Hz from the widely linear coefficients ``(h, g)``.

    Uses ``arcsin(Im(h + a g))`` with
    ``a = (-j Im h + j sqrt(Im^2 h - |g|^2)) / g`` on the principal square
    root branch. For ``|g| < 1e-12`` this reduces to the strictly linear
    formula applied to ``h``.
    """
    if T <= 0:
        raise ValueError("sampling interval must be positive")
    h = np.asarray(h, dtype=complex)
    g = np.asarray(g, dtype=complex)
    small = np.abs(g) < G_EPS
    g_safe = np.where(small, 1.0, g)
    a = (-1j * np.imag(h) + 1j * np.sqrt(_wl_radicand(h, g) + 0j)) / g_safe
    wl = np.arcsin(np.clip(np.imag(h + a * g_safe), -1.0, 1.0)) / (2 * np.pi * T)
    out = np.where(small, freq_from_sl(h, T), wl)
    return out if out.ndim else float(out)


def wl_branch_flag(h, g) -> np.ndarray:
    """True where the ``a_n`` square root argument is negative (transient branch)."""
    return (_wl_radicand(np.asarray(h), np.asarray(g)) < 0) & (np.abs(g) >= G_EPS)


def hilbert_frequency(v, T: float, window: int = HILBERT_WINDOW) -> np.ndarray:
    """Instantaneous frequency of a real signal via its analytic signal.

    The phase of the FFT-based analytic signal is unwrapped, differenced and
    smoothed by a centred moving average of ``window`` samples. Works along
    the last axis; the first difference is repeated so the output keeps the
    input length.
    """
    v = np.asarray(v, dtype=float)
    if v.shape[-1] < 64:
        raise ValueError("need at least 64 samples for a Hilbert frequency estimate")
    if T <= 0:
        raise ValueError("sampling interval must be positive")
    phase = np.unwrap(np.angle(hilbert(v, axis=-1)), axis=-1)
    inst = np.diff(phase, axis=-1) / (2 * np.pi * T)
    inst = np.concatenate([inst[..., :1], inst], axis=-1)
    if window > 1:
        inst = uniform_filter1d(inst, size=window, axis=-1, mode="nearest")
    return inst


# ---------------------------------------------------------------------------
# trackers

KALMAN_TRACKERS = {
    # name: (widely linear?, distributed?)
    "CEKF": (False, False),
    "ACEKF": (True, False),
    "D-CEKF": (False, True),
    "D-ACEKF": (True, True),
}


def initial_tracker_state(widely_linear: bool, f_init: float, T: float, first_obs: np.ndarray) -> np.ndarray:
    """Starting estimate ``(x, u)`` or ``(h, g, u)`` with rotation at ``f_init``."""
    first_obs = np.asarray(first_obs, dtype=complex)
    rot = np.full(first_obs.shape, np.exp(2j * np.pi * f_init * T))
    if widely_linear:
        return np.stack([rot, np.zeros_like(rot), first_obs], axis=-1)
    return np.stack([rot, first_obs], axis=-1)


def _run_tracker(v, algorithm, topology, noise, T, f_init, q, delta, rule, record_fn):
    try:
        widely, distributed = KALMAN_TRACKERS[algorithm]
    except KeyError:
        raise ValueError(f"{algorithm!r} is not a Kalman tracker") from None
    v = np.asarray(v, dtype=complex)
    N = topology.node_count
    if v.shape[0] != N:
        raise ValueError("first axis of the voltages must index nodes")
    net = DiffusionNetwork.build(topology if distributed else NetworkTopology.isolated(N), rule)
    if widely:
        model = build_wl_model(noise, WL_STATE_NOISE if q is None else q)
        flt = DACEKF(model, net)
    else:
        model = build_sl_model(noise, SL_STATE_NOISE if q is None else q)
        flt = DCEKF(model, net)

    states = []
    for i in range(N):
        x0 = initial_tracker_state(widely, f_init, T, v[i, ..., 0])
        if widely:
            x0 = augment_vector(x0)
        D = x0.shape[-1]
        M0 = np.broadcast_to(delta * np.eye(D, dtype=complex), x0.shape[:-1] + (D, D)).copy()
        states.append(NodeFilterState(x0, M0))

    obs = ([v[i, ..., n:n + 1] for i in range(N)] for n in range(1, v.shape[-1]))
    return run_filter(obs, flt, model, net, states, record=lambda x: record_fn(widely, x))


def track_states(v: np.ndarray, algorithm: str, topology: NetworkTopology, noise: NoiseCorrelationSpec,
                 T: float, f_init: float = 50.5, q=None, delta: float = 1.0, rule: str = "uniform") -> np.ndarray:
    """Like :func:`track_frequency` but returns the diffused base states.

    The result has shape ``(steps, nodes, ..., L)`` with ``(x, u)`` or
    ``(h, g, u)`` on the last axis.
    """
    L = {True: 3, False: 2}

    def keep(widely, x):
        return np.array(x[..., :L[widely]], copy=True)

    run = _run_tracker(v, algorithm, topology, noise, T, f_init, q, delta, rule, keep)
    return np.asarray(run.records)


def track_frequency(v: np.ndarray, algorithm: str, topology: NetworkTopology, noise: NoiseCorrelationSpec,
                    T: float, f_init: float = 50.5, q=None, delta: float = 1.0, rule: str = "uniform") -> np.ndarray:
    """Run one Kalman frequency tracker over Clarke voltages.

    ``v`` has shape ``(nodes, ..., steps)``. The first sample of every node
    seeds its voltage state; the remaining samples are filtered. Returns
    frequency estimates shaped ``(steps, nodes, ...)`` whose first row is the
    initial frequency. Uncooperative trackers (CEKF, ACEKF) run every node on
    its own observations.
    """

    def freq(widely, x):
        return freq_from_wl(x[..., 0], x[..., 1], T) if widely else freq_from_sl(x[..., 0], T)

    run = _run_tracker(v, algorithm, topology, noise, T, f_init, q, delta, rule, freq)
    return np.asarray(run.records, dtype=float)


def distributed_hilbert(freqs: np.ndarray, topology: NetworkTopology, rule: str = "uniform") -> np.ndarray:
    """Combine per-node Hilbert estimates (``(nodes, ..., steps)``) with diffusion weights."""
    from .network import combination_weights

    c = combination_weights(topology, rule)
    return np.einsum("ki,k...->i...", c, freqs)

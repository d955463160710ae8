"""Diffusion Kalman filters over a network of observing nodes.

Each algorithm runs one synchronous step for all nodes: every node forms a
local estimate from its neighbourhood's observations, then the local estimates
are combined with the diffusion weights. Only the estimate is diffused, the
``M`` matrices stay local.

States carry arbitrary leading batch axes, so a step can process many
independent Monte Carlo trials at once. Observations for node ``i`` then have
shape ``(..., K)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .linalg import (
    SingularMatrixError,
    augment_matrix,
    augment_vector,
    enforce_mirror,
    hermitian_transpose,
    hermitize,
    solve_hermitian,
)
from .models import LinearModel, NonlinearModel, augment_model
from .network import NetworkTopology, combination_weights, stack_neighborhood, stack_noise

logger = logging.getLogger(__name__)

ALGORITHMS = ("D-CKF", "D-ACKF", "D-ACKF-INFO", "D-CEKF", "D-ACEKF")


class FilterError(RuntimeError):
    def __init__(self, message: str, node: int | None = None, step: int | None = None):
        where = []
        if node is not None:
            where.append(f"node {node}")
        if step is not None:
            where.append(f"step {step}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.node = node
        self.step = step


@dataclass
class NodeFilterState:
    """Diffused estimate and filter matrix of one node between steps."""

    x: np.ndarray
    M: np.ndarray
    x_pred: np.ndarray | None = None
    M_pred: np.ndarray | None = None
    jitter: bool = False


@dataclass(frozen=True)
class DiffusionNetwork:
    topology: NetworkTopology
    weights: np.ndarray
    neighborhoods: tuple[tuple[int, ...], ...] = field(init=False)

    def __post_init__(self):
        n = self.topology.node_count
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (n, n):
            raise ValueError(f"weights must be {n}x{n}")
        if np.any(w < 0) or not np.allclose(w.sum(axis=0), 1.0, atol=1e-12):
            raise ValueError("combination weights must be nonnegative with unit column sums")
        hoods = tuple(tuple(h) for h in self.topology.neighborhoods())
        for i, hood in enumerate(hoods):
            outside = np.setdiff1d(np.arange(n), hood)
            if np.any(w[outside, i] != 0):
                raise ValueError(f"node {i} has weight on nodes outside its neighbourhood")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "neighborhoods", hoods)

    @classmethod
    def build(cls, topology: NetworkTopology, rule: str = "uniform") -> "DiffusionNetwork":
        return cls(topology, combination_weights(topology, rule))

    @property
    def node_count(self) -> int:
        return self.topology.node_count


def diffuse(local: Sequence[np.ndarray], net: DiffusionNetwork, augmented: bool = False) -> list[np.ndarray]:
    """Convex combination of neighbourhood estimates, ``x_i = sum_k c_{k,i} x_k``."""
    out = []
    for i, hood in enumerate(net.neighborhoods):
        acc = np.zeros_like(local[i])
        for k in hood:
            acc = acc + net.weights[k, i] * local[k]
        out.append(enforce_mirror(acc) if augmented else acc)
    return out


def _mv(a: np.ndarray, x: np.ndarray) -> np.ndarray:
    return (a @ x[..., None])[..., 0]


def _update(x_pred, M_pred, H, R, innovation, node, step):
    """Kalman measurement update with the gain formed by a Hermitian solve."""
    HM = H @ M_pred
    S = HM @ hermitian_transpose(H) + R
    try:
        sol = solve_hermitian(S, HM)
    except SingularMatrixError as exc:
        raise FilterError(f"innovation covariance solve failed: {exc}", node, step) from exc
    G = hermitian_transpose(sol.x)
    x = x_pred + _mv(G, innovation)
    eye = np.eye(M_pred.shape[-1])
    M = hermitize((eye - G @ H) @ M_pred)
    return x, M, sol.jitter_applied


def _predict_cov(F, M, Q):
    return F @ M @ hermitian_transpose(F) + Q


class _LinearFilter:
    augmented = False

    def __init__(self, model: LinearModel, net: DiffusionNetwork):
        model.validate()
        if model.node_count != net.node_count:
            raise ValueError("model and network disagree on the number of nodes")
        self.model = model
        self.net = net
        self._constant = not any(callable(v) for v in (model.F, model.A, model.Q, model.P, *model.H, *(model.B or ())))
        self._cache = self._prepare(0) if self._constant else None

    def _prepare(self, n):
        raise NotImplementedError

    def prepared(self, n):
        return self._cache if self._constant else self._prepare(n)

    def step(self, states: Sequence[NodeFilterState], y: Sequence[np.ndarray], n: int) -> list[NodeFilterState]:
        raise NotImplementedError


class DCKF(_LinearFilter):
    """Strictly linear diffusion Kalman filter on the stacked neighbourhood model."""

    def __init__(self, model, net):
        if not model.is_strictly_linear():
            raise ValueError("D-CKF needs a strictly linear model (A = 0, B = 0)")
        super().__init__(model, net)

    def _prepare(self, n):
        prev, cur = self.model.at(max(n - 1, 0)), self.model.at(n)
        hoods = [stack_neighborhood(cur.H, None, cur.noise, h) for h in self.net.neighborhoods]
        return prev.F, cur.Q, [(h.H, h.R) for h in hoods]

    def step(self, states, y, n):
        F, Q, hoods = self.prepared(n)
        local, out = [], []
        for i, (st, (H, R)) in enumerate(zip(states, hoods)):
            x_pred = _mv(F, st.x)
            M_pred = _predict_cov(F, st.M, Q)
            yn = np.concatenate([np.asarray(y[k], dtype=complex) for k in self.net.neighborhoods[i]], axis=-1)
            x, M, jit = _update(x_pred, M_pred, H, R, yn - _mv(H, x_pred), i, n)
            local.append(x)
            out.append(NodeFilterState(x, M, x_pred, M_pred, jit))
        for st, x in zip(out, diffuse(local, self.net)):
            st.x = x
        return out


class DACKF(_LinearFilter):
    """Augmented (widely linear) diffusion Kalman filter."""

    augmented = True

    def _prepare(self, n):
        prev, cur = self.model.at(max(n - 1, 0)), self.model.at(n)
        Fa = augment_model(prev).Fa
        Qa = augment_model(cur).Qa
        hoods = [stack_neighborhood(cur.H, cur.B, cur.noise, h) for h in self.net.neighborhoods]
        return Fa, Qa, [(h.Ha, h.Ra) for h in hoods]

    def step(self, states, y, n):
        Fa, Qa, hoods = self.prepared(n)
        local, out = [], []
        for i, (st, (Ha, Ra)) in enumerate(zip(states, hoods)):
            x_pred = _mv(Fa, st.x)
            M_pred = _predict_cov(Fa, st.M, Qa)
            ya = augment_vector(np.concatenate([np.asarray(y[k], dtype=complex) for k in self.net.neighborhoods[i]], axis=-1))
            x, M, jit = _update(x_pred, M_pred, Ha, Ra, ya - _mv(Ha, x_pred), i, n)
            local.append(x)
            out.append(NodeFilterState(x, M, x_pred, M_pred, jit))
        for st, x in zip(out, diffuse(local, self.net, augmented=True)):
            st.x = x
        return out


class DACKFInfo(_LinearFilter):
    """Information form of the augmented diffusion filter.

    Nodal information terms add up over the neighbourhood, which is only
    exact when observation noises at different nodes are uncorrelated; any
    cross-nodal correlation in the model is ignored here.
    """

    augmented = True

    def __init__(self, model, net):
        super().__init__(model, net)
        if model.noise.correlated:
            logger.warning("information form ignores cross-nodal noise correlation")

    def _prepare(self, n):
        prev, cur = self.model.at(max(n - 1, 0)), self.model.at(n)
        aug = augment_model(cur)
        weighted = []
        for k, (Ha, Ra) in enumerate(zip(aug.Ha, aug.Ra)):
            try:
                RiH = solve_hermitian(Ra, Ha).x
            except SingularMatrixError as exc:
                raise FilterError(f"nodal noise covariance is singular: {exc}", k, n) from exc
            # H^aH (R^a)^-1, shared by the S and r sums
            weighted.append((hermitian_transpose(RiH), Ha))
        hoods = []
        for hood in self.net.neighborhoods:
            S = sum(weighted[k][0] @ weighted[k][1] for k in hood)
            hoods.append((hood, S))
        return augment_model(prev).Fa, aug.Qa, weighted, hoods

    def step(self, states, y, n):
        Fa, Qa, weighted, hoods = self.prepared(n)
        local, out = [], []
        for i, (st, (hood, S)) in enumerate(zip(states, hoods)):
            x_pred = _mv(Fa, st.x)
            M_pred = _predict_cov(Fa, st.M, Qa)
            r = sum(_mv(weighted[k][0], augment_vector(np.asarray(y[k], dtype=complex))) for k in hood)
            eye = np.eye(M_pred.shape[-1])
            try:
                info = solve_hermitian(M_pred, np.broadcast_to(eye, M_pred.shape))
                post = solve_hermitian(hermitize(info.x) + S, np.broadcast_to(eye, M_pred.shape))
            except SingularMatrixError as exc:
                raise FilterError(f"information update failed: {exc}", i, n) from exc
            M = hermitize(post.x)
            x = x_pred + _mv(M, r - _mv(S, x_pred))
            local.append(x)
            out.append(NodeFilterState(x, M, x_pred, M_pred, info.jitter_applied or post.jitter_applied))
        for st, x in zip(out, diffuse(local, self.net, augmented=True)):
            st.x = x
        return out


class _ExtendedFilter:
    augmented = False

    def __init__(self, model: NonlinearModel, net: DiffusionNetwork):
        if model.node_count != net.node_count:
            raise ValueError("model and network disagree on the number of nodes")
        self.model = model
        self.net = net

    def _observe(self, hood, x_top):
        parts = [self.model.h_jacobian(k, x_top) for k in hood]
        H = np.concatenate([p[0] for p in parts], axis=-2)
        B = np.concatenate([p[1] for p in parts], axis=-2)
        h = np.concatenate([np.atleast_1d(self.model.h(k, x_top)) for k in hood], axis=-1)
        if not (np.all(np.isfinite(H)) and np.all(np.isfinite(B))):
            raise FilterError("non-finite observation Jacobian")
        return H, B, h


class DCEKF(_ExtendedFilter):
    """Strictly linear diffusion extended Kalman filter.

    Uses only the holomorphic Jacobians ``df/dx`` and ``dh/dx`` together with
    the noise covariances; pseudocovariances are not modelled.
    """

    def __init__(self, model, net):
        super().__init__(model, net)
        self._noise = [stack_noise(model.noise, hood)[0] for hood in net.neighborhoods]
        self._Q = np.asarray(model.Q, dtype=complex)

    def step(self, states, y, n):
        local, out = [], []
        for i, st in enumerate(states):
            hood = self.net.neighborhoods[i]
            F, _ = self.model.f_jacobian(st.x)
            if not np.all(np.isfinite(F)):
                raise FilterError("non-finite state Jacobian", i, n)
            x_pred = self.model.f(st.x)
            M_pred = _predict_cov(F, st.M, self._Q)
            H, _, h = self._observe(hood, x_pred)
            yn = np.concatenate([np.asarray(y[k], dtype=complex) for k in hood], axis=-1)
            x, M, jit = _update(x_pred, M_pred, H, self._noise[i], yn - h, i, n)
            local.append(x)
            out.append(NodeFilterState(x, M, x_pred, M_pred, jit))
        for st, x in zip(out, diffuse(local, self.net)):
            st.x = x
        return out


class DACEKF(_ExtendedFilter):
    """Augmented (widely linear) diffusion extended Kalman filter."""

    augmented = True

    def __init__(self, model, net):
        super().__init__(model, net)
        self._noise = [stack_noise(model.noise, hood)[2] for hood in net.neighborhoods]
        self._Qa = model.Qa

    def step(self, states, y, n):
        L = self.model.dim
        local, out = [], []
        for i, st in enumerate(states):
            hood = self.net.neighborhoods[i]
            top = st.x[..., :L]
            F, A = self.model.f_jacobian(top)
            if not (np.all(np.isfinite(F)) and np.all(np.isfinite(A))):
                raise FilterError("non-finite state Jacobian", i, n)
            Fa = augment_matrix(F, A)
            x_pred = augment_vector(self.model.f(top))
            M_pred = _predict_cov(Fa, st.M, self._Qa)
            H, B, h = self._observe(hood, x_pred[..., :L])
            Ha = augment_matrix(H, B)
            ya = augment_vector(np.concatenate([np.asarray(y[k], dtype=complex) for k in hood], axis=-1))
            x, M, jit = _update(x_pred, M_pred, Ha, self._noise[i], ya - augment_vector(h), i, n)
            local.append(x)
            out.append(NodeFilterState(x, M, x_pred, M_pred, jit))
        for st, x in zip(out, diffuse(local, self.net, augmented=True)):
            st.x = x
        return out


_FILTERS = {
    "D-CKF": DCKF,
    "D-ACKF": DACKF,
    "D-ACKF-INFO": DACKFInfo,
    "D-CEKF": DCEKF,
    "D-ACEKF": DACEKF,
}


def make_filter(algorithm: str, model, net: DiffusionNetwork):
    try:
        cls = _FILTERS[algorithm]
    except KeyError:
        raise ValueError(f"unknown algorithm {algorithm!r}; choose from {', '.join(_FILTERS)}") from None
    return cls(model, net)


def dckf_step(states, model: LinearModel, net: DiffusionNetwork, y, n: int = 1):
    return DCKF(model, net).step(states, y, n)


def dackf_step(states, model: LinearModel, net: DiffusionNetwork, y, n: int = 1):
    return DACKF(model, net).step(states, y, n)


def dackf_info_step(states, model: LinearModel, net: DiffusionNetwork, y, n: int = 1):
    return DACKFInfo(model, net).step(states, y, n)


def dcekf_step(states, model: NonlinearModel, net: DiffusionNetwork, y, n: int = 1):
    return DCEKF(model, net).step(states, y, n)


def dacekf_step(states, model: NonlinearModel, net: DiffusionNetwork, y, n: int = 1):
    return DACEKF(model, net).step(states, y, n)


def initial_states(x0: Sequence[np.ndarray] | np.ndarray, node_count: int, augmented: bool,
                   delta: float = 1.0) -> list[NodeFilterState]:
    """Per-node starting states with ``M_0 = delta * I``.

    ``x0`` is either one base-length estimate shared by all nodes or a
    sequence of per-node estimates (each possibly batched).
    """
    x0 = np.asarray(x0, dtype=complex)
    per_node = [x0[i] for i in range(node_count)] if x0.ndim >= 2 and x0.shape[0] == node_count else [x0] * node_count
    states = []
    for x in per_node:
        x = np.atleast_1d(x)
        if augmented:
            x = augment_vector(x)
        D = x.shape[-1]
        M = np.broadcast_to(delta * np.eye(D, dtype=complex), x.shape[:-1] + (D, D)).copy()
        states.append(NodeFilterState(x.copy(), M))
    return states


@dataclass
class FilterRun:
    """Recorded quantities of one filter run.

    ``records[n][i]`` is whatever ``record`` returned for node ``i`` after
    step ``n`` (index 0 holds the initial states). ``jitter`` counts steps in
    which a node's gain solve needed diagonal jitter.
    """

    records: list[list]
    states: list[NodeFilterState]
    jitter: np.ndarray

    def stacked(self) -> np.ndarray:
        return np.asarray([[np.asarray(r) for r in row] for row in self.records])


def run_filter(observations, algorithm: str | object, model, net: DiffusionNetwork,
               states: Sequence[NodeFilterState],
               record: Callable[[np.ndarray], object] | None = None, start: int = 1) -> FilterRun:
    """Apply one algorithm over a sequence of synchronous observation sets.

    ``observations[s][i]`` is node ``i``'s observation at step ``start + s``.
    ``record`` maps a node's diffused estimate to the value kept per step;
    by default a copy of the estimate itself.
    """
    flt = make_filter(algorithm, model, net) if isinstance(algorithm, str) else algorithm
    record = record or (lambda x: np.array(x, copy=True))
    states = list(states)
    records = [[record(st.x) for st in states]]
    jitter = np.zeros(net.node_count, dtype=int)
    for s, y in enumerate(observations):
        n = start + s
        try:
            states = flt.step(states, y, n)
        except FilterError as exc:
            if exc.step is None:
                raise FilterError(str(exc), exc.node, n) from exc
            raise
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise FilterError(f"filter step failed: {exc}", None, n) from exc
        jitter += [st.jitter for st in states]
        records.append([record(st.x) for st in states])
    return FilterRun(records, states, jitter)

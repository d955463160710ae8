"""Network topology, diffusion weights and neighbourhood stacking.

Nodes are indexed ``0..N-1`` in the API. Topology files use 1-based ids, the
convention operators use when labelling substations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .linalg import augment_covariance, augment_matrix, augment_vector, as_complex, hermitian_transpose, is_psd

DEFAULT_EDGES = ((0, 1), (0, 2), (1, 2), (2, 3), (3, 4))


@dataclass(frozen=True)
class NetworkTopology:
    node_count: int
    edges: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        if self.node_count < 1:
            raise ValueError("a network needs at least one node")
        cleaned = set()
        for a, b in self.edges:
            if a == b:
                raise ValueError(f"self-loop on node {a}")
            for v in (a, b):
                if not 0 <= v < self.node_count:
                    raise ValueError(f"edge ({a}, {b}) references unknown node {v}")
            cleaned.add((min(a, b), max(a, b)))
        object.__setattr__(self, "edges", tuple(sorted(cleaned)))

    @classmethod
    def fully_connected(cls, n: int) -> "NetworkTopology":
        return cls(n, tuple((a, b) for a in range(n) for b in range(a + 1, n)))

    @classmethod
    def isolated(cls, n: int) -> "NetworkTopology":
        """``n`` nodes without links: every filter runs uncooperatively."""
        return cls(n, ())

    @classmethod
    def default(cls) -> "NetworkTopology":
        return cls(5, DEFAULT_EDGES)

    def adjacency(self) -> np.ndarray:
        adj = np.zeros((self.node_count, self.node_count), dtype=bool)
        for a, b in self.edges:
            adj[a, b] = adj[b, a] = True
        return adj

    def neighborhood(self, i: int) -> list[int]:
        """Closed neighbourhood of ``i`` in ascending order (the stacking order)."""
        if not 0 <= i < self.node_count:
            raise KeyError(f"unknown node {i}")
        adj = self.adjacency()
        return sorted({i, *np.flatnonzero(adj[i]).tolist()})

    def neighborhoods(self) -> list[list[int]]:
        return [self.neighborhood(i) for i in range(self.node_count)]


def neighborhood(t: NetworkTopology, i: int) -> list[int]:
    return t.neighborhood(i)


def combination_weights(t: NetworkTopology, rule: str = "uniform") -> np.ndarray:
    """Column-stochastic weight matrix ``C`` with ``C[k, i] = c_{k,i}``.

    ``uniform`` gives every member of ``N_i`` the weight ``1/|N_i|``.
    ``metropolis`` uses ``1/max(|N_i|, |N_k|)`` for each neighbour, with the
    diagonal absorbing the remainder.
    """
    n = t.node_count
    hoods = t.neighborhoods()
    c = np.zeros((n, n))
    if rule == "uniform":
        for i, hood in enumerate(hoods):
            c[hood, i] = 1.0 / len(hood)
    elif rule == "metropolis":
        size = [len(h) for h in hoods]
        for i, hood in enumerate(hoods):
            for k in hood:
                if k != i:
                    c[k, i] = 1.0 / max(size[i], size[k])
            c[i, i] = 1.0 - c[:, i].sum()
    else:
        raise ValueError(f"unknown combination rule {rule!r}")
    return c


def load_topology(path: str | Path, node_count: int | None = None) -> NetworkTopology:
    """Read a plain text edge list (two 1-based ids per line, ``#`` comments)."""
    edges = []
    highest = 0
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected two node ids, got {raw!r}")
        try:
            a, b = (int(p) for p in parts)
        except ValueError:
            raise ValueError(f"{path}:{lineno}: node ids must be integers") from None
        if a < 1 or b < 1:
            raise ValueError(f"{path}:{lineno}: node ids are 1-based")
        edges.append((a - 1, b - 1))
        highest = max(highest, a, b)
    return NetworkTopology(node_count or highest, tuple(edges))


def dump_topology(t: NetworkTopology) -> str:
    lines = [f"# {t.node_count} nodes"]
    lines += [f"{a + 1} {b + 1}" for a, b in t.edges]
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class NoiseCorrelationSpec:
    """Second order statistics of the nodal observation noises.

    ``cross_R[(a, b)]`` is ``E{v_a v_b^H}`` and ``cross_U[(a, b)]`` is
    ``E{v_a v_b^T}``. Only one orientation of each pair needs to be given; the
    other is derived (``R_ba = R_ab^H``, ``U_ba = U_ab^T``).
    """

    R: tuple[np.ndarray, ...]
    U: tuple[np.ndarray, ...] | None = None
    cross_R: Mapping[tuple[int, int], np.ndarray] = field(default_factory=dict)
    cross_U: Mapping[tuple[int, int], np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        R = tuple(np.atleast_2d(as_complex(r)) for r in self.R)
        U = tuple(np.zeros_like(r) for r in R) if self.U is None else tuple(np.atleast_2d(as_complex(u)) for u in self.U)
        if len(U) != len(R):
            raise ValueError("one pseudocovariance block is needed per node")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "cross_R", {k: np.atleast_2d(as_complex(v)) for k, v in self.cross_R.items()})
        object.__setattr__(self, "cross_U", {k: np.atleast_2d(as_complex(v)) for k, v in self.cross_U.items()})

    @classmethod
    def uniform(cls, n: int, r, u=0.0, rho: float = 0.0, edges: Sequence[tuple[int, int]] | None = None):
        """Identical nodal statistics with cross-correlation ``rho`` between node pairs.

        ``edges`` limits the correlated pairs; by default every pair is correlated.
        """
        r = np.atleast_2d(as_complex(r))
        u = np.broadcast_to(np.atleast_2d(as_complex(u)), r.shape).copy()
        pairs = edges if edges is not None else [(a, b) for a in range(n) for b in range(a + 1, n)]
        cross_r = {p: rho * r for p in pairs} if rho else {}
        cross_u = {p: rho * u for p in pairs} if rho and np.any(u) else {}
        return cls(tuple(r for _ in range(n)), tuple(u for _ in range(n)), cross_r, cross_u)

    @property
    def node_count(self) -> int:
        return len(self.R)

    @property
    def correlated(self) -> bool:
        return any(np.any(v) for v in self.cross_R.values()) or any(np.any(v) for v in self.cross_U.values())

    def cov(self, a: int, b: int) -> np.ndarray:
        if a == b:
            return self.R[a]
        if (a, b) in self.cross_R:
            return self.cross_R[(a, b)]
        if (b, a) in self.cross_R:
            return hermitian_transpose(self.cross_R[(b, a)])
        return np.zeros((self.R[a].shape[0], self.R[b].shape[0]), dtype=complex)

    def pseudo(self, a: int, b: int) -> np.ndarray:
        if a == b:
            return self.U[a]
        if (a, b) in self.cross_U:
            return self.cross_U[(a, b)]
        if (b, a) in self.cross_U:
            return self.cross_U[(b, a)].T
        return np.zeros((self.R[a].shape[0], self.R[b].shape[0]), dtype=complex)

    def augmented(self, k: int) -> np.ndarray:
        return augment_covariance(self.R[k], self.U[k])


@dataclass(frozen=True)
class Neighbourhood:
    """Stacked observation model of one neighbourhood."""

    nodes: tuple[int, ...]
    H: np.ndarray
    B: np.ndarray
    R: np.ndarray
    U: np.ndarray
    Ha: np.ndarray
    Ra: np.ndarray


def stack_noise(noise: NoiseCorrelationSpec, nodes: Sequence[int]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Block covariance, pseudocovariance and augmented covariance for ``nodes``."""
    R = np.block([[noise.cov(a, b) for b in nodes] for a in nodes])
    U = np.block([[noise.pseudo(a, b) for b in nodes] for a in nodes])
    Ra = augment_covariance(R, U)
    if not is_psd(Ra):
        # locate the offending pair for the error message
        for ia, a in enumerate(nodes):
            for b in nodes[ia + 1:]:
                pair = [a, b]
                Rp = np.block([[noise.cov(x, y) for y in pair] for x in pair])
                Up = np.block([[noise.pseudo(x, y) for y in pair] for x in pair])
                if not is_psd(augment_covariance(Rp, Up)):
                    raise ValueError(f"augmented noise covariance not PSD for node pair ({a}, {b})")
        raise ValueError(f"augmented noise covariance of neighbourhood {list(nodes)} is not PSD")
    return R, U, Ra


def stack_neighborhood(H: Sequence[np.ndarray], B: Sequence[np.ndarray] | None, noise: NoiseCorrelationSpec,
                       nodes: Sequence[int]) -> Neighbourhood:
    """Row-stack the observation blocks of ``nodes`` and assemble their noise.

    ``H`` and ``B`` are indexed by node id; ``B`` may be ``None`` for strictly
    linear observations.
    """
    if not nodes:
        raise ValueError("a neighbourhood always contains its own node")
    Hs = [np.atleast_2d(as_complex(H[k])) for k in nodes]
    width = Hs[0].shape[1]
    if any(h.shape[1] != width for h in Hs):
        raise ValueError("observation matrices disagree on the state dimension")
    Bs = [np.zeros_like(h) for h in Hs] if B is None else [np.atleast_2d(as_complex(B[k])) for k in nodes]
    Hn = np.vstack(Hs)
    Bn = np.vstack(Bs)
    R, U, Ra = stack_noise(noise, nodes)
    return Neighbourhood(tuple(nodes), Hn, Bn, R, U, augment_matrix(Hn, Bn), Ra)


def stack_observations(y: Sequence[np.ndarray], nodes: Sequence[int] | None = None) -> np.ndarray:
    """Concatenate nodal observations along the last axis in neighbourhood order."""
    if nodes is None:
        nodes = range(len(y))
    parts = [np.atleast_1d(as_complex(y[k])) for k in nodes]
    if not parts:
        raise ValueError("cannot stack an empty neighbourhood")
    return np.concatenate(parts, axis=-1)


def stack_augmented_observations(y: Sequence[np.ndarray], nodes: Sequence[int] | None = None) -> np.ndarray:
    return augment_vector(stack_observations(y, nodes))

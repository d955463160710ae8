"""Strictly linear, widely linear and nonlinear state-space models.

Complex derivatives follow the Wirtinger convention: ``d/dx`` holds ``x*``
fixed and ``d/dx*`` holds ``x`` fixed, so a widely linear map ``F x + A x*``
has Jacobians ``(F, A)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .linalg import as_complex, augment_covariance, augment_matrix, is_hermitian, is_psd, is_symmetric
from .network import NoiseCorrelationSpec

MatrixOrFn = "np.ndarray | Callable[[int], np.ndarray]"


class LinearizationError(ValueError):
    pass


def _at(value, n):
    return value(n) if callable(value) else value


@dataclass(frozen=True)
class LinearModel:
    """Widely linear state space ``x_n = F x_{n-1} + A x*_{n-1} + w``,
    ``y_{i,n} = H_i x_n + B_i x*_n + v_i``.

    Any matrix field may instead be a callable of the step index for
    time-varying models; call :meth:`at` to freeze one step.
    ``A`` and ``B`` default to zero, which makes the model strictly linear.
    """

    F: MatrixOrFn
    H: Sequence
    Q: MatrixOrFn
    noise: NoiseCorrelationSpec
    A: MatrixOrFn | None = None
    B: Sequence | None = None
    P: MatrixOrFn | None = None

    def at(self, n: int) -> "LinearModel":
        F = np.atleast_2d(as_complex(_at(self.F, n)))
        L = F.shape[0]
        zeros = np.zeros((L, L), dtype=complex)
        A = zeros if self.A is None else np.atleast_2d(as_complex(_at(self.A, n)))
        H = tuple(np.atleast_2d(as_complex(_at(h, n))) for h in self.H)
        B = tuple(np.zeros_like(h) for h in H) if self.B is None else tuple(
            np.atleast_2d(as_complex(_at(b, n))) for b in self.B)
        Q = np.atleast_2d(as_complex(_at(self.Q, n)))
        P = zeros if self.P is None else np.atleast_2d(as_complex(_at(self.P, n)))
        return LinearModel(F, H, Q, self.noise, A, B, P)

    @property
    def node_count(self) -> int:
        return len(self.H)

    def is_strictly_linear(self, n: int = 0) -> bool:
        m = self.at(n)
        return not np.any(m.A) and not any(np.any(b) for b in m.B)

    def validate(self, n: int = 0) -> None:
        m = self.at(n)
        L = m.F.shape[0]
        if m.F.shape != (L, L) or m.A.shape != (L, L):
            raise ValueError("state matrices must be square and equal in size")
        if len(m.H) != m.noise.node_count:
            raise ValueError("one noise block is needed per observing node")
        for h, b in zip(m.H, m.B):
            if h.shape[1] != L or b.shape != h.shape:
                raise ValueError("observation blocks disagree with the state dimension")
        if not is_hermitian(m.Q) or not is_symmetric(m.P):
            raise ValueError("Q must be Hermitian and P symmetric")


@dataclass(frozen=True)
class AugmentedModel:
    Fa: np.ndarray
    Ha: tuple[np.ndarray, ...]
    Qa: np.ndarray
    Ra: tuple[np.ndarray, ...]


def augment_model(m: LinearModel, n: int = 0) -> AugmentedModel:
    m = m.at(n)
    Qa = augment_covariance(m.Q, m.P)
    if not is_psd(Qa):
        raise ValueError("augmented state noise covariance is not PSD")
    Ra = []
    for k in range(m.noise.node_count):
        rk = m.noise.augmented(k)
        if not is_psd(rk):
            raise ValueError(f"augmented observation noise covariance of node {k} is not PSD")
        Ra.append(rk)
    return AugmentedModel(
        augment_matrix(m.F, m.A),
        tuple(augment_matrix(h, b) for h, b in zip(m.H, m.B)),
        Qa,
        tuple(Ra),
    )


@dataclass(frozen=True)
class NonlinearModel:
    """``x_n = f[x_{n-1}] + w_n``, ``y_{i,n} = h_i[x_n] + v_{i,n}``.

    ``f`` and ``h`` act on the last axis of ``(..., L)`` arrays. The Jacobian
    callables return the Wirtinger pair ``(d/dx, d/dx*)`` with shape
    ``(..., rows, L)``.
    """

    dim: int
    f: Callable[[np.ndarray], np.ndarray]
    f_jacobian: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]
    h: Callable[[int, np.ndarray], np.ndarray]
    h_jacobian: Callable[[int, np.ndarray], tuple[np.ndarray, np.ndarray]]
    Q: np.ndarray
    noise: NoiseCorrelationSpec
    P: np.ndarray | None = None
    name: str = "nonlinear"

    @property
    def node_count(self) -> int:
        return self.noise.node_count

    @property
    def pseudo(self) -> np.ndarray:
        return np.zeros((self.dim, self.dim), dtype=complex) if self.P is None else as_complex(self.P)

    @property
    def Qa(self) -> np.ndarray:
        return augment_covariance(as_complex(self.Q), self.pseudo)

    @classmethod
    def from_linear(cls, m: LinearModel) -> "NonlinearModel":
        """Wrap a constant linear model so the EKF machinery can run it."""
        m = m.at(0)
        L = m.F.shape[0]

        def f(x):
            return x @ m.F.T + np.conj(x) @ m.A.T

        def f_jac(x):
            shape = x.shape[:-1] + (L, L)
            return np.broadcast_to(m.F, shape), np.broadcast_to(m.A, shape)

        def h(i, x):
            return x @ m.H[i].T + np.conj(x) @ m.B[i].T

        def h_jac(i, x):
            shape = x.shape[:-1] + m.H[i].shape
            return np.broadcast_to(m.H[i], shape), np.broadcast_to(m.B[i], shape)

        return cls(L, f, f_jac, h, h_jac, m.Q, m.noise, m.P, name="linear")


class Linearization(NamedTuple):
    Fa: np.ndarray
    Ha: np.ndarray
    r: np.ndarray
    z: np.ndarray


def _require_finite(value: np.ndarray, label: str) -> None:
    if not np.all(np.isfinite(value)):
        raise LinearizationError(f"non-finite entries in {label}")


def linearize(m: NonlinearModel, x_prev: np.ndarray, x_pred: np.ndarray, node: int) -> Linearization:
    """First order expansion of ``f`` about ``x_prev`` and of ``h_node`` about ``x_pred``.

    Returns the augmented Jacobians and the deterministic offsets
    ``r = f[x] - F x - A x*`` and ``z = h[x] - H x - B x*``.
    """
    x_prev = as_complex(x_prev)
    x_pred = as_complex(x_pred)
    if not (np.all(np.isfinite(x_prev)) and np.all(np.isfinite(x_pred))):
        raise LinearizationError("state estimate is not finite")
    F, A = m.f_jacobian(x_prev)
    _require_finite(F, "df/dx")
    _require_finite(A, "df/dx*")
    H, B = m.h_jacobian(node, x_pred)
    _require_finite(H, f"dh_{node}/dx")
    _require_finite(B, f"dh_{node}/dx*")
    r = m.f(x_prev) - np.einsum("...ij,...j->...i", F, x_prev) - np.einsum("...ij,...j->...i", A, np.conj(x_prev))
    z = m.h(node, x_pred) - np.einsum("...ij,...j->...i", H, x_pred) - np.einsum("...ij,...j->...i", B, np.conj(x_pred))
    return Linearization(augment_matrix(F, A), augment_matrix(H, B), r, z)


def numerical_wirtinger(fn: Callable[[np.ndarray], np.ndarray], x: np.ndarray, step: float = 1e-6):
    """Central finite difference Wirtinger Jacobians of ``fn`` at a single point ``x``."""
    x = as_complex(x)
    L = x.shape[-1]
    out = np.atleast_1d(fn(x))
    J = np.zeros((out.shape[-1], L), dtype=complex)
    Jc = np.zeros_like(J)
    for k in range(L):
        e = np.zeros(L, dtype=complex)
        e[k] = step
        d_re = (np.atleast_1d(fn(x + e)) - np.atleast_1d(fn(x - e))) / (2 * step)
        d_im = (np.atleast_1d(fn(x + 1j * e)) - np.atleast_1d(fn(x - 1j * e))) / (2 * step)
        J[:, k] = 0.5 * (d_re - 1j * d_im)
        Jc[:, k] = 0.5 * (d_re + 1j * d_im)
    return J, Jc


def jacobian_check(m: NonlinearModel, x: np.ndarray, step: float = 1e-6, relative: bool = False) -> float:
    """Largest deviation between analytic and finite difference Jacobians.

    Covers ``f`` and every nodal ``h_i`` at the single state ``x``. With
    ``relative`` the deviation is scaled by ``max(1, |J|)``.
    """
    x = as_complex(x)
    pairs = [(m.f, m.f_jacobian)]
    pairs += [(lambda v, i=i: m.h(i, v), lambda v, i=i: m.h_jacobian(i, v)) for i in range(m.node_count)]
    worst = 0.0
    for fn, jac in pairs:
        J_fd, Jc_fd = numerical_wirtinger(fn, x, step)
        J, Jc = (np.atleast_2d(np.asarray(a)) for a in jac(x))
        for an, fd in ((J, J_fd), (Jc, Jc_fd)):
            dev = float(np.max(np.abs(an - fd)))
            if relative:
                dev /= max(1.0, float(np.max(np.abs(fd))))
            worst = max(worst, dev)
    return worst

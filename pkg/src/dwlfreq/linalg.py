"""Dense complex linear algebra shared by the filters.

All functions accept arrays with arbitrary leading batch dimensions, so
``(..., L)`` vectors and ``(..., L, L)`` matrices. The batch axes are used to
run many Monte Carlo trials through one filter step at once.
"""

from __future__ import annotations

import logging
from typing import NamedTuple

import numpy as np

logger = logging.getLogger(__name__)

HERMITIAN_RTOL = 1e-9
JITTER_SCALE = 1e-12


class SingularMatrixError(np.linalg.LinAlgError):
    """Raised when a Hermitian system cannot be solved even after jitter."""

    def __init__(self, message: str, condition: float):
        super().__init__(f"{message} (condition estimate {condition:.3e})")
        self.condition = condition


class HermitianSolution(NamedTuple):
    x: np.ndarray
    jitter_applied: bool


def as_complex(a) -> np.ndarray:
    return np.asarray(a, dtype=np.complex128)


def hermitian_transpose(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim < 2:
        raise ValueError(f"expected a matrix, got shape {a.shape}")
    return np.conj(np.swapaxes(a, -1, -2))


def conjugate(a: np.ndarray) -> np.ndarray:
    return np.conj(a)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ValueError(f"inner dimensions differ: {a.shape} @ {b.shape}")
    return a @ b


def is_hermitian(a: np.ndarray, rtol: float = HERMITIAN_RTOL) -> bool:
    a = np.asarray(a)
    if a.shape[-1] != a.shape[-2]:
        return False
    scale = np.max(np.abs(a)) if a.size else 0.0
    return bool(np.max(np.abs(a - hermitian_transpose(a)), initial=0.0) <= rtol * scale)


def is_symmetric(a: np.ndarray, rtol: float = HERMITIAN_RTOL) -> bool:
    a = np.asarray(a)
    if a.shape[-1] != a.shape[-2]:
        return False
    scale = np.max(np.abs(a)) if a.size else 0.0
    return bool(np.max(np.abs(a - np.swapaxes(a, -1, -2)), initial=0.0) <= rtol * scale)


def is_psd(a: np.ndarray, rtol: float = 1e-9) -> bool:
    """Hermitian positive semidefinite up to ``rtol`` relative to the largest eigenvalue."""
    a = as_complex(a)
    if not is_hermitian(a):
        return False
    w = np.linalg.eigvalsh(0.5 * (a + hermitian_transpose(a)))
    scale = max(float(np.max(np.abs(w), initial=0.0)), 1.0)
    return bool(np.min(w, initial=0.0) >= -rtol * scale)


def hermitize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + hermitian_transpose(a))


def augment_vector(x: np.ndarray) -> np.ndarray:
    """Stack ``x`` on top of its conjugate along the last axis."""
    x = as_complex(x)
    if x.ndim == 0:
        x = x.reshape(1)
    if not np.all(np.isfinite(x)):
        raise ValueError("cannot augment a vector with non-finite entries")
    return np.concatenate([x, np.conj(x)], axis=-1)


def split_augmented(xa: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    half = xa.shape[-1] // 2
    return xa[..., :half], xa[..., half:]


def mirror_error(xa: np.ndarray) -> float:
    """Largest deviation of the bottom half from the conjugate of the top half."""
    top, bottom = split_augmented(np.asarray(xa))
    return float(np.max(np.abs(bottom - np.conj(top)), initial=0.0))


def enforce_mirror(xa: np.ndarray) -> np.ndarray:
    """Project an augmented vector back onto the ``[x; conj(x)]`` subspace."""
    top, bottom = split_augmented(xa)
    base = 0.5 * (top + np.conj(bottom))
    return np.concatenate([base, np.conj(base)], axis=-1)


def augment_matrix(f: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Widely linear block form ``[[F, A], [conj(A), conj(F)]]``."""
    f = as_complex(f)
    a = as_complex(a)
    if f.shape != a.shape:
        raise ValueError(f"block shapes differ: {f.shape} vs {a.shape}")
    top = np.concatenate([f, a], axis=-1)
    bottom = np.concatenate([np.conj(a), np.conj(f)], axis=-1)
    return np.concatenate([top, bottom], axis=-2)


def augment_covariance(r: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Augmented covariance ``[[R, P], [conj(P), conj(R)]]``.

    ``R`` must be Hermitian and ``P`` symmetric (complex symmetric, not
    Hermitian), otherwise the result would not be a valid covariance.
    """
    r = as_complex(r)
    p = as_complex(p)
    if r.ndim < 2 or r.shape[-1] != r.shape[-2]:
        raise ValueError(f"covariance must be square, got {r.shape}")
    if r.shape != p.shape:
        raise ValueError(f"covariance {r.shape} and pseudocovariance {p.shape} differ in shape")
    if not is_hermitian(r):
        raise ValueError("covariance block is not Hermitian")
    if not is_symmetric(p):
        raise ValueError("pseudocovariance block is not symmetric")
    return augment_matrix(r, p)


def _trace_scale(a: np.ndarray) -> np.ndarray:
    n = a.shape[-1]
    return np.abs(np.trace(a, axis1=-2, axis2=-1)).real / n


def solve_hermitian(a: np.ndarray, b: np.ndarray) -> HermitianSolution:
    """Solve ``A X = B`` for Hermitian ``A``.

    A Cholesky factorisation is attempted first as a cheap definiteness test.
    When it fails, a diagonal jitter of ``1e-12 * trace(A) / L`` is added and
    the factorisation retried. Hermitian but indefinite systems that are still
    well conditioned fall through to an LU solve of the original matrix.
    """
    a = as_complex(a)
    b = as_complex(b)
    if a.shape[-1] != a.shape[-2]:
        raise ValueError(f"matrix must be square, got {a.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"right-hand side {b.shape} incompatible with {a.shape}")
    try:
        np.linalg.cholesky(a)
        return HermitianSolution(np.linalg.solve(a, b), False)
    except np.linalg.LinAlgError:
        pass

    eye = np.eye(a.shape[-1])
    jittered = a + (JITTER_SCALE * _trace_scale(a))[..., None, None] * eye
    try:
        np.linalg.cholesky(jittered)
        logger.debug("applied diagonal jitter to near-singular Hermitian solve")
        return HermitianSolution(np.linalg.solve(jittered, b), True)
    except np.linalg.LinAlgError:
        pass

    cond = float(np.max(np.linalg.cond(a)))
    if not np.isfinite(cond) or cond > 1e14:
        raise SingularMatrixError("Hermitian system is singular", cond)
    return HermitianSolution(np.linalg.solve(a, b), False)

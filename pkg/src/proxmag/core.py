"""Complex image containers, magnitude/phase decomposition, and linear operators.

Images are stored channel-major, row-major within a channel, as complex128
arrays of shape (channels, height, width).  The flattening order implied by
``numpy``'s C layout is part of every operator contract in this package.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np

__all__ = [
    "ComplexImage",
    "MagPhase",
    "LinearOperator",
    "CallableOperator",
    "MatrixOperator",
    "IdentityOperator",
    "ConvergenceError",
    "decompose",
    "recompose",
    "operator_norm_estimate",
    "adjoint_check",
    "AdjointReport",
]


class ConvergenceError(RuntimeError):
    """An iterative routine exhausted its budget without meeting tolerance.

    Carries whatever diagnostic object the routine produced (a report or a
    trace) as the ``detail`` attribute.
    """

    def __init__(self, message, detail=None):
        super().__init__(message)
        self.detail = detail


def _as_image_array(data) -> np.ndarray:
    """Coerce input to a private C-ordered (K, H, W) complex128 array."""
    arr = np.array(data, dtype=np.complex128, order="C", copy=True)
    if arr.ndim == 1:
        arr = arr.reshape(1, 1, -1)
    elif arr.ndim == 2:
        arr = arr.reshape((1,) + arr.shape)
    elif arr.ndim != 3:
        raise ValueError(f"expected 1-3 dimensional data, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class ComplexImage:
    """A stack of complex-valued image channels, shape (K, H, W).

    The reconstruction variable of every solver in this package.  Samples are
    dimensionless reflectivities in double precision.  Instances are immutable;
    all operations on them are pure functions.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = _as_image_array(self.data)
        if not (np.isfinite(arr.real).all() and np.isfinite(arr.imag).all()):
            raise ValueError("complex image contains non-finite samples")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.data.shape

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    def magnitude(self) -> np.ndarray:
        return np.abs(self.data)


@dataclass(frozen=True)
class MagPhase:
    """Magnitude/phase split of a complex image.

    ``magnitude`` is elementwise nonnegative, ``phase`` is unit-modulus complex
    of the same shape.  The convention ``phase = 1`` is used where the sample
    is exactly zero, which makes :func:`decompose` total and
    :func:`recompose` exact.
    """

    magnitude: np.ndarray
    phase: np.ndarray

    def __post_init__(self):
        mag = np.asarray(self.magnitude, dtype=np.float64)
        phi = np.asarray(self.phase, dtype=np.complex128)
        if mag.shape != phi.shape:
            raise ValueError(
                f"magnitude shape {mag.shape} != phase shape {phi.shape}"
            )
        if np.any(mag < 0):
            raise ValueError("magnitude must be nonnegative")
        if np.max(np.abs(np.abs(phi) - 1.0), initial=0.0) > 1e-12:
            raise ValueError("phase entries must have unit modulus")
        object.__setattr__(self, "magnitude", mag)
        object.__setattr__(self, "phase", phi)


def decompose(z: ComplexImage) -> MagPhase:
    """Split ``z`` into nonnegative magnitudes and unit-modulus phases.

    Where a sample is exactly zero the phase is defined as 1, so that
    ``recompose(decompose(z)) == z`` up to rounding.
    """
    data = z.data
    mag = np.abs(data)
    phase = np.ones_like(data)
    nz = mag > 0
    phase[nz] = data[nz] / mag[nz]
    return MagPhase(mag, phase)


def recompose(m: MagPhase) -> ComplexImage:
    """Rebuild the complex image ``magnitude * phase`` elementwise."""
    return ComplexImage(m.magnitude * m.phase)


def split_phase(data: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Array-level magnitude/phase split with the zero-phase-is-one convention."""
    mag = np.abs(data)
    phase = np.ones_like(data, dtype=np.complex128)
    nz = mag > 0
    phase[nz] = data[nz] / mag[nz]
    return mag, phase


# ---------------------------------------------------------------------------
# Linear operators
# ---------------------------------------------------------------------------


class LinearOperator:
    """A forward/adjoint pair between fixed-shape complex arrays.

    Subclasses implement :meth:`apply` and :meth:`adjoint` and must satisfy
    the dot-product identity ``<A x, y> == <x, A^H y>`` to near machine
    precision; :func:`adjoint_check` verifies this.  A spectral-norm estimate
    is computed lazily by power iteration and cached.
    """

    def __init__(self, domain_shape, range_shape):
        self.domain_shape = tuple(domain_shape)
        self.range_shape = tuple(range_shape)
        self._norm_estimate: Optional[float] = None

    def apply(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.apply(x)

    @property
    def norm_estimate(self) -> float:
        if self._norm_estimate is None:
            self._norm_estimate = operator_norm_estimate(self)
        return self._norm_estimate


class CallableOperator(LinearOperator):
    """Wrap a pair of closures as a :class:`LinearOperator`."""

    def __init__(self, domain_shape, range_shape, apply_fn, adjoint_fn):
        super().__init__(domain_shape, range_shape)
        self._apply = apply_fn
        self._adjoint = adjoint_fn

    def apply(self, x):
        return self._apply(x)

    def adjoint(self, y):
        return self._adjoint(y)


class MatrixOperator(LinearOperator):
    """Dense-matrix operator acting on flat vectors."""

    def __init__(self, matrix: np.ndarray):
        matrix = np.asarray(matrix)
        super().__init__((matrix.shape[1],), (matrix.shape[0],))
        self.matrix = matrix

    def apply(self, x):
        return self.matrix @ x

    def adjoint(self, y):
        return self.matrix.conj().T @ y


class IdentityOperator(LinearOperator):
    def __init__(self, shape):
        super().__init__(shape, shape)
        self._norm_estimate = 1.0

    def apply(self, x):
        return np.asarray(x).copy()

    def adjoint(self, y):
        return np.asarray(y).copy()


def _vdot(a: np.ndarray, b: np.ndarray) -> complex:
    """Conjugate-linear-in-first-argument inner product over flattened arrays."""
    return complex(np.vdot(a, b))


def operator_norm_estimate(a: LinearOperator, iters: int = 50, seed: int = 0) -> float:
    """Power-iteration estimate of the spectral norm ``||A||_2``.

    Iterates ``v <- A^H A v`` from a seeded random complex start, returning
    ``||A v|| / ||v||`` after the final step.  Deterministic given ``seed``;
    returns 0 for the zero operator.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(a.domain_shape) + 1j * rng.standard_normal(a.domain_shape)
    v /= np.linalg.norm(v.ravel())
    est = 0.0
    for _ in range(iters):
        w = a.apply(v)
        nw = np.linalg.norm(np.asarray(w).ravel())
        if nw == 0.0:
            return 0.0
        v = np.asarray(a.adjoint(w))
        nv = np.linalg.norm(v.ravel())
        if nv == 0.0:
            return 0.0
        est = nv  # ||A^H A v|| for unit v approaches ||A||^2
        v = v / nv
    return float(np.sqrt(est))


@dataclass(frozen=True)
class AdjointReport:
    passed: bool
    worst_error: float
    trials: int
    tol: float


def adjoint_check(
    a: LinearOperator, trials: int = 10, tol: float = 1e-10, seed: int = 0
) -> AdjointReport:
    """Dot-product test of the forward/adjoint pair.

    Draws random complex ``x`` and ``y`` and checks the relative defect
    ``|<Ax, y> - <x, A^H y>| / (||Ax|| ||y|| + eps) <= tol``.  Reports the
    worst trial; never raises.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        x = rng.standard_normal(a.domain_shape) + 1j * rng.standard_normal(
            a.domain_shape
        )
        y = rng.standard_normal(a.range_shape) + 1j * rng.standard_normal(
            a.range_shape
        )
        ax = np.asarray(a.apply(x))
        aty = np.asarray(a.adjoint(y))
        lhs = _vdot(ax, y)
        rhs = _vdot(x, aty)
        denom = np.linalg.norm(ax.ravel()) * np.linalg.norm(y.ravel()) + 1e-300
        err = abs(lhs - rhs) / denom
        worst = max(worst, err)
    return AdjointReport(passed=worst <= tol, worst_error=worst, trials=trials, tol=tol)

"""Proximal maps lifted from magnitudes to complex images.

The central operation is :func:`magnitude_lift`: given a regularizer ``H`` on
nonnegative real arrays, it evaluates the proximal map of
``G(z) = step * H(|z|)`` on complex images.  When ``prox_H`` maps the
nonnegative orthant into itself this is a single prox call followed by a
phase reattachment (fast path).  Otherwise a Douglas-Rachford loop solves the
orthant-bounded prox, initialized so it costs nothing whenever the fast path
would have applied.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Tuple, Union

import numpy as np

from .core import ComplexImage, ConvergenceError, split_phase

__all__ = [
    "ProxFunction",
    "ZeroFunction",
    "MagLiftReport",
    "magnitude_lift",
    "bounded_prox",
    "project_nonneg",
    "prox_f_shifted",
    "dr_update",
    "brute_force_prox_oracle",
    "lift_objective",
]


class ProxFunction:
    """A regularizer contract: extended-real evaluation plus a proximal map.

    ``prox(x, step)`` returns the minimizer of
    ``step * eval(y) + 0.5 * ||y - x||^2``; step-size scaling is always passed
    explicitly.  ``eval`` may return ``inf``.  Implementations must be pure
    and reentrant.  Nonconvex members (the multi-bang penalty) set
    ``convex = False``; oracle comparisons for those check stationarity rather
    than global optimality.
    """

    #: domain shape of the nonnegative real argument
    shape: Tuple[int, ...] = ()
    convex: bool = True

    def eval(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def prox(self, x: np.ndarray, step: float) -> np.ndarray:
        raise NotImplementedError


class ZeroFunction(ProxFunction):
    """The zero regularizer; its prox is the identity."""

    def __init__(self, shape=()):
        self.shape = tuple(shape)

    def eval(self, x):
        return 0.0

    def prox(self, x, step):
        return np.asarray(x, dtype=np.float64).copy()


@dataclass(frozen=True)
class MagLiftReport:
    """Observability record for one magnitude-lift evaluation."""

    dr_iterations: int
    entered_fallback: bool
    final_min_component: float


def project_nonneg(x: np.ndarray) -> np.ndarray:
    """Projection onto the nonnegative orthant, ``max(x, 0)`` elementwise."""
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def prox_f_shifted(y: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Prox of ``chi_{>=0} + 0.5||. - r||^2``, namely ``proj_{>=0}((r + y)/2)``."""
    y = np.asarray(y, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    if y.shape != r.shape:
        raise ValueError(f"shape mismatch: {y.shape} vs {r.shape}")
    return project_nonneg(0.5 * (r + y))


def dr_update(prox_a: Callable, prox_b: Callable, y: np.ndarray):
    """One Douglas-Rachford step for ``min a(x) + b(x)``.

    Returns ``(x, y_next)`` with ``x = prox_a(y)`` and
    ``y_next = y + prox_b(2x - y) - x``.  Every DR loop in this package runs
    through here.
    """
    x = prox_a(y)
    y_next = y + prox_b(2.0 * x - y) - x
    return x, y_next


def _nonneg_dr_loop(h: ProxFunction, r: np.ndarray, step, max_iters, tol):
    """Shared engine for the orthant-bounded prox of ``step * h``.

    Starts at ``y0 = r`` so that any ``h`` whose prox preserves the
    nonnegative orthant exits before the first DR update.  Stops when the
    iterate is nonnegative to within ``tol``, when the iterate stalls
    (guards cycling), or when the budget runs out; in the latter cases a
    remaining violation beyond ``tol`` raises :class:`ConvergenceError`.
    """
    prox_a = lambda y: h.prox(y, step)
    prox_b = lambda u: prox_f_shifted(u, r)

    x, y = dr_update(prox_a, prox_b, r.copy())
    if not np.isfinite(x).all():
        raise FloatingPointError("non-finite prox output in magnitude lift")
    iters = 0
    entered = False
    while np.any(x < -tol):
        if iters >= max_iters:
            report = MagLiftReport(iters, entered, float(np.min(x)))
            raise ConvergenceError(
                f"DR fallback exhausted {max_iters} iterations with "
                f"min component {np.min(x):.3e}",
                detail=report,
            )
        entered = True
        x_new, y = dr_update(prox_a, prox_b, y)
        if not np.isfinite(x_new).all():
            raise FloatingPointError("non-finite prox output in DR fallback")
        iters += 1
        # cycling guard: only give up once progress is far below the
        # negativity tolerance, otherwise keep polishing the violation
        stalled = np.max(np.abs(x_new - x)) < 1e-3 * tol
        x = x_new
        if stalled:
            break
    min_comp = float(np.min(x)) if x.size else 0.0
    if min_comp < -tol:
        report = MagLiftReport(iters, entered, min_comp)
        raise ConvergenceError(
            f"DR fallback stalled with min component {min_comp:.3e}", detail=report
        )
    return project_nonneg(x), MagLiftReport(iters, entered, min_comp)


def bounded_prox(
    h: ProxFunction,
    r: np.ndarray,
    step: float = 1.0,
    max_iters: int = 500,
    tol: float = 1e-9,
) -> np.ndarray:
    """Proximal map of ``step * h`` restricted to the nonnegative orthant.

    Minimizes ``step * h(x) + 0.5||x - r||^2`` over ``x >= 0`` by
    Douglas-Rachford splitting against ``chi_{>=0} + 0.5||. - r||^2``.
    Shares its implementation with :func:`magnitude_lift`.
    """
    r = np.asarray(r, dtype=np.float64)
    if np.any(r < 0):
        raise ValueError("bounded_prox requires a nonnegative input")
    if step <= 0:
        raise ValueError("step must be positive")
    x, _ = _nonneg_dr_loop(h, r, step, max_iters, tol)
    return x


def magnitude_lift(
    h: ProxFunction,
    z: Union[ComplexImage, np.ndarray],
    step: float,
    max_dr_iters: int = 500,
    dr_tol: float = 1e-9,
):
    """Proximal map of ``step * H(|.|)`` on a complex image.

    Splits ``z`` into magnitudes ``r`` and unit phases, runs the shared
    orthant-bounded DR loop on the magnitudes, and reattaches the input phase
    array unchanged, so the output is exactly ``x * phase`` for a nonnegative
    ``x``.  Returns ``(result, report)``; the report records how many DR
    iterations ran (0 whenever the fast path applied).
    """
    if step <= 0:
        raise ValueError("step must be positive")
    wrap = isinstance(z, ComplexImage)
    data = z.data if wrap else np.asarray(z, dtype=np.complex128)
    if h.shape and tuple(h.shape) != data.shape:
        raise ValueError(
            f"regularizer domain {tuple(h.shape)} does not match image {data.shape}"
        )
    r, phase = split_phase(data)
    x, report = _nonneg_dr_loop(h, r, step, max_dr_iters, dr_tol)
    out = x * phase
    return (ComplexImage(out) if wrap else out), report


def lift_objective(h: ProxFunction, z, step: float, y) -> float:
    """Objective ``H(|y|) + ||y - z||^2 / (2 step)`` used in oracle comparisons."""
    zdata = z.data if isinstance(z, ComplexImage) else np.asarray(z, np.complex128)
    ydata = y.data if isinstance(y, ComplexImage) else np.asarray(y, np.complex128)
    resid = np.linalg.norm((ydata - zdata).ravel()) ** 2
    return float(h.eval(np.abs(ydata)) + resid / (2.0 * step))


def brute_force_prox_oracle(
    h: ProxFunction,
    z: Union[ComplexImage, np.ndarray],
    step: float,
    restarts: int = 8,
    iters: int = 2000,
    seed: int = 0,
):
    """Direct minimization of ``H(|y|) + ||y - z||^2/(2 step)`` over complex y.

    Treats ``y`` as ``2n`` real variables and runs a multi-start adaptive
    pattern (compass) search; gradient-free because ``H`` may be nonsmooth.
    Intended as a test oracle at desk scale (at most 16 pixels); callers
    compare objective values rather than iterates.
    """
    wrap = isinstance(z, ComplexImage)
    data = z.data if wrap else np.asarray(z, dtype=np.complex128)
    if data.size > 16:
        raise ValueError("oracle is restricted to at most 16 pixels")
    shape = data.shape
    n = data.size

    def objective(v):
        y = (v[:n] + 1j * v[n:]).reshape(shape)
        return h.eval(np.abs(y)) + np.linalg.norm(y.ravel() - data.ravel()) ** 2 / (
            2.0 * step
        )

    rng = np.random.default_rng(seed)
    scale = max(1.0, float(np.max(np.abs(data), initial=0.0)))
    phase = split_phase(data)[1].ravel()
    starts = [
        np.concatenate([data.real.ravel(), data.imag.ravel()]),
        np.zeros(2 * n),
    ]
    while len(starts) < restarts:
        starts.append(starts[0] + rng.normal(0.0, 0.5 * scale, 2 * n))

    def aligned(v):
        # snapping each pixel to the input phase never raises the distance
        # term and leaves H(|y|) unchanged; offered as one more search move
        y = (v[:n] + 1j * v[n:])
        ya = np.abs(y) * phase
        return np.concatenate([ya.real, ya.imag])

    best_v = None
    best_f = np.inf
    for v0 in starts:
        v = v0.copy()
        f = objective(v)
        h_step = 0.5 * scale
        for _ in range(iters):
            improved = False
            for i in range(2 * n):
                for delta in (h_step, -h_step):
                    cand = v.copy()
                    cand[i] += delta
                    fc = objective(cand)
                    if fc < f:
                        v, f = cand, fc
                        improved = True
                        break
            if not improved:
                cand = aligned(v)
                fc = objective(cand)
                if fc < f:
                    v, f = cand, fc
                    improved = True
            if not improved:
                # axis moves can stall on nonsmooth ridges; try a few random
                # directions at the current step before refining it
                for _ in range(2 * n):
                    d = rng.standard_normal(2 * n)
                    d /= np.linalg.norm(d)
                    for s in (h_step, -h_step):
                        fc = objective(v + s * d)
                        if fc < f:
                            v, f = v + s * d, fc
                            improved = True
                            break
                    if improved:
                        break
            if not improved:
                h_step *= 0.5
                if h_step < 1e-10 * scale:
                    break
        if f < best_f:
            best_f, best_v = f, v

    out = (best_v[:n] + 1j * best_v[n:]).reshape(shape)
    return ComplexImage(out) if wrap else out

"""Primal-dual (Chambolle-Pock) and Douglas-Rachford solvers with tracing.

The reconstruction entry point assembles the splitting used throughout:
``f = 0.5||. - d||^2`` composed with the measurement operator ``K = A``, and
``g`` the magnitude-lifted regularizer evaluated through
:func:`proxmag.prox.magnitude_lift`.  Complex vectors are paired through the
real part of the Hermitian inner product, i.e. C^n is treated as R^{2n}.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import ComplexImage, ConvergenceError, LinearOperator
from .prox import ProxFunction, ZeroFunction, dr_update, magnitude_lift
from .regularizers import make_regularizer

__all__ = [
    "SolverConfig",
    "SolverTrace",
    "pdhg",
    "prox_l2_data_conjugate",
    "douglas_rachford",
    "ReconstructionProblem",
    "reconstruct",
]


@dataclass
class SolverConfig:
    """Step sizes, iteration budget, and stopping/tracing controls for PDHG.

    When ``tau``/``sigma`` are left unset they are chosen from the operator
    norm estimate ``L`` as ``tau = sigma = scale / L``, which satisfies the
    convergence requirement ``sigma * tau * L^2 <= 1``.
    """

    max_iters: int = 200
    tau: Optional[float] = None
    sigma: Optional[float] = None
    theta: float = 1.0
    tol: float = 0.0
    trace_stride: int = 1
    step_scale: float = 0.99

    def resolve_steps(self, norm_estimate: float):
        if (self.tau is None) != (self.sigma is None):
            raise ValueError("set both tau and sigma, or neither")
        if self.tau is None:
            l = max(norm_estimate, 1e-12)
            tau = sigma = self.step_scale / l
        else:
            tau, sigma = float(self.tau), float(self.sigma)
        if tau <= 0 or sigma <= 0:
            raise ValueError("step sizes must be positive")
        if sigma * tau * norm_estimate**2 > 1.0 + 1e-9:
            raise ValueError(
                f"sigma*tau*||K||^2 = {sigma * tau * norm_estimate ** 2:.4f} > 1 "
                "violates the PDHG step condition"
            )
        return tau, sigma


@dataclass
class SolverTrace:
    """Per-logged-iteration objective breakdown and progress metrics."""

    iterations: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    misfit: list = field(default_factory=list)
    regularizer: list = field(default_factory=list)
    step_change: list = field(default_factory=list)
    seconds: list = field(default_factory=list)

    def log(self, iteration, objective, misfit, regularizer, step_change, seconds):
        self.iterations.append(int(iteration))
        self.objective.append(float(objective))
        self.misfit.append(float(misfit))
        self.regularizer.append(float(regularizer))
        self.step_change.append(float(step_change))
        self.seconds.append(float(seconds))

    def to_csv(self, path) -> None:
        """Write the trace as CSV: iteration, objective, misfit, reg, step-change, seconds."""
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(
                ["iteration", "objective", "misfit", "reg", "step_change", "seconds"]
            )
            for row in zip(
                self.iterations,
                self.objective,
                self.misfit,
                self.regularizer,
                self.step_change,
                self.seconds,
            ):
                writer.writerow([row[0]] + [f"{v:.12e}" for v in row[1:]])


def prox_l2_data_conjugate(y: np.ndarray, sigma: float, d: np.ndarray) -> np.ndarray:
    """Conjugate prox of ``0.5||. - d||^2``: ``(y - sigma d) / (1 + sigma)``."""
    sigma = max(float(sigma), 1e-12)
    return (np.asarray(y) - sigma * np.asarray(d)) / (1.0 + sigma)


def pdhg(
    f_prox_conjugate: Callable[[np.ndarray, float], np.ndarray],
    g_prox: Callable[[np.ndarray, float], np.ndarray],
    k_op: LinearOperator,
    x0: np.ndarray,
    config: Optional[SolverConfig] = None,
    objective: Optional[Callable[[np.ndarray], tuple]] = None,
):
    """Chambolle-Pock iteration for ``min_x f(K x) + g(x)``.

    ``f_prox_conjugate(y, sigma)`` and ``g_prox(x, tau)`` act on complex
    arrays.  ``objective``, when given, maps an iterate to
    ``(misfit, regularizer)`` for the trace.  Returns ``(x, trace)``.
    """
    config = config or SolverConfig()
    tau, sigma = config.resolve_steps(k_op.norm_estimate)
    x = np.asarray(x0, dtype=np.complex128).copy()
    x_bar = x.copy()
    y = np.zeros(k_op.range_shape, dtype=np.complex128)
    trace = SolverTrace()
    start = time.perf_counter()

    for it in range(1, config.max_iters + 1):
        y = f_prox_conjugate(y + sigma * np.asarray(k_op.apply(x_bar)), sigma)
        x_new = g_prox(x - tau * np.asarray(k_op.adjoint(y)), tau)
        if not np.isfinite(x_new).all():
            raise ConvergenceError(
                f"non-finite PDHG iterate at iteration {it}", detail=trace
            )
        change = float(np.linalg.norm((x_new - x).ravel()))
        x_scale = float(np.linalg.norm(x.ravel()))
        x_bar = x_new + config.theta * (x_new - x)
        x = x_new
        if it % config.trace_stride == 0 or it == config.max_iters:
            if objective is not None:
                misfit, reg = objective(x)
            else:
                misfit = reg = float("nan")
            trace.log(
                it,
                misfit + reg,
                misfit,
                reg,
                change,
                time.perf_counter() - start,
            )
        if config.tol > 0 and change <= config.tol * max(x_scale, 1e-30):
            break
    return x, trace


def douglas_rachford(
    prox_a: Callable[[np.ndarray], np.ndarray],
    prox_b: Callable[[np.ndarray], np.ndarray],
    y0: np.ndarray,
    max_iters: int = 500,
    tol: float = 1e-10,
):
    """Douglas-Rachford iteration minimizing ``a(x) + b(x)``.

    Runs ``x = prox_a(y); y += prox_b(2x - y) - x`` (the same update used by
    the bounded magnitude prox) until the iterate change drops below ``tol``
    in the max norm.  Returns ``(x, changes)``; exhausting the budget raises
    :class:`ConvergenceError` with the change history attached.
    """
    y = np.asarray(y0, dtype=np.float64).copy()
    x_prev = None
    changes = []
    for _ in range(max_iters):
        x, y = dr_update(prox_a, prox_b, y)
        if x_prev is not None:
            change = float(np.max(np.abs(x - x_prev)))
            changes.append(change)
            if change < tol:
                return x, changes
        x_prev = x
    raise ConvergenceError(
        f"Douglas-Rachford did not reach tol={tol} in {max_iters} iterations",
        detail=changes,
    )


@dataclass
class ReconstructionProblem:
    """A least-squares magnitude-regularized reconstruction instance.

    Minimizes ``0.5 sum_k ||A_k z_k - d_k||^2 + lam * H(|z|)`` where ``H``
    comes from the regularizer registry and is applied through the
    magnitude lift.
    """

    operator: LinearOperator
    data: np.ndarray
    regularizer: str = "tv-iso"
    reg_params: dict = field(default_factory=dict)
    lam: float = 0.0
    max_dr_iters: int = 500
    dr_tol: float = 1e-9

    def build_regularizer(self) -> ProxFunction:
        if self.lam == 0.0:
            return ZeroFunction(self.operator.domain_shape)
        return make_regularizer(
            self.regularizer, self.operator.domain_shape, self.reg_params
        )


def reconstruct(
    problem: ReconstructionProblem,
    config: Optional[SolverConfig] = None,
    prox_monitor: Optional[Callable] = None,
):
    """Run the PDHG splitting ``f = 0.5||.-d||^2, K = A`` with a lifted ``g``.

    Starts from the scaled backprojection ``A^H d / ||A||^2``.  ``prox_monitor``
    receives ``(prox_input, output, report)`` after every magnitude-lift
    call, which lets callers verify phase preservation at each
    data-consistency step.  Returns ``(image, trace)``.
    """
    config = config or SolverConfig()
    a_op = problem.operator
    d = np.asarray(problem.data, dtype=np.complex128)
    h = problem.build_regularizer()
    lam = float(problem.lam)

    def g_prox(v, tau):
        if lam == 0.0:
            return np.asarray(v).copy()
        out, report = magnitude_lift(
            h, v, lam * tau, max_dr_iters=problem.max_dr_iters, dr_tol=problem.dr_tol
        )
        if prox_monitor is not None:
            prox_monitor(v, out, report)
        return out

    def f_conj(y, sigma):
        return prox_l2_data_conjugate(y, sigma, d)

    def objective(x):
        resid = np.asarray(a_op.apply(x)) - d
        misfit = 0.5 * float(np.linalg.norm(resid.ravel()) ** 2)
        reg = lam * float(h.eval(np.abs(x))) if lam != 0.0 else 0.0
        return misfit, reg

    norm = a_op.norm_estimate
    x0 = np.asarray(a_op.adjoint(d)) / max(norm**2, 1e-30)
    x, trace = pdhg(f_conj, g_prox, a_op, x0, config, objective=objective)
    return ComplexImage(x), trace

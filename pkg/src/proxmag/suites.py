"""Named verification suites behind the ``prox-test`` CLI command.

Each suite runs a family of property checks with a fixed seed and returns a
:class:`SuiteReport`; all printed numbers use fixed formats so repeated runs
with the same seed produce byte-identical output.

The counterexample suite reproduces the weighting matrix for which the
magnitude prox and the plain prox of composed magnitudes genuinely differ.
The published reference digits for that instance came from an
under-converged numerical solve: the quoted bounded solution is strictly
interior yet differs from the quoted unconstrained one, which is impossible
for exact minimizers of the same strictly convex objective.  The suite
therefore checks the computed values against independent oracles and prints
the deviation from the published digits for reference.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Tuple

import numpy as np

from .core import ComplexImage, split_phase
from .levelset import (
    LevelSetParams,
    levelset_prox_complex,
    make_grid,
    palentir_jacobian,
    palentir_render,
    levelset_project,
)
from .prox import (
    bounded_prox,
    brute_force_prox_oracle,
    lift_objective,
    magnitude_lift,
)
from .regularizers import (
    BoxIndicator,
    MatrixWeightedL1,
    MultiBangLevels,
    SquaredL2,
    Tgv2,
    TotalVariation,
    WeightedLp,
    forward_diff,
    multibang_prox,
    tgv2_eval,
)

__all__ = [
    "SuiteReport",
    "run_suite",
    "SUITE_NAMES",
    "COUNTEREXAMPLE_MATRIX",
    "COUNTEREXAMPLE_INPUT",
    "PAPER_DIGITS_BOUNDED",
    "PAPER_DIGITS_UNCONSTRAINED",
]

COUNTEREXAMPLE_MATRIX = np.array(
    [[1.0, -0.7, 0.35], [-0.7, 1.0, -0.9], [0.35, -0.9, 1.0]]
)
COUNTEREXAMPLE_INPUT = np.array([2.0, 1e-9, 1e-9])
PAPER_DIGITS_BOUNDED = np.array([0.815, 0.576, 0.005])
PAPER_DIGITS_UNCONSTRAINED = np.array([0.826, 0.555, -0.025])


@dataclass
class SuiteReport:
    name: str
    lines: List[str] = field(default_factory=list)
    checks: List[Tuple[str, bool, float]] = field(default_factory=list)

    def info(self, text: str):
        self.lines.append(text)

    def check(self, description: str, passed: bool, measured: float):
        self.checks.append((description, bool(passed), float(measured)))

    @property
    def passed(self) -> bool:
        return all(ok for _, ok, _ in self.checks)

    def render(self) -> str:
        out = [f"suite: {self.name}"]
        out.extend(f"  {line}" for line in self.lines)
        for desc, ok, measured in self.checks:
            tag = "PASS" if ok else "FAIL"
            out.append(f"  [{tag}] {desc} (measured {measured:.6e})")
        out.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(out)


def _fmt_vec(v) -> str:
    return "[" + ", ".join(f"{x:.6f}" for x in np.asarray(v).ravel()) + "]"


def _pattern_search(fun: Callable, v0: np.ndarray, scale: float, iters: int = 400, seed: int = 0):
    """Compass search over real vectors; same scheme as the complex oracle."""
    rng = np.random.default_rng(seed)
    v = v0.astype(np.float64).copy()
    f = fun(v)
    step = 0.5 * scale
    for _ in range(iters):
        improved = False
        for i in range(v.size):
            for delta in (step, -step):
                cand = v.copy()
                cand[i] += delta
                fc = fun(cand)
                if fc < f:
                    v, f = cand, fc
                    improved = True
                    break
        if not improved:
            for _ in range(2 * v.size):
                d = rng.standard_normal(v.size)
                d /= np.linalg.norm(d)
                for s in (step, -step):
                    fc = fun(v + s * d)
                    if fc < f:
                        v, f = v + s * d, fc
                        improved = True
                        break
                if improved:
                    break
        if not improved:
            step *= 0.5
            if step < 1e-11 * scale:
                break
    return v, f


def _multistart_pattern_search(fun, starts, scale, iters=400):
    best_v, best_f = None, np.inf
    for v0 in starts:
        v, f = _pattern_search(fun, np.asarray(v0, dtype=np.float64), scale, iters)
        if f < best_f:
            best_v, best_f = v, f
    return best_v, best_f


def suite_counterexample(seed: int = 0) -> SuiteReport:
    rep = SuiteReport("counterexample")
    w_mat = COUNTEREXAMPLE_MATRIX
    z = COUNTEREXAMPLE_INPUT.astype(np.complex128)
    r = np.abs(z)
    h = MatrixWeightedL1(w_mat)

    unconstrained = h.prox(r, 1.0)
    lifted, lift_report = magnitude_lift(h, z, 1.0, max_dr_iters=2000)
    lifted_re = lifted.real

    rep.info(f"prox_(||W .||_1)(|z|)   = {_fmt_vec(unconstrained)}")
    rep.info(f"prox_(||W |.| ||_1)(z)  = {_fmt_vec(lifted_re)}")
    rep.info(
        f"published reference     = {_fmt_vec(PAPER_DIGITS_UNCONSTRAINED)} / "
        f"{_fmt_vec(PAPER_DIGITS_BOUNDED)}"
    )
    rep.info(
        "deviation from published digits: "
        f"{np.max(np.abs(unconstrained - PAPER_DIGITS_UNCONSTRAINED)):.4f} / "
        f"{np.max(np.abs(lifted_re - PAPER_DIGITS_BOUNDED)):.4f} "
        "(published values are under-converged; see oracle checks)"
    )

    rep.check(
        "unconstrained prox leaves the orthant",
        float(np.min(unconstrained)) < 0,
        float(np.min(unconstrained)),
    )
    rep.check(
        "fallback engaged with nonnegative output",
        lift_report.entered_fallback and float(np.min(lifted_re)) >= 0.0,
        float(np.min(lifted_re)),
    )

    def unconstrained_obj(x):
        return float(np.sum(np.abs(w_mat @ x)) + 0.5 * np.sum((x - r) ** 2))

    rng = np.random.default_rng(seed)
    starts = [r.copy(), np.zeros(3), unconstrained + 0.2 * rng.standard_normal(3)]
    _, f_ps = _multistart_pattern_search(unconstrained_obj, starts, 2.0, iters=600)
    gap_unc = unconstrained_obj(unconstrained) - f_ps
    rep.check("unconstrained prox ties pattern-search oracle", gap_unc <= 1e-6, gap_unc)

    oracle = brute_force_prox_oracle(h, z, 1.0, restarts=4, iters=600, seed=seed)
    gap = lift_objective(h, z, 1.0, lifted) - lift_objective(h, z, 1.0, oracle)
    rep.check("lifted prox ties complex brute-force oracle", gap <= 1e-6, gap)

    phase = split_phase(z)[1]
    replay = bounded_prox(h, r, 1.0, max_iters=2000)
    rep.check(
        "output is a nonnegative multiple of the input phase",
        bool(np.array_equal(lifted, replay * phase)),
        0.0,
    )
    return rep


def _theorem1_families(n, rng):
    """The four fast-path regularizer families on vectors of length n."""
    return (
        ("diag-L1", WeightedLp((n,), weights=rng.uniform(0.3, 2.0, n), p=1)),
        ("L2-squared", SquaredL2((n,), lam=rng.uniform(0.1, 1.5))),
        ("box", BoxIndicator((n,), lo=0.0, hi=rng.uniform(0.5, 1.5))),
        ("TV-1D", TotalVariation((n,), "iso2d", 1.0, inner_iters=300)),
    )


def suite_theorem1(seed: int = 0, instances: int = 100, oracle_subset: int = 25) -> SuiteReport:
    rep = SuiteReport("theorem1")
    rng = np.random.default_rng(seed)
    worst_gap = -np.inf
    exact = True
    zero_iters = True
    for k in range(instances):
        n = int(rng.integers(2, 5))
        for _, h in _theorem1_families(n, rng):
            r = rng.uniform(0.0, 2.0, n)
            phi = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, n))
            z = r * phi
            tau = float(rng.uniform(0.2, 1.5))
            out, report = magnitude_lift(h, z, tau)
            zero_iters &= report.dr_iterations == 0 and not report.entered_fallback
            r_in, phase = split_phase(z)
            exact &= bool(np.array_equal(out, h.prox(r_in, tau) * phase))
            if k < oracle_subset:  # oracle comparison on a subset keeps runtime modest
                oracle = brute_force_prox_oracle(h, z, tau, restarts=2, iters=400, seed=seed + k)
                gap = lift_objective(h, z, tau, out) - lift_objective(h, z, tau, oracle)
                worst_gap = max(worst_gap, gap)
    rep.info(f"instances per family: {instances}")
    rep.check("fast path used (0 DR iterations) on every instance", zero_iters, 0.0)
    rep.check("output equals prox_H(r) * phase exactly", exact, 0.0)
    rep.check("objective never worse than oracle + 1e-6", worst_gap <= 1e-6, worst_gap)
    return rep


def make_negative_wl1_instance(rng):
    """Random matrix-weighted-L1 instance whose unconstrained prox dips negative."""
    while True:
        n = int(rng.integers(3, 5))
        mat = np.eye(n) + rng.uniform(-1.0, 1.0, (n, n))
        mat = 0.5 * (mat + mat.T)
        r = np.zeros(n)
        r[rng.integers(0, n)] = rng.uniform(1.5, 3.0)
        r += rng.uniform(0.0, 1e-6, n)
        h = MatrixWeightedL1(mat)
        if float(np.min(h.prox(r, 1.0))) < -1e-3:
            return h, r


def make_negative_tgv_instance(rng):
    """1-D spike whose unconstrained TGV^2 prox has a negative coordinate."""
    while True:
        n = int(rng.integers(8, 11))
        r = np.zeros(n)
        r[n // 2] = rng.uniform(2.0, 5.0)
        alpha = float(rng.uniform(0.5, 1.5))
        beta = float(rng.uniform(0.3, 0.8)) * alpha
        h = Tgv2((n,), alpha=alpha, beta=beta, inner_iters=400, eval_iters=1500)
        if float(np.min(h.prox(r, 1.0))) < -5e-3:
            return h, r


def _tgv_joint_oracle(h: Tgv2, z: np.ndarray, step: float, seed: int):
    """Joint pattern search over (complex image, auxiliary field)."""
    n = z.size
    alpha, beta = h.alpha, h.beta

    def fun(v):
        y = v[:n] + 1j * v[n : 2 * n]
        w = v[2 * n :]
        mag = np.abs(y)
        t1 = np.sum(np.abs(forward_diff(mag, 0) - w))
        t2 = np.sum(np.abs(forward_diff(w, 0)))
        return float(
            0.5 * np.sum(np.abs(y - z) ** 2) + step * (alpha * t1 + beta * t2)
        )

    v0 = np.concatenate([z.real, z.imag, np.zeros(n)])
    scale = max(1.0, float(np.max(np.abs(z))))
    v, _ = _pattern_search(fun, v0, scale, iters=400)
    return v[:n] + 1j * v[n : 2 * n]


def suite_theorem2(seed: int = 0, instances: int = 50) -> SuiteReport:
    rep = SuiteReport("theorem2")
    rng = np.random.default_rng(seed)
    n_tgv = instances // 3
    n_wl1 = instances - n_tgv
    worst_gap = -np.inf
    all_nonneg = True
    all_fallback = True
    for k in range(n_wl1):
        h, r = make_negative_wl1_instance(rng)
        phi = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, r.size))
        z = r * phi
        out, report = magnitude_lift(h, z, 1.0, max_dr_iters=3000)
        all_nonneg &= bool(np.all((out * np.conj(split_phase(z)[1])).real >= 0.0))
        all_fallback &= report.entered_fallback
        oracle = brute_force_prox_oracle(h, z, 1.0, restarts=3, iters=500, seed=seed + k)
        gap = lift_objective(h, z, 1.0, out) - lift_objective(h, z, 1.0, oracle)
        worst_gap = max(worst_gap, gap)
    for k in range(n_tgv):
        h, r = make_negative_tgv_instance(rng)
        phi = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, r.size))
        z = r * phi
        out, report = magnitude_lift(h, z, 1.0, max_dr_iters=400, dr_tol=2e-5)
        all_nonneg &= bool(np.all((out * np.conj(split_phase(z)[1])).real >= 0.0))
        all_fallback &= report.entered_fallback
        y_oracle = _tgv_joint_oracle(h, z, 1.0, seed + k)

        def obj(y):
            return float(
                0.5 * np.sum(np.abs(y - z) ** 2)
                + tgv2_eval(np.abs(y), h.alpha, h.beta, inner_iters=2000)
            )

        gap = obj(np.asarray(out)) - obj(y_oracle)
        worst_gap = max(worst_gap, gap)
    rep.info(f"instances: {n_wl1} matrix-weighted L1 + {n_tgv} TGV^2 spikes")
    rep.check("output magnitudes nonnegative on every instance", all_nonneg, 0.0)
    rep.check("DR fallback engaged on every instance", all_fallback, 0.0)
    rep.check("objective gap vs oracle <= 1e-5", worst_gap <= 1e-5, worst_gap)
    return rep


def suite_multibang(seed: int = 0, scalars: int = 1000) -> SuiteReport:
    rep = SuiteReport("multibang")
    rng = np.random.default_rng(seed)
    values = (0.0, 0.5, 1.0)
    a = np.asarray(values)
    grid = np.linspace(values[0], values[-1], 10001)  # step 1e-4
    idx = np.clip(np.searchsorted(a, grid, side="right") - 1, 0, len(a) - 2)
    penalty = (a[idx + 1] - grid) * (grid - a[idx])
    worst = 0.0
    nonneg = True
    for tau in (0.1, 0.25, 0.4):
        levels = MultiBangLevels(values, tau)
        xs = rng.uniform(-0.5, 1.5, scalars)
        prox = multibang_prox(xs, levels)
        nonneg &= bool(np.all(prox[xs >= 0] >= 0.0))
        for x, p in zip(xs, prox):
            best = grid[np.argmin(penalty + (grid - x) ** 2 / (2.0 * tau))]
            worst = max(worst, abs(p - best))
    rep.info(f"levels {values}, taus (0.1, 0.25, 0.4), {scalars} scalars each")
    rep.check("prox matches grid-search oracle within grid step", worst <= 1.5e-4, worst)
    rep.check("nonnegative inputs map to nonnegative outputs", nonneg, 0.0)
    return rep


def suite_tgv_fallback(seed: int = 0) -> SuiteReport:
    rep = SuiteReport("tgv-fallback")
    rng = np.random.default_rng(seed)
    n = 9
    r = np.zeros(n)
    r[n // 2] = 4.0
    h = Tgv2((n,), alpha=1.0, beta=0.5, inner_iters=400)
    unconstrained = h.prox(r, 1.0)
    rep.info(f"spike signal, unconstrained TGV^2 prox = {_fmt_vec(unconstrained)}")
    rep.check(
        "constructed instance leaves the orthant",
        float(np.min(unconstrained)) < -1e-3,
        float(np.min(unconstrained)),
    )
    phi = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, n))
    z = r * phi
    out, report = magnitude_lift(h, z, 1.0, max_dr_iters=400, dr_tol=2e-5)
    mag = (out * np.conj(split_phase(z)[1])).real
    rep.check("fallback engaged", report.entered_fallback, float(report.dr_iterations))
    rep.check("lifted output nonnegative", bool(np.all(mag >= 0.0)), float(np.min(mag)))
    replay = bounded_prox(h, np.abs(z), 1.0, max_iters=400, tol=2e-5)
    rep.check(
        "output is a nonnegative multiple of the input phase",
        bool(np.array_equal(out, replay * split_phase(z)[1])),
        0.0,
    )
    return rep


def _two_blob_params() -> LevelSetParams:
    return LevelSetParams(
        alphas=[2.0, 1.5],
        centers=[[-3.0, -2.5], [3.5, 3.0]],
        log_axes=[[-1.7, -1.3], [-1.9, -1.5]],
        angles=[0.4, -0.6],
        contrast_high=1.0,
        contrast_low=0.1,
        level=0.05,
        width=0.01,
    )


def suite_levelset(seed: int = 0) -> SuiteReport:
    rep = SuiteReport("levelset")
    rng = np.random.default_rng(seed)
    params = _two_blob_params()
    gx, gy = make_grid((24, 24), spacing=1.0)
    truth = palentir_render(params, gx, gy)
    rep.check(
        "rendered image lies in [c_low, c_high]",
        bool(np.all(truth >= params.contrast_low) and np.all(truth <= params.contrast_high)),
        float(np.min(truth)),
    )

    _, jac = palentir_jacobian(params, gx, gy)
    vec = params.pack()
    eps = 1e-6
    worst = 0.0
    for k in range(vec.size):
        vp, vm = vec.copy(), vec.copy()
        vp[k] += eps
        vm[k] -= eps
        fd = (
            palentir_render(params.with_packed(vp), gx, gy)
            - palentir_render(params.with_packed(vm), gx, gy)
        ).ravel() / (2.0 * eps)
        scale = max(1.0, float(np.max(np.abs(jac[:, k]))))
        worst = max(worst, float(np.max(np.abs(fd - jac[:, k]))) / scale)
    rep.check("analytic Jacobian matches central differences", worst < 1e-5, worst)

    perturbed = params.with_packed(vec * (1.0 + 0.05 * rng.standard_normal(vec.size)))
    fitted, rendered, info = levelset_project(truth, perturbed, gx, gy, gn_iters=60)
    resid = float(np.linalg.norm(rendered - truth) / np.linalg.norm(truth))
    rep.info(f"self-recovery residual {resid:.3e} after {info.iterations} GN steps")
    rep.check("self-recovery residual < 1e-3 * ||r||", resid < 1e-3, resid)
    mono = all(b <= a + 1e-15 for a, b in zip(info.objectives, info.objectives[1:]))
    rep.check("objective non-increasing over accepted steps", mono, 0.0)

    phase = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, truth.shape))
    z = ComplexImage((truth * phase)[None])
    out, fitted_params, _ = levelset_prox_complex(z, params, gx, gy)
    phase_in = split_phase(z.data)[1]
    expected = palentir_render(fitted_params, gx, gy)[None] * phase_in
    rep.check(
        "prox reattaches the input phase exactly",
        bool(np.array_equal(out.data, expected)),
        0.0,
    )
    return rep


SUITE_NAMES = (
    "counterexample",
    "theorem1",
    "theorem2",
    "multibang",
    "tgv-fallback",
    "levelset",
)

_SUITES = {
    "counterexample": suite_counterexample,
    "theorem1": suite_theorem1,
    "theorem2": suite_theorem2,
    "multibang": suite_multibang,
    "tgv-fallback": suite_tgv_fallback,
    "levelset": suite_levelset,
}


def run_suite(name: str, seed: int = 0) -> SuiteReport:
    if name not in _SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {SUITE_NAMES}")
    return _SUITES[name](seed=seed)

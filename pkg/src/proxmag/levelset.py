"""Parametric level-set rendering and the magnitude-domain level-set prox.

An image is represented as a smoothly thresholded sum of anisotropic,
rotatable radial basis functions: bumps are weighted through a logistic
gate, summed, compared against a level, and passed through a logistic
transition between a low and a high contrast value.  Rendered images
therefore always lie in ``[c_low, c_high]``, inside the nonnegative orthant,
so projecting magnitudes onto the rendered family and reattaching the input
phase realizes the proximal map of the family's indicator composed with the
elementwise absolute value.

The basis is the compactly supported Wendland C2 function
``psi(rho) = (1 - rho)^4 (4 rho + 1)`` on ``rho <= 1``; gates and
transitions are logistic.  The projection is a nonconvex least-squares fit
solved by Gauss-Newton with a backtracking line search, so the prox is a
local projection.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np
from scipy.special import expit

from .core import ComplexImage, split_phase

__all__ = [
    "LevelSetParams",
    "make_grid",
    "palentir_render",
    "palentir_jacobian",
    "levelset_project",
    "levelset_prox_complex",
    "ProjectInfo",
]


@dataclass(frozen=True)
class LevelSetParams:
    """Basis weights, geometry, and contrast levels of a rendered image.

    ``alphas`` gate each basis on or off through a logistic; ``centers`` are
    in scene coordinates; ``log_axes`` hold log inverse-scales of the two
    principal axes (kept in log space so the shape matrices stay invertible
    without constraints); ``angles`` rotate each basis.  ``level`` is the
    contour value (small, nonnegative) and ``width`` the transition width.
    """

    alphas: np.ndarray
    centers: np.ndarray
    log_axes: np.ndarray
    angles: np.ndarray
    contrast_high: float
    contrast_low: float
    level: float = 0.05
    width: float = 0.01

    def __post_init__(self):
        alphas = np.atleast_1d(np.asarray(self.alphas, dtype=np.float64))
        centers = np.asarray(self.centers, dtype=np.float64).reshape(-1, 2)
        log_axes = np.asarray(self.log_axes, dtype=np.float64).reshape(-1, 2)
        angles = np.atleast_1d(np.asarray(self.angles, dtype=np.float64))
        n = alphas.size
        if not (centers.shape[0] == log_axes.shape[0] == angles.size == n and n >= 1):
            raise ValueError("alphas, centers, log_axes, angles must share length N >= 1")
        if not self.contrast_high > self.contrast_low >= 0:
            raise ValueError("contrasts must satisfy high > low >= 0")
        if self.width <= 0:
            raise ValueError("transition width must be positive")
        if self.level < 0:
            raise ValueError("level must be nonnegative")
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "log_axes", log_axes)
        object.__setattr__(self, "angles", angles)

    @property
    def n_basis(self) -> int:
        return self.alphas.size

    def pack(self) -> np.ndarray:
        """The free optimization variables (alphas, log_axes, angles)."""
        return np.concatenate(
            [self.alphas, self.log_axes.ravel(), self.angles]
        )

    def with_packed(self, vec: np.ndarray) -> "LevelSetParams":
        n = self.n_basis
        vec = np.asarray(vec, dtype=np.float64)
        if vec.size != 4 * n:
            raise ValueError(f"expected {4 * n} packed values, got {vec.size}")
        return replace(
            self,
            alphas=vec[:n],
            log_axes=vec[n : 3 * n].reshape(n, 2),
            angles=vec[3 * n :],
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "alphas": self.alphas.tolist(),
                "centers": self.centers.tolist(),
                "log_axes": self.log_axes.tolist(),
                "angles": self.angles.tolist(),
                "contrast_high": self.contrast_high,
                "contrast_low": self.contrast_low,
                "level": self.level,
                "width": self.width,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "LevelSetParams":
        d = json.loads(text)
        return cls(
            alphas=d["alphas"],
            centers=d["centers"],
            log_axes=d["log_axes"],
            angles=d["angles"],
            contrast_high=d["contrast_high"],
            contrast_low=d["contrast_low"],
            level=d.get("level", 0.05),
            width=d.get("width", 0.01),
        )


def make_grid(shape: Tuple[int, int], spacing: float = 1.0, origin=None):
    """Pixel-center coordinate arrays (X, Y) for an H x W scene grid."""
    h, w = shape
    if origin is None:
        origin = (-(h - 1) * spacing / 2.0, -(w - 1) * spacing / 2.0)
    ys = origin[0] + spacing * np.arange(h)
    xs = origin[1] + spacing * np.arange(w)
    return np.meshgrid(ys, xs, indexing="ij")


def _wendland(rho: np.ndarray) -> np.ndarray:
    t = np.maximum(0.0, 1.0 - rho)
    return t**4 * (4.0 * rho + 1.0)


def _basis_fields(params: LevelSetParams, gx, gy):
    """Per-basis psi values and the ingredients for its derivatives."""
    n = params.n_basis
    h, w = gx.shape
    psi = np.empty((n, h, w))
    cache = []
    for j in range(n):
        c1, c2 = params.centers[j]
        e1, e2 = np.exp(params.log_axes[j])
        c, s = np.cos(params.angles[j]), np.sin(params.angles[j])
        u1 = gx - c1
        u2 = gy - c2
        su1, su2 = e1 * u1, e2 * u2
        v1 = c * su1 - s * su2
        v2 = s * su1 + c * su2
        rho = np.sqrt(v1 * v1 + v2 * v2)
        psi[j] = _wendland(rho)
        cache.append((u1, u2, su1, su2, v1, v2, rho, e1, e2, c, s))
    return psi, cache


def palentir_render(params: LevelSetParams, gx, gy) -> np.ndarray:
    """Render the level-set image on pixel-coordinate arrays (gx, gy).

    Output lies in ``[contrast_low, contrast_high]`` elementwise.
    """
    psi, _ = _basis_fields(params, np.asarray(gx), np.asarray(gy))
    gates = expit(params.alphas)
    phi = np.tensordot(gates, psi, axes=(0, 0))
    t = expit((phi - params.level) / params.width)
    return params.contrast_low + (params.contrast_high - params.contrast_low) * t


def palentir_jacobian(params: LevelSetParams, gx, gy):
    """Rendered image and its analytic Jacobian wrt the packed variables.

    Returns ``(image, J)`` with ``J`` of shape ``(H*W, 4N)`` ordered like
    :meth:`LevelSetParams.pack`.
    """
    gx = np.asarray(gx)
    gy = np.asarray(gy)
    n = params.n_basis
    psi, cache = _basis_fields(params, gx, gy)
    gates = expit(params.alphas)
    phi = np.tensordot(gates, psi, axes=(0, 0))
    t = expit((phi - params.level) / params.width)
    span = params.contrast_high - params.contrast_low
    image = params.contrast_low + span * t
    # chain factor d image / d phi
    dimg_dphi = span * t * (1.0 - t) / params.width

    npix = gx.size
    jac = np.empty((npix, 4 * n))
    for j in range(n):
        u1, u2, su1, su2, v1, v2, rho, e1, e2, c, s = cache[j]
        # d psi / d v = -20 (1 - rho)_+^3 v, finite at rho = 0
        dfac = -20.0 * np.maximum(0.0, 1.0 - rho) ** 3
        # v-direction derivatives of v for each free variable
        dv1_db1 = c * su1
        dv2_db1 = s * su1
        dv1_db2 = -s * su2
        dv2_db2 = c * su2
        dv1_dg = -s * su1 - c * su2
        dv2_dg = c * su1 - s * su2
        gpsi = gates[j] * dfac
        dphi_db1 = gpsi * (v1 * dv1_db1 + v2 * dv2_db1)
        dphi_db2 = gpsi * (v1 * dv1_db2 + v2 * dv2_db2)
        dphi_dg = gpsi * (v1 * dv1_dg + v2 * dv2_dg)
        dphi_da = gates[j] * (1.0 - gates[j]) * psi[j]
        jac[:, j] = (dimg_dphi * dphi_da).ravel()
        jac[:, n + 2 * j] = (dimg_dphi * dphi_db1).ravel()
        jac[:, n + 2 * j + 1] = (dimg_dphi * dphi_db2).ravel()
        jac[:, 3 * n + j] = (dimg_dphi * dphi_dg).ravel()
    return image, jac


@dataclass(frozen=True)
class ProjectInfo:
    objectives: tuple
    iterations: int
    stalled: bool


def levelset_project(
    r: np.ndarray,
    params0: LevelSetParams,
    gx,
    gy,
    gn_iters: int = 30,
    min_step: float = 1e-10,
):
    """Fit the rendered family to a nonnegative image by damped Gauss-Newton.

    Descends ``0.5 || f(p) - r ||^2`` over the packed variables with a
    backtracking line search; the objective is non-increasing over accepted
    steps.  If no step length improves the objective the current iterate is
    returned with the ``stalled`` flag set (no exception).

    Returns ``(params, rendered, info)``.
    """
    r = np.asarray(r, dtype=np.float64)
    if np.any(r < 0):
        raise ValueError("levelset_project expects a nonnegative image")
    params = params0
    image, jac = palentir_jacobian(params, gx, gy)
    resid = (image - r).ravel()
    obj = 0.5 * float(resid @ resid)
    objectives = [obj]
    stalled = False
    scale = float(np.linalg.norm(r.ravel()))
    iters_done = 0
    for it in range(gn_iters):
        if np.sqrt(2.0 * obj) <= 1e-12 * max(scale, 1.0):
            break
        delta, *_ = np.linalg.lstsq(jac, -resid, rcond=None)
        if not np.isfinite(delta).all() or np.linalg.norm(delta) == 0.0:
            stalled = True
            break
        step = 1.0
        p_vec = params.pack()
        accepted = False
        while step >= min_step:
            cand = params.with_packed(p_vec + step * delta)
            cand_img = palentir_render(cand, gx, gy)
            cand_resid = (cand_img - r).ravel()
            cand_obj = 0.5 * float(cand_resid @ cand_resid)
            if cand_obj < obj:
                params = cand
                obj = cand_obj
                accepted = True
                break
            step *= 0.5
        if not accepted:
            stalled = True
            break
        iters_done = it + 1
        objectives.append(obj)
        image, jac = palentir_jacobian(params, gx, gy)
        resid = (image - r).ravel()
    rendered = palentir_render(params, gx, gy)
    return params, rendered, ProjectInfo(tuple(objectives), iters_done, stalled)


def levelset_prox_complex(
    z: ComplexImage,
    params0: LevelSetParams,
    gx=None,
    gy=None,
    gn_iters: int = 30,
    spacing: float = 1.0,
):
    """Project the magnitude of a single-channel image onto the rendered
    family and reattach the input phase array unchanged.

    Returns ``(image, params, info)``; the output equals
    ``rendered * phase(z)`` exactly.
    """
    if z.channels != 1:
        raise ValueError("level-set prox expects a single-channel image")
    plane = z.data[0]
    if gx is None or gy is None:
        gx, gy = make_grid(plane.shape, spacing=spacing)
    mag, phase = split_phase(plane)
    params, rendered, info = levelset_project(mag, params0, gx, gy, gn_iters=gn_iters)
    out = ComplexImage((rendered * phase)[None])
    return out, params, info

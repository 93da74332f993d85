"""Numerical certification of the Lipschitz/growth constants and the
sigma-MASP sampling-period bound.

All sup-type constants are grid estimates over the operating level set,
inflated by a declared multiplicative safety factor; the inf-type decay rate
is deflated.  Estimates are reproducible (no randomness beyond a fixed seed
for the bounding-box direction search) and brute-force verifiable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from .dynamics import LevelSetSpec, SystemModel
from .errors import CertificationError

SUP_SAFETY_DEFAULT = 1.05
# Deflation for the certified linear decay rate.  Deliberately conservative:
# the rate sets the trigger's decay budget slope, and an aggressive rate makes
# the trigger fire before the prediction quality can pay off.
INF_SAFETY_DEFAULT = 0.75

_SQRT_E = math.sqrt(math.e)


# --- level-set sampling -----------------------------------------------------

def level_set_box(model: SystemModel, c: float, n_directions: int = 1024) -> np.ndarray:
    """Axis-aligned bounding box of {v <= c} as half-widths per axis.

    Scans random directions (plus the coordinate axes) for the boundary
    crossing v(t*d) = c and takes per-axis maxima, inflated by 2% to cover
    directions between samples.  Raises if the level set appears unbounded.
    """
    n = model.state_dim
    rng = np.random.default_rng(0)
    dirs = rng.standard_normal((n_directions, n))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    dirs = np.vstack([dirs, np.eye(n), -np.eye(n)])

    t = np.ones(len(dirs))
    for grow in range(61):
        inside = model.v(t[:, None] * dirs) < c
        if not inside.any():
            break
        t[inside] *= 2.0
    else:
        raise CertificationError("level set {v <= c} appears unbounded")
    lo, hi = np.zeros_like(t), t
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        inside = model.v(mid[:, None] * dirs) < c
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    half_widths = np.max(hi[:, None] * np.abs(dirs), axis=0)
    return 1.02 * half_widths


def sample_level_set(
    model: SystemModel, levelset: LevelSetSpec, resolution: int
) -> np.ndarray:
    """Regular grid over the bounding box, filtered to {v <= c}."""
    if resolution < 2:
        raise ValueError(f"resolution must be >= 2, got {resolution}")
    hw = level_set_box(model, levelset.c)
    axes = [np.linspace(-w, w, resolution) for w in hw]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, model.state_dim)
    vals = model.v(pts)
    inside = pts[vals <= levelset.c]
    if len(inside) == 0:
        raise CertificationError("no grid points inside the level set; raise the resolution")
    return inside


def _margin_mask(model: SystemModel, pts: np.ndarray, levelset: LevelSetSpec) -> np.ndarray:
    return model.v(pts) > levelset.margin


def _fd_jacobian(fun, pts: np.ndarray, eps: float) -> np.ndarray:
    """Batched central-difference Jacobian of fun: R^n -> R^k at pts (N, n)."""
    n = pts.shape[-1]
    cols = []
    for j in range(n):
        step = np.zeros(n)
        step[j] = eps
        cols.append((fun(pts + step) - fun(pts - step)) / (2.0 * eps))
    return np.stack(cols, axis=-1)  # (N, k, n)


def _check_finite(values: np.ndarray, pts: np.ndarray, what: str):
    bad = ~np.isfinite(values)
    while bad.ndim > 1:
        bad = bad.any(axis=-1)
    if bad.any():
        idx = int(np.argmax(bad))
        raise CertificationError(f"non-finite {what} inside the level set", point=pts[idx])


# --- constant estimation ----------------------------------------------------

def estimate_L1(
    model: SystemModel,
    levelset: LevelSetSpec,
    grid_resolution: int,
    safety: float = SUP_SAFETY_DEFAULT,
    input_resolution: Optional[int] = None,
) -> float:
    """State-Lipschitz constant of f(., kappa(x3)) uniformly over x3.

    For continuously differentiable f on the convex level set the sup of
    difference quotients equals the sup of the state-Jacobian spectral norm,
    which keeps the scan O(grid^2n) instead of O(grid^3n).  Inputs kappa(x3)
    are sampled on a coarser subgrid.
    """
    if grid_resolution < 8:
        raise ValueError(f"grid_resolution must be >= 8, got {grid_resolution}")
    pts = sample_level_set(model, levelset, grid_resolution)
    if input_resolution is None:
        input_resolution = max(8, min(grid_resolution, 32))
    x3 = sample_level_set(model, levelset, input_resolution)
    inputs = np.atleast_2d(model.kappa(x3))
    if inputs.ndim == 1:
        inputs = inputs[:, None]

    eps = 1e-6 * float(np.max(np.abs(pts), initial=1.0))
    best = 0.0
    for u in inputs:
        jac = _fd_jacobian(lambda xx: model.f(xx, u), pts, eps)
        _check_finite(jac, pts, "f evaluation")
        norms = np.linalg.svd(jac, compute_uv=False)[..., 0]
        best = max(best, float(norms.max()))
    return safety * best


def estimate_L2(
    model: SystemModel,
    levelset: LevelSetSpec,
    grid_resolution: int,
    safety: float = SUP_SAFETY_DEFAULT,
) -> float:
    """Lipschitz constant of the gradient map v_grad on the level set.

    Computed as the max spectral norm of the (finite-difference) Hessian;
    exact up to round-off for quadratic v.
    """
    if grid_resolution < 8:
        raise ValueError(f"grid_resolution must be >= 8, got {grid_resolution}")
    pts = sample_level_set(model, levelset, grid_resolution)
    eps = 1e-6 * float(np.max(np.abs(pts), initial=1.0))
    hess = _fd_jacobian(model.v_grad, pts, eps)
    _check_finite(hess, pts, "v_grad evaluation")
    norms = np.linalg.svd(hess, compute_uv=False)[..., 0]
    return safety * float(norms.max())


def _closed_loop_ratios(model: SystemModel, pts: np.ndarray):
    u = model.kappa(pts)
    fx = model.f(pts, u)
    _check_finite(fx, pts, "f evaluation")
    grad = model.v_grad(pts)
    lie = np.einsum("...i,...i->...", grad, fx)
    nf = np.linalg.norm(fx, axis=-1)
    ng = np.linalg.norm(grad, axis=-1)
    return lie, ng * nf + nf * nf


def estimate_M_max(
    model: SystemModel,
    levelset: LevelSetSpec,
    grid_resolution: int,
    safety: float = SUP_SAFETY_DEFAULT,
) -> float:
    """Sup of (||v'|| ||f|| + ||f||^2) / |LfV| on the level set minus the margin ball."""
    if grid_resolution < 8:
        raise ValueError(f"grid_resolution must be >= 8, got {grid_resolution}")
    pts = sample_level_set(model, levelset, grid_resolution)
    mask = _margin_mask(model, pts, levelset)
    pts = pts[mask]
    lie, growth = _closed_loop_ratios(model, pts)
    if np.any(lie >= 0):
        idx = int(np.argmax(lie >= 0))
        raise CertificationError(
            "Lyapunov decrease violated (LfV >= 0) outside the margin ball", point=pts[idx]
        )
    return safety * float(np.max(growth / np.abs(lie)))


def estimate_gamma_rate(
    model: SystemModel,
    levelset: LevelSetSpec,
    grid_resolution: int,
    safety: float = INF_SAFETY_DEFAULT,
) -> float:
    """Certified linear decay rate: inf of -LfV(x, kappa(x)) / v(x), deflated."""
    if grid_resolution < 8:
        raise ValueError(f"grid_resolution must be >= 8, got {grid_resolution}")
    pts = sample_level_set(model, levelset, grid_resolution)
    mask = _margin_mask(model, pts, levelset)
    pts = pts[mask]
    lie, _ = _closed_loop_ratios(model, pts)
    rate = safety * float(np.min(-lie / model.v(pts)))
    if rate <= 0:
        raise CertificationError(f"no positive decay rate certified (rate = {rate})")
    return rate


# --- sigma-MASP and certified constants ------------------------------------

def mu_from_lipschitz(L1c: float, L2c: float) -> float:
    """mu_c = sqrt(e) * max{L1, L2 * (1 + L1 * sqrt(e))}."""
    return _SQRT_E * max(L1c, L2c * (1.0 + L1c * _SQRT_E))


def sigma_masp(sigma: float, mu_c: float, M_max_c: float, L1c: float) -> Tuple[float, str]:
    """Sampling-period bound: min of the decrease term and the Lipschitz term.

    Returns the bound and which term is active ("decrease" or "lipschitz").
    """
    if not 0 < sigma < 1:
        raise ValueError(f"sigma must lie in (0, 1), got {sigma}")
    first = (3.0 * (1.0 - sigma) / (2.0 * mu_c * M_max_c)) ** 2
    second = 1.0 / (1.0 + 2.0 * L1c)
    if first <= second:
        return first, "decrease"
    return second, "lipschitz"


@dataclass(frozen=True)
class CertifiedConstants:
    model: str
    c: float
    sigma: float
    L1c: float
    L2c: float
    mu_c: float
    M_max_c: float
    gamma_rate: float
    h_sigma_masp: float
    grid_resolution: int
    active_term: str
    sup_safety: float = SUP_SAFETY_DEFAULT
    inf_safety: float = INF_SAFETY_DEFAULT

    def __post_init__(self):
        for name in ("c", "L1c", "L2c", "mu_c", "M_max_c", "gamma_rate", "h_sigma_masp"):
            val = getattr(self, name)
            if not math.isfinite(val) or val < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {val}")
        if not 0 < self.sigma < 1:
            raise ValueError(f"sigma must lie in (0, 1), got {self.sigma}")
        if self.mu_c != mu_from_lipschitz(self.L1c, self.L2c):
            raise ValueError("mu_c inconsistent with L1c, L2c")
        h, active = sigma_masp(self.sigma, self.mu_c, self.M_max_c, self.L1c)
        if h != self.h_sigma_masp or active != self.active_term:
            raise ValueError("h_sigma_masp inconsistent with stored constants")


def certify(
    model: SystemModel,
    levelset: LevelSetSpec,
    sigma: float,
    grid_resolution: int = 200,
    sup_safety: float = SUP_SAFETY_DEFAULT,
    inf_safety: float = INF_SAFETY_DEFAULT,
) -> CertifiedConstants:
    """Estimate all constants on the level set and assemble the certificate."""
    L1 = estimate_L1(model, levelset, grid_resolution, safety=sup_safety)
    L2 = estimate_L2(model, levelset, grid_resolution, safety=sup_safety)
    M = estimate_M_max(model, levelset, grid_resolution, safety=sup_safety)
    rate = estimate_gamma_rate(model, levelset, grid_resolution, safety=inf_safety)
    mu = mu_from_lipschitz(L1, L2)
    h, active = sigma_masp(sigma, mu, M, L1)
    return CertifiedConstants(
        model=model.name,
        c=levelset.c,
        sigma=sigma,
        L1c=L1,
        L2c=L2,
        mu_c=mu,
        M_max_c=M,
        gamma_rate=rate,
        h_sigma_masp=h,
        grid_resolution=grid_resolution,
        active_term=active,
        sup_safety=sup_safety,
        inf_safety=inf_safety,
    )


def compute_sigma_masp(constants: CertifiedConstants) -> float:
    """Recompute the bound from the stored constants (bit-exact invariant)."""
    h, _ = sigma_masp(constants.sigma, constants.mu_c, constants.M_max_c, constants.L1c)
    return h


# --- one-period Lyapunov bounds --------------------------------------------

def _growth_terms(model: SystemModel, x: np.ndarray, u_star: np.ndarray):
    x = np.asarray(x, dtype=float)
    u_star = np.asarray(u_star, dtype=float)
    fx = model.f(x, u_star)
    grad = model.v_grad(x)
    lie = np.einsum("...i,...i->...", grad, fx)
    nf = np.linalg.norm(fx, axis=-1)
    ng = np.linalg.norm(grad, axis=-1)
    return lie, ng * nf + nf * nf


def v_bound(model: SystemModel, constants: CertifiedConstants, x, u_star, m: float):
    """Upper bound on v along the frozen-input flow after time m.

    v(x) + m * LfV(x, u*) + (2/3) m^{3/2} mu_c (||v'|| ||f|| + ||f||^2);
    equals v(x) at m = 0 and over-approximates the true v for
    m <= min{(1 + 2 L1c)^{-1}, first level-set exit time}.
    """
    if m < 0:
        raise ValueError(f"m must be nonnegative, got {m}")
    lie, growth = _growth_terms(model, x, u_star)
    out = model.v(np.asarray(x, dtype=float)) + m * lie + (2.0 / 3.0) * m**1.5 * constants.mu_c * growth
    return float(out) if np.ndim(out) == 0 else out


def corollary1_deviation_bound(
    model: SystemModel, constants: CertifiedConstants, x0, u_star, t: float
):
    """Bound on |LfV(x(t), u*) - LfV(x0, u*)| along the frozen-input flow."""
    t_max = 1.0 / (1.0 + 2.0 * constants.L1c)
    if not 0 <= t <= t_max:
        raise ValueError(f"t must lie in [0, {t_max}], got {t}")
    _, growth = _growth_terms(model, x0, u_star)
    out = math.sqrt(t) * constants.mu_c * growth
    return float(out) if np.ndim(out) == 0 else out


# --- manifest I/O -----------------------------------------------------------

_MANIFEST_FIELDS = (
    ("model", str),
    ("c", float),
    ("sigma", float),
    ("grid_resolution", int),
    ("L1c", float),
    ("L2c", float),
    ("mu_c", float),
    ("M_max_c", float),
    ("gamma_rate", float),
    ("h_sigma_masp", float),
    ("active_term", str),
    ("sup_safety", float),
    ("inf_safety", float),
)


def format_float(v: float) -> str:
    return f"{v:.17g}"


def save_constants(constants: CertifiedConstants, path) -> None:
    lines = []
    for name, kind in _MANIFEST_FIELDS:
        val = getattr(constants, name)
        lines.append(f"{name} = {format_float(val) if kind is float else val}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_constants(path) -> CertifiedConstants:
    fields = {}
    kinds = dict(_MANIFEST_FIELDS)
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, _, raw = line.partition("=")
        key = key.strip()
        if key not in kinds:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        fields[key] = kinds[key](raw.strip())
    missing = [k for k, _ in _MANIFEST_FIELDS if k not in fields]
    if missing:
        raise ValueError(f"{path}: missing keys {missing}")
    return CertifiedConstants(**fields)

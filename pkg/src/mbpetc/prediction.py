"""Sampled-data prediction maps used at the actuator between transmissions.

Every kind implements the same one-step interface: given the current
predicted state, return the prediction one sampling period later.  All kinds
fix the origin (required for the closed loop to keep the origin as an
equilibrium) and are pure and reentrant.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .dynamics import LevelSetSpec, SystemModel
from .errors import PredictionDomainError
from .integrate import rk4_step
from . import certificates

ZOH = "zoh"
SCALED_EULER = "scaled_euler"
RUNGE_KUTTA4 = "rk4"
LOOKUP_TABLE = "lookup"
REFERENCE_EXACT = "reference"

KINDS = (ZOH, SCALED_EULER, RUNGE_KUTTA4, LOOKUP_TABLE, REFERENCE_EXACT)

_TABLE_MAGIC = b"MBPT"
_TABLE_VERSION = 1


@dataclass(frozen=True)
class LookupTable:
    """Multilinear interpolation of one-step reference images on a box grid.

    The grid has an odd number of nodes per axis on a symmetric box so the
    origin is a node; its value is pinned to zero.  Queries outside the box
    raise :class:`PredictionDomainError` instead of extrapolating.
    """

    lo: np.ndarray
    hi: np.ndarray
    values: np.ndarray  # shape grid_shape + (state_dim,)

    def __post_init__(self):
        axes = tuple(
            np.linspace(self.lo[i], self.hi[i], self.values.shape[i])
            for i in range(len(self.lo))
        )
        object.__setattr__(
            self,
            "_interp",
            RegularGridInterpolator(axes, self.values, method="linear", bounds_error=True),
        )

    def __call__(self, x: np.ndarray) -> np.ndarray:
        try:
            out = self._interp(x)
        except ValueError as exc:
            raise PredictionDomainError(f"query outside table box: {x}") from exc
        return out[0] if np.ndim(x) == 1 else out


@dataclass(frozen=True)
class PredictionModel:
    kind: str
    step: float
    model: Optional[SystemModel] = None
    scale: float = 1.0  # Euler overshoot factor
    substeps: int = 100  # reference sub-step count
    table: Optional[LookupTable] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown prediction kind {self.kind!r}; known: {KINDS}")
        if self.step <= 0:
            raise ValueError(f"step must be positive, got {self.step}")
        if self.kind in (SCALED_EULER, RUNGE_KUTTA4, REFERENCE_EXACT) and self.model is None:
            raise ValueError(f"kind {self.kind!r} requires a system model")
        if self.kind == LOOKUP_TABLE and self.table is None:
            raise ValueError("lookup kind requires a table")
        if self.kind == REFERENCE_EXACT and self.substeps < 1:
            raise ValueError(f"substeps must be >= 1, got {self.substeps}")


def predict(pm: PredictionModel, xhat: np.ndarray) -> np.ndarray:
    """One-step prediction of the closed-loop sampled state."""
    xhat = np.asarray(xhat, dtype=float)
    if not np.all(np.isfinite(xhat)):
        raise ValueError(f"non-finite prediction state: {xhat}")
    if pm.kind == ZOH:
        return xhat
    if pm.kind == SCALED_EULER:
        m = pm.model
        return xhat + (pm.scale * pm.step) * m.f(xhat, m.kappa(xhat))
    if pm.kind == RUNGE_KUTTA4:
        return rk4_step(pm.model.closed_loop, xhat, pm.step)
    if pm.kind == REFERENCE_EXACT:
        x = xhat
        dt = pm.step / pm.substeps
        for _ in range(pm.substeps):
            x = rk4_step(pm.model.closed_loop, x, dt)
        return x
    return pm.table(xhat)


def build_lookup_table(
    model: SystemModel,
    levelset: LevelSetSpec,
    points_per_axis: int,
    reference: PredictionModel,
) -> PredictionModel:
    """Tabulate one-step images of a reference prediction over the level set.

    The box is the level-set bounding box inflated by 10% and symmetrized so
    the origin is a node (points_per_axis is rounded up to odd).
    """
    if points_per_axis < 2:
        raise ValueError(f"points_per_axis must be >= 2, got {points_per_axis}")
    if reference.kind not in (REFERENCE_EXACT, RUNGE_KUTTA4):
        raise ValueError("reference must be the reference or rk4 kind")
    npts = points_per_axis | 1  # odd, so the origin is a grid node
    hw = 1.10 * certificates.level_set_box(model, levelset.c)
    axes = [np.linspace(-w, w, npts) for w in hw]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    flat = grid.reshape(-1, model.state_dim)
    values = predict(reference, flat).reshape(grid.shape[:-1] + (model.state_dim,))
    center = tuple(npts // 2 for _ in range(model.state_dim))
    values[center] = 0.0  # pin the fixed point at the origin exactly
    table = LookupTable(lo=-hw, hi=hw, values=values)
    return PredictionModel(kind=LOOKUP_TABLE, step=reference.step, table=table)


def save_table(pm: PredictionModel, path) -> None:
    """Serialize a lookup table: versioned header + little-endian float64."""
    if pm.kind != LOOKUP_TABLE:
        raise ValueError("only lookup-table predictions are serializable")
    t = pm.table
    ndim = len(t.lo)
    with open(path, "wb") as fh:
        fh.write(_TABLE_MAGIC)
        fh.write(struct.pack("<II", _TABLE_VERSION, ndim))
        fh.write(struct.pack(f"<{ndim}I", *t.values.shape[:-1]))
        fh.write(struct.pack("<d", pm.step))
        fh.write(np.asarray(t.lo, dtype="<f8").tobytes())
        fh.write(np.asarray(t.hi, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(t.values, dtype="<f8").tobytes())


def load_table(path) -> PredictionModel:
    raw = Path(path).read_bytes()
    if raw[:4] != _TABLE_MAGIC:
        raise ValueError(f"{path}: not a lookup-table file")
    version, ndim = struct.unpack_from("<II", raw, 4)
    if version != _TABLE_VERSION:
        raise ValueError(f"{path}: unsupported table version {version}")
    off = 12
    shape = struct.unpack_from(f"<{ndim}I", raw, off)
    off += 4 * ndim
    (step,) = struct.unpack_from("<d", raw, off)
    off += 8
    lo = np.frombuffer(raw, dtype="<f8", count=ndim, offset=off).copy()
    off += 8 * ndim
    hi = np.frombuffer(raw, dtype="<f8", count=ndim, offset=off).copy()
    off += 8 * ndim
    count = int(np.prod(shape)) * ndim
    values = (
        np.frombuffer(raw, dtype="<f8", count=count, offset=off)
        .copy()
        .reshape(shape + (ndim,))
    )
    return PredictionModel(kind=LOOKUP_TABLE, step=step, table=LookupTable(lo, hi, values))

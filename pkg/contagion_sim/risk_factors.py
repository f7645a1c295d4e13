"""Paths of the systematic factor X and the Brownian increments dV driving it."""

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .model import SYSTEMATIC, RiskKind, derive_stream


@dataclass(frozen=True)
class RiskPath:
    times: np.ndarray
    x: np.ndarray
    dv: np.ndarray

    @property
    def steps(self):
        return len(self.dv)


def euler_paths(model, dv, delta):
    """Truncated Euler scheme along increments ``dv`` of shape (..., J).

    Returns X of shape (..., J + 1). The coefficients are evaluated at the left
    endpoint; CIR values are floored at zero after every step.
    """
    dv = np.asarray(dv, dtype=float)
    x = np.empty(dv.shape[:-1] + (dv.shape[-1] + 1,))
    x[..., 0] = model.x0
    if model.kind is RiskKind.NONE:
        x[...] = model.x0
        return x
    for j in range(dv.shape[-1]):
        xj = x[..., j]
        nxt = xj + model.drift(xj) * delta + model.vol(xj) * dv[..., j]
        if model.kind is RiskKind.CIR:
            nxt = np.maximum(0.0, nxt)
        x[..., j + 1] = nxt
    return x


def draw_increments(grid, rng):
    return rng.standard_normal(grid.steps) * np.sqrt(grid.delta)


def simulate_risk_path(model, grid, rng):
    """One path of X on ``grid``. dV is drawn even for an inert factor."""
    if not grid.delta > 0:
        raise ValidationError("grid.delta must be > 0")
    dv = draw_increments(grid, rng)
    return RiskPath(times=grid.times, x=euler_paths(model, dv, grid.delta), dv=dv)


def trial_risk_path(model, grid, master_seed, trial):
    """The common-noise path of one trial, shared by every limiting solver."""
    return simulate_risk_path(model, grid, derive_stream(master_seed, (SYSTEMATIC, trial, 0)))


def trial_risk_paths(model, grid, master_seed, start, stop):
    """Stacked (x, dv) for trials start..stop-1, identical to per-trial paths."""
    dv = np.stack([
        draw_increments(grid, derive_stream(master_seed, (SYSTEMATIC, trial, 0)))
        for trial in range(start, stop)
    ])
    return euler_paths(model, dv, grid.delta), dv

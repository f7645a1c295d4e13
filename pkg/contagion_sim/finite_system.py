"""Monte Carlo of the finite interacting default system by time scaling.

Intensities follow a truncated Euler scheme on the time grid; a name defaults
at the first grid point where its integrated intensity crosses its Exp(1)
clock, and every default pushes all intensities up by beta_c / N.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

import numpy as np

from .errors import ValidationError
from .model import (
    CLOCK,
    IDIOSYNCRATIC,
    LOSS_GIVEN_DEFAULT,
    LossSample,
    derive_stream,
    validate_pool,
)
from .parallel import run_chunked
from .risk_factors import trial_risk_path

logger = logging.getLogger(__name__)


class LgdKind(str, Enum):
    UNIT = "unit"
    UNIFORM = "uniform"


@dataclass(frozen=True)
class LgdSpec:
    """Loss rate at default: identically one, or i.i.d. Uniform(lo, hi) per name."""

    kind: LgdKind = LgdKind.UNIT
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", LgdKind(self.kind))
        if self.kind is LgdKind.UNIFORM and not 0.0 < self.lo <= self.hi < 1.0:
            raise ValidationError("uniform LGD needs 0 < lo <= hi < 1")

    @property
    def is_unit(self):
        return self.kind is LgdKind.UNIT

    @property
    def mean(self):
        return 1.0 if self.is_unit else 0.5 * (self.lo + self.hi)

    def draw(self, n, rng):
        if self.is_unit:
            return np.ones(n)
        return rng.uniform(self.lo, self.hi, size=n)


class TrialStreams(NamedTuple):
    clock: np.random.Generator
    idiosyncratic: np.random.Generator
    lgd: np.random.Generator


def trial_streams(master_seed, trial):
    """Per-trial pool streams; draws are laid out name-major inside each stream."""
    return TrialStreams(
        clock=derive_stream(master_seed, (CLOCK, trial, 0)),
        idiosyncratic=derive_stream(master_seed, (IDIOSYNCRATIC, trial, 0)),
        lgd=derive_stream(master_seed, (LOSS_GIVEN_DEFAULT, trial, 0)),
    )


@dataclass(frozen=True)
class TrialLossPath:
    times: np.ndarray
    loss: np.ndarray
    default_names: np.ndarray
    default_steps: np.ndarray
    intensities: np.ndarray

    @property
    def defaults(self):
        """(name index, default time) pairs in name order."""
        return [(int(n), float(self.times[j])) for n, j in zip(self.default_names, self.default_steps)]


def simulate_trial(pool, risk, lgd, grid, streams, names=None):
    """Advance all N names synchronously over the grid along one risk path.

    ``names`` may carry precomputed ``pool.name_arrays()`` when many trials
    share a pool.
    """
    if risk.steps != grid.steps:
        raise ValidationError("risk path and time grid have different step counts")
    n = pool.size
    if n == 0:
        raise ValidationError("N = 0")
    p = names if names is not None else pool.name_arrays()

    steps, delta = grid.steps, grid.delta
    sqrt_delta = np.sqrt(delta)
    clocks = streams.clock.standard_exponential(n)
    shocks = streams.idiosyncratic.standard_normal((n, steps))
    rates = lgd.draw(n, streams.lgd)
    dx = np.diff(risk.x)

    lam = p["lambda0"].copy()
    integrated = np.zeros(n)
    alive = np.ones(n, dtype=bool)
    default_step = np.full(n, -1)
    loss = np.zeros(steps + 1)
    defaulted = 0.0

    for j in range(steps):
        tentative = np.maximum(
            0.0,
            lam
            + p["alpha"] * (p["lambda_bar"] - lam) * delta
            + p["sigma"] * np.sqrt(np.maximum(0.0, lam)) * sqrt_delta * shocks[:, j]
            + p["beta_s"] * lam * dx[j],
        )
        hit = alive & (delta * (integrated + tentative) >= clocks)
        if hit.any():
            alive &= ~hit
            default_step[hit] = j + 1
            jump = float(np.count_nonzero(hit)) if lgd.is_unit else float(rates[hit].sum())
        else:
            jump = 0.0
        lam = tentative + p["beta_c"] * jump / n
        integrated += lam
        defaulted += jump
        loss[j + 1] = defaulted / n

    names_hit = np.flatnonzero(default_step >= 0)
    return TrialLossPath(
        times=grid.times,
        loss=loss,
        default_names=names_hit,
        default_steps=default_step[names_hit],
        intensities=lam,
    )


def run_finite_experiment(pool, risk_model, lgd, grid, sim, cap=None):
    """M independent trials of the finite pool; losses and X at the sample horizons.

    Trial m uses the systematic path of trial m, which is the same common-noise
    path the limiting solvers see under the same seed.
    """
    report = validate_pool(pool) if cap is None else validate_pool(pool, cap)
    report.raise_for_violations()
    names = pool.name_arrays()
    idx = grid.horizon_indices()
    logger.info(
        "finite system: N=%d, trials=%d, steps=%d, lgd=%s",
        pool.size, sim.trials, grid.steps, lgd.kind.value,
    )

    def chunk(start, stop):
        losses = np.empty((stop - start, len(idx)))
        xs = np.empty((stop - start, len(idx)))
        for row, trial in enumerate(range(start, stop)):
            risk = trial_risk_path(risk_model, grid, sim.master_seed, trial)
            path = simulate_trial(pool, risk, lgd, grid, trial_streams(sim.master_seed, trial), names)
            losses[row] = path.loss[idx]
            xs[row] = risk.x[idx]
        return losses, xs

    losses, xs = run_chunked(chunk, sim.trials, sim.parallelism)
    return LossSample(
        horizons=grid.times[idx],
        losses=losses,
        x_values=xs,
        solver="finite",
        diagnostics={"pool_size": pool.size},
    )

"""Explicit finite differences for the limiting density along one common-noise path."""

import logging
from dataclasses import dataclass, field

import numpy as np

from .deterministic import DensityGrid, conservative_operator, deterministic_operator, shared_params
from .errors import InstabilityError, ValidationError
from .model import LossSample, TimeGrid, validate_pool
from .parallel import run_chunked
from .risk_factors import trial_risk_path

logger = logging.getLogger(__name__)

DEFAULT_BLOWUP = 1.0e6
UNDERSHOOT = 1.0e-3
LOSS_SLACK = 1.0e-6


def stability_threshold(delta, beta_s, lambda_max):
    """Largest time step the explicit scheme tolerates, approximately: delta^2 / (beta_s lambda_max)^2."""
    if beta_s == 0:
        raise ValidationError(
            "stability criterion needs beta_s != 0; use the deterministic solver instead"
        )
    if not lambda_max > 0 or not delta > 0:
        raise ValidationError("stability criterion needs delta > 0 and lambda_max > 0")
    return delta ** 2 / (beta_s * lambda_max) ** 2


def cost_ratio_estimate(mesh_points, moments, target_step, delta, beta_s, lambda_max):
    """Cost of explicit FD over the moment method for a target time accuracy."""
    return (mesh_points / moments) * min(target_step * (beta_s * lambda_max) ** 2 / delta ** 2, 1.0)


@dataclass(frozen=True)
class SpdeFdConfig:
    density: DensityGrid = field(default_factory=DensityGrid)
    time: TimeGrid = None
    blowup: float = DEFAULT_BLOWUP

    def __post_init__(self):
        if self.time is None:
            raise ValidationError("explicit scheme needs a time grid")
        if not self.blowup > 0:
            raise ValidationError("blow-up bound must be > 0")


@dataclass(frozen=True)
class SpdeSolution:
    times: np.ndarray
    loss: np.ndarray
    density: np.ndarray
    undershoots: int = 0
    clipped: int = 0


def _check_stability(params, cfg, risk_model):
    if params.beta_s == 0 or not risk_model.is_active:
        return
    threshold = stability_threshold(cfg.density.mesh, params.beta_s, cfg.density.lambda_max)
    if cfg.time.delta > threshold:
        logger.warning(
            "time step %g exceeds the stability threshold %g of the explicit scheme",
            cfg.time.delta, threshold,
        )


def systematic_operator(grid, spread, velocity):
    """Common-noise part of one explicit step in flux form.

    Face flux velocity * lambda v (central) minus d(1/2 spread^2 lambda^2 v)/dlambda,
    where ``velocity`` already carries the noise increment divided by the step.
    """
    faces = grid.faces
    spread_term = 0.5 * spread ** 2 * grid.lambdas ** 2 / grid.mesh
    out = 0.5 * velocity * faces + spread_term[:-1]
    into = -0.5 * velocity * faces + spread_term[1:]
    return conservative_operator(grid, out, into)


def solve_spde_explicit(pool, cfg, risk, risk_model, check=True):
    """Advance the projected initial density by explicit steps of the flux-form scheme.

    Coefficients at step i use X_{i-1} and the increment dV_i. The integral
    term is beta_c times the trapezoid first moment of the previous density.
    No flux leaves the mesh, so the loss only moves through defaults; it is
    reported clipped to [0, 1].
    """
    params = shared_params(pool)
    if risk.steps != cfg.time.steps:
        raise ValidationError("risk path and time grid have different step counts")
    if check:
        _check_stability(params, cfg, risk_model)

    grid = cfg.density
    delta = cfg.time.delta

    v = grid.project(pool)
    loss = np.empty(cfg.time.steps + 1)
    loss[0] = 1.0 - grid.mass(v)
    undershoots = 0
    clipped = 0

    for i in range(cfg.time.steps):
        x = risk.x[i]
        level = params.beta_c * grid.first_moment(v)
        generator = deterministic_operator(params, grid, level)
        if params.beta_s != 0:
            vol = float(risk_model.vol(x))
            spread = params.beta_s * vol
            velocity = params.beta_s * (float(risk_model.drift(x)) + vol * risk.dv[i] / delta)
            generator = generator + systematic_operator(grid, spread, velocity)
        v = v + delta * generator.apply(v)

        peak = np.max(np.abs(v))
        if not np.isfinite(peak) or peak > cfg.blowup:
            raise InstabilityError()
        if v.min() < -UNDERSHOOT * v.max():
            undershoots += 1
            if undershoots == 1:
                logger.warning("density undershoot %.3g at t=%g", v.min(), (i + 1) * delta)
        value = 1.0 - grid.mass(v)
        if not -LOSS_SLACK <= value <= 1.0 + LOSS_SLACK:
            clipped += 1
            if clipped == 1:
                logger.warning("loss %.6g outside [0, 1] at t=%g, clipped", value, (i + 1) * delta)
        loss[i + 1] = min(max(value, 0.0), 1.0)

    return SpdeSolution(times=cfg.time.times, loss=loss, density=v, undershoots=undershoots, clipped=clipped)


def simulate_spde_loss(pool, risk_model, cfg, sim):
    """Explicit-scheme losses along the common-noise path of every trial."""
    validate_pool(pool).raise_for_violations()
    params = shared_params(pool)
    _check_stability(params, cfg, risk_model)
    idx = cfg.time.horizon_indices()
    logger.info(
        "explicit SPDE: trials=%d, mesh=%g, lambda_max=%g, steps=%d",
        sim.trials, cfg.density.mesh, cfg.density.lambda_max, cfg.time.steps,
    )

    def chunk(start, stop):
        losses = np.empty((stop - start, len(idx)))
        xs = np.empty((stop - start, len(idx)))
        undershoots = np.zeros(stop - start)
        clipped = np.zeros(stop - start)
        for row, trial in enumerate(range(start, stop)):
            risk = trial_risk_path(risk_model, cfg.time, sim.master_seed, trial)
            solution = solve_spde_explicit(pool, cfg, risk, risk_model, check=False)
            losses[row] = solution.loss[idx]
            xs[row] = risk.x[idx]
            undershoots[row] = solution.undershoots
            clipped[row] = solution.clipped
        return losses, xs, undershoots, clipped

    losses, xs, undershoots, clipped = run_chunked(chunk, sim.trials, sim.parallelism)
    return LossSample(
        horizons=cfg.time.times[idx],
        losses=losses,
        x_values=xs,
        solver="spde-fd",
        diagnostics={"undershoot_steps": int(undershoots.sum()), "clipped_steps": int(clipped.sum())},
    )

"""Picard iteration for the contagion rate Q(t) of the mean-field limit.

Given a fixed common-noise path, an effective intensity lambda* of a typical
name solves

    d lambda* = (-alpha (lambda* - lambda_bar) + Q(t)) dt + sigma sqrt(lambda*) dW*
                + beta_s lambda* dX

and Q must equal the pool-wide expected default rate of that same name,
Q(t) = sum_b w_b beta_c E[lambda*_t exp(-int_0^t lambda*)]. The conditional
expectation over W* is estimated with ``inner_trials`` paths per bucket whose
noise is re-drawn from the same seed on every sweep, so the map Q -> Q' is
deterministic and the sup-norm stopping rule is meaningful.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, ValidationError
from .finite_system import LgdSpec
from .model import INNER, LossSample, derive_stream, validate_pool
from .parallel import run_chunked
from .risk_factors import trial_risk_path

logger = logging.getLogger(__name__)

DEFAULT_MAX_ITER = 50


@dataclass(frozen=True)
class ContagionRate:
    q: np.ndarray
    iterations: int
    final_change: float
    changes: tuple = field(default_factory=tuple)


@dataclass(frozen=True)
class FixedPointSolution:
    rate: ContagionRate
    times: np.ndarray
    loss: np.ndarray
    loss_se: np.ndarray
    survival: np.ndarray


def _sweep(q, params, risk, delta, inner_trials, master_seed, path_index, lgd_mean):
    """One application of the map: simulate lambda* under q and estimate Q', loss and its error.

    Survival to t_j is exp(-delta * sum_{i<j} lambda*_i), the left sum that the
    Euler update u_0 -= delta * u_1 of the moment cascade also uses.
    """
    a, lb, sig = params["alpha"], params["lambda_bar"], params["sigma"]
    bc, bs, weights = params["beta_c"], params["beta_s"], params["weights"]
    buckets = len(weights)
    steps = len(risk.dv)
    sqrt_delta = np.sqrt(delta)
    dx = np.diff(risk.x)
    streams = [derive_stream(master_seed, (INNER, path_index, b)) for b in range(buckets)]

    lam = np.repeat(params["lambda0"], inner_trials, axis=1)
    integrated = np.zeros_like(lam)
    q_new = np.empty(steps + 1)
    survival = np.empty((buckets, steps + 1))
    variance = np.empty((buckets, steps + 1))

    for j in range(steps + 1):
        alive = np.exp(-integrated)
        q_new[j] = lgd_mean * float(np.sum(weights * bc[:, 0] * np.mean(lam * alive, axis=1)))
        survival[:, j] = alive.mean(axis=1)
        variance[:, j] = alive.var(axis=1, ddof=1) if inner_trials > 1 else 0.0
        if j == steps:
            break
        shocks = np.stack([rng.standard_normal(inner_trials) for rng in streams])
        integrated += lam * delta
        lam = np.maximum(
            0.0,
            lam
            + (-a * (lam - lb) + q[j]) * delta
            + sig * np.sqrt(lam) * sqrt_delta * shocks
            + bs * lam * dx[j],
        )

    loss = lgd_mean * (1.0 - weights @ survival)
    loss_se = lgd_mean * np.sqrt((weights ** 2) @ variance / inner_trials)
    return q_new, loss, loss_se, weights @ survival


def solve_fixed_point(pool, risk_model, risk, grid, inner_trials, tol=1e-4,
                      max_iter=DEFAULT_MAX_ITER, master_seed=0, path_index=0, lgd=None):
    """Iterate Q from zero until successive iterates differ by less than ``tol``.

    ``risk_model`` is accepted for symmetry with the other solvers; only the
    realised path enters the effective equation.
    """
    if not tol > 0:
        raise ValidationError("fixed point tol must be > 0")
    if inner_trials < 1:
        raise ValidationError("inner_trials must be >= 1")
    if max_iter < 1:
        raise ValidationError("max_iter must be >= 1")
    if risk.steps != grid.steps:
        raise ValidationError("risk path and time grid have different step counts")

    params = pool.bucket_arrays()
    params["weights"] = pool.bucket_weights()
    lgd_mean = (lgd or LgdSpec()).mean

    q = np.zeros(grid.steps + 1)
    changes = []
    for iteration in range(1, max_iter + 1):
        q_new, loss, loss_se, survival = _sweep(
            q, params, risk, grid.delta, inner_trials, master_seed, path_index, lgd_mean
        )
        change = float(np.max(np.abs(q_new - q)))
        changes.append(change)
        q = q_new
        logger.debug("picard sweep %d: sup change %.3g", iteration, change)
        if iteration > 2 and change > changes[-2]:
            logger.warning("picard change grew from %.3g to %.3g at sweep %d", changes[-2], change, iteration)
        if change < tol:
            rate = ContagionRate(q=q, iterations=iteration, final_change=change, changes=tuple(changes))
            return FixedPointSolution(rate, grid.times, loss, loss_se, survival)
    raise ConvergenceError(f"no convergence after {max_iter} sweeps (last change {changes[-1]:.3g})")


def simulate_fixed_point_loss(pool, risk_model, grid, sim, inner_trials, tol=1e-4,
                              max_iter=DEFAULT_MAX_ITER, lgd=None):
    """Fixed-point losses along the common-noise path of every trial."""
    validate_pool(pool).raise_for_violations()
    idx = grid.horizon_indices()
    logger.info(
        "fixed point: trials=%d, inner=%d, tol=%g, steps=%d",
        sim.trials, inner_trials, tol, grid.steps,
    )

    def chunk(start, stop):
        losses = np.empty((stop - start, len(idx)))
        errors = np.empty((stop - start, len(idx)))
        xs = np.empty((stop - start, len(idx)))
        sweeps = np.empty(stop - start)
        for row, trial in enumerate(range(start, stop)):
            risk = trial_risk_path(risk_model, grid, sim.master_seed, trial)
            solution = solve_fixed_point(
                pool, risk_model, risk, grid, inner_trials, tol, max_iter,
                master_seed=sim.master_seed, path_index=trial, lgd=lgd,
            )
            losses[row] = solution.loss[idx]
            errors[row] = solution.loss_se[idx]
            xs[row] = risk.x[idx]
            sweeps[row] = solution.rate.iterations
        return losses, xs, errors, sweeps

    losses, xs, errors, sweeps = run_chunked(chunk, sim.trials, sim.parallelism)
    return LossSample(
        horizons=grid.times[idx],
        losses=losses,
        x_values=xs,
        solver="fixed-point",
        diagnostics={
            "inner_trials": inner_trials,
            "max_sweeps": int(sweeps.max()),
            "mean_loss_se": float(errors.mean()),
        },
    )

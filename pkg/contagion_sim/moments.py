"""Method of moments for the limiting density.

The moments u_k(t) = int lambda^k v(t, lambda) dlambda of the limiting density
solve a hierarchy of SDEs driven by the single common noise V. The hierarchy is
closed at level K with u_{K+1} := u_K and integrated by Euler-Maruyama along a
risk path. The limiting loss is 1 - u_0 (times the mean LGD).

Three integrations of the same system are offered:

* ``plain``: the moments themselves, negative values clamped to zero.
* ``transformed``: w_k = u_k exp(-1/2 beta_s^2 k(k-1) int sigma0^2 ds), which
  removes the exponential growth term that destabilises high moments.
* ``canonical``: u_0 and eta_k = X - log(u_k) / (k beta_s), a system of random
  ODEs with no diffusion term. Needs beta_s > 0 and positive moments.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

import numpy as np

from .errors import NumericalError, ValidationError
from .finite_system import LgdSpec
from .model import LossSample, validate_pool
from .parallel import run_chunked
from .risk_factors import trial_risk_paths

logger = logging.getLogger(__name__)

U0_CEILING = 1.0 + 1e-6


class Variant(str, Enum):
    PLAIN = "plain"
    TRANSFORMED = "transformed"
    CANONICAL = "canonical"


class BucketParams(NamedTuple):
    """Per-bucket parameter columns of shape (B, 1)."""

    alpha: np.ndarray
    lambda_bar: np.ndarray
    sigma: np.ndarray
    beta_c: np.ndarray
    beta_s: np.ndarray
    lambda0: np.ndarray
    weights: np.ndarray

    @classmethod
    def from_pool(cls, pool):
        cols = pool.bucket_arrays()
        return cls(weights=pool.bucket_weights(), **cols)


@dataclass(frozen=True)
class MomentState:
    """Moments u[..., b, k] of every bucket b, plus clamp bookkeeping.

    A homogeneous pool is the single-bucket case; the coupling is then u_1.
    """

    u: np.ndarray
    weights: np.ndarray
    clamped: np.ndarray
    clamp_count: int = 0
    excursions: int = 0

    @property
    def K(self):
        return self.u.shape[-1] - 1

    def coupling(self):
        """Pool-wide first moment sum_b w_b u_1^(b)."""
        return (self.u[..., 1] * self.weights).sum(axis=-1)

    def survival(self):
        return (self.u[..., 0] * self.weights).sum(axis=-1)

    @classmethod
    def initial(cls, params, K, trials=None):
        """Point-mass initial data: u_k(0) = lambda0^k in every bucket."""
        u = params.lambda0 ** np.arange(K + 1)
        if trials is not None:
            u = np.broadcast_to(u, (trials,) + u.shape).copy()
        return cls(u=u, weights=params.weights, clamped=np.zeros(u.shape, dtype=bool))


def moment_drift_diff(k, u, params, x, coupling, risk_model, lgd_mean=1.0):
    """Drift and dV-loading of the k-th moment equation.

    ``u`` has the moment index last; ``x`` and ``coupling`` broadcast against
    ``u[..., 0]``. ``k`` may be an int or an index array. ``params`` is a
    NameParams or BucketParams.
    """
    u = np.asarray(u, dtype=float)
    k = np.asarray(k)
    x = np.asarray(x, dtype=float)[..., None]
    coupling = np.asarray(coupling, dtype=float)[..., None]

    padded = np.concatenate([np.zeros(u.shape[:-1] + (1,)), u, u[..., -1:]], axis=-1)
    u_k = padded[..., k + 1]
    u_below = padded[..., k]
    u_above = padded[..., k + 2]

    b0 = risk_model.drift(x)
    s0 = risk_model.vol(x)
    a, lb, sig = params.alpha, params.lambda_bar, params.sigma
    bc, bs = params.beta_c, params.beta_s

    drift = (
        u_k * (-a * k + bs * b0 * k + 0.5 * bs ** 2 * s0 ** 2 * k * (k - 1))
        + u_below * (0.5 * sig ** 2 * k * (k - 1) + a * lb * k + bc * lgd_mean * k * coupling)
        - u_above
    )
    loading = bs * s0 * k * u_k
    return drift, loading


def _leading(value, u):
    value = np.asarray(value, dtype=float)
    return value.reshape(value.shape + (1,) * (u.ndim - 1 - value.ndim))


def _clamp(state, u_new):
    survival = u_new[..., 0]
    excursions = int(np.count_nonzero((survival < 0) | (survival > U0_CEILING)))
    negative = u_new < 0
    if negative.any():
        u_new = np.where(negative, 0.0, u_new)
    return MomentState(
        u=u_new,
        weights=state.weights,
        clamped=negative,
        clamp_count=state.clamp_count + int(np.count_nonzero(negative)),
        excursions=state.excursions + excursions,
    )


def step_moments(state, params, x, dv, delta, risk_model, lgd_mean=1.0):
    """One Euler-Maruyama step of the truncated system, then clamp negatives to 0.

    u_0 leaving [0, 1 + 1e-6] is counted in ``excursions``, not raised.
    """
    if not delta > 0:
        raise ValidationError("time step must be > 0")
    u = state.u
    ks = np.arange(state.K + 1)
    drift, loading = moment_drift_diff(
        ks, u, params, _leading(x, u), _leading(state.coupling(), u), risk_model, lgd_mean
    )
    return _clamp(state, u + drift * delta + loading * _leading(dv, u)[..., None])


def step_transformed(state, sigma0_sq_integral, params, x, dv, delta, risk_model, lgd_mean=1.0):
    """Euler step carried out on w_k; returns the state mapped back to u_k.

    ``sigma0_sq_integral`` is the left Riemann sum of sigma0(X)^2 up to t_j.
    """
    u = state.u
    ks = np.arange(state.K + 1)
    growth = 0.5 * params.beta_s ** 2 * ks * (ks - 1)
    x_ = _leading(x, u)
    s_before = _leading(sigma0_sq_integral, u)[..., None]
    s0_sq = risk_model.vol(x_)[..., None] ** 2

    damping = np.exp(-growth * s_before)
    w = u * damping
    drift, loading = moment_drift_diff(
        ks, u, params, x_, _leading(state.coupling(), u), risk_model, lgd_mean
    )
    w_new = w + damping * ((drift - growth * s0_sq * u) * delta + loading * _leading(dv, u)[..., None])
    s_after = s_before + s0_sq * delta
    # w and u share signs, so clamping u after the map back clamps w
    return _clamp(state, w_new * np.exp(growth * s_after))


@dataclass(frozen=True)
class MomentRun:
    """Full-grid output of one batch of paths: loss and pool first moment, (trials, J + 1)."""

    loss: np.ndarray
    first_moment: np.ndarray
    clamp_count: int = 0
    excursions: int = 0


def _integrate_moments(params, risk_model, x, dv, delta, K, variant, lgd_mean):
    trials, steps = dv.shape
    state = MomentState.initial(params, K, trials)
    loss = np.empty((trials, steps + 1))
    first = np.empty((trials, steps + 1))
    sigma0_sq_integral = np.zeros(trials)
    loss[:, 0] = lgd_mean * (1.0 - state.survival())
    first[:, 0] = state.coupling()
    for j in range(steps):
        if variant is Variant.TRANSFORMED:
            state = step_transformed(
                state, sigma0_sq_integral, params, x[:, j], dv[:, j], delta, risk_model, lgd_mean
            )
            sigma0_sq_integral = sigma0_sq_integral + risk_model.vol(x[:, j]) ** 2 * delta
        else:
            state = step_moments(state, params, x[:, j], dv[:, j], delta, risk_model, lgd_mean)
        loss[:, j + 1] = lgd_mean * (1.0 - state.survival())
        first[:, j + 1] = state.coupling()
    return MomentRun(loss, first, state.clamp_count, state.excursions)


def _integrate_canonical(params, risk_model, x, delta, K, lgd_mean):
    bs = params.beta_s
    if np.any(bs <= 0):
        raise ValidationError("canonical moments need beta_s > 0")
    if np.any(params.lambda0 <= 0):
        raise ValidationError("canonical moments need strictly positive moments (lambda0 > 0)")

    trials, steps = x.shape[0], x.shape[1] - 1
    ks = np.arange(1, K + 1)
    weights = params.weights
    u0 = np.ones((trials, len(weights)))
    # eta_k(0) = x0 - log(lambda0^k) / (k beta_s) = x0 - log(lambda0) / beta_s
    eta = np.broadcast_to(x[:, :1, None] - np.log(params.lambda0) / bs, (trials, len(weights), K)).copy()

    loss = np.empty((trials, steps + 1))
    first = np.empty((trials, steps + 1))

    def log_moments(xj):
        return ks * bs * (xj[:, None, None] - eta)

    for j in range(steps + 1):
        log_u = log_moments(x[:, j])
        u1 = np.exp(log_u[..., 0])
        coupling = (u1 * weights).sum(axis=-1)
        loss[:, j] = lgd_mean * (1.0 - (u0 * weights).sum(axis=-1))
        first[:, j] = coupling
        if j == steps:
            break
        if np.any(u0 <= 0):
            raise NumericalError("canonical moments: u_0 reached zero")

        xj = x[:, j][:, None, None]
        b0 = risk_model.drift(xj)
        s0_sq = risk_model.vol(xj) ** 2
        log_below = np.concatenate([np.log(u0)[..., None], log_u[..., :-1]], axis=-1)
        log_above = np.concatenate([log_u[..., 1:], log_u[..., -1:]], axis=-1)
        ratio_below = np.exp(log_below - log_u)
        ratio_above = np.exp(log_above - log_u)
        bracket = (
            -params.alpha
            + bs * b0
            + 0.5 * bs ** 2 * s0_sq * (ks - 1)
            + ratio_below * (
                0.5 * params.sigma ** 2 * (ks - 1)
                + params.alpha * params.lambda_bar
                + params.beta_c * lgd_mean * coupling[:, None, None]
            )
            - ratio_above / ks
        )
        d_eta = b0 + 0.5 * ks * bs * s0_sq - bracket / bs
        u0 = u0 - u1 * delta
        eta = eta + d_eta * delta
    return MomentRun(loss, first)


def solve_moment_paths(pool, risk_model, x, dv, grid, K, variant=Variant.PLAIN, lgd=None):
    """Integrate the moment system along given risk paths x (M, J+1), dv (M, J)."""
    if K < 1:
        raise ValidationError("moment truncation K must be >= 1")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    dv = np.atleast_2d(np.asarray(dv, dtype=float))
    if dv.shape[1] != grid.steps or x.shape[1] != grid.steps + 1:
        raise ValidationError("risk path and time grid have different step counts")
    variant = Variant(variant)
    params = BucketParams.from_pool(pool)
    lgd_mean = (lgd or LgdSpec()).mean
    if variant is Variant.CANONICAL:
        return _integrate_canonical(params, risk_model, x, grid.delta, K, lgd_mean)
    return _integrate_moments(params, risk_model, x, dv, grid.delta, K, variant, lgd_mean)


def simulate_limiting_loss(pool, risk_model, grid, K, sim, variant=Variant.PLAIN, lgd=None):
    """Samples of the limiting loss, one common-noise path per trial."""
    validate_pool(pool).raise_for_violations()
    variant = Variant(variant)
    idx = grid.horizon_indices()
    logger.info(
        "moment method: K=%d, variant=%s, buckets=%d, trials=%d, steps=%d",
        K, variant.value, len(pool.entries), sim.trials, grid.steps,
    )

    def chunk(start, stop):
        x, dv = trial_risk_paths(risk_model, grid, sim.master_seed, start, stop)
        run = solve_moment_paths(pool, risk_model, x, dv, grid, K, variant, lgd)
        return run.loss[:, idx], x[:, idx], np.array([run.clamp_count]), np.array([run.excursions])

    losses, xs, clamps, excursions = run_chunked(chunk, sim.trials, sim.parallelism)
    clamp_count, excursion_count = int(clamps.sum()), int(excursions.sum())
    if clamp_count:
        logger.warning("moment method clamped %d negative moments to zero", clamp_count)
    if excursion_count:
        logger.warning("u_0 left [0, %g] %d times", U0_CEILING, excursion_count)
    return LossSample(
        horizons=grid.times[idx],
        losses=losses,
        x_values=xs,
        solver="moments",
        diagnostics={"K": K, "variant": variant.value, "clamps": clamp_count, "excursions": excursion_count},
    )

"""Reference solutions when the systematic sensitivity beta_s is zero.

* Without contagion the default times are independent and the loss has a
  closed form through the Riccati pair (A, B) of the CIR intensity.
* With contagion the limiting density solves a deterministic quasi-linear PDE,
  integrated here by a Crank-Nicolson scheme whose integral term is updated by
  predictor-corrector sweeps.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid
from scipy.linalg import LinAlgError, solve_banded

from .errors import NumericalError, ValidationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RiccatiCoefficients:
    """Closed-form exponent pair for one parameter set: survival = exp(A(t) + B(t) lambda0)."""

    alpha: float
    lambda_bar: float
    sigma: float

    def __post_init__(self):
        if self.sigma == 0:
            raise ValidationError(
                "closed form degenerates for sigma = 0; use the moment cascade instead"
            )

    @property
    def gamma(self):
        return math.sqrt(self.alpha ** 2 + 2 * self.sigma ** 2)

    @property
    def c1(self):
        return math.atanh(-self.alpha / self.gamma)

    @property
    def c2(self):
        return self.alpha / self.sigma ** 2

    @property
    def d1(self):
        return self.gamma / self.sigma ** 2

    @property
    def d2(self):
        return -self.alpha * self.lambda_bar

    def B(self, t):
        t = np.asarray(t, dtype=float)
        return (self.alpha + self.gamma * np.tanh(-0.5 * self.gamma * t + self.c1)) / self.sigma ** 2

    def A(self, t):
        t = np.asarray(t, dtype=float)
        z = -0.5 * self.gamma * t + self.c1
        log_ratio = _log_cosh(z) - _log_cosh(self.c1)
        return -self.c2 * self.d2 * t + (2 * self.d1 * self.d2 / self.gamma) * log_ratio


def _log_cosh(z):
    z = np.abs(np.asarray(z, dtype=float))
    return z + np.log1p(np.exp(-2 * z)) - math.log(2.0)


def analytic_no_feedback_loss(pool, t):
    """Loss 1 - sum_b w_b exp(A_b(t) + B_b(t) lambda0_b) of independent CIR names."""
    weights = pool.bucket_weights()
    survival = 0.0
    for weight, entry in zip(weights, pool.entries):
        p = entry.params
        if p.beta_c != 0 or p.beta_s != 0:
            raise ValidationError("closed form needs beta_c = beta_s = 0")
        riccati = RiccatiCoefficients(p.alpha, p.lambda_bar, p.sigma)
        survival = survival + weight * np.exp(riccati.A(t) + riccati.B(t) * entry.lambda0)
    return 1.0 - survival


@dataclass(frozen=True)
class DensityGrid:
    """Intensity mesh lambda_j = j * mesh, j = 0..intervals, with no flux through either end.

    Node j owns the control volume of its trapezoid weight, so ``mass`` is
    exactly the sum of volume times density.
    """

    mesh: float = 0.1
    lambda_max: float = 10.0

    def __post_init__(self):
        if not self.mesh > 0 or not self.lambda_max > self.mesh:
            raise ValidationError("density mesh needs 0 < mesh < lambda_max")

    @property
    def intervals(self):
        return int(round(self.lambda_max / self.mesh))

    @property
    def lambdas(self):
        return np.arange(self.intervals + 1) * self.mesh

    @property
    def faces(self):
        return (np.arange(self.intervals) + 0.5) * self.mesh

    @property
    def volumes(self):
        vol = np.full(self.intervals + 1, self.mesh)
        vol[[0, -1]] = 0.5 * self.mesh
        return vol

    def mass(self, v):
        return trapezoid(v, dx=self.mesh)

    def first_moment(self, v):
        return trapezoid(self.lambdas * v, dx=self.mesh)

    def project(self, pool):
        """Point masses at each lambda0 spread as a hat over the two bracketing nodes."""
        v = np.zeros(self.intervals + 1)
        for weight, entry in zip(pool.bucket_weights(), pool.entries):
            ratio = entry.lambda0 / self.mesh
            i = int(math.floor(ratio + 1e-9))
            theta = max(0.0, ratio - i)
            if theta < 1e-9:
                theta = 0.0
            lower, upper = (1.0 - theta) * weight, theta * weight
            if (i <= 0 and lower > 0) or i >= self.intervals or (i + 1 >= self.intervals and upper > 0):
                raise ValidationError(
                    f"lambda0={entry.lambda0} must lie strictly inside the mesh (0, {self.lambda_max})"
                )
            v[i] += lower / self.mesh
            if upper:
                v[i + 1] += upper / self.mesh
        return v


def shared_params(pool):
    first = pool.entries[0].params
    if any(entry.params != first for entry in pool.entries):
        raise ValidationError("density solvers need one parameter set (lambda0 may vary)")
    return first


@dataclass(frozen=True)
class Tridiagonal:
    """Row j reads sub[j] * v[j-1] + diag[j] * v[j] + sup[j] * v[j+1]."""

    sub: np.ndarray
    diag: np.ndarray
    sup: np.ndarray

    def __add__(self, other):
        return Tridiagonal(self.sub + other.sub, self.diag + other.diag, self.sup + other.sup)

    def scaled(self, c):
        return Tridiagonal(c * self.sub, c * self.diag, c * self.sup)

    def apply(self, v):
        out = self.diag * v
        out[1:] += self.sub[1:] * v[:-1]
        out[:-1] += self.sup[:-1] * v[1:]
        return out

    def solve_shifted(self, rhs):
        """Solve (I - self) x = rhs."""
        n = len(rhs)
        ab = np.zeros((3, n))
        ab[0, 1:] = -self.sup[:-1]
        ab[1] = 1.0 - self.diag
        ab[2, :-1] = -self.sub[1:]
        try:
            return solve_banded((1, 1), ab, rhs, check_finite=True)
        except (LinAlgError, ValueError) as exc:
            raise NumericalError(f"singular tridiagonal system: {exc}") from exc


def _bernoulli(x):
    """x / (exp(x) - 1), equal to 1 at x = 0."""
    x = np.asarray(x, dtype=float)
    out = np.ones_like(x)
    nonzero = np.abs(x) > 1e-12
    xs = x[nonzero]
    out[nonzero] = xs / np.expm1(np.minimum(xs, 700.0))
    return out


def exponential_fitting(drift, diffusion, mesh):
    """Scharfetter-Gummel face coefficients (out, in): flux = out * v_left - in * v_right.

    Both are >= 0. A face without diffusion falls back to upwinding.
    """
    drift = np.asarray(drift, dtype=float)
    diffusion = np.asarray(diffusion, dtype=float)
    positive = diffusion > 0
    peclet = drift * mesh / np.where(positive, diffusion, 1.0)
    scale = diffusion / mesh
    out = np.where(positive, scale * _bernoulli(-peclet), np.maximum(drift, 0.0))
    into = np.where(positive, scale * _bernoulli(peclet), np.maximum(-drift, 0.0))
    return out, into


def conservative_operator(grid, out, into, reaction=None):
    """Node generator of the face fluxes F_f = out[f] v[f] - into[f] v[f + 1].

    Fluxes through lambda = 0 and lambda_max are zero, so trapezoid mass only
    changes through ``reaction``.
    """
    n = grid.intervals + 1
    sub, diag, sup = np.zeros(n), np.zeros(n), np.zeros(n)
    diag[:-1] -= out
    sup[:-1] += into
    sub[1:] += out
    diag[1:] -= into
    volumes = grid.volumes
    sub, diag, sup = sub / volumes, diag / volumes, sup / volumes
    if reaction is not None:
        diag = diag - reaction
    return Tridiagonal(sub, diag, sup)


def deterministic_operator(params, grid, level=0.0):
    """Generator of the density for a frozen contagion rate ``level``.

    Flux alpha(lambda_bar - lambda) v + level v - 1/2 sigma^2 d(lambda v)/dlambda,
    plus the default term -lambda v.
    """
    faces = grid.faces
    s2 = params.sigma ** 2
    drift = params.alpha * (params.lambda_bar - faces) + level - 0.5 * s2
    out, into = exponential_fitting(drift, 0.5 * s2 * faces, grid.mesh)
    return conservative_operator(grid, out, into, reaction=grid.lambdas)


@dataclass(frozen=True)
class DensitySolution:
    times: np.ndarray
    loss: np.ndarray
    first_moment: np.ndarray
    mass: np.ndarray
    density: np.ndarray
    corrector_changes: np.ndarray = None

    def loss_at(self, horizons):
        idx = np.rint(np.asarray(horizons) / (self.times[1] - self.times[0])).astype(int)
        return self.loss[idx]


def solve_pde_predictor_corrector(pool, density_grid, time_grid, substeps=2):
    """Crank-Nicolson in the differential operators, explicit in the integral term.

    Every time step makes ``substeps`` full-step solves; solve m freezes the
    contagion rate at the average of v_j and the previous iterate. The scheme
    is conservative: trapezoid mass falls by exactly the time-averaged
    default flux of each step, so the loss is also the time integral of the
    first moment.
    """
    if substeps < 1:
        raise ValidationError("predictor-corrector substeps must be >= 1")
    params = shared_params(pool)
    if params.beta_s != 0:
        raise ValidationError("predictor-corrector PDE needs beta_s = 0")

    delta = time_grid.delta

    def integral(v):
        return params.beta_c * density_grid.first_moment(v)

    v = density_grid.project(pool)
    steps = time_grid.steps
    loss = np.empty(steps + 1)
    first = np.empty(steps + 1)
    mass = np.empty(steps + 1)
    changes = np.zeros((steps, max(substeps - 1, 0)))

    def record(j, v):
        mass[j] = density_grid.mass(v)
        loss[j] = 1.0 - mass[j]
        first[j] = density_grid.first_moment(v)

    record(0, v)
    for j in range(steps):
        iterate = v
        for m in range(substeps):
            level = integral(v) if m == 0 else integral(0.5 * (iterate + v))
            half = deterministic_operator(params, density_grid, level).scaled(0.5 * delta)
            new = half.solve_shifted(v + half.apply(v))
            if m > 0:
                changes[j, m - 1] = np.max(np.abs(new - iterate))
            iterate = new
        v = iterate
        record(j + 1, v)
        if mass[j + 1] > 1.0 + 1e-6:
            logger.warning("density mass %.8f exceeds one at t=%g", mass[j + 1], (j + 1) * delta)

    return DensitySolution(
        times=time_grid.times,
        loss=loss,
        first_moment=first,
        mass=mass,
        density=v,
        corrector_changes=changes,
    )

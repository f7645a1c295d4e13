"""Domain types, standing-condition validation and the RNG stream contract."""

import hashlib
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import pandas as pd

from .errors import ValidationError

DEFAULT_CAP = 1.0e6

# Purpose tags. Each source of randomness owns a tag so that adding trials or
# names never shifts the draws of another source.
CLOCK = "exp-clock"
IDIOSYNCRATIC = "idiosyncratic"
SYSTEMATIC = "systematic"
LOSS_GIVEN_DEFAULT = "lgd"
INNER = "inner"
BOOTSTRAP = "bootstrap"


@dataclass(frozen=True)
class NameParams:
    """Intensity parameters of one name: reversion, level, vol, contagion, systematic."""

    alpha: float
    lambda_bar: float
    sigma: float
    beta_c: float
    beta_s: float

    def as_tuple(self):
        return (self.alpha, self.lambda_bar, self.sigma, self.beta_c, self.beta_s)


@dataclass(frozen=True)
class PoolEntry:
    params: NameParams
    lambda0: float
    weight: int = 1


@dataclass(frozen=True)
class PoolSpec:
    """Empirical type / initial-intensity distribution of a pool.

    Each entry stands for ``weight`` identical names, so N is the sum of weights.
    """

    entries: tuple

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))

    @classmethod
    def homogeneous(cls, params, lambda0, size=1):
        return cls((PoolEntry(params, lambda0, size),))

    @property
    def size(self):
        return int(sum(entry.weight for entry in self.entries))

    @property
    def is_homogeneous(self):
        return len(self.entries) == 1

    def bucket_weights(self):
        """Fractions w_b = weight_b / N, in entry order."""
        counts = np.array([entry.weight for entry in self.entries], dtype=float)
        return counts / counts.sum()

    def bucket_arrays(self):
        """Parameter columns with one row per entry, shaped (B, 1) for broadcasting."""
        rows = np.array([entry.params.as_tuple() for entry in self.entries], dtype=float)
        columns = {name: rows[:, i:i + 1] for i, name in enumerate(_PARAM_NAMES)}
        columns["lambda0"] = np.array([[entry.lambda0] for entry in self.entries], dtype=float)
        return columns

    def name_arrays(self):
        """Parameter vectors of length N, one value per name, entries in order."""
        counts = [entry.weight for entry in self.entries]
        columns = {}
        for i, name in enumerate(_PARAM_NAMES):
            values = [entry.params.as_tuple()[i] for entry in self.entries]
            columns[name] = np.repeat(np.array(values, dtype=float), counts)
        columns["lambda0"] = np.repeat(
            np.array([entry.lambda0 for entry in self.entries], dtype=float), counts
        )
        return columns


_PARAM_NAMES = ("alpha", "lambda_bar", "sigma", "beta_c", "beta_s")


class RiskKind(str, Enum):
    NONE = "none"
    BROWNIAN = "brownian"
    ORNSTEIN_UHLENBECK = "ou"
    CIR = "cir"


@dataclass(frozen=True)
class SystematicRiskModel:
    """Diffusion dX = b0(X)dt + sigma0(X)dV of the systematic factor."""

    kind: RiskKind = RiskKind.NONE
    x0: float = 0.0
    kappa: float = 0.0
    theta: float = 0.0
    epsilon: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", RiskKind(self.kind))
        values = (self.x0, self.kappa, self.theta, self.epsilon)
        if not all(math.isfinite(v) for v in values):
            raise ValidationError("risk model coefficients must be finite")
        if self.kind is RiskKind.CIR:
            for name in ("kappa", "theta", "epsilon"):
                if getattr(self, name) < 0:
                    raise ValidationError(f"risk.{name} must be >= 0 for a CIR factor")

    @property
    def is_active(self):
        return self.kind is not RiskKind.NONE

    def drift(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind in (RiskKind.CIR, RiskKind.ORNSTEIN_UHLENBECK):
            return self.kappa * (self.theta - x)
        return np.zeros_like(x)

    def vol(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind is RiskKind.CIR:
            return self.epsilon * np.sqrt(np.maximum(0.0, x))
        if self.kind is RiskKind.ORNSTEIN_UHLENBECK:
            return np.full_like(x, self.epsilon)
        if self.kind is RiskKind.BROWNIAN:
            return np.ones_like(x)
        return np.zeros_like(x)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_j = j*delta, j = 0..steps, with the horizons losses are recorded at."""

    delta: float
    horizon: float
    sample_horizons: tuple = ()

    def __post_init__(self):
        if not self.delta > 0:
            raise ValidationError("grid.delta must be > 0")
        if not self.horizon > 0:
            raise ValidationError("grid.horizon must be > 0")
        horizons = tuple(float(h) for h in self.sample_horizons) or (float(self.horizon),)
        object.__setattr__(self, "sample_horizons", horizons)
        self.horizon_indices()

    @property
    def steps(self):
        return int(round(self.horizon / self.delta))

    @property
    def times(self):
        return np.arange(self.steps + 1) * self.delta

    def horizon_indices(self):
        """Grid indices of the sample horizons; each horizon must sit on the grid."""
        indices = []
        for h in self.sample_horizons:
            j = int(round(h / self.delta))
            if j < 0 or j > self.steps or abs(j * self.delta - h) > 1e-9 * max(1.0, h):
                raise ValidationError(f"sample horizon {h} is not a point of the time grid")
            indices.append(j)
        return np.array(indices, dtype=int)

    def same_as(self, other):
        return self.steps == other.steps and math.isclose(self.delta, other.delta)


@dataclass(frozen=True)
class SimConfig:
    trials: int
    master_seed: int
    parallelism: int = None

    def __post_init__(self):
        if self.trials < 1:
            raise ValidationError("sim.trials must be >= 1")
        if self.master_seed < 0 or self.master_seed >= 2 ** 64:
            raise ValidationError("sim.seed must be a non-negative 64-bit integer")


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple = field(default_factory=tuple)

    @property
    def ok(self):
        return not self.violations

    def raise_for_violations(self):
        if self.violations:
            raise ValidationError("; ".join(self.violations))


def validate_pool(pool, cap=DEFAULT_CAP):
    """Check a pool against the sign constraints and the boundedness cap K."""
    violations = []
    if not pool.entries or pool.size == 0:
        violations.append("N = 0")
    for i, entry in enumerate(pool.entries):
        where = f"entry {i}"
        if not isinstance(entry.weight, (int, np.integer)) or entry.weight < 1:
            violations.append(f"{where}: weight must be a positive integer")
        fields = dict(zip(_PARAM_NAMES, entry.params.as_tuple()))
        fields["lambda0"] = entry.lambda0
        for name, value in fields.items():
            if not math.isfinite(value):
                violations.append(f"{where}: {name} not finite")
                continue
            if name != "beta_s" and value < 0:
                violations.append(f"{where}: {name} negative")
            if abs(value) > cap:
                violations.append(f"{where}: {name} exceeds cap {cap:g}")
    return ValidationReport(tuple(violations))


def _tag_code(tag):
    return int.from_bytes(hashlib.blake2b(tag.encode("utf-8"), digest_size=4).digest(), "little")


def derive_stream(master_seed, stream_id):
    """Generator for ``(purpose_tag, trial_index, name_index)`` under ``master_seed``.

    The id becomes a SeedSequence spawn key, so distinct ids give independent
    streams and the same id always gives the same stream.
    """
    tag, trial, name = stream_id
    if trial < 0 or name < 0:
        raise ValidationError("stream indices must be non-negative")
    seq = np.random.SeedSequence(
        entropy=int(master_seed) % 2 ** 64,
        spawn_key=(_tag_code(tag), int(trial), int(name)),
    )
    return np.random.Generator(np.random.PCG64(seq))


@dataclass(frozen=True)
class LossSample:
    """Per-trial losses (and matched X values) at the sample horizons.

    ``losses`` and ``x_values`` have shape (trials, horizons).
    """

    horizons: np.ndarray
    losses: np.ndarray
    x_values: np.ndarray
    solver: str = ""
    diagnostics: dict = field(default_factory=dict)

    @property
    def trials(self):
        return self.losses.shape[0]

    def column(self, horizon):
        j = int(np.argmin(np.abs(self.horizons - horizon)))
        if not math.isclose(self.horizons[j], horizon, rel_tol=1e-9, abs_tol=1e-12):
            raise ValidationError(f"horizon {horizon} was not sampled")
        return self.losses[:, j], self.x_values[:, j]

    def to_frame(self):
        m, h = self.losses.shape
        return pd.DataFrame({
            "trial": np.repeat(np.arange(m), h),
            "horizon": np.tile(self.horizons, m),
            "loss": self.losses.reshape(-1),
            "x_value": self.x_values.reshape(-1),
        })

    @classmethod
    def from_frame(cls, frame, solver=""):
        missing = {"trial", "horizon", "loss", "x_value"} - set(frame.columns)
        if missing:
            raise ValidationError(f"sample file lacks columns: {sorted(missing)}")
        frame = frame.sort_values(["trial", "horizon"], kind="mergesort")
        horizons = np.unique(frame["horizon"].to_numpy(dtype=float))
        m = frame["trial"].nunique()
        if len(frame) != m * len(horizons):
            raise ValidationError("sample file is not a complete trial x horizon table")
        shape = (m, len(horizons))
        return cls(
            horizons=horizons,
            losses=frame["loss"].to_numpy(dtype=float).reshape(shape),
            x_values=frame["x_value"].to_numpy(dtype=float).reshape(shape),
            solver=solver,
        )

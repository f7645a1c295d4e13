"""Experiment configuration: YAML files validated by pydantic, mapped onto domain types."""

import logging
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from pydantic import ValidationError as SchemaError

from .deterministic import DensityGrid
from .errors import ValidationError
from .finite_system import LgdKind, LgdSpec
from .model import (
    DEFAULT_CAP,
    NameParams,
    PoolEntry,
    PoolSpec,
    RiskKind,
    SimConfig,
    SystematicRiskModel,
    TimeGrid,
)
from .moments import Variant
from .spde_fd import DEFAULT_BLOWUP, SpdeFdConfig

logger = logging.getLogger(__name__)


class SolverName(str, Enum):
    FINITE = "finite"
    MOMENTS = "moments"
    FD_DETERMINISTIC = "fd-deterministic"
    FD_SPDE = "fd-spde"
    FIXED_POINT = "fixed-point"


class SweptParameter(str, Enum):
    ALPHA = "alpha"
    LAMBDA_BAR = "lambda_bar"
    SIGMA = "sigma"
    BETA_C = "beta_c"
    BETA_S = "beta_s"
    LAMBDA0 = "lambda0"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class BucketSection(_Section):
    alpha: float = Field(ge=0)
    lambda_bar: float = Field(ge=0)
    sigma: float = Field(ge=0)
    beta_c: float = Field(ge=0)
    beta_s: float
    lambda0: float = Field(ge=0)
    weight: int = Field(default=1, ge=1)


class LgdSection(_Section):
    kind: LgdKind = LgdKind.UNIT
    lo: float = 0.0
    hi: float = 1.0


class ModelSection(_Section):
    buckets: List[BucketSection] = Field(min_length=1)
    pool_size: Optional[int] = Field(default=None, ge=1)
    lgd: LgdSection = Field(default_factory=LgdSection)
    cap: float = Field(default=DEFAULT_CAP, gt=0)


class RiskSection(_Section):
    kind: RiskKind = RiskKind.NONE
    x0: float = 0.0
    kappa: float = 0.0
    theta: float = 0.0
    epsilon: float = 0.0


class GridSection(_Section):
    delta: float = Field(gt=0)
    horizon: float = Field(gt=0)
    sample_horizons: List[float] = Field(default_factory=list)


class SimSection(_Section):
    trials: int = Field(default=1000, ge=1)
    seed: int = Field(default=0, ge=0, lt=2 ** 64)
    threads: Optional[int] = Field(default=None, ge=1)


class SolverSection(_Section):
    name: SolverName = SolverName.MOMENTS
    K: int = Field(default=15, ge=1)
    variant: Variant = Variant.PLAIN
    mesh: float = Field(default=0.1, gt=0)
    lambda_max: float = Field(default=10.0, gt=0)
    substeps: int = Field(default=2, ge=1)
    blowup: float = Field(default=DEFAULT_BLOWUP, gt=0)
    inner_trials: int = Field(default=10000, ge=1)
    tol: float = Field(default=1e-4, gt=0)
    max_iter: int = Field(default=50, ge=1)
    bins: int = Field(default=50, ge=1)
    levels: List[float] = Field(default_factory=lambda: [0.95, 0.99])

    @field_validator("levels")
    @classmethod
    def _levels_in_unit_interval(cls, levels):
        for level in levels:
            if not 0.0 < level < 1.0:
                raise ValueError(f"VaR level {level} outside (0, 1)")
        return levels


class SweepSection(_Section):
    """One bucket parameter set to each of ``values`` in turn, in every bucket."""

    parameter: SweptParameter
    values: List[float] = Field(min_length=1)

    @model_validator(mode="after")
    def _values_admissible(self):
        if self.parameter is not SweptParameter.BETA_S and min(self.values) < 0:
            raise ValueError(f"{self.parameter.value} must be >= 0")
        return self


class ExperimentConfig(_Section):
    model: ModelSection
    risk: RiskSection = Field(default_factory=RiskSection)
    grid: GridSection
    sim: SimSection = Field(default_factory=SimSection)
    solver: SolverSection = Field(default_factory=SolverSection)
    sweep: Optional[SweepSection] = None
    meta: Dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _horizons_on_grid(self):
        self.time_grid()
        return self

    def pool(self):
        entries = [
            PoolEntry(
                NameParams(b.alpha, b.lambda_bar, b.sigma, b.beta_c, b.beta_s),
                b.lambda0,
                b.weight,
            )
            for b in self.model.buckets
        ]
        if self.model.pool_size is not None:
            entries = _rescale(entries, self.model.pool_size)
        return PoolSpec(entries)

    def risk_model(self):
        r = self.risk
        return SystematicRiskModel(r.kind, r.x0, r.kappa, r.theta, r.epsilon)

    def time_grid(self):
        g = self.grid
        return TimeGrid(g.delta, g.horizon, tuple(g.sample_horizons))

    def sim_config(self):
        return SimConfig(self.sim.trials, self.sim.seed, self.sim.threads)

    def lgd(self):
        return LgdSpec(self.model.lgd.kind, self.model.lgd.lo, self.model.lgd.hi)

    def density_grid(self):
        return DensityGrid(self.solver.mesh, self.solver.lambda_max)

    def spde_config(self):
        return SpdeFdConfig(self.density_grid(), self.time_grid(), self.solver.blowup)

    def with_overrides(self, seed=None, trials=None, threads=None, solver=None):
        sim = self.sim.model_copy(update={
            key: value
            for key, value in (("seed", seed), ("trials", trials), ("threads", threads))
            if value is not None
        })
        update = {"sim": sim}
        if solver is not None:
            update["solver"] = self.solver.model_copy(update={"name": SolverName(solver)})
        return self.model_copy(update=update)

    def sweep_points(self):
        """(label, config) for every swept value; without a sweep the config is its own point."""
        if self.sweep is None:
            return [("", self)]
        name = self.sweep.parameter.value
        points = []
        for value in self.sweep.values:
            data = self.model_dump(mode="json")
            data["sweep"] = None
            for bucket in data["model"]["buckets"]:
                bucket[name] = value
            points.append((f"{name}_{value:g}", parse_config(data)))
        return points

    def sidecar(self, **meta):
        """Resolved config with a ``meta`` section; loading it back gives the same run."""
        data = self.model_dump(mode="json")
        data["meta"] = {**self.meta, **meta}
        return data


def _rescale(entries, pool_size):
    """Integer weights summing to ``pool_size`` in the given proportions (largest remainder)."""
    weights = np.array([e.weight for e in entries], dtype=float)
    exact = weights / weights.sum() * pool_size
    counts = np.floor(exact).astype(int)
    short = pool_size - counts.sum()
    for i in np.argsort(-(exact - counts), kind="stable")[:short]:
        counts[i] += 1
    if np.any(counts == 0):
        raise ValidationError("model.pool_size too small to give every bucket a name")
    return [PoolEntry(e.params, e.lambda0, int(c)) for e, c in zip(entries, counts)]


def _format_schema_error(exc):
    parts = []
    for err in exc.errors():
        where = ".".join(str(p) for p in err["loc"]) or "<root>"
        parts.append(f"{where}: {err['msg']}")
    return "; ".join(parts)


def parse_config(data):
    if not isinstance(data, dict):
        raise ValidationError("config must be a mapping with sections model, grid, ...")
    try:
        return ExperimentConfig.model_validate(data)
    except SchemaError as exc:
        raise ValidationError(f"invalid config: {_format_schema_error(exc)}") from exc


def load_config(path):
    path = Path(path)
    try:
        with path.open() as f:
            data = yaml.safe_load(f)
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ValidationError(f"config {path} is not valid YAML: {exc}") from exc
    logger.debug("loaded config %s", path)
    return parse_config(data)

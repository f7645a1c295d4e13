"""Risk statistics of loss samples: ECDF, VaR, KS distance, Spearman, histograms."""

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.stats import ks_2samp, rankdata

from .errors import ValidationError
from .model import BOOTSTRAP, derive_stream


@dataclass(frozen=True)
class EmpiricalDistribution:
    values: np.ndarray

    def __post_init__(self):
        values = np.sort(np.asarray(self.values, dtype=float).ravel())
        if values.size == 0:
            raise ValidationError("empirical distribution needs at least one sample")
        object.__setattr__(self, "values", values)

    @classmethod
    def of(cls, sample):
        return sample if isinstance(sample, cls) else cls(sample)

    @property
    def size(self):
        return self.values.size

    def __call__(self, x):
        """ECDF: fraction of samples <= x."""
        return np.searchsorted(self.values, x, side="right") / self.size


def ecdf(sample):
    return EmpiricalDistribution.of(sample)


def var_at_level(sample, level):
    """Lower empirical quantile: the ceil(level * M)-th order statistic."""
    if not 0.0 < level < 1.0:
        raise ValidationError(f"VaR level must lie in (0, 1), got {level}")
    dist = EmpiricalDistribution.of(sample)
    rank = math.ceil(level * dist.size - 1e-12)
    return float(dist.values[max(rank, 1) - 1])


class Correlation(NamedTuple):
    rho: float
    defined: bool


def spearman(x, y):
    """Pearson correlation of midranks. ``defined`` is False when either input is constant."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != y.size:
        raise ValidationError(f"spearman needs samples of equal length, got {x.size} and {y.size}")
    if x.size < 2:
        raise ValidationError("spearman needs at least two samples")
    rx = rankdata(x) - (x.size + 1) / 2.0
    ry = rankdata(y) - (y.size + 1) / 2.0
    norm = math.sqrt(float(rx @ rx) * float(ry @ ry))
    if norm == 0.0:
        return Correlation(float("nan"), False)
    return Correlation(float(np.clip(rx @ ry / norm, -1.0, 1.0)), True)


def ks_distance(sample1, sample2):
    """sup over pooled sample points of |ECDF_1 - ECDF_2|."""
    d1 = EmpiricalDistribution.of(sample1)
    d2 = EmpiricalDistribution.of(sample2)
    # asymptotic p-value only; the exact one is quadratic in the sample sizes
    return float(ks_2samp(d1.values, d2.values, method="asymp").statistic)


class Histogram(NamedTuple):
    counts: np.ndarray
    edges: np.ndarray
    density: np.ndarray


def histogram(sample, bins=50):
    """Equal-width bins over [min, max], each closed on the right (the first on both sides)."""
    if bins < 1:
        raise ValidationError("histogram needs bins >= 1")
    dist = EmpiricalDistribution.of(sample)
    edges = np.histogram_bin_edges(dist.values, bins=bins)
    index = np.clip(np.searchsorted(edges, dist.values, side="left") - 1, 0, bins - 1)
    counts = np.bincount(index, minlength=bins)
    widths = np.diff(edges)
    density = counts / (dist.size * widths)
    return Histogram(counts, edges, density)


def mean_standard_error(sample):
    values = np.asarray(sample, dtype=float).ravel()
    if values.size < 2:
        return float("nan")
    return float(values.std(ddof=1) / math.sqrt(values.size))


def spearman_standard_error(rho, size):
    """Large-sample approximation sqrt((1 + rho^2 / 2) / (M - 3))."""
    if size <= 3:
        return float("nan")
    return math.sqrt((1.0 + rho ** 2 / 2.0) / (size - 3))


def bootstrap_var_standard_error(sample, level, resamples=500, master_seed=0):
    """Standard deviation of the VaR estimator over resamples with replacement."""
    values = np.asarray(sample, dtype=float).ravel()
    if values.size == 0:
        raise ValidationError("bootstrap needs a nonempty sample")
    if resamples < 2 or np.ptp(values) == 0:
        return 0.0
    rng = derive_stream(master_seed, (BOOTSTRAP, 0, 0))
    rank = max(math.ceil(level * values.size - 1e-12), 1) - 1
    picks = rng.integers(0, values.size, size=(resamples, values.size))
    estimates = np.partition(values[picks], rank, axis=1)[:, rank]
    return float(estimates.std(ddof=1))


def summarize(sample, levels=(0.95, 0.99)):
    """Per-horizon table of mean, its error, VaR at ``levels`` and Spearman(X, L)."""
    rows = []
    for h, horizon in enumerate(sample.horizons):
        losses, xs = sample.losses[:, h], sample.x_values[:, h]
        row = {
            "horizon": float(horizon),
            "trials": int(losses.size),
            "mean": float(losses.mean()),
            "mean_se": mean_standard_error(losses),
        }
        for level in levels:
            row[f"var_{level:g}"] = var_at_level(losses, level)
        if losses.size >= 2:
            corr = spearman(xs, losses)
            row["spearman"] = corr.rho
            row["spearman_se"] = spearman_standard_error(corr.rho, losses.size) if corr.defined else float("nan")
        rows.append(row)
    return rows

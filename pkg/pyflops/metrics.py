"""Distances between point clouds and convergence-order fits."""
from __future__ import annotations

from dataclasses import asdict, dataclass
import math
from typing import Any, Optional, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.spatial.distance import cdist

from pyflops.const import CSV_COLUMNS, DEFAULT_ENERGY_POINTS, DEFAULT_PROJECTIONS, LOG
from pyflops.exceptions import DomainError
from pyflops.target import TargetDistribution

Array = NDArray[np.float64]


@dataclass(frozen=True)
class MetricReport:
    """Measurements of one (target, sampler, N, seed) cell."""

    target: str
    sampler: str
    steps: int
    nfe: int
    seed: int
    sliced_w2: Optional[float]
    energy: Optional[float]
    mean_err: Optional[float]
    cov_err: Optional[float]
    oracle_rmse: Optional[float] = None
    wall_ms: float = 0.0

    def as_row(self) -> dict[str, Any]:
        row = asdict(self)
        row["N"] = row.pop("steps")
        return {column: "" if row[column] is None else row[column] for column in CSV_COLUMNS}


def _matrix(samples: ArrayLike, name: str) -> Array:
    array = np.asarray(samples, dtype=float)
    if array.ndim == 1:
        array = array[:, None]
    if array.ndim != 2 or array.shape[0] < 2:
        raise DomainError(f"{name} needs at least 2 rows, got shape {array.shape}")
    return array


def _quantile_rows(levels: Array, n: int) -> NDArray[np.intp]:
    # inverted_cdf: the smallest order statistic whose rank reaches p·n
    return np.clip(np.ceil(levels * n).astype(int) - 1, 0, n - 1)


def sliced_w2(
    a: ArrayLike,
    b: ArrayLike,
    projections: int = DEFAULT_PROJECTIONS,
    seed: int = 0,
) -> float:
    """Average 1-D W₂ over random unit directions.

    Projected samples are sorted and coupled at the inverted-CDF quantile
    levels (i + ½)/k with k = min(n, m); for n = m that is rank to rank.
    """
    first = _matrix(a, "sliced_w2")
    second = _matrix(b, "sliced_w2")
    if first.shape[1] != second.shape[1]:
        raise DomainError("sliced_w2 inputs have different dimensions")
    if projections < 1:
        raise DomainError(f"projections must be positive, got {projections}")
    rng = np.random.default_rng(seed)
    directions = rng.standard_normal((projections, first.shape[1]))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    sorted_a = np.sort(first @ directions.T, axis=0)
    sorted_b = np.sort(second @ directions.T, axis=0)
    k = min(len(sorted_a), len(sorted_b))
    levels = (np.arange(k) + 0.5) / k
    quantiles_a = sorted_a[_quantile_rows(levels, len(sorted_a))]
    quantiles_b = sorted_b[_quantile_rows(levels, len(sorted_b))]
    per_direction = np.sqrt(np.mean((quantiles_a - quantiles_b) ** 2, axis=0))
    return float(np.mean(per_direction))


def _subsample(samples: Array, limit: int, rng: np.random.Generator) -> Array:
    if samples.shape[0] <= limit:
        return samples
    ordered = samples[np.lexsort(samples.T[::-1])]
    return ordered[np.sort(rng.choice(ordered.shape[0], size=limit, replace=False))]


def energy_distance(
    a: ArrayLike,
    b: ArrayLike,
    max_points: int = DEFAULT_ENERGY_POINTS,
    seed: int = 0,
) -> float:
    """V-statistic 2E‖a − b‖ − E‖a − a′‖ − E‖b − b′‖.

    Inputs larger than ``max_points`` rows are sorted and subsampled first.
    """
    first = _matrix(a, "energy_distance")
    second = _matrix(b, "energy_distance")
    rng = np.random.default_rng(seed)
    first = _subsample(first, max_points, rng)
    second = _subsample(second, max_points, rng)
    cross = float(np.mean(cdist(first, second)))
    within_a = float(np.mean(cdist(first, first)))
    within_b = float(np.mean(cdist(second, second)))
    return max(2.0 * cross - within_a - within_b, 0.0)


def moment_errors(samples: ArrayLike, target: TargetDistribution) -> tuple[float, float]:
    """‖sample mean − exact mean‖₂ and ‖sample covariance − exact covariance‖_F."""
    points = _matrix(samples, "moment_errors")
    mean_err = float(np.linalg.norm(points.mean(axis=0) - target.mean()))
    covariance = np.atleast_2d(np.cov(points, rowvar=False, ddof=1))
    cov_err = float(np.linalg.norm(covariance - target.covariance(), ord="fro"))
    return mean_err, cov_err


def endpoint_rmse(endpoints: ArrayLike, reference: ArrayLike) -> float:
    """Root mean squared Euclidean distance between paired chains."""
    diff = np.asarray(endpoints, dtype=float) - np.asarray(reference, dtype=float)
    return float(np.sqrt(np.mean(np.sum(np.atleast_2d(diff) ** 2, axis=-1))))


def order_estimate(points: Sequence[tuple[int, float]]) -> float:
    """Least-squares slope of log(RMSE) against log(Δt), Δt = 1/N.

    :param points: (N, RMSE) pairs; non-positive RMSE values are dropped
    :type points: ``Sequence``
    :raises DomainError: fewer than 3 distinct N survive
    :return: Fitted convergence order
    :rtype: ``float``
    """
    kept = [(steps, rmse) for steps, rmse in points if rmse > 0 and math.isfinite(rmse)]
    if len(kept) < len(points):
        LOG.warning(f"Dropped {len(points) - len(kept)} non-positive RMSE values from the order fit")
    if len({steps for steps, _ in kept}) < 3:
        raise DomainError(f"order_estimate needs 3 distinct N with positive RMSE, got {kept}")
    log_dt = np.log([1.0 / steps for steps, _ in kept])
    log_rmse = np.log([rmse for _, rmse in kept])
    slope, _ = np.polyfit(log_dt, log_rmse, 1)
    return float(slope)

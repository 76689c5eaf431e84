"""Define samplers"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from pyflops.const import (
    COEFFICIENT_MODES,
    DEFAULT_COEFFICIENT_MODE,
    DEFAULT_DELTA_EPSILON,
    DEFAULT_LAMBDA_CLAMP,
    GRID_KINDS,
    LOG,
)
from pyflops.exceptions import DomainError, IntegrationError

Array = NDArray[np.float64]


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Flow-time nodes 0 = t₀ < t₁ < … < t_N = 1."""

    nodes: Array
    kind: str = "custom"

    def __post_init__(self) -> None:
        nodes = np.asarray(self.nodes, dtype=float).reshape(-1)
        if nodes.size < 2:
            raise DomainError("A time grid needs at least one step")
        if nodes[0] != 0.0 or nodes[-1] != 1.0:
            raise DomainError(f"A time grid runs from 0 to 1, got {nodes[0]}..{nodes[-1]}")
        if np.any(np.diff(nodes) <= 0):
            raise DomainError("Time grid nodes must be strictly increasing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def uniform(cls, steps: int) -> TimeGrid:
        if steps < 1:
            raise DomainError(f"steps must be positive, got {steps}")
        return cls(np.arange(steps + 1) / steps, "uniform")

    @classmethod
    def quadratic(cls, steps: int) -> TimeGrid:
        if steps < 1:
            raise DomainError(f"steps must be positive, got {steps}")
        return cls((np.arange(steps + 1) / steps) ** 2, "quadratic")

    @classmethod
    def build(cls, kind: str, steps: int) -> TimeGrid:
        if kind not in GRID_KINDS:
            raise DomainError(f"Unknown grid kind {kind}")
        return cls.uniform(steps) if kind == "uniform" else cls.quadratic(steps)

    @property
    def steps(self) -> int:
        return int(self.nodes.size - 1)

    @property
    def intervals(self) -> Array:
        return np.diff(self.nodes)


@dataclass(frozen=True)
class AdaptiveConfig:
    """Settings of the adaptive velocity split.

    :param lambda_clamp: Closed interval λ is clipped to
    :type lambda_clamp: ``tuple``
    :param coefficients: One of ``taylor2``, ``exact-integral``, ``paper-eq12``
    :type coefficients: ``str``
    :param epsilon: ‖Δx‖² below which λ falls back to 0
    :type epsilon: ``float``
    """

    lambda_clamp: tuple[float, float] = DEFAULT_LAMBDA_CLAMP
    coefficients: str = DEFAULT_COEFFICIENT_MODE
    epsilon: float = DEFAULT_DELTA_EPSILON

    def __post_init__(self) -> None:
        low, high = self.lambda_clamp
        if low > high:
            raise DomainError(f"lambda_clamp [{low}, {high}] is an empty interval")
        if self.coefficients not in COEFFICIENT_MODES:
            raise DomainError(f"Unknown coefficient mode {self.coefficients}")
        if not self.epsilon > 0:
            raise DomainError(f"epsilon must be positive, got {self.epsilon}")
        object.__setattr__(self, "lambda_clamp", (float(low), float(high)))


@dataclass
class SamplerRun:
    """A trajectory record.

    ``times`` are flow times for flow samplers and diffusion times for DDIM.
    ``lambdas`` holds one λ per chain for each adaptive step.
    """

    sampler: str
    times: Array
    states: list[Array] = field(default_factory=list)
    velocities: list[Array] = field(default_factory=list)
    lambdas: list[Array] = field(default_factory=list)
    nfe: int = 0
    seed: Optional[int] = None

    @property
    def steps(self) -> int:
        return int(len(self.times) - 1)

    @property
    def endpoint(self) -> Array:
        return self.states[-1]

    def trajectory(self) -> Array:
        """States stacked along a leading step axis."""
        return np.stack(self.states)


def sample_init(dimension: int, seed: int, chains: Optional[int] = None) -> Array:
    """Standard normal initial states, one vector or a (chains, d) batch."""
    rng = np.random.default_rng(seed)
    shape: Sequence[int] = (dimension,) if chains is None else (chains, dimension)
    return np.asarray(rng.standard_normal(shape))


def check_finite(
    sampler: str, step: int, t: float, state: ArrayLike, *values: ArrayLike
) -> None:
    """Raise when the state or any intermediate is not finite."""
    for value in (state, *values):
        if not np.all(np.isfinite(np.asarray(value))):
            norm = float(np.linalg.norm(np.asarray(state)))
            LOG.error(f"{sampler}: non-finite value at step {step}, t={t:.6g}")
            raise IntegrationError(
                f"{sampler} produced a non-finite value at step {step}, t={t:.6g}, ‖x‖={norm:.6g}"
            )

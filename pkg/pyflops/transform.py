"""Wrap diffusion score oracles as flow-matching velocity fields."""
from __future__ import annotations

from dataclasses import dataclass, field
import threading
from typing import Callable, Final

import numpy as np
from numpy.typing import NDArray

from pyflops.const import EVAL_MARGIN, LOG
from pyflops.exceptions import DomainError
from pyflops.schedule import NoiseSchedule, TimeMap
from pyflops.target import TargetDistribution

Array = NDArray[np.float64]
FieldFn = Callable[[Array, float], Array]

ANALYTIC_FM: Final = "analytic-fm"
TRANSFORMED_DIFFUSION: Final = "transformed-diffusion"


class EvaluationCounter:
    """Count field queries; safe to increment from several threads."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._value = 0

    def increment(self) -> int:
        with self._lock:
            self._value += 1
            return self._value

    @property
    def value(self) -> int:
        return self._value

    def reset(self) -> None:
        with self._lock:
            self._value = 0


def _cap_time(t: float) -> float:
    if not t < 1.0:
        raise DomainError(f"Velocity fields are defined for t < 1, got {t}")
    return min(t, 1.0 - EVAL_MARGIN)


@dataclass(eq=False)
class VelocityField:
    """A velocity v(x, t) on t ∈ [0, 1) with an evaluation counter.

    A batch of chains, shape (n, d), is one evaluation.
    """

    evaluator: FieldFn
    provenance: str
    counter: EvaluationCounter = field(default_factory=EvaluationCounter)

    def __call__(self, x: Array, t: float) -> Array:
        capped = _cap_time(t)
        self.counter.increment()
        return self.evaluator(np.asarray(x, dtype=float), capped)

    @property
    def evaluations(self) -> int:
        return self.counter.value

    @classmethod
    def from_target(cls, target: TargetDistribution) -> VelocityField:
        """The exact flow-matching velocity of an analytic target."""
        return cls(target.fm_velocity, ANALYTIC_FM)

    @classmethod
    def from_function(cls, evaluator: FieldFn) -> VelocityField:
        return cls(evaluator, ANALYTIC_FM)


@dataclass(eq=False)
class ScoreOracle:
    """A diffusion score s(y, τ) ≈ ∇_y log p_τ(y) bound to its schedule."""

    evaluator: Callable[[Array, float], Array]
    schedule: NoiseSchedule
    counter: EvaluationCounter = field(default_factory=EvaluationCounter)

    def __call__(self, y: Array, tau: float) -> Array:
        if not 0 < tau <= self.schedule.horizon:
            raise DomainError(
                f"Score queried at τ={tau}, outside (0, {self.schedule.horizon}]"
            )
        self.counter.increment()
        return self.evaluator(np.asarray(y, dtype=float), tau)

    @property
    def evaluations(self) -> int:
        return self.counter.value

    def denoise(self, y: Array, tau: float) -> Array:
        """Tweedie's mean E[x₀ | x_τ = y] = (y + σ²·score)/ᾱ; one query."""
        alpha_bar, sigma = self.schedule.marginal_coeffs(tau)
        return (y + sigma**2 * self(y, tau)) / alpha_bar

    @classmethod
    def from_target(
        cls, target: TargetDistribution, schedule: NoiseSchedule
    ) -> ScoreOracle:
        def evaluate(y: Array, tau: float) -> Array:
            alpha_bar, sigma = schedule.marginal_coeffs(tau)
            return target.diffusion_score(y, alpha_bar, sigma)

        return cls(evaluate, schedule)

    @classmethod
    def from_noise_prediction(
        cls, predictor: Callable[[Array, float], Array], schedule: NoiseSchedule
    ) -> ScoreOracle:
        """Adapt a noise predictor ε̂(y, τ) as score = −ε̂/σ."""

        def evaluate(y: Array, tau: float) -> Array:
            _, sigma = schedule.marginal_coeffs(tau)
            return -predictor(y, tau) / sigma

        return cls(evaluate, schedule)

    @classmethod
    def from_data_prediction(
        cls, predictor: Callable[[Array, float], Array], schedule: NoiseSchedule
    ) -> ScoreOracle:
        """Adapt a data predictor x̂₀(y, τ) as score = (ᾱ x̂₀ − y)/σ²."""

        def evaluate(y: Array, tau: float) -> Array:
            alpha_bar, sigma = schedule.marginal_coeffs(tau)
            return (alpha_bar * predictor(y, tau) - y) / sigma**2

        return cls(evaluate, schedule)


def _evaluation_tau(tmap: TimeMap, t: float) -> float:
    tau = tmap.diffusion_time(t)
    if tau == 0.0:
        # Only the discrete inverse lands on τ = 0, where σ vanishes.
        tau = float(tmap.tau_grid[1])
    return tau


def to_flow_velocity(
    score: ScoreOracle, tmap: TimeMap, alg1_verbatim: bool = False
) -> VelocityField:
    """Reparameterize a diffusion score as a flow-matching velocity.

    For t ≥ t_min the field is (σ_τ/ᾱ_τ)[x + σ_τ s((ᾱ_τ + σ_τ)x, τ)]/(1 − t)
    with τ the diffusion time of t. Below t_min the velocity is frozen at its
    t_min value; ``alg1_verbatim`` instead returns σ_T[x + σ_T s]/ᾱ_T there,
    without the 1/(1 − t) factor.

    :param score: Diffusion score oracle
    :type score: :class:`ScoreOracle`
    :param tmap: Time map built on the oracle's schedule
    :type tmap: :class:`TimeMap`
    :param alg1_verbatim: Use the literal frozen-branch expression
    :type alg1_verbatim: ``bool``
    :raises DomainError: The oracle and the map use different schedules
    :return: A field costing one score query per evaluation
    :rtype: :class:`VelocityField`
    """
    if score.schedule != tmap.schedule:
        raise DomainError("Score oracle and time map use different schedules")
    schedule = tmap.schedule

    def transformed(x: Array, tau: float, t: float) -> Array:
        alpha_bar, sigma = schedule.marginal_coeffs(tau)
        drift = x + sigma * score((alpha_bar + sigma) * x, tau)
        if alg1_verbatim and t < tmap.t_min:
            return np.asarray(sigma * drift / alpha_bar)
        return np.asarray(sigma / alpha_bar * drift / (1.0 - t))

    def evaluate(x: Array, t: float) -> Array:
        if t < tmap.t_min:
            frozen_at = t if alg1_verbatim else tmap.t_min
            return transformed(x, schedule.horizon, frozen_at)
        return transformed(x, _evaluation_tau(tmap, t), t)

    LOG.debug(
        f"Transformed field on {schedule.kind}, t_min={tmap.t_min:.6g}, verbatim={alg1_verbatim}"
    )
    return VelocityField(evaluate, TRANSFORMED_DIFFUSION)


def frozen_velocity(velocity: VelocityField, tmap: TimeMap, x: Array) -> Array:
    """The velocity the field returns for every t < t_min."""
    return velocity(x, 0.0)

"""Noise schedules and the diffusion-time / flow-time correspondence."""
from __future__ import annotations

from dataclasses import dataclass, field
import math
from typing import Union, overload

import numpy as np
from numpy.typing import NDArray
from scipy import integrate, optimize

from pyflops.const import (
    BISECTION_MAXITER,
    BISECTION_RTOL,
    BISECTION_XTOL,
    DEFAULT_BETA_MAX,
    DEFAULT_BETA_MIN,
    DEFAULT_COSINE_S,
    DEFAULT_DISCRETE_STEPS,
    DEFAULT_HORIZON,
    DEFAULT_QUADRATURE_PANELS,
    DEFAULT_SCHEDULE_KIND,
    DEFAULT_THETA_MAX,
    INVERSE_MODES,
    LOG,
    SCHEDULE_KINDS,
    TIE_ATOL,
)
from pyflops.exceptions import DomainError

Times = Union[float, NDArray[np.float64]]


@dataclass(frozen=True)
class NoiseSchedule:
    """Define the marginal coefficients (ᾱ_τ, σ_τ) of a diffusion process.

    ``vp-linear`` uses β(τ) = β₀ + (β₁ − β₀)τ/T with α = β/2, ``vp-cosine``
    the shifted cosine ᾱ_τ = cos θ(τ) / cos θ(0), and ``generic-quadrature``
    evaluates the two integrals of the marginal law for linear α(τ) and β(τ)
    given by their endpoint values.
    """

    kind: str = DEFAULT_SCHEDULE_KIND
    horizon: float = DEFAULT_HORIZON
    beta_min: float = DEFAULT_BETA_MIN
    beta_max: float = DEFAULT_BETA_MAX
    cosine_s: float = DEFAULT_COSINE_S
    theta_max: float = DEFAULT_THETA_MAX
    alpha: tuple[float, float] = (DEFAULT_BETA_MIN / 2, DEFAULT_BETA_MAX / 2)
    beta: tuple[float, float] = (DEFAULT_BETA_MIN, DEFAULT_BETA_MAX)
    resolution: int = DEFAULT_QUADRATURE_PANELS

    def __post_init__(self) -> None:
        if self.kind not in SCHEDULE_KINDS:
            raise DomainError(f"Unknown schedule kind {self.kind}")
        if not self.horizon > 0:
            raise DomainError(f"Schedule horizon must be positive, got {self.horizon}")
        if self.kind == "vp-linear":
            if self.beta_min < 0 or self.beta_max < 0:
                raise DomainError("vp-linear needs non-negative beta_min and beta_max")
        elif self.kind == "vp-cosine":
            if not 0 < self.theta_max < math.pi / 2:
                raise DomainError(f"theta_max must lie in (0, π/2), got {self.theta_max}")
            if self.cosine_s < 0:
                raise DomainError(f"cosine_s must be non-negative, got {self.cosine_s}")
        else:
            a0, a1 = self.alpha
            b0, b1 = self.beta
            if min(a0, b0) < 0 or a1 <= 0 or b1 <= 0:
                raise DomainError(
                    "generic-quadrature needs α, β ≥ 0 at τ=0 and α, β > 0 at τ=T"
                )
            if self.resolution < 2 or self.resolution % 2:
                raise DomainError(
                    f"Simpson quadrature needs an even panel count, got {self.resolution}"
                )

    @property
    def is_vp(self) -> bool:
        return self.kind in ("vp-linear", "vp-cosine")

    def _integrated_beta(self, tau: Times) -> Times:
        """∫₀^τ β for the linear β of the vp-linear kind."""
        return self.beta_min * tau + (self.beta_max - self.beta_min) * tau**2 / (
            2 * self.horizon
        )

    def _theta(self, tau: Times) -> Times:
        return self.theta_max * (tau / self.horizon + self.cosine_s) / (1 + self.cosine_s)

    def _rates(self, tau: NDArray[np.float64]) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """α(τ) and β(τ) of the generic kind on an array of times."""
        a0, a1 = self.alpha
        b0, b1 = self.beta
        frac = tau / self.horizon
        return a0 + (a1 - a0) * frac, b0 + (b1 - b0) * frac

    def _quadrature(self, tau: float) -> tuple[float, float]:
        if tau == 0:
            return 1.0, 0.0
        nodes = np.linspace(0.0, tau, self.resolution + 1)
        drift, diffusion = self._rates(nodes)
        cumulative = integrate.cumulative_simpson(drift, x=nodes, initial=0.0)
        integrated = float(integrate.simpson(drift, x=nodes))
        kernel = np.exp(-2.0 * (integrated - cumulative)) * diffusion
        variance = float(integrate.simpson(kernel, x=nodes))
        return math.exp(-integrated), math.sqrt(max(variance, 0.0))

    def _coeffs_scalar(self, tau: float) -> tuple[float, float]:
        if self.kind == "vp-linear":
            integral = float(self._integrated_beta(tau))
            return math.exp(-0.5 * integral), math.sqrt(-math.expm1(-integral))
        if self.kind == "vp-cosine":
            theta0 = float(self._theta(0.0))
            theta = float(self._theta(tau))
            scale = math.cos(theta0)
            variance = math.sin(theta - theta0) * math.sin(theta + theta0) / scale**2
            return math.cos(theta) / scale, math.sqrt(max(variance, 0.0))
        return self._quadrature(tau)

    def _check_domain(self, tau: Times) -> None:
        values = np.asarray(tau, dtype=float)
        if np.any(values < 0) or np.any(values > self.horizon) or np.any(np.isnan(values)):
            raise DomainError(f"τ must lie in [0, {self.horizon}], got {tau}")

    @overload
    def marginal_coeffs(self, tau: float) -> tuple[float, float]:
        ...

    @overload
    def marginal_coeffs(
        self, tau: NDArray[np.float64]
    ) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        ...

    def marginal_coeffs(self, tau: Times) -> tuple[Times, Times]:
        """Return the pair (ᾱ_τ, σ_τ).

        :param tau: Diffusion time, scalar or array, in [0, T]
        :type tau: ``float`` or ``numpy.ndarray``
        :raises DomainError: τ outside [0, T]
        :return: Signal and noise coefficients
        :rtype: ``tuple``
        """
        self._check_domain(tau)
        if np.ndim(tau) == 0:
            return self._coeffs_scalar(float(tau))
        values = np.asarray(tau, dtype=float)
        if self.kind == "vp-linear":
            integral = self._integrated_beta(values)
            return np.exp(-0.5 * integral), np.sqrt(-np.expm1(-integral))
        pairs = np.array([self._coeffs_scalar(float(v)) for v in values.ravel()])
        return (
            pairs[:, 0].reshape(values.shape),
            pairs[:, 1].reshape(values.shape),
        )

    def snr_ratio(self, tau: Times) -> Times:
        """σ_τ/ᾱ_τ, strictly increasing on (0, T]."""
        alpha_bar, sigma = self.marginal_coeffs(tau)
        return sigma / alpha_bar


@dataclass(frozen=True)
class TimeMap:
    """The bijection t = 1/(1 + σ_τ/ᾱ_τ) between diffusion and flow time.

    :param schedule: Noise schedule the map is built on
    :type schedule: :class:`NoiseSchedule`
    :param inverse: ``continuous`` (bisection) or ``discrete`` (nearest grid index)
    :type inverse: ``str``
    :param discrete_steps: Number of τ intervals of the discrete scheduler grid
    :type discrete_steps: ``int``
    """

    schedule: NoiseSchedule = field(default_factory=NoiseSchedule)
    inverse: str = "continuous"
    discrete_steps: int = DEFAULT_DISCRETE_STEPS
    t_min: float = field(init=False)
    tau_grid: NDArray[np.float64] = field(init=False, repr=False, compare=False)
    t_grid: NDArray[np.float64] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.inverse not in INVERSE_MODES:
            raise DomainError(f"Unknown inverse mode {self.inverse}")
        if self.discrete_steps < 1:
            raise DomainError("discrete_steps must be positive")
        object.__setattr__(self, "t_min", self.flow_time(self.schedule.horizon))
        tau_grid = np.empty(0)
        t_grid = np.empty(0)
        if self.inverse == "discrete":
            tau_grid = np.linspace(0.0, self.schedule.horizon, self.discrete_steps + 1)
            t_grid = np.asarray(self.flow_time(tau_grid))
        object.__setattr__(self, "tau_grid", tau_grid)
        object.__setattr__(self, "t_grid", t_grid)
        LOG.debug(f"Time map on {self.schedule.kind}: t_min={self.t_min:.6g}")

    def flow_time(self, tau: Times) -> Times:
        """Map diffusion time τ to flow time t = ᾱ/(ᾱ + σ); t(0) = 1."""
        alpha_bar, sigma = self.schedule.marginal_coeffs(tau)
        return alpha_bar / (alpha_bar + sigma)

    def start_time(self) -> float:
        """Return t_min = 1/(1 + σ_T/ᾱ_T), the flow time of τ = T."""
        return self.t_min

    def discrete_index(self, t: float) -> int:
        """Grid index minimizing |t − t(τ_s)|, ties broken toward larger τ."""
        if not self.t_grid.size:
            raise DomainError("discrete_index needs a time map in discrete mode")
        gaps = np.abs(self.t_grid - t)
        candidates = np.flatnonzero(gaps <= gaps.min() + TIE_ATOL)
        return int(candidates[-1])

    def diffusion_time(self, t: float) -> float:
        """Invert :meth:`flow_time`.

        :param t: Flow time in [t_min, 1]
        :type t: ``float``
        :raises DomainError: t outside [t_min, 1]; callers handle the frozen branch
        :return: Diffusion time τ
        :rtype: ``float``
        """
        if t < self.t_min - TIE_ATOL or t > 1.0 or math.isnan(t):
            raise DomainError(f"t must lie in [{self.t_min}, 1], got {t}")
        if self.inverse == "discrete":
            return float(self.tau_grid[self.discrete_index(t)])
        if t >= 1.0:
            return 0.0
        if t <= self.t_min:
            return self.schedule.horizon

        def residual(tau: float) -> float:
            return float(self.flow_time(tau)) - t

        return float(
            optimize.bisect(
                residual,
                0.0,
                self.schedule.horizon,
                xtol=BISECTION_XTOL,
                rtol=BISECTION_RTOL,
                maxiter=BISECTION_MAXITER,
            )
        )

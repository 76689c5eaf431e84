"""Analytic data laws with closed-form scores, velocities and posterior means."""
from __future__ import annotations

from dataclasses import dataclass, field
import math
from typing import Callable, Final, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import logsumexp, softmax

from pyflops.const import LOG, TARGET_KINDS, WEIGHT_TOL
from pyflops.exceptions import DomainError

Array = NDArray[np.float64]


@dataclass(frozen=True, eq=False)
class TargetDistribution:
    """A mixture of Gaussians Σ_k w_k 𝒩(μ_k, Σ_k).

    Dirac components are single components with zero covariance. Each
    covariance is eigendecomposed once, so the noisy marginals
    Σ_k w_k 𝒩(a μ_k, a² Σ_k + s² I) are evaluated for any (a, s) without
    refactoring.
    """

    kind: str
    weights: Array
    means: Array
    covariances: Array
    eigenvalues: Array = field(init=False, repr=False)
    eigenvectors: Array = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.kind not in TARGET_KINDS:
            raise DomainError(f"Unknown target kind {self.kind}")
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        means = np.atleast_2d(np.asarray(self.means, dtype=float))
        dim = means.shape[1]
        covariances = np.asarray(self.covariances, dtype=float).reshape(-1, dim, dim)
        if not (len(weights) == len(means) == len(covariances)) or not len(weights):
            raise DomainError("weights, means and covariances must have matching lengths")
        if np.any(weights <= 0):
            raise DomainError("every weight must be positive")
        if abs(weights.sum() - 1.0) > WEIGHT_TOL:
            raise DomainError(f"weights sum to 1 is required, got {weights.sum()!r}")
        if self.kind != "gaussian-mixture" and len(weights) != 1:
            raise DomainError(f"A {self.kind} target has exactly one component")
        for index, cov in enumerate(covariances):
            if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-12):
                raise DomainError(f"Covariance of component {index} is not symmetric")
            if self.kind == "dirac":
                if np.any(cov != 0):
                    raise DomainError("A dirac target has zero covariance")
                continue
            try:
                np.linalg.cholesky(cov)
            except np.linalg.LinAlgError as err:
                raise DomainError(
                    f"Covariance of component {index} is not symmetric positive-definite"
                ) from err
        eigenvalues, eigenvectors = np.linalg.eigh(covariances)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covariances", covariances)
        object.__setattr__(self, "eigenvalues", np.clip(eigenvalues, 0.0, None))
        object.__setattr__(self, "eigenvectors", eigenvectors)
        LOG.debug(f"Target {self.kind}: {len(weights)} components in {dim} dimensions")

    @classmethod
    def dirac(cls, mean: ArrayLike) -> TargetDistribution:
        point = np.atleast_1d(np.asarray(mean, dtype=float))
        dim = point.shape[0]
        return cls("dirac", np.ones(1), point[None, :], np.zeros((1, dim, dim)))

    @classmethod
    def gaussian(cls, mean: ArrayLike, covariance: ArrayLike) -> TargetDistribution:
        center = np.atleast_1d(np.asarray(mean, dtype=float))
        return cls("gaussian", np.ones(1), center[None, :], np.asarray(covariance)[None])

    @classmethod
    def mixture(
        cls,
        weights: Sequence[float],
        means: ArrayLike,
        covariances: ArrayLike,
    ) -> TargetDistribution:
        return cls(
            "gaussian-mixture",
            np.asarray(weights, dtype=float),
            np.asarray(means, dtype=float),
            np.asarray(covariances, dtype=float),
        )

    @property
    def dimension(self) -> int:
        return int(self.means.shape[1])

    @property
    def components(self) -> int:
        return int(self.weights.shape[0])

    @property
    def is_dirac(self) -> bool:
        return self.kind == "dirac"

    def mean(self) -> Array:
        """Exact mixture mean Σ w_k μ_k."""
        return np.asarray(self.weights @ self.means)

    def covariance(self) -> Array:
        """Exact mixture covariance Σ w_k (Σ_k + μ_k μ_kᵀ) − m mᵀ."""
        center = self.mean()
        second = np.einsum("k,kij->ij", self.weights, self.covariances) + np.einsum(
            "k,ki,kj->ij", self.weights, self.means, self.means
        )
        return np.asarray(second - np.outer(center, center))

    def sample_exact(self, n: int, seed: int) -> Array:
        """Draw n i.i.d. points, component first then Gaussian; deterministic per seed."""
        if n < 1:
            raise DomainError(f"sample_exact needs n ≥ 1, got {n}")
        rng = np.random.default_rng(seed)
        labels = rng.choice(self.components, size=n, p=self.weights)
        noise = rng.standard_normal((n, self.dimension))
        roots = self.eigenvectors * np.sqrt(self.eigenvalues)[:, None, :]
        return np.asarray(
            self.means[labels] + np.einsum("nij,nj->ni", roots[labels], noise)
        )

    def diffusion_score(self, y: ArrayLike, alpha_bar: float, sigma: float) -> Array:
        """∇_y log p_τ(y) of the diffusion marginal Σ w_k 𝒩(ᾱμ_k, ᾱ²Σ_k + σ²I)."""
        if not sigma > 0:
            raise DomainError(f"The diffusion score needs σ > 0, got {sigma}")
        return NoisyMarginal(self, alpha_bar, sigma).score(y)

    def posterior_mean(self, y: ArrayLike, alpha_bar: float, sigma: float) -> Array:
        """E[x₀ | x_τ = y] under the diffusion perturbation (Tweedie's mean)."""
        if not sigma > 0:
            raise DomainError(f"The posterior mean needs σ > 0, got {sigma}")
        return NoisyMarginal(self, alpha_bar, sigma).posterior_mean(y)

    def fm_velocity(self, x: ArrayLike, t: float) -> Array:
        """Optimal flow-matching velocity (E[x₁ | x_t = x] − x)/(1 − t)."""
        if not t < 1:
            raise DomainError(f"The flow-matching velocity needs t < 1, got {t}")
        points = np.asarray(x, dtype=float)
        return (NoisyMarginal.flow(self, t).posterior_mean(points) - points) / (1.0 - t)


@dataclass(frozen=True, eq=False)
class NoisyMarginal:
    """The law of a·x₁ + s·ε with x₁ from the target and ε ∼ 𝒩(0, I).

    Diffusion marginals use (a, s) = (ᾱ_τ, σ_τ); flow-matching marginals use
    (a, s) = (t, 1 − t).
    """

    target: TargetDistribution
    scale: float
    noise: float

    @classmethod
    def diffusion(
        cls, target: TargetDistribution, alpha_bar: float, sigma: float
    ) -> NoisyMarginal:
        return cls(target, alpha_bar, sigma)

    @classmethod
    def flow(cls, target: TargetDistribution, t: float) -> NoisyMarginal:
        return cls(target, t, 1.0 - t)

    @property
    def spectrum(self) -> Array:
        """Eigenvalues a²e + s² of every component covariance, shape (K, d)."""
        return np.asarray(self.scale**2 * self.target.eigenvalues + self.noise**2)

    def _whitened(self, y: Array) -> tuple[Array, Array]:
        """Residuals y − aμ_k in each component's eigenbasis, shape (..., K, d)."""
        spectrum = self.spectrum
        if np.any(spectrum <= 0):
            raise DomainError("Marginal has a degenerate covariance")
        residual = y[..., None, :] - self.scale * self.target.means
        rotated = np.einsum("kji,...kj->...ki", self.target.eigenvectors, residual)
        return rotated, spectrum

    def _log_components(self, y: Array) -> tuple[Array, Array, Array]:
        rotated, spectrum = self._whitened(y)
        dim = self.target.dimension
        maha = np.sum(rotated**2 / spectrum, axis=-1)
        log_det = np.sum(np.log(spectrum), axis=-1)
        log_terms = (
            np.log(self.target.weights)
            - 0.5 * (dim * math.log(2 * math.pi) + log_det + maha)
        )
        return log_terms, rotated, spectrum

    def log_density(self, y: ArrayLike) -> Array:
        """log Σ w_k 𝒩(y; aμ_k, a²Σ_k + s²I), computed with log-sum-exp."""
        log_terms, _, _ = self._log_components(np.asarray(y, dtype=float))
        return np.asarray(logsumexp(log_terms, axis=-1))

    def responsibilities(self, y: ArrayLike) -> Array:
        log_terms, _, _ = self._log_components(np.asarray(y, dtype=float))
        return np.asarray(softmax(log_terms, axis=-1))

    def _back(self, coefficients: Array) -> Array:
        """Rotate per-component eigenbasis vectors back, shape (..., K, d)."""
        return np.asarray(
            np.einsum("kij,...kj->...ki", self.target.eigenvectors, coefficients)
        )

    def score(self, y: ArrayLike) -> Array:
        """Σ_k r_k(y) C_k⁻¹(aμ_k − y)."""
        log_terms, rotated, spectrum = self._log_components(np.asarray(y, dtype=float))
        resp = softmax(log_terms, axis=-1)
        per_component = self._back(-rotated / spectrum)
        return np.asarray(np.einsum("...k,...kd->...d", resp, per_component))

    def posterior_mean(self, y: ArrayLike) -> Array:
        """Σ_k r_k(y)(μ_k + a Σ_k C_k⁻¹(y − aμ_k))."""
        log_terms, rotated, spectrum = self._log_components(np.asarray(y, dtype=float))
        resp = softmax(log_terms, axis=-1)
        gain = self.scale * self.target.eigenvalues / spectrum
        per_component = self.target.means + self._back(gain * rotated)
        return np.asarray(np.einsum("...k,...kd->...d", resp, per_component))


def _ring(count: int, radius: float, spread: float, offset_deg: float) -> TargetDistribution:
    angles = np.deg2rad(offset_deg + 360.0 * np.arange(count) / count)
    means = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    covariances = np.repeat((spread * np.eye(2))[None], count, axis=0)
    return TargetDistribution.mixture(np.full(count, 1.0 / count), means, covariances)


PRESETS: Final[dict[str, Callable[[], TargetDistribution]]] = {
    "dirac": lambda: TargetDistribution.dirac(np.zeros(2)),
    "gaussian": lambda: TargetDistribution.gaussian(np.zeros(2), np.eye(2)),
    "anisotropic": lambda: TargetDistribution.gaussian(
        [1.0, -1.0], [[2.0, 0.6], [0.6, 0.5]]
    ),
    "mixture3": lambda: _ring(3, 2.0, 0.1, 90.0),
    "ring8": lambda: _ring(8, 3.0, 0.02, 0.0),
}


def preset_target(name: str) -> TargetDistribution:
    """Build one of the five shipped 2-D benchmark targets."""
    try:
        builder = PRESETS[name]
    except KeyError as err:
        raise DomainError(f"Unknown target preset {name}") from err
    return builder()


def benchmark_suite() -> dict[str, TargetDistribution]:
    return {name: builder() for name, builder in PRESETS.items()}

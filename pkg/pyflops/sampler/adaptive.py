"""Adaptive linear/residual velocity split with an exponential multistep update."""
from __future__ import annotations

from typing import Optional, Union

import numpy as np
from numpy.typing import ArrayLike

from pyflops.const import LOG, SERIES_Z, SMALL_Z
from pyflops.exceptions import DomainError
from pyflops.sampler import AdaptiveConfig, Array, SamplerRun, TimeGrid, check_finite
from pyflops.schedule import TimeMap
from pyflops.transform import ScoreOracle, VelocityField, to_flow_velocity

Scalars = Union[float, Array]


def _unwrap(value: Array) -> Scalars:
    return float(value) if value.ndim == 0 else value


def estimate_lambda(
    delta_v: ArrayLike, delta_x: ArrayLike, cfg: AdaptiveConfig
) -> Scalars:
    """Least-squares slope ⟨Δv, Δx⟩/‖Δx‖², clamped; 0 when ‖Δx‖² < ε.

    Rows of a (chains, d) batch each get their own λ.
    """
    dv = np.asarray(delta_v, dtype=float)
    dx = np.asarray(delta_x, dtype=float)
    if dv.shape != dx.shape:
        raise DomainError(f"Δv and Δx shapes differ: {dv.shape} vs {dx.shape}")
    inner = np.sum(dv * dx, axis=-1)
    norm2 = np.sum(dx * dx, axis=-1)
    degenerate = norm2 < cfg.epsilon
    raw = np.where(degenerate, 0.0, inner / np.where(degenerate, 1.0, norm2))
    low, high = cfg.lambda_clamp
    return _unwrap(np.clip(raw, low, high))


def ab_coefficients(lam: ArrayLike, dt: float, mode: str) -> tuple[Scalars, Scalars]:
    """Weights (a, b) of the residual and its derivative in the exponential step.

    ``taylor2`` keeps terms up to Δt², ``exact-integral`` evaluates
    ∫₀^Δt e^{λu} du and ∫₀^Δt e^{λu}(Δt − u) du, ``paper-eq12`` uses the
    e^{−λΔt} weights. Every mode returns (Δt, Δt²/2) when |λΔt| < 1e−8.
    """
    if not dt > 0:
        raise DomainError(f"Δt must be positive, got {dt}")
    lam_arr = np.asarray(lam, dtype=float)
    z = lam_arr * dt
    tiny = np.abs(z) < SMALL_Z
    series = np.abs(z) < SERIES_Z
    safe = np.where(tiny, 1.0, lam_arr)
    if mode == "taylor2":
        a = dt + lam_arr * dt**2 / 2
        b = np.full_like(z, dt**2 / 2)
    elif mode == "exact-integral":
        a = np.expm1(z) / safe
        b = np.where(
            series,
            dt**2 * (0.5 + z / 6 + z**2 / 24 + z**3 / 120),
            (np.expm1(z) - z) / safe**2,
        )
    elif mode == "paper-eq12":
        a = -np.expm1(-z) / safe
        b = np.where(
            series,
            dt**2 * (0.5 - z / 3 + z**2 / 8 - z**3 / 30),
            (1.0 - (1.0 + z) * np.exp(-z)) / safe**2,
        )
    else:
        raise DomainError(f"Unknown coefficient mode {mode}")
    a = np.where(tiny, dt, a)
    b = np.where(tiny, dt**2 / 2, b)
    return _unwrap(np.asarray(a)), _unwrap(np.asarray(b))


def adaptive_step(
    x_n: Array,
    v_n: Array,
    x_prev: Array,
    v_prev: Array,
    dt: float,
    cfg: AdaptiveConfig,
    dt_prev: Optional[float] = None,
) -> tuple[Array, Scalars]:
    """One exponential step x_next = e^{λΔt}x_n + a·h_n + b·ḣ.

    The residual h = v − λx is formed at both points with the same λ and its
    derivative is the backward difference over the previous interval.

    :param dt: Length of the interval being integrated
    :type dt: ``float``
    :param dt_prev: Length of the previous interval, ``dt`` when omitted
    :type dt_prev: ``float``
    :return: Next state and the λ used
    :rtype: ``tuple``
    """
    lam = estimate_lambda(v_n - v_prev, x_n - x_prev, cfg)
    column = np.expand_dims(np.asarray(lam), -1)
    residual = v_n - column * x_n
    residual_prev = v_prev - column * x_prev
    slope = (residual - residual_prev) / (dt if dt_prev is None else dt_prev)
    a, b = ab_coefficients(lam, dt, cfg.coefficients)
    a_col = np.expand_dims(np.asarray(a), -1)
    b_col = np.expand_dims(np.asarray(b), -1)
    x_next = np.exp(column * dt) * x_n + a_col * residual + b_col * slope
    return np.asarray(x_next), lam


def _saturation(lambdas: list[Array], cfg: AdaptiveConfig) -> float:
    if not lambdas:
        return 0.0
    values = np.concatenate([np.atleast_1d(lam) for lam in lambdas])
    low, high = cfg.lambda_clamp
    return float(np.mean((values <= low) | (values >= high)))


def a_euler(
    velocity: VelocityField,
    grid: TimeGrid,
    x0: Array,
    cfg: Optional[AdaptiveConfig] = None,
    seed: Optional[int] = None,
    sampler: str = "a-euler",
) -> SamplerRun:
    """Euler warm-up step, then adaptive exponential steps; one evaluation per step."""
    if grid.steps < 2:
        raise DomainError(f"{sampler} needs at least 2 steps, got {grid.steps}")
    cfg = cfg or AdaptiveConfig()
    start = velocity.evaluations
    x = np.array(x0, dtype=float)
    run = SamplerRun(sampler, grid.nodes, states=[x.copy()], seed=seed)
    x_prev: Optional[Array] = None
    v_prev: Optional[Array] = None
    dt_prev = 0.0
    for step, dt in enumerate(grid.intervals):
        t = float(grid.nodes[step])
        v = velocity(x, t)
        check_finite(sampler, step, t, x, v)
        if x_prev is None or v_prev is None:
            x_next = x + dt * v
        else:
            x_next, lam = adaptive_step(x, v, x_prev, v_prev, float(dt), cfg, dt_prev)
            run.lambdas.append(np.asarray(lam))
        check_finite(sampler, step, t, x_next)
        run.velocities.append(v)
        x_prev, v_prev, dt_prev = x, v, float(dt)
        x = x_next
        run.states.append(x.copy())
    run.nfe = velocity.evaluations - start
    LOG.debug(
        f"{sampler}: {grid.steps} steps, nfe={run.nfe}, λ clamp saturation {_saturation(run.lambdas, cfg):.3f}"
    )
    return run


def aflops(
    score: ScoreOracle,
    tmap: TimeMap,
    grid: TimeGrid,
    x0: Array,
    cfg: Optional[AdaptiveConfig] = None,
    seed: Optional[int] = None,
    alg1_verbatim: bool = False,
) -> SamplerRun:
    """The adaptive integrator on the flow velocity of a diffusion score."""
    velocity = to_flow_velocity(score, tmap, alg1_verbatim=alg1_verbatim)
    return a_euler(velocity, grid, x0, cfg, seed=seed, sampler="aflops")

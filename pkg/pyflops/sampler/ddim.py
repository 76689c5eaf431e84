"""Deterministic DDIM on the probability-flow ODE."""
from __future__ import annotations

from typing import Optional

import numpy as np

from pyflops.const import LOG
from pyflops.exceptions import DomainError
from pyflops.sampler import Array, SamplerRun, check_finite
from pyflops.schedule import NoiseSchedule
from pyflops.transform import ScoreOracle


def ddim(
    score: ScoreOracle,
    schedule: NoiseSchedule,
    steps: int,
    x_start: Array,
    seed: Optional[int] = None,
) -> SamplerRun:
    """Walk a uniform τ grid from T to 0 with the DDIM update.

    Each step denoises with Tweedie's mean x̂₀, recovers the implied noise
    ε̂ = (x − ᾱ_τ x̂₀)/σ_τ and re-noises to the next level. ``x_start`` is
    expected to be drawn from 𝒩(0, σ_T² I).
    """
    if steps < 1:
        raise DomainError(f"steps must be positive, got {steps}")
    if score.schedule != schedule:
        raise DomainError("Score oracle and DDIM schedule differ")
    start = score.evaluations
    taus = np.linspace(schedule.horizon, 0.0, steps + 1)
    x = np.array(x_start, dtype=float)
    run = SamplerRun("ddim", taus, states=[x.copy()], seed=seed)
    for step in range(steps):
        tau, tau_next = float(taus[step]), float(taus[step + 1])
        alpha_bar, sigma = schedule.marginal_coeffs(tau)
        alpha_next, sigma_next = schedule.marginal_coeffs(tau_next)
        denoised = score.denoise(x, tau)
        noise = (x - alpha_bar * denoised) / sigma
        x = alpha_next * denoised + sigma_next * noise
        check_finite("ddim", step, tau, x, denoised)
        run.velocities.append(noise)
        run.states.append(x.copy())
    run.nfe = score.evaluations - start
    LOG.debug(f"ddim: {steps} steps, nfe={run.nfe}")
    return run

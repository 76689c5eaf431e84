"""Classic fourth-order Runge-Kutta, as a baseline and as the reference integrator."""
from __future__ import annotations

from typing import Optional

import numpy as np

from pyflops.const import EVAL_MARGIN, LOG, MIN_ORACLE_STEPS
from pyflops.exceptions import DomainError
from pyflops.sampler import Array, SamplerRun, TimeGrid, check_finite
from pyflops.transform import VelocityField

LAST_TIME = 1.0 - EVAL_MARGIN


def _rk4_increment(velocity: VelocityField, x: Array, t: float, dt: float) -> Array:
    half = min(t + 0.5 * dt, LAST_TIME)
    k1 = velocity(x, t)
    k2 = velocity(x + 0.5 * dt * k1, half)
    k3 = velocity(x + 0.5 * dt * k2, half)
    k4 = velocity(x + dt * k3, min(t + dt, LAST_TIME))
    return np.asarray(dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0)


def rk4(
    velocity: VelocityField,
    grid: TimeGrid,
    x0: Array,
    seed: Optional[int] = None,
) -> SamplerRun:
    """RK4 over a sampling grid; four evaluations per step."""
    start = velocity.evaluations
    x = np.array(x0, dtype=float)
    run = SamplerRun("rk4-oracle", grid.nodes, states=[x.copy()], seed=seed)
    for step, dt in enumerate(grid.intervals):
        t = float(grid.nodes[step])
        x = x + _rk4_increment(velocity, x, t, float(dt))
        check_finite("rk4-oracle", step, t, x)
        run.states.append(x.copy())
    run.nfe = velocity.evaluations - start
    return run


def rk4_integrate(
    velocity: VelocityField, x: Array, t0: float, t1: float, steps: int
) -> Array:
    """Endpoint of dx/dt = v(x, t) from t0 to t1 with uniform RK4 steps."""
    if steps < 1 or not t1 > t0:
        raise DomainError(f"rk4_integrate needs steps ≥ 1 and t1 > t0, got {steps}, {t0}, {t1}")
    state = np.array(x, dtype=float)
    dt = (t1 - t0) / steps
    for step in range(steps):
        t = t0 + step * dt
        state = state + _rk4_increment(velocity, state, t, dt)
        if not np.all(np.isfinite(state)):
            check_finite("rk4-oracle", step, t, state)
    return state


def rk4_oracle(velocity: VelocityField, x0: Array, fine_steps: int) -> Array:
    """Reference endpoint at t = 1 − 1e−6 from a fine RK4 integration.

    :param velocity: Field to integrate
    :type velocity: :class:`VelocityField`
    :param x0: Initial states at t = 0
    :type x0: ``numpy.ndarray``
    :param fine_steps: Number of RK4 steps, at least 10⁴
    :type fine_steps: ``int``
    :raises DomainError: fine_steps below 10⁴
    :return: Endpoint states
    :rtype: ``numpy.ndarray``
    """
    if fine_steps < MIN_ORACLE_STEPS:
        raise DomainError(f"rk4_oracle needs at least {MIN_ORACLE_STEPS} steps, got {fine_steps}")
    LOG.debug(f"rk4-oracle: {fine_steps} fine steps on {velocity.provenance}")
    return rk4_integrate(velocity, x0, 0.0, LAST_TIME, fine_steps)

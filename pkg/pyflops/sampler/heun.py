"""Heun predictor-corrector baseline."""
from __future__ import annotations

from typing import Optional

import numpy as np

from pyflops.const import EVAL_MARGIN, LOG
from pyflops.sampler import Array, SamplerRun, TimeGrid, check_finite
from pyflops.transform import VelocityField


def heun_fm(
    velocity: VelocityField,
    grid: TimeGrid,
    x0: Array,
    seed: Optional[int] = None,
) -> SamplerRun:
    """Explicit trapezoidal rule; two evaluations per step.

    The corrector evaluation at t_N = 1 is taken at 1 − 1e−6.
    """
    start = velocity.evaluations
    x = np.array(x0, dtype=float)
    run = SamplerRun("heun-fm", grid.nodes, states=[x.copy()], seed=seed)
    nodes = grid.nodes
    for step, dt in enumerate(grid.intervals):
        t, t_next = float(nodes[step]), float(nodes[step + 1])
        v = velocity(x, t)
        predicted = x + dt * v
        corrected = velocity(predicted, min(t_next, 1.0 - EVAL_MARGIN))
        check_finite("heun-fm", step, t, x, v, predicted, corrected)
        x = x + 0.5 * dt * (v + corrected)
        check_finite("heun-fm", step, t, x)
        run.velocities.append(v)
        run.states.append(x.copy())
    run.nfe = velocity.evaluations - start
    LOG.debug(f"heun-fm: {grid.steps} steps, nfe={run.nfe}")
    return run

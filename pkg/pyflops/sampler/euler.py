"""First-order flow samplers."""
from __future__ import annotations

from typing import Optional

import numpy as np

from pyflops.const import LOG
from pyflops.sampler import Array, SamplerRun, TimeGrid, check_finite
from pyflops.schedule import TimeMap
from pyflops.transform import ScoreOracle, VelocityField, to_flow_velocity


def euler_fm(
    velocity: VelocityField,
    grid: TimeGrid,
    x0: Array,
    seed: Optional[int] = None,
    sampler: str = "euler-fm",
) -> SamplerRun:
    """Integrate dx/dt = v(x, t) with forward Euler, one evaluation per step."""
    start = velocity.evaluations
    x = np.array(x0, dtype=float)
    run = SamplerRun(sampler, grid.nodes, states=[x.copy()], seed=seed)
    for step, (t, dt) in enumerate(zip(grid.nodes[:-1], grid.intervals)):
        v = velocity(x, float(t))
        check_finite(sampler, step, float(t), x, v)
        x = x + dt * v
        check_finite(sampler, step, float(t), x)
        run.velocities.append(v)
        run.states.append(x.copy())
    run.nfe = velocity.evaluations - start
    LOG.debug(f"{sampler}: {grid.steps} steps, nfe={run.nfe}")
    return run


def flops(
    score: ScoreOracle,
    tmap: TimeMap,
    grid: TimeGrid,
    x0: Array,
    seed: Optional[int] = None,
    alg1_verbatim: bool = False,
) -> SamplerRun:
    """Euler on the flow velocity reparameterized from a diffusion score."""
    velocity = to_flow_velocity(score, tmap, alg1_verbatim=alg1_verbatim)
    return euler_fm(velocity, grid, x0, seed=seed, sampler="flops")

"""Run benchmark sweeps and convergence-order studies."""
from __future__ import annotations

import asyncio
from concurrent.futures import ThreadPoolExecutor
import csv
from dataclasses import dataclass
import itertools
import os
import threading
import time
from typing import Any, Callable, Optional, cast

import numpy as np

from pyflops.config import ExperimentConfig, SamplerSpec, TargetSpec
from pyflops.const import (
    CSV_COLUMNS,
    ENDPOINTS_DIR,
    EXIT_CELL_FAILURE,
    EXIT_OK,
    LOG,
    MANIFEST_FILE,
    ORDER_COLUMNS,
    ORDER_CSV,
    ORDER_SAMPLERS,
    PLATFORM_STRING,
    PYFLOPS_VERSION,
    REFERENCE_STREAM,
    SWEEP_CSV,
    TOOL_STRING,
)
from pyflops.exceptions import CellFailedError, ConfigError, FlopsError
from pyflops.metrics import (
    MetricReport,
    endpoint_rmse,
    energy_distance,
    moment_errors,
    order_estimate,
    sliced_w2,
)
from pyflops.sampler import Array, SamplerRun, TimeGrid, sample_init
from pyflops.sampler.adaptive import a_euler, aflops
from pyflops.sampler.ddim import ddim
from pyflops.sampler.euler import euler_fm, flops
from pyflops.sampler.heun import heun_fm
from pyflops.sampler.oracle import rk4, rk4_oracle
from pyflops.schedule import TimeMap
from pyflops.target import TargetDistribution
from pyflops.transform import ScoreOracle, VelocityField, to_flow_velocity
from pyflops.util import array_digest, from_utc_timestamp, utc_now
from pyflops.util.store import CellDict, DocumentStore, ManifestDict, load_document

NFE_PER_STEP = {"heun-fm": 2, "rk4-oracle": 4}
TRANSFORMED_SAMPLERS = ("flops", "aflops")


def reference_seed(seed: int) -> int:
    """Seed of the exact reference sample paired with a cell seed."""
    return int(np.random.SeedSequence([seed, REFERENCE_STREAM]).generate_state(1)[0])


def declared_nfe(sampler: str, steps: int) -> int:
    return steps * NFE_PER_STEP.get(sampler, 1)


def cell_id(target: str, sampler: str, steps: int, seed: int) -> str:
    return f"{target}/{sampler}/N{steps}/s{seed}"


@dataclass
class RunManifest:
    """A sweep or order-study manifest and where it lives on disk."""

    path: str
    document: ManifestDict

    @classmethod
    def load(cls, path: str) -> RunManifest:
        if not os.path.isfile(path):
            raise ConfigError(f"Manifest {path} does not exist")
        with open(path, encoding="utf-8") as manifest_file:
            document = load_document(manifest_file.read())
        return cls(path, cast(ManifestDict, document))

    @property
    def config_hash(self) -> str:
        return self.document.get("config_hash", "")

    @property
    def output(self) -> str:
        return self.document.get("output", os.path.dirname(self.path))

    @property
    def cells(self) -> dict[str, CellDict]:
        return self.document.get("cells") or {}

    @property
    def failed(self) -> list[str]:
        return sorted(key for key, cell in self.cells.items() if cell.get("status") != "ok")

    @property
    def exit_code(self) -> int:
        return EXIT_CELL_FAILURE if self.failed else EXIT_OK

    @property
    def elapsed(self) -> Optional[float]:
        """Wall seconds between start and finish, None while running."""
        started, finished = self.document.get("started_at"), self.document.get("finished_at")
        if not started or not finished:
            return None
        span = from_utc_timestamp(str(finished)) - from_utc_timestamp(str(started))
        return span.total_seconds()


def prepare_output(directory: str) -> str:
    try:
        os.makedirs(os.path.join(directory, ENDPOINTS_DIR), exist_ok=True)
    except OSError as err:
        raise ConfigError(f"output: cannot create {directory}: {err}") from err
    if not os.access(directory, os.W_OK):
        raise ConfigError(f"output: {directory} is not writable")
    return directory


def write_csv(path: str, columns: tuple[str, ...], rows: list[dict[str, Any]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as csv_file:
        writer = csv.DictWriter(csv_file, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in columns})


class BenchRunner:
    """Everything a cell needs, shared read-only between worker threads.

    :param config: Validated experiment
    :type config: :class:`ExperimentConfig`
    :param log_traces: Emit per-step ``[TRACE]`` debug lines
    :type log_traces: ``bool``
    """

    def __init__(self, config: ExperimentConfig, log_traces: bool = False) -> None:
        self.config = config
        self.log_traces = log_traces
        self.tmap: TimeMap = config.time_map
        self._sigma_end = float(config.schedule.marginal_coeffs(config.schedule.horizon)[1])
        self._cache: dict[tuple[Any, ...], Array] = {}
        self._cache_lock = threading.Lock()
        self._key_locks: dict[tuple[Any, ...], threading.Lock] = {}

    def _cached(self, key: tuple[Any, ...], build: Callable[[], Array]) -> Array:
        """Build each entry once; only threads after the same key wait on it."""
        with self._cache_lock:
            if key in self._cache:
                return self._cache[key]
            key_lock = self._key_locks.setdefault(key, threading.Lock())
        with key_lock:
            with self._cache_lock:
                if key in self._cache:
                    return self._cache[key]
            value = build()
            with self._cache_lock:
                self._cache[key] = value
        return value

    def exact_sample(self, spec: TargetSpec, seed: int, size: int) -> Array:
        return self._cached(
            ("exact", spec.name, seed, size),
            lambda: spec.target.sample_exact(size, reference_seed(seed)),
        )

    def integrated_field(self, sampler: str, target: TargetDistribution) -> Optional[VelocityField]:
        """The flow field a sampler discretizes; ``None`` for DDIM."""
        if sampler == "ddim":
            return None
        if sampler in TRANSFORMED_SAMPLERS:
            score = ScoreOracle.from_target(target, self.config.schedule)
            return to_flow_velocity(score, self.tmap, self.config.alg1_verbatim)
        return VelocityField.from_target(target)

    def oracle_endpoint(self, spec: TargetSpec, sampler: str, seed: int, x0: Array) -> Optional[Array]:
        velocity = self.integrated_field(sampler, spec.target)
        if velocity is None:
            return None
        kind = "transformed" if sampler in TRANSFORMED_SAMPLERS else "analytic"
        return self._cached(
            ("oracle", spec.name, kind, seed, x0.shape),
            lambda: rk4_oracle(velocity, x0, self.config.oracle_steps),
        )

    def run_sampler(
        self, spec: SamplerSpec, target: TargetDistribution, steps: int, x0: Array, seed: int
    ) -> SamplerRun:
        config = self.config
        score = ScoreOracle.from_target(target, config.schedule)
        if spec.id == "ddim":
            return ddim(score, config.schedule, steps, self._sigma_end * x0, seed=seed)
        grid = TimeGrid.build(config.grid, steps)
        if spec.id == "flops":
            return flops(score, self.tmap, grid, x0, seed=seed, alg1_verbatim=config.alg1_verbatim)
        if spec.id == "aflops":
            return aflops(
                score, self.tmap, grid, x0, spec.adaptive, seed=seed, alg1_verbatim=config.alg1_verbatim
            )
        velocity = VelocityField.from_target(target)
        if spec.id == "euler-fm":
            return euler_fm(velocity, grid, x0, seed=seed)
        if spec.id == "heun-fm":
            return heun_fm(velocity, grid, x0, seed=seed)
        if spec.id == "a-euler":
            return a_euler(velocity, grid, x0, spec.adaptive, seed=seed)
        return rk4(velocity, grid, x0, seed=seed)

    def _trace(self, run: SamplerRun) -> None:
        if not self.log_traces:
            return
        for step, state in enumerate(run.states[1:]):
            norm = float(np.mean(np.linalg.norm(np.atleast_2d(state), axis=-1)))
            lam = ""
            if 0 < step <= len(run.lambdas):
                lam = f", mean λ={float(np.mean(run.lambdas[step - 1])):.4f}"
            LOG.debug(f"[TRACE] {run.sampler} step {step} t={run.times[step + 1]:.6g} mean ‖x‖={norm:.6g}{lam}")

    def sweep_cell(
        self, spec: TargetSpec, sampler: SamplerSpec, steps: int, seed: int
    ) -> tuple[MetricReport, CellDict]:
        """Run one (target, sampler, N, seed) cell and measure it.

        :raises CellFailedError: on any sampler, metric or accounting failure
        """
        config = self.config
        key = cell_id(spec.name, sampler.id, steps, seed)
        try:
            x0 = sample_init(spec.target.dimension, seed, config.chains)
            started = time.perf_counter()
            run = self.run_sampler(sampler, spec.target, steps, x0, seed)
            wall_ms = 1e3 * (time.perf_counter() - started)
            self._trace(run)
            expected = declared_nfe(sampler.id, steps)
            if run.nfe != expected:
                raise CellFailedError(f"{key}: nfe {run.nfe} differs from the declared {expected}")
            endpoint = run.endpoint
            exact = self.exact_sample(spec, seed, config.chains)
            toggles = config.metrics
            swd = sliced_w2(endpoint, exact, config.projections, seed) if toggles.sliced_w2 else None
            energy = energy_distance(endpoint, exact, config.energy_points, seed) if toggles.energy else None
            mean_err, cov_err = moment_errors(endpoint, spec.target) if toggles.moments else (None, None)
            oracle_rmse = None
            if toggles.oracle:
                reference = self.oracle_endpoint(spec, sampler.id, seed, x0)
                oracle_rmse = None if reference is None else endpoint_rmse(endpoint, reference)
            endpoint_path = None
            if steps == min(config.steps) and seed == config.seeds[0]:
                endpoint_path = os.path.join(ENDPOINTS_DIR, f"{spec.name}__{sampler.id}.npy")
                np.save(os.path.join(config.output, endpoint_path), endpoint)
        except CellFailedError:
            raise
        except (FlopsError, ArithmeticError, ValueError, OSError, np.linalg.LinAlgError) as err:
            raise CellFailedError(f"{key}: {err}") from err
        report = MetricReport(
            spec.name, sampler.id, steps, run.nfe, seed, swd, energy, mean_err, cov_err, oracle_rmse, round(wall_ms, 3)
        )
        record: CellDict = {
            "target": spec.name,
            "sampler": sampler.id,
            "steps": steps,
            "seed": seed,
            "status": "ok",
            "error": None,
            "nfe": run.nfe,
            "wall_ms": report.wall_ms,
            "x0_digest": array_digest(x0),
            "report": {k: v for k, v in report.as_row().items() if k not in ("target", "sampler")},
            "endpoint": endpoint_path,
        }
        return report, record

    def order_cell(self, spec: TargetSpec, sampler: SamplerSpec) -> dict[str, Any]:
        """Endpoint RMSE against the RK4 oracle over the step ladder, then the fitted slope."""
        config = self.config
        seed = config.seeds[0]
        x0 = sample_init(spec.target.dimension, seed, config.order_chains)
        try:
            reference = self.oracle_endpoint(spec, sampler.id, seed, x0)
            assert reference is not None
            points = []
            for steps in sorted(config.order_steps):
                run = self.run_sampler(sampler, spec.target, steps, x0, seed)
                points.append((steps, endpoint_rmse(run.endpoint, reference)))
                LOG.debug(f"order {spec.name}/{sampler.id}: N={steps} rmse={points[-1][1]:.3e}")
            slope = order_estimate(points)
        except (FlopsError, ArithmeticError, ValueError, np.linalg.LinAlgError) as err:
            raise CellFailedError(f"{spec.name}/{sampler.id}: {err}") from err
        return {
            "target": spec.name,
            "sampler": sampler.id,
            "steps": ";".join(str(n) for n, _ in points),
            "rmse": ";".join(repr(r) for _, r in points),
            "slope": slope,
        }


def _base_manifest(config: ExperimentConfig, kind: str, csv_name: str) -> ManifestDict:
    return {
        "kind": kind,
        "config_hash": config.config_hash,
        "config": config.document,
        "tool_version": PYFLOPS_VERSION,
        "tool": TOOL_STRING,
        "platform": PLATFORM_STRING,
        "started_at": utc_now().isoformat(),
        "finished_at": None,
        "output": config.output,
        "csv": csv_name,
        "exact_samples": {},
        "cells": {},
        "warnings": [],
    }


async def _finish(store: DocumentStore, updates: dict[str, Any]) -> ManifestDict:
    document = await store.flush({**updates, "finished_at": utc_now().isoformat()})
    return cast(ManifestDict, document)


async def async_run_sweep(config: ExperimentConfig, log_traces: bool = False) -> RunManifest:
    """Run every (target, sampler, N, seed) cell.

    Failed cells are recorded in the manifest and never stop the sweep.
    """
    output = prepare_output(config.output)
    manifest_path = os.path.join(output, MANIFEST_FILE)
    store = DocumentStore(manifest_path)
    await store.write(dict(_base_manifest(config, "sweep", SWEEP_CSV)))
    runner = BenchRunner(config, log_traces)
    keys = sorted(
        itertools.product(config.targets, config.samplers, config.steps, config.seeds),
        key=lambda k: (k[0].name, k[1].id, k[2], k[3]),
    )
    LOG.info(f"Sweep of {len(keys)} cells on {config.workers} workers into {output}")
    loop = asyncio.get_running_loop()

    with ThreadPoolExecutor(max_workers=config.workers) as pool:

        async def job(spec: TargetSpec, sampler: SamplerSpec, steps: int, seed: int) -> Optional[MetricReport]:
            key = cell_id(spec.name, sampler.id, steps, seed)
            report: Optional[MetricReport] = None
            try:
                report, record = await loop.run_in_executor(pool, runner.sweep_cell, spec, sampler, steps, seed)
            except CellFailedError as err:
                LOG.error(f"Cell {key} failed: {err}")
                record = {
                    "target": spec.name,
                    "sampler": sampler.id,
                    "steps": steps,
                    "seed": seed,
                    "status": "failed",
                    "error": str(err),
                }
            await store.merge("cells", {key: record})
            return report

        reports = await asyncio.gather(*(job(*key) for key in keys))

    rows = [report.as_row() for report in reports if report is not None]
    write_csv(os.path.join(output, SWEEP_CSV), CSV_COLUMNS, rows)
    exact_paths = {}
    warnings = list(store.document.get("warnings") or [])
    for spec in config.targets:
        relative = os.path.join(ENDPOINTS_DIR, f"{spec.name}__exact.npy")
        try:
            np.save(os.path.join(output, relative), runner.exact_sample(spec, config.seeds[0], config.chains))
        except OSError as err:
            LOG.error(f"Could not save the exact sample of {spec.name}: {err}")
            warnings.append(f"exact sample of {spec.name} not saved: {err}")
            continue
        exact_paths[spec.name] = relative
    document = await _finish(store, {"exact_samples": exact_paths, "warnings": warnings})
    manifest = RunManifest(manifest_path, document)
    LOG.info(f"Sweep done: {len(rows)} rows, {len(manifest.failed)} failed cells")
    return manifest


async def async_run_order_study(config: ExperimentConfig, log_traces: bool = False) -> RunManifest:
    """Fit the convergence order of every eligible sampler on every target."""
    output = prepare_output(config.output)
    manifest_path = os.path.join(output, MANIFEST_FILE)
    store = DocumentStore(manifest_path)
    base = _base_manifest(config, "order-study", ORDER_CSV)
    samplers = [s for s in config.samplers if s.id in ORDER_SAMPLERS]
    skipped = sorted(s.id for s in config.samplers if s.id not in ORDER_SAMPLERS)
    if skipped:
        LOG.warning(f"Order study skips samplers without a flow-time oracle: {', '.join(skipped)}")
        base["warnings"] = [f"skipped {sampler}: no flow-time oracle" for sampler in skipped]
    await store.write(dict(base))
    runner = BenchRunner(config, log_traces)
    keys = sorted(itertools.product(config.targets, samplers), key=lambda k: (k[0].name, k[1].id))
    LOG.info(f"Order study of {len(keys)} cells, ladder {sorted(config.order_steps)}")
    loop = asyncio.get_running_loop()

    with ThreadPoolExecutor(max_workers=config.workers) as pool:

        async def job(spec: TargetSpec, sampler: SamplerSpec) -> Optional[dict[str, Any]]:
            key = f"{spec.name}/{sampler.id}"
            row: Optional[dict[str, Any]] = None
            try:
                row = await loop.run_in_executor(pool, runner.order_cell, spec, sampler)
                record: dict[str, Any] = {"status": "ok", "error": None, **row}
            except CellFailedError as err:
                LOG.error(f"Order cell {key} failed: {err}")
                record = {"target": spec.name, "sampler": sampler.id, "status": "failed", "error": str(err)}
            await store.merge("cells", {key: record})
            return row

        rows = await asyncio.gather(*(job(*key) for key in keys))

    write_csv(os.path.join(output, ORDER_CSV), ORDER_COLUMNS, [row for row in rows if row is not None])
    manifest = RunManifest(manifest_path, await _finish(store, {}))
    LOG.info(f"Order study done, {len(manifest.failed)} failed cells")
    return manifest


def run_sweep(config: ExperimentConfig, log_traces: bool = False) -> RunManifest:
    return asyncio.run(async_run_sweep(config, log_traces))


def run_order_study(config: ExperimentConfig, log_traces: bool = False) -> RunManifest:
    return asyncio.run(async_run_order_study(config, log_traces))

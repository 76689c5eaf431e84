"""Experiment configuration: schema, defaults, semantic checks and hashing."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
import math
import os
from os.path import isfile
from typing import Any, Optional

import numpy as np
import ruyaml as yaml
from ruyaml.error import YAMLError
import voluptuous as vol

from pyflops.const import (
    ADAPTIVE_SAMPLERS,
    COEFFICIENT_MODES,
    DEFAULT_BETA_MAX,
    DEFAULT_BETA_MIN,
    DEFAULT_CHAINS,
    DEFAULT_COEFFICIENT_MODE,
    DEFAULT_COSINE_S,
    DEFAULT_DELTA_EPSILON,
    DEFAULT_DISCRETE_STEPS,
    DEFAULT_ENERGY_POINTS,
    DEFAULT_HORIZON,
    DEFAULT_LAMBDA_CLAMP,
    DEFAULT_ORDER_CHAINS,
    DEFAULT_ORDER_STEPS,
    DEFAULT_OUTPUT_DIR,
    DEFAULT_PROJECTIONS,
    DEFAULT_QUADRATURE_PANELS,
    DEFAULT_SAMPLERS,
    DEFAULT_SCHEDULE_KIND,
    DEFAULT_SEEDS,
    DEFAULT_STEPS,
    DEFAULT_THETA_MAX,
    DEFAULT_WORKERS,
    ENV_OUTPUT_DIR,
    ENV_WORKERS,
    GRID_KINDS,
    INVERSE_MODES,
    LOG,
    MIN_ORACLE_STEPS,
    SAMPLER_IDS,
    SCHEDULE_KINDS,
    TARGET_KINDS,
    WEIGHT_TOL,
)
from pyflops.exceptions import ConfigError, DomainError
from pyflops.sampler import AdaptiveConfig
from pyflops.schedule import NoiseSchedule, TimeMap
from pyflops.target import PRESETS, TargetDistribution, preset_target
from pyflops.util import config_digest

Number = vol.Coerce(float)
Count = vol.All(int, vol.Range(min=1))
Pair = vol.ExactSequence([Number, Number])

SCHEDULE_SCHEMA = vol.Schema(
    {
        vol.Optional("kind", default=DEFAULT_SCHEDULE_KIND): vol.In(SCHEDULE_KINDS),
        vol.Optional("horizon", default=DEFAULT_HORIZON): Number,
        vol.Optional("beta_min", default=DEFAULT_BETA_MIN): Number,
        vol.Optional("beta_max", default=DEFAULT_BETA_MAX): Number,
        vol.Optional("theta_max", default=DEFAULT_THETA_MAX): Number,
        vol.Optional("cosine_s", default=DEFAULT_COSINE_S): Number,
        vol.Optional("alpha", default=[DEFAULT_BETA_MIN / 2, DEFAULT_BETA_MAX / 2]): Pair,
        vol.Optional("beta", default=[DEFAULT_BETA_MIN, DEFAULT_BETA_MAX]): Pair,
        vol.Optional("resolution", default=DEFAULT_QUADRATURE_PANELS): Count,
        vol.Optional("inverse", default="continuous"): vol.In(INVERSE_MODES),
        vol.Optional("discrete_steps", default=DEFAULT_DISCRETE_STEPS): Count,
    }
)

COMPONENT_SCHEMA = vol.Schema(
    {
        vol.Optional("weight", default=1.0): Number,
        vol.Required("mean"): [Number],
        vol.Optional("covariance"): [[Number]],
    }
)

TARGET_SCHEMA = vol.Schema(
    {
        vol.Required("name"): str,
        vol.Optional("preset"): vol.In(sorted(PRESETS)),
        vol.Optional("kind"): vol.In(TARGET_KINDS),
        vol.Optional("components"): vol.All([COMPONENT_SCHEMA], vol.Length(min=1)),
    }
)

SAMPLER_SCHEMA = vol.Schema(
    {
        vol.Required("id"): vol.In(SAMPLER_IDS),
        vol.Optional("lambda_clamp", default=list(DEFAULT_LAMBDA_CLAMP)): Pair,
        vol.Optional("coefficients", default=DEFAULT_COEFFICIENT_MODE): vol.In(
            COEFFICIENT_MODES
        ),
        vol.Optional("epsilon", default=DEFAULT_DELTA_EPSILON): Number,
    }
)


def _sampler_entry(value: Any) -> dict[str, Any]:
    if isinstance(value, str):
        value = {"id": value}
    result: dict[str, Any] = SAMPLER_SCHEMA(value)
    return result


METRICS_SCHEMA = vol.Schema(
    {
        vol.Optional("sliced_w2", default=True): bool,
        vol.Optional("energy", default=True): bool,
        vol.Optional("moments", default=True): bool,
        vol.Optional("oracle", default=False): bool,
    }
)

CONFIG_SCHEMA = vol.Schema(
    {
        vol.Optional("schedule", default={}): SCHEDULE_SCHEMA,
        vol.Optional("targets"): vol.All([TARGET_SCHEMA], vol.Length(min=1)),
        vol.Optional("samplers", default=list(DEFAULT_SAMPLERS)): vol.All(
            [_sampler_entry], vol.Length(min=1)
        ),
        vol.Optional("steps", default=list(DEFAULT_STEPS)): vol.All(
            [Count], vol.Length(min=1)
        ),
        vol.Optional("grid", default="uniform"): vol.In(GRID_KINDS),
        vol.Optional("chains", default=DEFAULT_CHAINS): vol.All(int, vol.Range(min=2)),
        vol.Optional("seeds", default=list(DEFAULT_SEEDS)): vol.All(
            [vol.All(int, vol.Range(min=0))], vol.Length(min=1)
        ),
        vol.Optional("metrics", default={}): METRICS_SCHEMA,
        vol.Optional("projections", default=DEFAULT_PROJECTIONS): Count,
        vol.Optional("energy_points", default=DEFAULT_ENERGY_POINTS): vol.All(
            int, vol.Range(min=2)
        ),
        vol.Optional("oracle_steps", default=MIN_ORACLE_STEPS): vol.All(
            int, vol.Range(min=MIN_ORACLE_STEPS)
        ),
        vol.Optional("order_steps", default=list(DEFAULT_ORDER_STEPS)): vol.All(
            [Count], vol.Length(min=3)
        ),
        vol.Optional("order_chains", default=DEFAULT_ORDER_CHAINS): Count,
        vol.Optional("alg1_verbatim", default=False): bool,
        vol.Optional("output", default=DEFAULT_OUTPUT_DIR): str,
        vol.Optional("workers", default=DEFAULT_WORKERS): Count,
    }
)


@dataclass(frozen=True)
class TargetSpec:
    name: str
    target: TargetDistribution


@dataclass(frozen=True)
class SamplerSpec:
    id: str
    adaptive: AdaptiveConfig = field(default_factory=AdaptiveConfig)


@dataclass(frozen=True)
class MetricToggles:
    sliced_w2: bool = True
    energy: bool = True
    moments: bool = True
    oracle: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated, fully defaulted experiment.

    ``document`` keeps the normalized mapping the dataclass was built from;
    it is what gets hashed and written to manifests.
    """

    schedule: NoiseSchedule
    inverse: str
    discrete_steps: int
    targets: tuple[TargetSpec, ...]
    samplers: tuple[SamplerSpec, ...]
    steps: tuple[int, ...]
    grid: str
    chains: int
    seeds: tuple[int, ...]
    metrics: MetricToggles
    projections: int
    energy_points: int
    oracle_steps: int
    order_steps: tuple[int, ...]
    order_chains: int
    alg1_verbatim: bool
    output: str
    workers: int
    document: dict[str, Any] = field(compare=False, repr=False, hash=False)

    @property
    def time_map(self) -> TimeMap:
        return TimeMap(self.schedule, self.inverse, self.discrete_steps)

    @property
    def config_hash(self) -> str:
        return config_hash(self.document)

    def with_overrides(
        self, output: Optional[str] = None, workers: Optional[int] = None
    ) -> ExperimentConfig:
        """Apply environment overrides, then explicit ones."""
        env_output = os.environ.get(ENV_OUTPUT_DIR)
        env_workers = os.environ.get(ENV_WORKERS)
        new_output = output or env_output or self.output
        new_workers = self.workers
        if env_workers:
            try:
                new_workers = int(env_workers)
            except ValueError as err:
                raise ConfigError(f"{ENV_WORKERS}: expected an integer, got {env_workers!r}") from err
        if workers is not None:
            new_workers = workers
        if new_workers < 1:
            raise ConfigError(f"workers: must be at least 1, got {new_workers}")
        document = {**self.document, "output": new_output, "workers": new_workers}
        return replace(self, output=new_output, workers=new_workers, document=document)


def _key_path(path: list[Any]) -> str:
    rendered = ""
    for part in path:
        if isinstance(part, int):
            rendered += f"[{part}]"
        else:
            rendered += f".{part}" if rendered else str(part)
    return rendered or "<root>"


def config_hash(document: dict[str, Any]) -> str:
    """SHA-256 of the canonical config, insensitive to list order and placement keys."""
    canonical = {k: v for k, v in document.items() if k not in ("output", "workers")}
    for key in ("steps", "seeds", "order_steps"):
        if key in canonical:
            canonical[key] = sorted(canonical[key])
    if "samplers" in canonical:
        canonical["samplers"] = sorted(canonical["samplers"], key=lambda s: s["id"])
    if "targets" in canonical:
        canonical["targets"] = sorted(canonical["targets"], key=lambda t: t["name"])
    return config_digest(canonical)


def _build_target(index: int, entry: dict[str, Any]) -> TargetSpec:
    where = f"targets[{index}]"
    name = entry["name"]
    if "preset" in entry:
        if "components" in entry or "kind" in entry:
            raise ConfigError(f"{where}: give either preset or kind with components")
        return TargetSpec(name, preset_target(entry["preset"]))
    if "components" not in entry:
        raise ConfigError(f"{where}: needs a preset or components")
    kind = entry.get("kind", "gaussian-mixture")
    components = entry["components"]
    dim = len(components[0]["mean"])
    covariances = []
    for k, component in enumerate(components):
        spot = f"{where}.components[{k}]"
        if len(component["mean"]) != dim:
            raise ConfigError(f"{spot}.mean: expected dimension {dim}")
        if kind == "dirac":
            covariances.append(np.zeros((dim, dim)))
            continue
        if "covariance" not in component:
            raise ConfigError(f"{spot}.covariance: required for {kind} targets")
        cov = np.asarray(component["covariance"], dtype=float)
        if cov.shape != (dim, dim):
            raise ConfigError(f"{spot}.covariance: expected a {dim}x{dim} matrix")
        try:
            if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-12):
                raise np.linalg.LinAlgError
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as err:
            raise ConfigError(
                f"{spot}.covariance: component {k} is not symmetric positive-definite"
            ) from err
        covariances.append(cov)
    weights = np.array([c["weight"] for c in components])
    if abs(weights.sum() - 1.0) > WEIGHT_TOL:
        raise ConfigError(
            f"{where}.components: weights sum to 1 is required, got {weights.sum():.12g}"
        )
    try:
        target = TargetDistribution(
            kind,
            weights,
            np.array([c["mean"] for c in components], dtype=float),
            np.stack(covariances),
        )
    except DomainError as err:
        raise ConfigError(f"{where}: {err}") from err
    return TargetSpec(name, target)


def _is_geometric(ladder: list[int]) -> bool:
    ordered = sorted(ladder)
    ratios = [b / a for a, b in zip(ordered, ordered[1:])]
    return ratios[0] > 1 and all(math.isclose(r, ratios[0], rel_tol=1e-9) for r in ratios)


def parse_config(document: Optional[dict[str, Any]]) -> ExperimentConfig:
    """Validate a mapping and build the :class:`ExperimentConfig`.

    :raises ConfigError: with the offending key path in the message
    """
    try:
        data: dict[str, Any] = CONFIG_SCHEMA(document or {})
    except vol.MultipleInvalid as err:
        first = err.errors[0]
        raise ConfigError(f"{_key_path(list(first.path))}: {first.msg}") from err
    if "targets" not in data:
        data["targets"] = [{"name": name, "preset": name} for name in PRESETS]
    sched = data["schedule"]
    try:
        schedule = NoiseSchedule(
            kind=sched["kind"],
            horizon=sched["horizon"],
            beta_min=sched["beta_min"],
            beta_max=sched["beta_max"],
            cosine_s=sched["cosine_s"],
            theta_max=sched["theta_max"],
            alpha=tuple(sched["alpha"]),
            beta=tuple(sched["beta"]),
            resolution=sched["resolution"],
        )
    except DomainError as err:
        raise ConfigError(f"schedule: {err}") from err
    names = [t["name"] for t in data["targets"]]
    if len(set(names)) != len(names):
        raise ConfigError("targets: names must be unique")
    targets = tuple(_build_target(i, entry) for i, entry in enumerate(data["targets"]))
    samplers = []
    for i, entry in enumerate(data["samplers"]):
        low, high = entry["lambda_clamp"]
        if low > high:
            raise ConfigError(
                f"samplers[{i}].lambda_clamp: [{low}, {high}] is an empty interval"
            )
        if not entry["epsilon"] > 0:
            raise ConfigError(f"samplers[{i}].epsilon: must be positive")
        adaptive = AdaptiveConfig((low, high), entry["coefficients"], entry["epsilon"])
        samplers.append(SamplerSpec(entry["id"], adaptive))
    ids = [s.id for s in samplers]
    if len(set(ids)) != len(ids):
        raise ConfigError("samplers: ids must be unique")
    if len(set(data["seeds"])) != len(data["seeds"]):
        raise ConfigError("seeds: all seeds must be distinct")
    if len(set(data["steps"])) != len(data["steps"]):
        raise ConfigError("steps: step counts must be distinct")
    if set(ids) & set(ADAPTIVE_SAMPLERS) and min(data["steps"]) < 2:
        raise ConfigError("steps: adaptive samplers need at least 2 steps")
    if not _is_geometric(data["order_steps"]):
        raise ConfigError("order_steps: must be a geometric ladder")
    metrics = MetricToggles(**data["metrics"])
    return ExperimentConfig(
        schedule=schedule,
        inverse=sched["inverse"],
        discrete_steps=sched["discrete_steps"],
        targets=targets,
        samplers=tuple(samplers),
        steps=tuple(data["steps"]),
        grid=data["grid"],
        chains=data["chains"],
        seeds=tuple(data["seeds"]),
        metrics=metrics,
        projections=data["projections"],
        energy_points=data["energy_points"],
        oracle_steps=data["oracle_steps"],
        order_steps=tuple(data["order_steps"]),
        order_chains=data["order_chains"],
        alg1_verbatim=data["alg1_verbatim"],
        output=data["output"],
        workers=data["workers"],
        document=data,
    )


def validate_config(path: str) -> ExperimentConfig:
    """Read, default and check a YAML experiment file.
    :param path: filename of the experiment configuration
    :type path: ``str``
    :raises ConfigError: unreadable file or invalid content
    :rtype: :class:`ExperimentConfig`
    """
    if not isfile(path):
        raise ConfigError(f"Config file {path} does not exist")
    with open(path, encoding="utf-8") as config_file:
        try:
            document = yaml.safe_load(config_file.read())
        except YAMLError as err:
            raise ConfigError(f"{path}: not valid YAML: {err}") from err
    if document is not None and not isinstance(document, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    config = parse_config(document)
    LOG.info(f"Loaded {path}: {len(config.targets)} targets, hash {config.config_hash[:12]}")
    return config

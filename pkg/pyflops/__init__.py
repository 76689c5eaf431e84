"""Define the pyflops package."""
from pyflops.bench import RunManifest, run_order_study, run_sweep
from pyflops.config import ExperimentConfig, parse_config, validate_config
from pyflops.schedule import NoiseSchedule, TimeMap
from pyflops.target import TargetDistribution, benchmark_suite
from pyflops.transform import ScoreOracle, VelocityField, to_flow_velocity

__all__ = [
    "ExperimentConfig",
    "NoiseSchedule",
    "RunManifest",
    "ScoreOracle",
    "TargetDistribution",
    "TimeMap",
    "VelocityField",
    "benchmark_suite",
    "parse_config",
    "run_order_study",
    "run_sweep",
    "to_flow_velocity",
    "validate_config",
]

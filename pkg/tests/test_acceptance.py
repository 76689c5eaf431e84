"""End-to-end sampler comparisons on the shipped benchmark suite."""
import csv
from collections import defaultdict

import numpy as np
import pytest

from pyflops.bench import run_order_study, run_sweep
from pyflops.config import parse_config

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def sweep(tmp_path_factory):
    output = tmp_path_factory.mktemp("sweep")
    config = parse_config(
        {
            "samplers": ["ddim", "euler-fm", "flops", "aflops", "a-euler"],
            "metrics": {"energy": False, "moments": False},
            "workers": 4,
            "output": str(output),
        }
    )
    manifest = run_sweep(config)
    assert manifest.exit_code == 0
    values = defaultdict(list)
    with open(output / "sweep.csv", encoding="utf-8", newline="") as csv_file:
        for row in csv.DictReader(csv_file):
            values[(row["target"], row["sampler"], int(row["N"]))].append(float(row["sliced_w2"]))
    return {key: np.asarray(v) for key, v in values.items()}


def _mean(sweep, target, sampler, steps=5):
    return float(sweep[(target, sampler, steps)].mean())


def _pooled_sd(*samples):
    return float(np.sqrt(np.mean([np.var(s, ddof=1) for s in samples])))


TARGETS = ("dirac", "gaussian", "anisotropic", "mixture3", "ring8")


def test_few_step_ranking(sweep):
    passing = []
    for target in TARGETS:
        adaptive = _mean(sweep, target, "aflops")
        plain = _mean(sweep, target, "flops")
        baseline = _mean(sweep, target, "ddim")
        spread = _pooled_sd(sweep[(target, "aflops", 5)], sweep[(target, "ddim", 5)])
        if adaptive < plain < baseline and baseline - adaptive >= 10 * spread:
            passing.append(target)
    assert len(passing) >= 4, passing


def test_adaptive_split_helps_plain_euler(sweep):
    better = [
        target
        for target in TARGETS
        if _mean(sweep, target, "a-euler") <= _mean(sweep, target, "euler-fm")
    ]
    assert len(better) >= 4, better


@pytest.mark.parametrize("target", TARGETS[1:])
def test_adaptive_error_does_not_grow_with_steps(sweep, target):
    for steps in range(5, 10):
        now, after = sweep[(target, "aflops", steps)], sweep[(target, "aflops", steps + 1)]
        assert after.mean() <= now.mean() + _pooled_sd(now, after), steps


def test_order_separation(tmp_path):
    config = parse_config(
        {
            "targets": [{"name": "mixture3", "preset": "mixture3"}],
            "samplers": ["euler-fm", "flops", "aflops", "heun-fm"],
            "order_chains": 64,
            "workers": 4,
            "output": str(tmp_path),
        }
    )
    run_order_study(config)
    with open(tmp_path / "order.csv", encoding="utf-8", newline="") as csv_file:
        slopes = {row["sampler"]: float(row["slope"]) for row in csv.DictReader(csv_file)}
    for sampler in ("euler-fm", "flops"):
        assert 0.8 <= slopes[sampler] <= 1.2, slopes
    for sampler in ("aflops", "heun-fm"):
        assert 1.7 <= slopes[sampler] <= 2.3, slopes

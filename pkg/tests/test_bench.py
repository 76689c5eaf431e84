import csv
import os
import threading

import numpy as np
import pytest

from pyflops.bench import (
    BenchRunner,
    RunManifest,
    cell_id,
    declared_nfe,
    reference_seed,
    run_order_study,
    run_sweep,
)
from pyflops.config import parse_config
from pyflops.const import CSV_COLUMNS, EXIT_CELL_FAILURE, EXIT_OK, ORDER_COLUMNS
from pyflops.exceptions import IntegrationError


def _config(output, **extra):
    document = {
        "targets": [{"name": "mixture3", "preset": "mixture3"}],
        "samplers": ["euler-fm", "aflops"],
        "steps": [5],
        "seeds": [0],
        "chains": 200,
        "projections": 16,
        "energy_points": 200,
        "output": str(output),
        **extra,
    }
    return parse_config(document)


def _rows(path):
    with open(path, encoding="utf-8", newline="") as csv_file:
        return list(csv.DictReader(csv_file))


def test_reference_seed_is_a_separate_stream():
    assert reference_seed(3) == reference_seed(3)
    assert reference_seed(3) != reference_seed(4)
    assert reference_seed(0) != 0


def test_declared_nfe():
    assert declared_nfe("heun-fm", 5) == 10
    assert declared_nfe("rk4-oracle", 5) == 20
    assert declared_nfe("aflops", 5) == 5


def test_cell_id():
    assert cell_id("ring8", "ddim", 7, 2) == "ring8/ddim/N7/s2"


def test_cache_builds_do_not_block_other_keys(tmp_path):
    runner = BenchRunner(_config(tmp_path))
    started, other_built = threading.Event(), threading.Event()
    waited = []

    def slow_build():
        started.set()
        waited.append(other_built.wait(timeout=10))
        return np.zeros(1)

    def fast_build():
        other_built.set()
        return np.ones(1)

    worker = threading.Thread(target=runner._cached, args=(("slow",), slow_build))
    worker.start()
    assert started.wait(timeout=10)
    assert runner._cached(("fast",), fast_build)[0] == 1.0
    worker.join()
    assert waited == [True]
    calls = []
    assert runner._cached(("slow",), lambda: calls.append(1) or np.ones(1))[0] == 0.0
    assert not calls


def test_small_sweep(tmp_path):
    manifest = run_sweep(_config(tmp_path))
    assert manifest.exit_code == EXIT_OK
    rows = _rows(tmp_path / "sweep.csv")
    assert len(rows) == 2
    assert tuple(rows[0]) == CSV_COLUMNS
    assert [row["sampler"] for row in rows] == ["aflops", "euler-fm"]
    assert all(row["nfe"] == "5" and row["oracle_rmse"] == "" for row in rows)
    assert all(cell["status"] == "ok" for cell in manifest.cells.values())
    assert os.path.isfile(tmp_path / "endpoints" / "mixture3__aflops.npy")
    assert np.load(tmp_path / "endpoints" / "mixture3__exact.npy").shape == (200, 2)

    reloaded = RunManifest.load(str(tmp_path / "manifest.yaml"))
    assert reloaded.config_hash == manifest.config_hash
    assert reloaded.document["finished_at"]
    assert reloaded.document["config"]["chains"] == 200
    assert reloaded.elapsed is not None and reloaded.elapsed >= 0.0


def test_sweep_is_reproducible(tmp_path):
    run_sweep(_config(tmp_path / "first"))
    run_sweep(_config(tmp_path / "second", workers=2))
    first = _rows(tmp_path / "first" / "sweep.csv")
    second = _rows(tmp_path / "second" / "sweep.csv")
    for a, b in zip(first, second):
        a.pop("wall_ms")
        b.pop("wall_ms")
    assert first == second


def test_samplers_share_initial_states(tmp_path):
    manifest = run_sweep(_config(tmp_path, samplers=["ddim", "heun-fm", "flops"]))
    digests = {cell["x0_digest"] for cell in manifest.cells.values()}
    assert len(digests) == 1
    heun = manifest.cells[cell_id("mixture3", "heun-fm", 5, 0)]
    assert heun["nfe"] == 10


def test_oracle_column(tmp_path):
    config = _config(tmp_path, samplers=["ddim", "heun-fm"], chains=16, metrics={"oracle": True})
    manifest = run_sweep(config)
    rows = {row["sampler"]: row for row in _rows(tmp_path / "sweep.csv")}
    assert rows["ddim"]["oracle_rmse"] == ""
    assert float(rows["heun-fm"]["oracle_rmse"]) > 0
    assert manifest.exit_code == EXIT_OK


def test_failed_cell_is_recorded(tmp_path, monkeypatch):
    original = BenchRunner.run_sampler

    def flaky(self, spec, target, steps, x0, seed):
        if spec.id == "aflops":
            raise IntegrationError("aflops produced a non-finite value at step 3")
        return original(self, spec, target, steps, x0, seed)

    monkeypatch.setattr(BenchRunner, "run_sampler", flaky)
    manifest = run_sweep(_config(tmp_path))
    assert manifest.exit_code == EXIT_CELL_FAILURE
    key = cell_id("mixture3", "aflops", 5, 0)
    assert manifest.failed == [key]
    assert "step 3" in manifest.cells[key]["error"]
    rows = _rows(tmp_path / "sweep.csv")
    assert [row["sampler"] for row in rows] == ["euler-fm"]


def test_unwritable_endpoint_fails_only_its_cell(tmp_path, monkeypatch):
    def refuse(path, array):
        raise OSError(f"disk full: {path}")

    monkeypatch.setattr(np, "save", refuse)
    manifest = run_sweep(_config(tmp_path, samplers=["euler-fm"], steps=[5, 6]))
    assert manifest.exit_code == EXIT_CELL_FAILURE
    assert manifest.failed == [cell_id("mixture3", "euler-fm", 5, 0)]
    assert "disk full" in manifest.cells[manifest.failed[0]]["error"]
    assert [row["N"] for row in _rows(tmp_path / "sweep.csv")] == ["6"]
    assert any("exact sample" in warning for warning in manifest.document["warnings"])


def test_toggled_off_metrics_are_blank(tmp_path):
    run_sweep(_config(tmp_path, samplers=["euler-fm"], metrics={"energy": False, "moments": False}))
    (row,) = _rows(tmp_path / "sweep.csv")
    assert row["energy"] == "" and row["mean_err"] == "" and row["cov_err"] == ""
    assert float(row["sliced_w2"]) > 0


def test_order_study_skips_ddim(tmp_path):
    config = _config(
        tmp_path,
        samplers=["ddim", "heun-fm"],
        targets=[{"name": "gaussian", "preset": "gaussian"}],
        order_steps=[10, 20, 40],
        order_chains=16,
    )
    manifest = run_order_study(config)
    assert manifest.exit_code == EXIT_OK
    assert any("ddim" in warning for warning in manifest.document["warnings"])
    (row,) = _rows(tmp_path / "order.csv")
    assert tuple(row) == ORDER_COLUMNS
    assert row["sampler"] == "heun-fm"
    assert row["steps"] == "10;20;40"
    assert 1.7 <= float(row["slope"]) <= 2.3


@pytest.mark.slow
def test_order_study_on_mixture(tmp_path):
    config = _config(tmp_path, samplers=["euler-fm", "flops"], order_chains=32)
    run_order_study(config)
    slopes = {row["sampler"]: float(row["slope"]) for row in _rows(tmp_path / "order.csv")}
    assert 0.8 <= slopes["euler-fm"] <= 1.2
    assert 0.8 <= slopes["flops"] <= 1.2

import numpy as np
import pytest

from pyflops.exceptions import DomainError
from pyflops.schedule import NoiseSchedule, TimeMap
from pyflops.transform import (
    ANALYTIC_FM,
    TRANSFORMED_DIFFUSION,
    ScoreOracle,
    VelocityField,
    frozen_velocity,
    to_flow_velocity,
)

from tests.conftest import score_for


def _relative(got: np.ndarray, want: np.ndarray) -> float:
    return float(np.linalg.norm(got - want) / (1 + np.linalg.norm(want)))


@pytest.mark.parametrize("name", ["dirac", "gaussian", "anisotropic", "mixture3", "ring8"])
def test_transformed_field_matches_analytic_velocity(suite, schedule, tmap, name):
    target = suite[name]
    field = to_flow_velocity(score_for(target, schedule), tmap)
    rng = np.random.default_rng(len(name))
    times = rng.uniform(tmap.t_min + 1e-3, 0.999, size=500)
    points = rng.normal(scale=2.0, size=(500, 2))
    worst = max(
        _relative(field(x, float(t)), target.fm_velocity(x, float(t)))
        for x, t in zip(points, times)
    )
    assert worst <= 1e-6


def test_dirac_field_is_straight_line(dirac, schedule, tmap, rng):
    field = to_flow_velocity(score_for(dirac, schedule), tmap)
    x = rng.normal(size=(16, 2))
    for t in (0.1, 0.5, 0.97):
        assert np.allclose(field(x, t), -x / (1 - t), rtol=1e-12, atol=0.0)


def test_gaussian_field_closed_form(gaussian, schedule, tmap):
    field = to_flow_velocity(score_for(gaussian, schedule), tmap)
    x = np.array([[0.5, -1.0], [2.0, 0.3]])
    for t in (0.05, 0.5, 0.9):
        expected = x * (2 * t - 1) / (t**2 + (1 - t) ** 2)
        assert np.allclose(field(x, t), expected, rtol=1e-10)


def test_frozen_below_start(dirac, schedule, tmap):
    field = to_flow_velocity(score_for(dirac, schedule), tmap)
    x = np.array([1.0, -2.0])
    expected = -x / (1 - tmap.t_min)
    for t in (0.0, tmap.t_min / 2):
        assert np.allclose(field(x, t), expected, rtol=1e-12)
    assert np.allclose(frozen_velocity(field, tmap, x), expected, rtol=1e-12)


def test_verbatim_frozen_branch(dirac, schedule, tmap):
    field = to_flow_velocity(score_for(dirac, schedule), tmap, alg1_verbatim=True)
    x = np.array([1.0, -2.0])
    assert np.allclose(field(x, 0.0), -x, rtol=1e-12)
    assert np.allclose(frozen_velocity(field, tmap, x), field(x, tmap.t_min / 2), rtol=1e-12)
    assert np.allclose(field(x, 0.5), -x / 0.5, rtol=1e-12)


def test_one_score_query_per_evaluation(mixture3, schedule, tmap):
    score = score_for(mixture3, schedule)
    field = to_flow_velocity(score, tmap)
    x = np.zeros((8, 2))
    for t in (0.0, 0.3, 0.9, 1.0 - 1e-9):
        field(x, t)
    assert field.evaluations == 4
    assert score.evaluations == 4
    assert field.provenance == TRANSFORMED_DIFFUSION


def test_final_time_is_capped(gaussian, schedule, tmap):
    field = to_flow_velocity(score_for(gaussian, schedule), tmap)
    x = np.array([0.3, 0.4])
    assert np.allclose(field(x, 1.0 - 1e-12), field(x, 1.0 - 1e-6))
    with pytest.raises(DomainError):
        field(x, 1.0)
    assert field.evaluations == 2


def test_schedules_must_agree(gaussian):
    score = ScoreOracle.from_target(gaussian, NoiseSchedule(kind="vp-cosine"))
    with pytest.raises(DomainError, match="different schedules"):
        to_flow_velocity(score, TimeMap(NoiseSchedule()))


def test_score_domain(gaussian, schedule):
    score = score_for(gaussian, schedule)
    with pytest.raises(DomainError):
        score(np.zeros(2), 0.0)
    assert score.evaluations == 0


def test_noise_prediction_adapter(mixture3, schedule, rng):
    exact = score_for(mixture3, schedule)

    def predict_noise(y, tau):
        alpha_bar, sigma = schedule.marginal_coeffs(tau)
        return -sigma * mixture3.diffusion_score(y, alpha_bar, sigma)

    adapted = ScoreOracle.from_noise_prediction(predict_noise, schedule)
    y = rng.normal(size=(12, 2))
    for tau in (0.05, 0.4, 1.0):
        assert np.allclose(adapted(y, tau), exact(y, tau), rtol=1e-10)


def test_data_prediction_adapter(mixture3, schedule, rng):
    exact = score_for(mixture3, schedule)

    def predict_data(y, tau):
        alpha_bar, sigma = schedule.marginal_coeffs(tau)
        return mixture3.posterior_mean(y, alpha_bar, sigma)

    adapted = ScoreOracle.from_data_prediction(predict_data, schedule)
    y = rng.normal(size=(12, 2))
    for tau in (0.05, 0.4, 1.0):
        assert np.allclose(adapted(y, tau), exact(y, tau), rtol=1e-8, atol=1e-10)


def test_denoise_is_posterior_mean(mixture3, schedule, rng):
    score = score_for(mixture3, schedule)
    y = rng.normal(size=(6, 2))
    alpha_bar, sigma = schedule.marginal_coeffs(0.3)
    assert np.allclose(score.denoise(y, 0.3), mixture3.posterior_mean(y, alpha_bar, sigma))


def test_field_only_depends_on_coefficients(mixture3, rng):
    linear = NoiseSchedule()
    generic = NoiseSchedule(kind="generic-quadrature", alpha=(0.05, 10.0), beta=(0.1, 20.0))
    field_linear = to_flow_velocity(score_for(mixture3, linear), TimeMap(linear))
    field_generic = to_flow_velocity(score_for(mixture3, generic), TimeMap(generic))
    x = rng.normal(size=(4, 2))
    for t in (0.2, 0.6):
        assert _relative(field_generic(x, t), field_linear(x, t)) <= 1e-6


def test_discrete_inverse_near_final_time(gaussian, schedule):
    tmap = TimeMap(schedule, inverse="discrete", discrete_steps=100)
    field = to_flow_velocity(score_for(gaussian, schedule), tmap)
    assert np.all(np.isfinite(field(np.array([0.5, 0.5]), 1.0 - 1e-9)))


def test_function_field_counts(rng):
    field = VelocityField.from_function(lambda x, t: -x)
    x = rng.normal(size=(3, 2))
    assert np.array_equal(field(x, 0.5), -x)
    assert field.evaluations == 1
    assert field.provenance == ANALYTIC_FM
    field.counter.reset()
    assert field.evaluations == 0

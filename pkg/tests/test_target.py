import numpy as np
import pytest

from pyflops.exceptions import DomainError
from pyflops.target import NoisyMarginal, TargetDistribution, benchmark_suite, preset_target


def _symmetric_pair(offset: float = 1.5) -> TargetDistribution:
    means = [[offset, 0.5], [-offset, -0.5]]
    cov = [[0.3, 0.1], [0.1, 0.2]]
    return TargetDistribution.mixture([0.5, 0.5], means, [cov, cov])


def test_suite_has_five_targets(suite):
    assert sorted(suite) == ["anisotropic", "dirac", "gaussian", "mixture3", "ring8"]
    assert all(target.dimension == 2 for target in suite.values())
    assert suite["ring8"].components == 8


def test_unknown_preset():
    with pytest.raises(DomainError):
        preset_target("moons")


def test_weights_must_sum_to_one():
    with pytest.raises(DomainError, match="weights sum to 1"):
        TargetDistribution.mixture([0.5, 0.6], [[0.0], [1.0]], [[[1.0]], [[1.0]]])


def test_non_spd_component_is_named():
    covs = [np.eye(2), [[1.0, 2.0], [2.0, 1.0]]]
    with pytest.raises(DomainError, match="component 1"):
        TargetDistribution.mixture([0.5, 0.5], [[0.0, 0.0], [1.0, 1.0]], covs)


def test_dirac_samples_are_copies():
    target = TargetDistribution.dirac([1.0, -2.0])
    samples = target.sample_exact(10, seed=3)
    assert np.array_equal(samples, np.tile([1.0, -2.0], (10, 1)))


def test_gaussian_sample_mean():
    target = TargetDistribution.gaussian([1.0, -1.0], np.eye(2))
    samples = target.sample_exact(100_000, seed=0)
    assert np.all(np.abs(samples.mean(axis=0) - [1.0, -1.0]) <= 4 / np.sqrt(100_000))


def test_sampling_is_deterministic(mixture3):
    assert np.array_equal(mixture3.sample_exact(50, seed=9), mixture3.sample_exact(50, seed=9))


def test_component_frequencies():
    target = TargetDistribution.mixture([0.3, 0.7], [[-10.0], [10.0]], [[[0.01]], [[0.01]]])
    samples = target.sample_exact(100_000, seed=1)
    assert abs(np.mean(samples[:, 0] < 0) - 0.3) <= 0.006


def test_exact_moments_of_symmetric_pair():
    target = _symmetric_pair()
    mu = np.array([1.5, 0.5])
    assert np.allclose(target.mean(), 0.0, atol=1e-15)
    expected = np.array([[0.3, 0.1], [0.1, 0.2]]) + np.outer(mu, mu)
    assert np.allclose(target.covariance(), expected, atol=1e-14)


def test_gaussian_score(gaussian):
    y = np.array([[0.5, -1.2], [2.0, 0.1]])
    alpha_bar, sigma = 0.6, 0.8
    expected = -y / (alpha_bar**2 + sigma**2)
    assert np.allclose(gaussian.diffusion_score(y, alpha_bar, sigma), expected, rtol=1e-12)


def test_dirac_score(dirac):
    y = np.array([0.3, -0.4])
    assert np.allclose(dirac.diffusion_score(y, 0.9, 0.2), -y / 0.04, rtol=1e-12)


def test_score_matches_log_density_gradient(mixture3, rng):
    marginal = NoisyMarginal.diffusion(mixture3, 0.8, 0.6)
    step = 1e-5
    for y in rng.normal(scale=2.0, size=(20, 2)):
        grad = np.empty(2)
        for axis in range(2):
            shift = np.zeros(2)
            shift[axis] = step
            grad[axis] = (marginal.log_density(y + shift) - marginal.log_density(y - shift)) / (
                2 * step
            )
        score = marginal.score(y)
        assert np.linalg.norm(grad - score) <= 1e-6 * (1 + np.linalg.norm(score))


def test_gaussian_log_density_at_origin(gaussian):
    marginal = NoisyMarginal.diffusion(gaussian, 0.6, 0.5)
    expected = -np.log(2 * np.pi * (0.36 + 0.25))
    assert float(marginal.log_density(np.zeros(2))) == pytest.approx(expected, rel=1e-12)


def test_symmetric_mixture_density(rng):
    marginal = NoisyMarginal.diffusion(_symmetric_pair(), 0.7, 0.4)
    y = rng.normal(size=(30, 2))
    assert np.allclose(marginal.log_density(y), marginal.log_density(-y), rtol=1e-12)


def test_responsibilities_sum_to_one(mixture3, rng):
    resp = NoisyMarginal.diffusion(mixture3, 0.5, 0.5).responsibilities(rng.normal(size=(40, 2)))
    assert resp.shape == (40, 3)
    assert np.allclose(resp.sum(axis=-1), 1.0)


def test_dirac_posterior_mean():
    target = TargetDistribution.dirac([1.0, 2.0])
    y = np.array([[5.0, -3.0], [0.0, 0.0]])
    assert np.allclose(target.posterior_mean(y, 0.5, 0.5), [[1.0, 2.0], [1.0, 2.0]])


def test_gaussian_posterior_mean(gaussian):
    y = np.array([1.0, -0.5])
    alpha_bar, sigma = 0.7, 0.3
    expected = alpha_bar * y / (alpha_bar**2 + sigma**2)
    assert np.allclose(gaussian.posterior_mean(y, alpha_bar, sigma), expected, rtol=1e-12)


@pytest.mark.parametrize("sigma", [0.05, 0.5, 1.0, 5.0])
def test_tweedie_identity(mixture3, rng, sigma):
    alpha_bar = 0.8
    y = rng.normal(scale=3.0, size=(1000, 2))
    posterior = mixture3.posterior_mean(y, alpha_bar, sigma)
    tweedie = (y + sigma**2 * mixture3.diffusion_score(y, alpha_bar, sigma)) / alpha_bar
    error = np.linalg.norm(posterior - tweedie, axis=-1)
    assert np.all(error <= 1e-10 * (1 + np.linalg.norm(y, axis=-1)))


def test_single_component_mixture_is_gaussian(rng):
    cov = [[2.0, 0.6], [0.6, 0.5]]
    single = TargetDistribution.mixture([1.0], [[1.0, -1.0]], [cov])
    plain = TargetDistribution.gaussian([1.0, -1.0], cov)
    y = rng.normal(size=(25, 2))
    assert np.allclose(single.diffusion_score(y, 0.6, 0.8), plain.diffusion_score(y, 0.6, 0.8))
    assert np.allclose(single.fm_velocity(y, 0.4), plain.fm_velocity(y, 0.4))


def test_dirac_velocity(dirac):
    x = np.array([[1.0, 2.0], [-0.5, 0.25]])
    assert np.allclose(dirac.fm_velocity(x, 0.3), -x / 0.7, rtol=1e-14)


@pytest.mark.parametrize("t", [0.0, 0.25, 0.5, 0.9])
def test_gaussian_velocity(gaussian, t):
    x = np.array([0.4, -1.3])
    expected = x * (2 * t - 1) / (t**2 + (1 - t) ** 2)
    assert np.allclose(gaussian.fm_velocity(x, t), expected, rtol=1e-12)


def test_velocity_near_start(mixture3, rng):
    t = 1e-6
    x = rng.normal(size=(10, 2))
    velocity = mixture3.fm_velocity(x, t)
    assert np.allclose(velocity, mixture3.mean() - x, atol=1e-3)


def test_velocity_rejects_final_time(gaussian):
    with pytest.raises(DomainError):
        gaussian.fm_velocity(np.zeros(2), 1.0)


def test_score_needs_noise(gaussian):
    with pytest.raises(DomainError):
        gaussian.diffusion_score(np.zeros(2), 1.0, 0.0)


def test_far_points_stay_finite():
    ring = preset_target("ring8")
    y = np.array([[1e3, -1e3], [-750.0, 20.0], [0.0, 999.0]])
    assert np.all(np.isfinite(ring.diffusion_score(y, 0.9, 0.1)))
    assert np.all(np.isfinite(ring.fm_velocity(y, 0.95)))


@pytest.mark.slow
@pytest.mark.parametrize("t", [0.2, 0.4])
def test_velocity_against_monte_carlo(mixture3, t):
    probes = np.array([[0.0, 0.0], [1.0, 1.0], [-0.8, 0.3]])
    numer = np.zeros_like(probes)
    denom = np.zeros(len(probes))
    for chunk in range(10):
        draws = mixture3.sample_exact(1_000_000, seed=100 + chunk)
        for i, x in enumerate(probes):
            residual = x - t * draws
            log_w = -0.5 * np.sum(residual**2, axis=-1) / (1 - t) ** 2
            weights = np.exp(log_w)
            numer[i] += weights @ draws
            denom[i] += weights.sum()
    posterior = numer / denom[:, None]
    estimate = (posterior - probes) / (1 - t)
    exact = mixture3.fm_velocity(probes, t)
    for got, want in zip(estimate, exact):
        assert np.linalg.norm(got - want) <= 3e-3 * (1 + np.linalg.norm(want))


def test_benchmark_suite_is_fresh():
    first, second = benchmark_suite(), benchmark_suite()
    assert first["gaussian"] is not second["gaussian"]

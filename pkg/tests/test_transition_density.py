import numpy as np
import pytest
from scipy import stats

from lanlab.errors import InvalidSpec
from lanlab.finite_chain import softmax_three_state, symmetric_two_state
from lanlab.levy_noise import IncrementSamplerConfig, LevyMeasureSpec, LevyNoise
from lanlab.sde_model import affine_drift, sine_drift
from lanlab.transition_density import (BinnedKde, DegenerateBandwidthWarning, FourierSdeModel,
                                       KdeScoreConfig, KdeSdeModel, estimated_score_from_sampler,
                                       kde_density, l2_derivative_residual, score_martingale_residual,
                                       silverman_bandwidth)

TS = {"kind": "tempered_stable", "alpha": 0.5, "lambda": 1.0, "c": 1.0}
SECOND_MOMENT_001 = 1.77112848907467694


@pytest.fixture(scope="module")
def noise():
    return LevyNoise(LevyMeasureSpec.from_dict(TS), IncrementSamplerConfig(0.01))


@pytest.fixture(scope="module")
def fourier(noise):
    return FourierSdeModel(affine_drift(), noise, 0.5)


def test_silverman_formula():
    x = np.arange(10.0)
    assert silverman_bandwidth(x) == pytest.approx(1.06 * x.std(ddof=1) * 10**-0.2, rel=1e-15)
    with pytest.warns(DegenerateBandwidthWarning):
        assert silverman_bandwidth(np.full(32, 3.0)) == pytest.approx(4.0 * 32**-0.2)


def test_kde_of_normal_samples():
    s = np.random.default_rng(0).standard_normal(50_000)
    cfg = KdeScoreConfig(bandwidth=0.1)
    y = np.array([-1.0, 0.0, 1.5])
    # the estimate targets the smoothed law N(0, 1 + b^2)
    assert np.allclose(kde_density(s, y, cfg), stats.norm.pdf(y, scale=np.sqrt(1.01)), atol=0.01)
    binned = BinnedKde(s, 0.1)
    assert np.allclose(np.exp(binned.logpdf(y)), kde_density(s, y, cfg), rtol=1e-6)


def test_fd_score_gaussian_location():
    sampler = lambda th, M, rng: th + rng.standard_normal(M)
    cfg = KdeScoreConfig(M=200_000, bandwidth=0.15, fd_step=0.05)
    y = np.array([-0.5, 0.3, 1.0])
    g = estimated_score_from_sampler(sampler, 0.2, y, cfg, np.random.default_rng(3))
    # common random numbers shift the KDE rigidly, so the score is -d/dy log KDE
    seed = int(np.random.default_rng(3).integers(2**63))
    s = sampler(0.2, cfg.M, np.random.default_rng(seed))
    z = (y[:, None] - s[None, :]) / 0.15
    phi = np.exp(-0.5 * z * z)
    exact = (phi * z).sum(axis=1) / phi.sum(axis=1) / 0.15
    assert np.allclose(g, exact, atol=2e-3)
    assert np.allclose(g, (y - 0.2) / (1 + 0.15**2), atol=0.05)


def test_config_validation():
    with pytest.raises(InvalidSpec):
        KdeScoreConfig(M=10)
    with pytest.raises(InvalidSpec):
        KdeScoreConfig(bandwidth="scott")


def test_fourier_density_moments(fourier):
    theta, x = 1.0, 0.8
    ys = fourier.y_grid(theta, x, size=20001)
    p = np.exp(fourier.logpdf(theta, x, ys))
    mass = np.trapezoid(p, ys)
    a = 1 - theta * 0.5 / 64
    w = a ** np.arange(64)
    mean = a**64 * x
    var = (w**2).sum() * (0.5 / 64) * SECOND_MOMENT_001
    assert mass == pytest.approx(1.0, abs=1e-6)
    assert np.trapezoid(ys * p, ys) == pytest.approx(mean, abs=1e-6)
    # the grid clips the far tails
    assert np.trapezoid((ys - mean) ** 2 * p, ys) == pytest.approx(var, rel=1e-3)


def test_fourier_rejects_nonaffine(noise):
    with pytest.raises(InvalidSpec):
        FourierSdeModel(sine_drift(), noise, 0.5)


def test_fourier_score_martingale(fourier):
    for x in (0.0, 1.0, -2.0):
        m, se = score_martingale_residual(fourier, 1.0, x, 50_000, np.random.default_rng(7))
        assert abs(m) < 4 * se


def test_kde_transform_validated():
    with pytest.raises(InvalidSpec):
        KdeScoreConfig(transform="log")


def test_asinh_kde_tracks_fourier_score_in_tails(noise, fourier):
    cfg = KdeScoreConfig(M=100_000, bandwidth=0.05, transform="asinh")
    kde = KdeSdeModel(affine_drift(), noise, 0.5, cfg, np.random.default_rng(0), 1.0)
    ys = np.linspace(-1.0, 1.0, 9)
    lf = fourier.logpdf(1.0, 0.0, ys)
    assert np.max(np.abs(np.exp(kde.logpdf(1.0, 0.0, ys)) - np.exp(lf))) < 0.05 * np.exp(lf).max()
    grid = kde.y_grid(1.0, 0.0)
    dens = np.exp(kde.logpdf(1.0, 0.0, grid))
    assert np.trapezoid(dens, grid) == pytest.approx(1.0, abs=0.02)
    # tail endpoints where the untransformed estimator's score blows up
    y = np.array([-6.0, -4.0, 4.0, 6.0])
    assert np.all(np.abs(kde.score(1.0, 0.0, y) - fourier.score(1.0, 0.0, y)) < 2.0)


def test_fourier_l2_derivative_converges(fourier):
    r1 = l2_derivative_residual(fourier, 1.0, 0.02, 0.5)
    r2 = l2_derivative_residual(fourier, 1.0, 0.01, 0.5)
    assert r2 < r1
    assert r2 < 1e-4


def test_kde_agrees_with_fourier_in_bulk(noise, fourier):
    kde = KdeSdeModel(affine_drift(), noise, 0.5, KdeScoreConfig(M=100_000), np.random.default_rng(0), 1.0)
    ys = np.linspace(-1.0, 1.0, 9)
    lf = fourier.logpdf(1.0, 0.0, ys)
    lk = kde.logpdf(1.0, 0.0, ys)
    assert np.max(np.abs(np.exp(lk) - np.exp(lf))) < 0.05 * np.exp(lf).max()
    # same x-equivariance as the exact model
    assert np.allclose(kde.logpdf(1.0, 2.0, ys + fourier._gain(1.0) * 2.0), lk)


def test_kde_score_martingale_antithetic(noise):
    kde = KdeSdeModel(affine_drift(), noise, 0.5, KdeScoreConfig(M=50_000), np.random.default_rng(1), 1.0)
    assert np.array_equal(kde.tape.increments[25_000:], -kde.tape.increments[:25_000])
    m, se = score_martingale_residual(kde, 1.0, 1.0, 20_000, np.random.default_rng(2))
    assert abs(m) < 4 * se


@pytest.mark.parametrize("factory,theta", [(symmetric_two_state, 0.3), (softmax_three_state, 0.4)])
def test_chain_martingale_and_l2_exact(factory, theta):
    chain = factory()
    for x in range(chain.n_states):
        m, se = score_martingale_residual(chain, theta, x, 0, None)
        assert abs(m) < 1e-14 and se == 0.0
        # residual is O(delta^2)
        r1 = l2_derivative_residual(chain, theta, 1e-2, x)
        r2 = l2_derivative_residual(chain, theta, 5e-3, x)
        assert r2 == pytest.approx(r1 / 4, rel=0.05)

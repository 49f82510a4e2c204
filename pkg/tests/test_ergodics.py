import math

import numpy as np
import pytest

from lanlab.ergodics import (ErgodicSummary, burn_in, fisher_growth, invariant_moments, khasminskii_average,
                             longrun_variance, mixing_fit, sigma2_plugin, sign_functional,
                             stationary_scores)
from lanlab.finite_chain import sample_chain, softmax_three_state, symmetric_two_state
from lanlab.sde_model import Path


def ar1(phi, n, seed):
    rng = np.random.default_rng(seed)
    e = rng.standard_normal(n)
    x = np.empty(n)
    x[0] = e[0] / math.sqrt(1 - phi**2)
    for i in range(1, n):
        x[i] = phi * x[i - 1] + e[i]
    return x


def test_burn_in_rule():
    assert burn_in(1000, 0.01) == 100
    assert burn_in(1000, 0.01, h=0.5) == 5000
    assert burn_in(10**6, 0.01, h=0.5) == 10**5


def test_kappa_left_point_and_w1():
    vals = np.arange(11.0)
    path = Path(np.arange(11) * 0.5, vals, 0.5)
    kap = khasminskii_average(path, [5.0, 2.0])
    assert [k.T for k in kap] == [2.0, 5.0]
    assert np.array_equal(kap[0].samples, [0, 1, 2, 3])
    assert kap[1].weights.sum() == pytest.approx(1.0)
    # uniform on {0..3} vs {0..9}
    assert kap[1].w1_to_previous == pytest.approx(3.0, rel=1e-12)
    with pytest.raises(ValueError):
        khasminskii_average(path, [6.0])


def test_invariant_moments_gaussian():
    x = np.random.default_rng(0).standard_normal(400_001)
    path = Path(np.arange(len(x)) * 1.0, x, 1.0)
    rows = invariant_moments(khasminskii_average(path, [1e5, 2e5, 4e5]), [2.0, 4.0])
    assert rows[0]["estimate"] == pytest.approx(1.0, abs=4 * rows[0]["se"])
    assert rows[1]["estimate"] == pytest.approx(3.0, abs=4 * rows[1]["se"])
    assert not rows[0]["unstable"]
    with pytest.raises(ValueError):
        invariant_moments(khasminskii_average(path, [1e5]), [5.5], beta=1.0)


def test_invariant_moments_flags_drift():
    vals = np.r_[np.ones(100), 3 * np.ones(101)]
    path = Path(np.arange(201) * 1.0, vals, 1.0)
    rows = invariant_moments(khasminskii_average(path, [100.0, 200.0]), [2.0])
    assert rows[0]["drift"] == pytest.approx((5 - 1) / 5)
    assert rows[0]["unstable"]


def test_longrun_variance_ar1():
    x = ar1(0.5, 400_000, 1)
    plateau, table = longrun_variance(x, [100, 500, 1000, 2000])
    # 1 / (1 - phi)^2
    assert plateau == pytest.approx(4.0, rel=0.1)
    assert [b for b, _ in table] == [100, 500, 1000, 2000]
    with pytest.raises(ValueError):
        longrun_variance(x[:1000], [100])


def test_mixing_fit_ar1_rate():
    x = ar1(0.5, 400_000, 2)
    fit = mixing_fit(x, [1, 2, 3, 4, 5])
    assert fit.c_hat == pytest.approx(math.log(2), rel=0.05)
    assert fit.C_hat == pytest.approx(1 / 0.75, rel=0.05)


def test_mixing_fit_iid_is_unresolved():
    fit = mixing_fit(np.random.default_rng(3).standard_normal(100_000), [5, 10, 20])
    assert math.isinf(fit.c_hat)
    with pytest.raises(ValueError):
        mixing_fit(np.zeros(50), [10])


def test_chain_scores_are_uncorrelated():
    chain = symmetric_two_state()
    v = sample_chain(chain, 0.3, 0, 400_000, np.random.default_rng(4)).values
    g = stationary_scores(chain, 0.3, v)
    s2, se = sigma2_plugin(chain, 0.3, v)
    assert s2 == pytest.approx(1 / 0.21, abs=4 * se)
    assert sigma2_plugin(chain, 0.3, (v[:-1], v[1:]))[0] == s2
    plateau, _ = longrun_variance(g, [50, 200, 1000])
    assert plateau == pytest.approx(1 / 0.21, rel=0.1)


def test_chain_mixing_rate_is_second_eigenvalue():
    chain = symmetric_two_state()
    v = sample_chain(chain, 0.3, 0, 400_000, np.random.default_rng(5)).values.astype(float)
    fit = mixing_fit(v, [1, 2, 3, 4])
    assert fit.c_hat == pytest.approx(-math.log(0.4), rel=0.1)
    assert set(np.unique(sign_functional([0.0, 1.0, 2.0]))) == {-1.0, 0.0, 1.0}


def test_fisher_growth_exact_and_mc():
    chain = softmax_three_state()
    exact = fisher_growth(chain, 0.4, 0, [10, 100, 1000])
    assert exact[-1][1] == pytest.approx(
        chain.exact_fisher_info(0.4, 0, 1000) / 1000, rel=1e-15)
    mc = fisher_growth(chain, 0.4, 0, [10, 100], mode="mc", R=200, rng=np.random.default_rng(6))
    assert mc[1][1] == pytest.approx(exact[1][1], rel=0.05)
    with pytest.raises(ValueError):
        fisher_growth(chain, 0.4, 0, [100, 10])


def test_summary_to_dict_is_plain():
    path = Path(np.arange(11) * 1.0, np.arange(11.0), 1.0)
    kap = khasminskii_average(path, [5.0, 10.0])
    s = ErgodicSummary(kap, [], 1.0, 0.1, 1.0, [(1, 1.0)], mixing_fit(np.arange(100.0), [1]), [(1, 1.0)])
    d = s.to_dict()
    assert d["kappa_T"][1]["mean"] == pytest.approx(4.5)
    assert d["kappa_T"][0]["mass"] == pytest.approx(1.0)

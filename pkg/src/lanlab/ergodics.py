"""Invariant-measure, long-run variance, mixing and Fisher-growth diagnostics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

DRIFT_FLAG = 0.20


@dataclass
class KappaEstimate:
    """Equal-weight empirical time average of a path up to horizon ``T``."""

    T: float
    samples: np.ndarray
    weights: np.ndarray
    w1_to_previous: float = math.nan


def burn_in(n_points, dt, h=None):
    """Default burn-in (in grid points): 10% of the path or ``100 h``, whichever is larger."""
    k = int(math.ceil(0.1 * n_points))
    if h is not None:
        k = max(k, int(math.ceil(100 * h / dt)))
    return k


def khasminskii_average(path, T_list):
    """Time averages ``kappa_T`` of a fine path for each horizon in ``T_list``.

    Parameters
    ----------
    path : Path
        Fine-grid path with ``times`` starting at 0.
    T_list : sequence of float

    Returns
    -------
    list of KappaEstimate
        Sorted by ``T``, with the Wasserstein-1 distance to the previous horizon.
    """
    T_list = sorted(float(T) for T in T_list)
    if T_list[-1] > path.times[-1] + 1e-9 * path.dt:
        raise ValueError(f"path covers t <= {path.times[-1]}, need {T_list[-1]}")
    out = []
    prev = None
    for T in T_list:
        k = int(round(T / path.dt))
        # left-point rule for (1/T) int_0^T delta_{X_t} dt
        s = np.asarray(path.values[:max(k, 1)], dtype=float)
        w = np.full(len(s), 1.0 / len(s))
        w1 = math.nan if prev is None else float(stats.wasserstein_distance(prev, s))
        out.append(KappaEstimate(T, s, w, w1))
        prev = s
    return out


def _batch_se(x, n_batches=20):
    x = np.asarray(x, dtype=float)
    if len(x) < 2 * n_batches:
        return float(x.std(ddof=1) / np.sqrt(len(x))) if len(x) > 1 else 0.0
    m = len(x) // n_batches
    means = x[:m * n_batches].reshape(n_batches, m).mean(axis=1)
    return float(means.std(ddof=1) / np.sqrt(n_batches))


def invariant_moments(kappa, p_list, beta=None):
    """Empirical ``int |y|^p kappa_T(dy)`` per horizon, with batch-means standard errors.

    Parameters
    ----------
    kappa : list of KappaEstimate
    p_list : sequence of float
    beta : float, optional
        When given, every ``p`` must lie below ``4 + beta``.

    Returns
    -------
    list of dict
        One row per ``p`` with the estimate at the largest horizon, its
        standard error, the relative drift between the two largest horizons
        and an ``unstable`` flag (drift above 20%).
    """
    for p in p_list:
        if not p > 0 or (beta is not None and p >= 4 + beta):
            raise ValueError(f"p={p} outside (0, {'inf' if beta is None else 4 + beta})")
    kappa = sorted(kappa, key=lambda k: k.T)
    rows = []
    for p in p_list:
        per_T = [float(np.sum(k.weights * np.abs(k.samples) ** p)) for k in kappa]
        last = kappa[-1]
        if len(per_T) > 1:
            a, b = per_T[-2], per_T[-1]
            drift = abs(b - a) / abs(b) if b != 0 else (0.0 if a == 0 else math.inf)
        else:
            drift = math.nan
        rows.append({"p": float(p), "estimate": per_T[-1], "se": _batch_se(np.abs(last.samples) ** p),
                     "by_T": dict(zip([k.T for k in kappa], per_T)), "drift": drift,
                     "unstable": bool(drift > DRIFT_FLAG)})
    return rows


def sigma2_plugin(model, theta0, stationary_pairs):
    """Mean of ``g(theta0; X, Y)^2`` over stationary consecutive pairs, with standard error.

    Parameters
    ----------
    stationary_pairs : tuple of arrays ``(x, y)`` or a 1-d array of consecutive states

    Returns
    -------
    estimate, se : float
    """
    if isinstance(stationary_pairs, tuple):
        x, y = stationary_pairs
    else:
        v = np.asarray(stationary_pairs)
        x, y = v[:-1], v[1:]
    g2 = np.asarray(model.score(theta0, x, y), dtype=float) ** 2
    # consecutive pairs are dependent; batch means keep the error honest
    return float(g2.mean()), _batch_se(g2)


def longrun_variance(score_sequence, batch_len_list):
    """Non-overlapping batch-means estimates of ``sum_k Cov(g_0, g_k)``.

    Returns
    -------
    plateau : float
        Mean of the estimates at the two largest batch lengths.
    table : list of (batch_len, estimate)
    """
    g = np.asarray(score_sequence, dtype=float)
    batch_len_list = sorted(int(b) for b in batch_len_list)
    if len(g) < 100 * batch_len_list[-1]:
        raise ValueError("sequence must be at least 100 times the largest batch length")
    table = []
    for b in batch_len_list:
        k = len(g) // b
        means = g[:k * b].reshape(k, b).mean(axis=1)
        table.append((b, float(b * means.var(ddof=1))))
    tail = [v for _, v in table[-2:]]
    return float(np.mean(tail)), table


def sign_functional(x):
    """``sign(x - median(x))``, a bounded functional for mixing diagnostics."""
    x = np.asarray(x, dtype=float)
    return np.sign(x - np.median(x))


@dataclass
class MixingFit:
    C_hat: float
    c_hat: float
    residual: float
    lags: list = field(default_factory=list)
    autocov: list = field(default_factory=list)
    noise_floor: float = 0.0


def mixing_fit(path_functionals, lag_grid, noise_sd=2.0):
    """Fit ``|acov(lag)| ~ C exp(-c lag)`` on the log scale.

    Lags whose absolute autocovariance is below ``noise_sd`` times the i.i.d.
    standard error ``var / sqrt(N)`` are excluded. When none remain the
    decay is too fast to resolve and ``c_hat = inf`` is returned.
    """
    f = np.asarray(path_functionals, dtype=float)
    N = len(f)
    lag_grid = sorted(int(k) for k in lag_grid)
    if lag_grid[-1] > N / 10:
        raise ValueError("lags must not exceed a tenth of the path length")
    f = f - f.mean()
    var = float(np.mean(f * f))
    acov = [float(np.mean(f[:N - k] * f[k:])) for k in lag_grid]
    floor = noise_sd * var / math.sqrt(N)
    use = [(k, abs(a)) for k, a in zip(lag_grid, acov) if abs(a) > floor and k > 0]
    if not use:
        return MixingFit(math.nan, math.inf, math.nan, lag_grid, acov, floor)
    if len(use) == 1:
        k, a = use[0]
        c = math.log(var / a) / k if var > a else math.inf
        return MixingFit(var, c, 0.0, lag_grid, acov, floor)
    k = np.array([u[0] for u in use], dtype=float)
    la = np.log([u[1] for u in use])
    slope, intercept = np.polyfit(k, la, 1)
    resid = float(np.sqrt(np.mean((la - (intercept + slope * k)) ** 2)))
    return MixingFit(float(np.exp(intercept)), float(-slope), resid, lag_grid, acov, floor)


def fisher_growth(model, theta0, x0, n_grid, mode="exact", R=None, rng=None, rngs=None):
    """Rows ``(n, I_n / n)`` over an increasing ``n_grid``.

    ``mode="mc"`` simulates one set of ``R`` paths of length ``max(n_grid)``
    and reads every ``n`` off its cumulative sums.
    """
    n_grid = [int(n) for n in n_grid]
    if any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise ValueError("n_grid must be increasing")
    if mode == "exact":
        return [(n, model.exact_fisher_info(theta0, x0, n) / n) for n in n_grid]
    if rngs is None:
        rngs = [np.random.default_rng(s) for s in rng.integers(0, 2**63, size=R)]
    from .lan_analysis import CHUNK, _path_scores

    cum = []
    for start in range(0, len(rngs), CHUNK):
        paths = model.sample_paths(theta0, x0, n_grid[-1], rngs[start:start + CHUNK])
        cum.append(np.cumsum(_path_scores(model, theta0, paths) ** 2, axis=1))
    cum = np.vstack(cum)
    cum = cum[np.isfinite(cum[:, -1])]
    return [(n, float(cum[:, n - 1].mean() / n)) for n in n_grid]


@dataclass
class ErgodicSummary:
    kappa_T: list
    invariant_moment_table: list
    sigma2_plugin: float
    sigma2_plugin_se: float
    sigma2_longrun: float
    longrun_table: list
    mixing: MixingFit
    fisher_growth: list

    def to_dict(self):
        return {
            "kappa_T": [{"T": k.T, "mass": float(k.weights.sum()), "w1_to_previous": k.w1_to_previous,
                         "mean": float(np.sum(k.weights * k.samples))} for k in self.kappa_T],
            "invariant_moments": self.invariant_moment_table,
            "sigma2_plugin": self.sigma2_plugin, "sigma2_plugin_se": self.sigma2_plugin_se,
            "sigma2_longrun": self.sigma2_longrun, "longrun_table": self.longrun_table,
            "mixing": {"C_hat": self.mixing.C_hat, "c_hat": self.mixing.c_hat,
                       "residual": self.mixing.residual},
            "fisher_growth": self.fisher_growth,
        }


def stationary_scores(model, theta0, values):
    """Scores of consecutive pairs (``ScoreUndefined`` propagates)."""
    return np.asarray(model.score(theta0, values[:-1], values[1:]), dtype=float)

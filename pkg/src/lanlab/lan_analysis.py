"""LAN decomposition, sufficient-condition statistics and replicated experiments.

For a sample ``X_0, ..., X_n`` and local parameter ``theta0 + r_n u`` with
``r_n = I_n(theta0)^{-1/2}``:

* ``Delta_n = r_n sum_j g(theta0; X_{j-1}, X_j)``
* ``log Z_n(u) = sum_j log p(theta0 + r_n u; X_{j-1}, X_j) / p(theta0; ...)``
* ``Psi_n(u) = log Z_n(u) - u Delta_n + u^2 / 2``
* ``zeta_j = sqrt(p(theta0 + r_n u) / p(theta0)) - 1`` per step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import LanlabError, LikelihoodUndefined, NonpositiveFisher, ScoreUndefined
from .harness.streams import PURPOSE_RATE, PURPOSE_REPLICATION, derive_stream

CHUNK = 25  # replications per work unit; fixed so results never depend on thread count
V_GRID_POINTS = 17
MAX_DISCARD_FRACTION = 0.05


@dataclass
class RateSequence:
    I_n: float
    r_n: float
    se: float = 0.0  # Monte Carlo standard error of I_n (0 when exact)

    @classmethod
    def from_information(cls, I_n, se=0.0):
        if not I_n > 0:
            raise NonpositiveFisher(f"I_n = {I_n}")
        return cls(float(I_n), float(I_n) ** -0.5, float(se))


@dataclass
class LanDecomposition:
    u: float
    delta_n: float
    log_Z: float
    psi_n: float


@dataclass
class ZetaDiagnostics:
    sum_zeta_sq: float
    max_abs_zeta: float
    sum_abs_zeta_cubed: float
    centered_combo: float
    cond_sum_zeta_sq: float = math.nan


def _as_values(sample):
    return sample.values if hasattr(sample, "values") else np.asarray(sample)


def _children(rng, count):
    return [np.random.default_rng(s) for s in rng.integers(0, 2**63, size=count)]


def _path_scores(model, theta, paths):
    """Scores along each row of ``paths``; rows with an undefined score come back as NaN."""
    out = np.empty((paths.shape[0], paths.shape[1] - 1))
    for i, row in enumerate(paths):
        try:
            out[i] = model.score(theta, row[:-1], row[1:])
        except ScoreUndefined:
            out[i] = np.nan
    return out


def fisher_and_rate(model, theta0, x0, n, mode="exact", R=None, rng=None, rngs=None):
    """Fisher information ``I_n(theta0)`` and the rate ``r_n = I_n^{-1/2}``.

    ``mode="exact"`` needs an exact model; ``mode="mc"`` averages
    ``sum_j g^2`` over ``R`` simulated paths (paths with an undefined score
    are dropped).
    """
    if mode == "exact":
        if not model.exact:
            raise ValueError("exact mode requires an exact model")
        return RateSequence.from_information(model.exact_fisher_info(theta0, x0, n))
    if mode != "mc":
        raise ValueError(f"unknown mode {mode!r}")
    if rngs is None:
        if R is None or rng is None:
            raise ValueError("mc mode needs R and rng, or rngs")
        rngs = _children(rng, R)
    totals = []
    for start in range(0, len(rngs), CHUNK):
        paths = model.sample_paths(theta0, x0, n, rngs[start:start + CHUNK])
        totals.append(np.sum(_path_scores(model, theta0, paths) ** 2, axis=1))
    totals = np.concatenate(totals)
    totals = totals[np.isfinite(totals)]
    if totals.size == 0:
        raise NonpositiveFisher("no path with a defined score")
    se = totals.std(ddof=1) / np.sqrt(totals.size) if totals.size > 1 else 0.0
    return RateSequence.from_information(totals.mean(), se)


def delta_n(sample, model, theta0, rate):
    """``r_n sum_j g(theta0; X_{j-1}, X_j)``."""
    v = _as_values(sample)
    return float(rate.r_n * np.sum(model.score(theta0, v[:-1], v[1:])))


def _log_ratios(model, theta0, u, rate, v):
    theta1 = theta0 + rate.r_n * u
    if not model.contains(theta1):
        raise ValueError(f"theta0 + r_n u = {theta1} outside {model.theta_interval}")
    l0 = model.logpdf(theta0, v[:-1], v[1:])
    l1 = model.logpdf(theta1, v[:-1], v[1:])
    if not (np.all(np.isfinite(l0)) and np.all(np.isfinite(l1))):
        raise LikelihoodUndefined("zero density along the sample")
    return l1 - l0


def loglik_ratio(sample, model, theta0, u, rate, delta=None):
    """Direct ``log Z_n(u)`` and its LAN decomposition."""
    v = _as_values(sample)
    if u == 0:
        log_z = 0.0
    else:
        log_z = float(np.sum(_log_ratios(model, theta0, u, rate, v)))
    d = delta_n(sample, model, theta0, rate) if delta is None else delta
    return log_z, LanDecomposition(u, d, log_z, log_z - u * d + 0.5 * u * u)


def zeta_diagnostics(sample, model, theta0, u, rate, scores=None):
    """Aggregates of ``zeta_j`` along one sample.

    ``cond_sum_zeta_sq`` is the sum of conditional expectations
    ``E[zeta_j^2 | X_{j-1}]``, available for exact (counting) models only.
    """
    v = _as_values(sample)
    if scores is None:
        scores = model.score(theta0, v[:-1], v[1:])
    if u == 0:
        return ZetaDiagnostics(0.0, 0.0, 0.0, 0.0, 0.0 if model.exact else math.nan)
    lr = _log_ratios(model, theta0, u, rate, v)
    zeta = np.expm1(0.5 * lr)
    combo = 2 * zeta.sum() - rate.r_n * u * np.sum(scores)
    cond = math.nan
    if model.exact:
        theta1 = theta0 + rate.r_n * u
        ys = model.support(None)
        xs = ys[:, None]
        hell = ((np.sqrt(model.density(theta1, xs, ys[None, :]))
                 - np.sqrt(model.density(theta0, xs, ys[None, :]))) ** 2).sum(axis=1)
        cond = float(hell[v[:-1]].sum())
    a = np.abs(zeta)
    return ZetaDiagnostics(float(np.sum(zeta**2)), float(a.max()), float(np.sum(a**3)), float(combo), cond)


def anderson_darling_normal(x):
    """Anderson-Darling test of ``x`` against the fully specified N(0, 1).

    The p-value uses the Marsaglia & Marsaglia (2004) approximation of the
    null distribution with its finite-sample correction.

    Returns
    -------
    statistic, pvalue : float
    """
    x = np.sort(np.asarray(x, dtype=float))
    n = len(x)
    if n < 2:
        raise ValueError("need at least two observations")
    i = np.arange(1, n + 1)
    logcdf = stats.norm.logcdf(x)
    logsf = stats.norm.logsf(x)
    a2 = -n - np.mean((2 * i - 1) * (logcdf + logsf[::-1]))
    return float(a2), float(1.0 - _ad_cdf(n, a2))


def _adinf(z):
    if z <= 0:
        return 0.0
    if z < 2:
        return (math.exp(-1.2337141 / z) / math.sqrt(z)
                * (2.00012 + (0.247105 - (0.0649821 - (0.0347962 - (0.011672 - 0.00168691 * z) * z)
                                          * z) * z) * z))
    return math.exp(-math.exp(1.0776 - (2.30695 - (0.43424 - (0.082433 - (0.008056 - 0.0003146 * z)
                                                            * z) * z) * z) * z))


def _ad_errfix(n, x):
    if x > 0.8:
        return (-130.2137 + (745.2337 - (1705.091 - (1950.646 - (1116.360 - 255.7844 * x) * x) * x)
                             * x) * x) / n
    c = 0.01265 + 0.1757 / n
    if x < c:
        t = x / c
        t = math.sqrt(t) * (1 - t) * (49 * t - 102)
        return t * (0.0037 / (n * n) + 0.00078 / n + 0.00006) / n
    t = (x - c) / (0.8 - c)
    t = -0.00022633 + (6.54034 - (14.6538 - (14.458 - (8.259 - 1.91864 * t) * t) * t) * t) * t
    return t * (0.04213 / n + 0.01365 / (n * n))


def _ad_cdf(n, z):
    x = _adinf(z)
    return min(1.0, max(0.0, x + _ad_errfix(n, x)))


def _v_grid(N):
    return np.linspace(-N, N, V_GRID_POINTS)


def condition_stats(model, theta0, x0, n_grid, p_exponent, N_sup, R, rng=None, rngs=None,
                    rate_R=None, rate_rngs=None, beta=None):
    """Condition 3-5 statistics of the sufficient LAN criterion, per ``n``.

    * ``cond3``: ``r_n^2 sum_j g^2`` (mean and standard error over ``R`` paths)
    * ``cond4``: ``r_n^p sum_j |g|^p`` (Monte Carlo mean; exact value too for exact models)
    * ``cond5``: ``sup_v r_n^2 sum_j E int (q(theta0 + r_n v) - q(theta0))^2 dlambda`` on a
      17-point grid of ``v in [-N, N]``. Exact for counting models; for estimated
      models the integral is replaced by its majorant
      ``(r_n v)^2 / 4 E (d_theta g + g^2 / 2)^2``.

    Returns
    -------
    list of dict, one per ``n``
    """
    if p_exponent <= 2:
        raise ValueError("p_exponent must exceed 2")
    if beta is not None and not model.exact and p_exponent >= 4 + beta:
        raise ValueError(f"p_exponent must lie below 4 + beta = {4 + beta}")
    n_grid = sorted(int(n) for n in n_grid)
    n_max = n_grid[-1]
    if rngs is None:
        rngs = _children(rng, R)
    g2_cum, gp_cum, maj_cum = [], [], []
    for start in range(0, len(rngs), CHUNK):
        paths = model.sample_paths(theta0, x0, n_max, rngs[start:start + CHUNK])
        g = _path_scores(model, theta0, paths)
        g2_cum.append(np.cumsum(g**2, axis=1))
        gp_cum.append(np.cumsum(np.abs(g) ** p_exponent, axis=1))
        if not model.exact:
            dg = np.vstack([model.score_derivative(theta0, row[:-1], row[1:]) for row in paths])
            maj_cum.append(np.cumsum((dg + 0.5 * g**2) ** 2, axis=1))
    g2_cum = np.vstack(g2_cum)
    gp_cum = np.vstack(gp_cum)
    keep = np.isfinite(g2_cum[:, -1])
    g2_cum, gp_cum = g2_cum[keep], gp_cum[keep]
    if not model.exact:
        maj_cum = np.vstack(maj_cum)[keep]
    v_grid = _v_grid(N_sup)
    rows = []
    for n in n_grid:
        if model.exact:
            rate = fisher_and_rate(model, theta0, x0, n)
        else:
            rate = fisher_and_rate(model, theta0, x0, n, mode="mc", R=rate_R, rng=rng, rngs=rate_rngs)
        r = rate.r_n
        c3 = r**2 * g2_cum[:, n - 1]
        c4 = r**p_exponent * gp_cum[:, n - 1]
        row = {
            "n": n, "I_n": rate.I_n, "r_n": r,
            "cond3_mean": float(c3.mean()), "cond3_se": float(c3.std(ddof=1) / np.sqrt(len(c3))),
            "cond3_var": float(c3.var(ddof=1)),
            "cond4_mean": float(c4.mean()), "cond4_se": float(c4.std(ddof=1) / np.sqrt(len(c4))),
            "paths": int(len(c3)),
        }
        if model.exact:
            occ = model.marginals(theta0, x0, n).sum(axis=0)
            P0 = model.P(theta0)
            gtab = model._score_table(theta0)
            with np.errstate(invalid="ignore"):
                per_state = np.nansum(P0 * np.abs(gtab) ** p_exponent, axis=1)
            row["cond4_exact"] = float(r**p_exponent * occ @ per_state)
            ys = model.support(None)
            xs, yy = ys[:, None], ys[None, :]
            q0 = model.sqrt_derivative(theta0, xs, yy)
            vals = []
            for v in v_grid:
                th = theta0 + r * v
                if not model.contains(th):
                    continue
                w = ((model.sqrt_derivative(th, xs, yy) - q0) ** 2).sum(axis=1)
                vals.append(r**2 * occ @ w)
            row["cond5"] = float(max(vals))
        else:
            m = maj_cum[:, n - 1].mean()
            row["cond5"] = float(max(r**2 * (r * v) ** 2 / 4 * m for v in v_grid))
        rows.append(row)
    return rows


@dataclass
class LanReport:
    """Outcome of a replicated LAN experiment."""

    theta0: float
    n: int
    u_list: list
    R: int
    seed: int
    rate: RateSequence
    rows: list  # dicts: rep, u, delta_n, log_Z, psi_n and zeta statistics
    deltas: np.ndarray
    discarded: int
    ks: tuple
    ad: tuple
    psi_summary: dict
    zeta_summary: dict
    config: dict = field(default_factory=dict)

    def summary(self):
        return {
            "theta0": self.theta0, "n": self.n, "u_list": list(self.u_list), "R": self.R,
            "seed": self.seed, "I_n": self.rate.I_n, "r_n": self.rate.r_n, "I_n_se": self.rate.se,
            "replications_used": int(len(self.deltas)), "discarded": self.discarded,
            "delta_mean": float(np.mean(self.deltas)),
            "delta_mean_se": float(np.std(self.deltas, ddof=1) / np.sqrt(len(self.deltas))),
            "delta_var": float(np.var(self.deltas, ddof=1)),
            "ks": {"statistic": self.ks[0], "pvalue": self.ks[1]},
            "ad": {"statistic": self.ad[0], "pvalue": self.ad[1]},
            "psi": self.psi_summary, "zeta": self.zeta_summary, "config": self.config,
        }


def _replicate(model, theta0, x0, n, u_list, rate, seed, indices):
    rngs = [derive_stream(seed, i, PURPOSE_REPLICATION) for i in indices]
    paths = model.sample_paths(theta0, x0, n, rngs)
    out = []
    for rep, v in zip(indices, paths):
        try:
            g = model.score(theta0, v[:-1], v[1:])
            d = float(rate.r_n * np.sum(g))
            rows = []
            for u in u_list:
                _, dec = loglik_ratio(v, model, theta0, u, rate, delta=d)
                z = zeta_diagnostics(v, model, theta0, u, rate, scores=g)
                rows.append({"rep": rep, "u": u, "delta_n": d, "log_Z": dec.log_Z, "psi_n": dec.psi_n,
                             "sum_zeta_sq": z.sum_zeta_sq, "max_abs_zeta": z.max_abs_zeta,
                             "sum_abs_zeta_cubed": z.sum_abs_zeta_cubed,
                             "centered_combo": z.centered_combo, "cond_sum_zeta_sq": z.cond_sum_zeta_sq})
            out.append((rep, d, rows))
        except (ScoreUndefined, LikelihoodUndefined):
            out.append((rep, None, []))
    return out


def lan_experiment(model, theta0, scheme, u_list=(-2, -1, 1, 2), R=1000, seed=0, rate_mode=None,
                   rate_R=200, executor=None, config=None):
    """Replicate samples under ``theta0`` and test the LAN conclusion.

    Replication ``i`` draws from ``derive_stream(seed, i)`` and replications
    are processed in fixed chunks, so the report is identical for any
    ``executor`` (anything with an order-preserving ``map``).
    """
    if R < 100:
        raise ValueError("R must be >= 100")
    x0, n = scheme.x0, scheme.n
    if rate_mode is None:
        rate_mode = "exact" if model.exact else "mc"
    if rate_mode == "exact":
        rate = fisher_and_rate(model, theta0, x0, n)
    else:
        rate = fisher_and_rate(model, theta0, x0, n, mode="mc",
                               rngs=[derive_stream(seed, i, PURPOSE_RATE) for i in range(rate_R)])
    chunks = [list(range(s, min(R, s + CHUNK))) for s in range(0, R, CHUNK)]
    work = lambda idx: _replicate(model, theta0, x0, n, list(u_list), rate, seed, idx)
    results = list(executor.map(work, chunks)) if executor is not None else [work(c) for c in chunks]
    rows, deltas, discarded = [], [], 0
    for chunk in results:
        for rep, d, rep_rows in chunk:
            if d is None:
                discarded += 1
                continue
            deltas.append(d)
            rows.extend(rep_rows)
    if discarded > MAX_DISCARD_FRACTION * R:
        raise LanlabError(f"{discarded} of {R} replications had undefined likelihoods")
    deltas = np.asarray(deltas)
    ks = stats.kstest(deltas, "norm")
    psi_summary, zeta_summary = {}, {}
    for u in u_list:
        sub = [r for r in rows if r["u"] == u]
        psi = np.abs([r["psi_n"] for r in sub])
        psi_summary[str(u)] = {"mean_abs": float(psi.mean()), "median_abs": float(np.median(psi)),
                               "q90_abs": float(np.quantile(psi, 0.9))}
        zeta_summary[str(u)] = {k: float(np.median([r[k] for r in sub]))
                                for k in ("sum_zeta_sq", "max_abs_zeta", "sum_abs_zeta_cubed",
                                          "centered_combo", "cond_sum_zeta_sq")}
    return LanReport(theta0, n, list(u_list), R, seed, rate, rows, deltas, discarded,
                     (float(ks.statistic), float(ks.pvalue)), anderson_darling_normal(deltas),
                     psi_summary, zeta_summary, dict(config or {}))

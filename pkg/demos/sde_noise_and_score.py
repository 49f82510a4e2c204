"""Tempered-stable noise, an OU-type drift and the estimated transition score.

Run with ``python demos/sde_noise_and_score.py``. Checks condition H on the
noise, simulates one observed path and compares the simulation-based score
with the Fourier reference available for affine drifts.
"""
import numpy as np

from lanlab import (IncrementSamplerConfig, KdeScoreConfig, KdeSdeModel, LevyMeasureSpec, LevyNoise,
                    ObservationScheme, check_condition_H, make_drift, simulate_observations)
from lanlab.transition_density import FourierSdeModel, score_martingale_residual

spec = LevyMeasureSpec.from_dict({"kind": "tempered_stable", "alpha": 0.5, "lambda": 1.0, "c": 1.0})
noise = LevyNoise(spec, IncrementSamplerConfig(0.01))
h = check_condition_H(spec)
print(f"condition H ok={h.ok}  C0={max(h.c0_first, h.c0_second)}  moment={h.moment_4_beta:.4f}")

z = noise.increments(0.5, 200_000, np.random.default_rng(0))
print(f"Z_0.5 (truncated at 0.01): mean {z.mean():+.4f}  var {z.var():.4f}")

drift = make_drift("affine")
theta = 1.0
obs = simulate_observations(drift, theta, noise, ObservationScheme(0.5, 2000, 0.0),
                            [np.random.default_rng(1)])[0]
print(f"path: {len(obs)} observations, range [{obs.min():.2f}, {obs.max():.2f}]")

exact = FourierSdeModel(drift, noise, 0.5)
cfg = KdeScoreConfig(M=100_000, bandwidth=0.05, transform="asinh")
kde = KdeSdeModel(drift, noise, 0.5, cfg, np.random.default_rng(2), theta)

x, y = obs[:-1][:500], obs[1:][:500]
g_kde, g_exact = kde.score(theta, x, y), exact.score(theta, x, y)
print(f"score correlation (KDE vs Fourier): {np.corrcoef(g_kde, g_exact)[0, 1]:.4f}")
print(f"mean g^2: KDE {np.mean(g_kde**2):.4f}  Fourier {np.mean(g_exact**2):.4f}")

for x0 in (0.0, 1.0):
    m, se = score_martingale_residual(kde, theta, x0, 50_000, np.random.default_rng(3))
    print(f"E[g | x={x0}] = {m:+.5f} +- {se:.5f}")

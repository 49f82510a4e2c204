"""Acceptance criteria, each run at its stated tolerance.

Every criterion prints one ``PASS``/``FAIL`` line (also collected in the
terminal summary). A sub-check that is known to be unattainable is marked
``xfail(strict=True)`` in its own test, so it still runs and its criterion
line still reads ``FAIL``.
"""
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import integrate

import lanlab
from conftest import ACCEPTANCE_LINES
from lanlab import ergodics as erg
from lanlab.finite_chain import identity_suite, symmetric_two_state
from lanlab.harness.cli import main
from lanlab.harness.config import load_config
from lanlab.harness.runners import build_model, ergodic_summary, noise_spec
from lanlab.harness.streams import PURPOSE_AUX, derive_stream, derive_streams
from lanlab.lan_analysis import condition_stats, lan_experiment
from lanlab.levy_noise import IncrementSamplerConfig, LevyNoise, check_condition_H
from lanlab.sde_model import ObservationScheme
from lanlab.transition_density import score_martingale_residual

CONFIGS = Path(lanlab.__file__).parent / "configs"
THETA0 = 0.3
U_LIST = (-2, -1, 1, 2)
# 2 * int_0.01^inf u^0.5 e^-u du (mpmath, 30 digits)
SECOND_MOMENT_001 = 1.77112848907467694


def record(num, title, checks, seconds, limit):
    """Print the criterion line. ``checks``: list of (label, ok, detail)."""
    timing_ok = seconds < limit
    ok = timing_ok and all(c[1] for c in checks)
    parts = [f"{label} {'ok' if good else 'FAILED'} ({detail})" for label, good, detail in checks]
    parts.append(f"runtime {seconds:.1f}s < {limit}s {'ok' if timing_ok else 'FAILED'}")
    line = f"{'PASS' if ok else 'FAIL'} criterion {num} [{title}]: " + "; ".join(parts)
    print(line)
    ACCEPTANCE_LINES.append(line)
    return ok, timing_ok


def timed(fn, *args, **kw):
    t = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t


@pytest.fixture(scope="module")
def chain_lan():
    chain = symmetric_two_state()
    scheme = ObservationScheme(1.0, 10_000, 0)
    return timed(lan_experiment, chain, THETA0, scheme, U_LIST, R=2000, seed=0)


@pytest.fixture(scope="module")
def sde_setup():
    cfg = load_config(CONFIGS / "tempered_stable_ou.json")
    model, t_build = timed(build_model, cfg, cfg["seed"])
    return cfg, model, t_build


@pytest.fixture(scope="module")
def sde_ergodic(sde_setup):
    cfg, model, _ = sde_setup
    return timed(ergodic_summary, cfg, model, cfg["seed"])


def zeta_checks(rep):
    checks = []
    for u in U_LIST:
        z = rep.summary()["zeta"][str(u)]
        target = u * u / 4
        checks.append((f"u={u} median sum zeta^2 within 10% of {target}",
                       abs(z["sum_zeta_sq"] - target) <= 0.1 * target, f"{z['sum_zeta_sq']:.4f}"))
        checks.append((f"u={u} median centered combo within 0.05 of {-target}",
                       abs(z["centered_combo"] + target) <= 0.05, f"{z['centered_combo']:.4f}"))
        checks.append((f"u={u} median max|zeta| <= 0.05", z["max_abs_zeta"] <= 0.05, f"{z['max_abs_zeta']:.4f}"))
        checks.append((f"u={u} median sum|zeta|^3 <= 0.01", z["sum_abs_zeta_cubed"] <= 0.01,
                       f"{z['sum_abs_zeta_cubed']:.5f}"))
    return checks


def test_criterion_1_chain_identities(tmp_path):
    code, seconds = timed(main, ["chain-oracle", "--out", str(tmp_path), "--no-plots"])
    res = json.loads((tmp_path / "chain_oracle.json").read_text())["residuals"]
    names = ["score_equals_2q_over_sqrt_p", "score_mean_zero", "row_stochastic", "fisher_dp_vs_enumeration",
             "fisher_hand_formula", "sigma2_equals_stationary_I_n_over_n"]
    checks = [(name, res[name] <= 1e-12, f"{res[name]:.1e}") for name in names]
    checks.append(("exit code 0", code == 0, str(code)))
    ok, timing_ok = record(1, "exact-chain identity suite", checks, seconds, 1.0)
    assert ok
    # the suite alone, without CLI and file output
    assert all(v <= 1e-12 for v in identity_suite(symmetric_two_state(), THETA0, n_max=6).values())


def test_criterion_2_chain_lan(chain_lan):
    rep, seconds = chain_lan
    s = rep.summary()
    checks = [("AD not rejected at 1%", s["ad"]["pvalue"] >= 0.01, f"p={s['ad']['pvalue']:.3f}"),
              ("var(Delta_n) in [0.9, 1.1]", 0.9 <= s["delta_var"] <= 1.1, f"{s['delta_var']:.4f}")]
    for u in U_LIST:
        med = s["psi"][str(u)]["median_abs"]
        checks.append((f"u={u} median|Psi_n| <= 0.05", med <= 0.05, f"{med:.4f}"))
    ok, _ = record(2, "LAN on the exact chain, n=1e4, R=2000", checks, seconds, 120)
    assert ok


def test_criterion_3_zeta_diagnostics(chain_lan):
    rep, seconds = chain_lan
    checks = zeta_checks(rep)
    record(3, "zeta diagnostics on the exact chain", checks, seconds, 120)
    # every sub-check except the |u| = 2 cube sum, which has its own xfail test
    attainable = [c for c in checks if not (c[0].startswith(("u=-2", "u=2")) and "|zeta|^3" in c[0])]
    failed = [c for c in attainable if not c[1]]
    assert not failed and seconds < 120


@pytest.mark.xfail(strict=True, reason="leading order of sum|zeta|^3 at |u|=2, n=1e4 is 0.0127 > 0.01")
def test_criterion_3_cube_sum_at_u2(chain_lan):
    rep, _ = chain_lan
    z = rep.summary()["zeta"]
    assert z["2"]["sum_abs_zeta_cubed"] <= 0.01 and z["-2"]["sum_abs_zeta_cubed"] <= 0.01


def test_criterion_3_cube_sum_matches_leading_order(chain_lan):
    # |u|^3 / 8 * n^{-1/2} * E|g|^3 / sigma^3 for the symmetric chain
    rep, _ = chain_lan
    sigma2 = 1 / (THETA0 * (1 - THETA0))
    e_g3 = THETA0 ** -2 + (1 - THETA0) ** -2
    lead = 8 / 8 / math.sqrt(10_000) * e_g3 / sigma2**1.5
    assert lead == pytest.approx(0.01266, abs=1e-5)
    for u in ("2", "-2"):
        assert rep.summary()["zeta"][u]["sum_abs_zeta_cubed"] == pytest.approx(lead, rel=0.05)


def test_criterion_4_condition_decay():
    chain = symmetric_two_state()
    rows, seconds = timed(condition_stats, chain, THETA0, 0, [100, 1000, 10_000], 4.0, 2.0, 2000,
                          rngs=derive_streams(0, range(2000), PURPOSE_AUX))
    ns = np.log([r["n"] for r in rows])
    slope4 = np.polyfit(ns, np.log([r["cond4_mean"] for r in rows]), 1)[0]
    slope5 = np.polyfit(ns, np.log([r["cond5"] for r in rows]), 1)[0]
    checks = [(f"n={r['n']} cond3 within 3 SE of 1", abs(r["cond3_mean"] - 1) <= 3 * r["cond3_se"],
               f"{r['cond3_mean']:.4f} +- {r['cond3_se']:.4f}") for r in rows]
    checks.append(("cond4 (p=4) slope in [-1.2, -0.8]", -1.2 <= slope4 <= -0.8, f"{slope4:.3f}"))
    checks.append(("cond5 (N=2) slope in [-1.2, -0.8]", -1.2 <= slope5 <= -0.8, f"{slope5:.3f}"))
    ok, _ = record(4, "condition decay on the exact chain", checks, seconds, 120)
    assert ok


def test_criterion_5_levy_noise():
    t0 = time.perf_counter()
    cfg = load_config(CONFIGS / "tempered_stable_ou.json")
    spec, _, beta = noise_spec(cfg)
    rep = check_condition_H(spec, beta=beta)
    t, delta, N = 0.5, 0.01, 1_000_000
    noise = LevyNoise(spec, IncrementSamplerConfig(delta))
    z = noise.increments(t, N, derive_stream(0, 0, PURPOSE_AUX))
    # quadrature of the truncated measure, independent of the sampler
    m2 = sum(integrate.quad(lambda u: u * u * spec.density(u), a, b, limit=200)[0]
             for a, b in [(-np.inf, -1), (-1, -delta), (delta, 1), (1, np.inf)])
    mean_q = spec.increment_mean(t)
    var_q = t * m2
    se_mean = z.std(ddof=1) / math.sqrt(N)
    c = z - z.mean()
    se_var = math.sqrt((np.mean(c**4) - np.mean(c**2) ** 2) / N)
    seconds = time.perf_counter() - t0
    checks = [
        ("quadrature matches mpmath second moment", abs(m2 - SECOND_MOMENT_001) < 1e-8, f"{m2:.10f}"),
        ("mean within 3 SE", abs(z.mean() - mean_q) <= 3 * se_mean,
         f"{z.mean():.5f} vs {mean_q:.5f}, SE {se_mean:.5f}"),
        ("variance within 3 SE", abs(z.var(ddof=1) - var_q) <= 3 * se_var,
         f"{z.var(ddof=1):.5f} vs {var_q:.5f}, SE {se_var:.5f}"),
        ("condition H passes", rep.ok, str(rep.ok)),
        ("H(iii) constant = 2.5", abs(rep.c0_first - 2.5) <= 1e-6, f"{rep.c0_first:.8f}"),
    ]
    ok, _ = record(5, "Levy noise correctness", checks, seconds, 60)
    assert ok


def test_criterion_6_sde_pipeline(sde_setup, sde_ergodic):
    cfg, model, t_build = sde_setup
    summ, t_erg = sde_ergodic
    t0 = time.perf_counter()
    checks = []
    for k, x in enumerate((0.0, 1.0, -2.0)):
        m, se = score_martingale_residual(model, 1.0, x, 100_000, derive_stream(0, 10 + k, PURPOSE_AUX))
        checks.append((f"x={x} |E g| < 3 SE", abs(m) < 3 * se, f"{m:.5f}, SE {se:.5f}"))
    growth = dict(summ.fisher_growth)[2000]
    checks.append(("I_n/n at n=2000 within 15% of sigma2 plug-in",
                   abs(growth - summ.sigma2_plugin) <= 0.15 * summ.sigma2_plugin,
                   f"{growth:.4f} vs {summ.sigma2_plugin:.4f} +- {summ.sigma2_plugin_se:.4f}"))
    lan = cfg["lan"]
    rep = lan_experiment(model, 1.0, ObservationScheme(0.5, 2000, 0.0), U_LIST, R=500, seed=0,
                         rate_mode="mc", rate_R=lan["rate_R"])
    s = rep.summary()
    checks.append(("KS not rejected at 1%", s["ks"]["pvalue"] >= 0.01,
                   f"p={s['ks']['pvalue']:.3f}; AD p={s['ad']['pvalue']:.3f}; var(Delta)={s['delta_var']:.3f}; "
                   f"rel. SE of I_n {s['I_n_se'] / s['I_n']:.3f}; {s['discarded']} discarded"))
    seconds = time.perf_counter() - t0 + t_build + t_erg
    ok, _ = record(6, "SDE pipeline, KDE score", checks, seconds, 1200)
    assert ok


def test_criterion_7_ergodics(sde_ergodic):
    cfg = load_config(CONFIGS / "two_state_chain.json")
    chain = build_model(cfg, 0)
    summ, seconds = timed(ergodic_summary, cfg, chain, 0)
    sde_summ, t_sde = sde_ergodic
    target = -math.log(abs(1 - 2 * THETA0))
    checks = [
        ("long-run variance within 20% of plug-in",
         abs(summ.sigma2_longrun - summ.sigma2_plugin) <= 0.2 * summ.sigma2_plugin,
         f"{summ.sigma2_longrun:.4f} vs {summ.sigma2_plugin:.4f}"),
        ("mixing rate within 15% of -log|1-2 theta|", abs(summ.mixing.c_hat - target) <= 0.15 * target,
         f"{summ.mixing.c_hat:.4f} vs {target:.4f}"),
    ]
    for row in sde_summ.invariant_moment_table:
        by_T = ", ".join(f"T={T:g}: {v:.4f}" for T, v in row["by_T"].items())
        checks.append((f"SDE p={row['p']:g} moment drift < 20%", row["drift"] < 0.2,
                       f"drift {row['drift']:.4f}; {by_T}"))
    ok, _ = record(7, "ergodics cross-checks", checks, seconds + t_sde, 300)
    assert ok


def test_criterion_8_thread_reproducibility(tmp_path):
    data = json.loads((CONFIGS / "two_state_chain.json").read_text())
    data["scheme"] = {"h": 1.0, "n": 2000, "x0": 0}
    data["lan"]["R"] = 1000
    cfg_path = tmp_path / "chain.json"
    cfg_path.write_text(json.dumps(data))
    t0 = time.perf_counter()
    blobs = {}
    for k in (1, 4, 8):
        out = tmp_path / f"threads{k}"
        code = main(["lan", "--config", str(cfg_path), "--out", str(out), "--threads", str(k), "--no-plots"])
        assert code == 0
        blobs[k] = {p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))}
    seconds = time.perf_counter() - t0
    same = blobs[1] == blobs[4] == blobs[8] and len(blobs[1]) > 0
    checks = [("CSV bytes identical for threads 1, 4, 8", same, ", ".join(sorted(blobs[1])))]
    ok, _ = record(8, "reproducibility across thread counts", checks, seconds, 60)
    assert ok

"""One function per subcommand: build models from a config, run, persist artifacts."""
from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .. import ergodics as erg
from ..errors import ConfigError
from ..finite_chain import identity_suite, make_chain, symmetric_two_state
from ..lan_analysis import condition_stats, lan_experiment
from ..levy_noise import LevyMeasureSpec, LevyNoise, check_condition_H
from ..sde_model import (DEFAULT_STEPS_PER_H, ObservationScheme, Path as FinePath, check_condition_A,
                         make_drift, simulate_observations, simulate_path)
from ..transition_density import FourierSdeModel, KdeScoreConfig, KdeSdeModel
from . import io, plots
from .streams import PURPOSE_AUX, PURPOSE_MODEL, PURPOSE_RATE, derive_stream

log = logging.getLogger("lanlab")

EXIT_OK, EXIT_CONFIG, EXIT_CONDITION, EXIT_RUNTIME = 0, 2, 3, 4
ORACLE_TOL = 1e-12

LAN_COLUMNS = ["n", "rep", "u", "delta_n", "log_Z", "psi_n", "sum_zeta_sq", "max_abs_zeta",
               "sum_abs_zeta_cubed", "centered_combo", "cond_sum_zeta_sq"]


def noise_spec(cfg):
    d = dict(cfg["model"]["noise"])
    tol = d.pop("truncation_tol", 1e-6)
    beta = d.pop("beta", 1.0)
    try:
        return LevyMeasureSpec.from_dict(d), tol, beta
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"model/noise: missing or malformed field {exc}", path="model/noise") from None


def _drift(cfg):
    m = cfg["model"]["drift"]
    return make_drift(m["name"], **m.get("params", {}))


def build_model(cfg, seed):
    """The transition model described by ``cfg``; estimated models draw their tape from ``seed``."""
    model_cfg = cfg["model"]
    if model_cfg["type"] == "chain":
        ch = model_cfg["chain"]
        return make_chain(ch["name"], **ch.get("params", {}))
    spec, tol, _ = noise_spec(cfg)
    h = cfg["scheme"]["h"]
    noise = LevyNoise.for_step(spec, h, tol)
    dt = h / model_cfg.get("steps_per_h", DEFAULT_STEPS_PER_H)
    drift = _drift(cfg)
    if model_cfg.get("estimator", "kde") == "fourier":
        return FourierSdeModel(drift, noise, h, dt=dt)
    est = cfg["estimation"]
    kcfg = KdeScoreConfig(M=est["M"], bandwidth=est["bandwidth"], fd_step=est["fd_step"],
                          richardson=est["richardson"], transform=est["transform"])
    return KdeSdeModel(drift, noise, h, kcfg, derive_stream(seed, 0, PURPOSE_MODEL), cfg["theta0"], dt=dt)


def _x0(cfg, model):
    x0 = cfg["scheme"]["x0"]
    return int(x0) if model.reference == "counting" else float(x0)


def _rate_mode(cfg, model):
    return cfg["lan"].get("rate_mode", "exact" if model.exact else "mc")


def run_check_h(cfg, out, seed, threads, make_plots):
    if cfg.is_chain:
        raise ConfigError("check-h needs an sde model", path="model/type")
    spec, _, beta = noise_spec(cfg)
    report = check_condition_H(spec, beta=beta)
    files = [io.write_summary(out / "h_report.json", "check-h", {"report": report.to_dict(), "ok": report.ok})]
    return (EXIT_OK if report.ok else EXIT_CONDITION), files


def run_check_a(cfg, out, seed, threads, make_plots):
    if cfg.is_chain:
        raise ConfigError("check-a needs an sde model", path="model/type")
    drift = _drift(cfg)
    ca = cfg.data.get("check_a", {})
    x_grid = np.asarray(ca.get("x_grid", np.linspace(-10, 10, 201)), dtype=float)
    theta_grid = np.asarray(ca.get("theta_grid", np.linspace(*drift.theta_window, 11)), dtype=float)
    report = check_condition_A(drift, x_grid, theta_grid, ca.get("radius", 1.0))
    files = [io.write_summary(out / "a_report.json", "check-a", {"report": report.to_dict(), "ok": True})]
    return EXIT_OK, files


def run_chain_oracle(cfg, out, seed, threads, make_plots):
    chain = build_model(cfg, seed) if cfg.is_chain else symmetric_two_state()
    theta0 = cfg["theta0"]
    i0 = int(cfg["scheme"]["x0"]) if cfg.is_chain else 0
    residuals = identity_suite(chain, theta0, i0)
    if chain.name == "symmetric_two_state":
        # I_n = n / (theta (1 - theta)) for every start
        residuals["fisher_hand_formula"] = max(
            abs(chain.exact_fisher_info(theta0, i0, n) - n / (theta0 * (1 - theta0))) / n for n in range(1, 7))
    ok = all(v <= ORACLE_TOL for v in residuals.values())
    files = [io.write_summary(out / "chain_oracle.json", "chain-oracle",
                              {"chain": chain.to_dict(), "theta0": theta0, "residuals": residuals,
                               "tolerance": ORACLE_TOL, "ok": ok})]
    return (EXIT_OK if ok else EXIT_CONDITION), files


def lan_rows(report):
    """Per-replication rows of a :class:`LanReport`, ordered by (rep, u)."""
    return [{"n": report.n, **r} for r in report.rows]


def run_lan(cfg, out, seed, threads, make_plots):
    model = build_model(cfg, seed)
    lan = cfg["lan"]
    reports = []
    executor = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        sch = cfg["scheme"]
        for n in ([sch["n"]] if "n" in sch else cfg.n_grid):
            scheme = ObservationScheme(cfg["scheme"]["h"], n, _x0(cfg, model))
            rep = lan_experiment(model, cfg["theta0"], scheme, lan["u_list"], lan["R"], seed,
                                 rate_mode=_rate_mode(cfg, model), rate_R=lan["rate_R"], executor=executor,
                                 config=cfg.data)
            log.info("lan n=%d: KS p=%.3g AD p=%.3g", n, rep.ks[1], rep.ad[1])
            reports.append(rep)
    finally:
        if executor is not None:
            executor.shutdown()
    rows = [r for rep in reports for r in lan_rows(rep)]
    files = [io.write_csv(out / "lan_replications.csv", LAN_COLUMNS, rows)]
    summaries = [{k: v for k, v in rep.summary().items() if k != "config"} for rep in reports]
    files.append(io.write_summary(out / "lan_summary.json", "lan",
                                  {"seed": seed, "config": cfg.data, "runs": summaries,
                                   "tolerances_note": "acceptance tolerances are choices of this toolkit"}))
    if make_plots:
        files += lan_plots(out, rows)
    return EXIT_OK, files


def lan_plots(out, rows):
    by_n = sorted({int(r["n"]) for r in rows})
    last = by_n[-1]
    deltas = {}
    for r in rows:
        if int(r["n"]) == last:
            deltas[int(r["rep"])] = r["delta_n"]
    d = np.array([deltas[k] for k in sorted(deltas)])
    files = [plots.histogram(out / "delta_hist.svg", d, f"Delta_n, n={last}", "Delta_n"),
             plots.qq_plot(out / "delta_qq.svg", d, f"Delta_n vs N(0, 1), n={last}")]
    us = sorted({r["u"] for r in rows})
    series = {}
    for u in us:
        med = [float(np.median([abs(r["psi_n"]) for r in rows if r["u"] == u and int(r["n"]) == n])) for n in by_n]
        series[f"u={u:g}"] = (by_n, med)
    files.append(plots.line_plot(out / "psi_vs_n.svg", series, "median |Psi_n|", "n", "median |Psi_n|",
                                 logx=len(by_n) > 1, logy=True))
    return files


COND_COLUMNS = ["n", "I_n", "r_n", "cond3_mean", "cond3_se", "cond3_var", "cond4_mean", "cond4_se",
                "cond4_exact", "cond5", "paths"]


def run_conditions(cfg, out, seed, threads, make_plots):
    model = build_model(cfg, seed)
    lan = cfg["lan"]
    R = lan["condition_R"]
    rngs = [derive_stream(seed, i) for i in range(R)]
    rate_rngs = None if model.exact else [derive_stream(seed, i, PURPOSE_RATE) for i in range(lan["rate_R"])]
    beta = None if cfg.is_chain else noise_spec(cfg)[2]
    rows = condition_stats(model, cfg["theta0"], _x0(cfg, model), cfg.n_grid, lan["p_exponent"], lan["N_sup"],
                           R, rngs=rngs, rate_rngs=rate_rngs, beta=beta)
    for r in rows:
        r.setdefault("cond4_exact", float("nan"))
    files = [io.write_csv(out / "conditions.csv", COND_COLUMNS, rows),
             io.write_summary(out / "conditions_summary.json", "conditions",
                              {"seed": seed, "config": cfg.data, "rows": rows, "slopes": condition_slopes(rows)})]
    if make_plots:
        files += condition_plots(out, rows)
    return EXIT_OK, files


def condition_slopes(rows):
    """Least-squares log-log slopes of the condition statistics against ``n``."""
    n = np.log([r["n"] for r in rows])
    out = {}
    if len(rows) < 2:
        return out
    for key in ("cond4_mean", "cond5"):
        v = np.array([r[key] for r in rows], dtype=float)
        if np.all(v > 0):
            out[key] = float(np.polyfit(n, np.log(v), 1)[0])
    return out


def condition_plots(out, rows):
    ns = [r["n"] for r in rows]
    return [
        plots.line_plot(out / "conditions_decay.svg",
                        {"cond4": (ns, [r["cond4_mean"] for r in rows]), "cond5": (ns, [r["cond5"] for r in rows])},
                        "condition statistics", "n", "value", logx=True, logy=True),
        plots.line_plot(out / "cond3.svg", {"r^2 sum g^2": (ns, [r["cond3_mean"] for r in rows])},
                        "cond3 (target 1)", "n", "mean", logx=True),
    ]


def _ergodic_chain(cfg, model, seed):
    e = cfg["ergodics"]
    theta0, i0 = cfg["theta0"], _x0(cfg, model)
    total = e["pairs"]
    burn = erg.burn_in(total, 1.0, h=1.0)
    v = model.sample_paths(theta0, i0, total + burn, [derive_stream(seed, 0, PURPOSE_AUX)])[0]
    h = cfg["scheme"]["h"]
    path = FinePath(np.arange(len(v)) * h, v.astype(float), h)
    T_list = [T for T in e["T_list"] if T <= path.times[-1]] or [path.times[-1]]
    stat = v[burn:]
    return path, T_list, stat


def _ergodic_sde(cfg, model, seed):
    e = cfg["ergodics"]
    h = cfg["scheme"]["h"]
    T_max = max(e["T_list"])
    path = simulate_path(model.drift, cfg["theta0"], model.noise, cfg["scheme"]["x0"], T_max, model.dt,
                         derive_stream(seed, 0, PURPOSE_AUX))
    total = e["pairs"]
    burn = erg.burn_in(total, h, h=h)  # in observation steps
    scheme = ObservationScheme(h, total + burn, cfg["scheme"]["x0"])
    obs = simulate_observations(model.drift, cfg["theta0"], model.noise, scheme,
                                [derive_stream(seed, 1, PURPOSE_AUX)], model.dt)[0]
    return path, e["T_list"], obs[burn:]


def ergodic_summary(cfg, model, seed):
    e = cfg["ergodics"]
    theta0 = cfg["theta0"]
    path, T_list, stat = (_ergodic_chain if cfg.is_chain else _ergodic_sde)(cfg, model, seed)
    kappa = erg.khasminskii_average(path, T_list)
    beta = None if cfg.is_chain else noise_spec(cfg)[2]
    moments = erg.invariant_moments(kappa, e["p_list"], beta=beta)
    s2, s2_se = erg.sigma2_plugin(model, theta0, stat)
    scores = erg.stationary_scores(model, theta0, stat)
    lens = [b for b in e["batch_lens"] if 100 * b <= len(scores)] or [max(1, len(scores) // 100)]
    s2_long, table = erg.longrun_variance(scores, lens)
    lags = [k for k in e["lag_grid"] if k <= len(stat) / 10]
    mix = erg.mixing_fit(erg.sign_functional(stat), lags)
    n_grid = e.get("n_grid", cfg.n_grid)
    if model.exact:
        growth = erg.fisher_growth(model, theta0, _x0(cfg, model), n_grid)
    else:
        growth = erg.fisher_growth(model, theta0, _x0(cfg, model), n_grid, mode="mc",
                                   rngs=[derive_stream(seed, i, PURPOSE_RATE) for i in range(e["growth_R"])])
    return erg.ErgodicSummary(kappa, moments, s2, s2_se, s2_long, table, mix, growth)


def run_ergodic(cfg, out, seed, threads, make_plots):
    model = build_model(cfg, seed)
    summ = ergodic_summary(cfg, model, seed)
    payload = summ.to_dict()
    files = [
        io.write_summary(out / "ergodic_summary.json", "ergodic", {"seed": seed, "config": cfg.data, **payload}),
        io.write_csv(out / "kappa.csv", ["T", "mass", "w1_to_previous", "mean"], payload["kappa_T"]),
        io.write_csv(out / "invariant_moments.csv", ["p", "estimate", "se", "drift", "unstable"],
                     summ.invariant_moment_table),
        io.write_csv(out / "longrun.csv", ["batch_len", "estimate"], summ.longrun_table),
        io.write_csv(out / "mixing.csv", ["lag", "autocov"], list(zip(summ.mixing.lags, summ.mixing.autocov))),
        io.write_csv(out / "fisher_growth.csv", ["n", "I_n_over_n"], summ.fisher_growth),
    ]
    if make_plots:
        files += ergodic_plots(out, summ.fisher_growth, summ.sigma2_plugin)
    return EXIT_OK, files


def ergodic_plots(out, growth, sigma2):
    ns = [g[0] for g in growth]
    return [plots.line_plot(out / "fisher_growth.svg",
                            {"I_n / n": (ns, [g[1] for g in growth]), "sigma2 plug-in": (ns, [sigma2] * len(ns))},
                            "Fisher information growth", "n", "I_n / n", logx=len(ns) > 1)]


def run_simulate(cfg, out, seed, threads, make_plots):
    model = build_model(cfg, seed)
    sim = cfg["simulate"]
    n = cfg.n
    h = cfg["scheme"]["h"]
    rngs = [derive_stream(seed, i) for i in range(sim["paths"])]
    rows = []
    if sim["fine"] and not cfg.is_chain:
        for i, rng in enumerate(rngs):
            p = simulate_path(model.drift, cfg["theta0"], model.noise, cfg["scheme"]["x0"], n * h, model.dt, rng)
            rows += [(i, k, t, x) for k, (t, x) in enumerate(zip(p.times, p.values))]
        name = "paths.csv"
    else:
        paths = model.sample_paths(cfg["theta0"], _x0(cfg, model), n, rngs)
        for i, v in enumerate(paths):
            rows += [(i, k, k * h, x) for k, x in enumerate(v)]
        name = "observations.csv"
    files = [io.write_csv(out / name, ["rep", "k", "t", "x"], rows)]
    if make_plots:
        first = [r for r in rows if r[0] == 0]
        files.append(plots.line_plot(out / "path.svg", {"rep 0": ([r[2] for r in first], [r[3] for r in first])},
                                     "simulated path", "t", "X_t"))
    return EXIT_OK, files


def run_report(cfg, out, seed, threads, make_plots):
    """Regenerate every plot whose source CSV exists in ``out``."""
    files = []
    if (out / "lan_replications.csv").exists():
        _, rows = io.read_csv(out / "lan_replications.csv")
        files += lan_plots(out, rows)
    if (out / "conditions.csv").exists():
        _, rows = io.read_csv(out / "conditions.csv")
        files += condition_plots(out, rows)
    if (out / "fisher_growth.csv").exists():
        _, rows = io.read_csv(out / "fisher_growth.csv")
        s2 = float("nan")
        if (out / "ergodic_summary.json").exists():
            s2 = float(json.loads((out / "ergodic_summary.json").read_text())["sigma2_plugin"])
        files += ergodic_plots(out, [(r["n"], r["I_n_over_n"]) for r in rows], s2)
    if not files:
        raise FileNotFoundError(f"no result CSVs found in {out}")
    return EXIT_OK, files


RUNNERS = {
    "check-h": run_check_h, "check-a": run_check_a, "chain-oracle": run_chain_oracle, "lan": run_lan,
    "conditions": run_conditions, "ergodic": run_ergodic, "simulate": run_simulate, "report": run_report,
}


def run(command, cfg, out, seed, threads=1, make_plots=True):
    """Run ``command`` and write its manifest. Returns ``(exit_code, files)``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    code, files = RUNNERS[command](cfg, out, seed, threads, make_plots)
    name = "report_manifest.json" if command == "report" else "manifest.json"
    files.append(io.write_manifest(out, cfg, command, seed, files, threads, name))
    return code, files


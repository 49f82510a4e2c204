"""Parametric drift families and Euler simulation of ``dX = a_theta(X) dt + dZ``."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConditionAViolation, InvalidScheme, InvalidSpec, NumericalBlowup

DEFAULT_STEPS_PER_H = 64
BLOCK_STEPS = 4096  # noise is drawn per replication in blocks of this many cells


def _zero(theta, x):
    return np.zeros_like(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class DriftFamily:
    """Drift ``a(theta, x)`` and its partial derivatives.

    ``affine``, when given, maps ``theta`` to ``(slope, intercept)`` such that
    ``a(theta, x) = slope * x + intercept``; estimators use it to reuse one
    endpoint table for every starting point.
    """

    name: str
    a: Callable
    da_dx: Callable
    da_dtheta: Callable
    d2a_dxx: Callable = _zero
    d2a_dxdtheta: Callable = _zero
    d2a_dthetadtheta: Callable = _zero
    theta_interval: tuple = (0.05, 10.0)
    theta_window: tuple = (0.5, 1.5)
    affine: Optional[Callable] = None
    params: dict = field(default_factory=dict, hash=False, compare=False)

    def __post_init__(self):
        lo, hi = self.theta_interval
        wlo, whi = self.theta_window
        if not (lo < hi and lo <= wlo < whi <= hi):
            raise InvalidSpec("theta_window must be a sub-interval of theta_interval")

    def contains(self, theta):
        lo, hi = self.theta_interval
        return lo < theta < hi

    def to_dict(self):
        return {"name": self.name, **self.params,
                "theta_interval": list(self.theta_interval), "theta_window": list(self.theta_window)}


def affine_drift(b0=0.0, theta_interval=(0.05, 10.0), theta_window=(0.5, 1.5)):
    """``a_theta(x) = -theta x + b0``."""
    return DriftFamily(
        name="affine",
        a=lambda th, x: -th * x + b0,
        da_dx=lambda th, x: np.full_like(np.asarray(x, dtype=float), -th),
        da_dtheta=lambda th, x: -np.asarray(x, dtype=float),
        d2a_dxdtheta=lambda th, x: np.full_like(np.asarray(x, dtype=float), -1.0),
        theta_interval=tuple(theta_interval),
        theta_window=tuple(theta_window),
        affine=lambda th: (-th, b0),
        params={"b0": b0},
    )


def sine_drift(theta_interval=(0.05, 10.0), theta_window=(1.5, 3.0)):
    """``a_theta(x) = -theta x + sin(x)``: a bounded perturbation of the OU drift."""
    return DriftFamily(
        name="sine",
        a=lambda th, x: -th * x + np.sin(x),
        da_dx=lambda th, x: -th + np.cos(x),
        da_dtheta=lambda th, x: -np.asarray(x, dtype=float),
        d2a_dxx=lambda th, x: -np.sin(x),
        d2a_dxdtheta=lambda th, x: np.full_like(np.asarray(x, dtype=float), -1.0),
        theta_interval=tuple(theta_interval),
        theta_window=tuple(theta_window),
    )


def constant_drift(c0=0.0, theta_interval=(0.05, 10.0), theta_window=(0.5, 1.5)):
    """``a_theta(x) = c0``; the law of X does not depend on theta."""
    return DriftFamily(
        name="constant",
        a=lambda th, x: np.full_like(np.asarray(x, dtype=float), c0),
        da_dx=_zero,
        da_dtheta=_zero,
        theta_interval=tuple(theta_interval),
        theta_window=tuple(theta_window),
        affine=lambda th: (0.0, c0),
        params={"c0": c0},
    )


DRIFTS = {"affine": affine_drift, "sine": sine_drift, "constant": constant_drift}


def make_drift(name, **params):
    try:
        factory = DRIFTS[name]
    except KeyError:
        raise InvalidSpec(f"unknown drift family {name!r}; choose from {sorted(DRIFTS)}") from None
    return factory(**params)


@dataclass
class AReport:
    growth_constant: float
    dissipativity_margin: float
    margin_at: tuple
    note: str = ("finite-grid check: the limsup in A(ii) and the bound in A(i) "
                 "are only verified on the supplied grids")

    def to_dict(self):
        return {"growth_constant": self.growth_constant,
                "dissipativity_margin": self.dissipativity_margin,
                "margin_at": list(self.margin_at), "note": self.note}


def check_condition_A(drift, x_grid, theta_grid, radius=1.0):
    """Grid check of linear growth and dissipativity of a drift family.

    Returns the smallest ``C`` with ``|a| + |d_theta a| + |d2_theta a| <= C (1 + |x|)``
    on ``x_grid x theta_grid`` and ``max a(theta, x) / x`` over ``|x| >= radius``.

    Raises
    ------
    ConditionAViolation
        When the dissipativity margin is not negative or the growth bound is not finite.
    """
    x = np.asarray(x_grid, dtype=float)
    th = np.asarray(theta_grid, dtype=float)
    if x.size == 0 or th.size == 0:
        raise ValueError("grids must be non-empty")
    wlo, whi = drift.theta_window
    if np.any(th < wlo) or np.any(th > whi):
        raise ValueError("theta_grid must lie inside the drift's theta_window")
    X, T = np.meshgrid(x, th, indexing="ij")
    lhs = (np.abs(drift.a(T, X)) + np.abs(drift.da_dtheta(T, X))
           + np.abs(drift.d2a_dthetadtheta(T, X)))
    ratio = lhs / (1.0 + np.abs(X))
    i = np.unravel_index(np.argmax(ratio), ratio.shape)
    growth = float(ratio[i])
    if not np.isfinite(growth):
        raise ConditionAViolation("i", float(X[i]), float(T[i]), "growth bound is not finite")
    far = np.abs(X) >= radius
    if not np.any(far):
        raise ValueError("x_grid has no points with |x| >= radius")
    q = np.where(far, drift.a(T, X) / np.where(far, X, 1.0), -np.inf)
    j = np.unravel_index(np.argmax(q), q.shape)
    margin = float(q[j])
    if not margin < 0:
        raise ConditionAViolation("ii", float(X[j]), float(T[j]), f"a/x = {margin} >= 0")
    return AReport(growth, margin, (float(X[j]), float(T[j])))


@dataclass(frozen=True)
class ObservationScheme:
    h: float
    n: int
    x0: float = 0.0

    def __post_init__(self):
        if not self.h > 0:
            raise InvalidScheme("h must be positive")
        if int(self.n) != self.n or self.n < 1:
            raise InvalidScheme("n must be a positive integer")


@dataclass
class DiscreteSample:
    """Observations ``X_0, X_h, ..., X_{nh}``."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 1 or len(self.values) < 2:
            raise InvalidScheme("a sample needs at least X_0 and X_h")
        if self.values.dtype.kind == "f" and not np.all(np.isfinite(self.values)):
            raise InvalidScheme("sample contains non-finite values")

    @property
    def n(self):
        return len(self.values) - 1

    def pairs(self):
        return self.values[:-1], self.values[1:]


@dataclass
class Path:
    times: np.ndarray
    values: np.ndarray
    dt: float


def _steps(t, dt, what):
    k = int(round(t / dt))
    if k < 1 or abs(k * dt - t) > 1e-9 * max(t, dt):
        raise InvalidScheme(f"{what}={t} is not a positive multiple of dt={dt}")
    return k


def _euler_block(drift, theta, x, incr, dt, t0):
    for k in range(incr.shape[1]):
        x = x + drift.a(theta, x) * dt + incr[:, k]
    if not np.all(np.isfinite(x)):
        raise NumericalBlowup(t0 + incr.shape[1] * dt)
    return x


def simulate_batch(drift, theta, noise, x0, n_steps, dt, rngs, record_every=1):
    """Euler paths for a batch of replications, one random stream each.

    Each stream is consumed in blocks of ``BLOCK_STEPS`` noise cells, so the
    path of a replication depends only on its own stream, never on the batch
    it was simulated with.

    Returns
    -------
    ndarray, shape (len(rngs), n_steps // record_every + 1)
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if n_steps % record_every:
        raise InvalidScheme("n_steps must be a multiple of record_every")
    batch = len(rngs)
    x = np.full(batch, float(x0))
    out = np.empty((batch, n_steps // record_every + 1))
    out[:, 0] = x
    for start in range(0, n_steps, BLOCK_STEPS):
        stop = min(n_steps, start + BLOCK_STEPS)
        incr = np.stack([noise.increments(dt, stop - start, rng) for rng in rngs])
        # advance to each record point inside the block
        pos = start
        while pos < stop:
            nxt = min(stop, (pos // record_every + 1) * record_every)
            x = _euler_block(drift, theta, x, incr[:, pos - start:nxt - start], dt, pos * dt)
            pos = nxt
            if pos % record_every == 0:
                out[:, pos // record_every] = x
    return out


def simulate_path(drift, theta, noise, x0, t_end, dt, rng):
    """Fine-grid Euler path ``X_{t+dt} = X_t + a_theta(X_t) dt + (Z_{t+dt} - Z_t)``.

    Jumps falling inside a cell are lumped at the cell's end.
    """
    if not drift.contains(theta):
        raise ValueError(f"theta={theta} outside {drift.theta_interval}")
    n_steps = _steps(t_end, dt, "t_end")
    values = simulate_batch(drift, theta, noise, x0, n_steps, dt, [rng])[0]
    return Path(np.arange(n_steps + 1) * dt, values, dt)


def observe(path, scheme):
    """Subsample a fine path at times ``k h``, ``k = 0..n``."""
    every = _steps(scheme.h, path.dt, "h")
    last = every * scheme.n
    if last >= len(path.values):
        raise InvalidScheme(f"path covers t <= {path.times[-1]}, need {scheme.n * scheme.h}")
    return DiscreteSample(path.values[:last + 1:every].copy())


def simulate_observations(drift, theta, noise, scheme, rngs, dt=None):
    """Observed samples for a batch of replications (rows of the returned array)."""
    dt = scheme.h / DEFAULT_STEPS_PER_H if dt is None else dt
    every = _steps(scheme.h, dt, "h")
    return simulate_batch(drift, theta, noise, scheme.x0, every * scheme.n, dt, rngs, every)


@dataclass
class NoiseTape:
    """Recorded noise cells ``(M, steps)`` for replaying one-step simulations."""

    increments: np.ndarray
    dt: float

    @property
    def size(self):
        return self.increments.shape[0]


def make_noise_tape(noise, h, M, rng, dt=None, antithetic=False):
    """Record ``M`` rows of noise cells.

    With ``antithetic`` (valid for symmetric noise only) the second half of
    the rows are the negated first half.
    """
    dt = h / DEFAULT_STEPS_PER_H if dt is None else dt
    steps = _steps(h, dt, "h")
    if antithetic:
        if not noise.symmetric:
            raise ValueError("antithetic tapes need symmetric noise")
        half = (M + 1) // 2
        cells = noise.increments(dt, half * steps, rng).reshape(half, steps)
        cells = np.concatenate([cells, -cells[:M - half]])
    else:
        cells = noise.increments(dt, M * steps, rng).reshape(M, steps)
    return NoiseTape(cells, dt)


def simulate_endpoints(drift, theta, noise, x, h, M, rng=None, shared_noise=None, dt=None):
    """``M`` draws of ``X_h`` given ``X_0 = x``.

    With ``shared_noise`` the recorded noise cells are replayed, so two calls
    at different ``theta`` differ only through the drift (common random numbers).
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    tape = shared_noise if shared_noise is not None else make_noise_tape(noise, h, M, rng, dt)
    if tape.size != M:
        raise ValueError("shared noise tape has the wrong number of rows")
    _steps(h, tape.dt, "h")
    xs = np.full(M, float(x)) if np.ndim(x) == 0 else np.asarray(x, dtype=float)
    return _euler_block(drift, theta, xs, tape.increments, tape.dt, 0.0)


@dataclass
class MomentTable:
    p: float
    rows: list  # (t, mean |X_t|^p, standard error)
    constant: float


def moment_check(drift, theta, noise, x0, p, t_grid, R, rng, dt=0.01, beta=1.0):
    """Monte Carlo ``E|X_t|^p`` over ``R`` paths and the implied bound ``sup_t E|X_t|^p / (1 + |x0|^p)``."""
    if not 2 < p < 4 + beta:
        raise ValueError(f"p must lie in (2, {4 + beta})")
    t_grid = np.asarray(t_grid, dtype=float)
    idx = [_steps(t, dt, "t") for t in t_grid]
    x = np.full(R, float(x0))
    rows = []
    pos = 0
    for t, k in sorted(zip(t_grid, idx), key=lambda z: z[1]):
        while pos < k:
            step = min(BLOCK_STEPS, k - pos)
            incr = noise.increments(dt, R * step, rng).reshape(R, step)
            x = _euler_block(drift, theta, x, incr, dt, pos * dt)
            pos += step
        vals = np.abs(x) ** p
        rows.append((float(t), float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(R)) if R > 1 else 0.0))
    const = max(r[1] for r in rows) / (1.0 + abs(x0) ** p)
    return MomentTable(p, rows, const)

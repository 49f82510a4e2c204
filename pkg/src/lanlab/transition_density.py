"""Transition models ``(p_h, q_h, g_h)`` and a Monte Carlo estimated SDE realization.

A :class:`TransitionModel` exposes the one-step density ``p(theta; x, y)``
with respect to a reference measure (Lebesgue or counting), the square-root
derivative ``q`` and the score ``g = 2 q / sqrt(p)``. Exact models (finite
chains) live in :mod:`lanlab.finite_chain`; :class:`KdeSdeModel` estimates
the SDE transition density by kernel smoothing of simulated endpoints and its
score by central finite differences under common random numbers.
"""
from __future__ import annotations

import threading
import warnings
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
from scipy import interpolate, signal

from .errors import InvalidSpec, ScoreUndefined
from .sde_model import (DEFAULT_STEPS_PER_H, DiscreteSample, ObservationScheme, _steps,
                        make_noise_tape, simulate_endpoints, simulate_observations)

DENSITY_FLOOR = 1e-300
_LOG_FLOOR = np.log(DENSITY_FLOOR)
_SQRT_2PI = np.sqrt(2.0 * np.pi)


class DegenerateBandwidthWarning(UserWarning):
    """Samples have zero spread; a fallback bandwidth was used."""


class TransitionModel(ABC):
    """One-step transition law of a parametric Markov chain.

    Subclasses set ``reference`` to ``"lebesgue"`` or ``"counting"`` and
    ``theta_interval``. All evaluators broadcast over ``x`` and ``y``.
    """

    reference = "lebesgue"
    exact = False
    theta_interval = (-np.inf, np.inf)

    @abstractmethod
    def logpdf(self, theta, x, y):
        """``log p(theta; x, y)``; ``-inf`` where the density vanishes."""

    def density(self, theta, x, y):
        return np.exp(self.logpdf(theta, x, y))

    @abstractmethod
    def score(self, theta, x, y):
        """``g(theta; x, y)``. Raises :class:`ScoreUndefined` where ``p = 0``."""

    def sqrt_derivative(self, theta, x, y):
        """``q = g sqrt(p) / 2``."""
        return 0.5 * self.score(theta, x, y) * np.sqrt(self.density(theta, x, y))

    def score_derivative(self, theta, x, y):
        raise NotImplementedError(f"{type(self).__name__} has no d/dtheta of the score")

    @abstractmethod
    def sample_next(self, theta, x, size, rng):
        """``size`` draws of ``X_h`` given ``X_0 = x``."""

    @abstractmethod
    def sample_paths(self, theta, x0, n, rngs):
        """Array ``(len(rngs), n + 1)`` of paths, one stream per row."""

    def sample_path(self, theta, x0, n, rng):
        return DiscreteSample(self.sample_paths(theta, x0, n, [rng])[0])

    def contains(self, theta):
        lo, hi = self.theta_interval
        return lo < theta < hi


@dataclass(frozen=True)
class KdeScoreConfig:
    """Settings of the kernel-density / finite-difference score estimator.

    ``bandwidth`` is ``"silverman"`` or a fixed positive float.

    ``transform`` is used by :class:`KdeSdeModel` only. With ``"asinh"`` the
    kernel estimate is formed in ``w = asinh((y - c) / s)`` coordinates
    (``c``, ``s`` the median and IQR scale at the reference parameter) and
    mapped back with its Jacobian, so the effective bandwidth widens in the
    sparse tails. A fixed ``bandwidth`` is then in ``w`` units.
    """

    M: int = 100_000
    bandwidth: object = "silverman"
    fd_step: float = 1e-2
    richardson: bool = False
    transform: str = "none"

    def __post_init__(self):
        if self.M < 100:
            raise InvalidSpec("M must be >= 100")
        if not self.fd_step > 0:
            raise InvalidSpec("fd_step must be positive")
        if self.bandwidth != "silverman" and not (isinstance(self.bandwidth, (int, float))
                                                  and self.bandwidth > 0):
            raise InvalidSpec("bandwidth must be 'silverman' or a positive number")
        if self.transform not in ("none", "asinh"):
            raise InvalidSpec("transform must be 'none' or 'asinh'")


def silverman_bandwidth(samples):
    """``1.06 sd M^{-1/5}``, with ``(|mean| + 1) M^{-1/5}`` when the spread is zero."""
    samples = np.asarray(samples, dtype=float)
    m = len(samples)
    sd = samples.std(ddof=1) if m > 1 else 0.0
    if sd > 0:
        return 1.06 * sd * m ** -0.2
    warnings.warn("zero-variance samples; using fallback bandwidth", DegenerateBandwidthWarning,
                  stacklevel=2)
    return (abs(samples.mean()) + 1.0) * m ** -0.2


def _bandwidth(samples, cfg):
    return silverman_bandwidth(samples) if cfg.bandwidth == "silverman" else float(cfg.bandwidth)


def _direct_kde(samples, y, b, chunk=2_000_000):
    y = np.atleast_1d(np.asarray(y, dtype=float))
    out = np.empty(y.shape)
    flat_y = y.ravel()
    flat = out.ravel()
    step = max(1, chunk // max(len(samples), 1))
    for i in range(0, len(flat_y), step):
        z = (flat_y[i:i + step, None] - samples[None, :]) / b
        flat[i:i + step] = np.exp(-0.5 * z * z).mean(axis=1) / (b * _SQRT_2PI)
    return out


def kde_density(samples, y, cfg):
    """Gaussian kernel density estimate of ``samples`` evaluated at ``y``."""
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ValueError("samples must be non-empty")
    out = _direct_kde(samples, y, _bandwidth(samples, cfg))
    return float(out[0]) if np.ndim(y) == 0 else out


class BinnedKde:
    """Gaussian KDE on a fine grid (linear binning + FFT convolution).

    ``logpdf`` interpolates the log density on the grid; where the grid value
    is within FFT round-off of zero, or outside the grid, the exact sum over
    samples is used instead.
    """

    def __init__(self, samples, bandwidth, n_grid=1 << 14, reltol=1e-9):
        s = np.asarray(samples, dtype=float)
        self.samples = s
        self.b = float(bandwidth)
        lo, hi = s.min() - 8 * self.b, s.max() + 8 * self.b
        self.grid = np.linspace(lo, hi, n_grid)
        dx = self.grid[1] - self.grid[0]
        pos = (s - lo) / dx
        i0 = np.minimum(pos.astype(np.int64), n_grid - 2)
        w1 = pos - i0
        counts = (np.bincount(i0, weights=1.0 - w1, minlength=n_grid)
                  + np.bincount(i0 + 1, weights=w1, minlength=n_grid))
        half = int(np.ceil(8 * self.b / dx))
        k = np.arange(-half, half + 1) * dx / self.b
        kernel = np.exp(-0.5 * k * k) / (self.b * _SQRT_2PI)
        dens = signal.fftconvolve(counts, kernel, mode="full")[half:half + n_grid] / len(s)
        self.trusted = dens > reltol * dens.max()
        self.logdens = np.log(np.where(self.trusted, dens, 1.0))

    def logpdf(self, y):
        y = np.asarray(y, dtype=float)
        flat = y.ravel()
        out = np.interp(flat, self.grid, self.logdens)
        pos = np.clip(np.searchsorted(self.grid, flat), 1, len(self.grid) - 1)
        ok = (flat >= self.grid[0]) & (flat <= self.grid[-1]) & self.trusted[pos] & self.trusted[pos - 1]
        if not ok.all():
            bad = ~ok
            with np.errstate(divide="ignore"):
                out[bad] = np.log(_direct_kde(self.samples, flat[bad], self.b))
        out = np.where(out < _LOG_FLOOR, -np.inf, out)
        return out.reshape(y.shape)


def _fd_score(logp, theta, y, cfg):
    """Central-difference derivative of ``logp(theta)`` (callable) in theta.

    ``cfg`` needs ``fd_step`` and ``richardson``.
    """
    def central(d):
        hi, lo = logp(theta + d), logp(theta - d)
        bad = ~(np.isfinite(hi) & np.isfinite(lo))
        if np.any(bad):
            yb = np.asarray(y)[bad] if np.ndim(y) else y
            raise ScoreUndefined(yb, "estimated density below floor")
        return (hi - lo) / (2 * d)
    d = cfg.fd_step
    if cfg.richardson:
        return (4 * central(d / 2) - central(d)) / 3
    return central(d)


def estimated_score_from_sampler(sampler, theta, y, cfg, rng, common_random_numbers=True):
    """Finite-difference score from an endpoint sampler ``sampler(theta, M, rng)``.

    With common random numbers every evaluated parameter replays the same
    seed, so the estimates at ``theta +- fd_step`` share their noise.
    """
    seed = int(rng.integers(2**63))
    center = sampler(theta, cfg.M, np.random.default_rng(seed))
    b = _bandwidth(center, cfg)

    def logp(th):
        s = seed if common_random_numbers else int(rng.integers(2**63))
        samples = sampler(th, cfg.M, np.random.default_rng(s))
        with np.errstate(divide="ignore"):
            val = np.log(_direct_kde(samples, y, b))
        return np.where(val < _LOG_FLOOR, -np.inf, val)

    g = _fd_score(logp, theta, y, cfg)
    return float(g[0]) if np.ndim(y) == 0 else g


def estimated_score(drift, noise, theta, x, y, cfg, rng, h, dt=None):
    """KDE + central finite difference estimate of ``d/dtheta log p_h(theta; x, y)``."""
    lo, hi = drift.theta_interval
    if not (lo < theta - cfg.fd_step and theta + cfg.fd_step < hi):
        raise ValueError("theta +- fd_step must stay inside the parameter interval")
    sampler = lambda th, M, g: simulate_endpoints(drift, th, noise, x, h, M, g, dt=dt)
    return estimated_score_from_sampler(sampler, theta, y, cfg, rng)


@dataclass(frozen=True)
class _FdSettings:
    fd_step: float
    richardson: bool = False


class FourierSdeModel(TransitionModel):
    """Transition density of the Euler chain for an affine drift, by Fourier inversion.

    With ``a_theta(x) = s(theta) x + b(theta)`` and ``m`` Euler cells of size
    ``dt``, ``X_h = A x + Y`` with ``A = (1 + s dt)^m`` and
    ``Y = sum_j (1 + s dt)^j (b dt + xi_j)``. The characteristic function of
    ``Y`` is a finite product of Levy-Khintchine factors, inverted on a grid
    by FFT. Deterministic and free of smoothing; used as the reference for
    the kernel estimator.

    Only tempered stable noise is supported. ``log p`` is ``-inf`` where the
    inverted density is below ``reltol`` times its maximum (FFT round-off).
    """

    reference = "lebesgue"

    def __init__(self, drift, noise, h, dt=None, n_grid=1 << 16, half_width=None, fd_step=1e-4,
                 reltol=1e-11):
        if drift.affine is None:
            raise InvalidSpec("Fourier inversion needs an affine drift")
        self.drift = drift
        self.noise = noise
        self.h = h
        self.dt = h / DEFAULT_STEPS_PER_H if dt is None else dt
        self.steps = _steps(h, self.dt, "h")
        self.theta_interval = drift.theta_interval
        kind = noise.spec.kind
        lam = min(kind.lambda_plus, kind.lambda_minus)
        self.half_width = max(30.0, 45.0 / lam) if half_width is None else float(half_width)
        self.n_grid = int(n_grid)
        self.reltol = reltol
        self.fd = _FdSettings(fd_step)
        self._cache = {}
        self._lock = threading.Lock()
        noise.spec.char_exponent(0.0)  # fail early on unsupported measures

    def _gain(self, theta):
        slope, _ = self.drift.affine(theta)
        return (1.0 + slope * self.dt) ** self.steps

    def _table(self, theta):
        key = float(theta)
        tab = self._cache.get(key)
        if tab is not None:
            return tab
        slope, b = self.drift.affine(theta)
        a = 1.0 + slope * self.dt
        weights = a ** np.arange(self.steps)
        center = float(weights.sum() * (b * self.dt + self.noise.spec.increment_mean(self.dt)))
        N, L = self.n_grid, self.half_width
        dz = 2 * L / N
        z = center - L + dz * np.arange(N)
        freq = 2 * np.pi * np.fft.fftfreq(N, dz)
        log_phi = np.zeros(N, dtype=complex)
        for w in weights:
            log_phi += 1j * freq * w * b * self.dt + self.dt * self.noise.spec.char_exponent(w * freq)
        phi = np.exp(log_phi - 1j * freq * z[0])
        dens = np.real(np.fft.fft(phi)) / (N * dz)
        ok = dens > self.reltol * dens.max()
        # keep the contiguous block around the mode
        mode = int(np.argmax(dens))
        lo = mode - np.argmin(ok[mode::-1]) + 1 if not ok[:mode + 1].all() else 0
        hi = mode + np.argmin(ok[mode:]) if not ok[mode:].all() else N
        tab = (z[lo], z[hi - 1], interpolate.CubicSpline(z[lo:hi], np.log(dens[lo:hi])))
        with self._lock:
            tab = self._cache.setdefault(key, tab)
        return tab

    def logpdf(self, theta, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        zlo, zhi, spline = self._table(theta)
        z = y - self._gain(theta) * x
        inside = (z >= zlo) & (z <= zhi)
        return np.where(inside, spline(np.clip(z, zlo, zhi)), -np.inf)

    def score(self, theta, x, y):
        return _fd_score(lambda th: self.logpdf(th, x, y), theta, y, self.fd)

    def score_derivative(self, theta, x, y):
        d = 100 * self.fd.fd_step
        lp = [self.logpdf(theta + k * d, x, y) for k in (-1, 0, 1)]
        return (lp[2] - 2 * lp[1] + lp[0]) / d**2

    def sample_next(self, theta, x, size, rng):
        return simulate_endpoints(self.drift, theta, self.noise, x, self.h, size, rng, dt=self.dt)

    def sample_paths(self, theta, x0, n, rngs):
        return simulate_observations(self.drift, theta, self.noise, ObservationScheme(self.h, n, x0),
                                     rngs, self.dt)

    def y_grid(self, theta, x, size=4001):
        """Grid over the trusted block, trimmed by 2% per side so nearby theta stay defined."""
        zlo, zhi, _ = self._table(theta)
        pad = 0.02 * (zhi - zlo)
        shift = self._gain(theta) * x
        return np.linspace(zlo + pad, zhi - pad, size) + shift


class KdeSdeModel(TransitionModel):
    """Estimated transition model of the Euler-discretized SDE.

    One noise tape of ``cfg.M`` one-step simulations is recorded at
    construction and replayed for every parameter value and starting point, so
    all density estimates share their random numbers. For affine drifts
    ``X_h = A(theta) x + Y(theta)`` exactly under the Euler scheme, and one
    table of ``Y(theta)`` serves every ``x``.

    For symmetric noise the tape is antithetic (rows ``xi`` and ``-xi``),
    which removes the odd part of the tape's sampling error.

    The kernel bandwidth (and, with ``cfg.transform = "asinh"``, the
    transform's center and scale) is fixed per starting point from the
    endpoint samples at ``theta_ref``; each estimate is a proper density in
    ``y`` for every ``theta``.
    """

    reference = "lebesgue"

    def __init__(self, drift, noise, h, cfg, rng, theta_ref, dt=None):
        self.drift = drift
        self.noise = noise
        self.h = h
        self.cfg = cfg
        self.dt = h / DEFAULT_STEPS_PER_H if dt is None else dt
        self.steps = _steps(h, self.dt, "h")
        self.theta_interval = drift.theta_interval
        self.theta_ref = theta_ref
        self.tape = make_noise_tape(noise, h, cfg.M, rng, self.dt, antithetic=noise.symmetric)
        self._cache = {}
        self._coords = {}
        self._lock = threading.Lock()

    def _endpoints(self, theta, x):
        return simulate_endpoints(self.drift, theta, self.noise, x, self.h, self.cfg.M,
                                  shared_noise=self.tape)

    def _coords_for(self, x):
        """``(center, scale, bandwidth)`` fixed from the endpoints at ``theta_ref``."""
        if x not in self._coords:
            ref = self._endpoints(self.theta_ref, x)
            if self.cfg.transform == "asinh":
                q25, c, q75 = np.percentile(ref, [25, 50, 75])
                scale = (q75 - q25) / 1.349 or 1.0
                b = _bandwidth(np.arcsinh((ref - c) / scale), self.cfg)
                coords = (float(c), float(scale), b)
            else:
                coords = (0.0, None, _bandwidth(ref, self.cfg))
            with self._lock:
                self._coords.setdefault(x, coords)
        return self._coords[x]

    def _to_w(self, coords, y):
        c, scale, _ = coords
        return y if scale is None else np.arcsinh((y - c) / scale)

    def _log_jacobian(self, coords, y):
        c, scale, _ = coords
        return 0.0 if scale is None else -0.5 * np.log(scale * scale + (y - c) ** 2)

    def _table(self, theta, x):
        key = (float(theta), None if self.drift.affine else float(x))
        kde = self._cache.get(key)
        if kde is None:
            x0 = 0.0 if self.drift.affine else float(x)
            coords = self._coords_for(x0)
            kde = BinnedKde(self._to_w(coords, self._endpoints(theta, x0)), coords[2])
            with self._lock:
                kde = self._cache.setdefault(key, kde)
        return kde

    def _gain(self, theta):
        slope, _ = self.drift.affine(theta)
        return (1.0 + slope * self.dt) ** self.steps

    def logpdf(self, theta, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        if self.drift.affine:
            coords = self._coords_for(0.0)
            z = y - self._gain(theta) * x
            return self._table(theta, 0.0).logpdf(self._to_w(coords, z)) + self._log_jacobian(coords, z)
        out = np.empty(x.shape)
        flat_x, flat_y, flat = x.ravel(), y.ravel(), out.ravel()
        for xv in np.unique(flat_x):
            sel = flat_x == xv
            coords = self._coords_for(float(xv))
            yv = flat_y[sel]
            flat[sel] = self._table(theta, xv).logpdf(self._to_w(coords, yv)) + self._log_jacobian(coords, yv)
        return out

    def score(self, theta, x, y):
        return _fd_score(lambda th: self.logpdf(th, x, y), theta, y, self.cfg)

    def score_derivative(self, theta, x, y):
        d = self.cfg.fd_step
        lp = [self.logpdf(theta + k * d, x, y) for k in (-1, 0, 1)]
        return (lp[2] - 2 * lp[1] + lp[0]) / d**2

    def sample_next(self, theta, x, size, rng):
        return simulate_endpoints(self.drift, theta, self.noise, x, self.h, size, rng, dt=self.dt)

    def sample_paths(self, theta, x0, n, rngs):
        return simulate_observations(self.drift, theta, self.noise, ObservationScheme(self.h, n, x0),
                                     rngs, self.dt)

    def y_grid(self, theta, x, size=4001):
        """Integration grid covering the estimated support of ``p(theta; x, .)``."""
        kde = self._table(theta, x)
        c, scale, _ = self._coords_for(0.0 if self.drift.affine else float(x))
        shift = self._gain(theta) * x if self.drift.affine else 0.0
        w = np.linspace(kde.grid[0], kde.grid[-1], size)
        return (w if scale is None else c + scale * np.sinh(w)) + shift


def score_martingale_residual(model, theta, x, M, rng):
    """Estimate ``E_x^theta g(theta; x, X_h)`` and its standard error.

    Counting models are summed exactly over the support (standard error 0).
    """
    if model.reference == "counting":
        ys = model.support(x)
        p = model.density(theta, x, ys)
        pos = p > 0
        return float(np.sum(model.score(theta, x, ys[pos]) * p[pos])), 0.0
    ys = model.sample_next(theta, x, M, rng)
    g = model.score(theta, x, ys)
    return float(g.mean()), float(g.std(ddof=1) / np.sqrt(M))


def l2_derivative_residual(model, theta, delta, x, y_grid=None):
    """``int ((sqrt p(theta+delta) - sqrt p(theta)) / delta - q(theta))^2 dlambda``."""
    if not model.contains(theta + delta):
        raise ValueError("theta + delta outside the parameter interval")
    if model.reference == "counting":
        ys = model.support(x)
    else:
        ys = model.y_grid(theta, x) if y_grid is None else np.asarray(y_grid, dtype=float)
    p0 = model.density(theta, x, ys)
    p1 = model.density(theta + delta, x, ys)
    q = np.zeros_like(p0)
    pos = p0 > 0
    q[pos] = model.sqrt_derivative(theta, x, ys[pos])
    integrand = ((np.sqrt(p1) - np.sqrt(p0)) / delta - q) ** 2
    if model.reference == "counting":
        return float(integrand.sum())
    return float(np.trapezoid(integrand, ys))

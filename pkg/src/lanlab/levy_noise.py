"""Pure-jump Levy noise: measure specifications, regularity checks, increment sampling.

The driving process is

    Z_t = c t + int_{|u|>1} u N(ds, du) + int_{|u|<=1} u (N - ds mu)(ds, du)

with no Gaussian component. Increments are simulated by a truncated compound
Poisson scheme: jumps with ``|u| >= delta`` are drawn exactly (inverse CDF on a
log-spaced table), smaller jumps are dropped and only their variance is
reported through :func:`truncation_error`.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize, special

from .errors import ConditionHViolation, InvalidSpec

TABLE_POINTS = 4096
_TAIL_EXPONENT = 40.0  # lambda * u_max; mass beyond is ~exp(-40)


def _upper_gamma(s, x):
    """Upper incomplete gamma Gamma(s, x) for x > 0 and any real s > -3."""
    if s > 0:
        return special.gamma(s) * special.gammaincc(s, x)
    if s == 0:
        return special.exp1(x)
    return (_upper_gamma(s + 1.0, x) - x**s * math.exp(-x)) / s


@dataclass(frozen=True)
class TemperedStable:
    """Tempered stable Levy density ``c_pm |u|^{-1-alpha} exp(-lambda_pm |u|)``."""

    alpha: float
    lambda_plus: float
    lambda_minus: float
    c_plus: float
    c_minus: float

    def __post_init__(self):
        if not 0.0 < self.alpha < 2.0:
            raise InvalidSpec(f"alpha must lie in (0, 2), got {self.alpha}")
        if self.lambda_plus <= 0 or self.lambda_minus <= 0:
            raise InvalidSpec("tempering rates must be positive")
        if self.c_plus < 0 or self.c_minus < 0:
            raise InvalidSpec("intensity constants must be non-negative")

    def _side(self, sign):
        return (self.c_plus, self.lambda_plus) if sign > 0 else (self.c_minus, self.lambda_minus)

    @property
    def is_zero(self):
        return self.c_plus == 0 and self.c_minus == 0

    def side_density(self, r, sign):
        c, lam = self._side(sign)
        r = np.asarray(r, dtype=float)
        return c * r ** (-1.0 - self.alpha) * np.exp(-lam * r)

    def side_integral(self, k, a, b, sign):
        """Closed form of ``int_a^b r^k m(sign * r) dr`` for ``0 < a < b <= inf``."""
        c, lam = self._side(sign)
        if c == 0 or a >= b:
            return 0.0
        s = k - self.alpha
        if s > 0 and a == 0:
            lower = special.gamma(s)
        else:
            lower = _upper_gamma(s, lam * a)
        upper = 0.0 if math.isinf(b) else _upper_gamma(s, lam * b)
        return c * lam ** (-s) * (lower - upper)

    def side_small_moment(self, k, delta, sign):
        """``int_0^delta r^k m(sign r) dr`` for ``k > alpha``."""
        c, lam = self._side(sign)
        s = k - self.alpha
        if s <= 0:
            return math.inf
        return c * lam ** (-s) * special.gamma(s) * special.gammainc(s, lam * delta)

    def log_derivative_ratios(self, r, sign):
        """Return ``|m'| r / m`` and ``|m''| r^2 / m`` on magnitudes ``r``."""
        _, lam = self._side(sign)
        r = np.asarray(r, dtype=float)
        a1 = 1.0 + self.alpha
        first = a1 + lam * r
        second = a1 * (2.0 + self.alpha) + 2.0 * a1 * lam * r + (lam * r) ** 2
        return first, second

    def side_exponent(self, s, sign):
        """``int_0^inf (e^{i sign s r} - 1 - i sign s r 1{r <= 1}) m(sign r) dr``."""
        c, lam = self._side(sign)
        s = np.asarray(s, dtype=float)
        if c == 0:
            return np.zeros(s.shape, dtype=complex)
        a = self.alpha
        w = lam - 1j * sign * s
        if a == 1.0:
            # limit of the general formula
            full = c * (w * np.log(w / lam) + 1j * sign * s)
            return full + 1j * sign * s * self.side_integral(1, 1.0, math.inf, sign)
        g = special.gamma(-a)
        if a < 1.0:
            return c * g * (w**a - lam**a) - 1j * sign * s * self.side_integral(1, 0.0, 1.0, sign)
        full = c * g * (w**a - lam**a + 1j * sign * s * a * lam ** (a - 1.0))
        return full + 1j * sign * s * self.side_integral(1, 1.0, math.inf, sign)

    def continuous_upper(self, u0):
        return max(u0, 1.0, _TAIL_EXPONENT / min(self.lambda_plus, self.lambda_minus))

    def atoms(self, sign):
        return ()

    def to_dict(self):
        d = {"kind": "tempered_stable", "alpha": self.alpha}
        if self.lambda_plus == self.lambda_minus and self.c_plus == self.c_minus:
            d.update({"lambda": self.lambda_plus, "c": self.c_plus})
        else:
            d.update({"lambda_plus": self.lambda_plus, "lambda_minus": self.lambda_minus,
                      "c_plus": self.c_plus, "c_minus": self.c_minus})
        return d


@dataclass(frozen=True)
class TabulatedDensity:
    """Levy density tabulated on ``[-u0, 0) U (0, u0]`` plus atoms beyond ``u0``.

    ``grid`` holds positive magnitudes ``0 < r_1 < ... < r_K = u0``; the density
    at ``+r_i`` and ``-r_i`` is ``values_plus[i]`` and ``values_minus[i]``.
    Between nodes the density is interpolated log-log; below ``r_1`` the first
    two nodes are extrapolated as a power law. ``outer_atoms`` is a tuple of
    ``(location, mass)`` pairs with ``|location| > u0`` (a finite measure).
    """

    grid: tuple
    values_plus: tuple
    values_minus: tuple
    outer_atoms: tuple = ()

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        if g.ndim != 1 or len(g) < 3 or np.any(np.diff(g) <= 0) or g[0] <= 0:
            raise InvalidSpec("grid must be increasing, positive, with >= 3 nodes")
        for vals in (self.values_plus, self.values_minus):
            if len(vals) != len(g):
                raise InvalidSpec("values must match the grid length")
        for loc, mass in self.outer_atoms:
            if abs(loc) <= g[-1] or mass < 0:
                raise InvalidSpec("outer atoms must sit beyond u0 with non-negative mass")

    @classmethod
    def from_function(cls, density, grid, outer_atoms=()):
        grid = np.asarray(grid, dtype=float)
        return cls(tuple(grid), tuple(density(grid)), tuple(density(-grid)), tuple(outer_atoms))

    @property
    def is_zero(self):
        return not (np.any(np.asarray(self.values_plus) > 0) or np.any(np.asarray(self.values_minus) > 0)
                    or any(m > 0 for _, m in self.outer_atoms))

    def _vals(self, sign):
        return np.asarray(self.values_plus if sign > 0 else self.values_minus, dtype=float)

    def side_density(self, r, sign):
        g = np.asarray(self.grid)
        v = self._vals(sign)
        r = np.asarray(r, dtype=float)
        if np.any(v <= 0):
            out = np.interp(r, g, v)
            return np.where(r > g[-1], 0.0, out)
        lg, lv = np.log(g), np.log(v)
        lr = np.log(np.maximum(r, 1e-300))
        slope = (lv[1] - lv[0]) / (lg[1] - lg[0])
        inner = np.interp(lr, lg, lv)
        below = lv[0] + slope * (lr - lg[0])
        out = np.exp(np.where(lr < lg[0], below, inner))
        return np.where(r > g[-1] * (1 + 1e-12), 0.0, out)

    def side_integral(self, k, a, b, sign):
        b = min(b, self.grid[-1])
        total = 0.0
        if a < b:
            total, _ = integrate.quad(
                lambda s: math.exp(s * (k + 1)) * float(self.side_density(math.exp(s), sign)),
                math.log(a), math.log(b), limit=200)
        for loc, mass in self.outer_atoms:
            if np.sign(loc) == sign and a <= abs(loc):
                total += abs(loc) ** k * mass
        return total

    def side_small_moment(self, k, delta, sign):
        g0 = self.grid[0]
        v = self._vals(sign)
        if v[0] <= 0:
            below = 0.0
        else:
            slope = math.log(v[1] / v[0]) / math.log(self.grid[1] / g0)
            p = k + 1.0 + slope
            if p <= 0:
                return math.inf
            lo = min(delta, g0)
            below = v[0] * g0 ** (-slope) * lo**p / p
        return below + (self.side_integral(k, g0, delta, sign) if delta > g0 else 0.0)

    def log_derivative_ratios(self, r, sign):
        g = np.asarray(self.grid)
        v = self._vals(sign)
        d1 = np.gradient(v, g, edge_order=2)
        d2 = np.gradient(d1, g, edge_order=2)
        r = np.asarray(r, dtype=float)
        m = self.side_density(r, sign)
        with np.errstate(divide="ignore", invalid="ignore"):
            first = np.abs(np.interp(r, g, d1)) * r / m
            second = np.abs(np.interp(r, g, d2)) * r**2 / m
        return first, second

    def continuous_upper(self, u0):
        return self.grid[-1]

    def atoms(self, sign):
        return tuple((loc, m) for loc, m in self.outer_atoms if np.sign(loc) == sign and m > 0)

    def to_dict(self):
        return {"kind": "tabulated", "grid": list(self.grid), "values_plus": list(self.values_plus),
                "values_minus": list(self.values_minus),
                "outer_atoms": [list(a) for a in self.outer_atoms]}


@dataclass(frozen=True)
class LevyMeasureSpec:
    """Levy measure ``mu`` of the driving noise together with the drift ``c``."""

    kind: TemperedStable | TabulatedDensity
    drift_c: float = 0.0
    u0: float = 1.0

    def __post_init__(self):
        if self.u0 <= 0:
            raise InvalidSpec("u0 must be positive")
        if isinstance(self.kind, TabulatedDensity) and abs(self.kind.grid[-1] - self.u0) > 1e-12 * self.u0:
            raise InvalidSpec("tabulated grid must end at u0")

    @classmethod
    def zero(cls, drift_c=0.0):
        """Deterministic drift only (``mu = 0``)."""
        return cls(TemperedStable(1.0, 1.0, 1.0, 0.0, 0.0), drift_c)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        kind = d.pop("kind")
        drift = float(d.pop("drift", 0.0))
        u0 = float(d.pop("u0", 1.0))
        if kind == "tempered_stable":
            lam = d.pop("lambda", None)
            c = d.pop("c", None)
            ts = TemperedStable(
                alpha=float(d.pop("alpha")),
                lambda_plus=float(d.pop("lambda_plus", lam)),
                lambda_minus=float(d.pop("lambda_minus", lam)),
                c_plus=float(d.pop("c_plus", c)),
                c_minus=float(d.pop("c_minus", c)),
            )
            spec = cls(ts, drift, u0)
        elif kind == "tabulated":
            tab = TabulatedDensity(tuple(d.pop("grid")), tuple(d.pop("values_plus")),
                                   tuple(d.pop("values_minus")),
                                   tuple(tuple(a) for a in d.pop("outer_atoms", ())))
            spec = cls(tab, drift, u0)
        else:
            raise InvalidSpec(f"unknown Levy measure kind {kind!r}")
        if d:
            raise InvalidSpec(f"unknown keys {sorted(d)}")
        return spec

    def to_dict(self):
        d = self.kind.to_dict()
        d.update({"drift": self.drift_c, "u0": self.u0})
        return d

    @property
    def is_zero(self):
        return self.kind.is_zero

    def density(self, u):
        """Levy density ``m(u)``; zero at ``u = 0``."""
        u = np.asarray(u, dtype=float)
        r = np.abs(u)
        safe = np.where(r > 0, r, 1.0)
        out = np.where(u > 0, self.kind.side_density(safe, 1), self.kind.side_density(safe, -1))
        return np.where(r > 0, out, 0.0)

    def tail_mass(self, eps):
        """``mu({u : |u| >= eps})``."""
        return sum(self.kind.side_integral(0, eps, math.inf, s) for s in (1, -1))

    def large_jump_mean(self):
        """``int_{|u|>1} u mu(du)``."""
        k = self.kind
        return k.side_integral(1, 1.0, math.inf, 1) - k.side_integral(1, 1.0, math.inf, -1)

    def char_exponent(self, s):
        """``psi(s)`` with ``E exp(i s Z_t) = exp(t psi(s))``; tempered stable measures only."""
        if not isinstance(self.kind, TemperedStable):
            raise InvalidSpec("closed-form characteristic exponent needs a tempered stable measure")
        s = np.asarray(s, dtype=float)
        return 1j * s * self.drift_c + self.kind.side_exponent(s, 1) + self.kind.side_exponent(s, -1)

    def increment_mean(self, t):
        """Exact mean of ``Z_t``."""
        return t * (self.drift_c + self.large_jump_mean())


def check_condition_H(spec, beta=1.0, c0_probe_grid=None, eps_grid=None):
    """Numerically check condition H on a Levy measure.

    Parameters
    ----------
    spec : LevyMeasureSpec
    beta : float
        Exponent in the moment condition ``int_{|u|>=1} |u|^{4+beta} mu(du) < inf``.
    c0_probe_grid : array_like, optional
        Magnitudes in ``(0, u0]`` on which the density and its log-derivative
        ratios are probed. Both signs are checked.
    eps_grid : array_like, optional
        Decreasing radii for the small-jump mass growth check.

    Returns
    -------
    HReport

    Raises
    ------
    ConditionHViolation
        ``"i"`` for a non-finite moment, ``"ii"`` for a non-positive density.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    if c0_probe_grid is None:
        c0_probe_grid = np.linspace(0.1, 1.0, 10) * spec.u0
    grid = np.asarray(c0_probe_grid, dtype=float)
    if np.any(grid <= 0) or np.any(grid > spec.u0 * (1 + 1e-12)):
        raise ValueError("probe grid must lie in (0, u0]")
    if eps_grid is None:
        eps_grid = 10.0 ** -np.arange(1, 7)
    eps_grid = np.asarray(eps_grid, dtype=float)

    k = 4.0 + beta
    moment = 0.0
    for s in (1, -1):
        if isinstance(spec.kind, TemperedStable):
            val, _ = integrate.quad(lambda r: r**k * float(spec.kind.side_density(r, s)), 1.0, np.inf,
                                    limit=200)
        else:
            val = spec.kind.side_integral(k, 1.0, math.inf, s)
        moment += val
    if not math.isfinite(moment):
        raise ConditionHViolation("i", f"moment of order {k} is {moment}")

    dens = np.concatenate([spec.density(grid), spec.density(-grid)])
    min_density = float(dens.min())
    if not min_density > 0:
        raise ConditionHViolation("ii", f"density minimum {min_density} on the probe grid")

    firsts, seconds = zip(*(spec.kind.log_derivative_ratios(grid, s) for s in (1, -1)))
    c0_first = float(np.max(np.concatenate(firsts)))
    c0_second = float(np.max(np.concatenate(seconds)))

    scaled = [(float(e), spec.tail_mass(e) / math.log(1.0 / e)) for e in eps_grid]
    failures = []
    if not (math.isfinite(c0_first) and math.isfinite(c0_second)):
        failures.append("iii")
    vals = [v for _, v in scaled]
    if len(vals) >= 2 and not (math.isfinite(vals[-1]) and vals[-1] > vals[-2]):
        failures.append("iv")
    return HReport(moment, min_density, c0_first, c0_second, scaled, failures)


@dataclass
class HReport:
    moment_4_beta: float
    min_density: float
    c0_first: float
    c0_second: float
    h_iv_values: list
    failures: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.failures

    def to_dict(self):
        return {
            "moment_4_beta": self.moment_4_beta,
            "min_density": self.min_density,
            "c0_first": self.c0_first,
            "c0_second": self.c0_second,
            "h_iv_values": [list(p) for p in self.h_iv_values],
            "failures": list(self.failures),
            "ok": self.ok,
        }


def truncation_error(spec, delta):
    """Variance ``int_{|u|<delta} u^2 mu(du)`` of the dropped small jumps."""
    if not 0 < delta < spec.u0:
        raise ValueError("delta must lie in (0, u0)")
    if spec.is_zero:
        return 0.0
    if isinstance(spec.kind, TemperedStable) and spec.kind.alpha >= 2:
        raise InvalidSpec("small-jump variance diverges for alpha >= 2")
    val = sum(spec.kind.side_small_moment(2.0, delta, s) for s in (1, -1))
    if not math.isfinite(val):
        raise InvalidSpec("small-jump variance diverges")
    return float(val)


def default_truncation(spec, h, tol=1e-6):
    """Largest ``delta`` with ``truncation_error(delta) <= tol * h`` (capped below ``u0``)."""
    target = tol * h
    hi = 0.5 * spec.u0
    if spec.is_zero or truncation_error(spec, hi) <= target:
        return hi
    f = lambda ld: math.log(truncation_error(spec, math.exp(ld))) - math.log(target)
    return math.exp(optimize.brentq(f, math.log(1e-300 ** 0.1), math.log(hi), xtol=1e-10))


@dataclass(frozen=True)
class IncrementSamplerConfig:
    """Truncation level for small jumps and a per-call jump-count budget."""

    delta_trunc: float
    max_jumps_hint: int = 4_000_000

    def __post_init__(self):
        if self.delta_trunc <= 0:
            raise InvalidSpec("delta_trunc must be positive")
        if self.max_jumps_hint < 1:
            raise InvalidSpec("max_jumps_hint must be >= 1")


class _InverseTable:
    """Inverse of a tabulated CDF in log jump size.

    The inverse is resampled on a uniform probability grid so that lookups are
    direct indexing; the top ``1 - CUT`` of probability, where the inverse is
    steep, falls back to interpolation on the original table.
    """

    K = 1 << 16
    CUT = 0.99

    def __init__(self, s, cdf):
        self.s = s
        self.p = cdf / cdf[-1]
        self.fast = np.interp(np.linspace(0.0, self.CUT, self.K + 1), self.p, s)

    def __call__(self, v):
        x = v * (self.K / self.CUT)
        idx = np.minimum(x.astype(np.int64), self.K - 1)
        frac = x - idx
        out = self.fast[idx] + frac * (self.fast[idx + 1] - self.fast[idx])
        hi = v >= self.CUT
        if hi.any():
            out[hi] = np.interp(v[hi], self.p, self.s)
        return out


class _IncrementSampler:
    """Precomputed inverse-CDF tables for one (spec, cfg) pair. Immutable."""

    def __init__(self, spec, cfg):
        if not cfg.delta_trunc < spec.u0:
            raise InvalidSpec("delta_trunc must be below u0")
        self.spec = spec
        self.cfg = cfg
        delta = cfg.delta_trunc
        kind = spec.kind
        self.tables = []  # (sign, _InverseTable) for continuous parts
        self.atoms = []  # atom locations
        masses = []
        if not spec.is_zero:
            top = kind.continuous_upper(spec.u0)
            for sign in (1, -1):
                s = np.linspace(math.log(delta), math.log(top), TABLE_POINTS)
                f = kind.side_density(np.exp(s), sign) * np.exp(s)
                cdf = integrate.cumulative_trapezoid(f, s, initial=0.0)
                if cdf[-1] > 0:
                    self.tables.append((sign, _InverseTable(s, cdf)))
                    masses.append(cdf[-1])
            for sign in (1, -1):
                for loc, m in kind.atoms(sign):
                    if abs(loc) >= delta:
                        self.atoms.append(loc)
                        masses.append(m)
        self.symmetric = (not self.atoms and len(self.tables) == 2
                          and np.array_equal(self.tables[0][1].fast, self.tables[1][1].fast)
                          and np.array_equal(self.tables[0][1].p, self.tables[1][1].p))
        masses = np.asarray(masses, dtype=float)
        self.rate = float(masses.sum())
        self.cum_probs = np.cumsum(masses) / self.rate if self.rate > 0 else np.zeros(0)
        comp = 0.0
        if not spec.is_zero and delta < 1.0:
            comp = kind.side_integral(1, delta, 1.0, 1) - kind.side_integral(1, delta, 1.0, -1)
        self.compensator = comp

    def sample(self, t, size, rng):
        base = (self.spec.drift_c - self.compensator) * t
        if self.rate == 0.0:
            return np.full(size, base)
        out = np.empty(size)
        chunk = max(1, int(self.cfg.max_jumps_hint / max(self.rate * t, 1e-300)))
        for start in range(0, size, chunk):
            stop = min(size, start + chunk)
            out[start:stop] = self._jumps(t, stop - start, rng) + base
        return out

    def _jumps(self, t, size, rng):
        counts = rng.poisson(self.rate * t, size)
        total = int(counts.sum())
        if total == 0:
            return np.zeros(size)
        # one uniform per jump: its category, then its position within the category
        w = rng.random(total)
        edges = np.concatenate([[0.0], self.cum_probs])
        if len(self.cum_probs) == 1:
            cat = np.zeros(total, dtype=np.int64)
        elif len(self.cum_probs) == 2:
            cat = (w >= self.cum_probs[0]).astype(np.int64)
        else:
            cat = np.minimum(np.searchsorted(self.cum_probs, w, side="right"), len(self.cum_probs) - 1)
        lo = edges[cat]
        v = np.clip((w - lo) / (edges[cat + 1] - lo), 0.0, np.nextafter(1.0, 0.0))
        if self.symmetric:
            jumps = (1.0 - 2.0 * cat) * np.exp(self.tables[0][1](v))
            return np.bincount(np.repeat(np.arange(size), counts), weights=jumps, minlength=size)
        jumps = np.empty(total)
        for idx, (sign, table) in enumerate(self.tables):
            sel = cat == idx
            jumps[sel] = sign * np.exp(table(v[sel]))
        for j, loc in enumerate(self.atoms):
            jumps[cat == len(self.tables) + j] = loc
        owner = np.repeat(np.arange(size), counts)
        return np.bincount(owner, weights=jumps, minlength=size)


@functools.lru_cache(maxsize=64)
def _sampler(spec, cfg):
    return _IncrementSampler(spec, cfg)


@dataclass(frozen=True)
class LevyNoise:
    """A Levy measure paired with its simulation settings."""

    spec: LevyMeasureSpec
    cfg: IncrementSamplerConfig

    @classmethod
    def for_step(cls, spec, h, tol=1e-6):
        """Noise with the default truncation for observation step ``h``."""
        return cls(spec, IncrementSamplerConfig(default_truncation(spec, h, tol)))

    @property
    def symmetric(self):
        """True when ``Z_t`` and ``-Z_t`` have the same simulated law."""
        sampler = _sampler(self.spec, self.cfg)
        return (sampler.rate == 0.0 or sampler.symmetric) and self.spec.drift_c == 0.0

    def increments(self, t, size, rng):
        """``size`` independent copies of ``Z_t``."""
        return _sampler(self.spec, self.cfg).sample(t, size, rng)

    def truncated_second_moment(self):
        """``int_{|u|>=delta} u^2 mu(du)``: variance rate of the simulated jumps."""
        k = self.spec.kind
        d = self.cfg.delta_trunc
        return sum(k.side_integral(2, d, math.inf, s) for s in (1, -1))


def sample_increment(spec, cfg, t, rng):
    """One draw of ``Z_t`` under the truncated compound Poisson scheme."""
    if t <= 0:
        raise ValueError("t must be positive")
    return float(_sampler(spec, cfg).sample(t, 1, rng)[0])

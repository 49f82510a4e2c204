"""Finite-state parametric Markov chains with closed-form transition derivatives.

These are the exact realizations of :class:`~lanlab.transition_density.TransitionModel`
(counting reference measure). Every LAN quantity has an exact counterpart
here, which makes the chains the reference oracle for the Monte Carlo machinery.
"""
from __future__ import annotations

import itertools

import numpy as np

from .errors import InvalidSpec, NoUniqueInvariant, ScoreUndefined
from .sde_model import DiscreteSample
from .transition_density import TransitionModel


class FiniteChainModel(TransitionModel):
    """Chain on ``{0, ..., S-1}`` with transition matrix ``P(theta)``.

    Parameters
    ----------
    P, dP, d2P : callable
        ``theta -> (S, S)`` arrays: the matrix and its first two theta-derivatives.
    theta_interval : tuple
    name : str
    """

    reference = "counting"
    exact = True

    def __init__(self, P, dP, d2P, theta_interval, name="chain", params=None):
        self.P = P
        self.dP = dP
        self.d2P = d2P
        self.theta_interval = tuple(theta_interval)
        self.name = name
        self.params = params or {}
        self.n_states = np.asarray(P(self._mid())).shape[0]

    def _mid(self):
        lo, hi = self.theta_interval
        return 0.5 * (lo + hi)

    def validate(self, theta_grid=None, tol=1e-12):
        """Check row-stochasticity, positivity and zero row sums of ``dP``."""
        if theta_grid is None:
            lo, hi = self.theta_interval
            theta_grid = np.linspace(lo, hi, 23)[1:-1]
        for th in theta_grid:
            P, dP = self.P(th), self.dP(th)
            if np.any(P < 0):
                raise InvalidSpec(f"negative transition probability at theta={th}")
            if np.max(np.abs(P.sum(axis=1) - 1)) > tol:
                raise InvalidSpec(f"rows do not sum to 1 at theta={th}")
            if np.max(np.abs(dP.sum(axis=1))) > tol:
                raise InvalidSpec(f"rows of dP do not sum to 0 at theta={th}")

    def support(self, x):
        return np.arange(self.n_states)

    def logpdf(self, theta, x, y):
        with np.errstate(divide="ignore"):
            return np.log(self.P(theta)[x, y])

    def density(self, theta, x, y):
        return self.P(theta)[x, y]

    def _score_table(self, theta):
        P, dP = self.P(theta), self.dP(theta)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(P > 0, dP / np.where(P > 0, P, 1.0), np.nan)

    def score(self, theta, x, y):
        g = self._score_table(theta)[x, y]
        if np.any(np.isnan(g)):
            raise ScoreUndefined(np.asarray(y)[np.isnan(g)] if np.ndim(g) else y, "p = 0")
        return g

    def sqrt_derivative(self, theta, x, y):
        P, dP = self.P(theta), self.dP(theta)
        p = P[x, y]
        return np.where(p > 0, dP[x, y] / (2 * np.sqrt(np.where(p > 0, p, 1.0))), 0.0)

    def score_derivative(self, theta, x, y):
        P, d2P = self.P(theta), self.d2P(theta)
        g = self.score(theta, x, y)
        return d2P[x, y] / P[x, y] - g * g

    def sample_next(self, theta, x, size, rng):
        return rng.choice(self.n_states, size=size, p=self.P(theta)[x])

    def sample_paths(self, theta, x0, n, rngs):
        # draw each replication's uniforms from its own stream, then step the batch
        u = np.stack([rng.random(n) for rng in rngs])
        cum = np.cumsum(self.P(theta), axis=1)
        cum[:, -1] = np.inf
        out = np.empty((len(rngs), n + 1), dtype=np.int64)
        state = np.full(len(rngs), int(x0))
        out[:, 0] = state
        for k in range(n):
            state = (u[:, k, None] >= cum[state]).sum(axis=1)
            out[:, k + 1] = state
        return out

    def marginals(self, theta, i0, n):
        """Rows ``k = 0..n-1``: law of ``X_k`` started from ``i0``."""
        P = self.P(theta)
        pi = np.zeros(self.n_states)
        pi[i0] = 1.0
        out = np.empty((n, self.n_states))
        for k in range(n):
            out[k] = pi
            pi = pi @ P
        return out

    def step_information(self, theta):
        """``sum_j p_ij g_ij^2`` for every starting state ``i``."""
        P, dP = self.P(theta), self.dP(theta)
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(P > 0, dP**2 / np.where(P > 0, P, 1.0), 0.0)
        return terms.sum(axis=1)

    def exact_fisher_info(self, theta, i0, n):
        return exact_fisher_info(self, theta, i0, n)

    def to_dict(self):
        return {"name": self.name, **self.params}


def symmetric_two_state(theta_interval=(0.0, 1.0)):
    """``P(theta) = [[1 - theta, theta], [theta, 1 - theta]]``."""
    D = np.array([[-1.0, 1.0], [1.0, -1.0]])
    return FiniteChainModel(
        lambda th: np.array([[1.0 - th, th], [th, 1.0 - th]]),
        lambda th: D,
        lambda th: np.zeros((2, 2)),
        theta_interval,
        name="symmetric_two_state",
    )


def softmax_three_state(weights=None, biases=None, theta_interval=(-5.0, 5.0)):
    """Rows ``p_ij = softmax_j(B_ij + theta W_ij)``: smooth and strictly positive."""
    W = np.array([[1.0, -0.5, 0.0], [0.3, 0.0, -1.0], [-0.7, 0.8, 0.2]]) if weights is None \
        else np.asarray(weights, dtype=float)
    B = np.zeros_like(W) if biases is None else np.asarray(biases, dtype=float)

    def P(th):
        z = B + th * W
        e = np.exp(z - z.max(axis=1, keepdims=True))
        return e / e.sum(axis=1, keepdims=True)

    def dP(th):
        p = P(th)
        wbar = (p * W).sum(axis=1, keepdims=True)
        return p * (W - wbar)

    def d2P(th):
        p = P(th)
        wbar = (p * W).sum(axis=1, keepdims=True)
        var = (p * (W - wbar) ** 2).sum(axis=1, keepdims=True)
        return p * ((W - wbar) ** 2 - var)

    return FiniteChainModel(P, dP, d2P, theta_interval, name="softmax_three_state",
                            params={"weights": W.tolist(), "biases": B.tolist()})


def constant_chain(P0, theta_interval=(0.0, 1.0)):
    """A chain whose law does not depend on theta."""
    P0 = np.asarray(P0, dtype=float)
    Z = np.zeros_like(P0)
    return FiniteChainModel(lambda th: P0, lambda th: Z, lambda th: Z, theta_interval,
                            name="constant", params={"P": P0.tolist()})


def reparametrized(chain, scale, anchor):
    """``P'(theta) = P(anchor + scale (theta - anchor))``; scores at ``anchor`` scale by ``scale``."""
    lo, hi = chain.theta_interval
    inv = sorted(anchor + (t - anchor) / scale for t in (lo, hi))
    return FiniteChainModel(
        lambda th: chain.P(anchor + scale * (th - anchor)),
        lambda th: scale * chain.dP(anchor + scale * (th - anchor)),
        lambda th: scale**2 * chain.d2P(anchor + scale * (th - anchor)),
        tuple(inv),
        name=f"{chain.name}_x{scale:g}",
    )


CHAINS = {"symmetric_two_state": symmetric_two_state, "softmax_three_state": softmax_three_state,
          "constant": constant_chain}


def make_chain(name, **params):
    try:
        factory = CHAINS[name]
    except KeyError:
        raise InvalidSpec(f"unknown chain {name!r}; choose from {sorted(CHAINS)}") from None
    return factory(**params)


def exact_score(chain, theta, i, j):
    """``g = dp_ij / p_ij``."""
    p = chain.P(theta)[i, j]
    if p <= 0:
        raise ScoreUndefined(j, f"p_{i}{j}(theta) = 0")
    return float(chain.dP(theta)[i, j] / p)


def _initial_law(chain, i0):
    if np.ndim(i0) == 0:
        pi = np.zeros(chain.n_states)
        pi[int(i0)] = 1.0
        return pi
    pi = np.asarray(i0, dtype=float)
    if pi.shape != (chain.n_states,) or np.any(pi < 0) or abs(pi.sum() - 1) > 1e-12:
        raise ValueError("initial law must be a probability vector over the states")
    return pi


def exact_fisher_info(chain, theta0, i0, n):
    """``I_n = sum_{k=1}^n E g^2(X_{k-1}, X_k)`` by propagating the marginal law of ``X_{k-1}``.

    ``i0`` is a starting state or an initial probability vector.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    P = chain.P(theta0)
    v = chain.step_information(theta0)
    pi = _initial_law(chain, i0)
    total = 0.0
    for _ in range(n):
        total += pi @ v
        pi = pi @ P
    return float(total)


def _is_primitive(P):
    A = (np.asarray(P) > 0).astype(np.int64)
    S = A.shape[0]
    M = np.eye(S, dtype=np.int64)
    for _ in range(S * S - 2 * S + 2):
        M = np.minimum(M @ A, 1)
    return bool(np.all(M > 0))


def stationary_distribution(P, tol=1e-13, max_iter=1_000_000):
    """Invariant law of a primitive stochastic matrix by power iteration."""
    if not _is_primitive(P):
        raise NoUniqueInvariant("chain is not irreducible and aperiodic")
    S = P.shape[0]
    pi = np.full(S, 1.0 / S)
    for _ in range(max_iter):
        nxt = pi @ P
        nxt /= nxt.sum()
        if np.abs(nxt - pi).sum() < tol:
            return nxt
        pi = nxt
    raise NoUniqueInvariant("power iteration did not converge")


def exact_sigma2(chain, theta0):
    """``sigma^2 = sum_i pi_i sum_j g_ij^2 p_ij`` under the invariant law ``pi``."""
    pi = stationary_distribution(chain.P(theta0))
    return float(pi @ chain.step_information(theta0))


def sample_chain(chain, theta, i0, n, rng):
    return DiscreteSample(chain.sample_paths(theta, i0, n, [rng])[0])


def brute_force_fisher_info(chain, theta0, i0, n):
    """``I_n`` by enumerating all ``S^n`` paths from ``i0`` (small ``n`` only)."""
    P = chain.P(theta0)
    g = chain._score_table(theta0)
    S = chain.n_states
    total = 0.0
    for path in itertools.product(range(S), repeat=n):
        prev, prob, acc = i0, 1.0, 0.0
        for j in path:
            prob *= P[prev, j]
            if prob == 0.0:
                break
            acc += g[prev, j] ** 2
            prev = j
        else:
            total += prob * acc
    return total


def identity_suite(chain, theta0, i0=0, n_max=6, u=1.0):
    """Residuals of the exact identities every finite chain must satisfy.

    Returns
    -------
    dict
        name -> max absolute residual.
    """
    S = chain.n_states
    xs, ys = np.arange(S)[:, None], np.arange(S)[None, :]
    P = chain.P(theta0)
    pos = P > 0
    g = chain._score_table(theta0)
    q = chain.sqrt_derivative(theta0, xs, ys)
    out = {
        "row_stochastic": float(np.max(np.abs(P.sum(axis=1) - 1))),
        "dP_rows_sum_zero": float(np.max(np.abs(chain.dP(theta0).sum(axis=1)))),
        # g = d log p = 2 q / sqrt(p), with q = d sqrt(p)
        "score_equals_2q_over_sqrt_p": float(np.max(np.abs(g[pos] * np.sqrt(P[pos]) - 2 * q[pos]))),
        "score_mean_zero": float(np.max(np.abs(np.where(pos, g * P, 0.0).sum(axis=1)))),
    }
    fisher = []
    for n in range(1, n_max + 1):
        dp = exact_fisher_info(chain, theta0, i0, n)
        fisher.append(abs(dp - brute_force_fisher_info(chain, theta0, i0, n)) / max(1.0, abs(dp)))
    out["fisher_dp_vs_enumeration"] = float(max(fisher))
    pi = stationary_distribution(P)
    sigma2 = float(pi @ chain.step_information(theta0))
    out["sigma2_equals_stationary_I_n_over_n"] = float(max(
        abs(exact_fisher_info(chain, theta0, pi, n) / n - sigma2) / max(1.0, sigma2)
        for n in range(1, n_max + 1)))
    # one-step density ratio at theta0 + t: conditional mean 1 and the zeta identity
    t = 0.1 * u * min(1.0, 0.5 * (chain.theta_interval[1] - chain.theta_interval[0]))
    P1 = chain.P(theta0 + t)
    ratio = np.where(pos, P1 / np.where(pos, P, 1.0), 0.0)
    zeta = np.where(pos, np.sqrt(ratio) - 1, 0.0)
    # sum_y (p1 / p0) p0 is the p1-mass on the support of p0, which is 1 when supports agree
    support_mass = np.where(pos, P1, 0.0).sum(axis=1)
    out["density_ratio_mean_one"] = float(np.max(np.abs((ratio * P).sum(axis=1) - support_mass))
                                          + np.max(np.abs(support_mass - 1)))
    out["zeta_square_identity"] = float(np.max(np.abs(np.where(pos, zeta**2 - (ratio - 1 - 2 * zeta), 0.0))))
    return out

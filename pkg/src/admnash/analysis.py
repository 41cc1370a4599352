"""
Consensus decomposition, distance and rate metrics, and checkers for the
scalar inequalities behind the step-size certificate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .algorithms import RunTrace, eta_of, step_thresholds, theorem_bound


@dataclass(frozen=True)
class ConsensusSplit:
    X_par: np.ndarray
    X_perp: np.ndarray


def consensus_split(X) -> ConsensusSplit:
    """Split ``X`` into its column-mean consensus matrix and the remainder."""
    X = np.asarray(X, dtype=float)
    X_par = np.broadcast_to(X.mean(axis=0), X.shape).copy()
    return ConsensusSplit(X_par, X - X_par)


def distance_sq(X, cert) -> float:
    """Squared Frobenius distance from ``X`` to the consensus matrix of x*."""
    x_star = getattr(cert, "x_star", cert)
    return float(np.sum((np.asarray(X, dtype=float) - x_star) ** 2))


# --------------------------------------------------------------------------
# rate fitting


class RateFitError(ValueError):
    pass


@dataclass(frozen=True)
class RateFit:
    rho: float
    r2: float
    window: tuple


def default_window(trace: RunTrace):
    """Drop the first 10% of iterations and everything at the floating floor.

    The floor is ``100 * machine epsilon`` times the first squared distance;
    the window ends just before the first iterate that reaches it.
    """
    d = np.asarray(trace.dist_sq)
    start = len(d) // 10
    floor = 1e2 * np.finfo(float).eps * d[0]
    below = np.nonzero(d <= floor)[0]
    stop = int(below[0]) if below.size else len(d)
    return start, stop


def fit_rate(trace: RunTrace, window=None) -> RateFit:
    """
    Least-squares geometric rate of ``dist_sq``.

    Fits ``log(dist_sq)`` against ``k`` over ``window = (start, stop)``
    (row indices, half-open) and returns ``rho = exp(slope)``.  The window
    is cut at the first zero distance inside it.
    """
    if window is None:
        window = default_window(trace)
    start, stop = window
    d = np.asarray(trace.dist_sq[start:stop], dtype=float)
    k = np.asarray(trace.k[start:stop], dtype=float)
    zeros = np.nonzero(d <= 0)[0]
    if zeros.size:
        d, k = d[: zeros[0]], k[: zeros[0]]
        stop = start + int(zeros[0])
    if d.size < 3:
        raise RateFitError(f"need at least 3 positive distances in the window, got {d.size}")
    y = np.log(d)
    slope, intercept = np.polyfit(k, y, 1)
    ss_res = float(np.sum((y - (slope * k + intercept)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if np.ptp(y) == 0 else 1.0 - ss_res / ss_tot
    return RateFit(rho=float(np.exp(slope)), r2=r2, window=(start, stop))


# --------------------------------------------------------------------------
# envelope verification


@dataclass(frozen=True)
class BoundReport:
    holds: bool
    worst_margin: float
    worst_k: int


def verify_bound(trace: RunTrace, params, L, q, d1_sq, rtol=1e-9) -> BoundReport:
    """
    Check ``dist_sq(k+1) <= theorem_bound(k) * (1 + rtol)`` along a trace.

    The margin at k is ``1 - dist_sq(k+1) / (theorem_bound(k) * (1 + rtol))``;
    it is negative exactly where the envelope is violated.  Pairs with a zero
    bound and a zero distance count as an infinite margin.
    """
    if not trace.has_bound:
        raise ValueError("trace has no bound column (not a tuned ADM run)")
    worst, worst_k = math.inf, -1
    for r in range(len(trace) - 1):
        k = int(trace.k[r])
        bound = theorem_bound(params, L, q, k, d1_sq) * (1 + rtol)
        nxt = float(trace.dist_sq[r + 1])
        if bound > 0:
            margin = 1.0 - nxt / bound
        else:
            margin = math.inf if nxt == 0 else -math.inf
        if margin < worst:
            worst, worst_k = margin, k
    return BoundReport(holds=worst >= 0, worst_margin=worst, worst_k=worst_k)


# --------------------------------------------------------------------------
# scalar inequality checkers


def appendix1_margin(mu, L, n, sigma, q, alpha) -> float:
    """
    ``a2/b2 - a1/b1`` written with the ratios' own numerators and
    denominators; nonnegative whenever the ratio ordering holds.
    """
    if 4 * L * L * alpha * alpha > 1:
        raise ValueError("4 L^2 alpha^2 > 1: eta is undefined")
    eta = eta_of(L, alpha)
    lhs = (1 - eta + mu * alpha / n) / (1 + eta * q)
    num = 1 - eta - 2 * (L + 2 * n * L * L / mu) * alpha
    den = (1 - eta) * sigma**2 + eta * (1 + q)
    if den == 0:
        return math.inf if num > 0 else (0.0 if num == 0 else -math.inf)
    return num / den - lhs


def check_appendix1(mu, L, n, sigma, q, alpha, tol=1e-12) -> bool:
    """Whether ``a1/b1 <= a2/b2`` at step ``alpha`` (up to ``tol``)."""
    return appendix1_margin(mu, L, n, sigma, q, alpha) >= -tol


def appendix2_region(mu, L, n, alpha) -> bool:
    return 0 <= alpha <= mu / (4 * (L * mu + 2 * n * L * L)) and alpha <= math.sqrt(3) / (4 * L)


def appendix2_margin(mu, L, n, alpha) -> float:
    """``a2 - 1/8``."""
    eta = eta_of(L, alpha)
    return (1 - eta) / 2 - (L + 2 * n * L * L / mu) * alpha - 0.125


def check_appendix2(mu, L, n, alpha, tol=1e-12):
    """
    Whether ``a2 >= 1/8`` at step ``alpha``.

    Returns None (not False) when ``alpha`` is outside the region
    ``alpha <= mu / (4 (L mu + 2 n L^2))``, ``alpha <= sqrt(3) / (4 L)``
    where the inequality is claimed.
    """
    if not appendix2_region(mu, L, n, alpha):
        return None
    return appendix2_margin(mu, L, n, alpha) >= -tol


@dataclass
class FuzzReport:
    name: str
    samples: int
    failures: list

    @property
    def passed(self):
        return not self.failures


def sample_admissible(rng, size):
    """Random (mu, L, n, sigma, q) with L >= mu > 0, sigma in [0, 1), q in (0, 4]."""
    mu = 10 ** rng.uniform(-3, 2, size)
    L = mu * 10 ** rng.uniform(0, 3, size)
    n = rng.integers(1, 201, size)
    sigma = rng.uniform(0, 1, size)
    # include the sigma = 0 corner
    sigma[rng.random(size) < 0.05] = 0.0
    q = rng.uniform(0, 4, size)
    q[q == 0] = 4.0
    return mu, L, n, sigma, q


def fuzz_appendix1(samples=10_000, seed=0, tol=1e-12) -> FuzzReport:
    rng = np.random.default_rng(seed)
    mu, L, n, sigma, q = sample_admissible(rng, samples)
    frac = rng.uniform(0, 1, samples)
    frac[:: max(samples // 20, 1)] = 1.0  # hit alpha = g1 exactly
    failures = []
    for t in range(samples):
        args = (float(mu[t]), float(L[t]), int(n[t]), float(sigma[t]), float(q[t]))
        g1 = step_thresholds(*args)[0]
        alpha = float(frac[t]) * g1
        m = appendix1_margin(*args, alpha)
        if not m >= -tol:
            failures.append(dict(zip(("mu", "L", "n", "sigma", "q"), args), alpha=alpha, margin=m))
    return FuzzReport("appendix1", samples, failures)


def fuzz_appendix2(samples=10_000, seed=1, tol=1e-12) -> FuzzReport:
    rng = np.random.default_rng(seed)
    mu, L, n, _, _ = sample_admissible(rng, samples)
    frac = rng.uniform(0, 1, samples)
    frac[:: max(samples // 20, 1)] = 1.0
    failures = []
    for t in range(samples):
        m_, L_, n_ = float(mu[t]), float(L[t]), int(n[t])
        top = min(m_ / (4 * (L_ * m_ + 2 * n_ * L_ * L_)), math.sqrt(3) / (4 * L_))
        alpha = float(frac[t]) * top
        verdict = check_appendix2(m_, L_, n_, alpha, tol)
        if verdict is not True:
            failures.append(
                {"mu": m_, "L": L_, "n": n_, "alpha": alpha,
                 "margin": appendix2_margin(m_, L_, n_, alpha), "verdict": verdict}
            )
    return FuzzReport("appendix2", samples, failures)

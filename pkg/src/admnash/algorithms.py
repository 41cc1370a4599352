"""
Accelerated direct method (ADM) and distributed gradient play (DDP).

Every player i keeps a row ``X[i]`` of an n x n estimation matrix: its own
action on the diagonal and its estimates of the other players' actions
elsewhere.  One ADM iteration is

    Xhat      = W @ X
    X[i, i]  <- P_i(Xhat[i, i] - alpha * (g_i(Xhat[i]) + lam * (g_i(X[i]) - g_i(Xhat_prev[i]))))
    X[i, j]  <- Xhat[i, j]                      (j != i)

where ``g_i`` is player i's partial gradient.  DDP is the same update
with ``lam = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .game import EquilibriumCertificate, GameInstance, nash_residual
from .graphs import MixingMatrix, mix


class TuningError(ValueError):
    """A step-size certificate inequality failed."""


class DivergenceError(RuntimeError):
    """Raised by :func:`run` when the iterates blow up.

    The partial trace up to the offending iteration is kept on ``trace``.
    """

    def __init__(self, msg, trace):
        super().__init__(msg)
        self.trace = trace


# --------------------------------------------------------------------------
# estimation-matrix primitives


def gradient_diag(game: GameInstance, X) -> np.ndarray:
    """Vector whose entry i is player i's partial gradient at row ``X[i]``."""
    X = np.asarray(X, dtype=float)
    if X.shape != (game.n, game.n):
        raise ValueError(f"estimation matrix must be {game.n}x{game.n}, got {X.shape}")
    if game.rows is not None:
        return np.asarray(game.rows(X), dtype=float)
    return np.array([game.partial_gradient(i, X[i]) for i in range(game.n)])


def project_augmented(game: GameInstance, X) -> np.ndarray:
    """Clamp the diagonal to the action intervals; off-diagonals are free."""
    X = np.array(X, dtype=float)
    idx = np.diag_indices(game.n)
    X[idx] = np.clip(X[idx], game.lo, game.hi)
    return X


@dataclass
class AdmState:
    X_cur: np.ndarray
    Xhat_prev: np.ndarray
    grad_hat_prev: np.ndarray
    k: int = 1


def adm_init(game: GameInstance, W: MixingMatrix, X0) -> AdmState:
    """First averaging round; ``x^1`` is the projected ``W @ X0``."""
    X0 = np.asarray(X0, dtype=float)
    if X0.shape != (game.n, game.n) or W.n != game.n:
        raise ValueError("X0 and W must both be n x n")
    if not game.feasible(np.diagonal(X0)):
        raise ValueError("diag(X0) must lie in the action set")
    Xhat = mix(W, X0)
    return AdmState(
        X_cur=project_augmented(game, Xhat),
        Xhat_prev=Xhat,
        grad_hat_prev=gradient_diag(game, Xhat),
        k=1,
    )


def _update(game, Xhat, direction, alpha):
    X_new = Xhat.copy()
    idx = np.diag_indices(game.n)
    X_new[idx] = np.clip(Xhat[idx] - alpha * direction, game.lo, game.hi)
    return X_new


def adm_step(game, W, state: AdmState, params) -> AdmState:
    """One ADM iteration.  Evaluates each partial gradient exactly twice."""
    alpha, lam = params.alpha, params.lam
    Xhat = mix(W, state.X_cur)
    g_hat = gradient_diag(game, Xhat)
    g_cur = gradient_diag(game, state.X_cur)
    X_new = _update(game, Xhat, g_hat + lam * (g_cur - state.grad_hat_prev), alpha)
    return AdmState(X_cur=X_new, Xhat_prev=Xhat, grad_hat_prev=g_hat, k=state.k + 1)


def ddp_step(game, W, state: AdmState, alpha) -> AdmState:
    """One projected distributed gradient play step (ADM with ``lam = 0``)."""
    Xhat = mix(W, state.X_cur)
    g_hat = gradient_diag(game, Xhat)
    X_new = _update(game, Xhat, g_hat, alpha)
    return AdmState(X_cur=X_new, Xhat_prev=Xhat, grad_hat_prev=g_hat, k=state.k + 1)


# --------------------------------------------------------------------------
# parameters


def _one_minus_sqrt(L, alpha):
    """``1 - sqrt(1 - 4 L^2 alpha^2)`` without cancellation (equals 2 eta)."""
    s = 4.0 * L * L * alpha * alpha
    if s > 1.0:
        raise TuningError(f"4 L^2 alpha^2 = {s:.6g} > 1: eta is undefined")
    return s / (1.0 + math.sqrt(1.0 - s))


def eta_of(L, alpha):
    return 0.5 * _one_minus_sqrt(L, alpha)


def epsilon_of(mu, L, n, q, alpha):
    """Geometric rate exponent eps(alpha); ``q`` is ``||I - W||^2``."""
    t = _one_minus_sqrt(L, alpha)
    return (2.0 * mu * alpha / n - (1.0 + q) * t) / (2.0 + q * t)


def step_thresholds(mu, L, n, sigma, q):
    """The four step-size ceilings g1..g4 (``q`` is ``||I - W||^2``)."""
    g1 = n * mu * (1 - sigma**2) / (4 * (mu + 2 * n * L) ** 2 * (1 + q))
    g2 = n * (1 + q) / (2 * mu)
    g3 = mu * n * (1 + q) / (mu**2 + L**2 * (1 + q) ** 2 * n**2)
    g4 = mu / math.sqrt(4 * L**2 * mu**2 + 16 * (L * mu + 2 * n * L**2) ** 2)
    return g1, g2, g3, g4


def prop_constants(mu, L, n, sigma, q, alpha):
    """(a1, a2, b1, b2) for the given step size."""
    eta = eta_of(L, alpha)
    a1 = (1 - eta) / 2 + mu * alpha / (2 * n)
    a2 = (1 - eta) / 2 - (L + 2 * n * L**2 / mu) * alpha
    b1 = (1 + eta * q) / 2
    b2 = ((1 - eta) * sigma**2 + eta * (1 + q)) / 2
    return a1, a2, b1, b2


def consensus_ratio(a2, b2):
    if b2 == 0:
        return math.inf if a2 > 0 else -math.inf
    return a2 / b2


@dataclass(frozen=True)
class AdmParams:
    """
    Step size and extrapolation weight plus the certificate behind them.

    Attributes
    ----------
    alpha, lam : float
        Step size and extrapolation weight used by :func:`adm_step`.
    eta : float
        ``(1 - sqrt(1 - 4 L^2 alpha^2)) / 2``.
    epsilon : float
        Rate exponent; the distance envelope shrinks by ``1 / (1 + epsilon)``
        per iteration.
    g : tuple
        Step-size ceilings (g1, g2, g3, g4).
    prop : tuple
        (a1, a2, b1, b2).
    c : float
        ``min(a1/b1, a2/b2)``.
    """

    alpha: float
    lam: float
    eta: float = math.nan
    epsilon: float = math.nan
    g: tuple = ()
    prop: tuple = ()
    c: float = math.nan
    mu: float = math.nan
    L: float = math.nan
    n: int = 0
    sigma: float = math.nan
    q: float = math.nan

    @property
    def certified(self):
        return bool(self.g)

    def to_dict(self):
        d = {
            "alpha": self.alpha, "lambda": self.lam, "eta": self.eta,
            "epsilon": self.epsilon, "c": self.c,
            "mu": self.mu, "L": self.L, "n": self.n, "sigma": self.sigma, "q": self.q,
        }
        if self.g:
            d.update(zip(("g1", "g2", "g3", "g4"), self.g))
        if self.prop:
            d.update(zip(("a1", "a2", "b1", "b2"), self.prop))
        return d


def _rel_close(x, y, rtol):
    return abs(x - y) <= rtol * max(abs(x), abs(y), 1e-300)


def tune_parameters(mu, L, n, sigma, norm_i_minus_w, safety=1.0) -> AdmParams:
    """
    Certified ADM parameters.

    Picks ``alpha = safety * min(g1, g2, g3, g4)`` and
    ``lam = 1 / (1 + eps(alpha))``, then checks every inequality the
    geometric-rate certificate depends on.

    Parameters
    ----------
    mu, L : float
        Monotonicity and aggregate Lipschitz constants.
    n : int
        Number of players.
    sigma : float
        Second largest singular value of W, in [0, 1).
    norm_i_minus_w : float
        Spectral norm of ``I - W``, in (0, 2].  (A single player has
        ``I - W = 0``; that degenerate case is accepted as well.)
    safety : float
        Fraction of the admissible step-size budget to use, in (0, 1].

    Raises
    ------
    TuningError
        Naming the first violated inequality.
    """
    if not mu > 0:
        raise TuningError(f"mu must be positive, got {mu}")
    if not L > 0:
        raise TuningError(f"L must be positive, got {L}")
    if int(n) != n or n < 1:
        raise TuningError(f"n must be a positive integer, got {n}")
    if not 0 <= sigma < 1:
        raise TuningError(f"sigma must lie in [0, 1), got {sigma}")
    if not 0 <= norm_i_minus_w <= 2:
        raise TuningError(f"||I - W|| must lie in [0, 2], got {norm_i_minus_w}")
    if not 0 < safety <= 1:
        raise TuningError(f"safety factor must lie in (0, 1], got {safety}")
    n = int(n)
    q = norm_i_minus_w**2
    g = step_thresholds(mu, L, n, sigma, q)
    alpha = safety * min(g)
    eta = eta_of(L, alpha)
    eps = epsilon_of(mu, L, n, q, alpha)
    lam = 1.0 / (1.0 + eps)
    a1, a2, b1, b2 = prop_constants(mu, L, n, sigma, q, alpha)
    r1 = a1 / b1
    r2 = consensus_ratio(a2, b2)
    c = min(r1, r2)

    if not eps > 0:
        raise TuningError(f"eps(alpha) = {eps:.6g} is not positive")
    if not 0 < eta < 1:
        raise TuningError(f"eta = {eta:.6g} outside (0, 1)")
    if not r1 <= r2:
        raise TuningError(f"a1/b1 = {r1:.15g} exceeds a2/b2 = {r2:.15g}")
    # c - 1 = min(eps, (a2 - b2) / b2), kept exact when c rounds to 1.0
    c_minus_1 = min(eps, (a2 - b2) / b2 if b2 > 0 else math.inf)
    if not c_minus_1 > 0:
        raise TuningError(f"c = min(a1/b1, a2/b2) = 1 + {c_minus_1:.6g} is not > 1")
    if not a2 >= 0.125:
        raise TuningError(f"a2 = {a2:.6g} < 1/8")
    # ceilings the rate argument uses on top of g1..g4
    for name, bound in (
        ("alpha <= 1/(4L)", 1 / (4 * L)),
        ("alpha <= mu/(4(L mu + 2 n L^2))", mu / (4 * (L * mu + 2 * n * L**2))),
        ("alpha <= sqrt(3)/(4L)", math.sqrt(3) / (4 * L)),
        ("alpha <= sqrt(7)/(8L)", math.sqrt(7) / (8 * L)),
    ):
        if not alpha <= bound:
            raise TuningError(f"{name} violated: alpha = {alpha:.6g}, bound = {bound:.6g}")
    if not L * L * alpha * alpha / (2 * (1 - eta)) <= 1 / 16:
        raise TuningError("L^2 alpha^2 / (2 (1 - eta)) exceeds 1/16")
    if not c * eta * (1 - eta) >= L * L * alpha * alpha * (1 - 1e-12):
        raise TuningError("c eta (1 - eta) >= L^2 alpha^2 violated")
    if not _rel_close(L * L * alpha * alpha, eta * (1 - eta), 1e-12):
        raise TuningError("L^2 alpha^2 = eta (1 - eta) violated")
    # a1/b1 - 1 in cancellation-free form
    if not _rel_close(eps, (mu * alpha / (2 * n) - eta * (1 + q) / 2) / b1, 1e-12):
        raise TuningError("eps(alpha) != a1/b1 - 1")
    return AdmParams(
        alpha=alpha, lam=lam, eta=eta, epsilon=eps, g=g, prop=(a1, a2, b1, b2), c=c,
        mu=mu, L=L, n=n, sigma=sigma, q=q,
    )


def fixed_parameters(alpha, lam=None, mu=None, L=None, n=None, q=None) -> AdmParams:
    """Uncertified parameters for step-size sweeps.

    When ``lam`` is omitted it is set to ``1 / (1 + eps(alpha))`` if the
    constants are given and that value is well defined and positive, and to
    1 otherwise.
    """
    if not alpha > 0:
        raise TuningError(f"alpha must be positive, got {alpha}")
    eps = math.nan
    if None not in (mu, L, n, q):
        try:
            eps = epsilon_of(mu, L, n, q, alpha)
        except TuningError:
            eps = math.nan
    if lam is None:
        lam = 1.0 / (1.0 + eps) if eps > 0 else 1.0
    return AdmParams(alpha=alpha, lam=lam, epsilon=eps)


def theorem_bound(params: AdmParams, L, q, k, d1_sq) -> float:
    """
    Upper bound on ``||X^{k+1} - X*||_F^2`` guaranteed by the tuned step.

    ``(8 + 4q - 4q sqrt(1 - 4 L^2 alpha^2)) / (1 + eps)^(k-1) * d1_sq`` where
    ``d1_sq = ||X^1 - X*||_F^2`` and ``q = ||I - W||^2``.
    """
    if k < 1:
        raise ValueError("theorem_bound is defined for k >= 1")
    if d1_sq == 0:
        return 0.0
    head = 8.0 + 4.0 * q * _one_minus_sqrt(L, params.alpha)
    return head * d1_sq * math.exp(-(k - 1) * math.log1p(params.epsilon))


# --------------------------------------------------------------------------
# driver


@dataclass
class RunTrace:
    """Per-iteration metrics of one run.

    Row ``r`` describes iterate ``X^{k[r]}``.  ``bound[r]`` is the envelope
    for the *next* iterate, ``theorem_bound(k[r])``; the column is None for DDP.
    """

    k: np.ndarray
    dist_sq: np.ndarray
    residual: np.ndarray
    perp: np.ndarray
    bound: Optional[np.ndarray]
    meta: dict = field(default_factory=dict)
    # last recorded estimation matrix; not serialized
    X_last: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __len__(self):
        return len(self.k)

    @property
    def has_bound(self):
        return self.bound is not None

    def to_csv(self):
        lines = ["k,dist_sq,residual,perp,bound"]
        for r in range(len(self)):
            b = "" if self.bound is None else repr(float(self.bound[r]))
            lines.append(
                f"{int(self.k[r])},{float(self.dist_sq[r])!r},{float(self.residual[r])!r},"
                f"{float(self.perp[r])!r},{b}"
            )
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text, meta=None):
        rows = [ln.split(",") for ln in text.strip().splitlines()]
        if rows[0] != ["k", "dist_sq", "residual", "perp", "bound"]:
            raise ValueError(f"unexpected trace header {rows[0]}")
        body = rows[1:]
        bound = None
        if body and all(r[4] != "" for r in body):
            bound = np.array([float(r[4]) for r in body])
        return cls(
            k=np.array([int(r[0]) for r in body]),
            dist_sq=np.array([float(r[1]) for r in body]),
            residual=np.array([float(r[2]) for r in body]),
            perp=np.array([float(r[3]) for r in body]),
            bound=bound,
            meta=dict(meta or {}),
        )


ALGORITHMS = ("adm", "ddp")


def run(game, W, algorithm, params, X0, k_max, stop_tol=None, cert=None) -> RunTrace:
    """
    Iterate ADM or DDP and record a :class:`RunTrace`.

    Stops after ``k_max`` recorded iterates or once
    ``dist_sq <= stop_tol**2``.  ``stop_tol`` of None or infinity disables
    early stopping.  Raises :class:`DivergenceError` if an iterate becomes
    non-finite or its squared distance exceeds 1e12 times the first one.
    """
    from .analysis import consensus_split, distance_sq

    algorithm = algorithm.lower()
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    if cert is None:
        raise ValueError("run needs an equilibrium certificate to measure distances")
    if not params.alpha > 0:
        raise TuningError("alpha must be positive")
    with_bound = algorithm == "adm" and params.certified
    if algorithm == "adm" and not params.lam > 0:
        raise TuningError("ADM needs a positive extrapolation weight")
    if stop_tol is None or not math.isfinite(stop_tol):
        stop_sq = -math.inf
    else:
        stop_sq = stop_tol * stop_tol
    q = W.q
    rows = {"k": [], "dist_sq": [], "residual": [], "perp": [], "bound": []}

    def trace():
        return RunTrace(
            X_last=state.X_cur.copy(),
            k=np.array(rows["k"], dtype=int),
            dist_sq=np.array(rows["dist_sq"]),
            residual=np.array(rows["residual"]),
            perp=np.array(rows["perp"]),
            bound=np.array(rows["bound"]) if with_bound else None,
            meta={
                "algorithm": algorithm,
                "alpha": params.alpha,
                "lambda": params.lam if algorithm == "adm" else 0.0,
                "epsilon": params.epsilon if algorithm == "adm" else math.nan,
                "n": game.n,
            },
        )

    state = adm_init(game, W, X0)
    d1_sq = None
    while True:
        X = state.X_cur
        if not np.all(np.isfinite(X)):
            raise DivergenceError(f"non-finite iterate at k={state.k}", trace())
        d = distance_sq(X, cert)
        if d1_sq is None:
            d1_sq = d
        if d > 1e12 * max(d1_sq, np.finfo(float).tiny):
            raise DivergenceError(f"dist_sq={d:.3g} at k={state.k} exceeds 1e12 x initial", trace())
        rows["k"].append(state.k)
        rows["dist_sq"].append(d)
        rows["residual"].append(nash_residual(game, np.diagonal(X)))
        rows["perp"].append(float(np.linalg.norm(consensus_split(X).X_perp)))
        if with_bound:
            rows["bound"].append(theorem_bound(params, params.L, q, state.k, d1_sq))
        if state.k >= k_max or d <= stop_sq:
            return trace()
        if algorithm == "adm":
            state = adm_step(game, W, state, params)
        else:
            state = ddp_step(game, W, state, params.alpha)


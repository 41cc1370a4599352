"""
Games with scalar actions on intervals.

A game is described by its players' partial-gradient oracles, the action
intervals and a set of certified constants (strong monotonicity and
Lipschitz constants).  The quadratic family used in the benchmarks lives
here too, together with an equilibrium solver that is deliberately kept
independent of the distributed algorithms.

Player indices are 0-based throughout.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np


class GameError(ValueError):
    """Raised when a game or one of its inputs is malformed."""


class NotStronglyMonotone(GameError):
    """Raised when a quadratic game has no positive monotonicity constant."""


class EquilibriumNotFound(RuntimeError):
    pass


@dataclass(frozen=True)
class ActionInterval:
    """Closed interval ``[lo, hi]``; either end may be infinite."""

    lo: float = -math.inf
    hi: float = math.inf

    def __post_init__(self):
        if math.isnan(self.lo) or math.isnan(self.hi) or self.lo > self.hi:
            raise GameError(f"empty interval [{self.lo}, {self.hi}]")

    @property
    def bounded(self):
        return math.isfinite(self.lo) or math.isfinite(self.hi)

    def __contains__(self, v):
        return self.lo <= v <= self.hi


def project_interval(iv: ActionInterval, v: float) -> float:
    """Euclidean projection of ``v`` onto ``iv``."""
    if not math.isfinite(v):
        raise GameError(f"cannot project non-finite value {v}")
    return min(max(v, iv.lo), iv.hi)


def _bounds(intervals):
    lo = np.array([iv.lo for iv in intervals], dtype=float)
    hi = np.array([iv.hi for iv in intervals], dtype=float)
    return lo, hi


def aggregate_lipschitz(L_local, L_cross) -> float:
    """Lipschitz constant of the pseudo-gradient estimation mapping.

    Returns ``max_i sqrt(L_i**2 + L_{-i}**2)``.
    """
    L_local = np.asarray(L_local, dtype=float)
    L_cross = np.asarray(L_cross, dtype=float)
    if L_local.shape != L_cross.shape or L_local.ndim != 1 or L_local.size == 0:
        raise GameError("L_local and L_cross must be nonempty vectors of equal length")
    if np.any(L_local < 0) or np.any(L_cross < 0):
        raise GameError("Lipschitz constants must be nonnegative")
    return float(np.max(np.hypot(L_local, L_cross)))


@dataclass(frozen=True)
class GameInstance:
    """
    An n-player game with scalar actions and certified constants.

    Parameters
    ----------
    n : int
        Number of players.
    partial : callable
        ``partial(i, x) -> float`` returning the derivative of player i's
        cost with respect to its own action at the joint action ``x``.
        It must be pure and defined on all of R^n.
    intervals : sequence of ActionInterval
        Action set of each player.
    mu : float
        Restricted strong monotonicity constant of the pseudo-gradient.
    L_local, L_cross : array_like
        Lipschitz constants of each partial gradient in the own action and
        in the other players' actions.
    rows : callable, optional
        Vectorized ``rows(X) -> ndarray`` returning ``partial(i, X[i])`` for
        every row i at once.  Used only as a fast path.
    """

    n: int
    partial: Callable[[int, np.ndarray], float]
    intervals: tuple
    mu: float
    L_local: np.ndarray
    L_cross: np.ndarray
    rows: Optional[Callable[[np.ndarray], np.ndarray]] = None
    L: float = field(init=False)
    lo: np.ndarray = field(init=False, repr=False)
    hi: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        intervals = tuple(self.intervals)
        if self.n < 1 or len(intervals) != self.n:
            raise GameError(f"need {self.n} intervals, got {len(intervals)}")
        if not self.mu > 0:
            raise GameError(f"mu must be positive, got {self.mu}")
        L_local = np.asarray(self.L_local, dtype=float)
        L_cross = np.asarray(self.L_cross, dtype=float)
        if L_local.shape != (self.n,) or L_cross.shape != (self.n,):
            raise GameError("L_local and L_cross must have one entry per player")
        L_local.flags.writeable = False
        L_cross.flags.writeable = False
        lo, hi = _bounds(intervals)
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "intervals", intervals)
        object.__setattr__(self, "L_local", L_local)
        object.__setattr__(self, "L_cross", L_cross)
        object.__setattr__(self, "L", aggregate_lipschitz(L_local, L_cross))
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def gamma(self):
        return self.L / self.mu

    @property
    def bounded(self):
        return any(iv.bounded for iv in self.intervals)

    def partial_gradient(self, i: int, x) -> float:
        if not 0 <= i < self.n:
            raise GameError(f"player index {i} out of range for n={self.n}")
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise GameError(f"expected a joint action of length {self.n}")
        if not np.all(np.isfinite(x)):
            raise GameError("joint action has non-finite components")
        return float(self.partial(i, x))

    def pseudo_gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.rows is not None and x.shape == (self.n,) and np.all(np.isfinite(x)):
            return np.asarray(self.rows(np.tile(x, (self.n, 1))), dtype=float)
        return np.array([self.partial_gradient(i, x) for i in range(self.n)])

    def project(self, x) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float), self.lo, self.hi)

    def feasible(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lo) and np.all(x <= self.hi))


def partial_gradient(game: GameInstance, i: int, x) -> float:
    return game.partial_gradient(i, x)


def pseudo_gradient(game: GameInstance, x) -> np.ndarray:
    return game.pseudo_gradient(x)


def nash_residual(game: GameInstance, x) -> float:
    """Natural-map residual ``||x - P(x - F(x))||``; zero exactly at equilibria."""
    x = np.asarray(x, dtype=float)
    if not game.feasible(x):
        raise GameError("nash_residual needs a feasible joint action")
    return float(np.linalg.norm(x - game.project(x - game.pseudo_gradient(x))))


# --------------------------------------------------------------------------
# quadratic family: J_i(x) = 0.5 a_i x_i^2 + b_i x_i + (sum_j c_ij x_j) x_i


@dataclass(frozen=True)
class QuadraticGameSpec:
    a: np.ndarray
    b: np.ndarray
    C: np.ndarray
    intervals: tuple = None
    seed: Optional[int] = None
    delta: Optional[float] = None

    def __post_init__(self):
        a = np.array(self.a, dtype=float).reshape(-1)
        n = a.size
        b = np.array(self.b, dtype=float).reshape(-1)
        C = np.array(self.C, dtype=float).reshape(n, n) if n else np.zeros((0, 0))
        if n < 1 or b.shape != (n,):
            raise GameError("a and b must be nonempty vectors of equal length")
        if np.any(np.diag(C) != 0):
            raise GameError("interaction matrix C must have a zero diagonal")
        if np.any(a <= 0):
            raise GameError("quadratic self-coefficients a_i must be positive")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b)) and np.all(np.isfinite(C))):
            raise GameError("coefficients must be finite")
        intervals = self.intervals
        if intervals is None:
            intervals = (ActionInterval(),) * n
        intervals = tuple(
            iv if isinstance(iv, ActionInterval) else ActionInterval(*iv) for iv in intervals
        )
        if len(intervals) != n:
            raise GameError(f"need {n} intervals, got {len(intervals)}")
        for arr in (a, b, C):
            arr.flags.writeable = False
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "intervals", intervals)

    @property
    def n(self):
        return self.a.size

    @property
    def jacobian(self):
        """The constant Jacobian M of the pseudo-gradient, F(x) = M x + b."""
        return self.C + np.diag(self.a)

    def __eq__(self, other):
        if not isinstance(other, QuadraticGameSpec):
            return NotImplemented
        return (
            np.array_equal(self.a, other.a)
            and np.array_equal(self.b, other.b)
            and np.array_equal(self.C, other.C)
            and self.intervals == other.intervals
            and self.seed == other.seed
            and self.delta == other.delta
        )

    __hash__ = None

    # serialization ------------------------------------------------------

    def to_dict(self):
        triplets = [[int(i), int(j), float(self.C[i, j])] for i, j in zip(*np.nonzero(self.C))]
        return {
            "n": int(self.n),
            "a": [float(v) for v in self.a],
            "b": [float(v) for v in self.b],
            "C": triplets,
            "intervals": [[_enc(iv.lo), _enc(iv.hi)] for iv in self.intervals],
            "seed": self.seed,
            "delta": self.delta,
        }

    @classmethod
    def from_dict(cls, d):
        n = int(d["n"])
        C = np.zeros((n, n))
        for i, j, v in d.get("C", []):
            C[int(i), int(j)] = float(v)
        intervals = d.get("intervals")
        if intervals is not None:
            intervals = [ActionInterval(_dec(lo, -math.inf), _dec(hi, math.inf)) for lo, hi in intervals]
        return cls(a=d["a"], b=d["b"], C=C, intervals=intervals, seed=d.get("seed"), delta=d.get("delta"))

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def loads(cls, text):
        return cls.from_dict(json.loads(text))


def _enc(v):
    # JSON has no infinities; unbounded ends are written as null
    return None if math.isinf(v) else float(v)


def _dec(v, default):
    return default if v is None else float(v)


def quadratic_constants(spec: QuadraticGameSpec):
    """
    Certified constants of a quadratic game.

    Returns
    -------
    mu : float
        Smallest eigenvalue of the symmetric part of the Jacobian.
    L_local : ndarray
        ``a_i`` for each player.
    L_cross : ndarray
        Euclidean norm of row i of ``C``.

    Raises
    ------
    NotStronglyMonotone
        If the symmetric part of the Jacobian is not positive definite.
    """
    M = spec.jacobian
    sym = 0.5 * (M + M.T)
    mu = float(np.linalg.eigvalsh(sym)[0])
    if not mu > 0:
        raise NotStronglyMonotone(
            f"symmetric part of the Jacobian has smallest eigenvalue {mu:.3g} <= 0"
        )
    return mu, spec.a.copy(), np.linalg.norm(spec.C, axis=1)


def quadratic_game(spec: QuadraticGameSpec) -> GameInstance:
    """Wrap a quadratic spec as a GameInstance with certified constants."""
    mu, L_local, L_cross = quadratic_constants(spec)
    a, b, C = spec.a, spec.b, spec.C

    def partial(i, x):
        return a[i] * x[i] + b[i] + float(np.dot(C[i], x))

    def rows(X):
        return a * np.diagonal(X) + b + np.einsum("ij,ij->i", C, X)

    return GameInstance(
        n=spec.n, partial=partial, intervals=spec.intervals, mu=mu,
        L_local=L_local, L_cross=L_cross, rows=rows,
    )


@dataclass(frozen=True)
class QuadraticGameConfig:
    """Sampling ranges for :func:`generate_quadratic_game`."""

    delta: float = 0.5
    c_range: tuple = (-1.0, 1.0)
    b_range: tuple = (-1.0, 1.0)

    def validate(self):
        if not self.delta > 0:
            raise GameError(f"dominance margin delta must be positive, got {self.delta}")
        for name in ("c_range", "b_range"):
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
                raise GameError(f"invalid {name} {lo, hi}")


def generate_quadratic_game(n, rng, cfg=QuadraticGameConfig(), intervals=None, seed=None):
    """
    Draw a random strongly monotone quadratic game.

    Off-diagonal couplings and linear terms are uniform on their ranges;
    the self-coefficients are then set to

        a_i = sum_j (|c_ij| + |c_ji|) / 2 + delta

    so the symmetric part of the Jacobian is strictly diagonally dominant
    and its smallest eigenvalue is at least ``delta``.

    ``rng`` is a ``numpy.random.Generator`` or an integer seed.
    """
    if n < 1:
        raise GameError("need at least one player")
    cfg.validate()
    if not isinstance(rng, np.random.Generator):
        seed = int(rng) if seed is None else seed
        rng = np.random.default_rng(rng)
    C = rng.uniform(cfg.c_range[0], cfg.c_range[1], size=(n, n))
    np.fill_diagonal(C, 0.0)
    b = rng.uniform(cfg.b_range[0], cfg.b_range[1], size=n)
    absC = np.abs(C)
    a = 0.5 * (absC.sum(axis=1) + absC.sum(axis=0)) + cfg.delta
    return QuadraticGameSpec(a=a, b=b, C=C, intervals=intervals, seed=seed, delta=cfg.delta)


@dataclass(frozen=True)
class EquilibriumCertificate:
    x_star: np.ndarray
    residual: float
    tolerance: float


def reference_equilibrium(spec: QuadraticGameSpec, tol=1e-12, max_iter=1_000_000):
    """
    Solve the game's variational inequality centrally.

    Unconstrained games are solved as the linear system ``M x = -b``.
    Otherwise plain projected gradient ``x <- P(x - tau F(x))`` is run with
    ``tau = mu / ||M||_2**2`` until the natural-map residual drops below
    ``tol``.  This code path shares nothing with the distributed solvers.
    """
    if not tol > 0:
        raise GameError("tol must be positive")
    mu, _, _ = quadratic_constants(spec)
    M = spec.jacobian
    lo, hi = _bounds(spec.intervals)

    def residual(x):
        return float(np.linalg.norm(x - np.clip(x - (M @ x + spec.b), lo, hi)))

    if not any(iv.bounded for iv in spec.intervals):
        x = np.linalg.solve(M, -spec.b)
        r = residual(x)
        if r > tol:
            # one step of iterative refinement for ill-conditioned draws
            x = x - np.linalg.solve(M, M @ x + spec.b)
            r = residual(x)
        if r > tol:
            raise EquilibriumNotFound(f"linear solve residual {r:.3g} exceeds tol {tol:.3g}")
        return EquilibriumCertificate(x, r, tol)

    tau = mu / np.linalg.norm(M, 2) ** 2
    x = np.clip(np.zeros(spec.n), lo, hi)
    r = residual(x)
    for _ in range(max_iter):
        if r <= tol:
            return EquilibriumCertificate(x, r, tol)
        x = np.clip(x - tau * (M @ x + spec.b), lo, hi)
        r = residual(x)
    raise EquilibriumNotFound(
        f"projected gradient stalled at residual {r:.3g} after {max_iter} iterations"
    )

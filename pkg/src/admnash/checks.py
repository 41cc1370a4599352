"""
Self-check suite behind ``admnash check``: randomized property checks of
the scalar certificate inequalities, the mixing matrices and the solvers.
"""

from __future__ import annotations

import math

import numpy as np

from . import analysis
from .algorithms import AdmParams, TuningError, adm_init, adm_step, ddp_step, tune_parameters
from .analysis import FuzzReport, sample_admissible
from .game import generate_quadratic_game, quadratic_game, reference_equilibrium
from .graphs import generate_named, generate_tree, metropolis_weights


def check_tuner(samples, seed=2):
    """Tuner invariants on random admissible scalars."""
    rng = np.random.default_rng(seed)
    mu, L, n, sigma, q = sample_admissible(rng, samples)
    failures = []
    for t in range(samples):
        args = (float(mu[t]), float(L[t]), int(n[t]), float(sigma[t]), math.sqrt(float(q[t])))
        try:
            p = tune_parameters(*args)
        except TuningError as exc:
            failures.append({"args": args, "error": str(exc)})
            continue
        if not (p.epsilon > 0 and p.c > 1 and abs(p.lam * (1 + p.epsilon) - 1) <= 1e-12):
            failures.append({"args": args, "error": "invariant mismatch", "params": p.to_dict()})
    return FuzzReport("tuner", samples, failures)


def _graphs(samples, rng):
    yield from (generate_named(kind, m) for kind, m in
                (("complete", 3), ("path", 3), ("path", 7), ("ring", 5), ("complete", 8)))
    for _ in range(samples):
        yield generate_tree(int(rng.integers(2, 40)), rng)


def check_mixing(samples, seed=3, vectors=1000):
    """Row sums, symmetry, sigma < 1, averaging contraction, ||I - W|| by power iteration."""
    rng = np.random.default_rng(seed)
    failures = []
    count = 0
    for g in _graphs(samples, rng):
        count += 1
        W = metropolis_weights(g)
        Wm = W.W
        tag = {"n": g.n, "edges": sorted(g.edges)}
        if not np.array_equal(Wm, Wm.T):
            failures.append({**tag, "error": "W not symmetric"})
        if np.max(np.abs(Wm @ np.ones(g.n) - 1)) > 1e-12:
            failures.append({**tag, "error": "W 1 != 1"})
        if not W.sigma < 1 - 1e-12:
            failures.append({**tag, "error": f"sigma = {W.sigma}"})
        X = rng.standard_normal((g.n, vectors))
        dev = X - X.mean(axis=0)
        lhs = np.linalg.norm(Wm @ X - X.mean(axis=0), axis=0)
        rhs = W.sigma * np.linalg.norm(dev, axis=0) * (1 + 1e-12)
        # rounding floor of the matvec; only matters when sigma is ~0 (complete graphs)
        rhs += g.n * np.finfo(float).eps * np.linalg.norm(X, axis=0)
        bad = np.nonzero(lhs > rhs)[0]
        if bad.size:
            failures.append({**tag, "error": "averaging contraction", "ratio": float(np.max(lhs / rhs))})
        est = power_norm(np.eye(g.n) - Wm, rng)
        if abs(est - W.norm_i_minus_w) > 1e-9:
            failures.append({**tag, "error": f"||I-W|| {W.norm_i_minus_w} vs power iteration {est}"})
    return FuzzReport("mixing", count, failures)


def power_norm(A, rng, iters=10_000, tol=1e-15):
    """Spectral norm via power iteration on ``A^T A``."""
    AtA = A.T @ A
    v = rng.standard_normal(A.shape[1])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = AtA @ v
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        v = w / nw
        if abs(nw - lam) <= tol * nw:
            lam = nw
            break
        lam = nw
    return math.sqrt(lam)


def check_fixed_points(samples, seed=4):
    """Consensus at an unconstrained equilibrium is invariant under ADM and DDP."""
    rng = np.random.default_rng(seed)
    failures = []
    for _ in range(samples):
        n = int(rng.integers(1, 15))
        spec = generate_quadratic_game(n, rng)
        game = quadratic_game(spec)
        x = reference_equilibrium(spec).x_star
        W = metropolis_weights(generate_tree(n, rng))
        X0 = np.tile(x, (n, 1))
        params = AdmParams(alpha=float(rng.uniform(0.01, 1)) / game.L, lam=float(rng.uniform(0, 1)))
        s = adm_init(game, W, X0)
        for name, step in (("adm", lambda s: adm_step(game, W, s, params)),
                           ("ddp", lambda s: ddp_step(game, W, s, params.alpha))):
            err = float(np.max(np.abs(step(s).X_cur - X0)))
            if err > 1e-14 * max(1.0, float(np.max(np.abs(x)))):
                failures.append({"n": n, "algorithm": name, "max_abs_change": err})
    return FuzzReport("fixed_point", samples, failures)


def run_checks(samples=10_000, seed=0):
    """All checks; ``samples`` drives the scalar fuzzers, the rest scale down."""
    small = max(samples // 100, 5)
    return [
        analysis.fuzz_appendix1(samples, seed=seed),
        analysis.fuzz_appendix2(samples, seed=seed + 1),
        check_tuner(max(samples // 10, 10), seed=seed + 2),
        check_mixing(small, seed=seed + 3),
        check_fixed_points(small, seed=seed + 4),
    ]

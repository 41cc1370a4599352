"""
Experiment driver: build a seeded game + graph, run algorithm cells, and
write traces and summaries.

The seed is expanded with ``numpy.random.SeedSequence`` into two PCG64
streams, one for the game and one for the graph, so both are fully
determined by ``config.seed``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .algorithms import (
    AdmParams, DivergenceError, RunTrace, TuningError, fixed_parameters, run, tune_parameters,
)
from .analysis import RateFitError, fit_rate, verify_bound
from .config import ExperimentConfig
from .game import (
    ActionInterval, QuadraticGameConfig, generate_quadratic_game, quadratic_game,
    reference_equilibrium,
)
from .graphs import generate_named, generate_tree, lazy_laplacian_weights, metropolis_weights

OUTPUT_ENV = "ADMNASH_OUTPUT_DIR"
SUMMARY_NOTE = "# comparison set: ADM, DDP (GRANE not implemented)"
SUMMARY_FIELDS = ("algorithm", "alpha", "lambda", "iterations_to_tol", "fitted_rho",
                  "epsilon", "bound_holds", "status")
NOT_REACHED = "not reached"


@dataclass
class Setup:
    config: ExperimentConfig
    spec: object
    game: object
    graph: object
    W: object
    cert: object
    tuned: AdmParams = None
    tune_error: str = ""

    @property
    def X0(self):
        n = self.game.n
        X0 = np.zeros((n, n))
        np.fill_diagonal(X0, self.game.project(np.zeros(n)))
        return X0


def build(config: ExperimentConfig) -> Setup:
    game_ss, graph_ss = np.random.SeedSequence(config.seed).spawn(2)
    gc = config.game
    intervals = None
    if gc.interval is not None:
        intervals = [ActionInterval(*gc.interval)] * config.n
    spec = generate_quadratic_game(
        config.n, np.random.default_rng(game_ss),
        QuadraticGameConfig(delta=gc.delta, c_range=tuple(gc.c_range), b_range=tuple(gc.b_range)),
        intervals=intervals, seed=config.seed,
    )
    if config.graph.kind == "tree":
        graph = generate_tree(config.n, np.random.default_rng(graph_ss))
    else:
        graph = generate_named(config.graph.kind, config.n)
    W = metropolis_weights(graph) if config.graph.weights == "metropolis" else lazy_laplacian_weights(graph)
    game = quadratic_game(spec)
    cert = reference_equilibrium(spec, tol=1e-12)
    setup = Setup(config, spec, game, graph, W, cert)
    try:
        setup.tuned = tune_parameters(game.mu, game.L, game.n, W.sigma, W.norm_i_minus_w)
    except TuningError as exc:
        setup.tune_error = str(exc)
    return setup


@dataclass
class Cell:
    tag: str
    algorithm: str
    params: AdmParams
    theorem: bool


def cells_for(setup: Setup, alg) -> list:
    """Expand one algorithm entry into (tag, params) cells."""
    game, W = setup.game, setup.W
    step = alg.step
    if step.source == "theorem":
        if setup.tuned is None:
            raise TuningError(setup.tune_error)
        p = setup.tuned
        if step.safety != 1.0:
            p = tune_parameters(game.mu, game.L, game.n, W.sigma, W.norm_i_minus_w, step.safety)
        return [Cell(alg.tag, alg.name, p, True)]
    cells = []
    for a in step.alphas(game.L):
        # a grid point landing on the tuned step is run (and verified) as a theorem cell
        if (setup.tuned is not None and step.lam is None
                and math.isclose(a, setup.tuned.alpha, rel_tol=1e-12)):
            cells.append(Cell(alg.tag, alg.name, setup.tuned, True))
        else:
            p = fixed_parameters(a, lam=step.lam, mu=game.mu, L=game.L, n=game.n, q=W.q)
            cells.append(Cell(alg.tag, alg.name, p, False))
    return cells


@dataclass
class CellResult:
    cell: Cell
    trace: RunTrace
    row: dict


def iterations_to_tol(trace: RunTrace, stop_tol):
    if stop_tol is None or not math.isfinite(stop_tol):
        return NOT_REACHED
    hit = np.nonzero(trace.dist_sq <= stop_tol * stop_tol)[0]
    return int(trace.k[hit[0]]) if hit.size else NOT_REACHED


def run_cell(setup: Setup, cell: Cell) -> CellResult:
    cfg = setup.config
    status = "ok"
    try:
        trace = run(setup.game, setup.W, cell.algorithm, cell.params, setup.X0,
                    cfg.k_max, cfg.stop_tol, setup.cert)
    except DivergenceError as exc:
        trace, status = exc.trace, "diverged"
    except TuningError as exc:
        trace, status = None, f"invalid parameters: {exc}"
    row = {
        "algorithm": cell.tag,
        "alpha": cell.params.alpha,
        "lambda": cell.params.lam if cell.algorithm == "adm" else 0.0,
        "iterations_to_tol": NOT_REACHED,
        "fitted_rho": "",
        "epsilon": "",
        "bound_holds": "",
        "status": status,
    }
    if trace is not None and len(trace):
        if status == "ok":
            row["iterations_to_tol"] = iterations_to_tol(trace, cfg.stop_tol)
        try:
            row["fitted_rho"] = fit_rate(trace).rho
        except RateFitError:
            pass
        if cell.algorithm == "adm" and cell.theorem:
            row["epsilon"] = cell.params.epsilon
            if status == "ok":
                rep = verify_bound(trace, cell.params, cell.params.L, setup.W.q, float(trace.dist_sq[0]))
                row["bound_holds"] = bool(rep.holds)
    if trace is not None:
        trace.meta.update({"label": cell.tag, "seed": cfg.seed, "theorem_step": cell.theorem,
                           "status": status})
    return CellResult(cell, trace, row)


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def summary_csv(rows) -> str:
    buf = io.StringIO()
    buf.write(SUMMARY_NOTE + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_FIELDS)
    for r in rows:
        w.writerow([_fmt(r[f]) for f in SUMMARY_FIELDS])
    return buf.getvalue()


def read_summary(path):
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def best_rows(rows):
    """Best alpha per algorithm tag: fewest iterations, ties to the smaller alpha."""
    best = {}
    for r in rows:
        it = r["iterations_to_tol"]
        if not isinstance(it, int):
            continue
        cur = best.get(r["algorithm"])
        if cur is None or (it, r["alpha"]) < (cur["iterations_to_tol"], cur["alpha"]):
            best[r["algorithm"]] = r
    return best


def resolve_output_dir(config: ExperimentConfig, override=None) -> Path:
    return Path(override or os.environ.get(OUTPUT_ENV) or config.output_dir)


def _write(path: Path, text):
    # newline="" keeps "\n" line ends on every platform
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _json(obj):
    def clean(v):
        if isinstance(v, float) and not math.isfinite(v):
            return None
        if isinstance(v, (np.floating, np.integer)):
            return clean(v.item())
        if isinstance(v, (list, tuple)):
            return [clean(x) for x in v]
        if isinstance(v, dict):
            return {k: clean(x) for k, x in v.items()}
        return v

    return json.dumps(clean(obj), indent=2) + "\n"


def _write_common(setup: Setup, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    _write(out / "config.json", setup.config.dumps())
    _write(out / "game.json", setup.spec.dumps() + "\n")
    _write(out / "graph.json", setup.graph.dumps() + "\n")
    _write(out / "certificate.json", _json({
        "x_star": setup.cert.x_star.tolist(),
        "residual": setup.cert.residual,
        "tolerance": setup.cert.tolerance,
    }))
    params = {"mu": setup.game.mu, "L": setup.game.L, "gamma": setup.game.gamma,
              "sigma": setup.W.sigma, "norm_i_minus_w": setup.W.norm_i_minus_w}
    if setup.tuned is not None:
        params["tuned"] = setup.tuned.to_dict()
    else:
        params["tune_error"] = setup.tune_error
    _write(out / "params.json", _json(params))


_worker_setups = {}


def _run_cell_in_worker(config_text, cell):
    # games hold closures, so workers rebuild the (deterministic) setup from the config
    setup = _worker_setups.get(config_text)
    if setup is None:
        setup = _worker_setups[config_text] = build(ExperimentConfig.loads(config_text))
    return run_cell(setup, cell)


def _run_cells(setup, cells, jobs):
    if jobs and jobs > 1 and len(cells) > 1:
        text = setup.config.dumps()
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_cell_in_worker, [text] * len(cells), cells))
    return [run_cell(setup, c) for c in cells]


def run_experiment(config: ExperimentConfig, output_dir=None, jobs=1):
    """
    Run every configured algorithm and write its artifacts.

    Writes ``<label>_trace.csv`` (plus a ``.meta.json`` sidecar) for each
    algorithm entry, using its best step when the entry is a grid, along
    with ``summary.csv``, ``certificate.json``, ``params.json``, and the
    game, graph and config.  Returns the summary rows.
    """
    setup = build(config)
    out = resolve_output_dir(config, output_dir)
    _write_common(setup, out)
    rows = []
    for alg in config.algorithms:
        try:
            cells = cells_for(setup, alg)
        except TuningError as exc:
            rows.append({"algorithm": alg.tag, "alpha": "", "lambda": "", "iterations_to_tol": NOT_REACHED,
                         "fitted_rho": "", "epsilon": "", "bound_holds": "", "status": f"tuning failed: {exc}"})
            continue
        results = _run_cells(setup, cells, jobs)
        chosen = results[0]
        if len(results) > 1:
            best = best_rows([r.row for r in results]).get(alg.tag)
            if best is not None:
                chosen = next(r for r in results if r.row is best)
        rows.extend(r.row for r in results)
        if chosen.trace is not None:
            _write(out / f"{alg.tag}_trace.csv", chosen.trace.to_csv())
            _write(out / f"{alg.tag}_trace.meta.json", _json(chosen.trace.meta))
    _write(out / "summary.csv", summary_csv(rows))
    return rows


def compare(config: ExperimentConfig, grid=None, output_dir=None, jobs=1):
    """
    Step-size sweep: every algorithm over ``grid`` (a StepConfig with
    source "grid"), or over each entry's own step source when ``grid`` is
    None.  Writes ``sweep.csv`` and ``best.json``; returns (rows, best).
    """
    setup = build(config)
    out = resolve_output_dir(config, output_dir)
    _write_common(setup, out)
    cells = []
    for alg in config.algorithms:
        if grid is not None:
            alg = type(alg)(alg.name, grid, alg.label)
        cells.extend(cells_for(setup, alg))
    results = _run_cells(setup, cells, jobs)
    rows = [r.row for r in results]
    best = best_rows(rows)
    _write(out / "sweep.csv", summary_csv(rows))
    _write(out / "best.json", _json({k: v for k, v in best.items()}))
    return rows, best

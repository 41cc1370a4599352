"""
Experiment configuration.

Configs are JSON documents::

    {
      "seed": 0,
      "n": 20,
      "graph": {"kind": "tree", "weights": "metropolis"},
      "game": {"family": "quadratic", "delta": 0.5,
               "c_range": [-1, 1], "b_range": [-1, 1], "interval": null},
      "algorithms": [
        {"name": "adm", "step": {"source": "theorem", "safety": 1.0}},
        {"name": "ddp", "step": {"source": "grid", "lo": 0.01, "hi": 2.0,
                                 "steps": 10, "relative": true}},
        {"name": "ddp", "label": "ddp_fixed", "step": {"source": "fixed", "alpha": 0.05}}
      ],
      "k_max": 5000,
      "stop_tol": 1e-6,
      "output_dir": "out"
    }

``interval`` is null (unconstrained) or ``[lo, hi]`` applied to every
player; null ends are infinite.  Step sizes with ``relative: true`` are
multiples of ``1 / L`` (the default for grids; fixed steps default to
absolute values).  ``lambda`` pins ADM's extrapolation weight for grid and
fixed steps.  ``stop_tol`` may be null to always run ``k_max``
iterations.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

GRAPH_KINDS = ("tree", "ring", "complete", "path")
WEIGHTS = ("metropolis", "lazy")
STEP_SOURCES = ("theorem", "grid", "fixed")


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists one message per bad field."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid config:\n  " + "\n  ".join(self.errors))


@dataclass
class GraphConfig:
    kind: str = "tree"
    weights: str = "metropolis"


@dataclass
class GameConfig:
    family: str = "quadratic"
    delta: float = 0.5
    c_range: tuple = (-1.0, 1.0)
    b_range: tuple = (-1.0, 1.0)
    interval: Optional[tuple] = None


@dataclass
class StepConfig:
    source: str = "theorem"
    safety: float = 1.0
    lo: float = 0.01
    hi: float = 2.0
    steps: int = 10
    relative: bool = True
    alpha: Optional[float] = None
    lam: Optional[float] = None

    def to_dict(self):
        if self.source == "theorem":
            return {"source": "theorem", "safety": self.safety}
        if self.source == "grid":
            d = {"source": "grid", "lo": self.lo, "hi": self.hi, "steps": self.steps,
                 "relative": self.relative}
        else:
            d = {"source": "fixed", "alpha": self.alpha, "relative": self.relative}
        if self.lam is not None:
            d["lambda"] = self.lam
        return d

    def alphas(self, L):
        """Step sizes this source expands to (theorem handled by the caller)."""
        scale = 1.0 / L if self.relative else 1.0
        if self.source == "grid":
            return [float(v) * scale for v in np.geomspace(self.lo, self.hi, self.steps)]
        if self.source == "fixed":
            return [float(self.alpha) * scale]
        raise ValueError("theorem step sizes come from the tuner")


@dataclass
class AlgorithmConfig:
    name: str = "adm"
    step: StepConfig = field(default_factory=StepConfig)
    label: Optional[str] = None

    @property
    def tag(self):
        return self.label or self.name

    def to_dict(self):
        d = {"name": self.name, "step": self.step.to_dict()}
        if self.label is not None:
            d["label"] = self.label
        return d


def default_algorithms():
    return [AlgorithmConfig("adm"), AlgorithmConfig("ddp")]


@dataclass
class ExperimentConfig:
    seed: int = 0
    n: int = 20
    graph: GraphConfig = field(default_factory=GraphConfig)
    game: GameConfig = field(default_factory=GameConfig)
    algorithms: list = field(default_factory=default_algorithms)
    k_max: int = 5000
    stop_tol: Optional[float] = 1e-6
    output_dir: str = "out"

    def to_dict(self):
        game = asdict(self.game)
        game["c_range"] = list(self.game.c_range)
        game["b_range"] = list(self.game.b_range)
        game["interval"] = None if self.game.interval is None else [
            None if math.isinf(v) else v for v in self.game.interval
        ]
        return {
            "seed": self.seed,
            "n": self.n,
            "graph": asdict(self.graph),
            "game": game,
            "algorithms": [a.to_dict() for a in self.algorithms],
            "k_max": self.k_max,
            "stop_tol": self.stop_tol,
            "output_dir": self.output_dir,
        }

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    @classmethod
    def from_dict(cls, d):
        return parse_config(d)

    @classmethod
    def loads(cls, text):
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"not valid JSON: {exc}"]) from None
        return parse_config(d)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.loads(fh.read())


def _num(d, key, errors, where, default, kind=float, check=None, msg=""):
    if key not in d:
        return default
    v = d[key]
    if v is None and default is None:
        return None
    ok = isinstance(v, (int, float)) and not isinstance(v, bool)
    if kind is int:
        ok = ok and float(v).is_integer()
    if ok:
        v = kind(v)
        if check is None or check(v):
            return v
    errors.append(f"{where}{key}: {msg or 'invalid value'} (got {v!r})")
    return default


def _pair(v):
    if not isinstance(v, (list, tuple)) or len(v) != 2:
        return None
    try:
        lo, hi = (-math.inf if v[0] is None else float(v[0]), math.inf if v[1] is None else float(v[1]))
    except (TypeError, ValueError):
        return None
    if math.isnan(lo) or math.isnan(hi) or lo > hi:
        return None
    return lo, hi


def parse_config(d) -> ExperimentConfig:
    """Validate a config mapping, collecting every field-level problem."""
    if not isinstance(d, dict):
        raise ConfigError(["config must be a JSON object"])
    errors = []
    known = {"seed", "n", "graph", "game", "algorithms", "k_max", "stop_tol", "output_dir"}
    errors += [f"{k}: unknown field" for k in d if k not in known]

    seed = _num(d, "seed", errors, "", 0, int, lambda v: 0 <= v < 2**64, "must be an integer in [0, 2^64)")
    n = _num(d, "n", errors, "", 20, int, lambda v: v >= 1, "must be a positive integer")
    k_max = _num(d, "k_max", errors, "", 5000, int, lambda v: v >= 1, "must be a positive integer")
    stop_tol = d.get("stop_tol", 1e-6)
    if stop_tol is not None:
        stop_tol = _num(d, "stop_tol", errors, "", 1e-6, float, lambda v: v >= 0, "must be >= 0 or null")
    output_dir = d.get("output_dir", "out")
    if not isinstance(output_dir, str) or not output_dir:
        errors.append("output_dir: must be a nonempty string")

    g = d.get("graph", {})
    graph = GraphConfig()
    if not isinstance(g, dict):
        errors.append("graph: must be an object")
    else:
        errors += [f"graph.{k}: unknown field" for k in g if k not in ("kind", "weights")]
        graph = GraphConfig(kind=g.get("kind", "tree"), weights=g.get("weights", "metropolis"))
        if graph.kind not in GRAPH_KINDS:
            errors.append(f"graph.kind: must be one of {GRAPH_KINDS} (got {graph.kind!r})")
        if graph.weights not in WEIGHTS:
            errors.append(f"graph.weights: must be one of {WEIGHTS} (got {graph.weights!r})")
        if graph.kind == "ring" and isinstance(n, int) and n < 3:
            errors.append(f"graph.kind: ring needs n >= 3 (n = {n})")

    gm = d.get("game", {})
    game = GameConfig()
    if not isinstance(gm, dict):
        errors.append("game: must be an object")
    else:
        allowed = ("family", "delta", "c_range", "b_range", "interval")
        errors += [f"game.{k}: unknown field" for k in gm if k not in allowed]
        family = gm.get("family", "quadratic")
        if family != "quadratic":
            errors.append(f"game.family: only 'quadratic' is supported (got {family!r})")
        delta = _num(gm, "delta", errors, "game.", 0.5, float, lambda v: v > 0 and math.isfinite(v), "must be > 0")
        ranges = {}
        for key in ("c_range", "b_range"):
            v = _pair(gm.get(key, (-1.0, 1.0)))
            if v is None or not all(map(math.isfinite, v)):
                errors.append(f"game.{key}: must be a finite [lo, hi] pair with lo <= hi")
                v = (-1.0, 1.0)
            ranges[key] = v
        interval = gm.get("interval")
        if interval is not None:
            interval = _pair(interval)
            if interval is None:
                errors.append("game.interval: must be null or [lo, hi] with lo <= hi")
        game = GameConfig(family, delta, ranges["c_range"], ranges["b_range"], interval)

    algorithms = []
    algs = d.get("algorithms", None)
    if algs is None:
        algorithms = default_algorithms()
    elif not isinstance(algs, list) or not algs:
        errors.append("algorithms: must be a nonempty list")
    else:
        for idx, a in enumerate(algs):
            where = f"algorithms[{idx}]."
            if not isinstance(a, dict):
                errors.append(f"algorithms[{idx}]: must be an object")
                continue
            errors += [f"{where}{k}: unknown field" for k in a if k not in ("name", "step", "label")]
            name = a.get("name")
            if name not in ("adm", "ddp"):
                errors.append(f"{where}name: must be 'adm' or 'ddp' (got {name!r})")
            label = a.get("label")
            if label is not None and (not isinstance(label, str) or not label.isidentifier()):
                errors.append(f"{where}label: must be an identifier-like string")
            s = a.get("step", {"source": "theorem"})
            step = StepConfig()
            if not isinstance(s, dict):
                errors.append(f"{where}step: must be an object")
            else:
                step = _parse_step(s, errors, where + "step.")
            algorithms.append(AlgorithmConfig(name, step, label))
        tags = [a.tag for a in algorithms]
        dup = sorted({t for t in tags if tags.count(t) > 1})
        if dup:
            errors.append(f"algorithms: duplicate labels {dup}; set 'label' to disambiguate")

    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(
        seed=seed, n=n, graph=graph, game=game, algorithms=algorithms,
        k_max=k_max, stop_tol=stop_tol, output_dir=output_dir,
    )


def _parse_step(s, errors, where):
    source = s.get("source", "theorem")
    allowed = {"theorem": ("source", "safety"),
               "grid": ("source", "lo", "hi", "steps", "relative", "lambda"),
               "fixed": ("source", "alpha", "relative", "lambda")}
    if source not in allowed:
        errors.append(f"{where}source: must be one of {STEP_SOURCES} (got {source!r})")
        return StepConfig()
    errors += [f"{where}{k}: unknown field for source {source!r}" for k in s if k not in allowed[source]]
    step = StepConfig(source=source)
    if source == "theorem":
        step.safety = _num(s, "safety", errors, where, 1.0, float, lambda v: 0 < v <= 1, "must lie in (0, 1]")
        return step
    relative = s.get("relative", source == "grid")
    if not isinstance(relative, bool):
        errors.append(f"{where}relative: must be true or false")
        relative = True
    step.relative = relative
    lam = s.get("lambda")
    if lam is not None:
        step.lam = _num(s, "lambda", errors, where, None, float, lambda v: v >= 0, "must be >= 0")
    if source == "grid":
        step.lo = _num(s, "lo", errors, where, 0.01, float, lambda v: v > 0, "must be > 0")
        step.hi = _num(s, "hi", errors, where, 2.0, float, lambda v: v > 0, "must be > 0")
        step.steps = _num(s, "steps", errors, where, 10, int, lambda v: v >= 1, "must be a positive integer")
        if step.lo > step.hi:
            errors.append(f"{where}lo: must not exceed hi")
    else:
        if "alpha" not in s:
            errors.append(f"{where}alpha: required for a fixed step")
        step.alpha = _num(s, "alpha", errors, where, None, float, lambda v: v > 0, "must be > 0")
    return step

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from admnash import analysis, cli
from admnash.algorithms import RunTrace, tune_parameters
from admnash.config import (
    AlgorithmConfig, ConfigError, ExperimentConfig, GameConfig, GraphConfig, StepConfig,
    parse_config,
)
from admnash.experiment import (
    NOT_REACHED, OUTPUT_ENV, SUMMARY_FIELDS, best_rows, build, read_summary, run_experiment,
)


def write_cfg(path, **fields):
    path.write_text(json.dumps(fields))
    return str(path)


# config -------------------------------------------------------------------------


def test_default_config_mirrors_experiment_setup():
    cfg = ExperimentConfig()
    assert cfg.n == 20 and cfg.graph.kind == "tree" and cfg.game.family == "quadratic"
    assert [a.name for a in cfg.algorithms] == ["adm", "ddp"]
    assert cfg.game.delta == 0.5 and cfg.game.c_range == (-1.0, 1.0)
    assert parse_config({}) == cfg


steps = st.one_of(
    st.builds(StepConfig, source=st.just("theorem"), safety=st.floats(0.01, 1)),
    st.builds(StepConfig, source=st.just("grid"), lo=st.floats(1e-3, 1), hi=st.floats(1, 3),
              steps=st.integers(1, 20), relative=st.booleans(),
              lam=st.one_of(st.none(), st.floats(0, 1))),
    st.builds(StepConfig, source=st.just("fixed"), alpha=st.floats(1e-4, 1), relative=st.booleans()),
)
configs = st.builds(
    ExperimentConfig,
    seed=st.integers(0, 2**64 - 1),
    n=st.integers(3, 50),
    graph=st.builds(GraphConfig, kind=st.sampled_from(["tree", "ring", "complete", "path"]),
                    weights=st.sampled_from(["metropolis", "lazy"])),
    game=st.builds(GameConfig, delta=st.floats(0.01, 5),
                   c_range=st.tuples(st.floats(-2, 0), st.floats(0, 2)),
                   b_range=st.tuples(st.floats(-2, 0), st.floats(0, 2)),
                   interval=st.one_of(st.none(), st.tuples(st.floats(-5, 0), st.floats(0, 5)),
                                      st.just((-math.inf, 1.0)))),
    algorithms=st.lists(st.tuples(st.sampled_from(["adm", "ddp"]), steps), min_size=1, max_size=4).map(
        lambda xs: [AlgorithmConfig(name, step, f"{name}_{i}") for i, (name, step) in enumerate(xs)]),
    k_max=st.integers(1, 10**6),
    stop_tol=st.one_of(st.none(), st.floats(0, 1)),
    output_dir=st.text("abc/_-", min_size=1, max_size=10),
)


@settings(max_examples=200)
@given(configs)
def test_config_roundtrip(cfg):
    assert ExperimentConfig.loads(cfg.dumps()) == cfg


def test_config_collects_field_errors():
    with pytest.raises(ConfigError) as info:
        parse_config({"n": 0, "seed": -1, "graph": {"kind": "star"}, "game": {"delta": -1},
                      "algorithms": [{"name": "grane"}], "bogus": 1})
    text = "\n".join(info.value.errors)
    for field in ("n:", "seed:", "graph.kind", "game.delta", "algorithms[0].name", "bogus"):
        assert field in text
    with pytest.raises(ConfigError):
        ExperimentConfig.loads("{not json")
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config({"algorithms": [{"name": "adm"}, {"name": "adm"}]})


def test_step_alphas():
    assert StepConfig(source="fixed", alpha=0.2, relative=True).alphas(4) == [0.05]
    grid = StepConfig(source="grid", lo=0.01, hi=1, steps=3).alphas(2)
    np.testing.assert_allclose(grid, [0.005, 0.05, 0.5])


# experiment ----------------------------------------------------------------------


def test_seed_determines_game_and_graph():
    a, b = build(ExperimentConfig(seed=5, n=7)), build(ExperimentConfig(seed=5, n=7))
    assert a.spec == b.spec and a.graph == b.graph
    c = build(ExperimentConfig(seed=6, n=7))
    assert c.spec != a.spec


def test_run_writes_artifacts(tmp_path):
    cfg = ExperimentConfig(seed=1, n=4, k_max=300)
    rows = run_experiment(cfg, output_dir=tmp_path)
    names = {p.name for p in tmp_path.iterdir()}
    assert {"adm_trace.csv", "ddp_trace.csv", "summary.csv", "certificate.json", "params.json",
            "config.json", "game.json", "graph.json"} <= names
    for tag in ("adm", "ddp"):
        text = (tmp_path / f"{tag}_trace.csv").read_text()
        assert text.splitlines()[0] == "k,dist_sq,residual,perp,bound"
    summary = read_summary(tmp_path / "summary.csv")
    assert tuple(summary[0]) == SUMMARY_FIELDS
    assert (tmp_path / "summary.csv").read_text().startswith("# ")
    assert [r["algorithm"] for r in rows] == ["adm", "ddp"]
    params = json.loads((tmp_path / "params.json").read_text())
    assert params["tuned"]["alpha"] == rows[0]["alpha"]
    cert = json.loads((tmp_path / "certificate.json").read_text())
    assert len(cert["x_star"]) == 4


def test_every_trace_bound_column_verifies(tmp_path):
    cfg = ExperimentConfig(seed=2, n=5, k_max=1500, stop_tol=None)
    run_experiment(cfg, output_dir=tmp_path)
    setup = build(cfg)
    tr = RunTrace.from_csv((tmp_path / "adm_trace.csv").read_text())
    assert tr.has_bound and len(tr) == 1500
    p = setup.tuned
    assert analysis.verify_bound(tr, p, p.L, setup.W.q, tr.dist_sq[0]).holds
    assert RunTrace.from_csv((tmp_path / "ddp_trace.csv").read_text()).bound is None


def test_stop_tol_null_runs_k_max(tmp_path):
    cfg = ExperimentConfig(seed=0, n=3, k_max=77, stop_tol=None)
    run_experiment(cfg, output_dir=tmp_path)
    for tag in ("adm", "ddp"):
        assert len(RunTrace.from_csv((tmp_path / f"{tag}_trace.csv").read_text())) == 77


def test_single_player_run_matches_scalar_recursion(tmp_path):
    cfg = ExperimentConfig(seed=11, n=1, k_max=200, stop_tol=None)
    run_experiment(cfg, output_dir=tmp_path)
    setup = build(cfg)
    a, b = setup.spec.a[0], setup.spec.b[0]
    p = setup.tuned
    x_star = -b / a
    xs = [0.0, 0.0]
    for _ in range(199):
        xk, xp = xs[-1], xs[-2]
        xs.append(xk - p.alpha * (a * xk + b + p.lam * a * (xk - xp)))
    want = (np.array(xs[1:]) - x_star) ** 2
    tr = RunTrace.from_csv((tmp_path / "adm_trace.csv").read_text())
    np.testing.assert_allclose(tr.dist_sq, want, rtol=1e-12, atol=1e-28)


def test_divergence_is_a_row_not_a_crash(tmp_path):
    cfg = parse_config({"seed": 0, "n": 4, "k_max": 2000, "algorithms": [
        {"name": "ddp", "label": "blowup", "step": {"source": "fixed", "alpha": 40, "relative": True}},
        {"name": "adm"},
    ]})
    rows = run_experiment(cfg, output_dir=tmp_path)
    assert rows[0]["status"] == "diverged" and rows[0]["iterations_to_tol"] == NOT_REACHED
    assert rows[1]["status"] == "ok"


def test_best_rows_tie_breaks_to_smaller_alpha():
    rows = [
        {"algorithm": "adm", "alpha": 0.2, "iterations_to_tol": 10},
        {"algorithm": "adm", "alpha": 0.1, "iterations_to_tol": 10},
        {"algorithm": "adm", "alpha": 0.3, "iterations_to_tol": NOT_REACHED},
        {"algorithm": "ddp", "alpha": 0.3, "iterations_to_tol": 12},
    ]
    best = best_rows(rows)
    assert best["adm"]["alpha"] == 0.1 and best["ddp"]["alpha"] == 0.3


# CLI ----------------------------------------------------------------------------


def test_cli_run_is_byte_deterministic(tmp_path):
    cfg = write_cfg(tmp_path / "cfg.json", seed=3, n=6, k_max=400)
    assert cli.main(["run", cfg, "--output-dir", str(tmp_path / "a")]) == 0
    assert cli.main(["run", cfg, "--output-dir", str(tmp_path / "b")]) == 0
    for name in ("adm_trace.csv", "ddp_trace.csv", "summary.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_cli_seed_flag_and_env_override(tmp_path, monkeypatch):
    cfg = write_cfg(tmp_path / "cfg.json", seed=3, n=4, k_max=50, output_dir=str(tmp_path / "cfgdir"))
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "envdir"))
    assert cli.main(["run", cfg, "--seed", "9"]) == 0
    assert not (tmp_path / "cfgdir").exists()
    written = json.loads((tmp_path / "envdir" / "config.json").read_text())
    assert written["seed"] == 9
    # the flag beats the environment
    assert cli.main(["run", cfg, "--output-dir", str(tmp_path / "flagdir")]) == 0
    assert (tmp_path / "flagdir" / "summary.csv").exists()


def test_cli_invalid_config(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "bad.json", n=-2, graph={"kind": "star"})
    assert cli.main(["run", cfg]) == 2
    err = capsys.readouterr().err
    assert "n:" in err and "graph.kind" in err
    assert cli.main(["run", str(tmp_path / "missing.json")]) == 2


def test_cli_tune_example(capsys):
    assert cli.main(["tune", "--mu", "2", "--L", "2", "--n", "2", "--sigma", "0", "--q", "1"]) == 0
    out = dict(line.split("=") for line in capsys.readouterr().out.strip().splitlines())
    vals = {k.strip(): float(v) for k, v in out.items()}
    assert vals["alpha"] == pytest.approx(0.005, rel=1e-14)
    assert vals["epsilon"] == pytest.approx(4.7995e-3, rel=1e-4)
    assert set(vals) == {"g1", "g2", "g3", "g4", "alpha", "eta", "epsilon", "lambda",
                         "a1", "a2", "b1", "b2", "c"}
    p = tune_parameters(2, 2, 2, 0, 1)
    assert vals["lambda"] == pytest.approx(p.lam, rel=1e-14)


def test_cli_tune_json(capsys):
    assert cli.main(["tune", "--mu", "1", "--L", "3", "--n", "4", "--sigma", "0.5", "--q", "1.5",
                     "--json"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["q"] == pytest.approx(2.25)
    assert d["alpha"] == pytest.approx(min(d["g1"], d["g2"], d["g3"], d["g4"]))


def test_cli_tune_warns_on_small_L(capsys):
    assert cli.main(["tune", "--mu", "1", "--L", "0.5", "--n", "2", "--sigma", "0.5", "--q", "1"]) == 0
    captured = capsys.readouterr()
    assert "warning" in captured.err and "alpha" in captured.out


@pytest.mark.parametrize("argv, code", [
    (["--sigma", "1"], 2),
    (["--sigma", "-0.1"], 2),
    (["--sigma", "0.5", "--q", "3"], 1),
])
def test_cli_tune_errors(argv, code, capsys):
    base = {"--mu": "1", "--L": "1", "--n": "2", "--sigma": "0.5", "--q": "1"}
    it = iter(argv)
    base.update(dict(zip(it, it)))
    args = ["tune"] + [x for kv in base.items() for x in kv]
    assert cli.main(args) == code
    assert "error" in capsys.readouterr().err


def test_cli_check_passes(capsys):
    assert cli.main(["check", "--samples", "1e3"]) == 0
    out = capsys.readouterr().out
    assert "5/5 checks passed" in out


def test_cli_check_injected_fault(monkeypatch, capsys):
    monkeypatch.setattr(analysis, "appendix1_margin", lambda *a: -1e-3)
    assert cli.main(["check", "--samples", "200", "--max-dump", "2"]) == 1
    out = capsys.readouterr().out
    assert "FAIL  appendix1" in out
    dumps = [ln for ln in out.splitlines() if ln.strip().startswith("counterexample:")]
    assert len(dumps) == 2
    cx = json.loads(dumps[0].split("counterexample:", 1)[1])
    assert cx["margin"] == -1e-3 and {"mu", "L", "n", "sigma", "q", "alpha"} <= set(cx)


def test_cli_compare_single_point_grid(tmp_path):
    cfg = write_cfg(tmp_path / "cfg.json", seed=0, n=4, k_max=300)
    out = tmp_path / "cmp"
    assert cli.main(["compare", cfg, "--grid", "0.1:0.1:1", "--output-dir", str(out)]) == 0
    rows = read_summary(out / "sweep.csv")
    assert len(rows) == 2
    assert {r["algorithm"] for r in rows} == {"adm", "ddp"}
    assert json.loads((out / "best.json").read_text()).keys() <= {"adm", "ddp"}


def test_cli_compare_grid_containing_theorem_step(tmp_path):
    cfg_dict = {"seed": 0, "n": 4, "k_max": 400}
    cfg = write_cfg(tmp_path / "cfg.json", **cfg_dict)
    alpha = build(parse_config(cfg_dict)).tuned.alpha
    out = tmp_path / "cmp"
    grid = f"{alpha!r}:{alpha * 10!r}:3:abs"
    assert cli.main(["compare", cfg, "--grid", grid, "--output-dir", str(out)]) == 0
    rows = read_summary(out / "sweep.csv")
    adm = [r for r in rows if r["algorithm"] == "adm"]
    assert len(adm) == 3
    assert adm[0]["bound_holds"] == "true" and float(adm[0]["alpha"]) == alpha
    assert all(r["bound_holds"] == "" for r in adm[1:])


def test_cli_rejects_bad_grid(tmp_path):
    cfg = write_cfg(tmp_path / "cfg.json", n=3)
    with pytest.raises(SystemExit):
        cli.main(["compare", cfg, "--grid", "2:1:3"])
    with pytest.raises(SystemExit):
        cli.main(["compare", cfg, "--grid", "0.1:1"])


def test_parallel_and_serial_runs_agree(tmp_path):
    cfg = write_cfg(tmp_path / "cfg.json", seed=4, n=5, k_max=200)
    assert cli.main(["compare", cfg, "--grid", "0.1:1:3", "--output-dir", str(tmp_path / "s")]) == 0
    assert cli.main(["compare", cfg, "--grid", "0.1:1:3", "--output-dir", str(tmp_path / "p"),
                     "--jobs", "2"]) == 0
    assert (tmp_path / "s" / "sweep.csv").read_bytes() == (tmp_path / "p" / "sweep.csv").read_bytes()

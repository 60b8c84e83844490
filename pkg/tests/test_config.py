import math

import pytest
from hypothesis import given, strategies as st

from astromf.config import (
    ConfigError, SolverConfig, build_spec, lambda_at, load_config, parse_override, schema_help,
)


def test_lambda_examples():
    cfg = SolverConfig()
    assert lambda_at(cfg, 0) == pytest.approx(2.0)
    assert lambda_at(cfg, math.exp(5) - 2) == pytest.approx(10.0)


@given(st.integers(0, 10**6))
def test_lambda_nondecreasing(k):
    cfg = SolverConfig(c_lambda=3.0, lambda_min=1.5)
    assert cfg.lambda_at(k + 1) >= cfg.lambda_at(k)


@pytest.mark.parametrize("kw", [dict(eta=1.0), dict(gamma1=1.0), dict(gamma2=1.0), dict(kappa=0),
                                dict(alpha0=[1.0, -1.0]), dict(delta0=0.0), dict(initial_reps=1)])
def test_invalid_solver_values(kw):
    with pytest.raises(ConfigError):
        SolverConfig(**kw)


def test_defaults_resolve():
    spec = build_spec(None)
    assert spec.problem["name"] == "rosenbrock_mf"
    assert spec.experiment["grid"] == 101
    assert spec.solver == SolverConfig()


def test_overrides_are_typed():
    spec = build_spec({}, [parse_override("solver.kappa=10"), parse_override("problem.theta=[25, 50]"),
                           parse_override("solver.crn_across_points=true")])
    assert spec.solver.kappa == 10
    assert spec.solver.crn_across_points is True
    assert spec.problem["theta"] == [25, 50]


@pytest.mark.parametrize("doc", [
    {"solver": {"kapa": 1}},
    {"bogus": {}},
    {"experiment": {"solvers": ["simplex"]}},
    {"experiment": {"budget": -1}},
    {"problem": {"name": "nope"}},
    {"solver": {"kappa": "big"}},
    {"experiment": {"plots": 3}},
])
def test_bad_documents(doc):
    with pytest.raises(ConfigError):
        build_spec(doc)


def test_override_syntax():
    with pytest.raises(ConfigError):
        parse_override("solver.kappa")
    with pytest.raises(ConfigError):
        build_spec({}, [("kappa", 1)])


def test_missing_file_names_path(tmp_path):
    with pytest.raises(ConfigError, match="nothere.yaml"):
        load_config(tmp_path / "nothere.yaml")


def test_load_yaml(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("problem:\n  dimension: 3\nexperiment:\n  budget: 50\n")
    spec = load_config(path, [("experiment.seed", 4)])
    assert spec.problem["dimension"] == 3 and spec.experiment["budget"] == 50 and spec.experiment["seed"] == 4


def test_schema_help_lists_every_key():
    text = schema_help()
    for key in ("solver.kappa", "experiment.jobs", "problem.theta", "solver.alpha_th"):
        assert key in text

import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sdcaf.env import ArmSpec, Instance
from sdcaf.errors import ConfigurationError, ResourceError
from sdcaf.harness import (
    TRACE_HEADER,
    ExperimentConfig,
    compute_pseudo_regret,
    final_pseudo_regret,
    fit_exponent,
    run_experiment,
    simulate,
    sublinearity_probe,
    thinned_indices,
)


def test_pseudo_regret_examples():
    np.testing.assert_array_equal(compute_pseudo_regret([0] * 5, [0.0, 0.4]), np.zeros(5))
    alt = compute_pseudo_regret([0, 1] * 5, [0.0, 0.5])
    assert alt[-1] == 2.5
    np.testing.assert_array_equal(compute_pseudo_regret([2], [0.0, 0.1, 0.3]), [0.3])


@given(arms=st.lists(st.integers(0, 3), min_size=1, max_size=300),
       means=st.lists(st.floats(0, 1), min_size=4, max_size=4))
@settings(max_examples=100)
def test_pseudo_regret_properties(arms, means):
    gaps = max(means) - np.array(means)
    cum = compute_pseudo_regret(arms, gaps)
    assert np.all(np.diff(cum) >= 0)
    steps = np.arange(1, len(arms) + 1)
    assert np.all(cum <= steps * gaps.max() + 1e-12)
    counts = np.bincount(arms, minlength=4)
    assert cum[-1] == final_pseudo_regret(counts, gaps)


def test_thinned_indices():
    assert thinned_indices(10, 3).tolist() == [0, 3, 6, 9]
    assert thinned_indices(11, 3).tolist() == [0, 3, 6, 9, 10]
    assert thinned_indices(5, 1).tolist() == [0, 1, 2, 3, 4]


def _config(tmp_path, **kw):
    raw = dict(arms=[0.9, 0.5, {"family": "beta", "alpha": 2, "beta": 3}], delay=4, horizon=3000,
               spread={"name": "dirichlet", "alpha": 0.5}, algo=["alg1", "alg2", "uniform-random"],
               replications=2, seed=5, out_dir=str(tmp_path), stride=7)
    raw.update(kw)
    return ExperimentConfig.from_dict(raw)


def test_run_experiment_outputs(tmp_path):
    summary = run_experiment(_config(tmp_path))
    assert summary["passed"]
    for name in ("alg1", "alg2", "uniform-random"):
        path = tmp_path / f"trace_{name}.csv"
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert ",".join(rows[0]) == TRACE_HEADER
        body = np.array(rows[1:], dtype=float)
        assert body.shape == (2 * 430, 6)
        assert body[429, 0] == 2999 and body[-1, 1] == 1
        regret = body[:430, 5]
        assert np.all(np.diff(regret) >= 0)
    on_disk = json.loads((tmp_path / "summary.json").read_text())
    alg1 = on_disk["policies"]["alg1"]
    # ceil(2 * sqrt(3000 / log 3000)) = ceil(38.71)
    assert alg1["resolved_params"]["k"] == 39
    assert alg1["verification"]["lemma"]["violations"] == 0
    assert "n_m_prefix" in on_disk["policies"]["alg2"]["resolved_params"]
    assert "verification" not in on_disk["policies"]["uniform-random"]
    assert on_disk["policies"]["alg2"]["resolved_params"]["delta_tilde_init"] == 1.0


def test_summary_counts_match_trace(tmp_path):
    run_experiment(_config(tmp_path, stride=1, algo="alg1"))
    summary = json.loads((tmp_path / "summary.json").read_text())
    body = np.loadtxt(tmp_path / "trace_alg1.csv", delimiter=",", skiprows=1)
    for rep in range(2):
        arms = body[body[:, 1] == rep, 2].astype(int)
        assert np.bincount(arms, minlength=3).tolist() == summary["policies"]["alg1"]["pull_counts"]["per_rep"][rep]
        gaps = np.array(summary["instance"]["gaps"])
        final = summary["policies"]["alg1"]["final_pseudo_regret"]["per_rep"][rep]
        assert final == pytest.approx(compute_pseudo_regret(arms, gaps)[-1], abs=1e-9)


def test_same_seed_same_bytes(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run_experiment(_config(a, out_dir=str(a)))
    run_experiment(_config(b, out_dir=str(b)))
    for name in ("trace_alg1.csv", "trace_alg2.csv", "trace_uniform-random.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    sa = json.loads((a / "summary.json").read_text())
    sb = json.loads((b / "summary.json").read_text())
    sa["config"].pop("out_dir"), sb["config"].pop("out_dir")
    assert sa == sb


def test_workers_do_not_change_results(tmp_path):
    a = run_experiment(_config(None, out_dir=None, replications=3))
    b = run_experiment(_config(None, out_dir=None, replications=3, workers=2))
    for name in a["policies"]:
        assert a["policies"][name]["pull_counts"] == b["policies"][name]["pull_counts"]
        assert a["policies"][name]["final_pseudo_regret"] == b["policies"][name]["final_pseudo_regret"]


def test_replications_are_distinct():
    inst = Instance((0.6, 0.5), 2, 2000, "dirichlet")
    r0 = simulate(inst, "uniform-random", 0, 0)
    r1 = simulate(inst, "uniform-random", 0, 1)
    assert not np.array_equal(r0.trace[:, 2], r1.trace[:, 2])


def test_uniform_random_regret_near_half_horizon():
    cfg = ExperimentConfig(Instance((1.0, 0.0), 1, 10_000), algo=["uniform-random"], replications=50, seed=3)
    mean = run_experiment(cfg)["policies"]["uniform-random"]["final_pseudo_regret"]["mean"]
    assert abs(mean - 5000) <= 0.03 * 5000


def test_conservation_recorded():
    for name in ("alg1", "alg2", "uniform-random"):
        r = simulate(Instance((0.5, ArmSpec.beta(1, 2)), 9, 4000, "all-at-end"), name, 1, 0)
        assert r.conservation_error <= 1e-9 * 4000


@pytest.mark.parametrize("raw, field", [
    (dict(arms=[0.5], delay=1, horizon=10), "arms"),
    (dict(arms=[0.5, 0.4], delay=0, horizon=10), "delay"),
    (dict(arms=[0.5, 0.4], delay=1, horizon=10, algo="ucb2"), "algo"),
    (dict(arms=[0.5, 0.4], delay=1, horizon=10, replications=0), "replications"),
    (dict(arms=[0.5, 0.4], delay=1, horizon=10, stride=0), "stride"),
    (dict(arms=[0.5, 0.4], delay=1, horizon=10, spread="sideways"), "spread"),
    (dict(arms=[0.5, 0.4], delay=1, horizon=10, overrides={"alg3.k": 1}), "overrides"),
    (dict(arms=[0.5, 0.4], delay=1), "horizon"),
    (dict(arms=[0.5, 0.4], delay=1, horizon=10, colour="red"), "colour"),
])
def test_config_errors_name_the_field(raw, field):
    with pytest.raises(ConfigurationError) as info:
        ExperimentConfig.from_dict(raw)
    assert info.value.field == field


def test_config_roundtrip():
    cfg = ExperimentConfig.from_dict(dict(arms=[0.5, {"family": "uniform", "lo": 0.1, "hi": 0.3}], delay=2,
                                          horizon=50, spread="all-at-end", algo="alg1,alg2",
                                          overrides={"alg1.k": 3}))
    again = ExperimentConfig.from_dict(cfg.to_dict())
    assert again == cfg
    assert cfg.algo == ["alg1", "alg2"]


def test_resource_guard(tmp_path):
    cfg = ExperimentConfig(Instance((0.5, 0.4), 1000, 10**6), out_dir=str(tmp_path))
    with pytest.raises(ResourceError):
        run_experiment(cfg)


def test_pull_count_report_in_summary():
    cfg = ExperimentConfig(Instance((0.9, 0.4), 2, 3000), algo=["alg1"], replications=100)
    ver = run_experiment(cfg)["policies"]["alg1"]["verification"]
    assert ver["pull_count_bound"]["passed"] and ver["passed"]
    tuned = ExperimentConfig(Instance((0.9, 0.4), 2, 3000), algo=["alg1"], replications=100,
                             overrides={"alg1.k": 5})
    assert "pull_count_bound" not in run_experiment(tuned)["policies"]["alg1"]["verification"]


def test_fit_exponent_recovers_power_law():
    hs = [1e3, 1e4, 1e5]
    assert fit_exponent(hs, [3 * h ** 0.5 for h in hs]) == pytest.approx(0.5)


def test_probe_argument_checks():
    inst = Instance((0.8, 0.5), 2, 100)
    with pytest.raises(ConfigurationError):
        sublinearity_probe("alg1", inst, [100, 200])
    with pytest.raises(ConfigurationError):
        sublinearity_probe("alg1", inst, [100, 300, 200])


def test_probe_uniform_random_is_linear():
    inst = Instance((0.8, 0.5, 0.3), 4, 100, "dirichlet")
    rep = sublinearity_probe("uniform-random", inst, [2000, 6000, 20_000], replications=10, seed=1)
    assert abs(rep.exponent - 1.0) <= 0.02
    assert rep.passed

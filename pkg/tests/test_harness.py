import json

import pytest

from aggrlab.batteries import BATTERIES, run_battery, run_lemma_suite
from aggrlab.errors import ConfigError, UnknownBattery
from aggrlab.harness import LEARNERS, ExperimentConfig, run_curve
from aggrlab.metrics import expected_loss_exact
from aggrlab.aggregators import averaging
from aggrlab.model import model_to_dict, random_cond_indep
from aggrlab.rng import stream


def _config(**over):
    base = {
        "model": {"generator": "random_joint", "params": {"n": 2, "m": 2, "seed": 3}},
        "learner": {"name": "erm_empirical"},
        "schedule": [100, 1000, 10_000],
        "trials": 30,
        "seed": 0,
    }
    base.update(over)
    return ExperimentConfig.from_dict(base)


def test_config_validation():
    with pytest.raises(ConfigError):
        _config(schedule=[])
    with pytest.raises(ConfigError):
        _config(schedule=[100, 100])
    with pytest.raises(ConfigError):
        _config(trials=0)
    with pytest.raises(ConfigError):
        _config(learner={"name": "magic"})
    with pytest.raises(ConfigError):
        run_curve(_config(model={"nothing": 1}))


def test_geometric_schedule():
    cfg = _config(schedule={"start": 100, "stop": 10_000, "num": 5})
    assert cfg.schedule == (100, 316, 1000, 3162, 10_000)


def test_oracle_curve_is_zero():
    res = run_curve(_config(learner={"name": "bayes_optimal"}, trials=3))
    assert all(r.gap == 0.0 for r in res.rows)


def test_erm_curve_strictly_decreasing():
    res = run_curve(_config())
    med = res.medians()
    assert med[0] > med[1] > med[2]
    assert all(r.gap >= -1e-9 for r in res.rows)
    assert res.summary()[0]["ok"] == 30


def test_erm_theta_beats_averaging():
    model = random_cond_indep(3, 3, 2, stream(5, "t"))
    assert expected_loss_exact(model, averaging()).gap_direct >= 0.01
    cfg = _config(model={"inline": model_to_dict(model)}, learner={"name": "erm_theta"}, trials=10)
    theta_med = run_curve(cfg).medians()[-1]
    avg_med = run_curve(_config(model={"inline": model_to_dict(model)}, learner={"name": "averaging"}, trials=1)).medians()[-1]
    assert theta_med < avg_med


def test_cells_do_not_shift_when_schedule_grows():
    a = run_curve(_config(schedule=[100, 1000], trials=3))
    b = run_curve(_config(schedule=[100, 300, 1000], trials=3))
    pick = lambda res, T: [r.gap for r in res.rows if r.T == T]
    assert pick(a, 100) == pick(b, 100) and pick(a, 1000) == pick(b, 1000)


def test_failures_are_recorded():
    # the strong learner's sample budget is far above T, so every cell fails
    cfg = _config(
        model={"generator": "weak", "params": {"n": 4, "gamma": 0.5, "p": 0.5}},
        learner={"name": "strongly_informative", "params": {"gamma": 8, "eps": 0.1, "delta": 0.05}},
        schedule=[5, 10],
        trials=4,
    )
    res = run_curve(cfg)
    assert res.failures == 8
    lines = res.to_csv().splitlines()
    assert lines[0] == "T,trial,gap,loss"
    assert lines[1].endswith(",,")
    summary = json.loads(res.to_json())
    assert summary["failures"] == 8 and summary["schema_version"] == "1"


def test_partial_failure_keeps_other_cells():
    cfg = _config(
        model={"generator": "symmetric", "params": {"n": 3, "accuracy": 0.8, "p": 0.5}},
        learner={"name": "weakly_informative", "params": {"gamma": 0.5}},
        schedule=[0, 50],
        trials=3,
    )
    res = run_curve(cfg)
    assert [s["failed"] for s in res.summary()] == [3, 0]
    assert all(r.ok for r in res.rows if r.T == 50)


def test_monte_carlo_mode():
    cfg = _config(evaluation={"mode": "monte_carlo", "budget": 5000}, trials=2, schedule=[200])
    res = run_curve(cfg)
    assert all(r.ok and r.gap >= 0 for r in res.rows)


def test_curve_deterministic():
    assert run_curve(_config(trials=4)).to_csv() == run_curve(_config(trials=4)).to_csv()


def test_all_learners_registered():
    assert {"bayes_optimal", "erm_empirical", "empirical_bayes", "erm_theta", "multi_erm_theta", "averaging"} <= set(LEARNERS)


@pytest.mark.parametrize("name", sorted(BATTERIES))
def test_battery_passes(name):
    rep = run_battery(name, 7)
    assert rep.passed, [a for a in rep.assertions if not a.passed][:3]


def test_suite_contracts():
    rep = run_lemma_suite("difference_loss", 7)
    assert len(rep.batteries[0].assertions) == 100
    assert all(a.tolerance == 1e-9 for a in rep.batteries[0].assertions)
    assert len(run_lemma_suite("p_mu", 1).batteries[0].assertions) == 100
    assert len(run_lemma_suite("bordley_bruteforce", 1).batteries[0].assertions) == 50
    doc = json.loads(rep.to_json())
    assert doc["schema_version"] == "1" and doc["passed"]
    with pytest.raises(UnknownBattery):
        run_lemma_suite("nonsense", 0)


@pytest.mark.slow
def test_curve_monotone_across_models():
    for learner in ("erm_empirical", "erm_theta", "empirical_bayes"):
        good = 0
        for seed in range(20):
            gen = "random_cond_indep" if learner == "erm_theta" else "random_joint"
            params = {"n": 2, "m": 2, "seed": seed}
            cfg = _config(model={"generator": gen, "params": params}, learner={"name": learner}, trials=15)
            med = run_curve(cfg).medians()
            good += all(b <= a for a, b in zip(med, med[1:]))
        assert good >= 19, (learner, good)

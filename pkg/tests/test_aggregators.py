import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aggrlab.aggregators import (
    ConstantAggregator,
    TableAggregator,
    aggregator_from_json,
    averaging,
    bayes_optimal,
    bordley,
    constant,
    multi_bordley,
    true_optimal,
)
from aggrlab.errors import AllZeroLikelihood, ContradictoryReports, DimensionMismatch, UnseenProfile
from aggrlab.model import build_cond_indep, random_cond_indep, random_joint, to_joint
from aggrlab.rng import stream

import oracles


def _profile_array(key):
    return np.array(key, dtype=float)


def test_single_expert_bayes_is_identity():
    joint = random_joint(1, 5, 2, stream(2, "t"))
    sup = joint.support
    assert np.allclose(bayes_optimal(joint).apply(sup.reports), sup.reports[:, 0, 1], atol=1e-12)


def test_uninformative_bayes_is_prior():
    model = build_cond_indep([0.3, 0.7], [[[0.5, 0.5], [0.5, 0.5]]] * 2)
    f = bayes_optimal(model)
    assert len(f) == 1
    assert f.outputs[0] == pytest.approx([0.3, 0.7])


def test_bayes_matches_bruteforce():
    joint = random_joint(2, 2, 2, stream(3, "t"))
    table = {(tuple(map(int, s)), w): float(joint.prob[tuple(s) + (w,)]) for s in np.ndindex(2, 2) for w in range(2)}
    brute = oracles.posterior_by_profile(table, 2, 2)
    f = bayes_optimal(joint)
    for key, post in brute.items():
        assert f.distribution(_profile_array(key)) == pytest.approx(post, abs=1e-12)


def test_bayes_unseen_profile():
    f = bayes_optimal(random_joint(2, 2, 2, stream(3, "t")))
    with pytest.raises(UnseenProfile):
        f.apply([0.123, 0.456])


def test_bordley_at_prior():
    p = 0.3
    f = bordley(p / (1 - p), 4)
    assert f.apply([p] * 4) == pytest.approx(p, abs=1e-14)


def test_bordley_hand_value():
    assert bordley(1.0, 2).apply([2 / 3, 2 / 3]) == pytest.approx(0.8, abs=1e-14)
    brute = oracles.posterior_by_profile(oracles.ci_joint([0.5, 0.5], [[[0.4, 0.6], [0.8, 0.2]]] * 2), 2, 2)
    key = ((0.333333333333, 0.666666666667),) * 2
    assert brute[key][1] == pytest.approx(0.8, abs=1e-14)


def test_bordley_zero_report():
    assert bordley(2.0, 3).apply([0.0, 0.7, 0.9]) == 0.0
    assert bordley(2.0, 3).apply([1.0, 0.7, 0.9]) == 1.0
    with pytest.raises(ContradictoryReports):
        bordley(2.0, 2).apply([0.0, 1.0])


def test_bordley_extreme_odds_finite():
    out = bordley(1e-4, 50).apply([0.999999] * 50)
    assert 0.0 <= out <= 1.0 and np.isfinite(out)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31))
def test_bordley_equals_bruteforce(seed):
    rng = stream(seed, "b")
    model = random_cond_indep(int(rng.integers(2, 5)), int(rng.integers(2, 5)), 2, rng)
    joint = oracles.ci_joint(model.prior.tolist(), [c.tolist() for c in model.cond])
    brute = oracles.posterior_by_profile(joint, model.n, 2)
    f = bordley(model.rho, model.n)
    for key, post in brute.items():
        assert f.apply(_profile_array(key)) == pytest.approx(post[1], abs=1e-10)


def test_multi_bordley_uniform_rows():
    theta = np.array([1.0, 2.0, 5.0])
    out = multi_bordley(theta).distribution(np.full((3, 3), 1 / 3))
    assert out == pytest.approx(theta / theta.sum(), abs=1e-14)


def test_multi_bordley_all_zero():
    R = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    with pytest.raises(AllZeroLikelihood):
        multi_bordley([1, 1, 1]).distribution(R)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31))
def test_multi_bordley_equals_bruteforce(seed):
    rng = stream(seed, "mb")
    model = random_cond_indep(int(rng.integers(2, 4)), int(rng.integers(2, 4)), 3, rng)
    theta = 1.0 / model.prior ** (model.n - 1)
    joint = oracles.ci_joint(model.prior.tolist(), [c.tolist() for c in model.cond])
    f = multi_bordley(theta)
    for key, post in oracles.posterior_by_profile(joint, model.n, 3).items():
        assert f.distribution(_profile_array(key)) == pytest.approx(post, abs=1e-10)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.floats(1e-3, 1e3))
def test_multi_bordley_projective(seed, c):
    rng = stream(seed, "proj")
    theta = rng.random(4) + 0.05
    R = rng.dirichlet(np.ones(4), size=(6, 3))
    assert np.allclose(multi_bordley(c * theta).distribution(R), multi_bordley(theta).distribution(R), atol=1e-12)


def test_averaging():
    assert averaging().apply([0.4, 0.4, 0.4]) == pytest.approx(0.4)
    assert averaging().apply([0.0, 1.0]) == 0.5


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_outputs_normalised(seed):
    rng = stream(seed, "norm")
    k = int(rng.integers(2, 5))
    model = random_cond_indep(2, 3, k, rng)
    R = to_joint(model).support.reports
    for f in (averaging(), true_optimal(model), bayes_optimal(model), multi_bordley(rng.random(k) + 0.1), constant(np.eye(k)[0])):
        assert np.allclose(f.distribution(R).sum(axis=1), 1.0, atol=1e-9)


def test_true_optimal_kinds():
    assert true_optimal(random_cond_indep(2, 2, 2, stream(1, "t"))).kind == "bordley_theta"
    assert true_optimal(random_cond_indep(2, 2, 3, stream(1, "t"))).kind == "multi_theta"
    assert true_optimal(random_joint(2, 2, 2, stream(1, "t"))).kind == "bayes_optimal"


def test_dimension_checks():
    with pytest.raises(DimensionMismatch):
        bordley(1.0, 3).apply([0.5, 0.5])


def test_serialisation_round_trip():
    model = random_cond_indep(2, 3, 3, stream(4, "t"))
    R = to_joint(model).support.reports
    for f in (bordley(1.5, 2), multi_bordley([1, 2, 3]), averaging(), constant([0.2, 0.3, 0.5]), bayes_optimal(model)):
        back = aggregator_from_json(f.to_json())
        if f.k in (None, 3):
            assert np.allclose(back.distribution(R), f.distribution(R), atol=1e-12)
        else:
            assert back.apply([0.3, 0.9]) == pytest.approx(f.apply([0.3, 0.9]), abs=1e-15)


def test_table_default_output():
    f = TableAggregator("table", 2, 1, np.array([[[0.5, 0.5]]]), np.array([[0.1, 0.9]]), default_output=[0.5, 0.5])
    assert f.apply([0.5]) == pytest.approx(0.9)
    assert f.apply([0.3]) == pytest.approx(0.5)
    assert isinstance(constant(0.2), ConstantAggregator)

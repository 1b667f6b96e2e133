import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aggrlab.aggregators import bayes_optimal, constant
from aggrlab.errors import EpsilonTooLarge, InvalidDistinguisher, OddSignalSpace, SignVectorMismatch
from aggrlab.hard_instances import (
    DZ_BOUND,
    DzFamily,
    aggregator_to_distribution,
    ci_pair_build,
    coordinate_marginals,
    distinguish_experiment,
    dz_base,
    dz_build,
    dz_report_tables,
    dz_table,
    dz_to_aggregation_instance,
)
from aggrlab.metrics import DiscreteDist, tv_distance
from aggrlab.model import expert_report
from aggrlab.rng import stream

import oracles

SHAPES = [(2, 2), (2, 3), (4, 2)]


def test_base_sums_to_one_and_ratio():
    for m, n in SHAPES:
        d = dz_base(m, n).probs
        assert d.sum() == pytest.approx(1.0, abs=1e-9)
        size = m**n
        assert d.max() / d.min() == pytest.approx((1 + 1 / size) ** (size - 1), rel=1e-12)
        assert d.max() / d.min() <= math.e
        W = DzFamily(m, n, 0.01).W
        assert size <= W <= math.e * size


def test_base_two_by_two_hand_values():
    # ratio 1 + 1/m^n = 5/4, weights (5/4)^1 .. (5/4)^4
    w = [1.25, 1.5625, 1.953125, 2.44140625]
    assert DzFamily(2, 2, 0.01).W == 7.20703125
    assert dz_base(2, 2).probs == pytest.approx(np.array(w) / 7.20703125, abs=1e-15)


def test_guards():
    with pytest.raises(OddSignalSpace):
        DzFamily(3, 2, 0.01)
    with pytest.raises(EpsilonTooLarge):
        DzFamily(2, 2, 1 / 40)
    with pytest.raises(SignVectorMismatch):
        dz_table(DzFamily(2, 3, 0.01), [1])
    with pytest.raises(EpsilonTooLarge):
        ci_pair_build(4, 2.0**-18)


@pytest.mark.parametrize("m,n", SHAPES)
def test_family_properties(m, n):
    fam = DzFamily(m, n, 0.02)
    rng = stream(m * 10 + n, "dz")
    ref = coordinate_marginals(fam.base_table())
    for _ in range(10):
        z = fam.random_sign(rng)
        table = dz_table(fam, z)
        assert table.sum() == pytest.approx(1.0, abs=1e-12)
        assert table.max() <= DZ_BOUND / m**n
        for a, b in zip(coordinate_marginals(table), ref):
            assert np.max(np.abs(a - b)) <= 1e-12
            assert np.all(np.diff(a) > 0)
        flip = tv_distance(dz_build(fam, z), dz_build(fam, -z))
        assert flip == pytest.approx(m**n * fam.c * fam.eps / fam.W, abs=1e-12)


@pytest.mark.parametrize("m,n", SHAPES)
def test_reports_do_not_depend_on_sign(m, n):
    fam = DzFamily(m, n, 0.01)
    base_marg = coordinate_marginals(fam.base_table())
    rng = stream(1, "rep")
    for _ in range(3):
        joint = dz_to_aggregation_instance(fam, fam.random_sign(rng))
        for i in range(n):
            for s in range(m):
                expect = base_marg[i][s] / (1 / m + base_marg[i][s])
                assert expert_report(joint, i, s)[1] == pytest.approx(expect, abs=1e-12)
            assert len(np.unique(joint.report_tables[i][:, 1])) == m
    for i, table in enumerate(dz_report_tables(fam)):
        assert np.allclose(table, joint.report_tables[i][:, 1], atol=1e-12)


def test_bayes_on_instance_matches_formula():
    fam = DzFamily(2, 3, 0.01)
    z = fam.random_sign(stream(2, "z"))
    joint = dz_to_aggregation_instance(fam, z)
    D = dz_table(fam, z)
    f = bayes_optimal(joint)
    sup = joint.support
    for t in range(len(sup.probs)):
        s = tuple(sup.signals[t])
        assert f.apply(sup.reports[t]) == pytest.approx(D[s] / (1 / fam.size + D[s]), abs=1e-12)


def test_tiny_eps_instance_near_half():
    fam = DzFamily(2, 2, 1e-9)
    joint = dz_to_aggregation_instance(fam, [1])
    out = bayes_optimal(joint).apply(joint.support.reports)
    assert np.all(np.abs(out - 0.5) < 0.15)


def test_inverse_of_optimal_is_exact():
    for m, n in SHAPES:
        fam = DzFamily(m, n, 0.01)
        z = fam.random_sign(stream(m + n, "inv"))
        rec = aggregator_to_distribution(bayes_optimal(dz_to_aggregation_instance(fam, z)), fam, dz_build(fam, z))
        assert rec.tv_to_reference <= 1e-12
        assert rec.normalized


def test_zero_aggregator_gives_zero_table():
    rec = aggregator_to_distribution(constant(0.0), DzFamily(2, 2, 0.01))
    assert rec.mass == 0.0 and not rec.normalized


def test_cipair_reports_and_priors():
    n, eps = 4, 1e-6
    pair = ci_pair_build(n, eps)
    for model in (pair.first, pair.second):
        assert expert_report(model, 0, 0)[1] == pytest.approx(0.5, abs=1e-12)
        assert expert_report(model, 0, 1)[1] == pytest.approx(0.0, abs=1e-12)
        assert 0.5 < model.rho ** (n - 1) <= 1
    p1, p2 = pair.priors
    assert abs(p1 - p2) == pytest.approx(64 * math.sqrt(eps) / n, abs=1e-15)


def test_cipair_hellinger_oracle():
    pair = ci_pair_build(4, 1e-6)
    # frozen from tests/oracles.cipair_hellinger(4, 1e-6)
    assert pair.hellinger_exact() == pytest.approx(0.017545854368234193, abs=1e-13)
    assert pair.hellinger_factorized() == pytest.approx(pair.hellinger_exact(), abs=1e-13)
    assert pair.hellinger_exact() <= pair.hellinger_chain_bound()


def test_cipair_hellinger_scaling():
    eps = [2.0**-24, 2.0**-22, 2.0**-20]
    values = [ci_pair_build(4, e).hellinger_exact() for e in eps]
    frozen = [0.000988298594727044, 0.003992171000651523, 0.016681039454647717]
    assert values == pytest.approx(frozen, abs=1e-14)
    assert values[0] < values[1] < values[2]
    ratios = [v / e for v, e in zip(values, eps)]
    assert max(ratios) / min(ratios) < 1.2


def test_distinguish_identical():
    d = DiscreteDist([0.2, 0.3, 0.5])
    rep = distinguish_experiment(d, d, 50, 2000, seed=3)
    assert abs(rep.empirical_error - 0.5) <= 3 * rep.stderr
    zero = distinguish_experiment(DiscreteDist([0.9, 0.1]), DiscreteDist([0.1, 0.9]), 0, 2000, seed=3)
    assert zero.floor_sqrtT == 0.5
    assert abs(zero.empirical_error - 0.5) <= 3 * zero.stderr


def test_distinguish_floor_cipair():
    pair = ci_pair_build(4, 1e-6)
    d1, d2 = pair.distributions()
    T = math.floor(0.01 / 1e-6)
    rep = distinguish_experiment(d1, d2, T, 2000, seed=5)
    assert rep.empirical_error >= rep.floor_sqrtT - 3 * rep.stderr


def test_distinguisher_registry():
    d = DiscreteDist([0.5, 0.5])
    with pytest.raises(InvalidDistinguisher):
        distinguish_experiment(d, d, 1, 1, distinguisher="oracle")


def test_distinguish_deterministic_and_schema():
    d1, d2 = DiscreteDist([0.4, 0.6]), DiscreteDist([0.5, 0.5])
    a = distinguish_experiment(d1, d2, 20, 300, seed=9)
    b = distinguish_experiment(d1, d2, 20, 300, seed=9)
    assert a.summary_json() == b.summary_json()
    assert a.rows_csv().splitlines()[0] == "trial,truth,guess,T"
    assert {"floor_sqrtT", "floor_exp", "hellinger_sq"} <= set(a.summary())


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31), st.integers(5, 60))
def test_likelihood_ratio_beats_tv_nearest(seed, T):
    rng = stream(seed, "lr")
    d1, d2 = DiscreteDist(rng.dirichlet(np.ones(3))), DiscreteDist(rng.dirichlet(np.ones(3)))
    lr = distinguish_experiment(d1, d2, T, 1000, "likelihood_ratio", seed)
    tv = distinguish_experiment(d1, d2, T, 1000, "tv_nearest", seed)
    assert lr.empirical_error <= tv.empirical_error + 2 * max(tv.stderr, 1 / 1000)


def test_two_signal_inversion_matches_oracle():
    from aggrlab.hard_instances import two_signal_conditionals

    assert two_signal_conditionals(0.47, 0.5, 0.0) == pytest.approx(np.array(oracles.two_signal_expert(0.47, 0.5, 0.0)))

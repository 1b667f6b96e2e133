import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aggrlab.errors import DegeneratePrior, NotADistribution, SupportTooLarge
from aggrlab.model import (
    SampleSet,
    build_cond_indep,
    build_joint,
    expert_report,
    load_model,
    model_from_dict,
    model_to_dict,
    random_cond_indep,
    random_joint,
    report_support,
    sample,
    samples_from_csv,
    samples_to_csv,
    save_model,
    to_joint,
    weak_binary_model,
    xor_joint,
)
from aggrlab.rng import stream

import oracles

COND_08_04 = [[0.4, 0.6], [0.8, 0.2]]  # row j = (P(a|j), P(b|j))


def test_uniform_joint():
    joint = build_joint(2, (2, 2), 2, np.full(8, 1 / 8))
    assert joint.p == 0.5


def test_negative_entry_rejected():
    table = np.full(8, 1 / 8)
    table[0], table[1] = -0.1, 0.1 / 8 + 1 / 8 + 0.1
    with pytest.raises(NotADistribution):
        build_joint(2, (2, 2), 2, table)


def test_unnormalised_table_rejected():
    with pytest.raises(NotADistribution):
        build_joint(2, (2, 2), 2, np.full(8, 0.9 / 8))


def test_uninformative_cond_indep_reports_half():
    model = build_cond_indep([0.5, 0.5], [[[0.5, 0.5], [0.5, 0.5]]] * 3)
    for i in range(3):
        for s in range(2):
            assert np.allclose(expert_report(model, i, s), [0.5, 0.5])


def test_degenerate_prior():
    model = build_cond_indep([1.0, 0.0], [COND_08_04])
    with pytest.raises(DegeneratePrior):
        model.rho
    assert np.allclose(expert_report(model, 0, 0), [1.0, 0.0])


def test_to_joint_hand_product():
    model = build_cond_indep([0.5, 0.5], [COND_08_04] * 2)
    assert to_joint(model).prob[0, 0, 1] == pytest.approx(0.32, abs=1e-15)
    brute = oracles.ci_joint([0.5, 0.5], [COND_08_04] * 2)
    assert np.allclose([brute[(s, w)] for s, w in sorted(brute)], to_joint(model).prob.ravel())


def test_to_joint_single_expert():
    model = random_cond_indep(1, 4, 3, stream(1, "t"))
    assert np.allclose(to_joint(model).prob, (model.prior[:, None] * model.cond[0]).T)


def test_to_joint_cap():
    model = build_cond_indep([0.5, 0.5], [np.full((2, 4), 0.25)] * 30)
    with pytest.raises(SupportTooLarge):
        to_joint(model)


def test_report_by_bayes_rule():
    model = build_cond_indep([0.5, 0.5], [COND_08_04])
    assert expert_report(model, 0, 0)[1] == pytest.approx(2 / 3, abs=1e-15)


def test_identical_conditionals_report_prior():
    model = build_cond_indep([0.3, 0.7], [[[0.2, 0.8], [0.2, 0.8]]] * 2)
    assert np.allclose(expert_report(model, 1, 1), [0.3, 0.7])


def test_xor_collapses_to_one_profile():
    support = report_support(xor_joint())
    assert {e.profile.key for e in support} == {support[0].profile.key}
    assert np.allclose(support[0].profile.reports, 0.5)
    assert sum(e.prob for e in support if e.outcome == 1) == pytest.approx(0.5)


def test_uninformative_support_is_prior():
    model = build_cond_indep([0.3, 0.7], [[[0.5, 0.5], [0.5, 0.5]]] * 2)
    support = report_support(model)
    assert len(support) == 2
    assert sorted(e.prob for e in support) == pytest.approx([0.3, 0.7])


def test_support_size_bound():
    for seed in range(20):
        assert len(report_support(random_joint(2, 2, 2, stream(seed, "t")))) <= 8


def test_support_matches_oracle():
    model = random_cond_indep(3, 2, 2, stream(4, "t"))
    brute = oracles.posterior_by_profile(
        oracles.ci_joint(model.prior.tolist(), [c.tolist() for c in model.cond]), 3, 2
    )
    keys = {tuple(tuple(round(x, 12) for x in row) for row in e.profile.reports) for e in report_support(model)}
    assert keys == set(brute)


def test_sample_empty_and_deterministic():
    model = random_joint(2, 3, 2, stream(0, "t"))
    assert len(sample(model, 0, 1)) == 0
    a, b = sample(model, 50, 9), sample(model, 50, 9)
    assert np.array_equal(a.reports, b.reports) and np.array_equal(a.outcomes, b.outcomes)
    assert not np.array_equal(a.outcomes, sample(model, 50, 10).outcomes)


def test_sample_frequency_uninformative():
    model = build_cond_indep([0.35, 0.65], [[[0.5, 0.5], [0.5, 0.5]]] * 2)
    s = sample(model, 10_000, 3)
    assert abs(s.outcomes.mean() - 0.65) < 0.02


def test_sample_joint_frequencies():
    model = random_joint(2, 2, 2, stream(2, "t"))
    s = sample(model, 200_000, 5)
    freq = np.bincount(s.outcomes, minlength=2) / len(s)
    assert np.allclose(freq, model.prior, atol=0.005)


def test_weak_model_ratios():
    m = weak_binary_model(4, 0.25, 0.4)
    ratio = m.cond[0][1] / m.cond[0][0]
    assert sorted(ratio) == pytest.approx([1 / 1.25, 1.25])


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), k=st.integers(2, 3))
def test_report_rows_sum_to_one(seed, k):
    joint = random_joint(2, 3, k, stream(seed, "h"))
    for table in joint.report_tables:
        assert np.allclose(table.sum(axis=1), 1.0, atol=1e-12)
    assert joint.support.probs.sum() == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_cond_indep_reports_agree_with_joint(seed):
    model = random_cond_indep(3, 3, 2, stream(seed, "h"))
    for a, b in zip(model.report_tables, to_joint(model).report_tables):
        assert np.allclose(a, b, atol=1e-12)
    assert model.rho / (1 + model.rho) == pytest.approx(model.p, abs=1e-12)


def test_p_mu_on_joint():
    joint = random_joint(3, 2, 2, stream(11, "t"))
    assert (1 - joint.p) * joint.mu0 == pytest.approx(joint.p * joint.mu1, abs=1e-12)


def test_model_json_round_trip(tmp_path):
    for model in (random_joint(2, 2, 3, stream(1, "t")), random_cond_indep(2, 3, 2, stream(1, "t"))):
        path = tmp_path / "m.json"
        save_model(model, path)
        back = load_model(path)
        assert model_to_dict(back) == model_to_dict(model)
    assert isinstance(model_from_dict(model_to_dict(xor_joint())).prob, np.ndarray)


def test_csv_round_trip():
    for k in (2, 3):
        model = random_joint(2, 2, k, stream(k, "t"))
        s = sample(model, 25, 4)
        text = samples_to_csv(s)
        assert "\r" not in text
        back = samples_from_csv(text)
        # binary CSV stores r only; 1 - r is recomputed on load
        assert np.array_equal(back.reports[:, :, -1], s.reports[:, :, -1])
        assert np.allclose(back.reports, s.reports, rtol=0, atol=1e-15)
        assert np.array_equal(back.outcomes, s.outcomes)


def test_sampleset_rejects_bad_rows():
    with pytest.raises(NotADistribution):
        SampleSet(np.full((1, 2, 2), 0.7), np.array([0]))

"""Property batteries: each draws seeded random instances and records one assertion per check."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .aggregators import (
    TableAggregator,
    averaging,
    bayes_optimal,
    bordley,
    constant,
    multi_bordley,
    true_optimal,
)
from .errors import UnknownBattery
from .hard_instances import (
    DzFamily,
    aggregator_to_distribution,
    ci_pair_build,
    coordinate_marginals,
    dz_build,
    dz_report_tables,
    dz_table,
    dz_to_aggregation_instance,
)
from .learners import erm_empirical, train_loss
from .metrics import hellinger_sq, hellinger_sq_iid_product, record_losses, tv_distance
from .model import build_cond_indep, random_cond_indep, random_joint, sample, to_joint
from .rng import stream

SCHEMA_VERSION = "1"


@dataclass(frozen=True)
class Assertion:
    name: str
    measured: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.measured) and self.measured <= self.tolerance)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "measured": float(self.measured),
            "tolerance": float(self.tolerance),
            "passed": self.passed,
        }


@dataclass(frozen=True)
class BatteryReport:
    battery: str
    seed: int
    assertions: tuple[Assertion, ...]

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.assertions)

    @property
    def worst(self) -> float:
        return max((a.measured for a in self.assertions), default=0.0)

    def to_dict(self) -> dict:
        return {
            "battery": self.battery,
            "seed": self.seed,
            "passed": self.passed,
            "count": len(self.assertions),
            "failed": sum(not a.passed for a in self.assertions),
            "assertions": [a.to_dict() for a in self.assertions],
        }


@dataclass(frozen=True)
class SuiteReport:
    seed: int
    batteries: tuple[BatteryReport, ...]

    @property
    def passed(self) -> bool:
        return all(b.passed for b in self.batteries)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "seed": self.seed,
            "passed": self.passed,
            "batteries": [b.to_dict() for b in self.batteries],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def to_csv(self) -> str:
        lines = ["battery,assertion,measured,tolerance,passed"]
        for b in self.batteries:
            for a in b.assertions:
                lines.append(f"{b.battery},{a.name},{a.measured!r},{a.tolerance!r},{int(a.passed)}")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# instance helpers


def _random_binary_joint(rng):
    n = int(rng.integers(1, 4))
    m = int(rng.integers(2, 4))
    return random_joint(n, m, 2, rng)


def _random_ci(rng, k=2, n_max=4, m_max=4):
    n = int(rng.integers(2, n_max + 1))
    m = int(rng.integers(2, m_max + 1))
    return random_cond_indep(n, m, k, rng)


def _gap_mismatch(joint, f) -> float:
    """|(L(f) - L(f*)) - E|f - f*|^2| summed independently of the metrics module."""
    sup = joint.support
    f_star = bayes_optimal(joint)
    out, opt = f.distribution(sup.reports), f_star.distribution(sup.reports)
    loss = sup.probs @ record_losses(out, sup.outcomes)
    best = sup.probs @ record_losses(opt, sup.outcomes)
    direct = sup.probs @ (((out - opt) ** 2).sum(axis=1) / joint.k)
    return abs(float(loss - best - direct))


def _random_aggregators(joint, rng):
    sup = joint.support
    table, _ = np.unique(np.round(sup.reports, 12), axis=0, return_index=True)
    v = rng.random(len(table))
    yield TableAggregator("table", 2, joint.n, table, np.stack([1 - v, v], axis=1))
    yield constant(float(rng.random()))
    yield averaging()
    yield bordley(float(np.exp(rng.uniform(-2, 2))), joint.n)
    small = sample(joint, 20, int(rng.integers(2**31)))
    yield erm_empirical(small, default_output=[0.5, 0.5])


# ---------------------------------------------------------------------------
# batteries


def difference_loss(seed: int) -> list[Assertion]:
    rng = stream(seed, "battery", "difference_loss")
    out = []
    for t in range(100):
        joint = _random_binary_joint(rng)
        worst = max(_gap_mismatch(joint, f) for f in _random_aggregators(joint, rng))
        out.append(Assertion(f"joint_{t}", worst, 1e-9))
    return out


def p_mu(seed: int) -> list[Assertion]:
    rng = stream(seed, "battery", "p_mu")
    out = []
    for t in range(100):
        model = _random_binary_joint(rng) if t % 2 else _random_ci(rng)
        out.append(Assertion(f"model_{t}", abs((1 - model.p) * model.mu0 - model.p * model.mu1), 1e-10))
    return out


def expectation_product_rho(seed: int) -> list[Assertion]:
    rng = stream(seed, "battery", "expectation_product_rho")
    out = []
    for t in range(100):
        model = _random_ci(rng)
        joint = to_joint(model)
        rho = model.rho
        err = 0.0
        for i in range(joint.n):
            pj = joint.expert_joint(i)  # enumerated from the joint table
            r = pj[:, 1] / pj.sum(axis=1)
            up = float((pj[:, 0] / pj[:, 0].sum() * r / (1 - r)).sum())
            down = float((pj[:, 1] / pj[:, 1].sum() * (1 - r) / r).sum())
            err = max(err, abs(up - rho), abs(down - 1 / rho))
        out.append(Assertion(f"model_{t}", err, 1e-10))
    return out


def bordley_bruteforce(seed: int) -> list[Assertion]:
    rng = stream(seed, "battery", "bordley_bruteforce")
    out = []
    for t in range(50):
        model = _random_ci(rng)
        sup = to_joint(model).support
        brute = bayes_optimal(to_joint(model)).apply(sup.reports)
        closed = bordley(model.rho, model.n).apply(sup.reports)
        out.append(Assertion(f"model_{t}", float(np.max(np.abs(brute - closed))), 1e-10))
    return out


def multi_bordley_bruteforce(seed: int) -> list[Assertion]:
    rng = stream(seed, "battery", "multi_bordley_bruteforce")
    out = []
    for t in range(20):
        model = _random_ci(rng, k=3, n_max=3, m_max=3)
        sup = to_joint(model).support
        brute = bayes_optimal(to_joint(model)).distribution(sup.reports)
        closed = true_optimal(model).distribution(sup.reports)
        out.append(Assertion(f"model_{t}", float(np.max(np.abs(brute - closed))), 1e-10))
    return out


def report_consistency(seed: int) -> list[Assertion]:
    rng = stream(seed, "battery", "report_consistency")
    out = []
    for t in range(30):
        joint = random_joint(int(rng.integers(1, 4)), int(rng.integers(2, 4)), int(rng.integers(2, 4)), rng)
        rows = max(float(np.nanmax(np.abs(tb.sum(axis=1) - 1))) for tb in joint.report_tables)
        out.append(Assertion(f"row_sums_{t}", rows, 1e-12))
        out.append(Assertion(f"support_mass_{t}", abs(float(joint.support.probs.sum()) - 1), 1e-9))
        sup = joint.support
        back = np.stack([joint.report_tables[i][sup.signals[:, i]] for i in range(joint.n)], axis=1)
        out.append(Assertion(f"self_consistent_{t}", float(np.max(np.abs(back - sup.reports))), 1e-12))
        ci = _random_ci(rng, k=int(rng.integers(2, 4)), n_max=3, m_max=3)
        via = to_joint(ci).report_tables
        err = max(float(np.max(np.abs(a - b))) for a, b in zip(via, ci.report_tables))
        out.append(Assertion(f"cond_indep_direct_{t}", err, 1e-12))
        if ci.k == 2:
            out.append(Assertion(f"rho_roundtrip_{t}", abs(ci.rho / (1 + ci.rho) - ci.p), 1e-12))
    return out


def hellinger_lemmas(seed: int) -> list[Assertion]:
    rng = stream(seed, "battery", "hellinger_lemmas")
    worst_tv = worst_prop = worst_eps = worst_chain = worst_iid = -np.inf
    for _ in range(1000):
        size = int(rng.integers(2, 8))
        a, b = rng.dirichlet(np.ones(size)), rng.dirichlet(np.ones(size))
        worst_tv = max(worst_tv, tv_distance(a, b) - math.sqrt(2 * hellinger_sq(a, b)))
        h = rng.random(size)
        worst_prop = max(worst_prop, abs(float(h @ a - h @ b)) - tv_distance(a, b))
    for _ in range(300):
        size = int(rng.integers(2, 8))
        eps = float(rng.uniform(1e-4, 0.5))
        a = rng.dirichlet(np.ones(size))
        # pointwise ratio in [1 - eps, 1 + eps], mass restored on a balancing pair
        b = a * (1 + rng.uniform(-eps, eps, size))
        b /= b.sum()
        if np.all(np.abs(b / a - 1) <= eps):
            worst_eps = max(worst_eps, hellinger_sq(a, b) - eps**2 / 2)
    for _ in range(300):
        nx, ny = int(rng.integers(2, 5)), int(rng.integers(2, 5))
        px, qx = rng.dirichlet(np.ones(nx)), rng.dirichlet(np.ones(nx))
        py = rng.dirichlet(np.ones(ny), size=nx)
        qy = rng.dirichlet(np.ones(ny), size=nx)
        joint_h = hellinger_sq((px[:, None] * py).ravel(), (qx[:, None] * qy).ravel())
        bound = hellinger_sq(px, qx) + max(hellinger_sq(py[x], qy[x]) for x in range(nx))
        worst_chain = max(worst_chain, joint_h - bound)
        T = int(rng.integers(1, 4))
        pa, qa = px, qx
        for _ in range(T - 1):
            pa, qa = np.outer(pa, px).ravel(), np.outer(qa, qx).ravel()
        worst_iid = max(worst_iid, abs(hellinger_sq(pa, qa) - hellinger_sq_iid_product(hellinger_sq(px, qx), T)))
    return [
        Assertion("tv_le_sqrt2_hellinger", worst_tv, 1e-12),
        Assertion("tv_bounds_bounded_functions", worst_prop, 1e-12),
        Assertion("ratio_bound_eps_sq_half", worst_eps, 1e-12),
        Assertion("correlated_product_chain", worst_chain, 1e-12),
        Assertion("iid_product_closed_form", worst_iid, 1e-12),
    ]


def aggregator_properties(seed: int) -> list[Assertion]:
    rng = stream(seed, "battery", "aggregator_properties")
    out = []
    for t in range(30):
        k = int(rng.integers(2, 4))
        model = _random_ci(rng, k=k, n_max=3, m_max=3)
        sup = to_joint(model).support
        theta = rng.random(k) + 0.1
        kinds = [true_optimal(model), averaging(), multi_bordley(theta), bayes_optimal(model)]
        if k == 2:
            kinds.append(bordley(float(theta[0]), model.n))
        norm = max(float(np.max(np.abs(f.distribution(sup.reports).sum(axis=1) - 1))) for f in kinds)
        out.append(Assertion(f"normalized_{t}", norm, 1e-9))
        c = float(np.exp(rng.uniform(-3, 3)))
        proj = np.max(np.abs(multi_bordley(c * theta).distribution(sup.reports) - kinds[2].distribution(sup.reports)))
        out.append(Assertion(f"projective_{t}", float(proj), 1e-12))
        losses = max(float(record_losses(f.distribution(sup.reports), sup.outcomes).max()) for f in kinds)
        out.append(Assertion(f"loss_at_most_2_over_k_{t}", losses - 2 / k, 0.0))
        s = sample(model, 200, seed, substream=("erm", t))
        erm = erm_empirical(s)
        dominance = train_loss(s, erm) - min(train_loss(s, f) for f in kinds)
        out.append(Assertion(f"erm_dominance_{t}", dominance, 1e-12))
    return out


def good_rho(seed: int) -> list[Assertion]:
    rng = stream(seed, "battery", "good_rho")
    out = []
    for t in range(50):
        model = _random_ci(rng)
        n = model.n
        eps = float(rng.uniform(1e-6, 1e-2))
        rel = float(rng.uniform(-1, 1)) * 2 * math.sqrt(eps) / (n - 1)
        sup = to_joint(model).support
        diff = np.abs(bordley(model.rho * (1 + rel), n).apply(sup.reports) - true_optimal(model).apply(sup.reports))
        out.append(Assertion(f"model_{t}", float(diff.max()) - (n - 1) / 2 * abs(rel), 1e-9))
    return out


def _strong_expert(rng, gamma: float, m: int) -> np.ndarray:
    while True:
        c = rng.dirichlet(np.ones(m), size=2)
        ratio = c[1] / c[0]
        if np.all((ratio >= 1 + gamma) | (ratio <= 1 / (1 + gamma))):
            return c


def strong_classification(seed: int) -> list[Assertion]:
    rng = stream(seed, "battery", "strong_classification")
    out = []
    for t in range(30):
        gamma = float(rng.uniform(0.5, 3.0))
        n, m = int(rng.integers(2, 5)), int(rng.integers(2, 4))
        p = float(rng.uniform(0.1, 0.9))
        model = build_cond_indep([1 - p, p], [_strong_expert(rng, gamma, m) for _ in range(n)])
        rho_hat = model.rho * (1 + float(rng.uniform(-0.99, 0.99)) * gamma / (1 + gamma))
        wrong = 0
        for i, c in enumerate(model.cond):
            r = model.report_tables[i][:, 1]
            guess = r / (1 - r) > rho_hat
            wrong += int(np.sum(guess != (c[1] / c[0] >= 1 + gamma)))
        out.append(Assertion(f"model_{t}", float(wrong), 0.0))
    return out


DZ_SHAPES = ((2, 2), (2, 3), (4, 2))


def dz_properties(seed: int) -> list[Assertion]:
    rng = stream(seed, "battery", "dz_properties")
    out = []
    for m, n in DZ_SHAPES:
        fam = DzFamily(m, n, 0.01)
        ref = coordinate_marginals(dz_table(fam, fam.random_sign(rng)))
        for t in range(10):
            z = fam.random_sign(rng)
            table = dz_table(fam, z)
            tag = f"m{m}_n{n}_{t}"
            out.append(Assertion(f"{tag}_bound", float(table.max() * fam.size - fam.bound), 0.0))
            out.append(Assertion(f"{tag}_nonnegative", float(-table.min()), 0.0))
            marg = coordinate_marginals(table)
            same = max(float(np.max(np.abs(a - b))) for a, b in zip(marg, ref))
            out.append(Assertion(f"{tag}_marginals_shared", same, 1e-12))
            steps = min(float(np.min(np.diff(a))) for a in marg)
            out.append(Assertion(f"{tag}_marginals_increasing", -steps, -np.finfo(float).tiny))
            tv = tv_distance(dz_build(fam, z), dz_build(fam, -z))
            out.append(Assertion(f"{tag}_tv_flip", abs(tv - fam.expected_tv_flip()), 1e-12))
    return out


def reduction(seed: int) -> list[Assertion]:
    rng = stream(seed, "battery", "reduction")
    out = []
    for m, n in DZ_SHAPES:
        fam = DzFamily(m, n, 0.01)
        base = fam.base_table()
        expected = [d / (1 / m + d) for d in coordinate_marginals(base)]
        for t in range(3):
            joint = dz_to_aggregation_instance(fam, fam.random_sign(rng))
            err = max(float(np.max(np.abs(joint.report_tables[i][:, 1] - expected[i]))) for i in range(n))
            out.append(Assertion(f"m{m}_n{n}_{t}_reports_fixed", err, 1e-12))
        err = max(float(np.max(np.abs(a - b))) for a, b in zip(dz_report_tables(fam), expected))
        out.append(Assertion(f"m{m}_n{n}_report_tables", err, 1e-12))
    for eps in (1e-4, 1e-6):
        for m, n in DZ_SHAPES:
            out.append(Assertion(f"roundtrip_eps{eps:g}_m{m}_n{n}", round_trip_excess(m, n, eps, rng), 1e-9))
    return out


def round_trip_excess(m: int, n: int, eps: float, rng: np.random.Generator) -> float:
    """d_TV(recovered, D_z) minus (1+B)^2 sqrt(eps) for a perturbed Bayes aggregator.

    The Bayes outputs are moved by +-sqrt(eps) (random signs), so the squared
    distance to f* is at most eps under the instance distribution.
    """
    fam = DzFamily(m, n, 0.01)
    z = fam.random_sign(rng)
    joint = dz_to_aggregation_instance(fam, z)
    f_star = bayes_optimal(joint)
    v = np.clip(f_star.outputs[:, 1] + rng.choice([-1.0, 1.0], len(f_star.outputs)) * math.sqrt(eps), 0, 1)
    f_hat = TableAggregator("table", 2, n, f_star.profiles, np.stack([1 - v, v], axis=1))
    rec = aggregator_to_distribution(f_hat, fam, reference=dz_build(fam, z))
    return rec.tv_to_reference - (1 + fam.bound) ** 2 * math.sqrt(eps)


def cipair(seed: int) -> list[Assertion]:
    out = []
    for n in (2, 4, 8):
        values = []
        for e in (2.0**-24, 2.0**-22, 2.0**-20):
            pair = ci_pair_build(n, e)
            exact = pair.hellinger_exact()
            values.append(exact)
            tag = f"n{n}_eps2^{int(round(math.log2(e)))}"
            out.append(Assertion(f"{tag}_factorized", abs(exact - pair.hellinger_factorized()), 1e-12))
            out.append(Assertion(f"{tag}_chain_bound", exact - pair.hellinger_chain_bound(), 1e-12))
            reports = [float(x) for x in np.unique(np.round(pair.first.report_tables[0][:, 1], 12))]
            out.append(Assertion(f"{tag}_reports", abs(reports[0]) + abs(reports[-1] - 0.5), 1e-12))
            for model in (pair.first, pair.second):
                lift = model.rho ** (n - 1)
                out.append(Assertion(f"{tag}_rho_power", max(0.5 - lift, lift - 1.0), 0.0))
        out.append(Assertion(f"n{n}_monotone", -min(np.diff(values)), 0.0))
        ratios = [v / e for v, e in zip(values, (2.0**-24, 2.0**-22, 2.0**-20))]
        out.append(Assertion(f"n{n}_ratio_bounded", max(ratios) / min(ratios), 4.0))
    return out


BATTERIES: dict[str, Callable[[int], list[Assertion]]] = {
    "difference_loss": difference_loss,
    "p_mu": p_mu,
    "expectation_product_rho": expectation_product_rho,
    "bordley_bruteforce": bordley_bruteforce,
    "multi_bordley_bruteforce": multi_bordley_bruteforce,
    "report_consistency": report_consistency,
    "hellinger_lemmas": hellinger_lemmas,
    "aggregator_properties": aggregator_properties,
    "good_rho": good_rho,
    "strong_classification": strong_classification,
    "dz_properties": dz_properties,
    "reduction": reduction,
    "cipair": cipair,
}


def run_battery(name: str, seed: int) -> BatteryReport:
    if name not in BATTERIES:
        raise UnknownBattery(f"unknown battery {name!r}; known: {', '.join(sorted(BATTERIES))}")
    return BatteryReport(name, seed, tuple(BATTERIES[name](seed)))


def run_lemma_suite(selector: str, seed: int = 0) -> SuiteReport:
    """Run one battery, a comma-separated list, or ``all``."""
    names = list(BATTERIES) if selector == "all" else [s.strip() for s in selector.split(",") if s.strip()]
    if not names:
        raise UnknownBattery("empty battery selector")
    for name in names:
        if name not in BATTERIES:
            raise UnknownBattery(f"unknown battery {name!r}; known: {', '.join(sorted(BATTERIES))}")
    return SuiteReport(seed, tuple(run_battery(name, seed) for name in names))

"""Distances between discrete distributions and squared-loss evaluation."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from itertools import combinations_with_replacement
from typing import TYPE_CHECKING, Sequence

import numpy as np
from scipy.special import gammaln

from .errors import DimensionMismatch, EmptySample, LossIdentityViolation, NotADistribution, SupportMismatch
from .model import CondIndepModel, DiscreteJoint, SampleSet, VALIDATE_TOL, to_joint

if TYPE_CHECKING:
    from .aggregators import Aggregator

GAP_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class DiscreteDist:
    """Probability vector over an explicit list of support labels."""

    probs: np.ndarray
    labels: tuple = ()

    def __post_init__(self):
        p = np.array(self.probs, dtype=float).ravel()
        if p.size == 0 or not np.all(np.isfinite(p)) or np.any(p < 0):
            raise NotADistribution("probabilities must be finite and non-negative")
        if abs(p.sum() - 1.0) > VALIDATE_TOL:
            raise NotADistribution(f"probabilities sum to {p.sum()!r}")
        p.setflags(write=False)
        labels = tuple(self.labels) if len(self.labels) else tuple(range(p.size))
        if len(labels) != p.size:
            raise DimensionMismatch("one label per probability")
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.probs.size


def _coindexed(d1, d2) -> tuple[np.ndarray, np.ndarray]:
    if not isinstance(d1, DiscreteDist):
        d1 = DiscreteDist(d1)
    if not isinstance(d2, DiscreteDist):
        d2 = DiscreteDist(d2)
    if d1.labels != d2.labels:
        raise SupportMismatch("distributions are not indexed by the same support")
    return d1.probs, d2.probs


def tv_distance(d1, d2) -> float:
    a, b = _coindexed(d1, d2)
    return float(0.5 * np.abs(a - b).sum())


def hellinger_sq(d1, d2) -> float:
    a, b = _coindexed(d1, d2)
    # clip guards against 1 - (1 + tiny) going negative
    return float(min(1.0, max(0.0, 1.0 - np.sqrt(a * b).sum())))


def hellinger_sq_iid_product(h2: float, T: int) -> float:
    """Squared Hellinger distance between T-fold products of a pair at distance h2."""
    if not 0.0 <= h2 <= 1.0 or T < 0:
        raise ValueError("need h2 in [0, 1] and T >= 0")
    # 1 - (1-h2)^T without cancellation for small h2
    value = -math.expm1(T * math.log1p(-h2)) if h2 < 1.0 else float(T > 0)
    assert value <= T * h2 + 1e-15
    return value


# ---------------------------------------------------------------------------
# squared loss


def record_losses(outputs: np.ndarray, outcomes: np.ndarray) -> np.ndarray:
    """Per-record loss (1/k) * sum_j (f_j - 1[omega = j])^2; equals (f - omega)^2 for k = 2."""
    k = outputs.shape[1]
    onehot = np.eye(k)[outcomes]
    return ((outputs - onehot) ** 2).sum(axis=1) / k


@dataclass(frozen=True)
class LossReport:
    loss: float
    method: str
    optimal_loss: float | None = None
    gap: float | None = None
    gap_direct: float | None = None
    stderr: float | None = None
    records: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _exact_from_support(reports, outcomes, probs, f, f_star) -> LossReport:
    out = f.distribution(reports)
    opt = f_star.distribution(reports)
    k = out.shape[1]
    loss = float(probs @ record_losses(out, outcomes))
    optimal = float(probs @ record_losses(opt, outcomes))
    gap_direct = float(probs @ (((out - opt) ** 2).sum(axis=1) / k))
    gap = loss - optimal
    if abs(gap - gap_direct) > GAP_TOL:
        raise LossIdentityViolation(f"gap {gap!r} vs direct {gap_direct!r}")
    return LossReport(loss=loss, method="exact", optimal_loss=optimal, gap=gap, gap_direct=gap_direct)


def expected_loss_exact(joint: DiscreteJoint | CondIndepModel, f: "Aggregator") -> LossReport:
    """Exact loss, optimal loss and both gap computations by enumeration."""
    from .aggregators import bayes_optimal

    if isinstance(joint, CondIndepModel):
        joint = to_joint(joint)
    sup = joint.support
    return _exact_from_support(sup.reports, sup.outcomes, sup.probs, f, bayes_optimal(joint))


def expected_loss_exchangeable(model: CondIndepModel, f: "Aggregator") -> LossReport:
    """Exact loss for experts sharing one conditional table.

    Enumerates signal-count vectors instead of joint signals, so it scales to
    hundreds of experts. ``f`` must be invariant to permuting experts.
    """
    from .aggregators import true_optimal

    if not model.exchangeable:
        raise DimensionMismatch("experts do not share one conditional table")
    n, m, k = model.n, model.signal_sizes[0], model.k
    table = model.report_tables[0]
    cond = model.cond[0]
    reachable = [s for s in range(m) if not np.isnan(table[s, 0])]
    profiles, outcomes, probs = [], [], []
    for combo in combinations_with_replacement(reachable, n):
        counts = np.bincount(combo, minlength=m)
        log_coef = gammaln(n + 1) - gammaln(counts + 1).sum()
        prof = table[list(combo)]
        for j in range(k):
            if model.prior[j] == 0:
                continue
            with np.errstate(divide="ignore", invalid="ignore"):
                logp = log_coef + np.log(model.prior[j]) + (counts * np.log(cond[j])).sum(where=counts > 0)
            pr = math.exp(logp)
            if pr > 0:
                profiles.append(prof)
                outcomes.append(j)
                probs.append(pr)
    return _exact_from_support(np.array(profiles), np.array(outcomes), np.array(probs), f, true_optimal(model))


def expected_loss_mc(samples: SampleSet, f: "Aggregator") -> LossReport:
    """Empirical mean loss over ``samples`` with its standard error."""
    T = len(samples)
    if T == 0:
        raise EmptySample("cannot evaluate on an empty sample set")
    losses = record_losses(f.distribution(samples.reports), samples.outcomes)
    stderr = float(losses.std(ddof=1) / math.sqrt(T)) if T > 1 else None
    return LossReport(loss=float(losses.mean()), method="monte_carlo", stderr=stderr, records=T)


def mc_gap(samples: SampleSet, f: "Aggregator", f_star: "Aggregator") -> LossReport:
    """Monte-Carlo estimate of E|f - f*|^2 when f* is known in closed form."""
    T = len(samples)
    if T == 0:
        raise EmptySample("cannot evaluate on an empty sample set")
    out = f.distribution(samples.reports)
    opt = f_star.distribution(samples.reports)
    k = out.shape[1]
    sq = ((out - opt) ** 2).sum(axis=1) / k
    losses = record_losses(out, samples.outcomes)
    opt_losses = record_losses(opt, samples.outcomes)
    stderr = float(sq.std(ddof=1) / math.sqrt(T)) if T > 1 else None
    return LossReport(
        loss=float(losses.mean()),
        method="monte_carlo",
        optimal_loss=float(opt_losses.mean()),
        gap=float(losses.mean() - opt_losses.mean()),
        gap_direct=float(sq.mean()),
        stderr=stderr,
        records=T,
    )


def distance_from_tables(a: Sequence[float], b: Sequence[float]) -> float:
    """Half L1 distance between two co-indexed tables that need not be normalized."""
    return float(0.5 * np.abs(np.asarray(a, float) - np.asarray(b, float)).sum())

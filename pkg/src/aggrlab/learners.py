"""Sample-based learners: SampleSet -> Aggregator."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import expit, logsumexp

from .aggregators import (
    AveragingAggregator,
    BordleyAggregator,
    MultiBordleyAggregator,
    TableAggregator,
    ThresholdAggregator,
    conditional_table,
    log_odds,
)
from .errors import (
    AllZeroLikelihood,
    ContradictoryReports,
    DegenerateEstimate,
    DimensionMismatch,
    EmptySample,
    InsufficientGroups,
    InsufficientSamples,
    InvalidGrid,
    MissingOutcomeClass,
    NoQualifyingIndex,
    PreconditionViolated,
    ZeroDenominator,
)
from .metrics import record_losses
from .model import SampleSet, profile_key, profile_keys

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _require_samples(samples: SampleSet) -> None:
    if len(samples) == 0:
        raise EmptySample("learner needs at least one record")


def _require_binary(samples: SampleSet) -> None:
    if samples.k != 2:
        raise DimensionMismatch("learner is defined for binary outcomes only")


# ---------------------------------------------------------------------------
# empirical lookup tables


def erm_empirical(samples: SampleSet, k: int | None = None, default_output=None) -> TableAggregator:
    """Empirical conditional outcome frequencies per observed profile.

    These minimise the empirical squared loss over all functions of the
    profile. Unseen profiles get ``default_output`` (uniform unless given).
    """
    _require_samples(samples)
    k = samples.k if k is None else k
    if k != samples.k:
        raise DimensionMismatch(f"samples carry {samples.k} outcomes, not {k}")
    default = np.full(k, 1.0 / k) if default_output is None else np.asarray(default_output, float)
    profiles, outputs = conditional_table(samples.reports, samples.outcomes, np.ones(len(samples)), k)
    return TableAggregator("empirical_erm", k, samples.n, profiles, outputs, default_output=default)


def empirical_bayes(samples: SampleSet, default_output=None) -> TableAggregator:
    """Binary plug-in posterior P_hat(r, omega=1) / P_hat(r)."""
    _require_samples(samples)
    _require_binary(samples)
    erm = erm_empirical(samples, 2, default_output)
    T = len(samples)
    keys = profile_keys(samples.reports)
    seen_keys, seen_counts = np.unique(keys, return_counts=True)
    hit_keys, hit_counts = np.unique(keys[samples.outcomes == 1], return_counts=True)
    p_profile = {key.tobytes(): c / T for key, c in zip(seen_keys, seen_counts)}
    p_joint_one = {key.tobytes(): c / T for key, c in zip(hit_keys, hit_counts)}
    outputs = np.empty_like(erm.outputs)
    for t in range(len(erm.outputs)):
        key = profile_key(erm.profiles[t])
        v = p_joint_one.get(key, 0.0) / p_profile[key]
        outputs[t] = (1.0 - v, v)
    if not np.allclose(outputs, erm.outputs, rtol=0, atol=1e-12):
        raise AssertionError("plug-in posterior disagrees with empirical risk minimiser")
    return TableAggregator("empirical_bayes", 2, samples.n, erm.profiles, outputs, default_output=erm.default_output)


# ---------------------------------------------------------------------------
# theta-family search


@dataclass(frozen=True)
class ThetaGrid:
    """Log-spaced search grid plus golden-section refinement tolerance."""

    theta_min: float = 1e-4
    theta_max: float = 1e4
    points: int = 400
    rel_tol: float = 1e-6

    def __post_init__(self):
        if not (0 < self.theta_min < self.theta_max) or not np.isfinite(self.theta_max):
            raise InvalidGrid(f"need 0 < theta_min < theta_max, got {self.theta_min}, {self.theta_max}")
        if self.points < 2:
            raise InvalidGrid("grid needs at least two points")
        if not self.rel_tol > 0:
            raise InvalidGrid("refinement tolerance must be positive")

    def log_points(self) -> np.ndarray:
        return np.linspace(math.log(self.theta_min), math.log(self.theta_max), self.points)


def _line_search(loss, grid: np.ndarray, batch_loss, tol: float) -> tuple[float, float]:
    """Minimise a 1-D function: grid scan, then golden section on the best bracket.

    Ties keep the smallest argument. Returns (argmin, min value).
    """
    values = batch_loss(grid)
    i = int(np.argmin(values))
    best_x, best_v = float(grid[i]), float(values[i])
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, len(grid) - 1)]
    a, b = float(lo), float(hi)
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = loss(c), loss(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = loss(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = loss(d)
    x = 0.5 * (a + b)
    v = loss(x)
    if v < best_v:
        best_x, best_v = x, v
    return best_x, best_v


def _bordley_sums(samples: SampleSet) -> np.ndarray:
    terms = -log_odds(samples.reports)
    pos = np.isposinf(terms).any(axis=1)
    neg = np.isneginf(terms).any(axis=1)
    if np.any(pos & neg):
        raise ContradictoryReports("a training profile contains both a 0 report and a 1 report")
    return terms.sum(axis=1)


def erm_theta(samples: SampleSet, grid: ThetaGrid | None = None) -> BordleyAggregator:
    """Empirical risk minimiser over the one-parameter Bordley family."""
    grid = ThetaGrid() if grid is None else grid
    _require_samples(samples)
    _require_binary(samples)
    n = samples.n
    S = _bordley_sums(samples)
    y = samples.outcomes.astype(float)

    def loss(log_theta: float) -> float:
        return float(np.mean((expit(-((n - 1) * log_theta + S)) - y) ** 2))

    def batch_loss(xs: np.ndarray) -> np.ndarray:
        out = np.empty(len(xs))
        step = max(1, 2_000_000 // max(len(S), 1))
        for s in range(0, len(xs), step):
            block = xs[s : s + step, None]
            out[s : s + step] = np.mean((expit(-((n - 1) * block + S)) - y) ** 2, axis=1)
        return out

    x, v = _line_search(loss, grid.log_points(), batch_loss, math.log1p(grid.rel_tol))
    return BordleyAggregator(math.exp(x), n, extra={"train_loss": v})


def multi_erm_theta(
    samples: SampleSet,
    k: int | None = None,
    grid: ThetaGrid | None = None,
    max_sweeps: int = 50,
    sweep_tol: float = 1e-10,
) -> MultiBordleyAggregator:
    """Empirical risk minimiser over the theta-vector family.

    theta_j = q_j^-(n-1) with q = softmax(z) and z_0 = 0. Coordinate descent
    over z_1..z_{k-1}; each coordinate uses the same grid and refinement as
    :func:`erm_theta`, so for k = 2 the two searches coincide. Sweeps stop
    once a full pass lowers the training loss by less than ``sweep_tol``.
    """
    grid = ThetaGrid() if grid is None else grid
    _require_samples(samples)
    k = samples.k if k is None else k
    if k != samples.k:
        raise DimensionMismatch(f"samples carry {samples.k} outcomes, not {k}")
    n = samples.n
    with np.errstate(divide="ignore"):
        A = np.log(samples.reports).sum(axis=1)  # (T, k)
    if np.any(np.isneginf(A).all(axis=1)):
        raise AllZeroLikelihood("a training profile gives every outcome zero likelihood")
    onehot = np.eye(k)[samples.outcomes]

    def losses_for(Z: np.ndarray) -> np.ndarray:
        # Z: (G, k) candidate logit vectors
        logits = A[None, :, :] - (n - 1) * Z[:, None, :]
        logits -= logits.max(axis=2, keepdims=True)
        w = np.exp(logits)
        w /= w.sum(axis=2, keepdims=True)
        return ((w - onehot[None]) ** 2).sum(axis=2).mean(axis=1) / k

    z = np.zeros(k)
    current = float(losses_for(z[None])[0])
    xs = grid.log_points()
    tol = math.log1p(grid.rel_tol)
    spacing = xs[1] - xs[0]
    for sweep in range(max_sweeps):
        moved = False
        start = current
        for j in range(1, k):

            def with_j(vals: np.ndarray) -> np.ndarray:
                Z = np.repeat(z[None], len(vals), axis=0)
                Z[:, j] = vals
                out = np.empty(len(vals))
                step = max(1, 2_000_000 // max(A.size, 1))
                for s in range(0, len(vals), step):
                    out[s : s + step] = losses_for(Z[s : s + step])
                return out

            # later sweeps only revisit the neighbourhood of the current value
            scan = xs if sweep == 0 else xs[np.abs(xs - z[j]) <= 3 * spacing]
            if len(scan) < 2:
                scan = xs
            x, v = _line_search(lambda t: float(with_j(np.array([t]))[0]), scan, with_j, tol)
            if v <= current:
                moved = moved or v < current
                z[j] = x
                current = v
        if not moved or start - current < sweep_tol:
            break
    q = np.exp(z - logsumexp(z))
    return MultiBordleyAggregator(-(n - 1) * np.log(q), extra={"q": q.tolist(), "train_loss": current, "n": n})


# ---------------------------------------------------------------------------
# prior-odds estimation and the informative-expert learners


def estimate_rho(samples: SampleSet) -> tuple[float, dict]:
    """Ratio of mean summed reports on omega=0 records to mean summed (1 - r) on omega=1 records."""
    _require_binary(samples)
    zero = samples.outcomes == 0
    one = ~zero
    n0, n1 = int(zero.sum()), int(one.sum())
    if n0 == 0 or n1 == 0:
        raise MissingOutcomeClass(f"need both outcomes, got {n0} zeros and {n1} ones")
    num = float(samples.reports[zero, :, 1].sum(axis=1).mean())
    den = float(samples.reports[one, :, 0].sum(axis=1).mean())
    if den == 0.0:
        raise ZeroDenominator("every omega=1 record reports certainty of omega=1")
    return num / den, {"count_0": n0, "count_1": n1, "numerator": num, "denominator": den}


def rho_sample_count(p: float, mu0: float, n: int, delta_rel: float, delta: float) -> int:
    """Sample size under which the relative error of :func:`estimate_rho` is at most 4 * delta_rel w.p. 1 - 4 delta."""
    lg = math.log(2.0 / delta)
    return math.ceil(6.0 / ((1.0 - p) * mu0 * n * delta_rel**2) * lg + 12.0 / min(p, 1.0 - p) * lg)


class Regime(str, Enum):
    BELOW = "below_eps"
    ABOVE = "above_half_eps"


def regime_sample_count(eps: float, delta: float) -> int:
    return math.ceil(40.0 / eps * math.log(2.0 / delta))


def mean_regime_test(samples: SampleSet, eps: float, delta: float) -> Regime:
    """Decide whether E[1{omega=0} * mean_i r_i] is below eps or above eps/2."""
    _require_binary(samples)
    need = regime_sample_count(eps, delta)
    if len(samples) < need:
        raise InsufficientSamples(f"regime test needs {need} samples, got {len(samples)}")
    x = np.where(samples.outcomes == 0, samples.r.mean(axis=1), 0.0)
    return Regime.BELOW if x.mean() < 0.75 * eps else Regime.ABOVE


@dataclass(frozen=True)
class StrongBudget:
    regime: int
    rho: int
    classify: int

    @property
    def total(self) -> int:
        return self.regime + self.rho + self.classify


def strong_informative_budget(gamma: float, eps: float, delta: float, n: int) -> StrongBudget:
    """Sample counts for the three stages of :func:`strongly_informative_learn`.

    Past the regime test both (1-p) mu_0 and min(p, 1-p) are at least eps/4,
    which is what gets substituted into the estimator's count.
    """
    lg = math.log(2.0 / delta)
    floor = eps / 4.0
    rel = gamma / (1.0 + gamma) / 4.0
    t_rho = math.ceil(6.0 / (floor * n * rel**2) * lg + 12.0 / floor * lg)
    t_cls = math.ceil(max(12.0 / floor * lg, 2.0 * lg / (floor * math.log(2.0 / eps))))
    return StrongBudget(regime_sample_count(eps, delta), t_rho, t_cls)


def check_strong_preconditions(gamma: float, eps: float, n: int) -> None:
    lg = math.log(2.0 / eps)
    if n < 32.0 * lg:
        raise PreconditionViolated(f"n = {n} is below 32 log(2/eps) = {32 * lg:.2f}")
    need = 8.0 * math.sqrt(2.0 / n * lg)
    if gamma / (1.0 + gamma) < need:
        raise PreconditionViolated(f"gamma/(1+gamma) = {gamma / (1 + gamma):.4f} is below {need:.4f}")


def strongly_informative_learn(
    samples: SampleSet, gamma: float, eps: float, delta: float, n: int, check_preconditions: bool = True
):
    """Learner for experts whose every signal moves the odds by a factor >= 1 + gamma.

    Stages use consecutive slices of ``samples``: regime test, prior-odds
    estimate, then the count threshold. Returns :func:`averaging` when the
    regime test finds the mean small.
    """
    _require_binary(samples)
    if samples.n != n:
        raise DimensionMismatch(f"samples have {samples.n} experts, expected {n}")
    if check_preconditions:
        check_strong_preconditions(gamma, eps, n)
    budget = strong_informative_budget(gamma, eps, delta, n)
    if len(samples) < budget.total:
        raise InsufficientSamples(f"need {budget.total} samples, got {len(samples)}")
    t0, t1 = budget.regime, budget.regime + budget.rho
    if mean_regime_test(samples.slice(0, t0), eps, delta) is Regime.BELOW:
        return AveragingAggregator()
    rho_hat, _ = estimate_rho(samples.slice(t0, t1))

    rest = samples.slice(t1, len(samples))
    a = math.sqrt(n / 2.0 * math.log(2.0 / eps))
    probe = ThresholdAggregator(rho_hat, 1, 0.0, a, n)
    up = probe.counts(rest.reports)
    down = ThresholdAggregator(rho_hat, 0, 0.0, a, n).counts(rest.reports)
    means = {}
    for u, counts in ((0, down), (1, up)):
        mask = rest.outcomes == u
        if not mask.any():
            raise MissingOutcomeClass(f"no omega={u} records in the classification slice")
        means[u] = float(counts[mask].mean())
    passing = [u for u in (0, 1) if means[u] >= n / 2.0 - a]
    if not passing:
        raise NoQualifyingIndex(f"class means {means} both fall below n/2 - a = {n / 2 - a:.3f}")
    u = max(passing, key=lambda v: (means[v], -v))
    return ThresholdAggregator(rho_hat, u, means[u] - 2.0 * a, a, n)


def weak_group_size(gamma: float) -> int:
    return max(1, math.floor(1.0 / gamma + 1e-9))


def weakly_informative_learn(samples: SampleSet, gamma: float, n: int) -> BordleyAggregator:
    """Bordley aggregator with prior odds estimated from grouped likelihood-ratio products.

    Uses the more frequent outcome class. Its per-expert odds terms are cut
    into consecutive groups of ``floor(1/gamma)``; the mean group product
    estimates rho to that power.
    """
    _require_samples(samples)
    _require_binary(samples)
    if not 0.0 < gamma <= 1.0:
        raise PreconditionViolated(f"gamma must lie in (0, 1], got {gamma}")
    if samples.n != n:
        raise DimensionMismatch(f"samples have {samples.n} experts, expected {n}")
    g = weak_group_size(gamma)
    n0 = int((samples.outcomes == 0).sum())
    cls = 0 if n0 >= len(samples) - n0 else 1
    lo = log_odds(samples.reports[samples.outcomes == cls])
    terms = (lo if cls == 0 else -lo).ravel()
    groups = terms.size // g
    if groups < 1:
        raise InsufficientGroups(f"{terms.size} ratio terms cannot fill one group of {g}")
    group_logs = terms[: groups * g].reshape(groups, g).sum(axis=1)
    log_mean = logsumexp(group_logs) - math.log(groups)
    log_rho = log_mean / g if cls == 0 else -log_mean / g
    if not np.isfinite(log_rho):
        raise DegenerateEstimate("grouped product estimate is zero or infinite")
    return BordleyAggregator(
        math.exp(log_rho), n, kind="weak_informative", extra={"group_size": g, "class": cls, "groups": groups}
    )


def train_loss(samples: SampleSet, f) -> float:
    return float(record_losses(f.distribution(samples.reports), samples.outcomes).mean())

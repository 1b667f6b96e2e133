"""Lower-bound instance families and the two-distribution guessing experiment.

The bucket family lives on S^n with S = {0, ..., m-1}. Joint signals are
numbered lexicographically from 1, which is C order on an ``(m,) * n``
array. A sign vector ``z`` holds one +-1 per bucket, i.e. per value of the
first n-2 coordinates.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .aggregators import Aggregator
from .errors import (
    DimensionMismatch,
    EpsilonTooLarge,
    InvalidDistinguisher,
    OddSignalSpace,
    SignVectorMismatch,
    SupportTooLarge,
)
from .metrics import DiscreteDist, distance_from_tables, hellinger_sq, tv_distance
from .model import DEFAULT_CELL_CAP, CondIndepModel, DiscreteJoint, build_cond_indep, build_joint, to_joint
from .parallel import parallel_map
from .rng import stream

DZ_C = 20.0
DZ_BOUND = math.e + 0.5
CIPAIR_C = 32.0


# ---------------------------------------------------------------------------
# bucket-perturbed family


def _dz_weights(m: int, n: int) -> tuple[np.ndarray, float, float]:
    if m < 2 or m % 2:
        raise OddSignalSpace(f"signal space size must be even, got {m}")
    if n < 2:
        raise DimensionMismatch("the bucket family needs n >= 2")
    size = m**n
    if size > DEFAULT_CELL_CAP:
        raise SupportTooLarge(f"{size} joint signals exceed the cap")
    base = 1.0 + 1.0 / size
    powers = np.exp(np.arange(1, size + 1) * math.log(base))
    return powers, float(powers.sum()), base


def dz_base(m: int, n: int) -> DiscreteDist:
    """Geometric base distribution: mass proportional to base^num(s)."""
    powers, W, _ = _dz_weights(m, n)
    return DiscreteDist(powers / W)


@dataclass(frozen=True)
class DzFamily:
    m: int
    n: int
    eps: float
    c: float = DZ_C
    base: float = field(init=False)
    W: float = field(init=False)

    def __post_init__(self):
        if not 0 < self.eps < 1.0 / 40.0:
            raise EpsilonTooLarge(f"bucket family requires 0 < eps < 1/40, got {self.eps}")
        _, W, base = _dz_weights(self.m, self.n)
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "W", W)

    @property
    def size(self) -> int:
        return self.m**self.n

    @property
    def buckets(self) -> int:
        return self.m ** (self.n - 2)

    @property
    def magnitude(self) -> float:
        return self.c * self.eps / self.W

    @property
    def bound(self) -> float:
        """Upper bound B on m^n * D(s) for every member."""
        return DZ_BOUND

    def base_table(self) -> np.ndarray:
        return dz_base(self.m, self.n).probs.reshape((self.m,) * self.n)

    def random_sign(self, rng: np.random.Generator) -> np.ndarray:
        return rng.choice(np.array([-1, 1]), size=self.buckets)

    def expected_tv_flip(self) -> float:
        """TV distance between the members for z and -z."""
        return self.size * self.magnitude


def quadrant_pattern(m: int) -> np.ndarray:
    """+1 where both of the last two coordinates fall in the same half, -1 otherwise."""
    low = np.arange(m) < m // 2
    return np.where(low[:, None] == low[None, :], 1.0, -1.0)


def _check_sign(family: DzFamily, z) -> np.ndarray:
    z = np.asarray(z)
    if z.shape != (family.buckets,) or not np.all(np.isin(z, (-1, 1))):
        raise SignVectorMismatch(f"need {family.buckets} entries of +-1, got shape {z.shape}")
    return z.astype(float)


def dz_table(family: DzFamily, z) -> np.ndarray:
    """Member ``z`` as an ``(m,) * n`` array."""
    z = _check_sign(family, z)
    m = family.m
    flat = family.base_table().reshape(family.buckets, m, m)
    table = flat + z[:, None, None] * family.magnitude * quadrant_pattern(m)[None]
    return table.reshape((m,) * family.n)


def dz_build(family: DzFamily, z) -> DiscreteDist:
    return DiscreteDist(dz_table(family, z).ravel())


def coordinate_marginals(table: np.ndarray) -> list[np.ndarray]:
    n = table.ndim
    return [table.sum(axis=tuple(a for a in range(n) if a != i)) for i in range(n)]


def dz_to_aggregation_instance(family: DzFamily, z) -> DiscreteJoint:
    """Fair-coin outcome; signals uniform given omega=0 and distributed as D_z given omega=1."""
    D = dz_table(family, z)
    P = np.empty(D.shape + (2,))
    P[..., 0] = 0.5 / family.size
    P[..., 1] = 0.5 * D
    return build_joint(family.n, (family.m,) * family.n, 2, P, name=f"dz(m={family.m},n={family.n},eps={family.eps})")


def dz_report_tables(family: DzFamily) -> list[np.ndarray]:
    """Per-expert report of outcome 1; identical for every member of the family."""
    marg = coordinate_marginals(family.base_table())
    return [d / (1.0 / family.m + d) for d in marg]


@dataclass(frozen=True, eq=False)
class Reconstruction:
    """Joint-signal table recovered from an aggregator; may not sum to one."""

    table: np.ndarray
    tv_to_reference: float | None = None

    @property
    def mass(self) -> float:
        return float(self.table.sum())

    @property
    def normalized(self) -> bool:
        return abs(self.mass - 1.0) <= 1e-9

    def as_dist(self) -> DiscreteDist:
        return DiscreteDist(self.table.ravel() / self.mass)


def aggregator_to_distribution(f_hat: Aggregator, family: DzFamily, reference=None) -> Reconstruction:
    """Invert f = D / (1/m^n + D) after capping f at B/(1+B).

    ``reference`` (a DiscreteDist or table over S^n) adds its half-L1
    distance to the recovered table.
    """
    m, n = family.m, family.n
    grid = np.indices((m,) * n).reshape(n, -1).T
    r = np.stack([t[grid[:, i]] for i, t in enumerate(dz_report_tables(family))], axis=1)
    f = np.asarray(f_hat.apply(np.stack([1.0 - r, r], axis=2)), dtype=float)
    cap = family.bound / (1.0 + family.bound)
    f = np.minimum(f, cap)
    table = (f / (family.size * (1.0 - f))).reshape((m,) * n)
    tv = None
    if reference is not None:
        ref = reference.probs if isinstance(reference, DiscreteDist) else np.asarray(reference, float).ravel()
        tv = distance_from_tables(table.ravel(), ref)
    return Reconstruction(table, tv)


# ---------------------------------------------------------------------------
# pair of cond-indep models with nearby priors


def two_signal_conditionals(p: float, r_a: float, r_b: float) -> np.ndarray:
    """Conditionals of a two-signal expert whose reports are r_a and r_b under prior p.

    Row j is (P(a | omega=j), P(b | omega=j)).
    """
    w = (p - r_b) / (r_a - r_b)
    a0 = w * (1.0 - r_a) / (1.0 - p)
    a1 = w * r_a / p
    return np.array([[a0, 1.0 - a0], [a1, 1.0 - a1]])


@dataclass(frozen=True, eq=False)
class CiPair:
    n: int
    eps: float
    first: CondIndepModel
    second: CondIndepModel
    r_a: float = 0.5
    r_b: float = 0.0
    c: float = CIPAIR_C

    @property
    def priors(self) -> tuple[float, float]:
        return self.first.p, self.second.p

    def distributions(self) -> tuple[DiscreteDist, DiscreteDist]:
        """Both models as distributions over the same (joint signal, outcome) cells."""
        return DiscreteDist(to_joint(self.first).prob.ravel()), DiscreteDist(to_joint(self.second).prob.ravel())

    def hellinger_exact(self) -> float:
        return hellinger_sq(*self.distributions())

    def hellinger_factorized(self) -> float:
        """Same quantity via per-outcome Bhattacharyya coefficients."""
        total = 0.0
        for j in range(2):
            bc = float(np.sqrt(self.first.cond[0][j] * self.second.cond[0][j]).sum())
            total += math.sqrt(self.first.prior[j] * self.second.prior[j]) * bc**self.n
        return 1.0 - total

    def hellinger_chain_bound(self) -> float:
        """Outcome-marginal distance plus the worst conditional distance of the signals."""
        h_prior = hellinger_sq(self.first.prior, self.second.prior)
        worst = 0.0
        for j in range(2):
            bc = float(np.sqrt(self.first.cond[0][j] * self.second.cond[0][j]).sum())
            worst = max(worst, 1.0 - bc**self.n)
        return h_prior + worst


def ci_pair_build(n: int, eps: float) -> CiPair:
    if n < 2:
        raise DimensionMismatch("the pair needs n >= 2")
    if not 0 < eps < 2.0**-18:
        raise EpsilonTooLarge(f"pair construction requires 0 < eps < 2^-18, got {eps}")
    shift = CIPAIR_C * math.sqrt(eps) / n
    centre = 0.5 - 1.0 / (16.0 * n)
    models = []
    for p in (centre + shift, centre - shift):
        cond = two_signal_conditionals(p, 0.5, 0.0)
        models.append(build_cond_indep([1.0 - p, p], [cond] * n, name=f"cipair(n={n},eps={eps},p={p!r})"))
    return CiPair(n, eps, models[0], models[1])


# ---------------------------------------------------------------------------
# guessing which of two distributions produced a sample

Distinguisher = Callable[[np.ndarray, np.ndarray, np.ndarray, np.random.Generator], int]


def _coin(rng: np.random.Generator) -> int:
    return int(rng.integers(2)) + 1


def likelihood_ratio(counts: np.ndarray, p1: np.ndarray, p2: np.ndarray, rng: np.random.Generator) -> int:
    hit = counts > 0
    with np.errstate(divide="ignore"):
        l1 = float((counts[hit] * np.log(p1[hit])).sum())
        l2 = float((counts[hit] * np.log(p2[hit])).sum())
    if l1 > l2:
        return 1
    if l2 > l1:
        return 2
    return _coin(rng)


def tv_nearest(counts: np.ndarray, p1: np.ndarray, p2: np.ndarray, rng: np.random.Generator) -> int:
    total = counts.sum()
    if total == 0:
        return _coin(rng)
    emp = counts / total
    t1, t2 = distance_from_tables(emp, p1), distance_from_tables(emp, p2)
    if t1 < t2:
        return 1
    if t2 < t1:
        return 2
    return _coin(rng)


DISTINGUISHERS: dict[str, Distinguisher] = {"likelihood_ratio": likelihood_ratio, "tv_nearest": tv_nearest}


@dataclass(frozen=True, eq=False)
class DistinguishReport:
    T: int
    trials: int
    distinguisher: str
    seed: int
    truth: np.ndarray
    guess: np.ndarray
    hellinger_sq: float

    @property
    def empirical_error(self) -> float:
        return float(np.mean(self.truth != self.guess)) if self.trials else float("nan")

    @property
    def stderr(self) -> float:
        e = self.empirical_error
        return math.sqrt(e * (1.0 - e) / self.trials) if self.trials else float("nan")

    @property
    def floor_sqrtT(self) -> float:
        return 0.5 - math.sqrt(self.T / 2.0) * math.sqrt(self.hellinger_sq)

    @property
    def floor_exp(self) -> float:
        return 0.25 * (1.0 - self.hellinger_sq) ** (2 * self.T)

    def summary(self) -> dict:
        return {
            "schema_version": "1",
            "T": self.T,
            "trials": self.trials,
            "distinguisher": self.distinguisher,
            "seed": self.seed,
            "empirical_error": self.empirical_error,
            "stderr": self.stderr,
            "hellinger_sq": self.hellinger_sq,
            "floor_sqrtT": self.floor_sqrtT,
            "floor_exp": self.floor_exp,
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True, indent=2) + "\n"

    def rows_csv(self) -> str:
        lines = ["trial,truth,guess,T"]
        lines += [f"{t},{int(a)},{int(b)},{self.T}" for t, (a, b) in enumerate(zip(self.truth, self.guess))]
        return "\n".join(lines) + "\n"


def distinguish_experiment(
    d1: DiscreteDist,
    d2: DiscreteDist,
    T: int,
    trials: int,
    distinguisher: str | Distinguisher = "likelihood_ratio",
    seed: int = 0,
) -> DistinguishReport:
    """Repeatedly draw T samples from a uniformly chosen d_i and record the guess."""
    if callable(distinguisher):
        fn, name = distinguisher, getattr(distinguisher, "__name__", "custom")
    elif distinguisher in DISTINGUISHERS:
        fn, name = DISTINGUISHERS[distinguisher], distinguisher
    else:
        raise InvalidDistinguisher(f"unknown distinguisher {distinguisher!r}")
    h2 = hellinger_sq(d1, d2)
    tv_distance(d1, d2)  # support check
    p1, p2 = d1.probs / d1.probs.sum(), d2.probs / d2.probs.sum()

    def one(trial: int) -> tuple[int, int]:
        rng = stream(seed, "distinguish", T, trial)
        truth = int(rng.integers(2)) + 1
        counts = rng.multinomial(T, p1 if truth == 1 else p2)
        return truth, int(fn(counts, p1, p2, rng))

    results = parallel_map(one, range(trials))
    truth = np.array([a for a, _ in results], dtype=int)
    guess = np.array([b for _, b in results], dtype=int)
    return DistinguishReport(T, trials, name, seed, truth, guess, h2)

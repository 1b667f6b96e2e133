"""Discrete information structures, expert reports and report sampling.

Two model kinds are supported. A :class:`DiscreteJoint` stores the full table
P(s_1, ..., s_n, omega) as an array of shape ``(m_1, ..., m_n, k)``. A
:class:`CondIndepModel` stores a prior over outcomes and one conditional
signal table per expert, and is expanded into a joint only on request.

Reports are posterior outcome distributions: row ``i`` of a report profile is
P(omega | s_i). Profiles are identified by their entries rounded to
``PROFILE_DECIMALS`` digits.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterator, Sequence, Union

import numpy as np

from .errors import (
    DegeneratePrior,
    DimensionMismatch,
    NotADistribution,
    SupportTooLarge,
    ZeroProbabilitySignal,
)
from .rng import stream

PROFILE_DECIMALS = 12
DEFAULT_CELL_CAP = 10**7
RENORMALIZE_TOL = 1e-6
VALIDATE_TOL = 1e-9


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


def _check_prob_vector(v: np.ndarray, what: str) -> None:
    if v.ndim != 1 or v.size == 0:
        raise DimensionMismatch(f"{what} must be a non-empty vector")
    if not np.all(np.isfinite(v)) or np.any(v < 0):
        raise NotADistribution(f"{what} has negative or non-finite entries")
    if abs(v.sum() - 1.0) > VALIDATE_TOL:
        raise NotADistribution(f"{what} sums to {v.sum()!r}, not 1")


@dataclass(frozen=True)
class OutcomeSpace:
    k: int

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 2:
            raise DimensionMismatch(f"outcome count must be an integer >= 2, got {self.k}")


# ---------------------------------------------------------------------------
# report profiles


def profile_key(reports: np.ndarray) -> bytes:
    """Hashable identity of a single ``(n, k)`` profile."""
    rounded = np.round(np.asarray(reports, dtype=float), PROFILE_DECIMALS) + 0.0
    return np.ascontiguousarray(rounded).tobytes()


def profile_keys(reports: np.ndarray) -> np.ndarray:
    """Row-wise keys for a ``(T, n, k)`` batch as a 1-D void array.

    ``profile_keys(R)[t].tobytes() == profile_key(R[t])``.
    """
    R = np.asarray(reports, dtype=float)
    T = R.shape[0]
    flat = np.ascontiguousarray(np.round(R, PROFILE_DECIMALS).reshape(T, -1) + 0.0)
    return flat.view(np.dtype((np.void, flat.dtype.itemsize * flat.shape[1]))).ravel()


@dataclass(frozen=True, eq=False)
class ReportProfile:
    """One round of reports: an ``n x k`` matrix with probability rows."""

    reports: np.ndarray

    def __post_init__(self):
        R = np.array(self.reports, dtype=float)
        if R.ndim != 2 or R.shape[1] < 2:
            raise DimensionMismatch("a report profile is an n x k matrix with k >= 2")
        if np.any(R < 0) or np.any(np.abs(R.sum(axis=1) - 1.0) > VALIDATE_TOL):
            raise NotADistribution("every report row must be a probability vector")
        object.__setattr__(self, "reports", _frozen(R))

    @classmethod
    def binary(cls, r: Sequence[float]) -> "ReportProfile":
        r = np.asarray(r, dtype=float)
        return cls(np.stack([1.0 - r, r], axis=1))

    @property
    def n(self) -> int:
        return self.reports.shape[0]

    @property
    def k(self) -> int:
        return self.reports.shape[1]

    @property
    def r(self) -> np.ndarray:
        """Binary view: the n reported probabilities of outcome 1."""
        if self.k != 2:
            raise DimensionMismatch("scalar reports only exist for binary outcomes")
        return self.reports[:, 1]

    @property
    def key(self) -> bytes:
        return profile_key(self.reports)

    def __eq__(self, other) -> bool:
        return isinstance(other, ReportProfile) and self.key == other.key

    def __hash__(self) -> int:
        return hash(self.key)


# ---------------------------------------------------------------------------
# models


class _Structure:
    """Accessors shared by both model kinds."""

    n: int
    signal_sizes: tuple[int, ...]
    k: int

    def expert_joint(self, i: int) -> np.ndarray:
        """Table of P(s_i, omega), shape ``(m_i, k)``."""
        raise NotImplementedError

    @property
    def prior(self) -> np.ndarray:
        raise NotImplementedError

    @cached_property
    def report_tables(self) -> tuple[np.ndarray, ...]:
        """Per-expert ``(m_i, k)`` report tables; rows of unreachable signals are NaN."""
        tables = []
        for i in range(self.n):
            pj = self.expert_joint(i)
            marg = pj.sum(axis=1, keepdims=True)
            with np.errstate(invalid="ignore", divide="ignore"):
                rep = np.where(marg > 0, pj / marg, np.nan)
            tables.append(_frozen(rep))
        return tuple(tables)

    @property
    def is_binary(self) -> bool:
        return self.k == 2

    def _require_binary(self):
        if self.k != 2:
            raise DimensionMismatch("accessor only defined for binary outcomes")

    @property
    def p(self) -> float:
        self._require_binary()
        return float(self.prior[1])

    @property
    def rho(self) -> float:
        p = self.p
        if not 0.0 < p < 1.0:
            raise DegeneratePrior(f"prior odds undefined for p = {p}")
        return p / (1.0 - p)

    def _mean_report_given(self, outcome: int) -> float:
        # (1/n) sum_i E[r_i | omega = outcome], with r_i the report of outcome 1
        total = 0.0
        p_out = self.prior[outcome]
        if p_out <= 0:
            raise DegeneratePrior(f"outcome {outcome} has zero prior mass")
        for i in range(self.n):
            pj = self.expert_joint(i)
            mask = pj.sum(axis=1) > 0
            total += float(np.sum(pj[mask, outcome] * self.report_tables[i][mask, 1])) / p_out
        return total / self.n

    @property
    def mu0(self) -> float:
        self._require_binary()
        return self._mean_report_given(0)

    @property
    def mu1(self) -> float:
        self._require_binary()
        return 1.0 - self._mean_report_given(1)


@dataclass(frozen=True, eq=False)
class DiscreteJoint(_Structure):
    """Full joint table over (signals, outcome), shape ``(m_1, ..., m_n, k)``."""

    prob: np.ndarray
    name: str = "joint"

    def __post_init__(self):
        P = np.asarray(self.prob)
        if P.ndim < 2:
            raise DimensionMismatch("joint table needs at least one signal axis and the outcome axis")
        object.__setattr__(self, "prob", _frozen(P))

    @property
    def n(self) -> int:
        return self.prob.ndim - 1

    @property
    def signal_sizes(self) -> tuple[int, ...]:
        return tuple(self.prob.shape[:-1])

    @property
    def k(self) -> int:
        return self.prob.shape[-1]

    @cached_property
    def prior(self) -> np.ndarray:
        return _frozen(self.prob.reshape(-1, self.k).sum(axis=0))

    def expert_joint(self, i: int) -> np.ndarray:
        axes = tuple(a for a in range(self.n) if a != i)
        return self.prob.sum(axis=axes) if axes else self.prob

    @cached_property
    def support(self) -> "SupportArrays":
        return _support_arrays(self)


@dataclass(frozen=True, eq=False)
class CondIndepModel(_Structure):
    """Prior over outcomes plus ``cond[i][j, s] = P(s_i = s | omega = j)``."""

    prior_vec: np.ndarray
    cond: tuple[np.ndarray, ...] = field(default=())
    name: str = "cond_indep"

    def __post_init__(self):
        object.__setattr__(self, "prior_vec", _frozen(self.prior_vec))
        object.__setattr__(self, "cond", tuple(_frozen(c) for c in self.cond))

    @property
    def prior(self) -> np.ndarray:
        return self.prior_vec

    @property
    def n(self) -> int:
        return len(self.cond)

    @property
    def signal_sizes(self) -> tuple[int, ...]:
        return tuple(c.shape[1] for c in self.cond)

    @property
    def k(self) -> int:
        return self.prior_vec.size

    def expert_joint(self, i: int) -> np.ndarray:
        return (self.prior_vec[:, None] * self.cond[i]).T

    @property
    def exchangeable(self) -> bool:
        """True when all experts share one conditional table."""
        first = self.cond[0]
        return all(c.shape == first.shape and np.array_equal(c, first) for c in self.cond[1:])


Model = Union[DiscreteJoint, CondIndepModel]


def build_joint(n: int, signal_sizes: Sequence[int], k: int, prob_table, name: str = "joint") -> DiscreteJoint:
    """Validate a joint table and return it as an immutable model.

    ``prob_table`` may be nested to shape ``(*signal_sizes, k)`` or flat in C
    order. Sums within 1e-6 of one are renormalized; anything else is rejected.
    """
    sizes = tuple(int(m) for m in signal_sizes)
    OutcomeSpace(k)
    if n < 1 or len(sizes) != n or any(m < 1 for m in sizes):
        raise DimensionMismatch(f"need n >= 1 signal sizes >= 1, got n={n}, sizes={sizes}")
    P = np.asarray(prob_table, dtype=float)
    shape = sizes + (k,)
    if P.shape != shape:
        if P.ndim == 1 and P.size == int(np.prod(shape)):
            P = P.reshape(shape)
        else:
            raise DimensionMismatch(f"table shape {P.shape} does not match {shape}")
    if not np.all(np.isfinite(P)) or np.any(P < 0):
        raise NotADistribution("joint table has negative or non-finite entries")
    total = P.sum()
    if abs(total - 1.0) > RENORMALIZE_TOL:
        raise NotADistribution(f"joint table sums to {total!r}")
    return DiscreteJoint(P / total, name=name)


def build_cond_indep(prior, conditionals, name: str = "cond_indep") -> CondIndepModel:
    """Validate a prior and per-expert conditional tables.

    ``conditionals[i]`` is indexed ``[outcome][signal]``.
    """
    prior = np.asarray(prior, dtype=float)
    _check_prob_vector(prior, "prior")
    OutcomeSpace(prior.size)
    if len(conditionals) < 1:
        raise DimensionMismatch("need at least one expert")
    tables = []
    for i, c in enumerate(conditionals):
        c = np.asarray(c, dtype=float)
        if c.ndim != 2 or c.shape[0] != prior.size or c.shape[1] < 1:
            raise DimensionMismatch(f"expert {i}: conditional table must be k x m_i")
        for j in range(prior.size):
            _check_prob_vector(c[j], f"expert {i} conditional for outcome {j}")
        tables.append(c)
    return CondIndepModel(prior, tuple(tables), name=name)


def to_joint(model: CondIndepModel, cap: int = DEFAULT_CELL_CAP) -> DiscreteJoint:
    """Expand the product measure into a full table."""
    if isinstance(model, DiscreteJoint):
        return model
    cells = int(np.prod(model.signal_sizes, dtype=object)) * model.k
    if cells > cap:
        raise SupportTooLarge(f"{cells} cells exceed the cap of {cap}")
    table = np.array(model.prior, dtype=float)
    for c in reversed(model.cond):
        m_i = c.shape[1]
        table = c.T.reshape((m_i,) + (1,) * (table.ndim - 1) + (model.k,)) * table[None, ...]
    return DiscreteJoint(table, name=model.name)


def expert_report(model: Model, i: int, s_i: int) -> np.ndarray:
    """Posterior outcome distribution of expert ``i`` after seeing ``s_i``."""
    if not 0 <= i < model.n:
        raise DimensionMismatch(f"expert index {i} out of range")
    if not 0 <= s_i < model.signal_sizes[i]:
        raise DimensionMismatch(f"signal {s_i} out of range for expert {i}")
    row = model.report_tables[i][s_i]
    if np.isnan(row[0]):
        raise ZeroProbabilitySignal(f"expert {i} signal {s_i} has zero marginal probability")
    return np.array(row)


# ---------------------------------------------------------------------------
# exact support of (profile, outcome)


@dataclass(frozen=True, eq=False)
class SupportArrays:
    reports: np.ndarray  # (S, n, k)
    outcomes: np.ndarray  # (S,)
    probs: np.ndarray  # (S,)
    signals: np.ndarray  # (S, n) representative joint signal per entry


@dataclass(frozen=True, eq=False)
class SupportEntry:
    profile: ReportProfile
    outcome: int
    prob: float


def _signal_grid(sizes: tuple[int, ...]) -> np.ndarray:
    return np.indices(sizes).reshape(len(sizes), -1).T


def _support_arrays(joint: DiscreteJoint, cap: int = DEFAULT_CELL_CAP) -> SupportArrays:
    cells = int(np.prod(joint.signal_sizes, dtype=object)) * joint.k
    if cells > cap:
        raise SupportTooLarge(f"{cells} cells exceed the cap of {cap}")
    grid = _signal_grid(joint.signal_sizes)
    R = np.stack([joint.report_tables[i][grid[:, i]] for i in range(joint.n)], axis=1)
    P = joint.prob.reshape(-1, joint.k)
    cell, omega = np.nonzero(P > 0)
    R = R[cell]
    probs = P[cell, omega]
    keyed = np.concatenate(
        [np.round(R.reshape(len(cell), -1), PROFILE_DECIMALS) + 0.0, omega[:, None].astype(float)],
        axis=1,
    )
    _, first, inverse = np.unique(keyed, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.ravel()
    mass = np.bincount(inverse, weights=probs, minlength=len(first))
    order = np.argsort(first, kind="stable")
    pick = first[order]
    return SupportArrays(
        reports=_frozen(R[pick]),
        outcomes=omega[pick].astype(int),
        probs=_frozen(mass[order]),
        signals=grid[cell[pick]],
    )


def report_support(joint: Model, cap: int = DEFAULT_CELL_CAP) -> list[SupportEntry]:
    """Exact distribution of (report profile, outcome), merging equal profiles."""
    if isinstance(joint, CondIndepModel):
        joint = to_joint(joint, cap)
    sup = joint.support if cap == DEFAULT_CELL_CAP else _support_arrays(joint, cap)
    return [
        SupportEntry(ReportProfile(sup.reports[t]), int(sup.outcomes[t]), float(sup.probs[t]))
        for t in range(len(sup.probs))
    ]


# ---------------------------------------------------------------------------
# samples


@dataclass(frozen=True, eq=False)
class SampleSet:
    """T records of (report profile, outcome), stored as arrays."""

    reports: np.ndarray  # (T, n, k)
    outcomes: np.ndarray  # (T,)
    seed: int | None = None
    source: str = ""

    def __post_init__(self):
        R = np.asarray(self.reports, dtype=float)
        w = np.asarray(self.outcomes)
        if R.ndim != 3 or w.ndim != 1 or R.shape[0] != w.shape[0]:
            raise DimensionMismatch("reports must be (T, n, k) and outcomes (T,)")
        if w.size and (w.min() < 0 or w.max() >= R.shape[2]):
            raise DimensionMismatch("outcome outside [0, k)")
        if R.size and np.any(np.abs(R.sum(axis=2) - 1.0) > VALIDATE_TOL):
            raise NotADistribution("sample report rows must sum to 1")
        object.__setattr__(self, "reports", _frozen(R))
        w = np.array(w, dtype=np.int64)
        w.setflags(write=False)
        object.__setattr__(self, "outcomes", w)

    def __len__(self) -> int:
        return self.outcomes.shape[0]

    @property
    def T(self) -> int:
        return len(self)

    @property
    def n(self) -> int:
        return self.reports.shape[1]

    @property
    def k(self) -> int:
        return self.reports.shape[2]

    @property
    def r(self) -> np.ndarray:
        """Binary view, shape ``(T, n)``."""
        if self.k != 2:
            raise DimensionMismatch("scalar reports only exist for binary outcomes")
        return self.reports[:, :, 1]

    @property
    def records(self) -> Iterator[tuple[ReportProfile, int]]:
        for t in range(len(self)):
            yield ReportProfile(self.reports[t]), int(self.outcomes[t])

    def slice(self, start: int, stop: int) -> "SampleSet":
        return SampleSet(self.reports[start:stop], self.outcomes[start:stop], self.seed, self.source)

    @classmethod
    def from_records(cls, records, seed=None, source="") -> "SampleSet":
        records = list(records)
        if not records:
            raise DimensionMismatch("cannot infer shape from zero records; use the array constructor")
        R = np.stack([np.asarray(p.reports if isinstance(p, ReportProfile) else p) for p, _ in records])
        w = np.array([o for _, o in records], dtype=np.int64)
        return cls(R, w, seed, source)


def sample(model: Model, T: int, seed: int, substream: tuple = ()) -> SampleSet:
    """Draw T i.i.d. (profile, outcome) records; pure given (model, T, seed, substream)."""
    if T < 0:
        raise ValueError("T must be non-negative")
    rng = stream(seed, "sample", *substream)
    n, k = model.n, model.k
    if isinstance(model, DiscreteJoint):
        flat = model.prob.ravel()
        cells = rng.choice(flat.size, size=T, p=flat)
        idx = np.unravel_index(cells, model.prob.shape)
        signals = np.stack(idx[:-1], axis=1) if T else np.zeros((0, n), dtype=int)
        omega = idx[-1]
    else:
        omega = rng.choice(k, size=T, p=model.prior)
        u = rng.random((T, n))
        signals = np.empty((T, n), dtype=np.int64)
        for i, c in enumerate(model.cond):
            cum = np.cumsum(c, axis=1)
            s = (u[:, i, None] >= cum[omega]).sum(axis=1)
            signals[:, i] = np.minimum(s, c.shape[1] - 1)
    R = np.empty((T, n, k))
    for i in range(n):
        R[:, i, :] = model.report_tables[i][signals[:, i]]
    return SampleSet(R, omega, seed, model.name)


# ---------------------------------------------------------------------------
# random model generators


def random_joint(n: int, m: int | Sequence[int], k: int, rng: np.random.Generator, alpha: float = 1.0) -> DiscreteJoint:
    sizes = (m,) * n if np.isscalar(m) else tuple(m)
    cells = int(np.prod(sizes)) * k
    table = rng.dirichlet(np.full(cells, alpha))
    return build_joint(n, sizes, k, table, name=f"random_joint(n={n},m={sizes},k={k})")


def random_cond_indep(
    n: int,
    m: int | Sequence[int],
    k: int,
    rng: np.random.Generator,
    p_range: tuple[float, float] = (0.1, 0.9),
    alpha: float = 1.0,
) -> CondIndepModel:
    """Random cond-indep model; binary priors uniform in ``p_range``, Dirichlet otherwise."""
    sizes = (m,) * n if np.isscalar(m) else tuple(m)
    if k == 2:
        p = rng.uniform(*p_range)
        prior = np.array([1.0 - p, p])
    else:
        prior = rng.dirichlet(np.ones(k))
    cond = [rng.dirichlet(np.full(mi, alpha), size=k) for mi in sizes]
    return build_cond_indep(prior, cond, name=f"random_cond_indep(n={n},m={sizes},k={k})")


def xor_joint() -> DiscreteJoint:
    """omega = s_1 xor s_2 with independent uniform bits."""
    table = np.zeros((2, 2, 2))
    for a in range(2):
        for b in range(2):
            table[a, b, a ^ b] = 0.25
    return build_joint(2, (2, 2), 2, table, name="xor")


def symmetric_binary_model(n: int, accuracy: float, p: float = 0.5) -> CondIndepModel:
    """Each expert sees the outcome through a binary symmetric channel."""
    c = np.array([[accuracy, 1.0 - accuracy], [1.0 - accuracy, accuracy]])
    return build_cond_indep([1.0 - p, p], [c] * n, name=f"symmetric(n={n},acc={accuracy},p={p})")


def weak_binary_model(n: int, gamma: float, p: float = 0.5) -> CondIndepModel:
    """Binary experts whose likelihood ratios are exactly 1+gamma and 1/(1+gamma).

    P(s=1 | omega=1) = (1+gamma)/(2+gamma) and P(s=1 | omega=0) = 1/(2+gamma),
    the widest symmetric perturbation of the fair coin that stays
    gamma-weakly informative.
    """
    hi, lo = (1.0 + gamma) / (2.0 + gamma), 1.0 / (2.0 + gamma)
    c = np.array([[1.0 - lo, lo], [1.0 - hi, hi]])
    return build_cond_indep([1.0 - p, p], [c] * n, name=f"weak(n={n},gamma={gamma},p={p})")


# ---------------------------------------------------------------------------
# persistence


def model_to_dict(model: Model) -> dict:
    base = {"n": model.n, "signal_sizes": list(model.signal_sizes), "k": model.k}
    if isinstance(model, DiscreteJoint):
        return {"kind": "joint", **base, "prob": model.prob.tolist()}
    return {
        "kind": "cond_indep",
        **base,
        "prob": {"prior": model.prior.tolist(), "cond": [c.tolist() for c in model.cond]},
    }


def model_from_dict(d: dict) -> Model:
    kind = d.get("kind")
    name = d.get("name", kind or "model")
    if kind == "joint":
        return build_joint(d["n"], d["signal_sizes"], d["k"], d["prob"], name=name)
    if kind == "cond_indep":
        body = d["prob"] if "prob" in d else d
        model = build_cond_indep(body["prior"], body["cond"], name=name)
        if model.n != d.get("n", model.n) or list(model.signal_sizes) != list(d.get("signal_sizes", model.signal_sizes)):
            raise DimensionMismatch("declared n / signal_sizes disagree with the tables")
        return model
    raise DimensionMismatch(f"unknown model kind {kind!r}")


def save_model(model: Model, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), sort_keys=True) + "\n")


def load_model(path: str | Path) -> Model:
    return model_from_dict(json.loads(Path(path).read_text()))


def samples_to_csv(samples: SampleSet, binary: bool | None = None) -> str:
    """Render samples as CSV text (LF line endings, shortest round-trip floats)."""
    if binary is None:
        binary = samples.k == 2
    n, k = samples.n, samples.k
    if binary:
        header = ["trial", "omega"] + [f"r_{i + 1}" for i in range(n)]
        body = samples.r
    else:
        header = ["trial", "omega"] + [f"r_{i + 1}_{j + 1}" for i in range(n) for j in range(k)]
        body = samples.reports.reshape(len(samples), -1)
    lines = [",".join(header)]
    for t in range(len(samples)):
        vals = ",".join(repr(float(x)) for x in body[t])
        lines.append(f"{t},{int(samples.outcomes[t])}" + ("," + vals if vals else ""))
    return "\n".join(lines) + "\n"


def samples_from_csv(text: str, seed: int | None = None, source: str = "csv") -> SampleSet:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0][:2] != ["trial", "omega"]:
        raise DimensionMismatch("sample CSV must start with header trial,omega,...")
    cols = rows[0][2:]
    data = np.array([[float(x) for x in row[2:]] for row in rows[1:]], dtype=float)
    omega = np.array([int(row[1]) for row in rows[1:]], dtype=np.int64)
    parts = [c.split("_") for c in cols]
    T = len(rows) - 1
    if all(len(p) == 2 for p in parts):
        n = len(cols)
        r = data.reshape(T, n)
        R = np.stack([1.0 - r, r], axis=2)
    elif all(len(p) == 3 for p in parts):
        n = max(int(p[1]) for p in parts)
        k = max(int(p[2]) for p in parts)
        if n * k != len(cols):
            raise DimensionMismatch("sample CSV columns do not form an n x k grid")
        R = data.reshape(T, n, k)
    else:
        raise DimensionMismatch("unrecognised report columns in sample CSV")
    return SampleSet(R, omega, seed, source)

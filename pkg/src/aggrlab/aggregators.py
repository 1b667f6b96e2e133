"""Aggregator objects and the closed-form aggregators.

Every aggregator maps report profiles to outcome distributions through
:meth:`Aggregator.distribution`, which accepts a single ``(n, k)`` profile or
a ``(T, n, k)`` batch. :meth:`Aggregator.apply` returns the probability of
outcome 1 as a scalar when k = 2 and the full vector otherwise.

Likelihood products are evaluated as sums of logs. A report of exactly 0 or
1 contributes an infinite term, and a row that mixes +inf with -inf is a
:class:`~aggrlab.errors.ContradictoryReports`.
"""

from __future__ import annotations

import json
from typing import Callable

import numpy as np
from scipy.special import expit

from .errors import (
    AllZeroLikelihood,
    ContradictoryReports,
    DimensionMismatch,
    UnseenProfile,
)
from .model import (
    PROFILE_DECIMALS,
    CondIndepModel,
    DiscreteJoint,
    Model,
    ReportProfile,
    profile_keys,
    to_joint,
)


def _as_batch(reports) -> tuple[np.ndarray, bool]:
    if isinstance(reports, ReportProfile):
        return reports.reports[None, ...], True
    R = np.asarray(reports, dtype=float)
    if R.ndim == 1:
        return np.stack([1.0 - R, R], axis=1)[None, ...], True
    if R.ndim == 2:
        return R[None, ...], True
    if R.ndim == 3:
        return R, False
    raise DimensionMismatch(f"cannot interpret reports of shape {R.shape}")


def binary_batch(r) -> np.ndarray:
    """Turn a ``(T, n)`` array of scalar reports into ``(T, n, 2)`` profiles."""
    r = np.asarray(r, dtype=float)
    return np.stack([1.0 - r, r], axis=-1)


def log_odds(R: np.ndarray) -> np.ndarray:
    """log(r_i1 / r_i0) per row of a binary batch, with +-inf at the boundary."""
    with np.errstate(divide="ignore"):
        return np.log(R[..., 1]) - np.log(R[..., 0])


class Aggregator:
    """Base class; subclasses implement ``_batch`` on ``(T, n, k)`` arrays."""

    kind = "abstract"

    def __init__(self, k: int | None = None, n: int | None = None, default_output=None):
        self.k = k
        self.n = n
        self.default_output = None if default_output is None else np.asarray(default_output, dtype=float)

    def distribution(self, reports) -> np.ndarray:
        R, single = _as_batch(reports)
        if self.n is not None and R.shape[1] != self.n:
            raise DimensionMismatch(f"{self.kind} expects {self.n} experts, got {R.shape[1]}")
        if self.k is not None and R.shape[2] != self.k:
            raise DimensionMismatch(f"{self.kind} expects {self.k} outcomes, got {R.shape[2]}")
        out = self._batch(R) if R.shape[0] else np.zeros((0, R.shape[2]))
        return out[0] if single else out

    def apply(self, reports):
        out = self.distribution(reports)
        if out.shape[-1] == 2:
            v = out[..., 1]
            return float(v) if v.ndim == 0 else v
        return out

    __call__ = apply

    def _batch(self, R: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def params(self) -> dict:
        return {}

    def to_dict(self) -> dict:
        d = self.default_output
        return {
            "kind": self.kind,
            "params": self.params(),
            "default_output": None if d is None else d.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def __repr__(self) -> str:
        return f"<{type(self).__name__} kind={self.kind}>"


class ScalarAggregator(Aggregator):
    """Binary aggregator defined by a scalar rule; wrapped as (1 - v, v)."""

    def __init__(self, n: int | None = None):
        super().__init__(k=2, n=n)

    def _scalar(self, R: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _batch(self, R: np.ndarray) -> np.ndarray:
        v = self._scalar(R)
        return np.stack([1.0 - v, v], axis=1)


# ---------------------------------------------------------------------------
# lookup tables


class TableAggregator(Aggregator):
    """Lookup table keyed by rounded report profile."""

    def __init__(self, kind: str, k: int, n: int, profiles: np.ndarray, outputs: np.ndarray, default_output=None):
        super().__init__(k=k, n=n, default_output=default_output)
        self.kind = kind
        profiles = np.asarray(profiles, dtype=float).reshape(-1, n, k)
        outputs = np.asarray(outputs, dtype=float).reshape(-1, k)
        self.profiles = profiles
        self.outputs = outputs
        keys = profile_keys(profiles) if len(profiles) else []
        self._index = {key.tobytes(): t for t, key in enumerate(keys)}

    def __len__(self) -> int:
        return len(self._index)

    def lookup(self, profile) -> np.ndarray | None:
        R, _ = _as_batch(profile)
        t = self._index.get(profile_keys(R)[0].tobytes())
        return None if t is None else self.outputs[t]

    def _batch(self, R: np.ndarray) -> np.ndarray:
        keys = profile_keys(R)
        uniq, inverse = np.unique(keys, return_inverse=True)
        rows = np.empty((len(uniq), R.shape[2]))
        for u, key in enumerate(uniq):
            t = self._index.get(key.tobytes())
            if t is not None:
                rows[u] = self.outputs[t]
            elif self.default_output is not None:
                rows[u] = self.default_output
            else:
                first = int(np.flatnonzero(inverse.ravel() == u)[0])
                raise UnseenProfile(f"{self.kind}: profile {R[first].tolist()} is not in the table")
        return rows[inverse.ravel()]

    def params(self) -> dict:
        rounded = np.round(self.profiles, PROFILE_DECIMALS) + 0.0
        return {
            "k": self.k,
            "n": self.n,
            "table": [
                {"profile": rounded[t].tolist(), "output": self.outputs[t].tolist()}
                for t in range(len(self.outputs))
            ],
        }


def conditional_table(reports: np.ndarray, outcomes: np.ndarray, weights: np.ndarray, k: int):
    """Group rows by profile key and return (profiles, conditional outcome frequencies)."""
    keys = profile_keys(reports)
    _, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
    inverse = inverse.ravel()
    mass = np.zeros((len(first), k))
    np.add.at(mass, (inverse, outcomes), weights)
    order = np.argsort(first, kind="stable")
    mass = mass[order]
    return reports[first[order]], mass / mass.sum(axis=1, keepdims=True)


def bayes_optimal(model: Model) -> TableAggregator:
    """Exact posterior P(omega | profile) on the model's report support."""
    joint = to_joint(model) if isinstance(model, CondIndepModel) else model
    sup = joint.support
    profiles, outputs = conditional_table(sup.reports, sup.outcomes, sup.probs, joint.k)
    return TableAggregator("bayes_optimal", joint.k, joint.n, profiles, outputs, default_output=None)


# ---------------------------------------------------------------------------
# closed forms


class BordleyAggregator(ScalarAggregator):
    """f(r) = 1 / (1 + theta^(n-1) * prod_i (1 - r_i) / r_i)."""

    kind = "bordley_theta"

    def __init__(self, theta: float, n: int, kind: str | None = None, extra: dict | None = None):
        if not (np.isfinite(theta) and theta > 0):
            raise ValueError(f"theta must be positive and finite, got {theta}")
        if n < 1:
            raise DimensionMismatch("need at least one expert")
        super().__init__(n=n)
        self.theta = float(theta)
        if kind is not None:
            self.kind = kind
        self.extra = dict(extra or {})

    def _scalar(self, R: np.ndarray) -> np.ndarray:
        terms = -log_odds(R)  # log((1 - r_i) / r_i)
        pos = np.isposinf(terms).any(axis=1)
        neg = np.isneginf(terms).any(axis=1)
        if np.any(pos & neg):
            raise ContradictoryReports("profile contains both a 0 report and a 1 report")
        total = (self.n - 1) * np.log(self.theta) + terms.sum(axis=1)
        return expit(-total)

    def params(self) -> dict:
        return {"theta": self.theta, "n": self.n, **self.extra}


def bordley(theta: float, n: int) -> BordleyAggregator:
    return BordleyAggregator(theta, n)


class MultiBordleyAggregator(Aggregator):
    """f_j(r) proportional to theta_j * prod_i r_ij, stored as log theta."""

    kind = "multi_theta"

    def __init__(self, log_theta, extra: dict | None = None):
        log_theta = np.asarray(log_theta, dtype=float)
        if log_theta.ndim != 1 or log_theta.size < 2 or not np.all(np.isfinite(log_theta)):
            raise ValueError("log theta must be a finite vector of length k >= 2")
        super().__init__(k=log_theta.size)
        self.log_theta = log_theta
        self.extra = dict(extra or {})

    @property
    def theta(self) -> np.ndarray:
        return np.exp(self.log_theta)

    def _batch(self, R: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore"):
            logits = np.log(R).sum(axis=1) + self.log_theta
        top = logits.max(axis=1, keepdims=True)
        if np.any(np.isneginf(top)):
            raise AllZeroLikelihood("every outcome has zero likelihood under this profile")
        w = np.exp(logits - top)
        return w / w.sum(axis=1, keepdims=True)

    def params(self) -> dict:
        return {"log_theta": self.log_theta.tolist(), **self.extra}


def multi_bordley(theta) -> MultiBordleyAggregator:
    theta = np.asarray(theta, dtype=float)
    if np.any(theta <= 0) or not np.all(np.isfinite(theta)):
        raise ValueError("theta entries must be positive and finite")
    return MultiBordleyAggregator(np.log(theta))


class AveragingAggregator(Aggregator):
    kind = "averaging"

    def _batch(self, R: np.ndarray) -> np.ndarray:
        return R.mean(axis=1)


def averaging() -> AveragingAggregator:
    return AveragingAggregator()


class ConstantAggregator(Aggregator):
    kind = "constant"

    def __init__(self, output):
        output = np.asarray(output, dtype=float)
        super().__init__(k=output.size)
        self.output = output

    def _batch(self, R: np.ndarray) -> np.ndarray:
        return np.broadcast_to(self.output, (R.shape[0], self.k)).copy()

    def params(self) -> dict:
        return {"output": self.output.tolist()}


def constant(output) -> ConstantAggregator:
    """Aggregator that ignores the reports; a scalar v means (1 - v, v)."""
    output = np.atleast_1d(np.asarray(output, dtype=float))
    if output.size == 1:
        output = np.array([1.0 - output[0], output[0]])
    return ConstantAggregator(output)


class ThresholdAggregator(ScalarAggregator):
    """Counts experts on one side of the odds threshold and outputs 0 or 1."""

    kind = "strong_informative"

    def __init__(self, rho_hat: float, u: int, M: float, a: float, n: int):
        super().__init__(n=n)
        self.rho_hat, self.u, self.M, self.a = float(rho_hat), int(u), float(M), float(a)

    def counts(self, R: np.ndarray) -> np.ndarray:
        lo = log_odds(R)
        thr = np.log(self.rho_hat)
        side = lo > thr if self.u == 1 else lo < thr
        return side.sum(axis=1)

    def _scalar(self, R: np.ndarray) -> np.ndarray:
        hit = self.counts(R) > self.M
        return np.where(hit, float(self.u), float(1 - self.u))

    def params(self) -> dict:
        return {"rho_hat": self.rho_hat, "u": self.u, "M": self.M, "a": self.a, "n": self.n}


class FunctionAggregator(Aggregator):
    """Wraps a vectorised callable ``(T, n, k) -> (T, k)``; not serialisable."""

    kind = "function"

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], k: int | None = None, n: int | None = None):
        super().__init__(k=k, n=n)
        self.fn = fn

    def _batch(self, R: np.ndarray) -> np.ndarray:
        return np.asarray(self.fn(R), dtype=float)


def true_optimal(model: Model) -> Aggregator:
    """The Bayes aggregator of a model; closed form for cond-indep models."""
    if isinstance(model, DiscreteJoint):
        return bayes_optimal(model)
    if np.any(model.prior <= 0):
        return bayes_optimal(model)
    if model.k == 2:
        return BordleyAggregator(model.rho, model.n)
    return MultiBordleyAggregator(-(model.n - 1) * np.log(model.prior))


# ---------------------------------------------------------------------------
# serialisation

_SCALAR_KINDS = {"bordley_theta", "weak_informative"}
_TABLE_KINDS = {"bayes_optimal", "empirical_erm", "empirical_bayes", "table"}


def aggregator_from_dict(d: dict) -> Aggregator:
    kind, params = d["kind"], dict(d.get("params", {}))
    default = d.get("default_output")
    if kind in _SCALAR_KINDS:
        theta, n = params.pop("theta"), params.pop("n")
        return BordleyAggregator(theta, n, kind=kind, extra=params)
    if kind == "multi_theta":
        return MultiBordleyAggregator(params.pop("log_theta"), extra=params)
    if kind == "averaging":
        return AveragingAggregator()
    if kind == "constant":
        return ConstantAggregator(params["output"])
    if kind == "strong_informative":
        return ThresholdAggregator(params["rho_hat"], params["u"], params["M"], params["a"], params["n"])
    if kind in _TABLE_KINDS:
        k, n = params["k"], params["n"]
        rows = params["table"]
        profiles = np.array([r["profile"] for r in rows], dtype=float).reshape(-1, n, k)
        outputs = np.array([r["output"] for r in rows], dtype=float).reshape(-1, k)
        return TableAggregator(kind, k, n, profiles, outputs, default_output=default)
    raise DimensionMismatch(f"unknown aggregator kind {kind!r}")


def aggregator_from_json(text: str) -> Aggregator:
    return aggregator_from_dict(json.loads(text))

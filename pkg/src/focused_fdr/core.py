"""Shared domain types and the elementary error-rate arithmetic.

All types are immutable value objects; indices are 0-based internally and
hypothesis ids are the canonical handle for anything that leaves memory.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "PValueVector",
    "RejectionSet",
    "PrioritizationVector",
    "GroundTruth",
    "ProcedureResult",
    "weighted_count",
    "generalized_fdp",
]


def _frozen_array(values, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PValueVector:
    """m p-values with their hypothesis identifiers."""

    values: np.ndarray
    ids: tuple[str, ...]

    def __init__(self, values, ids: Sequence[str] | None = None):
        arr = _frozen_array(values)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("need a nonempty 1-d vector of p-values")
        if np.any((arr < 0) | (arr > 1)) or not np.all(np.isfinite(arr)):
            raise ValueError("p-values must lie in [0, 1]")
        if ids is None:
            ids = tuple(f"h{i + 1}" for i in range(arr.size))
        else:
            ids = tuple(str(s) for s in ids)
        if len(ids) != arr.size:
            raise ValueError("ids and values must have the same length")
        if len(set(ids)) != len(ids):
            raise ValueError("hypothesis ids must be unique")
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "ids", ids)

    @property
    def m(self) -> int:
        return self.values.size

    def index_of(self, hypothesis_id: str) -> int:
        try:
            return self.ids.index(hypothesis_id)
        except ValueError:
            raise KeyError(f"unknown hypothesis id {hypothesis_id!r}") from None


@dataclass(frozen=True)
class RejectionSet:
    """A subset of {0..m-1}, exposed both as a set and as an indicator."""

    members: frozenset[int]
    m: int

    def __init__(self, members, m: int):
        members = frozenset(int(i) for i in members)
        if m < 1:
            raise ValueError("m must be at least 1")
        if members and (min(members) < 0 or max(members) >= m):
            raise ValueError("rejection set members must lie in {0..m-1}")
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "m", int(m))

    @classmethod
    def from_indicator(cls, indicator) -> "RejectionSet":
        ind = np.asarray(indicator, dtype=bool)
        return cls(np.flatnonzero(ind), ind.size)

    def indicator(self) -> np.ndarray:
        ind = np.zeros(self.m, dtype=bool)
        if self.members:
            ind[sorted(self.members)] = True
        return ind

    def __len__(self) -> int:
        return len(self.members)

    def __contains__(self, i: int) -> bool:
        return int(i) in self.members


@dataclass(frozen=True)
class PrioritizationVector:
    """Per-hypothesis scores in [0, 1], zero outside the generating set."""

    scores: np.ndarray

    def __init__(self, scores):
        arr = _frozen_array(scores)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("need a nonempty 1-d vector of scores")
        if np.any((arr < 0) | (arr > 1)) or not np.all(np.isfinite(arr)):
            raise ValueError("prioritization scores must lie in [0, 1]")
        object.__setattr__(self, "scores", arr)

    @property
    def m(self) -> int:
        return self.scores.size

    def support(self) -> frozenset[int]:
        return frozenset(np.flatnonzero(self.scores > 0).tolist())


@dataclass(frozen=True)
class GroundTruth:
    """Partition of the hypotheses into nulls and non-nulls."""

    nulls: frozenset[int]
    m: int
    nonnulls: frozenset[int] = field(init=False)

    def __init__(self, nulls, m: int):
        nulls = frozenset(int(i) for i in nulls)
        if m < 1:
            raise ValueError("m must be at least 1")
        if nulls and (min(nulls) < 0 or max(nulls) >= m):
            raise ValueError("null indices must lie in {0..m-1}")
        object.__setattr__(self, "nulls", nulls)
        object.__setattr__(self, "m", int(m))
        object.__setattr__(self, "nonnulls", frozenset(range(m)) - nulls)

    def null_indicator(self) -> np.ndarray:
        ind = np.zeros(self.m, dtype=bool)
        if self.nulls:
            ind[sorted(self.nulls)] = True
        return ind


@dataclass(frozen=True)
class ProcedureResult:
    """Outcome of a step-up run: threshold, pre- and post-filter output."""

    threshold: float
    pre_filter: RejectionSet
    post_filter: PrioritizationVector
    fdp_hat_trace: tuple[tuple[float, float], ...]

    @property
    def rejected(self) -> frozenset[int]:
        return self.pre_filter.members


def weighted_count(scores) -> float:
    """Total weighted number of discoveries: the sum of the scores."""
    if isinstance(scores, PrioritizationVector):
        scores = scores.scores
    return float(np.sum(np.asarray(scores, dtype=np.float64)))


def generalized_fdp(scores, truth: GroundTruth) -> float:
    """Fraction of the total prioritization weight placed on nulls.

    0/0 is 0 by convention, so an empty prioritization is error-free.
    """
    if isinstance(scores, PrioritizationVector):
        scores = scores.scores
    arr = np.asarray(scores, dtype=np.float64)
    if arr.size != truth.m:
        raise ValueError("scores and ground truth cover different m")
    total = float(arr.sum())
    if total == 0.0:
        return 0.0
    null_part = float(arr[truth.null_indicator()].sum())
    return null_part / total

"""Step-up multiple testing procedures, filter-aware and otherwise.

All threshold scans run over the grid {0, p_1, ..., p_m}.  Feasibility of a
threshold t is decided by the cross-multiplied comparison

    Vhat(t) <= q * ||filter({j: p_j <= t}, p)||

which avoids divisions and makes the classical sorted-scan BH and the
filtered scan agree bit for bit on the trivial filter.  The zero threshold
is always feasible, so every procedure is well defined.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import PrioritizationVector, ProcedureResult, PValueVector, RejectionSet
from .filters import Filter, StructureClass

__all__ = [
    "ReshapingFunction",
    "by_reshaping",
    "identity_reshaping",
    "CountingVhat",
    "StoreyCountingVhat",
    "PermutationVhat",
    "OracleVhat",
    "bh",
    "focused_bh",
    "focused_storey_bh",
    "focused_reshaped_bh",
    "focused_bh_with_vhat",
    "structured_bh",
    "multi_focus_bh",
    "storey_m0",
]


def _threshold_grid(p: np.ndarray) -> np.ndarray:
    return np.unique(np.concatenate([[0.0], p]))


def _fdp_values(vhat: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """FDP estimates for the trace, with 0/0 = 0 and x/0 = inf."""
    out = np.empty(vhat.size)
    zero = vhat == 0
    dead = (counts == 0) & ~zero
    ok = ~zero & ~dead
    out[zero] = 0.0
    out[dead] = np.inf
    out[ok] = vhat[ok] / counts[ok]
    return out


def _finish(
    p: PValueVector,
    filt: Filter,
    grid: np.ndarray,
    counts: np.ndarray,
    vhat: np.ndarray,
    feasible: np.ndarray,
) -> ProcedureResult:
    feasible = feasible.copy()
    feasible[0] = True  # t = 0 is always allowed
    t_star = float(grid[np.flatnonzero(feasible)[-1]])
    rejected = p.values <= t_star
    scores = filt.apply(rejected, p.values)
    trace = tuple(zip(grid.tolist(), _fdp_values(vhat, counts).tolist()))
    return ProcedureResult(
        threshold=t_star,
        pre_filter=RejectionSet.from_indicator(rejected),
        post_filter=PrioritizationVector(scores),
        fdp_hat_trace=trace,
    )


def bh(p: PValueVector, q: float) -> ProcedureResult:
    """Classical step-up procedure via the sorted scan."""
    if not (0 < q < 1):
        raise ValueError("q must lie in (0, 1)")
    m = p.m
    sorted_p = np.sort(p.values)
    ks = np.arange(1, m + 1, dtype=np.float64)
    feasible_k = m * sorted_p <= q * ks
    t_star = float(sorted_p[np.flatnonzero(feasible_k)[-1]]) if feasible_k.any() else 0.0
    rejected = p.values <= t_star
    grid = _threshold_grid(p.values)
    counts = np.searchsorted(sorted_p, grid, side="right").astype(np.float64)
    vhat = m * grid
    trace = tuple(zip(grid.tolist(), _fdp_values(vhat, counts).tolist()))
    return ProcedureResult(
        threshold=t_star,
        pre_filter=RejectionSet.from_indicator(rejected),
        post_filter=PrioritizationVector(rejected.astype(np.float64)),
        fdp_hat_trace=trace,
    )


def focused_bh(p: PValueVector, q: float, filt: Filter) -> ProcedureResult:
    """Step-up scan of m*t against the filtered discovery count."""
    if not (0 < q < 1):
        raise ValueError("q must lie in (0, 1)")
    grid = _threshold_grid(p.values)
    counts = filt.count_curve(p.values, grid)
    vhat = p.m * grid
    return _finish(p, filt, grid, counts, vhat, vhat <= q * counts)


def storey_m0(p: PValueVector, lam: float) -> float:
    """Adaptive null-count estimate (1 + #{p_j > lambda}) / (1 - lambda)."""
    if not (0 < lam < 1):
        raise ValueError("lambda must lie in (0, 1)")
    return (1.0 + float((p.values > lam).sum())) / (1.0 - lam)


def focused_storey_bh(
    p: PValueVector, q: float, filt: Filter, lam: float | None = None, cap_m0: bool = False
) -> ProcedureResult:
    """Adaptive variant: scales t by the estimated null count, caps t at lambda.

    lambda defaults to q, the stable choice under dependent p-values.  The
    null-count estimate is not capped at m unless asked for.
    """
    if not (0 < q < 1):
        raise ValueError("q must lie in (0, 1)")
    if lam is None:
        lam = q
    m0_hat = storey_m0(p, lam)
    if cap_m0:
        m0_hat = min(m0_hat, float(p.m))
    full_grid = _threshold_grid(p.values)
    grid = full_grid[full_grid <= lam]
    counts = filt.count_curve(p.values, grid)
    vhat = m0_hat * grid
    return _finish(p, filt, grid, counts, vhat, vhat <= q * counts)


@dataclass(frozen=True)
class ReshapingFunction:
    """Nondecreasing deflator with beta(u) <= u and beta(0) = 0."""

    evaluate: Callable[[float], float]
    label: str

    def __post_init__(self):
        if self.evaluate(0.0) != 0.0:
            raise ValueError("a reshaping function must map 0 to 0")


def identity_reshaping() -> ReshapingFunction:
    return ReshapingFunction(lambda u: u, "identity")


def by_reshaping(m: int) -> ReshapingFunction:
    """Harmonic-sum deflator beta(u) = u / (1 + 1/2 + ... + 1/m)."""
    if m < 1:
        raise ValueError("m must be at least 1")
    harmonic = math.fsum(1.0 / i for i in range(1, m + 1))
    return ReshapingFunction(lambda u: u / harmonic, f"by[{m}]")


def focused_reshaped_bh(
    p: PValueVector, q: float, filt: Filter, beta: ReshapingFunction
) -> ProcedureResult:
    """Conservative variant for arbitrary dependence: deflates the count."""
    if not (0 < q < 1):
        raise ValueError("q must lie in (0, 1)")
    grid = _threshold_grid(p.values)
    counts = filt.count_curve(p.values, grid)
    reshaped = np.array([beta.evaluate(float(c)) for c in counts])
    vhat = p.m * grid
    return _finish(p, filt, grid, reshaped, vhat, vhat <= q * reshaped)


class CountingVhat:
    """The baseline estimate m * t of the number of rejected nulls."""

    def evaluate(self, grid: np.ndarray, p: PValueVector, filt: Filter) -> np.ndarray:
        return p.m * grid


class StoreyCountingVhat:
    """Adaptive counting estimate m0_hat(lambda) * t (no threshold cap)."""

    def __init__(self, lam: float):
        if not (0 < lam < 1):
            raise ValueError("lambda must lie in (0, 1)")
        self.lam = lam

    def evaluate(self, grid: np.ndarray, p: PValueVector, filt: Filter) -> np.ndarray:
        return storey_m0(p, self.lam) * grid


class PermutationVhat:
    """Average filtered discovery count across permuted p-value rows."""

    def __init__(self, perm_pvalues: np.ndarray):
        perm = np.asarray(perm_pvalues, dtype=np.float64)
        if perm.ndim != 2 or perm.shape[0] < 1:
            raise ValueError("need a B x m matrix with at least one permutation row")
        if np.any((perm < 0) | (perm > 1)):
            raise ValueError("permuted p-values must lie in [0, 1]")
        self.perm_pvalues = perm

    @property
    def n_permutations(self) -> int:
        return self.perm_pvalues.shape[0]

    def evaluate(self, grid: np.ndarray, p: PValueVector, filt: Filter) -> np.ndarray:
        if self.perm_pvalues.shape[1] != p.m:
            raise ValueError("permutation matrix has the wrong number of columns")
        total = np.zeros(grid.size)
        for row in self.perm_pvalues:
            total += filt.count_curve(row, grid)
        return total / self.n_permutations


class OracleVhat:
    """Monte Carlo estimate of E[null weight kept at threshold t].

    Built once from fresh datasets drawn under the true distribution and
    then evaluated as a step function on any observed grid.
    """

    def __init__(self, jump_ts: np.ndarray, values_after: np.ndarray):
        self.jump_ts = np.asarray(jump_ts, dtype=np.float64)
        self.values_after = np.asarray(values_after, dtype=np.float64)
        if self.values_after.size != self.jump_ts.size + 1:
            raise ValueError("need one more value than jump points")

    @classmethod
    def estimate(
        cls,
        sample_pvalues: Callable[[np.random.Generator], np.ndarray],
        null_indicator: np.ndarray,
        filt: Filter,
        n_mc: int,
        rng: np.random.Generator,
    ) -> "OracleVhat":
        null_indicator = np.asarray(null_indicator, dtype=bool)
        all_ts = []
        all_deltas = []
        for _ in range(n_mc):
            ptilde = np.asarray(sample_pvalues(rng), dtype=np.float64)
            own_grid = np.unique(ptilde)
            vals = filt.null_count_curve(ptilde, own_grid, null_indicator)
            deltas = np.diff(np.concatenate([[0.0], vals]))
            keep = deltas != 0
            all_ts.append(own_grid[keep])
            all_deltas.append(deltas[keep] / n_mc)
        ts = np.concatenate(all_ts) if all_ts else np.empty(0)
        deltas = np.concatenate(all_deltas) if all_deltas else np.empty(0)
        order = np.argsort(ts, kind="stable")
        return cls(ts[order], np.concatenate([[0.0], np.cumsum(deltas[order])]))

    def evaluate(self, grid: np.ndarray, p: PValueVector, filt: Filter) -> np.ndarray:
        pos = np.searchsorted(self.jump_ts, np.asarray(grid, dtype=np.float64), side="right")
        return self.values_after[pos]


def focused_bh_with_vhat(p: PValueVector, q: float, filt: Filter, vhat) -> ProcedureResult:
    """Step-up scan with a pluggable estimate of the rejected-null weight."""
    if not (0 < q < 1):
        raise ValueError("q must lie in (0, 1)")
    grid = _threshold_grid(p.values)
    counts = filt.count_curve(p.values, grid)
    v = np.asarray(vhat.evaluate(grid, p, filt), dtype=np.float64)
    return _finish(p, filt, grid, counts, v, v <= q * counts)


def structured_bh(p: PValueVector, q: float, structure: StructureClass) -> RejectionSet:
    """Largest acceptable set whose worst member p-value passes the bound.

    Ties in cardinality break toward the lexicographically smallest sorted
    index tuple, mirroring the structure-induced filter.
    """
    if not (0 < q < 1):
        raise ValueError("q must lie in (0, 1)")
    m = p.m
    best: frozenset[int] | None = None
    best_key = None
    for s in structure.sets(m):
        worst = max((p.values[j] for j in s), default=0.0)
        if m * worst <= q * len(s):
            key = (-len(s), tuple(sorted(s)))
            if best_key is None or key < best_key:
                best, best_key = s, key
    if best is None:
        raise ValueError("structure class does not contain the empty set")
    return RejectionSet(best, m)


def multi_focus_bh(
    p: PValueVector, filters: Sequence[Filter], qs: Sequence[float]
) -> list[ProcedureResult]:
    """Common threshold satisfying every filter's FDP bound simultaneously."""
    if len(filters) != len(qs) or not filters:
        raise ValueError("need one target level per filter")
    if any(not (0 < q < 1) for q in qs):
        raise ValueError("every q must lie in (0, 1)")
    grid = _threshold_grid(p.values)
    m = p.m
    vhat = m * grid
    all_counts = [f.count_curve(p.values, grid) for f in filters]
    feasible = np.ones(grid.size, dtype=bool)
    for q, counts in zip(qs, all_counts):
        feasible &= vhat <= q * counts
    feasible[0] = True
    t_star = float(grid[np.flatnonzero(feasible)[-1]])
    rejected = p.values <= t_star
    results = []
    for f, counts in zip(filters, all_counts):
        scores = f.apply(rejected, p.values)
        trace = tuple(zip(grid.tolist(), _fdp_values(vhat, counts).tolist()))
        results.append(
            ProcedureResult(
                threshold=t_star,
                pre_filter=RejectionSet.from_indicator(rejected),
                post_filter=PrioritizationVector(scores),
                fdp_hat_trace=trace,
            )
        )
    return results

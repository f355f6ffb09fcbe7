"""Filters: maps from (rejection set, p-values) to prioritization scores.

A filter must put score 0 on every hypothesis outside the rejection set.
Each concrete filter provides three views used by the step-up procedures:

* ``apply``            the reported score vector (always in [0, 1]),
* ``weighted_count``   the norm used inside FDP estimates,
* ``count_curve``      that norm along a whole threshold grid at once.

For soft outer nodes the reported scores are globally rescaled into [0, 1]
while the norm stays on the raw information-content scale; the two differ
by the constant log(G), which cancels from every realized FDP.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .core import PrioritizationVector, PValueVector, RejectionSet
from .graph import HypothesisGraph

__all__ = [
    "Filter",
    "FilterTraits",
    "TrivialFilter",
    "FixedWeightsFilter",
    "ScreeningFilter",
    "ClumpingFilter",
    "OuterNodesFilter",
    "SoftOuterNodesFilter",
    "StructureInducedFilter",
    "BlockPartition",
    "StructureClass",
    "antichain_class",
    "block_argmin_screen",
    "apply_filter",
    "soft_outer_weighted_count_identity",
    "FilterProperty",
    "PropertyDomain",
    "PropertyCheckResult",
    "Counterexample",
    "PropertyDomainError",
    "check_filter_property",
    "load_block_partition",
    "load_fixed_weights",
]


@dataclass(frozen=True)
class FilterTraits:
    """Regularity properties a filter declares about itself.

    These are advisory labels (None = unknown); the checkers below verify
    them on concrete small instances instead of trusting the declaration.
    """

    fixed: bool = False
    monotonic: bool | None = None
    simple: bool | None = None
    block_simple: bool | None = None
    strongly_simple: bool | None = None


def _as_indicator(rejected, m: int) -> np.ndarray:
    if isinstance(rejected, RejectionSet):
        if rejected.m != m:
            raise ValueError("rejection set covers a different m")
        return rejected.indicator()
    arr = np.asarray(rejected)
    if arr.dtype == bool and arr.shape == (m,):
        return arr
    ind = np.zeros(m, dtype=bool)
    idx = np.asarray(sorted(int(i) for i in rejected), dtype=np.intp)
    if idx.size and (idx[0] < 0 or idx[-1] >= m):
        raise ValueError("rejection indices out of range")
    ind[idx] = True
    return ind


def _as_pvalues(p) -> np.ndarray:
    if isinstance(p, PValueVector):
        return p.values
    return np.asarray(p, dtype=np.float64)


class Filter:
    """Base class; subclasses implement ``_apply`` on indicator arrays."""

    name: str = "filter"
    traits: FilterTraits = FilterTraits()

    def _apply(self, rejected: np.ndarray, p: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def apply(self, rejected, p) -> np.ndarray:
        p = _as_pvalues(p)
        ind = _as_indicator(rejected, p.size)
        return self._apply(ind, p)

    def weighted_count(self, rejected, p) -> float:
        """Norm of the filter output used inside FDP estimates."""
        return float(self.apply(rejected, p).sum())

    def count_curve(self, p, grid: np.ndarray) -> np.ndarray:
        """weighted_count of {j: p_j <= t} for every t in grid."""
        p = _as_pvalues(p)
        grid = np.asarray(grid, dtype=np.float64)
        return np.array([self.weighted_count(p <= t, p) for t in grid])

    def null_count_curve(self, p, grid: np.ndarray, null_indicator: np.ndarray) -> np.ndarray:
        """Sum of output scores over nulls, for every threshold in grid.

        Uses the same scale as ``weighted_count``.
        """
        p = _as_pvalues(p)
        grid = np.asarray(grid, dtype=np.float64)
        null_indicator = np.asarray(null_indicator, dtype=bool)
        out = np.empty(grid.size)
        for k, t in enumerate(grid):
            out[k] = float(self._raw_scores(p <= t, p)[null_indicator].sum())
        return out

    def _raw_scores(self, rejected: np.ndarray, p: np.ndarray) -> np.ndarray:
        """Scores on the ``weighted_count`` scale; equals _apply by default."""
        return self._apply(rejected, p)

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.name!r}>"


class TrivialFilter(Filter):
    """Keeps the rejection set untouched."""

    name = "trivial"
    traits = FilterTraits(fixed=True, monotonic=True, simple=True, block_simple=True, strongly_simple=True)

    def _apply(self, rejected, p):
        return rejected.astype(np.float64)

    def count_curve(self, p, grid):
        p = np.sort(_as_pvalues(p))
        return np.searchsorted(p, np.asarray(grid, dtype=np.float64), side="right").astype(np.float64)

    def null_count_curve(self, p, grid, null_indicator):
        p = _as_pvalues(p)
        nulls = np.sort(p[np.asarray(null_indicator, dtype=bool)])
        return np.searchsorted(nulls, np.asarray(grid, dtype=np.float64), side="right").astype(np.float64)


class FixedWeightsFilter(Filter):
    """Scores each rejected hypothesis with a preassigned weight in [0, 1]."""

    name = "fixed-weights"
    traits = FilterTraits(fixed=True, monotonic=True, simple=True, block_simple=True, strongly_simple=True)

    def __init__(self, weights):
        w = np.asarray(weights, dtype=np.float64)
        if w.ndim != 1 or np.any((w < 0) | (w > 1)):
            raise ValueError("weights must be a vector with entries in [0, 1]")
        self.weights = w

    def _check_m(self, m: int):
        if m != self.weights.size:
            raise ValueError("weights cover a different number of hypotheses")

    def _apply(self, rejected, p):
        self._check_m(p.size)
        return self.weights * rejected

    def count_curve(self, p, grid):
        p = _as_pvalues(p)
        self._check_m(p.size)
        order = np.argsort(p, kind="stable")
        csum = np.concatenate([[0.0], np.cumsum(self.weights[order])])
        pos = np.searchsorted(p[order], np.asarray(grid, dtype=np.float64), side="right")
        return csum[pos]

    def null_count_curve(self, p, grid, null_indicator):
        p = _as_pvalues(p)
        self._check_m(p.size)
        nulls = np.asarray(null_indicator, dtype=bool)
        pn, wn = p[nulls], self.weights[nulls]
        order = np.argsort(pn, kind="stable")
        csum = np.concatenate([[0.0], np.cumsum(wn[order])])
        pos = np.searchsorted(pn[order], np.asarray(grid, dtype=np.float64), side="right")
        return csum[pos]


class ScreeningFilter(Filter):
    """Intersects the rejection set with a p-value-determined subset."""

    name = "screening"

    def __init__(self, screen: Callable[[np.ndarray], np.ndarray], name: str = "screening", stable: bool | None = None):
        self.screen = screen
        self.name = name
        self.traits = FilterTraits(fixed=False, monotonic=None, simple=stable)

    def screen_indicator(self, p) -> np.ndarray:
        p = _as_pvalues(p)
        raw = self.screen(p)
        arr = np.asarray(raw)
        if arr.dtype == bool and arr.shape == (p.size,):
            return arr
        ind = np.zeros(p.size, dtype=bool)
        ind[np.asarray(sorted(int(i) for i in raw), dtype=np.intp)] = True
        return ind

    def _apply(self, rejected, p):
        return (rejected & self.screen_indicator(p)).astype(np.float64)

    def count_curve(self, p, grid):
        p = _as_pvalues(p)
        kept = np.sort(p[self.screen_indicator(p)])
        return np.searchsorted(kept, np.asarray(grid, dtype=np.float64), side="right").astype(np.float64)

    def null_count_curve(self, p, grid, null_indicator):
        p = _as_pvalues(p)
        keep = self.screen_indicator(p) & np.asarray(null_indicator, dtype=bool)
        kept = np.sort(p[keep])
        return np.searchsorted(kept, np.asarray(grid, dtype=np.float64), side="right").astype(np.float64)


@dataclass(frozen=True)
class BlockPartition:
    """Disjoint blocks covering {0..m-1}."""

    blocks: tuple[tuple[int, ...], ...]

    def __init__(self, blocks: Iterable[Iterable[int]]):
        blocks = tuple(tuple(int(i) for i in b) for b in blocks)
        if not blocks or any(not b for b in blocks):
            raise ValueError("every block must be nonempty")
        flat = [i for b in blocks for i in b]
        m = len(flat)
        if sorted(flat) != list(range(m)):
            raise ValueError("blocks must partition {0..m-1} exactly")
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def from_labels(cls, labels: Sequence) -> "BlockPartition":
        by_label: dict = {}
        for i, lab in enumerate(labels):
            by_label.setdefault(lab, []).append(i)
        return cls(by_label.values())

    @classmethod
    def contiguous(cls, m: int, block_size: int) -> "BlockPartition":
        if m % block_size != 0:
            raise ValueError("block size must divide m")
        return cls(tuple(range(k, k + block_size)) for k in range(0, m, block_size))

    @property
    def m(self) -> int:
        return sum(len(b) for b in self.blocks)

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    def block_of(self) -> np.ndarray:
        out = np.empty(self.m, dtype=np.intp)
        for k, b in enumerate(self.blocks):
            out[list(b)] = k
        return out


class ClumpingFilter(Filter):
    """Keeps, per block, the smallest p-value among the rejected members.

    Ties for the block minimum all survive, which keeps the filter
    deterministic and permutation-invariant.
    """

    name = "clumping"

    def __init__(self, partition: BlockPartition):
        self.partition = partition
        self.traits = FilterTraits(fixed=False, monotonic=True, simple=True, block_simple=True)

    def _check_m(self, m: int):
        if m != self.partition.m:
            raise ValueError("partition does not cover the hypotheses")

    def _apply(self, rejected, p):
        self._check_m(p.size)
        out = np.zeros(p.size)
        for block in self.partition.blocks:
            idx = np.asarray(block, dtype=np.intp)
            hit = idx[rejected[idx]]
            if hit.size:
                mn = p[hit].min()
                out[hit[p[hit] == mn]] = 1.0
        return out

    def blocks_hit(self, rejected, p=None) -> float:
        """Number of blocks intersecting the rejection set.

        Independent route to the weighted count; the two agree whenever no
        block minimum is tied.
        """
        m = self.partition.m
        ind = _as_indicator(rejected, m)
        return float(sum(1 for b in self.partition.blocks if ind[list(b)].any()))

    def _mins_with_multiplicity(self, p, null_indicator=None):
        mins, mult = [], []
        for block in self.partition.blocks:
            idx = np.asarray(block, dtype=np.intp)
            mn = p[idx].min()
            tied = idx[p[idx] == mn]
            if null_indicator is None:
                count = tied.size
            else:
                count = int(null_indicator[tied].sum())
            mins.append(mn)
            mult.append(count)
        return np.asarray(mins), np.asarray(mult, dtype=np.float64)

    def count_curve(self, p, grid):
        p = _as_pvalues(p)
        self._check_m(p.size)
        mins, mult = self._mins_with_multiplicity(p)
        order = np.argsort(mins, kind="stable")
        csum = np.concatenate([[0.0], np.cumsum(mult[order])])
        pos = np.searchsorted(mins[order], np.asarray(grid, dtype=np.float64), side="right")
        return csum[pos]

    def null_count_curve(self, p, grid, null_indicator):
        p = _as_pvalues(p)
        self._check_m(p.size)
        mins, mult = self._mins_with_multiplicity(p, np.asarray(null_indicator, dtype=bool))
        order = np.argsort(mins, kind="stable")
        csum = np.concatenate([[0.0], np.cumsum(mult[order])])
        pos = np.searchsorted(mins[order], np.asarray(grid, dtype=np.float64), side="right")
        return csum[pos]


def block_argmin_screen(partition: BlockPartition) -> ScreeningFilter:
    """Screening filter keeping each block's overall smallest p-value.

    On threshold rejection sets this coincides with the clumping filter.
    """

    def screen(p: np.ndarray) -> np.ndarray:
        keep = np.zeros(p.size, dtype=bool)
        for block in partition.blocks:
            idx = np.asarray(block, dtype=np.intp)
            mn = p[idx].min()
            keep[idx[p[idx] == mn]] = True
        return keep

    return ScreeningFilter(screen, name="block-argmin-screen", stable=True)


class OuterNodesFilter(Filter):
    """Keeps rejected nodes having no rejected descendant."""

    name = "outer-nodes"

    def __init__(self, graph: HypothesisGraph):
        self.graph = graph
        self.traits = FilterTraits(
            fixed=True,
            monotonic=graph.is_tree() or None,
            simple=True,
            strongly_simple=True,
        )

    def _check_m(self, m: int):
        if m != self.graph.m:
            raise ValueError("graph covers a different number of hypotheses")

    def _apply(self, rejected, p):
        self._check_m(rejected.size)
        mask = 0
        for i in np.flatnonzero(rejected):
            mask |= 1 << int(i)
        out = np.zeros(rejected.size)
        for i in np.flatnonzero(rejected):
            if self.graph.descendant_masks[int(i)] & mask == 0:
                out[i] = 1.0
        return out

    def _min_descendant_p(self, p: np.ndarray) -> np.ndarray:
        d = np.full(p.size, np.inf)
        for node in reversed(self.graph.topo_order):
            best = np.inf
            for c in self.graph.children[node]:
                best = min(best, p[c], d[c])
            d[node] = best
        return d

    def count_curve(self, p, grid):
        # node i is an outer node of {p <= t} iff p_i <= t < (min p over descendants)
        p = _as_pvalues(p)
        self._check_m(p.size)
        d = self._min_descendant_p(p)
        grid = np.asarray(grid, dtype=np.float64)
        entered = np.searchsorted(np.sort(p), grid, side="right")
        covered = np.searchsorted(np.sort(np.maximum(p, d)), grid, side="right")
        return (entered - covered).astype(np.float64)

    def null_count_curve(self, p, grid, null_indicator):
        p = _as_pvalues(p)
        self._check_m(p.size)
        nulls = np.asarray(null_indicator, dtype=bool)
        d = self._min_descendant_p(p)
        grid = np.asarray(grid, dtype=np.float64)
        entered = np.searchsorted(np.sort(p[nulls]), grid, side="right")
        covered = np.searchsorted(np.sort(np.maximum(p, d)[nulls]), grid, side="right")
        return (entered - covered).astype(np.float64)


class SoftOuterNodesFilter(Filter):
    """Splits per-gene credit among the smallest discovered nodes containing it.

    The reported score of node j is gamma_j * log(G/|genes_j|) / log(G),
    where gamma_j is the fraction of j's genes whose credit lands on j.
    The norm used by the procedures keeps the raw log(G/|genes_j|) weights.
    """

    name = "soft-outer-nodes"

    def __init__(self, graph: HypothesisGraph, total_genes: int | None = None):
        if graph.annotations is None:
            raise ValueError("soft outer nodes needs an annotated graph")
        self.graph = graph
        union = graph.n_genes
        if total_genes is None:
            total_genes = union
        if total_genes < union:
            raise ValueError("gene universe cannot be smaller than the union of annotations")
        self.total_genes = int(total_genes)
        self.node_sizes = np.array([len(s) for s in graph.annotations], dtype=np.intp)
        genes = sorted(set().union(*graph.annotations))
        gene_pos = {g: k for k, g in enumerate(genes)}
        containers: list[list[int]] = [[] for _ in genes]
        for j, ann in enumerate(graph.annotations):
            for g in ann:
                containers[gene_pos[g]].append(j)
        self.gene_names = tuple(genes)
        self.containers = tuple(tuple(sorted(c)) for c in containers)
        self.traits = FilterTraits(fixed=True, monotonic=True, simple=True, strongly_simple=True)
        self._log_g = float(np.log(self.total_genes)) if self.total_genes > 1 else 0.0
        # flat gene->node incidence, contiguous per gene, for vectorized sweeps
        self._flat_nodes = np.array([j for c in self.containers for j in c], dtype=np.intp)
        self._flat_gene = np.array(
            [g for g, c in enumerate(self.containers) for _ in c], dtype=np.intp
        )
        self._seg_starts = np.cumsum([0] + [len(c) for c in self.containers[:-1]]).astype(np.intp)
        self._flat_sizes = self.node_sizes[self._flat_nodes].astype(np.float64)

    def _check_m(self, m: int):
        if m != self.graph.m:
            raise ValueError("graph covers a different number of hypotheses")

    def _information(self, size) -> np.ndarray | float:
        return np.log(self.total_genes / np.asarray(size, dtype=np.float64))

    def gamma_scores(self, rejected) -> np.ndarray:
        """Fraction of each node's genes whose credit lands on that node.

        Each gene credits the smallest discovered node(s) containing it,
        splitting equally on ties.
        """
        ind = _as_indicator(rejected, self.graph.m)
        big = float(self.graph.m + self.total_genes + 2)
        masked = np.where(ind[self._flat_nodes], self._flat_sizes, big)
        seg_min = np.minimum.reduceat(masked, self._seg_starts)
        achiever = masked == seg_min[self._flat_gene]
        n_achievers = np.add.reduceat(achiever.astype(np.float64), self._seg_starts)
        credit = np.zeros(self.graph.m)
        hit = np.flatnonzero(achiever & (masked < big))
        if hit.size:
            np.add.at(credit, self._flat_nodes[hit], 1.0 / n_achievers[self._flat_gene[hit]])
        gamma = np.zeros(self.graph.m)
        gamma[ind] = credit[ind] / self.node_sizes[ind]
        return gamma

    def _raw_scores(self, rejected, p=None):
        gamma = self.gamma_scores(rejected)
        return gamma * self._information(self.node_sizes)

    def _apply(self, rejected, p):
        self._check_m(rejected.size)
        raw = self._raw_scores(rejected)
        if self._log_g == 0.0:
            return raw
        return raw / self._log_g

    def weighted_count(self, rejected, p=None) -> float:
        ind = _as_indicator(rejected, self.graph.m)
        return float(self._raw_scores(ind).sum())

    def _event_sweep(self, p: np.ndarray, null_indicator: np.ndarray | None):
        """Per-gene credit changes as the threshold grows, sorted by p.

        Fully vectorized: entries are ordered by (gene, p); the running
        per-gene minimum size uses a segment-offset minimum.accumulate, and
        tie counts accumulate within runs of a constant minimum.
        """
        nodes = self._flat_nodes
        seg = self._flat_gene
        p_flat = p[nodes]
        order = np.lexsort((p_flat, seg))
        s_ord = self._flat_sizes[order]
        seg_ord = seg[order]
        t_ord = p_flat[order]
        span = float(self.total_genes + 1)
        cummin = np.minimum.accumulate(s_ord - seg_ord * span) + seg_ord * span
        seg_start = np.empty(s_ord.size, dtype=bool)
        seg_start[0] = True
        seg_start[1:] = seg_ord[1:] != seg_ord[:-1]
        value = np.log(self.total_genes / cummin) / cummin
        if null_indicator is not None:
            prev_cummin = np.concatenate([[np.inf], cummin[:-1]])
            reset = seg_start | (cummin < prev_cummin)
            run_start = np.maximum.accumulate(np.where(reset, np.arange(s_ord.size), -1))
            achiever = s_ord == cummin
            null_ord = np.asarray(null_indicator, dtype=bool)[nodes[order]]
            c_total = np.cumsum(achiever.astype(np.float64))
            c_null = np.cumsum((achiever & null_ord).astype(np.float64))
            base_total = c_total[run_start] - achiever[run_start]
            base_null = c_null[run_start] - (achiever & null_ord)[run_start]
            total = c_total - base_total
            null_cnt = c_null - base_null
            value = value * np.where(total > 0, null_cnt / np.maximum(total, 1.0), 0.0)
        prev_value = np.concatenate([[0.0], value[:-1]])
        prev_value[seg_start] = 0.0
        deltas = value - prev_value
        keep = deltas != 0.0
        return t_ord[keep], deltas[keep]

    def _curve(self, p, grid, null_indicator):
        p = _as_pvalues(p)
        self._check_m(p.size)
        ts, deltas = self._event_sweep(p, null_indicator)
        order = np.argsort(ts, kind="stable")
        csum = np.concatenate([[0.0], np.cumsum(deltas[order])])
        pos = np.searchsorted(ts[order], np.asarray(grid, dtype=np.float64), side="right")
        return csum[pos]

    def count_curve(self, p, grid):
        return self._curve(p, grid, None)

    def null_count_curve(self, p, grid, null_indicator):
        return self._curve(p, grid, np.asarray(null_indicator, dtype=bool))


def soft_outer_weighted_count_identity(
    graph: HypothesisGraph, rejected, total_genes: int | None = None
) -> float:
    """Gene-side total credit: sum over genes of log(G/S_g)/S_g.

    S_g is the size of the smallest discovered node containing gene g;
    genes contained in no discovered node contribute nothing.  Must equal
    the node-side weighted count of the soft outer nodes filter.
    """
    filt = SoftOuterNodesFilter(graph, total_genes=total_genes)
    ind = _as_indicator(rejected, graph.m)
    total = 0.0
    for nodes in filt.containers:
        sizes = [filt.node_sizes[j] for j in nodes if ind[j]]
        if not sizes:
            continue
        s_min = int(min(sizes))
        total += float(np.log(filt.total_genes / s_min)) / s_min
    return total


@dataclass(frozen=True)
class StructureClass:
    """A collection of acceptable rejection sets, given by a predicate.

    The empty set must belong to the class.  ``sets`` enumerates all
    members for small m; custom classes may instead supply an explicit
    member list.
    """

    contains: Callable[[frozenset[int]], bool]
    members: tuple[frozenset[int], ...] | None = None
    max_enumeration_m: int = 20

    def sets(self, m: int) -> list[frozenset[int]]:
        if self.members is not None:
            return list(self.members)
        if m > self.max_enumeration_m:
            raise ValueError(f"enumeration guard exceeded: m={m} > {self.max_enumeration_m}")
        universe = list(range(m))
        out = []
        for r in range(m + 1):
            for combo in itertools.combinations(universe, r):
                s = frozenset(combo)
                if self.contains(s):
                    out.append(s)
        if frozenset() not in out:
            raise ValueError("a structure class must contain the empty set")
        return out


def antichain_class(graph: HypothesisGraph) -> StructureClass:
    """Sets of nodes none of which is an ancestor of another."""

    def contains(subset: frozenset[int]) -> bool:
        mask = 0
        for j in subset:
            mask |= 1 << j
        return all(graph.descendant_masks[i] & mask == 0 for i in subset)

    return StructureClass(contains)


class StructureInducedFilter(Filter):
    """Projects the rejection set onto the largest class member inside it."""

    name = "structure-induced"

    def __init__(self, structure: StructureClass, m: int):
        self.structure = structure
        self.m = m
        self._sets = structure.sets(m)
        self.traits = FilterTraits(fixed=True, monotonic=True, simple=True, strongly_simple=True)

    def best_subset(self, rejected) -> frozenset[int]:
        ind = _as_indicator(rejected, self.m)
        members = frozenset(np.flatnonzero(ind).tolist())
        best: frozenset[int] | None = None
        best_key = None
        for s in self._sets:
            if s <= members:
                key = (-len(s), tuple(sorted(s)))
                if best_key is None or key < best_key:
                    best, best_key = s, key
        if best is None:
            raise ValueError("structure class does not contain the empty set")
        return best

    def _apply(self, rejected, p):
        if rejected.size != self.m:
            raise ValueError("rejection indicator covers a different m")
        out = np.zeros(self.m)
        for j in self.best_subset(rejected):
            out[j] = 1.0
        return out


def apply_filter(f: Filter, rejected: RejectionSet, p: PValueVector) -> PrioritizationVector:
    """Run a filter and wrap the scores, enforcing the support condition."""
    scores = f.apply(rejected, p)
    ind = _as_indicator(rejected, _as_pvalues(p).size)
    if np.any(scores[~ind] != 0):
        raise AssertionError("filter assigned weight outside the rejection set")
    return PrioritizationVector(scores)


# ---------------------------------------------------------------------------
# property checkers
# ---------------------------------------------------------------------------


class FilterProperty(enum.Enum):
    MONOTONIC = "monotonic"
    SIMPLE = "simple"
    BLOCK_SIMPLE = "block-simple"
    STRONGLY_SIMPLE = "strongly-simple"
    STRONGLY_BLOCK_SIMPLE = "strongly-block-simple"


class PropertyDomainError(ValueError):
    """The requested exhaustive domain is too large to enumerate."""


@dataclass(frozen=True)
class PropertyDomain:
    """Finite verification domain: m coordinates, each ranging over p_grid."""

    m: int
    p_grid: tuple[float, ...] = (0.1, 0.5, 0.9)
    max_evals: int = 2_000_000

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be at least 1")
        grid = tuple(sorted(set(float(v) for v in self.p_grid)))
        if not grid or any(not (0 <= v <= 1) for v in grid):
            raise ValueError("p_grid must contain values in [0, 1]")
        object.__setattr__(self, "p_grid", grid)


@dataclass(frozen=True)
class Counterexample:
    p1: tuple[float, ...]
    p2: tuple[float, ...]
    r1: frozenset[int]
    r2: frozenset[int]
    count1: float
    count2: float

    def describe(self) -> str:
        return (
            f"R1={sorted(self.r1)} p1={list(self.p1)} -> {self.count1:g}; "
            f"R2={sorted(self.r2)} p2={list(self.p2)} -> {self.count2:g}"
        )


@dataclass(frozen=True)
class PropertyCheckResult:
    holds: bool
    counterexample: Counterexample | None = None


def _guard(domain: PropertyDomain, evals: int):
    if evals > domain.max_evals:
        raise PropertyDomainError(
            f"domain needs about {evals} filter evaluations, above the guard of {domain.max_evals}; "
            "shrink m or the p-value grid"
        )


def _indicator_of_mask(mask: int, m: int) -> np.ndarray:
    out = np.zeros(m, dtype=bool)
    for j in range(m):
        if (mask >> j) & 1:
            out[j] = True
    return out


def _members(mask: int, m: int) -> frozenset[int]:
    return frozenset(j for j in range(m) if (mask >> j) & 1)


class _CountCache:
    """Memoized weighted counts over (p-vector, rejection mask) pairs."""

    def __init__(self, f: Filter, m: int):
        self.f = f
        self.m = m
        self.cache: dict[tuple[tuple[float, ...], int], float] = {}

    def count(self, p: tuple[float, ...], mask: int) -> float:
        key = (p, mask)
        if key not in self.cache:
            self.cache[key] = self.f.weighted_count(
                _indicator_of_mask(mask, self.m), np.asarray(p, dtype=np.float64)
            )
        return self.cache[key]

    def supports(self, p: tuple[float, ...], mask: int, j: int) -> bool:
        scores = self.f.apply(_indicator_of_mask(mask, self.m), np.asarray(p, dtype=np.float64))
        return scores[j] > 0


def _check_monotonic(f: Filter, domain: PropertyDomain) -> PropertyCheckResult:
    """Monotonicity via single add-one-rejection and lower-one-p steps.

    Any pair (R1 superset R2, p1 <= p2) decomposes into a chain of such
    steps inside the grid, so checking the steps is equivalent to checking
    all pairs; a failing step is itself a counterexample to the definition.
    """
    m, grid = domain.m, domain.p_grid
    g = len(grid)
    n_p = g**m
    _guard(domain, n_p * (2**m) * (1 + m * g))
    cache = _CountCache(f, m)
    full = (1 << m) - 1
    for p_tuple in itertools.product(grid, repeat=m):
        for mask in range(1 << m):
            base = cache.count(p_tuple, mask)
            # grow the rejection set by one element
            rest = full & ~mask
            while rest:
                bit = rest & -rest
                rest ^= bit
                bigger = mask | bit
                grown = cache.count(p_tuple, bigger)
                if grown < base:
                    return PropertyCheckResult(
                        False,
                        Counterexample(p_tuple, p_tuple, _members(bigger, m), _members(mask, m), grown, base),
                    )
            # lower one p-value coordinate
            for j in range(m):
                for v in grid:
                    if v >= p_tuple[j]:
                        break
                    lowered = p_tuple[:j] + (v,) + p_tuple[j + 1 :]
                    low = cache.count(lowered, mask)
                    if low < base:
                        return PropertyCheckResult(
                            False,
                            Counterexample(lowered, p_tuple, _members(mask, m), _members(mask, m), low, base),
                        )
    return PropertyCheckResult(True, None)


def _first_difference(values: list[tuple[float, tuple, int]]) -> tuple | None:
    """values: (count, p, mask); returns a pair with differing counts."""
    if not values:
        return None
    c0, p0, m0 = values[0]
    for c, p, mk in values[1:]:
        if c != c0:
            return (p0, p, m0, mk, c0, c)
    return None


def _check_simple(f: Filter, domain: PropertyDomain) -> PropertyCheckResult:
    m, grid = domain.m, domain.p_grid
    g = len(grid)
    _guard(domain, m * (g**m) * (2 ** (m - 1)) * 2)
    cache = _CountCache(f, m)
    for j in range(m):
        masks_with_j = [mask for mask in range(1 << m) if (mask >> j) & 1]
        for rest in itertools.product(grid, repeat=m - 1):
            eligible: list[tuple[float, ...]] = []
            for v in grid:
                p = list(rest)
                p.insert(j, v)
                p_tuple = tuple(p)
                if any(cache.supports(p_tuple, mask, j) for mask in masks_with_j):
                    eligible.append(p_tuple)
            if len(eligible) < 2:
                continue
            for mask in masks_with_j:
                values = [(cache.count(p, mask), p, mask) for p in eligible]
                diff = _first_difference(values)
                if diff:
                    p1, p2, m1, m2, c1, c2 = diff
                    return PropertyCheckResult(
                        False, Counterexample(p1, p2, _members(m1, m), _members(m2, m), c1, c2)
                    )
    return PropertyCheckResult(True, None)


def _check_block_simple(
    f: Filter, domain: PropertyDomain, blocks_of: Mapping[int, Iterable[int]], need_support: bool
) -> PropertyCheckResult:
    m, grid = domain.m, domain.p_grid
    g = len(grid)
    cache = _CountCache(f, m)
    _guard(domain, m * (g**m) * (2**m))
    for j in range(m):
        block = sorted(set(int(i) for i in blocks_of[j]) | {j})
        b = len(block)
        outside = [k for k in range(m) if k not in block]
        inside_wo_j = [k for k in block if k != j]
        for p_out in itertools.product(grid, repeat=len(outside)):
            # p-vectors agreeing with p_out outside the block
            variants = []
            for p_in in itertools.product(grid, repeat=b):
                p = [0.0] * m
                for pos, k in enumerate(outside):
                    p[k] = p_out[pos]
                for pos, k in enumerate(block):
                    p[k] = p_in[pos]
                variants.append(tuple(p))
            if need_support:
                variants = [
                    p
                    for p in variants
                    if any(
                        cache.supports(p, mask, j)
                        for mask in range(1 << m)
                        if (mask >> j) & 1
                    )
                ]
            if len(variants) < 1:
                continue
            for out_mask_bits in itertools.product([0, 1], repeat=len(outside)):
                out_mask = 0
                for pos, k in enumerate(outside):
                    if out_mask_bits[pos]:
                        out_mask |= 1 << k
                values = []
                for p in variants:
                    for in_bits in itertools.product([0, 1], repeat=len(inside_wo_j)):
                        mask = out_mask | (1 << j)
                        for pos, k in enumerate(inside_wo_j):
                            if in_bits[pos]:
                                mask |= 1 << k
                        values.append((cache.count(p, mask), p, mask))
                diff = _first_difference(values)
                if diff:
                    p1, p2, m1, m2, c1, c2 = diff
                    return PropertyCheckResult(
                        False, Counterexample(p1, p2, _members(m1, m), _members(m2, m), c1, c2)
                    )
    return PropertyCheckResult(True, None)


def _check_strongly_simple(f: Filter, domain: PropertyDomain) -> PropertyCheckResult:
    m, grid = domain.m, domain.p_grid
    _guard(domain, (len(grid) ** m) * (2**m))
    cache = _CountCache(f, m)
    for mask in range(1 << m):
        values = [(cache.count(p, mask), p, mask) for p in itertools.product(grid, repeat=m)]
        diff = _first_difference(values)
        if diff:
            p1, p2, m1, m2, c1, c2 = diff
            return PropertyCheckResult(
                False, Counterexample(p1, p2, _members(m1, m), _members(m2, m), c1, c2)
            )
    return PropertyCheckResult(True, None)


def check_filter_property(
    f: Filter,
    prop: FilterProperty,
    domain: PropertyDomain,
    blocks_of: Mapping[int, Iterable[int]] | None = None,
) -> PropertyCheckResult:
    """Exhaustively verify a regularity property on a finite domain.

    Block-type properties need ``blocks_of``: for each index j, the set of
    indices whose p-values and rejections may co-vary with j's.
    """
    if prop is FilterProperty.MONOTONIC:
        return _check_monotonic(f, domain)
    if prop is FilterProperty.SIMPLE:
        return _check_simple(f, domain)
    if prop is FilterProperty.STRONGLY_SIMPLE:
        return _check_strongly_simple(f, domain)
    if prop in (FilterProperty.BLOCK_SIMPLE, FilterProperty.STRONGLY_BLOCK_SIMPLE):
        if blocks_of is None:
            raise ValueError("block properties need the blocks_of mapping")
        return _check_block_simple(
            f, domain, blocks_of, need_support=prop is FilterProperty.BLOCK_SIMPLE
        )
    raise ValueError(f"unknown property {prop!r}")


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------


def load_block_partition(path, ids: Sequence[str]) -> BlockPartition:
    """Read `id<TAB>block` lines into a partition aligned with ids."""
    from .graph import _data_lines

    position = {str(s): i for i, s in enumerate(ids)}
    labels: dict[int, str] = {}
    for lineno, line in _data_lines(path):
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0] or not parts[1]:
            raise ValueError(f"{path}:{lineno}: expected 'id<TAB>block_id'")
        name, block = parts
        if name not in position:
            raise ValueError(f"{path}:{lineno}: unknown id {name!r}")
        idx = position[name]
        if idx in labels:
            raise ValueError(f"{path}:{lineno}: duplicate assignment for {name!r}")
        labels[idx] = block
    missing = [s for s, i in position.items() if i not in labels]
    if missing:
        raise ValueError(f"{path}: no block assigned to {missing[0]!r}")
    return BlockPartition.from_labels([labels[i] for i in range(len(ids))])


def load_fixed_weights(path, ids: Sequence[str]) -> FixedWeightsFilter:
    """Read `id<TAB>weight` lines into a fixed-weights filter aligned with ids."""
    from .graph import _data_lines

    position = {str(s): i for i, s in enumerate(ids)}
    weights = np.full(len(ids), np.nan)
    for lineno, line in _data_lines(path):
        parts = line.split("\t")
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'id<TAB>weight'")
        name, value = parts
        if name not in position:
            raise ValueError(f"{path}:{lineno}: unknown id {name!r}")
        try:
            w = float(value)
        except ValueError:
            raise ValueError(f"{path}:{lineno}: weight {value!r} is not a number") from None
        if not (0 <= w <= 1):
            raise ValueError(f"{path}:{lineno}: weight must lie in [0, 1]")
        weights[position[name]] = w
    if np.isnan(weights).any():
        missing = [s for s, i in position.items() if np.isnan(weights[i])]
        raise ValueError(f"{path}: no weight given for {missing[0]!r}")
    return FixedWeightsFilter(weights)

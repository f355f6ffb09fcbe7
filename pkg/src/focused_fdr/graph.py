"""Rooted DAG/tree structure over hypotheses.

Nodes are indexed 0..m-1 with string ids; edges point parent -> child.
Strict-descendant sets are precomputed as arbitrary-precision bitmasks so
ancestry queries and "any rejected descendant" tests are cheap, which is
what outer-node filtering hammers on.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import GroundTruth, PValueVector
from .numerics import chi2_sf

__all__ = [
    "CombinationMethod",
    "HypothesisGraph",
    "is_ancestor",
    "combine_node_pvalues",
    "check_logical_relationships",
    "simes_combine",
    "fisher_combine",
    "load_edge_list",
    "load_annotations",
    "random_tree",
    "random_dag",
    "random_annotated_dag",
]


class CombinationMethod(enum.Enum):
    SIMES = "simes"
    FISHER = "fisher"


@dataclass(frozen=True)
class HypothesisGraph:
    """Acyclic parent->child graph with optional per-node gene annotations."""

    ids: tuple[str, ...]
    edges: tuple[tuple[int, int], ...]
    children: tuple[tuple[int, ...], ...]
    parents: tuple[tuple[int, ...], ...]
    descendant_masks: tuple[int, ...]
    topo_order: tuple[int, ...]
    annotations: tuple[frozenset[str], ...] | None
    gene_universe: tuple[str, ...] | None

    def __init__(
        self,
        ids: Sequence[str],
        edges: Iterable[tuple[int, int]],
        annotations: Mapping[int, Iterable[str]] | None = None,
        gene_universe: Iterable[str] | None = None,
    ):
        ids = tuple(str(s) for s in ids)
        if not ids:
            raise ValueError("graph needs at least one node")
        if len(set(ids)) != len(ids):
            raise ValueError("node ids must be unique")
        m = len(ids)
        edge_list: list[tuple[int, int]] = []
        children: list[list[int]] = [[] for _ in range(m)]
        parents: list[list[int]] = [[] for _ in range(m)]
        seen = set()
        for parent, child in edges:
            parent, child = int(parent), int(child)
            if not (0 <= parent < m and 0 <= child < m):
                raise ValueError(f"edge ({parent}, {child}) out of range")
            if parent == child:
                raise ValueError("self-loops are not allowed")
            if (parent, child) in seen:
                continue
            seen.add((parent, child))
            edge_list.append((parent, child))
            children[parent].append(child)
            parents[child].append(parent)

        topo = _topological_order(m, children)
        masks = [0] * m
        for node in reversed(topo):
            acc = 0
            for c in children[node]:
                acc |= masks[c] | (1 << c)
            masks[node] = acc

        ann: tuple[frozenset[str], ...] | None = None
        universe: tuple[str, ...] | None = None
        if annotations is not None:
            ann_list = [frozenset()] * m
            for node, genes in annotations.items():
                node = int(node)
                if not (0 <= node < m):
                    raise ValueError(f"annotation for unknown node index {node}")
                ann_list[node] = frozenset(str(g) for g in genes)
            for i in range(m):
                if not ann_list[i]:
                    raise ValueError(
                        f"node {ids[i]!r} has no annotated genes; annotations must cover every node"
                    )
            for parent, child in edge_list:
                if not ann_list[child] <= ann_list[parent]:
                    raise ValueError(
                        f"annotation of {ids[child]!r} is not contained in its parent {ids[parent]!r}"
                    )
            ann = tuple(ann_list)
            if gene_universe is None:
                pooled: set[str] = set()
                for s in ann_list:
                    pooled |= s
                universe = tuple(sorted(pooled))
            else:
                universe = tuple(str(g) for g in gene_universe)
                pooled = set(universe)
                if len(pooled) != len(universe):
                    raise ValueError("gene universe contains duplicates")
                for i, s in enumerate(ann_list):
                    if not s <= pooled:
                        raise ValueError(f"node {ids[i]!r} annotated with genes outside the universe")
        elif gene_universe is not None:
            raise ValueError("gene_universe given without annotations")

        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "edges", tuple(edge_list))
        object.__setattr__(self, "children", tuple(tuple(c) for c in children))
        object.__setattr__(self, "parents", tuple(tuple(p) for p in parents))
        object.__setattr__(self, "descendant_masks", tuple(masks))
        object.__setattr__(self, "topo_order", tuple(topo))
        object.__setattr__(self, "annotations", ann)
        object.__setattr__(self, "gene_universe", universe)

    @property
    def m(self) -> int:
        return len(self.ids)

    @property
    def n_genes(self) -> int:
        if self.gene_universe is None:
            raise ValueError("graph has no annotations")
        return len(self.gene_universe)

    def index_of(self, node_id: str) -> int:
        try:
            return self.ids.index(node_id)
        except ValueError:
            raise KeyError(f"unknown node id {node_id!r}") from None

    def leaves(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.m) if not self.children[i])

    def roots(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.m) if not self.parents[i])

    def descendants(self, i: int) -> frozenset[int]:
        mask = self.descendant_masks[i]
        return frozenset(j for j in range(self.m) if (mask >> j) & 1)

    def leaf_descendants(self, i: int) -> tuple[int, ...]:
        """Leaves reachable from i, or i itself when i is a leaf."""
        if not self.children[i]:
            return (i,)
        mask = self.descendant_masks[i]
        return tuple(j for j in self.leaves() if (mask >> j) & 1)

    def is_tree(self) -> bool:
        return all(len(self.parents[i]) <= 1 for i in range(self.m)) and len(self.roots()) == 1


def _topological_order(m: int, children: Sequence[Sequence[int]]) -> list[int]:
    indeg = [0] * m
    for i in range(m):
        for c in children[i]:
            indeg[c] += 1
    queue = [i for i in range(m) if indeg[i] == 0]
    order: list[int] = []
    while queue:
        node = queue.pop()
        order.append(node)
        for c in children[node]:
            indeg[c] -= 1
            if indeg[c] == 0:
                queue.append(c)
    if len(order) != m:
        raise ValueError("graph contains a cycle")
    return order


def is_ancestor(graph: HypothesisGraph, i: int, j: int) -> bool:
    """True iff a directed path i -> ... -> j exists; never true for i == j."""
    if not (0 <= i < graph.m and 0 <= j < graph.m):
        raise IndexError("node index out of range")
    return bool((graph.descendant_masks[i] >> j) & 1)


def simes_combine(p: np.ndarray, groups: Sequence[Sequence[int]]) -> np.ndarray:
    """Simes global-null p-value per group: min over k of n p_(k) / k.

    p may be a vector or a (len(p), n_columns) matrix; combination is done
    column-wise and the result capped at 1.
    """
    p = np.asarray(p, dtype=np.float64)
    vector = p.ndim == 1
    mat = p[:, None] if vector else p
    out = np.empty((len(groups), mat.shape[1]))
    for gi, group in enumerate(groups):
        idx = np.asarray(group, dtype=np.intp)
        if idx.size == 0:
            raise ValueError("cannot combine an empty group")
        sub = np.sort(mat[idx, :], axis=0)
        ranks = np.arange(1, idx.size + 1, dtype=np.float64)[:, None]
        out[gi] = np.min(idx.size * sub / ranks, axis=0)
    np.minimum(out, 1.0, out=out)
    return out[:, 0] if vector else out


def fisher_combine(p: np.ndarray, groups: Sequence[Sequence[int]]) -> np.ndarray:
    """Fisher combination per group: chi-square tail of -2 sum(log p).

    A p-value of exactly 0 has no finite log and is rejected as invalid.
    """
    p = np.asarray(p, dtype=np.float64)
    vector = p.ndim == 1
    mat = p[:, None] if vector else p
    if np.any(mat == 0.0):
        raise ValueError("Fisher combination is undefined for p-values equal to 0")
    logs = np.log(mat)
    out = np.empty((len(groups), mat.shape[1]))
    for gi, group in enumerate(groups):
        idx = np.asarray(group, dtype=np.intp)
        if idx.size == 0:
            raise ValueError("cannot combine an empty group")
        stat = -2.0 * logs[idx, :].sum(axis=0)
        out[gi] = chi2_sf(stat, 2 * idx.size)
    return out[:, 0] if vector else out


def combine_node_pvalues(
    graph: HypothesisGraph,
    leaf_p: PValueVector,
    method: CombinationMethod = CombinationMethod.SIMES,
) -> PValueVector:
    """Lift leaf p-values to every node of the graph.

    Each leaf keeps its own p-value; an internal node tests the intersection
    of its leaf descendants via the chosen global-null combination.
    """
    leaves = graph.leaves()
    leaf_ids = {graph.ids[i] for i in leaves}
    if set(leaf_p.ids) != leaf_ids:
        raise ValueError("leaf p-value ids must match the graph's leaves exactly")
    pos = {leaf_p.ids[k]: k for k in range(leaf_p.m)}
    groups = [[pos[graph.ids[leaf]] for leaf in graph.leaf_descendants(i)] for i in range(graph.m)]
    if method is CombinationMethod.SIMES:
        values = simes_combine(leaf_p.values, groups)
    elif method is CombinationMethod.FISHER:
        values = fisher_combine(leaf_p.values, groups)
    else:
        raise ValueError(f"unknown combination method {method!r}")
    return PValueVector(values, graph.ids)


def check_logical_relationships(graph: HypothesisGraph, truth: GroundTruth) -> bool:
    """True iff every descendant of a null node is itself null."""
    if truth.m != graph.m:
        raise ValueError("ground truth covers a different number of nodes")
    nonnull_mask = 0
    for j in truth.nonnulls:
        nonnull_mask |= 1 << j
    return all(graph.descendant_masks[i] & nonnull_mask == 0 for i in truth.nulls)


# ---------------------------------------------------------------------------
# file formats: one `parent<TAB>child` per line; annotations are
# `node<TAB>gene1,gene2,...` per line; '#' starts a comment line.
# ---------------------------------------------------------------------------


def _data_lines(path) -> list[tuple[int, str]]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            out.append((lineno, line))
    return out


def load_edge_list(path) -> HypothesisGraph:
    """Read a parent/child edge list; the node set is everything mentioned."""
    ids: list[str] = []
    seen: dict[str, int] = {}
    edges: list[tuple[int, int]] = []

    def intern(name: str) -> int:
        if name not in seen:
            seen[name] = len(ids)
            ids.append(name)
        return seen[name]

    for lineno, line in _data_lines(path):
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0] or not parts[1]:
            raise ValueError(f"{path}:{lineno}: expected 'parent<TAB>child'")
        edges.append((intern(parts[0]), intern(parts[1])))
    if not ids:
        raise ValueError(f"{path}: no edges found")
    return HypothesisGraph(ids, edges)


def load_annotations(path, graph: HypothesisGraph) -> HypothesisGraph:
    """Attach gene annotations from a file to an existing graph."""
    ann: dict[int, frozenset[str]] = {}
    for lineno, line in _data_lines(path):
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0]:
            raise ValueError(f"{path}:{lineno}: expected 'node<TAB>gene1,gene2,...'")
        node_id, genes_field = parts
        try:
            node = graph.index_of(node_id)
        except KeyError:
            raise ValueError(f"{path}:{lineno}: unknown node id {node_id!r}") from None
        if node in ann:
            raise ValueError(f"{path}:{lineno}: duplicate annotation for {node_id!r}")
        genes = [g for g in (s.strip() for s in genes_field.split(",")) if g]
        if not genes:
            raise ValueError(f"{path}:{lineno}: empty gene list for {node_id!r}")
        ann[node] = frozenset(genes)
    return HypothesisGraph(graph.ids, graph.edges, annotations=ann)


# ---------------------------------------------------------------------------
# random structures for tests and simulations
# ---------------------------------------------------------------------------


def random_tree(m: int, rng: np.random.Generator) -> HypothesisGraph:
    """Random recursive tree on m nodes rooted at node 0."""
    if m < 1:
        raise ValueError("m must be at least 1")
    edges = [(int(rng.integers(0, i)), i) for i in range(1, m)]
    return HypothesisGraph([f"n{i}" for i in range(m)], edges)


def random_dag(m: int, rng: np.random.Generator, extra_edge_prob: float = 0.3) -> HypothesisGraph:
    """Random rooted DAG: each node gets one tree parent plus optional extras."""
    if m < 1:
        raise ValueError("m must be at least 1")
    edges = []
    for i in range(1, m):
        edges.append((int(rng.integers(0, i)), i))
        for j in range(i):
            if rng.random() < extra_edge_prob / max(i, 1):
                edges.append((j, i))
    return HypothesisGraph([f"n{i}" for i in range(m)], edges)


def random_annotated_dag(
    n_nodes: int,
    n_genes: int,
    rng: np.random.Generator,
    extra_parent_prob: float = 0.25,
    parent_window: int | None = None,
    subset_range: tuple[float, float] = (0.2, 0.8),
) -> HypothesisGraph:
    """Random DAG whose annotations respect the inclusion partial order.

    Node 0 is the root and carries the full gene universe; every other node
    draws a nonempty subset of one primary parent's genes, then may attach
    to further parents whose annotation already contains that subset.
    Restricting the parent choice to the last ``parent_window`` nodes makes
    the graph deeper, so annotation sizes decay quickly with depth.
    """
    if n_nodes < 1 or n_genes < 1:
        raise ValueError("need at least one node and one gene")
    genes = [f"g{k + 1}" for k in range(n_genes)]
    ann: dict[int, frozenset[str]] = {0: frozenset(genes)}
    edges: list[tuple[int, int]] = []
    lo, hi = subset_range
    for i in range(1, n_nodes):
        first = 0 if parent_window is None else max(0, i - parent_window)
        parent = int(rng.integers(first, i))
        pool = sorted(ann[parent])
        size = max(1, int(round(len(pool) * float(rng.uniform(lo, hi)))))
        size = min(size, len(pool))
        chosen = frozenset(rng.choice(pool, size=size, replace=False).tolist())
        ann[i] = chosen
        edges.append((parent, i))
        for j in range(i):
            if j != parent and chosen <= ann[j] and rng.random() < extra_parent_prob:
                edges.append((j, i))
    return HypothesisGraph([f"n{i}" for i in range(n_nodes)], edges, annotations=ann)

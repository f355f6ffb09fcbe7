"""Seeded simulation harness: data-generating mechanisms and the replicate runner.

Three mechanisms are provided: Gaussian two-group abundances on a tree,
Gaussian two-group expression on an annotated DAG, and a haplotype-block
genotype model with a linear quantitative trait.  The runner compares
procedures replicate by replicate and aggregates FDR/power per procedure
both before and after filtering.

Reproducibility contract: every run is a pure function of the master seed.
Replicate i draws from its own spawned random stream, so results do not
depend on the worker count used to execute them.
"""

from __future__ import annotations

import enum
import itertools
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import GroundTruth, PValueVector, generalized_fdp
from .filters import Filter, TrivialFilter
from .graph import (
    CombinationMethod,
    HypothesisGraph,
    check_logical_relationships,
    fisher_combine,
    simes_combine,
)
from .numerics import regression_slope_pvalues, student_t_two_sided, two_sample_t_pvalues
from .procedures import (
    OracleVhat,
    PermutationVhat,
    bh,
    by_reshaping,
    focused_bh,
    focused_bh_with_vhat,
    focused_reshaped_bh,
    focused_storey_bh,
)

__all__ = [
    "TreeSimConfig",
    "DagSimConfig",
    "GwasSimConfig",
    "simulate_tree_dataset",
    "simulate_dag_dataset",
    "simulate_gwas_dataset",
    "simulate_genotypes",
    "tree_ground_truth",
    "dag_ground_truth",
    "gwas_ground_truth",
    "sample_nonnull_leaves",
    "power_pi",
    "TmaxStrategy",
    "compute_tmax",
    "nonnull_outer_antichain",
    "gamma_diagnostics",
    "ProcedureSpec",
    "MetricSummary",
    "ProcedureSummary",
    "ReplicateReport",
    "run_replicates",
    "worker_count",
]

THREADS_ENV = "FOCUSED_FDR_THREADS"


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


# ---------------------------------------------------------------------------
# configurations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TreeSimConfig:
    """Two-group Gaussian abundances on the leaves of a tree."""

    graph: HypothesisGraph
    nonnull_leaves: tuple[int, ...]
    amplitude: float
    n_cases: int = 100
    n_controls: int = 100
    combination: CombinationMethod = CombinationMethod.SIMES

    def __post_init__(self):
        if not self.graph.is_tree():
            raise ValueError("tree simulation needs a tree-shaped graph")
        if self.n_cases < 2 or self.n_controls < 2:
            raise ValueError("need at least two cases and two controls")
        leaves = set(self.graph.leaves())
        bad = [i for i in self.nonnull_leaves if i not in leaves]
        if bad:
            raise ValueError(f"non-null leaves {bad} are not leaves of the graph")
        object.__setattr__(self, "nonnull_leaves", tuple(sorted(int(i) for i in self.nonnull_leaves)))


@dataclass(frozen=True)
class DagSimConfig:
    """Two-group Gaussian expression for genes annotated on a DAG."""

    graph: HypothesisGraph
    nonnull_genes: tuple[str, ...]
    amplitude: float
    n_cases: int = 100
    n_controls: int = 100
    combination: CombinationMethod = CombinationMethod.SIMES

    def __post_init__(self):
        if self.graph.annotations is None:
            raise ValueError("DAG simulation needs gene annotations")
        if self.n_cases < 2 or self.n_controls < 2:
            raise ValueError("need at least two cases and two controls")
        universe = set(self.graph.gene_universe)
        bad = [g for g in self.nonnull_genes if g not in universe]
        if bad:
            raise ValueError(f"non-null genes {bad[:3]} are outside the gene universe")
        object.__setattr__(self, "nonnull_genes", tuple(sorted(set(self.nonnull_genes))))


@dataclass(frozen=True)
class GwasSimConfig:
    """Haplotype-block genotypes with a linear trait on a few causal markers."""

    n: int
    m: int
    block_size: int
    causal: tuple[int, ...]
    amplitude: float
    maf: float = 0.1
    p11: float = 0.95

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("need at least three individuals")
        if self.m < 1 or self.block_size < 1 or self.m % self.block_size != 0:
            raise ValueError("block size must divide the number of markers")
        if not (0 < self.maf < 1) or not (0 < self.p11 < 1):
            raise ValueError("maf and p11 must lie strictly between 0 and 1")
        causal = tuple(sorted(int(i) for i in self.causal))
        if causal and (causal[0] < 0 or causal[-1] >= self.m):
            raise ValueError("causal indices out of range")
        object.__setattr__(self, "causal", causal)

    @property
    def n_blocks(self) -> int:
        return self.m // self.block_size

    def marker_ids(self) -> tuple[str, ...]:
        width = len(str(self.m))
        return tuple(f"snp{i + 1:0{width}d}" for i in range(self.m))


# ---------------------------------------------------------------------------
# ground truth
# ---------------------------------------------------------------------------


def tree_ground_truth(graph: HypothesisGraph, nonnull_leaves: Sequence[int]) -> GroundTruth:
    """A node is non-null iff a non-null leaf sits among its leaf descendants."""
    nonnull = set()
    target = set(int(i) for i in nonnull_leaves)
    for i in range(graph.m):
        if target & set(graph.leaf_descendants(i)):
            nonnull.add(i)
    return GroundTruth(frozenset(range(graph.m)) - nonnull, graph.m)


def dag_ground_truth(graph: HypothesisGraph, nonnull_genes: Sequence[str]) -> GroundTruth:
    """A node is non-null iff its annotation intersects the non-null genes."""
    if graph.annotations is None:
        raise ValueError("graph has no annotations")
    target = set(str(g) for g in nonnull_genes)
    nonnull = {i for i in range(graph.m) if graph.annotations[i] & target}
    return GroundTruth(frozenset(range(graph.m)) - nonnull, graph.m)


def gwas_ground_truth(cfg: GwasSimConfig) -> GroundTruth:
    """Every marker sharing a block with a causal marker is non-null."""
    causal_blocks = {i // cfg.block_size for i in cfg.causal}
    nonnull = {j for j in range(cfg.m) if j // cfg.block_size in causal_blocks}
    return GroundTruth(frozenset(range(cfg.m)) - nonnull, cfg.m)


def sample_nonnull_leaves(graph: HypothesisGraph, k: int, seed: int) -> tuple[int, ...]:
    """Draw a fixed set of k non-null leaves once, to be stored in the config."""
    leaves = graph.leaves()
    if k > len(leaves):
        raise ValueError("cannot pick more non-null leaves than the tree has")
    rng = np.random.default_rng(seed)
    picked = rng.choice(len(leaves), size=k, replace=False)
    return tuple(sorted(leaves[i] for i in picked))


# ---------------------------------------------------------------------------
# data generation
# ---------------------------------------------------------------------------


def _case_labels(n_cases: int, n_controls: int) -> np.ndarray:
    return np.concatenate([np.ones(n_cases, dtype=bool), np.zeros(n_controls, dtype=bool)])


def _group_pvalue_matrix(x: np.ndarray, case_cols: np.ndarray, n1: int, n2: int) -> np.ndarray:
    """Pooled two-sample t-test p-values for B relabelings at once.

    x is (n, features); case_cols is (n, B) boolean.  Returns (features, B).
    """
    df = n1 + n2 - 2
    sums = x.T @ case_cols  # features x B
    total = x.sum(axis=0)[:, None]
    m1 = sums / n1
    m2 = (total - sums) / n2
    ssq = (x * x).sum(axis=0)[:, None]
    pooled = (ssq - n1 * m1 * m1 - n2 * m2 * m2) / df
    denom = np.sqrt(np.maximum(pooled, 0.0) * (1.0 / n1 + 1.0 / n2))
    p = np.ones_like(denom)
    ok = denom > 0
    t = np.zeros_like(denom)
    t[ok] = (m1 - m2)[ok] / denom[ok]
    p[ok] = student_t_two_sided(t[ok], df)
    return p


def simulate_tree_dataset(
    cfg: TreeSimConfig, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, PValueVector]:
    """One replicate: abundance matrix, case labels, and node-level p-values."""
    leaves = cfg.graph.leaves()
    n = cfg.n_cases + cfg.n_controls
    is_case = _case_labels(cfg.n_cases, cfg.n_controls)
    mu = np.zeros((n, len(leaves)))
    nonnull_cols = [leaves.index(i) for i in cfg.nonnull_leaves]
    if nonnull_cols:
        mu[np.ix_(is_case, nonnull_cols)] = cfg.amplitude
    x = mu + rng.standard_normal((n, len(leaves)))
    leaf_p = two_sample_t_pvalues(x, is_case)
    groups = [[leaves.index(leaf) for leaf in cfg.graph.leaf_descendants(i)] for i in range(cfg.graph.m)]
    node_p = _combine_groups(leaf_p, groups, cfg.combination)
    return x, is_case, PValueVector(node_p, cfg.graph.ids)


def simulate_dag_dataset(
    cfg: DagSimConfig, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, PValueVector]:
    """One replicate: expression matrix, case labels, and node-level p-values."""
    genes = cfg.graph.gene_universe
    n = cfg.n_cases + cfg.n_controls
    is_case = _case_labels(cfg.n_cases, cfg.n_controls)
    mu = np.zeros((n, len(genes)))
    nonnull_cols = [k for k, g in enumerate(genes) if g in set(cfg.nonnull_genes)]
    if nonnull_cols:
        mu[np.ix_(is_case, nonnull_cols)] = cfg.amplitude
    x = mu + rng.standard_normal((n, len(genes)))
    gene_p = two_sample_t_pvalues(x, is_case)
    pos = {g: k for k, g in enumerate(genes)}
    groups = [sorted(pos[g] for g in cfg.graph.annotations[i]) for i in range(cfg.graph.m)]
    node_p = _combine_groups(gene_p, groups, cfg.combination)
    return x, is_case, PValueVector(node_p, cfg.graph.ids)


def _combine_groups(p, groups, method: CombinationMethod):
    if method is CombinationMethod.SIMES:
        return simes_combine(p, groups)
    if method is CombinationMethod.FISHER:
        return fisher_combine(p, groups)
    raise ValueError(f"unknown combination method {method!r}")


def simulate_genotypes(cfg: GwasSimConfig, rng: np.random.Generator) -> np.ndarray:
    """Genotypes in {0,1,2}: sum of two haplotypes from a block Markov chain.

    Within a block the chain is stationary with P(1) = maf and
    P(1->1) = p11, hence P(0->1) = maf (1-p11) / (1-maf); blocks restart
    independently.
    """
    p01 = cfg.maf * (1.0 - cfg.p11) / (1.0 - cfg.maf)
    geno = np.zeros((cfg.n, cfg.m), dtype=np.int8)
    for _ in range(2):
        state = np.zeros(cfg.n, dtype=bool)
        for j in range(cfg.m):
            u = rng.random(cfg.n)
            if j % cfg.block_size == 0:
                state = u < cfg.maf
            else:
                state = np.where(state, u < cfg.p11, u < p01)
            geno[:, j] += state
    return geno


def simulate_phenotype(cfg: GwasSimConfig, genotypes: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    y = rng.standard_normal(cfg.n)
    if cfg.causal:
        y = y + cfg.amplitude * genotypes[:, list(cfg.causal)].sum(axis=1)
    return y


def simulate_gwas_dataset(
    cfg: GwasSimConfig, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, PValueVector]:
    """One-shot draw: genotypes, phenotype, and marginal-regression p-values."""
    genotypes = simulate_genotypes(cfg, rng)
    y = simulate_phenotype(cfg, genotypes, rng)
    p = regression_slope_pvalues(genotypes, y)
    return genotypes, y, PValueVector(p, cfg.marker_ids())


# ---------------------------------------------------------------------------
# power and diagnostics
# ---------------------------------------------------------------------------


def power_pi(scores, truth: GroundTruth, t_max: float) -> float:
    """Share of the best achievable non-null prioritization weight."""
    if t_max <= 0:
        raise ValueError("t_max must be positive")
    arr = np.asarray(scores.scores if hasattr(scores, "scores") else scores, dtype=np.float64)
    nonnull = np.zeros(truth.m, dtype=bool)
    if truth.nonnulls:
        nonnull[sorted(truth.nonnulls)] = True
    return float(arr[nonnull].sum()) / t_max


class TmaxStrategy(enum.Enum):
    EXHAUSTIVE_SMALL = "exhaustive-small"
    NONNULL_EVALUATION = "nonnull-evaluation"


def nonnull_outer_antichain(graph: HypothesisGraph, truth: GroundTruth) -> frozenset[int]:
    """Non-null nodes with no non-null descendant; always an antichain."""
    nonnull_mask = 0
    for j in truth.nonnulls:
        nonnull_mask |= 1 << j
    return frozenset(
        i for i in truth.nonnulls if graph.descendant_masks[i] & nonnull_mask == 0
    )


def _nonnull_weight(filt: Filter, members: frozenset[int], truth: GroundTruth) -> float:
    ind = np.zeros(truth.m, dtype=bool)
    if members:
        ind[sorted(members)] = True
    # generic position: all p-values distinct (ties are probability zero and
    # would otherwise inflate tie-keeping filters), members ranked smallest
    p = np.empty(truth.m)
    order = np.concatenate([np.flatnonzero(ind), np.flatnonzero(~ind)])
    p[order] = np.arange(1, truth.m + 1, dtype=np.float64) / (truth.m + 1)
    scores = filt.apply(ind, p)
    nonnull = np.zeros(truth.m, dtype=bool)
    if truth.nonnulls:
        nonnull[sorted(truth.nonnulls)] = True
    return float(scores[nonnull].sum())


def compute_tmax(
    filt: Filter,
    truth: GroundTruth,
    strategy: TmaxStrategy = TmaxStrategy.NONNULL_EVALUATION,
    max_exhaustive: int = 20,
) -> float:
    """Best achievable non-null prioritization weight for this filter.

    The exhaustive strategy enumerates rejection sets inside the non-null
    set, which is where the shipped filters attain their maximum: adding a
    null discovery never raises the credit assigned to non-nulls.  The
    evaluation strategy scores a few canonical candidate sets instead.
    """
    if not truth.nonnulls:
        return 0.0
    if strategy is TmaxStrategy.EXHAUSTIVE_SMALL:
        nonnull = sorted(truth.nonnulls)
        if len(nonnull) > max_exhaustive:
            raise ValueError(
                f"exhaustive search over {len(nonnull)} non-nulls exceeds the guard of {max_exhaustive}"
            )
        best = 0.0
        for r in range(len(nonnull) + 1):
            for combo in itertools.combinations(nonnull, r):
                best = max(best, _nonnull_weight(filt, frozenset(combo), truth))
        return best
    if strategy is TmaxStrategy.NONNULL_EVALUATION:
        candidates = [frozenset(truth.nonnulls)]
        graph = getattr(filt, "graph", None)
        if graph is not None:
            leaves = set(graph.leaves())
            candidates.append(frozenset(truth.nonnulls & leaves))
            candidates.append(nonnull_outer_antichain(graph, truth))
        return max(_nonnull_weight(filt, c, truth) for c in candidates if c)
    raise ValueError(f"unknown strategy {strategy!r}")


def gamma_diagnostics(
    null_kept: np.ndarray, null_rejected: np.ndarray, total_kept: np.ndarray, total_rejected: np.ndarray
) -> tuple[float, float]:
    """(gamma, gamma0): mean kept fraction of all and of null rejections.

    Replicates with nothing rejected (or no null rejected) are skipped;
    with none left the corresponding entry is nan.
    """
    null_kept = np.asarray(null_kept, dtype=np.float64)
    null_rejected = np.asarray(null_rejected, dtype=np.float64)
    total_kept = np.asarray(total_kept, dtype=np.float64)
    total_rejected = np.asarray(total_rejected, dtype=np.float64)
    vmask = null_rejected > 0
    tmask = total_rejected > 0
    gamma0 = float(np.mean(null_kept[vmask] / null_rejected[vmask])) if vmask.any() else float("nan")
    gamma = float(np.mean(total_kept[tmask] / total_rejected[tmask])) if tmask.any() else float("nan")
    return gamma, gamma0


# ---------------------------------------------------------------------------
# engines: per-mechanism wiring of observed data, permutations, fresh draws
# ---------------------------------------------------------------------------


class _TwoGroupEngine:
    """Shared machinery for the tree and DAG mechanisms."""

    def __init__(self, graph, groups, combination, n_cases, n_controls, mu, truth, ids):
        self.graph = graph
        self.groups = groups
        self.combination = combination
        self.n_cases = n_cases
        self.n_controls = n_controls
        self.mu = mu
        self.truth = truth
        self.ids = ids
        self.is_case = _case_labels(n_cases, n_controls)

    def observed(self, rng: np.random.Generator):
        x = self.mu + rng.standard_normal(self.mu.shape)
        base_p = two_sample_t_pvalues(x, self.is_case)
        node_p = _combine_groups(base_p, self.groups, self.combination)
        return node_p, x

    def fresh_pvalues(self, rng: np.random.Generator) -> np.ndarray:
        return self.observed(rng)[0]

    def permuted_pvalues(self, context, n_perm: int, rng: np.random.Generator) -> np.ndarray:
        x = context
        n = x.shape[0]
        case_cols = np.zeros((n, n_perm), dtype=bool)
        for b in range(n_perm):
            case_cols[rng.permutation(n)[: self.n_cases], b] = True
        base_p = _group_pvalue_matrix(x, case_cols, self.n_cases, self.n_controls)
        return _combine_groups(base_p, self.groups, self.combination).T


class _GwasEngine:
    def __init__(self, cfg: GwasSimConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.genotypes = simulate_genotypes(cfg, rng).astype(np.float64)
        self.truth = gwas_ground_truth(cfg)
        self.ids = cfg.marker_ids()
        self.graph = None
        self._xc = self.genotypes - self.genotypes.mean(axis=0)
        self._sxx = (self._xc * self._xc).sum(axis=0)

    def observed(self, rng: np.random.Generator):
        y = simulate_phenotype(self.cfg, self.genotypes, rng)
        return regression_slope_pvalues(self.genotypes, y), y

    def fresh_pvalues(self, rng: np.random.Generator) -> np.ndarray:
        return self.observed(rng)[0]

    def _pvalue_matrix(self, ys: np.ndarray) -> np.ndarray:
        """Regression p-values for several phenotype columns at once."""
        n = self.cfg.n
        df = n - 2
        yc = ys - ys.mean(axis=0)
        sxy = self._xc.T @ yc  # m x B
        syy = (yc * yc).sum(axis=0)  # B
        ok = self._sxx > 0
        p = np.ones((self.cfg.m, ys.shape[1]))
        slope = sxy[ok] / self._sxx[ok][:, None]
        rss = np.maximum(syy[None, :] - slope * sxy[ok], 0.0)
        se = np.sqrt(rss / (df * self._sxx[ok][:, None]))
        t = np.zeros_like(slope)
        good = se > 0
        t[good] = slope[good] / se[good]
        pv = np.ones_like(slope)
        pv[good] = student_t_two_sided(t[good], df)
        pv[~good] = np.where(slope[~good] == 0, 1.0, 0.0)
        p[ok] = pv
        return p

    def permuted_pvalues(self, context, n_perm: int, rng: np.random.Generator) -> np.ndarray:
        y = context
        ys = np.column_stack([y[rng.permutation(y.size)] for _ in range(n_perm)])
        return self._pvalue_matrix(ys).T


def _make_engine(config, rng: np.random.Generator):
    if isinstance(config, TreeSimConfig):
        leaves = config.graph.leaves()
        groups = [
            [leaves.index(leaf) for leaf in config.graph.leaf_descendants(i)]
            for i in range(config.graph.m)
        ]
        n = config.n_cases + config.n_controls
        mu = np.zeros((n, len(leaves)))
        cols = [leaves.index(i) for i in config.nonnull_leaves]
        if cols:
            mu[np.ix_(_case_labels(config.n_cases, config.n_controls), cols)] = config.amplitude
        truth = tree_ground_truth(config.graph, config.nonnull_leaves)
        return _TwoGroupEngine(
            config.graph, groups, config.combination, config.n_cases, config.n_controls, mu, truth, config.graph.ids
        )
    if isinstance(config, DagSimConfig):
        genes = config.graph.gene_universe
        pos = {g: k for k, g in enumerate(genes)}
        groups = [sorted(pos[g] for g in config.graph.annotations[i]) for i in range(config.graph.m)]
        n = config.n_cases + config.n_controls
        mu = np.zeros((n, len(genes)))
        cols = [pos[g] for g in config.nonnull_genes]
        if cols:
            mu[np.ix_(_case_labels(config.n_cases, config.n_controls), cols)] = config.amplitude
        truth = dag_ground_truth(config.graph, config.nonnull_genes)
        return _TwoGroupEngine(
            config.graph, groups, config.combination, config.n_cases, config.n_controls, mu, truth, config.graph.ids
        )
    if isinstance(config, GwasSimConfig):
        return _GwasEngine(config, rng)
    raise TypeError(f"unknown simulation config {type(config).__name__}")


# ---------------------------------------------------------------------------
# the replicate runner
# ---------------------------------------------------------------------------

_KINDS = (
    "bh",
    "storey-bh",
    "focused-bh",
    "focused-storey-bh",
    "focused-reshaped-bh",
    "focused-bh-perm",
    "focused-bh-oracle",
)


@dataclass(frozen=True)
class ProcedureSpec:
    """One entry of the per-replicate method roster."""

    kind: str
    name: str = ""
    lam: float | None = None
    n_permutations: int = 100
    n_oracle: int = 1000

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown procedure kind {self.kind!r}")
        if not self.name:
            object.__setattr__(self, "name", self.kind)


@dataclass(frozen=True)
class MetricSummary:
    mean: float
    se: float


@dataclass(frozen=True)
class ProcedureSummary:
    name: str
    fdr_pre: MetricSummary
    fdr_post: MetricSummary
    power_pre: MetricSummary
    power_post: MetricSummary
    gamma: float
    gamma0: float


@dataclass(frozen=True)
class ReplicateReport:
    kind: str
    amplitude: float
    q: float
    n_replicates: int
    master_seed: int
    t_max: float
    procedures: tuple[ProcedureSummary, ...] = field(default_factory=tuple)

    def procedure(self, name: str) -> ProcedureSummary:
        for s in self.procedures:
            if s.name == name:
                return s
        raise KeyError(f"no procedure named {name!r} in the report")


def _fdp_at_threshold(result, q: float):
    trace = dict(result.fdp_hat_trace)
    value = trace.get(result.threshold)
    if value is not None and value > q + 1e-9 and result.threshold > 0:
        raise AssertionError("step-up invariant violated: estimated FDP above q at the chosen threshold")


def _run_procedures(engine, filt, specs, q, p_vec, context, rng, oracle_vhats):
    """Returns per-spec arrays (fdp_pre, fdp_post, pow_pre_raw, pow_post_raw, vf, v, tf, t)."""
    perm_cache: dict[int, np.ndarray] = {}
    for spec in specs:
        if spec.kind == "focused-bh-perm" and spec.n_permutations not in perm_cache:
            perm_cache[spec.n_permutations] = np.clip(
                engine.permuted_pvalues(context, spec.n_permutations, rng), 0.0, 1.0
            )
    out = []
    trivial = TrivialFilter()
    truth = engine.truth
    null_ind = truth.null_indicator()
    nonnull_ind = ~null_ind
    for spec in specs:
        if spec.kind == "bh":
            result = bh(p_vec, q)
            post_scores = filt.apply(result.pre_filter, p_vec)
        elif spec.kind == "storey-bh":
            result = focused_storey_bh(p_vec, q, trivial, spec.lam if spec.lam is not None else q)
            post_scores = filt.apply(result.pre_filter, p_vec)
        elif spec.kind == "focused-bh":
            result = focused_bh(p_vec, q, filt)
            post_scores = result.post_filter.scores
        elif spec.kind == "focused-storey-bh":
            result = focused_storey_bh(p_vec, q, filt, spec.lam if spec.lam is not None else q)
            post_scores = result.post_filter.scores
        elif spec.kind == "focused-reshaped-bh":
            result = focused_reshaped_bh(p_vec, q, filt, by_reshaping(p_vec.m))
            post_scores = result.post_filter.scores
        elif spec.kind == "focused-bh-perm":
            result = focused_bh_with_vhat(p_vec, q, filt, PermutationVhat(perm_cache[spec.n_permutations]))
            post_scores = result.post_filter.scores
        elif spec.kind == "focused-bh-oracle":
            result = focused_bh_with_vhat(p_vec, q, filt, oracle_vhats[spec.n_oracle])
            post_scores = result.post_filter.scores
        else:  # pragma: no cover
            raise ValueError(spec.kind)
        _fdp_at_threshold(result, q)
        rejected = result.pre_filter.indicator()
        v = float((rejected & null_ind).sum())
        t = float(rejected.sum())
        vf = float(post_scores[null_ind].sum())
        tf = float(post_scores.sum())
        fdp_pre = v / t if t > 0 else 0.0
        fdp_post = generalized_fdp(post_scores, truth)
        pow_pre_raw = float((rejected & nonnull_ind).sum())
        pow_post_raw = float(post_scores[nonnull_ind].sum())
        out.append((fdp_pre, fdp_post, pow_pre_raw, pow_post_raw, vf, v, tf, t))
    return out


def _replicate_batch(args):
    engine, filt, specs, q, seeds, oracle_vhats = args
    rows = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        node_p, context = engine.observed(rng)
        p_vec = PValueVector(np.clip(node_p, 0.0, 1.0), engine.ids)
        rows.append(_run_procedures(engine, filt, specs, q, p_vec, context, rng, oracle_vhats))
    return rows


def _summarize(values: np.ndarray) -> MetricSummary:
    n = values.size
    mean = float(values.mean()) if n else float("nan")
    se = float(values.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return MetricSummary(mean, se)


def run_replicates(
    procedures: Sequence[ProcedureSpec],
    filt: Filter,
    config,
    n_reps: int,
    master_seed: int,
    q: float = 0.1,
    n_workers: int | None = None,
) -> ReplicateReport:
    """Run every procedure on n_reps fresh datasets and aggregate the metrics.

    Results are a pure function of master_seed: structure, oracle
    calibration, and each replicate draw from independently spawned
    streams, and aggregation is ordered by replicate index regardless of
    the worker count.
    """
    if n_reps < 1:
        raise ValueError("need at least one replicate")
    specs = tuple(procedures)
    if not specs:
        raise ValueError("need at least one procedure")
    if len({s.name for s in specs}) != len(specs):
        raise ValueError("procedure names must be unique")
    seed_root = np.random.SeedSequence(master_seed)
    structure_ss, oracle_ss, *rep_ss = seed_root.spawn(2 + n_reps)
    engine = _make_engine(config, np.random.default_rng(structure_ss))

    if any(s.kind == "focused-bh-perm" for s in specs) and engine.graph is not None:
        if not check_logical_relationships(engine.graph, engine.truth):
            raise ValueError(
                "permutation calibration on a graph requires descendants of nulls to be null"
            )

    oracle_sizes = sorted({s.n_oracle for s in specs if s.kind == "focused-bh-oracle"})
    oracle_vhats = {}
    for sub, n_mc in zip(oracle_ss.spawn(len(oracle_sizes)), oracle_sizes):
        oracle_vhats[n_mc] = OracleVhat.estimate(
            engine.fresh_pvalues, engine.truth.null_indicator(), filt, n_mc, np.random.default_rng(sub)
        )

    t_max = compute_tmax(filt, engine.truth)
    n_nonnull = len(engine.truth.nonnulls)

    n_workers = worker_count() if n_workers is None else max(1, n_workers)
    n_workers = min(n_workers, n_reps)
    if n_workers == 1:
        rows = _replicate_batch((engine, filt, specs, q, rep_ss, oracle_vhats))
    else:
        chunks = [rep_ss[i::n_workers] for i in range(n_workers)]
        order = [i for w in range(n_workers) for i in range(w, n_reps, n_workers)]
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            parts = list(
                pool.map(_replicate_batch, [(engine, filt, specs, q, c, oracle_vhats) for c in chunks])
            )
        interleaved = [row for part in parts for row in part]
        rows = [None] * n_reps
        for pos, original in enumerate(order):
            rows[original] = interleaved[pos]

    data = np.asarray(rows, dtype=np.float64)  # n_reps x n_specs x 8
    summaries = []
    for si, spec in enumerate(specs):
        fdp_pre, fdp_post, pow_pre_raw, pow_post_raw, vf, v, tf, t = (data[:, si, k] for k in range(8))
        gamma, gamma0 = gamma_diagnostics(vf, v, tf, t)
        power_pre = pow_pre_raw / max(n_nonnull, 1)
        power_post = pow_post_raw / t_max if t_max > 0 else np.zeros_like(pow_post_raw)
        summaries.append(
            ProcedureSummary(
                name=spec.name,
                fdr_pre=_summarize(fdp_pre),
                fdr_post=_summarize(fdp_post),
                power_pre=_summarize(power_pre),
                power_post=_summarize(power_post),
                gamma=gamma,
                gamma0=gamma0,
            )
        )
    kind = {"TreeSimConfig": "tree", "DagSimConfig": "dag", "GwasSimConfig": "gwas"}[type(config).__name__]
    return ReplicateReport(
        kind=kind,
        amplitude=float(config.amplitude),
        q=q,
        n_replicates=n_reps,
        master_seed=master_seed,
        t_max=t_max,
        procedures=tuple(summaries),
    )

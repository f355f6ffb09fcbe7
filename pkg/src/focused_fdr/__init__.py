"""FDR control for filtered and prioritized discoveries.

The library couples step-up multiple testing procedures with pluggable
filters (clumping, outer nodes, soft outer nodes, screening, fixed
weights), verifies the regularity properties those filters need for
error-rate guarantees, and ships a seeded simulation harness comparing
the procedures on tree-, DAG-, and genotype-structured data.
"""

from .core import (
    GroundTruth,
    PrioritizationVector,
    ProcedureResult,
    PValueVector,
    RejectionSet,
    generalized_fdp,
    weighted_count,
)
from .filters import (
    BlockPartition,
    ClumpingFilter,
    Counterexample,
    Filter,
    FilterProperty,
    FilterTraits,
    FixedWeightsFilter,
    OuterNodesFilter,
    PropertyCheckResult,
    PropertyDomain,
    PropertyDomainError,
    ScreeningFilter,
    SoftOuterNodesFilter,
    StructureClass,
    StructureInducedFilter,
    TrivialFilter,
    antichain_class,
    apply_filter,
    block_argmin_screen,
    check_filter_property,
    load_block_partition,
    load_fixed_weights,
    soft_outer_weighted_count_identity,
)
from .graph import (
    CombinationMethod,
    HypothesisGraph,
    check_logical_relationships,
    combine_node_pvalues,
    fisher_combine,
    is_ancestor,
    load_annotations,
    load_edge_list,
    random_annotated_dag,
    random_dag,
    random_tree,
    simes_combine,
)
from .procedures import (
    CountingVhat,
    OracleVhat,
    PermutationVhat,
    ReshapingFunction,
    StoreyCountingVhat,
    bh,
    by_reshaping,
    focused_bh,
    focused_bh_with_vhat,
    focused_reshaped_bh,
    focused_storey_bh,
    identity_reshaping,
    multi_focus_bh,
    storey_m0,
    structured_bh,
)
from .simulate import (
    DagSimConfig,
    GwasSimConfig,
    MetricSummary,
    ProcedureSpec,
    ProcedureSummary,
    ReplicateReport,
    TmaxStrategy,
    TreeSimConfig,
    compute_tmax,
    dag_ground_truth,
    gamma_diagnostics,
    gwas_ground_truth,
    nonnull_outer_antichain,
    power_pi,
    run_replicates,
    sample_nonnull_leaves,
    simulate_dag_dataset,
    simulate_genotypes,
    simulate_gwas_dataset,
    simulate_tree_dataset,
    tree_ground_truth,
)

__version__ = "0.1.0"

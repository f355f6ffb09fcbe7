"""Command-line surface: analyze, simulate, check-filter, tmax.

Exit codes: 0 on success, 2 on input/usage errors, 1 on internal errors.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .core import PValueVector
from .fileio import load_permutation_matrix, load_pvalues, write_result_csv, write_summary_csv
from .filters import (
    BlockPartition,
    ClumpingFilter,
    FilterProperty,
    OuterNodesFilter,
    PropertyDomain,
    SoftOuterNodesFilter,
    TrivialFilter,
    block_argmin_screen,
    check_filter_property,
    load_block_partition,
    load_fixed_weights,
)
from .graph import HypothesisGraph, load_annotations, load_edge_list
from .procedures import (
    PermutationVhat,
    bh,
    by_reshaping,
    focused_bh,
    focused_bh_with_vhat,
    focused_reshaped_bh,
    focused_storey_bh,
    identity_reshaping,
    multi_focus_bh,
)
from .report import render_report_figure, write_report_csv
from .scenarios import SCENARIO_KINDS, build_scenario, load_scenario_file, run_scenario, scenario_filter
from .simulate import TmaxStrategy, compute_tmax, worker_count

FILTER_KINDS = (
    "trivial",
    "fixed-weights",
    "clumping",
    "outer-nodes",
    "soft-outer-nodes",
    "block-argmin-screen",
)

METHODS = (
    "bh",
    "storey-bh",
    "focused-bh",
    "focused-storey-bh",
    "focused-reshaped-bh",
    "multi-focus-bh",
)


class InputError(Exception):
    """User-facing configuration or file problem."""


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="focused-fdr",
        description="FDR control for filtered and prioritized discoveries",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    pa = sub.add_parser("analyze", help="run a testing procedure on a p-value file")
    pa.add_argument("--pvalues", required=True, help="TSV with header id<TAB>pvalue")
    pa.add_argument(
        "--filter",
        action="append",
        choices=FILTER_KINDS,
        help="filter kind; repeat the flag for multi-focus-bh",
    )
    pa.add_argument("--method", choices=METHODS, default="focused-bh")
    pa.add_argument("--q", type=float, default=0.1)
    pa.add_argument("--q-list", help="comma-separated levels for multi-focus-bh")
    pa.add_argument("--lambda", dest="lam", type=float, help="null-proportion tuning (default: q)")
    pa.add_argument("--reshaping", choices=("by", "identity"), default="by")
    pa.add_argument("--graph", help="edge-list TSV for graph filters")
    pa.add_argument("--annotations", help="node annotation TSV for soft-outer-nodes")
    pa.add_argument("--blocks", help="id<TAB>block TSV for clumping / screening")
    pa.add_argument("--weights", help="id<TAB>weight TSV for fixed-weights")
    pa.add_argument("--permutations", help="permuted p-value matrix TSV (focused-bh only)")
    pa.add_argument("--out", default=".", help="output directory")

    ps = sub.add_parser("simulate", help="run a bundled or configured simulation scenario")
    ps.add_argument("--kind", choices=SCENARIO_KINDS)
    ps.add_argument("--config", help="TOML scenario file (overrides --kind)")
    ps.add_argument("--reps", type=int, required=True)
    ps.add_argument("--seed", type=int, help="master seed (required)")
    ps.add_argument("--q", type=float, default=0.1)
    ps.add_argument("--amplitudes", help="comma-separated amplitude grid override")
    ps.add_argument("--format", choices=("csv",), default="csv")
    ps.add_argument("--no-plot", action="store_true", help="skip the report figure")
    ps.add_argument("--out", default=".", help="output directory")

    pc = sub.add_parser("check-filter", help="verify a filter regularity property exhaustively")
    pc.add_argument("--filter", required=True, choices=FILTER_KINDS)
    pc.add_argument(
        "--property",
        required=True,
        choices=tuple(p.value for p in FilterProperty),
    )
    pc.add_argument("--graph", help="edge-list TSV for graph filters")
    pc.add_argument("--annotations", help="node annotation TSV for soft-outer-nodes")
    pc.add_argument("--blocks", help="id<TAB>block TSV for clumping / screening")
    pc.add_argument("--m", type=int, help="number of hypotheses (trivial filter only)")
    pc.add_argument("--grid", default="0.1,0.5,0.9", help="comma-separated p-value grid")
    pc.add_argument("--max-evals", type=int, default=2_000_000)

    pt = sub.add_parser("tmax", help="print the power normalizer of a scenario's filter")
    pt.add_argument("--kind", choices=SCENARIO_KINDS)
    pt.add_argument("--config", help="TOML scenario file (overrides --kind)")
    pt.add_argument(
        "--strategy",
        choices=tuple(s.value for s in TmaxStrategy),
        default=TmaxStrategy.NONNULL_EVALUATION.value,
    )
    return parser


def _align_graph(graph: HypothesisGraph, ids: tuple[str, ...]) -> HypothesisGraph:
    """Reindex graph nodes into the order of the p-value file."""
    if set(graph.ids) != set(ids):
        missing = sorted(set(graph.ids) ^ set(ids))
        raise InputError(f"graph nodes and p-value ids differ (e.g. {missing[:3]})")
    old_index = {s: k for k, s in enumerate(graph.ids)}
    new_index = {s: k for k, s in enumerate(ids)}
    remap = {old_index[s]: new_index[s] for s in ids}
    edges = [(remap[a], remap[b]) for a, b in graph.edges]
    annotations = None
    if graph.annotations is not None:
        annotations = {remap[i]: genes for i, genes in enumerate(graph.annotations)}
    return HypothesisGraph(ids, edges, annotations=annotations, gene_universe=graph.gene_universe)


def _load_graph(args, ids=None, need_annotations=False) -> HypothesisGraph:
    if not args.graph:
        raise InputError("this filter needs --graph")
    graph = load_edge_list(args.graph)
    if args.annotations:
        graph = load_annotations(args.annotations, graph)
    if need_annotations and graph.annotations is None:
        raise InputError("soft-outer-nodes needs --annotations")
    if ids is not None:
        graph = _align_graph(graph, ids)
    return graph


def _build_filter(kind: str, args, pvec: PValueVector | None):
    ids = pvec.ids if pvec is not None else None
    if kind == "trivial":
        return TrivialFilter()
    if kind == "fixed-weights":
        if not args.weights:
            raise InputError("fixed-weights needs --weights")
        if ids is None:
            raise InputError("fixed-weights needs a p-value file for the id order")
        return load_fixed_weights(args.weights, ids)
    if kind in ("clumping", "block-argmin-screen"):
        if not args.blocks:
            raise InputError(f"{kind} needs --blocks")
        if ids is not None:
            partition = load_block_partition(args.blocks, ids)
        else:
            _, partition = _blocks_from_file(args.blocks)
        return ClumpingFilter(partition) if kind == "clumping" else block_argmin_screen(partition)
    if kind == "outer-nodes":
        return OuterNodesFilter(_load_graph(args, ids))
    if kind == "soft-outer-nodes":
        return SoftOuterNodesFilter(_load_graph(args, ids, need_annotations=True))
    raise InputError(f"unknown filter kind {kind!r}")


def _blocks_from_file(path) -> tuple[tuple[str, ...], BlockPartition]:
    from .graph import _data_lines

    ids: list[str] = []
    labels: list[str] = []
    seen: set[str] = set()
    for lineno, line in _data_lines(path):
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0] or not parts[1]:
            raise InputError(f"{path}:{lineno}: expected 'id<TAB>block_id'")
        if parts[0] in seen:
            raise InputError(f"{path}:{lineno}: duplicate id {parts[0]!r}")
        seen.add(parts[0])
        ids.append(parts[0])
        labels.append(parts[1])
    if not ids:
        raise InputError(f"{path}: empty block file")
    return tuple(ids), BlockPartition.from_labels(labels)


def _parse_float_list(raw: str, flag: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in raw.split(",") if v.strip())
    except ValueError:
        raise InputError(f"{flag} expects comma-separated numbers") from None


def _cmd_analyze(args) -> int:
    pvec = load_pvalues(args.pvalues)
    filter_kinds = args.filter or ["trivial"]
    if args.method != "multi-focus-bh" and len(filter_kinds) != 1:
        raise InputError("only multi-focus-bh accepts multiple --filter flags")
    if args.method in ("bh", "storey-bh") and filter_kinds != ["trivial"]:
        raise InputError(f"method {args.method} ignores filters; use --filter trivial or a focused method")
    if args.permutations and args.method != "focused-bh":
        raise InputError("--permutations is only supported with --method focused-bh")
    q = args.q
    lam = args.lam if args.lam is not None else q
    os.makedirs(args.out, exist_ok=True)
    result_path = os.path.join(args.out, "result.csv")
    summary_path = os.path.join(args.out, "summary.csv")

    if args.method == "multi-focus-bh":
        filters = [_build_filter(kind, args, pvec) for kind in filter_kinds]
        if args.q_list:
            qs = _parse_float_list(args.q_list, "--q-list")
        else:
            qs = tuple(q for _ in filters)
        if len(qs) != len(filters):
            raise InputError("--q-list must name one level per --filter")
        results = multi_focus_bh(pvec, filters, qs)
        rejected = results[0].pre_filter.indicator()
        names = []
        for i, kind in enumerate(filter_kinds):
            names.append(kind if filter_kinds.count(kind) == 1 else f"{kind}#{i + 1}")
        score_columns = {
            f"score_post:{name}": res.post_filter.scores for name, res in zip(names, results)
        }
        write_result_csv(result_path, pvec, rejected, score_columns)
        summary = {
            "method": args.method,
            "t_star": results[0].threshold,
            "n_rejected_pre": float(rejected.sum()),
        }
        for name, res in zip(names, results):
            summary[f"weighted_count_post:{name}"] = float(res.post_filter.scores.sum())
        write_summary_csv(summary_path, summary)
        print(f"t_star={results[0].threshold!r} n_rejected_pre={int(rejected.sum())}")
        for name, res in zip(names, results):
            print(f"weighted_count_post[{name}]={float(res.post_filter.scores.sum())!r}")
        return 0

    filt = _build_filter(filter_kinds[0], args, pvec)
    if args.method == "bh":
        result = bh(pvec, q)
    elif args.method == "storey-bh":
        result = focused_storey_bh(pvec, q, TrivialFilter(), lam)
    elif args.method == "focused-bh":
        if args.permutations:
            perm = load_permutation_matrix(args.permutations, pvec.ids)
            result = focused_bh_with_vhat(pvec, q, filt, PermutationVhat(perm))
        else:
            result = focused_bh(pvec, q, filt)
    elif args.method == "focused-storey-bh":
        result = focused_storey_bh(pvec, q, filt, lam)
    elif args.method == "focused-reshaped-bh":
        beta = by_reshaping(pvec.m) if args.reshaping == "by" else identity_reshaping()
        result = focused_reshaped_bh(pvec, q, filt, beta)
    else:  # pragma: no cover
        raise InputError(f"unknown method {args.method!r}")

    rejected = result.pre_filter.indicator()
    scores = result.post_filter.scores
    write_result_csv(result_path, pvec, rejected, {"score_post": scores})
    write_summary_csv(
        summary_path,
        {
            "method": args.method,
            "filter": filter_kinds[0],
            "t_star": result.threshold,
            "n_rejected_pre": float(rejected.sum()),
            "weighted_count_post": float(scores.sum()),
        },
    )
    print(
        f"t_star={result.threshold!r} n_rejected_pre={int(rejected.sum())} "
        f"weighted_count_post={float(scores.sum())!r}"
    )
    return 0


def _cmd_simulate(args) -> int:
    if args.seed is None:
        raise InputError("simulate needs an explicit --seed for reproducibility")
    if args.reps < 1:
        raise InputError("--reps must be at least 1")
    if args.config:
        scenario = load_scenario_file(args.config)
    elif args.kind:
        scenario = build_scenario(args.kind)
    else:
        raise InputError("simulate needs --kind or --config")
    if args.amplitudes:
        from dataclasses import replace

        scenario = replace(scenario, amplitudes=_parse_float_list(args.amplitudes, "--amplitudes"))
    os.makedirs(args.out, exist_ok=True)
    reports = run_scenario(scenario, args.reps, args.seed, q=args.q, n_workers=worker_count())
    csv_path = os.path.join(args.out, "report.csv")
    write_report_csv(csv_path, reports)
    print(f"wrote {csv_path} ({len(reports)} amplitude(s), {args.reps} replicates, seed {args.seed})")
    if not args.no_plot:
        png_path = os.path.join(args.out, "report.png")
        render_report_figure(png_path, reports)
        print(f"wrote {png_path}")
    return 0


def _cmd_check_filter(args) -> int:
    prop = FilterProperty(args.property)
    filt = None
    blocks_of = None
    if args.filter == "trivial":
        if not args.m:
            raise InputError("trivial filter needs --m")
        m = args.m
        filt = TrivialFilter()
    elif args.filter in ("clumping", "block-argmin-screen"):
        if not args.blocks:
            raise InputError(f"{args.filter} needs --blocks")
        _, partition = _blocks_from_file(args.blocks)
        m = partition.m
        filt = ClumpingFilter(partition) if args.filter == "clumping" else block_argmin_screen(partition)
        block_of = partition.block_of()
        blocks_of = {j: tuple(partition.blocks[block_of[j]]) for j in range(m)}
    elif args.filter in ("outer-nodes", "soft-outer-nodes"):
        graph = _load_graph(args, None, need_annotations=args.filter == "soft-outer-nodes")
        m = graph.m
        filt = OuterNodesFilter(graph) if args.filter == "outer-nodes" else SoftOuterNodesFilter(graph)
    else:
        raise InputError(f"check-filter does not support the {args.filter!r} filter")
    if prop in (FilterProperty.BLOCK_SIMPLE, FilterProperty.STRONGLY_BLOCK_SIMPLE) and blocks_of is None:
        raise InputError("block properties need --blocks to define the index groups")
    domain = PropertyDomain(
        m=m, p_grid=_parse_float_list(args.grid, "--grid"), max_evals=args.max_evals
    )
    result = check_filter_property(filt, prop, domain, blocks_of=blocks_of)
    print(f"filter={args.filter} property={prop.value} holds={'yes' if result.holds else 'no'}")
    if result.counterexample is not None:
        print(f"counterexample: {result.counterexample.describe()}")
    return 0


def _cmd_tmax(args) -> int:
    if args.config:
        scenario = load_scenario_file(args.config)
    elif args.kind:
        scenario = build_scenario(args.kind)
    else:
        raise InputError("tmax needs --kind or --config")
    from .simulate import _make_engine  # structure seed irrelevant for truth

    engine = _make_engine(scenario.config, np.random.default_rng(0))
    filt = scenario_filter(scenario)
    value = compute_tmax(filt, engine.truth, TmaxStrategy(args.strategy))
    print(f"t_max={value!r}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "analyze":
            return _cmd_analyze(args)
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "check-filter":
            return _cmd_check_filter(args)
        if args.command == "tmax":
            return _cmd_tmax(args)
        raise InputError(f"unknown command {args.command!r}")
    except (InputError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - internal failures
        print(f"internal error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

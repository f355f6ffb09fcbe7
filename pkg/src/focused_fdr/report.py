"""Rendering of replicate reports: long-format CSV plus a summary figure."""

from __future__ import annotations

import csv
from typing import Sequence

from matplotlib.figure import Figure

from .simulate import ReplicateReport

__all__ = ["REPORT_COLUMNS", "report_rows", "write_report_csv", "render_report_figure"]

REPORT_COLUMNS = ("kind", "amplitude", "procedure", "phase", "metric", "value", "se")


def _fmt(x: float) -> str:
    return format(float(x), ".12g")


def report_rows(reports: Sequence[ReplicateReport]) -> list[tuple]:
    """One row per procedure x phase x metric, plus filter-kept ratios."""
    rows = []
    for report in reports:
        for proc in report.procedures:
            base = (report.kind, _fmt(report.amplitude), proc.name)
            rows.append((*base, "pre", "fdr", _fmt(proc.fdr_pre.mean), _fmt(proc.fdr_pre.se)))
            rows.append((*base, "post", "fdr", _fmt(proc.fdr_post.mean), _fmt(proc.fdr_post.se)))
            rows.append((*base, "pre", "power", _fmt(proc.power_pre.mean), _fmt(proc.power_pre.se)))
            rows.append((*base, "post", "power", _fmt(proc.power_post.mean), _fmt(proc.power_post.se)))
            rows.append((*base, "filter", "gamma", _fmt(proc.gamma), ""))
            rows.append((*base, "filter", "gamma0", _fmt(proc.gamma0), ""))
    return rows


def write_report_csv(path, reports: Sequence[ReplicateReport]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_COLUMNS)
        writer.writerows(report_rows(reports))


def render_report_figure(path, reports: Sequence[ReplicateReport]) -> None:
    """2x2 panel of pre/post FDR and power against the signal amplitude."""
    if not reports:
        raise ValueError("nothing to plot")
    reports = sorted(reports, key=lambda r: r.amplitude)
    amplitudes = [r.amplitude for r in reports]
    names = [p.name for p in reports[0].procedures]
    q = reports[0].q

    fig = Figure(figsize=(9.5, 7.0))
    axes = fig.subplots(2, 2, sharex=True)
    panels = [
        ("fdr", "pre", "FDR before filtering", axes[0][0]),
        ("fdr", "post", "FDR after filtering", axes[0][1]),
        ("power", "pre", "Power before filtering", axes[1][0]),
        ("power", "post", "Power after filtering", axes[1][1]),
    ]
    for metric, phase, title, ax in panels:
        for name in names:
            series = []
            errors = []
            for r in reports:
                proc = r.procedure(name)
                summary = getattr(proc, f"{metric}_{phase}")
                series.append(summary.mean)
                errors.append(summary.se)
            if metric == "fdr":
                ax.errorbar(amplitudes, series, yerr=errors, marker="o", markersize=3.5, label=name)
            else:
                ax.plot(amplitudes, series, marker="o", markersize=3.5, label=name)
        if metric == "fdr":
            ax.axhline(q, color="gray", linestyle="--", linewidth=1)
        ax.set_title(title, fontsize=10)
        ax.set_ylim(bottom=0)
        ax.grid(alpha=0.3)
    axes[1][0].set_xlabel("signal amplitude")
    axes[1][1].set_xlabel("signal amplitude")
    axes[0][0].legend(fontsize=8)
    fig.suptitle(
        f"{reports[0].kind} scenario, {reports[0].n_replicates} replicates, q = {q:g}", fontsize=11
    )
    fig.tight_layout()
    fig.savefig(path, dpi=150)

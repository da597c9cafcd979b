"""Evaluation reports: aligned text tables, TSV, and rendered figures.

The headline grid shows one row per system and one column per decoding
condition (chunk size); each cell is ``WER(delta) [lo;hi]`` in percent, the
delta taken against the first (baseline) system. The edit breakdown lists
insertion/deletion/substitution counts with relative deltas. write_report
emits the text report, a machine-readable TSV, and a WER-with-CI figure side
by side.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .errors import ParameterError
from .evaluate import BootstrapCI, EditCounts


@dataclass(frozen=True)
class EvalCell:
    wer: float  # fraction, not percent
    ci: BootstrapCI
    counts: EditCounts


@dataclass(frozen=True)
class SystemEval:
    name: str
    cells: Dict[str, EvalCell]  # keyed by condition name


def wer_cell_text(cell: EvalCell, baseline: Optional[EvalCell]) -> str:
    """``7.21(-0.34) [6.89;7.53]``; the delta is omitted for the baseline."""
    wer = 100.0 * cell.wer
    ci = f"[{100.0 * cell.ci.lower:.2f};{100.0 * cell.ci.upper:.2f}]"
    if baseline is None:
        return f"{wer:.2f} {ci}"
    delta = wer - 100.0 * baseline.wer
    return f"{wer:.2f}({delta:+.2f}) {ci}"


def _relative_delta(value: int, base: int) -> str:
    if base == 0:
        return "n/a"
    return f"{100.0 * (value - base) / base:+.2f}%"


def format_results_table(systems: Sequence[SystemEval], conditions: Sequence[str]) -> str:
    """Headline WER grid; the first system is the baseline for deltas."""
    if not systems:
        raise ParameterError("no systems to report")
    base = systems[0]
    header = ["system"] + list(conditions)
    rows = [header]
    for sys_eval in systems:
        row = [sys_eval.name]
        for cond in conditions:
            cell = sys_eval.cells[cond]
            ref = None if sys_eval.name == base.name else base.cells[cond]
            row.append(wer_cell_text(cell, ref))
        rows.append(row)
    widths = [max(len(r[c]) for r in rows) for c in range(len(header))]
    lines = []
    for i, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(widths[c]) for c, cell in enumerate(row)))
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def format_edit_breakdown(
    systems: Sequence[SystemEval], condition: str
) -> str:
    """Per-condition edit-type table with relative deltas vs the baseline."""
    base = systems[0].cells[condition].counts
    lines = [f"edit breakdown @ {condition}"]
    header = ["metric"] + [s.name for s in systems]
    rows = [header]
    wer_row = ["WER (%)"]
    for s in systems:
        wer_row.append(f"{100.0 * s.cells[condition].wer:.2f}")
    rows.append(wer_row)
    for label, attr in (
        ("insertions", "insertions"),
        ("deletions", "deletions"),
        ("substitutions", "substitutions"),
    ):
        row = [label]
        for s in systems:
            val = getattr(s.cells[condition].counts, attr)
            if s is systems[0]:
                row.append(f"{val}")
            else:
                row.append(f"{val} ({_relative_delta(val, getattr(base, attr))})")
        rows.append(row)
    widths = [max(len(r[c]) for r in rows) for c in range(len(header))]
    for i, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(widths[c]) for c, cell in enumerate(row)))
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def results_tsv(systems: Sequence[SystemEval], conditions: Sequence[str]) -> str:
    base = systems[0]
    lines = [
        "system\tcondition\twer_pct\tci_lower_pct\tci_upper_pct\tdelta_pct"
        "\tinsertions\tdeletions\tsubstitutions\treference_words"
    ]
    for s in systems:
        for cond in conditions:
            cell = s.cells[cond]
            delta = 100.0 * (cell.wer - base.cells[cond].wer)
            c = cell.counts
            lines.append(
                f"{s.name}\t{cond}\t{100.0 * cell.wer:.4f}"
                f"\t{100.0 * cell.ci.lower:.4f}\t{100.0 * cell.ci.upper:.4f}"
                f"\t{delta:+.4f}\t{c.insertions}\t{c.deletions}"
                f"\t{c.substitutions}\t{c.reference_words}"
            )
    return "\n".join(lines) + "\n"


def render_wer_figure(path, systems: Sequence[SystemEval], conditions: Sequence[str]) -> None:
    """WER per condition with CI whiskers, one line per system."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    xs = range(len(conditions))
    for offset, s in enumerate(systems):
        wers = [100.0 * s.cells[c].wer for c in conditions]
        lo = [100.0 * (s.cells[c].wer - s.cells[c].ci.lower) for c in conditions]
        hi = [100.0 * (s.cells[c].ci.upper - s.cells[c].wer) for c in conditions]
        jitter = [x + 0.03 * offset for x in xs]
        ax.errorbar(jitter, wers, yerr=[lo, hi], marker="o", capsize=3, label=s.name)
    ax.set_xticks(list(xs))
    ax.set_xticklabels(list(conditions))
    ax.set_xlabel("decoding condition")
    ax.set_ylabel("WER (%)")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_loss_curves(path, logs) -> None:
    """Training curves: transduction, distillation, and total loss per step."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    steps = [entry.step for entry in logs]
    ax.plot(steps, [entry.rnnt for entry in logs], label="transducer")
    ax.plot(steps, [entry.mse for entry in logs], label="distillation")
    ax.plot(steps, [entry.total for entry in logs], label="total")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_report(outdir, systems: Sequence[SystemEval], conditions: Sequence[str]) -> Dict[str, Path]:
    """Text report + TSV + WER figure under ``outdir``; returns the paths."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    sections = [format_results_table(systems, conditions)]
    for cond in conditions:
        sections.append("")
        sections.append(format_edit_breakdown(systems, cond))
    text = "\n".join(sections) + "\n"
    paths = {
        "text": out / "report.txt",
        "tsv": out / "report.tsv",
        "figure": out / "wer.png",
    }
    paths["text"].write_text(text, encoding="utf-8")
    paths["tsv"].write_text(results_tsv(systems, conditions), encoding="utf-8")
    render_wer_figure(paths["figure"], systems, conditions)
    return paths

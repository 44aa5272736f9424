"""Reuse statistics over a skill bank and growth curves over bank history."""

from __future__ import annotations

import csv
import io
from dataclasses import astuple, dataclass, fields
from typing import Iterable, Sequence

import numpy as np

from .bank import Bank
from .discovery.segmentation import LabeledSegment


def gini(counts: Sequence[float]) -> float:
    """Mean absolute difference over twice the mean, via the sorted-rank form."""
    x = np.sort(np.asarray(counts, dtype=float))
    if x.size == 0:
        raise ValueError("gini of an empty vector is undefined")
    if np.any(x < 0):
        raise ValueError("gini needs non-negative values")
    total = x.sum()
    if total == 0:
        raise ValueError("gini of an all-zero vector is undefined")
    n = x.size
    ranks = 2 * np.arange(1, n + 1) - n - 1
    return max(0.0, float(np.dot(ranks, x) / (n * total)))


@dataclass(frozen=True)
class ReusabilityRow:
    n_skills: int
    n_categories: int
    avg_clauses: float
    total_subepisodes: int
    max_instances: int
    avg_instances: float
    gini: float
    avg_versions: float

    HEADER = ("#Skills", "#Cats", "Avg. Clauses", "Tot. Sub-Ep", "Max Inst", "Avg. Inst", "Gini",
              "Avg. Ver")


def reusability_report(bank: Bank, segments: Iterable[LabeledSegment] | None = None) -> ReusabilityRow:
    """Table columns over the bank's active skills.

    total_subepisodes counts every labeled segment, NEW included; without
    segments it falls back to the recorded instance total. Gini is taken over
    per-skill instance counts and is 0 when no skill has instances.
    """
    skills = bank.active_skills()
    if not skills:
        raise ValueError("reusability report needs at least one active skill")
    counts = [s.support for s in skills]
    total = sum(counts)
    subepisodes = len(list(segments)) if segments is not None else total
    return ReusabilityRow(
        n_skills=len(skills),
        n_categories=len({s.category for s in skills}),
        avg_clauses=float(np.mean([len(s.contract.add) + len(s.contract.delete) for s in skills])),
        total_subepisodes=subepisodes,
        max_instances=max(counts),
        avg_instances=total / len(skills),
        gini=gini(counts) if total > 0 else 0.0,
        avg_versions=float(np.mean([s.contract.version for s in skills])),
    )


@dataclass(frozen=True)
class EvolutionPoint:
    iteration: int
    active: int
    discovered: int
    removed: int

    HEADER = ("iteration", "active", "discovered", "removed")


def evolution_point(bank: Bank) -> EvolutionPoint:
    """Cumulative counts read off the bank's mutation log.

    discovered: approved materializations, direct inserts and split children.
    removed: merge losers, skills flagged for splitting, and retirements.
    """
    discovered = removed = 0
    for m in bank.mutation_log:
        if not m.approved:
            continue
        if m.kind in ("materialize", "insert"):
            discovered += 1
        elif m.kind in ("merge", "retire"):
            removed += 1
        elif m.kind == "split" and m.payload.get("stage") == "flag":
            removed += 1
        elif m.kind == "split":
            discovered += len(m.payload.get("children", []))
    active = len(bank.active_skills())
    if active != discovered - removed:
        raise ValueError(f"bank v{bank.version}: {active} active skills but mutation log gives "
                         f"{discovered} discovered - {removed} removed")
    return EvolutionPoint(bank.version, active, discovered, removed)


def evolution_summary(history: Sequence[Bank]) -> list[EvolutionPoint]:
    versions = [b.version for b in history]
    if any(b <= a for a, b in zip(versions, versions[1:])):
        raise ValueError(f"bank history must be strictly ordered by version, got {versions}")
    return [evolution_point(b) for b in history]


# --- emitters -----------------------------------------------------------------

def _cell(v) -> str:
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


def to_csv(rows: Sequence, header: Sequence[str] | None = None) -> str:
    if header is None:
        header = [f.name for f in fields(rows[0])] if rows else []
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in astuple(row)])
    return buf.getvalue()


def to_table(rows: Sequence, header: Sequence[str] | None = None,
             labels: Sequence[str] | None = None) -> str:
    """Aligned plain-text table; optional row labels form a first column."""
    if header is None:
        header = [f.name for f in fields(rows[0])] if rows else []
    body = [[_cell(v) for v in astuple(row)] for row in rows]
    head = list(header)
    if labels is not None:
        head = [""] + head
        body = [[lab] + r for lab, r in zip(labels, body)]
    widths = [max([len(h)] + [len(r[i]) for r in body]) for i, h in enumerate(head)]
    lines = ["  ".join(h.rjust(w) for h, w in zip(head, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines.extend("  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in body)
    return "\n".join(lines) + "\n"


__all__ = [
    "EvolutionPoint", "ReusabilityRow", "evolution_point", "evolution_summary", "gini",
    "reusability_report", "to_csv", "to_table",
]

"""Retrieval-quality metrics over labeled judgment sets.

Item goodrate is a macro average (per-query proportion of relevant items,
then averaged across queries), query goodrate@N counts queries with at least
N relevant items, and GSB tallies side-by-side verdicts with delta defined
as good% - bad%.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

from .domain import _iter_jsonl


class Verdict(Enum):
    GOOD = "good"
    SAME = "same"
    BAD = "bad"


@dataclass(frozen=True)
class EvalJudgment:
    query_id: str
    ranked: tuple[tuple[str, bool], ...] = ()  # (product_id, relevant)
    verdict: Verdict | None = None  # present only for side-by-side records

    @property
    def relevant_count(self) -> int:
        return sum(1 for _, rel in self.ranked if rel)


@dataclass(frozen=True)
class GsbResult:
    good: float
    same: float
    bad: float
    delta: float


@dataclass
class MetricsReport:
    item_goodrate: float | None = None
    query_goodrate_at: dict[int, float] = field(default_factory=dict)
    gsb: GsbResult | None = None
    accuracy: float | None = None

    def to_dict(self) -> dict:
        out: dict = {}
        if self.item_goodrate is not None:
            out["item_goodrate"] = self.item_goodrate
        if self.query_goodrate_at:
            out["query_goodrate_at"] = {str(n): v for n, v in sorted(self.query_goodrate_at.items())}
        if self.gsb is not None:
            out["gsb"] = {
                "good": self.gsb.good,
                "same": self.gsb.same,
                "bad": self.gsb.bad,
                "delta": self.gsb.delta,
            }
        if self.accuracy is not None:
            out["accuracy"] = self.accuracy
        return out

    def to_file(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_dict(cls, data: Mapping) -> "MetricsReport":
        report = cls()
        if "item_goodrate" in data:
            report.item_goodrate = float(data["item_goodrate"])
        for n, value in data.get("query_goodrate_at", {}).items():
            report.query_goodrate_at[int(n)] = float(value)
        if "gsb" in data:
            g = data["gsb"]
            report.gsb = GsbResult(
                good=float(g["good"]),
                same=float(g["same"]),
                bad=float(g["bad"]),
                delta=float(g["delta"]),
            )
        if "accuracy" in data:
            report.accuracy = float(data["accuracy"])
        return report

    def render_table(self) -> str:
        """Aligned plain-text table of whichever metrics are present."""
        rows: list[tuple[str, str]] = []
        if self.item_goodrate is not None:
            rows.append(("Item Goodrate", f"{self.item_goodrate:.2f}%"))
        for n, value in sorted(self.query_goodrate_at.items()):
            rows.append((f"Query Goodrate@{n}", f"{value:.2f}%"))
        if self.gsb is not None:
            rows.append(
                (
                    "GSB (good/same/bad)",
                    f"{self.gsb.good:.1f}% / {self.gsb.same:.1f}% / {self.gsb.bad:.1f}%",
                )
            )
            rows.append(("GSB delta", f"{self.gsb.delta:+.1f}%"))
        if self.accuracy is not None:
            rows.append(("Accuracy", f"{self.accuracy:.2f}%"))
        if not rows:
            return "(no metrics)"
        width = max(len(name) for name, _ in rows)
        return "\n".join(f"{name:<{width}}  {value}" for name, value in rows)


def item_goodrate(judgments: Sequence[EvalJudgment]) -> float:
    """Macro average of per-query relevant proportion, as a percentage."""
    if not judgments:
        raise ValueError("judgment set must be non-empty")
    total = 0.0
    for j in judgments:
        if not j.ranked:
            raise ValueError(f"query {j.query_id!r} has no retrieved items")
        total += j.relevant_count / len(j.ranked)
    return 100.0 * total / len(judgments)


def query_goodrate_at_n(judgments: Sequence[EvalJudgment], n: int) -> float:
    """Share of queries with at least n relevant items, as a percentage."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not judgments:
        return 0.0
    hits = sum(1 for j in judgments if j.relevant_count >= n)
    return 100.0 * hits / len(judgments)


def gsb(verdicts: Sequence[Verdict]) -> GsbResult:
    """Percentage tally of good/same/bad verdicts; delta = good% - bad%."""
    if not verdicts:
        raise ValueError("verdict list must be non-empty")
    n = len(verdicts)
    good = 100.0 * sum(1 for v in verdicts if v is Verdict.GOOD) / n
    same = 100.0 * sum(1 for v in verdicts if v is Verdict.SAME) / n
    bad = 100.0 * sum(1 for v in verdicts if v is Verdict.BAD) / n
    return GsbResult(good=good, same=same, bad=bad, delta=good - bad)


def sample_accuracy(labels: Sequence[bool]) -> float:
    """Percentage of pairs labeled correct."""
    if not labels:
        raise ValueError("labeled sample must be non-empty")
    return 100.0 * sum(1 for ok in labels if ok) / len(labels)


def load_judgments(path: str | Path) -> list[EvalJudgment]:
    """Read judgments JSONL: {"query_id", "ranked": [[pid, bool], ...],
    "verdict": "good"|"same"|"bad" (optional)}."""
    out: list[EvalJudgment] = []
    for lineno, rec in _iter_jsonl(path):
        try:
            ranked = tuple((str(pid), bool(rel)) for pid, rel in rec.get("ranked", []))
            verdict = Verdict(rec["verdict"]) if "verdict" in rec else None
            out.append(EvalJudgment(rec["query_id"], ranked, verdict))
        except (KeyError, ValueError, TypeError) as exc:
            raise ValueError(f"{path}:{lineno}: bad judgment record: {exc}") from exc
    return out


def report_from_judgments(
    judgments: Sequence[EvalJudgment], at_n: Sequence[int] = (10, 100)
) -> MetricsReport:
    """Compute every metric the judgment set supports."""
    ranked = [j for j in judgments if j.ranked]
    verdicts = [j.verdict for j in judgments if j.verdict is not None]
    report = MetricsReport()
    if ranked:
        report.item_goodrate = item_goodrate(ranked)
        report.query_goodrate_at = {n: query_goodrate_at_n(ranked, n) for n in at_n}
    if verdicts:
        report.gsb = gsb(verdicts)
    return report

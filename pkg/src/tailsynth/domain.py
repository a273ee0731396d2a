"""Core data types, rewrite-list parsing, and JSONL ingestion.

Everything here is an immutable value type; parsing is the only operation
with interesting failure modes (see `FormatError`).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping


class QueryType(Enum):
    QA = "qa"
    ALTERNATIVE = "alternative"
    NEGATIVE = "negative"
    KNOWLEDGE = "knowledge"


class RelevanceLabel(Enum):
    RELEVANT = "relevant"
    PARTIALLY_RELEVANT = "partially_relevant"
    IRRELEVANT = "irrelevant"


class FormatErrorKind(Enum):
    EMPTY = "empty"
    TOO_FEW = "too_few"
    UNPARSEABLE = "unparseable"


class FormatError(ValueError):
    """Generator output did not parse into a valid rewrite list.

    Carries a `kind` so the caller can count drop reasons and gate the
    reward signal for the invalid response.
    """

    def __init__(self, kind: FormatErrorKind, detail: str = ""):
        self.kind = kind
        super().__init__(f"{kind.value}: {detail}" if detail else kind.value)


@dataclass(frozen=True)
class Query:
    id: str
    text: str
    query_type: QueryType

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("query id must be non-empty")
        if not self.text.strip():
            raise ValueError(f"query {self.id!r} has empty text")


@dataclass(frozen=True)
class Rewrite:
    text: str

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("rewrite text must be non-empty")


@dataclass(frozen=True)
class RewriteList:
    source_query_id: str
    rewrites: tuple[Rewrite, ...]

    @property
    def k(self) -> int:
        return len(self.rewrites)

    def texts(self) -> list[str]:
        return [r.text for r in self.rewrites]


@dataclass(frozen=True)
class Product:
    id: str
    title: str
    attributes: Mapping[str, str] | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("product id must be non-empty")
        if not self.title.strip():
            raise ValueError(f"product {self.id!r} has empty title")


@dataclass(frozen=True)
class SyntheticPair:
    """An emitted training instance: the ORIGINAL query paired with a product.

    `query_text` is always the original query, never a rewrite; the rewrite
    that retrieved the product is kept as provenance in `via_rewrite`.
    """

    query_id: str
    query_text: str
    product_id: str
    business_score: float
    general_label: RelevanceLabel
    via_rewrite: str

    def __post_init__(self) -> None:
        if not 0.0 <= self.business_score <= 1.0:
            raise ValueError(f"business_score {self.business_score} outside [0, 1]")

    def to_record(self) -> dict:
        return {
            "query_id": self.query_id,
            "query_text": self.query_text,
            "product_id": self.product_id,
            "business_score": self.business_score,
            "general_label": self.general_label.value,
            "via_rewrite": self.via_rewrite,
        }


_LIST_PREFIX = re.compile(r"^\s*\d+\s*[.)]\s*")

DEFAULT_MIN_K = 5


def parse_rewrite_list(
    raw: str, min_k: int = DEFAULT_MIN_K, source_query_id: str = ""
) -> RewriteList:
    """Parse generator output into a rewrite list.

    Accepts numbered entries ("1. text" / "2) text") and bare lines, one
    rewrite per line. Duplicate texts are retained; dedup here would silently
    change k and the log-probability accounting. Raises FormatError when the
    result would be empty, unparseable, or shorter than `min_k`.
    """
    if min_k < 1:
        raise ValueError("min_k must be >= 1")
    if not raw.strip():
        raise FormatError(FormatErrorKind.EMPTY)
    entries: list[str] = []
    for line in raw.splitlines():
        if not line.strip():
            continue
        text = _LIST_PREFIX.sub("", line, count=1).strip()
        if text:
            entries.append(text)
    if not entries:
        raise FormatError(
            FormatErrorKind.UNPARSEABLE, "no entries left after stripping numbering"
        )
    if len(entries) < min_k:
        raise FormatError(FormatErrorKind.TOO_FEW, f"{len(entries)} < {min_k}")
    return RewriteList(
        source_query_id=source_query_id,
        rewrites=tuple(Rewrite(t) for t in entries),
    )


def render_rewrite_list(rlist: RewriteList) -> str:
    """Canonical numbered rendering; inverse of `parse_rewrite_list`."""
    return "\n".join(f"{i}. {r.text}" for i, r in enumerate(rlist.rewrites, start=1))


def load_queries(path: str | Path) -> list[Query]:
    """Read queries JSONL ({"id","text","query_type"}), checking id uniqueness."""
    queries: list[Query] = []
    seen: set[str] = set()
    for lineno, rec in _iter_jsonl(path):
        try:
            q = Query(rec["id"], rec["text"], QueryType(rec["query_type"]))
        except (KeyError, ValueError) as exc:
            raise ValueError(f"{path}:{lineno}: bad query record: {exc}") from exc
        if q.id in seen:
            raise ValueError(f"{path}:{lineno}: duplicate query id {q.id!r}")
        seen.add(q.id)
        queries.append(q)
    return queries


def load_products(path: str | Path) -> list[Product]:
    """Read products JSONL ({"id","title","attributes"}), checking id uniqueness."""
    products: list[Product] = []
    seen: set[str] = set()
    for lineno, rec in _iter_jsonl(path):
        try:
            p = Product(rec["id"], rec["title"], rec.get("attributes"))
        except (KeyError, ValueError) as exc:
            raise ValueError(f"{path}:{lineno}: bad product record: {exc}") from exc
        if p.id in seen:
            raise ValueError(f"{path}:{lineno}: duplicate product id {p.id!r}")
        seen.add(p.id)
        products.append(p)
    return products


def write_jsonl(path: str | Path, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True))
            fh.write("\n")


def _iter_jsonl(path: str | Path):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            yield lineno, json.loads(line)

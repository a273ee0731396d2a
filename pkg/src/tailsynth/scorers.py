"""Relevance scorers: hermetic lexical mocks and a remote-inference client.

Four scorer roles feed the pipeline and the reward function: a query-rewrite
3-label filter, a yes/no logit provider for the semantic-relevance reward, a
business query-product scorer, and a general-purpose query-product filter.
The mocks are pure lexical-overlap rules, chosen so the two product-side
scorers can genuinely disagree: the business mock measures raw character
overlap, while the 3-label mocks work on word structure (falling back to
character bigrams for unsegmented text). A pair of texts sharing most of
their characters but none of their words - morphological near-misses - gets
a high business score and an `irrelevant` general label, which is exactly
the false-positive shape the general filter exists to veto.
"""

from __future__ import annotations

import json
import socket
import time
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

from .domain import Product, RelevanceLabel
from .rewards import char_ngrams

__all__ = [
    "RelevanceLabel",
    "LabelThresholds",
    "ScorerKind",
    "ScorerBinding",
    "Task",
    "RemoteScorerError",
    "RemoteTimeout",
    "RemoteHTTPError",
    "RemoteProtocolError",
    "RemoteClient",
    "lexical_jaccard",
    "bigram_jaccard",
    "mock_rewrite_classifier",
    "mock_qsr_logits",
    "mock_business_score",
    "mock_general_filter",
    "remote_classify",
]


@dataclass(frozen=True)
class LabelThresholds:
    relevant: float = 0.5
    partial: float = 0.15

    def __post_init__(self) -> None:
        if not 0 <= self.partial <= self.relevant <= 1:
            raise ValueError("thresholds must satisfy 0 <= partial <= relevant <= 1")

    def label(self, overlap: float) -> RelevanceLabel:
        if overlap >= self.relevant:
            return RelevanceLabel.RELEVANT
        if overlap >= self.partial:
            return RelevanceLabel.PARTIALLY_RELEVANT
        return RelevanceLabel.IRRELEVANT


DEFAULT_THRESHOLDS = LabelThresholds()


def _bigram_or_self(text: str) -> frozenset[str]:
    grams = char_ngrams(text, 2)
    return grams if grams else frozenset({text})


def _jaccard(a: frozenset[str], b: frozenset[str]) -> float:
    union = len(a | b)
    if union == 0:
        return 1.0
    return len(a & b) / union


def lexical_jaccard(a: str, b: str) -> float:
    """Token Jaccard: whitespace words when both texts are multi-word,
    otherwise character bigrams (whole string below two characters)."""
    wa, wb = a.split(), b.split()
    if len(wa) >= 2 and len(wb) >= 2:
        return _jaccard(frozenset(wa), frozenset(wb))
    return _jaccard(_bigram_or_self(a), _bigram_or_self(b))


def bigram_jaccard(a: str, b: str) -> float:
    """Character-bigram Jaccard, the business mock's raw-overlap measure."""
    return _jaccard(_bigram_or_self(a), _bigram_or_self(b))


def mock_rewrite_classifier(
    query: str, rewrite: str, thresholds: LabelThresholds = DEFAULT_THRESHOLDS
) -> RelevanceLabel:
    """Conservative 3-label filter on query/rewrite lexical overlap."""
    _require(query, rewrite)
    return thresholds.label(lexical_jaccard(query, rewrite))


def mock_qsr_logits(query: str, rewrite: str) -> tuple[float, float]:
    """Deterministic yes/no logits centered at overlap 0.5."""
    _require(query, rewrite)
    logit_yes = 4.0 * (lexical_jaccard(query, rewrite) - 0.5)
    return logit_yes, -logit_yes


def mock_business_score(query: str, product: Product) -> float:
    """Character-bigram Jaccard between query and title, in [0, 1]."""
    _require(query, product.title)
    return bigram_jaccard(query, product.title)


def mock_general_filter(
    query: str, product: Product, thresholds: LabelThresholds = DEFAULT_THRESHOLDS
) -> RelevanceLabel:
    """3-label semantic assessment of a query-product pair.

    Word-level overlap where the business mock is character-level, so pairs
    whose overlap is concentrated in shared surface fragments rather than
    shared words are caught as false positives.
    """
    _require(query, product.title)
    return thresholds.label(lexical_jaccard(query, product.title))


def _require(*texts: str) -> None:
    for t in texts:
        if not t.strip():
            raise ValueError("scorer inputs must be non-empty")


# --------------------------------------------------------------------------
# Remote inference client
# --------------------------------------------------------------------------


class ScorerKind(Enum):
    MOCK_LEXICAL = "mock_lexical"
    REMOTE = "remote"


class Task(Enum):
    REWRITE_FILTER = "rewrite_filter"
    QSR_LOGITS = "qsr_logits"
    BUSINESS_SCORE = "business_score"
    GENERAL_FILTER = "general_filter"


@dataclass(frozen=True)
class ScorerBinding:
    kind: ScorerKind = ScorerKind.MOCK_LEXICAL
    endpoint: str | None = None
    prompt_template_id: str = "default"
    timeout: float = 10.0
    retries: int = 2
    backoff_base: float = 0.25
    max_inflight: int = 4

    def __post_init__(self) -> None:
        if self.kind is ScorerKind.REMOTE and not self.endpoint:
            raise ValueError("remote scorer binding requires an endpoint")
        if self.retries < 0:
            raise ValueError("retries must be >= 0")


DEFAULT_TEMPLATES: dict[str, dict[Task, str]] = {
    "default": {
        Task.REWRITE_FILTER: (
            "Judge whether the rewrite keeps the query's intent.\n"
            "Query: {query}\nRewrite: {rewrite}\n"
            "Answer with one label: relevant, partially_relevant, irrelevant."
        ),
        Task.QSR_LOGITS: (
            "Does the rewrite preserve the query's meaning? Respond with "
            "yes/no logits.\nQuery: {query}\nRewrite: {rewrite}"
        ),
        Task.BUSINESS_SCORE: (
            "Score the relevance of the product to the query between 0 and 1.\n"
            "Query: {query}\nProduct: {title}"
        ),
        Task.GENERAL_FILTER: (
            "Assess semantic relevance of the product to the query.\n"
            "Query: {query}\nProduct: {title}\n"
            "Answer with one label: relevant, partially_relevant, irrelevant."
        ),
    }
}


class RemoteScorerError(Exception):
    """Base class for remote scorer failures."""


class RemoteTimeout(RemoteScorerError):
    pass


class RemoteHTTPError(RemoteScorerError):
    pass


class RemoteProtocolError(RemoteScorerError):
    """The server answered, but the payload is malformed or out of range."""


_LABEL_ALIASES = {
    "relevant": RelevanceLabel.RELEVANT,
    "partially_relevant": RelevanceLabel.PARTIALLY_RELEVANT,
    "partially relevant": RelevanceLabel.PARTIALLY_RELEVANT,
    "irrelevant": RelevanceLabel.IRRELEVANT,
}


class RemoteClient:
    """JSON-over-HTTP scorer client with retry, backoff, and validation.

    Transport failures (timeouts, HTTP errors, connection errors) retry with
    exponential backoff up to `binding.retries` extra attempts; a malformed
    or out-of-range response raises `RemoteProtocolError` immediately. Every
    returned value satisfies its task's range/enum contract.
    """

    def __init__(
        self,
        binding: ScorerBinding,
        templates: dict[str, dict[Task, str]] | None = None,
    ):
        if binding.kind is not ScorerKind.REMOTE:
            raise ValueError("RemoteClient requires a remote binding")
        self.binding = binding
        self.templates = templates or DEFAULT_TEMPLATES
        self.stats = {"requests": 0, "retries": 0, "failures": 0}

    def classify(self, task: Task, payload: dict[str, str]):
        prompt = self._render_prompt(task, payload)
        body = json.dumps(
            {"task": task.value, "prompt": prompt, "inputs": payload},
            ensure_ascii=False,
        ).encode("utf-8")
        attempts = self.binding.retries + 1
        last_exc: RemoteScorerError | None = None
        for attempt in range(attempts):
            if attempt > 0:
                self.stats["retries"] += 1
                time.sleep(self.binding.backoff_base * 2 ** (attempt - 1))
            try:
                raw = self._post(body)
            except RemoteScorerError as exc:
                last_exc = exc
                continue
            return self._parse(task, raw)
        self.stats["failures"] += 1
        assert last_exc is not None
        raise last_exc

    def classify_many(self, items: Sequence[tuple[Task, dict[str, str]]]) -> list:
        """Bounded-concurrency batch; results in input order."""
        with ThreadPoolExecutor(max_workers=self.binding.max_inflight) as pool:
            return list(pool.map(lambda item: self.classify(*item), items))

    def _render_prompt(self, task: Task, payload: dict[str, str]) -> str:
        group = self.templates.get(self.binding.prompt_template_id)
        if group is None or task not in group:
            raise ValueError(
                f"no prompt template {self.binding.prompt_template_id!r} for {task.value}"
            )
        for key, value in payload.items():
            if not str(value).strip():
                raise ValueError(f"payload field {key!r} must be non-empty")
        try:
            return group[task].format(**payload)
        except KeyError as exc:
            raise ValueError(f"payload missing template field {exc}") from exc

    def _post(self, body: bytes) -> dict:
        self.stats["requests"] += 1
        req = urllib.request.Request(
            self.binding.endpoint,
            data=body,
            headers={"Content-Type": "application/json"},
            method="POST",
        )
        try:
            with urllib.request.urlopen(req, timeout=self.binding.timeout) as resp:
                data = resp.read()
        except urllib.error.HTTPError as exc:
            raise RemoteHTTPError(f"HTTP {exc.code} from scorer endpoint") from exc
        except (socket.timeout, TimeoutError) as exc:
            raise RemoteTimeout(f"scorer request timed out: {exc}") from exc
        except urllib.error.URLError as exc:
            if isinstance(exc.reason, (socket.timeout, TimeoutError)):
                raise RemoteTimeout(f"scorer request timed out: {exc.reason}") from exc
            raise RemoteHTTPError(f"scorer endpoint unreachable: {exc.reason}") from exc
        try:
            parsed = json.loads(data.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise RemoteProtocolError(f"response is not valid JSON: {exc}") from exc
        if not isinstance(parsed, dict):
            raise RemoteProtocolError("response JSON must be an object")
        return parsed

    def _parse(self, task: Task, raw: dict):
        if task in (Task.REWRITE_FILTER, Task.GENERAL_FILTER):
            label = raw.get("label")
            if not isinstance(label, str) or label.lower() not in _LABEL_ALIASES:
                raise RemoteProtocolError(f"missing or unknown label: {label!r}")
            return _LABEL_ALIASES[label.lower()]
        if task is Task.BUSINESS_SCORE:
            score = raw.get("score")
            if not isinstance(score, (int, float)) or not 0.0 <= float(score) <= 1.0:
                raise RemoteProtocolError(f"score missing or outside [0, 1]: {score!r}")
            return float(score)
        if task is Task.QSR_LOGITS:
            logits = raw.get("logits")
            if (
                not isinstance(logits, (list, tuple))
                or len(logits) != 2
                or not all(isinstance(v, (int, float)) for v in logits)
            ):
                raise RemoteProtocolError(f"logits must be a [yes, no] pair: {logits!r}")
            return float(logits[0]), float(logits[1])
        raise ValueError(f"unknown task {task!r}")


def remote_classify(
    binding: ScorerBinding,
    task: Task,
    payload: dict[str, str],
    templates: dict[str, dict[Task, str]] | None = None,
):
    """One-shot remote call; see RemoteClient for retry semantics."""
    return RemoteClient(binding, templates).classify(task, payload)

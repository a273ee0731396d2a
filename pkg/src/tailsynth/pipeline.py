"""End-to-end batch synthesis: rewrite, filter, retrieve, score, dedupe, emit.

Each stage accounts for every unit it sees (input == output + dropped, with
a reason per drop), and the whole run is deterministic given the seed: all
per-query randomness derives from (seed, query id), so the emitted dataset
is invariant to input order up to the canonical output sort.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .domain import (
    FormatError,
    Product,
    Query,
    RelevanceLabel,
    Rewrite,
    RewriteList,
    SyntheticPair,
    parse_rewrite_list,
    render_rewrite_list,
    write_jsonl,
)
from .policy import CategoricalRewritePolicy, sample_response
from .retrieval import (
    CandidateHit,
    VectorIndex,
    build_index,
    embed_text,
    search_approx,
)
from .scorers import (
    RemoteClient,
    RemoteScorerError,
    ScorerBinding,
    ScorerKind,
    Task,
    mock_business_score,
    mock_general_filter,
    mock_qsr_logits,
    mock_rewrite_classifier,
)

STATS_FORMAT_VERSION = 1

ENDPOINT_ENV_VAR = "TAILSYNTH_REMOTE_ENDPOINT"

Generator = Callable[[Query], str]


@dataclass(frozen=True)
class PipelineConfig:
    min_k: int = 5
    rewrite_k: int = 6  # rewrites requested from the generator per query
    top_k: int = 200
    business_threshold: float = 0.35
    dim: int = 256
    partitions: int = 32
    probes: int = 8
    generator_mode: str = "sample"  # or "greedy"
    policy_path: str | None = None  # rewrite policy JSON, relative to the config file
    on_remote_error: str = "drop"  # or "fail"
    seed: int = 0
    rewrite_filter: ScorerBinding = ScorerBinding()
    qsr: ScorerBinding = ScorerBinding()
    business: ScorerBinding = ScorerBinding()
    general: ScorerBinding = ScorerBinding()
    # {template_id: {task value: template string}}, overlaid on the built-ins
    prompt_templates: Mapping[str, Mapping[str, str]] | None = None

    def __post_init__(self) -> None:
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if not 0.0 <= self.business_threshold <= 1.0:
            raise ValueError("business_threshold must lie in [0, 1]")
        if self.rewrite_k < self.min_k:
            raise ValueError("rewrite_k must be >= min_k")
        if self.on_remote_error not in ("drop", "fail"):
            raise ValueError("on_remote_error must be 'drop' or 'fail'")
        if self.generator_mode not in ("sample", "greedy"):
            raise ValueError("generator_mode must be 'sample' or 'greedy'")

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = _binding_to_dict(value) if isinstance(value, ScorerBinding) else value
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "PipelineConfig":
        kwargs = dict(data)
        known = {f.name for f in fields(cls)}
        unknown = set(kwargs) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        for name in ("rewrite_filter", "qsr", "business", "general"):
            if name in kwargs:
                kwargs[name] = _binding_from_dict(kwargs[name])
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        """Load config JSON; TAILSYNTH_REMOTE_ENDPOINT overrides remote endpoints."""
        with open(path, "r", encoding="utf-8") as fh:
            cfg = cls.from_dict(json.load(fh))
        override = os.environ.get(ENDPOINT_ENV_VAR)
        if override:
            updates = {
                name: replace(getattr(cfg, name), endpoint=override)
                for name in ("rewrite_filter", "qsr", "business", "general")
                if getattr(cfg, name).kind is ScorerKind.REMOTE
            }
            cfg = replace(cfg, **updates)
        return cfg

    def to_file(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _binding_to_dict(binding: ScorerBinding) -> dict:
    return {
        "kind": binding.kind.value,
        "endpoint": binding.endpoint,
        "prompt_template_id": binding.prompt_template_id,
        "timeout": binding.timeout,
        "retries": binding.retries,
        "backoff_base": binding.backoff_base,
        "max_inflight": binding.max_inflight,
    }


def _binding_from_dict(data: Mapping) -> ScorerBinding:
    if isinstance(data, ScorerBinding):
        return data
    kwargs = dict(data)
    kwargs["kind"] = ScorerKind(kwargs.get("kind", "mock_lexical"))
    return ScorerBinding(**kwargs)


@dataclass
class StageCount:
    input: int = 0
    output: int = 0
    dropped: int = 0
    reasons: dict[str, int] = field(default_factory=dict)

    def drop(self, reason: str, n: int = 1) -> None:
        self.dropped += n
        self.reasons[reason] = self.reasons.get(reason, 0) + n

    def check_conservation(self) -> None:
        if self.input != self.output + self.dropped:
            raise AssertionError(
                f"stage conservation violated: {self.input} != {self.output} + {self.dropped}"
            )


@dataclass
class StageStats:
    stages: dict[str, StageCount] = field(default_factory=dict)
    counters: dict[str, int] = field(default_factory=dict)

    def stage(self, name: str) -> StageCount:
        return self.stages.setdefault(name, StageCount())

    def bump(self, counter: str, n: int = 1) -> None:
        self.counters[counter] = self.counters.get(counter, 0) + n

    def check_conservation(self) -> None:
        for count in self.stages.values():
            count.check_conservation()

    def to_dict(self) -> dict:
        return {
            "format_version": STATS_FORMAT_VERSION,
            "stages": {
                name: {
                    "input": c.input,
                    "output": c.output,
                    "dropped": c.dropped,
                    "reasons": c.reasons,
                }
                for name, c in self.stages.items()
            },
            "counters": self.counters,
        }

    def to_file(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


@dataclass(frozen=True)
class PairDraft:
    query: Query
    product: Product
    via_rewrite: str
    similarity: float


def _query_rng(seed: int, query_id: str) -> np.random.Generator:
    digest = hashlib.sha256(query_id.encode("utf-8")).digest()
    return np.random.default_rng([seed, int.from_bytes(digest[:8], "big")])


@dataclass
class PolicyGenerator:
    """Adapts a categorical policy to the raw-text generator interface.

    "sample" mode draws k rewrites with a per-query generator derived from
    (seed, query id); "greedy" emits the k highest-logit candidates. Either
    way the output is rendered as a numbered list so the parser stays on the
    hot path.
    """

    policy: CategoricalRewritePolicy
    k: int
    seed: int = 0
    mode: str = "sample"

    def __call__(self, query: Query) -> str:
        if self.mode == "greedy":
            row = self.policy.row(self.policy.row_key(query.id))
            order = np.lexsort((np.arange(self.policy.m), -row))[: self.k]
            rlist = RewriteList(
                source_query_id=query.id,
                rewrites=tuple(Rewrite(self.policy.candidates[i]) for i in order),
            )
        else:
            rng = _query_rng(self.seed, query.id)
            rlist, _ = sample_response(self.policy, query, self.k, rng)
        return render_rewrite_list(rlist)


def generate_rewrites(generator: Generator, query: Query, min_k: int) -> RewriteList:
    """Run the generator and parse its raw output; FormatError propagates."""
    raw = generator(query)
    return parse_rewrite_list(raw, min_k=min_k, source_query_id=query.id)


def filter_rewrites(
    rlist: RewriteList, classifier: Callable[[str], RelevanceLabel]
) -> RewriteList:
    """Drop rewrites the classifier labels irrelevant, preserving order.

    The classifier judges one rewrite text (the caller binds the query). The
    result may be empty; such queries simply produce no pairs downstream.
    """
    kept = tuple(
        r for r in rlist.rewrites if classifier(r.text) is not RelevanceLabel.IRRELEVANT
    )
    return RewriteList(source_query_id=rlist.source_query_id, rewrites=kept)


def retrieve_for_rewrites(
    rlist: RewriteList,
    index: VectorIndex,
    top_k: int,
    probes: int = 8,
) -> dict[str, list[CandidateHit]]:
    """Approximate top-k per rewrite, keyed by rewrite text."""
    hits: dict[str, list[CandidateHit]] = {}
    for text in rlist.texts():
        if text in hits:
            continue  # duplicate rewrite texts retrieve identically
        hits[text] = search_approx(index, embed_text(text, index.dim), top_k, probes)
    return hits


def assemble_pairs(
    original: Query,
    hits: Mapping[str, Sequence[CandidateHit]],
    product_by_id: Mapping[str, Product],
) -> list[PairDraft]:
    """Pair every retrieved product with the ORIGINAL query.

    Duplicate products across rewrites are kept at this stage; dedupe runs
    after scoring so the best-scoring instance survives.
    """
    drafts = []
    for text, candidate_hits in hits.items():
        for hit in candidate_hits:
            drafts.append(
                PairDraft(
                    query=original,
                    product=product_by_id[hit.product_id],
                    via_rewrite=text,
                    similarity=hit.similarity,
                )
            )
    return drafts


def score_and_filter(
    drafts: Sequence[PairDraft],
    business_scorer: Callable[[str, Product], float],
    general_filter: Callable[[str, Product], RelevanceLabel],
    threshold: float,
    on_remote_error: str = "drop",
    stage: StageCount | None = None,
) -> list[SyntheticPair]:
    """Keep drafts with business score >= threshold and a non-irrelevant
    general label; both judgments are recorded on the emitted pair."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    stage = stage if stage is not None else StageCount()
    kept: list[SyntheticPair] = []
    for draft in drafts:
        stage.input += 1
        try:
            score = business_scorer(draft.query.text, draft.product)
            if score < threshold:
                stage.drop("below_threshold")
                continue
            label = general_filter(draft.query.text, draft.product)
        except RemoteScorerError:
            if on_remote_error == "fail":
                raise
            stage.drop("remote_error")
            continue
        if label is RelevanceLabel.IRRELEVANT:
            stage.drop("general_veto")
            continue
        stage.output += 1
        kept.append(
            SyntheticPair(
                query_id=draft.query.id,
                query_text=draft.query.text,
                product_id=draft.product.id,
                business_score=score,
                general_label=label,
                via_rewrite=draft.via_rewrite,
            )
        )
    return kept


def dedupe(pairs: Sequence[SyntheticPair]) -> list[SyntheticPair]:
    """Unique by (query_id, product_id): max business score wins, ties break
    toward the lexicographically smallest via_rewrite; output sorted by key."""
    best: dict[tuple[str, str], SyntheticPair] = {}
    for pair in pairs:
        key = (pair.query_id, pair.product_id)
        cur = best.get(key)
        if (
            cur is None
            or pair.business_score > cur.business_score
            or (pair.business_score == cur.business_score and pair.via_rewrite < cur.via_rewrite)
        ):
            best[key] = pair
    return [best[key] for key in sorted(best)]


def _merge_templates(cfg: PipelineConfig):
    """Overlay config-supplied prompt templates (task values as keys) on the
    built-in set; returns None when the config adds nothing."""
    if not cfg.prompt_templates:
        return None
    from .scorers import DEFAULT_TEMPLATES

    merged = {tid: dict(group) for tid, group in DEFAULT_TEMPLATES.items()}
    for tid, group in cfg.prompt_templates.items():
        slot = merged.setdefault(tid, {})
        for task_value, template in group.items():
            slot[Task(task_value)] = template
    return merged


def _resolve_scorers(cfg: PipelineConfig):
    """Bind each stage's scorer callables from its configured backend."""
    templates = _merge_templates(cfg)
    if cfg.rewrite_filter.kind is ScorerKind.MOCK_LEXICAL:
        rewrite_fn = lambda q, r: mock_rewrite_classifier(q, r)
    else:
        client = RemoteClient(cfg.rewrite_filter, templates)
        rewrite_fn = lambda q, r: client.classify(
            Task.REWRITE_FILTER, {"query": q, "rewrite": r}
        )
    if cfg.business.kind is ScorerKind.MOCK_LEXICAL:
        business_fn = mock_business_score
    else:
        bclient = RemoteClient(cfg.business, templates)
        business_fn = lambda q, p: bclient.classify(
            Task.BUSINESS_SCORE, {"query": q, "title": p.title}
        )
    if cfg.general.kind is ScorerKind.MOCK_LEXICAL:
        general_fn = lambda q, p: mock_general_filter(q, p)
    else:
        gclient = RemoteClient(cfg.general, templates)
        general_fn = lambda q, p: gclient.classify(
            Task.GENERAL_FILTER, {"query": q, "title": p.title}
        )
    return rewrite_fn, business_fn, general_fn


def resolve_qsr_scorer(binding: ScorerBinding, cfg: PipelineConfig | None = None):
    """QSR logit provider for reward computation (mock or remote)."""
    if binding.kind is ScorerKind.MOCK_LEXICAL:
        return mock_qsr_logits
    client = RemoteClient(binding, _merge_templates(cfg) if cfg else None)
    return lambda q, r: client.classify(Task.QSR_LOGITS, {"query": q, "rewrite": r})


def run_pipeline(
    cfg: PipelineConfig,
    queries: Sequence[Query],
    products: Sequence[Product],
    generator: Generator,
    out_path: str | Path | None = None,
    stats_path: str | Path | None = None,
    index: VectorIndex | None = None,
) -> tuple[list[SyntheticPair], StageStats]:
    """Execute all stages and optionally write the pairs JSONL + stats JSON."""
    if index is None:
        index = build_index(products, dim=cfg.dim, partitions=cfg.partitions)
    product_by_id = {p.id: p for p in products}
    rewrite_fn, business_fn, general_fn = _resolve_scorers(cfg)
    stats = StageStats()

    gen_stage = stats.stage("generate")
    filter_stage = stats.stage("filter_rewrites")
    retrieve_stage = stats.stage("retrieve")
    assemble_stage = stats.stage("assemble")
    score_stage = stats.stage("score_filter")
    dedupe_stage = stats.stage("dedupe")

    all_pairs: list[SyntheticPair] = []
    for query in queries:
        gen_stage.input += 1
        try:
            rlist = generate_rewrites(generator, query, cfg.min_k)
        except FormatError as exc:
            gen_stage.drop(f"format_{exc.kind.value}")
            continue
        gen_stage.output += 1

        remote_drops = 0

        def classify(text: str) -> RelevanceLabel:
            nonlocal remote_drops
            try:
                return rewrite_fn(query.text, text)
            except RemoteScorerError:
                if cfg.on_remote_error == "fail":
                    raise
                remote_drops += 1
                return RelevanceLabel.IRRELEVANT

        filter_stage.input += rlist.k
        kept_list = filter_rewrites(rlist, classify)
        filter_stage.output += kept_list.k
        dropped = rlist.k - kept_list.k
        if remote_drops:
            filter_stage.drop("remote_error", remote_drops)
        if dropped - remote_drops:
            filter_stage.drop("irrelevant", dropped - remote_drops)
        if kept_list.k == 0:
            stats.bump("queries_fully_filtered")
            continue

        retrieve_stage.input += kept_list.k
        hits = retrieve_for_rewrites(kept_list, index, cfg.top_k, cfg.probes)
        retrieve_stage.output += kept_list.k
        hit_count = sum(len(h) for h in hits.values())
        stats.bump("hits_retrieved", hit_count)

        drafts = assemble_pairs(query, hits, product_by_id)
        assemble_stage.input += len(drafts)
        assemble_stage.output += len(drafts)

        all_pairs.extend(
            score_and_filter(
                drafts,
                business_fn,
                general_fn,
                cfg.business_threshold,
                cfg.on_remote_error,
                stage=score_stage,
            )
        )

    dedupe_stage.input = len(all_pairs)
    pairs = dedupe(all_pairs)
    dedupe_stage.output = len(pairs)
    if dedupe_stage.input - dedupe_stage.output:
        dedupe_stage.drop("duplicate", dedupe_stage.input - dedupe_stage.output)

    stats.check_conservation()
    if out_path is not None:
        write_jsonl(out_path, (p.to_record() for p in pairs))
    if stats_path is not None:
        stats.to_file(stats_path)
    return pairs, stats

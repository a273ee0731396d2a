"""Reward components for scoring a sampled rewrite list.

Three signals: semantic relevance of each rewrite to the source query (from
a yes/no classifier's logits), alignment with product-side language (the
reciprocal perplexity of the rewrite under a product language model), and
pairwise n-gram diversity across the list. The weighted sum applies only
when the response format was valid; an invalid response earns exactly zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

from .domain import Query, Rewrite, RewriteList

QsrScorer = Callable[[str, str], tuple[float, float]]


@dataclass(frozen=True)
class RewardWeights:
    alpha: float = 1.0
    beta: float = 0.5
    gamma: float = 0.1

    def __post_init__(self) -> None:
        for name in ("alpha", "beta", "gamma"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")


@dataclass(frozen=True)
class RewardBreakdown:
    qsr: float
    pda: float
    diversity: float
    format_ok: bool
    total: float


def qsr_reward(logit_yes: float, logit_no: float) -> float:
    """p(yes) from a two-way softmax over classifier logits.

    Computed stably (the exponent is always of the non-positive logit gap)
    and mirrored around the dominant logit, which makes the complement
    identity qsr(a, b) + qsr(b, a) == 1 hold exactly in floating point: the
    losing side returns 1 - q for the winning side's q >= 0.5, and that
    subtraction is exact.
    """
    if not (math.isfinite(logit_yes) and math.isfinite(logit_no)):
        raise ValueError(f"logits must be finite, got ({logit_yes}, {logit_no})")
    if logit_yes == logit_no:
        return 0.5
    if logit_yes > logit_no:
        return 1.0 / (1.0 + math.exp(logit_no - logit_yes))
    return 1.0 - 1.0 / (1.0 + math.exp(logit_yes - logit_no))


def pda_reward(rewrite_tokens: Sequence[str], lm) -> float:
    """Reciprocal perplexity of the token sequence under the language model.

    `lm` is any provider exposing `perplexity(tokens)`; smoothing guarantees
    the result lies in (0, 1].
    """
    if len(rewrite_tokens) == 0:
        raise ValueError("cannot score an empty token sequence")
    return 1.0 / lm.perplexity(rewrite_tokens)


def char_ngrams(text: str, n: int = 2) -> frozenset[str]:
    """All contiguous length-n character windows, deduplicated.

    Windows run over Unicode scalars with no lowercasing or punctuation
    stripping; strings shorter than n yield the empty set.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    return frozenset(text[i : i + n] for i in range(len(text) - n + 1))


def diversity_reward(rewrites: Sequence[str | Rewrite], n: int = 2) -> float:
    """Mean pairwise n-gram dissimilarity (1 - Jaccard) over all list pairs.

    A pair where both n-gram sets are empty counts as fully similar
    (dissimilarity 0): two contentless rewrites carry no diversity.
    """
    texts = [r.text if isinstance(r, Rewrite) else r for r in rewrites]
    k = len(texts)
    if k < 2:
        raise ValueError("diversity needs at least 2 rewrites")
    grams = [char_ngrams(t, n) for t in texts]
    total = 0.0
    for i in range(k):
        for j in range(i + 1, k):
            union = len(grams[i] | grams[j])
            if union == 0:
                continue  # both empty: dissimilarity 0
            total += 1.0 - len(grams[i] & grams[j]) / union
    return total / (k * (k - 1) / 2)


def total_reward(
    qsr: float,
    pda: float,
    diversity: float,
    format_ok: bool,
    weights: RewardWeights = RewardWeights(),
) -> RewardBreakdown:
    """Weighted sum of the components, gated to zero on invalid format."""
    if format_ok:
        total = weights.alpha * qsr + weights.beta * pda + weights.gamma * diversity
    else:
        total = 0.0
    return RewardBreakdown(
        qsr=qsr, pda=pda, diversity=diversity, format_ok=format_ok, total=total
    )


def response_reward(
    query: Query,
    rlist: RewriteList,
    qsr_scorer: QsrScorer,
    lm,
    weights: RewardWeights = RewardWeights(),
    ngram_n: int = 2,
) -> RewardBreakdown:
    """Score one parsed response: per-rewrite means for QSR and PDA, list-wide
    diversity, then the weighted total.

    Per-rewrite components aggregate by arithmetic mean so the reward scale
    does not depend on k.
    """
    texts = rlist.texts()
    qsr_vals = [qsr_reward(*qsr_scorer(query.text, t)) for t in texts]
    pda_vals = [pda_reward(lm.tokenize(t), lm) for t in texts]
    qsr = sum(qsr_vals) / len(qsr_vals)
    pda = sum(pda_vals) / len(pda_vals)
    diversity = diversity_reward(texts, n=ngram_n)
    return total_reward(qsr, pda, diversity, format_ok=True, weights=weights)

"""Count-based n-gram language model with additive smoothing.

A deliberately small, fully deterministic perplexity provider for the
product-language alignment reward. Smoothing keeps every conditional
probability strictly positive, so log-probabilities are always finite.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"

FORMAT_VERSION = 1


def tokenize(text: str, mode: str = "char") -> list[str]:
    """Split text into LM tokens: Unicode scalars ("char") or whitespace words."""
    if mode == "char":
        return list(text)
    if mode == "word":
        return text.split()
    raise ValueError(f"unknown token mode {mode!r}")


@dataclass
class NGramLM:
    order: int
    delta: float
    mode: str = "char"
    vocab: tuple[str, ...] = (BOS, EOS, UNK)
    counts: dict[tuple[str, ...], dict[str, int]] = field(default_factory=dict)
    context_totals: dict[tuple[str, ...], int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if self.delta <= 0:
            raise ValueError("smoothing delta must be > 0")
        self._vocab_set = set(self.vocab)
        for reserved in (BOS, EOS, UNK):
            if reserved not in self._vocab_set:
                raise ValueError(f"vocab must contain reserved symbol {reserved!r}")

    @classmethod
    def fit(
        cls,
        corpus: Iterable[Sequence[str]],
        order: int = 3,
        delta: float = 0.1,
        mode: str = "char",
    ) -> "NGramLM":
        """Accumulate counts over the corpus with BOS padding and terminal EOS."""
        sequences = [list(seq) for seq in corpus]
        if not sequences:
            raise ValueError("corpus must be non-empty")
        tokens: set[str] = set()
        for seq in sequences:
            tokens.update(seq)
        vocab = tuple(sorted(tokens | {BOS, EOS, UNK}))
        lm = cls(order=order, delta=delta, mode=mode, vocab=vocab)
        pad = [BOS] * (order - 1)
        for seq in sequences:
            walk = pad + seq + [EOS]
            for i in range(order - 1, len(walk)):
                ctx = tuple(walk[i - order + 1 : i])
                tok = walk[i]
                slot = lm.counts.setdefault(ctx, {})
                slot[tok] = slot.get(tok, 0) + 1
                lm.context_totals[ctx] = lm.context_totals.get(ctx, 0) + 1
        return lm

    def tokenize(self, text: str) -> list[str]:
        return tokenize(text, self.mode)

    def _canon_context(self, context: Sequence[str]) -> tuple[str, ...]:
        tail = list(context)[max(0, len(context) - (self.order - 1)) :]
        return tuple(t if t in self._vocab_set else UNK for t in tail)

    def token_logprob(self, context: Sequence[str], token: str) -> float:
        """Log of the smoothed conditional probability; always finite.

        Unknown tokens map to UNK and the context is truncated to the last
        order-1 positions.
        """
        ctx = self._canon_context(context)
        tok = token if token in self._vocab_set else UNK
        count = self.counts.get(ctx, {}).get(tok, 0)
        total = self.context_totals.get(ctx, 0)
        v = len(self.vocab)
        return math.log((count + self.delta) / (total + self.delta * v))

    def sequence_logprob(self, sequence: Sequence[str]) -> tuple[float, int]:
        """Total log-probability and event count (tokens plus terminal EOS)."""
        seq = list(sequence)
        if not seq:
            raise ValueError("cannot score an empty sequence")
        walk = [BOS] * (self.order - 1) + seq + [EOS]
        total = 0.0
        events = 0
        for i in range(self.order - 1, len(walk)):
            total += self.token_logprob(walk[i - self.order + 1 : i], walk[i])
            events += 1
        return total, events

    def perplexity(self, sequence: Sequence[str]) -> float:
        """exp of the negative mean log-probability, EOS transition included.

        Counting the terminal event makes the measure sensitive to unnatural
        truncation.
        """
        total, events = self.sequence_logprob(sequence)
        return math.exp(-total / events)

    def conditional_probs(self, context: Sequence[str]) -> np.ndarray:
        """Smoothed distribution over the full vocab for one context."""
        ctx = self._canon_context(context)
        slot = self.counts.get(ctx, {})
        total = self.context_totals.get(ctx, 0)
        v = len(self.vocab)
        denom = total + self.delta * v
        probs = np.full(v, self.delta / denom)
        for tok, count in slot.items():
            probs[self._vocab_index(tok)] += count / denom
        return probs

    def sample(self, rng: np.random.Generator, max_len: int = 60) -> list[str]:
        """Draw one sequence from the smoothed model (stops at EOS or max_len)."""
        out: list[str] = []
        context = [BOS] * (self.order - 1)
        for _ in range(max_len):
            probs = self.conditional_probs(context)
            idx = rng.choice(len(self.vocab), p=probs / probs.sum())
            tok = self.vocab[idx]
            if tok == EOS:
                break
            out.append(tok)
            context = (context + [tok])[-(self.order - 1) :] if self.order > 1 else []
        return out

    def _vocab_index(self, token: str) -> int:
        # vocab is sorted; cache the lookup table on first use
        table = getattr(self, "_index", None)
        if table is None:
            table = {t: i for i, t in enumerate(self.vocab)}
            self._index = table
        return table[token]

    def save(self, path: str | Path) -> None:
        payload = {
            "format_version": FORMAT_VERSION,
            "order": self.order,
            "delta": self.delta,
            "mode": self.mode,
            "vocab": list(self.vocab),
            "counts": [
                [list(ctx), sorted(slot.items())]
                for ctx, slot in sorted(self.counts.items())
            ],
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, ensure_ascii=False)

    @classmethod
    def load(cls, path: str | Path) -> "NGramLM":
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        version = payload.get("format_version")
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported language model format: {version!r}")
        lm = cls(
            order=payload["order"],
            delta=payload["delta"],
            mode=payload["mode"],
            vocab=tuple(payload["vocab"]),
        )
        for ctx, items in payload["counts"]:
            slot = {tok: int(n) for tok, n in items}
            lm.counts[tuple(ctx)] = slot
            lm.context_totals[tuple(ctx)] = sum(slot.values())
        return lm

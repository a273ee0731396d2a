"""Categorical rewrite policy and its policy-gradient trainer.

The policy keeps one logit row per query context over a fixed vocabulary of
candidate rewrites; a response is k categorical draws with replacement. One
training step descends the REINFORCE loss

    L = -(1/B) * sum_i A_i * log p(rewrites_i | query_i)

with exact analytic gradients of the categorical log-probability and batch
advantage normalization. Plain gradient steps, no adaptive optimizer: the
whole trainer stays deterministic and checkable against finite differences.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .domain import Query, Rewrite, RewriteList
from .rewards import RewardBreakdown

FORMAT_VERSION = 1

ADV_EPS = 1e-8

# sentinel key for gradient bookkeeping on the shared default row
_DEFAULT_ROW = "__default__"

RewardFn = Callable[[Query, RewriteList], RewardBreakdown]


@dataclass
class CategoricalRewritePolicy:
    candidates: tuple[str, ...]
    logits: dict[str, np.ndarray] = field(default_factory=dict)
    default_logits: np.ndarray | None = None

    def __post_init__(self) -> None:
        if not self.candidates:
            raise ValueError("candidate vocabulary must be non-empty")
        if len(set(self.candidates)) != len(self.candidates):
            raise ValueError("candidate vocabulary contains duplicates")
        m = len(self.candidates)
        if self.default_logits is None:
            self.default_logits = np.zeros(m)
        self.default_logits = np.asarray(self.default_logits, dtype=np.float64)
        if self.default_logits.shape != (m,):
            raise ValueError("default_logits shape must match candidate count")
        self.logits = {
            key: np.asarray(row, dtype=np.float64) for key, row in self.logits.items()
        }
        for key, row in self.logits.items():
            if row.shape != (m,) or not np.all(np.isfinite(row)):
                raise ValueError(f"bad logit row for context {key!r}")
        self._index = {c: i for i, c in enumerate(self.candidates)}

    @classmethod
    def uniform(
        cls, candidates: Sequence[str], contexts: Sequence[str] = ()
    ) -> "CategoricalRewritePolicy":
        cands = tuple(candidates)
        return cls(
            candidates=cands,
            logits={c: np.zeros(len(cands)) for c in contexts},
        )

    @property
    def m(self) -> int:
        return len(self.candidates)

    def row_key(self, context: str) -> str:
        return context if context in self.logits else _DEFAULT_ROW

    def row(self, key: str) -> np.ndarray:
        if key == _DEFAULT_ROW:
            return self.default_logits
        return self.logits.get(key, self.default_logits)

    def probs(self, context: str) -> np.ndarray:
        return _softmax(self.row(self.row_key(context)))

    def candidate_index(self, text: str) -> int:
        try:
            return self._index[text]
        except KeyError:
            raise ValueError(f"rewrite {text!r} is not in the candidate vocabulary")

    def with_contexts(self, contexts: Sequence[str]) -> "CategoricalRewritePolicy":
        """Copy with a materialized logit row (from the default) per context."""
        logits = {k: v.copy() for k, v in self.logits.items()}
        for c in contexts:
            if c not in logits:
                logits[c] = self.default_logits.copy()
        return CategoricalRewritePolicy(
            candidates=self.candidates,
            logits=logits,
            default_logits=self.default_logits.copy(),
        )

    def save(self, path: str | Path) -> None:
        payload = {
            "format_version": FORMAT_VERSION,
            "candidates": list(self.candidates),
            "default_logits": self.default_logits.tolist(),
            "contexts": {k: self.logits[k].tolist() for k in sorted(self.logits)},
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, ensure_ascii=False)

    @classmethod
    def load(cls, path: str | Path) -> "CategoricalRewritePolicy":
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        version = payload.get("format_version")
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported policy format: {version!r}")
        return cls(
            candidates=tuple(payload["candidates"]),
            logits={k: np.array(v) for k, v in payload["contexts"].items()},
            default_logits=np.array(payload["default_logits"]),
        )


@dataclass(frozen=True)
class TrainConfig:
    step_size: float = 0.5
    group_size: int = 8
    iterations: int = 200
    k: int = 5
    normalize_advantage: bool = True
    format_penalty: float = 0.0
    kl_coeff: float = 0.0  # reward-level penalty against the run's initial policy
    seed: int = 0

    def __post_init__(self) -> None:
        if self.step_size <= 0:
            raise ValueError("step_size must be > 0")
        if self.group_size < 2:
            raise ValueError("group_size must be >= 2")
        if self.k < 2:
            raise ValueError("k must be >= 2")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.kl_coeff < 0:
            raise ValueError("kl_coeff must be >= 0")


@dataclass
class TrainStats:
    mean_total: list[float] = field(default_factory=list)
    mean_qsr: list[float] = field(default_factory=list)
    mean_pda: list[float] = field(default_factory=list)
    mean_div: list[float] = field(default_factory=list)
    grad_norm: list[float] = field(default_factory=list)

    def append(self, total: float, qsr: float, pda: float, div: float, g: float):
        self.mean_total.append(total)
        self.mean_qsr.append(qsr)
        self.mean_pda.append(pda)
        self.mean_div.append(div)
        self.grad_norm.append(g)

    def __len__(self) -> int:
        return len(self.mean_total)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["iteration", "mean_total", "mean_qsr", "mean_pda", "mean_div", "grad_norm"]
            )
            for i in range(len(self)):
                writer.writerow(
                    [
                        i,
                        repr(self.mean_total[i]),
                        repr(self.mean_qsr[i]),
                        repr(self.mean_pda[i]),
                        repr(self.mean_div[i]),
                        repr(self.grad_norm[i]),
                    ]
                )

    @classmethod
    def from_csv(cls, path: str | Path) -> "TrainStats":
        stats = cls()
        with open(path, "r", encoding="utf-8", newline="") as fh:
            for row in csv.DictReader(fh):
                stats.append(
                    float(row["mean_total"]),
                    float(row["mean_qsr"]),
                    float(row["mean_pda"]),
                    float(row["mean_div"]),
                    float(row["grad_norm"]),
                )
        return stats


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    return z - math.log(np.exp(z).sum())


def sample_response(
    policy: CategoricalRewritePolicy,
    query: Query,
    k: int,
    rng: np.random.Generator,
) -> tuple[RewriteList, float]:
    """Draw k candidates with replacement; returns the list and its log-prob."""
    if k < 2:
        raise ValueError("k must be >= 2")
    logp = _log_softmax(policy.row(policy.row_key(query.id)))
    p = np.exp(logp)
    draws = rng.choice(policy.m, size=k, p=p / p.sum())
    rlist = RewriteList(
        source_query_id=query.id,
        rewrites=tuple(Rewrite(policy.candidates[i]) for i in draws),
    )
    return rlist, float(logp[draws].sum())


def response_logprob(
    policy: CategoricalRewritePolicy, query: Query, rlist: RewriteList
) -> float:
    """Sum of per-draw log softmax probabilities for an existing response."""
    logp = _log_softmax(policy.row(policy.row_key(query.id)))
    idx = [policy.candidate_index(r.text) for r in rlist.rewrites]
    return float(logp[idx].sum())


def compute_advantages(rewards: Sequence[float], normalize: bool) -> np.ndarray:
    r = np.asarray(rewards, dtype=np.float64)
    if not normalize:
        return r
    std = float(r.std())
    if std <= ADV_EPS:
        # a (near) zero-variance batch carries no signal; exact zeros make
        # the downstream update a true no-op
        return np.zeros_like(r)
    return (r - r.mean()) / std


def _loss_and_grads(
    policy: CategoricalRewritePolicy,
    batch: Sequence[tuple[Query, RewriteList, float]],
    advantages: np.ndarray,
) -> tuple[float, dict[str, np.ndarray]]:
    """REINFORCE loss and its exact gradient per touched logit row.

    For a drawn candidate c in context q, d log p / d logit_j = 1[j == c] -
    softmax_j(q); summed over the k draws this is (draw_counts - k * softmax).
    """
    b = len(batch)
    loss = 0.0
    grads: dict[str, np.ndarray] = {}
    for (query, rlist, _reward), adv in zip(batch, advantages):
        key = policy.row_key(query.id)
        row = policy.row(key)
        logp = _log_softmax(row)
        sm = np.exp(logp)
        idx = np.array([policy.candidate_index(r.text) for r in rlist.rewrites])
        loss -= adv * float(logp[idx].sum())
        counts = np.bincount(idx, minlength=policy.m).astype(np.float64)
        g = grads.setdefault(key, np.zeros(policy.m))
        g -= adv * (counts - len(idx) * sm)
    loss /= b
    for g in grads.values():
        g /= b
    return loss, grads


def reinforce_update(
    policy: CategoricalRewritePolicy,
    batch: Sequence[tuple[Query, RewriteList, float]],
    cfg: TrainConfig,
) -> tuple[CategoricalRewritePolicy, float]:
    """One gradient-descent step on the REINFORCE loss; returns (policy', ||g||)."""
    if not batch:
        raise ValueError("batch must be non-empty")
    adv = compute_advantages([r for _, _, r in batch], cfg.normalize_advantage)
    if not np.any(adv):
        # exact no-op keeps parameters bitwise identical
        return (
            CategoricalRewritePolicy(
                candidates=policy.candidates,
                logits={k: v.copy() for k, v in policy.logits.items()},
                default_logits=policy.default_logits.copy(),
            ),
            0.0,
        )
    _, grads = _loss_and_grads(policy, batch, adv)
    grad_norm = math.sqrt(sum(float(g @ g) for g in grads.values()))
    new_logits = {k: v.copy() for k, v in policy.logits.items()}
    new_default = policy.default_logits.copy()
    for key, g in grads.items():
        if key == _DEFAULT_ROW:
            new_default -= cfg.step_size * g
        else:
            new_logits[key] = new_logits[key] - cfg.step_size * g
    return (
        CategoricalRewritePolicy(
            candidates=policy.candidates,
            logits=new_logits,
            default_logits=new_default,
        ),
        grad_norm,
    )


def train(
    policy: CategoricalRewritePolicy,
    queries: Sequence[Query],
    reward_fn: RewardFn,
    cfg: TrainConfig,
) -> tuple[CategoricalRewritePolicy, TrainStats]:
    """Iterate sample -> score -> update over a mixed batch of all queries.

    Every iteration samples `group_size` responses per query, scores them
    with `reward_fn` (format-gated; an invalid response earns
    -format_penalty), and applies one update over the whole batch. A nonzero
    kl_coeff subtracts the per-response log-probability ratio against the
    run's initial policy from the reward, penalizing drift from that
    reference. Fully deterministic given cfg.seed.
    """
    if not queries:
        raise ValueError("queries must be non-empty")
    policy = policy.with_contexts([q.id for q in queries])
    reference = policy if cfg.kl_coeff else None
    rng = np.random.default_rng(cfg.seed)
    stats = TrainStats()
    for _ in range(cfg.iterations):
        batch: list[tuple[Query, RewriteList, float]] = []
        breakdowns: list[RewardBreakdown] = []
        for query in queries:
            for _ in range(cfg.group_size):
                rlist, logp = sample_response(policy, query, cfg.k, rng)
                bd = reward_fn(query, rlist)
                reward = bd.total if bd.format_ok else -cfg.format_penalty
                if reference is not None:
                    drift = logp - response_logprob(reference, query, rlist)
                    reward -= cfg.kl_coeff * drift
                batch.append((query, rlist, reward))
                breakdowns.append(bd)
        policy, grad_norm = reinforce_update(policy, batch, cfg)
        n = len(breakdowns)
        stats.append(
            sum(b.total for b in breakdowns) / n,
            sum(b.qsr for b in breakdowns) / n,
            sum(b.pda for b in breakdowns) / n,
            sum(b.diversity for b in breakdowns) / n,
            grad_norm,
        )
    return policy, stats


def grad_check(
    policy: CategoricalRewritePolicy,
    batch: Sequence[tuple[Query, RewriteList, float]],
    h: float = 1e-5,
    normalize_advantage: bool = True,
) -> float:
    """Max relative error between analytic and central-difference gradients."""
    if h <= 0:
        raise ValueError("h must be > 0")
    adv = compute_advantages([r for _, _, r in batch], normalize_advantage)
    _, grads = _loss_and_grads(policy, batch, adv)

    def loss_with(key: str, j: int, bump: float) -> float:
        probe = CategoricalRewritePolicy(
            candidates=policy.candidates,
            logits={k: v.copy() for k, v in policy.logits.items()},
            default_logits=policy.default_logits.copy(),
        )
        probe.row(key)[j] += bump
        loss, _ = _loss_and_grads(probe, batch, adv)
        return loss

    max_err = 0.0
    # central differences cannot resolve anything below ~eps/h; components
    # where both sides sit under that floor count as exactly matching zeros
    noise_floor = 1e-10
    for key, g in grads.items():
        for j in range(policy.m):
            numeric = (loss_with(key, j, h) - loss_with(key, j, -h)) / (2 * h)
            analytic = g[j]
            denom = max(abs(analytic), abs(numeric))
            if denom < noise_floor:
                continue
            max_err = max(max_err, abs(analytic - numeric) / max(denom, 1e-8))
    return max_err

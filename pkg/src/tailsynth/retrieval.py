"""Dense embedding of texts plus exact and partitioned approximate top-K search.

The embedder is a deterministic hashed character-bigram bag: ~a stand-in with
the same contract a neural encoder would satisfy (unit vectors of uniform
dimension), stable across runs and platforms. The approximate index is
IVF-style: spherical k-means partitions, probe the nearest few partitions by
centroid, exact search within. Scans go through `_kernels` (numba or numpy
backend); everything that decides ordering stays on one canonical numpy path.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from . import _kernels
from .domain import Product

FORMAT_VERSION = 1

DEFAULT_DIM = 256
DEFAULT_TOP_K = 200

_KMEANS_SEED = 13
_KMEANS_ITERS = 25

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_UNK_FEATURE = "\x00unk\x00"


class CandidateHit(NamedTuple):
    # NamedTuple: search builds hundreds of these per query
    product_id: str
    similarity: float


def _hash64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


_feature_cache: dict[tuple[str, int], tuple[int, float]] = {}


def _feature(gram: str, dim: int) -> tuple[int, float]:
    """Bucket index in [0, dim) and a +/-1 sign for one bigram."""
    key = (gram, dim)
    cached = _feature_cache.get(key)
    if cached is None:
        h = _hash64(gram.encode("utf-8"))
        cached = (h % dim, 1.0 if h & (1 << 63) == 0 else -1.0)
        _feature_cache[key] = cached
    return cached


def embed_text(text: str, dim: int = DEFAULT_DIM) -> np.ndarray:
    """Unit-norm hashed character-bigram feature vector for `text`.

    Each distinct bigram contributes once (presence, not multiplicity:
    repeated suffix/space bigrams would otherwise swamp the distinctive
    ones). Accumulation order is first occurrence, so the result does not
    depend on the process hash seed. Texts shorter than two characters (or
    pathological sign cancellations) fall back to a single reserved feature
    so the result is never the zero vector.
    """
    if not text:
        raise ValueError("cannot embed empty text")
    if dim < 8:
        raise ValueError("dim must be >= 8")
    vec = np.zeros(dim)
    grams = list(dict.fromkeys(text[i : i + 2] for i in range(len(text) - 1)))
    if not grams:
        grams = [_UNK_FEATURE]
    for gram in grams:
        bucket, sign = _feature(gram, dim)
        vec[bucket] += sign
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        bucket, sign = _feature(_UNK_FEATURE, dim)
        vec[:] = 0.0
        vec[bucket] = sign
        norm = 1.0
    return vec / norm


@dataclass
class VectorIndex:
    dim: int
    product_ids: tuple[str, ...]  # row order: grouped by partition
    matrix: np.ndarray  # (n, dim) float64, unit rows
    partitions: int
    centroids: np.ndarray  # (partitions, dim)
    starts: np.ndarray  # (partitions,) int64 row offsets
    counts: np.ndarray  # (partitions,) int64
    pid_rank: np.ndarray  # (n,) rank of product_id in ascending id order

    @property
    def size(self) -> int:
        return len(self.product_ids)

    def partition_members(self, p: int) -> tuple[str, ...]:
        s, c = int(self.starts[p]), int(self.counts[p])
        return self.product_ids[s : s + c]

    def save(self, path: str | Path) -> None:
        path = Path(path)
        with open(path, "wb") as fh:
            np.savez(
                fh,
                meta=np.array(
                    json.dumps(
                        {
                            "format_version": FORMAT_VERSION,
                            "dim": self.dim,
                            "partitions": self.partitions,
                        }
                    )
                ),
                product_ids=np.array(self.product_ids),
                matrix=self.matrix,
                centroids=self.centroids,
                starts=self.starts,
                counts=self.counts,
                pid_rank=self.pid_rank,
            )

    @classmethod
    def load(cls, path: str | Path) -> "VectorIndex":
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["meta"]))
            if meta.get("format_version") != FORMAT_VERSION:
                raise ValueError(f"unsupported index format: {meta.get('format_version')!r}")
            return cls(
                dim=meta["dim"],
                product_ids=tuple(str(p) for p in data["product_ids"]),
                matrix=data["matrix"],
                partitions=meta["partitions"],
                centroids=data["centroids"],
                starts=data["starts"],
                counts=data["counts"],
                pid_rank=data["pid_rank"],
            )


def _spherical_kmeans(
    x: np.ndarray, k: int, iters: int = _KMEANS_ITERS, seed: int = _KMEANS_SEED
) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic Lloyd iterations on the sphere (fixed seed, capped)."""
    n = x.shape[0]
    rng = np.random.default_rng(seed)
    init = np.sort(rng.choice(n, size=k, replace=False))
    centroids = x[init].copy()
    assign = np.zeros(n, dtype=np.int64)
    for _ in range(iters):
        new_assign = np.argmax(x @ centroids.T, axis=1)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for c in range(k):
            members = x[assign == c]
            if len(members) == 0:
                continue  # keep previous centroid for empty clusters
            direction = members.sum(axis=0)
            norm = np.linalg.norm(direction)
            if norm > 0:
                centroids[c] = direction / norm
    return centroids, assign


def build_index(
    products: Sequence[Product], dim: int = DEFAULT_DIM, partitions: int = 1
) -> VectorIndex:
    """Embed all product titles and group rows by k-means partition."""
    if not products:
        raise ValueError("product corpus must be non-empty")
    if partitions < 1:
        raise ValueError("partitions must be >= 1")
    seen: set[str] = set()
    for p in products:
        if p.id in seen:
            raise ValueError(f"duplicate product id {p.id!r}")
        seen.add(p.id)
    x = np.stack([embed_text(p.title, dim) for p in products])
    n = len(products)
    partitions = min(partitions, n)
    if partitions == 1:
        centroids = x.sum(axis=0, keepdims=True)
        norm = np.linalg.norm(centroids)
        if norm > 0:
            centroids = centroids / norm
        assign = np.zeros(n, dtype=np.int64)
    else:
        centroids, assign = _spherical_kmeans(x, partitions)
    order = np.argsort(assign, kind="stable")
    ids = tuple(products[i].id for i in order)
    matrix = np.ascontiguousarray(x[order])
    counts = np.bincount(assign, minlength=partitions).astype(np.int64)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1])).astype(np.int64)
    pid_rank = np.empty(n, dtype=np.int64)
    pid_rank[np.argsort(np.array(ids))] = np.arange(n)
    return VectorIndex(
        dim=dim,
        product_ids=ids,
        matrix=matrix,
        partitions=partitions,
        centroids=centroids,
        starts=starts,
        counts=counts,
        pid_rank=pid_rank,
    )


def _top_k_canonical(
    scores: np.ndarray, pid_rank: np.ndarray, k: int
) -> np.ndarray:
    """Positions of the top-k scores; ties broken by ascending product id."""
    n = scores.shape[0]
    if k >= n:
        sel = np.arange(n)
    else:
        part = np.argpartition(-scores, k - 1)
        threshold = scores[part[k - 1]]
        sel = np.nonzero(scores >= threshold)[0]  # keep boundary ties for the sort
    order = np.lexsort((pid_rank[sel], -scores[sel]))
    return sel[order[:k]]


# scores are quantized before ranking so that ties between equal true cosine
# values (common with duplicate or same-length titles) resolve by product id
# regardless of the backend's floating-point summation order
_SCORE_DECIMALS = 12


def search_exact(index: VectorIndex, query_vec: np.ndarray, k: int = DEFAULT_TOP_K) -> list[CandidateHit]:
    """Exact top-k by cosine over the whole corpus."""
    if k < 1:
        raise ValueError("k must be >= 1")
    q = np.asarray(query_vec, dtype=np.float64)
    scores = np.round(_kernels.dense_scores(index.matrix, q), _SCORE_DECIMALS)
    sel = _top_k_canonical(scores, index.pid_rank, k)
    return [CandidateHit(index.product_ids[i], float(scores[i])) for i in sel]


def search_approx(
    index: VectorIndex,
    query_vec: np.ndarray,
    k: int = DEFAULT_TOP_K,
    probes: int = 8,
) -> list[CandidateHit]:
    """Scan the `probes` nearest partitions by centroid, exact search within."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not 1 <= probes <= index.partitions:
        raise ValueError(f"probes must be in [1, {index.partitions}], got {probes}")
    q = np.asarray(query_vec, dtype=np.float64)
    cscores = np.round(index.centroids @ q, _SCORE_DECIMALS)
    corder = np.lexsort((np.arange(index.partitions), -cscores))
    probe_ids = np.sort(corder[:probes]).astype(np.int64)
    rows, scores = _kernels.ivf_scan(index.matrix, index.starts, index.counts, probe_ids, q)
    if rows.size == 0:
        return []
    scores = np.round(scores, _SCORE_DECIMALS)
    sel = _top_k_canonical(scores, index.pid_rank[rows], k)
    return [CandidateHit(index.product_ids[rows[i]], float(scores[i])) for i in sel]


def recall_at_k(
    approx_hits: Sequence[CandidateHit], exact_hits: Sequence[CandidateHit]
) -> float:
    """|approx ∩ exact| / |exact| by product id; empty exact counts as 1.0."""
    exact_ids = {h.product_id for h in exact_hits}
    if not exact_ids:
        return 1.0
    approx_ids = {h.product_id for h in approx_hits}
    return len(approx_ids & exact_ids) / len(exact_ids)

"""Hot numeric kernels: numba-jitted fast path with a pure-numpy fallback.

The backend is fixed once at import time from the ``TAILSYNTH_BACKEND``
environment variable: ``numba`` (require numba, fail if missing), ``numpy``
(force the fallback), or ``auto`` (default: numba when importable).
``benchmarks/bench_backends.py`` compares the two on search-shaped workloads.

Only the similarity scans live here; everything above them (top-k selection,
tie-breaking, k-means) runs through one canonical numpy path so that both
backends produce identical orderings.
"""

from __future__ import annotations

import os

import numpy as np

_CHOICES = ("auto", "numba", "numpy")


def _select_backend() -> str:
    choice = os.environ.get("TAILSYNTH_BACKEND", "auto").lower()
    if choice not in _CHOICES:
        raise ValueError(
            f"TAILSYNTH_BACKEND must be one of {_CHOICES}, got {choice!r}"
        )
    if choice == "numpy":
        return "numpy"
    try:
        import numba  # noqa: F401
    except ImportError:
        if choice == "numba":
            raise RuntimeError("TAILSYNTH_BACKEND=numba but numba is not installed")
        return "numpy"
    return "numba"


BACKEND = _select_backend()


def _dense_scores_np(matrix: np.ndarray, query: np.ndarray) -> np.ndarray:
    return matrix @ query


def _ivf_scan_np(
    data: np.ndarray,
    starts: np.ndarray,
    counts: np.ndarray,
    probe_ids: np.ndarray,
    query: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    rows = []
    scores = []
    for p in probe_ids:
        s = int(starts[p])
        c = int(counts[p])
        rows.append(np.arange(s, s + c, dtype=np.int64))
        scores.append(data[s : s + c] @ query)
    if not rows:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=data.dtype)
    return np.concatenate(rows), np.concatenate(scores)


if BACKEND == "numba":
    from numba import njit, prange

    # fastmath lets the reduction vectorize; the resulting reassociation
    # noise (~1e-15) sits far below the 1e-12 score quantization applied
    # before any ranking decision
    @njit(cache=True, parallel=True, fastmath=True)
    def _dense_scores_nb(matrix, query):  # pragma: no cover - jitted
        n, d = matrix.shape
        out = np.empty(n, dtype=np.float64)
        for i in prange(n):
            acc = 0.0
            for j in range(d):
                acc += matrix[i, j] * query[j]
            out[i] = acc
        return out

    @njit(cache=True, fastmath=True)
    def _ivf_scan_nb(data, starts, counts, probe_ids, query):  # pragma: no cover
        d = data.shape[1]
        total = 0
        for k in range(probe_ids.shape[0]):
            total += counts[probe_ids[k]]
        rows = np.empty(total, dtype=np.int64)
        scores = np.empty(total, dtype=np.float64)
        pos = 0
        for k in range(probe_ids.shape[0]):
            p = probe_ids[k]
            s = starts[p]
            for i in range(counts[p]):
                acc = 0.0
                for j in range(d):
                    acc += data[s + i, j] * query[j]
                rows[pos] = s + i
                scores[pos] = acc
                pos += 1
        return rows, scores


def dense_scores(matrix: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Dot product of every row of `matrix` with `query` (cosine on unit rows)."""
    if BACKEND == "numba":
        return _dense_scores_nb(matrix, query)
    return _dense_scores_np(matrix, query)


def ivf_scan(
    matrix: np.ndarray,
    starts: np.ndarray,
    counts: np.ndarray,
    probe_ids: np.ndarray,
    query: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Score only the rows in the selected contiguous partitions.

    `matrix` rows must be grouped by partition; `starts`/`counts` give each
    partition's row range. Returns (row_indices, scores).
    """
    if BACKEND == "numba":
        return _ivf_scan_nb(matrix, starts, counts, probe_ids, query)
    return _ivf_scan_np(matrix, starts, counts, probe_ids, query)


def warmup(dim: int = 8) -> None:
    """Trigger JIT compilation so timed sections do not pay compile cost."""
    m = np.zeros((2, dim), dtype=np.float64)
    q = np.zeros(dim, dtype=np.float64)
    dense_scores(m, q)
    ivf_scan(
        m,
        np.array([0, 1], dtype=np.int64),
        np.array([1, 1], dtype=np.int64),
        np.array([0], dtype=np.int64),
        q,
    )

"""Posterior similarity matrix, PAM and best-partition selection."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True, eq=False)
class PosteriorSimilarityMatrix:
    p: np.ndarray
    n_draws: int

    @property
    def n(self) -> int:
        return self.p.shape[0]

    def dissimilarity(self) -> np.ndarray:
        return 1.0 - self.p


@dataclass(frozen=True, eq=False)
class Partition:
    labels: np.ndarray  # 1..C
    C: int
    score: float
    medoids: np.ndarray | None = None
    cost: float | None = None

    def members(self, c: int) -> np.ndarray:
        return np.flatnonzero(self.labels == c)


def compute_psm(draws: np.ndarray | Sequence[Sequence[int]]) -> PosteriorSimilarityMatrix:
    """Pairwise co-clustering frequencies over retained draws.

    Counts are accumulated as integers and divided once, so the matrix is
    exactly symmetric with a unit diagonal.
    """
    draws = getattr(draws, "draws", draws)
    draws = np.asarray(draws)
    if draws.ndim != 2 or draws.shape[0] == 0:
        raise ValueError("need at least one retained draw")
    n_draws, n = draws.shape
    dtype = np.uint16 if n_draws < np.iinfo(np.uint16).max else np.uint32
    counts = np.zeros((n, n), dtype=dtype)
    for s in draws:
        counts += s[:, None] == s[None, :]
    p = counts / float(n_draws)
    return PosteriorSimilarityMatrix(p=p, n_draws=n_draws)


def _check_dissimilarity(d: np.ndarray) -> np.ndarray:
    d = np.asarray(d, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError("dissimilarity matrix must be square")
    if not np.allclose(d, d.T, atol=1e-12, rtol=0):
        raise ValueError("dissimilarity matrix must be symmetric")
    if np.any(np.diag(d) != 0) or np.any(d < 0):
        raise ValueError("dissimilarity matrix needs a zero diagonal and nonnegative entries")
    return d


def _build(d: np.ndarray, k: int) -> list[int]:
    n = d.shape[0]
    medoids = [int(np.argmin(d.sum(axis=0)))]
    nearest = d[:, medoids[0]].copy()
    while len(medoids) < k:
        gain = np.maximum(nearest[:, None] - d, 0.0).sum(axis=0)
        gain[medoids] = -np.inf
        j = int(np.argmax(gain))
        medoids.append(j)
        nearest = np.minimum(nearest, d[:, j])
    return medoids


def _assign(d: np.ndarray, medoids: np.ndarray):
    dm = d[:, medoids]
    order = np.argsort(dm, axis=1, kind="stable")
    idx = np.arange(d.shape[0])
    first = order[:, 0]
    dn = dm[idx, first]
    ds = dm[idx, order[:, 1]] if len(medoids) > 1 else np.full(d.shape[0], np.inf)
    return first, dn, ds


def _swap(d: np.ndarray, medoids: list[int], max_iter: int = 1000) -> np.ndarray:
    n = d.shape[0]
    med = np.array(sorted(medoids), dtype=np.intp)
    k = len(med)
    tol = 1e-12 * max(1.0, float(d.max()))
    for _ in range(max_iter):
        if k == n:
            break
        first, dn, ds = _assign(d, med)
        # change in total cost when medoid i is replaced by candidate j
        gain_all = np.minimum(d - dn[:, None], 0.0)
        shared = gain_all.sum(axis=0)
        own = np.minimum(d, ds[:, None]) - dn[:, None] - gain_all
        onehot = np.zeros((k, n))
        onehot[first, np.arange(n)] = 1.0
        delta = shared[None, :] + onehot @ own
        delta[:, med] = np.inf
        flat = int(np.argmin(delta))
        i, j = divmod(flat, n)
        if not delta[i, j] < -tol:
            break
        med[i] = j
        med.sort()
    return med


def pam(d: np.ndarray, k: int, init: Sequence[int] | None = None) -> Partition:
    """Partitioning around medoids (BUILD then best-improvement SWAP).

    Ties are broken towards the lowest unit index at every choice point.
    Labels are ``1..k`` in increasing medoid index; ``score`` is left NaN
    (it depends on a similarity matrix, see :func:`clustering_score`).
    """
    d = _check_dissimilarity(d)
    n = d.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in 1..{n}, got {k}")
    medoids = list(init) if init is not None else _build(d, k)
    med = _swap(d, medoids)
    first, dn, _ = _assign(d, med)
    first[med] = np.arange(len(med))  # a medoid tied with another keeps its own cluster
    return Partition(labels=first + 1, C=k, score=float("nan"), medoids=med,
                     cost=float(dn.sum()))


def clustering_score(p: np.ndarray, labels: np.ndarray) -> float:
    """Pairwise agreement: co-clustered pairs earn ``p``, split pairs ``1 - p``."""
    p = np.asarray(p, dtype=float)
    labels = np.asarray(labels)
    n = len(labels)
    _, inv = np.unique(labels, return_inverse=True)
    h = np.zeros((n, inv.max() + 1))
    h[np.arange(n), inv] = 1.0
    q = 2.0 * p - 1.0
    same_q = float(np.einsum("ic,ic->", h, q @ h))  # sum over same-cluster ordered pairs
    upper_split = (float((1.0 - p).sum()) - float(np.trace(1.0 - p))) / 2.0
    return upper_split + (same_q - float(np.trace(q))) / 2.0


def default_k_range(n: int) -> range:
    lo = 1 if n <= 50 else 2
    hi = max(min(20, n - 1), lo)
    return range(lo, hi + 1)


def best_partition(psm: PosteriorSimilarityMatrix | np.ndarray,
                   k_range: Iterable[int] | None = None) -> Partition:
    """PAM on ``1 - p`` for each ``k``; keep the highest clustering score.

    Ties go to the smaller ``k``.
    """
    p = psm.p if isinstance(psm, PosteriorSimilarityMatrix) else np.asarray(psm, dtype=float)
    n = p.shape[0]
    ks = sorted(set(default_k_range(n) if k_range is None else k_range))
    if not ks:
        raise ValueError("k_range is empty")
    if ks[0] < 1 or ks[-1] > n:
        raise ValueError(f"k_range must lie within 1..{n}")
    d = _check_dissimilarity(1.0 - p)
    build = _build(d, ks[-1])
    best = None
    for k in ks:
        part = pam(d, k, init=build[:k])
        score = clustering_score(p, part.labels)
        if best is None or score > best.score:
            best = Partition(part.labels, part.C, score, part.medoids, part.cost)
    return best


def write_psm_csv(psm: PosteriorSimilarityMatrix, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in psm.p:
            w.writerow([repr(float(v)) for v in row])
    return path


def write_partition_csv(partition: Partition, ids: Sequence, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "label"])
        for uid, lab in zip(ids, partition.labels):
            w.writerow([uid, int(lab)])
    return path

"""Balance filtering, homogeneity ranking and the four cluster-selection rules."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .partition import Partition, PosteriorSimilarityMatrix

STRATEGIES = ("inc10", "c25", "n50", "n25")
DEFAULT_BOUNDS = (0.1, 0.9)


class SelectionError(ValueError):
    pass


@dataclass(frozen=True)
class ClusterSummary:
    cluster_id: int
    n_c: int
    pi_z: float
    homogeneity: float
    balanced: bool
    rank: int | None = None
    singleton: bool = False


@dataclass(frozen=True)
class SelectionResult:
    strategy: str
    selected_cluster_ids: tuple[int, ...]
    unit_index: np.ndarray = field(repr=False)
    coverage: float
    short: bool = False  # n50/n25 target not reached even with every balanced cluster

    def unit_ids(self, ids: Sequence) -> list:
        return [ids[i] for i in self.unit_index]


def balance_bounds(zeta: float | None = None) -> tuple[float, float]:
    """``[1/zeta, (zeta-1)/zeta]``; without ``zeta`` the default ``[0.1, 0.9]``."""
    if zeta is None:
        return DEFAULT_BOUNDS
    if not zeta > 2:
        raise SelectionError(f"zeta must exceed 2, got {zeta}")
    return 1.0 / zeta, (zeta - 1.0) / zeta


def cluster_balance(labels: np.ndarray, z: np.ndarray, zeta: float | None = None,
                    bounds: tuple[float, float] | None = None):
    """Per-cluster above-threshold share and balance flag.

    Returns ``(cluster_ids, pi_z, balanced, n_balanced)``; intervals are closed.
    """
    labels = np.asarray(getattr(labels, "labels", labels))
    z = np.asarray(z)
    if labels.shape != z.shape:
        raise SelectionError("partition and threshold indicator differ in length")
    lo, hi = bounds if bounds is not None else balance_bounds(zeta)
    ids, inv = np.unique(labels, return_inverse=True)
    n_c = np.bincount(inv)
    pi_z = np.bincount(inv, weights=z.astype(float)) / n_c
    balanced = (pi_z >= lo) & (pi_z <= hi)
    return ids, pi_z, balanced, int(balanced.sum())


def homogeneity_index(psm: PosteriorSimilarityMatrix | np.ndarray, members) -> tuple[float, bool]:
    """Mean posterior co-clustering dissimilarity over distinct member pairs.

    0 means every pair always co-clusters. Returns ``(index, singleton)``;
    a singleton gets index 0 and the flag set.
    """
    p = psm.p if isinstance(psm, PosteriorSimilarityMatrix) else np.asarray(psm)
    idx = np.asarray(members, dtype=np.intp)
    n = len(idx)
    if n == 0:
        raise SelectionError("empty cluster")
    if n == 1:
        return 0.0, True
    sub = p[np.ix_(idx, idx)]
    upper = np.triu_indices(n, 1)
    return float((1.0 - sub[upper]).sum() * 2.0 / (n * (n - 1))), False


def summarize_clusters(partition: Partition, psm: PosteriorSimilarityMatrix | np.ndarray,
                       z: np.ndarray, zeta: float | None = None,
                       bounds: tuple[float, float] | None = None,
                       drop_singletons: bool = True) -> list[ClusterSummary]:
    """Summaries for every cluster, ranks filled in for the eligible balanced ones."""
    labels = np.asarray(partition.labels)
    ids, pi_z, balanced, _ = cluster_balance(labels, z, zeta, bounds)
    out = []
    for cid, pz, bal in zip(ids, pi_z, balanced):
        members = np.flatnonzero(labels == cid)
        h, single = homogeneity_index(psm, members)
        out.append(ClusterSummary(int(cid), len(members), float(pz), h, bool(bal), None, single))
    eligible = [s for s in out if s.balanced and not (drop_singletons and s.singleton)]
    ranked = {s.cluster_id: r for r, s in enumerate(rank_clusters(eligible), start=1)}
    return [ClusterSummary(s.cluster_id, s.n_c, s.pi_z, s.homogeneity, s.balanced,
                           ranked.get(s.cluster_id), s.singleton) for s in out]


def rank_clusters(summaries: Iterable[ClusterSummary]) -> list[ClusterSummary]:
    """Most homogeneous first; ties by larger size, then smaller id."""
    ordered = sorted(summaries, key=lambda s: (s.homogeneity, -s.n_c, s.cluster_id))
    return [ClusterSummary(s.cluster_id, s.n_c, s.pi_z, s.homogeneity, s.balanced, r, s.singleton)
            for r, s in enumerate(ordered, start=1)]


def _relative_gap(lo: float, hi: float) -> float:
    if lo == 0.0:
        return 0.0 if hi == 0.0 else math.inf
    return (hi - lo) / lo


def _n_selected(ranked: Sequence[ClusterSummary], strategy: str, n_total: int) -> tuple[int, bool]:
    c_prime = len(ranked)
    if strategy == "inc10":
        k = 1
        while k < c_prime and _relative_gap(ranked[k - 1].homogeneity, ranked[k].homogeneity) < 0.10:
            k += 1
        return k, False
    if strategy == "c25":
        return max(1, math.ceil(c_prime / 4)), False
    if strategy in ("n50", "n25"):
        target = n_total / (2.0 if strategy == "n50" else 4.0)
        total = 0
        for k, s in enumerate(ranked, start=1):
            total += s.n_c
            if total >= target:
                return k, False
        return c_prime, True
    raise SelectionError(f"unknown strategy {strategy!r}")


def select_units(ranked: Sequence[ClusterSummary], strategy: str, n_total: int,
                 labels: np.ndarray | None = None) -> SelectionResult:
    """Apply one selection rule to ranked balanced clusters.

    ``labels`` (the partition, 1-based ids) maps clusters back to units; when
    omitted the result carries no unit indices.
    """
    ranked = list(ranked)
    if not ranked:
        raise SelectionError("no balanced cluster to select from")
    k, short = _n_selected(ranked, strategy, n_total)
    chosen = tuple(s.cluster_id for s in ranked[:k])
    if labels is None:
        index = np.zeros(0, dtype=np.intp)
        size = sum(s.n_c for s in ranked[:k])
    else:
        index = np.flatnonzero(np.isin(labels, chosen))
        size = len(index)
    return SelectionResult(strategy, chosen, index, size / n_total, short)


def select_all(summaries: Sequence[ClusterSummary], labels: np.ndarray, n_total: int,
               strategies: Sequence[str] = STRATEGIES) -> dict[str, SelectionResult]:
    ranked = sorted((s for s in summaries if s.rank is not None), key=lambda s: s.rank)
    return {st: select_units(ranked, st, n_total, labels) for st in strategies}


def write_cluster_summary_csv(summaries: Sequence[ClusterSummary], path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cluster_id", "n", "pi_z", "homogeneity", "balanced", "rank"])
        for s in summaries:
            w.writerow([s.cluster_id, s.n_c, repr(s.pi_z), repr(s.homogeneity),
                        int(s.balanced), "" if s.rank is None else s.rank])
    return path


def write_selection_csv(selections: dict[str, SelectionResult], labels: np.ndarray,
                        ids: Sequence, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["strategy", "cluster_id", "unit_id"])
        for name, sel in selections.items():
            for i in sel.unit_index:
                w.writerow([name, int(labels[i]), ids[i]])
    return path

"""Two-step agglomerative clustering of a block's similarity graph.

Step 1 links papers whose score exceeds ``beta1`` and takes connected
components. Step 2 scores every pair of step-1 clusters by the mean of their
above-``beta2`` link scores, merges the components of cluster pairs scoring
above ``beta3`` (one round), and finally attaches each paper still alone to
the cluster holding its strongest link above ``beta4``.

Every routine works on flat arrays of node indices, so the same code runs on
one block or on the disjoint union of many blocks.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .corpus import Corpus, NameBlock
from .similarity import DEFAULT_YEAR_GAP, DisambiguationParams, SimilarityGraph, compute_terms

# S values this close to beta3 are re-summed exactly before comparing
_BORDERLINE = 1e-9


@dataclass(frozen=True)
class Cluster:
    cluster_id: int
    paper_ids: frozenset[int]

    def __len__(self) -> int:
        return len(self.paper_ids)


@dataclass(frozen=True)
class Clustering:
    key: str
    clusters: tuple[Cluster, ...]

    @classmethod
    def from_groups(cls, key: str, groups: Iterable[Iterable[int]]) -> Clustering:
        """Canonical numbering: clusters ordered by their smallest paper id."""
        sets = sorted((frozenset(g) for g in groups if g), key=min)
        return cls(key, tuple(Cluster(k, s) for k, s in enumerate(sets)))

    @classmethod
    def from_labels(cls, key: str, paper_ids: Sequence[int], labels: np.ndarray) -> Clustering:
        groups: dict[int, list[int]] = {}
        for pid, lab in zip(paper_ids, labels.tolist()):
            groups.setdefault(lab, []).append(int(pid))
        return cls.from_groups(key, groups.values())

    @property
    def paper_ids(self) -> list[int]:
        return sorted(p for c in self.clusters for p in c.paper_ids)

    def labels(self, paper_ids: Sequence[int]) -> np.ndarray:
        """Per-paper label equal to the local index of the cluster's first paper."""
        local = {pid: k for k, pid in enumerate(paper_ids)}
        out = np.empty(len(paper_ids), dtype=np.int64)
        for c in self.clusters:
            idx = [local[p] for p in c.paper_ids]
            out[idx] = min(idx)
        return out

    def partition(self) -> frozenset[frozenset[int]]:
        return frozenset(c.paper_ids for c in self.clusters)

    def __len__(self) -> int:
        return len(self.clusters)


# -- array core -----------------------------------------------------------------


def components(n: int, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Connected-component labels, each equal to the smallest node index in it."""
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    adj = sp.coo_matrix((np.ones(len(u), dtype=np.int8), (u, v)), shape=(n, n))
    _, comp = connected_components(adj, directed=False)
    first = np.full(comp.max() + 1, n, dtype=np.int64)
    np.minimum.at(first, comp, np.arange(n, dtype=np.int64))
    return first[comp]


def step1_labels(n: int, li: np.ndarray, lj: np.ndarray, s: np.ndarray, beta1: float) -> np.ndarray:
    edge = s > beta1
    return components(n, li[edge], lj[edge])


def cluster_pair_scores(
    labels: np.ndarray, li: np.ndarray, lj: np.ndarray, s: np.ndarray, beta2: float, exact_near: float | None = None
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(gamma, kappa, S)`` for every pair of clusters joined by a link above ``beta2``.

    ``exact_near``: values within ``_BORDERLINE`` of it are recomputed with
    ``math.fsum`` so the comparison against it does not depend on summation order.
    """
    n = len(labels)
    ga, gb = labels[li], labels[lj]
    mask = (ga != gb) & (s > beta2)
    lo = np.minimum(ga[mask], gb[mask])
    hi = np.maximum(ga[mask], gb[mask])
    vals = s[mask]
    if vals.size == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, np.zeros(0)
    keys = lo * n + hi
    uniq, inv = np.unique(keys, return_inverse=True)
    sums = np.bincount(inv, weights=vals)
    sizes = np.bincount(labels, minlength=n)
    gamma, kappa = uniq // n, uniq % n
    denom = (sizes[gamma] * sizes[kappa]).astype(np.float64)
    S = sums / denom
    if exact_near is not None:
        near = np.flatnonzero(np.abs(S - exact_near) <= _BORDERLINE * max(1.0, abs(exact_near)))
        if near.size:
            order = np.argsort(inv, kind="stable")
            starts = np.searchsorted(inv[order], near)
            ends = np.searchsorted(inv[order], near, side="right")
            for k, a, b in zip(near, starts, ends):
                S[k] = math.fsum(vals[order[a:b]].tolist()) / denom[k]
    return gamma, kappa, S


def merge_labels(labels: np.ndarray, li: np.ndarray, lj: np.ndarray, s: np.ndarray, beta2: float, beta3: float) -> np.ndarray:
    """One merge round over all given clusters, singletons included (no iteration to a fixpoint)."""
    gamma, kappa, S = cluster_pair_scores(labels, li, lj, s, beta2, exact_near=beta3)
    edge = S > beta3
    merged = components(len(labels), gamma[edge], kappa[edge])
    return merged[labels]


def attach_singletons(labels: np.ndarray, li: np.ndarray, lj: np.ndarray, s: np.ndarray, beta4: float) -> np.ndarray:
    """Move each lone paper into the multi-paper cluster holding its best link above ``beta4``.

    Ties on link score go to the cluster with the smaller label. Targets are
    the clusters as they stand before any attachment.
    """
    sizes = np.bincount(labels, minlength=len(labels))
    alone = sizes[labels] == 1
    strong = s > beta4
    src = np.concatenate((li, lj))
    dst = np.concatenate((lj, li))
    w = np.concatenate((s, s))
    ok = np.concatenate((strong, strong)) & alone[src] & ~alone[dst]
    src, target, w = src[ok], labels[dst[ok]], w[ok]
    out = labels.copy()
    if src.size == 0:
        return out
    order = np.lexsort((target, -w, src))
    src, target = src[order], target[order]
    first = np.ones(src.size, dtype=bool)
    first[1:] = src[1:] != src[:-1]
    out[src[first]] = target[first]
    return out


def cluster_arrays(n: int, li: np.ndarray, lj: np.ndarray, s: np.ndarray, params: DisambiguationParams) -> np.ndarray:
    labels = step1_labels(n, li, lj, s, params.beta1)
    labels = merge_labels(labels, li, lj, s, params.beta2, params.beta3)
    return attach_singletons(labels, li, lj, s, params.beta4)


# -- block-level API ----------------------------------------------------------------


def _local_links(graph: SimilarityGraph) -> tuple[np.ndarray, np.ndarray]:
    li = np.searchsorted(graph.paper_ids, graph.i)
    lj = np.searchsorted(graph.paper_ids, graph.j)
    return li, lj


def step1_components(graph: SimilarityGraph, params: DisambiguationParams) -> Clustering:
    li, lj = _local_links(graph)
    labels = step1_labels(len(graph.paper_ids), li, lj, graph.scores(params), params.beta1)
    return Clustering.from_labels(graph.key, graph.paper_ids, labels)


def cluster_similarity(
    gamma: Cluster | Iterable[int],
    kappa: Cluster | Iterable[int],
    graph: SimilarityGraph,
    params: DisambiguationParams,
    scores: dict[tuple[int, int], float] | None = None,
) -> float:
    g = set(gamma.paper_ids if isinstance(gamma, Cluster) else gamma)
    k = set(kappa.paper_ids if isinstance(kappa, Cluster) else kappa)
    if g & k:
        raise ValueError("clusters must be disjoint")
    if not g or not k:
        return 0.0
    scores = graph.score_map(params) if scores is None else scores
    total = []
    for (i, j), v in scores.items():
        if ((i in g and j in k) or (i in k and j in g)) and v > params.beta2:
            total.append(v)
    return math.fsum(total) / (len(g) * len(k))


def step2_merge(clustering: Clustering, graph: SimilarityGraph, params: DisambiguationParams) -> Clustering:
    li, lj = _local_links(graph)
    s = graph.scores(params)
    labels = clustering.labels(graph.paper_ids)
    labels = merge_labels(labels, li, lj, s, params.beta2, params.beta3)
    labels = attach_singletons(labels, li, lj, s, params.beta4)
    return Clustering.from_labels(graph.key, graph.paper_ids, labels)


def cluster_graph(graph: SimilarityGraph, params: DisambiguationParams) -> Clustering:
    li, lj = _local_links(graph)
    labels = cluster_arrays(len(graph.paper_ids), li, lj, graph.scores(params), params)
    return Clustering.from_labels(graph.key, graph.paper_ids, labels)


def cluster_graphs(graphs: Sequence[SimilarityGraph], params: DisambiguationParams) -> list[Clustering]:
    """Cluster many blocks as one disjoint graph; same result as ``cluster_graph`` per block."""
    sizes = [len(g.paper_ids) for g in graphs]
    offsets = np.concatenate(([0], np.cumsum(sizes))).astype(np.int64)
    li, lj, s = [np.zeros(0, np.int64)], [np.zeros(0, np.int64)], [np.zeros(0, np.float64)]
    for g, off in zip(graphs, offsets):
        a, b = _local_links(g)
        li.append(a + off)
        lj.append(b + off)
        s.append(g.scores(params))
    labels = cluster_arrays(int(offsets[-1]), np.concatenate(li), np.concatenate(lj), np.concatenate(s), params)
    return [
        Clustering.from_labels(g.key, g.paper_ids, labels[offsets[k]:offsets[k + 1]])
        for k, g in enumerate(graphs)
    ]


def disambiguate_block(
    corpus: Corpus, block: NameBlock, params: DisambiguationParams, year_gap: int = DEFAULT_YEAR_GAP
) -> Clustering:
    if not block.members:
        return Clustering(block.key, ())
    return cluster_graph(compute_terms(corpus, block, year_gap), params)


def write_clusters(clusterings: Iterable[Clustering], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for cl in clusterings:
            for c in cl.clusters:
                fh.write(json.dumps({"block": cl.key, "cluster_id": c.cluster_id, "paper_ids": sorted(c.paper_ids)}) + "\n")


def read_clusters(path: str | Path) -> list[Clustering]:
    groups: dict[str, list[list[int]]] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                groups.setdefault(rec["block"], []).append(rec["paper_ids"])
    return [Clustering.from_groups(key, g) for key, g in groups.items()]

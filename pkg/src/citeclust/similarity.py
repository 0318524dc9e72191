"""Parameter-free pairwise similarity terms and their weighted score.

Terms for a pair of papers ``i < j`` in a name block:

* coauthor overlap: overlap coefficient of the coauthor identities, with the
  block's own mentions removed from both lists,
* self-citation count: ``[i in refs(j)] + [j in refs(i)]``,
* shared references: ``|refs(i) & refs(j)|``,
* co-citation overlap: overlap coefficient of the citing-paper sets.

Terms are stored raw so a graph can be re-weighted under many parameter
vectors without recomputing any intersection.
"""
from __future__ import annotations

import json
import math
import multiprocessing
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .corpus import Corpus, NameBlock

DEFAULT_YEAR_GAP = 5


@dataclass(frozen=True)
class LinkTerms:
    i: int
    j: int
    coauthor_overlap: float
    self_cite_count: int
    shared_refs: int
    cocitation_overlap: float

    def any_nonzero(self) -> bool:
        return bool(self.coauthor_overlap or self.self_cite_count or self.shared_refs or self.cocitation_overlap)


@dataclass(frozen=True)
class DisambiguationParams:
    alpha_a: float = 0.54
    alpha_s: float = 0.75
    alpha_r: float = 0.19
    alpha_c: float = 1.02
    beta2: float = 0.19
    beta3: float = 0.011
    beta4: float = 0.49
    beta1: float = 1.0

    # order of the seven searchable values
    NAMES = ("alpha_a", "alpha_s", "alpha_r", "alpha_c", "beta2", "beta3", "beta4")

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{f.name} must be finite and non-negative, got {value}")
        if self.beta1 != 1.0:
            raise ValueError("beta1 is fixed to 1")

    def vector(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in self.NAMES], dtype=float)

    @classmethod
    def from_vector(cls, values: Sequence[float]) -> DisambiguationParams:
        return cls(**{n: float(v) for n, v in zip(cls.NAMES, values)})

    def to_json(self) -> dict:
        return {n: getattr(self, n) for n in self.NAMES + ("beta1",)}

    @classmethod
    def from_json(cls, obj: dict) -> DisambiguationParams:
        return cls(**{n: float(obj[n]) for n in cls.NAMES if n in obj}, beta1=float(obj.get("beta1", 1.0)))

    @classmethod
    def load(cls, path: str | Path) -> DisambiguationParams:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
        return cls.from_json(obj.get("params", obj))


REPORTED_OPTIMUM = DisambiguationParams()


def score(terms: LinkTerms, params: DisambiguationParams) -> float:
    return (
        params.alpha_a * terms.coauthor_overlap
        + params.alpha_s * terms.self_cite_count
        + params.alpha_r * terms.shared_refs
        + params.alpha_c * terms.cocitation_overlap
    )


class SimilarityGraph:
    """Links of one block as parallel arrays, sorted by ``(i, j)`` with ``i < j``."""

    def __init__(self, key: str, paper_ids: Sequence[int], i, j, a, s, r, c, year_gap: int = DEFAULT_YEAR_GAP):
        self.key = key
        self.paper_ids = np.asarray(paper_ids, dtype=np.int64)
        self.i = np.asarray(i, dtype=np.int64)
        self.j = np.asarray(j, dtype=np.int64)
        self.a = np.asarray(a, dtype=np.float64)
        self.s = np.asarray(s, dtype=np.int64)
        self.r = np.asarray(r, dtype=np.int64)
        self.c = np.asarray(c, dtype=np.float64)
        self.year_gap = year_gap

    def __len__(self) -> int:
        return len(self.i)

    @property
    def links(self) -> list[LinkTerms]:
        return [
            LinkTerms(int(i), int(j), float(a), int(s), int(r), float(c))
            for i, j, a, s, r, c in zip(self.i, self.j, self.a, self.s, self.r, self.c)
        ]

    def scores(self, params: DisambiguationParams) -> np.ndarray:
        # same operation order as score() so results are bit-identical
        return params.alpha_a * self.a + params.alpha_s * self.s + params.alpha_r * self.r + params.alpha_c * self.c

    def score_map(self, params: DisambiguationParams) -> dict[tuple[int, int], float]:
        return {(int(i), int(j)): float(v) for i, j, v in zip(self.i, self.j, self.scores(params))}

    def __eq__(self, other) -> bool:
        if not isinstance(other, SimilarityGraph):
            return NotImplemented
        return (
            self.key == other.key
            and np.array_equal(self.paper_ids, other.paper_ids)
            and all(np.array_equal(getattr(self, f), getattr(other, f)) for f in "ijasrc")
        )


def _incidence(keys: np.ndarray, lengths: np.ndarray) -> sp.csr_matrix:
    """Binary node x feature matrix from flattened per-node feature keys."""
    n = lengths.size
    if keys.size == 0:
        return sp.csr_matrix((n, 1), dtype=np.int64)
    uniq, cols = np.unique(keys, return_inverse=True)
    indptr = np.concatenate(([0], np.cumsum(lengths)))
    return sp.csr_matrix((np.ones(keys.size, dtype=np.int64), cols.ravel(), indptr), shape=(n, uniq.size))


def _gather(mat: sp.csr_matrix, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    if rows.size == 0:
        return np.zeros(0, dtype=mat.dtype)
    return np.asarray(mat[rows, cols]).ravel()


def _overlap(inter: np.ndarray, size_i: np.ndarray, size_j: np.ndarray) -> np.ndarray:
    denom = np.minimum(size_i, size_j)
    out = np.zeros(inter.shape, dtype=np.float64)
    np.divide(inter, denom, out=out, where=denom > 0)
    return out


class _Features:
    """Per-node feature lists, keyed by block so that products never pair two blocks."""

    def __init__(self, n_blocks: int):
        self.stride = n_blocks
        self.keys: list[int] = []
        self.lengths: list[int] = []

    def add(self, block: int, values: Iterable[int]) -> None:
        before = len(self.keys)
        self.keys.extend(v * self.stride + block for v in values)
        self.lengths.append(len(self.keys) - before)

    def matrix(self) -> sp.csr_matrix:
        return _incidence(np.asarray(self.keys, dtype=np.int64), np.asarray(self.lengths, dtype=np.int64))


def _compute_batch(corpus: Corpus, blocks: Sequence[NameBlock], year_gap: int) -> list[SimilarityGraph]:
    """Terms for several blocks at once, as one block-diagonal computation."""
    nb = len(blocks)
    offsets = np.zeros(nb + 1, dtype=np.int64)
    offsets[1:] = np.cumsum([len(b.paper_ids) for b in blocks])
    n = int(offsets[-1])
    identities: dict[tuple, int] = {}
    coauthors, refs, citers = _Features(nb), _Features(nb), _Features(nb)
    self_rows: list[int] = []
    self_cols: list[int] = []
    node_ids = np.empty(n, dtype=np.int64)
    years = np.empty(n, dtype=np.int64)
    node = 0
    for k, block in enumerate(blocks):
        local = {pid: int(offsets[k]) + x for x, pid in enumerate(block.paper_ids)}
        focal = block.focal_positions()
        for pid in block.paper_ids:
            paper = corpus[pid]
            skip = focal[pid]
            coauthors.add(k, {identities.setdefault(m.identity, len(identities))
                              for pos, m in enumerate(paper.authors) if pos not in skip})
            refs.add(k, paper.refs)
            citers.add(k, corpus.citers[pid])
            for r in paper.refs:
                if r in local:
                    self_rows.append(node)
                    self_cols.append(local[r])
            node_ids[node] = pid
            years[node] = paper.year
            node += 1

    xa, xr, xc = coauthors.matrix(), refs.matrix(), citers.matrix()
    aa = (xa @ xa.T).tocsr()
    rr = (xr @ xr.T).tocsr()
    cc = (xc @ xc.T).tocsr()
    m = sp.csr_matrix((np.ones(len(self_rows), dtype=np.int64), (self_rows, self_cols)), shape=(n, n))
    ss = (m + m.T).tocsr()

    pattern = sp.triu(aa + rr + cc + ss, k=1).tocoo()
    rows, cols = pattern.row.astype(np.int64), pattern.col.astype(np.int64)
    keep = np.abs(years[rows] - years[cols]) <= year_gap
    rows, cols = rows[keep], cols[keep]
    order = np.lexsort((cols, rows))
    rows, cols = rows[order], cols[order]

    a_size = np.diff(xa.indptr)
    c_size = np.diff(xc.indptr)
    a = _overlap(_gather(aa, rows, cols), a_size[rows], a_size[cols])
    c = _overlap(_gather(cc, rows, cols), c_size[rows], c_size[cols])
    s = _gather(ss, rows, cols)
    r = _gather(rr, rows, cols)
    i, j = node_ids[rows], node_ids[cols]
    cuts = np.searchsorted(rows, offsets)
    return [
        SimilarityGraph(block.key, block.paper_ids, *(x[cuts[k]:cuts[k + 1]] for x in (i, j, a, s, r, c)), year_gap)
        for k, block in enumerate(blocks)
    ]


def compute_terms(corpus: Corpus, block: NameBlock, year_gap: int = DEFAULT_YEAR_GAP) -> SimilarityGraph:
    return _compute_batch(corpus, [block], year_gap)[0]


def _batches(blocks: Sequence[NameBlock], max_papers: int) -> list[list[NameBlock]]:
    out: list[list[NameBlock]] = [[]]
    size = 0
    for b in blocks:
        if out[-1] and size + len(b.paper_ids) > max_papers:
            out.append([])
            size = 0
        out[-1].append(b)
        size += len(b.paper_ids)
    return out


# -- batch computation ----------------------------------------------------------

_WORKER_CORPUS: Corpus | None = None
BATCH_PAPERS = 20_000


def _worker_compute(args: tuple[list[NameBlock], int]) -> list[SimilarityGraph]:
    batch, year_gap = args
    return _compute_batch(_WORKER_CORPUS, batch, year_gap)


def resolve_threads(threads: int) -> int:
    if threads <= 0:
        return os.cpu_count() or 1
    return threads


def compute_all_terms(
    corpus: Corpus,
    blocks: Sequence[NameBlock],
    year_gap: int = DEFAULT_YEAR_GAP,
    threads: int = 1,
) -> list[SimilarityGraph]:
    """Term graphs for every block, in block order regardless of worker count."""
    global _WORKER_CORPUS
    threads = resolve_threads(threads)
    if not blocks:
        return []
    batches = _batches(blocks, BATCH_PAPERS if threads == 1 else max(1, sum(len(b.paper_ids) for b in blocks) // (threads * 4)))
    if threads == 1 or len(batches) < 2:
        return [g for batch in batches for g in _compute_batch(corpus, batch, year_gap)]
    _WORKER_CORPUS = corpus
    try:
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(max_workers=threads, mp_context=ctx) as pool:
            parts = pool.map(_worker_compute, [(b, year_gap) for b in batches])
            return [g for part in parts for g in part]
    finally:
        _WORKER_CORPUS = None


# -- link cache -------------------------------------------------------------------


def write_link_cache(graphs: Iterable[SimilarityGraph], path: str | Path) -> None:
    """One header line per block followed by its ``{i, j, a, s, r, c}`` link lines."""
    with open(path, "w", encoding="utf-8") as fh:
        for g in graphs:
            header = {"block": g.key, "papers": g.paper_ids.tolist(), "year_gap": g.year_gap, "links": len(g)}
            fh.write(json.dumps(header) + "\n")
            for i, j, a, s, r, c in zip(g.i.tolist(), g.j.tolist(), g.a.tolist(), g.s.tolist(), g.r.tolist(), g.c.tolist()):
                fh.write(json.dumps({"i": i, "j": j, "a": a, "s": s, "r": r, "c": c}) + "\n")


def read_link_cache(path: str | Path) -> list[SimilarityGraph]:
    graphs = []
    with open(path, encoding="utf-8") as fh:
        lines = iter(fh)
        for line in lines:
            header = json.loads(line)
            count = header["links"]
            cols: dict[str, list] = {k: [] for k in "ijasrc"}
            for _ in range(count):
                rec = json.loads(next(lines))
                for k in "ijasrc":
                    cols[k].append(rec[k])
            graphs.append(
                SimilarityGraph(header["block"], header["papers"], *(cols[k] for k in "ijasrc"), year_gap=header["year_gap"])
            )
    return graphs

"""Parameter search over the seven disambiguation tunables.

``EvalSet`` concatenates the precomputed term graphs of many blocks into one
disjoint graph so a parameter vector is evaluated with a handful of array
passes. Its errors equal ``metrics.aggregate_errors`` on per-block
clusterings exactly; the test-suite checks this.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .clustering import Clustering, cluster_arrays
from .corpus import Corpus, GoldProfile
from .metrics import focal_mentions, h_index, surname_of_key
from .similarity import DisambiguationParams, SimilarityGraph, resolve_threads

NAMES = DisambiguationParams.NAMES
FEATURES = {"A": "alpha_a", "S": "alpha_s", "R": "alpha_r", "C": "alpha_c"}


@dataclass(frozen=True)
class ParamSpace:
    low: tuple[float, ...] = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    high: tuple[float, ...] = (2.0, 2.0, 2.0, 2.0, 1.0, 0.2, 2.0)
    pinned: frozenset[str] = frozenset()
    """Parameters held at zero (disabled features)."""

    def __post_init__(self):
        if len(self.low) != len(NAMES) or len(self.high) != len(NAMES):
            raise ValueError("ParamSpace needs one range per searchable parameter")
        if any(lo > hi for lo, hi in zip(self.low, self.high)):
            raise ValueError("lower bound above upper bound")
        if not self.pinned <= set(NAMES):
            raise ValueError(f"unknown pinned parameters {sorted(self.pinned - set(NAMES))}")

    @property
    def free(self) -> np.ndarray:
        return np.array([n not in self.pinned for n in NAMES])

    @property
    def width(self) -> np.ndarray:
        return np.asarray(self.high) - np.asarray(self.low)

    def clip(self, x: np.ndarray) -> np.ndarray:
        x = np.clip(x, self.low, self.high)
        return np.where(self.free, x, 0.0)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        x = rng.uniform(self.low, self.high, size=(n, len(NAMES)))
        return np.where(self.free, x, 0.0)

    @classmethod
    def for_features(cls, features: str, base: ParamSpace | None = None) -> ParamSpace:
        """Space with the weights of features not listed in ``features`` (letters A/S/R/C) pinned."""
        base = base or cls()
        pinned = frozenset(name for letter, name in FEATURES.items() if letter not in features.upper())
        return cls(base.low, base.high, pinned)


@dataclass
class SearchResult:
    params: DisambiguationParams
    p_error: float
    rh_error: float
    objective: float
    evaluations: int = 1
    seed: int | None = None
    weight: float = 0.5
    index: int = 0
    phase: str = "random"

    def row(self) -> dict:
        return {"index": self.index, "phase": self.phase, **self.params.to_json(),
                "p_error": self.p_error, "rh_error": self.rh_error, "objective": self.objective}


def objective(p_error: float, rh_error: float, weight: float = 0.5) -> float:
    return weight * rh_error + (1.0 - weight) * p_error


class EvalSet:
    """Cached term graphs plus the per-paper data needed for both error measures."""

    def __init__(self, corpus: Corpus, graphs: Sequence[SimilarityGraph], profiles: Iterable[GoldProfile]):
        graphs = sorted(graphs, key=lambda g: g.key)
        self.keys = [g.key for g in graphs]
        self.offsets = np.cumsum([0] + [len(g.paper_ids) for g in graphs])
        n = int(self.offsets[-1])
        self.n = n
        self.node_paper = np.concatenate([g.paper_ids for g in graphs]) if graphs else np.zeros(0, np.int64)
        self.node_block = np.repeat(np.arange(len(graphs)), np.diff(self.offsets))
        li, lj, cols = [], [], {f: [] for f in "asrc"}
        for g, off in zip(graphs, self.offsets):
            li.append(np.searchsorted(g.paper_ids, g.i) + off)
            lj.append(np.searchsorted(g.paper_ids, g.j) + off)
            for f in "asrc":
                cols[f].append(getattr(g, f))
        cat = lambda xs, dt: np.concatenate(xs).astype(dt) if xs else np.zeros(0, dt)
        self.li, self.lj = cat(li, np.int64), cat(lj, np.int64)
        self.a, self.s = cat(cols["a"], np.float64), cat(cols["s"], np.int64)
        self.r, self.c = cat(cols["r"], np.float64), cat(cols["c"], np.float64)

        # focal first initials per node
        init_node, init_code = [], []
        codes: dict[str, int] = {}
        for g, off in zip(graphs, self.offsets):
            for k, pid in enumerate(g.paper_ids.tolist()):
                for m in focal_mentions(corpus, g.key, pid):
                    if m.first_initial is not None:
                        init_node.append(off + k)
                        init_code.append(codes.setdefault(m.first_initial, len(codes)))
        self.init_node = np.asarray(init_node, dtype=np.int64)
        self.init_code = np.asarray(init_code, dtype=np.int64)
        self.n_codes = max(1, len(codes))

        # profile membership over nodes of blocks carrying the profile's surname
        nodes_by_surname: dict[str, dict[int, list[int]]] = {}
        for b, (g, off) in enumerate(zip(graphs, self.offsets)):
            slot = nodes_by_surname.setdefault(surname_of_key(g.key), {})
            for k, pid in enumerate(g.paper_ids.tolist()):
                slot.setdefault(pid, []).append(off + k)
        prof, node, gold_h = [], [], []
        self.profiles_h_zero = 0
        self.profiles_empty = 0
        for profile in sorted(profiles, key=lambda p: p.profile_id):
            if not profile.paper_ids:
                self.profiles_empty += 1
                continue
            h = h_index(corpus.citation_count(p) for p in profile.paper_ids)
            if h == 0:
                self.profiles_h_zero += 1
                continue
            slot = nodes_by_surname.get(profile.surname, {})
            idx = len(gold_h)
            gold_h.append(h)
            for pid in sorted(profile.paper_ids):
                for v in slot.get(pid, ()):
                    prof.append(idx)
                    node.append(v)
        self.gold_h = np.asarray(gold_h, dtype=np.int64)
        self.prof = np.asarray(prof, dtype=np.int64)
        self.prof_node = np.asarray(node, dtype=np.int64)
        cites = np.array([corpus.citation_count(int(p)) for p in self.node_paper], dtype=np.int64)
        self.prof_cites = cites[self.prof_node] if len(node) else np.zeros(0, np.int64)

    def __len__(self) -> int:
        return len(self.keys)

    def labels(self, params: DisambiguationParams) -> np.ndarray:
        s = params.alpha_a * self.a + params.alpha_s * self.s + params.alpha_r * self.r + params.alpha_c * self.c
        return cluster_arrays(self.n, self.li, self.lj, s, params)

    def clusterings(self, params: DisambiguationParams) -> list[Clustering]:
        labels = self.labels(params)
        out = []
        for b, key in enumerate(self.keys):
            lo, hi = self.offsets[b], self.offsets[b + 1]
            out.append(Clustering.from_labels(key, self.node_paper[lo:hi], labels[lo:hi]))
        return out

    def errors_from_labels(self, labels: np.ndarray) -> tuple[float, float]:
        n = self.n
        sizes = np.bincount(labels, minlength=n)
        # precision: modal initial share per cluster label
        w = self.n_codes
        counts = np.bincount(labels[self.init_node] * w + self.init_code, minlength=n * w).reshape(n, w)
        total = counts.sum(axis=1)
        valid = np.flatnonzero(total > 0)
        if valid.size == 0 or self.gold_h.size == 0:
            raise ValueError("evaluation set has no valid cluster or no valid profile")
        p = counts[valid].max(axis=1) / total[valid]
        p_terms = (1.0 - p) * np.sqrt(sizes[valid])
        p_error = math.fsum(p_terms.tolist()) / valid.size

        # h-index of each (profile, cluster) intersection
        lab = labels[self.prof_node]
        order = np.lexsort((-self.prof_cites, lab, self.prof))
        gp, gl, gc = self.prof[order], lab[order], self.prof_cites[order]
        new = np.ones(gp.size, dtype=bool)
        new[1:] = (gp[1:] != gp[:-1]) | (gl[1:] != gl[:-1])
        group = np.cumsum(new) - 1
        starts = np.flatnonzero(new)
        rank = np.arange(gp.size) - starts[group] + 1
        gsize = np.bincount(group)
        gh = np.bincount(group, weights=(gc >= rank)).astype(np.int64)
        gprof = gp[starts]
        # best group per profile: largest intersection, then largest h
        best = np.lexsort((-gh, -gsize, gprof))
        first = np.ones(best.size, dtype=bool)
        first[1:] = gprof[best[1:]] != gprof[best[:-1]]
        h_best = np.zeros(self.gold_h.size, dtype=np.int64)
        h_best[gprof[best[first]]] = gh[best[first]]
        rh = h_best / self.gold_h
        rh_error = math.fsum((1.0 - rh).tolist()) / self.gold_h.size
        return p_error, rh_error

    def evaluate(self, params: DisambiguationParams) -> tuple[float, float]:
        return self.errors_from_labels(self.labels(params))


Evaluator = Callable[[DisambiguationParams], tuple[float, float]]


def _evaluate_many(evaluate: Evaluator, params: Sequence[DisambiguationParams], threads: int) -> list[tuple[float, float]]:
    threads = resolve_threads(threads)
    if threads == 1 or len(params) < 2:
        return [evaluate(p) for p in params]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        # map keeps submission order, so results are indexed by sample number
        return list(pool.map(evaluate, params))


def random_search(
    space: ParamSpace,
    n: int,
    seed: int,
    evaluate: EvalSet | Evaluator,
    weight: float = 0.5,
    threads: int = 1,
) -> list[SearchResult]:
    if n < 1:
        raise ValueError("n must be at least 1")
    fn = evaluate.evaluate if isinstance(evaluate, EvalSet) else evaluate
    rng = np.random.Generator(np.random.PCG64(seed))
    params = [DisambiguationParams.from_vector(x) for x in space.sample(rng, n)]
    out = []
    for k, (p, (pe, rh)) in enumerate(zip(params, _evaluate_many(fn, params, threads))):
        out.append(SearchResult(p, pe, rh, objective(pe, rh, weight), 1, seed, weight, k, "random"))
    return out


def best_result(results: Iterable[SearchResult]) -> SearchResult:
    return min(results, key=lambda r: (r.objective, r.p_error, r.rh_error, r.index))


@dataclass
class RadiusSchedule:
    initial: float = 0.1
    """Starting radius in units of each parameter's range width."""
    shrink: float = 0.5
    minimum: float = 1e-3
    probes: int = 20
    max_iter: int = 60


def sphere_points(rng: np.random.Generator, k: int, dim: int) -> np.ndarray:
    d = rng.standard_normal((k, dim))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def local_search(
    start: SearchResult | DisambiguationParams,
    evaluate: EvalSet | Evaluator,
    space: ParamSpace | None = None,
    schedule: RadiusSchedule | None = None,
    seed: int = 0,
    weight: float = 0.5,
    threads: int = 1,
    trace: list[SearchResult] | None = None,
) -> SearchResult:
    """Probe points on a shrinking sphere around the incumbent; move on improvement, halve otherwise."""
    space = space or ParamSpace()
    schedule = schedule or RadiusSchedule()
    fn = evaluate.evaluate if isinstance(evaluate, EvalSet) else evaluate
    if isinstance(start, DisambiguationParams):
        pe, rh = fn(start)
        start = SearchResult(start, pe, rh, objective(pe, rh, weight), 1, seed, weight, 0, "local")
    rng = np.random.Generator(np.random.PCG64(seed))
    free = space.free
    best = start
    radius = schedule.initial
    evals = 0
    counter = 0
    for _ in range(schedule.max_iter):
        if radius < schedule.minimum:
            break
        dirs = np.zeros((schedule.probes, len(NAMES)))
        dirs[:, free] = sphere_points(rng, schedule.probes, int(free.sum()))
        cand = [space.clip(best.params.vector() + radius * d * space.width) for d in dirs]
        params = [DisambiguationParams.from_vector(x) for x in cand]
        results = []
        for p, (pe, rh) in zip(params, _evaluate_many(fn, params, threads)):
            counter += 1
            results.append(SearchResult(p, pe, rh, objective(pe, rh, weight), 1, seed, weight, counter, "local"))
        evals += len(results)
        if trace is not None:
            trace.extend(results)
        top = best_result(results)
        if top.objective < best.objective:
            best = top
        else:
            radius *= schedule.shrink
    return SearchResult(best.params, best.p_error, best.rh_error, best.objective,
                        start.evaluations + evals, seed, weight, best.index, best.phase)


def lower_hull(points: Iterable[tuple[float, float]]) -> list[tuple[float, float]]:
    """Staircase Pareto frontier (minimizing both coordinates), sorted by the first."""
    hull: list[tuple[float, float]] = []
    for x, y in sorted(set(points)):
        if not hull or y < hull[-1][1]:
            hull.append((x, y))
    return hull


def ablation_hull(results_by_subset: dict[str, Iterable[SearchResult | tuple[float, float]]]) -> dict[str, list[tuple[float, float]]]:
    out = {}
    for subset, results in results_by_subset.items():
        pts = [(r.p_error, r.rh_error) if isinstance(r, SearchResult) else tuple(r) for r in results]
        out[subset] = lower_hull(pts)
    return out


def hull_dominance(reference: Sequence[tuple[float, float]], other: Sequence[tuple[float, float]]) -> float:
    """Fraction of ``other``'s hull points weakly dominated by some point of ``reference``."""
    if not other:
        return 1.0
    hits = sum(1 for x, y in other if any(rx <= x and ry <= y for rx, ry in reference))
    return hits / len(other)


@dataclass
class AblationRun:
    results: dict[str, list[SearchResult]] = field(default_factory=dict)
    hulls: dict[str, list[tuple[float, float]]] = field(default_factory=dict)

    def dominance(self, full: str = "ASRC") -> dict[str, float]:
        return {k: hull_dominance(self.hulls[full], h) for k, h in self.hulls.items() if k != full}


def reweigh(result: SearchResult, weight: float) -> SearchResult:
    return SearchResult(result.params, result.p_error, result.rh_error, objective(result.p_error, result.rh_error, weight),
                        result.evaluations, result.seed, weight, result.index, result.phase)


def _distinct_best(results: Sequence[SearchResult], weight: float, k: int) -> list[SearchResult]:
    """The ``k`` best results under ``weight`` with pairwise different error pairs."""
    picked: list[SearchResult] = []
    seen: set[tuple[float, float]] = set()
    for r in sorted((reweigh(r, weight) for r in results), key=lambda r: (r.objective, r.p_error, r.rh_error, r.index)):
        if (r.p_error, r.rh_error) in seen:
            continue
        seen.add((r.p_error, r.rh_error))
        picked.append(r)
        if len(picked) == k:
            break
    return picked


def run_ablation(
    evaluate: EvalSet | Evaluator,
    n: int,
    seed: int,
    subsets: Sequence[str] = ("ASRC", "A", "S", "R", "C"),
    base: ParamSpace | None = None,
    weights: Sequence[float] = (),
    schedule: RadiusSchedule | None = None,
    threads: int = 1,
    starts: int = 1,
) -> AblationRun:
    """Random sampling per feature subset, optionally refined along the trade-off curve.

    For every weight in ``weights`` local searches start from the subset's
    ``starts`` best distinct points under that weight (earlier searches
    included); all points they evaluate join the subset's results, so the
    hull traces the whole frontier rather than one corner.
    """
    if starts < 1:
        raise ValueError("starts must be at least 1")
    run = AblationRun()
    for k, subset in enumerate(subsets):
        space = ParamSpace.for_features(subset, base)
        results = random_search(space, n, seed + k, evaluate, 0.5, threads)
        for w in weights:
            for s, start in enumerate(_distinct_best(results, w, starts)):
                trace: list[SearchResult] = []
                local_search(start, evaluate, space, schedule, seed + k + 1000 * s, w, threads, trace)
                results.extend(trace)
        run.results[subset] = results
    run.hulls = ablation_hull(run.results)
    return run

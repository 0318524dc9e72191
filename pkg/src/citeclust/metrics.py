"""Evaluation quantities for a set of clusterings.

Precision is estimated from first initials of the focal mentions (clusters
built while ignoring initials), recall and h-index recall from gold profiles.
"""
from __future__ import annotations

import json
import math
import random
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .clustering import Cluster, Clustering, disambiguate_block
from .corpus import AuthorMention, Corpus, GoldProfile, NameBlock, merge_blocks
from .similarity import DEFAULT_YEAR_GAP, DisambiguationParams


class MetricsError(ValueError):
    pass


def h_index(citation_counts: Iterable[int]) -> int:
    ranked = sorted(citation_counts, reverse=True)
    h = 0
    for rank, count in enumerate(ranked, start=1):
        if count < rank:
            break
        h = rank
    return h


def _key_matches(mention: AuthorMention, key: str) -> bool:
    for part in key.split("|"):
        if mention.surname == part or f"{mention.surname}_{mention.first_initial or ''}" == part:
            return True
    return False


def focal_mentions(corpus: Corpus, key: str, paper_id: int) -> list[AuthorMention]:
    """Mentions on ``paper_id`` that belong to block ``key`` (either key mode, merged keys allowed)."""
    return [m for m in corpus[paper_id].authors if _key_matches(m, key)]


def _modal_ratio(values: Sequence[str]) -> float:
    counts = Counter(values)
    return max(counts.values()) / len(values)


def cluster_precision(cluster: Cluster | Iterable[int], corpus: Corpus, block: NameBlock | str) -> float | None:
    """Share of focal mentions carrying the cluster's most frequent first initial.

    Mentions without an initial are left out of both counts; ``None`` when no
    focal mention in the cluster has one.
    """
    key = block.key if isinstance(block, NameBlock) else block
    papers = cluster.paper_ids if isinstance(cluster, Cluster) else cluster
    initials = [
        m.first_initial for pid in sorted(papers) for m in focal_mentions(corpus, key, pid) if m.first_initial is not None
    ]
    if not initials:
        return None
    return _modal_ratio(initials)


def surname_of_key(key: str) -> str:
    # normalized surnames never contain "_"
    return key.split("_", 1)[0]


def best_cluster(
    clusters: Iterable[Cluster], profile: GoldProfile, corpus: Corpus | None = None
) -> tuple[Cluster | None, frozenset[int]]:
    """Cluster sharing the most papers with the profile.

    Ties go to the larger h-index of the shared papers (when a corpus is
    given), then to the smaller cluster id.
    """
    best, best_key, best_inter = None, None, frozenset()
    for c in clusters:
        inter = c.paper_ids & profile.paper_ids
        if not inter:
            continue
        h = h_index(corpus.citation_count(p) for p in inter) if corpus is not None else 0
        key = (-len(inter), -h, c.cluster_id)
        if best_key is None or key < best_key:
            best, best_key, best_inter = c, key, inter
    return best, best_inter


def _clusters_for(clustering: Clustering | Sequence[Cluster]) -> Sequence[Cluster]:
    return clustering.clusters if isinstance(clustering, Clustering) else clustering


def profile_recall(clustering: Clustering | Sequence[Cluster], profile: GoldProfile, corpus: Corpus | None = None) -> float | None:
    if not profile.paper_ids:
        return None
    _, inter = best_cluster(_clusters_for(clustering), profile, corpus)
    return len(inter) / len(profile.paper_ids)


def profile_h_recall(clustering: Clustering | Sequence[Cluster], profile: GoldProfile, corpus: Corpus) -> float | None:
    gold_h = h_index(corpus.citation_count(p) for p in profile.paper_ids)
    if gold_h == 0:
        return None
    _, inter = best_cluster(_clusters_for(clustering), profile, corpus)
    return h_index(corpus.citation_count(p) for p in inter) / gold_h


@dataclass
class EvalResult:
    p_error: float
    rh_error: float
    precisions: list[tuple[str, int, float, int]] = field(default_factory=list)
    """(block key, cluster id, precision, cluster size) per valid cluster."""
    h_recalls: list[tuple[str, float]] = field(default_factory=list)
    clusters_valid: int = 0
    clusters_excluded: int = 0
    profiles_valid: int = 0
    profiles_h_zero: int = 0
    profiles_empty: int = 0

    def summary(self) -> dict:
        return {
            "p_error": self.p_error,
            "rh_error": self.rh_error,
            "clusters_valid": self.clusters_valid,
            "clusters_excluded": self.clusters_excluded,
            "profiles_valid": self.profiles_valid,
            "profiles_h_zero": self.profiles_h_zero,
            "profiles_empty": self.profiles_empty,
        }


def aggregate_errors(clusterings: Iterable[Clustering], profiles: Iterable[GoldProfile], corpus: Corpus) -> EvalResult:
    """Size-weighted precision error and mean h-index-recall error.

    ``p_error = mean((1 - P) * sqrt(|K|))`` over clusters with a defined
    precision; ``rh_error = mean(1 - R^h)`` over profiles with gold h >= 1.
    A profile is compared against every cluster whose block carries its surname.
    """
    clusterings = sorted(clusterings, key=lambda c: c.key)
    result = EvalResult(0.0, 0.0)
    p_terms = []
    by_surname: dict[str, list[Cluster]] = {}
    for cl in clusterings:
        by_surname.setdefault(surname_of_key(cl.key), []).extend(cl.clusters)
        for c in cl.clusters:
            p = cluster_precision(c, corpus, cl.key)
            if p is None:
                result.clusters_excluded += 1
                continue
            result.precisions.append((cl.key, c.cluster_id, p, len(c)))
            p_terms.append((1.0 - p) * math.sqrt(len(c)))
    rh_terms = []
    for profile in sorted(profiles, key=lambda p: p.profile_id):
        if not profile.paper_ids:
            result.profiles_empty += 1
            continue
        rh = profile_h_recall(by_surname.get(profile.surname, ()), profile, corpus)
        if rh is None:
            result.profiles_h_zero += 1
            continue
        result.h_recalls.append((profile.profile_id, rh))
        rh_terms.append(1.0 - rh)
    if not p_terms:
        raise MetricsError("no cluster with a defined precision")
    if not rh_terms:
        raise MetricsError("no profile with a non-zero gold h-index")
    result.clusters_valid = len(p_terms)
    result.profiles_valid = len(rh_terms)
    result.p_error = math.fsum(p_terms) / len(p_terms)
    result.rh_error = math.fsum(rh_terms) / len(rh_terms)
    return result


def second_initial_precision(clusterings: Iterable[Clustering], corpus: Corpus) -> tuple[float | None, int]:
    """Mean modal-second-initial share over clusters showing at least two distinct second initials.

    Returns ``(value, qualifying cluster count)``; value is ``None`` when no
    cluster qualifies.
    """
    ratios = []
    for cl in sorted(clusterings, key=lambda c: c.key):
        for c in cl.clusters:
            seconds = [
                m.second_initial
                for pid in sorted(c.paper_ids)
                for m in focal_mentions(corpus, cl.key, pid)
                if m.second_initial is not None
            ]
            if len(set(seconds)) >= 2:
                ratios.append(_modal_ratio(seconds))
    if not ratios:
        return None, 0
    return math.fsum(ratios) / len(ratios), len(ratios)


@dataclass
class MixingReport:
    pairs: list[dict] = field(default_factory=list)
    clusters: int = 0
    mixed: int = 0

    @property
    def mixed_fraction(self) -> float:
        return self.mixed / self.clusters if self.clusters else 0.0

    def to_json(self) -> dict:
        return {"clusters": self.clusters, "mixed": self.mixed, "mixed_fraction": self.mixed_fraction, "pairs": self.pairs}


def merged_name_test(
    corpus: Corpus,
    name_pairs: Iterable[tuple[NameBlock, NameBlock]],
    params: DisambiguationParams,
    year_gap: int = DEFAULT_YEAR_GAP,
) -> MixingReport:
    """Cluster the union of two unrelated name blocks and count clusters holding both names."""
    report = MixingReport()
    for a, b in name_pairs:
        pa, pb = set(a.paper_ids), set(b.paper_ids)
        if pa & pb:
            raise MetricsError(f"blocks {a.key!r} and {b.key!r} share papers")
        clustering = disambiguate_block(corpus, merge_blocks(a, b), params, year_gap)
        mixed = sum(1 for c in clustering.clusters if c.paper_ids & pa and c.paper_ids & pb)
        report.pairs.append({"a": a.key, "b": b.key, "clusters": len(clustering), "mixed": mixed})
        report.clusters += len(clustering)
        report.mixed += mixed
    return report


def random_disjoint_pairs(blocks: Sequence[NameBlock], n: int, seed: int, min_papers: int = 1) -> list[tuple[NameBlock, NameBlock]]:
    """Up to ``n`` random pairs of distinct blocks that share no paper."""
    rng = random.Random(seed)
    pool = [b for b in blocks if len(b) >= min_papers]
    papers = {b.key: set(b.paper_ids) for b in pool}
    pairs: list[tuple[NameBlock, NameBlock]] = []
    seen = set()
    attempts = 0
    while len(pairs) < n and attempts < 50 * n and len(pool) >= 2:
        attempts += 1
        a, b = rng.sample(pool, 2)
        key = tuple(sorted((a.key, b.key)))
        if key in seen or papers[a.key] & papers[b.key]:
            continue
        seen.add(key)
        pairs.append((a, b))
    return pairs


def write_metrics_report(result: EvalResult, path: str | Path, extra: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key, cid, p, size in result.precisions:
            fh.write(json.dumps({"type": "cluster", "block": key, "cluster_id": cid, "precision": p, "size": size}) + "\n")
        for pid, rh in result.h_recalls:
            fh.write(json.dumps({"type": "profile", "profile_id": pid, "h_recall": rh}) + "\n")
        summary = {"type": "summary", **result.summary(), **(extra or {})}
        fh.write(json.dumps(summary, sort_keys=True) + "\n")

from __future__ import annotations

import math
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from citeclust.clustering import Cluster, Clustering
from citeclust.corpus import Corpus, GoldProfile, KeyMode, build_blocks
from citeclust.metrics import (
    MetricsError,
    aggregate_errors,
    cluster_precision,
    h_index,
    merged_name_test,
    profile_h_recall,
    profile_recall,
    random_disjoint_pairs,
    second_initial_precision,
)
from citeclust.similarity import DisambiguationParams
from conftest import paper
from oracles import errors_recount_oracle, h_index_oracle, modal_share_oracle


@pytest.mark.parametrize("counts, h", [([10, 5, 3, 2, 1], 3), ([], 0), ([1, 1, 1, 1], 1), ([0, 0], 0), ([4, 4, 4, 4], 4)])
def test_h_index_examples(counts, h):
    assert h_index(counts) == h


@settings(max_examples=200)
@given(st.lists(st.integers(0, 40), max_size=40))
def test_h_index_matches_brute_force(counts):
    assert h_index(counts) == h_index_oracle(counts)


def _initials_corpus(initials, surname="x"):
    return Corpus([paper(k, 2000, [(surname, i)] if i else [surname]) for k, i in enumerate(initials)])


class TestPrecision:
    @pytest.mark.parametrize("initials, value", [("JJJA", 0.75), ("JJAA", 0.5), ("J", 1.0), ("JJ", 1.0)])
    def test_examples(self, initials, value):
        corpus = _initials_corpus(initials)
        assert cluster_precision(range(len(initials)), corpus, "x") == value

    def test_missing_initials_ignored(self):
        corpus = _initials_corpus(["j", None, "j", "a"])
        assert cluster_precision(range(4), corpus, "x") == pytest.approx(2 / 3)
        assert cluster_precision([1], corpus, "x") is None

    def test_only_focal_mentions_count(self):
        corpus = Corpus([paper(1, 2000, [("x", "j"), ("y", "a")]), paper(2, 2000, [("x", "j"), ("y", "b")])])
        assert cluster_precision([1, 2], corpus, "x") == 1.0

    def test_merged_key_counts_both_surnames(self):
        corpus = Corpus([paper(1, 2000, [("x", "j")]), paper(2, 2000, [("y", "a")])])
        assert cluster_precision([1, 2], corpus, "x|y") == 0.5


def _cited_corpus(citations: dict[int, int]) -> Corpus:
    """Papers 0..n-1 by 'x', with the requested number of citing papers each."""
    papers = [paper(pid, 2000, [("x", "j")]) for pid in citations]
    next_id = 1000
    for pid, count in citations.items():
        for _ in range(count):
            papers.append(paper(next_id, 2001, ["z"], refs=[pid]))
            next_id += 1
    return Corpus(papers)


class TestRecall:
    def test_nine_of_ten(self):
        profile = GoldProfile("p", "x", frozenset(range(10)))
        clusters = [Cluster(0, frozenset(range(9))), Cluster(1, frozenset({9, 50}))]
        assert profile_recall(clusters, profile) == 0.9

    def test_even_split(self):
        profile = GoldProfile("p", "x", frozenset(range(10)))
        clusters = [Cluster(0, frozenset(range(5))), Cluster(1, frozenset(range(5, 10)))]
        assert profile_recall(clusters, profile) == 0.5

    def test_empty_profile_undefined(self):
        assert profile_recall([Cluster(0, frozenset({1}))], GoldProfile("p", "x", frozenset())) is None

    @pytest.mark.parametrize("seed", range(20))
    def test_random_instance_equals_exhaustive_max(self, seed):
        rng = random.Random(seed)
        ids = list(range(30))
        rng.shuffle(ids)
        cuts = sorted(rng.sample(range(1, 30), 4))
        groups = [ids[a:b] for a, b in zip([0] + cuts, cuts + [30])]
        clusters = [Cluster(k, frozenset(g)) for k, g in enumerate(groups)]
        profile = GoldProfile("p", "x", frozenset(rng.sample(range(30), rng.randint(1, 15))))
        expected = max(Fraction(len(c.paper_ids & profile.paper_ids), len(profile.paper_ids)) for c in clusters)
        assert profile_recall(clusters, profile) == float(expected)


class TestHRecall:
    def test_partial(self):
        # profile h = 4 from [9,7,3,1,5,4]; best cluster keeps [9,7,3,1] -> h = 3
        corpus = _cited_corpus({0: 9, 1: 7, 2: 3, 3: 1, 4: 5, 5: 4})
        profile = GoldProfile("p", "x", frozenset(range(6)))
        clusters = [Cluster(0, frozenset({0, 1, 2, 3})), Cluster(1, frozenset({4})), Cluster(2, frozenset({5}))]
        assert h_index(corpus.citation_count(p) for p in profile.paper_ids) == 4
        assert profile_h_recall(clusters, profile, corpus) == 0.75

    def test_superset_cluster(self):
        corpus = _cited_corpus({0: 2, 1: 2})
        profile = GoldProfile("p", "x", frozenset({0, 1}))
        assert profile_h_recall([Cluster(0, frozenset({0, 1, 7}))], profile, corpus) == 1.0

    def test_empty_intersection(self):
        corpus = _cited_corpus({0: 2, 1: 2})
        profile = GoldProfile("p", "x", frozenset({0, 1}))
        assert profile_h_recall([Cluster(0, frozenset({9}))], profile, corpus) == 0.0

    def test_zero_h_excluded(self):
        corpus = _cited_corpus({0: 0})
        assert profile_h_recall([Cluster(0, frozenset({0}))], GoldProfile("p", "x", frozenset({0})), corpus) is None


class TestAggregate:
    def test_pure_clusters_zero_error(self):
        corpus = Corpus(list(_initials_corpus("jjaa")) + [paper(9, 2001, ["z"], refs=[0])])
        profile = GoldProfile("p", "x", frozenset({0, 1}))
        result = aggregate_errors([Clustering.from_groups("x", [[0, 1], [2, 3]])], [profile], corpus)
        assert result.p_error == 0 and result.rh_error == 0

    def test_size_weighted_contribution(self):
        corpus = Corpus(list(_initials_corpus("jjja")) + [paper(9, 2001, ["z"], refs=[0])])
        profile = GoldProfile("p", "x", frozenset({0}))
        result = aggregate_errors([Clustering.from_groups("x", [[0, 1, 2, 3]])], [profile], corpus)
        assert result.p_error == 0.5

    def test_mean_h_recall_error(self):
        corpus = _cited_corpus({0: 1, 1: 1, 2: 2, 3: 2})
        profiles = [GoldProfile("a", "x", frozenset({0})), GoldProfile("b", "x", frozenset({2, 3}))]
        clustering = Clustering.from_groups("x", [[0], [2], [3], [1]])
        result = aggregate_errors([clustering], profiles, corpus)
        assert result.rh_error == 0.25
        assert result.profiles_valid == 2

    def test_exclusion_counts_and_errors(self):
        corpus = Corpus([paper(0, 2000, ["x"]), paper(1, 2000, [("x", "j")]), paper(2, 2001, ["z"], refs=[1])])
        profiles = [GoldProfile("e", "x", frozenset()), GoldProfile("z", "x", frozenset({0})),
                    GoldProfile("ok", "x", frozenset({1}))]
        result = aggregate_errors([Clustering.from_groups("x", [[0], [1]])], profiles, corpus)
        assert (result.clusters_excluded, result.clusters_valid) == (1, 1)
        assert (result.profiles_empty, result.profiles_h_zero, result.profiles_valid) == (1, 1, 1)
        with pytest.raises(MetricsError):
            aggregate_errors([Clustering.from_groups("x", [[0]])], profiles, corpus)
        with pytest.raises(MetricsError):
            aggregate_errors([Clustering.from_groups("x", [[0], [1]])], profiles[:2], corpus)

    def test_profiles_compared_across_initial_keyed_blocks(self):
        corpus = Corpus([paper(0, 2000, [("x", "j")]), paper(1, 2000, [("x", "k")]),
                         paper(2, 2001, ["z"], refs=[0, 1]), paper(3, 2001, ["z"], refs=[0, 1])])
        profile = GoldProfile("p", "x", frozenset({0, 1}))
        clusterings = [Clustering.from_groups("x_j", [[0]]), Clustering.from_groups("x_k", [[1]])]
        # best single cluster holds one paper with 2 citations: h = 1 against gold h = 2
        assert aggregate_errors(clusterings, [profile], corpus).rh_error == 0.5


@pytest.mark.parametrize("seed", range(20))
def test_random_clusterings_match_recount(seed, small_synth, small_corpus):
    rng = random.Random(seed)
    blocks = [b for b in build_blocks(small_corpus, KeyMode.SURNAME_ONLY) if len(b) >= 3]
    chosen = rng.sample(blocks, 6)
    clusterings = []
    for b in chosen:
        labels = [rng.randrange(max(1, len(b) // 3)) for _ in b.paper_ids]
        groups: dict[int, list[int]] = {}
        for pid, lab in zip(b.paper_ids, labels):
            groups.setdefault(lab, []).append(pid)
        clusterings.append(Clustering.from_groups(b.key, groups.values()))
    keys = {b.key for b in chosen}
    profiles = [p for p in small_synth.profiles if p.surname in keys]
    result = aggregate_errors(clusterings, profiles, small_corpus)
    p_ref, rh_ref = errors_recount_oracle(clusterings, profiles, small_corpus)
    assert result.p_error == pytest.approx(p_ref, abs=1e-12)
    assert result.rh_error == pytest.approx(rh_ref, abs=1e-12)


class TestSecondInitial:
    def _corpus(self, seconds):
        return Corpus([paper(k, 2000, [("x", "j", s) if s else ("x", "j")]) for k, s in enumerate(seconds)])

    def test_modal_ratio(self):
        corpus = self._corpus(["m", "m", "r"])
        value, n = second_initial_precision([Clustering.from_groups("x", [[0, 1, 2]])], corpus)
        assert value == pytest.approx(2 / 3) and n == 1

    def test_single_distinct_initial_excluded(self):
        corpus = self._corpus(["m", "m", None, None])
        assert second_initial_precision([Clustering.from_groups("x", [[0, 1, 2, 3]])], corpus) == (None, 0)

    def test_synthetic_recount(self, small_corpus):
        clusterings = [Clustering.from_groups(b.key, [b.paper_ids]) for b in build_blocks(small_corpus, KeyMode.SURNAME_ONLY)]
        ratios = []
        for cl in clusterings:
            for c in cl.clusters:
                seconds = [m.second_initial for pid in c.paper_ids for m in small_corpus[pid].authors
                           if m.surname == cl.key and m.second_initial]
                if len(set(seconds)) >= 2:
                    ratios.append(modal_share_oracle(seconds))
        value, n = second_initial_precision(clusterings, small_corpus)
        assert n == len(ratios) > 0
        assert value == pytest.approx(float(sum(ratios) / len(ratios)), abs=1e-12)


class TestMergedName:
    def test_no_cross_links_no_mixing(self):
        corpus = Corpus([paper(1, 2000, ["a", "p"]), paper(2, 2000, ["a", "p"]), paper(3, 2000, ["b", "q"]),
                         paper(4, 2000, ["b", "q"])])
        a, b = [blk for blk in build_blocks(corpus, KeyMode.SURNAME_ONLY) if blk.key in ("a", "b")]
        report = merged_name_test(corpus, [(a, b)], DisambiguationParams())
        assert report.mixed == 0 and report.clusters == 2

    def test_planted_self_citation_chain_is_flagged(self):
        corpus = Corpus([paper(1, 2000, ["a"]), paper(2, 2001, ["b"], refs=[1])])
        a, b = [blk for blk in build_blocks(corpus, KeyMode.SURNAME_ONLY)]
        report = merged_name_test(corpus, [(a, b)], DisambiguationParams())
        assert report.mixed >= 1 and report.mixed_fraction == 1.0

    def test_overlapping_blocks_rejected(self):
        corpus = Corpus([paper(1, 2000, ["a", "b"])])
        a, b = build_blocks(corpus, KeyMode.SURNAME_ONLY)
        with pytest.raises(MetricsError):
            merged_name_test(corpus, [(a, b)], DisambiguationParams())

    def test_random_pairs_are_disjoint_and_deterministic(self, small_corpus):
        blocks = build_blocks(small_corpus, KeyMode.SURNAME_FIRST_INITIAL)
        pairs = random_disjoint_pairs(blocks, 30, 5)
        assert pairs == random_disjoint_pairs(blocks, 30, 5)
        assert all(not set(a.paper_ids) & set(b.paper_ids) and a.key != b.key for a, b in pairs)


@settings(max_examples=30, deadline=None)
@given(st.permutations(list(range(8))), st.permutations(list(range(3))))
def test_errors_invariant_to_order(perm, profile_perm):
    corpus = Corpus([paper(k, 2000, [("x", "ja"[k % 2])]) for k in range(8)]
                    + [paper(100 + k, 2001, ["z"], refs=[k, (k + 1) % 8]) for k in range(8)])
    groups = [[perm[0], perm[1], perm[2]], [perm[3], perm[4]], [perm[5], perm[6], perm[7]]]
    profiles = [GoldProfile(f"p{k}", "x", frozenset(range(3 * k, min(8, 3 * k + 3)))) for k in range(3)]
    base = aggregate_errors([Clustering.from_groups("x", sorted(map(sorted, groups)))], profiles, corpus)
    shuffled = aggregate_errors([Clustering.from_groups("x", groups[::-1])], [profiles[i] for i in profile_perm], corpus)
    assert (base.p_error, base.rh_error) == (shuffled.p_error, shuffled.rh_error)

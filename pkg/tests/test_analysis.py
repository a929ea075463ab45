import itertools
import json

import numpy as np
import pytest

from dotcheck import parse_dot
from socialtopics import DataError, TopicParams, UserFeatures
from socialtopics.analysis import (
    chi_square_test,
    export_viz,
    match_topics,
    rank_topic_pairs,
    topic_popularity,
    topic_top_words,
)


def make_params(beta, nu=None):
    beta = np.asarray(beta, dtype=float)
    k, v = beta.shape
    return TopicParams(
        beta=beta,
        beta_back=np.full(v, 1.0 / v),
        phi=np.triu(np.full((k, k), 0.5)),
        nu=np.zeros(k) if nu is None else np.asarray(nu, dtype=float),
        sigma2=1.0,
    )


class TestTopicTopWords:
    def test_uniform_ties_break_by_token_id(self):
        params = make_params(np.full((2, 5), 0.2))
        words = topic_top_words(params, 0, 3)
        assert [w for w, _ in words] == [0, 1, 2]

    def test_one_hot(self):
        beta = np.zeros((1, 8))
        beta[0, 7] = 1.0
        words = topic_top_words(make_params(beta), 0, 2)
        assert words[0] == (7, 1.0)

    def test_planted_high_mass_words_come_first(self):
        rng = np.random.default_rng(4)
        beta = rng.dirichlet([0.2] * 10, size=3)
        params = make_params(beta)
        for a in range(3):
            got = [w for w, _ in topic_top_words(params, a, 4)]
            want = np.lexsort((np.arange(10), -beta[a]))[:4].tolist()
            assert got == want

    def test_vocab_strings(self):
        beta = np.array([[0.1, 0.7, 0.2]])
        words = topic_top_words(make_params(beta), 0, 2, vocab=["a", "b", "c"])
        assert words[0][0] == "b"

    def test_bad_inputs(self):
        params = make_params(np.full((2, 3), 1 / 3))
        with pytest.raises(DataError):
            topic_top_words(params, 5, 1)
        with pytest.raises(DataError):
            topic_top_words(params, 0, 10)


class TestTopicPopularity:
    def test_uniform_rows(self):
        theta = np.full((6, 4), 0.25)
        np.testing.assert_allclose(topic_popularity(theta), 0.25)

    def test_one_hot_rows(self):
        theta = np.tile([1.0, 0.0, 0.0], (5, 1))
        np.testing.assert_allclose(topic_popularity(theta), [1.0, 0.0, 0.0])

    def test_sums_to_one(self):
        rng = np.random.default_rng(6)
        theta = rng.dirichlet([0.5] * 5, size=40)
        assert topic_popularity(theta).sum() == pytest.approx(1.0, abs=1e-9)

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            topic_popularity(np.zeros((0, 3)))


class TestRankTopicPairs:
    def test_single_edge(self):
        ranked = rank_topic_pairs(np.array([[0, 0]]), np.array([1.0, 1e-9]), 5)
        assert len(ranked) == 1
        assert ranked[0][0] == (0, 0)
        assert ranked[0][1] == 1

    def test_rarer_topics_rank_higher_at_equal_counts(self):
        pairs = np.array([[0, 0]] * 3 + [[1, 1]] * 3)
        popularity = np.array([0.8, 0.2])
        ranked = rank_topic_pairs(pairs, popularity, 5)
        assert ranked[0][0] == (1, 1)
        assert ranked[1][0] == (0, 0)

    def test_matches_independent_recomputation(self):
        rng = np.random.default_rng(8)
        K = 4
        pairs = []
        for _ in range(60):
            a, b = sorted(rng.integers(0, K, size=2))
            pairs.append((a, b))
        pairs = np.array(pairs)
        popularity = rng.dirichlet([1.0] * K)
        ranked = rank_topic_pairs(pairs, popularity, 100)
        # oracle: counter + explicit normalization + sort
        from collections import Counter

        counts = Counter(map(tuple, pairs.tolist()))
        want = sorted(
            (
                (p, c, c / (popularity[p[0]] * popularity[p[1]] * len(pairs)))
                for p, c in counts.items()
            ),
            key=lambda t: (-t[2], t[0]),
        )
        assert [(p, c) for p, c, _ in ranked] == [(p, c) for p, c, _ in want]
        for (_, _, s1), (_, _, s2) in zip(ranked, want):
            assert s1 == pytest.approx(s2, rel=1e-12)

    def test_invariant_under_duplication(self):
        # doubling every user and every edge leaves normalized scores fixed
        pairs = np.array([[0, 1], [1, 1], [0, 1]])
        theta = np.array([[0.7, 0.3], [0.2, 0.8], [0.5, 0.5]])
        pop1 = topic_popularity(theta)
        r1 = rank_topic_pairs(pairs, pop1, 10)
        pop2 = topic_popularity(np.vstack([theta, theta]))
        r2 = rank_topic_pairs(np.vstack([pairs, pairs]), pop2, 10)
        assert [(p, 2 * c) for p, c, _ in r1] == [(p, c) for p, c, _ in r2]
        for (_, _, s1), (_, _, s2) in zip(r1, r2):
            assert s1 == pytest.approx(s2, rel=1e-12)

    def test_top_n_truncates(self):
        pairs = np.array([[0, 0], [0, 1], [1, 1]])
        ranked = rank_topic_pairs(pairs, np.array([0.5, 0.5]), 2)
        assert len(ranked) == 2


class TestMatchTopics:
    def test_identical_models(self):
        rng = np.random.default_rng(1)
        beta = rng.dirichlet([0.5] * 6, size=3)
        params = make_params(beta)
        matches = match_topics(params, params, 3)
        assert [(a, b) for a, b, _ in matches] == [(a, a) for a, _, _ in matches]
        for _, _, c in matches:
            assert c == pytest.approx(1.0, abs=1e-12)

    def test_recovers_permutation_of_one_hot_topics(self):
        eye = np.eye(4)
        perm = [2, 0, 3, 1]
        pa = make_params(eye)
        pb = make_params(eye[perm])
        matches = match_topics(pa, pb, 4)
        mapping = {a: b for a, b, _ in matches}
        for b_idx, a_idx in enumerate(perm):
            assert mapping[a_idx] == b_idx
        assert all(c == pytest.approx(1.0) for _, _, c in matches)

    def test_similarities_in_unit_interval_and_descending(self):
        rng = np.random.default_rng(2)
        pa = make_params(rng.dirichlet([0.4] * 8, size=4))
        pb = make_params(rng.dirichlet([0.4] * 8, size=4))
        matches = match_topics(pa, pb, 4)
        sims = [c for _, _, c in matches]
        assert all(0.0 <= c <= 1.0 + 1e-12 for c in sims)
        assert sims == sorted(sims, reverse=True)

    def test_matches_exhaustive_on_separated_topics(self):
        # block-structured topics (the regime the greedy choice targets):
        # greedy must find the same pairing as exhaustive search over all
        # permutations, K <= 4
        rng = np.random.default_rng(3)
        for trial in range(25):
            K = int(rng.integers(2, 5))
            V = 3 * K
            base = np.full((K, V), 0.1 / V)
            for a in range(K):
                block = rng.dirichlet([1.0] * 3)
                base[a, 3 * a : 3 * a + 3] += 0.9 * block
            base /= base.sum(axis=1, keepdims=True)
            perm = rng.permutation(K)
            noisy = base[perm] + 0.02 * rng.dirichlet([1.0] * V, size=K)
            noisy /= noisy.sum(axis=1, keepdims=True)
            got = {(a, b) for a, b, _ in match_topics(make_params(base),
                                                      make_params(noisy), K)}
            a_n = base / np.linalg.norm(base, axis=1, keepdims=True)
            b_n = noisy / np.linalg.norm(noisy, axis=1, keepdims=True)
            sim = a_n @ b_n.T
            best, best_val = None, -1.0
            for p in itertools.permutations(range(K)):
                val = sum(sim[i, p[i]] for i in range(K))
                if val > best_val:
                    best, best_val = p, val
            assert got == {(i, p) for i, p in enumerate(best)}

    def test_vocab_mismatch_rejected(self):
        pa = make_params(np.full((2, 3), 1 / 3))
        pb = make_params(np.full((2, 4), 0.25))
        with pytest.raises(DataError, match="vocabulary"):
            match_topics(pa, pb, 2)


class TestChiSquare:
    def test_equal_proportions_degenerate(self):
        stat, p = chi_square_test(30, 50, 30, 50)
        assert stat == pytest.approx(0.0, abs=1e-12)
        assert p == pytest.approx(1.0, abs=1e-12)

    def test_hand_computed_table(self):
        # [[90, 10], [50, 50]]: margins 140/60 and 100/100, expected
        # [[70, 30], [70, 30]], so the statistic is
        # 400 * (2/70 + 2/30) = 800/21
        stat, p = chi_square_test(90, 100, 50, 100)
        assert stat == pytest.approx(800.0 / 21.0, abs=1e-9)
        assert p < 1e-8

    def test_symmetric_in_methods(self):
        s1, _ = chi_square_test(77, 120, 42, 100)
        s2, _ = chi_square_test(42, 100, 77, 120)
        assert s1 == pytest.approx(s2, abs=1e-12)

    def test_matches_classic_formula(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            n_a = int(rng.integers(5, 200))
            n_b = int(rng.integers(5, 200))
            c_a = int(rng.integers(0, n_a + 1))
            c_b = int(rng.integers(0, n_b + 1))
            stat, _ = chi_square_test(c_a, n_a, c_b, n_b)
            obs = np.array([[c_a, n_a - c_a], [c_b, n_b - c_b]], dtype=float)
            if obs.sum(axis=0).min() == 0:
                assert stat == 0.0
                continue
            expected = np.outer(obs.sum(1), obs.sum(0)) / obs.sum()
            want = ((obs - expected) ** 2 / expected).sum()
            assert stat == pytest.approx(want, abs=1e-9)

    def test_all_in_one_cell(self):
        stat, p = chi_square_test(50, 50, 30, 30)
        assert stat == 0.0 and p == 1.0

    def test_invalid_counts(self):
        with pytest.raises(DataError):
            chi_square_test(5, 0, 1, 10)
        with pytest.raises(DataError):
            chi_square_test(11, 10, 1, 10)


class TestExportViz:
    def export(self, tmp_path, nu, rankings=None):
        beta = np.array([[0.6, 0.3, 0.1], [0.1, 0.2, 0.7]])
        params = make_params(beta, nu=nu)
        theta = np.array([[0.8, 0.2], [0.3, 0.7]])
        features = UserFeatures(theta=theta, pairs=np.array([[0, 1]]),
                                scores=np.array([0.2]))
        if rankings is None:
            rankings = rank_topic_pairs(features.pairs,
                                        topic_popularity(theta), 5)
        summary = tmp_path / "summary.json"
        dot = tmp_path / "graph.dot"
        export_viz(params, features, rankings, summary, dot,
                   vocab=["alpha", "beta", "gamma"])
        return summary, dot

    def test_structure_two_nodes_one_edge(self, tmp_path):
        summary, dot = self.export(tmp_path, nu=[1.0, -1.0])
        nodes, edges = parse_dot(dot.read_text())
        node_names = {n for n in nodes if n != "node"}
        assert node_names == {"t0", "t1"}
        assert len(edges) == 1
        assert {edges[0][0], edges[0][1]} == {"t0", "t1"}

    def test_border_style_encodes_coefficient_sign(self, tmp_path):
        _, dot = self.export(tmp_path, nu=[1.0, -1.0])
        nodes, _ = parse_dot(dot.read_text())
        assert nodes["t0"]["style"] == "solid"
        assert nodes["t1"]["style"] == "dashed"

    def test_summary_contents(self, tmp_path):
        summary, _ = self.export(tmp_path, nu=[1.0, -1.0])
        doc = json.loads(summary.read_text())
        assert doc["n_topics"] == 2
        assert doc["topics"][0]["top_words"][0][0] == "alpha"
        assert doc["topics"][1]["coefficient"] == -1.0
        assert doc["pairs"][0]["pair"] == [0, 1]

    def test_output_parses_under_grammar_checker(self, tmp_path):
        # round-trip oracle: the emitted file must survive an independent
        # parse, including self-loop edges and several ranked pairs
        rankings = [((0, 0), 3, 1.5), ((0, 1), 2, 0.9)]
        _, dot = self.export(tmp_path, nu=[0.5, 0.5], rankings=rankings)
        nodes, edges = parse_dot(dot.read_text())
        assert len(edges) == 2
        assert edges[0][:2] == ("t0", "t0")

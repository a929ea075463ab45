import numpy as np
import pytest

from socialtopics import (
    DataError,
    GenSpec,
    Hyperparams,
    ModelError,
    enumerate_conditionals,
    generate_dataset,
)
from socialtopics.synthgen import collapsed_log_joint


def states_equal(a, b):
    return a.z == b.z and a.f == b.f and a.s == b.s


class TestGenerateDataset:
    def test_fixed_seed_reproducible(self):
        spec = GenSpec(k=3, v=10, p=6, docs_per_user=(0, 3), words_per_doc=(0, 4),
                       lambda0=1.5)
        d1, t1 = generate_dataset(spec, seed=42)
        d2, t2 = generate_dataset(spec, seed=42)
        assert [(u.id, u.docs, u.label) for u in d1.users] == [
            (u.id, u.docs, u.label) for u in d2.users
        ]
        assert d1.edges == d2.edges
        assert states_equal(t1.state, t2.state)
        np.testing.assert_array_equal(t1.params.beta, t2.params.beta)
        np.testing.assert_array_equal(t1.theta, t2.theta)

    def test_delta_one_gives_no_background_words(self):
        spec = GenSpec(k=2, v=8, p=5, docs_per_user=(2, 3), words_per_doc=(2, 5),
                       delta=1.0 - 1e-12, lambda0=1.5)
        _, truth = generate_dataset(spec, seed=1)
        flags = [fg for docs in truth.state.f for doc in docs for fg in doc]
        assert flags and all(fg == 1 for fg in flags)

    def test_phi_one_forces_complete_graph(self):
        spec = GenSpec(k=2, v=4, p=6, docs_per_user=(1, 1), words_per_doc=(1, 1),
                       phi=np.ones((2, 2)))
        d, _ = generate_dataset(spec, seed=3)
        assert len(d.edges) == 6 * 5 // 2

    def test_word_frequencies_converge_to_planted_topics(self):
        # law of large numbers: per-topic empirical frequencies approach the
        # planted rows at 50k words per topic
        k, v = 2, 20
        rng = np.random.default_rng(0)
        beta = rng.dirichlet([0.5] * v, size=k)
        theta = np.tile(np.eye(k), (40, 1))  # 40 users locked to each topic
        spec = GenSpec(
            k=k, v=v, p=80,
            docs_per_user=(25, 25), words_per_doc=(50, 50),
            delta=1.0 - 1e-12, beta=beta, theta=theta, phi=np.zeros((k, k)) + 1e-12,
        )
        d, truth = generate_dataset(spec, seed=7)
        counts = np.zeros((k, v))
        for i, u in enumerate(d.users):
            for kd, doc in enumerate(u.docs):
                m = truth.state.z[i][kd]
                for w in doc:
                    counts[m, w] += 1
        for a in range(k):
            assert counts[a].sum() >= 50_000
            emp = counts[a] / counts[a].sum()
            assert np.abs(emp - beta[a]).sum() <= 0.05

    def test_labels_match_sign_in_noiseless_limit(self):
        spec = GenSpec(k=3, v=6, p=30, docs_per_user=(1, 3), words_per_doc=(1, 3),
                       sigma2=1e-18, nu=np.array([2.0, -1.0, 0.5]), lambda0=1.2)
        d, truth = generate_dataset(spec, seed=11)
        checked = 0
        for i, u in enumerate(d.users):
            if u.label is None:
                continue
            mean = truth.theta_hat[i] @ truth.params.nu
            if abs(mean) < 1e-6:
                continue  # sign undefined exactly at zero
            assert u.label == (1 if mean > 0 else -1)
            checked += 1
        assert checked >= 20

    def test_no_docs_no_links_means_no_label(self):
        spec = GenSpec(k=2, v=4, p=5, docs_per_user=(0, 0), words_per_doc=(1, 2),
                       phi=np.full((2, 2), 1e-12))
        d, _ = generate_dataset(spec, seed=2)
        assert len(d.edges) == 0
        assert all(u.label is None for u in d.users)

    def test_infeasible_spec_rejected(self):
        with pytest.raises(DataError):
            GenSpec(k=2, v=0, p=3, docs_per_user=(1, 1), words_per_doc=(1, 1))
        with pytest.raises(DataError):
            GenSpec(k=2, v=4, p=3, docs_per_user=(3, 1), words_per_doc=(1, 1))

    def test_dataset_invariants_hold(self):
        spec = GenSpec(k=3, v=12, p=10, docs_per_user=(0, 4), words_per_doc=(0, 5),
                       lambda0=1.2)
        d, truth = generate_dataset(spec, seed=13)
        from socialtopics.corpus import validate_dataset

        validate_dataset(d)
        # half-links exist for exactly the positive edges
        assert len(truth.state.s) == 2 * len(d.edges)
        for i, j in d.edges:
            assert (i, j) in truth.state.s and (j, i) in truth.state.s


class TestEnumerateConditionals:
    def tiny(self, seed=5):
        spec = GenSpec(k=2, v=4, p=3, docs_per_user=(1, 2), words_per_doc=(1, 3),
                       phi=np.full((2, 2), 0.6), lambda0=1.3)
        return generate_dataset(spec, seed=seed)

    def hyper(self, k=2):
        return Hyperparams(alpha=0.8, eta=0.5, delta=0.6, lambda1=0.4,
                           lambda0=1.3, k=k)

    def test_sums_to_one(self):
        d, truth = self.tiny()
        p = enumerate_conditionals(
            d, truth.state, ("z", 0, 0), self.hyper(), np.zeros(2), 1.0
        )
        assert p.sum() == pytest.approx(1.0, abs=1e-12)

    def test_single_topic_is_deterministic(self):
        spec = GenSpec(k=1, v=3, p=2, docs_per_user=(1, 1), words_per_doc=(1, 2),
                       phi=np.ones((1, 1)) * 0.5)
        d, truth = generate_dataset(spec, seed=1)
        p = enumerate_conditionals(
            d, truth.state, ("z", 0, 0), self.hyper(k=1), np.zeros(1), 1.0
        )
        np.testing.assert_allclose(p, [1.0])

    def test_symmetric_case_is_uniform(self):
        # one unlabeled user, one empty document: no word or label evidence
        from socialtopics.corpus import Dataset, UserRecord, Vocabulary
        from socialtopics.model import LatentState

        d = Dataset(
            users=[UserRecord(id="u0", docs=[[]], label=None)],
            vocab=Vocabulary(["a"]),
            edges=[],
        )
        state = LatentState(z=[[0]], f=[[[]]], s={})
        p = enumerate_conditionals(d, state, ("z", 0, 0), self.hyper(), np.zeros(2), 1.0)
        np.testing.assert_allclose(p, [0.5, 0.5], atol=1e-12)

    def test_too_large_instance_refused(self):
        spec = GenSpec(k=2, v=10, p=6, docs_per_user=(4, 4), words_per_doc=(4, 4),
                       lambda0=1.5)
        d, truth = generate_dataset(spec, seed=3)
        assert d.total_words() + len(d.edges) > 64
        with pytest.raises(ModelError, match="too large"):
            enumerate_conditionals(d, truth.state, ("z", 0, 0), self.hyper(),
                                   np.zeros(2), 1.0)

    def test_does_not_mutate_state(self):
        d, truth = self.tiny()
        before = truth.state.copy()
        enumerate_conditionals(d, truth.state, ("z", 0, 0), self.hyper(),
                               np.zeros(2), 1.0)
        if d.edges:
            i, j = d.edges[0]
            enumerate_conditionals(d, truth.state, ("s", i, j), self.hyper(),
                                   np.zeros(2), 1.0)
        assert states_equal(truth.state, before)


def test_collapsed_log_joint_empty_counts_is_zero():
    # a dataset with no words, no edges, no labels has no data terms
    from socialtopics.corpus import Dataset, UserRecord, Vocabulary
    from socialtopics.model import LatentState

    d = Dataset(users=[UserRecord(id="u0", docs=[], label=None)],
                vocab=Vocabulary(["a", "b"]), edges=[])
    state = LatentState(z=[[]], f=[[]], s={})
    hyper = Hyperparams(alpha=1.3, eta=0.7, delta=0.4, lambda1=0.2, lambda0=2.0, k=3)
    assert collapsed_log_joint(d, state, hyper, np.zeros(3), 1.0) == pytest.approx(
        0.0, abs=1e-12
    )

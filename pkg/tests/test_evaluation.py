import numpy as np
import pytest

from socialtopics import DataError, GenSpec, generate_dataset
from socialtopics.corpus import Dataset, UserRecord, Vocabulary
from socialtopics.evaluation import (
    bow_features,
    bow_matrix,
    concat_features,
    cross_validate,
    train_linear_classifier,
    _gradient,
    _objective,
)


def dataset_from_docs(docs_per_user, labels=None, v=2):
    users = []
    for i, docs in enumerate(docs_per_user):
        label = labels[i] if labels else None
        users.append(UserRecord(id=f"u{i}", docs=docs, label=label))
    return Dataset(users=users, vocab=Vocabulary([f"w{t}" for t in range(v)]),
                   edges=[])


class TestBowFeatures:
    def test_normalized_frequencies(self):
        d = dataset_from_docs([[[0, 0, 1]]])
        np.testing.assert_allclose(bow_features(d, 0), [2 / 3, 1 / 3])

    def test_no_documents_gives_zero_vector(self):
        d = dataset_from_docs([[]])
        np.testing.assert_allclose(bow_features(d, 0), [0.0, 0.0])

    def test_sums_to_one_when_nonempty(self):
        rng = np.random.default_rng(2)
        docs = [
            [[int(w) for w in rng.integers(0, 6, size=rng.integers(1, 5))]
             for _ in range(int(rng.integers(1, 4)))]
            for _ in range(5)
        ]
        d = dataset_from_docs(docs, v=6)
        for p in range(5):
            assert bow_features(d, p).sum() == pytest.approx(1.0, abs=1e-12)

    def test_counts_span_all_documents(self):
        d = dataset_from_docs([[[0], [1, 1]]])
        np.testing.assert_allclose(bow_features(d, 0), [1 / 3, 2 / 3])


class TestConcatFeatures:
    def test_block_order(self):
        out = concat_features(np.array([1.0, 0.0]), np.array([0.5, 0.5]))
        np.testing.assert_allclose(out, [1, 0, 0.5, 0.5])

    def test_zero_bow_plus_uniform_theta(self):
        out = concat_features(np.zeros(3), np.full(2, 0.5))
        np.testing.assert_allclose(out, [0, 0, 0, 0.5, 0.5])

    def test_length_is_sum(self):
        rng = np.random.default_rng(1)
        for v, k in [(3, 2), (7, 5), (1, 1)]:
            out = concat_features(rng.random(v), rng.random(k))
            assert out.shape == (v + k,)

    def test_matrix_row_mismatch_rejected(self):
        with pytest.raises(DataError):
            concat_features(np.zeros((3, 2)), np.zeros((4, 2)))


class TestTrainLinearClassifier:
    def test_separable_two_points(self):
        X = np.array([[1.0, 0.0], [-1.0, 0.0]])
        y = np.array([1.0, -1.0])
        clf = train_linear_classifier(X, y, reg=0.1)
        assert np.array_equal(clf.predict(X), y)

    def test_flipping_labels_negates_weights(self):
        rng = np.random.default_rng(3)
        X = rng.standard_normal((30, 4))
        y = np.sign(X[:, 0] + 0.3 * rng.standard_normal(30))
        y[y == 0] = 1.0
        c1 = train_linear_classifier(X, y, reg=1.0)
        c2 = train_linear_classifier(X, -y, reg=1.0)
        np.testing.assert_allclose(c1.w, -c2.w, atol=1e-6)
        assert c1.b == pytest.approx(-c2.b, abs=1e-6)

    def test_gradient_matches_finite_differences(self):
        # central-difference oracle, at the returned weights and at a
        # perturbed point where the gradient is far from zero
        rng = np.random.default_rng(4)
        X = rng.standard_normal((20, 3))
        y = np.where(rng.random(20) < 0.5, 1.0, -1.0)
        reg = 0.7
        clf = train_linear_classifier(X, y, reg=reg)
        for w0, b0 in [(clf.w, clf.b), (clf.w + 0.5, clf.b - 0.3)]:
            gw, gb = _gradient(X, y, w0, b0, reg)
            h = 1e-6
            scale = max(1.0, float(np.abs(gw).max()), abs(gb))
            for d in range(3):
                e = np.zeros(3)
                e[d] = h
                fd = (_objective(X, y, w0 + e, b0, reg)
                      - _objective(X, y, w0 - e, b0, reg)) / (2 * h)
                assert abs(fd - gw[d]) <= 1e-5 * scale
            fd_b = (_objective(X, y, w0, b0 + h, reg)
                    - _objective(X, y, w0, b0 - h, reg)) / (2 * h)
            assert abs(fd_b - gb) <= 1e-5 * scale

    def test_objective_decreases_monotonically(self):
        rng = np.random.default_rng(5)
        X = rng.standard_normal((40, 6))
        y = np.where(X @ rng.standard_normal(6) > 0, 1.0, -1.0)
        clf = train_linear_classifier(X, y, reg=1.0)
        trace = np.array(clf.objective_trace)
        assert np.all(np.diff(trace) <= 0)

    def test_deterministic(self):
        rng = np.random.default_rng(6)
        X = rng.standard_normal((25, 4))
        y = np.where(rng.random(25) < 0.5, 1.0, -1.0)
        c1 = train_linear_classifier(X, y)
        c2 = train_linear_classifier(X, y)
        np.testing.assert_array_equal(c1.w, c2.w)
        assert c1.b == c2.b

    def test_single_class_rejected(self):
        with pytest.raises(DataError):
            train_linear_classifier(np.zeros((3, 2)), np.ones(3))

    def test_bad_labels_rejected(self):
        with pytest.raises(DataError):
            train_linear_classifier(np.zeros((3, 2)), np.array([0.0, 1.0, 2.0]))


class TestCrossValidate:
    def balanced_dataset(self, n=40, v=4, seed=0):
        rng = np.random.default_rng(seed)
        labels = [1 if i % 2 == 0 else -1 for i in range(n)]
        docs = [
            [[int(w) for w in rng.integers(0, v, size=3)]] for _ in range(n)
        ]
        return dataset_from_docs(docs, labels=labels, v=v)

    def test_uninformative_features_near_chance(self):
        # constant features cannot separate 50/50 labels
        d = self.balanced_dataset()
        X = np.ones((40, 2))
        res = cross_validate(d, X, folds=5, seed=1)
        assert 0.3 <= res.mean_accuracy <= 0.7

    def test_separable_features_reach_one(self):
        d = self.balanced_dataset()
        y = np.array([u.label for u in d.users], dtype=float)
        X = np.column_stack([y * 2.0, np.ones(40)])
        res = cross_validate(d, X, folds=5, seed=2)
        assert res.mean_accuracy == 1.0
        assert res.correct == res.total == 40

    def test_fold_partition_is_disjoint_cover(self):
        d = self.balanced_dataset(n=23)
        X = np.ones((23, 1)) + np.arange(23)[:, None] * 0.01
        res = cross_validate(d, X, folds=4, seed=3)
        assert sum(res.fold_sizes) == 23
        # every labeled user got exactly one prediction (in {-1, +1})
        assert np.all(np.abs(res.predictions) == 1.0)

    def test_same_seed_gives_identical_folds_for_paired_design(self):
        d = self.balanced_dataset()
        rng = np.random.default_rng(7)
        X1 = rng.standard_normal((40, 3))
        X2 = rng.standard_normal((40, 5))
        r1 = cross_validate(d, X1, folds=5, seed=9)
        r2 = cross_validate(d, X2, folds=5, seed=9)
        # same fold sizes and the same y ordering imply identical splits
        assert r1.fold_sizes == r2.fold_sizes
        np.testing.assert_array_equal(r1.y_true, r2.y_true)

    def test_unlabeled_users_excluded(self):
        d = self.balanced_dataset(n=20)
        d.users[3].label = None
        d.users[11].label = None
        X = np.ones((20, 2))
        res = cross_validate(d, X, folds=3, seed=1)
        assert res.total == 18

    def test_fold_parallel_matches_serial(self):
        d = self.balanced_dataset()
        rng = np.random.default_rng(8)
        X = rng.standard_normal((40, 3))
        r1 = cross_validate(d, X, folds=4, seed=5, threads=1)
        r2 = cross_validate(d, X, folds=4, seed=5, threads=3)
        assert r1.fold_accuracies == r2.fold_accuracies
        np.testing.assert_array_equal(r1.predictions, r2.predictions)

    def test_insufficient_labeled_users(self):
        d = self.balanced_dataset(n=4)
        with pytest.raises(DataError, match="insufficient"):
            cross_validate(d, np.ones((4, 1)), folds=10, seed=0)

    def test_folds_below_two_rejected(self):
        d = self.balanced_dataset(n=10)
        with pytest.raises(DataError):
            cross_validate(d, np.ones((10, 1)), folds=1, seed=0)


def test_bow_matrix_matches_per_user():
    spec = GenSpec(k=2, v=6, p=5, docs_per_user=(0, 3), words_per_doc=(1, 4),
                   phi=np.full((2, 2), 0.3), lambda0=1.0)
    d, _ = generate_dataset(spec, seed=4)
    M = bow_matrix(d)
    for p in range(d.n_users):
        np.testing.assert_array_equal(M[p], bow_features(d, p))

"""Model parameters, latent state, sufficient statistics, and recovery.

The collapsed sampler never stores the integrated-out probability vectors;
everything it needs lives in CountCache, and the topic parameters are
recovered from the counts afterwards (posterior means under the conjugate
priors). The checkpoint therefore stores counts and hyperparameters, not
recovered parameters, so training can resume exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .corpus import Dataset
from .errors import DataError, ModelError

__all__ = [
    "Hyperparams",
    "TopicParams",
    "LatentState",
    "CountCache",
    "UserFeatures",
    "Checkpoint",
    "compute_lambda0",
    "recover_beta",
    "recover_phi",
    "theta_hat",
    "phi_lookup",
]

CHECKPOINT_VERSION = 1


@dataclass
class Hyperparams:
    """Tuning parameters of the joint model.

    alpha   -- Dirichlet concentration on per-user topic vectors
    eta     -- Dirichlet concentration on per-topic (and background) word rows
    delta   -- prior probability that a word is foreground
    lambda1 -- Beta pseudo-count for observed links on a topic pair
    lambda0 -- Beta pseudo-count standing in for the unmodeled zero links
    k       -- number of topics
    """

    alpha: float
    eta: float
    delta: float
    lambda1: float
    lambda0: float
    k: int

    def __post_init__(self):
        if self.alpha <= 0:
            raise ModelError(f"alpha must be > 0, got {self.alpha}")
        if self.eta <= 0:
            raise ModelError(f"eta must be > 0, got {self.eta}")
        if not 0.0 < self.delta < 1.0:
            raise ModelError(f"delta must be in (0, 1), got {self.delta}")
        if self.lambda1 <= 0:
            raise ModelError(f"lambda1 must be > 0, got {self.lambda1}")
        if self.lambda0 <= 0:
            raise ModelError(f"lambda0 must be > 0, got {self.lambda0}")
        if self.k < 1:
            raise ModelError(f"k must be >= 1, got {self.k}")


@dataclass
class TopicParams:
    """Recovered (or ground-truth) topic-level parameters.

    beta      -- K x V row-stochastic word distributions
    beta_back -- V-simplex background word distribution
    phi       -- K x K link probabilities, meaningful for a <= b only
    nu        -- K-vector of label-regression coefficients
    sigma2    -- label noise variance
    """

    beta: np.ndarray
    beta_back: np.ndarray
    phi: np.ndarray
    nu: np.ndarray
    sigma2: float


def phi_lookup(phi: np.ndarray, a: int, b: int) -> float:
    """Entry for the unordered topic pair {a, b} (canonicalized to a <= b)."""
    return float(phi[min(a, b), max(a, b)])


@dataclass
class LatentState:
    """Discrete indicators left after collapsing the conjugate parameters.

    z -- z[i][k]: topic of user i's k-th document
    f -- f[i][k][l]: 1 if word l of document (i, k) is foreground
    s -- s[(i, j)]: user i's topic on the half-link toward friend j;
         exactly two entries per positive edge
    """

    z: list[list[int]]
    f: list[list[list[int]]]
    s: dict[tuple[int, int], int]

    def copy(self) -> "LatentState":
        return LatentState(
            z=[list(zs) for zs in self.z],
            f=[[list(fs) for fs in docs] for docs in self.f],
            s=dict(self.s),
        )


@dataclass
class CountCache:
    """All sufficient statistics, maintained incrementally by the sampler.

    Invariant (checked by tests after every kind of update): every field
    equals a from-scratch recount of the LatentState.
    """

    user_topic: np.ndarray  # P x K: counts of {z_i.} and {s_i.} per topic
    topic_word: np.ndarray  # K x V: foreground word counts per topic
    topic_word_total: np.ndarray  # K
    back_word: np.ndarray  # V: background word counts
    back_total: int
    pair_link: np.ndarray  # K x K upper triangular: links assigned to (a, b)
    user_denom: np.ndarray  # P: D_i + |Neighbors(i)| (static given the dataset)

    @classmethod
    def recount(cls, dataset: Dataset, state: LatentState, k: int) -> "CountCache":
        """Build the cache by recounting the latent state from scratch."""
        P = dataset.n_users
        V = dataset.n_tokens
        user_topic = np.zeros((P, k), dtype=np.int64)
        topic_word = np.zeros((k, V), dtype=np.int64)
        back_word = np.zeros(V, dtype=np.int64)
        back_total = 0
        pair_link = np.zeros((k, k), dtype=np.int64)
        user_denom = np.zeros(P, dtype=np.int64)
        for i, user in enumerate(dataset.users):
            user_denom[i] = len(user.docs) + len(dataset.neighbors(i))
            for kdoc, doc in enumerate(user.docs):
                m = state.z[i][kdoc]
                user_topic[i, m] += 1
                flags = state.f[i][kdoc]
                for w, fg in zip(doc, flags):
                    if fg:
                        topic_word[m, w] += 1
                    else:
                        back_word[w] += 1
                        back_total += 1
        for i, j in dataset.edges:
            a = state.s[(i, j)]
            b = state.s[(j, i)]
            user_topic[i, a] += 1
            user_topic[j, b] += 1
            pair_link[min(a, b), max(a, b)] += 1
        return cls(
            user_topic=user_topic,
            topic_word=topic_word,
            topic_word_total=topic_word.sum(axis=1),
            back_word=back_word,
            back_total=back_total,
            pair_link=pair_link,
            user_denom=user_denom,
        )

    def copy(self) -> "CountCache":
        return CountCache(
            user_topic=self.user_topic.copy(),
            topic_word=self.topic_word.copy(),
            topic_word_total=self.topic_word_total.copy(),
            back_word=self.back_word.copy(),
            back_total=int(self.back_total),
            pair_link=self.pair_link.copy(),
            user_denom=self.user_denom.copy(),
        )

    def equals(self, other: "CountCache") -> bool:
        return (
            np.array_equal(self.user_topic, other.user_topic)
            and np.array_equal(self.topic_word, other.topic_word)
            and np.array_equal(self.topic_word_total, other.topic_word_total)
            and np.array_equal(self.back_word, other.back_word)
            and int(self.back_total) == int(other.back_total)
            and np.array_equal(self.pair_link, other.pair_link)
            and np.array_equal(self.user_denom, other.user_denom)
        )


@dataclass
class UserFeatures:
    """Per-user topic vectors and per-edge topic-pair assignments.

    theta  -- P x K, each row a simplex vector
    pairs  -- E x 2 canonical (a, b) with a <= b, aligned with the edge list
    scores -- E, the unnormalized argmax scores from the pair assignment
    """

    theta: np.ndarray
    pairs: np.ndarray
    scores: np.ndarray


def compute_lambda0(n_users: int, n_edges: int, k: int) -> float:
    """Zero-link pseudo-count: ln(#[zero links] / K^2).

    Raises ModelError when the argument of the log is <= 1 (dense or tiny
    graphs), since the resulting lambda0 would not be a positive Beta
    parameter; the caller must then choose lambda0 by hand.
    """
    total = n_users * (n_users - 1) // 2
    zero_links = total - n_edges
    if zero_links < 0:
        raise ModelError(f"n_edges={n_edges} exceeds the {total} possible pairs")
    ratio = zero_links / (k * k)
    if ratio <= 1.0:
        raise ModelError(
            f"zero-link ratio {ratio:.4g} <= 1 gives a non-positive lambda0; "
            "the graph is too dense or too small for the default rule -- "
            "set lambda0 manually"
        )
    return math.log(ratio)


def recover_beta(cache: CountCache, eta: float) -> tuple[np.ndarray, np.ndarray]:
    """Posterior-mean word distributions from the foreground/background counts."""
    V = cache.topic_word.shape[1]
    beta = (eta + cache.topic_word) / (
        V * eta + cache.topic_word_total[:, None]
    )
    beta_back = (eta + cache.back_word) / (V * eta + cache.back_total)
    return beta, beta_back


def recover_phi(cache: CountCache, lambda1: float, lambda0: float) -> np.ndarray:
    """Posterior-mean link probabilities for canonical pairs a <= b.

    Only positive links are modeled; the zero-link evidence is the lambda0
    pseudo-count. Entries below the diagonal are zero (unused).
    """
    k = cache.pair_link.shape[0]
    c = cache.pair_link.astype(float)
    phi = (lambda1 + c) / (lambda1 + lambda0 + c)
    return np.triu(phi)


def theta_hat(
    cache: CountCache, i: int, alpha: float, smoothed: bool = False
) -> np.ndarray:
    """Per-user topic vector from the current indicator counts.

    smoothed=False gives the plain indicator average used inside the label
    factor and the regression design matrix; smoothed=True gives the
    Dirichlet posterior mean, defined for every user including isolated,
    document-free ones.
    """
    denom = int(cache.user_denom[i])
    row = cache.user_topic[i].astype(float)
    if smoothed:
        k = row.shape[0]
        return (row + alpha) / (denom + k * alpha)
    if denom == 0:
        raise ModelError(
            f"user {i} has no documents and no links; the indicator average "
            "is undefined (exclude such users from the regression)"
        )
    return row / denom


# ---------------------------------------------------------------------------
# Checkpoint serialization
# ---------------------------------------------------------------------------


@dataclass
class Checkpoint:
    """Everything needed to resume training or run prediction.

    Serialized as versioned JSON. Floats survive the round trip bit-exactly
    (json emits shortest-repr float64).
    """

    k: int
    v: int
    p: int
    hyper: Hyperparams
    cache: CountCache
    nu: np.ndarray
    sigma2: float
    seed: int
    rng_state: dict | None
    vocab: list[str]
    version: int = CHECKPOINT_VERSION

    def recover_params(self) -> TopicParams:
        beta, beta_back = recover_beta(self.cache, self.hyper.eta)
        phi = recover_phi(self.cache, self.hyper.lambda1, self.hyper.lambda0)
        return TopicParams(
            beta=beta,
            beta_back=beta_back,
            phi=phi,
            nu=self.nu.copy(),
            sigma2=self.sigma2,
        )

    def save(self, path):
        doc = {
            "version": self.version,
            "k": self.k,
            "v": self.v,
            "p": self.p,
            "hyper": {
                "alpha": self.hyper.alpha,
                "eta": self.hyper.eta,
                "delta": self.hyper.delta,
                "lambda1": self.hyper.lambda1,
                "lambda0": self.hyper.lambda0,
            },
            "counts": {
                "user_topic": self.cache.user_topic.tolist(),
                "topic_word": self.cache.topic_word.tolist(),
                "topic_word_total": self.cache.topic_word_total.tolist(),
                "back_word": self.cache.back_word.tolist(),
                "back_total": int(self.cache.back_total),
                "pair_link": self.cache.pair_link.tolist(),
                "user_denom": self.cache.user_denom.tolist(),
            },
            "nu": self.nu.tolist(),
            "sigma2": self.sigma2,
            "seed": self.seed,
            "rng_state": self.rng_state,
            "vocab": self.vocab,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "Checkpoint":
        with open(path, encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: not a valid checkpoint: {exc}") from exc
        version = doc.get("version")
        if version != CHECKPOINT_VERSION:
            raise DataError(
                f"{path}: unsupported checkpoint version {version!r} "
                f"(expected {CHECKPOINT_VERSION})"
            )
        h = doc["hyper"]
        c = doc["counts"]
        k = int(doc["k"])
        hyper = Hyperparams(
            alpha=h["alpha"],
            eta=h["eta"],
            delta=h["delta"],
            lambda1=h["lambda1"],
            lambda0=h["lambda0"],
            k=k,
        )
        cache = CountCache(
            user_topic=np.array(c["user_topic"], dtype=np.int64).reshape(
                doc["p"], k
            ),
            topic_word=np.array(c["topic_word"], dtype=np.int64).reshape(
                k, doc["v"]
            ),
            topic_word_total=np.array(c["topic_word_total"], dtype=np.int64),
            back_word=np.array(c["back_word"], dtype=np.int64),
            back_total=int(c["back_total"]),
            pair_link=np.array(c["pair_link"], dtype=np.int64).reshape(k, k),
            user_denom=np.array(c["user_denom"], dtype=np.int64),
        )
        return cls(
            k=k,
            v=int(doc["v"]),
            p=int(doc["p"]),
            hyper=hyper,
            cache=cache,
            nu=np.array(doc["nu"], dtype=float),
            sigma2=float(doc["sigma2"]),
            seed=int(doc["seed"]),
            rng_state=doc.get("rng_state"),
            vocab=list(doc["vocab"]),
            version=version,
        )

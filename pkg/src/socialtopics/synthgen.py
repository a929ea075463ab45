"""Forward simulation of the full generative process, plus a brute-force
conditional oracle for exact verification on tiny instances.

The simulator draws every unordered user pair's link outcome explicitly,
which is quadratic in the user count -- fine at desk scale, and it realizes
the generative semantics that training only approximates through the
zero-link pseudo-count.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .corpus import Dataset, UserRecord, Vocabulary
from .errors import DataError, ModelError
from .model import Hyperparams, LatentState, TopicParams
from .rng import GENERATE, substream

__all__ = ["GenSpec", "GroundTruth", "generate_dataset", "enumerate_conditionals"]

# Enumeration refuses instances bigger than this (words + edges); the
# oracle exists for exactness, not speed.
MAX_ORACLE_SIZE = 64


@dataclass
class GenSpec:
    """Shape and parameters for a simulated dataset.

    docs_per_user / words_per_doc are inclusive (lo, hi) ranges. The
    optional overrides (beta, beta_back, phi, theta, nu) replace the
    corresponding prior draw with a fixed value, which tests use to plant
    known structure.
    """

    k: int
    v: int
    p: int
    docs_per_user: tuple[int, int]
    words_per_doc: tuple[int, int]
    alpha: float = 1.0
    eta: float = 1.0
    delta: float = 0.5
    lambda1: float = 0.1
    lambda0: float = 1.0
    sigma2: float = 1.0
    beta: np.ndarray | None = None
    beta_back: np.ndarray | None = None
    phi: np.ndarray | None = None
    theta: np.ndarray | None = None
    nu: np.ndarray | None = None

    def __post_init__(self):
        if self.v < 1:
            raise DataError(f"vocabulary size must be >= 1, got {self.v}")
        if self.k < 1:
            raise DataError(f"topic count must be >= 1, got {self.k}")
        if self.p < 1:
            raise DataError(f"user count must be >= 1, got {self.p}")
        for name in ("docs_per_user", "words_per_doc"):
            rng = getattr(self, name)
            if isinstance(rng, int):
                rng = (rng, rng)
                setattr(self, name, rng)
            lo, hi = rng
            if lo < 0 or hi < lo:
                raise DataError(f"{name} range {rng} is infeasible")


@dataclass
class GroundTruth:
    """Everything the simulator drew, for recovery experiments."""

    params: TopicParams
    theta: np.ndarray  # P x K
    state: LatentState  # z, f, and the s values of kept (positive) edges
    y_cont: np.ndarray  # P, the pre-threshold label draws (nan where no label)
    theta_hat: np.ndarray  # P x K indicator averages (nan rows where undefined)


def _categorical_rows(rng, probs, rows):
    """One categorical draw per row index, probs indexed by rows."""
    u = rng.random(len(rows))
    cum = np.cumsum(probs[rows], axis=1)
    return (u[:, None] > cum).sum(axis=1)


def generate_dataset(spec: GenSpec, seed: int) -> tuple[Dataset, GroundTruth]:
    """Simulate a dataset and return it with all latent truth.

    Links are drawn for every unordered pair; only positive edges (and
    their endpoint topic draws) are kept. Users whose indicator average is
    undefined (no documents and no neighbors) get a null label.
    """
    rng = substream(seed, GENERATE)
    K, V, P = spec.k, spec.v, spec.p

    beta_back = (
        spec.beta_back
        if spec.beta_back is not None
        else rng.dirichlet([spec.eta] * V)
    )
    beta = (
        spec.beta
        if spec.beta is not None
        else rng.dirichlet([spec.eta] * V, size=K)
    )
    if spec.phi is not None:
        phi = np.triu(np.asarray(spec.phi, dtype=float))
    else:
        phi = np.triu(rng.beta(spec.lambda1, spec.lambda0, size=(K, K)))
    theta = (
        spec.theta if spec.theta is not None else rng.dirichlet([spec.alpha] * K, size=P)
    )
    nu = spec.nu if spec.nu is not None else rng.standard_normal(K)

    # text
    z: list[list[int]] = []
    f: list[list[list[int]]] = []
    docs: list[list[list[int]]] = []
    dlo, dhi = spec.docs_per_user
    wlo, whi = spec.words_per_doc
    for i in range(P):
        n_docs = int(rng.integers(dlo, dhi + 1))
        zi, fi, di = [], [], []
        for _ in range(n_docs):
            m = int(rng.choice(K, p=theta[i]))
            n_words = int(rng.integers(wlo, whi + 1))
            flags = (rng.random(n_words) < spec.delta).astype(int)
            words = np.empty(n_words, dtype=int)
            fg = flags == 1
            if fg.any():
                words[fg] = rng.choice(V, size=int(fg.sum()), p=beta[m])
            if (~fg).any():
                words[~fg] = rng.choice(V, size=int((~fg).sum()), p=beta_back)
            zi.append(m)
            fi.append(flags.tolist())
            di.append(words.tolist())
        z.append(zi)
        f.append(fi)
        docs.append(di)

    # links: every unordered pair draws endpoint topics and an outcome
    s: dict[tuple[int, int], int] = {}
    edges: list[tuple[int, int]] = []
    if P > 1:
        ii, jj = np.triu_indices(P, k=1)
        s_ij = _categorical_rows(rng, theta, ii)
        s_ji = _categorical_rows(rng, theta, jj)
        lo = np.minimum(s_ij, s_ji)
        hi = np.maximum(s_ij, s_ji)
        kept = rng.random(len(ii)) < phi[lo, hi]
        for idx in np.flatnonzero(kept):
            i, j = int(ii[idx]), int(jj[idx])
            edges.append((i, j))
            s[(i, j)] = int(s_ij[idx])
            s[(j, i)] = int(s_ji[idx])

    # labels from the indicator averages of the drawn z and s; users with
    # no documents and no neighbors have an undefined average -> no label
    deg = np.zeros(P, dtype=int)
    for i, j in edges:
        deg[i] += 1
        deg[j] += 1
    counts = np.zeros((P, K))
    for i in range(P):
        for m in z[i]:
            counts[i, m] += 1
    for (i, _), m in s.items():
        counts[i, m] += 1
    denom = np.array([len(z[i]) for i in range(P)]) + deg
    that = np.full((P, K), np.nan)
    y_cont = np.full(P, np.nan)
    labels: list[int | None] = [None] * P
    for i in range(P):
        if denom[i] == 0:
            continue
        that[i] = counts[i] / denom[i]
        y_cont[i] = that[i] @ nu + math.sqrt(spec.sigma2) * rng.standard_normal()
        labels[i] = 1 if y_cont[i] >= 0 else -1

    width = max(3, len(str(V - 1)))
    vocab = Vocabulary(f"w{t:0{width}d}" for t in range(V))
    uw = max(4, len(str(P - 1)))
    users = [
        UserRecord(id=f"u{i:0{uw}d}", docs=docs[i], label=labels[i])
        for i in range(P)
    ]
    dataset = Dataset(users=users, vocab=vocab, edges=edges)
    truth = GroundTruth(
        params=TopicParams(
            beta=np.asarray(beta, dtype=float),
            beta_back=np.asarray(beta_back, dtype=float),
            phi=phi,
            nu=np.asarray(nu, dtype=float),
            sigma2=spec.sigma2,
        ),
        theta=np.asarray(theta, dtype=float),
        state=LatentState(z=z, f=f, s=s),
        y_cont=y_cont,
        theta_hat=that,
    )
    return dataset, truth


# ---------------------------------------------------------------------------
# Brute-force conditional oracle
# ---------------------------------------------------------------------------


def collapsed_log_joint(
    dataset: Dataset,
    state: LatentState,
    hyper: Hyperparams,
    nu: np.ndarray,
    sigma2: float,
) -> float:
    """Log of the collapsed joint density, recounted from scratch.

    Deliberately simple: plain loops, no incremental caches, so it can
    serve as an independent oracle for the trainer's conditionals and
    likelihood. Terms: per-user Dirichlet-multinomial over topic
    indicators, per-topic and background Dirichlet-multinomials over
    words, per-pair Beta marginals over link assignments, Bernoulli terms
    for the foreground flags, and Gaussian label densities.
    """
    lg = math.lgamma
    K = hyper.k
    V = dataset.n_tokens
    P = dataset.n_users

    user_counts = [[0] * K for _ in range(P)]
    topic_word: list[dict[int, int]] = [defaultdict(int) for _ in range(K)]
    topic_total = [0] * K
    back_word: dict[int, int] = defaultdict(int)
    back_total = 0
    n_fg = 0
    n_bg = 0
    for i, user in enumerate(dataset.users):
        for kdoc, doc in enumerate(user.docs):
            m = state.z[i][kdoc]
            user_counts[i][m] += 1
            for w, fg in zip(doc, state.f[i][kdoc]):
                if fg:
                    topic_word[m][w] += 1
                    topic_total[m] += 1
                    n_fg += 1
                else:
                    back_word[w] += 1
                    back_total += 1
                    n_bg += 1
    pair_counts: dict[tuple[int, int], int] = defaultdict(int)
    for i, j in dataset.edges:
        a, b = state.s[(i, j)], state.s[(j, i)]
        user_counts[i][a] += 1
        user_counts[j][b] += 1
        pair_counts[(min(a, b), max(a, b))] += 1

    ll = 0.0
    # user-level DCM over topic indicators
    for i in range(P):
        total = sum(user_counts[i])
        ll += lg(K * hyper.alpha) - lg(K * hyper.alpha + total)
        for m in range(K):
            ll += lg(hyper.alpha + user_counts[i][m]) - lg(hyper.alpha)
    # word DCMs: one per topic over foreground words, one background
    for m in range(K):
        ll += lg(V * hyper.eta) - lg(V * hyper.eta + topic_total[m])
        for c in topic_word[m].values():
            ll += lg(hyper.eta + c) - lg(hyper.eta)
    ll += lg(V * hyper.eta) - lg(V * hyper.eta + back_total)
    for c in back_word.values():
        ll += lg(hyper.eta + c) - lg(hyper.eta)
    # link Beta marginals (pairs with zero count contribute exactly zero)
    l1, l0 = hyper.lambda1, hyper.lambda0
    for c in pair_counts.values():
        ll += lg(l1 + c) - lg(l1) + lg(l1 + l0) - lg(l1 + l0 + c)
    # foreground flag prior
    if n_fg:
        ll += n_fg * math.log(hyper.delta)
    if n_bg:
        ll += n_bg * math.log(1.0 - hyper.delta)
    # labels
    for i, user in enumerate(dataset.users):
        if user.label is None:
            continue
        denom = sum(user_counts[i])
        if denom == 0:
            continue
        mean = sum(user_counts[i][m] * nu[m] for m in range(K)) / denom
        ll += -0.5 * math.log(2.0 * math.pi * sigma2)
        ll += -((user.label - mean) ** 2) / (2.0 * sigma2)
    return ll


def enumerate_conditionals(
    dataset: Dataset,
    state: LatentState,
    target: tuple,
    hyper: Hyperparams,
    nu: np.ndarray,
    sigma2: float,
) -> np.ndarray:
    """Exact conditional of one latent variable by brute-force enumeration.

    target is ("z", i, k), ("f", i, k, l), or ("s", i, j) for the directed
    half-link i -> j. Evaluates the collapsed joint at every candidate
    value of the target with everything else held fixed, then normalizes.
    Refuses instances with more than MAX_ORACLE_SIZE words + edges.
    """
    size = dataset.total_words() + len(dataset.edges)
    if size > MAX_ORACLE_SIZE:
        raise ModelError(
            f"instance too large for enumeration ({size} words+edges > "
            f"{MAX_ORACLE_SIZE})"
        )
    kind = target[0]
    work = state.copy()
    if kind == "z":
        _, i, k = target
        candidates = range(hyper.k)

        def setter(val):
            work.z[i][k] = val

    elif kind == "f":
        _, i, k, l = target
        candidates = range(2)

        def setter(val):
            work.f[i][k][l] = val

    elif kind == "s":
        _, i, j = target
        if (i, j) not in work.s:
            raise DataError(f"no half-link ({i} -> {j}) in the state")
        candidates = range(hyper.k)

        def setter(val):
            work.s[(i, j)] = val

    else:
        raise DataError(f"unknown target kind {kind!r}")

    logps = []
    for val in candidates:
        setter(val)
        logps.append(collapsed_log_joint(dataset, work, hyper, nu, sigma2))
    logps = np.array(logps)
    p = np.exp(logps - logps.max())
    return p / p.sum()

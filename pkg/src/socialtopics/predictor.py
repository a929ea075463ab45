"""Per-user inference of topic vectors under fixed trained parameters, and
topic-pair assignment for friendships.

Prediction freezes the recovered word distributions (other users' training
data lives inside them), so users are mutually independent: each one runs
its own short Gibbs chain over (z, f) with a private RNG stream derived
from (seed, user index). Results are therefore identical regardless of
worker count or scheduling.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .corpus import Dataset, UserRecord
from .errors import DataError, ModelError
from .model import Hyperparams, TopicParams, UserFeatures
from .rng import PREDICT, substream

__all__ = [
    "PredictConfig",
    "predict_user",
    "predict_all",
    "assign_link_pairs",
    "save_features",
    "load_features",
]


@dataclass
class PredictConfig:
    iters: int = 50
    burn_in: float = 0.5
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.iters < 1:
            raise ModelError(f"iters must be >= 1, got {self.iters}")
        if not 0.0 <= self.burn_in < 1.0:
            raise ModelError(f"burn_in must be in [0, 1), got {self.burn_in}")
        if self.threads < 1:
            raise ModelError(f"threads must be >= 1, got {self.threads}")


class _Frozen:
    """Read-only tables shared by every user's chain."""

    def __init__(self, params: TopicParams, hyper: Hyperparams):
        self.beta = np.asarray(params.beta, dtype=float)
        self.beta_back = np.asarray(params.beta_back, dtype=float)
        with np.errstate(divide="ignore"):
            # zero entries (possible with planted parameters) map to -inf
            self.log_beta = np.log(self.beta)
        self.k = self.beta.shape[0]
        self.v = self.beta.shape[1]
        self.alpha = hyper.alpha
        self.delta = hyper.delta


def _predict_theta(docs, frozen: _Frozen, iters, burn_in, rng) -> np.ndarray:
    """Gibbs-sample (z, f) for one user's documents with fixed word
    distributions; return the average smoothed topic vector over the
    retained sweeps.

    Only the user's own documents inform the chain: no link term (the
    link topics are assigned afterwards from theta) and no label term
    (the label is what downstream consumers want to predict).
    """
    K = frozen.k
    alpha = frozen.alpha
    delta = frozen.delta
    D = len(docs)
    for doc in docs:
        for w in doc:
            if not 0 <= w < frozen.v:
                raise DataError(f"token id {w} outside the trained vocabulary")

    z = [int(rng.integers(K)) for _ in range(D)]
    f = [[int(rng.integers(2)) for _ in doc] for doc in docs]
    counts = np.zeros(K)
    for m in z:
        counts[m] += 1

    first_keep = int(burn_in * iters)
    n_keep = iters - first_keep
    acc = np.zeros(K)
    denom = D + K * alpha
    for t in range(iters):
        for k, doc in enumerate(docs):
            counts[z[k]] -= 1
            logw = np.log(counts + alpha)
            fg = [w for w, flag in zip(doc, f[k]) if flag]
            if fg:
                logw = logw + frozen.log_beta[:, fg].sum(axis=1)
            top = logw.max()
            if not np.isfinite(top):
                # word impossible under every topic (planted zeros): fall
                # back to the prior term alone
                logw = np.log(counts + alpha)
                top = logw.max()
            p = np.exp(logw - top)
            p /= p.sum()
            c = np.cumsum(p)
            m = min(int(np.searchsorted(c, rng.random(), side="right")), K - 1)
            z[k] = m
            counts[m] += 1
        for k, doc in enumerate(docs):
            m = z[k]
            flags = f[k]
            for l, w in enumerate(doc):
                fg_side = delta * frozen.beta[m, w]
                bg_side = (1.0 - delta) * frozen.beta_back[w]
                flags[l] = 1 if rng.random() < fg_side / (fg_side + bg_side) else 0
        if t >= first_keep:
            acc += (counts + alpha) / denom
    return acc / n_keep


def predict_user(
    user: UserRecord,
    params: TopicParams,
    hyper: Hyperparams,
    cfg: PredictConfig,
    rng=None,
) -> np.ndarray:
    """Infer one user's topic vector. A user with no documents gets the
    prior mean (uniform)."""
    if rng is None:
        rng = substream(cfg.seed, PREDICT)
    frozen = _Frozen(params, hyper)
    return _predict_theta(user.docs, frozen, cfg.iters, cfg.burn_in, rng)


# Worker-global context so the frozen tables cross the process boundary
# once (pool initializer) instead of once per task.
_WORKER: dict = {}


def _worker_init(frozen, iters, burn_in, seed):
    _WORKER["frozen"] = frozen
    _WORKER["iters"] = iters
    _WORKER["burn_in"] = burn_in
    _WORKER["seed"] = seed


def _worker_run(batch):
    frozen = _WORKER["frozen"]
    out = []
    for i, docs in batch:
        rng = substream(_WORKER["seed"], PREDICT, i)
        try:
            theta = _predict_theta(
                docs, frozen, _WORKER["iters"], _WORKER["burn_in"], rng
            )
            out.append((i, theta, None))
        except Exception as exc:  # aggregated, never aborts the batch
            out.append((i, None, str(exc)))
    return out


def predict_all(
    dataset: Dataset,
    params: TopicParams,
    hyper: Hyperparams,
    cfg: PredictConfig,
) -> tuple[UserFeatures, list[tuple[str, str]]]:
    """Infer every user's topic vector, then assign a topic pair to each edge.

    Per-user failures are collected as (user id, message) without aborting;
    failed users fall back to the uniform prior vector.
    """
    P = dataset.n_users
    K = params.beta.shape[0]
    frozen = _Frozen(params, hyper)
    theta = np.full((P, K), 1.0 / K)
    errors: list[tuple[str, str]] = []
    tasks = [(i, dataset.users[i].docs) for i in range(P)]

    if cfg.threads <= 1 or P < 2:
        _worker_init(frozen, cfg.iters, cfg.burn_in, cfg.seed)
        results = [_worker_run(tasks)]
    else:
        n_batches = min(len(tasks), cfg.threads * 4)
        batches = [tasks[b::n_batches] for b in range(n_batches)]
        with ProcessPoolExecutor(
            max_workers=cfg.threads,
            initializer=_worker_init,
            initargs=(frozen, cfg.iters, cfg.burn_in, cfg.seed),
        ) as pool:
            results = list(pool.map(_worker_run, batches))

    for batch_out in results:
        for i, th, err in batch_out:
            if err is None:
                theta[i] = th
            else:
                errors.append((dataset.users[i].id, err))

    pairs, scores = assign_link_pairs(theta, dataset.edges, params.phi)
    return UserFeatures(theta=theta, pairs=pairs, scores=scores), errors


def assign_link_pairs(
    theta: np.ndarray, edges, phi: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Most likely canonical topic pair (a, b), a <= b, for each edge.

    Maximizes theta_p[a] * phi[a, b] * theta_j[b] over canonical pairs,
    trying both endpoint orientations; ties break to the lexicographically
    smallest (a, b). Symmetric in the edge's endpoints.
    """
    K = theta.shape[1]
    phi_sym = np.triu(phi) + np.triu(phi, k=1).T
    tril = np.tril_indices(K, k=-1)
    pairs = np.zeros((len(edges), 2), dtype=np.int64)
    scores = np.zeros(len(edges))
    for e, (i, j) in enumerate(edges):
        outer = np.outer(theta[i], theta[j])
        cand = phi_sym * np.maximum(outer, outer.T)
        cand[tril] = -np.inf
        flat = int(np.argmax(cand))
        a, b = divmod(flat, K)
        pairs[e] = (a, b)
        scores[e] = cand[a, b]
    return pairs, scores


# ---------------------------------------------------------------------------
# Features file: one JSON record per line, users first, then edges
# ---------------------------------------------------------------------------


def save_features(path, dataset: Dataset, features: UserFeatures):
    with open(path, "w", encoding="utf-8") as fh:
        for i, user in enumerate(dataset.users):
            rec = {
                "type": "user",
                "id": user.id,
                "theta": features.theta[i].tolist(),
            }
            fh.write(json.dumps(rec) + "\n")
        for e, (i, j) in enumerate(dataset.edges):
            rec = {
                "type": "edge",
                "ids": [dataset.users[i].id, dataset.users[j].id],
                "pair": [int(features.pairs[e, 0]), int(features.pairs[e, 1])],
                "score": float(features.scores[e]),
            }
            fh.write(json.dumps(rec) + "\n")


def load_features(path):
    """Read a features file back.

    Returns (user_ids, theta, edge_ids, pairs, scores).
    """
    user_ids: list[str] = []
    thetas: list[list[float]] = []
    edge_ids: list[tuple[str, str]] = []
    pairs: list[tuple[int, int]] = []
    scores: list[float] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed record: {exc}") from exc
            if rec.get("type") == "user":
                user_ids.append(rec["id"])
                thetas.append(rec["theta"])
            elif rec.get("type") == "edge":
                edge_ids.append(tuple(rec["ids"]))
                pairs.append(tuple(rec["pair"]))
                scores.append(rec["score"])
            else:
                raise DataError(f"{path}:{lineno}: unknown record type")
    return (
        user_ids,
        np.array(thetas, dtype=float),
        edge_ids,
        np.array(pairs, dtype=np.int64).reshape(len(pairs), 2),
        np.array(scores, dtype=float),
    )

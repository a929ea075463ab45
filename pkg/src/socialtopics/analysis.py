"""Summaries of a trained model and the inferred features: top words,
topic popularity, popularity-normalized friendship pair rankings,
cross-run topic matching, significance testing, and DOT export.

Everything here is a pure function over immutable inputs.
"""

from __future__ import annotations

import json

import numpy as np
from scipy.special import gammaincc

from .errors import DataError
from .model import TopicParams, UserFeatures

__all__ = [
    "topic_top_words",
    "topic_popularity",
    "rank_topic_pairs",
    "match_topics",
    "chi_square_test",
    "export_viz",
]


def topic_top_words(params: TopicParams, a: int, n: int, vocab=None):
    """The n highest-probability entries of topic a's word row, descending,
    ties broken by token id. Returns (token, probability) pairs; tokens are
    ids when no vocab is given."""
    K, V = params.beta.shape
    if not 0 <= a < K:
        raise DataError(f"topic index {a} out of range [0, {K})")
    if n > V:
        raise DataError(f"asked for {n} words but the vocabulary has {V}")
    row = params.beta[a]
    # lexsort is stable: sort by token id, then by descending probability
    order = np.lexsort((np.arange(V), -row))[:n]
    if vocab is None:
        return [(int(v), float(row[v])) for v in order]
    return [(vocab[v], float(row[v])) for v in order]


def topic_popularity(theta: np.ndarray) -> np.ndarray:
    """Per-topic share of the total feature mass: column sums over users,
    divided by the user count. Sums to 1 since every row is a simplex."""
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 2 or theta.shape[0] == 0:
        raise DataError("feature matrix is empty")
    return theta.sum(axis=0) / theta.shape[0]


def rank_topic_pairs(link_pairs: np.ndarray, popularity: np.ndarray, top_n: int):
    """Rank topic pairs by popularity-normalized friendship count.

    normalized score = count / (popularity[a] * popularity[b] * n_edges),
    which is invariant under duplicating every user and every edge. Pairs
    with zero count are omitted; a nonzero-count pair whose popularity
    product is zero is skipped rather than divided.
    Returns [(pair, raw count, normalized score)], descending by score.
    """
    link_pairs = np.asarray(link_pairs)
    n_edges = len(link_pairs)
    counts: dict[tuple[int, int], int] = {}
    for a, b in link_pairs:
        key = (int(a), int(b))
        counts[key] = counts.get(key, 0) + 1
    ranked = []
    for (a, b), c in counts.items():
        denom = float(popularity[a]) * float(popularity[b]) * n_edges
        if denom <= 0.0:
            continue
        ranked.append(((a, b), c, c / denom))
    ranked.sort(key=lambda item: (-item[2], item[0]))
    return ranked[:top_n]


def match_topics(params_a: TopicParams, params_b: TopicParams, n_matches: int):
    """Greedily pair topics of two runs by cosine similarity of word rows.

    Repeatedly takes the globally most similar unmatched pair; returns the
    first n_matches picks as (topic_a, topic_b, cosine), descending.
    Greedy rather than optimal assignment -- adequate for well-separated
    topics and cheap.
    """
    if params_a.beta.shape[1] != params_b.beta.shape[1]:
        raise DataError(
            f"vocabulary sizes differ: {params_a.beta.shape[1]} vs "
            f"{params_b.beta.shape[1]}"
        )
    a = params_a.beta / np.linalg.norm(params_a.beta, axis=1, keepdims=True)
    b = params_b.beta / np.linalg.norm(params_b.beta, axis=1, keepdims=True)
    sim = a @ b.T
    k = min(sim.shape)
    out = []
    work = sim.copy()
    for _ in range(min(n_matches, k)):
        flat = int(np.argmax(work))
        i, j = divmod(flat, work.shape[1])
        out.append((int(i), int(j), float(sim[i, j])))
        work[i, :] = -np.inf
        work[:, j] = -np.inf
    return out


def chi_square_test(correct_a: int, n_a: int, correct_b: int, n_b: int):
    """Two-proportion chi-squared test with one degree of freedom.

    Builds the 2x2 correct/incorrect-by-method table and computes the
    classic sum of (observed - expected)^2 / expected; the p-value is the
    chi-squared survival function (regularized upper incomplete gamma).
    Degenerate tables with an empty margin give (0, 1).
    """
    if n_a <= 0 or n_b <= 0:
        raise DataError("both trial counts must be positive")
    if not 0 <= correct_a <= n_a or not 0 <= correct_b <= n_b:
        raise DataError("correct counts must lie in [0, n]")
    obs = np.array(
        [[correct_a, n_a - correct_a], [correct_b, n_b - correct_b]], dtype=float
    )
    total = obs.sum()
    col = obs.sum(axis=0)
    rowt = obs.sum(axis=1)
    if col.min() == 0 or rowt.min() == 0:
        return 0.0, 1.0
    expected = np.outer(rowt, col) / total
    stat = float(((obs - expected) ** 2 / expected).sum())
    p_value = float(gammaincc(0.5, stat / 2.0))
    return stat, p_value


def export_viz(
    params: TopicParams,
    features: UserFeatures,
    rankings,
    summary_path,
    dot_path,
    vocab=None,
    top_words: int = 5,
):
    """Write the model summary (JSON) and the topic graph (DOT).

    The DOT graph has one node per topic labeled with its top words and
    popularity, a solid border for topics with a positive label
    coefficient and a dashed border for negative ones, and one undirected
    edge per ranked pair with the normalized score as its weight.
    """
    K = params.beta.shape[0]
    popularity = topic_popularity(features.theta)
    n = min(top_words, params.beta.shape[1])
    topics = []
    for a in range(K):
        words = topic_top_words(params, a, n, vocab=vocab)
        topics.append(
            {
                "topic": a,
                "top_words": [[str(w), p] for w, p in words],
                "popularity": float(popularity[a]),
                "coefficient": float(params.nu[a]),
            }
        )
    summary = {
        "n_topics": K,
        "topics": topics,
        "pairs": [
            {"pair": [int(a), int(b)], "count": int(c), "score": s}
            for (a, b), c, s in rankings
        ],
    }
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")

    lines = ["graph topics {", "  node [shape=box];"]
    for a in range(K):
        words = " ".join(str(w) for w, _ in topic_top_words(params, a, n, vocab=vocab))
        style = "solid" if params.nu[a] >= 0 else "dashed"
        label = f"{words}\\npop={popularity[a]:.3f} coef={params.nu[a]:+.3f}"
        lines.append(f'  t{a} [label="{_dot_escape(label)}", style={style}];')
    for (a, b), _count, score in rankings:
        lines.append(f'  t{a} -- t{b} [label="{score:.4f}", weight={score:.4f}];')
    lines.append("}")
    with open(dot_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _dot_escape(text: str) -> str:
    return text.replace('"', '\\"')

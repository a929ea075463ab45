"""Loading, validation, and integer coding of the multi-view dataset.

A dataset couples three views of one user population: tokenized text
documents, an undirected friendship edge list, and optional binary (+1/-1)
interest labels. Documents arrive pre-tokenized (tokenization is the
caller's job); this module builds the vocabulary and codes tokens to dense
integer ids.

File formats:
  users file  -- one JSON record per line with fields
                 {"id": str, "docs": [[token, ...], ...], "label": 1|-1|null}
                 ("label" may also be absent entirely)
  edges file  -- one edge per line: two whitespace-separated user ids
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field

from .errors import DataError

__all__ = [
    "Vocabulary",
    "UserRecord",
    "Dataset",
    "load_dataset",
    "save_dataset",
    "neighbors",
]


class Vocabulary:
    """Bijection between token strings and dense ids in [0, V)."""

    def __init__(self, tokens):
        self.id_to_token: list[str] = list(tokens)
        self.token_to_id: dict[str, int] = {
            t: i for i, t in enumerate(self.id_to_token)
        }
        if len(self.token_to_id) != len(self.id_to_token):
            raise DataError("vocabulary contains duplicate tokens")

    def __len__(self):
        return len(self.id_to_token)

    def __contains__(self, token):
        return token in self.token_to_id

    def __eq__(self, other):
        return (
            isinstance(other, Vocabulary)
            and self.id_to_token == other.id_to_token
        )

    def __repr__(self):
        return f"Vocabulary(V={len(self)})"


@dataclass
class UserRecord:
    """One user: opaque id, integer-coded documents, optional +-1 label."""

    id: str
    docs: list[list[int]]
    label: int | None = None


@dataclass
class Dataset:
    """Validated, integer-coded, immutable multi-view dataset.

    Edges are canonical unordered pairs (i, j) with i < j, sorted and
    deduplicated. A loaded Dataset is never mutated and is safe to share
    across threads/processes.
    """

    users: list[UserRecord]
    vocab: Vocabulary
    edges: list[tuple[int, int]]
    n_unknown_dropped: int = 0
    _adjacency: list[list[int]] = field(
        init=False, repr=False, compare=False, default_factory=list
    )

    def __post_init__(self):
        adj: list[list[int]] = [[] for _ in self.users]
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        for lst in adj:
            lst.sort()
        self._adjacency = adj

    @property
    def n_users(self):
        return len(self.users)

    @property
    def n_tokens(self):
        return len(self.vocab)

    def neighbors(self, i):
        """Sorted friends of user i."""
        if not 0 <= i < len(self.users):
            raise DataError(f"user index {i} out of range [0, {len(self.users)})")
        return list(self._adjacency[i])

    def total_words(self):
        return sum(len(doc) for u in self.users for doc in u.docs)


def neighbors(dataset: Dataset, i: int) -> list[int]:
    """All j such that (min(i,j), max(i,j)) is an edge, ascending."""
    return dataset.neighbors(i)


def _parse_label(raw, path, lineno):
    if raw is None:
        return None
    # bool is an int subclass; reject it explicitly
    if isinstance(raw, bool) or not isinstance(raw, int) or raw not in (1, -1):
        raise DataError(f"{path}:{lineno}: label must be +1, -1, or null, got {raw!r}")
    return raw


def _parse_user_line(line, path, lineno):
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}:{lineno}: malformed record: {exc}") from exc
    if not isinstance(rec, dict):
        raise DataError(f"{path}:{lineno}: expected a JSON object")
    uid = rec.get("id")
    if not isinstance(uid, str) or not uid:
        raise DataError(f"{path}:{lineno}: missing or invalid 'id'")
    docs = rec.get("docs", [])
    if not isinstance(docs, list) or any(
        not isinstance(d, list) or any(not isinstance(t, str) for t in d)
        for d in docs
    ):
        raise DataError(
            f"{path}:{lineno}: 'docs' must be a list of lists of token strings"
        )
    label = _parse_label(rec.get("label"), path, lineno)
    return uid, docs, label


def load_dataset(
    users_path,
    edges_path,
    *,
    min_token_freq: int = 1,
    vocab: Vocabulary | None = None,
) -> Dataset:
    """Load and validate a dataset from a users file and an edges file.

    The vocabulary is built from the union of all tokens, in first-appearance
    order, keeping tokens that occur at least ``min_token_freq`` times; pruned
    tokens are dropped from documents. When ``vocab`` is given (prediction on
    a trained model), it is used as-is and out-of-vocabulary tokens are
    dropped and counted in ``Dataset.n_unknown_dropped``.
    """
    raw_users: list[tuple[str, list[list[str]], int | None]] = []
    seen_ids: dict[str, int] = {}
    with open(users_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            uid, docs, label = _parse_user_line(line, users_path, lineno)
            if uid in seen_ids:
                raise DataError(
                    f"{users_path}:{lineno}: duplicate user id {uid!r} "
                    f"(first seen on line {seen_ids[uid]})"
                )
            seen_ids[uid] = lineno
            raw_users.append((uid, docs, label))

    dropped = 0
    if vocab is None:
        counts = Counter(t for _, docs, _ in raw_users for d in docs for t in d)
        kept = [
            t
            for _, docs, _ in raw_users
            for d in docs
            for t in d
            if counts[t] >= min_token_freq
        ]
        # first-appearance order over surviving tokens
        vocab = Vocabulary(dict.fromkeys(kept))
    users = []
    for uid, docs, label in raw_users:
        coded = []
        for d in docs:
            ids = []
            for t in d:
                tid = vocab.token_to_id.get(t)
                if tid is None:
                    dropped += 1
                else:
                    ids.append(tid)
            coded.append(ids)
        users.append(UserRecord(id=uid, docs=coded, label=label))

    index = {u.id: i for i, u in enumerate(users)}
    pairs = set()
    with open(edges_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise DataError(
                    f"{edges_path}:{lineno}: expected two user ids, got {len(parts)} fields"
                )
            a, b = parts
            for uid in (a, b):
                if uid not in index:
                    raise DataError(
                        f"{edges_path}:{lineno}: edge references unknown user id {uid!r}"
                    )
            if a == b:
                raise DataError(f"{edges_path}:{lineno}: self-loop on user id {a!r}")
            i, j = index[a], index[b]
            pairs.add((min(i, j), max(i, j)))

    dataset = Dataset(
        users=users,
        vocab=vocab,
        edges=sorted(pairs),
        n_unknown_dropped=dropped,
    )
    validate_dataset(dataset)
    return dataset


def validate_dataset(d: Dataset):
    """Check the structural invariants of a Dataset; raise DataError if broken."""
    V = len(d.vocab)
    P = len(d.users)
    ids = set()
    for u in d.users:
        if u.id in ids:
            raise DataError(f"duplicate user id {u.id!r}")
        ids.add(u.id)
        if u.label is not None and u.label not in (1, -1):
            raise DataError(f"user {u.id!r}: label must be +1 or -1")
        for doc in u.docs:
            for t in doc:
                if not 0 <= t < V:
                    raise DataError(f"user {u.id!r}: token id {t} out of range [0, {V})")
    prev = None
    for i, j in d.edges:
        if not (0 <= i < P and 0 <= j < P):
            raise DataError(f"edge ({i}, {j}) references a missing user index")
        if i >= j:
            raise DataError(f"edge ({i}, {j}) is not canonical (need i < j)")
        if (i, j) == prev:
            raise DataError(f"duplicate edge ({i}, {j})")
        prev = (i, j)


def save_dataset(d: Dataset, users_path, edges_path):
    """Write a Dataset back to the line-delimited file formats.

    For a dataset produced by load_dataset, reloading the result with
    min_token_freq=1 reproduces the same integer-coded content (vocabulary
    ids are first-appearance ordered in both directions). Synthetic
    datasets whose vocab order differs from usage order get renumbered on
    reload.
    """
    with open(users_path, "w", encoding="utf-8") as fh:
        for u in d.users:
            rec = {
                "id": u.id,
                "docs": [[d.vocab.id_to_token[t] for t in doc] for doc in u.docs],
                "label": u.label,
            }
            fh.write(json.dumps(rec) + "\n")
    with open(edges_path, "w", encoding="utf-8") as fh:
        for i, j in d.edges:
            fh.write(f"{d.users[i].id} {d.users[j].id}\n")

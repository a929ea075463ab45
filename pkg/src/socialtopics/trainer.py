"""Collapsed Gibbs training over document topics, word foreground flags,
and link endpoint topics, with independence-chain Metropolis-Hastings on
the tuning parameters and closed-form updates of the label regression.

Every latent variable is resampled under a strict decrement-sample-
increment discipline: its contribution is removed from the count cache,
the conditional is computed from the remaining counts, a value is drawn,
and the counts are updated. The cache therefore always equals a
from-scratch recount of the latent state.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import gammaln

from .corpus import Dataset
from .errors import ModelError
from .model import (
    Checkpoint,
    CountCache,
    Hyperparams,
    LatentState,
    TopicParams,
    compute_lambda0,
    recover_beta,
    recover_phi,
)
from .rng import TRAIN, substream

__all__ = [
    "TrainConfig",
    "TrainResult",
    "GibbsTrainer",
    "init_state",
    "maximize_nu_sigma",
    "joint_log_likelihood",
    "train",
]


@dataclass
class TrainConfig:
    """Knobs for one training run.

    convergence is the per-iteration log-likelihood gain threshold as a
    fraction of the cumulative gain; the rule may fire only after
    burn_in * max_iters sweeps, so an early plateau or a noisy dip cannot
    stop a run that has barely started.

    lambda0=None means the zero-link rule ln(#[zero links] / K^2); on
    graphs too dense or too small for that rule the run errors out and a
    manual value must be supplied.
    """

    k: int
    max_iters: int = 100
    convergence: float = 0.01
    seed: int = 0
    burn_in: float = 0.5
    fix_hyper: bool = False
    ridge_eps: float = 1e-6
    sigma2_floor: float = 1e-8
    lambda1: float = 0.1
    lambda0: float | None = None

    def __post_init__(self):
        if self.k < 1:
            raise ModelError(f"k must be >= 1, got {self.k}")
        if self.max_iters < 1:
            raise ModelError(f"max_iters must be >= 1, got {self.max_iters}")
        if not 0.0 < self.convergence < 1.0:
            raise ModelError(f"convergence must be in (0, 1), got {self.convergence}")
        if not 0.0 <= self.burn_in < 1.0:
            raise ModelError(f"burn_in must be in [0, 1), got {self.burn_in}")


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    params: TopicParams
    history: list[dict] = field(default_factory=list)


def init_state(
    dataset: Dataset, cfg: TrainConfig, rng: np.random.Generator
) -> tuple[LatentState, CountCache, Hyperparams, np.ndarray, float]:
    """Random initialization: uniform topics, fair-coin flags, unit priors."""
    K = cfg.k
    z = [
        [int(rng.integers(K)) for _ in user.docs] for user in dataset.users
    ]
    f = [
        [[int(rng.integers(2)) for _ in doc] for doc in user.docs]
        for user in dataset.users
    ]
    s: dict[tuple[int, int], int] = {}
    for i, j in dataset.edges:
        s[(i, j)] = int(rng.integers(K))
        s[(j, i)] = int(rng.integers(K))
    state = LatentState(z=z, f=f, s=s)
    lambda0 = (
        cfg.lambda0
        if cfg.lambda0 is not None
        else compute_lambda0(dataset.n_users, len(dataset.edges), K)
    )
    hyper = Hyperparams(
        alpha=1.0,
        eta=1.0,
        delta=0.5,
        lambda1=cfg.lambda1,
        lambda0=lambda0,
        k=K,
    )
    cache = CountCache.recount(dataset, state, K)
    nu = np.zeros(K)
    sigma2 = 1.0
    return state, cache, hyper, nu, sigma2


def maximize_nu_sigma(
    cache: CountCache,
    labels,
    ridge_eps: float = 1e-6,
    sigma2_floor: float = 1e-8,
) -> tuple[np.ndarray, float]:
    """Closed-form update of the label regression given the current sample.

    Rows of the design matrix are the unsmoothed indicator averages of
    labeled users (users with no documents and no links are excluded: the
    average is undefined for them). Solves the ridge-stabilized normal
    equations; the variance uses the labeled-row count and is floored.
    """
    rows = [
        i
        for i, y in enumerate(labels)
        if y is not None and cache.user_denom[i] > 0
    ]
    if not rows:
        raise ModelError("label view empty; run unsupervised")
    A = cache.user_topic[rows] / cache.user_denom[rows, None]
    b = np.array([float(labels[i]) for i in rows])
    k = A.shape[1]
    gram = A.T @ A + ridge_eps * np.eye(k)
    nu = np.linalg.solve(gram, A.T @ b)
    raw = float(b @ b - b @ (A @ nu)) / len(rows)
    return nu, max(sigma2_floor, raw)


def joint_log_likelihood(
    cache: CountCache,
    hyper: Hyperparams,
    nu: np.ndarray,
    sigma2: float,
    labels,
) -> float:
    """Collapsed complete-data log-likelihood from the sufficient statistics.

    This is the quantity the convergence monitor tracks. All terms are
    functions of the counts alone, so a consistent cache fully determines
    the value.
    """
    K = hyper.k
    V = cache.topic_word.shape[1]
    ll = _user_dcm_ll(cache, K, hyper.alpha)
    ll += _word_dcm_ll(cache, V, hyper.eta)
    ll += _flag_ll(cache, hyper.delta)
    iu = np.triu_indices(K)
    c = cache.pair_link[iu].astype(float)
    l1, l0 = hyper.lambda1, hyper.lambda0
    ll += float(
        np.sum(gammaln(l1 + c) - gammaln(l1) + gammaln(l1 + l0) - gammaln(l1 + l0 + c))
    )
    for i, y in enumerate(labels):
        if y is None or cache.user_denom[i] == 0:
            continue
        mean = float(cache.user_topic[i] @ nu) / float(cache.user_denom[i])
        ll += -0.5 * math.log(2.0 * math.pi * sigma2)
        ll += -((y - mean) ** 2) / (2.0 * sigma2)
    return float(ll)


def _user_dcm_ll(cache: CountCache, k: int, alpha: float) -> float:
    denom = cache.user_denom.astype(float)
    total = float(np.sum(gammaln(k * alpha) - gammaln(k * alpha + denom)))
    total += float(np.sum(gammaln(cache.user_topic + alpha) - gammaln(alpha)))
    return total


def _word_dcm_ll(cache: CountCache, v: int, eta: float) -> float:
    totals = cache.topic_word_total.astype(float)
    total = float(np.sum(gammaln(v * eta) - gammaln(v * eta + totals)))
    total += float(np.sum(gammaln(cache.topic_word + eta) - gammaln(eta)))
    total += float(gammaln(v * eta) - gammaln(v * eta + cache.back_total))
    total += float(np.sum(gammaln(cache.back_word + eta) - gammaln(eta)))
    return total


def _flag_ll(cache: CountCache, delta: float) -> float:
    n_fg = int(cache.topic_word_total.sum())
    n_bg = int(cache.back_total)
    total = 0.0
    if n_fg:
        total += n_fg * math.log(delta)
    if n_bg:
        total += n_bg * math.log(1.0 - delta)
    return total


class GibbsTrainer:
    """Single-threaded collapsed Gibbs sampler over one dataset.

    Exposes the normalized conditionals (conditional_z / _f / _s) without
    mutation so tests can compare them against exact enumeration, and the
    sampling updates (sample_z / _f / _s) used by sweep().
    """

    def __init__(self, dataset: Dataset, cfg: TrainConfig, rng=None):
        self.dataset = dataset
        self.cfg = cfg
        self.rng = rng if rng is not None else substream(cfg.seed, TRAIN)
        (self.state, self.cache, self.hyper, self.nu, self.sigma2) = init_state(
            dataset, cfg, self.rng
        )
        self.labels = [u.label for u in dataset.users]
        self._has_labeled = any(
            y is not None and d > 0
            for y, d in zip(self.labels, self.cache.user_denom)
        )
        # Constant-time lookup tables. pair_flat is a live view into
        # pair_link; the canonical-pair index map and the link log-ratio
        # table never change (lambda1/lambda0 are fixed after init), while
        # the log(count + alpha) table is rebuilt whenever alpha moves.
        K = cfg.k
        topics = np.arange(K)
        self._pair_idx = (
            np.minimum(topics[:, None], topics[None, :]) * K
            + np.maximum(topics[:, None], topics[None, :])
        )
        self._pair_flat = self.cache.pair_link.ravel()
        counts = np.arange(len(dataset.edges) + 1, dtype=float)
        self._link_log_list = np.log(
            (self.hyper.lambda1 + counts)
            / (self.hyper.lambda1 + self.hyper.lambda0 + counts)
        ).tolist()
        self._pair_idx_rows = self._pair_idx.tolist()
        self._max_count = int(self.cache.user_denom.max(initial=0))
        self._alpha_of_table = None
        self._log_alpha_table = None
        self._log_alpha_list: list[float] = []
        self._refresh_alpha_table()

    def _refresh_alpha_table(self):
        if self._alpha_of_table != self.hyper.alpha:
            self._log_alpha_table = np.log(
                np.arange(self._max_count + 1, dtype=float) + self.hyper.alpha
            )
            self._log_alpha_list = self._log_alpha_table.tolist()
            self._alpha_of_table = self.hyper.alpha

    # -- document topics ----------------------------------------------------

    def _doc_fg_counts(self, i: int, k: int) -> dict[int, int]:
        counts: dict[int, int] = {}
        for w, fg in zip(self.dataset.users[i].docs[k], self.state.f[i][k]):
            if fg:
                counts[w] = counts.get(w, 0) + 1
        return counts

    def _remove_z(self, i: int, k: int, fg_counts: dict[int, int]) -> int:
        m = self.state.z[i][k]
        self.cache.user_topic[i, m] -= 1
        if fg_counts:
            tw = self.cache.topic_word
            total = 0
            for w, c in fg_counts.items():
                tw[m, w] -= c
                total += c
            self.cache.topic_word_total[m] -= total
        return m

    def _insert_z(self, i: int, k: int, m: int, fg_counts: dict[int, int]):
        self.state.z[i][k] = m
        self.cache.user_topic[i, m] += 1
        if fg_counts:
            tw = self.cache.topic_word
            total = 0
            for w, c in fg_counts.items():
                tw[m, w] += c
                total += c
            self.cache.topic_word_total[m] += total

    def _z_weights(self, i: int, fg_counts: dict[int, int]) -> np.ndarray:
        """Unnormalized exp-weights over topics; doc (i, k) must be removed.

        log weight(m) = log(#[{z_{i,-k}, s_i} = m] + alpha)
                      + log DCM posterior of the doc's foreground words
                        under topic m's remaining counts
                      + Gaussian label term (labeled users only)
        """
        self._refresh_alpha_table()
        hyper = self.hyper
        ut_row = self.cache.user_topic[i]
        logw = self._log_alpha_table[ut_row]
        if fg_counts:
            veta = self.dataset.n_tokens * hyper.eta
            totals = self.cache.topic_word_total
            total_b = sum(fg_counts.values())
            logw = logw + gammaln(veta + totals) - gammaln(veta + totals + total_b)
            if len(fg_counts) == 1:
                ((w, c),) = fg_counts.items()
                col = self.cache.topic_word[:, w] + hyper.eta
                logw += gammaln(col + c) - gammaln(col)
            else:
                ws = list(fg_counts.keys())
                cs = np.fromiter(fg_counts.values(), dtype=float, count=len(ws))
                cols = self.cache.topic_word[:, ws] + hyper.eta
                logw += (gammaln(cols + cs) - gammaln(cols)).sum(axis=1)
        y = self.labels[i]
        if y is not None:
            denom = float(self.cache.user_denom[i])
            mean = (float(ut_row @ self.nu) + self.nu) / denom
            logw = logw - (y - mean) ** 2 / (2.0 * self.sigma2)
        return np.exp(logw - logw.max())

    def conditional_z(self, i: int, k: int) -> np.ndarray:
        """Eq-for-eq conditional of z[i][k], leaving the state untouched."""
        fg = self._doc_fg_counts(i, k)
        m0 = self._remove_z(i, k, fg)
        w = self._z_weights(i, fg)
        self._insert_z(i, k, m0, fg)
        return w / w.sum()

    def sample_z(self, i: int, k: int) -> int:
        fg = self._doc_fg_counts(i, k)
        self._remove_z(i, k, fg)
        m = _draw(self._z_weights(i, fg), self.rng)
        self._insert_z(i, k, m, fg)
        return m

    # -- word foreground flags ------------------------------------------------

    def _remove_f(self, i: int, k: int, l: int) -> int:
        fg = self.state.f[i][k][l]
        w = self.dataset.users[i].docs[k][l]
        if fg:
            m = self.state.z[i][k]
            self.cache.topic_word[m, w] -= 1
            self.cache.topic_word_total[m] -= 1
        else:
            self.cache.back_word[w] -= 1
            self.cache.back_total -= 1
        return fg

    def _insert_f(self, i: int, k: int, l: int, fg: int):
        self.state.f[i][k][l] = fg
        w = self.dataset.users[i].docs[k][l]
        if fg:
            m = self.state.z[i][k]
            self.cache.topic_word[m, w] += 1
            self.cache.topic_word_total[m] += 1
        else:
            self.cache.back_word[w] += 1
            self.cache.back_total += 1

    def _f_prob(self, w: int, m: int) -> float:
        """P(flag = foreground) for word w in a document of topic m; the
        word must already be removed from the counts.

        Ratio of the word's posterior probability under the document
        topic's remaining foreground counts (times delta) to the same
        under the background counts (times 1 - delta).
        """
        hyper = self.hyper
        eta = hyper.eta
        veta = self.dataset.n_tokens * eta
        cache = self.cache
        fg_side = (
            hyper.delta
            * (eta + int(cache.topic_word[m, w]))
            / (veta + int(cache.topic_word_total[m]))
        )
        bg_side = (
            (1.0 - hyper.delta)
            * (eta + int(cache.back_word[w]))
            / (veta + cache.back_total)
        )
        return fg_side / (fg_side + bg_side)

    def conditional_f(self, i: int, k: int, l: int) -> np.ndarray:
        """(P(background), P(foreground)) without mutating the state."""
        fg0 = self._remove_f(i, k, l)
        p1 = self._f_prob(self.dataset.users[i].docs[k][l], self.state.z[i][k])
        self._insert_f(i, k, l, fg0)
        return np.array([1.0 - p1, p1])

    def sample_f(self, i: int, k: int, l: int) -> int:
        state = self.state
        cache = self.cache
        w = self.dataset.users[i].docs[k][l]
        m = state.z[i][k]
        if state.f[i][k][l]:
            cache.topic_word[m, w] -= 1
            cache.topic_word_total[m] -= 1
        else:
            cache.back_word[w] -= 1
            cache.back_total -= 1
        fg = 1 if self.rng.random() < self._f_prob(w, m) else 0
        state.f[i][k][l] = fg
        if fg:
            cache.topic_word[m, w] += 1
            cache.topic_word_total[m] += 1
        else:
            cache.back_word[w] += 1
            cache.back_total += 1
        return fg

    # -- link endpoint topics ---------------------------------------------

    def _remove_s(self, i: int, j: int) -> int:
        m = self.state.s[(i, j)]
        other = self.state.s[(j, i)]
        self.cache.user_topic[i, m] -= 1
        self.cache.pair_link[min(m, other), max(m, other)] -= 1
        return m

    def _insert_s(self, i: int, j: int, m: int):
        other = self.state.s[(j, i)]
        self.state.s[(i, j)] = m
        self.cache.user_topic[i, m] += 1
        self.cache.pair_link[min(m, other), max(m, other)] += 1

    def _s_weights(self, i: int, j: int) -> list[float]:
        """Unnormalized exp-weights over topics; half-link (i -> j) removed.

        log weight(m) = log(#[{z_i, s_{i,-j}} = m] + alpha)
                      + log (lambda1 + C) / (lambda1 + lambda0 + C), with C
                        the remaining count of links on the canonical pair
                        (m, s_ji)
                      + Gaussian label term for user i

        Scalar arithmetic throughout: this is the most frequently called
        conditional (two evaluations per edge per sweep) and K is small.
        """
        self._refresh_alpha_table()
        other = self.state.s[(j, i)]
        ut = self.cache.user_topic[i].tolist()
        la = self._log_alpha_list
        link = self._link_log_list
        pair_flat = self._pair_flat
        pidx = self._pair_idx_rows[other]
        K = self.hyper.k
        y = self.labels[i]
        if y is not None:
            nu = self.nu.tolist()
            inv_denom = 1.0 / float(self.cache.user_denom[i])
            base = y - sum(c * v for c, v in zip(ut, nu)) * inv_denom
            inv2s2 = 0.5 / self.sigma2
            logw = [
                la[ut[m]]
                + link[int(pair_flat[pidx[m]])]
                - (base - nu[m] * inv_denom) ** 2 * inv2s2
                for m in range(K)
            ]
        else:
            logw = [la[ut[m]] + link[int(pair_flat[pidx[m]])] for m in range(K)]
        top = max(logw)
        return [math.exp(v - top) for v in logw]

    def conditional_s(self, i: int, j: int) -> np.ndarray:
        m0 = self._remove_s(i, j)
        w = np.array(self._s_weights(i, j))
        self._insert_s(i, j, m0)
        return w / w.sum()

    def sample_s(self, i: int, j: int) -> int:
        self._remove_s(i, j)
        m = _draw(self._s_weights(i, j), self.rng)
        self._insert_s(i, j, m)
        return m

    # -- full sweep and parameter updates --------------------------------

    def sweep(self):
        """One pass over all z, then all f, then all s (fixed order)."""
        for i, user in enumerate(self.dataset.users):
            for k in range(len(user.docs)):
                self.sample_z(i, k)
        for i, user in enumerate(self.dataset.users):
            for k, doc in enumerate(user.docs):
                for l in range(len(doc)):
                    self.sample_f(i, k, l)
        for i, j in self.dataset.edges:
            self.sample_s(i, j)
            self.sample_s(j, i)

    def hyper_log_ratio(self, name: str, proposal: float) -> float:
        """Collapsed-likelihood log-ratio of a proposal over the current value.

        With prior proposals (independence chain), prior and proposal terms
        cancel and this ratio alone decides acceptance.
        """
        K, V = self.cfg.k, self.dataset.n_tokens
        if name == "alpha":
            return _user_dcm_ll(self.cache, K, proposal) - _user_dcm_ll(
                self.cache, K, self.hyper.alpha
            )
        if name == "eta":
            return _word_dcm_ll(self.cache, V, proposal) - _word_dcm_ll(
                self.cache, V, self.hyper.eta
            )
        if name == "delta":
            return _flag_ll(self.cache, proposal) - _flag_ll(
                self.cache, self.hyper.delta
            )
        raise ModelError(f"unknown hyperparameter {name!r}")

    def mh_step_hyper(self) -> dict[str, bool]:
        """One independence-chain proposal per tuning parameter.

        alpha, eta propose from Exponential(1); delta from Beta(1, 1).
        Each is accepted or rejected on its own. No-op when fix_hyper.
        """
        flags = {"alpha": False, "eta": False, "delta": False}
        if self.cfg.fix_hyper:
            return flags
        updates = {}
        for name in ("alpha", "eta", "delta"):
            if name == "delta":
                prop = float(self.rng.random())
                valid = 0.0 < prop < 1.0
            else:
                prop = float(self.rng.exponential(1.0))
                valid = prop > 0.0
            u = float(self.rng.random())
            if not valid:
                continue
            if math.log(u) < self.hyper_log_ratio(name, prop):
                updates[name] = prop
                flags[name] = True
        if updates:
            self.hyper = replace(self.hyper, **updates)
        return flags

    def joint_log_likelihood(self) -> float:
        return joint_log_likelihood(
            self.cache, self.hyper, self.nu, self.sigma2, self.labels
        )

    def make_checkpoint(self) -> Checkpoint:
        return Checkpoint(
            k=self.cfg.k,
            v=self.dataset.n_tokens,
            p=self.dataset.n_users,
            hyper=self.hyper,
            cache=self.cache.copy(),
            nu=self.nu.copy(),
            sigma2=self.sigma2,
            seed=self.cfg.seed,
            rng_state=self.rng.bit_generator.state,
            vocab=list(self.dataset.vocab.id_to_token),
        )

    def recovered_params(self) -> TopicParams:
        beta, beta_back = recover_beta(self.cache, self.hyper.eta)
        phi = recover_phi(self.cache, self.hyper.lambda1, self.hyper.lambda0)
        return TopicParams(
            beta=beta, beta_back=beta_back, phi=phi, nu=self.nu.copy(),
            sigma2=self.sigma2,
        )

    def run(self, metrics_cb=None) -> TrainResult:
        """Alternate sweeps with parameter updates until the stop rule fires."""
        cfg = self.cfg
        history = []
        ll0 = self.joint_log_likelihood()
        rec = {
            "iteration": 0,
            "log_likelihood": ll0,
            "alpha": self.hyper.alpha,
            "eta": self.hyper.eta,
            "delta": self.hyper.delta,
            "sigma2": self.sigma2,
            "accept_alpha": False,
            "accept_eta": False,
            "accept_delta": False,
            "seconds": 0.0,
        }
        history.append(rec)
        if metrics_cb:
            metrics_cb(rec)
        min_stop = max(2, math.ceil(cfg.burn_in * cfg.max_iters))
        prev_ll = ll0
        for t in range(1, cfg.max_iters + 1):
            t_start = time.perf_counter()
            self.sweep()
            flags = self.mh_step_hyper()
            if self._has_labeled:
                self.nu, self.sigma2 = maximize_nu_sigma(
                    self.cache, self.labels, cfg.ridge_eps, cfg.sigma2_floor
                )
            ll = self.joint_log_likelihood()
            rec = {
                "iteration": t,
                "log_likelihood": ll,
                "alpha": self.hyper.alpha,
                "eta": self.hyper.eta,
                "delta": self.hyper.delta,
                "sigma2": self.sigma2,
                "accept_alpha": flags["alpha"],
                "accept_eta": flags["eta"],
                "accept_delta": flags["delta"],
                "seconds": time.perf_counter() - t_start,
            }
            history.append(rec)
            if metrics_cb:
                metrics_cb(rec)
            cumulative = ll - ll0
            if t >= min_stop and cumulative > 0 and (ll - prev_ll) < (
                cfg.convergence * cumulative
            ):
                break
            prev_ll = ll
        return TrainResult(
            checkpoint=self.make_checkpoint(),
            params=self.recovered_params(),
            history=history,
        )


def train(dataset: Dataset, cfg: TrainConfig, metrics_cb=None) -> TrainResult:
    """Train on a dataset and return the checkpoint, recovered parameters,
    and the per-iteration metrics history."""
    return GibbsTrainer(dataset, cfg).run(metrics_cb=metrics_cb)


def _draw(weights, rng) -> int:
    """Sample an index proportional to a vector of nonnegative weights."""
    values = weights.tolist() if isinstance(weights, np.ndarray) else weights
    r = rng.random() * sum(values)
    acc = 0.0
    for idx, wv in enumerate(values):
        acc += wv
        if r < acc:
            return idx
    return len(values) - 1

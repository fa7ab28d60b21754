"""Diversity and accuracy metrics for recommendation lists.

Divergence-family metrics (activation, calibration, fragmentation, alternative
voices, representation) all reduce to a Jensen-Shannon divergence between two
bucket distributions, computed base-2 so the result lives in [0, 1]. The
recommendation-side distribution can be rank-discounted with weights
w_r = 1 / log2(r + 1); the discount is on by default and toggleable everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np
from scipy.stats import rankdata

from . import kernels
from .corpus import Article, PartyRegistry, party_bucket, sentiment_bucket

EPS = 1e-6


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class DiscreteDistribution:
    labels: tuple[str, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        if len(self.labels) != len(self.probs):
            raise MetricsError("labels/probs length mismatch")
        if any(p < 0 for p in self.probs):
            raise MetricsError("negative probability")
        if abs(sum(self.probs) - 1.0) > 1e-9:
            raise MetricsError(f"probabilities sum to {sum(self.probs)!r}")

    @classmethod
    def from_counts(cls, counts: Mapping[str, float]) -> "DiscreteDistribution":
        total = float(sum(counts.values()))
        if total <= 0:
            raise MetricsError("cannot normalize zero-mass counts")
        labels = tuple(counts)
        return cls(labels, tuple(counts[l] / total for l in labels))


def default_rank_weights(n: int) -> list[float]:
    """Positional discount for rank r (1-based): 1 / log2(r + 1)."""
    return [1.0 / math.log2(r + 1) for r in range(1, n + 1)]


Distributable = Union[DiscreteDistribution, Mapping[str, float], Sequence[str]]


def _as_counts(x: Distributable, rank_weights: Optional[Sequence[float]]) -> dict[str, float]:
    if isinstance(x, DiscreteDistribution):
        return dict(zip(x.labels, x.probs))
    if isinstance(x, Mapping):
        return {str(k): float(v) for k, v in x.items()}
    labels = list(x)
    if rank_weights is None:
        rank_weights = [1.0] * len(labels)
    if len(rank_weights) < len(labels):
        raise MetricsError("rank_weights shorter than the label sequence")
    counts: dict[str, float] = {}
    for lbl, w in zip(labels, rank_weights):
        counts[str(lbl)] = counts.get(str(lbl), 0.0) + float(w)
    return counts


def js_divergence(p: Distributable, q: Distributable, rank_weights: Optional[Sequence[float]] = None) -> float:
    """Jensen-Shannon divergence, base 2, in [0, 1].

    Accepts distributions, raw (possibly unnormalized) label -> mass mappings,
    or a rank-ordered label sequence. `rank_weights` applies to a label
    sequence on the p side: counts become sums of positional weights. Both
    sides are placed on the union support, add-eps smoothed (eps=1e-6) and
    renormalized, so zero-mass buckets never produce infinities.
    """
    pc = _as_counts(p, rank_weights)
    qc = _as_counts(q, None)
    labels = list(pc)
    labels += [l for l in qc if l not in pc]
    pv = np.array([pc.get(l, 0.0) for l in labels])
    qv = np.array([qc.get(l, 0.0) for l in labels])

    def smooth(v: np.ndarray) -> np.ndarray:
        total = v.sum()
        v = v / total if total > 0 else v
        v = v + EPS
        return v / v.sum()

    pv, qv = smooth(pv), smooth(qv)
    m = 0.5 * (pv + qv)
    kl_pm = np.sum(pv * np.log2(pv / m))
    kl_qm = np.sum(qv * np.log2(qv / m))
    return float(0.5 * kl_pm + 0.5 * kl_qm)


def gini(values: Sequence[float]) -> float:
    """Mean absolute difference inequality: sum |x_i - x_j| / (2 n (n-1) mean).

    For a target dimension, `values` are the bucket proportions of the list.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        raise MetricsError("gini needs at least 2 values")
    if np.any(v < 0):
        raise MetricsError("gini values must be non-negative")
    if np.all(v == 0):
        raise MetricsError("gini undefined for all-zero values")
    diff_sum = float(np.abs(v[:, None] - v[None, :]).sum())
    n = v.size
    return diff_sum / (2.0 * n * (n - 1) * v.mean())


def ild(vectors: Sequence[Sequence[float]]) -> float:
    """Intra-list distance: mean pairwise cosine distance of item vectors."""
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise MetricsError("ild needs at least 2 item vectors")
    if np.any(np.linalg.norm(X, axis=1) == 0):
        raise MetricsError("ild undefined for zero vectors")
    return kernels.pairwise_cosine_mean(X)


def _weights(n: int, rank_discount: bool) -> Optional[list[float]]:
    return default_rank_weights(n) if rank_discount else None


def _mean(values: list[float]) -> Optional[float]:
    return float(np.mean(values)) if values else None


def activation(
    lists: Mapping[str, Sequence[Article]],
    pool: Sequence[Article],
    rank_discount: bool = True,
) -> Optional[float]:
    """Mean JS divergence between each list's (rank-discounted) sentiment-bucket
    distribution and the pool's sentiment-bucket distribution."""
    if not pool or not lists:
        raise MetricsError("activation needs a non-empty pool and lists")
    pool_counts = _as_counts([str(sentiment_bucket(a.sentiment_score)) for a in pool], None)
    per_user = []
    for user in sorted(lists):
        arts = lists[user]
        if not arts:
            continue
        seq = [str(sentiment_bucket(a.sentiment_score)) for a in arts]
        per_user.append(js_divergence(seq, pool_counts, _weights(len(seq), rank_discount)))
    return _mean(per_user)


def _complexity_bucket(value: float, quartiles: np.ndarray) -> str:
    return str(int(np.searchsorted(quartiles, value, side="right")) + 1)


def calibration(
    lists: Mapping[str, Sequence[Article]],
    histories: Mapping[str, Sequence[Article]],
    attribute: str,
    pool: Optional[Sequence[Article]] = None,
    rank_discount: bool = True,
) -> tuple[Optional[float], int]:
    """Per-user JS divergence between list and history distributions of
    `attribute` ("category" or "complexity"), averaged over users.

    Complexity is bucketized into quartiles of the pool's complexity scores
    (falling back to the scores seen in lists + histories). Users with an empty
    usable history are excluded; the count of exclusions is returned alongside.
    """
    if attribute == "category":
        label = lambda a: a.category  # noqa: E731
    elif attribute == "complexity":
        source = pool if pool is not None else [
            a for arts in list(lists.values()) + list(histories.values()) for a in arts
        ]
        scored = [a.complexity for a in source if a.complexity is not None]
        if not scored:
            return None, len(lists)
        quartiles = np.quantile(np.asarray(scored), [0.25, 0.5, 0.75])
        label = lambda a: _complexity_bucket(a.complexity, quartiles) if a.complexity is not None else None  # noqa: E731
    else:
        raise MetricsError(f"unknown calibration attribute: {attribute!r}")

    excluded = 0
    per_user = []
    for user in sorted(lists):
        arts = lists[user]
        hist = [l for l in map(label, histories.get(user, ())) if l is not None]
        seq = [l for l in map(label, arts) if l is not None]
        if not hist or not seq:
            excluded += 1
            continue
        per_user.append(js_divergence(seq, _as_counts(hist, None), _weights(len(seq), rank_discount)))
    return _mean(per_user), excluded


def fragmentation(
    lists: Mapping[str, Sequence[Article]],
    rank_discount: bool = True,
    max_pairs: int = 10_000,
    seed: int = 0,
) -> Optional[float]:
    """Mean pairwise JS divergence between users' story distributions.

    Articles without a story id count as their own single-article story. All
    user pairs are evaluated when there are at most `max_pairs`; beyond that a
    seeded uniform sample of `max_pairs` pairs stands in.
    """
    users = sorted(u for u in lists if lists[u])
    n = len(users)
    if n < 2:
        raise MetricsError("fragmentation needs at least 2 non-empty lists")
    story = lambda a: a.story_id if a.story_id is not None else a.id  # noqa: E731
    seqs = {u: [story(a) for a in lists[u]] for u in users}
    total = n * (n - 1) // 2
    if total <= max_pairs:
        pair_idx = np.arange(total)
    else:
        pair_idx = np.random.default_rng(seed).choice(total, size=max_pairs, replace=False)
        pair_idx.sort()
    values = []
    for k in pair_idx:
        # triangular decode of flat pair index k -> (i, j), i < j
        k = int(k)
        i = int((2 * n - 1 - math.sqrt((2 * n - 1) ** 2 - 8 * k)) // 2)
        while i > 0 and i * (2 * n - i - 1) // 2 > k:
            i -= 1
        while (i + 1) * (2 * n - i - 2) // 2 <= k:
            i += 1
        j = k - i * (2 * n - i - 1) // 2 + i + 1
        a, b = seqs[users[i]], seqs[users[j]]
        values.append(
            js_divergence(
                _as_counts(a, _weights(len(a), rank_discount)),
                _as_counts(b, _weights(len(b), rank_discount)),
            )
        )
    return _mean(values)


def alternative_voices(
    lists: Mapping[str, Sequence[Article]],
    pool: Sequence[Article],
    rank_discount: bool = True,
) -> Optional[float]:
    """JS divergence of (minority, majority) mention mass, list vs pool.

    Articles without annotations contribute zero mass. Returns None (absent)
    when the pool carries no annotated mass at all — never a silent 0.
    """
    pool_min = float(sum(a.minority_mentions or 0 for a in pool))
    pool_maj = float(sum(a.majority_mentions or 0 for a in pool))
    if pool_min + pool_maj == 0:
        return None
    pool_counts = {"minority": pool_min, "majority": pool_maj}
    per_user = []
    for user in sorted(lists):
        arts = lists[user]
        if not arts:
            continue
        w = _weights(len(arts), rank_discount) or [1.0] * len(arts)
        counts = {
            "minority": sum(wr * (a.minority_mentions or 0) for wr, a in zip(w, arts)),
            "majority": sum(wr * (a.majority_mentions or 0) for wr, a in zip(w, arts)),
        }
        per_user.append(js_divergence(counts, pool_counts))
    return _mean(per_user)


def representation(
    lists: Mapping[str, Sequence[Article]],
    pool: Sequence[Article],
    registry: PartyRegistry,
    rank_discount: bool = True,
) -> Optional[float]:
    """JS divergence of party-bucket distributions, list (rank-discounted) vs pool."""
    if not pool:
        raise MetricsError("representation needs a non-empty pool")
    pool_counts = _as_counts([party_bucket(a.party_mentions, registry).label for a in pool], None)
    per_user = []
    for user in sorted(lists):
        arts = lists[user]
        if not arts:
            continue
        seq = [party_bucket(a.party_mentions, registry).label for a in arts]
        per_user.append(js_divergence(seq, pool_counts, _weights(len(seq), rank_discount)))
    return _mean(per_user)


@dataclass(frozen=True)
class AucResult:
    value: Optional[float]
    evaluated: int
    skipped: int


def auc(impressions: Iterable[tuple[Sequence[float], Sequence[int]]]) -> AucResult:
    """Macro-averaged per-impression AUC.

    Each impression is (scores, binary labels). AUC is the fraction of
    (positive, negative) pairs ranked correctly, ties counting one half —
    computed with the rank-sum identity. Impressions with a single class are
    skipped and counted.
    """
    values = []
    skipped = 0
    for scores, labels in impressions:
        s = np.asarray(scores, dtype=np.float64)
        y = np.asarray(labels, dtype=np.int64)
        if s.shape != y.shape or s.ndim != 1:
            raise MetricsError("impression scores/labels must be parallel 1-d sequences")
        n_pos = int(y.sum())
        n_neg = int(y.size - n_pos)
        if n_pos == 0 or n_neg == 0:
            skipped += 1
            continue
        ranks = rankdata(s)  # average ranks on ties
        rank_sum = float(ranks[y == 1].sum())
        values.append((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))
    return AucResult(_mean(values), len(values), skipped)


ABSENT = "absent"


@dataclass
class MetricsReport:
    """Per-strategy metric values plus wall-clock timing.

    `strategies` maps strategy name -> metric name -> value (None = absent).
    Timing lives in its own section so deterministic outputs can be compared
    with the one non-deterministic piece split off.
    """

    strategies: dict[str, dict[str, Optional[float]]] = field(default_factory=dict)
    timing: dict[str, dict[str, float]] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    _PREFERRED = (
        "activation",
        "calibration_category",
        "calibration_complexity",
        "fragmentation",
        "alternative_voices",
        "representation",
        "auc",
        "full_set_rate",
    )

    def columns(self) -> list[str]:
        seen = []
        for row in self.strategies.values():
            for k in row:
                if k not in seen:
                    seen.append(k)
        head = [c for c in self._PREFERRED if c in seen]
        return head + sorted(k for k in seen if k not in self._PREFERRED)

    def to_tsv(self) -> str:
        cols = self.columns()
        lines = ["\t".join(["strategy"] + cols)]
        for name in sorted(self.strategies):
            row = self.strategies[name]
            cells = [name]
            for c in cols:
                v = row.get(c)
                cells.append(ABSENT if v is None else f"{v:.6f}")
            lines.append("\t".join(cells))
        return "\n".join(lines) + "\n"

    def to_json_dict(self) -> dict:
        return {
            "strategies": {
                name: {k: row[k] for k in sorted(row)} for name, row in sorted(self.strategies.items())
            },
            "meta": self.meta,
            "timing": self.timing,
        }

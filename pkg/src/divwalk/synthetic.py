"""Seeded synthetic corpus/behavior generation with controllable bucket mixes."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .corpus import Article, BehaviorRecord, Corpus, Impression, PartyRegistry

GOVERNMENT = ("gov_a", "gov_b", "gov_c")
OPPOSITION = ("opp_a", "opp_b", "opp_c")
INDEPENDENT = ("ind_a", "ind_b")

DEFAULT_REGISTRY = PartyRegistry(
    government=frozenset(GOVERNMENT), opposition=frozenset(OPPOSITION)
)

_SENTIMENT_INTERVALS = ((-1.0, -0.5), (-0.5, 0.0), (0.0, 0.5), (0.5, 1.0))


@dataclass(frozen=True)
class SyntheticMix:
    """Generation knobs; the default bucket mixes mirror a balanced newsroom."""

    sentiment: tuple[float, float, float, float] = (0.2, 0.3, 0.3, 0.2)
    # gov, opp, gov_and_opp, independent_foreign, none
    party: tuple[float, float, float, float, float] = (0.15, 0.15, 0.15, 0.15, 0.40)
    n_categories: int = 6
    n_stories: int = 200
    cold_fraction: float = 0.05
    history_range: tuple[int, int] = (8, 30)
    impressions_per_user: int = 2
    impression_size: int = 5
    click_rate: float = 0.35
    embedding_dim: int = 16

    def __post_init__(self):
        for props in (self.sentiment, self.party):
            if any(p < 0 for p in props):
                raise ValueError(f"negative proportion in mix: {props}")
            if abs(sum(props) - 1.0) > 1e-9:
                raise ValueError(f"mix proportions must sum to 1: {props}")
        if not 0.0 <= self.cold_fraction < 1.0:
            raise ValueError("cold_fraction must be in [0, 1)")


def _party_mentions(bucket: int, rng: np.random.Generator) -> frozenset[str]:
    if bucket == 0:  # gov
        n = 1 + int(rng.integers(2))
        return frozenset(rng.choice(GOVERNMENT, size=n, replace=False))
    if bucket == 1:  # opp
        n = 1 + int(rng.integers(2))
        return frozenset(rng.choice(OPPOSITION, size=n, replace=False))
    if bucket == 2:  # both
        return frozenset({str(rng.choice(GOVERNMENT)), str(rng.choice(OPPOSITION))})
    if bucket == 3:  # independent/foreign dominates any domestic co-mention
        out = {str(rng.choice(INDEPENDENT))}
        if rng.random() < 0.3:
            out.add(str(rng.choice(GOVERNMENT + OPPOSITION)))
        return frozenset(out)
    return frozenset()


def generate_synthetic(
    n_articles: int,
    n_users: int,
    mix: Optional[SyntheticMix] = None,
    seed: int = 0,
) -> tuple[Corpus, tuple[BehaviorRecord, ...], PartyRegistry]:
    """Build a corpus and behavior log with the requested bucket mixes.

    The trailing cold_fraction of articles receives no interactions at all,
    so they exercise the similarity-based graph augmentation. Popularity is
    Zipf-ish, which keeps the click graph well connected. Deterministic per
    seed.
    """
    if n_articles < 1:
        raise ValueError("n_articles must be >= 1")
    if n_users < 0:
        raise ValueError("n_users must be >= 0")
    mix = mix or SyntheticMix()
    rng = np.random.default_rng(seed)

    centroids = rng.normal(size=(mix.n_categories, mix.embedding_dim))
    cat_weights = 1.0 / np.arange(1, mix.n_categories + 1)
    cat_weights /= cat_weights.sum()

    sent_buckets = rng.choice(4, size=n_articles, p=mix.sentiment)
    party_buckets = rng.choice(5, size=n_articles, p=mix.party)
    categories = rng.choice(mix.n_categories, size=n_articles, p=cat_weights)

    articles = []
    for i in range(n_articles):
        lo, hi = _SENTIMENT_INTERVALS[sent_buckets[i]]
        emb = centroids[categories[i]] + 0.8 * rng.normal(size=mix.embedding_dim)
        emb = emb / np.linalg.norm(emb)
        articles.append(
            Article(
                id=f"a{i:06d}",
                category=f"c{categories[i]:02d}",
                sentiment_score=float(rng.uniform(lo, hi)),
                party_mentions=_party_mentions(int(party_buckets[i]), rng),
                complexity=float(rng.uniform(5.0, 60.0)),
                story_id=f"s{int(rng.integers(mix.n_stories)):05d}",
                published_at=1.7e9 + float(rng.uniform(0, 30 * 86400)),
                embedding=tuple(float(x) for x in emb),
                minority_mentions=int(rng.poisson(0.4)),
                majority_mentions=int(rng.poisson(1.2)),
            )
        )
    corpus = Corpus(articles)

    n_cold = int(math.floor(mix.cold_fraction * n_articles))
    warm_ids = [a.id for a in articles[: n_articles - n_cold]]
    if n_users and not warm_ids:
        raise ValueError("cold_fraction leaves no warm articles to interact with")
    pop = 1.0 / np.arange(1, len(warm_ids) + 1) ** 0.8
    pop /= pop.sum()

    def sample_warm(k: int, exclude: set[str]) -> list[str]:
        picked: list[str] = []
        seen = set(exclude)
        draws = rng.choice(len(warm_ids), size=min(4 * k + 8, 4 * len(warm_ids)), p=pop)
        for d in draws:
            wid = warm_ids[d]
            if wid not in seen:
                picked.append(wid)
                seen.add(wid)
                if len(picked) == k:
                    return picked
        for wid in warm_ids:  # top up deterministically if the biased draws ran dry
            if wid not in seen:
                picked.append(wid)
                seen.add(wid)
                if len(picked) == k:
                    break
        return picked

    behaviors = []
    lo, hi = mix.history_range
    for j in range(n_users):
        h_len = int(rng.integers(lo, hi + 1)) if hi >= lo else lo
        h_len = min(h_len, len(warm_ids))
        history = tuple(sample_warm(h_len, set()))
        impressions = []
        used = set(history)
        for _ in range(mix.impressions_per_user):
            size = min(mix.impression_size, len(warm_ids) - len(used))
            if size < 2:
                break
            items = sample_warm(size, used)
            used.update(items)
            clicks = rng.random(len(items)) < mix.click_rate
            if not clicks.any():
                clicks[0] = True
            if clicks.all():
                clicks[-1] = False
            impressions.extend(
                Impression(article_id=i, clicked=bool(c)) for i, c in zip(items, clicks)
            )
        behaviors.append(
            BehaviorRecord(
                user_id=f"u{j:05d}",
                history=history,
                impressions=tuple(impressions),
                timestamp=1.7e9 + j,
            )
        )
    return corpus, tuple(behaviors), DEFAULT_REGISTRY

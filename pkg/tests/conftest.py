import numpy as np
import pytest

from divwalk.corpus import (
    Article,
    BehaviorRecord,
    Corpus,
    Impression,
    NTDDimension,
    NTDSpec,
    PartyRegistry,
    compile_ntd,
)
from divwalk.graph import InteractionGraph, build_graph
from divwalk.synthetic import generate_synthetic


@pytest.fixture
def two_user_graph():
    """u1 clicked {a, b}, u2 clicked {b, c}."""
    return build_graph(
        [
            BehaviorRecord("u1", ("a", "b")),
            BehaviorRecord("u2", ("b", "c")),
        ]
    )


@pytest.fixture
def registry():
    return PartyRegistry(
        government=frozenset({"gov_a", "gov_b"}),
        opposition=frozenset({"opp_a", "opp_b"}),
    )


def make_article(i, category="news", sentiment=0.0, parties=(), **kw):
    return Article(
        id=i,
        category=category,
        sentiment_score=sentiment,
        party_mentions=frozenset(parties),
        **kw,
    )


@pytest.fixture
def toy_corpus(registry):
    # one article per (sentiment bucket x party bucket) pair, plus embeddings
    sentiments = (-0.8, -0.2, 0.2, 0.8)
    parties = ((("gov_a",)), (("opp_a",)), (("gov_a", "opp_b")), (("other",)), ())
    arts = []
    rng = np.random.default_rng(42)
    k = 0
    for s in sentiments:
        for p in parties:
            arts.append(
                make_article(
                    f"t{k:02d}",
                    category=("politics", "sport", "tech")[k % 3],
                    sentiment=s,
                    parties=p,
                    complexity=float(k),
                    story_id=f"s{k // 4}",
                    published_at=1000.0 + k,
                    embedding=tuple(rng.normal(size=8)),
                )
            )
            k += 1
    return Corpus(arts)


@pytest.fixture
def standard_ntd():
    return NTDSpec(
        (
            NTDDimension(
                "sentiment",
                "sentiment_bucket",
                (
                    ("negative", 0.2),
                    ("somewhat_negative", 0.3),
                    ("somewhat_positive", 0.3),
                    ("positive", 0.2),
                ),
            ),
            NTDDimension(
                "party",
                "party_bucket",
                (
                    ("gov", 0.15),
                    ("opp", 0.15),
                    ("gov_and_opp", 0.15),
                    ("independent_foreign", 0.15),
                    ("none", 0.40),
                ),
            ),
        )
    )


@pytest.fixture
def standard_compiled(standard_ntd):
    return compile_ntd(standard_ntd, 20)


@pytest.fixture(scope="session")
def synth_small():
    """400 articles / 60 users; enough supply for a full 20-item NTD list."""
    return generate_synthetic(400, 60, seed=7)

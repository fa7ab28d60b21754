"""Article data model, ingestion, attribute bucketing, and target-distribution config."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence


class CorpusError(ValueError):
    """Raised for invalid article/behavior records or invalid NTD configuration."""


SENTIMENT_BUCKET_LABELS = ("negative", "somewhat_negative", "somewhat_positive", "positive")


class PartyBucket(Enum):
    GOV = "gov"
    OPP = "opp"
    GOV_AND_OPP = "gov_and_opp"
    INDEPENDENT_FOREIGN = "independent_foreign"
    NONE = "none"

    @property
    def label(self) -> str:
        return self.value


PARTY_BUCKET_LABELS = tuple(b.value for b in PartyBucket)


@dataclass(frozen=True)
class Article:
    id: str
    category: str
    sentiment_score: float
    party_mentions: frozenset[str] = frozenset()
    complexity: Optional[float] = None
    story_id: Optional[str] = None
    published_at: Optional[float] = None
    embedding: Optional[tuple[float, ...]] = None
    minority_mentions: Optional[int] = None
    majority_mentions: Optional[int] = None

    def __post_init__(self):
        if not -1.0 <= self.sentiment_score <= 1.0:
            raise CorpusError(f"sentiment out of range: {self.sentiment_score!r}")
        if self.complexity is not None and self.complexity < 0:
            raise CorpusError(f"complexity must be non-negative: {self.complexity!r}")
        for n in (self.minority_mentions, self.majority_mentions):
            if n is not None and n < 0:
                raise CorpusError(f"mention counts must be non-negative: {n!r}")


class Corpus:
    """Immutable collection of articles with unique ids and a consistent embedding dimension."""

    def __init__(self, articles: Iterable[Article]):
        articles = tuple(articles)
        by_id: dict[str, Article] = {}
        emb_dim = None
        for a in articles:
            if a.id in by_id:
                raise CorpusError(f"duplicate article id: {a.id!r}")
            by_id[a.id] = a
            if a.embedding is not None:
                if emb_dim is None:
                    emb_dim = len(a.embedding)
                elif len(a.embedding) != emb_dim:
                    raise CorpusError(
                        f"embedding dimension mismatch for {a.id!r}: "
                        f"{len(a.embedding)} != {emb_dim}"
                    )
        self._articles = articles
        self._by_id = by_id
        self.embedding_dim = emb_dim

    def __len__(self) -> int:
        return len(self._articles)

    def __iter__(self) -> Iterator[Article]:
        return iter(self._articles)

    def __contains__(self, article_id: str) -> bool:
        return article_id in self._by_id

    def __getitem__(self, article_id: str) -> Article:
        return self._by_id[article_id]

    def get(self, article_id: str) -> Optional[Article]:
        return self._by_id.get(article_id)

    def ids(self) -> tuple[str, ...]:
        return tuple(a.id for a in self._articles)

    def __eq__(self, other) -> bool:
        return isinstance(other, Corpus) and self._articles == other._articles


@dataclass(frozen=True)
class PartyRegistry:
    government: frozenset[str]
    opposition: frozenset[str]

    def __post_init__(self):
        overlap = self.government & self.opposition
        if overlap:
            raise CorpusError(f"parties listed as both government and opposition: {sorted(overlap)}")


def sentiment_bucket(score: float) -> int:
    """Map a sentiment score in [-1, 1] to bucket 1..4.

    Buckets are [-1, -0.5), [-0.5, 0), [0, 0.5), [0.5, 1]; the last interval
    is closed on both ends.
    """
    if not -1.0 <= score <= 1.0:
        raise ValueError(f"sentiment score outside [-1, 1]: {score!r}")
    if score < -0.5:
        return 1
    if score < 0.0:
        return 2
    if score < 0.5:
        return 3
    return 4


def party_bucket(mentions: Iterable[str], registry: PartyRegistry) -> PartyBucket:
    """Classify an article's party mentions against a government/opposition registry.

    Any mention outside the registry dominates (independent/foreign), then mixed
    government+opposition, then single-side, then none. Total on all inputs.
    """
    mentions = frozenset(mentions)
    if not mentions:
        return PartyBucket.NONE
    known = registry.government | registry.opposition
    if mentions - known:
        return PartyBucket.INDEPENDENT_FOREIGN
    in_gov = bool(mentions & registry.government)
    in_opp = bool(mentions & registry.opposition)
    if in_gov and in_opp:
        return PartyBucket.GOV_AND_OPP
    return PartyBucket.GOV if in_gov else PartyBucket.OPP


@dataclass(frozen=True)
class NTDDimension:
    """One target dimension: an attribute and an ordered bucket -> proportion list."""

    name: str
    attribute: str  # "sentiment_bucket", "party_bucket", "category", or an Article field
    buckets: tuple[tuple[str, float], ...]

    def __post_init__(self):
        if not self.buckets:
            raise CorpusError(f"dimension {self.name!r} has no buckets")
        labels = [b for b, _ in self.buckets]
        if len(set(labels)) != len(labels):
            raise CorpusError(f"dimension {self.name!r} has duplicate bucket labels")
        props = [p for _, p in self.buckets]
        if any(p < 0 for p in props):
            raise CorpusError(f"dimension {self.name!r} has negative proportions")
        if abs(sum(props) - 1.0) > 1e-9:
            raise CorpusError(
                f"dimension {self.name!r} proportions sum to {sum(props)!r}, expected 1.0"
            )
        if self.attribute == "sentiment_bucket" and len(self.buckets) != 4:
            raise CorpusError("sentiment_bucket dimensions need exactly 4 buckets")
        if self.attribute == "party_bucket" and set(labels) != set(PARTY_BUCKET_LABELS):
            raise CorpusError(
                f"party_bucket dimensions need buckets {sorted(PARTY_BUCKET_LABELS)}"
            )

    @cached_property
    def labels(self) -> tuple[str, ...]:
        return tuple(b for b, _ in self.buckets)

    @cached_property
    def proportions(self) -> tuple[float, ...]:
        return tuple(p for _, p in self.buckets)


@dataclass(frozen=True)
class NTDSpec:
    dimensions: tuple[NTDDimension, ...]

    def __post_init__(self):
        names = [d.name for d in self.dimensions]
        if len(set(names)) != len(names):
            raise CorpusError("duplicate dimension names in NTD")


@dataclass(frozen=True)
class CompiledNTD:
    """Integer per-bucket targets for a concrete list size."""

    list_size: int
    dimensions: tuple[NTDDimension, ...]
    counts: tuple[tuple[int, ...], ...]  # aligned with dimensions/buckets

    def counts_for(self, name: str) -> tuple[int, ...]:
        for dim, cnt in zip(self.dimensions, self.counts):
            if dim.name == name:
                return cnt
        raise KeyError(name)


def largest_remainder(proportions: Sequence[float], total: int) -> tuple[int, ...]:
    """Apportion `total` units to proportions: floor quotas, leftovers by
    descending fractional part, ties by declaration order."""
    quotas = [p * total for p in proportions]
    counts = [math.floor(q) for q in quotas]
    leftover = total - sum(counts)
    order = sorted(range(len(quotas)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[:leftover]:
        counts[i] += 1
    return tuple(counts)


def compile_ntd(spec: NTDSpec, list_size: int) -> CompiledNTD:
    """Turn target proportions into integer per-bucket counts summing to list_size."""
    if list_size <= 0:
        raise ValueError(f"list_size must be positive: {list_size}")
    counts = tuple(largest_remainder(d.proportions, list_size) for d in spec.dimensions)
    return CompiledNTD(list_size=list_size, dimensions=spec.dimensions, counts=counts)


def article_bucket_label(article: Article, dim: NTDDimension, registry: Optional[PartyRegistry]) -> str:
    """Bucket label of `article` in dimension `dim`; raises if it falls outside the declared buckets."""
    if dim.attribute == "sentiment_bucket":
        return dim.labels[sentiment_bucket(article.sentiment_score) - 1]
    if dim.attribute == "party_bucket":
        if registry is None:
            raise CorpusError("party_bucket dimension requires a PartyRegistry")
        label = party_bucket(article.party_mentions, registry).label
    elif dim.attribute == "category":
        label = article.category
    else:
        value = getattr(article, dim.attribute, None)
        if value is None:
            raise CorpusError(f"article {article.id!r} lacks attribute {dim.attribute!r}")
        label = str(value)
    if label not in dim.labels:
        raise CorpusError(
            f"article {article.id!r} falls outside dimension {dim.name!r} "
            f"(value {label!r} not among declared buckets)"
        )
    return label


# --- ingestion -------------------------------------------------------------

_REQUIRED_FIELDS = ("id", "category", "sentiment_score", "party_mentions")


def _parse_article(record: dict, row: int, errors: list[str]) -> Optional[Article]:
    for f in _REQUIRED_FIELDS:
        if f not in record or record[f] is None:
            errors.append(f"row {row}: missing required field {f!r}")
            return None
    try:
        mentions = record["party_mentions"]
        if isinstance(mentions, str):
            mentions = json.loads(mentions) if mentions.strip() else []
        emb = record.get("embedding")
        if isinstance(emb, str):
            emb = json.loads(emb) if emb.strip() else None
        article_id = str(record["id"])
        if not article_id or article_id.split() != [article_id]:
            errors.append(f"row {row}: article id must be non-empty without whitespace")
            return None

        def opt(key, conv):
            v = record.get(key)
            if v is None or v == "":
                return None
            return conv(v)

        return Article(
            id=article_id,
            category=str(record["category"]),
            sentiment_score=float(record["sentiment_score"]),
            party_mentions=frozenset(str(m) for m in mentions),
            complexity=opt("complexity", float),
            story_id=opt("story_id", str),
            published_at=opt("published_at", float),
            embedding=tuple(float(x) for x in emb) if emb else None,
            minority_mentions=opt("minority_mentions", int),
            majority_mentions=opt("majority_mentions", int),
        )
    except (CorpusError, ValueError, TypeError, json.JSONDecodeError) as exc:
        errors.append(f"row {row}: {exc}")
        return None


def load_articles(path: str | Path, format: str = "jsonl") -> Corpus:
    """Load and validate an article file.

    Parameters
    ----------
    path: file with one record per line (jsonl) or a csv with a header row.
    format: "jsonl" or "csv".

    Raises CorpusError listing every offending row (1-based data rows).
    """
    path = Path(path)
    errors: list[str] = []
    articles: list[Article] = []
    seen: dict[str, int] = {}
    if format == "jsonl":
        records = _iter_jsonl(path, errors)
    elif format == "csv":
        with path.open(newline="") as fh:
            records = list(enumerate(csv.DictReader(fh), start=1))
    else:
        raise ValueError(f"unknown format: {format!r}")
    for row, record in records:
        if record is None:
            continue
        a = _parse_article(record, row, errors)
        if a is None:
            continue
        if a.id in seen:
            errors.append(f"row {row}: duplicate id {a.id!r} (first seen at row {seen[a.id]})")
            continue
        seen[a.id] = row
        articles.append(a)
    if errors:
        raise CorpusError(f"{len(errors)} invalid article rows:\n" + "\n".join(errors[:20]))
    return Corpus(articles)


def _iter_jsonl(path: Path, errors: list[str]):
    records = []
    with path.open() as fh:
        for row, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append((row, json.loads(line)))
            except json.JSONDecodeError as exc:
                errors.append(f"row {row}: invalid json ({exc})")
                records.append((row, None))
    return records


def save_articles(corpus: Corpus, path: str | Path) -> None:
    """Write a corpus as jsonl; load_articles on the output round-trips exactly."""
    with Path(path).open("w") as fh:
        for a in corpus:
            record = {
                "id": a.id,
                "category": a.category,
                "sentiment_score": a.sentiment_score,
                "party_mentions": sorted(a.party_mentions),
            }
            for key in ("complexity", "story_id", "published_at", "minority_mentions", "majority_mentions"):
                v = getattr(a, key)
                if v is not None:
                    record[key] = v
            if a.embedding is not None:
                record["embedding"] = list(a.embedding)
            fh.write(json.dumps(record) + "\n")


@dataclass(frozen=True)
class Impression:
    article_id: str
    clicked: bool


@dataclass(frozen=True)
class BehaviorRecord:
    user_id: str
    history: tuple[str, ...]
    impressions: tuple[Impression, ...] = ()
    timestamp: Optional[float] = None

    def clicked_ids(self) -> tuple[str, ...]:
        return tuple(i.article_id for i in self.impressions if i.clicked)


def load_behaviors(path: str | Path) -> tuple[BehaviorRecord, ...]:
    """Load a behavior file: jsonl records with user_id, history, impressions, timestamp."""
    errors: list[str] = []
    records: list[BehaviorRecord] = []
    for row, rec in _iter_jsonl(Path(path), errors):
        if rec is None:
            continue
        try:
            user_id = str(rec["user_id"])
            history = tuple(str(i) for i in rec.get("history", []))
            impressions = tuple(
                Impression(article_id=str(i["article_id"]), clicked=bool(int(i["clicked"])))
                for i in rec.get("impressions", [])
            )
            ts = rec.get("timestamp")
            records.append(BehaviorRecord(user_id, history, impressions, float(ts) if ts is not None else None))
        except (KeyError, ValueError, TypeError) as exc:
            errors.append(f"row {row}: {exc!r}")
    if errors:
        raise CorpusError(f"{len(errors)} invalid behavior rows:\n" + "\n".join(errors[:20]))
    return tuple(records)


def save_behaviors(records: Iterable[BehaviorRecord], path: str | Path) -> None:
    with Path(path).open("w") as fh:
        for r in records:
            rec = {
                "user_id": r.user_id,
                "history": list(r.history),
                "impressions": [
                    {"article_id": i.article_id, "clicked": int(i.clicked)} for i in r.impressions
                ],
            }
            if r.timestamp is not None:
                rec["timestamp"] = r.timestamp
            fh.write(json.dumps(rec) + "\n")


# --- NTD / registry config documents ---------------------------------------

def registry_from_dict(doc: dict) -> PartyRegistry:
    return PartyRegistry(
        government=frozenset(str(p) for p in doc.get("government", [])),
        opposition=frozenset(str(p) for p in doc.get("opposition", [])),
    )


def ntd_from_dict(doc: dict) -> NTDSpec:
    dims = []
    for d in doc["dimensions"]:
        buckets = tuple((str(label), float(p)) for label, p in d["buckets"])
        dims.append(NTDDimension(name=str(d["name"]), attribute=str(d["attribute"]), buckets=buckets))
    return NTDSpec(dimensions=tuple(dims))


def ntd_to_dict(spec: NTDSpec) -> dict:
    return {
        "dimensions": [
            {"name": d.name, "attribute": d.attribute, "buckets": [[b, p] for b, p in d.buckets]}
            for d in spec.dimensions
        ]
    }

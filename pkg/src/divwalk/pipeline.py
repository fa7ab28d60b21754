"""Experiment orchestration: strategies, evaluation, reporting, timing."""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

from . import metrics as M
from .corpus import (
    Article,
    BehaviorRecord,
    CompiledNTD,
    Corpus,
    NTDSpec,
    PartyRegistry,
    compile_ntd,
    load_articles,
    load_behaviors,
    ntd_from_dict,
    registry_from_dict,
)
from .graph import InteractionGraph, augment_cold_items, build_graph
from .rerank import (
    RerankConfig,
    embedding_similarity,
    gkl_rerank,
    mmr_rerank,
    onehot_similarity,
    pm2_rerank,
    rank_by_score,
)
from .sampler import SamplerStatus, bucket_assignments, recommend_drdw
from .walker import filter_history, rdw_scores

KNOWN_STRATEGIES = ("d-rdw", "rdw", "random")
EXTERNAL_METHODS = ("score", "gkl", "pm2", "mmr")


class PipelineError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    articles: str
    behaviors: str
    registry: dict
    ntd: dict
    format: str = "jsonl"
    list_size: int = 20
    hops: int = 3
    max_hops: int = 9
    beta: float = 0.0
    objective: str = "WALK_PROBABILITY"
    strategies: tuple[str, ...] = ("d-rdw",)
    rerank: RerankConfig = field(default_factory=RerankConfig)
    rank_discount: bool = True
    spacing: bool = False
    seed: int = 0
    threads: int = 1
    output_dir: Optional[str] = None
    external_scores: Optional[str] = None

    def __post_init__(self):
        if self.list_size < 1:
            raise PipelineError("list_size must be >= 1")
        if self.hops < 1 or self.hops % 2 == 0:
            raise PipelineError("hops must be odd and >= 1")
        if self.max_hops < self.hops or self.max_hops % 2 == 0:
            raise PipelineError("max_hops must be odd and >= hops")
        if self.threads < 1:
            raise PipelineError("threads must be >= 1")
        for s in self.strategies:
            if s in KNOWN_STRATEGIES:
                continue
            kind, _, method = s.partition(":")
            if kind == "external" and method in EXTERNAL_METHODS:
                continue
            raise PipelineError(f"unknown strategy: {s!r}")

    @classmethod
    def from_dict(cls, doc: dict, base_dir: Optional[Path] = None) -> "ExperimentConfig":
        doc = dict(doc)
        rerank_doc = doc.pop("rerank", None)
        rerank = RerankConfig(**rerank_doc) if rerank_doc else RerankConfig()
        strategies = tuple(doc.pop("strategies", ("d-rdw",)))
        cfg = cls(rerank=rerank, strategies=strategies, **doc)
        if base_dir is not None:
            resolved = {}
            for key in ("articles", "behaviors", "external_scores", "output_dir"):
                val = getattr(cfg, key)
                if val is not None and not Path(val).is_absolute():
                    resolved[key] = str(base_dir / val)
            if resolved:
                cfg = replace(cfg, **resolved)
        return cfg

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        text = path.read_text()
        if path.suffix in (".yaml", ".yml"):
            import yaml

            doc = yaml.safe_load(text)
        else:
            doc = json.loads(text)
        return cls.from_dict(doc, base_dir=path.parent)


@dataclass
class RunRecord:
    strategy: str
    lists: dict[str, tuple[str, ...]]
    scores: dict[str, tuple[float, ...]]
    status: dict[str, str]
    timing: dict[str, float] = field(default_factory=dict)


def _per_user_seed(seed: int, strategy: str, idx: int) -> int:
    ss = np.random.SeedSequence([seed, sum(strategy.encode()), idx])
    return int(ss.generate_state(1)[0])


def random_baseline(
    pool: Sequence[str],
    list_size: int,
    seed: int,
    histories: Mapping[str, Iterable[str]],
) -> dict[str, tuple[str, ...]]:
    """Seeded uniform sample without replacement per user, history excluded."""
    pool = sorted(pool)
    out = {}
    for idx, user in enumerate(sorted(histories)):
        hist = set(histories[user])
        eligible = [i for i in pool if i not in hist]
        if len(eligible) < list_size:
            raise PipelineError(
                f"pool too small for user {user!r}: {len(eligible)} eligible < {list_size}"
            )
        rng = np.random.default_rng(_per_user_seed(seed, "random", idx))
        picks = rng.choice(len(eligible), size=list_size, replace=False)
        out[user] = tuple(eligible[int(p)] for p in picks)
    return out


def ingest_external_scores(path: str | Path, corpus: Corpus) -> dict[str, dict[str, float]]:
    """Read (user id, article id, score) rows, tab-separated, grouped per user."""
    out: dict[str, dict[str, float]] = {}
    errors = []
    with Path(path).open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                errors.append(f"line {lineno}: expected 3 tab-separated fields")
                continue
            user, item, score = parts
            if item not in corpus:
                errors.append(f"line {lineno}: unknown article id {item!r}")
                continue
            try:
                out.setdefault(user, {})[item] = float(score)
            except ValueError:
                errors.append(f"line {lineno}: bad score {score!r}")
    if errors:
        raise PipelineError(f"{len(errors)} bad score rows:\n" + "\n".join(errors[:20]))
    return out


def generate_synthetic(n_articles: int, n_users: int, mix=None, seed: int = 0):
    """Re-exported from the synthetic module; see there for the knobs."""
    from .synthetic import generate_synthetic as gen

    return gen(n_articles, n_users, mix=mix, seed=seed)


# --- strategy execution -------------------------------------------------------


def _interactions(rec: BehaviorRecord) -> set[str]:
    return set(rec.history) | set(rec.clicked_ids())


def _run_drdw(
    graph: InteractionGraph,
    corpus: Corpus,
    ntd: NTDSpec,
    registry: PartyRegistry,
    behaviors: Sequence[BehaviorRecord],
    cfg: ExperimentConfig,
    attributes: Mapping[str, tuple[int, ...]],
) -> RunRecord:
    by_user = {r.user_id: r for r in behaviors}
    users = sorted(by_user)
    published = {a.id: a.published_at for a in corpus}

    def one(idx_user):
        idx, user = idx_user
        if user not in graph.user_index:
            return user, (), (), SamplerStatus.EMPTY.value
        rec = recommend_drdw(
            graph,
            user,
            corpus,
            ntd,
            registry,
            list_size=cfg.list_size,
            hops=cfg.hops,
            max_hops=cfg.max_hops,
            beta=cfg.beta,
            objective=cfg.objective,
            objective_values=published if cfg.objective != "WALK_PROBABILITY" else None,
            seed=_per_user_seed(cfg.seed, "d-rdw", idx),
            history=_interactions(by_user[user]),
            attributes=attributes,
        )
        return user, rec.ids, rec.scores, rec.status_label

    results = _map_users(one, list(enumerate(users)), cfg.threads)
    return RunRecord(
        strategy="d-rdw",
        lists={u: ids for u, ids, _, _ in results},
        scores={u: sc for u, _, sc, _ in results},
        status={u: st for u, _, _, st in results},
    )


def _run_rdw(graph, behaviors, cfg: ExperimentConfig) -> RunRecord:
    by_user = {r.user_id: r for r in behaviors}
    users = sorted(by_user)

    def one(idx_user):
        _, user = idx_user
        if user not in graph.user_index:
            return user, (), (), "-"
        ws = rdw_scores(graph, user, cfg.hops, cfg.beta)
        ws = filter_history(ws, _interactions(by_user[user]))
        scores = dict(zip(ws.item_ids, (float(v) for v in ws.values)))
        ranked = rank_by_score(list(scores), scores)[: cfg.list_size]
        return user, tuple(ranked), tuple(scores[i] for i in ranked), "-"

    results = _map_users(one, list(enumerate(users)), cfg.threads)
    return RunRecord(
        strategy="rdw",
        lists={u: ids for u, ids, _, _ in results},
        scores={u: sc for u, _, sc, _ in results},
        status={u: st for u, _, _, st in results},
    )


def _run_random(corpus, behaviors, cfg: ExperimentConfig) -> RunRecord:
    histories = {r.user_id: _interactions(r) for r in behaviors}
    lists = random_baseline([a.id for a in corpus], cfg.list_size, cfg.seed, histories)
    return RunRecord(
        strategy="random",
        lists=lists,
        scores={u: tuple(0.0 for _ in ids) for u, ids in lists.items()},
        status={u: "-" for u in lists},
    )


def _run_external(
    method: str,
    corpus: Corpus,
    behaviors: Sequence[BehaviorRecord],
    cfg: ExperimentConfig,
    compiled: CompiledNTD,
    attributes: Mapping[str, tuple[int, ...]],
) -> RunRecord:
    if not cfg.external_scores:
        raise PipelineError("external strategies need external_scores in the config")
    scored = ingest_external_scores(cfg.external_scores, corpus)
    interactions = {r.user_id: _interactions(r) for r in behaviors}
    lists, scores, status = {}, {}, {}
    for user in sorted(scored):
        cands = {
            i: s for i, s in scored[user].items() if i not in interactions.get(user, ())
        }
        if not cands:
            lists[user], scores[user], status[user] = (), (), "-"
            continue
        if method == "score":
            ranked = rank_by_score(list(cands), cands)[: cfg.list_size]
        elif method == "gkl":
            ranked = gkl_rerank(cands, compiled, cfg.rerank.lam, cfg.list_size, attributes, cfg.rerank.aspect)
        elif method == "pm2":
            ranked = pm2_rerank(cands, compiled, cfg.list_size, attributes, cfg.rerank.aspect)
        else:
            sim = (
                embedding_similarity(corpus)
                if cfg.rerank.use_embeddings
                else onehot_similarity(attributes, cfg.rerank.aspect)
            )
            ranked = mmr_rerank(cands, sim, cfg.rerank.lam, cfg.list_size)
        lists[user] = tuple(ranked)
        scores[user] = tuple(cands[i] for i in ranked)
        status[user] = "-"
    return RunRecord(strategy=f"external:{method}", lists=lists, scores=scores, status=status)


def _map_users(fn: Callable, items: list, threads: int) -> list:
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


# --- evaluation ----------------------------------------------------------------


def _score_fn_for(
    strategy: str,
    graph: Optional[InteractionGraph],
    cfg: ExperimentConfig,
    external: Optional[Mapping[str, Mapping[str, float]]],
) -> Callable[[str, int, Sequence[str]], list[float]]:
    """Per-user scores over impression items, used for AUC.

    Walk strategies score by landing probability (0 for unreachable items);
    the random baseline draws seeded uniforms; external uses the given scores.
    """

    def walk(user: str, idx: int, items: Sequence[str]) -> list[float]:
        if graph is None or user not in graph.user_index:
            return [0.0] * len(items)
        smap = rdw_scores(graph, user, cfg.hops, cfg.beta).scores
        return [float(smap.get(i, 0.0)) for i in items]

    def rnd(user: str, idx: int, items: Sequence[str]) -> list[float]:
        rng = np.random.default_rng(_per_user_seed(cfg.seed, "random-auc", idx))
        return [float(x) for x in rng.random(len(items))]

    def ext(user: str, idx: int, items: Sequence[str]) -> list[float]:
        smap = external.get(user, {}) if external else {}
        return [float(smap.get(i, 0.0)) for i in items]

    if strategy in ("d-rdw", "rdw"):
        return walk
    if strategy == "random":
        return rnd
    return ext


def evaluate_lists(
    record: RunRecord,
    corpus: Corpus,
    behaviors: Sequence[BehaviorRecord],
    registry: PartyRegistry,
    compiled: CompiledNTD,
    attributes: Mapping[str, tuple[int, ...]],
    cfg: ExperimentConfig,
    score_fn: Optional[Callable[[str, int, Sequence[str]], list[float]]] = None,
) -> tuple[dict[str, Optional[float]], dict]:
    """All metrics for one strategy's lists. Returns (row, meta)."""
    pool = list(corpus)
    by_user = {r.user_id: r for r in behaviors}
    lists_arts = {
        u: [corpus[i] for i in ids if i in corpus] for u, ids in record.lists.items()
    }
    hist_arts = {
        u: [corpus[i] for i in by_user[u].history if i in corpus]
        for u in record.lists
        if u in by_user
    }
    rd = cfg.rank_discount
    row: dict[str, Optional[float]] = {}
    meta: dict = {}

    row["activation"] = M.activation(lists_arts, pool, rd)
    cal_cat, excl_cat = M.calibration(lists_arts, hist_arts, "category", pool, rd)
    cal_cpx, excl_cpx = M.calibration(lists_arts, hist_arts, "complexity", pool, rd)
    row["calibration_category"] = cal_cat
    row["calibration_complexity"] = cal_cpx
    meta["calibration_excluded_users"] = {"category": excl_cat, "complexity": excl_cpx}
    try:
        row["fragmentation"] = M.fragmentation(lists_arts, rd, seed=cfg.seed)
    except M.MetricsError:
        row["fragmentation"] = None
    row["alternative_voices"] = M.alternative_voices(lists_arts, pool, rd)
    row["representation"] = M.representation(lists_arts, pool, registry, rd)

    for d, dim in enumerate(compiled.dimensions):
        nb = len(dim.labels)
        ginis, ilds = [], []
        for u, ids in record.lists.items():
            known = [i for i in ids if i in attributes]
            if not known:
                continue
            counts = np.zeros(nb)
            for i in known:
                counts[attributes[i][d]] += 1
            ginis.append(M.gini(counts / counts.sum()))
            if len(known) >= 2:
                ilds.append(M.ild(np.eye(nb)[[attributes[i][d] for i in known]]))
        row[f"gini_{dim.name}"] = float(np.mean(ginis)) if ginis else None
        row[f"ild_{dim.name}"] = float(np.mean(ilds)) if ilds else None

    if score_fn is not None:
        impressions = []
        users = sorted(by_user)
        for idx, user in enumerate(users):
            rec = by_user[user]
            if not rec.impressions:
                continue
            items = [imp.article_id for imp in rec.impressions]
            labels = [int(imp.clicked) for imp in rec.impressions]
            impressions.append((score_fn(user, idx, items), labels))
        res = M.auc(impressions)
        row["auc"] = res.value
        meta["auc_impressions"] = {"evaluated": res.evaluated, "skipped": res.skipped}
    else:
        row["auc"] = None

    statuses = [record.status.get(u, "-") for u in record.lists]
    if any(s.startswith(("FULL_SET", "REDUCED_SET", "EMPTY")) for s in statuses):
        full = sum(1 for s in statuses if s == "FULL_SET")
        row["full_set_rate"] = full / len(statuses) if statuses else None
    return row, meta


# --- run -----------------------------------------------------------------------


def _assert_no_history_leak(record: RunRecord, behaviors: Sequence[BehaviorRecord]) -> None:
    inter = {r.user_id: _interactions(r) for r in behaviors}
    for user, ids in record.lists.items():
        leaked = set(ids) & inter.get(user, set())
        if leaked:
            raise PipelineError(
                f"strategy {record.strategy!r} recommended history items to {user!r}: {sorted(leaked)[:5]}"
            )


def run_experiment(config: ExperimentConfig) -> tuple[M.MetricsReport, dict[str, RunRecord]]:
    """Execute every configured strategy and evaluate all metrics.

    Deterministic for a fixed config + seed; wall-clock timing is the single
    exception and is confined to the report's timing section.
    """
    corpus = load_articles(config.articles, format=config.format)
    behaviors = load_behaviors(config.behaviors)
    registry = registry_from_dict(config.registry)
    ntd = ntd_from_dict(config.ntd)
    compiled = compile_ntd(ntd, config.list_size)
    attributes = bucket_assignments(corpus, compiled, registry)

    t0 = time.perf_counter()
    graph = build_graph(behaviors)
    cold = [a.id for a in corpus if a.id not in graph.item_index or graph.item_degree(a.id) == 0]
    if cold:
        graph = augment_cold_items(graph, corpus)
    graph_seconds = time.perf_counter() - t0

    external = (
        ingest_external_scores(config.external_scores, corpus)
        if config.external_scores and any(s.startswith("external:") for s in config.strategies)
        else None
    )

    report = M.MetricsReport()
    records: dict[str, RunRecord] = {}
    for strategy in config.strategies:
        t1 = time.perf_counter()
        if strategy == "d-rdw":
            record = _run_drdw(graph, corpus, ntd, registry, behaviors, config, attributes)
        elif strategy == "rdw":
            record = _run_rdw(graph, behaviors, config)
        elif strategy == "random":
            record = _run_random(corpus, behaviors, config)
        else:
            method = strategy.partition(":")[2]
            record = _run_external(method, corpus, behaviors, config, compiled, attributes)
        rec_seconds = time.perf_counter() - t1

        _assert_no_history_leak(record, behaviors)
        t2 = time.perf_counter()
        score_fn = _score_fn_for(strategy, graph, config, external)
        row, meta = evaluate_lists(
            record, corpus, behaviors, registry, compiled, attributes, config, score_fn
        )
        eval_seconds = time.perf_counter() - t2

        report.strategies[strategy] = row
        report.meta[strategy] = meta
        timing = {
            "train_seconds": graph_seconds if strategy in ("d-rdw", "rdw") else 0.0,
            "recommend_seconds": rec_seconds,
            "evaluate_seconds": eval_seconds,
        }
        report.timing[strategy] = timing
        record.timing = dict(timing)
        records[strategy] = record

    if config.output_dir:
        write_outputs(Path(config.output_dir), report, records)
    return report, records


def write_outputs(out_dir: Path, report: M.MetricsReport, records: Mapping[str, RunRecord]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for strategy, record in sorted(records.items()):
        fname = "recommendations_" + strategy.replace(":", "_") + ".tsv"
        with (out_dir / fname).open("w") as fh:
            fh.write("user_id\trank\tarticle_id\tscore\tstatus\n")
            for user in sorted(record.lists):
                st = record.status.get(user, "-")
                for rank, (item, score) in enumerate(
                    zip(record.lists[user], record.scores[user]), start=1
                ):
                    fh.write(f"{user}\t{rank}\t{item}\t{score:.10g}\t{st}\n")
    (out_dir / "report.tsv").write_text(report.to_tsv())
    (out_dir / "report.json").write_text(
        json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n"
    )

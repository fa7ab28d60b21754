"""Command-line interface: run experiments, evaluate lists, inspect one user."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .corpus import compile_ntd, load_articles, load_behaviors, ntd_from_dict, registry_from_dict
from .graph import augment_cold_items, build_graph
from .metrics import MetricsReport
from .pipeline import ExperimentConfig, RunRecord, evaluate_lists, run_experiment, write_outputs
from .sampler import bucket_assignments, recommend_drdw
from .walker import filter_history, rdw_scores, top_scores


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="divwalk", description=__doc__)
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--threads", type=int, default=None, help="override worker count")
    p.add_argument("--output", default=None, help="override the output directory")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run configured strategies and evaluate them")
    run.add_argument("--config", required=True)

    ev = sub.add_parser("evaluate", help="evaluate an existing recommendations file")
    ev.add_argument("--recs", required=True)
    ev.add_argument("--config", required=True)

    sm = sub.add_parser("sample", help="solve one user end-to-end and show the selection")
    sm.add_argument("--user", required=True)
    sm.add_argument("--config", required=True)

    wk = sub.add_parser("walk", help="print a user's top walk scores")
    wk.add_argument("--user", required=True)
    wk.add_argument("--config", required=True)
    wk.add_argument("--hops", type=int, default=None)
    wk.add_argument("--top", type=int, default=20)
    wk.add_argument("--keep-history", action="store_true")

    sy = sub.add_parser("synth", help="generate a synthetic dataset + ready-to-run config")
    sy.add_argument("--out", required=True)
    sy.add_argument("--articles", type=int, default=5000)
    sy.add_argument("--users", type=int, default=2000)
    sy.add_argument("--seed", type=int, default=0, dest="synth_seed")
    sy.add_argument("--cold", type=float, default=0.05)
    return p


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.threads is not None:
        overrides["threads"] = args.threads
    if args.output is not None:
        overrides["output_dir"] = args.output
    return replace(cfg, **overrides) if overrides else cfg


def _prepared(cfg: ExperimentConfig):
    corpus = load_articles(cfg.articles, format=cfg.format)
    behaviors = load_behaviors(cfg.behaviors)
    registry = registry_from_dict(cfg.registry)
    ntd = ntd_from_dict(cfg.ntd)
    graph = build_graph(behaviors)
    cold = [a.id for a in corpus if a.id not in graph.item_index or graph.item_degree(a.id) == 0]
    if cold:
        graph = augment_cold_items(graph, corpus)
    return corpus, behaviors, registry, ntd, graph


def _cmd_run(args) -> int:
    cfg = _load_config(args)
    report, _ = run_experiment(cfg)
    sys.stdout.write(report.to_tsv())
    if cfg.output_dir:
        print(f"outputs written to {cfg.output_dir}", file=sys.stderr)
    return 0


def _cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    corpus, behaviors, registry, ntd, _ = _prepared(cfg)
    compiled = compile_ntd(ntd, cfg.list_size)
    attributes = bucket_assignments(corpus, compiled, registry)

    lists: dict[str, list[tuple[int, str, float]]] = {}
    status: dict[str, str] = {}
    with open(args.recs) as fh:
        header = fh.readline()
        if not header.startswith("user_id\t"):
            raise SystemExit("recommendations file must start with the user_id header row")
        for line in fh:
            user, rank, item, score, st = line.rstrip("\n").split("\t")
            lists.setdefault(user, []).append((int(rank), item, float(score)))
            status[user] = st
    record = RunRecord(
        strategy="evaluated",
        lists={u: tuple(i for _, i, _ in sorted(rows)) for u, rows in lists.items()},
        scores={u: tuple(s for _, _, s in sorted(rows)) for u, rows in lists.items()},
        status=status,
    )
    row, meta = evaluate_lists(record, corpus, behaviors, registry, compiled, attributes, cfg)
    report = MetricsReport(strategies={"evaluated": row}, meta={"evaluated": meta})
    sys.stdout.write(report.to_tsv())
    if cfg.output_dir:
        write_outputs(Path(cfg.output_dir), report, {})
    return 0


def _cmd_sample(args) -> int:
    cfg = _load_config(args)
    corpus, behaviors, registry, ntd, graph = _prepared(cfg)
    compiled = compile_ntd(ntd, cfg.list_size)
    attributes = bucket_assignments(corpus, compiled, registry)
    by_user = {r.user_id: r for r in behaviors}
    hist = set(by_user[args.user].history) | set(by_user[args.user].clicked_ids()) if args.user in by_user else None
    rec = recommend_drdw(
        graph, args.user, corpus, ntd, registry,
        list_size=cfg.list_size, hops=cfg.hops, max_hops=cfg.max_hops, beta=cfg.beta,
        objective=cfg.objective, seed=cfg.seed, history=hist, attributes=attributes,
    )
    print(f"user\t{args.user}")
    print(f"status\t{rec.status_label}")
    print(f"hops\t{rec.hops_used}")
    for rank, (item, score) in enumerate(zip(rec.ids, rec.scores), start=1):
        print(f"{rank}\t{item}\t{score:.6g}")
    print("bucket histogram (selected core vs target):")
    for d, dim in enumerate(compiled.dimensions):
        counts = [0] * len(dim.labels)
        for i in rec.selected:
            counts[attributes[i][d]] += 1
        for label, got, want in zip(dim.labels, counts, compiled.counts[d]):
            print(f"  {dim.name}/{label}\t{got}\t{want}")
    return 0


def _cmd_walk(args) -> int:
    cfg = _load_config(args)
    _, behaviors, _, _, graph = _prepared(cfg)
    hops = args.hops if args.hops is not None else cfg.hops
    ws = rdw_scores(graph, args.user, hops, cfg.beta)
    if not args.keep_history:
        rec = next((r for r in behaviors if r.user_id == args.user), None)
        if rec is not None:
            ws = filter_history(ws, set(rec.history) | set(rec.clicked_ids()))
    print(f"user\t{args.user}\thops\t{hops}\tsupport\t{len(ws)}")
    for item, score in top_scores(ws, args.top):
        print(f"{item}\t{score:.6g}")
    return 0


def _cmd_synth(args) -> int:
    from .synthetic import generate_synthetic

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    corpus, behaviors, registry = generate_synthetic(args.articles, args.users, seed=args.synth_seed)
    from .corpus import save_articles, save_behaviors

    save_articles(corpus, out / "articles.jsonl")
    save_behaviors(behaviors, out / "behaviors.jsonl")
    config = {
        "articles": "articles.jsonl",
        "behaviors": "behaviors.jsonl",
        "registry": {
            "government": sorted(registry.government),
            "opposition": sorted(registry.opposition),
        },
        "ntd": {
            "dimensions": [
                {
                    "name": "sentiment",
                    "attribute": "sentiment_bucket",
                    "buckets": [["negative", 0.2], ["somewhat_negative", 0.3],
                                ["somewhat_positive", 0.3], ["positive", 0.2]],
                },
                {
                    "name": "party",
                    "attribute": "party_bucket",
                    "buckets": [["gov", 0.15], ["opp", 0.15], ["gov_and_opp", 0.15],
                                ["independent_foreign", 0.15], ["none", 0.40]],
                },
            ]
        },
        "strategies": ["d-rdw", "rdw", "random"],
        "seed": args.synth_seed,
        "output_dir": "results",
    }
    (out / "config.json").write_text(json.dumps(config, indent=2) + "\n")
    print(f"wrote {out/'articles.jsonl'}, {out/'behaviors.jsonl'}, {out/'config.json'}", file=sys.stderr)
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "evaluate": _cmd_evaluate,
        "sample": _cmd_sample,
        "walk": _cmd_walk,
        "synth": _cmd_synth,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    raise SystemExit(main())

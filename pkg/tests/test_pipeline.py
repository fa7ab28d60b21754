import json
from collections import Counter
from dataclasses import replace

import numpy as np
import pytest

from divwalk.cli import main
from divwalk.corpus import save_articles, save_behaviors
from divwalk.metrics import gini
from divwalk.pipeline import (
    ExperimentConfig,
    PipelineError,
    _per_user_seed,
    ingest_external_scores,
    random_baseline,
    run_experiment,
)
from divwalk.synthetic import SyntheticMix, generate_synthetic

BASE = dict(articles="a.jsonl", behaviors="b.jsonl", registry={}, ntd={})


# --- config -----------------------------------------------------------------


@pytest.mark.parametrize(
    "kw,msg",
    [
        (dict(list_size=0), "list_size"),
        (dict(hops=2), "hops"),
        (dict(hops=5, max_hops=3), "max_hops"),
        (dict(max_hops=8), "max_hops"),
        (dict(threads=0), "threads"),
        (dict(strategies=("svd",)), "unknown strategy"),
        (dict(strategies=("external:foo",)), "unknown strategy"),
    ],
)
def test_config_validation(kw, msg):
    with pytest.raises(PipelineError, match=msg):
        ExperimentConfig(**BASE, **kw)


def test_config_accepts_external_methods():
    cfg = ExperimentConfig(**BASE, strategies=("d-rdw", "external:gkl", "external:mmr"))
    assert cfg.strategies[1] == "external:gkl"


def test_config_from_dict_resolves_relative_paths(tmp_path):
    doc = dict(BASE, output_dir="results", rerank={"lam": 0.7})
    cfg = ExperimentConfig.from_dict(doc, base_dir=tmp_path)
    assert cfg.articles == str(tmp_path / "a.jsonl")
    assert cfg.output_dir == str(tmp_path / "results")
    assert cfg.rerank.lam == 0.7
    absolute = dict(BASE, articles=str(tmp_path / "abs.jsonl"))
    cfg2 = ExperimentConfig.from_dict(absolute, base_dir=tmp_path)
    assert cfg2.articles == str(tmp_path / "abs.jsonl")
    assert cfg2.external_scores is None


def test_config_from_file_json_and_yaml(tmp_path):
    doc = dict(BASE, seed=9, strategies=["rdw"])
    (tmp_path / "c.json").write_text(json.dumps(doc))
    (tmp_path / "c.yaml").write_text(
        "articles: a.jsonl\nbehaviors: b.jsonl\nregistry: {}\nntd: {}\nseed: 9\n"
        "strategies: [rdw]\n"
    )
    a = ExperimentConfig.from_file(tmp_path / "c.json")
    b = ExperimentConfig.from_file(tmp_path / "c.yaml")
    assert a == b
    assert a.seed == 9 and a.strategies == ("rdw",)


def test_per_user_seed_stable_and_spread():
    assert _per_user_seed(3, "d-rdw", 7) == _per_user_seed(3, "d-rdw", 7)
    seen = {_per_user_seed(3, s, i) for s in ("d-rdw", "random") for i in range(50)}
    assert len(seen) == 100


# --- random baseline -----------------------------------------------------------


def test_random_baseline_excludes_history():
    pool = ["a", "b", "c", "d", "e"]
    out = random_baseline(pool, 2, 0, {"u1": {"a", "b"}, "u2": set()})
    assert set(out) == {"u1", "u2"}
    for ids in out.values():
        assert len(ids) == 2 and len(set(ids)) == 2
    assert not set(out["u1"]) & {"a", "b"}
    again = random_baseline(pool, 2, 0, {"u1": {"a", "b"}, "u2": set()})
    assert again == out
    assert random_baseline(pool, 2, 1, {"u1": {"a", "b"}, "u2": set()}) != out


def test_random_baseline_pool_too_small():
    with pytest.raises(PipelineError, match="pool too small"):
        random_baseline(["a", "b", "c"], 3, 0, {"u": {"a"}})


def test_random_baseline_tracks_pool_distribution(synth_small):
    # the aggregate of all recommended items mirrors the pool's category mix
    corpus, behaviors, _ = synth_small
    hists = {r.user_id: set(r.history) | set(r.clicked_ids()) for r in behaviors}
    lists = random_baseline([a.id for a in corpus], 20, 123, hists)
    cats = sorted({a.category for a in corpus})

    def cat_dist(ids):
        c = Counter(corpus[i].category for i in ids)
        total = sum(c.values())
        return [c[k] / total for k in cats]

    pool_gini = gini(cat_dist([a.id for a in corpus]))
    agg_gini = gini(cat_dist([i for ids in lists.values() for i in ids]))
    assert agg_gini == pytest.approx(pool_gini, abs=0.05)


# --- external scores ------------------------------------------------------------


def test_ingest_external_scores(tmp_path, synth_small):
    corpus, _, _ = synth_small
    f = tmp_path / "s.tsv"
    f.write_text("u1\ta000001\t0.5\nu1\ta000002\t0.25\n\nu2\ta000001\t1.5\n")
    out = ingest_external_scores(f, corpus)
    assert out == {"u1": {"a000001": 0.5, "a000002": 0.25}, "u2": {"a000001": 1.5}}


def test_ingest_external_scores_reports_lines(tmp_path, synth_small):
    corpus, _, _ = synth_small
    f = tmp_path / "s.tsv"
    f.write_text("u1\ta000001\t0.5\nbadline\nu1\tzzz\t0.3\nu2\ta000001\tnope\n")
    with pytest.raises(PipelineError) as exc:
        ingest_external_scores(f, corpus)
    msg = str(exc.value)
    assert msg.startswith("3 bad score rows")
    assert "line 2: expected 3 tab-separated fields" in msg
    assert "line 3: unknown article id 'zzz'" in msg
    assert "line 4: bad score 'nope'" in msg


# --- run_experiment ----------------------------------------------------------------


NTD_DOC = {
    "dimensions": [
        {
            "name": "sentiment",
            "attribute": "sentiment_bucket",
            "buckets": [
                ["negative", 0.2],
                ["somewhat_negative", 0.3],
                ["somewhat_positive", 0.3],
                ["positive", 0.2],
            ],
        },
        {
            "name": "party",
            "attribute": "party_bucket",
            "buckets": [
                ["gov", 0.15],
                ["opp", 0.15],
                ["gov_and_opp", 0.15],
                ["independent_foreign", 0.15],
                ["none", 0.40],
            ],
        },
    ]
}


@pytest.fixture(scope="module")
def exp_dir(tmp_path_factory, synth_small):
    root = tmp_path_factory.mktemp("exp")
    corpus, behaviors, registry = synth_small
    save_articles(corpus, root / "articles.jsonl")
    save_behaviors(behaviors, root / "behaviors.jsonl")
    inter = {r.user_id: set(r.history) | set(r.clicked_ids()) for r in behaviors}
    rng = np.random.default_rng(5)
    lines = []
    for rec in behaviors[:5]:
        fresh = [a.id for a in corpus if a.id not in inter[rec.user_id]][:40]
        lines += [f"{rec.user_id}\t{i}\t{rng.random():.6f}" for i in fresh]
    (root / "external.tsv").write_text("\n".join(lines) + "\n")
    doc = {
        "articles": "articles.jsonl",
        "behaviors": "behaviors.jsonl",
        "registry": {
            "government": sorted(registry.government),
            "opposition": sorted(registry.opposition),
        },
        "ntd": NTD_DOC,
        "strategies": ["d-rdw", "rdw", "random", "external:score"],
        "external_scores": "external.tsv",
        "list_size": 20,
        "seed": 11,
    }
    (root / "config.json").write_text(json.dumps(doc))
    return root, doc


def test_run_experiment_end_to_end(exp_dir, synth_small):
    root, doc = exp_dir
    _, behaviors, _ = synth_small
    cfg = replace(ExperimentConfig.from_dict(doc, base_dir=root), output_dir=str(root / "out1"))
    report, records = run_experiment(cfg)
    assert set(records) == {"d-rdw", "rdw", "random", "external:score"}

    inter = {r.user_id: set(r.history) | set(r.clicked_ids()) for r in behaviors}
    drdw = records["d-rdw"]
    assert len(drdw.lists) == len(behaviors)
    for u, ids in drdw.lists.items():
        assert len(ids) == 20 == len(set(ids))
        assert not set(ids) & inter[u]

    row = report.strategies["d-rdw"]
    assert row["full_set_rate"] is not None and row["full_set_rate"] >= 0.9
    assert "full_set_rate" not in report.strategies["rdw"]
    for key in ("activation", "gini_sentiment", "ild_party", "fragmentation", "auc"):
        assert key in row
    assert report.strategies["random"]["auc"] == pytest.approx(0.5, abs=0.15)
    assert report.strategies["external:score"]["auc"] is not None
    assert len(records["external:score"].lists) == 5

    out = root / "out1"
    for name in (
        "recommendations_d-rdw.tsv",
        "recommendations_rdw.tsv",
        "recommendations_random.tsv",
        "recommendations_external_score.tsv",
        "report.tsv",
        "report.json",
    ):
        assert (out / name).exists()
    first = (out / "recommendations_d-rdw.tsv").read_text().split("\n")
    assert first[0] == "user_id\trank\tarticle_id\tscore\tstatus"
    assert first[1].split("\t")[4] in ("FULL_SET",) or first[1].split("\t")[4].startswith("REDUCED")


def test_rerun_outputs_byte_identical(exp_dir):
    root, doc = exp_dir
    cfg = ExperimentConfig.from_dict(doc, base_dir=root)
    run_experiment(replace(cfg, output_dir=str(root / "detA")))
    run_experiment(replace(cfg, output_dir=str(root / "detB")))
    names = sorted(p.name for p in (root / "detA").iterdir())
    assert names == sorted(p.name for p in (root / "detB").iterdir())
    for name in names:
        a, b = (root / "detA" / name), (root / "detB" / name)
        if name == "report.json":
            da, db = json.loads(a.read_text()), json.loads(b.read_text())
            da.pop("timing"), db.pop("timing")
            assert da == db
        else:
            assert a.read_bytes() == b.read_bytes(), name


def test_threads_do_not_change_results(exp_dir):
    root, doc = exp_dir
    doc = dict(doc, strategies=["d-rdw"])
    cfg = ExperimentConfig.from_dict(doc, base_dir=root)
    _, seq = run_experiment(replace(cfg, threads=1))
    _, par = run_experiment(replace(cfg, threads=4))
    assert seq["d-rdw"].lists == par["d-rdw"].lists
    assert seq["d-rdw"].scores == par["d-rdw"].scores
    assert seq["d-rdw"].status == par["d-rdw"].status


# --- synthetic data -----------------------------------------------------------------


def test_synthetic_deterministic():
    a = generate_synthetic(80, 10, seed=3)
    b = generate_synthetic(80, 10, seed=3)
    assert a[0] == b[0] and a[1] == b[1]
    c = generate_synthetic(80, 10, seed=4)
    assert a[1] != c[1]


def test_synthetic_shapes_and_cold_items():
    mix = SyntheticMix(cold_fraction=0.1, history_range=(4, 8))
    corpus, behaviors, registry = generate_synthetic(100, 12, mix=mix, seed=1)
    assert len(list(corpus)) == 100 and len(behaviors) == 12
    cold = {f"a{i:06d}" for i in range(90, 100)}
    touched = set()
    for rec in behaviors:
        touched |= set(rec.history) | {i.article_id for i in rec.impressions}
        assert 4 <= len(rec.history) <= 8
        clicked = rec.clicked_ids()
        assert clicked and len(clicked) < len(rec.impressions)
    assert not touched & cold
    assert registry.government and registry.opposition


def test_synthetic_empty_users_and_validation():
    corpus, behaviors, _ = generate_synthetic(10, 0, seed=0)
    assert len(behaviors) == 0 and len(list(corpus)) == 10
    with pytest.raises(ValueError):
        generate_synthetic(0, 1)
    with pytest.raises(ValueError):
        SyntheticMix(sentiment=(0.5, 0.5, 0.5, -0.5))
    with pytest.raises(ValueError):
        SyntheticMix(cold_fraction=1.0)


# --- CLI --------------------------------------------------------------------------


def test_cli_full_chain(tmp_path, capsys):
    d = tmp_path / "ds"
    assert main(["synth", "--out", str(d), "--articles", "200", "--users", "25", "--seed", "3"]) == 0
    capsys.readouterr()
    for name in ("articles.jsonl", "behaviors.jsonl", "config.json"):
        assert (d / name).exists()

    assert main(["run", "--config", str(d / "config.json")]) == 0
    out = capsys.readouterr().out
    assert out.startswith("strategy\t")
    assert "d-rdw" in out
    results = d / "results"
    assert (results / "recommendations_d-rdw.tsv").exists()

    evdir = tmp_path / "ev"
    rc = main(
        [
            "--output",
            str(evdir),
            "evaluate",
            "--recs",
            str(results / "recommendations_d-rdw.tsv"),
            "--config",
            str(d / "config.json"),
        ]
    )
    assert rc == 0
    out = capsys.readouterr().out
    assert out.startswith("strategy\t") and "\nevaluated\t" in out
    assert (evdir / "report.tsv").exists()

    assert main(["sample", "--user", "u00001", "--config", str(d / "config.json")]) == 0
    out = capsys.readouterr().out
    assert out.startswith("user\tu00001\n")
    assert "bucket histogram" in out

    assert main(["walk", "--user", "u00001", "--top", "5", "--config", str(d / "config.json")]) == 0
    out = capsys.readouterr().out
    head = out.split("\n", 1)[0]
    assert head.startswith("user\tu00001\thops\t3\tsupport\t")
    assert len(out.strip().split("\n")) <= 6


def test_cli_output_override(tmp_path, capsys):
    d = tmp_path / "ds"
    main(["synth", "--out", str(d), "--articles", "150", "--users", "10", "--seed", "1"])
    custom = tmp_path / "custom_out"
    assert main(["--output", str(custom), "run", "--config", str(d / "config.json")]) == 0
    capsys.readouterr()
    assert (custom / "report.json").exists()
    assert not (d / "results").exists()

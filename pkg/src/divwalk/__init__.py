"""Diversity-driven news recommendation: random walks + exact target-distribution sampling."""

from .corpus import (
    Article,
    BehaviorRecord,
    CompiledNTD,
    Corpus,
    Impression,
    NTDDimension,
    NTDSpec,
    PartyBucket,
    PartyRegistry,
    compile_ntd,
    load_articles,
    load_behaviors,
    party_bucket,
    sentiment_bucket,
)
from .graph import InteractionGraph, SimilarityIndex, augment_cold_items, build_graph, cosine_similarity
from .metrics import (
    DiscreteDistribution,
    MetricsReport,
    activation,
    alternative_voices,
    auc,
    calibration,
    fragmentation,
    gini,
    ild,
    js_divergence,
    representation,
)
from .pipeline import (
    ExperimentConfig,
    RunRecord,
    generate_synthetic,
    ingest_external_scores,
    random_baseline,
    run_experiment,
)
from .rerank import (
    RerankConfig,
    gkl_rerank,
    mmr_rerank,
    pm2_rerank,
    rank_by_score,
    space_by_category,
)
from .sampler import (
    ConstraintSystem,
    SamplerSolution,
    SamplerStatus,
    build_constraints,
    fill_random,
    recommend_drdw,
    reduce_and_retry,
    solve_exact,
)
from .walker import WalkScores, filter_history, rdw_scores, walk_scores

__version__ = "0.1.0"

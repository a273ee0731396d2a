"""Synthetic query-product training pairs for long-tail search queries.

Two halves: a multi-reward policy-gradient trainer for a candidate
rewriting policy (semantic relevance, product-language alignment,
diversity), and a batch pipeline that turns the policy's rewrites into
labeled query-product pairs via filter -> retrieve -> dual relevance
scoring -> dedupe.
"""

from ._kernels import BACKEND
from .domain import (
    FormatError,
    FormatErrorKind,
    Product,
    Query,
    QueryType,
    RelevanceLabel,
    Rewrite,
    RewriteList,
    SyntheticPair,
    parse_rewrite_list,
    render_rewrite_list,
)
from .language_model import NGramLM
from .metrics import MetricsReport, item_goodrate, query_goodrate_at_n, gsb
from .pipeline import PipelineConfig, PolicyGenerator, StageStats, run_pipeline
from .policy import CategoricalRewritePolicy, TrainConfig, TrainStats, train
from .retrieval import VectorIndex, build_index, embed_text, search_approx, search_exact
from .rewards import (
    RewardBreakdown,
    RewardWeights,
    char_ngrams,
    diversity_reward,
    pda_reward,
    qsr_reward,
    response_reward,
    total_reward,
)
from .scorers import ScorerBinding, ScorerKind, Task

__version__ = "0.1.0"

"""Shared fixtures: the committed corpus files and session-scoped artifacts."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from tailsynth import _kernels
from tailsynth.domain import load_products, load_queries
from tailsynth.language_model import NGramLM
from tailsynth.pipeline import PipelineConfig
from tailsynth.policy import CategoricalRewritePolicy
from tailsynth.retrieval import build_index

FIXTURE_DIR = Path(__file__).resolve().parents[1] / "fixtures"


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # pay any JIT compilation cost before timed sections run
    _kernels.warmup()


@pytest.fixture(scope="session")
def fixture_dir() -> Path:
    if not FIXTURE_DIR.exists():
        pytest.skip("fixture directory missing; run `python -m tailsynth.fixtures --out fixtures`")
    return FIXTURE_DIR


@pytest.fixture(scope="session")
def fixture_config(fixture_dir) -> PipelineConfig:
    return PipelineConfig.from_file(fixture_dir / "config.json")


@pytest.fixture(scope="session")
def fixture_queries(fixture_dir):
    return load_queries(fixture_dir / "queries.jsonl")


@pytest.fixture(scope="session")
def fixture_products(fixture_dir):
    return load_products(fixture_dir / "products.jsonl")


@pytest.fixture(scope="session")
def fixture_planted(fixture_dir):
    with open(fixture_dir / "planted.json", "r", encoding="utf-8") as fh:
        return json.load(fh)


@pytest.fixture(scope="session")
def fixture_policy(fixture_dir) -> CategoricalRewritePolicy:
    return CategoricalRewritePolicy.load(fixture_dir / "policy.json")


@pytest.fixture(scope="session")
def fixture_index(fixture_products, fixture_config):
    return build_index(
        fixture_products, dim=fixture_config.dim, partitions=fixture_config.partitions
    )


@pytest.fixture(scope="session")
def fixture_lm(fixture_products) -> NGramLM:
    return NGramLM.fit([list(p.title) for p in fixture_products], order=3, delta=0.1)

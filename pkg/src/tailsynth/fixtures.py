"""Hermetic fixture generation: corpus, queries, rewrite policy, judgments.

Everything is deterministic given the seeds baked in here, so the shipped
fixture files can be regenerated bit-for-bit. The corpus is built from topic
word pools (40 two-word categories) so that product titles cluster by topic,
queries lexically overlap their topic's products, and the rewrite policy's
candidate phrases retrieve sensibly.

Planted false positives: for a handful of queries we add products whose
titles are morphological near-misses of the query and one of its rewrites -
almost every character bigram shared, no word shared. The business mock
(character overlap) scores them above threshold while the general filter
(word overlap) labels them irrelevant, so they must be vetoed, never
emitted. The builder verifies both properties numerically.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .domain import Product, Query, QueryType, RelevanceLabel, write_jsonl
from .language_model import NGramLM
from .pipeline import PipelineConfig
from .policy import CategoricalRewritePolicy, sample_response
from .rewards import RewardBreakdown
from .scorers import bigram_jaccard, mock_general_filter

FIXTURE_SEED = 7
JUDGMENT_SEED = 4242

N_PRODUCTS = 10_000
QUERIES_PER_TYPE = 50

CATEGORIES = [
    "running shoes", "hiking boots", "exercise mat", "water bottle",
    "reading lamp", "office chair", "laptop stand", "smartphone case",
    "wireless earbuds", "mechanical keyboard", "coffee grinder", "copper kettle",
    "iron skillet", "carving knife", "cutting board", "hooded raincoat",
    "wool sweater", "denim trousers", "leather wallet", "canvas backpack",
    "camping tent", "sleeping bag", "trekking poles", "fishing tackle",
    "mountain bike", "cycling helmet", "climbing rope", "pruning shears",
    "watering can", "flower planter", "picture frame", "pendulum clock",
    "velvet cushion", "woven carpet", "curtain panel", "bookcase shelf",
    "storage crate", "makeup brush", "ionic hairdryer", "sonic toothbrush",
]

MODIFIERS = [
    "portable", "foldable", "adjustable", "compact", "ergonomic",
    "lightweight", "waterproof", "insulated", "breathable", "rechargeable",
    "stainless", "bamboo", "ceramic", "cotton", "mesh",
    "padded", "quilted", "ventilated", "reinforced", "polished",
]

ATTRIBUTES = [
    "for travel", "for kids", "for beginners", "with warranty",
    "large size", "small size", "extra wide", "quick dry",
    "machine washable", "energy saving", "noise reducing", "scratch resistant",
    "easy clean", "double layer", "high capacity", "space saving",
]

USES = [
    "morning routines", "weekend outings", "humid climates", "long journeys",
    "remote work", "summer trails", "winter evenings", "city errands",
    "beach days", "outdoor chores", "family dinners", "bedtime reading",
]

NEG_ATTRS = [
    "plastic parts", "loud motor", "sharp edges", "slippery sole",
    "chemical smell", "wooden frame", "metal buckle", "heavy base",
    "rough seams", "sticky coating",
]

BRANDS = [
    "arvel", "bylor", "cormet", "dovira", "elvan", "fenwick", "gartel",
    "hovden", "imbrex", "jolpa", "korvin", "lumet", "marzen", "nortek",
    "ovilo", "pranso", "quiller", "rovena", "selkin", "tovald", "umbrel",
    "velora", "wexlor", "yonder", "zephin",
]

NOISE_REWRITES = [
    "zorvex blin thapple", "quonf dresmil vatter", "plimber oswick jandle",
    "frindle waxtop murber", "grolet vimsy turbank", "snorpel dazzit krum",
    "blenwick farzo toom", "crivven moxel pand", "drubble yintor casq",
    "harvix glomp nuzzle", "twindle borque sem", "vastrel pingo drowse",
]

N_TOPICS = len(CATEGORIES)


def topic_modifiers(topic: int) -> list[str]:
    """The four modifier words used by one topic's titles and rewrites."""
    m = len(MODIFIERS)
    return [MODIFIERS[(topic * 3 + off) % m] for off in (0, 7, 11, 15)]


def topic_attributes(topic: int) -> list[str]:
    """The four attribute phrases used by one topic's titles and rewrites."""
    a = len(ATTRIBUTES)
    return [ATTRIBUTES[(topic * 5 + off) % a] for off in (0, 3, 6, 9)]


def topic_rewrites(topic: int) -> list[str]:
    """Six product-language phrases for one topic."""
    cat = CATEGORIES[topic]
    mods = topic_modifiers(topic)
    attrs = topic_attributes(topic)
    return [
        f"{mods[0]} {cat}",
        f"{cat} {attrs[0]}",
        f"{mods[1]} {cat} {attrs[1]}",
        f"{mods[2]} {cat} {attrs[3]}",
        f"{cat} {attrs[2]}",
        f"{mods[3]} {cat}",
    ]


PLANTED_QUERY_STRIDE = 20


def planted_query_indices(n_queries: int) -> list[int]:
    return list(range(0, n_queries, PLANTED_QUERY_STRIDE))


def trap_rewrite(query: Query) -> str:
    """The query-faithful rewrite planted for a trap query.

    Stripping only the type filler keeps the rewrite almost identical to the
    query, so it sails through the rewrite filter and its nearest corpus
    neighbor is the morphed trap title.
    """
    words = query.text.split()
    if query.query_type is QueryType.QA:
        return " ".join(words[1:])  # drop "which"
    if query.query_type is QueryType.ALTERNATIVE:
        return " ".join(words[:3])  # "affordable {category}"
    if query.query_type is QueryType.KNOWLEDGE:
        return " ".join(words[1:])  # drop "best"
    return query.text  # negative queries rewrite verbatim


def candidate_vocabulary(queries: list[Query] | None = None) -> list[str]:
    """Topic phrases, trap rewrites for the planted queries, and noise."""
    seen: dict[str, None] = {}
    for t in range(N_TOPICS):
        for phrase in topic_rewrites(t):
            seen.setdefault(phrase)
    if queries is not None:
        for qi in planted_query_indices(len(queries)):
            seen.setdefault(trap_rewrite(queries[qi]))
    for noise in NOISE_REWRITES:
        seen.setdefault(noise)
    return list(seen)


def make_queries() -> list[Query]:
    """50 queries per type, each bound to a topic by index."""
    queries = []
    for j, qtype in enumerate(QueryType):
        for i in range(QUERIES_PER_TYPE):
            topic = (j * QUERIES_PER_TYPE + i) % N_TOPICS
            cat = CATEGORIES[topic]
            if qtype is QueryType.QA:
                text = f"which {cat} for {USES[i % len(USES)]}"
            elif qtype is QueryType.ALTERNATIVE:
                text = f"affordable {cat} like {BRANDS[i % len(BRANDS)]}"
            elif qtype is QueryType.NEGATIVE:
                text = f"{cat} without {NEG_ATTRS[i % len(NEG_ATTRS)]}"
            else:
                text = f"best {cat} for {USES[(i + 5) % len(USES)]}"
            queries.append(Query(f"q-{qtype.value}-{i:03d}", text, qtype))
    return queries


def query_topic(query_index: int) -> int:
    return query_index % N_TOPICS


def _morph_word(word: str) -> str:
    """Deterministic near-miss of a word: toggles a trailing 's'."""
    if word.endswith("s") and len(word) > 3:
        return word[:-1]
    return word + "s"


def _morph_phrase(words: list[str]) -> str:
    return " ".join(_morph_word(w) for w in words)


def make_planted(queries: list[Query], threshold: float) -> tuple[list[Product], list[dict]]:
    """Build the lexical-trap products and verify the trap numerically.

    Each trap title is the word-by-word morph of the query's trap rewrite:
    nearly all character bigrams survive (the business mock scores it well
    above threshold and the rewrite retrieves it at the top), but no word
    survives (the general filter labels it irrelevant)."""
    products: list[Product] = []
    planted: list[dict] = []
    for n, qi in enumerate(planted_query_indices(len(queries))):
        query = queries[qi]
        rewrite = trap_rewrite(query)
        title = _morph_phrase(rewrite.split())
        product = Product(
            id=f"p-trap-{n:03d}",
            title=title,
            attributes={"planted": "true"},
        )
        score = bigram_jaccard(query.text, title)
        if score < threshold:
            raise AssertionError(f"planted trap too weak for {query.id}: {score:.3f}")
        if mock_general_filter(query.text, product) is not RelevanceLabel.IRRELEVANT:
            raise AssertionError(f"planted trap not vetoed for {query.id}")
        products.append(product)
        planted.append(
            {"query_id": query.id, "product_id": product.id, "via_rewrite": rewrite}
        )
    return products, planted


def make_products(threshold: float = 0.35) -> tuple[list[Product], list[dict]]:
    """10k topic-structured products, including the planted traps."""
    queries = make_queries()
    trap_products, planted = make_planted(queries, threshold)
    rng = np.random.default_rng(FIXTURE_SEED)
    products: list[Product] = list(trap_products)
    n_regular = N_PRODUCTS - len(trap_products)
    for i in range(n_regular):
        topic = i % N_TOPICS
        cat = CATEGORIES[topic]
        # titles draw from the topic's own modifier/attribute pools so the
        # corpus clusters by topic and the topic's rewrites retrieve it
        brand = BRANDS[rng.integers(len(BRANDS))]
        modifier = topic_modifiers(topic)[rng.integers(4)]
        attr = topic_attributes(topic)[rng.integers(4)]
        style = rng.integers(3)
        if style == 0:
            title = f"{brand} {cat} {attr}"
        elif style == 1:
            title = f"{brand} {modifier} {cat}"
        else:
            title = f"{modifier} {cat} {attr}"
        products.append(
            Product(
                id=f"p-{i:05d}",
                title=title,
                attributes={"brand": brand, "category": cat},
            )
        )
    return products, planted


def make_fixture_policy(queries: list[Query]) -> CategoricalRewritePolicy:
    """Per-query logit rows favoring the query's topic phrases.

    Aligned phrases (and the trap rewrite, where planted) get logit 3, the
    next topic's phrases 0.5, noise strings -1, everything else -4: most
    samples are on-topic, with enough off-topic draws to keep the rewrite
    filter load-bearing.
    """
    candidates = candidate_vocabulary(queries)
    index = {c: i for i, c in enumerate(candidates)}
    trap_queries = {qi for qi in planted_query_indices(len(queries))}
    logits: dict[str, np.ndarray] = {}
    for qi, query in enumerate(queries):
        topic = query_topic(qi)
        row = np.full(len(candidates), -4.0)
        for noise in NOISE_REWRITES:
            row[index[noise]] = -1.0
        for phrase in topic_rewrites((topic + 1) % N_TOPICS):
            row[index[phrase]] = 0.5
        for phrase in topic_rewrites(topic):
            row[index[phrase]] = 3.0
        if qi in trap_queries:
            # near-verbatim rewrites are the ones a copy-happy generator
            # emits most confidently; the high logit also guarantees the
            # planted trap is exercised on the shipped seed
            row[index[trap_rewrite(query)]] = 5.0
        logits[query.id] = row
    return CategoricalRewritePolicy(
        candidates=tuple(candidates),
        logits=logits,
        default_logits=np.zeros(len(candidates)),
    )


def fixture_config() -> PipelineConfig:
    # top_k below the spec default keeps the golden dataset reviewable;
    # business_threshold is calibrated on this fixture, not a product value
    return PipelineConfig(
        min_k=5,
        rewrite_k=6,
        top_k=50,
        business_threshold=0.35,
        dim=512,
        partitions=64,
        probes=7,
        generator_mode="sample",
        policy_path="policy.json",
        on_remote_error="drop",
        seed=FIXTURE_SEED,
    )


def make_judgments(n_queries: int = 40, list_len: int = 20, seed: int = JUDGMENT_SEED):
    """Seeded random judgment records for the metrics/eval surface."""
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n_queries):
        ranked = [
            [f"p-{i:03d}-{j:02d}", bool(rng.random() < 0.45)] for j in range(list_len)
        ]
        verdict = ["good", "same", "bad"][int(rng.choice(3, p=[0.35, 0.45, 0.2]))]
        records.append({"query_id": f"jq-{i:03d}", "ranked": ranked, "verdict": verdict})
    return records


# --------------------------------------------------------------------------
# In-code training tasks (no files needed)
# --------------------------------------------------------------------------


def make_bandit_task(n_candidates: int = 4):
    """Single-good-candidate task: reward 1 iff every draw is candidate 0."""
    candidates = tuple(f"option {chr(ord('a') + i)}" for i in range(n_candidates))
    query = Query("bandit-000", "pick the target option", QueryType.QA)
    policy = CategoricalRewritePolicy.uniform(candidates, contexts=[query.id])

    def reward_fn(q: Query, rlist) -> RewardBreakdown:
        hit = all(r.text == candidates[0] for r in rlist.rewrites)
        return RewardBreakdown(
            qsr=0.0, pda=0.0, diversity=0.0, format_ok=True, total=1.0 if hit else 0.0
        )

    return policy, [query], reward_fn, candidates


ALIGNED_PHRASES = [
    "lightweight running shoes for travel",
    "waterproof hiking boots large size",
    "portable desk lamp energy saving",
    "ergonomic office chair with warranty",
    "compact water bottle for kids",
    "breathable rain jacket quick dry",
    "foldable laptop stand space saving",
    "insulated tea kettle easy clean",
]

MISALIGNED_PHRASES = [
    "zzq##x vv!!j qq##",
    "xx!!zq jj##vv zz!!",
    "qq!!## zzxxj v##q",
    "jjzz!! ##qqx vvj#",
    "vv##qq x!!zz j#qj",
    "##jjxx qzz!! v#vq",
    "zxq!!v #j#zz qxv!",
    "!!vvzz qq#jx z##x",
]


def make_alignment_task():
    """Two nonce-word queries over half product-language, half gibberish
    candidates. The relevance mock scores every candidate identically (no
    shared words with the queries), so selection pressure comes only from
    the alignment and diversity terms."""
    candidates = tuple(ALIGNED_PHRASES + MISALIGNED_PHRASES)
    queries = [
        Query("align-000", "vexquib flornade", QueryType.KNOWLEDGE),
        Query("align-001", "drombel quastic", QueryType.KNOWLEDGE),
    ]
    policy = CategoricalRewritePolicy.uniform(candidates, contexts=[q.id for q in queries])
    return policy, queries, candidates


def mean_sampled_perplexity(
    policy: CategoricalRewritePolicy,
    queries: list[Query],
    lm: NGramLM,
    k: int,
    n_samples: int,
    seed: int,
) -> float:
    """Mean perplexity of rewrites drawn from the policy (fresh generator)."""
    rng = np.random.default_rng(seed)
    values = []
    for query in queries:
        for _ in range(n_samples):
            rlist, _ = sample_response(policy, query, k, rng)
            values.extend(lm.perplexity(lm.tokenize(t)) for t in rlist.texts())
    return float(np.mean(values))


def duplicate_rate(
    policy: CategoricalRewritePolicy,
    queries: list[Query],
    k: int,
    n_samples: int,
    seed: int,
) -> float:
    """Mean fraction of duplicated draws per sampled response."""
    rng = np.random.default_rng(seed)
    rates = []
    for query in queries:
        for _ in range(n_samples):
            rlist, _ = sample_response(policy, query, k, rng)
            rates.append(1.0 - len(set(rlist.texts())) / rlist.k)
    return float(np.mean(rates))


def write_fixture(out_dir: str | Path) -> None:
    """Materialize the fixture files (products, queries, policy, config,
    planted-pair manifest, judgments)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = fixture_config()
    queries = make_queries()
    products, planted = make_products(cfg.business_threshold)
    policy = make_fixture_policy(queries)

    # every planted trap must actually be exercised on the shipped seed
    from .pipeline import PolicyGenerator, generate_rewrites

    generator = PolicyGenerator(policy, k=cfg.rewrite_k, seed=cfg.seed, mode=cfg.generator_mode)
    by_id = {q.id: q for q in queries}
    for rec in planted:
        query = by_id[rec["query_id"]]
        rlist = generate_rewrites(generator, query, cfg.min_k)
        if rec["via_rewrite"] not in rlist.texts():
            raise AssertionError(f"trap rewrite not sampled for {query.id} on the shipped seed")

    write_jsonl(
        out / "queries.jsonl",
        (
            {"id": q.id, "text": q.text, "query_type": q.query_type.value}
            for q in queries
        ),
    )
    write_jsonl(
        out / "products.jsonl",
        (
            {"id": p.id, "title": p.title, "attributes": dict(p.attributes or {})}
            for p in products
        ),
    )
    policy.save(out / "policy.json")
    cfg.to_file(out / "config.json")
    with open(out / "planted.json", "w", encoding="utf-8") as fh:
        json.dump(planted, fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_jsonl(out / "judgments.jsonl", make_judgments())


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="regenerate the shipped fixture files")
    parser.add_argument("--out", required=True, help="output directory")
    args = parser.parse_args(argv)
    write_fixture(args.out)
    print(f"fixture written to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

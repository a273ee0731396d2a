"""Embedding determinism, index construction, exact/approx search contracts."""

import numpy as np
import pytest

from tailsynth.domain import Product
from tailsynth.retrieval import (
    CandidateHit,
    VectorIndex,
    _feature,
    build_index,
    embed_text,
    recall_at_k,
    search_approx,
    search_exact,
)


def small_corpus():
    titles = [
        "red running shoes",
        "blue running shoes",
        "red hiking boots",
        "copper tea kettle",
        "steel tea kettle",
        "bamboo cutting board",
        "walnut cutting board",
        "canvas travel backpack",
        "leather travel backpack",
        "wool winter sweater",
    ]
    return [Product(f"p{i:02d}", t) for i, t in enumerate(titles)]


class TestEmbedText:
    def test_identical_strings_identical_vectors(self):
        a = embed_text("red shoes", 64)
        b = embed_text("red shoes", 64)
        np.testing.assert_array_equal(a, b)
        assert float(a @ b) == pytest.approx(1.0, abs=1e-9)

    def test_unit_norm_on_random_strings(self):
        rng = np.random.default_rng(16)
        alphabet = list("abcdefgh 中文字")
        for _ in range(1000):
            n = int(rng.integers(1, 30))
            text = "".join(rng.choice(alphabet, size=n))
            vec = embed_text(text, 64)
            assert abs(np.linalg.norm(vec) - 1.0) < 1e-9

    def test_two_char_strings_follow_the_hash(self):
        # reproduce the shipped hash by hand for "aa" vs "bb"
        dim = 64
        (b_aa, s_aa), (b_bb, s_bb) = _feature("aa", dim), _feature("bb", dim)
        expected = (s_aa * s_bb if b_aa == b_bb else 0.0)
        got = float(embed_text("aa", dim) @ embed_text("bb", dim))
        assert got == pytest.approx(expected, abs=1e-12)

    def test_short_text_uses_reserved_feature(self):
        vec = embed_text("x", 64)
        assert abs(np.linalg.norm(vec) - 1.0) < 1e-12
        np.testing.assert_array_equal(vec, embed_text("y", 64))

    def test_empty_text_rejected(self):
        with pytest.raises(ValueError):
            embed_text("", 64)

    def test_small_dim_rejected(self):
        with pytest.raises(ValueError):
            embed_text("abc", 4)

    def test_bigram_multiplicity_ignored(self):
        # same distinct-bigram set, different repetition counts
        np.testing.assert_array_equal(embed_text("ababab", 64), embed_text("abab", 64))


class TestBuildIndex:
    def test_flat_index_single_partition(self):
        index = build_index(small_corpus(), dim=64, partitions=1)
        assert index.partitions == 1
        assert int(index.counts.sum()) == 10

    def test_partitions_cover_every_product_once(self):
        index = build_index(small_corpus(), dim=64, partitions=2)
        members = [pid for p in range(index.partitions) for pid in index.partition_members(p)]
        assert sorted(members) == sorted(p.id for p in small_corpus())

    def test_rebuild_is_deterministic(self):
        a = build_index(small_corpus(), dim=64, partitions=3)
        b = build_index(small_corpus(), dim=64, partitions=3)
        np.testing.assert_array_equal(a.centroids, b.centroids)
        assert a.product_ids == b.product_ids

    def test_duplicate_product_id_rejected(self):
        products = small_corpus() + [Product("p00", "another title")]
        with pytest.raises(ValueError, match="duplicate"):
            build_index(products, dim=64)

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValueError):
            build_index([], dim=64)

    def test_partitions_clamped_to_corpus_size(self):
        index = build_index(small_corpus()[:3], dim=64, partitions=10)
        assert index.partitions == 3


class TestSearchExact:
    def test_k_at_least_corpus_returns_all_sorted(self):
        index = build_index(small_corpus(), dim=64)
        hits = search_exact(index, embed_text("running shoes", 64), k=50)
        assert len(hits) == 10
        sims = [h.similarity for h in hits]
        assert sims == sorted(sims, reverse=True)

    def test_query_equal_to_stored_title(self):
        index = build_index(small_corpus(), dim=64)
        hits = search_exact(index, embed_text("copper tea kettle", 64), k=3)
        assert hits[0].product_id == "p03"
        assert hits[0].similarity == pytest.approx(1.0, abs=1e-9)

    def test_order_matches_brute_force(self):
        # independent oracle: dense cosine + python sort on (-sim, id)
        index = build_index(small_corpus(), dim=64, partitions=2)
        products = small_corpus()
        for query in ("red shoes", "travel backpack", "kettle"):
            q = embed_text(query, 64)
            sims = {p.id: round(float(embed_text(p.title, 64) @ q), 12) for p in products}
            expected = sorted(sims, key=lambda pid: (-sims[pid], pid))[:4]
            got = [h.product_id for h in search_exact(index, q, k=4)]
            assert got == expected

    def test_tie_break_by_product_id(self):
        products = [
            Product("pz", "identical title"),
            Product("pa", "identical title"),
            Product("pm", "other words entirely"),
        ]
        index = build_index(products, dim=64)
        hits = search_exact(index, embed_text("identical title", 64), k=2)
        assert [h.product_id for h in hits] == ["pa", "pz"]

    def test_bad_k_rejected(self):
        index = build_index(small_corpus(), dim=64)
        with pytest.raises(ValueError):
            search_exact(index, embed_text("x y", 64), k=0)


class TestSearchApprox:
    def test_full_probe_equals_exact(self):
        index = build_index(small_corpus(), dim=64, partitions=3)
        for query in ("running shoes", "cutting board", "sweater"):
            q = embed_text(query, 64)
            exact = search_exact(index, q, k=5)
            approx = search_approx(index, q, k=5, probes=index.partitions)
            assert approx == exact

    def test_single_partition_degenerates_to_exact(self):
        index = build_index(small_corpus(), dim=64, partitions=1)
        q = embed_text("hiking boots", 64)
        assert search_approx(index, q, k=6, probes=1) == search_exact(index, q, k=6)

    def test_hits_subset_of_scanned_partitions(self):
        index = build_index(small_corpus(), dim=64, partitions=4)
        q = embed_text("tea kettle", 64)
        cscores = index.centroids @ q
        corder = np.lexsort((np.arange(index.partitions), -cscores))
        scanned = {
            pid for p in corder[:2] for pid in index.partition_members(int(p))
        }
        hits = search_approx(index, q, k=8, probes=2)
        assert {h.product_id for h in hits} <= scanned

    def test_probes_out_of_range_rejected(self):
        index = build_index(small_corpus(), dim=64, partitions=3)
        with pytest.raises(ValueError):
            search_approx(index, embed_text("x y", 64), k=2, probes=4)
        with pytest.raises(ValueError):
            search_approx(index, embed_text("x y", 64), k=2, probes=0)

    def test_fixture_recall_with_default_probes(self, fixture_index, fixture_queries, fixture_config):
        qvecs = [embed_text(q.text, fixture_config.dim) for q in fixture_queries[:25]]
        recalls = []
        for v in qvecs:
            exact = search_exact(fixture_index, v, k=200)
            approx = search_approx(fixture_index, v, k=200, probes=fixture_config.probes)
            recalls.append(recall_at_k(approx, exact))
        assert float(np.mean(recalls)) >= 0.95


class TestRecallAtK:
    def _hits(self, ids):
        return [CandidateHit(i, 0.5) for i in ids]

    def test_identical_lists(self):
        hits = self._hits(["a", "b", "c"])
        assert recall_at_k(hits, hits) == 1.0

    def test_disjoint_lists(self):
        assert recall_at_k(self._hits(["a"]), self._hits(["b"])) == 0.0

    def test_partial_overlap(self):
        exact = self._hits([f"p{i}" for i in range(200)])
        approx = self._hits([f"p{i}" for i in range(150)] + [f"x{i}" for i in range(50)])
        assert recall_at_k(approx, exact) == pytest.approx(0.75)

    def test_empty_exact_defined_as_one(self):
        assert recall_at_k(self._hits(["a"]), []) == 1.0


class TestPersistence:
    def test_round_trip_reproduces_search_bit_identically(self, tmp_path):
        index = build_index(small_corpus(), dim=64, partitions=3)
        path = tmp_path / "index.npz"
        index.save(path)
        loaded = VectorIndex.load(path)
        np.testing.assert_array_equal(loaded.matrix, index.matrix)
        assert loaded.product_ids == index.product_ids
        for query in ("running shoes", "kettle time"):
            q = embed_text(query, 64)
            assert search_exact(loaded, q, k=5) == search_exact(index, q, k=5)
            assert search_approx(loaded, q, k=5, probes=2) == search_approx(index, q, k=5, probes=2)

    def test_version_checked(self, tmp_path):
        index = build_index(small_corpus(), dim=64)
        path = tmp_path / "index.npz"
        index.save(path)
        import json

        import numpy as np_  # rewrite meta with a bad version

        with np_.load(path) as data:
            arrays = {k: data[k] for k in data.files}
        arrays["meta"] = np_.array(json.dumps({"format_version": 42, "dim": 64, "partitions": 1}))
        with open(path, "wb") as fh:
            np_.savez(fh, **arrays)
        with pytest.raises(ValueError, match="format"):
            VectorIndex.load(path)

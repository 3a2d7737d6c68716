import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lexrag.errors import (
    ConflictError,
    DegenerateInputError,
    IndexEmptyError,
    ValidationError,
)
from lexrag.kg import Gazetteer, KGEmbeddings
from lexrag.retrieval import DocumentIndex, FusionMode, RetrievalConfig, fuse_scores

from conftest import PlantedEmbedder


def unit(values):
    v = np.asarray(values, dtype=np.float64)
    return v / np.linalg.norm(v)


class TestFuseScores:
    def test_convex_beta_one_is_text(self):
        cfg = RetrievalConfig(beta=1.0)
        assert fuse_scores(0.8, 0.3, cfg) == 0.8

    def test_convex_midpoint(self):
        cfg = RetrievalConfig(beta=0.5)
        assert fuse_scores(0.8, 0.6, cfg) == pytest.approx(0.7, abs=1e-12)

    def test_additive_hand_value(self):
        # unit vectors, dot 0.9, kg 1.0, alpha 0.5: (0.9 + 0.5) / (1 + 0.5)
        cfg = RetrievalConfig(fusion_mode=FusionMode.ADDITIVE, alpha=0.5)
        got = fuse_scores(0.9, 1.0, cfg, norms=(1.0, 1.0))
        assert got == pytest.approx(1.4 / 1.5, abs=1e-12)

    def test_text_only_passthrough(self):
        cfg = RetrievalConfig(fusion_mode=FusionMode.TEXT_ONLY)
        assert fuse_scores(0.432, 0.9, cfg) == 0.432

    def test_additive_zero_norms_degenerate(self):
        cfg = RetrievalConfig(fusion_mode=FusionMode.ADDITIVE)
        with pytest.raises(DegenerateInputError):
            fuse_scores(0.0, 0.5, cfg, norms=(0.0, 1.0))

    def test_input_range_validation(self):
        cfg = RetrievalConfig()
        with pytest.raises(ValidationError):
            fuse_scores(1.5, 0.0, cfg)
        with pytest.raises(ValidationError):
            fuse_scores(0.5, -0.1, cfg)

    @given(
        st.floats(0.0, 1.0),
        st.floats(0.0, 1.0),
        st.floats(0.0, 1.0),
    )
    def test_convex_bounded_by_inputs(self, text, kg, beta):
        cfg = RetrievalConfig(beta=beta)
        fused = fuse_scores(text, kg, cfg)
        lo, hi = min(text, kg), max(text, kg)
        assert lo - 1e-12 <= fused <= hi + 1e-12


class TestConfigValidation:
    def test_defaults(self):
        cfg = RetrievalConfig()
        assert cfg.theta == 0.85
        assert cfg.alpha == 0.5
        assert cfg.beta == 0.5
        assert cfg.fusion_mode is FusionMode.CONVEX

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"theta": 0.0},
            {"theta": 1.5},
            {"alpha": -0.1},
            {"beta": 1.2},
            {"max_results": 0},
        ],
    )
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ValidationError):
            RetrievalConfig(**kwargs)


class TestIndex:
    def test_add_and_size(self, hash_embedder):
        index = DocumentIndex(hash_embedder)
        for i in range(3):
            index.add(f"d{i}", f"Doc {i}", f"text number {i}")
        assert len(index) == 3

    def test_duplicate_id_conflict(self, hash_embedder):
        index = DocumentIndex(hash_embedder)
        index.add("d1", "t", "some text")
        with pytest.raises(ConflictError):
            index.add("d1", "t", "other text")

    def test_empty_text_rejected(self, hash_embedder):
        index = DocumentIndex(hash_embedder)
        with pytest.raises(ValidationError):
            index.add("d1", "t", "   ")

    def test_empty_index_retrieval_error(self, hash_embedder):
        index = DocumentIndex(hash_embedder)
        with pytest.raises(IndexEmptyError):
            index.retrieve("anything", RetrievalConfig())


def build_planted_index(dim=8):
    """Three documents with controlled cosines to the planted query."""
    emb = PlantedEmbedder(dim=dim)
    q = np.zeros(dim)
    q[0] = 1.0
    emb.plant("the query", q)

    def doc_vec(target_cos):
        v = np.zeros(dim)
        v[0] = target_cos
        v[1] = math.sqrt(1.0 - target_cos**2)
        return v

    emb.plant("text a", doc_vec(0.95))
    emb.plant("text b", doc_vec(0.85))
    emb.plant("text c", doc_vec(0.75))
    index = DocumentIndex(emb)
    index.add("doc-a", "A", "text a")
    index.add("doc-b", "B", "text b")
    index.add("doc-c", "C", "text c")
    return index


class TestRetrieve:
    def test_threshold_filters_exactly(self):
        index = build_planted_index()
        cfg = RetrievalConfig(theta=0.8, fusion_mode=FusionMode.TEXT_ONLY)
        result = index.retrieve("the query", cfg)
        assert result.doc_ids() == ["doc-a", "doc-b"]
        assert not result.abstained
        assert result.best_score == pytest.approx(0.95, abs=1e-9)

    def test_high_threshold_abstains_with_best_score(self):
        index = build_planted_index()
        cfg = RetrievalConfig(theta=0.99, fusion_mode=FusionMode.TEXT_ONLY)
        result = index.retrieve("the query", cfg)
        assert result.abstained
        assert result.documents == []
        assert result.best_score == pytest.approx(0.95, abs=1e-9)

    def test_self_retrieval_scores_one(self, hash_embedder):
        index = DocumentIndex(hash_embedder)
        index.add("doc-1", "t", "the statute of limitations bars stale claims")
        index.add("doc-2", "t", "employment law covers dismissal")
        cfg = RetrievalConfig(theta=0.85, fusion_mode=FusionMode.CONVEX, beta=1.0)
        result = index.retrieve("the statute of limitations bars stale claims", cfg)
        assert result.doc_ids()[0] == "doc-1"
        assert result.documents[0][1] == pytest.approx(1.0, abs=1e-9)

    def test_sorted_descending_ties_by_id(self, planted_embedder):
        v = unit([1, 1, 0, 0, 0, 0, 0, 0])
        planted_embedder.plant("q", v)
        planted_embedder.plant("same1", v.copy())
        planted_embedder.plant("same2", v.copy())
        index = DocumentIndex(planted_embedder)
        index.add("doc-z", "", "same1")
        index.add("doc-a", "", "same2")
        cfg = RetrievalConfig(theta=0.5, fusion_mode=FusionMode.TEXT_ONLY)
        assert index.retrieve("q", cfg).doc_ids() == ["doc-a", "doc-z"]

    def test_max_results_caps(self):
        index = build_planted_index()
        cfg = RetrievalConfig(theta=0.5, fusion_mode=FusionMode.TEXT_ONLY, max_results=2)
        assert index.retrieve("the query", cfg).doc_ids() == ["doc-a", "doc-b"]

    def test_raising_theta_never_grows_result(self):
        index = build_planted_index()
        sizes = []
        for theta in [0.6, 0.8, 0.9, 0.97]:
            cfg = RetrievalConfig(theta=theta, fusion_mode=FusionMode.TEXT_ONLY)
            sizes.append(len(index.retrieve("the query", cfg).documents))
        assert sizes == sorted(sizes, reverse=True)

    def test_membership_matches_brute_force(self):
        rng = np.random.default_rng(42)
        dim = 16
        emb = PlantedEmbedder(dim=dim)
        texts = []
        for i in range(40):
            text = f"document body {i}"
            emb.plant(text, unit(rng.normal(size=dim)))
            texts.append(text)
        index = DocumentIndex(emb)
        for i, text in enumerate(texts):
            index.add(f"d{i:02d}", "", text)
        base = unit(rng.normal(size=dim))
        emb.plant("probe", base)
        for theta in (0.2, 0.5, 0.8):
            cfg = RetrievalConfig(theta=theta, fusion_mode=FusionMode.TEXT_ONLY, max_results=100)
            got = set(index.retrieve("probe", cfg).doc_ids())
            expected = set()
            for i, text in enumerate(texts):
                v = emb.planted[text]
                cos = float(np.dot(base, v) / (np.linalg.norm(base) * np.linalg.norm(v)))
                if cos >= theta:
                    expected.add(f"d{i:02d}")
            assert got == expected

    def test_abstained_iff_empty_iff_best_below_theta(self):
        index = build_planted_index()
        for theta in (0.7, 0.8, 0.9, 0.96):
            cfg = RetrievalConfig(theta=theta, fusion_mode=FusionMode.TEXT_ONLY)
            result = index.retrieve("the query", cfg)
            assert result.abstained == (len(result.documents) == 0)
            assert result.abstained == (result.best_score < theta)


class TestFusedRetrieval:
    def test_kg_term_lifts_linked_documents(self, hash_embedder, fixture_gazetteer):
        gaz = Gazetteer.from_records(fixture_gazetteer)
        index = DocumentIndex(hash_embedder, gaz)
        index.add("doc-x", "", "Statute X applies to Contract Law in all commercial matters.")
        index.add("doc-y", "", "Cooking recipes for weeknight dinners and desserts.")
        entity_vectors = {
            "E_STATUTE_X": np.array([1.0, 0.0]),
            "E_CONTRACT_LAW": np.array([0.9, math.sqrt(1 - 0.81)]),
        }
        kg = KGEmbeddings(entity_vectors, {}, dim=2, trained_epoch=1)
        cfg = RetrievalConfig(theta=0.3, beta=0.5, fusion_mode=FusionMode.CONVEX)
        result = index.retrieve("How does Statute X affect agreements?", cfg, kg)
        assert result.doc_ids()[0] == "doc-x"

    def test_missing_embeddings_with_links_raises(self, hash_embedder, fixture_gazetteer):
        from lexrag.errors import ConfigurationError

        gaz = Gazetteer.from_records(fixture_gazetteer)
        index = DocumentIndex(hash_embedder, gaz)
        index.add("doc-x", "", "Statute X applies to Contract Law.")
        cfg = RetrievalConfig(theta=0.1, fusion_mode=FusionMode.CONVEX)
        with pytest.raises(ConfigurationError):
            index.retrieve("What does Statute X cover?", cfg, kg_embeddings=None)

    def test_no_links_no_embeddings_needed(self, hash_embedder):
        index = DocumentIndex(hash_embedder)
        index.add("doc-x", "", "plain text with no entities")
        cfg = RetrievalConfig(theta=0.05, fusion_mode=FusionMode.CONVEX, beta=1.0)
        result = index.retrieve("plain text with no entities", cfg)
        assert result.doc_ids() == ["doc-x"]

"""Document index with fused text+graph similarity and threshold retrieval.

Scoring is an exact exhaustive scan (no ANN structure): desk-scale corpora
keep brute force fast and oracle-exact. A query either clears the
similarity threshold with at least one document or the result abstains.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .embedding import Embedder, Vector, cosine, embed
from .errors import (
    ConfigurationError,
    ConflictError,
    DegenerateInputError,
    IndexEmptyError,
    NotFoundError,
    ValidationError,
)
from .kg import EntityLinkSet, Gazetteer, KGEmbeddings, kg_similarity, link_entities


class FusionMode(str, Enum):
    """How text and knowledge-graph similarity combine into one score."""

    ADDITIVE = "additive"      # (v_x.v_d + alpha*kg) / (|v_x||v_d| + alpha)
    CONVEX = "convex"          # beta*text + (1-beta)*kg
    TEXT_ONLY = "text_only"    # raw cosine


@dataclass
class RetrievalConfig:
    theta: float = 0.85
    alpha: float = 0.5
    beta: float = 0.5
    fusion_mode: FusionMode = FusionMode.CONVEX
    max_results: int = 10

    def __post_init__(self):
        self.fusion_mode = FusionMode(self.fusion_mode)
        if not 0.0 < self.theta <= 1.0:
            raise ValidationError(f"theta must be in (0, 1], got {self.theta}")
        if self.alpha < 0.0:
            raise ValidationError(f"alpha must be >= 0, got {self.alpha}")
        if not 0.0 <= self.beta <= 1.0:
            raise ValidationError(f"beta must be in [0, 1], got {self.beta}")
        if self.max_results < 1:
            raise ValidationError(f"max_results must be positive, got {self.max_results}")


@dataclass
class DocumentRecord:
    id: str
    title: str
    text: str
    tags: frozenset[str]
    vector: Vector
    links: EntityLinkSet


@dataclass
class RetrievalResult:
    """Documents clearing the threshold, best-first; empty means abstention."""

    documents: list[tuple[DocumentRecord, float]]
    abstained: bool
    best_score: float

    def doc_ids(self) -> list[str]:
        return [doc.id for doc, _ in self.documents]


def fuse_scores(
    text_sim: float,
    kg_sim: float,
    cfg: RetrievalConfig,
    norms: tuple[float, float] = (1.0, 1.0),
) -> float:
    """Combine a text cosine and a graph similarity per the configured mode.

    The additive mode needs the raw vector norms because it renormalizes
    the dot product jointly with the graph term.
    """
    if not -1.0 - 1e-9 <= text_sim <= 1.0 + 1e-9:
        raise ValidationError(f"text similarity out of range: {text_sim}")
    if not 0.0 <= kg_sim <= 1.0:
        raise ValidationError(f"kg similarity out of range: {kg_sim}")
    if cfg.fusion_mode is FusionMode.TEXT_ONLY:
        return text_sim
    if cfg.fusion_mode is FusionMode.CONVEX:
        return cfg.beta * text_sim + (1.0 - cfg.beta) * kg_sim
    nx, nd = norms
    if nx <= 0.0 or nd <= 0.0:
        raise DegenerateInputError("additive fusion undefined for zero-norm vectors")
    dot = text_sim * nx * nd
    return (dot + cfg.alpha * kg_sim) / (nx * nd + cfg.alpha)


class DocumentIndex:
    """In-memory exact-scan index; reads are lock-free over immutable records."""

    def __init__(self, embedder: Embedder, gazetteer: Gazetteer | None = None):
        self.embedder = embedder
        self.gazetteer = gazetteer or Gazetteer()
        self._docs: dict[str, DocumentRecord] = {}
        self._write_lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._docs)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._docs

    def get(self, doc_id: str) -> DocumentRecord:
        try:
            return self._docs[doc_id]
        except KeyError:
            raise NotFoundError(f"no document {doc_id!r}") from None

    def documents(self) -> list[DocumentRecord]:
        return [self._docs[k] for k in sorted(self._docs)]

    def add(self, doc_id: str, title: str, text: str, tags=()) -> DocumentRecord:
        """Embed, link, and register one document; duplicate ids conflict."""
        if not doc_id or not str(doc_id).strip():
            raise ValidationError("document id must be nonempty")
        if not text or not text.strip():
            raise ValidationError(f"document {doc_id!r} has empty text")
        with self._write_lock:
            if doc_id in self._docs:
                raise ConflictError(f"document id {doc_id!r} already indexed")
            record = DocumentRecord(
                id=doc_id,
                title=title,
                text=text,
                tags=frozenset(tags),
                vector=embed(text, self.embedder),
                links=link_entities(text, self.gazetteer, source_id=doc_id),
            )
            self._docs[doc_id] = record
        return record

    def retrieve(
        self,
        query: str,
        cfg: RetrievalConfig,
        kg_embeddings: KGEmbeddings | None = None,
    ) -> RetrievalResult:
        """Exactly the documents whose fused score clears cfg.theta.

        Results are sorted by score descending (ties by ascending id) and
        capped at cfg.max_results. best_score is always reported, even on
        abstention.
        """
        if not self._docs:
            raise IndexEmptyError("cannot retrieve from an empty index")
        v_x = embed(query, self.embedder)
        nx = float(np.linalg.norm(v_x))
        query_links = link_entities(query, self.gazetteer, source_id="query")

        scored: list[tuple[float, str, DocumentRecord]] = []
        for doc in self.documents():
            text_sim = cosine(v_x, doc.vector)
            if cfg.fusion_mode is FusionMode.TEXT_ONLY:
                kg_sim = 0.0
            elif not query_links or not doc.links:
                kg_sim = 0.0
            elif kg_embeddings is None:
                raise ConfigurationError(
                    "fusion mode needs trained graph embeddings but none are loaded"
                )
            else:
                kg_sim = kg_similarity(query_links, doc.links, kg_embeddings)
            nd = float(np.linalg.norm(doc.vector))
            fused = fuse_scores(text_sim, kg_sim, cfg, norms=(nx, nd))
            scored.append((fused, doc.id, doc))

        scored.sort(key=lambda s: (-s[0], s[1]))
        best_score = scored[0][0]
        selected = [(doc, score) for score, _, doc in scored if score >= cfg.theta]
        selected = selected[: cfg.max_results]
        return RetrievalResult(
            documents=selected,
            abstained=not selected,
            best_score=best_score,
        )

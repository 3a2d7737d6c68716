"""Legal knowledge triples, translation-based embeddings, and entity linking.

The graph stores deduplicated (head, relation, tail) facts. Embeddings are
trained offline by translation: a fact is plausible when head + relation
lands near tail, optimized with a margin ranking loss against corrupted
triples. Text is linked to entities via a gazetteer (longest match wins),
and graph-side similarity between two linked texts is a symmetric
mean-max cosine over their entity vectors.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .embedding import Vector
from .errors import (
    EmbeddingLookupError,
    ParseError,
    ValidationError,
)


@dataclass(frozen=True)
class Triple:
    """A single (head, relation, tail) fact. head == tail is allowed."""

    head: str
    relation: str
    tail: str

    def __post_init__(self):
        for name, value in (("head", self.head), ("relation", self.relation), ("tail", self.tail)):
            if not isinstance(value, str) or not value.strip():
                raise ValidationError(f"triple {name} must be a nonempty string")


class KnowledgeGraph:
    """Deduplicated triple store with entity/relation vocabularies.

    Single-writer: ingestion mutates in place; readers should hold a
    reference to the trained embeddings snapshot, which is immutable.
    """

    def __init__(self):
        self.entities: dict[str, int] = {}
        self.relations: dict[str, int] = {}
        self._triples: list[Triple] = []
        self._seen: set[Triple] = set()

    def __len__(self) -> int:
        return len(self._triples)

    @property
    def triples(self) -> tuple[Triple, ...]:
        return tuple(self._triples)

    def __contains__(self, triple: Triple) -> bool:
        return triple in self._seen

    def add(self, triple: Triple) -> bool:
        """Register a triple; returns True if it was new."""
        if triple in self._seen:
            return False
        for ent in (triple.head, triple.tail):
            self.entities.setdefault(ent, len(self.entities))
        self.relations.setdefault(triple.relation, len(self.relations))
        self._triples.append(triple)
        self._seen.add(triple)
        return True

    def ingest(self, records: Iterable[Triple]) -> int:
        """Add triples, returning how many were new."""
        return sum(1 for t in records if self.add(t))

    def ingest_tsv(self, source: str | Path | Iterable[str]) -> int:
        """Ingest head<TAB>relation<TAB>tail lines; returns count of new triples."""
        return self.ingest(t for _, t in parse_triples_tsv(source))

    def export(self) -> list[Triple]:
        """The deduplicated triple set, in first-seen order."""
        return list(self._triples)


def parse_triples_tsv(source: str | Path | Iterable[str]) -> Iterator[tuple[int, Triple]]:
    """Yield (line_number, Triple) from TSV text; '#' lines and blanks skipped.

    Raises ParseError with the offending line number on malformed rows.
    """
    if isinstance(source, (str, Path)):
        lines: Iterable[str] = Path(source).read_text(encoding="utf-8").splitlines()
    else:
        lines = source
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ParseError(f"line {lineno}: expected 3 tab-separated fields, got {len(parts)}", line=lineno)
        head, relation, tail = (p.strip() for p in parts)
        if not head or not relation or not tail:
            raise ParseError(f"line {lineno}: empty field in triple", line=lineno)
        yield lineno, Triple(head, relation, tail)


# --- gazetteer-based entity linking -------------------------------------------------


class Gazetteer:
    """Alias -> entity-id lookup with a configurable case-folding rule."""

    def __init__(self, entries: dict[str, str] | None = None, case_fold: bool = True):
        self.case_fold = case_fold
        self._aliases: dict[str, str] = {}
        for alias, entity_id in (entries or {}).items():
            self.add(alias, entity_id)

    def fold(self, text: str) -> str:
        return text.casefold() if self.case_fold else text

    def add(self, alias: str, entity_id: str) -> None:
        if not alias or not alias.strip():
            raise ValidationError("gazetteer alias must be nonempty")
        key = self.fold(alias.strip())
        existing = self._aliases.get(key)
        if existing is not None and existing != entity_id:
            raise ValidationError(f"alias {alias!r} already maps to {existing!r}")
        self._aliases[key] = entity_id

    def __len__(self) -> int:
        return len(self._aliases)

    def items(self) -> list[tuple[str, str]]:
        return list(self._aliases.items())

    def entries(self) -> list[dict]:
        """Serializable form: one record per entity with all its aliases."""
        by_entity: dict[str, list[str]] = {}
        for alias, eid in self._aliases.items():
            by_entity.setdefault(eid, []).append(alias)
        return [{"entity_id": eid, "aliases": sorted(aliases)} for eid, aliases in sorted(by_entity.items())]

    @classmethod
    def from_records(cls, records: list[dict], case_fold: bool = True) -> "Gazetteer":
        gaz = cls(case_fold=case_fold)
        for i, rec in enumerate(records):
            if "entity_id" not in rec or "aliases" not in rec:
                raise ValidationError(f"gazetteer record {i} missing entity_id/aliases")
            for alias in rec["aliases"]:
                gaz.add(alias, rec["entity_id"])
        return gaz

    @classmethod
    def load_json(cls, path: str | Path, case_fold: bool = True) -> "Gazetteer":
        try:
            records = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ParseError(f"gazetteer file is not valid JSON: {exc}") from exc
        if not isinstance(records, list):
            raise ValidationError("gazetteer JSON must be an array of records")
        return cls.from_records(records, case_fold=case_fold)


@dataclass(frozen=True)
class EntityMention:
    entity_id: str
    start: int
    end: int


@dataclass(frozen=True)
class EntityLinkSet:
    """Entities found in one source text, with character spans."""

    source_id: str
    mentions: tuple[EntityMention, ...] = ()

    @property
    def entity_ids(self) -> frozenset[str]:
        return frozenset(m.entity_id for m in self.mentions)

    def __bool__(self) -> bool:
        return bool(self.mentions)


def _boundary_ok(text: str, start: int, end: int) -> bool:
    before = text[start - 1] if start > 0 else " "
    after = text[end] if end < len(text) else " "
    return not before.isalnum() and not after.isalnum()


def link_entities(text: str, gazetteer: Gazetteer, source_id: str = "") -> EntityLinkSet:
    """Longest-match-first, non-overlapping gazetteer linking over word boundaries."""
    folded = gazetteer.fold(text)
    candidates: list[tuple[int, int, str]] = []
    for alias, entity_id in gazetteer.items():
        start = 0
        while True:
            idx = folded.find(alias, start)
            if idx < 0:
                break
            end = idx + len(alias)
            if _boundary_ok(folded, idx, end):
                candidates.append((idx, end, entity_id))
            start = idx + 1
    # Longest span wins; earlier start then entity id break remaining ties.
    candidates.sort(key=lambda c: (-(c[1] - c[0]), c[0], c[2]))
    taken: list[tuple[int, int, str]] = []
    for start, end, entity_id in candidates:
        if all(end <= s or start >= e for s, e, _ in taken):
            taken.append((start, end, entity_id))
    taken.sort()
    return EntityLinkSet(source_id, tuple(EntityMention(eid, s, e) for s, e, eid in taken))


@dataclass(frozen=True)
class RelationPattern:
    """Surface pattern for relation extraction between two linked entities.

    ``pattern`` is a regex matched in full against the whitespace-collapsed,
    casefolded text between the two entity spans.
    """

    relation: str
    pattern: str

    def matches(self, between: str) -> bool:
        norm = " ".join(between.split()).casefold()
        return re.fullmatch(self.pattern, norm) is not None


def extract_triples_pattern(
    text: str, gazetteer: Gazetteer, patterns: list[RelationPattern]
) -> list[Triple]:
    """Extract triples whose endpoints link via the gazetteer and whose
    connecting text matches a relation pattern. Deterministic; no matches
    yields an empty list."""
    if len(gazetteer) == 0:
        raise ValidationError("gazetteer must be nonempty for extraction")
    mentions = sorted(link_entities(text, gazetteer).mentions, key=lambda m: m.start)
    found: list[Triple] = []
    seen: set[Triple] = set()
    for i, left in enumerate(mentions):
        for right in mentions[i + 1 :]:
            if right.start < left.end:
                continue
            between = text[left.end : right.start]
            for pat in patterns:
                if pat.matches(between):
                    triple = Triple(left.entity_id, pat.relation, right.entity_id)
                    if triple not in seen:
                        seen.add(triple)
                        found.append(triple)
    return found


# --- translation embeddings ---------------------------------------------------------


@dataclass
class TransEConfig:
    """Hyperparameters for translation-embedding training."""

    dim: int = 64
    margin: float = 1.0
    learning_rate: float = 0.05
    epochs: int = 100
    negatives: int = 1
    seed: int = 0
    batch_size: int = 32

    def __post_init__(self):
        if self.dim <= 0:
            raise ValidationError("dim must be positive")
        if self.margin <= 0:
            raise ValidationError("margin must be positive")
        if self.learning_rate <= 0:
            raise ValidationError("learning rate must be positive")
        if self.epochs < 0:
            raise ValidationError("epochs must be >= 0")
        if self.negatives < 1:
            raise ValidationError("negatives per positive must be >= 1")
        if self.batch_size < 1:
            raise ValidationError("batch size must be positive")


@dataclass
class KGEmbeddings:
    """Trained entity/relation vectors; immutable snapshot once produced."""

    entity_vectors: dict[str, Vector]
    relation_vectors: dict[str, Vector]
    dim: int
    trained_epoch: int
    loss_history: list[float] = field(default_factory=list)

    def entity(self, entity_id: str) -> Vector:
        try:
            return self.entity_vectors[entity_id]
        except KeyError:
            raise EmbeddingLookupError(f"no embedding for entity {entity_id!r}") from None

    def relation(self, relation_id: str) -> Vector:
        try:
            return self.relation_vectors[relation_id]
        except KeyError:
            raise EmbeddingLookupError(f"no embedding for relation {relation_id!r}") from None


def _init_embeddings(n_ent: int, n_rel: int, dim: int, rng: np.random.Generator):
    bound = 6.0 / np.sqrt(dim)
    ent = rng.uniform(-bound, bound, size=(n_ent, dim))
    rel = rng.uniform(-bound, bound, size=(n_rel, dim))
    rel /= np.maximum(np.linalg.norm(rel, axis=1, keepdims=True), 1e-12)
    return ent, rel


def _corrupt(
    heads: np.ndarray,
    tails: np.ndarray,
    rels: np.ndarray,
    n_entities: int,
    known: set[tuple[int, int, int]],
    rng: np.random.Generator,
):
    """Uniformly corrupt head OR tail per positive, avoiding known-true triples."""
    m = len(heads)
    corrupt_head = rng.random(m) < 0.5
    neg_h = heads.copy()
    neg_t = tails.copy()
    replacement = rng.integers(0, n_entities, size=m)
    neg_h[corrupt_head] = replacement[corrupt_head]
    neg_t[~corrupt_head] = replacement[~corrupt_head]
    # Resample collisions with true triples a few times; leftovers are rare
    # and only soften the loss, never corrupt correctness.
    for _ in range(10):
        bad = np.array(
            [(int(h), int(r), int(t)) in known for h, r, t in zip(neg_h, rels, neg_t)],
            dtype=bool,
        )
        if not bad.any():
            break
        redo = rng.integers(0, n_entities, size=int(bad.sum()))
        swap_head = corrupt_head & bad
        swap_tail = (~corrupt_head) & bad
        neg_h[swap_head] = redo[: int(swap_head.sum())]
        neg_t[swap_tail] = redo[int(swap_head.sum()) :]
    return neg_h, neg_t


def train_transe(graph: KnowledgeGraph, config: TransEConfig) -> KGEmbeddings:
    """Train translation embeddings with margin ranking loss.

    Minibatch SGD on sum(max(0, margin + |h + r - t| - |h' + r - t'|))
    over uniformly corrupted heads or tails. After every batch update,
    entity vectors are renormalized to the unit sphere and relation
    vectors projected onto the unit ball; the relation bound keeps
    degenerate negatives (e.g. on tiny graphs) from satisfying the margin
    before the positive distance has actually shrunk. Reproducible under
    a fixed seed.

    Returns embeddings covering every registered entity and relation, with
    the per-epoch mean loss history attached.
    """
    if len(graph) == 0:
        raise ValidationError("cannot train on an empty graph")
    ent_ids = list(graph.entities)
    rel_ids = list(graph.relations)
    ent_index = {e: i for i, e in enumerate(ent_ids)}
    rel_index = {r: i for i, r in enumerate(rel_ids)}
    rng = np.random.default_rng(config.seed)
    E, R = _init_embeddings(len(ent_ids), len(rel_ids), config.dim, rng)

    triples = graph.triples
    all_heads = np.array([ent_index[t.head] for t in triples])
    all_rels = np.array([rel_index[t.relation] for t in triples])
    all_tails = np.array([ent_index[t.tail] for t in triples])
    known = {(int(h), int(r), int(t)) for h, r, t in zip(all_heads, all_rels, all_tails)}

    losses: list[float] = []
    for _ in range(config.epochs):
        order = rng.permutation(len(triples))
        epoch_loss = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            heads, rels, tails = all_heads[batch], all_rels[batch], all_tails[batch]
            grad_E = np.zeros_like(E)
            grad_R = np.zeros_like(R)
            for _ in range(config.negatives):
                pos_diff = E[heads] + R[rels] - E[tails]
                pos_dist = np.linalg.norm(pos_diff, axis=1)
                neg_h, neg_t = _corrupt(heads, tails, rels, len(ent_ids), known, rng)
                neg_diff = E[neg_h] + R[rels] - E[neg_t]
                neg_dist = np.linalg.norm(neg_diff, axis=1)

                violation = config.margin + pos_dist - neg_dist
                active = violation > 0
                epoch_loss += float(np.maximum(violation, 0.0).sum())
                if not active.any():
                    continue
                u_pos = pos_diff[active] / np.maximum(pos_dist[active, None], 1e-12)
                u_neg = neg_diff[active] / np.maximum(neg_dist[active, None], 1e-12)

                np.add.at(grad_E, heads[active], u_pos)
                np.add.at(grad_E, tails[active], -u_pos)
                np.add.at(grad_E, neg_h[active], -u_neg)
                np.add.at(grad_E, neg_t[active], u_neg)
                np.add.at(grad_R, rels[active], u_pos - u_neg)

            scale = config.learning_rate / (len(batch) * config.negatives)
            E -= scale * grad_E
            R -= scale * grad_R
            E /= np.maximum(np.linalg.norm(E, axis=1, keepdims=True), 1e-12)
            r_norms = np.maximum(np.linalg.norm(R, axis=1, keepdims=True), 1.0)
            R /= r_norms
        losses.append(epoch_loss / (len(triples) * config.negatives))

    return KGEmbeddings(
        entity_vectors={e: E[i].copy() for e, i in ent_index.items()},
        relation_vectors={r: R[i].copy() for r, i in rel_index.items()},
        dim=config.dim,
        trained_epoch=config.epochs,
        loss_history=losses,
    )


def transe_score(triple: Triple, embeddings: KGEmbeddings) -> float:
    """Plausibility score -|h + r - t|; 0 iff the translation is exact."""
    h = embeddings.entity(triple.head)
    r = embeddings.relation(triple.relation)
    t = embeddings.entity(triple.tail)
    return -float(np.linalg.norm(h + r - t))


def kg_similarity(a: EntityLinkSet, b: EntityLinkSet, embeddings: KGEmbeddings) -> float:
    """Symmetric mean-max cosine between two entity link sets, in [0, 1].

    Negative cosines clamp to 0 so downstream fusion stays in [0, 1].
    Either side empty scores 0.0.
    """
    ids_a = sorted(a.entity_ids)
    ids_b = sorted(b.entity_ids)
    if not ids_a or not ids_b:
        return 0.0
    va = np.stack([embeddings.entity(e) for e in ids_a])
    vb = np.stack([embeddings.entity(e) for e in ids_b])
    na = np.maximum(np.linalg.norm(va, axis=1, keepdims=True), 1e-300)
    nb = np.maximum(np.linalg.norm(vb, axis=1, keepdims=True), 1e-300)
    sims = np.clip((va / na) @ (vb / nb).T, 0.0, 1.0)
    forward = float(sims.max(axis=1).mean())
    backward = float(sims.max(axis=0).mean())
    return min(max((forward + backward) / 2.0, 0.0), 1.0)

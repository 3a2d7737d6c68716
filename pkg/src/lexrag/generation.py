"""Response generation contract plus a deterministic extractive backend.

No language model is trained or served here: the generation step is an
interface, and the reference backend answers by extracting the retrieved
sentences most similar to the query. Every emitted sentence is copied
verbatim from a retrieved document and cited, so ungrounded content is
structurally impossible.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any

from .embedding import Embedder, cosine
from .errors import BackendError, GroundingError, ValidationError
from .kg import Triple
from .moe import HandlerResult
from .retrieval import DocumentRecord

_SENTENCE_SPLIT = re.compile(r"(?<=[.?!])\s+")


def split_sentences(text: str) -> list[str]:
    """Split on ., ?, ! followed by whitespace; adequate at desk scale."""
    return [s for s in _SENTENCE_SPLIT.split(text.strip()) if s]


@dataclass
class GenerationRequest:
    query: str
    documents: list[tuple[DocumentRecord, float]]
    kg_context: list[Triple] = field(default_factory=list)
    max_tokens: int = 256
    allow_ungrounded: bool = False

    def __post_init__(self):
        if self.max_tokens < 1:
            raise ValidationError("max_tokens must be positive")


@dataclass
class ResponseDraft:
    """Generated answer text with per-sentence source citations.

    ``grounded`` is true iff every sentence of ``text`` carries a citation
    pointing into the request's documents. Rendered graph facts ride in a
    separate appendix so the answer text itself stays fully attributable.
    """

    text: str
    citations: list[tuple[int, str]]  # (sentence index, doc id)
    backend: str
    grounded: bool
    kg_appendix: tuple[str, ...] = ()

    def rendered(self) -> str:
        """Answer text plus the graph-context appendix, for display."""
        if not self.kg_appendix:
            return self.text
        appendix = "\n".join(self.kg_appendix)
        return f"{self.text}\n{appendix}" if self.text else appendix


def render_kg_context(triples: list[Triple]) -> tuple[str, ...]:
    return tuple(f"per KG: {t.head} {t.relation} {t.tail}" for t in triples)


class ExtractiveBackend:
    """Deterministic generator: rank retrieved sentences by query cosine.

    Pure function of the request under a fixed embedder, which makes the
    whole reference pipeline testable end to end.
    """

    kind = "extractive_mock"

    def __init__(self, embedder: Embedder, top_m: int = 3):
        if top_m < 1:
            raise ValidationError("top_m must be positive")
        self.embedder = embedder
        self.top_m = top_m
        self.name = f"extractive-mock-m{top_m}"

    def generate(self, req: GenerationRequest) -> ResponseDraft:
        query_vec = self.embedder.embed(req.query)
        candidates: list[tuple[float, int, int, str, str]] = []
        for doc_idx, (doc, _score) in enumerate(req.documents):
            for sent_idx, sentence in enumerate(split_sentences(doc.text)):
                sim = cosine(self.embedder.embed(sentence), query_vec)
                candidates.append((sim, doc_idx, sent_idx, sentence, doc.id))
        candidates.sort(key=lambda c: (-c[0], c[1], c[2]))

        sentences: list[str] = []
        citations: list[tuple[int, str]] = []
        budget = req.max_tokens
        for _sim, _d, _s, sentence, doc_id in candidates[: self.top_m]:
            cost = len(sentence.split())
            if cost > budget:
                break
            budget -= cost
            citations.append((len(sentences), doc_id))
            sentences.append(sentence)

        return ResponseDraft(
            text=" ".join(sentences),
            citations=citations,
            backend=self.name,
            grounded=len(citations) == len(sentences),
            kg_appendix=render_kg_context(req.kg_context),
        )


class ExternalHttpBackend:
    """Adapter slot for an external generation service.

    POSTs the request as JSON and expects {"text": ...} back. Timeouts and
    transport failures surface as backend errors, never partial drafts.
    """

    kind = "external_http"

    def __init__(self, endpoint: str, timeout: float = 10.0):
        self.endpoint = endpoint
        self.timeout = timeout
        self.name = f"external:{endpoint}"

    def generate(self, req: GenerationRequest) -> ResponseDraft:
        import httpx

        payload = {
            "query": req.query,
            "documents": [
                {"id": doc.id, "title": doc.title, "text": doc.text, "score": score}
                for doc, score in req.documents
            ],
            "kg_context": [
                {"head": t.head, "relation": t.relation, "tail": t.tail} for t in req.kg_context
            ],
            "max_tokens": req.max_tokens,
        }
        try:
            response = httpx.post(self.endpoint, json=payload, timeout=self.timeout)
            response.raise_for_status()
            body = response.json()
        except Exception as exc:  # noqa: BLE001 - all transport failures are backend errors
            raise BackendError(f"generation backend unreachable: {exc}") from exc
        text = body.get("text", "")
        return ResponseDraft(
            text=text,
            citations=[],
            backend=self.name,
            grounded=False,
            kg_appendix=render_kg_context(req.kg_context),
        )


def generate(req: GenerationRequest, backend) -> ResponseDraft:
    """Run one generation request against a backend, enforcing grounding.

    An empty document list is rejected unless the request explicitly
    allows ungrounded output.
    """
    if not req.documents and not req.allow_ungrounded:
        raise GroundingError("no retrieved documents; ungrounded generation not allowed")
    draft = backend.generate(req)
    doc_ids = {doc.id for doc, _ in req.documents}
    for _idx, doc_id in draft.citations:
        if doc_id not in doc_ids:
            raise ValidationError(f"draft cites {doc_id!r}, not among retrieved documents")
    return draft


class ExtractiveAnswerHandler:
    """Expert handler that answers by extraction over the routed context.

    The context must expose ``documents`` (scored records) and
    ``kg_triples``; the handler returns the draft text, its embedding, and
    per-sentence citations.
    """

    kind = "extractive"

    def __init__(self, embedder: Embedder, top_m: int = 3, max_tokens: int = 256):
        self.embedder = embedder
        self.backend = ExtractiveBackend(embedder, top_m=top_m)
        self.max_tokens = max_tokens

    def handle(self, query: str, context: Any) -> HandlerResult:
        req = GenerationRequest(
            query=query,
            documents=list(getattr(context, "documents", []) or []),
            kg_context=list(getattr(context, "kg_triples", []) or []),
            max_tokens=self.max_tokens,
        )
        draft = generate(req, self.backend)
        return HandlerResult(
            payload=draft.text,
            vector=self.embedder.embed(draft.text),
            citations=tuple(draft.citations),
        )

"""Case collaboration workflow: intake, research, routing, review, release.

A case is an event-sourced record: every mutation appends an event, the
current state is a fold over the log, and replaying the log reconstructs
the case exactly. State changes happen only through the declared
transition relation; anything else is rejected.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from .embedding import Embedder
from .errors import (
    AuthorizationError,
    IllegalTransitionError,
    NotFoundError,
    TemplateError,
    ValidationError,
)
from .generation import split_sentences
from .kg import KGEmbeddings, Triple, link_entities
from .moe import (
    ExpertRegistry,
    GatingNetwork,
    aggregate,
    execute,
    gate,
    top_k,
)
from .retrieval import DocumentIndex, DocumentRecord, RetrievalConfig, RetrievalResult


class CaseState(str, Enum):
    INTAKE = "Intake"
    FORMULATED = "Formulated"
    RESEARCHED = "Researched"
    ROUTED = "Routed"
    AGGREGATED = "Aggregated"
    ADVISOR_REVIEW = "AdvisorReview"
    REVISE = "Revise"
    PARALEGAL_FINALIZE = "ParalegalFinalize"
    RELEASED = "Released"
    ABSTAINED = "Abstained"
    REJECTED = "Rejected"


class EventKind(str, Enum):
    CREATED = "created"
    FORMULATED = "formulated"
    RESEARCHED = "researched"
    ABSTAINED = "abstained"
    ROUTED = "routed"
    AGGREGATED = "aggregated"
    ROUTING_FAILED = "routing_failed"
    REVIEW_OPENED = "review_opened"
    REVIEW_APPROVED = "review_approved"
    REVIEW_REVISED = "review_revised"
    RELEASED = "released"


#: The complete legal transition relation. Any (state, event) pair absent
#: here is an illegal transition. REJECTED is a reserved terminal state with
#: no inbound transitions.
TRANSITIONS: dict[CaseState, dict[EventKind, CaseState]] = {
    CaseState.INTAKE: {EventKind.FORMULATED: CaseState.FORMULATED},
    CaseState.FORMULATED: {EventKind.RESEARCHED: CaseState.RESEARCHED},
    CaseState.RESEARCHED: {
        EventKind.ROUTED: CaseState.ROUTED,
        EventKind.ABSTAINED: CaseState.ABSTAINED,
    },
    CaseState.ROUTED: {
        EventKind.AGGREGATED: CaseState.AGGREGATED,
        EventKind.ROUTING_FAILED: CaseState.REVISE,
    },
    CaseState.AGGREGATED: {
        EventKind.REVIEW_OPENED: CaseState.ADVISOR_REVIEW,
        EventKind.REVIEW_APPROVED: CaseState.PARALEGAL_FINALIZE,
        EventKind.REVIEW_REVISED: CaseState.REVISE,
    },
    CaseState.ADVISOR_REVIEW: {
        EventKind.REVIEW_APPROVED: CaseState.PARALEGAL_FINALIZE,
        EventKind.REVIEW_REVISED: CaseState.REVISE,
    },
    CaseState.REVISE: {EventKind.FORMULATED: CaseState.FORMULATED},
    CaseState.PARALEGAL_FINALIZE: {EventKind.RELEASED: CaseState.RELEASED},
    CaseState.RELEASED: {},
    CaseState.ABSTAINED: {},
    CaseState.REJECTED: {},
}


def transition(state: CaseState, kind: EventKind) -> CaseState:
    """Next state for an event, or an illegal-transition error."""
    target = TRANSITIONS[state].get(kind)
    if target is None:
        raise IllegalTransitionError(f"event {kind.value!r} not allowed in state {state.value!r}")
    return target


@dataclass
class CaseEvent:
    seq: int
    timestamp: float
    actor: str
    kind: EventKind
    data: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "timestamp": self.timestamp,
            "actor": self.actor,
            "kind": self.kind.value,
            "data": self.data,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CaseEvent":
        return cls(d["seq"], d["timestamp"], d["actor"], EventKind(d["kind"]), d.get("data", {}))


@dataclass
class QuestionOutcome:
    """Everything that happened to one question of a case."""

    index: int
    text: str
    abstained: bool = False
    documents: list[tuple[str, float]] = field(default_factory=list)  # (doc id, score)
    best_score: float = 0.0
    gates: list[float] = field(default_factory=list)
    active: list[int] = field(default_factory=list)
    action: int | None = None  # top-1 routed expert
    gate_version: int | None = None
    answer: str = ""
    citations: list[tuple[int, str]] = field(default_factory=list)
    contributions: list[tuple[int, float, str]] = field(default_factory=list)


@dataclass
class FinalDocument:
    case_id: str
    text: str
    citations: list[tuple[int, int, str]]  # (question idx, sentence idx, doc id)
    advisor_approval: tuple[str, float]  # (actor, timestamp)
    paralegal_signoff: tuple[str, float]
    template_id: str


class Case:
    """Event-sourced case; mutate only through record()."""

    def __init__(self, case_id: str, objectives: str, actor: str, timestamp: float):
        self.id = case_id
        self.objectives = objectives
        self.queries: list[str] = []
        self.state = CaseState.INTAKE
        self.history: list[CaseEvent] = []
        self.questions: list[QuestionOutcome] = []
        self.aggregated_text: str | None = None
        self.revision_notes: list[str] = []
        self.final_document: FinalDocument | None = None
        self._append(EventKind.CREATED, actor, {"objectives": objectives}, timestamp)

    def _append(self, kind: EventKind, actor: str, data: dict, timestamp: float) -> CaseEvent:
        event = CaseEvent(
            seq=len(self.history) + 1,
            timestamp=timestamp,
            actor=actor,
            kind=kind,
            data=data,
        )
        self.history.append(event)
        return event

    def record(self, kind: EventKind, actor: str, data: dict, timestamp: float) -> CaseEvent:
        """Validate the transition, then append the event and move state."""
        self.state = transition(self.state, kind)
        return self._append(kind, actor, data, timestamp)

    @property
    def created_at(self) -> float:
        return self.history[0].timestamp

    def citations(self) -> list[tuple[int, int, str]]:
        out = []
        for q in self.questions:
            out.extend((q.index, sent, doc) for sent, doc in q.citations)
        return out


def _apply_event_fields(case: Case, event: CaseEvent) -> None:
    """Project one event's payload onto the case's derived fields."""
    data = event.data
    if event.kind is EventKind.FORMULATED:
        case.objectives = data["objectives"]
        case.queries = list(data["queries"])
        case.questions = [QuestionOutcome(i, q) for i, q in enumerate(case.queries)]
        case.aggregated_text = None
        case.final_document = None
    elif event.kind is EventKind.RESEARCHED:
        for entry in data["questions"]:
            q = case.questions[entry["index"]]
            q.abstained = entry["abstained"]
            q.best_score = entry["best_score"]
            q.documents = [(d, s) for d, s in entry["documents"]]
    elif event.kind is EventKind.ROUTED:
        for entry in data["questions"]:
            q = case.questions[entry["index"]]
            q.gates = list(entry["gates"])
            q.active = list(entry["active"])
            q.action = entry["action"]
            q.gate_version = entry.get("gate_version")
    elif event.kind is EventKind.AGGREGATED:
        for entry in data["sections"]:
            q = case.questions[entry["index"]]
            q.answer = entry["text"]
            q.citations = [(s, d) for s, d in entry["citations"]]
            q.contributions = [(i, w, p) for i, w, p in entry["contributions"]]
        case.aggregated_text = data["text"]
    elif event.kind is EventKind.REVIEW_REVISED:
        case.revision_notes.append(data.get("notes", ""))
    elif event.kind is EventKind.RELEASED:
        case.final_document = FinalDocument(
            case_id=case.id,
            text=data["text"],
            citations=[(q, s, d) for q, s, d in data["citations"]],
            advisor_approval=(data["advisor"]["actor"], data["advisor"]["timestamp"]),
            paralegal_signoff=(data["paralegal"]["actor"], data["paralegal"]["timestamp"]),
            template_id=data["template_id"],
        )


def replay_case(case_id: str, events: list[CaseEvent]) -> Case:
    """Reconstruct a case purely from its event log."""
    if not events or events[0].kind is not EventKind.CREATED:
        raise ValidationError("event log must start with a created event")
    first = events[0]
    case = Case(case_id, first.data.get("objectives", ""), first.actor, first.timestamp)
    for event in events[1:]:
        case.state = transition(case.state, event.kind)
        case.history.append(event)
        _apply_event_fields(case, event)
    return case


class CaseStore:
    """Cases by id with per-case exclusive guards; ids issued sequentially."""

    def __init__(self):
        self._cases: dict[str, Case] = {}
        self._locks: dict[str, threading.RLock] = {}
        self._counter = 0
        self._lock = threading.Lock()

    def new_case(self, objectives: str, actor: str, timestamp: float) -> Case:
        with self._lock:
            self._counter += 1
            case_id = f"case-{self._counter:04d}"
            case = Case(case_id, objectives, actor, timestamp)
            self._cases[case_id] = case
            self._locks[case_id] = threading.RLock()
        return case

    def restore(self, case: Case) -> None:
        with self._lock:
            self._cases[case.id] = case
            self._locks[case.id] = threading.RLock()
            suffix = case.id.rsplit("-", 1)[-1]
            if suffix.isdigit():
                self._counter = max(self._counter, int(suffix))

    def get(self, case_id: str) -> Case:
        try:
            return self._cases[case_id]
        except KeyError:
            raise NotFoundError(f"no case {case_id!r}") from None

    def guard(self, case_id: str) -> threading.RLock:
        self.get(case_id)
        return self._locks[case_id]

    def all(self) -> list[Case]:
        return [self._cases[k] for k in sorted(self._cases)]

    def in_states(self, states: set[CaseState]) -> list[Case]:
        return [c for c in self.all() if c.state in states]


DEFAULT_TEMPLATES = {
    "identity": "{{body}}",
    "default": (
        "FINAL DOCUMENT — {{case_id}}\n"
        "\n"
        "{{body}}\n"
        "\n"
        "Citations:\n"
        "{{citations}}\n"
    ),
}


class TemplateStore:
    """Release templates with {{body}}, {{citations}}, {{case_id}} placeholders."""

    def __init__(self, templates: dict[str, str] | None = None):
        self.templates = dict(DEFAULT_TEMPLATES)
        if templates:
            self.templates.update(templates)

    def render(self, template_id: str, body: str, citations: str, case_id: str) -> str:
        if template_id not in self.templates:
            raise TemplateError(f"no release template {template_id!r}")
        text = self.templates[template_id]
        return (
            text.replace("{{body}}", body)
            .replace("{{citations}}", citations)
            .replace("{{case_id}}", case_id)
        )


@dataclass
class QueryContext:
    """What an expert sees for one question."""

    documents: list[tuple[DocumentRecord, float]]
    kg_triples: list[Triple]


class CollaborationWorkflow:
    """Drives a case through the role pipeline.

    Components are injected so policy versions and graph embeddings can be
    swapped without touching in-flight cases; per-question routing uses
    whatever gate snapshot is current when routing runs.
    """

    def __init__(
        self,
        index: DocumentIndex,
        retrieval_cfg: RetrievalConfig,
        registry: ExpertRegistry,
        gate_source: Callable[[], GatingNetwork],
        embedder: Embedder,
        k: int = 2,
        renormalize: bool = True,
        kg_source: Callable[[], KGEmbeddings | None] = lambda: None,
        triple_source: Callable[[frozenset[str]], list[Triple]] = lambda _: [],
        templates: TemplateStore | None = None,
        clock: Callable[[], float] = time.time,
    ):
        self.index = index
        self.retrieval_cfg = retrieval_cfg
        self.registry = registry
        self.gate_source = gate_source
        self.embedder = embedder
        self.k = k
        self.renormalize = renormalize
        self.kg_source = kg_source
        self.triple_source = triple_source
        self.templates = templates or TemplateStore()
        self.clock = clock
        self.store = CaseStore()

    # -- consultant ------------------------------------------------------------------

    def create_case(self, objectives: str, actor: str = "Consultant") -> Case:
        return self.store.new_case(objectives, actor, self.clock())

    def consultant_formulate(self, case: Case, objectives: str, actor: str = "Consultant") -> list[str]:
        """Turn free-form objectives into one structured query per line."""
        queries = [line.strip() for line in (objectives or "").splitlines() if line.strip()]
        if not queries:
            raise ValidationError("objectives must contain at least one nonempty line")
        with self.store.guard(case.id):
            event = case.record(
                EventKind.FORMULATED,
                actor,
                {"objectives": objectives, "queries": queries},
                self.clock(),
            )
            _apply_event_fields(case, event)
        return queries

    # -- researcher --------------------------------------------------------------------

    def researcher_retrieve(
        self, case: Case, cfg: RetrievalConfig | None = None, actor: str = "Researcher"
    ) -> list[RetrievalResult]:
        """Retrieve per question; the case abstains only if every question does."""
        cfg = cfg or self.retrieval_cfg
        with self.store.guard(case.id):
            if case.state is not CaseState.FORMULATED:
                raise IllegalTransitionError(
                    f"retrieval requires a formulated case, state is {case.state.value!r}"
                )
            kg = self.kg_source()
            results = [self.index.retrieve(q, cfg, kg) for q in case.queries]
            entries = [
                {
                    "index": i,
                    "abstained": r.abstained,
                    "best_score": r.best_score,
                    "documents": [[doc.id, score] for doc, score in r.documents],
                }
                for i, r in enumerate(results)
            ]
            event = case.record(
                EventKind.RESEARCHED, actor, {"questions": entries}, self.clock()
            )
            _apply_event_fields(case, event)
            if all(r.abstained for r in results):
                case.record(EventKind.ABSTAINED, actor, {}, self.clock())
        return results

    # -- routing and aggregation -------------------------------------------------------

    def _context_for(self, question: QuestionOutcome) -> QueryContext:
        documents = [(self.index.get(doc_id), score) for doc_id, score in question.documents]
        query_links = link_entities(question.text, self.index.gazetteer)
        triples = self.triple_source(query_links.entity_ids)
        return QueryContext(documents=documents, kg_triples=triples)

    def route_and_answer(self, case: Case, actor: str = "System") -> str | None:
        """Gate, execute, and aggregate every non-abstained question.

        Returns the aggregated answer text, or None when every expert
        failed on some question and the case fell back to revision.
        """
        with self.store.guard(case.id):
            if case.state is not CaseState.RESEARCHED:
                raise IllegalTransitionError(
                    f"routing requires a researched case, state is {case.state.value!r}"
                )
            net = self.gate_source()
            routing_entries = []
            plans = []
            for q in case.questions:
                if q.abstained:
                    continue
                v = self.embedder.embed(q.text)
                g = gate(v, net)
                decision = top_k(g, self.k, renormalize=self.renormalize)
                action = max(range(len(g)), key=lambda i: (g[i], -i)) + 1
                routing_entries.append(
                    {
                        "index": q.index,
                        "gates": [float(x) for x in g.probabilities],
                        "active": list(decision.active),
                        "action": action,
                        "gate_version": net.version,
                    }
                )
                plans.append((q, g, decision))
            event = case.record(
                EventKind.ROUTED, actor, {"questions": routing_entries}, self.clock()
            )
            _apply_event_fields(case, event)

            sections = []
            failed_questions = []
            for q, g, decision in plans:
                context = self._context_for(q)
                outputs, failures = execute(decision, q.text, context, self.registry)
                if not outputs:
                    failed_questions.append(
                        {"index": q.index, "failures": [f"expert {f.expert_id}: {f.error}" for f in failures]}
                    )
                    continue
                agg = aggregate(g, outputs, renormalize=self.renormalize)
                # Citations are reindexed against the joined section text, in
                # the same weight order (and with the same duplicate-payload
                # elision) the text view applies.
                by_id = {o.expert_id: o for o in outputs}
                citations: list[list] = []
                offset = 0
                for expert_id, _weight, payload in agg.distinct_contributions():
                    citations.extend([offset + s, d] for s, d in by_id[expert_id].citations)
                    offset += len(split_sentences(payload))
                sections.append(
                    {
                        "index": q.index,
                        "text": agg.text,
                        "citations": citations,
                        "contributions": [[i, w, p] for i, w, p in agg.contributions],
                        "failures": [f"expert {f.expert_id}: {f.error}" for f in failures],
                    }
                )

            if failed_questions:
                case.record(
                    EventKind.ROUTING_FAILED,
                    actor,
                    {"diagnostics": failed_questions},
                    self.clock(),
                )
                return None

            for q in case.questions:
                if q.abstained:
                    sections.append({"index": q.index, "text": "", "citations": [], "contributions": []})
            sections.sort(key=lambda s: s["index"])
            text = "\n\n".join(s["text"] for s in sections if s["text"])
            event = case.record(
                EventKind.AGGREGATED, actor, {"sections": sections, "text": text}, self.clock()
            )
            _apply_event_fields(case, event)
        return text

    # -- advisor -----------------------------------------------------------------------

    def advisor_open_review(self, case: Case, actor_role: str = "Advisor") -> CaseState:
        if actor_role != "Advisor":
            raise AuthorizationError(f"only the Advisor may open review, not {actor_role!r}")
        with self.store.guard(case.id):
            case.record(EventKind.REVIEW_OPENED, actor_role, {}, self.clock())
        return case.state

    def advisor_review(
        self, case: Case, verdict: str, notes: str = "", actor_role: str = "Advisor"
    ) -> CaseState:
        """Advisor verdict: approve moves to finalization, revise loops back."""
        if actor_role != "Advisor":
            raise AuthorizationError(f"review verdicts require the Advisor role, not {actor_role!r}")
        if verdict not in ("approve", "revise"):
            raise ValidationError(f"verdict must be approve or revise, got {verdict!r}")
        kind = EventKind.REVIEW_APPROVED if verdict == "approve" else EventKind.REVIEW_REVISED
        with self.store.guard(case.id):
            event = case.record(kind, actor_role, {"verdict": verdict, "notes": notes}, self.clock())
            _apply_event_fields(case, event)
        return case.state

    # -- paralegal ---------------------------------------------------------------------

    def paralegal_finalize(
        self, case: Case, template_id: str = "default", actor_role: str = "Paralegal"
    ) -> FinalDocument:
        """Render the release document; requires the advisor approval on file."""
        if actor_role != "Paralegal":
            raise AuthorizationError(f"finalization requires the Paralegal role, not {actor_role!r}")
        with self.store.guard(case.id):
            if case.state is not CaseState.PARALEGAL_FINALIZE:
                raise IllegalTransitionError(
                    f"finalize requires an approved case, state is {case.state.value!r}"
                )
            approvals = [e for e in case.history if e.kind is EventKind.REVIEW_APPROVED]
            advisor_event = approvals[-1]
            citations = case.citations()
            citation_lines = "\n".join(
                f"[q{qi + 1}.s{si + 1}] {doc}" for qi, si, doc in citations
            )
            body = case.aggregated_text or ""
            text = self.templates.render(template_id, body, citation_lines, case.id)
            now = self.clock()
            event = case.record(
                EventKind.RELEASED,
                actor_role,
                {
                    "template_id": template_id,
                    "text": text,
                    "citations": [[q, s, d] for q, s, d in citations],
                    "advisor": {"actor": advisor_event.actor, "timestamp": advisor_event.timestamp},
                    "paralegal": {"actor": actor_role, "timestamp": now},
                },
                now,
            )
            _apply_event_fields(case, event)
        return case.final_document

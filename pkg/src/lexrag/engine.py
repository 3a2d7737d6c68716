"""The engine: wires the index, graph, experts, workflow, and feedback loop
behind one object that the service and CLI drive.

State is partitioned into sub-stores (index, graph, policy, cases,
feedback), each with its own writer lock; readers work off immutable
snapshots (vectors, gate versions) so queries never block on training.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from pathlib import Path
from typing import Callable

import numpy as np

from .config import EngineConfig, ExpertSpec
from .embedding import HashEmbedder
from .errors import (
    AuthorizationError,
    ConfigurationError,
    MappingError,
    ValidationError,
)
from .evalmetrics import EvalTask, MetricReport, run_eval
from .generation import ExtractiveAnswerHandler, ExternalHttpBackend, GenerationRequest, generate
from .kg import Gazetteer, KGEmbeddings, KnowledgeGraph, Triple, train_transe
from .moe import (
    EchoHandler,
    ExpertProfile,
    ExpertRegistry,
    GatingNetwork,
    HandlerResult,
    TemplateHandler,
)
from .retrieval import DocumentIndex
from .rlhf import (
    COMPONENTS,
    POLICY_FEEDBACK_ROLES,
    FeedbackBuffer,
    FeedbackRecord,
    RewardModel,
    Trajectory,
    compute_reward,
    default_qualitative_map,
    map_qualitative,
    ppo_update,
    should_update,
)
from .workflow import (
    Case,
    CaseState,
    CollaborationWorkflow,
    TemplateStore,
)

logger = logging.getLogger(__name__)

REVIEW_STATES = {CaseState.AGGREGATED, CaseState.ADVISOR_REVIEW, CaseState.PARALEGAL_FINALIZE}


class HttpExpertHandler:
    """Expert backed by an external generation service."""

    kind = "external_http"

    def __init__(self, endpoint: str, embedder, timeout: float = 10.0):
        self.backend = ExternalHttpBackend(endpoint, timeout=timeout)
        self.embedder = embedder

    def handle(self, query: str, context) -> HandlerResult:
        req = GenerationRequest(
            query=query,
            documents=list(getattr(context, "documents", []) or []),
            kg_context=list(getattr(context, "kg_triples", []) or []),
            allow_ungrounded=True,
        )
        draft = generate(req, self.backend)
        return HandlerResult(draft.text, self.embedder.embed(draft.text), tuple(draft.citations))


class LegalEngine:
    """Retrieval, routing, review, and learning behind one façade."""

    def __init__(self, config: EngineConfig | None = None, clock: Callable[[], float] = time.time):
        self.config = config or EngineConfig()
        self.clock = clock

        emb = self.config.embedder
        if emb.kind != "hash":
            raise ConfigurationError(
                f"unknown embedder kind {emb.kind!r}; external adapters register at runtime"
            )
        self.embedder = HashEmbedder(dim=emb.dim, ngram=emb.ngram, seed=emb.seed)

        self.gazetteer = Gazetteer.from_records(self.config.gazetteer)
        self.graph = KnowledgeGraph()
        self.kg_embeddings: KGEmbeddings | None = None
        self.index = DocumentIndex(self.embedder, self.gazetteer)

        self.registry = ExpertRegistry(
            [self._build_expert(spec) for spec in self.config.moe.experts]
        )
        self.gating_net = GatingNetwork.zeros(len(self.registry), self.embedder.dim)

        self.reward_model = RewardModel(
            weights=dict(self.config.reward.weights),
            role_multipliers=dict(self.config.reward.role_multipliers),
        )
        self.qualitative_map = default_qualitative_map()
        self.buffer = FeedbackBuffer()
        self.feedback_records: list[FeedbackRecord] = []
        self.held_feedback: list[dict] = []
        self.reward_history: list[float] = []
        self.abstention_history: list[bool] = []
        self.journal: list[dict] = []

        self.templates = TemplateStore(self.config.templates)
        self.workflow = CollaborationWorkflow(
            index=self.index,
            retrieval_cfg=self.config.retrieval,
            registry=self.registry,
            gate_source=lambda: self.gating_net,
            embedder=self.embedder,
            k=self.config.moe.k,
            renormalize=self.config.moe.renormalize,
            kg_source=lambda: self.kg_embeddings,
            triple_source=self._context_triples,
            templates=self.templates,
            clock=self.clock,
        )

        self._kg_lock = threading.Lock()
        self._policy_lock = threading.Lock()
        self._feedback_lock = threading.Lock()
        self._journal_lock = threading.Lock()

    # -- construction helpers ----------------------------------------------------------

    def _build_expert(self, spec: ExpertSpec) -> ExpertProfile:
        params = dict(spec.handler_params)
        kind = spec.handler_kind
        if kind == "extractive":
            handler = ExtractiveAnswerHandler(
                self.embedder,
                top_m=int(params.get("top_m", 3)),
                max_tokens=int(params.get("max_tokens", 256)),
            )
        elif kind == "echo":
            handler = EchoHandler(params.get("label", f"expert-{spec.id}"), self.embedder)
        elif kind == "template":
            handler = TemplateHandler(params["template"], self.embedder)
        elif kind == "external_http":
            handler = HttpExpertHandler(
                params["endpoint"], self.embedder, timeout=float(params.get("timeout", 10.0))
            )
        else:
            raise ConfigurationError(f"unknown handler kind {kind!r} for expert {spec.id}")
        return ExpertProfile(id=spec.id, role=spec.role, tasks=frozenset(spec.tasks), handler=handler)

    def _context_triples(self, entity_ids: frozenset[str], limit: int = 10) -> list[Triple]:
        if not entity_ids:
            return []
        hits = [t for t in self.graph.triples if t.head in entity_ids or t.tail in entity_ids]
        return hits[:limit]

    def _journal_write(self, action: str, **details) -> None:
        """Write-ahead journal entry; appended before the mutation is acknowledged."""
        with self._journal_lock:
            self.journal.append({"timestamp": self.clock(), "action": action, **details})

    # -- ingestion ---------------------------------------------------------------------

    def ingest_documents(self, source) -> int:
        """Index documents from a JSONL path or an iterable of dicts."""
        if isinstance(source, (str, Path)):
            records = []
            for lineno, line in enumerate(
                Path(source).read_text(encoding="utf-8").splitlines(), start=1
            ):
                if not line.strip():
                    continue
                try:
                    records.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise ValidationError(f"documents line {lineno}: invalid JSON ({exc})") from exc
        else:
            records = list(source)
        self._journal_write("ingest_documents", count=len(records))
        added = 0
        for record in records:
            if "id" not in record or "text" not in record:
                raise ValidationError(f"document record missing id/text: {record}")
            self.index.add(
                str(record["id"]),
                str(record.get("title", "")),
                str(record["text"]),
                tags=record.get("tags", ()),
            )
            added += 1
        return added

    def ingest_triples(self, source) -> int:
        self._journal_write("ingest_triples")
        with self._kg_lock:
            if isinstance(source, (str, Path)):
                return self.graph.ingest_tsv(source)
            return self.graph.ingest(source)

    def set_gazetteer(self, records: list[dict]) -> int:
        """Replace the gazetteer; affects documents indexed afterwards."""
        self._journal_write("set_gazetteer", entries=len(records))
        gaz = Gazetteer.from_records(records)
        self.gazetteer = gaz
        self.index.gazetteer = gaz
        self.config.gazetteer = list(records)
        return len(gaz)

    def train_kg(self) -> dict:
        """Train graph embeddings offline and swap in the new snapshot."""
        self._journal_write("train_kg", triples=len(self.graph))
        with self._kg_lock:
            embeddings = train_transe(self.graph, self.config.transe)
            self.kg_embeddings = embeddings
        return {
            "entities": len(embeddings.entity_vectors),
            "relations": len(embeddings.relation_vectors),
            "epochs": embeddings.trained_epoch,
            "final_loss": embeddings.loss_history[-1] if embeddings.loss_history else None,
        }

    # -- the query pipeline ------------------------------------------------------------

    def answer_query(self, text: str, actor: str = "Consultant") -> dict:
        """Run one query end to end: intake, retrieval, routing, aggregation.

        The case is left awaiting advisor review (or abstained); the reply
        carries the answer draft, citations, scores, and the gate report.
        """
        self._journal_write("query", text=text)
        wf = self.workflow
        case = wf.create_case(text, actor)
        wf.consultant_formulate(case, text, actor)
        wf.researcher_retrieve(case)
        if case.state is CaseState.ABSTAINED:
            self.abstention_history.append(True)
            return self._query_reply(case)
        wf.route_and_answer(case)
        self.abstention_history.append(False)
        return self._query_reply(case)

    def _query_reply(self, case: Case) -> dict:
        questions = [
            {
                "index": q.index,
                "question": q.text,
                "abstained": q.abstained,
                "best_score": q.best_score,
                "documents": [[doc_id, score] for doc_id, score in q.documents],
            }
            for q in case.questions
        ]
        gates = [
            {
                "index": q.index,
                "g": list(q.gates),
                "active": list(q.active),
                "action": q.action,
                "policy_version": q.gate_version,
            }
            for q in case.questions
            if q.gates
        ]
        return {
            "case_id": case.id,
            "state": case.state.value,
            "answer": case.aggregated_text or "",
            "citations": [[qi, si, doc] for qi, si, doc in case.citations()],
            "abstained": case.state is CaseState.ABSTAINED,
            "scores": {"questions": questions},
            "gate": {"questions": gates},
        }

    # -- case operations ---------------------------------------------------------------

    def get_case(self, case_id: str) -> Case:
        return self.workflow.store.get(case_id)

    def case_summary(self, case: Case) -> dict:
        reply = self._query_reply(case)
        reply["objectives"] = case.objectives
        reply["queries"] = list(case.queries)
        reply["age_seconds"] = max(self.clock() - case.created_at, 0.0)
        reply["revision_notes"] = list(case.revision_notes)
        if case.final_document is not None:
            doc = case.final_document
            reply["final_document"] = {
                "text": doc.text,
                "template_id": doc.template_id,
                "advisor_approval": {"actor": doc.advisor_approval[0], "timestamp": doc.advisor_approval[1]},
                "paralegal_signoff": {"actor": doc.paralegal_signoff[0], "timestamp": doc.paralegal_signoff[1]},
            }
        return reply

    def review_case(self, case_id: str, verdict: str, notes: str, actor_role: str) -> dict:
        self._journal_write("review", case_id=case_id, verdict=verdict, actor=actor_role)
        case = self.get_case(case_id)
        if verdict == "open":
            state = self.workflow.advisor_open_review(case, actor_role)
        else:
            state = self.workflow.advisor_review(case, verdict, notes, actor_role)
        return {"case_id": case_id, "state": state.value}

    def finalize_case(self, case_id: str, template_id: str, actor_role: str) -> dict:
        self._journal_write("finalize", case_id=case_id, template_id=template_id, actor=actor_role)
        case = self.get_case(case_id)
        document = self.workflow.paralegal_finalize(case, template_id, actor_role)
        return {
            "case_id": case_id,
            "state": case.state.value,
            "document": {
                "text": document.text,
                "template_id": document.template_id,
                "citations": [[q, s, d] for q, s, d in document.citations],
            },
        }

    def review_queue(self) -> list[dict]:
        return [self.case_summary(c) for c in self.workflow.store.in_states(REVIEW_STATES)]

    # -- feedback and policy updates ---------------------------------------------------

    def submit_feedback(self, payload: dict, actor_role: str) -> dict:
        """Record reviewer feedback, reward it, and maybe update the policy.

        Qualitative labels fill their named component; all four components
        must be present after mapping. Unknown labels hold the record for
        manual scoring instead of dropping it.
        """
        if actor_role not in POLICY_FEEDBACK_ROLES:
            raise AuthorizationError(
                f"policy-affecting feedback requires Advisor or Paralegal, not {actor_role!r}"
            )
        case = self.get_case(str(payload.get("case_id", "")))
        self._journal_write("feedback", case_id=case.id, actor=actor_role)

        components = {c: payload.get(c) for c in COMPONENTS}
        label = payload.get("qualitative_label")
        if label:
            try:
                mapped = map_qualitative(label, self.qualitative_map)
            except MappingError:
                with self._feedback_lock:
                    self.held_feedback.append(
                        {"payload": dict(payload), "actor_role": actor_role, "timestamp": self.clock()}
                    )
                return {"status": "held", "reason": f"unknown qualitative label {label!r}"}
            for component, score in mapped.items():
                if components.get(component) is None:
                    components[component] = score
        missing = [c for c, v in components.items() if v is None]
        if missing:
            raise ValidationError(f"feedback missing components: {missing}")

        record = FeedbackRecord(
            response_id=str(payload.get("response_id", case.id)),
            case_id=case.id,
            actor_role=actor_role,
            qualitative_label=label,
            comment=payload.get("comment"),
            timestamp=self.clock(),
            **components,
        )
        signal = compute_reward(record, self.reward_model)

        with self._feedback_lock:
            self.feedback_records.append(record)
            self.reward_history.append(signal.reward)
        for q in case.questions:
            if q.abstained or q.action is None or not q.gates:
                continue
            self.buffer.append(
                Trajectory(
                    query_vec=self.embedder.embed(q.text),
                    old_gates=np.array(q.gates, dtype=np.float64),
                    action=q.action,
                    reward=signal.reward,
                )
            )

        updated = False
        if self.config.auto_update_policy and should_update(self.buffer, self.config.ppo):
            updated = self.update_policy(force=True)["updated"]
        return {
            "status": "accepted",
            "reward": signal.reward,
            "policy_version": self.gating_net.version,
            "updated": updated,
        }

    def update_policy(self, force: bool = False) -> dict:
        """Drain the trajectory buffer and apply one clipped-surrogate update."""
        with self._policy_lock:
            if not force and not should_update(self.buffer, self.config.ppo):
                return {
                    "updated": False,
                    "reason": "below batch threshold and no plateau",
                    "policy_version": self.gating_net.version,
                    "buffered": len(self.buffer),
                }
            batch = self.buffer.drain()
            if not batch:
                return {
                    "updated": False,
                    "reason": "no buffered trajectories",
                    "policy_version": self.gating_net.version,
                    "buffered": 0,
                }
            self._journal_write("update_policy", batch_size=len(batch))
            new_net = ppo_update(self.gating_net, batch, self.config.ppo)
            updated = new_net.version != self.gating_net.version
            self.gating_net = new_net
            return {
                "updated": updated,
                "policy_version": self.gating_net.version,
                "batch_size": len(batch),
                "baseline": self.config.ppo.baseline,
            }

    def metrics(self) -> dict:
        window = self.config.metrics_window
        recent_rewards = self.reward_history[-window:]
        recent_abstentions = self.abstention_history[-window:]
        return {
            "n_feedback": len(self.feedback_records),
            "mean_reward": float(np.mean(recent_rewards)) if recent_rewards else None,
            "policy_version": self.gating_net.version,
            "abstention_rate_window": (
                sum(recent_abstentions) / len(recent_abstentions) if recent_abstentions else None
            ),
            "n_documents": len(self.index),
            "n_triples": len(self.graph),
            "n_cases": len(self.workflow.store.all()),
            "buffered_trajectories": len(self.buffer),
        }

    # -- evaluation --------------------------------------------------------------------

    def eval_pipeline(self, top_m: int = 1) -> Callable[[str], tuple[str, bool]]:
        """Adapter scoring harness inputs through retrieval + extraction."""
        backend_handler = ExtractiveAnswerHandler(self.embedder, top_m=top_m)

        def predict(text: str) -> tuple[str, bool]:
            result = self.index.retrieve(text, self.config.retrieval, self.kg_embeddings)
            if result.abstained:
                return "", True
            context = type("Ctx", (), {"documents": result.documents, "kg_triples": []})()
            answer = backend_handler.handle(text, context)
            return answer.payload, False

        return predict

    def run_eval(self, task: EvalTask, out_path=None, top_m: int = 1) -> MetricReport:
        return run_eval(task, self.eval_pipeline(top_m=top_m), out_path=out_path)

    # -- persistence (implemented in snapshot.py) ---------------------------------------

    def save(self, path) -> str:
        from .snapshot import save_snapshot

        return save_snapshot(self, path)

    @classmethod
    def load(cls, path) -> "LegalEngine":
        from .snapshot import load_snapshot

        return load_snapshot(path)

"""Checksummed whole-engine persistence.

One self-describing JSON file holds the config, index, graph, policy,
feedback, and case event logs. Floats round-trip exactly through JSON
(shortest-repr), so a loaded engine reproduces retrieval orderings and
gate outputs bit for bit. The checksum covers the canonical payload;
corruption or a format-version mismatch refuses to load.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .config import EngineConfig
from .errors import SnapshotCorruptError, SnapshotVersionError
from .kg import EntityLinkSet, EntityMention, KGEmbeddings, Triple
from .moe import GatingNetwork
from .retrieval import DocumentRecord
from .rlhf import FeedbackRecord, Trajectory
from .workflow import CaseEvent, replay_case

FORMAT_VERSION = 1


def _canonical(payload: dict) -> bytes:
    return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _checksum(payload: dict) -> str:
    return hashlib.sha256(_canonical(payload)).hexdigest()


def _links_to_list(links: EntityLinkSet) -> list:
    return [[m.entity_id, m.start, m.end] for m in links.mentions]


def _links_from_list(source_id: str, data: list) -> EntityLinkSet:
    return EntityLinkSet(source_id, tuple(EntityMention(e, s, t) for e, s, t in data))


def build_payload(engine) -> dict:
    """Serializable view of the full engine state."""
    kg = engine.kg_embeddings
    return {
        "config": engine.config.to_dict(),
        "documents": [
            {
                "id": doc.id,
                "title": doc.title,
                "text": doc.text,
                "tags": sorted(doc.tags),
                "vector": doc.vector.tolist(),
                "links": _links_to_list(doc.links),
            }
            for doc in engine.index.documents()
        ],
        "graph": [[t.head, t.relation, t.tail] for t in engine.graph.triples],
        "kg_embeddings": None
        if kg is None
        else {
            "dim": kg.dim,
            "trained_epoch": kg.trained_epoch,
            "loss_history": list(kg.loss_history),
            "entities": {e: v.tolist() for e, v in kg.entity_vectors.items()},
            "relations": {r: v.tolist() for r, v in kg.relation_vectors.items()},
        },
        "policy": {
            "weights": engine.gating_net.weights.tolist(),
            "bias": engine.gating_net.bias.tolist(),
            "version": engine.gating_net.version,
            "baseline": engine.config.ppo.baseline,
        },
        "feedback": {
            "records": [
                {
                    "response_id": r.response_id,
                    "case_id": r.case_id,
                    "actor_role": r.actor_role,
                    "relevance": r.relevance,
                    "accuracy": r.accuracy,
                    "compliance": r.compliance,
                    "satisfaction": r.satisfaction,
                    "qualitative_label": r.qualitative_label,
                    "comment": r.comment,
                    "timestamp": r.timestamp,
                }
                for r in engine.feedback_records
            ],
            "held": list(engine.held_feedback),
            "reward_history": list(engine.reward_history),
        },
        "trajectories": [
            {
                "query_vec": t.query_vec.tolist(),
                "old_gates": t.old_gates.tolist(),
                "action": t.action,
                "reward": t.reward,
            }
            for t in engine.buffer.snapshot()
        ],
        "cases": {
            case.id: [e.to_dict() for e in case.history] for case in engine.workflow.store.all()
        },
        "abstention_history": list(engine.abstention_history),
        "journal": list(engine.journal),
    }


def save_snapshot(engine, path) -> str:
    """Write the engine state; returns the checksum."""
    payload = build_payload(engine)
    envelope = {
        "format_version": FORMAT_VERSION,
        "checksum": _checksum(payload),
        "payload": payload,
    }
    Path(path).write_text(json.dumps(envelope), encoding="utf-8")
    return envelope["checksum"]


def load_snapshot(path):
    """Rebuild an engine from a snapshot file, verifying version and checksum."""
    from .engine import LegalEngine

    try:
        envelope = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SnapshotCorruptError(f"snapshot unreadable: {exc}") from exc
    if not isinstance(envelope, dict) or "payload" not in envelope:
        raise SnapshotCorruptError("snapshot missing payload")
    version = envelope.get("format_version")
    if version != FORMAT_VERSION:
        raise SnapshotVersionError(
            f"snapshot format {version!r} not supported by format {FORMAT_VERSION}"
        )
    payload = envelope["payload"]
    if _checksum(payload) != envelope.get("checksum"):
        raise SnapshotCorruptError("snapshot checksum mismatch")

    engine = LegalEngine(EngineConfig.from_dict(payload["config"]))

    for doc in payload["documents"]:
        record = DocumentRecord(
            id=doc["id"],
            title=doc["title"],
            text=doc["text"],
            tags=frozenset(doc["tags"]),
            vector=np.array(doc["vector"], dtype=np.float64),
            links=_links_from_list(doc["id"], doc["links"]),
        )
        engine.index._docs[record.id] = record  # bypass re-embedding: exact restore

    for head, relation, tail in payload["graph"]:
        engine.graph.add(Triple(head, relation, tail))

    kg = payload["kg_embeddings"]
    if kg is not None:
        engine.kg_embeddings = KGEmbeddings(
            entity_vectors={e: np.array(v, dtype=np.float64) for e, v in kg["entities"].items()},
            relation_vectors={r: np.array(v, dtype=np.float64) for r, v in kg["relations"].items()},
            dim=kg["dim"],
            trained_epoch=kg["trained_epoch"],
            loss_history=list(kg["loss_history"]),
        )

    policy = payload["policy"]
    engine.gating_net = GatingNetwork(
        np.array(policy["weights"], dtype=np.float64),
        np.array(policy["bias"], dtype=np.float64),
        version=policy["version"],
    )
    engine.config.ppo.baseline = policy["baseline"]

    for record in payload["feedback"]["records"]:
        engine.feedback_records.append(FeedbackRecord(**record))
    engine.held_feedback = list(payload["feedback"]["held"])
    engine.reward_history = list(payload["feedback"]["reward_history"])

    for t in payload["trajectories"]:
        engine.buffer.append(
            Trajectory(
                query_vec=np.array(t["query_vec"], dtype=np.float64),
                old_gates=np.array(t["old_gates"], dtype=np.float64),
                action=t["action"],
                reward=t["reward"],
            )
        )

    for case_id in sorted(payload["cases"]):
        events = [CaseEvent.from_dict(e) for e in payload["cases"][case_id]]
        engine.workflow.store.restore(replay_case(case_id, events))

    engine.abstention_history = list(payload["abstention_history"])
    engine.journal = list(payload["journal"])
    return engine

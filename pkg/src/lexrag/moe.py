"""Sparse expert routing: linear-softmax gating, top-K selection,
isolated expert execution, and weighted aggregation.

The gating network is the one trainable policy in the system; snapshots
are immutable per version so routing can read while training swaps in a
new version.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Protocol

import numpy as np

from .embedding import Vector
from .errors import (
    AggregationError,
    DimensionMismatchError,
    NumericError,
    RoutingError,
    ValidationError,
)


class ExpertRole(str, Enum):
    CONSULTANT = "Consultant"
    RESEARCHER = "Researcher"
    PARALEGAL = "Paralegal"
    ADVISOR = "Advisor"


#: Task labels each role may carry.
ROLE_TASKS: dict[ExpertRole, frozenset[str]] = {
    ExpertRole.CONSULTANT: frozenset({"Question Answering"}),
    ExpertRole.RESEARCHER: frozenset(
        {"Cases Identification", "Article Recitation", "Element Extraction", "Text Classification"}
    ),
    ExpertRole.PARALEGAL: frozenset({"Document Summarization", "Contract Drafting"}),
    ExpertRole.ADVISOR: frozenset({"Case Analysis", "Judgment Prediction"}),
}

ALL_TASKS = frozenset().union(*ROLE_TASKS.values())


@dataclass
class HandlerResult:
    """What one expert produced for one query."""

    payload: str
    vector: Vector | None = None
    citations: tuple[tuple[int, str], ...] = ()  # (sentence index, doc id)


class ExpertHandler(Protocol):
    """Executes one query with retrieved context."""

    kind: str

    def handle(self, query: str, context: Any) -> HandlerResult: ...


@dataclass
class ExpertProfile:
    id: int
    role: ExpertRole
    tasks: frozenset[str]
    handler: ExpertHandler | None = None

    def __post_init__(self):
        self.role = ExpertRole(self.role)
        self.tasks = frozenset(self.tasks)
        if self.id < 1:
            raise ValidationError(f"expert id must be >= 1, got {self.id}")
        unknown = self.tasks - ROLE_TASKS[self.role]
        if unknown:
            raise ValidationError(
                f"tasks {sorted(unknown)} not in the {self.role.value} task set"
            )


class ExpertRegistry:
    """Experts with contiguous ids 1..N."""

    def __init__(self, profiles: list[ExpertProfile]):
        if not profiles:
            raise ValidationError("registry needs at least one expert")
        ids = sorted(p.id for p in profiles)
        if ids != list(range(1, len(profiles) + 1)):
            raise ValidationError(f"expert ids must be contiguous 1..N, got {ids}")
        self._by_id = {p.id: p for p in profiles}

    def __len__(self) -> int:
        return len(self._by_id)

    def __iter__(self):
        return iter(self.profiles())

    def profiles(self) -> list[ExpertProfile]:
        return [self._by_id[i] for i in sorted(self._by_id)]

    def get(self, expert_id: int) -> ExpertProfile:
        try:
            return self._by_id[expert_id]
        except KeyError:
            raise RoutingError(f"no expert with id {expert_id}") from None


# --- gating -------------------------------------------------------------------------


@dataclass
class GatingNetwork:
    """Linear-softmax routing policy over N experts; immutable per version."""

    weights: np.ndarray  # (N, d)
    bias: np.ndarray  # (N,)
    version: int = 0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.ndim != 1:
            raise ValidationError("weights must be 2-d and bias 1-d")
        if self.weights.shape[0] != self.bias.shape[0]:
            raise ValidationError(
                f"weights rows {self.weights.shape[0]} != bias length {self.bias.shape[0]}"
            )
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise ValidationError("gating parameters must be finite")
        self.weights.setflags(write=False)
        self.bias.setflags(write=False)

    @property
    def n_experts(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    @classmethod
    def zeros(cls, n_experts: int, dim: int) -> "GatingNetwork":
        return cls(np.zeros((n_experts, dim)), np.zeros(n_experts), version=0)


@dataclass
class GatingDistribution:
    """Strictly positive probability vector over experts, summing to one."""

    probabilities: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.probabilities, dtype=np.float64)
        if g.ndim != 1 or g.size == 0:
            raise ValidationError("gating distribution must be a nonempty 1-d vector")
        if abs(float(g.sum()) - 1.0) > 1e-9:
            raise ValidationError(f"gates sum to {g.sum()}, expected 1")
        if not np.all(g > 0.0):
            raise ValidationError("gates must be strictly positive")
        g.setflags(write=False)
        self.probabilities = g

    def __len__(self) -> int:
        return len(self.probabilities)

    def __getitem__(self, i: int) -> float:
        return float(self.probabilities[i])


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax with an underflow floor keeping every
    component strictly positive."""
    z = logits - logits.max()
    e = np.exp(z)
    g = e / e.sum()
    g = np.maximum(g, np.finfo(np.float64).tiny)
    return g / g.sum()


def gate(query_vec: Vector, net: GatingNetwork) -> GatingDistribution:
    """Routing distribution softmax(W v + b) for one query embedding."""
    v = np.asarray(query_vec, dtype=np.float64)
    if v.shape != (net.dim,):
        raise DimensionMismatchError(f"query dim {v.shape} incompatible with gate dim {net.dim}")
    if not np.all(np.isfinite(v)):
        raise NumericError("non-finite query embedding")
    logits = net.weights @ v + net.bias
    if not np.all(np.isfinite(logits)):
        raise NumericError("non-finite gating logits")
    return GatingDistribution(softmax(logits))


@dataclass
class RoutingDecision:
    """The active expert set for one query: the top-K gates, ties to the
    lowest expert id."""

    active: tuple[int, ...]  # expert ids, ascending
    k: int
    gates_used: dict[int, float]  # expert id -> weight
    renormalized: bool


def top_k(g: GatingDistribution, k: int, renormalize: bool = True) -> RoutingDecision:
    """Select the min(K, N) highest-gated experts.

    With renormalize the selected gates are rescaled to sum to one (a
    convex combination); without it the raw gate values are kept and
    non-selected experts implicitly contribute zero.
    """
    if k < 1:
        raise ValidationError(f"K must be >= 1, got {k}")
    n = len(g)
    take = min(k, n)
    order = sorted(range(n), key=lambda i: (-g[i], i))
    chosen = sorted(order[:take])
    ids = tuple(i + 1 for i in chosen)
    raw = {i + 1: g[i] for i in chosen}
    if renormalize:
        total = sum(raw.values())
        weights = {eid: w / total for eid, w in raw.items()}
    else:
        weights = raw
    return RoutingDecision(active=ids, k=k, gates_used=weights, renormalized=renormalize)


# --- execution and aggregation ------------------------------------------------------


@dataclass
class ExpertOutput:
    expert_id: int
    payload: str
    vector: Vector | None = None
    citations: list = field(default_factory=list)


@dataclass
class ExpertFailure:
    expert_id: int
    error: str


def execute(
    decision: RoutingDecision,
    query: str,
    context: Any,
    registry: ExpertRegistry,
) -> tuple[list[ExpertOutput], list[ExpertFailure]]:
    """Run every active expert independently.

    A handler raising is recorded as a per-expert failure and excluded
    from aggregation; the consultation degrades instead of crashing.
    A missing handler is a configuration fault and raises.
    """
    assert decision.active, "routing produced an empty active set"
    outputs: list[ExpertOutput] = []
    failures: list[ExpertFailure] = []
    for expert_id in decision.active:
        profile = registry.get(expert_id)
        if profile.handler is None:
            raise RoutingError(f"expert {expert_id} has no registered handler")
        try:
            result = profile.handler.handle(query, context)
        except Exception as exc:  # noqa: BLE001 - isolation is the contract
            failures.append(ExpertFailure(expert_id, f"{type(exc).__name__}: {exc}"))
            continue
        outputs.append(
            ExpertOutput(expert_id, result.payload, result.vector, list(result.citations))
        )
    return outputs, failures


@dataclass
class AggregatedOutput:
    """Weighted mixture of the surviving experts' outputs."""

    vector: Vector | None
    contributions: list[tuple[int, float, str]]  # (expert id, weight, payload), weight desc

    def distinct_contributions(self) -> list[tuple[int, float, str]]:
        """Contributions minus exact-duplicate payloads (first/highest-weight wins)."""
        seen: set[str] = set()
        kept = []
        for expert_id, weight, payload in self.contributions:
            if not payload or payload in seen:
                continue
            seen.add(payload)
            kept.append((expert_id, weight, payload))
        return kept

    @property
    def text(self) -> str:
        return "\n".join(payload for _, _, payload in self.distinct_contributions())


def aggregate(
    g: GatingDistribution,
    outputs: list[ExpertOutput],
    renormalize: bool = True,
) -> AggregatedOutput:
    """Combine expert outputs as sum(weight_i * h_i).

    weight_i is the raw gate g_i when renormalize is False, or
    g_i / sum(active gates) when True (failed experts' mass redistributes
    across the survivors). The vector fold runs in ascending expert-id
    order so results are independent of completion order.
    """
    if not outputs:
        raise AggregationError("nothing to aggregate: no surviving expert outputs")
    ordered = sorted(outputs, key=lambda o: o.expert_id)
    ids = [o.expert_id for o in ordered]
    if len(set(ids)) != len(ids):
        raise AggregationError("duplicate expert ids among outputs")
    raw = {o.expert_id: g[o.expert_id - 1] for o in ordered}
    if renormalize:
        total = sum(raw.values())
        weights = {eid: w / total for eid, w in raw.items()}
    else:
        weights = raw

    with_vec = [o for o in ordered if o.vector is not None]
    combined: Vector | None = None
    if with_vec:
        if len(with_vec) != len(ordered):
            raise AggregationError("outputs mix vector and vector-less payloads")
        dims = {np.asarray(o.vector).shape for o in with_vec}
        if len(dims) != 1:
            raise AggregationError(f"output vector dims differ: {sorted(dims)}")
        combined = np.zeros(dims.pop(), dtype=np.float64)
        for o in ordered:
            combined = combined + weights[o.expert_id] * np.asarray(o.vector, dtype=np.float64)

    contributions = sorted(
        ((o.expert_id, weights[o.expert_id], o.payload) for o in ordered),
        key=lambda c: (-c[1], c[0]),
    )
    return AggregatedOutput(vector=combined, contributions=contributions)


# --- basic handlers -----------------------------------------------------------------


class EchoHandler:
    """Test handler: returns the query tagged with an expert label."""

    kind = "echo"

    def __init__(self, label: str, embedder=None):
        self.label = label
        self.embedder = embedder

    def handle(self, query: str, context: Any) -> HandlerResult:
        payload = f"[{self.label}] {query}"
        vector = self.embedder.embed(payload) if self.embedder is not None else None
        return HandlerResult(payload, vector)


class TemplateHandler:
    """Test handler: formats a fixed template with the query."""

    kind = "template"

    def __init__(self, template: str, embedder=None):
        self.template = template
        self.embedder = embedder

    def handle(self, query: str, context: Any) -> HandlerResult:
        payload = self.template.format(query=query)
        vector = self.embedder.embed(payload) if self.embedder is not None else None
        return HandlerResult(payload, vector)


class CallableHandler:
    """Adapter wrapping a plain function (query, context) -> HandlerResult."""

    kind = "callable"

    def __init__(self, fn: Callable[[str, Any], HandlerResult]):
        self.fn = fn

    def handle(self, query: str, context: Any) -> HandlerResult:
        return self.fn(query, context)

"""Human feedback collection, scalar rewards, and clipped policy updates.

Reviewer ratings over four components (relevance, accuracy, compliance,
satisfaction) are folded into a weighted-sum reward. The routing policy is
updated with a clipped-ratio surrogate objective in a one-step bandit
framing: state is the query embedding, action is the top-routed expert,
and the advantage is reward minus a running mean baseline. Gradients are
closed-form for the linear-softmax policy, so no autodiff dependency.
"""

from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, MappingError, ValidationError
from .moe import GatingNetwork

logger = logging.getLogger(__name__)

COMPONENTS = ("relevance", "accuracy", "compliance", "satisfaction")

#: Five-point qualitative scale. Only "high" (1.0) and "low" (0.5) are
#: calibrated anchors; the rest interpolate and are plain configuration.
QUALITATIVE_LEVELS = {
    "unusable": 0.0,
    "very low": 0.25,
    "low": 0.5,
    "medium": 0.75,
    "high": 1.0,
}

POLICY_FEEDBACK_ROLES = frozenset({"Advisor", "Paralegal"})


def default_qualitative_map() -> dict[str, dict[str, float]]:
    """Label -> component-score mapping, e.g. 'high relevance' -> {relevance: 1.0}."""
    table: dict[str, dict[str, float]] = {}
    for level, score in QUALITATIVE_LEVELS.items():
        for component in COMPONENTS:
            table[f"{level} {component}"] = {component: score}
    return table


def map_qualitative(label: str, table: dict[str, dict[str, float]] | None = None) -> dict[str, float]:
    """Resolve a qualitative label to component scores; unknown labels error
    so the record can be held for manual scoring."""
    table = table if table is not None else default_qualitative_map()
    key = " ".join(label.split()).casefold()
    if key not in table:
        raise MappingError(f"no qualitative mapping for label {label!r}")
    return dict(table[key])


@dataclass
class FeedbackRecord:
    """One reviewer's ratings for one response."""

    response_id: str
    case_id: str
    actor_role: str
    relevance: float
    accuracy: float
    compliance: float
    satisfaction: float
    qualitative_label: str | None = None
    comment: str | None = None
    timestamp: float = field(default_factory=time.time)

    def __post_init__(self):
        for component in COMPONENTS:
            value = getattr(self, component)
            if not isinstance(value, (int, float)) or not 0.0 <= float(value) <= 1.0:
                raise ValidationError(f"{component} must be in [0, 1], got {value!r}")
            setattr(self, component, float(value))

    def component_scores(self) -> dict[str, float]:
        return {c: getattr(self, c) for c in COMPONENTS}


@dataclass
class RewardModel:
    """Per-component weights plus per-role reliability multipliers."""

    weights: dict[str, float] = field(default_factory=lambda: {c: 0.25 for c in COMPONENTS})
    role_multipliers: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        unknown = set(self.weights) - set(COMPONENTS)
        if unknown:
            raise ValidationError(f"unknown feedback components: {sorted(unknown)}")
        if any(w < 0 for w in self.weights.values()):
            raise ValidationError("feedback weights must be >= 0")
        if not any(w > 0 for w in self.weights.values()):
            raise ConfigurationError("at least one feedback weight must be positive")


@dataclass
class RewardSignal:
    reward: float
    record_ids: tuple[str, ...]


def compute_reward(record: FeedbackRecord, model: RewardModel) -> RewardSignal:
    """Weighted sum of the record's components, with the reviewer role's
    reliability multiplier applied to every weight before summation."""
    multiplier = model.role_multipliers.get(record.actor_role, 1.0)
    effective = {c: model.weights.get(c, 0.0) * multiplier for c in COMPONENTS}
    if not any(w > 0 for w in effective.values()):
        raise ConfigurationError("effective feedback weights are all zero")
    reward = sum(effective[c] * getattr(record, c) for c in COMPONENTS)
    return RewardSignal(reward=float(reward), record_ids=(record.response_id,))


# --- trajectories and the policy update ---------------------------------------------


@dataclass
class Trajectory:
    """One routing decision paired with its eventual reward.

    The behavior policy's gate distribution is stored at decision time and
    never recomputed, so ratio estimates stay honest across versions.
    """

    query_vec: np.ndarray
    old_gates: np.ndarray
    action: int  # routed expert id, 1-based
    reward: float

    def __post_init__(self):
        self.query_vec = np.asarray(self.query_vec, dtype=np.float64)
        self.old_gates = np.asarray(self.old_gates, dtype=np.float64)
        if not 1 <= self.action <= len(self.old_gates):
            raise ValidationError(f"action {self.action} outside expert range")
        if self.old_gates[self.action - 1] <= 0.0:
            raise ValidationError("stored behavior probability must be positive")


class FeedbackBuffer:
    """Thread-safe trajectory buffer; drained atomically into update batches."""

    def __init__(self):
        self._items: list[Trajectory] = []
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._items)

    def append(self, trajectory: Trajectory) -> None:
        with self._lock:
            self._items.append(trajectory)

    def rewards(self) -> list[float]:
        with self._lock:
            return [t.reward for t in self._items]

    def drain(self) -> list[Trajectory]:
        with self._lock:
            batch, self._items = self._items, []
        return batch

    def snapshot(self) -> list[Trajectory]:
        with self._lock:
            return list(self._items)


@dataclass
class PPOConfig:
    """Clipped-surrogate update hyperparameters.

    ``baseline`` is the running-mean reward used as the advantage
    reference; each update overwrites it with the batch mean.
    """

    learning_rate: float = 1e-3
    clip_epsilon: float = 0.2
    batch_threshold: int = 128
    epochs: int = 4
    baseline: float = 0.0
    seed: int = 0
    plateau_min_samples: int = 40

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValidationError("learning rate must be positive")
        if not 0.0 < self.clip_epsilon < 1.0:
            raise ValidationError("clip epsilon must be in (0, 1)")
        if self.batch_threshold < 1:
            raise ValidationError("batch threshold must be positive")
        if self.epochs < 1:
            raise ValidationError("epochs per update must be >= 1")
        if self.plateau_min_samples < 2:
            raise ValidationError("plateau detection needs at least 2 samples")


def should_update(buffer: FeedbackBuffer, cfg: PPOConfig) -> bool:
    """True once the buffer reaches the batch threshold, or earlier when
    rewards have plateaued (the two halves' means differ by < 1% relative)."""
    rewards = buffer.rewards()
    n = len(rewards)
    if n >= cfg.batch_threshold:
        return True
    if n < cfg.plateau_min_samples:
        return False
    half = n // 2
    first = float(np.mean(rewards[:half]))
    second = float(np.mean(rewards[half:]))
    scale = max(abs(first), abs(second), 1e-12)
    return abs(second - first) / scale < 0.01


def clipped_surrogate(
    weights: np.ndarray,
    bias: np.ndarray,
    batch: list[Trajectory],
    clip_epsilon: float,
    baseline: float,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean clipped surrogate and its analytic gradient for a linear-softmax policy.

    Objective per trajectory: min(r*A, clip(r, 1-eps, 1+eps)*A) with
    r = pi_new(action)/pi_old(action) and A = reward - baseline. The
    gradient is zero exactly where the clipped branch is active, via the
    closed-form softmax Jacobian.

    Returns (objective value, dW, db); maximize by ascending the gradient.
    """
    n_experts, dim = weights.shape
    V = np.stack([t.query_vec for t in batch])  # (B, d)
    if V.shape[1] != dim:
        raise ValidationError(f"trajectory dim {V.shape[1]} != policy dim {dim}")
    actions = np.array([t.action - 1 for t in batch])
    old_probs = np.array([t.old_gates[t.action - 1] for t in batch])
    advantages = np.array([t.reward - baseline for t in batch])

    logits = V @ weights.T + bias  # (B, N)
    z = logits - logits.max(axis=1, keepdims=True)
    expz = np.exp(z)
    pi = expz / expz.sum(axis=1, keepdims=True)
    rows = np.arange(len(batch))
    pi_a = pi[rows, actions]

    ratios = pi_a / old_probs
    clipped = np.clip(ratios, 1.0 - clip_epsilon, 1.0 + clip_epsilon)
    unclipped_term = ratios * advantages
    clipped_term = clipped * advantages
    objective = float(np.minimum(unclipped_term, clipped_term).mean())

    # Gradient flows only where the unclipped branch attains the min.
    flows = unclipped_term <= clipped_term
    coeff = np.where(flows, advantages / old_probs, 0.0)

    # d pi_a / d logits = pi_a * (onehot(a) - pi), per sample.
    onehot = np.zeros_like(pi)
    onehot[rows, actions] = 1.0
    dlogits = (coeff * pi_a)[:, None] * (onehot - pi)  # (B, N)
    grad_w = dlogits.T @ V / len(batch)
    grad_b = dlogits.mean(axis=0)
    return objective, grad_w, grad_b


def ppo_update(net: GatingNetwork, batch: list[Trajectory], cfg: PPOConfig) -> GatingNetwork:
    """Ascend the clipped surrogate for cfg.epochs passes over the batch.

    On success returns a new policy version and overwrites cfg.baseline
    with the batch mean reward. A non-finite gradient aborts the whole
    update: the original policy is returned unchanged and an alert logged.
    """
    if not batch:
        raise ValidationError("cannot update policy from an empty batch")
    for t in batch:
        if len(t.old_gates) != net.n_experts:
            raise ValidationError("trajectory gate width does not match the policy")

    weights = net.weights.copy()
    bias = net.bias.copy()
    for _ in range(cfg.epochs):
        _, grad_w, grad_b = clipped_surrogate(weights, bias, batch, cfg.clip_epsilon, cfg.baseline)
        if not (np.all(np.isfinite(grad_w)) and np.all(np.isfinite(grad_b))):
            logger.error("non-finite policy gradient; update aborted at version %d", net.version)
            return net
        weights += cfg.learning_rate * grad_w
        bias += cfg.learning_rate * grad_b

    cfg.baseline = float(np.mean([t.reward for t in batch]))
    return GatingNetwork(weights, bias, version=net.version + 1)

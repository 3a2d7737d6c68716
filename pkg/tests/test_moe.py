import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lexrag.errors import (
    AggregationError,
    DimensionMismatchError,
    NumericError,
    RoutingError,
    ValidationError,
)
from lexrag.moe import (
    CallableHandler,
    EchoHandler,
    ExpertOutput,
    ExpertProfile,
    ExpertRegistry,
    ExpertRole,
    GatingDistribution,
    GatingNetwork,
    HandlerResult,
    aggregate,
    execute,
    gate,
    top_k,
)


def make_registry(n=4, handler_factory=None):
    roles = [ExpertRole.CONSULTANT, ExpertRole.RESEARCHER, ExpertRole.PARALEGAL, ExpertRole.ADVISOR]
    profiles = []
    for i in range(n):
        handler = handler_factory(i + 1) if handler_factory else EchoHandler(f"expert-{i + 1}")
        profiles.append(ExpertProfile(id=i + 1, role=roles[i % 4], tasks=(), handler=handler))
    return ExpertRegistry(profiles)


class TestGatingNetwork:
    def test_zero_net_uniform_gates(self):
        net = GatingNetwork.zeros(4, 8)
        g = gate(np.ones(8), net)
        np.testing.assert_allclose(g.probabilities, [0.25] * 4, atol=1e-12)

    def test_scalar_softmax_oracle(self):
        # logits [1, 0] -> e/(e+1), 1/(e+1)
        net = GatingNetwork(np.zeros((2, 1)), np.array([1.0, 0.0]))
        g = gate(np.zeros(1), net)
        e = math.e
        np.testing.assert_allclose(g.probabilities, [e / (e + 1), 1 / (e + 1)], atol=1e-9)

    def test_shift_invariance(self):
        net1 = GatingNetwork(np.zeros((3, 2)), np.array([0.5, -1.0, 2.0]))
        net2 = GatingNetwork(np.zeros((3, 2)), np.array([0.5, -1.0, 2.0]) + 7.0)
        v = np.array([0.1, 0.2])
        np.testing.assert_allclose(
            gate(v, net1).probabilities, gate(v, net2).probabilities, atol=1e-12
        )

    def test_dim_mismatch(self):
        net = GatingNetwork.zeros(3, 4)
        with pytest.raises(DimensionMismatchError):
            gate(np.ones(5), net)

    def test_non_finite_input_rejected(self):
        net = GatingNetwork.zeros(2, 2)
        with pytest.raises(NumericError):
            gate(np.array([np.inf, 0.0]), net)

    def test_non_finite_params_rejected(self):
        with pytest.raises(ValidationError):
            GatingNetwork(np.array([[np.nan, 0.0]]), np.zeros(1))

    def test_network_arrays_immutable(self):
        net = GatingNetwork.zeros(2, 2)
        with pytest.raises(ValueError):
            net.weights[0, 0] = 1.0

    @settings(max_examples=300)
    @given(st.integers(2, 8), st.integers(1, 16), st.integers(0, 2**32 - 1))
    def test_distribution_sums_to_one_strictly_positive(self, n, d, seed):
        rng = np.random.default_rng(seed)
        net = GatingNetwork(rng.normal(size=(n, d)), rng.normal(size=n))
        g = gate(rng.normal(size=d), net)
        assert abs(float(g.probabilities.sum()) - 1.0) <= 1e-9
        assert np.all(g.probabilities > 0)


class TestTopK:
    def test_selects_largest(self):
        g = GatingDistribution(np.array([0.5, 0.3, 0.15, 0.05]))
        decision = top_k(g, 2)
        assert decision.active == (1, 2)

    def test_k_equals_n_selects_all(self):
        g = GatingDistribution(np.array([0.25, 0.25, 0.25, 0.25]))
        assert top_k(g, 4).active == (1, 2, 3, 4)

    def test_k_above_n_clamps(self):
        g = GatingDistribution(np.array([0.6, 0.4]))
        assert top_k(g, 10).active == (1, 2)

    def test_tie_prefers_lower_id(self):
        g = GatingDistribution(np.array([0.5, 0.2, 0.2, 0.1]))
        decision = top_k(g, 2)
        assert decision.active == (1, 2)

    def test_renormalized_weights_sum_to_one(self):
        g = GatingDistribution(np.array([0.5, 0.3, 0.15, 0.05]))
        decision = top_k(g, 2, renormalize=True)
        assert sum(decision.gates_used.values()) == pytest.approx(1.0, abs=1e-9)
        assert decision.gates_used[1] == pytest.approx(0.5 / 0.8, abs=1e-12)

    def test_raw_weights_kept(self):
        g = GatingDistribution(np.array([0.5, 0.3, 0.15, 0.05]))
        decision = top_k(g, 2, renormalize=False)
        assert decision.gates_used == {1: 0.5, 2: 0.3}

    def test_k_zero_rejected(self):
        g = GatingDistribution(np.array([1.0 / 3] * 3))
        with pytest.raises(ValidationError):
            top_k(g, 0)


class TestExecute:
    def test_two_echo_experts(self):
        registry = make_registry()
        g = GatingDistribution(np.array([0.4, 0.3, 0.2, 0.1]))
        decision = top_k(g, 2)
        outputs, failures = execute(decision, "what is a lease?", None, registry)
        assert [o.expert_id for o in outputs] == [1, 2]
        assert outputs[0].payload == "[expert-1] what is a lease?"
        assert failures == []

    def test_failure_isolated(self):
        def factory(expert_id):
            if expert_id == 2:
                return CallableHandler(lambda q, c: (_ for _ in ()).throw(RuntimeError("boom")))
            return EchoHandler(f"expert-{expert_id}")

        registry = make_registry(handler_factory=factory)
        g = GatingDistribution(np.array([0.4, 0.3, 0.2, 0.1]))
        outputs, failures = execute(top_k(g, 2), "q", None, registry)
        assert [o.expert_id for o in outputs] == [1]
        assert len(failures) == 1 and failures[0].expert_id == 2
        assert "boom" in failures[0].error

    def test_missing_handler_raises(self):
        profiles = [
            ExpertProfile(id=1, role=ExpertRole.CONSULTANT, tasks=(), handler=None),
            ExpertProfile(id=2, role=ExpertRole.ADVISOR, tasks=(), handler=EchoHandler("e2")),
        ]
        registry = ExpertRegistry(profiles)
        g = GatingDistribution(np.array([0.6, 0.4]))
        with pytest.raises(RoutingError):
            execute(top_k(g, 1), "q", None, registry)

    def test_inactive_experts_never_invoked(self):
        calls = {i: 0 for i in range(1, 5)}

        def factory(expert_id):
            def fn(query, context):
                calls[expert_id] += 1
                return HandlerResult(f"p{expert_id}")

            return CallableHandler(fn)

        registry = make_registry(handler_factory=factory)
        g = GatingDistribution(np.array([0.1, 0.2, 0.3, 0.4]))
        execute(top_k(g, 2), "q", None, registry)
        assert calls == {1: 0, 2: 0, 3: 1, 4: 1}


class TestAggregate:
    def test_single_expert_renormalized_is_identity(self):
        g = GatingDistribution(np.array([0.7, 0.3]))
        out = [ExpertOutput(1, "p", np.array([2.0, 3.0]))]
        agg = aggregate(g, out, renormalize=True)
        np.testing.assert_allclose(agg.vector, [2.0, 3.0], atol=1e-12)
        assert agg.contributions == [(1, 1.0, "p")]

    def test_hand_weighted_sum(self):
        g = GatingDistribution(np.array([0.6, 0.4]))
        outs = [
            ExpertOutput(1, "a", np.array([1.0, 0.0])),
            ExpertOutput(2, "b", np.array([0.0, 1.0])),
        ]
        agg = aggregate(g, outs, renormalize=True)
        np.testing.assert_allclose(agg.vector, [0.6, 0.4], atol=1e-12)

    def test_dense_equivalence_raw_mode(self):
        rng = np.random.default_rng(0)
        n, d = 5, 7
        raw = rng.random(n) + 0.01
        g = GatingDistribution(raw / raw.sum())
        vectors = rng.normal(size=(n, d))
        outs = [ExpertOutput(i + 1, f"p{i}", vectors[i]) for i in range(n)]
        agg = aggregate(g, outs, renormalize=False)
        dense = sum(g[i] * vectors[i] for i in range(n))
        np.testing.assert_allclose(agg.vector, dense, atol=1e-9)

    def test_linearity_in_outputs(self):
        rng = np.random.default_rng(1)
        g = GatingDistribution(np.array([0.5, 0.3, 0.2]))
        vectors = rng.normal(size=(3, 4))
        outs = [ExpertOutput(i + 1, "", vectors[i]) for i in range(3)]
        scaled = [ExpertOutput(i + 1, "", 2.5 * vectors[i]) for i in range(3)]
        base = aggregate(g, outs).vector
        np.testing.assert_allclose(aggregate(g, scaled).vector, 2.5 * base, atol=1e-9)

    def test_contributions_ordered_by_weight(self):
        g = GatingDistribution(np.array([0.2, 0.5, 0.3]))
        outs = [ExpertOutput(i, f"p{i}", None) for i in (1, 2, 3)]
        agg = aggregate(g, outs)
        assert [c[0] for c in agg.contributions] == [2, 3, 1]

    def test_dim_mismatch_rejected(self):
        g = GatingDistribution(np.array([0.5, 0.5]))
        outs = [ExpertOutput(1, "", np.zeros(3)), ExpertOutput(2, "", np.zeros(4))]
        with pytest.raises(AggregationError):
            aggregate(g, outs)

    def test_mixed_vector_presence_rejected(self):
        g = GatingDistribution(np.array([0.5, 0.5]))
        outs = [ExpertOutput(1, "", np.zeros(3)), ExpertOutput(2, "", None)]
        with pytest.raises(AggregationError):
            aggregate(g, outs)

    def test_empty_outputs_rejected(self):
        g = GatingDistribution(np.array([1.0 / 3] * 3))
        with pytest.raises(AggregationError):
            aggregate(g, [])

    def test_text_joins_in_weight_order(self):
        g = GatingDistribution(np.array([0.2, 0.8]))
        outs = [ExpertOutput(1, "low", None), ExpertOutput(2, "high", None)]
        assert aggregate(g, outs).text == "high\nlow"


class TestRegistry:
    def test_ids_must_be_contiguous(self):
        profiles = [
            ExpertProfile(id=1, role=ExpertRole.CONSULTANT, tasks=()),
            ExpertProfile(id=3, role=ExpertRole.ADVISOR, tasks=()),
        ]
        with pytest.raises(ValidationError):
            ExpertRegistry(profiles)

    def test_tasks_must_match_role(self):
        with pytest.raises(ValidationError):
            ExpertProfile(id=1, role=ExpertRole.CONSULTANT, tasks={"Contract Drafting"})

    def test_role_task_taxonomy(self):
        p = ExpertProfile(
            id=1, role=ExpertRole.RESEARCHER, tasks={"Cases Identification", "Element Extraction"}
        )
        assert p.tasks == {"Cases Identification", "Element Extraction"}

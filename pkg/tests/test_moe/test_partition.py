"""Tests for expert partitions and routing"""

import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from snrflow.core.tensor import make_rng
from snrflow.data.models import ExpertPartition
from snrflow.errors import DomainError
from snrflow.moe.partition import (
    TASK_LABELS,
    derive_partition,
    emit_routing_table,
    expert_index,
    flow_time_to_routing_time,
    parse_routing_table,
    route,
    route_many,
    routing_table,
    single_expert,
    uniform_partition,
)
from snrflow.moe.schedule import LogSnrSchedule, inv_log_snr, log_snr


@pytest.fixture
def four_experts():
    return derive_partition(LogSnrSchedule(0.0118, 33.78), anchor_t=0.875, depth=2)


def test_reference_boundaries(four_experts):
    """Test the four-expert partition of the default schedule"""
    np.testing.assert_allclose(four_experts.lambda_boundaries, [-5.47, -3.89, 2.49], atol=0.01)
    np.testing.assert_allclose(four_experts.t_boundaries, [0.939, 0.875, 0.223], atol=0.001)
    assert four_experts.lambda_min == pytest.approx(-7.04, abs=0.01)
    assert four_experts.lambda_max == pytest.approx(8.87, abs=0.01)
    assert four_experts.labels == TASK_LABELS[4]
    assert four_experts.t_boundaries[1] == 0.875


def test_boundaries_are_log_snr_midpoints(four_experts):
    """Test every non-anchor boundary bisects its parent interval and maps back to time"""
    lam = four_experts.lambda_boundaries
    anchor = log_snr(0.875)
    assert lam[0] == pytest.approx((four_experts.lambda_min + anchor) / 2, abs=1e-12)
    assert lam[2] == pytest.approx((anchor + four_experts.lambda_max) / 2, abs=1e-12)
    for t, value in zip(four_experts.t_boundaries, lam):
        assert t == pytest.approx(inv_log_snr(value), abs=1e-9)


def test_depth_zero_and_three():
    schedule = LogSnrSchedule()
    single = derive_partition(schedule, depth=0)
    assert single.num_experts == 1
    assert single.t_boundaries == []
    eight = derive_partition(schedule, depth=3)
    assert eight.num_experts == 8
    assert len(eight.t_boundaries) == 7
    assert all(a > b for a, b in zip(eight.t_boundaries, eight.t_boundaries[1:]))
    assert eight.labels[0] == "Expert 1"


def test_anchor_outside_range_rejected():
    """Test an anchor whose log-SNR falls outside the effective range"""
    with pytest.raises(DomainError):
        derive_partition(LogSnrSchedule(0.5, 1.0), anchor_t=0.875, depth=2)
    with pytest.raises(DomainError):
        derive_partition(LogSnrSchedule(), anchor_t=1.0)
    with pytest.raises(DomainError):
        derive_partition(LogSnrSchedule(), depth=-1)


def test_routing_endpoints(four_experts):
    assert route(0.875, four_experts).expert_index == 1
    assert route(1.0, four_experts).expert_index == 0
    assert route(0.0, four_experts).expert_index == 3
    assert route(0.5, four_experts).log_snr == pytest.approx(0.0, abs=1e-15)
    assert route(1.0, four_experts).log_snr == float("-inf")
    with pytest.raises(DomainError):
        route(1.2, four_experts)


def test_every_time_routes_to_exactly_one_expert(four_experts):
    """Test routing totality and agreement with the owned intervals"""
    t = make_rng(3).uniform(0.0, 1.0, size=100_000)
    experts = route_many(t, four_experts)
    assert experts.min() >= 0 and experts.max() <= 3
    for k in range(4):
        low, high = four_experts.t_interval(k)
        owned = experts == k
        assert np.all(t[owned] >= low)
        assert np.all(t[owned] < high)


@given(st.floats(min_value=0.0, max_value=1.0))
def test_vectorised_router_matches_scalar(t):
    partition = derive_partition(LogSnrSchedule(), depth=2)
    assert route_many(np.array([t]), partition)[0] == expert_index(t, partition)


def test_uniform_partition():
    partition = uniform_partition(4)
    assert partition.t_boundaries == [0.75, 0.5, 0.25]
    assert partition.strategy == "uniform"
    assert uniform_partition(1).strategy == "single"
    with pytest.raises(DomainError):
        uniform_partition(0)


def test_single_expert_routes_everything_to_zero():
    partition = single_expert()
    assert route(0.3, partition).expert_index == 0
    assert partition.t_interval(0) == (0.0, 1.0)


def test_flow_time_reverses_axis():
    assert flow_time_to_routing_time(0.0) == 1.0
    np.testing.assert_array_equal(flow_time_to_routing_time(np.array([0.25, 1.0])), [0.75, 0.0])


def test_invalid_boundaries_rejected():
    with pytest.raises(ValueError):
        ExpertPartition(num_experts=3, t_boundaries=[0.3, 0.6], lambda_boundaries=[1.0, 2.0])
    with pytest.raises(ValueError):
        ExpertPartition(num_experts=2, t_boundaries=[0.5], lambda_boundaries=[])


def test_routing_table_rows(four_experts):
    table = routing_table(four_experts)
    assert [row.expert_index for row in table.rows] == [0, 1, 2, 3]
    assert table.rows[0].t_high == 1.0
    assert table.rows[3].t_low == 0.0
    assert table.rows[0].lambda_low == four_experts.lambda_min
    assert table.lambda_anchor == pytest.approx(log_snr(0.875))


def test_json_and_csv_tables_parse_back(four_experts):
    """Test rendered tables carry exact boundaries"""
    text = emit_routing_table(four_experts, "json")
    assert json.loads(text)["num_experts"] == 4
    assert parse_routing_table(text, "json") == routing_table(four_experts)

    parsed = parse_routing_table(emit_routing_table(four_experts, "csv"), "csv")
    assert parsed.t_boundaries == four_experts.t_boundaries
    assert parsed.lambda_boundaries == four_experts.lambda_boundaries
    assert parsed.rows == routing_table(four_experts).rows
    with pytest.raises(ValueError):
        emit_routing_table(four_experts, "xml")

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import TINY2, random_instance, random_instance_text
from flexride.instance import (
    ConfigError,
    Instance,
    ModeConfig,
    ParseError,
    UncertainLoad,
    apply_mode,
    parse_instance,
    parse_uncertainty_sidecar,
    tighten_windows,
)


class TestParse:
    def test_header_fields(self, tiny2):
        assert tiny2.vehicles == 2
        assert tiny2.requests == 2
        assert tiny2.horizon == 200
        assert tiny2.capacity == 4
        assert tiny2.max_ride == (40.0, 40.0)

    def test_euclidean_travel(self):
        text = (
            "1 1 100 4 50\n"
            "0 0 0 0 0 0 100\n"
            "1 0 0 0 2 0 90\n"
            "2 3 4 0 -2 0 95\n"
            "3 0 0 0 0 0 100\n"
        )
        inst = parse_instance(text)
        assert inst.travel_time[1, 2] == pytest.approx(5.0)
        assert inst.travel_cost[1, 2] == pytest.approx(5.0)
        assert np.allclose(inst.travel_time, inst.travel_time.T)
        assert np.allclose(np.diag(inst.travel_time), 0.0)

    def test_missing_destination_depot_cloned(self):
        text = (
            "1 1 100 4 50\n"
            "0 1 2 0 0 0 100\n"
            "1 0 0 0 2 0 90\n"
            "2 3 4 0 -2 0 95\n"
        )
        inst = parse_instance(text)
        assert len(inst.nodes) == 4
        assert inst.nodes[3].x == 1 and inst.nodes[3].y == 2

    def test_service_node_count_header(self):
        # second header field counting service nodes instead of requests
        text = (
            "1 2 100 4 50\n"
            "0 0 0 0 0 0 100\n"
            "1 1 0 0 1 0 90\n"
            "2 3 4 0 -1 0 95\n"
            "3 0 0 0 0 0 100\n"
        )
        inst = parse_instance(text.replace("1 2 100", "1 2 100", 1))
        assert inst.requests == 1

    def test_load_conservation_violation(self):
        text = (
            "1 1 100 4 50\n"
            "0 0 0 0 0 0 100\n"
            "1 0 0 0 2 0 90\n"
            "2 3 4 0 -1 0 95\n"
            "3 0 0 0 0 0 100\n"
        )
        with pytest.raises(ParseError, match="mirror"):
            parse_instance(text)

    def test_malformed_header(self):
        with pytest.raises(ParseError, match="header"):
            parse_instance("1 2\n0 0 0 0 0 0 100\n")

    def test_node_count_mismatch(self):
        text = "1 3 100 4 50\n0 0 0 0 0 0 100\n1 0 0 0 2 0 90\n"
        with pytest.raises(ParseError, match="mismatch"):
            parse_instance(text)

    def test_depot_window_tightening(self, tiny2):
        # origin earliest = min pickup earliest, destination earliest = min dropoff latest
        assert tiny2.nodes[0].earliest == 0.0
        assert tiny2.nodes[0].latest == 200.0
        assert tiny2.nodes[5].earliest == 180.0
        assert tiny2.nodes[5].latest == 200.0

    def test_roundtrip_json(self, tiny2):
        again = Instance.from_json(tiny2.to_json())
        assert again.to_json() == tiny2.to_json()
        assert again.nodes == tiny2.nodes
        assert np.array_equal(again.travel_time, tiny2.travel_time)

    def test_roundtrip_text(self, tiny2):
        again = parse_instance(tiny2.to_text(), name=tiny2.name)
        assert again.nodes == tiny2.nodes
        assert again.vehicles == tiny2.vehicles


class TestApplyMode:
    def test_mode_c_unchanged(self, tiny2):
        out = apply_mode(tiny2, ModeConfig(mode="c"))
        assert out.mode == "c"
        assert all(not nd.flexible for nd in out.nodes)
        assert out.uncertain is None
        assert out.capacity == tiny2.capacity

    def test_flex_count_exact(self):
        inst = random_instance(16, 2, seed=0)
        out = apply_mode(inst, ModeConfig(mode="tf", flex_ratio=0.5, rng_seed=5))
        flexible = [nd.id for nd in out.nodes if nd.flexible]
        assert len(flexible) == 16  # half of the 32 service nodes
        assert all(1 <= i <= 32 for i in flexible)

    def test_flex_deterministic_by_seed(self):
        inst = random_instance(8, 2, seed=0)
        a = apply_mode(inst, ModeConfig(mode="tf", flex_ratio=0.4, rng_seed=9))
        b = apply_mode(inst, ModeConfig(mode="tf", flex_ratio=0.4, rng_seed=9))
        c = apply_mode(inst, ModeConfig(mode="tf", flex_ratio=0.4, rng_seed=10))
        assert [nd.flexible for nd in a.nodes] == [nd.flexible for nd in b.nodes]
        assert [nd.flexible for nd in a.nodes] != [nd.flexible for nd in c.nodes]

    def test_default_uncertainty_band(self, tiny2):
        out = apply_mode(tiny2, ModeConfig(mode="r", psi=0.01, capacity_override=13))
        assert out.uncertain == (UncertainLoad(1, 0, 2), UncertainLoad(2, 1, 3))
        assert out.capacity == 13

    def test_sidecar_uncertainty(self, tiny2):
        sidecar = "1 1.5 1 2\n2 2.0 1 3\n"
        loads = parse_uncertainty_sidecar(sidecar, tiny2)
        out = apply_mode(tiny2, ModeConfig(mode="r", capacity_override=13), uncertain=loads)
        assert out.uncertain[0].mean == 1.5

    def test_capacity_below_inflated_load(self, tiny2):
        with pytest.raises(ConfigError, match="inflated"):
            apply_mode(tiny2, ModeConfig(mode="r", psi=0.01, capacity_override=2))

    def test_flex_ratio_validation(self):
        with pytest.raises(ConfigError):
            ModeConfig(mode="tf", flex_ratio=1.5)
        with pytest.raises(ConfigError):
            ModeConfig(mode="c", flex_ratio=0.3)
        with pytest.raises(ConfigError):
            ModeConfig(mode="r", flex_ratio=0.3)

    def test_depots_never_flexible(self):
        inst = random_instance(6, 2, seed=1)
        out = apply_mode(inst, ModeConfig(mode="tfr", flex_ratio=1.0, capacity_override=20))
        assert not out.nodes[0].flexible
        assert not out.nodes[-1].flexible
        assert all(nd.flexible for nd in out.nodes[1:-1])


class TestTightening:
    def test_semantics_preserving_bounds(self):
        inst = random_instance(5, 2, seed=3)
        tight = tighten_windows(inst)
        for nd, old in zip(tight.nodes, inst.nodes):
            assert nd.earliest >= old.earliest - 1e-9
            if not old.flexible:
                assert nd.latest <= old.latest + 1e-9

    def test_flexible_latest_untouched(self):
        inst = random_instance(5, 2, seed=3)
        flex = apply_mode(inst, ModeConfig(mode="tf", flex_ratio=0.5, rng_seed=1))
        tight = tighten_windows(flex)
        for nd, old in zip(tight.nodes, flex.nodes):
            if old.flexible:
                assert nd.latest == old.latest


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=1, max_value=5), st.integers(min_value=0, max_value=10_000))
def test_triangle_inequality(n, seed):
    inst = random_instance(n, 2, seed)
    tt = inst.travel_time
    m = len(inst.nodes)
    via = tt[:, None, :] if m <= 12 else None
    for i in range(m):
        for j in range(m):
            assert tt[i, j] <= np.min(tt[i, :] + tt[:, j]) + 1e-9
    del via


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=1, max_value=6), st.integers(min_value=0, max_value=10_000))
def test_text_roundtrip_random(n, seed):
    text = random_instance_text(n, 2, seed)
    inst = parse_instance(text)
    again = parse_instance(inst.to_text())
    assert again.nodes == inst.nodes

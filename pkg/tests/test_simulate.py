"""Scenario simulator: mirror paths, noise, presets, pairwise baseline."""

import json
import math

import numpy as np
import pytest

from gbploc.bp import BpConfig
from gbploc.errors import (
    CoincidentNodes,
    InvalidReflection,
    ScenarioInfeasible,
    UnreachableNode,
)
from gbploc.geometry import PathClass, classify_path, steering_vector
from gbploc.simulate import (
    PRESET_EDGES,
    PRESET_POSITIONS,
    NetworkScenario,
    NoiseModel,
    Reflector,
    ScenarioSpec,
    apply_noise,
    build_scenario,
    draw_noisy_edges,
    edge_constraints,
    load_scenario,
    los_path_measurement,
    mirror_path_measurement,
    pairwise_baseline,
    save_scenario,
    scenario_from_dict,
    scenario_to_dict,
)


class TestMirrorPath:
    def test_hand_constructed_case(self):
        # s_i=(0,0), s_j=(4,0), reflector y=2: image (4,4), bounce at (2,2)
        m = mirror_path_measurement((0, 0), (4, 0), Reflector(0.0, 2.0))
        assert m.range_m == pytest.approx(4 * math.sqrt(2), abs=1e-12)
        assert m.aoa_at_receiver == pytest.approx(math.pi / 4, abs=1e-12)
        assert m.aoa_at_sender == pytest.approx(3 * math.pi / 4, abs=1e-12)

    def test_reflector_through_nodes_invalid(self):
        with pytest.raises(InvalidReflection):
            mirror_path_measurement((0, 0), (4, 0), Reflector(0.0, 0.0))

    def test_straddling_nodes_invalid(self):
        with pytest.raises(InvalidReflection):
            mirror_path_measurement((0, -1), (0, 1), Reflector(0.0, 0.0))

    def test_steering_identity_by_construction(self):
        rng = np.random.default_rng(2)
        for _ in range(300):
            s_i = rng.uniform(-5, 5, 2)
            s_j = rng.uniform(-5, 5, 2)
            orientation = rng.uniform(0, math.pi)
            n = np.array([-math.sin(orientation), math.cos(orientation)])
            offset = min(n @ s_i, n @ s_j) - rng.uniform(0.5, 4.0)
            m = mirror_path_measurement(s_i, s_j, Reflector(orientation, offset))
            if classify_path(m) is not PathClass.SINGLE_BOUNCE:
                continue
            g = steering_vector(m.aoa_at_sender, m.aoa_at_receiver)
            assert abs(g @ (s_i - s_j) - m.range_m) < 1e-9

    def test_path_length_via_bounce_point(self):
        m = mirror_path_measurement((0, 0), (4, 0), Reflector(0.0, 2.0))
        c = np.array([2.0, 2.0])
        legs = np.linalg.norm(c - [0, 0]) + np.linalg.norm(c - [4, 0])
        assert m.range_m == pytest.approx(legs, abs=1e-12)


class TestLosPath:
    def test_three_four_five(self):
        m = los_path_measurement((0, 0), (3, 4))
        assert m.range_m == pytest.approx(5.0)
        assert m.aoa_at_receiver == pytest.approx(math.atan2(4, 3))
        assert m.aoa_at_sender == pytest.approx(math.atan2(4, 3) + math.pi)

    def test_unit_axis(self):
        m = los_path_measurement((0, 0), (1, 0))
        assert m.range_m == pytest.approx(1.0)
        assert m.aoa_at_receiver == pytest.approx(0.0)
        assert m.aoa_at_sender == pytest.approx(math.pi)

    def test_coincident(self):
        with pytest.raises(CoincidentNodes):
            los_path_measurement((0, 0), (0, 0))

    def test_classifies_as_los(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            a, b = rng.uniform(-5, 5, (2, 2))
            if np.allclose(a, b):
                continue
            assert classify_path(los_path_measurement(a, b)) is PathClass.LINE_OF_SIGHT


class TestApplyNoise:
    def test_zero_noise_is_identity(self):
        m = los_path_measurement((0, 0), (3, 4))
        out = apply_noise(m, NoiseModel(0.0, 0.0), np.random.default_rng(0))
        assert out == m

    def test_deterministic_given_state(self):
        m = los_path_measurement((0, 0), (3, 4))
        noise = NoiseModel(3.0, math.radians(5))
        a = apply_noise(m, noise, np.random.default_rng(123))
        b = apply_noise(m, noise, np.random.default_rng(123))
        assert a == b

    def test_range_variance_matches(self):
        m = los_path_measurement((0, 0), (3, 4))
        noise = NoiseModel(3.0, 0.0)
        rng = np.random.default_rng(99)
        errors = np.array(
            [apply_noise(m, noise, rng).range_m - m.range_m for _ in range(100_000)]
        )
        assert errors.var() == pytest.approx(3.0, rel=0.05)

    def test_angle_bounded_and_wrapped(self):
        m = los_path_measurement((0, 0), (1, 0))  # receiver bearing 0
        noise = NoiseModel(0.0, math.radians(5))
        rng = np.random.default_rng(7)
        for _ in range(500):
            out = apply_noise(m, noise, rng)
            assert 0 <= out.aoa_at_receiver < 2 * math.pi
            wrapped = math.remainder(out.aoa_at_receiver, 2 * math.pi)
            assert abs(wrapped) <= math.radians(5) + 1e-12


class TestBuildScenario:
    def test_preset_positions(self):
        scenario = build_scenario(ScenarioSpec.paper_preset(), seed=0)
        np.testing.assert_allclose(scenario.true_positions, PRESET_POSITIONS)
        assert scenario.anchor_index == 0

    def test_preset_topology(self):
        scenario = build_scenario(ScenarioSpec.paper_preset(), seed=0)
        assert tuple(scenario.canonical_edges()) == PRESET_EDGES

    def test_edge_symmetry(self):
        scenario = build_scenario(ScenarioSpec.paper_preset(), seed=3)
        for (i, j) in scenario.canonical_edges():
            fwd = scenario.edges[(i, j)]
            rev = scenario.edges[(j, i)]
            for a, b in zip(fwd, rev):
                assert a.range_m == b.range_m
                assert a.aoa_at_receiver == b.aoa_at_sender
                assert a.aoa_at_sender == b.aoa_at_receiver

    def test_orthogonal_family_gives_rank_two(self):
        scenario = build_scenario(ScenarioSpec.paper_preset("orthogonal"), seed=1)
        for constraint in edge_constraints(scenario.edges).values():
            svals = np.linalg.svd(constraint.geometry, compute_uv=False)
            assert svals[-1] > 1e-6 * svals[0]

    def test_noiseless_measurements_satisfy_identity(self):
        scenario = build_scenario(ScenarioSpec.paper_preset(), seed=2)
        pos = scenario.true_positions
        for (i, j), paths in scenario.edges.items():
            for m in paths:
                g = steering_vector(m.aoa_at_sender, m.aoa_at_receiver)
                assert abs(g @ (pos[i] - pos[j]) - m.range_m) < 1e-9

    def test_random_scenario_connected(self):
        scenario = build_scenario(
            ScenarioSpec.random(n_nodes=6, connectivity_radius=8.0), seed=11
        )
        assert scenario.node_count == 6
        # pairwise reaches every node only if connected
        assert set(pairwise_baseline(scenario)) == set(range(6))

    def test_los_edges_supported(self):
        spec = ScenarioSpec.explicit(
            positions=[(0, 0), (3, -2)],
            edge_list=[(0, 1)],
            los_edges=[(0, 1)],
            noise=NoiseModel(0.0, 0.0),
        )
        scenario = build_scenario(spec, seed=0)
        kinds = [classify_path(m) for m in scenario.edges[(0, 1)]]
        assert kinds.count(PathClass.LINE_OF_SIGHT) == 1
        assert kinds.count(PathClass.SINGLE_BOUNCE) == 2

    def test_infeasible_layout_raises(self):
        spec = ScenarioSpec.random(n_nodes=5, connectivity_radius=0.01)
        with pytest.raises(ScenarioInfeasible):
            build_scenario(spec, seed=0)

    def test_anchor_off_origin_rejected(self):
        spec = ScenarioSpec.explicit(
            positions=[(1.0, 0.0), (3.0, 2.0)], edge_list=[(0, 1)]
        )
        with pytest.raises(ValueError, match="origin"):
            build_scenario(spec, seed=0)


class TestNoisyDraws:
    def test_symmetric_noise(self):
        scenario = build_scenario(ScenarioSpec.paper_preset(), seed=8)
        noisy = draw_noisy_edges(scenario, np.random.default_rng(5))
        for (i, j) in scenario.canonical_edges():
            for a, b in zip(noisy[(i, j)], noisy[(j, i)]):
                assert a.range_m == b.range_m
                assert a.aoa_at_receiver == b.aoa_at_sender


class TestPairwiseBaseline:
    def test_two_node_noiseless_matches_truth(self):
        scenario = build_scenario(
            ScenarioSpec.explicit(
                positions=[(0, 0), (2, -3)],
                edge_list=[(0, 1)],
                noise=NoiseModel(0.0, 0.0),
            ),
            seed=1,
        )
        estimates = pairwise_baseline(scenario)
        np.testing.assert_allclose(estimates[1], [2.0, -3.0], atol=1e-9)

    def test_preset_parents(self):
        # S3 hangs off S1, S4 off S2; the S3-S4 link is never used
        scenario = build_scenario(
            ScenarioSpec.paper_preset(noise=NoiseModel(0.0, 0.0)), seed=5
        )
        constraints = edge_constraints(scenario.edges)
        estimates = pairwise_baseline(scenario, constraints)
        np.testing.assert_allclose(
            estimates[3], constraints[(1, 0)].offset + constraints[(3, 1)].offset,
            atol=1e-12,
        )
        np.testing.assert_allclose(
            estimates[4], constraints[(2, 0)].offset + constraints[(4, 2)].offset,
            atol=1e-12,
        )

    def test_error_accumulates_along_chain(self):
        # anchor -> A -> B: the second hop inherits the first hop's error
        spec = ScenarioSpec.explicit(
            positions=[(0, 0), (3.0, -1.0), (6.0, -2.0)],
            edge_list=[(0, 1), (1, 2)],
            noise=NoiseModel(3.0, math.radians(5)),
        )
        scenario = build_scenario(spec, seed=21)
        rng = np.random.default_rng(17)
        err_a, err_b = [], []
        for _ in range(400):
            constraints = edge_constraints(draw_noisy_edges(scenario, rng))
            estimates = pairwise_baseline(scenario, constraints)
            err_a.append(estimates[1] - scenario.true_positions[1])
            err_b.append(estimates[2] - scenario.true_positions[2])
        var_a = np.var(np.linalg.norm(err_a, axis=1))
        var_b = np.var(np.linalg.norm(err_b, axis=1))
        assert var_b >= var_a

    def test_unreachable_node(self):
        scenario = build_scenario(
            ScenarioSpec.explicit(
                positions=[(0, 0), (2, -3)],
                edge_list=[(0, 1)],
            ),
            seed=1,
        )
        orphan = NetworkScenario(
            true_positions=np.vstack([scenario.true_positions, [9.0, 9.0]]),
            anchor_index=0,
            edges=scenario.edges,
            noise=scenario.noise,
            seed=0,
            edge_reflectors=scenario.edge_reflectors,
        )
        with pytest.raises(UnreachableNode):
            pairwise_baseline(orphan)


class TestScenarioFiles:
    def test_round_trip(self, tmp_path):
        scenario = build_scenario(ScenarioSpec.paper_preset(), seed=6)
        path = tmp_path / "scenario.json"
        save_scenario(path, scenario, BpConfig())
        loaded, bp = load_scenario(path)
        np.testing.assert_allclose(loaded.true_positions, scenario.true_positions)
        assert loaded.canonical_edges() == scenario.canonical_edges()
        for key in scenario.edges:
            for a, b in zip(scenario.edges[key], loaded.edges[key]):
                assert a.range_m == pytest.approx(b.range_m, abs=1e-12)
        assert bp.max_iters == 100

    def test_dict_schema(self):
        scenario = build_scenario(ScenarioSpec.paper_preset(), seed=6)
        doc = scenario_to_dict(scenario, BpConfig())
        assert set(doc) == {"nodes", "anchor", "edges", "noise", "bp", "seed"}
        assert doc["noise"]["aoa_halfwidth_deg"] == pytest.approx(5.0)
        entry = doc["edges"][0]
        assert set(entry) == {"i", "j", "reflectors", "los"}
        assert {"orientation_deg", "offset_m"} == set(entry["reflectors"][0])
        json.dumps(doc)  # must be serializable as-is

    def test_angles_in_degrees_in_files(self):
        scenario = build_scenario(
            ScenarioSpec.paper_preset(scatter="biorthogonal"), seed=6
        )
        doc = scenario_to_dict(scenario, BpConfig())
        orientations = {
            round(r["orientation_deg"], 6)
            for e in doc["edges"]
            for r in e["reflectors"]
        }
        assert orientations == {0.0, 45.0}

    def test_from_dict_rejects_nothing_silently(self):
        scenario = build_scenario(ScenarioSpec.paper_preset(), seed=6)
        doc = scenario_to_dict(scenario, BpConfig())
        rebuilt, _ = scenario_from_dict(doc)
        for key in scenario.edges:
            for a, b in zip(scenario.edges[key], rebuilt.edges[key]):
                assert a.range_m == pytest.approx(b.range_m, abs=1e-9)
                assert a.aoa_at_receiver == pytest.approx(b.aoa_at_receiver, abs=1e-9)

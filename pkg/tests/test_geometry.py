"""Geometry core: steering vectors, path classes, edge constraints."""

import math

import numpy as np
import pytest

from gbploc.errors import (
    AllPathsDegenerate,
    NotLineOfSight,
    SingularGeometry,
)
from gbploc.geometry import (
    EdgeConstraint,
    PathClass,
    PathMeasurement,
    build_edge_constraint,
    classify_path,
    los_rows,
    normalize_angle,
    steering_vector,
)


def mirror_oracle(s_i, s_j, orientation, offset):
    """Independent mirror construction: reflect s_j across the line, take
    the straight segment to s_i, and read off path length and bearings."""
    s_i = np.asarray(s_i, float)
    s_j = np.asarray(s_j, float)
    n = np.array([-math.sin(orientation), math.cos(orientation)])
    h_j = n @ s_j - offset
    mirrored = s_j - 2 * h_j * n
    d = np.linalg.norm(s_i - mirrored)
    h_i = n @ s_i - offset
    t = h_j / (h_i + h_j)
    c = mirrored + t * (s_i - mirrored)
    theta_ji = math.atan2(*(c - s_i)[::-1]) % (2 * math.pi)
    theta_ij = math.atan2(*(c - s_j)[::-1]) % (2 * math.pi)
    return d, theta_ji, theta_ij


class TestSteeringVector:
    def test_quarter_turn(self):
        g = steering_vector(0.0, math.pi / 2)
        np.testing.assert_allclose(g, [1.0, -1.0], atol=1e-15)

    def test_diagonal(self):
        g = steering_vector(math.pi / 4, 3 * math.pi / 4)
        np.testing.assert_allclose(g, [math.sqrt(2), 0.0], atol=1e-15)

    def test_mirror_geometry_path_length(self):
        # reflect s_j=(4,0) across y=2: image (4,4), so the path from
        # s_i=(0,0) has length 4*sqrt(2); the constraint row must recover it
        g = steering_vector(3 * math.pi / 4, math.pi / 4)
        d = g @ np.array([-4.0, 0.0])
        assert d == pytest.approx(4 * math.sqrt(2), abs=1e-12)

    def test_exact_los_is_singular(self):
        with pytest.raises(SingularGeometry):
            steering_vector(0.0, math.pi)

    def test_antisymmetry_random_pairs(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            a, b = rng.uniform(0, 2 * math.pi, size=2)
            if abs(math.sin(b - a)) <= 1e-6:
                continue
            np.testing.assert_allclose(
                steering_vector(a, b), -steering_vector(b, a), rtol=1e-12
            )

    def test_identity_on_mirror_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(500):
            s_i = rng.uniform(-5, 5, 2)
            s_j = rng.uniform(-5, 5, 2)
            orientation = rng.uniform(0, math.pi)
            n = np.array([-math.sin(orientation), math.cos(orientation)])
            offset = max(n @ s_i, n @ s_j) + rng.uniform(0.5, 4.0)
            d, theta_ji, theta_ij = mirror_oracle(s_i, s_j, orientation, offset)
            if abs(math.sin(theta_ji - theta_ij)) <= 1e-3:
                continue
            g = steering_vector(theta_ij, theta_ji)
            assert abs(g @ (s_i - s_j) - d) < 1e-9


class TestClassifyPath:
    def test_exact_los(self):
        m = PathMeasurement(1.0, math.pi, 0.0)
        assert classify_path(m, eps_los=0.01) is PathClass.LINE_OF_SIGHT

    def test_single_bounce(self):
        m = PathMeasurement(1.0, 3 * math.pi / 4, math.pi / 4)
        assert classify_path(m) is PathClass.SINGLE_BOUNCE

    def test_parallel_is_degenerate(self):
        m = PathMeasurement(1.0, 0.1, 0.1)
        assert classify_path(m) is PathClass.DEGENERATE

    def test_los_band_width(self):
        inside = PathMeasurement(1.0, math.pi - 0.005, 0.0)
        outside = PathMeasurement(1.0, math.pi - 0.05, 0.0)
        assert classify_path(inside, eps_los=0.01) is PathClass.LINE_OF_SIGHT
        assert classify_path(outside, eps_los=0.01) is PathClass.SINGLE_BOUNCE

    def test_wraps_across_zero(self):
        # receiver bearing just under 2*pi, sender just under pi
        m = PathMeasurement(1.0, 2 * math.pi - 0.001, math.pi - 0.002)
        assert classify_path(m, eps_los=0.01) is PathClass.LINE_OF_SIGHT


class TestLosRows:
    @pytest.mark.parametrize(
        "d,theta_ij,theta_ji,expected",
        [
            (5.0, 0.0, math.pi, (5.0, 0.0)),
            (5.0, math.pi / 2, 3 * math.pi / 2, (0.0, 5.0)),
            (4 * math.sqrt(2), math.pi / 4, 5 * math.pi / 4, (4.0, 4.0)),
        ],
    )
    def test_axis_cases(self, d, theta_ij, theta_ji, expected):
        m = PathMeasurement(d, theta_ji, theta_ij)
        rows, rhs = los_rows(m)
        np.testing.assert_allclose(rows, np.eye(2))
        np.testing.assert_allclose(rhs, expected, atol=1e-12)

    def test_rejects_non_los(self):
        with pytest.raises(NotLineOfSight):
            los_rows(PathMeasurement(1.0, math.pi / 2, 0.0))


class TestBuildEdgeConstraint:
    def test_two_independent_rows_recover_offset(self):
        rng = np.random.default_rng(3)
        s_i = np.array([0.5, -1.0])
        s_j = np.array([3.0, 2.0])
        measurements = []
        for orientation in (0.0, math.pi / 2):
            n = np.array([-math.sin(orientation), math.cos(orientation)])
            offset = max(n @ s_i, n @ s_j) + rng.uniform(1.0, 3.0)
            d, theta_ji, theta_ij = mirror_oracle(s_i, s_j, orientation, offset)
            measurements.append(PathMeasurement(d, theta_ji, theta_ij))
        constraint = build_edge_constraint(measurements)
        np.testing.assert_allclose(constraint.offset, s_i - s_j, atol=1e-9)

    def test_single_row_minimum_norm(self):
        # one path with row g = [sqrt(2), 0]: offset must lie along x
        m = PathMeasurement(2.0, 3 * math.pi / 4, math.pi / 4)
        constraint = build_edge_constraint([m])
        g = steering_vector(m.aoa_at_sender, m.aoa_at_receiver)
        expected = g * (2.0 / (g @ g))
        np.testing.assert_allclose(constraint.offset, expected, atol=1e-12)
        assert constraint.geometry.shape == (1, 2)
        # minimum-norm pseudo-inverse: G+ = G^T / (g.g)
        np.testing.assert_allclose(
            constraint.pseudo_inverse, (g / (g @ g)).reshape(2, 1), atol=1e-12
        )

    def test_los_contributes_two_rows(self):
        m = PathMeasurement(5.0, math.pi, 0.0)
        constraint = build_edge_constraint([m])
        assert constraint.geometry.shape == (2, 2)
        np.testing.assert_allclose(constraint.offset, [5.0, 0.0], atol=1e-12)
        np.testing.assert_allclose(constraint.basis, np.eye(2), atol=1e-12)

    def test_degenerate_paths_dropped(self, caplog):
        good = PathMeasurement(2.0, math.pi / 2, 0.0)
        bad = PathMeasurement(2.0, 0.3, 0.3)
        with caplog.at_level("WARNING", logger="gbploc.geometry"):
            constraint = build_edge_constraint([good, bad])
        assert constraint.path_count == 1
        assert any("degenerate" in r.message for r in caplog.records)

    def test_all_degenerate_raises(self):
        bad = PathMeasurement(2.0, 0.3, 0.3)
        with pytest.raises(AllPathsDegenerate):
            build_edge_constraint([bad, bad])

    def test_empty_raises(self):
        with pytest.raises(AllPathsDegenerate):
            build_edge_constraint([])


def random_edge_constraint(rng, n_paths) -> EdgeConstraint:
    """A constraint from random mirror-generated paths, one random distinct
    orientation per path so rows stay independent."""
    s_i = rng.uniform(-5, 5, 2)
    s_j = rng.uniform(-5, 5, 2)
    while np.linalg.norm(s_i - s_j) < 1.0:
        s_j = rng.uniform(-5, 5, 2)
    orientations = (rng.uniform(0, math.pi) + np.arange(n_paths) * math.pi / 3) % math.pi
    measurements = []
    for orientation in orientations:
        n = np.array([-math.sin(orientation), math.cos(orientation)])
        offset = max(n @ s_i, n @ s_j) + rng.uniform(0.5, 4.0)
        d, theta_ji, theta_ij = mirror_oracle(s_i, s_j, orientation, offset)
        m = PathMeasurement(d, theta_ji, theta_ij)
        if classify_path(m) is not PathClass.SINGLE_BOUNCE:
            return random_edge_constraint(rng, n_paths)
        measurements.append(m)
    return build_edge_constraint(measurements)


class TestMoorePenrose:
    @pytest.mark.parametrize("n_paths", [1, 2, 3])
    def test_identities(self, n_paths):
        rng = np.random.default_rng(100 + n_paths)
        for _ in range(100):
            c = random_edge_constraint(rng, n_paths)
            g, gp = c.geometry, c.pseudo_inverse
            scale = max(1.0, np.abs(g).max())
            assert np.abs(g @ gp @ g - g).max() < 1e-9 * scale
            assert np.abs(gp @ g @ gp - gp).max() < 1e-9 * scale
            np.testing.assert_allclose(g @ gp, (g @ gp).T, atol=1e-9 * scale)
            np.testing.assert_allclose(gp @ g, (gp @ g).T, atol=1e-9 * scale)

    def test_basis_symmetric_psd(self):
        rng = np.random.default_rng(42)
        for n_paths in (1, 2, 3):
            for _ in range(50):
                c = random_edge_constraint(rng, n_paths)
                np.testing.assert_allclose(c.basis, c.basis.T, atol=1e-12)
                assert np.linalg.eigvalsh(c.basis).min() >= -1e-12

    def test_matches_svd_pseudo_inverse(self):
        # np.linalg.pinv computes through the SVD, independent of the
        # two-case normal-equation formulas used by the builder
        rng = np.random.default_rng(5)
        for n_paths in (1, 2, 3):
            for _ in range(30):
                c = random_edge_constraint(rng, n_paths)
                reference = np.linalg.pinv(c.geometry)
                np.testing.assert_allclose(c.pseudo_inverse, reference, atol=1e-9)
                np.testing.assert_allclose(c.offset, reference @ c.rhs, atol=1e-9)
                np.testing.assert_allclose(
                    c.basis, reference @ reference.T, atol=1e-9
                )


class TestNormalizeAngle:
    @pytest.mark.parametrize(
        "theta,expected",
        [(0.0, 0.0), (2 * math.pi, 0.0), (-math.pi / 2, 3 * math.pi / 2),
         (5 * math.pi, math.pi), (-1e-20, 0.0)],
    )
    def test_values(self, theta, expected):
        out = normalize_angle(theta)
        assert 0.0 <= out < 2 * math.pi
        assert out == pytest.approx(expected, abs=1e-12)


class TestPathMeasurementValidation:
    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            PathMeasurement(float("nan"), 0.0, 0.0)

    def test_rejects_unnormalized_angle(self):
        with pytest.raises(ValueError):
            PathMeasurement(1.0, -0.1, 0.0)

    def test_swapped_roundtrip(self):
        m = PathMeasurement(2.5, 1.0, 2.0)
        assert m.swapped().swapped() == m

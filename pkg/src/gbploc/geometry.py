"""Single-bounce measurement geometry.

A propagation path between two nodes is summarized by its total length and
the absolute arrival bearing observed at each end.  For a path with exactly
one reflection, those three numbers constrain the receiver to a line; the
constraint is linear in the position difference between the two nodes.  This
module builds that linear form: steering vectors, stacked per-edge geometry
matrices, their Moore-Penrose pseudo-inverses, and the covariance basis used
by the belief-propagation engine.

All angles are absolute bearings in a shared global frame, counterclockwise
from +x, in radians.  All lengths are meters.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import (
    AllPathsDegenerate,
    NotLineOfSight,
    RankDeficient,
    SingularGeometry,
)

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi

#: Below this |sin(bearing gap)| the line constraint is treated as singular.
EPS_SING = 1e-6

#: Default half-width of the line-of-sight band around a bearing gap of pi.
EPS_LOS = math.radians(1.0)

#: Singular values this factor below the largest count as zero.
RANK_RTOL = 1e-9


def normalize_angle(theta: float) -> float:
    """Wrap an angle to [0, 2*pi)."""
    out = theta % TWO_PI
    if out >= TWO_PI:  # fmod of tiny negatives can land exactly on 2*pi
        out = 0.0
    return out


@dataclass(frozen=True)
class PathMeasurement:
    """One path between two nodes: length plus the bearing at each end.

    ``range_m`` is the full path length (via the reflection point for a
    bounced path).  ``aoa_at_receiver`` is the bearing at which the signal
    arrives at the node being located; ``aoa_at_sender`` is the bearing at
    which the reverse signal arrives at the reference node.  Noisy ranges may
    be negative, so only finiteness is enforced here.
    """

    range_m: float
    aoa_at_receiver: float
    aoa_at_sender: float

    def __post_init__(self):
        for name in ("range_m", "aoa_at_receiver", "aoa_at_sender"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        for name in ("aoa_at_receiver", "aoa_at_sender"):
            v = getattr(self, name)
            if not 0.0 <= v < TWO_PI:
                raise ValueError(f"{name}={v} outside [0, 2*pi)")

    def swapped(self) -> "PathMeasurement":
        """The same physical path viewed from the other end of the link."""
        return PathMeasurement(self.range_m, self.aoa_at_sender, self.aoa_at_receiver)


class PathClass(Enum):
    SINGLE_BOUNCE = "single_bounce"
    LINE_OF_SIGHT = "line_of_sight"
    DEGENERATE = "degenerate"


def steering_vector(
    aoa_at_sender: float,
    aoa_at_receiver: float,
    eps_sing: float = EPS_SING,
) -> np.ndarray:
    """Map a single-bounce path's two bearings to its constraint row.

    Returns the 2-vector ``g`` such that ``g @ (s_receiver - s_sender)``
    equals the path length on noiseless data.  Swapping the two arguments
    flips the sign of the result.

    Raises:
        SingularGeometry: the bearings are parallel or antiparallel
            (which includes exact line-of-sight), so no finite row exists.
    """
    gap = math.sin(aoa_at_receiver - aoa_at_sender)
    if abs(gap) <= eps_sing:
        raise SingularGeometry(
            f"bearing gap sin={gap:.3e} within {eps_sing:.1e} of singular"
        )
    return np.array(
        [
            (math.sin(aoa_at_sender) + math.sin(aoa_at_receiver)) / gap,
            -(math.cos(aoa_at_sender) + math.cos(aoa_at_receiver)) / gap,
        ]
    )


def classify_path(
    m: PathMeasurement,
    eps_los: float = EPS_LOS,
    eps_sing: float = EPS_SING,
) -> PathClass:
    """Sort a path into single-bounce, line-of-sight, or degenerate.

    Line-of-sight means the wrapped bearing difference is within ``eps_los``
    of pi.  Degenerate means the bearings are near-parallel without being
    line-of-sight; such rows have unbounded norm and are dropped by
    :func:`build_edge_constraint`.
    """
    delta = m.aoa_at_receiver - m.aoa_at_sender
    wrapped = math.remainder(delta, TWO_PI)  # in [-pi, pi]
    if math.pi - abs(wrapped) <= eps_los:
        return PathClass.LINE_OF_SIGHT
    if abs(math.sin(delta)) <= eps_sing:
        return PathClass.DEGENERATE
    return PathClass.SINGLE_BOUNCE


def los_rows(
    m: PathMeasurement,
    eps_los: float = EPS_LOS,
) -> tuple[np.ndarray, np.ndarray]:
    """Constraint rows for a line-of-sight path.

    A line-of-sight path pins the full position difference: the receiver sits
    at distance ``range_m`` along the bearing observed at the sender.  Returns
    the identity geometry block and its right-hand side, replacing the
    singular steering-vector form.

    Raises:
        NotLineOfSight: the path does not classify as line-of-sight.
    """
    if classify_path(m, eps_los=eps_los) is not PathClass.LINE_OF_SIGHT:
        raise NotLineOfSight(
            f"bearing gap {m.aoa_at_receiver - m.aoa_at_sender:.4f} rad is not "
            "within the line-of-sight band"
        )
    rows = np.eye(2)
    rhs = m.range_m * np.array([math.cos(m.aoa_at_sender), math.sin(m.aoa_at_sender)])
    return rows, rhs


@dataclass(frozen=True)
class EdgeConstraint:
    """Fused linear constraint for one directed edge.

    ``geometry @ (s_receiver - s_sender) = rhs`` stacks one row per
    single-bounce path and two rows per line-of-sight path.  ``offset`` is
    the minimum-norm least-squares estimate of the position difference and
    ``basis`` scales the measurement noise into position space.
    """

    geometry: np.ndarray        # (rows, 2)
    pseudo_inverse: np.ndarray  # (2, rows)
    offset: np.ndarray          # (2,)
    basis: np.ndarray           # (2, 2) symmetric PSD
    rhs: np.ndarray             # (rows,)
    path_count: int

    def __post_init__(self):
        for name in ("geometry", "pseudo_inverse", "offset", "basis", "rhs"):
            arr = np.array(getattr(self, name), dtype=float)  # copy, then freeze
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not np.all(np.isfinite(self.offset)):
            raise ValueError("offset must be finite")
        if self.path_count < 1:
            raise ValueError("path_count must be >= 1")

    @property
    def max_basis_eigenvalue(self) -> float:
        a, b, d = self.basis[0, 0], self.basis[0, 1], self.basis[1, 1]
        half = 0.5 * (a + d)
        return half + math.hypot(0.5 * (a - d), b)


def build_edge_constraint(
    paths: Sequence[PathMeasurement],
    eps_los: float = EPS_LOS,
    eps_sing: float = EPS_SING,
) -> EdgeConstraint:
    """Stack the paths of one edge into a fused linear constraint.

    Single-bounce paths contribute their steering-vector row, line-of-sight
    paths contribute two identity rows, and degenerate paths are dropped with
    a warning.  The pseudo-inverse uses the normal-equation form when the
    stacked rows have numerical rank 2 and the minimum-norm form for a single
    row.

    Raises:
        AllPathsDegenerate: every path was dropped.
        RankDeficient: rows exist but their numerical rank is zero.
    """
    if len(paths) == 0:
        raise AllPathsDegenerate("edge has no paths")

    rows: list[np.ndarray] = []
    rhs: list[float] = []
    kept = 0
    for k, m in enumerate(paths):
        cls = classify_path(m, eps_los=eps_los, eps_sing=eps_sing)
        if cls is PathClass.DEGENERATE:
            logger.warning(
                "dropping degenerate path %d (bearings %.4f / %.4f rad)",
                k, m.aoa_at_sender, m.aoa_at_receiver,
            )
            continue
        if cls is PathClass.LINE_OF_SIGHT:
            block, b = los_rows(m, eps_los=eps_los)
            rows.extend(block)
            rhs.extend(b)
        else:
            rows.append(steering_vector(m.aoa_at_sender, m.aoa_at_receiver, eps_sing))
            rhs.append(m.range_m)
        kept += 1

    if kept == 0:
        raise AllPathsDegenerate(f"all {len(paths)} paths dropped as degenerate")

    geometry = np.array(rows)
    d = np.array(rhs)
    svals = np.linalg.svd(geometry, compute_uv=False)
    if svals[0] <= 0.0 or not np.isfinite(svals[0]):
        raise RankDeficient("stacked geometry has numerical rank 0")

    if geometry.shape[0] == 1:
        # single row: minimum-norm solution
        pinv = geometry.T @ np.linalg.inv(geometry @ geometry.T)
    elif svals[-1] >= RANK_RTOL * svals[0]:
        pinv = np.linalg.inv(geometry.T @ geometry) @ geometry.T
    else:
        # multiple mutually-parallel rows; fall back to the SVD pseudo-inverse
        pinv = np.linalg.pinv(geometry, rcond=RANK_RTOL)

    offset = pinv @ d
    basis = pinv @ pinv.T
    basis = 0.5 * (basis + basis.T)
    return EdgeConstraint(
        geometry=geometry,
        pseudo_inverse=pinv,
        offset=offset,
        basis=basis,
        rhs=d,
        path_count=kept,
    )

"""Reference solvers used to check the distributed engine.

The whole network's constraint rows are linear in the unknown positions, so
the exact joint maximum-a-posteriori estimate is a single least-squares
solve with the anchor eliminated.  For Gaussian models the marginal and
joint maximizers coincide, which makes this solve the ground truth the
iterative engine is compared against.  A brute-force grid search over the
same objective is provided for networks with at most two unknown nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import RankDeficientSystem, TooManyUnknowns
from .geometry import EdgeConstraint, RANK_RTOL
from .simulate import NetworkScenario


@dataclass(frozen=True)
class JointSolution:
    positions: dict[int, np.ndarray]
    residual_norm: float
    normal_matrix_condition: float


def _dedupe_edges(
    noisy_edges: Mapping[tuple[int, int], EdgeConstraint],
) -> list[tuple[int, int, EdgeConstraint]]:
    """One constraint per undirected edge, preferring the i < j direction.

    The two directions of a symmetric link carry the same rows up to sign,
    so stacking both would only double-weight every edge uniformly.
    """
    out = []
    for (i, j), constraint in sorted(noisy_edges.items()):
        if i < j or (j, i) not in noisy_edges:
            out.append((i, j, constraint))
    return out


def _stack_rows(
    scenario: NetworkScenario,
    noisy_edges: Mapping[tuple[int, int], EdgeConstraint],
    anchor_position: Sequence[float],
) -> tuple[np.ndarray, np.ndarray, dict[int, int]]:
    """Assemble the network system A x = b over non-anchor coordinates."""
    anchor = scenario.anchor_index
    unknowns = [i for i in range(scenario.node_count) if i != anchor]
    col = {node: 2 * k for k, node in enumerate(unknowns)}
    anchor_pos = np.asarray(anchor_position, dtype=float)

    rows: list[np.ndarray] = []
    rhs: list[float] = []
    for i, j, constraint in _dedupe_edges(noisy_edges):
        # constraint rows read g @ (s_i - s_j) = d
        for g, d in zip(constraint.geometry, constraint.rhs):
            row = np.zeros(2 * len(unknowns))
            b = float(d)
            if i == anchor:
                b -= float(g @ anchor_pos)
            else:
                row[col[i]: col[i] + 2] = g
            if j == anchor:
                b += float(g @ anchor_pos)
            else:
                row[col[j]: col[j] + 2] = -g
            rows.append(row)
            rhs.append(b)
    return np.array(rows), np.array(rhs), col


def joint_ls_solve(
    scenario: NetworkScenario,
    noisy_edges: Mapping[tuple[int, int], EdgeConstraint],
    anchor_position: Sequence[float] = (0.0, 0.0),
) -> JointSolution:
    """Solve the whole network jointly by linear least squares.

    Every path row of every edge goes into one stacked system with the
    anchor position substituted, weighted uniformly per the i.i.d. range
    noise assumption.  For this linear-Gaussian model the result is the
    exact joint MAP estimate of all positions at once.

    Raises:
        RankDeficientSystem: the rows do not determine every position; the
            exception carries the dimension of the undetermined subspace.
    """
    a, b, col = _stack_rows(scenario, noisy_edges, anchor_position)
    n_unknowns = a.shape[1]
    if a.shape[0] < 1:
        raise RankDeficientSystem("no constraint rows", nullity=n_unknowns)
    svals = np.linalg.svd(a, compute_uv=False)
    rank = int(np.sum(svals >= RANK_RTOL * svals[0]))
    if rank < n_unknowns:
        raise RankDeficientSystem(
            f"system rank {rank} < {n_unknowns} unknown coordinates",
            nullity=n_unknowns - rank,
        )
    x, _, _, _ = np.linalg.lstsq(a, b, rcond=None)
    residual = float(np.linalg.norm(a @ x - b))
    smin = svals[min(n_unknowns, len(svals)) - 1]
    condition = float((svals[0] / smin) ** 2)

    positions = {scenario.anchor_index: np.asarray(anchor_position, dtype=float)}
    for node, c in col.items():
        positions[node] = x[c: c + 2]
    return JointSolution(
        positions=positions,
        residual_norm=residual,
        normal_matrix_condition=condition,
    )


def grid_map(
    scenario: NetworkScenario,
    noisy_edges: Mapping[tuple[int, int], EdgeConstraint],
    grid_step: float,
    bounds: tuple[float, float, float, float],
) -> dict[int, np.ndarray]:
    """Brute-force grid maximization of the joint Gaussian log-density.

    Evaluates the stacked-row squared error on the grid product over all
    unknown nodes and returns the argmax point per node.  Only feasible for
    one or two unknown nodes.

    Raises:
        TooManyUnknowns: more than two nodes are unknown.
    """
    anchor = scenario.anchor_index
    unknowns = [i for i in range(scenario.node_count) if i != anchor]
    if len(unknowns) > 2:
        raise TooManyUnknowns(f"{len(unknowns)} unknown nodes; grid search allows 2")
    xmin, xmax, ymin, ymax = bounds
    for v in bounds:
        if not math.isfinite(v):
            raise ValueError("bounds must be finite")
    xs = np.arange(xmin, xmax + grid_step / 2, grid_step)
    ys = np.arange(ymin, ymax + grid_step / 2, grid_step)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    points = np.column_stack([gx.ravel(), gy.ravel()])  # (P, 2)

    a, b, col = _stack_rows(scenario, noisy_edges, anchor_position=(0.0, 0.0))

    if len(unknowns) == 1:
        block = a[:, 0:2]
        sse = np.sum((points @ block.T - b) ** 2, axis=1)
        best = points[int(np.argmin(sse))]
        return {unknowns[0]: best}

    a1 = a[:, 0:2]
    a2 = a[:, 2:4]
    proj2 = points @ a2.T  # (P, rows)
    best_sse = math.inf
    best_pair = (points[0], points[0])
    for p1 in points:
        base = a1 @ p1 - b
        sse = np.sum((proj2 + base) ** 2, axis=1)
        k = int(np.argmin(sse))
        if sse[k] < best_sse:
            best_sse = float(sse[k])
            best_pair = (p1, points[k])
    return {unknowns[0]: best_pair[0], unknowns[1]: best_pair[1]}

"""Closed-form Gaussian belief propagation over edge constraints.

Each node keeps a Gaussian belief over its own position.  Every round, every
node turns each neighbor's previous-round belief into a Gaussian opinion of
its own position (the neighbor's mean shifted by the edge offset, widened by
the edge noise), then fuses the incoming opinions by precision-weighted
averaging.  The anchor never updates: its belief is a point mass at the known
position, so its outgoing message is constant.

This is the broadcast variant: a node sends its full belief to all neighbors
rather than per-edge cavity messages, so on loopy graphs the fixed point is
not the sum-product marginal.  The update equations are implemented exactly
as stated, not reduced to standard sum-product.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    IsolatedNode,
    MismatchedNodeSets,
    NoMessages,
    NumericalFailure,
)
from .geometry import EPS_LOS, EPS_SING, EdgeConstraint

#: Prior variance floor; at least an order of magnitude above a 10 m arena.
ALPHA_FLOOR = 1e4

#: Condition number above which a message covariance gets a ridge.
COND_LIMIT = 1e12

#: Ridge scale, relative to mean diagonal, applied to ill-conditioned W.
RIDGE_REL = 1e-9


def _check_cov(cov: np.ndarray, name: str) -> np.ndarray:
    cov = np.array(cov, dtype=float)  # copy: the original stays writable
    if cov.shape != (2, 2):
        raise ValueError(f"{name} must be 2x2")
    if not np.all(np.isfinite(cov)):
        raise ValueError(f"{name} must be finite")
    if abs(cov[0, 1] - cov[1, 0]) > 1e-9 * (1.0 + abs(cov[0, 1])):
        raise ValueError(f"{name} must be symmetric")
    return cov


def _check_mean(mean: np.ndarray, name: str) -> np.ndarray:
    mean = np.array(mean, dtype=float)  # copy: the original stays writable
    if mean.shape != (2,):
        raise ValueError(f"{name} must be a 2-vector")
    if not np.all(np.isfinite(mean)):
        raise ValueError(f"{name} must be finite")
    return mean


@dataclass(frozen=True)
class GaussianBelief:
    """A node's position belief.  Anchor beliefs are point masses whose
    covariance is stored as the zero matrix."""

    mean: np.ndarray
    covariance: np.ndarray
    is_anchor: bool = False

    def __post_init__(self):
        mean = _check_mean(self.mean, "mean")
        cov = _check_cov(self.covariance, "covariance")
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)


@dataclass(frozen=True)
class BeliefMessage:
    """A neighbor's Gaussian opinion of a node's position."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", _check_mean(self.mean, "mean"))
        object.__setattr__(self, "covariance", _check_cov(self.covariance, "covariance"))


@dataclass(frozen=True)
class BpConfig:
    """Engine parameters.

    ``alpha`` is the initial prior variance; leave ``None`` to pick
    ``max(ALPHA_FLOOR, 2 * sigma2 * largest basis eigenvalue)`` from the
    constraint set at run time.  An explicit alpha must satisfy that same
    lower bound.  ``sigma2`` is the range-noise variance assumed by the
    measurement model."""

    alpha: float | None = None
    sigma2: float = 3.0
    tol: float = 1e-4
    max_iters: int = 100
    eps_los: float = EPS_LOS
    eps_sing: float = EPS_SING

    def __post_init__(self):
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be > 0")
        if self.tol <= 0:
            raise ValueError("tol must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


def resolve_alpha(
    config: BpConfig,
    constraints: Iterable[EdgeConstraint] | Mapping[tuple[int, int], EdgeConstraint],
) -> float:
    """Pick the prior variance for a constraint set.

    Enforces ``alpha >= 2 * sigma2 * max basis eigenvalue`` so the prior is
    weaker than any single-edge evidence.
    """
    if isinstance(constraints, Mapping):
        constraints = constraints.values()
    lam_max = max((c.max_basis_eigenvalue for c in constraints), default=0.0)
    bound = 2.0 * config.sigma2 * lam_max
    if config.alpha is None:
        return max(ALPHA_FLOOR, bound)
    if config.alpha < bound:
        raise ValueError(
            f"alpha={config.alpha:.3g} below the required bound {bound:.3g}"
        )
    return config.alpha


def init_belief(neighbor_count: int, alpha: float) -> GaussianBelief:
    """Initial belief for a non-anchor node: zero mean and a flat prior,
    widened by half again for nodes with a single neighbor."""
    if neighbor_count == 0:
        raise IsolatedNode("node has no neighbors")
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    scale = alpha if neighbor_count > 1 else 1.5 * alpha
    return GaussianBelief(np.zeros(2), scale * np.eye(2))


def compute_message(
    sender: GaussianBelief,
    edge: EdgeConstraint,
    sigma2: float,
) -> BeliefMessage:
    """Sender's Gaussian opinion of the receiver's position.

    Mean is the sender's mean shifted by the edge offset; covariance adds the
    sender's uncertainty to the scaled edge basis.  An anchor sender
    contributes no uncertainty of its own, so its message never changes.
    """
    nu = sender.mean + edge.offset
    w = sigma2 * edge.basis
    if not sender.is_anchor:
        w = w + sender.covariance
    return BeliefMessage(nu, w)


def _regularized_precision(cov: np.ndarray) -> np.ndarray:
    """Invert a symmetric 2x2 message covariance, ridging it first when its
    condition number exceeds COND_LIMIT."""
    a, b, d = cov[0, 0], cov[0, 1], cov[1, 1]
    half = 0.5 * (a + d)
    r = math.hypot(0.5 * (a - d), b)
    lam_min = half - r
    lam_max = half + r
    if not lam_min * COND_LIMIT >= lam_max:  # also catches lam_min <= 0
        ridge = RIDGE_REL * half
        a += ridge
        d += ridge
    det = a * d - b * b
    if not (math.isfinite(det) and det > 0.0):
        raise NumericalFailure(
            f"message covariance not invertible after regularization (det={det:.3e})"
        )
    return np.array([[d, -b], [-b, a]]) / det


def fuse_messages(incoming: Sequence[BeliefMessage]) -> GaussianBelief:
    """Precision-weighted fusion of incoming messages into a belief.

    Raises:
        NoMessages: the sequence is empty.
        NumericalFailure: a message covariance cannot be inverted even after
            regularization.
    """
    if len(incoming) == 0:
        raise NoMessages("cannot fuse an empty message sequence")
    lam = np.zeros((2, 2))
    eta = np.zeros(2)
    for msg in incoming:
        prec = _regularized_precision(msg.covariance)
        lam += prec
        eta += prec @ msg.mean
    det = lam[0, 0] * lam[1, 1] - lam[0, 1] * lam[1, 0]
    if not (math.isfinite(det) and det > 0.0):
        raise NumericalFailure(f"fused precision not invertible (det={det:.3e})")
    cov = np.array([[lam[1, 1], -lam[0, 1]], [-lam[1, 0], lam[0, 0]]]) / det
    cov = 0.5 * (cov + cov.T)
    return GaussianBelief(cov @ eta, cov)


def has_converged(
    prev: Mapping[int, GaussianBelief],
    curr: Mapping[int, GaussianBelief],
    tol: float,
) -> bool:
    """True when no belief mean moved by ``tol`` or more between rounds."""
    if set(prev) != set(curr):
        raise MismatchedNodeSets(
            f"belief maps cover different nodes: {sorted(prev)} vs {sorted(curr)}"
        )
    worst = max(
        float(np.linalg.norm(curr[i].mean - prev[i].mean)) for i in curr
    )
    return worst < tol


def _neighbor_map(
    constraints: Mapping[tuple[int, int], EdgeConstraint],
) -> dict[int, list[int]]:
    neighbors: dict[int, set[int]] = {}
    for (i, j) in constraints:
        if (j, i) not in constraints:
            raise ValueError(f"constraint ({i},{j}) present without ({j},{i})")
        neighbors.setdefault(i, set()).add(j)
        neighbors.setdefault(j, set()).add(i)
    return {i: sorted(js) for i, js in sorted(neighbors.items())}


def _check_connected(neighbors: Mapping[int, list[int]], anchor: int) -> None:
    if anchor not in neighbors:
        raise ValueError(f"anchor {anchor} has no edges")
    seen = {anchor}
    frontier = [anchor]
    while frontier:
        nxt = []
        for i in frontier:
            for j in neighbors[i]:
                if j not in seen:
                    seen.add(j)
                    nxt.append(j)
        frontier = nxt
    missing = set(neighbors) - seen
    if missing:
        raise ValueError(f"nodes {sorted(missing)} are disconnected from the anchor")


def anchor_belief(position: Sequence[float] = (0.0, 0.0)) -> GaussianBelief:
    """Point-mass belief for the anchor node."""
    return GaussianBelief(np.asarray(position, dtype=float), np.zeros((2, 2)), is_anchor=True)


def run_sync_rounds(
    constraints: Mapping[tuple[int, int], EdgeConstraint],
    anchor: int,
    config: BpConfig,
    anchor_position: Sequence[float] = (0.0, 0.0),
) -> list[dict[int, GaussianBelief]]:
    """Run synchronous belief-propagation rounds to convergence.

    ``constraints[(i, j)]`` is the constraint held at node ``i`` about
    neighbor ``j``: its offset estimates ``s_i - s_j``.  Both directions of
    every edge must be present and the graph must be connected through the
    anchor.

    Returns the full belief history; entry 0 holds the initial beliefs and
    each later entry one synchronous round.  Every round uses only the
    previous round's beliefs, and a node's position estimate is its belief
    mean.
    """
    neighbors = _neighbor_map(constraints)
    _check_connected(neighbors, anchor)
    alpha = resolve_alpha(config, constraints)

    beliefs: dict[int, GaussianBelief] = {anchor: anchor_belief(anchor_position)}
    for i, js in neighbors.items():
        if i != anchor:
            beliefs[i] = init_belief(len(js), alpha)
    history = [beliefs]

    for iteration in range(1, config.max_iters + 1):
        prev = history[-1]
        curr: dict[int, GaussianBelief] = {anchor: prev[anchor]}
        for i, js in neighbors.items():
            if i == anchor:
                continue
            msgs = [
                compute_message(prev[j], constraints[(i, j)], config.sigma2)
                for j in js
            ]
            try:
                curr[i] = fuse_messages(msgs)
            except NumericalFailure as exc:
                raise NumericalFailure(
                    f"node {i}, iteration {iteration}: {exc}"
                ) from exc
        history.append(curr)
        if has_converged(prev, curr, config.tol):
            break
    return history


def final_means(history: Sequence[Mapping[int, GaussianBelief]]) -> dict[int, np.ndarray]:
    """Position estimates from the last round of a belief history."""
    return {i: b.mean for i, b in history[-1].items()}

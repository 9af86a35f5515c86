"""Scenario generation and measurement simulation.

Ground-truth networks are built from node positions, an anchor, and per-edge
reflector lines.  A single-bounce measurement is produced by mirror
reflection: the sender is reflected across the reflector line, the path
length is the straight distance from the receiver to the mirror image, and
the two arrival bearings point at the reflection point.  Measurements built
this way satisfy the steering-vector identity exactly, before noise.

Noise follows the simulated radio model: Gaussian range error plus
independent uniform errors on each bearing.  Scenario files are JSON with
angles in degrees; everything in memory is radians and meters.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .bp import BpConfig
from .errors import (
    CoincidentNodes,
    InvalidReflection,
    ScenarioInfeasible,
    UnreachableNode,
)
from .geometry import (
    EPS_LOS,
    EPS_SING,
    EdgeConstraint,
    PathClass,
    PathMeasurement,
    build_edge_constraint,
    classify_path,
    normalize_angle,
)

#: Fixed five-node layout used by the experiment presets (anchor first).
PRESET_POSITIONS = (
    (0.0, 0.0),
    (-4.5, -1.5),
    (4.0, -1.0),
    (-1.0, -8.0),
    (4.2, -6.0),
)

#: Links of the preset network: anchor-S1, anchor-S2, S1-S3, S2-S4, S3-S4.
PRESET_EDGES = ((0, 1), (0, 2), (1, 3), (2, 4), (3, 4))

#: Named reflector-orientation families, radians.
SCATTER_FAMILIES = {
    "orthogonal": (0.0, math.pi / 2),
    "biorthogonal": (0.0, math.pi / 4),
}

#: Reflector lines are placed at least this far beyond the node pair.
CLEARANCE_RANGE = (0.5, 4.0)

_SAMPLE_RETRIES = 200


@dataclass(frozen=True)
class Reflector:
    """A reflecting line: orientation of the line and its signed distance
    from the origin along the unit normal (-sin, cos)."""

    orientation: float
    offset: float

    def __post_init__(self):
        if not (0.0 <= self.orientation < math.pi):
            raise ValueError("orientation must lie in [0, pi)")
        if not math.isfinite(self.offset):
            raise ValueError("offset must be finite")

    @property
    def normal(self) -> np.ndarray:
        return np.array([-math.sin(self.orientation), math.cos(self.orientation)])


@dataclass(frozen=True)
class NoiseModel:
    """Measurement noise: Gaussian range variance (m^2) and uniform bearing
    error half-width (radians)."""

    sigma2_range: float = 3.0
    aoa_halfwidth: float = math.radians(5.0)

    def __post_init__(self):
        if self.sigma2_range < 0 or self.aoa_halfwidth < 0:
            raise ValueError("noise parameters must be >= 0")

    @property
    def is_zero(self) -> bool:
        return self.sigma2_range == 0.0 and self.aoa_halfwidth == 0.0


@dataclass(frozen=True)
class NetworkScenario:
    """A realized network: positions, anchor, per-edge noiseless paths.

    ``edges[(i, j)]`` holds the measurements as seen at receiver ``i`` about
    sender ``j``; both directions are always present with ranges shared and
    bearing roles swapped.  ``edge_reflectors`` keeps the generating lines
    per canonical ``i < j`` edge (``None`` marks a line-of-sight path) so a
    scenario can be serialized and rebuilt exactly.
    """

    true_positions: np.ndarray
    anchor_index: int
    edges: dict[tuple[int, int], tuple[PathMeasurement, ...]]
    noise: NoiseModel
    seed: int
    edge_reflectors: dict[tuple[int, int], tuple[Reflector | None, ...]]

    def __post_init__(self):
        pos = np.array(self.true_positions, dtype=float)  # copy, then freeze
        if pos.ndim != 2 or pos.shape[1] != 2 or not np.all(np.isfinite(pos)):
            raise ValueError("true_positions must be a finite (N, 2) array")
        pos.setflags(write=False)
        object.__setattr__(self, "true_positions", pos)
        if not np.allclose(pos[self.anchor_index], 0.0):
            raise ValueError("anchor must sit at the origin")
        for (i, j) in self.edges:
            if (j, i) not in self.edges:
                raise ValueError(f"edge ({i},{j}) present without ({j},{i})")

    @property
    def node_count(self) -> int:
        return self.true_positions.shape[0]

    def canonical_edges(self) -> list[tuple[int, int]]:
        return sorted((i, j) for (i, j) in self.edges if i < j)

    def neighbor_map(self) -> dict[int, list[int]]:
        out: dict[int, set[int]] = {i: set() for i in range(self.node_count)}
        for (i, j) in self.edges:
            out[i].add(j)
        return {i: sorted(js) for i, js in out.items()}


def bearing(origin: np.ndarray, target: np.ndarray) -> float:
    """Absolute bearing of ``target`` as seen from ``origin``, in [0, 2*pi)."""
    d = np.asarray(target, dtype=float) - np.asarray(origin, dtype=float)
    return normalize_angle(math.atan2(d[1], d[0]))


def mirror_path_measurement(
    s_i: Sequence[float],
    s_j: Sequence[float],
    reflector: Reflector,
) -> PathMeasurement:
    """Measurement for the single-bounce path from ``s_j`` to ``s_i`` off a
    reflector line.

    Both nodes must lie strictly on the same side of the line; the path
    length is the receiver's distance to the sender's mirror image and both
    bearings point at the reflection point.

    Raises:
        InvalidReflection: the nodes straddle or touch the line.
    """
    si = np.asarray(s_i, dtype=float)
    sj = np.asarray(s_j, dtype=float)
    n = reflector.normal
    h_i = float(n @ si) - reflector.offset
    h_j = float(n @ sj) - reflector.offset
    if h_i * h_j <= 0.0:
        raise InvalidReflection(
            f"nodes at signed distances {h_i:.3g} and {h_j:.3g} from the line"
        )
    mirrored = sj - 2.0 * h_j * n
    d = float(np.linalg.norm(si - mirrored))
    t = h_j / (h_i + h_j)  # same side, so t is strictly inside (0, 1)
    c = mirrored + t * (si - mirrored)
    return PathMeasurement(
        range_m=d,
        aoa_at_receiver=bearing(si, c),
        aoa_at_sender=bearing(sj, c),
    )


def los_path_measurement(s_i: Sequence[float], s_j: Sequence[float]) -> PathMeasurement:
    """Measurement for the direct path between two distinct nodes."""
    si = np.asarray(s_i, dtype=float)
    sj = np.asarray(s_j, dtype=float)
    d = float(np.linalg.norm(si - sj))
    if d == 0.0:
        raise CoincidentNodes("nodes coincide; no direct path exists")
    return PathMeasurement(
        range_m=d,
        aoa_at_receiver=bearing(si, sj),
        aoa_at_sender=bearing(sj, si),
    )


def apply_noise(
    m: PathMeasurement,
    noise: NoiseModel,
    rng: np.random.Generator,
) -> PathMeasurement:
    """One noisy draw of a measurement: Gaussian range error, independent
    uniform error on each bearing.  Negative noisy ranges are allowed; the
    linear measurement model does not forbid them."""
    sigma = math.sqrt(noise.sigma2_range)
    hw = noise.aoa_halfwidth
    return PathMeasurement(
        range_m=m.range_m + float(rng.normal(0.0, sigma)),
        aoa_at_receiver=normalize_angle(
            m.aoa_at_receiver + float(rng.uniform(-hw, hw))
        ),
        aoa_at_sender=normalize_angle(
            m.aoa_at_sender + float(rng.uniform(-hw, hw))
        ),
    )


# ---------------------------------------------------------------------------
# scenario construction


@dataclass(frozen=True)
class ScenarioSpec:
    """Description of a scenario to generate.

    ``kind`` selects fixed preset positions, random placement, or explicit
    positions and edges.  ``scatter_orientations`` is the reflector family;
    path ``r`` of every edge uses orientation ``r mod len(family)``.
    """

    kind: str = "paper_preset"
    positions: tuple[tuple[float, float], ...] | None = None
    edge_list: tuple[tuple[int, int], ...] | None = None
    los_edges: frozenset = frozenset()
    scatter_orientations: tuple[float, ...] = SCATTER_FAMILIES["orthogonal"]
    paths_per_edge: int = 2
    noise: NoiseModel = field(default_factory=NoiseModel)
    anchor: int = 0
    n_nodes: int = 5
    arena_size: float = 10.0
    connectivity_radius: float = 6.5

    @classmethod
    def paper_preset(cls, scatter="orthogonal", noise: NoiseModel | None = None,
                     paths_per_edge: int = 2) -> "ScenarioSpec":
        return cls(
            kind="paper_preset",
            positions=PRESET_POSITIONS,
            edge_list=PRESET_EDGES,
            scatter_orientations=resolve_scatter(scatter),
            paths_per_edge=paths_per_edge,
            noise=noise if noise is not None else NoiseModel(),
        )

    @classmethod
    def random(cls, n_nodes: int = 5, arena_size: float = 10.0,
               connectivity_radius: float = 6.5, scatter="orthogonal",
               noise: NoiseModel | None = None, paths_per_edge: int = 2) -> "ScenarioSpec":
        return cls(
            kind="random",
            n_nodes=n_nodes,
            arena_size=arena_size,
            connectivity_radius=connectivity_radius,
            scatter_orientations=resolve_scatter(scatter),
            paths_per_edge=paths_per_edge,
            noise=noise if noise is not None else NoiseModel(),
        )

    @classmethod
    def explicit(cls, positions, edge_list, scatter="orthogonal",
                 los_edges=(), noise: NoiseModel | None = None,
                 paths_per_edge: int = 2) -> "ScenarioSpec":
        return cls(
            kind="explicit",
            positions=tuple(tuple(map(float, p)) for p in positions),
            edge_list=tuple(tuple(sorted(e)) for e in edge_list),
            los_edges=frozenset(tuple(sorted(e)) for e in los_edges),
            scatter_orientations=resolve_scatter(scatter),
            paths_per_edge=paths_per_edge,
            noise=noise if noise is not None else NoiseModel(),
        )


def resolve_scatter(scatter) -> tuple[float, ...]:
    """Turn a family name or an orientation sequence (radians) into a tuple."""
    if isinstance(scatter, str):
        try:
            return SCATTER_FAMILIES[scatter]
        except KeyError:
            raise ValueError(
                f"unknown scatter family {scatter!r}; "
                f"known: {sorted(SCATTER_FAMILIES)}"
            ) from None
    fam = tuple(normalize_angle(a) % math.pi for a in scatter)
    if not fam:
        raise ValueError("scatter family must not be empty")
    return fam


def _sample_reflector(
    s_i: np.ndarray,
    s_j: np.ndarray,
    orientation: float,
    rng: np.random.Generator,
) -> tuple[Reflector, PathMeasurement]:
    """Place a reflector of the given orientation so the bounce is valid and
    non-degenerate, retrying the offset draw up to a bound."""
    n = np.array([-math.sin(orientation), math.cos(orientation)])
    lo = min(float(n @ s_i), float(n @ s_j))
    hi = max(float(n @ s_i), float(n @ s_j))
    for _ in range(_SAMPLE_RETRIES):
        clearance = float(rng.uniform(*CLEARANCE_RANGE))
        side = int(rng.integers(2))
        offset = hi + clearance if side else lo - clearance
        reflector = Reflector(orientation, offset)
        try:
            m = mirror_path_measurement(s_i, s_j, reflector)
        except InvalidReflection:
            continue
        if classify_path(m) is PathClass.SINGLE_BOUNCE:
            return reflector, m
    raise ScenarioInfeasible(
        f"no valid reflector at orientation {orientation:.3f} rad "
        f"after {_SAMPLE_RETRIES} draws"
    )


def _random_layout(spec: ScenarioSpec, rng: np.random.Generator):
    half = spec.arena_size / 2.0
    for _ in range(_SAMPLE_RETRIES):
        pos = rng.uniform(-half, half, size=(spec.n_nodes, 2))
        pos[spec.anchor] = 0.0
        edges = tuple(
            (i, j)
            for i in range(spec.n_nodes)
            for j in range(i + 1, spec.n_nodes)
            if np.linalg.norm(pos[i] - pos[j]) <= spec.connectivity_radius
        )
        if not edges:
            continue
        reach = {spec.anchor}
        grew = True
        while grew:
            grew = False
            for (i, j) in edges:
                if (i in reach) != (j in reach):
                    reach |= {i, j}
                    grew = True
        if len(reach) == spec.n_nodes:
            return pos, edges
    raise ScenarioInfeasible(
        f"no connected layout found in {_SAMPLE_RETRIES} draws; "
        "increase connectivity_radius"
    )


def build_scenario(spec: ScenarioSpec, seed: int = 0) -> NetworkScenario:
    """Generate a scenario: positions, edges, and per-edge reflector paths.

    Reflector orientations cycle through the given orientation family; offsets
    are drawn uniformly at a clearance beyond the node pair and redrawn until
    the bounce is valid.  Edges flagged line-of-sight get one direct path on
    top of the reflected ones.

    Raises:
        ScenarioInfeasible: no valid geometry found within the retry budget.
    """
    rng = np.random.default_rng(seed)
    if spec.kind == "random":
        positions, edge_list = _random_layout(spec, rng)
    else:
        if spec.positions is None or spec.edge_list is None:
            raise ValueError(f"{spec.kind} spec requires positions and edge_list")
        positions = np.asarray(spec.positions, dtype=float)
        edge_list = tuple(tuple(sorted(e)) for e in spec.edge_list)

    edges: dict[tuple[int, int], tuple[PathMeasurement, ...]] = {}
    reflectors: dict[tuple[int, int], tuple[Reflector | None, ...]] = {}
    fam = spec.scatter_orientations
    for (i, j) in sorted(edge_list):
        paths_ij: list[PathMeasurement] = []
        lines: list[Reflector | None] = []
        for r in range(spec.paths_per_edge):
            reflector, m = _sample_reflector(
                positions[i], positions[j], fam[r % len(fam)], rng
            )
            paths_ij.append(m)
            lines.append(reflector)
        if (i, j) in spec.los_edges:
            paths_ij.append(los_path_measurement(positions[i], positions[j]))
            lines.append(None)
        edges[(i, j)] = tuple(paths_ij)
        edges[(j, i)] = tuple(m.swapped() for m in paths_ij)
        reflectors[(i, j)] = tuple(lines)

    return NetworkScenario(
        true_positions=positions,
        anchor_index=spec.anchor,
        edges=edges,
        noise=spec.noise,
        seed=seed,
        edge_reflectors=reflectors,
    )


# ---------------------------------------------------------------------------
# noise application and constraints


def draw_noisy_edges(
    scenario: NetworkScenario,
    rng: np.random.Generator,
) -> dict[tuple[int, int], tuple[PathMeasurement, ...]]:
    """One noisy draw of every edge, keeping links symmetric.

    Each physical path gets one range error and one error per bearing; the
    two directions of an edge see the same noisy values with the bearing
    roles swapped.  Draw order is canonical-edge order, so the stream is
    reproducible from the generator state.
    """
    noisy: dict[tuple[int, int], tuple[PathMeasurement, ...]] = {}
    for (i, j) in scenario.canonical_edges():
        fwd = tuple(apply_noise(m, scenario.noise, rng) for m in scenario.edges[(i, j)])
        noisy[(i, j)] = fwd
        noisy[(j, i)] = tuple(m.swapped() for m in fwd)
    return noisy


def edge_constraints(
    edges: Mapping[tuple[int, int], tuple[PathMeasurement, ...]],
    eps_los: float = EPS_LOS,
    eps_sing: float = EPS_SING,
) -> dict[tuple[int, int], EdgeConstraint]:
    """Fuse every directed edge's paths into an EdgeConstraint."""
    return {
        key: build_edge_constraint(paths, eps_los=eps_los, eps_sing=eps_sing)
        for key, paths in sorted(edges.items())
    }


def draw_noisy_constraints(
    scenario: NetworkScenario,
    rng: np.random.Generator,
    eps_los: float = EPS_LOS,
    eps_sing: float = EPS_SING,
) -> dict[tuple[int, int], EdgeConstraint]:
    """One noisy draw of the whole network, fused into edge constraints."""
    return edge_constraints(draw_noisy_edges(scenario, rng), eps_los, eps_sing)


# ---------------------------------------------------------------------------
# non-cooperative baseline


def pairwise_baseline(
    scenario: NetworkScenario,
    constraints: Mapping[tuple[int, int], EdgeConstraint] | None = None,
    anchor_position: Sequence[float] = (0.0, 0.0),
) -> dict[int, np.ndarray]:
    """Localize every node once along a breadth-first tree from the anchor.

    Each node is estimated as its parent's estimate plus the edge offset,
    with no iteration and no fusion; ties between same-depth parents go to
    the lower node index.  Pass the constraints of a noisy draw to evaluate
    the baseline under noise; by default the scenario's noiseless edges are
    used.

    Raises:
        UnreachableNode: some node has no path to the anchor.
    """
    if constraints is None:
        constraints = edge_constraints(scenario.edges)
    neighbors = scenario.neighbor_map()
    anchor = scenario.anchor_index
    estimates: dict[int, np.ndarray] = {anchor: np.asarray(anchor_position, dtype=float)}
    frontier = [anchor]
    while frontier:
        frontier_set = set(frontier)
        adopted: dict[int, int] = {}
        for v in range(scenario.node_count):
            if v in estimates or v in adopted:
                continue
            parents = [j for j in neighbors[v] if j in frontier_set]
            if parents:
                adopted[v] = min(parents)
        for v, parent in adopted.items():
            estimates[v] = estimates[parent] + constraints[(v, parent)].offset
        frontier = sorted(adopted)
    missing = [v for v in range(scenario.node_count) if v not in estimates]
    if missing:
        raise UnreachableNode(f"nodes {missing} have no path to the anchor")
    return estimates


# ---------------------------------------------------------------------------
# scenario files (JSON, degrees)


def scenario_to_dict(scenario: NetworkScenario, bp: BpConfig | None = None) -> dict:
    """Serializable form of a scenario plus engine settings."""
    bp = bp if bp is not None else BpConfig()
    edges_doc = []
    for (i, j) in scenario.canonical_edges():
        lines = scenario.edge_reflectors.get((i, j), ())
        edges_doc.append(
            {
                "i": i,
                "j": j,
                "reflectors": [
                    {
                        "orientation_deg": math.degrees(r.orientation),
                        "offset_m": r.offset,
                    }
                    for r in lines
                    if r is not None
                ],
                "los": any(r is None for r in lines),
            }
        )
    return {
        "nodes": [[float(x), float(y)] for x, y in scenario.true_positions],
        "anchor": scenario.anchor_index,
        "edges": edges_doc,
        "noise": {
            "sigma2_range": scenario.noise.sigma2_range,
            "aoa_halfwidth_deg": math.degrees(scenario.noise.aoa_halfwidth),
        },
        "bp": {
            "alpha": bp.alpha,
            "tol": bp.tol,
            "max_iters": bp.max_iters,
        },
        "seed": scenario.seed,
    }


def scenario_from_dict(doc: Mapping) -> tuple[NetworkScenario, BpConfig]:
    """Rebuild a scenario and engine settings from their serialized form.

    Measurements are regenerated deterministically from the stored reflector
    lines, so a round trip reproduces the scenario exactly.
    """
    positions = np.asarray(doc["nodes"], dtype=float)
    noise_doc = doc.get("noise", {})
    noise = NoiseModel(
        sigma2_range=float(noise_doc.get("sigma2_range", 3.0)),
        aoa_halfwidth=math.radians(float(noise_doc.get("aoa_halfwidth_deg", 5.0))),
    )
    edges: dict[tuple[int, int], tuple[PathMeasurement, ...]] = {}
    reflectors: dict[tuple[int, int], tuple[Reflector | None, ...]] = {}
    for entry in doc["edges"]:
        i, j = int(entry["i"]), int(entry["j"])
        if i > j:
            i, j = j, i
        paths: list[PathMeasurement] = []
        lines: list[Reflector | None] = []
        for r in entry.get("reflectors", []):
            reflector = Reflector(
                orientation=normalize_angle(math.radians(float(r["orientation_deg"]))) % math.pi,
                offset=float(r["offset_m"]),
            )
            paths.append(mirror_path_measurement(positions[i], positions[j], reflector))
            lines.append(reflector)
        if entry.get("los", False):
            paths.append(los_path_measurement(positions[i], positions[j]))
            lines.append(None)
        edges[(i, j)] = tuple(paths)
        edges[(j, i)] = tuple(m.swapped() for m in paths)
        reflectors[(i, j)] = tuple(lines)

    scenario = NetworkScenario(
        true_positions=positions,
        anchor_index=int(doc.get("anchor", 0)),
        edges=edges,
        noise=noise,
        seed=int(doc.get("seed", 0)),
        edge_reflectors=reflectors,
    )
    bp_doc = doc.get("bp", {})
    alpha = bp_doc.get("alpha", None)
    bp = BpConfig(
        alpha=None if alpha is None else float(alpha),
        sigma2=noise.sigma2_range if noise.sigma2_range > 0 else BpConfig().sigma2,
        tol=float(bp_doc.get("tol", 1e-4)),
        max_iters=int(bp_doc.get("max_iters", 100)),
    )
    return scenario, bp


def save_scenario(path: str | Path, scenario: NetworkScenario, bp: BpConfig | None = None) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(scenario, bp), indent=2) + "\n")


def load_scenario(path: str | Path) -> tuple[NetworkScenario, BpConfig]:
    return scenario_from_dict(json.loads(Path(path).read_text()))

"""Monte-Carlo experiment harness: error samples, CDFs, tables, traces.

Trials share one fixed scenario and differ only in the noise draw.  Each
trial has its own seed derived from the run seed, so results are reproducible
regardless of execution order.  The hot path advances all trials of the
belief-propagation run simultaneously on stacked arrays; it performs the
same arithmetic as the per-trial engine and falls back to it for any trial
whose geometry leaves the vectorized fast path (line-of-sight or degenerate
draws, rank-deficient edges).

CSV artifacts use a header row, LF line endings, and floats with six
significant digits; identical inputs produce byte-identical files.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import __version__
from .bp import ALPHA_FLOOR, BpConfig, run_sync_rounds
from .errors import EmptySamples
from .geometry import TWO_PI
from .oracle import joint_ls_solve
from .simulate import (
    NetworkScenario,
    apply_noise,
    draw_noisy_constraints,
    pairwise_baseline,
    scenario_to_dict,
)

SCHEME_COOPERATIVE = "cooperative"
SCHEME_PAIRWISE = "pairwise"

_COND_LIMIT = 1e12
_RIDGE_REL = 1e-9


@dataclass(frozen=True)
class ErrorSamples:
    """Per-trial absolute coordinate errors for one localization scheme."""

    scheme: str
    node_ids: tuple[int, ...]
    abs_x: np.ndarray  # (trials, nodes)
    abs_y: np.ndarray  # (trials, nodes)
    trial_seeds: np.ndarray  # (trials,)

    def __post_init__(self):
        if self.abs_x.shape != self.abs_y.shape:
            raise ValueError("abs_x and abs_y must have equal shapes")
        if self.abs_x.shape[1] != len(self.node_ids):
            raise ValueError("column count must match node_ids")

    @property
    def trials(self) -> int:
        return self.abs_x.shape[0]


def trial_seed_array(seed: int, trials: int) -> np.ndarray:
    """Per-trial seeds derived from the run seed."""
    return np.random.SeedSequence(seed).generate_state(trials, dtype=np.uint64)


# ---------------------------------------------------------------------------
# batched noisy draws


def _noise_value_arrays(
    scenario: NetworkScenario,
    trial_seeds: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Noisy path values for every trial, drawn exactly like the per-trial
    reference path.

    Returns ``(ranges, at_low, at_high)``, each shaped (trials, edges, paths)
    over canonical edges: the noisy range, the bearing measured at the
    lower-numbered node, and the bearing measured at the higher-numbered one.
    """
    canon = scenario.canonical_edges()
    r_max = max(len(scenario.edges[e]) for e in canon)
    t = len(trial_seeds)
    ranges = np.full((t, len(canon), r_max), np.nan)
    at_low = np.full_like(ranges, np.nan)
    at_high = np.full_like(ranges, np.nan)
    for k in range(t):
        rng = np.random.default_rng(int(trial_seeds[k]))
        for e, key in enumerate(canon):
            for r, m in enumerate(scenario.edges[key]):
                nm = apply_noise(m, scenario.noise, rng)
                ranges[k, e, r] = nm.range_m
                at_low[k, e, r] = nm.aoa_at_receiver
                at_high[k, e, r] = nm.aoa_at_sender
    return ranges, at_low, at_high


def _batch_constraints(
    scenario: NetworkScenario,
    ranges: np.ndarray,
    at_low: np.ndarray,
    at_high: np.ndarray,
    config: BpConfig,
):
    """Closed-form edge constraints for all trials at once.

    Returns ``(offsets, bases, alpha, fallback)`` where ``offsets[(i, j)]``
    estimates ``s_i - s_j`` per trial and ``bases[(i, j)]`` is the noise
    basis (shared between directions).  Trials flagged in ``fallback`` hit
    geometry the fast path does not cover and must be recomputed by the
    reference engine.  Only supports uniform all-bounce edges; anything else
    flags every trial.
    """
    canon = scenario.canonical_edges()
    t = ranges.shape[0]
    if np.isnan(ranges).any():
        # ragged path counts: no fast path
        zeros = {
            key: np.zeros((t, 2)) for pair in canon for key in (pair, pair[::-1])
        }
        bases = {
            key: np.tile(np.eye(2), (t, 1, 1))
            for pair in canon
            for key in (pair, pair[::-1])
        }
        return zeros, bases, np.full(t, ALPHA_FLOOR), np.ones(t, dtype=bool)

    fallback = np.zeros(t, dtype=bool)

    # receiver is the low node: g @ (s_low - s_high) = range
    delta = at_low - at_high
    gap = np.sin(delta)
    wrapped = np.abs(delta - TWO_PI * np.round(delta / TWO_PI))
    is_los = (math.pi - wrapped) <= config.eps_los
    is_sing = np.abs(gap) <= config.eps_sing
    fallback |= np.any(is_los | is_sing, axis=(1, 2))

    safe_gap = np.where(gap == 0.0, 1.0, gap)
    g = np.stack(
        [
            (np.sin(at_high) + np.sin(at_low)) / safe_gap,
            -(np.cos(at_high) + np.cos(at_low)) / safe_gap,
        ],
        axis=-1,
    )  # (T, E, R, 2)

    m00 = np.sum(g[..., 0] * g[..., 0], axis=2)
    m01 = np.sum(g[..., 0] * g[..., 1], axis=2)
    m11 = np.sum(g[..., 1] * g[..., 1], axis=2)
    half = 0.5 * (m00 + m11)
    disc = np.hypot(0.5 * (m00 - m11), m01)
    lam_min = half - disc
    lam_max = half + disc
    fallback |= np.any(~(lam_min > 1e-18 * lam_max), axis=1)

    det = m00 * m11 - m01 * m01
    det = np.where(det <= 0.0, 1.0, det)
    minv = np.empty(m00.shape + (2, 2))
    minv[..., 0, 0] = m11 / det
    minv[..., 0, 1] = -m01 / det
    minv[..., 1, 0] = -m01 / det
    minv[..., 1, 1] = m00 / det

    gtd = np.stack(
        [np.sum(g[..., 0] * ranges, axis=2), np.sum(g[..., 1] * ranges, axis=2)],
        axis=-1,
    )  # (T, E, 2)
    offset_fwd = np.einsum("teab,teb->tea", minv, gtd)

    offsets: dict[tuple[int, int], np.ndarray] = {}
    bases: dict[tuple[int, int], np.ndarray] = {}
    for e, (i, j) in enumerate(canon):
        offsets[(i, j)] = offset_fwd[:, e]
        offsets[(j, i)] = -offset_fwd[:, e]
        bases[(i, j)] = minv[:, e]
        bases[(j, i)] = minv[:, e]

    lam_sigma_max = np.max(1.0 / np.maximum(lam_min, 1e-300), axis=1)
    bound = 2.0 * config.sigma2 * lam_sigma_max
    if config.alpha is None:
        alpha = np.maximum(ALPHA_FLOOR, bound)
    else:
        bad = (bound > config.alpha) & ~fallback
        if np.any(bad):
            k = int(np.argmax(bad))
            raise ValueError(
                f"trial {k}: alpha={config.alpha:.3g} below the required "
                f"bound {bound[k]:.3g}"
            )
        alpha = np.full(t, float(config.alpha))
    return offsets, bases, alpha, fallback


@dataclass
class _BatchResult:
    means: np.ndarray        # (trials, nodes, 2) final belief means
    iterations: np.ndarray   # (trials,) executed rounds
    trace_sum: np.ndarray | None  # (rounds+1, non-anchor nodes, 2) |error| sums
    max_mean_norm: float


def _batch_precision(w00, w01, w11, ok):
    """Vectorized twin of the engine's regularized 2x2 inversion; entries
    where ``ok`` is false are dummies and only need to stay finite."""
    half = 0.5 * (w00 + w11)
    r = np.hypot(0.5 * (w00 - w11), w01)
    lam_min = half - r
    lam_max = half + r
    needs = ~(lam_min * _COND_LIMIT >= lam_max)
    ridge = np.where(needs, _RIDGE_REL * half, 0.0)
    a = w00 + ridge
    d = w11 + ridge
    det = a * d - w01 * w01
    good = np.isfinite(det) & (det > 0.0)
    if not np.all(good | ~ok):
        k = int(np.argmax(~good & ok))
        raise ArithmeticError(
            f"trial {k}: message covariance not invertible after regularization"
        )
    det = np.where(good, det, 1.0)
    return d / det, -w01 / det, a / det  # p00, p01, p11


def run_bp_batch(
    scenario: NetworkScenario,
    config: BpConfig,
    trial_seeds: np.ndarray,
    trace: bool = False,
) -> _BatchResult:
    """Run the belief-propagation rounds for many noise draws at once.

    Matches :func:`gbploc.bp.run_sync_rounds` trial for trial: same noise
    stream, same update equations, same stopping rule.
    """
    t = len(trial_seeds)
    n = scenario.node_count
    anchor = scenario.anchor_index
    truth = scenario.true_positions
    neighbor_map = scenario.neighbor_map()
    others = [i for i in range(n) if i != anchor]

    ranges, at_low, at_high = _noise_value_arrays(scenario, trial_seeds)
    offsets, bases, alpha, fallback = _batch_constraints(
        scenario, ranges, at_low, at_high, config
    )
    directed = sorted(offsets)

    mu = np.zeros((t, n, 2))
    cov_scale = np.zeros((t, n))
    for i in others:
        k = 1.0 if len(neighbor_map[i]) > 1 else 1.5
        cov_scale[:, i] = k * alpha
    p = np.zeros((t, n, 2, 2))
    p[:, :, 0, 0] = cov_scale
    p[:, :, 1, 1] = cov_scale

    keep = ~fallback
    active = keep.copy()
    iterations = np.zeros(t, dtype=int)
    trace_sums: list[np.ndarray] | None = [] if trace else None
    max_norm = 0.0

    def record_trace():
        if trace_sums is not None:
            err = np.abs(mu[:, others] - truth[others])
            trace_sums.append(err[keep].sum(axis=0))

    record_trace()

    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for iteration in range(1, config.max_iters + 1):
            if not np.any(active):
                break
            lam00 = np.zeros((t, n))
            lam01 = np.zeros((t, n))
            lam11 = np.zeros((t, n))
            eta = np.zeros((t, n, 2))
            for (i, j) in directed:
                if i == anchor:
                    continue
                base = bases[(i, j)]
                w00 = config.sigma2 * base[:, 0, 0] + p[:, j, 0, 0]
                w01 = config.sigma2 * base[:, 0, 1] + p[:, j, 0, 1]
                w11 = config.sigma2 * base[:, 1, 1] + p[:, j, 1, 1]
                p00, p01, p11 = _batch_precision(w00, w01, w11, active)
                nu = mu[:, j] + offsets[(i, j)]
                lam00[:, i] += p00
                lam01[:, i] += p01
                lam11[:, i] += p11
                eta[:, i, 0] += p00 * nu[:, 0] + p01 * nu[:, 1]
                eta[:, i, 1] += p01 * nu[:, 0] + p11 * nu[:, 1]

            new_mu = mu.copy()
            new_p = p.copy()
            for i in others:
                det = lam00[:, i] * lam11[:, i] - lam01[:, i] * lam01[:, i]
                det = np.where(det == 0.0, 1.0, det)
                c00 = lam11[:, i] / det
                c01 = -lam01[:, i] / det
                c11 = lam00[:, i] / det
                new_mu[:, i, 0] = c00 * eta[:, i, 0] + c01 * eta[:, i, 1]
                new_mu[:, i, 1] = c01 * eta[:, i, 0] + c11 * eta[:, i, 1]
                new_p[:, i, 0, 0] = c00
                new_p[:, i, 0, 1] = c01
                new_p[:, i, 1, 0] = c01
                new_p[:, i, 1, 1] = c11

            disp = np.linalg.norm(new_mu - mu, axis=2).max(axis=1)
            mu[active] = new_mu[active]
            p[active] = new_p[active]
            iterations[active] = iteration
            record_trace()
            if np.any(keep):
                max_norm = max(
                    max_norm,
                    float(np.max(np.linalg.norm(mu[keep][:, others], axis=2))),
                )
            active &= ~(disp < config.tol)

    # trials outside the fast path rerun through the reference engine
    for k in np.nonzero(fallback)[0]:
        rng = np.random.default_rng(int(trial_seeds[k]))
        try:
            constraints = draw_noisy_constraints(
                scenario, rng, eps_los=config.eps_los, eps_sing=config.eps_sing
            )
            history = run_sync_rounds(constraints, anchor, config)
        except Exception as exc:
            raise type(exc)(f"trial {k}: {exc}") from exc
        iterations[k] = len(history) - 1
        for i in range(n):
            mu[k, i] = history[-1][i].mean
        errs = [
            np.abs(np.stack([beliefs[i].mean for i in others]) - truth[others])
            for beliefs in history
        ]
        max_norm = max(
            max_norm,
            max(
                float(np.linalg.norm(beliefs[i].mean))
                for beliefs in history
                for i in others
            ),
        )
        if trace_sums is not None:
            while len(trace_sums) < len(errs):
                trace_sums.append(trace_sums[-1].copy())
            for l, sums in enumerate(trace_sums):
                sums += errs[min(l, len(errs) - 1)]

    trace_sum = np.stack(trace_sums) if trace_sums is not None else None
    return _BatchResult(
        means=mu,
        iterations=iterations,
        trace_sum=trace_sum,
        max_mean_norm=max_norm,
    )


def bfs_parent_order(scenario: NetworkScenario) -> list[tuple[int, int]]:
    """(node, parent) pairs in breadth-first assignment order from the
    anchor, ties going to the lower-indexed parent."""
    neighbors = scenario.neighbor_map()
    anchor = scenario.anchor_index
    order: list[tuple[int, int]] = []
    seen = {anchor}
    frontier = [anchor]
    while frontier:
        frontier_set = set(frontier)
        adopted = {}
        for v in range(scenario.node_count):
            if v in seen:
                continue
            parents = [j for j in neighbors[v] if j in frontier_set]
            if parents:
                adopted[v] = min(parents)
        order.extend(sorted(adopted.items()))
        seen |= set(adopted)
        frontier = sorted(adopted)
    return order


def _batch_pairwise(
    scenario: NetworkScenario,
    offsets: Mapping[tuple[int, int], np.ndarray],
    trials: int,
) -> np.ndarray:
    """Pairwise tree estimates for all trials: (trials, nodes, 2)."""
    est = np.zeros((trials, scenario.node_count, 2))
    for v, parent in bfs_parent_order(scenario):
        est[:, v] = est[:, parent] + offsets[(v, parent)]
    return est


# ---------------------------------------------------------------------------
# public harness operations


def run_montecarlo(
    scenario: NetworkScenario,
    config: BpConfig,
    trials: int,
    seed: int,
    mode: str = "both",
) -> dict[str, ErrorSamples]:
    """Monte-Carlo error samples on a fixed scenario.

    Each trial draws fresh noise, runs cooperative belief propagation to
    convergence and the pairwise baseline on the same draw, and records the
    absolute coordinate errors per node.  Deterministic given the seed.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if mode not in ("coop", "pairwise", "both"):
        raise ValueError(f"unknown mode {mode!r}")
    seeds = trial_seed_array(seed, trials)
    anchor = scenario.anchor_index
    others = [i for i in range(scenario.node_count) if i != anchor]
    truth = scenario.true_positions

    out: dict[str, ErrorSamples] = {}
    if mode in ("coop", "both"):
        result = run_bp_batch(scenario, config, seeds)
        err = np.abs(result.means[:, others] - truth[others])
        out[SCHEME_COOPERATIVE] = ErrorSamples(
            SCHEME_COOPERATIVE, tuple(others), err[..., 0].copy(), err[..., 1].copy(), seeds
        )
    if mode in ("pairwise", "both"):
        ranges, at_low, at_high = _noise_value_arrays(scenario, seeds)
        offsets, _, _, fallback = _batch_constraints(
            scenario, ranges, at_low, at_high, config
        )
        est = _batch_pairwise(scenario, offsets, trials)
        for k in np.nonzero(fallback)[0]:
            rng = np.random.default_rng(int(seeds[k]))
            constraints = draw_noisy_constraints(
                scenario, rng, eps_los=config.eps_los, eps_sing=config.eps_sing
            )
            for i, pos in pairwise_baseline(scenario, constraints).items():
                est[k, i] = pos
        err = np.abs(est[:, others] - truth[others])
        out[SCHEME_PAIRWISE] = ErrorSamples(
            SCHEME_PAIRWISE, tuple(others), err[..., 0].copy(), err[..., 1].copy(), seeds
        )
    return out


def oracle_error_samples(
    scenario: NetworkScenario,
    config: BpConfig,
    trials: int,
    seed: int,
) -> ErrorSamples:
    """Joint least-squares errors on the same noise draws as the other
    schemes (same per-trial seeds, same stream order)."""
    seeds = trial_seed_array(seed, trials)
    anchor = scenario.anchor_index
    others = [i for i in range(scenario.node_count) if i != anchor]
    truth = scenario.true_positions
    abs_x = np.zeros((trials, len(others)))
    abs_y = np.zeros((trials, len(others)))
    for k in range(trials):
        rng = np.random.default_rng(int(seeds[k]))
        try:
            constraints = draw_noisy_constraints(
                scenario, rng, eps_los=config.eps_los, eps_sing=config.eps_sing
            )
            solution = joint_ls_solve(scenario, constraints)
        except Exception as exc:
            raise type(exc)(f"trial {k}: {exc}") from exc
        for c, i in enumerate(others):
            abs_x[k, c] = abs(solution.positions[i][0] - truth[i, 0])
            abs_y[k, c] = abs(solution.positions[i][1] - truth[i, 1])
    return ErrorSamples("oracle", tuple(others), abs_x, abs_y, seeds)


def convergence_trace(
    scenario: NetworkScenario,
    config: BpConfig,
    trials: int,
    seed: int,
) -> np.ndarray:
    """Per-iteration mean absolute error, averaged over trials and nodes.

    Row ``l`` holds the x and y error means after iteration ``l`` (row 0 is
    the zero-mean initialization); trials that converge early keep
    contributing their final error, so the trace is padded, not truncated.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    seeds = trial_seed_array(seed, trials)
    result = run_bp_batch(scenario, config, seeds, trace=True)
    return result.trace_sum.mean(axis=1) / trials


def empirical_cdf(
    samples: ErrorSamples,
) -> dict[tuple[int, str], tuple[np.ndarray, np.ndarray]]:
    """Sorted error values with cumulative fractions k/n per node and
    coordinate."""
    if samples.trials == 0:
        raise EmptySamples("no trials recorded")
    out = {}
    fractions = np.arange(1, samples.trials + 1) / samples.trials
    for c, node in enumerate(samples.node_ids):
        out[(node, "x")] = (np.sort(samples.abs_x[:, c]), fractions)
        out[(node, "y")] = (np.sort(samples.abs_y[:, c]), fractions)
    return out


def mean_abs_error_table(samples: ErrorSamples) -> list[dict]:
    """Mean absolute error per node and coordinate for one scheme."""
    if samples.trials == 0:
        raise EmptySamples("no trials recorded")
    rows = []
    for c, node in enumerate(samples.node_ids):
        rows.append(
            {
                "scheme": samples.scheme,
                "node": node,
                "mean_abs_err_x_m": float(samples.abs_x[:, c].mean()),
                "mean_abs_err_y_m": float(samples.abs_y[:, c].mean()),
            }
        )
    return rows


# ---------------------------------------------------------------------------
# CSV artifacts


def _fmt(v: float) -> str:
    return format(float(v), ".6g")


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def write_errors_csv(path: str | Path, samples: ErrorSamples) -> None:
    def rows():
        for k in range(samples.trials):
            for c, node in enumerate(samples.node_ids):
                yield (
                    samples.scheme,
                    str(k),
                    str(int(samples.trial_seeds[k])),
                    str(node),
                    _fmt(samples.abs_x[k, c]),
                    _fmt(samples.abs_y[k, c]),
                )

    _write_csv(
        Path(path),
        ["scheme", "trial", "trial_seed", "node", "abs_err_x_m", "abs_err_y_m"],
        rows(),
    )


def write_cdf_csv(path: str | Path, samples: ErrorSamples) -> None:
    cdf = empirical_cdf(samples)

    def rows():
        for (node, coord), (values, fractions) in sorted(cdf.items()):
            for v, f in zip(values, fractions):
                yield (samples.scheme, str(node), coord, _fmt(v), _fmt(f))

    _write_csv(
        Path(path),
        ["scheme", "node", "coordinate", "error_m", "cum_fraction"],
        rows(),
    )


def write_mean_errors_csv(path: str | Path, samples_list: Sequence[ErrorSamples]) -> None:
    def rows():
        for samples in samples_list:
            for row in mean_abs_error_table(samples):
                yield (
                    row["scheme"],
                    str(row["node"]),
                    _fmt(row["mean_abs_err_x_m"]),
                    _fmt(row["mean_abs_err_y_m"]),
                )

    _write_csv(
        Path(path),
        ["scheme", "node", "mean_abs_err_x_m", "mean_abs_err_y_m"],
        rows(),
    )


def write_convergence_csv(path: str | Path, trace: np.ndarray) -> None:
    def rows():
        for l, (ex, ey) in enumerate(trace):
            yield (str(l), _fmt(ex), _fmt(ey))

    _write_csv(
        Path(path),
        ["iteration", "mean_abs_err_x_m", "mean_abs_err_y_m"],
        rows(),
    )


def run_experiment(
    out_dir: str | Path,
    scenario: NetworkScenario,
    config: BpConfig,
    trials: int,
    seed: int,
    mode: str = "both",
    trace_trials: int | None = None,
) -> dict[str, ErrorSamples]:
    """Run the Monte-Carlo study and write the full artifact set.

    Produces config.json (the resolved scenario), errors_{scheme}.csv,
    cdf_{scheme}.csv, mean_errors.csv, convergence.csv, and run_meta.json in
    ``out_dir``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    (out / "config.json").write_text(
        json.dumps(scenario_to_dict(scenario, config), indent=2) + "\n"
    )
    samples = run_montecarlo(scenario, config, trials, seed, mode=mode)
    for scheme, s in samples.items():
        write_errors_csv(out / f"errors_{scheme}.csv", s)
        write_cdf_csv(out / f"cdf_{scheme}.csv", s)
    write_mean_errors_csv(out / "mean_errors.csv", list(samples.values()))
    trace = convergence_trace(
        scenario, config, trace_trials if trace_trials is not None else trials, seed
    )
    write_convergence_csv(out / "convergence.csv", trace)
    meta = {
        "package_version": __version__,
        "seed": seed,
        "trials": trials,
        "mode": mode,
        "schemes": sorted(samples),
        "trace_rows": int(trace.shape[0]),
        "duration_s": round(time.perf_counter() - started, 3),
    }
    (out / "run_meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return samples

"""Experiment command line.

Subcommands cover the full study workflow: generate a scenario file, run a
single localization round-trip over either transport, run the Monte-Carlo
study, recompute CDFs and mean-error tables from stored samples, trace
convergence, and run one stand-alone UDP sensor process.

Every run writes its resolved scenario next to its outputs, so any artifact
can be regenerated from its own directory.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .bp import BpConfig
from .errors import GbplocError
from .experiments import (
    ErrorSamples,
    convergence_trace,
    run_experiment,
    write_cdf_csv,
    write_convergence_csv,
    write_mean_errors_csv,
)
from .simulate import (
    NetworkScenario,
    NoiseModel,
    ScenarioSpec,
    build_scenario,
    draw_noisy_constraints,
    edge_constraints,
    load_scenario,
    pairwise_baseline,
    save_scenario,
    scenario_to_dict,
)
from .transport import run_agents, run_udp_agent


def _parse_scatter(tokens: list[str]):
    if len(tokens) == 1:
        try:
            float(tokens[0])
        except ValueError:
            return tokens[0]  # family name
    return tuple(math.radians(float(t)) for t in tokens)


def _add_scenario_flags(p: argparse.ArgumentParser, include_config: bool = True) -> None:
    if include_config:
        p.add_argument("--config", type=Path, help="scenario JSON file")
    p.add_argument("--scatter", nargs="+", default=["orthogonal"],
                   help="reflector family name or orientation angles in degrees")
    p.add_argument("--sigma2", type=float, default=None,
                   help="range noise variance in m^2 (default 3)")
    p.add_argument("--aoa-deg", type=float, default=None,
                   help="bearing noise half-width in degrees (default 5)")
    p.add_argument("--seed", type=int, default=0)


def _resolve_scenario(args) -> tuple[NetworkScenario, BpConfig]:
    if args.config is not None:
        scenario, bp = load_scenario(args.config)
    else:
        spec = ScenarioSpec.paper_preset(scatter=_parse_scatter(args.scatter))
        scenario, bp = build_scenario(spec, seed=args.seed), BpConfig()
    sigma2 = args.sigma2
    aoa = args.aoa_deg
    if sigma2 is not None or aoa is not None:
        noise = NoiseModel(
            sigma2_range=sigma2 if sigma2 is not None else scenario.noise.sigma2_range,
            aoa_halfwidth=math.radians(aoa) if aoa is not None else scenario.noise.aoa_halfwidth,
        )
        scenario = NetworkScenario(
            true_positions=scenario.true_positions,
            anchor_index=scenario.anchor_index,
            edges=scenario.edges,
            noise=noise,
            seed=scenario.seed,
            edge_reflectors=scenario.edge_reflectors,
        )
        if noise.sigma2_range > 0:
            bp = BpConfig(alpha=bp.alpha, sigma2=noise.sigma2_range,
                          tol=bp.tol, max_iters=bp.max_iters)
    return scenario, bp


def _cmd_paper_preset(args) -> int:
    args.config = None
    scenario, bp = _resolve_scenario(args)
    if args.out is None:
        print(json.dumps(scenario_to_dict(scenario, bp), indent=2))
    else:
        save_scenario(args.out, scenario, bp)
        print(f"wrote {args.out}", file=sys.stderr)
    return 0


def _cmd_run(args) -> int:
    scenario, bp = _resolve_scenario(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_scenario(out / "config.json", scenario, bp)

    if scenario.noise.is_zero:
        constraints = edge_constraints(scenario.edges)
    else:
        rng = np.random.default_rng(args.seed)
        constraints = draw_noisy_constraints(scenario, rng)
    transport = "udp" if args.transport == "udp" else "in_process"
    history = run_agents(
        constraints,
        scenario.anchor_index,
        bp,
        transport=transport,
        udp_host=args.udp_host,
        udp_base_port=args.udp_base_port,
    )
    pairwise = pairwise_baseline(scenario, constraints)

    with open(out / "beliefs.csv", "w", newline="\n") as fh:
        fh.write("iteration,node,mu_x,mu_y,p_xx,p_xy,p_yy\n")
        for l, beliefs in enumerate(history):
            for node in sorted(beliefs):
                b = beliefs[node]
                fh.write(
                    f"{l},{node},{b.mean[0]:.6g},{b.mean[1]:.6g},"
                    f"{b.covariance[0, 0]:.6g},{b.covariance[0, 1]:.6g},"
                    f"{b.covariance[1, 1]:.6g}\n"
                )
    with open(out / "estimates.csv", "w", newline="\n") as fh:
        fh.write("scheme,node,x_m,y_m,true_x_m,true_y_m\n")
        final = history[-1]
        for node in sorted(final):
            tx, ty = scenario.true_positions[node]
            fh.write(
                f"cooperative,{node},{final[node].mean[0]:.6g},"
                f"{final[node].mean[1]:.6g},{tx:.6g},{ty:.6g}\n"
            )
        for node in sorted(pairwise):
            tx, ty = scenario.true_positions[node]
            fh.write(
                f"pairwise,{node},{pairwise[node][0]:.6g},"
                f"{pairwise[node][1]:.6g},{tx:.6g},{ty:.6g}\n"
            )
    meta = {
        "iterations": len(history) - 1,
        "transport": transport,
        "seed": args.seed,
    }
    (out / "run_meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    print(f"converged after {len(history) - 1} iterations; wrote {out}", file=sys.stderr)
    return 0


def _cmd_montecarlo(args) -> int:
    scenario, bp = _resolve_scenario(args)
    samples = run_experiment(
        args.out,
        scenario,
        bp,
        trials=args.trials,
        seed=args.seed,
        mode=args.mode,
        trace_trials=args.trace_trials,
    )
    for scheme in sorted(samples):
        s = samples[scheme]
        print(
            f"{scheme}: mean|x err| = "
            f"{float(s.abs_x.mean()):.4f} m, mean|y err| = "
            f"{float(s.abs_y.mean()):.4f} m over {s.trials} trials",
            file=sys.stderr,
        )
    print(f"wrote artifacts to {args.out}", file=sys.stderr)
    return 0


def _read_errors_csv(path: Path) -> list[ErrorSamples]:
    """Rebuild per-scheme samples from an errors_{scheme}.csv file."""
    rows = path.read_text().splitlines()
    header = rows[0].split(",")
    expected = ["scheme", "trial", "trial_seed", "node", "abs_err_x_m", "abs_err_y_m"]
    if header != expected:
        raise GbplocError(f"{path}: unexpected header {header}")
    data: dict[str, dict[int, dict[int, tuple[float, float, int]]]] = {}
    for line in rows[1:]:
        scheme, trial, trial_seed, node, ex, ey = line.split(",")
        data.setdefault(scheme, {}).setdefault(int(trial), {})[int(node)] = (
            float(ex), float(ey), int(trial_seed),
        )
    out = []
    for scheme, trials in sorted(data.items()):
        trial_ids = sorted(trials)
        node_ids = tuple(sorted(trials[trial_ids[0]]))
        abs_x = np.array([[trials[t][n][0] for n in node_ids] for t in trial_ids])
        abs_y = np.array([[trials[t][n][1] for n in node_ids] for t in trial_ids])
        seeds = np.array([trials[t][node_ids[0]][2] for t in trial_ids], dtype=np.uint64)
        out.append(ErrorSamples(scheme, node_ids, abs_x, abs_y, seeds))
    return out


def _cmd_cdf(args) -> int:
    all_samples = []
    for path in args.inputs:
        all_samples.extend(_read_errors_csv(Path(path)))
    out_dir = Path(args.out).is_dir()
    if len(all_samples) > 1 and not out_dir:
        print(
            f"error: {len(all_samples)} sample sets need a directory --out",
            file=sys.stderr,
        )
        return 1
    for samples in all_samples:
        out = Path(args.out) / f"cdf_{samples.scheme}.csv" if out_dir else Path(args.out)
        write_cdf_csv(out, samples)
        print(f"wrote {out}", file=sys.stderr)
    return 0


def _cmd_table(args) -> int:
    all_samples = []
    for path in args.inputs:
        all_samples.extend(_read_errors_csv(Path(path)))
    write_mean_errors_csv(args.out, all_samples)
    print(f"wrote {args.out}", file=sys.stderr)
    return 0


def _cmd_convergence(args) -> int:
    scenario, bp = _resolve_scenario(args)
    trace = convergence_trace(scenario, bp, trials=args.trials, seed=args.seed)
    write_convergence_csv(args.out, trace)
    print(f"wrote {args.out} ({trace.shape[0]} iterations)", file=sys.stderr)
    return 0


def _parse_peer(token: str) -> tuple[int, tuple[str, int]]:
    node, _, addr = token.partition("=")
    host, _, port = addr.rpartition(":")
    return int(node), (host, int(port))


def _cmd_agent(args) -> int:
    scenario, bp = load_scenario(args.config)
    if scenario.noise.is_zero:
        constraints = edge_constraints(scenario.edges)
    else:
        rng = np.random.default_rng(args.seed)
        constraints = draw_noisy_constraints(scenario, rng)
    local = {
        j: c for (i, j), c in constraints.items() if i == args.node
    }
    peers = dict(_parse_peer(t) for t in args.peer)
    host, _, port = args.bind.rpartition(":")
    history = run_udp_agent(
        node=args.node,
        constraints=local,
        is_anchor=args.node == scenario.anchor_index,
        bind=(host, int(port)),
        peers=peers,
        rounds=args.rounds,
        config=bp,
        retries=args.retries,
    )
    with open(args.out, "w", newline="\n") as fh:
        fh.write("iteration,mu_x,mu_y,p_xx,p_xy,p_yy\n")
        for l, b in enumerate(history):
            fh.write(
                f"{l},{b.mean[0]:.6g},{b.mean[1]:.6g},{b.covariance[0, 0]:.6g},"
                f"{b.covariance[0, 1]:.6g},{b.covariance[1, 1]:.6g}\n"
            )
    print(f"agent {args.node} finished {args.rounds} rounds; wrote {args.out}",
          file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gbploc",
        description="cooperative localization experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("paper-preset", help="write the five-node preset scenario file")
    _add_scenario_flags(p, include_config=False)
    p.add_argument("--out", type=Path, default=None, help="output JSON (default stdout)")
    p.set_defaults(func=_cmd_paper_preset)

    p = sub.add_parser("run", help="one localization run over a transport")
    _add_scenario_flags(p)
    p.add_argument("--transport", choices=["inproc", "udp"], default="inproc")
    p.add_argument("--udp-host", default="127.0.0.1")
    p.add_argument("--udp-base-port", type=int, default=0,
                   help="bind node i to port base+i (0 = ephemeral)")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("montecarlo", help="Monte-Carlo error study")
    _add_scenario_flags(p)
    p.add_argument("--trials", type=int, default=10000)
    p.add_argument("--mode", choices=["coop", "pairwise", "both"], default="both")
    p.add_argument("--trace-trials", type=int, default=None,
                   help="trials for the convergence trace (default: same as --trials)")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.set_defaults(func=_cmd_montecarlo)

    p = sub.add_parser("cdf", help="recompute CDF tables from stored error samples")
    p.add_argument("--in", dest="inputs", nargs="+", required=True,
                   help="errors_{scheme}.csv files")
    p.add_argument("--out", required=True,
                   help="output CSV file, or directory for per-scheme files")
    p.set_defaults(func=_cmd_cdf)

    p = sub.add_parser("table", help="mean absolute error table from stored samples")
    p.add_argument("--in", dest="inputs", nargs="+", required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=_cmd_table)

    p = sub.add_parser("convergence", help="per-iteration mean error trace")
    _add_scenario_flags(p)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--out", type=Path, required=True, help="output CSV file")
    p.set_defaults(func=_cmd_convergence)

    p = sub.add_parser("agent", help="run one UDP sensor agent (multi-process mode)")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--node", type=int, required=True)
    p.add_argument("--bind", required=True, help="HOST:PORT to bind")
    p.add_argument("--peer", action="append", default=[],
                   help="NODE=HOST:PORT, repeat per neighbor")
    p.add_argument("--rounds", type=int, required=True,
                   help="fixed round count, identical on every agent")
    p.add_argument("--seed", type=int, default=0,
                   help="noise draw seed, identical on every agent")
    p.add_argument("--retries", type=int, default=10)
    p.add_argument("--out", type=Path, required=True, help="belief history CSV")
    p.set_defaults(func=_cmd_agent)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except GbplocError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

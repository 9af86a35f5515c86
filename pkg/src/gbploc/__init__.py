"""Cooperative sensor localization over single-bounce TOA/AOA paths.

The package turns per-link path measurements (length plus the bearing at
each end) into linear position constraints, then localizes every node of a
network relative to one anchor by iterative Gaussian belief propagation,
with a physics-consistent scenario simulator, reference solvers, a
distributed UDP runtime, and a Monte-Carlo experiment harness.
"""

__version__ = "0.1.0"

from .errors import GbplocError
from .geometry import (
    EPS_LOS,
    EPS_SING,
    EdgeConstraint,
    PathClass,
    PathMeasurement,
    build_edge_constraint,
    classify_path,
    los_rows,
    normalize_angle,
    steering_vector,
)
from .bp import (
    BeliefMessage,
    BpConfig,
    GaussianBelief,
    anchor_belief,
    compute_message,
    final_means,
    fuse_messages,
    has_converged,
    init_belief,
    resolve_alpha,
    run_sync_rounds,
)
from .simulate import (
    NetworkScenario,
    NoiseModel,
    Reflector,
    ScenarioSpec,
    apply_noise,
    build_scenario,
    draw_noisy_constraints,
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
from .oracle import JointSolution, grid_map, joint_ls_solve
from .transport import (
    decode_belief_frame,
    encode_belief_frame,
    run_agents,
    run_udp_agent,
)
from .experiments import (
    ErrorSamples,
    convergence_trace,
    empirical_cdf,
    mean_abs_error_table,
    oracle_error_samples,
    run_experiment,
    run_montecarlo,
)

__all__ = [name for name in dir() if not name.startswith("_")]

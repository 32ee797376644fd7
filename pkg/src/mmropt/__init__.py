"""Multiscale relaxation toolkit for pairwise interaction objectives."""

from .baselines import (
    ChainProblem,
    brute_force,
    local_refine,
    shortest_path,
    simulated_annealing,
    sublevel_lp,
)
from .conic import ConicProgram, SolveReport, SolveStatus, solve
from .grids import GridHierarchy, NeighborhoodPolicy, build_regular_hierarchy
from .mmr import (
    MmrConfig,
    MmrInfeasibleError,
    MmrResult,
    cluster_points,
    run,
    select_separated,
    top_n_points,
)
from .model import MarginalSolution, PairwiseProblem
from .relax import (
    RelaxationSpec,
    build_general,
    build_symmetric,
    certify_exact,
    extract_solution,
    round_solution,
    sublevel_bound,
)
from .problems import (
    generate_lj_asymmetric,
    generate_lj_symmetric,
    generate_snl,
    lj_problem,
    position_error,
    snl_problem,
    snl_refine,
    snl_regions,
    success_rate,
)
from .sampling import Sample, sample_configuration, sample_many

__all__ = [
    "ChainProblem",
    "ConicProgram",
    "GridHierarchy",
    "MarginalSolution",
    "MmrConfig",
    "MmrInfeasibleError",
    "MmrResult",
    "NeighborhoodPolicy",
    "PairwiseProblem",
    "RelaxationSpec",
    "Sample",
    "SolveReport",
    "SolveStatus",
    "brute_force",
    "build_general",
    "build_regular_hierarchy",
    "build_symmetric",
    "certify_exact",
    "cluster_points",
    "extract_solution",
    "generate_lj_asymmetric",
    "generate_lj_symmetric",
    "generate_snl",
    "lj_problem",
    "local_refine",
    "position_error",
    "round_solution",
    "run",
    "sample_configuration",
    "sample_many",
    "select_separated",
    "shortest_path",
    "simulated_annealing",
    "snl_problem",
    "snl_refine",
    "snl_regions",
    "solve",
    "sublevel_bound",
    "sublevel_lp",
    "success_rate",
    "top_n_points",
]

__version__ = "0.1.0"

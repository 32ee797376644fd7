"""Default parameter sets for the shipped problem families.

Each preset is a plain nested dict in the same shape as a run-config file,
so user configs only need to override the keys they care about.
"""

from __future__ import annotations

import copy

PRESETS: dict[str, dict] = {
    "snl": {
        "problem": {
            "kind": "snl",
            "n": 10,
            "n_anchors": 3,
            "sigma": 0.1,
            "d_max": 6.0,
            "seed": 0,
        },
        "hierarchy": {
            "domain": [[0.0, 0.0], [10.0, 10.0]],
            "base": [4, 4],
            "levels": 5,
        },
        "mmr": {
            "u": 1.0,
            "eta": 5e-2,
            "min_support": 3,
            "refine_iters": 3,
            "neighborhood": "moore",
            "solver_tol": 1e-3,
            "solver_max_iter": 20000,
            "sample_depth": 2,
        },
        "sampling": {"lam": 0.01, "seeds": 5},
        "baselines": {"run": ["sa", "local-only"], "sa_budget": 20000},
        "output": {"directory": "out"},
    },
    "lj-sym": {
        "problem": {
            "kind": "lj-symmetric",
            "n": 7,
            "r": 1.0,
            "epsilon": 1.0,
        },
        "hierarchy": {
            "domain": [[0.0, 0.0], [10.0, 10.0]],
            "base": [16, 16],
            "levels": 5,
        },
        "mmr": {
            # loose cap and threshold at the coarsest level, then standard
            "u": [0.1, 1.0, 1.0, 1.0, 1.0],
            "eta": [0.002, 0.02, 0.02, 0.02, 0.02],
            "min_support": 3,
            "refine_iters": 3,
            "neighborhood": "moore",
            "solver_tol": 1e-6,
            "solver_max_iter": 20000,
            "sample_depth": 2,
            # singularity cap comparable to the well depth: a huge cap would
            # dominate the solver's cost normalization and hide the wells
            "cost_cap": 50.0,
        },
        "sampling": {"lam": 0.01, "seeds": 5},
        "baselines": {"run": [], "sa_budget": 20000},
        "output": {"directory": "out"},
    },
    "lj-asym": {
        "problem": {
            "kind": "lj-asymmetric",
            "n": 3,
            "epsilon": 1.0,
            "seed": 0,
        },
        "hierarchy": {
            "domain": [[0.0, 0.0], [10.0, 10.0]],
            "base": [8, 8],
            "levels": 5,
        },
        "mmr": {
            "u_min": 0.2,
            "alpha": 0.8,
            "beta": 0.01,
            "min_support": 3,
            "refine_iters": 3,
            "neighborhood": "neumann",
            "solver_tol": 1e-6,
            "solver_max_iter": 20000,
            "sample_depth": 2,
            "cost_cap": 50.0,
        },
        "sampling": {"lam": 0.01, "seeds": 5},
        "baselines": {"run": [], "sa_budget": 20000},
        "output": {"directory": "out"},
    },
    "chain1d": {
        "problem": {
            "kind": "chain1d",
            "n": 6,
            "m": 16,
            "seed": 0,
        },
        "hierarchy": {
            "domain": [[0.0], [10.0]],
            "base": [4],
            "levels": 3,
        },
        "mmr": {
            "u": 1.0,
            "eta": 5e-2,
            "min_support": 3,
            "refine_iters": 3,
            "neighborhood": "moore",
            "solver_tol": 1e-4,
            "solver_max_iter": 20000,
            "sample_depth": 2,
        },
        "sampling": {"lam": 0.01, "seeds": 5},
        "baselines": {"run": ["brute", "shortest-path"], "sa_budget": 20000},
        "output": {"directory": "out"},
    },
}

#: preset implied by each problem kind
KIND_TO_PRESET = {
    "snl": "snl",
    "lj-symmetric": "lj-sym",
    "lj-asymmetric": "lj-asym",
    "chain1d": "chain1d",
}


def preset(name: str) -> dict:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return copy.deepcopy(PRESETS[name])

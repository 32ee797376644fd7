"""Command-line experiment harness.

Subcommands:

- ``solve``: run the multiscale pipeline on a configured problem and emit
  result.json, trace.csv, and per-level support scatter files.
- ``sample``: solve, then draw near-optimal configurations from the
  perturbed finest-level relaxation into samples.csv.
- ``compare``: sweep seeds and tabulate position/energy errors for a subset
  of methods (mmr, mmr+refine, sa, local-only).
- ``oracle``: cross-check the exhaustive and dynamic-programming baselines
  on a chain instance.

Configs are TOML files layered over the presets in :mod:`mmropt.presets`;
unknown keys are rejected.  The ``MMR_THREADS`` environment variable caps
the worker count for seed sweeps.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import baselines, problems, sampling
from .grids import NeighborhoodPolicy, build_regular_hierarchy
from .mmr import MmrConfig, run
from .presets import KIND_TO_PRESET, PRESETS, preset


# -- configuration ---------------------------------------------------------


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = dict(base)
    for key, val in override.items():
        here = f"{path}.{key}" if path else key
        if key not in base:
            raise KeyError(f"unknown config key: {here}")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ValueError(f"config key {here} must be a table")
            out[key] = _merge(base[key], val, here)
        else:
            out[key] = val
    return out


def load_config(path: str | None, preset_name: str | None) -> dict:
    """Resolve preset defaults and optional TOML overrides into one dict."""
    user: dict = {}
    if path is not None:
        with open(path, "rb") as fh:
            user = tomllib.load(fh)
    if preset_name is None:
        kind = user.get("problem", {}).get("kind")
        if kind is None:
            raise ValueError("need --preset or a config with problem.kind")
        if kind not in KIND_TO_PRESET:
            raise ValueError(f"unknown problem kind {kind!r}")
        preset_name = KIND_TO_PRESET[kind]
    return _merge(preset(preset_name), user)


_NEIGHBORHOODS = {
    "moore": NeighborhoodPolicy.MOORE,
    "neumann": NeighborhoodPolicy.NEUMANN,
}


def mmr_config(cfg: dict, tol: float | None = None) -> MmrConfig:
    m = cfg["mmr"]
    kwargs = dict(
        levels=cfg["hierarchy"]["levels"],
        min_support=m["min_support"],
        refine_iters=m["refine_iters"],
        neighborhood=_NEIGHBORHOODS[m["neighborhood"]],
        solver_tol=tol if tol is not None else m["solver_tol"],
        solver_max_iter=m["solver_max_iter"],
        sample_depth=m["sample_depth"],
    )
    if "cost_cap" in m:
        kwargs["cost_cap"] = m["cost_cap"]
    if "u" in m:
        kwargs["u"] = m["u"]
    else:
        kwargs["u_min"] = m["u_min"]
        kwargs["alpha"] = m["alpha"]
    if "eta" in m:
        kwargs["eta"] = m["eta"]
    else:
        kwargs["beta"] = m["beta"]
    return MmrConfig(**kwargs)


def build_hierarchy(cfg: dict):
    hc = cfg["hierarchy"]
    lo, hi = hc["domain"]
    return build_regular_hierarchy(lo, hi, tuple(hc["base"]), hc["levels"])


class RunContext:
    """One problem instance plus everything the pipeline needs to run it."""

    def __init__(self, cfg: dict, seed: int | None = None):
        self.cfg = cfg
        self.h = build_hierarchy(cfg)
        p = cfg["problem"]
        self.kind = p["kind"]
        self.truth = None
        self.anchors = ()
        self.regions = None
        self.pinned_points = None
        self.chain = None
        if self.kind == "snl":
            inst = problems.generate_snl(
                p["n"], self.h.lo, self.h.hi, p["sigma"], p["d_max"],
                p["n_anchors"], seed if seed is not None else p["seed"],
            )
            self.instance = inst
            self.problem = problems.snl_problem(inst)
            self.regions = problems.snl_regions(inst, self.h)
            self.truth = inst.truth
            self.anchors = inst.anchors
        elif self.kind == "lj-symmetric":
            inst = problems.generate_lj_symmetric(p["n"], p["r"], p["epsilon"])
            self.instance = inst
            self.problem = problems.lj_problem(inst)
            self.pinned_points = problems.lj_regions("symmetric", self.h, p["n"])
        elif self.kind == "lj-asymmetric":
            inst = problems.generate_lj_asymmetric(
                p["n"], seed if seed is not None else p["seed"], p["epsilon"]
            )
            self.instance = inst
            self.problem = problems.lj_problem(inst)
            self.regions = problems.lj_regions("asymmetric", self.h, p["n"])
        elif self.kind == "chain1d":
            self.instance = None
            self.chain = _random_chain(
                p["n"], p["m"], seed if seed is not None else p["seed"],
                float(self.h.lo[0]), float(self.h.hi[0]),
            )
            self.problem = _chain_as_pairwise(self.chain)
        else:
            raise ValueError(f"unknown problem kind {self.kind!r}")

    def gradient(self):
        if self.kind in ("lj-symmetric", "lj-asymmetric"):
            return baselines.lj_gradient(self.instance)
        return None


def _random_chain(n_layers: int, m: int, seed: int, lo: float, hi: float):
    """Random layered chain with anchored endpoints and Unif[-1,1] edge costs."""
    rng = np.random.default_rng(seed)
    layers = []
    for k in range(n_layers):
        size = 1 if k in (0, n_layers - 1) else m
        layers.append(np.sort(rng.uniform(lo, hi, size)).reshape(-1, 1))
    costs = [
        rng.uniform(-1.0, 1.0, (len(layers[k]), len(layers[k + 1])))
        for k in range(n_layers - 1)
    ]
    return baselines.ChainProblem(layers=layers, edge_costs=costs)


def _chain_as_pairwise(chain) -> "problems.PairwiseProblem":
    from .model import PairwiseProblem

    lookup = [np.atleast_2d(l)[:, 0] for l in chain.layers]

    def cost(i, j, xi, xj):
        if j != i + 1:
            return np.zeros((len(xi), len(xj)))
        ai = np.searchsorted(lookup[i], xi[:, 0])
        aj = np.searchsorted(lookup[j], xj[:, 0])
        return chain.edge_costs[i][np.ix_(ai, aj)]

    return PairwiseProblem(
        n_particles=len(chain.layers), dim=1, pair_cost=cost,
        interacts=lambda i, j: abs(i - j) == 1,
    )


# -- output helpers --------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    for row in rows:
        if len(row) != len(header):
            raise ValueError("csv rows must match the header width")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _coord_header(dim: int, n: int) -> list[str]:
    axes = "xyzw"[:dim] if dim <= 4 else [f"c{t}" for t in range(dim)]
    return [f"{ax}{i}" for i in range(n) for ax in axes]


def write_trace(path: Path, result) -> None:
    rows = []
    for r in result.trace.records:
        rows.append([
            r.level,
            r.refine_passes,
            int(sum(r.support_sizes)),
            int(sum(r.solver_iterations)),
            max(r.solver_residuals),
            f"{r.wall_time:.6f}",
        ])
    write_csv(path, ["level", "refine_passes", "total_support",
                     "solver_iterations", "solver_residual",
                     "wall_time_seconds"], rows)


def write_supports(outdir: Path, ctx: RunContext, result) -> None:
    for r in result.trace.records:
        rows = []
        for i, parts in enumerate(r.parts_final):
            centers = ctx.h.part_centers(r.level)[np.asarray(parts, dtype=int)]
            for part, coord in zip(np.asarray(parts, dtype=int), centers):
                rows.append([i, int(part)] + [f"{c:.10g}" for c in coord])
        header = ["particle", "part"] + [f"coord{d}" for d in range(ctx.h.dim)]
        write_csv(outdir / f"supports_k{r.level}.csv", header, rows)


# -- pipeline pieces -------------------------------------------------------


def run_pipeline(ctx: RunContext, tol: float | None = None):
    cfg = mmr_config(ctx.cfg, tol)
    return run(ctx.problem, ctx.h, cfg, regions=ctx.regions,
               pinned_points=ctx.pinned_points)


def refine_configuration(ctx: RunContext, config: np.ndarray):
    fixed = np.asarray(ctx.anchors, dtype=int) if len(ctx.anchors) else None
    return baselines.local_refine(
        ctx.problem, config, ctx.h.lo, ctx.h.hi, grad=ctx.gradient(),
        fixed=fixed,
    )


def solve_result(ctx: RunContext, result, refined, refined_energy) -> dict:
    payload: dict = {
        "problem": ctx.kind,
        "configuration": result.configuration,
        "configuration_refined": refined,
        "energy_pre_refine": ctx.problem.energy(result.configuration),
        "energy_post_refine": refined_energy,
        "relaxation_objective": result.solution.objective,
        "fell_back": result.fell_back,
    }
    if ctx.truth is not None:
        spacing = float(np.max(ctx.h.spacing(ctx.h.levels)))
        payload["epsilon_p"] = problems.position_error(
            refined, ctx.truth, ctx.anchors
        )
        payload["epsilon_e"] = refined_energy - ctx.problem.energy(ctx.truth)
        payload["success_rate"] = problems.success_rate(
            result.configuration, ctx.truth, spacing
        )
        payload["exact_recovery"] = bool(payload["epsilon_p"] < 1e-5)
    return payload


# -- subcommands -----------------------------------------------------------


def cmd_solve(args) -> int:
    cfg = load_config(args.config, args.preset)
    outdir = Path(args.out or cfg["output"]["directory"])
    outdir.mkdir(parents=True, exist_ok=True)
    ctx = RunContext(cfg, seed=args.seed)
    t0 = time.perf_counter()
    result = run_pipeline(ctx, tol=args.tol)
    refined, refined_energy = refine_configuration(ctx, result.configuration)
    payload = solve_result(ctx, result, refined, refined_energy)
    payload["wall_time_seconds"] = time.perf_counter() - t0
    write_json(outdir / "result.json", payload)
    write_trace(outdir / "trace.csv", result)
    write_supports(outdir, ctx, result)
    print(f"wrote {outdir / 'result.json'}")
    return 0


def cmd_sample(args) -> int:
    cfg = load_config(args.config, args.preset)
    outdir = Path(args.out or cfg["output"]["directory"])
    outdir.mkdir(parents=True, exist_ok=True)
    ctx = RunContext(cfg, seed=args.seed)
    result = run_pipeline(ctx, tol=args.tol)
    lam = args.lam if args.lam is not None else cfg["sampling"]["lam"]
    n_seeds = args.seeds if args.seeds is not None else cfg["sampling"]["seeds"]
    base = args.seed if args.seed is not None else 0
    pinned_rho = None
    if ctx.pinned_points is not None:
        pinned_rho = _pin_positions(ctx, result.points[0])
    draws = sampling.sample_many(
        ctx.problem, result.points, lam, range(base, base + n_seeds),
        pinned_rho=pinned_rho,
        cost_cap=cfg["mmr"].get("cost_cap", 1e6),
    )
    N, dim = ctx.problem.n_particles, ctx.problem.dim
    rows = []
    for s in draws:
        refined, refined_energy = refine_configuration(ctx, s.configuration)
        rows.append(
            [s.seed, lam, int(s.integral), s.retries,
             f"{s.energy:.10g}", f"{refined_energy:.10g}"]
            + [f"{c:.10g}" for c in np.asarray(s.configuration).ravel()]
        )
    header = (["seed", "lambda", "integral", "retries", "energy",
               "refined_energy"] + _coord_header(dim, N))
    write_csv(outdir / "samples.csv", header, rows)
    print(f"wrote {outdir / 'samples.csv'} ({len(rows)} samples)")
    return 0


def _pin_positions(ctx: RunContext, support_points: np.ndarray) -> np.ndarray:
    pins = ctx.h.points[ctx.pinned_points]
    pos = []
    for p in pins:
        d = ((np.atleast_2d(support_points) - p) ** 2).sum(axis=1)
        t = int(np.argmin(d))
        if d[t] > 1e-18:
            raise RuntimeError("pinned point missing from the finest support")
        pos.append(t)
    return np.array(pos, dtype=int)


_METHODS = ("mmr", "mmr+refine", "sa", "local-only")


def _run_method(method: str, cfg: dict, seed: int, tol: float | None):
    ctx = RunContext(cfg, seed=seed)
    spacing = float(np.max(ctx.h.spacing(ctx.h.levels)))
    truth_energy = ctx.problem.energy(ctx.truth) if ctx.truth is not None else None
    if method in ("mmr", "mmr+refine"):
        result = run_pipeline(ctx, tol=tol)
        config = result.configuration
        energy = ctx.problem.energy(config)
        if method == "mmr+refine":
            config, energy = refine_configuration(ctx, config)
    elif method == "sa":
        # decouple the method's randomness from the instance seed
        config, energy = baselines.simulated_annealing(
            ctx.problem, ctx.h.lo, ctx.h.hi,
            seed=np.random.SeedSequence([seed, 1]).generate_state(1)[0],
            budget=cfg["baselines"]["sa_budget"],
        )
    elif method == "local-only":
        rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))
        start = ctx.h.lo + rng.random((ctx.problem.n_particles, ctx.problem.dim)) \
            * (ctx.h.hi - ctx.h.lo)
        if ctx.truth is not None and len(ctx.anchors):
            start[np.asarray(ctx.anchors)] = ctx.truth[np.asarray(ctx.anchors)]
        config, energy = refine_configuration(ctx, start)
    else:
        raise ValueError(f"unknown method {method!r}")
    row = {"method": method, "seed": seed, "energy": energy}
    if ctx.truth is not None:
        row["epsilon_p"] = problems.position_error(config, ctx.truth, ctx.anchors)
        row["epsilon_e"] = energy - truth_energy
        row["exact"] = row["epsilon_p"] < 1e-5
        row["success_rate"] = problems.success_rate(config, ctx.truth, spacing)
    return row


def cmd_compare(args) -> int:
    cfg = load_config(args.config, args.preset)
    outdir = Path(args.out or cfg["output"]["directory"])
    outdir.mkdir(parents=True, exist_ok=True)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    if not methods:
        raise SystemExit("need at least one method")
    for m in methods:
        if m not in _METHODS:
            raise SystemExit(f"unknown method {m!r}; choose from {_METHODS}")
    n_seeds = args.seeds if args.seeds is not None else cfg["sampling"]["seeds"]
    base = args.seed if args.seed is not None else 0
    seeds = list(range(base, base + n_seeds))
    workers = max(1, int(os.environ.get("MMR_THREADS", "4")))
    jobs = [(m, s) for m in methods for s in seeds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        rows = list(pool.map(
            lambda job: _run_method(job[0], cfg, job[1], args.tol), jobs
        ))
    summary = []
    for m in methods:
        sub = [r for r in rows if r["method"] == m]
        entry = [m, len(sub)]
        if "epsilon_p" in sub[0]:
            ep = np.array([r["epsilon_p"] for r in sub])
            ee = np.array([r["epsilon_e"] for r in sub])
            entry += [
                f"{ep.mean():.10g}", f"{ep.std():.10g}",
                f"{ee.mean():.10g}", f"{ee.std():.10g}",
                f"{np.mean([r['exact'] for r in sub]):.10g}",
            ]
        else:
            en = np.array([r["energy"] for r in sub])
            entry += [f"{en.mean():.10g}", f"{en.std():.10g}", "", "", ""]
        summary.append(entry)
    write_csv(
        outdir / "compare.csv",
        ["method", "seeds", "mean_epsilon_p", "std_epsilon_p",
         "mean_epsilon_e", "std_epsilon_e", "exact_recovery_rate"],
        summary,
    )
    per_seed = [
        [r["method"], r["seed"], f"{r['energy']:.10g}",
         f"{r.get('epsilon_p', float('nan')):.10g}",
         f"{r.get('epsilon_e', float('nan')):.10g}"]
        for r in rows
    ]
    write_csv(outdir / "compare_seeds.csv",
              ["method", "seed", "energy", "epsilon_p", "epsilon_e"], per_seed)
    print(f"wrote {outdir / 'compare.csv'}")
    return 0


def cmd_oracle(args) -> int:
    cfg = load_config(args.config, args.preset)
    outdir = Path(args.out or cfg["output"]["directory"])
    outdir.mkdir(parents=True, exist_ok=True)
    ctx = RunContext(cfg, seed=args.seed)
    if ctx.chain is None:
        raise SystemExit("oracle requires a chain1d problem")
    layers = [np.atleast_2d(l) for l in ctx.chain.layers]
    bf_config, bf_value = baselines.brute_force(ctx.problem, layers)
    sp_config, sp_value = baselines.shortest_path(ctx.chain)
    payload = {
        "problem": ctx.kind,
        "brute_force_value": bf_value,
        "shortest_path_value": sp_value,
        "equal": bool(abs(bf_value - sp_value) <= 1e-9),
        "brute_force_configuration": bf_config,
        "shortest_path_configuration": sp_config,
    }
    write_json(outdir / "result.json", payload)
    print(f"brute force {bf_value:.10g}  shortest path {sp_value:.10g}")
    return 0 if payload["equal"] else 1


# -- entry point -----------------------------------------------------------


def _add_common(sub):
    sub.add_argument("--config", help="TOML run configuration")
    sub.add_argument("--preset", choices=sorted(PRESETS),
                     help="named preset used as the config baseline")
    sub.add_argument("--seed", type=int, default=None, help="base seed")
    sub.add_argument("--out", default=None, help="output directory")
    sub.add_argument("--tol", type=float, default=None,
                     help="override the conic solver tolerance")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mmropt",
        description="multiscale relaxation toolkit for pairwise objectives",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p_solve = subs.add_parser("solve", help="run the multiscale pipeline")
    _add_common(p_solve)
    p_solve.set_defaults(func=cmd_solve)

    p_sample = subs.add_parser("sample", help="draw near-optimal configurations")
    _add_common(p_sample)
    p_sample.add_argument("--seeds", type=int, default=None,
                          help="number of sampling seeds")
    p_sample.add_argument("--lam", type=float, default=None,
                          help="perturbation scale")
    p_sample.set_defaults(func=cmd_sample)

    p_cmp = subs.add_parser("compare", help="method comparison over seeds")
    _add_common(p_cmp)
    p_cmp.add_argument("--seeds", type=int, default=None,
                       help="number of instance seeds")
    p_cmp.add_argument("--methods", default="mmr+refine,sa,local-only")
    p_cmp.set_defaults(func=cmd_compare)

    p_orc = subs.add_parser("oracle", help="cross-check reference baselines")
    _add_common(p_orc)
    p_orc.set_defaults(func=cmd_oracle)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (KeyError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

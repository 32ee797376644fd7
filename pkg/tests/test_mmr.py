import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmropt import conic
from mmropt.grids import NeighborhoodPolicy, build_regular_hierarchy
from mmropt.mmr import (
    MmrConfig,
    run,
    threshold_support,
    upper_bound_schedule,
)
from mmropt.model import PairwiseProblem
from mmropt.problems import (
    generate_lj_symmetric,
    generate_snl,
    lj_anchor_triangle,
    lj_problem,
    snl_problem,
    snl_regions,
)
from mmropt.relax import RelaxationSpec, build_general


# -- schedules -------------------------------------------------------------


@settings(deadline=None, max_examples=30)
@given(st.floats(0.01, 1.0), st.floats(0.0, 1.0), st.integers(1, 8))
def test_upper_bound_schedule_recurrence(u_min, alpha, levels):
    u = upper_bound_schedule(u_min, alpha, levels)
    assert u[0] == u_min
    for k in range(1, levels):
        assert np.isclose(u[k], u[k - 1] + alpha * (1 - u[k - 1]))
    assert np.all(np.diff(u) >= -1e-12)
    assert np.all(u <= 1.0 + 1e-12)


def test_schedule_validation():
    with pytest.raises(ValueError):
        upper_bound_schedule(0.0, 0.5, 3)
    with pytest.raises(ValueError):
        upper_bound_schedule(0.5, 1.5, 3)
    with pytest.raises(ValueError):
        MmrConfig(levels=0, eta=0.1)
    with pytest.raises(ValueError):
        MmrConfig(levels=2, eta=0.1, refine_iters=0)
    with pytest.raises(ValueError):
        MmrConfig(levels=2, eta=0.1, min_support=0)
    cfg = MmrConfig(levels=3, beta=0.02, u=[0.1, 1.0, 1.0])
    u = cfg.upper_bounds()
    assert np.allclose(cfg.thresholds(u), [0.002, 0.02, 0.02])
    with pytest.raises(ValueError):
        MmrConfig(levels=2).thresholds(np.ones(2))  # neither eta nor beta
    with pytest.raises(ValueError):
        MmrConfig(levels=2, eta=0.1, u=[1.0, 0.5]).upper_bounds()  # decreasing


# -- thresholding ----------------------------------------------------------


@settings(deadline=None, max_examples=50)
@given(st.integers(0, 10_000), st.integers(1, 30), st.integers(1, 6),
       st.floats(0.0, 0.5))
def test_threshold_floor_rule(seed, m, min_support, eta):
    rng = np.random.default_rng(seed)
    mu = rng.random(m)
    mu /= mu.sum()
    keep = threshold_support(mu, eta, min_support)
    assert len(keep) >= min(min_support, m)
    assert np.array_equal(keep, np.unique(keep))
    # every kept-out entry is below eta or outside the top-floor set
    dropped = np.setdiff1d(np.arange(m), keep)
    if len(dropped):
        assert np.all(mu[dropped] < max(eta, np.min(mu[keep]) + 1e-15))


def test_threshold_forced_positions_kept():
    mu = np.array([0.9, 0.05, 0.05, 0.0])
    keep = threshold_support(mu, 0.5, 1, forced=np.array([3]))
    assert 3 in keep and 0 in keep


# -- general pipeline ------------------------------------------------------


def snl_setup(seed=3, n=4, levels=3):
    h = build_regular_hierarchy((0, 0), (10, 10), (4, 4), levels)
    inst = generate_snl(n, (0, 0), (10, 10), sigma=0.0, d_max=30.0,
                        n_anchors=2, seed=seed)
    return h, inst, snl_problem(inst), snl_regions(inst, h)


def test_general_run_recovers_noiseless():
    h, inst, prob, regions = snl_setup()
    cfg = MmrConfig(levels=3, eta=5e-2, min_support=3, solver_tol=1e-3)
    res = run(prob, h, cfg, regions=regions)
    spacing = float(np.max(h.spacing(h.levels)))
    assert np.all(np.abs(res.configuration - inst.truth) <= spacing)
    assert not res.fell_back
    assert len(res.trace.records) == 3


def test_monotone_locality_and_pass_sizes():
    h, inst, prob, regions = snl_setup(seed=8, n=5)
    cfg = MmrConfig(levels=3, eta=5e-2, min_support=3, solver_tol=1e-3)
    res = run(prob, h, cfg, regions=regions)
    recs = res.trace.records
    for prev, cur in zip(recs, recs[1:]):
        for i in range(prob.n_particles):
            children = h.children_of(prev.level, prev.parts_final[i])
            assert set(cur.parts_initial[i]) <= set(children)
    for r in recs:
        sizes = [sum(s) for s in r.pass_support_sizes]
        # post-threshold totals never grow after the first refinement pass
        for a, b in zip(sizes[1:], sizes[2:]):
            assert b <= a + prob.n_particles * 0  # non-increasing
            assert b <= a


def test_propagate_matches_build_general_when_unconstrained():
    """u=1, eta=0: the level-1 program is the plain coarse relaxation."""
    h, inst, prob, regions = snl_setup(seed=5, n=3)
    cfg = MmrConfig(levels=1, eta=0.0, u=1.0, min_support=3,
                    refine_iters=1, solver_tol=1e-6)
    res = run(prob, h, cfg, regions=regions)
    # all non-pinned particles keep the full coarse grid
    for i in range(prob.n_particles):
        if i not in regions:
            assert len(res.parts[i]) == h.num_parts(1)
    # direct coarse program: same active sets, same costs (depth clamps at
    # the hierarchy so the subsampled averages coincide)
    from mmropt.mmr import _Active, _level_blocks

    active = [
        _Active(parts=np.arange(h.num_parts(1)),
                points=h.part_centers(1), pin=None)
        if i not in regions else
        _Active(parts=h.part_of_point(1, np.flatnonzero(regions[i])),
                points=h.points[np.flatnonzero(regions[i])], pin=h.points[
                    np.flatnonzero(regions[i])[0]])
        for i in range(prob.n_particles)
    ]
    blocks = _level_blocks(prob, h, 1, active, cfg)
    prog = build_general(RelaxationSpec(
        active_points=[a.points for a in active], cost_blocks=blocks,
        upper_bound=1.0,
    ))
    rep = conic.solve(prog, tol=1e-6)
    assert abs(rep.objective - res.solution.objective) <= 1e-3 * (
        1 + abs(rep.objective))


def test_fallback_on_finest_infeasibility(monkeypatch):
    """An infeasible finest level falls back to the previous rounding."""
    import mmropt.mmr as mmr_mod

    h, inst, prob, regions = snl_setup(seed=3, n=3, levels=2)
    real_solve = mmr_mod._solve_level
    fine_spacing = h.spacing(2)

    def failing(spec_points, blocks, u, tol, max_iter, **kw):
        # fail any solve whose candidate points live on the finest lattice
        for pts in spec_points:
            if len(pts) > 1:
                gaps = np.diff(np.unique(np.round(pts[:, 0], 9)))
                if len(gaps) and gaps.min() < 1.5 * fine_spacing[0]:
                    raise mmr_mod.MmrInfeasibleError("forced")
        return real_solve(spec_points, blocks, u, tol, max_iter, **kw)

    monkeypatch.setattr(mmr_mod, "_solve_level", failing)
    cfg = MmrConfig(levels=2, eta=5e-2, solver_tol=1e-3, refine_iters=3)
    res = run(prob, h, cfg, regions=regions)
    assert res.fell_back
    assert res.configuration.shape == (3, 2)
    # trace only covers the completed level
    assert [r.level for r in res.trace.records] == [1]


def test_coarse_infeasibility_raises(monkeypatch):
    import mmropt.mmr as mmr_mod

    h, inst, prob, regions = snl_setup(seed=3, n=3, levels=2)

    def failing(*a, **kw):
        raise mmr_mod.MmrInfeasibleError("forced")

    monkeypatch.setattr(mmr_mod, "_solve_level", failing)
    with pytest.raises(mmr_mod.MmrInfeasibleError):
        run(prob, h, MmrConfig(levels=2, eta=5e-2), regions=regions)


def test_run_validates_levels():
    h = build_regular_hierarchy((0, 0), (10, 10), (4, 4), 2)
    prob = snl_problem(generate_snl(3, (0, 0), (10, 10), 0.0, 30.0, 0, 0))
    with pytest.raises(ValueError):
        run(prob, h, MmrConfig(levels=3, eta=0.1))


def test_empty_region_rejected():
    h, inst, prob, regions = snl_setup()
    regions[3] = np.zeros(h.num_points, dtype=bool)
    with pytest.raises(ValueError):
        run(prob, h, MmrConfig(levels=2, eta=0.1), regions=regions)


# -- symmetric pipeline ----------------------------------------------------


def test_symmetric_run_structure():
    h = build_regular_hierarchy((0, 0), (10, 10), (8, 8), 2)
    inst = generate_lj_symmetric(4, r=1.0)
    prob = lj_problem(inst)
    pins = lj_anchor_triangle(h)
    cfg = MmrConfig(levels=2, u=[0.1, 1.0], eta=[0.002, 0.02],
                    solver_tol=1e-4)
    res = run(prob, h, cfg, pinned_points=pins)
    assert res.configuration.shape == (4, 2)
    # pinned coordinates appear in the configuration support
    support = {tuple(np.round(p, 9)) for p in res.points[0]}
    for p in h.points[pins]:
        assert tuple(np.round(p, 9)) in support
    # floor: shared support at least N
    assert all(s[0] >= 4 for r in res.trace.records
               for s in r.pass_support_sizes)
    assert res.solution.rho is not None
    assert len(res.solution.rho) == len(res.points[0])


# -- support clustering ----------------------------------------------------


def test_cluster_points_single_linkage():
    from mmropt.mmr import cluster_points

    pts = np.array([[0.0, 0.0], [0.1, 0.0], [0.2, 0.0],  # one chain
                    [5.0, 5.0],                            # isolated
                    [9.0, 0.0], [9.0, 0.12]])              # pair
    clusters = cluster_points(pts, 0.15)
    sizes = sorted(len(c) for c in clusters)
    assert sizes == [1, 2, 3]
    # chain is transitively connected even though its ends are 0.2 apart
    chain = next(c for c in clusters if len(c) == 3)
    assert set(chain) == {0, 1, 2}


def test_select_separated_picks_one_per_well():
    from mmropt.mmr import select_separated

    pts = np.array([[0.0, 0.0], [0.05, 0.0],   # well A (heavy)
                    [1.0, 0.0], [1.05, 0.0],   # well B
                    [2.0, 0.0]])               # well C (light)
    w = np.array([0.4, 0.35, 0.15, 0.05, 0.05])
    config = select_separated(w, pts, 2, 0.1)
    assert np.array_equal(config, [[0.0, 0.0], [1.0, 0.0]])
    # fewer clusters than particles: falls back to distinct top entries
    config3 = select_separated(w, pts, 3, 0.1)
    assert len(config3) == 3

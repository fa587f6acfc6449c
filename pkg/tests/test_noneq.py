import math

import numpy as np
import pytest
from scipy import stats

from sreqmc import oracle
from sreqmc.lattice import FiniteT, ModelParams, Projector, build_lattice, single_site
from sreqmc.noneq import (AllPathsAbandoned, PathResult, ProtocolPlan, Schedule, WorkEnsemble, derive_seed,
                          estimate_renyi, iter_paths, jarzynski_delta_f, replay_path, run_protocol, side_walk,
                          sre_tilde, topology_sweep)
from sreqmc.sse import engine
from sreqmc.tensors import ConnectionTensorKind as CK, log_g


def ring(n):
    return build_lattice([n], "periodic")


def ensemble(works, abandoned=()):
    res = [PathResult(w, False, 1, 0, 0, j) for j, w in enumerate(works)]
    res += [PathResult(math.inf, True, 0, 0, 0, len(res) + j) for j in range(len(abandoned))]
    return WorkEnsemble(res, Schedule())


# ---------------------------------------------------------------------------
# schedules


def test_schedule_grid():
    s = Schedule(0.0, 1.0, 0.25)
    assert s.n_steps == 4
    assert np.allclose(s.grid(), [0, 0.25, 0.5, 0.75, 1.0])


def test_schedule_split_covers_range():
    parts = Schedule(d_lambda=1e-3).split(4)
    assert [p.lambda_start for p in parts] == [0.0, 0.25, 0.5, 0.75]
    assert parts[-1].lambda_end == 1.0
    assert sum(p.n_steps for p in parts) == 1000


def test_endpoint_refinement_is_finer_at_the_ends():
    g = Schedule(d_lambda=0.01, endpoint_refinement=True).grid()
    steps = np.diff(g)
    assert g[0] == 0.0 and g[-1] == 1.0
    assert steps[0] == pytest.approx(0.001) and steps[-1] == pytest.approx(0.001)
    assert steps[len(steps) // 2] == pytest.approx(0.01)
    assert np.all(steps > 0)


@pytest.mark.parametrize("kwargs", [dict(d_lambda=0.3), dict(d_lambda=0.0), dict(lambda_start=0.5, lambda_end=0.5),
                                    dict(lambda_end=1.5), dict(sweeps_per_step=0)])
def test_schedule_rejects_bad_input(kwargs):
    with pytest.raises(ValueError):
        Schedule(**kwargs)


# ---------------------------------------------------------------------------
# topology sweep and side walks


def test_nb_distribution_two_sites():
    g, p = build_lattice([2], "open"), ModelParams(h=1.0)
    for mode in (FiniteT(1.0), Projector(3)):
        for lam in (0.3, 0.6):
            cfg = engine.init_config(g, p, mode, seed=21)
            nbs = engine.equilibrate(cfg, lam, 60000, record=True)[::10]
            counts = np.bincount(nbs, minlength=3)
            exact = oracle.exact_nb_distribution(g, p, mode, 2, lam)
            chi = np.sum((counts - exact * counts.sum()) ** 2 / (exact * counts.sum()))
            assert stats.chi2.sf(chi, 2) > 1e-3


def test_topology_sweep_at_high_lambda_connects_straight_sites():
    cfg = engine.init_config(ring(4), ModelParams(h=0.0), FiniteT(1.0), seed=0)
    # zero field: every replica is a classical ferromagnet, so each site pattern is all-equal and even
    topology_sweep(cfg, 0.9)
    assert cfg.n_connected == 4


def test_one_step_work_fully_connected():
    cfg = engine.init_config(ring(4), ModelParams(h=0.0), FiniteT(1.0), seed=0)
    topology_sweep(cfg, 0.9)
    res = side_walk(cfg, Schedule(0.9, 1.0, 0.1), walker_seed=1)
    assert res.final_nb == 4 and not res.abandoned
    assert res.work == pytest.approx(-4 * (math.log(1.0) - math.log(0.9)))


def test_single_site_jarzynski():
    g, p, mode = single_site(), ModelParams(h=1.0), FiniteT(1.0)
    plan = ProtocolPlan(1, 2000, Schedule(d_lambda=1e-2), snapshot_spacing=2)
    ens = run_protocol(g, p, mode, plan=plan, seed=5)
    df, err = jarzynski_delta_f(ens[0].works())
    exact = -math.log(oracle.exact_z_lambda(g, p, mode, 2, 1.0) / oracle.exact_z_lambda(g, p, mode, 2, 0.0))
    assert abs(df - exact) < 3 * err


def test_abandonment_shrinks_with_step():
    g, p, mode = build_lattice([3], "open"), ModelParams(h=1.0), FiniteT(1.0)
    fracs = []
    for dl in (0.1, 0.05, 0.025):
        plan = ProtocolPlan(1, 1000, Schedule(d_lambda=dl), snapshot_spacing=2)
        fracs.append(run_protocol(g, p, mode, plan=plan, seed=9)[0].abandoned_fraction)
    assert fracs[0] > 0
    for a, b in zip(fracs, fracs[1:]):
        assert b <= a + 3 * math.sqrt(a * (1 - a) / 1000) + 1e-12


def test_replay_path_matches_run():
    g, p, mode = ring(4), ModelParams(h=1.0), FiniteT(1.0)
    plan = ProtocolPlan(2, 5, Schedule(d_lambda=0.01))
    ens = run_protocol(g, p, mode, plan=plan, seed=3)
    rec = ens[1].results[3]
    assert replay_path(g, p, mode, CK.SRE, plan, 3, 1, 3) == rec
    assert rec.walker_seed == derive_seed(3, 1, 1, 3)


def test_workers_do_not_change_results():
    g, p, mode = ring(4), ModelParams(h=1.0), FiniteT(1.0)
    plan = ProtocolPlan(2, 6, Schedule(d_lambda=0.01))
    one = list(iter_paths(g, p, mode, CK.SRE, plan, 11, workers=1))
    four = list(iter_paths(g, p, mode, CK.SRE, plan, 11, workers=4))
    assert one == four


def test_derive_seed_streams_are_distinct():
    seeds = {derive_seed(1, k, r, j) for k in range(3) for r in (0, 1) for j in range(5)}
    assert len(seeds) == 30
    assert derive_seed(1, 0, 1, 0) == derive_seed(1, 0, 1, 0)


def test_interval_splitting_self_consistent():
    g, p, mode = ring(4), ModelParams(h=1.0), FiniteT(1.0)
    sched = Schedule(d_lambda=1e-3)
    one = estimate_renyi(run_protocol(g, p, mode, plan=ProtocolPlan(1, 400, sched), seed=1), 2)
    four = estimate_renyi(run_protocol(g, p, mode, plan=ProtocolPlan(4, 100, sched), seed=2), 2)
    assert abs(one.value - four.value) < 3 * math.hypot(one.stderr, four.stderr)
    assert len(four.diagnostics["delta_f"]) == 4


# ---------------------------------------------------------------------------
# estimates


def test_degenerate_ensemble():
    est = estimate_renyi([ensemble([1.7] * 5)], 2)
    assert est.value == pytest.approx(1.7)
    assert est.stderr == pytest.approx(0.0, abs=1e-12)
    assert estimate_renyi([ensemble([1.7] * 5)], 3).value == pytest.approx(0.85)


def test_abandoned_paths_excluded_and_reported():
    est = estimate_renyi([ensemble([1.0, 1.0, 1.0], abandoned=[1])], 2)
    assert est.value == pytest.approx(1.0)
    assert est.diagnostics["abandoned_fraction"] == [0.25]
    assert est.diagnostics["completed_paths"] == [3]


def test_all_abandoned_interval_is_an_error():
    with pytest.raises(AllPathsAbandoned, match="interval 1"):
        estimate_renyi([ensemble([1.0, 2.0]), ensemble([], abandoned=[1, 1])], 2)


def test_jarzynski_against_closed_form():
    w = np.array([0.0, math.log(2.0)])
    df, _ = jarzynski_delta_f(w)
    assert df == pytest.approx(-math.log(0.75))


def test_jarzynski_handles_large_work():
    df, err = jarzynski_delta_f([1000.0, 1000.0, 1000.0 + math.log(2)])
    assert df == pytest.approx(1000.0 - math.log((2 + 0.5) / 3))
    assert math.isfinite(err)


def test_sre_tilde():
    assert sre_tilde(0.7, 0.0) == 0.7
    assert sre_tilde(math.log(2), math.log(2)) == 0.0
    with pytest.raises(ValueError):
        sre_tilde(math.inf, 0.0)


def test_finite_t_magic_minus_entropy_matches_oracle():
    g, p, mode = ring(4), ModelParams(h=1.0), FiniteT(1.0)
    plan = ProtocolPlan(1, 300, Schedule(d_lambda=1e-3))
    m2 = estimate_renyi(run_protocol(g, p, mode, plan=plan, seed=4), 2)
    s2 = estimate_renyi(run_protocol(g, p, mode, plan=plan, seed=5, kind=CK.ERE), 2)
    exact = oracle.exact_quantity(g, p, mode, "sre")
    assert abs(s2.value - exact["s_n"]) < 3 * s2.stderr + 1e-3
    tilde = sre_tilde(m2.value, s2.value)
    assert abs(tilde - exact["sre_tilde"]) < 3 * math.hypot(m2.stderr, s2.stderr) + 1e-3


def test_pre_matches_oracle():
    g, p, mode = ring(4), ModelParams(h=1.0), FiniteT(1.0)
    est = estimate_renyi(run_protocol(g, p, mode, plan=ProtocolPlan(1, 300, Schedule(d_lambda=1e-3)), seed=6,
                                      kind=CK.PRE), 2)
    exact = oracle.exact_quantity(g, p, mode, "pre")["estimate"]
    assert abs(est.value - exact) < 3 * est.stderr + 1e-3


def test_zero_field_projector_has_no_magic():
    g, p, mode = ring(4), ModelParams(h=0.0), Projector(5)
    ens = run_protocol(g, p, mode, plan=ProtocolPlan(1, 400, Schedule(d_lambda=1e-2)), seed=1)
    est = estimate_renyi(ens, 2)
    assert oracle.exact_quantity(g, p, mode, "sre")["estimate"] == pytest.approx(0.0, abs=1e-12)
    # N_B still fluctuates, so single works differ; only the exponential average is pinned
    assert abs(est.value) < 3 * est.stderr


def test_dissipation_direction():
    g, p, mode = ring(4), ModelParams(h=1.0), FiniteT(1.0)
    ens = run_protocol(g, p, mode, plan=ProtocolPlan(1, 200, Schedule(d_lambda=1e-2)), seed=8)[0]
    df, err = jarzynski_delta_f(ens.works())
    assert ens.works().mean() >= df - 3 * err


def test_log_g_endpoint_sentinel_means_abandonment():
    assert log_g(1.0, 3, 4) is not None
    res = PathResult(math.inf, True, 3, 0)
    assert res.abandoned and math.isinf(res.work)

import numpy as np
import pytest

from eulermix.grid import GridMeasure, interval_grid, l1_distance, lebesgue
from eulermix.instances import (Instance, diagonal_leb, mirrored_halves, random_coupling,
                                random_instance, swap)
from eulermix.solver import (SolverConfig, brute_force_small, continuation_study,
                             flow_interchange_certificate, geodesic_plan, solve_dp)
from eulermix.traffic_plan import (BoundaryCoupling, ObjectiveParams, TrafficPlan,
                                   averaged_entropy, objective_dp)


def test_config_validation_and_round_trip():
    with pytest.raises(ValueError):
        SolverConfig(schedule=[])
    with pytest.raises(ValueError):
        SolverConfig(tol_objective=0)
    with pytest.raises(ValueError):
        SolverConfig(method="newton")
    with pytest.raises(ValueError):
        SolverConfig.from_dict({"step": 1})
    cfg = SolverConfig(schedule=[ObjectiveParams(N=2, q=4)], seed=3, s_probe=(1e-3,))
    again = SolverConfig.from_dict(cfg.to_dict())
    assert again == cfg
    assert cfg.threshold(0.01) == cfg.tol_objective and cfg.threshold(100) == 100 * cfg.tol_objective


def test_rejects_compressible_boundary():
    g = interval_grid(4)
    bad = diagonal_leb(4)
    bad = type(bad)(g, BoundaryCoupling(((GridMeasure.dirac(g, 0), lebesgue(g), 1.0),)), bad.params)
    with pytest.raises(ValueError):
        solve_dp(bad)


@pytest.mark.parametrize("N", [2, 4])
def test_diagonal_lebesgue_is_solved_by_constant_plan(N):
    report = solve_dp(diagonal_leb(8, N))
    assert report.objective <= 1e-8
    assert report.certificate.passed and report.converged
    assert np.allclose(report.final_plan.stack(), lebesgue(interval_grid(8)).masses, atol=1e-6)


@pytest.mark.parametrize("q,lam", [(2, 0.1), (8, 1.0)])
def test_swap_matches_brute_force(q, lam):
    inst = swap(2, 2, q=q, lam=lam)
    oracle, _ = brute_force_small(inst)
    report = solve_dp(inst)
    assert abs(report.objective - oracle) <= 1e-4
    assert min(report.convexity_residuals, default=0) >= -1e-6
    assert report.certificate.passed


def test_mirror_method_on_three_cell_swap():
    inst = swap(3, 2, q=2, lam=0.1)
    oracle, _ = brute_force_small(inst)
    report = solve_dp(inst, SolverConfig(method="mirror"))
    assert abs(report.objective - oracle) <= 1e-4
    joint = solve_dp(inst)
    assert abs(joint.objective - oracle) <= 1e-4


def test_mirrored_halves_beats_explicit_competitor():
    report = solve_dp(mirrored_halves(32, 2))
    assert report.objective <= 1 / 6 + 1e-3


def test_brute_force_examples():
    value, plan = brute_force_small(diagonal_leb(2, 2))
    assert value == pytest.approx(0, abs=1e-12)
    assert np.allclose(plan.atoms[0].masses[1], [0.5, 0.5])
    _, plan = brute_force_small(swap(2, 2, lam=0.0))
    assert np.allclose(plan.atoms[0].masses[1], [0.5, 0.5])
    assert np.allclose(plan.atoms[1].masses[1], [0.5, 0.5])
    with pytest.raises(ValueError):
        brute_force_small(mirrored_halves(4, 2))


def test_brute_force_moves_toward_lebesgue_as_lambda_grows():
    grid = interval_grid(3)
    boundary = random_coupling(grid, 2, np.random.default_rng(7), width=0.3, floor=0.0)
    entropies, gaps = [], []
    for lam in (0.0, 0.1, 1.0, 10.0):
        inst = Instance(grid, boundary, ObjectiveParams(N=2, q=2, lam=lam))
        _, plan = brute_force_small(inst)
        entropies.append(averaged_entropy(plan, 1))
        gaps.append(sum(w * l1_distance(a.state(1), lebesgue(grid))
                        for a, w in zip(plan.atoms, plan.weights)))
    assert all(b <= a + 1e-12 for a, b in zip(entropies, entropies[1:]))
    assert gaps[-1] < gaps[0]


def test_brute_force_agrees_with_objective_dp():
    inst = swap(3, 2, q=4, lam=0.1)
    value, plan = brute_force_small(inst)
    assert objective_dp(plan, inst.params)[0] == pytest.approx(value, abs=1e-12)


def test_certificate_on_constant_lebesgue_plan():
    inst = diagonal_leb(8, 3)
    plan = geodesic_plan(inst, 3)
    cert = flow_interchange_certificate(plan, inst.params)
    assert all(d == 0 for row in cert.deltas for d in row)
    assert cert.passed


def test_certificate_at_zero_time_is_exactly_zero():
    inst = random_instance(12, 3, seed=4)
    plan = geodesic_plan(inst, 3)
    cert = flow_interchange_certificate(plan, inst.params, s_probe=(0.0,))
    assert cert.deltas == [[0.0], [0.0]]


def test_certificate_flags_an_entropy_spike():
    inst = mirrored_halves(16, 2)
    plan = solve_dp(inst).final_plan
    stack = plan.stack()
    spike = np.zeros(16)
    spike[[3, 12]] = 0.5
    stack[:, 1] = spike
    cert = flow_interchange_certificate(plan.with_masses(stack), inst.params)
    assert not cert.heat_ok
    k, s, delta = cert.improving_directions()[0]
    assert k == 1 and delta < 0


def test_report_is_deterministic_and_thread_independent():
    inst = random_instance(16, 4, seed=2)
    a = solve_dp(inst).to_dict()
    b = solve_dp(inst).to_dict()
    c = solve_dp(inst, SolverConfig(threads=3)).to_dict()
    assert a == b == c


def test_objective_trace_monotone_and_endpoints_fixed():
    inst = random_instance(12, 3, seed=5)
    for method in ("joint", "mirror"):
        report = solve_dp(inst, SolverConfig(method=method, max_outer_iters=10, polish_rounds=2))
        totals = [e["total"] for e in report.objective_trace if e["stage"] == 0]
        assert all(b <= a + 1e-15 for a, b in zip(totals, totals[1:]))
        stack = report.final_plan.stack()
        for m, (r0, r1, _) in enumerate(inst.boundary.pairs):
            assert np.array_equal(stack[m, 0], r0.masses)
            assert np.array_equal(stack[m, -1], r1.masses)


def test_entropic_metric_runs_mirror_descent():
    inst = random_instance(12, 2, seed=1, use_exact_w2=False, epsilon=1e-2)
    report = solve_dp(inst, SolverConfig(max_outer_iters=10, polish_rounds=2))
    init = report.objective_trace[0]["total"]
    assert report.objective <= init
    assert report.to_dict()["metric"] == "entropic"
    with pytest.raises(ValueError):
        solve_dp(inst, SolverConfig(method="joint"))


def test_continuation_ladders_on_swap():
    inst = swap(2, 2)
    q_stages = continuation_study(inst, SolverConfig(
        schedule=[ObjectiveParams(N=2, q=q, lam=0.1) for q in (2, 4, 8)]))
    res = [s.incompressibility_residual for s in q_stages]
    assert all(b <= a + 1e-6 for a, b in zip(res, res[1:]))
    lam_stages = continuation_study(inst, SolverConfig(
        schedule=[ObjectiveParams(N=2, q=2, lam=lam) for lam in (1, 0.1, 0.01)]))
    actions = [s.parts["action"] for s in lam_stages]
    assert all(b <= a + 1e-6 for a, b in zip(actions, actions[1:]))


def test_continuation_across_N_on_diagonal_lebesgue():
    stages = continuation_study(diagonal_leb(8, 2), SolverConfig(
        schedule=[ObjectiveParams(N=2), ObjectiveParams(N=4)]))
    assert [s.objective <= 1e-12 for s in stages] == [True, True]
    assert stages[0].common_times == [0, 0.25, 0.5, 0.75, 1]
    with pytest.raises(ValueError):
        continuation_study(diagonal_leb(8, 2), SolverConfig())


def test_warm_start_across_N_keeps_boundary():
    inst = mirrored_halves(16, 2)
    report = solve_dp(inst, SolverConfig(schedule=[ObjectiveParams(N=2), ObjectiveParams(N=4)]))
    assert report.final_plan.N == 4
    assert len(report.stages) == 2 and report.certificate.passed
    assert isinstance(report.final_plan, TrafficPlan)

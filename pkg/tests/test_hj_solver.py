import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wkam.errors import ControlRadiusError, DomainError, FeasibilityError
from wkam.grid import PeriodicGrid, ScalarField
from wkam.hj_solver import (ActionPrimitive, SolverConfig, bellman_apply,
                            build_stationary_solution_1d, estimate_effective_h,
                            limit_solution_c1, peierls_barrier_1d, reconstruct_momentum,
                            richardson_zero, shock_scan_1d, solve_discounted,
                            stationary_residual_1d)
from wkam.model import generic_from, preset, segment_actions


def test_config_validation():
    with pytest.raises(DomainError):
        SolverConfig(dt=-1.0)
    with pytest.raises(DomainError):
        SolverConfig(scheme="rk9")
    with pytest.raises(DomainError):
        SolverConfig(xi_max=0.0)


def test_default_time_step():
    g = PeriodicGrid.uniform(1024)
    assert SolverConfig().step(g) == pytest.approx(max(math.sqrt(1 / 1024), 16 / 1024))


@pytest.mark.parametrize("name,N", [("zero", 256), ("kam1d-flat", 256), ("kam2d-flat", 16)])
def test_trivial_models_solve_to_zero(name, N, backend):
    m = preset(name)
    g = PeriodicGrid.uniform(N, m.n)
    c = m.offset if m.kind == "quadraticKam" else 0.0
    f, _, _ = solve_discounted(m, c, 0.1, 0.0, g, SolverConfig(tol=1e-8), backend=backend)
    assert np.max(np.abs(f.values)) <= 1e-7


def test_policy_and_value_iteration_agree(f2):
    g = PeriodicGrid.uniform(128)
    base = SolverConfig(dt=0.02, scheme="taylor2", tol=1e-11)
    a, _, _ = solve_discounted(f2, 0.3, 0.2, 0.0, g, base)
    b, _, _ = solve_discounted(f2, 0.3, 0.2, 0.0, g, SolverConfig(dt=0.02, scheme="taylor2",
                                                                    tol=1e-11, policy_iteration=False))
    assert np.max(np.abs(a.values - b.values)) < 1e-9


def test_solution_is_a_fixed_point(f1, accurate):
    g = PeriodicGrid.uniform(512)
    f, _, res = solve_discounted(f1, 0.5, 0.05, 0.0, g, accurate)
    Tf = bellman_apply(f, f1, 0.5, 0.05, 0.0, accurate)
    beta = math.exp(-0.05 * accurate.dt)
    assert np.max(np.abs(Tf.values - f.values)) <= accurate.tol * (1 - beta) * 1.0001


def test_small_control_box_is_reported(f1):
    g = PeriodicGrid.uniform(256)
    with pytest.raises(ControlRadiusError):
        solve_discounted(f1, 0.0, 0.05, 0.0, g, SolverConfig(dt=0.01, xi_max=1.0))


def test_eps_must_be_positive(f1):
    with pytest.raises(DomainError):
        solve_discounted(f1, 0.0, 0.0, 0.0, PeriodicGrid.uniform(64), SolverConfig())


def test_dimension_mismatch(f1):
    with pytest.raises(DomainError):
        solve_discounted(f1, 0.0, 0.1, 0.0, PeriodicGrid.uniform(32, 2), SolverConfig())


def test_generic_model_tracks_closed_form(f1):
    g = PeriodicGrid.uniform(32)
    cfg = SolverConfig(dt=0.05, xi_max=4.0, M=21, scheme="euler", tol=1e-7)
    a, _, _ = solve_discounted(f1, 0.0, 0.5, 0.0, g, cfg)
    b, _, _ = solve_discounted(generic_from(f1), 0.0, 0.5, 0.0, g, cfg)
    assert np.max(np.abs(a.values - b.values)) < 5e-3


def _random_pair(rng, g):
    w1 = rng.standard_normal(g.size) * 0.3
    w2 = w1 + rng.standard_normal(g.size) * 0.1
    return ScalarField(g, w1), ScalarField(g, w2)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_bellman_operator_properties(seed):
    m = preset("F2")
    g = PeriodicGrid.uniform(64)
    cfg = SolverConfig(dt=0.02, xi_max=4.0, scheme="taylor2")
    rng = np.random.default_rng(seed)
    a, b = _random_pair(rng, g)
    beta = math.exp(-0.1 * 0.02)
    Ta = bellman_apply(a, m, 0.2, 0.1, 0.0, cfg, check_box=False).values
    Tb = bellman_apply(b, m, 0.2, 0.1, 0.0, cfg, check_box=False).values
    assert np.max(np.abs(Ta - Tb)) <= beta * np.max(np.abs(a.values - b.values)) + 1e-12
    hi = ScalarField(g, np.maximum(a.values, b.values))
    Thi = bellman_apply(hi, m, 0.2, 0.1, 0.0, cfg, check_box=False).values
    assert np.all(Thi >= np.maximum(Ta, Tb) - 1e-12)
    k = rng.uniform(-2, 2)
    Tk = bellman_apply(ScalarField(g, a.values + k), m, 0.2, 0.1, 0.0, cfg, check_box=False).values
    assert np.max(np.abs(Tk - (Ta + beta * k))) <= 1e-12


def test_vanishing_discount_limit_f1(f1, f1_solved):
    field, _ = f1_solved
    lim = limit_solution_c1(f1, 0.0, field.grid)
    assert np.max(np.abs(field.values - lim.values)) < 5e-3


def test_single_shock_at_the_top(f1_solved):
    field, mf = f1_solved
    shocks = shock_scan_1d(mf)
    assert len(shocks) == 1
    loc, left, right = shocks[0]
    assert loc == pytest.approx(0.5, abs=1e-3)
    assert left > 3.0 and right < -3.0          # jump goes down, from S+ to S-


def test_momentum_close_to_separatrix(f1, f1_solved):
    field, mf = f1_solved
    x = field.grid.points()[:, 0]
    sep = np.pi * np.sin(np.pi * x) * np.where(x < 0.5, 1.0, -1.0)
    ok = ~mf.shock
    assert np.max(np.abs(mf.momentum[ok, 0] - sep[ok])) < 0.01


def test_stationary_residual_small_away_from_shocks(f1, f1_solved):
    field, mf = f1_solved
    r = stationary_residual_1d(field, f1, 0.0, 0.02, 0.0, mf)
    assert np.nanmax(r) < 1e-2
    assert np.isnan(r).sum() >= 3


def test_effective_hamiltonian_vanishes_inside(f1):
    g = PeriodicGrid.uniform(512)
    cfg = SolverConfig(dt=0.01, scheme="taylor2", tol=1e-10)
    assert abs(estimate_effective_h(f1, 1.0, g, cfg, (0.08, 0.04, 0.02))) < 5e-3


def test_effective_h_needs_decreasing_eps(f1):
    with pytest.raises(DomainError):
        estimate_effective_h(f1, 0.0, PeriodicGrid.uniform(64), SolverConfig(), (0.01, 0.02, 0.04))


def test_richardson_exact_for_polynomials():
    e = [0.4, 0.2, 0.1]
    assert richardson_zero(e, [3 + 2 * x - x * x for x in e]) == pytest.approx(3.0, abs=1e-12)


def test_kam_solution_has_right_shape():
    m = preset("kam1d")
    g = PeriodicGrid.uniform(512)
    f, _, _ = solve_discounted(m, m.offset, 0.01, 0.0, g, SolverConfig(dt=0.005, scheme="taylor2",
                                                                       tol=1e-10))
    u = m.exact_solution(g.points())
    d = f.values - (u - u.mean())
    assert 0.5 * (d.max() - d.min()) < 1e-3


# -- barriers and hand-built solutions ----------------------------------------

def test_action_primitive_total(f2):
    G = ActionPrimitive(f2)
    assert G.total == pytest.approx(sum(segment_actions(f2).actions), abs=1e-12)
    assert G(1.25) - G(0.25) == pytest.approx(G.total, abs=1e-12)


def test_barrier_properties(f2, rng):
    G = ActionPrimitive(f2)
    for c in (0.0, 0.3, -0.7):
        for z in G.zeros:
            assert peierls_barrier_1d(f2, c, z, z, G) == 0.0
        x, y, z = rng.random((3, 200))
        tri = (peierls_barrier_1d(f2, c, x, z, G) - peierls_barrier_1d(f2, c, x, y, G)
               - peierls_barrier_1d(f2, c, y, z, G))
        assert np.max(tri) <= 1e-12


def test_barrier_rejects_supercritical(f2):
    with pytest.raises(DomainError):
        peierls_barrier_1d(f2, 1.0, 0.1, 0.2)


def test_limit_selects_upper_well_for_positive_momentum(f2):
    g = PeriodicGrid.uniform(1024)
    v = limit_solution_c1(f2, 0.7, g)
    S2 = segment_actions(f2).actions[1]
    assert v([0.5])[0] == pytest.approx(0.0, abs=1e-12)
    assert v([0.0])[0] == pytest.approx(S2 - 0.35, abs=1e-6)


def test_built_solution_is_stationary(f2):
    g = PeriodicGrid.uniform(4096)
    u = build_stationary_solution_1d(f2, 0.0, [0.3], g, signs=[1, 1])
    r = stationary_residual_1d(u, f2, 0.0, 0.0, 0.0)
    x = g.points()[:, 0]
    away = np.abs(x - u.meta["jumps"][0]) > 5 / 4096
    assert np.max(r[away]) < 1e-2
    assert np.mean(np.diff(u.values, append=u.values[0])) == pytest.approx(0.0, abs=1e-9)


def test_two_jumps_reproduce_the_limit(f2):
    g = PeriodicGrid.uniform(1024)
    u = build_stationary_solution_1d(f2, 0.0, [0.25, 0.7], g, adjust=1)
    v = limit_solution_c1(f2, 0.0, g)
    assert np.max(np.abs(u.values - v.values)) < 1e-9


def test_jump_in_small_segment_alone_is_infeasible(f2):
    with pytest.raises(FeasibilityError):
        build_stationary_solution_1d(f2, 0.0, [0.75], PeriodicGrid.uniform(256), signs=[1, 1])


def test_jump_on_a_zero_is_rejected(f2):
    with pytest.raises(FeasibilityError):
        build_stationary_solution_1d(f2, 0.0, [0.5], PeriodicGrid.uniform(256))

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wkam.errors import ConvergenceError, DomainError, ModelError
from wkam.model import (TrigSeries, critical_c, eval_hamiltonian, eval_lagrangian, f1_series,
                        find_zeros, generic_from, hamiltonian_arrays, lagrangian_arrays,
                        make_generic, make_mechanical, make_quadratic_kam, preset,
                        segment_actions, separatrix_momentum, PRESETS)


def test_mechanical_hamiltonian_value(f1):
    # 1/2 - (pi^2/2) sin^2(pi/4)
    assert eval_hamiltonian(f1, 0.25, 1.0)[0] == pytest.approx(0.5 - np.pi ** 2 / 4, abs=1e-12)


def test_critical_momenta_f1(f1):
    lo, hi = critical_c(f1)
    assert lo == pytest.approx(-2.0, abs=1e-9)
    assert hi == pytest.approx(2.0, abs=1e-9)


def test_double_well_actions(f2):
    sa = segment_actions(f2)
    assert np.allclose(sa.zeros, [0.0, 0.5], atol=1e-12)
    assert sa.actions == pytest.approx([0.62693485, 0.27338146], abs=2e-8)
    assert sa.c_plus == pytest.approx(0.900316, abs=1e-6)
    assert sa.c_minus == pytest.approx(-0.900316, abs=1e-6)


def test_shifted_well():
    m = make_mechanical(f1_series(0.3))
    sa = segment_actions(m)
    assert sa.zeros == pytest.approx([0.3], abs=1e-12)
    assert sa.actions[0] == pytest.approx(2.0, abs=1e-9)


def test_zero_potential_has_zero_critical_momenta():
    assert critical_c(preset("zero")) == (0.0, 0.0)


def test_trig_series_derivatives_match_differences(rng):
    s = TrigSeries.build(2, [((1, 0), 0.3, -0.2), ((1, 2), 0.1, 0.4)], const=0.5)
    X = rng.random((5, 2))
    h = 1e-6
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        fd = (s.value(X + e) - s.value(X - e)) / (2 * h)
        assert np.allclose(s.grad(X)[:, j], fd, atol=1e-7)
        fdg = (s.grad(X + e) - s.grad(X - e)) / (2 * h)
        assert np.allclose(s.hess(X)[:, :, j], fdg, atol=1e-5)


def test_kam_graph_is_invariant():
    m = preset("kam2d")
    X = np.random.default_rng(0).random((50, 2))
    P = m.offset + m.u.grad(X)
    H = hamiltonian_arrays(m, X, P)[0]
    assert np.max(np.abs(H)) < 1e-13


def test_generic_lagrangian_matches_closed_form(f1, rng):
    g = generic_from(f1)
    x = rng.random((6, 1))
    xi = rng.uniform(-2, 2, (6, 1))
    L1 = lagrangian_arrays(f1, x, xi)
    L2 = lagrangian_arrays(g, x, xi)
    assert np.allclose(L1[0], L2[0], atol=1e-8)
    assert np.allclose(L1[2], L2[2], atol=1e-7)


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 1), st.floats(-3, 3), st.sampled_from(["F1", "F2", "kam1d"]))
def test_fenchel_equality(x, p, name):
    m = preset(name)
    H, _, Hp = eval_hamiltonian(m, x, p)
    L = eval_lagrangian(m, x, Hp)[0]
    assert L + H == pytest.approx(float(p * Hp), abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 1), st.floats(-3, 3), st.floats(-3, 3))
def test_fenchel_inequality(x, p, xi):
    m = preset("F2")
    H = eval_hamiltonian(m, x, p)[0]
    L = eval_lagrangian(m, x, xi)[0]
    assert L + H >= p * xi - 1e-12


def test_separatrix_has_zero_energy(f2, rng):
    x = rng.random(20)
    for branch in ("plus", "minus"):
        p = separatrix_momentum(f2, x, branch)
        H = hamiltonian_arrays(f2, x.reshape(-1, 1), np.reshape(p, (-1, 1)))[0]
        assert np.max(np.abs(H)) < 1e-12


def test_find_zeros_double_well(f2):
    assert np.allclose(find_zeros(f2.F), [0.0, 0.5], atol=1e-12)


def test_non_finite_point_rejected(f1):
    with pytest.raises(DomainError):
        eval_hamiltonian(f1, np.nan, 0.0)


def test_negative_potential_rejected():
    with pytest.raises(ModelError):
        make_mechanical(TrigSeries.build(1, [(1, 1.0, 0.0)]))


def test_nonconvex_generic_rejected():
    with pytest.raises(ModelError):
        make_generic(lambda x, p: -0.5 * p[..., 0] ** 2, n=1)


def test_flat_top_well_rejected():
    # F = sin^4(pi x) vanishes to fourth order, so the zero is not hyperbolic
    m = make_mechanical(TrigSeries.build(1, [(1, -0.5, 0.0), (2, 0.125, 0.0)], const=0.375))
    with pytest.raises(ModelError):
        segment_actions(m)


def test_rotation_vector_must_be_nonzero():
    with pytest.raises(ModelError):
        make_quadratic_kam([0.0, 0.0])


def test_legendre_failure_reports_convergence():
    # convex but not superlinear: |H_p| < 1, so velocity 2 has no momentum
    m = make_generic(lambda x, p: np.sqrt(1.0 + p[..., 0] ** 2), n=1)
    with pytest.raises(ConvergenceError):
        eval_lagrangian(m, 0.1, 2.0)


@pytest.mark.parametrize("name", PRESETS)
def test_presets_build(name):
    assert preset(name).name == name


def test_unknown_preset():
    with pytest.raises(ModelError):
        preset("nope")

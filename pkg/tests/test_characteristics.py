import numpy as np
import pytest

from wkam.characteristics import (alpha_limit_invariance, alpha_limit_set, backward_characteristic,
                                  backward_characteristics, cluster_points, gradient_identity_scan,
                                  graph_deviation, verify_value_identity, write_alpha_csv,
                                  _shift_off_shocks)
from wkam.errors import DomainError, InconclusiveError
from wkam.flows import Trajectory, integrate


def test_seeds_next_to_shocks_are_moved(f1_solved):
    _, mf = f1_solved
    X, shifted = _shift_off_shocks(mf, [0.5, 0.25])
    assert shifted[0] > 0 and shifted[1] == 0
    assert not mf.shock[int(round(X[0, 0] * 2048)) % 2048]


def test_short_free_orbit_stays_on_graph(f1, f1_solved):
    _, mf = f1_solved
    # the reconstructed momentum jitters by a few cells' worth, so the bound is loose
    tr = backward_characteristic(mf, f1, 0.0, 0.02, [0.3], 0.2, 1e-3)
    assert graph_deviation(tr, mf) < 1e-2
    assert tr.info["deviation"][0] < 1e-12


def test_resynced_orbit_reaches_the_well(f1, f1_solved):
    _, mf = f1_solved
    tr = backward_characteristic(mf, f1, 0.0, 0.02, [0.3], 10.0, 1e-3, resync_every=100,
                                 record_every=10)
    a = alpha_limit_set(tr)
    assert len(a.points) == 1
    assert a.x[0, 0] == pytest.approx(0.0, abs=1e-3) or a.x[0, 0] == pytest.approx(1.0, abs=1e-3)
    assert abs(a.p[0, 0]) < 1e-3
    assert alpha_limit_invariance(a, f1, 0.0, 0.02) < 1e-6


def test_resync_stride_must_divide(f1, f1_solved):
    _, mf = f1_solved
    with pytest.raises(DomainError):
        backward_characteristic(mf, f1, 0.0, 0.02, [0.3], 1.0, 1e-3, resync_every=15,
                                record_every=10)


def test_many_seeds_at_once(f1, f1_solved):
    _, mf = f1_solved
    trs = backward_characteristics(mf, f1, 0.0, 0.02, np.linspace(0.1, 0.9, 7), 0.5, 1e-3)
    assert len(trs) == 7
    assert all(len(t) == 501 for t in trs)


def test_value_identity_along_characteristic(f1, f1_solved):
    field, mf = f1_solved
    tr = backward_characteristic(mf, f1, 0.0, 0.02, [0.3], 0.2, 1e-4)
    assert verify_value_identity(field, f1, 0.0, 0.02, 0.0, tr, 0.1) < 1e-3
    assert verify_value_identity(field, f1, 0.0, 0.02, 0.0, tr, 0.0) == 0.0
    with pytest.raises(DomainError):
        verify_value_identity(field, f1, 0.0, 0.02, 0.0, tr, -1.0)


def test_gradient_identity(f1, f1_solved):
    _, mf = f1_solved
    tr = backward_characteristic(mf, f1, 0.0, 0.02, [0.7], 0.1, 1e-3)
    assert gradient_identity_scan(mf, f1, tr) < 5e-2


def test_wandering_orbit_is_inconclusive(f1):
    tr = integrate(f1, 0.0, 0.0, (0.0, 5.0), 2.0, 1e-3)
    with pytest.raises(InconclusiveError):
        alpha_limit_set(tr, radius=1e-4)


def test_window_validation():
    tr = Trajectory(np.zeros(3), np.zeros((3, 1)), np.zeros((3, 1)), 1e-3, "backward")
    with pytest.raises(DomainError):
        alpha_limit_set(tr, window_fraction=0.0)


def test_clustering_wraps_around_the_circle():
    Z = np.array([[0.9995, 0.0], [0.0004, 0.0], [0.5, 0.0]])
    centers, counts, masses = cluster_points(Z, 1e-3, 1)
    assert sorted(counts.tolist()) == [1, 2]
    big = centers[int(np.argmax(counts))]
    assert min(big[0], 1 - big[0]) < 1e-3


def test_alpha_csv(tmp_path, f1, f1_solved):
    _, mf = f1_solved
    tr = backward_characteristic(mf, f1, 0.0, 0.02, [0.3], 5.0, 1e-3, resync_every=100,
                                 record_every=10)
    p = tmp_path / "a.csv"
    write_alpha_csv(p, [(0.3, alpha_limit_set(tr))])
    lines = p.read_text().splitlines()
    assert lines[0] == "seed_x0,cluster_x,cluster_p,revisits,radius"
    assert len(lines) == 2

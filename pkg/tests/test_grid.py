import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wkam.errors import DomainError
from wkam.grid import (MomentumField, PeriodicGrid, ScalarField, interpolate, read_field_binary,
                       write_field_binary, write_field_csv)


def test_grid_validation():
    with pytest.raises(DomainError):
        PeriodicGrid((8,))
    with pytest.raises(DomainError):
        PeriodicGrid((32, 32, 32))


def test_points_are_row_major():
    g = PeriodicGrid.uniform(16, 2)
    pts = g.points()
    assert pts.shape == (256, 2)
    assert np.allclose(pts[1], [0.0, 1 / 16])
    assert np.allclose(pts[16], [1 / 16, 0.0])


def test_interpolation_reproduces_nodes(rng):
    g = PeriodicGrid.uniform(32, 2)
    v = rng.random(g.size)
    assert np.allclose(interpolate(g, v, g.points()), v, atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5))
def test_interpolation_is_periodic(x, y):
    g = PeriodicGrid.uniform(16, 2)
    v = np.cos(2 * np.pi * g.points()[:, 0]) + np.sin(2 * np.pi * g.points()[:, 1])
    a = interpolate(g, v, np.array([[x, y]]))
    b = interpolate(g, v, np.array([[x + 3, y - 2]]))
    assert a == pytest.approx(b, abs=1e-12)


def test_interpolation_exact_for_piecewise_linear():
    g = PeriodicGrid.uniform(16)
    v = np.abs(g.points()[:, 0] - 0.5)      # nodes at the kinks
    x = np.linspace(0, 1, 97)[:, None]
    assert np.allclose(interpolate(g, v, x), np.abs(x[:, 0] - 0.5), atol=1e-14)


def test_field_is_read_only():
    g = PeriodicGrid.uniform(16)
    f = ScalarField(g, np.zeros(16))
    with pytest.raises(ValueError):
        f.values[0] = 1.0


def test_field_rejects_bad_values():
    g = PeriodicGrid.uniform(16)
    with pytest.raises(DomainError):
        ScalarField(g, np.zeros(15))
    with pytest.raises(DomainError):
        ScalarField(g, np.full(16, np.nan))


def test_binary_round_trip(tmp_path, rng):
    g = PeriodicGrid.uniform(32, 2)
    f = ScalarField(g, rng.random(g.size), {"eps": 0.02, "c": np.array([0.1, -0.2]), "h": 0.5})
    path = tmp_path / "f.bin"
    write_field_binary(path, f)
    back = read_field_binary(path)
    assert back.grid.shape == (32, 32)
    assert np.array_equal(back.values, f.values)
    assert back.meta["eps"] == 0.02 and back.meta["h"] == 0.5
    assert np.array_equal(back.meta["c"], [0.1, -0.2])


def test_binary_bad_magic(tmp_path):
    p = tmp_path / "x.bin"
    p.write_bytes(b"NOPE!" + bytes(20))
    with pytest.raises(DomainError):
        read_field_binary(p)


def test_csv_columns(tmp_path):
    g = PeriodicGrid.uniform(16)
    f = ScalarField(g, np.arange(16.0))
    mf = MomentumField(g, np.zeros((16, 1)), np.zeros((16, 1)), np.zeros(16, bool))
    p = tmp_path / "f.csv"
    write_field_csv(p, f, mf)
    rows = list(csv.reader(open(p)))
    assert rows[0] == ["i0", "x0", "value", "p0", "shock"]
    assert len(rows) == 17
    assert float(rows[5][2]) == 4.0


def test_nearest_regular_node_skips_shocks():
    g = PeriodicGrid.uniform(16)
    shock = np.zeros(16, bool)
    shock[[7, 8]] = True
    mf = MomentumField(g, np.zeros((16, 1)), np.zeros((16, 1)), shock)
    assert mf.nearest_regular_node(8 / 16) in (6, 9)

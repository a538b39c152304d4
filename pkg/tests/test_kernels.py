import numpy as np
import pytest

from wkam import kernels
from wkam.flows import flow_params, integrate_batch
from wkam.grid import PeriodicGrid
from wkam.hj_solver import SolverConfig, _Sweeper
from wkam.model import preset

needs_both = pytest.mark.skipif(len(kernels.BACKENDS) < 2, reason="compiled backend not built")


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.get("fortran")


@needs_both
@pytest.mark.parametrize("name,N", [("F2", 256), ("kam1d", 128), ("kam2d", 32)])
@pytest.mark.parametrize("scheme", ["euler", "taylor2"])
def test_backends_agree_on_sweeps(name, N, scheme, rng):
    m = preset(name)
    grid = PeriodicGrid.uniform(N, m.n)
    cfg = SolverConfig(dt=0.02, xi_max=2.5, scheme=scheme)
    c = m.offset if m.kind == "quadraticKam" else 0.3
    w = rng.standard_normal(grid.size) * 0.1
    outs = [_Sweeper(m, c, 0.05, 0.0, grid, cfg, backend=b).sweep(w) for b in ("python", "cython")]
    for a, b in zip(*outs):
        assert np.allclose(a, b, rtol=0, atol=1e-13)


@needs_both
def test_backends_agree_on_trajectories(rng):
    m = preset("F2")
    X = rng.random((8, 1))
    P = rng.uniform(-1, 1, (8, 1))
    a = integrate_batch(m, 0.4, 0.05, X, P, 1e-3, 500, 50, backend="python")
    b = integrate_batch(m, 0.4, 0.05, X, P, 1e-3, 500, 50, backend="cython")
    assert a[2] == b[2] == 500
    assert np.allclose(a[0], b[0], atol=1e-12) and np.allclose(a[1], b[1], atol=1e-12)


def _brute_1d(w, Q, q, q0, beta, r, xi_max, K=20001):
    N = w.size
    xi = np.linspace(-xi_max, xi_max, K)
    best = np.empty(N)
    for j in range(N):
        foot = j - xi * r
        i0 = np.floor(foot).astype(int)
        th = foot - i0
        wi = (1 - th) * w[i0 % N] + th * w[(i0 + 1) % N]
        best[j] = np.min(0.5 * Q[j] * xi ** 2 + q[j] * xi + q0[j] + beta * wi)
    return best


def test_exact_cell_minimum_beats_dense_search(backend, rng):
    N = 64
    w = rng.standard_normal(N)
    Q = rng.uniform(0.5, 1.5, N) * 0.02
    q = rng.standard_normal(N) * 0.02
    q0 = rng.standard_normal(N) * 0.02
    k = kernels.get(backend)
    Tw = k.sweep_1d(w, Q, q, q0, 0.99, 0.02 * N, 3.0)[0]
    ref = _brute_1d(w, Q, q, q0, 0.99, 0.02 * N, 3.0)
    assert np.all(Tw <= ref + 1e-14)
    # the dense search is above by at most slope * control spacing
    slope = np.max(3.0 * Q + np.abs(q)) + 0.99 * 0.02 * N * np.max(np.abs(np.diff(w, append=w[0])))
    assert np.max(ref - Tw) <= slope * 6.0 / 20000


def test_two_d_minimum_beats_dense_search(backend, rng):
    m = preset("kam2d")
    grid = PeriodicGrid.uniform(16, 2)
    cfg = SolverConfig(dt=0.05, xi_max=2.0, scheme="euler")
    sw = _Sweeper(m, m.offset, 0.1, 0.0, grid, cfg, backend=backend)
    w = rng.standard_normal(grid.size) * 0.05
    Tw = sw.sweep(w)[0]
    s = np.linspace(-2, 2, 201)
    ctrl = np.stack(np.meshgrid(s, s, indexing="ij"), axis=-1).reshape(-1, 2)
    from wkam.grid import interpolate
    X = grid.points()
    for j in rng.choice(grid.size, 12, replace=False):
        Q, q, q0 = sw.Q[j], sw.q[j], sw.q0[j]
        cost = 0.5 * np.einsum("ki,ij,kj->k", ctrl, Q, ctrl) + ctrl @ q + q0
        vals = cost + sw.beta * interpolate(grid, w, X[j] - ctrl * sw.dt)
        assert Tw[j] <= vals.min() + 1e-13


def test_flow_params_reject_generic():
    from wkam.model import generic_from
    with pytest.raises(Exception):
        flow_params(generic_from(preset("F1")))

"""Semi-Lagrangian solver for the discounted Hamilton-Jacobi equation

    eps * v + H(x, c + v_x) = h      on the torus,

plus the one-dimensional mechanical toolkit: barriers, the vanishing-discount
limit and hand-built stationary solutions.

The discrete operator is

    (T w)(x) = min_xi  C(x, xi) + exp(-eps dt) * Interp(w)(x - xi dt)

with running cost C either the left-point rule dt (L - c.xi + h) (scheme
"euler") or a second-order midpoint expansion (scheme "taylor2").  For the
quadratic model families C is a quadratic in xi and the minimum over the
continuum control box is computed exactly, cell by cell.  Generic Tonelli
models fall back to a two-level grid search over controls.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy import optimize, sparse
from scipy.sparse.linalg import spsolve

from . import kernels
from .errors import (ControlRadiusError, ConvergenceError, DomainError,
                     FeasibilityError, ModelError)
from .grid import MomentumField, PeriodicGrid, ScalarField, interpolate
from .model import lagrangian_arrays, segment_actions, critical_c

SCHEMES = ("euler", "taylor2")
BOX_MARGIN = 1e-9


@dataclass(frozen=True)
class SolverConfig:
    dt: Optional[float] = None       # None: max(sqrt(dx), 4 dx xi_max)
    xi_max: float = 4.0
    M: int = 21                      # controls per axis (generic models only)
    tol: float = 1e-8
    max_iter: int = 200_000
    scheme: str = "euler"
    policy_iteration: bool = True

    def __post_init__(self):
        if self.dt is not None and not self.dt > 0:
            raise DomainError("dt must be positive")
        if not self.xi_max > 0:
            raise DomainError("xi_max must be positive")
        if self.scheme not in SCHEMES:
            raise DomainError(f"unknown scheme {self.scheme!r}")
        if self.M < 3:
            raise DomainError("need at least 3 controls per axis")

    def step(self, grid: PeriodicGrid):
        if self.dt is not None:
            return float(self.dt)
        return max(math.sqrt(grid.hmax), 4.0 * grid.hmax * self.xi_max)


def _vec_c(c, n):
    c = np.atleast_1d(np.asarray(c, dtype=float))
    if c.size == 1 and n > 1:
        c = np.repeat(c, n)
    if c.size != n or not np.all(np.isfinite(c)):
        raise DomainError("c has the wrong dimension or is not finite")
    return c


# ----------------------------------------------------------------------------
# sweeps
# ----------------------------------------------------------------------------

class _Sweeper:
    """Frozen per-problem data for repeated Bellman sweeps."""

    def __init__(self, model, c, eps, h, grid, cfg, backend=None):
        if eps < 0:
            raise DomainError("eps must be nonnegative")
        if model.n != grid.n:
            raise DomainError("model and grid dimensions differ")
        self.model, self.grid, self.cfg = model, grid, cfg
        self.c = _vec_c(c, grid.n)
        self.eps, self.h = float(eps), float(h)
        self.dt = cfg.step(grid)
        self.beta = math.exp(-self.eps * self.dt)
        self.kappa = math.exp(-0.5 * self.eps * self.dt)
        self.X = grid.points()
        self.k = kernels.get(backend)
        if model.is_quadratic:
            self._prepare_quadratic()
        else:
            self._prepare_generic()

    # quadratic families ------------------------------------------------------
    def _prepare_quadratic(self):
        dt, n = self.dt, self.grid.n
        A, dA, B, dB, d2B = self.model.quadratic_parts(self.X)
        eye = np.eye(n)[None]
        if self.cfg.scheme == "euler":
            Q = dt * np.broadcast_to(eye, (self.grid.size, n, n))
            q = dt * (A - self.c)
            q0 = dt * (B + self.h)
        else:
            w = dt * self.kappa
            S = 0.5 * (dA + np.transpose(dA, (0, 2, 1)))
            Q = w * (eye - dt * S + (dt * dt / 3.0) * d2B)
            q = w * (A - self.c - 0.5 * dt * dB)
            q0 = w * (B + self.h)
        if n == 1:
            if np.any(Q[:, 0, 0] <= 0):
                raise DomainError("time step too large: running cost is not convex")
        elif np.any(np.linalg.eigvalsh(Q)[:, 0] <= 0):
            raise DomainError("time step too large: running cost is not convex")
        self.Q = np.ascontiguousarray(Q)
        self.q = np.ascontiguousarray(q)
        self.q0 = np.ascontiguousarray(q0)

    # generic models -----------------------------------------------------------
    def _prepare_generic(self):
        n, M, Xi = self.grid.n, self.cfg.M, self.cfg.xi_max
        s = np.linspace(-Xi, Xi, M)
        self.spacing = s[1] - s[0]
        mesh = np.meshgrid(*([s] * n), indexing="ij")
        self.controls = np.stack([m.ravel() for m in mesh], axis=1)
        self.coarse_cost = self._cost(self.controls)

    def _cost(self, controls):
        """Running cost at every node for a shared (K, n) control list or per-node (size, K, n)."""
        size, n = self.X.shape
        per_node = controls.ndim == 3
        K = controls.shape[-2]
        XI = controls.reshape(-1, n) if per_node else np.tile(controls, (size, 1))
        Xr = np.repeat(self.X, K, axis=0)
        if self.cfg.scheme == "taylor2":
            L = lagrangian_arrays(self.model, Xr - 0.5 * self.dt * XI, XI)[0]
            w = self.dt * self.kappa
        else:
            L = lagrangian_arrays(self.model, Xr, XI)[0]
            w = self.dt
        return (w * (L - XI @ self.c + self.h)).reshape(size, K)

    def _values(self, w, controls, cost):
        size, n = self.X.shape
        K = cost.shape[1]
        XI = controls if controls.ndim == 3 else np.broadcast_to(controls, (size, K, n))
        foot = (self.X[:, None, :] - self.dt * XI).reshape(-1, n)
        return cost + self.beta * interpolate(self.grid, w, foot).reshape(size, K)

    def _sweep_generic(self, w):
        size, n = self.X.shape
        vals = self._values(w, self.controls, self.coarse_cost)
        xi0 = self.controls[np.argmin(vals, axis=1)]
        Xi = self.cfg.xi_max
        offs = np.linspace(-self.spacing, self.spacing, self.cfg.M)
        mesh = np.meshgrid(*([offs] * n), indexing="ij")
        offs = np.stack([m.ravel() for m in mesh], axis=1)
        fine = np.clip(xi0[:, None, :] + offs[None], -Xi, Xi)
        fvals = self._values(w, fine, self._cost(fine))
        j = np.argmin(fvals, axis=1)
        xi = fine[np.arange(size), j]
        cols, wts = _interp_stencil(self.grid, self.X - self.dt * xi)
        return fvals[np.arange(size), j], xi, cols, wts

    # common -------------------------------------------------------------------
    def sweep(self, w):
        """Return (Tw, xi*, stencil columns, stencil weights)."""
        w = np.ascontiguousarray(w, dtype=float)
        if not self.model.is_quadratic:
            return self._sweep_generic(w)
        g = self.grid
        Xi = self.cfg.xi_max
        if g.n == 1:
            N = g.shape[0]
            Tw, xi, i0, th = self.k.sweep_1d(w, self.Q[:, 0, 0].copy(), self.q[:, 0].copy(),
                                             self.q0, self.beta, self.dt * N, Xi)
            cols = np.stack([i0, (i0 + 1) % N], axis=1)
            wts = np.stack([1.0 - th, th], axis=1)
            return Tw, xi.reshape(-1, 1), cols, wts
        N1, N2 = g.shape
        Q = self.Q
        Tw, xi, ij, th = self.k.sweep_2d(
            w, Q[:, 0, 0].copy(), Q[:, 0, 1].copy(), Q[:, 1, 1].copy(),
            self.q[:, 0].copy(), self.q[:, 1].copy(), self.q0,
            self.beta, self.dt * N1, self.dt * N2, Xi, N1, N2)
        ia, ja = ij[:, 0], ij[:, 1]
        ib, jb = (ia + 1) % N1, (ja + 1) % N2
        cols = np.stack([ia * N2 + ja, ib * N2 + ja, ia * N2 + jb, ib * N2 + jb], axis=1)
        t1, t2 = th[:, 0], th[:, 1]
        wts = np.stack([(1 - t1) * (1 - t2), t1 * (1 - t2), (1 - t1) * t2, t1 * t2], axis=1)
        return Tw, xi, cols, wts

    def check_box(self, xi):
        lim = self.cfg.xi_max * (1.0 - BOX_MARGIN)
        hit = np.abs(xi) >= lim
        if np.any(hit):
            node = int(np.argmax(np.any(hit, axis=1)))
            raise ControlRadiusError(
                f"optimal control reaches the control box (|xi|={np.abs(xi[node]).max():.4g} "
                f"at node {node}); increase xi_max")


def _interp_stencil(grid, feet):
    feet = np.asarray(feet).reshape(-1, grid.n)
    per_axis = []
    for k, N in enumerate(grid.shape):
        z = np.mod(feet[:, k], 1.0) * N
        i0 = np.floor(z).astype(np.int64)
        t = z - i0
        i0 %= N
        per_axis.append((i0, (i0 + 1) % N, t))
    if grid.n == 1:
        a, b, t = per_axis[0]
        return np.stack([a, b], 1), np.stack([1 - t, t], 1)
    (a0, a1, t1), (b0, b1, t2) = per_axis
    N2 = grid.shape[1]
    cols = np.stack([a0 * N2 + b0, a1 * N2 + b0, a0 * N2 + b1, a1 * N2 + b1], 1)
    wts = np.stack([(1 - t1) * (1 - t2), t1 * (1 - t2), (1 - t1) * t2, t1 * t2], 1)
    return cols, wts


def _policy_matrix(cols, wts):
    size, k = cols.shape
    rows = np.repeat(np.arange(size), k)
    return sparse.csr_matrix((wts.ravel(), (rows, cols.ravel())), shape=(size, size))


# ----------------------------------------------------------------------------
# public operations
# ----------------------------------------------------------------------------

def bellman_apply(field: ScalarField, model, c, eps, h, cfg: SolverConfig,
                  check_box=True, backend=None) -> ScalarField:
    """One synchronous Bellman sweep; eps = 0 gives the undiscounted step."""
    sw = _Sweeper(model, c, eps, h, field.grid, cfg, backend)
    Tw, xi, _, _ = sw.sweep(field.values)
    if check_box:
        sw.check_box(xi)
    return field.with_values(Tw, eps=float(eps), h=float(h), c=sw.c)


def solve_discounted(model, c, eps, h, grid: PeriodicGrid, cfg: SolverConfig,
                     backend=None, check_box=True):
    """Fixed point of the Bellman operator.

    Returns (field, sweeps, residual) where residual = |T w - w|_inf at the
    last iterate.  The stopping rule is residual <= tol (1 - exp(-eps dt)).
    Policy iteration (exact linear solves for a frozen argmin) is used by
    default; plain value iteration is available for cross-checks.
    """
    if not eps > 0:
        raise DomainError("the discounted problem needs eps > 0")
    t0 = time.perf_counter()
    sw = _Sweeper(model, c, eps, h, grid, cfg, backend)
    stop = cfg.tol * (1.0 - sw.beta)
    w = np.zeros(grid.size)
    sweeps = 0
    res = math.inf
    eye = sparse.identity(grid.size, format="csr")
    best_res = math.inf
    stall = 0
    use_policy = cfg.policy_iteration
    while sweeps < cfg.max_iter:
        Tw, xi, cols, wts = sw.sweep(w)
        sweeps += 1
        res = float(np.max(np.abs(Tw - w)))
        if res <= stop:
            break
        if use_policy:
            P = _policy_matrix(cols, wts)
            g = Tw - sw.beta * (P @ w)
            w = spsolve((eye - sw.beta * P).tocsc(), g)
            if res < 0.5 * best_res:
                best_res, stall = res, 0
            else:
                stall += 1
                if stall > 20:         # cycling between tied policies
                    use_policy = False
        else:
            w = Tw
    else:
        raise ConvergenceError(f"no fixed point after {sweeps} sweeps", residual=res)
    if check_box:
        sw.check_box(xi)
    meta = {"model": model.name, "c": sw.c, "eps": float(eps), "h": float(h),
            "residual": res, "sweeps": sweeps, "dt": sw.dt, "scheme": cfg.scheme,
            "seconds": time.perf_counter() - t0}
    return ScalarField(grid, Tw, meta), sweeps, res


def richardson_zero(eps_seq, values):
    """Value at eps = 0 of the interpolating polynomial through (eps, value)."""
    e = np.asarray(eps_seq, dtype=float)
    y = np.asarray(values, dtype=float)
    coef = np.polyfit(e, y, len(e) - 1)
    return float(np.polyval(coef, 0.0))


def estimate_effective_h(model, c, grid, cfg, eps_seq: Sequence[float], backend=None):
    """Extrapolate -eps * mean(w_eps) to eps = 0 from solves with h = 0."""
    eps_seq = [float(e) for e in eps_seq]
    if len(eps_seq) < 3 or any(b >= a for a, b in zip(eps_seq, eps_seq[1:])):
        raise DomainError("eps_seq must be strictly decreasing with at least 3 entries")
    vals = []
    for e in eps_seq:
        f, _, _ = solve_discounted(model, c, e, 0.0, grid, cfg, backend=backend)
        vals.append(-e * float(np.mean(f.values)))
    return richardson_zero(eps_seq, vals)


def _one_sided(values, grid):
    V = values.reshape(grid.shape)
    out = []
    for k, dx in enumerate(grid.dx):
        fwd = (np.roll(V, -1, axis=k) - V) / dx
        bwd = (V - np.roll(V, 1, axis=k)) / dx
        out.append((fwd.ravel(), bwd.ravel()))
    return out


def reconstruct_momentum(field: ScalarField, model, c, eps, h, cfg: SolverConfig,
                         backend=None, check_box=True) -> MomentumField:
    """Momentum c + v_x from the Bellman argmin and one-sided shock flags."""
    grid = field.grid
    sw = _Sweeper(model, c, eps, h, grid, cfg, backend)
    _, xi, _, _ = sw.sweep(field.values)
    if check_box:
        sw.check_box(xi)
    X, dt = sw.X, sw.dt
    if cfg.scheme == "taylor2":
        _, Lx, Lxi = lagrangian_arrays(model, X - 0.5 * dt * xi, xi)
        mom = sw.c + sw.kappa * (Lxi + 0.5 * dt * Lx - sw.c)
    else:
        _, Lx, Lxi = lagrangian_arrays(model, X, xi)
        mom = Lxi + dt * Lx
    shock = np.zeros(grid.size, dtype=bool)
    diffs = _one_sided(field.values, grid)
    lip = max(float(np.max(np.abs(f))) for f, _ in diffs)
    thresh = 5.0 * max(grid.hmax, dt) * lip
    for f, b in diffs:
        shock |= np.abs(f - b) > thresh
    meta = dict(field.meta)
    meta.update(lip=lip, shock_threshold=thresh)
    return MomentumField(grid, mom, xi, shock, meta)


def shock_scan_1d(mfield: MomentumField):
    """Collapse runs of shock nodes into (location, left momentum, right momentum)."""
    grid = mfield.grid
    if grid.n != 1:
        raise DomainError("shock scan is one-dimensional")
    N = grid.shape[0]
    s = mfield.shock
    if not s.any():
        return []
    if s.all():
        raise DomainError("every node is flagged as a shock")
    start = int(np.argmin(s))            # a regular node
    order = (start + np.arange(N)) % N
    jumps = []
    k = 0
    while k < N:
        j = order[k]
        if not s[j]:
            k += 1
            continue
        first = k
        while k < N and s[order[k]]:
            k += 1
        left = order[first - 1]
        right = order[k % N]
        a, b = order[first], order[k - 1]
        loc = ((a + ((b - a) % N) / 2.0) / N) % 1.0
        jumps.append((float(loc), float(mfield.momentum[left, 0]),
                      float(mfield.momentum[right, 0])))
    return sorted(jumps)


def stationary_residual_1d(field: ScalarField, model, c, eps, h, mfield=None):
    """|eps v + H(x, c + v_x) - h| with centred differences, NaN at shock nodes."""
    from .model import hamiltonian_arrays
    grid = field.grid
    if grid.n != 1:
        raise DomainError("one-dimensional check")
    v = field.values
    dx = grid.dx[0]
    vx = (np.roll(v, -1) - np.roll(v, 1)) / (2 * dx)
    X = grid.points()
    P = (float(np.atleast_1d(c)[0]) + vx).reshape(-1, 1)
    H = hamiltonian_arrays(model, X, P)[0]
    r = np.abs(eps * v + H - h)
    if mfield is not None:
        bad = mfield.shock | np.roll(mfield.shock, 1) | np.roll(mfield.shock, -1)
        r = np.where(bad, np.nan, r)
    return r


# ----------------------------------------------------------------------------
# mechanical 1-D: actions, barriers, limit solution
# ----------------------------------------------------------------------------

_GL_X, _GL_W = np.polynomial.legendre.leggauss(10)


class ActionPrimitive:
    """G(x) = integral of sqrt(2F) from 0 to x, extended to the line by periodicity."""

    def __init__(self, model, cells=2048):
        if model.kind != "mechanical1d":
            raise ModelError("action primitive needs a mechanical model")
        self.F = model.F
        self.zeros = segment_actions(model).zeros
        edges = np.union1d(np.arange(cells + 1) / cells, self.zeros)
        self.edges = edges
        pieces = self._gl(edges[:-1], edges[1:])
        self.table = np.concatenate([[0.0], np.cumsum(pieces)])
        self.total = float(self.table[-1])

    def _f(self, x):
        return np.sqrt(2.0 * np.maximum(self.F.value(x.reshape(-1)), 0.0)).reshape(x.shape)

    def _gl(self, a, b):
        a = np.asarray(a, float)
        b = np.asarray(b, float)
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        pts = mid[..., None] + half[..., None] * _GL_X
        return half * (self._f(pts) @ _GL_W)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        m = np.floor(x)
        r = x - m
        k = np.clip(np.searchsorted(self.edges, r, side="right") - 1, 0, len(self.edges) - 2)
        return m * self.total + self.table[k] + self._gl(self.edges[k], r)


def _check_c(model, c):
    c_minus, c_plus = critical_c(model)
    if not abs(c) < c_plus:
        raise DomainError(f"|c| must be below the critical value {c_plus:.6g}")


def _arc_cost(G, c, to, frm):
    """Cheapest separatrix arc from ``frm`` to ``to`` without full loops."""
    to = np.asarray(to, float)
    frm = np.asarray(frm, float)
    d = np.mod(to - frm, 1.0)
    right = G(frm + d) - G(frm)
    cost_r = right - c * d
    cost_l = (G.total - right) + c * (1.0 - d)
    return np.where(d == 0.0, 0.0, np.minimum(cost_r, cost_l))


def peierls_barrier_1d(model, c, x, y, G: Optional[ActionPrimitive] = None):
    """Barrier of curves from y to x, routed through the zeros of F."""
    _check_c(model, c)
    G = G or ActionPrimitive(model)
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    best = None
    for z in G.zeros:
        val = _arc_cost(G, c, x, z) + _arc_cost(G, c, z, y)
        best = val if best is None else np.minimum(best, val)
    return best


def limit_solution_c1(model, c, grid: PeriodicGrid, G: Optional[ActionPrimitive] = None):
    """Vanishing-discount limit: minimum over zeros x_i of the barrier from x_i."""
    _check_c(model, c)
    if grid.n != 1:
        raise DomainError("one-dimensional construction")
    G = G or ActionPrimitive(model)
    xs = grid.points()[:, 0]
    vals = None
    for zi in G.zeros:
        b = peierls_barrier_1d(model, c, xs, zi, G)
        vals = b if vals is None else np.minimum(vals, b)
    meta = {"model": model.name, "c": np.array([c]), "eps": 0.0, "h": 0.0,
            "zeros": G.zeros.copy(), "kind": "limit"}
    return ScalarField(grid, vals, meta)


def build_stationary_solution_1d(model, c, jump_positions, grid: PeriodicGrid,
                                 signs=None, adjust=0, G: Optional[ActionPrimitive] = None):
    """A viscosity solution u of H(x, c + u_x) = 0 assembled from separatrix pieces.

    Segment i runs between consecutive zeros of F.  A segment holding a jump
    carries momentum +sqrt(2F) up to the jump and -sqrt(2F) after it (the
    only admissible direction).  Segments without a jump follow one branch,
    chosen by ``signs[i]`` (+1/-1, default the sign of c).  The jump with index
    ``adjust`` is moved so that the momentum has mean c, which makes u periodic.
    The result is normalised by u(first zero) = 0.
    """
    _check_c(model, c)
    G = G or ActionPrimitive(model)
    zeros = G.zeros
    nseg = len(zeros)
    starts = zeros
    ends = np.append(zeros[1:], zeros[0] + 1.0)
    jumps = {}
    for s in jump_positions:
        s = float(s)
        seg = None
        for i in range(nseg):
            lifted = starts[i] + np.mod(s - starts[i], 1.0)
            if starts[i] < lifted < ends[i]:
                seg = i
                s = lifted
                break
        if seg is None:
            raise FeasibilityError(f"jump at {s} sits on a zero of F")
        if seg in jumps:
            raise FeasibilityError(f"two jumps requested in segment {seg}")
        jumps[seg] = s
    if not jumps:
        raise FeasibilityError("at least one jump is required to meet the mean constraint")
    if signs is None:
        signs = [1 if c >= 0 else -1] * nseg
    keys = sorted(jumps)
    if not 0 <= adjust < len(keys):
        raise DomainError("adjust index out of range")
    adj = keys[adjust]

    def seg_mean(i, s=None):
        Ga, Gb = G(starts[i]), G(ends[i])
        if i in jumps:
            s = jumps[i] if s is None else s
            Gs = G(s)
            return (Gs - Ga) - (Gb - Gs)
        return signs[i] * (Gb - Ga)

    fixed = sum(seg_mean(i) for i in range(nseg) if i != adj)

    def gap(s):
        return fixed + seg_mean(adj, s) - c

    lo, hi = starts[adj], ends[adj]
    glo, ghi = gap(lo), gap(hi)
    if glo * ghi > 0:
        raise FeasibilityError(
            f"no jump position in segment {adj} meets the mean constraint "
            f"(reachable mean {fixed + seg_mean(adj, lo):.5f}..{fixed + seg_mean(adj, hi):.5f}, "
            f"need {c:.5f})")
    jumps[adj] = optimize.brentq(gap, lo, hi, xtol=1e-14)

    xs = grid.points()[:, 0]

    def u_at(x):
        """u(x) - u(zeros[0]) for x in [zeros[0], zeros[0] + 1)."""
        total = 0.0
        out = np.empty_like(x)
        for i in range(nseg):
            a, b = starts[i], ends[i]
            sel = (x >= a) & (x < b)
            xx = x[sel]
            Ga = G(a)
            if i in jumps:
                s = jumps[i]
                Gs = G(s)
                up = G(np.minimum(xx, s)) - Ga
                down = Gs - G(np.maximum(xx, s))
                val = np.where(xx <= s, up, (Gs - Ga) + down)
            else:
                val = signs[i] * (G(xx) - Ga)
            out[sel] = total + val - c * (xx - starts[0])
            total += seg_mean(i)
        return out

    lifted = starts[0] + np.mod(xs - starts[0], 1.0)
    vals = u_at(lifted)
    meta = {"model": model.name, "c": np.array([c]), "eps": 0.0, "h": 0.0,
            "jumps": sorted(float(np.mod(v, 1.0)) for v in jumps.values()),
            "signs": list(signs), "kind": "stationary"}
    return ScalarField(grid, vals, meta)

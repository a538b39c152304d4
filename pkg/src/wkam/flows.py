"""Hamiltonian flows with friction, stationary points and invariant manifolds.

The discounted Hamiltonian system is

    x' = H_p(x, p),    p' = -H_x(x, p) + eps (c - p),

which reduces to the conservative system at eps = 0.  Integration is
fixed-step RK4 so trajectories are reproducible bit for bit.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .errors import BlowUpError, ConvergenceError, DomainError, ModelError
from .hj_solver import _vec_c
from .model import hamiltonian_arrays, segment_actions

BOUND = 1e6


@dataclass
class Trajectory:
    s: np.ndarray          # (m,) sample times
    x: np.ndarray          # (m, n) lifted positions
    p: np.ndarray          # (m, n) momenta
    ds: float
    direction: str
    info: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.x.shape[1]

    @property
    def x_mod(self):
        return np.mod(self.x, 1.0)

    def __len__(self):
        return self.s.size

    def energy(self, model):
        return hamiltonian_arrays(model, self.x, self.p)[0]

    def velocity(self, model):
        return hamiltonian_arrays(model, self.x, self.p)[2]

    def truncate(self, k):
        """First k samples."""
        return Trajectory(self.s[:k], self.x[:k], self.p[:k], self.ds, self.direction, dict(self.info))


def _series_args(series, n):
    if series is None or series.k.shape[0] == 0:
        return np.zeros((0, n)), np.zeros(0), np.zeros(0)
    return (np.ascontiguousarray(series.k, float), np.ascontiguousarray(series.cos_coefs, float),
            np.ascontiguousarray(series.sin_coefs, float))


def flow_params(model):
    """(a0, U series, F series) with H = |p - a0 - grad U|^2 / 2 - F - const."""
    n = model.n
    if model.kind == "mechanical1d":
        return np.zeros(n), _series_args(None, n), _series_args(model.F, n)
    if model.kind == "quadraticKam":
        return (np.ascontiguousarray(model.offset - model.omega, float),
                _series_args(model.u, n), _series_args(None, n))
    raise ModelError("compiled flow needs a quadratic model")


def _rk4_generic(model, X, P, h, nsteps, stride, eps, c):
    def rhs(X, P):
        _, Hx, Hp = hamiltonian_arrays(model, X, P)
        return Hp, -Hx + eps * (c - P)

    nrec = nsteps // stride + 1
    xs = np.empty((nrec,) + X.shape)
    ps = np.empty((nrec,) + X.shape)
    xs[0], ps[0] = X, P
    rec = 1
    for step in range(1, nsteps + 1):
        k1 = rhs(X, P)
        k2 = rhs(X + 0.5 * h * k1[0], P + 0.5 * h * k1[1])
        k3 = rhs(X + 0.5 * h * k2[0], P + 0.5 * h * k2[1])
        k4 = rhs(X + h * k3[0], P + h * k3[1])
        X = X + (h / 6) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        P = P + (h / 6) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        if not (np.all(np.abs(X) < BOUND) and np.all(np.abs(P) < BOUND)):
            return xs[:rec], ps[:rec], step - 1
        if step % stride == 0:
            xs[rec], ps[rec] = X, P
            rec += 1
    return xs, ps, nsteps


def integrate_batch(model, c, eps, X0, P0, h, nsteps, stride=1, backend=None):
    """RK4 for a batch of starts with signed step h.

    Returns (xs, ps, done) with shapes (nsteps // stride + 1, m, n); ``done``
    is smaller than nsteps when the batch left the a-priori bounded region.
    """
    n = model.n
    X0 = np.ascontiguousarray(np.asarray(X0, float).reshape(-1, n))
    P0 = np.ascontiguousarray(np.asarray(P0, float).reshape(-1, n))
    c = _vec_c(c, n)
    if nsteps == 0:
        return X0[None].copy(), P0[None].copy(), 0
    if model.is_quadratic:
        a0, (Uk, Ua, Ub), (Fk, Fa, Fb) = flow_params(model)
        k = kernels.get(backend)
        return k.rk4_quadratic(X0, P0, float(h), int(nsteps), int(stride), float(eps), c,
                               a0, Uk, Ua, Ub, Fk, Fa, Fb, BOUND)
    return _rk4_generic(model, X0, P0, float(h), int(nsteps), int(stride), float(eps), c)


def integrate(model, c, eps, start, s_span, ds, record_every=1, backend=None) -> Trajectory:
    """Integrate from ``start = (x, p)`` over ``s_span`` ((s0, s1) or a length T).

    A span with s1 < s0 integrates backward in time.
    """
    if not 0 < ds <= 1e-2:
        raise DomainError("step must lie in (0, 1e-2]")
    if eps < 0:
        raise DomainError("eps must be nonnegative")
    s0, s1 = (0.0, float(s_span)) if np.isscalar(s_span) else map(float, s_span)
    span = s1 - s0
    if abs(span) >= 1e6:
        raise DomainError("time span too long")
    x0, p0 = start
    x0 = np.asarray(x0, float).reshape(1, model.n)
    p0 = np.asarray(p0, float).reshape(1, model.n)
    if not (np.all(np.isfinite(x0)) and np.all(np.isfinite(p0))):
        raise DomainError("non-finite start")
    nsteps = int(round(abs(span) / ds))
    h = span / nsteps if nsteps else 0.0
    xs, ps, done = integrate_batch(model, c, eps, x0, p0, h, nsteps, record_every, backend)
    s = s0 + h * record_every * np.arange(xs.shape[0])
    traj = Trajectory(s, xs[:, 0], ps[:, 0], abs(h), "backward" if span < 0 else "forward",
                      {"eps": float(eps), "c": _vec_c(c, model.n)})
    if done < nsteps:
        raise BlowUpError(f"trajectory left the bounded region after {done} steps",
                          deviation=np.hypot(traj.x[:, 0], traj.p[:, 0]))
    return traj


# ----------------------------------------------------------------------------
# stationary points
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class StationaryPoint:
    x: float
    eps: float
    c: float
    lam_plus: float
    lam_minus: float
    unstable: np.ndarray
    stable: np.ndarray
    kind: str
    seed: float

    @property
    def rate(self):
        """Expansion rate of the unstable direction."""
        return self.lam_plus


def _fx(F, x):
    return F.grad(np.array([x]))[0, 0]


def _fxx(F, x):
    return F.hess(np.array([x]))[0, 0, 0]


def stationary_from(model, x, c, eps, seed=None):
    F = model.F
    fxx = _fxx(F, x)
    disc = eps * eps + 4.0 * fxx
    if disc >= 0:
        r = math.sqrt(disc)
        lp, lm = 0.5 * (-eps + r), 0.5 * (-eps - r)
    else:
        lp = lm = -0.5 * eps
    vu = np.array([1.0, lp])
    vs = np.array([1.0, lm])
    kind = "hyperbolic" if fxx > 0 else "nonhyperbolic"
    return StationaryPoint(float(x), float(eps), float(c), lp, lm, vu / np.linalg.norm(vu),
                           vs / np.linalg.norm(vs), kind, float(x if seed is None else seed))


def find_stationary_points(model, c, eps, tol=1e-13):
    """Solve F_x(x) + c eps = 0 by Newton from each zero of F."""
    if model.kind != "mechanical1d":
        raise ModelError("stationary points are computed for mechanical models")
    c = float(np.atleast_1d(c)[0])
    sa = segment_actions(model)
    zeros = sa.zeros
    gaps = np.diff(np.append(zeros, zeros[0] + 1.0))
    F = model.F
    out = []
    for i, z in enumerate(zeros):
        width = 0.25 * min(gaps[i], gaps[i - 1])
        x = z
        for _ in range(60):
            r = _fx(F, x) + c * eps
            if abs(r) <= tol:
                break
            x -= r / _fxx(F, x)
            if abs(x - z) > width:
                raise ConvergenceError(f"Newton from zero {z:.6f} left its basin")
        else:
            r = _fx(F, x) + c * eps
            if abs(r) > 1e-11:
                raise ConvergenceError(f"Newton from zero {z:.6f} did not converge", residual=abs(r))
        out.append(stationary_from(model, x, c, eps, seed=z))
    return out


def trace_unstable_manifold(sp: StationaryPoint, model, c, eps, side="right", arc_budget=3.0,
                            ds=1e-3, offset=1e-6, others=None, capture=1e-4, backend=None,
                            chunk=500):
    """Follow one branch of the unstable manifold of ``sp``.

    Stops when the arc length in the (x, p) plane exceeds ``arc_budget`` or
    the orbit enters the ``capture`` ball of another stationary point (any
    integer translate counts, including translates of ``sp`` itself).
    """
    if sp.kind != "hyperbolic":
        raise DomainError("unstable manifold needs a hyperbolic point")
    sign = 1.0 if side == "right" else -1.0
    if side not in ("right", "left"):
        raise DomainError("side is 'right' or 'left'")
    start = np.array([sp.x, 0.0]) + sign * offset * sp.unstable
    if others is None:
        others = [q.x for q in find_stationary_points(model, c, eps)]
    centers = np.asarray(others, float)
    own = int(np.argmin(_torus_dist(centers, sp.x)))
    xs_all = [np.array([start[0]])]
    ps_all = [np.array([start[1]])]
    arc = 0.0
    X = start[:1].reshape(1, 1)
    P = start[1:].reshape(1, 1)
    reason = "budget"
    total_steps = 0
    while arc < arc_budget and total_steps < 10_000_000:
        xs, ps, done = integrate_batch(model, c, eps, X, P, ds, chunk, 1, backend)
        if done < chunk:
            raise BlowUpError("manifold trace blew up")
        xs, ps = xs[1:, 0, 0], ps[1:, 0, 0]
        seg = np.hypot(np.diff(np.append(X[0, 0], xs)), np.diff(np.append(P[0, 0], ps)))
        cum = arc + np.cumsum(seg)
        # distance to every translate of every stationary point except the seed itself
        rel = xs[:, None] - centers[None, :]
        shift = np.rint(rel)
        close = np.hypot(rel - shift, ps[:, None]) <= capture
        close[:, own] &= shift[:, own] != 0
        cap = close.any(axis=1)
        stop = np.flatnonzero(cap | (cum >= arc_budget))
        if stop.size:
            k = stop[0] + 1
            if cap[stop[0]]:
                reason = "captured"
            xs_all.append(xs[:k])
            ps_all.append(ps[:k])
            arc = cum[stop[0]]
            break
        xs_all.append(xs)
        ps_all.append(ps)
        arc = cum[-1]
        X, P = xs[-1:].reshape(1, 1), ps[-1:].reshape(1, 1)
        total_steps += chunk
    x = np.concatenate(xs_all).reshape(-1, 1)
    p = np.concatenate(ps_all).reshape(-1, 1)
    s = ds * np.arange(x.shape[0])
    return Trajectory(s, x, p, ds, "forward", {"arc": float(arc), "stop": reason, "side": side})


# ----------------------------------------------------------------------------
# hit times
# ----------------------------------------------------------------------------

def _torus_dist(x, center):
    return np.abs(np.mod(np.asarray(x) - center + 0.5, 1.0) - 0.5)


def cylinder_hit_time(traj: Trajectory, centers, delta):
    """First elapsed time with |x - center| <= delta (mod 1), or None.

    Returns (time, index of center); the crossing is linearly interpolated.
    """
    centers = np.atleast_1d(np.asarray(centers, float))
    x = traj.x[:, 0]
    best = None
    for ci, c0 in enumerate(centers):
        d = _torus_dist(x, c0)
        inside = np.flatnonzero(d <= delta)
        if inside.size == 0:
            continue
        k = inside[0]
        if k == 0:
            t = 0.0
        else:
            d0, d1 = d[k - 1], d[k]
            frac = (d0 - delta) / (d0 - d1) if d0 != d1 else 1.0
            t = abs(traj.s[k - 1] - traj.s[0]) + frac * abs(traj.s[k] - traj.s[k - 1])
        if best is None or t < best[0]:
            best = (float(t), ci)
    return best


def hit_time_bound(rate, delta):
    """(2 / rate) log(1 / delta)."""
    return 2.0 / rate * math.log(1.0 / delta)


def hyperbolicity_rate(model, x):
    """sqrt(F_xx) at a zero of F."""
    return math.sqrt(_fxx(model.F, x))


# ----------------------------------------------------------------------------
# output
# ----------------------------------------------------------------------------

def write_trajectory_csv(path, traj: Trajectory, model):
    H = traj.energy(model)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        n = traj.n
        if n == 1:
            w.writerow(["s", "x", "x_mod", "p", "H"])
        else:
            w.writerow(["s"] + [f"x{k}" for k in range(n)] + [f"x{k}_mod" for k in range(n)]
                       + [f"p{k}" for k in range(n)] + ["H"])
        xm = traj.x_mod
        for i in range(len(traj)):
            w.writerow([f"{traj.s[i]:.10g}"] + [f"{v:.15g}" for v in traj.x[i]]
                       + [f"{v:.15g}" for v in xm[i]] + [f"{v:.15g}" for v in traj.p[i]]
                       + [f"{H[i]:.15g}"])

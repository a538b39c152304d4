"""Backward characteristics of solved fields and their alpha-limit sets."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import List

import numpy as np

from .errors import BlowUpError, DomainError, InconclusiveError
from .flows import Trajectory, integrate_batch
from .grid import MomentumField, ScalarField
from .hj_solver import _vec_c
from .model import hamiltonian_arrays, lagrangian_arrays


def _shift_off_shocks(mfield: MomentumField, x0):
    """Move seeds whose interpolation cell touches a shock node to the nearest regular node."""
    grid = mfield.grid
    X = np.asarray(x0, float).reshape(-1, grid.n)
    shifted = np.zeros(X.shape[0])
    pts = grid.points()
    regular = np.flatnonzero(~mfield.shock)
    if regular.size == 0:
        raise DomainError("every node is flagged as a shock")
    shape = np.array(grid.shape)
    out = X.copy()
    for i, x in enumerate(X):
        z = np.mod(x, 1.0) * shape
        lo = np.floor(z).astype(int) % shape
        hi = (lo + 1) % shape
        corners = [lo, hi] if grid.n == 1 else [lo, hi, np.array([lo[0], hi[1]]),
                                                np.array([hi[0], lo[1]])]
        flat = [int(np.ravel_multi_index(tuple(cn), grid.shape)) for cn in corners]
        if not mfield.shock[flat].any():
            continue
        d = np.abs(np.mod(pts[regular] - x + 0.5, 1.0) - 0.5)
        j = regular[int(np.argmin(np.sum(d * d, axis=1)))]
        out[i] = pts[j]
        shifted[i] = float(np.sqrt(np.sum((np.mod(pts[j] - x + 0.5, 1.0) - 0.5) ** 2)))
    return out, shifted


def backward_characteristics(mfield: MomentumField, model, c, eps, x0, T, ds,
                             resync_every=None, record_every=1, backend=None):
    """Integrate the discounted Hamiltonian flow backward from (x0, c + v_x(x0)).

    Many seeds are advanced together.  With ``resync_every = k`` the momentum
    is reset to the field value every k steps, which keeps long runs on the
    graph; without it the orbit is free and its distance to the graph is the
    quantity under test.  Each trajectory carries ``info['deviation']``, the
    per-sample distance |p - (c + v_x)(x)|.
    """
    n = model.n
    c = _vec_c(c, n)
    if not 0 < ds <= 1e-2:
        raise DomainError("step must lie in (0, 1e-2]")
    X, shifted = _shift_off_shocks(mfield, x0)
    P = mfield(X)
    nsteps = int(round(T / ds))
    h = -T / nsteps if nsteps else 0.0
    if resync_every is None:
        xs, ps, done = integrate_batch(model, c, eps, X, P, h, nsteps, record_every, backend)
    else:
        k = int(resync_every)
        if k % record_every or nsteps % record_every:
            raise DomainError("resync interval and step count must be multiples of the record stride")
        xs_parts, ps_parts = [X[None]], [P[None]]
        done = 0
        Xc, Pc = X, P
        while done < nsteps:
            m = min(k, nsteps - done)
            xs_c, ps_c, d = integrate_batch(model, c, eps, Xc, Pc, h, m, record_every, backend)
            done += d
            xs_parts.append(xs_c[1:])
            ps_parts.append(ps_c[1:])
            if d < m:
                break
            Xc = xs_c[-1]
            Pc = mfield(Xc)
        xs = np.concatenate(xs_parts)
        ps = np.concatenate(ps_parts)
    s = h * record_every * np.arange(xs.shape[0])
    out = []
    for i in range(X.shape[0]):
        xi, pi = xs[:, i], ps[:, i]
        dev = np.max(np.abs(pi - mfield(xi)), axis=1)
        info = {"x0": X[i].copy(), "shift": float(shifted[i]), "deviation": dev,
                "eps": float(eps), "c": c, "resync": resync_every}
        out.append(Trajectory(s.copy(), xi.copy(), pi.copy(), abs(h), "backward", info))
    if done < nsteps:
        raise BlowUpError("backward characteristic left the bounded region; "
                          "the orbit is not on the graph", deviation=[t.info["deviation"] for t in out])
    return out


def backward_characteristic(mfield, model, c, eps, x0, T, ds, resync_every=None,
                            record_every=1, backend=None) -> Trajectory:
    """Single-seed version of :func:`backward_characteristics`."""
    x0 = np.asarray(x0, float).reshape(1, model.n)
    return backward_characteristics(mfield, model, c, eps, x0, T, ds, resync_every,
                                    record_every, backend)[0]


def graph_deviation(traj: Trajectory, mfield: MomentumField):
    return float(np.max(np.abs(traj.p - mfield(traj.x))))


# ----------------------------------------------------------------------------
# alpha-limit sets
# ----------------------------------------------------------------------------

@dataclass
class AlphaLimitSet:
    points: np.ndarray          # (k, 2n): x mod 1 then p
    revisits: np.ndarray        # samples per cluster
    window: float
    radius: float
    n: int = 1
    info: dict = field(default_factory=dict)

    @property
    def x(self):
        return self.points[:, :self.n]

    @property
    def p(self):
        return self.points[:, self.n:]


def _phase_dist(a, B, n):
    dx = np.mod(B[:, :n] - a[:n] + 0.5, 1.0) - 0.5
    dp = B[:, n:] - a[n:]
    return np.sqrt(np.sum(dx * dx, axis=1) + np.sum(dp * dp, axis=1))


def cluster_points(Z, radius, n, weights=None):
    """Greedy radius clustering on the torus-times-plane; returns (centers, counts, masses)."""
    Z = np.asarray(Z, float)
    w = np.ones(len(Z)) if weights is None else np.asarray(weights, float)
    order = np.argsort(-w, kind="stable")
    Z, w = Z[order], w[order]
    free = np.ones(len(Z), dtype=bool)
    centers, counts, masses = [], [], []
    while free.any():
        i = int(np.argmax(free))
        d = _phase_dist(Z[i], Z, n)
        mem = free & (d <= radius)
        sub = Z[mem]
        off = sub.copy()
        off[:, :n] = np.mod(sub[:, :n] - Z[i, :n] + 0.5, 1.0) - 0.5
        ww = w[mem]
        cen = np.average(off, axis=0, weights=ww)
        cen[:n] = np.mod(cen[:n] + Z[i, :n], 1.0)
        centers.append(cen)
        counts.append(int(mem.sum()))
        masses.append(float(ww.sum()))
        free &= ~mem
    return np.array(centers).reshape(-1, Z.shape[1]), np.array(counts), np.array(masses)


def _merge(centers, counts, radius, n):
    centers = list(centers)
    counts = list(counts)
    merged = True
    while merged:
        merged = False
        for i in range(len(centers)):
            for j in range(i + 1, len(centers)):
                if _phase_dist(centers[i], centers[j][None], n)[0] <= 2 * radius:
                    a, b = counts[i], counts[j]
                    off = centers[j].copy()
                    off[:n] = np.mod(off[:n] - centers[i][:n] + 0.5, 1.0) - 0.5
                    base = centers[i].copy()
                    base[:n] = 0.0
                    new = (a * base + b * off) / (a + b)
                    new[:n] = np.mod(new[:n] + centers[i][:n], 1.0)
                    centers[i] = new
                    counts[i] = a + b
                    del centers[j], counts[j]
                    merged = True
                    break
            if merged:
                break
    return np.array(centers), np.array(counts)


def alpha_limit_set(traj: Trajectory, window_fraction=0.2, radius=1e-3, min_revisits=3):
    """Cluster the most negative-time tail of a backward trajectory."""
    if not 0 < window_fraction <= 1:
        raise DomainError("window fraction must lie in (0, 1]")
    n = traj.n
    m = len(traj)
    k = max(1, int(np.ceil(window_fraction * m)))
    Z = np.hstack([np.mod(traj.x[-k:], 1.0), traj.p[-k:]])
    centers, counts, _ = cluster_points(Z, radius, n)
    keep = counts >= min_revisits
    if not keep.any():
        raise InconclusiveError(
            f"no cluster of radius {radius:g} was revisited {min_revisits} times in the last "
            f"{k} samples; integrate over a longer horizon")
    centers, counts = _merge(centers[keep], counts[keep], radius, n)
    return AlphaLimitSet(centers, counts, window_fraction, radius, n,
                         {"samples": k, "span": float(abs(traj.s[-1] - traj.s[0]))})


def alpha_limit_invariance(aset: AlphaLimitSet, model, c, eps, T=1.0, ds=1e-3, backend=None):
    """Largest distance from the time-T forward image of each center back to the set."""
    n = aset.n
    X = aset.x.copy()
    P = aset.p.copy()
    steps = int(round(T / ds))
    xs, ps, done = integrate_batch(model, c, eps, X, P, T / steps, steps, steps, backend)
    if done < steps:
        return np.inf
    end = np.hstack([np.mod(xs[-1], 1.0), ps[-1]])
    return float(max(_phase_dist(z, aset.points, n).min() for z in end))


# ----------------------------------------------------------------------------
# identities along characteristics
# ----------------------------------------------------------------------------

def _trapezoid(y, s):
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(s)))


def verify_value_identity(sfield: ScalarField, model, c, eps, h, traj: Trajectory, tau):
    """|v(x) - (discounted running cost over [-tau, 0] + exp(-eps tau) v(gamma(-tau)))|.

    With eps = 0 this is the undiscounted dynamic programming identity.
    """
    if tau < 0:
        raise DomainError("tau must be nonnegative")
    c = _vec_c(c, model.n)
    s = traj.s - traj.s[0]
    sel = s >= -tau - 1e-12
    k = int(np.count_nonzero(sel))
    if k == 0 or abs(s[k - 1] + tau) > 1e-9:
        if tau == 0:
            return 0.0
        raise DomainError("tau must be a multiple of the sample spacing within the trajectory")
    X, P, ss = traj.x[:k], traj.p[:k], s[:k]
    xi = hamiltonian_arrays(model, X, P)[2]
    L = lagrangian_arrays(model, X, xi)[0]
    run = np.exp(eps * ss) * (L - xi @ c + h)
    integral = -_trapezoid(run, ss)                  # ss decreases
    lhs = float(sfield(X[:1])[0])
    rhs = integral + np.exp(-eps * tau) * float(sfield(X[k - 1:k])[0])
    return abs(lhs - rhs)


def gradient_identity_scan(mfield: MomentumField, model, traj: Trajectory):
    """max over samples of |(c + v_x)(x(s)) - L_xi(x(s), x'(s))|."""
    xi = hamiltonian_arrays(model, traj.x, traj.p)[2]
    Lxi = lagrangian_arrays(model, traj.x, xi)[2]
    return float(np.max(np.abs(mfield(traj.x) - Lxi)))


def write_alpha_csv(path, rows: List[tuple]):
    """Rows of (seed x0, AlphaLimitSet)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed_x0", "cluster_x", "cluster_p", "revisits", "radius"])
        for x0, aset in rows:
            for k in range(len(aset.points)):
                w.writerow([f"{float(np.atleast_1d(x0)[0]):.10g}",
                            f"{aset.x[k, 0]:.10g}", f"{aset.p[k, 0]:.10g}",
                            int(aset.revisits[k]), f"{aset.radius:g}"])

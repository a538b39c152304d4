"""Occupation measures along trajectories and their diagnostics.

Measures are weighted atoms in (x, xi) space.  Uniform measures put weight
ds/T on every sample of a time-T orbit (trapezoid end weights); discounted
measures weight the sample at time s <= 0 by eps exp(eps s) ds and are
normalised to total mass one.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field

import numpy as np

from .characteristics import cluster_points
from .errors import DomainError
from .flows import Trajectory, integrate_batch
from .hj_solver import _vec_c
from .model import hamiltonian_arrays, lagrangian_arrays

TWO_PI = 2.0 * np.pi


@dataclass
class EmpiricalMeasure:
    x: np.ndarray           # (m, n) lifted positions
    xi: np.ndarray          # (m, n) velocities
    p: np.ndarray           # (m, n) momenta
    weights: np.ndarray     # (m,)
    kind: str
    T: float
    eps: float = 0.0
    x0: np.ndarray = None
    s: np.ndarray = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.any(self.weights <= 0):
            raise DomainError("atom weights must be positive")
        if abs(float(np.sum(self.weights)) - 1.0) > 1e-12:
            raise DomainError("weights must sum to one")

    @property
    def n(self):
        return self.x.shape[1]

    def integrate(self, values):
        return float(np.dot(self.weights, values))

    def phase_points(self):
        return np.hstack([np.mod(self.x, 1.0), self.xi])


def _trap_weights(s):
    ds = np.abs(np.diff(s))
    w = np.zeros(s.size)
    w[:-1] += 0.5 * ds
    w[1:] += 0.5 * ds
    return w


def dirac(model, x, xi=None):
    """Single atom at (x, xi)."""
    x = np.asarray(x, float).reshape(1, model.n)
    xi = np.zeros((1, model.n)) if xi is None else np.asarray(xi, float).reshape(1, model.n)
    A = model.quadratic_parts(x)[0] if model.is_quadratic else None
    p = xi + A if A is not None else lagrangian_arrays(model, x, xi)[2]
    return EmpiricalMeasure(x, xi, p, np.ones(1), "uniform", 0.0)


def occupation_uniform(traj: Trajectory, model) -> EmpiricalMeasure:
    """Time average along the orbit: weight ds/T per sample (half at both ends)."""
    if len(traj) < 2:
        raise DomainError("need at least two samples")
    T = float(abs(traj.s[-1] - traj.s[0]))
    w = _trap_weights(traj.s)
    w /= w.sum()
    xi = hamiltonian_arrays(model, traj.x, traj.p)[2]
    return EmpiricalMeasure(traj.x, xi, traj.p, w, "uniform", T, s=traj.s.copy(),
                            info={"end_total": T})


def occupation_discounted(traj: Trajectory, model, eps) -> EmpiricalMeasure:
    """Weights eps exp(eps s) ds along a backward orbit that starts at s = 0."""
    if not eps > 0:
        raise DomainError("eps must be positive")
    if len(traj) < 2:
        raise DomainError("need at least two samples")
    s = traj.s - traj.s[0]
    if np.any(s > 0):
        raise DomainError("discounted measures need a backward orbit")
    T = float(-s[-1])
    w = _trap_weights(s) * np.exp(eps * s)
    w /= w.sum()
    xi = hamiltonian_arrays(model, traj.x, traj.p)[2]
    return EmpiricalMeasure(traj.x, xi, traj.p, w, "discounted", T, eps=float(eps),
                            x0=traj.x[0].copy(), s=s)


# ----------------------------------------------------------------------------
# test functions
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class TestFunctionSet:
    """cos(2 pi k.x) and sin(2 pi k.x) for wave vectors with 0 < |k|_1 <= degree."""

    n: int = 1
    degree: int = 3

    __test__ = False        # not a pytest class

    @property
    def wave_vectors(self):
        ks = []
        rng = range(-self.degree, self.degree + 1)
        for k in itertools.product(rng, repeat=self.n):
            k = np.array(k)
            l1 = int(np.abs(k).sum())
            if l1 == 0 or l1 > self.degree:
                continue
            first = k[np.flatnonzero(k)[0]]
            if first > 0:          # k and -k give the same pair
                ks.append(k)
        return np.array(ks, dtype=float)

    @property
    def names(self):
        out = []
        for k in self.wave_vectors:
            tag = ",".join(str(int(v)) for v in k)
            out += [f"cos[{tag}]", f"sin[{tag}]"]
        return out

    @property
    def sup_norms(self):
        return np.ones(2 * len(self.wave_vectors))

    def value(self, X):
        X = np.asarray(X, float).reshape(-1, self.n)
        th = TWO_PI * X @ self.wave_vectors.T
        return np.stack([np.cos(th), np.sin(th)], axis=2).reshape(X.shape[0], -1)

    def grad(self, X):
        """(m, F, n) gradients."""
        X = np.asarray(X, float).reshape(-1, self.n)
        K = self.wave_vectors
        th = TWO_PI * X @ K.T
        gc = -TWO_PI * np.sin(th)[:, :, None] * K[None]
        gs = TWO_PI * np.cos(th)[:, :, None] * K[None]
        return np.stack([gc, gs], axis=2).reshape(X.shape[0], -1, self.n)


def holonomy_integrals(mu: EmpiricalMeasure, tests: TestFunctionSet):
    """Per test function: integral of psi_x . xi."""
    G = tests.grad(mu.x)
    vals = np.einsum("mfn,mn->mf", G, mu.xi)
    return mu.weights @ vals


def holonomy_residual(mu: EmpiricalMeasure, tests: TestFunctionSet):
    return float(np.max(np.abs(holonomy_integrals(mu, tests))))


def holonomy_telescoped(mu: EmpiricalMeasure, tests: TestFunctionSet):
    """(psi(orbit start in time) ... ) the closed form of the uniform holonomy integrals."""
    if mu.kind != "uniform" or mu.s is None:
        raise DomainError("telescoping applies to uniform orbit measures")
    first, last = (0, -1) if mu.s[-1] > mu.s[0] else (-1, 0)
    v = tests.value(mu.x[[first, last]])
    return (v[1] - v[0]) / mu.T


def discounted_holonomy_defect(mu: EmpiricalMeasure, tests: TestFunctionSet):
    """int psi_x.xi + eps int psi - eps (psi(x0) - e^{-eps T} psi(end)) / (1 - e^{-eps T})."""
    if mu.kind != "discounted":
        raise DomainError("needs a discounted measure")
    eps, T = mu.eps, mu.T
    a = holonomy_integrals(mu, tests)
    b = eps * (mu.weights @ tests.value(mu.x))
    ends = tests.value(mu.x[[0, -1]])
    c = eps * (ends[0] - np.exp(-eps * T) * ends[1]) / (1.0 - np.exp(-eps * T))
    return float(np.max(np.abs(a + b - c)))


def action_stats(mu: EmpiricalMeasure, model, c, eps, vfield, h=0.0):
    c = _vec_c(c, model.n)
    L = lagrangian_arrays(model, mu.x, mu.xi)[0]
    act = mu.integrate(L - mu.xi @ c)
    disc = mu.integrate(eps * vfield(mu.x)) if vfield is not None else 0.0
    return {"action": act, "discount_term": disc,
            "m1_defect": abs(act - disc + h), "mather_defect": abs(act + h)}


def discounted_action_identity(mu: EmpiricalMeasure, model, c, h, vfield):
    """Residual of  int (L - c.xi + h) = eps (v(x0) - e^{-eps T} v(end)) / (1 - e^{-eps T})."""
    if mu.kind != "discounted":
        raise DomainError("needs a discounted measure")
    c = _vec_c(c, model.n)
    eps, T = mu.eps, mu.T
    L = lagrangian_arrays(model, mu.x, mu.xi)[0]
    lhs = mu.integrate(L - mu.xi @ c + h)
    v0 = float(vfield(mu.x[:1])[0])
    vT = float(vfield(mu.x[-1:])[0])
    rhs = eps * (v0 - np.exp(-eps * T) * vT) / (1.0 - np.exp(-eps * T))
    return abs(lhs - rhs)


# ----------------------------------------------------------------------------
# invariance probe
# ----------------------------------------------------------------------------

def _in_ball(Z, center, delta, n):
    dx = np.mod(Z[:, :n] - center[:n] + 0.5, 1.0) - 0.5
    dv = Z[:, n:] - center[n:]
    return np.sqrt(np.sum(dx * dx, axis=1) + np.sum(dv * dv, axis=1)) < delta


def invariance_probe(mu: EmpiricalMeasure, model, c, eps, tau, ball, ds=5e-3, backend=None):
    """Mass of a ball B in (x, xi) and of its time-tau preimage under the flow.

    Preimage membership is decided by pushing every atom forward by tau.
    """
    center, delta = ball
    center = np.asarray(center, float).ravel()
    n = mu.n
    Z = mu.phase_points()
    mass_b = float(mu.weights[_in_ball(Z, center, delta, n)].sum())
    steps = max(1, int(round(tau / ds)))
    xs, ps, done = integrate_batch(model, c, eps, mu.x, mu.p, tau / steps, steps, steps, backend)
    if done < steps:
        raise DomainError("forward push left the bounded region")
    xi = hamiltonian_arrays(model, xs[-1], ps[-1])[2]
    Zf = np.hstack([np.mod(xs[-1], 1.0), xi])
    mass_pre = float(mu.weights[_in_ball(Zf, center, delta, n)].sum())
    return mass_b, mass_pre


def ball_exit_time(model, c, eps, start, delta, direction, ds=1e-4, t_max=10.0, backend=None):
    """Time for the flow from ``start = (x, p)`` to leave the (x, xi) ball of radius delta."""
    x0 = np.asarray(start[0], float).reshape(1, model.n)
    p0 = np.asarray(start[1], float).reshape(1, model.n)
    xi0 = hamiltonian_arrays(model, x0, p0)[2]
    center = np.hstack([np.mod(x0[0], 1.0), xi0[0]])
    h = ds if direction == "forward" else -ds
    chunk = 1000
    t = 0.0
    X, P = x0, p0
    prev = 0.0
    while t < t_max:
        xs, ps, done = integrate_batch(model, c, eps, X, P, h, chunk, 1, backend)
        xi = hamiltonian_arrays(model, xs[:, 0], ps[:, 0])[2]
        Z = np.hstack([np.mod(xs[:, 0], 1.0), xi])
        dx = np.mod(Z[:, :model.n] - center[:model.n] + 0.5, 1.0) - 0.5
        d = np.sqrt(np.sum(dx * dx, axis=1) + np.sum((Z[:, model.n:] - center[model.n:]) ** 2, axis=1))
        out = np.flatnonzero(d >= delta)
        if out.size:
            k = out[0]
            d0 = d[k - 1] if k > 0 else prev
            frac = (delta - d0) / (d[k] - d0) if d[k] != d0 else 1.0
            return t + ds * (k - 1 + frac)
        prev = d[-1]
        t += ds * chunk
        X, P = xs[-1], ps[-1]
    return None


def probe_closed_form(eps, tau, tau_minus, tau_plus, T=None):
    """Ball and preimage masses of an orbit that visits the ball once, at its end.

    Normalised for a finite horizon T (infinite when None).
    """
    norm = 1.0 if T is None else 1.0 - np.exp(-eps * T)
    mass_b = (1.0 - np.exp(-eps * tau_minus)) / norm
    mass_pre = (np.exp(-eps * (tau - tau_plus)) - np.exp(-eps * (tau + tau_minus))) / norm
    return mass_b, mass_pre


# ----------------------------------------------------------------------------
# supports and distances
# ----------------------------------------------------------------------------

def support_clusters(mu: EmpiricalMeasure, radius):
    """Greedy clustering of atoms by descending weight; (center, mass) pairs."""
    centers, _, masses = cluster_points(mu.phase_points(), radius, mu.n, mu.weights)
    order = np.argsort(-masses, kind="stable")
    return [(centers[i], float(masses[i])) for i in order]


def dictionary_distance(mu: EmpiricalMeasure, points, weights, tests: TestFunctionSet):
    """max over the dictionary of |int psi dmu - int psi dnu| with nu = sum weights * delta_points."""
    a = mu.weights @ tests.value(mu.x)
    b = np.asarray(weights, float) @ tests.value(np.asarray(points, float).reshape(-1, mu.n))
    return float(np.max(np.abs(a - b)))


def write_measure_csv(path, mu: EmpiricalMeasure):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        n = mu.n
        head = ([f"x{k}" for k in range(n)] if n > 1 else ["x"]) + \
               ([f"xi{k}" for k in range(n)] if n > 1 else ["xi"]) + \
               ["weight", "kind", "T", "eps", "x0"]
        w.writerow(head)
        x0 = "" if mu.x0 is None else f"{float(np.atleast_1d(mu.x0)[0]):.10g}"
        xm = np.mod(mu.x, 1.0)
        for i in range(mu.weights.size):
            w.writerow([f"{v:.12g}" for v in xm[i]] + [f"{v:.12g}" for v in mu.xi[i]]
                       + [f"{mu.weights[i]:.15g}", mu.kind, f"{mu.T:.10g}", f"{mu.eps:g}", x0])

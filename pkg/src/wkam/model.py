"""Tonelli Hamiltonians on the torus and their Lagrangians.

Three kinds of model are supported:

* ``mechanical1d``: H(x, p) = p^2/2 - F(x) with F >= 0 a trigonometric series,
* ``quadraticKam``: H(x, p) = w.(p - c - u_x) + |p - c - u_x|^2/2, built so that
  u solves H(x, c + u_x) = 0 and the flow on the graph is x' = w,
* ``genericTonelli``: user supplied H with a numerical Legendre transform.

The first two share the quadratic structure

    L(x, xi) = |xi|^2/2 + A(x).xi + B(x),    H(x, p) = |p - A(x)|^2/2 - B(x),

which the solver kernels exploit.  ``TonelliModel.quadratic_parts`` exposes
A, B and their derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate, optimize

from .errors import ConvergenceError, DomainError, ModelError

TWO_PI = 2.0 * np.pi
GOLDEN = 0.5 * (1.0 + np.sqrt(5.0))

KINDS = ("mechanical1d", "quadraticKam", "genericTonelli")


# ----------------------------------------------------------------------------
# trigonometric series
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class TrigSeries:
    """f(x) = const + sum_j a_j cos(2 pi k_j.x) + b_j sin(2 pi k_j.x) on the n-torus."""

    k: np.ndarray            # (m, n) integer wave vectors
    cos_coefs: np.ndarray    # (m,)
    sin_coefs: np.ndarray    # (m,)
    const: float = 0.0

    @staticmethod
    def build(n, terms=(), const=0.0):
        """Terms are tuples (k, a, b) with k an int or an n-tuple of ints."""
        ks, a, b = [], [], []
        for kv, ac, bc in terms:
            kv = np.atleast_1d(np.asarray(kv, dtype=float))
            if kv.size != n:
                raise ModelError(f"wave vector {kv} does not have dimension {n}")
            ks.append(kv)
            a.append(float(ac))
            b.append(float(bc))
        k = np.array(ks, dtype=float).reshape(len(ks), n)
        return TrigSeries(k, np.array(a, dtype=float), np.array(b, dtype=float), float(const))

    @property
    def n(self):
        return self.k.shape[1]

    def _phase(self, X):
        return TWO_PI * (X @ self.k.T)          # (m_pts, m_terms)

    def value(self, X):
        X = np.asarray(X, dtype=float).reshape(-1, self.n)
        if self.k.shape[0] == 0:
            return np.full(X.shape[0], self.const)
        th = self._phase(X)
        return self.const + np.cos(th) @ self.cos_coefs + np.sin(th) @ self.sin_coefs

    def grad(self, X):
        X = np.asarray(X, dtype=float).reshape(-1, self.n)
        if self.k.shape[0] == 0:
            return np.zeros_like(X)
        th = self._phase(X)
        w = -np.sin(th) * self.cos_coefs + np.cos(th) * self.sin_coefs
        return TWO_PI * (w @ self.k)

    def hess(self, X):
        X = np.asarray(X, dtype=float).reshape(-1, self.n)
        if self.k.shape[0] == 0:
            return np.zeros((X.shape[0], self.n, self.n))
        th = self._phase(X)
        w = np.cos(th) * self.cos_coefs + np.sin(th) * self.sin_coefs
        kk = self.k[:, :, None] * self.k[:, None, :]
        return -(TWO_PI ** 2) * np.einsum("pm,mij->pij", w, kk)

    def mean(self):
        zero = np.all(self.k == 0, axis=1)
        return self.const + float(np.sum(self.cos_coefs[zero]))

    def to_terms(self):
        return [(tuple(int(v) for v in kv), float(a), float(b))
                for kv, a, b in zip(self.k, self.cos_coefs, self.sin_coefs)]


# ----------------------------------------------------------------------------
# model
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class SegmentActions:
    zeros: np.ndarray
    actions: np.ndarray
    c_plus: float
    c_minus: float


@dataclass(frozen=True)
class TonelliModel:
    kind: str
    n: int
    name: str = "custom"
    F: Optional[TrigSeries] = None
    omega: Optional[np.ndarray] = None
    offset: Optional[np.ndarray] = None
    u: Optional[TrigSeries] = None
    H_fn: Optional[Callable] = None
    H_x_fn: Optional[Callable] = None
    H_p_fn: Optional[Callable] = None
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def is_quadratic(self):
        return self.kind in ("mechanical1d", "quadraticKam")

    def quadratic_parts(self, X):
        """A, dA, B, dB, d2B at points X (m, n); dA[p, i, j] = d A_i / d x_j."""
        X = np.asarray(X, dtype=float).reshape(-1, self.n)
        m, n = X.shape
        if self.kind == "mechanical1d":
            A = np.zeros((m, n))
            dA = np.zeros((m, n, n))
            B = self.F.value(X)
            dB = self.F.grad(X)
            d2B = self.F.hess(X)
        elif self.kind == "quadraticKam":
            A = self.offset + self.u.grad(X) - self.omega
            dA = self.u.hess(X)
            B = np.full(m, 0.5 * float(self.omega @ self.omega))
            dB = np.zeros((m, n))
            d2B = np.zeros((m, n, n))
        else:
            raise ModelError("generic Tonelli models have no quadratic structure")
        return A, dA, B, dB, d2B

    def exact_solution(self, X):
        """The constructed solution u for quadratic KAM models."""
        if self.kind != "quadraticKam":
            raise ModelError("exact solution is only known for quadratic KAM models")
        return self.u.value(X)


def _points(x, n):
    """Coerce x to an (m, n) array; report whether a single point was given."""
    a = np.asarray(x, dtype=float)
    single = a.ndim == 0 or (n > 1 and a.ndim == 1)
    a = a.reshape(-1, n)
    if not np.all(np.isfinite(a)):
        raise DomainError("non-finite input")
    return a, single


def _squeeze_vec(v, n, single):
    if n == 1:
        return v[:, 0] if not single else v[0, 0]
    return v[0] if single else v


# ----------------------------------------------------------------------------
# evaluation
# ----------------------------------------------------------------------------

FD_STEP = 1e-6


def _fd_grad(fn, x, p, wrt):
    n = x.size
    g = np.zeros(n)
    for i in range(n):
        e = np.zeros(n)
        e[i] = FD_STEP
        if wrt == "x":
            g[i] = (fn(x + e, p) - fn(x - e, p)) / (2 * FD_STEP)
        else:
            g[i] = (fn(x, p + e) - fn(x, p - e)) / (2 * FD_STEP)
    return g


def _generic_H(model, x, p):
    H = float(model.H_fn(x, p))
    Hx = np.asarray(model.H_x_fn(x, p), float) if model.H_x_fn else _fd_grad(model.H_fn, x, p, "x")
    Hp = np.asarray(model.H_p_fn(x, p), float) if model.H_p_fn else _fd_grad(model.H_fn, x, p, "p")
    return H, Hx.reshape(-1), Hp.reshape(-1)


def hamiltonian_arrays(model, X, P):
    """Batch H, H_x, H_p for (m, n) arrays."""
    if model.is_quadratic:
        A, dA, B, dB, _ = model.quadratic_parts(X)
        r = P - A
        H = 0.5 * np.sum(r * r, axis=1) - B
        Hx = -np.einsum("pi,pij->pj", r, dA) - dB
        return H, Hx, r
    m, n = X.shape
    H = np.empty(m)
    Hx = np.empty((m, n))
    Hp = np.empty((m, n))
    for i in range(m):
        H[i], Hx[i], Hp[i] = _generic_H(model, X[i], P[i])
    return H, Hx, Hp


def eval_hamiltonian(model, x, p):
    """H, H_x, H_p at (x, p); scalar-shaped for a single 1-D point."""
    X, single = _points(x, model.n)
    P, _ = _points(p, model.n)
    if P.shape[0] != X.shape[0]:
        P = np.broadcast_to(P, X.shape)
    H, Hx, Hp = hamiltonian_arrays(model, X, P)
    n = model.n
    return (H[0] if single else H, _squeeze_vec(Hx, n, single), _squeeze_vec(Hp, n, single))


def _legendre_point(model, x, xi, max_iter=50, tol=1e-10):
    """Solve H_p(x, p) = xi by damped Newton seeded at p = xi."""
    p = xi.copy()
    n = xi.size
    scale = 1.0 + float(np.linalg.norm(xi))
    # finite-difference gradients carry noise near 1e-10; below this floor a
    # stalled line search means the root is found
    floor = 1e-8 * scale

    def resid(q):
        return _generic_H(model, x, q)[2] - xi

    r = resid(p)
    for _ in range(max_iter):
        nr = np.linalg.norm(r)
        if nr < tol * scale:
            return p
        J = np.empty((n, n))
        for j in range(n):
            e = np.zeros(n)
            e[j] = FD_STEP
            J[:, j] = (resid(p + e) - resid(p - e)) / (2 * FD_STEP)
        try:
            step = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            raise ConvergenceError("Legendre inversion hit a flat direction of H",
                                   residual=float(nr)) from None
        t = 1.0
        while t > 1e-4:
            q = p + t * step
            rq = resid(q)
            if np.linalg.norm(rq) < nr:
                break
            t *= 0.5
        else:
            if nr < floor:
                return p
        p, r = q, rq
    nr = float(np.linalg.norm(r))
    if nr < floor:
        return p
    raise ConvergenceError("Legendre inversion did not converge", residual=nr)


def lagrangian_arrays(model, X, XI):
    if model.is_quadratic:
        A, dA, B, dB, _ = model.quadratic_parts(X)
        L = 0.5 * np.sum(XI * XI, axis=1) + np.sum(A * XI, axis=1) + B
        Lx = np.einsum("pi,pij->pj", XI, dA) + dB
        return L, Lx, XI + A
    m, n = X.shape
    L = np.empty(m)
    Lx = np.empty((m, n))
    Lxi = np.empty((m, n))
    for i in range(m):
        p = _legendre_point(model, X[i], XI[i])
        H, Hx, _ = _generic_H(model, X[i], p)
        L[i] = float(XI[i] @ p) - H
        Lx[i] = -Hx          # envelope theorem
        Lxi[i] = p
    return L, Lx, Lxi


def eval_lagrangian(model, x, xi):
    """L, L_x, L_xi at (x, xi)."""
    X, single = _points(x, model.n)
    XI, _ = _points(xi, model.n)
    if XI.shape[0] != X.shape[0]:
        XI = np.broadcast_to(XI, X.shape)
    L, Lx, Lxi = lagrangian_arrays(model, X, XI)
    n = model.n
    return (L[0] if single else L, _squeeze_vec(Lx, n, single), _squeeze_vec(Lxi, n, single))


# ----------------------------------------------------------------------------
# constructors
# ----------------------------------------------------------------------------

def make_mechanical(F: TrigSeries, name="custom", check_points=10_000):
    if F.n != 1:
        raise ModelError("mechanical models are one-dimensional")
    xs = np.arange(check_points) / check_points
    fmin = float(F.value(xs).min())
    if fmin < -1e-12:
        raise ModelError(f"F is negative somewhere (min sample {fmin:.3e})")
    return TonelliModel("mechanical1d", 1, name=name, F=F)


def make_quadratic_kam(omega, c=None, u=None, name="custom"):
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    n = omega.size
    if not np.any(omega != 0):
        raise ModelError("rotation vector must be nonzero")
    c = np.zeros(n) if c is None else np.atleast_1d(np.asarray(c, dtype=float))
    if c.size != n:
        raise ModelError("offset and rotation vector dimensions differ")
    u = TrigSeries.build(n) if u is None else u
    if u.n != n:
        raise ModelError("u has the wrong dimension")
    return TonelliModel("quadraticKam", n, name=name, omega=omega, offset=c, u=u)


def make_generic(H, n=1, H_x=None, H_p=None, name="custom", seed=0):
    """Wrap an arbitrary Hamiltonian; convexity in p is spot checked at 32 points."""
    model = TonelliModel("genericTonelli", n, name=name, H_fn=H, H_x_fn=H_x, H_p_fn=H_p)
    rng = np.random.default_rng(seed)
    h = 1e-4
    for _ in range(32):
        x = rng.random(n)
        p = rng.uniform(-5, 5, n)
        J = np.empty((n, n))
        for j in range(n):
            e = np.zeros(n)
            e[j] = h
            J[:, j] = (_generic_H(model, x, p + e)[2] - _generic_H(model, x, p - e)[2]) / (2 * h)
        J = 0.5 * (J + J.T)
        if np.linalg.eigvalsh(J).min() <= 0:
            raise ModelError(f"H_pp is not positive definite at x={x}, p={p}")
    return model


def generic_from(model):
    """Re-expose a quadratic model through the generic (numerical Legendre) path."""
    def H(x, p):
        return float(hamiltonian_arrays(model, x.reshape(1, -1), p.reshape(1, -1))[0][0])
    return make_generic(H, n=model.n, name=model.name + "-generic")


# ----------------------------------------------------------------------------
# mechanical helpers
# ----------------------------------------------------------------------------

def _require_mechanical(model):
    if model.kind != "mechanical1d":
        raise ModelError("operation needs a mechanical1d model")


def separatrix_momentum(model, x, branch="plus"):
    _require_mechanical(model)
    X, single = _points(x, 1)
    s = np.sqrt(2.0 * np.maximum(model.F.value(X), 0.0))
    if branch == "minus":
        s = -s
    elif branch != "plus":
        raise DomainError(f"unknown branch {branch!r}")
    return s[0] if single else s


def find_zeros(F: TrigSeries, samples=4096, ftol=1e-10):
    """Zeros of a nonnegative 1-D series: critical points with F below ftol."""
    xs = np.arange(samples + 1) / samples
    g = F.grad(xs)[:, 0]
    cands = list(xs[:-1][g[:-1] == 0.0])

    def fx(t):
        return F.grad(np.array([t]))[0, 0]

    for i in range(samples):
        if g[i] * g[i + 1] < 0:
            cands.append(optimize.brentq(fx, xs[i], xs[i + 1], xtol=1e-15))
    out = []
    for z in sorted(np.mod(cands, 1.0)):
        if F.value(np.array([z]))[0] < ftol:
            if not out or min(abs(z - out[-1]), 1 - abs(z - out[-1])) > 1e-9:
                out.append(float(z))
    if len(out) > 1 and 1 - (out[-1] - out[0]) < 1e-9:
        out.pop()
    return np.array(out)


def _action_integrand(F):
    return lambda t: np.sqrt(2.0 * max(F.value(np.array([t]))[0], 0.0))


def _is_zero_series(F):
    return not np.any(F.value(np.arange(1024) / 1024) > 1e-14)


def critical_c(model):
    """(c_minus, c_plus) = -/+ the integral of sqrt(2F) over one period."""
    _require_mechanical(model)
    F = model.F
    if _is_zero_series(F):
        return (0.0, 0.0)
    zeros = find_zeros(F)
    pts = [z for z in zeros if 0 < z < 1]
    val, err = integrate.quad(_action_integrand(F), 0.0, 1.0, epsabs=1e-10, epsrel=1e-12,
                              limit=400, points=pts or None)
    if err > 1e-8:
        raise ConvergenceError("action quadrature did not converge", residual=err)
    return (-val, val)


def segment_actions(model):
    """Zeros of F and the action of sqrt(2F) between consecutive zeros."""
    _require_mechanical(model)
    F = model.F
    zeros = find_zeros(F)
    if zeros.size == 0:
        raise ModelError("F has no zeros")
    fxx = F.hess(zeros)[:, 0, 0]
    if np.any(fxx <= 1e-6):
        bad = zeros[np.argmin(fxx)]
        raise ModelError(f"degenerate zero of F at x={bad:.6f}")
    f = _action_integrand(F)
    nxt = np.append(zeros[1:], zeros[0] + 1.0)
    acts = []
    for a, b in zip(zeros, nxt):
        val, err = integrate.quad(f, a, b, epsabs=1e-12, epsrel=1e-12, limit=400)
        if err > 1e-8:
            raise ConvergenceError("segment quadrature did not converge", residual=err)
        acts.append(val)
    acts = np.array(acts)
    total = float(acts.sum())
    return SegmentActions(zeros, acts, total, -total)


# ----------------------------------------------------------------------------
# presets
# ----------------------------------------------------------------------------

def f1_series(shift=0.0):
    """(pi^2/4)(1 - cos 2 pi (x - shift)): single well at x = shift."""
    a = np.pi ** 2 / 4
    ph = TWO_PI * shift
    return TrigSeries.build(1, [(1, -a * np.cos(ph), -a * np.sin(ph))], const=a)


def f2_series():
    """(1 + sin(2 pi x)/2)^2 sin^2(2 pi x) expanded in Fourier modes."""
    return TrigSeries.build(1, [(1, 0.0, 0.75), (2, -0.625, 0.0),
                                (3, 0.0, -0.25), (4, 0.03125, 0.0)], const=0.59375)


def preset(name):
    """Named models used by the studies and the command line."""
    if name == "F1":
        return make_mechanical(f1_series(), name="F1")
    if name == "F2":
        return make_mechanical(f2_series(), name="F2")
    if name == "zero":
        return make_mechanical(TrigSeries.build(1), name="zero")
    if name == "kam2d":
        u = TrigSeries.build(2, [((1, 0), 0.0, 0.02), ((0, 1), 0.03, 0.0)])
        return make_quadratic_kam([1.0, GOLDEN], None, u, name="kam2d")
    if name == "kam1d":
        u = TrigSeries.build(1, [(1, 0.0, 0.05)])
        return make_quadratic_kam([1.0], None, u, name="kam1d")
    if name == "kam2d-flat":
        return make_quadratic_kam([1.0, GOLDEN], name="kam2d-flat")
    if name == "kam1d-flat":
        return make_quadratic_kam([1.0], name="kam1d-flat")
    raise ModelError(f"unknown preset {name!r}")


PRESETS = ("F1", "F2", "zero", "kam2d", "kam1d", "kam2d-flat", "kam1d-flat")

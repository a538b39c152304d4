"""Pure numpy implementations of the hot loops.

Both backends share one contract, so tests run them side by side.

Bellman sweeps minimise, per node, the cost

    1/2 xi.Q xi + q.xi + q0 + beta * Interp(w)(x - xi dt)

over the control box.  Within one interpolation cell the objective is a
quadratic in xi (bilinear interpolation adds one cross term in 2-D), so the
minimum over each cell is found exactly and the best cell wins.

Trajectory integration is classical RK4 for H = |p - A|^2/2 - B with
A = a0 + grad U and B = F (a constant in B does not move the flow).
"""

import numpy as np

TWO_PI = 2.0 * np.pi


def _cell_range(xi_max, r):
    return int(np.ceil(-xi_max * r - 1.0)), int(np.floor(xi_max * r))


def sweep_1d(w, Q, q, q0, beta, r, xi_max):
    """One synchronous sweep on a 1-D periodic grid.

    ``r`` is dt/dx, so a control xi moves the foot by -xi*r cells.
    Returns (Tw, xi, i0, theta) with the foot at node i0 + theta.
    """
    N = w.size
    j = np.arange(N)
    best = np.full(N, np.inf)
    bxi = np.zeros(N)
    bi0 = np.zeros(N, dtype=np.int64)
    bth = np.zeros(N)
    dlo, dhi = _cell_range(xi_max, r)
    for d in range(dlo, dhi + 1):
        lo = max(-(d + 1) / r, -xi_max)
        hi = min(-d / r, xi_max)
        if lo > hi:
            continue
        ia = (j + d) % N
        ib = (j + d + 1) % N
        wa = w[ia]
        wb = w[ib]
        qq = q - beta * r * (wb - wa)
        xi = np.clip(-qq / Q, lo, hi)
        th = np.clip(-xi * r - d, 0.0, 1.0)
        val = 0.5 * Q * xi * xi + q * xi + q0 + beta * ((1.0 - th) * wa + th * wb)
        upd = val < best
        best = np.where(upd, val, best)
        bxi = np.where(upd, xi, bxi)
        bi0 = np.where(upd, ia, bi0)
        bth = np.where(upd, th, bth)
    return best, bxi, bi0, bth


def _edge_min(G11, G12, G22, g1, g2, fix1, fixed, lo, hi):
    """Minimise over one box edge: theta_k fixed (k=1 if fix1), other in [lo, hi]."""
    if fix1:
        a, b, base = G22, g2 + G12 * fixed, 0.5 * G11 * fixed * fixed + g1 * fixed
    else:
        a, b, base = G11, g1 + G12 * fixed, 0.5 * G22 * fixed * fixed + g2 * fixed
    t_int = np.where(a > 0, np.clip(-b / np.where(a > 0, a, 1.0), lo, hi), lo)
    f_int = 0.5 * a * t_int * t_int + b * t_int
    f_lo = 0.5 * a * lo * lo + b * lo
    f_hi = 0.5 * a * hi * hi + b * hi
    t = t_int
    f = f_int
    use_lo = f_lo < f
    t = np.where(use_lo, lo, t)
    f = np.where(use_lo, f_lo, f)
    use_hi = f_hi < f
    t = np.where(use_hi, hi, t)
    f = np.where(use_hi, f_hi, f)
    return t, f + base


def sweep_2d(w, Q11, Q12, Q22, q1, q2, q0, beta, r1, r2, xi_max, N1, N2):
    """One synchronous sweep on an N1 x N2 periodic grid (row-major values)."""
    W = w.reshape(N1, N2)
    I, J = np.meshgrid(np.arange(N1), np.arange(N2), indexing="ij")
    I = I.ravel()
    J = J.ravel()
    M = N1 * N2
    best = np.full(M, np.inf)
    bxi = np.zeros((M, 2))
    bi = np.zeros((M, 2), dtype=np.int64)
    bth = np.zeros((M, 2))
    d1lo, d1hi = _cell_range(xi_max, r1)
    d2lo, d2hi = _cell_range(xi_max, r2)
    a1, a2 = -1.0 / r1, -1.0 / r2
    G11 = Q11 * a1 * a1
    G22 = Q22 * a2 * a2
    for d1 in range(d1lo, d1hi + 1):
        lo1 = max(0.0, -xi_max * r1 - d1)
        hi1 = min(1.0, xi_max * r1 - d1)
        if lo1 > hi1:
            continue
        ia = (I + d1) % N1
        ib = (I + d1 + 1) % N1
        b1 = -d1 / r1
        for d2 in range(d2lo, d2hi + 1):
            lo2 = max(0.0, -xi_max * r2 - d2)
            hi2 = min(1.0, xi_max * r2 - d2)
            if lo2 > hi2:
                continue
            ja = (J + d2) % N2
            jb = (J + d2 + 1) % N2
            b2 = -d2 / r2
            w00 = W[ia, ja]
            w10 = W[ib, ja]
            w01 = W[ia, jb]
            w11 = W[ib, jb]
            e = w11 - w10 - w01 + w00
            G12 = Q12 * a1 * a2 + beta * e
            g1 = a1 * (Q11 * b1 + Q12 * b2 + q1) + beta * (w10 - w00)
            g2 = a2 * (Q12 * b1 + Q22 * b2 + q2) + beta * (w01 - w00)
            # interior stationary point
            det = G11 * G22 - G12 * G12
            ok = (G11 > 0) & (det > 0)
            sdet = np.where(ok, det, 1.0)
            t1 = (-G22 * g1 + G12 * g2) / sdet
            t2 = (G12 * g1 - G11 * g2) / sdet
            inside = ok & (t1 >= lo1) & (t1 <= hi1) & (t2 >= lo2) & (t2 <= hi2)
            ft = np.where(inside, 0.5 * (G11 * t1 * t1 + 2 * G12 * t1 * t2 + G22 * t2 * t2)
                          + g1 * t1 + g2 * t2, np.inf)
            th1 = np.where(inside, t1, 0.0)
            th2 = np.where(inside, t2, 0.0)
            for fix1, fixed, lo, hi in ((True, lo1, lo2, hi2), (True, hi1, lo2, hi2),
                                        (False, lo2, lo1, hi1), (False, hi2, lo1, hi1)):
                t, f = _edge_min(G11, G12, G22, g1, g2, fix1, fixed, lo, hi)
                upd = (~inside) & (f < ft)
                ft = np.where(upd, f, ft)
                if fix1:
                    th1 = np.where(upd, fixed, th1)
                    th2 = np.where(upd, t, th2)
                else:
                    th1 = np.where(upd, t, th1)
                    th2 = np.where(upd, fixed, th2)
            x1 = a1 * th1 + b1
            x2 = a2 * th2 + b2
            val = (0.5 * (Q11 * x1 * x1 + 2 * Q12 * x1 * x2 + Q22 * x2 * x2)
                   + q1 * x1 + q2 * x2 + q0
                   + beta * ((1 - th1) * ((1 - th2) * w00 + th2 * w01)
                             + th1 * ((1 - th2) * w10 + th2 * w11)))
            upd = val < best
            best = np.where(upd, val, best)
            bxi[:, 0] = np.where(upd, x1, bxi[:, 0])
            bxi[:, 1] = np.where(upd, x2, bxi[:, 1])
            bi[:, 0] = np.where(upd, ia, bi[:, 0])
            bi[:, 1] = np.where(upd, ja, bi[:, 1])
            bth[:, 0] = np.where(upd, th1, bth[:, 0])
            bth[:, 1] = np.where(upd, th2, bth[:, 1])
    return best, bxi, bi, bth


def _series_grad_hess(X, k, a, b, need_hess):
    """Gradient (m, n) and optionally Hessian (m, n, n) of a trig series."""
    m, n = X.shape
    if k.shape[0] == 0:
        return np.zeros((m, n)), (np.zeros((m, n, n)) if need_hess else None)
    th = TWO_PI * (X @ k.T)
    c, s = np.cos(th), np.sin(th)
    gw = -s * a + c * b
    g = TWO_PI * (gw @ k)
    if not need_hess:
        return g, None
    hw = c * a + s * b
    kk = k[:, :, None] * k[:, None, :]
    h = -(TWO_PI ** 2) * np.einsum("pm,mij->pij", hw, kk)
    return g, h


def _rhs(X, P, eps, c, a0, Uk, Ua, Ub, Fk, Fa, Fb):
    gU, hU = _series_grad_hess(X, Uk, Ua, Ub, True)
    gF, _ = _series_grad_hess(X, Fk, Fa, Fb, False)
    r = P - (a0 + gU)
    dx = r
    dp = np.einsum("pij,pj->pi", hU, r) + gF + eps * (c - P)
    return dx, dp


def rk4_quadratic(X, P, ds, nsteps, stride, eps, c, a0, Uk, Ua, Ub, Fk, Fa, Fb, bound=1e6):
    """Batch RK4; records every ``stride`` steps.

    Returns (xs, ps, done) where xs/ps have shape (nrec, m, n) and ``done`` is
    the number of completed steps (less than nsteps after a blow-up).
    """
    X = np.array(X, dtype=float)
    P = np.array(P, dtype=float)
    m, n = X.shape
    nrec = nsteps // stride + 1
    xs = np.empty((nrec, m, n))
    ps = np.empty((nrec, m, n))
    xs[0], ps[0] = X, P
    args = (eps, c, a0, Uk, Ua, Ub, Fk, Fa, Fb)
    h2 = 0.5 * ds
    rec = 1
    for step in range(1, nsteps + 1):
        k1x, k1p = _rhs(X, P, *args)
        k2x, k2p = _rhs(X + h2 * k1x, P + h2 * k1p, *args)
        k3x, k3p = _rhs(X + h2 * k2x, P + h2 * k2p, *args)
        k4x, k4p = _rhs(X + ds * k3x, P + ds * k3p, *args)
        X = X + (ds / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
        P = P + (ds / 6.0) * (k1p + 2 * k2p + 2 * k3p + k4p)
        if not (np.all(np.abs(X) < bound) and np.all(np.abs(P) < bound)):
            return xs[:rec], ps[:rec], step - 1
        if step % stride == 0:
            xs[rec], ps[rec] = X, P
            rec += 1
    return xs, ps, nsteps

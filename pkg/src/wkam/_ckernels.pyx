# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the Bellman sweeps and the batch RK4 integrator.

Semantics match ``wkam._pykernels`` exactly; see that module for the maths.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor, ceil, sin, cos, fabs, INFINITY, M_PI

cnp.import_array()

cdef double TWO_PI = 2.0 * M_PI


cdef inline Py_ssize_t wrap(Py_ssize_t i, Py_ssize_t N) noexcept nogil:
    i = i % N
    if i < 0:
        i += N
    return i


cdef inline double clamp(double v, double lo, double hi) noexcept nogil:
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


def sweep_1d(const double[::1] w, const double[::1] Q, const double[::1] q, const double[::1] q0,
             double beta, double r, double xi_max):
    cdef Py_ssize_t N = w.shape[0]
    out = np.empty(N)
    oxi = np.empty(N)
    oi0 = np.empty(N, dtype=np.int64)
    oth = np.empty(N)
    cdef double[::1] best = out
    cdef double[::1] bxi = oxi
    cdef long long[::1] bi0 = oi0
    cdef double[::1] bth = oth
    cdef Py_ssize_t dlo = <Py_ssize_t>ceil(-xi_max * r - 1.0)
    cdef Py_ssize_t dhi = <Py_ssize_t>floor(xi_max * r)
    cdef Py_ssize_t j, d, ia, ib
    cdef double lo, hi, wa, wb, qq, xi, th, val, bv
    with nogil:
        for j in range(N):
            bv = INFINITY
            for d in range(dlo, dhi + 1):
                lo = -(d + 1) / r
                if lo < -xi_max:
                    lo = -xi_max
                hi = -d / r
                if hi > xi_max:
                    hi = xi_max
                if lo > hi:
                    continue
                ia = wrap(j + d, N)
                ib = wrap(j + d + 1, N)
                wa = w[ia]
                wb = w[ib]
                qq = q[j] - beta * r * (wb - wa)
                xi = clamp(-qq / Q[j], lo, hi)
                th = clamp(-xi * r - d, 0.0, 1.0)
                val = 0.5 * Q[j] * xi * xi + q[j] * xi + q0[j] + beta * ((1.0 - th) * wa + th * wb)
                if val < bv:
                    bv = val
                    bxi[j] = xi
                    bi0[j] = ia
                    bth[j] = th
            best[j] = bv
    return out, oxi, oi0, oth


cdef inline void edge_min(double G11, double G12, double G22, double g1, double g2,
                          bint fix1, double fixed, double lo, double hi,
                          double* t_out, double* f_out) noexcept nogil:
    cdef double a, b, base, t, f, flo, fhi
    if fix1:
        a = G22
        b = g2 + G12 * fixed
        base = 0.5 * G11 * fixed * fixed + g1 * fixed
    else:
        a = G11
        b = g1 + G12 * fixed
        base = 0.5 * G22 * fixed * fixed + g2 * fixed
    if a > 0:
        t = clamp(-b / a, lo, hi)
    else:
        t = lo
    f = 0.5 * a * t * t + b * t
    flo = 0.5 * a * lo * lo + b * lo
    fhi = 0.5 * a * hi * hi + b * hi
    if flo < f:
        t = lo
        f = flo
    if fhi < f:
        t = hi
        f = fhi
    t_out[0] = t
    f_out[0] = f + base


def sweep_2d(const double[::1] w, const double[::1] Q11, const double[::1] Q12,
             const double[::1] Q22, const double[::1] q1, const double[::1] q2,
             const double[::1] q0,
             double beta, double r1, double r2, double xi_max,
             Py_ssize_t N1, Py_ssize_t N2):
    cdef Py_ssize_t M = N1 * N2
    out = np.empty(M)
    oxi = np.zeros((M, 2))
    oi = np.zeros((M, 2), dtype=np.int64)
    oth = np.zeros((M, 2))
    cdef double[::1] best = out
    cdef double[:, ::1] bxi = oxi
    cdef long long[:, ::1] bi = oi
    cdef double[:, ::1] bth = oth
    cdef Py_ssize_t d1lo = <Py_ssize_t>ceil(-xi_max * r1 - 1.0)
    cdef Py_ssize_t d1hi = <Py_ssize_t>floor(xi_max * r1)
    cdef Py_ssize_t d2lo = <Py_ssize_t>ceil(-xi_max * r2 - 1.0)
    cdef Py_ssize_t d2hi = <Py_ssize_t>floor(xi_max * r2)
    cdef double a1 = -1.0 / r1
    cdef double a2 = -1.0 / r2
    cdef Py_ssize_t i, j, node, d1, d2, ia, ib, ja, jb, e_k
    cdef double lo1, hi1, lo2, hi2, b1, b2, w00, w10, w01, w11, e
    cdef double G11, G12, G22, g1, g2, det, t1, t2, ft, th1, th2, t, f
    cdef double x1, x2, val, bv, fixed, elo, ehi
    cdef bint inside, fix1
    with nogil:
        for i in range(N1):
            for j in range(N2):
                node = i * N2 + j
                bv = INFINITY
                G11 = Q11[node] * a1 * a1
                G22 = Q22[node] * a2 * a2
                for d1 in range(d1lo, d1hi + 1):
                    lo1 = -xi_max * r1 - d1
                    if lo1 < 0.0:
                        lo1 = 0.0
                    hi1 = xi_max * r1 - d1
                    if hi1 > 1.0:
                        hi1 = 1.0
                    if lo1 > hi1:
                        continue
                    ia = wrap(i + d1, N1)
                    ib = wrap(i + d1 + 1, N1)
                    b1 = -d1 / r1
                    for d2 in range(d2lo, d2hi + 1):
                        lo2 = -xi_max * r2 - d2
                        if lo2 < 0.0:
                            lo2 = 0.0
                        hi2 = xi_max * r2 - d2
                        if hi2 > 1.0:
                            hi2 = 1.0
                        if lo2 > hi2:
                            continue
                        ja = wrap(j + d2, N2)
                        jb = wrap(j + d2 + 1, N2)
                        b2 = -d2 / r2
                        w00 = w[ia * N2 + ja]
                        w10 = w[ib * N2 + ja]
                        w01 = w[ia * N2 + jb]
                        w11 = w[ib * N2 + jb]
                        e = w11 - w10 - w01 + w00
                        G12 = Q12[node] * a1 * a2 + beta * e
                        g1 = a1 * (Q11[node] * b1 + Q12[node] * b2 + q1[node]) + beta * (w10 - w00)
                        g2 = a2 * (Q12[node] * b1 + Q22[node] * b2 + q2[node]) + beta * (w01 - w00)
                        det = G11 * G22 - G12 * G12
                        inside = False
                        ft = INFINITY
                        th1 = 0.0
                        th2 = 0.0
                        if G11 > 0 and det > 0:
                            t1 = (-G22 * g1 + G12 * g2) / det
                            t2 = (G12 * g1 - G11 * g2) / det
                            if t1 >= lo1 and t1 <= hi1 and t2 >= lo2 and t2 <= hi2:
                                inside = True
                                th1 = t1
                                th2 = t2
                        if not inside:
                            for e_k in range(4):
                                if e_k == 0:
                                    fix1 = True
                                    fixed = lo1
                                    elo = lo2
                                    ehi = hi2
                                elif e_k == 1:
                                    fix1 = True
                                    fixed = hi1
                                    elo = lo2
                                    ehi = hi2
                                elif e_k == 2:
                                    fix1 = False
                                    fixed = lo2
                                    elo = lo1
                                    ehi = hi1
                                else:
                                    fix1 = False
                                    fixed = hi2
                                    elo = lo1
                                    ehi = hi1
                                edge_min(G11, G12, G22, g1, g2, fix1, fixed, elo, ehi, &t, &f)
                                if f < ft:
                                    ft = f
                                    if fix1:
                                        th1 = fixed
                                        th2 = t
                                    else:
                                        th1 = t
                                        th2 = fixed
                        x1 = a1 * th1 + b1
                        x2 = a2 * th2 + b2
                        val = (0.5 * (Q11[node] * x1 * x1 + 2 * Q12[node] * x1 * x2 + Q22[node] * x2 * x2)
                               + q1[node] * x1 + q2[node] * x2 + q0[node]
                               + beta * ((1 - th1) * ((1 - th2) * w00 + th2 * w01)
                                         + th1 * ((1 - th2) * w10 + th2 * w11)))
                        if val < bv:
                            bv = val
                            bxi[node, 0] = x1
                            bxi[node, 1] = x2
                            bi[node, 0] = ia
                            bi[node, 1] = ja
                            bth[node, 0] = th1
                            bth[node, 1] = th2
                best[node] = bv
    return out, oxi, oi, oth


cdef void series_eval(const double* x, Py_ssize_t n, double[:, ::1] k, double[::1] a,
                      double[::1] b, double* grad, double* hess, bint need_hess) noexcept nogil:
    cdef Py_ssize_t m = k.shape[0]
    cdef Py_ssize_t t, i, j
    cdef double ph, cs, sn, gw, hw
    for i in range(n):
        grad[i] = 0.0
        if need_hess:
            for j in range(n):
                hess[i * n + j] = 0.0
    for t in range(m):
        ph = 0.0
        for i in range(n):
            ph += k[t, i] * x[i]
        ph *= TWO_PI
        cs = cos(ph)
        sn = sin(ph)
        gw = TWO_PI * (-sn * a[t] + cs * b[t])
        for i in range(n):
            grad[i] += gw * k[t, i]
        if need_hess:
            hw = -TWO_PI * TWO_PI * (cs * a[t] + sn * b[t])
            for i in range(n):
                for j in range(n):
                    hess[i * n + j] += hw * k[t, i] * k[t, j]


cdef void rhs(const double* x, const double* p, Py_ssize_t n, double eps, double[::1] c,
              double[::1] a0, double[:, ::1] Uk, double[::1] Ua, double[::1] Ub,
              double[:, ::1] Fk, double[::1] Fa, double[::1] Fb,
              double* dx, double* dp) noexcept nogil:
    cdef double gU[2]
    cdef double hU[4]
    cdef double gF[2]
    cdef double r[2]
    cdef Py_ssize_t i, j
    series_eval(x, n, Uk, Ua, Ub, gU, hU, True)
    series_eval(x, n, Fk, Fa, Fb, gF, NULL, False)
    for i in range(n):
        r[i] = p[i] - (a0[i] + gU[i])
        dx[i] = r[i]
    for i in range(n):
        dp[i] = gF[i] + eps * (c[i] - p[i])
        for j in range(n):
            dp[i] += hU[i * n + j] * r[j]


def rk4_quadratic(X, P, double ds, Py_ssize_t nsteps, Py_ssize_t stride, double eps,
                  double[::1] c, double[::1] a0, double[:, ::1] Uk, double[::1] Ua,
                  double[::1] Ub, double[:, ::1] Fk, double[::1] Fa, double[::1] Fb,
                  double bound=1e6):
    cdef double[:, ::1] x = np.array(X, dtype=float, order="C")
    cdef double[:, ::1] p = np.array(P, dtype=float, order="C")
    cdef Py_ssize_t m = x.shape[0]
    cdef Py_ssize_t n = x.shape[1]
    cdef Py_ssize_t nrec = nsteps // stride + 1
    xs_arr = np.empty((nrec, m, n))
    ps_arr = np.empty((nrec, m, n))
    cdef double[:, :, ::1] xs = xs_arr
    cdef double[:, :, ::1] ps = ps_arr
    cdef double k1x[2]
    cdef double k1p[2]
    cdef double k2x[2]
    cdef double k2p[2]
    cdef double k3x[2]
    cdef double k3p[2]
    cdef double k4x[2]
    cdef double k4p[2]
    cdef double tx[2]
    cdef double tp[2]
    cdef double h2 = 0.5 * ds
    cdef double h6 = ds / 6.0
    cdef Py_ssize_t step, s, i, rec = 1, done = nsteps
    cdef bint blown = False
    if n > 2:
        raise ValueError("dimension must be 1 or 2")
    for s in range(m):
        for i in range(n):
            xs[0, s, i] = x[s, i]
            ps[0, s, i] = p[s, i]
    with nogil:
        for step in range(1, nsteps + 1):
            for s in range(m):
                rhs(&x[s, 0], &p[s, 0], n, eps, c, a0, Uk, Ua, Ub, Fk, Fa, Fb, k1x, k1p)
                for i in range(n):
                    tx[i] = x[s, i] + h2 * k1x[i]
                    tp[i] = p[s, i] + h2 * k1p[i]
                rhs(tx, tp, n, eps, c, a0, Uk, Ua, Ub, Fk, Fa, Fb, k2x, k2p)
                for i in range(n):
                    tx[i] = x[s, i] + h2 * k2x[i]
                    tp[i] = p[s, i] + h2 * k2p[i]
                rhs(tx, tp, n, eps, c, a0, Uk, Ua, Ub, Fk, Fa, Fb, k3x, k3p)
                for i in range(n):
                    tx[i] = x[s, i] + ds * k3x[i]
                    tp[i] = p[s, i] + ds * k3p[i]
                rhs(tx, tp, n, eps, c, a0, Uk, Ua, Ub, Fk, Fa, Fb, k4x, k4p)
                for i in range(n):
                    x[s, i] = x[s, i] + h6 * (k1x[i] + 2 * k2x[i] + 2 * k3x[i] + k4x[i])
                    p[s, i] = p[s, i] + h6 * (k1p[i] + 2 * k2p[i] + 2 * k3p[i] + k4p[i])
                    if not (fabs(x[s, i]) < bound and fabs(p[s, i]) < bound):
                        blown = True
            if blown:
                done = step - 1
                break
            if step % stride == 0:
                for s in range(m):
                    for i in range(n):
                        xs[rec, s, i] = x[s, i]
                        ps[rec, s, i] = p[s, i]
                rec += 1
    if blown:
        return xs_arr[:rec], ps_arr[:rec], done
    return xs_arr, ps_arr, done

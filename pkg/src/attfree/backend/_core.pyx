# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementation of the hot kernels.

Mirrors np_kernels exactly: same packed-graph layout, same residual and
weighting conventions, same return shapes. Tests assert both backends agree
to rounding error.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, acos, atan2, fabs, sqrt

cnp.import_array()

name = "cython"

NORM_EPS = 1e-8
PARALLEL_EPS = 1e-12
ARCCOS_CLAMP = 1.0 - 1e-9

cdef double C_NORM_EPS = 1e-8
cdef double C_PARALLEL_EPS = 1e-12
cdef double C_ARCCOS_CLAMP = 1.0 - 1e-9


cdef inline double _huber_cost(double s2, double k) noexcept:
    cdef double s
    if k == INFINITY:
        return s2
    s = sqrt(s2)
    if s <= k:
        return s2
    return k * (2.0 * s - k)


cdef inline double _huber_weight(double s2, double k) noexcept:
    cdef double s
    if k == INFINITY:
        return 1.0
    s = sqrt(s2)
    if s <= k:
        return 1.0
    if s < 1e-300:
        s = 1e-300
    return k / s


def linearize(ga, x, bint want_jac=True):
    """Cost plus block-tridiagonal normal equations; see np_kernels.linearize."""
    cdef Py_ssize_t n = ga.n_epochs
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xa = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[::1] xv = xa

    cdef double[::1] dt = np.ascontiguousarray(ga.dt, dtype=np.float64)
    cdef double[::1] grav = np.ascontiguousarray(ga.gravity, dtype=np.float64)
    cdef bint arccos_mode = bool(ga.angle_arccos)

    cdef long long[::1] acc_idx = np.ascontiguousarray(ga.acc_idx, dtype=np.int64)
    cdef double[::1] acc_meas = np.ascontiguousarray(ga.acc_meas, dtype=np.float64)
    cdef double[::1] acc_w = np.ascontiguousarray(ga.acc_w, dtype=np.float64)
    cdef long long[::1] gyr_idx = np.ascontiguousarray(ga.gyr_idx, dtype=np.int64)
    cdef double[::1] gyr_meas = np.ascontiguousarray(ga.gyr_meas, dtype=np.float64)
    cdef double[::1] gyr_w = np.ascontiguousarray(ga.gyr_w, dtype=np.float64)
    cdef long long[::1] mot_idx = np.ascontiguousarray(ga.mot_idx, dtype=np.int64)
    cdef double[::1] mot_w = np.ascontiguousarray(ga.mot_w, dtype=np.float64)
    cdef long long[::1] ba_idx = np.ascontiguousarray(ga.ba_idx, dtype=np.int64)
    cdef double[::1] ba_w = np.ascontiguousarray(ga.ba_w, dtype=np.float64)
    cdef long long[::1] bg_idx = np.ascontiguousarray(ga.bg_idx, dtype=np.int64)
    cdef double[::1] bg_w = np.ascontiguousarray(ga.bg_w, dtype=np.float64)
    cdef long long[::1] pos_idx = np.ascontiguousarray(ga.pos_idx, dtype=np.int64)
    cdef double[:, ::1] pos_z = np.ascontiguousarray(ga.pos_z, dtype=np.float64).reshape(-1, 3)
    cdef double[:, ::1] pos_w = np.ascontiguousarray(ga.pos_w, dtype=np.float64).reshape(-1, 3)
    cdef double pos_k = ga.pos_k
    cdef long long[::1] vel_idx = np.ascontiguousarray(ga.vel_idx, dtype=np.int64)
    cdef double[:, ::1] vel_z = np.ascontiguousarray(ga.vel_z, dtype=np.float64).reshape(-1, 3)
    cdef double[:, ::1] vel_w = np.ascontiguousarray(ga.vel_w, dtype=np.float64).reshape(-1, 3)
    cdef double vel_k = ga.vel_k
    cdef long long[::1] pri_idx = np.ascontiguousarray(ga.pri_idx, dtype=np.int64)
    cdef double[::1] pri_mean = np.ascontiguousarray(ga.pri_mean, dtype=np.float64)
    cdef double[::1] pri_w = np.ascontiguousarray(ga.pri_w, dtype=np.float64)

    cdef cnp.ndarray D_arr = None
    cdef cnp.ndarray U_arr = None
    cdef cnp.ndarray g_arr = None
    cdef double[:, :, ::1] D = None
    cdef double[:, :, ::1] U = None
    cdef double[:, ::1] g = None
    cdef Py_ssize_t nu_blocks = n - 1 if n > 1 else 0
    if want_jac:
        D_arr = np.zeros((n, 8, 8))
        U_arr = np.zeros((nu_blocks, 8, 8))
        g_arr = np.zeros((n, 8))
        D = D_arr
        U = U_arr
        g = g_arr

    cdef double cost = 0.0
    cdef Py_ssize_t k, i, a, b
    cdef double dtv, w, r, wr, o, s2, irls, eff, kv
    cdef double u0, u1, u2, nu
    cdef double jv[3]
    cdef double av[3]
    cdef double bv[3]
    cdef double da[3]
    cdef double db[3]
    cdef double e[3]
    cdef double na, nb, c, uq, clamped, theta, scale, s, denom, jb
    cdef double nx, ny, nz, nh0, nh1, nh2, axx, axv, q, we
    cdef Py_ssize_t ep, comp, lo

    # specific-force magnitude factors
    for k in range(acc_idx.shape[0]):
        i = acc_idx[k]
        dtv = dt[i]
        u0 = (xv[(i + 1) * 8 + 3] - xv[i * 8 + 3]) / dtv - grav[0]
        u1 = (xv[(i + 1) * 8 + 4] - xv[i * 8 + 4]) / dtv - grav[1]
        u2 = (xv[(i + 1) * 8 + 5] - xv[i * 8 + 5]) / dtv - grav[2]
        nu = sqrt(u0 * u0 + u1 * u1 + u2 * u2)
        r = nu - acc_meas[k] + xv[i * 8 + 6]
        w = acc_w[k]
        cost += w * r * r
        if want_jac:
            if nu > C_NORM_EPS:
                jv[0] = u0 / (nu * dtv)
                jv[1] = u1 / (nu * dtv)
                jv[2] = u2 / (nu * dtv)
            else:
                jv[0] = jv[1] = jv[2] = 0.0
            for a in range(3):
                for b in range(3):
                    o = w * jv[a] * jv[b]
                    D[i, 3 + a, 3 + b] += o
                    D[i + 1, 3 + a, 3 + b] += o
                    U[i, 3 + a, 3 + b] -= o
            for a in range(3):
                o = w * jv[a]
                D[i, 3 + a, 6] -= o
                D[i, 6, 3 + a] -= o
                U[i, 6, 3 + a] += o
            D[i, 6, 6] += w
            wr = w * r
            for a in range(3):
                g[i, 3 + a] -= wr * jv[a]
                g[i + 1, 3 + a] += wr * jv[a]
            g[i, 6] += wr

    # swept-angle factors
    for k in range(gyr_idx.shape[0]):
        i = gyr_idx[k]
        for a in range(3):
            av[a] = xv[i * 8 + 3 + a]
            bv[a] = xv[(i + 1) * 8 + 3 + a]
        na = sqrt(av[0] * av[0] + av[1] * av[1] + av[2] * av[2])
        nb = sqrt(bv[0] * bv[0] + bv[1] * bv[1] + bv[2] * bv[2])
        c = av[0] * bv[0] + av[1] * bv[1] + av[2] * bv[2]
        theta = 0.0
        jb = 0.0
        da[0] = da[1] = da[2] = 0.0
        db[0] = db[1] = db[2] = 0.0
        if na >= C_NORM_EPS and nb >= C_NORM_EPS:
            jb = 1.0
            if arccos_mode:
                uq = c / (na * nb)
                clamped = uq
                if clamped > C_ARCCOS_CLAMP:
                    clamped = C_ARCCOS_CLAMP
                elif clamped < -C_ARCCOS_CLAMP:
                    clamped = -C_ARCCOS_CLAMP
                theta = acos(clamped)
                if fabs(uq) <= C_ARCCOS_CLAMP:
                    scale = -1.0 / sqrt(1.0 - uq * uq)
                    for a in range(3):
                        da[a] = scale * (bv[a] / (na * nb) - c * av[a] / (na * na * na * nb))
                        db[a] = scale * (av[a] / (na * nb) - c * bv[a] / (nb * nb * nb * na))
            else:
                nx = av[1] * bv[2] - av[2] * bv[1]
                ny = av[2] * bv[0] - av[0] * bv[2]
                nz = av[0] * bv[1] - av[1] * bv[0]
                s = sqrt(nx * nx + ny * ny + nz * nz)
                theta = atan2(s, c)
                if s > C_PARALLEL_EPS * na * nb:
                    denom = s * s + c * c
                    nh0 = nx / s
                    nh1 = ny / s
                    nh2 = nz / s
                    # b x n_hat and n_hat x a
                    da[0] = (c * (bv[1] * nh2 - bv[2] * nh1) - s * bv[0]) / denom
                    da[1] = (c * (bv[2] * nh0 - bv[0] * nh2) - s * bv[1]) / denom
                    da[2] = (c * (bv[0] * nh1 - bv[1] * nh0) - s * bv[2]) / denom
                    db[0] = (c * (nh1 * av[2] - nh2 * av[1]) - s * av[0]) / denom
                    db[1] = (c * (nh2 * av[0] - nh0 * av[2]) - s * av[1]) / denom
                    db[2] = (c * (nh0 * av[1] - nh1 * av[0]) - s * av[2]) / denom
            r = theta - gyr_meas[k] + xv[i * 8 + 7]
        else:
            r = 0.0
        w = gyr_w[k]
        cost += w * r * r
        if want_jac:
            for a in range(3):
                for b in range(3):
                    D[i, 3 + a, 3 + b] += w * da[a] * da[b]
                    D[i + 1, 3 + a, 3 + b] += w * db[a] * db[b]
                    U[i, 3 + a, 3 + b] += w * da[a] * db[b]
            for a in range(3):
                D[i, 3 + a, 7] += w * jb * da[a]
                D[i, 7, 3 + a] += w * jb * da[a]
                U[i, 7, 3 + a] += w * jb * db[a]
            D[i, 7, 7] += w * jb * jb
            wr = w * r
            for a in range(3):
                g[i, 3 + a] += wr * da[a]
                g[i + 1, 3 + a] += wr * db[a]
            g[i, 7] += wr * jb

    # motion factors
    for k in range(mot_idx.shape[0]):
        i = mot_idx[k]
        dtv = dt[i]
        w = mot_w[k]
        s2 = 0.0
        for a in range(3):
            e[a] = (xv[(i + 1) * 8 + a] - xv[i * 8 + a]) / dtv \
                - 0.5 * (xv[(i + 1) * 8 + 3 + a] + xv[i * 8 + 3 + a])
            s2 += e[a] * e[a]
        cost += w * s2
        if want_jac:
            axx = w / (dtv * dtv)
            axv = w / (2.0 * dtv)
            q = 0.25 * w
            for a in range(3):
                D[i, a, a] += axx
                D[i + 1, a, a] += axx
                U[i, a, a] -= axx
                D[i, a, 3 + a] += axv
                D[i, 3 + a, a] += axv
                D[i + 1, a, 3 + a] -= axv
                D[i + 1, 3 + a, a] -= axv
                U[i, a, 3 + a] += axv
                U[i, 3 + a, a] -= axv
                D[i, 3 + a, 3 + a] += q
                D[i + 1, 3 + a, 3 + a] += q
                U[i, 3 + a, 3 + a] += q
                we = w * e[a]
                g[i, a] -= we / dtv
                g[i, 3 + a] -= 0.5 * we
                g[i + 1, a] += we / dtv
                g[i + 1, 3 + a] -= 0.5 * we

    # bias random-walk links (slot 6 then slot 7)
    for k in range(ba_idx.shape[0]):
        i = ba_idx[k]
        w = ba_w[k]
        r = xv[(i + 1) * 8 + 6] - xv[i * 8 + 6]
        cost += w * r * r
        if want_jac:
            D[i, 6, 6] += w
            D[i + 1, 6, 6] += w
            U[i, 6, 6] -= w
            g[i, 6] -= w * r
            g[i + 1, 6] += w * r
    for k in range(bg_idx.shape[0]):
        i = bg_idx[k]
        w = bg_w[k]
        r = xv[(i + 1) * 8 + 7] - xv[i * 8 + 7]
        cost += w * r * r
        if want_jac:
            D[i, 7, 7] += w
            D[i + 1, 7, 7] += w
            U[i, 7, 7] -= w
            g[i, 7] -= w * r
            g[i + 1, 7] += w * r

    # GNSS position then velocity factors (robustified)
    for k in range(pos_idx.shape[0]):
        i = pos_idx[k]
        s2 = 0.0
        for a in range(3):
            e[a] = xv[i * 8 + a] - pos_z[k, a]
            s2 += pos_w[k, a] * e[a] * e[a]
        cost += _huber_cost(s2, pos_k)
        if want_jac:
            irls = _huber_weight(s2, pos_k)
            for a in range(3):
                eff = irls * pos_w[k, a]
                D[i, a, a] += eff
                g[i, a] += eff * e[a]
    for k in range(vel_idx.shape[0]):
        i = vel_idx[k]
        s2 = 0.0
        for a in range(3):
            e[a] = xv[i * 8 + 3 + a] - vel_z[k, a]
            s2 += vel_w[k, a] * e[a] * e[a]
        cost += _huber_cost(s2, vel_k)
        if want_jac:
            irls = _huber_weight(s2, vel_k)
            for a in range(3):
                eff = irls * vel_w[k, a]
                D[i, 3 + a, 3 + a] += eff
                g[i, 3 + a] += eff * e[a]

    # scalar priors
    for k in range(pri_idx.shape[0]):
        lo = pri_idx[k]
        w = pri_w[k]
        r = xv[lo] - pri_mean[k]
        cost += w * r * r
        if want_jac:
            ep = lo // 8
            comp = lo % 8
            D[ep, comp, comp] += w
            g[ep, comp] += w * r

    if want_jac:
        return cost, D_arr, U_arr, g_arr.reshape(-1)
    return cost, None, None, None


def evaluate_cost(ga, x):
    return linearize(ga, x, False)[0]


cdef int _cholesky(double[:, ::1] A, double[:, ::1] L, Py_ssize_t m) noexcept:
    """Lower Cholesky of A into L; returns 0, or -1 if not positive definite."""
    cdef Py_ssize_t i, j, p
    cdef double s
    for i in range(m):
        for j in range(i + 1):
            s = A[i, j]
            for p in range(j):
                s -= L[i, p] * L[j, p]
            if i == j:
                if s <= 0.0:
                    return -1
                L[i, i] = sqrt(s)
            else:
                L[i, j] = s / L[j, j]
        for j in range(i + 1, m):
            L[i, j] = 0.0
    return 0


cdef void _chol_solve(double[:, ::1] L, double[::1] rhs, double[::1] out, Py_ssize_t m) noexcept:
    """Solve L L^T out = rhs."""
    cdef Py_ssize_t i, p
    cdef double s
    for i in range(m):
        s = rhs[i]
        for p in range(i):
            s -= L[i, p] * out[p]
        out[i] = s / L[i, i]
    for i in range(m - 1, -1, -1):
        s = out[i]
        for p in range(i + 1, m):
            s -= L[p, i] * out[p]
        out[i] = s / L[i, i]


def solve_block_tridiag(D, U, b):
    """Block Thomas elimination with per-block Cholesky; see np_kernels."""
    cdef cnp.ndarray Dw_arr = np.array(D, dtype=np.float64, copy=True)
    cdef cnp.ndarray bw_arr = np.array(b, dtype=np.float64, copy=True)
    cdef cnp.ndarray U_arr = np.ascontiguousarray(U, dtype=np.float64)
    cdef double[:, :, ::1] Dw = Dw_arr
    cdef double[:, ::1] bw = bw_arr
    cdef double[:, :, ::1] Uv = U_arr
    cdef Py_ssize_t n = Dw.shape[0]
    cdef Py_ssize_t m = Dw.shape[1]

    cdef cnp.ndarray M_arr = np.empty((n - 1 if n > 1 else 0, m, m))
    cdef double[:, :, ::1] M = M_arr
    cdef cnp.ndarray x_arr = np.empty((n, m))
    cdef double[:, ::1] x = x_arr

    L_arr = np.empty((m, m))
    col_arr = np.empty(m)
    sol_arr = np.empty(m)
    y_arr = np.empty(m)
    cdef double[:, ::1] L = L_arr
    cdef double[::1] col = col_arr
    cdef double[::1] sol = sol_arr
    cdef double[::1] y = y_arr

    cdef Py_ssize_t i, a, bb, p
    cdef double s

    for i in range(n):
        if i:
            # Dw[i] -= U[i-1]^T M[i-1];  bw[i] -= U[i-1]^T y
            for a in range(m):
                for bb in range(m):
                    s = 0.0
                    for p in range(m):
                        s += Uv[i - 1, p, a] * M[i - 1, p, bb]
                    Dw[i, a, bb] -= s
                s = 0.0
                for p in range(m):
                    s += Uv[i - 1, p, a] * y[p]
                bw[i, a] -= s
        if _cholesky(Dw[i], L, m) != 0:
            return None, False
        if i < n - 1:
            for bb in range(m):
                for a in range(m):
                    col[a] = Uv[i, a, bb]
                _chol_solve(L, col, sol, m)
                for a in range(m):
                    M[i, a, bb] = sol[a]
        _chol_solve(L, bw[i], y, m)
        for a in range(m):
            bw[i, a] = y[a]

    for a in range(m):
        x[n - 1, a] = bw[n - 1, a]
    for i in range(n - 2, -1, -1):
        for a in range(m):
            s = bw[i, a]
            for p in range(m):
                s -= M[i, a, p] * x[i + 1, p]
            x[i, a] = s
    return x_arr, True

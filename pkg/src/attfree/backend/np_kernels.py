"""Vectorized numpy implementation of the hot kernels.

Reference fallback for the compiled extension: linearize the packed graph
into block-tridiagonal normal equations, evaluate the robustified cost,
and solve the damped system by block Thomas elimination. Both backends
must produce the same numbers to rounding error; tests enforce it.
"""

from __future__ import annotations

import math

import numpy as np

NORM_EPS = 1e-8
PARALLEL_EPS = 1e-12
ARCCOS_CLAMP = 1.0 - 1e-9

name = "numpy"


def _huber_cost(s2: np.ndarray, k: float) -> np.ndarray:
    """Robustified contribution given squared whitened norms."""
    if not math.isfinite(k):
        return s2
    s = np.sqrt(s2)
    return np.where(s <= k, s2, k * (2.0 * s - k))


def _huber_weight(s2: np.ndarray, k: float) -> np.ndarray:
    if not math.isfinite(k):
        return np.ones_like(s2)
    s = np.sqrt(s2)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(s <= k, 1.0, k / np.maximum(s, 1e-300))
    return w


def _angle_terms(a: np.ndarray, b: np.ndarray, arccos_mode: bool):
    """Angles between row pairs plus gradients; degenerate rows zeroed."""
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    ok = (na >= NORM_EPS) & (nb >= NORM_EPS)
    c = np.einsum("ij,ij->i", a, b)
    theta = np.zeros(na.shape[0])
    d_a = np.zeros_like(a)
    d_b = np.zeros_like(b)
    if arccos_mode:
        with np.errstate(divide="ignore", invalid="ignore"):
            u = np.where(ok, c / np.maximum(na * nb, 1e-300), 1.0)
        clamped = np.clip(u, -ARCCOS_CLAMP, ARCCOS_CLAMP)
        theta = np.where(ok, np.arccos(clamped), 0.0)
        grad_ok = ok & (np.abs(u) <= ARCCOS_CLAMP)
        scale = np.zeros_like(u)
        scale[grad_ok] = -1.0 / np.sqrt(1.0 - u[grad_ok] ** 2)
        nanb = np.maximum(na * nb, 1e-300)
        d_a = scale[:, None] * (b / nanb[:, None] - (c / (np.maximum(na, 1e-300) ** 3 * np.maximum(nb, 1e-300)))[:, None] * a)
        d_b = scale[:, None] * (a / nanb[:, None] - (c / (np.maximum(nb, 1e-300) ** 3 * np.maximum(na, 1e-300)))[:, None] * b)
        d_a[~grad_ok] = 0.0
        d_b[~grad_ok] = 0.0
    else:
        n = np.cross(a, b)
        s = np.linalg.norm(n, axis=1)
        theta = np.where(ok, np.arctan2(s, c), 0.0)
        grad_ok = ok & (s > PARALLEL_EPS * na * nb)
        denom = np.maximum(s * s + c * c, 1e-300)
        n_hat = n / np.maximum(s, 1e-300)[:, None]
        d_a = (c[:, None] * np.cross(b, n_hat) - s[:, None] * b) / denom[:, None]
        d_b = (c[:, None] * np.cross(n_hat, a) - s[:, None] * a) / denom[:, None]
        d_a[~grad_ok] = 0.0
        d_b[~grad_ok] = 0.0
    return theta, d_a, d_b, ok


def linearize(ga, x: np.ndarray, want_jac: bool = True):
    """Evaluate cost and, when asked, the normal-equation blocks.

    Returns (cost, D, U, g) with D the (n, 8, 8) diagonal blocks, U the
    (n-1, 8, 8) super-diagonal blocks, and g the (8n,) gradient-side vector
    sum(w * J^T Omega r). Robust reweighting is already folded in. With
    want_jac=False, D/U/g are None.
    """
    n = ga.n_epochs
    blocks = x.reshape(n, 8)
    X = blocks[:, 0:3]
    V = blocks[:, 3:6]
    BA = blocks[:, 6]
    BG = blocks[:, 7]
    cost = 0.0
    if want_jac:
        D = np.zeros((n, 8, 8))
        U = np.zeros((max(n - 1, 0), 8, 8))
        g = np.zeros((n, 8))
    else:
        D = U = g = None

    eye3 = np.eye(3)

    # --- specific-force magnitude factors ---
    if ga.acc_idx.size:
        i = ga.acc_idx
        dt = ga.dt[i]
        u = (V[i + 1] - V[i]) / dt[:, None] - ga.gravity
        nu = np.linalg.norm(u, axis=1)
        r = nu - ga.acc_meas + BA[i]
        w = ga.acc_w
        cost += float(np.sum(w * r * r))
        if want_jac:
            ok = nu > NORM_EPS
            jv = np.zeros_like(u)
            jv[ok] = u[ok] / (nu[ok] * dt[ok])[:, None]  # d r / d v_{i+1}
            outer = np.einsum("k,ka,kb->kab", w, jv, jv)
            D[i, 3:6, 3:6] += outer
            D[i + 1, 3:6, 3:6] += outer
            U[i, 3:6, 3:6] -= outer
            wjv = w[:, None] * jv
            D[i, 3:6, 6] -= wjv
            D[i, 6, 3:6] -= wjv
            U[i, 6, 3:6] += wjv
            D[i, 6, 6] += w
            wr = w * r
            g[i, 3:6] -= wr[:, None] * jv
            g[i + 1, 3:6] += wr[:, None] * jv
            g[i, 6] += wr

    # --- swept-angle factors ---
    if ga.gyr_idx.size:
        i = ga.gyr_idx
        theta, d_a, d_b, ok = _angle_terms(V[i], V[i + 1], bool(ga.angle_arccos))
        r = np.where(ok, theta - ga.gyr_meas + BG[i], 0.0)
        jb = np.where(ok, 1.0, 0.0)  # d r / d b_gyro
        w = ga.gyr_w
        cost += float(np.sum(w * r * r))
        if want_jac:
            D[i, 3:6, 3:6] += np.einsum("k,ka,kb->kab", w, d_a, d_a)
            D[i + 1, 3:6, 3:6] += np.einsum("k,ka,kb->kab", w, d_b, d_b)
            U[i, 3:6, 3:6] += np.einsum("k,ka,kb->kab", w, d_a, d_b)
            wda = (w * jb)[:, None] * d_a
            wdb = (w * jb)[:, None] * d_b
            D[i, 3:6, 7] += wda
            D[i, 7, 3:6] += wda
            U[i, 7, 3:6] += wdb
            D[i, 7, 7] += w * jb * jb
            wr = w * r
            g[i, 3:6] += wr[:, None] * d_a
            g[i + 1, 3:6] += wr[:, None] * d_b
            g[i, 7] += wr * jb

    # --- motion factors ---
    if ga.mot_idx.size:
        i = ga.mot_idx
        dt = ga.dt[i]
        e = (X[i + 1] - X[i]) / dt[:, None] - 0.5 * (V[i + 1] + V[i])
        w = ga.mot_w
        cost += float(np.sum(w * np.sum(e * e, axis=1)))
        if want_jac:
            a_xx = w / (dt * dt)
            a_xv = w / (2.0 * dt)
            D[i, 0:3, 0:3] += a_xx[:, None, None] * eye3
            D[i + 1, 0:3, 0:3] += a_xx[:, None, None] * eye3
            U[i, 0:3, 0:3] -= a_xx[:, None, None] * eye3
            # cross terms between position and velocity
            D[i, 0:3, 3:6] += a_xv[:, None, None] * eye3
            D[i, 3:6, 0:3] += a_xv[:, None, None] * eye3
            D[i + 1, 0:3, 3:6] -= a_xv[:, None, None] * eye3
            D[i + 1, 3:6, 0:3] -= a_xv[:, None, None] * eye3
            U[i, 0:3, 3:6] += a_xv[:, None, None] * eye3
            U[i, 3:6, 0:3] -= a_xv[:, None, None] * eye3
            D[i, 3:6, 3:6] += (0.25 * w)[:, None, None] * eye3
            D[i + 1, 3:6, 3:6] += (0.25 * w)[:, None, None] * eye3
            U[i, 3:6, 3:6] += (0.25 * w)[:, None, None] * eye3
            we = w[:, None] * e
            g[i, 0:3] -= we / dt[:, None]
            g[i, 3:6] -= 0.5 * we
            g[i + 1, 0:3] += we / dt[:, None]
            g[i + 1, 3:6] -= 0.5 * we

    # --- bias random-walk links ---
    for idx_arr, w_arr, slot in ((ga.ba_idx, ga.ba_w, 6), (ga.bg_idx, ga.bg_w, 7)):
        if idx_arr.size:
            i = idx_arr
            series = BA if slot == 6 else BG
            r = series[i + 1] - series[i]
            cost += float(np.sum(w_arr * r * r))
            if want_jac:
                D[i, slot, slot] += w_arr
                D[i + 1, slot, slot] += w_arr
                U[i, slot, slot] -= w_arr
                g[i, slot] -= w_arr * r
                g[i + 1, slot] += w_arr * r

    # --- GNSS position / velocity factors (robustified) ---
    for idx_arr, z, w3, k, lo in (
        (ga.pos_idx, ga.pos_z, ga.pos_w, ga.pos_k, 0),
        (ga.vel_idx, ga.vel_z, ga.vel_w, ga.vel_k, 3),
    ):
        if idx_arr.size:
            i = idx_arr
            src = X if lo == 0 else V
            e = src[i] - z
            s2 = np.sum(w3 * e * e, axis=1)
            cost += float(np.sum(_huber_cost(s2, k)))
            if want_jac:
                irls = _huber_weight(s2, k)
                eff = irls[:, None] * w3
                rows = np.arange(3)
                D[i[:, None, None], (lo + rows)[None, :, None], (lo + rows)[None, None, :]] += np.einsum(
                    "ka,ab->kab", eff, np.eye(3)
                )
                g[i, lo : lo + 3] += eff * e

    # --- scalar priors ---
    if ga.pri_idx.size:
        r = x[ga.pri_idx] - ga.pri_mean
        cost += float(np.sum(ga.pri_w * r * r))
        if want_jac:
            ep = ga.pri_idx // 8
            comp = ga.pri_idx % 8
            np.add.at(D, (ep, comp, comp), ga.pri_w)
            np.add.at(g, (ep, comp), ga.pri_w * r)

    if want_jac:
        return cost, D, U, g.reshape(-1)
    return cost, None, None, None


def evaluate_cost(ga, x: np.ndarray) -> float:
    return linearize(ga, x, want_jac=False)[0]


def solve_block_tridiag(D: np.ndarray, U: np.ndarray, b: np.ndarray):
    """Solve the symmetric block-tridiagonal system by forward elimination.

    D holds the (n, 8, 8) diagonal blocks, U the (n-1, 8, 8) blocks coupling
    epoch i to i+1, b the (n, 8) right-hand side. Returns (x, ok); ok is
    False when a pivot block is not positive definite.
    """
    n = D.shape[0]
    Dw = D.copy()
    bw = b.copy()
    M = np.empty_like(U)
    for i in range(n):
        if i:
            Dw[i] -= U[i - 1].T @ M[i - 1]
            bw[i] -= U[i - 1].T @ mprev
        try:
            np.linalg.cholesky(Dw[i])
        except np.linalg.LinAlgError:
            return None, False
        if i < n - 1:
            M[i] = np.linalg.solve(Dw[i], U[i])
        mprev = np.linalg.solve(Dw[i], bw[i])
        bw[i] = mprev
    x = np.empty_like(b)
    x[n - 1] = bw[n - 1]
    for i in range(n - 2, -1, -1):
        x[i] = bw[i] - M[i] @ x[i + 1]
    return x, True

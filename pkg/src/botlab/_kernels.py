"""Compiled inner loops for the quadrature-heavy likelihood terms.

Bearing of a perturbed target: with ``d = S - O = r (cos b, sin b)`` and a
noise node ``u``, rotating into the line-of-sight frame gives

    atan2(d_y + u_y, d_x + u_x) = b + atan(u_perp / (r + u_par))

The ratio is small whenever the noise is small against the range, and a
short odd series then reproduces ``atan`` to rounding error.
"""
import math

import numba
import numpy as np

SERIES_LIMIT = 0.1
TWO_PI = 2.0 * math.pi


@numba.njit(cache=True, inline="always")
def _atan_offset(perp, par_r):
    if par_r > 0.0:
        q = perp / par_r
        if abs(q) < SERIES_LIMIT:
            q2 = q * q
            return q * (1.0 + q2 * (-1.0 / 3.0 + q2 * (1.0 / 5.0 + q2 * (-1.0 / 7.0 + q2 * (
                1.0 / 9.0 + q2 * (-1.0 / 11.0 + q2 * (1.0 / 13.0 + q2 * (-1.0 / 15.0))))))))
    return math.atan2(perp, par_r)


@numba.njit(cache=True, inline="always")
def _wrap(a):
    if a > math.pi or a <= -math.pi:
        a -= TWO_PI * math.floor((a + math.pi) / TWO_PI)
        if a <= -math.pi:
            a += TWO_PI
    return a


@numba.njit(cache=True)
def log_marginal(dx, dy, z, nodes, log_w, sigma):
    """``log sum_j w_j phi_sigma(z_k - Psi_kj)`` for each k (without the 1/(sigma sqrt(2 pi)))."""
    n = dx.shape[0]
    nj = nodes.shape[0]
    out = np.empty(n)
    q = np.empty(nj)
    inv = 1.0 / sigma
    for k in range(n):
        r = math.hypot(dx[k], dy[k])
        c = dx[k] / r
        s = dy[k] / r
        base = _wrap(z[k] - math.atan2(dy[k], dx[k]))
        qmax = -np.inf
        for j in range(nj):
            par = c * nodes[j, 0] + s * nodes[j, 1]
            perp = -s * nodes[j, 0] + c * nodes[j, 1]
            res = _wrap(base - _atan_offset(perp, r + par)) * inv
            v = log_w[j] - 0.5 * res * res
            q[j] = v
            if v > qmax:
                qmax = v
        acc = 0.0
        for j in range(nj):
            acc += math.exp(q[j] - qmax)
        out[k] = qmax + math.log(acc)
    return out


@numba.njit(cache=True)
def fisher_at_time(dx, dy, e, nodes, weights, dx_true, dy_true, v_nodes, v_weights, sigma):
    """Expected outer product of the score at one time.

    ``(dx, dy)`` is ``S_theta(t) - O(t)``, ``(dx_true, dy_true)`` the same at
    the law generating the data. ``e`` holds the basis values at t.
    """
    p = e.shape[0]
    m = 2 * p
    nj = nodes.shape[0]
    nv = v_nodes.shape[0]
    out = np.zeros((m, m))
    # bearing offsets and position gradients at the theta nodes
    r = math.hypot(dx, dy)
    c = dx / r
    s = dy / r
    beta = math.atan2(dy, dx)
    off = np.empty(nj)
    gx = np.empty(nj)
    gy = np.empty(nj)
    log_w = np.empty(nj)
    for j in range(nj):
        ax = dx + nodes[j, 0]
        ay = dy + nodes[j, 1]
        r2 = ax * ax + ay * ay
        gx[j] = -ay / r2
        gy[j] = ax / r2
        par = c * nodes[j, 0] + s * nodes[j, 1]
        perp = -s * nodes[j, 0] + c * nodes[j, 1]
        off[j] = _atan_offset(perp, r + par)
        log_w[j] = math.log(weights[j])
    rt = math.hypot(dx_true, dy_true)
    ct = dx_true / rt
    st = dy_true / rt
    beta_t = math.atan2(dy_true, dx_true)
    q = np.empty(nj)
    res = np.empty(nj)
    score = np.empty(m)
    inv2 = 1.0 / (sigma * sigma)
    for i in range(nj):
        par = ct * nodes[i, 0] + st * nodes[i, 1]
        perp = -st * nodes[i, 0] + ct * nodes[i, 1]
        psi_true = _wrap(beta_t - beta + _atan_offset(perp, rt + par))
        for l in range(nv):
            zrel = psi_true + sigma * v_nodes[l]
            qmax = -np.inf
            for j in range(nj):
                rj = _wrap(zrel - off[j])
                res[j] = rj
                v = log_w[j] - 0.5 * rj * rj * inv2
                q[j] = v
                if v > qmax:
                    qmax = v
            den = 0.0
            sx = 0.0
            sy = 0.0
            for j in range(nj):
                w = math.exp(q[j] - qmax)
                den += w
                sx += w * res[j] * gx[j]
                sy += w * res[j] * gy[j]
            sx *= inv2 / den
            sy *= inv2 / den
            for a in range(p):
                score[a] = sx * e[a]
                score[p + a] = sy * e[a]
            wt = weights[i] * v_weights[l]
            for a in range(m):
                for b in range(m):
                    out[a, b] += wt * score[a] * score[b]
    return out


@numba.njit(cache=True)
def fisher_grid(dx, dy, e, nodes, weights, dx_true, dy_true, v_nodes, v_weights, sigma):
    """Sum over grid times of :func:`fisher_at_time`."""
    m = 2 * e.shape[1]
    out = np.zeros((m, m))
    for k in range(dx.shape[0]):
        out += fisher_at_time(dx[k], dy[k], e[k], nodes, weights, dx_true[k], dy_true[k],
                              v_nodes, v_weights, sigma)
    return out

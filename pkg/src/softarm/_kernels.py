"""Compiled inner loops for the dynamic model.

Everything here works on flat float arrays so numba can compile it. The
packed parameter vector ``par`` has the layout given by the ``P_*``
indices below; :class:`softarm.dynamics.Model` builds it.

The pose is evaluated directly from the elongations using
``bx = phi cos(theta)`` and ``by = phi sin(theta)``, which are linear in
``l``. Together with ``sinc`` this keeps every expression finite and
accurate through the straight configuration, so central differences do
not need a special case there.
"""

import math

import numpy as np
from numba import njit

P_L0, P_R, P_M, P_IXX, P_MTIP, P_GX, P_GY, P_GZ = 0, 1, 2, 3, 4, 5, 6, 7
P_H1, P_H2, P_KAPPA, P_ALPHA, P_BETA, P_GAMMA = 8, 9, 10, 11, 12, 13
N_PAR = 14

SQRT3 = math.sqrt(3.0)


@njit(cache=True)
def _sinc(x):
    if abs(x) < 1e-8:
        return 1.0 - x * x / 6.0
    return math.sin(x) / x


@njit(cache=True)
def pose(l1, l2, l3, xi, L0, r, P, R):
    """Tip-frame rotation ``R`` and position ``P`` at ``xi`` (written in place)."""
    bx = (l2 + l3 - 2.0 * l1) / (3.0 * r)
    by = SQRT3 * (l3 - l2) / (3.0 * r)
    phi = math.sqrt(bx * bx + by * by)
    length = L0 + (l1 + l2 + l3) / 3.0
    x = xi * phi
    sc = _sinc(x)
    half = _sinc(0.5 * x)
    g1 = 0.5 * half * half  # (1 - cos x) / x^2
    P[0] = length * xi * xi * g1 * bx
    P[1] = length * xi * xi * g1 * by
    P[2] = length * xi * sc
    # Rodrigues about k = (-sin th, cos th, 0): sin(x) k and (1 - cos x)(k k^T - I)
    a = -sc * xi * by
    b = sc * xi * bx
    c2 = g1 * xi * xi
    p2 = bx * bx + by * by
    R[0, 0] = 1.0 + c2 * (by * by - p2)
    R[0, 1] = -c2 * bx * by
    R[0, 2] = b
    R[1, 0] = -c2 * bx * by
    R[1, 1] = 1.0 + c2 * (bx * bx - p2)
    R[1, 2] = -a
    R[2, 0] = -b
    R[2, 1] = a
    R[2, 2] = 1.0 - c2 * p2


@njit(cache=True)
def partials(q, xs, L0, r, h, dP, dR):
    """Central differences of ``P`` and ``R`` w.r.t. each elongation at every ``xs``.

    ``dP`` has shape (3, n, 3) and ``dR`` (3, n, 3, 3); index 0 is the coordinate.
    """
    n = xs.shape[0]
    Pp = np.empty(3)
    Pm = np.empty(3)
    Rp = np.empty((3, 3))
    Rm = np.empty((3, 3))
    qp = np.empty(3)
    qm = np.empty(3)
    inv = 0.5 / h
    for j in range(3):
        for i in range(3):
            qp[i] = q[i]
            qm[i] = q[i]
        qp[j] += h
        qm[j] -= h
        for k in range(n):
            pose(qp[0], qp[1], qp[2], xs[k], L0, r, Pp, Rp)
            pose(qm[0], qm[1], qm[2], xs[k], L0, r, Pm, Rm)
            for a in range(3):
                dP[j, k, a] = (Pp[a] - Pm[a]) * inv
                for b in range(3):
                    dR[j, k, a, b] = (Rp[a, b] - Rm[a, b]) * inv


@njit(cache=True)
def inertia_gravity(q, par, xs, ws, M, G, J):
    """Inertia ``M``, gravity force ``G`` and tip Jacobian ``J`` at ``q``.

    ``xs`` holds the quadrature nodes followed by a final 1.0 for the tip;
    ``ws`` holds the weights of the quadrature nodes only.
    """
    n = ws.shape[0]
    m = par[P_M]
    ixx = par[P_IXX]
    mtip = par[P_MTIP]
    gx, gy, gz = par[P_GX], par[P_GY], par[P_GZ]
    dP = np.empty((3, n + 1, 3))
    dR = np.empty((3, n + 1, 3, 3))
    partials(q, xs, par[P_L0], par[P_R], par[P_H1], dP, dR)
    for j in range(3):
        for a in range(3):
            J[a, j] = dP[j, n, a]
    for j in range(3):
        for k in range(j, 3):
            mv = 0.0
            mw = 0.0
            for i in range(n):
                sv = 0.0
                for a in range(3):
                    sv += dP[j, i, a] * dP[k, i, a]
                sw = 0.0
                for a in range(3):
                    for b in range(3):
                        sw += dR[j, i, a, b] * dR[k, i, a, b]
                mv += ws[i] * sv
                mw += ws[i] * sw
            tip = 0.0
            for a in range(3):
                tip += J[a, j] * J[a, k]
            val = m * mv + ixx * mw + mtip * tip
            M[j, k] = val
            M[k, j] = val
    # generalised gravity = gradient of -int g.P; J_v^T R^T g collapses to dP^T g
    for j in range(3):
        acc = 0.0
        for i in range(n):
            acc += ws[i] * (dP[j, i, 0] * gx + dP[j, i, 1] * gy + dP[j, i, 2] * gz)
        G[j] = -m * acc - mtip * (J[0, j] * gx + J[1, j] * gy + J[2, j] * gz)


@njit(cache=True)
def inertia_derivative(q, par, xs, ws, dM):
    """``dM[i] = dM/dq_i`` by central differences of the inertia matrix."""
    h = par[P_H2]
    Mp = np.empty((3, 3))
    Mm = np.empty((3, 3))
    G = np.empty(3)
    J = np.empty((3, 3))
    qp = np.empty(3)
    qm = np.empty(3)
    for i in range(3):
        for a in range(3):
            qp[a] = q[a]
            qm[a] = q[a]
        qp[i] += h
        qm[i] -= h
        inertia_gravity(qp, par, xs, ws, Mp, G, J)
        inertia_gravity(qm, par, xs, ws, Mm, G, J)
        for a in range(3):
            for b in range(3):
                dM[i, a, b] = (Mp[a, b] - Mm[a, b]) / (2.0 * h)


@njit(cache=True)
def coriolis_from_derivative(dM, qd, C):
    """Christoffel construction ``C[k,j] = sum_i G_ijk qd_i``."""
    for k in range(3):
        for j in range(3):
            acc = 0.0
            for i in range(3):
                acc += 0.5 * (dM[i, k, j] + dM[j, k, i] - dM[k, i, j]) * qd[i]
            C[k, j] = acc


@njit(cache=True)
def chol_solve(M, b, x):
    """Solve ``M x = b`` for symmetric positive definite 3x3 ``M``.

    Returns False when a pivot is not positive.
    """
    L = np.zeros((3, 3))
    for i in range(3):
        for j in range(i + 1):
            s = M[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            if i == j:
                if not s > 0.0:
                    return False
                L[i, i] = math.sqrt(s)
            else:
                L[i, j] = s / L[j, j]
    y = np.empty(3)
    for i in range(3):
        s = b[i]
        for k in range(i):
            s -= L[i, k] * y[k]
        y[i] = s / L[i, i]
    for i in range(2, -1, -1):
        s = y[i]
        for k in range(i + 1, 3):
            s -= L[k, i] * x[k]
        x[i] = s / L[i, i]
    return True


@njit(cache=True)
def hysteresis_rate(qd, h, alpha, beta, gamma, out):
    for i in range(3):
        sg = 0.0
        prod = qd[i] * h[i]
        if prod > 0.0:
            sg = 1.0
        elif prod < 0.0:
            sg = -1.0
        out[i] = qd[i] * (alpha - (beta * sg + gamma) * abs(h[i]))


@njit(cache=True)
def rhs(x, tau, fext, par, K, D, xs, ws, out):
    """Time derivative of the state ``x = [q, qd, h]``."""
    q = x[0:3]
    qd = x[3:6]
    h = x[6:9]
    M = np.empty((3, 3))
    G = np.empty(3)
    J = np.empty((3, 3))
    dM = np.empty((3, 3, 3))
    C = np.empty((3, 3))
    inertia_gravity(q, par, xs, ws, M, G, J)
    inertia_derivative(q, par, xs, ws, dM)
    coriolis_from_derivative(dM, qd, C)
    b = np.empty(3)
    kappa = par[P_KAPPA]
    for i in range(3):
        acc = tau[i] - G[i] - kappa * h[i]
        for a in range(3):
            acc += J[a, i] * fext[a]
        for j in range(3):
            acc -= (C[i, j] + D[i, j]) * qd[j] + K[i, j] * q[j]
        b[i] = acc
    qdd = np.empty(3)
    ok = chol_solve(M, b, qdd)
    if not ok:
        for i in range(9):
            out[i] = np.nan
        return
    hd = np.empty(3)
    hysteresis_rate(qd, h, par[P_ALPHA], par[P_BETA], par[P_GAMMA], hd)
    for i in range(3):
        out[i] = qd[i]
        out[3 + i] = qdd[i]
        out[6 + i] = hd[i]


@njit(cache=True)
def rk4_step(x, tau, fext, dt, par, K, D, xs, ws, out):
    """One classical Runge-Kutta step with ``tau`` and ``fext`` held constant."""
    k1 = np.empty(9)
    k2 = np.empty(9)
    k3 = np.empty(9)
    k4 = np.empty(9)
    tmp = np.empty(9)
    rhs(x, tau, fext, par, K, D, xs, ws, k1)
    for i in range(9):
        tmp[i] = x[i] + 0.5 * dt * k1[i]
    rhs(tmp, tau, fext, par, K, D, xs, ws, k2)
    for i in range(9):
        tmp[i] = x[i] + 0.5 * dt * k2[i]
    rhs(tmp, tau, fext, par, K, D, xs, ws, k3)
    for i in range(9):
        tmp[i] = x[i] + dt * k3[i]
    rhs(tmp, tau, fext, par, K, D, xs, ws, k4)
    for i in range(9):
        out[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])


@njit(cache=True)
def simulate_open_loop(x0, taus, dt, substeps, par, K, D, xs, ws):
    """Integrate with a zero-order-hold input sequence ``taus`` (N, 3).

    Returns the (N + 1, 9) state history sampled at the input rate. Rows
    after a blow-up are NaN.
    """
    n = taus.shape[0]
    out = np.full((n + 1, 9), np.nan)
    x = x0.copy()
    nxt = np.empty(9)
    fext = np.zeros(3)
    h = dt / substeps
    out[0] = x
    for k in range(n):
        for _ in range(substeps):
            rk4_step(x, taus[k], fext, h, par, K, D, xs, ws, nxt)
            x[:] = nxt
        finite = True
        for i in range(9):
            if not math.isfinite(x[i]):
                finite = False
        if not finite:
            return out
        out[k + 1] = x
    return out

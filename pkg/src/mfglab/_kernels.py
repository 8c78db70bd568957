"""Time-stepping kernels for the 1-d discrete MFG.

Discrete state equation (implicit diffusion, explicit centered transport)::

    m[k+1] = Ainv @ (m[k] + dt * div(m[k] * alpha[k])),   Ainv = (I - dt*Lap)^-1

Running cost per step: ``dt * (h * sum(m*(alpha^2/2 - V)) + Fcal(m))`` with
``Fcal(m) = c0 + h*lin@m + h^2 * m@ker@m``. The backward sweep is the exact
adjoint of this recursion; with ``alpha = D u~`` it is the HJB step
``u[k] = u~ + dt*(F - H(x, D u~))``, ``u~ = Ainv @ u[k+1]``.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _matvec(A, x, out):
    n = x.shape[0]
    for i in range(n):
        s = 0.0
        for j in range(n):
            s += A[i, j] * x[j]
        out[i] = s


@njit(cache=True)
def forward_fp(m0, alpha, Ainv, dt, h):
    K, n = alpha.shape
    m = np.empty((K + 1, n))
    m[0] = m0
    rhs = np.empty(n)
    inv2h = 0.5 / h
    for k in range(K):
        for i in range(n):
            ip = i + 1 if i + 1 < n else 0
            im = i - 1 if i > 0 else n - 1
            rhs[i] = m[k, i] + dt * inv2h * (m[k, ip] * alpha[k, ip] - m[k, im] * alpha[k, im])
        _matvec(Ainv, rhs, m[k + 1])
    return m


@njit(cache=True)
def running_cost(m, alpha, dt, h, V, c0, lin, ker):
    K, n = alpha.shape
    total = 0.0
    for k in range(K):
        s = 0.0
        q = 0.0
        for i in range(n):
            s += m[k, i] * (0.5 * alpha[k, i] * alpha[k, i] - V[i])
            q += lin[i] * m[k, i]
            r = 0.0
            for j in range(n):
                r += ker[i, j] * m[k, j]
            q += h * m[k, i] * r
        total += dt * (h * s + c0 + h * q)
    return total


@njit(cache=True)
def step_costs(m, alpha, h, V, c0, lin, ker):
    """Per-step running cost rate (without the ``dt`` factor)."""
    K, n = alpha.shape
    out = np.empty(K)
    for k in range(K):
        s = 0.0
        q = 0.0
        for i in range(n):
            s += m[k, i] * (0.5 * alpha[k, i] * alpha[k, i] - V[i])
            q += lin[i] * m[k, i]
            r = 0.0
            for j in range(n):
                r += ker[i, j] * m[k, j]
            q += h * m[k, i] * r
        out[k] = h * s + c0 + h * q
    return out


@njit(cache=True)
def _coupling_grad(mk, h, lin, ker, out):
    n = mk.shape[0]
    avg = 0.0
    for i in range(n):
        r = 0.0
        for j in range(n):
            r += ker[i, j] * mk[j]
        out[i] = lin[i] + 2.0 * h * r
        avg += h * out[i] * mk[i]
    for i in range(n):
        out[i] -= avg


@njit(cache=True)
def backward_adjoint(m, alpha, uK, Ainv, dt, h, V, lin, ker, best_response):
    """Adjoint sweep.

    Returns ``(ut, u, grad, alpha_used)`` where ``ut[k] = Ainv @ u[k+1]`` is the
    value field that drives step ``k`` and ``grad`` is the gradient of the
    discrete cost with respect to ``alpha``. With ``best_response`` the control
    is replaced on the fly by ``D ut`` (the HJB solve of fictitious play).
    """
    K1, n = m.shape
    K = K1 - 1
    u = np.empty((K + 1, n))
    ut = np.empty((K + 1, n))
    grad = np.empty((K, n))
    used = np.empty((K + 1, n))
    F = np.empty(n)
    g = np.empty(n)
    u[K] = uK
    ut[K] = uK
    inv2h = 0.5 / h
    for i in range(n):
        ip = i + 1 if i + 1 < n else 0
        im = i - 1 if i > 0 else n - 1
        used[K, i] = (uK[ip] - uK[im]) * inv2h
    for k in range(K - 1, -1, -1):
        _matvec(Ainv, u[k + 1], ut[k])
        _coupling_grad(m[k], h, lin, ker, F)
        for i in range(n):
            ip = i + 1 if i + 1 < n else 0
            im = i - 1 if i > 0 else n - 1
            g[i] = (ut[k, ip] - ut[k, im]) * inv2h
        for i in range(n):
            a = g[i] if best_response else alpha[k, i]
            used[k, i] = a
            grad[k, i] = dt * h * m[k, i] * (a - g[i])
            u[k, i] = ut[k, i] + dt * (0.5 * a * a - V[i] - a * g[i] + F[i])
    return ut, u, grad, used

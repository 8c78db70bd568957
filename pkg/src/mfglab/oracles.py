"""Reference computations that share no code with the solvers they check."""

from __future__ import annotations

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq, linprog


def w1_linprog(a: np.ndarray, b: np.ndarray) -> float:
    """W1 between node masses ``a`` and ``b`` on the ``n``-cycle as a transport LP.

    Points sit at ``i/n``; the ground cost is the geodesic distance on the circle.
    """
    n = a.size
    x = np.arange(n) / n
    diff = np.abs(x[:, None] - x[None, :])
    cost = np.minimum(diff, 1.0 - diff).ravel()
    rows = np.zeros((2 * n, n * n))
    for i in range(n):
        rows[i, i * n:(i + 1) * n] = 1.0
        rows[n + i, i::n] = 1.0
    # the last column constraint is implied by the others; dropping it keeps
    # round-off in the two totals from making the LP infeasible
    res = linprog(
        cost, A_eq=rows[:-1], b_eq=np.concatenate([a, b])[:-1], bounds=(0, None), method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if not res.success:
        raise RuntimeError(res.message)
    return float(res.fun)


def _monodromy_trace(mu: float, potential, amplitude: float) -> float:
    # Floquet matrix of phi'' = -(mu + amplitude*V(x)/2) phi over one period
    def rhs(x, y):
        q = mu + 0.5 * amplitude * potential(x)
        return [y[1], -q * y[0], y[3], -q * y[2]]

    sol = solve_ivp(rhs, (0.0, 1.0), [1.0, 0.0, 0.0, 1.0], rtol=1e-12, atol=1e-14)
    return float(sol.y[0, -1] + sol.y[3, -1])


def ergodic_constant_1d(potential=lambda x: np.cos(2 * np.pi * x), amplitude: float = 1.0) -> float:
    """Ergodic constant of ``-v'' + |v'|^2/2 + amplitude*V = lam`` on the circle.

    With ``v = -2 log phi`` the equation becomes the periodic eigenproblem
    ``-phi'' - (amplitude*V/2) phi = mu phi`` with ``lam = -2 mu``. The ground
    state ``mu0`` is the lowest root of ``trace(monodromy) = 2``, bracketed
    below by ``-max|V|/2`` and above by ``0``.
    """
    xs = np.linspace(0, 1, 257)
    vmax = float(np.max(np.abs(potential(xs)))) * abs(amplitude)
    lo, hi = -0.5 * vmax - 1e-9, 1e-12
    f = lambda mu: _monodromy_trace(mu, potential, amplitude) - 2.0  # noqa: E731
    # on (lo, mu0) the trace exceeds 2; scan for the first sign change
    grid = np.linspace(lo, hi, 41)
    vals = [f(m) for m in grid]
    for a, b, fa, fb in zip(grid, grid[1:], vals, vals[1:]):
        if fa == 0.0:
            return -2.0 * a
        if fa * fb < 0:
            return -2.0 * brentq(f, a, b, xtol=1e-15)
    raise RuntimeError("no ground state found in the bracket")

"""Ergodic cell problem for N symmetric particles on the 1-d torus.

The corrector ``v`` lives on the tensor grid ``(T^1)^N`` and solves

    -sum_i Lap_i v + (1/N) sum_i [H(x_i, N D_i v) - F(m_x)] = lambda_N

with ``m_x`` the empirical measure of the particle positions. It is obtained
by marching ``dv/dt = sum_i Lap_i v - (1/N) sum_i H(x_i, N D_i v) + F(m_x)``
to a state where ``v`` only shifts by ``-lambda_N`` per unit time.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .model import ModelConfig, coupling_value_density, resample_model
from .torus import Field, ProbMeasure, TorusGrid, VectorField, _check_same, dumps

log = logging.getLogger(__name__)

DEFAULT_BUDGET = 2**24


class BudgetError(ValueError):
    pass


class CellProblemError(RuntimeError):
    pass


@dataclass(frozen=True)
class ParticleGrid:
    N: int
    n: int
    budget: int = DEFAULT_BUDGET

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("need at least one particle")
        if self.nodes > self.budget:
            raise BudgetError(f"n^N = {self.nodes} exceeds the budget {self.budget}")

    @property
    def d(self) -> int:
        return 1

    @property
    def nodes(self) -> int:
        return self.n**self.N

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.N

    @property
    def spacing(self) -> float:
        return 1.0 / self.n


def glivenko_rate(N: int, d: int = 1) -> float:
    """Mean-field sampling rate for the empirical measure of ``N`` iid points."""
    if d < 4:
        return N**-0.5
    if d == 4:
        return N**-0.5 * math.log(N)
    return N ** (-2.0 / d)


@dataclass(eq=False)
class ParticleSolution:
    pgrid: ParticleGrid
    v: np.ndarray
    lambda_N: float
    normalization_gap: float
    bernstein_sup: float
    symmetry_gap: float
    glivenko_rate: float
    model: ModelConfig
    marching_time: float = 0.0
    steps: int = 0
    history: list = field(default_factory=list)

    @property
    def N(self) -> int:
        return self.pgrid.N

    @property
    def n(self) -> int:
        return self.pgrid.n


# -- tensor-grid stencils --------------------------------------------------


def _partial(v: np.ndarray, axis: int, h: float) -> np.ndarray:
    return (np.roll(v, -1, axis=axis) - np.roll(v, 1, axis=axis)) / (2 * h)


def _partial2(v: np.ndarray, axis: int, h: float) -> np.ndarray:
    return (np.roll(v, -1, axis=axis) - 2 * v + np.roll(v, 1, axis=axis)) / h**2


def _empirical_coupling(cfg: ModelConfig, N: int) -> np.ndarray:
    """``F(m_x)`` at every node of the tensor grid."""
    n = cfg.grid.n
    shape = (n,) * N
    if cfg.coupling_kind == "constant":
        return np.full(shape, float(cfg.c0))
    idx = np.indices(shape)
    if cfg.coupling_kind == "linear":
        return sum(cfg.linear[idx[i]] for i in range(N)) / N
    total = np.zeros(shape)
    for i in range(N):
        for j in range(N):
            total += cfg.kernel[idx[i], idx[j]]
    return total / N**2


def _potential_sum(cfg: ModelConfig, N: int) -> np.ndarray:
    idx = np.indices((cfg.grid.n,) * N)
    return sum(cfg.potential[idx[i]] for i in range(N))


def _lap_symbol(n: int, N: int, h: float) -> np.ndarray:
    k = np.arange(n)
    one = -4.0 / h**2 * np.sin(np.pi * k / n) ** 2
    total = np.zeros((n,) * N)
    for i in range(N):
        shape = [1] * N
        shape[i] = n
        total = total + one.reshape(shape)
    return total


def hamiltonian_term(cfg: ModelConfig, v: np.ndarray, h: float, vsum: np.ndarray) -> np.ndarray:
    """``(1/N) sum_i H(x_i, N D_i v)`` on the tensor grid."""
    N = v.ndim
    kinetic = np.zeros_like(v)
    for i in range(N):
        p = N * _partial(v, i, h)
        kinetic += 0.5 * p * p
    return (kinetic + vsum) / N


def solve_cell_problem(
    cfg: ModelConfig,
    N: int,
    n: int,
    tol: float = 1e-10,
    max_time: float = 50.0,
    *,
    dt: float | None = None,
    budget: int = DEFAULT_BUDGET,
    discount: float = 0.0,
) -> ParticleSolution:
    """March the N-particle HJB to its ergodic regime.

    ``lambda_N`` is minus the node average of the per-unit-time increment once
    the spread of increments across nodes is at most ``tol``. With
    ``discount > 0`` the marching adds ``-discount * v`` and ``lambda_N`` is
    read off as ``discount * mean(v)`` instead (debug variant).
    """
    pgrid = ParticleGrid(N, n, budget)
    cfg = resample_model(cfg, n)
    h = pgrid.spacing
    Fm = _empirical_coupling(cfg, N)
    vsum = _potential_sum(cfg, N)
    symbol = _lap_symbol(n, N, h)
    v = np.zeros(pgrid.shape)

    t = 0.0
    steps = 0
    history = []
    lam = np.nan
    while True:
        grad_max = max(float(np.max(np.abs(N * _partial(v, i, h)))) for i in range(N))
        step = dt if dt is not None else min(0.05, 0.5 * h / max(grad_max, 1e-12))
        rhs = v + step * (-hamiltonian_term(cfg, v, h, vsum) + Fm - discount * v)
        v_new = np.real(np.fft.ifftn(np.fft.fftn(rhs) / (1.0 - step * symbol)))
        if discount > 0:
            lam_nodes = np.full(v.shape, discount * v_new.mean())
            spread = float(np.max(np.abs(v_new - v))) / step
        else:
            inc = (v_new - v) / step
            lam_nodes = -inc
            spread = float(np.ptp(inc))
        lam = float(np.mean(lam_nodes))
        v = v_new
        t += step
        steps += 1
        history.append(spread)
        if spread <= tol and steps > 1:
            break
        if t > max_time:
            raise CellProblemError(
                f"cell problem N={N} n={n} not converged by t={t:.2f} (spread {spread:.2e})"
            )
    v = v - v.mean()

    bern = bernstein_value(v, h)
    sym = _symmetry_gap(v)
    return ParticleSolution(
        pgrid, v, lam, float(abs(v.mean())), bern, sym, glivenko_rate(N), cfg,
        marching_time=t, steps=steps, history=history,
    )


def bernstein_value(v: np.ndarray, h: float) -> float:
    N = v.ndim
    total = np.zeros_like(v)
    for i in range(N):
        total += _partial(v, i, h) ** 2
    return float(N * np.max(total))


def _symmetry_gap(v: np.ndarray) -> float:
    gap = 0.0
    for perm in itertools.permutations(range(v.ndim)):
        gap = max(gap, float(np.max(np.abs(v - np.transpose(v, perm)))))
    return gap


def bernstein_check(sol: ParticleSolution) -> float:
    """``max_x N sum_i |D_i v(x)|^2``; finite and bounded in N for the Bernstein estimate."""
    return sol.bernstein_sup


def empirical_measure(grid: TorusGrid, index) -> ProbMeasure:
    dens = np.zeros(grid.n)
    for i in index:
        dens[i] += 1.0
    return ProbMeasure.normalized(grid, dens)


def lipschitz_wasserstein_check(sol: ParticleSolution, pair_samples: int = 200, seed: int = 0) -> float:
    """Largest ``|v(x) - v(y)| / W1(m_x, m_y)`` over random node pairs; zero-distance pairs are skipped."""
    from .torus import circular_cdf_gap

    rng = np.random.default_rng(seed)
    n, N = sol.n, sol.N
    h = 1.0 / n
    worst = 0.0
    for _ in range(pair_samples):
        x = rng.integers(0, n, size=N)
        y = rng.integers(0, n, size=N)
        hx = np.bincount(x, minlength=n) / (N * h)
        hy = np.bincount(y, minlength=n) / (N * h)
        dist = circular_cdf_gap(hx, hy, h)
        if dist <= 1e-14:
            continue
        worst = max(worst, abs(sol.v[tuple(x)] - sol.v[tuple(y)]) / dist)
    return worst


# -- projection onto measures ----------------------------------------------


def _contract_rest(arr: np.ndarray, weights: np.ndarray, h: float) -> np.ndarray:
    """Integrate every axis except the first against ``weights``."""
    out = arr
    while out.ndim > 1:
        out = h * np.tensordot(out, weights, axes=([out.ndim - 1], [0]))
    return out


def project_WN(sol: ParticleSolution, m: ProbMeasure) -> tuple[float, VectorField, Field]:
    """``W(m) = ∫ v dm^N`` with ``D_m W`` and ``div_y D_m W``.

    By symmetry of ``v`` both derivatives reduce to ``N`` times a single-slot
    integral over the remaining ``N-1`` coordinates.
    """
    grid = TorusGrid(1, sol.n)
    _check_same(grid, m.grid)
    h = grid.spacing
    dens = m.density
    slot = _contract_rest(sol.v, dens, h)  # function of y = x_1
    value = float(h * slot @ dens)
    dslot = _contract_rest(_partial(sol.v, 0, h), dens, h)
    lslot = _contract_rest(_partial2(sol.v, 0, h), dens, h)
    N = sol.N
    return value, VectorField(grid, (N * dslot)[None, :]), Field(grid, N * lslot)


def flat_derivative_WN(sol: ParticleSolution, m: ProbMeasure) -> Field:
    """``δW/δm(m, y) = N ∫ v(y, x_2..x_N) prod m(dx_i)`` (not normalized)."""
    grid = TorusGrid(1, sol.n)
    return Field(grid, sol.N * _contract_rest(sol.v, m.density, grid.spacing))


def subsolution_residual(cfg: ModelConfig, sol: ParticleSolution, m: ProbMeasure) -> float:
    """``-∫ div D_mW dm + ∫ [H(y, D_mW) - F(m)] dm - lambda_N``."""
    model = sol.model
    _, dm, div_dm = project_WN(sol, m)
    h = m.grid.spacing
    p = dm.values[0]
    lhs = -h * div_dm.values @ m.density + h * (0.5 * p * p + model.potential) @ m.density
    lhs -= coupling_value_density(model, m.density)
    return float(lhs - sol.lambda_N)


def fit_residual_constant(residuals: dict[int, list[float]]) -> float:
    """Smallest ``C`` with ``max(residual, 0) <= C * eps_N`` for every entry."""
    C = 0.0
    for N, values in residuals.items():
        pos = max([max(r, 0.0) for r in values] or [0.0])
        C = max(C, pos / glivenko_rate(N))
    return C


def dump_solution(sol: ParticleSolution) -> str:
    """Text dump of ``v`` with the torus-field header extended by ``N=``."""
    head = f"# torus-field v1 dim={sol.N} n={sol.n} kind=field N={sol.N} lambda_N={sol.lambda_N!r}"
    body = "\n".join(repr(float(x)) for x in sol.v.ravel())
    return head + "\n" + body + "\n"


def cell_row(sol: ParticleSolution) -> dict:
    return {
        "N": sol.N,
        "n": sol.n,
        "lambda_N": sol.lambda_N,
        "bernstein_sup": sol.bernstein_sup,
        "symmetry_gap": sol.symmetry_gap,
        "normalization_gap": sol.normalization_gap,
    }

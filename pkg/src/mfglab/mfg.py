"""Finite-horizon potential MFG on the 1-d torus.

Both solvers work on the same discrete problem: minimize
``sum_k dt * [∫ H*(x, alpha_k) dm_k + F(m_k)] + Phi(m_K)`` over controls
``alpha_k`` subject to the implicit-diffusion Fokker-Planck recursion in
:mod:`mfglab._kernels`. The backward sweep is the exact adjoint of that
recursion, so the fictitious-play HJB solve and the gradient used by the
variational solver coincide.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np
from scipy.optimize import minimize

from . import _kernels as kern
from .model import ModelConfig
from .torus import Field, ProbMeasure, TorusGrid, VectorField, save

log = logging.getLogger(__name__)

CFL_SAFETY = 0.5


class SolverError(RuntimeError):
    """Raised when a solver fails to reach its tolerance."""

    def __init__(self, message: str, gap: float = float("nan"), history=None):
        super().__init__(message)
        self.gap = gap
        self.history = list(history or [])


class CFLError(ValueError):
    pass


class InvalidInputError(ValueError):
    pass


class TerminalCost(Protocol):
    def value(self, m: ProbMeasure) -> float: ...

    def derivative(self, m: ProbMeasure) -> np.ndarray | None: ...


@dataclass(eq=False)
class Trajectory:
    """Discrete path ``(m, alpha, u)`` at times ``t0, t0+dt, ..., T``.

    ``alpha[k]`` is the control used on ``[t_k, t_k+1)``; the last row is the
    terminal feedback ``D_pH(x, Du(T))`` and carries no cost. ``u[k]`` is the
    value field whose centered gradient gives ``alpha[k]`` (PDE solver only).
    """

    grid: TorusGrid
    times: np.ndarray
    m: np.ndarray
    alpha: np.ndarray | None
    u: np.ndarray | None = None
    fp_residual: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.m = np.asarray(self.m, dtype=float)
        if self.m.shape != (self.times.size, self.grid.n):
            raise InvalidInputError(f"m has shape {self.m.shape}, expected {(self.times.size, self.grid.n)}")
        for k in range(self.m.shape[0]):
            ProbMeasure(self.grid, self.m[k])  # validates mass and sign
        if self.alpha is not None and self.alpha.shape != self.m.shape:
            raise InvalidInputError("alpha must have one row per stored time")

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else 0.0

    @property
    def steps(self) -> int:
        return self.times.size - 1

    @property
    def horizon(self) -> float:
        return float(self.times[-1] - self.times[0])

    @property
    def w(self) -> np.ndarray | None:
        return None if self.alpha is None else self.m * self.alpha

    def measure(self, k: int) -> ProbMeasure:
        return ProbMeasure(self.grid, self.m[k])

    def measures(self) -> list[ProbMeasure]:
        return [self.measure(k) for k in range(self.times.size)]

    def control(self, k: int) -> VectorField:
        return VectorField(self.grid, self.alpha[k][None, :])

    def value_field(self, k: int) -> Field:
        if self.u is None:
            raise InvalidInputError("trajectory carries no value function")
        return Field(self.grid, self.u[k])

    def index_of(self, t: float) -> int:
        k = int(round((t - self.times[0]) / self.dt))
        if not 0 <= k < self.times.size or abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise InvalidInputError(f"time {t} is not a stored time")
        return k


@dataclass
class SolveReport:
    value: float
    iterations: int
    gap: float
    method: str
    history: list = field(default_factory=list)
    fixed_point_residual: float = float("nan")


# -- discretization helpers ------------------------------------------------


def diffusion_inverse(grid: TorusGrid, dt: float) -> np.ndarray:
    """Dense ``(I - dt*Lap)^-1`` for the periodic 3-point Laplacian."""
    n, h = grid.n, grid.spacing
    A = np.eye(n) * (1 + 2 * dt / h**2)
    idx = np.arange(n)
    A[idx, (idx + 1) % n] -= dt / h**2
    A[idx, (idx - 1) % n] -= dt / h**2
    return np.ascontiguousarray(np.linalg.inv(A))


def time_grid(t0: float, T: float, dt: float) -> tuple[np.ndarray, int]:
    steps = int(round((T - t0) / dt))
    if steps < 0 or abs(steps * dt - (T - t0)) > 1e-9 * max(1.0, T):
        raise InvalidInputError(f"horizon {T - t0} is not a multiple of dt={dt}")
    return t0 + dt * np.arange(steps + 1), steps


def _check_m0(cfg: ModelConfig, m0: ProbMeasure) -> np.ndarray:
    if m0.grid != cfg.grid:
        raise InvalidInputError("m0 lives on a different grid")
    dens = np.asarray(m0.density, dtype=float)
    if dens.sum() <= 0:
        raise InvalidInputError("m0 has zero total mass")
    return dens


def check_cfl(grid: TorusGrid, dt: float, alpha_max: float) -> None:
    courant = dt * alpha_max / grid.spacing
    if courant > CFL_SAFETY:
        raise CFLError(f"CFL violated: dt*|alpha|/h = {courant:.3f} > {CFL_SAFETY}")


def heat_flow(cfg: ModelConfig, m0: ProbMeasure, T: float, dt: float, t0: float = 0.0) -> Trajectory:
    times, K = time_grid(t0, T, dt)
    alpha = np.zeros((K, cfg.grid.n))
    m = kern.forward_fp(_check_m0(cfg, m0), alpha, diffusion_inverse(cfg.grid, dt), dt, cfg.grid.spacing)
    return Trajectory(cfg.grid, times, m, np.zeros((K + 1, cfg.grid.n)))


def forward(cfg: ModelConfig, m0: ProbMeasure, alpha: np.ndarray, dt: float) -> np.ndarray:
    """Density path driven by the controls ``alpha`` (one row per step)."""
    return kern.forward_fp(
        _check_m0(cfg, m0), np.ascontiguousarray(alpha, dtype=float),
        diffusion_inverse(cfg.grid, dt), dt, cfg.grid.spacing,
    )


def _coupling_args(cfg: ModelConfig):
    return cfg.potential, cfg.coupling_c0, cfg.linear, cfg.kernel


def fp_residual(grid: TorusGrid, m: np.ndarray, alpha: np.ndarray, dt: float) -> float:
    """Weak Fokker-Planck defect: sup over ``|psi| <= 1`` of the step residual, per unit time."""
    h = grid.spacing
    K = m.shape[0] - 1
    if K == 0:
        return 0.0
    flux = m[:-1] * alpha[:K]
    div = (np.roll(flux, -1, axis=1) - np.roll(flux, 1, axis=1)) / (2 * h)
    lap = (np.roll(m[1:], -1, axis=1) - 2 * m[1:] + np.roll(m[1:], 1, axis=1)) / h**2
    res = m[1:] - dt * lap - m[:-1] - dt * div
    return float(np.max(np.sum(np.abs(res), axis=1) * h) / dt)


# -- cost ------------------------------------------------------------------


def evaluate_cost(cfg: ModelConfig, traj: Trajectory, terminal: TerminalCost | None = None) -> float:
    """Running cost of ``traj`` under the solver's own time quadrature.

    Each interval ``[t_k, t_k+1)`` is charged with the state and control at
    its left end, which is the rule the discrete problem is posed with.
    """
    if traj.alpha is None:
        raise InvalidInputError("trajectory has no control")
    K = traj.steps
    V, c0, lin, ker = _coupling_args(cfg)
    total = kern.running_cost(traj.m, np.ascontiguousarray(traj.alpha[:K]), traj.dt, cfg.grid.spacing, V, c0, lin, ker)
    if terminal is not None:
        total += terminal.value(traj.measure(K))
    return float(total)


def step_costs(cfg: ModelConfig, traj: Trajectory) -> np.ndarray:
    """Running cost rate on each interval."""
    V, c0, lin, ker = _coupling_args(cfg)
    return kern.step_costs(traj.m, np.ascontiguousarray(traj.alpha[: traj.steps]), cfg.grid.spacing, V, c0, lin, ker)


# -- variational solver ----------------------------------------------------


def _terminal_grad(terminal: TerminalCost | None, grid: TorusGrid, mK: np.ndarray) -> tuple[float, np.ndarray]:
    if terminal is None:
        return 0.0, np.zeros(grid.n)
    meas = ProbMeasure(grid, np.maximum(mK, 0.0) if mK.min() > -1e-12 else mK)
    d = terminal.derivative(meas)
    return terminal.value(meas), np.zeros(grid.n) if d is None else np.asarray(d, dtype=float)


def solve_variational(
    cfg: ModelConfig,
    grid: TorusGrid,
    m0: ProbMeasure,
    T: float,
    dt: float,
    tol: float = 1e-10,
    *,
    t0: float = 0.0,
    terminal: TerminalCost | None = None,
    alpha_init: np.ndarray | None = None,
    max_iter: int = 5000,
) -> tuple[Trajectory, SolveReport]:
    """Minimize the discrete cost directly over the controls with L-BFGS.

    The control is scaled by ``sqrt(dt*h)`` so the Hessian is close to
    ``diag(m)``. Convergence is declared when the Fenchel gap
    ``sum_k dt ∫ |alpha_k - D u~_k|^2 / 2 dm_k`` is at most ``tol``.
    """
    if grid != cfg.grid:
        raise InvalidInputError("grid does not match the model grid")
    dens0 = _check_m0(cfg, m0)
    times, K = time_grid(t0, T, dt)
    n, h = grid.n, grid.spacing
    Ainv = diffusion_inverse(grid, dt)
    V, c0, lin, ker = _coupling_args(cfg)
    scale = np.sqrt(dt * h)

    if K == 0:
        tv, _ = _terminal_grad(terminal, grid, dens0)
        traj = Trajectory(grid, times, dens0[None, :], np.zeros((1, n)), meta={"method": "variational"})
        return traj, SolveReport(tv, 0, 0.0, "variational")

    def fun(x):
        alpha = x.reshape(K, n) / scale
        m = kern.forward_fp(dens0, alpha, Ainv, dt, h)
        tv, uK = _terminal_grad(terminal, grid, m[K])
        J = kern.running_cost(m, alpha, dt, h, V, c0, lin, ker) + tv
        _, _, grad, _ = kern.backward_adjoint(m, alpha, uK, Ainv, dt, h, V, lin, ker, False)
        return J, grad.ravel() / scale

    x = np.zeros(K * n) if alpha_init is None else np.asarray(alpha_init, dtype=float)[:K].ravel() * scale
    history = []
    iterations = 0
    gap = np.inf
    for _ in range(8):
        res = minimize(
            fun, x, jac=True, method="L-BFGS-B",
            options={"maxiter": max_iter, "maxcor": 30, "ftol": 0.0, "gtol": 1e-14 * max(1.0, 1 / scale)},
        )
        x = res.x
        iterations += int(res.nit)
        gap = _fenchel_gap(x.reshape(K, n) / scale, dens0, Ainv, dt, grid, cfg, terminal)
        history.append(gap)
        if gap <= tol or res.nit == 0:
            break
    alpha = x.reshape(K, n) / scale
    m = kern.forward_fp(dens0, alpha, Ainv, dt, h)
    if gap > tol:
        raise SolverError(f"variational solver stalled with gap {gap:.3e} > {tol:.1e}", gap, history)
    tv, uK = _terminal_grad(terminal, grid, m[K])
    ut, _, _, used = kern.backward_adjoint(m, alpha, uK, Ainv, dt, h, V, lin, ker, False)
    full = np.vstack([alpha, used[K][None, :]])
    traj = Trajectory(
        grid, times, m, full, u=ut, fp_residual=fp_residual(grid, m, full, dt),
        meta={"method": "variational", "dt": dt, "model": cfg.digest()},
    )
    value = evaluate_cost(cfg, traj, terminal)
    return traj, SolveReport(value, iterations, gap, "variational", history)


def _fenchel_gap(alpha, dens0, Ainv, dt, grid, cfg, terminal) -> float:
    h = grid.spacing
    V, _, lin, ker = _coupling_args(cfg)
    m = kern.forward_fp(dens0, alpha, Ainv, dt, h)
    _, uK = _terminal_grad(terminal, grid, m[-1])
    _, _, _, best = kern.backward_adjoint(m, alpha, uK, Ainv, dt, h, V, lin, ker, True)
    K = alpha.shape[0]
    return float(0.5 * dt * h * np.sum(m[:K] * (alpha - best[:K]) ** 2))


# -- fictitious play -------------------------------------------------------


def solve_fbs(
    cfg: ModelConfig,
    grid: TorusGrid,
    m0: ProbMeasure,
    T: float,
    dt: float,
    tol: float = 1e-10,
    *,
    t0: float = 0.0,
    max_iter: int = 20000,
    m_init: np.ndarray | None = None,
    fixed_point_tol: float = 1e-6,
) -> tuple[Trajectory, SolveReport]:
    """Fictitious play on the forward-backward system with ``u(T) = 0``.

    Each round solves the HJB backward against the averaged density path,
    pushes ``m0`` forward with the feedback ``D_pH(x, Du)``, and averages the
    new path into the running mean with weight ``1/round``. Stops when two
    successive best-response values differ by at most ``tol`` and the best
    response is within ``fixed_point_tol`` (sup over time of the L1 distance)
    of the averaged path it answered.
    """
    if grid != cfg.grid:
        raise InvalidInputError("grid does not match the model grid")
    dens0 = _check_m0(cfg, m0)
    times, K = time_grid(t0, T, dt)
    n, h = grid.n, grid.spacing
    Ainv = diffusion_inverse(grid, dt)
    V, c0, lin, ker = _coupling_args(cfg)
    zeros = np.zeros((K, n))
    mbar = kern.forward_fp(dens0, zeros, Ainv, dt, h) if m_init is None else np.array(m_init, dtype=float)
    uK = np.zeros(n)
    _, _, _, first = kern.backward_adjoint(mbar, zeros, uK, Ainv, dt, h, V, lin, ker, True)
    check_cfl(grid, dt, float(np.max(np.abs(first))))

    history: list[float] = []
    prev = np.inf
    for it in range(1, max_iter + 1):
        ut, _, _, alpha = kern.backward_adjoint(mbar, zeros, uK, Ainv, dt, h, V, lin, ker, True)
        check_cfl(grid, dt, float(np.max(np.abs(alpha))))
        m = kern.forward_fp(dens0, np.ascontiguousarray(alpha[:K]), Ainv, dt, h)
        value = kern.running_cost(m, np.ascontiguousarray(alpha[:K]), dt, h, V, c0, lin, ker)
        fixed = float(np.max(np.sum(np.abs(m - mbar), axis=1)) * h)
        mbar += (m - mbar) / it
        gap = abs(value - prev)
        history.append(gap)
        prev = value
        if gap <= tol and fixed <= fixed_point_tol and it > 1:
            break
    else:
        raise SolverError(f"fictitious play did not converge in {max_iter} rounds", history[-1], history)

    traj = Trajectory(
        grid, times, m, alpha, u=ut, fp_residual=fp_residual(grid, m, alpha, dt),
        meta={"method": "fbs", "dt": dt, "model": cfg.digest()},
    )
    report = SolveReport(float(value), it, gap, "fbs", history, fixed_point_residual=fixed)
    return traj, report


# -- dynamic programming ---------------------------------------------------


def dynamic_programming_gap(
    cfg: ModelConfig, m0: ProbMeasure, T: float, t_mid: float, dt: float, tol: float = 1e-10
) -> float:
    """``|U(0,m0) - [cost on [0,t_mid] + U(t_mid, m(t_mid))]|`` from fresh solves."""
    traj, rep = solve_variational(cfg, cfg.grid, m0, T, dt, tol)
    k = traj.index_of(t_mid)
    head = float(np.sum(step_costs(cfg, traj)[:k]) * dt)
    _, tail = solve_variational(cfg, cfg.grid, traj.measure(k), T, dt, tol, t0=t_mid)
    return abs(rep.value - (head + tail.value))


# -- persistence -----------------------------------------------------------


def save_trajectory(traj: Trajectory, directory: str | Path, cfg: ModelConfig | None = None, value: float | None = None) -> Path:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    meta = {
        "n": traj.grid.n,
        "dt": traj.dt,
        "t0": float(traj.times[0]),
        "T": float(traj.times[-1]),
        "steps": traj.steps,
        "model": cfg.digest() if cfg is not None else traj.meta.get("model", ""),
        "value": "" if value is None else repr(float(value)),
        "fp_residual": repr(traj.fp_residual),
        "has_u": int(traj.u is not None),
    }
    (out / "meta").write_text("".join(f"{k}\t{v}\n" for k, v in meta.items()))
    for k in range(traj.times.size):
        save(traj.measure(k), out / f"m_{k:05d}.txt", {"t": repr(float(traj.times[k]))})
        if traj.alpha is not None:
            save(traj.control(k), out / f"alpha_{k:05d}.txt", {"t": repr(float(traj.times[k]))})
        if traj.u is not None:
            save(traj.value_field(k), out / f"u_{k:05d}.txt", {"t": repr(float(traj.times[k]))})
    return out


def load_trajectory(directory: str | Path) -> Trajectory:
    from .torus import load

    src = Path(directory)
    meta = dict(line.split("\t", 1) for line in (src / "meta").read_text().splitlines())
    steps = int(meta["steps"])
    grid = TorusGrid(1, int(meta["n"]))
    times = float(meta["t0"]) + float(meta["dt"]) * np.arange(steps + 1)
    m = np.array([load(src / f"m_{k:05d}.txt").density for k in range(steps + 1)])
    alpha = None
    if (src / "alpha_00000.txt").exists():
        alpha = np.array([load(src / f"alpha_{k:05d}.txt").values[0] for k in range(steps + 1)])
    u = None
    if int(meta["has_u"]):
        u = np.array([load(src / f"u_{k:05d}.txt").values for k in range(steps + 1)])
    return Trajectory(grid, times, m, alpha, u=u, fp_residual=float(meta["fp_residual"]), meta={"model": meta["model"]})

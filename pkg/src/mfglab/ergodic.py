"""Long-horizon diagnostics: the ergodic constant, the energy and correctors.

The value ``U^T(0, m0)`` grows like ``-lambda*T + chi(m0)``. The constant is
estimated from values on several horizons, and ``chi`` is tabulated on a
fixed panel of probe measures.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .mfg import InvalidInputError, Trajectory, solve_fbs, solve_variational
from .model import ModelConfig, coupling_value_density, hamiltonian_nodes
from .torus import Field, ProbMeasure, TorusGrid, _check_same, divergence, gradient, wasserstein1

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LambdaEstimate:
    value: float
    method: str
    horizons: tuple[float, ...]
    residual: float
    probe_id: str = "m0"
    values: tuple[float, ...] = ()
    intercept: float = float("nan")
    increment: float = float("nan")

    def __post_init__(self):
        if self.method not in ("slope", "increment", "n_particle"):
            raise ValueError(f"unknown method {self.method!r}")


@dataclass(eq=False)
class CorrectorTable:
    probes: list[ProbMeasure]
    probe_ids: list[str]
    chi_hat: np.ndarray
    T: float
    lambda_used: float
    values: np.ndarray
    lipschitz: np.ndarray = field(default=None)

    def __post_init__(self):
        self.chi_hat = np.asarray(self.chi_hat, dtype=float)
        if not np.all(np.isfinite(self.chi_hat)):
            raise ValueError("corrector table has non-finite entries")
        if self.lipschitz is None:
            self.lipschitz = lipschitz_ratios(self.probes, self.chi_hat)

    def max_lipschitz(self) -> float:
        r = self.lipschitz[np.isfinite(self.lipschitz)]
        return float(r.max()) if r.size else 0.0


@dataclass(eq=False)
class EnergyDiagnostic:
    times: np.ndarray
    c_values: np.ndarray
    drift: float
    scale: float
    terminal_gap: float = float("nan")

    @property
    def mean(self) -> float:
        return float(np.mean(self.c_values))


# -- energy ----------------------------------------------------------------


def energy_density(cfg: ModelConfig, u: Field) -> np.ndarray:
    """Node values of ``H(x, Du) - Lap u``.

    The Laplacian is ``div(grad u)``, so that ``∫ Du.Dm = -∫ Lap u m``
    holds exactly on the grid.
    """
    du = gradient(u)
    return hamiltonian_nodes(cfg, du.values[0]) - divergence(du).values


def energy(cfg: ModelConfig, u: Field, m: ProbMeasure) -> float:
    """``c(u, m) = ∫ (H(x, Du) - Lap u) dm - F(m)``."""
    _check_same(u.grid, m.grid, cfg.grid)
    h = m.grid.spacing
    return float(h * energy_density(cfg, u) @ m.density - coupling_value_density(cfg, m.density))


def energy_drift(cfg: ModelConfig, traj: Trajectory, lambda_hat: float | None = None) -> EnergyDiagnostic:
    """Energy at every stored time of a trajectory that carries ``u``.

    ``scale`` is the largest node magnitude of the integrand
    ``(H(x, Du) - Lap u) m`` over the run, the reference size for drift.
    """
    if traj.u is None:
        raise InvalidInputError("trajectory carries no value function")
    c = np.empty(traj.times.size)
    scale = 0.0
    for k in range(traj.times.size):
        dens = energy_density(cfg, traj.value_field(k))
        c[k] = energy(cfg, traj.value_field(k), traj.measure(k))
        scale = max(scale, float(np.max(np.abs(dens * traj.m[k]))))
    drift = float(c.max() - c.min())
    gap = float("nan") if lambda_hat is None else float(abs(c.mean() - lambda_hat))
    return EnergyDiagnostic(traj.times.copy(), c, drift, scale, gap)


# -- values and lambda -----------------------------------------------------


def value(cfg: ModelConfig, m0: ProbMeasure, T: float, dt: float, tol: float = 1e-10, method: str = "variational") -> float:
    """``U^T(0, m0)``; a zero horizon gives 0."""
    if T <= 0:
        return 0.0
    if method == "variational":
        _, rep = solve_variational(cfg, cfg.grid, m0, T, dt, tol)
    elif method == "fbs":
        _, rep = solve_fbs(cfg, cfg.grid, m0, T, dt, tol)
    else:
        raise ValueError(f"unknown solver {method!r}")
    return rep.value


def estimate_lambda_slope(
    cfg: ModelConfig,
    m0: ProbMeasure,
    horizons,
    dt: float,
    *,
    tol: float = 1e-10,
    probe_id: str = "m0",
) -> LambdaEstimate:
    """Least-squares slope of ``T -> U^T(0, m0)``, with the two-horizon increment alongside."""
    hs = tuple(float(T) for T in horizons)
    if len(hs) < 3:
        raise InvalidInputError("need at least three horizons")
    if any(b <= a for a, b in zip(hs, hs[1:])):
        raise InvalidInputError("horizons must be increasing")
    vals = np.array([value(cfg, m0, T, dt, tol) for T in hs])
    Ts = np.array(hs)
    slope, intercept = np.polyfit(Ts, vals, 1)
    resid = float(np.max(np.abs(vals - (slope * Ts + intercept))))
    inc = -(vals[-1] - vals[-2]) / (Ts[-1] - Ts[-2])
    return LambdaEstimate(
        float(-slope), "slope", hs, resid, probe_id, tuple(float(v) for v in vals),
        float(intercept), float(inc),
    )


def increment_estimate(est: LambdaEstimate) -> LambdaEstimate:
    """The increment variant of a slope estimate as its own record."""
    return LambdaEstimate(est.increment, "increment", est.horizons, est.residual, est.probe_id, est.values)


# -- probes and correctors -------------------------------------------------


def _von_mises(grid: TorusGrid, center: float, kappa: float) -> np.ndarray:
    return np.exp(kappa * np.cos(2 * np.pi * (grid.axis() - center)))


def probe_panel(grid: TorusGrid, seed: int = 0) -> tuple[list[str], list[ProbMeasure]]:
    """Eight probe measures spanning several Wasserstein scales."""
    rng = np.random.default_rng(seed)
    weights = {
        "uniform": np.ones(grid.n),
        "bump_wide": _von_mises(grid, 0.5, 1.0),
        "bump_narrow": _von_mises(grid, 0.5, 4.0),
        "bump_shift_a": _von_mises(grid, 0.2, 2.0),
        "bump_shift_b": _von_mises(grid, 0.8, 2.0),
        "mixture": _von_mises(grid, 0.25, 3.0) + _von_mises(grid, 0.75, 3.0),
        "random_a": 0.25 + rng.random(grid.n),
        "random_b": 0.25 + rng.random(grid.n),
    }
    ids = list(weights)
    return ids, [ProbMeasure.normalized(grid, weights[k]) for k in ids]


def lipschitz_ratios(probes: list[ProbMeasure], chi: np.ndarray) -> np.ndarray:
    """``|chi_i - chi_j| / W1(m_i, m_j)`` for all pairs; NaN on the diagonal."""
    k = len(probes)
    out = np.full((k, k), np.nan)
    for i in range(k):
        for j in range(i + 1, k):
            d = wasserstein1(probes[i], probes[j])
            if d > 0:
                out[i, j] = out[j, i] = abs(chi[i] - chi[j]) / d
    return out


def corrector_table(
    cfg: ModelConfig,
    probes: list[ProbMeasure],
    T: float,
    lambda_hat: float,
    dt: float,
    *,
    probe_ids: list[str] | None = None,
    tol: float = 1e-10,
) -> CorrectorTable:
    """``chi_hat(m_i) = U^T(0, m_i) + lambda_hat*T`` on every probe."""
    ids = probe_ids or [f"p{i}" for i in range(len(probes))]
    vals = np.array([value(cfg, p, T, dt, tol) for p in probes])
    return CorrectorTable(list(probes), ids, vals + lambda_hat * T, T, lambda_hat, vals)


def xi_monotonicity(
    cfg: ModelConfig,
    m0: ProbMeasure,
    T: float,
    sample_times,
    dt: float,
    lambda_hat: float,
    *,
    tol: float = 1e-10,
) -> tuple[float, np.ndarray]:
    """Largest ``xi(t2) - xi(t1)`` over consecutive sample times, with the xi values.

    ``xi(t) = U^T(t, m0) + lambda_hat*(T - t)`` and the problem on ``[t, T]``
    is the horizon ``T - t`` problem, solved afresh.
    """
    ts = sorted(float(t) for t in sample_times)
    xi = np.array([value(cfg, m0, T - t, dt, tol) + lambda_hat * (T - t) for t in ts])
    if len(ts) < 2:
        return 0.0, xi
    return float(max(0.0, np.max(np.diff(xi)))), xi


# -- tables ----------------------------------------------------------------


def write_lambda_tsv(path: str | Path, estimates: list[LambdaEstimate]) -> None:
    lines = ["method\thorizons\testimate\tresidual"]
    for e in estimates:
        hs = ",".join(repr(h) for h in e.horizons)
        lines.append(f"{e.method}\t{hs}\t{e.value!r}\t{e.residual!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_corrector_tsv(path: str | Path, tables: list[CorrectorTable]) -> None:
    lines = ["probe_id\tT\tchi_hat"]
    for tab in tables:
        for pid, chi in zip(tab.probe_ids, tab.chi_hat):
            lines.append(f"{pid}\t{tab.T!r}\t{float(chi)!r}")
    Path(path).write_text("\n".join(lines) + "\n")

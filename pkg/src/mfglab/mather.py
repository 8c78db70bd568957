"""Occupation measures of long optimal paths and the Mather-type checks on them.

Samples are the pairs ``(m_k, alpha_k)`` at the stored steps past the burn-in,
each with the same weight. The momentum of a sample is ``alpha_k m_k``, so
the density of the momentum with respect to ``m`` is ``alpha_k`` itself.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .mfg import InvalidInputError, Trajectory
from .model import ModelConfig, conjugate_nodes, coupling_value_density, da_conjugate, hamiltonian_nodes
from .torus import Field, ProbMeasure, TorusGrid, gradient, laplacian

_OUTER = {
    "id": (lambda s: s, lambda s: np.ones_like(s)),
    "square": (lambda s: s * s, lambda s: 2 * s),
    "cos": (np.cos, lambda s: -np.sin(s)),
}

_INNER = {
    "sin1": lambda x: np.sin(2 * np.pi * x),
    "cos1": lambda x: np.cos(2 * np.pi * x),
    "sin2": lambda x: np.sin(4 * np.pi * x),
    "cos2": lambda x: np.cos(4 * np.pi * x),
}


@dataclass(frozen=True, eq=False)
class CylindricalTest:
    """``Phi(m) = phi(∫ psi dm)`` for a named outer ``phi`` and a node field ``psi``."""

    outer: str
    psi: Field
    name: str = ""

    def __post_init__(self):
        if self.outer not in _OUTER:
            raise ValueError(f"unknown outer function {self.outer!r}")
        phi, dphi = _OUTER[self.outer]
        s = np.array([-0.7, 0.1, 0.9])
        eps = 1e-6
        fd = (phi(s + eps) - phi(s - eps)) / (2 * eps)
        if np.max(np.abs(fd - dphi(s))) > 1e-6:
            raise ValueError(f"derivative of {self.outer!r} is inconsistent")

    @property
    def grid(self) -> TorusGrid:
        return self.psi.grid

    def _moment(self, density: np.ndarray) -> float:
        return float(self.grid.spacing * self.psi.values @ density)

    def value(self, m: ProbMeasure) -> float:
        return float(_OUTER[self.outer][0](self._moment(m.density)))

    def slope(self, density: np.ndarray) -> float:
        return float(_OUTER[self.outer][1](self._moment(density)))

    def flat_derivative(self, m: ProbMeasure) -> np.ndarray:
        """``δPhi/δm(m, y) = phi'(∫psi dm) psi(y)``."""
        return self.slope(m.density) * self.psi.values

    def dm(self, density: np.ndarray) -> np.ndarray:
        """``D_m Phi(m, y) = phi'(∫psi dm) Dpsi(y)``."""
        return self.slope(density) * gradient(self.psi).values[0]

    def div_dm(self, density: np.ndarray) -> np.ndarray:
        return self.slope(density) * laplacian(self.psi).values

    def generator(self, density: np.ndarray, alpha: np.ndarray) -> float:
        """``∫ div D_mPhi dm - ∫ D_mPhi . alpha dm`` for one sample."""
        h = self.grid.spacing
        return float(h * (self.div_dm(density) - self.dm(density) * alpha) @ density)


def default_tests(grid: TorusGrid) -> list[CylindricalTest]:
    """Twelve tests: three outer functions times four low Fourier modes."""
    out = []
    for o in _OUTER:
        for key, fn in _INNER.items():
            out.append(CylindricalTest(o, Field(grid, fn(grid.axis())), f"{o}:{key}"))
    return out


@dataclass(frozen=True, eq=False)
class OccupationMeasure:
    grid: TorusGrid
    times: np.ndarray
    m: np.ndarray
    alpha: np.ndarray
    horizon: float
    burn_in: float
    u: np.ndarray | None = None

    def __post_init__(self):
        for row in self.m:
            ProbMeasure(self.grid, row)

    @property
    def size(self) -> int:
        return self.times.size

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.size, 1.0 / self.size)


def occupation_measure(traj: Trajectory, burn_in: float) -> OccupationMeasure:
    """Equal-weight samples at the stored steps in ``[t0 + burn_in, T)``.

    Each step carries the control used on its interval, so the terminal row is
    not a sample.
    """
    if traj.alpha is None:
        raise InvalidInputError("trajectory has no control")
    if burn_in < 1.0 or traj.horizon <= burn_in:
        raise InvalidInputError(f"need horizon > burn_in >= 1, got T={traj.horizon}, burn_in={burn_in}")
    start = int(round(burn_in / traj.dt))
    sl = slice(start, traj.steps)
    u = None if traj.u is None else traj.u[sl].copy()
    return OccupationMeasure(
        traj.grid, traj.times[sl].copy(), traj.m[sl].copy(), traj.alpha[sl].copy(),
        traj.horizon, burn_in, u,
    )


def closedness_terms(occ: OccupationMeasure, tests: list[CylindricalTest]) -> np.ndarray:
    """Generator value per sample (rows) and test (columns)."""
    return np.array([[t.generator(occ.m[k], occ.alpha[k]) for t in tests] for k in range(occ.size)])


def closedness_residual(occ: OccupationMeasure, tests: list[CylindricalTest]) -> float:
    """Largest absolute sample-average generator value over the tests."""
    terms = closedness_terms(occ, tests)
    return float(np.max(np.abs(terms.mean(axis=0))))


def objective_terms(cfg: ModelConfig, occ: OccupationMeasure) -> np.ndarray:
    h = occ.grid.spacing
    return np.array([
        h * conjugate_nodes(cfg, occ.alpha[k]) @ occ.m[k] + coupling_value_density(cfg, occ.m[k])
        for k in range(occ.size)
    ])


def mather_objective(cfg: ModelConfig, occ: OccupationMeasure) -> float:
    """Sample average of ``∫ H*(y, alpha) dm + F(m)``."""
    return float(objective_terms(cfg, occ).mean())


def sample_smoothness(grid: TorusGrid, density: np.ndarray) -> tuple[float, float, float]:
    low = float(density.min())
    dm = gradient(Field(grid, density)).values[0]
    grad = float(np.max(np.abs(dm)))
    if low <= 0:
        return float("inf"), grad, float("inf")
    fisher = float(grid.spacing * np.sum(dm * dm / density))
    return 1.0 / low, grad, fisher


def smoothness_diagnostics(occ: OccupationMeasure) -> tuple[float, float, float]:
    """``(max 1/min m, max |Dm|, max ∫|D log m|^2 dm)`` over the samples."""
    rows = np.array([sample_smoothness(occ.grid, occ.m[k]) for k in range(occ.size)])
    return tuple(float(x) for x in rows.max(axis=0))


def identity_terms(cfg: ModelConfig, occ: OccupationMeasure, lambda_hat: float) -> np.ndarray:
    h = occ.grid.spacing
    out = np.empty(occ.size)
    for k in range(occ.size):
        m = occ.m[k]
        q = da_conjugate(cfg, occ.grid.axis(), occ.alpha[k])
        dm = gradient(Field(occ.grid, m)).values[0]
        out[k] = h * (q @ dm + hamiltonian_nodes(cfg, q) @ m) - coupling_value_density(cfg, m) - lambda_hat
    return out


def weak_kam_identity_residual(cfg: ModelConfig, occ: OccupationMeasure, lambda_hat: float) -> float:
    """``max_k |∫ q.Dm + ∫ H(y, q) dm - F(m) - lambda_hat|`` with ``q = D_aH*(y, alpha)``."""
    return float(np.max(np.abs(identity_terms(cfg, occ, lambda_hat))))


def write_mather_tsv(
    path: str | Path, cfg: ModelConfig, occ: OccupationMeasure, tests: list[CylindricalTest], lambda_hat: float
) -> None:
    obj = objective_terms(cfg, occ)
    clo = closedness_terms(occ, tests)
    ident = identity_terms(cfg, occ, lambda_hat)
    head = ["t", "objective_term"] + [f"closed[{t.name}]" for t in tests]
    head += ["identity_residual", "inv_density", "grad_density", "fisher"]
    lines = ["\t".join(head)]
    for k in range(occ.size):
        smooth = sample_smoothness(occ.grid, occ.m[k])
        row = [occ.times[k], obj[k], *clo[k], ident[k], *smooth]
        lines.append("\t".join(repr(float(x)) for x in row))
    Path(path).write_text("\n".join(lines) + "\n")

"""Periodic grids on the flat torus and the finite-difference calculus on them.

All operators are centered and periodic. Measures are piecewise-constant
histograms with density values at the nodes, so integrals are midpoint sums
weighted by the cell volume ``h**d``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

MASS_TOL = 1e-12
# solver round-off can leave -1e-17 entries; anything below this is an error
NEG_SLACK = 1e-12


class UnsupportedDimensionError(ValueError):
    pass


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class TorusGrid:
    """Uniform periodic grid with ``n`` points per axis on ``[0, 1)^dim``."""

    dim: int
    n: int

    def __post_init__(self):
        if self.dim < 1 or self.n < 1:
            raise ValueError(f"invalid grid dim={self.dim} n={self.n}")

    @property
    def spacing(self) -> float:
        return 1.0 / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def size(self) -> int:
        return self.n**self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    def axis(self) -> np.ndarray:
        return np.arange(self.n) * self.spacing

    def coords(self) -> list[np.ndarray]:
        """Meshgrid coordinates, one array of ``shape`` per axis."""
        return np.meshgrid(*([self.axis()] * self.dim), indexing="ij")


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Field:
    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        vals = _frozen(self.values)
        if vals.shape != self.grid.shape:
            raise ValueError(f"field shape {vals.shape} != grid shape {self.grid.shape}")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, grid: TorusGrid, fn) -> Field:
        return cls(grid, fn(*grid.coords()))

    @classmethod
    def zeros(cls, grid: TorusGrid) -> Field:
        return cls(grid, np.zeros(grid.shape))

    def mean(self) -> float:
        return float(self.values.mean())


@dataclass(frozen=True, eq=False)
class VectorField:
    grid: TorusGrid
    values: np.ndarray  # shape (dim, n, ..., n)

    def __post_init__(self):
        vals = _frozen(self.values)
        if vals.shape != (self.grid.dim, *self.grid.shape):
            raise ValueError(f"vector field shape {vals.shape} does not match grid")
        object.__setattr__(self, "values", vals)

    @classmethod
    def zeros(cls, grid: TorusGrid) -> VectorField:
        return cls(grid, np.zeros((grid.dim, *grid.shape)))


@dataclass(frozen=True, eq=False)
class ProbMeasure:
    """Histogram probability measure; ``density`` is probability per unit volume."""

    grid: TorusGrid
    density: np.ndarray

    def __post_init__(self):
        dens = _frozen(self.density)
        if dens.shape != self.grid.shape:
            raise ValueError(f"density shape {dens.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(dens)):
            raise ValueError("density has non-finite entries")
        if dens.min() < -NEG_SLACK:
            raise ValueError(f"negative density {dens.min():.3e}")
        if dens.min() < 0.0:
            dens = _frozen(np.maximum(dens, 0.0))
        mass = dens.sum() * self.grid.cell_volume
        if abs(mass - 1.0) > MASS_TOL:
            raise ValueError(f"total mass {mass!r} is not 1")
        object.__setattr__(self, "density", dens)

    @classmethod
    def normalized(cls, grid: TorusGrid, weights) -> ProbMeasure:
        """Normalize nonnegative node weights into a probability density."""
        w = np.asarray(weights, dtype=float)
        if w.shape != grid.shape:
            raise ValueError("weights do not match grid")
        if w.min() < 0:
            raise ValueError("weights must be nonnegative")
        total = w.sum() * grid.cell_volume
        if total <= 0:
            raise ValueError("weights have zero total mass")
        return cls(grid, w / total)

    @classmethod
    def uniform(cls, grid: TorusGrid) -> ProbMeasure:
        return cls(grid, np.ones(grid.shape))

    @classmethod
    def dirac(cls, grid: TorusGrid, index) -> ProbMeasure:
        dens = np.zeros(grid.shape)
        dens[index] = 1.0 / grid.cell_volume
        return cls(grid, dens)

    def mass(self) -> float:
        return float(self.density.sum() * self.grid.cell_volume)

    def masses(self) -> np.ndarray:
        """Probability carried by each cell."""
        return self.density * self.grid.cell_volume


def _check_same(*grids: TorusGrid) -> None:
    if any(g != grids[0] for g in grids[1:]):
        raise GridMismatchError(f"grids differ: {grids}")


def gradient(f: Field) -> VectorField:
    """Centered periodic differences, one component per axis."""
    h = f.grid.spacing
    comps = [
        (np.roll(f.values, -1, axis=ax) - np.roll(f.values, 1, axis=ax)) / (2 * h)
        for ax in range(f.grid.dim)
    ]
    return VectorField(f.grid, np.stack(comps))


def divergence(v: VectorField) -> Field:
    """Centered periodic divergence; the negative adjoint of :func:`gradient`."""
    h = v.grid.spacing
    out = np.zeros(v.grid.shape)
    for ax in range(v.grid.dim):
        comp = v.values[ax]
        out += (np.roll(comp, -1, axis=ax) - np.roll(comp, 1, axis=ax)) / (2 * h)
    return Field(v.grid, out)


def laplacian(f: Field) -> Field:
    """Direct ``2d+1``-point stencil (not ``divergence(gradient(f))``)."""
    h = f.grid.spacing
    out = -2.0 * f.grid.dim * f.values
    for ax in range(f.grid.dim):
        out = out + np.roll(f.values, -1, axis=ax) + np.roll(f.values, 1, axis=ax)
    return Field(f.grid, out / h**2)


def integrate(values: np.ndarray, grid: TorusGrid) -> float:
    return float(np.sum(values) * grid.cell_volume)


def inner(f: Field, g: Field) -> float:
    _check_same(f.grid, g.grid)
    return integrate(f.values * g.values, f.grid)


def vector_inner(v: VectorField, w: VectorField) -> float:
    _check_same(v.grid, w.grid)
    return integrate(np.sum(v.values * w.values, axis=0), v.grid)


def integrate_against(f: Field, m: ProbMeasure) -> float:
    """``∫ f dm`` by midpoint quadrature."""
    _check_same(f.grid, m.grid)
    return integrate(f.values * m.density, f.grid)


def circular_cdf_gap(a: np.ndarray, b: np.ndarray, h: float) -> float:
    """W1 on the unit circle between node masses ``a*h`` and ``b*h``.

    On the circle the optimal cost is ``min_c sum_i |F_i - c| h`` where ``F``
    is the cumulative difference; the minimizer ``c`` is a median of ``F``.
    """
    cdf = np.cumsum((a - b) * h)
    c = np.median(cdf)
    return float(np.sum(np.abs(cdf - c)) * h)


def wasserstein1(a: ProbMeasure, b: ProbMeasure) -> float:
    """1-Wasserstein distance between two histograms on the circle (d=1 only)."""
    _check_same(a.grid, b.grid)
    if a.grid.dim != 1:
        raise UnsupportedDimensionError(f"wasserstein1 needs dim=1, got {a.grid.dim}")
    return circular_cdf_gap(a.density, b.density, a.grid.spacing)


# -- text serialization ----------------------------------------------------

_HEADER = "# torus-field v1"


def _header(grid: TorusGrid, kind: str, extra: dict | None = None) -> str:
    parts = [_HEADER, f"dim={grid.dim}", f"n={grid.n}", f"kind={kind}"]
    for key, val in (extra or {}).items():
        parts.append(f"{key}={val}")
    return " ".join(parts)


def dumps(obj: Field | VectorField | ProbMeasure, extra: dict | None = None) -> str:
    """Serialize to the delimited text format, one line per node (row-major)."""
    if isinstance(obj, ProbMeasure):
        kind, rows = "measure", obj.density.reshape(-1, 1)
    elif isinstance(obj, VectorField):
        kind = "vector"
        rows = obj.values.reshape(obj.grid.dim, -1).T
    elif isinstance(obj, Field):
        kind, rows = "field", obj.values.reshape(-1, 1)
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")
    lines = [_header(obj.grid, kind, extra)]
    lines += ["\t".join(repr(float(x)) for x in row) for row in rows]
    return "\n".join(lines) + "\n"


def parse_header(line: str) -> dict[str, str]:
    if not line.startswith(_HEADER):
        raise ValueError(f"not a torus-field file: {line[:40]!r}")
    fields = {}
    for token in line[len(_HEADER):].split():
        key, _, val = token.partition("=")
        fields[key] = val
    return fields


def loads(text: str):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    meta = parse_header(lines[0])
    grid = TorusGrid(int(meta["dim"]), int(meta["n"]))
    rows = np.array([[float(x) for x in ln.split("\t")] for ln in lines[1:]])
    kind = meta["kind"]
    if kind == "field":
        return Field(grid, rows[:, 0].reshape(grid.shape))
    if kind == "measure":
        return ProbMeasure(grid, rows[:, 0].reshape(grid.shape))
    if kind == "vector":
        return VectorField(grid, rows.T.reshape(grid.dim, *grid.shape))
    raise ValueError(f"unknown kind {kind!r}")


def save(obj, path: str | Path, extra: dict | None = None) -> None:
    Path(path).write_text(dumps(obj, extra))


def load(path: str | Path):
    return loads(Path(path).read_text())

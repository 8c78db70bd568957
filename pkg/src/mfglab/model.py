"""Hamiltonian, its Legendre conjugate, and the potential coupling.

The Hamiltonian family is ``H(x, p) = |p|^2 / 2 + V(x)``, so
``H*(x, a) = |a|^2 / 2 - V(x)`` and ``D_p H`` is the identity. The coupling
is ``F(m) = c0``, ``F(m) = ∫ f dm`` or ``F(m) = ∫∫ k(x, y) m(dx) m(dy)``.
Off-grid values of ``V`` use trigonometric interpolation of the node samples.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .torus import Field, ProbMeasure, TorusGrid, UnsupportedDimensionError, load

HAMILTONIAN_KINDS = ("quadratic", "quadratic_plus_potential")
COUPLING_KINDS = ("constant", "linear", "quadratic_kernel")


class ConfigError(ValueError):
    """Invalid model configuration; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True, eq=False)
class ModelConfig:
    grid: TorusGrid
    hamiltonian_kind: str = "quadratic"
    potential: np.ndarray | None = None
    coupling_kind: str = "constant"
    c0: float = 0.0
    linear: np.ndarray | None = None
    kernel: np.ndarray | None = None
    convexity_lower: float = 1.0
    convexity_upper: float = 1.0
    growth_theta: float = 0.5
    growth_C: float = 1.0
    name: str = ""

    def __post_init__(self):
        if self.grid.dim != 1:
            raise UnsupportedDimensionError("models are defined on the 1-d torus")
        n = self.grid.n
        if self.hamiltonian_kind not in HAMILTONIAN_KINDS:
            raise ConfigError("model.hamiltonian", f"unknown kind {self.hamiltonian_kind!r}")
        if self.coupling_kind not in COUPLING_KINDS:
            raise ConfigError("model.kind", f"unknown coupling kind {self.coupling_kind!r}")
        if not 0 < self.convexity_lower <= self.convexity_upper:
            raise ConfigError(
                "assumptions.convexity_lower",
                f"need 0 < lower <= upper, got {self.convexity_lower}, {self.convexity_upper}",
            )
        if not 0 < self.growth_theta < 1:
            raise ConfigError("assumptions.theta", f"theta must lie in (0,1), got {self.growth_theta}")
        if self.growth_C <= 0:
            raise ConfigError("assumptions.C", f"C must be positive, got {self.growth_C}")

        pot = np.zeros(n) if self.potential is None else np.array(self.potential, dtype=float)
        if pot.shape != (n,):
            raise ConfigError("model.potential_file", f"expected {n} samples, got {pot.shape}")
        if self.hamiltonian_kind == "quadratic" and np.any(pot != 0):
            raise ConfigError("model.hamiltonian", "plain quadratic kind takes no potential")
        object.__setattr__(self, "potential", _readonly(pot))

        lin = np.zeros(n)
        ker = np.zeros((n, n))
        if self.coupling_kind == "linear":
            if self.linear is None:
                raise ConfigError("model.linear_file", "linear coupling needs samples")
            lin = np.array(self.linear, dtype=float)
            if lin.shape != (n,):
                raise ConfigError("model.linear_file", f"expected {n} samples")
        elif self.coupling_kind == "quadratic_kernel":
            if self.kernel is None:
                raise ConfigError("model.kernel_file", "kernel coupling needs samples")
            ker = np.array(self.kernel, dtype=float)
            if ker.shape != (n, n):
                raise ConfigError("model.kernel_file", f"expected {n}x{n} samples")
            if np.max(np.abs(ker - ker.T)) > 1e-12:
                raise ConfigError("model.kernel_file", "kernel must be symmetric")
        object.__setattr__(self, "linear", _readonly(lin))
        object.__setattr__(self, "kernel", _readonly(ker))

    @property
    def coupling_c0(self) -> float:
        return self.c0 if self.coupling_kind == "constant" else 0.0

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(f"{self.grid.n}|{self.hamiltonian_kind}|{self.coupling_kind}|{self.c0!r}".encode())
        for arr in (self.potential, self.linear, self.kernel):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()[:16]


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=float)
    arr.setflags(write=False)
    return arr


# -- standard models -------------------------------------------------------


def trivial_model(grid: TorusGrid, c0: float = 0.7) -> ModelConfig:
    """Quadratic H without potential and constant coupling."""
    return ModelConfig(grid, "quadratic", coupling_kind="constant", c0=c0, name="trivial")


def kernel_benchmark(
    grid: TorusGrid, kernel_amp: float = -0.5, potential_amp: float = 0.2
) -> ModelConfig:
    """``k(x,y) = kernel_amp cos 2π(x-y)``, ``V(x) = potential_amp cos 2πx``."""
    x = grid.axis()
    ker = kernel_amp * np.cos(2 * np.pi * (x[:, None] - x[None, :]))
    pot = potential_amp * np.cos(2 * np.pi * x)
    C = max(1.0, 2 * np.pi * abs(potential_amp), (2 * np.pi) ** 2 * abs(potential_amp))
    return ModelConfig(
        grid,
        "quadratic_plus_potential",
        potential=pot,
        coupling_kind="quadratic_kernel",
        kernel=ker,
        growth_C=C,
        name="kernel",
    )


def potential_model(grid: TorusGrid, potential, c0: float = 0.0) -> ModelConfig:
    pot = np.asarray(potential, dtype=float)
    amp = np.max(np.abs(pot)) if pot.size else 0.0
    return ModelConfig(
        grid,
        "quadratic_plus_potential",
        potential=pot,
        coupling_kind="constant",
        c0=c0,
        growth_C=max(1.0, (2 * np.pi) ** 2 * amp),
        name="potential",
    )


# -- potential interpolation -----------------------------------------------


def _trig_coeffs(samples: np.ndarray) -> np.ndarray:
    return np.fft.rfft(samples) / samples.size


def _trig_eval(samples: np.ndarray, x, order: int = 0) -> np.ndarray:
    """Evaluate the trigonometric interpolant (or its derivative) at ``x``."""
    n = samples.size
    c = _trig_coeffs(samples)
    k = np.arange(c.size)
    weights = np.full(c.size, 2.0)
    weights[0] = 1.0
    if n % 2 == 0:
        weights[-1] = 1.0
    x = np.asarray(x, dtype=float)
    phase = np.exp(2j * np.pi * np.multiply.outer(x, k))
    factor = (2j * np.pi * k) ** order
    return np.real(phase @ (weights * factor * c))


def potential_at(cfg: ModelConfig, x, order: int = 0) -> np.ndarray:
    if not np.any(cfg.potential):
        return np.zeros_like(np.asarray(x, dtype=float))
    return _trig_eval(cfg.potential, x, order)


# -- Hamiltonian and conjugate ---------------------------------------------


def hamiltonian(cfg: ModelConfig, x, p):
    """``H(x, p) = p^2/2 + V(x)``; ``p`` is the single component in d=1."""
    p = np.asarray(p, dtype=float)
    return 0.5 * p * p + potential_at(cfg, x)


def conjugate(cfg: ModelConfig, x, a):
    """Legendre conjugate ``H*(x, a) = a^2/2 - V(x)``."""
    a = np.asarray(a, dtype=float)
    return 0.5 * a * a - potential_at(cfg, x)


def dp_hamiltonian(cfg: ModelConfig, x, p):
    return np.asarray(p, dtype=float) + 0.0 * np.asarray(x, dtype=float)


def da_conjugate(cfg: ModelConfig, x, a):
    return np.asarray(a, dtype=float) + 0.0 * np.asarray(x, dtype=float)


def hamiltonian_nodes(cfg: ModelConfig, p: np.ndarray) -> np.ndarray:
    """``H(x_i, p_i)`` at the grid nodes."""
    return 0.5 * p * p + cfg.potential


def conjugate_nodes(cfg: ModelConfig, a: np.ndarray) -> np.ndarray:
    return 0.5 * a * a - cfg.potential


# -- coupling --------------------------------------------------------------


def coupling_value_density(cfg: ModelConfig, density: np.ndarray) -> float:
    h = cfg.grid.spacing
    if cfg.coupling_kind == "constant":
        return float(cfg.c0)
    if cfg.coupling_kind == "linear":
        return float(h * cfg.linear @ density)
    return float(h * h * density @ cfg.kernel @ density)


def coupling_value(cfg: ModelConfig, m: ProbMeasure) -> float:
    return coupling_value_density(cfg, m.density)


def coupling_gradient_density(cfg: ModelConfig, density: np.ndarray) -> np.ndarray:
    """Flat derivative of the coupling, before normalization."""
    if cfg.coupling_kind == "constant":
        return np.zeros_like(density)
    if cfg.coupling_kind == "linear":
        return np.array(cfg.linear)
    return 2.0 * cfg.grid.spacing * (cfg.kernel @ density)


def coupling_derivative(cfg: ModelConfig, m: ProbMeasure) -> Field:
    """``F(., m)`` normalized so that ``∫ F(x, m) m(dx) = 0``."""
    raw = coupling_gradient_density(cfg, m.density)
    raw = raw - cfg.grid.spacing * raw @ m.density
    return Field(cfg.grid, raw)


# -- assumption audit ------------------------------------------------------


@dataclass
class AssumptionCheck:
    passed: bool
    margin: float
    worst_x: float
    worst_p: float
    required: float = float("nan")


@dataclass
class AssumptionReport:
    checks: dict[str, AssumptionCheck] = field(default_factory=dict)
    sample_count: int = 0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())


def audit_assumptions(
    cfg: ModelConfig, sample_count: int = 2000, p_max: float = 10.0, seed: int = 0, eps: float = 1e-4
) -> AssumptionReport:
    """Check the convexity and growth conditions at sampled ``(x, p)``.

    Derivatives are taken by central finite differences of :func:`hamiltonian`,
    so the audit does not rely on the closed forms.
    """
    rng = np.random.default_rng(seed)
    nodes = cfg.grid.axis()
    x = np.concatenate([nodes, rng.random(max(sample_count - nodes.size, 0))])[:sample_count]
    p = rng.uniform(-p_max, p_max, size=x.size)
    H = lambda xx, pp: hamiltonian(cfg, xx, pp)  # noqa: E731

    hpp = (H(x, p + eps) - 2 * H(x, p) + H(x, p - eps)) / eps**2
    hx = (H(x + eps, p) - H(x - eps, p)) / (2 * eps)
    hxx = (H(x + eps, p) - 2 * H(x, p) + H(x - eps, p)) / eps**2
    hxp = (
        H(x + eps, p + eps) - H(x + eps, p - eps) - H(x - eps, p + eps) + H(x - eps, p - eps)
    ) / (4 * eps**2)

    report = AssumptionReport(sample_count=int(x.size))

    lo = hpp - cfg.convexity_lower
    hi = cfg.convexity_upper - hpp
    # finite-difference noise on an exactly constant D_pp H
    slack = 1e-5 * max(1.0, cfg.convexity_upper)
    margin = np.minimum(lo, hi)
    i = int(np.argmin(margin))
    report.checks["convexity"] = AssumptionCheck(
        bool(margin[i] >= -slack), float(margin[i]), float(x[i]), float(p[i])
    )

    C = cfg.growth_C
    theta = cfg.growth_theta
    ap = np.abs(p)
    for name, ratio in (
        ("dx_growth", np.abs(hx) / (1 + ap)),
        ("dxx_growth", np.abs(hxx) / (1 + ap) ** (1 + theta)),
        ("dxp_growth", np.abs(hxp) / (1 + ap) ** theta),
    ):
        i = int(np.argmax(ratio))
        required = float(ratio[i])
        report.checks[name] = AssumptionCheck(
            bool(required <= C * (1 + 1e-6)), float(C - required), float(x[i]), float(p[i]), required
        )
    return report


# -- config files ----------------------------------------------------------


def dumps_kernel(grid: TorusGrid, kernel: np.ndarray) -> str:
    lines = [f"# torus-field v1 dim=1 n={grid.n} kind=kernel"]
    lines += ["\t".join(repr(float(v)) for v in row) for row in kernel]
    return "\n".join(lines) + "\n"


def _read_kernel(path: Path, n: int) -> np.ndarray:
    lines = [ln for ln in path.read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    ker = np.array([[float(v) for v in ln.split()] for ln in lines])
    if ker.shape != (n, n):
        raise ConfigError("model.kernel_file", f"expected {n}x{n} values, got {ker.shape}")
    return ker


_KNOWN_KEYS = {
    "grid": {"n"},
    "model": {
        "name", "hamiltonian", "kind", "c0", "kernel_file", "kernel_cos",
        "potential_file", "potential_cos", "linear_file", "linear_cos",
    },
    "assumptions": {"theta", "c", "convexity_lower", "convexity_upper"},
}


def parse_model_config(text: str, base_dir: str | Path = ".", passthrough: tuple[str, ...] = ()) -> ModelConfig:
    """Parse the key-value model file (INI sections ``grid``, ``model``, ``assumptions``).

    Sections named in ``passthrough`` belong to other readers and are skipped.
    """
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("<file>", str(exc)) from exc
    base = Path(base_dir)
    for section in parser.sections():
        if section in passthrough:
            continue
        if section not in _KNOWN_KEYS:
            raise ConfigError(section, "unknown section")
        for key in parser[section]:
            if key not in _KNOWN_KEYS[section]:
                raise ConfigError(f"{section}.{key}", "unknown key")

    def num(section, key, default, cast=float):
        if not parser.has_option(section, key):
            return default
        raw = parser.get(section, key)
        try:
            return cast(raw)
        except ValueError:
            raise ConfigError(f"{section}.{key}", f"cannot parse {raw!r}") from None

    n = num("grid", "n", 32, int)
    if n < 4:
        raise ConfigError("grid.n", "need at least 4 points")
    grid = TorusGrid(1, n)
    x = grid.axis()

    model = parser["model"] if parser.has_section("model") else {}
    kind = model.get("kind", "constant")
    potential = None
    if "potential_file" in model:
        pf = load(base / model["potential_file"])
        if not isinstance(pf, Field) or pf.grid != grid:
            raise ConfigError("model.potential_file", "not a field on the configured grid")
        potential = pf.values
    elif "potential_cos" in model:
        potential = num("model", "potential_cos", 0.0) * np.cos(2 * np.pi * x)
    ham = model.get("hamiltonian", "quadratic_plus_potential" if potential is not None else "quadratic")

    kernel = linear = None
    if kind == "quadratic_kernel":
        if "kernel_file" in model:
            kernel = _read_kernel(base / model["kernel_file"], n)
        elif "kernel_cos" in model:
            kernel = num("model", "kernel_cos", 0.0) * np.cos(2 * np.pi * (x[:, None] - x[None, :]))
    elif kind == "linear":
        if "linear_file" in model:
            lf = load(base / model["linear_file"])
            linear = lf.values
        elif "linear_cos" in model:
            linear = num("model", "linear_cos", 0.0) * np.cos(2 * np.pi * x)

    return ModelConfig(
        grid,
        ham,
        potential=potential,
        coupling_kind=kind,
        c0=num("model", "c0", 0.0),
        linear=linear,
        kernel=kernel,
        convexity_lower=num("assumptions", "convexity_lower", 1.0),
        convexity_upper=num("assumptions", "convexity_upper", 1.0),
        growth_theta=num("assumptions", "theta", 0.5),
        growth_C=num("assumptions", "c", 1.0),
        name=model.get("name", ""),
    )


def load_model_config(path: str | Path, passthrough: tuple[str, ...] = ()) -> ModelConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError("--config", f"{path} does not exist")
    return parse_model_config(path.read_text(), path.parent, passthrough)


def resample_model(cfg: ModelConfig, n: int) -> ModelConfig:
    """The same model sampled on an ``n``-point grid (trigonometric interpolation)."""
    if n == cfg.grid.n:
        return cfg
    grid = TorusGrid(1, n)
    x = grid.axis()
    pot = _trig_eval(cfg.potential, x) if np.any(cfg.potential) else None
    lin = _trig_eval(cfg.linear, x) if cfg.coupling_kind == "linear" else None
    ker = None
    if cfg.coupling_kind == "quadratic_kernel":
        rows = np.array([_trig_eval(row, x) for row in cfg.kernel])  # (old n, new n)
        ker = np.array([_trig_eval(col, x) for col in rows.T])
        ker = 0.5 * (ker + ker.T)
    return ModelConfig(
        grid,
        cfg.hamiltonian_kind,
        potential=pot,
        coupling_kind=cfg.coupling_kind,
        c0=cfg.c0,
        linear=lin,
        kernel=ker,
        convexity_lower=cfg.convexity_lower,
        convexity_upper=cfg.convexity_upper,
        growth_theta=cfg.growth_theta,
        growth_C=cfg.growth_C,
        name=cfg.name,
    )

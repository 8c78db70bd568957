"""Lax-Oleinik operator on measure functionals and calibrated curves.

``tau_h Phi(m0) = inf { cost on [0, h] + Phi(m(h)) } + lambda*h``. Functionals
are either closed-form cylindrical sums, constants, or tables on a probe panel
evaluated at the nearest probe in W1. A table has no derivative, so the solver
steers as if the terminal cost were flat and the table is read at the end
point; the distance to the probe used is always reported.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .mfg import InvalidInputError, solve_variational, step_costs
from .mather import CylindricalTest
from .model import ModelConfig
from .torus import ProbMeasure, wasserstein1


@dataclass(eq=False)
class MeasureFunctional:
    """``shift + sum_j coef_j Phi_j(m)`` (cylindrical) or a probe table."""

    kind: str
    terms: list[tuple[float, CylindricalTest]] = field(default_factory=list)
    shift: float = 0.0
    probes: list[ProbMeasure] = field(default_factory=list)
    table: np.ndarray | None = None
    last_distance: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "cylindrical", "table"):
            raise ValueError(f"unknown functional kind {self.kind!r}")
        if self.kind == "table":
            self.table = np.asarray(self.table, dtype=float)
            if self.table.shape != (len(self.probes),) or not self.probes:
                raise ValueError("table needs one value per probe")

    @classmethod
    def constant(cls, c: float) -> MeasureFunctional:
        return cls("constant", shift=float(c))

    @classmethod
    def cylindrical(cls, terms, shift: float = 0.0) -> MeasureFunctional:
        return cls("cylindrical", terms=[(float(a), t) for a, t in terms], shift=float(shift))

    @classmethod
    def from_table(cls, probes, values) -> MeasureFunctional:
        return cls("table", probes=list(probes), table=values)

    def shifted(self, c: float) -> MeasureFunctional:
        return MeasureFunctional(
            self.kind, list(self.terms), self.shift + float(c), list(self.probes),
            None if self.table is None else self.table + float(c),
        )

    def nearest(self, m: ProbMeasure) -> tuple[int, float]:
        d = [wasserstein1(m, p) for p in self.probes]
        j = int(np.argmin(d))
        return j, float(d[j])

    def value(self, m: ProbMeasure) -> float:
        if self.kind == "table":
            j, self.last_distance = self.nearest(m)
            return float(self.table[j])
        return self.shift + sum(a * t.value(m) for a, t in self.terms)

    def derivative(self, m: ProbMeasure) -> np.ndarray | None:
        if self.kind != "cylindrical":
            return None
        return sum(a * t.flat_derivative(m) for a, t in self.terms)


@dataclass
class LaxOleinikResult:
    value: float
    terminal: ProbMeasure
    probe_distance: float = 0.0


def lax_oleinik_full(
    cfg: ModelConfig, phi: MeasureFunctional, h: float, m0: ProbMeasure, lambda_hat: float, dt: float, tol: float = 1e-10
) -> LaxOleinikResult:
    if h < dt - 1e-12:
        raise InvalidInputError(f"h={h} is shorter than dt={dt}")
    if phi.kind == "table":
        # piecewise-constant terminal cost: steer on the running cost alone,
        # then read the table where the path ends
        traj, rep = solve_variational(cfg, cfg.grid, m0, h, dt, tol)
        end = traj.measure(traj.steps)
        total = rep.value + phi.value(end)
        return LaxOleinikResult(total + lambda_hat * h, end, phi.last_distance)
    traj, rep = solve_variational(cfg, cfg.grid, m0, h, dt, tol, terminal=phi)
    return LaxOleinikResult(rep.value + lambda_hat * h, traj.measure(traj.steps))


def lax_oleinik(
    cfg: ModelConfig, phi: MeasureFunctional, h: float, m0: ProbMeasure, lambda_hat: float, dt: float, tol: float = 1e-10
) -> float:
    """``tau_h Phi(m0)``."""
    return lax_oleinik_full(cfg, phi, h, m0, lambda_hat, dt, tol).value


@dataclass
class LawCheck:
    law: str
    h: float
    gap: float
    interpolation_error: float
    extra: dict = field(default_factory=dict)


def check_semigroup(
    cfg: ModelConfig, phi: MeasureFunctional, h1: float, h2: float, probes, lambda_hat: float, dt: float, tol: float = 1e-10
) -> LawCheck:
    """``max |tau_h1(tau_h2 Phi) - tau_{h1+h2} Phi|`` over the probes.

    The inner ``tau_h2 Phi`` becomes a table on the probes enriched with the
    end points of the outer solves, so every table lookup hits a stored probe
    up to the reported distance.
    """
    flat = MeasureFunctional.constant(0.0)
    ends = [lax_oleinik_full(cfg, flat, h1, p, 0.0, dt, tol).terminal for p in probes]
    panel = list(probes) + ends
    inner = MeasureFunctional.from_table(panel, [lax_oleinik(cfg, phi, h2, q, lambda_hat, dt, tol) for q in panel])
    gaps, dists, scale = [], [], 0.0
    for p in probes:
        outer = lax_oleinik_full(cfg, inner, h1, p, lambda_hat, dt, tol)
        direct = lax_oleinik(cfg, phi, h1 + h2, p, lambda_hat, dt, tol)
        gaps.append(abs(outer.value - direct))
        dists.append(outer.probe_distance)
        scale = max(scale, abs(direct))
    lip = _table_lipschitz(inner)
    return LawCheck(
        "semigroup", h1 + h2, float(max(gaps)), float(max(dists) * lip),
        {"value_scale": scale, "max_probe_distance": float(max(dists))},
    )


def _table_lipschitz(phi: MeasureFunctional) -> float:
    best = 0.0
    for i in range(len(phi.probes)):
        for j in range(i + 1, len(phi.probes)):
            d = wasserstein1(phi.probes[i], phi.probes[j])
            if d > 0:
                best = max(best, abs(phi.table[i] - phi.table[j]) / d)
    return best


def check_shift(
    cfg: ModelConfig, phi: MeasureFunctional, c: float, h: float, probes, lambda_hat: float, dt: float, tol: float = 1e-10
) -> LawCheck:
    """``max |tau_h(Phi + c) - tau_h Phi - c|``."""
    moved = phi.shifted(c)
    gap = max(
        abs(lax_oleinik(cfg, moved, h, p, lambda_hat, dt, tol) - lax_oleinik(cfg, phi, h, p, lambda_hat, dt, tol) - c)
        for p in probes
    )
    return LawCheck("shift", h, float(gap), 0.0, {"c": c})


def check_nonexpansive(
    cfg: ModelConfig,
    phi: MeasureFunctional,
    psi: MeasureFunctional,
    h: float,
    probes,
    lambda_hat: float,
    dt: float,
    tol: float = 1e-10,
) -> tuple[float, float, dict]:
    """``(max |tau_h Phi - tau_h Psi|, sup |Phi - Psi|)`` plus the order check.

    The sup runs over the probes and every terminal measure reached. The
    order check is only binding when ``Phi <= Psi`` on that panel; its
    violation is ``max (tau_h Phi - tau_h Psi)^+``.
    """
    a, b, panel = [], [], list(probes)
    for p in probes:
        ra = lax_oleinik_full(cfg, phi, h, p, lambda_hat, dt, tol)
        rb = lax_oleinik_full(cfg, psi, h, p, lambda_hat, dt, tol)
        a.append(ra.value)
        b.append(rb.value)
        panel += [ra.terminal, rb.terminal]
    diffs = np.array([phi.value(q) - psi.value(q) for q in panel])
    a, b = np.array(a), np.array(b)
    ordered = bool(np.all(diffs <= 0))
    order = {"ordered": ordered, "violation": float(max(0.0, np.max(a - b))) if ordered else 0.0}
    return float(np.max(np.abs(a - b))), float(np.max(np.abs(diffs))), order


def check_monotone_h(
    cfg: ModelConfig, phi: MeasureFunctional, hs, probes, lambda_hat: float, dt: float, tol: float = 1e-6
) -> dict:
    """If ``Phi <= tau_h Phi + tol`` on the probes for every ``h`` in ``hs``,
    report the largest ``tau_h1 Phi - tau_h2 Phi`` over ``h1 < h2``."""
    hs = sorted(hs)
    vals = np.array([[lax_oleinik(cfg, phi, h, p, lambda_hat, dt) for p in probes] for h in hs])
    base = np.array([phi.value(p) for p in probes])
    premise = bool(np.all(base <= vals + tol))
    worst = 0.0
    for i in range(len(hs)):
        for j in range(i + 1, len(hs)):
            worst = max(worst, float(np.max(vals[i] - vals[j])))
    return {"premise": premise, "violation": max(worst, 0.0), "values": vals}


def corrector_fixed_point(cfg: ModelConfig, chi: MeasureFunctional, h: float, lambda_hat: float, dt: float) -> tuple[float, float]:
    """``(max |tau_h chi - chi|, max probe distance)`` over the table's own probes."""
    gap, dist = 0.0, 0.0
    for p, c in zip(chi.probes, chi.table):
        r = lax_oleinik_full(cfg, chi, h, p, lambda_hat, dt)
        gap = max(gap, abs(r.value - c))
        dist = max(dist, r.probe_distance)
    return gap, dist


# -- calibrated curves -----------------------------------------------------


@dataclass(eq=False)
class CalibrationReport:
    times: np.ndarray
    m: np.ndarray
    intervals: list[tuple[float, float]]
    defects: np.ndarray
    distances: np.ndarray
    corrector: MeasureFunctional
    T: float

    @property
    def max_defect(self) -> float:
        return float(np.max(np.abs(self.defects))) if self.defects.size else 0.0

    @property
    def max_distance(self) -> float:
        return float(np.max(self.distances)) if self.distances.size else 0.0


def extract_calibrated(
    cfg: ModelConfig,
    m0: ProbMeasure,
    T: float,
    window: tuple[float, float],
    lambda_hat: float,
    chi_table: MeasureFunctional,
    dt: float,
    *,
    interval: float = 1.0,
    tol: float = 1e-10,
) -> CalibrationReport:
    """Restrict the ``[0, 2T]`` minimizer to ``window`` (times measured from ``T``).

    On each subinterval ``[t1, t2]`` the defect is
    ``chi(m(t1)) - [lambda*(t2 - t1) + cost(t1, t2) + chi(m(t2))]``.
    """
    a, b = window
    if not -T < a <= b < T:
        raise InvalidInputError(f"window {window} is not inside (-{T}, {T})")
    traj, _ = solve_variational(cfg, cfg.grid, m0, 2 * T, dt, tol)
    rates = step_costs(cfg, traj)
    ka, kb = traj.index_of(a + T), traj.index_of(b + T)
    stride = max(1, int(round(interval / dt)))
    marks = list(range(ka, kb, stride)) + [kb]
    if len(marks) < 2 or marks[0] == marks[-1]:
        marks = [ka]
    intervals, defects, dists = [], [], []
    chi_cache = {}
    for k in marks:
        val = chi_table.value(traj.measure(k))
        chi_cache[k] = (val, chi_table.last_distance if chi_table.kind == "table" else 0.0)
    for k1, k2 in zip(marks, marks[1:]):
        cost = float(np.sum(rates[k1:k2]) * dt)
        span = (k2 - k1) * dt
        c1, d1 = chi_cache[k1]
        c2, d2 = chi_cache[k2]
        defects.append(c1 - (lambda_hat * span + cost + c2))
        dists.append(max(d1, d2))
        intervals.append((float(traj.times[k1] - T), float(traj.times[k2] - T)))
    sl = slice(ka, kb + 1)
    return CalibrationReport(
        traj.times[sl] - T, traj.m[sl].copy(), intervals, np.array(defects), np.array(dists), chi_table, T
    )


def write_semigroup_tsv(path: str | Path, checks: list[LawCheck]) -> None:
    lines = ["law\th\tgap\tinterpolation_error"]
    lines += [f"{c.law}\t{c.h!r}\t{c.gap!r}\t{c.interpolation_error!r}" for c in checks]
    Path(path).write_text("\n".join(lines) + "\n")


def write_calibrated_tsv(path: str | Path, report: CalibrationReport) -> None:
    lines = ["t1\tt2\tdefect\tprobe_distance"]
    for (t1, t2), d, dist in zip(report.intervals, report.defects, report.distances):
        lines.append(f"{t1!r}\t{t2!r}\t{float(d)!r}\t{float(dist)!r}")
    Path(path).write_text("\n".join(lines) + "\n")

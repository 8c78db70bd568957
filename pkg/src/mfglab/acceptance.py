"""The twelve acceptance checks as plain functions.

Each check builds what it needs from an :class:`AcceptanceContext` (the
benchmark model, time step and seed) and returns a :class:`CheckResult` with
the measured numbers, the threshold it was held to, and a pass flag. The
harness and the test-suite both call these.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import ergodic, mather, oracles, particles, semigroup
from .mfg import heat_flow, solve_fbs, solve_variational
from .model import ModelConfig, kernel_benchmark, potential_model, resample_model, trivial_model
from .torus import Field, ProbMeasure, TorusGrid, VectorField, divergence, gradient, laplacian, wasserstein1


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    measured: dict = field(default_factory=dict)
    threshold: str = ""
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        parts = ", ".join(f"{k}={_fmt(v)}" for k, v in self.measured.items())
        return f"[{status}] {self.number:2d} {self.name}: {parts} | need {self.threshold} ({self.seconds:.1f}s)"


def _ratio(a: float, b: float) -> float:
    """``a / b`` with ``0/0 -> nan`` and ``x/0 -> inf``, so degenerate ratios fail."""
    if b > 0:
        return a / b
    return float("nan") if a == 0 else float("inf")


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.4g}"
    return str(v)


@dataclass
class AcceptanceContext:
    """Shared inputs; the benchmark defaults to the kernel model on 32 points."""

    cfg: ModelConfig | None = None
    dt: float = 0.01
    seed: int = 0
    horizons: tuple[float, ...] = (4.0, 8.0, 16.0, 32.0)
    burn_in: float = 4.0

    def __post_init__(self):
        if self.cfg is None:
            self.cfg = kernel_benchmark(TorusGrid(1, 32))

    @property
    def grid(self) -> TorusGrid:
        return self.cfg.grid

    @cached_property
    def panel(self) -> tuple[list[str], list[ProbMeasure]]:
        return ergodic.probe_panel(self.grid, self.seed)

    def probe(self, name: str) -> ProbMeasure:
        ids, probes = self.panel
        return probes[ids.index(name)]

    @cached_property
    def lambda_estimate(self) -> ergodic.LambdaEstimate:
        return ergodic.estimate_lambda_slope(self.cfg, self.probe("uniform"), self.horizons, self.dt)

    @property
    def lambda_hat(self) -> float:
        return self.lambda_estimate.value


def _timed(fn):
    def wrapper(ctx: AcceptanceContext) -> CheckResult:
        start = time.perf_counter()
        res = fn(ctx)
        res.seconds = time.perf_counter() - start
        return res

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@_timed
def check_trivial(ctx: AcceptanceContext) -> CheckResult:
    """Everything is explicit when the coupling is the constant 0.7."""
    start = time.perf_counter()
    grid = TorusGrid(1, 16)
    c0 = 0.7
    cfg = trivial_model(grid, c0)
    dt = 0.01
    ids, probes = ergodic.probe_panel(grid, ctx.seed)
    bump = probes[ids.index("bump_narrow")]
    est = ergodic.estimate_lambda_slope(cfg, bump, (1.0, 2.0, 4.0), dt)
    lam_n = [particles.solve_cell_problem(cfg, N, grid.n).lambda_N for N in (1, 2, 3)]
    traj, _ = solve_fbs(cfg, grid, bump, 4.0, dt)
    en = ergodic.energy_drift(cfg, traj)
    tab = ergodic.corrector_table(cfg, probes, 2.0, est.value, dt)
    occ = mather.occupation_measure(traj, 2.0)
    tests = mather.default_tests(grid)
    mres = max(
        mather.closedness_residual(occ, tests),
        abs(mather.mather_objective(cfg, occ) - c0),
        mather.weak_kam_identity_residual(cfg, occ, -c0),
    )
    elapsed = time.perf_counter() - start
    m = {
        "lambda_slope_err": abs(est.value + c0),
        "lambda_N_err": max(abs(x + c0) for x in lam_n),
        "energy_err": float(np.max(np.abs(en.c_values + c0))),
        "energy_drift": en.drift,
        "chi_max": float(np.max(np.abs(tab.chi_hat))),
        "mather_max": mres,
        "runtime_s": elapsed,
    }
    ok = (
        m["lambda_slope_err"] <= 1e-6 and m["lambda_N_err"] <= 1e-6 and m["energy_err"] <= 1e-9
        and m["energy_drift"] <= 1e-9 and m["chi_max"] <= 1e-6 and m["mather_max"] <= 1e-8 and elapsed <= 60
    )
    return CheckResult(1, "trivial-model exactness", ok, m, "errors <=1e-6 (lambda, chi), <=1e-9 (energy), <=1e-8 (Mather), <=60s")


@_timed
def check_lambda_cross(ctx: AcceptanceContext) -> CheckResult:
    """Value slope against the N-particle constants."""
    lam = ctx.lambda_hat
    l1 = particles.solve_cell_problem(ctx.cfg, 1, ctx.grid.n).lambda_N
    l3 = particles.solve_cell_problem(ctx.cfg, 3, ctx.grid.n).lambda_N
    rel = _ratio(abs(l3 - lam), abs(lam))
    m = {"lambda_slope": lam, "lambda_1": l1, "lambda_3": l3, "rel_gap_3": rel, "closer_at_3": abs(l3 - lam) < abs(l1 - lam)}
    return CheckResult(2, "lambda cross-validation", bool(rel <= 0.05 and m["closer_at_3"]), m, "rel_gap_3 <= 0.05 and |l3-lam| < |l1-lam|")


@_timed
def check_energy(ctx: AcceptanceContext) -> CheckResult:
    """Energy drift is first order in (dt, h^2) and under the stated bound."""
    levels = [(16, 2 * ctx.dt), (32, ctx.dt), (64, ctx.dt / 2)]
    drifts, bounds = [], []
    for n, dt in levels:
        cfg = resample_model(ctx.cfg, n)
        ids, probes = ergodic.probe_panel(cfg.grid, ctx.seed)
        traj, _ = solve_fbs(cfg, cfg.grid, probes[ids.index("bump_narrow")], 6.0, dt)
        d = ergodic.energy_drift(cfg, traj)
        drifts.append(d.drift)
        bounds.append(5 * (dt + cfg.grid.spacing**2) * d.scale)
    ratios = [_ratio(a, b) for a, b in zip(drifts, drifts[1:])]
    m = {f"drift_n{n}": d for (n, _), d in zip(levels, drifts)}
    m.update({f"bound_n{n}": b for (n, _), b in zip(levels, bounds)})
    m["min_refine_ratio"] = float(np.min(ratios))
    ok = all(d <= b for d, b in zip(drifts, bounds)) and all(r >= 1.5 for r in ratios)
    return CheckResult(3, "energy invariant", ok, m, "drift <= 5(dt+h^2)scale at each level, refinement ratio >= 1.5")


@_timed
def check_energy_limit(ctx: AcceptanceContext) -> CheckResult:
    """Time-averaged energy approaches the slope constant."""
    lam = ctx.lambda_hat
    gaps = {}
    for T in (4.0, 16.0):
        traj, _ = solve_fbs(ctx.cfg, ctx.grid, ctx.probe("bump_narrow"), T, ctx.dt)
        gaps[T] = ergodic.energy_drift(ctx.cfg, traj, lam).terminal_gap
    ratio = _ratio(gaps[16.0], gaps[4.0])
    m = {"gap_T4": gaps[4.0], "gap_T16": gaps[16.0], "ratio": ratio}
    return CheckResult(4, "c -> lambda", ratio <= 0.6, m, "ratio <= 0.6")


@_timed
def check_corrector(ctx: AcceptanceContext) -> CheckResult:
    """Cauchy test of the corrector tables and uniform Lipschitz ratios."""
    ids, probes = ctx.panel
    lam = ctx.lambda_hat
    tabs = {T: ergodic.corrector_table(ctx.cfg, probes, T, lam, ctx.dt, probe_ids=ids) for T in (4.0, 8.0, 16.0)}
    c4 = float(np.max(np.abs(tabs[4.0].chi_hat - tabs[8.0].chi_hat)))
    c8 = float(np.max(np.abs(tabs[8.0].chi_hat - tabs[16.0].chi_hat)))
    lips = [t.max_lipschitz() for t in tabs.values()]
    lip_spread = _ratio(max(lips), min(lips))
    ratio = _ratio(c8, c4)
    m = {"cauchy_T4": c4, "cauchy_T8": c8, "ratio": ratio, "lipschitz_max": max(lips), "lipschitz_spread": lip_spread}
    return CheckResult(5, "corrector convergence", bool(ratio <= 0.6 and lip_spread <= 2.0), m, "ratio <= 0.6, Lipschitz max/min over T <= 2")


@_timed
def check_xi(ctx: AcceptanceContext) -> CheckResult:
    inc, xi = ergodic.xi_monotonicity(ctx.cfg, ctx.probe("bump_narrow"), 8.0, (0.0, 2.0, 4.0, 6.0), ctx.dt, ctx.lambda_hat)
    scale = float(np.max(np.abs(xi)))
    m = {"max_increment": inc, "max_abs_xi": scale}
    return CheckResult(6, "xi monotonicity", inc <= 0.01 * scale, m, "max_increment <= 0.01 max|xi|")


@_timed
def check_bernstein(ctx: AcceptanceContext) -> CheckResult:
    """Bernstein sup over N at n=32 and over n in {16, 32} for each N."""
    vals = {(N, n): particles.solve_cell_problem(ctx.cfg, N, n).bernstein_sup for N in (1, 2, 3) for n in (16, 32)}
    across_N = _ratio(max(vals[(N, 32)] for N in (1, 2, 3)), min(vals[(N, 32)] for N in (1, 2, 3)))
    across_n = max(_ratio(max(vals[(N, 16)], vals[(N, 32)]), min(vals[(N, 16)], vals[(N, 32)])) for N in (1, 2, 3))
    m = {f"B_N{N}_n{n}": v for (N, n), v in vals.items()}
    m.update({"ratio_across_N": across_N, "ratio_across_n": across_n})
    return CheckResult(7, "Bernstein boundedness", bool(across_N <= 2 and across_n <= 2), m, "both ratios <= 2")


@_timed
def check_subcorrector(ctx: AcceptanceContext) -> CheckResult:
    """One constant C, fitted on N in {1, 2}, must also cover N=3."""
    _, probes = ctx.panel
    res = {}
    for N in (1, 2, 3):
        sol = particles.solve_cell_problem(ctx.cfg, N, ctx.grid.n)
        res[N] = [particles.subsolution_residual(ctx.cfg, sol, p) for p in probes]
    c_fit = particles.fit_residual_constant({N: res[N] for N in (1, 2)})
    c_all = particles.fit_residual_constant(res)
    pos3 = max(max(r, 0.0) for r in res[3])
    m = {f"max_residual_N{N}": max(res[N]) for N in res}
    m.update({"C_fit_N12": c_fit, "C_all": c_all, "N3_positive": pos3})
    ok = bool(np.isfinite(c_all) and pos3 <= c_fit * particles.glivenko_rate(3) + 1e-12)
    return CheckResult(8, "sub-corrector inequality", ok, m, "positive part <= C eps_N with one C")


@_timed
def check_mather(ctx: AcceptanceContext) -> CheckResult:
    lam = ctx.lambda_hat
    tests = mather.default_tests(ctx.grid)
    m0 = ctx.probe("bump_narrow")
    closed, ident = {}, 0.0
    obj32 = None
    for T in (16.0, 32.0):
        traj, _ = solve_fbs(ctx.cfg, ctx.grid, m0, T, ctx.dt)
        occ = mather.occupation_measure(traj, ctx.burn_in)
        closed[T] = mather.closedness_residual(occ, tests)
        c = ergodic.energy_drift(ctx.cfg, traj).c_values
        k0 = traj.index_of(ctx.burn_in)
        ident = max(ident, float(np.max(np.abs(mather.identity_terms(ctx.cfg, occ, lam) - (c[k0:k0 + occ.size] - lam)))))
        if T == 32.0:
            obj32 = mather.mather_objective(ctx.cfg, occ)
    forced = mather.mather_objective(ctx.cfg, mather.occupation_measure(heat_flow(ctx.cfg, m0, 32.0, ctx.dt), ctx.burn_in))
    ratio = _ratio(closed[32.0], closed[16.0])
    rel = _ratio(abs(obj32 + lam), abs(lam))
    margin = forced + lam
    m = {
        "closed_T16": closed[16.0], "closed_T32": closed[32.0], "closed_ratio": ratio,
        "objective_rel_gap": rel, "forced_margin": margin, "identity_vs_energy": ident,
    }
    ok = 0.35 <= ratio <= 0.65 and rel <= 0.03 and margin > 0 and ident <= 1e-9
    return CheckResult(9, "Mather properties", bool(ok), m, "ratio in [0.35,0.65], rel <= 0.03, margin > 0, identity <= 1e-9")


def _semigroup_functionals(grid: TorusGrid, seed: int):
    tests = mather.default_tests(grid)
    rng = np.random.default_rng(seed + 101)

    def random_phi():
        pick = rng.choice(len(tests), size=2, replace=False)
        coefs = rng.uniform(-0.05, 0.05, size=2)
        return semigroup.MeasureFunctional.cylindrical([(c, tests[i]) for c, i in zip(coefs, pick)])

    return tests, random_phi


@_timed
def check_semigroup_laws(ctx: AcceptanceContext) -> CheckResult:
    lam = ctx.lambda_hat
    _, probes = ctx.panel
    tests, random_phi = _semigroup_functionals(ctx.grid, ctx.seed)
    h = 0.5
    phi = random_phi()
    pairs = [(phi, phi.shifted(0.3)), (phi, phi)] + [(random_phi(), random_phi()) for _ in range(3)]
    # an ordered pair: cos >= -1, so the added term is nonnegative
    psi = semigroup.MeasureFunctional.cylindrical(phi.terms + [(0.02, tests[8])], shift=phi.shift + 0.02)
    pairs.append((phi, psi))
    expand, order = 0.0, 0.0
    for a, b in pairs:
        lhs, rhs, ordr = semigroup.check_nonexpansive(ctx.cfg, a, b, h, probes, lam, ctx.dt)
        expand = max(expand, lhs - rhs)
        order = max(order, ordr["violation"])
    comp = semigroup.check_semigroup(ctx.cfg, phi, 0.5, 0.5, probes, lam, ctx.dt)
    shift = semigroup.check_shift(ctx.cfg, phi, 0.3, h, probes, lam, ctx.dt)
    rel = _ratio(comp.gap, comp.extra["value_scale"])
    m = {
        "expansion": expand, "order_violation": order, "composition_gap": comp.gap,
        "value_scale": comp.extra["value_scale"], "composition_rel": rel,
        "interpolation_error": comp.interpolation_error, "shift_gap": shift.gap,
    }
    ok = expand <= 1e-3 and order <= 1e-3 and rel <= 0.05 and shift.gap <= 1e-8
    return CheckResult(10, "semigroup laws", bool(ok), m, "violations <= 1e-3, composition <= 5% scale, shift <= 1e-8")


def calibration_defect(ctx: AcceptanceContext, T: float, window=(-4.0, 4.0), chi_T: float = 8.0) -> semigroup.CalibrationReport:
    """Middle-window defect with a corrector table enriched by the window's own measures."""
    _, probes = ctx.panel
    m0 = ctx.probe("bump_narrow")
    traj, _ = solve_variational(ctx.cfg, ctx.grid, m0, 2 * T, ctx.dt)
    marks = np.arange(window[0], window[1] + 0.5, 1.0)
    extra = [traj.measure(traj.index_of(T + s)) for s in marks]
    tab = ergodic.corrector_table(ctx.cfg, list(probes) + extra, chi_T, ctx.lambda_hat, ctx.dt)
    chi = semigroup.MeasureFunctional.from_table(tab.probes, tab.chi_hat)
    return semigroup.extract_calibrated(ctx.cfg, m0, T, window, ctx.lambda_hat, chi, ctx.dt)


@_timed
def check_calibrated(ctx: AcceptanceContext) -> CheckResult:
    d8 = calibration_defect(ctx, 8.0).max_defect
    d16 = calibration_defect(ctx, 16.0).max_defect
    ratio = _ratio(d16, d8)
    m = {"defect_T8": d8, "defect_T16": d16, "ratio": ratio}
    return CheckResult(11, "calibrated curves", ratio <= 0.7, m, "ratio <= 0.7")


def _operator_orders() -> dict:
    errs = {"gradient": [], "divergence": [], "laplacian": []}
    ns = (16, 32, 64)
    for n in ns:
        grid = TorusGrid(1, n)
        x = grid.axis()
        f = Field(grid, np.sin(2 * np.pi * x))
        two_pi = 2 * np.pi
        errs["gradient"].append(np.max(np.abs(gradient(f).values[0] - two_pi * np.cos(two_pi * x))))
        flux = VectorField(grid, (-two_pi * np.sin(two_pi * x))[None, :])
        errs["divergence"].append(np.max(np.abs(divergence(flux).values + two_pi**2 * np.cos(two_pi * x))))
        errs["laplacian"].append(np.max(np.abs(laplacian(f).values + two_pi**2 * np.sin(two_pi * x))))
    return {k: min(np.log2(a / b) for a, b in zip(v, v[1:])) for k, v in errs.items()}


@_timed
def check_oracles(ctx: AcceptanceContext) -> CheckResult:
    grid = TorusGrid(1, 16)
    rng = np.random.default_rng(ctx.seed)
    w1_err = 0.0
    for _ in range(5):
        a = ProbMeasure.normalized(grid, rng.random(16))
        b = ProbMeasure.normalized(grid, rng.random(16) ** 3)
        w1_err = max(w1_err, abs(wasserstein1(a, b) - oracles.w1_linprog(a.masses(), b.masses())))
    g64 = TorusGrid(1, 64)
    cfg = potential_model(g64, np.cos(2 * np.pi * g64.axis()), 0.0)
    lam1 = particles.solve_cell_problem(cfg, 1, 64).lambda_N
    lam_ref = oracles.ergodic_constant_1d()
    orders = _operator_orders()
    m = {"w1_err": w1_err, "cell_N1_err": abs(lam1 - lam_ref)}
    m.update({f"order_{k}": v for k, v in orders.items()})
    ok = w1_err <= 1e-9 and m["cell_N1_err"] <= 1e-4 and min(orders.values()) >= 1.8
    return CheckResult(12, "discretization oracles", bool(ok), m, "w1 <= 1e-9, cell <= 1e-4, orders >= 1.8")


CHECKS = {
    1: check_trivial,
    2: check_lambda_cross,
    3: check_energy,
    4: check_energy_limit,
    5: check_corrector,
    6: check_xi,
    7: check_bernstein,
    8: check_subcorrector,
    9: check_mather,
    10: check_semigroup_laws,
    11: check_calibrated,
    12: check_oracles,
}


def run_checks(ctx: AcceptanceContext, numbers=None) -> list[CheckResult]:
    return [CHECKS[k](ctx) for k in sorted(numbers or CHECKS)]

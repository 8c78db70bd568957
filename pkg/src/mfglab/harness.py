"""Named experiments, run manifests and manifest comparison.

A run reads one INI file: the model sections understood by
:func:`mfglab.model.parse_model_config` plus an optional ``[experiment]``
section with numeric parameters. Outputs go to a directory as ``*.tsv``
tables and a ``manifest`` text file.
"""

from __future__ import annotations

import configparser
import datetime as _dt
import hashlib
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, acceptance, ergodic, mather, particles, semigroup
from .mfg import heat_flow, solve_fbs
from .model import ConfigError, ModelConfig, parse_model_config

log = logging.getLogger(__name__)

KINDS = (
    "lambda-slope", "cell-problem", "energy", "corrector", "monotonicity",
    "mather", "semigroup", "calibrated", "full-report",
)

_DEFAULTS = {
    "dt": 0.01,
    "horizons": (4.0, 8.0, 16.0, 32.0),
    "t": 16.0,
    "particles": (1, 2, 3),
    "n_particle": 32,
    "tol": 1e-10,
    "burn_in": 4.0,
    "probe": "bump_narrow",
    "h": 0.5,
    "window": (-4.0, 4.0),
    "sample_times": (0.0, 2.0, 4.0, 6.0),
    "seed": 0,
    "criteria": tuple(range(1, 13)),
    "budget": particles.DEFAULT_BUDGET,
}

_FLOAT_LISTS = {"horizons", "window", "sample_times"}
_INT_LISTS = {"particles", "criteria"}
_INTS = {"n_particle", "seed", "budget"}
_STRINGS = {"probe"}


class SchemaMismatchError(ValueError):
    pass


@dataclass
class ExperimentSpec:
    config_path: Path
    kind: str
    params: dict
    out_dir: Path
    model: ModelConfig
    config_text: str = ""

    @property
    def seed(self) -> int:
        return int(self.params["seed"])

    def digest(self) -> str:
        items = sorted((k, repr(v)) for k, v in self.params.items())
        payload = f"{self.kind}\n{self.config_text}\n{items}"
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _parse_params(parser: configparser.ConfigParser) -> dict:
    params = dict(_DEFAULTS)
    if not parser.has_section("experiment"):
        return params
    for key, raw in parser["experiment"].items():
        if key not in _DEFAULTS:
            raise ConfigError(f"experiment.{key}", "unknown key")
        try:
            if key in _FLOAT_LISTS:
                val = tuple(float(x) for x in raw.split(","))
            elif key in _INT_LISTS:
                val = tuple(int(x) for x in raw.split(","))
            elif key in _INTS:
                val = int(raw)
            elif key in _STRINGS:
                val = raw.strip()
            else:
                val = float(raw)
        except ValueError:
            raise ConfigError(f"experiment.{key}", f"cannot parse {raw!r}") from None
        params[key] = val
    return params


def _validate(params: dict, model: ModelConfig) -> None:
    if params["dt"] <= 0:
        raise ConfigError("experiment.dt", "must be positive")
    if len(params["horizons"]) < 3 or any(b <= a for a, b in zip(params["horizons"], params["horizons"][1:])):
        raise ConfigError("experiment.horizons", "need at least three increasing horizons")
    for N in params["particles"]:
        if N < 1 or params["n_particle"] ** N > params["budget"]:
            raise ConfigError("experiment.particles", f"N={N} at n={params['n_particle']} exceeds the node budget")
    if params["burn_in"] < 1 or params["burn_in"] >= params["t"]:
        raise ConfigError("experiment.burn_in", "need 1 <= burn_in < t")
    a, b = params["window"]
    if not -params["t"] < a <= b < params["t"]:
        raise ConfigError("experiment.window", "window must lie inside (-t, t)")
    ids, _ = ergodic.probe_panel(model.grid)
    if params["probe"] not in ids:
        raise ConfigError("experiment.probe", f"unknown probe; choose from {ids}")
    bad = [c for c in params["criteria"] if c not in acceptance.CHECKS]
    if bad:
        raise ConfigError("experiment.criteria", f"unknown criteria {bad}")


def load_spec(config_path: str | Path, kind: str, out_dir: str | Path, seed: int | None = None) -> ExperimentSpec:
    if kind not in KINDS:
        raise ConfigError("kind", f"unknown experiment {kind!r}; choose from {', '.join(KINDS)}")
    path = Path(config_path)
    if not path.exists():
        raise ConfigError("--config", f"{path} does not exist")
    text = path.read_text()
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("<file>", str(exc)) from exc
    model = parse_model_config(text, path.parent, passthrough=("experiment",))
    params = _parse_params(parser)
    if seed is not None:
        params["seed"] = int(seed)
    _validate(params, model)
    return ExperimentSpec(path, kind, params, Path(out_dir), model, text)


# -- manifest --------------------------------------------------------------


@dataclass
class RunManifest:
    spec_hash: str
    code_version: str
    seed: int
    kind: str
    started: str = ""
    finished: str = ""
    results: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def dumps(self) -> str:
        lines = [
            "# mfglab manifest v1",
            f"spec_hash\t{self.spec_hash}",
            f"code_version\t{self.code_version}",
            f"seed\t{self.seed}",
            f"kind\t{self.kind}",
            f"started\t{self.started}",
            f"finished\t{self.finished}",
        ]
        lines += [f"result.{k}\t{_num(v)}" for k, v in self.results.items()]
        lines += [f"check.{k}\t{'pass' if v else 'fail'}" for k, v in self.checks.items()]
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> RunManifest:
        head, results, checks = {}, {}, {}
        for line in text.splitlines():
            if not line or line.startswith("#"):
                continue
            key, _, val = line.partition("\t")
            if key.startswith("result."):
                results[key[7:]] = float(val)
            elif key.startswith("check."):
                checks[key[6:]] = val == "pass"
            else:
                head[key] = val
        return cls(
            head.get("spec_hash", ""), head.get("code_version", ""), int(head.get("seed", 0)),
            head.get("kind", ""), head.get("started", ""), head.get("finished", ""), results, checks,
        )


def _num(v) -> str:
    return repr(float(v))


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


# -- experiments -----------------------------------------------------------


def _lambda(spec: ExperimentSpec) -> ergodic.LambdaEstimate:
    p = spec.params
    ids, probes = ergodic.probe_panel(spec.model.grid, spec.seed)
    return ergodic.estimate_lambda_slope(spec.model, probes[ids.index("uniform")], p["horizons"], p["dt"], tol=p["tol"])


def _probe(spec: ExperimentSpec):
    ids, probes = ergodic.probe_panel(spec.model.grid, spec.seed)
    return probes[ids.index(spec.params["probe"])]


def _exp_lambda(spec, res, checks):
    est = _lambda(spec)
    ergodic.write_lambda_tsv(spec.out_dir / "lambda.tsv", [est, ergodic.increment_estimate(est)])
    res.update(lambda_slope=est.value, lambda_increment=est.increment, intercept=est.intercept, fit_residual=est.residual)
    checks["slope_matches_increment"] = abs(est.value - est.increment) <= 0.02 * abs(est.value) + 1e-9


def _exp_cell(spec, res, checks):
    p = spec.params
    cfg = spec.model
    rows = []
    for N in p["particles"]:
        sol = particles.solve_cell_problem(cfg, N, p["n_particle"], budget=p["budget"])
        rows.append(particles.cell_row(sol))
        (spec.out_dir / f"v_N{N}.txt").write_text(particles.dump_solution(sol))
        lip = particles.lipschitz_wasserstein_check(sol, seed=spec.seed)
        res.update({f"lambda_N{N}": sol.lambda_N, f"bernstein_N{N}": sol.bernstein_sup, f"lipschitz_N{N}": lip})
        # maximum principle: |lambda_N| <= sup |H(x, 0) - F(m_x)|
        bound = float(np.max(np.abs(sol.model.potential))) + _coupling_sup(sol.model, N)
        checks[f"normalized_N{N}"] = sol.normalization_gap <= 1e-8
        checks[f"symmetric_N{N}"] = sol.symmetry_gap <= 1e-8
        checks[f"lambda_bounded_N{N}"] = abs(sol.lambda_N) <= bound + 1e-12
    cols = ["N", "n", "lambda_N", "bernstein_sup", "symmetry_gap", "normalization_gap"]
    lines = ["\t".join(cols)] + ["\t".join(repr(r[c]) for c in cols) for r in rows]
    (spec.out_dir / "cell.tsv").write_text("\n".join(lines) + "\n")


def _coupling_sup(cfg: ModelConfig, N: int) -> float:
    return float(np.max(np.abs(particles._empirical_coupling(cfg, N))))


def _exp_energy(spec, res, checks):
    p = spec.params
    est = _lambda(spec)
    traj, _ = solve_fbs(spec.model, spec.model.grid, _probe(spec), p["t"], p["dt"], p["tol"])
    d = ergodic.energy_drift(spec.model, traj, est.value)
    lines = ["t\tc"] + [f"{t!r}\t{c!r}" for t, c in zip(d.times, d.c_values)]
    (spec.out_dir / "energy.tsv").write_text("\n".join(lines) + "\n")
    bound = 5 * (p["dt"] + spec.model.grid.spacing**2) * d.scale
    res.update(drift=d.drift, scale=d.scale, drift_bound=bound, c_mean=d.mean, c_gap=d.terminal_gap, lambda_slope=est.value)
    checks["drift_within_bound"] = d.drift <= bound


def _exp_corrector(spec, res, checks):
    p = spec.params
    est = _lambda(spec)
    ids, probes = ergodic.probe_panel(spec.model.grid, spec.seed)
    T = p["t"]
    tabs = [ergodic.corrector_table(spec.model, probes, t, est.value, p["dt"], probe_ids=ids, tol=p["tol"]) for t in (T, 2 * T)]
    ergodic.write_corrector_tsv(spec.out_dir / "corrector.tsv", tabs)
    res.update(
        lambda_slope=est.value,
        cauchy=float(np.max(np.abs(tabs[0].chi_hat - tabs[1].chi_hat))),
        lipschitz_T=tabs[0].max_lipschitz(),
        lipschitz_2T=tabs[1].max_lipschitz(),
    )
    for pid, chi in zip(ids, tabs[1].chi_hat):
        res[f"chi[{pid}]"] = chi
    checks["finite"] = all(np.all(np.isfinite(t.chi_hat)) for t in tabs)


def _exp_monotonicity(spec, res, checks):
    p = spec.params
    est = _lambda(spec)
    T = max(p["sample_times"]) + 2.0
    inc, xi = ergodic.xi_monotonicity(spec.model, _probe(spec), T, p["sample_times"], p["dt"], est.value, tol=p["tol"])
    lines = ["t\txi"] + [f"{t!r}\t{float(x)!r}" for t, x in zip(sorted(p["sample_times"]), xi)]
    (spec.out_dir / "xi.tsv").write_text("\n".join(lines) + "\n")
    res.update(max_increment=inc, max_abs_xi=float(np.max(np.abs(xi))), horizon=T)
    checks["nonincreasing"] = inc <= 0.01 * float(np.max(np.abs(xi))) + 1e-9


def _exp_mather(spec, res, checks):
    p = spec.params
    cfg = spec.model
    est = _lambda(spec)
    traj, _ = solve_fbs(cfg, cfg.grid, _probe(spec), p["t"], p["dt"], p["tol"])
    occ = mather.occupation_measure(traj, p["burn_in"])
    tests = mather.default_tests(cfg.grid)
    mather.write_mather_tsv(spec.out_dir / "mather.tsv", cfg, occ, tests, est.value)
    c = ergodic.energy_drift(cfg, traj).c_values
    k0 = traj.index_of(p["burn_in"])
    ident = float(np.max(np.abs(mather.identity_terms(cfg, occ, est.value) - (c[k0:k0 + occ.size] - est.value))))
    forced = mather.mather_objective(cfg, mather.occupation_measure(heat_flow(cfg, _probe(spec), p["t"], p["dt"]), p["burn_in"]))
    inv, grad, fisher = mather.smoothness_diagnostics(occ)
    res.update(
        lambda_slope=est.value,
        objective=mather.mather_objective(cfg, occ),
        forced_objective=forced,
        closedness=mather.closedness_residual(occ, tests),
        weak_kam=mather.weak_kam_identity_residual(cfg, occ, est.value),
        identity_vs_energy=ident,
        sup_inv_density=inv, sup_grad_density=grad, sup_fisher=fisher,
    )
    checks["identity_matches_energy"] = ident <= 1e-9
    checks["forced_not_below"] = forced >= -est.value - 1e-9
    checks["smooth"] = all(math.isfinite(x) for x in (inv, grad, fisher))


def _exp_semigroup(spec, res, checks):
    p = spec.params
    cfg = spec.model
    est = _lambda(spec)
    _, probes = ergodic.probe_panel(cfg.grid, spec.seed)
    _, random_phi = acceptance._semigroup_functionals(cfg.grid, spec.seed)
    phi, psi = random_phi(), random_phi()
    h = p["h"]
    comp = semigroup.check_semigroup(cfg, phi, h, h, probes, est.value, p["dt"], p["tol"])
    shift = semigroup.check_shift(cfg, phi, 0.3, h, probes, est.value, p["dt"], p["tol"])
    lhs, rhs, order = semigroup.check_nonexpansive(cfg, phi, psi, h, probes, est.value, p["dt"], p["tol"])
    ne = semigroup.LawCheck("nonexpansive", h, max(0.0, lhs - rhs), 0.0)
    semigroup.write_semigroup_tsv(spec.out_dir / "semigroup.tsv", [comp, shift, ne])
    res.update(
        lambda_slope=est.value, composition_gap=comp.gap, value_scale=comp.extra["value_scale"],
        interpolation_error=comp.interpolation_error, shift_gap=shift.gap, nonexpansive_lhs=lhs, nonexpansive_rhs=rhs,
    )
    checks["composition"] = comp.gap <= 0.05 * comp.extra["value_scale"] + 1e-12
    checks["shift"] = shift.gap <= 1e-8
    checks["nonexpansive"] = lhs <= rhs + 1e-3
    checks["order"] = order["violation"] <= 1e-3


def _exp_calibrated(spec, res, checks):
    p = spec.params
    ctx = acceptance.AcceptanceContext(spec.model, p["dt"], spec.seed, p["horizons"], p["burn_in"])
    report = acceptance.calibration_defect(ctx, p["t"], p["window"])
    semigroup.write_calibrated_tsv(spec.out_dir / "calibrated.tsv", report)
    res.update(lambda_slope=ctx.lambda_hat, max_defect=report.max_defect, max_probe_distance=report.max_distance)
    checks["finite"] = math.isfinite(report.max_defect)


def _exp_full(spec, res, checks):
    p = spec.params
    ctx = acceptance.AcceptanceContext(spec.model, p["dt"], spec.seed, p["horizons"], p["burn_in"])
    results = acceptance.run_checks(ctx, p["criteria"])
    lines = ["criterion\tname\tpassed\tmeasured"]
    for r in results:
        for key, val in r.measured.items():
            if isinstance(val, (bool, np.bool_, int, float, np.floating)):
                res[f"c{r.number}.{key}"] = float(val)
        checks[f"criterion_{r.number}"] = bool(r.passed)
        meas = ";".join(f"{k}={acceptance._fmt(v)}" for k, v in r.measured.items())
        lines.append(f"{r.number}\t{r.name}\t{'pass' if r.passed else 'fail'}\t{meas}")
    (spec.out_dir / "acceptance.tsv").write_text("\n".join(lines) + "\n")


_EXPERIMENTS = {
    "lambda-slope": _exp_lambda,
    "cell-problem": _exp_cell,
    "energy": _exp_energy,
    "corrector": _exp_corrector,
    "monotonicity": _exp_monotonicity,
    "mather": _exp_mather,
    "semigroup": _exp_semigroup,
    "calibrated": _exp_calibrated,
    "full-report": _exp_full,
}


def run(spec: ExperimentSpec) -> RunManifest:
    """Execute one experiment, writing its tables and the manifest."""
    spec.out_dir.mkdir(parents=True, exist_ok=True)
    man = RunManifest(spec.digest(), __version__, spec.seed, spec.kind, started=_now())
    try:
        _EXPERIMENTS[spec.kind](spec, man.results, man.checks)
    except Exception as exc:
        raise RuntimeError(f"experiment {spec.kind!r} failed: {exc}") from exc
    man.checks = {k: bool(v) for k, v in man.checks.items()}
    man.finished = _now()
    (spec.out_dir / "manifest").write_text(man.dumps())
    return man


# -- comparison ------------------------------------------------------------


@dataclass
class DiffEntry:
    key: str
    a: float
    b: float

    @property
    def delta(self) -> float:
        return abs(self.a - self.b)

    @property
    def relative(self) -> float:
        scale = max(abs(self.a), abs(self.b))
        return self.delta / scale if scale > 0 else 0.0


@dataclass
class DiffReport:
    entries: list[DiffEntry]

    @property
    def empty(self) -> bool:
        return not self.entries

    def dumps(self) -> str:
        lines = ["field\ta\tb\tabs_delta\trel_delta"]
        lines += [f"{e.key}\t{e.a!r}\t{e.b!r}\t{e.delta!r}\t{e.relative!r}" for e in self.entries]
        return "\n".join(lines) + "\n"


def _as_manifest(m) -> RunManifest:
    if isinstance(m, RunManifest):
        return m
    path = Path(m)
    if path.is_dir():
        path = path / "manifest"
    return RunManifest.loads(path.read_text())


def compare(manifest_a, manifest_b, tolerances: dict | None = None, default_tol: float = 0.0) -> DiffReport:
    """Fields whose values differ by more than their tolerance (absolute).

    Result and check fields must match as sets; a check's value is 1 for pass
    and 0 for fail.
    """
    a, b = _as_manifest(manifest_a), _as_manifest(manifest_b)
    if set(a.results) != set(b.results) or set(a.checks) != set(b.checks):
        missing = sorted(set(a.results) ^ set(b.results)) + sorted(set(a.checks) ^ set(b.checks))
        raise SchemaMismatchError(f"manifests have different fields: {missing}")
    tol = tolerances or {}
    out = []
    for key in a.results:
        e = DiffEntry(key, a.results[key], b.results[key])
        both_nan = math.isnan(e.a) and math.isnan(e.b)
        if not both_nan and not e.delta <= tol.get(key, default_tol):
            out.append(e)
    for key in a.checks:
        if a.checks[key] != b.checks[key]:
            out.append(DiffEntry(f"check.{key}", float(a.checks[key]), float(b.checks[key])))
    return DiffReport(out)

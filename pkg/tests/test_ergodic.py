import numpy as np
import pytest

from mfglab.ergodic import (
    LambdaEstimate,
    corrector_table,
    energy,
    energy_drift,
    estimate_lambda_slope,
    increment_estimate,
    lipschitz_ratios,
    probe_panel,
    value,
    write_corrector_tsv,
    write_lambda_tsv,
    xi_monotonicity,
)
from mfglab.mfg import InvalidInputError, solve_fbs
from mfglab.model import potential_model
from mfglab.torus import Field, ProbMeasure

from conftest import bump

DT = 0.02


def test_energy_of_trivial_model(trivial16):
    g = trivial16.grid
    u = Field(g, np.zeros(16))
    assert energy(trivial16, u, bump(g)) == pytest.approx(-0.7)


def test_energy_is_zero_without_costs(grid16):
    cfg = potential_model(grid16, np.zeros(16))
    u = Field(grid16, np.zeros(16))
    assert energy(cfg, u, bump(grid16)) == 0.0


def test_energy_drift_on_trivial_trajectory(trivial16):
    traj, _ = solve_fbs(trivial16, trivial16.grid, bump(trivial16.grid), 1.0, DT)
    diag = energy_drift(trivial16, traj, lambda_hat=-0.7)
    assert diag.drift < 1e-12
    assert diag.terminal_gap < 1e-12
    assert diag.mean == pytest.approx(-0.7)


def test_slope_recovers_trivial_constant(trivial16):
    est = estimate_lambda_slope(trivial16, bump(trivial16.grid), (1.0, 2.0, 3.0), DT)
    assert est.value == pytest.approx(-0.7, abs=1e-10)
    assert est.residual <= 1e-9
    assert increment_estimate(est).value == pytest.approx(-0.7, abs=1e-10)


def test_slope_and_increment_agree_on_kernel(kernel16):
    est = estimate_lambda_slope(kernel16, bump(kernel16.grid), (2.0, 3.0, 4.0), DT)
    assert est.increment == pytest.approx(est.value, abs=1e-7)


def test_slope_input_errors(trivial16):
    m = bump(trivial16.grid)
    with pytest.raises(InvalidInputError):
        estimate_lambda_slope(trivial16, m, (1.0, 2.0), DT)
    with pytest.raises(InvalidInputError):
        estimate_lambda_slope(trivial16, m, (1.0, 3.0, 2.0), DT)
    with pytest.raises(ValueError):
        LambdaEstimate(0.0, "guess", (1.0,), 0.0)
    assert value(trivial16, m, 0.0, DT) == 0.0


def test_probe_panel(grid16):
    ids, probes = probe_panel(grid16, seed=3)
    assert len(ids) == len(set(ids)) == 8
    assert all(abs(p.mass() - 1.0) < 1e-12 for p in probes)
    ids2, probes2 = probe_panel(grid16, seed=3)
    assert all(np.array_equal(a.density, b.density) for a, b in zip(probes, probes2))


def test_trivial_corrector_is_flat(trivial16):
    ids, probes = probe_panel(trivial16.grid)
    tab = corrector_table(trivial16, probes, 2.0, -0.7, DT, probe_ids=ids)
    assert np.max(np.abs(tab.chi_hat)) < 1e-10
    assert tab.max_lipschitz() < 1e-8


def test_lipschitz_ratios_diagonal(grid16):
    _, probes = probe_panel(grid16)
    r = lipschitz_ratios(probes[:3], np.array([0.0, 1.0, 2.0]))
    assert np.all(np.isnan(np.diag(r)))
    assert np.allclose(r, r.T, equal_nan=True)


def test_xi(kernel16):
    m = bump(kernel16.grid)
    inc, xi = xi_monotonicity(kernel16, m, 2.0, [0.5], DT, 0.0)
    assert inc == 0.0 and xi.size == 1
    est = estimate_lambda_slope(kernel16, m, (2.0, 3.0, 4.0), DT)
    inc, xi = xi_monotonicity(kernel16, m, 2.0, [0.0, 0.5, 1.0, 1.5], DT, est.value)
    assert inc <= 1e-8


def test_tables_written(tmp_path, trivial16):
    est = estimate_lambda_slope(trivial16, bump(trivial16.grid), (1.0, 2.0, 3.0), DT)
    write_lambda_tsv(tmp_path / "l.tsv", [est, increment_estimate(est)])
    lines = (tmp_path / "l.tsv").read_text().splitlines()
    assert lines[0].split("\t") == ["method", "horizons", "estimate", "residual"]
    assert len(lines) == 3
    tab = corrector_table(trivial16, [ProbMeasure.uniform(trivial16.grid)], 1.0, -0.7, DT, probe_ids=["uniform"])
    write_corrector_tsv(tmp_path / "c.tsv", [tab])
    assert (tmp_path / "c.tsv").read_text().splitlines()[1].startswith("uniform\t1.0\t")

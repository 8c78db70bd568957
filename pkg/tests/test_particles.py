import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfglab.model import potential_model, trivial_model
from mfglab.oracles import ergodic_constant_1d
from mfglab.particles import (
    BudgetError,
    ParticleGrid,
    dump_solution,
    empirical_measure,
    fit_residual_constant,
    flat_derivative_WN,
    glivenko_rate,
    lipschitz_wasserstein_check,
    project_WN,
    solve_cell_problem,
    subsolution_residual,
)
from mfglab.torus import ProbMeasure, TorusGrid

from conftest import bump


@pytest.fixture(scope="module")
def kernel_sols(kernel16):
    return {N: solve_cell_problem(kernel16, N, 16) for N in (1, 2)}


def test_trivial_cell_problem(trivial16):
    sol = solve_cell_problem(trivial16, 2, 8)
    assert np.max(np.abs(sol.v)) < 1e-12
    assert sol.lambda_N == pytest.approx(-0.7)


def test_single_particle_matches_floquet_oracle():
    g = TorusGrid(1, 64)
    cfg = potential_model(g, np.cos(2 * np.pi * g.axis()))
    sol = solve_cell_problem(cfg, 1, 64)
    assert sol.lambda_N == pytest.approx(ergodic_constant_1d(), abs=1e-4)


def test_potential_model_separates():
    g = TorusGrid(1, 16)
    cfg = potential_model(g, 0.5 * np.cos(2 * np.pi * g.axis()))
    one = solve_cell_problem(cfg, 1, 16)
    two = solve_cell_problem(cfg, 2, 16)
    assert two.lambda_N == pytest.approx(one.lambda_N, abs=1e-8)


def test_solution_invariants(kernel_sols):
    for sol in kernel_sols.values():
        assert sol.symmetry_gap < 1e-10
        assert sol.normalization_gap < 1e-12
        assert np.isfinite(sol.bernstein_sup)
        assert sol.history[-1] <= 1e-10


def test_budget():
    with pytest.raises(BudgetError):
        ParticleGrid(3, 16, budget=1000)
    with pytest.raises(ValueError):
        ParticleGrid(0, 16)
    assert ParticleGrid(2, 16).nodes == 256
    assert glivenko_rate(4) == 0.5


def test_projection_at_uniform_vanishes(kernel_sols):
    g = TorusGrid(1, 16)
    for sol in kernel_sols.values():
        val, dm, _ = project_WN(sol, ProbMeasure.uniform(g))
        # v has zero mean over the tensor grid
        assert abs(val) < 1e-12
        assert dm.values.shape == (1, 16)


def test_projection_of_zero_function(trivial16):
    sol = solve_cell_problem(trivial16, 2, 16)
    val, dm, lap = project_WN(sol, bump(trivial16.grid))
    assert abs(val) < 1e-14
    assert np.max(np.abs(dm.values)) < 1e-12 and np.max(np.abs(lap.values)) < 1e-10


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_flat_derivative_by_finite_differences(kernel_sols, seed):
    sol = kernel_sols[2]
    g = TorusGrid(1, 16)
    rng = np.random.default_rng(seed)
    m = ProbMeasure.normalized(g, 0.2 + rng.random(16))
    other = ProbMeasure.normalized(g, 0.2 + rng.random(16))
    direction = other.density - m.density
    eps = 1e-4

    def W(dens):
        return project_WN(sol, ProbMeasure(g, dens))[0]

    fd = (W(m.density + eps * direction) - W(m.density - eps * direction)) / (2 * eps)
    exact = g.spacing * flat_derivative_WN(sol, m).values @ direction
    assert fd == pytest.approx(exact, rel=1e-5, abs=1e-12)


def test_subsolution_residual_is_finite(kernel16, kernel_sols):
    r = subsolution_residual(kernel16, kernel_sols[2], bump(kernel16.grid))
    assert np.isfinite(r)


def test_fit_constant():
    assert fit_residual_constant({1: [-1.0], 4: [0.1, -2.0]}) == pytest.approx(0.2)
    assert fit_residual_constant({2: []}) == 0.0


def test_lipschitz_check_skips_identical_measures(kernel_sols):
    sol = kernel_sols[2]
    val = lipschitz_wasserstein_check(sol, pair_samples=50)
    assert np.isfinite(val) and val >= 0
    # permuted particle labels give the same empirical measure
    g = TorusGrid(1, 16)
    assert np.array_equal(empirical_measure(g, [3, 7]).density, empirical_measure(g, [7, 3]).density)


def test_dump_header(kernel_sols):
    text = dump_solution(kernel_sols[2])
    head = text.splitlines()[0]
    assert head.startswith("# torus-field v1 dim=2 n=16 kind=field")
    assert "N=2" in head
    assert len(text.splitlines()) == 1 + 256

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mfglab import _kernels as kern
from mfglab.mfg import (
    CFLError,
    InvalidInputError,
    check_cfl,
    diffusion_inverse,
    dynamic_programming_gap,
    evaluate_cost,
    forward,
    load_trajectory,
    save_trajectory,
    solve_fbs,
    solve_variational,
    time_grid,
)
from mfglab.model import trivial_model
from mfglab.torus import ProbMeasure, TorusGrid

from conftest import bump

DT = 0.02


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, (10, 16), elements=st.floats(-3, 3)))
def test_forward_conserves_mass_and_sign(alpha):
    g = TorusGrid(1, 16)
    cfg = trivial_model(g)
    m = forward(cfg, bump(g, kappa=5.0), alpha, DT)
    assert np.allclose(m.sum(axis=1) * g.spacing, 1.0, atol=1e-13)
    # |alpha| <= 3 keeps the explicit transport inside the monotone range here
    assert m.min() > -1e-14


def test_diffusion_inverse_is_stochastic():
    A = diffusion_inverse(TorusGrid(1, 12), 0.05)
    assert np.allclose(A.sum(axis=0), 1.0) and np.allclose(A.sum(axis=1), 1.0)
    assert A.min() > 0


def test_adjoint_gradient_matches_finite_differences(kernel16):
    g = kernel16.grid
    K = 20
    rng = np.random.default_rng(0)
    alpha = 0.3 * rng.standard_normal((K, 16))
    dens0 = bump(g).density
    Ainv = diffusion_inverse(g, DT)
    h = g.spacing
    V, lin, ker = kernel16.potential, kernel16.linear, kernel16.kernel

    def cost(a):
        m = kern.forward_fp(dens0, a, Ainv, DT, h)
        return kern.running_cost(m, a, DT, h, V, 0.0, lin, ker)

    m = kern.forward_fp(dens0, alpha, Ainv, DT, h)
    _, _, grad, _ = kern.backward_adjoint(m, alpha, np.zeros(16), Ainv, DT, h, V, lin, ker, False)
    direction = rng.standard_normal((K, 16))
    eps = 1e-6
    fd = (cost(alpha + eps * direction) - cost(alpha - eps * direction)) / (2 * eps)
    assert fd == pytest.approx(np.sum(grad * direction), rel=1e-6)


def test_trivial_model_value_is_explicit(trivial16):
    g = trivial16.grid
    for solver in (solve_variational, solve_fbs):
        traj, rep = solver(trivial16, g, bump(g), 1.0, DT)
        assert rep.value == pytest.approx(0.7, abs=1e-12)
        assert np.max(np.abs(traj.alpha)) < 1e-12


def test_solvers_agree_on_kernel_model(kernel16):
    g = kernel16.grid
    m0 = bump(g, 0.3, 4.0)
    tv, rv = solve_variational(kernel16, g, m0, 2.0, DT)
    tf, rf = solve_fbs(kernel16, g, m0, 2.0, DT)
    assert rv.value == pytest.approx(rf.value, abs=1e-8)
    assert np.max(np.abs(tv.m - tf.m)) < 1e-4
    assert evaluate_cost(kernel16, tv) == pytest.approx(rv.value, abs=1e-14)
    assert tf.fp_residual < 1e-10 and tv.fp_residual < 1e-10
    assert rf.fixed_point_residual <= 1e-6


def test_optimum_beats_perturbations(kernel16):
    g = kernel16.grid
    m0 = bump(g, 0.3, 4.0)
    traj, rep = solve_variational(kernel16, g, m0, 1.0, DT)
    rng = np.random.default_rng(5)
    K = traj.steps
    for _ in range(5):
        a = traj.alpha.copy()
        a[:K] += 0.05 * rng.standard_normal((K, g.n))
        from mfglab.mfg import Trajectory

        m = forward(kernel16, m0, a[:K], DT)
        other = Trajectory(g, traj.times, m, a)
        assert evaluate_cost(kernel16, other) > rep.value


def test_dynamic_programming(kernel16):
    gap = dynamic_programming_gap(kernel16, bump(kernel16.grid), 2.0, 1.0, DT)
    assert gap < 1e-8


def test_terminal_cost_enters_value(kernel16):
    g = kernel16.grid

    class Linear:
        psi = np.cos(2 * np.pi * g.axis())

        def value(self, m):
            return float(g.spacing * self.psi @ m.density)

        def derivative(self, m):
            return self.psi

    traj, rep = solve_variational(kernel16, g, bump(g), 1.0, DT, terminal=Linear())
    free, _ = solve_variational(kernel16, g, bump(g), 1.0, DT)
    assert rep.value == pytest.approx(evaluate_cost(kernel16, traj) + Linear().value(traj.measure(traj.steps)))
    # the terminal reward on cos pulls mass away from x = 0
    assert Linear().value(traj.measure(traj.steps)) < Linear().value(free.measure(free.steps))


def test_errors(kernel16):
    with pytest.raises(CFLError):
        check_cfl(TorusGrid(1, 16), 0.1, 10.0)
    with pytest.raises(InvalidInputError):
        time_grid(0.0, 1.0, 0.3)
    with pytest.raises(InvalidInputError):
        solve_variational(kernel16, kernel16.grid, ProbMeasure.uniform(TorusGrid(1, 8)), 1.0, DT)
    big = trivial_model(TorusGrid(1, 64), 0.0)
    from mfglab.model import potential_model

    steep = potential_model(big.grid, 40 * np.cos(2 * np.pi * big.grid.axis()))
    with pytest.raises(CFLError):
        solve_fbs(steep, steep.grid, ProbMeasure.uniform(steep.grid), 2.0, 0.05)


def test_trajectory_round_trip(tmp_path, kernel16):
    traj, rep = solve_fbs(kernel16, kernel16.grid, bump(kernel16.grid), 0.2, DT)
    save_trajectory(traj, tmp_path / "run", kernel16, rep.value)
    back = load_trajectory(tmp_path / "run")
    assert np.array_equal(back.m, traj.m)
    assert np.array_equal(back.alpha, traj.alpha)
    assert np.array_equal(back.u, traj.u)
    assert back.index_of(0.1) == 5
    with pytest.raises(InvalidInputError):
        back.index_of(0.015)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfglab.model import (
    ConfigError,
    ModelConfig,
    audit_assumptions,
    conjugate,
    coupling_derivative,
    coupling_value,
    da_conjugate,
    dp_hamiltonian,
    hamiltonian,
    kernel_benchmark,
    load_model_config,
    parse_model_config,
    potential_at,
    resample_model,
    trivial_model,
)
from mfglab.torus import ProbMeasure, TorusGrid, UnsupportedDimensionError

from conftest import bump

reals = st.floats(-20, 20)


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 1), reals, reals)
def test_fenchel_young(x, p, a):
    cfg = kernel_benchmark(TorusGrid(1, 16))
    assert hamiltonian(cfg, x, p) + conjugate(cfg, x, a) >= p * a - 1e-9
    # equality at a = D_pH(x, p)
    a_star = dp_hamiltonian(cfg, x, p)
    assert hamiltonian(cfg, x, p) + conjugate(cfg, x, a_star) == pytest.approx(p * a_star, abs=1e-9)
    assert da_conjugate(cfg, x, a_star) == pytest.approx(p)


def test_potential_interpolates_nodes_exactly():
    cfg = kernel_benchmark(TorusGrid(1, 16))
    x = cfg.grid.axis()
    assert np.allclose(potential_at(cfg, x), cfg.potential)
    xs = np.linspace(0, 1, 37)
    assert np.allclose(potential_at(cfg, xs), 0.2 * np.cos(2 * np.pi * xs))
    assert np.allclose(potential_at(cfg, xs, order=1), -0.4 * np.pi * np.sin(2 * np.pi * xs))


def test_trivial_coupling(grid16):
    cfg = trivial_model(grid16, 0.7)
    m = bump(grid16)
    assert coupling_value(cfg, m) == 0.7
    assert np.all(coupling_derivative(cfg, m).values == 0)


@pytest.mark.parametrize("kind", ["linear", "quadratic_kernel"])
def test_coupling_derivative_matches_finite_differences(kind, grid16):
    rng = np.random.default_rng(3)
    if kind == "linear":
        cfg = ModelConfig(grid16, coupling_kind="linear", linear=rng.standard_normal(16))
    else:
        k = rng.standard_normal((16, 16))
        cfg = ModelConfig(grid16, coupling_kind="quadratic_kernel", kernel=k + k.T)
    m = bump(grid16)
    delta = rng.standard_normal(16)
    delta -= delta.mean()
    eps = 1e-6
    plus = ProbMeasure(grid16, m.density + eps * delta)
    minus = ProbMeasure(grid16, m.density - eps * delta)
    fd = (coupling_value(cfg, plus) - coupling_value(cfg, minus)) / (2 * eps)
    F = coupling_derivative(cfg, m).values
    assert fd == pytest.approx(grid16.spacing * F @ delta, rel=1e-6)
    # normalization: ∫ F dm = 0
    assert abs(grid16.spacing * F @ m.density) < 1e-12


def test_kernel_coupling_closed_form():
    g = TorusGrid(1, 32)
    cfg = kernel_benchmark(g)
    # m = 1 + a cos(2πx) has first Fourier moment a/2, so the double
    # integral of -0.5 cos(2π(x-y)) against m⊗m is -0.5 (a/2)^2
    a = 0.6
    m = ProbMeasure(g, 1 + a * np.cos(2 * np.pi * g.axis()))
    assert coupling_value(cfg, m) == pytest.approx(-a * a / 8, rel=1e-12)


def test_model_validation(grid16):
    with pytest.raises(UnsupportedDimensionError):
        ModelConfig(TorusGrid(2, 4))
    with pytest.raises(ConfigError, match="symmetric"):
        ModelConfig(grid16, coupling_kind="quadratic_kernel", kernel=np.triu(np.ones((16, 16))))
    with pytest.raises(ConfigError, match="theta"):
        ModelConfig(grid16, growth_theta=1.5)
    with pytest.raises(ConfigError):
        ModelConfig(grid16, convexity_lower=2.0, convexity_upper=1.0)
    cfg = trivial_model(grid16)
    assert not cfg.potential.flags.writeable


def test_audit_passes_and_reports_constant():
    cfg = kernel_benchmark(TorusGrid(1, 32))
    rep = audit_assumptions(cfg)
    assert rep.passed
    # sup of |V''| / (1+|p|)^(1+theta) is 4π^2 * 0.2, approached near p = 0
    req = rep.checks["dxx_growth"].required
    assert 0.8 * 4 * np.pi**2 * 0.2 < req <= 4 * np.pi**2 * 0.2 * (1 + 1e-6)
    tight = ModelConfig(cfg.grid, "quadratic_plus_potential", potential=cfg.potential, growth_C=1.0)
    bad = audit_assumptions(tight)
    assert not bad.checks["dxx_growth"].passed
    loose = ModelConfig(cfg.grid, convexity_lower=1.5, convexity_upper=2.0)
    assert not audit_assumptions(loose).checks["convexity"].passed


def test_parse_config_round_trip(tmp_path):
    text = """
[grid]
n = 16
[model]
kind = quadratic_kernel
kernel_cos = -0.5
potential_cos = 0.2
"""
    cfg = parse_model_config(text)
    ref = kernel_benchmark(TorusGrid(1, 16))
    assert np.allclose(cfg.kernel, ref.kernel) and np.allclose(cfg.potential, ref.potential)
    assert cfg.hamiltonian_kind == "quadratic_plus_potential"


@pytest.mark.parametrize(
    "text,key",
    [
        ("[grid]\nn = sixteen\n", "grid.n"),
        ("[grid]\nn = 16\ncolour = red\n", "grid.colour"),
        ("[model]\nkind = cubic\n", "model.kind"),
        ("[oops]\na = 1\n", "oops"),
        ("[assumptions]\ntheta = 2\n", "assumptions.theta"),
    ],
)
def test_parse_errors_name_the_key(text, key):
    with pytest.raises(ConfigError) as info:
        parse_model_config(text)
    assert info.value.key == key


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_model_config(tmp_path / "nope.ini")


def test_resample_keeps_trigonometric_data():
    cfg = kernel_benchmark(TorusGrid(1, 16))
    fine = resample_model(cfg, 48)
    ref = kernel_benchmark(TorusGrid(1, 48))
    assert np.allclose(fine.kernel, ref.kernel, atol=1e-12)
    assert np.allclose(fine.potential, ref.potential, atol=1e-12)
    assert resample_model(cfg, 16) is cfg

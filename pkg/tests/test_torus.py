import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mfglab.oracles import w1_linprog
from mfglab.torus import (
    Field,
    GridMismatchError,
    ProbMeasure,
    TorusGrid,
    UnsupportedDimensionError,
    VectorField,
    divergence,
    dumps,
    gradient,
    inner,
    integrate_against,
    laplacian,
    loads,
    vector_inner,
    wasserstein1,
)

weights16 = arrays(np.float64, 16, elements=st.floats(0.0, 1.0)).filter(lambda w: w.sum() > 1e-3)


def test_grid_basics():
    g = TorusGrid(2, 8)
    assert g.shape == (8, 8)
    assert g.size == 64
    assert g.cell_volume == pytest.approx(1 / 64)
    X, Y = g.coords()
    assert X[3, 0] == pytest.approx(3 / 8) and Y[0, 5] == pytest.approx(5 / 8)
    with pytest.raises(ValueError):
        TorusGrid(0, 4)


def test_measure_validation():
    g = TorusGrid(1, 8)
    with pytest.raises(ValueError):
        ProbMeasure(g, np.full(8, 2.0))
    with pytest.raises(ValueError):
        ProbMeasure(g, np.r_[-0.1, np.full(7, 8.1 / 7)])
    tiny = np.ones(8)
    tiny[0] -= 1e-13
    tiny[1] += 1e-13
    m = ProbMeasure(g, tiny)
    assert m.mass() == pytest.approx(1.0, abs=1e-12)
    assert not m.density.flags.writeable


def test_dirac_and_uniform():
    g = TorusGrid(1, 10)
    d = ProbMeasure.dirac(g, 3)
    assert d.masses()[3] == pytest.approx(1.0)
    u = ProbMeasure.uniform(g)
    assert wasserstein1(u, u) == 0.0
    # moving a unit point mass by k cells costs the geodesic distance
    assert wasserstein1(ProbMeasure.dirac(g, 0), ProbMeasure.dirac(g, 3)) == pytest.approx(0.3)
    assert wasserstein1(ProbMeasure.dirac(g, 0), ProbMeasure.dirac(g, 8)) == pytest.approx(0.2)


@settings(max_examples=40, deadline=None)
@given(weights16, weights16)
def test_w1_matches_transport_lp(a, b):
    g = TorusGrid(1, 16)
    ma, mb = ProbMeasure.normalized(g, a), ProbMeasure.normalized(g, b)
    assert wasserstein1(ma, mb) == pytest.approx(w1_linprog(ma.masses(), mb.masses()), abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(weights16, weights16, weights16)
def test_w1_is_a_metric(a, b, c):
    g = TorusGrid(1, 16)
    ma, mb, mc = (ProbMeasure.normalized(g, w) for w in (a, b, c))
    assert wasserstein1(ma, mb) == pytest.approx(wasserstein1(mb, ma), abs=1e-14)
    assert wasserstein1(ma, mc) <= wasserstein1(ma, mb) + wasserstein1(mb, mc) + 1e-12
    assert wasserstein1(ma, mb) <= 0.5 + 1e-12


def test_w1_rejects_higher_dimension():
    g = TorusGrid(2, 4)
    with pytest.raises(UnsupportedDimensionError):
        wasserstein1(ProbMeasure.uniform(g), ProbMeasure.uniform(g))


def test_grid_mismatch():
    with pytest.raises(GridMismatchError):
        inner(Field.zeros(TorusGrid(1, 8)), Field.zeros(TorusGrid(1, 16)))


@pytest.mark.parametrize("op", ["gradient", "divergence", "laplacian"])
def test_operators_are_second_order(op):
    errs = []
    for n in (16, 32, 64, 128):
        g = TorusGrid(1, n)
        x = g.axis()
        w = 2 * np.pi
        if op == "gradient":
            err = gradient(Field(g, np.sin(w * x))).values[0] - w * np.cos(w * x)
        elif op == "divergence":
            err = divergence(VectorField(g, np.cos(w * x)[None, :])).values + w * np.sin(w * x)
        else:
            err = laplacian(Field(g, np.sin(w * x))).values + w * w * np.sin(w * x)
        errs.append(np.max(np.abs(err)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 1.9)


def test_operators_in_two_dimensions():
    g = TorusGrid(2, 32)
    X, Y = g.coords()
    f = Field(g, np.sin(2 * np.pi * X) * np.cos(2 * np.pi * Y))
    lap = laplacian(f).values
    assert np.max(np.abs(lap + 8 * np.pi**2 * f.values)) < 0.01 * 8 * np.pi**2


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, 12, elements=st.floats(-5, 5)), arrays(np.float64, 12, elements=st.floats(-5, 5)))
def test_divergence_is_minus_adjoint_of_gradient(u, v):
    g = TorusGrid(1, 12)
    lhs = vector_inner(gradient(Field(g, u)), VectorField(g, v[None, :]))
    rhs = -inner(Field(g, u), divergence(VectorField(g, v[None, :])))
    assert lhs == pytest.approx(rhs, abs=1e-9)


def test_laplacian_annihilates_constants_and_sums_to_zero():
    g = TorusGrid(1, 20)
    assert np.allclose(laplacian(Field(g, np.full(20, 3.0))).values, 0.0)
    rng = np.random.default_rng(0)
    assert abs(laplacian(Field(g, rng.standard_normal(20))).values.sum()) < 1e-9


def test_integrate_against_uniform_is_mean():
    g = TorusGrid(1, 16)
    f = Field(g, np.arange(16.0))
    assert integrate_against(f, ProbMeasure.uniform(g)) == pytest.approx(7.5)


@settings(max_examples=25, deadline=None)
@given(weights16)
def test_serialization_round_trip(w):
    g = TorusGrid(1, 16)
    m = ProbMeasure.normalized(g, w)
    back = loads(dumps(m))
    assert isinstance(back, ProbMeasure)
    assert np.array_equal(back.density, m.density)
    f = Field(g, w - 0.5)
    assert np.array_equal(loads(dumps(f)).values, f.values)
    v = VectorField(g, (w * 3)[None, :])
    assert np.array_equal(loads(dumps(v)).values, v.values)


def test_header_extras():
    g = TorusGrid(1, 4)
    text = dumps(Field.zeros(g), {"t": 0.5})
    assert text.splitlines()[0] == "# torus-field v1 dim=1 n=4 kind=field t=0.5"
    with pytest.raises(ValueError):
        loads("# something else\n1\n")

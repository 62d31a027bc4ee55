import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from pnlab.grid import (
    Grid,
    GridFunction,
    continuum_lambda1,
    first_eigenpair,
    gradient,
    grad_norm,
    integrate,
    inner,
    l2_norm,
    laplacian,
    laplacian_matrix,
)
from pnlab.gridio import from_binary, read_binary, read_csv, to_binary, write_binary, write_csv


def _order(errs, ns):
    hs = [1.0 / (n + 1) for n in ns]
    return [np.log(e0 / e1) / np.log(h0 / h1) for e0, e1, h0, h1 in zip(errs, errs[1:], hs, hs[1:])]


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid((1.0,), (2,))
    with pytest.raises(ValueError):
        Grid((0.0,), (5,))
    with pytest.raises(ValueError):
        Grid((1.0, 1.0, 1.0), (4, 4, 4))
    g = Grid.uniform(7, 2.0)
    assert g.spacing[0] * 8 == pytest.approx(2.0, rel=1e-15)
    assert g.refine().n_cells == (15,)


def test_gridfunction_checks():
    g = Grid.uniform(5)
    with pytest.raises(ValueError):
        GridFunction(g, np.array([1, 2, np.nan, 4, 5]))
    with pytest.raises(ValueError):
        GridFunction(g, np.ones(4))
    u = GridFunction(g, np.arange(5.0))
    with pytest.raises(ValueError):
        u.values[0] = 3.0
    assert np.allclose((2 * u - u).values, u.values)


def test_zero_field():
    g = Grid.uniform(9, dim=2)
    z = g.zeros()
    assert np.all(laplacian(z).values == 0)
    assert all(np.all(c.values == 0) for c in gradient(z))
    assert integrate(z) == 0


def test_laplacian_order_1d():
    errs = []
    ns = [100, 200, 400]
    for n in ns:
        g = Grid.uniform(n)
        u = g.sample(lambda x: np.sin(np.pi * x))
        errs.append(np.max(np.abs(laplacian(u).values + np.pi**2 * u.values)))
    assert all(1.8 <= p <= 2.2 for p in _order(errs, ns))


def test_laplacian_order_2d():
    errs = []
    ns = [20, 40, 80]
    for n in ns:
        g = Grid.uniform(n, dim=2)
        u = g.sample(lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y))
        errs.append(np.max(np.abs(laplacian(u).values + 2 * np.pi**2 * u.values)))
    assert all(1.8 <= p <= 2.2 for p in _order(errs, ns))


def test_gradient_order_1d():
    errs = []
    ns = [100, 200, 400]
    for n in ns:
        g = Grid.uniform(n)
        u = g.sample(lambda x: np.sin(np.pi * x))
        exact = g.sample(lambda x: np.pi * np.cos(np.pi * x))
        errs.append(np.max(np.abs(gradient(u)[0].values - exact.values)))
    assert all(1.8 <= p <= 2.2 for p in _order(errs, ns))


def test_gradient_2d_components():
    ns = [20, 40, 80]
    errs = []
    for n in ns:
        g = Grid.uniform(n, dim=2)
        u = g.sample(lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y))
        gx, gy = gradient(u)
        ex = g.sample(lambda x, y: np.pi * np.cos(np.pi * x) * np.sin(np.pi * y))
        ey = g.sample(lambda x, y: np.pi * np.sin(np.pi * x) * np.cos(np.pi * y))
        errs.append(max(np.max(np.abs(gx.values - ex.values)), np.max(np.abs(gy.values - ey.values))))
    assert all(p >= 1.0 for p in _order(errs, ns))


def test_integrals():
    g = Grid.uniform(200)
    assert integrate(g.sample(lambda x: np.sin(np.pi * x))) == pytest.approx(2 / np.pi, abs=1e-4)
    g2 = Grid.uniform(100, dim=2)
    assert integrate(g2.sample(lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y))) == pytest.approx(4 / np.pi**2, abs=1e-3)
    with pytest.raises(TypeError):
        integrate(np.ones(3))


def test_first_eigenpair_1d():
    g = Grid.uniform(200)
    eig = first_eigenpair(g)
    assert eig.lambda1 == pytest.approx(np.pi**2)
    assert abs(eig.lambda1_discrete - np.pi**2) / np.pi**2 <= 1e-3
    assert eig.residual <= 1e-10
    assert np.all(eig.v1.values > 0)
    s = g.sample(lambda x: np.sin(np.pi * x))
    s = s * (1 / l2_norm(s))
    assert l2_norm(eig.v1 - s) <= 1e-3


def test_first_eigenpair_2d():
    g = Grid((1.0, 2.0), (15, 31))
    eig = first_eigenpair(g)
    assert continuum_lambda1(g) == pytest.approx(np.pi**2 * 1.25)
    assert eig.lambda1_discrete == pytest.approx(np.pi**2 * 1.25, rel=5e-3)
    assert first_eigenpair(Grid.uniform(9, dim=2)).lambda1 == pytest.approx(2 * np.pi**2)


def test_matrix_matches_stencil():
    g = Grid((1.0, 3.0), (6, 9))
    u = np.random.default_rng(1).standard_normal(g.shape)
    A = laplacian_matrix(g)
    assert np.allclose(A @ u.ravel(), laplacian(GridFunction(g, u)).values.ravel(), rtol=1e-13, atol=1e-9)


fields_1d = arrays(np.float64, 12, elements=st.floats(-5, 5, allow_nan=False))


@settings(max_examples=50, deadline=None)
@given(fields_1d, fields_1d, st.floats(-3, 3), st.floats(-3, 3))
def test_linearity_and_symmetry(a, b, s, t):
    g = Grid.uniform(12)
    u, w = GridFunction(g, a), GridFunction(g, b)
    lhs = laplacian(s * u + t * w).values
    rhs = s * laplacian(u).values + t * laplacian(w).values
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12 * (1 + np.max(np.abs(lhs))))
    x, y = inner(laplacian(u), w), inner(u, laplacian(w))
    assert abs(x - y) <= 1e-10 * max(1.0, abs(x))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (5, 6), elements=st.floats(0, 10, allow_nan=False)))
def test_integral_positivity(vals):
    assert integrate(GridFunction(Grid((1.0, 1.0), (5, 6)), vals)) >= 0


def test_poincare_random_fields():
    rng = np.random.default_rng(7)
    for grid in [Grid.uniform(31), Grid.uniform(15, dim=2)]:
        lam = first_eigenpair(grid).lambda1_discrete
        for _ in range(50):
            u = GridFunction(grid, rng.standard_normal(grid.shape))
            assert integrate(u * u) <= integrate(grad_norm(u) * grad_norm(u)) / lam * (1 + 1e-12)


def test_binary_roundtrip(tmp_path):
    g = Grid((1.0, 2.5), (4, 7))
    u = GridFunction(g, np.random.default_rng(0).standard_normal(g.shape))
    data = to_binary(u)
    assert len(data) == 8 + 16 + 16 + 8 * 28
    back = from_binary(data)
    assert back.grid == g and np.array_equal(back.values, u.values)
    write_binary(u, tmp_path / "u.bin")
    assert np.array_equal(read_binary(tmp_path / "u.bin").values, u.values)
    with pytest.raises(ValueError):
        from_binary(data[:-8])


def test_csv_roundtrip(tmp_path):
    g = Grid.uniform(6, dim=2)
    u = g.sample(lambda x, y: x - y**2)
    write_csv(u, tmp_path / "u.csv")
    assert (tmp_path / "u.csv").read_text().splitlines()[0] == "index,x,y,value"
    assert np.array_equal(read_csv(tmp_path / "u.csv", g).values, u.values)

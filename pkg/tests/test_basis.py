import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from distreg.basis import (
    CoefficientVector,
    FunctionOnGrid,
    Grid,
    inner_product,
    make_basis,
    project,
    reconstruct,
)
from distreg.errors import GridMismatch, InvalidGrid, InvalidSize, UnknownBasis

TEMP_GRID = Grid(-20.0, 40.0, 0.1)


def test_grid_points_and_validation():
    g = Grid(-20, 40, 0.1)
    assert g.size == 601
    np.testing.assert_allclose(g.points, -20 + 0.1 * np.arange(601), rtol=1e-12)
    assert g.points[-1] == pytest.approx(40.0, rel=1e-12)
    with pytest.raises(InvalidGrid):
        Grid(0, 1, 0.3)
    with pytest.raises(InvalidGrid):
        Grid(0, 1, -0.1)
    with pytest.raises(InvalidGrid):
        Grid(0, 1, 0.5)  # only 3 points


def test_inner_product_examples():
    g = Grid(0, 1, 0.01)
    one = FunctionOnGrid.constant(g, 1.0)
    assert inner_product(one, one) == pytest.approx(1.0, abs=1e-12)

    g = Grid(0, 1, 1e-3)
    s = FunctionOnGrid.from_callable(g, lambda x: np.sin(2 * np.pi * x))
    c = FunctionOnGrid.from_callable(g, lambda x: np.cos(2 * np.pi * x))
    assert abs(inner_product(s, c)) < 1e-6
    ident = FunctionOnGrid.from_callable(g, lambda x: x)
    assert inner_product(ident, ident) == pytest.approx(1 / 3, abs=1e-6)


def test_inner_product_grid_mismatch():
    f = FunctionOnGrid.constant(Grid(0, 1, 0.01), 1.0)
    g = FunctionOnGrid.constant(Grid(0, 1, 0.02), 1.0)
    with pytest.raises(GridMismatch):
        inner_product(f, g)


@settings(max_examples=50, deadline=None)
@given(
    alpha=st.floats(-10, 10),
    seed=st.integers(0, 2**31 - 1),
)
def test_bilinearity(alpha, seed):
    rng = np.random.default_rng(seed)
    g = Grid(0, 2, 0.05)
    f1, f2, h = (FunctionOnGrid(g, rng.normal(size=g.size)) for _ in range(3))
    lhs = inner_product(alpha * f1 + f2, h)
    rhs = alpha * inner_product(f1, h) + inner_product(f2, h)
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-12)
    assert inner_product(f1, h) == pytest.approx(inner_product(h, f1), rel=1e-14)


def test_fourier_single_constant():
    b = make_basis("fourier", 1, Grid(0, 1, 0.01), True)
    np.testing.assert_allclose(b.matrix[0], 1.0, atol=1e-14)


def test_legendre_three_analytic():
    g = Grid(-1, 1, 0.001)
    b = make_basis("legendre", 3, g, True)
    s = g.points
    analytic = [np.ones_like(s), s, (3 * s**2 - 1) / 2]
    for elem, p in zip(b.elements, analytic):
        p_n = p / np.sqrt(np.sum(p**2))
        e_n = elem.values / np.sqrt(np.sum(elem.values**2))
        # proportional: unit-vector directions agree (sign is fixed by the recurrence)
        np.testing.assert_allclose(e_n, p_n, atol=1e-5)
        assert inner_product(elem, elem) == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("kind", ["fourier", "legendre"])
@pytest.mark.parametrize("size", [1, 5, 17, 80])
@pytest.mark.parametrize("const", [True, False])
def test_orthonormality(kind, size, const):
    b = make_basis(kind, size, TEMP_GRID, const)
    assert b.size == len(b.elements) == size
    np.testing.assert_allclose(b.gram(), np.eye(size), atol=1e-8)


def test_without_constant_is_orthogonal_to_constants():
    for kind in ("fourier", "legendre"):
        b = make_basis(kind, 10, TEMP_GRID, False)
        c = project(FunctionOnGrid.constant(TEMP_GRID, 3.0), b)
        np.testing.assert_allclose(c.coeffs, 0.0, atol=1e-10)


def test_invalid_size():
    with pytest.raises(InvalidSize):
        make_basis("fourier", 0, TEMP_GRID)
    with pytest.raises(InvalidSize):
        make_basis("fourier", 20, Grid(0, 1, 0.1))  # frequencies alias on 10 intervals


def test_project_examples():
    b = make_basis("fourier", 7, TEMP_GRID, True)
    c = project(3 * b.elements[0], b)
    np.testing.assert_allclose(c.coeffs, [3, 0, 0, 0, 0, 0, 0], atol=1e-8)
    z = project(FunctionOnGrid.constant(TEMP_GRID, 0.0), b)
    assert np.all(z.coeffs == 0)


def test_project_identity_on_legendre_matches_quadrature_oracle():
    g = Grid(0, 1, 1e-3)
    b = make_basis("legendre", 4, g, True)
    c = project(FunctionOnGrid.from_callable(g, lambda x: x), b)
    # oracle: s = 0.5 * 1 + (1/sqrt(12)) * sqrt(3)(2s-1), with exact integrals
    # <s, 1> = 1/2 and <s, sqrt(3)(2s-1)> = sqrt(3)/6 = 1/sqrt(12)
    np.testing.assert_allclose(c.coeffs, [0.5, 1 / np.sqrt(12), 0, 0], atol=1e-6)


def test_reconstruct_examples():
    b = make_basis("legendre", 6, TEMP_GRID, True)
    zero = reconstruct(CoefficientVector(b, np.zeros(6)))
    assert np.all(zero.values == 0)
    e3 = b.elements[3]
    assert reconstruct(project(e3, b)).sup_distance(e3) < 1e-8
    with pytest.raises(UnknownBasis):
        reconstruct(CoefficientVector(None, np.zeros(3)))


def test_reconstruct_gaussian_bump_with_80_fourier():
    b = make_basis("fourier", 80, TEMP_GRID, True)
    bump = FunctionOnGrid.from_callable(
        TEMP_GRID, lambda s: np.exp(-0.5 * ((s - 10) / 5) ** 2) / (5 * np.sqrt(2 * np.pi))
    )
    assert reconstruct(project(bump, b)).sup_distance(bump) < 1e-3


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), kind=st.sampled_from(["fourier", "legendre"]))
def test_parseval_and_idempotence(seed, kind):
    rng = np.random.default_rng(seed)
    b = make_basis(kind, 12, TEMP_GRID, True)
    coeffs = rng.normal(size=12)
    f = reconstruct(CoefficientVector(b, coeffs))
    c = project(f, b)
    assert abs(inner_product(f, f) - np.sum(c.coeffs**2)) < 1e-8
    # projection is idempotent on arbitrary input
    h = FunctionOnGrid(TEMP_GRID, rng.normal(size=TEMP_GRID.size))
    once = reconstruct(project(h, b))
    twice = reconstruct(project(once, b))
    assert once.sup_distance(twice) < 1e-10


def test_serialization_roundtrip():
    g = Grid(-1, 1, 0.25)
    f = FunctionOnGrid(g, np.arange(g.size) * 0.5)
    assert np.array_equal(FunctionOnGrid.from_json(f.to_json()).values, f.values)
    back = FunctionOnGrid.from_csv(f.to_csv())
    assert back.grid == g
    assert np.array_equal(back.values, f.values)

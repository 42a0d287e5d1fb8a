import math

import numpy as np
import pytest

from incompat.exceptions import DomainError, GridMismatchError
from incompat.grid import ChartGrid
from incompat.stencils import diff_matrix, fd_weights

from .helpers import observed_order


def test_poly_weights_match_textbook():
    np.testing.assert_allclose(fd_weights((-1, 0, 1), 1, 1.0), [-0.5, 0.0, 0.5], atol=1e-16)
    np.testing.assert_allclose(fd_weights((-2, -1, 0, 1, 2), 1, 1.0), np.array([1, -8, 0, 8, -1]) / 12, atol=1e-16)
    np.testing.assert_allclose(fd_weights((-1, 0, 1), 2, 1.0), [1.0, -2.0, 1.0], atol=1e-15)
    np.testing.assert_allclose(fd_weights((0, 1, 2), 1, 1.0), [-1.5, 2.0, -0.5], atol=1e-15)


def test_trig_weights_tend_to_poly():
    offs = (-2, -1, 0, 1, 2)
    for h in (1e-2, 1e-3):
        trig = fd_weights(offs, 1, h, "trig") * h
        poly = fd_weights(offs, 1, h, "poly") * h
        np.testing.assert_allclose(trig, poly, atol=2 * h**2)


def test_trig_stencil_exact_on_sphere_embedding():
    n, h = 20, 0.1
    x = np.arange(n) * h + 0.3
    for deriv, f, df in [
        (1, np.sin(x), np.cos(x)),
        (1, np.sin(x) ** 2, np.sin(2 * x)),
        (2, np.cos(x), -np.cos(x)),
        (2, np.sin(x) ** 2, 2 * np.cos(2 * x)),
    ]:
        D = diff_matrix(n, h, deriv, 4, "trig")
        np.testing.assert_allclose(D @ f, df, atol=1e-11)


@pytest.mark.parametrize("kind", ["poly", "trig"])
@pytest.mark.parametrize("deriv", [1, 2])
def test_fourth_order_including_boundary_rows(kind, deriv):
    errs = []
    for n in (20, 40, 80):
        x = np.linspace(0, 1, n)
        f = np.exp(0.7 * x) * np.cos(3 * x)
        if deriv == 1:
            exact = np.exp(0.7 * x) * (0.7 * np.cos(3 * x) - 3 * np.sin(3 * x))
        else:
            exact = np.exp(0.7 * x) * ((0.49 - 9) * np.cos(3 * x) - 4.2 * np.sin(3 * x))
        D = diff_matrix(n, 1 / (n - 1), deriv, 4, kind)
        errs.append(np.abs(D @ f - exact).max())
    assert observed_order(errs) > 3.7


def test_second_order_option():
    errs = []
    for n in (20, 40, 80):
        x = np.linspace(0, 1, n)
        D = diff_matrix(n, 1 / (n - 1), 1, 2, "poly")
        errs.append(np.abs(D @ np.sin(2 * x) - 2 * np.cos(2 * x)).max())
    assert 1.8 < observed_order(errs) < 2.3


def test_grid_validation():
    with pytest.raises(DomainError, match="theta"):
        ChartGrid("sphere", (0.1, 1.0), (0, 1), 16, 16)
    with pytest.raises(DomainError, match="8 nodes"):
        ChartGrid.plane_patch(6)
    with pytest.raises(DomainError):
        ChartGrid("torus", (0, 1), (0, 1), 16, 16)
    with pytest.raises(DomainError):
        ChartGrid.plane_patch(16, order=3)


def test_grid_mismatch():
    with pytest.raises(GridMismatchError):
        ChartGrid.plane_patch(16).check_same(ChartGrid.plane_patch(17))


def test_weights_sum_to_chart_area():
    g = ChartGrid("plane", (0.0, 2.0), (-1.0, 0.5), 13, 9)
    assert math.fsum(g.weights.ravel()) == pytest.approx(3.0, rel=1e-15)


def test_quadrature_exact_on_bilinear():
    g = ChartGrid("plane", (0.0, 2.0), (-1.0, 0.5), 13, 9)
    x, y = g.coords[..., 0], g.coords[..., 1]
    dens = 1 + 2 * x - 3 * y + 4 * x * y
    ix, iy = 2.0, -0.375  # int x dx over [0, 2], int y dy over [-1, 0.5]
    exact = 3.0 + 2 * ix * 1.5 - 3 * iy * 2.0 + 4 * ix * iy
    assert g.integrate(dens) == pytest.approx(exact, abs=1e-13)


def test_sphere_points_and_metric():
    g = ChartGrid.sphere_patch(12)
    np.testing.assert_allclose(np.linalg.norm(g.points, axis=-1), 1.0, atol=1e-15)
    J = g.jacobian
    np.testing.assert_allclose(np.swapaxes(J, -1, -2) @ J, g.metric, atol=1e-15)
    np.testing.assert_allclose(g.gradient(g.points), J, atol=1e-12)


def test_sparse_diff_matches_dense():
    g = ChartGrid.sphere_patch(10)
    f = np.sin(g.coords[..., 0]) * np.cos(2 * g.coords[..., 1])
    for axis in (0, 1):
        np.testing.assert_allclose((g.sparse_diff(axis) @ f.ravel()).reshape(g.shape), g.d(f, axis), atol=1e-13)


def test_d_transpose_is_adjoint():
    g = ChartGrid.plane_patch(11)
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=g.shape), rng.normal(size=g.shape)
    for axis in (0, 1):
        assert np.sum(g.d(a, axis) * b) == pytest.approx(np.sum(a * g.d_transpose(b, axis)), rel=1e-12)

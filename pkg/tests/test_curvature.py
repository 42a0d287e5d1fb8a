import math

import numpy as np
import pytest
import scipy.linalg

from incompat import curvature as C
from incompat import fields as F
from incompat import generators as Gn
from incompat.exceptions import DomainError, NumericalError
from incompat.grid import ChartGrid
from incompat.linalg import Deflation, conjugate_gradient

from .helpers import observed_order


def _conformal_plane(g, lam):
    vals = np.exp(2 * lam)[..., None, None] * np.eye(2)
    return F.MetricField(g, vals)


# -- Gaussian curvature -----------------------------------------------------

def test_flat_metric_has_zero_curvature(plane16):
    _, s = plane16
    np.testing.assert_allclose(C.gauss_curvature(s), 0, atol=1e-12)


def test_round_metric_has_unit_curvature(sphere16):
    _, s = sphere16
    np.testing.assert_allclose(C.gauss_curvature(s), 1, atol=1e-10)
    assert isinstance(C.gauss_curvature(s, node=(3, 4)), float)


def test_conformal_linear_factor_is_flat(plane16):
    # e^{0.2 x} is not polynomial, so the residual is the O(h^4) truncation error
    g, _ = plane16
    np.testing.assert_allclose(C.gauss_curvature(_conformal_plane(g, 0.1 * g.coords[..., 0])), 0, atol=1e-8)


def test_conformal_quadratic_factor_converges():
    errs = []
    for n in (16, 32, 64):
        g = ChartGrid.plane_patch(n)
        x = g.coords[..., 0]
        lam = 0.1 * x**2
        exact = -0.2 * np.exp(-2 * lam)  # -Delta(lam) e^{-2 lam}
        errs.append(np.abs(C.gauss_curvature(_conformal_plane(g, lam)) - exact).max())
    assert errs[-1] < 1e-6
    assert observed_order(errs) > 3.5


def test_singular_metric_rejected(plane16):
    g, _ = plane16
    with pytest.raises(DomainError):
        C.gauss_curvature(F.MetricField(g, np.zeros(g.shape + (2, 2)), definite=False))


# -- curvature variation ----------------------------------------------------

def test_variation_of_zero_is_zero(sphere16):
    g, s = sphere16
    np.testing.assert_array_equal(C.curvature_variation(F.TwoTensorField.zeros(g), s), 0)


def test_variation_conformal_oracle(plane16):
    g, s = plane16
    phi = g.coords[..., 0] ** 2
    sigma = F.TwoTensorField(g, 2 * phi[..., None, None] * s.values)
    np.testing.assert_allclose(C.curvature_variation(sigma, s), -2.0, atol=1e-6)


def test_variation_is_linear(sphere16):
    g, s = sphere16
    a, b = Gn.trig_series(g, 1), Gn.trig_series(g, 2)
    lhs = C.curvature_variation(2.0 * a + (-0.5) * b, s)
    rhs = 2.0 * C.curvature_variation(a, s) - 0.5 * C.curvature_variation(b, s)
    assert np.linalg.norm(lhs - rhs) <= 1e-6 * np.linalg.norm(lhs)


def test_variation_annihilates_deformations_on_the_sphere():
    ratios = []
    for n in (24, 48):
        g = ChartGrid.sphere_patch(n)
        s = F.ambient_metric(g)
        h = F.deformation_operator(Gn.seeded_vector_field(g, 7), s)
        ratios.append(C.scalar_l2_norm(C.curvature_variation(h, s), s) / F.l2_norm(h, s))
    assert observed_order(ratios) > 2.0


# -- Laplace-Beltrami and the negative norm ---------------------------------

def test_laplace_beltrami_structure(sphere16):
    g, s = sphere16
    M, K = C.laplace_beltrami_matrices(s)
    Kd = K.toarray()
    np.testing.assert_allclose(Kd, Kd.T, atol=1e-14)
    np.testing.assert_allclose(Kd @ np.ones(g.size), 0, atol=1e-12)
    lam = np.linalg.eigvalsh(Kd)
    assert lam[0] > -1e-10
    assert lam[1] > 1e-3  # constants are the whole kernel
    assert M.diagonal().sum() == pytest.approx(F.volume(s), rel=1e-13)


def test_laplace_beltrami_flat_dirichlet_energy(plane16):
    g, s = plane16
    _, K = C.laplace_beltrami_matrices(s)
    x, y = g.coords[..., 0], g.coords[..., 1]
    phi = (2 * x + 3 * y).ravel()
    # |grad phi|^2 = 13 on the unit square, and the form is exact on linears
    assert phi @ (K @ phi) == pytest.approx(13.0, rel=1e-13)


def test_neg2_zero(sphere16):
    g, s = sphere16
    assert C.neg2_sobolev_norm(np.zeros(g.shape), s) == 0.0


def test_neg2_constant_on_unit_square():
    g = ChartGrid.plane_patch(12)
    s = F.ambient_metric(g)
    assert C.neg2_sobolev_norm(np.full(g.shape, 3.0), s) == pytest.approx(3.0, rel=1e-9)


def test_neg2_contraction_on_interior_bump():
    g = ChartGrid.plane_patch(24)
    s = F.ambient_metric(g)
    r2 = np.sum((g.coords - 0.5) ** 2, axis=-1)
    v = np.where(r2 < 0.09, 1.0, 0.0)
    for boundary in C.BOUNDARY_TREATMENTS:
        assert C.neg2_sobolev_norm(v, s, boundary=boundary) <= C.scalar_l2_norm(v, s)


def _dense_oracle(v, s, boundary):
    M, K = (m.toarray() for m in C.laplace_beltrami_matrices(s))
    m = M.diagonal()
    idx = np.arange(v.size)
    if boundary == "dirichlet":
        inner = np.zeros(s.grid.shape, dtype=bool)
        inner[1:-1, 1:-1] = True
        idx = np.flatnonzero(inner.ravel())
    lam, Phi = scipy.linalg.eigh(K[np.ix_(idx, idx)], M[np.ix_(idx, idx)])
    coef = Phi.T @ (m * v.ravel())[idx]
    # Phi is M-orthonormal, so |w|_M^2 is the sum of squared coefficients
    return math.sqrt(np.sum((coef / (1 + lam)) ** 2))


@pytest.mark.parametrize("boundary", ["natural", "dirichlet"])
@pytest.mark.parametrize("chart", ["plane", "sphere"])
def test_neg2_against_dense_spectral_oracle(boundary, chart):
    g = ChartGrid.plane_patch(8) if chart == "plane" else ChartGrid.sphere_patch(8)
    s = F.ambient_metric(g)
    v = np.sin(3 * g.coords[..., 0]) * np.cos(2 * g.coords[..., 1]) + 0.2
    assert C.neg2_sobolev_norm(v, s, boundary=boundary) == pytest.approx(_dense_oracle(v, s, boundary), rel=1e-8)


def test_neg2_cosine_mode_against_continuum():
    errs = []
    k = 2
    for n in (16, 32, 64):
        g = ChartGrid.plane_patch(n)
        s = F.ambient_metric(g)
        v = np.cos(k * np.pi * g.coords[..., 0])
        ratio = C.neg2_sobolev_norm(v, s) / C.scalar_l2_norm(v, s)
        errs.append(abs(ratio * (1 + (k * np.pi) ** 2) - 1))
    assert errs[-1] < 5e-3
    assert observed_order(errs) > 1.8


def test_neg2_rejects_bad_input(sphere16):
    g, s = sphere16
    with pytest.raises(DomainError):
        C.neg2_sobolev_norm(np.zeros((3, 3)), s)
    with pytest.raises(DomainError, match="boundary"):
        C.neg2_sobolev_norm(np.zeros(g.shape), s, boundary="robin")


# -- conjugate gradients ----------------------------------------------------

def test_cg_solves_spd():
    rng = np.random.default_rng(0)
    B = rng.normal(size=(30, 30))
    A = B @ B.T + 30 * np.eye(30)
    b = rng.normal(size=30)
    res = conjugate_gradient(lambda x: A @ x, b, tol=1e-12)
    np.testing.assert_allclose(A @ res.x, b, atol=1e-9)
    assert res.history[0] == 1.0 and res.history[-1] <= 1e-12


def test_cg_with_deflated_nullspace():
    n = 20
    L = 2 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)
    L[0, 0] = L[-1, -1] = 1.0  # Neumann path Laplacian, kernel = constants
    P = Deflation(np.ones(n))
    b = np.linspace(-1, 1, n) ** 3
    res = conjugate_gradient(lambda x: L @ x, b, tol=1e-12, deflate=P)
    assert abs(res.x.sum()) < 1e-10
    np.testing.assert_allclose(L @ res.x, P(b), atol=1e-9)


def test_cg_reports_history_on_failure():
    A = np.diag(np.logspace(0, 6, 50))
    with pytest.raises(NumericalError) as info:
        conjugate_gradient(lambda x: A @ x, np.ones(50), tol=1e-14, maxiter=3)
    assert len(info.value.history) == 4

"""Gaussian curvature of chart metrics, its linearisation, and a discrete W^{-2,2} norm."""
from functools import lru_cache
import math

import numpy as np
import scipy.sparse as sp

from .exceptions import DomainError
from .fields import MetricField, ambient_metric
from .linalg import conjugate_gradient


def _det3(M):
    return np.linalg.det(np.moveaxis(M, (0, 1), (-2, -1)))


def gauss_curvature(metric, node=None):
    """Brioschi-formula Gaussian curvature of a chart metric.

    Derivatives use the grid's stencils, so boundary nodes get the one-sided
    closures of the same order.  Returns the nodal field, or the value at
    ``node`` when given.
    """
    g = metric.grid
    v = metric.values
    E, F, G = v[..., 0, 0], v[..., 0, 1], v[..., 1, 1]
    det = E * G - F * F
    if np.any(det <= 0):
        raise DomainError("metric is singular or indefinite")
    Eu, Ev = g.d(E, 0), g.d(E, 1)
    Fu, Fv = g.d(F, 0), g.d(F, 1)
    Gu, Gv = g.d(G, 0), g.d(G, 1)
    Evv = g.d(E, 1, deriv=2)
    Guu = g.d(G, 0, deriv=2)
    Fuv = g.d(Fu, 1)
    M1 = np.array([
        [-0.5 * Evv + Fuv - 0.5 * Guu, 0.5 * Eu, Fu - 0.5 * Ev],
        [Fv - 0.5 * Gu, E, F],
        [0.5 * Gv, F, G],
    ])
    zero = np.zeros_like(E)
    M2 = np.array([
        [zero, 0.5 * Ev, 0.5 * Gu],
        [0.5 * Ev, E, F],
        [0.5 * Gu, F, G],
    ])
    K = (_det3(M1) - _det3(M2)) / det**2
    return K if node is None else float(K[node])


def curvature_variation(sigma, s, step=1e-4):
    """Directional derivative of the Gaussian curvature at ``s`` along ``sigma``.

    Central difference with ``t = step * |s| / |sigma|`` (Frobenius norms
    over all nodes); a zero ``sigma`` gives the zero field.
    """
    s.grid.check_same(sigma.grid)
    snorm = np.linalg.norm(s.values)
    signorm = np.linalg.norm(sigma.values)
    if signorm == 0.0:
        return np.zeros(s.grid.shape)
    t = step * snorm / signorm
    plus = gauss_curvature(MetricField(s.grid, s.values + t * sigma.values))
    minus = gauss_curvature(MetricField(s.grid, s.values - t * sigma.values))
    return (plus - minus) / (2.0 * t)


def scalar_l2_norm(v, s):
    return math.sqrt(s.grid.integrate(np.asarray(v) ** 2 * s.volume_density))


def _diff_1d(n, h):
    return sp.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n)) / h


def _pick_1d(n, offset):
    return sp.eye(n - 1, n, k=offset)


def _avg_1d(n):
    return 0.5 * (_pick_1d(n, 0) + _pick_1d(n, 1))


@lru_cache(maxsize=8)
def _laplace_beltrami(grid):
    return laplace_beltrami_matrices(ambient_metric(grid))


def laplace_beltrami_matrices(s):
    """Lumped mass ``M`` and stiffness ``K`` of the Laplace-Beltrami operator.

    ``K`` is the cell-wise quadratic form of ``int s^{ij} d_i phi d_j phi dV``:
    diagonal terms use the squared edge differences of both cell edges, the
    cross term the cell-averaged differences, and coefficients are taken at
    cell centres.  No boundary condition is imposed (natural condition), so
    constants span the kernel.
    """
    g = s.grid
    nu, nv = g.shape
    du, dv = _diff_1d(nu, g.hu), _diff_1d(nv, g.hv)
    au, av = _avg_1d(nu), _avg_1d(nv)
    gu_lo, gu_hi = sp.kron(du, _pick_1d(nv, 0)), sp.kron(du, _pick_1d(nv, 1))
    gv_lo, gv_hi = sp.kron(_pick_1d(nu, 0), dv), sp.kron(_pick_1d(nu, 1), dv)
    gu_avg, gv_avg = sp.kron(du, av), sp.kron(au, dv)
    coef = s.inverse * s.volume_density[..., None, None]
    centre = 0.25 * (coef[:-1, :-1] + coef[1:, :-1] + coef[:-1, 1:] + coef[1:, 1:])
    area = g.hu * g.hv
    c11 = sp.diags(area * centre[..., 0, 0].ravel())
    c12 = sp.diags(area * centre[..., 0, 1].ravel())
    c22 = sp.diags(area * centre[..., 1, 1].ravel())
    K = 0.5 * (gu_lo.T @ c11 @ gu_lo + gu_hi.T @ c11 @ gu_hi)
    K += 0.5 * (gv_lo.T @ c22 @ gv_lo + gv_hi.T @ c22 @ gv_hi)
    K += gu_avg.T @ c12 @ gv_avg + gv_avg.T @ c12 @ gu_avg
    M = sp.diags((g.weights * s.volume_density).ravel())
    return M.tocsr(), K.tocsr()


BOUNDARY_TREATMENTS = ("natural", "dirichlet")


def neg2_sobolev_norm(v, s, tol=1e-10, boundary="natural"):
    """``|(Id + Delta_s)^{-1} v|_{L2}`` with the positive Laplace-Beltrami operator.

    The inverse is applied by preconditioned conjugate gradients on
    ``(M + K) w = M v``.  ``boundary="natural"`` imposes no condition on
    ``w``; ``"dirichlet"`` fixes ``w = 0`` on the boundary nodes, which pairs
    ``v`` against fields vanishing on the boundary (the dual of W_0^{2,2}).

    Raises
    ------
    NumericalError
        If CG does not converge within ``10 N`` iterations.
    """
    v = np.asarray(v, dtype=float)
    if v.shape != s.grid.shape:
        raise DomainError("scalar field does not match the grid")
    if boundary not in BOUNDARY_TREATMENTS:
        raise DomainError(f"boundary must be one of {BOUNDARY_TREATMENTS}, got {boundary!r}")
    if np.array_equal(s.values, s.grid.metric):
        M, K = _laplace_beltrami(s.grid)
    else:
        M, K = laplace_beltrami_matrices(s)
    A = (M + K).tocsr()
    rhs = M @ v.ravel()
    if boundary == "dirichlet":
        inner = np.zeros(s.grid.shape, dtype=bool)
        inner[1:-1, 1:-1] = True
        keep = np.flatnonzero(inner.ravel())
        A = A[keep][:, keep]
        rhs = rhs[keep]
    diag = A.diagonal()
    res = conjugate_gradient(lambda x: A @ x, rhs, tol=tol, maxiter=10 * v.size,
                             precond=lambda r: r / diag)
    w = np.zeros(v.size)
    if boundary == "dirichlet":
        w[keep] = res.x
    else:
        w = res.x
    return scalar_l2_norm(w.reshape(s.grid.shape), s)

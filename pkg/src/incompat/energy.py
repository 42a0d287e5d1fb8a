"""The rescaled nonlinear energy, its linearised limit, and the isometry field Q_eps."""
from dataclasses import dataclass
import math

import numpy as np

from . import geometry
from .exceptions import DomainError, GridMismatchError
from .fields import (
    ConfigurationField,
    MetricField,
    TwoTensorField,
    VectorField,
    ambient_differential,
    deformation_operator,
    deformation_system,
    l2_inner,
)
from .grid import SPHERE


@dataclass(frozen=True, eq=False)
class NonlinearEnergyInput:
    f: ConfigurationField
    g_eps: MetricField
    s: MetricField
    eps: float

    def __post_init__(self):
        grid = self.f.grid
        if self.g_eps.grid != grid or self.s.grid != grid:
            raise GridMismatchError("configuration and metrics live on different grids")
        if not self.g_eps.definite:
            MetricField(grid, self.g_eps.values)
        if not self.eps > 0:
            raise DomainError("eps must be positive")

    def with_f(self, f):
        return NonlinearEnergyInput(f, self.g_eps, self.s, self.eps)


@dataclass(frozen=True, eq=False)
class LimitEnergyInput:
    u: VectorField
    h: TwoTensorField
    s: MetricField

    def __post_init__(self):
        if self.h.grid != self.u.grid or self.s.grid != self.u.grid:
            raise GridMismatchError("displacement, h and s live on different grids")


@dataclass(frozen=True, eq=False)
class NonlinearGradient:
    """L2 gradient of the nonlinear energy as ambient vectors tangent at ``f``.

    ``singular`` flags nodes whose frame matrix is singular, where the
    nearest rotation (and so the gradient) follows the SVD convention.
    """

    values: np.ndarray
    singular: np.ndarray

    def norm(self, s):
        dens = np.sum(self.values**2, axis=-1) * s.volume_density
        return math.sqrt(s.grid.integrate(dens))


def _frame_matrices(inp, frame=None):
    f = inp.f
    Ft = ambient_differential(f)
    E = geometry.tangent_frame(f.values) if frame is None else np.asarray(frame, dtype=float)
    S = geometry.inv_sqrt_spd(inp.g_eps.values)
    return Ft, E, S, E @ Ft @ S


def nonlinear_energy(inp, frame=None):
    """``(1/eps^2) sum w sqrt(det g) dist(E F g^{-1/2}, SO(2))^2``.

    ``frame`` replaces the deterministic target frame by any orthonormal
    frame field of shape ``(n_u, n_v, 2, dim)``; the value does not depend on it.
    """
    _, _, _, A = _frame_matrices(inp, frame)
    dist, _ = geometry.dist_to_so(A)
    dens = dist**2 * inp.g_eps.volume_density
    return inp.f.grid.integrate(dens) / inp.eps**2


def nonlinear_energy_gradient(inp):
    """Riemannian L2 gradient of :func:`nonlinear_energy` with respect to ``f``.

    Exact derivative of the discrete energy: the chain rule runs through the
    finite-difference differential, the frame's dependence on ``f`` (its tilt
    out of the old tangent plane) and ``dist^2`` whose derivative is
    ``2 (A - R(A))``.  The result is projected onto the tangent planes and
    divided by the nodal ``w sqrt(det s)`` to represent it in the L2 product.
    """
    grid = inp.f.grid
    Ft, E, S, A = _frame_matrices(inp)
    _, G, singular = geometry.dist2_to_so_grad(A)
    c = grid.weights * inp.g_eps.volume_density
    H = np.swapaxes(E, -1, -2) @ G @ S * c[..., None, None]
    grad = grid.d_transpose(H[..., 0], 0) + grid.d_transpose(H[..., 1], 1)
    p = inp.f.values
    if grid.chart == SPHERE:
        tilt = np.einsum("...ij,...i->...j", Ft, p)
        grad -= np.einsum("...ij,...j->...i", H, tilt)
        grad -= np.sum(grad * p, axis=-1, keepdims=True) * p
    grad /= (grid.weights * inp.s.volume_density)[..., None] * inp.eps**2
    return NonlinearGradient(grad, singular)


def limit_energy(inp):
    """``(1/4) |L_u s - h|^2`` in L2."""
    r = deformation_operator(inp.u, inp.s) - inp.h
    return 0.25 * l2_inner(r, r, inp.s)


def _require_ambient(s):
    if not np.array_equal(s.values, s.grid.metric):
        raise DomainError("assembled operators are only available for the ambient metric")


def limit_energy_gradient(inp):
    """L2 gradient ``(1/2) M^{-1} D^T W (D u - h)`` of the limit energy."""
    _require_ambient(inp.s)
    system = deformation_system(inp.u.grid)
    r = system.D @ inp.u.flat() - inp.h.flat()
    rhs = 0.5 * (system.D.T @ (system.W @ r))
    # M is block diagonal in 2x2 node blocks
    grid = inp.u.grid
    rhs = rhs.reshape(2, *grid.shape)
    dens = (grid.weights * inp.s.volume_density)[..., None, None] * inp.s.values
    vals = np.linalg.solve(dens, np.stack([rhs[0], rhs[1]], axis=-1)[..., None])[..., 0]
    return VectorField(grid, vals)


def build_q_eps(g_eps, s, eps):
    """``Q = s^{-1/2} g^{1/2}`` nodewise and ``xi = (Q - I) / eps``.

    ``Q^T s Q = g`` holds by construction, so ``Q`` is a linear isometry
    from ``(TM, g)`` to ``(TM, s)``.
    """
    if g_eps.grid != s.grid:
        raise GridMismatchError("metrics live on different grids")
    Q = geometry.inv_sqrt_spd(s.values) @ geometry.sqrt_spd(g_eps.values)
    return Q, (Q - np.eye(2)) / eps


def xi_limit(h, s):
    """Limit of ``(Q_eps - I)/eps`` for ``g_eps = s + eps h``.

    Equals ``s^{-1/2} L`` where ``s^{1/2} L + L s^{1/2} = h`` (the derivative
    of the matrix square root), so ``s xi + (s xi)^T = h`` exactly.  When
    ``s`` and ``h`` commute this reduces to ``s^{-1} h / 2``.
    """
    if h.grid != s.grid:
        raise GridMismatchError("h and s live on different grids")
    a = geometry.sqrt_spd(s.values)
    eye = np.eye(2)
    # vec(aL + La) = (I (x) a + a^T (x) I) vec(L), row-major vec
    op = np.einsum("ik,...jl->...ijkl", eye, a) + np.einsum("...ik,jl->...ijkl", a, eye)
    n = h.grid.shape
    L = np.linalg.solve(op.reshape(n + (4, 4)), h.values.reshape(n + (4, 1)))
    return geometry.inv_sqrt_spd(s.values) @ L.reshape(n + (2, 2))


def twice_sym_flat(xi, s):
    """``2 sym(xi_flat) = s xi + (s xi)^T`` for a (1,1)-tensor field ``xi``."""
    A = s.values @ xi
    return A + np.swapaxes(A, -1, -2)

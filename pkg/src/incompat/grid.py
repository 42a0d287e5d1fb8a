"""Uniform tensor-product chart grids over a patch of the sphere or the plane.

Nodes are indexed ``[i, j]`` with ``i`` along the first chart coordinate
(``theta`` or ``x``) and ``j`` along the second (``phi`` or ``y``).  Every
nodal array carries the grid shape ``(n_u, n_v)`` as its two leading axes.
"""
from dataclasses import dataclass
from functools import cached_property
import math

import numpy as np
import scipy.sparse as sp

from .exceptions import DomainError, GridMismatchError
from .stencils import diff_matrix

SPHERE = "sphere"
PLANE = "plane"

_POLE_MARGIN = 0.2


@dataclass(frozen=True)
class ChartGrid:
    """A single-chart grid.

    ``chart="sphere"`` uses colatitude/longitude ``(theta, phi)`` on the unit
    sphere; ``chart="plane"`` uses Cartesian ``(x, y)``.  ``order`` selects
    the accuracy of every finite-difference operator built on the grid.
    """

    chart: str
    u_range: tuple
    v_range: tuple
    n_u: int
    n_v: int
    order: int = 4

    def __post_init__(self):
        if self.chart not in (SPHERE, PLANE):
            raise DomainError(f"unknown chart {self.chart!r}")
        object.__setattr__(self, "u_range", tuple(float(a) for a in self.u_range))
        object.__setattr__(self, "v_range", tuple(float(a) for a in self.v_range))
        if self.n_u < 8 or self.n_v < 8:
            raise DomainError("grids need at least 8 nodes per direction")
        if not (self.u_range[0] < self.u_range[1] and self.v_range[0] < self.v_range[1]):
            raise DomainError("chart ranges must be increasing")
        if self.chart == SPHERE:
            lo, hi = self.u_range
            if lo < _POLE_MARGIN - 1e-12 or hi > math.pi - _POLE_MARGIN + 1e-12:
                raise DomainError(
                    f"theta range {self.u_range} must stay inside "
                    f"[{_POLE_MARGIN}, pi - {_POLE_MARGIN}]"
                )
        if self.order not in (2, 4):
            raise DomainError("order must be 2 or 4")

    @classmethod
    def sphere_patch(cls, n, theta=(0.5, math.pi - 0.5), phi=(0.0, 1.5), order=4):
        return cls(SPHERE, theta, phi, n, n, order)

    @classmethod
    def plane_patch(cls, n, x=(0.0, 1.0), y=(0.0, 1.0), order=4):
        return cls(PLANE, x, y, n, n, order)

    # -- basic geometry --------------------------------------------------
    @property
    def shape(self):
        return (self.n_u, self.n_v)

    @property
    def size(self):
        return self.n_u * self.n_v

    @property
    def ambient_dim(self):
        return 3 if self.chart == SPHERE else 2

    @cached_property
    def u(self):
        return np.linspace(*self.u_range, self.n_u)

    @cached_property
    def v(self):
        return np.linspace(*self.v_range, self.n_v)

    @property
    def hu(self):
        return (self.u_range[1] - self.u_range[0]) / (self.n_u - 1)

    @property
    def hv(self):
        return (self.v_range[1] - self.v_range[0]) / (self.n_v - 1)

    @cached_property
    def coords(self):
        """Chart coordinates, shape ``(n_u, n_v, 2)``."""
        U, V = np.meshgrid(self.u, self.v, indexing="ij")
        return np.stack([U, V], axis=-1)

    def embed(self, uv):
        """Ambient image of chart coordinates ``uv[..., 2]``."""
        uv = np.asarray(uv, dtype=float)
        if self.chart == PLANE:
            return uv.copy()
        th, ph = uv[..., 0], uv[..., 1]
        return np.stack(
            [np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=-1
        )

    def embed_jacobian(self, uv):
        """``d(embed)`` at ``uv``, shape ``(..., ambient_dim, 2)``."""
        uv = np.asarray(uv, dtype=float)
        if self.chart == PLANE:
            J = np.zeros(uv.shape[:-1] + (2, 2))
            J[..., 0, 0] = J[..., 1, 1] = 1.0
            return J
        th, ph = uv[..., 0], uv[..., 1]
        st, ct, sp_, cp = np.sin(th), np.cos(th), np.sin(ph), np.cos(ph)
        J = np.zeros(uv.shape[:-1] + (3, 2))
        J[..., 0, 0], J[..., 1, 0], J[..., 2, 0] = ct * cp, ct * sp_, -st
        J[..., 0, 1], J[..., 1, 1] = -st * sp_, st * cp
        return J

    @cached_property
    def points(self):
        """Ambient image of every node, shape ``(n_u, n_v, ambient_dim)``."""
        return self.embed(self.coords)

    @cached_property
    def jacobian(self):
        return self.embed_jacobian(self.coords)

    @cached_property
    def metric(self):
        """Ambient metric pulled back to the chart, shape ``(n_u, n_v, 2, 2)``."""
        g = np.zeros(self.shape + (2, 2))
        g[..., 0, 0] = 1.0
        if self.chart == SPHERE:
            g[..., 1, 1] = np.sin(self.coords[..., 0]) ** 2
        else:
            g[..., 1, 1] = 1.0
        return g

    # -- quadrature ------------------------------------------------------
    @cached_property
    def weights(self):
        """Trapezoid weights times the chart cell area, shape ``(n_u, n_v)``."""
        wu = np.full(self.n_u, self.hu)
        wu[[0, -1]] *= 0.5
        wv = np.full(self.n_v, self.hv)
        wv[[0, -1]] *= 0.5
        return np.outer(wu, wv)

    def integrate(self, density):
        """Quadrature of a nodal density; summation is exactly rounded."""
        vals = np.asarray(density, dtype=float) * self.weights
        return math.fsum(vals.ravel())

    # -- differentiation -------------------------------------------------
    @property
    def stencil_kind(self):
        return "trig" if self.chart == SPHERE else "poly"

    def diff_matrix(self, axis, deriv=1):
        n, h = (self.n_u, self.hu) if axis == 0 else (self.n_v, self.hv)
        return diff_matrix(n, h, deriv, self.order, self.stencil_kind)

    def d(self, values, axis, deriv=1):
        """Differentiate a nodal array along chart ``axis``."""
        D = self.diff_matrix(axis, deriv)
        values = np.asarray(values, dtype=float)
        if axis == 0:
            return np.einsum("ik,k...->i...", D, values)
        return np.einsum("jk,ik...->ij...", D, values)

    def d_transpose(self, values, axis):
        """Apply the transpose of the first-derivative operator along ``axis``."""
        D = self.diff_matrix(axis, 1)
        values = np.asarray(values, dtype=float)
        if axis == 0:
            return np.einsum("ik,i...->k...", D, values)
        return np.einsum("jk,ij...->ik...", D, values)

    def gradient(self, values):
        """Both chart derivatives stacked on a new last axis."""
        return np.stack([self.d(values, 0), self.d(values, 1)], axis=-1)

    def sparse_diff(self, axis, deriv=1):
        """``N x N`` sparse derivative acting on row-major flattened nodal data."""
        if axis == 0:
            return sp.kron(sp.csr_matrix(self.diff_matrix(0, deriv)), sp.identity(self.n_v), format="csr")
        return sp.kron(sp.identity(self.n_u), sp.csr_matrix(self.diff_matrix(1, deriv)), format="csr")

    def check_same(self, other):
        if other != self:
            raise GridMismatchError("fields live on different grids")

    def refined(self, n_u, n_v=None):
        return ChartGrid(self.chart, self.u_range, self.v_range, n_u, n_v or n_u, self.order)

    def patch_volume(self):
        """Closed-form area of the chart patch (spherical zone or rectangle)."""
        du = self.u_range[1] - self.u_range[0]
        dv = self.v_range[1] - self.v_range[0]
        if self.chart == PLANE:
            return du * dv
        return dv * (math.cos(self.u_range[0]) - math.cos(self.u_range[1]))

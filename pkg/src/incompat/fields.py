"""Sampled fields on a chart grid and the finite-difference tensor calculus on them.

Vector fields are stored by their chart components ``u^i``; tensors by their
chart matrices.  Every operator returns whole fields; index a node with
``field.values[i, j]``.
"""
from dataclasses import dataclass
from functools import lru_cache
import io
import math

import numpy as np
import scipy.sparse as sp

from . import geometry
from .exceptions import DomainError, GridMismatchError
from .grid import ChartGrid, PLANE, SPHERE

# symmetric 2-tensor components in the order used by flattened operators
SYM_INDEX = ((0, 0), (0, 1), (1, 1))


def _frozen(values):
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


def _check_symmetric(values, what):
    asym = np.abs(values[..., 0, 1] - values[..., 1, 0])
    scale = max(1.0, float(np.abs(values).max(initial=0.0)))
    if np.any(asym > 1e-14 * scale):
        raise DomainError(f"{what} is not symmetric (asymmetry {asym.max():.3e})")


@dataclass(frozen=True, eq=False)
class MetricField:
    """Per-node symmetric 2x2 chart matrices; ``definite`` metrics are also SPD."""

    grid: ChartGrid
    values: np.ndarray
    definite: bool = True

    def __post_init__(self):
        values = _frozen(self.values)
        if values.shape != self.grid.shape + (2, 2):
            raise GridMismatchError(f"metric values have shape {values.shape}, grid is {self.grid.shape}")
        if not np.all(np.isfinite(values)):
            raise DomainError("metric has non-finite entries")
        _check_symmetric(values, "metric")
        if self.definite:
            det = values[..., 0, 0] * values[..., 1, 1] - values[..., 0, 1] ** 2
            if np.any(det <= 0) or np.any(values[..., 0, 0] <= 0):
                idx = np.unravel_index(np.argmin(det), det.shape)
                raise DomainError(f"metric is not positive definite at node {idx}")
        object.__setattr__(self, "values", values)

    @property
    def det(self):
        v = self.values
        return v[..., 0, 0] * v[..., 1, 1] - v[..., 0, 1] ** 2

    @property
    def inverse(self):
        return np.linalg.inv(self.values)

    @property
    def volume_density(self):
        return np.sqrt(self.det)

    def __add__(self, other):
        self.grid.check_same(other.grid)
        return MetricField(self.grid, self.values + other.values, definite=False)


@dataclass(frozen=True, eq=False)
class TwoTensorField:
    """Symmetric (0,2)-tensor field in chart components (may be indefinite)."""

    grid: ChartGrid
    values: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values)
        if values.shape != self.grid.shape + (2, 2):
            raise GridMismatchError(f"tensor values have shape {values.shape}, grid is {self.grid.shape}")
        _check_symmetric(values, "tensor field")
        object.__setattr__(self, "values", values)

    def __add__(self, other):
        self.grid.check_same(other.grid)
        return TwoTensorField(self.grid, self.values + other.values)

    def __sub__(self, other):
        self.grid.check_same(other.grid)
        return TwoTensorField(self.grid, self.values - other.values)

    def __mul__(self, c):
        return TwoTensorField(self.grid, float(c) * self.values)

    __rmul__ = __mul__

    def flat(self):
        """Component-major vector ``(h_11, h_12, h_22)``, length ``3N``."""
        return np.concatenate([self.values[..., i, j].ravel() for i, j in SYM_INDEX])

    @classmethod
    def from_flat(cls, grid, vec):
        vec = np.asarray(vec, dtype=float).reshape(3, *grid.shape)
        out = np.empty(grid.shape + (2, 2))
        out[..., 0, 0], out[..., 1, 1] = vec[0], vec[2]
        out[..., 0, 1] = out[..., 1, 0] = vec[1]
        return cls(grid, out)

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.shape + (2, 2)))


@dataclass(frozen=True, eq=False)
class VectorField:
    """Tangent vector field stored by chart components ``u^i``."""

    grid: ChartGrid
    values: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values)
        if values.shape != self.grid.shape + (2,):
            raise GridMismatchError(f"vector values have shape {values.shape}, grid is {self.grid.shape}")
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.shape + (2,)))

    @classmethod
    def from_ambient(cls, grid, vectors, tol=1e-10):
        """Chart components of ambient tangent vectors at the grid points."""
        vectors = np.asarray(vectors, dtype=float)
        if grid.chart == SPHERE:
            normal = np.abs(np.sum(vectors * grid.points, axis=-1))
            if np.any(normal > tol * (1.0 + np.linalg.norm(vectors, axis=-1))):
                raise DomainError(f"ambient vectors are not tangent (normal part {normal.max():.3e})")
        J = grid.jacobian
        comps = np.einsum("...ij,...kj,...k->...i", np.linalg.inv(grid.metric), J, vectors)
        return cls(grid, comps)

    def ambient(self):
        """Ambient representation ``J u``, shape ``(n_u, n_v, ambient_dim)``."""
        return np.einsum("...ij,...j->...i", self.grid.jacobian, self.values)

    def __add__(self, other):
        self.grid.check_same(other.grid)
        return VectorField(self.grid, self.values + other.values)

    def __sub__(self, other):
        self.grid.check_same(other.grid)
        return VectorField(self.grid, self.values - other.values)

    def __mul__(self, c):
        return VectorField(self.grid, float(c) * self.values)

    __rmul__ = __mul__

    def flat(self):
        """Component-major vector ``(u^1, u^2)``, length ``2N``."""
        return np.concatenate([self.values[..., 0].ravel(), self.values[..., 1].ravel()])

    @classmethod
    def from_flat(cls, grid, vec):
        vec = np.asarray(vec, dtype=float).reshape(2, *grid.shape)
        return cls(grid, np.stack([vec[0], vec[1]], axis=-1))


@dataclass(frozen=True, eq=False)
class ConfigurationField:
    """A map of the grid into the ambient space, one ambient point per node."""

    grid: ChartGrid
    values: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values)
        if values.shape != self.grid.shape + (self.grid.ambient_dim,):
            raise GridMismatchError(f"configuration values have shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise DomainError("configuration has non-finite entries")
        if self.grid.chart == SPHERE and np.any(np.abs(np.linalg.norm(values, axis=-1) - 1.0) > 1e-12):
            raise DomainError("sphere configurations must have unit-norm values")
        object.__setattr__(self, "values", values)

    @classmethod
    def inclusion(cls, grid):
        return cls(grid, grid.points)

    def rotated(self, R):
        """Left composition with an ambient rotation; unit norms are re-imposed."""
        vals = np.einsum("ij,...j->...i", R, self.values)
        if self.grid.chart == SPHERE:
            vals /= np.linalg.norm(vals, axis=-1, keepdims=True)
        return ConfigurationField(self.grid, vals)


def ambient_metric(grid):
    """The ambient metric pulled back by the chart (``s``)."""
    return MetricField(grid, grid.metric)


def _same_grid(*fields):
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid != g:
            raise GridMismatchError("fields live on different grids")
    return g


# ---------------------------------------------------------------------------
# differentials
# ---------------------------------------------------------------------------

def ambient_differential(f):
    """Chart derivatives of ``kappa o f``, shape ``(n_u, n_v, ambient_dim, 2)``."""
    return f.grid.gradient(f.values)


def configuration_differential(f, frame=None):
    """Matrix of ``df`` from the chart basis to an orthonormal target frame.

    ``F[i, j] = <d_j (kappa o f), e_i(f)>``; ``frame`` overrides the
    deterministic frame with any orthonormal field of shape ``(..., 2, dim)``.
    """
    Ft = ambient_differential(f)
    E = geometry.tangent_frame(f.values) if frame is None else np.asarray(frame)
    return E @ Ft


def christoffel(s):
    """Christoffel symbols ``G[..., i, j, k] = Gamma^i_{jk}`` of the metric ``s``."""
    grid = s.grid
    ds = grid.gradient(s.values)  # ds[..., l, k, j] = d_j s_lk
    lower = 0.5 * (
        np.einsum("...lkj->...ljk", ds) + np.einsum("...ljk->...ljk", ds) - np.einsum("...jkl->...ljk", ds)
    )
    return np.einsum("...il,...ljk->...ijk", s.inverse, lower)


def covariant_derivative(u, s):
    """``nabla u`` with ``[..., i, j] = d_j u^i + Gamma^i_{jk} u^k``."""
    _same_grid(u, s)
    du = u.grid.gradient(u.values)
    return du + np.einsum("...ijk,...k->...ij", christoffel(s), u.values)


def deformation_operator(u, s):
    """Lie derivative ``L_u s = 2 sym((nabla u)_flat)`` as a tensor field."""
    A = s.values @ covariant_derivative(u, s)
    return TwoTensorField(u.grid, A + np.swapaxes(A, -1, -2))


def divergence(sigma, s):
    """``(div sigma)^i = nabla_j sigma^{ij}`` of a (0,2)-tensor, raised with ``s``."""
    _same_grid(sigma, s)
    grid = s.grid
    sinv = s.inverse
    up = sinv @ sigma.values @ sinv
    rho = s.volume_density
    flux = rho[..., None, None] * up
    div = grid.d(flux[..., :, 0], 0) + grid.d(flux[..., :, 1], 1)
    div /= rho[..., None]
    G = christoffel(s)
    div += np.einsum("...ijk,...kj->...i", G, up)
    return VectorField(grid, div)


def deformation_adjoint(sigma, s):
    """Formal L2 adjoint of the deformation operator, ``-2 div sigma``."""
    return -2.0 * divergence(sigma, s)


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

def volume(s):
    return s.grid.integrate(s.volume_density)


def l2_inner(a, b, s):
    """``sum w s^{ik} s^{jl} a_ij b_kl sqrt(det s)`` over the nodes."""
    grid = _same_grid(a, b, s)
    sinv = s.inverse
    dens = np.einsum("...ik,...jl,...ij,...kl->...", sinv, sinv, a.values, b.values)
    return grid.integrate(dens * s.volume_density)


def l2_norm(a, s):
    return math.sqrt(max(l2_inner(a, a, s), 0.0))


def vector_inner(u, v, s):
    grid = _same_grid(u, v, s)
    dens = np.einsum("...ij,...i,...j->...", s.values, u.values, v.values)
    return grid.integrate(dens * s.volume_density)


def vector_norm(u, s):
    return math.sqrt(max(vector_inner(u, u, s), 0.0))


def w12_norm(u, s):
    """``sqrt(|u|^2 + |nabla u|^2)`` in L2 with the metric ``s``."""
    nab = covariant_derivative(u, s)
    dens = np.einsum("...ik,...jl,...ij,...kl->...", s.values, s.inverse, nab, nab)
    grad2 = s.grid.integrate(dens * s.volume_density)
    return math.sqrt(vector_inner(u, u, s) + grad2)


def matrix_l2_norm(X, s):
    """L2 norm of a per-node matrix field with the plain Frobenius norm."""
    return math.sqrt(s.grid.integrate(np.sum(np.asarray(X) ** 2, axis=(-2, -1)) * s.volume_density))


# ---------------------------------------------------------------------------
# assembled sparse operators
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DeformationSystem:
    """Sparse matrices for least-squares problems in the deformation operator.

    ``D`` maps flattened vector fields (``2N``) to flattened symmetric
    tensors (``3N``); ``W`` is the tensor L2 Gram matrix and ``M`` the vector
    L2 Gram matrix, so ``<Du, h>_{L2} = (Du)^T W h``.
    """

    grid: ChartGrid
    D: sp.csr_matrix
    W: sp.csr_matrix
    M: sp.csr_matrix

    @property
    def normal(self):
        return (self.D.T @ self.W @ self.D).tocsr()


def _block(blocks):
    return sp.bmat(blocks, format="csr")


@lru_cache(maxsize=8)
def deformation_system(grid):
    s = ambient_metric(grid)
    N = grid.size
    G = christoffel(s)
    Dx = [grid.sparse_diff(0), grid.sparse_diff(1)]
    sv = s.values.reshape(N, 2, 2)
    Gv = G.reshape(N, 2, 2, 2)

    # A_ij = s_ik (D_j u^k + Gamma^k_{jm} u^m);  (L_u s)_ij = A_ij + A_ji
    def a_block(i, j, m):
        op = sp.diags(sv[:, i, m]) @ Dx[j]
        zero = np.einsum("nk,nk->n", sv[:, i, :], Gv[:, :, j, m])
        return op + sp.diags(zero)

    rows = []
    for i, j in SYM_INDEX:
        rows.append([a_block(i, j, m) + a_block(j, i, m) for m in range(2)])
    D = _block(rows)

    rho_w = (grid.weights * s.volume_density).ravel()
    sinv = np.linalg.inv(sv)
    comp = {(0, 0): 0, (0, 1): 1, (1, 0): 1, (1, 1): 2}
    Wn = np.zeros((N, 3, 3))
    for i in range(2):
        for j in range(2):
            for k in range(2):
                for l in range(2):
                    Wn[:, comp[i, j], comp[k, l]] += sinv[:, i, k] * sinv[:, j, l]
    Wn *= rho_w[:, None, None]
    W = _block([[sp.diags(Wn[:, a, b]) for b in range(3)] for a in range(3)])
    M = _block([[sp.diags(rho_w * sv[:, a, b]) for b in range(2)] for a in range(2)])
    return DeformationSystem(grid, D, W, M)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

_KINDS = {MetricField: "metric", TwoTensorField: "tensor", VectorField: "vector", ConfigurationField: "configuration"}


def field_to_text(field):
    """Column text: one header comment, then ``k u v values...`` per node."""
    grid = field.grid
    kind = _KINDS[type(field)]
    buf = io.StringIO()
    buf.write(
        f"# kind={kind} chart={grid.chart} n_u={grid.n_u} n_v={grid.n_v} order={grid.order} "
        f"u_range={grid.u_range[0]!r},{grid.u_range[1]!r} v_range={grid.v_range[0]!r},{grid.v_range[1]!r}\n"
    )
    vals = field.values.reshape(grid.size, -1)
    coords = grid.coords.reshape(grid.size, 2)
    for k in range(grid.size):
        cols = " ".join("%.16e" % x for x in (*coords[k], *vals[k]))
        buf.write(f"{k} {cols}\n")
    return buf.getvalue()


def field_from_text(text):
    lines = text.splitlines()
    if not lines or not lines[0].startswith("#"):
        raise ValueError("missing field header")
    meta = dict(item.split("=", 1) for item in lines[0][1:].split())
    grid = ChartGrid(
        meta["chart"],
        tuple(float(x) for x in meta["u_range"].split(",")),
        tuple(float(x) for x in meta["v_range"].split(",")),
        int(meta["n_u"]),
        int(meta["n_v"]),
        int(meta["order"]),
    )
    rows = np.array([[float(x) for x in line.split()[3:]] for line in lines[1:]])
    cls = {v: k for k, v in _KINDS.items()}[meta["kind"]]
    if cls is VectorField:
        shape = (2,)
    elif cls is ConfigurationField:
        shape = (grid.ambient_dim,)
    else:
        shape = (2, 2)
    values = rows.reshape(grid.shape + shape)
    if cls is MetricField:
        return cls(grid, values, definite=False)
    return cls(grid, values)

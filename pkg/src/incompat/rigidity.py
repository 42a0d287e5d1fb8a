"""Best-isometry fits, recovery sequences, displacement extraction and transported gradients."""
from dataclasses import dataclass
import math

import numpy as np
from scipy.spatial.transform import Rotation

from . import geometry
from .exceptions import DomainError
from .fields import ConfigurationField, VectorField, ambient_differential, ambient_metric
from .generators import seeded_vector_field
from .grid import SPHERE

RATIO_FLOOR = 1e-12


@dataclass(frozen=True)
class IsometryFit:
    """Result of :func:`best_isometry`.

    ``rotation`` (and ``translation`` on the plane) define the fitted
    isometry ``x -> R x + t``.  ``ambiguous`` flags a cross-covariance whose
    singular values do not determine the rotation; ``singular_gap`` is the
    gap between its two smallest singular values.
    """

    rotation: np.ndarray
    translation: np.ndarray
    l2_residual: float
    w12_residual: float
    energy_norm: float
    ratio: float
    ambiguous: bool
    singular_gap: float


def _kabsch(H):
    U, S, Vt = np.linalg.svd(H)
    d = 1.0 if np.linalg.det(U @ Vt) > 0 else -1.0
    U[:, -1] *= d
    return U @ Vt, S


def best_isometry(f, floor=RATIO_FLOOR):
    """Weighted least-squares fit of an ambient isometry to ``f``.

    Minimises ``sum w sqrt(det s) |f - (R p + t)|^2`` over rotations
    (``det R = +1``, ``t = 0`` on the sphere) by an SVD of the weighted
    cross-covariance.  The W^{1,2} residual adds the L2 norm of
    ``d(kappa o f) - R d(kappa)`` measured with ``s^{-1}``; ``energy_norm`` is
    the L2 norm of ``dist(df s^{-1/2}, SO(2))``.  ``ratio`` is
    ``w12_residual / energy_norm``, reported as 0 when the energy norm is
    below ``floor``.
    """
    grid = f.grid
    s = ambient_metric(grid)
    c = (grid.weights * s.volume_density).ravel()
    X = grid.points.reshape(-1, grid.ambient_dim)
    Y = f.values.reshape(-1, grid.ambient_dim)
    if grid.chart == SPHERE:
        xbar = ybar = np.zeros(3)
    else:
        xbar = c @ X / c.sum()
        ybar = c @ Y / c.sum()
    H = ((Y - ybar) * c[:, None]).T @ (X - xbar)
    R, S = _kabsch(H)
    t = ybar - R @ xbar
    gap = float(S[-2] - S[-1])
    ambiguous = bool(S[-2] <= 1e-12 * S[0])

    diff = f.values - (grid.points @ R.T + t)
    l2 = grid.integrate(np.sum(diff**2, axis=-1) * s.volume_density)
    dF = ambient_differential(f) - np.einsum("ab,...bj->...aj", R, grid.jacobian)
    deriv = grid.integrate(np.einsum("...aj,...ak,...jk->...", dF, dF, s.inverse) * s.volume_density)
    w12 = math.sqrt(l2 + deriv)

    E = geometry.tangent_frame(f.values)
    A = E @ ambient_differential(f) @ geometry.inv_sqrt_spd(s.values)
    dist, _ = geometry.dist_to_so(A)
    energy_norm = math.sqrt(grid.integrate(dist**2 * s.volume_density))
    ratio = w12 / energy_norm if energy_norm >= floor else 0.0
    return IsometryFit(R, t, math.sqrt(l2), w12, energy_norm, ratio, ambiguous, gap)


def _check_rotation(Psi, dim):
    Psi = np.asarray(Psi, dtype=float)
    if Psi.shape != (dim, dim) or not geometry.is_special_orthogonal(Psi, tol=1e-12):
        raise DomainError("Psi must be a special orthogonal matrix of the ambient dimension")
    return Psi


def recovery_sequence(u, Psi, eps):
    """``f(p) = exp_{Psi p}(eps Psi u(p))``; on the plane ``Psi p + eps Psi u``."""
    grid = u.grid
    Psi = _check_rotation(Psi, grid.ambient_dim)
    V = eps * u.ambient() @ Psi.T
    base = grid.points @ Psi.T
    if grid.chart != SPHERE:
        return ConfigurationField(grid, base + V)
    if np.linalg.norm(V, axis=-1).max(initial=0.0) >= math.pi / 2:
        raise DomainError("eps * |u| reaches the injectivity bound pi/2")
    vals = geometry.sphere_exp(base, V)
    return ConfigurationField(grid, vals / np.linalg.norm(vals, axis=-1, keepdims=True))


def _check_reach(grid, base, f):
    dist = geometry.geodesic_distance(base, f.values)
    bad = dist >= geometry.ANTIPODAL_CUTOFF
    if np.any(bad):
        node = tuple(int(i) for i in np.argwhere(bad)[0])
        raise DomainError(f"node {node} is (nearly) antipodal to its reference point")


def extract_displacement(f, Psi, eps):
    """``u(p) = Psi^{-1} log_{Psi p}(f(p)) / eps`` in chart components."""
    grid = f.grid
    Psi = _check_rotation(Psi, grid.ambient_dim)
    base = grid.points @ Psi.T
    if grid.chart == SPHERE:
        _check_reach(grid, base, f)
    V = geometry.log_map(base, f.values) @ Psi / eps
    if grid.chart == SPHERE:
        V -= np.sum(V * grid.points, axis=-1, keepdims=True) * grid.points
    return VectorField.from_ambient(grid, V)


def transported_gradient(f, Psi, eps):
    """``(Psi^{-1} Pi df - I) / eps`` as chart matrices ``[..., i, j]``.

    ``Pi`` is parallel transport from ``f(p)`` back to ``Psi p``; the
    differential is first projected onto ``T_{f(p)}``.
    """
    grid = f.grid
    Psi = _check_rotation(Psi, grid.ambient_dim)
    dF = ambient_differential(f)
    base = grid.points @ Psi.T
    if grid.chart == SPHERE:
        _check_reach(grid, base, f)
        p = f.values
        dF = dF - p[..., :, None] * np.einsum("...a,...aj->...j", p, dF)[..., None, :]
        dF = geometry.parallel_transport(p, base) @ dF
    back = np.einsum("ba,...bj->...aj", Psi, dF)
    chart = np.linalg.inv(grid.metric) @ np.swapaxes(grid.jacobian, -1, -2) @ back
    return (chart - np.eye(2)) / eps


def rigidity_trial(seed, amplitude, grid, n_modes=3):
    """Fit an isometry to a seeded perturbation of a seeded rotation of the patch.

    ``f = exp_{Psi p}(Psi V(p))`` with ``V`` a smooth tangent field of peak
    length ``amplitude``.
    """
    if not 0 <= amplitude <= 0.5:
        raise DomainError("amplitude must lie in [0, 0.5]")
    if grid.chart != SPHERE:
        raise DomainError("rigidity trials need the sphere")
    Psi = Rotation.random(random_state=seed).as_matrix()
    if amplitude == 0:
        u = VectorField.zeros(grid)
    else:
        u = seeded_vector_field(grid, seed, amplitude, n_modes)
    return best_isometry(recovery_sequence(u, Psi, 1.0))

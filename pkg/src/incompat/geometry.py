"""Closed-form geometry of the unit sphere and the plane, and 2x2 matrix kernels.

All functions are vectorised over leading axes.  Ambient points are unit
3-vectors (sphere) or 2-vectors (plane); the ambient space is inferred from
the size of the last axis.
"""
import enum

import numpy as np

from .exceptions import DomainError

ANTIPODAL_CUTOFF = np.pi - 1e-6


class Ambient(enum.Enum):
    UNIT_SPHERE = "sphere"
    EUCLIDEAN_PLANE = "plane"

    @classmethod
    def of(cls, points):
        dim = np.shape(points)[-1]
        if dim == 3:
            return cls.UNIT_SPHERE
        if dim == 2:
            return cls.EUCLIDEAN_PLANE
        raise DomainError(f"ambient points must be 2- or 3-vectors, got dimension {dim}")


def sym(A):
    return 0.5 * (A + np.swapaxes(A, -1, -2))


def frob(A):
    return np.sqrt(np.sum(np.asarray(A) ** 2, axis=(-2, -1)))


# ---------------------------------------------------------------------------
# small-matrix kernels
# ---------------------------------------------------------------------------

def _check_spd(M):
    M = np.asarray(M, dtype=float)
    if M.shape[-2:] != (2, 2):
        raise DomainError("expected 2x2 matrices")
    if not np.all(np.isfinite(M)):
        raise DomainError("matrix has non-finite entries")
    asym = np.abs(M[..., 0, 1] - M[..., 1, 0])
    scale = np.maximum(frob(M), 1e-300)
    if np.any(asym > 1e-12 * scale):
        raise DomainError(f"matrix is not symmetric (asymmetry {asym.max():.3e})")
    lam = np.linalg.eigvalsh(sym(M))
    if np.any(lam[..., 0] <= 0):
        raise DomainError(f"matrix is not positive definite: eigenvalue {lam[..., 0].min():.6e}")
    return M


def sqrt_spd(M):
    """Symmetric positive-definite square root of 2x2 SPD matrices.

    Uses the closed form ``sqrt(M) = (M + sqrt(det M) I) / sqrt(tr M + 2 sqrt(det M))``.

    Raises
    ------
    DomainError
        If ``M`` is not symmetric or has a non-positive eigenvalue.
    """
    M = sym(_check_spd(M))
    a, b, d = M[..., 0, 0], M[..., 0, 1], M[..., 1, 1]
    det = a * d - b * b
    s = np.sqrt(det)
    t = np.sqrt(a + d + 2.0 * s)
    R = M.copy()
    R[..., 0, 0] += s
    R[..., 1, 1] += s
    return R / t[..., None, None]


def inv_sqrt_spd(M):
    R = sqrt_spd(M)
    return np.linalg.inv(R)


def dist_to_so(A):
    """Frobenius distance from ``A`` to the special orthogonal group.

    The nearest rotation is ``U diag(1, .., det(U V^T)) V^T`` from the SVD
    ``A = U S V^T``; when the smallest singular value is repeated or zero the
    minimiser is not unique and the one returned is whatever the SVD routine
    delivers (LAPACK's ordering), which is still a minimiser.

    Returns
    -------
    distance : ndarray
    nearest : ndarray
        Rotations attaining the distance (``det = +1``).
    """
    A = np.asarray(A, dtype=float)
    U, _, Vt = np.linalg.svd(A)
    d = np.sign(np.linalg.det(U @ Vt))
    d = np.where(d == 0, 1.0, d)
    U = U.copy()
    U[..., :, -1] *= d[..., None]
    R = U @ Vt
    return frob(A - R), R


def dist2_to_so_grad(A):
    """``dist(A, SO)**2`` and its derivative ``2 (A - R(A))`` (envelope theorem).

    Also returns a boolean mask of matrices whose smallest singular value is
    numerically zero, where the nearest rotation is not unique.
    """
    A = np.asarray(A, dtype=float)
    U, S, Vt = np.linalg.svd(A)
    d = np.sign(np.linalg.det(U @ Vt))
    d = np.where(d == 0, 1.0, d)
    U = U.copy()
    U[..., :, -1] *= d[..., None]
    R = U @ Vt
    diff = A - R
    singular = S[..., -1] <= 1e-14 * np.maximum(S[..., 0], 1e-300)
    return np.sum(diff**2, axis=(-2, -1)), 2.0 * diff, singular


def is_special_orthogonal(Q, tol=1e-10):
    Q = np.asarray(Q, dtype=float)
    n = Q.shape[-1]
    orth = frob(np.swapaxes(Q, -1, -2) @ Q - np.eye(n))
    return bool(np.all(orth <= tol) and np.all(np.linalg.det(Q) > 0))


def quadratic_model_check(Q, B, t):
    """Exact and second-order-model values of ``dist(Q + tB, SO)**2``.

    The model is ``t**2 |sym(B Q^T)|**2``, half the second variation
    ``2 |sym(B Q^T)|**2`` times ``t**2``; the first variation vanishes on SO.
    """
    Q = np.asarray(Q, dtype=float)
    B = np.asarray(B, dtype=float)
    if not is_special_orthogonal(Q):
        raise DomainError("Q must be special orthogonal")
    dist, _ = dist_to_so(Q + t * B)
    model = t**2 * np.sum(sym(B @ np.swapaxes(Q, -1, -2)) ** 2, axis=(-2, -1))
    return dist**2, model


# ---------------------------------------------------------------------------
# sphere and plane
# ---------------------------------------------------------------------------

def _norm(x):
    return np.linalg.norm(x, axis=-1)


def tangent_frame(p):
    """Deterministic oriented orthonormal frame of ``T_p``, shape ``(..., 2, dim)``.

    Sphere: ``e1`` is ``e_z`` Gram-Schmidt'ed against ``p`` (``e_x`` when
    ``|p_z| > 0.9``) and ``e2 = p x e1``, so ``e1 x e2 = p``.  Plane: the
    standard basis.
    """
    p = np.asarray(p, dtype=float)
    if Ambient.of(p) is Ambient.EUCLIDEAN_PLANE:
        return np.broadcast_to(np.eye(2), p.shape[:-1] + (2, 2)).copy()
    ref = np.zeros_like(p)
    switch = np.abs(p[..., 2]) > 0.9
    ref[..., 2] = np.where(switch, 0.0, 1.0)
    ref[..., 0] = np.where(switch, 1.0, 0.0)
    e1 = ref - np.sum(ref * p, axis=-1, keepdims=True) * p
    e1 /= _norm(e1)[..., None]
    e2 = np.cross(p, e1)
    return np.stack([e1, e2], axis=-2)


def _check_unit(p):
    if np.any(np.abs(_norm(p) - 1.0) > 1e-10):
        raise DomainError("sphere points must have unit norm")


def sphere_exp(p, v):
    """Exponential map of the unit sphere: ``cos|v| p + sin|v| v/|v|``."""
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    _check_unit(p)
    nv = _norm(v)
    if np.any(nv >= np.pi):
        raise DomainError(f"tangent vector of length {nv.max():.6g} exceeds the injectivity radius pi")
    if np.any(np.abs(np.sum(p * v, axis=-1)) > 1e-8 * (1.0 + nv)):
        raise DomainError("vector is not tangent at the base point")
    # sin(x)/x without the removable singularity
    sinc = np.sinc(nv / np.pi)
    return np.cos(nv)[..., None] * p + sinc[..., None] * v


def sphere_log(p, q):
    """Inverse of :func:`sphere_exp`; raises near the antipode of ``p``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    _check_unit(p)
    _check_unit(q)
    c = np.sum(p * q, axis=-1)
    w = q - c[..., None] * p
    s = _norm(w)
    angle = np.arctan2(s, c)
    if np.any(angle >= ANTIPODAL_CUTOFF):
        raise DomainError("points are (nearly) antipodal; the logarithm is undefined")
    scale = angle / np.where(s > 0, s, 1.0)
    scale = np.where(s > 0, scale, 1.0)
    return scale[..., None] * w


def exp_map(p, v):
    if Ambient.of(p) is Ambient.EUCLIDEAN_PLANE:
        return np.asarray(p, dtype=float) + np.asarray(v, dtype=float)
    return sphere_exp(p, v)


def log_map(p, q):
    if Ambient.of(p) is Ambient.EUCLIDEAN_PLANE:
        return np.asarray(q, dtype=float) - np.asarray(p, dtype=float)
    return sphere_log(p, q)


def geodesic_distance(p, q):
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if Ambient.of(p) is Ambient.EUCLIDEAN_PLANE:
        return _norm(q - p)
    c = np.sum(p * q, axis=-1)
    return np.arctan2(_norm(np.cross(p, q)), c)


def _skew(v):
    K = np.zeros(v.shape[:-1] + (3, 3))
    K[..., 0, 1], K[..., 0, 2] = -v[..., 2], v[..., 1]
    K[..., 1, 0], K[..., 1, 2] = v[..., 2], -v[..., 0]
    K[..., 2, 0], K[..., 2, 1] = -v[..., 1], v[..., 0]
    return K


def parallel_transport(p, q):
    """Levi-Civita transport along the minimal geodesic from ``p`` to ``q``.

    Returned as the ambient rotation about ``p x q`` taking ``p`` to ``q``
    (identity on the normal of the geodesic plane), shape ``(..., 3, 3)``.
    Restricted to ``T_p`` it is the transport ``T_p -> T_q``.  On the plane
    the transport is the identity.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if Ambient.of(p) is Ambient.EUCLIDEAN_PLANE:
        return np.broadcast_to(np.eye(2), np.broadcast_shapes(p.shape, q.shape)[:-1] + (2, 2)).copy()
    _check_unit(p)
    _check_unit(q)
    c = np.sum(p * q, axis=-1)
    if np.any(geodesic_distance(p, q) >= ANTIPODAL_CUTOFF):
        raise DomainError("points are (nearly) antipodal; transport is ill-defined")
    K = _skew(np.cross(p, q))
    return np.eye(3) + K + (K @ K) / (1.0 + c)[..., None, None]


def transport_in_frames(p, q):
    """2x2 matrix of :func:`parallel_transport` in the frames at ``p`` and ``q``."""
    Ep, Eq = tangent_frame(p), tangent_frame(q)
    return Eq @ parallel_transport(p, q) @ np.swapaxes(Ep, -1, -2)


def loop_holonomy(vertices):
    """Holonomy of the geodesic polygon through ``vertices`` (implicitly closed).

    Returns
    -------
    map : ndarray, shape (2, 2)
        The transport around the loop in the frame at ``vertices[0]``.
    deviation : float
        ``|map - I|_F``, equal to ``2 sqrt(2) |sin(alpha / 2)|`` for holonomy
        angle ``alpha``.
    """
    V = np.asarray(vertices, dtype=float)
    if V.ndim != 2 or V.shape[1] != 3:
        raise DomainError("vertices must be a list of 3-vectors")
    if len(V) > 1 and np.allclose(V[0], V[-1], atol=1e-14, rtol=0):
        V = V[:-1]
    if len(V) < 2:
        raise DomainError("a loop needs at least two distinct vertices")
    nxt = np.roll(V, -1, axis=0)
    if np.any(geodesic_distance(V, nxt) < 1e-14):
        raise DomainError("loop has repeated consecutive vertices")
    total = np.eye(3)
    for a, b in zip(V, nxt):
        total = parallel_transport(a, b) @ total
    E0 = tangent_frame(V[0])
    H = E0 @ total @ E0.T
    return H, float(frob(H - np.eye(2)))


def spherical_polygon_area(vertices):
    """Signed area of a geodesic polygon by fan triangulation.

    Each triangle uses the Van Oosterom-Strackee formula
    ``tan(E/2) = p.(q x r) / (1 + p.q + q.r + r.p)``.
    """
    V = np.asarray(vertices, dtype=float)
    if np.allclose(V[0], V[-1]):
        V = V[:-1]
    total = 0.0
    p = V[0]
    for q, r in zip(V[1:-1], V[2:]):
        num = np.dot(p, np.cross(q, r))
        den = 1.0 + np.dot(p, q) + np.dot(q, r) + np.dot(r, p)
        total += 2.0 * np.arctan2(num, den)
    return total

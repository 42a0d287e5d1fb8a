"""Finite-difference weights on uniform grids.

Weights are obtained by imposing exactness on a small function family at the
stencil points.  Two families are supported:

``"poly"``
    monomials ``1, x, x**2, ...`` (classical Fornberg weights);
``"trig"``
    ``1, cos x, sin x, cos 2x, sin 2x, ...``.  A stencil with ``m`` points that
    is exact on the first ``m`` trigonometric functions has the same order of
    consistency as the polynomial one, and additionally differentiates the
    spherical-coordinate embedding of the unit sphere (and ``sin**2``) exactly.

The linear systems are solved in extended precision with :mod:`mpmath`, so the
returned float weights are correctly rounded even for small ``h``.
"""
from functools import lru_cache

import mpmath
import numpy as np

_DPS = 50


def _basis(kind, m):
    if kind == "poly":
        return [lambda x, k=k: x**k for k in range(m)]
    if kind == "trig":
        funcs = [lambda x: mpmath.mpf(1)]
        k = 1
        while len(funcs) < m - 1:
            funcs.append(lambda x, k=k: mpmath.cos(k * x))
            funcs.append(lambda x, k=k: mpmath.sin(k * x))
            k += 1
        if len(funcs) < m:
            # odd last function keeps the even/odd jets balanced, so the
            # consistency order matches the polynomial stencil
            funcs.append(lambda x, k=k: mpmath.sin(k * x))
        return funcs
    raise ValueError(f"unknown stencil basis {kind!r}")


@lru_cache(maxsize=None)
def fd_weights(offsets, deriv, h, kind="poly"):
    """Weights ``w`` with ``sum(w[k] * f(x0 + offsets[k] * h)) ~ f^(deriv)(x0)``.

    Parameters
    ----------
    offsets : tuple of int
        Stencil offsets in units of ``h``.
    deriv : int
        Derivative order (1 or 2 in practice).
    h : float
        Grid spacing.
    kind : {"poly", "trig"}
        Function family the stencil is exact on.

    Returns
    -------
    numpy.ndarray
        Float weights, one per offset.
    """
    offsets = tuple(int(o) for o in offsets)
    m = len(offsets)
    if m <= deriv:
        raise ValueError("stencil needs more points than the derivative order")
    with mpmath.workdps(_DPS):
        hh = mpmath.mpf(h)
        funcs = _basis(kind, m)
        A = mpmath.matrix(m, m)
        b = mpmath.matrix(m, 1)
        for r, phi in enumerate(funcs):
            for c, o in enumerate(offsets):
                A[r, c] = phi(o * hh)
            b[r] = mpmath.diff(phi, 0, deriv)
        w = mpmath.lu_solve(A, b)
        return np.array([float(w[k]) for k in range(m)])


def _stencil_offsets(n, i, width, extra):
    """Offsets of a ``width``-point stencil centred on node ``i`` if possible,
    shifted inward near the ends and widened by ``extra`` points there."""
    half = width // 2
    if half <= i <= n - 1 - half:
        return tuple(range(-half, half + 1))
    w = width + extra
    if i < half:
        return tuple(range(-i, w - i))
    j = n - 1 - i
    return tuple(range(-(w - 1 - j), j + 1))


@lru_cache(maxsize=None)
def diff_matrix(n, h, deriv, order=4, kind="poly"):
    """Dense ``n x n`` matrix of the ``deriv``-th derivative on a uniform grid.

    Interior rows use the central stencil of the requested ``order``; the
    rows near each end use one-sided stencils of the same order (one extra
    point is used for second derivatives so the boundary rows keep ``order``).
    """
    if order not in (2, 4):
        raise ValueError("order must be 2 or 4")
    if n < order + 3:
        raise ValueError(f"need at least {order + 3} nodes for order {order}")
    width = order + 1
    extra = 0 if deriv == 1 else 1
    D = np.zeros((n, n))
    for i in range(n):
        offs = _stencil_offsets(n, i, width, extra)
        D[i, [i + o for o in offs]] = fd_weights(offs, deriv, float(h), kind)
    D.setflags(write=False)
    return D

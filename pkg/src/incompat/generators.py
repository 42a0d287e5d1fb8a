"""Closed-form and seeded fields used as inputs by experiments and tests."""
import numpy as np

from .exceptions import ConfigError
from .fields import TwoTensorField, VectorField, ambient_metric, deformation_operator, vector_inner
from .geometry import sqrt_spd
from .grid import SPHERE


def killing_fields(grid):
    """A basis of the ambient isometry algebra restricted to the patch.

    Sphere: the rotation generators ``a x p`` for ``a`` in the standard basis.
    Plane: the two translations and the rotation about the patch centre.
    """
    p = grid.points
    if grid.chart == SPHERE:
        return [VectorField.from_ambient(grid, np.cross(a, p)) for a in np.eye(3)]
    centre = np.array([np.mean(grid.u_range), np.mean(grid.v_range)])
    q = p - centre
    rot = np.stack([-q[..., 1], q[..., 0]], axis=-1)
    ones = np.ones(grid.shape)
    zeros = np.zeros(grid.shape)
    return [
        VectorField(grid, np.stack([ones, zeros], axis=-1)),
        VectorField(grid, np.stack([zeros, ones], axis=-1)),
        VectorField(grid, rot),
    ]


def _random_ambient_field(points, rng, n_modes):
    dim = points.shape[-1]
    out = np.zeros(points.shape)
    for _ in range(n_modes):
        k = rng.normal(size=dim)
        k *= rng.uniform(0.5, 2.0) / np.linalg.norm(k)
        phase = rng.uniform(0, 2 * np.pi)
        coef = rng.normal(size=dim)
        out += np.sin(points @ k + phase)[..., None] * coef
    return out


def seeded_vector_field(grid, seed, amplitude=0.3, n_modes=3):
    """Smooth random tangent field with ``max |u|_s = amplitude``.

    Built from a few ambient plane waves projected onto the tangent planes.
    """
    rng = np.random.default_rng(seed)
    p = grid.points
    V = _random_ambient_field(p, rng, n_modes)
    if grid.chart == SPHERE:
        V -= np.sum(V * p, axis=-1, keepdims=True) * p
    peak = np.linalg.norm(V, axis=-1).max()
    if peak > 0:
        V *= amplitude / peak
    return VectorField.from_ambient(grid, V)


def conformal(grid, factor=2.0):
    """``factor * s``; ``factor`` may be a scalar or a nodal array."""
    s = grid.metric
    a = np.broadcast_to(np.asarray(factor, dtype=float), grid.shape)
    return TwoTensorField(grid, a[..., None, None] * s)


def _normalised_coords(grid):
    c = grid.coords
    xi = (c[..., 0] - grid.u_range[0]) / (grid.u_range[1] - grid.u_range[0])
    eta = (c[..., 1] - grid.v_range[0]) / (grid.v_range[1] - grid.v_range[0])
    return xi, eta


def _from_orthonormal(grid, hat):
    root = sqrt_spd(grid.metric)
    return TwoTensorField(grid, root @ hat @ root)


def bump(grid, component=(0, 0), centre=(0.5, 0.5), width=0.15, amplitude=0.5):
    """A single orthonormal-frame component carrying a smooth Gaussian bump.

    ``centre`` and ``width`` are in patch-normalised coordinates.
    """
    xi, eta = _normalised_coords(grid)
    b = amplitude * np.exp(-((xi - centre[0]) ** 2 + (eta - centre[1]) ** 2) / (2 * width**2))
    i, j = component
    hat = np.zeros(grid.shape + (2, 2))
    hat[..., i, j] = b
    hat[..., j, i] = b
    return _from_orthonormal(grid, hat)


def trig_series(grid, seed, amplitude=0.4, modes=3):
    """Seeded truncated cosine series in every orthonormal-frame component.

    Mode ``(k, l)`` carries weight ``1 / (1 + k + l)``; the field is scaled
    so that ``max |h|_s = amplitude``.
    """
    rng = np.random.default_rng(seed)
    xi, eta = _normalised_coords(grid)
    comps = []
    for _ in range(3):
        c = np.zeros(grid.shape)
        for k in range(modes + 1):
            for l in range(modes + 1):
                a, p1, p2 = rng.normal(), rng.uniform(0, 2 * np.pi), rng.uniform(0, 2 * np.pi)
                c += a / (1 + k + l) * np.cos(np.pi * k * xi + p1) * np.cos(np.pi * l * eta + p2)
        comps.append(c)
    hat = np.empty(grid.shape + (2, 2))
    hat[..., 0, 0], hat[..., 1, 1] = comps[0], comps[2]
    hat[..., 0, 1] = hat[..., 1, 0] = comps[1]
    peak = np.linalg.norm(hat, axis=(-2, -1)).max()
    return _from_orthonormal(grid, hat * (amplitude / peak))


def remove_killing(u, s):
    """L2-orthogonal projection of ``u`` off the Killing generators; returns ``(u', coefficients)``."""
    ks = killing_fields(u.grid)
    gram = np.array([[vector_inner(a, b, s) for b in ks] for a in ks])
    coef = np.linalg.solve(gram, np.array([vector_inner(k, u, s) for k in ks]))
    out = u.values - sum(c * k.values for c, k in zip(coef, ks))
    return VectorField(u.grid, out), coef


def deformation_range(grid, seed, amplitude=0.3, gauge_fixed=True):
    """``L_v s`` for a seeded smooth field ``v``; lies in the range of the deformation operator.

    With ``gauge_fixed`` the Killing part of ``v`` is removed first.  It
    contributes nothing in the continuum but leaves an O(h^4) discrete image.
    """
    s = ambient_metric(grid)
    v = seeded_vector_field(grid, seed, amplitude)
    if gauge_fixed:
        v, _ = remove_killing(v, s)
    return deformation_operator(v, s)


H_GENERATORS = ("conformal", "bump", "range", "trig")


def make_h(grid, name, seed=0, **params):
    """Dispatch a named generator; unknown names or parameters raise ``ConfigError``."""
    try:
        if name == "conformal":
            return conformal(grid, **params)
        if name == "bump":
            return bump(grid, **params)
        if name == "range":
            return deformation_range(grid, seed, **params)
        if name == "trig":
            return trig_series(grid, seed, **params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for h generator {name!r}: {exc}") from None
    raise ConfigError(f"unknown h generator {name!r}; expected one of {', '.join(H_GENERATORS)}")

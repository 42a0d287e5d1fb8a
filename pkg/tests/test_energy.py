import numpy as np
import pytest

from incompat import energy as En
from incompat import fields as F
from incompat import generators as Gn
from incompat import geometry
from incompat.exceptions import DomainError, GridMismatchError
from incompat.grid import ChartGrid
from incompat.optimize import minimize_limit
from incompat.rigidity import recovery_sequence

from .helpers import observed_order, random_rotation


def _inp(f, g_eps, s, eps=0.1):
    return En.NonlinearEnergyInput(f, g_eps, s, eps)


def _perturbed(g, s, seed=2, eps=0.1, hseed=1):
    h = Gn.trig_series(g, hseed)
    g_eps = F.MetricField(g, s.values + eps * h.values)
    f = recovery_sequence(Gn.seeded_vector_field(g, seed), np.eye(3), eps)
    return _inp(f, g_eps, s, eps)


# -- nonlinear energy -------------------------------------------------------

def test_inclusion_of_compatible_metric_has_zero_energy(sphere16):
    g, s = sphere16
    assert En.nonlinear_energy(_inp(F.ConfigurationField.inclusion(g), s, s)) <= 1e-24


def test_rotated_inclusion_has_zero_energy(sphere16):
    g, s = sphere16
    R = random_rotation(np.random.default_rng(1))
    assert En.nonlinear_energy(_inp(F.ConfigurationField.inclusion(g).rotated(R), s, s)) <= 1e-22


@pytest.mark.parametrize("eps", [0.2, 0.05, 0.01])
def test_conformal_energy_is_twice_volume(sphere32, eps):
    g, s = sphere32
    g_eps = F.MetricField(g, (1 + eps) ** 2 * s.values)
    e = En.nonlinear_energy(_inp(F.ConfigurationField.inclusion(g), g_eps, s, eps))
    assert e == pytest.approx(2 * F.volume(s), rel=1e-12)


def test_frame_invariance(sphere16):
    g, s = sphere16
    inp = _perturbed(g, s)
    rng = np.random.default_rng(3)
    a = rng.uniform(0, 2 * np.pi, g.shape)
    R = np.stack([np.stack([np.cos(a), -np.sin(a)], -1), np.stack([np.sin(a), np.cos(a)], -1)], -2)
    frame = R @ geometry.tangent_frame(inp.f.values)
    e0 = En.nonlinear_energy(inp)
    assert En.nonlinear_energy(inp, frame=frame) == pytest.approx(e0, rel=1e-12)


def test_left_rotation_invariance(sphere16):
    g, s = sphere16
    inp = _perturbed(g, s)
    R = random_rotation(np.random.default_rng(4))
    assert En.nonlinear_energy(inp.with_f(inp.f.rotated(R))) == pytest.approx(En.nonlinear_energy(inp), rel=1e-12)


def test_input_validation(sphere16):
    g, s = sphere16
    other = F.ambient_metric(ChartGrid.sphere_patch(17))
    with pytest.raises(GridMismatchError):
        _inp(F.ConfigurationField.inclusion(g), other, s)
    with pytest.raises(DomainError):
        _inp(F.ConfigurationField.inclusion(g), s, s, eps=0.0)


# -- nonlinear gradient -----------------------------------------------------

def test_gradient_vanishes_at_minimum(sphere16):
    g, s = sphere16
    grad = En.nonlinear_energy_gradient(_inp(F.ConfigurationField.inclusion(g), s, s))
    assert grad.norm(s) <= 1e-10


def test_gradient_is_tangent(sphere16):
    g, s = sphere16
    inp = _perturbed(g, s)
    grad = En.nonlinear_energy_gradient(inp)
    assert np.abs(np.sum(grad.values * inp.f.values, axis=-1)).max() <= 1e-10
    assert not grad.singular.any()


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_gradient_against_finite_differences(sphere16, seed):
    g, s = sphere16
    inp = _perturbed(g, s, seed=seed + 5, hseed=seed)
    grad = En.nonlinear_energy_gradient(inp)
    rng = np.random.default_rng(seed)
    d = rng.normal(size=inp.f.values.shape)
    d -= np.sum(d * inp.f.values, axis=-1, keepdims=True) * inp.f.values
    t = 1e-6

    def energy_at(step):
        vals = geometry.sphere_exp(inp.f.values, step * d)
        return En.nonlinear_energy(inp.with_f(F.ConfigurationField(g, vals / np.linalg.norm(vals, axis=-1, keepdims=True))))

    fd = (energy_at(t) - energy_at(-t)) / (2 * t)
    analytic = g.integrate(np.sum(grad.values * d, axis=-1) * s.volume_density)
    assert analytic == pytest.approx(fd, rel=1e-5)


def test_gradient_on_plane():
    g = ChartGrid.plane_patch(12)
    s = F.ambient_metric(g)
    rng = np.random.default_rng(0)
    f = F.ConfigurationField(g, g.points + 0.05 * np.sin(3 * g.points[..., ::-1]))
    inp = _inp(f, s, s, 0.5)
    grad = En.nonlinear_energy_gradient(inp)
    d = rng.normal(size=f.values.shape)
    t = 1e-6
    ep = En.nonlinear_energy(inp.with_f(F.ConfigurationField(g, f.values + t * d)))
    em = En.nonlinear_energy(inp.with_f(F.ConfigurationField(g, f.values - t * d)))
    analytic = g.integrate(np.sum(grad.values * d, axis=-1) * s.volume_density)
    assert analytic == pytest.approx((ep - em) / (2 * t), rel=1e-5)


# -- limit energy -----------------------------------------------------------

def test_limit_energy_trivial_cases(sphere32):
    g, s = sphere32
    zero = F.VectorField.zeros(g)
    assert En.limit_energy(En.LimitEnergyInput(zero, F.TwoTensorField.zeros(g), s)) == 0.0
    for k in Gn.killing_fields(g):
        e = En.limit_energy(En.LimitEnergyInput(k, F.TwoTensorField.zeros(g), s))
        assert e == pytest.approx(0.25 * F.l2_norm(F.deformation_operator(k, s), s) ** 2, rel=1e-12)
        assert e <= 1e-6
    e = En.limit_energy(En.LimitEnergyInput(zero, Gn.conformal(g, 2.0), s))
    assert e == pytest.approx(2 * F.volume(s), rel=1e-14)


def test_limit_energy_quadratic_scaling(sphere16):
    g, s = sphere16
    u, h = Gn.seeded_vector_field(g, 1), Gn.trig_series(g, 1)
    base = En.limit_energy(En.LimitEnergyInput(u, h, s))
    for lam in (0.5, 3.0, -2.0):
        scaled = En.limit_energy(En.LimitEnergyInput(lam * u, lam * h, s))
        assert scaled == pytest.approx(lam**2 * base, rel=1e-12)


def test_limit_gradient_against_finite_differences(sphere16):
    g, s = sphere16
    u, h = Gn.seeded_vector_field(g, 1), Gn.trig_series(g, 1)
    d = Gn.seeded_vector_field(g, 9)
    grad = En.limit_energy_gradient(En.LimitEnergyInput(u, h, s))
    t = 1e-4
    ep = En.limit_energy(En.LimitEnergyInput(u + t * d, h, s))
    em = En.limit_energy(En.LimitEnergyInput(u - t * d, h, s))
    assert F.vector_inner(grad, d, s) == pytest.approx((ep - em) / (2 * t), rel=1e-6)


def test_limit_gradient_vanishes_on_exact_range(sphere16):
    g, s = sphere16
    v = Gn.seeded_vector_field(g, 4)
    grad = En.limit_energy_gradient(En.LimitEnergyInput(v, F.deformation_operator(v, s), s))
    np.testing.assert_allclose(grad.values, 0, atol=1e-12)


def test_limit_gradient_at_minimiser_lies_in_killing_span(sphere16):
    # the minimiser is gauge-fixed against the discrete rotation generators,
    # which are only O(h^2) from the kernel, so the gradient survives in their span
    g, s = sphere16
    h = Gn.trig_series(g, 2)
    res = minimize_limit(h, s)
    grad = En.limit_energy_gradient(En.LimitEnergyInput(res.u_star, h, s)).flat()
    ref = En.limit_energy_gradient(En.LimitEnergyInput(F.VectorField.zeros(g), h, s)).flat()
    K = np.column_stack([k.flat() for k in Gn.killing_fields(g)])
    coef = np.linalg.lstsq(K, grad, rcond=None)[0]
    assert np.linalg.norm(grad - K @ coef) <= 1e-9 * np.linalg.norm(ref)


def test_limit_gradient_needs_ambient_metric(sphere16):
    g, s = sphere16
    other = F.MetricField(g, 2 * s.values)
    with pytest.raises(DomainError):
        En.limit_energy_gradient(En.LimitEnergyInput(F.VectorField.zeros(g), F.TwoTensorField.zeros(g), other))


# -- Q_eps and xi -----------------------------------------------------------

def test_q_eps_conformal(sphere16):
    g, s = sphere16
    eps = 0.1
    Q, xi = En.build_q_eps(F.MetricField(g, (1 + eps) ** 2 * s.values), s, eps)
    np.testing.assert_allclose(Q, np.broadcast_to((1 + eps) * np.eye(2), Q.shape), atol=1e-14)
    np.testing.assert_allclose(xi, np.broadcast_to(np.eye(2), xi.shape), atol=1e-12)


def test_q_eps_flat_diagonal(plane16):
    g, s = plane16
    h = F.TwoTensorField(g, np.broadcast_to(np.diag([2.0, 0.0]), g.shape + (2, 2)))
    xi = En.xi_limit(h, s)
    np.testing.assert_allclose(xi, np.broadcast_to(np.diag([1.0, 0.0]), xi.shape), atol=1e-15)
    np.testing.assert_allclose(En.twice_sym_flat(xi, s), h.values, atol=1e-15)
    errs = []
    for eps in (0.1, 0.05, 0.025):
        _, x = En.build_q_eps(F.MetricField(g, s.values + eps * h.values), s, eps)
        errs.append(np.abs(x - xi).max())
    assert observed_order(errs) > 0.95


def test_q_eps_is_isometry(sphere16):
    g, s = sphere16
    g_eps = F.MetricField(g, s.values + 0.2 * Gn.trig_series(g, 3).values)
    Q, _ = En.build_q_eps(g_eps, s, 0.2)
    np.testing.assert_allclose(np.swapaxes(Q, -1, -2) @ s.values @ Q, g_eps.values, atol=1e-10)
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(2,) + g.shape + (2,))
    lhs = np.einsum("...i,...ij,...j->...", np.einsum("...ij,...j->...i", Q, a), s.values,
                    np.einsum("...ij,...j->...i", Q, b))
    rhs = np.einsum("...i,...ij,...j->...", a, g_eps.values, b)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_xi_limit_solves_sym_equation(sphere16):
    g, s = sphere16
    h = Gn.trig_series(g, 4)
    xi = En.xi_limit(h, s)
    np.testing.assert_allclose(En.twice_sym_flat(xi, s), h.values, atol=1e-14)


def test_xi_limit_reduces_to_half_inverse_when_commuting(sphere16):
    g, s = sphere16
    h = Gn.conformal(g, np.cos(g.coords[..., 1]))
    np.testing.assert_allclose(En.xi_limit(h, s), 0.5 * np.linalg.inv(s.values) @ h.values, atol=1e-14)
    # off-diagonal h does not commute with s, and the naive formula is then wrong
    h2 = Gn.trig_series(g, 4)
    naive = 0.5 * np.linalg.inv(s.values) @ h2.values
    assert np.abs(En.xi_limit(h2, s) - naive).max() > 1e-3


def test_xi_convergence_rate(sphere16):
    g, s = sphere16
    h = Gn.trig_series(g, 5)
    xi = En.xi_limit(h, s)
    errs = []
    for eps in (0.2, 0.1, 0.05, 0.025):
        _, x = En.build_q_eps(F.MetricField(g, s.values + eps * h.values), s, eps)
        errs.append(F.matrix_l2_norm(x - xi, s))
    assert 0.9 < observed_order(errs) < 1.1

"""Fast end-to-end self check of every module on small grids.

Each check returns ``(passed, detail)``; :func:`run_selftest` prints one
line per check and returns a process exit code.
"""
import contextlib
import math
import sys
from unittest import mock

import numpy as np
from scipy.spatial.transform import Rotation

from .. import curvature, energy, fields, generators, geometry, optimize, rigidity
from ..grid import ChartGrid
from .config import ExperimentConfig, parse_config, serialize_config

CHECKS = []


def check(name):
    def register(fn):
        CHECKS.append((name, fn))
        return fn
    return register


def _close(actual, expected, tol):
    err = float(np.max(np.abs(np.asarray(actual, dtype=float) - np.asarray(expected, dtype=float))))
    return err <= tol, f"max error {err:.3e} (tol {tol:.0e})"


def _bound(value, tol, what="value"):
    value = float(value)
    return value <= tol, f"{what} {value:.3e} (bound {tol:.0e})"


def _sphere(n=20):
    return ChartGrid.sphere_patch(n)


def _plane(n=16):
    return ChartGrid.plane_patch(n)


# -- geom-core ---------------------------------------------------------------

@check("sqrt_spd identity")
def _():
    return _close(geometry.sqrt_spd(np.eye(2)), np.eye(2), 1e-15)


@check("sqrt_spd diag(4,9)")
def _():
    return _close(geometry.sqrt_spd(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]), 1e-15)


@check("sqrt_spd [[2,1],[1,2]]")
def _():
    r3 = math.sqrt(3)
    expected = np.array([[r3 + 1, r3 - 1], [r3 - 1, r3 + 1]]) / 2
    return _close(geometry.sqrt_spd(np.array([[2.0, 1.0], [1.0, 2.0]])), expected, 1e-14)


@check("sqrt_spd squares back (1000 seeded, cond <= 1e6)")
def _():
    rng = np.random.default_rng(0)
    Q, _ = np.linalg.qr(rng.normal(size=(1000, 2, 2)))
    lam = 10 ** rng.uniform(-3, 3, size=(1000, 2))
    M = Q @ (lam[..., None] * np.swapaxes(Q, -1, -2))
    M = 0.5 * (M + np.swapaxes(M, -1, -2))
    R = geometry.sqrt_spd(M)
    rel = np.linalg.norm(R @ R - M, axis=(1, 2)) / np.linalg.norm(M, axis=(1, 2))
    return _bound(rel.max(), 1e-12, "relative error")


@check("dist_to_so examples")
def _():
    d0, r0 = geometry.dist_to_so(np.eye(2))
    d1, r1 = geometry.dist_to_so(np.diag([2.0, 1.0]))
    d2, r2 = geometry.dist_to_so(np.diag([1.0, -1.0]))
    ok = abs(d0) < 1e-15 and abs(d1 - 1) < 1e-15 and abs(d2 - 2) < 1e-14
    ok = ok and np.allclose(r1, np.eye(2)) and abs(np.linalg.det(r2) - 1) < 1e-14
    return ok, f"distances {d0:.3g}, {d1:.3g}, {d2:.3g}"


@check("dist_to_so bi-invariance")
def _():
    rng = np.random.default_rng(2)
    A = rng.normal(size=(200, 2, 2))
    a, b = rng.uniform(0, 2 * np.pi, size=(2, 200))
    rot = lambda t: np.stack([np.stack([np.cos(t), -np.sin(t)], -1), np.stack([np.sin(t), np.cos(t)], -1)], -2)
    d = geometry.dist_to_so(A)[0]
    d_rot = geometry.dist_to_so(rot(a) @ A @ rot(b))[0]
    return _close(d_rot, d, 1e-12)


@check("quadratic model: antisymmetric B and B = I")
def _():
    B = np.array([[0.0, 1.0], [-1.0, 0.0]])
    w_exact, w_model = geometry.quadratic_model_check(np.eye(2), B, 0.1)
    w2_exact, w2_model = geometry.quadratic_model_check(np.eye(2), np.eye(2), 0.01)
    ok = w_model == 0 and w_exact <= 1e-3 and abs(w2_model - 2e-4) < 1e-18
    return ok, f"w_exact {w_exact:.3e}, model(I) {w2_model:.6e}"


@check("quadratic model remainder is third order")
def _():
    rng = np.random.default_rng(3)
    Q = geometry.dist_to_so(rng.normal(size=(2, 2)))[1]
    B = rng.normal(size=(2, 2))
    r = [abs(np.subtract(*geometry.quadratic_model_check(Q, B, t))) for t in (0.02, 0.01)]
    ratio = r[0] / r[1]
    return ratio > 6.0, f"halving ratio {ratio:.2f} (expect ~8)"


@check("sphere exp/log examples")
def _():
    n = np.array([0.0, 0.0, 1.0])
    ok = np.allclose(geometry.sphere_exp(n, np.zeros(3)), n)
    ok &= np.allclose(geometry.sphere_exp(n, [math.pi / 2, 0, 0]), [1, 0, 0], atol=1e-15)
    ok &= np.allclose(geometry.sphere_log(n, n), 0)
    ok &= np.allclose(geometry.sphere_log(n, np.array([1.0, 0, 0])), [math.pi / 2, 0, 0], atol=1e-15)
    return bool(ok), "four closed-form cases"


@check("exp/log inversion (seeded, |v| <= 3)")
def _():
    rng = np.random.default_rng(4)
    p = rng.normal(size=(500, 3))
    p /= np.linalg.norm(p, axis=1, keepdims=True)
    v = rng.normal(size=(500, 3))
    v -= np.sum(v * p, axis=1, keepdims=True) * p
    v *= (rng.uniform(0, 3, 500) / np.linalg.norm(v, axis=1))[:, None]
    return _close(geometry.sphere_log(p, geometry.sphere_exp(p, v)), v, 1e-12)


@check("parallel transport examples and SO(2) in frames")
def _():
    p, q = np.array([0.0, 0, 1]), np.array([1.0, 0, 0])
    T = geometry.parallel_transport(p, q)
    ok = np.allclose(T @ [0, 1, 0], [0, 1, 0]) and np.allclose(T @ [1, 0, 0], [0, 0, -1])
    rng = np.random.default_rng(5)
    a = rng.normal(size=(200, 3))
    b = rng.normal(size=(200, 3))
    a /= np.linalg.norm(a, axis=1, keepdims=True)
    b /= np.linalg.norm(b, axis=1, keepdims=True)
    M = geometry.transport_in_frames(a, b)
    err = np.abs(np.swapaxes(M, 1, 2) @ M - np.eye(2)).max()
    ok = ok and err < 1e-12 and np.all(np.abs(np.linalg.det(M) - 1) < 1e-12)
    return bool(ok), f"orthogonality error {err:.3e}"


@check("holonomy: two-point loop and octant triangle")
def _():
    _, d0 = geometry.loop_holonomy([[0, 0, 1.0], [1.0, 0, 0]])
    _, d1 = geometry.loop_holonomy([[1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0]])
    return abs(d0) < 1e-14 and abs(d1 - 2) < 1e-10, f"deviations {d0:.3e}, {d1:.12f}"


@check("holonomy matches Gauss-Bonnet")
def _():
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(50):
        c = rng.normal(size=3)
        c /= np.linalg.norm(c)
        E = geometry.tangent_frame(c)
        V = [geometry.sphere_exp(c, rng.uniform(0.05, 0.8) * (np.cos(t) * E[0] + np.sin(t) * E[1]))
             for t in np.sort(rng.uniform(0, 2 * np.pi, 3))]
        area = geometry.spherical_polygon_area(V)
        _, dev = geometry.loop_holonomy(V)
        worst = max(worst, abs(dev - 2 * math.sqrt(2) * abs(math.sin(area / 2))))
    return _bound(worst, 1e-10, "worst error")


@check("gauss curvature: flat and round")
def _():
    kp = curvature.gauss_curvature(fields.ambient_metric(_plane()))
    ks = curvature.gauss_curvature(fields.ambient_metric(_sphere()))
    return abs(kp).max() < 1e-12 and abs(ks - 1).max() < 1e-8, f"flat {abs(kp).max():.2e}, round {abs(ks - 1).max():.2e}"


# -- fields ------------------------------------------------------------------

@check("differential of the inclusion / of a rotation")
def _():
    gp = _plane()
    F1 = fields.configuration_differential(fields.ConfigurationField.inclusion(gp))
    gs = _sphere()
    R = Rotation.random(random_state=7).as_matrix()
    F2 = fields.configuration_differential(fields.ConfigurationField.inclusion(gs).rotated(R))
    e1 = np.abs(F1 - np.eye(2)).max()
    e2 = np.abs(np.swapaxes(F2, -1, -2) @ F2 - gs.metric).max()
    return e1 < 1e-13 and e2 < 1e-12, f"identity {e1:.2e}, isometry {e2:.2e}"


@check("covariant derivative: flat constant, Christoffel, Killing")
def _():
    gp = _plane()
    sp_ = fields.ambient_metric(gp)
    c = fields.covariant_derivative(fields.VectorField(gp, np.ones(gp.shape + (2,))), sp_)
    gs = _sphere()
    s = fields.ambient_metric(gs)
    G = fields.christoffel(s)
    th = gs.coords[..., 0]
    eG = np.abs(G[..., 0, 1, 1] + np.sin(th) * np.cos(th)).max()
    k = generators.killing_fields(gs)[2]
    A = s.values @ fields.covariant_derivative(k, s)
    ek = np.abs(A + np.swapaxes(A, -1, -2)).max()
    return np.abs(c).max() < 1e-13 and eG < 1e-12 and ek < 1e-12, f"Gamma {eG:.2e}, sym part {ek:.2e}"


@check("deformation operator: zero, Killing, radial scaling")
def _():
    gs = _sphere(24)
    s = fields.ambient_metric(gs)
    zero = fields.deformation_operator(fields.VectorField.zeros(gs), s)
    worst = max(fields.l2_norm(fields.deformation_operator(k, s), s) / fields.w12_norm(k, s)
                for k in generators.killing_fields(gs))
    gp = _plane()
    D = fields.deformation_operator(fields.VectorField(gp, gp.coords), fields.ambient_metric(gp))
    ok = np.abs(zero.values).max() == 0 and worst < 1e-2 and np.abs(D.values - 2 * np.eye(2)).max() < 1e-13
    return bool(ok), f"Killing ratio {worst:.2e}"


@check("l2_inner: <s,s> = 2 Vol and symmetry")
def _():
    gs = _sphere()
    s = fields.ambient_metric(gs)
    S = fields.TwoTensorField(gs, s.values)
    a = generators.trig_series(gs, 1)
    b = generators.trig_series(gs, 2)
    e1 = abs(fields.l2_inner(S, S, s) - 2 * fields.volume(s))
    e2 = abs(fields.l2_inner(a, b, s) - fields.l2_inner(b, a, s))
    return e1 < 1e-13 and e2 < 1e-14, f"volume error {e1:.2e}, asymmetry {e2:.2e}"


@check("quadrature exact for bilinear integrands")
def _():
    gp = _plane()
    x, y = gp.coords[..., 0], gp.coords[..., 1]
    return _close(gp.integrate(1 + 2 * x + 3 * y + 4 * x * y), 1 + 1 + 1.5 + 1, 1e-13)


@check("adjoint consistency")
def _():
    gs = _sphere(32)
    s = fields.ambient_metric(gs)
    u = generators.seeded_vector_field(gs, 8)
    c = gs.coords
    b = np.exp(-((c[..., 0] - np.pi / 2) ** 2 + (c[..., 1] - 0.75) ** 2) / 0.02)
    sig = np.zeros(gs.shape + (2, 2))
    sig[..., 0, 0] = b
    sig[..., 0, 1] = sig[..., 1, 0] = 0.3 * b
    sig = fields.TwoTensorField(gs, sig)
    lhs = fields.l2_inner(fields.deformation_operator(u, s), sig, s)
    rhs = fields.vector_inner(u, fields.deformation_adjoint(sig, s), s)
    return abs(lhs - rhs) <= 1e-3 * abs(lhs), f"relative gap {abs(lhs - rhs) / abs(lhs):.2e}"


@check("neg2 norm and curvature variation of zero")
def _():
    gs = _sphere()
    s = fields.ambient_metric(gs)
    n = curvature.neg2_sobolev_norm(np.zeros(gs.shape), s)
    r = curvature.curvature_variation(fields.TwoTensorField.zeros(gs), s)
    return n == 0 and np.all(r == 0), "zero in, zero out"


@check("curvature variation is linear")
def _():
    gs = _sphere()
    s = fields.ambient_metric(gs)
    a = generators.trig_series(gs, 3)
    b = generators.trig_series(gs, 4)
    R = lambda x: curvature.curvature_variation(x, s)
    lhs = R(2.0 * a + (-0.5) * b)
    rhs = 2.0 * R(a) - 0.5 * R(b)
    return _bound(np.linalg.norm(lhs - rhs) / np.linalg.norm(rhs), 1e-6, "relative defect")


@check("field serialization round trip")
def _():
    gs = _sphere(8)
    u = generators.seeded_vector_field(gs, 9)
    back = fields.field_from_text(fields.field_to_text(u))
    return np.array_equal(back.values, u.values) and back.grid == gs, "vector field"


# -- energy ------------------------------------------------------------------

def _inputs(gs, eps=0.1, seed=10):
    s = fields.ambient_metric(gs)
    h = generators.trig_series(gs, seed)
    g_eps = fields.MetricField(gs, s.values + eps * h.values)
    u = generators.seeded_vector_field(gs, seed + 1)
    f = rigidity.recovery_sequence(u, np.eye(3), eps)
    return energy.NonlinearEnergyInput(f, g_eps, s, eps)


@check("nonlinear energy vanishes on isometries")
def _():
    gs = _sphere()
    s = fields.ambient_metric(gs)
    iota = fields.ConfigurationField.inclusion(gs)
    R = Rotation.random(random_state=11).as_matrix()
    e1 = energy.nonlinear_energy(energy.NonlinearEnergyInput(iota, s, s, 0.1))
    inp = energy.NonlinearEnergyInput(iota.rotated(R), s, s, 0.1)
    e2 = energy.nonlinear_energy(inp)
    g = energy.nonlinear_energy_gradient(inp)
    return e1 < 1e-20 and e2 < 1e-20 and np.abs(g.values).max() < 1e-10, f"energies {e1:.1e}, {e2:.1e}"


@check("nonlinear gradient is tangent and frame/left invariance hold")
def _():
    gs = _sphere()
    inp = _inputs(gs)
    g = energy.nonlinear_energy_gradient(inp)
    tang = np.abs(np.sum(g.values * inp.f.values, axis=-1)).max()
    e = energy.nonlinear_energy(inp)
    rng = np.random.default_rng(12)
    E = geometry.tangent_frame(inp.f.values)
    t = rng.uniform(0, 2 * np.pi, gs.shape)
    rot = np.stack([np.stack([np.cos(t), -np.sin(t)], -1), np.stack([np.sin(t), np.cos(t)], -1)], -2)
    e_frame = energy.nonlinear_energy(inp, frame=rot @ E)
    R = Rotation.random(random_state=13).as_matrix()
    e_left = energy.nonlinear_energy(inp.with_f(inp.f.rotated(R)))
    ok = tang < 1e-10 and abs(e_frame - e) <= 1e-12 * e and abs(e_left - e) <= 1e-12 * e
    return ok, f"normal part {tang:.1e}, frame {abs(e_frame - e) / e:.1e}, left {abs(e_left - e) / e:.1e}"


@check("limit energy: zero, Killing, quadratic scaling")
def _():
    gs = _sphere(24)
    s = fields.ambient_metric(gs)
    zero_h = fields.TwoTensorField.zeros(gs)
    e0 = energy.limit_energy(energy.LimitEnergyInput(fields.VectorField.zeros(gs), zero_h, s))
    ek = energy.limit_energy(energy.LimitEnergyInput(generators.killing_fields(gs)[0], zero_h, s))
    u = generators.seeded_vector_field(gs, 14)
    h = generators.trig_series(gs, 15)
    a = energy.limit_energy(energy.LimitEnergyInput(u, h, s))
    b = energy.limit_energy(energy.LimitEnergyInput(3.0 * u, 3.0 * h, s))
    return e0 == 0 and ek < 1e-5 and abs(b - 9 * a) <= 1e-12 * b, f"Killing energy {ek:.1e}"


@check("Q_eps: conformal, diagonal and isometry")
def _():
    gs = _sphere()
    s = fields.ambient_metric(gs)
    eps = 0.1
    Q, xi = energy.build_q_eps(fields.MetricField(gs, (1 + eps) ** 2 * s.values), s, eps)
    ok1 = np.abs(Q - (1 + eps) * np.eye(2)).max() < 1e-13 and np.abs(xi - np.eye(2)).max() < 1e-12
    gp = _plane()
    sp_ = fields.ambient_metric(gp)
    eps = 1e-6
    _, xi2 = energy.build_q_eps(fields.MetricField(gp, sp_.values + eps * np.diag([2.0, 0.0])), sp_, eps)
    ok2 = np.abs(xi2 - np.diag([1.0, 0.0])).max() < 1e-5
    h = generators.trig_series(gs, 16)
    g = fields.MetricField(gs, s.values + 0.2 * h.values)
    Q, _ = energy.build_q_eps(g, s, 0.2)
    ok3 = np.abs(np.swapaxes(Q, -1, -2) @ s.values @ Q - g.values).max() < 1e-10
    return bool(ok1 and ok2 and ok3), "three cases"


# -- optimize ----------------------------------------------------------------

@check("minimize_limit: range case and h = 0")
def _():
    gs = _sphere(24)
    s = fields.ambient_metric(gs)
    h = generators.deformation_range(gs, 17)
    r = optimize.minimize_limit(h, s)
    r0 = optimize.minimize_limit(fields.TwoTensorField.zeros(gs), s)
    hh = fields.l2_inner(h, h, s)
    ok = r.e0_min <= 1e-8 * hh and np.all(r0.u_star.values == 0) and r0.e0_min == 0
    return ok, f"E0 / |h|^2 = {r.e0_min / hh:.2e}"


@check("project_parallel: range, idempotence, cross-path agreement")
def _():
    gs = _sphere(24)
    s = fields.ambient_metric(gs)
    hr = generators.deformation_range(gs, 18)
    pr = optimize.project_parallel(hr, s)
    e1 = fields.l2_norm(pr.h_perp, s) / fields.l2_norm(hr, s)
    h = generators.trig_series(gs, 19)
    p = optimize.project_parallel(h, s)
    again = optimize.project_parallel(p.h_perp, s)
    e2 = fields.l2_norm(again.h_par, s) / fields.l2_norm(h, s)
    gap = optimize.relative_gap(p.e0_min(s), optimize.minimize_limit(h, s).e0_min)
    orth = optimize.l2_orthogonality(p, h, s)
    ok = e1 <= 1e-6 and e2 <= 1e-6 and gap <= 1e-6 and orth <= 1e-8
    return ok, f"range {e1:.1e}, idempotence {e2:.1e}, gap {gap:.1e}, orth {orth:.1e}"


@check("descent: compatible case reaches zero, trace monotone")
def _():
    gs = _sphere(12)
    s = fields.ambient_metric(gs)
    u = generators.seeded_vector_field(gs, 20, 0.3)
    f0 = rigidity.recovery_sequence(u, np.eye(3), 0.05)
    inp = energy.NonlinearEnergyInput(f0, s, s, 1.0)
    res = optimize.minimize_nonlinear(f0, inp, optimize.DescentOptions(max_iters=400, step_init=1e-2, grad_tol=1e-7))
    trace = [row[1] for row in res.trace]
    mono = all(b <= a for a, b in zip(trace, trace[1:]))
    return mono and res.energy <= 1e-10, f"final energy {res.energy:.2e} ({res.status})"


# -- rigidity-displacement ---------------------------------------------------

@check("best_isometry: exact rotation and equivariance")
def _():
    gs = _sphere()
    R0 = Rotation.random(random_state=21).as_matrix()
    fit = rigidity.best_isometry(fields.ConfigurationField.inclusion(gs).rotated(R0))
    f = rigidity.recovery_sequence(generators.seeded_vector_field(gs, 22), np.eye(3), 0.2)
    R1 = Rotation.random(random_state=23).as_matrix()
    a = rigidity.best_isometry(f).rotation
    b = rigidity.best_isometry(f.rotated(R1)).rotation
    ok = np.abs(fit.rotation - R0).max() < 1e-12 and fit.w12_residual < 1e-10 and np.abs(b - R1 @ a).max() < 1e-10
    return bool(ok), f"rotation error {np.abs(fit.rotation - R0).max():.1e}"


@check("recovery / extraction / transported gradient trivial cases")
def _():
    gs = _sphere()
    Psi = Rotation.random(random_state=24).as_matrix()
    zero = fields.VectorField.zeros(gs)
    f = rigidity.recovery_sequence(zero, Psi, 0.1)
    f0 = rigidity.recovery_sequence(generators.seeded_vector_field(gs, 25), Psi, 0.0)
    base = gs.points @ Psi.T
    ok = np.abs(f.values - base).max() < 1e-15 and np.abs(f0.values - base).max() < 1e-15
    ok &= np.abs(rigidity.extract_displacement(f, Psi, 0.1).values).max() < 1e-14
    ok &= np.abs(rigidity.transported_gradient(f, Psi, 0.1)).max() < 1e-11
    u = generators.seeded_vector_field(gs, 26)
    back = rigidity.extract_displacement(rigidity.recovery_sequence(u, Psi, 0.1), Psi, 0.1)
    err = np.abs(back.values - u.values).max()
    return bool(ok and err < 1e-12), f"inverse error {err:.1e}"


@check("rigidity trial with zero amplitude reports ratio 0")
def _():
    fit = rigidity.rigidity_trial(27, 0.0, _sphere())
    return fit.ratio == 0.0, f"ratio {fit.ratio}"


# -- lab ---------------------------------------------------------------------

@check("config round trip")
def _():
    cfg = ExperimentConfig()
    return parse_config(serialize_config(cfg)) == cfg, "default config"


CORRUPTIONS = {
    "sqrt_spd": (geometry, "sqrt_spd", lambda orig: (lambda M: 1.001 * orig(M))),
}


def run_selftest(out=None, corrupt=None):
    """Run every check; print one line each and a summary.  Returns 0 iff all pass.

    ``corrupt`` names a kernel in :data:`CORRUPTIONS` to sabotage for the
    duration of the run (harness sanity hook).
    """
    out = out or sys.stdout
    patch = contextlib.nullcontext()
    if corrupt is not None:
        module, attr, wrap = CORRUPTIONS[corrupt]
        patch = mock.patch.object(module, attr, wrap(getattr(module, attr)))
    failures = []
    with patch:
        for name, fn in CHECKS:
            try:
                passed, detail = fn()
                passed = bool(passed)
            except Exception as exc:  # a crashing check is a failing check
                passed, detail = False, f"{type(exc).__name__}: {exc}"
            out.write(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}\n")
            if not passed:
                failures.append(name)
    out.write(f"{len(CHECKS) - len(failures)}/{len(CHECKS)} checks passed\n")
    for name in failures:
        out.write(f"failed: {name}\n")
    return 0 if not failures else 1

"""Config-driven experiments.  Every runner returns a :class:`Report`."""
import numpy as np

from ..curvature import curvature_variation, neg2_sobolev_norm
from ..energy import LimitEnergyInput, NonlinearEnergyInput, limit_energy, nonlinear_energy
from ..exceptions import DomainError, NumericalError
from ..fields import ConfigurationField, MetricField, VectorField, ambient_metric, l2_inner, vector_norm, volume
from ..generators import make_h, trig_series
from ..optimize import (
    l2_orthogonality,
    minimize_limit,
    minimize_nonlinear,
    project_parallel,
    pythagoras_defect,
    relative_gap,
)
from ..rigidity import best_isometry, extract_displacement, recovery_sequence, rigidity_trial
from .report import Report, Table


def _grid_meta(grid):
    return {
        "chart": grid.chart,
        "n_u": grid.n_u,
        "n_v": grid.n_v,
        "u_range": list(grid.u_range),
        "v_range": list(grid.v_range),
        "order": grid.order,
    }


def build_h(cfg, grid):
    spec = cfg.h_spec
    return make_h(grid, spec.name, spec.seed, **spec.params)


def _identity(grid):
    return np.eye(grid.ambient_dim)


def run_gamma_sweep(cfg):
    """Energies along recovery sequences (or descent minimisers) for each eps.

    Rows: ``eps, E_eps, E0_min, E0_u, gap, displacement_l2_err, status``
    where ``gap = E_eps - E0_u`` and ``E0_u`` is the limit energy of the
    displacement actually used (``u*`` or zero).
    """
    grid = cfg.build_grid()
    s = ambient_metric(grid)
    h = build_h(cfg, grid)
    proj = project_parallel(h, s, cfg.solver_tol)
    e0_proj = proj.e0_min(s)
    opt = minimize_limit(h, s, cfg.solver_tol)
    u = proj.u_star if cfg.displacement == "minimizer" else VectorField.zeros(grid)
    e0_u = limit_energy(LimitEnergyInput(u, h, s))
    report = Report("gamma", meta={
        "grid": _grid_meta(grid),
        "h_spec": cfg.to_dict()["h_spec"],
        "mode": cfg.mode,
        "displacement": cfg.displacement,
        "volume": volume(s),
        "E0_min_projector": e0_proj,
        "E0_min_optimizer": opt.e0_min,
        "cross_path_gap": relative_gap(e0_proj, opt.e0_min),
        "cg_iterations": opt.iterations,
    })
    table = Table(("eps", "E_eps", "E0_min", "E0_u", "gap", "displacement_l2_err", "status"))
    for eps in cfg.eps_list:
        try:
            g_eps = MetricField(grid, s.values + eps * h.values)
            f = recovery_sequence(u, _identity(grid), eps)
            inp = NonlinearEnergyInput(f, g_eps, s, eps)
            status = "recovery"
            if cfg.mode == "minimize":
                res = minimize_nonlinear(f, inp, cfg.optimizer)
                f = res.f_star
                status = res.status
                trace = Table(("iter", "energy", "grad_norm", "step"))
                for row in res.trace:
                    trace.add(*row)
                report.tables[f"trace_eps{eps:g}"] = trace
                psi = best_isometry(f).rotation
            else:
                psi = _identity(grid)
            e_eps = nonlinear_energy(inp.with_f(f))
            disp = extract_displacement(f, psi, eps)
            err = vector_norm(disp - u, s)
            table.add(eps, e_eps, e0_proj, e0_u, e_eps - e0_u, err, status)
        except (DomainError, NumericalError) as exc:
            table.add(eps, None, e0_proj, e0_u, None, None, "error")
            report.errors.append(f"eps={eps:g}: {exc}")
    report.tables["rows"] = table
    return report


def run_projection(cfg):
    grid = cfg.build_grid()
    s = ambient_metric(grid)
    h = build_h(cfg, grid)
    proj = project_parallel(h, s, cfg.solver_tol)
    opt = minimize_limit(h, s, cfg.solver_tol)
    hh = l2_inner(h, h, s)
    report = Report("project", meta={
        "grid": _grid_meta(grid),
        "h_spec": cfg.to_dict()["h_spec"],
        "h_norm2": hh,
        "h_par_norm2": l2_inner(proj.h_par, proj.h_par, s),
        "h_perp_norm2": l2_inner(proj.h_perp, proj.h_perp, s),
        "E0_min_projector": proj.e0_min(s),
        "E0_min_optimizer": opt.e0_min,
        "cross_path_gap": relative_gap(proj.e0_min(s), opt.e0_min),
        "orthogonality": l2_orthogonality(proj, h, s),
        "pythagoras_defect": pythagoras_defect(proj, h, s),
        "killing_components": [float(c) for c in proj.killing_components],
        "cg_iterations": opt.iterations,
        "cg_residual": opt.residual,
    })
    return report, proj


def run_rigidity(cfg):
    """Seeded trials for every amplitude; trial seeds are ``h_spec.seed + k``."""
    grid = cfg.build_grid()
    table = Table(("seed", "amplitude", "grid", "l2_residual", "w12_residual", "energy_norm", "ratio"))
    summary = {}
    base = cfg.h_spec.seed
    for amp in cfg.rigidity.amplitudes:
        ratios = []
        for k in range(cfg.rigidity.trials):
            fit = rigidity_trial(base + k, amp, grid)
            table.add(base + k, amp, f"{grid.n_u}x{grid.n_v}", fit.l2_residual, fit.w12_residual,
                      fit.energy_norm, fit.ratio)
            ratios.append(fit.ratio)
        med = float(np.median(ratios))
        summary[f"{amp:g}"] = {"median": med, "max": max(ratios),
                               "max_over_median": max(ratios) / med if med > 0 else 0.0}
    medians = [v["median"] for v in summary.values() if v["median"] > 0]
    meta = {
        "grid": _grid_meta(grid),
        "per_amplitude": summary,
        "amplitude_spread": max(medians) / min(medians) if medians else 0.0,
    }
    return Report("rigidity", meta=meta, tables={"trials": table})


def curvature_family(cfg, grid):
    """Seeded trig-series family; member ``k`` uses ``1 + k % max_modes`` modes."""
    fam = cfg.family
    return [trig_series(grid, cfg.h_spec.seed + k, fam.amplitude, 1 + k % fam.max_modes) for k in range(fam.size)]


def energy_curvature_sample(h, s, tol=1e-12):
    """``(m_projector, m_optimizer, c, c_natural)`` for one member.

    ``c = |Rdot(h_perp)|^2_{W^{-2,2}}`` with the boundary-vanishing dual norm;
    ``c_natural`` uses the natural boundary treatment and is reported for
    comparison.
    """
    proj = project_parallel(h, s, tol)
    opt = minimize_limit(h, s, tol)
    rdot = curvature_variation(proj.h_perp, s)
    c = neg2_sobolev_norm(rdot, s, boundary="dirichlet") ** 2
    c_nat = neg2_sobolev_norm(rdot, s, boundary="natural") ** 2
    return proj.e0_min(s), opt.e0_min, c, c_nat


def _spread(values):
    return max(values) / min(values) if min(values) > 0 else float("inf")


def run_energy_curvature(cfg):
    if cfg.ambient != "sphere":
        raise DomainError("the energy-curvature comparison needs a constant-curvature sphere patch")
    grid = cfg.build_grid()
    s = ambient_metric(grid)
    table = Table(("sample", "m_projector", "m_optimizer", "c", "ratio", "c_natural", "ratio_natural"))
    ratios, ratios_nat = [], []
    for k, h in enumerate(curvature_family(cfg, grid)):
        m, m_opt, c, c_nat = energy_curvature_sample(h, s, cfg.solver_tol)
        ratio = m / c if c > 0 else float("inf")
        ratio_nat = m / c_nat if c_nat > 0 else float("inf")
        ratios.append(ratio)
        ratios_nat.append(ratio_nat)
        table.add(k, m, m_opt, c, ratio, c_nat, ratio_nat)
    meta = {
        "grid": _grid_meta(grid),
        "spread": _spread(ratios),
        "ratio_min": min(ratios),
        "ratio_max": max(ratios),
        "spread_natural": _spread(ratios_nat),
    }
    return Report("curvature", meta=meta, tables={"samples": table})


def run_energy(cfg):
    """Both energies at the inclusion and at the recovery of ``u*`` for each eps."""
    grid = cfg.build_grid()
    s = ambient_metric(grid)
    h = build_h(cfg, grid)
    proj = project_parallel(h, s, cfg.solver_tol)
    iota = ConfigurationField.inclusion(grid)
    zero = VectorField.zeros(grid)
    e0_zero = limit_energy(LimitEnergyInput(zero, h, s))
    table = Table(("eps", "E_eps_inclusion", "E0_zero", "E_eps_recovery", "E0_min"))
    for eps in cfg.eps_list:
        g_eps = MetricField(grid, s.values + eps * h.values)
        inp = NonlinearEnergyInput(iota, g_eps, s, eps)
        f = recovery_sequence(proj.u_star, _identity(grid), eps)
        table.add(eps, nonlinear_energy(inp), e0_zero, nonlinear_energy(inp.with_f(f)), proj.e0_min(s))
    meta = {"grid": _grid_meta(grid), "h_spec": cfg.to_dict()["h_spec"], "volume": volume(s)}
    return Report("energy", meta=meta, tables={"rows": table})

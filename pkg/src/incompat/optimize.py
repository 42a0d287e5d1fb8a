"""Minimisation of both energies and the L2 projection onto the deformation range."""
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import geometry
from .energy import (
    LimitEnergyInput,
    limit_energy,
    nonlinear_energy,
    nonlinear_energy_gradient,
)
from .curvature import laplace_beltrami_matrices
from .exceptions import DomainError, NumericalError
from .fields import ConfigurationField, TwoTensorField, VectorField, deformation_system, l2_inner
from .generators import killing_fields
from .grid import SPHERE
from .linalg import Deflation, conjugate_gradient

MAX_HALVINGS = 60


@dataclass(frozen=True)
class DescentOptions:
    max_iters: int = 200
    step_init: float = 1e-3
    armijo_c: float = 1e-4
    grad_tol: float = 1e-8
    seed: int = 0
    metric: str = "h1"

    def __post_init__(self):
        if self.metric not in ("l2", "h1"):
            raise DomainError("metric must be 'l2' or 'h1'")
        if self.max_iters <= 0 or self.step_init <= 0 or self.grad_tol <= 0:
            raise DomainError("descent options must be positive")
        if not 0 < self.armijo_c < 1:
            raise DomainError("armijo_c must lie in (0, 1)")
        if self.seed < 0:
            raise DomainError("seed must be non-negative")


@dataclass
class DescentResult:
    f_star: ConfigurationField
    energy: float
    trace: list
    status: str

    def trace_rows(self):
        """Rows ``(iter, energy, grad_norm, step)``."""
        return list(self.trace)


def _sobolev_smoother(grid, s):
    M, K = laplace_beltrami_matrices(s)
    lu = spla.splu((M + K).tocsc())

    def smooth(values):
        rhs = (M @ values.reshape(grid.size, -1))
        return lu.solve(rhs).reshape(values.shape)

    return smooth


def minimize_nonlinear(f0, inp, opts=DescentOptions()):
    """Riemannian gradient descent with Armijo backtracking on ``E_eps``.

    Each accepted step moves every node along its geodesic,
    ``f <- exp_f(-t d)``, and doubles the trial step for the next
    iteration.  With ``opts.metric == "l2"`` the direction ``d`` is the L2
    gradient; with ``"h1"`` it is the gradient for the H1 inner product
    ``<a, b> + <grad a, grad b>`` (each ambient component smoothed by
    ``(M + K)^{-1} M``, then projected onto the tangent planes).  The H1
    direction removes the ``1/h^2`` stiffness of the L2 one.  The Armijo test
    uses the directional derivative ``<grad, d>_{L2}``; ``grad_tol`` applies to
    the L2 gradient norm in both cases.  ``status`` is ``"converged"``, ``"max_iters"`` or ``"stalled"``
    (no decrease after 60 halvings).  The trace lists the energy before each
    step, so it is nonincreasing.
    """
    inp = inp.with_f(f0)
    s = inp.s
    energy = nonlinear_energy(inp)
    step = opts.step_init
    grid = inp.f.grid
    smooth = _sobolev_smoother(grid, s) if opts.metric == "h1" else None
    trace = []
    status = "max_iters"
    for it in range(opts.max_iters):
        grad = nonlinear_energy_gradient(inp)
        gnorm = grad.norm(s)
        trace.append((it, energy, gnorm, step))
        if gnorm <= opts.grad_tol:
            status = "converged"
            break
        direction = grad.values
        if smooth is not None:
            direction = smooth(direction)
            if grid.chart == SPHERE:
                p = inp.f.values
                direction = direction - np.sum(direction * p, axis=-1, keepdims=True) * p
        slope = grid.integrate(np.sum(grad.values * direction, axis=-1) * s.volume_density)
        for _ in range(MAX_HALVINGS):
            trial = _move(inp.f, -step * direction)
            if trial is not None:
                e_trial = nonlinear_energy(inp.with_f(trial))
                if e_trial <= energy - opts.armijo_c * step * slope:
                    break
            step *= 0.5
        else:
            status = "stalled"
            break
        inp = inp.with_f(trial)
        energy = e_trial
        step *= 2.0
    else:
        grad = nonlinear_energy_gradient(inp)
        trace.append((opts.max_iters, energy, grad.norm(s), step))
    return DescentResult(inp.f, energy, trace, status)


def _move(f, v):
    try:
        vals = geometry.exp_map(f.values, v)
    except DomainError:
        return None
    if f.grid.chart == SPHERE:
        vals = vals / np.linalg.norm(vals, axis=-1, keepdims=True)
    return ConfigurationField(f.grid, vals)


# ---------------------------------------------------------------------------
# limit energy
# ---------------------------------------------------------------------------

@dataclass
class LimitResult:
    u_star: VectorField
    e0_min: float
    residual: float
    iterations: int
    history: list = field(default_factory=list)


def _killing_matrix(grid):
    return np.column_stack([k.flat() for k in killing_fields(grid)])


def minimize_limit(h, s, tol=1e-12):
    """Minimise ``E_0(u) = |L_u s - h|^2 / 4`` over displacements.

    Conjugate gradients on the normal equations ``D^T W D u = D^T W h``,
    deflated against ``M K`` where ``K`` spans the Killing generators, so the
    returned solution is L2-orthogonal to them (the minimal-norm
    representative modulo isometries).  A Jacobi preconditioner is applied
    inside the deflation.

    Raises
    ------
    NumericalError
        On CG stagnation, with the residual history attached.
    """
    grid = h.grid
    system = deformation_system(grid)
    A = system.normal
    b = system.D.T @ (system.W @ h.flat())
    P = Deflation(system.M @ _killing_matrix(grid))
    diag = A.diagonal()
    res = conjugate_gradient(lambda x: A @ x, b, tol=tol, maxiter=10 * b.size, deflate=P,
                             precond=lambda r: r / diag)
    u = VectorField.from_flat(grid, res.x)
    e0 = limit_energy(LimitEnergyInput(u, h, s))
    return LimitResult(u, e0, res.residual, res.iterations, res.history)


@dataclass
class ProjectionResult:
    u_star: VectorField
    h_par: TwoTensorField
    h_perp: TwoTensorField
    killing_components: np.ndarray

    def e0_min(self, s):
        return 0.25 * l2_inner(self.h_perp, self.h_perp, s)


def project_parallel(h, s, tol=1e-12):
    """L2-orthogonal decomposition ``h = h_par + h_perp`` with ``h_par = L_{u*} s``.

    Independent of :func:`minimize_limit`: the constrained least-squares
    problem is solved directly by sparse LU on its saddle-point system
    ``[[D^T W D, M K], [(M K)^T, 0]]``.  The Killing coefficients of the
    solution (its L2 projection onto the generators) are reported and removed.
    ``tol`` bounds the relative residual of the normal equations after one
    step of iterative refinement.
    """
    grid = h.grid
    system = deformation_system(grid)
    K = _killing_matrix(grid)
    Z = system.M @ K
    A = system.normal
    zero = sp.csr_matrix((K.shape[1], K.shape[1]))
    kkt = sp.bmat([[A, sp.csr_matrix(Z)], [sp.csr_matrix(Z.T), zero]], format="csc")
    b = system.D.T @ (system.W @ h.flat())
    rhs = np.concatenate([b, np.zeros(K.shape[1])])
    lu = spla.splu(kkt)
    x = lu.solve(rhs)
    x += lu.solve(rhs - kkt @ x)
    resid = np.linalg.norm(rhs - kkt @ x) / max(np.linalg.norm(rhs), 1e-300)
    if not resid <= max(tol, 1e-10):
        raise NumericalError(f"saddle-point solve residual {resid:.3e} exceeds tolerance", [resid])
    u = x[: b.size]
    gram = K.T @ (system.M @ K)
    coeffs = np.linalg.solve(gram, K.T @ (system.M @ u))
    u = u - K @ coeffs
    u_star = VectorField.from_flat(grid, u)
    h_par = TwoTensorField.from_flat(grid, system.D @ u)
    return ProjectionResult(u_star, h_par, h - h_par, coeffs)


def relative_gap(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def l2_orthogonality(result, h, s):
    """``|<h_par, h_perp>| / |h|^2``."""
    hh = l2_inner(h, h, s)
    return abs(l2_inner(result.h_par, result.h_perp, s)) / hh if hh > 0 else 0.0


def pythagoras_defect(result, h, s):
    hh = l2_inner(h, h, s)
    if hh == 0:
        return 0.0
    return abs(hh - l2_inner(result.h_par, result.h_par, s) - l2_inner(result.h_perp, result.h_perp, s)) / hh


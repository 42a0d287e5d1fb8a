"""Conjugate gradients for symmetric positive (semi)definite operators."""
from dataclasses import dataclass, field

import numpy as np

from .exceptions import NumericalError


@dataclass
class CGResult:
    x: np.ndarray
    iterations: int
    residual: float
    history: list = field(default_factory=list)


class Deflation:
    """Euclidean projector onto the orthogonal complement of ``span(Z)``."""

    def __init__(self, Z):
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        if Z.shape[0] < Z.shape[1]:
            Z = Z.T
        q, _ = np.linalg.qr(Z)
        self.basis = q

    def __call__(self, x):
        return x - self.basis @ (self.basis.T @ x)


def conjugate_gradient(apply_A, b, *, tol=1e-10, maxiter=None, x0=None, deflate=None, precond=None):
    """Solve ``A x = b`` for symmetric positive semidefinite ``A``.

    With ``deflate`` (a projector ``P``) the iteration runs on ``P A P`` and
    returns the solution lying in the range of ``P``; components of ``b``
    outside that range are discarded.  ``precond`` applies an SPD
    approximation of ``A^{-1}``.  Convergence is declared when
    ``|r| <= tol |b|`` for the projected residual.

    Raises
    ------
    NumericalError
        When the residual target is not met within ``maxiter`` iterations;
        the relative residual history is attached.
    """
    P = deflate if deflate is not None else (lambda v: v)
    C = precond if precond is not None else (lambda v: v)
    b = P(np.asarray(b, dtype=float))
    n = b.size
    maxiter = 10 * n if maxiter is None else maxiter
    bnorm = np.linalg.norm(b)
    x = np.zeros(n) if x0 is None else P(np.array(x0, dtype=float))
    if bnorm == 0.0:
        return CGResult(np.zeros(n), 0, 0.0, [0.0])
    r = b - P(apply_A(x))
    z = P(C(r))
    d = z.copy()
    rz = r @ z
    history = [np.linalg.norm(r) / bnorm]
    for it in range(1, maxiter + 1):
        if history[-1] <= tol:
            return CGResult(x, it - 1, history[-1], history)
        Ad = P(apply_A(d))
        dAd = d @ Ad
        if dAd <= 0.0:
            raise NumericalError("conjugate gradient broke down: operator is not positive on the search space", history)
        alpha = rz / dAd
        x += alpha * d
        r -= alpha * Ad
        z = P(C(r))
        rz_new = r @ z
        d = z + (rz_new / rz) * d
        rz = rz_new
        history.append(np.linalg.norm(r) / bnorm)
    if history[-1] <= tol:
        return CGResult(x, maxiter, history[-1], history)
    raise NumericalError(
        f"conjugate gradient did not reach residual {tol:.1e} in {maxiter} iterations "
        f"(last {history[-1]:.3e})",
        history,
    )

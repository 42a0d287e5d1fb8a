"""Shared numeric helpers for the test suite."""
import numpy as np

ACCEPTANCE_LINES = []


def observed_order(errors, ratio=2.0):
    """Least-squares slope of ``log(error)`` against ``log(1/h)`` for halving ``h``."""
    e = np.log(np.asarray(errors, dtype=float))
    x = np.arange(len(e)) * np.log(ratio)
    return -np.polyfit(x, e, 1)[0]


def random_rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return q


def random_tangent(rng, p, scale=1.0):
    v = rng.normal(size=p.shape) * scale
    return v - np.sum(v * p, axis=-1, keepdims=True) * p


def random_unit(rng, n):
    x = rng.normal(size=(n, 3))
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def record(criterion, passed, detail):
    """Print and keep one acceptance line; returns ``passed``."""
    line = f"criterion {criterion:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return passed

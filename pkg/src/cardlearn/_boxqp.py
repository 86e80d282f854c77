"""Box-constrained quadratic solves shared by the PPA and grounding updates.

Each row/sample minimizes x·Ax - 2 r·x over the unit box with one SPD matrix
A shared across many right-hand sides.  The closed-form solve followed by a
clamp is exact whenever the unconstrained minimizer lies inside the box; when
the clamp would increase the objective relative to the previous iterate,
coordinate descent from that iterate restores guaranteed monotone descent.
"""

from __future__ import annotations

import numpy as np

from . import numkit


def _objective_cols(a: np.ndarray, rhs: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.sum(x * (a @ x), axis=0) - 2.0 * np.sum(rhs * x, axis=0)


def _coordinate_descent(a: np.ndarray, rhs: np.ndarray, x: np.ndarray, max_sweeps: int = 50, tol: float = 1e-12) -> np.ndarray:
    d = a.shape[0]
    diag = np.diag(a)
    prev = _objective_cols(a, rhs, x)
    for _ in range(max_sweeps):
        for j in range(d):
            g = rhs[j] - a[j] @ x + diag[j] * x[j]
            x[j] = np.clip(g / diag[j], 0.0, 1.0)
        cur = _objective_cols(a, rhs, x)
        if np.all(prev - cur <= tol * (1.0 + np.abs(prev))):
            break
        prev = cur
    return x


def solve_box(a: np.ndarray, rhs: np.ndarray, start: np.ndarray) -> np.ndarray:
    """Columns x minimizing x·Ax - 2 rhs·x over [0,1]^d, never worse than start.

    ``rhs`` and ``start`` hold one column per row/sample; ``start`` must lie in
    the box.
    """
    low = numkit.cholesky(a)
    cand = np.clip(numkit.cholesky_solve(low, rhs), 0.0, 1.0)
    obj_start = _objective_cols(a, rhs, start)
    obj_cand = _objective_cols(a, rhs, cand)
    bad = np.flatnonzero(obj_cand > obj_start + 1e-12)
    if bad.size:
        fixed = _coordinate_descent(a, rhs[:, bad], start[:, bad].copy())
        cand[:, bad] = fixed
    return cand

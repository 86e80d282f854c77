"""Deterministic dense linear algebra and randomness primitives.

Matrices are plain float64 numpy arrays in row-major (C) order.  The random
generator is SplitMix64 (Steele, Lea & Flood, OOPSLA 2014) driven in counter
mode: draw ``i`` of a seed is ``mix64(seed + (i+1)*GOLDEN)``, so identical
seeds and call sequences produce bit-identical streams on every platform,
independent of numpy version or threading.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PIVOT_TOL = 1e-12

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U53 = float(1 << 53)


class NotSymmetric(ValueError):
    pass


class NotPositiveDefinite(ValueError):
    pass


def _mix64(x: np.ndarray) -> np.ndarray:
    x = (x ^ (x >> np.uint64(30))) * _MIX1
    x = (x ^ (x >> np.uint64(27))) * _MIX2
    return x ^ (x >> np.uint64(31))


@dataclass
class Rng:
    """Counter-mode SplitMix64 stream; ``position`` counts draws consumed."""

    seed: int
    position: int = field(default=0)

    def _raw(self, n: int) -> np.ndarray:
        idx = np.arange(self.position + 1, self.position + n + 1, dtype=np.uint64)
        self.position += n
        with np.errstate(over="ignore"):
            return _mix64(np.uint64(self.seed & 0xFFFFFFFFFFFFFFFF) + idx * _GOLDEN)

    def uniform(self, n: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        """n i.i.d. uniforms on [lo, hi)."""
        u = (self._raw(n) >> np.uint64(11)).astype(np.float64) / _U53
        return lo + (hi - lo) * u

    def integers(self, n: int, lo: int, hi: int) -> np.ndarray:
        """n i.i.d. integers on [lo, hi)."""
        if hi <= lo:
            raise ValueError("empty integer range")
        return lo + (self.uniform(n) * (hi - lo)).astype(np.int64)

    def shuffle(self, items: list) -> list:
        """Fisher-Yates shuffle; returns a new list."""
        out = list(items)
        for i in range(len(out) - 1, 0, -1):
            j = int(self.integers(1, 0, i + 1)[0])
            out[i], out[j] = out[j], out[i]
        return out

    def spawn(self, tag: int) -> "Rng":
        """Independent child stream keyed by an integer tag."""
        with np.errstate(over="ignore"):
            child = int(_mix64(np.uint64((self.seed ^ (tag * 0x9E3779B9 + 0x85EBCA6B)) & 0xFFFFFFFFFFFFFFFF)))
        return Rng(child)


def uniform_matrix(rng: Rng, rows: int, cols: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    """rows x cols matrix of i.i.d. uniforms on [lo, hi)."""
    if not lo < hi:
        raise ValueError("require lo < hi")
    return rng.uniform(rows * cols, lo, hi).reshape(rows, cols)


def cholesky(a: np.ndarray, pivot_tol: float = PIVOT_TOL) -> np.ndarray:
    """Lower-triangular L with L Lᵀ = a, checking symmetry and pivots."""
    a = np.asarray(a, dtype=np.float64)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix must be square")
    scale = 1.0 + float(np.max(np.abs(a))) if a.size else 1.0
    if float(np.max(np.abs(a - a.T))) > 1e-8 * scale:
        raise NotSymmetric("matrix is not symmetric")
    low = np.zeros_like(a)
    for j in range(n):
        d = a[j, j] - low[j, :j] @ low[j, :j]
        if not d > pivot_tol:
            raise NotPositiveDefinite(f"pivot {d:.3e} at column {j}")
        low[j, j] = np.sqrt(d)
        if j + 1 < n:
            low[j + 1 :, j] = (a[j + 1 :, j] - low[j + 1 :, :j] @ low[j, :j]) / low[j, j]
    return low


def cholesky_solve(low: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve (L Lᵀ) x = b given the Cholesky factor L."""
    b = np.asarray(b, dtype=np.float64)
    squeeze = b.ndim == 1
    y = np.array(b, dtype=np.float64, ndmin=2).T if squeeze else b.copy()
    n = low.shape[0]
    for j in range(n):
        y[j] -= low[j, :j] @ y[:j]
        y[j] /= low[j, j]
    for j in range(n - 1, -1, -1):
        y[j] -= low[j + 1 :, j] @ y[j + 1 :]
        y[j] /= low[j, j]
    return y[:, 0] if squeeze else y


def spd_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve a x = b for symmetric positive definite a via Cholesky."""
    return cholesky_solve(cholesky(a), b)


def rank(m: np.ndarray, tol: float = 1e-6) -> int:
    """Pivot count of Gaussian elimination with partial pivoting.

    A pivot counts when its magnitude exceeds tol * max|m|.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    m = np.array(m, dtype=np.float64)
    if m.size == 0:
        return 0
    norm = float(np.max(np.abs(m)))
    if norm == 0.0:
        return 0
    thresh = tol * norm
    rows, cols = m.shape
    r = 0
    for c in range(cols):
        if r == rows:
            break
        p = r + int(np.argmax(np.abs(m[r:, c])))
        if abs(m[p, c]) <= thresh:
            continue
        if p != r:
            m[[r, p]] = m[[p, r]]
        m[r + 1 :] -= np.outer(m[r + 1 :, c] / m[r, c], m[r])
        r += 1
    return r

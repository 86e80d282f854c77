"""Boolean quadratic subproblems and their difference-of-convex relaxation.

(P)  minimizes q(u) = ||Q u - q1||^2 + tau ||u - q2||^2 over Boolean u.
(Pt) relaxes u to the unit box and adds the concave penalty t (e·u - u·u),
which vanishes on vertices.  For t above the largest diagonal of
S = QᵀQ + tau I the two problems share their optimum, so the relaxation is
exact once the penalty weight has been annealed high enough.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import numkit


class TooLarge(ValueError):
    pass


class DomainViolation(ValueError):
    pass


@dataclass
class BooleanQuadratic:
    q_mat: np.ndarray
    q1: np.ndarray
    q2: np.ndarray
    tau: float

    def __post_init__(self):
        self.q_mat = np.asarray(self.q_mat, dtype=np.float64)
        self.q1 = np.asarray(self.q1, dtype=np.float64)
        self.q2 = np.asarray(self.q2, dtype=np.float64)
        if self.q_mat.shape != (len(self.q1), len(self.q2)):
            raise DomainViolation("Q must be len(q1) x len(q2)")
        if self.tau < 0:
            raise DomainViolation("tau must be non-negative")

    @property
    def n(self) -> int:
        return self.q_mat.shape[1]

    def s_matrix(self) -> np.ndarray:
        return self.q_mat.T @ self.q_mat + self.tau * np.eye(self.n)

    def s_vector(self) -> np.ndarray:
        return self.q_mat.T @ self.q1 + self.tau * self.q2

    def grad(self, u: np.ndarray) -> np.ndarray:
        """∇q(u) = 2 (S u - s)."""
        u = np.asarray(u, dtype=np.float64)
        return 2.0 * (self.s_matrix() @ u - self.s_vector())


@dataclass(frozen=True)
class AnnealSchedule:
    """Additive schedule for the DC penalty weight t."""

    t: float = 0.0
    step: float = 0.1
    eps: float = 1e-3
    t_cap: float = 10.0

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError("step must be positive")
        if self.t > self.t_cap:
            raise ValueError("t exceeds its cap")


def anneal(schedule: AnnealSchedule, violation: float) -> AnnealSchedule:
    """Bump t while the booleanness violation exceeds the tolerance."""
    if violation < 0:
        raise DomainViolation("violation must be non-negative")
    if violation > schedule.eps:
        return replace(schedule, t=min(schedule.t + schedule.step, schedule.t_cap))
    return schedule


def objective_p(prob: BooleanQuadratic, u: np.ndarray) -> float:
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (prob.n,):
        raise DomainViolation("dimension mismatch")
    if not np.all((u == 0.0) | (u == 1.0)):
        raise DomainViolation("u must be Boolean for (P)")
    r1 = prob.q_mat @ u - prob.q1
    r2 = u - prob.q2
    return float(r1 @ r1 + prob.tau * (r2 @ r2))


def objective_pt(prob: BooleanQuadratic, u: np.ndarray, t: float) -> float:
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (prob.n,):
        raise DomainViolation("dimension mismatch")
    if np.any(u < 0.0) or np.any(u > 1.0):
        raise DomainViolation("u must lie in the unit box for (P_t)")
    r1 = prob.q_mat @ u - prob.q1
    r2 = u - prob.q2
    return float(r1 @ r1 + prob.tau * (r2 @ r2) + t * (u.sum() - u @ u))


def exact_penalty_threshold(prob: BooleanQuadratic) -> float:
    """Largest diagonal entry of QᵀQ + tau I."""
    col_sq = (prob.q_mat * prob.q_mat).sum(axis=0)
    return float(np.max(col_sq) + prob.tau) if prob.n else 0.0


def brute_force_min(prob: BooleanQuadratic) -> tuple[np.ndarray, float]:
    """Global minimizer of (P) over all 2^n vertices; lexicographic tie-break."""
    n = prob.n
    if n > 24:
        raise TooLarge(f"n = {n} exceeds the 2^24 enumeration budget")
    s_mat = prob.s_matrix()
    s_vec = prob.s_vector()
    const = float(prob.q1 @ prob.q1 + prob.tau * (prob.q2 @ prob.q2))
    best_val = np.inf
    best_u = None
    chunk = 1 << min(n, 16)
    # bit j of the integer is coordinate j; ascending integers visit
    # lexicographically-by-reversed-tuple, so resolve ties on the tuple.
    for start in range(0, 1 << n, chunk):
        ints = np.arange(start, start + chunk, dtype=np.int64)
        block = ((ints[:, None] >> np.arange(n)) & 1).astype(np.float64)
        vals = ((block @ s_mat) * block).sum(axis=1) - 2.0 * (block @ s_vec) + const
        lo = float(vals.min())
        if lo < best_val - 1e-12:
            best_val = lo
            cand = block[np.flatnonzero(vals <= lo + 1e-12)]
            best_u = min(tuple(int(x) for x in row) for row in cand)
        elif lo <= best_val + 1e-12:
            cand = block[np.flatnonzero(vals <= best_val + 1e-12)]
            best_u = min([best_u] + [tuple(int(x) for x in row) for row in cand])
    u = np.array(best_u, dtype=np.float64)
    return u, objective_p(prob, u)


def stationarity_check(prob: BooleanQuadratic, t: float, u: np.ndarray, tol: float = 1e-8) -> bool:
    """Proposition-style test: [∇q(u)]_i (1 - 2 u_i) + t >= 0 for all i."""
    u = np.asarray(u, dtype=np.float64)
    if not np.all((u == 0.0) | (u == 1.0)):
        raise DomainViolation("stationarity test requires Boolean u")
    g = prob.grad(u)
    return bool(np.all(g * (1.0 - 2.0 * u) + t >= -tol))


def booleanness_violation(u: np.ndarray) -> float:
    """max_i min(|u_i|, |1 - u_i|); zero iff u is Boolean."""
    u = np.asarray(u, dtype=np.float64)
    if u.size == 0:
        return 0.0
    return float(np.max(np.minimum(np.abs(u), np.abs(1.0 - u))))


def default_schedule(prob: BooleanQuadratic, eps: float = 1e-3) -> AnnealSchedule:
    """Additive steps of 0.05 δ_max, capped at 10 δ_max, starting from t = 0."""
    dmax = max(exact_penalty_threshold(prob), 1e-12)
    return AnnealSchedule(t=0.0, step=0.05 * dmax, eps=eps, t_cap=10.0 * dmax)


def anneal_minimize(
    prob: BooleanQuadratic,
    schedule: AnnealSchedule | None = None,
    max_epochs: int = 400,
    seed: int = 0,
) -> tuple[np.ndarray, float, int]:
    """Annealed DC minimization of (P_t) over the box.

    Each epoch solves the convex linearized subproblem in closed form, clamps
    to the box, then bumps t while the iterate is not Boolean.  Returns the
    final iterate, final t, and epochs used.
    """
    if schedule is None:
        schedule = default_schedule(prob)
    s_mat = prob.s_matrix()
    s_vec = prob.s_vector()
    low = numkit.cholesky(s_mat)
    u = np.clip(numkit.cholesky_solve(low, s_vec), 0.0, 1.0)
    e = np.ones(prob.n)
    for epoch in range(1, max_epochs + 1):
        t = schedule.t
        u_new = np.clip(numkit.cholesky_solve(low, s_vec - 0.5 * t * e + t * u), 0.0, 1.0)
        moved = float(np.max(np.abs(u_new - u))) if prob.n else 0.0
        u = u_new
        viol = booleanness_violation(u)
        if viol <= schedule.eps and moved <= 1e-12:
            ub = (u > 0.5).astype(np.float64)
            if stationarity_check(prob, t, ub):
                return u, t, epoch
            # frozen at a non-stationary vertex: keep raising t
            schedule = replace(schedule, t=min(schedule.t + schedule.step, schedule.t_cap))
        else:
            schedule = anneal(schedule, viol)
    return u, schedule.t, max_epochs


def box_minimize_concave(prob: BooleanQuadratic, t: float, u0: np.ndarray) -> np.ndarray:
    """Coordinate descent on (P_t) when every coordinate is strictly concave.

    Requires t > δ_max so each 1-D restriction attains its minimum at an
    endpoint; converges to a vertex in finitely many sweeps.
    """
    if prob.n and t <= exact_penalty_threshold(prob):
        raise DomainViolation("coordinate concavity needs t above the largest diagonal of S")
    u = np.asarray(u0, dtype=np.float64).copy()
    for _ in range(8 * prob.n + 8):
        changed = False
        for i in range(prob.n):
            old = u[i]
            u[i] = 0.0
            v0 = objective_pt(prob, u, t)
            u[i] = 1.0
            v1 = objective_pt(prob, u, t)
            u[i] = 0.0 if v0 <= v1 else 1.0
            changed = changed or u[i] != old
        if not changed:
            break
    return u

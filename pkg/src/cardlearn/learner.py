"""Logical-constraint learning via proximal-point updates.

Each constraint row w_i minimizes ||D w - b_i||^2 plus a trust-region pull
toward its own random center, a linearized DC penalty pushing entries to
{0,1}, and a proximal term.  One shared Cholesky factorization serves every
row's normal equations.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import _boxqp, dcopt, grounding, numkit
from .constraints import RelaxedSystem, binarize_matrix
from .dcopt import AnnealSchedule
from .numkit import Rng


class ShapeMismatch(ValueError):
    pass


class NumericalFailure(RuntimeError):
    pass


@dataclass
class LearnerState:
    rs: RelaxedSystem
    gamma: float
    anneal: AnnealSchedule
    iteration: int = 0

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")


def init_state(
    rng: Rng,
    m: int,
    dim: int,
    b_init: float | np.ndarray,
    gamma: float = 0.001,
    lam: float = 0.1,
    b_mode: str = "fixed",
    anneal: AnnealSchedule | None = None,
) -> LearnerState:
    """Uniform random W whose draw doubles as the trust centers W0."""
    w0 = numkit.uniform_matrix(rng, m, dim)
    b = np.full(m, float(b_init)) if np.isscalar(b_init) else np.asarray(b_init, dtype=np.float64).copy()
    rs = RelaxedSystem(w0.copy(), b, w0, lam=lam, b_mode=b_mode)
    return LearnerState(rs, gamma, anneal or AnnealSchedule(t=0.0, step=1.0, eps=1e-3, t_cap=1e9))


def booleanness(w: np.ndarray) -> float:
    """max entry distance to {0,1}; zero iff W is Boolean."""
    return dcopt.booleanness_violation(w)


def eq2_objective(rs: RelaxedSystem, data: np.ndarray, t1: float = 0.0) -> float:
    """Constraint-learning objective: data fit + trust region + DC penalty."""
    resid = data @ rs.w.T - rs.b[None, :]
    fit = float(np.sum(resid * resid))
    trust = rs.lam * float(np.sum((rs.w - rs.w0) ** 2))
    dc = t1 * float(np.sum(rs.w - rs.w * rs.w))
    return fit + trust + dc


def ppa_step(state: LearnerState, data: np.ndarray) -> LearnerState:
    """One proximal-point update of every constraint row on batch ``data``."""
    rs = state.rs
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] != rs.dim or data.shape[0] < 1:
        raise ShapeMismatch(f"batch shape {data.shape} does not match constraint dim {rs.dim}")
    t1 = state.anneal.t
    inv_gamma = 1.0 / state.gamma
    lhs = data.T @ data + (rs.lam + inv_gamma) * np.eye(rs.dim)

    if rs.b_mode == "learned":
        b_new = (np.mean(data @ rs.w.T, axis=0) + inv_gamma * rs.b) / (1.0 + inv_gamma)
    else:
        b_new = rs.b.copy()

    rhs = (
        np.outer(data.sum(axis=0), rs.b)
        + rs.lam * rs.w0.T
        + (inv_gamma + t1) * rs.w.T
        - 0.5 * t1
    )
    try:
        w_new = _boxqp.solve_box(lhs, rhs, rs.w.T.copy()).T
    except numkit.NotPositiveDefinite as exc:
        raise NumericalFailure(str(exc)) from exc
    rs_new = RelaxedSystem(w_new, b_new, rs.w0, lam=rs.lam, t1=t1, b_mode=rs.b_mode)
    return replace(state, rs=rs_new, iteration=state.iteration + 1)


def anneal_t1(state: LearnerState, data: np.ndarray, step_frac: float = 0.05, cap_frac: float = 10.0) -> LearnerState:
    """Bump t1 while W is not Boolean; steps scale with the data diagonal."""
    delta = float(np.max((data * data).sum(axis=0))) + state.rs.lam if data.size else 1.0
    delta = max(delta, 1e-9)
    sched = AnnealSchedule(
        t=state.anneal.t, step=step_frac * delta, eps=state.anneal.eps, t_cap=cap_frac * delta
    )
    sched = dcopt.anneal(sched, booleanness(state.rs.w))
    return replace(state, anneal=sched)


@dataclass
class FitResult:
    state: LearnerState
    sbar: np.ndarray | None
    weights: np.ndarray | None  # binarized rows, None when W stayed fractional
    violation: float
    epochs: int
    converged: bool


def fit_fixed_b(
    anchor: np.ndarray,
    free_mask: np.ndarray,
    b: float,
    m: int,
    rng: Rng,
    *,
    lam: float = 0.1,
    gamma: float = 0.001,
    alpha: float = 0.5,
    epochs: int = 400,
    eps_bool: float = 1e-3,
    obj_tol: float = 1e-6,
    patience: int = 5,
) -> FitResult:
    """Perception-free constraint learning at a fixed bias b.

    ``anchor`` holds observed coordinates; ``free_mask`` marks latent ones,
    ground-corrected between PPA updates with the previous grounding as the
    proximal anchor.
    """
    anchor = np.asarray(anchor, dtype=np.float64)
    n, dim = anchor.shape
    free_mask = np.asarray(free_mask, dtype=bool)
    state = init_state(rng, m, dim, b, gamma=gamma, lam=lam,
                       anneal=AnnealSchedule(t=0.0, step=1.0, eps=eps_bool, t_cap=1e12))
    has_free = bool(free_mask.any())
    sbar0 = anchor.copy()
    if has_free:
        sbar0[:, free_mask] = rng.uniform(n * int(free_mask.sum())).reshape(n, -1)
    gb = grounding.GroundingBatch(
        sbar0, anchor.copy(), free_mask, alpha=alpha,
        anneal=AnnealSchedule(t=0.0, step=1.0, eps=eps_bool, t_cap=1e12),
    )
    prev_obj = None
    calm = 0
    for epoch in range(1, epochs + 1):
        data = gb.sbar
        state = ppa_step(state, data)
        if has_free:
            gb = grounding.ground_step(replace(gb, anchor=gb.sbar.copy()), state.rs.w, state.rs.b)
            gb = grounding.anneal_t2(gb, state.rs.w)
        state = anneal_t1(state, gb.sbar)
        w_viol = booleanness(state.rs.w)
        z_viol = dcopt.booleanness_violation(gb.sbar[:, free_mask]) if has_free else 0.0
        obj = eq2_objective(state.rs, gb.sbar)
        if prev_obj is not None and abs(prev_obj - obj) <= obj_tol * (1.0 + abs(prev_obj)):
            calm += 1
        else:
            calm = 0
        prev_obj = obj
        if w_viol <= eps_bool and z_viol <= eps_bool and calm >= patience:
            weights = binarize_matrix(state.rs.w, eps_bool)
            return FitResult(state, gb.sbar, weights, max(w_viol, z_viol), epoch, True)
    w_viol = booleanness(state.rs.w)
    z_viol = dcopt.booleanness_violation(gb.sbar[:, free_mask]) if has_free else 0.0
    weights = None
    if w_viol <= eps_bool:
        weights = binarize_matrix(state.rs.w, eps_bool)
    return FitResult(state, gb.sbar, weights, max(w_viol, z_viol), epochs, False)


@dataclass
class SweepResult:
    per_b: dict[int, np.ndarray]
    union: list[tuple[tuple[int, ...], int]]  # (weight indices, b that found them)


def b_sweep(
    anchor: np.ndarray,
    free_mask: np.ndarray,
    b_values: list[int],
    m: int,
    seed: int,
    **hyper,
) -> SweepResult:
    """Learn at each fixed b and pool the distinct binarized rows found."""
    per_b: dict[int, np.ndarray] = {}
    union: list[tuple[tuple[int, ...], int]] = []
    seen: set[tuple[int, ...]] = set()
    for b in b_values:
        res = fit_fixed_b(anchor, free_mask, float(b), m, Rng(seed).spawn(1000 + b), **hyper)
        if res.weights is None:
            per_b[b] = np.zeros((0, anchor.shape[1]), dtype=np.int8)
            continue
        rows = np.unique(res.weights, axis=0)
        rows = rows[rows.sum(axis=1) > 0]
        per_b[b] = rows
        for row in rows:
            key = tuple(int(i) for i in np.flatnonzero(row))
            if key and key not in seen:
                seen.add(key)
                union.append((key, b))
    return SweepResult(per_b, union)

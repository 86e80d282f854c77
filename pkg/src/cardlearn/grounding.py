"""Symbol grounding: closed-form correction of relaxed symbol assignments.

Each sample row reconciles the network prediction (or observed bits) with the
current constraints by solving a small regularized least-squares system over
its free coordinates, then clamping to the unit box.  A DC penalty annealed
through t2 drives the grounding Boolean.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import _boxqp, dcopt, numkit
from .constraints import VariableSpace, binarize_matrix
from .dcopt import AnnealSchedule


class ShapeMismatch(ValueError):
    pass


class SingularSystem(RuntimeError):
    pass


@dataclass
class GroundingBatch:
    """Relaxed per-sample assignments S̄ with anchors and a free-coordinate mask.

    Clamped coordinates (free_mask False) always equal their anchor; free ones
    are corrected toward the constraints.
    """

    sbar: np.ndarray
    anchor: np.ndarray
    free_mask: np.ndarray
    alpha: float = 0.5
    anneal: AnnealSchedule = AnnealSchedule(t=0.0, step=1.0, eps=1e-3, t_cap=1e12)

    def __post_init__(self):
        self.sbar = np.asarray(self.sbar, dtype=np.float64)
        self.anchor = np.asarray(self.anchor, dtype=np.float64)
        self.free_mask = np.asarray(self.free_mask, dtype=bool)
        if self.sbar.shape != self.anchor.shape or self.free_mask.shape != (self.sbar.shape[1],):
            raise ShapeMismatch("S̄, anchor, and free mask disagree on shape")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        clamped = ~self.free_mask
        self.sbar[:, clamped] = self.anchor[:, clamped]


def check_auxiliary_budget(space: VariableSpace) -> None:
    """Perception-free auxiliaries may not outnumber the non-latent variables."""
    if space.latent_bits > space.observed_input_bits + space.output_bits:
        raise ValueError(
            f"{space.latent_bits} auxiliary variables exceed the "
            f"{space.observed_input_bits + space.output_bits} logical variables"
        )


def ground_step(gb: GroundingBatch, w: np.ndarray, b: np.ndarray) -> GroundingBatch:
    """One closed-form correction of every row's free coordinates."""
    w = np.asarray(w, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n, dim = gb.sbar.shape
    if w.ndim != 2 or w.shape[1] != dim or b.shape != (w.shape[0],):
        raise ShapeMismatch(f"W {w.shape} / b {b.shape} incompatible with dim {dim}")
    free = np.flatnonzero(gb.free_mask)
    if free.size == 0:
        return replace(gb, sbar=gb.anchor.copy())
    t2 = gb.anneal.t
    gram = w.T @ w + gb.alpha * np.eye(dim)
    rhs = (w.T @ b)[:, None] + gb.alpha * gb.anchor.T + t2 * gb.sbar.T - 0.5 * t2
    clamped = np.flatnonzero(~gb.free_mask)
    rhs_free = rhs[free]
    if clamped.size:
        rhs_free = rhs_free - gram[np.ix_(free, clamped)] @ gb.anchor.T[clamped]
    try:
        solved = _boxqp.solve_box(gram[np.ix_(free, free)], rhs_free, gb.sbar.T[free].copy()).T
    except numkit.NotPositiveDefinite as exc:
        raise SingularSystem("WᵀW + alpha I is singular on the free block") from exc
    sbar = gb.anchor.copy()
    sbar[:, free] = solved
    return replace(gb, sbar=sbar)


def anneal_t2(gb: GroundingBatch, w: np.ndarray, step_frac: float = 0.05, cap_frac: float = 10.0) -> GroundingBatch:
    """Bump t2 while the free block is not Boolean; steps scale with WᵀW."""
    free = gb.free_mask
    if not free.any():
        return gb
    delta = float(np.max((w * w).sum(axis=0))) + gb.alpha if w.size else gb.alpha
    delta = max(delta, 1e-9)
    sched = AnnealSchedule(t=gb.anneal.t, step=step_frac * delta, eps=gb.anneal.eps, t_cap=cap_frac * delta)
    sched = dcopt.anneal(sched, dcopt.booleanness_violation(gb.sbar[:, free]))
    return replace(gb, anneal=sched)


def binarize_grounding(gb: GroundingBatch, eps: float = 1e-3) -> np.ndarray:
    """Round S̄ to a Boolean matrix; raises NotBoolean on distant entries."""
    return binarize_matrix(gb.sbar, eps)


def make_targets(gb: GroundingBatch, space: VariableSpace) -> np.ndarray:
    """Per-sample latent targets for perception training (the z̄ slice)."""
    return gb.sbar[:, space.latent_slice].copy()


def eq5_objective(gb: GroundingBatch, w: np.ndarray, b: np.ndarray, t2: float = 0.0) -> np.ndarray:
    """Per-row grounding objective: fit + anchor pull + DC penalty."""
    resid = gb.sbar @ w.T - b[None, :]
    fit = np.sum(resid * resid, axis=1)
    pull = gb.alpha * np.sum((gb.sbar - gb.anchor) ** 2, axis=1)
    dc = t2 * np.sum(gb.sbar - gb.sbar * gb.sbar, axis=1)
    return fit + pull + dc

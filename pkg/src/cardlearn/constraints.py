"""Constraint data model: variable spaces, cardinality constraints, bounds, export.

A cardinality constraint bounds how many of a selected subset of Boolean
variables are true: w·s ∈ [lo, hi] with w a 0/1 weight vector.  A system is a
conjunction of such constraints over one variable space.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .numkit import Rng

JSON_VERSION = 1


class NotBoolean(ValueError):
    """A relaxed entry is too far from {0,1} to round."""

    def __init__(self, index, value):
        super().__init__(f"entry {index} = {value:.6f} is not within tolerance of {{0,1}}")
        self.index = index
        self.value = value


class SpaceMismatch(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class VariableSpace:
    """Layout of the Boolean variable vector: observed inputs, latents, outputs.

    ``groups`` optionally marks disjoint one-hot index groups (e.g. the digit
    bits of one Sudoku cell).  Index order is observed, then latent, then
    output.
    """

    observed_input_bits: int
    latent_bits: int
    output_bits: int
    groups: tuple[tuple[int, ...], ...] | None = None
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        if min(self.observed_input_bits, self.latent_bits, self.output_bits) < 0:
            raise ValueError("segment sizes must be non-negative")
        if self.groups is not None:
            seen: set[int] = set()
            for g in self.groups:
                for i in g:
                    if not 0 <= i < self.dim or i in seen:
                        raise ValueError("groups must be disjoint subsets of the space")
                    seen.add(i)
        if self.names is not None and len(self.names) != self.dim:
            raise ValueError("names must cover every variable")

    @property
    def dim(self) -> int:
        return self.observed_input_bits + self.latent_bits + self.output_bits

    @property
    def observed_slice(self) -> slice:
        return slice(0, self.observed_input_bits)

    @property
    def latent_slice(self) -> slice:
        a = self.observed_input_bits
        return slice(a, a + self.latent_bits)

    @property
    def output_slice(self) -> slice:
        return slice(self.observed_input_bits + self.latent_bits, self.dim)


@dataclass(frozen=True)
class CardinalityConstraint:
    """w·s ∈ [lo, hi] with Boolean weights w (stored as a sorted index tuple)."""

    indices: tuple[int, ...]
    lo: int
    hi: int

    def __post_init__(self):
        if tuple(sorted(set(self.indices))) != self.indices:
            object.__setattr__(self, "indices", tuple(sorted(set(self.indices))))
        if not 0 <= self.lo <= self.hi <= len(self.indices):
            raise ValueError(f"bounds [{self.lo},{self.hi}] invalid for {len(self.indices)} weights")

    @classmethod
    def from_weights(cls, weights: Sequence[int], lo: int, hi: int) -> "CardinalityConstraint":
        idx = tuple(int(i) for i in np.flatnonzero(np.asarray(weights)))
        return cls(idx, int(lo), int(hi))

    def weights(self, dim: int) -> np.ndarray:
        w = np.zeros(dim, dtype=np.int8)
        w[list(self.indices)] = 1
        return w

    def is_vacuous(self) -> bool:
        return self.lo == 0 and self.hi == len(self.indices)


@dataclass
class CardinalitySystem:
    """A conjunction of cardinality constraints over one variable space."""

    space: VariableSpace
    constraints: list[CardinalityConstraint] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.space.dim

    def weight_matrix(self) -> np.ndarray:
        if not self.constraints:
            return np.zeros((0, self.dim), dtype=np.int8)
        return np.stack([c.weights(self.dim) for c in self.constraints])

    def key_set(self) -> frozenset:
        return frozenset((c.indices, c.lo, c.hi) for c in self.constraints)


@dataclass
class RelaxedSystem:
    """Training-time relaxation: W ∈ [0,1]^{m×d}, bias b, trust centers W0."""

    w: np.ndarray
    b: np.ndarray
    w0: np.ndarray
    lam: float = 0.1
    t1: float = 0.0
    b_mode: str = "fixed"  # "fixed" or "learned"

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        self.w0 = np.asarray(self.w0, dtype=np.float64)
        if self.w.shape != self.w0.shape:
            raise DimensionMismatch("W and W0 must share a shape")
        if self.b.shape != (self.w.shape[0],):
            raise DimensionMismatch("b must have one entry per constraint row")
        if self.b_mode not in ("fixed", "learned"):
            raise ValueError("b_mode must be 'fixed' or 'learned'")

    @property
    def m(self) -> int:
        return self.w.shape[0]

    @property
    def dim(self) -> int:
        return self.w.shape[1]


def binarize_matrix(w: np.ndarray, eps: float = 1e-3) -> np.ndarray:
    """Round entries to {0,1}; raise NotBoolean if any entry is farther than eps."""
    w = np.asarray(w, dtype=np.float64)
    dist = np.minimum(np.abs(w), np.abs(1.0 - w))
    bad = np.argwhere(dist > eps)
    if bad.size:
        idx = tuple(int(i) for i in bad[0])
        raise NotBoolean(idx, float(w[idx]))
    return (w > 0.5).astype(np.int8)


def binarize_system(rs: RelaxedSystem, eps: float = 1e-3) -> tuple[np.ndarray, np.ndarray]:
    """Rounded weight rows plus the provisional (real) bias per row.

    Bounds are estimated separately; the bias is kept for diagnostics only.
    """
    return binarize_matrix(rs.w, eps), rs.b.copy()


def deduplicate(sys: CardinalitySystem) -> CardinalitySystem:
    """Drop exact duplicates, zero-weight rows, and vacuous full-range rows."""
    seen = set()
    kept = []
    for c in sys.constraints:
        if not c.indices or c.is_vacuous():
            continue
        key = (c.indices, c.lo, c.hi)
        if key in seen:
            continue
        seen.add(key)
        kept.append(c)
    return CardinalitySystem(sys.space, kept)


def estimate_bounds(weights: Sequence[int], samples: np.ndarray, coverage: float = 1.0) -> tuple[int, int]:
    """Minimum-width integer interval covering at least ``coverage`` of the sums.

    Ties break toward the smaller lower end.
    """
    samples = np.asarray(samples)
    if samples.size == 0:
        raise ValueError("samples must be nonempty")
    if not 0.0 < coverage <= 1.0:
        raise ValueError("coverage must be in (0, 1]")
    w = np.asarray(weights, dtype=np.float64)
    sums = np.sort(np.rint(samples @ w).astype(np.int64))
    n = len(sums)
    need = max(1, math.ceil(coverage * n - 1e-9))
    best = (sums[need - 1] - sums[0], sums[0])
    for i in range(1, n - need + 1):
        width = sums[i + need - 1] - sums[i]
        if width < best[0]:
            best = (width, sums[i])
    return int(best[1]), int(best[1] + best[0])


def evaluate(sys: CardinalitySystem, s: Sequence[int]) -> tuple[bool, np.ndarray]:
    """(satisfied, per-constraint sums) of one Boolean assignment."""
    s = np.asarray(s)
    if s.shape != (sys.dim,):
        raise DimensionMismatch(f"assignment has length {s.shape}, space dim {sys.dim}")
    if not sys.constraints:
        return True, np.zeros(0, dtype=np.int64)
    sums = np.array([int(s[list(c.indices)].sum()) for c in sys.constraints], dtype=np.int64)
    ok = all(c.lo <= v <= c.hi for c, v in zip(sys.constraints, sums))
    return ok, sums


def _accepts_block(sys: CardinalitySystem, block: np.ndarray) -> np.ndarray:
    """Vectorized acceptance of a block of assignments (rows)."""
    ok = np.ones(len(block), dtype=bool)
    for c in sys.constraints:
        v = block[:, list(c.indices)].sum(axis=1)
        ok &= (v >= c.lo) & (v <= c.hi)
    return ok


class EquivalenceVerdict(NamedTuple):
    equal: bool
    exhaustive: bool


def semantic_equivalence(
    a: CardinalitySystem,
    b: CardinalitySystem,
    max_vars: int = 24,
    n_samples: int = 100_000,
    seed: int = 0,
) -> EquivalenceVerdict:
    """Do both systems accept exactly the same assignments?

    Exhaustive over all 2^d assignments up to ``max_vars`` variables; beyond
    that, uniform sampling gives a probabilistic verdict (exhaustive=False).
    """
    if a.space != b.space:
        raise SpaceMismatch("systems live over different variable spaces")
    d = a.dim
    if d <= max_vars:
        chunk = 1 << min(d, 16)
        for start in range(0, 1 << d, chunk):
            ints = np.arange(start, start + chunk, dtype=np.int64)
            block = ((ints[:, None] >> np.arange(d)) & 1).astype(np.int8)
            if not np.array_equal(_accepts_block(a, block), _accepts_block(b, block)):
                return EquivalenceVerdict(False, True)
        return EquivalenceVerdict(True, True)
    rng = Rng(seed)
    remaining = n_samples
    while remaining > 0:
        take = min(remaining, 1 << 14)
        block = (rng.uniform(take * d).reshape(take, d) < 0.5).astype(np.int8)
        if not np.array_equal(_accepts_block(a, block), _accepts_block(b, block)):
            return EquivalenceVerdict(False, False)
        remaining -= take
    return EquivalenceVerdict(True, False)


def export_opb(sys: CardinalitySystem) -> str:
    """OPB text: one >= line per lower bound, a negated >= line when hi < Σw."""
    lines = []
    for c in sys.constraints:
        terms = " ".join(f"+1 x{i + 1}" for i in c.indices)
        lines.append(f"{terms} >= {c.lo} ;")
        if c.hi < len(c.indices):
            neg = " ".join(f"-1 x{i + 1}" for i in c.indices)
            lines.append(f"{neg} >= {-c.hi} ;")
    header = f"* #variable= {sys.dim} #constraint= {len(lines)}"
    return "\n".join([header] + lines) + "\n"


def export_smt2(sys: CardinalitySystem) -> str:
    """SMT-LIB2 text with one 0/1 Int per variable."""
    out = ["(set-logic QF_LIA)"]
    for i in range(sys.dim):
        out.append(f"(declare-fun x{i + 1} () Int)")
        out.append(f"(assert (<= 0 x{i + 1} 1))")
    for c in sys.constraints:
        if len(c.indices) == 1:
            total = f"x{c.indices[0] + 1}"
        else:
            total = "(+ " + " ".join(f"x{i + 1}" for i in c.indices) + ")"
        out.append(f"(assert (<= {c.lo} {total} {c.hi}))")
    out.append("(check-sat)")
    return "\n".join(out) + "\n"


def space_to_dict(space: VariableSpace) -> dict:
    return {
        "observed_input_bits": space.observed_input_bits,
        "latent_bits": space.latent_bits,
        "output_bits": space.output_bits,
        "groups": [list(g) for g in space.groups] if space.groups is not None else None,
        "names": list(space.names) if space.names is not None else None,
    }


def space_from_dict(d: dict) -> VariableSpace:
    return VariableSpace(
        observed_input_bits=int(d["observed_input_bits"]),
        latent_bits=int(d["latent_bits"]),
        output_bits=int(d["output_bits"]),
        groups=tuple(tuple(g) for g in d["groups"]) if d.get("groups") is not None else None,
        names=tuple(d["names"]) if d.get("names") is not None else None,
    )


def system_to_json(sys: CardinalitySystem) -> str:
    doc = {
        "version": JSON_VERSION,
        "space": space_to_dict(sys.space),
        "constraints": [{"w": list(c.indices), "lo": c.lo, "hi": c.hi} for c in sys.constraints],
    }
    return json.dumps(doc, indent=1) + "\n"


def system_from_json(text: str) -> CardinalitySystem:
    doc = json.loads(text)
    if doc.get("version") != JSON_VERSION:
        raise ValueError(f"unsupported constraint-file version {doc.get('version')!r}")
    space = space_from_dict(doc["space"])
    cons = [CardinalityConstraint(tuple(int(i) for i in c["w"]), int(c["lo"]), int(c["hi"])) for c in doc["constraints"]]
    return CardinalitySystem(space, cons)

"""Exact inference over cardinality constraints.

Hard constraints come from a learned CardinalitySystem; soft per-variable
preferences carry perception confidence.  A depth-first branch-and-bound
search with interval propagation finds the Boolean assignment of minimum
flip cost, i.e. partial MaxSAT with unit soft clauses.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .constraints import CardinalitySystem, VariableSpace, CardinalityConstraint, evaluate


class TooLarge(ValueError):
    pass


class InconsistentFixed(ValueError):
    """The fixed partial assignment already violates a hard constraint."""


class OpbSyntaxError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


OPTIMAL = "optimal"
FEASIBLE = "feasible"
INFEASIBLE = "infeasible"
BUDGET_EXCEEDED = "budget_exceeded"


@dataclass
class InferenceProblem:
    system: CardinalitySystem
    preferred: np.ndarray | None = None   # preferred Boolean value per variable
    weights: np.ndarray | None = None     # preference weight >= 0 (0 = free)
    fixed: dict[int, int] = field(default_factory=dict)
    node_budget: int = 10_000_000
    time_budget: float = 60.0

    def __post_init__(self):
        d = self.system.dim
        if self.preferred is None:
            self.preferred = np.zeros(d, dtype=np.int8)
        else:
            self.preferred = np.asarray(self.preferred, dtype=np.int8)
        if self.weights is None:
            self.weights = np.zeros(d, dtype=np.float64)
        else:
            self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.preferred.shape != (d,) or self.weights.shape != (d,):
            raise ValueError("preferences must cover every variable")
        if np.any(self.weights < 0) or not np.all(np.isfinite(self.weights)):
            raise ValueError("preference weights must be finite and non-negative")
        for v, x in self.fixed.items():
            if not 0 <= v < d or x not in (0, 1):
                raise ValueError(f"bad fixed assignment {v}={x}")


@dataclass
class Solution:
    status: str
    assignment: np.ndarray | None
    cost: float
    nodes: int = 0

    def to_json(self) -> str:
        doc = {
            "status": self.status,
            "cost": self.cost,
            "assignment": None if self.assignment is None else [int(x) for x in self.assignment],
        }
        return json.dumps(doc)


def preferences_from_confidence(p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Preferred value round(p) with weight |2p - 1| per variable."""
    p = np.asarray(p, dtype=np.float64)
    return (p >= 0.5).astype(np.int8), np.abs(2.0 * p - 1.0)


class _Search:
    def __init__(self, prob: InferenceProblem):
        self.prob = prob
        sys_ = prob.system
        self.d = sys_.dim
        self.cons_vars = [list(c.indices) for c in sys_.constraints]
        self.lo = np.array([c.lo for c in sys_.constraints], dtype=np.int64)
        self.hi = np.array([c.hi for c in sys_.constraints], dtype=np.int64)
        self.var_cons: list[list[int]] = [[] for _ in range(self.d)]
        for ci, vs in enumerate(self.cons_vars):
            for v in vs:
                self.var_cons[v].append(ci)
        self.val = np.full(self.d, -1, dtype=np.int8)
        self.sum = np.zeros(len(self.cons_vars), dtype=np.int64)
        self.free = np.array([len(v) for v in self.cons_vars], dtype=np.int64)
        self.cost = 0.0
        self.trail: list[int] = []
        self.order = sorted(range(self.d), key=lambda v: (-prob.weights[v], v))
        self.nodes = 0

    def _assign(self, v: int, x: int) -> bool:
        """Set variable v; returns False on immediate constraint wipeout."""
        self.val[v] = x
        self.trail.append(v)
        if x != self.prob.preferred[v]:
            self.cost += self.prob.weights[v]
        ok = True
        for ci in self.var_cons[v]:
            self.free[ci] -= 1
            self.sum[ci] += x
            if self.sum[ci] > self.hi[ci] or self.sum[ci] + self.free[ci] < self.lo[ci]:
                ok = False
        return ok

    def _undo_to(self, mark: int):
        while len(self.trail) > mark:
            v = self.trail.pop()
            x = self.val[v]
            if x != self.prob.preferred[v]:
                self.cost -= self.prob.weights[v]
            self.val[v] = -1
            for ci in self.var_cons[v]:
                self.free[ci] += 1
                self.sum[ci] -= x

    def _propagate(self) -> bool:
        """Force implied values to fixpoint; False on conflict."""
        changed = True
        while changed:
            changed = False
            for ci, vs in enumerate(self.cons_vars):
                if self.free[ci] == 0:
                    continue
                if self.sum[ci] > self.hi[ci] or self.sum[ci] + self.free[ci] < self.lo[ci]:
                    return False
                force = -1
                if self.sum[ci] == self.hi[ci]:
                    force = 0
                elif self.sum[ci] + self.free[ci] == self.lo[ci]:
                    force = 1
                if force >= 0:
                    for v in vs:
                        if self.val[v] < 0:
                            if not self._assign(v, force):
                                return False
                    changed = True
        return True

    def _pick(self) -> int:
        for v in self.order:
            if self.val[v] < 0:
                return v
        return -1

    def run(self) -> Solution:
        prob = self.prob
        conflict = False
        for v, x in prob.fixed.items():
            if self.val[v] >= 0:
                if self.val[v] != x:
                    conflict = True
                    break
                continue
            if not self._assign(v, x):
                conflict = True
                break
        if not conflict:
            conflict = not self._propagate()
        if conflict:
            if prob.fixed:
                raise InconsistentFixed("fixed assignment violates a constraint at the root")
            return Solution(INFEASIBLE, None, float("inf"), 0)

        best_cost = float("inf")
        best: np.ndarray | None = None
        deadline = time.monotonic() + prob.time_budget
        out_of_budget = False

        # stack entries: (variable, next branch index, trail mark)
        stack: list[list[int]] = []
        v = self._pick()
        if v < 0:
            return Solution(OPTIMAL, self.val.astype(np.int8).copy(), self.cost, 1)
        stack.append([v, 0, len(self.trail)])

        while stack:
            frame = stack[-1]
            v, branch, mark = frame
            if branch == 2:
                stack.pop()
                self._undo_to(mark)
                continue
            frame[1] += 1
            self.nodes += 1
            if self.nodes > prob.node_budget or (self.nodes % 1024 == 0 and time.monotonic() > deadline):
                out_of_budget = True
                break
            self._undo_to(mark)
            pref = int(prob.preferred[v])
            x = pref if branch == 0 else 1 - pref
            if not self._assign(v, x) or not self._propagate():
                continue
            if self.cost >= best_cost:
                continue
            nxt = self._pick()
            if nxt < 0:
                best_cost = self.cost
                best = self.val.astype(np.int8).copy()
                continue
            stack.append([nxt, 0, len(self.trail)])

        if out_of_budget:
            if best is None:
                return Solution(BUDGET_EXCEEDED, None, float("inf"), self.nodes)
            return Solution(FEASIBLE, best, best_cost, self.nodes)
        if best is None:
            return Solution(INFEASIBLE, None, float("inf"), self.nodes)
        return Solution(OPTIMAL, best, best_cost, self.nodes)


def solve(prob: InferenceProblem) -> Solution:
    """Branch-and-bound search: propagate intervals, branch on the heaviest
    undecided variable (preferred value first), prune on flip cost."""
    return _Search(prob).run()


def brute_force_solve(prob: InferenceProblem) -> Solution:
    """Exhaustive optimum over free variables; lexicographic tie-break."""
    d = prob.system.dim
    free = [v for v in range(d) if v not in prob.fixed]
    if len(free) > 24:
        raise TooLarge(f"{len(free)} free variables exceed the 2^24 budget")
    base = np.zeros(d, dtype=np.int8)
    for v, x in prob.fixed.items():
        base[v] = x
    best: tuple[float, tuple[int, ...]] | None = None
    for code in range(1 << len(free)):
        s = base.copy()
        for j, v in enumerate(free):
            s[v] = (code >> j) & 1
        ok, _ = evaluate(prob.system, s)
        if not ok:
            continue
        cost = float(np.sum(prob.weights[s != prob.preferred]))
        key = (cost, tuple(int(x) for x in s))
        if best is None or key < best:
            best = key
    if best is None:
        return Solution(INFEASIBLE, None, float("inf"))
    return Solution(OPTIMAL, np.array(best[1], dtype=np.int8), best[0])


def parse_opb(text: str) -> CardinalitySystem:
    """Read the unit-coefficient OPB dialect written by constraints.export_opb.

    A ``-1 ...`` line merges with an immediately preceding ``+1 ...`` line
    over the same variables; the parsed space is a flat block of observed
    bits, since OPB carries no segment structure.
    """
    dim = 0
    rows: list[tuple[tuple[int, ...], int, int]] = []  # (support, lo, hi)
    prev_support: tuple[int, ...] | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("*"):
            toks = line.split()
            if "#variable=" in toks:
                try:
                    dim = int(toks[toks.index("#variable=") + 1])
                except (IndexError, ValueError):
                    raise OpbSyntaxError(lineno, "malformed header")
            continue
        if not line.endswith(";"):
            raise OpbSyntaxError(lineno, "missing terminating ';'")
        toks = line[:-1].split()
        if len(toks) < 2 or toks[-2] != ">=":
            raise OpbSyntaxError(lineno, "expected '>= k ;'")
        try:
            rhs = int(toks[-1])
        except ValueError:
            raise OpbSyntaxError(lineno, f"bad right-hand side {toks[-1]!r}")
        coefs: list[int] = []
        support: list[int] = []
        terms = toks[:-2]
        if len(terms) % 2 != 0 or not terms:
            raise OpbSyntaxError(lineno, "terms must be coefficient/variable pairs")
        for coef_tok, var_tok in zip(terms[0::2], terms[1::2]):
            if coef_tok not in ("+1", "-1", "1"):
                raise OpbSyntaxError(lineno, f"unsupported coefficient {coef_tok!r}")
            if not var_tok.startswith("x"):
                raise OpbSyntaxError(lineno, f"bad variable token {var_tok!r}")
            try:
                vi = int(var_tok[1:]) - 1
            except ValueError:
                raise OpbSyntaxError(lineno, f"bad variable token {var_tok!r}")
            if vi < 0:
                raise OpbSyntaxError(lineno, "variable indices start at x1")
            coefs.append(-1 if coef_tok == "-1" else 1)
            support.append(vi)
        if len(set(support)) != len(support):
            raise OpbSyntaxError(lineno, "repeated variable in one constraint")
        sup = tuple(sorted(support))
        dim = max(dim, max(support) + 1)
        if all(c == 1 for c in coefs):
            rows.append((sup, max(0, rhs), len(sup)))
            prev_support = sup
        elif all(c == -1 for c in coefs):
            hi = min(-rhs, len(sup))
            if prev_support == sup and rows and rows[-1][0] == sup:
                s, lo, _ = rows[-1]
                rows[-1] = (s, lo, hi)
            else:
                rows.append((sup, 0, hi))
            prev_support = None
        else:
            raise OpbSyntaxError(lineno, "mixed-sign coefficients are not supported")
    space = VariableSpace(observed_input_bits=dim, latent_bits=0, output_bits=0)
    cons = [CardinalityConstraint(sup, lo, hi) for sup, lo, hi in rows]
    return CardinalitySystem(space, cons)

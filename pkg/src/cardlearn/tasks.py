"""Dataset generators with known ground truth.

Chained XOR (parity with auxiliary variables), Sudoku (symbolic, synthetic
glyphs, or IDX digit images), 7x7 nonogram lines, and A*-labelled grid path
planning.  Samples carry hidden latent bits for evaluation only; generators
are seed-deterministic and emit JSONL with a header describing the space.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field

import numpy as np

from .constraints import (
    CardinalityConstraint,
    CardinalitySystem,
    VariableSpace,
    evaluate,
    space_from_dict,
    space_to_dict,
)
from .grounding import check_auxiliary_budget
from .numkit import Rng
from .perception import load_idx_dataset


class NoPath(ValueError):
    pass


class IdxUnavailable(ValueError):
    pass


@dataclass
class TaskSample:
    """One weakly supervised example.

    ``mask`` marks, per space coordinate, which bits are latent in this
    sample (grounded during training); unmasked bits are observed.  ``z``
    holds the hidden latent truth for evaluation only.
    """

    y: np.ndarray
    mask: np.ndarray
    x: np.ndarray | None = None
    z: np.ndarray | None = None
    meta: dict = field(default_factory=dict)


@dataclass
class GroundTruth:
    system: CardinalitySystem | None = None


@dataclass
class TaskData:
    task: str
    space: VariableSpace
    samples: list[TaskSample]
    truth: GroundTruth = field(default_factory=GroundTruth)
    mode: str = "symbolic"
    params: dict = field(default_factory=dict)


def parity(bits) -> int:
    return int(np.sum(np.asarray(bits)) % 2)


# ---------------------------------------------------------------- chained XOR


def gen_xor(length: int, n: int, seed: int) -> TaskData:
    """Uniform bit strings labelled by parity; L-1 free auxiliary bits."""
    if length < 1 or n < 1:
        raise ValueError("need length >= 1 and n >= 1")
    aux = length - 1
    space = VariableSpace(length, aux, 1)
    check_auxiliary_budget(space)
    rng = Rng(seed).spawn(1)
    samples = []
    for _ in range(n):
        x = (rng.uniform(length) < 0.5).astype(np.int8)
        y = np.array([parity(x)], dtype=np.int8)
        mask = np.zeros(space.dim, dtype=np.int8)
        mask[space.latent_slice] = 1
        samples.append(TaskSample(y=y, mask=mask, x=x.astype(np.float64)))
    return TaskData("xor", space, samples, GroundTruth(), "symbolic", {"L": length, "N": n, "seed": seed})


# -------------------------------------------------------------------- sudoku

GLYPH_ROWS = {
    0: ("........", "........", "........", "........", "........", "........", "........", "........"),
    1: ("...#....", "..##....", "...#....", "...#....", "...#....", "...#....", "..###...", "........"),
    2: ("..###...", " .#...#..", "......#.", ".....#..", "....#...", "..##....", ".#####..", "........"),
    3: (".####...", ".....#..", "....#...", "..###...", ".....#..", ".....#..", ".####...", "........"),
    4: ("....#...", "...##...", "..#.#...", ".#..#...", ".#####..", "....#...", "....#...", "........"),
    5: (".#####..", ".#......", ".####...", ".....#..", "......#.", ".....#..", ".####...", "........"),
    6: ("..###...", ".#......", ".#......", ".####...", ".#...#..", ".#...#..", "..###...", "........"),
    7: (".#####..", ".....#..", "....#...", "...#....", "...#....", "..#.....", "..#.....", "........"),
    8: ("..###...", ".#...#..", ".#...#..", "..###...", ".#...#..", ".#...#..", "..###...", "........"),
    9: ("..###...", ".#...#..", ".#...#..", "..####..", ".....#..", ".....#..", "..###...", "........"),
}

GLYPH_SIZE = 8


def glyph_bitmap(digit: int) -> np.ndarray:
    rows = GLYPH_ROWS[digit]
    return np.array([[1 if ch == "#" else 0 for ch in row.ljust(GLYPH_SIZE)[:GLYPH_SIZE]] for row in rows], dtype=np.int8)


def sudoku_space(size: int) -> VariableSpace:
    cells = size * size
    groups = tuple(tuple(range(c * size, (c + 1) * size)) for c in range(cells))
    return VariableSpace(0, cells * size, 0, groups=groups)


def sudoku_ground_truth(size: int) -> CardinalitySystem:
    """Rows, columns, blocks each hold every digit once; cells hold one digit."""
    block = int(np.sqrt(size))
    assert block * block == size
    space = sudoku_space(size)

    def bit(r, c, d):
        return (r * size + c) * size + d

    cons = []
    for r in range(size):
        for d in range(size):
            cons.append(CardinalityConstraint(tuple(bit(r, c, d) for c in range(size)), 1, 1))
    for c in range(size):
        for d in range(size):
            cons.append(CardinalityConstraint(tuple(bit(r, c, d) for r in range(size)), 1, 1))
    for bi in range(block):
        for bj in range(block):
            cells = [(bi * block + i, bj * block + j) for i in range(block) for j in range(block)]
            for d in range(size):
                cons.append(CardinalityConstraint(tuple(bit(r, c, d) for r, c in cells), 1, 1))
    for r in range(size):
        for c in range(size):
            cons.append(CardinalityConstraint(tuple(bit(r, c, d) for d in range(size)), 1, 1))
    return CardinalitySystem(space, cons)


def _sudoku_candidates(board: np.ndarray, r: int, c: int, size: int, block: int) -> list[int]:
    used = set(board[r]) | set(board[:, c])
    br, bc = (r // block) * block, (c // block) * block
    used |= set(board[br : br + block, bc : bc + block].ravel())
    return [d for d in range(1, size + 1) if d not in used]


def _fill_board(board: np.ndarray, cells: list[tuple[int, int]], size: int, block: int, rng: Rng) -> bool:
    if not cells:
        return True
    # most-constrained cell first keeps backtracking shallow
    best = min(cells, key=lambda rc: len(_sudoku_candidates(board, rc[0], rc[1], size, block)))
    rest = [rc for rc in cells if rc != best]
    cands = _sudoku_candidates(board, best[0], best[1], size, block)
    for d in rng.shuffle(cands):
        board[best] = d
        if _fill_board(board, rest, size, block, rng):
            return True
        board[best] = 0
    return False


def _count_solutions(board: np.ndarray, size: int, block: int, limit: int = 2) -> int:
    empties = [(r, c) for r in range(size) for c in range(size) if board[r, c] == 0]
    if not empties:
        return 1
    best = min(empties, key=lambda rc: len(_sudoku_candidates(board, rc[0], rc[1], size, block)))
    total = 0
    for d in _sudoku_candidates(board, best[0], best[1], size, block):
        board[best] = d
        total += _count_solutions(board, size, block, limit - total)
        board[best] = 0
        if total >= limit:
            break
    return total


def random_solved_board(size: int, rng: Rng) -> np.ndarray:
    block = int(np.sqrt(size))
    board = np.zeros((size, size), dtype=np.int64)
    cells = [(r, c) for r in range(size) for c in range(size)]
    assert _fill_board(board, cells, size, block, rng)
    return board


def dig_puzzle(board: np.ndarray, givens: int, rng: Rng) -> np.ndarray:
    """Remove digits while the puzzle keeps a unique solution."""
    size = board.shape[0]
    block = int(np.sqrt(size))
    puzzle = board.copy()
    order = rng.shuffle([(r, c) for r in range(size) for c in range(size)])
    remaining = size * size
    for r, c in order:
        if remaining <= givens:
            break
        keep = puzzle[r, c]
        puzzle[r, c] = 0
        if _count_solutions(puzzle.copy(), size, block) == 1:
            remaining -= 1
        else:
            puzzle[r, c] = keep
    return puzzle


def board_bits(board: np.ndarray, size: int) -> np.ndarray:
    bits = np.zeros(size * size * size, dtype=np.int8)
    for r in range(size):
        for c in range(size):
            d = board[r, c]
            if d > 0:
                bits[(r * size + c) * size + (d - 1)] = 1
    return bits


def render_board(puzzle: np.ndarray, sigma: float, rng: Rng, mode: str, idx_pool=None) -> np.ndarray:
    """Per-cell images, row-major, flattened to one float vector."""
    size = puzzle.shape[0]
    cells = []
    for r in range(size):
        for c in range(size):
            d = int(puzzle[r, c])
            if mode == "synthetic":
                img = glyph_bitmap(d).astype(np.float64)
                if sigma > 0:
                    flips = rng.uniform(GLYPH_SIZE * GLYPH_SIZE).reshape(GLYPH_SIZE, GLYPH_SIZE) < sigma
                    img = np.abs(img - flips.astype(np.float64))
            else:
                if d == 0:
                    img = np.zeros((idx_pool["h"], idx_pool["w"]))
                else:
                    pool = idx_pool[d]
                    pick = int(rng.integers(1, 0, len(pool))[0])
                    img = pool[pick].astype(np.float64) / 255.0
            cells.append(img.ravel())
    return np.concatenate(cells)


def gen_sudoku(
    size: int,
    n: int,
    seed: int,
    givens_range: tuple[int, int] | None = None,
    mode: str = "symbolic",
    sigma: float = 0.0,
    idx_images: str | None = None,
    idx_labels: str | None = None,
) -> TaskData:
    """Unique-solution puzzles; z covers given cells, y the blanks."""
    if size not in (4, 9):
        raise ValueError("size must be 4 or 9")
    if mode not in ("symbolic", "synthetic", "idx"):
        raise ValueError(f"unknown glyph mode {mode!r}")
    if givens_range is None:
        givens_range = (6, 10) if size == 4 else (28, 40)
    lo_g, hi_g = givens_range
    if not 0 < lo_g <= hi_g <= size * size:
        raise ValueError("infeasible givens range")
    idx_pool = None
    if mode == "idx":
        if not idx_images or not idx_labels:
            raise IdxUnavailable("idx mode requires image and label files")
        ds = load_idx_dataset(idx_images, idx_labels)
        idx_pool = {"h": ds.images.shape[1], "w": ds.images.shape[2]}
        for d in range(1, size + 1):
            pool = ds.images[ds.labels == d]
            if len(pool) == 0:
                raise IdxUnavailable(f"no IDX examples for digit {d}")
            idx_pool[d] = pool
    space = sudoku_space(size)
    truth = GroundTruth(sudoku_ground_truth(size))
    rng = Rng(seed).spawn(2)
    samples = []
    for _ in range(n):
        board = random_solved_board(size, rng)
        givens = int(rng.integers(1, lo_g, hi_g + 1)[0])
        puzzle = dig_puzzle(board, givens, rng)
        full = board_bits(board, size)
        given_cells = puzzle > 0
        mask = np.repeat(given_cells.ravel(), size).astype(np.int8)
        z = np.where(mask == 1, full, 0).astype(np.int8)
        y = np.where(mask == 0, full, 0).astype(np.int8)
        x = None
        if mode in ("synthetic", "idx"):
            x = render_board(puzzle, sigma, rng, mode, idx_pool)
        samples.append(TaskSample(y=y, mask=mask, x=x, z=z))
    params = {"size": size, "N": n, "seed": seed, "givens": list(givens_range), "sigma": sigma}
    return TaskData("sudoku", space, samples, truth, mode, params)


# ------------------------------------------------------------------ nonogram


def line_clue(cells) -> tuple[int, ...]:
    runs, cur = [], 0
    for v in cells:
        if v:
            cur += 1
        elif cur:
            runs.append(cur)
            cur = 0
    if cur:
        runs.append(cur)
    return tuple(runs)


def enumerate_clues(size: int) -> list[tuple[int, ...]]:
    """Every clue tuple achievable on a line of the given length, sorted."""
    clues = {line_clue([(code >> i) & 1 for i in range(size)]) for code in range(1 << size)}
    return sorted(clues, key=lambda t: (len(t), t))


def lines_for_clue(clue: tuple[int, ...], size: int) -> list[tuple[int, ...]]:
    return [
        tuple((code >> i) & 1 for i in range(size))
        for code in range(1 << size)
        if line_clue([(code >> i) & 1 for i in range(size)]) == clue
    ]


def gen_nonogram(size: int = 7, n: int = 1000, seed: int = 0, fill_p: float = 0.4) -> TaskData:
    """Per-line samples: clue one-hot in, the line's cells out."""
    if size < 2:
        raise ValueError("size must be at least 2")
    clues = enumerate_clues(size)
    clue_index = {c: i for i, c in enumerate(clues)}
    aux = size - 1
    space = VariableSpace(len(clues), aux, size)
    check_auxiliary_budget(space)
    rng = Rng(seed).spawn(3)
    samples = []
    for k in range(n):
        board = (rng.uniform(size * size).reshape(size, size) < fill_p).astype(np.int8)
        pick = int(rng.integers(1, 0, 2 * size)[0])
        cells = board[pick, :] if pick < size else board[:, pick - size]
        clue = line_clue(cells)
        x = np.zeros(len(clues), dtype=np.float64)
        x[clue_index[clue]] = 1.0
        mask = np.zeros(space.dim, dtype=np.int8)
        mask[space.latent_slice] = 1
        samples.append(TaskSample(y=cells.astype(np.int8).copy(), mask=mask, x=x, meta={"clue": list(clue)}))
    params = {"size": size, "N": n, "seed": seed, "fill_p": fill_p, "clues": [list(c) for c in clues]}
    return TaskData("nonogram", space, samples, GroundTruth(), "symbolic", params)


# ------------------------------------------------------------------ gridpath


def astar(grid: np.ndarray, start: tuple[int, int], goal: tuple[int, int]) -> list[tuple[int, int]]:
    """Unit-cost 4-neighbour A* with Manhattan heuristic, ties on (f, row, col)."""
    h_dim, w_dim = grid.shape
    if grid[start] or grid[goal]:
        raise ValueError("start and goal must be unblocked")

    def heur(rc):
        return abs(rc[0] - goal[0]) + abs(rc[1] - goal[1])

    dist = {start: 0}
    parent: dict[tuple[int, int], tuple[int, int]] = {}
    heap = [(heur(start), start[0], start[1])]
    closed = set()
    while heap:
        f, r, c = heapq.heappop(heap)
        if (r, c) in closed:
            continue
        closed.add((r, c))
        if (r, c) == goal:
            path = [(r, c)]
            while path[-1] != start:
                path.append(parent[path[-1]])
            return path[::-1]
        g = dist[(r, c)]
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            nr, nc = r + dr, c + dc
            if not (0 <= nr < h_dim and 0 <= nc < w_dim) or grid[nr, nc]:
                continue
            if (nr, nc) in closed or dist.get((nr, nc), 1 << 30) <= g + 1:
                continue
            dist[(nr, nc)] = g + 1
            parent[(nr, nc)] = (r, c)
            heapq.heappush(heap, (g + 1 + heur((nr, nc)), nr, nc))
    raise NoPath(f"no route from {start} to {goal}")


def gen_gridpath(
    height: int = 10,
    width: int = 10,
    obstacles: int = 20,
    n: int = 100,
    seed: int = 0,
    noise: float = 0.3,
) -> TaskData:
    """Noisy obstacle grids with A* path labels; start fixed, goals random."""
    cells = height * width
    space = VariableSpace(0, cells, cells)
    rng = Rng(seed).spawn(4)
    samples = []
    start = (0, 0)
    while len(samples) < n:
        order = rng.shuffle(list(range(1, cells)))
        grid = np.zeros((height, width), dtype=np.int8)
        for idx in order[:obstacles]:
            grid[divmod(idx, width)] = 1
        free_cells = [i for i in range(1, cells) if grid[divmod(i, width)] == 0]
        goal_idx = free_cells[int(rng.integers(1, 0, len(free_cells))[0])]
        goal = divmod(goal_idx, width)
        try:
            path = astar(grid, start, goal)
        except NoPath:
            continue  # resample endpoints/map
        y = np.zeros(cells, dtype=np.int8)
        for r, c in path:
            y[r * width + c] = 1
        z = grid.ravel().astype(np.int8).copy()
        x = grid.ravel().astype(np.float64) + rng.uniform(cells, -noise, noise)
        mask = np.zeros(space.dim, dtype=np.int8)
        mask[space.latent_slice] = 1
        samples.append(TaskSample(y=y, mask=mask, x=x, z=z, meta={"start": list(start), "goal": list(goal)}))
    params = {"H": height, "W": width, "obstacles": obstacles, "N": n, "seed": seed, "noise": noise}
    return TaskData("gridpath", space, samples, GroundTruth(), "symbolic", params)


# ------------------------------------------------------------------- JSONL IO


def _num_list(arr) -> list:
    out = []
    for v in np.asarray(arr).ravel():
        f = float(v)
        out.append(int(f) if f.is_integer() else f)
    return out


def save_jsonl(data: TaskData, path: str) -> None:
    header = {
        "task": data.task,
        "mode": data.mode,
        "space": space_to_dict(data.space),
        "params": data.params,
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(header) + "\n")
        for s in data.samples:
            row = {
                "x": None if s.x is None else _num_list(s.x),
                "y": [int(v) for v in s.y],
                "z": None if s.z is None else [int(v) for v in s.z],
                "mask": [int(v) for v in s.mask],
            }
            if s.meta:
                row["meta"] = s.meta
            fh.write(json.dumps(row) + "\n")


def load_jsonl(path: str) -> TaskData:
    with open(path) as fh:
        header = json.loads(fh.readline())
        samples = []
        for line in fh:
            row = json.loads(line)
            samples.append(
                TaskSample(
                    y=np.array(row["y"], dtype=np.int8),
                    mask=np.array(row["mask"], dtype=np.int8),
                    x=None if row["x"] is None else np.array(row["x"], dtype=np.float64),
                    z=None if row["z"] is None else np.array(row["z"], dtype=np.int8),
                    meta=row.get("meta", {}),
                )
            )
    space = space_from_dict(header["space"])
    task = header["task"]
    truth = GroundTruth(sudoku_ground_truth(header["params"]["size"])) if task == "sudoku" else GroundTruth()
    return TaskData(task, space, samples, truth, header["mode"], header["params"])


def make_dataset(task: str, seed: int, **params) -> TaskData:
    if task == "xor":
        return gen_xor(params.get("L", 20), params.get("N", 9000), seed)
    if task == "sudoku":
        return gen_sudoku(
            params.get("size", 4),
            params.get("N", 2000),
            seed,
            givens_range=tuple(params["givens"]) if "givens" in params else None,
            mode=params.get("mode", "symbolic"),
            sigma=params.get("sigma", 0.0),
            idx_images=params.get("idx_images"),
            idx_labels=params.get("idx_labels"),
        )
    if task == "nonogram":
        return gen_nonogram(params.get("size", 7), params.get("N", 1000), seed, params.get("fill_p", 0.4))
    if task == "gridpath":
        return gen_gridpath(
            params.get("H", 10), params.get("W", 10), params.get("obstacles", 20),
            params.get("N", 100), seed, params.get("noise", 0.3),
        )
    raise ValueError(f"unknown task {task!r}")

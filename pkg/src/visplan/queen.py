"""Colored-region Queen puzzles.

A puzzle is an n x n board partitioned into n connected colored regions;
the goal places one queen per row, column, and region with no two queens
touching in the 8-neighborhood.  Long-range diagonal attacks are allowed:
the constraint set follows the task instruction, not classical N-Queens.
Boards are grown around a known placement, so every task is solvable by
construction; the exhaustive solver is the independent correctness oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .maze import MASK64, child_seed, stable_digest, _rng


class PlacementError(ValueError):
    """A queen placement violates the puzzle constraints."""


class GenerationBudgetError(RuntimeError):
    """Rejection sampling exhausted its attempt budget."""


def check_placement(n: int, columns: tuple[int, ...]) -> None:
    """Raise unless columns encode a valid placement (one queen per row).

    Deliberately independent of the samplers: a plain replay of the
    permutation and consecutive-row separation rules.
    """
    if len(columns) != n:
        raise PlacementError(f"expected {n} columns, got {len(columns)}")
    if sorted(columns) != list(range(n)):
        raise PlacementError("columns are not a permutation")
    for r in range(n - 1):
        if abs(columns[r] - columns[r + 1]) < 2:
            raise PlacementError(
                f"queens in rows {r} and {r + 1} touch in the 8-neighborhood"
            )


@dataclass(frozen=True)
class RegionMap:
    n: int
    region_of: tuple[int, ...]  # row-major cell -> region index in [0, n)

    def __post_init__(self) -> None:
        if len(self.region_of) != self.n * self.n:
            raise ValueError("region map does not cover the board")

    def region_cells(self, region: int) -> list[int]:
        return [c for c, r in enumerate(self.region_of) if r == region]

    def validate(self) -> None:
        n = self.n
        seen = set(self.region_of)
        if seen != set(range(n)):
            raise ValueError(f"expected regions 0..{n - 1}, got {sorted(seen)}")
        for region in range(n):
            cells = self.region_cells(region)
            if not _connected_4(n, cells):
                raise ValueError(f"region {region} is not 4-connected")


def _connected_4(n: int, cells: list[int]) -> bool:
    if not cells:
        return False
    todo = {*cells}
    stack = [cells[0]]
    todo.discard(cells[0])
    while stack:
        cur = stack.pop()
        r, c = divmod(cur, n)
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            rr, cc = r + dr, c + dc
            if 0 <= rr < n and 0 <= cc < n:
                nb = rr * n + cc
                if nb in todo:
                    todo.discard(nb)
                    stack.append(nb)
    return not todo


@dataclass(frozen=True)
class QueenTask:
    n: int
    regions: RegionMap
    columns: tuple[int, ...]  # goal queen column per row
    seed: int
    unique: bool
    solution_count: int
    task_id: str

    @property
    def goal_cells(self) -> frozenset[int]:
        return frozenset(r * self.n + c for r, c in enumerate(self.columns))


def sample_placement(n: int, seed: int) -> tuple[int, ...]:
    """A valid placement found by randomized backtracking over rows."""
    if n < 4:
        raise ValueError(f"board size must be >= 4, got {n}")
    rng = _rng(seed)
    columns: list[int] = []
    used = [False] * n
    # Per-row randomized column orders; backtracking explores them in turn.
    orders = [list(rng.permutation(n)) for _ in range(n)]

    def place(row: int) -> bool:
        if row == n:
            return True
        for col in orders[row]:
            col = int(col)
            if used[col]:
                continue
            if row > 0 and abs(col - columns[-1]) < 2:
                continue
            used[col] = True
            columns.append(col)
            if place(row + 1):
                return True
            used[col] = False
            columns.pop()
        return False

    if not place(0):  # pragma: no cover - placements exist for all n >= 4
        raise GenerationBudgetError(f"no placement found for n={n}")
    result = tuple(columns)
    check_placement(n, result)
    return result


def grow_regions(n: int, columns: tuple[int, ...], seed: int) -> RegionMap:
    """Grow n regions from the queen cells by random 4-connected flood fill.

    Frontier (cell, region) pairs are drawn uniformly, so no region is
    systematically starved; every region keeps its seeding queen.
    """
    check_placement(n, columns)
    rng = _rng(seed)
    region_of = [-1] * (n * n)
    frontier: list[tuple[int, int]] = []

    def push_neighbors(cell: int, region: int) -> None:
        r, c = divmod(cell, n)
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            rr, cc = r + dr, c + dc
            if 0 <= rr < n and 0 <= cc < n and region_of[rr * n + cc] < 0:
                frontier.append((rr * n + cc, region))

    for row, col in enumerate(columns):
        region_of[row * n + col] = row
    for row, col in enumerate(columns):
        push_neighbors(row * n + col, row)

    remaining = n * n - n
    while remaining:
        pick = int(rng.integers(len(frontier)))
        frontier[pick], frontier[-1] = frontier[-1], frontier[pick]
        cell, region = frontier.pop()
        if region_of[cell] >= 0:
            continue
        region_of[cell] = region
        remaining -= 1
        push_neighbors(cell, region)

    regions = RegionMap(n=n, region_of=tuple(region_of))
    regions.validate()
    return regions


def solve_queens(
    regions: RegionMap, limit: int | None = None
) -> list[tuple[int, ...]]:
    """Placements satisfying row, column, region, and touch constraints,
    in lexicographic column-vector order.

    With a limit the search stops after that many solutions; region
    sharpening uses this to work on batches instead of full enumerations.
    """
    n = regions.n
    region_of = regions.region_of
    solutions: list[tuple[int, ...]] = []
    columns: list[int] = []
    used_cols = [False] * n
    used_regions = [False] * n

    def place(row: int) -> bool:
        if row == n:
            solutions.append(tuple(columns))
            return limit is not None and len(solutions) >= limit
        prev = columns[-1] if row else -9
        base = row * n
        for col in range(n):
            if used_cols[col] or abs(col - prev) < 2:
                continue
            region = region_of[base + col]
            if used_regions[region]:
                continue
            used_cols[col] = True
            used_regions[region] = True
            columns.append(col)
            done = place(row + 1)
            used_cols[col] = False
            used_regions[region] = False
            columns.pop()
            if done:
                return True
        return False

    place(0)
    return solutions


def _move_targets(n: int, region_of: list[int], cell: int) -> list[int]:
    """Regions the cell could join while keeping the map a valid partition."""
    donor = region_of[cell]
    donor_rest = [c for c in range(n * n) if region_of[c] == donor and c != cell]
    if not donor_rest or not _connected_4(n, donor_rest):
        return []
    r, c = divmod(cell, n)
    targets = set()
    for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        rr, cc = r + dr, c + dc
        if 0 <= rr < n and 0 <= cc < n:
            other = region_of[rr * n + cc]
            if other != donor:
                targets.add(other)
    return sorted(targets)


def sharpen_regions(
    regions: RegionMap,
    columns: tuple[int, ...],
    max_rounds: int = 120,
    batch: int = 256,
) -> tuple[RegionMap, list[tuple[int, ...]]]:
    """Nudge a region map toward a unique solution.

    Random growth leaves large boards with hundreds of valid placements.
    Each round enumerates a batch of solutions and greedily moves non-goal
    cells occupied by the most alternatives into a neighboring region:
    every alternative with a queen on a moved cell then uses the receiving
    region twice and dies, while the goal placement is untouched.  The
    receiving region rotates with a move counter so that kill/revive cycles
    between a handful of stragglers do not repeat forever; previously seen
    maps end the attempt.  Fully deterministic; stops at uniqueness, an
    immovable board, a repeated map, or the round budget.
    """
    n = regions.n
    goal_cells = frozenset(r * n + col for r, col in enumerate(columns))
    seen: set[tuple[int, ...]] = {regions.region_of}
    move_counter = 0
    for _ in range(max_rounds):
        solutions = solve_queens(regions, limit=batch)
        alts = [s for s in solutions if s != columns]
        if not alts:
            # Fewer than batch solutions means the walk was exhaustive, so
            # an alternative-free result proves uniqueness.
            return regions, solutions
        region_of = list(regions.region_of)
        moved_any = False
        while alts:
            counts: dict[int, int] = {}
            for sol in alts:
                for row, col in enumerate(sol):
                    cell = row * n + col
                    if cell not in goal_cells:
                        counts[cell] = counts.get(cell, 0) + 1
            best_cell, best_targets = -1, []
            for cell in sorted(counts, key=lambda c: (-counts[c], c)):
                targets = _move_targets(n, region_of, cell)
                if targets:
                    best_cell, best_targets = cell, targets
                    break
            if best_cell < 0:
                break
            region_of[best_cell] = best_targets[move_counter % len(best_targets)]
            move_counter += 1
            moved_any = True
            row = best_cell // n
            alts = [s for s in alts if s[row] != best_cell % n]
        key = tuple(region_of)
        if not moved_any or key in seen:
            return regions, solve_queens(regions, limit=2)
        seen.add(key)
        regions = RegionMap(n=n, region_of=key)
    return regions, solve_queens(regions, limit=2)


def queen_task_id(n: int, seed: int) -> str:
    return f"queen-{n:02d}-{stable_digest('queen', n, seed & MASK64)}"


def build_queen_task(
    n: int,
    seed: int,
    require_unique: bool = True,
    max_attempts: int = 200,
) -> QueenTask:
    """Sample a placement, grow regions around it, and (optionally) reject
    region maps that admit more than one solution."""
    if not 4 <= n:
        raise ValueError(f"board size must be >= 4, got {n}")
    for attempt in range(max_attempts):
        columns = sample_placement(n, child_seed(seed, f"placement:{attempt}"))
        regions = grow_regions(n, columns, child_seed(seed, f"regions:{attempt}"))
        if require_unique:
            regions, solutions = sharpen_regions(regions, columns)
            regions.validate()
        else:
            solutions = solve_queens(regions)
        if require_unique and len(solutions) != 1:
            continue
        if columns not in solutions:  # pragma: no cover - construction guarantee
            raise GenerationBudgetError("generator produced an infeasible goal")
        return QueenTask(
            n=n,
            regions=regions,
            columns=columns,
            seed=seed,
            unique=require_unique,
            solution_count=len(solutions),
            task_id=queen_task_id(n, seed),
        )
    raise GenerationBudgetError(
        f"no unique-solution region map for n={n} after {max_attempts} attempts"
    )

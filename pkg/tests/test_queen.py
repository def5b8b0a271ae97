from itertools import permutations

import pytest

from visplan.queen import (
    GenerationBudgetError,
    PlacementError,
    RegionMap,
    build_queen_task,
    check_placement,
    grow_regions,
    sample_placement,
    solve_queens,
)


def brute_force_placements(n):
    """Oracle: filter all n! permutations on the touch constraint."""
    out = []
    for perm in permutations(range(n)):
        if all(abs(perm[r] - perm[r + 1]) >= 2 for r in range(n - 1)):
            out.append(perm)
    return out


def brute_force_solutions(regions):
    """Oracle: permutation brute force with the region constraint added."""
    n = regions.n
    out = []
    for perm in brute_force_placements(n):
        if len({regions.region_of[r * n + perm[r]] for r in range(n)}) == n:
            out.append(perm)
    return sorted(out)


def row_bands(n):
    return RegionMap(n=n, region_of=tuple(r for r in range(n) for _ in range(n)))


def test_n4_has_exactly_two_valid_placements():
    assert set(brute_force_placements(4)) == {(1, 3, 0, 2), (2, 0, 3, 1)}
    for seed in range(20):
        assert sample_placement(4, seed) in {(1, 3, 0, 2), (2, 0, 3, 1)}


def test_sample_placement_postcondition_replay():
    for n in (4, 5, 6, 8, 10):
        check_placement(n, sample_placement(n, seed=n))


def test_sample_placement_deterministic():
    assert sample_placement(7, 123) == sample_placement(7, 123)


def test_n7_many_seeds_valid_and_diverse():
    seen = set()
    for seed in range(200):
        cols = sample_placement(7, seed)
        check_placement(7, cols)
        seen.add(cols)
    assert len(seen) >= 2


def test_check_placement_rejects_bad_inputs():
    with pytest.raises(PlacementError):
        check_placement(4, (0, 0, 1, 2))
    with pytest.raises(PlacementError):
        check_placement(4, (0, 1, 3, 2))  # rows 0/1 touch diagonally


def test_grow_regions_partition_and_ownership():
    for seed in range(10):
        cols = sample_placement(5, seed)
        regions = grow_regions(5, cols, seed)
        assert sorted(set(regions.region_of)) == list(range(5))
        assert len(regions.region_of) == 25
        for row, col in enumerate(cols):
            assert regions.region_of[row * 5 + col] == row


def test_grow_regions_connected_flood_fill_oracle():
    cols = sample_placement(4, seed=0)
    regions = grow_regions(4, cols, seed=0)
    for region in range(4):
        cells = set(regions.region_cells(region))
        # Flood fill from any member must reach all members.
        start = next(iter(cells))
        seen = {start}
        stack = [start]
        while stack:
            cur = stack.pop()
            r, c = divmod(cur, 4)
            for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                rr, cc = r + dr, c + dc
                nb = rr * 4 + cc
                if 0 <= rr < 4 and 0 <= cc < 4 and nb in cells and nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        assert seen == cells


def test_solve_queens_row_bands_n4():
    # Row bands make the region constraint vacuous.
    assert solve_queens(row_bands(4)) == [(1, 3, 0, 2), (2, 0, 3, 1)]


def test_solve_queens_row_bands_n5_matches_brute_force():
    assert solve_queens(row_bands(5)) == sorted(brute_force_placements(5))


def test_solve_queens_contains_generating_goal():
    for seed in range(10):
        cols = sample_placement(6, seed)
        regions = grow_regions(6, cols, seed + 100)
        assert cols in solve_queens(regions)


@pytest.mark.parametrize("n", [4, 5, 6, 7])
def test_solver_matches_brute_force_on_random_regions(n):
    for seed in range(15):
        cols = sample_placement(n, seed)
        regions = grow_regions(n, cols, seed * 31 + 7)
        assert solve_queens(regions) == brute_force_solutions(regions)


def test_solutions_sorted_lexicographically():
    sols = solve_queens(row_bands(6))
    assert sols == sorted(sols)


def test_build_queen_task_unique():
    for seed in range(20):
        task = build_queen_task(6, seed, require_unique=True)
        assert task.solution_count == 1
        assert solve_queens(task.regions) == [task.columns]


def test_build_queen_task_deterministic():
    a = build_queen_task(5, 3)
    b = build_queen_task(5, 3)
    assert a.task_id == b.task_id
    assert a.columns == b.columns
    assert a.regions == b.regions


def test_build_queen_task_records_solution_count_when_not_unique():
    task = build_queen_task(5, 1, require_unique=False)
    assert task.solution_count == len(solve_queens(task.regions))


def test_attempt_budget_error():
    with pytest.raises(GenerationBudgetError):
        build_queen_task(6, 0, require_unique=True, max_attempts=0)


def test_goal_cells():
    task = build_queen_task(4, 0)
    assert task.goal_cells == frozenset(
        r * 4 + c for r, c in enumerate(task.columns)
    )

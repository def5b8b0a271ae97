import numpy as np
import pytest

from visplan.maze import build_maze_task, _rng
from visplan.queen import build_queen_task
from visplan.render import RenderStyle, render_maze, render_queens
from visplan.evaluation import (
    BenchmarkReport,
    DetectionConfig,
    EvaluationError,
    FidelityScores,
    MissingSamplesError,
    SampleRecord,
    ValidityScores,
    aggregate,
    align_candidate,
    detect_solution,
    format_report_csv,
    format_report_table,
    goal_cells_of,
    logical_validity,
    pixel_fidelity,
    read_records,
    write_records,
)

STYLE = RenderStyle()
CFG = DetectionConfig()


def make_record(task_id, sample_index, success, coverage=None, violation=0.0):
    coverage = 1.0 if success else (0.0 if coverage is None else coverage)
    pass_score = max(0.0, coverage - violation)
    return SampleRecord(
        task_id=task_id,
        sample_index=sample_index,
        detected=(),
        validity=ValidityScores(coverage, violation, pass_score, success),
        fidelity=FidelityScores(0.0, 0.0),
        latency=0.1,
        candidate_digest="d",
    )


# ---------------------------------------------------------------- validity


def test_logical_validity_partial():
    scores = logical_validity({1, 2, 3}, {1, 2, 3, 4, 5})
    assert scores.coverage == pytest.approx(0.6)
    assert scores.violation == 0.0
    assert scores.pass_score == pytest.approx(0.6)
    assert not scores.success


def test_logical_validity_exact():
    scores = logical_validity({1, 2}, {1, 2})
    assert (scores.coverage, scores.violation, scores.pass_score) == (1.0, 0.0, 1.0)
    assert scores.success


def test_logical_validity_clamped():
    scores = logical_validity({1, 2, 8, 9}, {1, 2, 3, 4})
    assert scores.coverage == pytest.approx(0.5)
    assert scores.violation == pytest.approx(0.5)
    assert scores.pass_score == 0.0


def test_empty_detection_convention():
    scores = logical_validity(set(), {1, 2, 3})
    assert scores.coverage == 0.0
    assert scores.violation == 0.0
    assert scores.pass_score == 0.0


def test_empty_goal_rejected():
    with pytest.raises(EvaluationError):
        logical_validity({1}, set())


def test_validity_algebra_and_monotonicity_randomized():
    rng = _rng(99)
    universe = list(range(40))
    for _ in range(1000):
        goal = set(
            int(c) for c in rng.choice(universe, size=int(rng.integers(1, 12)), replace=False)
        )
        detected = set(
            int(c) for c in rng.choice(universe, size=int(rng.integers(0, 20)), replace=False)
        )
        s = logical_validity(detected, goal)
        assert s.pass_score == max(0.0, s.coverage - s.violation)
        assert s.success == (detected == goal)
        #

        # Adding a correct cell never decreases coverage; adding an
        # incorrect cell never decreases violation.
        missing = goal - detected
        if missing:
            s2 = logical_validity(detected | {next(iter(missing))}, goal)
            assert s2.coverage >= s.coverage
        wrong = [c for c in universe if c not in goal and c not in detected]
        if wrong:
            s3 = logical_validity(detected | {wrong[0]}, goal)
            assert s3.violation >= s.violation


# ---------------------------------------------------------------- detection


def test_detect_ground_truth_square():
    task = build_maze_task("square", 4, "dfs_backtracker", seed=3)
    gt = render_maze(task, True, STYLE)
    assert set(detect_solution(gt, task, CFG, STYLE)) == set(task.goal_path)


def test_detect_task_image_empty():
    task = build_maze_task("triangle", 4, "bfs_growth", seed=3)
    img = render_maze(task, False, STYLE)
    assert detect_solution(img, task, CFG, STYLE) == ()


def test_detect_truncated_path():
    task = build_maze_task("hexagon", 5, "dfs_backtracker", seed=6)
    half = list(task.goal_path[: max(2, len(task.goal_path) // 2)])
    img = render_maze(task, True, STYLE, path_cells=half)
    assert set(detect_solution(img, task, CFG, STYLE)) == set(half)


def test_detect_queen_ground_truth():
    task = build_queen_task(6, seed=1)
    gt = render_queens(task, True, STYLE)
    assert set(detect_solution(gt, task, CFG, STYLE)) == set(task.goal_cells)


def test_detect_resolution_mismatch():
    task = build_maze_task("square", 3, "dfs_backtracker", seed=1)
    with pytest.raises(EvaluationError):
        detect_solution(np.zeros((64, 64, 3), np.uint8), task, CFG, STYLE)


# ---------------------------------------------------------------- alignment


def test_align_noop():
    img = np.zeros((512, 512, 3), np.uint8)
    assert align_candidate(img, 512) is img


def test_align_solid_color():
    img = np.full((1024, 1024, 3), (10, 200, 30), np.uint8)
    out = align_candidate(img, 512)
    assert out.shape == (512, 512, 3)
    assert (out == (10, 200, 30)).all()


def test_align_downscale_roundtrip_detection():
    big = RenderStyle(resolution=1024)
    task = build_maze_task("square", 6, "dfs_backtracker", seed=2)
    gt_big = render_maze(task, True, big)
    aligned = align_candidate(gt_big, 512)
    assert set(detect_solution(aligned, task, CFG, STYLE)) == set(task.goal_path)


def test_align_rejects_bad_shape():
    with pytest.raises(EvaluationError):
        align_candidate(np.zeros((10, 10), np.uint8), 512)


# ---------------------------------------------------------------- fidelity


def test_fidelity_identity():
    task = build_maze_task("circle", 3, "dfs_backtracker", seed=4)
    gt = render_maze(task, True, STYLE)
    scores = pixel_fidelity(gt, gt, task, STYLE)
    assert scores.mse_in == 0.0 and scores.mse_out == 0.0


def test_fidelity_task_image_only_solution_area_differs():
    task = build_maze_task("square", 4, "dfs_backtracker", seed=4)
    gt = render_maze(task, True, STYLE)
    plain = render_maze(task, False, STYLE)
    scores = pixel_fidelity(plain, gt, task, STYLE)
    assert scores.mse_in > 0.0
    assert scores.mse_out == 0.0


def test_fidelity_black_cell_matches_pixel_loop_oracle():
    task = build_maze_task("square", 3, "dfs_backtracker", seed=5)
    gt = render_maze(task, True, STYLE)
    from visplan.render import assets_for_graph

    assets = assets_for_graph(task.graph, STYLE)
    wrong = next(c for c in task.graph.cells if c not in task.goal_path)
    candidate = gt.copy()
    flat = candidate.reshape(-1, 3)
    flat[assets.cells[wrong].interior_idx] = (0, 0, 0)

    scores = pixel_fidelity(candidate, gt, task, STYLE)

    # Independent per-pixel accumulation over the full canvas.
    in_mask = np.zeros(512 * 512, dtype=bool)
    for cid in goal_cells_of(task):
        in_mask[assets.cells[cid].full_idx] = True
    total_in = total_out = 0.0
    cand_flat = candidate.reshape(-1, 3).astype(float)
    gt_flat = gt.reshape(-1, 3).astype(float)
    for px in range(512 * 512):
        d = ((cand_flat[px] - gt_flat[px]) / 255.0) ** 2
        if in_mask[px]:
            total_in += d.mean()
        else:
            total_out += d.mean()
    assert scores.mse_in == pytest.approx(total_in / in_mask.sum() * 100)
    assert scores.mse_out == pytest.approx(total_out / (~in_mask).sum() * 100)
    assert scores.mse_in == 0.0
    assert scores.mse_out > 0.0


def test_fidelity_resolution_mismatch():
    task = build_maze_task("square", 3, "dfs_backtracker", seed=5)
    gt = render_maze(task, True, STYLE)
    with pytest.raises(EvaluationError):
        pixel_fidelity(np.zeros((256, 256, 3), np.uint8), gt, task, STYLE)


# ---------------------------------------------------------------- aggregate


def test_aggregate_frozen_example():
    records = []
    for i, ok in enumerate([True, False, False, False, False], start=1):
        records.append(make_record("t1", i, ok))
    for i in range(1, 6):
        records.append(make_record("t2", i, False))
    report = aggregate(records, k=5)
    assert report.pass_at_1 == pytest.approx(0.5)
    assert report.pass_at_k_mean == pytest.approx(0.1)
    assert report.pass_at_k_any == pytest.approx(0.5)


def test_aggregate_saturation():
    records = [
        make_record(t, i, True) for t in ("a", "b") for i in range(1, 6)
    ]
    report = aggregate(records, k=5)
    assert report.pass_at_1 == report.pass_at_k_mean == report.pass_at_k_any == 1.0


def test_aggregate_k1_equals_pass1():
    records = [make_record("a", 1, True), make_record("b", 1, False)]
    report = aggregate(records, k=1)
    assert report.pass_at_1 == report.pass_at_k_mean == pytest.approx(0.5)


def test_aggregate_random_matrices_properties():
    rng = _rng(5)
    for _ in range(1000):
        tasks = int(rng.integers(1, 6))
        k = int(rng.integers(1, 6))
        matrix = rng.random((tasks, k)) < 0.4
        records = [
            make_record(f"t{t}", i + 1, bool(matrix[t, i]))
            for t in range(tasks)
            for i in range(k)
        ]
        report = aggregate(records, k=k)
        # Direct enumeration oracle.
        assert report.pass_at_1 == pytest.approx(matrix[:, 0].mean())
        assert report.pass_at_k_mean == pytest.approx(matrix[:, :k].mean())
        assert report.pass_at_k_any == pytest.approx(matrix[:, :k].any(axis=1).mean())
        assert report.pass_at_k_any >= report.pass_at_1 >= 0.0
        assert report.pass_at_k_any >= report.pass_at_k_mean


def test_pass5_mean_can_fall_below_pass1():
    # 350 tasks: 51 succeed on the first round only, and 199 extra
    # successes spread over later rounds elsewhere; mean-of-5 lands below
    # pass@1 (the published-table pattern), while any-of-5 cannot.
    records = []
    extra = 199
    for t in range(350):
        for i in range(1, 6):
            if t < 51:
                ok = i == 1
            else:
                ok = i > 1 and extra > 0
                if ok:
                    extra -= 1
            records.append(make_record(f"t{t:03d}", i, ok))
    report = aggregate(records, k=5)
    assert report.pass_at_1 == pytest.approx(51 / 350)          # 14.57%
    assert report.pass_at_k_mean == pytest.approx(250 / 1750)   # 14.29%
    assert report.pass_at_k_mean < report.pass_at_1
    assert report.pass_at_k_any >= report.pass_at_1


def test_aggregate_missing_samples():
    with pytest.raises(MissingSamplesError):
        aggregate([make_record("a", 1, True)], k=2)
    with pytest.raises(MissingSamplesError):
        aggregate([], k=1)


def test_aggregate_duplicate_sample():
    with pytest.raises(EvaluationError):
        aggregate([make_record("a", 1, True), make_record("a", 1, True)], k=1)


# ---------------------------------------------------------------- records io


def test_records_roundtrip(tmp_path):
    records = [make_record("a", 1, True), make_record("b", 1, False)]
    path = tmp_path / "records.jsonl"
    write_records(path, records)
    assert read_records(path) == records


def test_report_formatting():
    records = [make_record("maze-x", i, i == 1) for i in range(1, 6)]
    report = aggregate(records, k=5)
    text = format_report_table({"maze": report})
    assert "Pass@1" in text and "maze" in text
    csv = format_report_csv({"maze": report})
    assert csv.splitlines()[1].startswith("maze,5,1,5,")

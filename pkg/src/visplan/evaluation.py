"""Rule-based scoring of candidate solution images.

A candidate is scored purely from pixels: cells whose interiors carry
enough target-colored paint count as detected, the detected set is
compared with the goal at the cell level (coverage / violation / pass),
and pixel fidelity is the mean squared error split into the goal-solution
area and everything else.  Detection tolerances exist because model
outputs drift in hue; all thresholds live in DetectionConfig and are
recorded alongside results.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np
from PIL import Image

from .maze import MazeTask
from .queen import QueenTask
from .render import RGB, RenderStyle, assets_for_graph
from .geometry import GeometryKind, build_cell_graph

Task = Union[MazeTask, QueenTask]


class EvaluationError(ValueError):
    pass


class MissingSamplesError(EvaluationError):
    """A task lacks the sample indices required for aggregation."""


@dataclass(frozen=True)
class DetectionConfig:
    color_tolerance: int = 60          # per-channel max distance
    theta_path: float = 0.05           # interior fraction for maze path cells
    theta_queen: float = 0.15          # window fraction for queen cells
    interior_erosion: Optional[float] = None  # px; None: the wall stroke

    def __post_init__(self) -> None:
        if not 0 < self.color_tolerance < 128:
            raise EvaluationError("color tolerance must be in (0, 128)")
        for theta in (self.theta_path, self.theta_queen):
            if not 0.0 < theta < 1.0:
                raise EvaluationError("cell thresholds must be in (0, 1)")

    def to_dict(self) -> dict:
        return {
            "color_tolerance": self.color_tolerance,
            "theta_path": self.theta_path,
            "theta_queen": self.theta_queen,
            "interior_erosion": self.interior_erosion,
        }


@dataclass(frozen=True)
class ValidityScores:
    coverage: float
    violation: float
    pass_score: float
    success: bool


@dataclass(frozen=True)
class FidelityScores:
    mse_in: float
    mse_out: float


@dataclass(frozen=True)
class SampleRecord:
    task_id: str
    sample_index: int
    detected: tuple[int, ...]
    validity: ValidityScores
    fidelity: FidelityScores
    latency: float
    candidate_digest: str
    error: Optional[str] = None

    def to_json_line(self) -> str:
        return json.dumps(
            {
                "task_id": self.task_id,
                "sample_index": self.sample_index,
                "detected": list(self.detected),
                "coverage": self.validity.coverage,
                "violation": self.validity.violation,
                "pass": self.validity.pass_score,
                "success": self.validity.success,
                "mse_in": self.fidelity.mse_in,
                "mse_out": self.fidelity.mse_out,
                "latency": self.latency,
                "candidate_digest": self.candidate_digest,
                "error": self.error,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json_line(cls, line: str) -> "SampleRecord":
        d = json.loads(line)
        return cls(
            task_id=d["task_id"],
            sample_index=d["sample_index"],
            detected=tuple(d["detected"]),
            validity=ValidityScores(
                coverage=d["coverage"],
                violation=d["violation"],
                pass_score=d["pass"],
                success=d["success"],
            ),
            fidelity=FidelityScores(mse_in=d["mse_in"], mse_out=d["mse_out"]),
            latency=d["latency"],
            candidate_digest=d["candidate_digest"],
            error=d.get("error"),
        )


def image_digest(image_or_bytes) -> str:
    if isinstance(image_or_bytes, bytes):
        return hashlib.sha256(image_or_bytes).hexdigest()
    arr = np.ascontiguousarray(image_or_bytes)
    return hashlib.sha256(arr.tobytes()).hexdigest()


def align_candidate(candidate: np.ndarray, reference_resolution: int) -> np.ndarray:
    """Bilinear-resize a candidate to the reference square resolution."""
    if candidate.ndim != 3 or candidate.shape[2] != 3:
        raise EvaluationError(f"expected an RGB image, got shape {candidate.shape}")
    h, w = candidate.shape[:2]
    if h <= 0 or w <= 0 or reference_resolution <= 0:
        raise EvaluationError("image dimensions must be positive")
    if (h, w) == (reference_resolution, reference_resolution):
        return candidate
    im = Image.fromarray(candidate, "RGB").resize(
        (reference_resolution, reference_resolution), Image.BILINEAR
    )
    return np.asarray(im)


def _near_color(flat: np.ndarray, color: RGB, tolerance: int) -> np.ndarray:
    return (
        np.abs(flat.astype(np.int16) - np.asarray(color, dtype=np.int16)).max(axis=1)
        <= tolerance
    )


def _task_graph(task: Task, style: RenderStyle):
    if isinstance(task, MazeTask):
        return task.graph
    return build_cell_graph(GeometryKind.SQUARE, task.n, style.margin)


def detect_solution(
    candidate: np.ndarray,
    task: Task,
    cfg: DetectionConfig = DetectionConfig(),
    style: RenderStyle = RenderStyle(),
) -> tuple[int, ...]:
    """Cells whose pixels carry the solution paint, as a sorted tuple.

    Maze cells count the path-colored fraction of their eroded interiors
    (start/end marker pixels leave the denominator); queen cells count the
    queen-colored fraction of their central sub-window.

    Marker cells are judged on their central window (intersected with the
    eroded interior) against half the path threshold: the path terminates
    at their center, so even a perfect render paints only a center-to-wall
    stub, half the footprint of a through-going chord, and on wide cells
    the stub occupies a sliver of the full interior.
    """
    res = style.resolution
    if candidate.shape[:2] != (res, res):
        raise EvaluationError(
            f"candidate is {candidate.shape[1]}x{candidate.shape[0]}, "
            f"task resolution is {res}; align it first"
        )
    graph = _task_graph(task, style)
    erosion = style.wall_stroke if cfg.interior_erosion is None else cfg.interior_erosion
    assets = assets_for_graph(graph, style, erosion)
    flat = candidate.reshape(-1, 3)

    detected = []
    if isinstance(task, MazeTask):
        near_path = _near_color(flat, style.path_color, cfg.color_tolerance)
        near_marker = _near_color(flat, style.start_color, cfg.color_tolerance)
        if style.end_color != style.start_color:
            near_marker |= _near_color(flat, style.end_color, cfg.color_tolerance)
        for cid in graph.cells:
            cell = assets.cells[cid]
            theta = cfg.theta_path
            if cid in (task.start, task.end):
                idx = np.intersect1d(cell.window_idx, cell.interior_idx)
                idx = idx[~near_marker[idx]]
                theta = cfg.theta_path / 2.0
            else:
                idx = cell.interior_idx
            if idx.size == 0:
                continue
            if near_path[idx].mean() >= theta:
                detected.append(cid)
    else:
        near_queen = _near_color(flat, style.queen_color, cfg.color_tolerance)
        for cid in graph.cells:
            idx = assets.cells[cid].window_idx
            if idx.size and near_queen[idx].mean() >= cfg.theta_queen:
                detected.append(cid)
    return tuple(detected)


def logical_validity(
    detected: Iterable[int], goal: Iterable[int]
) -> ValidityScores:
    """Coverage, violation, and pass of a detected cell set against the goal."""
    detected_set = set(detected)
    goal_set = set(goal)
    if not goal_set:
        raise EvaluationError("goal solution is empty; task is corrupt")
    coverage = len(detected_set & goal_set) / len(goal_set)
    violation = (
        len(detected_set - goal_set) / len(detected_set) if detected_set else 0.0
    )
    pass_score = max(0.0, coverage - violation)
    success = coverage == 1.0 and violation == 0.0
    return ValidityScores(
        coverage=coverage,
        violation=violation,
        pass_score=pass_score,
        success=success,
    )


def goal_cells_of(task: Task) -> tuple[int, ...]:
    if isinstance(task, MazeTask):
        return tuple(task.goal_path)
    return tuple(sorted(task.goal_cells))


def pixel_fidelity(
    candidate: np.ndarray,
    ground_truth: np.ndarray,
    task: Task,
    style: RenderStyle = RenderStyle(),
) -> FidelityScores:
    """MSE over normalized channels, split by goal-solution cell areas and
    reported x100."""
    if candidate.shape != ground_truth.shape:
        raise EvaluationError(
            f"resolution mismatch: {candidate.shape} vs {ground_truth.shape}"
        )
    graph = _task_graph(task, style)
    assets = assets_for_graph(graph, style)
    res = style.resolution
    in_mask = np.zeros(res * res, dtype=bool)
    for cid in goal_cells_of(task):
        in_mask[assets.cells[cid].full_idx] = True

    diff = (candidate.astype(np.float64) - ground_truth.astype(np.float64)) / 255.0
    per_pixel = (diff * diff).mean(axis=2).reshape(-1)
    mse_in = float(per_pixel[in_mask].mean()) * 100.0
    mse_out = float(per_pixel[~in_mask].mean()) * 100.0
    return FidelityScores(mse_in=mse_in, mse_out=mse_out)


def evaluate_candidate(
    candidate: np.ndarray,
    task: Task,
    ground_truth: np.ndarray,
    sample_index: int,
    latency: float = 0.0,
    cfg: DetectionConfig = DetectionConfig(),
    style: RenderStyle = RenderStyle(),
    candidate_digest: Optional[str] = None,
    error: Optional[str] = None,
) -> SampleRecord:
    aligned = align_candidate(candidate, style.resolution)
    detected = detect_solution(aligned, task, cfg, style)
    validity = logical_validity(detected, goal_cells_of(task))
    fidelity = pixel_fidelity(aligned, ground_truth, task, style)
    return SampleRecord(
        task_id=task.task_id,
        sample_index=sample_index,
        detected=detected,
        validity=validity,
        fidelity=fidelity,
        latency=latency,
        candidate_digest=candidate_digest or image_digest(candidate),
        error=error,
    )


# --------------------------------------------------------------------------
# Aggregation.


@dataclass(frozen=True)
class BenchmarkReport:
    k: int
    task_count: int
    sample_count: int
    pass_at_1: float
    pass_at_k_mean: float
    pass_at_k_any: float
    mean_coverage: float
    mean_violation: float
    mean_pass: float
    mean_mse_in: float
    mean_mse_out: float

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "task_count": self.task_count,
            "sample_count": self.sample_count,
            "pass_at_1": self.pass_at_1,
            "pass_at_k_mean": self.pass_at_k_mean,
            "pass_at_k_any": self.pass_at_k_any,
            "mean_coverage": self.mean_coverage,
            "mean_violation": self.mean_violation,
            "mean_pass": self.mean_pass,
            "mean_mse_in": self.mean_mse_in,
            "mean_mse_out": self.mean_mse_out,
        }


def aggregate(records: Sequence[SampleRecord], k: int) -> BenchmarkReport:
    """Aggregate per-sample records into the benchmark score set.

    pass@1 uses each task's first sample; pass@k_mean averages success over
    the first k samples (and can therefore fall below pass@1); pass@k_any
    counts a task as solved if any of its first k samples succeeded.
    """
    if k < 1:
        raise EvaluationError("k must be >= 1")
    by_task: dict[str, dict[int, SampleRecord]] = {}
    for rec in records:
        by_task.setdefault(rec.task_id, {})
        if rec.sample_index in by_task[rec.task_id]:
            raise EvaluationError(
                f"duplicate sample {rec.sample_index} for task {rec.task_id}"
            )
        by_task[rec.task_id][rec.sample_index] = rec
    if not by_task:
        raise MissingSamplesError("no records to aggregate")
    for task_id, samples in by_task.items():
        missing = [i for i in range(1, k + 1) if i not in samples]
        if missing:
            raise MissingSamplesError(
                f"task {task_id} is missing sample indices {missing}"
            )

    first = [samples[1].validity.success for samples in by_task.values()]
    mean_k = [
        sum(samples[i].validity.success for i in range(1, k + 1)) / k
        for samples in by_task.values()
    ]
    any_k = [
        any(samples[i].validity.success for i in range(1, k + 1))
        for samples in by_task.values()
    ]
    all_records = [rec for samples in by_task.values() for rec in samples.values()]
    return BenchmarkReport(
        k=k,
        task_count=len(by_task),
        sample_count=len(all_records),
        pass_at_1=float(np.mean(first)),
        pass_at_k_mean=float(np.mean(mean_k)),
        pass_at_k_any=float(np.mean(any_k)),
        mean_coverage=float(np.mean([r.validity.coverage for r in all_records])),
        mean_violation=float(np.mean([r.validity.violation for r in all_records])),
        mean_pass=float(np.mean([r.validity.pass_score for r in all_records])),
        mean_mse_in=float(np.mean([r.fidelity.mse_in for r in all_records])),
        mean_mse_out=float(np.mean([r.fidelity.mse_out for r in all_records])),
    )


# --------------------------------------------------------------------------
# Records and report serialization.


def write_records(path, records: Sequence[SampleRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(rec.to_json_line() + "\n")


def read_records(path) -> list[SampleRecord]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(SampleRecord.from_json_line(line))
    return out


REPORT_COLUMNS = [
    ("Violation", "mean_violation", 100.0),
    ("Coverage", "mean_coverage", 100.0),
    ("MSE In", "mean_mse_in", 1.0),
    ("MSE Out", "mean_mse_out", 1.0),
    ("Pass@1", "pass_at_1", 100.0),
]


def format_report_table(reports: dict[str, BenchmarkReport]) -> str:
    """Plain-text summary table, one row per task kind."""
    if not reports:
        return "(no records)\n"
    k = max(r.k for r in reports.values())
    columns = REPORT_COLUMNS + [(f"Pass@{k}", "pass_at_k_mean", 100.0),
                                (f"Pass@{k} (any)", "pass_at_k_any", 100.0)]
    header = ["Task"] + [name for name, _, _ in columns]
    rows = []
    for kind in sorted(reports):
        rep = reports[kind]
        row = [kind]
        for _, attr, scale in columns:
            row.append(f"{getattr(rep, attr) * scale:.2f}")
        rows.append(row)
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for row in rows:
        lines.append("  ".join(v.ljust(w) for v, w in zip(row, widths)))
    return "\n".join(lines) + "\n"


def format_report_csv(reports: dict[str, BenchmarkReport]) -> str:
    lines = [
        "kind,k,task_count,sample_count,violation,coverage,mse_in,mse_out,"
        "pass_at_1,pass_at_k_mean,pass_at_k_any"
    ]
    for kind in sorted(reports):
        r = reports[kind]
        lines.append(
            f"{kind},{r.k},{r.task_count},{r.sample_count},"
            f"{r.mean_violation * 100:.4f},{r.mean_coverage * 100:.4f},"
            f"{r.mean_mse_in:.4f},{r.mean_mse_out:.4f},"
            f"{r.pass_at_1 * 100:.4f},{r.pass_at_k_mean * 100:.4f},"
            f"{r.pass_at_k_any * 100:.4f}"
        )
    return "\n".join(lines) + "\n"

"""Reproducible benchmark datasets: planning, building, verification.

A dataset is fully determined by its config: per-task seeds are derived
from the seed root and the task's position in the plan, so rebuilding a
config reproduces every file bit-exactly, and the manifest's global digest
certifies it.  The manifest stores goal solutions explicitly so scoring a
candidate never re-runs generation.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from hashlib import sha256
from pathlib import Path
from typing import Iterable, Optional, Union

from . import __version__
from .geometry import GeometryKind, build_cell_graph
from .maze import GrowthKind, Maze, MazeTask, build_maze_task, child_seed
from .queen import QueenTask, RegionMap, build_queen_task, check_placement
from .render import RenderStyle, encode_png, load_image, render_maze, render_queens
from .evaluation import (
    DetectionConfig,
    detect_solution,
    goal_cells_of,
    logical_validity,
    pixel_fidelity,
)

SCHEMA_VERSION = 1

MANIFEST_KEYS = {
    "schema_version",
    "toolkit_version",
    "name",
    "config",
    "style",
    "conventions",
    "tasks",
    "global_digest",
}

CONVENTIONS = {
    "mse": "mean squared error over [0,1] channel values, averaged over "
           "channels and pixels, reported x100",
    "pass_at_k": "mean success over the first k samples; the monotone "
                 "any-of-k variant is reported alongside",
    "success": "exact cell-set match between detected and goal solutions",
}


class DatasetError(RuntimeError):
    pass


class ManifestError(DatasetError):
    pass


@dataclass(frozen=True)
class MazeGroup:
    geometry: GeometryKind
    scale: int
    dfs_count: int
    bfs_count: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "geometry", GeometryKind(self.geometry))


@dataclass(frozen=True)
class QueenGroup:
    n: int
    count: int


@dataclass(frozen=True)
class BenchmarkConfig:
    name: str
    maze_groups: tuple[MazeGroup, ...] = ()
    queen_groups: tuple[QueenGroup, ...] = ()
    seed_root: int = 0
    require_unique: bool = True
    style: RenderStyle = RenderStyle()

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "maze_groups": [
                {
                    "geometry": g.geometry.value,
                    "scale": g.scale,
                    "dfs_count": g.dfs_count,
                    "bfs_count": g.bfs_count,
                }
                for g in self.maze_groups
            ],
            "queen_groups": [
                {"n": g.n, "count": g.count} for g in self.queen_groups
            ],
            "seed_root": self.seed_root,
            "require_unique": self.require_unique,
            "style": self.style.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BenchmarkConfig":
        return cls(
            name=data["name"],
            maze_groups=tuple(
                MazeGroup(
                    geometry=GeometryKind(g["geometry"]),
                    scale=g["scale"],
                    dfs_count=g["dfs_count"],
                    bfs_count=g["bfs_count"],
                )
                for g in data.get("maze_groups", [])
            ),
            queen_groups=tuple(
                QueenGroup(n=g["n"], count=g["count"])
                for g in data.get("queen_groups", [])
            ),
            seed_root=data.get("seed_root", 0),
            require_unique=data.get("require_unique", True),
            style=RenderStyle.from_dict(data["style"]) if "style" in data else RenderStyle(),
        )


# Geometry order follows the benchmark's task listing convention.
_GEOMETRY_ORDER = (
    GeometryKind.CIRCLE,
    GeometryKind.HEXAGON,
    GeometryKind.SQUARE,
    GeometryKind.TRIANGLE,
)

# Benchmark: 50 tasks per (geometry, scale) split across both growth
# strategies over scales 3..16, and 50 queen puzzles per scale 4..10.
_EVAL_MAZE_SCALES = range(3, 17)
_EVAL_QUEEN_SCALES = range(4, 11)


def preset_config(name: str, seed_root: int = 0, style: Optional[RenderStyle] = None) -> BenchmarkConfig:
    style = style or RenderStyle()
    if name == "eval":
        return BenchmarkConfig(
            name="eval",
            maze_groups=tuple(
                MazeGroup(geom, scale, 25, 25)
                for geom in _GEOMETRY_ORDER
                for scale in _EVAL_MAZE_SCALES
            ),
            queen_groups=tuple(QueenGroup(n, 50) for n in _EVAL_QUEEN_SCALES),
            seed_root=seed_root,
            require_unique=True,
            style=style,
        )
    if name == "train-basic":
        # Simplest-scale training split: 800 per geometry plus 800 4-Queens.
        return BenchmarkConfig(
            name="train-basic",
            maze_groups=tuple(
                MazeGroup(geom, 3, 400, 400) for geom in _GEOMETRY_ORDER
            ),
            queen_groups=(QueenGroup(4, 800),),
            seed_root=seed_root,
            require_unique=True,
            style=style,
        )
    if name == "train-8x8":
        return BenchmarkConfig(
            name="train-8x8",
            maze_groups=tuple(
                MazeGroup(geom, 8, 400, 400) for geom in _GEOMETRY_ORDER
            ),
            queen_groups=(QueenGroup(7, 800),),
            seed_root=seed_root,
            require_unique=True,
            style=style,
        )
    if name == "study":
        # Human-study assignment: hexagon mazes and queen boards over three
        # difficulty steps, four instances per step.
        return BenchmarkConfig(
            name="study",
            maze_groups=tuple(
                MazeGroup(GeometryKind.HEXAGON, scale, 2, 2)
                for scale in (8, 16, 24)
            ),
            queen_groups=tuple(QueenGroup(n, 4) for n in (4, 7, 10)),
            seed_root=seed_root,
            require_unique=True,
            style=style,
        )
    raise DatasetError(f"unknown preset {name!r}")


PRESETS = ("eval", "train-basic", "train-8x8", "study")


@dataclass(frozen=True)
class TaskPlan:
    kind: str  # "maze" | "queen"
    seed: int
    index: int
    geometry: Optional[GeometryKind] = None
    scale: Optional[int] = None
    growth: Optional[GrowthKind] = None
    n: Optional[int] = None


def plan_tasks(config: BenchmarkConfig) -> list[TaskPlan]:
    """Enumerate the dataset's tasks with their derived seeds, in manifest
    order.  Pure bookkeeping; nothing is generated."""
    plans: list[TaskPlan] = []
    for group in config.maze_groups:
        for growth, count in (
            (GrowthKind.DFS_BACKTRACKER, group.dfs_count),
            (GrowthKind.BFS_GROWTH, group.bfs_count),
        ):
            for i in range(count):
                seed = child_seed(
                    config.seed_root,
                    f"maze|{group.geometry.value}|{group.scale}|{growth.value}|{i}",
                )
                plans.append(
                    TaskPlan(
                        kind="maze",
                        seed=seed,
                        index=i,
                        geometry=group.geometry,
                        scale=group.scale,
                        growth=growth,
                    )
                )
    for group in config.queen_groups:
        for i in range(group.count):
            seed = child_seed(config.seed_root, f"queen|{group.n}|{i}")
            plans.append(TaskPlan(kind="queen", seed=seed, index=i, n=group.n))
    return plans


def _task_rel_dir(plan: TaskPlan) -> str:
    if plan.kind == "maze":
        return f"maze/{plan.geometry.value}/{plan.scale:02d}"
    return f"queen/{plan.n:02d}"


def _build_one(plan: TaskPlan, config: BenchmarkConfig, out_dir: Path) -> dict:
    style = config.style
    rel_dir = _task_rel_dir(plan)
    target = out_dir / rel_dir
    target.mkdir(parents=True, exist_ok=True)

    if plan.kind == "maze":
        task = build_maze_task(plan.geometry, plan.scale, plan.growth, plan.seed,
                               margin=style.margin)
        task_png = encode_png(render_maze(task, False, style))
        gt_png = encode_png(render_maze(task, True, style))
        descriptor = {
            "task_id": task.task_id,
            "kind": "maze",
            "geometry": plan.geometry.value,
            "scale": plan.scale,
            "growth": plan.growth.value,
            "seed": plan.seed,
            "start": task.start,
            "end": task.end,
            "goal": list(task.goal_path),
        }
    else:
        task = build_queen_task(
            plan.n, plan.seed, require_unique=config.require_unique
        )
        task_png = encode_png(render_queens(task, False, style))
        gt_png = encode_png(render_queens(task, True, style))
        descriptor = {
            "task_id": task.task_id,
            "kind": "queen",
            "n": plan.n,
            "seed": plan.seed,
            "columns": list(task.columns),
            "goal": sorted(task.goal_cells),
            "solution_count": task.solution_count,
            "region_of": list(task.regions.region_of),
        }

    files = {
        "task": f"{rel_dir}/{task.task_id}.task.png",
        "gt": f"{rel_dir}/{task.task_id}.gt.png",
    }
    (out_dir / files["task"]).write_bytes(task_png)
    (out_dir / files["gt"]).write_bytes(gt_png)
    descriptor["files"] = files
    descriptor["digests"] = {
        "task": sha256(task_png).hexdigest(),
        "gt": sha256(gt_png).hexdigest(),
    }
    return descriptor


def _build_chunk(args: tuple) -> list[dict]:
    plans, config_dict, out_dir = args
    config = BenchmarkConfig.from_dict(config_dict)
    return [_build_one(plan, config, Path(out_dir)) for plan in plans]


def global_digest(tasks: list[dict]) -> str:
    canonical = json.dumps(tasks, sort_keys=True, separators=(",", ":"))
    return sha256(canonical.encode()).hexdigest()


def build_benchmark(
    config: BenchmarkConfig,
    out_dir: Union[str, Path],
    workers: Optional[int] = None,
    progress: bool = False,
) -> dict:
    """Generate every task, write image pairs and the manifest, and return
    the manifest dict.  Deterministic for a fixed config, regardless of
    worker count."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    plans = plan_tasks(config)
    if workers is None:
        workers = min(os.cpu_count() or 1, 8)

    # Chunk by group so each worker reuses its cached raster assets.
    chunks: dict[str, list[TaskPlan]] = {}
    for plan in plans:
        chunks.setdefault(_task_rel_dir(plan), []).append(plan)
    chunk_list = list(chunks.values())

    descriptors_by_id: dict[tuple, dict] = {}
    if workers <= 1 or len(plans) < 32:
        results = [_build_chunk((c, config.to_dict(), str(out))) for c in chunk_list]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(
                pool.map(
                    _build_chunk,
                    [(c, config.to_dict(), str(out)) for c in chunk_list],
                )
            )
    for chunk, descs in zip(chunk_list, results):
        for plan, desc in zip(chunk, descs):
            descriptors_by_id[(plan.kind, plan.seed, plan.index)] = desc
        if progress:
            print(f"built {_task_rel_dir(chunk[0])} ({len(chunk)} tasks)")

    tasks = [descriptors_by_id[(p.kind, p.seed, p.index)] for p in plans]
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "toolkit_version": __version__,
        "name": config.name,
        "config": config.to_dict(),
        "style": config.style.to_dict(),
        "conventions": CONVENTIONS,
        "tasks": tasks,
        "global_digest": global_digest(tasks),
    }
    manifest_path = out / "manifest.json"
    tmp = manifest_path.with_suffix(".json.tmp")
    tmp.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    tmp.replace(manifest_path)
    manifest["_path"] = str(manifest_path)
    return manifest


def load_manifest(path: Union[str, Path]) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    try:
        manifest = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    if not isinstance(manifest, dict):
        raise ManifestError("manifest is not an object")
    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise ManifestError(
            f"unsupported schema_version {manifest.get('schema_version')!r}; "
            f"this toolkit reads version {SCHEMA_VERSION}"
        )
    unknown = set(manifest) - MANIFEST_KEYS
    if unknown:
        raise ManifestError(f"manifest carries unknown fields: {sorted(unknown)}")
    manifest["_path"] = str(path)
    return manifest


def manifest_root(manifest: dict) -> Path:
    return Path(manifest["_path"]).parent


def manifest_style(manifest: dict) -> RenderStyle:
    return RenderStyle.from_dict(manifest["style"])


def scoring_task(descriptor: dict, style: RenderStyle) -> Union[MazeTask, QueenTask]:
    """Rehydrate a task from its manifest descriptor, for scoring only.

    The maze variant carries no open edges (the manifest stores goals, not
    wall sets); it supports detection, validity, and fidelity, but not
    re-rendering the maze itself.
    """
    if descriptor["kind"] == "maze":
        graph = build_cell_graph(
            GeometryKind(descriptor["geometry"]), descriptor["scale"], style.margin
        )
        maze = Maze(
            graph=graph,
            open_edges=frozenset(),
            growth=GrowthKind(descriptor["growth"]),
            seed=descriptor["seed"],
        )
        return MazeTask(
            maze=maze,
            start=descriptor["start"],
            end=descriptor["end"],
            goal_path=tuple(descriptor["goal"]),
            task_id=descriptor["task_id"],
        )
    regions = RegionMap(n=descriptor["n"], region_of=tuple(descriptor["region_of"]))
    return QueenTask(
        n=descriptor["n"],
        regions=regions,
        columns=tuple(descriptor["columns"]),
        seed=descriptor["seed"],
        unique=descriptor["solution_count"] == 1,
        solution_count=descriptor["solution_count"],
        task_id=descriptor["task_id"],
    )


def regenerate_task(descriptor: dict, config: BenchmarkConfig):
    if descriptor["kind"] == "maze":
        return build_maze_task(
            GeometryKind(descriptor["geometry"]),
            descriptor["scale"],
            GrowthKind(descriptor["growth"]),
            descriptor["seed"],
            margin=config.style.margin,
        )
    return build_queen_task(
        descriptor["n"], descriptor["seed"], require_unique=config.require_unique
    )


def _closure_chunk(args: tuple) -> list[str]:
    manifest_path, indices, cfg_dict = args
    manifest = load_manifest(manifest_path)
    root = manifest_root(manifest)
    style = manifest_style(manifest)
    cfg = DetectionConfig(**cfg_dict)
    failures = []
    for i in indices:
        desc = manifest["tasks"][i]
        task = scoring_task(desc, style)
        gt = load_image(root / desc["files"]["gt"])
        detected = detect_solution(gt, task, cfg, style)
        validity = logical_validity(detected, goal_cells_of(task))
        fidelity = pixel_fidelity(gt, gt, task, style)
        perfect = (
            validity.coverage == 1.0
            and validity.violation == 0.0
            and validity.pass_score == 1.0
            and validity.success
            and fidelity.mse_in == 0.0
            and fidelity.mse_out == 0.0
        )
        if not perfect:
            failures.append(
                f"{desc['task_id']}: coverage={validity.coverage:.4f} "
                f"violation={validity.violation:.4f}"
            )
    return failures


def closure_sweep(
    path: Union[str, Path],
    cfg: DetectionConfig = DetectionConfig(),
    workers: Optional[int] = None,
) -> tuple[int, list[str]]:
    """Evaluate every task's rendered ground truth against its own goal.

    Returns (task count, failure messages); an empty failure list is the
    evaluator's self-consistency certificate for the dataset.
    """
    manifest = load_manifest(path)
    tasks = manifest["tasks"]
    if workers is None:
        workers = min(os.cpu_count() or 1, 8)
    # Chunk contiguously: manifest order groups tasks by (kind, geometry,
    # scale), which keeps each worker's raster-asset cache warm.
    chunk_size = 64
    chunks = [
        (manifest["_path"], list(range(i, min(i + chunk_size, len(tasks)))),
         cfg.to_dict())
        for i in range(0, len(tasks), chunk_size)
    ]
    if workers <= 1:
        results = [_closure_chunk(c) for c in chunks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_closure_chunk, chunks))
    failures = [f for chunk in results for f in chunk]
    return len(tasks), failures


# --------------------------------------------------------------------------
# Verification.


@dataclass
class VerificationReport:
    checked_tasks: int = 0
    closure_tasks: int = 0
    failures: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def fail(self, message: str) -> None:
        self.failures.append(message)

    def summary(self) -> str:
        status = "OK" if self.ok else f"{len(self.failures)} FAILURES"
        lines = [
            f"verification: {status} "
            f"({self.checked_tasks} tasks checked, "
            f"{self.closure_tasks} closure-evaluated)"
        ]
        lines.extend(f"  - {f}" for f in self.failures)
        return "\n".join(lines)


def _check_maze_structure(descriptor: dict, style: RenderStyle, report: VerificationReport) -> None:
    tid = descriptor["task_id"]
    graph = build_cell_graph(
        GeometryKind(descriptor["geometry"]), descriptor["scale"], style.margin
    )
    goal = descriptor["goal"]
    if not goal or goal[0] != descriptor["start"] or goal[-1] != descriptor["end"]:
        report.fail(f"{tid}: goal path does not join start and end")
        return
    if len(set(goal)) != len(goal):
        report.fail(f"{tid}: goal path repeats a cell")
    adjacency = {frozenset((e.a, e.b)) for e in graph.edges}
    for a, b in zip(goal, goal[1:]):
        if frozenset((a, b)) not in adjacency:
            report.fail(f"{tid}: goal cells {a},{b} are not adjacent")
            return
    if descriptor["geometry"] == "circle":
        if descriptor["start"] != 0 or descriptor["end"] not in graph.boundary:
            report.fail(f"{tid}: circle endpoints must run center to rim")
    else:
        if descriptor["start"] not in graph.boundary or descriptor["end"] not in graph.boundary:
            report.fail(f"{tid}: endpoints are not boundary cells")


def _check_queen_structure(descriptor: dict, report: VerificationReport) -> None:
    tid = descriptor["task_id"]
    n = descriptor["n"]
    try:
        check_placement(n, tuple(descriptor["columns"]))
    except Exception as exc:
        report.fail(f"{tid}: goal placement invalid: {exc}")
        return
    try:
        regions = RegionMap(n=n, region_of=tuple(descriptor["region_of"]))
        regions.validate()
    except Exception as exc:
        report.fail(f"{tid}: region map invalid: {exc}")
        return
    used = set()
    for row, col in enumerate(descriptor["columns"]):
        used.add(regions.region_of[row * n + col])
    if used != set(range(n)):
        report.fail(f"{tid}: goal does not place one queen per region")


def verify_manifest(
    path: Union[str, Path],
    closure_fraction: float = 0.02,
    cfg: DetectionConfig = DetectionConfig(),
) -> VerificationReport:
    """Re-hash files, re-check structural invariants on every task, and
    re-run evaluator closure (plus full regeneration) on a deterministic
    sample of tasks.  Failures are enumerated, never fatal-on-first."""
    report = VerificationReport()
    try:
        manifest = load_manifest(path)
    except ManifestError as exc:
        report.fail(str(exc))
        return report
    root = manifest_root(manifest)
    style = manifest_style(manifest)
    config = BenchmarkConfig.from_dict(manifest["config"])

    tasks = manifest["tasks"]
    if global_digest(tasks) != manifest["global_digest"]:
        report.fail("global digest does not match task descriptors")

    stride = max(1, int(round(1.0 / closure_fraction))) if closure_fraction > 0 else 0
    for i, desc in enumerate(tasks):
        tid = desc["task_id"]
        report.checked_tasks += 1
        for role in ("task", "gt"):
            file_path = root / desc["files"][role]
            if not file_path.exists():
                report.fail(f"{tid}: missing file {desc['files'][role]}")
                continue
            digest = sha256(file_path.read_bytes()).hexdigest()
            if digest != desc["digests"][role]:
                report.fail(f"{tid}: digest mismatch for {desc['files'][role]}")
        if desc["kind"] == "maze":
            _check_maze_structure(desc, style, report)
        else:
            _check_queen_structure(desc, report)

        if stride and i % stride == 0:
            gt_path = root / desc["files"]["gt"]
            if not gt_path.exists():
                continue
            report.closure_tasks += 1
            task = scoring_task(desc, style)
            gt = load_image(gt_path)
            detected = detect_solution(gt, task, cfg, style)
            validity = logical_validity(detected, goal_cells_of(task))
            fidelity = pixel_fidelity(gt, gt, task, style)
            if not validity.success or fidelity.mse_in != 0.0 or fidelity.mse_out != 0.0:
                report.fail(f"{tid}: ground-truth closure failed")
            regenerated = regenerate_task(desc, config)
            if desc["kind"] == "maze":
                if list(regenerated.goal_path) != desc["goal"]:
                    report.fail(f"{tid}: regeneration changed the goal path")
            else:
                if list(regenerated.columns) != desc["columns"]:
                    report.fail(f"{tid}: regeneration changed the goal placement")
    return report

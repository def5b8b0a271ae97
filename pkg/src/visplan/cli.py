"""Command-line surface.

Exit codes: 0 success, 1 usage error, 2 verification failure, 3 external-
service failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .dataset import (
    BenchmarkConfig,
    PRESETS,
    build_benchmark,
    load_manifest,
    manifest_root,
    manifest_style,
    preset_config,
    scoring_task,
    verify_manifest,
)
from .evaluation import (
    DetectionConfig,
    aggregate,
    align_candidate,
    evaluate_candidate,
    format_report_csv,
    format_report_table,
    read_records,
    write_records,
)
from .geometry import GeometryKind
from .maze import GrowthKind, build_maze_task
from .queen import build_queen_task, solve_queens
from .render import RenderStyle, load_image, render_maze, render_queens, save_image

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VERIFICATION = 2
EXIT_EXTERNAL = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _style_from_args(args) -> RenderStyle:
    style = RenderStyle()
    if getattr(args, "resolution", None):
        style = RenderStyle(resolution=args.resolution)
    return style


def _config_from_args(args) -> BenchmarkConfig:
    if args.config:
        data = json.loads(Path(args.config).read_text())
        config = BenchmarkConfig.from_dict(data)
        if args.seed is not None or args.resolution:
            raise SystemExit(
                "use either --config or --preset with --seed/--resolution"
            )
        return config
    config = preset_config(
        args.preset, seed_root=args.seed or 0, style=_style_from_args(args)
    )
    return config


def cmd_gen(args) -> int:
    config = _config_from_args(args)
    manifest = build_benchmark(
        config, args.out, workers=args.workers, progress=not args.quiet
    )
    print(f"dataset '{config.name}': {len(manifest['tasks'])} tasks")
    print(f"global digest: {manifest['global_digest']}")
    return EXIT_OK


def cmd_verify(args) -> int:
    report = verify_manifest(args.manifest, closure_fraction=args.sample_fraction)
    print(report.summary())
    return EXIT_OK if report.ok else EXIT_VERIFICATION


def cmd_solve(args) -> int:
    manifest = load_manifest(args.manifest)
    style = manifest_style(manifest)
    by_id = {d["task_id"]: d for d in manifest["tasks"]}
    desc = by_id.get(args.task_id)
    if desc is None:
        print(f"unknown task {args.task_id}", file=sys.stderr)
        return EXIT_USAGE
    if desc["kind"] == "maze":
        print(json.dumps({"task_id": desc["task_id"], "path": desc["goal"]}))
    else:
        task = scoring_task(desc, style)
        solutions = solve_queens(task.regions)
        print(
            json.dumps(
                {
                    "task_id": desc["task_id"],
                    "columns": desc["columns"],
                    "all_solutions": [list(s) for s in solutions],
                }
            )
        )
    return EXIT_OK


def cmd_render(args) -> int:
    style = _style_from_args(args)
    if args.kind == "maze":
        task = build_maze_task(
            GeometryKind(args.geometry),
            args.scale,
            GrowthKind(args.growth),
            args.seed or 0,
            margin=style.margin,
        )
        image = render_maze(task, args.solution, style)
    else:
        task = build_queen_task(args.scale, args.seed or 0)
        image = render_queens(task, args.solution, style)
    save_image(args.out, image)
    print(f"wrote {args.out} ({task.task_id})")
    return EXIT_OK


def cmd_eval(args) -> int:
    manifest = load_manifest(args.manifest)
    style = manifest_style(manifest)
    root = manifest_root(manifest)
    candidates = Path(args.candidates)
    cfg = DetectionConfig()
    records = []
    missing = 0
    for desc in manifest["tasks"]:
        task = scoring_task(desc, style)
        gt = load_image(root / desc["files"]["gt"])
        for i in range(1, args.k + 1):
            if args.k == 1:
                names = [f"{desc['task_id']}.png", f"{desc['task_id']}.1.png"]
            else:
                names = [f"{desc['task_id']}.{i}.png"]
            path = next((candidates / n for n in names if (candidates / n).exists()), None)
            if path is None:
                missing += 1
                continue
            candidate = align_candidate(load_image(path), style.resolution)
            records.append(
                evaluate_candidate(
                    candidate, task, gt, sample_index=i, cfg=cfg, style=style
                )
            )
    write_records(args.out, records)
    print(f"scored {len(records)} candidates ({missing} missing) -> {args.out}")
    return EXIT_OK


def _records_by_kind(records, manifest):
    kind_of = {d["task_id"]: d["kind"] for d in manifest["tasks"]}
    by_kind = {}
    for rec in records:
        kind = kind_of.get(rec.task_id, rec.task_id.split("-")[0])
        by_kind.setdefault(kind, []).append(rec)
    return by_kind


def cmd_report(args) -> int:
    records = read_records(args.records)
    if not records:
        print("no records", file=sys.stderr)
        return EXIT_USAGE
    if args.manifest:
        manifest = load_manifest(args.manifest)
        by_kind = _records_by_kind(records, manifest)
    else:
        by_kind = {}
        for rec in records:
            by_kind.setdefault(rec.task_id.split("-")[0], []).append(rec)
    reports = {kind: aggregate(recs, args.k) for kind, recs in by_kind.items()}
    print(format_report_table(reports), end="")
    if args.csv:
        Path(args.csv).write_text(format_report_csv(reports))
        print(f"csv -> {args.csv}")
    return EXIT_OK


def _parse_endpoint(spec: str, manifest: dict):
    from . import harness

    if spec.startswith("fixture:"):
        name = spec.split(":", 1)[1]
        if name == "echo":
            return harness.echo_fixture()
        if name == "blank":
            return harness.blank_fixture()
        if name in ("gt", "ground-truth"):
            return harness.ground_truth_fixture(manifest)
        raise SystemExit(f"unknown fixture {name!r} (echo|blank|gt)")
    if spec.startswith(("http://", "https://")):
        return harness.ModelEndpoint(name=spec, transport="http", url=spec)
    if spec.startswith("cmd:"):
        return harness.ModelEndpoint(
            name=spec, transport="local-command",
            command=tuple(spec.split(":", 1)[1].split()),
        )
    raise SystemExit(f"cannot parse endpoint {spec!r}")


def cmd_run(args) -> int:
    from . import harness

    manifest = load_manifest(args.manifest)
    endpoint = _parse_endpoint(args.endpoint, manifest)
    cfg = harness.RunConfig(
        manifest_path=args.manifest,
        endpoint=endpoint,
        out_path=args.out,
        k=args.k,
        cot=args.cot,
        parallelism=args.parallel,
        budget_seconds=args.budget,
        cost_estimate=args.estimate,
        task_limit=args.limit,
    )
    try:
        if args.budget is not None:
            report = harness.budget_run(cfg)
            print(
                json.dumps(
                    {
                        "budget": report.budget,
                        "success_rate": report.success_rate(),
                        "outcomes": [o.__dict__ for o in report.outcomes],
                    },
                    indent=2,
                )
            )
        else:
            reports, _ = harness.run_eval(cfg)
            print(format_report_table(reports), end="")
    except harness.EndpointFailure as exc:
        print(f"endpoint failure: {exc}", file=sys.stderr)
        return EXIT_EXTERNAL
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .server import create_app

    app = create_app(args.manifest, args.sessions, ui_dir=args.ui)
    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="visplan", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="build a benchmark dataset")
    p.add_argument("--preset", choices=PRESETS, default="eval")
    p.add_argument("--config", help="JSON config file (overrides --preset)")
    p.add_argument("--seed", type=int, default=None, help="seed root")
    p.add_argument("--resolution", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("verify", help="verify a dataset against its manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--sample-fraction", type=float, default=0.02)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("solve", help="print oracle solutions for a task")
    p.add_argument("--manifest", required=True)
    p.add_argument("--task-id", required=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("render", help="render a single task to a PNG")
    p.add_argument("--kind", choices=["maze", "queen"], default="maze")
    p.add_argument("--geometry", default="square")
    p.add_argument("--scale", type=int, required=True)
    p.add_argument("--growth", default="dfs_backtracker",
                   choices=[g.value for g in GrowthKind])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--resolution", type=int, default=None)
    p.add_argument("--solution", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("eval", help="score a directory of candidate images")
    p.add_argument("--manifest", required=True)
    p.add_argument("--candidates", required=True)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="aggregate a records file")
    p.add_argument("--records", required=True)
    p.add_argument("--manifest", default=None)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("run", help="run an endpoint over a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--endpoint", required=True,
                   help="http(s)://..., cmd:<argv>, or fixture:{echo|blank|gt}")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--cot", action="store_true")
    p.add_argument("--parallel", type=int, default=2)
    p.add_argument("--out", required=True)
    p.add_argument("--budget", type=float, default=None,
                   help="budget-matched mode: seconds per task")
    p.add_argument("--estimate", type=float, default=None,
                   help="per-sample cost estimate for budget mode")
    p.add_argument("--limit", type=int, default=None,
                   help="only the first N manifest tasks")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("serve", help="serve the human-study API")
    p.add_argument("--manifest", required=True)
    p.add_argument("--sessions", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--ui", default=None, help="static directory for the web UI")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SystemExit:
        raise
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

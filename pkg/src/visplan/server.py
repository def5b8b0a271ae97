"""HTTP API for the timed human study.

Serves tasks from a manifest, accepts drawn solutions as geometry (a
single stroke for mazes, cell clicks for queens), rasterizes them onto
the task image with the manifest's declared colors, and scores them with
the same evaluator as model runs.  Rasterized submissions are stored as
`{task_id}.png`, so any receipt can be re-scored with the `eval` CLI.

The protocol is one continuous attempt per task: the submission schema has
no erase or undo events, and a task accepts exactly one submission.
"""

from __future__ import annotations

import base64
import json
import time
import uuid
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .dataset import load_manifest, manifest_root, manifest_style, scoring_task
from .evaluation import (
    DetectionConfig,
    detect_solution,
    goal_cells_of,
    image_digest,
    logical_validity,
    pixel_fidelity,
)
from .maze import MazeTask
from .render import (
    _disc_idx,
    _paint,
    _paint_polyline,
    assets_for_graph,
    encode_png,
    load_image,
    path_stroke_px,
    save_image,
)


class SessionCreate(BaseModel):
    participant_id: str
    age_group: str = ""
    task_ids: Optional[list[str]] = None
    device_note: str = ""


class Timings(BaseModel):
    shown_ms: float
    draw_started_ms: float
    submitted_ms: float


class Drawing(BaseModel):
    # Maze: one uninterrupted stroke in normalized [0,1] image coordinates.
    stroke: Optional[list[tuple[float, float]]] = None
    # Queen: clicked cells, in click order, irrevocable.
    clicks: Optional[list[int]] = None


class Submission(BaseModel):
    task_id: str
    drawing: Drawing
    timings: Timings
    client_note: str = Field(default="")


def _auto_assignment(manifest: dict, participant_id: str) -> list[str]:
    """One task per (kind, scale) group, rotated by the participant id."""
    groups: dict[tuple, list[str]] = {}
    for desc in manifest["tasks"]:
        key = (desc["kind"], desc.get("scale", desc.get("n")))
        groups.setdefault(key, []).append(desc["task_id"])
    rotation = sum(participant_id.encode()) if participant_id else 0
    return [ids[rotation % len(ids)] for _, ids in sorted(groups.items())]


def create_app(
    manifest_path: str,
    sessions_dir: str,
    detection: DetectionConfig = DetectionConfig(),
    ui_dir: Optional[str] = None,
) -> FastAPI:
    manifest = load_manifest(manifest_path)
    root = manifest_root(manifest)
    style = manifest_style(manifest)
    by_id = {d["task_id"]: d for d in manifest["tasks"]}
    sessions = Path(sessions_dir)
    sessions.mkdir(parents=True, exist_ok=True)
    (sessions / "submissions").mkdir(exist_ok=True)

    app = FastAPI(title="visplan study server")

    def session_path(sid: str) -> Path:
        return sessions / f"{sid}.json"

    def load_session(sid: str) -> dict:
        path = session_path(sid)
        if not path.exists():
            raise HTTPException(status_code=404, detail=f"unknown session {sid}")
        return json.loads(path.read_text())

    def store_session(session: dict) -> None:
        path = session_path(session["session_id"])
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(session, sort_keys=True, indent=2))
        tmp.replace(path)

    @app.post("/session")
    def create_session(body: SessionCreate) -> dict:
        task_ids = body.task_ids or _auto_assignment(manifest, body.participant_id)
        unknown = [t for t in task_ids if t not in by_id]
        if unknown:
            raise HTTPException(status_code=400, detail=f"unknown tasks {unknown}")
        session = {
            "session_id": uuid.uuid4().hex[:12],
            "participant_id": body.participant_id,
            "age_group": body.age_group,
            "device_note": body.device_note,
            "task_ids": task_ids,
            "receipts": {},
            "created_at": time.time(),
        }
        store_session(session)
        return {"session_id": session["session_id"], "task_ids": task_ids}

    @app.get("/session/{sid}/next")
    def next_task(sid: str) -> dict:
        session = load_session(sid)
        for task_id in session["task_ids"]:
            if task_id not in session["receipts"]:
                desc = by_id[task_id]
                image = (root / desc["files"]["task"]).read_bytes()
                return {
                    "done": False,
                    "task_id": task_id,
                    "kind": desc["kind"],
                    "geometry": desc.get("geometry"),
                    "scale": desc.get("scale", desc.get("n")),
                    "resolution": style.resolution,
                    "image_b64": base64.b64encode(image).decode("ascii"),
                }
        return {"done": True}

    @app.get("/task/{task_id}/image")
    def task_image(task_id: str) -> Response:
        desc = by_id.get(task_id)
        if desc is None:
            raise HTTPException(status_code=404, detail=f"unknown task {task_id}")
        data = (root / desc["files"]["task"]).read_bytes()
        return Response(content=data, media_type="image/png")

    @app.post("/session/{sid}/submit")
    def submit(sid: str, body: Submission) -> dict:
        session = load_session(sid)
        task_id = body.task_id
        if task_id not in session["task_ids"]:
            raise HTTPException(status_code=400, detail="task not in session")
        if task_id in session["receipts"]:
            raise HTTPException(status_code=409, detail="task already submitted")
        t = body.timings
        if not (t.submitted_ms >= t.draw_started_ms >= t.shown_ms):
            raise HTTPException(status_code=400, detail="inconsistent timings")

        desc = by_id[task_id]
        task = scoring_task(desc, style)
        base_image = load_image(root / desc["files"]["task"])
        candidate = _rasterize(task, desc, body.drawing, base_image, style)

        submission_file = sessions / "submissions" / sid
        submission_file.mkdir(parents=True, exist_ok=True)
        out_png = submission_file / f"{task_id}.png"
        save_image(out_png, candidate)

        detected = detect_solution(candidate, task, detection, style)
        validity = logical_validity(detected, goal_cells_of(task))
        gt = load_image(root / desc["files"]["gt"])
        fidelity = pixel_fidelity(candidate, gt, task, style)

        receipt = {
            "task_id": task_id,
            "success": validity.success,
            "coverage": validity.coverage,
            "violation": validity.violation,
            "pass": validity.pass_score,
            "mse_in": fidelity.mse_in,
            "mse_out": fidelity.mse_out,
            "think_s": (t.draw_started_ms - t.shown_ms) / 1000.0,
            "draw_s": (t.submitted_ms - t.draw_started_ms) / 1000.0,
            "submission_file": str(out_png.relative_to(sessions)),
            "submission_digest": image_digest(encode_png(candidate)),
            "server_received_at": time.time(),
            "detected": list(detected),
        }
        session["receipts"][task_id] = receipt
        store_session(session)
        return receipt

    @app.get("/session/{sid}/export")
    def export(sid: str) -> dict:
        return load_session(sid)

    if ui_dir:
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app


def _rasterize(task, desc: dict, drawing: Drawing, base_image: np.ndarray, style) -> np.ndarray:
    candidate = base_image.copy()
    res = style.resolution
    if desc["kind"] == "maze":
        stroke = drawing.stroke or []
        if not stroke:
            return candidate
        assert isinstance(task, MazeTask)
        assets = assets_for_graph(task.graph, style)
        centers_px = [(x * res, y * res) for x, y in stroke]
        _paint_polyline(
            candidate, centers_px, path_stroke_px(assets, style) / 2.0,
            style.path_color, res,
        )
        return candidate
    clicks = drawing.clicks or []
    from .geometry import GeometryKind, build_cell_graph

    graph = build_cell_graph(GeometryKind.SQUARE, desc["n"], style.margin)
    assets = assets_for_graph(graph, style)
    for cid in clicks:
        if not 0 <= cid < graph.cell_count:
            raise HTTPException(status_code=400, detail=f"invalid cell {cid}")
        cell = assets.cells[cid]
        _paint(
            candidate,
            _disc_idx(cell.center_px, 0.275 * 2.0 * cell.inradius_px, res),
            style.queen_color,
        )
    return candidate

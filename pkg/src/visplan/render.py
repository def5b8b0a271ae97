"""Deterministic rasterization of tasks and solutions.

Rendering is hard-edged (no anti-aliasing) so that repeated renders are
byte-identical and the evaluator's cell masks classify every pixel
unambiguously.  Cell masks, wall strokes, and marker anchors are derived
once per (geometry, scale, resolution) and cached; the evaluator reuses
the same assets, which is what makes the render -> detect round trip
exact.
"""

from __future__ import annotations

import colorsys
import io
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from PIL import Image

from .geometry import (
    ArcWall,
    CellGraph,
    DEFAULT_MARGIN,
    DEFAULT_RESOLUTION,
    DEFAULT_WALL_STROKE,
    GeometryKind,
    LineWall,
    MIN_EDGE_PIXELS,
    PolygonShape,
    ResolutionError,
    SectorShape,
    TWO_PI,
    build_cell_graph,
)
from .maze import MazeTask, child_seed, _rng
from .queen import QueenTask

RGB = tuple[int, int, int]

# Minimum pairwise max-channel separation required of marker/path colors
# against the background and walls, and reserved around them for palettes.
COLOR_SEPARATION = 96
PALETTE_FLOOR = 32
PALETTE_MAX = 16


class StyleError(ValueError):
    """Render style violates its invariants."""


@dataclass(frozen=True)
class RenderStyle:
    resolution: int = DEFAULT_RESOLUTION
    margin: float = DEFAULT_MARGIN
    background: RGB = (255, 255, 255)
    wall_color: RGB = (110, 110, 110)
    path_color: RGB = (0, 0, 255)
    start_color: RGB = (230, 30, 30)
    end_color: RGB = (230, 30, 30)
    queen_color: RGB = (0, 0, 0)
    wall_stroke: float = DEFAULT_WALL_STROKE
    # None: 40% of the smallest cell in-radius of the task's graph.
    path_stroke: Optional[float] = None
    region_border_scale: float = 2.0
    region_palette_seed: int = 0

    def validate(self) -> None:
        if self.resolution < 128:
            raise StyleError(f"resolution must be >= 128, got {self.resolution}")
        if self.wall_stroke < 2.0:
            raise StyleError("wall stroke must be at least 2 px")
        if self.path_stroke is not None and self.path_stroke < 2.0:
            raise StyleError("path stroke must be at least 2 px")
        for name, color in (
            ("path", self.path_color),
            ("start", self.start_color),
            ("end", self.end_color),
            ("queen", self.queen_color),
        ):
            for other_name, other in (
                ("background", self.background),
                ("wall", self.wall_color),
            ):
                if color_distance(color, other) < COLOR_SEPARATION:
                    raise StyleError(
                        f"{name} color {color} is not distinguishable from "
                        f"{other_name} {other}"
                    )

    def to_dict(self) -> dict:
        return {
            "resolution": self.resolution,
            "margin": self.margin,
            "background": list(self.background),
            "wall_color": list(self.wall_color),
            "path_color": list(self.path_color),
            "start_color": list(self.start_color),
            "end_color": list(self.end_color),
            "queen_color": list(self.queen_color),
            "wall_stroke": self.wall_stroke,
            "path_stroke": self.path_stroke,
            "region_border_scale": self.region_border_scale,
            "region_palette_seed": self.region_palette_seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RenderStyle":
        kwargs = dict(data)
        for key in (
            "background",
            "wall_color",
            "path_color",
            "start_color",
            "end_color",
            "queen_color",
        ):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


def color_distance(a: RGB, b: RGB) -> int:
    return max(abs(x - y) for x, y in zip(a, b))


# Colors the palette must keep clear of (the default marker/path/queen
# colors); custom styles with unusual colors should re-check contrast.
_PALETTE_RESERVED: tuple[RGB, ...] = ((0, 0, 255), (230, 30, 30), (0, 0, 0))


def region_palette(n: int, seed: int = 0) -> list[RGB]:
    """n pastel fills, evenly spaced in hue with a seeded rotation.

    High lightness keeps the black queen disc and dark grid readable;
    alternating lightness between hue neighbors plus a seeded rejection
    loop keeps any two fills at least PALETTE_FLOOR apart in max-channel
    distance and every fill at least COLOR_SEPARATION away from the
    reserved path/start/queen colors.
    """
    if not 1 <= n <= PALETTE_MAX:
        raise ValueError(f"palette size must be in [1, {PALETTE_MAX}], got {n}")
    rng = _rng(child_seed(seed, "palette"))
    for _ in range(64):
        offset = float(rng.random())
        colors = []
        for i in range(n):
            h = (offset + i / n) % 1.0
            v = 0.96 if i % 2 == 0 else 0.80
            r, g, b = colorsys.hsv_to_rgb(h, 0.45, v)
            colors.append(
                (int(round(r * 255)), int(round(g * 255)), int(round(b * 255)))
            )
        ok = all(
            color_distance(a, b) >= PALETTE_FLOOR
            for i, a in enumerate(colors)
            for b in colors[i + 1 :]
        ) and all(
            color_distance(c, reserved) >= COLOR_SEPARATION
            for c in colors
            for reserved in _PALETTE_RESERVED
        )
        if ok:
            return colors
    raise ValueError(f"could not find a separated {n}-color palette")  # pragma: no cover


# --------------------------------------------------------------------------
# Raster assets: per-cell pixel masks and per-edge wall strokes.


@dataclass
class CellRaster:
    full_idx: np.ndarray       # flat canvas indices covered by the cell
    interior_idx: np.ndarray   # eroded interior, clear of wall bleed
    window_idx: np.ndarray     # central sub-window (queen disc detection)
    center_px: tuple[float, float]
    inradius_px: float


@dataclass
class RasterAssets:
    resolution: int
    cells: list[CellRaster]
    edge_strokes: list[np.ndarray]
    boundary_strokes: list[np.ndarray]
    min_inradius_px: float


def _subgrid(
    res: int, x0: float, y0: float, x1: float, y1: float
) -> tuple[int, int, np.ndarray, np.ndarray]:
    c0 = max(int(np.floor(x0 * res)) - 1, 0)
    c1 = min(int(np.ceil(x1 * res)) + 1, res)
    r0 = max(int(np.floor(y0 * res)) - 1, 0)
    r1 = min(int(np.ceil(y1 * res)) + 1, res)
    xs = (np.arange(c0, c1) + 0.5) / res
    ys = (np.arange(r0, r1) + 0.5) / res
    return r0, c0, xs, ys


def _flat_indices(r0: int, c0: int, mask: np.ndarray, res: int) -> np.ndarray:
    rows, cols = np.nonzero(mask)
    return ((rows + r0) * res + (cols + c0)).astype(np.int64)


def _polygon_idx(shape: PolygonShape, res: int, shrink: float) -> np.ndarray:
    verts = np.asarray(shape.vertices)
    r0, c0, xs, ys = _subgrid(
        res, verts[:, 0].min(), verts[:, 1].min(), verts[:, 0].max(), verts[:, 1].max()
    )
    X, Y = np.meshgrid(xs, ys)
    mask = np.ones(X.shape, dtype=bool)
    n = len(verts)
    for i in range(n):
        x0, y0 = verts[i]
        x1, y1 = verts[(i + 1) % n]
        ex, ey = x1 - x0, y1 - y0
        length = float(np.hypot(ex, ey))
        # Signed distance from the edge line; vertices are CCW so the
        # interior is the non-negative side.
        mask &= (ex * (Y - y0) - ey * (X - x0)) >= shrink * length
    return _flat_indices(r0, c0, mask, res)


def _sector_bbox(shape: SectorShape) -> tuple[float, float, float, float]:
    cx, cy = shape.center
    if shape.full_ring:
        return cx - shape.r_out, cy - shape.r_out, cx + shape.r_out, cy + shape.r_out
    pts = []
    for rho in (shape.r_in, shape.r_out):
        for theta in (shape.theta0, shape.theta1):
            pts.append((cx + rho * np.cos(theta), cy + rho * np.sin(theta)))
    # Arc extremes (multiples of pi/2) inside the span extend the box.
    k0 = int(np.ceil(shape.theta0 / (np.pi / 2)))
    k1 = int(np.floor(shape.theta1 / (np.pi / 2)))
    for k in range(k0, k1 + 1):
        theta = k * np.pi / 2
        pts.append((cx + shape.r_out * np.cos(theta), cy + shape.r_out * np.sin(theta)))
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    return min(xs), min(ys), max(xs), max(ys)


def _sector_idx(shape: SectorShape, res: int, shrink: float) -> np.ndarray:
    cx, cy = shape.center
    bx0, by0, bx1, by1 = _sector_bbox(shape)
    r0, c0, xs, ys = _subgrid(res, bx0, by0, bx1, by1)
    X, Y = np.meshgrid(xs, ys)
    rho = np.hypot(X - cx, Y - cy)
    mask = rho <= shape.r_out - shrink
    if shape.r_in > 0.0:
        mask &= rho >= shape.r_in + shrink
    if not shape.full_ring:
        rel = (np.arctan2(Y - cy, X - cx) - shape.theta0) % TWO_PI
        span = shape.theta1 - shape.theta0
        if shrink > 0.0:
            mask &= (rel * rho >= shrink) & ((span - rel) * rho >= shrink)
        else:
            mask &= rel <= span
    return _flat_indices(r0, c0, mask, res)


def _segment_stroke_idx(
    p0: tuple[float, float], p1: tuple[float, float], halfwidth: float, res: int
) -> np.ndarray:
    x0, y0 = p0
    x1, y1 = p1
    r0, c0, xs, ys = _subgrid(
        res,
        min(x0, x1) - halfwidth,
        min(y0, y1) - halfwidth,
        max(x0, x1) + halfwidth,
        max(y0, y1) + halfwidth,
    )
    X, Y = np.meshgrid(xs, ys)
    dx, dy = x1 - x0, y1 - y0
    ll = dx * dx + dy * dy
    if ll == 0.0:
        dist = np.hypot(X - x0, Y - y0)
    else:
        t = np.clip(((X - x0) * dx + (Y - y0) * dy) / ll, 0.0, 1.0)
        dist = np.hypot(X - (x0 + t * dx), Y - (y0 + t * dy))
    return _flat_indices(r0, c0, dist <= halfwidth, res)


def _arc_stroke_idx(wall: ArcWall, halfwidth: float, res: int) -> np.ndarray:
    cx, cy = wall.center
    span = wall.theta1 - wall.theta0
    probe = SectorShape(wall.center, max(wall.radius - halfwidth, 0.0),
                        wall.radius + halfwidth, wall.theta0, wall.theta1)
    bx0, by0, bx1, by1 = _sector_bbox(probe)
    r0, c0, xs, ys = _subgrid(res, bx0, by0, bx1, by1)
    X, Y = np.meshgrid(xs, ys)
    rho = np.hypot(X - cx, Y - cy)
    band = np.abs(rho - wall.radius) <= halfwidth
    if span >= TWO_PI - 1e-12:
        return _flat_indices(r0, c0, band, res)
    rel = (np.arctan2(Y - cy, X - cx) - wall.theta0) % TWO_PI
    mask = band & (rel <= span)
    # Round end caps keep wall junctions gap-free.
    for theta in (wall.theta0, wall.theta1):
        ex = cx + wall.radius * np.cos(theta)
        ey = cy + wall.radius * np.sin(theta)
        mask |= np.hypot(X - ex, Y - ey) <= halfwidth
    return _flat_indices(r0, c0, mask, res)


def _wall_stroke_idx(wall, halfwidth: float, res: int) -> np.ndarray:
    if isinstance(wall, LineWall):
        return _segment_stroke_idx(wall.p0, wall.p1, halfwidth, res)
    return _arc_stroke_idx(wall, halfwidth, res)


def _cell_window_idx(shape, res: int) -> np.ndarray:
    """Central sub-window covering 50% of the cell's linear extent."""
    if isinstance(shape, PolygonShape):
        verts = np.asarray(shape.vertices)
        cx, cy = shape.centroid()
        half_w = (verts[:, 0].max() - verts[:, 0].min()) / 4.0
        half_h = (verts[:, 1].max() - verts[:, 1].min()) / 4.0
        r0, c0, xs, ys = _subgrid(res, cx - half_w, cy - half_h, cx + half_w, cy + half_h)
        X, Y = np.meshgrid(xs, ys)
        mask = (np.abs(X - cx) <= half_w) & (np.abs(Y - cy) <= half_h)
        return _flat_indices(r0, c0, mask, res)
    half = shape.inradius() / 2.0
    cx, cy = shape.centroid()
    r0, c0, xs, ys = _subgrid(res, cx - half, cy - half, cx + half, cy + half)
    X, Y = np.meshgrid(xs, ys)
    mask = np.hypot(X - cx, Y - cy) <= half
    return _flat_indices(r0, c0, mask, res)


@lru_cache(maxsize=8)
def raster_assets(
    geometry: GeometryKind,
    scale: int,
    margin: float,
    resolution: int,
    wall_stroke: float,
    erosion_px: float,
) -> RasterAssets:
    graph = build_cell_graph(geometry, scale, margin)
    if graph.min_wall_length() * resolution < MIN_EDGE_PIXELS:
        raise ResolutionError(
            f"{geometry.value} scale {scale} needs more than "
            f"{resolution} px to keep walls {MIN_EDGE_PIXELS:g} px apart"
        )
    res = resolution
    shrink = erosion_px / res
    wall_hw = wall_stroke / (2.0 * res)

    cells = []
    for shape in graph.shapes:
        if isinstance(shape, PolygonShape):
            full = _polygon_idx(shape, res, 0.0)
            interior = _polygon_idx(shape, res, shrink)
        else:
            full = _sector_idx(shape, res, 0.0)
            interior = _sector_idx(shape, res, shrink)
        cx, cy = shape.centroid()
        cells.append(
            CellRaster(
                full_idx=full,
                interior_idx=interior,
                window_idx=_cell_window_idx(shape, res),
                center_px=(cx * res, cy * res),
                inradius_px=shape.inradius() * res,
            )
        )

    edge_strokes = [_wall_stroke_idx(e.wall, wall_hw, res) for e in graph.edges]
    boundary_strokes = [_wall_stroke_idx(w, wall_hw, res) for w in graph.boundary_walls]
    return RasterAssets(
        resolution=res,
        cells=cells,
        edge_strokes=edge_strokes,
        boundary_strokes=boundary_strokes,
        min_inradius_px=min(c.inradius_px for c in cells),
    )


def assets_for_graph(graph: CellGraph, style: RenderStyle, erosion_px: Optional[float] = None) -> RasterAssets:
    erosion = style.wall_stroke if erosion_px is None else erosion_px
    return raster_assets(
        graph.geometry,
        graph.scale,
        graph.margin,
        style.resolution,
        style.wall_stroke,
        erosion,
    )


# --------------------------------------------------------------------------
# Painting primitives.


def new_canvas(style: RenderStyle) -> np.ndarray:
    canvas = np.empty((style.resolution, style.resolution, 3), dtype=np.uint8)
    canvas[:] = style.background
    return canvas


def _paint(canvas: np.ndarray, idx: np.ndarray, color: RGB) -> None:
    flat = canvas.reshape(-1, 3)
    flat[idx] = color


def _disc_idx(center_px: tuple[float, float], radius_px: float, res: int) -> np.ndarray:
    cx, cy = center_px[0] / res, center_px[1] / res
    radius = radius_px / res
    r0, c0, xs, ys = _subgrid(res, cx - radius, cy - radius, cx + radius, cy + radius)
    X, Y = np.meshgrid(xs, ys)
    return _flat_indices(r0, c0, np.hypot(X - cx, Y - cy) <= radius, res)


def _paint_polyline(
    canvas: np.ndarray,
    centers_px: Sequence[tuple[float, float]],
    halfwidth_px: float,
    color: RGB,
    res: int,
) -> None:
    hw = halfwidth_px / res
    pts = [(x / res, y / res) for x, y in centers_px]
    if len(pts) == 1:
        _paint(canvas, _segment_stroke_idx(pts[0], pts[0], hw, res), color)
        return
    for p0, p1 in zip(pts, pts[1:]):
        _paint(canvas, _segment_stroke_idx(p0, p1, hw, res), color)


def path_stroke_px(assets: RasterAssets, style: RenderStyle) -> float:
    if style.path_stroke is not None:
        return style.path_stroke
    return max(2.0, 0.4 * assets.min_inradius_px)


# --------------------------------------------------------------------------
# Task renderers.


def render_maze(
    task: MazeTask,
    with_solution: bool,
    style: RenderStyle = RenderStyle(),
    path_cells: Optional[Sequence[int]] = None,
) -> np.ndarray:
    """Rasterize a maze task; the solution layer sits under walls/markers.

    path_cells substitutes an arbitrary cell sequence for the goal path,
    which is how synthetic (partial or wrong) candidates are produced.
    """
    style.validate()
    graph = task.graph
    assets = assets_for_graph(graph, style)
    res = style.resolution
    canvas = new_canvas(style)

    if with_solution:
        cells = list(task.goal_path if path_cells is None else path_cells)
        centers = [assets.cells[c].center_px for c in cells]
        _paint_polyline(canvas, centers, path_stroke_px(assets, style) / 2.0, style.path_color, res)

    for ei, stroke in enumerate(assets.edge_strokes):
        if ei not in task.maze.open_edges:
            _paint(canvas, stroke, style.wall_color)
    for stroke in assets.boundary_strokes:
        _paint(canvas, stroke, style.wall_color)

    start_cell = assets.cells[task.start]
    _paint(
        canvas,
        _disc_idx(start_cell.center_px, 0.3 * start_cell.inradius_px, res),
        style.start_color,
    )
    end_cell = assets.cells[task.end]
    _paint_x_marker(canvas, end_cell, style, res)
    return canvas


def _paint_x_marker(canvas: np.ndarray, cell: CellRaster, style: RenderStyle, res: int) -> None:
    cx, cy = cell.center_px
    arm = 0.6 * cell.inradius_px
    hw = max(1.0, 0.11 * cell.inradius_px) / res
    for sx, sy in ((1.0, 1.0), (1.0, -1.0)):
        p0 = ((cx - sx * arm) / res, (cy - sy * arm) / res)
        p1 = ((cx + sx * arm) / res, (cy + sy * arm) / res)
        _paint(canvas, _segment_stroke_idx(p0, p1, hw, res), style.end_color)


def render_queens(
    task: QueenTask,
    with_solution: bool,
    style: RenderStyle = RenderStyle(),
    queen_cells: Optional[Sequence[int]] = None,
) -> np.ndarray:
    """Rasterize a queen board: pastel regions, grid, thick region borders,
    and (optionally) a solid disc on each goal queen cell."""
    style.validate()
    graph = build_cell_graph(GeometryKind.SQUARE, task.n, style.margin)
    assets = assets_for_graph(graph, style)
    res = style.resolution
    canvas = new_canvas(style)

    palette = region_palette(task.n, style.region_palette_seed)
    for cid in graph.cells:
        _paint(canvas, assets.cells[cid].full_idx, palette[task.regions.region_of[cid]])

    border_hw = style.region_border_scale * style.wall_stroke / (2.0 * res)
    for ei, edge in enumerate(graph.edges):
        _paint(canvas, assets.edge_strokes[ei], style.wall_color)
        if task.regions.region_of[edge.a] != task.regions.region_of[edge.b]:
            _paint(canvas, _wall_stroke_idx(edge.wall, border_hw, res), style.wall_color)
    for wall, stroke in zip(graph.boundary_walls, assets.boundary_strokes):
        _paint(canvas, stroke, style.wall_color)
        _paint(canvas, _wall_stroke_idx(wall, border_hw, res), style.wall_color)

    if with_solution:
        cells = sorted(task.goal_cells) if queen_cells is None else list(queen_cells)
        for cid in cells:
            cell = assets.cells[cid]
            # Disc diameter is 0.55x the cell size.
            cell_size_px = 2.0 * cell.inradius_px
            _paint(
                canvas,
                _disc_idx(cell.center_px, 0.275 * cell_size_px, res),
                style.queen_color,
            )
    return canvas


# --------------------------------------------------------------------------
# Image buffer I/O.


def encode_png(image: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(image, "RGB").save(buf, format="PNG", compress_level=6)
    return buf.getvalue()


def decode_image(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as im:
        return np.asarray(im.convert("RGB"))


def save_image(path, image: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_png(image))


def load_image(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_image(fh.read())

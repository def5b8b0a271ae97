"""Cell graphs for the four puzzle tessellations.

Everything lives in the unit square [0, 1]^2 with y growing downward
(matching image coordinates), inset by a configurable margin reserved for
stroke bleed.  A cell graph is built once per (geometry, scale, margin),
is immutable afterwards, and is shared by generation, rendering, and
evaluation so they never disagree about where a cell is.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Optional, Sequence, Union

TWO_PI = 2.0 * math.pi

DEFAULT_MARGIN = 0.04
DEFAULT_RESOLUTION = 512
DEFAULT_WALL_STROKE = 3.0
MIN_EDGE_PIXELS = 2.0

# Snap tolerance when merging polygon vertices shared between cells.
VERTEX_TOL = 1e-9


class GeometryError(ValueError):
    """Invalid geometry arguments or a structurally broken graph."""


class ResolutionError(GeometryError):
    """Scale too fine for the target raster resolution."""


class UnknownCellError(KeyError):
    """Cell id outside the graph."""


class GeometryKind(str, Enum):
    SQUARE = "square"
    TRIANGLE = "triangle"
    HEXAGON = "hexagon"
    CIRCLE = "circle"


Point = tuple[float, float]


@dataclass(frozen=True)
class LineWall:
    """Straight wall segment between two canvas points."""

    p0: Point
    p1: Point

    def length(self) -> float:
        return math.dist(self.p0, self.p1)


@dataclass(frozen=True)
class ArcWall:
    """Circular-arc wall segment, angles in radians with theta1 > theta0."""

    center: Point
    radius: float
    theta0: float
    theta1: float

    def length(self) -> float:
        return self.radius * (self.theta1 - self.theta0)


WallSegment = Union[LineWall, ArcWall]


@dataclass(frozen=True)
class PolygonShape:
    """Convex cell polygon, vertices in counterclockwise (shoelace-positive) order."""

    vertices: tuple[Point, ...]

    def centroid(self) -> Point:
        xs = [p[0] for p in self.vertices]
        ys = [p[1] for p in self.vertices]
        return (sum(xs) / len(xs), sum(ys) / len(ys))

    def inradius(self) -> float:
        """Distance from the centroid to the nearest edge."""
        cx, cy = self.centroid()
        best = math.inf
        n = len(self.vertices)
        for i in range(n):
            x0, y0 = self.vertices[i]
            x1, y1 = self.vertices[(i + 1) % n]
            best = min(best, _point_segment_distance(cx, cy, x0, y0, x1, y1))
        return best

    def contains(self, p: Point) -> bool:
        px, py = p
        n = len(self.vertices)
        for i in range(n):
            x0, y0 = self.vertices[i]
            x1, y1 = self.vertices[(i + 1) % n]
            if (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0) < 0.0:
                return False
        return True

    def boundary_distance(self, p: Point) -> float:
        px, py = p
        n = len(self.vertices)
        best = math.inf
        for i in range(n):
            x0, y0 = self.vertices[i]
            x1, y1 = self.vertices[(i + 1) % n]
            best = min(best, _point_segment_distance(px, py, x0, y0, x1, y1))
        return best


@dataclass(frozen=True)
class SectorShape:
    """Annular sector cell; a full disc when r_in == 0 and the span is 2*pi."""

    center: Point
    r_in: float
    r_out: float
    theta0: float
    theta1: float

    @property
    def full_ring(self) -> bool:
        return self.theta1 - self.theta0 >= TWO_PI - 1e-12

    def centroid(self) -> Point:
        if self.r_in == 0.0 and self.full_ring:
            return self.center
        rho = 0.5 * (self.r_in + self.r_out)
        theta = 0.5 * (self.theta0 + self.theta1)
        return (
            self.center[0] + rho * math.cos(theta),
            self.center[1] + rho * math.sin(theta),
        )

    def inradius(self) -> float:
        if self.r_in == 0.0 and self.full_ring:
            return self.r_out
        radial = 0.5 * (self.r_out - self.r_in)
        if self.full_ring:
            return radial
        rho = 0.5 * (self.r_in + self.r_out)
        angular = 0.5 * (self.theta1 - self.theta0) * rho
        return min(radial, angular)


CellShape = Union[PolygonShape, SectorShape]


@dataclass(frozen=True)
class Edge:
    """Undirected adjacency between two cells, carrying their shared wall."""

    a: int
    b: int
    wall: WallSegment


@dataclass
class CellGraph:
    geometry: GeometryKind
    scale: int
    margin: float
    shapes: tuple[CellShape, ...]
    edges: tuple[Edge, ...]
    boundary: frozenset[int]
    boundary_walls: tuple[WallSegment, ...]
    # ring_sizes is populated for circle graphs only.
    ring_sizes: tuple[int, ...] = ()
    _centers: tuple[Point, ...] = field(default=(), repr=False)
    _neighbors: tuple[tuple[tuple[int, int], ...], ...] = field(default=(), repr=False)
    _locator: Optional["_CellLocator"] = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if not self._centers:
            self._centers = tuple(s.centroid() for s in self.shapes)
        if not self._neighbors:
            nbrs: list[list[tuple[int, int]]] = [[] for _ in self.shapes]
            for ei, e in enumerate(self.edges):
                nbrs[e.a].append((e.b, ei))
                nbrs[e.b].append((e.a, ei))
            self._neighbors = tuple(tuple(n) for n in nbrs)

    @property
    def cell_count(self) -> int:
        return len(self.shapes)

    @property
    def cells(self) -> range:
        return range(len(self.shapes))

    def neighbors(self, cell: int) -> tuple[tuple[int, int], ...]:
        """(neighbor cell, edge index) pairs for a cell."""
        self._check_cell(cell)
        return self._neighbors[cell]

    def min_wall_length(self) -> float:
        walls = [e.wall for e in self.edges] + list(self.boundary_walls)
        return min(w.length() for w in walls)

    def min_inradius(self) -> float:
        return min(s.inradius() for s in self.shapes)

    def _check_cell(self, cell: int) -> None:
        if not 0 <= cell < len(self.shapes):
            raise UnknownCellError(cell)


def _point_segment_distance(
    px: float, py: float, x0: float, y0: float, x1: float, y1: float
) -> float:
    dx, dy = x1 - x0, y1 - y0
    ll = dx * dx + dy * dy
    if ll == 0.0:
        return math.hypot(px - x0, py - y0)
    t = ((px - x0) * dx + (py - y0) * dy) / ll
    t = max(0.0, min(1.0, t))
    return math.hypot(px - (x0 + t * dx), py - (y0 + t * dy))


class _VertexPool:
    """Snaps near-coincident polygon vertices to one canonical id.

    Distinct lattice vertices in every supported tessellation are separated
    by at least the cell edge length, many orders of magnitude above the
    snap tolerance, so bucketed lookup cannot merge two true vertices.
    """

    _BUCKET = 1e-6

    def __init__(self) -> None:
        self.coords: list[Point] = []
        self._buckets: dict[tuple[int, int], list[int]] = {}

    def key(self, x: float, y: float) -> int:
        bx = round(x / self._BUCKET)
        by = round(y / self._BUCKET)
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for idx in self._buckets.get((bx + dx, by + dy), ()):
                    px, py = self.coords[idx]
                    if abs(px - x) <= VERTEX_TOL and abs(py - y) <= VERTEX_TOL:
                        return idx
        idx = len(self.coords)
        self.coords.append((x, y))
        self._buckets.setdefault((bx, by), []).append(idx)
        return idx


def _normalize_ccw(vertices: Sequence[Point]) -> tuple[Point, ...]:
    area2 = 0.0
    n = len(vertices)
    for i in range(n):
        x0, y0 = vertices[i]
        x1, y1 = vertices[(i + 1) % n]
        area2 += x0 * y1 - x1 * y0
    if area2 < 0:
        return tuple(reversed(vertices))
    return tuple(vertices)


def _graph_from_polygons(
    geometry: GeometryKind,
    scale: int,
    margin: float,
    polygons: Sequence[Sequence[Point]],
) -> CellGraph:
    pool = _VertexPool()
    shapes: list[PolygonShape] = []
    cell_vids: list[list[int]] = []
    for poly in polygons:
        verts = _normalize_ccw(poly)
        shapes.append(PolygonShape(verts))
        cell_vids.append([pool.key(x, y) for x, y in verts])

    owners: dict[tuple[int, int], list[int]] = {}
    for ci, vids in enumerate(cell_vids):
        n = len(vids)
        for i in range(n):
            a, b = vids[i], vids[(i + 1) % n]
            owners.setdefault((min(a, b), max(a, b)), []).append(ci)

    edges: list[Edge] = []
    boundary: set[int] = set()
    boundary_walls: list[WallSegment] = []
    for (va, vb), cells in sorted(owners.items()):
        wall = LineWall(pool.coords[va], pool.coords[vb])
        if len(cells) == 2:
            a, b = sorted(cells)
            edges.append(Edge(a, b, wall))
        elif len(cells) == 1:
            boundary.add(cells[0])
            boundary_walls.append(wall)
        else:
            raise GeometryError(
                f"edge shared by {len(cells)} cells in {geometry.value} scale {scale}"
            )
    edges.sort(key=lambda e: (e.a, e.b))

    return CellGraph(
        geometry=geometry,
        scale=scale,
        margin=margin,
        shapes=tuple(shapes),
        edges=tuple(edges),
        boundary=frozenset(boundary),
        boundary_walls=tuple(boundary_walls),
    )


def _square_polygons(scale: int, margin: float) -> list[list[Point]]:
    side = 1.0 - 2.0 * margin
    xs = [margin + side * i / scale for i in range(scale + 1)]
    polys = []
    for r in range(scale):
        for c in range(scale):
            polys.append(
                [
                    (xs[c], xs[r]),
                    (xs[c + 1], xs[r]),
                    (xs[c + 1], xs[r + 1]),
                    (xs[c], xs[r + 1]),
                ]
            )
    return polys


def _triangle_polygons(scale: int, margin: float) -> list[list[Point]]:
    # Rows of alternating up/down triangles filling one equilateral outline:
    # row i (1-based) holds 2*i - 1 triangles.
    side = 1.0 - 2.0 * margin
    height = side * math.sqrt(3.0) / 2.0
    top = margin + (side - height) / 2.0
    cx = 0.5
    unit = side / scale
    row_h = height / scale

    polys = []
    for i in range(1, scale + 1):
        y_top = top + (i - 1) * row_h
        y_bot = top + i * row_h
        x_bot = cx - i * unit / 2.0       # left end of the row's bottom span
        x_top = x_bot + unit / 2.0        # left end of the row's top span
        for j in range(2 * i - 1):
            k = j // 2
            if j % 2 == 0:  # upward-pointing
                polys.append(
                    [
                        (x_bot + k * unit, y_bot),
                        (x_bot + (k + 1) * unit, y_bot),
                        (x_top + k * unit, y_top),
                    ]
                )
            else:  # downward-pointing
                polys.append(
                    [
                        (x_top + k * unit, y_top),
                        (x_top + (k + 1) * unit, y_top),
                        (x_bot + (k + 1) * unit, y_bot),
                    ]
                )
    return polys


def _hexagon_polygons(scale: int, margin: float) -> list[list[Point]]:
    # Pointy-top hexagons in an n x n brick layout, odd rows shifted half
    # a cell to the right.
    avail = 1.0 - 2.0 * margin
    n = scale
    radius = min(
        avail / (math.sqrt(3.0) * (n + 0.5)),
        avail / (1.5 * n + 0.5),
    )
    w = math.sqrt(3.0) * radius
    total_w = w * (n + (0.5 if n > 1 else 0.0))
    total_h = radius * (1.5 * n + 0.5)
    x_off = (1.0 - total_w) / 2.0
    y_off = (1.0 - total_h) / 2.0

    polys = []
    for r in range(n):
        cy = y_off + radius * (1.0 + 1.5 * r)
        shift = 0.5 * w if r % 2 == 1 else 0.0
        for c in range(n):
            cx = x_off + shift + w * (c + 0.5)
            verts = []
            for k in range(6):
                ang = math.pi / 6.0 + k * math.pi / 3.0
                verts.append((cx + radius * math.cos(ang), cy + radius * math.sin(ang)))
            polys.append(verts)
    return polys


def circle_ring_sizes(scale: int) -> list[int]:
    """Cells per ring: a central disc, then counts that double whenever the
    ring index doubles so the arc width stays roughly constant."""
    sizes = [1]
    for r in range(1, scale + 1):
        sizes.append(6 * (1 << (r.bit_length() - 1)))
    return sizes


def _circle_graph(scale: int, margin: float) -> CellGraph:
    center = (0.5, 0.5)
    r_max = 0.5 - margin
    n_rings = scale + 1  # including the central disc
    dr = r_max / n_rings
    sizes = circle_ring_sizes(scale)

    shapes: list[SectorShape] = []
    ring_start: list[int] = []
    for ring, count in enumerate(sizes):
        ring_start.append(len(shapes))
        r_in = ring * dr
        r_out = (ring + 1) * dr
        if count == 1:
            shapes.append(SectorShape(center, r_in, r_out, 0.0, TWO_PI))
            continue
        span = TWO_PI / count
        for j in range(count):
            shapes.append(SectorShape(center, r_in, r_out, j * span, (j + 1) * span))

    edges: list[Edge] = []
    # Same-ring angular neighbors, separated by a radial wall.
    for ring, count in enumerate(sizes):
        if count < 3:
            continue  # only the central disc; rings otherwise have >= 6 cells
        base = ring_start[ring]
        r_in = ring * dr
        r_out = (ring + 1) * dr
        span = TWO_PI / count
        for j in range(count):
            jn = (j + 1) % count
            theta = jn * span
            wall = LineWall(
                (center[0] + r_in * math.cos(theta), center[1] + r_in * math.sin(theta)),
                (center[0] + r_out * math.cos(theta), center[1] + r_out * math.sin(theta)),
            )
            a, b = sorted((base + j, base + jn))
            edges.append(Edge(a, b, wall))
    # Ring-to-ring neighbors, separated by an arc wall along their overlap.
    for ring in range(scale):
        inner_count = sizes[ring]
        outer_count = sizes[ring + 1]
        radius = (ring + 1) * dr
        span_out = TWO_PI / outer_count
        for j in range(outer_count):
            if inner_count == 1:
                inner = 0
            elif outer_count == inner_count:
                inner = ring_start[ring] + j
            else:  # outer_count == 2 * inner_count
                inner = ring_start[ring] + j // 2
            outer = ring_start[ring + 1] + j
            wall = ArcWall(center, radius, j * span_out, (j + 1) * span_out)
            edges.append(Edge(inner, outer, wall))
    edges.sort(key=lambda e: (e.a, e.b))

    boundary = frozenset(range(ring_start[scale], ring_start[scale] + sizes[scale]))
    span = TWO_PI / sizes[scale]
    boundary_walls = tuple(
        ArcWall(center, r_max, j * span, (j + 1) * span) for j in range(sizes[scale])
    )

    return CellGraph(
        geometry=GeometryKind.CIRCLE,
        scale=scale,
        margin=margin,
        shapes=tuple(shapes),
        edges=tuple(edges),
        boundary=boundary,
        boundary_walls=boundary_walls,
        ring_sizes=tuple(sizes),
    )


@lru_cache(maxsize=64)
def _build_cached(geometry: GeometryKind, scale: int, margin: float) -> CellGraph:
    if geometry is GeometryKind.SQUARE:
        graph = _graph_from_polygons(
            geometry, scale, margin, _square_polygons(scale, margin)
        )
    elif geometry is GeometryKind.TRIANGLE:
        graph = _graph_from_polygons(
            geometry, scale, margin, _triangle_polygons(scale, margin)
        )
    elif geometry is GeometryKind.HEXAGON:
        graph = _graph_from_polygons(
            geometry, scale, margin, _hexagon_polygons(scale, margin)
        )
    elif geometry is GeometryKind.CIRCLE:
        graph = _circle_graph(scale, margin)
    else:  # pragma: no cover
        raise GeometryError(f"unknown geometry {geometry!r}")

    if graph.min_wall_length() * DEFAULT_RESOLUTION < MIN_EDGE_PIXELS:
        raise ResolutionError(
            f"{geometry.value} scale {scale}: shortest wall renders below "
            f"{MIN_EDGE_PIXELS:g} px at the default {DEFAULT_RESOLUTION} px resolution"
        )
    return graph


def build_cell_graph(
    geometry: GeometryKind | str,
    scale: int,
    margin: float = DEFAULT_MARGIN,
) -> CellGraph:
    """Build the cell graph for a geometry at the given scale.

    Deterministic: equal arguments always return a structurally identical
    graph (the same cached instance, safe to share between threads).
    """
    geometry = GeometryKind(geometry)
    if scale < 2:
        raise GeometryError(f"scale must be >= 2, got {scale}")
    if not 0.0 <= margin < 0.5:
        raise GeometryError(f"margin must be in [0, 0.5), got {margin}")
    return _build_cached(geometry, int(scale), float(margin))


def cell_center(graph: CellGraph, cell: int) -> Point:
    """A point strictly inside the cell; anchors markers, strokes, and discs."""
    graph._check_cell(cell)
    return graph._centers[cell]


def default_wall_band(
    wall_stroke: float = DEFAULT_WALL_STROKE, resolution: int = DEFAULT_RESOLUTION
) -> float:
    """Half the rendered wall stroke, mapped back to canvas units."""
    return wall_stroke / (2.0 * resolution)


class _CellLocator:
    """Coarse grid over cell bounding boxes for point-in-cell queries."""

    GRID = 32

    def __init__(self, graph: CellGraph, pad: float) -> None:
        self.buckets: dict[tuple[int, int], list[int]] = {}
        for cid, shape in enumerate(graph.shapes):
            assert isinstance(shape, PolygonShape)
            xs = [p[0] for p in shape.vertices]
            ys = [p[1] for p in shape.vertices]
            bx0 = int((min(xs) - pad) * self.GRID)
            bx1 = int((max(xs) + pad) * self.GRID)
            by0 = int((min(ys) - pad) * self.GRID)
            by1 = int((max(ys) + pad) * self.GRID)
            for bx in range(max(bx0, 0), min(bx1, self.GRID - 1) + 1):
                for by in range(max(by0, 0), min(by1, self.GRID - 1) + 1):
                    self.buckets.setdefault((bx, by), []).append(cid)

    def candidates(self, p: Point) -> list[int]:
        bx = min(max(int(p[0] * self.GRID), 0), self.GRID - 1)
        by = min(max(int(p[1] * self.GRID), 0), self.GRID - 1)
        return self.buckets.get((bx, by), [])


def point_to_cell(
    graph: CellGraph, p: Point, wall_band: Optional[float] = None
) -> Optional[int]:
    """The unique cell containing p, or None on/near a wall or outside.

    The wall band defaults to half the default rendered wall stroke in
    canvas units, so pixel centers under a drawn wall resolve to no cell.
    """
    band = default_wall_band() if wall_band is None else wall_band
    x, y = p
    if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
        return None

    if graph.geometry is GeometryKind.CIRCLE:
        return _point_to_circle_cell(graph, p, band)

    if graph._locator is None:
        graph._locator = _CellLocator(graph, band)
    for cid in graph._locator.candidates(p):
        shape = graph.shapes[cid]
        assert isinstance(shape, PolygonShape)
        if shape.contains(p):
            if shape.boundary_distance(p) < band:
                return None
            return cid
    return None


def _point_to_circle_cell(graph: CellGraph, p: Point, band: float) -> Optional[int]:
    cx, cy = 0.5, 0.5
    rho = math.hypot(p[0] - cx, p[1] - cy)
    sizes = graph.ring_sizes
    n_rings = len(sizes)
    r_max = 0.5 - graph.margin
    dr = r_max / n_rings
    if rho >= r_max - band:
        return None
    ring = min(int(rho / dr), n_rings - 1)
    # Radial distance to the nearest ring circle; the disc has no inner wall.
    if ring > 0 and rho - ring * dr < band:
        return None
    if (ring + 1) * dr - rho < band:
        return None
    start = sum(sizes[:ring])
    count = sizes[ring]
    if count == 1:
        return start
    theta = math.atan2(p[1] - cy, p[0] - cx) % TWO_PI
    span = TWO_PI / count
    frac = theta / span
    j = min(int(frac), count - 1)
    # Arc-length distance to the nearest radial wall.
    if min(frac - j, j + 1 - frac) * span * rho < band:
        return None
    return start + j


def connected_components(
    cell_count: int, pairs: Sequence[tuple[int, int]]
) -> list[set[int]]:
    """Flood-fill components of an undirected cell graph."""
    adj: list[list[int]] = [[] for _ in range(cell_count)]
    for a, b in pairs:
        adj[a].append(b)
        adj[b].append(a)
    seen = [False] * cell_count
    comps = []
    for root in range(cell_count):
        if seen[root]:
            continue
        comp = {root}
        seen[root] = True
        stack = [root]
        while stack:
            cur = stack.pop()
            for nb in adj[cur]:
                if not seen[nb]:
                    seen[nb] = True
                    comp.add(nb)
                    stack.append(nb)
        comps.append(comp)
    return comps

import math

import numpy as np
import pytest

from visplan.geometry import (
    ArcWall,
    CellGraph,
    GeometryError,
    GeometryKind,
    LineWall,
    PolygonShape,
    ResolutionError,
    UnknownCellError,
    build_cell_graph,
    cell_center,
    circle_ring_sizes,
    connected_components,
    point_to_cell,
)

ALL_GEOMETRIES = list(GeometryKind)


def winding_contains(vertices, p):
    """Independent point-in-polygon check via the crossing-number rule."""
    x, y = p
    inside = False
    n = len(vertices)
    for i in range(n):
        x0, y0 = vertices[i]
        x1, y1 = vertices[(i + 1) % n]
        if (y0 > y) != (y1 > y):
            t = (y - y0) / (y1 - y0)
            if x < x0 + t * (x1 - x0):
                inside = not inside
    return inside


def triangle_edge_count(n):
    # Enumerate shared edges of the row construction: 2i-2 intra-row
    # adjacencies in row i plus i cross edges between rows i and i+1.
    intra = sum(2 * i - 2 for i in range(1, n + 1))
    cross = sum(i for i in range(1, n))
    return intra + cross


def test_square_counts():
    g = build_cell_graph("square", 3)
    assert g.cell_count == 9
    assert len(g.edges) == 12  # 2n(n-1)


@pytest.mark.parametrize("n", [2, 3, 4, 6])
def test_triangle_counts(n):
    g = build_cell_graph("triangle", n)
    assert g.cell_count == n * n
    assert len(g.edges) == triangle_edge_count(n)


def test_circle_scale3_rings():
    g = build_cell_graph("circle", 3)
    assert g.ring_sizes == (1, 6, 12, 12)
    assert g.cell_count == 31


def test_circle_ring_doubling_rule():
    sizes = circle_ring_sizes(16)
    assert sizes[1] == 6
    for r in range(1, 17):
        assert sizes[r] == 6 * 2 ** int(math.floor(math.log2(r)))


def test_hexagon_edge_count_matches_offset_layout():
    # n(n-1) east-west adjacencies plus (n-1)(2n-1) diagonal ones.
    for n in (2, 3, 5):
        g = build_cell_graph("hexagon", n)
        assert g.cell_count == n * n
        assert len(g.edges) == n * (n - 1) + (n - 1) * (2 * n - 1)


def test_cell_center_square_margin0():
    g = build_cell_graph("square", 2, margin=0.0)
    assert cell_center(g, 0) == pytest.approx((0.25, 0.25), abs=1e-12)


def test_cell_center_circle_center_cell():
    g = build_cell_graph("circle", 3)
    assert cell_center(g, 0) == pytest.approx((0.5, 0.5), abs=1e-12)


def test_hexagon_centers_inside_polygons():
    g = build_cell_graph("hexagon", 3)
    for cid in g.cells:
        shape = g.shapes[cid]
        assert isinstance(shape, PolygonShape)
        assert winding_contains(shape.vertices, cell_center(g, cid))


@pytest.mark.parametrize("geometry", ALL_GEOMETRIES)
def test_center_roundtrip_scale5(geometry):
    g = build_cell_graph(geometry, 5)
    for cid in g.cells:
        assert point_to_cell(g, cell_center(g, cid)) == cid


def test_point_to_cell_square_examples():
    g = build_cell_graph("square", 2, margin=0.0)
    assert point_to_cell(g, (0.25, 0.25)) == 0
    # Point exactly on the shared edge of cells 0 and 1 falls in the wall band.
    assert point_to_cell(g, (0.5, 0.25)) is None


@pytest.mark.parametrize("geometry", ALL_GEOMETRIES)
def test_random_points_consistent(geometry):
    g = build_cell_graph(geometry, 5)
    rng = np.random.Generator(np.random.Philox(key=7))
    pts = rng.random((2500, 2))
    for x, y in pts:
        cid = point_to_cell(g, (x, y))
        if cid is None:
            continue
        shape = g.shapes[cid]
        if isinstance(shape, PolygonShape):
            assert winding_contains(shape.vertices, (x, y))
        else:
            rho = math.hypot(x - 0.5, y - 0.5)
            theta = math.atan2(y - 0.5, x - 0.5) % (2 * math.pi)
            assert shape.r_in <= rho <= shape.r_out
            if not shape.full_ring:
                assert shape.theta0 <= theta <= shape.theta1


@pytest.mark.parametrize("geometry", ALL_GEOMETRIES)
@pytest.mark.parametrize("scale", [2, 3, 5, 8])
def test_connectivity(geometry, scale):
    g = build_cell_graph(geometry, scale)
    comps = connected_components(g.cell_count, [(e.a, e.b) for e in g.edges])
    assert len(comps) == 1


@pytest.mark.parametrize("geometry", ALL_GEOMETRIES)
def test_adjacent_cells_share_wall_within_tolerance(geometry):
    g = build_cell_graph(geometry, 4)
    for e in g.edges:
        wall = e.wall
        if isinstance(wall, LineWall):
            for shape in (g.shapes[e.a], g.shapes[e.b]):
                if isinstance(shape, PolygonShape):
                    for p in (wall.p0, wall.p1):
                        assert min(
                            math.dist(p, v) for v in shape.vertices
                        ) <= 1e-9
                else:
                    for p in (wall.p0, wall.p1):
                        rho = math.hypot(p[0] - 0.5, p[1] - 0.5)
                        assert (
                            abs(rho - shape.r_in) <= 1e-9
                            or abs(rho - shape.r_out) <= 1e-9
                        )
        else:
            assert isinstance(wall, ArcWall)
            for shape in (g.shapes[e.a], g.shapes[e.b]):
                assert (
                    abs(wall.radius - shape.r_in) <= 1e-9
                    or abs(wall.radius - shape.r_out) <= 1e-9
                )


@pytest.mark.parametrize("geometry", ALL_GEOMETRIES)
def test_determinism(geometry):
    a = build_cell_graph(geometry, 4)
    b = build_cell_graph(geometry, 4)
    assert a.shapes == b.shapes
    assert a.edges == b.edges
    assert a.boundary == b.boundary


def test_interiors_disjoint_sampled():
    for geometry in ALL_GEOMETRIES:
        g = build_cell_graph(geometry, 4)
        rng = np.random.Generator(np.random.Philox(key=11))
        for x, y in rng.random((500, 2)):
            owners = []
            for cid, shape in enumerate(g.shapes):
                if isinstance(shape, PolygonShape):
                    if winding_contains(shape.vertices, (x, y)):
                        owners.append(cid)
                else:
                    rho = math.hypot(x - 0.5, y - 0.5)
                    if not (shape.r_in < rho < shape.r_out):
                        continue
                    if shape.full_ring:
                        owners.append(cid)
                    else:
                        theta = math.atan2(y - 0.5, x - 0.5) % (2 * math.pi)
                        if shape.theta0 < theta < shape.theta1:
                            owners.append(cid)
            assert len(owners) <= 1


def test_rejects_bad_scale():
    with pytest.raises(GeometryError):
        build_cell_graph("square", 1)


def test_rejects_too_fine_scale():
    with pytest.raises(ResolutionError):
        build_cell_graph("square", 300)


def test_unknown_cell():
    g = build_cell_graph("square", 2)
    with pytest.raises(UnknownCellError):
        cell_center(g, 99)


def test_boundary_cells_square():
    g = build_cell_graph("square", 4)
    interior = {5, 6, 9, 10}
    assert g.boundary == frozenset(set(range(16)) - interior)


def test_circle_boundary_is_outer_ring():
    g = build_cell_graph("circle", 3)
    assert g.boundary == frozenset(range(19, 31))

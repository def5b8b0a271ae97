"""Perfect-maze generation over any cell graph.

A maze is a spanning tree of the cell graph's adjacency: walls on the
removed edges stay closed, the tree edges are open passages, and any two
cells are joined by exactly one simple path.  Generation is a pure
function of (graph, growth, seed) using a counter-based generator, so
tasks are reproducible and embarrassingly parallel.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .geometry import (
    CellGraph,
    DEFAULT_MARGIN,
    GeometryError,
    GeometryKind,
    build_cell_graph,
)

MASK64 = (1 << 64) - 1


class GrowthKind(str, Enum):
    DFS_BACKTRACKER = "dfs_backtracker"
    BFS_GROWTH = "bfs_growth"


class StructuralError(ValueError):
    """The maze violates its spanning-tree invariant."""


class EndpointError(ValueError):
    """No endpoint pair satisfies the minimum-distance rule."""


def child_seed(seed: int, label: str) -> int:
    """Derive an independent 64-bit stream seed from a parent seed."""
    digest = hashlib.sha256(f"{seed & MASK64}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed & MASK64))


def stable_digest(*parts: object, length: int = 12) -> str:
    return hashlib.sha256("|".join(str(p) for p in parts).encode()).hexdigest()[:length]


@dataclass(frozen=True)
class Maze:
    graph: CellGraph
    open_edges: frozenset[int]
    growth: GrowthKind
    seed: int

    def is_open(self, edge_index: int) -> bool:
        return edge_index in self.open_edges

    def open_neighbors(self, cell: int) -> list[int]:
        return [nb for nb, ei in self.graph.neighbors(cell) if ei in self.open_edges]

    def serialized_open_edges(self) -> bytes:
        return b",".join(str(i).encode() for i in sorted(self.open_edges))


@dataclass(frozen=True)
class MazeTask:
    maze: Maze
    start: int
    end: int
    goal_path: tuple[int, ...]
    task_id: str

    @property
    def graph(self) -> CellGraph:
        return self.maze.graph

    @property
    def geometry(self) -> GeometryKind:
        return self.maze.graph.geometry

    @property
    def scale(self) -> int:
        return self.maze.graph.scale


def generate_maze(graph: CellGraph, growth: GrowthKind | str, seed: int) -> Maze:
    growth = GrowthKind(growth)
    rng = _rng(seed)
    if growth is GrowthKind.DFS_BACKTRACKER:
        open_edges = _grow_dfs(graph, rng)
    else:
        open_edges = _grow_frontier(graph, rng)
    maze = Maze(graph=graph, open_edges=frozenset(open_edges), growth=growth, seed=seed)
    if len(maze.open_edges) != graph.cell_count - 1:
        raise StructuralError(
            f"spanning tree has {len(maze.open_edges)} edges, "
            f"expected {graph.cell_count - 1}"
        )
    return maze


def _grow_dfs(graph: CellGraph, rng: np.random.Generator) -> set[int]:
    # Iterative randomized backtracker; recursion would overflow on the
    # larger circle graphs.
    visited = [False] * graph.cell_count
    start = int(rng.integers(graph.cell_count))
    visited[start] = True
    stack = [start]
    open_edges: set[int] = set()
    while stack:
        cur = stack[-1]
        options = [(nb, ei) for nb, ei in graph.neighbors(cur) if not visited[nb]]
        if not options:
            stack.pop()
            continue
        nb, ei = options[int(rng.integers(len(options)))]
        visited[nb] = True
        open_edges.add(ei)
        stack.append(nb)
    return open_edges


def _grow_frontier(graph: CellGraph, rng: np.random.Generator) -> set[int]:
    # Prim-like growth: repeatedly open a uniformly random frontier edge
    # between the visited region and a new cell.
    visited = [False] * graph.cell_count
    start = int(rng.integers(graph.cell_count))
    visited[start] = True
    frontier = [ei for _, ei in graph.neighbors(start)]
    open_edges: set[int] = set()
    while frontier:
        pick = int(rng.integers(len(frontier)))
        frontier[pick], frontier[-1] = frontier[-1], frontier[pick]
        ei = frontier.pop()
        edge = graph.edges[ei]
        if visited[edge.a] == visited[edge.b]:
            continue
        new = edge.b if visited[edge.a] else edge.a
        visited[new] = True
        open_edges.add(ei)
        for nb, e in graph.neighbors(new):
            if not visited[nb]:
                frontier.append(e)
    return open_edges


def tree_distances(maze: Maze, start: int) -> list[int]:
    """BFS distances from start through open edges; -1 where unreachable."""
    dist = [-1] * maze.graph.cell_count
    dist[start] = 0
    queue = [start]
    head = 0
    while head < len(queue):
        cur = queue[head]
        head += 1
        for nb in maze.open_neighbors(cur):
            if dist[nb] < 0:
                dist[nb] = dist[cur] + 1
                queue.append(nb)
    return dist


def select_endpoints(maze: Maze, seed: int, max_attempts: int = 10_000) -> tuple[int, int]:
    """Pick distinct boundary start/end cells at tree distance >= scale.

    Circle mazes start at the central disc and end on the outermost ring,
    which already guarantees the distance floor (the path must cross every
    ring).  Other geometries rejection-sample boundary pairs.
    """
    graph = maze.graph
    rng = _rng(seed)
    if graph.geometry is GeometryKind.CIRCLE:
        rim = sorted(graph.boundary)
        end = rim[int(rng.integers(len(rim)))]
        return 0, end

    boundary = sorted(graph.boundary)
    if len(boundary) < 2:
        raise EndpointError("graph has fewer than two boundary cells")
    for _ in range(max_attempts):
        start = boundary[int(rng.integers(len(boundary)))]
        end = boundary[int(rng.integers(len(boundary)))]
        if start == end:
            continue
        if tree_distances(maze, start)[end] >= graph.scale:
            return start, end
    raise EndpointError(
        f"no boundary pair at tree distance >= {graph.scale} "
        f"after {max_attempts} attempts"
    )


def solve_maze(
    maze: Maze, start: int, end: int, strategy: str = "bfs"
) -> list[int]:
    """The unique simple open path from start to end.

    On a spanning tree the path does not depend on the traversal strategy;
    both searches are kept so tests can assert that equivalence.
    """
    graph = maze.graph
    graph._check_cell(start)
    graph._check_cell(end)
    parent = [-1] * graph.cell_count
    parent[start] = start
    if strategy == "bfs":
        queue = [start]
        head = 0
        while head < len(queue):
            cur = queue[head]
            head += 1
            if cur == end:
                break
            for nb in maze.open_neighbors(cur):
                if parent[nb] < 0:
                    parent[nb] = cur
                    queue.append(nb)
    elif strategy == "dfs":
        stack = [start]
        while stack:
            cur = stack.pop()
            if cur == end:
                break
            for nb in maze.open_neighbors(cur):
                if parent[nb] < 0:
                    parent[nb] = cur
                    stack.append(nb)
    else:
        raise ValueError(f"unknown strategy {strategy!r}")

    if parent[end] < 0:
        raise StructuralError(
            f"cells {start} and {end} are not connected by open edges"
        )
    path = [end]
    while path[-1] != start:
        path.append(parent[path[-1]])
    path.reverse()
    return path


def validate_goal_path(maze: Maze, start: int, end: int, path: Sequence[int]) -> None:
    """Independent re-check of a goal path against the maze structure."""
    if not path or path[0] != start or path[-1] != end:
        raise StructuralError("path endpoints do not match start/end")
    if len(set(path)) != len(path):
        raise StructuralError("path repeats a cell")
    open_pairs = {
        frozenset((maze.graph.edges[ei].a, maze.graph.edges[ei].b))
        for ei in maze.open_edges
    }
    for a, b in zip(path, path[1:]):
        if frozenset((a, b)) not in open_pairs:
            raise StructuralError(f"cells {a} and {b} are not open-adjacent")


def maze_task_id(
    geometry: GeometryKind | str, scale: int, growth: GrowthKind | str, seed: int
) -> str:
    geometry = GeometryKind(geometry)
    growth = GrowthKind(growth)
    short = "dfs" if growth is GrowthKind.DFS_BACKTRACKER else "bfs"
    digest = stable_digest("maze", geometry.value, scale, growth.value, seed & MASK64)
    return f"maze-{geometry.value}-{scale:02d}-{short}-{digest}"


def build_maze_task(
    geometry: GeometryKind | str,
    scale: int,
    growth: GrowthKind | str,
    seed: int,
    margin: float = DEFAULT_MARGIN,
) -> MazeTask:
    graph = build_cell_graph(geometry, scale, margin)
    maze = generate_maze(graph, growth, child_seed(seed, "maze"))
    start, end = select_endpoints(maze, child_seed(seed, "endpoints"))
    path = solve_maze(maze, start, end)
    task = MazeTask(
        maze=maze,
        start=start,
        end=end,
        goal_path=tuple(path),
        task_id=maze_task_id(geometry, scale, growth, seed),
    )
    validate_goal_path(maze, start, end, task.goal_path)
    return task

"""Maze and Queen visual-planning puzzles: generation, rendering,
rule-based evaluation, a model harness, and a human-study server."""

__version__ = "0.1.0"

from .geometry import (  # noqa: F401
    CellGraph,
    GeometryError,
    GeometryKind,
    ResolutionError,
    build_cell_graph,
    cell_center,
    point_to_cell,
)
from .maze import (  # noqa: F401
    GrowthKind,
    Maze,
    MazeTask,
    build_maze_task,
    generate_maze,
    select_endpoints,
    solve_maze,
)
from .queen import (  # noqa: F401
    QueenTask,
    RegionMap,
    build_queen_task,
    grow_regions,
    sample_placement,
    solve_queens,
)
from .render import (  # noqa: F401
    RenderStyle,
    region_palette,
    render_maze,
    render_queens,
)
from .evaluation import (  # noqa: F401
    BenchmarkReport,
    DetectionConfig,
    SampleRecord,
    aggregate,
    align_candidate,
    detect_solution,
    logical_validity,
    pixel_fidelity,
)

import pytest

from visplan.dataset import BenchmarkConfig, MazeGroup, QueenGroup, build_benchmark


@pytest.fixture(scope="session")
def mini_benchmark(tmp_path_factory):
    """A small cross-kind dataset shared by harness and server tests."""
    out = tmp_path_factory.mktemp("mini-benchmark")
    config = BenchmarkConfig(
        name="mini",
        maze_groups=(
            MazeGroup("square", 3, 1, 1),
            MazeGroup("hexagon", 3, 1, 0),
        ),
        queen_groups=(QueenGroup(4, 2),),
        seed_root=11,
    )
    manifest = build_benchmark(config, out, workers=1)
    return out, manifest

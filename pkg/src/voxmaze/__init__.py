"""3D voxel level-generation toolkit: tasks, traversability, NCA
generators, quality-diversity search, and experiment harness."""

__version__ = "0.1.0"

from .level import (
    Door,
    InitSpec,
    Level,
    LevelError,
    Tile,
    emptiness,
    is_valid_door_pair,
    level_from_json,
    level_to_json,
    new_level,
    sample_door_pair,
    valid_door_pairs,
    valid_door_positions,
)
from .traverse import (
    Move,
    MoveGraph,
    PathReport,
    build_move_graph,
    diameter,
    farthest_path,
    nearest_enemy_distance,
    shortest_path,
    standing_positions,
)

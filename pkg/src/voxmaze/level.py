"""Voxel level representation: tiles, border frame, doors, init, JSON I/O.

Coordinate conventions used throughout the package:

* Interior voxels live at ``0 <= x < W``, ``0 <= y < H``, ``0 <= z < D``
  with ``y`` pointing up. Tile arrays are indexed ``tiles[x, y, z]``.
* A one-voxel BORDER shell surrounds the interior on all six faces
  (coordinates ``-1`` and ``W``/``H``/``D`` in interior terms).
* A door is a 2-tall opening (foot + head voxel) carved into one of the
  four side walls. ``Door.foot`` records the *interior cell adjacent to
  the lower opening voxel*; the frame voxel itself is implied by
  ``Door.wall``. All door-distance predicates operate on these foot
  coordinates.

Seeded randomness uses numpy's PCG64 generator; the algorithm is fixed
per release so that identical seeds reproduce identical levels.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from enum import IntEnum
from functools import lru_cache

import numpy as np


class Tile(IntEnum):
    AIR = 0
    SOLID = 1
    CHEST = 2
    ENEMY = 3
    BORDER = 4


TILE_NAMES = {Tile.AIR: "air", Tile.SOLID: "solid", Tile.CHEST: "chest", Tile.ENEMY: "enemy"}
TILE_FROM_NAME = {v: k for k, v in TILE_NAMES.items()}

#: Tiles a player's foot or head may occupy.
PASSABLE_TILES = (Tile.AIR, Tile.CHEST, Tile.ENEMY)
#: Tiles that support a standing player from below.
SOLID_TILES = (Tile.SOLID, Tile.BORDER)

WALLS = ("x0", "x1", "z0", "z1")


class LevelError(ValueError):
    """Raised for malformed levels, doors, or serialized payloads."""


@dataclass(frozen=True)
class Door:
    """A 2-tall wall opening. ``foot`` is the interior cell adjacent to the
    lower opening voxel; ``role`` is ``"entrance"``/``"exit"`` (None while
    enumerating candidate positions)."""

    wall: str
    foot: tuple[int, int, int]
    role: str | None = None

    def frame_foot(self, dims) -> tuple[int, int, int]:
        """Interior-basis coordinates of the lower opening voxel itself."""
        x, y, z = self.foot
        w, _, d = dims
        if self.wall == "x0":
            return (-1, y, z)
        if self.wall == "x1":
            return (w, y, z)
        if self.wall == "z0":
            return (x, y, -1)
        if self.wall == "z1":
            return (x, y, d)
        raise LevelError(f"unknown wall {self.wall!r}")

    def frame_head(self, dims) -> tuple[int, int, int]:
        fx, fy, fz = self.frame_foot(dims)
        return (fx, fy + 1, fz)


@dataclass(frozen=True)
class InitSpec:
    mode: str = "empty"  # "empty" | "uniform_random"
    solid_probability: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("empty", "uniform_random"):
            raise LevelError(f"unknown init mode {self.mode!r}")
        if not 0.0 <= self.solid_probability <= 1.0:
            raise LevelError("solid_probability must be in [0, 1]")


@dataclass
class Level:
    """Dense interior tile grid plus optional (entrance, exit) doors.

    Consumers other than the editing environment and NCA rollout must
    treat instances as immutable; those two own their working copies.
    """

    dims: tuple[int, int, int]
    tiles: np.ndarray
    doors: tuple[Door, Door] | None = None

    def __post_init__(self):
        w, h, d = self.dims
        if min(w, h, d) < 3:
            raise LevelError(f"all dims must be >= 3, got {self.dims}")
        if self.tiles.shape != (w, h, d):
            raise LevelError(f"tiles shape {self.tiles.shape} != dims {self.dims}")
        if self.doors is not None:
            a, b = self.doors
            for door in (a, b):
                if not is_valid_door(door, self.dims):
                    raise LevelError(f"invalid door {door}")
            if not is_valid_door_pair(a, b):
                raise LevelError(f"invalid door pair {a} / {b}")

    def __eq__(self, other):
        if not isinstance(other, Level):
            return NotImplemented
        return (
            self.dims == other.dims
            and np.array_equal(self.tiles, other.tiles)
            and self.doors == other.doors
        )

    @property
    def volume(self) -> int:
        w, h, d = self.dims
        return w * h * d

    def copy(self) -> "Level":
        return Level(self.dims, self.tiles.copy(), self.doors)

    def replace_tiles(self, tiles: np.ndarray) -> "Level":
        return Level(self.dims, tiles, self.doors)

    def padded_tiles(self) -> np.ndarray:
        """Interior grid wrapped in the BORDER shell, door openings carved
        as AIR. Shape ``(W+2, H+2, D+2)``; interior cell (x,y,z) sits at
        padded index (x+1, y+1, z+1)."""
        padded = np.pad(self.tiles, 1, constant_values=int(Tile.BORDER))
        if self.doors is not None:
            for door in self.doors:
                for vx, vy, vz in (door.frame_foot(self.dims), door.frame_head(self.dims)):
                    padded[vx + 1, vy + 1, vz + 1] = int(Tile.AIR)
        return padded


def new_level(dims, init: InitSpec, doors: tuple[Door, Door] | None = None) -> Level:
    """Create a level per ``init``; uniform_random samples each interior
    voxel independently SOLID with ``solid_probability``."""
    w, h, d = dims
    if min(w, h, d) < 3:
        raise LevelError(f"all dims must be >= 3, got {dims}")
    if init.mode == "empty":
        tiles = np.zeros((w, h, d), dtype=np.int8)
    else:
        rng = np.random.Generator(np.random.PCG64(init.seed))
        tiles = np.where(
            rng.random((w, h, d)) < init.solid_probability, int(Tile.SOLID), int(Tile.AIR)
        ).astype(np.int8)
    return Level(tuple(dims), tiles, doors)


def is_valid_door(door: Door, dims) -> bool:
    w, h, d = dims
    x, y, z = door.foot
    if not 0 <= y <= h - 2:
        return False
    if door.wall == "x0":
        return x == 0 and 0 <= z < d
    if door.wall == "x1":
        return x == w - 1 and 0 <= z < d
    if door.wall == "z0":
        return z == 0 and 0 <= x < w
    if door.wall == "z1":
        return z == d - 1 and 0 <= x < w
    return False


def valid_door_positions(dims) -> list[Door]:
    """All door positions, ordered by wall (x0, x1, z0, z1), then column
    index along the wall, then foot height."""
    w, h, d = dims
    if min(w, h, d) < 3:
        raise LevelError(f"all dims must be >= 3, got {dims}")
    positions = []
    for wall in WALLS:
        ncols = d if wall.startswith("x") else w
        for col in range(ncols):
            for y in range(h - 1):
                if wall == "x0":
                    foot = (0, y, col)
                elif wall == "x1":
                    foot = (w - 1, y, col)
                elif wall == "z0":
                    foot = (col, y, 0)
                else:
                    foot = (col, y, d - 1)
                positions.append(Door(wall, foot))
    return positions


def is_valid_door_pair(a: Door, b: Door) -> bool:
    """False when the feet overlap or share edges: Chebyshev distance <= 1."""
    dx = abs(a.foot[0] - b.foot[0])
    dy = abs(a.foot[1] - b.foot[1])
    dz = abs(a.foot[2] - b.foot[2])
    return max(dx, dy, dz) > 1


@lru_cache(maxsize=8)
def _valid_ordered_pairs(dims) -> tuple[tuple[Door, Door], ...]:
    positions = valid_door_positions(dims)
    pairs = []
    for a in positions:
        for b in positions:
            if (a.wall, a.foot) != (b.wall, b.foot) and is_valid_door_pair(a, b):
                pairs.append(
                    (
                        Door(a.wall, a.foot, role="entrance"),
                        Door(b.wall, b.foot, role="exit"),
                    )
                )
    return tuple(pairs)


def valid_door_pairs(dims) -> tuple[tuple[Door, Door], ...]:
    """Every valid ordered (entrance, exit) pair, in enumeration order."""
    return _valid_ordered_pairs(tuple(dims))


def sample_door_pair(dims, seed: int) -> tuple[Door, Door]:
    """Uniform draw over all valid ordered (entrance, exit) pairs."""
    pairs = valid_door_pairs(dims)
    rng = np.random.Generator(np.random.PCG64(seed))
    return pairs[int(rng.integers(len(pairs)))]


def emptiness(level: Level) -> float:
    """Fraction of interior voxels that are AIR (chest/enemy count as non-air)."""
    return float(np.count_nonzero(level.tiles == int(Tile.AIR))) / level.volume


# ---------------------------------------------------------------------------
# JSON serialization (normative wire format)

def level_to_dict(level: Level) -> dict:
    w, h, d = level.dims
    names = []
    for y in range(h):
        for z in range(d):
            for x in range(w):
                names.append(TILE_NAMES[Tile(int(level.tiles[x, y, z]))])
    payload = {"dims": [w, h, d], "tiles": names}
    if level.doors is not None:
        payload["doors"] = [
            {"wall": door.wall, "foot": list(door.foot), "role": door.role}
            for door in level.doors
        ]
    return payload


def level_from_dict(payload: dict) -> Level:
    try:
        w, h, d = payload["dims"]
        names = payload["tiles"]
    except (KeyError, ValueError, TypeError) as exc:
        raise LevelError(f"malformed level payload: {exc}") from exc
    if len(names) != w * h * d:
        raise LevelError(f"expected {w * h * d} tiles, got {len(names)}")
    tiles = np.zeros((w, h, d), dtype=np.int8)
    it = iter(names)
    for y in range(h):
        for z in range(d):
            for x in range(w):
                name = next(it)
                if name not in TILE_FROM_NAME:
                    raise LevelError(f"unknown tile name {name!r}")
                tiles[x, y, z] = int(TILE_FROM_NAME[name])
    doors = None
    if payload.get("doors"):
        entries = payload["doors"]
        if len(entries) != 2:
            raise LevelError("doors must be an (entrance, exit) pair")
        doors = tuple(
            Door(e["wall"], tuple(int(c) for c in e["foot"]), e.get("role"))
            for e in entries
        )
    return Level((w, h, d), tiles, doors)


def level_to_json(level: Level) -> str:
    return json.dumps(level_to_dict(level), separators=(",", ":"))


def level_from_json(text: str) -> Level:
    return level_from_dict(json.loads(text))

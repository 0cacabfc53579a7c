"""Traversability graph over standing positions and weighted shortest paths.

A standing position is an interior voxel whose foot and head tiles are
passable (air/chest/enemy) over solid support (solid or border). Moves:

* flat  — one step along x or z at the same height, cost 1;
* stair — one step along x or z, one up or down, with an extra voxel of
  head-room above the lower end of the move, cost 3;
* jump  — two steps along x or z (optionally one up or down) across a
  gap column whose two voxels below the take-off height are passable,
  with extra head-room above both ends and the gap, cost 3.

Every edge is paired with a reverse edge of the same kind class, so all
paths are re-traversable. Door openings contribute virtual nodes joined
by cost-1 flat moves to every standing position in the interior column
they face.

Path length convention (normative): ``length = 2 + sum of move costs``.
The start contributes 2 (the player's foot and head voxels); a flat move
contributes 1; stairs and jumps contribute 3 each. This is the unique
convention reproducing both a 14-length diameter for the empty 7x7x7
level and a per-stair contribution of 3.

Shortest paths are deterministic: among equal-cost paths the one whose
node sequence is lexicographically smallest (interior nodes ordered by
(x, y, z), door nodes after) is returned.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra as _csgraph_dijkstra

from .level import Door, Level, PASSABLE_TILES, SOLID_TILES, Tile

FLAT_COST = 1
STAIR_COST = 3
JUMP_COST = 3

Coord = tuple[int, int, int]


@dataclass(frozen=True)
class Move:
    kind: str  # "flat" | "stair_up" | "stair_down" | "jump"
    src: Coord
    dst: Coord
    cost: int


@dataclass
class PathReport:
    """An explicit traversal: ordered moves, tile-count length, jump count."""

    start: Coord | None
    moves: list[Move]
    length: int
    jumps: int

    @property
    def cost(self) -> int:
        return sum(m.cost for m in self.moves)

    def voxels(self) -> list[Coord]:
        """Foot voxels visited, in order (door nodes use frame coordinates)."""
        if self.start is None:
            return []
        out = [self.start]
        out.extend(m.dst for m in self.moves)
        return out

    def to_dict(self) -> dict:
        return {
            "start": list(self.start) if self.start is not None else None,
            "length": self.length,
            "jumps": self.jumps,
            "moves": [
                {"kind": m.kind, "from": list(m.src), "to": list(m.dst), "cost": m.cost}
                for m in self.moves
            ],
        }


def _masks(level: Level):
    """Boolean passable/solid masks over the padded grid."""
    padded = level.padded_tiles()
    passable = np.isin(padded, [int(t) for t in PASSABLE_TILES])
    solid = np.isin(padded, [int(t) for t in SOLID_TILES])
    return passable, solid


def _shift(arr: np.ndarray, dx: int, dy: int, dz: int) -> np.ndarray:
    """arr shifted so result[p] = arr[p + (dx,dy,dz)], False outside."""
    out = np.zeros_like(arr)
    w, h, d = arr.shape
    xs = slice(max(dx, 0), w + min(dx, 0))
    ys = slice(max(dy, 0), h + min(dy, 0))
    zs = slice(max(dz, 0), d + min(dz, 0))
    xd = slice(max(-dx, 0), w + min(-dx, 0))
    yd = slice(max(-dy, 0), h + min(-dy, 0))
    zd = slice(max(-dz, 0), d + min(-dz, 0))
    out[xd, yd, zd] = arr[xs, ys, zs]
    return out


def standing_mask(level: Level) -> np.ndarray:
    """Interior standing-position mask, shape = level dims."""
    passable, solid = _masks(level)
    stand = passable & _shift(passable, 0, 1, 0) & _shift(solid, 0, -1, 0)
    return stand[1:-1, 1:-1, 1:-1]


def standing_positions(level: Level) -> set[Coord]:
    """Interior standing positions plus door feet as virtual positions
    (door feet reported in frame coordinates, e.g. x = -1)."""
    coords = {tuple(int(c) for c in p) for p in np.argwhere(standing_mask(level))}
    if level.doors is not None:
        for door in level.doors:
            coords.add(door.frame_foot(level.dims))
    return coords


_HORIZONTAL = ((1, 0), (-1, 0), (0, 1), (0, -1))  # (dx, dz)


class MoveGraph:
    """Nodes (interior standing positions in lexicographic order, then
    door nodes) with a CSR cost matrix over all move edges."""

    def __init__(self, level: Level, nodes: list[Coord], matrix: csr_matrix):
        self.level = level
        self.nodes = nodes
        self.matrix = matrix
        self.index = {c: i for i, c in enumerate(nodes)}
        self._door_nodes = set()
        if level.doors is not None:
            self._door_nodes = {d.frame_foot(level.dims) for d in level.doors}

    def __len__(self) -> int:
        return len(self.nodes)

    def neighbors(self, i: int):
        m = self.matrix
        for k in range(m.indptr[i], m.indptr[i + 1]):
            yield int(m.indices[k]), int(m.data[k])

    def move_kind(self, src: Coord, dst: Coord) -> str:
        if src in self._door_nodes or dst in self._door_nodes:
            return "flat"
        dy = dst[1] - src[1]
        horiz = abs(dst[0] - src[0]) + abs(dst[2] - src[2])
        if horiz == 2:
            return "jump"
        if dy == 1:
            return "stair_up"
        if dy == -1:
            return "stair_down"
        return "flat"


def build_move_graph(level: Level, include_level_jumps: bool = True) -> MoveGraph:
    """Construct the move graph. ``include_level_jumps=False`` restricts
    jumps to +-1 height changes (drops the same-height variant)."""
    passable, solid = _masks(level)
    stand_pad = passable & _shift(passable, 0, 1, 0) & _shift(solid, 0, -1, 0)
    # Restrict to the interior; door nodes are added separately.
    interior = np.zeros_like(stand_pad)
    interior[1:-1, 1:-1, 1:-1] = True
    stand_pad &= interior

    w, h, d = level.dims
    stand = stand_pad[1:-1, 1:-1, 1:-1]
    coords = np.argwhere(stand)
    nodes: list[Coord] = [tuple(int(c) for c in p) for p in coords]
    node_id = np.full((w, h, d), -1, dtype=np.int64)
    if len(coords):
        node_id[coords[:, 0], coords[:, 1], coords[:, 2]] = np.arange(len(coords))

    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    costs: list[np.ndarray] = []

    def add_edges(mask_pad: np.ndarray, dx: int, dy: int, dz: int, cost: int):
        # mask_pad[u] true => directed edge u -> u + (dx,dy,dz); also adds reverse.
        m = mask_pad[1:-1, 1:-1, 1:-1]
        src = np.argwhere(m)
        if src.size == 0:
            return
        dst = src + np.array([dx, dy, dz])
        a = node_id[src[:, 0], src[:, 1], src[:, 2]]
        b = node_id[dst[:, 0], dst[:, 1], dst[:, 2]]
        rows.append(a)
        cols.append(b)
        costs.append(np.full(len(a), cost, dtype=np.int64))
        rows.append(b)
        cols.append(a)
        costs.append(np.full(len(a), cost, dtype=np.int64))

    head2 = _shift(passable, 0, 2, 0)  # passable two above the foot
    for dx, dz in _HORIZONTAL:
        to = lambda ddy, k=1: _shift(stand_pad, k * dx, ddy, k * dz)
        # Flat: both ends standing. Generated for +x/+z only; reverse covers the rest.
        if (dx, dz) in ((1, 0), (0, 1)):
            add_edges(stand_pad & to(0), dx, 0, dz, FLAT_COST)

        # Stair up: extra head-room above the (lower) source. The mirrored
        # descent predicate is identical, so the reverse edge is exact.
        add_edges(stand_pad & to(1) & head2, dx, 1, dz, STAIR_COST)

        # Jumps: directed predicate per take-off point; union with the
        # reverse direction keeps every path re-traversable.
        gap = _shift(passable, dx, -1, dz) & _shift(passable, dx, -2, dz)
        mid_head = _shift(passable, dx, 2, dz)
        dys = (-1, 0, 1) if include_level_jumps else (-1, 1)
        for jdy in dys:
            land = to(jdy, 2) & _shift(passable, 2 * dx, jdy + 2, 2 * dz)
            mask = stand_pad & head2 & gap & mid_head & land
            if (dx, dz) in ((1, 0), (0, 1)) or jdy != 0:
                add_edges(mask, 2 * dx, jdy, 2 * dz, JUMP_COST)

    n = len(nodes)
    door_rows: list[int] = []
    door_cols: list[int] = []
    if level.doors is not None:
        for door in level.doors:
            door_idx = n
            n += 1
            nodes.append(door.frame_foot(level.dims))
            ax, _, az = door.foot
            column = np.flatnonzero(stand[ax, :, az])
            for y in column:
                j = int(node_id[ax, int(y), az])
                door_rows.extend((door_idx, j))
                door_cols.extend((j, door_idx))

    if rows:
        row = np.concatenate(rows + [np.asarray(door_rows, dtype=np.int64)])
        col = np.concatenate(cols + [np.asarray(door_cols, dtype=np.int64)])
        data = np.concatenate(costs + [np.full(len(door_rows), FLAT_COST, dtype=np.int64)])
    else:
        row = np.asarray(door_rows, dtype=np.int64)
        col = np.asarray(door_cols, dtype=np.int64)
        data = np.full(len(door_rows), FLAT_COST, dtype=np.int64)

    # Duplicate (u, v) entries would be summed by CSR construction; the
    # generators above emit each directed edge at most twice (forward +
    # reverse of the opposite direction), so collapse to the minimum cost
    # by deduplicating first.
    if len(row):
        keys = row * n + col
        order = np.argsort(keys, kind="stable")
        keys = keys[order]
        keep = np.ones(len(keys), dtype=bool)
        keep[1:] = keys[1:] != keys[:-1]
        row, col, data = row[order][keep], col[order][keep], data[order][keep]

    matrix = csr_matrix((data, (row, col)), shape=(n, n))
    return MoveGraph(level, nodes, matrix)


def _dijkstra_costs(graph: MoveGraph, source: int) -> np.ndarray:
    """Single-source costs with deterministic (index-ordered) settling."""
    n = len(graph)
    dist = np.full(n, np.inf)
    dist[source] = 0
    todo = [(0, source)]
    done = np.zeros(n, dtype=bool)
    while todo:
        du, u = heapq.heappop(todo)
        if done[u]:
            continue
        done[u] = True
        for v, c in graph.neighbors(u):
            nd = du + c
            if nd < dist[v]:
                dist[v] = nd
                heapq.heappush(todo, (nd, v))
    return dist


def _lexicographic_path(graph: MoveGraph, src: int, dst: int) -> list[int] | None:
    """Indices of the lexicographically-smallest minimum-cost path."""
    dist_src = _dijkstra_costs(graph, src)
    if not np.isfinite(dist_src[dst]):
        return None
    dist_dst = _dijkstra_costs(graph, dst)
    total = dist_src[dst]
    path = [src]
    u = src
    while u != dst:
        best = None
        for v, c in graph.neighbors(u):
            if dist_src[u] + c + dist_dst[v] == total:
                if best is None or v < best:
                    best = v
        path.append(best)
        u = best
    return path


def _report_from_indices(graph: MoveGraph, path: list[int]) -> PathReport:
    moves = []
    jumps = 0
    for a, b in zip(path, path[1:]):
        ca, cb = graph.nodes[a], graph.nodes[b]
        kind = graph.move_kind(ca, cb)
        cost = int(graph.matrix[a, b])
        if kind == "jump":
            jumps += 1
        moves.append(Move(kind, ca, cb, cost))
    length = 2 + sum(m.cost for m in moves)
    return PathReport(graph.nodes[path[0]], moves, length, jumps)


def shortest_path(
    level_or_graph, src: Coord, dst: Coord
) -> PathReport | None:
    """Minimum-cost path between standing positions, or None if
    disconnected (or either endpoint is not a node)."""
    graph = _as_graph(level_or_graph)
    if src not in graph.index or dst not in graph.index:
        return None
    si, di = graph.index[src], graph.index[dst]
    path = _lexicographic_path(graph, si, di)
    if path is None:
        return None
    return _report_from_indices(graph, path)


def _as_graph(level_or_graph) -> MoveGraph:
    if isinstance(level_or_graph, MoveGraph):
        return level_or_graph
    return build_move_graph(level_or_graph)


def single_source_costs(level_or_graph, src: Coord) -> dict[Coord, int]:
    """Minimum path costs from ``src`` to every reachable node."""
    graph = _as_graph(level_or_graph)
    if src not in graph.index:
        return {}
    dist = _dijkstra_costs(graph, graph.index[src])
    return {
        graph.nodes[i]: int(dist[i]) for i in range(len(graph)) if np.isfinite(dist[i])
    }


def all_pairs_costs(graph: MoveGraph) -> np.ndarray:
    """Dense (n, n) matrix of minimum path costs (inf where disconnected)."""
    n = len(graph)
    if n == 0:
        return np.zeros((0, 0))
    return _csgraph_dijkstra(graph.matrix, directed=True)


def diameter(level_or_graph) -> PathReport:
    """Longest shortest path over all ordered node pairs; zero-length
    report when no standing positions exist."""
    graph = _as_graph(level_or_graph)
    n = len(graph)
    if n == 0:
        return PathReport(None, [], 0, 0)
    costs = all_pairs_costs(graph)
    finite = np.where(np.isfinite(costs), costs, -1.0)
    flat_idx = int(np.argmax(finite))
    si, di = divmod(flat_idx, n)
    path = _lexicographic_path(graph, si, di)
    return _report_from_indices(graph, path)


def farthest_path(level_or_graph, src: Coord) -> PathReport | None:
    """Shortest path from ``src`` to its most distant reachable node
    (the source's eccentricity); None if src is not a node."""
    graph = _as_graph(level_or_graph)
    if src not in graph.index:
        return None
    si = graph.index[src]
    dist = _dijkstra_costs(graph, si)
    dist = np.where(np.isfinite(dist), dist, -1.0)
    di = int(np.argmax(dist))
    path = _lexicographic_path(graph, si, di)
    return _report_from_indices(graph, path)


@dataclass(frozen=True)
class NearestEnemy:
    """Result of the entrance-to-nearest-enemy query. ``length`` is None
    when absent; ``reason`` distinguishes "no-enemies" from "unreachable"."""

    length: int | None
    reason: str  # "ok" | "no-enemies" | "unreachable"
    report: PathReport | None = None


def nearest_enemy_distance(level_or_graph, entrance: Door) -> NearestEnemy:
    graph = _as_graph(level_or_graph)
    level = graph.level
    if not bool((level.tiles == int(Tile.ENEMY)).any()):
        return NearestEnemy(None, "no-enemies")
    enemy_nodes = [
        i
        for i, c in enumerate(graph.nodes)
        if 0 <= c[0] < level.dims[0]
        and 0 <= c[2] < level.dims[2]
        and level.tiles[c] == int(Tile.ENEMY)
    ]
    src = entrance.frame_foot(level.dims)
    if src not in graph.index or not enemy_nodes:
        return NearestEnemy(None, "unreachable")
    dist = _dijkstra_costs(graph, graph.index[src])
    best = None
    for i in enemy_nodes:
        if np.isfinite(dist[i]) and (best is None or dist[i] < dist[best] or (dist[i] == dist[best] and i < best)):
            best = i
    if best is None:
        return NearestEnemy(None, "unreachable")
    path = _lexicographic_path(graph, graph.index[src], best)
    report = _report_from_indices(graph, path)
    return NearestEnemy(report.length, "ok", report)

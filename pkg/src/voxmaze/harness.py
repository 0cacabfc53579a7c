"""Experiment harness: door-pair sweeps, symmetry collapses,
controllability sweeps, and an independent pathfinding oracle.

The oracle deliberately re-implements traversability with plain Python
triple loops and Floyd-Warshall all-pairs distances so the production
graph builder and Dijkstra search are checked against a second,
independently written route.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import nca, tasks, traverse
from .env import EditEnv, greedy_policy, random_policy_factory, run_episode
from .level import (
    Door,
    InitSpec,
    Level,
    Tile,
    new_level,
    sample_door_pair,
    valid_door_pairs,
)


# ---------------------------------------------------------------------------
# Naive reference implementation (oracle side of the dual route)

def _naive_tile(level: Level, x: int, y: int, z: int):
    w, h, d = level.dims
    if 0 <= x < w and 0 <= y < h and 0 <= z < d:
        return int(level.tiles[x, y, z])
    if -1 <= x <= w and -1 <= y <= h and -1 <= z <= d:
        if level.doors is not None:
            for door in level.doors:
                if (x, y, z) in (door.frame_foot(level.dims), door.frame_head(level.dims)):
                    return int(Tile.AIR)
        return int(Tile.BORDER)
    return None


def _naive_passable(level, x, y, z):
    return _naive_tile(level, x, y, z) in (int(Tile.AIR), int(Tile.CHEST), int(Tile.ENEMY))


def _naive_solid(level, x, y, z):
    return _naive_tile(level, x, y, z) in (int(Tile.SOLID), int(Tile.BORDER))


def naive_standing_positions(level: Level) -> set[tuple[int, int, int]]:
    w, h, d = level.dims
    out = set()
    for x in range(w):
        for y in range(h):
            for z in range(d):
                if (
                    _naive_passable(level, x, y, z)
                    and _naive_passable(level, x, y + 1, z)
                    and _naive_solid(level, x, y - 1, z)
                ):
                    out.add((x, y, z))
    if level.doors is not None:
        for door in level.doors:
            out.add(door.frame_foot(level.dims))
    return out


def naive_move_graph(level: Level):
    """(nodes, adjacency) built by exhaustive per-voxel predicate checks;
    adjacency maps node -> {node: cost}."""
    w, h, d = level.dims
    interior = sorted(
        p for p in naive_standing_positions(level) if 0 <= p[0] < w and 0 <= p[2] < d
    )
    nodes = list(interior)
    door_feet = []
    if level.doors is not None:
        for door in level.doors:
            foot = door.frame_foot(level.dims)
            nodes.append(foot)
            door_feet.append((door, foot))
    standing = set(interior)
    adj: dict = {n: {} for n in nodes}

    def connect(a, b, cost):
        adj[a][b] = min(adj[a].get(b, cost), cost)
        adj[b][a] = min(adj[b].get(a, cost), cost)

    for (x, y, z) in interior:
        for dx, dz in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            if (x + dx, y, z + dz) in standing:
                connect((x, y, z), (x + dx, y, z + dz), 1)
            up = (x + dx, y + 1, z + dz)
            if up in standing and _naive_passable(level, x, y + 2, z):
                connect((x, y, z), up, 3)
            down = (x + dx, y - 1, z + dz)
            if down in standing and _naive_passable(level, x + dx, y + 1, z + dz):
                connect((x, y, z), down, 3)
            for dy in (-1, 0, 1):
                v = (x + 2 * dx, y + dy, z + 2 * dz)
                if (
                    v in standing
                    and _naive_passable(level, x + dx, y - 1, z + dz)
                    and _naive_passable(level, x + dx, y - 2, z + dz)
                    and _naive_passable(level, x, y + 2, z)
                    and _naive_passable(level, x + dx, y + 2, z + dz)
                    and _naive_passable(level, v[0], v[1] + 2, v[2])
                ):
                    connect((x, y, z), v, 3)
    for door, foot in door_feet:
        ax, _, az = door.foot
        for y in range(h):
            if (ax, y, az) in standing:
                connect(foot, (ax, y, az), 1)
    return nodes, adj


def floyd_warshall_costs(nodes, adj) -> np.ndarray:
    n = len(nodes)
    index = {node: i for i, node in enumerate(nodes)}
    dist = np.full((n, n), np.inf)
    np.fill_diagonal(dist, 0.0)
    for a, nbrs in adj.items():
        for b, cost in nbrs.items():
            dist[index[a], index[b]] = min(dist[index[a], index[b]], cost)
    for k in range(n):
        np.minimum(dist, dist[:, k, None] + dist[None, k, :], out=dist)
    return dist


@dataclass
class OracleReport:
    levels_checked: int
    mismatches: list

    @property
    def passed(self) -> bool:
        return not self.mismatches


def _compare_level(level: Level, label) -> list:
    mismatches = []
    graph = traverse.build_move_graph(level)
    nodes, adj = naive_move_graph(level)
    if graph.nodes != nodes:
        mismatches.append({"case": label, "kind": "nodes",
                           "detail": f"{len(graph.nodes)} vs {len(nodes)} nodes"})
        return mismatches
    fast_adj = {n: {} for n in nodes}
    m = graph.matrix.tocoo()
    for i, j, c in zip(m.row, m.col, m.data):
        fast_adj[nodes[i]][nodes[j]] = int(c)
    if fast_adj != adj:
        for n in nodes:
            if fast_adj[n] != adj[n]:
                mismatches.append(
                    {"case": label, "kind": "edges", "node": n,
                     "detail": f"fast={fast_adj[n]} naive={adj[n]}"}
                )
        return mismatches
    fast_costs = traverse.all_pairs_costs(graph)
    naive_costs = floyd_warshall_costs(nodes, adj)
    if not np.array_equal(fast_costs, naive_costs):
        bad = np.argwhere(fast_costs != naive_costs)
        i, j = bad[0]
        mismatches.append(
            {"case": label, "kind": "costs", "pair": (nodes[i], nodes[j]),
             "detail": f"fast={fast_costs[i, j]} naive={naive_costs[i, j]}"}
        )
        return mismatches
    if len(nodes):
        naive_diam = float(naive_costs[np.isfinite(naive_costs)].max())
        rep = traverse.diameter(graph)
        if rep.length != 2 + naive_diam:
            mismatches.append(
                {"case": label, "kind": "diameter",
                 "detail": f"fast={rep.length} naive={2 + naive_diam}"}
            )
    else:
        if traverse.diameter(graph).length != 0:
            mismatches.append({"case": label, "kind": "diameter", "detail": "expected 0"})
    return mismatches


def oracle_check(dims=(5, 5, 5), samples: int = 100, seed: int = 0,
                 include_doors: bool = True) -> OracleReport:
    """Cross-check the production graph/paths against the naive oracle on
    random levels (plus the all-air and all-solid fixed cases). Any
    mismatch carries its reproducer seed."""
    if max(dims) > 5:
        raise ValueError("oracle_check is meant for dims <= 5")
    mismatches = []
    empty = new_level(dims, InitSpec("empty"))
    mismatches += _compare_level(empty, {"fixed": "all-air"})
    solid = new_level(dims, InitSpec("empty"))
    solid.tiles[:] = int(Tile.SOLID)
    mismatches += _compare_level(solid, {"fixed": "all-solid"})
    checked = 2
    for i in range(samples):
        level_seed = int(np.random.SeedSequence((seed, i)).generate_state(1, np.uint64)[0])
        rng = np.random.Generator(np.random.PCG64(level_seed))
        p = float(rng.uniform(0.1, 0.9))
        doors = None
        if include_doors and i % 2 == 0:
            doors = sample_door_pair(dims, level_seed)
        level = new_level(dims, InitSpec("uniform_random", p, level_seed), doors)
        mismatches += _compare_level(level, {"sample": i, "seed": level_seed})
        checked += 1
    return OracleReport(checked, mismatches)


# ---------------------------------------------------------------------------
# Generators

class ConstantGenerator:
    """Fills the interior with one tile; the degenerate baseline."""

    def __init__(self, tile: Tile):
        self.tile = tile
        self.name = f"all_{tile.name.lower()}"

    def generate(self, spec, level: Level, seed: int) -> Level:
        tiles = np.full(level.dims, int(self.tile), dtype=np.int8)
        return Level(level.dims, tiles, level.doors)


class NcaGenerator:
    """Rolls out stored NCA parameters; blind to controllable targets."""

    def __init__(self, params: nca.GeneratorParams, steps: int = 50, name: str = "nca"):
        self.params = params
        self.steps = steps
        self.name = name

    def generate(self, spec, level: Level, seed: int) -> Level:
        return nca.rollout(self.params, level, spec, self.steps)


class PolicyGenerator:
    """Runs a scripted policy (greedy or random) for a full episode."""

    def __init__(self, kind: str = "greedy", sweeps: int = 2,
                 reward_sign: str = "improvement", maximize_mode: str = "signed"):
        if kind not in ("greedy", "random"):
            raise ValueError(f"unknown policy {kind!r}")
        self.kind = kind
        self.sweeps = sweeps
        self.reward_sign = reward_sign
        self.maximize_mode = maximize_mode
        self.name = kind

    def generate(self, spec, level: Level, seed: int) -> Level:
        env = EditEnv(
            spec,
            dims=level.dims,
            sweeps=self.sweeps,
            reward_sign=self.reward_sign,
            maximize_mode=self.maximize_mode,
            resample_targets=False,
        )
        policy = greedy_policy if self.kind == "greedy" else random_policy_factory(seed)
        final, _, _ = run_episode(env, policy, seed, doors=level.doors, level=level)
        return final


def builtin_generator(name: str, steps: int = 50, sweeps: int = 2):
    """CLI helper: builtin name or a path to an NCA params file."""
    import os

    if name in ("greedy", "random"):
        return PolicyGenerator(name, sweeps=sweeps)
    if name == "all_air":
        return ConstantGenerator(Tile.AIR)
    if name == "all_solid":
        return ConstantGenerator(Tile.SOLID)
    if os.path.exists(name):
        return NcaGenerator(nca.load_params(name), steps=steps,
                            name=os.path.basename(name))
    raise ValueError(
        f"unknown generator {name!r} (builtins: greedy, random, all_air, all_solid,"
        " or a params file path)"
    )


# ---------------------------------------------------------------------------
# Door sweep

@dataclass
class SweepRecord:
    entrance: Door
    exit: Door
    connected: bool
    path_length: int
    n_jumps: int
    generator_id: str
    seed: int


def pair_seed(sweep_seed: int, pair_index: int) -> int:
    return int(np.random.SeedSequence((sweep_seed, pair_index)).generate_state(1, np.uint64)[0])


def _sweep_one(payload) -> "SweepRecord":
    generator, spec, dims, entrance, exit_, s = payload
    initial = new_level(dims, InitSpec("empty"), (entrance, exit_))
    final = generator.generate(spec, initial, s)
    ev = tasks.evaluate_level(final, spec)
    return SweepRecord(
        entrance,
        exit_,
        bool(ev.connected),
        int(ev.metrics["path_length"]),
        int(ev.metrics["n_jumps"]),
        generator.name,
        s,
    )


def door_sweep(generator, dims=(7, 7, 7), seed: int = 0,
               spec: tasks.TaskSpec | None = None, jobs: int = 1) -> list[SweepRecord]:
    """One episode per valid ordered door pair, from an empty interior,
    with per-pair seeds derived from (sweep seed, pair index). Episodes
    are independent; ``jobs`` parallelizes them without changing the
    result order or content."""
    spec = spec or tasks.default_task_spec("doors")
    payloads = [
        (generator, spec, tuple(dims), entrance, exit_, pair_seed(seed, idx))
        for idx, (entrance, exit_) in enumerate(valid_door_pairs(dims))
    ]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_sweep_one, payloads, chunksize=64))
    return [_sweep_one(p) for p in payloads]


def write_sweep_csv(records: list[SweepRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["entrance_wall", "entrance_xyz", "exit_wall", "exit_xyz",
             "connected", "path_length", "n_jumps", "seed"]
        )
        for r in records:
            writer.writerow(
                [
                    r.entrance.wall,
                    ";".join(str(c) for c in r.entrance.foot),
                    r.exit.wall,
                    ";".join(str(c) for c in r.exit.foot),
                    "true" if r.connected else "false",
                    r.path_length,
                    r.n_jumps,
                    r.seed,
                ]
            )


def read_sweep_csv(path, generator_id: str = "") -> list[SweepRecord]:
    records = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            records.append(
                SweepRecord(
                    Door(row["entrance_wall"],
                         tuple(int(c) for c in row["entrance_xyz"].split(";")), "entrance"),
                    Door(row["exit_wall"],
                         tuple(int(c) for c in row["exit_xyz"].split(";")), "exit"),
                    row["connected"] == "true",
                    int(row["path_length"]),
                    int(row["n_jumps"]),
                    generator_id,
                    int(row["seed"]),
                )
            )
    return records


# ---------------------------------------------------------------------------
# Aggregations

def collapse_symmetric(records: list[SweepRecord], dims) -> list[dict]:
    """Group by (|dx|, |dy|, |dz|) of the door feet. Emits every key in
    range; keys with no valid pairs come out with n_pairs = 0 (the empty
    heatmap cells). Mean path length is over connected pairs only."""
    w, h, d = dims
    groups: dict[tuple[int, int, int], list[SweepRecord]] = {}
    for r in records:
        key = tuple(abs(a - b) for a, b in zip(r.entrance.foot, r.exit.foot))
        groups.setdefault(key, []).append(r)
    rows = []
    for dx in range(w):
        for dy in range(h - 1):
            for dz in range(d):
                members = groups.get((dx, dy, dz), [])
                connected = [r for r in members if r.connected]
                rows.append(
                    {
                        "dx": dx,
                        "dy": dy,
                        "dz": dz,
                        "n_pairs": len(members),
                        "n_connected": len(connected),
                        "failure_rate": (
                            (len(members) - len(connected)) / len(members) if members else None
                        ),
                        "mean_path_length": (
                            sum(r.path_length for r in connected) / len(connected)
                            if connected
                            else None
                        ),
                    }
                )
    return rows


def write_collapsed_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["dx", "dy", "dz", "n_pairs", "n_connected", "failure_rate", "mean_path_length"]
        )
        for r in rows:
            writer.writerow(
                [
                    r["dx"], r["dy"], r["dz"], r["n_pairs"], r["n_connected"],
                    "" if r["failure_rate"] is None else repr(r["failure_rate"]),
                    "" if r["mean_path_length"] is None else repr(r["mean_path_length"]),
                ]
            )


def circumference_index(door: Door, dims) -> int:
    """Index of the door's wall column along the border circumference.
    Walk order: z0 wall by +x, x1 wall by +z, z1 wall by -x, x0 wall by
    -z; heights are collapsed."""
    w, _, d = dims
    x, _, z = door.foot
    if door.wall == "z0":
        return x
    if door.wall == "x1":
        return w + z
    if door.wall == "z1":
        return w + d + (w - 1 - x)
    if door.wall == "x0":
        return 2 * w + d + (d - 1 - z)
    raise ValueError(f"unknown wall {door.wall!r}")


def unravel_circumference(records: list[SweepRecord], dims):
    """Two (circumference x circumference) matrices: mean path length of
    connected pairs, and failure rate; NaN where no pairs land."""
    w, _, d = dims
    size = 2 * w + 2 * d
    total = np.zeros((size, size))
    connected_count = np.zeros((size, size))
    count = np.zeros((size, size))
    for r in records:
        i = circumference_index(r.entrance, dims)
        j = circumference_index(r.exit, dims)
        count[i, j] += 1
        if r.connected:
            connected_count[i, j] += 1
            total[i, j] += r.path_length
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_length = np.where(connected_count > 0, total / connected_count, np.nan)
        failure = np.where(count > 0, (count - connected_count) / count, np.nan)
    return mean_length, failure


# ---------------------------------------------------------------------------
# Controllability sweep

def controllability_sweep(
    generator,
    targets,
    dims=(7, 7, 7),
    episodes: int = 20,
    seed: int = 0,
    task: str = "diameter",
    metric: str = "diameter",
    keep_levels: bool = False,
):
    """For each target, run the generator over a fixed set of episode
    seeds (shared across targets, so a target-blind generator yields an
    exactly constant column) and record achieved-metric statistics.
    ``keep_levels`` additionally returns {target: [final levels]} so the
    table can be recomputed from artifacts."""
    base = tasks.default_task_spec(task, controllable=(metric,))
    rows = []
    levels: dict[float, list[Level]] = {}
    episode_seeds = [pair_seed(seed, i) for i in range(episodes)]
    for target in targets:
        resolved = tasks.TaskSpec(
            base.task,
            tuple(
                m if m.name != metric
                else tasks.MetricSpec(m.name, m.weight, tasks.Target.scalar(target))
                for m in base.metrics
            ),
            base.action_tiles,
            base.controllable,
        )
        achieved = []
        finals = []
        for ep_seed in episode_seeds:
            doors = sample_door_pair(dims, ep_seed) if resolved.has_doors else None
            initial = new_level(dims, InitSpec("empty"), doors)
            final = generator.generate(resolved, initial, ep_seed)
            finals.append(final)
            achieved.append(tasks.evaluate_level(final, resolved).metrics[metric])
        arr = np.asarray(achieved)
        rows.append(
            {
                "target": float(target),
                "mean": float(arr.mean()),
                "std": float(arr.std()),
                "n": len(arr),
            }
        )
        levels[float(target)] = finals
    if keep_levels:
        return rows, levels
    return rows


def write_control_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["target", "mean", "std", "n"])
        for r in rows:
            writer.writerow([repr(r["target"]), repr(r["mean"]), repr(r["std"]), r["n"]])

"""Task definitions: metric tables, design loss, and step reward.

The three built-in tasks and their default metric tables:

===========  ==============  ======  =========
task         metric          weight  target
===========  ==============  ======  =========
diameter     n_jumps         1       5
             diameter        1       max
doors        n_jumps         1.5     5
             diameter        1       max
             path_length     1.2     max
dungeon      n_jumps         1       [2, 5]
             n_chests        3       1
             n_enemies       1       [2, 5]
             nearest_enemy   2       [5, inf)
             path_length     1       max
===========  ==============  ======  =========

Loss is the weighted sum of per-metric target distances. "max" targets
enter the sum signed (``-w * m``) by default so that growing the metric
lowers the loss; ``maximize_mode="paper"`` keeps the literal unsigned
``+w * m`` form. Reward defaults to ``previous_loss - new_loss``
(positive when the level improves); ``sign="paper"`` flips it.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from . import traverse
from .level import Level, Tile, TILE_NAMES


class TaskError(ValueError):
    """Raised when a level does not match the task it is evaluated under."""


@dataclass(frozen=True)
class Target:
    kind: str  # "scalar" | "interval" | "maximize"
    value: float = 0.0
    lo: float = 0.0
    hi: float = 0.0

    @staticmethod
    def scalar(value: float) -> "Target":
        return Target("scalar", value=float(value))

    @staticmethod
    def interval(lo: float, hi: float) -> "Target":
        if lo > hi:
            raise TaskError(f"interval lo {lo} > hi {hi}")
        return Target("interval", lo=float(lo), hi=float(hi))

    @staticmethod
    def maximize() -> "Target":
        return Target("maximize")

    def distance(self, m: float) -> float:
        """Distance from measured value to the target (maximize => distance
        to the metric minimum, 0)."""
        if self.kind == "scalar":
            return abs(self.value - m)
        if self.kind == "interval":
            if self.lo <= m <= self.hi:
                return 0.0
            return min(abs(m - self.lo), abs(m - self.hi))
        return float(m)


@dataclass(frozen=True)
class MetricSpec:
    name: str
    weight: float
    target: Target

    def __post_init__(self):
        if self.weight <= 0:
            raise TaskError(f"metric {self.name!r} weight must be positive")


@dataclass(frozen=True)
class TaskSpec:
    task: str  # "diameter" | "doors" | "dungeon"
    metrics: tuple[MetricSpec, ...]
    action_tiles: tuple[Tile, ...]
    controllable: tuple[str, ...] = ()

    @property
    def has_doors(self) -> bool:
        return self.task in ("doors", "dungeon")

    def metric(self, name: str) -> MetricSpec:
        for m in self.metrics:
            if m.name == name:
                return m
        raise TaskError(f"task {self.task!r} has no metric {name!r}")

    def metric_names(self) -> tuple[str, ...]:
        return tuple(m.name for m in self.metrics)


_TABLE = {
    "diameter": (
        ("n_jumps", 1.0, Target.scalar(5)),
        ("diameter", 1.0, Target.maximize()),
    ),
    "doors": (
        ("n_jumps", 1.5, Target.scalar(5)),
        ("diameter", 1.0, Target.maximize()),
        ("path_length", 1.2, Target.maximize()),
    ),
    "dungeon": (
        ("n_jumps", 1.0, Target.interval(2, 5)),
        ("n_chests", 3.0, Target.scalar(1)),
        ("n_enemies", 1.0, Target.interval(2, 5)),
        ("nearest_enemy", 2.0, Target.interval(5, math.inf)),
        ("path_length", 1.0, Target.maximize()),
    ),
}

_ACTION_TILES = {
    "diameter": (Tile.AIR, Tile.SOLID),
    "doors": (Tile.AIR, Tile.SOLID),
    "dungeon": (Tile.AIR, Tile.SOLID, Tile.CHEST, Tile.ENEMY),
}

TASK_NAMES = tuple(_TABLE)


def default_task_spec(task: str, controllable: tuple[str, ...] = ()) -> TaskSpec:
    if task not in _TABLE:
        raise TaskError(f"unknown task {task!r}")
    metrics = tuple(MetricSpec(n, w, t) for n, w, t in _TABLE[task])
    spec = TaskSpec(task, metrics, _ACTION_TILES[task], tuple(controllable))
    for name in controllable:
        spec.metric(name)  # validates the name
    return spec


# ---------------------------------------------------------------------------
# Serialization (canonical form; the Table-1 fixture byte-matches this)

def _target_to_json(t: Target):
    if t.kind == "scalar":
        return t.value
    if t.kind == "maximize":
        return "max"
    return [t.lo, "inf" if math.isinf(t.hi) else t.hi]


def _target_from_json(v) -> Target:
    if v == "max":
        return Target.maximize()
    if isinstance(v, (int, float)):
        return Target.scalar(v)
    if isinstance(v, (list, tuple)) and len(v) == 2:
        lo, hi = v
        return Target.interval(float(lo), math.inf if hi == "inf" else float(hi))
    raise TaskError(f"cannot parse target {v!r}")


def task_spec_to_dict(spec: TaskSpec) -> dict:
    return {
        "task": spec.task,
        "metrics": [
            {"name": m.name, "weight": m.weight, "target": _target_to_json(m.target)}
            for m in spec.metrics
        ],
        "action_tiles": [TILE_NAMES[t] for t in spec.action_tiles],
        "controllable": list(spec.controllable),
    }


def task_spec_to_json(spec: TaskSpec) -> str:
    return json.dumps(task_spec_to_dict(spec), indent=2) + "\n"


def task_spec_from_dict(payload: dict) -> TaskSpec:
    from .level import TILE_FROM_NAME

    metrics = tuple(
        MetricSpec(m["name"], float(m["weight"]), _target_from_json(m["target"]))
        for m in payload["metrics"]
    )
    action = tuple(TILE_FROM_NAME[n] for n in payload["action_tiles"])
    return TaskSpec(payload["task"], metrics, action, tuple(payload.get("controllable", ())))


# ---------------------------------------------------------------------------
# Metric computation

@dataclass
class TaskEval:
    """Metrics plus the artifacts the observation encoder and harness need."""

    metrics: dict[str, float]
    path: traverse.PathReport | None
    connected: bool | None = None
    flags: dict | None = None


def evaluate_level(level: Level, spec: TaskSpec) -> TaskEval:
    if spec.has_doors and level.doors is None:
        raise TaskError(f"task {spec.task!r} requires a level with doors")

    if spec.task == "diameter":
        rep = traverse.diameter(level)
        return TaskEval(
            {"n_jumps": float(rep.jumps), "diameter": float(rep.length)}, rep
        )

    graph = traverse.build_move_graph(level)
    entrance, exit_ = level.doors
    e_node = entrance.frame_foot(level.dims)
    x_node = exit_.frame_foot(level.dims)

    if spec.task == "doors":
        con = traverse.shortest_path(graph, e_node, x_node)
        far = traverse.farthest_path(graph, e_node)
        connected = con is not None
        metrics = {
            "n_jumps": float(con.jumps if connected else far.jumps),
            "diameter": float(far.length),
            "path_length": float(con.length if connected else 0),
        }
        return TaskEval(metrics, con if connected else far, connected)

    # dungeon
    chest_nodes = [
        c
        for c in graph.nodes
        if 0 <= c[0] < level.dims[0]
        and 0 <= c[2] < level.dims[2]
        and level.tiles[c] == int(Tile.CHEST)
    ]
    seg1 = seg2 = None
    if chest_nodes:
        # Designated chest: cheapest to reach from the entrance, ties by
        # coordinate; falls back to the smallest coordinate if unreachable.
        chest_nodes.sort()
        from_entrance = traverse.single_source_costs(graph, e_node)
        reachable = [(from_entrance[c], c) for c in chest_nodes if c in from_entrance]
        if reachable:
            _, chest = min(reachable)
            seg1 = traverse.shortest_path(graph, e_node, chest)
        else:
            chest = chest_nodes[0]
        seg2 = traverse.shortest_path(graph, chest, x_node)

    enemy = traverse.nearest_enemy_distance(graph, entrance)
    path = None
    if seg1 is not None and seg2 is not None:
        moves = seg1.moves + seg2.moves
        path = traverse.PathReport(
            seg1.start,
            moves,
            2 + sum(m.cost for m in moves),
            seg1.jumps + seg2.jumps,
        )
    metrics = {
        "n_jumps": float((seg1.jumps if seg1 else 0) + (seg2.jumps if seg2 else 0)),
        "n_chests": float(np.count_nonzero(level.tiles == int(Tile.CHEST))),
        "n_enemies": float(np.count_nonzero(level.tiles == int(Tile.ENEMY))),
        "nearest_enemy": float(enemy.length) if enemy.length is not None else math.inf,
        "path_length": float((seg1.length if seg1 else 0) + (seg2.length if seg2 else 0)),
    }
    connected = seg1 is not None and seg2 is not None
    return TaskEval(metrics, path, connected, {"nearest_enemy_reason": enemy.reason})


def compute_metrics(level: Level, spec: TaskSpec) -> dict[str, float]:
    """The task's MetricVector for this level."""
    return evaluate_level(level, spec).metrics


# ---------------------------------------------------------------------------
# Loss and reward

def loss(metrics: dict[str, float], spec: TaskSpec, maximize_mode: str = "signed") -> float:
    """Weighted sum of target distances. Maximize metrics contribute
    ``-w * m`` by default ("signed"); "paper" keeps the literal ``+w * m``."""
    if maximize_mode not in ("signed", "paper"):
        raise TaskError(f"unknown maximize_mode {maximize_mode!r}")
    total = 0.0
    for m in spec.metrics:
        value = metrics[m.name]
        if m.target.kind == "maximize":
            term = m.weight * value
            total += term if maximize_mode == "paper" else -term
        else:
            total += m.weight * m.target.distance(value)
    return total


def reward(prev_loss: float, new_loss: float, sign: str = "improvement") -> float:
    """Per-step reward. "improvement" (default) pays for loss decrease;
    "paper" is the literal ``new - prev`` difference."""
    if sign == "improvement":
        return prev_loss - new_loss
    if sign == "paper":
        return new_loss - prev_loss
    raise TaskError(f"unknown reward sign {sign!r}")


#: Default sampling ranges for controllable-metric targets.
DEFAULT_TARGET_RANGES = {
    "diameter": (0.0, 50.0),
    "path_length": (0.0, 50.0),
    "n_jumps": (0.0, 10.0),
}


def sample_targets(
    spec: TaskSpec, seed: int, ranges: dict[str, tuple[float, float]] | None = None
) -> TaskSpec:
    """Resolve controllable metrics to scalar targets drawn uniformly from
    their configured ranges; deterministic per seed."""
    if not spec.controllable:
        return spec
    ranges = {**DEFAULT_TARGET_RANGES, **(ranges or {})}
    rng = np.random.Generator(np.random.PCG64(seed))
    new_metrics = []
    for m in spec.metrics:
        if m.name in spec.controllable:
            if m.name not in ranges:
                raise TaskError(f"no target range configured for {m.name!r}")
            lo, hi = ranges[m.name]
            value = float(rng.uniform(lo, hi))
            new_metrics.append(replace(m, target=Target.scalar(value)))
        else:
            new_metrics.append(m)
    return replace(spec, metrics=tuple(new_metrics))

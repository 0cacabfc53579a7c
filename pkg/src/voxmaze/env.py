"""Sequential-scan level-editing environment (narrow representation).

The agent visits interior voxels in a fixed raster order (x fastest,
then z, then y) and chooses which tile to place at the cursor. Reward is
the per-step change in the design loss. Episodes run for
``sweeps * interior volume`` steps (default 2 sweeps).

Observations are one-hot 4D arrays: one channel per tile type including
BORDER, one channel marking the current task-relevant path, and one
constant-valued channel per controllable metric holding the signed
``target - current`` gap. The window has extent ``2n - 1`` per axis,
centered on the cursor; voxels beyond the border frame are all-zero.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import tasks
from .level import Door, Level, Tile, new_level, sample_door_pair, InitSpec
from .tasks import TaskEval, TaskSpec


class EnvError(RuntimeError):
    pass


@dataclass
class EnvState:
    level: Level
    cursor: int
    step_count: int
    task: TaskSpec  # targets already resolved for this episode
    prev_loss: float
    episode_seed: int


def cursor_coord(cursor: int, dims) -> tuple[int, int, int]:
    w, _, d = dims
    x = cursor % w
    z = (cursor // w) % d
    y = cursor // (w * d)
    return (x, y, z)


def observation_channels(spec: TaskSpec) -> list[str]:
    names = [t.name.lower() for t in spec.action_tiles] + ["border", "path"]
    names.extend(f"control_{m}" for m in spec.controllable)
    return names


def encode_observation(state: EnvState, ev: TaskEval | None = None) -> np.ndarray:
    """Observation for the current state; recomputes the task evaluation
    unless one is supplied."""
    if ev is None:
        ev = tasks.evaluate_level(state.level, state.task)
    spec = state.task
    w, h, d = state.level.dims
    cx, cy, cz = cursor_coord(state.cursor, state.level.dims)
    tile_list = list(spec.action_tiles) + [Tile.BORDER]
    n_channels = len(tile_list) + 1 + len(spec.controllable)
    obs = np.zeros((n_channels, 2 * w - 1, 2 * h - 1, 2 * d - 1), dtype=np.float32)

    # Window voxel at index i along x covers global x = cx + i - (w - 1);
    # real voxels (frame included) span global -1 .. w.
    padded = state.level.padded_tiles()  # indexed by global + 1

    def axis_overlap(c, n, size):
        lo = max(0, c - n + 2)  # padded index of the first real voxel in window
        hi = min(size + 2, c + n + 1)  # one past the last
        return lo, hi

    x0, x1 = axis_overlap(cx, w, w)
    y0, y1 = axis_overlap(cy, h, h)
    z0, z1 = axis_overlap(cz, d, d)
    window = padded[x0:x1, y0:y1, z0:z1]
    # Destination offsets inside the observation window.
    dx, dy, dz = x0 - (cx - w + 2), y0 - (cy - h + 2), z0 - (cz - d + 2)
    for i, tile in enumerate(tile_list):
        obs[i, dx : dx + window.shape[0], dy : dy + window.shape[1], dz : dz + window.shape[2]] = (
            window == int(tile)
        )

    path_channel = len(tile_list)
    if ev.path is not None:
        for vx, vy, vz in ev.path.voxels():
            ox, oy, oz = vx - cx + w - 1, vy - cy + h - 1, vz - cz + d - 1
            if 0 <= ox < 2 * w - 1 and 0 <= oy < 2 * h - 1 and 0 <= oz < 2 * d - 1:
                obs[path_channel, ox, oy, oz] = 1.0

    for k, name in enumerate(spec.controllable):
        target = spec.metric(name).target
        gap = target.value - ev.metrics[name]
        obs[path_channel + 1 + k] = np.float32(gap)
    return obs


class EditEnv:
    """Gym-style reset/step wrapper around the editing decision process."""

    def __init__(
        self,
        spec: TaskSpec,
        dims=(7, 7, 7),
        sweeps: int = 2,
        reward_sign: str = "improvement",
        maximize_mode: str = "signed",
        target_ranges: dict | None = None,
        resample_targets: bool = True,
    ):
        self.base_spec = spec
        self.dims = tuple(dims)
        self.sweeps = sweeps
        self.reward_sign = reward_sign
        self.maximize_mode = maximize_mode
        self.target_ranges = target_ranges
        # False keeps pre-resolved controllable targets fixed across resets.
        self.resample_targets = resample_targets
        self.state: EnvState | None = None
        self._eval: TaskEval | None = None

    @property
    def max_steps(self) -> int:
        w, h, d = self.dims
        return self.sweeps * w * h * d

    @property
    def n_actions(self) -> int:
        return len(self.base_spec.action_tiles)

    def _loss(self, ev: TaskEval, spec: TaskSpec) -> float:
        return tasks.loss(ev.metrics, spec, self.maximize_mode)

    def reset(self, seed: int, doors: tuple[Door, Door] | None = None,
              level: Level | None = None) -> np.ndarray:
        ss = np.random.SeedSequence(seed)
        door_seed, target_seed = (int(s) for s in ss.generate_state(2))
        spec = self.base_spec
        if self.resample_targets:
            spec = tasks.sample_targets(spec, target_seed, self.target_ranges)
        if level is None:
            if spec.has_doors and doors is None:
                doors = sample_door_pair(self.dims, door_seed)
            level = new_level(self.dims, InitSpec("empty"), doors)
        else:
            level = level.copy()
        ev = tasks.evaluate_level(level, spec)
        self.state = EnvState(level, 0, 0, spec, self._loss(ev, spec), seed)
        self._eval = ev
        return encode_observation(self.state, ev)

    @property
    def done(self) -> bool:
        return self.state is not None and self.state.step_count >= self.max_steps

    def step(self, action: int):
        if self.state is None:
            raise EnvError("step before reset")
        if self.done:
            raise EnvError("step after episode end")
        if not 0 <= action < self.n_actions:
            raise EnvError(f"action {action} out of range [0, {self.n_actions})")
        state = self.state
        tile = state.task.action_tiles[action]
        coord = cursor_coord(state.cursor, state.level.dims)
        state.level.tiles[coord] = int(tile)
        state.cursor = (state.cursor + 1) % state.level.volume
        state.step_count += 1
        ev = tasks.evaluate_level(state.level, state.task)
        new_loss = self._loss(ev, state.task)
        step_reward = tasks.reward(state.prev_loss, new_loss, self.reward_sign)
        state.prev_loss = new_loss
        self._eval = ev
        done = self.done
        info = {
            "metrics": dict(ev.metrics),
            "loss": new_loss,
            "connected": ev.connected,
        }
        return encode_observation(state, ev), step_reward, done, info

    def greedy_action(self) -> int:
        """Action minimizing the post-placement loss at the cursor; ties
        break toward AIR (action 0), then by action index."""
        if self.state is None or self.done:
            raise EnvError("greedy_action on finished or unreset env")
        state = self.state
        coord = cursor_coord(state.cursor, state.level.dims)
        original = state.level.tiles[coord]
        best = (math.inf, 0)
        for action, tile in enumerate(state.task.action_tiles):
            state.level.tiles[coord] = int(tile)
            ev = tasks.evaluate_level(state.level, state.task)
            candidate = (self._loss(ev, state.task), action)
            if candidate < best:
                best = candidate
        state.level.tiles[coord] = original
        return best[1]


def greedy_policy(env: EditEnv, _obs=None) -> int:
    return env.greedy_action()


def random_policy_factory(seed: int):
    rng = np.random.Generator(np.random.PCG64(seed))
    def policy(env: EditEnv, _obs=None) -> int:
        return int(rng.integers(env.n_actions))
    return policy


def run_episode(env: EditEnv, policy, seed: int, doors=None, level=None,
                trace_path=None):
    """Run one full episode; returns (final_level, total_reward, steps).

    When ``trace_path`` is given, appends one JSONL record per step:
    cursor, action, reward, loss, metrics (non-finite metric values are
    serialized as null).
    """
    obs = env.reset(seed, doors=doors, level=level)
    total = 0.0
    records = []
    while not env.done:
        cursor = env.state.cursor
        action = policy(env, obs)
        obs, step_reward, done, info = env.step(action)
        total += step_reward
        if trace_path is not None:
            metrics = {
                k: (v if math.isfinite(v) else None) for k, v in info["metrics"].items()
            }
            records.append(
                {
                    "cursor": cursor,
                    "action": action,
                    "reward": step_reward,
                    "loss": info["loss"],
                    "metrics": metrics,
                }
            )
    if trace_path is not None:
        with open(trace_path, "w") as fh:
            for rec in records:
                fh.write(json.dumps(rec, separators=(",", ":")) + "\n")
    return env.state.level, total, env.state.step_count

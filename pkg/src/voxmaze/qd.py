"""Quality-diversity illumination of NCA generators.

Fitness combines, in order of dominance, validity (adherence of the
generated levels to the task's jump target), reliability (inverse
variance of emptiness and diameter across the evaluation batch), and
diversity (mean pairwise Hamming distance), each normalized to [0, 1]:
``combined = validity + 0.1 * reliability + 0.01 * diversity``. A strict
lexicographic comparator is available behind the archive's
``lexicographic`` flag.

The archive is a (emptiness, diameter) grid; every candidate is
evaluated on the same fixed batch of uniform-random initial levels so
replacement decisions are noise-free.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass

import numpy as np

from . import nca, tasks, traverse
from .cma import CmaEs, default_population
from .level import InitSpec, Level, new_level, sample_door_pair

log = logging.getLogger(__name__)

NEW_CELL = "new_cell"
IMPROVED = "improved"
REJECTED = "rejected"


@dataclass(frozen=True)
class FitnessBreakdown:
    validity: float
    reliability: float
    diversity: float

    @property
    def combined(self) -> float:
        return self.validity + 0.1 * self.reliability + 0.01 * self.diversity

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.validity, self.reliability, self.diversity)


@dataclass(frozen=True)
class BehaviorDescriptor:
    emptiness_mean: float
    diameter_mean: float


@dataclass
class Elite:
    params: nca.GeneratorParams
    fitness: FitnessBreakdown
    descriptor: BehaviorDescriptor


class Archive:
    """MAP-Elites grid over (emptiness, diameter)."""

    def __init__(self, bins=(20, 20), d_max: float = 196.0, lexicographic: bool = False):
        self.bins = tuple(bins)
        self.d_max = float(d_max)
        self.lexicographic = lexicographic
        self.cells: dict[tuple[int, int], Elite] = {}

    def bin_of(self, descriptor: BehaviorDescriptor) -> tuple[int, int]:
        be, bd = self.bins
        e, d = descriptor.emptiness_mean, descriptor.diameter_mean
        if not 0.0 <= e <= 1.0 or not 0.0 <= d <= self.d_max:
            log.warning("descriptor (%.3f, %.3f) outside archive bounds; clamping", e, d)
        ei = min(be - 1, max(0, int(e * be)))
        di = min(bd - 1, max(0, int(d / self.d_max * bd)))
        return (ei, di)

    def _better(self, a: FitnessBreakdown, b: FitnessBreakdown) -> bool:
        if self.lexicographic:
            return a.as_tuple() > b.as_tuple()
        return a.combined > b.combined

    def insert(self, elite: Elite) -> str:
        cell = self.bin_of(elite.descriptor)
        incumbent = self.cells.get(cell)
        if incumbent is None:
            self.cells[cell] = elite
            return NEW_CELL
        if self._better(elite.fitness, incumbent.fitness):
            self.cells[cell] = elite
            return IMPROVED
        return REJECTED

    @property
    def occupancy(self) -> int:
        return len(self.cells)

    @property
    def best_fitness(self) -> float:
        if not self.cells:
            return -math.inf
        return max(e.fitness.combined for e in self.cells.values())

    def items(self):
        return sorted(self.cells.items())

    def random_elite(self, rng: np.random.Generator) -> Elite:
        keys = sorted(self.cells)
        return self.cells[keys[int(rng.integers(len(keys)))]]


def archive_insert(archive: Archive, elite: Elite) -> str:
    return archive.insert(elite)


# ---------------------------------------------------------------------------
# Evaluation

def mean_pairwise_hamming(levels: list[Level]) -> float:
    """Mean pairwise Hamming distance between levels, normalized by the
    interior volume; 0 for fewer than two levels."""
    n = len(levels)
    if n < 2:
        return 0.0
    stack = np.stack([lv.tiles for lv in levels])
    diff = stack[:, None] != stack[None, :]
    hamming = diff.reshape(n, n, -1).sum(axis=2)
    return float(hamming[np.triu_indices(n, 1)].mean()) / levels[0].volume


def initial_levels(spec: tasks.TaskSpec, dims, eval_seeds, solid_probability=0.5) -> list[Level]:
    levels = []
    for seed in eval_seeds:
        doors = sample_door_pair(dims, seed) if spec.has_doors else None
        levels.append(
            new_level(dims, InitSpec("uniform_random", solid_probability, seed), doors)
        )
    return levels


def evaluate_generator(
    params: nca.GeneratorParams,
    spec: tasks.TaskSpec,
    eval_seeds,
    dims=(7, 7, 7),
    steps: int = 50,
    d_max: float = 196.0,
    jump_norm: float = 10.0,
    solid_probability: float = 0.5,
):
    """Roll the generator out on the shared evaluation batch; returns
    (FitnessBreakdown, BehaviorDescriptor, final levels)."""
    levels = initial_levels(spec, dims, eval_seeds, solid_probability)
    finals = nca.rollout_batch(params, levels, spec, steps)
    jump_target = spec.metric("n_jumps").target
    empt = np.empty(len(finals))
    diam = np.empty(len(finals))
    validity = np.empty(len(finals))
    for i, lv in enumerate(finals):
        ev = tasks.evaluate_level(lv, spec)
        empt[i] = float(np.count_nonzero(lv.tiles == 0)) / lv.volume
        diam[i] = ev.metrics.get("diameter", float(traverse.diameter(lv).length))
        validity[i] = 1.0 - min(1.0, jump_target.distance(ev.metrics["n_jumps"]) / jump_norm)
    reliability = 1.0 / (1.0 + empt.var() + (diam / d_max).var())
    fitness = FitnessBreakdown(
        float(validity.mean()), float(reliability), mean_pairwise_hamming(finals)
    )
    descriptor = BehaviorDescriptor(float(empt.mean()), float(diam.mean()))
    return fitness, descriptor, finals


# ---------------------------------------------------------------------------
# Emitters

class CmaMeEmitter:
    """CMA improvement emitter: candidates are ranked by archive
    improvement (new cells first, by fitness; then improvements by
    fitness delta; then rejections), and the emitter restarts from a
    random elite after a generation with no insertions."""

    name = "cma_me"

    def __init__(self, archive: Archive, dim: int, sigma0: float,
                 rng: np.random.Generator, population: int | None = None,
                 init_sigma: float = 0.5):
        self.archive = archive
        self.dim = dim
        self.sigma0 = sigma0
        self.rng = rng
        self.population = population or default_population(dim)
        self.init_sigma = init_sigma
        self.restarts = 0
        self._new_cma(np.zeros(dim))

    def _new_cma(self, mean: np.ndarray):
        self._cma = CmaEs(mean, self.sigma0, self.rng, self.population)

    def _restart(self):
        self.restarts += 1
        if self.archive.cells:
            mean = self.archive.random_elite(self.rng).params.theta.astype(np.float64)
        else:
            mean = self.rng.normal(0.0, self.init_sigma, self.dim)
        self._new_cma(mean)

    def ask(self) -> np.ndarray:
        return self._cma.ask()

    def tell(self, thetas: np.ndarray, results) -> None:
        """``results``: per-candidate (outcome, fitness, improvement)."""
        order = []
        for i, (outcome, fitness, improvement) in enumerate(results):
            if outcome == NEW_CELL:
                order.append((0, -fitness, i))
            elif outcome == IMPROVED:
                order.append((1, -improvement, i))
            else:
                order.append((2, -improvement, i))
        ranking = sorted(range(len(order)), key=order.__getitem__)
        self._cma.tell(np.asarray(thetas)[ranking])
        inserted = sum(1 for o, _, _ in results if o in (NEW_CELL, IMPROVED))
        if inserted == 0 or self._cma.degenerate:
            self._restart()


class GaussianEmitter:
    """Plain mutation fallback: each child is a random elite perturbed by
    isotropic Gaussian noise."""

    name = "gaussian"

    def __init__(self, archive: Archive, dim: int, sigma: float,
                 rng: np.random.Generator, population: int | None = None,
                 init_sigma: float = 0.5):
        self.archive = archive
        self.dim = dim
        self.sigma = sigma
        self.rng = rng
        self.population = population or default_population(dim)
        self.init_sigma = init_sigma

    def ask(self) -> np.ndarray:
        out = np.empty((self.population, self.dim))
        for i in range(self.population):
            if self.archive.cells:
                parent = self.archive.random_elite(self.rng).params.theta.astype(np.float64)
            else:
                parent = self.rng.normal(0.0, self.init_sigma, self.dim)
            out[i] = parent + self.rng.normal(0.0, self.sigma, self.dim)
        return out

    def tell(self, thetas, results) -> None:
        pass


# ---------------------------------------------------------------------------
# Main loop

@dataclass
class MapElitesConfig:
    task: str = "diameter"
    dims: tuple[int, int, int] = (7, 7, 7)
    budget: int = 10_000
    emitter: str = "cma_me"  # "cma_me" | "gaussian"
    sigma0: float = 0.2
    gaussian_sigma: float = 0.1
    init_count: int = 100
    init_sigma: float = 0.5
    bins: tuple[int, int] = (20, 20)
    d_max: float = 196.0
    eval_levels: int = 10
    steps: int = 50
    solid_probability: float = 0.5
    jump_norm: float = 10.0
    hidden: int = nca.HIDDEN_DEFAULT
    population: int | None = None
    seed: int = 0


@dataclass
class ProgressRecord:
    evaluations: int
    occupancy: int
    best_fitness: float


def eval_seeds_for(config: MapElitesConfig) -> list[int]:
    """The shared evaluation-level seeds a run derives from its seed."""
    eval_ss = np.random.SeedSequence(config.seed).spawn(3)[0]
    return [int(s) for s in eval_ss.generate_state(config.eval_levels, dtype=np.uint64)]


def _evaluate_candidate(payload):
    """Worker for parallel candidate evaluation (insertions stay serial in
    ask order, so results are schedule-independent)."""
    theta, arch, spec, eval_seeds, cfg = payload
    params = nca.GeneratorParams(arch, theta)
    fitness, descriptor, _ = evaluate_generator(
        params, spec, eval_seeds, cfg.dims, cfg.steps, cfg.d_max,
        cfg.jump_norm, cfg.solid_probability,
    )
    return fitness, descriptor


def _map_batch(fn, payloads, pool):
    if pool is None:
        return [fn(p) for p in payloads]
    return list(pool.map(fn, payloads))


def run_mapelites(config: MapElitesConfig, progress_cb=None,
                  jobs: int = 1) -> tuple[Archive, list[ProgressRecord]]:
    """Illuminate the archive within the evaluation budget. Fully
    deterministic for a fixed config, regardless of ``jobs``: batch
    evaluations may run in parallel but insertions happen serially in
    ask order."""
    spec = tasks.default_task_spec(config.task)
    arch = nca.arch_for_task(spec, config.hidden)
    dim = nca.param_count(arch)
    if config.budget < config.init_count:
        raise ValueError("budget smaller than the random-initialization count")

    ss = np.random.SeedSequence(config.seed)
    _, init_ss, emitter_ss = ss.spawn(3)
    eval_seeds = eval_seeds_for(config)
    rng_init = np.random.Generator(np.random.PCG64(init_ss))
    rng_emit = np.random.Generator(np.random.PCG64(emitter_ss))

    archive = Archive(config.bins, config.d_max)
    progress: list[ProgressRecord] = []
    evals = 0
    pool = None
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        pool = ProcessPoolExecutor(max_workers=jobs)

    def evaluate_batch(thetas32):
        payloads = [(t, arch, spec, eval_seeds, config) for t in thetas32]
        return _map_batch(_evaluate_candidate, payloads, pool)

    def insert(theta32, fitness, descriptor) -> tuple[str, float, float]:
        cell = archive.bin_of(descriptor)
        incumbent = archive.cells.get(cell)
        prior = incumbent.fitness.combined if incumbent else -math.inf
        outcome = archive.insert(
            Elite(nca.GeneratorParams(arch, theta32), fitness, descriptor)
        )
        improvement = fitness.combined - prior if math.isfinite(prior) else fitness.combined
        return outcome, fitness.combined, improvement

    def record():
        rec = ProgressRecord(evals, archive.occupancy, archive.best_fitness)
        progress.append(rec)
        if progress_cb is not None:
            progress_cb(rec)

    try:
        init_thetas = [
            rng_init.normal(0.0, config.init_sigma, dim).astype(np.float32)
            for _ in range(config.init_count)
        ]
        for theta, (fitness, descriptor) in zip(init_thetas, evaluate_batch(init_thetas)):
            insert(theta, fitness, descriptor)
            evals += 1
        record()

        if config.emitter == "cma_me":
            emitter = CmaMeEmitter(archive, dim, config.sigma0, rng_emit,
                                   config.population, config.init_sigma)
        elif config.emitter == "gaussian":
            emitter = GaussianEmitter(archive, dim, config.gaussian_sigma, rng_emit,
                                      config.population, config.init_sigma)
        else:
            raise ValueError(f"unknown emitter {config.emitter!r}")

        while evals < config.budget:
            thetas = emitter.ask()
            take = min(len(thetas), config.budget - evals)
            thetas32 = [t.astype(np.float32) for t in thetas[:take]]
            results = []
            for theta, (fitness, descriptor) in zip(thetas32, evaluate_batch(thetas32)):
                results.append(insert(theta, fitness, descriptor))
                evals += 1
            if take == len(thetas):
                emitter.tell(thetas, results)
            record()
    finally:
        if pool is not None:
            pool.shutdown()
    return archive, progress


# ---------------------------------------------------------------------------
# Archive persistence

def save_archive(archive: Archive, out_dir, task: str, eval_seeds=None) -> None:
    """Write archive.csv, per-elite params files, and the three heatmap
    CSV matrices (fitness, diversity, occupancy)."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    rows = []
    for (ei, di), elite in archive.items():
        fname = f"elite_{ei:02d}_{di:02d}.nca"
        nca.save_params(
            os.path.join(out_dir, fname),
            elite.params,
            metadata={
                "task": task,
                "eval_seeds": list(eval_seeds) if eval_seeds is not None else None,
                "fitness": {
                    "validity": elite.fitness.validity,
                    "reliability": elite.fitness.reliability,
                    "diversity": elite.fitness.diversity,
                    "combined": elite.fitness.combined,
                },
                "descriptor": [
                    elite.descriptor.emptiness_mean,
                    elite.descriptor.diameter_mean,
                ],
            },
        )
        rows.append(
            [
                ei,
                di,
                repr(elite.descriptor.emptiness_mean),
                repr(elite.descriptor.diameter_mean),
                repr(elite.fitness.validity),
                repr(elite.fitness.reliability),
                repr(elite.fitness.diversity),
                repr(elite.fitness.combined),
                fname,
            ]
        )
    with open(os.path.join(out_dir, "archive.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["cell_emptiness", "cell_diameter", "emptiness", "diameter",
             "validity", "reliability", "diversity", "combined", "params_file"]
        )
        writer.writerows(rows)

    be, bd = archive.bins
    panels = {
        "fitness_heatmap.csv": lambda e: repr(e.fitness.combined),
        "diversity_heatmap.csv": lambda e: repr(e.fitness.diversity),
        "occupancy_heatmap.csv": lambda e: "1",
    }
    for fname, value in panels.items():
        with open(os.path.join(out_dir, fname), "w", newline="") as fh:
            writer = csv.writer(fh)
            for ei in range(be):
                writer.writerow(
                    [
                        value(archive.cells[(ei, di)]) if (ei, di) in archive.cells
                        else ("0" if fname == "occupancy_heatmap.csv" else "")
                        for di in range(bd)
                    ]
                )

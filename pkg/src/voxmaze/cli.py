"""Command-line entry point.

Commands: evolve, sweep-doors, control-sweep, rollout, verify,
config-reference. Every command writes a manifest (config echo, tool
version, seeds) sufficient to reproduce its outputs byte for byte.

Exit codes: 0 success, 1 usage/config error, 2 verification failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import __version__, config as config_mod, harness, heatmap, nca, qd, tasks, traverse
from .config import ConfigError, RunConfig
from .level import InitSpec, LevelError, new_level, level_to_json, sample_door_pair


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _load(args) -> RunConfig:
    cfg = config_mod.load_config(args.config) if args.config else RunConfig()
    return config_mod.apply_overrides(cfg, args.set or [])


def _write_matrix_csv(mat, path):
    import math as _math

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in np.asarray(mat, dtype=float):
            writer.writerow(["" if _math.isnan(v) else repr(v) for v in row])


def _write_manifest(path, command: str, cfg: RunConfig, extra: dict | None = None):
    payload = {
        "command": command,
        "version": __version__,
        "config": config_mod.config_to_dict(cfg),
    }
    payload.update(extra or {})
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_evolve(args) -> int:
    cfg = _load(args)
    out_dir = args.out or cfg.io.out_dir
    os.makedirs(out_dir, exist_ok=True)
    me_cfg = qd.MapElitesConfig(
        task=cfg.task.name,
        dims=tuple(cfg.dims),
        budget=cfg.qd.budget,
        emitter=cfg.qd.emitter,
        sigma0=cfg.qd.sigma0,
        gaussian_sigma=cfg.qd.gaussian_sigma,
        init_count=cfg.qd.init_count,
        init_sigma=cfg.qd.init_sigma,
        bins=tuple(cfg.qd.bins),
        d_max=cfg.qd.d_max,
        eval_levels=cfg.qd.eval_levels,
        steps=cfg.nca.steps,
        solid_probability=cfg.qd.solid_probability,
        jump_norm=cfg.qd.jump_norm,
        hidden=cfg.nca.hidden,
        population=cfg.qd.population,
        seed=cfg.seed,
    )

    def progress(rec):
        print(f"evals={rec.evaluations} occupancy={rec.occupancy} "
              f"best={rec.best_fitness:.4f}", flush=True)

    archive, records = qd.run_mapelites(me_cfg, progress, jobs=args.jobs or 1)
    qd.save_archive(archive, out_dir, cfg.task.name, qd.eval_seeds_for(me_cfg))
    with open(os.path.join(out_dir, "progress.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["evaluations", "occupancy", "best_fitness"])
        for rec in records:
            writer.writerow([rec.evaluations, rec.occupancy, repr(rec.best_fitness)])
    _write_manifest(os.path.join(out_dir, "manifest.json"), "evolve", cfg,
                    {"overrides": args.set or []})
    print(f"archive: occupancy={archive.occupancy} best={archive.best_fitness:.4f}"
          f" -> {out_dir}", flush=True)
    return 0


def cmd_sweep_doors(args) -> int:
    cfg = _load(args)
    out_dir = args.out or cfg.io.out_dir
    os.makedirs(out_dir, exist_ok=True)
    generator = harness.builtin_generator(args.generator, steps=cfg.nca.steps,
                                          sweeps=cfg.env.sweeps)
    dims = tuple(cfg.dims)
    records = harness.door_sweep(generator, dims, cfg.seed,
                                 tasks.default_task_spec("doors"),
                                 jobs=args.jobs or 1)
    harness.write_sweep_csv(records, os.path.join(out_dir, "door_sweep.csv"))
    rows = harness.collapse_symmetric(records, dims)
    harness.write_collapsed_csv(rows, os.path.join(out_dir, "collapsed.csv"))
    mean_mat, fail_mat = harness.unravel_circumference(records, dims)
    _write_matrix_csv(mean_mat, os.path.join(out_dir, "circumference_mean.csv"))
    _write_matrix_csv(fail_mat, os.path.join(out_dir, "circumference_failure.csv"))
    heatmap.write_svg_heatmap(mean_mat, os.path.join(out_dir, "circumference_mean.svg"),
                              "mean path length (connected pairs)")
    heatmap.write_svg_heatmap(fail_mat, os.path.join(out_dir, "circumference_failure.svg"),
                              "failure rate")
    _write_manifest(os.path.join(out_dir, "manifest.json"), "sweep-doors", cfg,
                    {"overrides": args.set or [], "generator": generator.name})
    n_fail = sum(1 for r in records if not r.connected)
    print(f"{len(records)} pairs, {n_fail} failures -> {out_dir}", flush=True)
    return 0


def cmd_control_sweep(args) -> int:
    cfg = _load(args)
    out_dir = args.out or cfg.io.out_dir
    os.makedirs(out_dir, exist_ok=True)
    generator = harness.builtin_generator(args.generator, steps=cfg.nca.steps,
                                          sweeps=cfg.env.sweeps)
    rows = harness.controllability_sweep(
        generator,
        cfg.harness.targets,
        dims=tuple(cfg.dims),
        episodes=cfg.harness.episodes_per_target,
        seed=cfg.seed,
        task=cfg.task.name,
        metric=cfg.harness.control_metric,
    )
    harness.write_control_csv(rows, os.path.join(out_dir, "controllability.csv"))
    _write_manifest(os.path.join(out_dir, "manifest.json"), "control-sweep", cfg,
                    {"overrides": args.set or [], "generator": generator.name})
    print(f"{len(rows)} targets -> {out_dir}", flush=True)
    return 0


def cmd_rollout(args) -> int:
    cfg = _load(args)
    params = nca.load_params(args.params)
    spec = tasks.default_task_spec(args.task)
    dims = tuple(cfg.dims)
    doors = sample_door_pair(dims, args.seed) if spec.has_doors else None
    initial = new_level(dims, InitSpec("empty"), doors)
    final = nca.rollout(params, initial, spec, args.steps)
    with open(args.out, "w") as fh:
        fh.write(level_to_json(final) + "\n")
    _write_manifest(f"{args.out}.manifest.json", "rollout", cfg, {
        "params": args.params, "seed": args.seed, "steps": args.steps, "task": args.task,
    })
    print(f"level -> {args.out}", flush=True)
    return 0


def cmd_verify(args) -> int:
    cfg = _load(args)
    failures = []

    def check(name, ok, detail=""):
        print(f"[{'PASS' if ok else 'FAIL'}] {name}" + (f" ({detail})" if detail else ""),
              flush=True)
        if not ok:
            failures.append(name)

    empty = new_level((7, 7, 7), InitSpec("empty"))
    check("empty-cube diameter == 14", traverse.diameter(empty).length == 14)

    fixture = {
        "diameter": [("n_jumps", 1.0, 5.0), ("diameter", 1.0, "max")],
        "doors": [("n_jumps", 1.5, 5.0), ("diameter", 1.0, "max"), ("path_length", 1.2, "max")],
        "dungeon": [
            ("n_jumps", 1.0, [2.0, 5.0]),
            ("n_chests", 3.0, 1.0),
            ("n_enemies", 1.0, [2.0, 5.0]),
            ("nearest_enemy", 2.0, [5.0, "inf"]),
            ("path_length", 1.0, "max"),
        ],
    }
    for task_name, expected in fixture.items():
        spec = tasks.task_spec_to_dict(tasks.default_task_spec(task_name))
        got = [(m["name"], m["weight"], m["target"]) for m in spec["metrics"]]
        check(f"table defaults: {task_name}", got == expected)

    report = harness.oracle_check(dims=tuple(args.oracle_dims), samples=args.samples,
                                  seed=cfg.seed)
    check(
        f"oracle equivalence on {report.levels_checked} levels",
        report.passed,
        "" if report.passed else str(report.mismatches[:2]),
    )
    return 0 if not failures else 2


def cmd_config_reference(args) -> int:
    text = config_mod.reference_yaml()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        print(text, end="")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="voxmaze", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML config file (defaults used if omitted)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config value (repeatable)")
        p.add_argument("--jobs", type=int, default=os.cpu_count(),
                       help="worker pool size")
        p.add_argument("--out", help="output directory (overrides io.out_dir)")

    p = sub.add_parser("evolve", help="run quality-diversity search over NCA generators")
    common(p)
    p.set_defaults(fn=cmd_evolve)

    p = sub.add_parser("sweep-doors", help="run an exhaustive door-pair sweep")
    common(p)
    p.add_argument("--generator", required=True,
                   help="builtin (greedy, random, all_air, all_solid) or params file")
    p.set_defaults(fn=cmd_sweep_doors)

    p = sub.add_parser("control-sweep", help="sweep controllable-metric targets")
    common(p)
    p.add_argument("--generator", required=True)
    p.set_defaults(fn=cmd_control_sweep)

    p = sub.add_parser("rollout", help="roll out stored NCA params to a level JSON")
    p.add_argument("--config", help="YAML config file (defaults used if omitted)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--params", required=True, help="NCA params file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--task", default="diameter", choices=tasks.TASK_NAMES)
    p.add_argument("--out", required=True, help="output level JSON path")
    p.set_defaults(fn=cmd_rollout)

    p = sub.add_parser("verify", help="oracle cross-checks plus calibration suite")
    common(p)
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--oracle-dims", type=int, nargs=3, default=(5, 5, 5))
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("config-reference", help="print the generated default config")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_config_reference)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, LevelError, nca.NcaError, tasks.TaskError, ValueError,
            FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

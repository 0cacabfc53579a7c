"""Run configuration: a single YAML tree with documented defaults,
strict unknown-key rejection, and dotted-path command-line overrides."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import yaml

from . import tasks


class ConfigError(ValueError):
    pass


@dataclass
class TaskConfig:
    name: str = "diameter"
    # None -> the task's default (Table) metric set. Otherwise a list of
    # {name, weight, target} entries; target is a number, "max", or [lo, hi]
    # (hi may be "inf").
    metrics: list | None = None
    controllable: list = field(default_factory=list)
    target_ranges: dict = field(default_factory=dict)


@dataclass
class EnvConfig:
    sweeps: int = 2
    scan_order: str = "xzy"  # x fastest, then z, then y (fixed)
    reward_sign: str = "improvement"  # or "paper"
    strict_paper_loss: bool = False  # True -> unsigned maximize terms


@dataclass
class NcaConfig:
    hidden: int = 32
    steps: int = 50


@dataclass
class QdConfig:
    budget: int = 10_000
    bins: list = field(default_factory=lambda: [20, 20])
    d_max: float = 196.0
    emitter: str = "cma_me"  # or "gaussian"
    sigma0: float = 0.2
    gaussian_sigma: float = 0.1
    init_count: int = 100
    init_sigma: float = 0.5
    eval_levels: int = 10
    solid_probability: float = 0.5
    jump_norm: float = 10.0
    population: int | None = None


@dataclass
class HarnessConfig:
    targets: list = field(default_factory=lambda: list(range(0, 51, 5)))
    episodes_per_target: int = 20
    control_metric: str = "diameter"


@dataclass
class IoConfig:
    out_dir: str = "out"


@dataclass
class RunConfig:
    dims: list = field(default_factory=lambda: [7, 7, 7])
    seed: int = 0
    task: TaskConfig = field(default_factory=TaskConfig)
    env: EnvConfig = field(default_factory=EnvConfig)
    nca: NcaConfig = field(default_factory=NcaConfig)
    qd: QdConfig = field(default_factory=QdConfig)
    harness: HarnessConfig = field(default_factory=HarnessConfig)
    io: IoConfig = field(default_factory=IoConfig)

    @property
    def maximize_mode(self) -> str:
        return "paper" if self.env.strict_paper_loss else "signed"

    def task_spec(self) -> tasks.TaskSpec:
        spec = tasks.default_task_spec(self.task.name, tuple(self.task.controllable))
        if self.task.metrics is not None:
            metrics = tuple(
                tasks.MetricSpec(
                    m["name"], float(m["weight"]), _parse_target(m["target"])
                )
                for m in self.task.metrics
            )
            spec = dataclasses.replace(spec, metrics=metrics)
        return spec

    def target_ranges(self) -> dict | None:
        if not self.task.target_ranges:
            return None
        return {k: tuple(v) for k, v in self.task.target_ranges.items()}


def _parse_target(value) -> tasks.Target:
    if value == "max":
        return tasks.Target.maximize()
    if isinstance(value, (int, float)):
        return tasks.Target.scalar(value)
    if isinstance(value, (list, tuple)) and len(value) == 2:
        lo, hi = value
        return tasks.Target.interval(float(lo), math.inf if hi == "inf" else float(hi))
    raise ConfigError(f"cannot parse target {value!r}")


def _from_tree(cls, tree: dict, path: str = ""):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in tree.items():
        if key not in fields:
            raise ConfigError(f"unknown config key {path + key!r}")
        ftype = fields[key].type
        if isinstance(value, dict) and ftype in (
            "TaskConfig", "EnvConfig", "NcaConfig", "QdConfig", "HarnessConfig", "IoConfig"
        ):
            kwargs[key] = _from_tree(globals()[ftype], value, f"{path}{key}.")
        else:
            kwargs[key] = value
    return cls(**kwargs)


def config_from_dict(tree: dict) -> RunConfig:
    if tree is None:
        return RunConfig()
    if not isinstance(tree, dict):
        raise ConfigError("config root must be a mapping")
    return _from_tree(RunConfig, tree)


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            tree = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML in {path}: {exc}") from exc
    return config_from_dict(tree)


def config_to_dict(cfg: RunConfig) -> dict:
    return dataclasses.asdict(cfg)


def apply_overrides(cfg: RunConfig, overrides: list[str]) -> RunConfig:
    """Apply ``path.to.key=value`` overrides (values parsed as YAML)."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        dotted, raw = item.split("=", 1)
        value = yaml.safe_load(raw)
        target = cfg
        parts = dotted.split(".")
        for part in parts[:-1]:
            if not hasattr(target, part):
                raise ConfigError(f"unknown config key {dotted!r}")
            target = getattr(target, part)
        leaf = parts[-1]
        if not dataclasses.is_dataclass(target) or not hasattr(target, leaf):
            raise ConfigError(f"unknown config key {dotted!r}")
        if dataclasses.is_dataclass(getattr(target, leaf)):
            raise ConfigError(f"cannot override config section {dotted!r} directly")
        setattr(target, leaf, value)
    return cfg


def reference_yaml() -> str:
    """The generated reference config: every key with its default."""
    header = (
        "# voxmaze reference configuration (generated; all values are defaults)\n"
        "# Override on the command line with --set path.to.key=value\n"
    )
    return header + yaml.safe_dump(config_to_dict(RunConfig()), sort_keys=False)

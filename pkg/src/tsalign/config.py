"""Run configuration: TOML file + flag overrides -> validated RunConfig.

A run file has four tables, all optional except [dataset]:

    [dataset]
    path = "etth-like.csv"     # or: kind = "synthetic", T = 600, N = 1, ...

    [model]    # ModelConfig fields by name (L, H, patch_len, stride, ...)
    [train]    # TrainConfig fields by name
    [run]      # variant, seed, output_dir, horizons, few_shot_ratio

Validation never stops at the first problem; the CLI reports the full list.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # 3.10
    import tomli as tomllib

from .data import RawDataset, load_csv, synthetic_dataset
from .evaluation import VARIANT_IDS
from .model import ModelConfig
from .training import TrainConfig

OUTPUT_ROOT_ENV = "TSALIGN_RUNS"

_SYNTHETIC_KEYS = {"kind", "name", "T", "N", "seed", "slope", "amplitude", "period", "phase", "noise_std"}


class ConfigError(ValueError):
    """A problem the user can fix in the config file or flags."""


@dataclass
class RunConfig:
    dataset: dict
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    variant: str = "default"
    seed: int | None = None
    output_dir: str | None = None
    horizons: list | None = None
    few_shot_ratio: float | None = None

    def problems(self) -> list[str]:
        out = [f"model.{p}" for p in self.model.validate()]
        out += [f"train.{p}" for p in self.train.problems()]
        out += [f"dataset.{p}" for p in _dataset_problems(self.dataset)]
        if self.variant not in VARIANT_IDS:
            out.append(f"run.variant={self.variant!r} not one of {list(VARIANT_IDS)}")
        if self.horizons is not None:
            bad = [h for h in self.horizons if not isinstance(h, int) or not 1 <= h <= self.model.H]
            if bad:
                out.append(f"run.horizons={bad} outside [1, H={self.model.H}]")
        if self.few_shot_ratio is not None and not 0 < self.few_shot_ratio <= 1:
            out.append(f"run.few_shot_ratio={self.few_shot_ratio} outside (0, 1]")
        if self.model.anchor_file and not Path(self.model.anchor_file).is_file():
            out.append(f"model.anchor_file={self.model.anchor_file!r} does not exist")
        return out

    def validate(self) -> None:
        problems = self.problems()
        if problems:
            raise ConfigError("invalid run config: " + "; ".join(problems))

    def snapshot(self) -> str:
        """JSON of the merged config; enough to reproduce the run."""
        payload = {
            "dataset": self.dataset,
            "model": dataclasses.asdict(self.model),
            "train": dataclasses.asdict(self.train),
            "run": {
                "variant": self.variant,
                "seed": self.seed,
                "output_dir": self.output_dir,
                "horizons": self.horizons,
                "few_shot_ratio": self.few_shot_ratio,
            },
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _dataset_problems(descriptor: dict) -> list[str]:
    if not isinstance(descriptor, dict) or not descriptor:
        return ["section missing or empty (need path= or kind=\"synthetic\")"]
    problems = []
    if "path" in descriptor:
        extra = set(descriptor) - {"path", "name"}
        if extra:
            problems.append(f"unknown keys with path=: {sorted(extra)}")
    elif descriptor.get("kind") == "synthetic":
        extra = set(descriptor) - _SYNTHETIC_KEYS
        if extra:
            problems.append(f"unknown synthetic keys: {sorted(extra)}")
        if "T" not in descriptor:
            problems.append("synthetic dataset needs T")
    else:
        problems.append("need either path= or kind=\"synthetic\"")
    return problems


def resolve_dataset(descriptor: dict) -> RawDataset:
    """Materialize the [dataset] table: a CSV file or the synthetic generator."""
    problems = _dataset_problems(descriptor)
    if problems:
        raise ConfigError("invalid dataset descriptor: " + "; ".join(problems))
    if "path" in descriptor:
        return load_csv(descriptor["path"], name=descriptor.get("name"))
    kwargs = {k: v for k, v in descriptor.items() if k not in ("kind",)}
    return synthetic_dataset(**kwargs)


def _coerce_section(table: dict, cls, section: str, problems: list):
    known = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in table.items():
        if key not in known:
            problems.append(f"{section}.{key} is not a recognized field")
            continue
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as e:
        problems.append(f"{section}: {e}")
        return cls()


def load_run_config(path) -> RunConfig:
    """Parse a TOML run file; unknown sections/keys are collected, not ignored."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(p, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"config file {path} is not valid TOML: {e}") from None

    problems = []
    unknown_sections = set(raw) - {"dataset", "model", "train", "run"}
    if unknown_sections:
        problems.append(f"unknown sections: {sorted(unknown_sections)}")

    model = _coerce_section(raw.get("model", {}), ModelConfig, "model", problems)
    train = _coerce_section(raw.get("train", {}), TrainConfig, "train", problems)

    run_table = dict(raw.get("run", {}))
    run_known = {"variant", "seed", "output_dir", "horizons", "few_shot_ratio"}
    for key in set(run_table) - run_known:
        problems.append(f"run.{key} is not a recognized field")
    if problems:
        raise ConfigError(f"invalid run config {path}: " + "; ".join(problems))

    return RunConfig(
        dataset=dict(raw.get("dataset", {})),
        model=model,
        train=train,
        variant=run_table.get("variant", "default"),
        seed=run_table.get("seed"),
        output_dir=run_table.get("output_dir"),
        horizons=run_table.get("horizons"),
        few_shot_ratio=run_table.get("few_shot_ratio"),
    )


def apply_flag_overrides(rc: RunConfig, args) -> RunConfig:
    """Command-line flags win over file values; the merged result is what runs."""
    if getattr(args, "seed", None) is not None:
        rc.seed = args.seed
    if getattr(args, "variant", None):
        rc.variant = args.variant
    if getattr(args, "output_dir", None):
        rc.output_dir = args.output_dir
    if getattr(args, "learning_rate", None) is not None:
        rc.train.learning_rate = args.learning_rate
    if getattr(args, "max_epochs", None) is not None:
        rc.train.max_epochs = args.max_epochs
    if getattr(args, "max_steps", None) is not None:
        rc.train.max_steps = args.max_steps
    if getattr(args, "batch_size", None) is not None:
        rc.train.batch_size = args.batch_size
    if getattr(args, "horizons", None):
        rc.horizons = [int(h) for h in str(args.horizons).split(",") if h]
    return rc


def output_root(rc: RunConfig) -> Path:
    if rc.output_dir:
        return Path(rc.output_dir)
    env = os.environ.get(OUTPUT_ROOT_ENV)
    if env:
        return Path(env)
    return Path("runs")

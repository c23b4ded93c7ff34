"""Run configuration: an INI file with ``[run]``, ``[apriori]``, ``[fpgrowth]``
and ``[fm]`` sections. Defaults reproduce the MovieLens 100K experiment.

All randomness derives from ``run.seed``; each stage gets its own stream via
:func:`derive_seed` (stage ``split`` = 1, stage ``fm`` = 2).
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import io
from dataclasses import dataclass, field, fields
from os import PathLike
from typing import Any, Mapping

import numpy as np

from .fm import TrainConfig

STAGES = {"split": 1, "fm": 2}


@dataclass(frozen=True)
class MiningParams:
    min_support: int
    min_confidence: float = 0.65
    min_lift: float = 1.0

    def __post_init__(self):
        if self.min_support < 1:
            raise ValueError("min_support is an absolute count and must be >= 1")
        if not 0.0 <= self.min_confidence <= 1.0:
            raise ValueError("min_confidence must lie in [0, 1]")
        if self.min_lift < 0:
            raise ValueError("min_lift must be non-negative")


@dataclass(frozen=True)
class FmParams:
    k: int = 8
    epochs: int = 100
    learning_rate: float = 0.01
    l2_reg: float = 0.01
    init_stddev: float = 0.1


@dataclass(frozen=True)
class RunConfig:
    data_path: str = "data/ml-100k/u.data"
    output_dir: str = "out"
    seed: int = 17
    favor_threshold: int = 3
    eval_users: int = 50
    test_frac: float = 0.7
    ndcg_k: int = 10
    clamp_predictions: bool = False
    neighbors: int = 0
    similarity: str = "pearson"
    apriori: MiningParams = field(default_factory=lambda: MiningParams(250))
    fpgrowth: MiningParams = field(default_factory=lambda: MiningParams(60))
    fm: FmParams = field(default_factory=FmParams)

    def __post_init__(self):
        if not 1 <= self.favor_threshold <= 5:
            raise ValueError("favor_threshold must be a rating in [1, 5]")
        if self.eval_users < 0 or self.neighbors < 0 or self.seed < 0:
            raise ValueError("eval_users, neighbors and seed must be non-negative")
        if not 0.0 <= self.test_frac <= 1.0:
            raise ValueError("test_frac must lie in [0, 1]")
        if self.ndcg_k < 1:
            raise ValueError("ndcg_k must be >= 1")
        if self.similarity not in ("pearson", "cosine"):
            raise ValueError("similarity must be pearson or cosine")

    def train_config(self) -> TrainConfig:
        return TrainConfig(seed=derive_seed(self.seed, "fm"), **dataclasses.asdict(self.fm))

    def digest(self) -> str:
        return hashlib.sha256(dump_config(self).encode()).hexdigest()


SECTIONS = {"apriori": MiningParams, "fpgrowth": MiningParams, "fm": FmParams}


def derive_seed(seed: int, stage: str) -> int:
    ss = np.random.SeedSequence([seed, STAGES[stage]])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def _coerce(kind, raw: str) -> Any:
    if kind in (bool, "bool"):
        lowered = raw.strip().lower()
        if lowered not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"not a boolean: {raw!r}")
        return lowered in ("true", "1", "yes")
    if kind in (int, "int"):
        return int(raw)
    if kind in (float, "float"):
        return float(raw)
    return raw.strip()


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


def run_fields() -> list[dataclasses.Field]:
    return [f for f in fields(RunConfig) if f.name not in SECTIONS]


def dump_config(cfg: RunConfig) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    parser["run"] = {f.name: _format(getattr(cfg, f.name)) for f in run_fields()}
    for name in SECTIONS:
        section = getattr(cfg, name)
        parser[name] = {f.name: _format(getattr(section, f.name)) for f in fields(section)}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.read_string(text)
    unknown = set(parser.sections()) - {"run", *SECTIONS}
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")
    flat: dict[str, str] = {}
    for section in parser.sections():
        for key, value in parser[section].items():
            flat[key if section == "run" else f"{section}.{key}"] = value
    return apply_overrides(RunConfig(), flat)


def load_config(path: str | PathLike) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def apply_overrides(cfg: RunConfig, overrides: Mapping[str, Any]) -> RunConfig:
    """Replace fields named ``key`` (run section) or ``section.key``.

    String values are coerced to the field's type.
    """
    top: dict[str, Any] = {}
    nested: dict[str, dict[str, Any]] = {}
    run_types = {f.name: f.type for f in run_fields()}
    for key, value in overrides.items():
        if value is None:
            continue
        section, _, name = key.rpartition(".")
        if section:
            if section not in SECTIONS:
                raise ValueError(f"unknown config section {section!r}")
            types = {f.name: f.type for f in fields(SECTIONS[section])}
            if name not in types:
                raise ValueError(f"unknown key {key!r}")
            nested.setdefault(section, {})[name] = _coerce(types[name], value) if isinstance(value, str) else value
        else:
            if name not in run_types:
                raise ValueError(f"unknown key {key!r}")
            top[name] = _coerce(run_types[name], value) if isinstance(value, str) else value
    for section, values in nested.items():
        top[section] = dataclasses.replace(getattr(cfg, section), **values)
    return dataclasses.replace(cfg, **top)

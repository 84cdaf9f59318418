"""Run configuration: strict JSON round-trip and CLI override plumbing.

A RunConfig nests the scenario and optimizer sections plus run-level fields.
Parsing is strict — unknown keys raise — so a typo'd config never silently
runs with defaults. Every training/eval run persists its resolved config
next to its outputs; re-running from that file reproduces the run exactly.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field

from .cpo import TrainConfig
from .envs import ScenarioConfig
from .errors import ConfigError


@dataclass
class RunConfig:
    scenario: ScenarioConfig = field(default_factory=lambda: ScenarioConfig.defaults("hill"))
    train: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0
    out_dir: str = ""
    tag: str = "run"
    episodes: int = 20
    eval_seeds: tuple[int, ...] = tuple(range(1, 11))
    no_qe: bool = False
    no_act: bool = False

    def __post_init__(self):
        if self.episodes < 1:
            raise ConfigError("episodes must be >= 1")
        if not self.eval_seeds:
            raise ConfigError("eval_seeds must be non-empty")

    def resolved_train(self) -> TrainConfig:
        """TrainConfig with the no_qe / no_act switches applied."""
        tcfg = self.train
        if self.no_qe:
            tcfg = dataclasses.replace(tcfg, qe_enabled=False, advantage_mode="gae")
        if self.no_act:
            tcfg = dataclasses.replace(tcfg, act_enabled=False)
        return tcfg

    def resolved_out_dir(self) -> str:
        root = os.environ.get("QNAV_OUT_DIR", ".")
        out = self.out_dir or "qnav_out"
        return out if os.path.isabs(out) else os.path.join(root, out)


def _coerce(value, template):
    """JSON value -> field value, matching the default's container type."""
    if isinstance(template, tuple) and isinstance(value, list):
        return tuple(value)
    return value


def _dataclass_from_dict(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    template = cls() if cls is not ScenarioConfig else ScenarioConfig()
    kwargs = {}
    for k, v in data.items():
        kwargs[k] = _coerce(v, getattr(template, k))
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def run_config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("run config: expected a JSON object at top level")
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"run config: unknown keys {unknown}")
    kwargs: dict = {}
    if "scenario" in data:
        kwargs["scenario"] = _dataclass_from_dict(ScenarioConfig, data["scenario"], "scenario")
    if "train" in data:
        kwargs["train"] = _dataclass_from_dict(TrainConfig, data["train"], "train")
    for k in ("seed", "out_dir", "tag", "episodes", "no_qe", "no_act"):
        if k in data:
            kwargs[k] = data[k]
    if "eval_seeds" in data:
        kwargs["eval_seeds"] = tuple(data["eval_seeds"])
    return RunConfig(**kwargs)


def run_config_to_dict(cfg: RunConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["eval_seeds"] = list(cfg.eval_seeds)
    for section in ("scenario", "train"):
        for k, v in d[section].items():
            if isinstance(v, tuple):
                d[section][k] = list(v)
    return d


def load_run_config(path: str) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    return run_config_from_dict(data)


def save_run_config(path: str, cfg: RunConfig) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(run_config_to_dict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# dotted-path overrides (CLI flags win over file values)


def _parse_scalar(text: str, template):
    """Parse an override string against the current field value's type."""
    if isinstance(template, bool):
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"cannot parse {text!r} as a boolean")
    if isinstance(template, int) and not isinstance(template, bool):
        return int(text)
    if isinstance(template, float):
        return float(text)
    if isinstance(template, tuple):
        parts = [p for p in text.replace(",", " ").split() if p]
        inner = template[0] if template else 0.0
        return tuple(type(inner)(p) for p in parts)
    return text


def apply_overrides(cfg: RunConfig, overrides: dict[str, object]) -> tuple[RunConfig, list[str]]:
    """Apply {dotted.key: value} overrides; returns (new config, log lines).

    Keys look like 'seed', 'scenario.dt', or 'train.qe_coef'. String values
    are parsed against the existing field's type; non-strings pass through.
    """
    log: list[str] = []
    # collect per-section kwargs and replace once, so multi-key overrides are
    # validated on the final state rather than key-by-key
    scenario_kw: dict = {}
    train_kw: dict = {}
    top: dict = {}
    for key, value in overrides.items():
        if "." in key:
            section, name = key.split(".", 1)
            if section == "scenario":
                holder, kw = cfg.scenario, scenario_kw
            elif section == "train":
                holder, kw = cfg.train, train_kw
            else:
                raise ConfigError(f"unknown config section {section!r} in override {key!r}")
            if not hasattr(holder, name):
                raise ConfigError(f"unknown config key {key!r}")
            current = getattr(holder, name)
            new = _parse_scalar(value, current) if isinstance(value, str) else value
            kw[name] = new
            log.append(f"override {key}: {current!r} -> {new!r}")
        else:
            if not hasattr(cfg, key):
                raise ConfigError(f"unknown config key {key!r}")
            current = getattr(cfg, key)
            new = _parse_scalar(value, current) if isinstance(value, str) else value
            if key == "eval_seeds" and isinstance(new, list):
                new = tuple(new)
            top[key] = new
            log.append(f"override {key}: {current!r} -> {new!r}")
    scenario = dataclasses.replace(cfg.scenario, **scenario_kw) if scenario_kw else cfg.scenario
    train = dataclasses.replace(cfg.train, **train_kw) if train_kw else cfg.train
    out = dataclasses.replace(cfg, scenario=scenario, train=train, **top)
    return out, log


def parse_seed_range(text: str) -> tuple[int, ...]:
    """'1..10' -> (1,...,10); '3' -> (3,); '1,4,9' -> (1,4,9)."""
    text = text.strip()
    if ".." in text:
        lo_s, hi_s = text.split("..", 1)
        lo, hi = int(lo_s), int(hi_s)
        if hi < lo:
            raise ConfigError(f"empty seed range {text!r}")
        return tuple(range(lo, hi + 1))
    if "," in text:
        return tuple(int(p) for p in text.split(",") if p.strip())
    return (int(text),)

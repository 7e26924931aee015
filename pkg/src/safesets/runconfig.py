"""Run configuration: JSON schema, strict validation, and environment
overrides.

A config names the problem (simulator), the candidate grid, the safety
thresholds, the estimation method, and run plumbing (budget, seed, output
cadence). Unknown keys anywhere are rejected before any episode runs; the
only environment overrides honored are the seed and the thread count.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass
from pathlib import Path

from .core import ParamGrid, SafetyConfig, build_grid
from .driver import MethodSpec
from .sim import DaaConfig, PendulumConfig, StubConfig, simulator_ids

__all__ = [
    "ConfigError",
    "RunConfig",
    "parse_run_config",
    "load_run_config",
    "manifest_config",
]

ENV_SEED = "SAFESETS_SEED"
ENV_THREADS = "SAFESETS_THREADS"

_TOP_KEYS = {
    "problem",
    "grid",
    "gamma",
    "delta",
    "method",
    "budget",
    "seed",
    "checkpoint_every",
    "n_per_point",
    "threads",
    "simulator",
}

_SIM_CONFIGS = {"pendulum": PendulumConfig, "daa": DaaConfig, "stub": StubConfig}


class ConfigError(ValueError):
    """Invalid run configuration (maps to CLI exit code 2)."""


@dataclass(frozen=True)
class RunConfig:
    problem: str
    grid: ParamGrid
    safety: SafetyConfig
    method: MethodSpec | None
    budget: int | None
    seed: int
    checkpoint_every: int
    n_per_point: int | None
    threads: int
    sim_cfg: object
    raw: dict

    def require_method(self) -> MethodSpec:
        if self.method is None:
            raise ConfigError("config has no 'method' entry (required for estimation)")
        return self.method

    def require_budget(self) -> int:
        if self.budget is None:
            raise ConfigError("config has no 'budget' entry (required for estimation)")
        return self.budget


def _parse_grid(entry) -> ParamGrid:
    if not isinstance(entry, list) or not entry:
        raise ConfigError("'grid' must be a non-empty list of dimension entries")
    dims = []
    for i, d in enumerate(entry):
        if isinstance(d, dict):
            extra = set(d) - {"name", "lo", "hi", "count"}
            if extra:
                raise ConfigError(f"grid dim {i}: unknown keys {sorted(extra)}")
            try:
                dims.append((str(d["name"]), float(d["lo"]), float(d["hi"]), int(d["count"])))
            except KeyError as exc:
                raise ConfigError(f"grid dim {i}: missing key {exc}") from None
        elif isinstance(d, (list, tuple)) and len(d) == 4:
            dims.append((str(d[0]), float(d[1]), float(d[2]), int(d[3])))
        else:
            raise ConfigError(
                f"grid dim {i}: expected {{name, lo, hi, count}} or [name, lo, hi, count]"
            )
    try:
        return build_grid(dims)
    except ValueError as exc:
        raise ConfigError(f"invalid grid: {exc}") from None


def _parse_method(entry) -> MethodSpec:
    if not isinstance(entry, dict):
        raise ConfigError("'method' must be an object")
    fields = {f.name for f in dataclasses.fields(MethodSpec)}
    extra = set(entry) - fields
    if extra:
        raise ConfigError(f"method: unknown keys {sorted(extra)}; known: {sorted(fields)}")
    if "kind" not in entry:
        raise ConfigError("method: missing 'kind'")
    try:
        return MethodSpec(**entry)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid method: {exc}") from None


def _parse_sim_cfg(problem: str, entry) -> object:
    cfg_cls = _SIM_CONFIGS[problem]
    if entry is None:
        return cfg_cls()
    if not isinstance(entry, dict):
        raise ConfigError("'simulator' must be an object of config overrides")
    fields = {f.name: f for f in dataclasses.fields(cfg_cls)}
    extra = set(entry) - set(fields)
    if extra:
        raise ConfigError(
            f"simulator: unknown keys {sorted(extra)} for problem {problem!r}; "
            f"known: {sorted(fields)}"
        )
    kwargs = {}
    for key, value in entry.items():
        if isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cfg_cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid simulator config: {exc}") from None


def parse_run_config(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    extra = set(data) - _TOP_KEYS
    if extra:
        raise ConfigError(f"unknown config keys {sorted(extra)}; known: {sorted(_TOP_KEYS)}")
    for key in ("problem", "grid", "gamma", "delta"):
        if key not in data:
            raise ConfigError(f"config missing required key {key!r}")
    problem = data["problem"]
    if problem not in simulator_ids():
        raise ConfigError(f"unknown problem {problem!r}; known: {sorted(simulator_ids())}")
    grid = _parse_grid(data["grid"])
    try:
        safety = SafetyConfig(gamma=float(data["gamma"]), delta=float(data["delta"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    method = _parse_method(data["method"]) if "method" in data else None
    budget = int(data["budget"]) if "budget" in data else None
    if budget is not None and budget < 1:
        raise ConfigError("budget must be >= 1")
    seed = int(data.get("seed", 0))
    if ENV_SEED in os.environ:
        seed = int(os.environ[ENV_SEED])
    threads = int(data.get("threads", 1))
    if ENV_THREADS in os.environ:
        threads = int(os.environ[ENV_THREADS])
    if threads < 1:
        raise ConfigError("threads must be >= 1")
    checkpoint_every = int(data.get("checkpoint_every", 100))
    if checkpoint_every < 1:
        raise ConfigError("checkpoint_every must be >= 1")
    n_per_point = int(data["n_per_point"]) if "n_per_point" in data else None
    if n_per_point is not None and n_per_point < 1:
        raise ConfigError("n_per_point must be >= 1")
    sim_cfg = _parse_sim_cfg(problem, data.get("simulator"))
    return RunConfig(
        problem=problem,
        grid=grid,
        safety=safety,
        method=method,
        budget=budget,
        seed=seed,
        checkpoint_every=checkpoint_every,
        n_per_point=n_per_point,
        threads=threads,
        sim_cfg=sim_cfg,
        raw=data,
    )


def load_run_config(path: str | Path) -> RunConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    return parse_run_config(data)


def manifest_config(cfg: RunConfig) -> dict:
    """Canonical configuration echoed into run manifests: the raw input with
    resolved seed/threads and defaults made explicit."""
    out = dict(cfg.raw)
    out["seed"] = cfg.seed
    out["threads"] = cfg.threads
    out["checkpoint_every"] = cfg.checkpoint_every
    if cfg.method is not None:
        out["method"] = cfg.method.to_dict()
    out["simulator"] = {
        f.name: (list(v) if isinstance(v := getattr(cfg.sim_cfg, f.name), tuple) else v)
        for f in dataclasses.fields(cfg.sim_cfg)
    }
    return out

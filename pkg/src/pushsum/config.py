"""Scenario files: a small YAML schema that doubles as test fixtures.

The schema is documented in docs/scenario-format.md; parsing, override
application and serialization all live here so a config survives a
parse -> serialize -> parse round trip unchanged.
"""

from __future__ import annotations

from collections.abc import Iterable

import yaml

from .graphs import DirectedGraph
from .harness import ConfigError, ScenarioConfig

_SCHEDULE_KEYS = (
    "regime",
    "alpha",
    "K",
    "T",
    "block_lengths",
    "repeat_blocks",
    "wake_probability",
    "failure_probability",
    "seed",
    "wake_mode",
    "trace_mode",
)
_TOP_KEYS = (
    "protocol",
    "graph",
    "x0",
    "schedule",
    "iterations",
    "tolerances",
    "audit_level",
    "stop_when_converged",
    "convergence_window",
)


def scenario_from_dict(data: dict) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigError("scenario file must contain a mapping at the top level")
    unknown = set(data) - set(_TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown scenario fields: {sorted(unknown)}")
    try:
        protocol = data["protocol"]
        graph_spec = data["graph"]
        x0 = data["x0"]
    except KeyError as exc:
        raise ConfigError(f"missing required field {exc}") from exc
    if not isinstance(graph_spec, dict) or "nodes" not in graph_spec or "edges" not in graph_spec:
        raise ConfigError("graph must be a mapping with 'nodes' and 'edges'")
    try:
        policy = "forbidden" if protocol == "robust" else "required"
        graph = DirectedGraph(
            int(graph_spec["nodes"]),
            tuple((int(i), int(j)) for i, j in graph_spec["edges"]),
            policy,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"graph: {exc}") from exc
    schedule = dict(data.get("schedule") or {})
    unknown = set(schedule) - set(_SCHEDULE_KEYS)
    if unknown:
        raise ConfigError(f"unknown schedule fields: {sorted(unknown)}")
    tolerances = dict(data.get("tolerances") or {})
    unknown = set(tolerances) - {"convergence", "conservation"}
    if unknown:
        raise ConfigError(f"unknown tolerance fields: {sorted(unknown)}")
    block_lengths = schedule.get("block_lengths")
    try:
        cfg = ScenarioConfig(
            protocol=str(protocol),
            graph=graph,
            x0=tuple(float(v) for v in x0),
            regime=schedule.get("regime"),
            alpha=None if schedule.get("alpha") is None else float(schedule["alpha"]),
            K=int(schedule.get("K", 1)),
            T=int(schedule.get("T", 0)),
            block_lengths=None if block_lengths is None else tuple(int(b) for b in block_lengths),
            repeat_blocks=bool(schedule.get("repeat_blocks", False)),
            wake_probability=float(schedule.get("wake_probability", 1.0)),
            failure_probability=float(schedule.get("failure_probability", 0.0)),
            seed=int(schedule.get("seed", 0)),
            wake_mode=str(schedule.get("wake_mode", "independent")),
            trace_mode=str(schedule.get("trace_mode", "covering")),
            iterations=int(data.get("iterations", 1)),
            convergence_tol=float(tolerances.get("convergence", 1e-8)),
            conservation_tol=float(tolerances.get("conservation", 1e-9)),
            audit_level=str(data.get("audit_level", "boundaries")),
            stop_when_converged=bool(data.get("stop_when_converged", True)),
            convergence_window=int(data.get("convergence_window", 3)),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    cfg.validate()
    return cfg


def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    schedule: dict = {
        "K": cfg.K,
        "T": cfg.T,
        "wake_probability": cfg.wake_probability,
        "failure_probability": cfg.failure_probability,
        "seed": cfg.seed,
        "wake_mode": cfg.wake_mode,
        "trace_mode": cfg.trace_mode,
    }
    if cfg.regime is not None:
        schedule["regime"] = cfg.regime
    if cfg.alpha is not None:
        schedule["alpha"] = cfg.alpha
    if cfg.block_lengths is not None:
        schedule["block_lengths"] = list(cfg.block_lengths)
    if cfg.repeat_blocks:
        schedule["repeat_blocks"] = True
    return {
        "protocol": cfg.protocol,
        "graph": {
            "nodes": cfg.graph.n,
            "edges": [list(e) for e in cfg.graph.edges],
        },
        "x0": list(cfg.x0),
        "schedule": schedule,
        "iterations": cfg.iterations,
        "tolerances": {
            "convergence": cfg.convergence_tol,
            "conservation": cfg.conservation_tol,
        },
        "audit_level": cfg.audit_level,
        "stop_when_converged": cfg.stop_when_converged,
        "convergence_window": cfg.convergence_window,
    }


def apply_overrides(data: dict, overrides: Iterable[str]) -> dict:
    """Apply ``section.key=value`` overrides onto a parsed scenario mapping.

    Values are parsed as YAML scalars, so ``schedule.seed=3`` yields an
    int and ``schedule.block_lengths=[1,2,3]`` a list.
    """
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        path, raw = item.split("=", 1)
        keys = path.strip().split(".")
        if not all(keys):
            raise ConfigError(f"override {item!r} has an empty key segment")
        target = data
        for key in keys[:-1]:
            node = target.setdefault(key, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {item!r} descends into a non-mapping field")
            target = node
        target[keys[-1]] = yaml.safe_load(raw)
    return data


def load_scenario(path, overrides: Iterable[str] = ()) -> ScenarioConfig:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"scenario file is not valid YAML: {exc}") from exc
    if data is None:
        raise ConfigError("scenario file is empty")
    apply_overrides(data, overrides)
    return scenario_from_dict(data)


def save_scenario(cfg: ScenarioConfig, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(scenario_to_dict(cfg), fh, sort_keys=False)

"""Scenario configuration: defaults, file loading, overrides, validation.

Config files are JSON with nested keys. Every field has a default except
none — a minimal ``{}`` runs a small static network. Overrides use dotted
paths (``churn.leave_prob_per_interval=0.2``) and are applied after the
file, before validation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Optional, Union


class ConfigError(Exception):
    def __init__(self, field_name: str, message: str):
        super().__init__("%s: %s" % (field_name, message))
        self.field_name = field_name


@dataclass
class ChurnConfig:
    leave_prob_per_interval: float = 0.0
    join_rate: int = 0            # new peers per interval
    interval_ticks: int = 50


@dataclass
class AdversaryConfig:
    # Either an explicit id list or a fraction of the initial peers,
    # sampled deterministically from the scenario seed.
    colluding: Union[list[int], float] = field(default_factory=list)
    global_observer: bool = False


@dataclass
class WorkloadConfig:
    n_cycles: int = 5
    selection: str = "uniform"    # "uniform" or "fixed"
    requester: Optional[int] = None
    provider: Optional[int] = None
    message_bytes: int = 64
    start_tick: int = 5


@dataclass
class ScenarioConfig:
    n_peers: int = 10
    n_supernodes: int = 2
    l_req: int = 3
    l_resp: int = 3
    heartbeat_period: int = 5
    heartbeat_timeout: int = 15
    sync_interval: int = 10
    cycle_timeout: int = 0        # 0 -> derived: 4 * (l_req + l_resp + 2)
    rotate_every: int = 1
    retries: int = 3
    pad_size: int = 2048
    response_payload: str = "end_to_end"   # or "per_hop"
    seed: int = 0
    churn: ChurnConfig = field(default_factory=ChurnConfig)
    adversary: AdversaryConfig = field(default_factory=AdversaryConfig)
    workload: WorkloadConfig = field(default_factory=WorkloadConfig)

    def effective_cycle_timeout(self) -> int:
        if self.cycle_timeout > 0:
            return self.cycle_timeout
        return 4 * (self.l_req + self.l_resp + 2)


_SECTIONS = {"churn": ChurnConfig, "adversary": AdversaryConfig,
             "workload": WorkloadConfig}


def _coerce(raw: str) -> Any:
    try:
        return json.loads(raw)
    except ValueError:
        return raw


def _build(data: dict, path: str = "") -> ScenarioConfig:
    cfg = ScenarioConfig()
    for key, value in data.items():
        where = "%s%s" % (path, key)
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(where, "expected a nested object")
            section = getattr(cfg, key)
            for sub, subval in value.items():
                if not hasattr(section, sub):
                    raise ConfigError("%s.%s" % (where, sub), "unknown field")
                setattr(section, sub, subval)
        elif hasattr(cfg, key):
            setattr(cfg, key, value)
        else:
            raise ConfigError(where, "unknown field")
    return cfg


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    for item in overrides:
        if "=" not in item:
            raise ConfigError(item, "overrides take the form key=value")
        dotted, raw = item.split("=", 1)
        parts = dotted.strip().split(".")
        node = data
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(dotted, "cannot override inside a scalar")
        node[parts[-1]] = _coerce(raw)
    return data


def validate(cfg: ScenarioConfig) -> ScenarioConfig:
    def need(cond: bool, name: str, msg: str):
        if not cond:
            raise ConfigError(name, msg)

    need(cfg.n_peers >= 2, "n_peers", "need at least 2 peers")
    need(cfg.n_supernodes >= 1, "n_supernodes", "need at least 1 supernode")
    need(cfg.l_req >= 1 and cfg.l_resp >= 1, "l_req",
         "paths need at least one hop each")
    need(cfg.n_peers >= cfg.l_req + cfg.l_resp + 2, "n_peers",
         "need at least l_req + l_resp + 2 = %d peers"
         % (cfg.l_req + cfg.l_resp + 2))
    need(cfg.heartbeat_period >= 1, "heartbeat_period", "must be >= 1 tick")
    need(cfg.heartbeat_timeout >= cfg.heartbeat_period, "heartbeat_timeout",
         "must be >= heartbeat_period")
    need(cfg.sync_interval >= 1, "sync_interval", "must be >= 1 tick")
    need(cfg.rotate_every >= 1, "rotate_every", "must be >= 1 cycle")
    need(cfg.retries >= 0, "retries", "must be >= 0")
    need(cfg.pad_size >= 256, "pad_size", "must be >= 256 bytes")
    need(cfg.cycle_timeout >= 0, "cycle_timeout", "must be >= 0 (0 = derived)")
    need(cfg.response_payload in ("end_to_end", "per_hop"), "response_payload",
         "must be end_to_end or per_hop")
    need(cfg.seed >= 0, "seed", "must be a non-negative integer")

    ch = cfg.churn
    need(0.0 <= ch.leave_prob_per_interval <= 1.0,
         "churn.leave_prob_per_interval", "must be within [0, 1]")
    need(ch.join_rate >= 0, "churn.join_rate", "must be >= 0")
    need(ch.interval_ticks >= 1, "churn.interval_ticks", "must be >= 1 tick")

    adv = cfg.adversary
    if isinstance(adv.colluding, (int, float)) and not isinstance(adv.colluding, bool):
        need(0.0 <= float(adv.colluding) <= 1.0, "adversary.colluding",
             "fraction must be within [0, 1]")
    elif isinstance(adv.colluding, list):
        need(all(isinstance(p, int) and p >= 1 for p in adv.colluding),
             "adversary.colluding", "ids must be positive integers")
    else:
        raise ConfigError("adversary.colluding", "expected an id list or a fraction")

    wl = cfg.workload
    need(wl.n_cycles >= 0, "workload.n_cycles", "must be >= 0")
    need(wl.selection in ("uniform", "fixed"), "workload.selection",
         "must be uniform or fixed")
    if wl.selection == "fixed":
        need(wl.requester is not None and wl.provider is not None,
             "workload.requester", "fixed selection needs requester and provider")
        need(wl.requester != wl.provider, "workload.provider",
             "requester and provider must differ")
    need(wl.message_bytes >= 1, "workload.message_bytes", "must be >= 1")
    need(wl.start_tick >= 1, "workload.start_tick", "must be >= 1")
    return cfg


def config_from_dict(data: dict, overrides: Optional[list[str]] = None) -> ScenarioConfig:
    data = json.loads(json.dumps(data))  # deep copy, and reject non-JSON input
    if overrides:
        apply_overrides(data, overrides)
    return validate(_build(data))


def parse_config(path: str, overrides: Optional[list[str]] = None) -> ScenarioConfig:
    """Load a JSON config file, apply dotted overrides, validate."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError("config", "cannot read %s (%s)" % (path, exc)) from None
    except ValueError as exc:
        raise ConfigError("config", "invalid JSON in %s (%s)" % (path, exc)) from None
    if not isinstance(data, dict):
        raise ConfigError("config", "top level must be an object")
    return config_from_dict(data, overrides)

"""Network and benchmark configuration.

Key names follow the DLPS parameter files so settings can be copied across
verbatim. Unspecified keys fall back to the defaults below; unknown keys are
rejected.
"""

from __future__ import annotations

import dataclasses
import json
import re
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending key path."""

    def __init__(self, msg: str, key: str = ""):
        super().__init__(f"{key}: {msg}" if key else msg)
        self.key = key


_POLICY_RE = re.compile(r"^\s*OutOf\(\s*(\d+)\s*,\s*(\d+)\s*\)\s*$")


@dataclass(frozen=True)
class EndorsementPolicy:
    k: int
    n: int

    @classmethod
    def parse(cls, text: str) -> "EndorsementPolicy":
        m = _POLICY_RE.match(str(text))
        if not m:
            raise ConfigError(f"cannot parse endorsement policy {text!r}", "endorsement")
        k, n = int(m.group(1)), int(m.group(2))
        if not 1 <= k <= n:
            raise ConfigError(f"need 1 <= k <= n, got OutOf({k}, {n})", "endorsement")
        return cls(k, n)

    def __str__(self) -> str:
        return f"OutOf({self.k}, {self.n})"


def _as_bool(value, key):
    if isinstance(value, bool):
        return value
    if isinstance(value, str) and value.strip().lower() in ("true", "false"):
        return value.strip().lower() == "true"
    raise ConfigError(f"expected boolean, got {value!r}", key)


@dataclass
class NetworkConfig:
    node_type: str = "m5.large"
    fabric_version: str = "2.0.0"
    fabric_ca_version: str = "1.4.4"
    thirdparty_version: str = "0.4.18"
    channel_count: int = 1
    database: str = "CouchDB"
    external_database: bool = False
    internal_orderer: bool = False
    org_count: int = 4
    peer_count: int = 2
    orderer_type: str = "RAFT"
    orderer_count: int = 4
    batch_timeout: float = 0.5
    max_message_count: int = 1000
    absolute_max_bytes: float = 10
    preferred_max_bytes: float = 4096
    tls_enabled: bool = True
    endorsement: str = "OutOf(2, 4)"
    private_fors: int = 2
    log_level: str = "Warning"
    client_type: str = "m5.large"
    client_count: int = 4
    # model extensions
    placement: str = "single-dc"
    endorser_mode: str = "fixed"
    max_peer_count: int = 0         # private payload push fan-out, 0 = all

    @property
    def policy(self) -> EndorsementPolicy:
        return EndorsementPolicy.parse(self.endorsement)

    @property
    def quorum(self) -> int:
        return self.orderer_count // 2 + 1

    @property
    def absolute_max_bytes_b(self) -> int:
        return int(self.absolute_max_bytes * 1024 * 1024)

    @property
    def preferred_max_bytes_b(self) -> int:
        # The DLPS value 4096 is read as KB; see README.
        return int(self.preferred_max_bytes * 1024)

    def validate(self) -> "NetworkConfig":
        pol = self.policy
        for key in ("org_count", "peer_count", "client_count", "channel_count", "max_message_count"):
            if getattr(self, key) < 1:
                raise ConfigError("must be >= 1", key)
        if self.orderer_count < 1:
            raise ConfigError("must be >= 1", "orderer_count")
        if pol.n > self.org_count:
            raise ConfigError(f"policy needs {pol.n} orgs but org_count={self.org_count}", "endorsement")
        if self.private_fors < 1:
            raise ConfigError("must be >= 1", "private_fors")
        if self.database not in ("LevelDB", "CouchDB"):
            raise ConfigError(f"unknown database {self.database!r}", "database")
        if self.external_database and self.database == "LevelDB":
            raise ConfigError("LevelDB cannot run on a separate node", "external_database")
        if self.orderer_type not in ("RAFT", "Solo"):
            raise ConfigError(f"unknown orderer_type {self.orderer_type!r}", "orderer_type")
        if self.orderer_type == "Solo" and self.orderer_count != 1:
            raise ConfigError("Solo ordering uses exactly one orderer", "orderer_count")
        if self.batch_timeout <= 0:
            raise ConfigError("must be > 0", "batch_timeout")
        if self.absolute_max_bytes <= 0 or self.preferred_max_bytes <= 0:
            raise ConfigError("byte limits must be > 0", "absolute_max_bytes")
        if self.max_peer_count < 0:
            raise ConfigError("must be >= 0", "max_peer_count")
        if self.endorser_mode not in ("fixed", "failover"):
            raise ConfigError("expected 'fixed' or 'failover'", "endorser_mode")
        return self


@dataclass
class BenchConfig:
    duration: float = 20
    localization_runs: int = 2
    repetition_runs: int = 0
    method: str = "writeData"
    mode: str = "public"
    shape: str = "smooth"
    delay: float = 0
    r2_bound: float = 0.9
    frequency_bound: float = 100
    latency_bound: float = 10000
    delta_send: float = 0.5
    delta_receive: float = 0.5
    success_bound: float = 0.8
    retry_limit: int = 2
    ramp_bound: int = 2
    success_base_rate: float = 0.8
    success_step_rate: float = 0.04
    failure_base_rate: float = 0.8
    failure_step_rate: float = 0.04
    delta_max_time: float = 10
    # model extensions
    payload_bytes: int = 10
    data_origin: str = "client"
    matrix_size: int = 1
    query: str = "simple"
    workers_per_client: int = 1
    max_rate: float = 20000

    def validate(self) -> "BenchConfig":
        if self.duration <= 0:
            raise ConfigError("must be > 0", "duration")
        for key in ("success_bound", "r2_bound"):
            v = getattr(self, key)
            if not 0 < v <= 1:
                raise ConfigError("must be in (0, 1]", key)
        for key in ("success_base_rate", "failure_base_rate"):
            v = getattr(self, key)
            if not 0 < v < 1:
                raise ConfigError("must be in (0, 1)", key)
        for key in ("success_step_rate", "failure_step_rate"):
            if getattr(self, key) <= 0:
                raise ConfigError("must be > 0", key)
        if self.frequency_bound <= 0:
            raise ConfigError("must be > 0", "frequency_bound")
        if self.mode not in ("public", "private"):
            raise ConfigError("expected 'public' or 'private'", "mode")
        if self.shape not in ("smooth", "step"):
            raise ConfigError("expected 'smooth' or 'step'", "shape")
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}", "method")
        if self.data_origin not in ("client", "peer"):
            raise ConfigError("expected 'client' or 'peer'", "data_origin")
        if self.payload_bytes < 0:
            raise ConfigError("must be >= 0", "payload_bytes")
        if self.matrix_size < 1:
            raise ConfigError("must be >= 1", "matrix_size")
        if self.delay < 0:
            raise ConfigError("must be >= 0", "delay")
        if self.workers_per_client < 1:
            raise ConfigError("must be >= 1", "workers_per_client")
        return self


METHODS = ("writeData", "matrixMultiplication", "readData")


def _coerce(cls, data: Mapping[str, Any], prefix: str):
    known = {f.name: f for f in fields(cls)}
    defaults = cls()
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError("unknown key", f"{prefix}.{key}" if prefix else key)
        ref = getattr(defaults, key)
        path = f"{prefix}.{key}" if prefix else key
        if isinstance(ref, bool):
            value = _as_bool(value, path)
        elif isinstance(ref, int):
            if isinstance(value, bool) or not isinstance(value, (int, float)) or value != int(value):
                raise ConfigError(f"expected integer, got {value!r}", path)
            value = int(value)
        elif isinstance(ref, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"expected number, got {value!r}", path)
            value = float(value)
        elif isinstance(ref, str):
            if not isinstance(value, str):
                raise ConfigError(f"expected string, got {value!r}", path)
        kwargs[key] = value
    return cls(**kwargs)


def network_from_dict(data: Mapping[str, Any]) -> NetworkConfig:
    cfg = _coerce(NetworkConfig, data, "")
    if cfg.database == "CouchDB/LevelDB":
        cfg.database = "CouchDB"
    return cfg.validate()


def bench_from_dict(data: Mapping[str, Any]) -> BenchConfig:
    return _coerce(BenchConfig, data, "").validate()


def _load_json(path) -> dict:
    text = Path(path).read_text().strip()
    if not text:
        return {}
    # the DLPS files carry trailing commas
    text = re.sub(r",(\s*[}\]])", r"\1", text)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object")
    return data


def parse_configs(network_path=None, bench_path=None) -> tuple[NetworkConfig, BenchConfig]:
    net = network_from_dict(_load_json(network_path)) if network_path else NetworkConfig().validate()
    bench = bench_from_dict(_load_json(bench_path)) if bench_path else BenchConfig().validate()
    return net, bench


def to_dict(cfg) -> dict:
    return dataclasses.asdict(cfg)


def dump_config(cfg, path) -> None:
    Path(path).write_text(json.dumps(to_dict(cfg), indent=2) + "\n")


def replace(cfg, **changes):
    """``dataclasses.replace`` followed by validation."""
    return dataclasses.replace(cfg, **changes).validate()

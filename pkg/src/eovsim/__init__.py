"""Discrete-event simulator of an execute-order-validate permissioned ledger.

The main entry points are ``run_benchmark`` (one open-loop run), ``ramp``
(search for the maximum sustainable throughput) and ``run_scenario``.
"""

__version__ = "0.1.0"

from .config import BenchConfig, ConfigError, NetworkConfig, parse_configs  # noqa: E402
from .costs import DEFAULT_PROFILE, CostProfile, UnsupportedQuery  # noqa: E402
from .bench import CrashPlan, ramp, ramp_search, run_benchmark  # noqa: E402
from .flow import FabricNetwork, critical_path_legs  # noqa: E402

__all__ = [
    "BenchConfig", "ConfigError", "CostProfile", "CrashPlan", "DEFAULT_PROFILE",
    "FabricNetwork", "NetworkConfig", "UnsupportedQuery", "critical_path_legs",
    "parse_configs", "ramp", "ramp_search", "run_benchmark",
]

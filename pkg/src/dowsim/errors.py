"""Exception vocabulary shared across the simulator."""

from __future__ import annotations


class SimulationError(Exception):
    """Base class for everything dowsim raises on purpose."""


class ConfigError(SimulationError):
    """Bad scenario, pricing, or policy configuration (CLI exit code 2)."""


class MetricsParseError(ConfigError):
    """Malformed or incomplete gateway metrics text."""


class StreamOrderError(SimulationError):
    """An event stream violated its non-decreasing timestamp contract."""

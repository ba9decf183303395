"""Completion-time optimization for federated learning over a fog RAN.

Models one federated-learning round served by distributed access points with
finite-capacity fronthaul links and rate-splitting uplink transmission, and
minimizes the learning completion time by alternating closed-form auxiliary
updates with a structured convex subproblem solved by a log-barrier interior
point method.
"""

__version__ = "0.1.0"

from .scenario import (FLConfig, RunConfig, Scenario, SystemConfig,
                       generate_scenario, parse_config)

__all__ = [
    "FLConfig",
    "RunConfig",
    "Scenario",
    "SystemConfig",
    "generate_scenario",
    "parse_config",
    "__version__",
]
